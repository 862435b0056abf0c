use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::LtiError;

/// Uniform rectangular grid. Cells are numbered row-major with dimension 0
/// varying slowest; representative points are cell centres.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    lo: Vec<f64>,
    hi: Vec<f64>,
    cells: Vec<usize>,
}

impl GridSpec {
    /// A dimension may have zero width only with a single cell.
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, cells: Vec<usize>) -> Result<Self, LtiError> {
        if lo.is_empty() || lo.len() != hi.len() || lo.len() != cells.len() {
            return Err(LtiError::Grid("lo, hi and cell counts need one entry per dimension".into()));
        }
        for d in 0..lo.len() {
            if cells[d] == 0 {
                return Err(LtiError::Grid(format!("dimension {d} has no cells")));
            }
            let ok = lo[d].is_finite() && hi[d].is_finite() && (lo[d] < hi[d] || (lo[d] == hi[d] && cells[d] == 1));
            if !ok {
                return Err(LtiError::Grid(format!("dimension {d} has bounds [{}, {}]", lo[d], hi[d])));
            }
        }
        let total = cells.iter().try_fold(1usize, |acc, &c| acc.checked_mul(c));
        match total {
            Some(t) if t < u32::MAX as usize => Ok(GridSpec { lo, hi, cells }),
            _ => Err(LtiError::Grid("too many cells".into())),
        }
    }

    /// Grid of `cells[d]` cells of width `widths[d]` centred on `centre`.
    pub fn centred(centre: &[f64], widths: &[f64], cells: Vec<usize>) -> Result<Self, LtiError> {
        if centre.len() != widths.len() || widths.len() != cells.len() {
            return Err(LtiError::Grid("centre, widths and cells differ in length".into()));
        }
        let half: Vec<f64> = widths.iter().zip(&cells).map(|(w, &c)| w * c as f64 / 2.0).collect();
        let lo = centre.iter().zip(&half).map(|(c, h)| c - h).collect();
        let hi = centre.iter().zip(&half).map(|(c, h)| c + h).collect();
        GridSpec::new(lo, hi, cells)
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn n_cells(&self) -> usize {
        self.cells.iter().product()
    }

    pub fn width(&self, d: usize) -> f64 {
        (self.hi[d] - self.lo[d]) / self.cells[d] as f64
    }

    pub fn widths(&self) -> Vec<f64> {
        (0..self.dim()).map(|d| self.width(d)).collect()
    }

    pub fn half_widths(&self) -> Vec<f64> {
        (0..self.dim()).map(|d| self.width(d) / 2.0).collect()
    }

    pub fn multi_index(&self, mut idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim()];
        for d in (0..self.dim()).rev() {
            out[d] = idx % self.cells[d];
            idx /= self.cells[d];
        }
        out
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        multi.iter().zip(&self.cells).fold(0, |acc, (&k, &c)| acc * c + k)
    }

    pub fn center_1d(&self, d: usize, k: usize) -> f64 {
        self.lo[d] + (k as f64 + 0.5) * self.width(d)
    }

    pub fn center(&self, idx: usize) -> Vec<f64> {
        self.multi_index(idx)
            .iter()
            .enumerate()
            .map(|(d, &k)| self.center_1d(d, k))
            .collect()
    }

    /// Cell index along `d`; the upper face belongs to the last cell.
    pub fn cell_1d(&self, d: usize, x: f64) -> Option<usize> {
        if !(x >= self.lo[d] && x <= self.hi[d]) {
            return None;
        }
        let w = self.width(d);
        if w == 0.0 {
            return Some(0);
        }
        let k = ((x - self.lo[d]) / w).floor() as usize;
        Some(k.min(self.cells[d] - 1))
    }

    /// The map Π: containing cell, `None` off the grid.
    pub fn cell_of(&self, x: &[f64]) -> Option<usize> {
        debug_assert_eq!(x.len(), self.dim());
        let mut idx = 0;
        for d in 0..self.dim() {
            idx = idx * self.cells[d] + self.cell_1d(d, x[d])?;
        }
        Some(idx)
    }

    pub fn snap(&self, x: &[f64]) -> Option<Vec<f64>> {
        self.cell_of(x).map(|i| self.center(i))
    }

    /// The `2^dim` combinations of first and last cell centres: the extreme
    /// points of the set of representatives.
    pub fn extreme_centers(&self) -> Vec<Vec<f64>> {
        let n = self.dim();
        (0..1usize << n)
            .map(|mask| {
                (0..n)
                    .map(|d| {
                        let k = if mask >> d & 1 == 1 { self.cells[d] - 1 } else { 0 };
                        self.center_1d(d, k)
                    })
                    .collect()
            })
            .collect()
    }
}

/// Tensor grid of inputs: `counts[d]` evenly spaced values on `[lo_d, hi_d]`
/// (endpoints included; a single value sits at the midpoint). Row-major with
/// dimension 0 slowest.
pub fn input_grid(lo: &[f64], hi: &[f64], counts: &[usize]) -> Result<Vec<DVector<f64>>, LtiError> {
    if lo.len() != hi.len() || lo.len() != counts.len() || lo.is_empty() {
        return Err(LtiError::InvalidParam("input grid needs one bound pair and count per input".into()));
    }
    if counts.iter().any(|&c| c == 0) || lo.iter().zip(hi).any(|(l, h)| !(l <= h)) {
        return Err(LtiError::InvalidParam("input grid counts must be positive and lo ≤ hi".into()));
    }
    let axes: Vec<Vec<f64>> = (0..lo.len())
        .map(|d| match counts[d] {
            1 => vec![0.5 * (lo[d] + hi[d])],
            c => (0..c)
                .map(|k| {
                    if k == c - 1 {
                        hi[d]
                    } else {
                        lo[d] + (hi[d] - lo[d]) * k as f64 / (c - 1) as f64
                    }
                })
                .collect(),
        })
        .collect();
    let total: usize = counts.iter().product();
    Ok((0..total)
        .map(|mut idx| {
            let mut u = vec![0.0; lo.len()];
            for d in (0..lo.len()).rev() {
                u[d] = axes[d][idx % counts[d]];
                idx /= counts[d];
            }
            DVector::from_vec(u)
        })
        .collect())
}
