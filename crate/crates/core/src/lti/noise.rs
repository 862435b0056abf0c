use nalgebra::DMatrix;
use rayon::prelude::*;
use statrs::distribution::{Binomial, ContinuousCDF, DiscreteCDF, Normal};

use super::weighting::m_factor;
use super::LtiError;
use crate::gauss::GaussianStream;

pub const DEFAULT_NOISE_SAMPLES: usize = 200_000;
pub const MIN_NOISE_SAMPLES: usize = 100_000;
const CHUNK: usize = 8192;
/// One-sided level of the upper endpoint of a two-sided 99% interval.
const CI_LEVEL: f64 = 0.995;

/// Conservative `(1−δ)`-quantile of `‖B̄_w w‖_M`, `w ~ N(0, I)`.
///
/// Draws `n_samples` seeded samples and returns the order statistic that
/// upper-bounds the true quantile with confidence 99.5% (the upper end of a
/// distribution-free 99% interval). Exactly 0 when `B̄_w = 0`; `∞` when
/// `δ = 0` and the noise is not degenerate.
pub fn noise_quantile(
    bw_bar: &DMatrix<f64>,
    m: &DMatrix<f64>,
    delta: f64,
    seed: u64,
    n_samples: usize,
) -> Result<f64, LtiError> {
    if !(0.0..=1.0).contains(&delta) {
        return Err(LtiError::InvalidParam(format!("δ must lie in [0, 1], got {delta}")));
    }
    if bw_bar.nrows() != m.nrows() {
        return Err(LtiError::Dimension("B̄_w and M differ in rows".into()));
    }
    if bw_bar.iter().all(|&v| v == 0.0) {
        return Ok(0.0);
    }
    if delta == 0.0 {
        return Ok(f64::INFINITY);
    }
    if delta == 1.0 {
        return Ok(0.0);
    }
    if n_samples < MIN_NOISE_SAMPLES {
        return Err(LtiError::InvalidParam(format!(
            "at least {MIN_NOISE_SAMPLES} noise samples are required, got {n_samples}"
        )));
    }
    let k = match upper_order_index(n_samples, delta) {
        Some(k) => k,
        None => return Ok(f64::INFINITY),
    };
    let g = m_factor(m)?.transpose() * bw_bar;
    let mut norms = sample_norms(&g, seed, n_samples);
    let (_, kth, _) = norms.select_nth_unstable_by(k - 1, f64::total_cmp);
    Ok(*kth)
}

/// Smallest `k` with `P(Binomial(n, 1−δ) ≤ k−1) ≥ 0.995`: then the `k`-th
/// smallest sample exceeds the true quantile with that probability.
fn upper_order_index(n: usize, delta: f64) -> Option<usize> {
    let bin = Binomial::new(1.0 - delta, n as u64).expect("valid binomial parameters");
    if bin.cdf(n as u64 - 1) < CI_LEVEL {
        return None;
    }
    // cdf(k − 1) is nondecreasing in k: binary search on [1, n].
    let (mut lo, mut hi) = (1usize, n);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if bin.cdf(mid as u64 - 1) >= CI_LEVEL {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Some(lo)
}

/// `‖G w_i‖` for `n` standard Gaussian `w_i`; chunk `c` draws from stream
/// `c`, so the result does not depend on the thread count.
fn sample_norms(g: &DMatrix<f64>, seed: u64, n: usize) -> Vec<f64> {
    let dim = g.ncols();
    let mut out = vec![0.0; n];
    out.par_chunks_mut(CHUNK)
        .enumerate()
        .for_each(|(c, slot)| {
            let mut rng = GaussianStream::new(seed, c as u64);
            let mut w = vec![0.0; dim];
            let mut gw = vec![0.0; g.nrows()];
            for v in slot.iter_mut() {
                rng.fill_normal(&mut w);
                for (i, gi) in gw.iter_mut().enumerate() {
                    *gi = (0..dim).map(|j| g[(i, j)] * w[j]).sum();
                }
                *v = gw.iter().map(|x| x * x).sum::<f64>().sqrt();
            }
        });
    out
}

/// Exact `(1−δ)`-quantile of `‖B̄_w w‖_M` when `B̄_w` has a single column:
/// `‖b̄‖_M · Φ⁻¹(1 − δ/2)`.
pub(crate) fn rank_one_quantile(bw_bar: &DMatrix<f64>, m: &DMatrix<f64>, delta: f64) -> Option<f64> {
    if bw_bar.ncols() != 1 {
        return None;
    }
    let b = bw_bar.column(0);
    let scale = (b.transpose() * m * b)[(0, 0)].max(0.0).sqrt();
    if scale == 0.0 {
        return Some(0.0);
    }
    if delta <= 0.0 {
        return Some(f64::INFINITY);
    }
    let z = Normal::standard().inverse_cdf(1.0 - delta / 2.0);
    Some(scale * z)
}

/// Fixed standard-normal samples, for objectives that must be smooth in `M`.
pub(crate) struct CommonSamples {
    w: DMatrix<f64>,
}

impl CommonSamples {
    pub(crate) fn new(dim: usize, n: usize, seed: u64) -> Self {
        let mut rng = GaussianStream::new(seed, u64::MAX);
        let mut w = DMatrix::zeros(dim, n);
        rng.fill_normal(w.as_mut_slice());
        CommonSamples { w }
    }

    /// Empirical `(1−δ)`-quantile of `‖B̄_w w‖_M` over the fixed samples.
    pub(crate) fn quantile(&self, bw_bar: &DMatrix<f64>, m: &DMatrix<f64>, delta: f64) -> f64 {
        let Ok(l) = m_factor(m) else { return f64::INFINITY };
        let proj = l.transpose() * bw_bar * &self.w;
        let mut norms: Vec<f64> = proj.column_iter().map(|c| c.norm()).collect();
        let n = norms.len();
        let k = (((1.0 - delta) * n as f64).ceil() as usize).clamp(1, n);
        *norms.select_nth_unstable_by(k - 1, f64::total_cmp).1
    }
}
