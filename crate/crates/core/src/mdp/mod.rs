//! Finite gMDPs with outputs, box labelings, and the label cache that lets
//! the DP operators work on the product with a DFA without building it.

mod cache;
mod labeling;

pub use cache::{build_label_cache, product_initial, LabelCache};
pub use labeling::{eps_letter_set, letter_of, BoxRegion, Labeling};

/// Tolerance on row sums of a transition kernel.
pub const ROW_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MdpError {
    #[error("output dimension {got} does not match labeling dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("kernel row for state {state}, action {action}: {reason}")]
    InvalidRow {
        state: usize,
        action: usize,
        reason: String,
    },
    #[error("invalid model: {0}")]
    Invalid(String),
    #[error("invalid box for `{ap}`: {reason}")]
    InvalidBox { ap: String, reason: String },
    #[error("labeling propositions {labeling:?} do not match the declared list {declared:?}")]
    ApMismatch {
        labeling: Vec<String>,
        declared: Vec<String>,
    },
}

/// One sparse kernel row: successor states in ascending order with their
/// probabilities, plus the probability of leaving to the sink.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseRow {
    pub cols: Vec<u32>,
    pub probs: Vec<f64>,
    pub sink: f64,
}

/// Finite-state abstract model. States `0..n` carry outputs; index `n` is the
/// absorbing sink that collects mass leaving the modelled region.
///
/// Kernel rows are stored in CSR form, row `i * m + a` for state `i` and
/// action `a`.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteGmdp {
    n_states: usize,
    n_actions: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    probs: Vec<f64>,
    sink: Vec<f64>,
    output_dim: usize,
    outputs: Vec<f64>,
    initial: usize,
}

impl FiniteGmdp {
    /// Builds a model from sparse rows (indexed `i * m + a`), row-major outputs
    /// (`n * p` values) and an initial state.
    pub fn from_rows(
        n_states: usize,
        n_actions: usize,
        rows: Vec<SparseRow>,
        output_dim: usize,
        outputs: Vec<f64>,
        initial: usize,
    ) -> Result<Self, MdpError> {
        if n_states == 0 || n_actions == 0 {
            return Err(MdpError::Invalid("need at least one state and one action".into()));
        }
        if rows.len() != n_states * n_actions {
            return Err(MdpError::Invalid(format!(
                "expected {} kernel rows, got {}",
                n_states * n_actions,
                rows.len()
            )));
        }
        if outputs.len() != n_states * output_dim {
            return Err(MdpError::Invalid(format!(
                "expected {} output values, got {}",
                n_states * output_dim,
                outputs.len()
            )));
        }
        if initial >= n_states {
            return Err(MdpError::Invalid(format!("initial state {initial} out of range")));
        }
        let nnz = rows.iter().map(|r| r.cols.len()).sum();
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut cols = Vec::with_capacity(nnz);
        let mut probs = Vec::with_capacity(nnz);
        let mut sink = Vec::with_capacity(rows.len());
        row_ptr.push(0);
        for (r, row) in rows.into_iter().enumerate() {
            let bad = |reason: String| MdpError::InvalidRow {
                state: r / n_actions,
                action: r % n_actions,
                reason,
            };
            check_row(&row, n_states).map_err(bad)?;
            cols.extend_from_slice(&row.cols);
            probs.extend_from_slice(&row.probs);
            sink.push(row.sink);
            row_ptr.push(cols.len());
        }
        Ok(FiniteGmdp {
            n_states,
            n_actions,
            row_ptr,
            cols,
            probs,
            sink,
            output_dim,
            outputs,
            initial,
        })
    }

    /// Builds a model from dense rows of length `n + 1` (last entry is the
    /// sink); zero entries are dropped.
    pub fn from_dense(
        n_states: usize,
        n_actions: usize,
        dense: &[Vec<f64>],
        output_dim: usize,
        outputs: Vec<f64>,
        initial: usize,
    ) -> Result<Self, MdpError> {
        let mut rows = Vec::with_capacity(dense.len());
        for (r, d) in dense.iter().enumerate() {
            if d.len() != n_states + 1 {
                return Err(MdpError::InvalidRow {
                    state: r / n_actions.max(1),
                    action: r % n_actions.max(1),
                    reason: format!("dense row has {} entries, expected {}", d.len(), n_states + 1),
                });
            }
            let mut row = SparseRow {
                sink: d[n_states],
                ..SparseRow::default()
            };
            for (j, &p) in d[..n_states].iter().enumerate() {
                if p != 0.0 {
                    row.cols.push(j as u32);
                    row.probs.push(p);
                }
            }
            rows.push(row);
        }
        Self::from_rows(n_states, n_actions, rows, output_dim, outputs, initial)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    /// Index of the sink state.
    pub fn sink_index(&self) -> usize {
        self.n_states
    }

    pub fn initial(&self) -> usize {
        self.initial
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn output(&self, i: usize) -> &[f64] {
        &self.outputs[i * self.output_dim..(i + 1) * self.output_dim]
    }

    /// Stored nonzeros across all rows (excluding sink entries).
    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    /// Successors, probabilities and sink mass of state `i` under action `a`.
    #[inline]
    pub fn row(&self, i: usize, a: usize) -> (&[u32], &[f64], f64) {
        let r = i * self.n_actions + a;
        let (lo, hi) = (self.row_ptr[r], self.row_ptr[r + 1]);
        (&self.cols[lo..hi], &self.probs[lo..hi], self.sink[r])
    }

    /// Dense row of length `n + 1`, sink last.
    pub fn dense_row(&self, i: usize, a: usize) -> Vec<f64> {
        let (cols, probs, sink) = self.row(i, a);
        let mut out = vec![0.0; self.n_states + 1];
        for (&j, &p) in cols.iter().zip(probs) {
            out[j as usize] = p;
        }
        out[self.n_states] = sink;
        out
    }
}

fn check_row(row: &SparseRow, n: usize) -> Result<(), String> {
    if row.cols.len() != row.probs.len() {
        return Err("column and probability lengths differ".into());
    }
    if row.cols.windows(2).any(|w| w[0] >= w[1]) {
        return Err("successor indices must be strictly ascending".into());
    }
    if row.cols.last().is_some_and(|&j| j as usize >= n) {
        return Err("successor index out of range".into());
    }
    let in_unit = |p: f64| (0.0..=1.0).contains(&p);
    if !row.probs.iter().all(|&p| in_unit(p)) || !in_unit(row.sink) {
        return Err("probabilities must lie in [0, 1]".into());
    }
    let total: f64 = row.probs.iter().sum::<f64>() + row.sink;
    if (total - 1.0).abs() > ROW_SUM_TOL {
        return Err(format!("row sums to {total}"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state() -> FiniteGmdp {
        let dense = vec![
            vec![0.5, 0.5, 0.0],
            vec![0.0, 0.9, 0.1],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ];
        FiniteGmdp::from_dense(2, 2, &dense, 1, vec![0.0, 1.0], 0).unwrap()
    }

    #[test]
    fn dense_round_trip() {
        let g = two_state();
        assert_eq!(g.nnz(), 4);
        assert_eq!(g.dense_row(0, 1), vec![0.0, 0.9, 0.1]);
        assert_eq!(g.row(1, 1), (&[][..], &[][..], 1.0));
        assert_eq!(g.output(1), &[1.0]);
        assert_eq!(g.sink_index(), 2);
    }

    #[test]
    fn rejects_non_stochastic_rows() {
        let dense = vec![vec![0.5, 0.4, 0.0]];
        let err = FiniteGmdp::from_dense(2, 1, &dense, 0, vec![], 0);
        assert!(err.is_err());
        let dense = vec![vec![1.2, -0.2, 0.0], vec![0.0, 1.0, 0.0]];
        assert!(matches!(
            FiniteGmdp::from_dense(2, 1, &dense, 0, vec![], 0),
            Err(MdpError::InvalidRow { state: 0, action: 0, .. })
        ));
    }

    #[test]
    fn rejects_unsorted_columns() {
        let row = SparseRow {
            cols: vec![1, 0],
            probs: vec![0.5, 0.5],
            sink: 0.0,
        };
        let ok = SparseRow {
            cols: vec![0],
            probs: vec![1.0],
            sink: 0.0,
        };
        assert!(FiniteGmdp::from_rows(2, 1, vec![row, ok], 0, vec![], 0).is_err());
    }
}
