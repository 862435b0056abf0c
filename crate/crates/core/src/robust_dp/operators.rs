use rayon::prelude::*;

use super::{Policy, ValueFn};
use crate::mdp::{FiniteGmdp, LabelCache};

/// Values this close to 0 (robust) or 1 (optimistic) are snapped to the
/// boundary when `δ > 0`, so that repeated subtraction of `δ` reaches exactly
/// zero after `⌈1/δ⌉` steps despite rounding. Snapping down a lower bound or
/// up an upper bound keeps both sound.
pub const SNAP_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OperatorKind {
    /// `Σ K · max(1_F(q'), V(x', q'))`, `q' = τ(q, λ(x'))`.
    Plain,
    /// Plain backup minus `δ`, clamped to `[0, 1]`.
    DeltaRobust,
    /// As `DeltaRobust`, with the worst successor location in `τ̄(q, x')`.
    EpsDeltaRobust,
    /// Best successor location in `τ̄(q, x')`, plus `δ`, clamped; the sink
    /// counts as satisfied.
    Optimistic,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Operator {
    pub kind: OperatorKind,
    pub delta: f64,
}

impl Operator {
    pub fn plain() -> Self {
        Operator {
            kind: OperatorKind::Plain,
            delta: 0.0,
        }
    }

    pub fn delta_robust(delta: f64) -> Self {
        Operator {
            kind: OperatorKind::DeltaRobust,
            delta,
        }
    }

    pub fn eps_delta_robust(delta: f64) -> Self {
        Operator {
            kind: OperatorKind::EpsDeltaRobust,
            delta,
        }
    }

    pub fn optimistic(delta: f64) -> Self {
        Operator {
            kind: OperatorKind::Optimistic,
            delta,
        }
    }

    /// Pinned value of the sink state.
    pub fn sink_value(&self) -> f64 {
        match self.kind {
            OperatorKind::Optimistic => 1.0,
            _ => 0.0,
        }
    }

    #[inline]
    fn finish(&self, raw: f64) -> f64 {
        let d = self.delta;
        match self.kind {
            OperatorKind::Plain => raw.clamp(0.0, 1.0),
            OperatorKind::DeltaRobust | OperatorKind::EpsDeltaRobust => {
                let v = (raw - d).clamp(0.0, 1.0);
                if d > 0.0 && v < SNAP_TOL {
                    0.0
                } else {
                    v
                }
            }
            OperatorKind::Optimistic => {
                let v = (raw + d).clamp(0.0, 1.0);
                if d > 0.0 && v > 1.0 - SNAP_TOL {
                    1.0
                } else {
                    v
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub enum PolicyMode<'a> {
    /// Maximise over actions; the lowest action index wins ties.
    Optimize,
    Fixed(&'a Policy),
}

/// Per-successor contribution `W[j * nq + q]`: the value a transition into
/// state `j` is worth from location `q`, after resolving the DFA step.
fn successor_table(op: &Operator, v: &ValueFn, cache: &LabelCache) -> Vec<f64> {
    let nq = cache.n_locations();
    let worth = |j: usize, q: usize| {
        if cache.is_accepting(q) {
            1.0
        } else {
            v.get(j, q)
        }
    };
    let mut w = vec![0.0; cache.n_states() * nq];
    for j in 0..cache.n_states() {
        for q in 0..nq {
            w[j * nq + q] = match op.kind {
                OperatorKind::Plain | OperatorKind::DeltaRobust => worth(j, cache.succ(j, q)),
                OperatorKind::EpsDeltaRobust => cache
                    .succ_set(j, q)
                    .iter()
                    .map(|&t| worth(j, t as usize))
                    .fold(f64::INFINITY, f64::min),
                OperatorKind::Optimistic => cache
                    .succ_set(j, q)
                    .iter()
                    .map(|&t| worth(j, t as usize))
                    .fold(f64::NEG_INFINITY, f64::max),
            };
        }
    }
    w
}

/// Applies one backup of `op` to `v`.
///
/// Rows are summed in ascending successor order with the sink last, so the
/// result does not depend on thread scheduling. In optimize mode the returned
/// policy is the argmax of the raw (pre-clamp) sums.
///
/// # Panics
/// If the shapes of `v`, `g`, `cache` or the fixed policy disagree.
pub fn apply_operator(
    op: &Operator,
    v: &ValueFn,
    g: &FiniteGmdp,
    cache: &LabelCache,
    mode: PolicyMode<'_>,
) -> (ValueFn, Option<Policy>) {
    let n = g.n_states();
    let m = g.n_actions();
    let nq = cache.n_locations();
    assert_eq!(cache.n_states(), n, "label cache built for another model");
    assert_eq!((v.n_states(), v.n_locations()), (n, nq), "value shape");
    if let PolicyMode::Fixed(p) = mode {
        assert_eq!((p.n_states(), p.n_locations()), (n, nq), "policy shape");
    }
    let w = successor_table(op, v, cache);
    let sink_value = op.sink_value();
    let mut out = vec![0.0; n * nq];
    let mut actions = vec![0u32; n * nq];

    out.par_chunks_mut(nq)
        .zip(actions.par_chunks_mut(nq))
        .enumerate()
        .for_each_init(
            || (vec![0.0; nq], vec![0.0; nq]),
            |(acc, best), (i, (out_i, act_i))| {
                match mode {
                    PolicyMode::Fixed(p) => {
                        for q in 0..nq {
                            let a = p.action(i, q);
                            let (cols, probs, sink) = g.row(i, a);
                            let mut s = 0.0;
                            for (&j, &pr) in cols.iter().zip(probs) {
                                s += pr * w[j as usize * nq + q];
                            }
                            s += sink * sink_value;
                            out_i[q] = s;
                            act_i[q] = a as u32;
                        }
                    }
                    PolicyMode::Optimize => {
                        best.fill(f64::NEG_INFINITY);
                        for a in 0..m {
                            let (cols, probs, sink) = g.row(i, a);
                            acc.fill(0.0);
                            for (&j, &pr) in cols.iter().zip(probs) {
                                let row = &w[j as usize * nq..(j as usize + 1) * nq];
                                for (s, &x) in acc.iter_mut().zip(row) {
                                    *s += pr * x;
                                }
                            }
                            for q in 0..nq {
                                let s = acc[q] + sink * sink_value;
                                if s > best[q] {
                                    best[q] = s;
                                    act_i[q] = a as u32;
                                }
                            }
                        }
                        out_i.copy_from_slice(best);
                    }
                }
                for x in out_i.iter_mut() {
                    *x = op.finish(*x);
                }
            },
        );

    let value = ValueFn::from_vec(n, nq, out).expect("shape");
    let policy = match mode {
        PolicyMode::Optimize => Some(Policy::from_vec(n, nq, actions).expect("shape")),
        PolicyMode::Fixed(_) => None,
    };
    (value, policy)
}

/// Plain Bellman backup (no δ, exact labels, sink worth 0).
pub fn bellman_op(
    v: &ValueFn,
    g: &FiniteGmdp,
    cache: &LabelCache,
    mode: PolicyMode<'_>,
) -> (ValueFn, Option<Policy>) {
    apply_operator(&Operator::plain(), v, g, cache, mode)
}

/// `L(T(V) − δ)` with `L` the clamp to `[0, 1]`.
pub fn robust_delta_op(
    v: &ValueFn,
    g: &FiniteGmdp,
    cache: &LabelCache,
    delta: f64,
    mode: PolicyMode<'_>,
) -> (ValueFn, Option<Policy>) {
    apply_operator(&Operator::delta_robust(delta), v, g, cache, mode)
}

/// δ-robust backup taking the worst DFA successor over the ε-letter set.
pub fn robust_eps_delta_op(
    v: &ValueFn,
    g: &FiniteGmdp,
    cache: &LabelCache,
    delta: f64,
    mode: PolicyMode<'_>,
) -> (ValueFn, Option<Policy>) {
    apply_operator(&Operator::eps_delta_robust(delta), v, g, cache, mode)
}

/// Optimistic backup: best DFA successor over the ε-letter set, plus δ,
/// maximised over actions.
pub fn optimistic_op(v: &ValueFn, g: &FiniteGmdp, cache: &LabelCache, delta: f64) -> (ValueFn, Policy) {
    let (val, pol) = apply_operator(&Operator::optimistic(delta), v, g, cache, PolicyMode::Optimize);
    (val, pol.expect("optimize mode returns a policy"))
}
