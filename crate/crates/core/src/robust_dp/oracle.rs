use nalgebra::{DMatrix, DVector};

use super::operators::{apply_operator, Operator, PolicyMode};
use super::{Policy, ValueFn};
use crate::mdp::{FiniteGmdp, LabelCache};

/// Exact reachability probability of the accepting layer under `policy`,
/// by a dense linear solve. Intended for small instances (a few thousand
/// product states at most).
///
/// States that cannot reach the accepting layer are fixed to 0 first, which
/// makes the remaining system nonsingular. Accepting locations get the
/// plain-backup value `1 − sink mass`, matching the fixed point of the plain
/// operator. If the solve still fails, a long value iteration is used.
pub fn exact_reachability_oracle(g: &FiniteGmdp, cache: &LabelCache, policy: &Policy) -> ValueFn {
    let n = g.n_states();
    let nq = cache.n_locations();
    let idx = |i: usize, q: usize| i * nq + q;

    // Backward reachability of the accepting layer over positive-probability edges.
    let mut reaches = vec![false; n * nq];
    let mut changed = true;
    while changed {
        changed = false;
        for i in 0..n {
            for q in 0..nq {
                if cache.is_accepting(q) || reaches[idx(i, q)] {
                    continue;
                }
                let (cols, probs, _) = g.row(i, policy.action(i, q));
                let hit = cols.iter().zip(probs).any(|(&j, &p)| {
                    let j = j as usize;
                    let qn = cache.succ(j, q);
                    p > 0.0 && (cache.is_accepting(qn) || reaches[idx(j, qn)])
                });
                if hit {
                    reaches[idx(i, q)] = true;
                    changed = true;
                }
            }
        }
    }

    let unknowns: Vec<usize> = (0..n * nq).filter(|&s| reaches[s]).collect();
    let mut pos = vec![usize::MAX; n * nq];
    for (k, &s) in unknowns.iter().enumerate() {
        pos[s] = k;
    }
    let u = unknowns.len();
    let mut a = DMatrix::<f64>::identity(u, u);
    let mut b = DVector::<f64>::zeros(u);
    for (k, &s) in unknowns.iter().enumerate() {
        let (i, q) = (s / nq, s % nq);
        let (cols, probs, _) = g.row(i, policy.action(i, q));
        for (&j, &p) in cols.iter().zip(probs) {
            let j = j as usize;
            let qn = cache.succ(j, q);
            if cache.is_accepting(qn) {
                b[k] += p;
            } else if reaches[idx(j, qn)] {
                a[(k, pos[idx(j, qn)])] -= p;
            }
        }
    }

    let mut out = ValueFn::zeros(n, nq);
    let solved = if u == 0 { Some(DVector::zeros(0)) } else { a.lu().solve(&b) };
    match solved {
        Some(x) if x.iter().all(|v| v.is_finite()) => {
            for (k, &s) in unknowns.iter().enumerate() {
                out.set(s / nq, s % nq, x[k].clamp(0.0, 1.0));
            }
            for i in 0..n {
                for q in 0..nq {
                    if cache.is_accepting(q) {
                        let (_, _, sink) = g.row(i, policy.action(i, q));
                        out.set(i, q, 1.0 - sink);
                    }
                }
            }
        }
        _ => {
            log::warn!("reachability system is singular; falling back to value iteration");
            for _ in 0..1_000_000 {
                let next = apply_operator(&Operator::plain(), &out, g, cache, PolicyMode::Fixed(policy)).0;
                let done = next.sup_dist(&out) < 1e-15;
                out = next;
                if done {
                    break;
                }
            }
        }
    }
    out
}
