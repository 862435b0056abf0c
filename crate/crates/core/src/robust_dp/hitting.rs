use super::operators::{apply_operator, Operator, PolicyMode};
use super::{Policy, ValueFn};
use crate::mdp::{FiniteGmdp, LabelCache};

/// Kernel entries below this are ignored when building support graphs.
pub const SUPPORT_EPS: f64 = 1e-15;

/// Product states here include the sink: index `i * nq + q` for
/// `i ∈ 0..=n`, with `i = n` the sink, which keeps its location forever.
fn product_len(g: &FiniteGmdp, cache: &LabelCache) -> usize {
    (g.n_states() + 1) * cache.n_locations()
}

/// Tail probabilities `P(H ≥ k)`, `k = 0..=n_max`, of the first hitting
/// time of `target` under `policy`, for every product state (sink included).
///
/// `target` has one flag per product state, sink rows last.
pub fn hitting_tails_all(
    g: &FiniteGmdp,
    cache: &LabelCache,
    policy: &Policy,
    target: &[bool],
    n_max: usize,
) -> Vec<Vec<f64>> {
    let n = g.n_states();
    let nq = cache.n_locations();
    let len = product_len(g, cache);
    assert_eq!(target.len(), len, "target covers the product including the sink");
    let mut tails = Vec::with_capacity(n_max + 1);
    tails.push(vec![1.0; len]);
    for _ in 0..n_max {
        let prev = tails.last().expect("nonempty");
        let mut next = vec![0.0; len];
        for i in 0..n {
            for q in 0..nq {
                let s = i * nq + q;
                if target[s] {
                    continue;
                }
                let (cols, probs, sink) = g.row(i, policy.action(i, q));
                let mut acc = 0.0;
                for (&j, &p) in cols.iter().zip(probs) {
                    let j = j as usize;
                    acc += p * prev[j * nq + cache.succ(j, q)];
                }
                next[s] = acc + sink * prev[n * nq + q];
            }
        }
        for q in 0..nq {
            let s = n * nq + q;
            next[s] = if target[s] { 0.0 } else { prev[s] };
        }
        tails.push(next);
    }
    tails
}

/// Tails `P(H ≥ k)`, `k = 0..=n_max`, from the initial product state
/// `(x̂0, τ(q0, λ(x̂0)))`. Nonincreasing in `k`.
pub fn hitting_tails(
    g: &FiniteGmdp,
    cache: &LabelCache,
    policy: &Policy,
    target: &[bool],
    n_max: usize,
) -> Vec<f64> {
    let nq = cache.n_locations();
    let x0 = g.initial();
    let s0 = x0 * nq + cache.succ(x0, cache.q0());
    hitting_tails_all(g, cache, policy, target, n_max)
        .into_iter()
        .map(|t| t[s0])
        .collect()
}

/// `Σ_{k≥1} P(H ≥ k)` from a tail sequence.
///
/// The sum stops at the first tail below `tol` and adds a geometric
/// remainder estimated from the last decay ratio. A tail that never drops
/// below `tol` and has stopped decaying means positive probability of never
/// hitting, reported as `∞`.
pub fn mean_hitting_time(tails: &[f64], tol: f64) -> f64 {
    let mut sum = 0.0;
    for k in 1..tails.len() {
        let t = tails[k];
        sum += t;
        if t < tol {
            return sum + geometric_remainder(tails[k - 1], t);
        }
    }
    let k = tails.len() - 1;
    if k == 0 {
        return if tails[0] == 0.0 { 0.0 } else { f64::INFINITY };
    }
    let (prev, last) = (tails[k - 1], tails[k]);
    if last >= prev * (1.0 - 1e-9) {
        f64::INFINITY
    } else {
        sum + geometric_remainder(prev, last)
    }
}

fn geometric_remainder(prev: f64, last: f64) -> f64 {
    if last == 0.0 || prev <= 0.0 {
        return 0.0;
    }
    let r = last / prev;
    if r >= 1.0 {
        f64::INFINITY
    } else {
        last * r / (1.0 - r)
    }
}

/// Largest set of non-accepting product states that the policy cannot leave
/// (up to `eta` probability per step), found by pruning from
/// `X̂ × (Q∖F)` until nothing changes. Kernel entries below [`SUPPORT_EPS`]
/// are ignored. The result has one flag per product state, sink rows last;
/// the sink with any non-accepting location always belongs to it.
pub fn largest_absorbing_set(g: &FiniteGmdp, cache: &LabelCache, policy: &Policy, eta: f64) -> Vec<bool> {
    let n = g.n_states();
    let nq = cache.n_locations();
    let mut inside: Vec<bool> = (0..product_len(g, cache))
        .map(|s| !cache.is_accepting(s % nq))
        .collect();
    let mut changed = true;
    while changed {
        changed = false;
        for i in 0..n {
            for q in 0..nq {
                let s = i * nq + q;
                if !inside[s] {
                    continue;
                }
                let (cols, probs, sink) = g.row(i, policy.action(i, q));
                let mut outside = 0.0;
                for (&j, &p) in cols.iter().zip(probs) {
                    let j = j as usize;
                    if p >= SUPPORT_EPS && !inside[j * nq + cache.succ(j, q)] {
                        outside += p;
                    }
                }
                if sink >= SUPPORT_EPS && !inside[n * nq + q] {
                    outside += sink;
                }
                if outside > eta {
                    inside[s] = false;
                    changed = true;
                }
            }
        }
    }
    inside
}

/// Right-hand side of the hitting-time bound on `l` δ-robust backups from 0:
/// `T^l(0) − δ Σ_{k=1}^{l} P(H ≥ k)` with `H` the hitting time of the
/// accepting layer. On accepting locations the hitting time is 0 and the
/// robust backup still subtracts δ, so there the bound is `T^l(0) − δ` for
/// `l ≥ 1`. Entries may be negative.
pub fn hitting_bound_rhs(
    g: &FiniteGmdp,
    cache: &LabelCache,
    policy: &Policy,
    delta: f64,
    l: usize,
) -> ValueFn {
    let n = g.n_states();
    let nq = cache.n_locations();
    let mut plain = ValueFn::zeros(n, nq);
    if l == 0 {
        return plain;
    }
    for _ in 0..l {
        plain = apply_operator(&Operator::plain(), &plain, g, cache, PolicyMode::Fixed(policy)).0;
    }
    let target: Vec<bool> = (0..product_len(g, cache))
        .map(|s| s < n * nq && cache.is_accepting(s % nq))
        .collect();
    let tails = hitting_tails_all(g, cache, policy, &target, l);
    let mut out = plain.clone();
    for i in 0..n {
        for q in 0..nq {
            let loss = if cache.is_accepting(q) {
                delta
            } else {
                delta * (1..=l).map(|k| tails[k][i * nq + q]).sum::<f64>()
            };
            out.set(i, q, plain.get(i, q) - loss);
        }
    }
    out
}
