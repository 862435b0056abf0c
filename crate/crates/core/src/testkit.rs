//! Seeded random instances (finite gMDP, labeling, DFA) for property tests
//! and acceptance runs.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::mdp::{build_label_cache, BoxRegion, FiniteGmdp, LabelCache, Labeling};
use crate::scltl::{ApList, Dfa};

pub struct Instance {
    pub g: FiniteGmdp,
    pub lab: Labeling,
    pub dfa: Dfa,
    pub cache: LabelCache,
}

#[derive(Clone, Debug)]
pub struct InstanceParams {
    pub max_states: usize,
    pub n_actions: usize,
    pub max_locations: usize,
    pub n_aps: usize,
    /// Expected successors per row.
    pub density: f64,
    /// Largest sink mass per row.
    pub max_sink: f64,
}

impl Default for InstanceParams {
    fn default() -> Self {
        InstanceParams {
            max_states: 20,
            n_actions: 3,
            max_locations: 4,
            n_aps: 2,
            density: 3.0,
            max_sink: 0.1,
        }
    }
}

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// A probability row over `n` states plus the sink (last entry) with about
/// `density` nonzero successors.
pub fn random_row<R: Rng>(rng: &mut R, n: usize, density: f64, max_sink: f64) -> Vec<f64> {
    let k = (rng.random_range(1.0..=2.0 * density).round() as usize).clamp(1, n);
    let mut row = vec![0.0; n + 1];
    for j in sample(rng, n, k) {
        row[j] = rng.random_range(0.05..1.0);
    }
    let sink = if max_sink > 0.0 && rng.random_bool(0.5) {
        rng.random_range(0.0..max_sink)
    } else {
        0.0
    };
    let total: f64 = row.iter().sum();
    for p in &mut row {
        *p *= (1.0 - sink) / total;
    }
    row[n] = sink;
    row
}

/// Dense rows for `n` states × `m` actions.
pub fn random_kernel<R: Rng>(rng: &mut R, n: usize, m: usize, density: f64, max_sink: f64) -> Vec<Vec<f64>> {
    (0..n * m).map(|_| random_row(rng, n, density, max_sink)).collect()
}

/// Model with scalar outputs `y_i = i`.
pub fn gmdp_from_dense(n: usize, m: usize, dense: &[Vec<f64>], initial: usize) -> FiniteGmdp {
    let outputs = (0..n).map(|i| i as f64).collect();
    FiniteGmdp::from_dense(n, m, dense, 1, outputs, initial).expect("valid random kernel")
}

/// Each proposition holds on a random subset of the states (`y_i = i`).
pub fn random_labeling<R: Rng>(rng: &mut R, aps: &ApList, n: usize) -> Labeling {
    let regions = aps
        .names()
        .iter()
        .map(|name| {
            let boxes = (0..n)
                .filter(|_| rng.random_bool(0.3))
                .map(|i| BoxRegion::new(vec![i as f64 - 0.25], vec![i as f64 + 0.25]))
                .collect();
            (name.clone(), boxes)
        })
        .collect();
    Labeling::new(aps, 1, regions).expect("consistent labeling")
}

/// Random DFA with absorbing accepting locations; location 0 is initial and
/// at least one location accepts.
pub fn random_dfa<R: Rng>(rng: &mut R, aps: &ApList, n_locations: usize) -> Dfa {
    let n = n_locations.max(2);
    let sigma = aps.alphabet_size();
    let mut accepting: Vec<bool> = (0..n).map(|q| q > 0 && rng.random_bool(0.3)).collect();
    let last = n - 1;
    accepting[last] = true;
    let mut trans = Vec::with_capacity(n * sigma);
    for (q, &acc) in accepting.iter().enumerate() {
        for _ in 0..sigma {
            trans.push(if acc { q } else { rng.random_range(0..n) } as u32);
        }
    }
    Dfa::from_table(aps.clone(), 0, trans, accepting)
}

pub fn ap_list(n_aps: usize) -> ApList {
    ApList::new(["a", "b", "c", "d"].into_iter().take(n_aps)).expect("valid names")
}

pub fn random_instance(seed: u64, p: &InstanceParams) -> Instance {
    let mut r = rng(seed);
    let n = r.random_range(2..=p.max_states.max(2));
    let dense = random_kernel(&mut r, n, p.n_actions, p.density, p.max_sink);
    let g = gmdp_from_dense(n, p.n_actions, &dense, r.random_range(0..n));
    let aps = ap_list(p.n_aps);
    let lab = random_labeling(&mut r, &aps, n);
    let nq = r.random_range(2..=p.max_locations.max(2));
    let dfa = random_dfa(&mut r, &aps, nq);
    let cache = build_label_cache(&g, &lab, &dfa, 0.0).expect("matching propositions");
    Instance { g, lab, dfa, cache }
}

/// Rows `(1 − δ)·K̂ + δ·(random rows)`: a model that the original one
/// δ-simulates with the identity relation.
pub fn perturbed<R: Rng>(rng: &mut R, g: &FiniteGmdp, delta: f64, density: f64) -> FiniteGmdp {
    let n = g.n_states();
    let m = g.n_actions();
    let dense: Vec<Vec<f64>> = (0..n * m)
        .map(|r| {
            let base = g.dense_row(r / m, r % m);
            let noise = random_row(rng, n, density, 0.1);
            base.iter().zip(&noise).map(|(b, e)| (1.0 - delta) * b + delta * e).collect()
        })
        .collect();
    gmdp_from_dense(n, m, &dense, g.initial())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn instances_are_reproducible_and_valid() {
        let p = InstanceParams::default();
        for seed in 0..20 {
            let a = random_instance(seed, &p);
            let b = random_instance(seed, &p);
            assert_eq!(a.g, b.g);
            assert_eq!(a.dfa.n_locations(), b.dfa.n_locations());
            assert!(a.dfa.accepting_is_absorbing());
            for i in 0..a.g.n_states() {
                for act in 0..a.g.n_actions() {
                    let s: f64 = a.g.dense_row(i, act).iter().sum();
                    assert!((s - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn perturbation_keeps_rows_stochastic() {
        let inst = random_instance(3, &InstanceParams::default());
        let mut r = rng(9);
        let c = perturbed(&mut r, &inst.g, 0.05, 3.0);
        for i in 0..c.n_states() {
            for a in 0..c.n_actions() {
                let row = c.dense_row(i, a);
                let s: f64 = row.iter().sum();
                assert!((s - 1.0).abs() < 1e-12);
                let base = inst.g.dense_row(i, a);
                assert!(row.iter().zip(&base).all(|(x, b)| *x >= 0.95 * b - 1e-15));
            }
        }
    }
}
