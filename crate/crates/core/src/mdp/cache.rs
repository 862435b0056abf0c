use super::{eps_letter_set, letter_of, FiniteGmdp, Labeling, MdpError};
use crate::scltl::{Dfa, Letter};

/// Per-state letters and DFA successors, precomputed once so that the DP
/// operators can index values by `(state, location)` without building the
/// product model.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelCache {
    n_states: usize,
    n_locations: usize,
    eps: f64,
    q0: usize,
    accepting: Vec<bool>,
    rejecting_trap: Vec<bool>,
    letters: Vec<Letter>,
    eps_letters: Vec<Vec<Letter>>,
    // succ[i * nq + q] = τ(q, λ(i))
    succ: Vec<u32>,
    // τ̄(q, i) in CSR form over i * nq + q, ascending and deduplicated
    succ_set_ptr: Vec<usize>,
    succ_set: Vec<u32>,
}

impl LabelCache {
    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_locations(&self) -> usize {
        self.n_locations
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Initial DFA location (before reading any letter).
    pub fn q0(&self) -> usize {
        self.q0
    }

    pub fn is_accepting(&self, q: usize) -> bool {
        self.accepting[q]
    }

    pub fn accepting(&self) -> &[bool] {
        &self.accepting
    }

    /// Locations from which the DFA can no longer accept.
    pub fn is_rejecting_trap(&self, q: usize) -> bool {
        self.rejecting_trap[q]
    }

    pub fn letter(&self, i: usize) -> Letter {
        self.letters[i]
    }

    pub fn eps_letters(&self, i: usize) -> &[Letter] {
        &self.eps_letters[i]
    }

    /// `τ(q, λ(i))`.
    #[inline]
    pub fn succ(&self, i: usize, q: usize) -> usize {
        self.succ[i * self.n_locations + q] as usize
    }

    /// `τ̄(q, i) = { τ(q, α) : α ∈ Λ_ε(i) }`.
    #[inline]
    pub fn succ_set(&self, i: usize, q: usize) -> &[u32] {
        let k = i * self.n_locations + q;
        &self.succ_set[self.succ_set_ptr[k]..self.succ_set_ptr[k + 1]]
    }
}

/// Precomputes letters, ε-letter sets and DFA successors for every
/// non-sink state of `g`.
pub fn build_label_cache(
    g: &FiniteGmdp,
    lab: &Labeling,
    d: &Dfa,
    eps: f64,
) -> Result<LabelCache, MdpError> {
    if lab.aps() != d.aps() {
        return Err(MdpError::ApMismatch {
            labeling: lab.aps().names().to_vec(),
            declared: d.aps().names().to_vec(),
        });
    }
    if !(eps >= 0.0) {
        return Err(MdpError::Invalid(format!("eps must be nonnegative, got {eps}")));
    }
    let n = g.n_states();
    let nq = d.n_locations();
    let mut letters = Vec::with_capacity(n);
    let mut eps_letters = Vec::with_capacity(n);
    let mut succ = Vec::with_capacity(n * nq);
    let mut succ_set_ptr = Vec::with_capacity(n * nq + 1);
    let mut succ_set = Vec::new();
    succ_set_ptr.push(0);
    for i in 0..n {
        let y = g.output(i);
        let letter = letter_of(lab, y)?;
        let set = eps_letter_set(lab, y, eps)?;
        debug_assert!(set.contains(&letter));
        for q in 0..nq {
            succ.push(d.step(q, letter) as u32);
            let mut targets: Vec<u32> = set.iter().map(|&a| d.step(q, a) as u32).collect();
            targets.sort_unstable();
            targets.dedup();
            succ_set.extend(targets);
            succ_set_ptr.push(succ_set.len());
        }
        letters.push(letter);
        eps_letters.push(set);
    }
    Ok(LabelCache {
        n_states: n,
        n_locations: nq,
        eps,
        q0: d.initial(),
        accepting: d.accepting().to_vec(),
        rejecting_trap: d.rejecting_traps(),
        letters,
        eps_letters,
        succ,
        succ_set_ptr,
        succ_set,
    })
}

/// Initial product state `(x̂0, τ(q0, λ(x̂0)))`. Callers using ε-inflated
/// labels take the min or max over `cache.succ_set(x̂0, q0)` instead.
pub fn product_initial(g: &FiniteGmdp, cache: &LabelCache) -> (usize, usize) {
    let x0 = g.initial();
    (x0, cache.succ(x0, cache.q0()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::BoxRegion;
    use crate::scltl::{parse_formula, to_dfa, ApList};

    fn setup(eps: f64) -> (FiniteGmdp, LabelCache, Dfa) {
        let aps = ApList::new(["a"]).unwrap();
        let d = to_dfa(&parse_formula("F a", &aps).unwrap().desugar(), &aps).unwrap();
        let lab = Labeling::new(
            &aps,
            1,
            vec![("a".into(), vec![BoxRegion::new(vec![0.5], vec![1.5])])],
        )
        .unwrap();
        let dense = vec![vec![0.5, 0.5, 0.0], vec![0.0, 1.0, 0.0]];
        let g = FiniteGmdp::from_dense(2, 1, &dense, 1, vec![0.0, 1.0], 0).unwrap();
        let cache = build_label_cache(&g, &lab, &d, eps).unwrap();
        (g, cache, d)
    }

    #[test]
    fn exact_letters_and_successors() {
        let (_, cache, d) = setup(0.0);
        let q0 = d.initial();
        let acc = d.step(q0, Letter(1));
        assert_eq!(cache.letter(0), Letter(0));
        assert_eq!(cache.letter(1), Letter(1));
        assert_eq!(cache.succ(0, q0), q0);
        assert_eq!(cache.succ(1, q0), acc);
        for i in 0..2 {
            for q in 0..d.n_locations() {
                assert_eq!(cache.succ_set(i, q), &[cache.succ(i, q) as u32]);
            }
        }
    }

    #[test]
    fn inflation_adds_successors() {
        let (_, cache, d) = setup(0.6);
        let q0 = d.initial();
        // state 0 sits at 0.0, within 0.6 of the box face at 0.5
        assert_eq!(cache.eps_letters(0), &[Letter(0), Letter(1)]);
        assert_eq!(cache.succ_set(0, q0).len(), 2);
        // state 1 sits at 1.0, and [0.4, 1.6] is not inside [0.5, 1.5]
        assert_eq!(cache.eps_letters(1), &[Letter(0), Letter(1)]);
    }

    #[test]
    fn initial_product_state() {
        let (g, cache, d) = setup(0.0);
        assert_eq!(product_initial(&g, &cache), (0, d.initial()));
    }

    #[test]
    fn ap_order_must_match() {
        let aps = ApList::new(["a", "b"]).unwrap();
        let other = ApList::new(["b", "a"]).unwrap();
        let d = to_dfa(&parse_formula("a U b", &aps).unwrap(), &aps).unwrap();
        let lab = Labeling::new(&other, 1, vec![("a".into(), vec![]), ("b".into(), vec![])]).unwrap();
        let g = FiniteGmdp::from_dense(1, 1, &[vec![1.0, 0.0]], 1, vec![0.0], 0).unwrap();
        assert!(build_label_cache(&g, &lab, &d, 0.0).is_err());
    }
}
