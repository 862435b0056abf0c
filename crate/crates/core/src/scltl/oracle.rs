use super::{ApList, Formula, Letter};

/// Strong finite-word semantics: every obligation that refers to a position
/// at or beyond the end of `word` is false, including `true`.
///
/// Sugar nodes are evaluated directly from their definitions, so this also
/// serves as an independent check of [`Formula::desugar`].
///
/// # Panics
/// If `f` mentions an atom that is not in `aps`.
pub fn sat_strong_oracle(f: &Formula, aps: &ApList, word: &[Letter], pos: usize) -> bool {
    if pos >= word.len() {
        return false;
    }
    let ap = |p: &str| aps.index_of(p).expect("atom not declared");
    let sat = |g: &Formula, k: usize| sat_strong_oracle(g, aps, word, k);
    match f {
        Formula::True => true,
        Formula::False => false,
        Formula::Atom(p) => word[pos].contains(ap(p)),
        Formula::NegAtom(p) => !word[pos].contains(ap(p)),
        Formula::And(l, r) => sat(l, pos) && sat(r, pos),
        Formula::Or(l, r) => sat(l, pos) || sat(r, pos),
        Formula::Next(s) => sat(s, pos + 1),
        Formula::Until(l, r) => {
            for k in pos..word.len() {
                if sat(r, k) {
                    return true;
                }
                if !sat(l, k) {
                    return false;
                }
            }
            false
        }
        Formula::Eventually(s) => (pos..word.len()).any(|k| sat(s, k)),
        Formula::BoundedEventually(n, s) => (pos..=pos + *n as usize).any(|k| sat(s, k)),
        Formula::BoundedAlways(n, s) => (pos..=pos + *n as usize).all(|k| sat(s, k)),
    }
}

/// True iff some prefix of `word` (including the whole word) satisfies `f`
/// under the strong semantics from position 0.
pub fn accepts_some_prefix(f: &Formula, aps: &ApList, word: &[Letter]) -> bool {
    (0..=word.len()).any(|len| sat_strong_oracle(f, aps, &word[..len], 0))
}
