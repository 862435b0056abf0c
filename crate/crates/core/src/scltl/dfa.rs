use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt::Write as _;

use super::{ApList, Formula, Letter, ScltlError};

/// Guard on the number of distinct obligation sets explored by the tableau.
pub const MAX_NFA_STATES: usize = 1 << 20;

/// Total deterministic automaton over `2^|AP|` letters whose accepting
/// locations are absorbing.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dfa {
    aps: ApList,
    n_locations: usize,
    initial: usize,
    // trans[q * alphabet + letter]
    trans: Vec<u32>,
    accepting: Vec<bool>,
}

impl Dfa {
    /// Builds a DFA from a dense table; panics on inconsistent sizes.
    pub fn from_table(aps: ApList, initial: usize, trans: Vec<u32>, accepting: Vec<bool>) -> Self {
        let n = accepting.len();
        assert!(n > 0 && initial < n);
        assert_eq!(trans.len(), n * aps.alphabet_size());
        assert!(trans.iter().all(|&t| (t as usize) < n));
        Dfa {
            aps,
            n_locations: n,
            initial,
            trans,
            accepting,
        }
    }

    pub fn aps(&self) -> &ApList {
        &self.aps
    }

    pub fn n_locations(&self) -> usize {
        self.n_locations
    }

    pub fn initial(&self) -> usize {
        self.initial
    }

    pub fn alphabet_size(&self) -> usize {
        self.aps.alphabet_size()
    }

    pub fn is_accepting(&self, q: usize) -> bool {
        self.accepting[q]
    }

    pub fn accepting(&self) -> &[bool] {
        &self.accepting
    }

    #[inline]
    pub fn step(&self, q: usize, letter: Letter) -> usize {
        self.trans[q * self.alphabet_size() + letter.index()] as usize
    }

    /// Runs `word` from the initial location.
    pub fn run(&self, word: &[Letter]) -> (usize, bool) {
        let q = word.iter().fold(self.initial, |q, &l| self.step(q, l));
        (q, self.accepting[q])
    }

    /// Locations from which no accepting location is reachable.
    pub fn rejecting_traps(&self) -> Vec<bool> {
        let sigma = self.alphabet_size();
        let mut can_accept = self.accepting.clone();
        let mut changed = true;
        while changed {
            changed = false;
            for q in 0..self.n_locations {
                if !can_accept[q]
                    && self.trans[q * sigma..(q + 1) * sigma]
                        .iter()
                        .any(|&t| can_accept[t as usize])
                {
                    can_accept[q] = true;
                    changed = true;
                }
            }
        }
        can_accept.iter().map(|c| !c).collect()
    }

    /// True iff every accepting location only moves to accepting locations.
    pub fn accepting_is_absorbing(&self) -> bool {
        let sigma = self.alphabet_size();
        (0..self.n_locations).filter(|&q| self.accepting[q]).all(|q| {
            self.trans[q * sigma..(q + 1) * sigma]
                .iter()
                .all(|&t| self.accepting[t as usize])
        })
    }

    /// True iff Hopcroft refinement separates every pair of locations.
    pub fn is_minimal(&self) -> bool {
        let blocks = hopcroft(self.n_locations, self.alphabet_size(), &self.trans, &self.accepting);
        let distinct: HashSet<u32> = blocks.into_iter().collect();
        distinct.len() == self.n_locations
    }

    /// Graphviz rendering; edges between the same pair of locations are
    /// merged and labelled with all their letters.
    pub fn to_dot(&self) -> String {
        let sigma = self.alphabet_size();
        let mut out = String::from("digraph dfa {\n  rankdir=LR;\n  init [shape=point];\n");
        for q in 0..self.n_locations {
            let shape = if self.accepting[q] { "doublecircle" } else { "circle" };
            let _ = writeln!(out, "  q{q} [shape={shape}];");
        }
        let _ = writeln!(out, "  init -> q{};", self.initial);
        for q in 0..self.n_locations {
            let mut targets: Vec<(u32, Vec<String>)> = Vec::new();
            for a in 0..sigma {
                let t = self.trans[q * sigma + a];
                let label = self.aps.format_letter(Letter(a as u32));
                match targets.iter_mut().find(|(x, _)| *x == t) {
                    Some((_, ls)) => ls.push(label),
                    None => targets.push((t, vec![label])),
                }
            }
            for (t, labels) in targets {
                let _ = writeln!(out, "  q{q} -> q{t} [label=\"{}\"];", labels.join(" "));
            }
        }
        out.push_str("}\n");
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum Node {
    True,
    False,
    Atom(u8),
    NegAtom(u8),
    And(u32, u32),
    Or(u32, u32),
    Next(u32),
    Until(u32, u32),
}

/// Expansion tableau: a state is a set of pending obligations, each an
/// interned core subformula; the empty set means "already satisfied".
struct Tableau {
    nodes: Vec<Node>,
    node_ids: HashMap<Node, u32>,
    sets: Vec<Vec<u32>>,
    set_ids: HashMap<Vec<u32>, u32>,
}

type Alternatives = Vec<Vec<u32>>;

impl Tableau {
    fn new() -> Self {
        Tableau {
            nodes: Vec::new(),
            node_ids: HashMap::new(),
            sets: Vec::new(),
            set_ids: HashMap::new(),
        }
    }

    fn intern(&mut self, node: Node) -> u32 {
        if let Some(&id) = self.node_ids.get(&node) {
            return id;
        }
        let id = self.nodes.len() as u32;
        self.nodes.push(node);
        self.node_ids.insert(node, id);
        id
    }

    fn add(&mut self, f: &Formula, aps: &ApList) -> Result<u32, ScltlError> {
        let ap = |p: &str| {
            aps.index_of(p).map(|k| k as u8).ok_or_else(|| ScltlError::UnknownAtom {
                name: p.to_string(),
                offset: 0,
            })
        };
        let node = match f {
            Formula::True => Node::True,
            Formula::False => Node::False,
            Formula::Atom(p) => Node::Atom(ap(p)?),
            Formula::NegAtom(p) => Node::NegAtom(ap(p)?),
            Formula::And(l, r) => Node::And(self.add(l, aps)?, self.add(r, aps)?),
            Formula::Or(l, r) => Node::Or(self.add(l, aps)?, self.add(r, aps)?),
            Formula::Next(s) => Node::Next(self.add(s, aps)?),
            Formula::Until(l, r) => Node::Until(self.add(l, aps)?, self.add(r, aps)?),
            Formula::Eventually(_) | Formula::BoundedEventually(..) | Formula::BoundedAlways(..) => {
                return Err(ScltlError::NotDesugared)
            }
        };
        Ok(self.intern(node))
    }

    fn intern_set(&mut self, set: Vec<u32>) -> Result<u32, ScltlError> {
        if let Some(&id) = self.set_ids.get(&set) {
            return Ok(id);
        }
        if self.sets.len() >= MAX_NFA_STATES {
            return Err(ScltlError::StateBlowup);
        }
        let id = self.sets.len() as u32;
        self.sets.push(set.clone());
        self.set_ids.insert(set, id);
        Ok(id)
    }

    /// Obligation sets for the next position that make `node` true now,
    /// given the current letter. Until unfolds as `r ∨ (l ∧ X(l U r))`.
    fn expand(&self, node: u32, letter: Letter) -> Alternatives {
        match self.nodes[node as usize] {
            Node::True => vec![vec![]],
            Node::False => vec![],
            Node::Atom(p) => {
                if letter.contains(p as usize) {
                    vec![vec![]]
                } else {
                    vec![]
                }
            }
            Node::NegAtom(p) => {
                if letter.contains(p as usize) {
                    vec![]
                } else {
                    vec![vec![]]
                }
            }
            Node::And(l, r) => product(&self.expand(l, letter), &self.expand(r, letter)),
            Node::Or(l, r) => {
                let mut alts = self.expand(l, letter);
                alts.extend(self.expand(r, letter));
                minimal_sets(alts)
            }
            Node::Next(s) => vec![vec![s]],
            Node::Until(l, r) => {
                let mut alts = self.expand(r, letter);
                alts.extend(product(&self.expand(l, letter), &[vec![node]]));
                minimal_sets(alts)
            }
        }
    }

    fn expand_set(&self, set: u32, letter: Letter) -> Alternatives {
        let mut acc: Alternatives = vec![vec![]];
        for &ob in &self.sets[set as usize] {
            if acc.is_empty() {
                break;
            }
            acc = product(&acc, &self.expand(ob, letter));
        }
        acc
    }
}

fn union_sorted(a: &[u32], b: &[u32]) -> Vec<u32> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    out.extend_from_slice(a);
    out.extend_from_slice(b);
    out.sort_unstable();
    out.dedup();
    out
}

fn is_subset(small: &[u32], big: &[u32]) -> bool {
    small.iter().all(|x| big.binary_search(x).is_ok())
}

fn product(a: &[Vec<u32>], b: &[Vec<u32>]) -> Alternatives {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for x in a {
        for y in b {
            out.push(union_sorted(x, y));
        }
    }
    minimal_sets(out)
}

/// Drops duplicates and every set that strictly contains another: more
/// obligations can only shrink the accepted language.
fn minimal_sets(mut sets: Alternatives) -> Alternatives {
    sets.sort_by(|x, y| x.len().cmp(&y.len()).then_with(|| x.cmp(y)));
    sets.dedup();
    let mut kept: Alternatives = Vec::with_capacity(sets.len());
    for s in sets {
        if !kept.iter().any(|k| is_subset(k, &s)) {
            kept.push(s);
        }
    }
    kept
}

/// Translates a desugared formula into the minimal DFA of its good prefixes
/// under strong finite-word semantics.
pub fn to_dfa(f: &Formula, aps: &ApList) -> Result<Dfa, ScltlError> {
    let sigma = aps.alphabet_size();
    let mut tab = Tableau::new();
    let root = tab.add(f, aps)?;
    let empty = tab.intern_set(vec![])?;
    let start = tab.intern_set(vec![root])?;

    // Macro-states are antichains of obligation-set ids; any macro-state
    // containing the empty obligation set collapses to the single accept state.
    let accept_key: Vec<u32> = vec![empty];
    let canonical = |mut ids: Vec<u32>| -> Vec<u32> {
        ids.sort_unstable();
        ids.dedup();
        if ids.binary_search(&empty).is_ok() {
            accept_key.clone()
        } else {
            ids
        }
    };

    let mut macro_ids: HashMap<Vec<u32>, u32> = HashMap::new();
    let mut macros: Vec<Vec<u32>> = Vec::new();
    let mut trans: Vec<u32> = Vec::new();
    let first = canonical(vec![start]);
    macro_ids.insert(first.clone(), 0);
    macros.push(first);
    let mut queue = VecDeque::from([0u32]);
    while let Some(m) = queue.pop_front() {
        let members = macros[m as usize].clone();
        let row_start = m as usize * sigma;
        if trans.len() < row_start + sigma {
            trans.resize(row_start + sigma, 0);
        }
        for a in 0..sigma {
            let letter = Letter(a as u32);
            let mut alts: Alternatives = Vec::new();
            for &s in &members {
                alts.extend(tab.expand_set(s, letter));
            }
            let mut ids = Vec::with_capacity(alts.len());
            for alt in minimal_sets(alts) {
                ids.push(tab.intern_set(alt)?);
            }
            let key = canonical(ids);
            let target = match macro_ids.get(&key) {
                Some(&t) => t,
                None => {
                    let t = macros.len() as u32;
                    macro_ids.insert(key.clone(), t);
                    macros.push(key);
                    queue.push_back(t);
                    t
                }
            };
            trans[row_start + a] = target;
        }
    }
    let n = macros.len();
    trans.resize(n * sigma, 0);
    let accepting: Vec<bool> = macros.iter().map(|m| *m == [empty]).collect();
    Ok(minimize(aps.clone(), 0, &trans, &accepting))
}

/// Hopcroft partition refinement; returns the block index of every state.
fn hopcroft(n: usize, sigma: usize, trans: &[u32], accepting: &[bool]) -> Vec<u32> {
    // Inverse transitions, CSR per (letter, target).
    let mut counts = vec![0usize; sigma * n + 1];
    for q in 0..n {
        for a in 0..sigma {
            counts[a * n + trans[q * sigma + a] as usize + 1] += 1;
        }
    }
    for k in 1..counts.len() {
        counts[k] += counts[k - 1];
    }
    let mut fill = counts.clone();
    let mut sources = vec![0u32; n * sigma];
    for q in 0..n {
        for a in 0..sigma {
            let key = a * n + trans[q * sigma + a] as usize;
            sources[fill[key]] = q as u32;
            fill[key] += 1;
        }
    }

    let mut blocks: Vec<Vec<u32>> = Vec::new();
    let acc: Vec<u32> = (0..n as u32).filter(|&q| accepting[q as usize]).collect();
    let rej: Vec<u32> = (0..n as u32).filter(|&q| !accepting[q as usize]).collect();
    for part in [acc, rej] {
        if !part.is_empty() {
            blocks.push(part);
        }
    }
    let mut block_of = vec![0u32; n];
    for (b, members) in blocks.iter().enumerate() {
        for &q in members {
            block_of[q as usize] = b as u32;
        }
    }

    let mut pending: HashSet<(u32, u32)> = HashSet::new();
    let mut work: Vec<(u32, u32)> = Vec::new();
    if blocks.len() == 2 {
        let smaller = if blocks[0].len() <= blocks[1].len() { 0 } else { 1 };
        for a in 0..sigma as u32 {
            work.push((smaller, a));
            pending.insert((smaller, a));
        }
    }

    let mut marked = vec![false; n];
    while let Some((b, a)) = work.pop() {
        pending.remove(&(b, a));
        let splitter = blocks[b as usize].clone();
        let mut touched: Vec<u32> = Vec::new();
        for &t in &splitter {
            let key = a as usize * n + t as usize;
            for &q in &sources[counts[key]..counts[key + 1]] {
                if !marked[q as usize] {
                    marked[q as usize] = true;
                    let bq = block_of[q as usize];
                    if !touched.contains(&bq) {
                        touched.push(bq);
                    }
                }
            }
        }
        for y in touched {
            let (inside, outside): (Vec<u32>, Vec<u32>) =
                blocks[y as usize].iter().partition(|&&q| marked[q as usize]);
            if !inside.is_empty() && !outside.is_empty() {
                let new_id = blocks.len() as u32;
                let (keep, moved) = if inside.len() >= outside.len() {
                    (inside, outside)
                } else {
                    (outside, inside)
                };
                for &q in &moved {
                    block_of[q as usize] = new_id;
                }
                blocks[y as usize] = keep;
                blocks.push(moved);
                // The moved part is the smaller half, so it is always a valid
                // splitter whether or not `y` was already pending.
                for c in 0..sigma as u32 {
                    if pending.insert((new_id, c)) {
                        work.push((new_id, c));
                    }
                }
            }
        }
        for &t in &splitter {
            let key = a as usize * n + t as usize;
            for &q in &sources[counts[key]..counts[key + 1]] {
                marked[q as usize] = false;
            }
        }
    }
    block_of
}

/// Quotients by Hopcroft blocks and renumbers locations in breadth-first
/// order from the initial location, visiting letters in ascending order.
fn minimize(aps: ApList, initial: usize, trans: &[u32], accepting: &[bool]) -> Dfa {
    let n = accepting.len();
    let sigma = aps.alphabet_size();
    let block_of = hopcroft(n, sigma, trans, accepting);
    let n_blocks = block_of.iter().max().map_or(0, |&b| b as usize + 1);
    let mut rep = vec![usize::MAX; n_blocks];
    for q in 0..n {
        let b = block_of[q] as usize;
        if rep[b] == usize::MAX {
            rep[b] = q;
        }
    }

    let mut order = vec![u32::MAX; n_blocks];
    let mut bfs: Vec<usize> = Vec::with_capacity(n_blocks);
    let b0 = block_of[initial] as usize;
    order[b0] = 0;
    bfs.push(b0);
    let mut head = 0;
    while head < bfs.len() {
        let b = bfs[head];
        head += 1;
        for a in 0..sigma {
            let t = block_of[trans[rep[b] * sigma + a] as usize] as usize;
            if order[t] == u32::MAX {
                order[t] = bfs.len() as u32;
                bfs.push(t);
            }
        }
    }

    let m = bfs.len();
    let mut new_trans = vec![0u32; m * sigma];
    let mut new_acc = vec![false; m];
    for (k, &b) in bfs.iter().enumerate() {
        new_acc[k] = accepting[rep[b]];
        for a in 0..sigma {
            let t = block_of[trans[rep[b] * sigma + a] as usize] as usize;
            new_trans[k * sigma + a] = order[t];
        }
    }
    Dfa::from_table(aps, 0, new_trans, new_acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scltl::{accepts_some_prefix, parse_formula};

    fn dfa_of(text: &str, names: &[&str]) -> (Dfa, Formula, ApList) {
        let aps = ApList::new(names.iter().copied()).unwrap();
        let f = parse_formula(text, &aps).unwrap().desugar();
        (to_dfa(&f, &aps).unwrap(), f, aps)
    }

    #[test]
    fn eventually_has_two_locations() {
        let (d, _, _) = dfa_of("F a", &["a"]);
        assert_eq!(d.n_locations(), 2);
        let q0 = d.initial();
        assert_eq!(d.step(q0, Letter(0)), q0);
        let acc = d.step(q0, Letter(1));
        assert!(d.is_accepting(acc));
        assert!(!d.is_accepting(q0));
        assert!(d.run(&[Letter(1)]).1);
        assert!(!d.run(&[Letter(0), Letter(0)]).1);
    }

    #[test]
    fn until_has_pending_accept_and_trap() {
        let (d, _, _) = dfa_of("a U b", &["a", "b"]);
        assert_eq!(d.n_locations(), 3);
        assert!(d.run(&[Letter(0b01), Letter(0b10)]).1);
        let traps = d.rejecting_traps();
        assert_eq!(traps.iter().filter(|&&t| t).count(), 1);
        let (q, acc) = d.run(&[Letter(0)]);
        assert!(traps[q] && !acc);
    }

    #[test]
    fn false_is_single_rejecting_location() {
        let aps = ApList::new(["a"]).unwrap();
        let d = to_dfa(&Formula::False, &aps).unwrap();
        assert_eq!(d.n_locations(), 1);
        assert!(!d.is_accepting(0));
        assert!(d.rejecting_traps()[0]);
    }

    #[test]
    fn true_accepts_after_one_letter() {
        let aps = ApList::new(["a"]).unwrap();
        let d = to_dfa(&Formula::True, &aps).unwrap();
        assert!(!d.run(&[]).1);
        assert!(d.run(&[Letter(0)]).1);
    }

    #[test]
    fn sugar_is_rejected() {
        let aps = ApList::new(["a"]).unwrap();
        assert_eq!(
            to_dfa(&Formula::eventually(Formula::atom("a")), &aps),
            Err(ScltlError::NotDesugared)
        );
    }

    #[test]
    fn reach_avoid_task_shape() {
        let (d, _, _) = dfa_of(
            "(!obs & !col) U pac & !obs U col",
            &["obs", "pac", "col"],
        );
        // waiting for pac, waiting for col, accept, reject trap
        assert_eq!(d.n_locations(), 4);
        assert!(d.accepting_is_absorbing());
        assert!(d.is_minimal());
        assert!(d.to_dot().contains("doublecircle"));
    }

    #[test]
    fn agrees_with_oracle_on_short_words() {
        let cases: &[(&str, &[&str])] = &[
            ("F a", &["a"]),
            ("a U b", &["a", "b"]),
            ("X a", &["a"]),
            ("(a & !b) U b", &["a", "b"]),
            ("X X a | b U X !a", &["a", "b"]),
            ("F G<=2 a", &["a"]),
            ("F<=2 (a & X b)", &["a", "b"]),
        ];
        for &(text, names) in cases {
            let (d, f, aps) = dfa_of(text, names);
            assert!(d.accepting_is_absorbing(), "{text}");
            assert!(d.is_minimal(), "{text}");
            let sigma = aps.alphabet_size();
            for len in 0..=5u32 {
                for code in 0..sigma.pow(len) {
                    let word: Vec<Letter> = (0..len)
                        .map(|k| Letter((code / sigma.pow(k) % sigma) as u32))
                        .collect();
                    assert_eq!(
                        d.run(&word).1,
                        accepts_some_prefix(&f, &aps, &word),
                        "{text} on {word:?}"
                    );
                }
            }
        }
    }

    #[test]
    fn minimization_merges_equivalent_states() {
        // Two copies of the same waiting state, reached on different letters.
        let aps = ApList::new(["a"]).unwrap();
        let trans = vec![1, 2, 1, 3, 2, 3, 3, 3];
        let acc = vec![false, false, false, true];
        let d = minimize(aps, 0, &trans, &acc);
        assert_eq!(d.n_locations(), 3);
        assert!(d.is_minimal());
        let raw = Dfa::from_table(ApList::new(["a"]).unwrap(), 0, trans, acc);
        assert!(!raw.is_minimal());
    }
}
