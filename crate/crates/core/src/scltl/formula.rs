use std::fmt;

/// Syntactically co-safe LTL formula in negation normal form.
///
/// `Eventually`, `BoundedEventually` and `BoundedAlways` are surface sugar;
/// [`Formula::desugar`] rewrites them into the six core connectives.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Formula {
    True,
    False,
    Atom(String),
    NegAtom(String),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Next(Box<Formula>),
    Until(Box<Formula>, Box<Formula>),
    Eventually(Box<Formula>),
    BoundedEventually(u32, Box<Formula>),
    BoundedAlways(u32, Box<Formula>),
}

impl Formula {
    pub fn atom(name: impl Into<String>) -> Self {
        Formula::Atom(name.into())
    }

    pub fn neg_atom(name: impl Into<String>) -> Self {
        Formula::NegAtom(name.into())
    }

    pub fn and(lhs: Formula, rhs: Formula) -> Self {
        Formula::And(Box::new(lhs), Box::new(rhs))
    }

    pub fn or(lhs: Formula, rhs: Formula) -> Self {
        Formula::Or(Box::new(lhs), Box::new(rhs))
    }

    pub fn next(sub: Formula) -> Self {
        Formula::Next(Box::new(sub))
    }

    pub fn until(lhs: Formula, rhs: Formula) -> Self {
        Formula::Until(Box::new(lhs), Box::new(rhs))
    }

    pub fn eventually(sub: Formula) -> Self {
        Formula::Eventually(Box::new(sub))
    }

    pub fn bounded_eventually(n: u32, sub: Formula) -> Self {
        Formula::BoundedEventually(n, Box::new(sub))
    }

    pub fn bounded_always(n: u32, sub: Formula) -> Self {
        Formula::BoundedAlways(n, Box::new(sub))
    }

    /// True when no sugar node remains anywhere in the tree.
    pub fn is_core(&self) -> bool {
        match self {
            Formula::True | Formula::False | Formula::Atom(_) | Formula::NegAtom(_) => true,
            Formula::And(l, r) | Formula::Or(l, r) | Formula::Until(l, r) => {
                l.is_core() && r.is_core()
            }
            Formula::Next(s) => s.is_core(),
            Formula::Eventually(_)
            | Formula::BoundedEventually(..)
            | Formula::BoundedAlways(..) => false,
        }
    }

    /// Rewrites sugar into core connectives.
    ///
    /// `F f` becomes `true U f`; `F<=N f` unrolls to `f | X(f | X(...))` and
    /// `G<=N f` to `f & X(f & X(...))`, each with `N` nested `X`.
    pub fn desugar(&self) -> Formula {
        match self {
            Formula::True => Formula::True,
            Formula::False => Formula::False,
            Formula::Atom(p) => Formula::Atom(p.clone()),
            Formula::NegAtom(p) => Formula::NegAtom(p.clone()),
            Formula::And(l, r) => Formula::and(l.desugar(), r.desugar()),
            Formula::Or(l, r) => Formula::or(l.desugar(), r.desugar()),
            Formula::Next(s) => Formula::next(s.desugar()),
            Formula::Until(l, r) => Formula::until(l.desugar(), r.desugar()),
            Formula::Eventually(s) => Formula::until(Formula::True, s.desugar()),
            Formula::BoundedEventually(n, s) => unroll(*n, s.desugar(), Formula::or),
            Formula::BoundedAlways(n, s) => unroll(*n, s.desugar(), Formula::and),
        }
    }

    /// Atom names in order of first occurrence.
    pub fn atoms(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        self.collect_atoms(&mut out);
        out
    }

    fn collect_atoms<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Formula::True | Formula::False => {}
            Formula::Atom(p) | Formula::NegAtom(p) => {
                if !out.contains(&p.as_str()) {
                    out.push(p);
                }
            }
            Formula::And(l, r) | Formula::Or(l, r) | Formula::Until(l, r) => {
                l.collect_atoms(out);
                r.collect_atoms(out);
            }
            Formula::Next(s)
            | Formula::Eventually(s)
            | Formula::BoundedEventually(_, s)
            | Formula::BoundedAlways(_, s) => s.collect_atoms(out),
        }
    }
}

fn unroll(n: u32, body: Formula, join: fn(Formula, Formula) -> Formula) -> Formula {
    let mut acc = body.clone();
    for _ in 0..n {
        acc = join(body.clone(), Formula::next(acc));
    }
    acc
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::True => write!(f, "true"),
            Formula::False => write!(f, "false"),
            Formula::Atom(p) => write!(f, "{p}"),
            Formula::NegAtom(p) => write!(f, "!{p}"),
            Formula::And(l, r) => write!(f, "({l} & {r})"),
            Formula::Or(l, r) => write!(f, "({l} | {r})"),
            Formula::Next(s) => write!(f, "X {s}"),
            Formula::Until(l, r) => write!(f, "({l} U {r})"),
            Formula::Eventually(s) => write!(f, "F {s}"),
            Formula::BoundedEventually(n, s) => write!(f, "F<={n} {s}"),
            Formula::BoundedAlways(n, s) => write!(f, "G<={n} {s}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn a() -> Formula {
        Formula::atom("a")
    }

    #[test]
    fn eventually_becomes_true_until() {
        assert_eq!(
            Formula::eventually(a()).desugar(),
            Formula::until(Formula::True, a())
        );
    }

    #[test]
    fn zero_depth_bounded_always_is_body() {
        assert_eq!(Formula::bounded_always(0, a()).desugar(), a());
    }

    #[test]
    fn bounded_eventually_unrolls() {
        let expected = Formula::or(a(), Formula::next(Formula::or(a(), Formula::next(a()))));
        assert_eq!(Formula::bounded_eventually(2, a()).desugar(), expected);
    }

    #[test]
    fn desugar_is_idempotent_and_core() {
        let f = Formula::eventually(Formula::bounded_always(
            3,
            Formula::until(a(), Formula::bounded_eventually(1, Formula::atom("b"))),
        ));
        let once = f.desugar();
        assert!(once.is_core());
        assert_eq!(once.desugar(), once);
    }

    #[test]
    fn display_round_trips_through_parser() {
        let aps = crate::scltl::ApList::new(["a", "b"]).unwrap();
        let f = Formula::and(
            Formula::until(Formula::neg_atom("a"), Formula::atom("b")),
            Formula::bounded_always(2, Formula::eventually(a())),
        );
        let text = f.to_string();
        assert_eq!(crate::scltl::parse_formula(&text, &aps).unwrap(), f);
    }
}
