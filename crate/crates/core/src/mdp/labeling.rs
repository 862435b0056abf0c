use serde::{Deserialize, Serialize};

use super::MdpError;
use crate::scltl::{ApList, Letter};

/// Closed axis-aligned box `[lo, hi]` in output space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxRegion {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxRegion {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        BoxRegion { lo, hi }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, y: &[f64]) -> bool {
        y.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(&v, (&lo, &hi))| lo <= v && v <= hi)
    }

    /// Whether `[y - eps, y + eps]` (per axis) lies inside the box.
    fn contains_cube(&self, y: &[f64], eps: f64) -> bool {
        y.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(&v, (&lo, &hi))| lo <= v - eps && v + eps <= hi)
    }

    /// Whether `[y - eps, y + eps]` misses the box on some axis.
    fn misses_cube(&self, y: &[f64], eps: f64) -> bool {
        y.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .any(|(&v, (&lo, &hi))| v + eps < lo || v - eps > hi)
    }
}

/// Assigns each atomic proposition a union of closed boxes; a point carries
/// the proposition iff it lies in one of them.
#[derive(Clone, Debug, PartialEq)]
pub struct Labeling {
    aps: ApList,
    dim: usize,
    regions: Vec<Vec<BoxRegion>>,
}

impl Labeling {
    /// `regions` may list propositions in any order; they are stored in the
    /// order of `aps`, and every declared proposition must appear exactly once.
    pub fn new(
        aps: &ApList,
        dim: usize,
        regions: Vec<(String, Vec<BoxRegion>)>,
    ) -> Result<Self, MdpError> {
        let mismatch = || MdpError::ApMismatch {
            labeling: regions.iter().map(|(n, _)| n.clone()).collect(),
            declared: aps.names().to_vec(),
        };
        if regions.len() != aps.len() {
            return Err(mismatch());
        }
        let mut ordered: Vec<Option<Vec<BoxRegion>>> = vec![None; aps.len()];
        for (name, boxes) in &regions {
            let k = aps.index_of(name).ok_or_else(mismatch)?;
            if ordered[k].is_some() {
                return Err(mismatch());
            }
            for b in boxes {
                if b.lo.len() != dim || b.hi.len() != dim {
                    return Err(MdpError::InvalidBox {
                        ap: name.clone(),
                        reason: format!("expected dimension {dim}"),
                    });
                }
                if b.lo.iter().zip(&b.hi).any(|(lo, hi)| !(lo <= hi)) {
                    return Err(MdpError::InvalidBox {
                        ap: name.clone(),
                        reason: "lower corner exceeds upper corner".into(),
                    });
                }
            }
            ordered[k] = Some(boxes.clone());
        }
        Ok(Labeling {
            aps: aps.clone(),
            dim,
            regions: ordered.into_iter().map(Option::unwrap).collect(),
        })
    }

    pub fn aps(&self) -> &ApList {
        &self.aps
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn regions(&self, ap: usize) -> &[BoxRegion] {
        &self.regions[ap]
    }

    fn check_dim(&self, y: &[f64]) -> Result<(), MdpError> {
        if y.len() != self.dim {
            return Err(MdpError::DimensionMismatch {
                expected: self.dim,
                got: y.len(),
            });
        }
        Ok(())
    }
}

/// Letter of output `y`: bit `p` is set iff `y` lies in a box of AP `p`.
pub fn letter_of(lab: &Labeling, y: &[f64]) -> Result<Letter, MdpError> {
    lab.check_dim(y)?;
    let mut letter = Letter::EMPTY;
    for (k, boxes) in lab.regions.iter().enumerate() {
        if boxes.iter().any(|b| b.contains(y)) {
            letter = letter.with(k);
        }
    }
    Ok(letter)
}

/// Over-approximates the letters seen within distance `eps` of `y`.
///
/// Each proposition is classified on the cube `[y - eps, y + eps]`: always
/// present if one of its boxes contains the cube, never present if every
/// box misses it, undecided otherwise. The result is every letter with all
/// "always" bits, no "never" bits, and any subset of undecided bits, sorted
/// ascending.
pub fn eps_letter_set(lab: &Labeling, y: &[f64], eps: f64) -> Result<Vec<Letter>, MdpError> {
    lab.check_dim(y)?;
    if eps == 0.0 {
        return Ok(vec![letter_of(lab, y)?]);
    }
    let mut always = 0u32;
    let mut maybe: Vec<usize> = Vec::new();
    for (k, boxes) in lab.regions.iter().enumerate() {
        if boxes.iter().any(|b| b.contains_cube(y, eps)) {
            always |= 1 << k;
        } else if !boxes.iter().all(|b| b.misses_cube(y, eps)) {
            maybe.push(k);
        }
    }
    let mut out = Vec::with_capacity(1 << maybe.len());
    for sub in 0u32..(1 << maybe.len()) {
        let mut bits = always;
        for (j, &k) in maybe.iter().enumerate() {
            if sub >> j & 1 == 1 {
                bits |= 1 << k;
            }
        }
        out.push(Letter(bits));
    }
    out.sort_unstable();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn robot_like() -> Labeling {
        let aps = ApList::new(["obs", "pac", "col"]).unwrap();
        Labeling::new(
            &aps,
            2,
            vec![
                ("pac".into(), vec![BoxRegion::new(vec![-1.0, -1.0], vec![1.0, 1.0])]),
                ("obs".into(), vec![BoxRegion::new(vec![4.5, -3.0], vec![6.0, 8.5])]),
                ("col".into(), vec![BoxRegion::new(vec![6.0, -9.0], vec![9.0, -6.0])]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn boundary_points_carry_the_proposition() {
        let lab = robot_like();
        assert_eq!(letter_of(&lab, &[1.0, 0.3]).unwrap(), Letter(0b010));
        assert_eq!(letter_of(&lab, &[6.0, -6.0]).unwrap(), Letter(0b100));
    }

    #[test]
    fn empty_letter_away_from_regions() {
        let lab = robot_like();
        assert_eq!(letter_of(&lab, &[-5.0, -7.5]).unwrap(), Letter::EMPTY);
    }

    #[test]
    fn overlapping_boxes_give_both() {
        let aps = ApList::new(["obs", "pac"]).unwrap();
        let unit = BoxRegion::new(vec![0.0], vec![1.0]);
        let lab = Labeling::new(
            &aps,
            1,
            vec![("obs".into(), vec![unit.clone()]), ("pac".into(), vec![unit])],
        )
        .unwrap();
        assert_eq!(letter_of(&lab, &[0.5]).unwrap(), Letter(0b11));
    }

    #[test]
    fn dimension_is_checked() {
        let lab = robot_like();
        assert_eq!(
            letter_of(&lab, &[0.0]),
            Err(MdpError::DimensionMismatch { expected: 2, got: 1 })
        );
    }

    #[test]
    fn labeling_must_cover_declared_aps() {
        let aps = ApList::new(["a", "b"]).unwrap();
        let only_a = vec![("a".to_string(), vec![])];
        assert!(matches!(
            Labeling::new(&aps, 1, only_a),
            Err(MdpError::ApMismatch { .. })
        ));
        let inverted = vec![
            ("a".to_string(), vec![BoxRegion::new(vec![1.0], vec![0.0])]),
            ("b".to_string(), vec![]),
        ];
        assert!(matches!(
            Labeling::new(&aps, 1, inverted),
            Err(MdpError::InvalidBox { .. })
        ));
    }

    #[test]
    fn eps_classification() {
        let aps = ApList::new(["p"]).unwrap();
        let lab = Labeling::new(
            &aps,
            2,
            vec![("p".into(), vec![BoxRegion::new(vec![0.0, 0.0], vec![2.0, 2.0])])],
        )
        .unwrap();
        assert_eq!(eps_letter_set(&lab, &[1.0, 1.0], 0.0).unwrap(), vec![Letter(1)]);
        assert_eq!(eps_letter_set(&lab, &[1.0, 1.0], 0.5).unwrap(), vec![Letter(1)]);
        assert_eq!(
            eps_letter_set(&lab, &[1.8, 1.0], 0.5).unwrap(),
            vec![Letter(0), Letter(1)]
        );
        assert_eq!(eps_letter_set(&lab, &[3.0, 1.0], 0.5).unwrap(), vec![Letter(0)]);
    }

    proptest! {
        #[test]
        fn eps_set_contains_nearby_letters(
            y0 in -12.0f64..12.0, y1 in -12.0f64..12.0,
            eps in 0.0f64..2.0,
            r in 0.0f64..1.0, theta in 0.0f64..std::f64::consts::TAU,
        ) {
            let lab = robot_like();
            let y = [y0, y1];
            let set = eps_letter_set(&lab, &y, eps).unwrap();
            prop_assert!(set.contains(&letter_of(&lab, &y).unwrap()));
            let yp = [y0 + eps * r * theta.cos(), y1 + eps * r * theta.sin()];
            prop_assert!(set.contains(&letter_of(&lab, &yp).unwrap()));
        }

        #[test]
        fn eps_set_grows_with_eps(y0 in -12.0f64..12.0, y1 in -12.0f64..12.0,
                                  e1 in 0.0f64..2.0, e2 in 0.0f64..2.0) {
            let lab = robot_like();
            let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
            let small = eps_letter_set(&lab, &[y0, y1], lo).unwrap();
            let big = eps_letter_set(&lab, &[y0, y1], hi).unwrap();
            prop_assert!(small.iter().all(|l| big.contains(l)));
        }
    }
}
