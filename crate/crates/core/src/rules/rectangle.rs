use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::features::{format_bound, FeatureCatalog};

/// Half-open interval `(lower, upper]`; either end may be infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    lower: f64,
    upper: f64,
}

impl Interval {
    /// `None` when the interval is empty (`lower >= upper`).
    pub fn new(lower: f64, upper: f64) -> Option<Self> {
        (lower < upper).then_some(Interval { lower, upper })
    }

    pub fn unbounded() -> Self {
        Interval {
            lower: f64::NEG_INFINITY,
            upper: f64::INFINITY,
        }
    }

    pub fn at_most(upper: f64) -> Self {
        Interval {
            lower: f64::NEG_INFINITY,
            upper,
        }
    }

    pub fn greater_than(lower: f64) -> Self {
        Interval {
            lower,
            upper: f64::INFINITY,
        }
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower < x && x <= self.upper
    }

    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        Interval::new(self.lower.max(other.lower), self.upper.min(other.upper))
    }

    /// Number of finite ends.
    pub fn constraint_count(&self) -> usize {
        usize::from(self.lower.is_finite()) + usize::from(self.upper.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Op {
    #[serde(rename = "≤")]
    AtMost,
    #[serde(rename = ">")]
    GreaterThan,
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Op::AtMost => "≤",
            Op::GreaterThan => ">",
        })
    }
}

/// One `attribute op bound` triple.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constraint {
    pub attribute: usize,
    pub op: Op,
    pub bound: f64,
}

/// A product of per-attribute intervals. Attributes without an entry are
/// unconstrained, so an empty map is the whole instance space.
#[derive(Debug, Clone, PartialEq)]
pub enum Rectangle {
    Empty,
    Bounded(BTreeMap<usize, Interval>),
}

impl Rectangle {
    pub fn unconstrained() -> Self {
        Rectangle::Bounded(BTreeMap::new())
    }

    pub fn is_empty(&self) -> bool {
        matches!(self, Rectangle::Empty)
    }

    pub fn is_unconstrained(&self) -> bool {
        matches!(self, Rectangle::Bounded(c) if c.is_empty())
    }

    /// Intersects the attribute's interval with `interval`.
    pub fn constrain(self, attribute: usize, interval: Interval) -> Self {
        match self {
            Rectangle::Empty => Rectangle::Empty,
            Rectangle::Bounded(mut map) => {
                let merged = match map.get(&attribute) {
                    Some(existing) => existing.intersect(&interval),
                    None => Some(interval),
                };
                match merged {
                    Some(i) => {
                        map.insert(attribute, i);
                        Rectangle::Bounded(map)
                    }
                    None => Rectangle::Empty,
                }
            }
        }
    }

    pub fn intersect(&self, other: &Rectangle) -> Rectangle {
        match (self, other) {
            (Rectangle::Bounded(_), Rectangle::Bounded(theirs)) => theirs
                .iter()
                .fold(self.clone(), |acc, (&a, &i)| acc.constrain(a, i)),
            _ => Rectangle::Empty,
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Rectangle::Empty => false,
            Rectangle::Bounded(map) => map.iter().all(|(&j, i)| i.contains(x[j])),
        }
    }

    pub fn intervals(&self) -> Option<&BTreeMap<usize, Interval>> {
        match self {
            Rectangle::Empty => None,
            Rectangle::Bounded(map) => Some(map),
        }
    }

    /// Constraints ordered by attribute, lower end before upper end.
    pub fn constraints(&self) -> Vec<Constraint> {
        let mut out = Vec::new();
        if let Rectangle::Bounded(map) = self {
            for (&attribute, interval) in map {
                if interval.lower.is_finite() {
                    out.push(Constraint {
                        attribute,
                        op: Op::GreaterThan,
                        bound: interval.lower,
                    });
                }
                if interval.upper.is_finite() {
                    out.push(Constraint {
                        attribute,
                        op: Op::AtMost,
                        bound: interval.upper,
                    });
                }
            }
        }
        out
    }

    pub fn constraint_count(&self) -> usize {
        match self {
            Rectangle::Empty => 0,
            Rectangle::Bounded(map) => map.values().map(Interval::constraint_count).sum(),
        }
    }

    /// Attributes carrying at least one finite bound.
    pub fn attributes(&self) -> Vec<usize> {
        self.intervals()
            .map(|m| m.keys().copied().collect())
            .unwrap_or_default()
    }

    /// Rendering such as `12.85 < Alcohol & 755.0 < Proline`.
    pub fn describe(&self, attribute_names: &[String]) -> String {
        match self {
            Rectangle::Empty => "∅".into(),
            Rectangle::Bounded(map) if map.is_empty() => "any instance".into(),
            Rectangle::Bounded(_) => self
                .constraints()
                .iter()
                .map(|c| {
                    let name = &attribute_names[c.attribute];
                    match c.op {
                        Op::GreaterThan => format!("{} < {name}", format_bound(c.bound)),
                        Op::AtMost => format!("{name} ≤ {}", format_bound(c.bound)),
                    }
                })
                .collect::<Vec<_>>()
                .join(" & "),
        }
    }
}

/// Rectangle of one base vector: every feature whose weight exceeds
/// `theta_w` becomes a constraint. Entries `0..M` give `x_j <= b`, entries
/// `M..2M` give `b < x_j`; constraints on one attribute intersect.
pub fn rectangle_from_base(w: &[f64], theta_w: f64, catalog: &FeatureCatalog) -> Rectangle {
    let m = catalog.len();
    assert_eq!(w.len(), 2 * m, "base vector length must be 2M");
    let mut rect = Rectangle::unconstrained();
    for (i, f) in catalog.features().iter().enumerate() {
        if w[i] > theta_w {
            rect = rect.constrain(f.attribute, Interval::at_most(f.bound));
        }
        if w[i + m] > theta_w {
            rect = rect.constrain(f.attribute, Interval::greater_than(f.bound));
        }
    }
    rect
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn catalog() -> FeatureCatalog {
        FeatureCatalog::from_cut_points(
            vec!["x1".into(), "Alcohol".into()],
            vec![vec![2.0, 5.0], vec![12.85]],
            4,
        )
        .unwrap()
    }

    #[test]
    fn zero_base_is_whole_space() {
        let r = rectangle_from_base(&[0.0; 6], 0.0, &catalog());
        assert!(r.is_unconstrained());
        assert!(r.contains(&[1e9, -1e9]));
    }

    #[test]
    fn complemented_feature() {
        let mut w = vec![0.0; 6];
        w[5] = 0.8;
        let r = rectangle_from_base(&w, 0.1, &catalog());
        assert_eq!(
            r.describe(&["x1".into(), "Alcohol".into()]),
            "12.85 < Alcohol"
        );
    }

    #[test]
    fn contradictory_pair_is_empty() {
        let mut w = vec![0.0; 6];
        w[1] = 1.0; // x1 <= 5
        w[4] = 1.0; // 5 < x1
        assert!(rectangle_from_base(&w, 0.5, &catalog()).is_empty());
    }

    #[test]
    fn tightest_bounds_win() {
        let w = [1.0, 1.0, 0.0, 0.0, 0.0, 0.0];
        let r = rectangle_from_base(&w, 0.5, &catalog());
        assert_eq!(r.intervals().unwrap()[&0], Interval::at_most(2.0));
    }

    #[test]
    fn boundary_semantics() {
        let r = Rectangle::unconstrained().constrain(0, Interval::new(1.0, 2.0).unwrap());
        assert!(r.contains(&[2.0]));
        assert!(!r.contains(&[1.0]));
        assert!(r.contains(&[1.0 + f64::EPSILON]));
        assert!(!r.contains(&[2.0 + 1e-15 * 4.0]));
    }

    fn random_rect(rng: &mut ChaCha8Rng, dims: usize) -> Rectangle {
        let mut r = Rectangle::unconstrained();
        for j in 0..dims {
            if rng.gen_bool(0.6) {
                let a = rng.gen_range(-3i32..3) as f64;
                let b = a + rng.gen_range(-1i32..4) as f64;
                r = match Interval::new(a, b) {
                    Some(i) => r.constrain(j, i),
                    None => Rectangle::Empty,
                };
            }
        }
        r
    }

    proptest! {
        #[test]
        fn intersection_is_and_of_memberships(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_rect(&mut rng, 3);
            let b = random_rect(&mut rng, 3);
            let both = a.intersect(&b);
            for _ in 0..40 {
                // integer grid hits the boundaries often
                let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-4i32..5) as f64).collect();
                prop_assert_eq!(both.contains(&x), a.contains(&x) && b.contains(&x));
            }
        }

        #[test]
        fn larger_threshold_gives_superset(
            w in proptest::collection::vec(0.0f64..1.0, 6),
            t1 in 0.0f64..1.0,
            t2 in 0.0f64..1.0,
            probes in proptest::collection::vec((0.0f64..7.0, 10.0f64..15.0), 30),
        ) {
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let cat = catalog();
            let tight = rectangle_from_base(&w, lo, &cat);
            let loose = rectangle_from_base(&w, hi, &cat);
            for (a, b) in probes {
                let x = [a, b];
                prop_assert!(!tight.contains(&x) || loose.contains(&x));
            }
        }
    }
}
