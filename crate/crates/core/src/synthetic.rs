//! Data labeled by a known rectangle, for checking that extraction recovers
//! it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{Category, Dataset};
use crate::error::{Error, Result};
use crate::rules::{Interval, Rectangle};

/// Instances inside `rule` belong to `inside`; all others to the other
/// category.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedRule {
    pub rule: Rectangle,
    pub inside: Category,
}

impl PlantedRule {
    pub fn label(&self, x: &[f64]) -> Category {
        if self.rule.contains(x) {
            self.inside
        } else {
            Category(3 - self.inside.0)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedSpec {
    pub rows: usize,
    /// Attributes beyond the two carrying the rule.
    pub noise_attributes: usize,
    /// Values are uniform on `[0, range)` and rounded to three decimals.
    pub range: f64,
    /// Rule `lower < x1 & x2 <= upper`.
    pub lower: f64,
    pub upper: f64,
    pub seed: u64,
}

impl Default for PlantedSpec {
    fn default() -> Self {
        PlantedSpec {
            rows: 600,
            noise_attributes: 2,
            range: 10.0,
            lower: 5.0,
            upper: 5.0,
            seed: 0,
        }
    }
}

/// Draws `spec.rows` instances and labels them `A` inside the planted rule
/// and `B` elsewhere.
pub fn planted_dataset(spec: &PlantedSpec) -> Result<(Dataset, PlantedRule)> {
    if !(spec.range > 0.0) || spec.rows < 2 {
        return Err(Error::InvalidConfig(
            "planted data needs a positive range and at least two rows".into(),
        ));
    }
    let m = 2 + spec.noise_attributes;
    let rule = Rectangle::unconstrained()
        .constrain(0, Interval::greater_than(spec.lower))
        .constrain(1, Interval::at_most(spec.upper));
    let planted = PlantedRule {
        rule,
        inside: Category(1),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let rows: Vec<Vec<f64>> = (0..spec.rows)
        .map(|_| {
            (0..m)
                .map(|_| (rng.gen::<f64>() * spec.range * 1000.0).floor() / 1000.0)
                .collect()
        })
        .collect();
    let labels: Vec<Category> = rows.iter().map(|x| planted.label(x)).collect();
    let names = (1..=m).map(|j| format!("x{j}")).collect();
    let dataset = Dataset::with_labels(names, rows, Some(labels), vec!["A".into(), "B".into()])?;
    Ok((dataset, planted))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_follow_the_rule() {
        let (data, planted) = planted_dataset(&PlantedSpec::default()).unwrap();
        let labels = data.source_labels().unwrap();
        for (x, &l) in data.rows().iter().zip(labels) {
            assert_eq!(l == Category(1), x[0] > 5.0 && x[1] <= 5.0);
            assert_eq!(planted.label(x), l);
        }
        let inside = labels.iter().filter(|&&l| l == Category(1)).count();
        assert!(inside > 100 && inside < 200, "{inside}");
    }

    #[test]
    fn seeded() {
        let spec = PlantedSpec {
            seed: 4,
            ..Default::default()
        };
        assert_eq!(
            planted_dataset(&spec).unwrap(),
            planted_dataset(&spec).unwrap()
        );
    }
}
