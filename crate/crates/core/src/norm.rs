//! Vector norms used for distances, error sequences, and stopping rules.

use serde::{Deserialize, Serialize};

/// Which norm measures lengths and distances throughout an experiment.
///
/// Everything in this crate works on finite-dimensional real vectors; the
/// Euclidean norm is the default and the maximum norm is available for
/// componentwise analyses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    /// `sqrt(sum_i x_i^2)`
    #[default]
    Euclidean,
    /// `max_i |x_i|`
    Max,
}

impl NormKind {
    /// Norm of a vector.
    pub fn norm(self, v: &[f64]) -> f64 {
        match self {
            NormKind::Euclidean => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
            NormKind::Max => v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs())),
        }
    }

    /// Distance `‖a − b‖` between two vectors of equal length.
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), b.len(), "distance between unequal dimensions");
        match self {
            NormKind::Euclidean => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
            NormKind::Max => a
                .iter()
                .zip(b)
                .fold(0.0_f64, |acc, (x, y)| acc.max((x - y).abs())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn euclidean_matches_hand_values() {
        assert_eq!(NormKind::Euclidean.norm(&[3.0, 4.0]), 5.0);
        assert_eq!(NormKind::Euclidean.distance(&[1.0, 1.0], [1.0, 1.0].as_ref()), 0.0);
        assert_eq!(NormKind::Euclidean.distance(&[0.0], &[0.25]), 0.25);
    }

    #[test]
    fn max_norm_picks_largest_component() {
        assert_eq!(NormKind::Max.norm(&[-0.5, 0.25]), 0.5);
        assert_eq!(NormKind::Max.distance(&[0.0, 1.0], &[0.5, 0.9]), 0.5);
    }

    #[test]
    fn norms_agree_in_one_dimension() {
        for v in [-1.5, -0.25, 0.0, 0.75] {
            assert_eq!(NormKind::Euclidean.norm(&[v]), v.abs());
            assert_eq!(NormKind::Max.norm(&[v]), v.abs());
        }
    }

    #[test]
    fn serde_names_are_lowercase() {
        assert_eq!(serde_json::to_string(&NormKind::Euclidean).unwrap(), "\"euclidean\"");
        let parsed: NormKind = serde_json::from_str("\"max\"").unwrap();
        assert_eq!(parsed, NormKind::Max);
    }
}
