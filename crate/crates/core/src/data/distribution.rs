use crate::error::{Error, Result};

/// Tolerance on the unit sum of a probability vector.
pub const SUM_TOLERANCE: f64 = 1e-9;

/// Probability vector over class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelDistribution {
    probs: Vec<f64>,
}

impl LabelDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Empty("label distribution"));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidArgument(format!(
                "probabilities must be finite and non-negative: {probs:?}"
            )));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidArgument(format!(
                "probabilities sum to {sum}, not 1"
            )));
        }
        Ok(LabelDistribution { probs })
    }

    pub fn uniform(labels: usize) -> Self {
        LabelDistribution {
            probs: vec![1.0 / labels as f64; labels],
        }
    }

    pub fn one_hot(labels: usize, label: usize) -> Self {
        let mut probs = vec![0.0; labels];
        probs[label] = 1.0;
        LabelDistribution { probs }
    }

    pub fn from_counts(counts: &[usize]) -> Result<Self> {
        let total: usize = counts.iter().sum();
        if total == 0 {
            return Err(Error::Empty("label counts"));
        }
        let probs = counts.iter().map(|&c| c as f64 / total as f64).collect();
        LabelDistribution::new(probs)
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn num_labels(&self) -> usize {
        self.probs.len()
    }

    /// Shannon entropy in nats (`0 ln 0 = 0`).
    pub fn entropy(&self) -> f64 {
        -self
            .probs
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|p| p * p.ln())
            .sum::<f64>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(LabelDistribution::new(vec![0.5, 0.5]).is_ok());
        assert!(LabelDistribution::new(vec![0.5, 0.6]).is_err());
        assert!(LabelDistribution::new(vec![1.5, -0.5]).is_err());
        assert!(LabelDistribution::from_counts(&[0, 0]).is_err());
    }

    #[test]
    fn entropy_of_uniform() {
        assert!((LabelDistribution::uniform(10).entropy() - 10f64.ln()).abs() < 1e-12);
        assert_eq!(LabelDistribution::one_hot(4, 2).entropy(), 0.0);
    }
}
