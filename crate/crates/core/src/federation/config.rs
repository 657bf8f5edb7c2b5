use crate::error::{Error, Result};

/// FedAvg hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct FedConfig {
    /// Total clients `K`.
    pub clients: usize,
    /// Fraction `C` of clients selected per round.
    pub fraction: f64,
    pub rounds: usize,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl FedConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errors = Vec::new();
        if self.clients == 0 {
            errors.push("client count must be positive".to_string());
        }
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            errors.push("client fraction must be in (0,1]".to_string());
        }
        if self.local_epochs == 0 {
            errors.push("local epochs must be positive".to_string());
        }
        if self.batch_size == 0 {
            errors.push("batch size must be positive".to_string());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            errors.push("learning rate must be positive".to_string());
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errors.join("; ")))
        }
    }

    /// `ceil(C * K)`, at least one.
    pub fn clients_per_round(&self) -> usize {
        clients_per_round(self.clients, self.fraction)
    }
}

pub(crate) fn clients_per_round(clients: usize, fraction: f64) -> usize {
    // The epsilon keeps e.g. 0.1 * 30 = 3.0000000000000004 from rounding up to 4.
    let raw = (fraction * clients as f64 - 1e-9).ceil();
    (raw.max(1.0) as usize).min(clients)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn per_round_count() {
        assert_eq!(clients_per_round(100, 0.1), 10);
        assert_eq!(clients_per_round(30, 0.1), 3);
        assert_eq!(clients_per_round(20, 0.25), 5);
        assert_eq!(clients_per_round(7, 1.0), 7);
        assert_eq!(clients_per_round(7, 0.01), 1);
        assert_eq!(clients_per_round(10, 0.15), 2);
    }

    #[test]
    fn rejects_zero_fraction() {
        let cfg = FedConfig {
            clients: 10,
            fraction: 0.0,
            rounds: 1,
            local_epochs: 1,
            batch_size: 1,
            learning_rate: 0.1,
            seed: 0,
        };
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("client fraction must be in (0,1]"));
    }
}
