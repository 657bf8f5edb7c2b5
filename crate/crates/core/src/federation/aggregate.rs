use crate::error::{Error, Result};
use crate::nn::ModelParams;

/// Weighted elementwise mean of client parameters (FedAvg).
///
/// Accumulates as a running mean in list order, so identical inputs and
/// one-hot weights reproduce their source exactly.
pub fn aggregate(params_list: &[ModelParams], weights: &[f64]) -> Result<ModelParams> {
    let first = params_list.first().ok_or(Error::Empty("parameter list"))?;
    if weights.len() != params_list.len() {
        return Err(Error::Shape(format!(
            "{} weights for {} parameter sets",
            weights.len(),
            params_list.len()
        )));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::InvalidArgument("aggregation weights must be non-negative".into()));
    }
    for p in &params_list[1..] {
        if !p.is_congruent(first) {
            return Err(Error::Shape("client parameters have different layouts".into()));
        }
    }
    let mut mean = first.clone();
    let mut seen = 0.0;
    for (p, &w) in params_list.iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        seen += w;
        let frac = w / seen;
        for (m, v) in mean.values_mut().zip(p.values()) {
            *m += frac * (v - *m);
        }
    }
    if seen == 0.0 {
        return Err(Error::InvalidArgument("aggregation weights sum to zero".into()));
    }
    Ok(mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ModelSpec;

    fn params(seed: u64) -> ModelParams {
        ModelParams::init(&ModelSpec::mlp(3, &[4], 2).unwrap(), seed).unwrap()
    }

    #[test]
    fn identical_and_one_hot() {
        let a = params(1);
        let b = params(2);
        assert_eq!(aggregate(&[a.clone(), a.clone(), a.clone()], &[1.0, 1.0, 1.0]).unwrap(), a);
        assert_eq!(aggregate(&[a.clone(), b.clone()], &[1.0, 0.0]).unwrap(), a);
        assert_eq!(aggregate(&[a.clone(), b.clone()], &[0.0, 3.0]).unwrap(), b);
    }

    #[test]
    fn equal_weights_give_mean() {
        let a = params(1);
        let b = params(2);
        let m = aggregate(&[a.clone(), b.clone()], &[5.0, 5.0]).unwrap();
        for ((x, y), z) in a.values().zip(b.values()).zip(m.values()) {
            assert!(((x + y) / 2.0 - z).abs() < 1e-15);
        }
    }

    #[test]
    fn shape_mismatch() {
        let other = ModelParams::init(&ModelSpec::mlp(3, &[5], 2).unwrap(), 0).unwrap();
        assert!(matches!(aggregate(&[params(1), other], &[1.0, 1.0]), Err(Error::Shape(_))));
        assert!(aggregate(&[], &[]).is_err());
    }
}
