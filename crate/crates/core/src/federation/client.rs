use rand::seq::SliceRandom;

use super::noise::{add_noise_in_place, Injection, NoiseConfig};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{apply_sgd, loss_and_grad, LossKind, ModelParams, ModelSpec, Targets};
use crate::rng;

/// Local training hyperparameters `(E, B, eta)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalTraining {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

#[derive(Debug, Clone)]
pub struct ClientResult {
    pub params: ModelParams,
    /// Mean minibatch loss over all local steps; `None` when no step ran.
    pub mean_loss: Option<f64>,
    pub samples: usize,
}

/// Seed of the stream a client uses in a given round.
pub fn client_seed(seed: u64, round: usize, client: usize) -> u64 {
    rng::derive_seed(seed, &[rng::tag::CLIENT, round as u64, client as u64])
}

/// Runs local SGD from `global` on the client's samples.
///
/// Each epoch shuffles the client's index list in place (carrying the order
/// over between epochs) with a `ChaCha8Rng` seeded from `seed` and the
/// `CLIENT` tag, then walks it in batches of `batch_size`; the last batch may
/// be short. Noise draws come from a separate stream (`NOISE` tag), so a
/// disabled or zero-scale noise config leaves training bit-identical.
///
/// Cross-entropy models train on labels; mean-squared-error models train to
/// reconstruct their inputs and never read labels.
pub fn client_update(
    spec: &ModelSpec,
    global: &ModelParams,
    dataset: &Dataset,
    indices: &[usize],
    hyper: &LocalTraining,
    noise: &NoiseConfig,
    seed: u64,
) -> Result<ClientResult> {
    if indices.is_empty() {
        return Err(Error::Empty("client sample set"));
    }
    if hyper.batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be positive".into()));
    }
    noise.validate()?;
    if spec.loss == LossKind::MeanSquaredError && spec.output_shape() != dataset.sample_shape() {
        return Err(Error::Shape(
            "reconstruction models need output shape equal to the sample shape".into(),
        ));
    }
    let mut order = indices.to_vec();
    let mut shuffle_rng = rng::rng_from(seed, &[rng::tag::CLIENT]);
    let mut noise_rng = rng::rng_from(seed, &[rng::tag::NOISE]);
    let per_gradient = noise.is_active() && noise.injection == Injection::PerGradient;

    let mut params = global.clone();
    let mut loss_sum = 0.0;
    let mut steps = 0usize;
    for _ in 0..hyper.epochs {
        order.shuffle(&mut shuffle_rng);
        for batch in order.chunks(hyper.batch_size) {
            let inputs = dataset.batch(batch)?;
            let (loss, mut grads) = match spec.loss {
                LossKind::CrossEntropy => {
                    let labels = dataset.batch_labels(batch);
                    loss_and_grad(spec, &params, &inputs, Targets::Classes(&labels))?
                }
                LossKind::MeanSquaredError => loss_and_grad(spec, &params, &inputs, Targets::Dense(&inputs))?,
            };
            if per_gradient {
                add_noise_in_place(&mut grads, noise, &mut noise_rng)?;
            }
            apply_sgd(&mut params, &grads, hyper.learning_rate)?;
            loss_sum += loss;
            steps += 1;
        }
    }
    if noise.is_active() && noise.injection == Injection::WeightDelta {
        let mut delta = params.sub(global)?;
        add_noise_in_place(&mut delta, noise, &mut noise_rng)?;
        params = global.clone();
        params.axpy(1.0, &delta)?;
    }
    Ok(ClientResult {
        params,
        mean_loss: (steps > 0).then(|| loss_sum / steps as f64),
        samples: indices.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_dataset;
    use crate::nn::{sgd_step, ModelSpec};

    fn setup() -> (ModelSpec, ModelParams, Dataset) {
        let d = synth_dataset(3, 30, 4, 1).unwrap();
        let spec = ModelSpec::mlp(4, &[5], 3).unwrap();
        let p = ModelParams::init(&spec, 2).unwrap();
        (spec, p, d)
    }

    #[test]
    fn full_batch_single_epoch_is_one_step() {
        let (spec, p, d) = setup();
        let idx: Vec<usize> = (0..30).collect();
        let hyper = LocalTraining { epochs: 1, batch_size: 30, learning_rate: 0.05 };
        let out = client_update(&spec, &p, &d, &idx, &hyper, &NoiseConfig::NONE, 9).unwrap();
        // The gradient is a mean, so sample order inside the batch only reassociates sums.
        let (_, g) = loss_and_grad(&spec, &p, &d.batch(&idx).unwrap(), Targets::Classes(d.labels())).unwrap();
        let expected = sgd_step(&p, &g, 0.05).unwrap();
        for (a, b) in out.params.values().zip(expected.values()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_scale_noise_is_bitwise_noiseless() {
        let (spec, p, d) = setup();
        let idx: Vec<usize> = (0..30).collect();
        let hyper = LocalTraining { epochs: 2, batch_size: 7, learning_rate: 0.05 };
        let clean = client_update(&spec, &p, &d, &idx, &hyper, &NoiseConfig::NONE, 3).unwrap();
        for noise in [NoiseConfig::gaussian(0.0), NoiseConfig::laplace(0.0).with_injection(Injection::WeightDelta)] {
            let other = client_update(&spec, &p, &d, &idx, &hyper, &noise, 3).unwrap();
            assert_eq!(other.params, clean.params);
        }
        let noisy = client_update(&spec, &p, &d, &idx, &hyper, &NoiseConfig::gaussian(0.1), 3).unwrap();
        assert_ne!(noisy.params, clean.params);
    }

    #[test]
    fn errors_on_empty_or_zero_batch() {
        let (spec, p, d) = setup();
        let hyper = LocalTraining { epochs: 1, batch_size: 0, learning_rate: 0.1 };
        assert!(client_update(&spec, &p, &d, &[0], &hyper, &NoiseConfig::NONE, 0).is_err());
        let hyper = LocalTraining { batch_size: 4, ..hyper };
        assert!(matches!(
            client_update(&spec, &p, &d, &[], &hyper, &NoiseConfig::NONE, 0),
            Err(Error::Empty(_))
        ));
    }

    #[test]
    fn zero_epochs_returns_global() {
        let (spec, p, d) = setup();
        let hyper = LocalTraining { epochs: 0, batch_size: 4, learning_rate: 0.1 };
        let out = client_update(&spec, &p, &d, &[0, 1], &hyper, &NoiseConfig::gaussian(0.5), 0).unwrap();
        assert_eq!(out.mean_loss, None);
        assert_eq!(out.params, p);
    }
}
