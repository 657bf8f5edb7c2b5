use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use super::Dataset;
use crate::error::{Error, Result};
use crate::rng;

const CENTER_LOW: f64 = 0.2;
const CENTER_HIGH: f64 = 0.8;
const SPREAD: f64 = 0.05;

/// Class-conditional Gaussian blobs clipped to `[0, 1]`.
///
/// Class means are drawn uniformly from `[0.2, 0.8]^dims`; samples add
/// isotropic noise with standard deviation 0.05. Labels cycle `0, 1, .., L-1`
/// so every class is present.
pub fn synth_dataset(labels: usize, n: usize, dims: usize, seed: u64) -> Result<Dataset> {
    if labels < 2 || dims == 0 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 labels and 1 dimension, got {labels} and {dims}"
        )));
    }
    if n < labels {
        return Err(Error::InvalidArgument(format!(
            "need at least one sample per label ({n} < {labels})"
        )));
    }
    let mut rng = rng::rng_from(seed, &[rng::tag::PARTITION, 0x5359_4e54]);
    let means: Vec<Vec<f64>> = (0..labels)
        .map(|_| {
            (0..dims)
                .map(|_| rng.random_range(CENTER_LOW..CENTER_HIGH))
                .collect()
        })
        .collect();
    let noise = Normal::new(0.0, SPREAD).expect("valid normal");
    let mut inputs = Vec::with_capacity(n * dims);
    let mut ys = Vec::with_capacity(n);
    for i in 0..n {
        let label = i % labels;
        ys.push(label);
        for &m in &means[label] {
            inputs.push((m + noise.sample(&mut rng)).clamp(0.0, 1.0));
        }
    }
    Dataset::new(vec![dims], inputs, ys, labels)
}
