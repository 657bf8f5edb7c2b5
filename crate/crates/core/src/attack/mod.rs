//! Label-distribution inference from uploaded client parameters.
//!
//! The adversary trains dummy clients on proxy data with known label
//! distributions, projects their parameters with PCA, and fits a predictor
//! from projected parameters to distributions. Intercepted updates from real
//! clients then go through the same projection and predictor.

mod meta;
mod pca;
mod predictor;

use rayon::prelude::*;

pub use meta::{build_meta_dataset, MetaConfig, MetaDataset, MetaSample, PcaAudit};
pub use pca::{pca_fit, pca_fit_with, symmetric_eigen, PcaMethod, PcaModel, JACOBI_TOLERANCE};
pub use predictor::{
    distribution_losses, evaluate_predictor, predict_distribution, train_predictor, EpochRecord, Predictor,
    PredictorSpec, PROB_FLOOR,
};

use crate::data::Dataset;
use crate::error::Result;
use crate::federation::{client_seed, client_update, LocalTraining, NoiseConfig};
use crate::nn::{ModelParams, ModelSpec};

/// Parameters each client uploads after training from `global` in `round`.
pub fn intercept_updates(
    spec: &ModelSpec,
    global: &ModelParams,
    dataset: &Dataset,
    clients: &[Vec<usize>],
    hyper: &LocalTraining,
    noise: &NoiseConfig,
    round: usize,
    seed: u64,
) -> Result<Vec<ModelParams>> {
    clients
        .par_iter()
        .enumerate()
        .map(|(k, idx)| {
            client_update(spec, global, dataset, idx, hyper, noise, client_seed(seed, round, k)).map(|r| r.params)
        })
        .collect()
}
