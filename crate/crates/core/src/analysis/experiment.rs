use std::fmt::Write as _;

use super::cluster::{knn_purity, project_clients, LayerSelector, ProjectionPoint};
use crate::attack::intercept_updates;
use crate::data::{empirical_distribution, partition_8020, sample_dirichlet, Dataset, LabelDistribution, Partition, ProxyPool};
use crate::error::{Error, Result};
use crate::federation::{LocalTraining, NoiseConfig};
use crate::nn::{LossKind, ModelParams, ModelSpec};
use crate::rng;

/// How visualization clients get their data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClientScheme {
    /// `clients_per_label` clients per label, 80% of each client's samples
    /// from its label.
    EightyTwenty { clients_per_label: usize, samples: usize },
    /// Each client draws a Dirichlet(`alpha`) label distribution; sample
    /// sets are disjoint.
    Dirichlet { clients: usize, alpha: f64, samples: usize },
}

/// Builds the client partition and each client's realized label distribution.
pub fn scheme_partition(dataset: &Dataset, scheme: ClientScheme, seed: u64) -> Result<(Partition, Vec<LabelDistribution>)> {
    let partition = match scheme {
        ClientScheme::EightyTwenty {
            clients_per_label,
            samples,
        } => partition_8020(dataset, clients_per_label, samples, rng::derive_seed(seed, &[rng::tag::PARTITION]))?.0,
        ClientScheme::Dirichlet { clients, alpha, samples } => {
            let mut pool = ProxyPool::new(dataset, true);
            let mut sets = Vec::with_capacity(clients);
            for k in 0..clients {
                let mut r = rng::rng_from(seed, &[rng::tag::PARTITION, k as u64]);
                let dist = sample_dirichlet(alpha, dataset.num_labels(), &mut r)?;
                sets.push(pool.draw(&dist, samples, &mut r)?);
            }
            Partition::new(sets, dataset.len())?
        }
    };
    let dists = partition
        .assignments()
        .iter()
        .map(|idx| empirical_distribution(idx, dataset))
        .collect::<Result<Vec<_>>>()?;
    Ok((partition, dists))
}

/// Client models after one local training pass from a shared initialization.
#[derive(Debug, Clone)]
pub struct ClientModels {
    pub params: Vec<ModelParams>,
    pub distributions: Vec<LabelDistribution>,
}

/// Trains every client of `scheme` once from the same initial parameters.
///
/// Reconstruction models train on a copy of the dataset whose labels are all
/// zero, so labels only ever reach the evaluation side.
pub fn train_clients(
    spec: &ModelSpec,
    dataset: &Dataset,
    scheme: ClientScheme,
    hyper: &LocalTraining,
    noise: &NoiseConfig,
    seed: u64,
) -> Result<ClientModels> {
    let (partition, distributions) = scheme_partition(dataset, scheme, seed)?;
    let global = ModelParams::init(spec, rng::derive_seed(seed, &[rng::tag::INIT]))?;
    let scrubbed;
    let train_on = match spec.loss {
        LossKind::CrossEntropy => dataset,
        LossKind::MeanSquaredError => {
            scrubbed = dataset.with_scrubbed_labels();
            &scrubbed
        }
    };
    let params = intercept_updates(spec, &global, train_on, partition.assignments(), hyper, noise, 1, seed)?;
    Ok(ClientModels { params, distributions })
}

/// Projection and purity for one layer selector.
#[derive(Debug, Clone)]
pub struct LayerProjection {
    pub selector: LayerSelector,
    pub points: Vec<ProjectionPoint>,
    pub purity: f64,
}

pub fn project_and_score(models: &ClientModels, selector: LayerSelector, k: usize) -> Result<LayerProjection> {
    let points = project_clients(&models.params, &models.distributions, selector)?;
    let coords: Vec<[f64; 2]> = points.iter().map(ProjectionPoint::coords).collect();
    let labels: Vec<usize> = points.iter().map(|p| p.dominant_label).collect();
    let purity = knn_purity(&coords, &labels, k)?;
    Ok(LayerProjection { selector, points, purity })
}

/// Purity of `k`-NN voting when every client sits at the same point, i.e.
/// before any training.
pub fn untrained_purity(distributions: &[LabelDistribution], k: usize) -> Result<f64> {
    let labels: Vec<usize> = distributions.iter().map(|d| super::dominant_label(d).0).collect();
    knn_purity(&vec![[0.0, 0.0]; labels.len()], &labels, k)
}

/// Trains per-client autoencoders and scores how well their projected
/// parameters cluster by dominant label.
pub fn autoencoder_experiment(
    dataset: &Dataset,
    scheme: ClientScheme,
    hyper: &LocalTraining,
    seed: u64,
    k: usize,
) -> Result<LayerProjection> {
    if dataset.sample_shape() != [784] {
        return Err(Error::Shape(format!(
            "autoencoder expects flat 784-pixel samples, got {:?}",
            dataset.sample_shape()
        )));
    }
    let spec = ModelSpec::mnist_autoencoder();
    let models = train_clients(&spec, dataset, scheme, hyper, &NoiseConfig::NONE, seed)?;
    project_and_score(&models, LayerSelector::All, k)
}

/// `client_id,layer,x,y,dominant_label,dominant_fraction` rows.
pub fn projection_csv(projections: &[LayerProjection]) -> String {
    let mut out = String::from("client_id,layer,x,y,dominant_label,dominant_fraction\n");
    for proj in projections {
        for p in &proj.points {
            let _ = writeln!(
                out,
                "{},{},{:?},{:?},{},{:?}",
                p.client, proj.selector, p.x, p.y, p.dominant_label, p.dominant_fraction
            );
        }
    }
    out
}

/// `layer,k,purity` rows.
pub fn purity_csv(projections: &[LayerProjection], k: usize) -> String {
    let mut out = String::from("layer,k,purity\n");
    for proj in projections {
        let _ = writeln!(out, "{},{k},{:?}", proj.selector, proj.purity);
    }
    out
}
