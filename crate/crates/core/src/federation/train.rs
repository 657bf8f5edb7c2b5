use std::fmt::Write as _;

use rand::seq::index;
use rayon::prelude::*;

use super::aggregate::aggregate;
use super::client::{client_seed, client_update, LocalTraining};
use super::config::{clients_per_round, FedConfig};
use super::noise::NoiseConfig;
use crate::data::{Dataset, Partition};
use crate::error::{Error, Result};
use crate::nn::{forward, ModelParams, ModelSpec};
use crate::rng;

/// One FedAvg round as recorded for plotting.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundLog {
    /// 1-based round index.
    pub round: usize,
    pub selected: Vec<usize>,
    /// Global test accuracy after aggregation.
    pub accuracy: f64,
    pub mean_client_loss: Option<f64>,
}

/// Picks `ceil(C*K)` distinct client ids uniformly without replacement,
/// returned in ascending order.
pub fn select_clients(clients: usize, fraction: f64, round: usize, seed: u64) -> Vec<usize> {
    let m = clients_per_round(clients, fraction);
    let mut r = rng::rng_from(seed, &[rng::tag::SELECT, round as u64]);
    let mut ids = index::sample(&mut r, clients, m).into_vec();
    ids.sort_unstable();
    ids
}

/// Fraction of samples whose argmax prediction equals the label.
/// Ties in the argmax go to the lowest class index.
pub fn evaluate(spec: &ModelSpec, params: &ModelParams, test_set: &Dataset) -> Result<f64> {
    if test_set.is_empty() {
        return Err(Error::Empty("test set"));
    }
    const CHUNK: usize = 1000;
    let idx: Vec<usize> = (0..test_set.len()).collect();
    let correct: Result<Vec<usize>> = idx
        .par_chunks(CHUNK)
        .map(|chunk| {
            let out = forward(spec, params, &test_set.batch(chunk)?)?;
            Ok(chunk
                .iter()
                .enumerate()
                .filter(|&(r, &i)| argmax(out.row(r)) == test_set.labels()[i])
                .count())
        })
        .collect();
    Ok(correct?.iter().sum::<usize>() as f64 / test_set.len() as f64)
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Runs FedAvg from freshly initialised global parameters.
pub fn fed_train(
    spec: &ModelSpec,
    fed: &FedConfig,
    noise: &NoiseConfig,
    dataset: &Dataset,
    partition: &Partition,
    test_set: &Dataset,
) -> Result<(ModelParams, Vec<RoundLog>)> {
    let init = ModelParams::init(spec, rng::derive_seed(fed.seed, &[rng::tag::INIT]))?;
    fed_train_from(spec, fed, noise, dataset, partition, test_set, init, |_| {})
}

/// Runs FedAvg from `initial`, calling `on_round` after each round.
///
/// Selected clients train in parallel; their results are put back in
/// ascending id order before aggregation, so the outcome does not depend on
/// scheduling.
#[allow(clippy::too_many_arguments)]
pub fn fed_train_from(
    spec: &ModelSpec,
    fed: &FedConfig,
    noise: &NoiseConfig,
    dataset: &Dataset,
    partition: &Partition,
    test_set: &Dataset,
    initial: ModelParams,
    mut on_round: impl FnMut(&RoundLog),
) -> Result<(ModelParams, Vec<RoundLog>)> {
    fed.validate()?;
    noise.validate()?;
    if partition.clients() != fed.clients {
        return Err(Error::InvalidArgument(format!(
            "partition has {} clients, config expects {}",
            partition.clients(),
            fed.clients
        )));
    }
    if !initial.matches_spec(spec) {
        return Err(Error::Shape("initial parameters do not match the model".into()));
    }
    let hyper = LocalTraining {
        epochs: fed.local_epochs,
        batch_size: fed.batch_size,
        learning_rate: fed.learning_rate,
    };
    let mut global = initial;
    let mut logs = Vec::with_capacity(fed.rounds);
    for round in 1..=fed.rounds {
        let selected = select_clients(fed.clients, fed.fraction, round, fed.seed);
        let results: Result<Vec<_>> = selected
            .par_iter()
            .map(|&k| {
                client_update(
                    spec,
                    &global,
                    dataset,
                    partition.client(k),
                    &hyper,
                    noise,
                    client_seed(fed.seed, round, k),
                )
            })
            .collect();
        let results = results?;
        let weights: Vec<f64> = results.iter().map(|r| r.samples as f64).collect();
        let losses: Vec<f64> = results.iter().filter_map(|r| r.mean_loss).collect();
        let params: Vec<ModelParams> = results.into_iter().map(|r| r.params).collect();
        global = aggregate(&params, &weights)?;
        let log = RoundLog {
            round,
            selected,
            accuracy: evaluate(spec, &global, test_set)?,
            mean_client_loss: (!losses.is_empty()).then(|| losses.iter().sum::<f64>() / losses.len() as f64),
        };
        on_round(&log);
        logs.push(log);
    }
    Ok((global, logs))
}

/// Renders round logs as CSV with columns
/// `round,accuracy,mean_client_loss,selected_ids` (ids `;`-separated).
pub fn round_logs_csv(logs: &[RoundLog]) -> String {
    let mut out = String::from("round,accuracy,mean_client_loss,selected_ids\n");
    for log in logs {
        let ids: Vec<String> = log.selected.iter().map(|i| i.to_string()).collect();
        let loss = log.mean_client_loss.map(|l| l.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{},{},{}", log.round, log.accuracy, loss, ids.join(";"));
    }
    out
}
