//! FedAvg simulation: local client training, noise defenses, aggregation.

mod aggregate;
mod client;
mod config;
mod noise;
mod train;

pub use aggregate::aggregate;
pub use client::{client_seed, client_update, ClientResult, LocalTraining};
pub use config::FedConfig;
pub use noise::{add_noise, add_noise_in_place, Injection, NoiseConfig, NoiseKind};
pub use train::{evaluate, fed_train, fed_train_from, round_logs_csv, select_clients, RoundLog};
