//! Model-latent projections of client parameters and cluster-quality scores.

mod cluster;
mod experiment;

pub use cluster::{
    centroid_drift, dominant_label, knn_purity, project_clients, semantic_proximity, LayerSelector, ProjectionPoint,
};
pub use experiment::{
    autoencoder_experiment, project_and_score, projection_csv, purity_csv, scheme_partition, train_clients,
    untrained_purity, ClientModels, ClientScheme, LayerProjection,
};
