//! Dataset ingestion, synthetic fixtures and client partitioning schemes.

mod dataset;
mod distribution;
mod idx;
mod partition;
mod synth;

pub use dataset::Dataset;
pub use distribution::{LabelDistribution, SUM_TOLERANCE};
pub use idx::{cifar_files, load_cifar10, load_mnist, mnist_files, MnistSplit, CIFAR_RECORD, IMAGES_MAGIC, LABELS_MAGIC};
pub use partition::{
    dominant_count, empirical_distribution, partition_8020, partition_from_distribution, partition_uniform,
    sample_dirichlet, sample_multinomial, Partition, ProxyPool,
};
pub use synth::synth_dataset;
