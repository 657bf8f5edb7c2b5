use fedleak::analysis::{
    centroid_drift, knn_purity, project_and_score, scheme_partition, semantic_proximity, train_clients,
    untrained_purity, ClientScheme, LayerSelector, ProjectionPoint,
};
use fedleak::data::{synth_dataset, Dataset};
use fedleak::federation::{client_update, LocalTraining, NoiseConfig};
use fedleak::nn::{Layer, LossKind, ModelParams, ModelSpec};
use fedleak::rng;
use proptest::prelude::*;
use rand::Rng;

fn random_points(n: usize, labels: usize, seed: u64) -> (Vec<[f64; 2]>, Vec<usize>) {
    let mut r = rng::rng_from(seed, &[]);
    let pts = (0..n).map(|_| [r.random::<f64>(), r.random::<f64>()]).collect();
    let ls = (0..n).map(|_| r.random_range(0..labels)).collect();
    (pts, ls)
}

#[test]
fn random_labels_score_near_chance() {
    let (pts, labels) = random_points(2000, 10, 5);
    let purity = knn_purity(&pts, &labels, 5).unwrap();
    // Binomial(2000, 0.1) has a standard deviation of about 0.0067.
    assert!((purity - 0.1).abs() < 0.03, "purity {purity}");
}

#[test]
fn coincident_points_vote_by_index() {
    // With every distance zero the k nearest neighbours of i are the k
    // lowest indices other than i.
    let n = 20;
    let labels: Vec<usize> = (0..n).map(|i| (i * 7 + 3) % 4).collect();
    let k = 5;
    let mut hits = 0;
    for i in 0..n {
        let neigh: Vec<usize> = (0..n).filter(|&j| j != i).take(k).collect();
        let mut votes = [0; 4];
        for j in neigh {
            votes[labels[j]] += 1;
        }
        let top = *votes.iter().max().unwrap();
        let winner = votes.iter().position(|&v| v == top).unwrap();
        hits += usize::from(winner == labels[i]);
    }
    let purity = knn_purity(&vec![[0.0, 0.0]; n], &labels, k).unwrap();
    assert_eq!(purity, hits as f64 / n as f64);
}

#[test]
fn semantic_proximity_normalizes_by_mean_centroid_distance() {
    let pts = [[0.0, 0.0], [0.0, 0.0], [1.0, 0.0], [0.0, 2.0], [0.0, 2.0]];
    let labels = [0, 0, 1, 2, 2];
    let mean = (1.0 + 2.0 + 5f64.sqrt()) / 3.0;
    let got = semantic_proximity(&pts, &labels, &[(0, 1), (1, 2)]).unwrap();
    assert!((got[0] - 1.0 / mean).abs() < 1e-12);
    assert!((got[1] - 5f64.sqrt() / mean).abs() < 1e-12);
    assert!(semantic_proximity(&pts, &labels, &[(0, 3)]).is_err());
}

#[test]
fn drift_separates_quartiles() {
    let point = |client, x: f64, fraction| ProjectionPoint {
        client,
        x,
        y: 0.0,
        dominant_label: 0,
        dominant_fraction: fraction,
    };
    // Centroid at x = 0; weakly dominated clients sit farther out.
    let pts = vec![
        point(0, -4.0, 0.2),
        point(1, 4.0, 0.3),
        point(2, -1.0, 0.9),
        point(3, 1.0, 0.95),
        point(4, -2.0, 0.5),
        point(5, 2.0, 0.6),
        point(6, -0.5, 0.99),
        point(7, 0.5, 0.1),
    ];
    let (low, high) = centroid_drift(&pts).unwrap();
    assert!((low - (0.5 + 4.0) / 2.0).abs() < 1e-12);
    assert!((high - (1.0 + 0.5) / 2.0).abs() < 1e-12);
}

fn synthetic_scheme() -> (Dataset, ClientScheme) {
    (
        synth_dataset(5, 3000, 12, 4).unwrap(),
        ClientScheme::EightyTwenty {
            clients_per_label: 6,
            samples: 40,
        },
    )
}

#[test]
fn trained_classifiers_cluster_by_dominant_label() {
    let (data, scheme) = synthetic_scheme();
    let spec = ModelSpec::mlp(12, &[8], 5).unwrap();
    let hyper = LocalTraining {
        epochs: 1,
        batch_size: 8,
        learning_rate: 0.05,
    };
    let models = train_clients(&spec, &data, scheme, &hyper, &NoiseConfig::NONE, 1).unwrap();
    let proj = project_and_score(&models, LayerSelector::All, 5).unwrap();
    let base = untrained_purity(&models.distributions, 5).unwrap();
    assert!(proj.purity >= 0.9, "purity {}", proj.purity);
    assert!(base <= 0.25, "untrained {base}");
    let again = train_clients(&spec, &data, scheme, &hyper, &NoiseConfig::NONE, 1).unwrap();
    assert_eq!(models.params, again.params);
}

#[test]
fn dirichlet_scheme_partitions_are_disjoint() {
    let data = synth_dataset(5, 1000, 3, 2).unwrap();
    let scheme = ClientScheme::Dirichlet {
        clients: 20,
        alpha: 0.3,
        samples: 50,
    };
    let (p, dists) = scheme_partition(&data, scheme, 6).unwrap();
    let mut all = p.assignments().concat();
    all.sort_unstable();
    all.dedup();
    assert_eq!(all.len(), 1000);
    assert_eq!(dists.len(), 20);
}

#[test]
fn reconstruction_training_never_reads_labels() {
    let data = synth_dataset(3, 60, 6, 9).unwrap();
    let relabelled = Dataset::new(
        vec![6],
        (0..60).flat_map(|i| data.input(i).to_vec()).collect(),
        data.labels().iter().map(|l| (l + 1) % 3).collect(),
        3,
    )
    .unwrap();
    let spec = ModelSpec::new(
        vec![6],
        vec![
            Layer::Dense { inputs: 6, outputs: 3 },
            Layer::Relu,
            Layer::Dense { inputs: 3, outputs: 6 },
        ],
        LossKind::MeanSquaredError,
    )
    .unwrap();
    let global = ModelParams::init(&spec, 0).unwrap();
    let hyper = LocalTraining {
        epochs: 2,
        batch_size: 7,
        learning_rate: 0.1,
    };
    let idx: Vec<usize> = (0..60).collect();
    let a = client_update(&spec, &global, &data, &idx, &hyper, &NoiseConfig::NONE, 4).unwrap();
    let b = client_update(&spec, &global, &relabelled, &idx, &hyper, &NoiseConfig::NONE, 4).unwrap();
    assert_eq!(a.params, b.params);
    assert_ne!(a.params, global);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn purity_is_invariant_to_similarity_transforms(
        seed in 0u64..1000,
        angle in 0.0f64..std::f64::consts::TAU,
        scale in 0.1f64..10.0,
        shift in (-5.0f64..5.0, -5.0f64..5.0),
        k in 1usize..8,
    ) {
        let (pts, labels) = random_points(40, 4, seed);
        let (s, c) = angle.sin_cos();
        let moved: Vec<[f64; 2]> = pts
            .iter()
            .map(|p| [scale * (c * p[0] - s * p[1]) + shift.0, scale * (s * p[0] + c * p[1]) + shift.1])
            .collect();
        let a = knn_purity(&pts, &labels, k).unwrap();
        let b = knn_purity(&moved, &labels, k).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn purity_is_invariant_to_point_order(seed in 0u64..1000, k in 1usize..8) {
        let (pts, labels) = random_points(30, 3, seed);
        let perm: Vec<usize> = (0..30).map(|i| (i * 7) % 30).collect();
        let p2: Vec<[f64; 2]> = perm.iter().map(|&i| pts[i]).collect();
        let l2: Vec<usize> = perm.iter().map(|&i| labels[i]).collect();
        prop_assert_eq!(knn_purity(&pts, &labels, k).unwrap(), knn_purity(&p2, &l2, k).unwrap());
    }

    #[test]
    fn purity_is_a_fraction(seed in 0u64..1000, n in 3usize..40, k in 1usize..3) {
        let (pts, labels) = random_points(n, 3, seed);
        let p = knn_purity(&pts, &labels, k).unwrap();
        prop_assert!((0.0..=1.0).contains(&p));
        prop_assert!(((p * n as f64).round() - p * n as f64).abs() < 1e-9);
    }
}
