use fedleak::nn::gradcheck::{run_case, standard_cases};
use fedleak::nn::{apply_sgd, forward, loss, loss_and_grad, ModelParams, ModelSpec, Targets, Tensor};
use proptest::prelude::*;

#[test]
fn analytic_gradients_match_finite_differences() {
    for case in standard_cases() {
        let report = run_case(&case, 20, 11).unwrap();
        for layer in &report.layers {
            assert!(
                layer.max_rel_error < 1e-4,
                "{}: layer {} ({}) rel error {:e}",
                case.name,
                layer.layer,
                layer.kind,
                layer.max_rel_error
            );
        }
        println!("{:<28} max rel error {:.2e}", case.name, report.max_rel_error());
    }
}

#[test]
fn reference_cnn_gradient_spot_check() {
    // One full-size CNN instance: checks only that backprop through the real
    // geometry runs and stays finite; the small cases above check the values.
    let spec = ModelSpec::cifar_cnn();
    let params = ModelParams::init(&spec, 1).unwrap();
    let x = Tensor::new(vec![2, 3, 32, 32], (0..2 * 3072).map(|i| ((i * 7919) % 255) as f64 / 255.0).collect()).unwrap();
    let (l, g) = loss_and_grad(&spec, &params, &x, Targets::Classes(&[1, 8])).unwrap();
    assert!(l.is_finite());
    assert!(g.is_finite());
    assert!(g.is_congruent(&params));
}

fn small_batch() -> impl Strategy<Value = (Vec<f64>, Vec<usize>)> {
    (prop::collection::vec(-2.0f64..2.0, 4 * 6), prop::collection::vec(0usize..3, 4))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_rows_sum_to_one((xs, _) in small_batch(), seed in 0u64..1000) {
        let spec = ModelSpec::mlp(6, &[5], 3).unwrap();
        let params = ModelParams::init(&spec, seed).unwrap();
        let out = forward(&spec, &params, &Tensor::new(vec![4, 6], xs).unwrap()).unwrap();
        for r in 0..4 {
            prop_assert!((out.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn forward_is_deterministic((xs, _) in small_batch(), seed in 0u64..1000) {
        let spec = ModelSpec::mlp(6, &[5], 3).unwrap();
        let params = ModelParams::init(&spec, seed).unwrap();
        let x = Tensor::new(vec![4, 6], xs).unwrap();
        let a = forward(&spec, &params, &x).unwrap();
        let b = forward(&spec, &params, &x).unwrap();
        prop_assert!(a.data().iter().zip(b.data()).all(|(p, q)| p.to_bits() == q.to_bits()));
    }

    #[test]
    fn small_sgd_step_decreases_loss((xs, ys) in small_batch(), seed in 0u64..1000) {
        let spec = ModelSpec::mlp(6, &[5], 3).unwrap();
        let mut params = ModelParams::init(&spec, seed).unwrap();
        let x = Tensor::new(vec![4, 6], xs).unwrap();
        let (before, g) = loss_and_grad(&spec, &params, &x, Targets::Classes(&ys)).unwrap();
        let norm: f64 = g.values().map(|v| v * v).sum();
        prop_assume!(norm > 1e-12);
        apply_sgd(&mut params, &g, 1e-4).unwrap();
        let after = loss(&spec, &params, &x, Targets::Classes(&ys)).unwrap();
        prop_assert!(after < before);
    }

    #[test]
    fn flatten_round_trip(seed in 0u64..10_000) {
        let spec = ModelSpec::cifar_cnn();
        let p = ModelParams::init(&spec, seed).unwrap();
        let flat = p.flatten();
        prop_assert_eq!(flat.len(), spec.param_count());
        prop_assert_eq!(ModelParams::unflatten(&spec, &flat).unwrap(), p);
    }
}
