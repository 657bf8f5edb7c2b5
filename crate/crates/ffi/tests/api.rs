use std::ffi::{CStr, CString};
use std::ptr;

use fedleak_ffi::*;

fn last_error() -> String {
    let p = fl_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn model_round_trip_and_client_update() {
    unsafe {
        let mut data = ptr::null_mut();
        assert_eq!(fl_dataset_synthetic(3, 60, 4, 1, &mut data), FlStatus::Ok);
        assert_eq!(fl_dataset_len(data), 60);
        assert_eq!(fl_dataset_sample_len(data), 4);

        let hidden = [6usize];
        let mut model = ptr::null_mut();
        assert_eq!(fl_model_mlp(4, hidden.as_ptr(), 1, 3, 9, &mut model), FlStatus::Ok);
        let n = fl_model_param_count(model);
        assert_eq!(n, 4 * 6 + 6 + 6 * 3 + 3);
        let mut params = vec![0.0; n];
        assert_eq!(fl_model_get_params(model, params.as_mut_ptr(), n), FlStatus::Ok);
        params[0] = 0.5;
        assert_eq!(fl_model_set_params(model, params.as_ptr(), n), FlStatus::Ok);
        let mut back = vec![0.0; n];
        fl_model_get_params(model, back.as_mut_ptr(), n);
        assert_eq!(back, params);

        let idx: Vec<usize> = (0..60).collect();
        let mut trained = ptr::null_mut();
        let st = fl_model_client_update(model, data, idx.as_ptr(), 60, 20, 10, 0.5, 0, 0.0, 3, &mut trained);
        assert_eq!(st, FlStatus::Ok);
        let mut acc = 0.0;
        assert_eq!(fl_model_evaluate(trained, data, &mut acc), FlStatus::Ok);
        assert!(acc > 0.9, "accuracy {acc}");

        let st = fl_model_client_update(model, data, idx.as_ptr(), 60, 1, 10, 0.5, 7, 0.0, 3, &mut trained);
        assert_eq!(st, FlStatus::InvalidArgument);
        assert!(last_error().contains("noise kind"));

        fl_model_free(trained);
        fl_model_free(model);
        fl_dataset_free(data);
    }
}

#[test]
fn errors_are_reported() {
    unsafe {
        let mut model = ptr::null_mut();
        let name = CString::new("no-such-model").unwrap();
        assert_eq!(fl_model_new(name.as_ptr(), 0, &mut model), FlStatus::InvalidArgument);
        assert!(model.is_null());
        assert!(!last_error().is_empty());

        assert_eq!(fl_model_new(ptr::null(), 0, &mut model), FlStatus::NullPointer);

        let name = CString::new("mnist-mlp").unwrap();
        assert_eq!(fl_model_new(name.as_ptr(), 0, &mut model), FlStatus::Ok);
        assert!(fl_last_error().is_null());
        let mut small = [0.0; 3];
        assert_eq!(fl_model_get_params(model, small.as_mut_ptr(), 3), FlStatus::Shape);
        fl_model_free(model);

        let missing = CString::new("/nonexistent/images").unwrap();
        let mut data = ptr::null_mut();
        assert_eq!(fl_dataset_load_mnist(missing.as_ptr(), missing.as_ptr(), &mut data), FlStatus::Io);
        assert!(last_error().contains("/nonexistent/images"));

        // Freeing NULL is a no-op.
        fl_model_free(ptr::null_mut());
        fl_dataset_free(ptr::null_mut());
    }
}

#[test]
fn pca_and_dirichlet() {
    unsafe {
        let rows = [1.0, 0.0, 2.0, 0.0, 1.0, 0.0, 2.0, 2.0, 1.0, 3.0, 3.0, 1.0];
        let mut pca = ptr::null_mut();
        assert_eq!(fl_pca_fit(rows.as_ptr(), 4, 3, 2, &mut pca), FlStatus::Ok);
        assert_eq!(fl_pca_dims(pca), 2);
        let mut ev = [0.0; 2];
        assert_eq!(fl_pca_explained_variance(pca, ev.as_mut_ptr(), 2), FlStatus::Ok);
        assert!(ev[0] >= ev[1]);
        let mut out = [0.0; 2];
        assert_eq!(fl_pca_apply(pca, rows.as_ptr(), 3, out.as_mut_ptr(), 2), FlStatus::Ok);
        assert_eq!(fl_pca_apply(pca, rows.as_ptr(), 2, out.as_mut_ptr(), 2), FlStatus::Shape);
        assert_eq!(fl_pca_fit(rows.as_ptr(), 4, 3, 4, &mut pca), FlStatus::InvalidArgument);
        fl_pca_free(pca);

        let mut p = [0.0; 10];
        assert_eq!(fl_dirichlet(1.0, 10, 5, p.as_mut_ptr()), FlStatus::Ok);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert_eq!(fl_dirichlet(0.0, 10, 5, p.as_mut_ptr()), FlStatus::InvalidArgument);
    }
}

#[test]
fn meta_dataset_and_predictor() {
    use fedleak::attack::{MetaDataset, MetaSample};
    use fedleak::data::LabelDistribution;
    let mk = |i: usize| MetaSample {
        x: vec![i as f64 / 10.0, 1.0 - i as f64 / 10.0],
        y: LabelDistribution::one_hot(2, i % 2),
        alpha: 1.0,
    };
    let meta = MetaDataset::new((0..10).map(mk).collect(), (0..4).map(mk).collect()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("meta.bin");
    meta.write_binary(&path).unwrap();
    unsafe {
        let c = CString::new(path.to_str().unwrap()).unwrap();
        let mut m = ptr::null_mut();
        assert_eq!(fl_meta_load(c.as_ptr(), &mut m), FlStatus::Ok);
        assert_eq!(fl_meta_input_dim(m), 2);
        assert_eq!(fl_meta_num_labels(m), 2);
        let hidden = [8usize];
        let mut pred = ptr::null_mut();
        assert_eq!(fl_predictor_train(m, hidden.as_ptr(), 1, 1e-2, 3, 4, 1, &mut pred), FlStatus::Ok);
        let mut q = [0.0; 2];
        assert_eq!(fl_predictor_predict(pred, [0.1, 0.9].as_ptr(), 2, q.as_mut_ptr(), 2), FlStatus::Ok);
        assert!((q[0] + q[1] - 1.0).abs() < 1e-9);
        let (mut ce, mut kl) = (0.0, 0.0);
        assert_eq!(fl_predictor_evaluate(pred, m, &mut ce, &mut kl), FlStatus::Ok);
        assert!(ce.is_finite() && kl >= 0.0);
        fl_predictor_free(pred);
        fl_meta_free(m);
    }
}
