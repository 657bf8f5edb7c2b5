//! Central finite-difference gradient checking.
//!
//! The checker only evaluates losses; it never looks at the analytic
//! backward pass it is checking.

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use super::model::{forward_trace, loss, loss_and_grad, Targets};
use super::params::ModelParams;
use super::spec::{InitScheme, Layer, LossKind, ModelSpec};
use super::tensor::Tensor;
use crate::error::Result;
use crate::rng;

pub const DEFAULT_STEP: f64 = 1e-5;
/// Denominator floor for the relative error of gradients that are ~0.
pub const REL_FLOOR: f64 = 1e-8;

/// `|a - b| / max(|a|, |b|, REL_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

#[derive(Debug, Clone)]
pub struct GradCheckCase {
    pub name: String,
    /// Layer kind the case is built around.
    pub focus: &'static str,
    pub spec: ModelSpec,
    pub batch: usize,
}

#[derive(Debug, Clone)]
pub struct LayerError {
    pub layer: usize,
    pub kind: &'static str,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone)]
pub struct CaseReport {
    pub name: String,
    pub focus: &'static str,
    pub loss: LossKind,
    pub instances: usize,
    pub layers: Vec<LayerError>,
}

impl CaseReport {
    pub fn max_rel_error(&self) -> f64 {
        self.layers.iter().map(|l| l.max_rel_error).fold(0.0, f64::max)
    }
}

/// Compares analytic gradients against central differences for every parameter.
/// Returns the worst relative error per parameterized layer.
pub fn check_gradients(
    spec: &ModelSpec,
    params: &ModelParams,
    inputs: &Tensor,
    targets: Targets<'_>,
    step: f64,
) -> Result<Vec<LayerError>> {
    let (_, grads) = loss_and_grad(spec, params, inputs, targets)?;
    let base = params.flatten();
    let analytic = grads.flatten();
    let mut owner = Vec::with_capacity(base.len());
    for e in params.entries() {
        owner.extend(std::iter::repeat_n(e.layer, e.tensor.len()));
    }
    let mut worst: Vec<LayerError> = spec
        .param_layers()
        .into_iter()
        .map(|layer| LayerError {
            layer,
            kind: spec.layers[layer].kind(),
            max_rel_error: 0.0,
        })
        .collect();
    let mut probe = base.clone();
    for j in 0..base.len() {
        probe[j] = base[j] + step;
        let up = loss(spec, &ModelParams::unflatten(spec, &probe)?, inputs, targets)?;
        probe[j] = base[j] - step;
        let down = loss(spec, &ModelParams::unflatten(spec, &probe)?, inputs, targets)?;
        probe[j] = base[j];
        let numeric = (up - down) / (2.0 * step);
        let err = relative_error(analytic[j], numeric);
        let slot = worst
            .iter_mut()
            .find(|w| w.layer == owner[j])
            .expect("every value belongs to a parameterized layer");
        slot.max_rel_error = slot.max_rel_error.max(err);
    }
    Ok(worst)
}

/// One small network per layer kind, each paired with both losses.
pub fn standard_cases() -> Vec<GradCheckCase> {
    let dense = |i, o| Layer::Dense { inputs: i, outputs: o };
    let conv = |i, o, k, s| Layer::Conv2d {
        in_channels: i,
        out_channels: o,
        kernel: k,
        stride: s,
    };
    let mut cases = Vec::new();
    let mut push = |focus: &'static str, input: Vec<usize>, body: Vec<Layer>, head_in: usize| {
        for loss in [LossKind::CrossEntropy, LossKind::MeanSquaredError] {
            let mut layers = body.clone();
            let name = match loss {
                LossKind::CrossEntropy => {
                    layers.push(dense(head_in, 3));
                    layers.push(Layer::Softmax);
                    format!("{focus}-cross-entropy")
                }
                LossKind::MeanSquaredError => {
                    layers.push(dense(head_in, 3));
                    if focus == "softmax" {
                        layers.push(Layer::Softmax);
                    }
                    format!("{focus}-mse")
                }
            };
            let spec = ModelSpec::new(input.clone(), layers, loss)
                .expect("gradcheck cases are valid")
                .with_init(InitScheme::HeUniform);
            cases.push(GradCheckCase {
                name,
                focus,
                spec,
                batch: 3,
            });
        }
    };
    push("dense", vec![5], vec![dense(5, 4)], 4);
    push("relu", vec![5], vec![dense(5, 6), Layer::Relu], 6);
    push("conv2d", vec![2, 6, 6], vec![conv(2, 3, 3, 1), Layer::Flatten], 3 * 4 * 4);
    push("conv2d-strided", vec![2, 7, 7], vec![conv(2, 2, 3, 2), Layer::Flatten], 2 * 3 * 3);
    push(
        "maxpool",
        vec![1, 6, 6],
        vec![conv(1, 2, 3, 1), Layer::MaxPool { size: 2 }, Layer::Flatten],
        2 * 2 * 2,
    );
    push("flatten", vec![2, 3, 3], vec![Layer::Flatten], 18);
    push("softmax", vec![4], vec![], 4);
    cases
}

/// Minimum distance of any ReLU input from its kink and of any pooling
/// winner from the runner-up. Finite differences straddling either are meaningless.
fn kink_margin(spec: &ModelSpec, params: &ModelParams, inputs: &Tensor) -> Result<f64> {
    let trace = forward_trace(spec, params, inputs)?;
    let shapes = spec.shape_trace()?;
    let mut margin = f64::INFINITY;
    for (i, layer) in spec.layers.iter().enumerate() {
        match *layer {
            Layer::Relu => {
                for v in trace.layer_input(i) {
                    margin = margin.min(v.abs());
                }
            }
            Layer::MaxPool { size } => {
                let in_shape = if i == 0 { &spec.input_shape } else { &shapes[i - 1] };
                let (c, h, w) = (in_shape[0], in_shape[1], in_shape[2]);
                let x = trace.layer_input(i);
                for s in 0..trace.batch() {
                    for ch in 0..c {
                        for oy in 0..h / size {
                            for ox in 0..w / size {
                                let mut vals: Vec<f64> = (0..size * size)
                                    .map(|q| {
                                        let (ky, kx) = (q / size, q % size);
                                        x[s * c * h * w + (ch * h + oy * size + ky) * w + ox * size + kx]
                                    })
                                    .collect();
                                vals.sort_by(|a, b| b.total_cmp(a));
                                margin = margin.min(vals[0] - vals[1]);
                            }
                        }
                    }
                }
            }
            _ => {}
        }
    }
    Ok(margin)
}

/// Runs `instances` random instances of one case and keeps the worst error per layer.
pub fn run_case(case: &GradCheckCase, instances: usize, seed: u64) -> Result<CaseReport> {
    let spec = &case.spec;
    let out_len = spec.output_len();
    let mut worst: Vec<LayerError> = Vec::new();
    let mut done = 0;
    let mut attempt = 0u64;
    while done < instances {
        attempt += 1;
        let mut rng = rng::rng_from(seed, &[done as u64, attempt]);
        let params = ModelParams::init(spec, rng.random())?;
        let mut shape = vec![case.batch];
        shape.extend_from_slice(&spec.input_shape);
        let n: usize = shape.iter().product();
        let inputs = Tensor::new(shape, (0..n).map(|_| StandardNormal.sample(&mut rng)).collect())?;
        if kink_margin(spec, &params, &inputs)? < 1e-3 {
            continue;
        }
        let report = match spec.loss {
            LossKind::CrossEntropy => {
                if done % 2 == 0 {
                    let classes: Vec<usize> = (0..case.batch).map(|_| rng.random_range(0..out_len)).collect();
                    check_gradients(spec, &params, &inputs, Targets::Classes(&classes), DEFAULT_STEP)?
                } else {
                    let mut soft = Vec::with_capacity(case.batch * out_len);
                    for _ in 0..case.batch {
                        let row: Vec<f64> = (0..out_len).map(|_| rng.random::<f64>() + 1e-3).collect();
                        let sum: f64 = row.iter().sum();
                        soft.extend(row.into_iter().map(|v| v / sum));
                    }
                    let t = Tensor::new(vec![case.batch, out_len], soft)?;
                    check_gradients(spec, &params, &inputs, Targets::Dense(&t), DEFAULT_STEP)?
                }
            }
            LossKind::MeanSquaredError => {
                let mut shape = vec![case.batch];
                shape.extend(spec.output_shape());
                let t = Tensor::new(shape, (0..case.batch * out_len).map(|_| StandardNormal.sample(&mut rng)).collect())?;
                check_gradients(spec, &params, &inputs, Targets::Dense(&t), DEFAULT_STEP)?
            }
        };
        if worst.is_empty() {
            worst = report;
        } else {
            for (w, r) in worst.iter_mut().zip(report) {
                w.max_rel_error = w.max_rel_error.max(r.max_rel_error);
            }
        }
        done += 1;
    }
    Ok(CaseReport {
        name: case.name.clone(),
        focus: case.focus,
        loss: spec.loss,
        instances,
        layers: worst,
    })
}
