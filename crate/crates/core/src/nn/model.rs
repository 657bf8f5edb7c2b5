//! Forward pass, exact backpropagation and the two supported losses.

use super::gemm::gemm;
use super::params::{Gradients, ModelParams, ParamRole};
use super::spec::{Layer, LossKind, ModelSpec};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Training targets for one batch.
#[derive(Debug, Clone, Copy)]
pub enum Targets<'a> {
    /// Class indices (cross-entropy only).
    Classes(&'a [usize]),
    /// Per-sample target tensors: probability rows for cross-entropy, or
    /// regression targets shaped like the model output for mean-squared-error.
    Dense(&'a Tensor),
}

/// Activations recorded by a forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct Trace {
    batch: usize,
    /// `acts[0]` is the input, `acts[i + 1]` the output of layer `i`.
    acts: Vec<Vec<f64>>,
    /// Per-sample shapes matching `acts`.
    shapes: Vec<Vec<usize>>,
    /// For max-pool layers, the flat input index that won each output cell.
    argmax: Vec<Option<Vec<usize>>>,
}

impl Trace {
    pub fn batch(&self) -> usize {
        self.batch
    }

    /// Values entering layer `i` (batch-major).
    pub fn layer_input(&self, i: usize) -> &[f64] {
        &self.acts[i]
    }

    pub fn layer_output(&self, i: usize) -> &[f64] {
        &self.acts[i + 1]
    }

    pub fn output(&self) -> Tensor {
        let mut shape = vec![self.batch];
        shape.extend_from_slice(self.shapes.last().expect("trace has input"));
        Tensor::new(shape, self.acts.last().expect("trace has input").clone())
            .expect("trace shapes are consistent")
    }
}

fn check_batch(spec: &ModelSpec, batch: &Tensor) -> Result<()> {
    if batch.shape()[1..] != spec.input_shape[..] {
        return Err(Error::Shape(format!(
            "batch shape {:?} does not match model input {:?}",
            batch.shape(),
            spec.input_shape
        )));
    }
    Ok(())
}

fn param<'p>(params: &'p ModelParams, layer: usize, role: ParamRole) -> Result<&'p Tensor> {
    params
        .get(layer, role)
        .ok_or_else(|| Error::Shape(format!("missing {role:?} for layer {layer}")))
}

pub fn forward_trace(spec: &ModelSpec, params: &ModelParams, batch: &Tensor) -> Result<Trace> {
    check_batch(spec, batch)?;
    if !params.matches_spec(spec) {
        return Err(Error::Shape("parameters do not match the model spec".into()));
    }
    let shapes_out = spec.shape_trace()?;
    let b = batch.rows();
    let mut acts = Vec::with_capacity(spec.layers.len() + 1);
    let mut shapes = Vec::with_capacity(spec.layers.len() + 1);
    let mut argmax = Vec::with_capacity(spec.layers.len());
    acts.push(batch.data().to_vec());
    shapes.push(spec.input_shape.clone());

    for (i, layer) in spec.layers.iter().enumerate() {
        let input = acts.last().expect("non-empty");
        let in_shape = shapes.last().expect("non-empty");
        let mut pool_idx = None;
        let out = match *layer {
            Layer::Dense { inputs, outputs } => {
                let w = param(params, i, ParamRole::Weight)?.data();
                let bias = param(params, i, ParamRole::Bias)?.data();
                let mut y = Vec::with_capacity(b * outputs);
                for _ in 0..b {
                    y.extend_from_slice(bias);
                }
                gemm(b, inputs, outputs, 1.0, input, (inputs, 1), w, (1, inputs), 1.0, &mut y, (outputs, 1));
                y
            }
            Layer::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
            } => {
                let w = param(params, i, ParamRole::Weight)?.data();
                let bias = param(params, i, ParamRole::Bias)?.data();
                let geo = ConvGeometry::new(in_shape, in_channels, kernel, stride);
                let per_in = geo.input_len();
                let per_out = out_channels * geo.positions();
                let mut y = vec![0.0; b * per_out];
                let mut cols = vec![0.0; geo.patch_len() * geo.positions()];
                for s in 0..b {
                    geo.im2col(&input[s * per_in..(s + 1) * per_in], &mut cols);
                    let ys = &mut y[s * per_out..(s + 1) * per_out];
                    for (o, row) in ys.chunks_mut(geo.positions()).enumerate() {
                        row.fill(bias[o]);
                    }
                    gemm(
                        out_channels,
                        geo.patch_len(),
                        geo.positions(),
                        1.0,
                        w,
                        (geo.patch_len(), 1),
                        &cols,
                        (geo.positions(), 1),
                        1.0,
                        ys,
                        (geo.positions(), 1),
                    );
                }
                y
            }
            Layer::MaxPool { size } => {
                let (c, h, w) = (in_shape[0], in_shape[1], in_shape[2]);
                let (oh, ow) = (h / size, w / size);
                let per_in = c * h * w;
                let mut y = Vec::with_capacity(b * c * oh * ow);
                let mut idx = Vec::with_capacity(b * c * oh * ow);
                for s in 0..b {
                    for ch in 0..c {
                        for oy in 0..oh {
                            for ox in 0..ow {
                                let mut best = f64::NEG_INFINITY;
                                let mut best_at = 0;
                                for ky in 0..size {
                                    for kx in 0..size {
                                        let at = s * per_in + (ch * h + oy * size + ky) * w + ox * size + kx;
                                        if input[at] > best || (ky == 0 && kx == 0) {
                                            best = input[at];
                                            best_at = at;
                                        }
                                    }
                                }
                                y.push(best);
                                idx.push(best_at);
                            }
                        }
                    }
                }
                pool_idx = Some(idx);
                y
            }
            Layer::Relu => input.iter().map(|&v| v.max(0.0)).collect(),
            Layer::Flatten => input.clone(),
            Layer::Softmax => {
                let width = in_shape[0];
                let mut y = input.clone();
                for row in y.chunks_mut(width) {
                    softmax_in_place(row);
                }
                y
            }
        };
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                layer: i,
                stage: "forward",
            });
        }
        acts.push(out);
        shapes.push(shapes_out[i].clone());
        argmax.push(pool_idx);
    }
    Ok(Trace {
        batch: b,
        acts,
        shapes,
        argmax,
    })
}

pub fn forward(spec: &ModelSpec, params: &ModelParams, batch: &Tensor) -> Result<Tensor> {
    Ok(forward_trace(spec, params, batch)?.output())
}

fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Mean loss over the batch and its exact gradient.
pub fn loss_and_grad(
    spec: &ModelSpec,
    params: &ModelParams,
    inputs: &Tensor,
    targets: Targets<'_>,
) -> Result<(f64, Gradients)> {
    let trace = forward_trace(spec, params, inputs)?;
    let (loss, delta, start) = output_delta(spec, &trace, targets)?;
    let grads = backward(spec, params, &trace, delta, start)?;
    Ok((loss, grads))
}

/// Mean loss only (no gradient).
pub fn loss(spec: &ModelSpec, params: &ModelParams, inputs: &Tensor, targets: Targets<'_>) -> Result<f64> {
    let trace = forward_trace(spec, params, inputs)?;
    Ok(output_delta(spec, &trace, targets)?.0)
}

/// Loss value, gradient w.r.t. the output of layer `start`, and `start`.
fn output_delta(spec: &ModelSpec, trace: &Trace, targets: Targets<'_>) -> Result<(f64, Vec<f64>, usize)> {
    let b = trace.batch;
    let last = spec.layers.len() - 1;
    let out_len: usize = trace.shapes[last + 1].iter().product();
    let bf = b as f64;
    match spec.loss {
        LossKind::CrossEntropy => {
            // Softmax is fused into the loss: work from the logits.
            let logits = trace.layer_input(last);
            let probs = trace.layer_output(last);
            let mut delta = vec![0.0; b * out_len];
            let mut total = 0.0;
            for r in 0..b {
                let z = &logits[r * out_len..(r + 1) * out_len];
                let p = &probs[r * out_len..(r + 1) * out_len];
                let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
                let d = &mut delta[r * out_len..(r + 1) * out_len];
                match targets {
                    Targets::Classes(classes) => {
                        if classes.len() != b {
                            return Err(Error::Shape(format!("{} targets for batch of {b}", classes.len())));
                        }
                        let y = classes[r];
                        if y >= out_len {
                            return Err(Error::LabelOutOfRange { label: y, num_labels: out_len });
                        }
                        total -= z[y] - max - lse;
                        for j in 0..out_len {
                            d[j] = p[j] / bf;
                        }
                        d[y] -= 1.0 / bf;
                    }
                    Targets::Dense(t) => {
                        if t.shape() != [b, out_len] {
                            return Err(Error::Shape(format!(
                                "target shape {:?}, expected [{b}, {out_len}]",
                                t.shape()
                            )));
                        }
                        let t = t.row(r);
                        let mass: f64 = t.iter().sum();
                        for j in 0..out_len {
                            total -= t[j] * (z[j] - max - lse);
                            d[j] = (p[j] * mass - t[j]) / bf;
                        }
                    }
                }
            }
            let loss = total / bf;
            if !loss.is_finite() {
                return Err(Error::NonFinite { layer: last, stage: "loss" });
            }
            Ok((loss, delta, last.saturating_sub(1)))
        }
        LossKind::MeanSquaredError => {
            let Targets::Dense(t) = targets else {
                return Err(Error::InvalidArgument(
                    "mean-squared-error needs dense targets".into(),
                ));
            };
            let mut expected = vec![b];
            expected.extend_from_slice(&trace.shapes[last + 1]);
            if t.shape() != expected.as_slice() {
                return Err(Error::Shape(format!(
                    "target shape {:?}, expected {expected:?}",
                    t.shape()
                )));
            }
            let y = trace.layer_output(last);
            let scale = 1.0 / (bf * out_len as f64);
            let mut total = 0.0;
            let delta = y
                .iter()
                .zip(t.data())
                .map(|(a, b)| {
                    let e = a - b;
                    total += e * e;
                    2.0 * e * scale
                })
                .collect();
            let loss = total * scale;
            if !loss.is_finite() {
                return Err(Error::NonFinite { layer: last, stage: "loss" });
            }
            Ok((loss, delta, last))
        }
    }
}

fn backward(
    spec: &ModelSpec,
    params: &ModelParams,
    trace: &Trace,
    mut delta: Vec<f64>,
    start: usize,
) -> Result<Gradients> {
    let b = trace.batch;
    let mut grads = ModelParams::zeros(spec);
    // A cross-entropy model with only a softmax layer has nothing to backpropagate.
    if spec.loss == LossKind::CrossEntropy && spec.layers.len() == 1 {
        return Ok(grads);
    }
    for i in (0..=start).rev() {
        let input = trace.layer_input(i);
        let in_shape = &trace.shapes[i];
        let need_input_grad = i > 0;
        let next = match spec.layers[i] {
            Layer::Dense { inputs, outputs } => {
                let w = param(params, i, ParamRole::Weight)?.data();
                let gw = grads.get_mut(i, ParamRole::Weight).expect("layout from spec");
                gemm(outputs, b, inputs, 1.0, &delta, (1, outputs), input, (inputs, 1), 0.0, gw.data_mut(), (inputs, 1));
                let gb = grads.get_mut(i, ParamRole::Bias).expect("layout from spec");
                let gb = gb.data_mut();
                for row in delta.chunks(outputs) {
                    for (g, d) in gb.iter_mut().zip(row) {
                        *g += d;
                    }
                }
                if need_input_grad {
                    let mut dx = vec![0.0; b * inputs];
                    gemm(b, outputs, inputs, 1.0, &delta, (outputs, 1), w, (inputs, 1), 0.0, &mut dx, (inputs, 1));
                    dx
                } else {
                    Vec::new()
                }
            }
            Layer::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
            } => {
                let w = param(params, i, ParamRole::Weight)?.data().to_vec();
                let geo = ConvGeometry::new(in_shape, in_channels, kernel, stride);
                let (per_in, positions, patch) = (geo.input_len(), geo.positions(), geo.patch_len());
                let per_out = out_channels * positions;
                let mut cols = vec![0.0; patch * positions];
                let mut dcols = vec![0.0; patch * positions];
                let mut dx = if need_input_grad { vec![0.0; b * per_in] } else { Vec::new() };
                let mut gw = vec![0.0; out_channels * patch];
                let mut gb = vec![0.0; out_channels];
                for s in 0..b {
                    let dy = &delta[s * per_out..(s + 1) * per_out];
                    geo.im2col(&input[s * per_in..(s + 1) * per_in], &mut cols);
                    gemm(out_channels, positions, patch, 1.0, dy, (positions, 1), &cols, (1, positions), 1.0, &mut gw, (patch, 1));
                    for (o, row) in dy.chunks(positions).enumerate() {
                        gb[o] += row.iter().sum::<f64>();
                    }
                    if need_input_grad {
                        gemm(patch, out_channels, positions, 1.0, &w, (1, patch), dy, (positions, 1), 0.0, &mut dcols, (positions, 1));
                        geo.col2im_add(&dcols, &mut dx[s * per_in..(s + 1) * per_in]);
                    }
                }
                grads.get_mut(i, ParamRole::Weight).expect("layout").data_mut().copy_from_slice(&gw);
                grads.get_mut(i, ParamRole::Bias).expect("layout").data_mut().copy_from_slice(&gb);
                dx
            }
            Layer::MaxPool { .. } => {
                let idx = trace.argmax[i].as_ref().expect("pool trace");
                let mut dx = vec![0.0; input.len()];
                for (&at, &d) in idx.iter().zip(&delta) {
                    dx[at] += d;
                }
                dx
            }
            Layer::Relu => input
                .iter()
                .zip(&delta)
                .map(|(&x, &d)| if x > 0.0 { d } else { 0.0 })
                .collect(),
            Layer::Flatten => delta,
            Layer::Softmax => {
                let width = in_shape[0];
                let p = trace.layer_output(i);
                let mut dx = vec![0.0; delta.len()];
                for ((dxr, pr), dr) in dx.chunks_mut(width).zip(p.chunks(width)).zip(delta.chunks(width)) {
                    let dot: f64 = pr.iter().zip(dr).map(|(a, b)| a * b).sum();
                    for j in 0..width {
                        dxr[j] = pr[j] * (dr[j] - dot);
                    }
                }
                dx
            }
        };
        let layer_grads_finite = grads
            .entries()
            .iter()
            .filter(|e| e.layer == i)
            .all(|e| e.tensor.is_finite());
        if !layer_grads_finite || next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { layer: i, stage: "backward" });
        }
        delta = next;
    }
    Ok(grads)
}

struct ConvGeometry {
    channels: usize,
    height: usize,
    width: usize,
    kernel: usize,
    stride: usize,
    out_h: usize,
    out_w: usize,
}

impl ConvGeometry {
    fn new(in_shape: &[usize], channels: usize, kernel: usize, stride: usize) -> Self {
        let (height, width) = (in_shape[1], in_shape[2]);
        ConvGeometry {
            channels,
            height,
            width,
            kernel,
            stride,
            out_h: (height - kernel) / stride + 1,
            out_w: (width - kernel) / stride + 1,
        }
    }

    fn input_len(&self) -> usize {
        self.channels * self.height * self.width
    }

    fn positions(&self) -> usize {
        self.out_h * self.out_w
    }

    fn patch_len(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    /// `cols[r][p]`, `r = (c, ky, kx)`, `p = (oy, ox)`.
    fn im2col(&self, x: &[f64], cols: &mut [f64]) {
        let positions = self.positions();
        for c in 0..self.channels {
            for ky in 0..self.kernel {
                for kx in 0..self.kernel {
                    let r = (c * self.kernel + ky) * self.kernel + kx;
                    let row = &mut cols[r * positions..(r + 1) * positions];
                    for oy in 0..self.out_h {
                        let src = (c * self.height + oy * self.stride + ky) * self.width + kx;
                        for ox in 0..self.out_w {
                            row[oy * self.out_w + ox] = x[src + ox * self.stride];
                        }
                    }
                }
            }
        }
    }

    fn col2im_add(&self, cols: &[f64], dx: &mut [f64]) {
        let positions = self.positions();
        for c in 0..self.channels {
            for ky in 0..self.kernel {
                for kx in 0..self.kernel {
                    let r = (c * self.kernel + ky) * self.kernel + kx;
                    let row = &cols[r * positions..(r + 1) * positions];
                    for oy in 0..self.out_h {
                        let dst = (c * self.height + oy * self.stride + ky) * self.width + kx;
                        for ox in 0..self.out_w {
                            dx[dst + ox * self.stride] += row[oy * self.out_w + ox];
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::apply_sgd;

    fn single(layers: Vec<Layer>, input: Vec<usize>, loss: LossKind) -> ModelSpec {
        ModelSpec::new(input, layers, loss).unwrap()
    }

    #[test]
    fn uniform_softmax_and_cross_entropy() {
        let spec = ModelSpec::mlp(3, &[], 10).unwrap();
        let params = ModelParams::zeros(&spec);
        let x = Tensor::new(vec![2, 3], vec![0.3, -1.0, 2.0, 0.0, 0.5, 0.1]).unwrap();
        let out = forward(&spec, &params, &x).unwrap();
        assert!(out.data().iter().all(|&p| (p - 0.1).abs() < 1e-15));
        let (l, _) = loss_and_grad(&spec, &params, &x, Targets::Classes(&[3, 7])).unwrap();
        assert!((l - 10f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn relu_forward() {
        let spec = single(vec![Layer::Relu], vec![2], LossKind::MeanSquaredError);
        let x = Tensor::new(vec![1, 2], vec![-1.0, 2.0]).unwrap();
        let out = forward(&spec, &ModelParams::zeros(&spec), &x).unwrap();
        assert_eq!(out.data(), &[0.0, 2.0]);
    }

    #[test]
    fn identity_dense_reproduces_input() {
        let spec = single(
            vec![Layer::Dense { inputs: 3, outputs: 3 }],
            vec![3],
            LossKind::MeanSquaredError,
        );
        let mut eye = vec![0.0; 9];
        for i in 0..3 {
            eye[i * 4] = 1.0;
        }
        eye.extend([0.0; 3]);
        let params = ModelParams::unflatten(&spec, &eye).unwrap();
        let x = Tensor::new(vec![2, 3], vec![1.5, -2.0, 0.25, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!(forward(&spec, &params, &x).unwrap(), x);
    }

    #[test]
    fn perfect_reconstruction_has_zero_loss_and_gradient() {
        let spec = single(
            vec![Layer::Dense { inputs: 2, outputs: 2 }],
            vec![2],
            LossKind::MeanSquaredError,
        );
        let params = ModelParams::unflatten(&spec, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        let x = Tensor::new(vec![2, 2], vec![0.2, 0.4, 0.6, 0.8]).unwrap();
        let (l, g) = loss_and_grad(&spec, &params, &x, Targets::Dense(&x)).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.values().all(|&v| v == 0.0));
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let spec = ModelSpec::mnist_mlp();
        let params = ModelParams::zeros(&spec);
        let x = Tensor::zeros(vec![1, 10]);
        assert!(matches!(forward(&spec, &params, &x), Err(Error::Shape(_))));
    }

    #[test]
    fn non_finite_input_names_the_layer() {
        let spec = ModelSpec::mlp(2, &[3], 2).unwrap();
        let params = ModelParams::init(&spec, 0).unwrap();
        let x = Tensor::new(vec![1, 2], vec![f64::INFINITY, 1.0]).unwrap();
        match loss_and_grad(&spec, &params, &x, Targets::Classes(&[0])) {
            Err(Error::NonFinite { layer, .. }) => assert_eq!(layer, 0),
            other => panic!("expected non-finite error, got {other:?}"),
        }
    }

    #[test]
    fn one_small_step_decreases_loss() {
        let spec = ModelSpec::mlp(4, &[5], 3).unwrap();
        let mut params = ModelParams::init(&spec, 3).unwrap();
        let x = Tensor::new(vec![3, 4], (0..12).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
        let y = [0, 2, 1];
        let (before, g) = loss_and_grad(&spec, &params, &x, Targets::Classes(&y)).unwrap();
        apply_sgd(&mut params, &g, 1e-3).unwrap();
        let after = loss(&spec, &params, &x, Targets::Classes(&y)).unwrap();
        assert!(after < before);
    }

    #[test]
    fn max_pool_routes_gradient_to_winner() {
        let spec = single(
            vec![Layer::MaxPool { size: 2 }, Layer::Flatten],
            vec![1, 2, 2],
            LossKind::MeanSquaredError,
        );
        let x = Tensor::new(vec![1, 1, 2, 2], vec![0.1, 0.9, 0.3, 0.2]).unwrap();
        let out = forward(&spec, &ModelParams::zeros(&spec), &x).unwrap();
        assert_eq!(out.data(), &[0.9]);
    }
}
