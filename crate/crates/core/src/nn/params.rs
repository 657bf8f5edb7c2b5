use rand::Rng as _;

use super::spec::{InitScheme, Layer, ModelSpec};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamRole {
    Weight,
    Bias,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamEntry {
    pub layer: usize,
    pub role: ParamRole,
    pub tensor: Tensor,
}

/// Parameter tensors of a model, ordered by layer with the weight before the bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    entries: Vec<ParamEntry>,
}

/// Gradients share the layout of the parameters they were taken against.
pub type Gradients = ModelParams;

impl ModelParams {
    pub fn zeros(spec: &ModelSpec) -> Self {
        let entries = spec
            .param_shapes()
            .into_iter()
            .map(|(layer, role, shape)| ParamEntry {
                layer,
                role,
                tensor: Tensor::zeros(shape),
            })
            .collect();
        ModelParams { entries }
    }

    /// Zero-mean uniform weights scaled by fan-in, zero biases.
    pub fn init(spec: &ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = rng::rng_from(seed, &[rng::tag::INIT]);
        let mut params = ModelParams::zeros(spec);
        for entry in &mut params.entries {
            if entry.role != ParamRole::Weight {
                continue;
            }
            let fan_in = match spec.layers[entry.layer] {
                Layer::Dense { inputs, .. } => inputs,
                Layer::Conv2d {
                    in_channels,
                    kernel,
                    ..
                } => in_channels * kernel * kernel,
                _ => unreachable!("only dense and conv layers own weights"),
            };
            let limit = match spec.init {
                InitScheme::LecunUniform => (1.0 / fan_in as f64).sqrt(),
                InitScheme::HeUniform => (6.0 / fan_in as f64).sqrt(),
            };
            for w in entry.tensor.data_mut() {
                *w = rng.random_range(-limit..limit);
            }
        }
        Ok(params)
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [ParamEntry] {
        &mut self.entries
    }

    pub fn get(&self, layer: usize, role: ParamRole) -> Option<&Tensor> {
        self.entries
            .iter()
            .find(|e| e.layer == layer && e.role == role)
            .map(|e| &e.tensor)
    }

    pub(crate) fn get_mut(&mut self, layer: usize, role: ParamRole) -> Option<&mut Tensor> {
        self.entries
            .iter_mut()
            .find(|e| e.layer == layer && e.role == role)
            .map(|e| &mut e.tensor)
    }

    pub fn num_values(&self) -> usize {
        self.entries.iter().map(|e| e.tensor.len()).sum()
    }

    /// True when both have identical entry layout and shapes.
    pub fn is_congruent(&self, other: &ModelParams) -> bool {
        self.entries.len() == other.entries.len()
            && self.entries.iter().zip(&other.entries).all(|(a, b)| {
                a.layer == b.layer && a.role == b.role && a.tensor.shape() == b.tensor.shape()
            })
    }

    pub(crate) fn check_congruent(&self, other: &ModelParams) -> Result<()> {
        if self.is_congruent(other) {
            Ok(())
        } else {
            Err(Error::Shape("parameter sets have different layouts".into()))
        }
    }

    pub fn matches_spec(&self, spec: &ModelSpec) -> bool {
        let shapes = spec.param_shapes();
        shapes.len() == self.entries.len()
            && shapes.iter().zip(&self.entries).all(|((l, r, s), e)| {
                *l == e.layer && *r == e.role && s.as_slice() == e.tensor.shape()
            })
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_values());
        for e in &self.entries {
            out.extend_from_slice(e.tensor.data());
        }
        out
    }

    pub fn unflatten(spec: &ModelSpec, values: &[f64]) -> Result<Self> {
        let mut params = ModelParams::zeros(spec);
        if values.len() != params.num_values() {
            return Err(Error::Shape(format!(
                "expected {} parameter values, got {}",
                params.num_values(),
                values.len()
            )));
        }
        let mut offset = 0;
        for e in &mut params.entries {
            let n = e.tensor.len();
            e.tensor
                .data_mut()
                .copy_from_slice(&values[offset..offset + n]);
            offset += n;
        }
        Ok(params)
    }

    /// Values of one layer's entries (weight then bias), flattened.
    pub fn layer_values(&self, layer: usize) -> Vec<f64> {
        let mut out = Vec::new();
        for e in self.entries.iter().filter(|e| e.layer == layer) {
            out.extend_from_slice(e.tensor.data());
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|e| e.tensor.is_finite())
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &ModelParams) -> Result<()> {
        self.check_congruent(other)?;
        for (a, b) in self.entries.iter_mut().zip(&other.entries) {
            for (x, y) in a.tensor.data_mut().iter_mut().zip(b.tensor.data()) {
                *x += alpha * y;
            }
        }
        Ok(())
    }

    /// Elementwise `self - other`.
    pub fn sub(&self, other: &ModelParams) -> Result<ModelParams> {
        let mut out = self.clone();
        out.axpy(-1.0, other)?;
        Ok(out)
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.entries
            .iter_mut()
            .flat_map(|e| e.tensor.data_mut().iter_mut())
    }

    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.entries.iter().flat_map(|e| e.tensor.data().iter())
    }
}

/// One plain gradient-descent step: `w - eta * g`.
pub fn sgd_step(params: &ModelParams, grads: &Gradients, eta: f64) -> Result<ModelParams> {
    let mut out = params.clone();
    apply_sgd(&mut out, grads, eta)?;
    Ok(out)
}

/// In-place form of [`sgd_step`].
pub fn apply_sgd(params: &mut ModelParams, grads: &Gradients, eta: f64) -> Result<()> {
    if !(eta >= 0.0 && eta.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "learning rate must be finite and non-negative, got {eta}"
        )));
    }
    params.check_congruent(grads)?;
    for (p, g) in params.entries.iter_mut().zip(&grads.entries) {
        for (w, d) in p.tensor.data_mut().iter_mut().zip(g.tensor.data()) {
            *w -= eta * d;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::spec::LossKind;

    fn tiny() -> ModelSpec {
        ModelSpec::new(
            vec![2],
            vec![
                Layer::Dense {
                    inputs: 2,
                    outputs: 3,
                },
                Layer::Softmax,
            ],
            LossKind::CrossEntropy,
        )
        .unwrap()
    }

    #[test]
    fn init_is_seeded_and_shaped() {
        let spec = tiny();
        let a = ModelParams::init(&spec, 1).unwrap();
        assert_eq!(a, ModelParams::init(&spec, 1).unwrap());
        assert_ne!(a, ModelParams::init(&spec, 2).unwrap());
        assert_eq!(a.get(0, ParamRole::Weight).unwrap().shape(), &[3, 2]);
        let bias = a.get(0, ParamRole::Bias).unwrap();
        assert_eq!(bias.shape(), &[3]);
        assert!(bias.data().iter().all(|&b| b == 0.0));
        let limit = (0.5f64).sqrt();
        assert!(a.get(0, ParamRole::Weight).unwrap().data().iter().all(|w| w.abs() < limit));
    }

    #[test]
    fn sgd_arithmetic() {
        let spec = ModelSpec::new(
            vec![1],
            vec![Layer::Dense {
                inputs: 1,
                outputs: 1,
            }],
            LossKind::MeanSquaredError,
        )
        .unwrap();
        let p = ModelParams::unflatten(&spec, &[1.0, 0.0]).unwrap();
        let g = ModelParams::unflatten(&spec, &[0.5, 0.0]).unwrap();
        let next = sgd_step(&p, &g, 0.1).unwrap();
        assert_eq!(next.flatten(), vec![0.95, 0.0]);
        assert_eq!(sgd_step(&p, &g, 0.0).unwrap(), p);
        assert_eq!(sgd_step(&p, &ModelParams::zeros(&spec), 0.3).unwrap(), p);
    }

    #[test]
    fn unflatten_rejects_wrong_length() {
        assert!(matches!(
            ModelParams::unflatten(&tiny(), &[0.0; 8]),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn sgd_rejects_incongruent_grads() {
        let a = ModelParams::zeros(&tiny());
        let b = ModelParams::zeros(&ModelSpec::mnist_mlp());
        assert!(sgd_step(&a, &b, 0.1).is_err());
    }

    #[test]
    fn mlp_flat_length() {
        let p = ModelParams::init(&ModelSpec::mnist_mlp(), 0).unwrap();
        assert_eq!(p.flatten().len(), 784 * 32 + 32 + 32 * 10 + 10);
    }
}
