use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layer {
    Dense {
        inputs: usize,
        outputs: usize,
    },
    /// Valid (unpadded) 2-D convolution over `[channels, height, width]` samples.
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
    },
    /// Non-overlapping max pooling with window and stride `size`; trailing
    /// rows and columns that do not fill a window are dropped.
    MaxPool {
        size: usize,
    },
    Relu,
    Flatten,
    Softmax,
}

impl Layer {
    pub fn has_params(&self) -> bool {
        matches!(self, Layer::Dense { .. } | Layer::Conv2d { .. })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Dense { .. } => "dense",
            Layer::Conv2d { .. } => "conv2d",
            Layer::MaxPool { .. } => "maxpool",
            Layer::Relu => "relu",
            Layer::Flatten => "flatten",
            Layer::Softmax => "softmax",
        }
    }

    /// Output shape of one sample, or an error if `input` is incompatible.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let bad = |why: String| Err(Error::InvalidSpec(format!("{self}: {why}")));
        match *self {
            Layer::Dense { inputs, outputs } => {
                if inputs == 0 || outputs == 0 {
                    return bad("zero width".into());
                }
                if input != [inputs] {
                    return bad(format!("expects input [{inputs}], got {input:?}"));
                }
                Ok(vec![outputs])
            }
            Layer::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
            } => {
                if in_channels == 0 || out_channels == 0 || kernel == 0 || stride == 0 {
                    return bad("zero-sized parameter".into());
                }
                let &[c, h, w] = input else {
                    return bad(format!("expects [channels, height, width], got {input:?}"));
                };
                if c != in_channels {
                    return bad(format!("expects {in_channels} channels, got {c}"));
                }
                if h < kernel || w < kernel {
                    return bad(format!("kernel {kernel} larger than {h}x{w} input"));
                }
                Ok(vec![
                    out_channels,
                    (h - kernel) / stride + 1,
                    (w - kernel) / stride + 1,
                ])
            }
            Layer::MaxPool { size } => {
                let &[c, h, w] = input else {
                    return bad(format!("expects [channels, height, width], got {input:?}"));
                };
                if size == 0 || h < size || w < size {
                    return bad(format!("window {size} does not fit {h}x{w} input"));
                }
                Ok(vec![c, h / size, w / size])
            }
            Layer::Relu => Ok(input.to_vec()),
            Layer::Flatten => Ok(vec![input.iter().product()]),
            Layer::Softmax => {
                if input.len() != 1 {
                    return bad(format!("expects a flat input, got {input:?}"));
                }
                Ok(input.to_vec())
            }
        }
    }
}

impl fmt::Display for Layer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Layer::Dense { inputs, outputs } => write!(f, "dense {inputs} {outputs}"),
            Layer::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
            } => write!(f, "conv2d {in_channels} {out_channels} {kernel} {stride}"),
            Layer::MaxPool { size } => write!(f, "maxpool {size}"),
            Layer::Relu => f.write_str("relu"),
            Layer::Flatten => f.write_str("flatten"),
            Layer::Softmax => f.write_str("softmax"),
        }
    }
}

/// Parses the textual form produced by `Display`, e.g. `"dense 784 32"`,
/// `"conv2d 3 8 5 1"` (stride optional, default 1), `"maxpool 2"`, `"relu"`.
impl FromStr for Layer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split_whitespace().collect();
        let err = || Error::InvalidSpec(format!("cannot parse layer {s:?}"));
        let num = |i: usize| -> Result<usize> {
            parts.get(i).ok_or_else(err)?.parse().map_err(|_| err())
        };
        let layer = match parts.first().copied() {
            Some("dense") if parts.len() == 3 => Layer::Dense {
                inputs: num(1)?,
                outputs: num(2)?,
            },
            Some("conv2d") if parts.len() == 4 || parts.len() == 5 => Layer::Conv2d {
                in_channels: num(1)?,
                out_channels: num(2)?,
                kernel: num(3)?,
                stride: if parts.len() == 5 { num(4)? } else { 1 },
            },
            Some("maxpool") if parts.len() == 2 => Layer::MaxPool { size: num(1)? },
            Some("relu") if parts.len() == 1 => Layer::Relu,
            Some("flatten") if parts.len() == 1 => Layer::Flatten,
            Some("softmax") if parts.len() == 1 => Layer::Softmax,
            _ => return Err(err()),
        };
        Ok(layer)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    CrossEntropy,
    MeanSquaredError,
}

/// Weight initialization. Both are zero-mean uniform with biases at zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitScheme {
    /// U(-sqrt(1/fan_in), sqrt(1/fan_in)).
    #[default]
    LecunUniform,
    /// U(-sqrt(6/fan_in), sqrt(6/fan_in)); keeps activations alive through deep ReLU stacks.
    HeUniform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    /// Shape of a single input sample (no batch axis).
    pub input_shape: Vec<usize>,
    pub layers: Vec<Layer>,
    pub loss: LossKind,
    pub init: InitScheme,
}

impl ModelSpec {
    pub fn new(input_shape: Vec<usize>, layers: Vec<Layer>, loss: LossKind) -> Result<Self> {
        let spec = ModelSpec {
            input_shape,
            layers,
            loss,
            init: InitScheme::default(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_init(mut self, init: InitScheme) -> Self {
        self.init = init;
        self
    }

    /// 784 -> 32 -> 10 classifier.
    pub fn mnist_mlp() -> Self {
        ModelSpec::new(
            vec![784],
            vec![
                Layer::Dense {
                    inputs: 784,
                    outputs: 32,
                },
                Layer::Relu,
                Layer::Dense {
                    inputs: 32,
                    outputs: 10,
                },
                Layer::Softmax,
            ],
            LossKind::CrossEntropy,
        )
        .expect("reference MLP is valid")
    }

    /// 784 -> 64 -> 784 autoencoder trained on reconstruction error.
    pub fn mnist_autoencoder() -> Self {
        ModelSpec::new(
            vec![784],
            vec![
                Layer::Dense {
                    inputs: 784,
                    outputs: 64,
                },
                Layer::Relu,
                Layer::Dense {
                    inputs: 64,
                    outputs: 784,
                },
            ],
            LossKind::MeanSquaredError,
        )
        .expect("reference autoencoder is valid")
    }

    /// Two conv/relu/pool stages followed by a dense softmax head, for 3x32x32 inputs.
    pub fn cifar_cnn() -> Self {
        ModelSpec::new(
            vec![3, 32, 32],
            vec![
                Layer::Conv2d {
                    in_channels: 3,
                    out_channels: 8,
                    kernel: 5,
                    stride: 1,
                },
                Layer::Relu,
                Layer::MaxPool { size: 2 },
                Layer::Conv2d {
                    in_channels: 8,
                    out_channels: 16,
                    kernel: 5,
                    stride: 1,
                },
                Layer::Relu,
                Layer::MaxPool { size: 2 },
                Layer::Flatten,
                Layer::Dense {
                    inputs: 16 * 5 * 5,
                    outputs: 10,
                },
                Layer::Softmax,
            ],
            LossKind::CrossEntropy,
        )
        .expect("reference CNN is valid")
    }

    /// Dense ReLU stack ending in a softmax over `labels` classes.
    pub fn mlp(inputs: usize, hidden: &[usize], labels: usize) -> Result<Self> {
        let mut layers = Vec::new();
        let mut width = inputs;
        for &h in hidden {
            layers.push(Layer::Dense {
                inputs: width,
                outputs: h,
            });
            layers.push(Layer::Relu);
            width = h;
        }
        layers.push(Layer::Dense {
            inputs: width,
            outputs: labels,
        });
        layers.push(Layer::Softmax);
        ModelSpec::new(vec![inputs], layers, LossKind::CrossEntropy)
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "mnist-mlp" => Ok(Self::mnist_mlp()),
            "mnist-autoencoder" => Ok(Self::mnist_autoencoder()),
            "cifar-cnn" => Ok(Self::cifar_cnn()),
            other => Err(Error::InvalidSpec(format!("unknown model {other:?}"))),
        }
    }

    /// Per-layer output shapes (one sample each); checks that every adjacent
    /// pair of layers is compatible.
    pub fn shape_trace(&self) -> Result<Vec<Vec<usize>>> {
        if self.input_shape.is_empty() || self.input_shape.contains(&0) {
            return Err(Error::InvalidSpec(format!(
                "bad input shape {:?}",
                self.input_shape
            )));
        }
        let mut shapes = Vec::with_capacity(self.layers.len());
        let mut current = self.input_shape.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            current = layer
                .output_shape(&current)
                .map_err(|e| Error::InvalidSpec(format!("layer {i}: {e}")))?;
            shapes.push(current.clone());
        }
        Ok(shapes)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::InvalidSpec("no layers".into()));
        }
        self.shape_trace()?;
        let softmaxes = self
            .layers
            .iter()
            .filter(|l| matches!(l, Layer::Softmax))
            .count();
        let ends_in_softmax = matches!(self.layers.last(), Some(Layer::Softmax));
        if softmaxes > 1 || (softmaxes == 1 && !ends_in_softmax) {
            return Err(Error::InvalidSpec(
                "softmax is only supported as the final layer".into(),
            ));
        }
        if self.loss == LossKind::CrossEntropy && !ends_in_softmax {
            return Err(Error::InvalidSpec(
                "cross-entropy models must end in softmax".into(),
            ));
        }
        Ok(())
    }

    pub fn output_shape(&self) -> Vec<usize> {
        self.shape_trace()
            .ok()
            .and_then(|s| s.last().cloned())
            .unwrap_or_default()
    }

    pub fn input_len(&self) -> usize {
        self.input_shape.iter().product()
    }

    pub fn output_len(&self) -> usize {
        self.output_shape().iter().product()
    }

    /// `(layer index, role, shape)` for every parameter tensor, in storage order.
    pub fn param_shapes(&self) -> Vec<(usize, super::ParamRole, Vec<usize>)> {
        use super::ParamRole::{Bias, Weight};
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            match *layer {
                Layer::Dense { inputs, outputs } => {
                    out.push((i, Weight, vec![outputs, inputs]));
                    out.push((i, Bias, vec![outputs]));
                }
                Layer::Conv2d {
                    in_channels,
                    out_channels,
                    kernel,
                    ..
                } => {
                    out.push((i, Weight, vec![out_channels, in_channels, kernel, kernel]));
                    out.push((i, Bias, vec![out_channels]));
                }
                _ => {}
            }
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.param_shapes()
            .iter()
            .map(|(_, _, s)| s.iter().product::<usize>())
            .sum()
    }

    /// Indices of layers that own parameters.
    pub fn param_layers(&self) -> Vec<usize> {
        self.layers
            .iter()
            .enumerate()
            .filter(|(_, l)| l.has_params())
            .map(|(i, _)| i)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_architectures_validate() {
        assert_eq!(ModelSpec::mnist_mlp().param_count(), 25450);
        assert_eq!(ModelSpec::mnist_autoencoder().output_shape(), vec![784]);
        assert_eq!(ModelSpec::cifar_cnn().output_shape(), vec![10]);
    }

    #[test]
    fn incompatible_layers_are_rejected() {
        let spec = ModelSpec::new(
            vec![4],
            vec![
                Layer::Dense {
                    inputs: 5,
                    outputs: 2,
                },
                Layer::Softmax,
            ],
            LossKind::CrossEntropy,
        );
        assert!(matches!(spec, Err(Error::InvalidSpec(_))));

        let no_softmax = ModelSpec::new(
            vec![4],
            vec![Layer::Dense {
                inputs: 4,
                outputs: 2,
            }],
            LossKind::CrossEntropy,
        );
        assert!(no_softmax.is_err());
    }

    #[test]
    fn layer_text_round_trips() {
        for text in ["dense 784 32", "conv2d 3 8 5 2", "maxpool 2", "relu", "flatten", "softmax"] {
            let layer: Layer = text.parse().unwrap();
            assert_eq!(layer.to_string(), text);
        }
        assert_eq!(
            "conv2d 1 2 3".parse::<Layer>().unwrap(),
            Layer::Conv2d {
                in_channels: 1,
                out_channels: 2,
                kernel: 3,
                stride: 1
            }
        );
        assert!("dense 1".parse::<Layer>().is_err());
    }

    #[test]
    fn strided_conv_shape() {
        let l = Layer::Conv2d {
            in_channels: 2,
            out_channels: 3,
            kernel: 3,
            stride: 2,
        };
        assert_eq!(l.output_shape(&[2, 7, 7]).unwrap(), vec![3, 3, 3]);
    }
}
