use rand::seq::SliceRandom;

use super::meta::{MetaDataset, MetaSample};
use super::pca::PcaModel;
use crate::data::LabelDistribution;
use crate::error::{Error, Result};
use crate::nn::{apply_sgd, forward, loss, loss_and_grad, InitScheme, ModelParams, ModelSpec, Targets, Tensor};
use crate::rng;

/// Predicted probabilities are clamped to this before taking logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

/// Architecture and training schedule of the label-distribution predictor.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub labels: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub init: InitScheme,
    /// Rescale each input coordinate by the train-split mean and standard
    /// deviation. PCA coordinates of weight updates are tiny (order 1e-4),
    /// and without this a deep ReLU stack sees an effectively constant input.
    pub standardize: bool,
}

impl PredictorSpec {
    /// Eight hidden layers of 1000 ReLU units.
    pub fn reference(input_dim: usize, labels: usize) -> Self {
        Self {
            input_dim,
            hidden: vec![1000; 8],
            labels,
            learning_rate: 1e-3,
            epochs: 50,
            batch_size: 64,
            init: InitScheme::HeUniform,
            standardize: true,
        }
    }

    pub fn model_spec(&self) -> Result<ModelSpec> {
        Ok(ModelSpec::mlp(self.input_dim, &self.hidden, self.labels)?.with_init(self.init))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument("predictor learning rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("predictor batch size must be positive".into()));
        }
        self.model_spec().map(|_| ())
    }
}

/// A trained predictor with its input standardization.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictor {
    spec: PredictorSpec,
    model: ModelSpec,
    params: ModelParams,
    shift: Vec<f64>,
    scale: Vec<f64>,
}

impl Predictor {
    pub fn spec(&self) -> &PredictorSpec {
        &self.spec
    }

    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    /// Per-coordinate `(shift, scale)` applied to inputs before the network.
    pub fn standardization(&self) -> (&[f64], &[f64]) {
        (&self.shift, &self.scale)
    }

    /// Wraps existing parameters with an identity input transform.
    pub fn from_params(spec: PredictorSpec, params: ModelParams) -> Result<Self> {
        let model = spec.model_spec()?;
        if !params.matches_spec(&model) {
            return Err(Error::Shape("predictor parameters do not match the architecture".into()));
        }
        Ok(Self {
            shift: vec![0.0; spec.input_dim],
            scale: vec![1.0; spec.input_dim],
            spec,
            model,
            params,
        })
    }

    fn inputs<'a>(&self, xs: impl Iterator<Item = &'a [f64]>) -> Result<Tensor> {
        let mut data = Vec::new();
        let mut rows = 0;
        for x in xs {
            if x.len() != self.spec.input_dim {
                return Err(Error::Shape(format!(
                    "predictor expects {} inputs, got {}",
                    self.spec.input_dim,
                    x.len()
                )));
            }
            data.extend(x.iter().zip(&self.shift).zip(&self.scale).map(|((v, m), s)| (v - m) / s));
            rows += 1;
        }
        if rows == 0 {
            return Err(Error::Empty("predictor batch"));
        }
        Tensor::new(vec![rows, self.spec.input_dim], data)
    }

    /// Predicted label distribution for each input row.
    pub fn predict_many(&self, xs: &[&[f64]]) -> Result<Vec<LabelDistribution>> {
        let out = forward(&self.model, &self.params, &self.inputs(xs.iter().copied())?)?;
        (0..out.rows()).map(|r| to_distribution(out.row(r))).collect()
    }

    pub fn predict(&self, x: &[f64]) -> Result<LabelDistribution> {
        Ok(self.predict_many(&[x])?.remove(0))
    }
}

fn to_distribution(row: &[f64]) -> Result<LabelDistribution> {
    // Softmax rows already sum to one up to rounding; renormalising keeps the
    // invariant exact enough for any width.
    let sum: f64 = row.iter().sum();
    LabelDistribution::new(row.iter().map(|p| p / sum).collect())
}

/// One epoch of predictor training.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    /// 0 is the untrained network.
    pub epoch: usize,
    /// Full train-split loss after the epoch.
    pub train_loss: f64,
    pub test_loss: Option<f64>,
    /// Rate in force after the epoch.
    pub learning_rate: f64,
    /// Whether the epoch raised the train loss and was undone.
    pub rolled_back: bool,
}

/// Trains the predictor by minibatch SGD on soft-target cross-entropy.
///
/// After every epoch the full train-split loss is evaluated. If it rose, the
/// epoch's update is discarded and the learning rate halved, so the recorded
/// train loss never increases.
pub fn train_predictor(meta: &MetaDataset, pspec: &PredictorSpec, seed: u64) -> Result<(Predictor, Vec<EpochRecord>)> {
    pspec.validate()?;
    if meta.train.is_empty() {
        return Err(Error::Empty("meta-dataset train split"));
    }
    if meta.input_dim() != pspec.input_dim || meta.num_labels() != pspec.labels {
        return Err(Error::Shape(format!(
            "predictor is {}->{}, meta-dataset is {}->{}",
            pspec.input_dim,
            pspec.labels,
            meta.input_dim(),
            meta.num_labels()
        )));
    }
    let model = pspec.model_spec()?;
    let (shift, scale) = if pspec.standardize {
        standardization(&meta.train, pspec.input_dim)
    } else {
        (vec![0.0; pspec.input_dim], vec![1.0; pspec.input_dim])
    };
    let mut predictor = Predictor {
        params: ModelParams::init(&model, rng::derive_seed(seed, &[rng::tag::PREDICTOR, rng::tag::INIT]))?,
        spec: pspec.clone(),
        model,
        shift,
        scale,
    };
    let train_x = predictor.inputs(meta.train.iter().map(|s| s.x.as_slice()))?;
    let train_y = targets(&meta.train)?;
    let test = if meta.test.is_empty() {
        None
    } else {
        Some((predictor.inputs(meta.test.iter().map(|s| s.x.as_slice()))?, targets(&meta.test)?))
    };
    let eval = |p: &Predictor| -> Result<(f64, Option<f64>)> {
        let train = loss(&p.model, &p.params, &train_x, Targets::Dense(&train_y))?;
        let test = match &test {
            Some((x, y)) => Some(loss(&p.model, &p.params, x, Targets::Dense(y))?),
            None => None,
        };
        Ok((train, test))
    };

    let mut lr = pspec.learning_rate;
    let (mut current, test0) = eval(&predictor)?;
    let mut curve = vec![EpochRecord {
        epoch: 0,
        train_loss: current,
        test_loss: test0,
        learning_rate: lr,
        rolled_back: false,
    }];
    let mut order: Vec<usize> = (0..meta.train.len()).collect();
    let mut shuffle = rng::rng_from(seed, &[rng::tag::PREDICTOR]);
    let width = pspec.input_dim;
    let labels = pspec.labels;
    for epoch in 1..=pspec.epochs {
        let before = predictor.params.clone();
        order.shuffle(&mut shuffle);
        for batch in order.chunks(pspec.batch_size) {
            let mut xb = Vec::with_capacity(batch.len() * width);
            let mut yb = Vec::with_capacity(batch.len() * labels);
            for &i in batch {
                xb.extend_from_slice(train_x.row(i));
                yb.extend_from_slice(train_y.row(i));
            }
            let xb = Tensor::new(vec![batch.len(), width], xb)?;
            let yb = Tensor::new(vec![batch.len(), labels], yb)?;
            let (_, grads) = loss_and_grad(&predictor.model, &predictor.params, &xb, Targets::Dense(&yb))?;
            apply_sgd(&mut predictor.params, &grads, lr)?;
        }
        let (train_loss, test_loss) = eval(&predictor)?;
        let rolled_back = train_loss > current;
        let record = if rolled_back {
            predictor.params = before;
            lr *= 0.5;
            EpochRecord {
                epoch,
                train_loss: current,
                test_loss: curve.last().and_then(|r| r.test_loss),
                learning_rate: lr,
                rolled_back,
            }
        } else {
            current = train_loss;
            EpochRecord {
                epoch,
                train_loss,
                test_loss,
                learning_rate: lr,
                rolled_back,
            }
        };
        curve.push(record);
    }
    Ok((predictor, curve))
}

fn targets(samples: &[MetaSample]) -> Result<Tensor> {
    let labels = samples[0].y.num_labels();
    let data = samples.iter().flat_map(|s| s.y.probs().iter().copied()).collect();
    Tensor::new(vec![samples.len(), labels], data)
}

fn standardization(samples: &[MetaSample], dim: usize) -> (Vec<f64>, Vec<f64>) {
    let n = samples.len() as f64;
    let mut mean = vec![0.0; dim];
    for s in samples {
        for (m, v) in mean.iter_mut().zip(&s.x) {
            *m += v / n;
        }
    }
    let mut var = vec![0.0; dim];
    for s in samples {
        for ((acc, v), m) in var.iter_mut().zip(&s.x).zip(&mean) {
            *acc += (v - m) * (v - m) / n;
        }
    }
    let scale = var.iter().map(|&v| if v > 0.0 { v.sqrt() } else { 1.0 }).collect();
    (mean, scale)
}

/// `f(pca(flatten(params)))` for intercepted client parameters.
pub fn predict_distribution(predictor: &Predictor, pca: &PcaModel, intercepted: &ModelParams) -> Result<LabelDistribution> {
    predictor.predict(&pca.apply(&intercepted.flatten())?)
}

/// Cross-entropy `H(y, q)` and `KL(y || q)` with `q` clamped at [`PROB_FLOOR`].
pub fn distribution_losses(y: &LabelDistribution, q: &LabelDistribution) -> Result<(f64, f64)> {
    if y.num_labels() != q.num_labels() {
        return Err(Error::Shape("distributions over different label sets".into()));
    }
    let mut ce = 0.0;
    let mut kl = 0.0;
    for (&p, &r) in y.probs().iter().zip(q.probs()) {
        if p > 0.0 {
            let lq = r.max(PROB_FLOOR).ln();
            ce -= p * lq;
            kl += p * (p.ln() - lq);
        }
    }
    Ok((ce, kl))
}

/// Mean cross-entropy and mean KL divergence over `samples`.
pub fn evaluate_predictor(predictor: &Predictor, samples: &[MetaSample]) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::Empty("meta-dataset split"));
    }
    let xs: Vec<&[f64]> = samples.iter().map(|s| s.x.as_slice()).collect();
    let preds = predictor.predict_many(&xs)?;
    let mut ce = 0.0;
    let mut kl = 0.0;
    for (s, q) in samples.iter().zip(&preds) {
        let (c, k) = distribution_losses(&s.y, q)?;
        ce += c;
        kl += k;
    }
    let n = samples.len() as f64;
    Ok((ce / n, kl / n))
}
