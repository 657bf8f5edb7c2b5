use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::analysis::{ClientScheme, LayerSelector};
use crate::attack::PredictorSpec;
use crate::error::{Error, Result};
use crate::federation::{FedConfig, Injection, LocalTraining, NoiseConfig, NoiseKind};
use crate::nn::{InitScheme, Layer, LossKind, ModelSpec};

/// Environment variable naming the default dataset root.
pub const DATA_DIR_ENV: &str = "FEDLEAK_DATA_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Fedtrain,
    ClusterViz,
    LayerViz,
    AutoencoderViz,
    Attack,
    DefenseSweep,
    Gradcheck,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    pub output: PathBuf,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub fed: FedSection,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub attack: AttackSection,
    #[serde(default)]
    pub viz: VizSection,
    #[serde(default)]
    pub sweep: SweepSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DataSource {
    #[default]
    Mnist,
    Cifar10,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub source: DataSource,
    /// Dataset root; defaults to `$FEDLEAK_DATA_DIR`, then `data`.
    pub root: Option<PathBuf>,
    /// Keep only the first N train / test samples.
    pub train_limit: Option<usize>,
    pub test_limit: Option<usize>,
    pub synthetic_labels: usize,
    pub synthetic_dims: usize,
    pub synthetic_train: usize,
    pub synthetic_test: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            source: DataSource::Mnist,
            root: None,
            train_limit: None,
            test_limit: None,
            synthetic_labels: 10,
            synthetic_dims: 16,
            synthetic_train: 2000,
            synthetic_test: 500,
        }
    }
}

impl DataConfig {
    pub fn root(&self) -> PathBuf {
        self.root
            .clone()
            .or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("data"))
    }

    /// Train and test sizes after limits, when known without reading files.
    pub fn sizes(&self) -> (usize, usize) {
        let (train, test) = match self.source {
            DataSource::Mnist => (60_000, 10_000),
            DataSource::Cifar10 => (50_000, 10_000),
            DataSource::Synthetic => (self.synthetic_train, self.synthetic_test),
        };
        (
            self.train_limit.map_or(train, |l| l.min(train)),
            self.test_limit.map_or(test, |l| l.min(test)),
        )
    }

    fn labels(&self) -> usize {
        match self.source {
            DataSource::Synthetic => self.synthetic_labels,
            _ => 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// `mnist-mlp`, `mnist-autoencoder` or `cifar-cnn`; ignored when `layers` is set.
    pub name: Option<String>,
    pub input_shape: Option<Vec<usize>>,
    /// Layer lines such as `"dense 784 32"` or `"relu"`.
    pub layers: Option<Vec<String>>,
    pub loss: Option<String>,
    pub init: Option<String>,
}

fn parse_init(s: &str) -> Result<InitScheme> {
    match s {
        "lecun-uniform" => Ok(InitScheme::LecunUniform),
        "he-uniform" => Ok(InitScheme::HeUniform),
        _ => Err(Error::Config(format!("unknown init scheme {s:?}"))),
    }
}

impl ModelConfig {
    /// The configured model, or `default` when nothing is set.
    pub fn build(&self, default: &str) -> Result<ModelSpec> {
        let mut spec = match &self.layers {
            Some(lines) => {
                let layers = lines.iter().map(|l| l.parse::<Layer>()).collect::<Result<Vec<_>>>()?;
                let input = self
                    .input_shape
                    .clone()
                    .ok_or_else(|| Error::Config("model.layers needs model.input_shape".into()))?;
                let loss = match self.loss.as_deref().unwrap_or("cross-entropy") {
                    "cross-entropy" => LossKind::CrossEntropy,
                    "mse" | "mean-squared-error" => LossKind::MeanSquaredError,
                    other => return Err(Error::Config(format!("unknown loss {other:?}"))),
                };
                ModelSpec::new(input, layers, loss)?
            }
            None => ModelSpec::by_name(self.name.as_deref().unwrap_or(default))?,
        };
        if let Some(init) = &self.init {
            spec = spec.with_init(parse_init(init)?);
        }
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FedSection {
    pub clients: usize,
    pub fraction: f64,
    pub rounds: usize,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Samples per client under the uniform partition.
    pub samples_per_client: usize,
}

impl Default for FedSection {
    fn default() -> Self {
        Self {
            clients: 20,
            fraction: 0.25,
            rounds: 50,
            local_epochs: 1,
            batch_size: 32,
            learning_rate: 1e-4,
            samples_per_client: 500,
        }
    }
}

impl FedSection {
    pub fn fed_config(&self, seed: u64) -> FedConfig {
        FedConfig {
            clients: self.clients,
            fraction: self.fraction,
            rounds: self.rounds,
            local_epochs: self.local_epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            seed,
        }
    }

    pub fn local(&self) -> LocalTraining {
        LocalTraining {
            epochs: self.local_epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSection {
    /// `none`, `gaussian` or `laplace`.
    pub kind: String,
    pub scale: f64,
    /// `per-gradient` or `weight-delta`.
    pub injection: String,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self {
            kind: "none".into(),
            scale: 0.0,
            injection: "per-gradient".into(),
        }
    }
}

pub(crate) fn parse_noise_kind(s: &str) -> Result<NoiseKind> {
    match s {
        "none" => Ok(NoiseKind::None),
        "gaussian" => Ok(NoiseKind::Gaussian),
        "laplace" => Ok(NoiseKind::Laplace),
        _ => Err(Error::Config(format!("unknown noise kind {s:?}"))),
    }
}

impl NoiseSection {
    pub fn build(&self) -> Result<NoiseConfig> {
        let injection = match self.injection.as_str() {
            "per-gradient" => Injection::PerGradient,
            "weight-delta" => Injection::WeightDelta,
            other => return Err(Error::Config(format!("unknown noise injection {other:?}"))),
        };
        let cfg = NoiseConfig {
            kind: parse_noise_kind(&self.kind)?,
            scale: self.scale,
            injection,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttackSection {
    pub alphas: Vec<f64>,
    pub train_per_alpha: usize,
    pub test_per_alpha: usize,
    pub samples_per_client: usize,
    pub pca_dims: usize,
    /// Draw dummy data without reuse across dummies.
    pub disjoint: bool,
    /// Train dummies with the configured noise.
    pub defense_aware: bool,
    /// Real clients whose first-round uploads are attacked.
    pub victims: usize,
    pub predictor: PredictorSection,
}

impl Default for AttackSection {
    fn default() -> Self {
        Self {
            alphas: vec![0.1, 1.0, 10.0, 100.0, 1000.0],
            train_per_alpha: 200,
            test_per_alpha: 40,
            samples_per_client: 500,
            pca_dims: 10,
            disjoint: false,
            defense_aware: true,
            victims: 10,
            predictor: PredictorSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PredictorSection {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub init: String,
    pub standardize: bool,
}

impl Default for PredictorSection {
    fn default() -> Self {
        let r = PredictorSpec::reference(1, 1);
        Self {
            hidden: r.hidden,
            learning_rate: r.learning_rate,
            epochs: r.epochs,
            batch_size: r.batch_size,
            init: "he-uniform".into(),
            standardize: r.standardize,
        }
    }
}

impl PredictorSection {
    pub fn build(&self, input_dim: usize, labels: usize) -> Result<PredictorSpec> {
        Ok(PredictorSpec {
            input_dim,
            hidden: self.hidden.clone(),
            labels,
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            init: parse_init(&self.init)?,
            standardize: self.standardize,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VizSection {
    /// `80-20` or `dirichlet`.
    pub scheme: String,
    pub clients_per_label: usize,
    /// Client count for the Dirichlet scheme.
    pub clients: usize,
    pub alpha: f64,
    pub samples: usize,
    pub k: usize,
    /// Layer selectors: `"all"` or layer indices.
    pub layers: Vec<String>,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Label pairs whose normalized centroid distance is reported; pairs
    /// with a label no client is dominated by are skipped. The defaults are
    /// cat/dog and cat/truck in CIFAR-10 numbering.
    pub proximity_pairs: Vec<[usize; 2]>,
}

impl Default for VizSection {
    fn default() -> Self {
        Self {
            scheme: "80-20".into(),
            clients_per_label: 10,
            clients: 100,
            alpha: 0.2,
            samples: 200,
            k: 5,
            layers: vec!["all".into()],
            local_epochs: 1,
            batch_size: 32,
            learning_rate: 1e-5,
            proximity_pairs: vec![[3, 5], [3, 9]],
        }
    }
}

impl VizSection {
    pub fn scheme(&self) -> Result<ClientScheme> {
        match self.scheme.as_str() {
            "80-20" => Ok(ClientScheme::EightyTwenty {
                clients_per_label: self.clients_per_label,
                samples: self.samples,
            }),
            "dirichlet" => Ok(ClientScheme::Dirichlet {
                clients: self.clients,
                alpha: self.alpha,
                samples: self.samples,
            }),
            other => Err(Error::Config(format!("unknown viz scheme {other:?}"))),
        }
    }

    pub fn client_count(&self, labels: usize) -> usize {
        match self.scheme.as_str() {
            "dirichlet" => self.clients,
            _ => self.clients_per_label * labels,
        }
    }

    pub fn selectors(&self) -> Result<Vec<LayerSelector>> {
        self.layers.iter().map(|s| s.parse()).collect()
    }

    pub fn local(&self) -> LocalTraining {
        LocalTraining {
            epochs: self.local_epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub kinds: Vec<String>,
    /// Non-zero scales; the noiseless baseline always runs once.
    pub scales: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            kinds: vec!["gaussian".into(), "laplace".into()],
            scales: vec![1e-3, 1e-2, 1e-1],
        }
    }
}

/// Reads a config file and applies `key=value` overrides (dotted keys,
/// TOML values; bare words are taken as strings).
pub fn load_config(path: &Path, overrides: &[String]) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text, overrides)
}

pub fn parse_config(text: &str, overrides: &[String]) -> Result<ExperimentConfig> {
    let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))
}

fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
    let value = format!("v = {}", raw.trim())
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
    let parts: Vec<&str> = key.trim().split('.').collect();
    let (last, path) = parts.split_last().expect("split yields at least one part");
    let mut cur = table;
    for part in path {
        cur = cur
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override key {key:?}: {part:?} is not a section")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

impl ExperimentConfig {
    fn default_model(&self) -> &'static str {
        match (self.kind, self.data.source) {
            (ExperimentKind::AutoencoderViz, _) => "mnist-autoencoder",
            (_, DataSource::Cifar10) => "cifar-cnn",
            _ => "mnist-mlp",
        }
    }

    /// The model this experiment trains. Synthetic data gets a small MLP
    /// sized to its dimensions unless a model is configured.
    pub fn model_spec(&self) -> Result<ModelSpec> {
        let m = &self.model;
        if self.data.source == DataSource::Synthetic && m.name.is_none() && m.layers.is_none() {
            let d = self.data.synthetic_dims;
            let spec = if self.kind == ExperimentKind::AutoencoderViz {
                ModelSpec::new(
                    vec![d],
                    vec![
                        Layer::Dense { inputs: d, outputs: 8 },
                        Layer::Relu,
                        Layer::Dense { inputs: 8, outputs: d },
                    ],
                    LossKind::MeanSquaredError,
                )?
            } else {
                ModelSpec::mlp(d, &[16], self.data.synthetic_labels)?
            };
            return match &m.init {
                Some(init) => Ok(spec.with_init(parse_init(init)?)),
                None => Ok(spec),
            };
        }
        m.build(self.default_model())
    }

    /// Every statically checkable problem, not just the first.
    pub fn validate(&self) -> std::result::Result<(), Vec<String>> {
        let mut errs = Vec::new();
        let mut push = |r: Result<()>| {
            if let Err(e) = r {
                errs.push(match e {
                    Error::Config(s) => s,
                    other => other.to_string(),
                });
            }
        };
        let (n_train, n_test) = self.data.sizes();
        let labels = self.data.labels();
        if self.data.source == DataSource::Synthetic {
            if self.data.synthetic_labels < 2 || self.data.synthetic_dims == 0 {
                push(Err(Error::Config("synthetic data needs >= 2 labels and >= 1 dim".into())));
            }
            if n_train < self.data.synthetic_labels || n_test == 0 {
                push(Err(Error::Config("synthetic splits are too small".into())));
            }
        }
        let model = self.model_spec();
        if let Err(e) = &model {
            push(Err(Error::Config(format!("model: {e}"))));
        }
        push(self.noise.build().map(|_| ()));

        let needs_fed = matches!(self.kind, ExperimentKind::Fedtrain | ExperimentKind::DefenseSweep);
        let needs_attack = matches!(self.kind, ExperimentKind::Attack | ExperimentKind::DefenseSweep);
        let needs_viz = matches!(
            self.kind,
            ExperimentKind::ClusterViz | ExperimentKind::LayerViz | ExperimentKind::AutoencoderViz
        );

        if needs_fed || needs_attack {
            let f = self.fed.fed_config(self.seed);
            push(f.validate());
        }
        if needs_fed && self.fed.clients * self.fed.samples_per_client > n_train {
            push(Err(Error::Config(format!(
                "{} clients x {} samples exceed the {n_train} training samples",
                self.fed.clients, self.fed.samples_per_client
            ))));
        }
        if needs_fed && self.fed.samples_per_client == 0 {
            push(Err(Error::Config("fed.samples_per_client must be positive".into())));
        }
        if needs_attack {
            let a = &self.attack;
            if a.alphas.is_empty() {
                push(Err(Error::Config("attack.alphas must not be empty".into())));
            }
            if a.alphas.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                push(Err(Error::Config("attack.alphas must be positive".into())));
            }
            if a.train_per_alpha == 0 || a.test_per_alpha == 0 {
                push(Err(Error::Config("attack needs train and test dummies for each alpha".into())));
            }
            let dummies = a.alphas.len() * a.train_per_alpha;
            if a.pca_dims == 0 || a.pca_dims + 1 > dummies {
                push(Err(Error::Config(format!(
                    "attack.pca_dims must be in 1..={}, got {}",
                    dummies.saturating_sub(1),
                    a.pca_dims
                ))));
            }
            if let Ok(m) = &model {
                if a.pca_dims > m.param_count() {
                    push(Err(Error::Config("attack.pca_dims exceeds the parameter count".into())));
                }
                if m.loss != LossKind::CrossEntropy {
                    push(Err(Error::Config("the attack targets classifiers".into())));
                }
            }
            if a.samples_per_client == 0 || a.samples_per_client > n_train.min(n_test) {
                push(Err(Error::Config(format!(
                    "attack.samples_per_client must be in 1..={}",
                    n_train.min(n_test)
                ))));
            }
            if a.disjoint {
                let need_train = dummies * a.samples_per_client;
                let need_test = (a.alphas.len() * a.test_per_alpha + a.victims) * a.samples_per_client;
                if need_train > n_train || need_test > n_test {
                    push(Err(Error::Config("disjoint dummy pools exceed the proxy data".into())));
                }
            } else if a.victims * a.samples_per_client > n_test {
                push(Err(Error::Config("attack victims exceed the test split".into())));
            }
            let p = &a.predictor;
            if p.batch_size == 0 || !(p.learning_rate > 0.0) || p.hidden.contains(&0) {
                push(Err(Error::Config("attack.predictor needs positive batch, rate and widths".into())));
            }
            push(parse_init(&p.init).map(|_| ()));
        }
        if needs_viz {
            let v = &self.viz;
            match v.scheme() {
                Ok(_) => {
                    let clients = v.client_count(labels);
                    if clients < 3 {
                        push(Err(Error::Config("visualization needs at least 3 clients".into())));
                    }
                    if v.k == 0 || v.k >= clients {
                        push(Err(Error::Config(format!("viz.k must be in 1..{clients}"))));
                    }
                    if v.samples == 0 || clients * v.samples > n_train {
                        push(Err(Error::Config("visualization clients exceed the training samples".into())));
                    }
                    if v.scheme == "dirichlet" && !(v.alpha > 0.0 && v.alpha.is_finite()) {
                        push(Err(Error::Config("viz.alpha must be positive".into())));
                    }
                }
                Err(e) => push(Err(e)),
            }
            if v.batch_size == 0 || !(v.learning_rate > 0.0) {
                push(Err(Error::Config("viz needs a positive batch size and learning rate".into())));
            }
            match v.selectors() {
                Ok(sel) => {
                    if let Ok(m) = &model {
                        for s in sel {
                            if let LayerSelector::Layer(i) = s {
                                if i >= m.layers.len() || !m.layers[i].has_params() {
                                    push(Err(Error::Config(format!("viz layer {i} has no parameters"))));
                                }
                            }
                        }
                    }
                }
                Err(e) => push(Err(e)),
            }
            if self.kind == ExperimentKind::AutoencoderViz {
                if let Ok(m) = &model {
                    if m.loss != LossKind::MeanSquaredError {
                        push(Err(Error::Config("autoencoder-viz needs a mean-squared-error model".into())));
                    }
                }
            }
        }
        if self.kind == ExperimentKind::DefenseSweep {
            for k in &self.sweep.kinds {
                match parse_noise_kind(k) {
                    Ok(NoiseKind::None) => push(Err(Error::Config("sweep.kinds must be noise kinds".into()))),
                    Ok(_) => {}
                    Err(e) => push(Err(e)),
                }
            }
            if self.sweep.scales.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
                push(Err(Error::Config("sweep.scales must be positive".into())));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(errs)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = "kind = \"fedtrain\"\noutput = \"out/x\"\n";

    #[test]
    fn strict_fields() {
        assert!(parse_config(&format!("{BASE}bogus = 1\n"), &[]).is_err());
        assert!(parse_config(&format!("{BASE}[fed]\nclientz = 3\n"), &[]).is_err());
        let cfg = parse_config(BASE, &[]).unwrap();
        assert_eq!(cfg.fed, FedSection::default());
    }

    #[test]
    fn overrides() {
        let cfg = parse_config(
            BASE,
            &["fed.clients=7".into(), "noise.kind=gaussian".into(), "attack.alphas=[1.0, 2.0]".into()],
        )
        .unwrap();
        assert_eq!(cfg.fed.clients, 7);
        assert_eq!(cfg.noise.kind, "gaussian");
        assert_eq!(cfg.attack.alphas, vec![1.0, 2.0]);
        assert!(parse_config(BASE, &["nokey".into()]).is_err());
    }

    #[test]
    fn validation_collects_everything() {
        let cfg = parse_config(
            "kind = \"attack\"\noutput = \"o\"\n[fed]\nfraction = 0.0\n[attack]\nalphas = []\npca_dims = 5000\n",
            &[],
        )
        .unwrap();
        let errs = cfg.validate().unwrap_err();
        assert!(errs.iter().any(|e| e.contains("client fraction must be in (0,1]")));
        assert!(errs.iter().any(|e| e.contains("alphas must not be empty")));
        assert!(errs.iter().any(|e| e.contains("pca_dims")));
    }
}
