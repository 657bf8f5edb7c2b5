use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::config::{parse_noise_kind, DataConfig, DataSource, ExperimentConfig, ExperimentKind};
use crate::analysis::{
    centroid_drift, project_and_score, projection_csv, purity_csv, semantic_proximity, train_clients, untrained_purity,
    LayerSelector,
};
use crate::attack::{
    build_meta_dataset, evaluate_predictor, intercept_updates, predict_distribution, train_predictor, MetaConfig,
};
use crate::data::{
    cifar_files, empirical_distribution, load_cifar10, load_mnist, mnist_files, partition_uniform, sample_dirichlet,
    synth_dataset, Dataset, MnistSplit, ProxyPool,
};
use crate::error::{Error, Result};
use crate::federation::{fed_train, round_logs_csv, NoiseConfig, NoiseKind};
use crate::nn::gradcheck::{run_case, standard_cases};
use crate::nn::{ModelParams, ModelSpec};
use crate::rng;

/// Instances per gradient-check case.
pub const GRADCHECK_INSTANCES: usize = 20;

/// What a run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub output: PathBuf,
    /// `(relative path, sha-256 hex)` for every artifact, sorted by path.
    pub manifest: Vec<(String, String)>,
    /// Headline numbers, also written to `metrics.csv`.
    pub metrics: Vec<(String, f64)>,
}

impl RunReport {
    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }
}

struct Artifacts {
    dir: PathBuf,
    files: Vec<(String, String)>,
    metrics: Vec<(String, f64)>,
}

impl Artifacts {
    fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
            metrics: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.files.push((name.to_string(), hex::encode(Sha256::digest(bytes))));
        Ok(())
    }

    fn metric(&mut self, name: impl Into<String>, value: f64) {
        self.metrics.push((name.into(), value));
    }

    fn finish(mut self) -> Result<RunReport> {
        let mut csv = String::from("metric,value\n");
        for (n, v) in &self.metrics {
            let _ = writeln!(csv, "{n},{v:?}");
        }
        self.write("metrics.csv", csv.as_bytes())?;
        self.files.sort();
        let mut manifest = String::new();
        for (name, hash) in &self.files {
            let _ = writeln!(manifest, "{name}  {hash}");
        }
        let path = self.dir.join("manifest.txt");
        std::fs::write(&path, manifest).map_err(|e| Error::io(&path, e))?;
        Ok(RunReport {
            output: self.dir,
            manifest: self.files,
            metrics: self.metrics,
        })
    }
}

/// Loads the train and test splits named by the data config.
pub fn load_datasets(data: &DataConfig, seed: u64) -> Result<(Dataset, Dataset)> {
    let root = data.root();
    let (train, test) = match data.source {
        DataSource::Mnist => {
            let dir = root.join("mnist");
            let (ti, tl) = mnist_files(&dir, MnistSplit::Train);
            let (vi, vl) = mnist_files(&dir, MnistSplit::Test);
            (load_mnist(ti, tl)?, load_mnist(vi, vl)?)
        }
        DataSource::Cifar10 => {
            let dir = root.join("cifar-10-batches-bin");
            (load_cifar10(&cifar_files(&dir, true))?, load_cifar10(&cifar_files(&dir, false))?)
        }
        DataSource::Synthetic => {
            let all = synth_dataset(
                data.synthetic_labels,
                data.synthetic_train + data.synthetic_test,
                data.synthetic_dims,
                rng::derive_seed(seed, &[rng::tag::PARTITION]),
            )?;
            all.split_at(data.synthetic_train)
        }
    };
    let limit = |d: Dataset, n: Option<usize>| match n {
        Some(n) if n < d.len() => d.truncated(n),
        _ => d,
    };
    Ok((limit(train, data.train_limit), limit(test, data.test_limit)))
}

/// Runs an experiment quietly.
pub fn run(cfg: &ExperimentConfig) -> Result<RunReport> {
    run_with_progress(cfg, &mut |_| {})
}

/// Runs an experiment, reporting coarse progress through `progress`.
pub fn run_with_progress(cfg: &ExperimentConfig, progress: &mut dyn FnMut(&str)) -> Result<RunReport> {
    cfg.validate().map_err(|errs| Error::Config(errs.join("; ")))?;
    let mut out = Artifacts::new(&cfg.output)?;
    if cfg.kind == ExperimentKind::Gradcheck {
        gradcheck(&mut out, cfg.seed, progress)?;
        return out.finish();
    }
    progress("loading data");
    let (train, test) = load_datasets(&cfg.data, cfg.seed)?;
    let spec = cfg.model_spec()?;
    let noise = cfg.noise.build()?;
    match cfg.kind {
        ExperimentKind::Fedtrain => {
            let acc = fedtrain(&mut out, cfg, &spec, &noise, &train, &test, "rounds.csv", progress)?;
            out.metric("final_accuracy", acc);
        }
        ExperimentKind::Attack => {
            let (ce, kl) = attack(&mut out, cfg, &spec, &noise, &train, &test, "", progress)?;
            out.metric("test_ce", ce);
            out.metric("test_kl", kl);
        }
        ExperimentKind::DefenseSweep => sweep(&mut out, cfg, &spec, &train, &test, progress)?,
        ExperimentKind::ClusterViz | ExperimentKind::LayerViz | ExperimentKind::AutoencoderViz => {
            viz(&mut out, cfg, &spec, &noise, &train, progress)?
        }
        ExperimentKind::Gradcheck => unreachable!(),
    }
    out.finish()
}

fn gradcheck(out: &mut Artifacts, seed: u64, progress: &mut dyn FnMut(&str)) -> Result<()> {
    let mut csv = String::from("case,focus,loss,layer,kind,max_rel_error\n");
    let mut worst: f64 = 0.0;
    for (i, case) in standard_cases().iter().enumerate() {
        progress(&format!("gradcheck {}", case.name));
        let report = run_case(case, GRADCHECK_INSTANCES, rng::derive_seed(seed, &[i as u64]))?;
        for l in &report.layers {
            let _ = writeln!(
                csv,
                "{},{},{:?},{},{},{:e}",
                report.name, report.focus, report.loss, l.layer, l.kind, l.max_rel_error
            );
        }
        worst = worst.max(report.max_rel_error());
    }
    out.write("gradcheck.csv", csv.as_bytes())?;
    out.metric("max_rel_error", worst);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn fedtrain(
    out: &mut Artifacts,
    cfg: &ExperimentConfig,
    spec: &ModelSpec,
    noise: &NoiseConfig,
    train: &Dataset,
    test: &Dataset,
    file: &str,
    progress: &mut dyn FnMut(&str),
) -> Result<f64> {
    let fed = cfg.fed.fed_config(cfg.seed);
    let partition = partition_uniform(
        train,
        fed.clients,
        cfg.fed.samples_per_client,
        rng::derive_seed(cfg.seed, &[rng::tag::PARTITION]),
    )?;
    progress(&format!("fedtrain {} rounds ({file})", fed.rounds));
    let (_, logs) = fed_train(spec, &fed, noise, train, &partition, test)?;
    out.write(file, round_logs_csv(&logs).as_bytes())?;
    Ok(logs.last().map_or(f64::NAN, |l| l.accuracy))
}

fn join(probs: &[f64]) -> String {
    probs.iter().map(|p| format!("{p:?}")).collect::<Vec<_>>().join(";")
}

/// Builds the meta-dataset, trains the predictor, attacks the victims.
/// Returns the predictor's test (cross-entropy, KL).
#[allow(clippy::too_many_arguments)]
fn attack(
    out: &mut Artifacts,
    cfg: &ExperimentConfig,
    spec: &ModelSpec,
    noise: &NoiseConfig,
    train: &Dataset,
    test: &Dataset,
    suffix: &str,
    progress: &mut dyn FnMut(&str),
) -> Result<(f64, f64)> {
    let a = &cfg.attack;
    let hyper = cfg.fed.local();
    let global = ModelParams::init(spec, rng::derive_seed(cfg.seed, &[rng::tag::INIT]))?;
    let meta_cfg = MetaConfig {
        alphas: a.alphas.clone(),
        train_per_alpha: a.train_per_alpha,
        test_per_alpha: a.test_per_alpha,
        samples_per_client: a.samples_per_client,
        hyper,
        noise: if a.defense_aware { *noise } else { NoiseConfig::NONE },
        pca_dims: a.pca_dims,
        disjoint: a.disjoint,
        seed: rng::derive_seed(cfg.seed, &[rng::tag::DUMMY]),
    };
    progress(&format!("building meta-dataset{suffix}"));
    let (meta, pca) = build_meta_dataset(spec, &global, train, test, &meta_cfg)?;
    out.write(&format!("meta_dataset{suffix}.bin"), &meta.to_bytes())?;
    out.write(&format!("meta_dataset{suffix}.csv"), meta.to_csv().as_bytes())?;
    let mut pca_csv = String::from("component,explained_variance,degenerate\n");
    for (i, (v, d)) in pca.explained_variance().iter().zip(pca.degenerate()).enumerate() {
        let _ = writeln!(pca_csv, "{i},{v:?},{d}");
    }
    out.write(&format!("pca{suffix}.csv"), pca_csv.as_bytes())?;

    progress(&format!("training predictor{suffix}"));
    let pspec = a.predictor.build(meta.input_dim(), meta.num_labels())?;
    let (predictor, curve) = train_predictor(&meta, &pspec, rng::derive_seed(cfg.seed, &[rng::tag::PREDICTOR]))?;
    let mut curve_csv = String::from("epoch,train_loss,test_loss,learning_rate,rolled_back\n");
    for r in &curve {
        let test_loss = r.test_loss.map(|v| format!("{v:?}")).unwrap_or_default();
        let _ = writeln!(
            curve_csv,
            "{},{:?},{},{:?},{}",
            r.epoch, r.train_loss, test_loss, r.learning_rate, r.rolled_back
        );
    }
    out.write(&format!("predictor_curve{suffix}.csv"), curve_csv.as_bytes())?;
    let (ce, kl) = evaluate_predictor(&predictor, &meta.test)?;
    let entropy = meta.test.iter().map(|s| s.y.entropy()).sum::<f64>() / meta.test.len() as f64;
    out.metric(format!("target_entropy{suffix}"), entropy);

    if a.victims > 0 {
        progress(&format!("attacking {} victims{suffix}", a.victims));
        let victim_seed = rng::derive_seed(cfg.seed, &[rng::tag::VICTIM]);
        let mut pool = ProxyPool::new(test, true);
        let mut sets = Vec::with_capacity(a.victims);
        let mut alphas = Vec::with_capacity(a.victims);
        for v in 0..a.victims {
            let alpha = a.alphas[v % a.alphas.len()];
            let mut r = rng::rng_from(victim_seed, &[rng::tag::PARTITION, v as u64]);
            let dist = sample_dirichlet(alpha, test.num_labels(), &mut r)?;
            sets.push(pool.draw(&dist, a.samples_per_client, &mut r)?);
            alphas.push(alpha);
        }
        let uploads = intercept_updates(spec, &global, test, &sets, &hyper, noise, 1, victim_seed)?;
        let mut csv = String::from("victim,alpha,cross_entropy,kl,true_distribution,predicted_distribution\n");
        let mut mean_kl = 0.0;
        for (v, (params, idx)) in uploads.iter().zip(&sets).enumerate() {
            let truth = empirical_distribution(idx, test)?;
            let pred = predict_distribution(&predictor, &pca, params)?;
            let (c, k) = crate::attack::distribution_losses(&truth, &pred)?;
            mean_kl += k / a.victims as f64;
            let _ = writeln!(
                csv,
                "{v},{:?},{c:?},{k:?},{},{}",
                alphas[v],
                join(truth.probs()),
                join(pred.probs())
            );
        }
        out.write(&format!("victims{suffix}.csv"), csv.as_bytes())?;
        out.metric(format!("victim_kl{suffix}"), mean_kl);
    }
    Ok((ce, kl))
}

fn sweep(
    out: &mut Artifacts,
    cfg: &ExperimentConfig,
    spec: &ModelSpec,
    train: &Dataset,
    test: &Dataset,
    progress: &mut dyn FnMut(&str),
) -> Result<()> {
    let base = cfg.noise.build()?;
    let mut settings = vec![NoiseConfig::NONE];
    for kind in &cfg.sweep.kinds {
        for &scale in &cfg.sweep.scales {
            settings.push(NoiseConfig {
                kind: parse_noise_kind(kind)?,
                scale,
                injection: base.injection,
            });
        }
    }
    let mut csv = String::from("noise_kind,scale,final_accuracy,predictor_test_ce,predictor_test_kl\n");
    for noise in settings {
        let kind = match noise.kind {
            NoiseKind::None => "none",
            NoiseKind::Gaussian => "gaussian",
            NoiseKind::Laplace => "laplace",
        };
        let label = format!("_{kind}_{:e}", noise.scale);
        let acc = fedtrain(out, cfg, spec, &noise, train, test, &format!("rounds{label}.csv"), progress)?;
        let (ce, kl) = attack(out, cfg, spec, &noise, train, test, &label, progress)?;
        let _ = writeln!(csv, "{kind},{:?},{acc:?},{ce:?},{kl:?}", noise.scale);
        out.metric(format!("final_accuracy{label}"), acc);
        out.metric(format!("test_kl{label}"), kl);
    }
    out.write("sweep.csv", csv.as_bytes())
}

fn viz(
    out: &mut Artifacts,
    cfg: &ExperimentConfig,
    spec: &ModelSpec,
    noise: &NoiseConfig,
    train: &Dataset,
    progress: &mut dyn FnMut(&str),
) -> Result<()> {
    let v = &cfg.viz;
    let mut selectors = v.selectors()?;
    if cfg.kind == ExperimentKind::LayerViz && selectors == [LayerSelector::All] {
        selectors.extend(spec.param_layers().into_iter().map(LayerSelector::Layer));
    }
    progress("training visualization clients");
    let models = train_clients(spec, train, v.scheme()?, &v.local(), noise, cfg.seed)?;
    let projections = selectors
        .iter()
        .map(|&s| project_and_score(&models, s, v.k))
        .collect::<Result<Vec<_>>>()?;
    out.write("projection.csv", projection_csv(&projections).as_bytes())?;
    let baseline = untrained_purity(&models.distributions, v.k)?;
    let mut purity = purity_csv(&projections, v.k);
    let _ = writeln!(purity, "untrained,{},{baseline:?}", v.k);
    out.write("purity.csv", purity.as_bytes())?;
    for p in &projections {
        out.metric(format!("purity_{}", p.selector), p.purity);
    }
    out.metric("untrained_purity", baseline);
    for p in &projections {
        let coords: Vec<[f64; 2]> = p.points.iter().map(|q| q.coords()).collect();
        let labels: Vec<usize> = p.points.iter().map(|q| q.dominant_label).collect();
        let pairs: Vec<(usize, usize)> = v
            .proximity_pairs
            .iter()
            .map(|&[a, b]| (a, b))
            .filter(|(a, b)| labels.contains(a) && labels.contains(b))
            .collect();
        for ((a, b), d) in pairs.iter().zip(semantic_proximity(&coords, &labels, &pairs)?) {
            out.metric(format!("proximity_{a}_{b}_{}", p.selector), d);
        }
    }
    if v.scheme == "dirichlet" {
        if let Some(p) = projections.first() {
            let (low, top) = centroid_drift(&p.points)?;
            out.metric("drift_low_quartile", low);
            out.metric("drift_top_quartile", top);
        }
    }
    Ok(())
}
