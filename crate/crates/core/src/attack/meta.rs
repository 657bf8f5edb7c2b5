use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;

use super::pca::{pca_fit, PcaModel};
use crate::data::{empirical_distribution, sample_dirichlet, Dataset, LabelDistribution, ProxyPool};
use crate::error::{Error, Result};
use crate::federation::{client_update, LocalTraining, NoiseConfig};
use crate::nn::{ModelParams, ModelSpec};
use crate::rng;

const BINARY_MAGIC: &[u8; 8] = b"FLMETA01";

/// How the adversary builds its dummy clients.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaConfig {
    pub alphas: Vec<f64>,
    pub train_per_alpha: usize,
    pub test_per_alpha: usize,
    pub samples_per_client: usize,
    pub hyper: LocalTraining,
    /// Noise the dummies train with; matching the real clients' defense
    /// makes the adversary defense-aware.
    pub noise: NoiseConfig,
    pub pca_dims: usize,
    /// Remove drawn samples from the proxy pools so dummy sets are disjoint.
    pub disjoint: bool,
    pub seed: u64,
}

impl MetaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alphas.is_empty() || self.alphas.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
            return Err(Error::InvalidArgument("alphas must be a non-empty list of positive values".into()));
        }
        if self.train_per_alpha == 0 || self.test_per_alpha == 0 {
            return Err(Error::InvalidArgument("need at least one train and one test dummy per alpha".into()));
        }
        if self.samples_per_client == 0 {
            return Err(Error::InvalidArgument("dummy clients need at least one sample".into()));
        }
        self.noise.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetaSample {
    pub x: Vec<f64>,
    pub y: LabelDistribution,
    pub alpha: f64,
}

/// Records which rows the PCA was fitted on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PcaAudit {
    pub train_rows: usize,
    pub test_rows: usize,
}

/// Pairs of projected parameters and the label distributions behind them.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaDataset {
    pub train: Vec<MetaSample>,
    pub test: Vec<MetaSample>,
    pub pca_audit: PcaAudit,
}

impl MetaDataset {
    pub fn new(train: Vec<MetaSample>, test: Vec<MetaSample>) -> Result<Self> {
        let first = train.first().or(test.first()).ok_or(Error::Empty("meta-dataset"))?;
        let (d, l) = (first.x.len(), first.y.num_labels());
        for s in train.iter().chain(&test) {
            if s.x.len() != d || s.y.num_labels() != l {
                return Err(Error::Shape("meta-dataset rows differ in size".into()));
            }
            if s.x.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument("meta-dataset feature is not finite".into()));
            }
        }
        Ok(Self {
            train,
            test,
            pca_audit: PcaAudit::default(),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.rows().next().map_or(0, |s| s.x.len())
    }

    pub fn num_labels(&self) -> usize {
        self.rows().next().map_or(0, |s| s.y.num_labels())
    }

    fn rows(&self) -> impl Iterator<Item = &MetaSample> {
        self.train.iter().chain(&self.test)
    }

    /// Little-endian binary: magic, `d`, `L`, train and test counts (u64),
    /// then per row `x`, `y` and `alpha` as f64.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(BINARY_MAGIC);
        for v in [self.input_dim(), self.num_labels(), self.train.len(), self.test.len()] {
            out.extend_from_slice(&(v as u64).to_le_bytes());
        }
        for s in self.rows() {
            for v in s.x.iter().chain(s.y.probs()).chain(std::iter::once(&s.alpha)) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |reason: &str| Error::Format {
            path: "<meta-dataset>".into(),
            reason: reason.to_string(),
        };
        if bytes.len() < 40 || &bytes[..8] != BINARY_MAGIC {
            return Err(bad("missing meta-dataset header"));
        }
        let word = |i: usize| u64::from_le_bytes(bytes[8 + 8 * i..16 + 8 * i].try_into().unwrap()) as usize;
        let (d, l, n_train, n_test) = (word(0), word(1), word(2), word(3));
        let width = d + l + 1;
        let expected = (n_train + n_test)
            .checked_mul(width * 8)
            .and_then(|b| b.checked_add(40))
            .ok_or_else(|| bad("header counts overflow"))?;
        if bytes.len() != expected {
            return Err(bad(&format!("expected {expected} bytes, found {}", bytes.len())));
        }
        let values: Vec<f64> = bytes[40..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let rows = values
            .chunks_exact(width)
            .map(|r| row_from_values(r, d, l))
            .collect::<Result<Vec<_>>>()?;
        let mut rows = rows.into_iter();
        let train = rows.by_ref().take(n_train).collect();
        MetaDataset::new(train, rows.collect())
    }

    /// CSV with a `d,L,train,test` header line, its values, a column line,
    /// then train rows followed by test rows.
    pub fn to_csv(&self) -> String {
        let (d, l) = (self.input_dim(), self.num_labels());
        let mut out = format!("d,L,train,test\n{d},{l},{},{}\n", self.train.len(), self.test.len());
        let mut cols: Vec<String> = (0..d).map(|i| format!("x{i}")).collect();
        cols.extend((0..l).map(|i| format!("y{i}")));
        cols.push("alpha".into());
        out.push_str(&cols.join(","));
        out.push('\n');
        for s in self.rows() {
            let vals: Vec<String> = s
                .x
                .iter()
                .chain(s.y.probs())
                .chain(std::iter::once(&s.alpha))
                .map(|v| format!("{v:?}"))
                .collect();
            let _ = writeln!(out, "{}", vals.join(","));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |reason: String| Error::Format {
            path: "<meta-dataset csv>".into(),
            reason,
        };
        let mut lines = text.lines();
        let header: Vec<usize> = lines
            .nth(1)
            .ok_or_else(|| bad("missing header".into()))?
            .split(',')
            .map(|v| v.trim().parse().map_err(|_| bad(format!("bad header value {v:?}"))))
            .collect::<Result<_>>()?;
        let [d, l, n_train, n_test] = header[..] else {
            return Err(bad("header needs four values".into()));
        };
        lines.next();
        let mut rows = Vec::with_capacity(n_train + n_test);
        for line in lines.filter(|s| !s.trim().is_empty()) {
            let vals: Vec<f64> = line
                .split(',')
                .map(|v| v.trim().parse().map_err(|_| bad(format!("bad value {v:?}"))))
                .collect::<Result<_>>()?;
            if vals.len() != d + l + 1 {
                return Err(bad(format!("row has {} values, expected {}", vals.len(), d + l + 1)));
            }
            rows.push(row_from_values(&vals, d, l)?);
        }
        if rows.len() != n_train + n_test {
            return Err(bad(format!("{} rows, header says {}", rows.len(), n_train + n_test)));
        }
        let test = rows.split_off(n_train);
        MetaDataset::new(rows, test)
    }

    pub fn write_binary(&self, path: &Path) -> Result<()> {
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(&self.to_bytes()))
            .map_err(|e| Error::io(path, e))
    }

    pub fn read_binary(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn row_from_values(vals: &[f64], d: usize, l: usize) -> Result<MetaSample> {
    Ok(MetaSample {
        x: vals[..d].to_vec(),
        y: LabelDistribution::new(vals[d..d + l].to_vec())?,
        alpha: vals[d + l],
    })
}

/// A dummy client's data before training.
#[derive(Debug, Clone)]
struct Dummy {
    alpha: f64,
    indices: Vec<usize>,
    seed: u64,
}

fn draw_dummies(dataset: &Dataset, cfg: &MetaConfig, split: u64, per_alpha: usize) -> Result<Vec<Dummy>> {
    let mut pool = ProxyPool::new(dataset, cfg.disjoint);
    let mut out = Vec::with_capacity(cfg.alphas.len() * per_alpha);
    for (a, &alpha) in cfg.alphas.iter().enumerate() {
        for j in 0..per_alpha {
            let seed = rng::derive_seed(cfg.seed, &[rng::tag::DUMMY, split, a as u64, j as u64]);
            let mut r = rng::rng_from(seed, &[rng::tag::PARTITION]);
            let dist = sample_dirichlet(alpha, dataset.num_labels(), &mut r)?;
            let indices = pool.draw(&dist, cfg.samples_per_client, &mut r)?;
            out.push(Dummy { alpha, indices, seed });
        }
    }
    Ok(out)
}

fn train_dummies(
    spec: &ModelSpec,
    global: &ModelParams,
    dataset: &Dataset,
    dummies: &[Dummy],
    cfg: &MetaConfig,
) -> Result<Vec<Vec<f64>>> {
    dummies
        .par_iter()
        .map(|d| {
            client_update(spec, global, dataset, &d.indices, &cfg.hyper, &cfg.noise, d.seed).map(|r| r.params.flatten())
        })
        .collect()
}

/// Trains dummy clients on proxy data and pairs their PCA-projected
/// parameters with the label distributions they actually trained on.
///
/// Train dummies draw from `proxy_train`, test dummies from `proxy_test`.
/// The PCA is fitted on train-split parameters only and then applied to
/// both splits.
pub fn build_meta_dataset(
    spec: &ModelSpec,
    global: &ModelParams,
    proxy_train: &Dataset,
    proxy_test: &Dataset,
    cfg: &MetaConfig,
) -> Result<(MetaDataset, PcaModel)> {
    cfg.validate()?;
    if proxy_train.num_labels() != proxy_test.num_labels() {
        return Err(Error::Shape("proxy splits have different label counts".into()));
    }
    let train_set = draw_dummies(proxy_train, cfg, 0, cfg.train_per_alpha)?;
    let test_set = draw_dummies(proxy_test, cfg, 1, cfg.test_per_alpha)?;

    let train_rows = train_dummies(spec, global, proxy_train, &train_set, cfg)?;
    let pca = pca_fit(&train_rows, cfg.pca_dims)?;
    let train = project(&pca, &train_rows, &train_set, proxy_train)?;
    drop(train_rows);
    // Test-split parameters do not exist until after the fit.
    let test_rows = train_dummies(spec, global, proxy_test, &test_set, cfg)?;
    let test = project(&pca, &test_rows, &test_set, proxy_test)?;

    let mut meta = MetaDataset::new(train, test)?;
    meta.pca_audit = PcaAudit {
        train_rows: train_set.len(),
        test_rows: 0,
    };
    Ok((meta, pca))
}

fn project(pca: &PcaModel, rows: &[Vec<f64>], dummies: &[Dummy], dataset: &Dataset) -> Result<Vec<MetaSample>> {
    rows.iter()
        .zip(dummies)
        .map(|(row, d)| {
            Ok(MetaSample {
                x: pca.apply(row)?,
                y: empirical_distribution(&d.indices, dataset)?,
                alpha: d.alpha,
            })
        })
        .collect()
}
