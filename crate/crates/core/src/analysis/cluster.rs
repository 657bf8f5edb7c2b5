use std::fmt;
use std::str::FromStr;

use crate::attack::pca_fit;
use crate::data::LabelDistribution;
use crate::error::{Error, Result};
use crate::nn::ModelParams;

/// Which parameters feed a projection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSelector {
    All,
    /// Weights and bias of one layer, by index in the model spec.
    Layer(usize),
}

impl LayerSelector {
    pub fn extract(&self, params: &ModelParams) -> Result<Vec<f64>> {
        match *self {
            LayerSelector::All => Ok(params.flatten()),
            LayerSelector::Layer(i) => {
                let v = params.layer_values(i);
                if v.is_empty() {
                    Err(Error::InvalidArgument(format!("layer {i} has no parameters")))
                } else {
                    Ok(v)
                }
            }
        }
    }
}

impl fmt::Display for LayerSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerSelector::All => f.write_str("all"),
            LayerSelector::Layer(i) => write!(f, "{i}"),
        }
    }
}

impl FromStr for LayerSelector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "all" => Ok(LayerSelector::All),
            t => t
                .parse()
                .map(LayerSelector::Layer)
                .map_err(|_| Error::InvalidArgument(format!("layer selector must be \"all\" or an index, got {s:?}"))),
        }
    }
}

/// One client in a 2-D model-latent projection.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionPoint {
    pub client: usize,
    pub x: f64,
    pub y: f64,
    pub dominant_label: usize,
    pub dominant_fraction: f64,
}

impl ProjectionPoint {
    pub fn coords(&self) -> [f64; 2] {
        [self.x, self.y]
    }
}

/// Most frequent label, lowest index on ties.
pub fn dominant_label(dist: &LabelDistribution) -> (usize, f64) {
    let p = dist.probs();
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    (best, p[best])
}

/// Projects the selected parameters of each client onto their top two
/// principal components.
pub fn project_clients(
    params_list: &[ModelParams],
    distributions: &[LabelDistribution],
    selector: LayerSelector,
) -> Result<Vec<ProjectionPoint>> {
    if params_list.len() < 3 {
        return Err(Error::InsufficientSamples(format!(
            "projection needs at least 3 clients, got {}",
            params_list.len()
        )));
    }
    if distributions.len() != params_list.len() {
        return Err(Error::Shape(format!(
            "{} distributions for {} clients",
            distributions.len(),
            params_list.len()
        )));
    }
    let rows = params_list.iter().map(|p| selector.extract(p)).collect::<Result<Vec<_>>>()?;
    let pca = pca_fit(&rows, 2)?;
    rows.iter()
        .zip(distributions)
        .enumerate()
        .map(|(client, (row, dist))| {
            let c = pca.apply(row)?;
            let (dominant_label, dominant_fraction) = dominant_label(dist);
            Ok(ProjectionPoint {
                client,
                x: c[0],
                y: c[1],
                dominant_label,
                dominant_fraction,
            })
        })
        .collect()
}

/// Leave-one-out k-nearest-neighbour purity.
///
/// Neighbours are ordered by squared Euclidean distance, then by index; the
/// majority label among the `k` nearest wins, lowest label on ties. Returns
/// the fraction of points whose vote matches their own label.
pub fn knn_purity(points: &[[f64; 2]], labels: &[usize], k: usize) -> Result<f64> {
    let n = points.len();
    if labels.len() != n {
        return Err(Error::Shape(format!("{} labels for {n} points", labels.len())));
    }
    if k == 0 || k >= n {
        return Err(Error::InvalidArgument(format!("k must be in 1..{n}, got {k}")));
    }
    let num_labels = labels.iter().max().map_or(0, |m| m + 1);
    let mut hits = 0;
    let mut order: Vec<(f64, usize)> = Vec::with_capacity(n - 1);
    let mut votes = vec![0usize; num_labels];
    for i in 0..n {
        order.clear();
        for j in (0..n).filter(|&j| j != i) {
            let dx = points[i][0] - points[j][0];
            let dy = points[i][1] - points[j][1];
            order.push((dx * dx + dy * dy, j));
        }
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        votes.iter_mut().for_each(|v| *v = 0);
        for &(_, j) in &order[..k] {
            votes[labels[j]] += 1;
        }
        let mut winner = 0;
        for (l, &v) in votes.iter().enumerate() {
            if v > votes[winner] {
                winner = l;
            }
        }
        if winner == labels[i] {
            hits += 1;
        }
    }
    Ok(hits as f64 / n as f64)
}

fn centroids(points: &[[f64; 2]], labels: &[usize]) -> Vec<Option<[f64; 2]>> {
    let num_labels = labels.iter().max().map_or(0, |m| m + 1);
    let mut sums = vec![[0.0, 0.0]; num_labels];
    let mut counts = vec![0usize; num_labels];
    for (p, &l) in points.iter().zip(labels) {
        sums[l][0] += p[0];
        sums[l][1] += p[1];
        counts[l] += 1;
    }
    sums.iter()
        .zip(&counts)
        .map(|(s, &c)| (c > 0).then(|| [s[0] / c as f64, s[1] / c as f64]))
        .collect()
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Distances between label-cluster centroids for each pair, divided by the
/// mean distance over all pairs of present labels (0 when that mean is 0).
pub fn semantic_proximity(points: &[[f64; 2]], labels: &[usize], pairs: &[(usize, usize)]) -> Result<Vec<f64>> {
    if labels.len() != points.len() {
        return Err(Error::Shape(format!("{} labels for {} points", labels.len(), points.len())));
    }
    let cents = centroids(points, labels);
    let present: Vec<[f64; 2]> = cents.iter().flatten().copied().collect();
    let mut total = 0.0;
    let mut count = 0usize;
    for i in 0..present.len() {
        for j in i + 1..present.len() {
            total += dist(present[i], present[j]);
            count += 1;
        }
    }
    let mean = if count > 0 { total / count as f64 } else { 0.0 };
    pairs
        .iter()
        .map(|&(a, b)| {
            let get = |l: usize| {
                cents
                    .get(l)
                    .copied()
                    .flatten()
                    .ok_or_else(|| Error::InvalidArgument(format!("label {l} has no points")))
            };
            let d = dist(get(a)?, get(b)?);
            Ok(if mean > 0.0 { d / mean } else { 0.0 })
        })
        .collect()
}

/// Mean distance to the own dominant-label centroid for the bottom and top
/// quartiles of points ranked by dominant fraction.
pub fn centroid_drift(points: &[ProjectionPoint]) -> Result<(f64, f64)> {
    if points.len() < 4 {
        return Err(Error::InsufficientSamples("drift needs at least 4 points".into()));
    }
    let coords: Vec<[f64; 2]> = points.iter().map(ProjectionPoint::coords).collect();
    let labels: Vec<usize> = points.iter().map(|p| p.dominant_label).collect();
    let cents = centroids(&coords, &labels);
    let mut ranked: Vec<(f64, f64)> = points
        .iter()
        .map(|p| {
            let c = cents[p.dominant_label].expect("label present");
            (p.dominant_fraction, dist(p.coords(), c))
        })
        .collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0));
    let q = ranked.len() / 4;
    let mean = |s: &[(f64, f64)]| s.iter().map(|r| r.1).sum::<f64>() / s.len() as f64;
    Ok((mean(&ranked[..q]), mean(&ranked[ranked.len() - q..])))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dominant_label_ties() {
        assert_eq!(dominant_label(&LabelDistribution::uniform(10)), (0, 0.1));
        assert_eq!(dominant_label(&LabelDistribution::one_hot(10, 7)), (7, 1.0));
    }

    #[test]
    fn separated_clusters_are_pure() {
        let mut pts = Vec::new();
        let mut labels = Vec::new();
        for l in 0..10 {
            for j in 0..6 {
                pts.push([l as f64 * 100.0 + j as f64 * 0.01, 0.0]);
                labels.push(l);
            }
        }
        assert_eq!(knn_purity(&pts, &labels, 5).unwrap(), 1.0);
        assert!(knn_purity(&pts, &labels, 60).is_err());
    }

    #[test]
    fn square_geometry() {
        let pts = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        let r = semantic_proximity(&pts, &[0, 1, 2, 3], &[(0, 1), (0, 3)]).unwrap();
        assert!((r[0] / r[1] - 0.5f64.sqrt()).abs() < 1e-12);
        assert!(semantic_proximity(&pts, &[0, 1, 2, 3], &[(0, 4)]).is_err());
        let same = semantic_proximity(&[[1.0, 1.0]; 4], &[0, 0, 1, 1], &[(0, 1)]).unwrap();
        assert_eq!(same, vec![0.0]);
    }

    #[test]
    fn selector_text() {
        assert_eq!("all".parse::<LayerSelector>().unwrap(), LayerSelector::All);
        assert_eq!("2".parse::<LayerSelector>().unwrap(), LayerSelector::Layer(2));
        assert!("x".parse::<LayerSelector>().is_err());
        assert_eq!(LayerSelector::Layer(3).to_string(), "3");
    }
}
