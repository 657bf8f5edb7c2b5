//! Client partitioning schemes and label-distribution sampling.

use rand::seq::index;
use rand::Rng;
use rand_distr::{Binomial, Distribution, Gamma};

use super::{Dataset, LabelDistribution};
use crate::error::{Error, Result};
use crate::rng;

/// Per-client sample indices. Clients never share a sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    assignments: Vec<Vec<usize>>,
}

impl Partition {
    /// Builds a partition, rejecting overlapping or out-of-range indices.
    pub fn new(assignments: Vec<Vec<usize>>, dataset_len: usize) -> Result<Self> {
        let mut seen = vec![false; dataset_len];
        for (client, idx) in assignments.iter().enumerate() {
            for &i in idx {
                if i >= dataset_len {
                    return Err(Error::InvalidArgument(format!(
                        "client {client}: index {i} out of range for {dataset_len} samples"
                    )));
                }
                if std::mem::replace(&mut seen[i], true) {
                    return Err(Error::InvalidArgument(format!(
                        "client {client}: sample {i} assigned twice"
                    )));
                }
            }
        }
        Ok(Partition { assignments })
    }

    pub fn clients(&self) -> usize {
        self.assignments.len()
    }

    pub fn client(&self, k: usize) -> &[usize] {
        &self.assignments[k]
    }

    pub fn assignments(&self) -> &[Vec<usize>] {
        &self.assignments
    }
}

/// `clients` disjoint sets of `per_client` samples drawn uniformly without replacement.
pub fn partition_uniform(dataset: &Dataset, clients: usize, per_client: usize, seed: u64) -> Result<Partition> {
    if clients == 0 || per_client == 0 {
        return Err(Error::InvalidArgument("client count and size must be positive".into()));
    }
    let needed = clients * per_client;
    if needed > dataset.len() {
        return Err(Error::InsufficientSamples(format!(
            "{clients} clients x {per_client} samples needs {needed}, dataset has {}",
            dataset.len()
        )));
    }
    let mut rng = rng::rng_from(seed, &[rng::tag::PARTITION, 1]);
    let picked = index::sample(&mut rng, dataset.len(), needed).into_vec();
    let assignments = picked.chunks(per_client).map(<[usize]>::to_vec).collect();
    Partition::new(assignments, dataset.len())
}

/// Samples of the dominant label in an 80/20 client of size `n`: `floor(0.8 n)`.
pub fn dominant_count(n: usize) -> usize {
    4 * n / 5
}

/// For each label, `clients_per_label` clients whose sets hold `floor(0.8 n)`
/// samples of that label and the remainder dealt round-robin over the other
/// labels in ascending order. Clients are ordered label-major.
pub fn partition_8020(
    dataset: &Dataset,
    clients_per_label: usize,
    n: usize,
    seed: u64,
) -> Result<(Partition, Vec<usize>)> {
    let labels = dataset.num_labels();
    if clients_per_label == 0 || n == 0 || labels < 2 {
        return Err(Error::InvalidArgument("need positive clients, size and >= 2 labels".into()));
    }
    let dom = dominant_count(n);
    let rest = n - dom;
    // Per-label demand: dominant share plus round-robin remainders from every other label's clients.
    let mut demand = vec![dom * clients_per_label; labels];
    for d in 0..labels {
        let others: Vec<usize> = (0..labels).filter(|&l| l != d).collect();
        for j in 0..rest {
            demand[others[j % others.len()]] += clients_per_label;
        }
    }
    let mut rng = rng::rng_from(seed, &[rng::tag::PARTITION, 8020]);
    let mut pools = dataset.indices_by_label();
    for (label, pool) in pools.iter_mut().enumerate() {
        if pool.len() < demand[label] {
            return Err(Error::InsufficientSamples(format!(
                "label {label} needs {} samples, has {}",
                demand[label],
                pool.len()
            )));
        }
        let order = index::sample(&mut rng, pool.len(), pool.len()).into_vec();
        *pool = order.into_iter().map(|i| pool[i]).collect();
    }
    let mut take = |label: usize| pools[label].pop().expect("demand checked above");
    let mut assignments = Vec::with_capacity(labels * clients_per_label);
    let mut dominant = Vec::with_capacity(labels * clients_per_label);
    for d in 0..labels {
        let others: Vec<usize> = (0..labels).filter(|&l| l != d).collect();
        for _ in 0..clients_per_label {
            let mut idx: Vec<usize> = (0..dom).map(|_| take(d)).collect();
            idx.extend((0..rest).map(|j| take(others[j % others.len()])));
            assignments.push(idx);
            dominant.push(d);
        }
    }
    Ok((Partition::new(assignments, dataset.len())?, dominant))
}

/// Draw from a symmetric Dirichlet(alpha, .., alpha) by normalizing Gamma(alpha, 1) draws.
pub fn sample_dirichlet<R: Rng + ?Sized>(alpha: f64, labels: usize, rng: &mut R) -> Result<LabelDistribution> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidArgument(format!("alpha must be positive, got {alpha}")));
    }
    if labels == 0 {
        return Err(Error::InvalidArgument("need at least one label".into()));
    }
    let gamma = Gamma::new(alpha, 1.0).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    loop {
        let draws: Vec<f64> = (0..labels).map(|_| gamma.sample(rng)).collect();
        let sum: f64 = draws.iter().sum();
        // Every draw can underflow to zero for very small alpha; try again.
        if sum > 0.0 && sum.is_finite() {
            return LabelDistribution::new(draws.into_iter().map(|g| g / sum).collect());
        }
    }
}

/// Multinomial counts by sequential binomial decomposition.
pub fn sample_multinomial<R: Rng + ?Sized>(n: usize, probs: &[f64], rng: &mut R) -> Vec<usize> {
    let mut counts = vec![0; probs.len()];
    let mut left = n as u64;
    let mut mass: f64 = probs.iter().sum();
    for (i, &p) in probs.iter().enumerate() {
        if left == 0 {
            break;
        }
        if i + 1 == probs.len() {
            counts[i] = left as usize;
            break;
        }
        let q = if mass > 0.0 { (p / mass).clamp(0.0, 1.0) } else { 0.0 };
        let c = Binomial::new(left, q).expect("probability clamped to [0, 1]").sample(rng);
        counts[i] = c as usize;
        left -= c;
        mass -= p;
    }
    counts
}

/// Per-label index pools used to draw dummy-client data from proxy samples.
///
/// In consuming mode drawn samples are removed, so successive draws are
/// disjoint. Otherwise each draw is without replacement internally but
/// independent of earlier draws.
#[derive(Debug, Clone)]
pub struct ProxyPool {
    by_label: Vec<Vec<usize>>,
    consume: bool,
}

impl ProxyPool {
    pub fn new(dataset: &Dataset, consume: bool) -> Self {
        ProxyPool {
            by_label: dataset.indices_by_label(),
            consume,
        }
    }

    pub fn available(&self, label: usize) -> usize {
        self.by_label[label].len()
    }

    pub fn total_available(&self) -> usize {
        self.by_label.iter().map(Vec::len).sum()
    }

    pub fn num_labels(&self) -> usize {
        self.by_label.len()
    }

    /// See [`partition_from_distribution`].
    pub fn draw<R: Rng + ?Sized>(&mut self, dist: &LabelDistribution, n: usize, rng: &mut R) -> Result<Vec<usize>> {
        let labels = self.num_labels();
        if dist.num_labels() != labels {
            return Err(Error::Shape(format!(
                "distribution over {} labels, pool has {labels}",
                dist.num_labels()
            )));
        }
        if n > self.total_available() {
            return Err(Error::PoolExhausted {
                requested: n,
                available: self.total_available(),
            });
        }
        let mut counts = sample_multinomial(n, dist.probs(), rng);
        loop {
            let mut excess = 0;
            for (l, c) in counts.iter_mut().enumerate() {
                let cap = self.available(l);
                if *c > cap {
                    excess += *c - cap;
                    *c = cap;
                }
            }
            if excess == 0 {
                break;
            }
            // Redraw the overflow from classes that still have room, keeping
            // the requested proportions where possible.
            let spare: Vec<bool> = (0..labels).map(|l| counts[l] < self.available(l)).collect();
            let mut weights: Vec<f64> = (0..labels)
                .map(|l| if spare[l] { dist.probs()[l] } else { 0.0 })
                .collect();
            if weights.iter().all(|&w| w == 0.0) {
                weights = (0..labels)
                    .map(|l| if spare[l] { (self.available(l) - counts[l]) as f64 } else { 0.0 })
                    .collect();
            }
            for (c, extra) in counts.iter_mut().zip(sample_multinomial(excess, &weights, rng)) {
                *c += extra;
            }
        }
        let mut out = Vec::with_capacity(n);
        for (label, &c) in counts.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let pool = &mut self.by_label[label];
            let mut picks = index::sample(rng, pool.len(), c).into_vec();
            out.extend(picks.iter().map(|&p| pool[p]));
            if self.consume {
                picks.sort_unstable_by(|a, b| b.cmp(a));
                for p in picks {
                    pool.swap_remove(p);
                }
            }
        }
        Ok(out)
    }
}

/// Draws `n` indices whose label counts are multinomial in `dist`, sampling
/// uniformly without replacement inside each label's pool. A label whose pool
/// runs dry has its overflow re-sampled over the labels that still have
/// samples; callers should record the realized distribution.
pub fn partition_from_distribution<R: Rng + ?Sized>(
    pool: &mut ProxyPool,
    dist: &LabelDistribution,
    n: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    pool.draw(dist, n, rng)
}

/// Normalized label counts of the selected samples.
pub fn empirical_distribution(indices: &[usize], dataset: &Dataset) -> Result<LabelDistribution> {
    if indices.is_empty() {
        return Err(Error::Empty("sample set"));
    }
    let mut counts = vec![0; dataset.num_labels()];
    for &i in indices {
        let label = *dataset.labels().get(i).ok_or_else(|| {
            Error::InvalidArgument(format!("sample index {i} out of range"))
        })?;
        counts[label] += 1;
    }
    LabelDistribution::from_counts(&counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_dataset;

    fn labelled(labels: &[usize], num_labels: usize) -> Dataset {
        Dataset::new(vec![1], vec![0.0; labels.len()], labels.to_vec(), num_labels).unwrap()
    }

    #[test]
    fn partition_rejects_overlap() {
        assert!(Partition::new(vec![vec![0, 1], vec![1]], 3).is_err());
        assert!(Partition::new(vec![vec![0, 5]], 3).is_err());
        assert!(Partition::new(vec![vec![0], vec![2]], 3).is_ok());
    }

    #[test]
    fn uniform_whole_dataset() {
        let d = synth_dataset(3, 30, 2, 0).unwrap();
        let p = partition_uniform(&d, 1, 30, 4).unwrap();
        let mut all = p.client(0).to_vec();
        all.sort_unstable();
        assert_eq!(all, (0..30).collect::<Vec<_>>());
        assert!(matches!(partition_uniform(&d, 4, 8, 0), Err(Error::InsufficientSamples(_))));
    }

    #[test]
    fn eighty_twenty_counts() {
        let labels: Vec<usize> = (0..2000).map(|i| i % 10).collect();
        let d = labelled(&labels, 10);
        let (p, dom) = partition_8020(&d, 1, 100, 3).unwrap();
        assert_eq!(p.clients(), 10);
        let dist = empirical_distribution(p.client(3), &d).unwrap();
        assert_eq!(dom[3], 3);
        assert_eq!(dist.probs()[3], 0.8);
        // 20 leftovers over 9 labels: the two lowest other labels get 3, the rest 2.
        let others: Vec<f64> = (0..10).filter(|&l| l != 3).map(|l| dist.probs()[l]).collect();
        assert_eq!(others, vec![0.03, 0.03, 0.02, 0.02, 0.02, 0.02, 0.02, 0.02, 0.02]);
    }

    #[test]
    fn eighty_twenty_insufficient() {
        let labels: Vec<usize> = (0..100).map(|i| i % 10).collect();
        assert!(matches!(
            partition_8020(&labelled(&labels, 10), 2, 10, 0),
            Err(Error::InsufficientSamples(_))
        ));
    }

    #[test]
    fn empirical_distribution_basics() {
        let d = labelled(&[0, 0, 1, 1], 2);
        assert_eq!(empirical_distribution(&[0, 1, 2, 3], &d).unwrap().probs(), &[0.5, 0.5]);
        assert_eq!(empirical_distribution(&[2, 3], &d).unwrap().probs(), &[0.0, 1.0]);
        assert!(matches!(empirical_distribution(&[], &d), Err(Error::Empty(_))));
    }

    #[test]
    fn one_hot_draw_and_empty_draw() {
        let labels: Vec<usize> = (0..1000).map(|i| i % 10).collect();
        let d = labelled(&labels, 10);
        let mut pool = ProxyPool::new(&d, true);
        let mut rng = rng::rng_from(5, &[]);
        let idx = pool.draw(&LabelDistribution::one_hot(10, 7), 50, &mut rng).unwrap();
        assert_eq!(idx.len(), 50);
        assert!(idx.iter().all(|&i| d.labels()[i] == 7));
        assert_eq!(pool.available(7), 50);
        assert!(pool.draw(&LabelDistribution::uniform(10), 0, &mut rng).unwrap().is_empty());
    }

    #[test]
    fn exhausted_class_spills_over() {
        let labels: Vec<usize> = (0..100).map(|i| i % 10).collect();
        let d = labelled(&labels, 10);
        let mut pool = ProxyPool::new(&d, true);
        let mut rng = rng::rng_from(9, &[]);
        let idx = pool.draw(&LabelDistribution::one_hot(10, 2), 25, &mut rng).unwrap();
        let realized = empirical_distribution(&idx, &d).unwrap();
        assert_eq!(realized.probs()[2], 10.0 / 25.0);
        let mut sorted = idx.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 25);
        assert!(matches!(
            pool.draw(&LabelDistribution::uniform(10), 80, &mut rng),
            Err(Error::PoolExhausted { .. })
        ));
    }

    #[test]
    fn multinomial_conserves_total() {
        let mut rng = rng::rng_from(1, &[]);
        for n in [0, 1, 17, 500] {
            let c = sample_multinomial(n, &[0.2, 0.0, 0.5, 0.3], &mut rng);
            assert_eq!(c.iter().sum::<usize>(), n);
            assert_eq!(c[1], 0);
        }
    }

    #[test]
    fn dirichlet_is_valid() {
        let mut rng = rng::rng_from(2, &[]);
        for alpha in [0.01, 0.1, 1.0, 1000.0] {
            let d = sample_dirichlet(alpha, 10, &mut rng).unwrap();
            assert!(d.probs().iter().all(|&p| p >= 0.0));
        }
        assert!(sample_dirichlet(0.0, 10, &mut rng).is_err());
    }
}
