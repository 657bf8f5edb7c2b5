use crate::error::{Error, Result};
use crate::nn::Tensor;

/// Labelled samples with inputs scaled to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    sample_shape: Vec<usize>,
    /// Row-major, one `sample_len()` block per sample.
    inputs: Vec<f64>,
    labels: Vec<usize>,
    num_labels: usize,
}

impl Dataset {
    pub fn new(
        sample_shape: Vec<usize>,
        inputs: Vec<f64>,
        labels: Vec<usize>,
        num_labels: usize,
    ) -> Result<Self> {
        let per: usize = sample_shape.iter().product();
        if per == 0 || sample_shape.is_empty() {
            return Err(Error::Shape(format!("bad sample shape {sample_shape:?}")));
        }
        if inputs.len() != per * labels.len() {
            return Err(Error::Shape(format!(
                "{} input values for {} samples of {per}",
                inputs.len(),
                labels.len()
            )));
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= num_labels) {
            return Err(Error::LabelOutOfRange { label, num_labels });
        }
        Ok(Dataset {
            sample_shape,
            inputs,
            labels,
            num_labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn sample_shape(&self) -> &[usize] {
        &self.sample_shape
    }

    pub fn sample_len(&self) -> usize {
        self.sample_shape.iter().product()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn input(&self, i: usize) -> &[f64] {
        let w = self.sample_len();
        &self.inputs[i * w..(i + 1) * w]
    }

    /// Stacks the selected samples into a `[n, sample_shape..]` batch.
    pub fn batch(&self, indices: &[usize]) -> Result<Tensor> {
        if indices.is_empty() {
            return Err(Error::Empty("batch indices"));
        }
        let w = self.sample_len();
        let mut data = Vec::with_capacity(indices.len() * w);
        for &i in indices {
            if i >= self.len() {
                return Err(Error::InvalidArgument(format!(
                    "sample index {i} out of range for {} samples",
                    self.len()
                )));
            }
            data.extend_from_slice(self.input(i));
        }
        let mut shape = vec![indices.len()];
        shape.extend_from_slice(&self.sample_shape);
        Tensor::new(shape, data)
    }

    pub fn batch_labels(&self, indices: &[usize]) -> Vec<usize> {
        indices.iter().map(|&i| self.labels[i]).collect()
    }

    /// Sample indices grouped by label, ascending within each label.
    pub fn indices_by_label(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_labels];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l].push(i);
        }
        out
    }

    pub fn label_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_labels];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// The first `n` samples (or all of them when `n >= len`).
    pub fn truncated(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        Dataset {
            sample_shape: self.sample_shape.clone(),
            inputs: self.inputs[..n * self.sample_len()].to_vec(),
            labels: self.labels[..n].to_vec(),
            num_labels: self.num_labels,
        }
    }

    /// Splits into the first `n` samples and the rest.
    pub fn split_at(&self, n: usize) -> (Dataset, Dataset) {
        let n = n.min(self.len());
        let cut = n * self.sample_len();
        let part = |inputs: &[f64], labels: &[usize]| Dataset {
            sample_shape: self.sample_shape.clone(),
            inputs: inputs.to_vec(),
            labels: labels.to_vec(),
            num_labels: self.num_labels,
        };
        (
            part(&self.inputs[..cut], &self.labels[..n]),
            part(&self.inputs[cut..], &self.labels[n..]),
        )
    }

    /// Same inputs with every label set to 0. Training an unsupervised model on
    /// this copy proves that labels cannot influence it.
    pub fn with_scrubbed_labels(&self) -> Dataset {
        Dataset {
            labels: vec![0; self.len()],
            ..self.clone()
        }
    }

    pub fn with_sample_shape(mut self, shape: Vec<usize>) -> Result<Dataset> {
        if shape.iter().product::<usize>() != self.sample_len() {
            return Err(Error::Shape(format!(
                "cannot view {:?} samples as {shape:?}",
                self.sample_shape
            )));
        }
        self.sample_shape = shape;
        Ok(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validates_labels_and_lengths() {
        assert!(Dataset::new(vec![2], vec![0.0; 4], vec![0, 1], 2).is_ok());
        assert!(Dataset::new(vec![2], vec![0.0; 3], vec![0, 1], 2).is_err());
        assert!(matches!(
            Dataset::new(vec![2], vec![0.0; 4], vec![0, 2], 2),
            Err(Error::LabelOutOfRange { label: 2, .. })
        ));
    }

    #[test]
    fn batches_stack_samples() {
        let d = Dataset::new(vec![2], vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5], vec![0, 1, 0], 2).unwrap();
        let b = d.batch(&[2, 0]).unwrap();
        assert_eq!(b.shape(), &[2, 2]);
        assert_eq!(b.data(), &[0.4, 0.5, 0.0, 0.1]);
        assert_eq!(d.batch_labels(&[2, 1]), vec![0, 1]);
        assert!(d.batch(&[3]).is_err());
    }
}
