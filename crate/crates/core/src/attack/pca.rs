use crate::error::{Error, Result};
use crate::nn::gemm;

/// Relative off-diagonal norm at which Jacobi sweeps stop.
pub const JACOBI_TOLERANCE: f64 = 1e-10;
const MAX_SWEEPS: usize = 100;

/// Which symmetric matrix is diagonalised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PcaMethod {
    /// Gram when `n < D`, covariance otherwise.
    #[default]
    Auto,
    /// `n x n` matrix of centered row inner products.
    Gram,
    /// `D x D` covariance matrix.
    Covariance,
}

/// A fitted linear projection onto the leading principal components.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    mean: Vec<f64>,
    /// `dims x D`, row-major.
    components: Vec<f64>,
    explained_variance: Vec<f64>,
    /// Components with (numerically) zero variance, completed by Gram-Schmidt.
    degenerate: Vec<bool>,
}

impl PcaModel {
    pub fn dims(&self) -> usize {
        self.explained_variance.len()
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn component(&self, i: usize) -> &[f64] {
        let d = self.input_dim();
        &self.components[i * d..(i + 1) * d]
    }

    /// Variance of the training rows along each component (denominator `n - 1`).
    pub fn explained_variance(&self) -> &[f64] {
        &self.explained_variance
    }

    pub fn degenerate(&self) -> &[bool] {
        &self.degenerate
    }

    pub fn has_degenerate(&self) -> bool {
        self.degenerate.iter().any(|&f| f)
    }

    /// `components . (row - mean)`.
    pub fn apply(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "PCA expects {} inputs, got {}",
                self.input_dim(),
                row.len()
            )));
        }
        let centered: Vec<f64> = row.iter().zip(&self.mean).map(|(x, m)| x - m).collect();
        Ok((0..self.dims())
            .map(|i| self.component(i).iter().zip(&centered).map(|(c, x)| c * x).sum())
            .collect())
    }

    /// `mean + components^T . coords`.
    pub fn reconstruct(&self, coords: &[f64]) -> Result<Vec<f64>> {
        if coords.len() != self.dims() {
            return Err(Error::Shape(format!("expected {} coordinates, got {}", self.dims(), coords.len())));
        }
        let mut out = self.mean.clone();
        for (i, &c) in coords.iter().enumerate() {
            for (o, v) in out.iter_mut().zip(self.component(i)) {
                *o += c * v;
            }
        }
        Ok(out)
    }

    /// Rebuilds a model from stored parts, checking orthonormality loosely.
    pub fn from_parts(mean: Vec<f64>, components: Vec<Vec<f64>>, explained_variance: Vec<f64>) -> Result<Self> {
        let d = mean.len();
        if components.len() != explained_variance.len() || components.iter().any(|c| c.len() != d) {
            return Err(Error::Shape("PCA parts have inconsistent sizes".into()));
        }
        let degenerate = explained_variance.iter().map(|&v| v == 0.0).collect();
        Ok(Self {
            mean,
            components: components.concat(),
            explained_variance,
            degenerate,
        })
    }
}

/// Fits PCA with [`PcaMethod::Auto`].
pub fn pca_fit(rows: &[Vec<f64>], dims: usize) -> Result<PcaModel> {
    pca_fit_with(rows, dims, PcaMethod::Auto)
}

/// Fits the top `dims` principal components of `rows`.
///
/// Each component's largest-magnitude entry is made positive. Components
/// beyond the rank of the centered data get zero explained variance, are
/// completed to an orthonormal set by Gram-Schmidt, and are flagged in
/// [`PcaModel::degenerate`].
pub fn pca_fit_with(rows: &[Vec<f64>], dims: usize, method: PcaMethod) -> Result<PcaModel> {
    let n = rows.len();
    if n < 2 {
        return Err(Error::InsufficientSamples(format!("PCA needs at least 2 rows, got {n}")));
    }
    let width = rows[0].len();
    if width == 0 || rows.iter().any(|r| r.len() != width) {
        return Err(Error::Shape("PCA rows must share a positive length".into()));
    }
    if dims == 0 || dims > (n - 1).min(width) {
        return Err(Error::InvalidArgument(format!(
            "PCA dims must be in 1..={}, got {dims}",
            (n - 1).min(width)
        )));
    }

    // A running mean is exact when all rows are equal.
    let mut mean = rows[0].clone();
    for (i, row) in rows.iter().enumerate().skip(1) {
        let w = 1.0 / (i + 1) as f64;
        for (m, x) in mean.iter_mut().zip(row) {
            *m += w * (x - *m);
        }
    }
    let mut centered = Vec::with_capacity(n * width);
    for row in rows {
        centered.extend(row.iter().zip(&mean).map(|(x, m)| x - m));
    }

    let use_gram = match method {
        PcaMethod::Auto => n < width,
        PcaMethod::Gram => true,
        PcaMethod::Covariance => false,
    };
    let (mut components, variance) = if use_gram {
        gram_components(&centered, n, width, dims)?
    } else {
        covariance_components(&centered, n, width, dims)?
    };

    let scale = variance.first().copied().unwrap_or(0.0).max(0.0);
    let cutoff = scale * 1e-12;
    let mut explained = Vec::with_capacity(dims);
    let mut degenerate = Vec::with_capacity(dims);
    for (i, &v) in variance.iter().enumerate() {
        let flat = !(v > cutoff) || components[i].is_none();
        degenerate.push(flat);
        explained.push(if flat { 0.0 } else { v });
        if flat {
            components[i] = None;
        }
    }
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(dims);
    for slot in components.iter_mut() {
        let v = match slot.take() {
            Some(v) => v,
            None => complete_basis(&basis, width)?,
        };
        basis.push(v);
    }
    for v in &mut basis {
        fix_sign(v);
    }
    Ok(PcaModel {
        mean,
        components: basis.concat(),
        explained_variance: explained,
        degenerate,
    })
}

/// Eigenpairs of the `n x n` Gram matrix mapped back to `D`-space.
fn gram_components(x: &[f64], n: usize, width: usize, dims: usize) -> Result<(Vec<Option<Vec<f64>>>, Vec<f64>)> {
    let mut gram = vec![0.0; n * n];
    gemm(n, width, n, 1.0, x, (width, 1), x, (1, width), 0.0, &mut gram, (n, 1));
    symmetrize(&mut gram, n);
    let (values, vectors) = symmetric_eigen(gram, n)?;
    let mut comps = Vec::with_capacity(dims);
    let mut var = Vec::with_capacity(dims);
    for i in 0..dims {
        let lambda = values[i];
        var.push(lambda / (n - 1) as f64);
        if lambda > 0.0 {
            let u = &vectors[i * n..(i + 1) * n];
            let mut v = vec![0.0; width];
            gemm(1, n, width, 1.0 / lambda.sqrt(), u, (n, 1), x, (width, 1), 0.0, &mut v, (width, 1));
            comps.push(Some(v));
        } else {
            comps.push(None);
        }
    }
    Ok((comps, var))
}

fn covariance_components(
    x: &[f64],
    n: usize,
    width: usize,
    dims: usize,
) -> Result<(Vec<Option<Vec<f64>>>, Vec<f64>)> {
    let mut cov = vec![0.0; width * width];
    gemm(width, n, width, 1.0 / (n - 1) as f64, x, (1, width), x, (width, 1), 0.0, &mut cov, (width, 1));
    symmetrize(&mut cov, width);
    let (values, vectors) = symmetric_eigen(cov, width)?;
    let comps = (0..dims).map(|i| Some(vectors[i * width..(i + 1) * width].to_vec())).collect();
    Ok((comps, values[..dims].to_vec()))
}

fn symmetrize(a: &mut [f64], n: usize) {
    for i in 0..n {
        for j in i + 1..n {
            let m = 0.5 * (a[i * n + j] + a[j * n + i]);
            a[i * n + j] = m;
            a[j * n + i] = m;
        }
    }
}

/// Eigen-decomposition of a symmetric `n x n` row-major matrix by cyclic
/// Jacobi rotations.
///
/// Returns eigenvalues in descending order and the matching unit
/// eigenvectors as the rows of an `n x n` matrix. Sweeps continue until the
/// off-diagonal Frobenius norm is at most [`JACOBI_TOLERANCE`] times the
/// matrix norm.
pub fn symmetric_eigen(mut a: Vec<f64>, n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if a.len() != n * n {
        return Err(Error::Shape(format!("expected {} entries, got {}", n * n, a.len())));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("matrix has non-finite entries".into()));
    }
    // Rows of `vt` are the eigenvectors, so rotations touch contiguous memory.
    let mut vt = vec![0.0; n * n];
    for i in 0..n {
        vt[i * n + i] = 1.0;
    }
    let total: f64 = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let off_norm = |a: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                s += 2.0 * a[i * n + j] * a[i * n + j];
            }
        }
        s.sqrt()
    };
    let target = JACOBI_TOLERANCE * total;
    let skip = 1e-3 * target / n.max(1) as f64;
    let mut sweeps = 0;
    while off_norm(&a) > target {
        if sweeps == MAX_SWEEPS {
            return Err(Error::NoConvergence(format!("Jacobi eigen-solver after {MAX_SWEEPS} sweeps")));
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq.abs() <= skip {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                rotate_rows(&mut a, n, p, q, c, s);
                a[p * n + p] = app - t * apq;
                a[q * n + q] = aqq + t * apq;
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                for k in 0..n {
                    if k != p && k != q {
                        a[k * n + p] = a[p * n + k];
                        a[k * n + q] = a[q * n + k];
                    }
                }
                rotate_rows(&mut vt, n, p, q, c, s);
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j * n + j].total_cmp(&a[i * n + i]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| a[i * n + i]).collect();
    let mut vectors = Vec::with_capacity(n * n);
    for &i in &order {
        vectors.extend_from_slice(&vt[i * n..(i + 1) * n]);
    }
    Ok((values, vectors))
}

/// Applies `row_p <- c row_p - s row_q`, `row_q <- s row_p + c row_q`.
fn rotate_rows(m: &mut [f64], n: usize, p: usize, q: usize, c: f64, s: f64) {
    let (head, tail) = m.split_at_mut(q * n);
    let rp = &mut head[p * n..(p + 1) * n];
    let rq = &mut tail[..n];
    for (x, y) in rp.iter_mut().zip(rq.iter_mut()) {
        let (xp, xq) = (*x, *y);
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

/// A unit vector orthogonal to `basis`, built from the first standard basis
/// vector that survives orthogonalisation.
fn complete_basis(basis: &[Vec<f64>], width: usize) -> Result<Vec<f64>> {
    for e in 0..width {
        let mut v = vec![0.0; width];
        v[e] = 1.0;
        // Two passes of modified Gram-Schmidt for numerical orthogonality.
        for _ in 0..2 {
            for b in basis {
                let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                for (x, y) in v.iter_mut().zip(b) {
                    *x -= dot * y;
                }
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            v.iter_mut().for_each(|x| *x /= norm);
            return Ok(v);
        }
    }
    Err(Error::InvalidArgument("cannot complete an orthonormal basis".into()))
}

/// Makes the largest-magnitude entry positive (first index wins ties).
fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobi_two_by_two() {
        let (vals, vecs) = symmetric_eigen(vec![2.0, 1.0, 1.0, 2.0], 2).unwrap();
        assert!((vals[0] - 3.0).abs() < 1e-12 && (vals[1] - 1.0).abs() < 1e-12);
        let h = 0.5f64.sqrt();
        assert!((vecs[0].abs() - h).abs() < 1e-12 && (vecs[1].abs() - h).abs() < 1e-12);
    }

    #[test]
    fn identical_rows_project_to_zero() {
        let rows = vec![vec![1.5, -2.0, 0.25]; 4];
        let m = pca_fit(&rows, 2).unwrap();
        assert_eq!(m.mean(), &rows[0][..]);
        assert!(m.degenerate().iter().all(|&f| f));
        assert_eq!(m.apply(&rows[0]).unwrap(), vec![0.0, 0.0]);
        for i in 0..2 {
            let norm: f64 = m.component(i).iter().map(|x| x * x).sum();
            assert!((norm - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn planar_points_in_five_dims() {
        let rows = vec![
            vec![1.0, 0.0, 2.0, 0.0, 1.0],
            vec![0.0, 1.0, 0.0, 3.0, 0.0],
            vec![2.0, 2.0, 1.0, 1.0, 0.5],
        ];
        let m = pca_fit(&rows, 2).unwrap();
        let total: f64 = (0..5)
            .map(|j| {
                let mean = rows.iter().map(|r| r[j]).sum::<f64>() / 3.0;
                rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / 2.0
            })
            .sum();
        let captured: f64 = m.explained_variance().iter().sum();
        assert!((captured - total).abs() < 1e-9 * total);
        assert!(!m.has_degenerate());
    }

    #[test]
    fn dims_and_dimension_checks() {
        let rows = vec![vec![0.0, 1.0], vec![1.0, 0.0], vec![2.0, 2.0]];
        assert!(pca_fit(&rows, 3).is_err());
        assert!(pca_fit(&rows, 0).is_err());
        assert!(pca_fit(&rows[..1], 1).is_err());
        let m = pca_fit(&rows, 2).unwrap();
        assert!(matches!(m.apply(&[1.0]), Err(Error::Shape(_))));
        assert_eq!(m.apply(m.mean()).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn sign_convention() {
        let mut v = vec![0.1, -0.9, 0.3];
        fix_sign(&mut v);
        assert_eq!(v, vec![-0.1, 0.9, -0.3]);
    }
}
