use super::linalg::{dot, symmetric_eigen};
use super::MlError;

/// How the principal axes are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PcaMethod {
    /// Gram when there are more dimensions than samples, covariance otherwise.
    Auto,
    /// Eigen-decomposition of the `d x d` covariance matrix.
    Covariance,
    /// Snapshot method: eigen-decomposition of the `n x n` Gram matrix of
    /// the centred samples, lifted back to `d` dimensions.
    Gram,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// Orthonormal axes, by descending eigenvalue.
    pub components: Vec<Vec<f64>>,
    /// Sample-covariance eigenvalues (divisor `n - 1`).
    pub eigenvalues: Vec<f64>,
    /// Fewer than the requested number of components carried variance.
    pub truncated: bool,
}

impl PcaModel {
    pub fn dims(&self) -> usize {
        self.mean.len()
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }
}

pub fn pca_fit(data: &[Vec<f64>], k: usize) -> Result<PcaModel, MlError> {
    pca_fit_with(data, k, PcaMethod::Auto)
}

/// Flip so the entry of largest magnitude is positive.
fn canonical_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|&x| x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

fn normalize(v: &mut [f64]) {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

pub fn pca_fit_with(data: &[Vec<f64>], k: usize, method: PcaMethod) -> Result<PcaModel, MlError> {
    let n = data.len();
    if n < 2 {
        return Err(MlError::InvalidArgument(
            "PCA needs at least two samples".into(),
        ));
    }
    let d = data[0].len();
    for (i, row) in data.iter().enumerate() {
        if row.len() != d {
            return Err(MlError::DimensionMismatch {
                expected: d,
                got: row.len(),
            });
        }
        if row.iter().any(|x| !x.is_finite()) {
            return Err(MlError::NonFinite(i));
        }
    }
    let max_k = d.min(n - 1);
    if k == 0 || k > max_k {
        return Err(MlError::InvalidArgument(format!(
            "k must be in 1..={max_k}, got {k}"
        )));
    }

    let mut mean = vec![0.0; d];
    for row in data {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centred: Vec<Vec<f64>> = data
        .iter()
        .map(|r| r.iter().zip(&mean).map(|(x, m)| x - m).collect())
        .collect();
    let denom = (n - 1) as f64;

    let method = match method {
        PcaMethod::Auto if d > n => PcaMethod::Gram,
        PcaMethod::Auto => PcaMethod::Covariance,
        m => m,
    };

    let (mut components, mut eigenvalues, truncated) = match method {
        PcaMethod::Covariance => {
            let mut cov = vec![0.0; d * d];
            for row in &centred {
                for i in 0..d {
                    for j in i..d {
                        cov[i * d + j] += row[i] * row[j];
                    }
                }
            }
            for i in 0..d {
                for j in i..d {
                    cov[i * d + j] /= denom;
                    cov[j * d + i] = cov[i * d + j];
                }
            }
            let eig = symmetric_eigen(&cov, d);
            let tol = eig.values.first().copied().unwrap_or(0.0).abs() * 1e-12;
            let values: Vec<f64> = eig.values[..k].iter().map(|&l| l.max(0.0)).collect();
            let truncated = values.iter().any(|&l| l <= tol);
            (eig.vectors[..k].to_vec(), values, truncated)
        }
        PcaMethod::Gram | PcaMethod::Auto => {
            let mut gram = vec![0.0; n * n];
            for i in 0..n {
                for j in i..n {
                    let g = dot(&centred[i], &centred[j]);
                    gram[i * n + j] = g;
                    gram[j * n + i] = g;
                }
            }
            let eig = symmetric_eigen(&gram, n);
            let tol = eig.values.first().copied().unwrap_or(0.0).abs() * 1e-10;
            let mut comps = Vec::with_capacity(k);
            let mut values = Vec::with_capacity(k);
            for (lambda, u) in eig.values.iter().zip(&eig.vectors).take(k) {
                if *lambda <= tol || *lambda <= 0.0 {
                    break;
                }
                let mut v = vec![0.0; d];
                for (ui, row) in u.iter().zip(&centred) {
                    for (vj, xj) in v.iter_mut().zip(row) {
                        *vj += ui * xj;
                    }
                }
                normalize(&mut v);
                comps.push(v);
                values.push(lambda / denom);
            }
            let truncated = comps.len() < k;
            (comps, values, truncated)
        }
    };
    for c in &mut components {
        canonical_sign(c);
    }
    // Rounding can leave equal eigenvalues marginally out of order.
    for i in 1..eigenvalues.len() {
        if eigenvalues[i] > eigenvalues[i - 1] {
            eigenvalues[i] = eigenvalues[i - 1];
        }
    }
    Ok(PcaModel {
        mean,
        components,
        eigenvalues,
        truncated,
    })
}

pub fn pca_project(model: &PcaModel, x: &[f64]) -> Result<Vec<f64>, MlError> {
    if x.len() != model.dims() {
        return Err(MlError::DimensionMismatch {
            expected: model.dims(),
            got: x.len(),
        });
    }
    let centred: Vec<f64> = x.iter().zip(&model.mean).map(|(a, m)| a - m).collect();
    Ok(model.components.iter().map(|c| dot(c, &centred)).collect())
}

pub fn pca_reconstruct(model: &PcaModel, z: &[f64]) -> Result<Vec<f64>, MlError> {
    if z.len() != model.k() {
        return Err(MlError::DimensionMismatch {
            expected: model.k(),
            got: z.len(),
        });
    }
    let mut out = model.mean.clone();
    for (zi, c) in z.iter().zip(&model.components) {
        for (o, ci) in out.iter_mut().zip(c) {
            *o += zi * ci;
        }
    }
    Ok(out)
}
