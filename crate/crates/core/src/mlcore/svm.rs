use super::linalg::dot;
use super::MlError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Class {
    Positive,
    Negative,
}

impl Class {
    pub fn sign(self) -> f64 {
        match self {
            Class::Positive => 1.0,
            Class::Negative => -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: Class,
}

impl Sample {
    pub fn new(features: Vec<f64>, label: Class) -> Self {
        Sample { features, label }
    }
}

/// Class names behind the `+1` / `-1` labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    pub positive: String,
    pub negative: String,
}

impl Default for LabelMap {
    fn default() -> Self {
        LabelMap {
            positive: "+1".into(),
            negative: "-1".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmParams {
    pub c: f64,
    /// Stop once the maximal KKT violating pair differs by less than this.
    pub tol: f64,
    /// Upper bound on optimisation passes, each `n` pair updates long.
    pub max_epochs: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            c: 1.0,
            tol: 1e-5,
            max_epochs: 10_000,
        }
    }
}

/// Linear soft-margin classifier `sign(w . x + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub c: f64,
    /// Training samples with a non-zero dual coefficient.
    pub sv_count: usize,
    /// Geometric margin `2 / |w|`.
    pub margin: f64,
    pub label_map: LabelMap,
    /// Largest KKT violation of the returned solution on the training set.
    pub kkt_residual: f64,
    /// Primal objective `|w|^2 / 2 + C * sum(hinge)` on the training set.
    pub objective: f64,
}

impl SvmModel {
    pub fn dims(&self) -> usize {
        self.weights.len()
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        dot(&self.weights, x) + self.bias
    }
}

pub fn svm_train(samples: &[Sample], c: f64) -> Result<SvmModel, MlError> {
    svm_train_with(
        samples,
        SvmParams {
            c,
            ..SvmParams::default()
        },
        LabelMap::default(),
    )
}

fn validate(samples: &[Sample], c: f64) -> Result<usize, MlError> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(MlError::InvalidArgument(format!(
            "C must be positive, got {c}"
        )));
    }
    if samples.len() < 2 {
        return Err(MlError::InvalidArgument("need at least two samples".into()));
    }
    let d = samples[0].features.len();
    for (i, s) in samples.iter().enumerate() {
        if s.features.len() != d {
            return Err(MlError::DimensionMismatch {
                expected: d,
                got: s.features.len(),
            });
        }
        if s.features.iter().any(|x| !x.is_finite()) {
            return Err(MlError::NonFinite(i));
        }
    }
    let pos = samples.iter().any(|s| s.label == Class::Positive);
    let neg = samples.iter().any(|s| s.label == Class::Negative);
    if !(pos && neg) {
        return Err(MlError::SingleClass);
    }
    Ok(d)
}

/// Primal objective and largest KKT violation of `(w, b, alpha)`.
pub(crate) fn solution_quality(
    samples: &[Sample],
    c: f64,
    weights: &[f64],
    bias: f64,
    alpha: &[f64],
) -> (f64, f64) {
    let bound_eps = 1e-12 * c.max(1.0);
    let mut hinge = 0.0;
    let mut residual: f64 = 0.0;
    for (s, &a) in samples.iter().zip(alpha) {
        let yf = s.label.sign() * (dot(weights, &s.features) + bias);
        hinge += (1.0 - yf).max(0.0);
        let v = if a <= bound_eps {
            (1.0 - yf).max(0.0)
        } else if a >= c - bound_eps {
            (yf - 1.0).max(0.0)
        } else {
            (1.0 - yf).abs()
        };
        residual = residual.max(v);
    }
    (0.5 * dot(weights, weights) + c * hinge, residual)
}

/// Dual solver with two-variable (SMO) updates on the maximal violating pair.
pub fn svm_train_with(
    samples: &[Sample],
    params: SvmParams,
    label_map: LabelMap,
) -> Result<SvmModel, MlError> {
    let d = validate(samples, params.c)?;
    let n = samples.len();
    let c = params.c;
    let y: Vec<f64> = samples.iter().map(|s| s.label.sign()).collect();
    let mut q = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v = y[i] * y[j] * dot(&samples[i].features, &samples[j].features);
            q[i * n + j] = v;
            q[j * n + i] = v;
        }
    }

    let mut alpha = vec![0.0; n];
    // Gradient of 0.5 a'Qa - e'a.
    let mut grad = vec![-1.0; n];
    let max_iter = params.max_epochs.saturating_mul(n.max(1));
    let in_up = |a: f64, yi: f64| (yi > 0.0 && a < c) || (yi < 0.0 && a > 0.0);
    let in_low = |a: f64, yi: f64| (yi > 0.0 && a > 0.0) || (yi < 0.0 && a < c);

    for _ in 0..max_iter {
        let mut i = usize::MAX;
        let mut j = usize::MAX;
        let mut g_max = f64::NEG_INFINITY;
        let mut g_min = f64::INFINITY;
        for t in 0..n {
            let v = -y[t] * grad[t];
            if in_up(alpha[t], y[t]) && v > g_max {
                g_max = v;
                i = t;
            }
            if in_low(alpha[t], y[t]) && v < g_min {
                g_min = v;
                j = t;
            }
        }
        if i == usize::MAX || j == usize::MAX || g_max - g_min < params.tol {
            break;
        }
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let quad = (q[i * n + i] + q[j * n + j] - 2.0 * y[i] * y[j] * q[i * n + j]).max(1e-12);
        if y[i] != y[j] {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += q[t * n + i] * di + q[t * n + j] * dj;
        }
    }

    // Bias from free vectors, or the middle of the feasible interval.
    let mut free_sum = 0.0;
    let mut free_count = 0usize;
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] > 0.0 && alpha[t] < c {
            free_sum += yg;
            free_count += 1;
        } else {
            let at_upper = alpha[t] >= c;
            if (at_upper && y[t] < 0.0) || (!at_upper && y[t] > 0.0) {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        }
    }
    let rho = if free_count > 0 {
        free_sum / free_count as f64
    } else if ub.is_finite() && lb.is_finite() {
        (ub + lb) / 2.0
    } else if ub.is_finite() {
        ub
    } else {
        lb
    };
    let bias = -rho;

    let mut weights = vec![0.0; d];
    for (t, s) in samples.iter().enumerate() {
        if alpha[t] != 0.0 {
            let coef = alpha[t] * y[t];
            for (w, x) in weights.iter_mut().zip(&s.features) {
                *w += coef * x;
            }
        }
    }
    let norm = dot(&weights, &weights).sqrt();
    let (objective, kkt_residual) = solution_quality(samples, c, &weights, bias, &alpha);
    Ok(SvmModel {
        sv_count: alpha.iter().filter(|&&a| a > 0.0).count(),
        margin: 2.0 / norm,
        weights,
        bias,
        c,
        label_map,
        kkt_residual,
        objective,
    })
}

/// Score `w . x + b` and its class; a score of exactly zero maps to positive.
pub fn svm_predict(model: &SvmModel, x: &[f64]) -> Result<(Class, f64), MlError> {
    if x.len() != model.dims() {
        return Err(MlError::DimensionMismatch {
            expected: model.dims(),
            got: x.len(),
        });
    }
    let score = model.score(x);
    let class = if score >= 0.0 {
        Class::Positive
    } else {
        Class::Negative
    };
    Ok((class, score))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_points() -> Vec<Sample> {
        vec![
            Sample::new(vec![-1.0], Class::Negative),
            Sample::new(vec![1.0], Class::Positive),
        ]
    }

    #[test]
    fn symmetric_pair() {
        let m = svm_train(&two_points(), 1000.0).unwrap();
        assert!((m.weights[0] - 1.0).abs() < 1e-6);
        assert!(m.bias.abs() < 1e-6);
        assert!((m.margin - 2.0).abs() < 1e-6);
        assert_eq!(m.sv_count, 2);
        assert!(m.kkt_residual <= 1e-3);
        let (_, s) = svm_predict(&m, &[-1.0]).unwrap();
        assert!((s + 1.0).abs() < 1e-3);
        let (_, s) = svm_predict(&m, &[1.0]).unwrap();
        assert!((s - 1.0).abs() < 1e-3);
    }

    #[test]
    fn duplicated_data_same_hyperplane() {
        let mut data = two_points();
        data.extend(two_points());
        let a = svm_train(&two_points(), 1000.0).unwrap();
        let b = svm_train(&data, 1000.0).unwrap();
        assert!((a.weights[0] - b.weights[0]).abs() < 1e-6);
        assert!((a.bias - b.bias).abs() < 1e-6);
    }

    #[test]
    fn xor_is_not_separable() {
        let data = vec![
            Sample::new(vec![0.0, 0.0], Class::Negative),
            Sample::new(vec![1.0, 1.0], Class::Negative),
            Sample::new(vec![0.0, 1.0], Class::Positive),
            Sample::new(vec![1.0, 0.0], Class::Positive),
        ];
        let m = svm_train(&data, 1.0).unwrap();
        let correct = data
            .iter()
            .filter(|s| svm_predict(&m, &s.features).unwrap().0 == s.label)
            .count();
        assert!(correct as f64 / 4.0 <= 0.75);
        assert!(m.sv_count >= 1);
    }

    #[test]
    fn zero_score_is_positive() {
        let m = svm_train(&two_points(), 1000.0).unwrap();
        let x = [-m.bias / m.weights[0]];
        assert_eq!(svm_predict(&m, &x).unwrap().0, Class::Positive);
        assert!(svm_predict(&m, &[0.0, 1.0]).is_err());
    }

    #[test]
    fn input_validation() {
        let one_class = vec![
            Sample::new(vec![0.0], Class::Positive),
            Sample::new(vec![1.0], Class::Positive),
        ];
        assert_eq!(svm_train(&one_class, 1.0), Err(MlError::SingleClass));
        let bad = vec![
            Sample::new(vec![f64::NAN], Class::Positive),
            Sample::new(vec![1.0], Class::Negative),
        ];
        assert_eq!(svm_train(&bad, 1.0), Err(MlError::NonFinite(0)));
        assert!(svm_train(&two_points(), 0.0).is_err());
    }

    #[test]
    fn margin_matches_weight_norm() {
        let data = vec![
            Sample::new(vec![0.0, 2.0], Class::Positive),
            Sample::new(vec![1.0, 3.0], Class::Positive),
            Sample::new(vec![2.0, 0.0], Class::Negative),
            Sample::new(vec![3.0, 0.5], Class::Negative),
        ];
        let m = svm_train(&data, 10.0).unwrap();
        assert_eq!(m.margin, 2.0 / dot(&m.weights, &m.weights).sqrt());
    }
}
