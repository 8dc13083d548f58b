//! Reference solver for small linear SVM instances.
//!
//! Solves the same soft-margin dual as [`svm_train`](super::svm_train) by an
//! unrelated route (accelerated projected gradient with an exact projection
//! onto the feasible polytope, bias from an exhaustive breakpoint search),
//! so the two can check each other. Only meant for tiny instances.

use super::linalg::dot;
use super::{MlError, Sample};

pub const MAX_SAMPLES: usize = 12;
pub const MAX_DIMS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub alpha: Vec<f64>,
    /// Primal objective at `(weights, bias)`.
    pub objective: f64,
    /// Primal minus dual objective.
    pub duality_gap: f64,
}

/// Euclidean projection onto `{0 <= a <= c, y . a = 0}` by bisection on the
/// multiplier of the equality constraint.
fn project(v: &[f64], y: &[f64], c: f64) -> Vec<f64> {
    let eval = |nu: f64| -> f64 {
        v.iter()
            .zip(y)
            .map(|(vi, yi)| yi * (vi - nu * yi).clamp(0.0, c))
            .sum()
    };
    let bound = v.iter().fold(0.0f64, |m, x| m.max(x.abs())) + c + 1.0;
    let (mut lo, mut hi) = (-bound, bound);
    // eval is non-increasing in nu.
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if eval(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let nu = 0.5 * (lo + hi);
    v.iter()
        .zip(y)
        .map(|(vi, yi)| (vi - nu * yi).clamp(0.0, c))
        .collect()
}

fn hinge_sum(samples: &[Sample], scores: &[f64], bias: f64) -> f64 {
    samples
        .iter()
        .zip(scores)
        .map(|(s, &f)| (1.0 - s.label.sign() * (f + bias)).max(0.0))
        .sum()
}

/// Bias minimising the hinge loss for fixed weights. The loss is convex and
/// piecewise linear in the bias with breakpoints `y_i - w . x_i`; ties
/// between breakpoints resolve to the middle of the flat segment.
fn best_bias(samples: &[Sample], weights: &[f64]) -> f64 {
    let scores: Vec<f64> = samples.iter().map(|s| dot(weights, &s.features)).collect();
    let mut breaks: Vec<f64> = samples
        .iter()
        .zip(&scores)
        .map(|(s, f)| s.label.sign() - f)
        .collect();
    breaks.sort_by(f64::total_cmp);
    let losses: Vec<f64> = breaks
        .iter()
        .map(|&b| hinge_sum(samples, &scores, b))
        .collect();
    let best = losses.iter().cloned().fold(f64::INFINITY, f64::min);
    let tol = 1e-12 * (1.0 + best.abs());
    let ties: Vec<f64> = breaks
        .iter()
        .zip(&losses)
        .filter(|(_, &l)| l <= best + tol)
        .map(|(&b, _)| b)
        .collect();
    0.5 * (ties[0] + ties[ties.len() - 1])
}

pub fn qp_oracle_train(samples: &[Sample], c: f64) -> Result<OracleSolution, MlError> {
    let n = samples.len();
    if n > MAX_SAMPLES {
        return Err(MlError::TooLarge(format!("{n} samples > {MAX_SAMPLES}")));
    }
    let d = samples.first().map_or(0, |s| s.features.len());
    if d > MAX_DIMS {
        return Err(MlError::TooLarge(format!("{d} dims > {MAX_DIMS}")));
    }
    if n < 2 || !(c > 0.0) {
        return Err(MlError::InvalidArgument(
            "need two samples and C > 0".into(),
        ));
    }
    if !samples.iter().any(|s| s.label.sign() > 0.0)
        || !samples.iter().any(|s| s.label.sign() < 0.0)
    {
        return Err(MlError::SingleClass);
    }
    let y: Vec<f64> = samples.iter().map(|s| s.label.sign()).collect();
    let mut q = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            q[i * n + j] = y[i] * y[j] * dot(&samples[i].features, &samples[j].features);
        }
    }
    // Lipschitz constant of the dual gradient, bounded by the trace.
    let lip = (0..n).map(|i| q[i * n + i]).sum::<f64>().max(1e-12);
    let dual = |a: &[f64]| -> f64 {
        let qa: f64 = (0..n)
            .map(|i| a[i] * (0..n).map(|j| q[i * n + j] * a[j]).sum::<f64>())
            .sum();
        a.iter().sum::<f64>() - 0.5 * qa
    };
    let weights_of = |a: &[f64]| -> Vec<f64> {
        let mut w = vec![0.0; d];
        for (i, s) in samples.iter().enumerate() {
            for (wk, xk) in w.iter_mut().zip(&s.features) {
                *wk += a[i] * y[i] * xk;
            }
        }
        w
    };

    let mut alpha = vec![0.0; n];
    let mut momentum = alpha.clone();
    let mut t = 1.0f64;
    let mut best: Option<OracleSolution> = None;
    let mut accepted = 0usize;
    for _ in 0..2_000_000usize {
        let grad: Vec<f64> = (0..n)
            .map(|i| (0..n).map(|j| q[i * n + j] * momentum[j]).sum::<f64>() - 1.0)
            .collect();
        let step: Vec<f64> = momentum
            .iter()
            .zip(&grad)
            .map(|(m, g)| m - g / lip)
            .collect();
        let next = project(&step, &y, c);
        // Restart the momentum whenever the dual objective decreases; a plain
        // gradient step that still cannot improve means convergence.
        let stalled = dual(&next) < dual(&alpha);
        if stalled && t > 1.0 {
            momentum = alpha.clone();
            t = 1.0;
            continue;
        }
        if !stalled {
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let beta = (t - 1.0) / t_next;
            momentum = next
                .iter()
                .zip(&alpha)
                .map(|(a1, a0)| a1 + beta * (a1 - a0))
                .collect();
            alpha = next;
            t = t_next;
            accepted += 1;
        }

        if stalled || accepted % 64 == 1 {
            let w = weights_of(&alpha);
            let b = best_bias(samples, &w);
            let scores: Vec<f64> = samples.iter().map(|s| dot(&w, &s.features)).collect();
            let primal = 0.5 * dot(&w, &w) + c * hinge_sum(samples, &scores, b);
            let gap = primal - dual(&alpha);
            let candidate = OracleSolution {
                weights: w,
                bias: b,
                alpha: alpha.clone(),
                objective: primal,
                duality_gap: gap,
            };
            let done = stalled || gap <= 1e-9;
            if best.as_ref().is_none_or(|s| gap < s.duality_gap) {
                best = Some(candidate);
            }
            if done {
                break;
            }
        }
    }
    Ok(best.expect("at least one evaluation"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlcore::Class;

    #[test]
    fn symmetric_pair_analytic() {
        let data = vec![
            Sample::new(vec![-1.0], Class::Negative),
            Sample::new(vec![1.0], Class::Positive),
        ];
        let s = qp_oracle_train(&data, 1000.0).unwrap();
        assert!((s.weights[0] - 1.0).abs() < 1e-6);
        assert!(s.bias.abs() < 1e-6);
        assert!(s.duality_gap <= 1e-6);
    }

    #[test]
    fn tiny_c_shrinks_weights() {
        let data = vec![
            Sample::new(vec![-1.0, 0.5], Class::Negative),
            Sample::new(vec![1.0, 0.2], Class::Positive),
            Sample::new(vec![2.0, -0.3], Class::Positive),
        ];
        let big = qp_oracle_train(&data, 10.0).unwrap();
        let small = qp_oracle_train(&data, 1e-4).unwrap();
        assert!(dot(&small.weights, &small.weights).sqrt() < 1e-3);
        assert!(dot(&small.weights, &small.weights) < dot(&big.weights, &big.weights));
    }

    #[test]
    fn rejects_large_instances() {
        let data: Vec<Sample> = (0..13)
            .map(|i| {
                Sample::new(
                    vec![i as f64],
                    if i % 2 == 0 {
                        Class::Positive
                    } else {
                        Class::Negative
                    },
                )
            })
            .collect();
        assert!(matches!(
            qp_oracle_train(&data, 1.0),
            Err(MlError::TooLarge(_))
        ));
        let wide = vec![
            Sample::new(vec![0.0; 4], Class::Positive),
            Sample::new(vec![1.0; 4], Class::Negative),
        ];
        assert!(matches!(
            qp_oracle_train(&wide, 1.0),
            Err(MlError::TooLarge(_))
        ));
    }

    #[test]
    fn projection_is_feasible() {
        let y = [1.0, -1.0, 1.0, -1.0];
        let p = project(&[3.0, -2.0, 0.5, 0.7], &y, 1.0);
        assert!(p.iter().all(|&a| (0.0..=1.0).contains(&a)));
        let s: f64 = p.iter().zip(&y).map(|(a, b)| a * b).sum();
        assert!(s.abs() < 1e-9);
    }
}
