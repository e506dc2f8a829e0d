//! Resilient backpropagation (iRprop-) for box-constrained maximization.
//!
//! Sign-based gradient ascent with per-coordinate adaptive step sizes. Used
//! to maximize the GP log marginal likelihood in log-hyperparameter space.

#[derive(Debug, Clone)]
pub struct RpropConfig {
    pub max_iters: usize,
    pub step_init: f64,
    pub step_min: f64,
    pub step_max: f64,
    pub eta_plus: f64,
    pub eta_minus: f64,
    pub grad_tol: f64,
}

impl Default for RpropConfig {
    fn default() -> Self {
        Self {
            max_iters: 300,
            step_init: 0.1,
            step_min: 1e-6,
            step_max: 1.0,
            eta_plus: 1.2,
            eta_minus: 0.5,
            grad_tol: 1e-6,
        }
    }
}

/// Maximizes `f` (returning value and gradient) inside the box `[lo, hi]`.
/// Returns the best point seen and its value; never worse than `x0`.
pub fn maximize<F>(
    mut f: F,
    x0: &[f64],
    lo: &[f64],
    hi: &[f64],
    cfg: &RpropConfig,
) -> (Vec<f64>, f64)
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let n = x0.len();
    debug_assert_eq!(lo.len(), n);
    debug_assert_eq!(hi.len(), n);

    let mut x: Vec<f64> = x0
        .iter()
        .zip(lo.iter().zip(hi))
        .map(|(&v, (&l, &h))| v.clamp(l, h))
        .collect();

    let (mut best_x, mut best_v) = (x.clone(), f64::NEG_INFINITY);
    let mut grad_prev = vec![0.0; n];
    let mut steps = vec![cfg.step_init; n];

    let Some((v0, mut grad)) = f(&x) else {
        return (best_x, best_v);
    };
    best_v = v0;
    best_x = x.clone();

    for _ in 0..cfg.max_iters {
        if grad.iter().all(|g| g.abs() < cfg.grad_tol) {
            break;
        }
        for i in 0..n {
            let prod = grad_prev[i] * grad[i];
            if prod > 0.0 {
                steps[i] = (steps[i] * cfg.eta_plus).min(cfg.step_max);
            } else if prod < 0.0 {
                steps[i] = (steps[i] * cfg.eta_minus).max(cfg.step_min);
                // iRprop-: forget the gradient after a sign change
                grad[i] = 0.0;
            }
            x[i] = (x[i] + grad[i].signum() * steps[i] * (grad[i] != 0.0) as u8 as f64)
                .clamp(lo[i], hi[i]);
        }
        grad_prev.copy_from_slice(&grad);
        match f(&x) {
            Some((v, g)) => {
                grad = g;
                if v > best_v {
                    best_v = v;
                    best_x = x.clone();
                }
            }
            None => break,
        }
    }
    (best_x, best_v)
}
