//! Probabilistic dynamics model: one Gaussian process per state dimension,
//! mapping (state, action) to the per-dimension state difference.
//!
//! Kernel: squared exponential with automatic relevance determination.
//! Hyperparameters (length scales, signal variance, noise variance) are fit
//! per output dimension by maximizing the log marginal likelihood with
//! iRprop- in log space, with random restarts.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::buffers::Transition;
use crate::error::{Error, Result};
use crate::rprop::{self, RpropConfig};

const LOG_VAR_LO: f64 = -13.815510557964274; // ln 1e-6
const LOG_VAR_HI: f64 = 4.605170185988092; // ln 1e2
const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-4;
const JITTER_RETRIES: usize = 7;

/// ARD squared-exponential kernel hyperparameters for one output dimension.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelHyperparams {
    /// One positive length scale per input dimension.
    pub length_scales: Vec<f64>,
    pub signal_variance: f64,
    pub noise_variance: f64,
}

impl KernelHyperparams {
    pub fn new(length_scales: Vec<f64>, signal_variance: f64, noise_variance: f64) -> Self {
        Self {
            length_scales,
            signal_variance,
            noise_variance,
        }
    }

    fn validate(&self) -> Result<()> {
        if !self.length_scales.iter().all(|l| *l > 0.0 && l.is_finite())
            || !(self.signal_variance > 0.0 && self.signal_variance.is_finite())
            || !(self.noise_variance >= 0.0 && self.noise_variance.is_finite())
        {
            return Err(Error::NonFinite("kernel hyperparameters"));
        }
        Ok(())
    }

    fn to_log(&self) -> Vec<f64> {
        let mut p: Vec<f64> = self.length_scales.iter().map(|l| l.ln()).collect();
        p.push(self.signal_variance.ln());
        p.push(self.noise_variance.max(1e-12).ln());
        p
    }

    fn from_log(p: &[f64]) -> Self {
        let d = p.len() - 2;
        Self {
            length_scales: p[..d].iter().map(|v| v.exp()).collect(),
            signal_variance: p[d].exp(),
            noise_variance: p[d + 1].exp(),
        }
    }
}

/// k(a, b) = sv * exp(-1/2 * sum_d ((a_d - b_d) / l_d)^2)
pub fn kernel_eval(a: &[f64], b: &[f64], h: &KernelHyperparams) -> Result<f64> {
    if a.len() != h.length_scales.len() {
        return Err(Error::DimensionMismatch {
            expected: h.length_scales.len(),
            got: a.len(),
        });
    }
    if b.len() != h.length_scales.len() {
        return Err(Error::DimensionMismatch {
            expected: h.length_scales.len(),
            got: b.len(),
        });
    }
    if !a.iter().chain(b).all(|v| v.is_finite()) {
        return Err(Error::NonFinite("kernel input"));
    }
    h.validate()?;
    let mut s = 0.0;
    for ((&ai, &bi), &l) in a.iter().zip(b).zip(&h.length_scales) {
        let d = (ai - bi) / l;
        s += d * d;
    }
    Ok(h.signal_variance * (-0.5 * s).exp())
}

/// Mean and variance of the predicted state difference, one entry per state
/// dimension.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

/// Knobs of the marginal-likelihood optimization.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GpSettings {
    pub opt_max_iters: usize,
    /// Random restarts in addition to the provided init.
    pub restarts: usize,
}

impl Default for GpSettings {
    fn default() -> Self {
        Self {
            opt_max_iters: 300,
            restarts: 3,
        }
    }
}

struct GpDim {
    #[cfg_attr(not(test), allow(dead_code))]
    targets: DVector<f64>,
    hyper: KernelHyperparams,
    alpha: DVector<f64>,
    k_inv: DMatrix<f64>,
}

/// E independent GPs over a shared training-input set. Immutable once
/// fitted; predictions are pure reads.
pub struct GpDynamicsModel {
    inputs: Arc<DMatrix<f64>>,
    dims: Vec<GpDim>,
    state_dim: usize,
}

fn cholesky_with_jitter(kf: &DMatrix<f64>, noise_variance: f64) -> Result<Cholesky<f64, Dyn>> {
    let n = kf.nrows();
    let mut jitter = 0.0;
    for attempt in 0..=JITTER_RETRIES {
        let mut k = kf.clone();
        for i in 0..n {
            k[(i, i)] += noise_variance + jitter;
        }
        if let Some(c) = Cholesky::new(k) {
            return Ok(c);
        }
        jitter = if attempt == 0 {
            JITTER_START
        } else {
            jitter * 10.0
        };
    }
    Err(Error::SingularKernel {
        max_jitter: JITTER_MAX,
    })
}

fn kernel_matrix(inputs: &DMatrix<f64>, h: &KernelHyperparams) -> DMatrix<f64> {
    let n = inputs.nrows();
    let d = inputs.ncols();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = h.signal_variance;
        for j in 0..i {
            let mut s = 0.0;
            for c in 0..d {
                let diff = (inputs[(i, c)] - inputs[(j, c)]) / h.length_scales[c];
                s += diff * diff;
            }
            let v = h.signal_variance * (-0.5 * s).exp();
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Log marginal likelihood of one output dimension and its gradient with
/// respect to the log hyperparameters `[log l_1..d, log sv, log nv]`.
pub fn log_marginal_likelihood(
    inputs: &DMatrix<f64>,
    targets: &DVector<f64>,
    h: &KernelHyperparams,
) -> Result<(f64, Vec<f64>)> {
    let n = inputs.nrows();
    if n == 0 {
        return Err(Error::EmptyData("log_marginal_likelihood"));
    }
    h.validate()?;
    let d = inputs.ncols();
    let kf = kernel_matrix(inputs, h);
    let chol = cholesky_with_jitter(&kf, h.noise_variance)?;
    let alpha = chol.solve(targets);
    let log_det: f64 = chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum();
    let lml =
        -0.5 * targets.dot(&alpha) - log_det - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();

    // W = alpha alpha^T - K^-1; grad_p = 1/2 sum_ij W_ij dK_ij/dp
    let k_inv = chol.inverse();
    let mut grad = vec![0.0; d + 2];
    let mut tr_w = 0.0;
    for i in 0..n {
        for j in 0..n {
            let w = alpha[i] * alpha[j] - k_inv[(i, j)];
            if i == j {
                tr_w += w;
            }
            let wkf = w * kf[(i, j)];
            grad[d] += wkf; // d/dlog sv: dK = Kf
            for c in 0..d {
                let diff = (inputs[(i, c)] - inputs[(j, c)]) / h.length_scales[c];
                grad[c] += wkf * diff * diff; // d/dlog l_c: dK = Kf .* sq_c
            }
        }
    }
    for g in grad.iter_mut() {
        *g *= 0.5;
    }
    grad[d + 1] = 0.5 * h.noise_variance * tr_w;
    Ok((lml, grad))
}

fn input_ranges(inputs: &DMatrix<f64>) -> Vec<f64> {
    (0..inputs.ncols())
        .map(|c| {
            let col = inputs.column(c);
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for &v in col.iter() {
                lo = lo.min(v);
                hi = hi.max(v);
            }
            let r = hi - lo;
            if r > 1e-8 {
                r
            } else {
                1.0
            }
        })
        .collect()
}

/// Maximizes the log marginal likelihood starting from `init`, with
/// `settings.restarts` additional random starts inside the box bounds.
/// Deterministic given `rng` state; never returns a point with lower
/// likelihood than `init`.
pub fn optimize_hyperparams(
    inputs: &DMatrix<f64>,
    targets: &DVector<f64>,
    init: &KernelHyperparams,
    settings: &GpSettings,
    rng: &mut ChaCha8Rng,
) -> Result<KernelHyperparams> {
    let d = inputs.ncols();
    let ranges = input_ranges(inputs);
    let mut lo: Vec<f64> = ranges.iter().map(|r| (1e-3 * r).ln()).collect();
    let mut hi: Vec<f64> = ranges.iter().map(|r| (1e3 * r).ln()).collect();
    lo.extend_from_slice(&[LOG_VAR_LO, LOG_VAR_LO]);
    hi.extend_from_slice(&[LOG_VAR_HI, LOG_VAR_HI]);

    let var_y = {
        let m = targets.mean();
        let v = targets.iter().map(|y| (y - m) * (y - m)).sum::<f64>() / targets.len() as f64;
        v.max(1e-4)
    };

    let rprop_cfg = RpropConfig {
        max_iters: settings.opt_max_iters,
        ..RpropConfig::default()
    };
    let objective = |p: &[f64]| {
        let h = KernelHyperparams::from_log(p);
        log_marginal_likelihood(inputs, targets, &h).ok()
    };

    let mut starts: Vec<Vec<f64>> = vec![init.to_log()];
    for _ in 0..settings.restarts {
        let mut p: Vec<f64> = (0..d)
            .map(|c| {
                let l = (0.1 * ranges[c]).ln();
                let h = (10.0 * ranges[c]).ln();
                rng.gen_range(l..h)
            })
            .collect();
        p.push(rng.gen_range((0.1 * var_y).ln()..(10.0 * var_y).ln()));
        p.push(rng.gen_range(LOG_VAR_LO..var_y.ln().max(LOG_VAR_LO + 1.0)));
        starts.push(p);
    }

    let (mut best_p, mut best_v) = (init.to_log(), f64::NEG_INFINITY);
    if let Some((v, _)) = objective(&best_p) {
        best_v = v;
    }
    for start in &starts {
        let (p, v) = rprop::maximize(objective, start, &lo, &hi, &rprop_cfg);
        if v > best_v {
            best_v = v;
            best_p = p;
        }
    }
    if best_v == f64::NEG_INFINITY {
        return Ok(init.clone());
    }
    Ok(KernelHyperparams::from_log(&best_p))
}

fn transitions_to_matrices(transitions: &[Transition]) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if transitions.is_empty() {
        return Err(Error::EmptyData("fit"));
    }
    let e = transitions[0].x.len();
    let f = transitions[0].u.len();
    let n = transitions.len();
    let mut inputs = DMatrix::zeros(n, e + f);
    let mut targets = DMatrix::zeros(n, e);
    for (i, t) in transitions.iter().enumerate() {
        if t.x.len() != e || t.x_next.len() != e {
            return Err(Error::DimensionMismatch {
                expected: e,
                got: t.x.len().max(t.x_next.len()),
            });
        }
        if t.u.len() != f {
            return Err(Error::DimensionMismatch {
                expected: f,
                got: t.u.len(),
            });
        }
        for c in 0..e {
            inputs[(i, c)] = t.x[c];
            targets[(i, c)] = t.x_next[c] - t.x[c];
        }
        for c in 0..f {
            inputs[(i, e + c)] = t.u[c];
        }
        if !t
            .x
            .iter()
            .chain(&t.u)
            .chain(&t.x_next)
            .all(|v| v.is_finite())
        {
            return Err(Error::NonFinite("transition"));
        }
    }
    Ok((inputs, targets))
}

fn default_init(inputs: &DMatrix<f64>, targets: &DVector<f64>) -> KernelHyperparams {
    let ranges = input_ranges(inputs);
    let m = targets.mean();
    let var_y = (targets.iter().map(|y| (y - m) * (y - m)).sum::<f64>() / targets.len() as f64)
        .clamp(1e-4, 1e2);
    KernelHyperparams {
        length_scales: ranges,
        signal_variance: var_y,
        noise_variance: (var_y * 1e-2).max(1e-6),
    }
}

impl GpDynamicsModel {
    /// Fits E GPs on (state, action) -> state-difference data, optimizing
    /// hyperparameters per dimension by MLE. `prior_hypers` warm-starts the
    /// optimization (one entry per state dimension).
    pub fn fit(
        transitions: &[Transition],
        prior_hypers: Option<&[KernelHyperparams]>,
        settings: &GpSettings,
        seed: u64,
    ) -> Result<Self> {
        let (inputs, targets) = transitions_to_matrices(transitions)?;
        let e = targets.ncols();
        if let Some(ph) = prior_hypers {
            if ph.len() != e {
                return Err(Error::DimensionMismatch {
                    expected: e,
                    got: ph.len(),
                });
            }
        }
        let inputs = Arc::new(inputs);
        let dims: Result<Vec<GpDim>> = (0..e)
            .into_par_iter()
            .map(|dim| {
                let y = targets.column(dim).into_owned();
                let init = match prior_hypers {
                    Some(ph) => ph[dim].clone(),
                    None => default_init(&inputs, &y),
                };
                let mut rng =
                    ChaCha8Rng::seed_from_u64(seed ^ (dim as u64).wrapping_mul(0x9E3779B97F4A7C15));
                let hyper = optimize_hyperparams(&inputs, &y, &init, settings, &mut rng)?;
                GpDim::build(&inputs, y, hyper)
            })
            .collect();
        Ok(Self {
            inputs,
            dims: dims?,
            state_dim: e,
        })
    }

    /// Fits the GPs with the given fixed hyperparameters (no MLE).
    pub fn fit_with_hyperparams(
        transitions: &[Transition],
        hypers: &[KernelHyperparams],
    ) -> Result<Self> {
        let (inputs, targets) = transitions_to_matrices(transitions)?;
        let e = targets.ncols();
        if hypers.len() != e {
            return Err(Error::DimensionMismatch {
                expected: e,
                got: hypers.len(),
            });
        }
        let inputs = Arc::new(inputs);
        let dims: Result<Vec<GpDim>> = (0..e)
            .map(|dim| {
                GpDim::build(
                    &inputs,
                    targets.column(dim).into_owned(),
                    hypers[dim].clone(),
                )
            })
            .collect();
        Ok(Self {
            inputs,
            dims: dims?,
            state_dim: e,
        })
    }

    /// A model with no data: predicts zero mean and prior (signal) variance.
    pub fn prior(hypers: Vec<KernelHyperparams>, input_dim: usize) -> Self {
        let state_dim = hypers.len();
        Self {
            inputs: Arc::new(DMatrix::zeros(0, input_dim)),
            dims: hypers
                .into_iter()
                .map(|hyper| GpDim {
                    targets: DVector::zeros(0),
                    hyper,
                    alpha: DVector::zeros(0),
                    k_inv: DMatrix::zeros(0, 0),
                })
                .collect(),
            state_dim,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn n_data(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn hyperparams(&self) -> Vec<KernelHyperparams> {
        self.dims.iter().map(|d| d.hyper.clone()).collect()
    }

    pub fn predict(&self, query: &[f64]) -> Result<Prediction> {
        let mut mean = vec![0.0; self.state_dim];
        let mut variance = vec![0.0; self.state_dim];
        self.predict_into(query, &mut mean, &mut variance)?;
        Ok(Prediction { mean, variance })
    }

    /// Allocation-light prediction used by the rollout hot loop.
    pub fn predict_into(
        &self,
        query: &[f64],
        mean: &mut [f64],
        variance: &mut [f64],
    ) -> Result<()> {
        let d = self.input_dim();
        if query.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: query.len(),
            });
        }
        let n = self.inputs.nrows();
        if n == 0 {
            for (dim, gp) in self.dims.iter().enumerate() {
                mean[dim] = 0.0;
                variance[dim] = gp.hyper.signal_variance;
            }
            return Ok(());
        }
        let mut k = DVector::zeros(n);
        for (dim, gp) in self.dims.iter().enumerate() {
            let ls = &gp.hyper.length_scales;
            for i in 0..n {
                let mut s = 0.0;
                for c in 0..d {
                    let diff = (query[c] - self.inputs[(i, c)]) / ls[c];
                    s += diff * diff;
                }
                k[i] = gp.hyper.signal_variance * (-0.5 * s).exp();
            }
            mean[dim] = k.dot(&gp.alpha);
            let w = &gp.k_inv * &k;
            variance[dim] = (gp.hyper.signal_variance - k.dot(&w)).max(0.0);
        }
        Ok(())
    }
}

impl GpDim {
    fn build(
        inputs: &DMatrix<f64>,
        targets: DVector<f64>,
        hyper: KernelHyperparams,
    ) -> Result<Self> {
        hyper.validate()?;
        let kf = kernel_matrix(inputs, &hyper);
        let chol = cholesky_with_jitter(&kf, hyper.noise_variance)?;
        let alpha = chol.solve(&targets);
        let k_inv = chol.inverse();
        Ok(Self {
            targets,
            hyper,
            alpha,
            k_inv,
        })
    }

    #[cfg(test)]
    fn targets(&self) -> &DVector<f64> {
        &self.targets
    }
}
