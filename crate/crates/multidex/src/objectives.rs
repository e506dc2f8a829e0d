//! Policy evaluation on the learned model: mean rollout, predicted
//! cumulative reward, trajectory novelty against the archive, and cumulative
//! model variance.

use crate::envs::EnvConfig;
use crate::error::{Error, Result};
use crate::gp::GpDynamicsModel;
use crate::policy::PolicyConfig;
use crate::reward::RewardModel;

/// Novelty assigned when the archive is empty (first search episode).
pub const EMPTY_ARCHIVE_NOVELTY: f64 = 1e6;

/// Deterministic mean-propagation rollout: x_{t+1} = x_t + mu(x_t, u_t).
#[derive(Debug, Clone)]
pub struct ModelRollout {
    /// T + 1 states, x_0 first.
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    /// Per step, the sum of per-dimension predictive variances.
    pub step_variances: Vec<f64>,
}

pub fn rollout_mean(
    model: &GpDynamicsModel,
    env: &EnvConfig,
    pcfg: &PolicyConfig,
    theta: &[f64],
    x0: &[f64],
    t_steps: usize,
) -> Result<ModelRollout> {
    let e = model.state_dim();
    let f = pcfg.output_dim;
    let mut states = Vec::with_capacity(t_steps + 1);
    let mut actions = Vec::with_capacity(t_steps);
    let mut step_variances = Vec::with_capacity(t_steps);
    let mut x = x0.to_vec();
    states.push(x.clone());

    let mut u = vec![0.0; f];
    let mut query = vec![0.0; e + f];
    let mut mean = vec![0.0; e];
    let mut var = vec![0.0; e];
    for _ in 0..t_steps {
        pcfg.eval_into(theta, &x, &mut u)?;
        query[..e].copy_from_slice(&x);
        query[e..].copy_from_slice(&u);
        model.predict_into(&query, &mut mean, &mut var)?;
        for d in 0..e {
            x[d] += mean[d];
        }
        env.clamp_model_state(&mut x);
        step_variances.push(var.iter().sum());
        actions.push(u.clone());
        states.push(x.clone());
    }
    Ok(ModelRollout {
        states,
        actions,
        step_variances,
    })
}

/// J_r: sum over the rollout of r(x_{t-1}, u_{t-1}, x_t).
pub fn cumulative_reward<F>(rollout: &ModelRollout, reward: F) -> f64
where
    F: Fn(&[f64], &[f64], &[f64]) -> f64,
{
    rollout
        .actions
        .iter()
        .enumerate()
        .map(|(t, u)| reward(&rollout.states[t], u, &rollout.states[t + 1]))
        .sum()
}

/// J_sigma^2: negative mean of per-step summed predictive variances.
pub fn cumulative_variance(rollout: &ModelRollout) -> f64 {
    let t = rollout.step_variances.len() as f64;
    -rollout.step_variances.iter().sum::<f64>() / t
}

/// The state trajectory vector beta: states sub-sampled at s_n equally
/// spaced indices ceil(i * T / s_n), i = 1..s_n, concatenated.
pub fn trajectory_descriptor(rollout: &ModelRollout, s_n: usize) -> Result<Vec<f64>> {
    let t = rollout.states.len() - 1;
    if t < s_n {
        return Err(Error::InvalidConfig(format!(
            "rollout of {t} steps cannot be sub-sampled at {s_n} points"
        )));
    }
    let mut beta = Vec::with_capacity(s_n * rollout.states[0].len());
    for i in 1..=s_n {
        let idx = (i * t).div_ceil(s_n);
        beta.extend_from_slice(&rollout.states[idx]);
    }
    Ok(beta)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Debug, Clone)]
pub struct ArchiveEntry {
    pub beta: Vec<f64>,
    pub theta: Vec<f64>,
    age: u64,
}

/// Fixed-size archive of expected state trajectory vectors of executed
/// policies. Betas are recomputed whenever the model is refit, so novelty is
/// always judged against what the *current* model expects those policies to
/// do.
#[derive(Debug, Clone)]
pub struct NoveltyArchive {
    entries: Vec<ArchiveEntry>,
    capacity: usize,
    next_age: u64,
}

impl NoveltyArchive {
    pub fn new(capacity: usize) -> Self {
        Self {
            entries: Vec::new(),
            capacity,
            next_age: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[ArchiveEntry] {
        &self.entries
    }

    /// Recomputes every entry's beta under the freshly fitted model, inserts
    /// descriptors for newly executed policies, then evicts the least novel
    /// entries until the capacity holds.
    #[allow(clippy::too_many_arguments)]
    pub fn update(
        &mut self,
        model: &GpDynamicsModel,
        env: &EnvConfig,
        pcfg: &PolicyConfig,
        new_thetas: &[Vec<f64>],
        x0: &[f64],
        t_steps: usize,
        s_n: usize,
    ) -> Result<()> {
        for entry in &mut self.entries {
            let rollout = rollout_mean(model, env, pcfg, &entry.theta, x0, t_steps)?;
            entry.beta = trajectory_descriptor(&rollout, s_n)?;
        }
        for theta in new_thetas {
            let rollout = rollout_mean(model, env, pcfg, theta, x0, t_steps)?;
            self.entries.push(ArchiveEntry {
                beta: trajectory_descriptor(&rollout, s_n)?,
                theta: theta.clone(),
                age: self.next_age,
            });
            self.next_age += 1;
        }
        evict_least_novel(&mut self.entries, self.capacity);
        Ok(())
    }
}

/// Repeatedly removes the entry with the smallest leave-one-out novelty
/// (minimum squared distance to the other entries); ties drop the oldest.
fn evict_least_novel(entries: &mut Vec<ArchiveEntry>, capacity: usize) {
    while entries.len() > capacity && entries.len() >= 2 {
        let mut worst: Option<(f64, u64, usize)> = None;
        for (i, e) in entries.iter().enumerate() {
            let loo = entries
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, o)| sq_dist(&e.beta, &o.beta))
                .fold(f64::INFINITY, f64::min);
            let better = match worst {
                None => true,
                Some((v, age, _)) => loo < v || (loo == v && e.age < age),
            };
            if better {
                worst = Some((loo, e.age, i));
            }
        }
        entries.remove(worst.expect("non-empty").2);
    }
}

/// J_n: minimum squared Euclidean distance of beta to the archive.
pub fn novelty_score(beta: &[f64], archive: &NoveltyArchive) -> Result<f64> {
    if archive.is_empty() {
        return Ok(EMPTY_ARCHIVE_NOVELTY);
    }
    let mut min = f64::INFINITY;
    for entry in &archive.entries {
        if entry.beta.len() != beta.len() {
            return Err(Error::DimensionMismatch {
                expected: entry.beta.len(),
                got: beta.len(),
            });
        }
        min = min.min(sq_dist(beta, &entry.beta));
    }
    Ok(min)
}

/// One rollout, three objectives: (J_r, J_n, J_sigma^2), all maximized.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_policy(
    theta: &[f64],
    model: &GpDynamicsModel,
    env: &EnvConfig,
    pcfg: &PolicyConfig,
    reward: &RewardModel,
    archive: &NoveltyArchive,
    x0: &[f64],
    t_steps: usize,
    s_n: usize,
) -> Result<(f64, f64, f64)> {
    let rollout = rollout_mean(model, env, pcfg, theta, x0, t_steps)?;
    let j_r = cumulative_reward(&rollout, |x, u, xn| reward.eval(x, u, xn));
    let beta = trajectory_descriptor(&rollout, s_n)?;
    let j_n = novelty_score(&beta, archive)?;
    let j_var = cumulative_variance(&rollout);
    Ok((j_r, j_n, j_var))
}
