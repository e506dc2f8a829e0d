//! Immediate-reward source for model rollouts: the task's analytic reward
//! when it is observable from the state, otherwise a random-forest regressor
//! learned from (x, u, x_next, r) data and refreshed after every episode.

use crate::buffers::Transition;
use crate::envs::EnvConfig;
use crate::error::Result;
use crate::forest::{ForestConfig, RandomForest};

pub enum RewardModel {
    Analytic(EnvConfig),
    /// None until the first refresh; predicts 0 (no reward observed yet).
    Learned(Option<RandomForest>),
}

impl RewardModel {
    pub fn source(env: &EnvConfig) -> Self {
        if env.reward_known() {
            RewardModel::Analytic(env.clone())
        } else {
            RewardModel::Learned(None)
        }
    }

    pub fn eval(&self, x: &[f64], u: &[f64], x_next: &[f64]) -> f64 {
        match self {
            RewardModel::Analytic(env) => env.reward(x, u, x_next),
            RewardModel::Learned(None) => 0.0,
            RewardModel::Learned(Some(forest)) => {
                let mut input = Vec::with_capacity(x.len() + u.len() + x_next.len());
                input.extend_from_slice(x);
                input.extend_from_slice(u);
                input.extend_from_slice(x_next);
                forest.predict(&input).unwrap_or(0.0)
            }
        }
    }

    /// Refits the learned forest on the full transition set; no-op for
    /// analytic rewards.
    pub fn refresh(
        &mut self,
        transitions: &[Transition],
        cfg: &ForestConfig,
        seed: u64,
    ) -> Result<()> {
        if let RewardModel::Learned(slot) = self {
            let inputs: Vec<Vec<f64>> = transitions
                .iter()
                .map(|t| {
                    let mut v = Vec::with_capacity(t.x.len() + t.u.len() + t.x_next.len());
                    v.extend_from_slice(&t.x);
                    v.extend_from_slice(&t.u);
                    v.extend_from_slice(&t.x_next);
                    v
                })
                .collect();
            let targets: Vec<f64> = transitions.iter().map(|t| t.r).collect();
            *slot = Some(RandomForest::fit(&inputs, &targets, cfg, seed)?);
        }
        Ok(())
    }
}
