//! Dual experience buffers for model learning.
//!
//! `P` holds episodes in which no reward was observed, `H` holds rewarded
//! episodes. Keeping the size of `P` tied to the data size of `H` gives the
//! dynamics model a balanced blend of ordinary trajectories and trajectories
//! containing the rare, reward-relevant transitions.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One observed step on the real system.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Transition {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub x_next: Vec<f64>,
    pub r: f64,
}

/// An ordered, chained list of transitions from one episode.
#[derive(Debug, Clone)]
pub struct EpisodeTrajectory {
    pub transitions: Vec<Transition>,
}

impl EpisodeTrajectory {
    pub fn total_reward(&self) -> f64 {
        self.transitions.iter().map(|t| t.r).sum()
    }

    /// Whether any step observed a (sparse) positive reward. This is the
    /// buffer classification rule: on all supported tasks the sparse reward
    /// component is strictly positive when triggered, so a positive step
    /// reward marks a rewarded episode even when a small action cost makes
    /// the episode total negative (pendulum torque penalty).
    pub fn rewarded(&self) -> bool {
        self.transitions.iter().any(|t| t.r > 0.0)
    }
}

/// FIFO episode buffers `P` (no reward) and `H` (rewarded).
#[derive(Debug, Clone)]
pub struct ExperienceBuffers {
    p: VecDeque<EpisodeTrajectory>,
    h: VecDeque<EpisodeTrajectory>,
    h_capacity: usize,
    p_min_capacity: usize,
    episode_len: usize,
}

impl ExperienceBuffers {
    pub fn new(h_capacity: usize, p_min_capacity: usize, episode_len: usize) -> Self {
        Self {
            p: VecDeque::new(),
            h: VecDeque::new(),
            h_capacity,
            p_min_capacity,
            episode_len,
        }
    }

    pub fn p_episodes(&self) -> usize {
        self.p.len()
    }

    pub fn h_episodes(&self) -> usize {
        self.h.len()
    }

    pub fn p_transitions(&self) -> usize {
        self.p.iter().map(|e| e.transitions.len()).sum()
    }

    pub fn h_transitions(&self) -> usize {
        self.h.iter().map(|e| e.transitions.len()).sum()
    }

    /// Inserts an episode FIFO into the buffer matching its reward class,
    /// then re-trims `P` to `max(|H| in transitions, p_min_capacity * T)`.
    pub fn record_episode(&mut self, traj: EpisodeTrajectory) {
        if traj.rewarded() {
            self.h.push_back(traj);
            while self.h.len() > self.h_capacity {
                self.h.pop_front();
            }
        } else {
            self.p.push_back(traj);
        }
        let p_cap = self
            .h_transitions()
            .max(self.p_min_capacity * self.episode_len);
        while self.p_transitions() > p_cap {
            self.p.pop_front();
        }
    }

    /// All transitions of `P` then `H`, in insertion order.
    pub fn training_set(&self) -> Result<Vec<Transition>> {
        if self.p.is_empty() && self.h.is_empty() {
            return Err(Error::EmptyData("experience buffers"));
        }
        Ok(self
            .p
            .iter()
            .chain(self.h.iter())
            .flat_map(|e| e.transitions.iter().cloned())
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn episode(steps: usize, reward_at: Option<usize>) -> EpisodeTrajectory {
        let transitions = (0..steps)
            .map(|i| Transition {
                x: vec![i as f64],
                u: vec![0.0],
                x_next: vec![i as f64 + 1.0],
                r: if reward_at == Some(i) { 1.0 } else { 0.0 },
            })
            .collect();
        EpisodeTrajectory { transitions }
    }

    #[test]
    fn zero_reward_goes_to_p() {
        let mut b = ExperienceBuffers::new(20, 10, 40);
        b.record_episode(episode(40, None));
        assert_eq!(b.p_episodes(), 1);
        assert_eq!(b.h_episodes(), 0);
    }

    #[test]
    fn h_fifo_eviction() {
        let mut b = ExperienceBuffers::new(2, 10, 40);
        for _ in 0..3 {
            b.record_episode(episode(40, Some(0)));
        }
        assert_eq!(b.h_episodes(), 2);
    }

    #[test]
    fn p_trimmed_to_h_size() {
        // p_min allows only 1 episode, but a 3-episode H raises the cap
        let mut b = ExperienceBuffers::new(20, 1, 40);
        for _ in 0..3 {
            b.record_episode(episode(40, Some(3)));
        }
        let tagged = |tag: f64| {
            let mut e = episode(40, None);
            e.transitions[0].x = vec![tag];
            e
        };
        for k in 0..5 {
            b.record_episode(tagged(k as f64));
        }
        // |H| = 3 episodes = 120 transitions; P is trimmed to 3 episodes
        assert_eq!(b.h_episodes(), 3);
        assert_eq!(b.p_episodes(), 3);
        // FIFO: the two oldest P episodes were dropped
        assert_eq!(b.p.front().unwrap().transitions[0].x, vec![2.0]);
    }

    #[test]
    fn p_min_capacity_retained_when_h_empty() {
        let mut b = ExperienceBuffers::new(20, 10, 40);
        for _ in 0..50 {
            b.record_episode(episode(40, None));
        }
        assert_eq!(b.p_episodes(), 10);
    }

    #[test]
    fn training_set_counts() {
        let mut b = ExperienceBuffers::new(20, 10, 40);
        b.record_episode(episode(40, None));
        assert_eq!(b.training_set().unwrap().len(), 40);
        b.record_episode(episode(40, None));
        b.record_episode(episode(40, Some(1)));
        b.record_episode(episode(40, Some(1)));
        assert_eq!(b.training_set().unwrap().len(), 160);
    }

    #[test]
    fn empty_buffers_error() {
        let b = ExperienceBuffers::new(20, 10, 40);
        assert!(b.training_set().is_err());
    }

    #[test]
    fn p_capacity_invariant_random_sequence() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut b = ExperienceBuffers::new(4, 3, 10);
        for _ in 0..200 {
            let rewarded = rng.gen_bool(0.3);
            b.record_episode(episode(10, rewarded.then_some(0)));
            assert!(b.p_transitions() <= b.h_transitions().max(3 * 10));
            assert!(b.h_episodes() <= 4);
            assert!(b.p.iter().all(|e| !e.rewarded()));
            assert!(b.h.iter().all(|e| e.rewarded()));
        }
    }
}
