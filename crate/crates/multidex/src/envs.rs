//! Benchmark environments: sequential goal reaching and drawer opening with
//! a kinematic 2-DOF arm, and a deceptive torque-limited pendulum swing-up.
//!
//! All tasks run 40 steps at 10 Hz (4 s episodes). Arm joints integrate
//! clamped velocity commands directly; the pendulum integrates a damped
//! rigid-body ODE with RK4 substeps. Step functions are pure: next state and
//! reward depend only on (config, state, action).

use serde::{Deserialize, Serialize};
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskId {
    SeqGoal,
    Drawer,
    Pendulum,
}

impl FromStr for TaskId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "seq_goal" => Ok(TaskId::SeqGoal),
            "drawer" => Ok(TaskId::Drawer),
            "pendulum" => Ok(TaskId::Pendulum),
            other => Err(Error::InvalidConfig(format!(
                "unknown task '{other}' (expected seq_goal, drawer or pendulum)"
            ))),
        }
    }
}

impl std::fmt::Display for TaskId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TaskId::SeqGoal => "seq_goal",
            TaskId::Drawer => "drawer",
            TaskId::Pendulum => "pendulum",
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnvConfig {
    pub task: TaskId,
    pub dt: f64,
    pub steps: usize,
    // 2-DOF arm geometry
    pub link_lengths: [f64; 2],
    pub blue_center: [f64; 2],
    pub blue_radius: f64,
    pub goal: [f64; 2],
    pub goal_alpha: f64,
    pub handle_center: [f64; 2],
    pub handle_radius: f64,
    pub delta_max: f64,
    // pendulum
    pub pend_mass: f64,
    pub pend_length: f64,
    pub gravity: f64,
    pub damping: f64,
    pub torque_limit: f64,
}

impl EnvConfig {
    pub fn for_task(task: TaskId) -> Self {
        Self {
            task,
            dt: 0.1,
            steps: 40,
            link_lengths: [0.5, 0.5],
            blue_center: [0.5, 0.5],
            blue_radius: 0.1,
            goal: [-0.5, 0.5],
            goal_alpha: 0.5 / (0.2 * 0.2),
            handle_center: [0.7, 0.3],
            handle_radius: 0.1,
            delta_max: 0.3,
            pend_mass: 1.0,
            pend_length: 0.4,
            gravity: 9.81,
            damping: 0.05,
            torque_limit: 2.0,
        }
    }

    pub fn state_dim(&self) -> usize {
        match self.task {
            TaskId::SeqGoal | TaskId::Drawer => 3,
            TaskId::Pendulum => 2,
        }
    }

    pub fn action_dim(&self) -> usize {
        match self.task {
            TaskId::SeqGoal | TaskId::Drawer => 2,
            TaskId::Pendulum => 1,
        }
    }

    pub fn action_bound(&self) -> f64 {
        match self.task {
            TaskId::SeqGoal => 2.0,
            TaskId::Drawer => 1.0,
            TaskId::Pendulum => self.torque_limit,
        }
    }

    /// Whether the reward is a known analytic function of the transition or
    /// must be learned from data.
    pub fn reward_known(&self) -> bool {
        !matches!(self.task, TaskId::SeqGoal)
    }

    pub fn initial_state(&self) -> Vec<f64> {
        vec![0.0; self.state_dim()]
    }

    /// Forward kinematics of the 2-link arm; at [0, 0] it points straight up.
    pub fn end_effector(&self, theta0: f64, theta1: f64) -> [f64; 2] {
        let [l1, l2] = self.link_lengths;
        [
            l1 * theta0.sin() + l2 * (theta0 + theta1).sin(),
            l1 * theta0.cos() + l2 * (theta0 + theta1).cos(),
        ]
    }

    /// Reward evaluated on a full transition, as seen by the reward model
    /// interface r(x, u, x_next). State-only rewards use the reached state.
    pub fn reward(&self, _x: &[f64], u: &[f64], x_next: &[f64]) -> f64 {
        match self.task {
            TaskId::SeqGoal => self.seq_goal_reward(x_next),
            TaskId::Drawer => self.drawer_reward(x_next),
            TaskId::Pendulum => self.pendulum_reward(x_next, u[0]),
        }
    }

    /// 0 unless the switch was triggered and the end effector is within 0.1
    /// of the goal; then exp(-alpha * distance^2).
    pub fn seq_goal_reward(&self, state: &[f64]) -> f64 {
        let gamma = state[2];
        let p = self.end_effector(state[0], state[1]);
        let delta = dist(p, self.goal);
        if gamma != 1.0 || delta >= 0.1 {
            0.0
        } else {
            (-self.goal_alpha * delta * delta).exp()
        }
    }

    /// delta plus a return-to-upright bonus once the drawer is open past 0.2.
    pub fn drawer_reward(&self, state: &[f64]) -> f64 {
        let (theta0, theta1, delta) = (state[0], state[1], state[2]);
        let bonus = if delta <= 0.2 {
            0.0
        } else {
            (-theta0 * theta0 - theta1 * theta1).exp()
        };
        delta + bonus
    }

    /// +10 inside the upright band (|pi - theta| < pi/60, angle-wrapped),
    /// minus 0.001 * tau^2.
    pub fn pendulum_reward(&self, state: &[f64], tau: f64) -> f64 {
        let err = wrap_angle(std::f64::consts::PI - state[0]);
        // the band edge is exclusive; the tiny guard keeps it exclusive
        // under the rounding noise of the angle wrap
        let r1 = if err.abs() < std::f64::consts::PI / 60.0 - 1e-9 {
            10.0
        } else {
            0.0
        };
        r1 - 0.001 * tau * tau
    }

    pub fn step(&self, state: &[f64], action: &[f64]) -> Result<(Vec<f64>, f64)> {
        if state.len() != self.state_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.state_dim(),
                got: state.len(),
            });
        }
        if action.len() != self.action_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.action_dim(),
                got: action.len(),
            });
        }
        if !action.iter().all(|a| a.is_finite()) {
            return Err(Error::NonFinite("action"));
        }
        let next = match self.task {
            TaskId::SeqGoal => self.step_seq_goal(state, action),
            TaskId::Drawer => self.step_drawer(state, action),
            TaskId::Pendulum => self.step_pendulum(state, action),
        };
        let r = self.reward(state, action, &next);
        Ok((next, r))
    }

    fn step_seq_goal(&self, state: &[f64], action: &[f64]) -> Vec<f64> {
        let b = self.action_bound();
        let theta0 = state[0] + action[0].clamp(-b, b) * self.dt;
        let theta1 = state[1] + action[1].clamp(-b, b) * self.dt;
        let p = self.end_effector(theta0, theta1);
        let gamma = if state[2] == 1.0 || dist(p, self.blue_center) <= self.blue_radius {
            1.0
        } else {
            state[2]
        };
        vec![theta0, theta1, gamma]
    }

    fn step_drawer(&self, state: &[f64], action: &[f64]) -> Vec<f64> {
        let b = self.action_bound();
        let theta0 = state[0] + action[0].clamp(-b, b) * self.dt;
        let theta1 = state[1] + action[1].clamp(-b, b) * self.dt;
        let p_old = self.end_effector(state[0], state[1]);
        let p_new = self.end_effector(theta0, theta1);
        let mut delta = state[2];
        // the drawer moves while the end effector stays on the handle; it
        // can be pulled (+x) but never pushed back
        if dist(p_old, self.handle_center) <= self.handle_radius
            && dist(p_new, self.handle_center) <= self.handle_radius
        {
            delta += (p_new[0] - p_old[0]).max(0.0);
        }
        vec![theta0, theta1, delta.clamp(0.0, self.delta_max)]
    }

    fn step_pendulum(&self, state: &[f64], action: &[f64]) -> Vec<f64> {
        let tau = action[0].clamp(-self.torque_limit, self.torque_limit);
        let (mut th, mut thd) = (state[0], state[1]);
        let h = self.dt / 4.0;
        for _ in 0..4 {
            (th, thd) = self.rk4_substep(th, thd, tau, h);
        }
        vec![th, thd]
    }

    fn pend_accel(&self, th: f64, thd: f64, tau: f64) -> f64 {
        let (m, l, g, c) = (self.pend_mass, self.pend_length, self.gravity, self.damping);
        (tau - c * thd - m * g * l * th.sin()) / (m * l * l)
    }

    fn rk4_substep(&self, th: f64, thd: f64, tau: f64, h: f64) -> (f64, f64) {
        let k1 = (thd, self.pend_accel(th, thd, tau));
        let k2 = (
            thd + 0.5 * h * k1.1,
            self.pend_accel(th + 0.5 * h * k1.0, thd + 0.5 * h * k1.1, tau),
        );
        let k3 = (
            thd + 0.5 * h * k2.1,
            self.pend_accel(th + 0.5 * h * k2.0, thd + 0.5 * h * k2.1, tau),
        );
        let k4 = (
            thd + h * k3.1,
            self.pend_accel(th + h * k3.0, thd + h * k3.1, tau),
        );
        (
            th + h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
            thd + h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
        )
    }

    /// Keeps auxiliary state dimensions inside their physical range during
    /// model rollouts (GP mean predictions are unconstrained reals).
    pub fn clamp_model_state(&self, state: &mut [f64]) {
        match self.task {
            TaskId::SeqGoal => state[2] = state[2].clamp(0.0, 1.0),
            TaskId::Drawer => state[2] = state[2].clamp(0.0, self.delta_max),
            TaskId::Pendulum => {}
        }
    }

    /// Total pendulum energy, used by the integrator accuracy test.
    pub fn pendulum_energy(&self, state: &[f64]) -> f64 {
        let (m, l, g) = (self.pend_mass, self.pend_length, self.gravity);
        0.5 * m * l * l * state[1] * state[1] + m * g * l * (1.0 - state[0].cos())
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Wraps an angle to (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    a.sin().atan2(a.cos())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn resets_are_fixed() {
        assert_eq!(
            EnvConfig::for_task(TaskId::Pendulum).initial_state(),
            vec![0.0, 0.0]
        );
        assert_eq!(
            EnvConfig::for_task(TaskId::SeqGoal).initial_state(),
            vec![0.0, 0.0, 0.0]
        );
        assert_eq!(
            EnvConfig::for_task(TaskId::Drawer).initial_state(),
            vec![0.0, 0.0, 0.0]
        );
    }

    #[test]
    fn seq_goal_zero_velocity_keeps_state() {
        let env = EnvConfig::for_task(TaskId::SeqGoal);
        let (next, r) = env.step(&[0.3, -0.2, 0.0], &[0.0, 0.0]).unwrap();
        assert_eq!(next, vec![0.3, -0.2, 0.0]);
        assert_eq!(r, 0.0);
    }

    #[test]
    fn seq_goal_gamma_latches() {
        let env = EnvConfig::for_task(TaskId::SeqGoal);
        // grid-search a pose whose end effector touches the blue region
        let mut pose = None;
        'outer: for i in 0..400 {
            let t0 = -PI + 2.0 * PI * i as f64 / 399.0;
            for j in 0..400 {
                let t1 = -PI + 2.0 * PI * j as f64 / 399.0;
                let p = env.end_effector(t0, t1);
                if super::dist(p, env.blue_center) <= 0.09 {
                    pose = Some((t0, t1));
                    break 'outer;
                }
            }
        }
        let (t0, t1) = pose.expect("the blue region is reachable");
        // step so that the new pose lands exactly on (t0, t1)
        let prev = [t0, t1 - 1.0 * env.dt, 0.0];
        let (state, _) = env.step(&prev, &[0.0, 1.0]).unwrap();
        assert_eq!(state[2], 1.0, "touching the blue region sets gamma");
        // gamma stays latched after moving away
        let mut state = state;
        for _ in 0..10 {
            let (next, _) = env.step(&state, &[-2.0, -2.0]).unwrap();
            assert_eq!(next[2], 1.0);
            state = next;
        }
    }

    #[test]
    fn seq_goal_reward_cases() {
        let env = EnvConfig::for_task(TaskId::SeqGoal);
        // gamma off: zero everywhere
        assert_eq!(env.seq_goal_reward(&[0.1, 0.2, 0.0]), 0.0);
        // the goal is reachable: grid search finds reward ~1 with gamma on
        let mut best = 0.0f64;
        for i in 0..2000 {
            let t0 = -PI + 2.0 * PI * i as f64 / 1999.0;
            for j in 0..400 {
                let t1 = -PI + 2.0 * PI * j as f64 / 399.0;
                let r = env.seq_goal_reward(&[t0, t1, 1.0]);
                if r > best {
                    best = r;
                }
            }
        }
        assert!(best > 0.999, "best reward over grid {best}");
    }

    #[test]
    fn seq_goal_reward_formula_value() {
        let env = EnvConfig::for_task(TaskId::SeqGoal);
        // grid-search a pose at distance ~0.05 from the goal with gamma on
        let mut found = None;
        for i in 0..20000 {
            let t0 = -PI + 2.0 * PI * i as f64 / 19999.0;
            for j in 0..200 {
                let t1 = -PI + 2.0 * PI * j as f64 / 199.0;
                let p = env.end_effector(t0, t1);
                let d = super::dist(p, env.goal);
                if (d - 0.05).abs() < 1e-4 {
                    found = Some((t0, t1, d));
                    break;
                }
            }
            if found.is_some() {
                break;
            }
        }
        let (t0, t1, d) = found.expect("pose at distance 0.05 exists");
        let r = env.seq_goal_reward(&[t0, t1, 1.0]);
        assert_relative_eq!(r, (-12.5 * d * d).exp(), epsilon = 1e-12);
        assert_relative_eq!((-12.5 * 0.05f64 * 0.05).exp(), 0.9692, epsilon = 1e-4);
    }

    #[test]
    fn drawer_reward_cases() {
        let env = EnvConfig::for_task(TaskId::Drawer);
        assert_eq!(env.drawer_reward(&[0.5, -0.5, 0.0]), 0.0);
        assert_relative_eq!(env.drawer_reward(&[0.0, 0.0, 0.3]), 1.3);
        // boundary: bonus requires delta strictly above 0.2
        assert_relative_eq!(env.drawer_reward(&[0.0, 0.0, 0.2]), 0.2);
    }

    #[test]
    fn drawer_delta_monotone_and_bounded() {
        use rand::{Rng, SeedableRng};
        let env = EnvConfig::for_task(TaskId::Drawer);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let mut state = env.initial_state();
            let mut prev_delta = 0.0;
            for _ in 0..40 {
                let a = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
                let (next, _) = env.step(&state, &a).unwrap();
                assert!(next[2] >= prev_delta);
                assert!(next[2] <= env.delta_max);
                prev_delta = next[2];
                state = next;
            }
        }
    }

    #[test]
    fn gamma_monotone_over_episode() {
        use rand::{Rng, SeedableRng};
        let env = EnvConfig::for_task(TaskId::SeqGoal);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(18);
        for _ in 0..20 {
            let mut state = env.initial_state();
            let mut prev = 0.0;
            for _ in 0..40 {
                let a = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
                let (next, r) = env.step(&state, &a).unwrap();
                assert!(next[2] >= prev);
                assert!(r >= 0.0);
                prev = next[2];
                state = next;
            }
        }
    }

    #[test]
    fn pendulum_rest_is_equilibrium() {
        let env = EnvConfig::for_task(TaskId::Pendulum);
        let (next, r) = env.step(&[0.0, 0.0], &[0.0]).unwrap();
        assert_eq!(next, vec![0.0, 0.0]);
        assert_eq!(r, 0.0);
    }

    #[test]
    fn pendulum_reward_cases() {
        let env = EnvConfig::for_task(TaskId::Pendulum);
        assert_relative_eq!(env.pendulum_reward(&[PI, 0.0], 0.0), 10.0);
        assert_relative_eq!(env.pendulum_reward(&[0.0, 0.0], 2.0), -0.004);
        // strict inequality at the band edge
        assert_relative_eq!(
            env.pendulum_reward(&[PI - PI / 60.0, 0.0], 1.0),
            -0.001,
            epsilon = 1e-12
        );
        // wrap: approaching upright from above
        assert_relative_eq!(env.pendulum_reward(&[PI + 0.01, 0.0], 0.0), 10.0);
    }

    #[test]
    fn pendulum_step_matches_fine_euler() {
        let env = EnvConfig::for_task(TaskId::Pendulum);
        let (next, _) = env.step(&[0.0, 0.0], &[2.0]).unwrap();
        // independent fine-step Euler integration
        let (mut th, mut thd) = (0.0, 0.0);
        let h = env.dt / 100_000.0;
        for _ in 0..100_000 {
            let acc = env.pend_accel(th, thd, 2.0);
            th += thd * h;
            thd += acc * h;
        }
        assert!((next[0] - th).abs() < 1e-4, "{} vs {th}", next[0]);
        assert!((next[1] - thd).abs() < 1e-4, "{} vs {thd}", next[1]);
    }

    #[test]
    fn pendulum_energy_conserved_without_damping() {
        let mut env = EnvConfig::for_task(TaskId::Pendulum);
        env.damping = 0.0;
        let mut state = vec![2.0, 0.0]; // large swing, no torque
        let e0 = env.pendulum_energy(&state);
        for _ in 0..40 {
            let (next, _) = env.step(&state, &[0.0]).unwrap();
            state = next;
        }
        let drift = (env.pendulum_energy(&state) - e0).abs() / e0;
        assert!(drift < 1e-5, "relative energy drift {drift}");
    }

    #[test]
    fn pendulum_per_step_reward_range() {
        use rand::{Rng, SeedableRng};
        let env = EnvConfig::for_task(TaskId::Pendulum);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        let mut state = env.initial_state();
        for _ in 0..200 {
            let a = [rng.gen_range(-2.0..2.0)];
            let (next, r) = env.step(&state, &a).unwrap();
            assert!((-0.004..=10.0).contains(&r));
            state = next;
        }
    }

    #[test]
    fn non_finite_action_errors() {
        let env = EnvConfig::for_task(TaskId::Pendulum);
        assert!(env.step(&[0.0, 0.0], &[f64::NAN]).is_err());
    }

    #[test]
    fn task_id_parsing() {
        assert_eq!("pendulum".parse::<TaskId>().unwrap(), TaskId::Pendulum);
        assert!("bogus".parse::<TaskId>().is_err());
    }
}
