//! Experiment orchestration: random bootstrap episodes, then the episodic
//! loop of model refit, archive update, multi-objective policy search,
//! epsilon-greedy Pareto selection, real-system execution and logging.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::buffers::{EpisodeTrajectory, ExperienceBuffers, Transition};
use crate::envs::{EnvConfig, TaskId};
use crate::error::{Error, Result};
use crate::forest::ForestConfig;
use crate::gp::{GpDynamicsModel, GpSettings, KernelHyperparams};
use crate::moea::{nsga2_run, scalarized_run, AggregationMode, Individual, Nsga2Config};
use crate::objectives::{evaluate_policy, NoveltyArchive};
use crate::policy::PolicyConfig;
use crate::reward::RewardModel;

/// Full configuration of one experiment run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub task: TaskId,
    pub seed: u64,
    /// Probability of executing a uniformly random Pareto-front member
    /// instead of the predicted-reward argmax.
    pub epsilon: f64,
    /// N_R: random episodes executed before the first model fit.
    pub bootstrap_episodes: usize,
    pub max_episodes: usize,
    pub aggregation: AggregationMode,
    pub nsga2: Nsga2Config,
    pub gp: GpSettings,
    pub forest: ForestConfig,
    pub hidden_units: usize,
    pub param_bound: f64,
    /// Episodes kept in the rewarded buffer.
    pub h_capacity: usize,
    /// Minimum episodes kept in the non-rewarded buffer.
    pub p_min_capacity: usize,
    pub archive_capacity: usize,
    /// s_n: sub-sampled states per trajectory descriptor.
    pub descriptor_points: usize,
    /// The run stops once best-reward-so-far reaches this value.
    pub solved_threshold: Option<f64>,
    /// When set, the wall_s log column is written as 0 so that logs of
    /// identically seeded runs are byte-identical.
    pub deterministic_timing: bool,
}

impl RunConfig {
    /// Full-scale defaults per task.
    pub fn for_task(task: TaskId, seed: u64) -> Self {
        let (epsilon, hidden_units, param_bound, pop, solved) = match task {
            TaskId::SeqGoal => (0.3, 5, 1.0, 200, 0.9),
            TaskId::Drawer => (0.4, 5, 3.0, 200, 1.2),
            TaskId::Pendulum => (0.3, 10, 5.0, 300, 100.0),
        };
        Self {
            task,
            seed,
            epsilon,
            bootstrap_episodes: 5,
            max_episodes: match task {
                TaskId::SeqGoal => 150,
                TaskId::Drawer => 250,
                TaskId::Pendulum => 100,
            },
            aggregation: AggregationMode::Pareto,
            nsga2: Nsga2Config {
                population_size: pop,
                generations: 600,
                param_lo: -param_bound,
                param_hi: param_bound,
                ..Nsga2Config::default()
            },
            gp: GpSettings::default(),
            forest: ForestConfig::default(),
            hidden_units,
            param_bound,
            h_capacity: 20,
            p_min_capacity: 10,
            archive_capacity: 500,
            descriptor_points: 10,
            solved_threshold: Some(solved),
            deterministic_timing: true,
        }
    }

    /// Reduced search budget and smaller buffers, sized for a single
    /// desktop core while keeping the rest of the hyperparameters.
    pub fn desk_scale(task: TaskId, seed: u64) -> Self {
        let mut cfg = Self::for_task(task, seed);
        cfg.nsga2.population_size = 100;
        cfg.nsga2.generations = 150;
        cfg.gp = GpSettings {
            opt_max_iters: 100,
            restarts: 1,
        };
        cfg.h_capacity = 3;
        cfg.p_min_capacity = 3;
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::InvalidConfig(format!(
                "epsilon must be in [0, 1], got {}",
                self.epsilon
            )));
        }
        if self.bootstrap_episodes == 0 {
            return Err(Error::InvalidConfig(
                "bootstrap_episodes must be at least 1".into(),
            ));
        }
        if self.max_episodes < self.bootstrap_episodes {
            return Err(Error::InvalidConfig(format!(
                "max_episodes ({}) must be at least bootstrap_episodes ({})",
                self.max_episodes, self.bootstrap_episodes
            )));
        }
        Ok(())
    }

    pub fn policy_config(&self, env: &EnvConfig) -> PolicyConfig {
        let b = env.action_bound();
        PolicyConfig {
            input_dim: env.state_dim(),
            hidden_units: self.hidden_units,
            output_dim: env.action_dim(),
            param_bound: self.param_bound,
            action_low: vec![-b; env.action_dim()],
            action_high: vec![b; env.action_dim()],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SelectionKind {
    RandomBootstrap,
    ParetoBest,
    ParetoRandom,
}

impl std::fmt::Display for SelectionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SelectionKind::RandomBootstrap => "random-bootstrap",
            SelectionKind::ParetoBest => "pareto-best",
            SelectionKind::ParetoRandom => "pareto-random",
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialRecord {
    /// 1-based episode index.
    pub episode: usize,
    pub theta: Vec<f64>,
    pub selection: SelectionKind,
    /// Realized episode reward on the real system.
    pub reward: f64,
    /// Running maximum of realized rewards.
    pub best_reward: f64,
    /// Cumulative real-system interaction time: episode * T * dt.
    pub interaction_s: f64,
    pub wall_s: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrialLog {
    pub records: Vec<TrialRecord>,
}

impl TrialLog {
    pub fn best_reward(&self) -> f64 {
        self.records
            .last()
            .map(|r| r.best_reward)
            .unwrap_or(f64::NEG_INFINITY)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("episode,selection,reward,best_reward,interaction_s,wall_s\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.episode, r.selection, r.reward, r.best_reward, r.interaction_s, r.wall_s
            ));
        }
        out
    }
}

/// An independent, reproducible RNG stream derived from the master seed and
/// a stream label (FNV-1a over the label).
fn named_stream(master: u64, label: &str) -> ChaCha8Rng {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    ChaCha8Rng::seed_from_u64(master ^ h)
}

/// Epsilon-greedy choice from a Pareto front: with probability 1 - epsilon
/// the member with maximum predicted reward (ties by novelty, then variance
/// objective, then lowest index), otherwise a uniformly random member.
pub fn select_policy(
    front: &[Individual],
    epsilon: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<f64>, SelectionKind)> {
    if front.is_empty() {
        return Err(Error::EmptyData("pareto front"));
    }
    if rng.gen::<f64>() < epsilon {
        let i = rng.gen_range(0..front.len());
        return Ok((front[i].genome.clone(), SelectionKind::ParetoRandom));
    }
    let mut best = 0;
    for i in 1..front.len() {
        let a = &front[i].objectives;
        let b = &front[best].objectives;
        if a.partial_cmp(b) == Some(std::cmp::Ordering::Greater) {
            best = i;
        }
    }
    Ok((front[best].genome.clone(), SelectionKind::ParetoBest))
}

/// Executes the policy on the real environment for one full episode.
pub fn run_episode(
    env: &EnvConfig,
    pcfg: &PolicyConfig,
    theta: &[f64],
) -> Result<EpisodeTrajectory> {
    let mut x = env.initial_state();
    let mut transitions = Vec::with_capacity(env.steps);
    for _ in 0..env.steps {
        let u = pcfg.eval(theta, &x)?;
        let (x_next, r) = env.step(&x, &u)?;
        transitions.push(Transition {
            x: x.clone(),
            u,
            x_next: x_next.clone(),
            r,
        });
        x = x_next;
    }
    Ok(EpisodeTrajectory { transitions })
}

struct EpisodeScope<'a> {
    log: &'a mut TrialLog,
    buffers: &'a mut ExperienceBuffers,
    pending_thetas: &'a mut Vec<Vec<f64>>,
    episode_seconds: f64,
    deterministic_timing: bool,
}

impl EpisodeScope<'_> {
    fn record(
        &mut self,
        traj: EpisodeTrajectory,
        theta: Vec<f64>,
        selection: SelectionKind,
        started: Instant,
    ) {
        let reward = traj.total_reward();
        let episode = self.log.records.len() + 1;
        let best_reward = self.log.best_reward().max(reward);
        let wall_s = if self.deterministic_timing {
            0.0
        } else {
            started.elapsed().as_secs_f64()
        };
        self.pending_thetas.push(theta.clone());
        self.buffers.record_episode(traj);
        self.log.records.push(TrialRecord {
            episode,
            theta,
            selection,
            reward,
            best_reward,
            interaction_s: episode as f64 * self.episode_seconds,
            wall_s,
        });
    }

    fn solved(&self, threshold: Option<f64>) -> bool {
        threshold.is_some_and(|t| self.log.best_reward() >= t)
    }
}

/// Top 30% of the previous front by crowding distance (most spread-out
/// first), used to seed the next search.
fn seed_genomes(front: &[Individual], nsga2: &Nsga2Config) -> Vec<Vec<f64>> {
    let max_seeds = (nsga2.seed_fraction_max * nsga2.population_size as f64).floor() as usize;
    let mut order: Vec<usize> = (0..front.len()).collect();
    order.sort_by(|&a, &b| {
        front[b]
            .crowding
            .partial_cmp(&front[a].crowding)
            .unwrap()
            .then(a.cmp(&b))
    });
    order
        .into_iter()
        .take(max_seeds)
        .map(|i| front[i].genome.clone())
        .collect()
}

/// Runs the full algorithm: bootstrap episodes, then the learn/search/execute
/// loop until the budget is spent or the task is solved.
pub fn run_multidex(cfg: &RunConfig) -> Result<TrialLog> {
    cfg.validate()?;
    let env = EnvConfig::for_task(cfg.task);
    let pcfg = cfg.policy_config(&env);
    let x0 = env.initial_state();
    let t_steps = env.steps;
    let episode_seconds = env.dt * t_steps as f64;

    let mut bootstrap_rng = named_stream(cfg.seed, "bootstrap");
    let mut nsga2_rng = named_stream(cfg.seed, "nsga2");
    let mut selection_rng = named_stream(cfg.seed, "selection");
    let mut weights_rng = named_stream(cfg.seed, "scalar-weights");
    let mut gp_rng = named_stream(cfg.seed, "gp");
    let mut forest_rng = named_stream(cfg.seed, "forest");

    let mut log = TrialLog::default();
    let mut buffers = ExperienceBuffers::new(cfg.h_capacity, cfg.p_min_capacity, t_steps);
    let mut archive = NoveltyArchive::new(cfg.archive_capacity);
    let mut reward_model = RewardModel::source(&env);
    let mut pending_thetas: Vec<Vec<f64>> = Vec::new();
    let mut prev_hypers: Option<Vec<KernelHyperparams>> = None;
    let mut prev_front: Vec<Individual> = Vec::new();

    let mut scope = EpisodeScope {
        log: &mut log,
        buffers: &mut buffers,
        pending_thetas: &mut pending_thetas,
        episode_seconds,
        deterministic_timing: cfg.deterministic_timing,
    };

    for _ in 0..cfg.bootstrap_episodes {
        let started = Instant::now();
        let theta = pcfg.random_params(&mut bootstrap_rng);
        let traj = run_episode(&env, &pcfg, &theta)?;
        scope.record(traj, theta, SelectionKind::RandomBootstrap, started);
    }

    for episode in cfg.bootstrap_episodes..cfg.max_episodes {
        if scope.solved(cfg.solved_threshold) {
            break;
        }
        let started = Instant::now();
        let attach = |e: Error| Error::Episode {
            episode,
            source: Box::new(e),
        };

        let data = scope.buffers.training_set().map_err(attach)?;
        let model = GpDynamicsModel::fit(&data, prev_hypers.as_deref(), &cfg.gp, gp_rng.gen())
            .map_err(attach)?;
        prev_hypers = Some(model.hyperparams());
        if !env.reward_known() {
            reward_model
                .refresh(&data, &cfg.forest, forest_rng.gen())
                .map_err(attach)?;
        }
        archive
            .update(
                &model,
                &env,
                &pcfg,
                scope.pending_thetas,
                &x0,
                t_steps,
                cfg.descriptor_points,
            )
            .map_err(attach)?;
        scope.pending_thetas.clear();

        let evaluate = |theta: &[f64]| -> Vec<f64> {
            let (j_r, j_n, j_var) = evaluate_policy(
                theta,
                &model,
                &env,
                &pcfg,
                &reward_model,
                &archive,
                &x0,
                t_steps,
                cfg.descriptor_points,
            )
            .expect("policy evaluation on the model cannot fail for in-bounds genomes");
            vec![j_r, j_n, j_var]
        };

        let (theta, selection) = match cfg.aggregation.objective_weights(&mut weights_rng) {
            None => {
                let seeds = seed_genomes(&prev_front, &cfg.nsga2);
                let front = nsga2_run(
                    evaluate,
                    &cfg.nsga2,
                    pcfg.param_count(),
                    &seeds,
                    &mut nsga2_rng,
                )
                .map_err(attach)?;
                let picked =
                    select_policy(&front, cfg.epsilon, &mut selection_rng).map_err(attach)?;
                prev_front = front;
                picked
            }
            Some(weights) => {
                let theta = scalarized_run(
                    evaluate,
                    &cfg.nsga2,
                    pcfg.param_count(),
                    weights,
                    &mut nsga2_rng,
                )
                .map_err(attach)?;
                (theta, SelectionKind::ParetoBest)
            }
        };

        let traj = run_episode(&env, &pcfg, &theta).map_err(attach)?;
        scope.record(traj, theta, selection, started);
    }

    Ok(log)
}
