//! Multi-DEX: data-efficient model-based policy search for sparse and
//! deceptive reward tasks.
//!
//! The algorithm alternates between (1) learning a probabilistic dynamics
//! model (one Gaussian process per state dimension) from episodic data kept
//! in two balanced experience buffers, and (2) searching policy space with
//! NSGA-II over three objectives evaluated on the model: predicted cumulative
//! reward, trajectory novelty against an archive of expected trajectories,
//! and (negated) cumulative model variance. One policy from the resulting
//! Pareto front is executed on the real system per episode.

pub mod buffers;
pub mod driver;
pub mod envs;
pub mod error;
pub mod forest;
pub mod gp;
pub mod moea;
pub mod objectives;
pub mod policy;
pub mod reward;
pub mod rprop;

pub use buffers::{EpisodeTrajectory, ExperienceBuffers, Transition};
pub use driver::{run_multidex, RunConfig, TrialLog};
pub use envs::{EnvConfig, TaskId};
pub use error::Error;
pub use gp::{GpDynamicsModel, KernelHyperparams, Prediction};
pub use moea::{AggregationMode, Individual, Nsga2Config};
pub use objectives::NoveltyArchive;
pub use policy::PolicyConfig;
