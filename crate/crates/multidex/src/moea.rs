//! NSGA-II over flat real-valued genomes (maximization convention on every
//! objective), plus the weighted-aggregation single-objective variants used
//! for ablations.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Nsga2Config {
    pub population_size: usize,
    pub generations: usize,
    pub crossover_rate: f64,
    pub mutation_rate: f64,
    pub eta_c: f64,
    pub eta_m: f64,
    pub param_lo: f64,
    pub param_hi: f64,
    pub seed_fraction_max: f64,
}

impl Default for Nsga2Config {
    fn default() -> Self {
        Self {
            population_size: 200,
            generations: 600,
            crossover_rate: 0.5,
            mutation_rate: 0.1,
            eta_c: 10.0,
            eta_m: 15.0,
            param_lo: -1.0,
            param_hi: 1.0,
            seed_fraction_max: 0.3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Individual {
    pub genome: Vec<f64>,
    pub objectives: Vec<f64>,
    pub rank: usize,
    pub crowding: f64,
}

/// Objective aggregation for the ablation modes. Weight triples are in
/// (novelty, variance, reward) order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationMode {
    Pareto,
    FixedWeights,
    StochasticWeights,
}

pub const FIXED_WEIGHTS: [f64; 3] = [0.4, 0.3, 0.3];
pub const STOCHASTIC_WEIGHT_SETS: [[f64; 3]; 3] =
    [[0.6, 0.3, 0.1], [0.1, 0.3, 0.6], [0.1, 0.45, 0.45]];

impl std::str::FromStr for AggregationMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pareto" => Ok(AggregationMode::Pareto),
            "fixed" => Ok(AggregationMode::FixedWeights),
            "stochastic" => Ok(AggregationMode::StochasticWeights),
            other => Err(Error::InvalidConfig(format!(
                "unknown aggregation mode '{other}' (expected pareto, fixed or stochastic)"
            ))),
        }
    }
}

impl AggregationMode {
    /// Weights aligned with the objective vector (reward, novelty,
    /// variance); stochastic mode draws one set per call (one per episode).
    pub fn objective_weights(&self, rng: &mut ChaCha8Rng) -> Option<[f64; 3]> {
        let (n, v, r) = match self {
            AggregationMode::Pareto => return None,
            AggregationMode::FixedWeights => (FIXED_WEIGHTS[0], FIXED_WEIGHTS[1], FIXED_WEIGHTS[2]),
            AggregationMode::StochasticWeights => {
                let set = STOCHASTIC_WEIGHT_SETS[rng.gen_range(0..STOCHASTIC_WEIGHT_SETS.len())];
                (set[0], set[1], set[2])
            }
        };
        Some([r, n, v])
    }
}

/// a dominates b: no objective worse, at least one strictly better.
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    debug_assert_eq!(a.len(), b.len());
    let mut strictly = false;
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return false;
        }
        if x > y {
            strictly = true;
        }
    }
    strictly
}

/// Deb's fast non-dominated sort; returns fronts of indices, best first.
pub fn fast_nondominated_sort(objectives: &[Vec<f64>]) -> Vec<Vec<usize>> {
    let n = objectives.len();
    let mut dominated_by: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut dom_count = vec![0usize; n];
    for i in 0..n {
        for j in (i + 1)..n {
            if dominates(&objectives[i], &objectives[j]) {
                dominated_by[i].push(j);
                dom_count[j] += 1;
            } else if dominates(&objectives[j], &objectives[i]) {
                dominated_by[j].push(i);
                dom_count[i] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| dom_count[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            for &j in &dominated_by[i] {
                dom_count[j] -= 1;
                if dom_count[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        fronts.push(std::mem::replace(&mut current, next));
    }
    fronts
}

/// Crowding distances for one front (aligned with `front` order). Boundary
/// individuals per objective get +infinity; zero objective range contributes
/// nothing.
#[allow(clippy::needless_range_loop)] // obj indexes a 2-D structure
pub fn crowding_distance(objectives: &[Vec<f64>], front: &[usize]) -> Vec<f64> {
    let k = front.len();
    if k <= 2 {
        return vec![f64::INFINITY; k];
    }
    let m = objectives[front[0]].len();
    let mut dist = vec![0.0; k];
    let mut order: Vec<usize> = (0..k).collect();
    for obj in 0..m {
        order.sort_by(|&a, &b| {
            objectives[front[a]][obj]
                .partial_cmp(&objectives[front[b]][obj])
                .unwrap()
        });
        let lo = objectives[front[order[0]]][obj];
        let hi = objectives[front[order[k - 1]]][obj];
        dist[order[0]] = f64::INFINITY;
        dist[order[k - 1]] = f64::INFINITY;
        let range = hi - lo;
        if range <= 0.0 {
            continue;
        }
        for w in 1..k - 1 {
            let gap = objectives[front[order[w + 1]]][obj] - objectives[front[order[w - 1]]][obj];
            dist[order[w]] += gap / range;
        }
    }
    dist
}

/// beta(u) of simulated binary crossover.
pub fn sbx_beta(u: f64, eta_c: f64) -> f64 {
    if u <= 0.5 {
        (2.0 * u).powf(1.0 / (eta_c + 1.0))
    } else {
        (1.0 / (2.0 * (1.0 - u))).powf(1.0 / (eta_c + 1.0))
    }
}

/// delta(u) of polynomial mutation, in [-1, 1].
pub fn mutation_delta(u: f64, eta_m: f64) -> f64 {
    if u < 0.5 {
        (2.0 * u).powf(1.0 / (eta_m + 1.0)) - 1.0
    } else {
        1.0 - (2.0 * (1.0 - u)).powf(1.0 / (eta_m + 1.0))
    }
}

pub fn sbx_crossover(
    p1: &[f64],
    p2: &[f64],
    cfg: &Nsga2Config,
    rng: &mut ChaCha8Rng,
) -> (Vec<f64>, Vec<f64>) {
    if rng.gen::<f64>() >= cfg.crossover_rate {
        return (p1.to_vec(), p2.to_vec());
    }
    let mut c1 = Vec::with_capacity(p1.len());
    let mut c2 = Vec::with_capacity(p1.len());
    for (&a, &b) in p1.iter().zip(p2) {
        let beta = sbx_beta(rng.gen::<f64>(), cfg.eta_c);
        let x = 0.5 * ((1.0 + beta) * a + (1.0 - beta) * b);
        let y = 0.5 * ((1.0 - beta) * a + (1.0 + beta) * b);
        c1.push(x.clamp(cfg.param_lo, cfg.param_hi));
        c2.push(y.clamp(cfg.param_lo, cfg.param_hi));
    }
    (c1, c2)
}

pub fn polynomial_mutation(genome: &mut [f64], cfg: &Nsga2Config, rng: &mut ChaCha8Rng) {
    let span = cfg.param_hi - cfg.param_lo;
    for gene in genome.iter_mut() {
        if rng.gen::<f64>() < cfg.mutation_rate {
            let delta = mutation_delta(rng.gen::<f64>(), cfg.eta_m);
            *gene = (*gene + delta * span).clamp(cfg.param_lo, cfg.param_hi);
        }
    }
}

fn assign_ranks(pop: &mut [Individual]) {
    let objs: Vec<Vec<f64>> = pop.iter().map(|i| i.objectives.clone()).collect();
    for (rank, front) in fast_nondominated_sort(&objs).into_iter().enumerate() {
        let dist = crowding_distance(&objs, &front);
        for (&idx, &d) in front.iter().zip(&dist) {
            pop[idx].rank = rank;
            pop[idx].crowding = d;
        }
    }
}

/// Binary tournament on (rank, then crowding); exact ties are settled by a
/// coin flip so selection stays deterministic under a seeded rng.
fn tournament(pop: &[Individual], rng: &mut ChaCha8Rng) -> usize {
    let a = rng.gen_range(0..pop.len());
    let b = rng.gen_range(0..pop.len());
    if pop[a].rank != pop[b].rank {
        return if pop[a].rank < pop[b].rank { a } else { b };
    }
    if pop[a].crowding != pop[b].crowding {
        return if pop[a].crowding > pop[b].crowding {
            a
        } else {
            b
        };
    }
    if rng.gen::<bool>() {
        a
    } else {
        b
    }
}

fn evaluate_all<F>(genomes: Vec<Vec<f64>>, evaluate: &F) -> Vec<Individual>
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    genomes
        .into_par_iter()
        .map(|genome| {
            let objectives = evaluate(&genome);
            Individual {
                genome,
                objectives,
                rank: usize::MAX,
                crowding: 0.0,
            }
        })
        .collect()
}

fn make_offspring<F>(
    parents: &[Individual],
    cfg: &Nsga2Config,
    evaluate: &F,
    rng: &mut ChaCha8Rng,
) -> Vec<Individual>
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    let n = cfg.population_size;
    let mut genomes = Vec::with_capacity(n);
    while genomes.len() < n {
        let a = tournament(parents, rng);
        let b = tournament(parents, rng);
        let (mut c1, mut c2) = sbx_crossover(&parents[a].genome, &parents[b].genome, cfg, rng);
        polynomial_mutation(&mut c1, cfg, rng);
        polynomial_mutation(&mut c2, cfg, rng);
        genomes.push(c1);
        if genomes.len() < n {
            genomes.push(c2);
        }
    }
    evaluate_all(genomes, evaluate)
}

/// Environmental selection: fill the next parent population front by front,
/// truncating the last partial front by crowding distance.
fn select_parents(mut combined: Vec<Individual>, n: usize) -> Vec<Individual> {
    let objs: Vec<Vec<f64>> = combined.iter().map(|i| i.objectives.clone()).collect();
    let fronts = fast_nondominated_sort(&objs);
    let mut keep: Vec<usize> = Vec::with_capacity(n);
    for (rank, front) in fronts.into_iter().enumerate() {
        let dist = crowding_distance(&objs, &front);
        for (&idx, &d) in front.iter().zip(&dist) {
            combined[idx].rank = rank;
            combined[idx].crowding = d;
        }
        if keep.len() + front.len() <= n {
            keep.extend_from_slice(&front);
        } else {
            let mut by_crowding: Vec<usize> = front.clone();
            by_crowding.sort_by(|&a, &b| {
                combined[b]
                    .crowding
                    .partial_cmp(&combined[a].crowding)
                    .unwrap()
                    .then(a.cmp(&b))
            });
            keep.extend(by_crowding.into_iter().take(n - keep.len()));
        }
        if keep.len() == n {
            break;
        }
    }
    keep.sort_unstable();
    let mut keep_flags = vec![false; combined.len()];
    for &i in &keep {
        keep_flags[i] = true;
    }
    let mut iter = keep_flags.into_iter();
    combined.retain(|_| iter.next().unwrap());
    combined
}

fn initial_population<F>(
    evaluate: &F,
    cfg: &Nsga2Config,
    genome_len: usize,
    seed_population: &[Vec<f64>],
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Individual>>
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    let n = cfg.population_size;
    let max_seeds = (cfg.seed_fraction_max * n as f64).floor() as usize;
    if seed_population.len() > max_seeds {
        return Err(Error::InvalidConfig(format!(
            "{} seed genomes exceed the {max_seeds} allowed",
            seed_population.len()
        )));
    }
    let mut genomes: Vec<Vec<f64>> = seed_population
        .iter()
        .map(|g| {
            g.iter()
                .map(|v| v.clamp(cfg.param_lo, cfg.param_hi))
                .collect()
        })
        .collect();
    while genomes.len() < n {
        genomes.push(
            (0..genome_len)
                .map(|_| rng.gen_range(cfg.param_lo..=cfg.param_hi))
                .collect(),
        );
    }
    Ok(evaluate_all(genomes, evaluate))
}

/// Runs NSGA-II and returns the rank-0 front of the final parent
/// population. `evaluate` must be pure; it may be called concurrently.
pub fn nsga2_run<F>(
    evaluate: F,
    cfg: &Nsga2Config,
    genome_len: usize,
    seed_population: &[Vec<f64>],
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Individual>>
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    let n = cfg.population_size;
    if n < 2 || !n.is_multiple_of(2) {
        return Err(Error::InvalidConfig(
            "population_size must be even and >= 2".into(),
        ));
    }
    let mut parents = initial_population(&evaluate, cfg, genome_len, seed_population, rng)?;
    assign_ranks(&mut parents);
    for _ in 0..cfg.generations {
        let offspring = make_offspring(&parents, cfg, &evaluate, rng);
        let mut combined = parents;
        combined.extend(offspring);
        parents = select_parents(combined, n);
    }
    assign_ranks(&mut parents);
    Ok(parents.into_iter().filter(|i| i.rank == 0).collect())
}

fn min_max_normalize(values: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let m = values[0].len();
    let mut lo = vec![f64::INFINITY; m];
    let mut hi = vec![f64::NEG_INFINITY; m];
    for v in values {
        for (j, &x) in v.iter().enumerate() {
            lo[j] = lo[j].min(x);
            hi[j] = hi[j].max(x);
        }
    }
    values
        .iter()
        .map(|v| {
            v.iter()
                .enumerate()
                .map(|(j, &x)| {
                    let range = hi[j] - lo[j];
                    if range > 0.0 {
                        (x - lo[j]) / range
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect()
}

fn scalar_fitness(objectives: &[Vec<f64>], weights: &[f64; 3]) -> Vec<f64> {
    min_max_normalize(objectives)
        .iter()
        .map(|v| v.iter().zip(weights).map(|(x, w)| x * w).sum())
        .collect()
}

/// Single-objective GA over the weighted sum of min-max-normalized
/// objectives; returns the best genome of the final population. Weights are
/// aligned with the objective vector returned by `evaluate`.
pub fn scalarized_run<F>(
    evaluate: F,
    cfg: &Nsga2Config,
    genome_len: usize,
    weights: [f64; 3],
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    let n = cfg.population_size;
    if n < 2 || !n.is_multiple_of(2) {
        return Err(Error::InvalidConfig(
            "population_size must be even and >= 2".into(),
        ));
    }
    let mut pop = initial_population(&evaluate, cfg, genome_len, &[], rng)?;
    for _ in 0..cfg.generations {
        // tournament on scalar fitness normalized over the current parents
        let objs: Vec<Vec<f64>> = pop.iter().map(|i| i.objectives.clone()).collect();
        let fitness = scalar_fitness(&objs, &weights);
        let mut genomes = Vec::with_capacity(n);
        while genomes.len() < n {
            let pick = |rng: &mut ChaCha8Rng| {
                let a = rng.gen_range(0..n);
                let b = rng.gen_range(0..n);
                if fitness[a] >= fitness[b] {
                    a
                } else {
                    b
                }
            };
            let a = pick(rng);
            let b = pick(rng);
            let (mut c1, mut c2) = sbx_crossover(&pop[a].genome, &pop[b].genome, cfg, rng);
            polynomial_mutation(&mut c1, cfg, rng);
            polynomial_mutation(&mut c2, cfg, rng);
            genomes.push(c1);
            if genomes.len() < n {
                genomes.push(c2);
            }
        }
        let offspring = evaluate_all(genomes, &evaluate);
        pop.extend(offspring);
        // elitist truncation on fitness normalized over the combined set
        let objs: Vec<Vec<f64>> = pop.iter().map(|i| i.objectives.clone()).collect();
        let fitness = scalar_fitness(&objs, &weights);
        let mut order: Vec<usize> = (0..pop.len()).collect();
        order.sort_by(|&a, &b| fitness[b].partial_cmp(&fitness[a]).unwrap().then(a.cmp(&b)));
        order.truncate(n);
        order.sort_unstable();
        let mut flags = vec![false; pop.len()];
        for &i in &order {
            flags[i] = true;
        }
        let mut iter = flags.into_iter();
        pop.retain(|_| iter.next().unwrap());
    }
    let objs: Vec<Vec<f64>> = pop.iter().map(|i| i.objectives.clone()).collect();
    let fitness = scalar_fitness(&objs, &weights);
    let best = (0..pop.len())
        .max_by(|&a, &b| fitness[a].partial_cmp(&fitness[b]).unwrap().then(b.cmp(&a)))
        .expect("non-empty population");
    Ok(pop.swap_remove(best).genome)
}
