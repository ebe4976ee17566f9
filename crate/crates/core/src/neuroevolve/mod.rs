//! Genetic search over the network's optimizer, loss and fully connected
//! widths, with the weights of each individual learned by backpropagation.

mod genome;

pub use genome::{Genome, WIDTH_ALLELES};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;
use crate::tensor_net::{
    accuracy, init_parameters, predict_all, train_epoch, LabelledSet, NetError, NetworkSpec,
    OptimizerState, Parameters,
};

/// Number of individuals returned by [`evolve`].
pub const TOP_K: usize = 5;

const INIT_LABEL: u64 = 0x1;
const TRAIN_LABEL: u64 = 0x2;
const EXPLORE_LABEL: u64 = 0x3;
const GENOME_LABEL: u64 = 0x4;

#[derive(Debug, Error)]
pub enum EvolveError {
    #[error("individual {0} has not been evaluated")]
    NotEvaluated(u64),
    #[error("invalid evolution config: {0}")]
    InvalidConfig(String),
    #[error("training and validation sets must be nonempty")]
    EmptyDataset,
    #[error(transparent)]
    Net(#[from] NetError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvolveConfig {
    pub population_size: usize,
    pub generations: usize,
    pub epochs_per_individual: usize,
    pub learning_rate: f64,
    pub elitism: usize,
    pub mutation_prob: f64,
    pub tournament_size: usize,
    pub seed: u64,
    pub batch_size: usize,
    /// Input geometry, conv filter counts and dropout shared by every
    /// individual. The genome overrides optimizer, loss and FC widths.
    pub network: NetworkSpec,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        Self {
            population_size: 20,
            generations: 10,
            epochs_per_individual: 15,
            learning_rate: 1e-4,
            elitism: 2,
            mutation_prob: 0.2,
            tournament_size: 3,
            seed: 0,
            batch_size: 32,
            network: NetworkSpec::default(),
        }
    }
}

impl EvolveConfig {
    pub fn validate(&self) -> Result<(), EvolveError> {
        let bad = |m: &str| Err(EvolveError::InvalidConfig(m.to_string()));
        if self.population_size == 0 {
            return bad("population_size must be positive");
        }
        if self.elitism >= self.population_size {
            return bad("elitism must be smaller than population_size");
        }
        if !(0.0..=1.0).contains(&self.mutation_prob) {
            return bad("mutation_prob must lie in [0, 1]");
        }
        if self.tournament_size == 0 {
            return bad("tournament_size must be positive");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        self.network.validate()?;
        Ok(())
    }
}

/// A genome together with its weights and evaluation state.
///
/// Weights are created on first evaluation from a seed fixed at birth, so a
/// fresh individual costs nothing until it is trained.
#[derive(Debug, Clone)]
pub struct Individual {
    /// Discovery order; unique within a run.
    pub id: u64,
    pub genome: Genome,
    pub params: Option<Parameters>,
    pub fitness: Option<f64>,
    /// Optimizer steps taken so far.
    pub train_step: u64,
    seed: u64,
}

impl Individual {
    pub fn new(id: u64, genome: Genome, seed: u64) -> Self {
        Self {
            id,
            genome,
            params: None,
            fitness: None,
            train_step: 0,
            seed,
        }
    }

    pub fn network_spec(&self, base: &NetworkSpec) -> NetworkSpec {
        self.genome.apply(base)
    }
}

#[derive(Debug, Clone)]
pub struct Population {
    pub individuals: Vec<Individual>,
    pub generation: usize,
    next_id: u64,
}

impl Population {
    fn spawn(&mut self, genome: Genome, config: &EvolveConfig, slot: usize) -> Individual {
        let seed = rng::derive_seed(config.seed, &[INIT_LABEL, self.generation as u64, slot as u64]);
        let ind = Individual::new(self.next_id, genome, seed);
        self.next_id += 1;
        ind
    }
}

/// Per-generation summary, one line of the evolution log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub generation: usize,
    pub best_fitness: f64,
    pub mean_fitness: f64,
    pub best_genome: Genome,
}

#[derive(Debug, Clone)]
pub struct EvolveOutcome {
    /// Best individuals ever evaluated, by descending fitness.
    pub top: Vec<Individual>,
    pub history: Vec<GenerationStats>,
}

pub fn init_population(config: &EvolveConfig) -> Population {
    let mut pop = Population {
        individuals: Vec::with_capacity(config.population_size),
        generation: 0,
        next_id: 0,
    };
    let mut g_rng = rng::stream(config.seed, &[GENOME_LABEL]);
    for slot in 0..config.population_size {
        let genome = Genome::random(&mut g_rng);
        let ind = pop.spawn(genome, config, slot);
        pop.individuals.push(ind);
    }
    pop
}

/// Trains the individual's weights for `epochs_per_individual` epochs and
/// sets its fitness to the validation accuracy.
pub fn evaluate(
    individual: &mut Individual,
    train_set: &LabelledSet,
    val_set: &LabelledSet,
    config: &EvolveConfig,
) -> Result<(), EvolveError> {
    if train_set.is_empty() || val_set.is_empty() {
        return Err(EvolveError::EmptyDataset);
    }
    let spec = individual.network_spec(&config.network);
    let mut params = match individual.params.take() {
        Some(p) => p,
        None => init_parameters(&spec, individual.seed)?,
    };
    let mut opt = OptimizerState::new(spec.optimizer, config.learning_rate, &params.trainable);
    let mut rng = rng::stream(individual.seed, &[TRAIN_LABEL, individual.train_step]);
    let steps_per_epoch = train_set.len().div_ceil(config.batch_size.max(1)) as u64;
    for epoch in 0..config.epochs_per_individual {
        let loss = train_epoch(&spec, &mut params, &mut opt, train_set, config.batch_size, &mut rng)?;
        log::debug!("individual {} epoch {}: loss {:.5}", individual.id, epoch + 1, loss);
        individual.train_step += steps_per_epoch;
    }
    let preds = predict_all(&spec, &params, val_set, config.batch_size)?;
    individual.fitness = Some(accuracy(&preds, &val_set.labels));
    individual.params = Some(params);
    Ok(())
}

fn fitness_of(ind: &Individual) -> Result<f64, EvolveError> {
    ind.fitness.ok_or(EvolveError::NotEvaluated(ind.id))
}

/// Descending fitness, earlier discovery first on ties.
fn rank(a: &Individual, b: &Individual) -> std::cmp::Ordering {
    let fa = a.fitness.unwrap_or(f64::NEG_INFINITY);
    let fb = b.fitness.unwrap_or(f64::NEG_INFINITY);
    fb.total_cmp(&fa).then(a.id.cmp(&b.id))
}

fn tournament<'a, R: Rng + ?Sized>(pool: &'a [Individual], k: usize, rng: &mut R) -> &'a Individual {
    (0..k)
        .map(|_| &pool[rng.gen_range(0..pool.len())])
        .min_by(|a, b| rank(a, b))
        .expect("tournament size is positive")
}

/// Builds the next generation: elites carried over with their weights and
/// fitness, the rest bred by tournament selection, uniform crossover and
/// mutation, each child starting from fresh weights.
pub fn explore<R: Rng + ?Sized>(
    population: &Population,
    config: &EvolveConfig,
    rng: &mut R,
) -> Result<Population, EvolveError> {
    for ind in &population.individuals {
        fitness_of(ind)?;
    }
    let mut ranked: Vec<&Individual> = population.individuals.iter().collect();
    ranked.sort_by(|a, b| rank(a, b));

    let mut next = Population {
        individuals: Vec::with_capacity(config.population_size),
        generation: population.generation + 1,
        next_id: population.next_id,
    };
    next.individuals
        .extend(ranked.iter().take(config.elitism).map(|&ind| ind.clone()));
    for slot in config.elitism..config.population_size {
        let a = tournament(&population.individuals, config.tournament_size, rng);
        let b = tournament(&population.individuals, config.tournament_size, rng);
        let child = a.genome.crossover(&b.genome, rng).mutate(config.mutation_prob, rng);
        let ind = next.spawn(child, config, slot);
        next.individuals.push(ind);
    }
    Ok(next)
}

fn summarize(population: &Population) -> Result<GenerationStats, EvolveError> {
    let mut best = &population.individuals[0];
    let mut sum = 0.0;
    for ind in &population.individuals {
        sum += fitness_of(ind)?;
        if rank(ind, best).is_lt() {
            best = ind;
        }
    }
    Ok(GenerationStats {
        generation: population.generation,
        best_fitness: fitness_of(best)?,
        mean_fitness: sum / population.individuals.len() as f64,
        best_genome: best.genome,
    })
}

/// Runs the full search. `on_generation` is called once per generation,
/// after evaluation and before exploration.
///
/// Individuals of a generation are trained in parallel on the current rayon
/// pool; every random stream is keyed by individual, so the outcome does not
/// depend on the number of threads.
pub fn evolve_with<F: FnMut(&GenerationStats)>(
    config: &EvolveConfig,
    train_set: &LabelledSet,
    val_set: &LabelledSet,
    mut on_generation: F,
) -> Result<EvolveOutcome, EvolveError> {
    config.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(EvolveError::EmptyDataset);
    }
    let keep = TOP_K.min(config.population_size);
    let mut explore_rng = rng::stream(config.seed, &[EXPLORE_LABEL]);
    let mut population = init_population(config);
    let mut top: Vec<Individual> = Vec::new();
    let mut history = Vec::with_capacity(config.generations);

    for g in 0..config.generations {
        population
            .individuals
            .par_iter_mut()
            .filter(|ind| ind.fitness.is_none())
            .try_for_each(|ind| evaluate(ind, train_set, val_set, config))?;

        let stats = summarize(&population)?;
        log::info!(
            "generation {}: best {:.4}, mean {:.4}, genome {}",
            stats.generation,
            stats.best_fitness,
            stats.mean_fitness,
            stats.best_genome
        );
        on_generation(&stats);
        history.push(stats);

        for ind in &population.individuals {
            if !top.iter().any(|t| t.id == ind.id) {
                top.push(ind.clone());
            }
        }
        top.sort_by(rank);
        top.truncate(keep);

        if g + 1 < config.generations {
            population = explore(&population, config, &mut explore_rng)?;
        }
    }
    Ok(EvolveOutcome { top, history })
}

pub fn evolve(
    config: &EvolveConfig,
    train_set: &LabelledSet,
    val_set: &LabelledSet,
) -> Result<EvolveOutcome, EvolveError> {
    evolve_with(config, train_set, val_set, |_| {})
}

