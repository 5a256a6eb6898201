//! Genetic algorithm over per-site uptilt angles.
//!
//! The optimizer searches one uptilt angle per site, maximizing the
//! minimum SIR that the coverage module reports over an evaluation grid.
//! The algorithm is a plain generational GA — tournament selection,
//! uniform crossover, per-gene Gaussian mutation clipped to the angle
//! bounds, and elitist replacement — evaluated as a deterministic
//! parallel map over genomes.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use thiserror::Error;

use crate::channel::LinkBudgetParams;
use crate::coverage::{associate, min_sir_db, CoverageError};
use crate::scenario::{EvaluationGrid, NetworkLayout};

/// Smallest permitted uptilt angle (boresight on the horizon).
pub const GENE_LOWER_BOUND_DEG: f64 = 0.0;

/// Largest permitted uptilt angle (boresight at the zenith).
pub const GENE_UPPER_BOUND_DEG: f64 = 90.0;

#[derive(Debug, Error)]
pub enum OptimizerError {
    #[error("genome has {actual} genes but the layout has {expected} sites")]
    GenomeLength { expected: usize, actual: usize },
    #[error("gene {index} = {value} deg lies outside [{lo}, {hi}] deg")]
    GeneOutOfBounds {
        index: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("population {population} must exceed elitism {elitism}")]
    InvalidPopulation { population: usize, elitism: usize },
    #[error("tournament size {k} must be between 1 and the population size {population}")]
    InvalidTournament { k: usize, population: usize },
    #[error("{name} = {value} is not a probability in [0, 1]")]
    InvalidProbability { name: &'static str, value: f64 },
    #[error("mutation sigma must be non-negative and finite, got {0} deg")]
    InvalidSigma(f64),
    #[error("gene bounds [{lo}, {hi}] deg are invalid (must be ordered and within [0, 90])")]
    InvalidBounds { lo: f64, hi: f64 },
    #[error(transparent)]
    Coverage(#[from] CoverageError),
}

/// Hyperparameters of the genetic algorithm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GaConfig {
    pub population: usize,
    pub generations: usize,
    pub tournament_k: usize,
    pub crossover_prob: f64,
    pub mutation_sigma_deg: f64,
    pub mutation_prob: f64,
    pub elitism: usize,
    pub gene_bounds_deg: (f64, f64),
    /// RNG substream label used by callers to derive the GA's random stream.
    pub rng_label: String,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population: 50,
            generations: 100,
            tournament_k: 3,
            crossover_prob: 0.9,
            mutation_sigma_deg: 2.0,
            mutation_prob: 1.0 / 19.0,
            elitism: 2,
            gene_bounds_deg: (GENE_LOWER_BOUND_DEG, GENE_UPPER_BOUND_DEG),
            rng_label: "ga".to_string(),
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<(), OptimizerError> {
        if self.population == 0 || self.population <= self.elitism {
            return Err(OptimizerError::InvalidPopulation {
                population: self.population,
                elitism: self.elitism,
            });
        }
        if self.tournament_k == 0 || self.tournament_k > self.population {
            return Err(OptimizerError::InvalidTournament {
                k: self.tournament_k,
                population: self.population,
            });
        }
        for (name, value) in [
            ("crossover_prob", self.crossover_prob),
            ("mutation_prob", self.mutation_prob),
        ] {
            if !(value.is_finite() && (0.0..=1.0).contains(&value)) {
                return Err(OptimizerError::InvalidProbability { name, value });
            }
        }
        if !(self.mutation_sigma_deg.is_finite() && self.mutation_sigma_deg >= 0.0) {
            return Err(OptimizerError::InvalidSigma(self.mutation_sigma_deg));
        }
        let (lo, hi) = self.gene_bounds_deg;
        if !(lo.is_finite()
            && hi.is_finite()
            && lo < hi
            && lo >= GENE_LOWER_BOUND_DEG
            && hi <= GENE_UPPER_BOUND_DEG)
        {
            return Err(OptimizerError::InvalidBounds { lo, hi });
        }
        Ok(())
    }
}

/// Everything a fitness evaluation needs: the downtilt-only layout, the
/// evaluation grid, and the link budget.
#[derive(Clone, Debug)]
pub struct GaScenario {
    pub layout: NetworkLayout,
    pub grid: EvaluationGrid,
    pub link_budget: LinkBudgetParams,
}

/// Per-generation fitness summary.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GenerationStats {
    pub generation: usize,
    pub best_fitness_db: f64,
    pub mean_fitness_db: f64,
}

/// Outcome of a GA run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GaResult {
    /// Best uptilt angles found, one per site in site-id order.
    pub best_genome: Vec<f64>,
    pub best_fitness_db: f64,
    /// Per-generation best and mean fitness, starting at the initial
    /// population (generation 0).
    pub fitness_history: Vec<GenerationStats>,
    /// Total number of genome evaluations performed.
    pub evaluations: usize,
}

/// Min-SIR fitness of one genome: every site gets its gene as the uptilt
/// angle, the grid is re-associated, and the worst SIR on the grid is the
/// fitness. Pure: equal genomes yield bit-identical fitness.
pub fn evaluate_genome(genome: &[f64], scenario: &GaScenario) -> Result<f64, OptimizerError> {
    let expected = scenario.layout.sites.len();
    if genome.len() != expected {
        return Err(OptimizerError::GenomeLength {
            expected,
            actual: genome.len(),
        });
    }
    for (index, &value) in genome.iter().enumerate() {
        if !(value.is_finite()
            && (GENE_LOWER_BOUND_DEG..=GENE_UPPER_BOUND_DEG).contains(&value))
        {
            return Err(OptimizerError::GeneOutOfBounds {
                index,
                value,
                lo: GENE_LOWER_BOUND_DEG,
                hi: GENE_UPPER_BOUND_DEG,
            });
        }
    }
    let tilted = scenario.layout.with_uptilts(genome);
    let map = associate(&tilted, &scenario.grid, &scenario.link_budget)?;
    // A layout with a single panel has no interferers anywhere; treat the
    // unbounded SIR as the fitness ceiling.
    Ok(min_sir_db(&map).unwrap_or(f64::INFINITY))
}

fn evaluate_population(
    population: &[Vec<f64>],
    scenario: &GaScenario,
) -> Result<Vec<f64>, OptimizerError> {
    population
        .par_iter()
        .map(|genome| evaluate_genome(genome, scenario))
        .collect()
}

/// Indices of the population ranked best-first, ties broken by index so
/// replacement is stable and deterministic.
fn ranked_indices(fitness: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..fitness.len()).collect();
    order.sort_by(|&a, &b| {
        fitness[b]
            .partial_cmp(&fitness[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
}

fn tournament_winner<R: Rng + ?Sized>(fitness: &[f64], k: usize, rng: &mut R) -> usize {
    let mut winner = rng.gen_range(0..fitness.len());
    for _ in 1..k {
        let challenger = rng.gen_range(0..fitness.len());
        if fitness[challenger] > fitness[winner]
            || (fitness[challenger] == fitness[winner] && challenger < winner)
        {
            winner = challenger;
        }
    }
    winner
}

/// Runs the GA and returns the best genome along with the full fitness
/// history. Deterministic for a fixed RNG state; fitness evaluation is a
/// parallel map, while selection and replacement are sequential.
pub fn run_ga<R: Rng + ?Sized>(
    config: &GaConfig,
    scenario: &GaScenario,
    rng: &mut R,
) -> Result<GaResult, OptimizerError> {
    config.validate()?;
    let n_genes = scenario.layout.sites.len();
    let (lo, hi) = config.gene_bounds_deg;

    let mut population: Vec<Vec<f64>> = (0..config.population)
        .map(|_| (0..n_genes).map(|_| rng.gen_range(lo..=hi)).collect())
        .collect();
    let mut fitness = evaluate_population(&population, scenario)?;
    let mut evaluations = population.len();

    let stats = |generation: usize, fitness: &[f64]| GenerationStats {
        generation,
        best_fitness_db: fitness.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        mean_fitness_db: fitness.iter().sum::<f64>() / fitness.len() as f64,
    };
    let mut history = vec![stats(0, &fitness)];

    let mut best_index = ranked_indices(&fitness)[0];
    let mut best_genome = population[best_index].clone();
    let mut best_fitness = fitness[best_index];

    let mutation = Normal::new(0.0, config.mutation_sigma_deg)
        .expect("validated non-negative mutation sigma");

    for generation in 1..=config.generations {
        let order = ranked_indices(&fitness);
        let mut next: Vec<Vec<f64>> = order[..config.elitism]
            .iter()
            .map(|&i| population[i].clone())
            .collect();
        while next.len() < config.population {
            let parent_a = tournament_winner(&fitness, config.tournament_k, rng);
            let parent_b = tournament_winner(&fitness, config.tournament_k, rng);
            let mut child: Vec<f64> = if rng.gen_bool(config.crossover_prob) {
                (0..n_genes)
                    .map(|g| {
                        if rng.gen_bool(0.5) {
                            population[parent_a][g]
                        } else {
                            population[parent_b][g]
                        }
                    })
                    .collect()
            } else {
                population[parent_a].clone()
            };
            for gene in child.iter_mut() {
                if rng.gen_bool(config.mutation_prob) {
                    *gene = (*gene + mutation.sample(rng)).clamp(lo, hi);
                }
            }
            next.push(child);
        }

        population = next;
        fitness = evaluate_population(&population, scenario)?;
        evaluations += population.len();
        history.push(stats(generation, &fitness));

        best_index = ranked_indices(&fitness)[0];
        if fitness[best_index] > best_fitness {
            best_fitness = fitness[best_index];
            best_genome = population[best_index].clone();
        }
    }

    Ok(GaResult {
        best_genome,
        best_fitness_db: best_fitness,
        fitness_history: history,
        evaluations,
    })
}
