//! Tree-based genetic programming with Levenberg-Marquardt local search.
//!
//! Every candidate is locally optimized before selection and the improved
//! parameters are written back into its tree, so offspring inherit them.
//! All randomness for candidate `i` of generation `g` comes from the stream
//! `(seed, g, i)`, which makes a run independent of evaluation order.

mod init;
mod operators;

pub use init::TreeShape;
pub use operators::{apply_mutation, mutate, subtree_crossover, MutationKind, CROSSOVER_TRIES};

use nalgebra::DMatrix;

use crate::conditioning::{analyze, JacobianReport};
use crate::data::Dataset;
use crate::diff::jacobian;
use crate::expr::{residuals, ExprTree, FunctionSet};
use crate::nls::{levenberg_marquardt, LmConfig, Termination};
use crate::rng::{stream, Rng};
use crate::telemetry::{aggregate_candidate, CandidateMeta, CandidateRecord, TelemetrySink};
use crate::{Error, Result};

/// Fitness given to candidates whose predictions are not finite.
pub const WORST_FITNESS: f64 = f64::MAX;

#[derive(Debug, Clone, PartialEq)]
pub struct GpConfig {
    pub population_size: usize,
    pub generations: usize,
    /// LM iterations per candidate and generation.
    pub local_opt_iters: usize,
    pub max_size: usize,
    pub function_set: FunctionSet,
    pub mutation_rate: f64,
    pub tournament_size: usize,
    pub elites: usize,
    /// Share of leaves created as constants rather than weighted variables.
    pub constant_ratio: f64,
    pub seed: u64,
}

impl Default for GpConfig {
    fn default() -> Self {
        GpConfig {
            population_size: 1000,
            generations: 100,
            local_opt_iters: 10,
            max_size: 50,
            function_set: FunctionSet::Small,
            mutation_rate: 0.25,
            tournament_size: 5,
            elites: 1,
            constant_ratio: 0.25,
            seed: 0,
        }
    }
}

impl GpConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.population_size == 0 || self.generations == 0 || self.local_opt_iters == 0 {
            return bad("population size, generations and local iterations must be at least 1");
        }
        if self.tournament_size == 0 || self.elites == 0 {
            return bad("tournament size and elite count must be at least 1");
        }
        if self.elites > self.population_size {
            return bad("more elites than individuals");
        }
        if self.max_size < 3 {
            return bad("max_size must be at least 3");
        }
        if !(0.0..=1.0).contains(&self.mutation_rate) {
            return bad("mutation rate must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.constant_ratio) {
            return bad("constant ratio must lie in [0, 1]");
        }
        Ok(())
    }

    pub fn lm_config(&self) -> LmConfig {
        LmConfig::default().with_max_iterations(self.local_opt_iters)
    }

    fn shape(&self, num_vars: usize) -> TreeShape {
        TreeShape {
            function_set: self.function_set,
            num_vars,
            constant_ratio: self.constant_ratio,
        }
    }
}

/// A candidate with its parameters stored in the tree.
#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub tree: ExprTree,
    /// Mean squared error, or [`WORST_FITNESS`].
    pub fitness: f64,
    /// Conditioning seen during the last local optimization.
    pub record: CandidateRecord,
}

impl Individual {
    pub fn theta(&self) -> Vec<f64> {
        self.tree.parameters()
    }
}

/// Outcome of locally optimizing one tree.
#[derive(Debug, Clone)]
pub struct LocalSearch {
    pub tree: ExprTree,
    pub fitness: f64,
    pub reports: Vec<JacobianReport>,
    pub nfev: usize,
    pub njev: usize,
    pub termination: Termination,
}

fn mse(ssr: f64, n: usize) -> f64 {
    let m = ssr / n as f64;
    if m.is_finite() {
        m
    } else {
        WORST_FITNESS
    }
}

/// Runs LM from the tree's current parameters and writes them back only if
/// the sum of squares improved.
pub fn local_optimize(tree: &ExprTree, x: &DMatrix<f64>, y: &[f64], config: &LmConfig) -> Result<LocalSearch> {
    let theta0 = tree.parameters();
    residuals(tree, &theta0, x, y)?;
    let res = levenberg_marquardt(
        |t| residuals(tree, t, x, y).expect("dimensions checked"),
        |t| jacobian(tree, t, x).expect("dimensions checked"),
        &theta0,
        config,
        |_| {},
    );
    let improved = res.ssr.is_finite() && res.ssr < res.initial_ssr;
    let (tree, ssr) = if improved {
        (tree.with_parameters(&res.theta)?, res.ssr)
    } else {
        (tree.clone(), res.initial_ssr)
    };
    Ok(LocalSearch {
        tree,
        fitness: mse(ssr, y.len()),
        reports: res.reports,
        nfev: res.nfev,
        njev: res.njev,
        termination: res.termination,
    })
}

/// Random initial population of `config.population_size` trees.
pub fn initialize_population(config: &GpConfig, num_vars: usize) -> Result<Vec<ExprTree>> {
    config.validate()?;
    if num_vars == 0 {
        return Err(Error::Empty("input columns"));
    }
    let shape = config.shape(num_vars);
    Ok((0..config.population_size)
        .map(|i| {
            let mut rng = candidate_rng(config.seed, 0, i);
            shape.random_tree(3, config.max_size, &mut rng)
        })
        .collect())
}

fn candidate_rng(seed: u64, generation: usize, index: usize) -> Rng {
    stream(seed, &[generation as u64, index as u64])
}

/// Index of the tournament winner: lowest fitness, ties to the lower index.
pub fn tournament(population: &[Individual], size: usize, rng: &mut Rng) -> usize {
    use rand::Rng as _;
    let mut best = rng.random_range(0..population.len());
    for _ in 1..size {
        let c = rng.random_range(0..population.len());
        let (fc, fb) = (population[c].fitness, population[best].fitness);
        if fc < fb || (fc == fb && c < best) {
            best = c;
        }
    }
    best
}

/// Indices sorted by fitness, ties by index.
fn ranking(population: &[Individual]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..population.len()).collect();
    idx.sort_by(|&a, &b| population[a].fitness.total_cmp(&population[b].fitness).then(a.cmp(&b)));
    idx
}

/// Best individual of a run and its linearly scaled model.
#[derive(Debug, Clone)]
pub struct FinalModel {
    pub best: Individual,
    /// Conditioning of the best expression before scaling; `None` if its
    /// Jacobian is not finite.
    pub report: Option<JacobianReport>,
    /// Intercept and slope of `a + b·f`.
    pub intercept: f64,
    pub slope: f64,
    /// `a + b·f` as a tree.
    pub scaled: ExprTree,
    /// MSE of the scaled model.
    pub fitness: f64,
    /// Best fitness after each generation.
    pub best_history: Vec<f64>,
}

/// Least-squares `(a, b)` for `y ≈ a + b·f`.
pub fn linear_scaling(f: &[f64], y: &[f64]) -> (f64, f64) {
    let n = f.len() as f64;
    let fm = f.iter().sum::<f64>() / n;
    let ym = y.iter().sum::<f64>() / n;
    let (mut sfy, mut sff) = (0.0, 0.0);
    for (a, b) in f.iter().zip(y) {
        sfy += (a - fm) * (b - ym);
        sff += (a - fm) * (a - fm);
    }
    if sff > 0.0 && sff.is_finite() && sfy.is_finite() {
        let b = sfy / sff;
        (ym - b * fm, b)
    } else {
        (ym - fm, 1.0)
    }
}

fn evaluate(
    trees: Vec<ExprTree>,
    generation: usize,
    data: &Dataset,
    lm: &LmConfig,
) -> Result<Vec<Individual>> {
    trees
        .into_iter()
        .enumerate()
        .map(|(index, tree)| {
            let ls = local_optimize(&tree, &data.x, &data.y, lm)?;
            let record = aggregate_candidate(
                &ls.reports,
                CandidateMeta {
                    generation,
                    index,
                    k: ls.tree.num_params(),
                    fitness: ls.fitness,
                    tree_size: ls.tree.size(),
                },
            );
            Ok(Individual {
                tree: ls.tree,
                fitness: ls.fitness,
                record,
            })
        })
        .collect()
}

/// Runs the generational loop and returns the best solution.
///
/// Each generation locally optimizes every candidate and hands its
/// records to `sink`. The stored elites are carried over unchanged; the
/// copy evaluated in the next generation only feeds the telemetry.
pub fn evolve(config: &GpConfig, data: &Dataset, sink: &mut dyn TelemetrySink) -> Result<FinalModel> {
    config.validate()?;
    if data.n() == 0 {
        return Err(Error::Empty("dataset"));
    }
    let lm = config.lm_config();
    let shape = config.shape(data.d());

    let mut population = evaluate(initialize_population(config, data.d())?, 0, data, &lm)?;
    sink.record_generation(&records(&population));
    let mut best_history = vec![population[ranking(&population)[0]].fitness];

    for generation in 1..config.generations {
        let order = ranking(&population);
        let elites: Vec<Individual> = order[..config.elites].iter().map(|&i| population[i].clone()).collect();
        let mut trees: Vec<ExprTree> = elites.iter().map(|e| e.tree.clone()).collect();
        for index in config.elites..config.population_size {
            let mut rng = candidate_rng(config.seed, generation, index);
            let a = tournament(&population, config.tournament_size, &mut rng);
            let b = tournament(&population, config.tournament_size, &mut rng);
            let child = subtree_crossover(&population[a].tree, &population[b].tree, config.max_size, &mut rng);
            trees.push(mutate(&child, config.mutation_rate, config.max_size, &shape, &mut rng));
        }
        let mut next = evaluate(trees, generation, data, &lm)?;
        sink.record_generation(&records(&next));
        for (slot, elite) in next.iter_mut().zip(elites) {
            let record = slot.record.clone();
            *slot = Individual { record, ..elite };
        }
        population = next;
        best_history.push(population[ranking(&population)[0]].fitness);
    }

    let best = population[ranking(&population)[0]].clone();
    finish(best, data, best_history)
}

fn records(population: &[Individual]) -> Vec<CandidateRecord> {
    population.iter().map(|i| i.record.clone()).collect()
}

fn finish(best: Individual, data: &Dataset, best_history: Vec<f64>) -> Result<FinalModel> {
    let theta = best.theta();
    let report = analyze(&jacobian(&best.tree, &theta, &data.x)?).ok();
    let f = best.tree.evaluate(&data.x)?;
    let (intercept, slope) = linear_scaling(&f, &data.y);
    let scaled = ExprTree::add(
        ExprTree::constant(intercept),
        ExprTree::mul(ExprTree::constant(slope), best.tree.clone()),
    );
    let ssr: f64 = f
        .iter()
        .zip(&data.y)
        .map(|(fi, yi)| (yi - intercept - slope * fi).powi(2))
        .sum();
    Ok(FinalModel {
        best,
        report,
        intercept,
        slope,
        scaled,
        fitness: mse(ssr, data.n()),
        best_history,
    })
}
