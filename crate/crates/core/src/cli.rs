//! Command-line experiment runner.
//!
//! `run` executes repeated GP runs and writes per-run telemetry plus a
//! shared table of final solutions. `case-study` fits the three forms of
//! the redundant reference expression on the Pagie grid and compares their
//! conditioning and restart behaviour.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::conditioning::{analyze, JacobianReport};
use crate::data::{generate, load_csv, Benchmark, Dataset, DatasetSpec};
use crate::diff::jacobian;
use crate::expr::{case_study_trees, ExprTree, FunctionSet};
use crate::gp::{evolve, FinalModel, GpConfig};
use crate::nls::{multistart, restart_experiment, tied_optima, LmConfig, RestartStats};
use crate::telemetry::{
    format_float, median, render_percentile_plot, write_candidates_csv, write_finals_csv, write_generations_csv,
    FinalSolutionRecord, Metric, RunLog,
};
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "srcond", version, about = "Memetic symbolic regression with Jacobian conditioning telemetry")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run GP repetitions and write telemetry.
    Run(RunArgs),
    /// Fit the redundant reference expression and its reduced forms.
    CaseStudy(CaseStudyArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Benchmark name (pagie, kotanchek, poly10, salustowicz2d) or CSV path.
    #[arg(long)]
    pub instance: String,
    /// Target column when the instance is a CSV file.
    #[arg(long, default_value = "y")]
    pub target: String,
    #[arg(long, default_value_t = 50)]
    pub max_size: usize,
    #[arg(long, default_value = "small")]
    pub function_set: FunctionSet,
    #[arg(long, default_value_t = 1000)]
    pub population: usize,
    #[arg(long, default_value_t = 100)]
    pub generations: usize,
    #[arg(long, default_value_t = 10)]
    pub local_iters: usize,
    #[arg(long, default_value_t = 1)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

/// Default restart perturbation scale of the case study.
pub const CASE_STUDY_SCALE: f64 = 24.0;

#[derive(Debug, Clone, Args)]
pub struct CaseStudyArgs {
    /// Random starts for each fit.
    #[arg(long, default_value_t = 100)]
    pub starts: usize,
    /// Perturbed restarts per form in the restart experiment.
    #[arg(long, default_value_t = 1000)]
    pub restarts: usize,
    /// Perturbation scale for the restarts (see `nls::perturb`).
    #[arg(long, default_value_t = CASE_STUDY_SCALE)]
    pub scale: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Everything that determines the output of `run`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub instance: String,
    pub target: String,
    pub max_size: usize,
    pub function_set: FunctionSet,
    pub population: usize,
    pub generations: usize,
    pub local_iters: usize,
    pub reps: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl From<RunArgs> for RunSpec {
    fn from(a: RunArgs) -> Self {
        RunSpec {
            instance: a.instance,
            target: a.target,
            max_size: a.max_size,
            function_set: a.function_set,
            population: a.population,
            generations: a.generations,
            local_iters: a.local_iters,
            reps: a.reps,
            seed: a.seed,
            out_dir: a.out,
        }
    }
}

impl RunSpec {
    pub fn gp_config(&self, rep: usize) -> GpConfig {
        GpConfig {
            population_size: self.population,
            generations: self.generations,
            local_opt_iters: self.local_iters,
            max_size: self.max_size,
            function_set: self.function_set,
            seed: self.seed.wrapping_add(rep as u64),
            ..GpConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::Config("reps must be at least 1".into()));
        }
        self.gp_config(0).validate()
    }
}

/// Resolves a benchmark name or a CSV path.
pub fn load_instance(instance: &str, target: &str) -> Result<Dataset> {
    match instance.parse::<Benchmark>() {
        Ok(b) => generate(&DatasetSpec::new(b)),
        Err(_) if Path::new(instance).is_file() => load_csv(instance, target, None),
        Err(_) => Err(Error::Config(format!(
            "'{instance}' is neither a benchmark name nor a readable CSV file"
        ))),
    }
}

/// `Instance-MaxSize-Set`, used as the output directory name.
pub fn nomenclature(dataset: &str, max_size: usize, set: FunctionSet) -> String {
    format!("{dataset}-{max_size}-{}", set.name())
}

/// Conditioning of a final solution before scaling, as table values.
pub fn final_record(model: &FinalModel, data: &Dataset, max_size: usize, set: FunctionSet, rep: usize) -> FinalSolutionRecord {
    let k = model.best.tree.num_params();
    let (redundant, lk, lkr) = match &model.report {
        Some(r) => (r.redundant(), r.kappa.log10(), r.kappa_r.log10()),
        None => (0, f64::NAN, f64::NAN),
    };
    FinalSolutionRecord {
        dataset: data.name.clone(),
        max_size,
        function_set: set.name().to_string(),
        rep,
        k,
        redundant,
        log10_kappa: lk,
        log10_kappa_r: lkr,
        fitness: model.fitness,
        expression: model.scaled.to_infix(&data.names),
    }
}

/// Medians over the final solutions of one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub config: String,
    pub reps: usize,
    pub k: f64,
    pub redundant: f64,
    pub log10_kappa: f64,
    pub log10_kappa_r: f64,
    pub fitness: f64,
}

pub fn summarize(config: &str, finals: &[FinalSolutionRecord]) -> SummaryRow {
    let col = |f: fn(&FinalSolutionRecord) -> f64| median(&finals.iter().map(f).collect::<Vec<_>>());
    SummaryRow {
        config: config.to_string(),
        reps: finals.len(),
        k: col(|r| r.k as f64),
        redundant: col(|r| r.redundant as f64),
        log10_kappa: col(|r| r.log10_kappa),
        log10_kappa_r: col(|r| r.log10_kappa_r),
        fitness: col(|r| r.fitness),
    }
}

fn summary_table(row: &SummaryRow) -> String {
    let f = |v: f64| if v.is_finite() { format!("{v:.3}") } else { format_float(v) };
    format!(
        "{:<28} {:>5} {:>8} {:>8} {:>10} {:>12} {:>12}\n{:<28} {:>5} {:>8} {:>8} {:>10} {:>12} {:>12}\n",
        "config",
        "reps",
        "k",
        "k-r",
        "log10 k",
        "log10 k_r",
        "mse",
        row.config,
        row.reps,
        f(row.k),
        f(row.redundant),
        f(row.log10_kappa),
        f(row.log10_kappa_r),
        f(row.fitness),
    )
}

fn write_summary_csv(row: &SummaryRow, path: &Path) -> Result<()> {
    let text = format!(
        "config,reps,k,redundant,log10_kappa,log10_kappa_r,fitness\n{},{},{},{},{},{},{}\n",
        row.config,
        row.reps,
        format_float(row.k),
        format_float(row.redundant),
        format_float(row.log10_kappa),
        format_float(row.log10_kappa_r),
        format_float(row.fitness),
    );
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Output of [`run`].
#[derive(Debug, Clone)]
pub struct RunReport {
    pub dir: PathBuf,
    pub finals: Vec<FinalSolutionRecord>,
    pub summary: SummaryRow,
}

/// Runs all repetitions of `spec`. Progress lines go to `progress`.
///
/// Layout: `out/<Instance-MaxSize-Set>/rep<k>/{candidates,generations}.csv`
/// and one SVG per metric, plus `finals.csv` and `summary.csv` next to
/// the `rep*` directories.
pub fn run(spec: &RunSpec, progress: &mut dyn Write) -> Result<RunReport> {
    spec.validate()?;
    let data = load_instance(&spec.instance, &spec.target)?;
    let nom = nomenclature(&data.name, spec.max_size, spec.function_set);
    let dir = spec.out_dir.join(&nom);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let _ = writeln!(
        progress,
        "[{}/{}/{}] n={} d={} population={} generations={} reps={}",
        data.name,
        spec.max_size,
        spec.function_set.name(),
        data.n(),
        data.d(),
        spec.population,
        spec.generations,
        spec.reps
    );

    let mut finals = Vec::with_capacity(spec.reps);
    for rep in 0..spec.reps {
        let cfg = spec.gp_config(rep);
        let mut log = RunLog::default();
        let model = evolve(&cfg, &data, &mut log)?;
        let rep_dir = dir.join(format!("rep{rep}"));
        fs::create_dir_all(&rep_dir).map_err(|e| Error::io(&rep_dir, e))?;
        write_candidates_csv(&log.candidates, rep_dir.join("candidates.csv"))?;
        write_generations_csv(&log.generations, rep_dir.join("generations.csv"))?;
        for m in Metric::ALL {
            render_percentile_plot(&log.generations, m, rep_dir.join(format!("{}.svg", m.name())))?;
        }
        let rec = final_record(&model, &data, spec.max_size, spec.function_set, rep);
        let _ = writeln!(
            progress,
            "[{nom}] rep {rep} seed {}: mse={} k={} k-r={}",
            cfg.seed,
            format_float(rec.fitness),
            rec.k,
            rec.redundant
        );
        finals.push(rec);
    }
    write_finals_csv(&finals, dir.join("finals.csv"))?;
    let summary = summarize(&nom, &finals);
    write_summary_csv(&summary, &dir.join("summary.csv"))?;
    Ok(RunReport { dir, finals, summary })
}

/// Fit and restart statistics of one case-study form.
#[derive(Debug, Clone)]
pub struct FormReport {
    pub name: &'static str,
    pub tree: ExprTree,
    pub ssr: f64,
    /// Starts that reached the best ssr.
    pub tied: usize,
    pub report: JacobianReport,
    pub restarts: Option<RestartStats>,
}

/// Fits the original, simplified and fixed forms on the Pagie grid.
///
/// Redundant forms reach their best ssr on a whole manifold of parameter
/// vectors, and the truncated condition number varies along it. Of the
/// starts that tie for the best ssr, the one with the median `κ_r` is
/// reported and used as the restart reference. Restart statistics are
/// computed for the original and fixed forms when `restarts > 0`.
pub fn case_study(args: &CaseStudyArgs) -> Result<Vec<FormReport>> {
    let data = generate(&DatasetSpec::new(Benchmark::Pagie))?;
    let trees = case_study_trees(0, 1);
    let lm = LmConfig::default().with_max_iterations(100);
    let forms = [
        ("original", trees.original, true),
        ("simplified", trees.simplified, false),
        ("fixed", trees.fixed, true),
    ];
    forms
        .into_iter()
        .map(|(name, tree, restart)| {
            let fits = multistart(&tree, &data.x, &data.y, args.starts, args.seed, &lm)?;
            let mut tied = Vec::new();
            for fit in tied_optima(&fits) {
                if let Ok(report) = analyze(&jacobian(&tree, &fit.theta, &data.x)?) {
                    tied.push((fit, report));
                }
            }
            if tied.is_empty() {
                return Err(Error::NonFinite("Jacobian at every optimum"));
            }
            // Stable sort keeps start order among equal values.
            tied.sort_by(|a, b| a.1.kappa_r.total_cmp(&b.1.kappa_r));
            let count = tied.len();
            let (fit, report) = tied.swap_remove((count - 1) / 2);
            let fitted = tree.with_parameters(&fit.theta)?;
            let restarts = if restart && args.restarts > 0 {
                Some(restart_experiment(&fitted, &data.x, &data.y, args.restarts, args.scale, args.seed, &lm)?)
            } else {
                None
            };
            Ok(FormReport {
                name,
                tree: fitted,
                ssr: fit.ssr,
                tied: count,
                report,
                restarts,
            })
        })
        .collect()
}

fn print_case_study(forms: &[FormReport], out: &mut dyn Write) -> std::io::Result<()> {
    writeln!(
        out,
        "{:<11} {:>3} {:>3} {:>9} {:>11} {:>14} {:>10} {:>10} {:>9}",
        "form", "k", "r", "log10 k", "log10 k_r", "ssr", "nfev", "njev", "success"
    )?;
    for f in forms {
        let (nfev, njev, succ) = match &f.restarts {
            Some(s) => (
                format!("{:.1}", s.mean_nfev),
                format!("{:.1}", s.mean_njev),
                format!("{:.1}%", 100.0 * s.success_rate),
            ),
            None => ("-".into(), "-".into(), "-".into()),
        };
        writeln!(
            out,
            "{:<11} {:>3} {:>3} {:>9.3} {:>11.3} {:>14.6e} {:>10} {:>10} {:>9}",
            f.name,
            f.report.k,
            f.report.rank,
            f.report.kappa.log10(),
            f.report.kappa_r.log10(),
            f.ssr,
            nfev,
            njev,
            succ
        )?;
    }
    Ok(())
}

fn is_usage(e: &Error) -> bool {
    matches!(e, Error::Config(_))
}

/// Parses `args` and executes the command. Exit codes: 0 success, 1
/// runtime failure, 2 usage error.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let mut stderr = std::io::stderr();
    let mut stdout = std::io::stdout();
    let outcome = match cli.command {
        Command::Run(a) => run(&a.into(), &mut stderr).map(|r| {
            let _ = stdout.write_all(summary_table(&r.summary).as_bytes());
        }),
        Command::CaseStudy(a) => case_study(&a).and_then(|forms| {
            let _ = print_case_study(&forms, &mut stdout);
            let bad: Vec<&str> = forms.iter().filter(|f| f.report.rank != 3).map(|f| f.name).collect();
            if bad.is_empty() {
                Ok(())
            } else {
                Err(Error::Check(format!("expected numeric rank 3 for {}", bad.join(", "))))
            }
        }),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if is_usage(&e) { 2 } else { 1 })
        }
    }
}
