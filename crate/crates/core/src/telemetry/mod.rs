//! Per-candidate conditioning records, per-generation percentile summaries,
//! final-solution records, and their CSV/SVG output.

mod plot;

use std::fs::File;
use std::io::Write;
use std::path::Path;

use crate::conditioning::JacobianReport;
use crate::{Error, Result};

pub use plot::render_percentile_plot;

/// Percentile levels reported for every metric.
pub const PERCENTILES: [u32; 7] = [5, 10, 25, 50, 75, 90, 95];

pub const CANDIDATES_HEADER: [&str; 9] = [
    "generation",
    "index",
    "k",
    "min_rank",
    "redundant",
    "max_kappa",
    "max_kappa_r",
    "fitness",
    "tree_size",
];

pub const GENERATIONS_HEADER: [&str; 10] = [
    "generation", "metric", "p5", "p10", "p25", "p50", "p75", "p90", "p95", "mean",
];

pub const FINALS_HEADER: [&str; 10] = [
    "dataset",
    "max_size",
    "function_set",
    "rep",
    "k",
    "redundant",
    "log10_kappa",
    "log10_kappa_r",
    "fitness",
    "expression",
];

/// Worst conditioning seen while locally optimizing one candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateRecord {
    pub generation: usize,
    pub index: usize,
    pub k: usize,
    pub min_rank: usize,
    pub redundant: usize,
    /// NaN when no Jacobian was analyzed.
    pub max_kappa: f64,
    pub max_kappa_r: f64,
    pub fitness: f64,
    pub tree_size: usize,
}

/// Identifying fields of a candidate, supplied by the caller.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidateMeta {
    pub generation: usize,
    pub index: usize,
    pub k: usize,
    pub fitness: f64,
    pub tree_size: usize,
}

/// Larger of two kappas; NaN loses to anything, `+∞` wins.
fn max_defined(a: f64, b: f64) -> f64 {
    if a.is_nan() {
        b
    } else if b.is_nan() {
        a
    } else {
        a.max(b)
    }
}

/// Folds a candidate's reports into one record: minimum rank and maximum
/// condition numbers.
///
/// With no reports the rank cannot be measured; the record then has
/// `min_rank = k` (no detected redundancy) and NaN kappas. For a
/// zero-parameter tree this is `k = min_rank = 0`.
pub fn aggregate_candidate(reports: &[JacobianReport], meta: CandidateMeta) -> CandidateRecord {
    let k = meta.k;
    let min_rank = reports.iter().map(|r| r.rank).min().unwrap_or(k).min(k);
    let max_kappa = reports.iter().map(|r| r.kappa).fold(f64::NAN, max_defined);
    let max_kappa_r = reports.iter().map(|r| r.kappa_r).fold(f64::NAN, max_defined);
    CandidateRecord {
        generation: meta.generation,
        index: meta.index,
        k,
        min_rank,
        redundant: k - min_rank,
        max_kappa,
        max_kappa_r,
        fitness: meta.fitness,
        tree_size: meta.tree_size,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Metric {
    K,
    Redundant,
    Log10Kappa,
    Log10KappaR,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::K, Metric::Redundant, Metric::Log10Kappa, Metric::Log10KappaR];

    pub fn name(self) -> &'static str {
        match self {
            Metric::K => "k",
            Metric::Redundant => "redundant",
            Metric::Log10Kappa => "log10_kappa",
            Metric::Log10KappaR => "log10_kappa_r",
        }
    }

    /// Value of this metric for one record; NaN if undefined.
    pub fn value(self, r: &CandidateRecord) -> f64 {
        match self {
            Metric::K => r.k as f64,
            Metric::Redundant => r.redundant as f64,
            Metric::Log10Kappa => r.max_kappa.log10(),
            Metric::Log10KappaR => r.max_kappa_r.log10(),
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown metric '{s}'")))
    }
}

/// Percentiles and mean of one metric.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    /// Values at [`PERCENTILES`].
    pub percentiles: [f64; 7],
    pub mean: f64,
}

impl Summary {
    /// Nearest-rank summary of the defined (non-NaN) entries of `values`.
    /// `+∞` sorts last. All-NaN input gives an all-NaN summary.
    pub fn of(values: &[f64]) -> Summary {
        let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
        if v.is_empty() {
            return Summary {
                percentiles: [f64::NAN; 7],
                mean: f64::NAN,
            };
        }
        v.sort_by(f64::total_cmp);
        let mut percentiles = [0.0; 7];
        for (slot, &p) in percentiles.iter_mut().zip(&PERCENTILES) {
            *slot = nearest_rank(&v, p);
        }
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        Summary { percentiles, mean }
    }

    pub fn median(&self) -> f64 {
        self.percentiles[3]
    }
}

/// Nearest-rank percentile of sorted, non-empty `sorted`.
pub fn nearest_rank(sorted: &[f64], p: u32) -> f64 {
    let n = sorted.len();
    let rank = (p as usize * n).div_ceil(100).max(1);
    sorted[rank - 1]
}

/// Per-generation distribution of the four tracked metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationStats {
    pub generation: usize,
    pub count: usize,
    pub k: Summary,
    pub redundant: Summary,
    pub log10_kappa: Summary,
    pub log10_kappa_r: Summary,
}

impl GenerationStats {
    pub fn metric(&self, m: Metric) -> &Summary {
        match m {
            Metric::K => &self.k,
            Metric::Redundant => &self.redundant,
            Metric::Log10Kappa => &self.log10_kappa,
            Metric::Log10KappaR => &self.log10_kappa_r,
        }
    }
}

/// Summarizes one generation's records. Undefined kappas are left out of
/// the kappa metrics.
pub fn generation_percentiles(records: &[CandidateRecord]) -> Result<GenerationStats> {
    let first = records.first().ok_or(Error::Empty("generation records"))?;
    let summary = |m: Metric| Summary::of(&records.iter().map(|r| m.value(r)).collect::<Vec<_>>());
    Ok(GenerationStats {
        generation: first.generation,
        count: records.len(),
        k: summary(Metric::K),
        redundant: summary(Metric::Redundant),
        log10_kappa: summary(Metric::Log10Kappa),
        log10_kappa_r: summary(Metric::Log10KappaR),
    })
}

/// Best solution of one run, with conditioning measured before linear
/// scaling.
#[derive(Debug, Clone, PartialEq)]
pub struct FinalSolutionRecord {
    pub dataset: String,
    pub max_size: usize,
    pub function_set: String,
    pub rep: usize,
    pub k: usize,
    pub redundant: usize,
    pub log10_kappa: f64,
    pub log10_kappa_r: f64,
    pub fitness: f64,
    pub expression: String,
}

/// Formats a float so it parses back to the same value.
pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v:.16e}")
    }
}

/// Inverse of [`format_float`].
pub fn parse_float(s: &str) -> Option<f64> {
    match s {
        "nan" => Some(f64::NAN),
        "inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        _ => s.parse().ok(),
    }
}

fn write_rows<I>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let io_err = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        other => Error::Data {
            path: path.to_path_buf(),
            line: 0,
            message: format!("{other:?}"),
        },
    };
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(file);
    w.write_record(header).map_err(io_err)?;
    for row in rows {
        w.write_record(&row).map_err(io_err)?;
    }
    let mut inner = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    inner.flush().map_err(|e| Error::io(path, e))
}

pub fn write_candidates_csv(records: &[CandidateRecord], path: impl AsRef<Path>) -> Result<()> {
    write_rows(
        path.as_ref(),
        &CANDIDATES_HEADER,
        records.iter().map(|r| {
            vec![
                r.generation.to_string(),
                r.index.to_string(),
                r.k.to_string(),
                r.min_rank.to_string(),
                r.redundant.to_string(),
                format_float(r.max_kappa),
                format_float(r.max_kappa_r),
                format_float(r.fitness),
                r.tree_size.to_string(),
            ]
        }),
    )
}

pub fn write_generations_csv(stats: &[GenerationStats], path: impl AsRef<Path>) -> Result<()> {
    let rows = stats.iter().flat_map(|s| {
        Metric::ALL.into_iter().map(move |m| {
            let sum = s.metric(m);
            let mut row = vec![s.generation.to_string(), m.name().to_string()];
            row.extend(sum.percentiles.iter().map(|&v| format_float(v)));
            row.push(format_float(sum.mean));
            row
        })
    });
    write_rows(path.as_ref(), &GENERATIONS_HEADER, rows)
}

fn final_row(r: &FinalSolutionRecord) -> Vec<String> {
    vec![
        r.dataset.clone(),
        r.max_size.to_string(),
        r.function_set.clone(),
        r.rep.to_string(),
        r.k.to_string(),
        r.redundant.to_string(),
        format_float(r.log10_kappa),
        format_float(r.log10_kappa_r),
        format_float(r.fitness),
        r.expression.clone(),
    ]
}

pub fn write_finals_csv(finals: &[FinalSolutionRecord], path: impl AsRef<Path>) -> Result<()> {
    write_rows(path.as_ref(), &FINALS_HEADER, finals.iter().map(final_row))
}

fn read_rows(path: &Path, header: &[&str]) -> Result<Vec<(u64, csv::StringRecord)>> {
    let mut rd = csv::Reader::from_path(path).map_err(|e| Error::Data {
        path: path.to_path_buf(),
        line: 0,
        message: e.to_string(),
    })?;
    let got = rd.headers().map_err(|e| Error::Data {
        path: path.to_path_buf(),
        line: 1,
        message: e.to_string(),
    })?;
    if got.iter().ne(header.iter().copied()) {
        return Err(Error::Data {
            path: path.to_path_buf(),
            line: 1,
            message: format!("unexpected header {:?}", got.iter().collect::<Vec<_>>()),
        });
    }
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(|e| Error::Data {
            path: path.to_path_buf(),
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        out.push((line, rec));
    }
    Ok(out)
}

fn field<T, F>(path: &Path, line: u64, rec: &csv::StringRecord, i: usize, parse: F) -> Result<T>
where
    F: Fn(&str) -> Option<T>,
{
    rec.get(i).and_then(parse).ok_or_else(|| Error::Data {
        path: path.to_path_buf(),
        line,
        message: format!("bad value in column {}", i + 1),
    })
}

pub fn read_candidates_csv(path: impl AsRef<Path>) -> Result<Vec<CandidateRecord>> {
    let path = path.as_ref();
    let int = |s: &str| s.parse::<usize>().ok();
    read_rows(path, &CANDIDATES_HEADER)?
        .into_iter()
        .map(|(line, r)| {
            Ok(CandidateRecord {
                generation: field(path, line, &r, 0, int)?,
                index: field(path, line, &r, 1, int)?,
                k: field(path, line, &r, 2, int)?,
                min_rank: field(path, line, &r, 3, int)?,
                redundant: field(path, line, &r, 4, int)?,
                max_kappa: field(path, line, &r, 5, parse_float)?,
                max_kappa_r: field(path, line, &r, 6, parse_float)?,
                fitness: field(path, line, &r, 7, parse_float)?,
                tree_size: field(path, line, &r, 8, int)?,
            })
        })
        .collect()
}

pub fn read_finals_csv(path: impl AsRef<Path>) -> Result<Vec<FinalSolutionRecord>> {
    let path = path.as_ref();
    let int = |s: &str| s.parse::<usize>().ok();
    let text = |s: &str| Some(s.to_string());
    read_rows(path, &FINALS_HEADER)?
        .into_iter()
        .map(|(line, r)| {
            Ok(FinalSolutionRecord {
                dataset: field(path, line, &r, 0, text)?,
                max_size: field(path, line, &r, 1, int)?,
                function_set: field(path, line, &r, 2, text)?,
                rep: field(path, line, &r, 3, int)?,
                k: field(path, line, &r, 4, int)?,
                redundant: field(path, line, &r, 5, int)?,
                log10_kappa: field(path, line, &r, 6, parse_float)?,
                log10_kappa_r: field(path, line, &r, 7, parse_float)?,
                fitness: field(path, line, &r, 8, parse_float)?,
                expression: field(path, line, &r, 9, text)?,
            })
        })
        .collect()
}

/// Ordinary median of the defined entries (mean of the middle pair for
/// even counts). NaN if nothing is defined.
pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        let (a, b) = (v[n / 2 - 1], v[n / 2]);
        if a == b {
            a
        } else {
            0.5 * (a + b)
        }
    }
}

/// Collects candidate records per generation during a run.
pub trait TelemetrySink {
    fn record_generation(&mut self, records: &[CandidateRecord]);
}

/// Keeps every record and the per-generation summaries in memory.
#[derive(Debug, Default, Clone)]
pub struct RunLog {
    pub candidates: Vec<CandidateRecord>,
    pub generations: Vec<GenerationStats>,
}

impl TelemetrySink for RunLog {
    fn record_generation(&mut self, records: &[CandidateRecord]) {
        self.candidates.extend_from_slice(records);
        if let Ok(s) = generation_percentiles(records) {
            self.generations.push(s);
        }
    }
}

/// Discards everything.
pub struct NullSink;

impl TelemetrySink for NullSink {
    fn record_generation(&mut self, _: &[CandidateRecord]) {}
}
