//! Benchmark datasets: synthetic generators and CSV ingestion.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::Rng as _;

use crate::{rng, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Provenance {
    Generated(DatasetSpec),
    Loaded(PathBuf),
}

/// Inputs `x` (n×d), target `y` (n) and column names.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub x: DMatrix<f64>,
    pub y: Vec<f64>,
    pub names: Vec<String>,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn new(name: impl Into<String>, x: DMatrix<f64>, y: Vec<f64>, names: Vec<String>, provenance: Provenance) -> Result<Self> {
        if x.nrows() == 0 {
            return Err(Error::Empty("dataset rows"));
        }
        if x.ncols() == 0 {
            return Err(Error::Empty("dataset columns"));
        }
        if y.len() != x.nrows() {
            return Err(Error::DimensionMismatch {
                what: "target length",
                expected: x.nrows(),
                actual: y.len(),
            });
        }
        if names.len() != x.ncols() {
            return Err(Error::DimensionMismatch {
                what: "column names",
                expected: x.ncols(),
                actual: names.len(),
            });
        }
        for (i, a) in names.iter().enumerate() {
            if names[..i].contains(a) {
                return Err(Error::Config(format!("duplicate column name '{a}'")));
            }
        }
        if !x.iter().chain(&y).all(|v| v.is_finite()) {
            return Err(Error::NonFinite("dataset"));
        }
        Ok(Dataset {
            name: name.into(),
            x,
            y,
            names,
            provenance,
        })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Benchmark {
    Kotanchek,
    Pagie,
    Poly10,
    Salustowicz2D,
}

impl Benchmark {
    pub const ALL: [Benchmark; 4] = [Benchmark::Kotanchek, Benchmark::Pagie, Benchmark::Poly10, Benchmark::Salustowicz2D];

    pub fn name(self) -> &'static str {
        match self {
            Benchmark::Kotanchek => "Kotanchek",
            Benchmark::Pagie => "Pagie",
            Benchmark::Poly10 => "Poly-10",
            Benchmark::Salustowicz2D => "Salustowicz2D",
        }
    }

    pub fn default_rows(self) -> usize {
        match self {
            Benchmark::Kotanchek => 100,
            Benchmark::Pagie => 676,
            Benchmark::Poly10 => 250,
            Benchmark::Salustowicz2D => 600,
        }
    }

    /// Uniform sampling box per input column. Pagie ignores it (grid).
    pub fn default_ranges(self) -> Vec<(f64, f64)> {
        match self {
            Benchmark::Kotanchek => vec![(0.3, 4.0); 2],
            Benchmark::Pagie => vec![(-5.0, 5.0); 2],
            Benchmark::Poly10 => vec![(-1.0, 1.0); 10],
            Benchmark::Salustowicz2D => vec![(0.05, 10.0), (0.05, 10.05)],
        }
    }

    fn column_names(self) -> Vec<String> {
        match self {
            Benchmark::Pagie | Benchmark::Salustowicz2D => vec!["X".into(), "Y".into()],
            Benchmark::Kotanchek => vec!["X1".into(), "X2".into()],
            Benchmark::Poly10 => (1..=10).map(|i| format!("X{i}")).collect(),
        }
    }

    /// Noise-free target function.
    pub fn target(self, x: &[f64]) -> f64 {
        match self {
            Benchmark::Kotanchek => kotanchek(x[0], x[1]),
            Benchmark::Pagie => pagie(x[0], x[1]),
            Benchmark::Poly10 => poly10(x),
            Benchmark::Salustowicz2D => salustowicz2d(x[0], x[1]),
        }
    }
}

impl std::str::FromStr for Benchmark {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase();
        match key.as_str() {
            "kotanchek" => Ok(Benchmark::Kotanchek),
            "pagie" | "pagie1" => Ok(Benchmark::Pagie),
            "poly10" => Ok(Benchmark::Poly10),
            "salustowicz2d" | "salustowicz" => Ok(Benchmark::Salustowicz2D),
            _ => Err(Error::Config(format!("unknown dataset '{s}'"))),
        }
    }
}

pub fn kotanchek(x1: f64, x2: f64) -> f64 {
    (-(x1 - 1.0).powi(2)).exp() / (1.2 + (x2 - 2.5).powi(2))
}

pub fn pagie(x1: f64, x2: f64) -> f64 {
    1.0 / (1.0 + x1.powi(-4)) + 1.0 / (1.0 + x2.powi(-4))
}

pub fn poly10(x: &[f64]) -> f64 {
    x[0] * x[1] + x[2] * x[3] + x[4] * x[5] + x[0] * x[6] * x[8] + x[2] * x[5] * x[9]
}

pub fn salustowicz2d(x: f64, y: f64) -> f64 {
    let (s, c) = x.sin_cos();
    (-x).exp() * x.powi(3) * c * s * (c * s * s - 1.0) * (y - 5.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub benchmark: Benchmark,
    pub n: usize,
    pub ranges: Vec<(f64, f64)>,
    pub seed: u64,
}

impl DatasetSpec {
    pub fn new(benchmark: Benchmark) -> Self {
        DatasetSpec {
            benchmark,
            n: benchmark.default_rows(),
            ranges: benchmark.default_ranges(),
            seed: 0,
        }
    }
}

/// Pagie grid axis: −5.0, −4.6, …, 5.0.
pub fn pagie_axis() -> Vec<f64> {
    (0..26).map(|i| -5.0 + 0.4 * i as f64).collect()
}

pub fn generate(spec: &DatasetSpec) -> Result<Dataset> {
    let b = spec.benchmark;
    let names = b.column_names();
    let d = names.len();
    let rows: Vec<Vec<f64>> = match b {
        Benchmark::Pagie => {
            if spec.n != 676 {
                return Err(Error::Config("the Pagie grid has exactly 676 rows".into()));
            }
            let axis = pagie_axis();
            axis.iter().flat_map(|&a| axis.iter().map(move |&c| vec![a, c])).collect()
        }
        _ => {
            if spec.n == 0 {
                return Err(Error::Empty("dataset rows"));
            }
            if spec.ranges.len() != d {
                return Err(Error::DimensionMismatch {
                    what: "sampling ranges",
                    expected: d,
                    actual: spec.ranges.len(),
                });
            }
            let mut r = rng::stream(spec.seed, &[b as u64]);
            (0..spec.n)
                .map(|_| spec.ranges.iter().map(|&(lo, hi)| r.random_range(lo..hi)).collect())
                .collect()
        }
    };
    let y: Vec<f64> = rows.iter().map(|row| b.target(row)).collect();
    let x = DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]);
    Dataset::new(b.name(), x, y, names, Provenance::Generated(spec.clone()))
}

/// Loads a headered numeric CSV; `target` names the output column, all
/// others become inputs in header order.
pub fn load_csv(path: impl AsRef<Path>, target: &str, expected: Option<(usize, usize)>) -> Result<Dataset> {
    let path = path.as_ref();
    let data_err = |line: u64, message: String| Error::Data {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => data_err(0, format!("{other:?}")),
        })?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| data_err(1, e.to_string()))?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    let t = header
        .iter()
        .position(|h| h == target)
        .ok_or_else(|| data_err(1, format!("target column '{target}' not in header")))?;
    let width = header.len();

    let mut xs: Vec<f64> = Vec::new();
    let mut y = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            data_err(line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != width {
            return Err(data_err(line, format!("expected {width} fields, found {}", record.len())));
        }
        for (c, cell) in record.iter().enumerate() {
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|_| data_err(line, format!("non-numeric value '{cell}' in column '{}'", header[c])))?;
            if !v.is_finite() {
                return Err(data_err(line, format!("non-finite value in column '{}'", header[c])));
            }
            if c == t {
                y.push(v);
            } else {
                xs.push(v);
            }
        }
    }
    let n = y.len();
    let d = width - 1;
    if let Some((ed, en)) = expected {
        if (ed, en) != (d, n) {
            return Err(data_err(0, format!("expected d={ed}, n={en}; found d={d}, n={n}")));
        }
    }
    let names: Vec<String> = header.iter().enumerate().filter(|&(c, _)| c != t).map(|(_, h)| h.clone()).collect();
    let x = DMatrix::from_row_slice(n, d, &xs);
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Dataset::new(name, x, y, names, Provenance::Loaded(path.to_path_buf()))
}
