//! Expression parser, experiment configs and runners, CSV and SVG output.

pub mod config;
pub mod experiments;
pub mod parse;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub use config::{Experiment, ExperimentConfig, SCHEMA_VERSION};
pub use parse::{parse_complex, parse_poly, ParseError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("parse error: {0}")]
    Parse(#[from] ParseError),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Expansion(#[from] crate::expansion::ExpansionError),
    #[error(transparent)]
    Rmt(#[from] crate::rmt::RmtError),
    #[error(transparent)]
    Fubm(#[from] crate::fubm::FubmError),
    #[error(transparent)]
    Trace(#[from] crate::freetrace::TraceError),
    #[error(transparent)]
    Weingarten(#[from] crate::weingarten::WgError),
    #[error(transparent)]
    Index(#[from] crate::indexsets::IndexError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Int(i64),
    Float(f64),
    Text(String),
    Bool(bool),
}

impl From<usize> for Value {
    fn from(x: usize) -> Self {
        Value::Int(x as i64)
    }
}
impl From<i64> for Value {
    fn from(x: i64) -> Self {
        Value::Int(x)
    }
}
impl From<f64> for Value {
    fn from(x: f64) -> Self {
        Value::Float(x)
    }
}
impl From<bool> for Value {
    fn from(x: bool) -> Self {
        Value::Bool(x)
    }
}
impl From<String> for Value {
    fn from(x: String) -> Self {
        Value::Text(x)
    }
}
impl From<&str> for Value {
    fn from(x: &str) -> Self {
        Value::Text(x.to_string())
    }
}

impl Value {
    /// Floats use Rust's shortest round-trip formatting.
    pub fn render(&self) -> String {
        match self {
            Value::Int(x) => x.to_string(),
            Value::Float(x) => format!("{x:?}"),
            Value::Text(s) => s.clone(),
            Value::Bool(b) => b.to_string(),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(x) => Some(*x as f64),
            Value::Float(x) => Some(*x),
            _ => None,
        }
    }
}

/// A named table with a header row.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Table { name: name.into(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<&Value>> {
        let j = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| &r[j]).collect())
    }

    /// The value in column `name` of row `row`.
    pub fn get(&self, row: usize, name: &str) -> Option<&Value> {
        let j = self.header.iter().position(|h| h == name)?;
        self.rows.get(row).map(|r| &r[j])
    }

    pub fn to_csv(&self) -> Result<Vec<u8>, HarnessError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r.iter().map(Value::render))?;
        }
        w.into_inner().map_err(|e| HarnessError::Io(e.into_error()))
    }
}

/// Output of one experiment.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Report {
    pub kind: String,
    pub tables: Vec<Table>,
    /// `(name, svg source)`.
    pub plots: Vec<(String, String)>,
}

impl Report {
    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    /// `(file name, bytes)` of every CSV file.
    pub fn csv_files(&self) -> Result<Vec<(String, Vec<u8>)>, HarnessError> {
        self.tables
            .iter()
            .map(|t| Ok((format!("{}-{}.csv", self.kind, t.name), t.to_csv()?)))
            .collect()
    }

    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
        std::fs::create_dir_all(dir)?;
        let mut out = Vec::new();
        for (name, bytes) in self.csv_files()? {
            let p = dir.join(name);
            std::fs::write(&p, bytes)?;
            out.push(p);
        }
        for (name, svg) in &self.plots {
            let p = dir.join(format!("{}-{}.svg", self.kind, name));
            std::fs::write(&p, svg)?;
            out.push(p);
        }
        Ok(out)
    }
}

/// Run a validated configuration.
pub fn run(cfg: &ExperimentConfig) -> Result<Report, HarnessError> {
    cfg.validate()?;
    let seed = cfg.seed;
    let tables_plots = match &cfg.experiment {
        Experiment::Expand(c) => experiments::run_expand(c)?,
        Experiment::Fit(c) => experiments::run_expansion_fit(c, seed)?,
        Experiment::Covcheck(c) => experiments::run_covcheck(c, seed)?,
        Experiment::FubmDensity(c) => experiments::run_fubm_density(c)?,
        Experiment::Confine(c) => experiments::run_spectrum_confinement(c, seed)?,
        Experiment::TensorProbe(c) => experiments::run_tensor_probe(c, seed)?,
        Experiment::ConjugateFreeness(c) => experiments::run_conjugation_freeness(c, seed)?,
        Experiment::Oracle(c) => experiments::run_oracle(c)?,
        Experiment::IndexsetsDump(c) => experiments::run_indexsets(c)?,
        Experiment::Selftest(_) => experiments::run_selftest(seed)?,
    };
    Ok(Report { kind: cfg.experiment.name().to_string(), tables: tables_plots.0, plots: tables_plots.1 })
}

/// Points with symmetric error bars and an optional line `y = a + b x`.
pub fn svg_errorbars(title: &str, xlabel: &str, pts: &[(f64, f64, f64)], line: Option<(f64, f64)>) -> String {
    let (w, h, m) = (480.0, 320.0, 48.0);
    let fin: Vec<&(f64, f64, f64)> = pts.iter().filter(|p| p.0.is_finite() && p.1.is_finite()).collect();
    let xmax = fin.iter().map(|p| p.0).fold(0.0f64, f64::max).max(1e-300) * 1.05;
    let xmin = fin.iter().map(|p| p.0).fold(0.0f64, f64::min);
    let ylo = fin.iter().map(|p| p.1 - p.2.abs()).fold(f64::INFINITY, f64::min);
    let yhi = fin.iter().map(|p| p.1 + p.2.abs()).fold(f64::NEG_INFINITY, f64::max);
    let (ylo, yhi) = if ylo.is_finite() && yhi > ylo { (ylo, yhi) } else { (-1.0, 1.0) };
    let pad = 0.05 * (yhi - ylo);
    let (ylo, yhi) = (ylo - pad, yhi + pad);
    let sx = |x: f64| m + (x - xmin) / (xmax - xmin) * (w - 2.0 * m);
    let sy = |y: f64| h - m - (y - ylo) / (yhi - ylo) * (h - 2.0 * m);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle">{}</text>"#, w / 2.0, title);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, w / 2.0, h - 10.0, xlabel);
    let _ = writeln!(
        s,
        r#"<rect x="{m}" y="{m}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        w - 2.0 * m,
        h - 2.0 * m
    );
    let _ = writeln!(s, r#"<text x="4" y="{}">{:.4}</text><text x="4" y="{}">{:.4}</text>"#, m, yhi, h - m, ylo);
    if let Some((a, b)) = line {
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="steelblue"/>"#,
            sx(xmin),
            sy(a + b * xmin),
            sx(xmax),
            sy(a + b * xmax)
        );
    }
    for p in fin {
        let (x, y, e) = (sx(p.0), sy(p.1), p.2.abs());
        let _ = writeln!(s, r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#, sy(p.1 - e), sy(p.1 + e));
        let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="firebrick"/>"#);
    }
    s.push_str("</svg>\n");
    s
}
