//! Versioned JSON experiment configurations.

use serde::{Deserialize, Serialize};

use super::parse::{parse_complex, parse_poly};
use super::HarnessError;
use crate::expansion::{FourierSpec, QuadConfig, ZPattern};
use crate::ncalg::NCPoly;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub experiment: Experiment,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Experiment {
    Expand(ExpandConfig),
    Fit(FitConfig),
    Covcheck(CovcheckConfig),
    FubmDensity(DensityConfig),
    Confine(ConfineConfig),
    TensorProbe(TensorConfig),
    ConjugateFreeness(FreenessConfig),
    Oracle(OracleConfig),
    IndexsetsDump(IndexsetsConfig),
    Selftest(SelftestConfig),
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Expand(_) => "expand",
            Experiment::Fit(_) => "fit",
            Experiment::Covcheck(_) => "covcheck",
            Experiment::FubmDensity(_) => "fubm-density",
            Experiment::Confine(_) => "confine",
            Experiment::TensorProbe(_) => "tensor-probe",
            Experiment::ConjugateFreeness(_) => "conjugate-freeness",
            Experiment::Oracle(_) => "oracle",
            Experiment::IndexsetsDump(_) => "indexsets",
            Experiment::Selftest(_) => "selftest",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpandConfig {
    pub poly: String,
    /// `moment:<m>` or `trig:<y>,<c>;<y>,<c>;…`.
    #[serde(default = "default_f")]
    pub f: String,
    #[serde(default)]
    pub zs: Vec<ZPattern>,
    /// Matrix size for the `Z` letters; the pattern base by default.
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default = "one")]
    pub order: usize,
    #[serde(default)]
    pub quad: QuadConfig,
}

/// Sample counts per `N`: a list, or `max(min, round(base (n_ref/N)^power))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Samples {
    List(Vec<usize>),
    Rule { base: f64, n_ref: usize, power: f64, min: usize },
}

impl Samples {
    pub fn counts(&self, ns: &[usize]) -> Result<Vec<usize>, HarnessError> {
        match self {
            Samples::List(v) if v.len() == ns.len() => Ok(v.clone()),
            Samples::List(v) => Err(HarnessError::Config(format!(
                "{} sample counts for {} values of N",
                v.len(),
                ns.len()
            ))),
            Samples::Rule { base, n_ref, power, min } => Ok(ns
                .iter()
                .map(|&n| ((base * (*n_ref as f64 / n as f64).powf(*power)).round() as usize).max(*min))
                .collect()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub poly: String,
    #[serde(default = "default_f")]
    pub f: String,
    #[serde(default)]
    pub zs: Vec<ZPattern>,
    pub ns: Vec<usize>,
    pub samples: Samples,
    /// Compare against `α₀`, `α₁` from the expansion.
    #[serde(default)]
    pub reference: bool,
    #[serde(default)]
    pub quad: QuadConfig,
    #[serde(default)]
    pub svg: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovcheckConfig {
    pub pairs: Vec<(String, String)>,
    #[serde(default)]
    pub zs: Vec<ZPattern>,
    pub n: usize,
    pub t: f64,
    pub samples: usize,
    #[serde(default)]
    pub cov: crate::rmt::CovConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityConfig {
    pub t: f64,
    #[serde(default = "default_grid")]
    pub grid: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfineConfig {
    pub poly: String,
    #[serde(default)]
    pub zs: Vec<ZPattern>,
    pub ns: Vec<usize>,
    #[serde(default = "default_runs")]
    pub runs: usize,
    /// The window is `N^{-exponent}`.
    #[serde(default = "default_exponent")]
    pub exponent: f64,
    /// Number of moments for the reference spectrum.
    #[serde(default = "default_moments")]
    pub moments: usize,
    /// Size of the large-N proxy run (0 disables it).
    #[serde(default)]
    pub proxy_n: usize,
    #[serde(default = "default_max_terms")]
    pub max_terms: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorConfig {
    /// Size for the tensor-trace check.
    #[serde(default = "default_lemma_m")]
    pub lemma_m: usize,
    #[serde(default = "default_lemma_samples")]
    pub lemma_samples: usize,
    /// `U_i` act on the first factor, `Z_j` on the second.
    pub poly: String,
    #[serde(default)]
    pub zs: Vec<ZPattern>,
    /// `(N, M)` pairs.
    pub grid: Vec<(usize, usize)>,
    pub samples: usize,
    /// Largest `N·M` allowed.
    #[serde(default = "default_max_dim")]
    pub max_dim: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FreenessConfig {
    /// Self-adjoint polynomial in the `U` letters.
    pub poly: String,
    /// The deterministic matrices `A_i`.
    pub matrices: Vec<ZPattern>,
    /// Conjugation parameters `y_i`, one per matrix.
    pub ys: Vec<f64>,
    /// Which `a_i` appear in the centered product, in order.
    pub indices: Vec<usize>,
    pub ns: Vec<usize>,
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    /// A single word.
    pub word: String,
    #[serde(default)]
    pub zs: Vec<ZPattern>,
    pub ns: Vec<usize>,
    #[serde(default = "one")]
    pub order: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndexsetsConfig {
    pub n: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelftestConfig {}

fn default_f() -> String {
    "moment:1".into()
}
fn one() -> usize {
    1
}
fn default_grid() -> usize {
    4096
}
fn default_runs() -> usize {
    20
}
fn default_exponent() -> f64 {
    0.4
}
fn default_moments() -> usize {
    64
}
fn default_max_terms() -> usize {
    200_000
}
fn default_lemma_m() -> usize {
    8
}
fn default_lemma_samples() -> usize {
    20_000
}
fn default_max_dim() -> usize {
    1024
}

/// `moment:<m>` or `trig:<y>,<c>;…`.
pub fn parse_fspec(text: &str) -> Result<FourierSpec, HarnessError> {
    let bad = || HarnessError::Config(format!("bad function spec '{text}'"));
    let (kind, rest) = text.split_once(':').ok_or_else(bad)?;
    match kind.trim() {
        "moment" => Ok(FourierSpec::Polynomial(rest.trim().parse().map_err(|_| bad())?)),
        "trig" => {
            let mut atoms = Vec::new();
            for part in rest.split(';').filter(|s| !s.trim().is_empty()) {
                let part = part.trim();
                let part = part.strip_prefix('(').and_then(|p| p.strip_suffix(')')).unwrap_or(part);
                let (y, c) = part.split_once(',').ok_or_else(bad)?;
                let y: f64 = y.trim().parse().map_err(|_| bad())?;
                atoms.push((y, parse_complex(c.trim())?));
            }
            if atoms.is_empty() {
                return Err(bad());
            }
            Ok(FourierSpec::Atomic(atoms))
        }
        _ => Err(bad()),
    }
}

fn check_ns(ns: &[usize], zs: &[ZPattern], what: &str) -> Result<(), HarnessError> {
    if ns.is_empty() {
        return Err(HarnessError::Config(format!("{what}: empty N list")));
    }
    for &n in ns {
        if n == 0 {
            return Err(HarnessError::Config(format!("{what}: N must be positive")));
        }
        if let Some(z) = zs.iter().find(|z| !z.divides(n)) {
            return Err(HarnessError::Config(format!(
                "{what}: N = {n} is not a multiple of the pattern length {}",
                z.values.len()
            )));
        }
    }
    Ok(())
}

fn poly(text: &str) -> Result<NCPoly, HarnessError> {
    Ok(parse_poly(text)?)
}

impl ExperimentConfig {
    pub fn new(seed: u64, experiment: Experiment) -> Self {
        ExperimentConfig { schema_version: SCHEMA_VERSION, seed, experiment }
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configs always serialize")
    }

    /// Schema checks that do not need to run anything.
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(HarnessError::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        match &self.experiment {
            Experiment::Expand(c) => {
                poly(&c.poly)?;
                parse_fspec(&c.f)?;
                if c.order > 1 {
                    return Err(HarnessError::Config("order must be 0 or 1".into()));
                }
                if let Some(n) = c.n {
                    check_ns(&[n], &c.zs, "expand")?;
                }
            }
            Experiment::Fit(c) => {
                poly(&c.poly)?;
                parse_fspec(&c.f)?;
                if c.ns.len() < 4 {
                    return Err(HarnessError::Config("fit: at least four values of N".into()));
                }
                check_ns(&c.ns, &c.zs, "fit")?;
                c.samples.counts(&c.ns)?;
            }
            Experiment::Covcheck(c) => {
                for (p, q) in &c.pairs {
                    poly(p)?;
                    poly(q)?;
                }
                check_ns(&[c.n], &c.zs, "covcheck")?;
                if !(c.t > 0.0) {
                    return Err(HarnessError::Config("covcheck: T must be positive".into()));
                }
            }
            Experiment::FubmDensity(c) => {
                if !(c.t > 4.0) || c.grid < 8 {
                    return Err(HarnessError::Config("fubm-density: need t > 4 and grid >= 8".into()));
                }
            }
            Experiment::Confine(c) => {
                let p = poly(&c.poly)?;
                if !p.is_self_adjoint() {
                    return Err(HarnessError::Config("confine: the polynomial must be self-adjoint".into()));
                }
                check_ns(&c.ns, &c.zs, "confine")?;
                if !(c.exponent > 0.0 && c.exponent < 0.5) {
                    return Err(HarnessError::Config("confine: exponent must lie in (0, 1/2)".into()));
                }
            }
            Experiment::TensorProbe(c) => {
                poly(&c.poly)?;
                let ms: Vec<usize> = c.grid.iter().map(|g| g.1).collect();
                check_ns(&ms, &c.zs, "tensor-probe")?;
                if let Some(g) = c.grid.iter().find(|g| g.0 * g.1 > c.max_dim) {
                    return Err(HarnessError::Config(format!(
                        "tensor-probe: N·M = {} exceeds max_dim = {}",
                        g.0 * g.1,
                        c.max_dim
                    )));
                }
            }
            Experiment::ConjugateFreeness(c) => {
                let p = poly(&c.poly)?;
                if !p.is_self_adjoint() || p.alphabet().1 > 0 {
                    return Err(HarnessError::Config(
                        "conjugate-freeness: the polynomial must be self-adjoint in the U letters only".into(),
                    ));
                }
                if c.ys.len() != c.matrices.len() {
                    return Err(HarnessError::Config("conjugate-freeness: one y per matrix".into()));
                }
                if c.indices.iter().any(|&i| i == 0 || i > c.matrices.len()) {
                    return Err(HarnessError::Config("conjugate-freeness: index out of range".into()));
                }
                check_ns(&c.ns, &c.matrices, "conjugate-freeness")?;
            }
            Experiment::Oracle(c) => {
                let p = poly(&c.word)?;
                if p.len() != 1 {
                    return Err(HarnessError::Config("oracle: expected a single word".into()));
                }
                check_ns(&c.ns, &c.zs, "oracle")?;
            }
            Experiment::IndexsetsDump(c) => {
                if c.n > 3 {
                    return Err(HarnessError::Config("indexsets: n <= 3".into()));
                }
            }
            Experiment::Selftest(_) => {}
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip() {
        let cfg = ExperimentConfig::new(
            7,
            Experiment::Fit(FitConfig {
                poly: "U1 + U1*".into(),
                f: "moment:4".into(),
                zs: vec![],
                ns: vec![4, 8, 16, 32],
                samples: Samples::Rule { base: 1e4, n_ref: 4, power: 2.0, min: 10 },
                reference: true,
                quad: QuadConfig::default(),
                svg: false,
            }),
        );
        let back = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn rejects_bad_configs() {
        let text = r#"{"schema_version": 2, "seed": 1, "experiment": {"kind": "indexsets-dump", "n": 1}}"#;
        assert!(ExperimentConfig::from_json(text).is_err());
        let text = r#"{"schema_version": 1, "seed": 1, "experiment": {"kind": "indexsets-dump", "n": 1, "x": 0}}"#;
        assert!(ExperimentConfig::from_json(text).is_err());
        let text = r#"{"schema_version": 1, "seed": 1, "experiment": {"kind": "confine", "poly": "U1", "ns": [8]}}"#;
        assert!(ExperimentConfig::from_json(text).is_err());
        let text = r#"{"schema_version": 1, "seed": 1, "experiment": {"kind": "indexsets-dump", "n": 2}}"#;
        assert!(ExperimentConfig::from_json(text).is_ok());
    }

    #[test]
    fn function_specs() {
        assert_eq!(parse_fspec("moment:4").unwrap(), FourierSpec::Polynomial(4));
        let f = parse_fspec("trig:1.5,0.5;-1.5,0.5").unwrap();
        assert!(f.is_self_adjoint());
        assert_eq!(parse_fspec("trig:(1.5,0.5);(-1.5,0.5)").unwrap(), f);
        assert!(parse_fspec("cos:1").is_err());
        assert!(parse_fspec("trig:").is_err());
    }

    #[test]
    fn sample_rules() {
        let s = Samples::Rule { base: 1e5, n_ref: 8, power: 3.0, min: 50 };
        assert_eq!(s.counts(&[8, 16, 256]).unwrap(), vec![100_000, 12_500, 50]);
        assert!(Samples::List(vec![1]).counts(&[1, 2]).is_err());
    }
}
