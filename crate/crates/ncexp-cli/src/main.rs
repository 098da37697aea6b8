use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use ncexp::expansion::{QuadConfig, ZPattern};
use ncexp::harness::config::*;
use ncexp::harness::{parse_complex, run, Report};
use ncexp::rmt::CovConfig;

#[derive(Parser)]
#[command(name = "ncexp", version, about = "Large-N expansions of Haar unitary matrix models")]
struct Cli {
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Run a saved JSON configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Write CSV/SVG files here instead of printing CSV to stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Print the configuration as JSON and exit.
    #[arg(long, global = true)]
    dump_config: bool,
    #[command(subcommand)]
    cmd: Option<Cmd>,
}

#[derive(Args, Clone)]
struct Zs {
    /// Diagonal pattern of a Z letter, e.g. "1,-1"; repeat for Z2, Z3, ...
    #[arg(long = "z")]
    zs: Vec<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Coefficients alpha0 and alpha1 of E[tr f(P)].
    Expand {
        #[arg(long)]
        poly: String,
        #[arg(long, default_value = "moment:1")]
        f: String,
        #[command(flatten)]
        zs: Zs,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value_t = 1)]
        order: usize,
        /// Quadrature nodes per time axis.
        #[arg(long, default_value_t = 32)]
        nodes: usize,
    },
    /// Monte Carlo fit of a + b N^-2.
    Fit {
        #[arg(long)]
        poly: String,
        #[arg(long, default_value = "moment:1")]
        f: String,
        #[command(flatten)]
        zs: Zs,
        #[arg(long, value_delimiter = ',', required = true)]
        ns: Vec<usize>,
        /// Explicit sample counts, one per N.
        #[arg(long, value_delimiter = ',')]
        samples: Vec<usize>,
        /// Samples at the smallest N when no list is given.
        #[arg(long, default_value_t = 10_000.0)]
        sample_base: f64,
        #[arg(long, default_value_t = 3.0)]
        sample_power: f64,
        #[arg(long, default_value_t = 50)]
        sample_min: usize,
        /// Compare with the expansion coefficients.
        #[arg(long)]
        reference: bool,
        #[arg(long)]
        svg: bool,
    },
    /// Covariance formula along unitary Brownian motion.
    Covcheck {
        /// "P|Q"; repeatable.
        #[arg(long = "pair", required = true)]
        pairs: Vec<String>,
        #[command(flatten)]
        zs: Zs,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 20)]
        grid: usize,
        #[arg(long, default_value_t = 1e-3)]
        dt_max: f64,
        #[arg(long, default_value_t = 1000)]
        rhs_samples: usize,
    },
    /// Density of the free unitary Brownian motion.
    FubmDensity {
        #[arg(long)]
        t: f64,
        #[arg(long, default_value_t = 4096)]
        grid: usize,
    },
    /// Eigenvalues outside the fattened limiting spectrum.
    Confine {
        #[arg(long)]
        poly: String,
        #[command(flatten)]
        zs: Zs,
        #[arg(long, value_delimiter = ',', required = true)]
        ns: Vec<usize>,
        #[arg(long, default_value_t = 20)]
        runs: usize,
        #[arg(long, default_value_t = 0.4)]
        exponent: f64,
        #[arg(long, default_value_t = 64)]
        moments: usize,
        #[arg(long, default_value_t = 0)]
        proxy_n: usize,
    },
    /// Norms with tensor coefficients and the tensor-trace identity.
    TensorProbe {
        #[arg(long)]
        poly: String,
        #[command(flatten)]
        zs: Zs,
        /// "N:M" pairs.
        #[arg(long, value_delimiter = ',', required = true)]
        grid: Vec<String>,
        #[arg(long, default_value_t = 100)]
        samples: usize,
        #[arg(long, default_value_t = 8)]
        lemma_m: usize,
        #[arg(long, default_value_t = 20_000)]
        lemma_samples: usize,
        #[arg(long, default_value_t = 1024)]
        max_dim: usize,
    },
    /// Mixed moments of matrices conjugated by exp(i y P).
    ConjugateFreeness {
        #[arg(long)]
        poly: String,
        /// Diagonal pattern of each A_i; repeatable.
        #[arg(long = "matrix", required = true)]
        matrices: Vec<String>,
        #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
        ys: Vec<f64>,
        #[arg(long, value_delimiter = ',', required = true)]
        indices: Vec<usize>,
        #[arg(long, value_delimiter = ',', required = true)]
        ns: Vec<usize>,
        #[arg(long, default_value_t = 200)]
        samples: usize,
    },
    /// Exact expectation of a word and its 1/N^2 coefficients.
    Oracle {
        #[arg(long)]
        word: String,
        #[command(flatten)]
        zs: Zs,
        #[arg(long = "N", alias = "n", value_delimiter = ',', required = true)]
        ns: Vec<usize>,
        #[arg(long, default_value_t = 1)]
        order: usize,
    },
    /// Index set universes.
    Indexsets {
        #[command(subcommand)]
        cmd: IndexCmd,
    },
    /// Quick consistency checks.
    Selftest,
}

#[derive(Subcommand)]
enum IndexCmd {
    Dump {
        #[arg(long, alias = "order")]
        n: usize,
    },
}

fn pattern(text: &str) -> Result<ZPattern> {
    let values = text
        .split(',')
        .map(|v| parse_complex(v.trim()).with_context(|| format!("in pattern '{text}'")))
        .collect::<Result<Vec<_>>>()?;
    Ok(ZPattern { values })
}

fn patterns(zs: &Zs) -> Result<Vec<ZPattern>> {
    zs.zs.iter().map(|z| pattern(z)).collect()
}

fn experiment(cmd: Cmd) -> Result<Experiment> {
    Ok(match cmd {
        Cmd::Expand { poly, f, zs, n, order, nodes } => Experiment::Expand(ExpandConfig {
            poly,
            f,
            zs: patterns(&zs)?,
            n,
            order,
            quad: QuadConfig { nodes, ..QuadConfig::default() },
        }),
        Cmd::Fit { poly, f, zs, ns, samples, sample_base, sample_power, sample_min, reference, svg } => {
            let samples = if samples.is_empty() {
                let n_ref = ns.iter().copied().min().unwrap_or(1);
                Samples::Rule { base: sample_base, n_ref, power: sample_power, min: sample_min }
            } else {
                Samples::List(samples)
            };
            Experiment::Fit(FitConfig {
                poly,
                f,
                zs: patterns(&zs)?,
                ns,
                samples,
                reference,
                quad: QuadConfig::default(),
                svg,
            })
        }
        Cmd::Covcheck { pairs, zs, n, t, samples, grid, dt_max, rhs_samples } => {
            let pairs = pairs
                .iter()
                .map(|s| match s.split_once('|') {
                    Some((p, q)) => Ok((p.trim().to_string(), q.trim().to_string())),
                    None => bail!("--pair expects \"P|Q\", got '{s}'"),
                })
                .collect::<Result<_>>()?;
            Experiment::Covcheck(CovcheckConfig {
                pairs,
                zs: patterns(&zs)?,
                n,
                t,
                samples,
                cov: CovConfig { grid, dt_max, rhs_samples },
            })
        }
        Cmd::FubmDensity { t, grid } => Experiment::FubmDensity(DensityConfig { t, grid }),
        Cmd::Confine { poly, zs, ns, runs, exponent, moments, proxy_n } => Experiment::Confine(ConfineConfig {
            poly,
            zs: patterns(&zs)?,
            ns,
            runs,
            exponent,
            moments,
            proxy_n,
            max_terms: 200_000,
        }),
        Cmd::TensorProbe { poly, zs, grid, samples, lemma_m, lemma_samples, max_dim } => {
            let grid = grid
                .iter()
                .map(|s| {
                    let (n, m) = s.split_once(':').with_context(|| format!("--grid expects N:M, got '{s}'"))?;
                    Ok((n.trim().parse()?, m.trim().parse()?))
                })
                .collect::<Result<_>>()?;
            Experiment::TensorProbe(TensorConfig {
                lemma_m,
                lemma_samples,
                poly,
                zs: patterns(&zs)?,
                grid,
                samples,
                max_dim,
            })
        }
        Cmd::ConjugateFreeness { poly, matrices, ys, indices, ns, samples } => {
            Experiment::ConjugateFreeness(FreenessConfig {
                poly,
                matrices: matrices.iter().map(|m| pattern(m)).collect::<Result<_>>()?,
                ys,
                indices,
                ns,
                samples,
            })
        }
        Cmd::Oracle { word, zs, ns, order } => {
            Experiment::Oracle(OracleConfig { word, zs: patterns(&zs)?, ns, order })
        }
        Cmd::Indexsets { cmd: IndexCmd::Dump { n } } => Experiment::IndexsetsDump(IndexsetsConfig { n }),
        Cmd::Selftest => Experiment::Selftest(SelftestConfig {}),
    })
}

fn print_report(report: &Report) -> Result<()> {
    let mut out = std::io::stdout().lock();
    for (name, bytes) in report.csv_files()? {
        let written = writeln!(out, "# {name}").and_then(|_| out.write_all(&bytes));
        match written {
            // A closed pipe (e.g. `| head`) is not an error.
            Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => return Ok(()),
            r => r?,
        }
    }
    Ok(())
}

fn selftest_failed(report: &Report) -> bool {
    report
        .table("checks")
        .and_then(|t| t.column("pass"))
        .is_some_and(|c| c.iter().any(|v| v.render() != "true"))
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if let Some(k) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(k.max(1)).build_global()?;
    }
    let mut cfg = match (&cli.config, cli.cmd) {
        (Some(path), None) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            ExperimentConfig::from_json(&text)?
        }
        (Some(_), Some(_)) => bail!("--config replaces the subcommand; give one or the other"),
        (None, Some(cmd)) => ExperimentConfig::new(0, experiment(cmd)?),
        (None, None) => bail!("no subcommand given (see --help)"),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    if cli.dump_config {
        println!("{}", cfg.to_json());
        return Ok(());
    }
    let report = run(&cfg)?;
    match &cli.out {
        Some(dir) => {
            for p in report.write(dir)? {
                eprintln!("wrote {}", p.display());
            }
        }
        None => print_report(&report)?,
    }
    if selftest_failed(&report) {
        bail!("selftest: some checks failed");
    }
    Ok(())
}
