//! `curvcheck`: curvature-dimension checks for reversible Markov chains.
//!
//! Exit codes: 0 success, 1 mathematical failure (falsified condition,
//! violated inequality, solver without certificate), 2 input failure.

mod commands;
mod descriptors;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::report::{write_csv, write_json, Envelope};

#[derive(Debug)]
pub enum Failure {
    Input(String),
    Math(String),
}

impl From<curvcheck::Error> for Failure {
    fn from(e: curvcheck::Error) -> Self {
        use curvcheck::Error::*;
        match e {
            SolverNotConverged { .. } | QuadratureNonConvergent { .. } | DivergentIntegral => Failure::Math(e.to_string()),
            _ => Failure::Input(e.to_string()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "curvcheck", version, about = "Curvature-dimension checks for reversible Markov chains")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// Write the JSON report here.
    #[arg(long, global = true, value_name = "FILE")]
    json: Option<PathBuf>,
    /// Write plot-ready CSV here.
    #[arg(long, global = true, value_name = "FILE")]
    csv: Option<PathBuf>,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Relative tolerance for measure identities.
    #[arg(long, global = true, default_value_t = curvcheck::chain::DEFAULT_TOLERANCE)]
    tol: f64,
    /// Random seed; falls back to CURVCHECK_SEED, then 0.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Chain validation and local statistics.
    Chain {
        #[command(subcommand)]
        action: ChainAction,
    },
    /// Per-state curvature estimates.
    Curvature {
        spec: String,
        #[arg(long, value_enum, default_value_t = Variant::Upsilon)]
        variant: Variant,
        /// Restrict to one state label.
        #[arg(long)]
        state: Option<String>,
    },
    /// CD_Υ(κ, F) verification.
    Cd {
        #[command(subcommand)]
        action: CdAction,
    },
    /// Entropy decay along the semigroup and the differential inequality.
    EntropyDecay {
        spec: String,
        /// Density as a JSON array (state order) or object keyed by label.
        #[arg(long)]
        density: String,
        /// Time grid, e.g. `geom:1e-3,1.5,30,zero`.
        #[arg(long, default_value = "geom:1e-3,1.5,30,zero")]
        grid: String,
        /// Rescale the input to unit mean.
        #[arg(long)]
        normalize: bool,
        #[arg(long, value_parser = descriptors::parse_number)]
        kappa: Option<f64>,
        #[arg(long)]
        cdfun: Option<String>,
    },
    /// Resistance diameter and its bound.
    Diameter {
        spec: String,
        /// Growth function for the bound; defaults to the family certificate.
        #[arg(long)]
        growth: Option<String>,
    },
    /// Functional-inequality suites on random inputs.
    Inequalities {
        spec: String,
        #[arg(long, value_delimiter = ',', default_value = "ei,ultra,lip,nash")]
        suite: Vec<Suite>,
        #[arg(long)]
        growth: Option<String>,
        #[arg(long, default_value_t = 200)]
        samples: u64,
        /// Times for the ultracontractivity suite.
        #[arg(long, default_value = "0.01,0.1,1")]
        times: String,
    },
    /// Built-in example families.
    Example {
        family: String,
        /// Parameters as key=value; lists as comma-separated values.
        params: Vec<String>,
        #[arg(long, value_enum, default_value_t = Emit::Summary)]
        emit: Emit,
    },
}

#[derive(Subcommand, Debug)]
enum ChainAction {
    Check { spec: String },
}

#[derive(Subcommand, Debug)]
enum CdAction {
    Verify {
        spec: String,
        /// Curvature constant; defaults to the family certificate.
        #[arg(long, value_parser = descriptors::parse_number)]
        kappa: Option<f64>,
        /// Dimension term descriptor; defaults to the family certificate.
        #[arg(long)]
        cdfun: Option<String>,
        #[arg(long, default_value_t = 10_000)]
        trials: u64,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    Upsilon,
    Be,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Ei,
    Ultra,
    Lip,
    Nash,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Emit {
    Spec,
    Summary,
}

/// What every command hands back.
pub struct Outcome {
    pub command: &'static str,
    pub text: String,
    pub result: serde_json::Value,
    pub table: report::Table,
    pub spec_sha256: Option<String>,
    pub seed: Option<u64>,
    /// Set when a mathematical check failed.
    pub failure: Option<String>,
}

fn seed(global: &Global) -> Result<u64, Failure> {
    if let Some(s) = global.seed {
        return Ok(s);
    }
    match std::env::var("CURVCHECK_SEED") {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Failure::Input(format!("CURVCHECK_SEED must be an unsigned integer, got `{v}`"))),
        Err(_) => Ok(0),
    }
}

fn run(cli: Cli) -> Result<Outcome, Failure> {
    if let Some(n) = cli.global.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| Failure::Input(e.to_string()))?;
    }
    let g = &cli.global;
    if !(g.tol > 0.0 && g.tol < 1.0) {
        return Err(Failure::Input(format!("--tol must lie in (0, 1), got {}", g.tol)));
    }
    match cli.command {
        Command::Chain {
            action: ChainAction::Check { spec },
        } => commands::chain_check(g, &spec),
        Command::Curvature { spec, variant, state } => commands::curvature(g, &spec, variant, state.as_deref(), seed(g)?),
        Command::Cd {
            action: CdAction::Verify {
                spec,
                kappa,
                cdfun,
                trials,
            },
        } => commands::cd_verify(g, &spec, kappa, cdfun.as_deref(), trials, seed(g)?),
        Command::EntropyDecay {
            spec,
            density,
            grid,
            normalize,
            kappa,
            cdfun,
        } => commands::entropy_decay(g, &spec, &density, &grid, normalize, kappa, cdfun.as_deref()),
        Command::Diameter { spec, growth } => commands::diameter(g, &spec, growth.as_deref()),
        Command::Inequalities {
            spec,
            suite,
            growth,
            samples,
            times,
        } => commands::inequalities(g, &spec, &suite, growth.as_deref(), samples, &times, seed(g)?),
        Command::Example { family, params, emit } => commands::example(&family, &params, emit),
    }
}

fn finish(global: &Global, out: Outcome) -> Result<ExitCode, Failure> {
    print!("{}", out.text);
    if let Some(path) = &global.json {
        let env = Envelope {
            tool: "curvcheck",
            version: env!("CARGO_PKG_VERSION"),
            command: out.command,
            spec_sha256: out.spec_sha256.clone(),
            seed: out.seed,
            result: out.result,
        };
        write_json(path, &env)?;
    }
    if let Some(path) = &global.csv {
        write_csv(path, &out.table)?;
    }
    Ok(match out.failure {
        Some(msg) => {
            eprintln!("curvcheck: {msg}");
            ExitCode::from(1)
        }
        None => ExitCode::SUCCESS,
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let global = cli.global.clone();
    match run(cli).and_then(|out| finish(&global, out)) {
        Ok(code) => code,
        Err(Failure::Math(msg)) => {
            eprintln!("curvcheck: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Input(msg)) => {
            eprintln!("curvcheck: error: {msg}");
            ExitCode::from(2)
        }
    }
}
