//! Command-line front end: flag parsing, config resolution and dispatch.

// `!(x > 0.0)` is how NaN gets rejected along with the bad values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use crate::commands::{Outcome, SimulateArgs};
use crate::config::{PartialConfig, PartialGrid, PartialParams, RunConfig, OUT_ENV};
use crate::output::Sink;

/// Exit status when a check fails.
pub const EXIT_CHECK: i32 = 1;
/// Exit status for malformed command lines (clap's own code).
pub const EXIT_USAGE: i32 = 2;
/// Exit status for configuration errors and constraint violations.
pub const EXIT_CONFIG: i32 = 3;
/// Exit status for numerical or I/O failures.
pub const EXIT_RUNTIME: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "bubbletower", version, about = "Bubble-tower ancient solutions: constants, profiles, barriers and flows")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// TOML config file; flags override its keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Space dimension.
    #[arg(long, global = true)]
    pub n: Option<u32>,
    /// Tower height.
    #[arg(long, global = true)]
    pub k: Option<usize>,
    /// Final time of the ancient regime.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub t0: Option<f64>,
    #[arg(long, global = true)]
    pub sigma: Option<f64>,
    /// Decay exponent of the outer weights.
    #[arg(long = "alpha-w", global = true)]
    pub alpha_w: Option<f64>,
    /// Decay exponent of the inner norms.
    #[arg(long, global = true)]
    pub a: Option<f64>,
    /// Exponent of the outermost gluing radius.
    #[arg(long, global = true)]
    pub delta: Option<f64>,
    #[arg(long, global = true)]
    pub eps: Option<f64>,
    /// Inner cutoff radius.
    #[arg(long = "cutoff-R", global = true)]
    pub cutoff_r: Option<f64>,
    /// Relative tolerance of quadratures and ODE steps.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Output directory (default: $BUBBLETOWER_OUT, then ./bubbletower-out).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker thread budget.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Seed for randomized sampling.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Also write a plotting script next to the data.
    #[arg(long = "emit-plot", global = true)]
    pub emit_plot: bool,
}

impl CommonArgs {
    fn partial(&self) -> PartialConfig {
        PartialConfig {
            n: self.n,
            k: self.k,
            tol: self.tol,
            out: self.out.clone(),
            seed: self.seed,
            threads: self.threads,
            params: PartialParams {
                sigma: self.sigma,
                alpha_w: self.alpha_w,
                a: self.a,
                delta: self.delta,
                epsilon: self.eps,
                r_cut: self.cutoff_r,
                t0: self.t0,
            },
            grid: PartialGrid::default(),
        }
    }
}

#[derive(Debug, Args)]
pub struct TimesArg {
    /// Evaluation times (repeatable).
    #[arg(long = "t", allow_negative_numbers = true, num_args = 1.., default_values_t = [-1e4])]
    pub t: Vec<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Interaction constant and exponent tables.
    Constants,
    /// Solve for the first-order corrector profile.
    Corrector {
        /// Override the corrector grid size.
        #[arg(long)]
        nodes: Option<usize>,
    },
    /// Scale parameters, their corrections and an ODE cross-check.
    Params {
        /// Far end of the sampled time range.
        #[arg(long = "t-far", allow_negative_numbers = true, default_value_t = -1e8)]
        t_far: f64,
        #[arg(long, default_value_t = 61)]
        samples: usize,
    },
    /// The approximate solution on the physical grid.
    Ansatz(TimesArg),
    /// Error of the approximate solution and its components.
    Residual(TimesArg),
    /// Weight envelopes, optionally with dominance ratio tables.
    Weights {
        #[arg(long = "t", allow_negative_numbers = true, num_args = 1.., default_values_t = [-1e3, -1e4, -1e5])]
        t: Vec<f64>,
        #[arg(long = "check-dominance")]
        check_dominance: bool,
        /// Sample radii per time for the dominance check.
        #[arg(long, default_value_t = 60)]
        points: usize,
    },
    /// Heat-operator barrier catalog.
    #[command(name = "duhamel-check")]
    DuhamelCheck {
        /// Restrict to these catalog tags (repeatable).
        #[arg(long)]
        tag: Vec<String>,
        /// Sample points per reference time.
        #[arg(long = "per-time", default_value_t = 17)]
        per_time: usize,
    },
    /// Evolve the approximate solution with the nonlinear flow.
    Simulate {
        /// Start time (default t0).
        #[arg(long = "t-start", allow_negative_numbers = true)]
        t_start: Option<f64>,
        /// Run length in units of the innermost inner time.
        #[arg(long, default_value_t = 1.0)]
        span: f64,
        /// Relative amplitude of seeded noise on the initial data.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        /// Write a snapshot every this many accepted steps (0: none).
        #[arg(long = "snapshot-every", default_value_t = 0)]
        snapshot_every: usize,
        #[arg(long = "max-steps", default_value_t = 1_000_000)]
        max_steps: usize,
        /// Override the evolution grid size.
        #[arg(long)]
        nodes: Option<usize>,
    },
    /// Run the acceptance suite.
    Selftest {
        /// Reduced suite without the slow checks.
        #[arg(long)]
        fast: bool,
    },
}

impl Command {
    fn grid_overrides(&self) -> PartialGrid {
        match self {
            Command::Corrector { nodes } => PartialGrid {
                corrector_nodes: *nodes,
                ..Default::default()
            },
            Command::Simulate { nodes, .. } => PartialGrid {
                sim_nodes: *nodes,
                ..Default::default()
            },
            _ => PartialGrid::default(),
        }
    }
}

/// Defaults, then the environment (output directory only), then the file,
/// then flags.
pub fn resolve(cli: &Cli) -> Result<RunConfig> {
    let file = match &cli.common.config {
        Some(p) => PartialConfig::from_file(p)?,
        None => PartialConfig::default(),
    };
    let mut flags = cli.common.partial();
    flags.grid = cli.command.grid_overrides();
    let env_out = std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()).map(PathBuf::from);
    let cfg = file.overlay(flags).resolve(env_out);
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<Outcome> {
    let cfg = resolve(cli)?;
    if let Some(n) = cfg.threads {
        // A second call in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let mut sink = Sink::new(&cfg.out)?;
    let s = &mut sink;
    match &cli.command {
        Command::Constants => commands::constants(&cfg, s),
        Command::Corrector { .. } => commands::corrector(&cfg, s),
        Command::Params { t_far, samples } => commands::params(&cfg, s, *t_far, *samples),
        Command::Ansatz(a) => commands::ansatz(&cfg, s, &a.t),
        Command::Residual(a) => commands::residual(&cfg, s, &a.t, cli.common.emit_plot),
        Command::Weights {
            t,
            check_dominance,
            points,
        } => commands::weights(&cfg, s, t, *check_dominance, *points),
        Command::DuhamelCheck { tag, per_time } => commands::duhamel_check(&cfg, s, tag, *per_time),
        Command::Simulate {
            t_start,
            span,
            noise,
            snapshot_every,
            max_steps,
            ..
        } => commands::simulate(
            &cfg,
            s,
            &SimulateArgs {
                t_start: *t_start,
                span: *span,
                noise: *noise,
                snapshot_every: *snapshot_every,
                max_steps: *max_steps,
            },
        ),
        Command::Selftest { fast } => commands::selftest(&cfg, s, *fast),
    }
}

/// Exit status for an error: configuration problems versus everything else.
pub fn exit_code_for(err: &anyhow::Error) -> i32 {
    match err.downcast_ref::<bubbletower::Error>() {
        Some(bubbletower::Error::Config(_)) | Some(bubbletower::Error::Domain(_)) => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}

/// Parse `argv`, run, print the summary and return the exit status.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match run(&cli) {
        Ok(o) => {
            print!("{}", o.json);
            if o.passed {
                0
            } else {
                EXIT_CHECK
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code_for(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_parse_with_negative_values() {
        let cli = Cli::try_parse_from(["bubbletower", "residual", "--n", "7", "--k", "2", "--t", "-1e4", "-1e3", "--emit-plot"]).unwrap();
        assert!(cli.common.emit_plot);
        match cli.command {
            Command::Residual(a) => assert_eq!(a.t, vec![-1e4, -1e3]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_flag_is_a_usage_error() {
        assert_eq!(dispatch(["bubbletower", "constants", "--bogus"]), EXIT_USAGE);
        assert_eq!(dispatch(["bubbletower", "frobnicate"]), EXIT_USAGE);
    }

    #[test]
    fn constraint_violation_maps_to_config_exit() {
        let err: anyhow::Error = bubbletower::Error::config("x").into();
        assert_eq!(exit_code_for(&err), EXIT_CONFIG);
        let err: anyhow::Error = bubbletower::Error::numerical("y", 1.0).into();
        assert_eq!(exit_code_for(&err), EXIT_RUNTIME);
    }
}
