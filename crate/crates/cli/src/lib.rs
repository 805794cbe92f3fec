//! Command-line front end for `kuramoto-mfg`.
//!
//! Every subcommand resolves a [`RunConfig`] from an optional JSON file and
//! flags, runs one computation and emits a JSON report (echoing the resolved
//! configuration) plus CSV curves.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod repro;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

pub use commands::Output;
pub use config::RunConfig;
pub use error::CliError;

use crate::output::render_json;

#[derive(Debug, Parser)]
#[command(name = "kmfg", version, about = "Kuramoto mean-field game laboratory")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// JSON configuration file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory for JSON reports and CSV files.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub kappa: Option<f64>,
    #[arg(long, global = true)]
    pub beta: Option<f64>,
    #[arg(long, global = true)]
    pub sigma: Option<f64>,
    /// Inline distribution, e.g. '{"kind":"gaussian","mean":0,"variance":1}'.
    #[arg(long, global = true)]
    pub dist: Option<String>,
    #[arg(long, global = true)]
    pub grid_n: Option<usize>,
    #[arg(long, global = true)]
    pub time_n: Option<usize>,
    #[arg(long, global = true)]
    pub horizon: Option<f64>,
    #[arg(long, global = true)]
    pub lambda: Option<f64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Do not print the JSON report on stdout.
    #[arg(long, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Critical couplings kappa_c and kappa_P.
    Thresholds {
        #[arg(long)]
        theta_max: Option<f64>,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Scan of G_kappa and its fixed points.
    Gmap {
        #[arg(long)]
        alpha_max: Option<f64>,
        #[arg(long)]
        points: Option<usize>,
    },
    /// Penrose curve and kappa_P.
    Penrose {
        #[arg(long)]
        theta_max: Option<f64>,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Stability certificates for a list of couplings.
    Stability {
        /// Comma-separated couplings.
        #[arg(long, value_delimiter = ',')]
        kappas: Option<Vec<f64>>,
        /// Also solve the time-domain resolvent and write its trace.
        #[arg(long)]
        resolvent: bool,
        #[arg(long)]
        forcing_rate: Option<f64>,
    },
    /// Time-dependent mean-field game dynamics.
    Simulate {
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        damping: Option<f64>,
        #[arg(long)]
        max_sweeps: Option<usize>,
        /// Start at the largest fixed point of the G-map.
        #[arg(long)]
        seed_equilibrium: bool,
        /// Write per-snapshot densities.
        #[arg(long)]
        dump_densities: bool,
    },
    /// Run the reproduction bundle and diff against expected JSON.
    Repro {
        /// Directory holding the expected reports.
        #[arg(long)]
        expected: Option<PathBuf>,
        /// Overwrite the expected reports with the current output.
        #[arg(long)]
        bless: bool,
    },
}

/// Merges the config file, the common flags and the subcommand flags.
pub fn resolve_config(common: &CommonArgs, command: &Command) -> Result<RunConfig, CliError> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::from_path(path)?,
        None => RunConfig::default(),
    };
    if let Some(k) = common.kappa {
        cfg.model.kappa = k;
    }
    if let Some(b) = common.beta {
        cfg.model.beta = b;
    }
    if let Some(s) = common.sigma {
        cfg.model.sigma = s;
    }
    if let Some(d) = &common.dist {
        cfg.dist = config::parse_dist(d)?;
    }
    if let Some(n) = common.grid_n {
        cfg.grid_n = n;
    }
    if let Some(n) = common.time_n {
        cfg.time_n = n;
    }
    if common.horizon.is_some() {
        cfg.horizon = common.horizon;
    }
    if common.lambda.is_some() {
        cfg.lambda = common.lambda;
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    match command {
        Command::Thresholds { theta_max, samples } | Command::Penrose { theta_max, samples } => {
            if theta_max.is_some() {
                cfg.penrose.theta_max = *theta_max;
            }
            if samples.is_some() {
                cfg.penrose.samples = *samples;
            }
        }
        Command::Gmap { alpha_max, points } => {
            if alpha_max.is_some() {
                cfg.gmap.alpha_max = *alpha_max;
            }
            if points.is_some() {
                cfg.gmap.points = *points;
            }
        }
        Command::Stability {
            kappas,
            resolvent,
            forcing_rate,
        } => {
            if kappas.is_some() {
                cfg.stability.kappas = kappas.clone();
            }
            cfg.stability.resolvent |= *resolvent;
            if forcing_rate.is_some() {
                cfg.stability.forcing_rate = *forcing_rate;
            }
        }
        Command::Simulate {
            epsilon,
            steps,
            damping,
            max_sweeps,
            seed_equilibrium,
            dump_densities,
        } => {
            let sim = &mut cfg.simulate;
            if let Some(e) = epsilon {
                sim.epsilon = *e;
            }
            if let Some(s) = steps {
                sim.steps = *s;
            }
            if let Some(d) = damping {
                sim.damping = *d;
            }
            if let Some(m) = max_sweeps {
                sim.max_sweeps = *m;
            }
            sim.seed_equilibrium |= *seed_equilibrium;
            sim.dump_densities |= *dump_densities;
        }
        Command::Repro { .. } => {}
    }
    Ok(cfg)
}

/// Applies `KMFG_THREADS` to the global thread pool.
pub fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("KMFG_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("KMFG_THREADS must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("KMFG_THREADS: {e}")))
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Writes the report and side files of `output` into `dir`.
pub fn write_output(dir: &Path, output: &Output) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    write_file(dir, &format!("{}.json", output.name), &render_json(&output.report))?;
    for (name, contents) in &output.files {
        write_file(dir, name, contents)?;
    }
    Ok(())
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let common = &cli.common;
    if let Command::Repro { expected, bless } = &cli.command {
        let dir = expected.clone().unwrap_or_else(repro::default_expected_dir);
        let (summary, outputs, all_ok) = repro::run(&dir, *bless)?;
        if let Some(out) = &common.out {
            for o in &outputs {
                write_output(out, o)?;
            }
            write_file(out, "repro.json", &render_json(&summary))?;
        }
        if !common.quiet {
            print!("{}", render_json(&summary));
        }
        if !all_ok {
            return Err(CliError::Mismatch(
                "one or more bundle entries differ from the expected reports".into(),
            ));
        }
        return Ok(());
    }

    let cfg = resolve_config(common, &cli.command)?;
    let output = match &cli.command {
        Command::Thresholds { .. } => commands::thresholds(&cfg),
        Command::Gmap { .. } => commands::gmap(&cfg),
        Command::Penrose { .. } => commands::penrose(&cfg),
        Command::Stability { .. } => commands::stability(&cfg),
        Command::Simulate { .. } => commands::simulate(&cfg),
        Command::Repro { .. } => unreachable!("handled above"),
    }?;
    for w in &output.warnings {
        eprintln!("warning: {w}");
    }
    if let Some(out) = &common.out {
        write_output(out, &output)?;
    }
    if !common.quiet {
        print!("{}", render_json(&output.report));
    }
    Ok(())
}
