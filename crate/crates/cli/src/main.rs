//! `torusflux`: field generation, norm and flux scans, simulation and the
//! self-check battery.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use torusflux::flux::FluxKind;
use torusflux::norms::Summability;
use torusflux::verify::Scale;

use config::{GenKind, RunConfig};
use error::CliError;

#[derive(Parser, Debug)]
#[command(name = "torusflux", version, about = "Energy and helicity flux diagnostics on the periodic torus")]
struct Cli {
    /// TOML configuration; unknown keys are rejected.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Upper bound on worker threads.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct Exponents {
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
    /// Third Besov index for `norms` (number, inf, cN or VMO); commutator exponent for `mollscan`.
    #[arg(long)]
    q: Option<String>,
    /// `start:stop:ratio`.
    #[arg(long)]
    ladder: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a field file and its certificate.
    Generate {
        #[command(flatten)]
        ex: Exponents,
        #[arg(long, value_enum)]
        kind: Option<GenKind>,
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        name: Option<String>,
        #[arg(long)]
        planted_decay: Option<f64>,
        #[arg(long)]
        decay_rate: Option<f64>,
    },
    /// Besov report of a field.
    Norms {
        #[command(flatten)]
        ex: Exponents,
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Mollification and commutator rates along an ε ladder.
    Mollscan {
        #[command(flatten)]
        ex: Exponents,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        derivative_order: Option<u32>,
    },
    /// Flux functional along N or ε.
    Fluxscan {
        #[command(flatten)]
        ex: Exponents,
        #[arg(long)]
        input: Option<PathBuf>,
        /// energy_LP, energy_moll, helicity_LP or helicity_moll.
        #[arg(long)]
        kind: Option<FluxKind>,
        /// Comma-separated levels.
        #[arg(long, value_delimiter = ',')]
        levels: Option<Vec<i32>>,
    },
    /// Integrate the Euler equations from a field file.
    Simulate {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        t_final: Option<f64>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        snapshot_every: Option<usize>,
        #[arg(long)]
        richardson: bool,
    },
    /// Run the self-check battery.
    Verify {
        /// quick or full.
        #[arg(long)]
        scale: Option<String>,
        #[arg(long, value_delimiter = ',')]
        criteria: Option<Vec<u8>>,
    },
    /// Merge JSON and CSV outputs into one bundle.
    Report {
        #[arg(long, num_args = 1..)]
        inputs: Option<Vec<PathBuf>>,
    },
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn unused(command: &str, flags: &[(&str, bool)]) -> Result<(), CliError> {
    match flags.iter().find(|(_, given)| *given) {
        Some((name, _)) => Err(CliError::Config(format!("--{name} does not apply to {command}"))),
        None => Ok(()),
    }
}

fn parse_q(q: &str) -> Result<f64, CliError> {
    torusflux::serde_ext::parse_text(q).ok_or_else(|| CliError::Config(format!("--q {q:?} is not a number")))
}

fn apply(cli: Cli, cfg: &mut RunConfig) -> Result<Command, CliError> {
    set(&mut cfg.seed, cli.seed);
    set(&mut cfg.out, cli.out);
    if cli.jobs.is_some() {
        cfg.jobs = cli.jobs;
    }
    match &cli.command {
        Command::Generate { ex, kind, dim, n, name, planted_decay, decay_rate } => {
            let g = &mut cfg.generate;
            unused("generate", &[("beta", ex.beta.is_some()), ("theta", ex.theta.is_some()), ("q", ex.q.is_some()), ("ladder", ex.ladder.is_some())])?;
            set(&mut g.alpha, ex.alpha);
            set(&mut g.p, ex.p);
            set(&mut g.kind, *kind);
            set(&mut g.dim, *dim);
            set(&mut g.n, *n);
            set(&mut g.name, name.clone());
            set(&mut g.planted_decay, *planted_decay);
            set(&mut g.decay_rate, *decay_rate);
        }
        Command::Norms { ex, input } => {
            let c = &mut cfg.norms;
            unused("norms", &[("beta", ex.beta.is_some()), ("theta", ex.theta.is_some()), ("ladder", ex.ladder.is_some())])?;
            set(&mut c.alpha, ex.alpha);
            set(&mut c.p, ex.p);
            set(&mut c.input, input.clone());
            if let Some(q) = &ex.q {
                c.q = q.parse::<Summability>().map_err(|e| CliError::Config(e.to_string()))?;
            }
        }
        Command::Mollscan { ex, input, derivative_order } => {
            let c = &mut cfg.mollscan;
            unused("mollscan", &[("beta", ex.beta.is_some())])?;
            set(&mut c.alpha, ex.alpha);
            set(&mut c.p, ex.p);
            set(&mut c.input, input.clone());
            set(&mut c.ladder, ex.ladder.clone());
            set(&mut c.derivative_order, *derivative_order);
            if ex.theta.is_some() {
                c.theta = ex.theta;
            }
            if let Some(q) = &ex.q {
                c.q = Some(parse_q(q)?);
            }
        }
        Command::Fluxscan { ex, input, kind, levels } => {
            let c = &mut cfg.fluxscan;
            unused("fluxscan", &[("q", ex.q.is_some())])?;
            set(&mut c.p, ex.p);
            set(&mut c.input, input.clone());
            set(&mut c.kind, *kind);
            set(&mut c.levels, levels.clone());
            set(&mut c.ladder, ex.ladder.clone());
            for (slot, v) in [(&mut c.alpha, ex.alpha), (&mut c.beta, ex.beta), (&mut c.theta, ex.theta)] {
                if v.is_some() {
                    *slot = v;
                }
            }
        }
        Command::Simulate { input, t_final, dt, snapshot_every, richardson } => {
            let c = &mut cfg.simulate;
            set(&mut c.input, input.clone());
            set(&mut c.t_final, *t_final);
            if dt.is_some() {
                c.dt = *dt;
            }
            if snapshot_every.is_some() {
                c.snapshot_every = *snapshot_every;
            }
            c.richardson |= richardson;
        }
        Command::Verify { scale, criteria } => {
            if let Some(s) = scale {
                cfg.verify.scale = match s.as_str() {
                    "quick" => Scale::Quick,
                    "full" => Scale::Full,
                    other => return Err(CliError::Config(format!("--scale {other:?}: expected quick or full"))),
                };
            }
            set(&mut cfg.verify.criteria, criteria.clone());
        }
        Command::Report { inputs } => set(&mut cfg.report.inputs, inputs.clone()),
    }
    cfg.validate()?;
    Ok(cli.command)
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    let command = apply(cli, &mut cfg)?;
    if let Some(j) = cfg.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .map_err(|e| CliError::Config(format!("--jobs {j}: {e}")))?;
    }
    match command {
        Command::Generate { .. } => commands::generate(&cfg),
        Command::Norms { .. } => commands::norms(&cfg),
        Command::Mollscan { .. } => commands::mollscan(&cfg),
        Command::Fluxscan { .. } => commands::fluxscan(&cfg),
        Command::Simulate { .. } => commands::simulate(&cfg),
        Command::Verify { .. } => commands::verify(&cfg),
        Command::Report { .. } => commands::report(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("torusflux: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
