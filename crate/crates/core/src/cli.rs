//! The `impact` command-line driver.
//!
//! Exit codes: 0 success, 2 configuration or usage error, 3 abstraction
//! failure, 4 synthesis did not converge, 5 file input/output error.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::abstraction::{build_abstraction, estimate_cost, AbstractionError, Imdp};
use crate::config::{Config, ConfigError};
use crate::grid::{label_states, GridError, LabeledStates, Space};
use crate::io::{self, IoError};
use crate::simulate::{simulate, write_csv, ClosedLoop, SimulateError, SimulationOptions};
use crate::synthesis::{
    diagnose_convergence, synthesize_traced, verify_traced, Controller, Diagnosis, Horizon, SpecKind, SynthesisError,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_ABSTRACTION: i32 = 3;
pub const EXIT_NONCONVERGENCE: i32 = 4;
pub const EXIT_IO: i32 = 5;

#[derive(Debug, Parser)]
#[command(name = "impact", version, about = "Interval MDP abstraction and controller synthesis")]
pub struct Cli {
    /// Log progress to stderr (RUST_LOG overrides).
    #[arg(short, long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Problem description.
    #[arg(long, value_name = "FILE")]
    pub config: PathBuf,
    /// Worker threads (overrides `workers` in the config).
    #[arg(long, value_name = "N")]
    pub workers: Option<usize>,
    /// Random seed (overrides `seed` in the config).
    #[arg(long, value_name = "S")]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Report problem sizes and memory requirements without building anything.
    Plan {
        #[command(flatten)]
        common: Common,
    },
    /// Build the abstraction and write it to a directory.
    Abstract {
        #[command(flatten)]
        common: Common,
        /// Output directory.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Synthesize a controller from an abstraction directory.
    Synthesize {
        #[command(flatten)]
        common: Common,
        /// Abstraction directory written by `abstract`.
        #[arg(long = "in", value_name = "DIR")]
        input: PathBuf,
        /// Controller file [default: DIR/controller.txt].
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Compute satisfaction bounds of an input-free abstraction.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Abstraction directory written by `abstract`.
        #[arg(long = "in", value_name = "DIR")]
        input: PathBuf,
        /// Result file [default: DIR/controller.txt].
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Run closed-loop rollouts of a controller and write trajectories as CSV.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Controller file written by `synthesize` or `verify`.
        #[arg(long, value_name = "FILE")]
        controller: PathBuf,
        /// Number of rollouts.
        #[arg(long, default_value_t = 1000)]
        rollouts: usize,
        /// Time steps per rollout.
        #[arg(long)]
        steps: usize,
        /// Start every rollout at this comma-separated point instead of
        /// sampling safe states.
        #[arg(long, value_name = "X1,X2,...", value_delimiter = ',', allow_hyphen_values = true)]
        start: Option<Vec<f64>>,
        /// Only sample start states whose p_min is at least this value.
        #[arg(long, default_value_t = 0.0)]
        min_p: f64,
        /// CSV output.
        #[arg(long, value_name = "FILE", default_value = "trajectories.csv")]
        out: PathBuf,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Abstraction(#[from] AbstractionError),
    #[error("{error}{}", diagnosis_text(.diagnosis))]
    Synthesis {
        error: SynthesisError,
        diagnosis: Option<Diagnosis>,
    },
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("{path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Simulate(#[from] SimulateError),
}

fn diagnosis_text(d: &Option<Diagnosis>) -> String {
    let Some(d) = d else {
        return String::new();
    };
    let show = |k: Option<usize>| k.map_or_else(|| "none".to_string(), |k| k.to_string());
    format!(
        "\nself-convergence: lower iterate k0 = {}, upper iterate k1 = {}\n\
         When one iterate settles but the gap stays open, the abstraction has states \
         that can neither reach the goal nor leave; a finite horizon, a coarser epsilon \
         or a larger max_iterations gives a usable (if looser) result, and the settled \
         iterate is itself a valid bound.",
        show(d.k0),
        show(d.k1)
    )
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => EXIT_CONFIG,
            CliError::Abstraction(_) => EXIT_ABSTRACTION,
            CliError::Synthesis { error, .. } => match error {
                SynthesisError::NonConvergence { .. }
                | SynthesisError::NoSelfConvergence(_)
                | SynthesisError::Bracket { .. } => EXIT_NONCONVERGENCE,
                _ => EXIT_CONFIG,
            },
            CliError::Io(_) | CliError::Write { .. } => EXIT_IO,
            CliError::Simulate(_) => EXIT_CONFIG,
        }
    }
}

fn pool<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    crate::with_workers(workers, f).map_err(|e| CliError::Usage(format!("cannot start worker pool: {e}")))
}

fn load_config(common: &Common) -> Result<Config, CliError> {
    let mut cfg = Config::load(&common.config)?;
    if let Some(w) = common.workers {
        if w == 0 {
            return Err(CliError::Usage("--workers must be positive".into()));
        }
        cfg.run.workers = Some(w);
    }
    if let Some(s) = common.seed {
        cfg.run.abstraction.seed = s;
    }
    Ok(cfg)
}

fn labels_for(cfg: &Config) -> Result<LabeledStates, CliError> {
    let labels = match &cfg.spec {
        Some(spec) => label_states(&cfg.state, spec.target.as_ref(), spec.avoid.as_ref()),
        None => Ok(LabeledStates::all_safe(cfg.state.total())),
    };
    labels.map_err(|e: GridError| CliError::Usage(format!("labelling states: {e}")))
}

fn shape(space: &Space) -> String {
    space
        .counts()
        .iter()
        .map(usize::to_string)
        .collect::<Vec<_>>()
        .join(" x ")
}

fn human_bytes(bytes: u64) -> String {
    const UNITS: [&str; 5] = ["B", "KiB", "MiB", "GiB", "TiB"];
    let mut v = bytes as f64;
    let mut unit = 0;
    while v >= 1024.0 && unit + 1 < UNITS.len() {
        v /= 1024.0;
        unit += 1;
    }
    format!("{v:.1} {}", UNITS[unit])
}

fn emit(out: &mut dyn Write, text: std::fmt::Arguments<'_>) -> Result<(), CliError> {
    out.write_fmt(text)
        .and_then(|_| out.write_all(b"\n"))
        .map_err(|source| CliError::Write {
            path: PathBuf::from("<stdout>"),
            source,
        })
}

macro_rules! say {
    ($out:expr, $($arg:tt)*) => { emit($out, format_args!($($arg)*))? };
}

/// Runs one subcommand, writing the report to `out`.
pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match &cli.command {
        Command::Plan { common } => plan(common, out),
        Command::Abstract { common, out: dir } => abstract_cmd(common, dir, out),
        Command::Synthesize { common, input, out: file } => solve(common, input, file.as_deref(), false, out),
        Command::Verify { common, input, out: file } => solve(common, input, file.as_deref(), true, out),
        Command::Simulate {
            common,
            controller,
            rollouts,
            steps,
            start,
            min_p,
            out: csv,
        } => {
            let opts = SimulationOptions {
                rollouts: *rollouts,
                steps: *steps,
                seed: 0,
                start: start.clone(),
                min_p: *min_p,
            };
            simulate_cmd(common, controller, opts, csv, out)
        }
    }
}

fn plan(common: &Common, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = load_config(common)?;
    let n_s = cfg.state.total();
    let n_u = cfg.input.as_ref().map_or(0, Space::total);
    let n_w = cfg.disturb.as_ref().map_or(0, Space::total);
    say!(out, "states        {n_s:>12}  ({})", shape(&cfg.state));
    match &cfg.input {
        Some(u) => say!(out, "inputs        {n_u:>12}  ({})", shape(u)),
        None => say!(out, "inputs        {:>12}", "-"),
    }
    match &cfg.disturb {
        Some(w) => say!(out, "disturbances  {n_w:>12}  ({})", shape(w)),
        None => say!(out, "disturbances  {:>12}", "-"),
    }
    let cost = estimate_cost(n_s as u64, n_u as u64, n_w as u64);
    let sat = if cost.saturated { " (overflow)" } else { "" };
    say!(out, "rows          {:>12}", cost.rows);
    say!(out, "entries (d)   {:>12}{sat}", cost.d);
    say!(out, "memory        {:>12}  ({} bytes)", human_bytes(cost.bytes), cost.bytes);
    if cfg.spec.is_some() {
        let labels = labels_for(&cfg)?;
        say!(
            out,
            "labels        safe {}, target {}, avoid {}",
            labels.safe.len(),
            labels.target.len(),
            labels.avoid.len()
        );
    }
    if cost.bytes > cfg.memory_warning {
        say!(
            out,
            "WARNING: the dense abstraction needs {}, above the {} threshold",
            human_bytes(cost.bytes),
            human_bytes(cfg.memory_warning)
        );
    }
    Ok(())
}

fn abstract_cmd(common: &Common, dir: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = load_config(common)?;
    let dynamics = cfg.require_dynamics()?;
    let noise = cfg.require_noise()?;
    let labels = labels_for(&cfg)?;
    let start = Instant::now();
    let imdp = pool(cfg.run.workers, || {
        build_abstraction(
            dynamics,
            noise,
            &cfg.state,
            cfg.input.as_ref(),
            cfg.disturb.as_ref(),
            &labels,
            &cfg.run.abstraction,
        )
    })??;
    let built = start.elapsed();
    io::save_imdp(dir, &imdp)?;
    let significant = imdp.t_max.data.iter().filter(|&&v| v > 1e-9).count();
    let total = imdp.t_max.data.len().max(1);
    say!(
        out,
        "abstraction: {} lattice states ({} safe), {} rows, built in {:.3} s",
        cfg.state.total(),
        imdp.n_states(),
        imdp.rows(),
        built.as_secs_f64()
    );
    say!(
        out,
        "t_max entries above 1e-9: {significant} of {} ({:.2}%)",
        imdp.t_max.data.len(),
        100.0 * significant as f64 / total as f64
    );
    say!(out, "written to {}", dir.display());
    Ok(())
}

fn check_compatible(cfg: &Config, imdp: &Imdp) -> Result<(), CliError> {
    if imdp.state_space != cfg.state {
        return Err(CliError::Usage("the abstraction was built for a different state space".into()));
    }
    if imdp.input_space != cfg.input || imdp.disturb_space != cfg.disturb {
        return Err(CliError::Usage(
            "the abstraction was built for different input or disturbance spaces".into(),
        ));
    }
    if imdp.labels != labels_for(cfg)? {
        return Err(CliError::Usage(
            "the abstraction's labels differ from the configured target/avoid regions".into(),
        ));
    }
    Ok(())
}

fn solve(
    common: &Common,
    dir: &Path,
    file: Option<&Path>,
    verify_only: bool,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let cfg = load_config(common)?;
    let spec = cfg.require_spec()?.kind;
    let imdp = io::load_imdp(dir)?;
    check_compatible(&cfg, &imdp)?;
    if verify_only && imdp.input_space.is_some() {
        return Err(CliError::Usage("verify needs an abstraction without inputs; use synthesize".into()));
    }
    let opts = &cfg.run.synthesis;
    let start = Instant::now();
    let result = pool(cfg.run.workers, || {
        if verify_only {
            verify_traced(&imdp, spec, opts)
        } else {
            synthesize_traced(&imdp, spec, opts)
        }
    })?;
    let (controller, trace) = match result {
        Ok(r) => r,
        Err(error) => {
            let diagnosis = match error {
                SynthesisError::NonConvergence { .. } => pool(cfg.run.workers, || {
                    diagnose_convergence(&imdp, spec, opts.mode, opts.eps, opts.max_iterations).ok()
                })?,
                _ => None,
            };
            return Err(CliError::Synthesis { error, diagnosis });
        }
    };
    let path = file.map_or_else(|| dir.join(io::CONTROLLER_FILE), Path::to_path_buf);
    io::save_controller(&path, &controller)?;
    report(out, &controller, &trace, start.elapsed().as_secs_f64())?;
    say!(out, "written to {}", path.display());
    Ok(())
}

fn report(out: &mut dyn Write, c: &Controller, trace: &[Vec<f64>; 2], secs: f64) -> Result<(), CliError> {
    say!(
        out,
        "{} ({}, {}): {} iterations in {:.3} s",
        c.spec.name(),
        c.mode.name(),
        match c.horizon {
            Horizon::Infinite => "infinite horizon".to_string(),
            Horizon::Finite(k) => format!("horizon {k}"),
        },
        c.iterations,
        secs
    );
    for (phase, gaps) in trace.iter().enumerate() {
        if gaps.is_empty() {
            continue;
        }
        let text = gaps.iter().map(|g| format!("{g:.3e}")).collect::<Vec<_>>().join(" ");
        say!(out, "phase {} gap tail: {text}", phase + 1);
    }
    let n = c.states.len().max(1) as f64;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / n;
    let width = c
        .p_min
        .iter()
        .zip(&c.p_max)
        .map(|(a, b)| b - a)
        .fold(0.0, f64::max);
    say!(
        out,
        "safe states {}: mean p_min {:.6}, mean p_max {:.6}, widest interval {:.3e}",
        c.states.len(),
        mean(&c.p_min),
        mean(&c.p_max),
        width
    );
    Ok(())
}

fn simulate_cmd(
    common: &Common,
    controller_path: &Path,
    mut opts: SimulationOptions,
    csv: &Path,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let cfg = load_config(common)?;
    let dynamics = cfg.require_dynamics()?;
    let noise = cfg.require_noise()?;
    let spec = cfg.require_spec()?.kind;
    let controller = io::load_controller(controller_path)?;
    if controller.state_space != cfg.state {
        return Err(CliError::Usage("the controller was built for a different state space".into()));
    }
    let spec_matches = controller.spec == spec || (spec == SpecKind::Reach && controller.spec == SpecKind::ReachAvoid);
    if !spec_matches {
        return Err(CliError::Usage(format!(
            "the controller is for `{}` but the config asks for `{}`",
            controller.spec.name(),
            spec.name()
        )));
    }
    if !(0.0..=1.0).contains(&opts.min_p) {
        return Err(CliError::Usage("--min-p must lie in [0, 1]".into()));
    }
    opts.seed = cfg.run.abstraction.seed;
    let labels = labels_for(&cfg)?;
    let system = ClosedLoop {
        dynamics,
        noise,
        disturb_space: cfg.disturb.as_ref(),
        labels: &labels,
        controller: &controller,
    };
    let (rollouts, summary) = pool(cfg.run.workers, || simulate(&system, &opts))??;
    let write = |path: &Path| -> std::io::Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        write_csv(&mut w, cfg.state.dims(), &rollouts)?;
        w.flush()
    };
    write(csv).map_err(|source| CliError::Write {
        path: csv.to_path_buf(),
        source,
    })?;
    say!(
        out,
        "rollouts {}, satisfied {} ({:.4} ± {:.4})",
        summary.rollouts,
        summary.successes,
        summary.fraction,
        summary.stderr
    );
    say!(
        out,
        "controller bounds over start states: mean [{:.4}, {:.4}], smallest p_min {:.4}",
        summary.mean_p_min,
        summary.mean_p_max,
        summary.min_p_min
    );
    say!(out, "trajectories written to {}", csv.display());
    Ok(())
}
