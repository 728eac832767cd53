//! Command-line driver: binds curve files and model parameters to the
//! library and emits CSV.
//!
//! Subcommands: `solve`, `evaluate`, `simulate`, `sweep`, `kernel`. Options
//! come from flags and/or a flat TOML config file (`--config`); flags win.
//! Output goes to `--out` (default standard output) and a one-line summary
//! goes to standard error. Exit codes: 0 success, 1 input error,
//! 2 numerical failure.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use priceinq::mdp::{self, parse_policy_csv, write_policy_csv, PolicyTable};
use priceinq::policies::{make_policy, PolicyKind};
use priceinq::simulator::{
    default_axis_values, sweep, write_experiment_csv, write_sweep_csv, ExperimentTable, SimConfig,
    SimMode, Simulator, SweepAxis, SweepEval,
};
use priceinq::{LmpCurve, LmpTable, LoadLaw, ModelConfig, TransitionKernel};

/// Environment variable naming the default data directory.
const DATA_DIR_ENV: &str = "PRICEINQ_DATA";

#[derive(Parser)]
#[command(
    name = "priceinq",
    version,
    about = "When should a smart-grid appliance pay to inquire the power price?"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the inquiry MDP and emit the optimal policy with its values.
    Solve(SolveArgs),
    /// Evaluate a named policy (or a policy dump) exactly.
    Evaluate(EvaluateArgs),
    /// Monte Carlo comparison of inquiry policies.
    Simulate(SimulateArgs),
    /// Cost-ratio sweep over theta or the communication cost.
    Sweep(SweepArgs),
    /// Dump the transition matrices.
    Kernel(KernelArgs),
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Flat TOML config file mirroring the flag names; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// LMP-vs-load CSV (default: $PRICEINQ_DATA/pjm5.csv or data/pjm5.csv).
    #[arg(long)]
    curve: Option<PathBuf>,
    /// Bus label from the curve file, or "all".
    #[arg(long)]
    bus: Option<String>,
    /// Load variance growth rate in MW^2 per slot (default 200).
    #[arg(long)]
    theta: Option<f64>,
    /// Communication cost per inquiry in $ (default 10).
    #[arg(long)]
    cost: Option<f64>,
    /// Discount factor in (0, 1) (default 0.99).
    #[arg(long)]
    beta: Option<f64>,
    /// Forced-inquiry bound T in slots (default 10).
    #[arg(long)]
    horizon: Option<u32>,
    /// Utility scale a in U(x) = a log x (default 100).
    #[arg(long)]
    scale: Option<f64>,
    /// Base seed for all randomness (default 0).
    #[arg(long)]
    seed: Option<u64>,
    /// Output file (default standard output; a directory for `kernel`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Policy kind: optimal, myopic, always, never or periodic:N.
    #[arg(long)]
    policy: Option<String>,
    /// Evaluate a policy dump produced by `solve` or `evaluate` instead.
    #[arg(long, conflicts_with = "policy")]
    policy_file: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Episode count (default 10000).
    #[arg(long)]
    episodes: Option<usize>,
    /// Slots per episode; 0 picks the shortest tail-safe length (default 0).
    #[arg(long)]
    slots: Option<u32>,
    /// Simulation mode: kernel or random-walk (default kernel).
    #[arg(long)]
    mode: Option<String>,
    /// Comma-separated policy kinds (default optimal,always,never,myopic).
    #[arg(long)]
    policies: Option<String>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Swept parameter: theta or cost.
    #[arg(long)]
    axis: Option<String>,
    /// Comma-separated ascending axis values (default brackets the model
    /// defaults).
    #[arg(long)]
    values: Option<String>,
    /// Evaluation mode: exact, kernel or random-walk (default exact).
    #[arg(long)]
    mode: Option<String>,
    /// Episode count for the simulated modes (default 10000).
    #[arg(long)]
    episodes: Option<usize>,
    /// Slots per episode for the simulated modes; 0 = auto (default 0).
    #[arg(long)]
    slots: Option<u32>,
}

#[derive(Args)]
struct KernelArgs {
    #[command(flatten)]
    common: CommonArgs,
}

/// Flat key-value config file; keys mirror the flag names.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    curve: Option<PathBuf>,
    bus: Option<String>,
    theta: Option<f64>,
    cost: Option<f64>,
    beta: Option<f64>,
    horizon: Option<u32>,
    scale: Option<f64>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    episodes: Option<usize>,
    slots: Option<u32>,
    mode: Option<String>,
    axis: Option<String>,
    values: Option<String>,
    policy: Option<String>,
    policies: Option<String>,
}

/// Fully resolved run parameters common to all subcommands.
struct RunSpec {
    curves: Vec<LmpCurve>,
    model: ModelConfig,
    theta: f64,
    seed: u64,
    out: Option<PathBuf>,
    file: FileConfig,
}

fn default_curve_path() -> PathBuf {
    match std::env::var_os(DATA_DIR_ENV) {
        Some(dir) => Path::new(&dir).join("pjm5.csv"),
        None => PathBuf::from("data/pjm5.csv"),
    }
}

fn resolve(common: &CommonArgs) -> Result<RunSpec> {
    let file: FileConfig = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?
        }
        None => FileConfig::default(),
    };

    let curve_path = common
        .curve
        .clone()
        .or_else(|| file.curve.clone())
        .unwrap_or_else(default_curve_path);
    let tables = LmpTable::parse_csv_path(&curve_path)
        .with_context(|| format!("reading curve table {}", curve_path.display()))?;
    let all_curves: Vec<LmpCurve> = tables
        .iter()
        .map(LmpCurve::from_table)
        .collect::<priceinq::Result<_>>()?;

    let bus = common
        .bus
        .clone()
        .or_else(|| file.bus.clone())
        .unwrap_or_else(|| "all".to_string());
    let curves = if bus == "all" {
        all_curves
    } else {
        let found = all_curves.into_iter().find(|c| c.bus_id() == bus);
        match found {
            Some(c) => vec![c],
            None => bail!(
                "unknown bus {bus:?} in {}; available buses come from the curve file header",
                curve_path.display()
            ),
        }
    };

    let model = ModelConfig::new(
        common.beta.or(file.beta).unwrap_or(0.99),
        common.cost.or(file.cost).unwrap_or(10.0),
        common.horizon.or(file.horizon).unwrap_or(10),
        common.scale.or(file.scale).unwrap_or(100.0),
    )?;
    let theta = common.theta.or(file.theta).unwrap_or(200.0);
    let seed = common.seed.or(file.seed).unwrap_or(0);
    let out = common.out.clone().or_else(|| file.out.clone());

    Ok(RunSpec {
        curves,
        model,
        theta,
        seed,
        out,
        file,
    })
}

/// Writes through `f` to the `--out` file or standard output.
fn with_output(out: Option<&Path>, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    match out {
        Some(path) => {
            let file = fs::File::create(path)
                .with_context(|| format!("creating output {}", path.display()))?;
            let mut writer = BufWriter::new(file);
            f(&mut writer)?;
            writer.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            f(&mut lock)?;
            lock.flush()?;
        }
    }
    Ok(())
}

fn build_kernel(spec: &RunSpec, curve: &LmpCurve) -> Result<(LoadLaw, TransitionKernel)> {
    let law = LoadLaw::new(spec.theta, curve.d_max())?;
    let kernel = TransitionKernel::build(curve, &law, spec.model.horizon)?;
    Ok((law, kernel))
}

fn parse_sim_mode(s: &str) -> Result<SimMode> {
    match s {
        "kernel" => Ok(SimMode::Kernel),
        "random-walk" | "random_walk" => Ok(SimMode::RandomWalk),
        other => bail!("invalid mode {other:?}: expected kernel or random-walk"),
    }
}

fn resolve_sim(
    spec: &RunSpec,
    episodes: Option<usize>,
    slots: Option<u32>,
    mode: SimMode,
) -> SimConfig {
    let episodes = episodes.or(spec.file.episodes).unwrap_or(10_000);
    let slots = match slots.or(spec.file.slots) {
        Some(n) if n > 0 => n,
        _ => SimConfig::min_slots(spec.model.beta, spec.model.horizon),
    };
    SimConfig::new(episodes, slots, spec.seed, mode)
}

fn cmd_solve(args: &SolveArgs) -> Result<()> {
    let started = Instant::now();
    let spec = resolve(&args.common)?;
    let mut dumps: Vec<(usize, PolicyTable, Vec<f64>)> = Vec::new();
    let mut states = 0usize;
    let mut residual = 0.0f64;
    let mut sweeps = 0usize;
    for (idx, curve) in spec.curves.iter().enumerate() {
        let (_, kernel) = build_kernel(&spec, curve)?;
        let solved = mdp::solve(&spec.model, curve, &kernel)?;
        // Dump the exact value of the emitted policy so that re-parsing and
        // re-evaluating the dump reproduces it bit for bit.
        let eval = mdp::evaluate_policy(&spec.model, curve, &kernel, &solved.policy)?;
        states += solved.values().len();
        residual = residual.max(solved.residual);
        sweeps = sweeps.max(solved.iterations);
        dumps.push((idx, solved.policy, eval.values().to_vec()));
    }
    let entries: Vec<(&LmpCurve, &PolicyTable, &[f64])> = dumps
        .iter()
        .map(|(idx, policy, values)| (&spec.curves[*idx], policy, values.as_slice()))
        .collect();
    with_output(spec.out.as_deref(), |out| {
        write_policy_csv(&entries, out)?;
        Ok(())
    })?;
    eprintln!(
        "solve: {} states over {} bus(es), residual {:.3e}, {} sweeps, {} ms",
        states,
        spec.curves.len(),
        residual,
        sweeps,
        started.elapsed().as_millis()
    );
    Ok(())
}

fn cmd_evaluate(args: &EvaluateArgs) -> Result<()> {
    let started = Instant::now();
    let spec = resolve(&args.common)?;

    if let Some(path) = &args.policy_file {
        let text = fs::File::open(path)
            .with_context(|| format!("opening policy file {}", path.display()))?;
        let parsed = parse_policy_csv(io::BufReader::new(text))?;
        let curve = spec
            .curves
            .iter()
            .find(|c| c.bus_id() == parsed.bus_id)
            .ok_or_else(|| {
                anyhow!(
                    "policy file is for bus {:?}, not present in the selection",
                    parsed.bus_id
                )
            })?;
        let (_, kernel) = build_kernel(&spec, curve)?;
        let eval = mdp::evaluate_policy(&spec.model, curve, &kernel, &parsed.policy)?;
        with_output(spec.out.as_deref(), |out| {
            write_policy_csv(&[(curve, &parsed.policy, eval.values())], out)?;
            Ok(())
        })?;
        eprintln!(
            "evaluate: policy file {} on bus {}, {} states, residual {:.3e}, {} ms",
            path.display(),
            parsed.bus_id,
            eval.values().len(),
            eval.residual,
            started.elapsed().as_millis()
        );
        return Ok(());
    }

    let kind: PolicyKind = args
        .policy
        .clone()
        .or_else(|| spec.file.policy.clone())
        .unwrap_or_else(|| "optimal".to_string())
        .parse()?;
    let mut dumps: Vec<(usize, PolicyTable, Vec<f64>)> = Vec::new();
    let mut states = 0usize;
    let mut residual = 0.0f64;
    for (idx, curve) in spec.curves.iter().enumerate() {
        let (_, kernel) = build_kernel(&spec, curve)?;
        let solved = match kind {
            PolicyKind::Optimal => Some(mdp::solve(&spec.model, curve, &kernel)?),
            _ => None,
        };
        let table = make_policy(kind, solved.as_ref(), &spec.model, curve, &kernel)?;
        let eval = mdp::evaluate_policy(&spec.model, curve, &kernel, &table)?;
        states += eval.values().len();
        residual = residual.max(eval.residual);
        dumps.push((idx, table, eval.values().to_vec()));
    }
    let entries: Vec<(&LmpCurve, &PolicyTable, &[f64])> = dumps
        .iter()
        .map(|(idx, policy, values)| (&spec.curves[*idx], policy, values.as_slice()))
        .collect();
    with_output(spec.out.as_deref(), |out| {
        write_policy_csv(&entries, out)?;
        Ok(())
    })?;
    eprintln!(
        "evaluate: policy {kind}, {} states over {} bus(es), residual {:.3e}, {} ms",
        states,
        spec.curves.len(),
        residual,
        started.elapsed().as_millis()
    );
    Ok(())
}

fn parse_policy_list(s: &str) -> Result<Vec<PolicyKind>> {
    s.split(',')
        .map(|token| PolicyKind::from_str(token.trim()).map_err(Into::into))
        .collect()
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let started = Instant::now();
    let spec = resolve(&args.common)?;
    let mode = parse_sim_mode(
        &args
            .mode
            .clone()
            .or_else(|| spec.file.mode.clone())
            .unwrap_or_else(|| "kernel".to_string()),
    )?;
    let sim = resolve_sim(&spec, args.episodes, args.slots, mode);
    let kinds = parse_policy_list(
        &args
            .policies
            .clone()
            .or_else(|| spec.file.policies.clone())
            .unwrap_or_else(|| "optimal,always,never,myopic".to_string()),
    )?;

    let mut tables: Vec<(String, ExperimentTable)> = Vec::new();
    for curve in &spec.curves {
        let (law, kernel) = build_kernel(&spec, curve)?;
        let solved = if kinds.contains(&PolicyKind::Optimal) {
            Some(mdp::solve(&spec.model, curve, &kernel)?)
        } else {
            None
        };
        let policies: Vec<(PolicyKind, PolicyTable)> = kinds
            .iter()
            .map(|&kind| {
                make_policy(kind, solved.as_ref(), &spec.model, curve, &kernel)
                    .map(|table| (kind, table))
            })
            .collect::<priceinq::Result<_>>()?;
        let simulator = Simulator::new(&spec.model, curve, &law, &kernel)?;
        tables.push((
            curve.bus_id().to_string(),
            simulator.run_experiment(&policies, &sim)?,
        ));
    }
    let entries: Vec<(&str, &ExperimentTable)> = tables
        .iter()
        .map(|(bus, table)| (bus.as_str(), table))
        .collect();
    with_output(spec.out.as_deref(), |out| {
        write_experiment_csv(&entries, out)?;
        Ok(())
    })?;
    eprintln!(
        "simulate: {} bus(es) x {} policies x {} episodes ({mode:?}), {} ms",
        spec.curves.len(),
        kinds.len(),
        sim.episodes,
        started.elapsed().as_millis()
    );
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let started = Instant::now();
    let spec = resolve(&args.common)?;
    let axis = match args
        .axis
        .clone()
        .or_else(|| spec.file.axis.clone())
        .as_deref()
    {
        Some("theta") => SweepAxis::Theta,
        Some("cost") => SweepAxis::CommCost,
        Some(other) => bail!("invalid axis {other:?}: expected theta or cost"),
        None => bail!("missing axis: pass --axis theta or --axis cost"),
    };
    let values: Vec<f64> = match args.values.clone().or_else(|| spec.file.values.clone()) {
        Some(list) => list
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| anyhow!("invalid values entry {v:?}"))
            })
            .collect::<Result<_>>()?,
        None => default_axis_values(axis),
    };
    let mode = args
        .mode
        .clone()
        .or_else(|| spec.file.mode.clone())
        .unwrap_or_else(|| "exact".to_string());

    let rows = match mode.as_str() {
        "exact" => sweep(
            axis,
            &values,
            &spec.curves,
            &spec.model,
            spec.theta,
            SweepEval::Exact,
        )?,
        other => {
            let sim = resolve_sim(&spec, args.episodes, args.slots, parse_sim_mode(other)?);
            sweep(
                axis,
                &values,
                &spec.curves,
                &spec.model,
                spec.theta,
                SweepEval::Simulate(&sim),
            )?
        }
    };
    with_output(spec.out.as_deref(), |out| {
        write_sweep_csv(&rows, out)?;
        Ok(())
    })?;
    eprintln!(
        "sweep: {} rows ({} x {} values over {} bus(es), mode {mode}), {} ms",
        rows.len(),
        axis.name(),
        values.len(),
        spec.curves.len(),
        started.elapsed().as_millis()
    );
    Ok(())
}

fn cmd_kernel(args: &KernelArgs) -> Result<()> {
    let started = Instant::now();
    let spec = resolve(&args.common)?;
    match &spec.out {
        Some(dir) => {
            fs::create_dir_all(dir)
                .with_context(|| format!("creating output directory {}", dir.display()))?;
            for curve in &spec.curves {
                let (_, kernel) = build_kernel(&spec, curve)?;
                for delta in 1..=kernel.horizon() {
                    let path = dir.join(format!("{}_delta{:02}.csv", curve.bus_id(), delta));
                    let file = fs::File::create(&path)
                        .with_context(|| format!("creating {}", path.display()))?;
                    let mut writer = BufWriter::new(file);
                    kernel.write_matrix_csv(delta, &mut writer)?;
                    writer.flush()?;
                }
            }
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            for (n, curve) in spec.curves.iter().enumerate() {
                let (_, kernel) = build_kernel(&spec, curve)?;
                kernel.write_long_csv(curve.bus_id(), n == 0, &mut lock)?;
            }
            lock.flush()?;
        }
    }
    eprintln!(
        "kernel: {} bus(es), T = {}, {} ms",
        spec.curves.len(),
        spec.model.horizon,
        started.elapsed().as_millis()
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Solve(args) => cmd_solve(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Kernel(args) => cmd_kernel(args),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            std::process::exit(code);
        }
    };
    if let Err(err) = run(cli) {
        eprintln!("error: {err:#}");
        let numerical = err
            .chain()
            .any(|cause| match cause.downcast_ref::<priceinq::Error>() {
                Some(e) => e.is_numerical(),
                None => false,
            });
        std::process::exit(if numerical { 2 } else { 1 });
    }
}
