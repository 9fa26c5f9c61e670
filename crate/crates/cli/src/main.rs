mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rumorlab::criteria_tree::critical_values;
use rumorlab::estimator::{
    analytic_verdict, contradicts, estimate_annealed, estimate_quenched, exact_line_oracle,
    oracle_spec_for, run_quenched_panel, wilson_interval, Estimate, McSettings, Process, Protocol,
    Scenario, ORACLE_MAX_HORIZON, ORACLE_MAX_RADIUS,
};
use rumorlab::rng::{derive_seed, StreamTag};
use serde_json::Value;

use config::{CellConfig, ExperimentConfig, ProtocolConfig};
use report::Row;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("run error: {0}")]
    Run(#[from] rumorlab::Error),
}

#[derive(Parser)]
#[command(
    name = "rumorlab",
    version,
    about = "Firework and reverse-firework experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config (JSON, schema 1).
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    #[arg(long)]
    seed_override: Option<u64>,
    #[arg(long)]
    replicates_override: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Analytic verdicts only.
    Criteria(Common),
    /// Verdicts plus Monte Carlo estimates; exit 2 on a contradiction.
    Simulate(Common),
    /// One row per value of a numeric config field, plus plot data.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Dotted path inside each cell, e.g. `offspring.mean` or `nLaw.p`.
        #[arg(long)]
        axis: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[arg(long, value_enum)]
        metric: Option<Metric>,
    },
    /// Exact survival-to-horizon probabilities for bounded line cells.
    Oracle(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum Metric {
    Estimate,
    Criterion,
    McLower,
    McUpper,
    Oracle,
}

impl Metric {
    fn name(self) -> &'static str {
        match self {
            Metric::Estimate => "point_estimate",
            Metric::Criterion => "criterion_value",
            Metric::McLower => "mc_lower",
            Metric::McUpper => "mc_upper",
            Metric::Oracle => "oracle",
        }
    }

    fn of(self, r: &Row) -> f64 {
        let nan = f64::NAN;
        match self {
            Metric::Estimate => r.estimate.map_or(nan, |e| e.point_estimate),
            Metric::Criterion => r.verdict.criterion_value,
            Metric::McLower => r.mc_lower.unwrap_or(nan),
            Metric::McUpper => r.mc_upper.unwrap_or(nan),
            Metric::Oracle => r.oracle.unwrap_or(nan),
        }
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Mode {
    Criteria,
    Simulate,
    Oracle,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(mismatch) => {
            if mismatch {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("rumorlab: {e}");
            ExitCode::from(1)
        }
    }
}

fn init_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("RUMORLAB_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().ok().filter(|n| *n > 0).ok_or_else(|| {
        CliError::Config(format!(
            "RUMORLAB_THREADS must be a positive integer, got '{v}'"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(e.to_string()))
}

fn run(cli: Cli) -> Result<bool, CliError> {
    init_threads()?;
    match cli.command {
        Command::Criteria(c) => run_plain(&c, Mode::Criteria, "criteria"),
        Command::Simulate(c) => run_plain(&c, Mode::Simulate, "simulate"),
        Command::Oracle(c) => run_plain(&c, Mode::Oracle, "oracle"),
        Command::Sweep {
            common,
            axis,
            values,
            metric,
        } => run_sweep(&common, &axis, &values, metric),
    }
}

/// Raw config with command-line overrides applied.
fn load(c: &Common) -> Result<Value, CliError> {
    let mut raw = config::read_raw(&c.config)?;
    if let Some(obj) = raw.as_object_mut() {
        if let Some(s) = c.seed_override {
            obj.insert("masterSeed".into(), Value::from(s));
        }
        if let Some(r) = c.replicates_override {
            obj.insert("replicates".into(), Value::from(r));
            if let Some(Value::Array(cells)) = obj.get_mut("cells") {
                for cell in cells.iter_mut().filter_map(Value::as_object_mut) {
                    cell.remove("replicates");
                }
            }
        }
    }
    Ok(raw)
}

fn prepare_out(c: &Common, raw: &Value) -> Result<(), CliError> {
    std::fs::create_dir_all(&c.out_dir)
        .map_err(|e| CliError::Io(format!("{}: {e}", c.out_dir.display())))?;
    let text = serde_json::to_string_pretty(raw).map_err(|e| CliError::Io(e.to_string()))?;
    let p = c.out_dir.join("config.resolved.json");
    std::fs::write(&p, text + "\n").map_err(|e| CliError::Io(format!("{}: {e}", p.display())))
}

fn run_plain(c: &Common, mode: Mode, command: &str) -> Result<bool, CliError> {
    let raw = load(c)?;
    let cfg = config::parse(raw.clone())?;
    let scenarios = cfg.validate()?;
    if mode == Mode::Simulate
        && cfg.replicates == 0
        && cfg.cells.iter().all(|c| c.replicates.unwrap_or(0) == 0)
    {
        return Err(CliError::Config("simulate needs replicates >= 1".into()));
    }
    prepare_out(c, &raw)?;
    let mut rows = Vec::new();
    for (k, (cell, sc)) in cfg.cells.iter().zip(&scenarios).enumerate() {
        rows.push(evaluate(&cfg, cell, sc, k, mode)?);
    }
    finish(c, &cfg, command, &rows)
}

fn run_sweep(
    c: &Common,
    axis: &str,
    values: &[String],
    metric: Option<Metric>,
) -> Result<bool, CliError> {
    let raw = load(c)?;
    let base = config::parse(raw.clone())?;
    base.validate()?;
    prepare_out(c, &raw)?;
    let mode = if base.replicates > 0 {
        Mode::Simulate
    } else {
        Mode::Criteria
    };
    let metric = metric.unwrap_or(if mode == Mode::Simulate {
        Metric::Estimate
    } else {
        Metric::Criterion
    });
    let mut rows = Vec::new();
    let mut points = Vec::new();
    for v in values {
        let num = config::number(v)?;
        let mut raw_v = raw.clone();
        let n_cells = base.cells.len();
        for k in 0..n_cells {
            config::set_path(&mut raw_v, &format!("cells.{k}.{axis}"), num.clone())?;
        }
        let cfg = config::parse(raw_v)?;
        let scenarios = cfg.validate()?;
        for (k, (cell, sc)) in cfg.cells.iter().zip(&scenarios).enumerate() {
            let mut row = evaluate(&cfg, cell, sc, k, mode)?;
            row.axis_value = Some(v.trim().to_string());
            points.push((v.trim().to_string(), metric.of(&row)));
            rows.push(row);
        }
    }
    report::write_plot(
        &c.out_dir.join(&base.outputs.plot),
        axis,
        metric.name(),
        &points,
    )?;
    finish(c, &base, "sweep", &rows)
}

fn finish(
    c: &Common,
    cfg: &ExperimentConfig,
    command: &str,
    rows: &[Row],
) -> Result<bool, CliError> {
    report::write_csv(&c.out_dir.join(&cfg.outputs.csv), rows)?;
    report::write_json(&c.out_dir.join(&cfg.outputs.json), command, rows)?;
    let mut mismatch = false;
    for r in rows {
        let est = r.estimate.map(|e| {
            format!(
                " p^={:.4} [{:.4}, {:.4}]",
                e.point_estimate, e.wilson_lo, e.wilson_hi
            )
        });
        let axis = r
            .axis_value
            .as_ref()
            .map(|a| format!(" @{a}"))
            .unwrap_or_default();
        let oracle = r
            .oracle
            .map(|o| format!(" oracle={o:.6e}"))
            .unwrap_or_default();
        let flag = if r.mismatch { " MISMATCH" } else { "" };
        println!(
            "{}{axis}: {} ({}){}{oracle}{flag}",
            r.id,
            r.verdict.outcome,
            r.verdict.theorem_tag,
            est.unwrap_or_default()
        );
        if r.estimate.is_some_and(|e| e.exhaustion_warning()) {
            eprintln!(
                "warning: {}: more than 1% of replicates hit the node budget",
                r.id
            );
        }
        mismatch |= r.mismatch;
    }
    Ok(mismatch)
}

fn graph_name(sc: &Scenario) -> &'static str {
    match sc {
        Scenario::Line { .. } => "line",
        Scenario::Tree { .. } => "gw-tree",
    }
}

fn process_name(p: Process) -> &'static str {
    match p {
        Process::Firework => "firework",
        Process::Reverse => "reverse",
    }
}

fn oracle_for(sc: &Scenario, horizon: u64) -> Option<f64> {
    if horizon > ORACLE_MAX_HORIZON {
        return None;
    }
    let spec = oracle_spec_for(sc, horizon)?;
    if spec.pmf.len() > ORACLE_MAX_RADIUS + 1 {
        return None;
    }
    exact_line_oracle(&spec).ok()
}

fn pooled(
    entries: &[rumorlab::estimator::PanelEntry],
    s: &McSettings,
) -> Result<Estimate, CliError> {
    let successes: u64 = entries.iter().map(|e| e.estimate.successes).sum();
    let trials: u64 = entries.iter().map(|e| e.estimate.trials).sum();
    let exhausted: u64 = entries.iter().map(|e| e.estimate.exhausted).sum();
    let (lo, hi) = if trials > 0 {
        wilson_interval(successes, trials, s.confidence)?
    } else {
        (0.0, 1.0)
    };
    Ok(Estimate {
        successes,
        trials,
        point_estimate: if trials > 0 {
            successes as f64 / trials as f64
        } else {
            f64::NAN
        },
        wilson_lo: lo,
        wilson_hi: hi,
        confidence: s.confidence,
        master_seed: s.master_seed,
        protocol: Protocol::QuenchedPanel,
        exhausted,
    })
}

fn evaluate(
    cfg: &ExperimentConfig,
    cell: &CellConfig,
    sc: &Scenario,
    k: usize,
    mode: Mode,
) -> Result<Row, CliError> {
    let start = Instant::now();
    let crit = cfg.criteria_settings();
    let verdict = analytic_verdict(sc, &crit);
    let horizon = cell.horizon.unwrap_or(cfg.horizon);
    let replicates = cell.replicates.unwrap_or(cfg.replicates);
    let cell_seed = derive_seed(cfg.master_seed, k as u64, StreamTag::Panel);
    let s = McSettings {
        replicates,
        horizon,
        master_seed: cell_seed,
        confidence: cfg.confidence,
    };

    let (mut protocol, mut env_seed, mut estimate, mut panel_size, mut panel_positive) =
        ("annealed".to_string(), None, None, None, None);
    match cfg.protocol {
        ProtocolConfig::Annealed => {}
        ProtocolConfig::Quenched { env_seed: e } => {
            protocol = "quenched".into();
            env_seed = Some(e);
        }
        ProtocolConfig::QuenchedPanel { size } => {
            protocol = "quenched_panel".into();
            panel_size = Some(size);
        }
    }
    if mode == Mode::Simulate && replicates > 0 {
        estimate = Some(match cfg.protocol {
            ProtocolConfig::Annealed => estimate_annealed(sc, &s)?,
            ProtocolConfig::Quenched { env_seed } => estimate_quenched(sc, env_seed, &s)?,
            ProtocolConfig::QuenchedPanel { size } => {
                if size == 0 {
                    return Err(CliError::Config("panel size must be >= 1".into()));
                }
                let entries = run_quenched_panel(sc, size, &s)?;
                panel_positive = Some(
                    entries
                        .iter()
                        .filter(|e| e.estimate.wilson_lo > 0.0)
                        .count(),
                );
                pooled(&entries, &s)?
            }
        });
    }
    let oracle = oracle_for(sc, horizon);
    if mode == Mode::Oracle && oracle.is_none() {
        return Err(CliError::Config(format!(
            "cell '{}': the oracle needs a homogeneous line cell with radii bounded by {ORACLE_MAX_RADIUS} and horizon <= {ORACLE_MAX_HORIZON}",
            cell.id
        )));
    }
    let (mc_lower, mc_upper) = match sc {
        Scenario::Tree {
            process: Process::Reverse,
            site,
            ..
        } => {
            let cv = critical_values(&site.station, &site.radius, crit.tol.max(1e-10));
            (Some(cv.lower), Some(cv.upper))
        }
        _ => (None, None),
    };
    let mismatch = estimate.is_some_and(|e| contradicts(&verdict, &e, cell.extinction_tol()));
    let unexpected = cell.expected.is_some_and(|e| e != verdict.outcome);
    Ok(Row {
        id: cell.id.clone(),
        graph: graph_name(sc).into(),
        process: process_name(sc.process()).into(),
        protocol,
        env_seed,
        master_seed: cell_seed,
        horizon,
        verdict,
        expected: cell.expected.map(|o| o.to_string()),
        unexpected,
        estimate,
        mismatch,
        oracle,
        mc_lower,
        mc_upper,
        panel_size,
        panel_positive,
        axis_value: None,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}
