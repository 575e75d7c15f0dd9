//! Command-line front end.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, Provenance, RunConfig};
use crate::dqn::{self, DqnError, TrainedPolicy};
use crate::env::{self, EnvError, EpisodeReport};
use crate::oracle::{self, GridRollout, OracleError, OraclePolicy};
use crate::par::{self, Execution};
use crate::plant::{default_penalty, PlantError, PlantSpec};
use crate::policies::{Greedy, Policy, PolicyKind, Sdpp, Tfp};
use crate::sizing::{
    self, Candidate, Discounting, SizingError, SizingResult, SweepOptions, SweepPolicy,
    SweepSummary,
};
use crate::trace::{
    generate_synthetic_trace, load_trace, write_trace, ColumnMap, Trace, TraceError,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Masking(String),
    #[error("{0}")]
    Divergence(String),
    #[error("{0}")]
    Infeasible(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Usage(_) => 2,
            Self::Data(_) => 3,
            Self::Masking(_) => 4,
            Self::Divergence(_) => 5,
            Self::Infeasible(_) => 6,
        }
    }
}

impl From<TraceError> for CliError {
    fn from(e: TraceError) -> Self {
        match e {
            TraceError::Parameter(_) => Self::Usage(e.to_string()),
            _ => Self::Data(e.to_string()),
        }
    }
}

impl From<PlantError> for CliError {
    fn from(e: PlantError) -> Self {
        match e {
            PlantError::Spec(_) => Self::Usage(e.to_string()),
            _ => Self::Data(e.to_string()),
        }
    }
}

impl From<EnvError> for CliError {
    fn from(e: EnvError) -> Self {
        match e {
            EnvError::Masking { .. } => Self::Masking(e.to_string()),
            EnvError::Trace(t) => t.into(),
            EnvError::Plant(p) => p.into(),
            _ => Self::Data(e.to_string()),
        }
    }
}

impl From<DqnError> for CliError {
    fn from(e: DqnError) -> Self {
        match e {
            DqnError::Divergence { .. } => Self::Divergence(e.to_string()),
            DqnError::Env(env) => env.into(),
            DqnError::Config(_) => Self::Usage(e.to_string()),
            _ => Self::Data(e.to_string()),
        }
    }
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::Size { .. } | OracleError::Domain(_) => Self::Usage(e.to_string()),
            _ => Self::Data(e.to_string()),
        }
    }
}

impl From<SizingError> for CliError {
    fn from(e: SizingError) -> Self {
        match e {
            SizingError::Parameter(_) => Self::Usage(e.to_string()),
            SizingError::Infeasible(_) => Self::Infeasible(e.to_string()),
            SizingError::Csv(_) => Self::Data(e.to_string()),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        Self::Usage(e.to_string())
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Data(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(
    name = "chiller-tes",
    version,
    about = "Chiller and thermal-storage dispatch, control and sizing"
)]
pub struct Cli {
    /// JSON run configuration; flags override its keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// Worker threads for `sweep`.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Print human-readable tables instead of JSON.
    #[arg(long, global = true)]
    pub pretty: bool,
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct TraceArgs {
    /// Trace CSV; a synthetic trace is generated when omitted.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Use only the first N hours.
    #[arg(long)]
    pub hours: Option<usize>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct SizeArgs {
    #[arg(long)]
    pub c_ch: Option<f64>,
    #[arg(long)]
    pub e_max: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic trace CSV.
    Generate {
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        hours: Option<usize>,
        #[arg(long)]
        sources: Option<usize>,
        #[arg(long)]
        outage_prob: Option<f64>,
    },
    /// Run one policy over a trace.
    Simulate {
        #[command(flatten)]
        trace: TraceArgs,
        #[command(flatten)]
        size: SizeArgs,
        #[arg(long, value_enum)]
        policy: Option<PolicyKind>,
        /// Trained network for `--policy dqn`.
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long)]
        e_init: Option<f64>,
        /// Also write the per-step log.
        #[arg(long)]
        log: bool,
    },
    /// Train a DQN policy.
    Train {
        #[command(flatten)]
        trace: TraceArgs,
        #[command(flatten)]
        size: SizeArgs,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        epsilon_fixed: Option<f64>,
        #[arg(long)]
        penalty: Option<f64>,
    },
    /// Solve the DP oracle and compare it with the baselines.
    Oracle {
        #[command(flatten)]
        trace: TraceArgs,
        #[command(flatten)]
        size: SizeArgs,
        #[arg(long)]
        soc_nodes: Option<usize>,
        #[arg(long)]
        e_init: Option<f64>,
        #[arg(long)]
        penalty: Option<f64>,
    },
    /// Evaluate every candidate sizing and pick the least life-cycle cost.
    Sweep {
        #[command(flatten)]
        trace: TraceArgs,
        /// Comma-separated `C_CHxE_MAX` pairs, e.g. `700x1500,500x2500`.
        #[arg(long)]
        candidates: Option<String>,
        #[arg(long, value_enum)]
        policy: Option<PolicyKind>,
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Price sizings from known annual electricity costs.
    Lcc {
        /// CSV with columns `c_ch,e_max,f_elec` and optionally `total_lol`.
        #[arg(long)]
        input: PathBuf,
        /// Discount year `i` by `(1+r)^(i-1)` instead of `(1+r)^i`.
        #[arg(long)]
        start_of_year: bool,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Self::Generate { .. } => "generate",
            Self::Simulate { .. } => "simulate",
            Self::Train { .. } => "train",
            Self::Oracle { .. } => "oracle",
            Self::Sweep { .. } => "sweep",
            Self::Lcc { .. } => "lcc",
        }
    }
}

/// Parses `700x1500,500x2500`.
pub fn parse_candidates(text: &str) -> Result<Vec<Candidate>, CliError> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|pair| {
            let (c, e) = pair.split_once(['x', 'X']).ok_or_else(|| {
                CliError::Usage(format!("candidate `{pair}` is not of the form CxE"))
            })?;
            let num = |s: &str| {
                s.trim().parse::<f64>().map_err(|_| {
                    CliError::Usage(format!("candidate `{pair}` has a non-numeric part"))
                })
            };
            Ok(Candidate {
                c_ch: num(c)?,
                e_max: num(e)?,
            })
        })
        .collect()
}

fn base_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn apply_trace_args(cfg: &mut RunConfig, args: &TraceArgs) {
    if let Some(path) = &args.trace {
        cfg.trace = Some(path.clone());
    }
    if let Some(h) = args.hours {
        cfg.synthetic.hours = h;
    }
}

fn apply_size_args(cfg: &mut RunConfig, args: &SizeArgs) {
    if let Some(c) = args.c_ch {
        cfg.chiller.capacity_kwh_th = c;
    }
    if let Some(e) = args.e_max {
        cfg.tes.capacity_kwh_th = e;
    }
}

fn resolve_trace(cfg: &RunConfig, hours: Option<usize>) -> Result<Trace, CliError> {
    match &cfg.trace {
        Some(path) => {
            let t = load_trace(path, &ColumnMap::default())?;
            Ok(match hours {
                Some(h) => t.truncated(h),
                None => t,
            })
        }
        None => Ok(generate_synthetic_trace(&cfg.synthetic, cfg.seed)?),
    }
}

struct Output<'a> {
    dir: &'a Path,
}

impl Output<'_> {
    fn create(dir: &Path) -> Result<Output<'_>, CliError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        Ok(Output { dir })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn writer(&self, name: &str) -> Result<BufWriter<File>, CliError> {
        let path = self.path(name);
        Ok(BufWriter::new(File::create(&path).map_err(io_err(&path))?))
    }

    fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), CliError> {
        let path = self.path(name);
        let mut text =
            serde_json::to_string_pretty(value).map_err(|e| CliError::Data(e.to_string()))?;
        text.push('\n');
        fs::write(&path, text).map_err(io_err(&path))
    }

    fn provenance(&self, command: &str, cfg: &RunConfig) -> Result<(), CliError> {
        self.json("provenance.json", &Provenance::new(command, cfg))
    }
}

fn emit<T: Serialize>(pretty: bool, value: &T, table: impl FnOnce() -> String) {
    if pretty {
        print!("{}", table());
    } else {
        println!(
            "{}",
            serde_json::to_string_pretty(value).expect("serialisable report")
        );
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let mut cfg = base_config(cli)?;
    let name = cli.command.name();
    match &cli.command {
        Command::Generate {
            out,
            hours,
            sources,
            outage_prob,
        } => {
            if let Some(h) = hours {
                cfg.synthetic.hours = *h;
            }
            if let Some(m) = sources {
                cfg.synthetic.num_sources = *m;
            }
            if let Some(p) = outage_prob {
                cfg.synthetic.outage_prob = *p;
            }
            let trace = generate_synthetic_trace(&cfg.synthetic, cfg.seed)?;
            let path = out.clone().unwrap_or_else(|| cli.out_dir.join("trace.csv"));
            let dir = match path.parent() {
                Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
                _ => PathBuf::from("."),
            };
            let output = Output::create(&dir)?;
            let file = File::create(&path).map_err(io_err(&path))?;
            write_trace(&trace, BufWriter::new(file))?;
            output.provenance(name, &cfg)?;
            log::info!("wrote {} hours to {}", trace.len(), path.display());
            Ok(())
        }
        Command::Simulate {
            trace,
            size,
            policy,
            weights,
            e_init,
            log,
        } => {
            apply_trace_args(&mut cfg, trace);
            apply_size_args(&mut cfg, size);
            if let Some(p) = policy {
                cfg.policy = *p;
            }
            if let Some(e) = e_init {
                cfg.e_init = *e;
            }
            let tr = resolve_trace(&cfg, trace.hours)?;
            let plant = cfg.plant()?;
            let policy = build_policy(&cfg, weights.as_deref(), &tr, &plant)?;
            let report = env::run_episode(policy.as_ref(), &tr, &plant, cfg.e_init, *log)?;
            let output = Output::create(&cli.out_dir)?;
            output.json("report.json", &report)?;
            if let Some(entries) = &report.log {
                env::write_step_log(entries, output.writer("steps.csv")?)?;
            }
            output.provenance(name, &cfg)?;
            emit(cli.pretty, &report, || {
                report_table(std::slice::from_ref(&report))
            });
            Ok(())
        }
        Command::Train {
            trace,
            size,
            episodes,
            epsilon_fixed,
            penalty,
        } => {
            apply_trace_args(&mut cfg, trace);
            apply_size_args(&mut cfg, size);
            if let Some(n) = episodes {
                cfg.train.episodes = *n;
            }
            if epsilon_fixed.is_some() {
                cfg.train.epsilon_fixed = *epsilon_fixed;
            }
            if penalty.is_some() {
                cfg.penalty = *penalty;
            }
            let tr = resolve_trace(&cfg, trace.hours)?;
            let plant = cfg.plant()?;
            let outcome = dqn::train(&tr, &plant, &cfg.train_config())?;
            let report = env::run_episode(&outcome.policy, &tr, &plant, cfg.e_init, false)?;
            let output = Output::create(&cli.out_dir)?;
            let weights_path = output.path("qnet.json");
            fs::write(&weights_path, outcome.policy.to_json()?).map_err(io_err(&weights_path))?;
            dqn::write_training_curve(&outcome.curve, output.writer("training_curve.csv")?)?;
            output.json("report.json", &report)?;
            output.provenance(name, &cfg)?;
            emit(cli.pretty, &report, || {
                report_table(std::slice::from_ref(&report))
            });
            Ok(())
        }
        Command::Oracle {
            trace,
            size,
            soc_nodes,
            e_init,
            penalty,
        } => {
            apply_trace_args(&mut cfg, trace);
            apply_size_args(&mut cfg, size);
            if let Some(n) = soc_nodes {
                cfg.oracle.soc_nodes = *n;
            }
            if let Some(e) = e_init {
                cfg.e_init = *e;
            }
            if penalty.is_some() {
                cfg.penalty = *penalty;
            }
            let tr = resolve_trace(&cfg, trace.hours)?;
            let plant = cfg.plant()?;
            let report = oracle_report(&cfg, &tr, &plant, cli.out_dir.as_path(), name)?;
            emit(cli.pretty, &report, || {
                let mut s = format!("optimal cost on grid: {:.2}\n", report.optimal_cost);
                s += &format!(
                    "{:<8} {:>16} {:>16} {:>12}\n",
                    "policy", "grid cost", "f_elec", "total_lol"
                );
                for r in &report.grid_rollouts {
                    s += &format!(
                        "{:<8} {:>16.2} {:>16.2} {:>12.3}\n",
                        r.policy, r.rollout.cost, r.rollout.f_elec, r.rollout.total_lol
                    );
                }
                s
            });
            Ok(())
        }
        Command::Sweep {
            trace,
            candidates,
            policy,
            episodes,
        } => {
            apply_trace_args(&mut cfg, trace);
            if let Some(text) = candidates {
                cfg.candidates = parse_candidates(text)?;
            }
            if let Some(p) = policy {
                cfg.policy = *p;
            }
            if let Some(n) = episodes {
                cfg.train.episodes = *n;
            }
            if cfg.candidates.is_empty() {
                return Err(CliError::Usage("sweep needs at least one candidate".into()));
            }
            let tr = resolve_trace(&cfg, trace.hours)?;
            let template = cfg.plant()?;
            let mode = match cfg.policy {
                PolicyKind::Dqn => SweepPolicy::Trained(cfg.train_config()),
                PolicyKind::Oracle => {
                    return Err(CliError::Usage(
                        "the oracle cannot be swept; use dqn or a baseline".into(),
                    ))
                }
                kind => SweepPolicy::Baseline(kind),
            };
            let options = SweepOptions {
                policy: mode,
                seed: cfg.seed,
                e_init: cfg.e_init,
                execution: Execution::Parallel,
            };
            let results = par::with_jobs(cli.jobs, || {
                sizing::sweep(&cfg.candidates, &tr, &template, &cfg.economics, &options)
            })?;
            finish_sizing(cli, &cfg, name, results, "sweep")
        }
        Command::Lcc {
            input,
            start_of_year,
        } => {
            if *start_of_year {
                cfg.economics.discounting = Discounting::StartOfYear;
            }
            cfg.economics.validate()?;
            let rows = read_lcc_input(input)?;
            let results: Vec<SizingResult> = rows
                .into_iter()
                .map(|r| {
                    let cand = Candidate {
                        c_ch: r.c_ch,
                        e_max: r.e_max,
                    };
                    sizing::lcc(cand, r.f_elec, r.total_lol.unwrap_or(0.0), &cfg.economics)
                })
                .collect();
            if results.is_empty() {
                return Err(CliError::Usage(format!("{} has no rows", input.display())));
            }
            finish_sizing(cli, &cfg, name, results, "lcc")
        }
    }
}

fn build_policy(
    cfg: &RunConfig,
    weights: Option<&Path>,
    trace: &Trace,
    plant: &PlantSpec,
) -> Result<Box<dyn Policy>, CliError> {
    if let Some(p) = cfg.policy.baseline() {
        return Ok(p);
    }
    match cfg.policy {
        PolicyKind::Dqn => {
            let path =
                weights.ok_or_else(|| CliError::Usage("--policy dqn needs --weights".into()))?;
            let text = fs::read_to_string(path).map_err(io_err(path))?;
            Ok(Box::new(TrainedPolicy::from_json(&text)?))
        }
        _ => {
            let penalty = cfg
                .penalty
                .unwrap_or_else(|| default_penalty(trace.max_price(), plant.chiller.capacity));
            let table = oracle::dp_solve_with(
                trace,
                plant,
                cfg.oracle.soc_nodes,
                &cfg.train.grid,
                penalty,
                cfg.oracle.horizon_cap,
                Execution::Sequential,
            )?;
            Ok(Box::new(OraclePolicy::new(table)))
        }
    }
}

#[derive(Debug, Serialize)]
struct NamedRollout {
    policy: String,
    rollout: GridRollout,
}

#[derive(Debug, Serialize)]
struct OracleReport {
    soc_nodes: usize,
    penalty: f64,
    e_init: f64,
    /// `V_1` at the node nearest `e_init`.
    optimal_cost: f64,
    /// Rollouts on the discretised dynamics the table was solved for.
    grid_rollouts: Vec<NamedRollout>,
    /// The oracle played on the continuous plant.
    episode: EpisodeReport,
}

fn oracle_report(
    cfg: &RunConfig,
    tr: &Trace,
    plant: &PlantSpec,
    dir: &Path,
    name: &str,
) -> Result<OracleReport, CliError> {
    let penalty = cfg
        .penalty
        .unwrap_or_else(|| default_penalty(tr.max_price(), plant.chiller.capacity));
    let table = oracle::dp_solve_with(
        tr,
        plant,
        cfg.oracle.soc_nodes,
        &cfg.train.grid,
        penalty,
        cfg.oracle.horizon_cap,
        Execution::Sequential,
    )?;
    let output = Output::create(dir)?;
    oracle::write_value_table(&table, output.writer("value_table.csv")?)?;
    let grid = table.grid;
    let optimal_cost = table.optimal_cost(cfg.e_init);
    let policy = OraclePolicy::new(table);
    let mut grid_rollouts = Vec::new();
    for p in [&policy as &dyn Policy, &Greedy, &Tfp, &Sdpp] {
        grid_rollouts.push(NamedRollout {
            policy: p.name().to_string(),
            rollout: oracle::grid_rollout(p, tr, plant, &grid, cfg.e_init, penalty)?,
        });
    }
    let episode = env::run_episode(&policy, tr, plant, cfg.e_init, false)?;
    let report = OracleReport {
        soc_nodes: grid.nodes,
        penalty,
        e_init: cfg.e_init,
        optimal_cost,
        grid_rollouts,
        episode,
    };
    output.json("oracle.json", &report)?;
    output.provenance(name, cfg)?;
    Ok(report)
}

#[derive(Debug, Deserialize)]
struct LccRow {
    c_ch: f64,
    e_max: f64,
    f_elec: f64,
    #[serde(default)]
    total_lol: Option<f64>,
}

fn read_lcc_input(path: &Path) -> Result<Vec<LccRow>, CliError> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    reader
        .deserialize()
        .enumerate()
        .map(|(i, row)| {
            row.map_err(|e| CliError::Data(format!("{} row {}: {e}", path.display(), i + 1)))
        })
        .collect()
}

fn finish_sizing(
    cli: &Cli,
    cfg: &RunConfig,
    name: &str,
    results: Vec<SizingResult>,
    stem: &str,
) -> Result<(), CliError> {
    let output = Output::create(&cli.out_dir)?;
    sizing::write_sweep_csv(&results, output.writer(&format!("{stem}.csv"))?)?;
    let summary = SweepSummary::new(results);
    output.json(&format!("{stem}_summary.json"), &summary)?;
    output.provenance(name, cfg)?;
    emit(cli.pretty, &summary, || sizing_table(&summary));
    sizing::select_optimal(&summary.results)?;
    Ok(())
}

fn report_table(reports: &[EpisodeReport]) -> String {
    let mut s = format!(
        "{:<8} {:>6} {:>16} {:>12} {:>10} {:>14}\n",
        "policy", "steps", "f_elec", "total_lol", "lol_hours", "tes_throughput"
    );
    for r in reports {
        s += &format!(
            "{:<8} {:>6} {:>16.2} {:>12.3} {:>10} {:>14.1}\n",
            r.policy, r.steps, r.f_elec, r.total_lol, r.lol_incidents, r.tes_throughput
        );
    }
    s
}

fn sizing_table(summary: &SweepSummary) -> String {
    let mut s = format!(
        "{:>8} {:>8} {:>14} {:>14} {:>12} {:>16} {:>16} {:>9}\n",
        "c_ch", "e_max", "capex", "f_elec", "total_lol", "opex", "lcc", "feasible"
    );
    for r in &summary.results {
        let mark = summary
            .optimum
            .as_ref()
            .is_some_and(|o| o.c_ch == r.c_ch && o.e_max == r.e_max);
        s += &format!(
            "{:>8} {:>8} {:>14.0} {:>14.0} {:>12.3} {:>16.0} {:>16.0} {:>9}{}\n",
            r.c_ch,
            r.e_max,
            r.capex_total(),
            r.f_elec,
            r.total_lol,
            r.opex,
            r.lcc,
            r.feasible,
            if mark { "  *" } else { "" }
        );
    }
    s
}
