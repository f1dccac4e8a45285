//! The `mfdgp` command line.
//!
//! Exit codes: 0 success, 2 configuration or usage error, 3 objective or
//! simulation failure, 4 corrupt results log.

mod config;
mod log;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

pub use config::{AcquisitionSection, CampaignConfig, CampaignSection, ObjectiveSection, OutputSection, TEMPLATE};
pub use log::{parse_log, read_log, LogContents, LogError, LogLine, LogWriter, Summary, LOG_FILE};

use crate::bo::{recommend, Campaign, CampaignState, EvaluationRecord, Phase};
use crate::error::Error;
use crate::objectives::{fit_tanks_in_series, MultiFidelityObjective, ReactorGeometry, ReactorProxy};
use crate::rng;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_OBJECTIVE: i32 = 3;
pub const EXIT_CORRUPT_LOG: i32 = 4;

pub const DEFAULT_CONFIG: &str = "mfdgp.toml";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("objective failure: {0}")]
    Objective(String),
    #[error("corrupt results log: {0}")]
    CorruptLog(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => EXIT_CONFIG,
            Self::Objective(_) => EXIT_OBJECTIVE,
            Self::CorruptLog(_) => EXIT_CORRUPT_LOG,
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Config(format!("{}: {e}", path.display()))
}

fn objective_err(e: Error) -> CliError {
    CliError::Objective(e.to_string())
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "mfdgp", version, about = "Multi-fidelity Bayesian optimization with deep GP surrogates")]
pub struct Cli {
    /// Campaign configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true, value_name = "INT")]
    pub seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Overwrite existing files.
    #[arg(long, global = true)]
    pub force: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a commented template configuration.
    Init {
        /// Destination (defaults to --config, then mfdgp.toml).
        path: Option<PathBuf>,
    },
    /// Run a campaign from a configuration.
    Run,
    /// Continue a logged campaign with extra budget.
    Resume {
        /// Results log (defaults to <out>/results.jsonl).
        log: Option<PathBuf>,
        #[arg(long, default_value_t = 0.0, value_name = "COST")]
        extra_budget: f64,
    },
    /// Simulate every fidelity of the reactor proxy at one geometry.
    ValidateFidelity {
        /// Coil radius, tube radius, pitch, inversion fraction.
        #[arg(long, value_delimiter = ',', value_name = "RC,RT,P,S", allow_negative_numbers = true)]
        geometry: Option<Vec<f64>>,
    },
    /// Convergence and fidelity-timeline CSVs from a results log.
    Report {
        /// Results log (defaults to <out>/results.jsonl).
        log: Option<PathBuf>,
    },
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("mfdgp: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Init { path } => {
            let path = path
                .clone()
                .or_else(|| cli.config.clone())
                .unwrap_or_else(|| PathBuf::from(DEFAULT_CONFIG));
            cmd_init(&path, cli.force)
        }
        Command::Run => {
            let cfg = load_config(cli)?;
            cmd_run(&cfg, cli.force)
        }
        Command::Resume { log, extra_budget } => {
            let path = log_path(cli, log.as_deref())?;
            cmd_resume(&path, *extra_budget, cli.seed, cli.out.as_deref())
        }
        Command::ValidateFidelity { geometry } => {
            let cfg = match &cli.config {
                Some(_) => load_config(cli)?,
                None => {
                    let mut cfg = CampaignConfig::default();
                    cfg.objective.name = "reactor-proxy".into();
                    apply_overrides(&mut cfg, cli);
                    cfg
                }
            };
            let geom = match geometry {
                Some(g) => ReactorGeometry::from_design(g, ReactorGeometry::default().total_volume)
                    .map_err(|e| CliError::Config(e.to_string()))?,
                None => ReactorGeometry::default(),
            };
            cmd_validate_fidelity(&cfg, &geom, cli.force)
        }
        Command::Report { log } => {
            let path = log_path(cli, log.as_deref())?;
            let out = cli
                .out
                .clone()
                .unwrap_or_else(|| path.parent().map(Path::to_path_buf).unwrap_or_default());
            cmd_report(&path, &out)
        }
    }
}

fn apply_overrides(cfg: &mut CampaignConfig, cli: &Cli) {
    if let Some(seed) = cli.seed {
        cfg.campaign.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
}

fn load_config(cli: &Cli) -> CliResult<CampaignConfig> {
    let path = cli.config.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_CONFIG));
    let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
    let mut cfg = CampaignConfig::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    apply_overrides(&mut cfg, cli);
    cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(cfg)
}

fn log_path(cli: &Cli, explicit: Option<&Path>) -> CliResult<PathBuf> {
    if let Some(p) = explicit {
        return Ok(p.to_path_buf());
    }
    if let Some(out) = &cli.out {
        return Ok(out.join(LOG_FILE));
    }
    if cli.config.is_some() {
        return Ok(load_config(cli)?.output.dir.join(LOG_FILE));
    }
    Err(CliError::Config("no results log given (pass a path or --out)".into()))
}

fn write_new(path: &Path, contents: &str, force: bool) -> CliResult<()> {
    if path.exists() && !force {
        return Err(CliError::Config(format!("{} exists (use --force to overwrite)", path.display())));
    }
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

pub fn cmd_init(path: &Path, force: bool) -> CliResult<()> {
    write_new(path, TEMPLATE, force)
}

fn prepare_out_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

/// Writes log lines while the campaign runs; remembers the first I/O error.
struct Streamer {
    writer: LogWriter,
    path: PathBuf,
    error: Option<std::io::Error>,
}

impl Streamer {
    fn write(&mut self, line: &LogLine) {
        if self.error.is_none() {
            if let Err(e) = self.writer.write(line) {
                self.error = Some(e);
            }
        }
    }

    fn check(&mut self) -> CliResult<()> {
        match self.error.take() {
            Some(e) => Err(io_err(&self.path, e)),
            None => Ok(()),
        }
    }
}

pub fn cmd_run(cfg: &CampaignConfig, force: bool) -> CliResult<()> {
    let objective = cfg.objective().map_err(|e| CliError::Config(e.to_string()))?;
    cmd_run_with(cfg, objective.as_ref(), force)
}

/// `run` against a caller-supplied objective; the config's objective section
/// still provides the design box and ladder checks.
pub fn cmd_run_with(cfg: &CampaignConfig, objective: &dyn MultiFidelityObjective, force: bool) -> CliResult<()> {
    let space = cfg
        .space(objective)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let dir = &cfg.output.dir;
    prepare_out_dir(dir)?;
    let path = dir.join(LOG_FILE);
    if path.exists() && !force {
        return Err(CliError::Config(format!(
            "{} exists (use --force or resume)",
            path.display()
        )));
    }
    let mut streamer = Streamer {
        writer: LogWriter::create(&path).map_err(|e| io_err(&path, e))?,
        path: path.clone(),
        error: None,
    };
    streamer.write(&LogLine::header(cfg));
    let init = Campaign::initialize(objective, space, cfg.settings(), &mut |r| {
        streamer.write(&LogLine::Record(r.clone()))
    });
    streamer.check()?;
    let campaign = init.map_err(objective_err)?;
    continue_campaign(campaign, cfg, &mut streamer)
}

fn continue_campaign(mut campaign: Campaign<'_>, cfg: &CampaignConfig, streamer: &mut Streamer) -> CliResult<()> {
    let outcome = campaign.run_to_budget(&mut |r| streamer.write(&LogLine::Record(r.clone())));
    streamer.check()?;
    if let Err(e) = outcome {
        if let Some(f) = &campaign.state().failure {
            streamer.write(&LogLine::Failure(f.clone()));
        }
        let summary = summarize(&campaign, cfg, false);
        streamer.write(&LogLine::Summary(summary.clone()));
        streamer.check()?;
        write_summary(&cfg.output.dir, cfg, campaign.state(), &summary)?;
        return Err(objective_err(e));
    }
    let summary = summarize(&campaign, cfg, true);
    streamer.write(&LogLine::Summary(summary.clone()));
    streamer.check()?;
    write_summary(&cfg.output.dir, cfg, campaign.state(), &summary)
}

/// Final ledger summary. With `with_model`, trains a last surrogate, saves it
/// and reports the maximizer of its top-level mean.
fn summarize(campaign: &Campaign<'_>, cfg: &CampaignConfig, with_model: bool) -> Summary {
    let state = campaign.state();
    let mut summary = Summary {
        budget_total: state.budget_total,
        budget_spent: state.budget_spent,
        per_level_counts: state.per_level_counts(),
        incumbent: state.incumbent.clone(),
        model_best: None,
        model_best_mean: None,
        model_best_sigma: None,
    };
    if !with_model {
        return summary;
    }
    let seed = cfg.campaign.seed;
    let index = state.records.len() as u64;
    let Ok(model) = campaign.train_model(rng::substream(seed, "final-fit", index)) else {
        return summary;
    };
    let _ = model.save(&cfg.output.dir.join("model.json"));
    if let Ok(rec) = recommend(
        state,
        &model,
        campaign.space(),
        &campaign.settings().ucb,
        rng::substream(seed, "final-acquisition", index),
    ) {
        let report = model.with_propagation_samples(cfg.model.report_samples);
        if let Ok((m, s)) = report.predict_level(&rec.model_best, report.num_levels(), rng::substream(seed, "report", index)) {
            summary.model_best_mean = Some(m);
            summary.model_best_sigma = Some(s);
        }
        summary.model_best = Some(rec.model_best);
    }
    summary
}

#[derive(Serialize)]
struct SummaryFile<'a> {
    objective: &'a str,
    seed: u64,
    budget_total: f64,
    budget_spent: f64,
    records: usize,
    loop_iterations: usize,
    per_level_counts: &'a [usize],
    #[serde(skip_serializing_if = "Option::is_none")]
    incumbent_x: Option<&'a [f64]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    incumbent_y: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    model_best_x: Option<&'a [f64]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    model_best_mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    model_best_sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    failure: Option<&'a str>,
}

fn write_summary(dir: &Path, cfg: &CampaignConfig, state: &CampaignState, summary: &Summary) -> CliResult<()> {
    let file = SummaryFile {
        objective: &cfg.objective.name,
        seed: cfg.campaign.seed,
        budget_total: state.budget_total,
        budget_spent: state.budget_spent,
        records: state.records.len(),
        loop_iterations: state.loop_iterations(),
        per_level_counts: &summary.per_level_counts,
        incumbent_x: summary.incumbent.as_ref().map(|r| r.x.as_slice()),
        incumbent_y: summary.incumbent.as_ref().map(|r| r.y),
        model_best_x: summary.model_best.as_deref(),
        model_best_mean: summary.model_best_mean,
        model_best_sigma: summary.model_best_sigma,
        failure: state.failure.as_ref().map(|f| f.message.as_str()),
    };
    let text = toml::to_string(&file).expect("summary serializes");
    let path = dir.join("summary.txt");
    fs::write(&path, text).map_err(|e| io_err(&path, e))
}

fn read_log_checked(path: &Path) -> CliResult<(LogContents, CampaignState)> {
    let contents = read_log(path).map_err(|e| match e {
        LogError::Io { .. } => CliError::Config(e.to_string()),
        LogError::Corrupt { .. } => CliError::CorruptLog(format!("{}: {e}", path.display())),
    })?;
    let levels = contents.config.objective.fidelities.len();
    let state = contents
        .replay(levels)
        .map_err(|e| CliError::CorruptLog(format!("{}: {e}", path.display())))?;
    Ok((contents, state))
}

pub fn cmd_resume(path: &Path, extra_budget: f64, seed: Option<u64>, out: Option<&Path>) -> CliResult<()> {
    if !(extra_budget.is_finite() && extra_budget >= 0.0) {
        return Err(CliError::Config(format!("extra budget must be >= 0, got {extra_budget}")));
    }
    let (contents, mut state) = read_log_checked(path)?;
    let mut cfg = contents.config.clone();
    if seed.is_some_and(|s| s != cfg.campaign.seed) {
        return Err(CliError::Config(format!(
            "--seed differs from the logged seed {}",
            cfg.campaign.seed
        )));
    }
    cfg.output.dir = match out {
        Some(o) => o.to_path_buf(),
        None => path.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    prepare_out_dir(&cfg.output.dir)?;
    let objective = cfg.objective().map_err(|e| CliError::Config(e.to_string()))?;
    let space = cfg
        .space(objective.as_ref())
        .map_err(|e| CliError::Config(e.to_string()))?;
    let mut streamer = Streamer {
        writer: LogWriter::append(path).map_err(|e| io_err(path, e))?,
        path: path.to_path_buf(),
        error: None,
    };
    let budget_total = contents.budget_total + extra_budget;
    if extra_budget > 0.0 {
        streamer.write(&LogLine::Extend {
            extra: extra_budget,
            budget_total,
        });
        streamer.check()?;
    }
    state.budget_total = budget_total;
    state.failure = None;
    let mut settings = cfg.settings();
    settings.budget_total = budget_total;
    let campaign = Campaign::from_state(objective.as_ref(), space, settings, state)
        .map_err(|e| CliError::CorruptLog(e.to_string()))?;
    if campaign.state().budget_exhausted() && extra_budget == 0.0 {
        return Ok(());
    }
    continue_campaign(campaign, &cfg, &mut streamer)
}

/// One row per fidelity level.
#[derive(Clone, Debug, PartialEq)]
pub struct FidelityRow {
    pub level: usize,
    pub cells: usize,
    pub n_tanks: f64,
    pub cost: f64,
}

pub fn fidelity_sweep(proxy: &ReactorProxy, geom: &ReactorGeometry) -> crate::Result<Vec<(FidelityRow, crate::objectives::RtdCurve)>> {
    proxy
        .ladder()
        .levels()
        .map(|l| {
            let (curve, cost) = proxy.simulate(geom, l.index)?;
            let fit = fit_tanks_in_series(&curve)?;
            Ok((
                FidelityRow {
                    level: l.index,
                    cells: proxy.cells(l.index)?,
                    n_tanks: fit.n_tanks,
                    cost,
                },
                curve,
            ))
        })
        .collect()
}

pub fn cmd_validate_fidelity(cfg: &CampaignConfig, geom: &ReactorGeometry, force: bool) -> CliResult<()> {
    if cfg.objective.name != "reactor-proxy" {
        return Err(CliError::Config(format!(
            "validate-fidelity needs the reactor-proxy objective, config names {}",
            cfg.objective.name
        )));
    }
    let mut proxy = ReactorProxy::new(cfg.campaign.seed)
        .with_ladder(cfg.ladder().map_err(|e| CliError::Config(e.to_string()))?)
        .map_err(|e| CliError::Config(e.to_string()))?;
    if !cfg.objective.base_costs.is_empty() {
        proxy = proxy
            .with_base_costs(cfg.objective.base_costs.clone())
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let rows = fidelity_sweep(&proxy, geom).map_err(objective_err)?;
    let dir = &cfg.output.dir;
    prepare_out_dir(dir)?;
    let mut table = String::from("level,cells,n_tanks,cost\n");
    for (row, curve) in &rows {
        writeln!(table, "{},{},{},{}", row.level, row.cells, row.n_tanks, row.cost).unwrap();
        let mut buf = Vec::new();
        curve.write_csv(&mut buf).expect("writing to memory");
        let path = dir.join(format!("rtd_level{}.csv", row.level));
        write_new(&path, std::str::from_utf8(&buf).unwrap(), force)?;
    }
    write_new(&dir.join("fidelity_table.csv"), &table, force)
}

/// Incumbent after the initial design (iteration 0) and after each loop iteration.
pub fn convergence_rows(records: &[EvaluationRecord], top_level: usize) -> Vec<(usize, f64, f64)> {
    let mut rows = Vec::new();
    let mut spent = 0.0;
    let mut best = f64::NEG_INFINITY;
    for (i, r) in records.iter().enumerate() {
        spent += r.cost;
        if r.level == top_level {
            best = best.max(r.y);
        }
        let last_of_iteration = records.get(i + 1).is_none_or(|next| next.iteration != r.iteration);
        if last_of_iteration {
            rows.push((r.iteration, spent, best));
        }
    }
    rows
}

pub fn cmd_report(path: &Path, out: &Path) -> CliResult<()> {
    let (contents, state) = read_log_checked(path)?;
    prepare_out_dir(out)?;
    let mut conv = String::from("iteration,cumulative_cost,incumbent\n");
    for (it, cost, best) in convergence_rows(&state.records, state.num_levels) {
        writeln!(conv, "{it},{cost},{best}").unwrap();
    }
    let mut timeline = String::from("iteration,level,cost\n");
    for r in state.records.iter().filter(|r| r.phase == Phase::BoLoop) {
        writeln!(timeline, "{},{},{}", r.iteration, r.level, r.cost).unwrap();
    }
    for (name, text) in [("convergence.csv", conv), ("fidelity_timeline.csv", timeline)] {
        let p = out.join(name);
        fs::write(&p, text).map_err(|e| io_err(&p, e))?;
    }
    let mut summary = contents.summary.clone().unwrap_or(Summary {
        budget_total: state.budget_total,
        budget_spent: state.budget_spent,
        per_level_counts: state.per_level_counts(),
        incumbent: state.incumbent.clone(),
        model_best: None,
        model_best_mean: None,
        model_best_sigma: None,
    });
    // A summary written before later records would be stale.
    if summary.budget_spent != state.budget_spent {
        summary = Summary {
            budget_total: state.budget_total,
            budget_spent: state.budget_spent,
            per_level_counts: state.per_level_counts(),
            incumbent: state.incumbent.clone(),
            model_best: None,
            model_best_mean: None,
            model_best_sigma: None,
        };
    }
    write_summary(out, &contents.config, &state, &summary)
}

/// Parses a CSV written by this tool: header plus numeric rows of equal width.
pub fn read_numeric_csv(text: &str) -> crate::Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::Input("empty CSV".into()))?
        .split(',')
        .map(str::to_owned)
        .collect();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let row: Vec<f64> = line
            .split(',')
            .map(|c| c.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Input(format!("CSV row {}: {e}", i + 2)))?;
        if row.len() != header.len() {
            return Err(Error::Input(format!("CSV row {} has {} columns, header has {}", i + 2, row.len(), header.len())));
        }
        rows.push(row);
    }
    Ok((header, rows))
}

/// Convenience for library callers: the objective a config describes.
pub fn objective_from_config(cfg: &CampaignConfig) -> crate::Result<Box<dyn MultiFidelityObjective>> {
    cfg.objective()
}
