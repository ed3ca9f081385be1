//! Command-line front end: `analyze`, `simulate`, `sweep` and `report`.
//!
//! Exit status is 0 on success, 2 for usage and validation errors, 3 when a
//! simulation hits its tick or event limit, and 4 for I/O failures.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, BufWriter};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use thiserror::Error;

use crate::analytics::{self, AnalyticsError, Clamped, FormulaMode, LinkFormula};
use crate::config::{ConfigError, PowerSource, RunConfig};
use crate::engine::{self, SimError, SimReport};
use crate::power::{self, Activity, PowerError};
use crate::routing::Routing;
use crate::traffic::{self, Population};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_TIMEOUT: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "spikenoc", version, about = "Spike traffic analysis and simulation for neuromorphic networks-on-chip")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Run configuration (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Comma-separated injection rates in spikes/neuron/tick.
    #[arg(long, global = true, value_delimiter = ',', value_name = "LIST")]
    pub rates: Option<Vec<f64>>,
    /// Formula variant reported in the `selected` column.
    #[arg(long, global = true, value_name = "MODE")]
    pub mode: Option<FormulaMode>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Evaluate the closed-form model into analysis.csv.
    Analyze,
    /// Run one simulation into deliveries.csv, links.csv and summary.csv.
    Simulate,
    /// Run a Poisson load sweep into sweep.csv.
    Sweep,
    /// Turn a prior simulation's summary.csv into power.csv.
    Report,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
    #[error(transparent)]
    Power(#[from] PowerError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {reason}")]
    Input { path: PathBuf, reason: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(ConfigError::Io { .. }) | CliError::Io { .. } | CliError::Input { .. } => EXIT_IO,
            CliError::Sim(SimError::Timeout { .. } | SimError::EventLimit(_)) => EXIT_TIMEOUT,
            _ => EXIT_USAGE,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> CliError + '_ {
    move |e| CliError::Io {
        path: path.to_path_buf(),
        source: e.into(),
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the exit status. Messages go to stdout/stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok(written) => {
            for p in written {
                println!("wrote {}", p.display());
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Runs the parsed command and returns the files it wrote.
pub fn execute(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Usage("--config PATH is required".into()))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&out).map_err(io_err(&out))?;
    match cli.command {
        Command::Analyze => {
            let mode = cli.mode.unwrap_or_else(|| cfg.analytics.as_ref().map_or(FormulaMode::PaperLiteral, |a| a.mode));
            let rows = analysis_rows(&cfg)?;
            let p = out.join("analysis.csv");
            write_analysis_csv(&rows, mode, create(&p)?).map_err(csv_err(&p))?;
            Ok(vec![p])
        }
        Command::Simulate => simulate(&cfg, &out),
        Command::Sweep => {
            let rates = match (&cli.rates, &cfg.sweep) {
                (Some(r), _) => r.clone(),
                (None, Some(s)) => s.rates.clone(),
                (None, None) => return Err(CliError::Usage("sweep needs --rates or a [sweep] section".into())),
            };
            let t = cfg.build_topology()?;
            let spec = cfg.workload_spec()?;
            let rows = engine::load_sweep(&t, Routing::for_topology(&t), &rates, &spec, cfg.sim_limits())?;
            let p = out.join("sweep.csv");
            engine::write_sweep_csv(&rows, create(&p)?).map_err(csv_err(&p))?;
            Ok(vec![p])
        }
        Command::Report => report(&cfg, &out),
    }
}

fn create(p: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(p).map(BufWriter::new).map_err(io_err(p))
}

/// Builds the run described by `cfg` and simulates it.
pub fn run_config(cfg: &RunConfig) -> Result<SimReport, CliError> {
    let t = cfg.build_topology()?;
    let spec = cfg.workload_spec()?;
    let population = Population::from_topology(&t);
    let table = cfg.routing_table(population.len())?;
    let trace = cfg.trace()?;
    let events = traffic::generate(&spec, &population, table.as_ref(), trace.as_deref()).map_err(SimError::from)?;
    Ok(engine::run(&t, Routing::for_topology(&t), events, cfg.sim_limits())?)
}

fn write_report(report: &SimReport, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let files = [out.join("deliveries.csv"), out.join("links.csv"), out.join("summary.csv")];
    engine::write_deliveries_csv(report, create(&files[0])?).map_err(csv_err(&files[0]))?;
    engine::write_links_csv(report, create(&files[1])?).map_err(csv_err(&files[1]))?;
    engine::write_summary_csv(&report.summary(), create(&files[2])?).map_err(csv_err(&files[2]))?;
    Ok(files.to_vec())
}

fn simulate(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    match run_config(cfg) {
        Ok(report) => write_report(&report, out),
        Err(CliError::Sim(SimError::Timeout {
            max_ticks,
            in_flight,
            partial,
        })) => {
            write_report(&partial, out)?;
            Err(SimError::Timeout {
                max_ticks,
                in_flight,
                partial,
            }
            .into())
        }
        Err(e) => Err(e),
    }
}

/// Fields of summary.csv the power report needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryInput {
    pub injected: u64,
    pub hop_traversals: u64,
    pub duration_ticks: u64,
    pub routers: usize,
    pub clusters: usize,
}

pub fn read_summary(path: &Path) -> Result<SummaryInput, CliError> {
    let bad = |reason: String| CliError::Input {
        path: path.to_path_buf(),
        reason,
    };
    let file = File::open(path).map_err(|e| bad(format!("missing simulation output ({e}); run `simulate` first")))?;
    let mut rdr = csv::Reader::from_reader(file);
    let headers = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
    let record = rdr
        .records()
        .next()
        .ok_or_else(|| bad("no data row".into()))?
        .map_err(|e| bad(e.to_string()))?;
    let field = |name: &str| -> Result<u64, CliError> {
        let i = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| bad(format!("no {name} column")))?;
        record[i].parse().map_err(|e| bad(format!("{name}: {e}")))
    };
    Ok(SummaryInput {
        injected: field("injected")?,
        hop_traversals: field("hop_traversals")?,
        duration_ticks: field("duration_ticks")?,
        routers: field("routers")? as usize,
        clusters: field("clusters")? as usize,
    })
}

fn report(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let source = cfg.power_source()?;
    let s = read_summary(&out.join("summary.csv"))?;
    let tick_s = cfg
        .workload
        .as_ref()
        .map_or(traffic::WorkloadSpec::default().tick_duration_s, |w| w.tick_duration_s);
    let duration_s = s.duration_ticks as f64 * tick_s;
    let activity = Activity {
        router_traversals: s.hop_traversals as f64,
        link_traversals: s.hop_traversals as f64,
        spikes: s.injected as f64,
        routers: s.routers,
        clusters: s.clusters,
    };
    let model = match source {
        PowerSource::Model(m) => m,
        PowerSource::Calibrate(target) => power::calibrate_to_shares(&activity, duration_s, &target)?,
    };
    let breakdown = power::estimate(&activity, &model, duration_s)?;
    let d_scales = cfg.power.as_ref().map(|p| p.d_scales.clone()).unwrap_or_default();
    let sens = d_scales
        .iter()
        .map(|&d| power::hop_energy_sensitivity(&activity, &model, duration_s, d))
        .collect::<Result<Vec<_>, _>>()?;
    let p = out.join("power.csv");
    power::write_breakdown_csv(&breakdown, &sens, create(&p)?).map_err(csv_err(&p))?;
    Ok(vec![p])
}

/// One closed-form result under both formula variants.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisRow {
    pub formula: &'static str,
    pub inputs: String,
    pub paper_literal: f64,
    pub rederived: f64,
    pub paper_literal_degenerate: bool,
    pub rederived_degenerate: bool,
}

impl AnalysisRow {
    fn same(formula: &'static str, inputs: String, v: f64) -> Self {
        Self {
            formula,
            inputs,
            paper_literal: v,
            rederived: v,
            paper_literal_degenerate: false,
            rederived_degenerate: false,
        }
    }

    fn split(formula: &'static str, inputs: String, lit: Clamped, red: Clamped) -> Self {
        Self {
            formula,
            inputs,
            paper_literal: lit.value,
            rederived: red.value,
            paper_literal_degenerate: lit.degenerate,
            rederived_degenerate: red.degenerate,
        }
    }

    pub fn selected(&self, mode: FormulaMode) -> f64 {
        match mode {
            FormulaMode::PaperLiteral => self.paper_literal,
            FormulaMode::Rederived => self.rederived,
        }
    }
}

pub fn analysis_rows(cfg: &RunConfig) -> Result<Vec<AnalysisRow>, CliError> {
    let a = cfg
        .analytics
        .as_ref()
        .ok_or(ConfigError::Missing("analytics"))?;
    let p = cfg.system_params()?;
    let ns = format!("N={};S={}", p.n_neurons, p.synapses_per_neuron);
    let nsk = format!("{ns};k={}", p.synapse_types);
    let bits = analytics::routing_memory_bits(&p)?;
    let ceil_bits = analytics::routing_memory_bits_ceil(&p)?;
    let mut rows = vec![
        AnalysisRow::same("routing_memory_bits", ns.clone(), bits),
        AnalysisRow::same("routing_memory_gib", ns.clone(), analytics::bits_to_gib(bits)),
        AnalysisRow::same(
            "routing_memory_kib_per_neuron",
            ns.clone(),
            analytics::bits_per_neuron_kib(bits, p.n_neurons),
        ),
        AnalysisRow::same("routing_memory_bits_ceil", ns, ceil_bits),
        AnalysisRow::same("routing_memory_bits_typed", nsk.clone(), analytics::routing_memory_bits_typed(&p)?),
        AnalysisRow::same("reduction_factor", nsk, analytics::reduction_factor(&p)?),
    ];
    let nr = format!("N={};R={};alpha={}", p.n_neurons, p.firing_rate_hz, a.locality);
    rows.push(AnalysisRow::same(
        "conventional_min_bisection",
        nr.clone(),
        analytics::conventional_min_bisection(&p, a.locality)?,
    ));
    if let Some(c) = a.bisection_links {
        let inputs = format!("{nr};C={c};eps={}", p.temporal_precision_s);
        let lit = analytics::latency_constrained_min_bisection(&p, c, a.locality, FormulaMode::PaperLiteral)?;
        let red = analytics::latency_constrained_min_bisection(&p, c, a.locality, FormulaMode::Rederived)?;
        rows.push(AnalysisRow::split("latency_constrained_min_bisection", inputs, lit, red));
    }
    if let Some(bp) = a.bisection() {
        let inputs = format!(
            "{nr};C={};o={};l={}",
            bp.bisection_links, bp.link_occupancy_s, bp.base_latency_s
        );
        let last = analytics::last_packet_latency(&p, &bp)?;
        rows.push(AnalysisRow::split("last_packet_latency_s", inputs.clone(), last, last));
        let jitter = analytics::arrival_jitter_bound(&p, &bp)?;
        rows.push(AnalysisRow::split("arrival_jitter_bound_s", inputs, jitter, jitter));
    }
    if let Some(lp) = a.link() {
        let inputs = format!(
            "Nc={};R={};d={};r={};eps={}",
            lp.cluster_external_neurons, p.firing_rate_hz, lp.mean_hops, lp.router_degree, p.temporal_precision_s
        );
        rows.push(AnalysisRow::same("link_traffic", inputs.clone(), analytics::link_traffic(&lp, &p)?));
        let lit = analytics::link_bandwidth_requirement(&lp, &p, LinkFormula::PaperLiteralConstrained)?;
        let red = analytics::link_bandwidth_requirement(&lp, &p, LinkFormula::RederivedConstrained)?;
        rows.push(AnalysisRow::split("link_bandwidth_requirement", inputs.clone(), lit, red));
        let conv = analytics::link_bandwidth_requirement(&lp, &p, LinkFormula::Conventional)?;
        rows.push(AnalysisRow::split("link_bandwidth_conventional", inputs, conv, conv));
    }
    if let Some(tech) = a.memory_tech() {
        let b = ceil_bits as u64;
        rows.push(AnalysisRow::same(
            "effective_memory_area",
            format!("bits={b};bit_area={}", tech.bit_area),
            analytics::effective_memory_area(b, &tech)?,
        ));
    }
    Ok(rows)
}

/// `formula,inputs,paper_literal,rederived,paper_literal_degenerate,rederived_degenerate,selected`
pub fn write_analysis_csv<W: io::Write>(rows: &[AnalysisRow], mode: FormulaMode, w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "formula",
        "inputs",
        "paper_literal",
        "rederived",
        "paper_literal_degenerate",
        "rederived_degenerate",
        "selected",
    ])?;
    for r in rows {
        out.write_record([
            r.formula.to_string(),
            r.inputs.clone(),
            r.paper_literal.to_string(),
            r.rederived.to_string(),
            r.paper_literal_degenerate.to_string(),
            r.rederived_degenerate.to_string(),
            r.selected(mode).to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_parse_in_any_position() {
        let cli = Cli::try_parse_from([
            "spikenoc", "--config", "a.toml", "sweep", "--rates", "0.0001,0.001", "--seed", "3",
        ])
        .unwrap();
        assert_eq!(cli.command, Command::Sweep);
        assert_eq!(cli.rates, Some(vec![1e-4, 1e-3]));
        assert_eq!(cli.seed, Some(3));
        let cli = Cli::try_parse_from(["spikenoc", "analyze", "--mode", "rederived", "--config", "a.toml"]).unwrap();
        assert_eq!(cli.mode, Some(FormulaMode::Rederived));
    }

    #[test]
    fn bad_flags_are_usage_errors() {
        assert_eq!(main_with_args(["spikenoc", "analyze", "--mode", "fuzzy"]), EXIT_USAGE);
        assert_eq!(main_with_args(["spikenoc", "launch"]), EXIT_USAGE);
        assert_eq!(main_with_args(["spikenoc", "analyze"]), EXIT_USAGE);
    }

    #[test]
    fn single_type_typed_row_is_lg_n() {
        let cfg = RunConfig::parse(
            "[analytics]\nn_neurons = 4096\nsynapses_per_neuron = 100\nsynapse_types = 1\nfiring_rate_hz = 10.0\n",
        )
        .unwrap();
        let rows = analysis_rows(&cfg).unwrap();
        let get = |f: &str| rows.iter().find(|r| r.formula == f).unwrap().paper_literal;
        assert_eq!(get("routing_memory_bits_typed"), 4096.0 * 100.0 * 12.0);
        assert!(get("reduction_factor") > 1.0);
    }
}
