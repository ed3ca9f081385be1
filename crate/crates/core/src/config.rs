//! Run configuration files.
//!
//! A config is TOML with optional `[topology]`, `[workload]`, `[limits]`,
//! `[analytics]`, `[power]` and `[sweep]` tables plus top-level `seed` and
//! `output_dir`. Unknown keys are rejected. Relative paths inside the file
//! resolve against the file's directory.
//!
//! ```toml
//! seed = 7
//! output_dir = "out"
//!
//! [topology]
//! kind = "mesh"          # mesh | torus | tree | hierarchical | file
//! width = 4
//! height = 4
//! service_ticks = 1
//! pipeline_ticks = 1
//! neurons_per_cluster = 1
//!
//! [workload]
//! kind = "poisson"       # poisson | burst | replay
//! rate_hz = 10.0
//! duration_ticks = 1000
//! tick_duration_s = 1e-3
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::{AnalyticsError, BisectionParams, FormulaMode, LinkParams, MemoryTechParams, SystemParams};
use crate::engine::SimLimits;
use crate::power::{PowerModel, ShareTarget};
use crate::routing::{AddressScheme, RoutingTable};
use crate::topology::{self, LinkTiming, Topology};
use crate::traffic::{BurstPairing, DestinationMode, WorkloadKind, WorkloadSpec};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Parse(String),
    #[error("{key}: {reason}")]
    Invalid { key: String, reason: String },
    #[error("config has no [{0}] section")]
    Missing(&'static str),
}

fn invalid(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyName {
    Mesh,
    Torus,
    Tree,
    Hierarchical,
    /// Read from `file` in the topology text format.
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySection {
    pub kind: TopologyName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<usize>,
    #[serde(default)]
    pub diagonals: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fanout: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leaves: Option<usize>,
    #[serde(default = "one")]
    pub service_ticks: u64,
    #[serde(default = "one")]
    pub pipeline_ticks: u64,
    #[serde(default = "one_u32")]
    pub neurons_per_cluster: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
}

fn one() -> u64 {
    1
}

fn one_u32() -> u32 {
    1
}

fn unit_locality() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadSection {
    pub kind: WorkloadKind,
    #[serde(default = "default_rate")]
    pub rate_hz: f64,
    #[serde(default = "default_duration")]
    pub duration_ticks: u64,
    #[serde(default = "default_tick")]
    pub tick_duration_s: f64,
    #[serde(default = "unit_locality")]
    pub locality: f64,
    #[serde(default)]
    pub burst_tick: u64,
    #[serde(default = "one_u32")]
    pub fanout: u32,
    #[serde(default)]
    pub destinations: DestinationMode,
    #[serde(default)]
    pub pairing: BurstPairing,
    /// Spike trace for replay workloads.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<PathBuf>,
    /// Per-neuron destination lists, one line per source neuron.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub connectivity: Option<PathBuf>,
}

fn default_rate() -> f64 {
    WorkloadSpec::default().rate_hz
}

fn default_duration() -> u64 {
    WorkloadSpec::default().duration_ticks
}

fn default_tick() -> f64 {
    WorkloadSpec::default().tick_duration_s
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitsSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_ticks: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_events: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemorySection {
    pub bit_area: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub efficiency_curve: Vec<(u64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyticsSection {
    pub n_neurons: u64,
    pub synapses_per_neuron: u64,
    #[serde(default = "one")]
    pub synapse_types: u64,
    pub firing_rate_hz: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temporal_precision_s: Option<f64>,
    #[serde(default = "unit_locality")]
    pub locality: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bisection_links: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub link_occupancy_s: Option<f64>,
    #[serde(default)]
    pub base_latency_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster_external_neurons: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub router_degree: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_hops: Option<f64>,
    #[serde(default = "default_mode")]
    pub mode: FormulaMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub memory: Option<MemorySection>,
}

fn default_mode() -> FormulaMode {
    FormulaMode::PaperLiteral
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerSection {
    /// `truenorth-table1` calibrates coefficients to the run's activity.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<PowerModel>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub d_scales: Vec<f64>,
}

pub const TABLE1_PRESET: &str = "truenorth-table1";

/// How the power section resolves to coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PowerSource {
    Model(PowerModel),
    Calibrate(ShareTarget),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub rates: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topology: Option<TopologySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workload: Option<WorkloadSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limits: Option<LimitsSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analytics: Option<AnalyticsSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power: Option<PowerSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunConfig {
    /// Parses and validates every present section.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = read(path)?;
        let mut cfg = Self::parse(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if let Some(t) = &self.topology {
            validate_topology(t)?;
        }
        if let Some(w) = &self.workload {
            self.workload_spec_of(w)
                .validate()
                .map_err(|e| invalid("workload", e.to_string()))?;
            if w.kind == WorkloadKind::Replay && w.trace.is_none() {
                return Err(invalid("workload.trace", "replay workloads need a trace file"));
            }
        }
        if let Some(l) = &self.limits {
            if l.max_events == Some(0) {
                return Err(invalid("limits.max_events", "must be >= 1"));
            }
        }
        if let Some(a) = &self.analytics {
            validate_analytics(a)?;
        }
        if let Some(p) = &self.power {
            self.power_source_of(p)?;
            if let Some(d) = p.d_scales.iter().find(|d| !(**d > 0.0 && d.is_finite())) {
                return Err(invalid("power.d_scales", format!("scale {d} must be positive")));
            }
        }
        if let Some(s) = &self.sweep {
            if s.rates.is_empty() {
                return Err(invalid("sweep.rates", "must list at least one rate"));
            }
            if s.rates.windows(2).any(|w| w[1] <= w[0]) {
                return Err(invalid("sweep.rates", "rates must be strictly ascending"));
            }
        }
        Ok(())
    }

    fn workload_spec_of(&self, w: &WorkloadSection) -> WorkloadSpec {
        WorkloadSpec {
            kind: w.kind,
            rate_hz: w.rate_hz,
            duration_ticks: w.duration_ticks,
            tick_duration_s: w.tick_duration_s,
            locality: w.locality,
            seed: self.seed,
            burst_tick: w.burst_tick,
            fanout: w.fanout,
            destinations: w.destinations,
            pairing: w.pairing,
        }
    }

    pub fn workload_spec(&self) -> Result<WorkloadSpec, ConfigError> {
        let w = self.workload.as_ref().ok_or(ConfigError::Missing("workload"))?;
        Ok(self.workload_spec_of(w))
    }

    pub fn build_topology(&self) -> Result<Topology, ConfigError> {
        let t = self.topology.as_ref().ok_or(ConfigError::Missing("topology"))?;
        let timing = LinkTiming {
            service_ticks: t.service_ticks,
            pipeline_ticks: t.pipeline_ticks,
        };
        let npc = t.neurons_per_cluster;
        let built = match t.kind {
            TopologyName::Mesh => topology::build_mesh(req(t.width, "topology.width")?, req(t.height, "topology.height")?, timing, npc),
            TopologyName::Torus => topology::build_torus(
                req(t.width, "topology.width")?,
                req(t.height, "topology.height")?,
                t.diagonals,
                timing,
                npc,
            ),
            TopologyName::Tree => topology::build_tree(req(t.fanout, "topology.fanout")?, req(t.leaves, "topology.leaves")?, timing, npc),
            TopologyName::Hierarchical => {
                topology::build_hierarchical(req(t.fanout, "topology.fanout")?, req(t.leaves, "topology.leaves")?, timing, npc)
            }
            TopologyName::File => {
                let path = self.resolve(t.file.as_deref().ok_or_else(|| invalid("topology.file", "required for kind = \"file\""))?);
                Topology::parse(&read(&path)?)
            }
        };
        built.map_err(|e| invalid("topology", e.to_string()))
    }

    pub fn routing_table(&self, population: u32) -> Result<Option<RoutingTable>, ConfigError> {
        let Some(path) = self.workload.as_ref().and_then(|w| w.connectivity.as_ref()) else {
            return Ok(None);
        };
        let text = read(&self.resolve(path))?;
        RoutingTable::parse(&text, population, AddressScheme::Flat)
            .map(Some)
            .map_err(|e| invalid("workload.connectivity", e.to_string()))
    }

    pub fn trace(&self) -> Result<Option<String>, ConfigError> {
        match self.workload.as_ref().and_then(|w| w.trace.as_ref()) {
            Some(p) => read(&self.resolve(p)).map(Some),
            None => Ok(None),
        }
    }

    /// Engine limits; the horizon is the Poisson window when there is one.
    pub fn sim_limits(&self) -> SimLimits {
        let mut lim = SimLimits::default();
        if let Some(l) = &self.limits {
            lim.max_ticks = l.max_ticks.unwrap_or(lim.max_ticks);
            lim.max_events = l.max_events.unwrap_or(lim.max_events);
        }
        if let Some(w) = &self.workload {
            if w.kind == WorkloadKind::Poisson {
                lim.horizon_ticks = w.duration_ticks;
            }
        }
        lim
    }

    pub fn system_params(&self) -> Result<SystemParams, ConfigError> {
        let a = self.analytics.as_ref().ok_or(ConfigError::Missing("analytics"))?;
        Ok(system_params_of(a))
    }

    pub fn power_source(&self) -> Result<PowerSource, ConfigError> {
        let p = self.power.as_ref().ok_or(ConfigError::Missing("power"))?;
        self.power_source_of(p)
    }

    fn power_source_of(&self, p: &PowerSection) -> Result<PowerSource, ConfigError> {
        match (&p.preset, &p.model) {
            (Some(_), Some(_)) => Err(invalid("power", "give either preset or model, not both")),
            (None, None) => Err(invalid("power", "needs a preset or a [power.model] table")),
            (Some(name), None) if name == TABLE1_PRESET => Ok(PowerSource::Calibrate(ShareTarget::TRUENORTH_TABLE1)),
            (Some(name), None) => Err(invalid("power.preset", format!("unknown preset {name:?}"))),
            (None, Some(m)) => {
                m.validate().map_err(|e| invalid("power.model", e.to_string()))?;
                Ok(PowerSource::Model(*m))
            }
        }
    }
}

fn read(path: &Path) -> Result<String, ConfigError> {
    fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn req<T: Copy>(v: Option<T>, key: &str) -> Result<T, ConfigError> {
    v.ok_or_else(|| invalid(key, "required for this topology kind"))
}

fn validate_topology(t: &TopologySection) -> Result<(), ConfigError> {
    if t.service_ticks == 0 {
        return Err(invalid("topology.service_ticks", "must be >= 1"));
    }
    if t.neurons_per_cluster == 0 {
        return Err(invalid("topology.neurons_per_cluster", "must be >= 1"));
    }
    match t.kind {
        TopologyName::Mesh | TopologyName::Torus => {
            for (v, key) in [(t.width, "topology.width"), (t.height, "topology.height")] {
                if req(v, key)? == 0 {
                    return Err(invalid(key, "must be >= 1"));
                }
            }
        }
        TopologyName::Tree | TopologyName::Hierarchical => {
            if req(t.fanout, "topology.fanout")? < 2 {
                return Err(invalid("topology.fanout", "must be >= 2"));
            }
            if req(t.leaves, "topology.leaves")? < 1 {
                return Err(invalid("topology.leaves", "must be >= 1"));
            }
        }
        TopologyName::File => {
            req(t.file.as_ref(), "topology.file")?;
        }
    }
    Ok(())
}

fn system_params_of(a: &AnalyticsSection) -> SystemParams {
    let p = SystemParams::new(a.n_neurons, a.synapses_per_neuron, a.synapse_types, a.firing_rate_hz);
    match a.temporal_precision_s {
        Some(eps) => p.with_precision(eps),
        None => p,
    }
}

impl AnalyticsSection {
    pub fn bisection(&self) -> Option<BisectionParams> {
        let c = self.bisection_links?;
        let o = self.link_occupancy_s?;
        Some(BisectionParams::from_links(c, o, self.base_latency_s).with_locality(self.locality))
    }

    pub fn link(&self) -> Option<LinkParams> {
        Some(LinkParams {
            cluster_external_neurons: self.cluster_external_neurons?,
            router_degree: self.router_degree?,
            mean_hops: self.mean_hops?,
        })
    }

    pub fn memory_tech(&self) -> Option<MemoryTechParams> {
        let m = self.memory.as_ref()?;
        let mut tech = MemoryTechParams::ideal(m.bit_area);
        if !m.efficiency_curve.is_empty() {
            tech.efficiency_curve = m.efficiency_curve.clone();
        }
        Some(tech)
    }
}

fn validate_analytics(a: &AnalyticsSection) -> Result<(), ConfigError> {
    let wrap = |e: AnalyticsError| match e {
        AnalyticsError::InvalidParam { field, reason } => invalid(&format!("analytics.{field}"), reason),
        other => invalid("analytics", other.to_string()),
    };
    system_params_of(a).validate().map_err(wrap)?;
    if !(0.0..=1.0).contains(&a.locality) {
        return Err(invalid("analytics.locality", "must lie in [0, 1]"));
    }
    if a.link_occupancy_s.is_some() && a.bisection_links.is_none() {
        return Err(invalid("analytics.bisection_links", "required when link_occupancy_s is set"));
    }
    if let Some(bp) = a.bisection() {
        bp.validate().map_err(wrap)?;
    }
    let link_keys = [
        a.cluster_external_neurons.is_some(),
        a.router_degree.is_some(),
        a.mean_hops.is_some(),
    ];
    if link_keys.iter().any(|&k| k) && !link_keys.iter().all(|&k| k) {
        return Err(invalid(
            "analytics",
            "cluster_external_neurons, router_degree and mean_hops go together",
        ));
    }
    if let Some(lp) = a.link() {
        lp.validate().map_err(wrap)?;
    }
    if let Some(tech) = a.memory_tech() {
        tech.validate().map_err(|e| invalid("analytics.memory", e.to_string()))?;
    }
    Ok(())
}
