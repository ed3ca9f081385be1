//! Closed-form model of spike communication cost.
//!
//! Everything here is a pure function of its arguments: routing-memory
//! storage, bisection bandwidth with and without a spike-timing constraint,
//! serial link service latency, per-link traffic, and effective memory area
//! for small arrays.
//!
//! Two printed bandwidth formulas are dimensionally inconsistent in their
//! subtracted term, so both the literal form and a form re-derived from the
//! arrival-jitter bound are provided ([`FormulaMode`], [`LinkFormula`]).
//! Results that can go negative before clamping come back as [`Clamped`]
//! with a `degenerate` flag instead of an error.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Bytes per GiB. Storage figures are reported in binary units.
pub const GIB: f64 = 1024.0 * 1024.0 * 1024.0;
/// Bytes per KiB.
pub const KIB: f64 = 1024.0;

/// Multiplier that the literal bandwidth formulas carry in place of `1/(ε·R)`.
const LITERAL_PRECISION_FACTOR: f64 = 1.0e3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticsError {
    #[error("domain error in {op}: {reason}")]
    Domain { op: &'static str, reason: String },
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParam { field: &'static str, reason: String },
}

fn domain(op: &'static str, reason: impl Into<String>) -> AnalyticsError {
    AnalyticsError::Domain {
        op,
        reason: reason.into(),
    }
}

fn invalid(field: &'static str, reason: impl Into<String>) -> AnalyticsError {
    AnalyticsError::InvalidParam {
        field,
        reason: reason.into(),
    }
}

/// Whole-system scalars.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub n_neurons: u64,
    pub synapses_per_neuron: u64,
    pub synapse_types: u64,
    pub firing_rate_hz: f64,
    pub temporal_precision_s: f64,
}

impl SystemParams {
    /// Builds params with the rule-of-thumb precision `ε = 1/(10³·R)`.
    pub fn new(n_neurons: u64, synapses_per_neuron: u64, synapse_types: u64, firing_rate_hz: f64) -> Self {
        Self {
            n_neurons,
            synapses_per_neuron,
            synapse_types,
            firing_rate_hz,
            temporal_precision_s: default_precision(firing_rate_hz),
        }
    }

    /// The million-neuron, 10⁴-fanout, 10 Hz reference system.
    pub fn reference() -> Self {
        Self::new(1_000_000, 10_000, 4, 10.0)
    }

    pub fn with_precision(mut self, temporal_precision_s: f64) -> Self {
        self.temporal_precision_s = temporal_precision_s;
        self
    }

    pub fn validate(&self) -> Result<(), AnalyticsError> {
        if self.synapses_per_neuron < 1 {
            return Err(invalid("synapses_per_neuron", "must be >= 1"));
        }
        if self.synapse_types < 1 {
            return Err(invalid("synapse_types", "must be >= 1"));
        }
        if !(self.firing_rate_hz > 0.0 && self.firing_rate_hz.is_finite()) {
            return Err(invalid("firing_rate_hz", "must be finite and > 0"));
        }
        if !(self.temporal_precision_s > 0.0 && self.temporal_precision_s.is_finite()) {
            return Err(invalid("temporal_precision_s", "must be finite and > 0"));
        }
        Ok(())
    }

    fn n(&self) -> f64 {
        self.n_neurons as f64
    }

    fn s(&self) -> f64 {
        self.synapses_per_neuron as f64
    }
}

/// `1/(10³·R)`: 0.1 ms at 10 Hz.
pub fn default_precision(firing_rate_hz: f64) -> f64 {
    1.0 / (LITERAL_PRECISION_FACTOR * firing_rate_hz)
}

/// Bisection of the network into two halves joined by `C` links.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BisectionParams {
    /// B, spikes/s across the cut.
    pub bisection_bw_spikes_s: f64,
    /// C, links crossing the cut.
    pub bisection_links: u64,
    /// l, latency of an unqueued spike.
    pub base_latency_s: f64,
    /// o, link occupancy per spike.
    pub link_occupancy_s: f64,
    /// α, fraction of one half whose spikes cross the cut.
    pub locality_fraction: f64,
}

impl BisectionParams {
    /// Derives `B = C/o` from link count and occupancy; α = 1.
    pub fn from_links(bisection_links: u64, link_occupancy_s: f64, base_latency_s: f64) -> Self {
        Self {
            bisection_bw_spikes_s: bisection_links as f64 / link_occupancy_s,
            bisection_links,
            base_latency_s,
            link_occupancy_s,
            locality_fraction: 1.0,
        }
    }

    pub fn with_locality(mut self, alpha: f64) -> Self {
        self.locality_fraction = alpha;
        self
    }

    /// Checks the value ranges and that `B = C/o` holds to within 1e-9 relative.
    pub fn validate(&self) -> Result<(), AnalyticsError> {
        if !(0.0..=1.0).contains(&self.locality_fraction) {
            return Err(invalid("locality_fraction", "must lie in [0, 1]"));
        }
        if self.base_latency_s < 0.0 || !self.base_latency_s.is_finite() {
            return Err(invalid("base_latency_s", "must be finite and >= 0"));
        }
        if !(self.link_occupancy_s > 0.0) {
            return Err(invalid("link_occupancy_s", "must be > 0"));
        }
        if !(self.bisection_bw_spikes_s > 0.0) {
            return Err(invalid("bisection_bw_spikes_s", "must be > 0"));
        }
        let implied = self.bisection_links as f64 / self.link_occupancy_s;
        let rel = (implied - self.bisection_bw_spikes_s).abs() / self.bisection_bw_spikes_s;
        if rel > 1e-9 {
            return Err(invalid(
                "bisection_bw_spikes_s",
                format!("B = {} disagrees with C/o = {}", self.bisection_bw_spikes_s, implied),
            ));
        }
        Ok(())
    }
}

/// Inputs of the per-link traffic estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkParams {
    /// N_c, neurons per cluster talking to other clusters.
    pub cluster_external_neurons: u64,
    /// r, average router degree.
    pub router_degree: u64,
    /// d, average links traversed per spike.
    pub mean_hops: f64,
}

impl LinkParams {
    pub fn validate(&self) -> Result<(), AnalyticsError> {
        if self.router_degree < 2 {
            return Err(invalid("router_degree", "must be >= 2"));
        }
        if !(self.mean_hops >= 1.0) {
            return Err(invalid("mean_hops", "must be >= 1"));
        }
        Ok(())
    }
}

/// Bit area plus an array-efficiency curve keyed by array size in bits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryTechParams {
    pub bit_area: f64,
    /// `(array_bits, efficiency)` pairs; evaluated as a step function.
    pub efficiency_curve: Vec<(u64, f64)>,
}

impl MemoryTechParams {
    pub fn ideal(bit_area: f64) -> Self {
        Self {
            bit_area,
            efficiency_curve: vec![(1, 1.0)],
        }
    }

    pub fn validate(&self) -> Result<(), AnalyticsError> {
        if !(self.bit_area > 0.0 && self.bit_area.is_finite()) {
            return Err(invalid("bit_area", "must be finite and > 0"));
        }
        if self.efficiency_curve.is_empty() {
            return Err(invalid("efficiency_curve", "needs at least one point"));
        }
        for w in self.efficiency_curve.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(invalid("efficiency_curve", "array sizes must be strictly increasing"));
            }
            if w[1].1 < w[0].1 {
                return Err(invalid("efficiency_curve", "efficiency must be non-decreasing in size"));
            }
        }
        if let Some(&(_, e)) = self.efficiency_curve.iter().find(|(_, e)| !(*e > 0.0 && *e <= 1.0)) {
            return Err(invalid("efficiency_curve", format!("efficiency {e} outside (0, 1]")));
        }
        Ok(())
    }

    /// Efficiency of the largest curve point not exceeding `bits`. Sizes below
    /// the first point take the first point's value.
    pub fn efficiency(&self, bits: u64) -> f64 {
        self.efficiency_curve
            .iter()
            .take_while(|(size, _)| *size <= bits)
            .last()
            .or_else(|| self.efficiency_curve.first())
            .map(|&(_, e)| e)
            .unwrap_or(0.0)
    }

    /// Area per stored bit once array overhead is included.
    pub fn effective_bit_area(&self, bits: u64) -> f64 {
        self.bit_area / self.efficiency(bits)
    }
}

/// Which printed form of a bandwidth bound to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormulaMode {
    /// `10³·(N·R²/2 − C)` as printed.
    PaperLiteral,
    /// `(α·N·R/2 − C)/ε`, solved from the jitter bound.
    Rederived,
}

impl FormulaMode {
    pub fn as_str(self) -> &'static str {
        match self {
            FormulaMode::PaperLiteral => "paper_literal",
            FormulaMode::Rederived => "rederived",
        }
    }
}

impl std::str::FromStr for FormulaMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "paper_literal" => Ok(FormulaMode::PaperLiteral),
            "rederived" => Ok(FormulaMode::Rederived),
            other => Err(format!("unknown formula mode `{other}` (expected paper_literal or rederived)")),
        }
    }
}

/// Variants of the per-link bandwidth requirement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkFormula {
    PaperLiteralConstrained,
    RederivedConstrained,
    Conventional,
}

/// A value that was clamped to a physical floor when the raw expression
/// fell below it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Clamped {
    pub value: f64,
    /// Expression before clamping.
    pub raw: f64,
    pub degenerate: bool,
}

impl Clamped {
    fn floor(raw: f64, floor: f64) -> Self {
        if raw < floor {
            Clamped {
                value: floor,
                raw,
                degenerate: true,
            }
        } else {
            Clamped {
                value: raw,
                raw,
                degenerate: false,
            }
        }
    }
}

/// `N·S·lg(N·S)`: bits to give every synaptic destination a flat address.
pub fn routing_memory_bits(params: &SystemParams) -> Result<f64, AnalyticsError> {
    let ns = params.n() * params.s();
    if ns < 1.0 {
        return Err(domain("routing_memory_bits", "N*S must be >= 1"));
    }
    Ok(ns * ns.log2())
}

/// Hardware-style variant: each address rounded up to whole bits.
pub fn routing_memory_bits_ceil(params: &SystemParams) -> Result<f64, AnalyticsError> {
    let ns = params.n() * params.s();
    if ns < 1.0 {
        return Err(domain("routing_memory_bits_ceil", "N*S must be >= 1"));
    }
    Ok(ns * ns.log2().ceil())
}

/// `N·S·lg(k·N)`: storage when synapses are grouped by one of `k` types.
pub fn routing_memory_bits_typed(params: &SystemParams) -> Result<f64, AnalyticsError> {
    let kn = params.synapse_types as f64 * params.n();
    if kn < 1.0 {
        return Err(domain("routing_memory_bits_typed", "k*N must be >= 1"));
    }
    Ok(params.n() * params.s() * kn.log2())
}

/// Flat over typed storage.
pub fn reduction_factor(params: &SystemParams) -> Result<f64, AnalyticsError> {
    let flat = routing_memory_bits(params)?;
    let typed = routing_memory_bits_typed(params)?;
    if typed <= 0.0 {
        return Err(domain("reduction_factor", "typed storage is zero (k*N = 1)"));
    }
    Ok(flat / typed)
}

pub fn bits_to_gib(bits: f64) -> f64 {
    bits / 8.0 / GIB
}

pub fn bits_per_neuron_kib(bits: f64, n_neurons: u64) -> f64 {
    bits / 8.0 / KIB / n_neurons as f64
}

/// `α·N·R/2`: cross-cut spike rate when timing carries no information.
pub fn conventional_min_bisection(params: &SystemParams, alpha: f64) -> Result<f64, AnalyticsError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(invalid("alpha", "must lie in [0, 1]"));
    }
    Ok(alpha * params.n() * params.firing_rate_hz / 2.0)
}

/// Latency of the `index`-th spike queued on a single link: `l + (index−1)·o`.
///
/// Units follow the inputs, so the same call works in seconds or ticks.
pub fn burst_spike_latency(index: u64, bp: &BisectionParams) -> Result<f64, AnalyticsError> {
    if index < 1 {
        return Err(domain("burst_spike_latency", "index is 1-based"));
    }
    Ok(bp.base_latency_s + (index - 1) as f64 * bp.link_occupancy_s)
}

/// Latency of the last packet group when `α·N·R/2` spikes share `C` links:
/// `l + (α·N·R/(2C) − 1)·o`, never below `l`.
pub fn last_packet_latency(params: &SystemParams, bp: &BisectionParams) -> Result<Clamped, AnalyticsError> {
    if bp.bisection_links == 0 {
        return Err(domain("last_packet_latency", "C = 0"));
    }
    if !(bp.link_occupancy_s > 0.0) {
        return Err(domain("last_packet_latency", "o must be > 0"));
    }
    let per_link = bp.locality_fraction * params.n() * params.firing_rate_hz / (2.0 * bp.bisection_links as f64);
    let raw = bp.base_latency_s + (per_link - 1.0) * bp.link_occupancy_s;
    Ok(Clamped::floor(raw, bp.base_latency_s))
}

/// Width of the arrival-time window: `max(0, α·N·R/(2B) − C/B)`.
pub fn arrival_jitter_bound(params: &SystemParams, bp: &BisectionParams) -> Result<Clamped, AnalyticsError> {
    let b = bp.bisection_bw_spikes_s;
    if !(b > 0.0) {
        return Err(domain("arrival_jitter_bound", "B must be > 0"));
    }
    if b.is_infinite() {
        return Ok(Clamped::floor(0.0, 0.0));
    }
    let raw = bp.locality_fraction * params.n() * params.firing_rate_hz / (2.0 * b) - bp.bisection_links as f64 / b;
    Ok(Clamped::floor(raw, 0.0))
}

/// Bisection bandwidth needed so arrival jitter stays within ε.
///
/// Never returns less than [`conventional_min_bisection`].
pub fn latency_constrained_min_bisection(
    params: &SystemParams,
    bisection_links: u64,
    alpha: f64,
    mode: FormulaMode,
) -> Result<Clamped, AnalyticsError> {
    let floor = conventional_min_bisection(params, alpha)?;
    let c = bisection_links as f64;
    let n = params.n();
    let r = params.firing_rate_hz;
    let raw = match mode {
        FormulaMode::PaperLiteral => LITERAL_PRECISION_FACTOR * (alpha * n * r * r / 2.0 - c),
        FormulaMode::Rederived => (alpha * n * r / 2.0 - c) / params.temporal_precision_s,
    };
    Ok(Clamped::floor(raw, floor))
}

/// `N_c·R·d/r`: spikes/s each link carries.
pub fn link_traffic(lp: &LinkParams, params: &SystemParams) -> Result<f64, AnalyticsError> {
    if lp.router_degree == 0 {
        return Err(domain("link_traffic", "router degree r = 0"));
    }
    Ok(lp.cluster_external_neurons as f64 * params.firing_rate_hz * lp.mean_hops / lp.router_degree as f64)
}

/// Required link bandwidth `1/o` under the chosen formula, floored at zero.
pub fn link_bandwidth_requirement(
    lp: &LinkParams,
    params: &SystemParams,
    formula: LinkFormula,
) -> Result<Clamped, AnalyticsError> {
    let traffic = link_traffic(lp, params)?;
    let d = lp.mean_hops;
    let r = params.firing_rate_hz;
    let raw = match formula {
        LinkFormula::PaperLiteralConstrained => LITERAL_PRECISION_FACTOR * d * (traffic * r - 1.0),
        LinkFormula::RederivedConstrained => d * (traffic - 1.0) / params.temporal_precision_s,
        LinkFormula::Conventional => traffic - 1.0,
    };
    Ok(Clamped::floor(raw, 0.0))
}

/// Silicon area of a `bits`-sized array including its overhead.
pub fn effective_memory_area(bits: u64, tech: &MemoryTechParams) -> Result<f64, AnalyticsError> {
    if bits < 1 {
        return Err(domain("effective_memory_area", "bits must be >= 1"));
    }
    let eff = tech.efficiency(bits);
    if !(eff > 0.0) {
        return Err(domain("effective_memory_area", format!("efficiency({bits}) = {eff}")));
    }
    Ok(bits as f64 * tech.bit_area / eff)
}
