//! Deterministic discrete-event simulation of spike packets.
//!
//! Time is an integer tick count. Each router is output-queued: a packet
//! arriving at a router pays the outgoing link's pipeline latency, then
//! joins that link's FIFO, then holds the link for its service time and
//! arrives at the next router when service completes. A packet therefore
//! spends `pipeline + service` ticks per hop when nothing is queued.
//!
//! On grids a spike becomes one unicast packet per destination router. On
//! trees it is a single packet copied at branch routers.
//!
//! Simultaneous events are ordered by `(tick, spike_id, hop index)`, then
//! by creation order, so a run is a pure function of its inputs.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, VecDeque};
use std::io;

use rayon::prelude::*;
use thiserror::Error;

use crate::analytics::{self, BisectionParams, SystemParams};
use crate::routing::{Route, Routing, RoutingError};
use crate::topology::{self, NeuronId, RouterId, Topology, TopologyError};
use crate::traffic::{self, BurstWorkload, Population, SpikeEvent, WorkloadSpec};

/// Ticks a sweep run may take to drain after injection stops, at minimum.
/// Runs still busy after `duration + max(duration, this)` count as saturated.
pub const SWEEP_MIN_DRAIN_TICKS: u64 = 10_000;

/// Link utilization at or above which a sweep point counts as saturated.
pub const SATURATION_UTILIZATION: f64 = 0.95;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("simulation passed tick {max_ticks} with {in_flight} deliveries outstanding")]
    Timeout {
        max_ticks: u64,
        in_flight: u64,
        partial: Box<SimReport>,
    },
    #[error("event queue exceeded {0} pending events")]
    EventLimit(usize),
    #[error("invalid workload: {0}")]
    Workload(String),
    #[error(transparent)]
    Routing(#[from] RoutingError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Traffic(#[from] traffic::TrafficError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimLimits {
    /// Last tick at which events may still be processed.
    pub max_ticks: u64,
    /// Cap on pending events in the queue.
    pub max_events: usize,
    /// Lower bound on the reported duration, typically the workload window.
    pub horizon_ticks: u64,
}

impl Default for SimLimits {
    fn default() -> Self {
        Self {
            max_ticks: 100_000_000,
            max_events: 10_000_000,
            horizon_ticks: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DeliveryRecord {
    pub spike_id: u64,
    pub src: NeuronId,
    pub dst: NeuronId,
    pub t_gen: u64,
    pub t_deliver: u64,
    pub hops: u32,
}

impl DeliveryRecord {
    pub fn latency(&self) -> u64 {
        self.t_deliver - self.t_gen
    }
}

/// One packet copy crossing one link.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HopRecord {
    pub spike_id: u64,
    pub link: usize,
    pub hop_index: u32,
    /// Tick the packet joined the output queue.
    pub enqueue: u64,
    /// Tick the link started serving it.
    pub dequeue: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkStats {
    pub src: RouterId,
    pub dst: RouterId,
    pub served: u64,
    pub busy_ticks: u64,
    pub utilization: f64,
    /// High-water mark of packets waiting (not in service).
    pub max_queue: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    /// Sorted by `(spike_id, dst)`.
    pub deliveries: Vec<DeliveryRecord>,
    pub links: Vec<LinkStats>,
    /// In processing order, which per link is enqueue order.
    pub hop_log: Vec<HopRecord>,
    pub injected: u64,
    /// Σ destination-set sizes of injected spikes.
    pub expected_deliveries: u64,
    pub duration_ticks: u64,
    pub routers: usize,
    pub clusters: usize,
    pub completed: bool,
}

/// Aggregates written to the summary CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub injected: u64,
    pub delivered: u64,
    pub expected: u64,
    pub mean_latency: Option<f64>,
    pub min_latency: Option<u64>,
    pub max_latency: Option<u64>,
    pub p99_latency: Option<u64>,
    pub jitter: Option<u64>,
    pub duration_ticks: u64,
    pub hop_traversals: u64,
    pub max_utilization: f64,
    pub max_queue: usize,
    pub routers: usize,
    pub clusters: usize,
    pub completed: bool,
}

/// Nearest-rank percentile of a sorted slice.
fn percentile(sorted: &[u64], q: f64) -> Option<u64> {
    if sorted.is_empty() {
        return None;
    }
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    Some(sorted[rank - 1])
}

impl SimReport {
    pub fn delivered(&self) -> u64 {
        self.deliveries.len() as u64
    }

    pub fn latencies(&self) -> Vec<u64> {
        self.deliveries.iter().map(DeliveryRecord::latency).collect()
    }

    pub fn mean_latency(&self) -> Option<f64> {
        if self.deliveries.is_empty() {
            return None;
        }
        let sum: u128 = self.deliveries.iter().map(|d| d.latency() as u128).sum();
        Some(sum as f64 / self.deliveries.len() as f64)
    }

    /// Largest max−min latency spread among spikes generated on the same tick.
    pub fn jitter(&self) -> Option<u64> {
        let mut cohorts: BTreeMap<u64, (u64, u64)> = BTreeMap::new();
        for d in &self.deliveries {
            let l = d.latency();
            let e = cohorts.entry(d.t_gen).or_insert((l, l));
            e.0 = e.0.min(l);
            e.1 = e.1.max(l);
        }
        cohorts.values().map(|(lo, hi)| hi - lo).max()
    }

    /// Σ links crossed by all packet copies.
    pub fn hop_traversals(&self) -> u64 {
        self.links.iter().map(|l| l.served).sum()
    }

    pub fn max_utilization(&self) -> f64 {
        self.links.iter().map(|l| l.utilization).fold(0.0, f64::max)
    }

    pub fn summary(&self) -> Summary {
        let mut lat = self.latencies();
        lat.sort_unstable();
        Summary {
            injected: self.injected,
            delivered: self.delivered(),
            expected: self.expected_deliveries,
            mean_latency: self.mean_latency(),
            min_latency: lat.first().copied(),
            max_latency: lat.last().copied(),
            p99_latency: percentile(&lat, 0.99),
            jitter: self.jitter(),
            duration_ticks: self.duration_ticks,
            hop_traversals: self.hop_traversals(),
            max_utilization: self.max_utilization(),
            max_queue: self.links.iter().map(|l| l.max_queue).max().unwrap_or(0),
            routers: self.routers,
            clusters: self.clusters,
            completed: self.completed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum EventKind {
    /// Packet copy is at `router`.
    Arrive { router: RouterId },
    /// Packet copy is ready to join `link`'s queue.
    Ready { link: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Event {
    tick: u64,
    spike_id: u64,
    hop: u32,
    seq: u64,
    spike: usize,
    route: usize,
    kind: EventKind,
}

struct SpikeState {
    spike_id: u64,
    source: NeuronId,
    tick: u64,
    /// Destination neurons by hosting router.
    targets: BTreeMap<RouterId, Vec<NeuronId>>,
    routes: Vec<Route>,
    branches: Vec<BTreeMap<RouterId, Vec<RouterId>>>,
}

struct LinkState {
    free_at: u64,
    served: u64,
    busy: u64,
    /// Service start ticks of packets queued behind the one in service.
    waiting: VecDeque<u64>,
    max_queue: usize,
}

struct Sim<'a> {
    t: &'a Topology,
    population: Population,
    routing: Routing,
    limits: SimLimits,
    heap: BinaryHeap<Reverse<Event>>,
    seq: u64,
    spikes: Vec<SpikeState>,
    links: Vec<LinkState>,
    deliveries: Vec<DeliveryRecord>,
    hop_log: Vec<HopRecord>,
    expected: u64,
    last_tick: u64,
}

impl<'a> Sim<'a> {
    fn push(&mut self, mut ev: Event) -> Result<(), SimError> {
        ev.seq = self.seq;
        self.seq += 1;
        self.heap.push(Reverse(ev));
        if self.heap.len() > self.limits.max_events {
            return Err(SimError::EventLimit(self.limits.max_events));
        }
        Ok(())
    }

    fn inject(&mut self, e: SpikeEvent) -> Result<(), SimError> {
        let n = self.population.len();
        if e.source >= n {
            return Err(SimError::Workload(format!("spike {} source neuron {} out of range", e.spike_id, e.source)));
        }
        if e.destinations.is_empty() {
            return Err(SimError::Workload(format!("spike {} has no destinations", e.spike_id)));
        }
        let mut targets: BTreeMap<RouterId, Vec<NeuronId>> = BTreeMap::new();
        for &d in &e.destinations {
            if d >= n {
                return Err(SimError::Workload(format!("spike {} destination neuron {d} out of range", e.spike_id)));
            }
            targets.entry(self.population.router_of(d)).or_default().push(d);
        }
        for list in targets.values_mut() {
            list.sort_unstable();
            list.dedup();
            self.expected += list.len() as u64;
        }
        let src = self.population.router_of(e.source);
        let dst_routers: BTreeSet<RouterId> = targets.keys().copied().collect();
        let routes = self.routing.plan(self.t, src, &dst_routers)?;
        let branches = routes.iter().map(Route::branches).collect();
        let spike = self.spikes.len();
        let n_routes = routes.len();
        self.spikes.push(SpikeState {
            spike_id: e.spike_id,
            source: e.source,
            tick: e.tick,
            targets,
            routes,
            branches,
        });
        for route in 0..n_routes {
            self.push(Event {
                tick: e.tick,
                spike_id: e.spike_id,
                hop: 0,
                seq: 0,
                spike,
                route,
                kind: EventKind::Arrive { router: src },
            })?;
        }
        Ok(())
    }

    fn handle(&mut self, ev: Event) -> Result<(), SimError> {
        self.last_tick = self.last_tick.max(ev.tick);
        match ev.kind {
            EventKind::Arrive { router } => {
                let s = &self.spikes[ev.spike];
                if s.routes[ev.route].destinations.contains(&router) {
                    for &dst in &s.targets[&router] {
                        self.deliveries.push(DeliveryRecord {
                            spike_id: s.spike_id,
                            src: s.source,
                            dst,
                            t_gen: s.tick,
                            t_deliver: ev.tick,
                            hops: ev.hop,
                        });
                    }
                }
                let next = s.branches[ev.route].get(&router).cloned().unwrap_or_default();
                for v in next {
                    let link = self
                        .t
                        .link_between(router, v)
                        .ok_or(RoutingError::Unreachable { src: router, dst: v })?;
                    let pipeline = self.t.links()[link].pipeline_latency_ticks;
                    self.push(Event {
                        tick: ev.tick + pipeline,
                        kind: EventKind::Ready { link },
                        ..ev
                    })?;
                }
            }
            EventKind::Ready { link } => {
                let service = self.t.links()[link].service_time_ticks;
                let state = &mut self.links[link];
                let start = ev.tick.max(state.free_at);
                while state.waiting.front().is_some_and(|&s| s <= ev.tick) {
                    state.waiting.pop_front();
                }
                if start > ev.tick {
                    state.waiting.push_back(start);
                    state.max_queue = state.max_queue.max(state.waiting.len());
                }
                state.free_at = start + service;
                state.served += 1;
                state.busy += service;
                self.hop_log.push(HopRecord {
                    spike_id: ev.spike_id,
                    link,
                    hop_index: ev.hop,
                    enqueue: ev.tick,
                    dequeue: start,
                });
                let dst = self.t.links()[link].dst;
                self.push(Event {
                    tick: start + service,
                    hop: ev.hop + 1,
                    kind: EventKind::Arrive { router: dst },
                    ..ev
                })?;
            }
        }
        Ok(())
    }

    fn report(mut self, completed: bool) -> SimReport {
        self.deliveries.sort_by_key(|d| (d.spike_id, d.dst));
        let duration = self.last_tick.max(self.limits.horizon_ticks);
        let links = self
            .t
            .links()
            .iter()
            .zip(&self.links)
            .map(|(l, s)| LinkStats {
                src: l.src,
                dst: l.dst,
                served: s.served,
                busy_ticks: s.busy,
                utilization: if duration == 0 { 0.0 } else { s.busy as f64 / duration as f64 },
                max_queue: s.max_queue,
            })
            .collect();
        SimReport {
            deliveries: self.deliveries,
            links,
            hop_log: self.hop_log,
            injected: self.spikes.len() as u64,
            expected_deliveries: self.expected,
            duration_ticks: duration,
            routers: self.t.router_count(),
            clusters: self.t.clusters().len(),
            completed,
        }
    }
}

/// Runs `workload` (sorted by tick) to completion over `t`.
pub fn run<I>(t: &Topology, routing: Routing, workload: I, limits: SimLimits) -> Result<SimReport, SimError>
where
    I: IntoIterator<Item = SpikeEvent>,
{
    let mut sim = Sim {
        t,
        population: Population::from_topology(t),
        routing,
        limits,
        heap: BinaryHeap::new(),
        seq: 0,
        spikes: Vec::new(),
        links: (0..t.links().len())
            .map(|_| LinkState {
                free_at: 0,
                served: 0,
                busy: 0,
                waiting: VecDeque::new(),
                max_queue: 0,
            })
            .collect(),
        deliveries: Vec::new(),
        hop_log: Vec::new(),
        expected: 0,
        last_tick: 0,
    };
    let mut pending = workload.into_iter().peekable();
    let mut last_gen = 0;
    let mut last_id = None;
    loop {
        let next_heap = sim.heap.peek().map(|Reverse(e)| e.tick);
        let next_spike = pending.peek().map(|e| e.tick);
        let tick = match (next_heap, next_spike) {
            (None, None) => break,
            (Some(h), Some(s)) => h.min(s),
            (Some(h), None) => h,
            (None, Some(s)) => s,
        };
        if tick > limits.max_ticks {
            let in_flight = sim.expected - sim.deliveries.len() as u64;
            let still_pending = pending.map(|e| e.destinations.len() as u64).sum::<u64>();
            return Err(SimError::Timeout {
                max_ticks: limits.max_ticks,
                in_flight: in_flight + still_pending,
                partial: Box::new(sim.report(false)),
            });
        }
        // Inject every spike generated at or before the next queued event.
        if next_spike == Some(tick) {
            let e = pending.next().expect("peeked");
            if e.tick < last_gen {
                return Err(SimError::Workload(format!(
                    "spike {} at tick {} precedes an earlier spike at tick {last_gen}",
                    e.spike_id, e.tick
                )));
            }
            if last_id.is_some_and(|id| e.spike_id <= id) {
                return Err(SimError::Workload(format!("spike ids must increase (saw {})", e.spike_id)));
            }
            last_gen = e.tick;
            last_id = Some(e.spike_id);
            sim.inject(e)?;
            continue;
        }
        let Reverse(ev) = sim.heap.pop().expect("peeked");
        sim.handle(ev)?;
    }
    Ok(sim.report(true))
}

/// Latency spread of a synchronized burst next to its analytic bound.
#[derive(Debug, Clone, PartialEq)]
pub struct BurstJitter {
    pub min: u64,
    pub max: u64,
    pub spread: u64,
    /// Arrival-jitter bound in ticks, from the measured `C` and `o`.
    pub bound: f64,
    pub bisection_links: usize,
    pub occupancy_ticks: u64,
    pub cross_spikes: usize,
    pub report: SimReport,
}

/// Simulates a burst and evaluates the arrival-jitter bound with the
/// topology's own bisection link count and service time.
pub fn burst_jitter(
    t: &Topology,
    routing: Routing,
    burst: &BurstWorkload,
    limits: SimLimits,
) -> Result<BurstJitter, SimError> {
    let report = run(t, routing, burst.events.iter().cloned(), limits)?;
    let lat = report.latencies();
    let (min, max) = match (lat.iter().min(), lat.iter().max()) {
        (Some(&lo), Some(&hi)) => (lo, hi),
        _ => (0, 0),
    };
    let cut = topology::bisection_link_ids(t)?;
    let occupancy = cut.iter().map(|&i| t.links()[i].service_time_ticks).max().unwrap_or(1);
    let bound = jitter_bound_ticks(burst.cross as u64, cut.len() as u64, occupancy)?;
    Ok(BurstJitter {
        min,
        max,
        spread: max - min,
        bound,
        bisection_links: cut.len(),
        occupancy_ticks: occupancy,
        cross_spikes: burst.cross,
        report,
    })
}

/// Jitter bound for `cross` simultaneous spikes over `links` links of
/// occupancy `occupancy` ticks: half of `2·cross` neurons firing once.
pub fn jitter_bound_ticks(cross: u64, links: u64, occupancy: u64) -> Result<f64, SimError> {
    let params = SystemParams::new(2 * cross, 1, 1, 1.0);
    let bp = BisectionParams::from_links(links, occupancy as f64, 0.0);
    analytics::arrival_jitter_bound(&params, &bp)
        .map(|c| c.value)
        .map_err(|e| SimError::Workload(e.to_string()))
}

/// Unloaded latency from router `src` to `dst`: Σ (pipeline + service).
pub fn path_latency(t: &Topology, routing: Routing, src: RouterId, dst: RouterId) -> Result<u64, SimError> {
    let dsts = BTreeSet::from([dst]);
    let routes = routing.plan(t, src, &dsts)?;
    let route = routes.first().ok_or(RoutingError::Unreachable { src, dst })?;
    let mut total = 0;
    for &(a, b) in &route.edges {
        let li = t.link_between(a, b).ok_or(RoutingError::Unreachable { src: a, dst: b })?;
        let l = &t.links()[li];
        total += l.pipeline_latency_ticks + l.service_time_ticks;
    }
    Ok(total)
}

/// Mean unloaded latency when every neuron is equally likely to target any
/// other neuron.
pub fn zero_load_latency(t: &Topology, routing: Routing) -> Result<f64, SimError> {
    let clusters: Vec<(RouterId, u64)> = t.clusters().iter().map(|(&r, c)| (r, c.neurons as u64)).collect();
    let mut weight = 0.0;
    let mut total = 0.0;
    for &(a, na) in &clusters {
        for &(b, nb) in &clusters {
            let pairs = if a == b { na * na.saturating_sub(1) } else { na * nb };
            if pairs == 0 {
                continue;
            }
            let lat = if a == b { 0 } else { path_latency(t, routing, a, b)? };
            weight += pairs as f64;
            total += pairs as f64 * lat as f64;
        }
    }
    if weight == 0.0 {
        return Err(SimError::Workload("population has fewer than two neurons".into()));
    }
    Ok(total / weight)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    /// Spikes per neuron per tick.
    pub rate: f64,
    pub injected: u64,
    pub delivered: u64,
    pub mean_latency: Option<f64>,
    pub p99_latency: Option<u64>,
    pub zero_load_latency: f64,
    pub saturated: bool,
    pub error: Option<String>,
}

/// One Poisson run per injection rate (spikes/neuron/tick), all with the
/// seed in `base`. Rates must be strictly ascending. Runs may execute in
/// parallel; rows come back in rate order.
///
/// A rate of 0 reports the unloaded path latency. A run that times out or
/// drives any link to [`SATURATION_UTILIZATION`] is flagged saturated.
pub fn load_sweep(
    t: &Topology,
    routing: Routing,
    rates: &[f64],
    base: &WorkloadSpec,
    limits: SimLimits,
) -> Result<Vec<SweepRow>, SimError> {
    if rates.is_empty() {
        return Err(SimError::Workload("no injection rates given".into()));
    }
    if rates.windows(2).any(|w| w[1] <= w[0]) {
        return Err(SimError::Workload("injection rates must be strictly ascending".into()));
    }
    if let Some(r) = rates.iter().find(|r| !(**r >= 0.0 && **r < 1.0)) {
        return Err(SimError::Workload(format!("injection rate {r} outside [0, 1)")));
    }
    let zero_load = zero_load_latency(t, routing)?;
    let population = Population::from_topology(t);
    let rows = rates
        .par_iter()
        .map(|&rate| {
            let mut row = SweepRow {
                rate,
                injected: 0,
                delivered: 0,
                mean_latency: None,
                p99_latency: None,
                zero_load_latency: zero_load,
                saturated: false,
                error: None,
            };
            if rate == 0.0 {
                row.mean_latency = Some(zero_load);
                return row;
            }
            let spec = WorkloadSpec {
                rate_hz: rate / base.tick_duration_s,
                ..base.clone()
            };
            let stream = match traffic::poisson_workload(&spec, &population, None) {
                Ok(s) => s,
                Err(e) => {
                    row.error = Some(e.to_string());
                    return row;
                }
            };
            let drain = spec.duration_ticks.max(SWEEP_MIN_DRAIN_TICKS);
            let lim = SimLimits {
                horizon_ticks: spec.duration_ticks,
                max_ticks: limits.max_ticks.min(spec.duration_ticks.saturating_add(drain)),
                ..limits
            };
            let report = match run(t, routing, stream, lim) {
                Ok(r) => r,
                Err(SimError::Timeout { partial, .. }) => {
                    row.saturated = true;
                    *partial
                }
                Err(e) => {
                    row.error = Some(e.to_string());
                    return row;
                }
            };
            let s = report.summary();
            row.injected = s.injected;
            row.delivered = s.delivered;
            row.mean_latency = s.mean_latency;
            row.p99_latency = s.p99_latency;
            row.saturated |= s.max_utilization >= SATURATION_UTILIZATION;
            row
        })
        .collect();
    Ok(rows)
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `spike_id,src,dst,t_gen,t_deliver,hops`
pub fn write_deliveries_csv<W: io::Write>(report: &SimReport, w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["spike_id", "src", "dst", "t_gen", "t_deliver", "hops"])?;
    for d in &report.deliveries {
        out.write_record([
            d.spike_id.to_string(),
            d.src.to_string(),
            d.dst.to_string(),
            d.t_gen.to_string(),
            d.t_deliver.to_string(),
            d.hops.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// `link,served,utilization,max_queue`, with `link` written as `src->dst`.
pub fn write_links_csv<W: io::Write>(report: &SimReport, w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["link", "served", "utilization", "max_queue"])?;
    for l in &report.links {
        out.write_record([
            format!("{}->{}", l.src, l.dst),
            l.served.to_string(),
            l.utilization.to_string(),
            l.max_queue.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub const SUMMARY_COLUMNS: [&str; 15] = [
    "injected",
    "delivered",
    "expected",
    "mean_latency",
    "min_latency",
    "max_latency",
    "p99_latency",
    "jitter",
    "duration_ticks",
    "hop_traversals",
    "max_utilization",
    "max_queue",
    "routers",
    "clusters",
    "completed",
];

/// One header row and one data row; see [`SUMMARY_COLUMNS`].
pub fn write_summary_csv<W: io::Write>(summary: &Summary, w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(SUMMARY_COLUMNS)?;
    out.write_record([
        summary.injected.to_string(),
        summary.delivered.to_string(),
        summary.expected.to_string(),
        opt(summary.mean_latency),
        opt(summary.min_latency),
        opt(summary.max_latency),
        opt(summary.p99_latency),
        opt(summary.jitter),
        summary.duration_ticks.to_string(),
        summary.hop_traversals.to_string(),
        summary.max_utilization.to_string(),
        summary.max_queue.to_string(),
        summary.routers.to_string(),
        summary.clusters.to_string(),
        summary.completed.to_string(),
    ])?;
    out.flush()?;
    Ok(())
}

/// `rate,mean_latency,p99_latency,saturated,zero_load_latency,injected,delivered,error`
pub fn write_sweep_csv<W: io::Write>(rows: &[SweepRow], w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "rate",
        "mean_latency",
        "p99_latency",
        "saturated",
        "zero_load_latency",
        "injected",
        "delivered",
        "error",
    ])?;
    for r in rows {
        out.write_record([
            r.rate.to_string(),
            opt(r.mean_latency),
            opt(r.p99_latency),
            r.saturated.to_string(),
            r.zero_load_latency.to_string(),
            r.injected.to_string(),
            r.delivered.to_string(),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::burst_spike_latency;
    use crate::topology::{build_mesh, build_tree, LinkTiming};
    use crate::traffic::{burst_workload, poisson_workload, BurstPairing};
    use proptest::prelude::*;

    fn spike(id: u64, src: NeuronId, tick: u64, dsts: &[NeuronId]) -> SpikeEvent {
        SpikeEvent {
            spike_id: id,
            source: src,
            tick,
            destinations: dsts.to_vec(),
        }
    }

    fn two_router() -> Topology {
        build_mesh(
            2,
            1,
            LinkTiming {
                service_ticks: 2,
                pipeline_ticks: 3,
            },
            3,
        )
        .unwrap()
    }

    #[test]
    fn serial_service_on_one_link() {
        let t = two_router();
        let w = (0..3).map(|i| spike(i, i as u32, 0, &[3 + i as u32]));
        let r = run(&t, Routing::DimensionOrdered, w, SimLimits::default()).unwrap();
        let got: Vec<u64> = r.deliveries.iter().map(|d| d.t_deliver).collect();
        assert_eq!(got, vec![5, 7, 9]);
        let bp = BisectionParams::from_links(1, 2.0, 5.0);
        for (i, d) in r.deliveries.iter().enumerate() {
            assert_eq!(d.latency() as f64, burst_spike_latency(i as u64 + 1, &bp).unwrap());
        }
        assert_eq!(r.links.iter().find(|l| l.src == 0).unwrap().max_queue, 2);
    }

    #[test]
    fn three_hop_pipeline_then_serve() {
        let t = build_mesh(3, 3, LinkTiming::default(), 1).unwrap();
        let dst = t.router_at(2, 1).unwrap() as u32;
        let r = run(&t, Routing::DimensionOrdered, [spike(0, 0, 10, &[dst])], SimLimits::default()).unwrap();
        assert_eq!(r.deliveries[0].t_deliver, 16);
        assert_eq!(r.deliveries[0].hops, 3);
    }

    #[test]
    fn empty_workload() {
        let t = build_mesh(3, 3, LinkTiming::default(), 1).unwrap();
        let r = run(&t, Routing::DimensionOrdered, Vec::new(), SimLimits::default()).unwrap();
        assert!(r.deliveries.is_empty());
        assert_eq!(r.max_utilization(), 0.0);
        assert_eq!(r.summary().mean_latency, None);
    }

    #[test]
    fn local_and_multicast_delivery() {
        let t = build_tree(2, 4, LinkTiming::default(), 2).unwrap();
        // neurons 0,1 on leaf 3; 2,3 on leaf 4; 4,5 on leaf 5; 6,7 on leaf 6
        let r = run(&t, Routing::TreeMulticast, [spike(0, 0, 0, &[1, 2, 3, 6])], SimLimits::default()).unwrap();
        assert_eq!(r.delivered(), 4);
        let at: BTreeMap<u32, (u64, u32)> = r.deliveries.iter().map(|d| (d.dst, (d.t_deliver, d.hops))).collect();
        assert_eq!(at[&1], (0, 0));
        assert_eq!(at[&2], (4, 2));
        assert_eq!(at[&6], (8, 4));
        // one copy per link of the union route
        assert_eq!(r.hop_traversals(), 5);
    }

    #[test]
    fn mesh_replicates_at_source() {
        let t = build_mesh(3, 1, LinkTiming::default(), 1).unwrap();
        let r = run(&t, Routing::DimensionOrdered, [spike(0, 0, 0, &[1, 2])], SimLimits::default()).unwrap();
        // two unicasts share link 0->1
        assert_eq!(r.hop_traversals(), 3);
        assert_eq!(r.deliveries.iter().map(|d| d.t_deliver).collect::<Vec<_>>(), vec![2, 5]);
    }

    #[test]
    fn timeout_carries_partial_report() {
        let t = two_router();
        let w = (0..3).map(|i| spike(i, 0, 0, &[3]));
        let limits = SimLimits {
            max_ticks: 6,
            ..SimLimits::default()
        };
        match run(&t, Routing::DimensionOrdered, w, limits) {
            Err(SimError::Timeout { partial, in_flight, .. }) => {
                assert_eq!(partial.delivered(), 1);
                assert_eq!(in_flight, 2);
                assert!(!partial.completed);
            }
            other => panic!("expected timeout, got {other:?}"),
        }
    }

    #[test]
    fn event_limit() {
        let t = two_router();
        let w = (0..100).map(|i| spike(i, 0, 0, &[3]));
        let limits = SimLimits {
            max_events: 10,
            ..SimLimits::default()
        };
        assert!(matches!(
            run(&t, Routing::DimensionOrdered, w, limits),
            Err(SimError::EventLimit(10))
        ));
    }

    #[test]
    fn rejects_bad_workloads() {
        let t = two_router();
        let out_of_order = [spike(0, 0, 5, &[3]), spike(1, 0, 4, &[3])];
        assert!(run(&t, Routing::DimensionOrdered, out_of_order, SimLimits::default()).is_err());
        assert!(run(&t, Routing::DimensionOrdered, [spike(0, 0, 0, &[99])], SimLimits::default()).is_err());
    }

    #[test]
    fn tree_single_bottleneck_spread() {
        let t = build_tree(
            2,
            8,
            LinkTiming {
                service_ticks: 3,
                pipeline_ticks: 2,
            },
            1,
        )
        .unwrap();
        let burst = burst_workload(&Population::from_topology(&t), 0, 1.0, BurstPairing::Permutation, 5).unwrap();
        let j = burst_jitter(&t, Routing::TreeMulticast, &burst, SimLimits::default()).unwrap();
        assert_eq!(j.bisection_links, 1);
        assert_eq!(j.spread, 3 * 3);
        assert_eq!(j.bound, 9.0);
    }

    #[test]
    fn one_spike_per_bisection_link_has_no_spread() {
        let t = build_mesh(2, 4, LinkTiming::default(), 1).unwrap();
        let burst = burst_workload(&Population::from_topology(&t), 0, 1.0, BurstPairing::Aligned, 0).unwrap();
        let j = burst_jitter(&t, Routing::DimensionOrdered, &burst, SimLimits::default()).unwrap();
        assert_eq!((j.spread, j.bound), (0, 0.0));
    }

    #[test]
    fn local_burst_spread_is_path_length_only() {
        let t = build_mesh(4, 2, LinkTiming::default(), 1).unwrap();
        let pop = Population::from_topology(&t);
        let burst = burst_workload(&pop, 0, 0.0, BurstPairing::Permutation, 4).unwrap();
        let j = burst_jitter(&t, Routing::DimensionOrdered, &burst, SimLimits::default()).unwrap();
        let paths: Vec<u64> = burst
            .events
            .iter()
            .map(|e| {
                let (s, d) = (pop.router_of(e.source), pop.router_of(e.destinations[0]));
                if s == d {
                    0
                } else {
                    path_latency(&t, Routing::DimensionOrdered, s, d).unwrap()
                }
            })
            .collect();
        let want = paths.iter().max().unwrap() - paths.iter().min().unwrap();
        assert_eq!(j.spread, want);
    }

    #[test]
    fn sweep_rejects_descending_and_single_row() {
        let t = build_mesh(3, 3, LinkTiming::default(), 1).unwrap();
        let base = WorkloadSpec {
            duration_ticks: 2000,
            ..WorkloadSpec::default()
        };
        assert!(load_sweep(&t, Routing::DimensionOrdered, &[1e-3, 1e-4], &base, SimLimits::default()).is_err());
        let rows = load_sweep(&t, Routing::DimensionOrdered, &[0.0], &base, SimLimits::default()).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].mean_latency, Some(rows[0].zero_load_latency));
        assert_eq!(rows[0].zero_load_latency, 4.0);
    }

    #[test]
    fn sweep_flags_saturation() {
        let t = build_mesh(2, 1, LinkTiming::default(), 1).unwrap();
        let base = WorkloadSpec {
            duration_ticks: 2000,
            ..WorkloadSpec::default()
        };
        let rows = load_sweep(&t, Routing::DimensionOrdered, &[0.01, 0.99], &base, SimLimits::default()).unwrap();
        assert!(!rows[0].saturated);
        assert!(rows[1].saturated);
    }

    fn check_invariants(t: &Topology, routing: Routing, r: &SimReport) {
        assert_eq!(r.delivered(), r.expected_deliveries);
        for l in &r.links {
            assert!((0.0..=1.0).contains(&l.utilization));
            let o = t.links()[t.link_between(l.src, l.dst).unwrap()].service_time_ticks;
            if r.duration_ticks > 0 {
                assert_eq!(l.utilization, (l.served * o) as f64 / r.duration_ticks as f64);
            }
        }
        let pop = Population::from_topology(t);
        for d in &r.deliveries {
            let (s, x) = (pop.router_of(d.src), pop.router_of(d.dst));
            if s != x {
                assert!(d.latency() >= path_latency(t, routing, s, x).unwrap());
            }
        }
        // FIFO per link: service starts follow enqueue order
        let mut per_link: BTreeMap<usize, Vec<&HopRecord>> = BTreeMap::new();
        for h in &r.hop_log {
            per_link.entry(h.link).or_default().push(h);
        }
        for hops in per_link.values() {
            for w in hops.windows(2) {
                assert!(w[0].enqueue <= w[1].enqueue);
                assert!(w[0].dequeue < w[1].dequeue);
                assert!(w[0].dequeue >= w[0].enqueue);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn conservation_fifo_and_lower_bound(seed: u64, rate in 1.0f64..200.0, fanout in 1u32..4, tree: bool) {
            let timing = LinkTiming { service_ticks: 2, pipeline_ticks: 1 };
            let (t, routing) = if tree {
                (build_tree(2, 8, timing, 2).unwrap(), Routing::TreeMulticast)
            } else {
                (build_mesh(3, 3, timing, 2).unwrap(), Routing::DimensionOrdered)
            };
            let pop = Population::from_topology(&t);
            let spec = WorkloadSpec { rate_hz: rate, duration_ticks: 400, seed, fanout, ..WorkloadSpec::default() };
            let w: Vec<_> = poisson_workload(&spec, &pop, None).unwrap().collect();
            let fanouts: u64 = w.iter().map(|e| e.destinations.len() as u64).sum();
            let a = run(&t, routing, w.clone(), SimLimits::default()).unwrap();
            prop_assert_eq!(a.delivered(), fanouts);
            check_invariants(&t, routing, &a);
            let b = run(&t, routing, w, SimLimits::default()).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
