//! Spike workload generators.
//!
//! All generators are deterministic for a given seed. Randomness comes from
//! a ChaCha8 stream so outputs are stable across platforms and releases of
//! `rand`.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::routing::RoutingTable;
use crate::topology::{Half, NeuronId, RouterId, Topology};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrafficError {
    #[error("firing probability per tick is {0}; rate x tick_duration must be < 1")]
    RateTooHigh(f64),
    #[error("invalid workload: {0}")]
    Invalid(String),
    #[error("trace line {line}: {reason}")]
    Trace { line: usize, reason: String },
}

/// One spike leaving its source neuron.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SpikeEvent {
    pub spike_id: u64,
    pub source: NeuronId,
    pub tick: u64,
    /// Sorted, without duplicates, never empty.
    pub destinations: Vec<NeuronId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkloadKind {
    Poisson,
    Burst,
    Replay,
}

/// How Poisson traffic picks destinations when no routing table is given.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DestinationMode {
    /// Any neuron other than the source, uniformly.
    #[default]
    Uniform,
    /// The other half of the median cut with probability α, otherwise the
    /// source's own half.
    Locality,
}

/// How burst sources are matched to targets across the cut.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BurstPairing {
    /// Seeded random permutation.
    #[default]
    Permutation,
    /// The i-th neuron of the left half to the i-th of the right half, in
    /// neuron order. On a grid this shifts each source by half the width,
    /// spreading the burst evenly over the bisection links.
    Aligned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub kind: WorkloadKind,
    pub rate_hz: f64,
    pub duration_ticks: u64,
    pub tick_duration_s: f64,
    pub locality: f64,
    pub seed: u64,
    pub burst_tick: u64,
    /// Destinations drawn per Poisson spike when no table is given.
    pub fanout: u32,
    pub destinations: DestinationMode,
    pub pairing: BurstPairing,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        Self {
            kind: WorkloadKind::Poisson,
            rate_hz: 10.0,
            duration_ticks: 1000,
            tick_duration_s: 1e-3,
            locality: 1.0,
            seed: 0,
            burst_tick: 0,
            fanout: 1,
            destinations: DestinationMode::Uniform,
            pairing: BurstPairing::Permutation,
        }
    }
}

impl WorkloadSpec {
    pub fn validate(&self) -> Result<(), TrafficError> {
        if !(self.tick_duration_s > 0.0 && self.tick_duration_s.is_finite()) {
            return Err(TrafficError::Invalid("tick_duration_s must be finite and > 0".into()));
        }
        if !(0.0..=1.0).contains(&self.locality) {
            return Err(TrafficError::Invalid("locality must lie in [0, 1]".into()));
        }
        if !(self.rate_hz >= 0.0 && self.rate_hz.is_finite()) {
            return Err(TrafficError::Invalid("rate_hz must be finite and >= 0".into()));
        }
        if self.fanout == 0 {
            return Err(TrafficError::Invalid("fanout must be >= 1".into()));
        }
        Ok(())
    }

    /// Per-neuron firing probability per tick.
    pub fn fire_probability(&self) -> f64 {
        self.rate_hz * self.tick_duration_s
    }
}

/// Neurons of a topology with their routers and median-cut halves.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Population {
    routers: Vec<RouterId>,
    halves: Option<Vec<Half>>,
}

impl Population {
    pub fn from_topology(t: &Topology) -> Self {
        let routers = t.neuron_routers();
        let halves = if t.router_count() >= 2 {
            routers.iter().map(|&r| t.half_of(r).ok()).collect::<Option<Vec<_>>>()
        } else {
            None
        };
        Self { routers, halves }
    }

    pub fn len(&self) -> u32 {
        self.routers.len() as u32
    }

    pub fn is_empty(&self) -> bool {
        self.routers.is_empty()
    }

    pub fn router_of(&self, n: NeuronId) -> RouterId {
        self.routers[n as usize]
    }

    pub fn routers(&self) -> &[RouterId] {
        &self.routers
    }

    pub fn half_of(&self, n: NeuronId) -> Option<Half> {
        self.halves.as_ref().map(|h| h[n as usize])
    }

    fn members(&self, half: Half) -> Result<Vec<NeuronId>, TrafficError> {
        let halves = self
            .halves
            .as_ref()
            .ok_or_else(|| TrafficError::Invalid("median cut undefined for a single-router topology".into()))?;
        Ok((0..self.len()).filter(|&n| halves[n as usize] == half).collect())
    }
}

/// Uniform pick from a sorted pool, skipping `source` when it is a member.
fn pick_other(rng: &mut ChaCha8Rng, pool: &[NeuronId], source: NeuronId) -> NeuronId {
    match pool.binary_search(&source) {
        Ok(_) if pool.len() == 1 => source,
        Ok(pos) => {
            let k = rng.random_range(0..pool.len() - 1);
            pool[if k >= pos { k + 1 } else { k }]
        }
        Err(_) if pool.is_empty() => source,
        Err(_) => pool[rng.random_range(0..pool.len())],
    }
}

/// Poisson workload as an iterator of spikes in `(tick, source)` order.
///
/// Each neuron fires on a tick with probability `R·tick_duration`, which
/// is drawn as geometric gaps between firings.
pub struct PoissonStream<'a> {
    rng: ChaCha8Rng,
    gaps: Option<Geometric>,
    heap: BinaryHeap<Reverse<(u64, NeuronId)>>,
    duration: u64,
    next_id: u64,
    population: &'a Population,
    table: Option<&'a RoutingTable>,
    spec: WorkloadSpec,
    left: Vec<NeuronId>,
    right: Vec<NeuronId>,
    all: Vec<NeuronId>,
}

impl<'a> PoissonStream<'a> {
    fn destinations(&mut self, source: NeuronId) -> Vec<NeuronId> {
        if let Some(table) = self.table {
            let mut d = table.fanout(source).to_vec();
            d.sort_unstable();
            d.dedup();
            return d;
        }
        let mut set = BTreeSet::new();
        for _ in 0..self.spec.fanout {
            let d = match self.spec.destinations {
                DestinationMode::Uniform => pick_other(&mut self.rng, &self.all, source),
                DestinationMode::Locality => {
                    let own = self.population.half_of(source).unwrap_or(Half::Left);
                    let cross = self.rng.random_bool(self.spec.locality);
                    let pool = match (own, cross) {
                        (Half::Left, true) | (Half::Right, false) => &self.right,
                        _ => &self.left,
                    };
                    pick_other(&mut self.rng, pool, source)
                }
            };
            set.insert(d);
        }
        set.into_iter().collect()
    }
}

impl Iterator for PoissonStream<'_> {
    type Item = SpikeEvent;

    fn next(&mut self) -> Option<SpikeEvent> {
        loop {
            let gaps = self.gaps?;
            let Reverse((tick, source)) = self.heap.pop()?;
            let next = tick.saturating_add(1).saturating_add(gaps.sample(&mut self.rng));
            if next < self.duration {
                self.heap.push(Reverse((next, source)));
            }
            let destinations = self.destinations(source);
            if destinations.is_empty() {
                continue;
            }
            let spike_id = self.next_id;
            self.next_id += 1;
            return Some(SpikeEvent {
                spike_id,
                source,
                tick,
                destinations,
            });
        }
    }
}

/// Bernoulli-per-tick Poisson firing over `spec.duration_ticks`.
pub fn poisson_workload<'a>(
    spec: &WorkloadSpec,
    population: &'a Population,
    table: Option<&'a RoutingTable>,
) -> Result<PoissonStream<'a>, TrafficError> {
    spec.validate()?;
    let p = spec.fire_probability();
    if p >= 1.0 {
        return Err(TrafficError::RateTooHigh(p));
    }
    if spec.destinations == DestinationMode::Locality && table.is_none() && population.halves.is_none() {
        return Err(TrafficError::Invalid(
            "locality destinations need a topology with a median cut".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let gaps = if p > 0.0 {
        Some(Geometric::new(p).map_err(|e| TrafficError::Invalid(e.to_string()))?)
    } else {
        None
    };
    let mut heap = BinaryHeap::new();
    if let Some(g) = gaps {
        for n in 0..population.len() {
            let first = g.sample(&mut rng);
            if first < spec.duration_ticks {
                heap.push(Reverse((first, n)));
            }
        }
    }
    let (left, right) = match population.halves {
        Some(_) => (population.members(Half::Left)?, population.members(Half::Right)?),
        None => (Vec::new(), Vec::new()),
    };
    Ok(PoissonStream {
        rng,
        gaps,
        heap,
        duration: spec.duration_ticks,
        next_id: 0,
        population,
        table,
        spec: spec.clone(),
        left,
        right,
        all: (0..population.len()).collect(),
    })
}

/// A synchronized burst and how it was assembled.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BurstWorkload {
    pub events: Vec<SpikeEvent>,
    /// Spikes whose target is across the cut.
    pub cross: usize,
    /// Set when the halves differ in size and the surplus neurons were left out.
    pub excluded: bool,
}

/// Every neuron of the smaller-or-equal left half fires once at
/// `burst_tick`. `round(α·m)` of the `m` sources target the right half,
/// the rest stay in the left half.
pub fn burst_workload(
    population: &Population,
    burst_tick: u64,
    alpha: f64,
    pairing: BurstPairing,
    seed: u64,
) -> Result<BurstWorkload, TrafficError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(TrafficError::Invalid("locality must lie in [0, 1]".into()));
    }
    let left = population.members(Half::Left)?;
    let right = population.members(Half::Right)?;
    let m = left.len().min(right.len());
    let excluded = left.len() != right.len();
    let crossing = (alpha * m as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sources = &left[..m];
    let mut order: Vec<usize> = (0..m).collect();
    let (mut remote, mut local) = (right[..m].to_vec(), sources.to_vec());
    if pairing == BurstPairing::Permutation {
        order.shuffle(&mut rng);
        remote = right.clone();
        remote.shuffle(&mut rng);
        local = left.clone();
        local.shuffle(&mut rng);
    }
    let mut targets = vec![0; m];
    for (rank, &i) in order.iter().enumerate() {
        targets[i] = if rank < crossing { remote[rank] } else { local[rank] };
    }
    let events = sources
        .iter()
        .zip(targets)
        .enumerate()
        .map(|(i, (&source, dst))| SpikeEvent {
            spike_id: i as u64,
            source,
            tick: burst_tick,
            destinations: vec![dst],
        })
        .collect();
    Ok(BurstWorkload {
        events,
        cross: crossing,
        excluded,
    })
}

/// Parses a spike trace: one `neuron_id,tick[,dst1;dst2;...]` per line.
/// Without a destination field the routing table supplies the fanout.
/// Blank lines and lines starting with `#` are skipped.
pub fn replay_workload(
    trace: &str,
    population: u32,
    table: Option<&RoutingTable>,
) -> Result<Vec<SpikeEvent>, TrafficError> {
    let mut events = Vec::new();
    let mut last_tick = 0;
    for (i, raw) in trace.lines().enumerate() {
        let line_no = i + 1;
        let err = |reason: String| TrafficError::Trace { line: line_no, reason };
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if !(2..=3).contains(&fields.len()) {
            return Err(err(format!("expected 2 or 3 fields, found {} in `{line}`", fields.len())));
        }
        let neuron = |f: &str| -> Result<NeuronId, TrafficError> {
            let v: u64 = f.parse().map_err(|e| err(format!("`{f}`: {e}")))?;
            if v >= population as u64 {
                return Err(err(format!("neuron {v} out of range (population {population}) in `{line}`")));
            }
            Ok(v as NeuronId)
        };
        let source = neuron(fields[0])?;
        let tick: u64 = fields[1].parse().map_err(|e| err(format!("`{}`: {e}", fields[1])))?;
        if tick < last_tick {
            return Err(err(format!("tick {tick} precedes previous tick {last_tick}")));
        }
        last_tick = tick;
        let mut destinations = match fields.get(2) {
            Some(list) if !list.is_empty() => list
                .split(';')
                .filter(|s| !s.trim().is_empty())
                .map(|s| neuron(s.trim()))
                .collect::<Result<Vec<_>, _>>()?,
            _ => match table {
                Some(t) => t.fanout(source).to_vec(),
                None => return Err(err("no destination field and no routing table".into())),
            },
        };
        destinations.sort_unstable();
        destinations.dedup();
        if destinations.is_empty() {
            return Err(err(format!("neuron {source} has no destinations")));
        }
        events.push(SpikeEvent {
            spike_id: events.len() as u64,
            source,
            tick,
            destinations,
        });
    }
    Ok(events)
}

/// Writes events in the trace format read by [`replay_workload`].
pub fn to_trace(events: &[SpikeEvent]) -> String {
    let mut s = String::new();
    for e in events {
        let dsts: Vec<String> = e.destinations.iter().map(u32::to_string).collect();
        writeln!(s, "{},{},{}", e.source, e.tick, dsts.join(";")).unwrap();
    }
    s
}

/// Materializes the workload described by `spec`. Replay reads `trace`.
pub fn generate(
    spec: &WorkloadSpec,
    population: &Population,
    table: Option<&RoutingTable>,
    trace: Option<&str>,
) -> Result<Vec<SpikeEvent>, TrafficError> {
    spec.validate()?;
    match spec.kind {
        WorkloadKind::Poisson => Ok(poisson_workload(spec, population, table)?.collect()),
        WorkloadKind::Burst => {
            Ok(burst_workload(population, spec.burst_tick, spec.locality, spec.pairing, spec.seed)?.events)
        }
        WorkloadKind::Replay => {
            let trace = trace.ok_or_else(|| TrafficError::Invalid("replay workload needs a trace".into()))?;
            replay_workload(trace, population.len(), table)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{build_mesh, build_tree, LinkTiming};
    use proptest::prelude::*;

    fn pop_mesh(w: usize, h: usize, per: u32) -> Population {
        Population::from_topology(&build_mesh(w, h, LinkTiming::default(), per).unwrap())
    }

    #[test]
    fn poisson_count_within_three_sigma() {
        // 10 neurons on a 10x1 line, 10 Hz for 100 s at 1 ms ticks.
        let pop = pop_mesh(10, 1, 1);
        let spec = WorkloadSpec {
            rate_hz: 10.0,
            duration_ticks: 100_000,
            tick_duration_s: 1e-3,
            seed: 11,
            ..WorkloadSpec::default()
        };
        let n = poisson_workload(&spec, &pop, None).unwrap().count() as f64;
        // Binomial(10^6, 0.01): mean 10^4, sd ~ sqrt(10^4 * 0.99).
        assert!((n - 1e4).abs() < 3.0 * 1e4f64.sqrt(), "{n}");
    }

    #[test]
    fn poisson_rate_converges() {
        // 100 neurons x 1000 s = 10^5 neuron-seconds.
        let pop = pop_mesh(10, 10, 1);
        let spec = WorkloadSpec {
            rate_hz: 10.0,
            duration_ticks: 1_000_000,
            tick_duration_s: 1e-3,
            seed: 2024,
            ..WorkloadSpec::default()
        };
        let count = poisson_workload(&spec, &pop, None).unwrap().count();
        let empirical = count as f64 / (100.0 * 1000.0);
        assert!((empirical - 10.0).abs() / 10.0 < 0.01, "{empirical}");
        // golden value for this seed
        assert_eq!(count, 999_339);
    }

    #[test]
    fn poisson_edge_cases() {
        let pop = pop_mesh(4, 1, 1);
        let zero = WorkloadSpec {
            rate_hz: 0.0,
            ..WorkloadSpec::default()
        };
        assert_eq!(poisson_workload(&zero, &pop, None).unwrap().count(), 0);
        let hot = WorkloadSpec {
            rate_hz: 2000.0,
            ..WorkloadSpec::default()
        };
        assert!(matches!(poisson_workload(&hot, &pop, None), Err(TrafficError::RateTooHigh(_))));
    }

    #[test]
    fn poisson_ids_and_order() {
        let pop = pop_mesh(4, 4, 2);
        let spec = WorkloadSpec {
            rate_hz: 50.0,
            duration_ticks: 5000,
            fanout: 3,
            ..WorkloadSpec::default()
        };
        let ev: Vec<_> = poisson_workload(&spec, &pop, None).unwrap().collect();
        assert!(!ev.is_empty());
        for w in ev.windows(2) {
            assert_eq!(w[1].spike_id, w[0].spike_id + 1);
            assert!((w[0].tick, w[0].source) < (w[1].tick, w[1].source));
        }
        for e in &ev {
            assert!(!e.destinations.is_empty() && e.destinations.len() <= 3);
            assert!(!e.destinations.contains(&e.source));
            assert!(e.destinations.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn poisson_locality_all_cross() {
        let pop = pop_mesh(4, 2, 1);
        let spec = WorkloadSpec {
            rate_hz: 100.0,
            duration_ticks: 2000,
            destinations: DestinationMode::Locality,
            locality: 1.0,
            ..WorkloadSpec::default()
        };
        for e in poisson_workload(&spec, &pop, None).unwrap() {
            assert_ne!(pop.half_of(e.source), pop.half_of(e.destinations[0]));
        }
    }

    #[test]
    fn poisson_uses_table() {
        let pop = pop_mesh(3, 1, 1);
        let table = RoutingTable::parse("1 2\n\n0\n", 3, crate::routing::AddressScheme::Flat).unwrap();
        let spec = WorkloadSpec {
            rate_hz: 100.0,
            duration_ticks: 500,
            ..WorkloadSpec::default()
        };
        for e in poisson_workload(&spec, &pop, Some(&table)).unwrap() {
            assert_ne!(e.source, 1);
            assert_eq!(e.destinations, table.fanout(e.source));
        }
    }

    #[test]
    fn burst_examples() {
        let pop = pop_mesh(4, 2, 1);
        let b = burst_workload(&pop, 7, 1.0, BurstPairing::Permutation, 3).unwrap();
        assert_eq!(b.events.len(), 4);
        assert!(!b.excluded);
        for e in &b.events {
            assert_eq!(e.tick, 7);
            assert_eq!(pop.half_of(e.source), Some(Half::Left));
            assert_eq!(pop.half_of(e.destinations[0]), Some(Half::Right));
        }
        let half = burst_workload(&pop, 0, 0.5, BurstPairing::Permutation, 3).unwrap();
        let crossing = half
            .events
            .iter()
            .filter(|e| pop.half_of(e.destinations[0]) == Some(Half::Right))
            .count();
        assert_eq!((crossing, half.cross), (2, 2));
        let two = burst_workload(&pop_mesh(2, 1, 1), 0, 1.0, BurstPairing::Permutation, 0).unwrap();
        assert_eq!(two.events.len(), 1);
        let odd = burst_workload(&pop_mesh(3, 1, 1), 0, 1.0, BurstPairing::Permutation, 0).unwrap();
        assert!(odd.excluded);
        assert_eq!(odd.events.len(), 1);
        assert!(burst_workload(&pop_mesh(1, 1, 3), 0, 1.0, BurstPairing::Aligned, 0).is_err());
    }

    #[test]
    fn aligned_burst_shifts_by_half_width() {
        let t = build_mesh(4, 4, LinkTiming::default(), 1).unwrap();
        let pop = Population::from_topology(&t);
        let b = burst_workload(&pop, 0, 1.0, BurstPairing::Aligned, 0).unwrap();
        for e in &b.events {
            let (sx, sy) = t.coords(pop.router_of(e.source)).unwrap();
            let (dx, dy) = t.coords(pop.router_of(e.destinations[0])).unwrap();
            assert_eq!((dx, dy), (sx + 2, sy));
        }
    }

    #[test]
    fn tree_burst_halves() {
        let t = build_tree(2, 8, LinkTiming::default(), 1).unwrap();
        let pop = Population::from_topology(&t);
        let b = burst_workload(&pop, 0, 1.0, BurstPairing::Permutation, 9).unwrap();
        assert_eq!(b.events.len(), 4);
        assert!(b.events.iter().all(|e| e.source < 4 && e.destinations[0] >= 4));
    }

    #[test]
    fn replay_parsing() {
        let ev = replay_workload("0,1,2\n1,1,0;2\n2,5,1\n", 3, None).unwrap();
        assert_eq!(ev.len(), 3);
        assert_eq!(ev[1].destinations, vec![0, 2]);
        assert_eq!(ev.iter().map(|e| e.spike_id).collect::<Vec<_>>(), vec![0, 1, 2]);
        assert!(replay_workload("", 3, None).unwrap().is_empty());
        let err = replay_workload("0,1,2\n9,2,1\n", 3, None).unwrap_err();
        assert!(matches!(&err, TrafficError::Trace { line: 2, reason } if reason.contains("9,2,1")), "{err}");
        let err = replay_workload("0,5,2\n1,2,0\n", 3, None).unwrap_err();
        assert!(matches!(err, TrafficError::Trace { line: 2, .. }));
        let err = replay_workload("0,x,2\n", 3, None).unwrap_err();
        assert!(matches!(err, TrafficError::Trace { line: 1, .. }));
        assert!(replay_workload("0,1\n", 3, None).is_err());
        let table = RoutingTable::parse("1 2\n", 3, crate::routing::AddressScheme::Flat).unwrap();
        assert_eq!(replay_workload("0,1\n", 3, Some(&table)).unwrap()[0].destinations, vec![1, 2]);
    }

    proptest! {
        #[test]
        fn seeded_determinism(seed: u64, rate in 1.0f64..200.0, fanout in 1u32..4) {
            let pop = pop_mesh(3, 3, 2);
            let spec = WorkloadSpec { rate_hz: rate, duration_ticks: 300, seed, fanout, ..WorkloadSpec::default() };
            let a = to_trace(&poisson_workload(&spec, &pop, None).unwrap().collect::<Vec<_>>());
            let b = to_trace(&poisson_workload(&spec, &pop, None).unwrap().collect::<Vec<_>>());
            prop_assert_eq!(&a, &b);
            let back = replay_workload(&a, pop.len(), None).unwrap();
            prop_assert_eq!(to_trace(&back), a);
        }

        #[test]
        fn burst_cross_count(w in 1usize..5, h in 1usize..4, per in 1u32..4, alpha in 0.0f64..=1.0, seed: u64) {
            let pop = pop_mesh(2 * w, h, per);
            let b = burst_workload(&pop, 0, alpha, BurstPairing::Permutation, seed).unwrap();
            let m = pop.len() as usize / 2;
            let crossing = b.events.iter().filter(|e| pop.half_of(e.destinations[0]) == Some(Half::Right)).count();
            prop_assert_eq!(crossing, (alpha * m as f64).round() as usize);
            prop_assert_eq!(b.events.len(), m);
        }
    }
}
