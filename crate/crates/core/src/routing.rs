//! Path computation and routing-table storage accounting.
//!
//! Grids use dimension-ordered (X then Y) routing; on a torus each
//! dimension takes the shorter wrap direction, ties going positive. Trees
//! route multicast packets along the union of the unicast tree paths, so a
//! packet climbs only as far as it must and branches as early as it can.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use thiserror::Error;

use crate::topology::{NeuronId, RouterId, Topology, TopologyKind};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RoutingError {
    #[error("{routing} routing does not apply to a {kind} topology")]
    WrongKind { routing: &'static str, kind: &'static str },
    #[error("router {0} does not exist")]
    NoSuchRouter(RouterId),
    #[error("destination router {0} is not a tree leaf")]
    NotALeaf(RouterId),
    #[error("no route from router {src} to router {dst}")]
    Unreachable { src: RouterId, dst: RouterId },
    #[error("destination neuron {dst} out of range (population {population})")]
    BadNeuron { dst: u64, population: u32 },
    #[error("connectivity line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("{0}")]
    Invalid(String),
}

/// A packet's path. For multicast the edges form a tree rooted at
/// `source`; they are stored breadth-first so every edge comes after the
/// edge that feeds it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Route {
    pub source: RouterId,
    pub edges: Vec<(RouterId, RouterId)>,
    pub destinations: Vec<RouterId>,
}

impl Route {
    /// Routers visited after the source, in order. Meaningful for unicast.
    pub fn hops(&self) -> Vec<RouterId> {
        self.edges.iter().map(|&(_, d)| d).collect()
    }

    pub fn hop_count(&self) -> usize {
        self.edges.len()
    }

    pub fn link_set(&self) -> BTreeSet<(RouterId, RouterId)> {
        self.edges.iter().copied().collect()
    }

    /// Outgoing edges of the route at each router.
    pub fn branches(&self) -> BTreeMap<RouterId, Vec<RouterId>> {
        let mut m: BTreeMap<RouterId, Vec<RouterId>> = BTreeMap::new();
        for &(a, b) in &self.edges {
            m.entry(a).or_default().push(b);
        }
        m
    }
}

/// Dimension traversed by one grid hop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

/// Routing function applied by the simulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Routing {
    /// XY routing, one unicast packet per destination router.
    DimensionOrdered,
    /// Tree multicast, one packet replicated at branch routers.
    TreeMulticast,
}

impl Routing {
    pub fn for_topology(t: &Topology) -> Self {
        if t.kind().is_tree() {
            Routing::TreeMulticast
        } else {
            Routing::DimensionOrdered
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Routing::DimensionOrdered => "dimension-ordered",
            Routing::TreeMulticast => "tree-multicast",
        }
    }

    /// Packets needed to carry one spike from `src` to every router in
    /// `dsts`. Destinations equal to `src` are delivered locally and get no
    /// packet of their own on a grid.
    pub fn plan(self, t: &Topology, src: RouterId, dsts: &BTreeSet<RouterId>) -> Result<Vec<Route>, RoutingError> {
        match self {
            Routing::DimensionOrdered => dsts.iter().map(|&d| xy_route(t, src, d)).collect(),
            Routing::TreeMulticast => {
                if dsts.is_empty() {
                    return Ok(Vec::new());
                }
                let dsts: Vec<_> = dsts.iter().copied().collect();
                Ok(vec![tree_multicast_route(t, src, &dsts)?])
            }
        }
    }

    pub fn hop_count(self, t: &Topology, src: RouterId, dst: RouterId) -> Result<usize, RoutingError> {
        match self {
            Routing::DimensionOrdered => xy_route(t, src, dst).map(|r| r.hop_count()),
            Routing::TreeMulticast => {
                check_router(t, src)?;
                check_router(t, dst)?;
                if !t.kind().is_tree() {
                    return Err(RoutingError::WrongKind {
                        routing: "tree",
                        kind: t.kind().name(),
                    });
                }
                Ok(tree_path(t, src, dst).len())
            }
        }
    }
}

fn check_router(t: &Topology, r: RouterId) -> Result<(), RoutingError> {
    if r < t.router_count() {
        Ok(())
    } else {
        Err(RoutingError::NoSuchRouter(r))
    }
}

/// Signed per-dimension steps from `from` to `to` on a ring or line.
fn steps(from: usize, to: usize, size: usize, wrap: bool) -> (isize, usize) {
    if !wrap {
        return if to >= from { (1, to - from) } else { (-1, from - to) };
    }
    let fwd = (to + size - from) % size;
    let back = (size - fwd) % size;
    if fwd <= back {
        (1, fwd)
    } else {
        (-1, back)
    }
}

/// Dimension-ordered route between grid routers.
pub fn xy_route(t: &Topology, src: RouterId, dst: RouterId) -> Result<Route, RoutingError> {
    let (width, height, wrap) = match t.kind() {
        TopologyKind::Mesh { width, height } => (width, height, false),
        TopologyKind::Torus { width, height, .. } => (width, height, true),
        other => {
            return Err(RoutingError::WrongKind {
                routing: "dimension-ordered",
                kind: other.name(),
            })
        }
    };
    check_router(t, src)?;
    check_router(t, dst)?;
    let (sx, sy) = (src % width, src / width);
    let (dx, dy) = (dst % width, dst / width);
    let mut edges = Vec::new();
    let (mut x, mut y) = (sx, sy);
    let (dir, n) = steps(sx, dx, width, wrap);
    for _ in 0..n {
        let nx = (x as isize + dir).rem_euclid(width as isize) as usize;
        edges.push((y * width + x, y * width + nx));
        x = nx;
    }
    let (dir, n) = steps(sy, dy, height, wrap);
    for _ in 0..n {
        let ny = (y as isize + dir).rem_euclid(height as isize) as usize;
        edges.push((y * width + x, ny * width + x));
        y = ny;
    }
    for &(a, b) in &edges {
        if t.link_between(a, b).is_none() {
            return Err(RoutingError::Unreachable { src: a, dst: b });
        }
    }
    Ok(Route {
        source: src,
        edges,
        destinations: vec![dst],
    })
}

/// Axis of each hop of a grid route.
pub fn hop_axes(t: &Topology, route: &Route) -> Vec<Axis> {
    route
        .edges
        .iter()
        .map(|&(a, b)| match (t.coords(a), t.coords(b)) {
            (Some((_, ay)), Some((_, by))) if ay == by => Axis::X,
            _ => Axis::Y,
        })
        .collect()
}

/// Whether a route ever turns from the Y dimension back into X.
pub fn has_y_to_x_turn(t: &Topology, route: &Route) -> bool {
    hop_axes(t, route).windows(2).any(|w| w[0] == Axis::Y && w[1] == Axis::X)
}

/// Edges of the unique tree path from `a` to `b`.
fn tree_path(t: &Topology, a: RouterId, b: RouterId) -> Vec<(RouterId, RouterId)> {
    let mut up = Vec::new();
    let mut down = Vec::new();
    let (mut x, mut y) = (a, b);
    let mut dx = t.tree_depth_of(x).unwrap_or(0);
    let mut dy = t.tree_depth_of(y).unwrap_or(0);
    while dx > dy {
        let p = t.parent(x).expect("non-root has a parent");
        up.push((x, p));
        x = p;
        dx -= 1;
    }
    while dy > dx {
        let p = t.parent(y).expect("non-root has a parent");
        down.push((p, y));
        y = p;
        dy -= 1;
    }
    while x != y {
        let px = t.parent(x).expect("non-root has a parent");
        let py = t.parent(y).expect("non-root has a parent");
        up.push((x, px));
        down.push((py, y));
        x = px;
        y = py;
    }
    down.reverse();
    up.extend(down);
    up
}

/// Multicast route on a tree: the union of the unicast paths from `src`
/// to each destination leaf, each directed link used once.
pub fn tree_multicast_route(t: &Topology, src: RouterId, dsts: &[RouterId]) -> Result<Route, RoutingError> {
    if !t.kind().is_tree() {
        return Err(RoutingError::WrongKind {
            routing: "tree multicast",
            kind: t.kind().name(),
        });
    }
    check_router(t, src)?;
    if dsts.is_empty() {
        return Err(RoutingError::Invalid("multicast needs at least one destination".into()));
    }
    let mut union = BTreeSet::new();
    for &d in dsts {
        check_router(t, d)?;
        if !t.is_leaf(d) {
            return Err(RoutingError::NotALeaf(d));
        }
        union.extend(tree_path(t, src, d));
    }
    let mut children: BTreeMap<RouterId, Vec<RouterId>> = BTreeMap::new();
    for &(a, b) in &union {
        children.entry(a).or_default().push(b);
    }
    let mut edges = Vec::with_capacity(union.len());
    let mut queue = VecDeque::from([src]);
    while let Some(u) = queue.pop_front() {
        for &v in children.get(&u).map(Vec::as_slice).unwrap_or(&[]) {
            edges.push((u, v));
            queue.push_back(v);
        }
    }
    let destinations: BTreeSet<_> = dsts.iter().copied().collect();
    Ok(Route {
        source: src,
        edges,
        destinations: destinations.into_iter().collect(),
    })
}

/// `⌈lg x⌉` for `x ≥ 1`, computed on integers.
pub fn ceil_log2(x: u64) -> u32 {
    if x <= 1 {
        0
    } else {
        64 - (x - 1).leading_zeros()
    }
}

/// How a destination address is encoded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AddressScheme {
    /// One flat index over all `N·S` destinations: `⌈lg(N·S)⌉` bits.
    Flat,
    /// Destination cluster plus local synapse address, each rounded up.
    Clustered { clusters: u64, local: u64 },
}

/// Per-source fanout lists, as stored by a table-driven AER router.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoutingTable {
    fanouts: Vec<Vec<NeuronId>>,
    address_bits: u32,
    population: u32,
}

impl RoutingTable {
    pub fn new(fanouts: Vec<Vec<NeuronId>>, population: u32, scheme: AddressScheme) -> Result<Self, RoutingError> {
        if fanouts.len() > population as usize {
            return Err(RoutingError::Invalid(format!(
                "{} source lists for a population of {population}",
                fanouts.len()
            )));
        }
        if let Some(&dst) = fanouts.iter().flatten().find(|&&d| d >= population) {
            return Err(RoutingError::BadNeuron {
                dst: dst as u64,
                population,
            });
        }
        let entries: u64 = fanouts.iter().map(|f| f.len() as u64).sum();
        let address_bits = match scheme {
            AddressScheme::Flat => ceil_log2(entries),
            AddressScheme::Clustered { clusters, local } => ceil_log2(clusters) + ceil_log2(local),
        };
        Ok(Self {
            fanouts,
            address_bits,
            population,
        })
    }

    /// `n` neurons each projecting to `s` destinations, neuron `i` to
    /// `(i + 1 + j) mod n` for `j < s`.
    pub fn uniform(n: u32, s: u32) -> Result<Self, RoutingError> {
        if n == 0 {
            return Self::new(Vec::new(), 0, AddressScheme::Flat);
        }
        let fanouts = (0..n)
            .map(|i| (0..s).map(|j| ((i as u64 + 1 + j as u64) % n as u64) as NeuronId).collect())
            .collect();
        Self::new(fanouts, n, AddressScheme::Flat)
    }

    /// Parses a connectivity file: line `i` lists the destinations of neuron
    /// `i`, separated by whitespace or commas. Blank lines mean no fanout.
    pub fn parse(text: &str, population: u32, scheme: AddressScheme) -> Result<Self, RoutingError> {
        let mut fanouts = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let mut list = Vec::new();
            for tok in line.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()) {
                let id: u64 = tok.parse().map_err(|e| RoutingError::Parse {
                    line: i + 1,
                    reason: format!("`{tok}`: {e}"),
                })?;
                if id >= population as u64 {
                    return Err(RoutingError::Parse {
                        line: i + 1,
                        reason: format!("destination {id} out of range (population {population})"),
                    });
                }
                list.push(id as NeuronId);
            }
            fanouts.push(list);
        }
        if fanouts.len() > population as usize {
            return Err(RoutingError::Parse {
                line: population as usize + 1,
                reason: format!("more source lines than the population of {population}"),
            });
        }
        Self::new(fanouts, population, scheme)
    }

    pub fn address_bits(&self) -> u32 {
        self.address_bits
    }

    pub fn population(&self) -> u32 {
        self.population
    }

    pub fn fanout(&self, neuron: NeuronId) -> &[NeuronId] {
        self.fanouts.get(neuron as usize).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn sources(&self) -> usize {
        self.fanouts.len()
    }
}

/// Bits needed to store the table: Σ fanout length × address width.
pub fn routing_table_bits(rt: &RoutingTable) -> u64 {
    rt.fanouts.iter().map(|f| f.len() as u64 * rt.address_bits as u64).sum()
}
