//! Router graphs: 2D mesh, 2D torus (optionally with one diagonal axis),
//! balanced trees and a hierarchical tree-of-clusters variant.
//!
//! Routers are numbered densely from zero. Mesh and torus routers are laid
//! out row-major (`id = y * width + x`). Tree routers are numbered
//! breadth-first from the root, so the children of `i` are
//! `fanout*i + 1 ..= fanout*i + fanout`.
//!
//! Every link is directed; constructors always emit both directions.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::routing::{Routing, RoutingError};

pub type RouterId = usize;
pub type NeuronId = u32;

/// Upper bound on routers a constructor will allocate.
pub const MAX_ROUTERS: usize = 1 << 22;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error("invalid dimensions: {0}")]
    Dimensions(String),
    #[error("topology too large: {0} routers")]
    TooLarge(u128),
    #[error("{0}")]
    Undefined(String),
    #[error("invalid link {src}->{dst}: {reason}")]
    BadLink {
        src: RouterId,
        dst: RouterId,
        reason: String,
    },
    #[error("topology is not connected: router {0} unreachable from router 0")]
    Disconnected(RouterId),
    #[error("parse error on line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// Default per-link timing applied by the constructors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkTiming {
    /// Ticks a link is occupied per spike (o).
    pub service_ticks: u64,
    /// Ticks added before a spike joins the output queue at each hop.
    pub pipeline_ticks: u64,
}

impl Default for LinkTiming {
    fn default() -> Self {
        Self {
            service_ticks: 1,
            pipeline_ticks: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TopologyKind {
    Mesh { width: usize, height: usize },
    Torus { width: usize, height: usize, diagonals: bool },
    Tree { fanout: usize, depth: u32 },
    /// Tree whose leaf routers each front a multi-neuron cluster.
    Hierarchical { fanout: usize, depth: u32 },
}

impl TopologyKind {
    pub fn is_grid(&self) -> bool {
        matches!(self, TopologyKind::Mesh { .. } | TopologyKind::Torus { .. })
    }

    pub fn is_tree(&self) -> bool {
        matches!(self, TopologyKind::Tree { .. } | TopologyKind::Hierarchical { .. })
    }

    pub fn name(&self) -> &'static str {
        match self {
            TopologyKind::Mesh { .. } => "mesh",
            TopologyKind::Torus { .. } => "torus",
            TopologyKind::Tree { .. } => "tree",
            TopologyKind::Hierarchical { .. } => "hierarchical",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Link {
    pub src: RouterId,
    pub dst: RouterId,
    pub service_time_ticks: u64,
    pub pipeline_latency_ticks: u64,
}

/// Neurons attached to one router.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cluster {
    pub neurons: u32,
    /// Neurons that talk to other clusters (N_c).
    pub external: u32,
}

/// Which side of the canonical median cut a router sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Half {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    kind: TopologyKind,
    router_count: usize,
    links: Vec<Link>,
    clusters: BTreeMap<RouterId, Cluster>,
    /// Outgoing link indices per router, sorted by destination.
    out: Vec<Vec<usize>>,
    /// Tree leaves beyond the requested count that host no cluster.
    padded: bool,
}

fn check_size(n: u128) -> Result<usize, TopologyError> {
    if n > MAX_ROUTERS as u128 {
        Err(TopologyError::TooLarge(n))
    } else {
        Ok(n as usize)
    }
}

impl Topology {
    /// Assembles and validates a topology from parts.
    pub fn from_parts(
        kind: TopologyKind,
        router_count: usize,
        links: Vec<Link>,
        clusters: BTreeMap<RouterId, Cluster>,
        padded: bool,
    ) -> Result<Self, TopologyError> {
        let mut out = vec![Vec::new(); router_count];
        for (i, l) in links.iter().enumerate() {
            let bad = |reason: &str| TopologyError::BadLink {
                src: l.src,
                dst: l.dst,
                reason: reason.to_string(),
            };
            if l.src >= router_count || l.dst >= router_count {
                return Err(bad("router id out of range"));
            }
            if l.src == l.dst {
                return Err(bad("self loop"));
            }
            if l.service_time_ticks < 1 {
                return Err(bad("service time must be >= 1 tick"));
            }
            out[l.src].push(i);
        }
        for list in &mut out {
            list.sort_by_key(|&i| links[i].dst);
            if list.windows(2).any(|w| links[w[0]].dst == links[w[1]].dst) {
                let l = links[list[0]];
                return Err(TopologyError::BadLink {
                    src: l.src,
                    dst: l.dst,
                    reason: "duplicate link".into(),
                });
            }
        }
        if let Some((&r, _)) = clusters.iter().find(|(&r, _)| r >= router_count) {
            return Err(TopologyError::Dimensions(format!("cluster attached to missing router {r}")));
        }
        if let Some((&r, _)) = clusters.iter().find(|(_, c)| c.external > c.neurons) {
            return Err(TopologyError::Dimensions(format!(
                "cluster at router {r} has more external than total neurons"
            )));
        }
        let t = Self {
            kind,
            router_count,
            links,
            clusters,
            out,
            padded,
        };
        t.check_connected()?;
        Ok(t)
    }

    fn check_connected(&self) -> Result<(), TopologyError> {
        if self.router_count == 0 {
            return Err(TopologyError::Dimensions("no routers".into()));
        }
        let mut seen = vec![false; self.router_count];
        seen[0] = true;
        let mut queue = VecDeque::from([0]);
        while let Some(u) = queue.pop_front() {
            for &li in &self.out[u] {
                let v = self.links[li].dst;
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        match seen.iter().position(|s| !s) {
            Some(r) => Err(TopologyError::Disconnected(r)),
            None => Ok(()),
        }
    }

    pub fn kind(&self) -> TopologyKind {
        self.kind
    }

    pub fn router_count(&self) -> usize {
        self.router_count
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn clusters(&self) -> &BTreeMap<RouterId, Cluster> {
        &self.clusters
    }

    pub fn padded(&self) -> bool {
        self.padded
    }

    /// Number of outgoing links (excludes the local port).
    pub fn degree(&self, r: RouterId) -> usize {
        self.out[r].len()
    }

    pub fn out_links(&self, r: RouterId) -> impl Iterator<Item = (usize, &Link)> + '_ {
        self.out[r].iter().map(move |&i| (i, &self.links[i]))
    }

    /// Index of the link `src -> dst`, if present.
    pub fn link_between(&self, src: RouterId, dst: RouterId) -> Option<usize> {
        let list = self.out.get(src)?;
        list.binary_search_by_key(&dst, |&i| self.links[i].dst).ok().map(|p| list[p])
    }

    /// Overrides one link's timing.
    pub fn set_link_timing(&mut self, link: usize, timing: LinkTiming) -> Result<(), TopologyError> {
        let l = self.links.get_mut(link).ok_or_else(|| TopologyError::Undefined(format!("no link {link}")))?;
        if timing.service_ticks < 1 {
            return Err(TopologyError::BadLink {
                src: l.src,
                dst: l.dst,
                reason: "service time must be >= 1 tick".into(),
            });
        }
        l.service_time_ticks = timing.service_ticks;
        l.pipeline_latency_ticks = timing.pipeline_ticks;
        Ok(())
    }

    pub fn coords(&self, r: RouterId) -> Option<(usize, usize)> {
        match self.kind {
            TopologyKind::Mesh { width, .. } | TopologyKind::Torus { width, .. } => Some((r % width, r / width)),
            _ => None,
        }
    }

    pub fn router_at(&self, x: usize, y: usize) -> Option<RouterId> {
        match self.kind {
            TopologyKind::Mesh { width, height } | TopologyKind::Torus { width, height, .. }
                if x < width && y < height =>
            {
                Some(y * width + x)
            }
            _ => None,
        }
    }

    fn tree_shape(&self) -> Option<(usize, u32)> {
        match self.kind {
            TopologyKind::Tree { fanout, depth } | TopologyKind::Hierarchical { fanout, depth } => {
                Some((fanout, depth))
            }
            _ => None,
        }
    }

    pub fn parent(&self, r: RouterId) -> Option<RouterId> {
        let (fanout, _) = self.tree_shape()?;
        if r == 0 {
            None
        } else {
            Some((r - 1) / fanout)
        }
    }

    /// Depth of a tree router; the root is 0.
    pub fn tree_depth_of(&self, mut r: RouterId) -> Option<u32> {
        let mut d = 0;
        while let Some(p) = self.parent(r) {
            r = p;
            d += 1;
        }
        self.tree_shape().map(|_| d)
    }

    pub fn is_leaf(&self, r: RouterId) -> bool {
        match self.tree_shape() {
            Some((fanout, _)) => fanout * r + 1 >= self.router_count,
            None => false,
        }
    }

    /// Side of the median cut. Grids split at column `⌊w/2⌋` (rows when
    /// `w = 1`); trees put the first `⌊f/2⌋` root subtrees on the left and
    /// the root with the remaining subtrees on the right.
    pub fn half_of(&self, r: RouterId) -> Result<Half, TopologyError> {
        if self.router_count < 2 {
            return Err(TopologyError::Undefined(
                "median cut undefined for a single-router topology".into(),
            ));
        }
        let left = match self.kind {
            TopologyKind::Mesh { width, height } | TopologyKind::Torus { width, height, .. } => {
                let (x, y) = (r % width, r / width);
                if width >= 2 {
                    x < width / 2
                } else {
                    y < height / 2
                }
            }
            TopologyKind::Tree { fanout, .. } | TopologyKind::Hierarchical { fanout, .. } => {
                let mut cur = r;
                while let Some(p) = self.parent(cur) {
                    if p == 0 {
                        break;
                    }
                    cur = p;
                }
                // `cur` is the depth-1 ancestor (or the root).
                cur != 0 && cur <= fanout / 2
            }
        };
        Ok(if left { Half::Left } else { Half::Right })
    }

    /// Population size, summed over clusters.
    pub fn neuron_count(&self) -> u32 {
        self.clusters.values().map(|c| c.neurons).sum()
    }

    /// Router hosting each neuron, neurons numbered cluster by cluster in
    /// router order.
    pub fn neuron_routers(&self) -> Vec<RouterId> {
        self.clusters
            .iter()
            .flat_map(|(&r, c)| std::iter::repeat_n(r, c.neurons as usize))
            .collect()
    }

    /// Serializes to the line-oriented text format read by [`Topology::parse`].
    pub fn to_text(&self) -> String {
        let mut s = String::from("# spikenoc topology v1\n");
        match self.kind {
            TopologyKind::Mesh { width, height } => writeln!(s, "kind mesh {width} {height}"),
            TopologyKind::Torus {
                width,
                height,
                diagonals,
            } => writeln!(s, "kind torus {width} {height} {}", diagonals as u8),
            TopologyKind::Tree { fanout, depth } => writeln!(s, "kind tree {fanout} {depth}"),
            TopologyKind::Hierarchical { fanout, depth } => writeln!(s, "kind hierarchical {fanout} {depth}"),
        }
        .unwrap();
        writeln!(s, "routers {}", self.router_count).unwrap();
        writeln!(s, "padded {}", self.padded as u8).unwrap();
        for (r, c) in &self.clusters {
            writeln!(s, "cluster {r} {} {}", c.neurons, c.external).unwrap();
        }
        for l in &self.links {
            writeln!(
                s,
                "link {} {} {} {}",
                l.src, l.dst, l.service_time_ticks, l.pipeline_latency_ticks
            )
            .unwrap();
        }
        s
    }

    /// Parses the text format. Blank lines and `#` comments are ignored.
    ///
    /// ```text
    /// kind mesh <w> <h> | kind torus <w> <h> <diag 0|1> | kind tree <fanout> <depth>
    /// routers <count>
    /// padded <0|1>
    /// cluster <router> <neurons> <external>
    /// link <src> <dst> <service_ticks> <pipeline_ticks>
    /// ```
    pub fn parse(text: &str) -> Result<Self, TopologyError> {
        let mut kind = None;
        let mut routers = None;
        let mut padded = false;
        let mut clusters = BTreeMap::new();
        let mut links = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let err = |reason: String| TopologyError::Parse { line: line_no, reason };
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let tag = fields.next().unwrap_or_default();
            if tag == "kind" {
                let name = fields.next().unwrap_or_default();
                let rest: Vec<usize> = fields
                    .map(|f| f.parse::<usize>().map_err(|e| err(format!("`{f}`: {e}"))))
                    .collect::<Result<_, _>>()?;
                let k = match (name, rest.as_slice()) {
                        ("mesh", &[w, h]) => TopologyKind::Mesh { width: w, height: h },
                        ("torus", &[w, h, d]) => TopologyKind::Torus {
                            width: w,
                            height: h,
                            diagonals: d != 0,
                        },
                        ("tree", &[f, d]) => TopologyKind::Tree {
                            fanout: f,
                            depth: d as u32,
                        },
                        ("hierarchical", &[f, d]) => TopologyKind::Hierarchical {
                            fanout: f,
                            depth: d as u32,
                        },
                    _ => return Err(err(format!("bad kind line `{line}`"))),
                };
                kind = Some(k);
                continue;
            }
            let nums: Vec<u64> = fields
                .map(|f| f.parse::<u64>().map_err(|e| err(format!("`{f}`: {e}"))))
                .collect::<Result<_, _>>()?;
            let want = |n: usize| {
                if nums.len() == n {
                    Ok(())
                } else {
                    Err(err(format!("`{tag}` takes {n} fields, found {}", nums.len())))
                }
            };
            match tag {
                "routers" => {
                    want(1)?;
                    routers = Some(nums[0] as usize);
                }
                "padded" => {
                    want(1)?;
                    padded = nums[0] != 0;
                }
                "cluster" => {
                    want(3)?;
                    let c = Cluster {
                        neurons: u32::try_from(nums[1]).map_err(|e| err(e.to_string()))?,
                        external: u32::try_from(nums[2]).map_err(|e| err(e.to_string()))?,
                    };
                    if clusters.insert(nums[0] as usize, c).is_some() {
                        return Err(err(format!("router {} has two clusters", nums[0])));
                    }
                }
                "link" => {
                    want(4)?;
                    links.push(Link {
                        src: nums[0] as usize,
                        dst: nums[1] as usize,
                        service_time_ticks: nums[2],
                        pipeline_latency_ticks: nums[3],
                    });
                }
                other => return Err(err(format!("unknown record `{other}`"))),
            }
        }
        let kind = kind.ok_or(TopologyError::Parse {
            line: 0,
            reason: "missing `kind` line".into(),
        })?;
        let routers = routers.ok_or(TopologyError::Parse {
            line: 0,
            reason: "missing `routers` line".into(),
        })?;
        let expected = match kind {
            TopologyKind::Mesh { width, height } | TopologyKind::Torus { width, height, .. } => width * height,
            TopologyKind::Tree { fanout, depth } | TopologyKind::Hierarchical { fanout, depth } => {
                tree_router_count(fanout, depth)?
            }
        };
        if expected != routers {
            return Err(TopologyError::Dimensions(format!(
                "{} shape implies {expected} routers, file declares {routers}",
                kind.name()
            )));
        }
        Self::from_parts(kind, routers, links, clusters, padded)
    }
}

fn push_pair(links: &mut Vec<Link>, a: RouterId, b: RouterId, timing: LinkTiming) {
    for (src, dst) in [(a, b), (b, a)] {
        links.push(Link {
            src,
            dst,
            service_time_ticks: timing.service_ticks,
            pipeline_latency_ticks: timing.pipeline_ticks,
        });
    }
}

fn uniform_clusters(routers: impl Iterator<Item = RouterId>, neurons_per_cluster: u32) -> BTreeMap<RouterId, Cluster> {
    routers
        .map(|r| {
            (
                r,
                Cluster {
                    neurons: neurons_per_cluster,
                    external: neurons_per_cluster,
                },
            )
        })
        .collect()
}

fn check_timing(timing: LinkTiming) -> Result<(), TopologyError> {
    if timing.service_ticks < 1 {
        return Err(TopologyError::Dimensions("service_ticks must be >= 1".into()));
    }
    Ok(())
}

/// `width × height` grid with 4-neighbour links, one cluster per router.
pub fn build_mesh(
    width: usize,
    height: usize,
    timing: LinkTiming,
    neurons_per_cluster: u32,
) -> Result<Topology, TopologyError> {
    if width == 0 || height == 0 {
        return Err(TopologyError::Dimensions(format!("mesh {width}x{height} has a zero side")));
    }
    check_timing(timing)?;
    let n = check_size(width as u128 * height as u128)?;
    let mut links = Vec::with_capacity(4 * n);
    for y in 0..height {
        for x in 0..width {
            let id = y * width + x;
            if x + 1 < width {
                push_pair(&mut links, id, id + 1, timing);
            }
            if y + 1 < height {
                push_pair(&mut links, id, id + width, timing);
            }
        }
    }
    Topology::from_parts(
        TopologyKind::Mesh { width, height },
        n,
        links,
        uniform_clusters(0..n, neurons_per_cluster),
        false,
    )
}

/// Wraparound grid. With `diagonals`, each router also links to its
/// `(+1,+1)` and `(−1,−1)` neighbours, for degree 6.
pub fn build_torus(
    width: usize,
    height: usize,
    diagonals: bool,
    timing: LinkTiming,
    neurons_per_cluster: u32,
) -> Result<Topology, TopologyError> {
    if width < 3 || height < 3 {
        return Err(TopologyError::Dimensions(format!(
            "torus {width}x{height}: wraparound needs both sides >= 3"
        )));
    }
    check_timing(timing)?;
    let n = check_size(width as u128 * height as u128)?;
    let mut links = Vec::with_capacity(6 * n);
    for y in 0..height {
        for x in 0..width {
            let id = y * width + x;
            let east = y * width + (x + 1) % width;
            let north = ((y + 1) % height) * width + x;
            push_pair(&mut links, id, east, timing);
            push_pair(&mut links, id, north, timing);
            if diagonals {
                let ne = ((y + 1) % height) * width + (x + 1) % width;
                push_pair(&mut links, id, ne, timing);
            }
        }
    }
    Topology::from_parts(
        TopologyKind::Torus {
            width,
            height,
            diagonals,
        },
        n,
        links,
        uniform_clusters(0..n, neurons_per_cluster),
        false,
    )
}

fn tree_router_count(fanout: usize, depth: u32) -> Result<usize, TopologyError> {
    let mut total: u128 = 0;
    let mut level: u128 = 1;
    for _ in 0..=depth {
        total += level;
        check_size(total)?;
        level *= fanout as u128;
    }
    check_size(total)
}

fn tree_depth_for(fanout: usize, leaves: usize) -> u32 {
    let mut depth = 0;
    let mut cap = 1usize;
    while cap < leaves {
        cap = cap.saturating_mul(fanout);
        depth += 1;
    }
    depth
}

fn build_tree_kind(
    fanout: usize,
    leaves: usize,
    timing: LinkTiming,
    neurons_per_cluster: u32,
    hierarchical: bool,
) -> Result<Topology, TopologyError> {
    if fanout < 2 {
        return Err(TopologyError::Dimensions(format!("tree fanout {fanout} < 2")));
    }
    if leaves == 0 {
        return Err(TopologyError::Dimensions("tree needs at least one leaf".into()));
    }
    check_timing(timing)?;
    let depth = tree_depth_for(fanout, leaves);
    let n = tree_router_count(fanout, depth)?;
    let bottom = fanout.pow(depth);
    let first_leaf = n - bottom;
    let mut links = Vec::with_capacity(2 * n);
    for child in 1..n {
        push_pair(&mut links, (child - 1) / fanout, child, timing);
    }
    let kind = if hierarchical {
        TopologyKind::Hierarchical { fanout, depth }
    } else {
        TopologyKind::Tree { fanout, depth }
    };
    Topology::from_parts(
        kind,
        n,
        links,
        uniform_clusters(first_leaf..first_leaf + leaves, neurons_per_cluster),
        bottom != leaves,
    )
}

/// Balanced `fanout`-ary tree with clusters on the first `leaves` bottom
/// routers. When `leaves` is not a power of `fanout` the bottom level is
/// padded with cluster-less leaves and [`Topology::padded`] is set.
pub fn build_tree(
    fanout: usize,
    leaves: usize,
    timing: LinkTiming,
    neurons_per_cluster: u32,
) -> Result<Topology, TopologyError> {
    build_tree_kind(fanout, leaves, timing, neurons_per_cluster, false)
}

/// Tree of routers whose leaves each host a cluster of `cluster_size`
/// neurons. Routes like a tree; the kind tag lets reports tell them apart.
pub fn build_hierarchical(
    fanout: usize,
    leaves: usize,
    timing: LinkTiming,
    cluster_size: u32,
) -> Result<Topology, TopologyError> {
    build_tree_kind(fanout, leaves, timing, cluster_size, true)
}

/// Directed links from the left half into the right half of the median cut.
pub fn bisection_links(t: &Topology) -> Result<usize, TopologyError> {
    bisection_link_ids(t).map(|v| v.len())
}

/// Indices of the links counted by [`bisection_links`].
pub fn bisection_link_ids(t: &Topology) -> Result<Vec<usize>, TopologyError> {
    if t.router_count() < 2 {
        return Err(TopologyError::Undefined(
            "bisection undefined for a single-router topology".into(),
        ));
    }
    let mut ids = Vec::new();
    for (i, l) in t.links().iter().enumerate() {
        if t.half_of(l.src)? == Half::Left && t.half_of(l.dst)? == Half::Right {
            ids.push(i);
        }
    }
    Ok(ids)
}

/// Router-level traffic weights; entry `(s, d)` is the relative amount of
/// traffic from router `s` to router `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrafficMatrix {
    n: usize,
    weights: Vec<f64>,
}

impl TrafficMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            weights: vec![0.0; n * n],
        }
    }

    /// Unit weight on every ordered pair of distinct routers.
    pub fn uniform(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for s in 0..n {
            for d in 0..n {
                if s != d {
                    m.set(s, d, 1.0);
                }
            }
        }
        m
    }

    pub fn single(n: usize, src: RouterId, dst: RouterId) -> Self {
        let mut m = Self::zeros(n);
        m.set(src, dst, 1.0);
        m
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, s: RouterId, d: RouterId) -> f64 {
        self.weights[s * self.n + d]
    }

    pub fn set(&mut self, s: RouterId, d: RouterId, w: f64) {
        self.weights[s * self.n + d] = w;
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn entries(&self) -> impl Iterator<Item = (RouterId, RouterId, f64)> + '_ {
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, w)| **w != 0.0)
            .map(move |(i, &w)| (i / self.n, i % self.n, w))
    }
}

/// Traffic-weighted mean hop count `d` under `routing`.
pub fn mean_hops(t: &Topology, traffic: &TrafficMatrix, routing: Routing) -> Result<f64, RoutingError> {
    if traffic.size() != t.router_count() {
        return Err(RoutingError::Invalid(format!(
            "traffic matrix is {0}x{0} but topology has {1} routers",
            traffic.size(),
            t.router_count()
        )));
    }
    let total = traffic.total();
    if !(total > 0.0) {
        return Err(RoutingError::Invalid("traffic matrix carries no traffic".into()));
    }
    let mut weighted = 0.0;
    for (s, d, w) in traffic.entries() {
        weighted += w * routing.hop_count(t, s, d)? as f64;
    }
    Ok(weighted / total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn t() -> LinkTiming {
        LinkTiming::default()
    }

    #[test]
    fn mesh_sizes() {
        let m = build_mesh(3, 3, t(), 1).unwrap();
        assert_eq!((m.router_count(), m.links().len()), (9, 24));
        let m = build_mesh(1, 1, t(), 1).unwrap();
        assert_eq!((m.router_count(), m.links().len()), (1, 0));
        let m = build_mesh(4, 4, t(), 1).unwrap();
        assert_eq!((m.router_count(), m.links().len()), (16, 48));
        assert!(build_mesh(0, 3, t(), 1).is_err());
        assert!(matches!(build_mesh(1 << 12, 1 << 12, t(), 1), Err(TopologyError::TooLarge(_))));
    }

    #[test]
    fn mesh_degrees() {
        let m = build_mesh(5, 4, t(), 1).unwrap();
        for r in 0..m.router_count() {
            let (x, y) = m.coords(r).unwrap();
            let interior = x > 0 && x < 4 && y > 0 && y < 3;
            if interior {
                assert_eq!(m.degree(r), 4);
            }
            assert!(m.degree(r) <= 4);
        }
    }

    #[test]
    fn torus_sizes_and_degree() {
        let tor = build_torus(4, 4, false, t(), 1).unwrap();
        assert_eq!(tor.links().len(), 64);
        assert!((0..16).all(|r| tor.degree(r) == 4));
        let tor = build_torus(4, 4, true, t(), 1).unwrap();
        assert!((0..16).all(|r| tor.degree(r) == 6));
        assert_eq!(build_torus(3, 3, false, t(), 1).unwrap().links().len(), 36);
        assert!(build_torus(2, 4, false, t(), 1).is_err());
    }

    #[test]
    fn tree_sizes() {
        let tr = build_tree(2, 4, t(), 1).unwrap();
        assert_eq!(tr.router_count(), 7);
        assert_eq!(tr.kind(), TopologyKind::Tree { fanout: 2, depth: 2 });
        assert!(!tr.padded());
        assert_eq!(build_tree(4, 16, t(), 1).unwrap().router_count(), 21);
        assert_eq!(build_tree(2, 1, t(), 1).unwrap().router_count(), 1);
        let padded = build_tree(2, 3, t(), 1).unwrap();
        assert!(padded.padded());
        assert_eq!(padded.clusters().len(), 3);
        assert!(build_tree(1, 4, t(), 1).is_err());
        assert_eq!(tr.parent(5), Some(2));
        assert!(tr.is_leaf(3) && !tr.is_leaf(2));
    }

    #[test]
    fn bisection_counts() {
        assert_eq!(bisection_links(&build_mesh(4, 4, t(), 1).unwrap()).unwrap(), 4);
        assert_eq!(bisection_links(&build_torus(4, 4, false, t(), 1).unwrap()).unwrap(), 8);
        assert_eq!(bisection_links(&build_tree(2, 8, t(), 1).unwrap()).unwrap(), 1);
        assert_eq!(bisection_links(&build_mesh(1, 4, t(), 1).unwrap()).unwrap(), 1);
        assert!(bisection_links(&build_mesh(1, 1, t(), 1).unwrap()).is_err());
    }

    #[test]
    fn text_round_trip() {
        let mut tor = build_torus(3, 4, true, t(), 2).unwrap();
        tor.set_link_timing(5, LinkTiming { service_ticks: 3, pipeline_ticks: 7 }).unwrap();
        let text = tor.to_text();
        let back = Topology::parse(&text).unwrap();
        assert_eq!(back, tor);
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn parse_errors_carry_line() {
        let err = Topology::parse("kind mesh 2 1\nrouters 2\nlink 0 1 x 0\n").unwrap_err();
        assert!(matches!(err, TopologyError::Parse { line: 3, .. }), "{err}");
        let err = Topology::parse("kind mesh 2 1\nrouters 2\n").unwrap_err();
        assert!(matches!(err, TopologyError::Disconnected(1)), "{err}");
        let err = Topology::parse("kind mesh 2 1\nrouters 2\nlink 0 1 0 0\nlink 1 0 1 0\n").unwrap_err();
        assert!(matches!(err, TopologyError::BadLink { .. }), "{err}");
    }

    proptest! {
        #[test]
        fn mesh_bisection_is_height(half_w in 1usize..8, h in 1usize..8) {
            let m = build_mesh(2 * half_w, h, t(), 1).unwrap();
            prop_assert_eq!(bisection_links(&m).unwrap(), h);
        }

        #[test]
        fn serialization_round_trips(kind in 0u8..3, a in 3usize..7, b in 3usize..7, diag: bool, s in 1u64..5, p in 0u64..5) {
            let timing = LinkTiming { service_ticks: s, pipeline_ticks: p };
            let topo = match kind {
                0 => build_mesh(a, b, timing, 2).unwrap(),
                1 => build_torus(a, b, diag, timing, 1).unwrap(),
                _ => build_tree(a.min(4), b * 2, timing, 3).unwrap(),
            };
            let text = topo.to_text();
            let back = Topology::parse(&text).unwrap();
            prop_assert_eq!(back.to_text(), text);
            prop_assert_eq!(back, topo);
        }
    }
}
