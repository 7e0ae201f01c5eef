//! Clustered network graphs: oscillators grouped into clusters with
//! all-to-all or sparse intra-cluster coupling and optional nearest-neighbor
//! coupling between cluster bridge oscillators.
//!
//! Oscillator ids are laid out cluster by cluster: cluster `c` owns ids
//! `c * per_cluster .. (c + 1) * per_cluster`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::phase::OscillatorParams;

pub const TEXT_HEADER: &str = "# oscnet-topology v1";

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IntraCoupling {
    AllToAll,
    /// Each unordered pair inside a cluster is connected (both directions)
    /// with probability `p`.
    Sparse {
        p: f64,
        seed: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InterCoupling {
    None,
    /// Bridges of clusters `k` and `(k + 1) mod n` are coupled both ways.
    RingNearestNeighbor,
    /// Like the ring, without the closing link between the last and first cluster.
    ChainNearestNeighbor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSpec {
    pub n_clusters: usize,
    pub per_cluster: usize,
    pub intra: IntraCoupling,
    pub inter: InterCoupling,
    /// One bridge oscillator per cluster; `None` picks the lowest id member.
    pub bridges: Option<Vec<usize>>,
    pub inter_weight: f64,
}

impl ClusterSpec {
    pub fn new(n_clusters: usize, per_cluster: usize, intra: IntraCoupling, inter: InterCoupling) -> Self {
        Self {
            n_clusters,
            per_cluster,
            intra,
            inter,
            bridges: None,
            inter_weight: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub weight: f64,
}

/// Weighted directed graph over oscillator ids with cluster membership.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    n_clusters: usize,
    per_cluster: usize,
    edges: Vec<Edge>,
    cluster_of: Vec<usize>,
    bridge_of: Vec<usize>,
    incoming: Vec<Vec<(usize, f64)>>,
}

/// Builds the clustered graph with default bridges and unit inter-cluster weight.
pub fn build_clustered(
    n_clusters: usize,
    per_cluster: usize,
    intra: IntraCoupling,
    inter: InterCoupling,
) -> Result<Topology> {
    Topology::build(&ClusterSpec::new(n_clusters, per_cluster, intra, inter))
}

impl Topology {
    pub fn build(spec: &ClusterSpec) -> Result<Self> {
        let (nc, pc) = (spec.n_clusters, spec.per_cluster);
        if nc == 0 || pc == 0 {
            return Err(Error::Config("n_clusters and per_cluster must both be >= 1".into()));
        }
        if !(spec.inter_weight.is_finite() && spec.inter_weight >= 0.0) {
            return Err(Error::Config("inter-cluster weight must be finite and >= 0".into()));
        }
        let n = nc * pc;
        let cluster_of: Vec<usize> = (0..n).map(|i| i / pc).collect();

        let bridge_of = match &spec.bridges {
            None => (0..nc).map(|c| c * pc).collect::<Vec<_>>(),
            Some(b) => {
                if b.len() != nc {
                    return Err(Error::Config(format!("expected {nc} bridge ids, got {}", b.len())));
                }
                for (c, &id) in b.iter().enumerate() {
                    if id >= n || cluster_of[id] != c {
                        return Err(Error::Config(format!("bridge {id} is not a member of cluster {c}")));
                    }
                }
                b.clone()
            }
        };

        let mut edges: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        match spec.intra {
            IntraCoupling::AllToAll => {
                for c in 0..nc {
                    for i in c * pc..(c + 1) * pc {
                        for j in c * pc..(c + 1) * pc {
                            if i != j {
                                edges.insert((i, j), 1.0);
                            }
                        }
                    }
                }
            }
            IntraCoupling::Sparse { p, seed } => {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::Config(format!("sparse probability must be in [0, 1], got {p}")));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                for c in 0..nc {
                    for i in c * pc..(c + 1) * pc {
                        for j in i + 1..(c + 1) * pc {
                            if rng.gen::<f64>() < p {
                                edges.insert((i, j), 1.0);
                                edges.insert((j, i), 1.0);
                            }
                        }
                    }
                }
            }
        }

        let links: Vec<(usize, usize)> = match spec.inter {
            InterCoupling::None => Vec::new(),
            InterCoupling::RingNearestNeighbor | InterCoupling::ChainNearestNeighbor if nc < 2 => {
                return Err(Error::Config(
                    "nearest-neighbor inter-cluster coupling needs at least 2 clusters".into(),
                ));
            }
            InterCoupling::RingNearestNeighbor => (0..nc).map(|k| (k, (k + 1) % nc)).collect(),
            InterCoupling::ChainNearestNeighbor => (0..nc - 1).map(|k| (k, k + 1)).collect(),
        };
        for (a, b) in links {
            let (u, v) = (bridge_of[a], bridge_of[b]);
            edges.insert((u, v), spec.inter_weight);
            edges.insert((v, u), spec.inter_weight);
        }

        let edges = edges
            .into_iter()
            .map(|((src, dst), weight)| Edge { src, dst, weight })
            .collect();
        Ok(Self::assemble(nc, pc, edges, cluster_of, bridge_of))
    }

    fn assemble(
        n_clusters: usize,
        per_cluster: usize,
        edges: Vec<Edge>,
        cluster_of: Vec<usize>,
        bridge_of: Vec<usize>,
    ) -> Self {
        let mut incoming = vec![Vec::new(); cluster_of.len()];
        for e in &edges {
            incoming[e.dst].push((e.src, e.weight));
        }
        Self {
            n_clusters,
            per_cluster,
            edges,
            cluster_of,
            bridge_of,
            incoming,
        }
    }

    pub fn len(&self) -> usize {
        self.cluster_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cluster_of.is_empty()
    }

    pub fn n_clusters(&self) -> usize {
        self.n_clusters
    }

    pub fn per_cluster(&self) -> usize {
        self.per_cluster
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn cluster_of(&self, id: usize) -> usize {
        self.cluster_of[id]
    }

    pub fn bridge_of(&self, cluster: usize) -> usize {
        self.bridge_of[cluster]
    }

    pub fn members(&self, cluster: usize) -> std::ops::Range<usize> {
        cluster * self.per_cluster..(cluster + 1) * self.per_cluster
    }

    /// All sources with an edge into `id`, regardless of enable state.
    pub fn incoming(&self, id: usize) -> &[(usize, f64)] {
        &self.incoming[id]
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(TEXT_HEADER);
        out.push('\n');
        for c in 0..self.n_clusters {
            let _ = write!(out, "cluster {c}");
            for id in self.members(c) {
                let _ = write!(out, " {id}");
            }
            out.push('\n');
        }
        for e in &self.edges {
            let _ = writeln!(out, "edge {} {} {:?}", e.src, e.dst, e.weight);
        }
        out
    }

    /// Parses the edge-list text format. Bridges are recovered from
    /// inter-cluster edges, falling back to the lowest member id.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, l)) if l.trim() == TEXT_HEADER => {}
            _ => return Err(Error::Config(format!("missing header line `{TEXT_HEADER}`"))),
        }
        let mut clusters: Vec<Vec<usize>> = Vec::new();
        let mut edges = Vec::new();
        for (lineno, raw) in lines {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |what: &str| Error::Config(format!("line {}: {what}", lineno + 1));
            let mut parts = line.split_whitespace();
            match parts.next() {
                Some("cluster") => {
                    let id: usize = parts
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| bad("bad cluster id"))?;
                    if id != clusters.len() {
                        return Err(bad("clusters must be listed in order"));
                    }
                    let members = parts
                        .map(|s| s.parse::<usize>().map_err(|_| bad("bad member id")))
                        .collect::<Result<Vec<_>>>()?;
                    clusters.push(members);
                }
                Some("edge") => {
                    let fields: Vec<&str> = parts.collect();
                    if fields.len() != 3 {
                        return Err(bad("edge needs <src> <dst> <weight>"));
                    }
                    let src = fields[0].parse().map_err(|_| bad("bad edge source"))?;
                    let dst = fields[1].parse().map_err(|_| bad("bad edge target"))?;
                    let weight: f64 = fields[2].parse().map_err(|_| bad("bad edge weight"))?;
                    edges.push(Edge { src, dst, weight });
                }
                _ => return Err(bad("expected `cluster` or `edge`")),
            }
        }
        let n_clusters = clusters.len();
        if n_clusters == 0 {
            return Err(Error::Config("no clusters".into()));
        }
        let per_cluster = clusters[0].len();
        let n = n_clusters * per_cluster;
        for (c, members) in clusters.iter().enumerate() {
            let expected: Vec<usize> = (c * per_cluster..(c + 1) * per_cluster).collect();
            if *members != expected {
                return Err(Error::Config(format!("cluster {c} members are not contiguous ids")));
            }
        }
        let cluster_of: Vec<usize> = (0..n).map(|i| i / per_cluster).collect();
        let mut seen = BTreeMap::new();
        for e in &edges {
            if e.src >= n || e.dst >= n {
                return Err(Error::Config(format!(
                    "edge {} -> {} has an invalid endpoint",
                    e.src, e.dst
                )));
            }
            if e.src == e.dst {
                return Err(Error::Config(format!("self-edge on {}", e.src)));
            }
            if seen.insert((e.src, e.dst), ()).is_some() {
                return Err(Error::Config(format!("duplicate edge {} -> {}", e.src, e.dst)));
            }
        }
        edges.sort_by_key(|e| (e.src, e.dst));
        let mut bridge_of: Vec<usize> = (0..n_clusters).map(|c| c * per_cluster).collect();
        let mut bridged = vec![false; n_clusters];
        for e in &edges {
            let (cs, cd) = (cluster_of[e.src], cluster_of[e.dst]);
            if cs != cd && !bridged[cs] {
                bridge_of[cs] = e.src;
                bridged[cs] = true;
            }
        }
        Ok(Self::assemble(n_clusters, per_cluster, edges, cluster_of, bridge_of))
    }
}

/// Returns a copy of `params` with oscillator `id` enabled or disabled.
pub fn set_enabled(
    topology: &Topology,
    params: &[OscillatorParams],
    id: usize,
    flag: bool,
) -> Result<Vec<OscillatorParams>> {
    if params.len() != topology.len() {
        return Err(Error::Domain(format!(
            "{} parameter sets for a {}-node topology",
            params.len(),
            topology.len()
        )));
    }
    if id >= params.len() {
        return Err(Error::Domain(format!("oscillator id {id} out of range")));
    }
    let mut out = params.to_vec();
    out[id].enabled = flag;
    Ok(out)
}

/// Enabled sources with an edge into `id`. A disabled `id` has none.
///
/// Panics if `id` is not a valid oscillator id.
pub fn in_neighbors(topology: &Topology, params: &[OscillatorParams], id: usize) -> Vec<(usize, f64)> {
    if !params[id].enabled {
        return Vec::new();
    }
    topology
        .incoming(id)
        .iter()
        .copied()
        .filter(|&(src, _)| params[src].enabled)
        .collect()
}
