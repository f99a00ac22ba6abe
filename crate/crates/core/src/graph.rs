//! Directed follow graph ingestion and the reciprocal (mutual-follow) network.
//!
//! Both graphs keep their node set sorted by [`UserId`], so node index order
//! is id order and every derived artifact is independent of input order.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io as fio;

#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct UserId(pub u64);

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl std::str::FromStr for UserId {
    type Err = std::num::ParseIntError;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        s.trim().parse().map(UserId)
    }
}

/// Counters reported while ingesting follow records.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadStats {
    pub records: usize,
    pub duplicates: usize,
    pub self_loops: usize,
}

/// Compressed adjacency: `offsets[i]..offsets[i + 1]` indexes `targets`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
struct Csr {
    offsets: Vec<usize>,
    targets: Vec<u32>,
}

impl Csr {
    /// Builds from `(source, target)` pairs sorted by source then target.
    fn from_sorted(n: usize, pairs: impl Iterator<Item = (u32, u32)>) -> Self {
        let mut offsets = vec![0usize; n + 1];
        let mut targets = Vec::new();
        for (s, t) in pairs {
            offsets[s as usize + 1] += 1;
            targets.push(t);
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        Csr { offsets, targets }
    }

    /// Builds by bucketing pairs on source; targets end up sorted when the
    /// input is sorted by target.
    fn bucket(n: usize, pairs: &[(u32, u32)], key: impl Fn(&(u32, u32)) -> (u32, u32)) -> Self {
        let mut offsets = vec![0usize; n + 1];
        for p in pairs {
            offsets[key(p).0 as usize + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        let mut cursor = offsets.clone();
        let mut targets = vec![0u32; pairs.len()];
        for p in pairs {
            let (s, t) = key(p);
            targets[cursor[s as usize]] = t;
            cursor[s as usize] += 1;
        }
        Csr { offsets, targets }
    }

    #[inline]
    fn row(&self, i: usize) -> &[u32] {
        &self.targets[self.offsets[i]..self.offsets[i + 1]]
    }
}

/// Who-follows-whom over a sorted node set, indexed by out- and in-neighbors.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DirectedFollowGraph {
    nodes: Vec<UserId>,
    out: Csr,
    inc: Csr,
}

impl DirectedFollowGraph {
    /// Collapses duplicates and drops self-loops.
    pub fn from_edges(edges: impl IntoIterator<Item = (UserId, UserId)>) -> (Self, LoadStats) {
        let mut stats = LoadStats::default();
        let mut raw = Vec::new();
        for (a, b) in edges {
            stats.records += 1;
            if a == b {
                stats.self_loops += 1;
                continue;
            }
            raw.push((a, b));
        }
        let mut nodes: Vec<UserId> = raw.iter().flat_map(|&(a, b)| [a, b]).collect();
        nodes.sort_unstable();
        nodes.dedup();

        let mut pairs: Vec<(u32, u32)> = raw
            .iter()
            .map(|&(a, b)| (index_in(&nodes, a), index_in(&nodes, b)))
            .collect();
        drop(raw);
        pairs.sort_unstable();
        let before = pairs.len();
        pairs.dedup();
        stats.duplicates = before - pairs.len();

        let n = nodes.len();
        let out = Csr::from_sorted(n, pairs.iter().copied());
        let inc = Csr::bucket(n, &pairs, |&(s, t)| (t, s));
        (DirectedFollowGraph { nodes, out, inc }, stats)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.out.targets.len()
    }

    pub fn nodes(&self) -> &[UserId] {
        &self.nodes
    }

    pub fn index_of(&self, id: UserId) -> Option<usize> {
        self.nodes.binary_search(&id).ok()
    }

    /// Followees of node `i`, as sorted node indices.
    pub fn out_neighbors(&self, i: usize) -> &[u32] {
        self.out.row(i)
    }

    /// Followers of node `i`, as sorted node indices.
    pub fn in_neighbors(&self, i: usize) -> &[u32] {
        self.inc.row(i)
    }

    pub fn follows(&self, follower: UserId, followee: UserId) -> bool {
        match (self.index_of(follower), self.index_of(followee)) {
            (Some(a), Some(b)) => self.out.row(a).binary_search(&(b as u32)).is_ok(),
            _ => false,
        }
    }

    pub fn edges(&self) -> impl Iterator<Item = (UserId, UserId)> + '_ {
        (0..self.nodes.len()).flat_map(move |i| {
            self.out
                .row(i)
                .iter()
                .map(move |&j| (self.nodes[i], self.nodes[j as usize]))
        })
    }
}

fn index_in(nodes: &[UserId], id: UserId) -> u32 {
    nodes.binary_search(&id).expect("node collected from edges") as u32
}

/// Simple undirected graph. Each edge `{a, b}` is stored once in the edge
/// count and twice in the adjacency.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct UndirectedGraph {
    nodes: Vec<UserId>,
    adj: Csr,
    edge_count: usize,
}

impl UndirectedGraph {
    /// Node set is `nodes` plus every edge endpoint. Self-loops and
    /// duplicate edges are dropped.
    pub fn from_edges(
        nodes: impl IntoIterator<Item = UserId>,
        edges: impl IntoIterator<Item = (UserId, UserId)>,
    ) -> Self {
        let edges: Vec<(UserId, UserId)> = edges.into_iter().filter(|(a, b)| a != b).collect();
        let mut all: Vec<UserId> = nodes.into_iter().collect();
        all.extend(edges.iter().flat_map(|&(a, b)| [a, b]));
        all.sort_unstable();
        all.dedup();
        let pairs = edges
            .iter()
            .map(|&(a, b)| {
                let (x, y) = (index_in(&all, a), index_in(&all, b));
                (x.min(y), x.max(y))
            })
            .collect();
        Self::from_index_pairs(all, pairs)
    }

    /// `nodes` must be sorted and distinct; pairs are node indices.
    pub(crate) fn from_index_pairs(nodes: Vec<UserId>, mut pairs: Vec<(u32, u32)>) -> Self {
        debug_assert!(nodes.windows(2).all(|w| w[0] < w[1]));
        pairs.retain(|(a, b)| a != b);
        for p in pairs.iter_mut() {
            if p.0 > p.1 {
                *p = (p.1, p.0);
            }
        }
        pairs.sort_unstable();
        pairs.dedup();
        let edge_count = pairs.len();
        let mut both = Vec::with_capacity(2 * edge_count);
        for &(a, b) in &pairs {
            both.push((a, b));
            both.push((b, a));
        }
        drop(pairs);
        both.sort_unstable();
        let adj = Csr::from_sorted(nodes.len(), both.into_iter());
        UndirectedGraph {
            nodes,
            adj,
            edge_count,
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn nodes(&self) -> &[UserId] {
        &self.nodes
    }

    pub fn index_of(&self, id: UserId) -> Option<usize> {
        self.nodes.binary_search(&id).ok()
    }

    pub fn neighbors(&self, i: usize) -> &[u32] {
        self.adj.row(i)
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adj.offsets[i + 1] - self.adj.offsets[i]
    }

    pub fn has_edge(&self, a: UserId, b: UserId) -> bool {
        match (self.index_of(a), self.index_of(b)) {
            (Some(i), Some(j)) => self.adj.row(i).binary_search(&(j as u32)).is_ok(),
            _ => false,
        }
    }

    /// Edges as index pairs `(a, b)` with `a < b`, in sorted order.
    pub fn index_edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.nodes.len()).flat_map(move |i| {
            self.adj
                .row(i)
                .iter()
                .filter(move |&&j| (j as usize) > i)
                .map(move |&j| (i, j as usize))
        })
    }

    pub fn edges(&self) -> impl Iterator<Item = (UserId, UserId)> + '_ {
        self.index_edges()
            .map(|(a, b)| (self.nodes[a], self.nodes[b]))
    }

    /// Writes `a<TAB>b` per edge.
    pub fn write_edges<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (a, b) in self.edges() {
            writeln!(w, "{a}\t{b}")?;
        }
        Ok(())
    }
}

/// Undirected edge `{a, b}` exists iff both `a -> b` and `b -> a` do. The
/// node set is carried over unchanged, so one-way followers stay as isolates.
pub fn reciprocalize(g: &DirectedFollowGraph) -> UndirectedGraph {
    let mut pairs = Vec::new();
    for a in 0..g.node_count() {
        for &b in g.out_neighbors(a) {
            if (b as usize) > a && g.out_neighbors(b as usize).binary_search(&(a as u32)).is_ok() {
                pairs.push((a as u32, b));
            }
        }
    }
    UndirectedGraph::from_index_pairs(g.nodes.clone(), pairs)
}

/// Parses `follower<TAB>followee` lines. Blank lines and `#` comments are
/// ignored; any other malformed line is an error carrying its line number.
pub fn load_directed_edges<R: BufRead>(reader: R) -> Result<(DirectedFollowGraph, LoadStats)> {
    let pairs = parse_id_pairs(reader)?;
    let (g, stats) = DirectedFollowGraph::from_edges(pairs);
    if stats.self_loops > 0 {
        log::warn!("skipped {} self-loop follow records", stats.self_loops);
    }
    Ok((g, stats))
}

pub fn read_directed_edges(path: &Path) -> Result<(DirectedFollowGraph, LoadStats)> {
    load_directed_edges(fio::open(path)?)
}

pub(crate) fn parse_id_pairs<R: BufRead>(reader: R) -> Result<Vec<(UserId, UserId)>> {
    let mut pairs = Vec::new();
    for (n, line) in reader.split(b'\n').enumerate() {
        let lineno = n + 1;
        let line = line.map_err(|e| Error::parse(lineno, e.to_string()))?;
        let line = std::str::from_utf8(&line)
            .map_err(|_| Error::parse(lineno, "invalid UTF-8"))?
            .trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split('\t');
        let (a, b) = match (fields.next(), fields.next(), fields.next()) {
            (Some(a), Some(b), None) => (a, b),
            _ => {
                return Err(Error::parse(
                    lineno,
                    format!("expected two tab-separated ids, got {line:?}"),
                ))
            }
        };
        let parse = |s: &str| {
            s.parse::<UserId>()
                .map_err(|e| Error::parse(lineno, format!("bad user id {s:?}: {e}")))
        };
        pairs.push((parse(a)?, parse(b)?));
    }
    Ok(pairs)
}

/// Reads the persisted reciprocal network: a node list (one id per line)
/// and a TSV edge list.
pub fn read_network(nodes_path: &Path, edges_path: &Path) -> Result<UndirectedGraph> {
    let nodes = fio::read_id_list(nodes_path)?;
    let edges = parse_id_pairs(fio::open(edges_path)?)?;
    Ok(UndirectedGraph::from_edges(nodes, edges))
}

/// Optional sidecar with screen names, keyed by user id.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct NodeMetadata {
    pub screen_names: BTreeMap<UserId, String>,
    pub users: usize,
}

#[derive(Deserialize)]
struct MetadataRecord {
    user_id: UserId,
    #[serde(default)]
    screen_name: Option<String>,
}

impl NodeMetadata {
    pub fn load<R: BufRead>(reader: R) -> Result<Self> {
        let mut meta = NodeMetadata::default();
        let mut seen = std::collections::BTreeSet::new();
        for (n, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::parse(n + 1, e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: MetadataRecord =
                serde_json::from_str(&line).map_err(|e| Error::parse(n + 1, e.to_string()))?;
            seen.insert(rec.user_id);
            if let Some(name) = rec.screen_name {
                meta.screen_names.insert(rec.user_id, name);
            }
        }
        meta.users = seen.len();
        Ok(meta)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::load(fio::open(path)?)
    }
}
