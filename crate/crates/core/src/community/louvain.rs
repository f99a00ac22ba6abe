//! Multilevel modularity optimization: repeated local node moves followed by
//! collapsing each community into a super-node, until a level makes no move.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::community::partition::densify;
use crate::community::{weighted_modularity, Partition, WeightedGraph};
use crate::error::{Error, Result};
use crate::graph::UndirectedGraph;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LouvainConfig {
    pub resolution: f64,
    /// A node moves only when its modularity gain exceeds this.
    pub min_gain: f64,
    /// Cap on local-move passes per level.
    pub max_passes: usize,
    pub seed: u64,
}

impl Default for LouvainConfig {
    fn default() -> Self {
        LouvainConfig {
            resolution: 1.0,
            min_gain: 1e-7,
            max_passes: 100,
            seed: 0,
        }
    }
}

impl LouvainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.resolution > 0.0 && self.resolution.is_finite()) {
            return Err(Error::config("resolution must be positive"));
        }
        if self.min_gain.is_nan() || self.min_gain < 0.0 {
            return Err(Error::config("min_gain must be non-negative"));
        }
        if self.max_passes == 0 {
            return Err(Error::config("max_passes must be at least 1"));
        }
        Ok(())
    }
}

/// One level of the hierarchy.
#[derive(Clone, Debug, PartialEq)]
pub struct Level {
    /// This level's communities expanded to the original nodes.
    pub partition: Partition,
    /// The graph with one super-node per community of `partition`.
    pub aggregated: WeightedGraph,
    /// `None` on an edgeless graph.
    pub modularity: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dendrogram {
    pub levels: Vec<Level>,
}

impl Dendrogram {
    /// The last (coarsest) level's partition.
    pub fn final_partition(&self) -> &Partition {
        &self.levels.last().expect("at least one level").partition
    }

    pub fn into_partition(mut self) -> Partition {
        self.levels.pop().expect("at least one level").partition
    }
}

/// An accepted local move, as reported to an observer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MoveRecord {
    pub level: usize,
    pub node: usize,
    pub from: usize,
    pub to: usize,
    /// Modularity change predicted by the incremental bookkeeping.
    pub gain: f64,
}

pub fn louvain(g: &UndirectedGraph, cfg: &LouvainConfig) -> Result<Dendrogram> {
    louvain_observed(g, cfg, |_, _, _| {})
}

/// Like [`louvain`], but calls `observer(level_graph, labels, mv)` right
/// before each accepted move is applied; `labels` is the level's assignment
/// at that moment.
pub fn louvain_observed<F>(g: &UndirectedGraph, cfg: &LouvainConfig, mut observer: F) -> Result<Dendrogram>
where
    F: FnMut(&WeightedGraph, &[usize], &MoveRecord),
{
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let nodes = g.nodes();
    let mut graph = WeightedGraph::from_undirected(g);
    let mut node_comm: Vec<usize> = (0..nodes.len()).collect();
    let mut levels: Vec<Level> = Vec::new();

    loop {
        let level = levels.len();
        let raw = local_moves(&graph, cfg, &mut rng, |labels, mv| {
            observer(&graph, labels, &MoveRecord { level, ..*mv })
        });
        let (labels, count) = densify(&raw);
        let moved = count < graph.node_count();
        if !moved && !levels.is_empty() {
            break;
        }
        for c in node_comm.iter_mut() {
            *c = labels[*c];
        }
        let aggregated = graph.aggregate(&labels, count);
        let singles: Vec<usize> = (0..count).collect();
        let q = weighted_modularity(&aggregated, &singles, cfg.resolution).ok();
        let partition =
            Partition::from_labels(nodes, &node_comm).with_score(cfg.resolution, q);
        levels.push(Level {
            partition,
            aggregated: aggregated.clone(),
            modularity: q,
        });
        if !moved {
            break;
        }
        graph = aggregated;
    }
    Ok(Dendrogram { levels })
}

/// Local-move phase on one level. Returns the (non-dense) community label
/// of every node.
fn local_moves<R, F>(g: &WeightedGraph, cfg: &LouvainConfig, rng: &mut R, mut on_move: F) -> Vec<usize>
where
    R: rand::Rng,
    F: FnMut(&[usize], &MoveRecord),
{
    let n = g.node_count();
    let mut comm: Vec<usize> = (0..n).collect();
    let m = g.total_weight();
    if m <= 0.0 {
        return comm;
    }
    let gamma = cfg.resolution;
    let mut tot: Vec<f64> = (0..n).map(|i| g.degree(i)).collect();
    let mut link = vec![0.0f64; n];
    let mut seen = vec![false; n];
    let mut touched: Vec<usize> = Vec::new();
    let mut order: Vec<usize> = (0..n).collect();

    for _ in 0..cfg.max_passes {
        order.shuffle(rng);
        let mut moves = 0usize;
        for &i in &order {
            let ki = g.degree(i);
            let from = comm[i];
            for (j, w) in g.neighbors(i) {
                let c = comm[j];
                if !seen[c] {
                    seen[c] = true;
                    touched.push(c);
                }
                link[c] += w;
            }

            // Gain of joining community c, relative to i sitting alone.
            let tot_from = tot[from] - ki;
            let stay = link[from] / m - gamma * ki * tot_from / (2.0 * m * m);
            let mut best: Option<(usize, f64)> = None;
            for &c in &touched {
                if c == from {
                    continue;
                }
                let gain = link[c] / m - gamma * ki * tot[c] / (2.0 * m * m);
                best = match best {
                    Some((bc, bg)) if gain < bg || (gain == bg && c > bc) => Some((bc, bg)),
                    _ => Some((c, gain)),
                };
            }
            if let Some((to, gain)) = best {
                let delta = gain - stay;
                if delta > cfg.min_gain {
                    on_move(
                        &comm,
                        &MoveRecord {
                            level: 0,
                            node: i,
                            from,
                            to,
                            gain: delta,
                        },
                    );
                    tot[from] -= ki;
                    tot[to] += ki;
                    comm[i] = to;
                    moves += 1;
                }
            }

            for &c in &touched {
                link[c] = 0.0;
                seen[c] = false;
            }
            touched.clear();
        }
        if moves == 0 {
            break;
        }
    }
    comm
}
