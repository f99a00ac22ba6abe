use crate::community::Partition;
use crate::error::Result;
use crate::graph::UndirectedGraph;

/// Weighted undirected graph with self-loops, the working graph of Louvain
/// after aggregation. A self-loop of weight `w` contributes `w` to the total
/// weight and `2w` to its node's degree.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedGraph {
    offsets: Vec<usize>,
    targets: Vec<u32>,
    weights: Vec<f64>,
    self_loops: Vec<f64>,
    degrees: Vec<f64>,
    total_weight: f64,
}

impl WeightedGraph {
    pub fn from_undirected(g: &UndirectedGraph) -> Self {
        let n = g.node_count();
        let mut offsets = Vec::with_capacity(n + 1);
        let mut targets = Vec::with_capacity(2 * g.edge_count());
        offsets.push(0);
        for i in 0..n {
            targets.extend_from_slice(g.neighbors(i));
            offsets.push(targets.len());
        }
        let weights = vec![1.0; targets.len()];
        let degrees = (0..n).map(|i| g.degree(i) as f64).collect();
        WeightedGraph {
            offsets,
            targets,
            weights,
            self_loops: vec![0.0; n],
            degrees,
            total_weight: g.edge_count() as f64,
        }
    }

    pub fn node_count(&self) -> usize {
        self.self_loops.len()
    }

    /// Sum of edge weights, self-loops counted once (`m`).
    pub fn total_weight(&self) -> f64 {
        self.total_weight
    }

    pub fn degree(&self, i: usize) -> f64 {
        self.degrees[i]
    }

    pub fn self_loop(&self, i: usize) -> f64 {
        self.self_loops[i]
    }

    /// Non-self neighbors of `i` with weights, sorted by neighbor.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.offsets[i]..self.offsets[i + 1];
        self.targets[r.clone()]
            .iter()
            .zip(&self.weights[r])
            .map(|(&t, &w)| (t as usize, w))
    }

    pub fn edge_weight(&self, a: usize, b: usize) -> f64 {
        if a == b {
            return self.self_loops[a];
        }
        let r = self.offsets[a]..self.offsets[a + 1];
        match self.targets[r.clone()].binary_search(&(b as u32)) {
            Ok(k) => self.weights[r.start + k],
            Err(_) => 0.0,
        }
    }

    /// Collapses each community to a super-node. `labels` must be dense in
    /// `0..count`. Crossing edges sum into inter-community weights; internal
    /// edges and member self-loops sum into the super-node's self-loop.
    pub fn aggregate(&self, labels: &[usize], count: usize) -> WeightedGraph {
        let n = self.node_count();
        assert_eq!(labels.len(), n);

        // Counting sort of nodes by community.
        let mut starts = vec![0usize; count + 1];
        for &c in labels {
            starts[c + 1] += 1;
        }
        for c in 0..count {
            starts[c + 1] += starts[c];
        }
        let mut cursor = starts.clone();
        let mut by_comm = vec![0usize; n];
        for (i, &c) in labels.iter().enumerate() {
            by_comm[cursor[c]] = i;
            cursor[c] += 1;
        }

        let mut offsets = Vec::with_capacity(count + 1);
        offsets.push(0);
        let mut targets = Vec::new();
        let mut weights = Vec::new();
        let mut self_loops = vec![0.0; count];
        let mut acc = vec![0.0f64; count];
        let mut seen = vec![false; count];
        let mut touched: Vec<usize> = Vec::new();

        for c in 0..count {
            let mut loops = 0.0;
            let mut internal_twice = 0.0;
            for &u in &by_comm[starts[c]..starts[c + 1]] {
                loops += self.self_loops[u];
                for (v, w) in self.neighbors(u) {
                    let cv = labels[v];
                    if cv == c {
                        internal_twice += w;
                    } else {
                        if !seen[cv] {
                            seen[cv] = true;
                            touched.push(cv);
                        }
                        acc[cv] += w;
                    }
                }
            }
            self_loops[c] = loops + internal_twice / 2.0;
            touched.sort_unstable();
            for &cv in &touched {
                targets.push(cv as u32);
                weights.push(acc[cv]);
                acc[cv] = 0.0;
                seen[cv] = false;
            }
            touched.clear();
            offsets.push(targets.len());
        }

        let mut degrees = vec![0.0; count];
        let mut total = 0.0;
        for c in 0..count {
            let cross: f64 = weights[offsets[c]..offsets[c + 1]].iter().sum();
            degrees[c] = cross + 2.0 * self_loops[c];
            total += degrees[c];
        }
        WeightedGraph {
            offsets,
            targets,
            weights,
            self_loops,
            degrees,
            total_weight: total / 2.0,
        }
    }
}

/// Community super-node graph: node `c` stands for community `c` of `p`.
pub fn aggregate_graph(g: &UndirectedGraph, p: &Partition) -> Result<WeightedGraph> {
    let labels = p.labels_for(g.nodes())?;
    let count = labels.iter().max().map_or(0, |&c| c + 1).max(p.len());
    Ok(WeightedGraph::from_undirected(g).aggregate(&labels, count))
}
