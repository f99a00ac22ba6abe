//! Reference implementations shared by the oracle tests. These are written
//! the slow, obvious way and share no code with the library algorithms.
#![allow(dead_code)]

use echoscope::graph::{UndirectedGraph, UserId};
use echoscope::Partition;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// G(n, p) on ids `0..n`, every id present as a node.
pub fn random_graph(rng: &mut impl Rng, n: usize, p: f64) -> UndirectedGraph {
    let mut edges = Vec::new();
    for a in 0..n as u64 {
        for b in (a + 1)..n as u64 {
            if rng.random_bool(p) {
                edges.push((UserId(a), UserId(b)));
            }
        }
    }
    UndirectedGraph::from_edges((0..n as u64).map(UserId), edges)
}

pub fn random_labels(rng: &mut impl Rng, n: usize, k: usize) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..k)).collect()
}

/// Dense adjacency matrix in node-index order.
pub fn adjacency(g: &UndirectedGraph) -> Vec<Vec<f64>> {
    let n = g.node_count();
    let mut a = vec![vec![0.0; n]; n];
    for (i, row) in a.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            if i != j && g.has_edge(g.nodes()[i], g.nodes()[j]) {
                *cell = 1.0;
            }
        }
    }
    a
}

/// `Q = 1/(2m) sum_ij [A_ij - gamma k_i k_j / 2m] delta(c_i, c_j)` over a
/// dense, possibly weighted, symmetric matrix. A self-loop of weight `w`
/// goes on the diagonal as `2w`, so it adds `2w` to its node's degree.
pub fn dense_modularity(a: &[Vec<f64>], labels: &[usize], gamma: f64) -> f64 {
    let n = a.len();
    let k: Vec<f64> = a.iter().map(|row| row.iter().sum()).collect();
    let two_m: f64 = k.iter().sum();
    let mut q = 0.0;
    for i in 0..n {
        for j in 0..n {
            if labels[i] == labels[j] {
                q += a[i][j] - gamma * k[i] * k[j] / two_m;
            }
        }
    }
    q / two_m
}

pub fn graph_modularity(g: &UndirectedGraph, labels: &[usize], gamma: f64) -> f64 {
    dense_modularity(&adjacency(g), labels, gamma)
}

/// Every set partition of `0..n` as restricted growth strings.
pub fn set_partitions(n: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, max: usize, n: usize, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == n {
            out.push(prefix.clone());
            return;
        }
        for c in 0..=max + 1 {
            prefix.push(c);
            rec(prefix, max.max(c), n, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if n == 0 {
        out.push(Vec::new());
        return out;
    }
    let mut prefix = vec![0];
    rec(&mut prefix, 0, n, &mut out);
    out
}

/// Two 5-cliques on ids 0..5 and 5..10 joined by the edge 4-5.
pub fn two_clique_bridge() -> UndirectedGraph {
    let mut edges = Vec::new();
    for base in [0u64, 5] {
        for a in base..base + 5 {
            for b in (a + 1)..base + 5 {
                edges.push((UserId(a), UserId(b)));
            }
        }
    }
    edges.push((UserId(4), UserId(5)));
    UndirectedGraph::from_edges([], edges)
}

/// Same-community relation as a sorted list of node pairs, which makes
/// partitions comparable regardless of community ids.
pub fn co_membership(p: &Partition) -> Vec<(UserId, UserId)> {
    let mut pairs = Vec::new();
    for c in p.communities() {
        for (i, &a) in c.iter().enumerate() {
            for &b in &c[i + 1..] {
                pairs.push((a.min(b), a.max(b)));
            }
        }
    }
    pairs.sort();
    pairs
}

/// Textbook NMI from a contingency table, arithmetic-mean normalization.
pub fn contingency_nmi(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len() as f64;
    let ka = a.iter().max().map_or(0, |x| x + 1);
    let kb = b.iter().max().map_or(0, |x| x + 1);
    let mut table = vec![vec![0.0; kb]; ka];
    for (&x, &y) in a.iter().zip(b) {
        table[x][y] += 1.0;
    }
    let ra: Vec<f64> = table.iter().map(|r| r.iter().sum()).collect();
    let rb: Vec<f64> = (0..kb).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    let h = |counts: &[f64]| -> f64 {
        counts
            .iter()
            .filter(|&&c| c > 0.0)
            .map(|&c| -(c / n) * (c / n).ln())
            .sum()
    };
    let (ha, hb) = (h(&ra), h(&rb));
    let mut mi = 0.0;
    for i in 0..ka {
        for j in 0..kb {
            let nij = table[i][j];
            if nij > 0.0 {
                mi += nij / n * (n * nij / (ra[i] * rb[j])).ln();
            }
        }
    }
    if ha + hb == 0.0 {
        1.0
    } else {
        mi / ((ha + hb) / 2.0)
    }
}

pub fn row_sums_ok(rows: impl Iterator<Item = Vec<f64>>, tol: f64) -> bool {
    rows.into_iter().all(|r| (r.iter().sum::<f64>() - 1.0).abs() <= tol)
}
