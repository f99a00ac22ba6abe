use crate::community::{Partition, WeightedGraph};
use crate::error::{Error, Result};
use crate::graph::UndirectedGraph;

fn check_resolution(resolution: f64) -> Result<()> {
    if resolution > 0.0 && resolution.is_finite() {
        Ok(())
    } else {
        Err(Error::config(format!(
            "resolution must be positive, got {resolution}"
        )))
    }
}

/// `Q = sum_c [ l_c / m - resolution * (d_c / 2m)^2 ]`, with `l_c` the edges
/// inside community `c` and `d_c` its total degree.
pub fn modularity(g: &UndirectedGraph, p: &Partition, resolution: f64) -> Result<f64> {
    check_resolution(resolution)?;
    let m = g.edge_count();
    if m == 0 {
        return Err(Error::ModularityUndefined);
    }
    let labels = p.labels_for(g.nodes())?;
    let count = labels.iter().max().map_or(0, |&c| c + 1);
    let mut internal = vec![0usize; count];
    let mut degree = vec![0usize; count];
    for (i, &c) in labels.iter().enumerate() {
        degree[c] += g.degree(i);
    }
    for (a, b) in g.index_edges() {
        if labels[a] == labels[b] {
            internal[labels[a]] += 1;
        }
    }
    let m = m as f64;
    Ok(internal
        .iter()
        .zip(&degree)
        .map(|(&l, &d)| {
            let share = d as f64 / (2.0 * m);
            l as f64 / m - resolution * share * share
        })
        .sum())
}

/// Modularity of dense `labels` over a weighted graph (self-loops count as
/// internal weight).
pub fn weighted_modularity(g: &WeightedGraph, labels: &[usize], resolution: f64) -> Result<f64> {
    check_resolution(resolution)?;
    let m = g.total_weight();
    if m <= 0.0 {
        return Err(Error::ModularityUndefined);
    }
    let count = labels.iter().max().map_or(0, |&c| c + 1);
    let mut internal = vec![0.0; count];
    let mut degree = vec![0.0; count];
    for (i, &c) in labels.iter().enumerate() {
        degree[c] += g.degree(i);
        internal[c] += g.self_loop(i);
        for (j, w) in g.neighbors(i) {
            if j > i && labels[j] == c {
                internal[c] += w;
            }
        }
    }
    Ok(internal
        .iter()
        .zip(&degree)
        .map(|(&l, &d)| {
            let share = d / (2.0 * m);
            l / m - resolution * share * share
        })
        .sum())
}
