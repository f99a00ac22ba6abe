//! Per-community follow ratios toward a fixed set of seed accounts.
//!
//! Counts are kept as exact integers; ratios are only rounded when
//! rendered.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::community::Partition;
use crate::error::{Error, Result};
use crate::graph::{DirectedFollowGraph, UserId};
use crate::io as fio;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedAccount {
    pub user_id: UserId,
    pub label: String,
}

pub fn read_seeds(path: &Path) -> Result<Vec<SeedAccount>> {
    let seeds: Vec<SeedAccount> = serde_json::from_reader(fio::open(path)?)?;
    check_seeds(&seeds)?;
    Ok(seeds)
}

fn check_seeds(seeds: &[SeedAccount]) -> Result<()> {
    if seeds.is_empty() {
        return Err(Error::config("seed list is empty"));
    }
    let distinct: BTreeSet<UserId> = seeds.iter().map(|s| s.user_id).collect();
    if distinct.len() != seeds.len() {
        return Err(Error::config("seed user ids must be distinct"));
    }
    Ok(())
}

/// Exact `followers / size`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ratio {
    pub followers: u64,
    pub size: u64,
}

impl Ratio {
    pub fn value(self) -> f64 {
        if self.size == 0 {
            0.0
        } else {
            self.followers as f64 / self.size as f64
        }
    }

    /// Rounded half-up to `places` decimals, computed in integers.
    pub fn format(self, places: u32) -> String {
        let scale = 10u128.pow(places);
        let den = self.size.max(1) as u128;
        let units = (2 * self.followers as u128 * scale + den) / (2 * den);
        if places == 0 {
            return units.to_string();
        }
        format!(
            "{}.{:0width$}",
            units / scale,
            units % scale,
            width = places as usize
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub size: u64,
    /// Followers per seed, aligned with [`CommunityProfile::seeds`].
    pub followers: Vec<u64>,
}

impl ProfileRow {
    pub fn ratio(&self, seed: usize) -> Ratio {
        Ratio {
            followers: self.followers[seed],
            size: self.size,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommunityProfile {
    pub seeds: Vec<SeedAccount>,
    /// One row per community of the partition, by community id.
    pub rows: Vec<ProfileRow>,
    /// Ratios over every node of the partition.
    pub baseline: ProfileRow,
}

/// Fraction of each community's members that follow each seed.
pub fn follow_ratio(
    g: &DirectedFollowGraph,
    p: &Partition,
    seeds: &[SeedAccount],
) -> Result<CommunityProfile> {
    check_seeds(seeds)?;
    let mut rows: Vec<ProfileRow> = p
        .sizes()
        .into_iter()
        .map(|size| ProfileRow {
            size: size as u64,
            followers: vec![0; seeds.len()],
        })
        .collect();
    let mut baseline = ProfileRow {
        size: p.node_count() as u64,
        followers: vec![0; seeds.len()],
    };
    for (s, seed) in seeds.iter().enumerate() {
        let Some(si) = g.index_of(seed.user_id) else {
            log::warn!("seed {} ({}) is not in the follow graph", seed.label, seed.user_id);
            continue;
        };
        for &f in g.in_neighbors(si) {
            if let Some(c) = p.community_of(g.nodes()[f as usize]) {
                rows[c].followers[s] += 1;
                baseline.followers[s] += 1;
            }
        }
    }
    Ok(CommunityProfile {
        seeds: seeds.to_vec(),
        rows,
        baseline,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedLift {
    pub seed: usize,
    pub label: String,
    /// `f64::INFINITY` when the baseline ratio is zero.
    pub lift: f64,
}

/// For each community, the seeds whose ratio is at least `lift_threshold`
/// times the baseline ratio, highest lift first.
pub fn dominant_seed(profile: &CommunityProfile, lift_threshold: f64) -> Result<Vec<Vec<SeedLift>>> {
    if lift_threshold.is_nan() || lift_threshold <= 1.0 {
        return Err(Error::config("lift threshold must exceed 1"));
    }
    Ok(profile
        .rows
        .iter()
        .map(|row| {
            let mut picked: Vec<SeedLift> = (0..profile.seeds.len())
                .filter_map(|s| {
                    let lift = lift(row.ratio(s), profile.baseline.ratio(s))?;
                    (lift >= lift_threshold).then(|| SeedLift {
                        seed: s,
                        label: profile.seeds[s].label.clone(),
                        lift,
                    })
                })
                .collect();
            picked.sort_by(|a, b| b.lift.total_cmp(&a.lift).then(a.seed.cmp(&b.seed)));
            picked
        })
        .collect())
}

fn lift(community: Ratio, baseline: Ratio) -> Option<f64> {
    if community.size == 0 {
        return None;
    }
    if baseline.followers == 0 {
        return (community.followers > 0).then_some(f64::INFINITY);
    }
    let num = community.followers as u128 * baseline.size as u128;
    let den = community.size as u128 * baseline.followers as u128;
    Some(num as f64 / den as f64)
}

/// Joins each community's dominant seed labels with `+`.
pub fn auto_labels(dominant: &[Vec<SeedLift>]) -> Vec<String> {
    dominant
        .iter()
        .map(|seeds| {
            seeds
                .iter()
                .map(|s| s.label.as_str())
                .collect::<Vec<_>>()
                .join("+")
        })
        .collect()
}

/// Table layout: one row per community plus a trailing `baseline` row,
/// ratios at two decimals.
pub fn write_profile_csv<W: Write>(
    w: W,
    profile: &CommunityProfile,
    labels: &[String],
) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["community".to_string(), "label".into(), "size".into()];
    header.extend(profile.seeds.iter().map(|s| s.label.clone()));
    out.write_record(&header).map_err(csv_err)?;
    for (c, row) in profile.rows.iter().enumerate() {
        let mut rec = vec![
            c.to_string(),
            labels.get(c).cloned().unwrap_or_default(),
            row.size.to_string(),
        ];
        rec.extend((0..profile.seeds.len()).map(|s| row.ratio(s).format(2)));
        out.write_record(&rec).map_err(csv_err)?;
    }
    let mut rec = vec![
        "baseline".to_string(),
        String::new(),
        profile.baseline.size.to_string(),
    ];
    rec.extend((0..profile.seeds.len()).map(|s| profile.baseline.ratio(s).format(2)));
    out.write_record(&rec).map_err(csv_err)?;
    out.flush().map_err(|e| Error::config(e.to_string()))?;
    Ok(())
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    match e.position() {
        Some(pos) => Error::parse(pos.line() as usize, e.to_string()),
        None => Error::config(format!("csv: {e}")),
    }
}
