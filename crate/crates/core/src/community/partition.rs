use std::collections::{BTreeSet, HashMap};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::UserId;
use crate::io as fio;

/// Node to community assignment. Community ids are dense from 0 and each
/// member list is sorted by user id.
#[derive(Clone, Debug, PartialEq)]
pub struct Partition {
    communities: Vec<Vec<UserId>>,
    lookup: HashMap<UserId, usize>,
    /// Resolution the modularity score was computed at.
    pub resolution: f64,
    /// `None` when modularity is undefined (edgeless graph) or unknown.
    pub modularity: Option<f64>,
}

impl Partition {
    /// Fails if a node is listed twice or a community is empty.
    pub fn from_communities(communities: Vec<Vec<UserId>>) -> Result<Self> {
        let mut lookup = HashMap::new();
        let mut out = Vec::with_capacity(communities.len());
        for (c, mut members) in communities.into_iter().enumerate() {
            if members.is_empty() {
                return Err(Error::config(format!("community {c} is empty")));
            }
            members.sort_unstable();
            for &u in &members {
                if lookup.insert(u, c).is_some() {
                    return Err(Error::config(format!("node {u} assigned twice")));
                }
            }
            out.push(members);
        }
        Ok(Partition {
            communities: out,
            lookup,
            resolution: 1.0,
            modularity: None,
        })
    }

    /// Builds from per-node labels. Communities are numbered by first
    /// appearance in `nodes` order, so arbitrary label values are fine.
    pub fn from_labels(nodes: &[UserId], labels: &[usize]) -> Self {
        assert_eq!(nodes.len(), labels.len());
        let (dense, count) = densify(labels);
        let mut communities = vec![Vec::new(); count];
        let mut lookup = HashMap::with_capacity(nodes.len());
        for (&u, &c) in nodes.iter().zip(&dense) {
            communities[c].push(u);
            lookup.insert(u, c);
        }
        for members in communities.iter_mut() {
            members.sort_unstable();
        }
        Partition {
            communities,
            lookup,
            resolution: 1.0,
            modularity: None,
        }
    }

    pub fn singletons(nodes: &[UserId]) -> Self {
        let labels: Vec<usize> = (0..nodes.len()).collect();
        Self::from_labels(nodes, &labels)
    }

    pub fn with_score(mut self, resolution: f64, modularity: Option<f64>) -> Self {
        self.resolution = resolution;
        self.modularity = modularity;
        self
    }

    /// Number of communities.
    pub fn len(&self) -> usize {
        self.communities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.communities.is_empty()
    }

    pub fn node_count(&self) -> usize {
        self.lookup.len()
    }

    pub fn communities(&self) -> &[Vec<UserId>] {
        &self.communities
    }

    pub fn members(&self, community: usize) -> &[UserId] {
        &self.communities[community]
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.communities.iter().map(Vec::len).collect()
    }

    pub fn community_of(&self, id: UserId) -> Option<usize> {
        self.lookup.get(&id).copied()
    }

    pub fn nodes(&self) -> impl Iterator<Item = UserId> + '_ {
        self.communities.iter().flatten().copied()
    }

    /// Community label for each of `nodes`; every node must be covered.
    pub fn labels_for(&self, nodes: &[UserId]) -> Result<Vec<usize>> {
        nodes
            .iter()
            .map(|&u| self.community_of(u).ok_or(Error::PartitionMismatch(u.0)))
            .collect()
    }

    pub fn to_file(&self) -> PartitionFile {
        PartitionFile {
            resolution: self.resolution,
            modularity: self.modularity,
            communities: self
                .communities
                .iter()
                .enumerate()
                .map(|(id, members)| CommunityRecord {
                    id,
                    size: members.len(),
                    members: members.clone(),
                })
                .collect(),
        }
    }

    pub fn from_file(file: PartitionFile) -> Result<Self> {
        let mut records = file.communities;
        records.sort_by_key(|r| r.id);
        for (i, r) in records.iter().enumerate() {
            if r.id != i {
                return Err(Error::config("community ids must be contiguous from 0"));
            }
            if r.size != r.members.len() {
                return Err(Error::config(format!(
                    "community {} declares size {} but lists {} members",
                    r.id,
                    r.size,
                    r.members.len()
                )));
            }
        }
        let p = Self::from_communities(records.into_iter().map(|r| r.members).collect())?;
        Ok(p.with_score(file.resolution, file.modularity))
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let file = self.to_file();
        fio::write_with(path, |w| {
            serde_json::to_writer_pretty(&mut *w, &file).map_err(std::io::Error::other)?;
            writeln!(w)
        })
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let file: PartitionFile = serde_json::from_reader(fio::open(path)?)?;
        Self::from_file(file)
    }
}

/// On-disk partition layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionFile {
    pub resolution: f64,
    pub modularity: Option<f64>,
    pub communities: Vec<CommunityRecord>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommunityRecord {
    pub id: usize,
    pub size: usize,
    pub members: Vec<UserId>,
}

/// Relabels to dense ids in order of first appearance.
pub(crate) fn densify(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut map: HashMap<usize, usize> = HashMap::new();
    let dense = labels
        .iter()
        .map(|&l| {
            let next = map.len();
            *map.entry(l).or_insert(next)
        })
        .collect();
    (dense, map.len())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    TooSmall,
    Excluded,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedCommunity {
    /// Id in the unfiltered partition.
    pub id: usize,
    pub size: usize,
    pub reason: DropReason,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExclusionReport {
    pub dropped: Vec<DroppedCommunity>,
    pub dropped_members: Vec<UserId>,
    /// `kept[new_id]` is the community's id in the unfiltered partition.
    pub kept: Vec<usize>,
}

/// Drops communities smaller than `min_size` and communities whose members
/// are all in `excluded`, then re-indexes the survivors densely in their
/// original order. Partially excluded communities are kept whole.
pub fn filter_communities(
    p: &Partition,
    min_size: usize,
    excluded: &BTreeSet<UserId>,
) -> Result<(Partition, ExclusionReport)> {
    if min_size == 0 {
        return Err(Error::config("min_size must be at least 1"));
    }
    let mut report = ExclusionReport::default();
    let mut kept = Vec::new();
    for (id, members) in p.communities().iter().enumerate() {
        let reason = if members.len() < min_size {
            Some(DropReason::TooSmall)
        } else if members.iter().all(|u| excluded.contains(u)) {
            Some(DropReason::Excluded)
        } else {
            None
        };
        match reason {
            Some(reason) => {
                report.dropped.push(DroppedCommunity {
                    id,
                    size: members.len(),
                    reason,
                });
                report.dropped_members.extend_from_slice(members);
            }
            None => {
                report.kept.push(id);
                kept.push(members.clone());
            }
        }
    }
    report.dropped_members.sort_unstable();
    let filtered = Partition::from_communities(kept)?.with_score(p.resolution, p.modularity);
    Ok((filtered, report))
}
