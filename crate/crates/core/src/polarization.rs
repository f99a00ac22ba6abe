//! Community x topic cross-tabulation and per-topic concentration scores.

use std::io::Write;

use serde::{Deserialize, Serialize, Serializer};

use crate::community::Partition;
use crate::error::{Error, Result};
use crate::graph::UserId;
use crate::matrix::Matrix;
use crate::profile::csv_err;

/// How documents are combined into a community row.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Weighting<'a> {
    /// Plain mean of member documents' topic proportions.
    UserMean,
    /// Mean weighted by each document's token count (aligned with theta
    /// rows), i.e. the community's share of topic mass.
    TokenMass(&'a [u64]),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommunityRow {
    /// Community id in the partition.
    pub community: usize,
    pub size: usize,
    pub label: String,
    pub documents: usize,
    pub topics: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommunityTopicMatrix {
    pub rows: Vec<CommunityRow>,
    /// Documents whose owner is not in the partition.
    pub unassigned_documents: usize,
    /// Communities with no documents; they have no row.
    pub omitted_communities: Vec<usize>,
}

impl CommunityTopicMatrix {
    pub fn topics(&self) -> usize {
        self.rows.first().map_or(0, |r| r.topics.len())
    }

    pub fn set_labels(&mut self, labels: &[String]) {
        for row in self.rows.iter_mut() {
            if let Some(l) = labels.get(row.community) {
                row.label = l.clone();
            }
        }
    }

    /// Community rows by topic columns, values at two decimals.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["community".to_string(), "label".into(), "size".into()];
        header.extend((0..self.topics()).map(|k| format!("topic_{k}")));
        out.write_record(&header).map_err(csv_err)?;
        for row in &self.rows {
            let mut rec = vec![row.community.to_string(), row.label.clone(), row.size.to_string()];
            rec.extend(row.topics.iter().map(|x| format!("{x:.2}")));
            out.write_record(&rec).map_err(csv_err)?;
        }
        out.flush().map_err(|e| Error::config(e.to_string()))
    }
}

/// Averages topic proportions over the documents owned by each community's
/// members. `theta` row `d` belongs to `owners[d]`.
pub fn community_topic_distribution(
    theta: &Matrix,
    owners: &[UserId],
    p: &Partition,
    weighting: Weighting<'_>,
) -> Result<CommunityTopicMatrix> {
    if theta.rows() != owners.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} theta rows for {} document owners",
            theta.rows(),
            owners.len()
        )));
    }
    if let Weighting::TokenMass(w) = weighting {
        if w.len() != owners.len() {
            return Err(Error::DimensionMismatch("token weights vs documents".into()));
        }
    }
    let k = theta.cols();
    let mut sums = vec![vec![0.0; k]; p.len()];
    let mut mass = vec![0.0; p.len()];
    let mut docs = vec![0usize; p.len()];
    let mut unassigned = 0;
    for (d, owner) in owners.iter().enumerate() {
        let Some(c) = p.community_of(*owner) else {
            unassigned += 1;
            continue;
        };
        let w = match weighting {
            Weighting::UserMean => 1.0,
            Weighting::TokenMass(ws) => ws[d] as f64,
        };
        for (acc, x) in sums[c].iter_mut().zip(theta.row(d)) {
            *acc += w * x;
        }
        mass[c] += w;
        docs[c] += 1;
    }
    let mut rows = Vec::new();
    let mut omitted = Vec::new();
    for c in 0..p.len() {
        if docs[c] == 0 || mass[c] == 0.0 {
            log::warn!("community {c} has no documents; omitted from topic matrix");
            omitted.push(c);
            continue;
        }
        rows.push(CommunityRow {
            community: c,
            size: p.members(c).len(),
            label: String::new(),
            documents: docs[c],
            topics: sums[c].iter().map(|s| s / mass[c]).collect(),
        });
    }
    Ok(CommunityTopicMatrix {
        rows,
        unassigned_documents: unassigned,
        omitted_communities: omitted,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EchoThresholds {
    /// Minimum share of the topic in its dominant community.
    pub dominance_min: f64,
    /// Minimum dominant / runner-up ratio.
    pub ratio_min: f64,
}

impl Default for EchoThresholds {
    fn default() -> Self {
        EchoThresholds {
            dominance_min: 0.3,
            ratio_min: 3.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopicConcentration {
    pub topic: usize,
    /// Community id (not row index) with the largest share.
    pub dominant_community: usize,
    pub dominance: f64,
    pub runner_up: f64,
    /// Infinite when the runner-up share is zero; serialized as `"inf"`.
    #[serde(serialize_with = "ser_ratio", deserialize_with = "de_ratio")]
    pub ratio: f64,
    pub flagged: bool,
}

fn ser_ratio<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if x.is_infinite() {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*x)
    }
}

fn de_ratio<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum R {
        N(f64),
        S(String),
    }
    match R::deserialize(d)? {
        R::N(x) => Ok(x),
        R::S(s) if s == "inf" => Ok(f64::INFINITY),
        R::S(s) => Err(serde::de::Error::custom(format!("bad ratio {s:?}"))),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EchoChamberReport {
    pub thresholds: EchoThresholds,
    pub topics: Vec<TopicConcentration>,
}

impl EchoChamberReport {
    pub fn flagged(&self) -> impl Iterator<Item = &TopicConcentration> {
        self.topics.iter().filter(|t| t.flagged)
    }
}

/// A topic is flagged when its largest community share is at least
/// `dominance_min` and at least `ratio_min` times the second largest. Equal
/// maxima give a ratio of 1; the dominant community is then the first row.
pub fn echo_chamber_score(m: &CommunityTopicMatrix, th: &EchoThresholds) -> Result<EchoChamberReport> {
    if m.rows.is_empty() {
        return Err(Error::config("community-topic matrix is empty"));
    }
    if !(th.dominance_min > 0.0 && th.dominance_min < 1.0) {
        return Err(Error::config("dominance_min must be in (0, 1)"));
    }
    if th.ratio_min.is_nan() || th.ratio_min <= 1.0 {
        return Err(Error::config("ratio_min must exceed 1"));
    }
    let topics = (0..m.topics())
        .map(|k| {
            let mut best = (0usize, f64::NEG_INFINITY);
            let mut second = 0.0f64;
            for (r, row) in m.rows.iter().enumerate() {
                let x = row.topics[k];
                if x > best.1 {
                    if best.1.is_finite() {
                        second = second.max(best.1);
                    }
                    best = (r, x);
                } else {
                    second = second.max(x);
                }
            }
            let (row, dominance) = best;
            let ratio = if second > 0.0 {
                dominance / second
            } else if dominance > 0.0 {
                f64::INFINITY
            } else {
                1.0
            };
            TopicConcentration {
                topic: k,
                dominant_community: m.rows[row].community,
                dominance,
                runner_up: second,
                ratio,
                flagged: dominance >= th.dominance_min && ratio >= th.ratio_min,
            }
        })
        .collect();
    Ok(EchoChamberReport {
        thresholds: *th,
        topics,
    })
}
