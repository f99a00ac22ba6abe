//! Seeded generators with known ground truth, and the recovery metrics used
//! to score the pipeline against them.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::community::Partition;
use crate::error::{Error, Result};
use crate::graph::{UndirectedGraph, UserId};
use crate::io as fio;
use crate::matrix::Matrix;
use crate::profile::SeedAccount;
use crate::seed::{derive_seed, rng};
use crate::text::{BowCorpus, BowDocument, RawDocumentRecord, RecordContent, Vocabulary};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedPartitionSpec {
    pub block_sizes: Vec<usize>,
    pub p_in: f64,
    pub p_out: f64,
    pub seed: u64,
    /// Id of the first node; nodes are numbered consecutively block by block.
    #[serde(default)]
    pub first_id: u64,
}

impl PlantedPartitionSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.p_out && self.p_out <= self.p_in && self.p_in <= 1.0) {
            return Err(Error::config("need 0 <= p_out <= p_in <= 1"));
        }
        if self.block_sizes.is_empty() || self.block_sizes.contains(&0) {
            return Err(Error::config("block sizes must be at least 1"));
        }
        Ok(())
    }
}

/// Each intra-block pair is an edge with probability `p_in`, each
/// inter-block pair with `p_out`, independently. Pairs are visited by
/// geometric skipping so sparse large graphs cost time proportional to
/// their edges.
pub fn planted_partition_graph(spec: &PlantedPartitionSpec) -> Result<(UndirectedGraph, Partition)> {
    spec.validate()?;
    let mut rng = rng(spec.seed);
    let mut starts = vec![0usize];
    for &s in &spec.block_sizes {
        starts.push(starts.last().unwrap() + s);
    }
    let n = *starts.last().unwrap();
    let mut pairs: Vec<(u32, u32)> = Vec::new();
    let blocks = spec.block_sizes.len();
    for a in 0..blocks {
        for b in a..blocks {
            let (sa, sb) = (spec.block_sizes[a], spec.block_sizes[b]);
            if a == b {
                let total = (sa * (sa - 1) / 2) as u64;
                sample_indices(&mut rng, total, spec.p_in, |idx| {
                    let (i, j) = triangular(idx);
                    pairs.push(((starts[a] + i) as u32, (starts[a] + j) as u32));
                });
            } else {
                let total = (sa * sb) as u64;
                sample_indices(&mut rng, total, spec.p_out, |idx| {
                    let (i, j) = ((idx / sb as u64) as usize, (idx % sb as u64) as usize);
                    pairs.push(((starts[a] + i) as u32, (starts[b] + j) as u32));
                });
            }
        }
    }
    let nodes: Vec<UserId> = (0..n as u64).map(|i| UserId(spec.first_id + i)).collect();
    let labels: Vec<usize> = (0..blocks)
        .flat_map(|b| std::iter::repeat_n(b, spec.block_sizes[b]))
        .collect();
    let truth = Partition::from_labels(&nodes, &labels);
    Ok((UndirectedGraph::from_index_pairs(nodes, pairs), truth))
}

/// Calls `emit` for each index in `0..total` kept with probability `p`.
fn sample_indices<R: Rng>(rng: &mut R, total: u64, p: f64, mut emit: impl FnMut(u64)) {
    if p <= 0.0 || total == 0 {
        return;
    }
    if p >= 1.0 {
        (0..total).for_each(emit);
        return;
    }
    let log_q = (1.0 - p).ln();
    let mut idx: u64 = 0;
    loop {
        let u: f64 = 1.0 - rng.random::<f64>();
        let skip = (u.ln() / log_q).floor();
        if skip >= (total - idx) as f64 {
            return;
        }
        idx += skip as u64;
        emit(idx);
        idx += 1;
        if idx >= total {
            return;
        }
    }
}

/// Maps a linear index to the pair `(i, j)`, `i < j`, enumerated as
/// (0,1), (0,2), (1,2), (0,3), ...
fn triangular(idx: u64) -> (usize, usize) {
    let mut j = ((((8 * idx + 1) as f64).sqrt() + 1.0) / 2.0).floor() as u64;
    while j * (j - 1) / 2 > idx {
        j -= 1;
    }
    while (j + 1) * j / 2 <= idx {
        j += 1;
    }
    let i = idx - j * (j - 1) / 2;
    (i as usize, j as usize)
}

/// Dirichlet draw that stays finite for small concentrations by sampling
/// gammas in log space.
pub fn sample_dirichlet<R: Rng>(rng: &mut R, concentration: &[f64]) -> Vec<f64> {
    let logs: Vec<f64> = concentration
        .iter()
        .map(|&a| {
            if a >= 1.0 {
                Gamma::new(a, 1.0).expect("positive shape").sample(rng).ln()
            } else {
                let g = Gamma::new(a + 1.0, 1.0).expect("positive shape").sample(rng);
                let u: f64 = 1.0 - rng.random::<f64>();
                g.ln() + u.ln() / a
            }
        })
        .collect();
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|x| x / sum).collect()
}

fn categorical<R: Rng>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticCorpusSpec {
    pub topics: usize,
    pub vocab: usize,
    pub documents: usize,
    pub tokens_per_doc: usize,
    pub alpha: f64,
    pub beta: f64,
    /// Give each topic its own contiguous block of the vocabulary.
    pub separable: bool,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticCorpus {
    pub corpus: BowCorpus,
    pub vocabulary: Vocabulary,
    /// Generating document-topic proportions.
    pub theta: Matrix,
    /// Generating topic-word distributions.
    pub phi: Matrix,
}

/// Runs the LDA generative process forward: `phi_k ~ Dir(beta)` (on its
/// vocabulary block when separable), `theta_d ~ Dir(alpha)`, then each token
/// draws a topic from `theta_d` and a word from that topic.
pub fn synthetic_lda_corpus(spec: &SyntheticCorpusSpec) -> Result<SyntheticCorpus> {
    let (k, v, d) = (spec.topics, spec.vocab, spec.documents);
    if spec.tokens_per_doc == 0 {
        return Err(Error::config("tokens per document must be at least 1"));
    }
    if k == 0 || v == 0 || d == 0 {
        return Err(Error::config("topics, vocabulary and documents must be positive"));
    }
    if !(spec.alpha > 0.0 && spec.beta > 0.0) {
        return Err(Error::config("alpha and beta must be positive"));
    }
    if spec.separable && v < k {
        return Err(Error::config("separable topics need at least one word each"));
    }
    let mut rng = rng(spec.seed);

    let mut phi = Matrix::zeros(k, v);
    for t in 0..k {
        let (lo, hi) = if spec.separable {
            (t * v / k, (t + 1) * v / k)
        } else {
            (0, v)
        };
        let draw = sample_dirichlet(&mut rng, &vec![spec.beta; hi - lo]);
        phi.row_mut(t)[lo..hi].copy_from_slice(&draw);
    }

    let mut theta = Matrix::zeros(d, k);
    let mut docs = Vec::with_capacity(d);
    let mut freq = vec![0u64; v];
    for doc in 0..d {
        let th = sample_dirichlet(&mut rng, &vec![spec.alpha; k]);
        theta.row_mut(doc).copy_from_slice(&th);
        let mut counts: BTreeMap<u32, u32> = BTreeMap::new();
        for _ in 0..spec.tokens_per_doc {
            let t = categorical(&mut rng, &th);
            let w = categorical(&mut rng, phi.row(t));
            *counts.entry(w as u32).or_default() += 1;
            freq[w] += 1;
        }
        docs.push(BowDocument {
            owner: UserId(doc as u64),
            terms: counts.into_iter().collect(),
        });
    }
    let width = (v.max(2) - 1).to_string().len();
    let terms = (0..v).map(|i| format!("w{i:0width$}")).collect();
    Ok(SyntheticCorpus {
        corpus: BowCorpus {
            docs,
            vocab_size: v,
        },
        vocabulary: Vocabulary::from_terms(terms, freq)?,
        theta,
        phi,
    })
}

/// Normalized mutual information, `I(a; b) / ((H(a) + H(b)) / 2)`. Two
/// single-community partitions score 1.
pub fn nmi(a: &Partition, b: &Partition) -> Result<f64> {
    if a.node_count() != b.node_count() {
        return Err(Error::NodeSetMismatch);
    }
    let mut cells: HashMap<(usize, usize), u64> = HashMap::new();
    for u in a.nodes() {
        let cb = b.community_of(u).ok_or(Error::NodeSetMismatch)?;
        *cells.entry((a.community_of(u).unwrap(), cb)).or_default() += 1;
    }
    let n = a.node_count() as f64;
    if n == 0.0 {
        return Ok(1.0);
    }
    let entropy = |p: &Partition| -> f64 {
        p.sizes()
            .iter()
            .map(|&s| {
                let q = s as f64 / n;
                -q * q.ln()
            })
            .sum()
    };
    let (ha, hb) = (entropy(a), entropy(b));
    if ha + hb == 0.0 {
        return Ok(1.0);
    }
    let sa = a.sizes();
    let sb = b.sizes();
    // Summed in value order so that swapping a and b gives the same bits.
    let mut terms: Vec<f64> = cells
        .iter()
        .map(|(&(i, j), &c)| {
            let c = c as f64;
            c / n * (c * n / (sa[i] as f64 * sb[j] as f64)).ln()
        })
        .collect();
    terms.sort_by(f64::total_cmp);
    let mi: f64 = terms.iter().sum();
    Ok((mi / ((ha + hb) / 2.0)).clamp(0.0, 1.0))
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopicMatching {
    /// `assignment[true_topic]` is the matched estimated topic.
    pub assignment: Vec<usize>,
    /// Total-variation distance of each matched pair, by true topic.
    pub distances: Vec<f64>,
}

impl TopicMatching {
    pub fn mean_distance(&self) -> f64 {
        self.distances.iter().sum::<f64>() / self.distances.len().max(1) as f64
    }
}

/// Pairs estimated and true topics to minimize total TV distance.
pub fn match_topics(estimated: &Matrix, truth: &Matrix) -> Result<TopicMatching> {
    if estimated.rows() != truth.rows() || estimated.cols() != truth.cols() {
        return Err(Error::DimensionMismatch(format!(
            "estimated {}x{} vs true {}x{}",
            estimated.rows(),
            estimated.cols(),
            truth.rows(),
            truth.cols()
        )));
    }
    let k = truth.rows();
    let cost: Vec<Vec<f64>> = (0..k)
        .map(|i| {
            (0..k)
                .map(|j| total_variation(truth.row(i), estimated.row(j)))
                .collect()
        })
        .collect();
    let assignment = hungarian(&cost);
    let distances = assignment
        .iter()
        .enumerate()
        .map(|(i, &j)| cost[i][j])
        .collect();
    Ok(TopicMatching {
        assignment,
        distances,
    })
}

/// Minimum-cost perfect matching on a square cost matrix (shortest
/// augmenting paths with potentials). Returns the column for each row.
fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![0; n];
    for j in 1..=n {
        if p[j] > 0 {
            out[p[j] - 1] = j - 1;
        }
    }
    out
}

/// Parameters of the bundled end-to-end dataset: a follow network with
/// planted communities, seed accounts with community-specific follow rates,
/// and tweets whose topics lean by community.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SocialDatasetSpec {
    /// Planted community sizes. Communities below the default size filter
    /// exercise the filter.
    pub block_sizes: Vec<usize>,
    /// Index into `block_sizes` of a community listed in the exclusion file.
    pub excluded_block: Option<usize>,
    pub p_in: f64,
    pub p_out: f64,
    /// Probability of each extra one-way follow between users.
    pub one_way: f64,
    pub seeds: usize,
    /// Follow probability toward the community's own seed and toward others.
    pub seed_follow: (f64, f64),
    /// One community-specific topic per block plus this many shared topics.
    pub shared_topics: usize,
    pub words_per_topic: usize,
    pub tweets_per_user: usize,
    pub tokens_per_tweet: usize,
    /// Share of a user's tokens drawn from the community topic.
    pub focus: f64,
    pub seed: u64,
}

impl Default for SocialDatasetSpec {
    fn default() -> Self {
        SocialDatasetSpec {
            block_sizes: vec![60, 50, 40, 30, 20, 6],
            excluded_block: Some(4),
            p_in: 0.25,
            p_out: 0.01,
            one_way: 0.01,
            seeds: 4,
            seed_follow: (0.7, 0.1),
            shared_topics: 3,
            words_per_topic: 15,
            tweets_per_user: 5,
            tokens_per_tweet: 12,
            focus: 0.6,
            seed: 7,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SocialDataset {
    pub edges: Vec<(UserId, UserId)>,
    pub screen_names: Vec<(UserId, String)>,
    pub seeds: Vec<SeedAccount>,
    pub documents: Vec<RawDocumentRecord>,
    pub stopwords: Vec<String>,
    pub excluded: Vec<UserId>,
    /// Planted communities over user ids (seed accounts excluded).
    pub truth: Partition,
}

const STOPWORDS: [&str; 4] = ["the", "and", "of", "to"];
const USER_BASE: u64 = 1000;

pub fn synthetic_dataset(spec: &SocialDatasetSpec) -> Result<SocialDataset> {
    let (graph, truth) = planted_partition_graph(&PlantedPartitionSpec {
        block_sizes: spec.block_sizes.clone(),
        p_in: spec.p_in,
        p_out: spec.p_out,
        seed: derive_seed(spec.seed, 1),
        first_id: USER_BASE,
    })?;
    let mut rng = rng(derive_seed(spec.seed, 2));
    let users = graph.nodes().to_vec();
    let block_of = |u: UserId| truth.community_of(u).unwrap();

    let mut edges = Vec::new();
    for (a, b) in graph.edges() {
        edges.push((a, b));
        edges.push((b, a));
    }
    for &a in &users {
        for &b in &users {
            if a != b && rng.random::<f64>() < spec.one_way {
                edges.push((a, b));
            }
        }
    }
    let seeds: Vec<SeedAccount> = (0..spec.seeds)
        .map(|s| SeedAccount {
            user_id: UserId(1 + s as u64),
            label: format!("Leader {}", (b'A' + (s % 26) as u8) as char),
        })
        .collect();
    for &u in &users {
        let own = block_of(u) % spec.seeds.max(1);
        for (s, seed) in seeds.iter().enumerate() {
            let p = if s == own { spec.seed_follow.0 } else { spec.seed_follow.1 };
            if rng.random::<f64>() < p {
                edges.push((u, seed.user_id));
            }
        }
    }

    let blocks = spec.block_sizes.len();
    let topics = blocks + spec.shared_topics;
    let word = |t: usize, j: usize| format!("t{t:02}w{j:02}");
    let mut documents = Vec::new();
    for (i, &u) in users.iter().enumerate() {
        let own = block_of(u);
        for tweet in 0..spec.tweets_per_user {
            let mut tokens = Vec::with_capacity(spec.tokens_per_tweet + 2);
            for _ in 0..spec.tokens_per_tweet {
                let t = if rng.random::<f64>() < spec.focus || spec.shared_topics == 0 {
                    own
                } else {
                    blocks + rng.random_range(0..spec.shared_topics)
                };
                debug_assert!(t < topics);
                tokens.push(word(t, rng.random_range(0..spec.words_per_topic)));
                if rng.random::<f64>() < 0.1 {
                    tokens.push(STOPWORDS[rng.random_range(0..STOPWORDS.len())].to_string());
                }
            }
            let content = if i % 2 == 0 {
                RecordContent::Tokens { tokens }
            } else {
                let mut text = tokens.join(" ");
                if tweet == 0 {
                    text.push_str(" @someone https://example.com/x");
                }
                RecordContent::Text {
                    text: text.to_uppercase(),
                }
            };
            documents.push(RawDocumentRecord { user_id: u, content });
        }
    }
    let excluded = spec
        .excluded_block
        .filter(|&b| b < blocks)
        .map(|b| truth.members(b).to_vec())
        .unwrap_or_default();
    let screen_names = users.iter().map(|&u| (u, format!("user_{u}"))).collect();
    Ok(SocialDataset {
        edges,
        screen_names,
        seeds,
        documents,
        stopwords: STOPWORDS.iter().map(|s| s.to_string()).collect(),
        excluded,
        truth,
    })
}

/// File names written by [`write_dataset`], in the pipeline's input formats.
pub struct DatasetFiles;

impl DatasetFiles {
    pub const EDGES: &'static str = "edges.tsv";
    pub const USERS: &'static str = "users.jsonl";
    pub const DOCS: &'static str = "docs.jsonl";
    pub const SEEDS: &'static str = "seeds.json";
    pub const STOPWORDS: &'static str = "stopwords.txt";
    pub const EXCLUDE: &'static str = "exclude.txt";
    pub const TRUTH: &'static str = "truth.json";
}

pub fn write_dataset(ds: &SocialDataset, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    fio::write_with(&dir.join(DatasetFiles::EDGES), |w| {
        writeln!(w, "# follower\tfollowee")?;
        for (a, b) in &ds.edges {
            writeln!(w, "{a}\t{b}")?;
        }
        Ok(())
    })?;
    fio::write_with(&dir.join(DatasetFiles::USERS), |w| {
        for (u, name) in &ds.screen_names {
            let rec = serde_json::json!({ "user_id": u, "screen_name": name });
            writeln!(w, "{rec}")?;
        }
        Ok(())
    })?;
    fio::write_with(&dir.join(DatasetFiles::DOCS), |w| {
        for rec in &ds.documents {
            serde_json::to_writer(&mut *w, rec).map_err(std::io::Error::other)?;
            writeln!(w)?;
        }
        Ok(())
    })?;
    let seeds = serde_json::to_string_pretty(&ds.seeds)?;
    fio::write_string(&dir.join(DatasetFiles::SEEDS), &(seeds + "\n"))?;
    fio::write_string(&dir.join(DatasetFiles::STOPWORDS), &(ds.stopwords.join("\n") + "\n"))?;
    fio::write_id_list(&dir.join(DatasetFiles::EXCLUDE), &ds.excluded)?;
    ds.truth.write_json(&dir.join(DatasetFiles::TRUTH))
}
