//! Stage orchestration. Each stage reads raw inputs or artifacts persisted by
//! earlier stages in the output directory and writes its own artifacts there,
//! so any stage can be rerun on its own.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::community::{filter_communities, louvain, LouvainConfig, Partition, PartitionFile};
use crate::error::{Error, Result};
use crate::gexf::{export_gexf, validate_gexf};
use crate::graph::{read_directed_edges, read_network, reciprocalize, NodeMetadata};
use crate::io as fio;
use crate::lda::{fit_lda, top_words, training_perplexity, LdaConfig};
use crate::matrix::Matrix;
use crate::polarization::{
    community_topic_distribution, echo_chamber_score, EchoChamberReport, EchoThresholds, Weighting,
};
use crate::profile::{auto_labels, dominant_seed, follow_ratio, read_seeds, write_profile_csv};
use crate::seed::derive_seed;
use crate::synth::{synthetic_dataset, write_dataset, DatasetFiles, SocialDatasetSpec};
use crate::text::{
    build_vocabulary, pool_by_user, read_documents, read_manifest, read_stopwords, BowCorpus,
    TokenizeMode, VocabConfig, Vocabulary,
};

/// Artifact file names inside the output directory.
pub struct Artifacts;

impl Artifacts {
    pub const NODES: &'static str = "nodes.txt";
    pub const NETWORK: &'static str = "network.tsv";
    pub const INGEST: &'static str = "ingest.json";
    pub const PARTITION_FULL: &'static str = "partition_full.json";
    pub const PARTITION: &'static str = "partition.json";
    pub const EXCLUSIONS: &'static str = "exclusion_report.json";
    pub const PROFILE: &'static str = "profile.csv";
    pub const LABELS: &'static str = "labels.json";
    pub const VOCAB: &'static str = "vocab.txt";
    pub const CORPUS: &'static str = "corpus.csv";
    pub const DOCUMENTS: &'static str = "documents.csv";
    pub const CORPUS_STATS: &'static str = "corpus.json";
    pub const PHI: &'static str = "phi.csv";
    pub const THETA: &'static str = "theta.csv";
    pub const LDA: &'static str = "lda.json";
    pub const COMMUNITY_TOPICS: &'static str = "community_topics.csv";
    pub const ECHO_REPORT: &'static str = "echo_report.json";
    pub const REPORT: &'static str = "report.txt";
    pub const GEXF: &'static str = "graph.gexf";
    pub const MANIFEST: &'static str = "manifest.json";
    pub const TIMINGS: &'static str = "timings.json";
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputPaths {
    /// Directed follow edges, `follower<TAB>followee`.
    pub edges: Option<PathBuf>,
    /// Tweet records, one JSON object per line.
    pub docs: Option<PathBuf>,
    /// Seed accounts, JSON list of `{user_id, label}`.
    pub seeds: Option<PathBuf>,
    pub stopwords: Option<PathBuf>,
    /// User ids whose communities are dropped when entirely covered.
    pub exclude: Option<PathBuf>,
    /// Optional screen names for graph export, JSON lines.
    pub users: Option<PathBuf>,
}

impl InputPaths {
    fn entries(&self) -> [(&'static str, Option<&PathBuf>); 6] {
        [
            ("edges", self.edges.as_ref()),
            ("docs", self.docs.as_ref()),
            ("seeds", self.seeds.as_ref()),
            ("stopwords", self.stopwords.as_ref()),
            ("exclude", self.exclude.as_ref()),
            ("users", self.users.as_ref()),
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectSettings {
    pub resolution: f64,
    pub min_gain: f64,
    pub max_passes: usize,
    pub min_community_size: usize,
}

impl Default for DetectSettings {
    fn default() -> Self {
        let l = LouvainConfig::default();
        DetectSettings {
            resolution: l.resolution,
            min_gain: l.min_gain,
            max_passes: l.max_passes,
            min_community_size: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileSettings {
    /// A seed labels a community when its follow ratio there is at least
    /// this multiple of the baseline ratio.
    pub lift_threshold: f64,
}

impl Default for ProfileSettings {
    fn default() -> Self {
        ProfileSettings { lift_threshold: 1.5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSettings {
    pub tokenize: TokenizeMode,
    pub min_count: u64,
    pub max_doc_fraction: f64,
}

impl Default for CorpusSettings {
    fn default() -> Self {
        let v = VocabConfig::default();
        CorpusSettings {
            tokenize: TokenizeMode::default(),
            min_count: v.min_count,
            max_doc_fraction: v.max_doc_fraction,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopicSettings {
    pub topics: usize,
    pub alpha: Option<f64>,
    pub beta: f64,
    pub iterations: usize,
    pub burn_in: usize,
    pub stride: usize,
    /// Words listed per topic in `lda.json` and the report.
    pub top_words: usize,
}

impl Default for TopicSettings {
    fn default() -> Self {
        let l = LdaConfig::default();
        TopicSettings {
            topics: l.topics,
            alpha: l.alpha,
            beta: l.beta,
            iterations: l.iterations,
            burn_in: l.burn_in,
            stride: l.stride,
            top_words: 10,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopicWeighting {
    /// Every member document counts once.
    #[default]
    User,
    /// Documents weighted by token count.
    Tokens,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrosstabSettings {
    pub weighting: TopicWeighting,
    pub dominance_min: f64,
    pub ratio_min: f64,
}

impl Default for CrosstabSettings {
    fn default() -> Self {
        let t = EchoThresholds::default();
        CrosstabSettings {
            weighting: TopicWeighting::User,
            dominance_min: t.dominance_min,
            ratio_min: t.ratio_min,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExportSettings {
    /// Nodes with fewer reciprocal neighbors are left out of the export.
    pub min_degree: usize,
}

/// Full run configuration. Stored as TOML; relative paths in a config file
/// resolve against the file's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub input: InputPaths,
    pub detect: DetectSettings,
    pub profile: ProfileSettings,
    pub corpus: CorpusSettings,
    pub lda: TopicSettings,
    pub crosstab: CrosstabSettings,
    pub export: ExportSettings,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            out: PathBuf::from("out"),
            input: InputPaths::default(),
            detect: DetectSettings::default(),
            profile: ProfileSettings::default(),
            corpus: CorpusSettings::default(),
            lda: TopicSettings::default(),
            crosstab: CrosstabSettings::default(),
            export: ExportSettings::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::from_toml_str(&fio::read_to_string(path)?).map_err(|e| e.in_file(path))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.out);
        for p in [
            &mut cfg.input.edges,
            &mut cfg.input.docs,
            &mut cfg.input.seeds,
            &mut cfg.input.stopwords,
            &mut cfg.input.exclude,
            &mut cfg.input.users,
        ]
        .into_iter()
        .flatten()
        {
            resolve(p);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(e.to_string()))
    }

    pub fn louvain(&self) -> LouvainConfig {
        LouvainConfig {
            resolution: self.detect.resolution,
            min_gain: self.detect.min_gain,
            max_passes: self.detect.max_passes,
            seed: derive_seed(self.seed, 1),
        }
    }

    pub fn lda_config(&self) -> LdaConfig {
        LdaConfig {
            topics: self.lda.topics,
            alpha: self.lda.alpha,
            beta: self.lda.beta,
            iterations: self.lda.iterations,
            burn_in: self.lda.burn_in,
            stride: self.lda.stride,
            seed: derive_seed(self.seed, 2),
        }
    }

    pub fn vocab_config(&self) -> VocabConfig {
        VocabConfig {
            min_count: self.corpus.min_count,
            max_doc_fraction: self.corpus.max_doc_fraction,
        }
    }

    pub fn thresholds(&self) -> EchoThresholds {
        EchoThresholds {
            dominance_min: self.crosstab.dominance_min,
            ratio_min: self.crosstab.ratio_min,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.louvain().validate()?;
        self.lda_config().validate()?;
        if self.detect.min_community_size == 0 {
            return Err(Error::config("min_community_size must be at least 1"));
        }
        if self.profile.lift_threshold.is_nan() || self.profile.lift_threshold <= 1.0 {
            return Err(Error::config("lift_threshold must exceed 1"));
        }
        if self.corpus.min_count == 0 {
            return Err(Error::config("min_count must be at least 1"));
        }
        if !(self.corpus.max_doc_fraction > 0.0 && self.corpus.max_doc_fraction <= 1.0) {
            return Err(Error::config("max_doc_fraction must be in (0, 1]"));
        }
        let t = self.thresholds();
        if !(t.dominance_min >= 0.0 && t.dominance_min <= 1.0 && t.ratio_min >= 1.0) {
            return Err(Error::config("dominance_min must be in [0, 1] and ratio_min at least 1"));
        }
        Ok(())
    }

    /// SHA-256 over the configuration with the output directory left out, so
    /// identical runs into different directories share a hash.
    pub fn config_hash(&self) -> String {
        let mut c = self.clone();
        c.out = PathBuf::new();
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        hex(&Sha256::digest(&bytes))
    }

    fn artifact(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Ingest,
    Detect,
    Profile,
    Corpus,
    Lda,
    Crosstab,
    Report,
    ExportGexf,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Ingest,
        Stage::Detect,
        Stage::Profile,
        Stage::Corpus,
        Stage::Lda,
        Stage::Crosstab,
        Stage::Report,
        Stage::ExportGexf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Detect => "detect",
            Stage::Profile => "profile",
            Stage::Corpus => "corpus",
            Stage::Lda => "lda",
            Stage::Crosstab => "crosstab",
            Stage::Report => "report",
            Stage::ExportGexf => "export-gexf",
        }
    }

    pub fn from_name(name: &str) -> Option<Stage> {
        Stage::ALL.into_iter().find(|s| s.name() == name)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    /// Record counts of the stage's outputs.
    pub counts: BTreeMap<String, u64>,
    pub outputs: Vec<String>,
}

impl StageRecord {
    fn new(stage: Stage) -> Self {
        StageRecord {
            stage: stage.name().to_string(),
            ..Default::default()
        }
    }

    fn count(&mut self, key: &str, n: impl TryInto<u64>) -> &mut Self {
        self.counts.insert(key.to_string(), n.try_into().unwrap_or(u64::MAX));
        self
    }

    fn output(&mut self, name: &str) -> &mut Self {
        self.outputs.push(name.to_string());
        self
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Run record. Holds no wall-clock data, so identical runs produce identical
/// manifests; stage timings go to `timings.json`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub inputs: BTreeMap<String, FileDigest>,
    pub stages: Vec<StageRecord>,
    /// Artifact file name to SHA-256.
    pub artifacts: BTreeMap<String, String>,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self> {
        serde_json::from_str(&fio::read_to_string(path)?).map_err(|e| Error::from(e).in_file(path))
    }

    pub fn stage(&self, stage: Stage) -> Option<&StageRecord> {
        self.stages.iter().find(|r| r.stage == stage.name())
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fio::write_string(path, &(text + "\n"))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&fio::read_to_string(path)?).map_err(|e| Error::from(e).in_file(path))
}

/// Renders into memory with the crate's own error type, then writes once.
fn save(path: &Path, render: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
    let mut buf = Vec::new();
    render(&mut buf)?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

fn required<'a>(path: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    path.as_deref()
        .ok_or_else(|| Error::config(format!("no {flag} input configured (--{flag})")))
}

fn load_partition(path: &Path) -> Result<Partition> {
    Partition::read_json(path).map_err(|e| e.in_file(path))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub records: u64,
    pub duplicates: u64,
    pub self_loops: u64,
    pub directed_nodes: usize,
    pub directed_edges: usize,
    pub reciprocal_edges: usize,
    /// Nodes without any reciprocal tie.
    pub isolated: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommunityLabel {
    pub community: usize,
    pub label: String,
    pub seeds: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub documents: usize,
    pub vocabulary: usize,
    pub tokens: u64,
    pub skipped_empty_records: usize,
    pub stats: crate::text::BuildStats,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedTerm {
    pub term: String,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopicWords {
    pub topic: usize,
    pub words: Vec<WeightedTerm>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LdaSummary {
    pub config: LdaConfig,
    pub alpha: f64,
    pub documents: usize,
    pub vocabulary: usize,
    pub tokens: u64,
    /// Training-set perplexity under the averaged estimates.
    pub perplexity: f64,
    pub top_words: Vec<TopicWords>,
}

fn ingest(cfg: &PipelineConfig) -> Result<StageRecord> {
    let path = required(&cfg.input.edges, "edges")?;
    let (dg, stats) = read_directed_edges(path).map_err(|e| e.in_file(path))?;
    let ug = reciprocalize(&dg);
    fio::write_id_list(&cfg.artifact(Artifacts::NODES), ug.nodes())?;
    let network = cfg.artifact(Artifacts::NETWORK);
    fio::write_with(&network, |w| ug.write_edges(w))?;
    let isolated = (0..ug.node_count()).filter(|&i| ug.degree(i) == 0).count();
    write_json(
        &cfg.artifact(Artifacts::INGEST),
        &IngestSummary {
            records: stats.records as u64,
            duplicates: stats.duplicates as u64,
            self_loops: stats.self_loops as u64,
            directed_nodes: dg.node_count(),
            directed_edges: dg.edge_count(),
            reciprocal_edges: ug.edge_count(),
            isolated,
        },
    )?;
    log::info!(
        "{} directed edges over {} users, {} reciprocal ties",
        dg.edge_count(),
        dg.node_count(),
        ug.edge_count()
    );
    let mut rec = StageRecord::new(Stage::Ingest);
    rec.count("nodes", ug.node_count())
        .count("directed_edges", dg.edge_count())
        .count("reciprocal_edges", ug.edge_count())
        .output(Artifacts::NODES)
        .output(Artifacts::NETWORK)
        .output(Artifacts::INGEST);
    Ok(rec)
}

fn detect(cfg: &PipelineConfig) -> Result<StageRecord> {
    let g = read_network(&cfg.artifact(Artifacts::NODES), &cfg.artifact(Artifacts::NETWORK))?;
    let dendrogram = louvain(&g, &cfg.louvain())?;
    let levels = dendrogram.levels.len();
    let full = dendrogram.into_partition();
    full.write_json(&cfg.artifact(Artifacts::PARTITION_FULL))?;
    let excluded: BTreeSet<_> = match &cfg.input.exclude {
        Some(p) => fio::read_id_list(p).map_err(|e| e.in_file(p))?.into_iter().collect(),
        None => BTreeSet::new(),
    };
    let (kept, report) = filter_communities(&full, cfg.detect.min_community_size, &excluded)?;
    kept.write_json(&cfg.artifact(Artifacts::PARTITION))?;
    write_json(&cfg.artifact(Artifacts::EXCLUSIONS), &report)?;
    log::info!(
        "{} communities (Q = {:.4}), {} kept",
        full.len(),
        full.modularity.unwrap_or(f64::NAN),
        kept.len()
    );
    let mut rec = StageRecord::new(Stage::Detect);
    rec.count("levels", levels)
        .count("communities_detected", full.len())
        .count("communities_kept", kept.len())
        .count("members_kept", kept.node_count())
        .count("communities_dropped", report.dropped.len())
        .output(Artifacts::PARTITION_FULL)
        .output(Artifacts::PARTITION)
        .output(Artifacts::EXCLUSIONS);
    Ok(rec)
}

fn profile(cfg: &PipelineConfig) -> Result<StageRecord> {
    let edges = required(&cfg.input.edges, "edges")?;
    let seeds_path = required(&cfg.input.seeds, "seeds")?;
    let (dg, _) = read_directed_edges(edges).map_err(|e| e.in_file(edges))?;
    let p = load_partition(&cfg.artifact(Artifacts::PARTITION))?;
    let seeds = read_seeds(seeds_path).map_err(|e| e.in_file(seeds_path))?;
    let prof = follow_ratio(&dg, &p, &seeds)?;
    let dominant = dominant_seed(&prof, cfg.profile.lift_threshold)?;
    let labels = auto_labels(&dominant);
    save(&cfg.artifact(Artifacts::PROFILE), |w| write_profile_csv(w, &prof, &labels))?;
    let records: Vec<CommunityLabel> = labels
        .iter()
        .zip(&dominant)
        .enumerate()
        .map(|(c, (label, d))| CommunityLabel {
            community: c,
            label: label.clone(),
            seeds: d.iter().map(|s| s.label.clone()).collect(),
        })
        .collect();
    write_json(&cfg.artifact(Artifacts::LABELS), &records)?;
    let mut rec = StageRecord::new(Stage::Profile);
    rec.count("communities", prof.rows.len())
        .count("seeds", seeds.len())
        .count("labelled", labels.iter().filter(|l| !l.is_empty()).count())
        .output(Artifacts::PROFILE)
        .output(Artifacts::LABELS);
    Ok(rec)
}

fn corpus(cfg: &PipelineConfig) -> Result<StageRecord> {
    let docs_path = required(&cfg.input.docs, "docs")?;
    let records = read_documents(docs_path).map_err(|e| e.in_file(docs_path))?;
    let pooled = pool_by_user(records, cfg.corpus.tokenize);
    let stopwords = match &cfg.input.stopwords {
        Some(p) => read_stopwords(p).map_err(|e| e.in_file(p))?,
        None => Default::default(),
    };
    let (vocab, bow, stats) = build_vocabulary(&pooled.docs, &stopwords, &cfg.vocab_config())?;
    vocab.write(&cfg.artifact(Artifacts::VOCAB))?;
    save(&cfg.artifact(Artifacts::CORPUS), |w| bow.write_triplets(w))?;
    save(&cfg.artifact(Artifacts::DOCUMENTS), |w| bow.write_manifest(w))?;
    let summary = CorpusSummary {
        documents: bow.len(),
        vocabulary: vocab.len(),
        tokens: bow.total_tokens(),
        skipped_empty_records: pooled.skipped_empty,
        stats,
    };
    write_json(&cfg.artifact(Artifacts::CORPUS_STATS), &summary)?;
    log::info!(
        "{} documents, {} terms, {} tokens",
        summary.documents,
        summary.vocabulary,
        summary.tokens
    );
    let mut rec = StageRecord::new(Stage::Corpus);
    rec.count("documents", bow.len())
        .count("vocabulary", vocab.len())
        .count("tokens", bow.total_tokens())
        .count("triplets", bow.docs.iter().map(|d| d.terms.len()).sum::<usize>())
        .output(Artifacts::VOCAB)
        .output(Artifacts::CORPUS)
        .output(Artifacts::DOCUMENTS)
        .output(Artifacts::CORPUS_STATS);
    Ok(rec)
}

fn load_corpus(cfg: &PipelineConfig) -> Result<(Vocabulary, BowCorpus)> {
    let vocab_path = cfg.artifact(Artifacts::VOCAB);
    let vocab = Vocabulary::read(&vocab_path).map_err(|e| e.in_file(&vocab_path))?;
    let triplets = cfg.artifact(Artifacts::CORPUS);
    let bow = BowCorpus::read(&triplets, &cfg.artifact(Artifacts::DOCUMENTS), vocab.len())
        .map_err(|e| e.in_file(&triplets))?;
    Ok((vocab, bow))
}

fn lda(cfg: &PipelineConfig) -> Result<StageRecord> {
    let (vocab, bow) = load_corpus(cfg)?;
    let lda_cfg = cfg.lda_config();
    let model = fit_lda(&bow, &lda_cfg)?;
    fio::write_with(&cfg.artifact(Artifacts::PHI), |w| model.phi.write_csv(w))?;
    fio::write_with(&cfg.artifact(Artifacts::THETA), |w| model.theta.write_csv(w))?;
    let perplexity = training_perplexity(&model, &bow)?.value;
    let top = top_words(&model, cfg.lda.top_words.min(vocab.len()))?;
    let summary = LdaSummary {
        alpha: lda_cfg.alpha(),
        config: lda_cfg,
        documents: bow.len(),
        vocabulary: vocab.len(),
        tokens: bow.total_tokens(),
        perplexity,
        top_words: top
            .into_iter()
            .enumerate()
            .map(|(k, words)| TopicWords {
                topic: k,
                words: words
                    .into_iter()
                    .map(|(v, weight)| WeightedTerm {
                        term: vocab.term(v).to_string(),
                        weight,
                    })
                    .collect(),
            })
            .collect(),
    };
    write_json(&cfg.artifact(Artifacts::LDA), &summary)?;
    log::info!("{} topics, training perplexity {perplexity:.2}", model.topics());
    let mut rec = StageRecord::new(Stage::Lda);
    rec.count("topics", model.topics())
        .count("documents", model.theta.rows())
        .count("vocabulary", model.vocab_size())
        .output(Artifacts::PHI)
        .output(Artifacts::THETA)
        .output(Artifacts::LDA);
    Ok(rec)
}

fn read_labels(cfg: &PipelineConfig) -> Result<Vec<String>> {
    let path = cfg.artifact(Artifacts::LABELS);
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut records: Vec<CommunityLabel> = read_json(&path)?;
    records.sort_by_key(|r| r.community);
    let mut labels = vec![String::new(); records.last().map_or(0, |r| r.community + 1)];
    for r in records {
        labels[r.community] = r.label;
    }
    Ok(labels)
}

fn crosstab(cfg: &PipelineConfig) -> Result<StageRecord> {
    let theta_path = cfg.artifact(Artifacts::THETA);
    let theta = Matrix::read_csv(&theta_path).map_err(|e| e.in_file(&theta_path))?;
    let docs_path = cfg.artifact(Artifacts::DOCUMENTS);
    let owners = read_manifest(&docs_path).map_err(|e| e.in_file(&docs_path))?;
    let p = load_partition(&cfg.artifact(Artifacts::PARTITION))?;
    let token_mass: Vec<u64>;
    let weighting = match cfg.crosstab.weighting {
        TopicWeighting::User => Weighting::UserMean,
        TopicWeighting::Tokens => {
            token_mass = load_corpus(cfg)?.1.docs.iter().map(|d| d.token_count()).collect();
            Weighting::TokenMass(&token_mass)
        }
    };
    let mut m = community_topic_distribution(&theta, &owners, &p, weighting)?;
    m.set_labels(&read_labels(cfg)?);
    save(&cfg.artifact(Artifacts::COMMUNITY_TOPICS), |w| m.write_csv(w))?;
    let report = echo_chamber_score(&m, &cfg.thresholds())?;
    write_json(&cfg.artifact(Artifacts::ECHO_REPORT), &report)?;
    let flagged = report.flagged().count();
    log::info!("{flagged} of {} topics flagged as echo chambers", m.topics());
    let mut rec = StageRecord::new(Stage::Crosstab);
    rec.count("communities", m.rows.len())
        .count("topics", m.topics())
        .count("flagged_topics", flagged)
        .count("unassigned_documents", m.unassigned_documents)
        .output(Artifacts::COMMUNITY_TOPICS)
        .output(Artifacts::ECHO_REPORT);
    Ok(rec)
}

/// Numeric columns right-aligned, others left-aligned, two-space gutters.
/// The first row is a header.
fn render_table(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let mut widths = vec![0; cols];
    let mut numeric = vec![true; cols];
    for (r, row) in rows.iter().enumerate() {
        for (i, cell) in row.iter().enumerate() {
            widths[i] = widths[i].max(cell.chars().count());
            if r > 0 && !cell.is_empty() && cell.parse::<f64>().is_err() {
                numeric[i] = false;
            }
        }
    }
    let mut out = String::new();
    for row in rows {
        let mut line = String::new();
        for (i, cell) in row.iter().enumerate() {
            if i > 0 {
                line.push_str("  ");
            }
            let pad = std::iter::repeat_n(' ', widths[i] - cell.chars().count());
            if numeric[i] {
                line.extend(pad);
                line.push_str(cell);
            } else {
                line.push_str(cell);
                line.extend(pad);
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

fn read_csv_rows(path: &Path) -> Result<Vec<Vec<String>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(fio::open(path)?);
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| crate::profile::csv_err(e).in_file(path))?;
        rows.push(rec.iter().map(str::to_owned).collect());
    }
    Ok(rows)
}

fn report(cfg: &PipelineConfig) -> Result<StageRecord> {
    let full: PartitionFile = read_json(&cfg.artifact(Artifacts::PARTITION_FULL))?;
    let kept = load_partition(&cfg.artifact(Artifacts::PARTITION))?;
    let echo: EchoChamberReport = read_json(&cfg.artifact(Artifacts::ECHO_REPORT))?;
    let lda_path = cfg.artifact(Artifacts::LDA);
    let words: Vec<TopicWords> = if lda_path.exists() {
        read_json::<LdaSummary>(&lda_path)?.top_words
    } else {
        Vec::new()
    };
    let topic_words = |k: usize| -> String {
        words
            .get(k)
            .map(|t| t.words.iter().take(5).map(|w| w.term.as_str()).collect::<Vec<_>>().join(" "))
            .unwrap_or_default()
    };

    let mut out = String::new();
    out.push_str("Communities\n\n");
    let q = full
        .modularity
        .map_or_else(|| "undefined".to_string(), |q| format!("{q:.4}"));
    out.push_str(&format!(
        "detected {} (modularity {q}, resolution {}), kept {} with {} members\n\n",
        full.communities.len(),
        full.resolution,
        kept.len(),
        kept.node_count()
    ));
    let profile_path = cfg.artifact(Artifacts::PROFILE);
    if profile_path.exists() {
        out.push_str("Seed follow ratios\n\n");
        out.push_str(&render_table(&read_csv_rows(&profile_path)?));
        out.push('\n');
    }

    let ct = read_csv_rows(&cfg.artifact(Artifacts::COMMUNITY_TOPICS))?;
    let topics = ct.first().map_or(0, |h| h.len().saturating_sub(3));
    out.push_str("Topic shares by community\n\n");
    let mut table = Vec::with_capacity(topics + 1);
    let mut header = vec!["topic".to_string(), "top words".to_string()];
    for row in ct.iter().skip(1) {
        header.push(if row[1].is_empty() {
            format!("c{}", row[0])
        } else {
            format!("c{} {}", row[0], row[1])
        });
    }
    table.push(header);
    for k in 0..topics {
        let mut line = vec![k.to_string(), topic_words(k)];
        line.extend(ct.iter().skip(1).map(|row| row[3 + k].clone()));
        table.push(line);
    }
    out.push_str(&render_table(&table));

    let flagged: Vec<_> = echo.flagged().collect();
    out.push_str(&format!(
        "\nEcho chambers (dominance >= {:.2}, ratio >= {:.2}): {}\n",
        echo.thresholds.dominance_min,
        echo.thresholds.ratio_min,
        flagged.len()
    ));
    for t in &flagged {
        let ratio = if t.ratio.is_finite() {
            format!("{:.2}x", t.ratio)
        } else {
            "no other community".to_string()
        };
        out.push_str(&format!(
            "  topic {} [{}] -> community {}: share {:.2}, runner-up {:.2}, {ratio}\n",
            t.topic,
            topic_words(t.topic),
            t.dominant_community,
            t.dominance,
            t.runner_up
        ));
    }
    fio::write_string(&cfg.artifact(Artifacts::REPORT), &out)?;
    let mut rec = StageRecord::new(Stage::Report);
    rec.count("topics", topics)
        .count("flagged_topics", flagged.len())
        .output(Artifacts::REPORT);
    Ok(rec)
}

fn export(cfg: &PipelineConfig) -> Result<StageRecord> {
    let g = read_network(&cfg.artifact(Artifacts::NODES), &cfg.artifact(Artifacts::NETWORK))?;
    let p = load_partition(&cfg.artifact(Artifacts::PARTITION))?;
    let names = match &cfg.input.users {
        Some(path) => Some(NodeMetadata::read(path).map_err(|e| e.in_file(path))?),
        None => None,
    };
    let doc = export_gexf(&g, &p, cfg.export.min_degree, names.as_ref());
    let summary = validate_gexf(&doc)?;
    fio::write_string(&cfg.artifact(Artifacts::GEXF), &doc)?;
    let mut rec = StageRecord::new(Stage::ExportGexf);
    rec.count("nodes", summary.nodes.len())
        .count("edges", summary.edges.len())
        .output(Artifacts::GEXF);
    Ok(rec)
}

fn execute(cfg: &PipelineConfig, stage: Stage) -> Result<StageRecord> {
    match stage {
        Stage::Ingest => ingest(cfg),
        Stage::Detect => detect(cfg),
        Stage::Profile => profile(cfg),
        Stage::Corpus => corpus(cfg),
        Stage::Lda => lda(cfg),
        Stage::Crosstab => crosstab(cfg),
        Stage::Report => report(cfg),
        Stage::ExportGexf => export(cfg),
    }
}

fn update_manifest(cfg: &PipelineConfig, record: StageRecord, seconds: f64) -> Result<Manifest> {
    let path = cfg.artifact(Artifacts::MANIFEST);
    let hash = cfg.config_hash();
    let mut manifest = match Manifest::read(&path) {
        Ok(m) if m.config_hash == hash => m,
        _ => Manifest::default(),
    };
    manifest.version = env!("CARGO_PKG_VERSION").to_string();
    manifest.config_hash = hash;
    manifest.seed = cfg.seed;
    let stage_name = record.stage.clone();
    manifest.stages.retain(|r| r.stage != record.stage);
    manifest.stages.push(record);
    manifest.stages.sort_by_key(|r| Stage::from_name(&r.stage));
    manifest.inputs.clear();
    for (name, p) in cfg.input.entries() {
        if let Some(p) = p.filter(|p| p.exists()) {
            manifest.inputs.insert(
                name.to_string(),
                FileDigest {
                    path: p.display().to_string(),
                    sha256: sha256_file(p)?,
                },
            );
        }
    }
    manifest.artifacts.clear();
    for name in manifest.stages.iter().flat_map(|r| &r.outputs) {
        let p = cfg.artifact(name);
        if p.exists() {
            manifest.artifacts.insert(name.clone(), sha256_file(&p)?);
        }
    }
    write_json(&path, &manifest)?;

    let timings_path = cfg.artifact(Artifacts::TIMINGS);
    let mut timings: BTreeMap<String, f64> = if timings_path.exists() {
        read_json(&timings_path).unwrap_or_default()
    } else {
        BTreeMap::new()
    };
    timings.insert(stage_name, seconds);
    timings.retain(|k, _| manifest.stages.iter().any(|r| &r.stage == k));
    write_json(&timings_path, &timings)?;
    Ok(manifest)
}

/// Runs one stage, recording it in the manifest. Failures carry the stage
/// name; artifacts written before the failure are left in place.
pub fn run_stage(cfg: &PipelineConfig, stage: Stage) -> Result<Manifest> {
    let wrap = |e: Error| Error::Stage {
        stage: stage.name(),
        source: Box::new(e),
    };
    cfg.validate().map_err(wrap)?;
    std::fs::create_dir_all(&cfg.out).map_err(|e| wrap(Error::io(&cfg.out, e)))?;
    let start = Instant::now();
    log::info!("stage {}", stage.name());
    let record = execute(cfg, stage).map_err(wrap)?;
    let seconds = start.elapsed().as_secs_f64();
    update_manifest(cfg, record, seconds).map_err(wrap)
}

/// All stages in order.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<Manifest> {
    let mut manifest = Manifest::default();
    for stage in Stage::ALL {
        manifest = run_stage(cfg, stage)?;
    }
    Ok(manifest)
}

pub const SYNTH_CONFIG: &str = "echoscope.toml";

/// Writes the synthetic dataset into `dir` with a config file that runs the
/// whole pipeline on it into `dir/out`.
pub fn write_synthetic(spec: &SocialDatasetSpec, dir: &Path) -> Result<PipelineConfig> {
    let ds = synthetic_dataset(spec)?;
    write_dataset(&ds, dir)?;
    let cfg = PipelineConfig {
        seed: spec.seed,
        out: PathBuf::from("out"),
        input: InputPaths {
            edges: Some(DatasetFiles::EDGES.into()),
            docs: Some(DatasetFiles::DOCS.into()),
            seeds: Some(DatasetFiles::SEEDS.into()),
            stopwords: Some(DatasetFiles::STOPWORDS.into()),
            exclude: Some(DatasetFiles::EXCLUDE.into()),
            users: Some(DatasetFiles::USERS.into()),
        },
        lda: TopicSettings {
            topics: spec.block_sizes.len() + spec.shared_topics,
            iterations: 300,
            burn_in: 100,
            ..TopicSettings::default()
        },
        ..PipelineConfig::default()
    };
    fio::write_string(&dir.join(SYNTH_CONFIG), &cfg.to_toml()?)?;
    Ok(cfg)
}
