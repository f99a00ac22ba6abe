//! Per-user pooled bag-of-words corpus.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::UserId;
use crate::io as fio;
use crate::profile::csv_err;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenizeMode {
    /// Split on Unicode whitespace, lowercase ASCII, drop URLs and
    /// @-mentions.
    #[default]
    Whitespace,
    /// Split on whitespace only; tokens are kept verbatim. For text that a
    /// morphological analyzer already segmented.
    Passthrough,
}

pub fn tokenize(input: &[u8], mode: TokenizeMode) -> Result<Vec<String>> {
    let text = std::str::from_utf8(input).map_err(|e| Error::InvalidUtf8(e.valid_up_to()))?;
    Ok(tokenize_str(text, mode))
}

pub fn tokenize_str(text: &str, mode: TokenizeMode) -> Vec<String> {
    match mode {
        TokenizeMode::Passthrough => text.split_whitespace().map(str::to_owned).collect(),
        TokenizeMode::Whitespace => text
            .split_whitespace()
            .map(str::to_ascii_lowercase)
            .filter(|t| !(t.starts_with("http://") || t.starts_with("https://") || t.starts_with('@')))
            .collect(),
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RecordContent {
    Tokens { tokens: Vec<String> },
    Text { text: String },
}

/// One tweet.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawDocumentRecord {
    pub user_id: UserId,
    #[serde(flatten)]
    pub content: RecordContent,
}

impl RawDocumentRecord {
    /// Pre-tokenized content passes through (empty strings dropped); raw
    /// text goes through `mode`.
    pub fn tokens(&self, mode: TokenizeMode) -> Vec<String> {
        match &self.content {
            RecordContent::Tokens { tokens } => {
                tokens.iter().filter(|t| !t.is_empty()).cloned().collect()
            }
            RecordContent::Text { text } => tokenize_str(text, mode),
        }
    }
}

/// Parses JSON-lines records.
pub fn load_documents<R: BufRead>(reader: R) -> Result<Vec<RawDocumentRecord>> {
    let mut out = Vec::new();
    for (n, line) in reader.split(b'\n').enumerate() {
        let line = line.map_err(|e| Error::parse(n + 1, e.to_string()))?;
        let line = std::str::from_utf8(&line)
            .map_err(|e| Error::parse(n + 1, format!("invalid UTF-8 at byte {}", e.valid_up_to())))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(line).map_err(|e| Error::parse(n + 1, e.to_string()))?);
    }
    Ok(out)
}

pub fn read_documents(path: &Path) -> Result<Vec<RawDocumentRecord>> {
    load_documents(fio::open(path)?)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PooledDocument {
    pub user: UserId,
    pub tokens: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Pooled {
    /// One document per user, ordered by user id.
    pub docs: Vec<PooledDocument>,
    pub skipped_empty: usize,
}

/// Concatenates each user's records in arrival order.
pub fn pool_by_user(
    records: impl IntoIterator<Item = RawDocumentRecord>,
    mode: TokenizeMode,
) -> Pooled {
    let mut by_user: BTreeMap<UserId, Vec<String>> = BTreeMap::new();
    let mut skipped_empty = 0;
    for rec in records {
        let tokens = rec.tokens(mode);
        if tokens.is_empty() {
            skipped_empty += 1;
            continue;
        }
        by_user.entry(rec.user_id).or_default().extend(tokens);
    }
    if skipped_empty > 0 {
        log::warn!("skipped {skipped_empty} records with no tokens");
    }
    Pooled {
        docs: by_user
            .into_iter()
            .map(|(user, tokens)| PooledDocument { user, tokens })
            .collect(),
        skipped_empty,
    }
}

/// One stopword per line, matched exactly against tokens.
pub fn read_stopwords(path: &Path) -> Result<HashSet<String>> {
    Ok(fio::read_to_string(path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_owned)
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VocabConfig {
    /// Minimum corpus frequency for a term to survive.
    pub min_count: u64,
    /// Terms in more than this fraction of documents are dropped.
    pub max_doc_fraction: f64,
}

impl Default for VocabConfig {
    fn default() -> Self {
        VocabConfig {
            min_count: 5,
            max_doc_fraction: 0.5,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Vocabulary {
    terms: Vec<String>,
    index: HashMap<String, u32>,
    frequency: Vec<u64>,
}

impl Vocabulary {
    pub fn from_terms(terms: Vec<String>, frequency: Vec<u64>) -> Result<Self> {
        if terms.len() != frequency.len() {
            return Err(Error::DimensionMismatch("terms vs frequencies".into()));
        }
        let mut index = HashMap::with_capacity(terms.len());
        for (i, t) in terms.iter().enumerate() {
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(Error::config(format!("duplicate term {t:?}")));
            }
        }
        Ok(Vocabulary {
            terms,
            index,
            frequency,
        })
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn term(&self, i: usize) -> &str {
        &self.terms[i]
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.index.get(term).map(|&i| i as usize)
    }

    /// Corpus frequency of term `i`.
    pub fn frequency(&self, i: usize) -> u64 {
        self.frequency[i]
    }

    /// One term per line; the line number is the index.
    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(t) = self.terms.iter().find(|t| t.contains(['\n', '\r'])) {
            return Err(Error::config(format!("term {t:?} contains a line break")));
        }
        fio::write_with(path, |w| {
            for t in &self.terms {
                writeln!(w, "{t}")?;
            }
            Ok(())
        })
    }

    /// Frequencies are not persisted and read back as zero.
    pub fn read(path: &Path) -> Result<Self> {
        let terms: Vec<String> = fio::read_to_string(path)?
            .lines()
            .map(str::to_owned)
            .collect();
        let n = terms.len();
        Self::from_terms(terms, vec![0; n])
    }
}

/// A document as sorted `(term index, count)` pairs, counts >= 1.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BowDocument {
    pub owner: UserId,
    pub terms: Vec<(u32, u32)>,
}

impl BowDocument {
    pub fn token_count(&self) -> u64 {
        self.terms.iter().map(|&(_, c)| c as u64).sum()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BowCorpus {
    pub docs: Vec<BowDocument>,
    pub vocab_size: usize,
}

impl BowCorpus {
    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn total_tokens(&self) -> u64 {
        self.docs.iter().map(BowDocument::token_count).sum()
    }

    pub fn owners(&self) -> Vec<UserId> {
        self.docs.iter().map(|d| d.owner).collect()
    }

    /// `doc_id,term_index,count` triplets with a header row.
    pub fn write_triplets<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["doc_id", "term_index", "count"]).map_err(csv_err)?;
        for (d, doc) in self.docs.iter().enumerate() {
            for &(t, c) in &doc.terms {
                out.serialize((d, t, c)).map_err(csv_err)?;
            }
        }
        out.flush().map_err(|e| Error::config(e.to_string()))
    }

    /// `doc_id,user_id` manifest with a header row.
    pub fn write_manifest<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["doc_id", "user_id"]).map_err(csv_err)?;
        for (d, doc) in self.docs.iter().enumerate() {
            out.serialize((d, doc.owner.0)).map_err(csv_err)?;
        }
        out.flush().map_err(|e| Error::config(e.to_string()))
    }

    pub fn read(triplets: &Path, manifest: &Path, vocab_size: usize) -> Result<Self> {
        let owners = read_manifest(manifest)?;
        let mut docs: Vec<BowDocument> = owners
            .into_iter()
            .map(|owner| BowDocument {
                owner,
                terms: Vec::new(),
            })
            .collect();
        let mut rdr = csv::Reader::from_reader(fio::open(triplets)?);
        for (n, rec) in rdr.deserialize::<(usize, u32, u32)>().enumerate() {
            let (d, t, c) = rec.map_err(csv_err)?;
            let line = n + 2;
            if d >= docs.len() {
                return Err(Error::parse(line, format!("doc_id {d} not in manifest")));
            }
            if (t as usize) >= vocab_size || c == 0 {
                return Err(Error::parse(line, format!("bad triplet ({d},{t},{c})")));
            }
            docs[d].terms.push((t, c));
        }
        for doc in docs.iter_mut() {
            doc.terms.sort_unstable();
        }
        Ok(BowCorpus { docs, vocab_size })
    }
}

/// Reads a `doc_id,user_id` manifest; doc ids must run 0.. in order.
pub fn read_manifest(path: &Path) -> Result<Vec<UserId>> {
    let mut rdr = csv::Reader::from_reader(fio::open(path)?);
    let mut owners = Vec::new();
    for (n, rec) in rdr.deserialize::<(usize, u64)>().enumerate() {
        let (d, u) = rec.map_err(csv_err)?;
        if d != owners.len() {
            return Err(Error::parse(n + 2, format!("expected doc_id {}, got {d}", owners.len())));
        }
        owners.push(UserId(u));
    }
    Ok(owners)
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildStats {
    pub input_documents: usize,
    pub input_tokens: u64,
    pub stopword_tokens: u64,
    pub pruned_terms: usize,
    /// Documents left with no tokens after filtering; not in the corpus.
    pub dropped_documents: usize,
}

/// Removes stopwords and rare or overly common terms, indexes survivors in
/// first-appearance order and converts each document to sparse counts.
pub fn build_vocabulary(
    docs: &[PooledDocument],
    stopwords: &HashSet<String>,
    cfg: &VocabConfig,
) -> Result<(Vocabulary, BowCorpus, BuildStats)> {
    if cfg.min_count == 0 {
        return Err(Error::config("min_count must be at least 1"));
    }
    if !(cfg.max_doc_fraction > 0.0 && cfg.max_doc_fraction <= 1.0) {
        return Err(Error::config("max_doc_fraction must be in (0, 1]"));
    }
    let mut stats = BuildStats {
        input_documents: docs.len(),
        ..Default::default()
    };

    struct Entry {
        order: usize,
        cf: u64,
        df: usize,
        last_doc: usize,
    }
    let mut counts: HashMap<&str, Entry> = HashMap::new();
    for (d, doc) in docs.iter().enumerate() {
        for tok in &doc.tokens {
            stats.input_tokens += 1;
            if stopwords.contains(tok) {
                stats.stopword_tokens += 1;
                continue;
            }
            let next = counts.len();
            let e = counts.entry(tok.as_str()).or_insert(Entry {
                order: next,
                cf: 0,
                df: 0,
                last_doc: usize::MAX,
            });
            e.cf += 1;
            if e.last_doc != d {
                e.last_doc = d;
                e.df += 1;
            }
        }
    }

    let df_cap = cfg.max_doc_fraction * docs.len() as f64;
    let mut survivors: Vec<(&str, &Entry)> = counts
        .iter()
        .filter(|(_, e)| e.cf >= cfg.min_count && e.df as f64 <= df_cap)
        .map(|(t, e)| (*t, e))
        .collect();
    stats.pruned_terms = counts.len() - survivors.len();
    if survivors.is_empty() {
        return Err(Error::EmptyVocabulary);
    }
    survivors.sort_unstable_by_key(|(_, e)| e.order);
    let terms: Vec<String> = survivors.iter().map(|(t, _)| t.to_string()).collect();
    let freq: Vec<u64> = survivors.iter().map(|(_, e)| e.cf).collect();
    let vocab = Vocabulary::from_terms(terms, freq)?;

    let mut bow = Vec::with_capacity(docs.len());
    let mut acc: BTreeMap<u32, u32> = BTreeMap::new();
    for doc in docs {
        for tok in &doc.tokens {
            if let Some(i) = vocab.index.get(tok.as_str()) {
                *acc.entry(*i).or_default() += 1;
            }
        }
        if acc.is_empty() {
            stats.dropped_documents += 1;
            continue;
        }
        bow.push(BowDocument {
            owner: doc.user,
            terms: std::mem::take(&mut acc).into_iter().collect(),
        });
    }
    if stats.dropped_documents > 0 {
        log::warn!(
            "{} documents had no surviving terms and were dropped",
            stats.dropped_documents
        );
    }
    let corpus = BowCorpus {
        docs: bow,
        vocab_size: vocab.len(),
    };
    Ok((vocab, corpus, stats))
}
