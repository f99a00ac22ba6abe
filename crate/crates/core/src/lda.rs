//! Latent Dirichlet allocation by collapsed Gibbs sampling.
//!
//! Topic-word (`phi`) and document-topic (`theta`) estimates are averaged
//! over count-state snapshots taken every `stride` sweeps after burn-in.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed::{derive_seed, rng};
use crate::text::{BowCorpus, BowDocument};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LdaConfig {
    pub topics: usize,
    /// Symmetric document-topic prior; `None` means `50 / topics`.
    pub alpha: Option<f64>,
    /// Symmetric topic-word prior.
    pub beta: f64,
    pub iterations: usize,
    pub burn_in: usize,
    /// Sweeps between averaged snapshots after burn-in.
    pub stride: usize,
    pub seed: u64,
}

impl Default for LdaConfig {
    fn default() -> Self {
        LdaConfig {
            topics: 50,
            alpha: None,
            beta: 0.01,
            iterations: 1000,
            burn_in: 200,
            stride: 10,
            seed: 0,
        }
    }
}

impl LdaConfig {
    pub fn alpha(&self) -> f64 {
        self.alpha.unwrap_or(50.0 / self.topics as f64)
    }

    pub fn validate(&self) -> Result<()> {
        if self.topics == 0 {
            return Err(Error::config("topic count must be at least 1"));
        }
        let alpha = self.alpha();
        if !(alpha > 0.0 && alpha.is_finite()) || !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::config("alpha and beta must be positive"));
        }
        if self.burn_in >= self.iterations {
            return Err(Error::config("burn-in must be smaller than iterations"));
        }
        if self.stride == 0 {
            return Err(Error::config("stride must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TopicModel {
    /// `topics x vocab`, rows sum to 1.
    pub phi: Matrix,
    /// `documents x topics`, rows sum to 1.
    pub theta: Matrix,
    pub config: LdaConfig,
    /// Final topic of every token, documents in order and each document's
    /// tokens expanded in term order.
    pub assignments: Vec<u32>,
}

impl TopicModel {
    pub fn topics(&self) -> usize {
        self.phi.rows()
    }

    pub fn vocab_size(&self) -> usize {
        self.phi.cols()
    }

    pub fn alpha(&self) -> f64 {
        self.config.alpha()
    }
}

/// A single Gibbs chain with its count tables.
pub struct LdaSampler<'a> {
    corpus: &'a BowCorpus,
    k: usize,
    v: usize,
    alpha: f64,
    beta: f64,
    config: LdaConfig,
    words: Vec<u32>,
    doc_starts: Vec<usize>,
    z: Vec<u32>,
    /// `docs x topics`
    ndk: Vec<u32>,
    /// `vocab x topics`
    nwk: Vec<u32>,
    nk: Vec<u64>,
    rng: ChaCha8Rng,
    probs: Vec<f64>,
    iteration: usize,
    phi_sum: Vec<f64>,
    theta_sum: Vec<f64>,
    snapshots: usize,
}

impl<'a> LdaSampler<'a> {
    pub fn new(corpus: &'a BowCorpus, config: &LdaConfig) -> Result<Self> {
        config.validate()?;
        if corpus.is_empty() || corpus.vocab_size == 0 {
            return Err(Error::EmptyCorpus);
        }
        if corpus.docs.iter().any(|d| d.terms.is_empty()) {
            return Err(Error::EmptyDocument);
        }
        let total = corpus.total_tokens();
        if config.topics as u64 > total {
            return Err(Error::OverParameterized {
                topics: config.topics,
                tokens: total,
            });
        }
        let (k, v, d) = (config.topics, corpus.vocab_size, corpus.len());
        let mut words = Vec::with_capacity(total as usize);
        let mut doc_starts = Vec::with_capacity(d + 1);
        for doc in &corpus.docs {
            doc_starts.push(words.len());
            for &(t, c) in &doc.terms {
                if t as usize >= v {
                    return Err(Error::DimensionMismatch(format!(
                        "term index {t} outside vocabulary of {v}"
                    )));
                }
                words.extend(std::iter::repeat_n(t, c as usize));
            }
        }
        doc_starts.push(words.len());

        let mut rng = rng(config.seed);
        let mut z = Vec::with_capacity(words.len());
        let mut ndk = vec![0u32; d * k];
        let mut nwk = vec![0u32; v * k];
        let mut nk = vec![0u64; k];
        for doc in 0..d {
            for i in doc_starts[doc]..doc_starts[doc + 1] {
                let t = rng.random_range(0..k);
                z.push(t as u32);
                ndk[doc * k + t] += 1;
                nwk[words[i] as usize * k + t] += 1;
                nk[t] += 1;
            }
        }
        Ok(LdaSampler {
            corpus,
            k,
            v,
            alpha: config.alpha(),
            beta: config.beta,
            config: config.clone(),
            words,
            doc_starts,
            z,
            ndk,
            nwk,
            nk,
            rng,
            probs: vec![0.0; k],
            iteration: 0,
            phi_sum: vec![0.0; k * v],
            theta_sum: vec![0.0; d * k],
            snapshots: 0,
        })
    }

    /// Completed sweeps.
    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// Resamples every token's topic once.
    pub fn sweep(&mut self) {
        let k = self.k;
        let vbeta = self.v as f64 * self.beta;
        for doc in 0..self.doc_starts.len() - 1 {
            let nd = &mut self.ndk[doc * k..(doc + 1) * k];
            for i in self.doc_starts[doc]..self.doc_starts[doc + 1] {
                let w = self.words[i] as usize;
                let old = self.z[i] as usize;
                let nw = &mut self.nwk[w * k..(w + 1) * k];
                nd[old] -= 1;
                nw[old] -= 1;
                self.nk[old] -= 1;

                let mut total = 0.0;
                for t in 0..k {
                    total += (nd[t] as f64 + self.alpha) * (nw[t] as f64 + self.beta)
                        / (self.nk[t] as f64 + vbeta);
                    self.probs[t] = total;
                }
                let u = self.rng.random::<f64>() * total;
                let new = self.probs.iter().position(|&c| u < c).unwrap_or(k - 1);

                self.z[i] = new as u32;
                nd[new] += 1;
                nw[new] += 1;
                self.nk[new] += 1;
            }
        }
        self.iteration += 1;
        debug_assert!(self.counts_consistent());
    }

    /// Every count table sums to the corpus token total.
    pub fn counts_consistent(&self) -> bool {
        let n = self.words.len() as u64;
        self.nk.iter().sum::<u64>() == n
            && self.ndk.iter().map(|&c| c as u64).sum::<u64>() == n
            && self.nwk.iter().map(|&c| c as u64).sum::<u64>() == n
    }

    pub fn assignments(&self) -> &[u32] {
        &self.z
    }

    /// `(n_kw + beta) / (n_k + V beta)` from the current state.
    pub fn phi_estimate(&self) -> Matrix {
        let (k, v) = (self.k, self.v);
        let mut phi = Matrix::zeros(k, v);
        let vbeta = v as f64 * self.beta;
        for t in 0..k {
            let denom = self.nk[t] as f64 + vbeta;
            let row = phi.row_mut(t);
            for (w, x) in row.iter_mut().enumerate() {
                *x = (self.nwk[w * k + t] as f64 + self.beta) / denom;
            }
        }
        phi
    }

    /// `(n_dk + alpha) / (n_d + K alpha)` from the current state.
    pub fn theta_estimate(&self) -> Matrix {
        let k = self.k;
        let d = self.doc_starts.len() - 1;
        let mut theta = Matrix::zeros(d, k);
        let kalpha = k as f64 * self.alpha;
        for doc in 0..d {
            let nd = (self.doc_starts[doc + 1] - self.doc_starts[doc]) as f64;
            let row = theta.row_mut(doc);
            for (t, x) in row.iter_mut().enumerate() {
                *x = (self.ndk[doc * k + t] as f64 + self.alpha) / (nd + kalpha);
            }
        }
        theta
    }

    fn snapshot(&mut self) {
        let phi = self.phi_estimate();
        let theta = self.theta_estimate();
        for (acc, x) in self.phi_sum.iter_mut().zip(phi.iter_rows().flatten()) {
            *acc += x;
        }
        for (acc, x) in self.theta_sum.iter_mut().zip(theta.iter_rows().flatten()) {
            *acc += x;
        }
        self.snapshots += 1;
    }

    /// Model from the current state alone, without averaging.
    pub fn current_model(&self) -> TopicModel {
        TopicModel {
            phi: self.phi_estimate(),
            theta: self.theta_estimate(),
            config: self.config.clone(),
            assignments: self.z.clone(),
        }
    }

    /// Runs the remaining sweeps, snapshotting after burn-in, and returns
    /// the averaged model.
    pub fn run(mut self) -> TopicModel {
        let cfg = self.config.clone();
        while self.iteration < cfg.iterations {
            self.sweep();
            let t = self.iteration;
            if t > cfg.burn_in && (t - cfg.burn_in).is_multiple_of(cfg.stride) {
                self.snapshot();
            }
        }
        if self.snapshots == 0 {
            self.snapshot();
        }
        let s = self.snapshots as f64;
        let mut phi = Matrix::zeros(self.k, self.v);
        for (x, acc) in phi.data_mut().iter_mut().zip(&self.phi_sum) {
            *x = acc / s;
        }
        let mut theta = Matrix::zeros(self.corpus.len(), self.k);
        for (x, acc) in theta.data_mut().iter_mut().zip(&self.theta_sum) {
            *x = acc / s;
        }
        TopicModel {
            phi,
            theta,
            config: cfg,
            assignments: self.z,
        }
    }
}

pub fn fit_lda(corpus: &BowCorpus, cfg: &LdaConfig) -> Result<TopicModel> {
    Ok(LdaSampler::new(corpus, cfg)?.run())
}

/// The `n` most probable terms of each topic as `(term index, probability)`,
/// ties broken by lower index.
pub fn top_words(model: &TopicModel, n: usize) -> Result<Vec<Vec<(usize, f64)>>> {
    let v = model.vocab_size();
    if n == 0 || n > v {
        return Err(Error::config(format!("top-word count must be in 1..={v}")));
    }
    Ok(model
        .phi
        .iter_rows()
        .map(|row| {
            let mut idx: Vec<usize> = (0..v).collect();
            idx.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
            idx.truncate(n);
            idx.into_iter().map(|i| (i, row[i])).collect()
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FoldInConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub seed: u64,
}

impl Default for FoldInConfig {
    fn default() -> Self {
        FoldInConfig {
            iterations: 50,
            burn_in: 10,
            seed: 0,
        }
    }
}

/// Topic proportions of an unseen document by Gibbs sampling its topic
/// assignments with `phi` held fixed.
pub fn infer_theta(model: &TopicModel, doc: &[(u32, u32)], cfg: &FoldInConfig) -> Result<Vec<f64>> {
    if cfg.burn_in >= cfg.iterations {
        return Err(Error::config("burn-in must be smaller than iterations"));
    }
    let (k, v) = (model.topics(), model.vocab_size());
    let mut words = Vec::new();
    for &(t, c) in doc {
        if t as usize >= v {
            return Err(Error::DimensionMismatch(format!(
                "term index {t} outside vocabulary of {v}"
            )));
        }
        words.extend(std::iter::repeat_n(t as usize, c as usize));
    }
    if words.is_empty() {
        return Err(Error::EmptyDocument);
    }
    let alpha = model.alpha();
    let mut rng = rng(cfg.seed);
    let mut nd = vec![0u32; k];
    let mut z: Vec<usize> = words
        .iter()
        .map(|_| {
            let t = rng.random_range(0..k);
            nd[t] += 1;
            t
        })
        .collect();
    let mut probs = vec![0.0; k];
    let mut sum = vec![0.0; k];
    let norm = words.len() as f64 + k as f64 * alpha;
    for it in 1..=cfg.iterations {
        for (i, &w) in words.iter().enumerate() {
            nd[z[i]] -= 1;
            let mut total = 0.0;
            for t in 0..k {
                total += model.phi.get(t, w) * (nd[t] as f64 + alpha);
                probs[t] = total;
            }
            let u = rng.random::<f64>() * total;
            let new = probs.iter().position(|&c| u < c).unwrap_or(k - 1);
            z[i] = new;
            nd[new] += 1;
        }
        if it > cfg.burn_in {
            for t in 0..k {
                sum[t] += (nd[t] as f64 + alpha) / norm;
            }
        }
    }
    let samples = (cfg.iterations - cfg.burn_in) as f64;
    Ok(sum.into_iter().map(|x| x / samples).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Perplexity {
    pub value: f64,
    pub tokens: u64,
    /// Tokens whose term is outside the model vocabulary.
    pub skipped_tokens: u64,
}

/// `exp(-sum log p(w) / N)` with per-document fold-in proportions. Document
/// `d` folds in with a seed derived from `(cfg.seed, d)`.
pub fn held_out_perplexity(
    model: &TopicModel,
    held_out: &BowCorpus,
    cfg: &FoldInConfig,
) -> Result<Perplexity> {
    let v = model.vocab_size();
    let per_doc: Vec<Result<(f64, u64, u64)>> = held_out
        .docs
        .par_iter()
        .enumerate()
        .map(|(d, doc)| doc_log_likelihood(model, doc, v, cfg, d))
        .collect();
    let (mut log_lik, mut tokens, mut skipped) = (0.0, 0u64, 0u64);
    for r in per_doc {
        let (l, n, s) = r?;
        log_lik += l;
        tokens += n;
        skipped += s;
    }
    if skipped > 0 {
        log::warn!("skipped {skipped} held-out tokens outside the vocabulary");
    }
    if tokens == 0 {
        return Err(Error::EmptyCorpus);
    }
    Ok(Perplexity {
        value: (-log_lik / tokens as f64).exp(),
        tokens,
        skipped_tokens: skipped,
    })
}

/// Perplexity of the training corpus under the fitted `theta` and `phi`,
/// with no fold-in. Documents must be in model order.
pub fn training_perplexity(model: &TopicModel, corpus: &BowCorpus) -> Result<Perplexity> {
    if corpus.len() != model.theta.rows() {
        return Err(Error::DimensionMismatch(format!(
            "{} documents for {} theta rows",
            corpus.len(),
            model.theta.rows()
        )));
    }
    let v = model.vocab_size();
    let (mut log_lik, mut tokens) = (0.0, 0u64);
    for (d, doc) in corpus.docs.iter().enumerate() {
        let theta = model.theta.row(d);
        for &(t, c) in &doc.terms {
            if t as usize >= v {
                return Err(Error::DimensionMismatch(format!("term {t} outside vocabulary of {v}")));
            }
            let p: f64 = theta
                .iter()
                .enumerate()
                .map(|(k, th)| th * model.phi.get(k, t as usize))
                .sum();
            log_lik += c as f64 * p.ln();
            tokens += c as u64;
        }
    }
    if tokens == 0 {
        return Err(Error::EmptyCorpus);
    }
    Ok(Perplexity {
        value: (-log_lik / tokens as f64).exp(),
        tokens,
        skipped_tokens: 0,
    })
}

fn doc_log_likelihood(
    model: &TopicModel,
    doc: &BowDocument,
    v: usize,
    cfg: &FoldInConfig,
    d: usize,
) -> Result<(f64, u64, u64)> {
    let (known, unknown): (Vec<_>, Vec<_>) =
        doc.terms.iter().partition(|&&(t, _)| (t as usize) < v);
    let skipped = unknown.iter().map(|&(_, c)| c as u64).sum();
    if known.is_empty() {
        return Ok((0.0, 0, skipped));
    }
    let fold = FoldInConfig {
        seed: derive_seed(cfg.seed, d as u64),
        ..cfg.clone()
    };
    let theta = infer_theta(model, &known, &fold)?;
    let mut ll = 0.0;
    let mut n = 0;
    for &(t, c) in &known {
        let p: f64 = theta
            .iter()
            .enumerate()
            .map(|(k, th)| th * model.phi.get(k, t as usize))
            .sum();
        ll += c as f64 * p.ln();
        n += c as u64;
    }
    Ok((ll, n, skipped))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub topics: usize,
    pub seed: u64,
    pub perplexity: f64,
    /// Term indices per topic, most probable first.
    pub top_words: Vec<Vec<usize>>,
}

/// Fits one model per topic count, each with a seed derived from the base
/// seed and the count. Chains run in parallel; output follows `topic_counts`.
pub fn topic_sweep(
    corpus: &BowCorpus,
    topic_counts: &[usize],
    base: &LdaConfig,
    top_n: usize,
) -> Result<Vec<SweepSummary>> {
    topic_counts
        .par_iter()
        .map(|&k| {
            let cfg = LdaConfig {
                topics: k,
                seed: derive_seed(base.seed, k as u64),
                ..base.clone()
            };
            let model = fit_lda(corpus, &cfg)?;
            let fold = FoldInConfig {
                seed: cfg.seed,
                ..Default::default()
            };
            let perplexity = held_out_perplexity(&model, corpus, &fold)?.value;
            let top = top_words(&model, top_n.min(model.vocab_size()))?
                .into_iter()
                .map(|ws| ws.into_iter().map(|(i, _)| i).collect())
                .collect();
            Ok(SweepSummary {
                topics: k,
                seed: cfg.seed,
                perplexity,
                top_words: top,
            })
        })
        .collect()
}
