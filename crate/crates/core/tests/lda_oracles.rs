mod common;

use echoscope::graph::UserId;
use echoscope::lda::{
    fit_lda, held_out_perplexity, infer_theta, top_words, topic_sweep, training_perplexity, FoldInConfig,
    LdaConfig, LdaSampler, TopicModel,
};
use echoscope::synth::{match_topics, synthetic_lda_corpus, total_variation, SyntheticCorpusSpec};
use echoscope::text::{BowCorpus, BowDocument};
use echoscope::Matrix;
use rand::Rng;

fn corpus(docs: Vec<Vec<(u32, u32)>>, vocab: usize) -> BowCorpus {
    BowCorpus {
        docs: docs
            .into_iter()
            .enumerate()
            .map(|(d, terms)| BowDocument {
                owner: UserId(d as u64),
                terms,
            })
            .collect(),
        vocab_size: vocab,
    }
}

fn short(topics: usize, seed: u64) -> LdaConfig {
    LdaConfig {
        topics,
        iterations: 200,
        burn_in: 100,
        stride: 5,
        seed,
        ..LdaConfig::default()
    }
}

fn rows_sum_to_one(m: &Matrix, tol: f64) -> bool {
    common::row_sums_ok(m.iter_rows().map(<[f64]>::to_vec), tol)
}

fn recovery_spec(seed: u64) -> SyntheticCorpusSpec {
    SyntheticCorpusSpec {
        topics: 3,
        vocab: 30,
        documents: 200,
        tokens_per_doc: 100,
        alpha: 0.1,
        beta: 0.01,
        separable: true,
        seed,
    }
}

#[test]
fn single_topic_closed_form() {
    let mut rng = common::rng(3);
    let v = 25;
    let docs: Vec<Vec<(u32, u32)>> = (0..40)
        .map(|_| {
            let mut terms: Vec<(u32, u32)> = Vec::new();
            for t in 0..v as u32 {
                if rng.random_bool(0.3) {
                    terms.push((t, rng.random_range(1..6)));
                }
            }
            if terms.is_empty() {
                terms.push((0, 1));
            }
            terms
        })
        .collect();
    let c = corpus(docs, v);
    let mut n_v = vec![0u64; v];
    for d in &c.docs {
        for &(t, k) in &d.terms {
            n_v[t as usize] += k as u64;
        }
    }
    let n: u64 = n_v.iter().sum();
    let cfg = LdaConfig {
        topics: 1,
        ..short(1, 5)
    };
    let model = fit_lda(&c, &cfg).unwrap();
    for (t, &count) in n_v.iter().enumerate() {
        let want = (count as f64 + cfg.beta) / (n as f64 + v as f64 * cfg.beta);
        assert!((model.phi.get(0, t) - want).abs() < 1e-12);
    }
    for d in 0..c.len() {
        assert_eq!(model.theta.row(d), &[1.0]);
    }
    assert_eq!(infer_theta(&model, &c.docs[0].terms, &FoldInConfig::default()).unwrap(), vec![1.0]);
}

#[test]
fn estimates_normalized_and_counts_conserved_every_sweep() {
    let synth = synthetic_lda_corpus(&recovery_spec(1)).unwrap();
    let cfg = short(3, 2);
    let mut sampler = LdaSampler::new(&synth.corpus, &cfg).unwrap();
    for _ in 0..60 {
        sampler.sweep();
        assert!(sampler.counts_consistent());
        assert!(rows_sum_to_one(&sampler.phi_estimate(), 1e-9));
        assert!(rows_sum_to_one(&sampler.theta_estimate(), 1e-9));
        assert_eq!(sampler.assignments().len() as u64, synth.corpus.total_tokens());
    }
    let model = sampler.run();
    assert!(rows_sum_to_one(&model.phi, 1e-9));
    assert!(rows_sum_to_one(&model.theta, 1e-9));
}

#[test]
fn same_seed_same_trajectory() {
    let synth = synthetic_lda_corpus(&recovery_spec(4)).unwrap();
    let cfg = short(3, 11);
    let mut a = LdaSampler::new(&synth.corpus, &cfg).unwrap();
    let mut b = LdaSampler::new(&synth.corpus, &cfg).unwrap();
    for _ in 0..20 {
        a.sweep();
        b.sweep();
        assert_eq!(a.assignments(), b.assignments());
    }
    assert_eq!(fit_lda(&synth.corpus, &cfg).unwrap(), fit_lda(&synth.corpus, &cfg).unwrap());
}

#[test]
fn pure_documents_over_disjoint_halves() {
    let mut rng = common::rng(8);
    let v = 20u32;
    let docs: Vec<Vec<(u32, u32)>> = (0..100)
        .map(|d| {
            let base = if d % 2 == 0 { 0 } else { v / 2 };
            let mut counts = vec![0u32; v as usize];
            for _ in 0..50 {
                counts[(base + rng.random_range(0..v / 2)) as usize] += 1;
            }
            counts
                .into_iter()
                .enumerate()
                .filter(|&(_, c)| c > 0)
                .map(|(t, c)| (t as u32, c))
                .collect()
        })
        .collect();
    let c = corpus(docs, v as usize);
    let mut truth = Matrix::zeros(2, v as usize);
    for t in 0..v as usize {
        truth.row_mut(t / 10)[t] = 0.1;
    }
    let model = fit_lda(
        &c,
        &LdaConfig {
            alpha: Some(0.1),
            ..short(2, 1)
        },
    )
    .unwrap();
    let m = match_topics(&model.phi, &truth).unwrap();
    assert!(m.distances.iter().all(|&d| d <= 0.1), "{:?}", m.distances);
    // The sweep entry point delegates to the same fit.
    let sweep = topic_sweep(&c, &[2], &LdaConfig { alpha: Some(0.1), ..short(2, 1) }, 5).unwrap();
    assert_eq!(sweep.len(), 1);
    let first: Vec<usize> = sweep[0].top_words.iter().map(|w| w[0] / 10).collect();
    assert!(first.contains(&0) && first.contains(&1));
    assert!(topic_sweep(&c, &[], &short(2, 1), 5).unwrap().is_empty());
}

#[test]
fn separable_recovery() {
    let synth = synthetic_lda_corpus(&recovery_spec(7)).unwrap();
    let model = fit_lda(
        &synth.corpus,
        &LdaConfig {
            topics: 3,
            alpha: Some(0.1),
            beta: 0.01,
            seed: 3,
            ..LdaConfig::default()
        },
    )
    .unwrap();
    let m = match_topics(&model.phi, &synth.phi).unwrap();
    assert!(m.mean_distance() <= 0.15, "{}", m.mean_distance());
}

fn manual_model(phi: Vec<Vec<f64>>, alpha: f64) -> TopicModel {
    let k = phi.len();
    TopicModel {
        phi: Matrix::from_rows(phi).unwrap(),
        theta: Matrix::zeros(0, k),
        config: LdaConfig {
            topics: k,
            alpha: Some(alpha),
            ..LdaConfig::default()
        },
        assignments: Vec::new(),
    }
}

#[test]
fn top_word_order() {
    let model = manual_model(vec![vec![0.1, 0.6, 0.3], vec![0.4, 0.2, 0.4]], 0.1);
    let top = top_words(&model, 2).unwrap();
    assert_eq!(top[0][0].0, 1);
    assert_eq!(top[0][1].0, 2);
    assert_eq!(top[1][0].0, 0);
    assert_eq!(top[1][1].0, 2);
    assert!(top_words(&model, 0).is_err());
    assert!(top_words(&model, 4).is_err());
}

#[test]
fn fold_in_concentrates_on_owning_topic() {
    let k = 4;
    let v = 40;
    let phi: Vec<Vec<f64>> = (0..k)
        .map(|t| {
            let mut row = vec![0.0; v];
            for w in (t * 10)..(t * 10 + 10) {
                row[w] = 0.1;
            }
            row
        })
        .collect();
    // Smooth as a beta = 0.01 fit would, keeping rows normalized.
    let smoothed: Vec<Vec<f64>> = phi
        .iter()
        .map(|row| row.iter().map(|x| (x * 100.0 + 0.01) / (100.0 + 0.01 * v as f64)).collect())
        .collect();
    let model = manual_model(smoothed, 0.1);
    for t in 0..k {
        let doc: Vec<(u32, u32)> = (0..10).map(|i| ((t * 10 + i) as u32, 10)).collect();
        let theta = infer_theta(&model, &doc, &FoldInConfig::default()).unwrap();
        assert!(theta[t] >= 0.9, "{theta:?}");
        assert!((theta.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn identical_topics_fold_in_uniformly() {
    let k = 4;
    let model = manual_model(vec![vec![0.25; 4]; k], 50.0 / k as f64);
    let doc = [(0u32, 10u32), (1, 10), (2, 5), (3, 5)];
    let mut mean = vec![0.0; k];
    for seed in 0..10 {
        let cfg = FoldInConfig {
            seed,
            ..Default::default()
        };
        let theta = infer_theta(&model, &doc, &cfg).unwrap();
        for (m, x) in mean.iter_mut().zip(&theta) {
            *m += x / 10.0;
        }
    }
    for m in mean {
        assert!((m - 1.0 / k as f64).abs() <= 0.05, "{m}");
    }
}

#[test]
fn uniform_model_perplexity_is_vocabulary_size() {
    let v = 17;
    let model = manual_model(vec![vec![1.0 / v as f64; v]; 3], 0.5);
    let c = corpus(vec![vec![(0, 3), (5, 2)], vec![(16, 7)]], v);
    let p = held_out_perplexity(&model, &c, &FoldInConfig::default()).unwrap();
    assert!((p.value - v as f64).abs() < 1e-9);
    assert_eq!(p.tokens, 12);
}

#[test]
fn trained_model_beats_uniform() {
    for seed in 0..10 {
        let synth = synthetic_lda_corpus(&recovery_spec(100 + seed)).unwrap();
        let model = fit_lda(&synth.corpus, &short(3, seed)).unwrap();
        let v = synth.corpus.vocab_size as f64;
        let fold = held_out_perplexity(&model, &synth.corpus, &FoldInConfig::default()).unwrap();
        let direct = training_perplexity(&model, &synth.corpus).unwrap();
        assert!(fold.value <= v && direct.value <= v, "seed {seed}: {} {}", fold.value, direct.value);
    }
}

#[test]
fn perplexity_falls_with_more_sweeps() {
    let mut better = 0;
    for seed in 0..10 {
        let synth = synthetic_lda_corpus(&SyntheticCorpusSpec {
            separable: false,
            topics: 5,
            vocab: 60,
            ..recovery_spec(200 + seed)
        })
        .unwrap();
        let fit = |iterations: usize| {
            let cfg = LdaConfig {
                topics: 5,
                iterations,
                burn_in: iterations - 1,
                stride: 1,
                seed,
                ..LdaConfig::default()
            };
            let model = fit_lda(&synth.corpus, &cfg).unwrap();
            held_out_perplexity(&model, &synth.corpus, &FoldInConfig::default()).unwrap().value
        };
        if fit(500) < fit(10) {
            better += 1;
        }
    }
    assert!(better >= 9, "{better}/10");
}

#[test]
fn held_out_documents_with_unknown_terms() {
    let synth = synthetic_lda_corpus(&recovery_spec(9)).unwrap();
    let model = fit_lda(&synth.corpus, &short(3, 0)).unwrap();
    let held = corpus(vec![vec![(0, 2), (29, 1)], vec![(1, 1)]], 40);
    let p = held_out_perplexity(&model, &held, &FoldInConfig::default()).unwrap();
    assert_eq!(p.tokens, 4);
    let with_unknown = BowCorpus {
        docs: vec![BowDocument {
            owner: UserId(0),
            terms: vec![(0, 1), (35, 2)],
        }],
        vocab_size: 40,
    };
    let p = held_out_perplexity(&model, &with_unknown, &FoldInConfig::default()).unwrap();
    assert_eq!((p.tokens, p.skipped_tokens), (1, 2));
}

#[test]
fn invalid_inputs_rejected() {
    let c = corpus(vec![vec![(0, 1)]], 2);
    assert!(fit_lda(&c, &short(2, 0)).is_err());
    assert!(fit_lda(&corpus(vec![], 2), &short(1, 0)).is_err());
    assert!(fit_lda(&corpus(vec![vec![]], 2), &short(1, 0)).is_err());
    assert!(fit_lda(&c, &LdaConfig { topics: 0, ..short(1, 0) }).is_err());
    assert!(fit_lda(&c, &LdaConfig { burn_in: 500, ..short(1, 0) }).is_err());
    assert!(fit_lda(&c, &LdaConfig { beta: 0.0, ..short(1, 0) }).is_err());
}

#[test]
fn default_alpha_follows_topic_count() {
    assert_eq!(LdaConfig { topics: 50, ..LdaConfig::default() }.alpha(), 1.0);
    assert_eq!(LdaConfig { topics: 10, ..LdaConfig::default() }.alpha(), 5.0);
    let synth = synthetic_lda_corpus(&recovery_spec(1)).unwrap();
    let p = synthetic_lda_corpus(&recovery_spec(1)).unwrap();
    assert_eq!(synth.phi, p.phi);
    assert!(total_variation(synth.phi.row(0), synth.phi.row(1)) > 0.99);
}

#[test]
fn sweep_over_wide_topic_range_on_bundled_corpus() {
    use echoscope::pipeline::{write_synthetic, Artifacts, SYNTH_CONFIG};
    use echoscope::{run_stage, PipelineConfig, Stage};
    let dir = tempfile::tempdir().unwrap();
    write_synthetic(&echoscope::synth::SocialDatasetSpec::default(), dir.path()).unwrap();
    let cfg = PipelineConfig::load(&dir.path().join(SYNTH_CONFIG)).unwrap();
    run_stage(&cfg, Stage::Corpus).unwrap();
    let vocab = echoscope::Vocabulary::read(&cfg.out.join(Artifacts::VOCAB)).unwrap();
    let c = BowCorpus::read(&cfg.out.join(Artifacts::CORPUS), &cfg.out.join(Artifacts::DOCUMENTS), vocab.len())
        .unwrap();
    let ks = [30, 40, 50, 60, 70, 80];
    let base = LdaConfig {
        iterations: 40,
        burn_in: 20,
        seed: 1,
        ..LdaConfig::default()
    };
    let sweep = topic_sweep(&c, &ks, &base, 10).unwrap();
    assert_eq!(sweep.iter().map(|s| s.topics).collect::<Vec<_>>(), ks);
    for s in &sweep {
        assert_eq!(s.top_words.len(), s.topics);
        assert!(s.top_words.iter().all(|w| w.len() == 10));
        assert!(s.perplexity.is_finite() && s.perplexity > 1.0);
    }
    assert_eq!(topic_sweep(&c, &ks[..2], &base, 10).unwrap()[..], sweep[..2]);
}
