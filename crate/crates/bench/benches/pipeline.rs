//! Benchmarks for the hot paths of the pipeline: state encoding, masked
//! filling, episode rollout, the batched Q-update, and evaluation scoring.

use std::path::Path;

use criterion::{criterion_group, criterion_main, Criterion};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use ealm_core::encoder::{encode_all, token_embedding, EditState};
use ealm_core::numerics::AdamState;
use ealm_core::trainer::{update, Experience};
use ealm_core::{
    evaluate, make_skeleton, reconstruct, run_episode, score_episode, tokenize, AgentParams,
    EditAction, EntropyMode, ExplorationPolicy, LmConfig, MaskedLm, NGramMaskedLm, RewardConfig,
    RolloutMode, Sentence, Vocabulary,
};

fn data(name: &str) -> String {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name);
    std::fs::read_to_string(path).expect("bundled data file")
}

fn toy_lm() -> NGramMaskedLm {
    let raw: Vec<Sentence> = data("toy_corpus.txt").lines().map(tokenize).collect();
    let mut vocab = Vocabulary::build(&raw, 1);
    vocab.load_stopwords(None, 3).expect("frequency-only stopwords");
    let annotated: Vec<Sentence> = raw.iter().map(|s| vocab.annotate(s)).collect();
    NGramMaskedLm::train(&annotated, vocab, &LmConfig::default())
}

fn bench_pipeline(c: &mut Criterion) {
    let lm = toy_lm();
    let x = lm
        .vocab()
        .annotate(&tokenize("derek said monday that the joint panel approved the budget ."));
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let params = AgentParams::new(lm.embed_dim(), 200, &mut rng);
    let reward_cfg = RewardConfig::default();
    let embeddings = token_embedding(&x, &lm);

    c.bench_function("state_encoding", |b| {
        let edit = EditState::new(x.n());
        b.iter(|| encode_all(&edit, &embeddings, &params.encoder))
    });

    c.bench_function("reconstruction_fill", |b| {
        let mut actions = vec![EditAction::Keep; x.n()];
        for i in [0, 2, 4, 7] {
            actions[i] = EditAction::Remove;
        }
        let skeleton = make_skeleton(&x, &actions);
        let summary = tokenize("said that the joint approved the budget .");
        let summary = lm.vocab().annotate(&summary);
        b.iter(|| reconstruct(&skeleton, &summary, &lm))
    });

    c.bench_function("training_episode", |b| {
        let policy = ExplorationPolicy { epsilon: 0.5, entropy_mode: EntropyMode::Normalized };
        let mut episode_rng = ChaCha8Rng::seed_from_u64(2);
        b.iter(|| {
            let trace = run_episode(
                &x,
                &params,
                &lm,
                &reward_cfg,
                &policy,
                RolloutMode::Train,
                &mut episode_rng,
            );
            score_episode(&trace, &lm, &reward_cfg, 0)
        })
    });

    c.bench_function("dqn_update_batch128", |b| {
        let policy = ExplorationPolicy { epsilon: 0.9, entropy_mode: EntropyMode::Normalized };
        let mut fill_rng = ChaCha8Rng::seed_from_u64(3);
        let mut store: Vec<Experience> = Vec::new();
        while store.len() < 128 {
            let trace = run_episode(
                &x,
                &params,
                &lm,
                &reward_cfg,
                &policy,
                RolloutMode::Train,
                &mut fill_rng,
            );
            store.extend(score_episode(&trace, &lm, &reward_cfg, 0));
        }
        store.truncate(128);
        let batch: Vec<&Experience> = store.iter().collect();
        let target = params.clone();
        b.iter_batched(
            || (params.clone(), AdamState::new(params.param_count(), 0.001)),
            |(mut p, mut adam)| update(&mut p, &target, &batch, &mut adam, 0.995, 1.0),
            criterion::BatchSize::SmallInput,
        )
    });

    c.bench_function("evaluate_40_sentences", |b| {
        let sources: Vec<Sentence> = data("toy_heldout.txt").lines().map(tokenize).collect();
        let refs1: Vec<Sentence> = data("toy_heldout_refs.txt").lines().map(tokenize).collect();
        let refs2: Vec<Sentence> = data("toy_heldout_refs2.txt").lines().map(tokenize).collect();
        let references = vec![refs1, refs2];
        let candidates = sources.clone();
        b.iter(|| evaluate(&candidates, &sources, &references, 75))
    });
}

criterion_group!(benches, bench_pipeline);
criterion_main!(benches);
