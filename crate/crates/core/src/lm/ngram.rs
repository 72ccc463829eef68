//! Reference masked LM: an interpolated left/right add-k-smoothed n-gram
//! model with PPMI co-occurrence embeddings.
//!
//! Prediction at a masked position combines two independently smoothed
//! estimates, one conditioned on the words immediately to the left and one
//! on the words immediately to the right. Context windows stop at the
//! nearest mask. When the left window runs past the body start it continues
//! into the prefix; the reserved separator between prefix and body is
//! transparent to lookups, so prefix words can complete an n-gram. A context
//! that was never observed backs off to the longest observed shorter
//! context, bottoming out at the unigram table.

use std::collections::HashMap;

use crate::corpus::{Sentence, Token, Vocabulary};

use super::{normalize_or_zero, LmConfig, MaskedLm, MaskedSequence, Slot, WordDistribution};

#[derive(Debug, Clone, PartialEq, Default)]
pub(super) struct ContextCounts {
    pub total: u64,
    pub counts: HashMap<u32, u32>,
}

impl ContextCounts {
    fn bump(&mut self, word_id: u32) {
        *self.counts.entry(word_id).or_insert(0) += 1;
        self.total += 1;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NGramMaskedLm {
    pub(super) vocab: Vocabulary,
    pub(super) cfg: LmConfig,
    pub(super) left: HashMap<Vec<u32>, ContextCounts>,
    pub(super) right: HashMap<Vec<u32>, ContextCounts>,
    /// Vocabulary ids serving as co-occurrence context features, most
    /// frequent first.
    pub(super) anchors: Vec<u32>,
    /// Normalized PPMI vectors indexed by vocabulary id; reserved ids keep
    /// the zero vector.
    pub(super) embeddings: Vec<Vec<f64>>,
}

impl NGramMaskedLm {
    /// Counts n-gram contexts and builds co-occurrence embeddings from an
    /// annotated corpus.
    pub fn train(corpus: &[Sentence], vocab: Vocabulary, cfg: &LmConfig) -> Self {
        cfg.validate().expect("invalid LM configuration");
        assert!(vocab.predictable_count() > 0, "vocabulary has no predictable words");

        let mut lm = Self::untrained(vocab, cfg);
        for sentence in corpus {
            let ids: Vec<u32> = sentence.tokens().iter().map(|t| t.vocab_id).collect();
            let n = ids.len();
            for i in 0..n {
                let target = ids[i];
                if target < 2 {
                    continue; // reserved ids are never predicted
                }
                for len in 0..cfg.order {
                    if len <= i {
                        lm.left.entry(ids[i - len..i].to_vec()).or_default().bump(target);
                    }
                    if len <= n - 1 - i {
                        lm.right.entry(ids[i + 1..i + 1 + len].to_vec()).or_default().bump(target);
                    }
                }
            }
        }
        lm.build_embeddings(corpus);
        lm
    }

    /// A model with zero counts: every prediction is uniform and every
    /// embedding is the zero vector. Exercised directly by tests and used
    /// as the starting point of `train`.
    pub fn untrained(vocab: Vocabulary, cfg: &LmConfig) -> Self {
        cfg.validate().expect("invalid LM configuration");
        let embeddings = vec![vec![0.0; cfg.embed_dim]; vocab.size()];
        NGramMaskedLm {
            vocab,
            cfg: cfg.clone(),
            left: HashMap::new(),
            right: HashMap::new(),
            anchors: Vec::new(),
            embeddings,
        }
    }

    pub(super) fn from_parts(
        vocab: Vocabulary,
        cfg: LmConfig,
        left: HashMap<Vec<u32>, ContextCounts>,
        right: HashMap<Vec<u32>, ContextCounts>,
        anchors: Vec<u32>,
        embeddings: Vec<Vec<f64>>,
    ) -> Self {
        NGramMaskedLm { vocab, cfg, left, right, anchors, embeddings }
    }

    pub fn config(&self) -> &LmConfig {
        &self.cfg
    }

    /// PPMI of each word against the `embed_dim` most frequent words as
    /// context features, co-occurrence counted over whole sentences.
    fn build_embeddings(&mut self, corpus: &[Sentence]) {
        let dim = self.cfg.embed_dim;
        let mut by_freq: Vec<u32> = self.vocab.predictable_ids().collect();
        by_freq.sort_unstable_by(|&a, &b| {
            self.vocab.freq_of_id(b).cmp(&self.vocab.freq_of_id(a)).then(a.cmp(&b))
        });
        by_freq.truncate(dim);
        self.anchors = by_freq;
        let anchor_slot: HashMap<u32, usize> =
            self.anchors.iter().enumerate().map(|(slot, &id)| (id, slot)).collect();

        let size = self.vocab.size();
        let mut cooc = vec![vec![0u64; self.anchors.len()]; size];
        let mut row = vec![0u64; size];
        let mut col = vec![0u64; self.anchors.len()];
        let mut grand = 0u64;
        for sentence in corpus {
            let ids: Vec<u32> = sentence
                .tokens()
                .iter()
                .map(|t| t.vocab_id)
                .filter(|&id| id >= 2)
                .collect();
            for (i, &w) in ids.iter().enumerate() {
                for (j, &c) in ids.iter().enumerate() {
                    if i == j {
                        continue;
                    }
                    if let Some(&slot) = anchor_slot.get(&c) {
                        cooc[w as usize][slot] += 1;
                        row[w as usize] += 1;
                        col[slot] += 1;
                        grand += 1;
                    }
                }
            }
        }

        for id in self.vocab.predictable_ids() {
            let mut v = vec![0.0; dim];
            for (slot, &count) in cooc[id as usize].iter().enumerate() {
                if count > 0 {
                    let pmi = ((count as f64 * grand as f64)
                        / (row[id as usize] as f64 * col[slot] as f64))
                        .ln();
                    v[slot] = pmi.max(0.0);
                }
            }
            self.embeddings[id as usize] = normalize_or_zero(v);
        }
    }

    /// Words immediately left of `position`, in textual order, up to
    /// order-1 of them. Stops at a mask; continues into the prefix when the
    /// body start is reached.
    fn gather_left(&self, seq: &MaskedSequence, position: usize) -> Vec<u32> {
        let want = self.cfg.order - 1;
        let mut rev: Vec<u32> = Vec::with_capacity(want);
        let mut hit_mask = false;
        for j in (0..position).rev() {
            if rev.len() >= want {
                break;
            }
            match &seq.body[j] {
                Slot::Word(t) => rev.push(t.vocab_id),
                Slot::Mask => {
                    hit_mask = true;
                    break;
                }
            }
        }
        if !hit_mask && rev.len() < want {
            for t in seq.prefix.tokens().iter().rev() {
                if rev.len() >= want {
                    break;
                }
                rev.push(t.vocab_id);
            }
        }
        rev.reverse();
        rev
    }

    /// Words immediately right of `position`, nearest first, up to order-1.
    /// Stops at a mask or the body end; the prefix never extends the right
    /// side.
    fn gather_right(&self, seq: &MaskedSequence, position: usize) -> Vec<u32> {
        let want = self.cfg.order - 1;
        let mut out = Vec::with_capacity(want);
        for slot in &seq.body[position + 1..] {
            if out.len() >= want {
                break;
            }
            match slot {
                Slot::Word(t) => out.push(t.vocab_id),
                Slot::Mask => break,
            }
        }
        out
    }

    /// Longest observed truncation of the gathered context. `nearest_last`
    /// selects which end of the slice is adjacent to the mask.
    fn lookup<'a>(
        table: &'a HashMap<Vec<u32>, ContextCounts>,
        ctx: &[u32],
        nearest_last: bool,
    ) -> Option<&'a ContextCounts> {
        for len in (0..=ctx.len()).rev() {
            let key = if nearest_last { &ctx[ctx.len() - len..] } else { &ctx[..len] };
            if let Some(counts) = table.get(key) {
                return Some(counts);
            }
        }
        None
    }

    fn accumulate_side(&self, counts: Option<&ContextCounts>, weight: f64, out: &mut [f64]) {
        let v = self.vocab.predictable_count() as f64;
        let k = self.cfg.smoothing;
        let total = counts.map_or(0.0, |c| c.total as f64);
        let denom = total + k * v;
        for (slot, id) in self.vocab.predictable_ids().enumerate() {
            let c = counts.and_then(|c| c.counts.get(&id)).copied().unwrap_or(0) as f64;
            out[slot] += weight * (c + k) / denom;
        }
    }
}

impl MaskedLm for NGramMaskedLm {
    fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn embed_dim(&self) -> usize {
        self.cfg.embed_dim
    }

    fn predict(&self, seq: &MaskedSequence, position: usize) -> WordDistribution {
        assert!(
            seq.body[position].is_mask(),
            "predict requires a mask at position {position} (body: {})",
            seq.pattern()
        );
        let left_ctx = self.gather_left(seq, position);
        let right_ctx = self.gather_right(seq, position);
        let mut probs = vec![0.0; self.vocab.predictable_count()];
        self.accumulate_side(Self::lookup(&self.left, &left_ctx, true), self.cfg.lambda_left, &mut probs);
        self.accumulate_side(Self::lookup(&self.right, &right_ctx, false), self.cfg.lambda_right, &mut probs);
        WordDistribution::from_scores(self.vocab.predictable_ids().zip(probs).collect())
    }

    fn embed_word(&self, token: &Token) -> Vec<f64> {
        if token.is_unknown() {
            return vec![0.0; self.cfg.embed_dim];
        }
        self.embeddings[token.vocab_id as usize].clone()
    }
}
