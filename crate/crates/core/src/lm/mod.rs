//! Masked language model interface shared by the converter, the reward
//! machinery, and the state encoder.
//!
//! A [`MaskedSequence`] is an optional prefix sentence plus a body of slots,
//! each either a concrete word or a mask. Multi-mask inputs are filled
//! autoregressively: every remaining mask is scored, the single mask whose
//! best word has the highest probability is committed, and the rest are
//! rescored against the updated sequence until no mask remains.

mod io;
mod ngram;

pub use ngram::NGramMaskedLm;

use crate::corpus::{Sentence, Token, Vocabulary};

/// Hyperparameters of the reference n-gram model.
#[derive(Debug, Clone, PartialEq)]
pub struct LmConfig {
    /// N-gram order; 1 reduces prediction to a context-free unigram model.
    pub order: usize,
    /// Add-k smoothing constant applied to every count.
    pub smoothing: f64,
    /// Interpolation weight of the left-context prediction.
    pub lambda_left: f64,
    /// Interpolation weight of the right-context prediction.
    pub lambda_right: f64,
    /// Dimension of the co-occurrence word embeddings.
    pub embed_dim: usize,
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig { order: 3, smoothing: 0.1, lambda_left: 0.5, lambda_right: 0.5, embed_dim: 64 }
    }
}

impl LmConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.order < 1 {
            return Err("order must be at least 1".into());
        }
        if !(self.smoothing > 0.0) {
            return Err("smoothing must be positive".into());
        }
        if (self.lambda_left + self.lambda_right - 1.0).abs() > 1e-9
            || self.lambda_left < 0.0
            || self.lambda_right < 0.0
        {
            return Err("lambda_left and lambda_right must be non-negative and sum to 1".into());
        }
        if self.embed_dim == 0 {
            return Err("embed_dim must be positive".into());
        }
        Ok(())
    }
}

/// One body position of a masked sequence.
#[derive(Debug, Clone, PartialEq)]
pub enum Slot {
    Word(Token),
    Mask,
}

impl Slot {
    pub fn is_mask(&self) -> bool {
        matches!(self, Slot::Mask)
    }
}

/// A conditioning prefix plus a body of word/mask slots.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedSequence {
    pub prefix: Sentence,
    pub body: Vec<Slot>,
}

impl MaskedSequence {
    pub fn new(prefix: Sentence, body: Vec<Slot>) -> Self {
        assert!(!body.is_empty(), "masked sequence body must be non-empty");
        MaskedSequence { prefix, body }
    }

    pub fn mask_positions(&self) -> Vec<usize> {
        self.body
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.is_mask().then_some(i))
            .collect()
    }

    pub fn mask_count(&self) -> usize {
        self.body.iter().filter(|s| s.is_mask()).count()
    }

    /// Converts a fully realized body into a sentence. Panics if a mask is
    /// still present.
    pub fn realize(self) -> Sentence {
        let tokens = self
            .body
            .into_iter()
            .map(|slot| match slot {
                Slot::Word(t) => t,
                Slot::Mask => panic!("cannot realize a sequence that still contains masks"),
            })
            .collect();
        Sentence::new(tokens)
    }

    /// Compact rendering used in error messages and test fixtures, e.g.
    /// `"[M] the force"`.
    pub fn pattern(&self) -> String {
        self.body
            .iter()
            .map(|s| match s {
                Slot::Word(t) => t.surface.as_str(),
                Slot::Mask => "[M]",
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// A full distribution over predictable words, ranked by descending
/// probability with ties broken by ascending vocabulary id.
#[derive(Debug, Clone, PartialEq)]
pub struct WordDistribution {
    entries: Vec<(u32, f64)>,
}

impl WordDistribution {
    pub fn from_scores(mut scores: Vec<(u32, f64)>) -> Self {
        assert!(!scores.is_empty(), "distribution must cover at least one word");
        scores.sort_unstable_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        WordDistribution { entries: scores }
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Highest-probability entry.
    pub fn top(&self) -> (u32, f64) {
        self.entries[0]
    }

    pub fn top_k(&self, k: usize) -> &[(u32, f64)] {
        &self.entries[..k.min(self.entries.len())]
    }

    pub fn in_top_k(&self, word_id: u32, k: usize) -> bool {
        self.top_k(k).iter().any(|&(id, _)| id == word_id)
    }

    pub fn prob_of(&self, word_id: u32) -> Option<f64> {
        self.entries.iter().find(|&&(id, _)| id == word_id).map(|&(_, p)| p)
    }

    /// Smallest probability in the distribution; the score assigned to
    /// targets outside the vocabulary.
    pub fn floor(&self) -> f64 {
        self.entries.last().unwrap().1
    }
}

/// One committed mask during autoregressive filling.
#[derive(Debug, Clone, PartialEq)]
pub struct FillStep {
    pub position: usize,
    pub word_id: u32,
    pub prob: f64,
}

/// Interface every converter-facing language model implements. The provided
/// methods give the autoregressive fill loop and derived sentence scores;
/// implementations only have to supply `predict` and the embedding lookups.
pub trait MaskedLm {
    fn vocab(&self) -> &Vocabulary;

    fn embed_dim(&self) -> usize;

    /// Distribution over predictable words for the mask at `position`.
    /// Panics if that body slot is not a mask.
    fn predict(&self, seq: &MaskedSequence, position: usize) -> WordDistribution;

    /// Co-occurrence vector of a known word; the zero vector for unknown
    /// words and reserved ids.
    fn embed_word(&self, token: &Token) -> Vec<f64>;

    /// L2-normalized mean of the known-token vectors; the zero vector when
    /// no token is known.
    fn embed_sentence(&self, sentence: &Sentence) -> Vec<f64> {
        let dim = self.embed_dim();
        let mut acc = vec![0.0; dim];
        let mut known = 0usize;
        for token in sentence.tokens() {
            if !token.is_unknown() {
                let v = self.embed_word(token);
                for (a, x) in acc.iter_mut().zip(&v) {
                    *a += x;
                }
                known += 1;
            }
        }
        if known == 0 {
            return acc;
        }
        for a in acc.iter_mut() {
            *a /= known as f64;
        }
        normalize_or_zero(acc)
    }

    /// Mean log-probability of each word given the rest of the sentence
    /// (one mask per position, no prefix). Empty sentences score negative
    /// infinity. Unknown words receive the distribution's floor probability,
    /// since nothing outside the vocabulary can be predicted.
    fn loglikelihood_raw(&self, sentence: &Sentence) -> f64 {
        if sentence.is_empty() {
            return f64::NEG_INFINITY;
        }
        let mut total = 0.0;
        for i in 0..sentence.n() {
            let body: Vec<Slot> = sentence
                .tokens()
                .iter()
                .enumerate()
                .map(|(j, t)| if j == i { Slot::Mask } else { Slot::Word(t.clone()) })
                .collect();
            let seq = MaskedSequence::new(Sentence::default(), body);
            let dist = self.predict(&seq, i);
            let token = &sentence.tokens()[i];
            let p = if token.is_unknown() {
                dist.floor()
            } else {
                dist.prob_of(token.vocab_id).unwrap_or_else(|| dist.floor())
            };
            total += p.ln();
        }
        total / sentence.n() as f64
    }

    /// Fills every mask and reports the commit order. Each iteration scores
    /// all remaining masks and commits the one whose best word has the
    /// highest probability (ties: lowest position).
    fn fill_masks_trace(&self, seq: &MaskedSequence) -> (Sentence, Vec<FillStep>) {
        let mut work = seq.clone();
        let mut steps = Vec::new();
        loop {
            let masks = work.mask_positions();
            if masks.is_empty() {
                break;
            }
            let mut best: Option<FillStep> = None;
            for &pos in &masks {
                let (word_id, prob) = self.predict(&work, pos).top();
                if best.as_ref().map_or(true, |b| prob > b.prob) {
                    best = Some(FillStep { position: pos, word_id, prob });
                }
            }
            let step = best.expect("at least one mask was present");
            let surface = self.vocab().surface_of(step.word_id).to_string();
            let stop = self.vocab().is_stopword(&surface);
            work.body[step.position] = Slot::Word(Token::new(surface, step.word_id, stop));
            steps.push(step);
        }
        (work.realize(), steps)
    }

    fn fill_masks(&self, seq: &MaskedSequence) -> Sentence {
        self.fill_masks_trace(seq).0
    }
}

/// Cosine similarity of the sentence embeddings mapped to [0, 1]; 0.5
/// (cosine zero) when either embedding is the zero vector.
pub fn sim<L: MaskedLm + ?Sized>(lm: &L, a: &Sentence, b: &Sentence) -> f64 {
    let va = lm.embed_sentence(a);
    let vb = lm.embed_sentence(b);
    let na = l2_norm(&va);
    let nb = l2_norm(&vb);
    if na < 1e-12 || nb < 1e-12 {
        return 0.5;
    }
    let dot: f64 = va.iter().zip(&vb).map(|(x, y)| x * y).sum();
    (dot / (na * nb) + 1.0) / 2.0
}

/// How the fluency threshold is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LlhMode {
    /// Compare the geometric mean token probability against the threshold.
    Geo,
    /// Compare the raw mean log-probability against the threshold. Kept for
    /// completeness; a mean log-probability never exceeds a positive
    /// threshold, so this mode effectively disables the fluency bonus.
    Raw,
}

impl LlhMode {
    pub fn as_str(self) -> &'static str {
        match self {
            LlhMode::Geo => "geo",
            LlhMode::Raw => "raw",
        }
    }
}

impl std::str::FromStr for LlhMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "geo" => Ok(LlhMode::Geo),
            "raw" => Ok(LlhMode::Raw),
            other => Err(format!("llh_mode must be `geo` or `raw`, got `{other}`")),
        }
    }
}

/// Binary fluency score: 1 when the sentence clears the threshold, else 0.
pub fn llh<L: MaskedLm + ?Sized>(lm: &L, sentence: &Sentence, threshold: f64, mode: LlhMode) -> f64 {
    let raw = lm.loglikelihood_raw(sentence);
    let score = match mode {
        LlhMode::Geo => raw.exp(),
        LlhMode::Raw => raw,
    };
    if score > threshold {
        1.0
    } else {
        0.0
    }
}

pub(crate) fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn normalize_or_zero(mut v: Vec<f64>) -> Vec<f64> {
    let norm = l2_norm(&v);
    if norm >= 1e-12 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    } else {
        v.iter_mut().for_each(|x| *x = 0.0);
    }
    v
}
