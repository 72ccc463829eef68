//! Compression-reconstruction rewards.
//!
//! Each step is judged by two rates: how much shorter the summary is (cr)
//! and how much of the input survives reconstruction (rr). Both are held
//! against schedules that tighten per step: a step survives only while
//! cr > rho_t and rr > tau_t, strictly. The first violating step T ends the
//! scored episode; it receives a step reward of -1 and later steps are
//! discarded. Every surviving step additionally receives a shared
//! whole-summary assessment computed at step T.

use crate::agent::ActionTrace;
use crate::converter::Skeleton;
use crate::corpus::Sentence;
use crate::lm::{llh, sim, LlhMode, MaskedLm};
use crate::trainer::{ExpContext, Experience};

/// Which reconstruction rate drives thresholds and rewards.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RrMode {
    /// Positionwise exact match between input and reconstruction.
    Exact,
    /// Top-k recovery over non-stopword positions.
    Relaxed,
}

impl RrMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RrMode::Exact => "exact",
            RrMode::Relaxed => "relaxed",
        }
    }
}

impl std::str::FromStr for RrMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "exact" => Ok(RrMode::Exact),
            "relaxed" => Ok(RrMode::Relaxed),
            other => Err(format!("rr_mode must be `exact` or `relaxed`, got `{other}`")),
        }
    }
}

/// How the per-step reward combines the compression and reconstruction
/// signals.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepRewardMode {
    /// The literal product: (1 - |y_t|/|y_{t-1}|) * (+-1).
    Formula,
    /// Unit magnitude: +-1 on steps that shrink the summary, 0 otherwise.
    Unit,
}

impl StepRewardMode {
    pub fn as_str(self) -> &'static str {
        match self {
            StepRewardMode::Formula => "formula",
            StepRewardMode::Unit => "unit",
        }
    }
}

impl std::str::FromStr for StepRewardMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "formula" => Ok(StepRewardMode::Formula),
            "unit" => Ok(StepRewardMode::Unit),
            other => Err(format!("step_reward_mode must be `formula` or `unit`, got `{other}`")),
        }
    }
}

/// All reward hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardConfig {
    /// Final reconstruction-rate threshold; the per-step threshold slides
    /// from 1 down to this value.
    pub tau: f64,
    /// Final compression-rate threshold; the per-step threshold slides from
    /// 0 up to this value.
    pub rho: f64,
    /// Weight of the similarity bonus in the whole-summary assessment.
    pub alpha: f64,
    /// Weight of the fluency bonus in the whole-summary assessment.
    pub beta: f64,
    pub rr_mode: RrMode,
    /// k for the relaxed top-k recovery test.
    pub rr_topk: usize,
    /// Fluency threshold on the geometric-mean token probability.
    pub llh_threshold: f64,
    pub llh_mode: LlhMode,
    pub step_reward_mode: StepRewardMode,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            tau: 0.5,
            rho: 0.3,
            alpha: 0.1,
            beta: 0.1,
            rr_mode: RrMode::Relaxed,
            rr_topk: 10,
            llh_threshold: 0.005,
            llh_mode: LlhMode::Geo,
            step_reward_mode: StepRewardMode::Formula,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [("tau", self.tau), ("rho", self.rho)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !v.is_finite() || v < 0.0 {
                return Err(format!("{name} must be a non-negative number, got {v}"));
            }
        }
        if self.rr_topk == 0 {
            return Err("rr_topk must be at least 1".into());
        }
        if !self.llh_threshold.is_finite() {
            return Err("llh_threshold must be finite".into());
        }
        Ok(())
    }
}

/// cr = 1 - |y|/|x|.
pub fn compression_rate(x: &Sentence, y: &Sentence) -> f64 {
    assert!(x.n() > 0, "input sentence must be non-empty");
    1.0 - y.n() as f64 / x.n() as f64
}

/// Fraction of input positions the reconstruction restored verbatim.
pub fn reconstruction_rate_exact(x: &Sentence, x_hat: &Sentence) -> f64 {
    assert_eq!(x.n(), x_hat.n(), "reconstruction must have the input's length");
    let matches = x
        .tokens()
        .iter()
        .zip(x_hat.tokens())
        .filter(|(a, b)| a.surface == b.surface)
        .count();
    matches as f64 / x.n() as f64
}

/// Top-k recovery over non-stopword positions: a kept position counts
/// automatically, a null position counts when the original word appears in
/// the LM's top k at that slot of the all-masked skeleton. Sentences whose
/// positions are all stopwords score 1 vacuously.
pub fn reconstruction_rate_relaxed<L: MaskedLm + ?Sized>(
    x: &Sentence,
    skeleton: &Skeleton,
    lm: &L,
    k: usize,
) -> f64 {
    assert_eq!(x.n(), skeleton.len(), "skeleton must have the input's length");
    let body = skeleton.masked_body();
    let seq = crate::lm::MaskedSequence::new(Sentence::default(), body);
    let mut considered = 0usize;
    let mut recovered = 0usize;
    for (i, token) in x.tokens().iter().enumerate() {
        if token.is_stopword {
            continue;
        }
        considered += 1;
        if skeleton.slots()[i].is_some() {
            recovered += 1;
        } else if !token.is_unknown() && lm.predict(&seq, i).in_top_k(token.vocab_id, k) {
            recovered += 1;
        }
    }
    if considered == 0 {
        1.0
    } else {
        recovered as f64 / considered as f64
    }
}

/// Reconstruction-rate threshold at step t of n: slides linearly from 1
/// toward tau.
pub fn tau_at(t: usize, n: usize, tau: f64) -> f64 {
    assert!(t >= 1 && t <= n, "step {t} outside 1..={n}");
    1.0 - t as f64 * (1.0 - tau) / n as f64
}

/// Compression-rate threshold at step t of n: slides linearly from 0 toward
/// rho.
pub fn rho_at(t: usize, n: usize, rho: f64) -> f64 {
    assert!(t >= 1 && t <= n, "step {t} outside 1..={n}");
    t as f64 * rho / n as f64
}

/// Per-step reward before any violation override. The compression factor
/// compares the summary against the previous step's summary; the
/// reconstruction factor is +-1 against the sliding threshold.
pub fn step_reward(
    prev_len: usize,
    cur_len: usize,
    rr_t: f64,
    tau_t: f64,
    mode: StepRewardMode,
) -> f64 {
    assert!(prev_len >= 1, "previous summary cannot be empty");
    assert!(cur_len <= prev_len, "summaries never grow");
    let r_c = 1.0 - cur_len as f64 / prev_len as f64;
    let r_r = if rr_t > tau_t { 1.0 } else { -1.0 };
    match mode {
        StepRewardMode::Formula => r_c * r_r,
        StepRewardMode::Unit => {
            if r_c > 0.0 {
                r_r
            } else {
                0.0
            }
        }
    }
}

/// A step violates the constraints unless both rates strictly clear their
/// thresholds.
pub fn check_violation(cr_t: f64, rr_t: f64, rho_t: f64, tau_t: f64) -> bool {
    cr_t <= rho_t || rr_t <= tau_t
}

/// Whole-summary assessment shared by steps 1..=T:
/// (T/n) * (cr_T * rr_T + alpha * sim + beta * llh).
pub fn summary_assessment(
    t_final: usize,
    n: usize,
    cr_final: f64,
    rr_final: f64,
    sim_score: f64,
    llh_score: f64,
    alpha: f64,
    beta: f64,
) -> f64 {
    assert!(t_final >= 1 && t_final <= n);
    (t_final as f64 / n as f64) * (cr_final * rr_final + alpha * sim_score + beta * llh_score)
}

/// Turns a rolled-out trace into DQN experiences. Steps after the first
/// violation are discarded; the violating step's reward is forced to -1
/// before the shared assessment is added. The experience at T is terminal.
pub fn score_episode<L: MaskedLm + ?Sized>(
    trace: &ActionTrace,
    lm: &L,
    cfg: &RewardConfig,
    episode: u64,
) -> Vec<Experience> {
    assert!(!trace.steps.is_empty(), "cannot score an empty trace");
    let n = trace.sentence.n();
    let last_idx = trace
        .steps
        .iter()
        .position(|s| s.outcome.violated)
        .unwrap_or(trace.steps.len() - 1);
    let final_step = &trace.steps[last_idx];
    let violated = final_step.outcome.violated;

    let r_sa = summary_assessment(
        final_step.outcome.t,
        n,
        final_step.outcome.cr,
        final_step.outcome.rr,
        sim(lm, &trace.sentence, &final_step.outcome.summary),
        llh(lm, &final_step.outcome.summary, cfg.llh_threshold, cfg.llh_mode),
        cfg.alpha,
        cfg.beta,
    );

    (0..=last_idx)
        .map(|idx| {
            let step = &trace.steps[idx];
            let r_sr = if idx == last_idx && violated { -1.0 } else { step.outcome.r_sr };
            let next_state =
                if idx == last_idx { None } else { Some(trace.steps[idx + 1].state.clone()) };
            Experience {
                state: step.state.clone(),
                action: step.outcome.action,
                reward: r_sr + r_sa,
                next_state,
                context: ExpContext {
                    embeddings: trace.embeddings.clone(),
                    actions: step.actions_before.clone(),
                    statuses: step.statuses_before.clone(),
                    position: step.position,
                    episode,
                },
            }
        })
        .collect()
}

/// Everything recorded about one executed step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    /// 1-based step index.
    pub t: usize,
    pub action: crate::encoder::EditAction,
    pub summary: Sentence,
    pub reconstruction: Sentence,
    pub cr: f64,
    pub rr: f64,
    pub tau_t: f64,
    pub rho_t: f64,
    /// Step reward before the violation override.
    pub r_sr: f64,
    pub violated: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::converter::make_skeleton;
    use crate::corpus::{tokenize, Vocabulary};
    use crate::encoder::EditAction::{Keep, Remove};
    use crate::lm::{LmConfig, NGramMaskedLm};

    #[test]
    fn compression_rate_examples() {
        let x = tokenize("a b c d e f");
        assert_eq!(compression_rate(&x, &tokenize("a b c d e f")), 0.0);
        assert!((compression_rate(&x, &tokenize("a b c")) - 0.5).abs() < 1e-12);
        assert_eq!(compression_rate(&x, &Sentence::default()), 1.0);
    }

    #[test]
    fn exact_rate_counts_positionwise_matches() {
        let x = tokenize("May the force be with you");
        let xh = tokenize("I will always be with you");
        assert!((reconstruction_rate_exact(&x, &xh) - 0.5).abs() < 1e-12);
        assert_eq!(reconstruction_rate_exact(&x, &x), 1.0);
    }

    #[test]
    fn thresholds_slide_linearly() {
        // tau = 0.5, rho = 0.3, n = 6
        let taus: Vec<f64> = (1..=3).map(|t| tau_at(t, 6, 0.5)).collect();
        assert!((taus[0] - (1.0 - 0.5 / 6.0)).abs() < 1e-12);
        assert!((taus[1] - (1.0 - 1.0 / 6.0)).abs() < 1e-12);
        assert!((taus[2] - 0.75).abs() < 1e-12);
        let rhos: Vec<f64> = (1..=3).map(|t| rho_at(t, 6, 0.3)).collect();
        assert!((rhos[0] - 0.05).abs() < 1e-12);
        assert!((rhos[1] - 0.10).abs() < 1e-12);
        assert!((rhos[2] - 0.15).abs() < 1e-12);
        // tau = 1 keeps the threshold pinned at 1 for every step
        for t in 1..=4 {
            assert_eq!(tau_at(t, 4, 1.0), 1.0);
        }
        // final step reaches the configured limits exactly
        assert!((tau_at(6, 6, 0.5) - 0.5).abs() < 1e-12);
        assert!((rho_at(6, 6, 0.3) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn step_reward_formula_and_unit_modes() {
        // removing one of six words with rr above threshold
        let formula = step_reward(6, 5, 1.0, 0.9, StepRewardMode::Formula);
        assert!((formula - 1.0 / 6.0).abs() < 1e-12);
        assert_eq!(step_reward(6, 5, 1.0, 0.9, StepRewardMode::Unit), 1.0);
        // keep step: nothing removed
        assert_eq!(step_reward(5, 5, 1.0, 0.9, StepRewardMode::Formula), 0.0);
        assert_eq!(step_reward(5, 5, 1.0, 0.9, StepRewardMode::Unit), 0.0);
        // below-threshold reconstruction flips the sign
        assert!((step_reward(4, 2, 0.5, 0.75, StepRewardMode::Formula) + 0.5).abs() < 1e-12);
        assert_eq!(step_reward(4, 2, 0.5, 0.75, StepRewardMode::Unit), -1.0);
        // equality with the threshold counts as failure
        assert_eq!(step_reward(4, 3, 0.8, 0.8, StepRewardMode::Unit), -1.0);
    }

    #[test]
    fn violation_requires_strictly_clearing_both_thresholds() {
        assert!(!check_violation(0.2, 0.9, 0.1, 0.8));
        assert!(check_violation(0.1, 0.9, 0.1, 0.8)); // cr == rho
        assert!(check_violation(0.2, 0.8, 0.1, 0.8)); // rr == tau
        assert!(check_violation(0.05, 0.5, 0.1, 0.8));
    }

    #[test]
    fn summary_assessment_matches_hand_computation() {
        // T=3 of n=6, cr=.5, rr=.5, sim=.5, llh=1, alpha=beta=.1:
        // 0.5 * (0.25 + 0.05 + 0.1) = 0.2
        let r_sa = summary_assessment(3, 6, 0.5, 0.5, 0.5, 1.0, 0.1, 0.1);
        assert!((r_sa - 0.2).abs() < 1e-12);
    }

    #[test]
    fn relaxed_rate_skips_stopwords_and_credits_kept_words() {
        let raw: Vec<Sentence> = ["the cat sat", "the cat sat", "the dog sat"]
            .iter()
            .map(|l| tokenize(l))
            .collect();
        let mut vocab = Vocabulary::build(&raw, 1);
        let dir = tempfile::tempdir().unwrap();
        let stops = dir.path().join("stops");
        std::fs::write(&stops, "the\n").unwrap();
        vocab.load_stopwords(Some(&stops), 0).unwrap();
        let corpus: Vec<Sentence> = raw.iter().map(|s| vocab.annotate(s)).collect();
        let lm = NGramMaskedLm::train(&corpus, vocab, &LmConfig::default());

        let x = lm.vocab().annotate(&tokenize("the cat sat"));
        // remove "cat": context ("the", _, "sat") puts it in the top 2
        let z = make_skeleton(&x, &[Keep, Remove, Keep]);
        assert_eq!(reconstruction_rate_relaxed(&x, &z, &lm, 2), 1.0);
        // k=1 still finds it: "cat" outnumbers "dog" in that slot
        assert_eq!(reconstruction_rate_relaxed(&x, &z, &lm, 1), 1.0);
        // removing the stopword changes nothing: vacuously recovered
        let z = make_skeleton(&x, &[Remove, Keep, Keep]);
        assert_eq!(reconstruction_rate_relaxed(&x, &z, &lm, 1), 1.0);
    }

    #[test]
    fn relaxed_rate_is_vacuously_one_on_all_stopword_sentences() {
        let raw = vec![tokenize("the a the")];
        let mut vocab = Vocabulary::build(&raw, 1);
        let dir = tempfile::tempdir().unwrap();
        let stops = dir.path().join("stops");
        std::fs::write(&stops, "the\na\n").unwrap();
        vocab.load_stopwords(Some(&stops), 0).unwrap();
        let corpus: Vec<Sentence> = raw.iter().map(|s| vocab.annotate(s)).collect();
        let lm = NGramMaskedLm::train(&corpus, vocab.clone(), &LmConfig::default());
        let x = vocab.annotate(&tokenize("the a the"));
        let z = make_skeleton(&x, &[Remove, Remove, Remove]);
        assert_eq!(reconstruction_rate_relaxed(&x, &z, &lm, 10), 1.0);
    }

    #[test]
    fn relaxed_rate_excludes_words_outside_top_k() {
        // "rare" appears once in the slot; nine alternatives appear twice
        // each, so with k=9 the gold word ranks 10th and misses.
        let mut lines = Vec::new();
        for w in ["alpha", "bravo", "carol", "delta", "echo", "fox", "golf", "hotel", "india"] {
            lines.push(format!("start {w} end"));
            lines.push(format!("start {w} end"));
        }
        lines.push("start rare end".to_string());
        let raw: Vec<Sentence> = lines.iter().map(|l| tokenize(l)).collect();
        let mut vocab = Vocabulary::build(&raw, 1);
        vocab.load_stopwords(None, 0).unwrap();
        let corpus: Vec<Sentence> = raw.iter().map(|s| vocab.annotate(s)).collect();
        let lm = NGramMaskedLm::train(&corpus, vocab, &LmConfig::default());

        let x = lm.vocab().annotate(&tokenize("start rare end"));
        let z = make_skeleton(&x, &[Keep, Remove, Keep]);
        let rate_k9 = reconstruction_rate_relaxed(&x, &z, &lm, 9);
        let rate_k10 = reconstruction_rate_relaxed(&x, &z, &lm, 10);
        assert!((rate_k9 - 2.0 / 3.0).abs() < 1e-12, "got {rate_k9}");
        assert_eq!(rate_k10, 1.0);
    }
}
