//! The editorial agent: Q-value computation, action selection, and episode
//! rollout.
//!
//! An episode assigns one edit action to each word of the input, in an order
//! the agent itself chooses: at every step it scores all unoperated
//! positions and acts on the (position, action) pair it is most confident
//! about. After each commit the converter realizes the current summary and
//! reconstruction so the reward engine can judge the step.

use std::sync::Arc;

use rand::Rng;

use crate::converter::ConvertCache;
use crate::corpus::Sentence;
use crate::encoder::{
    encode_all, token_embedding, EditAction, EditState, EncoderParams, StateVector,
};
use crate::lm::MaskedLm;
use crate::numerics::DenseNet;
use crate::reward::{
    check_violation, compression_rate, reconstruction_rate_exact, reconstruction_rate_relaxed,
    rho_at, step_reward, tau_at, RewardConfig, RrMode, StepOutcome,
};

/// Clamp applied to non-positive Q-values when the literal entropy formula
/// is requested.
const LITERAL_ENTROPY_FLOOR: f64 = 1e-9;

/// How Q-triples become probability vectors for entropy-based exploration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntropyMode {
    /// Softmax the Q-values, then take the Shannon entropy.
    Normalized,
    /// Apply the entropy formula to the raw Q-values, clamping non-positive
    /// entries to a small floor.
    Literal,
}

impl EntropyMode {
    pub fn as_str(self) -> &'static str {
        match self {
            EntropyMode::Normalized => "normalized",
            EntropyMode::Literal => "literal",
        }
    }
}

impl std::str::FromStr for EntropyMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "normalized" => Ok(EntropyMode::Normalized),
            "literal" => Ok(EntropyMode::Literal),
            other => Err(format!("entropy_mode must be `normalized` or `literal`, got `{other}`")),
        }
    }
}

/// All trainable parameters: the encoder bias vectors and the Q-network.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentParams {
    pub encoder: EncoderParams,
    pub qnet: DenseNet,
}

impl AgentParams {
    /// Glorot-initialized Q-network (2d -> hidden -> hidden -> 3) over
    /// zero-initialized bias vectors.
    pub fn new(dim: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        AgentParams {
            encoder: EncoderParams::new(dim),
            qnet: DenseNet::glorot(&[2 * dim, hidden, hidden, 3], rng),
        }
    }

    /// Everything zero, network weights included. Only useful in tests that
    /// need fully predictable Q-values.
    pub fn zeros(dim: usize, hidden: usize) -> Self {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut params = AgentParams::new(dim, hidden, &mut rng);
        let zeros = vec![0.0; params.param_count()];
        params.assign_from_flat(&mut zeros.iter());
        params
    }

    pub fn dim(&self) -> usize {
        self.encoder.dim
    }

    pub fn param_count(&self) -> usize {
        self.encoder.param_count() + self.qnet.param_count()
    }

    /// Flat layout: encoder bias vectors first, then the network layers.
    pub fn flatten_into(&self, out: &mut Vec<f64>) {
        self.encoder.flatten_into(out);
        self.qnet.flatten_into(out);
    }

    pub fn assign_from_flat(&mut self, flat: &mut std::slice::Iter<f64>) {
        self.encoder.assign_from_flat(flat);
        self.qnet.assign_from_flat(flat);
    }

    /// Q-values for the three actions, ordered (Remove, Keep, Replace).
    pub fn q_values(&self, s: &StateVector) -> [f64; 3] {
        let out = self.qnet.forward(&s.concat());
        [out[0], out[1], out[2]]
    }
}

/// Per-step exploration settings. The decay schedule that produces epsilon
/// lives in the trainer; the agent only consumes the current value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExplorationPolicy {
    pub epsilon: f64,
    pub entropy_mode: EntropyMode,
}

impl ExplorationPolicy {
    pub fn greedy() -> Self {
        ExplorationPolicy { epsilon: 0.0, entropy_mode: EntropyMode::Normalized }
    }
}

fn entropy_of(q: &[f64; 3], mode: EntropyMode) -> f64 {
    match mode {
        EntropyMode::Normalized => {
            let max = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = q.iter().map(|v| (v - max).exp()).collect();
            let total: f64 = exps.iter().sum();
            -exps.iter().map(|e| (e / total) * (e / total).ln()).sum::<f64>()
        }
        EntropyMode::Literal => -q
            .iter()
            .map(|v| {
                let c = v.max(LITERAL_ENTROPY_FLOOR);
                c * c.ln()
            })
            .sum::<f64>(),
    }
}

fn greedy_action(q: &[f64; 3]) -> EditAction {
    let mut best = 0;
    for a in 1..3 {
        if q[a] > q[best] {
            best = a;
        }
    }
    EditAction::from_ordinal(best)
}

/// Highest Q-value over all unoperated positions and all actions. Ties fall
/// to the lower action ordinal, then the lower position.
pub fn select_greedy(
    states: &[StateVector],
    operated: &[bool],
    params: &AgentParams,
) -> (usize, EditAction) {
    assert_eq!(states.len(), operated.len());
    let scored: Vec<(usize, [f64; 3])> = (0..states.len())
        .filter(|&i| !operated[i])
        .map(|i| (i, params.q_values(&states[i])))
        .collect();
    assert!(!scored.is_empty(), "every position is already operated");
    let mut best: Option<(usize, EditAction, f64)> = None;
    for action in EditAction::ALL {
        for &(i, q) in &scored {
            let v = q[action.ordinal()];
            if best.map_or(true, |(_, _, bv)| v > bv) {
                best = Some((i, action, v));
            }
        }
    }
    let (i, a, _) = best.unwrap();
    (i, a)
}

/// Epsilon-greedy selection. The epsilon branch splits evenly between a
/// uniformly random (position, action) pair and an entropy-ordered pick:
/// the most uncertain position with its greedy action. Draw order is fixed
/// (branch, sub-branch, position, action) so seeded runs reproduce exactly;
/// epsilon = 0 consumes no randomness at all.
pub fn select_explore(
    states: &[StateVector],
    operated: &[bool],
    params: &AgentParams,
    policy: &ExplorationPolicy,
    rng: &mut impl Rng,
) -> (usize, EditAction) {
    if policy.epsilon <= 0.0 {
        return select_greedy(states, operated, params);
    }
    if rng.gen::<f64>() >= policy.epsilon {
        return select_greedy(states, operated, params);
    }
    let unoperated: Vec<usize> = (0..states.len()).filter(|&i| !operated[i]).collect();
    assert!(!unoperated.is_empty(), "every position is already operated");
    if rng.gen::<f64>() < 0.5 {
        let i = unoperated[rng.gen_range(0..unoperated.len())];
        let a = EditAction::from_ordinal(rng.gen_range(0..3));
        (i, a)
    } else {
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        for &i in &unoperated {
            let q = params.q_values(&states[i]);
            let h = entropy_of(&q, policy.entropy_mode);
            if best.map_or(true, |(_, _, bh)| h > bh) {
                best = Some((i, q, h));
            }
        }
        let (i, q, _) = best.unwrap();
        (i, greedy_action(&q))
    }
}

/// One executed step as recorded in a trace. The action/status snapshots
/// are taken before the commit so the state the selector saw can be
/// recomputed later under different parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub position: usize,
    pub state: StateVector,
    pub actions_before: Vec<EditAction>,
    pub statuses_before: Vec<bool>,
    pub outcome: StepOutcome,
}

/// A rolled-out episode: the input sentence, its frozen token embeddings,
/// and the per-step records in execution order.
#[derive(Debug, Clone)]
pub struct ActionTrace {
    pub sentence: Sentence,
    pub embeddings: Arc<Vec<Vec<f64>>>,
    pub steps: Vec<StepRecord>,
}

impl ActionTrace {
    /// The state actually selected at step idx+1, or None when step idx is
    /// the trace's last (episode finished or cut at a violation).
    pub fn next_state_of(&self, idx: usize) -> Option<&StateVector> {
        assert!(idx < self.steps.len(), "step {idx} not in trace");
        self.steps.get(idx + 1).map(|s| &s.state)
    }
}

/// Whether a rollout stops at the first constraint violation (training,
/// where later steps are discarded anyway) or always runs all N steps
/// (inference, which inspects every step).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RolloutMode {
    Train,
    Full,
}

fn rollout<L, F>(
    x: &Sentence,
    encoder: &EncoderParams,
    lm: &L,
    cfg: &RewardConfig,
    mode: RolloutMode,
    max_steps: usize,
    mut choose: F,
) -> ActionTrace
where
    L: MaskedLm + ?Sized,
    F: FnMut(&[StateVector], &[bool]) -> (usize, EditAction),
{
    assert!(x.n() >= 1, "cannot roll out an empty sentence");
    let n = x.n();
    let embeddings = Arc::new(token_embedding(x, lm));
    let mut edit = EditState::new(n);
    let mut cache = ConvertCache::new();
    let mut steps = Vec::new();
    let mut prev_len = n;
    for t in 1..=max_steps.min(n) {
        let states = encode_all(&edit, &embeddings, encoder);
        let (position, action) = choose(&states, edit.operated());
        let actions_before = edit.actions().to_vec();
        let statuses_before = edit.operated().to_vec();
        let state = states[position].clone();
        edit.commit(position, action);

        let conv = cache.convert(x, edit.actions(), lm);
        let cr = compression_rate(x, &conv.summary);
        let rr = match cfg.rr_mode {
            RrMode::Exact => reconstruction_rate_exact(x, &conv.reconstruction),
            RrMode::Relaxed => reconstruction_rate_relaxed(x, &conv.skeleton, lm, cfg.rr_topk),
        };
        let tau_t = tau_at(t, n, cfg.tau);
        let rho_t = rho_at(t, n, cfg.rho);
        let cur_len = conv.summary.n();
        let r_sr = step_reward(prev_len, cur_len, rr, tau_t, cfg.step_reward_mode);
        let violated = check_violation(cr, rr, rho_t, tau_t);
        steps.push(StepRecord {
            position,
            state,
            actions_before,
            statuses_before,
            outcome: StepOutcome {
                t,
                action,
                summary: conv.summary.clone(),
                reconstruction: conv.reconstruction.clone(),
                cr,
                rr,
                tau_t,
                rho_t,
                r_sr,
                violated,
            },
        });
        prev_len = cur_len;
        if violated && mode == RolloutMode::Train {
            break;
        }
    }
    ActionTrace { sentence: x.clone(), embeddings, steps }
}

/// Roll out one episode under the given exploration policy.
pub fn run_episode<L: MaskedLm + ?Sized>(
    x: &Sentence,
    params: &AgentParams,
    lm: &L,
    cfg: &RewardConfig,
    policy: &ExplorationPolicy,
    mode: RolloutMode,
    rng: &mut impl Rng,
) -> ActionTrace {
    rollout(x, &params.encoder, lm, cfg, mode, x.n(), |states, operated| {
        select_explore(states, operated, params, policy, rng)
    })
}

/// Roll out a fixed (position, action) script instead of consulting the
/// Q-network. States are still encoded and recorded, so the resulting trace
/// feeds the reward engine exactly like a learned episode.
pub fn run_scripted_episode<L: MaskedLm + ?Sized>(
    x: &Sentence,
    script: &[(usize, EditAction)],
    params: &AgentParams,
    lm: &L,
    cfg: &RewardConfig,
    mode: RolloutMode,
) -> ActionTrace {
    assert!(script.len() <= x.n(), "script longer than the sentence");
    let mut next = 0usize;
    rollout(x, &params.encoder, lm, cfg, mode, script.len(), |_, operated| {
        let (position, action) = script[next];
        next += 1;
        assert!(!operated[position], "script revisits position {position}");
        (position, action)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{tokenize, Vocabulary};
    use crate::encoder::EditAction::{Keep, Remove, Replace};
    use crate::lm::{LmConfig, NGramMaskedLm};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_lm() -> NGramMaskedLm {
        let raw: Vec<Sentence> =
            ["the cat sat on the mat", "the dog sat on the rug", "a cat ran to the mat"]
                .iter()
                .map(|l| tokenize(l))
                .collect();
        let mut vocab = Vocabulary::build(&raw, 1);
        vocab.load_stopwords(None, 0).unwrap();
        let corpus: Vec<Sentence> = raw.iter().map(|s| vocab.annotate(s)).collect();
        NGramMaskedLm::train(&corpus, vocab, &LmConfig { embed_dim: 8, ..LmConfig::default() })
    }

    fn states_of(lm: &NGramMaskedLm, params: &AgentParams, text: &str) -> (Vec<StateVector>, usize) {
        let x = lm.vocab().annotate(&tokenize(text));
        let embeddings = token_embedding(&x, lm);
        let edit = EditState::new(x.n());
        (encode_all(&edit, &embeddings, &params.encoder), x.n())
    }

    #[test]
    fn zero_network_gives_zero_q_and_first_remove() {
        let lm = tiny_lm();
        let params = AgentParams::zeros(8, 4);
        let (states, n) = states_of(&lm, &params, "the cat sat");
        for s in &states {
            assert_eq!(params.q_values(s), [0.0, 0.0, 0.0]);
        }
        let (i, a) = select_greedy(&states, &vec![false; n], &params);
        assert_eq!((i, a), (0, Remove));
    }

    #[test]
    fn greedy_maximizes_over_positions_and_actions() {
        // Cross-check against an exhaustive argmax over all pairs.
        let lm = tiny_lm();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let params = AgentParams::new(8, 6, &mut rng);
        let (states, n) = states_of(&lm, &params, "the cat sat on the mat");
        let operated = vec![false; n];
        let (i, a) = select_greedy(&states, &operated, &params);
        let mut best = f64::NEG_INFINITY;
        let mut arg = None;
        for action in EditAction::ALL {
            for (j, s) in states.iter().enumerate() {
                let v = params.q_values(s)[action.ordinal()];
                if v > best {
                    best = v;
                    arg = Some((j, action));
                }
            }
        }
        assert_eq!(Some((i, a)), arg);
        assert!((params.q_values(&states[i])[a.ordinal()] - best).abs() < 1e-15);
    }

    #[test]
    fn greedy_skips_operated_positions() {
        let lm = tiny_lm();
        let params = AgentParams::zeros(8, 4);
        let (states, n) = states_of(&lm, &params, "the cat sat");
        let mut operated = vec![false; n];
        operated[0] = true;
        let (i, a) = select_greedy(&states, &operated, &params);
        assert_eq!((i, a), (1, Remove));
    }

    #[test]
    #[should_panic(expected = "already operated")]
    fn greedy_panics_when_episode_is_finished() {
        let lm = tiny_lm();
        let params = AgentParams::zeros(8, 4);
        let (states, n) = states_of(&lm, &params, "the cat sat");
        select_greedy(&states, &vec![true; n], &params);
    }

    #[test]
    fn explore_with_zero_epsilon_is_greedy_and_draws_nothing() {
        let lm = tiny_lm();
        let mut rng_a = ChaCha8Rng::seed_from_u64(3);
        let mut rng_b = ChaCha8Rng::seed_from_u64(3);
        let params = AgentParams::new(8, 6, &mut ChaCha8Rng::seed_from_u64(1));
        let (states, n) = states_of(&lm, &params, "the cat sat on the mat");
        let operated = vec![false; n];
        let policy = ExplorationPolicy::greedy();
        let pick = select_explore(&states, &operated, &params, &policy, &mut rng_a);
        assert_eq!(pick, select_greedy(&states, &operated, &params));
        // the stream was not consumed
        assert_eq!(rng_a.gen::<u64>(), rng_b.gen::<u64>());
    }

    #[test]
    fn explore_is_reproducible_under_a_seed() {
        let lm = tiny_lm();
        let params = AgentParams::new(8, 6, &mut ChaCha8Rng::seed_from_u64(1));
        let (states, n) = states_of(&lm, &params, "the cat sat on the mat");
        let operated = vec![false; n];
        let policy = ExplorationPolicy { epsilon: 1.0, entropy_mode: EntropyMode::Normalized };
        let picks: Vec<(usize, EditAction)> = (0..2)
            .map(|_| {
                let mut rng = ChaCha8Rng::seed_from_u64(42);
                select_explore(&states, &operated, &params, &policy, &mut rng)
            })
            .collect();
        assert_eq!(picks[0], picks[1]);
    }

    #[test]
    fn entropy_branch_prefers_the_most_uncertain_state() {
        // Literal mode lets us pin entropies by hand: q = (1,0,0) clamps to
        // near-zero entropy contributions except the 1*ln(1) = 0 term, while
        // q = (1/3,...) gives -3*(1/3)ln(1/3) = ln 3 > 0.
        let uniform = [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0];
        let degenerate = [1.0, 0.0, 0.0];
        let h_u = entropy_of(&uniform, EntropyMode::Literal);
        let h_d = entropy_of(&degenerate, EntropyMode::Literal);
        assert!(h_u > h_d);
        assert!((h_u - 3.0f64.ln()).abs() < 1e-9);
        // Normalized mode: adding a constant to all Q-values changes nothing.
        let shifted = [5.0, 5.0, 5.0];
        let base = [0.0, 0.0, 0.0];
        let diff = entropy_of(&shifted, EntropyMode::Normalized)
            - entropy_of(&base, EntropyMode::Normalized);
        assert!(diff.abs() < 1e-12);
        assert!((entropy_of(&base, EntropyMode::Normalized) - 3.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn scripted_episode_follows_the_script_and_records_outcomes() {
        let lm = tiny_lm();
        let params = AgentParams::zeros(8, 4);
        let x = lm.vocab().annotate(&tokenize("the cat sat on the mat"));
        let script = [(0, Remove), (4, Remove), (1, Keep)];
        let cfg = RewardConfig { rr_mode: RrMode::Exact, ..RewardConfig::default() };
        let trace = run_scripted_episode(&x, &script, &params, &lm, &cfg, RolloutMode::Full);
        assert_eq!(trace.steps.len(), 3);
        assert_eq!(trace.steps[0].position, 0);
        assert_eq!(trace.steps[1].position, 4);
        assert_eq!(trace.steps[2].outcome.action, Keep);
        // summary shrinks by one word per Remove
        assert_eq!(trace.steps[0].outcome.summary.n(), 5);
        assert_eq!(trace.steps[1].outcome.summary.n(), 4);
        assert_eq!(trace.steps[2].outcome.summary.n(), 4);
        // snapshots reflect the pre-commit state of each step
        assert!(trace.steps[0].statuses_before.iter().all(|&u| !u));
        assert!(trace.steps[1].statuses_before[0]);
        assert_eq!(trace.steps[1].actions_before[0], Remove);
        assert_eq!(trace.next_state_of(2), None);
        assert_eq!(trace.next_state_of(0), Some(&trace.steps[1].state));
    }

    #[test]
    fn greedy_episode_operates_each_word_exactly_once() {
        let lm = tiny_lm();
        let params = AgentParams::new(8, 6, &mut ChaCha8Rng::seed_from_u64(5));
        let x = lm.vocab().annotate(&tokenize("a cat ran to the mat"));
        let cfg = RewardConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let trace = run_episode(
            &x,
            &params,
            &lm,
            &cfg,
            &ExplorationPolicy::greedy(),
            RolloutMode::Full,
            &mut rng,
        );
        assert_eq!(trace.steps.len(), x.n());
        let mut seen: Vec<usize> = trace.steps.iter().map(|s| s.position).collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..x.n()).collect::<Vec<_>>());
        for (idx, step) in trace.steps.iter().enumerate() {
            assert_eq!(step.outcome.t, idx + 1);
        }
    }

    #[test]
    fn greedy_episode_is_deterministic() {
        let lm = tiny_lm();
        let params = AgentParams::new(8, 6, &mut ChaCha8Rng::seed_from_u64(5));
        let x = lm.vocab().annotate(&tokenize("the dog sat on the rug"));
        let cfg = RewardConfig::default();
        let run = |seed: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            run_episode(
                &x,
                &params,
                &lm,
                &cfg,
                &ExplorationPolicy::greedy(),
                RolloutMode::Full,
                &mut rng,
            )
        };
        let a = run(1);
        let b = run(999);
        assert_eq!(a.steps, b.steps);
    }

    #[test]
    fn train_mode_stops_at_the_first_violation() {
        let lm = tiny_lm();
        let params = AgentParams::zeros(8, 4);
        let x = lm.vocab().annotate(&tokenize("the cat sat on the mat"));
        // all-Keep script: cr stays 0, which violates rho at step 1
        let script: Vec<(usize, EditAction)> = (0..x.n()).map(|i| (i, Keep)).collect();
        let cfg = RewardConfig::default();
        let trace = run_scripted_episode(&x, &script, &params, &lm, &cfg, RolloutMode::Train);
        assert_eq!(trace.steps.len(), 1);
        assert!(trace.steps[0].outcome.violated);
        let full = run_scripted_episode(&x, &script, &params, &lm, &cfg, RolloutMode::Full);
        assert_eq!(full.steps.len(), x.n());
    }

    #[test]
    fn replace_regenerates_a_word_in_the_summary() {
        let lm = tiny_lm();
        let params = AgentParams::zeros(8, 4);
        let x = lm.vocab().annotate(&tokenize("the cat sat on the mat"));
        let cfg = RewardConfig { rr_mode: RrMode::Exact, ..RewardConfig::default() };
        let trace =
            run_scripted_episode(&x, &[(1, Replace)], &params, &lm, &cfg, RolloutMode::Full);
        assert_eq!(trace.steps[0].outcome.summary.n(), x.n());
    }
}
