//! DQN training: replay buffer, TD targets against a periodically synced
//! target network, batched updates with Adam, the epsilon decay schedule,
//! and reward-based model selection.
//!
//! Parameter updates backpropagate through both the Q-network and the
//! encoder bias vectors. States are recomputed at update time from each
//! experience's cached (embeddings, actions, statuses) snapshot so the bias
//! gradients are taken at the current parameter values; the TD target uses
//! the stored next state with the current target network.

mod io;

use std::collections::VecDeque;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::agent::{run_episode, AgentParams, EntropyMode, ExplorationPolicy, RolloutMode};
use crate::corpus::Sentence;
use crate::encoder::{
    global_encoding, global_encoding_backward, local_encoding, EditAction, EncoderParams,
    StateVector,
};
use crate::error::{Error, Result};
use crate::lm::MaskedLm;
use crate::numerics::{clip_global_norm, AdamState, NetGrads};
use crate::reward::{score_episode, RewardConfig};

/// Everything needed to re-encode an experience's state under the current
/// encoder parameters: the episode's frozen embeddings plus the action and
/// status snapshots as they stood when the state was selected.
#[derive(Debug, Clone)]
pub struct ExpContext {
    pub embeddings: Arc<Vec<Vec<f64>>>,
    pub actions: Vec<EditAction>,
    pub statuses: Vec<bool>,
    pub position: usize,
    pub episode: u64,
}

/// One replay transition.
#[derive(Debug, Clone)]
pub struct Experience {
    pub state: StateVector,
    pub action: EditAction,
    pub reward: f64,
    /// None marks a terminal transition (episode end or violation cutoff).
    pub next_state: Option<StateVector>,
    pub context: ExpContext,
}

/// Fixed-capacity FIFO replay buffer.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    items: VecDeque<Experience>,
    capacity: usize,
    inserted: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "buffer capacity must be at least 1");
        ReplayBuffer { items: VecDeque::with_capacity(capacity), capacity, inserted: 0 }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Total experiences ever pushed, including evicted ones.
    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    pub fn iter(&self) -> impl Iterator<Item = &Experience> {
        self.items.iter()
    }

    pub fn push(&mut self, exp: Experience) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(exp);
        self.inserted += 1;
    }

    pub fn push_episode(&mut self, exps: Vec<Experience>) {
        for e in exps {
            self.push(e);
        }
    }

    pub fn mean_reward(&self) -> f64 {
        assert!(!self.is_empty(), "mean reward of an empty buffer");
        self.items.iter().map(|e| e.reward).sum::<f64>() / self.items.len() as f64
    }

    /// Uniform batch: without replacement when the buffer holds at least
    /// `batch_size` experiences, with replacement otherwise.
    pub fn sample_batch(&self, batch_size: usize, rng: &mut impl Rng) -> Vec<&Experience> {
        assert!(batch_size >= 1, "batch size must be at least 1");
        assert!(!self.is_empty(), "cannot sample from an empty buffer");
        let n = self.items.len();
        if n >= batch_size {
            let mut indices: Vec<usize> = (0..n).collect();
            for k in 0..batch_size {
                let j = rng.gen_range(k..n);
                indices.swap(k, j);
            }
            indices[..batch_size].iter().map(|&i| &self.items[i]).collect()
        } else {
            (0..batch_size).map(|_| &self.items[rng.gen_range(0..n)]).collect()
        }
    }
}

/// Multiplicative epsilon decay applied every fixed number of updates,
/// bounded below by a floor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub decay: f64,
    pub every: usize,
    pub floor: f64,
}

impl EpsilonSchedule {
    pub fn epsilon_at(&self, update_count: u64) -> f64 {
        let applications = update_count / self.every as u64;
        let eps = self.start * self.decay.powi(applications.min(i32::MAX as u64) as i32);
        eps.max(self.floor)
    }
}

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainerConfig {
    pub gamma: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub learning_rate: f64,
    pub clip_norm: f64,
    /// Hard target-network sync cadence, in updates.
    pub target_sync: usize,
    /// Model-selection checkpoint cadence, in updates.
    pub checkpoint_every: usize,
    pub epsilon_start: f64,
    pub epsilon_decay: f64,
    pub epsilon_decay_every: usize,
    pub epsilon_floor: f64,
    pub episodes: u64,
    /// Width of the two hidden Q-network layers.
    pub hidden: usize,
    pub seed: u64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            gamma: 0.995,
            batch_size: 128,
            buffer_capacity: 2000,
            learning_rate: 0.001,
            clip_norm: 1.0,
            target_sync: 100,
            checkpoint_every: 100,
            epsilon_start: 0.9,
            epsilon_decay: 0.995,
            epsilon_decay_every: 100,
            epsilon_floor: 0.03,
            episodes: 2000,
            hidden: 200,
            seed: 0,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(format!("gamma must lie in [0, 1], got {}", self.gamma));
        }
        if self.batch_size == 0 {
            return Err("batch_size must be at least 1".into());
        }
        if self.buffer_capacity == 0 {
            return Err("buffer_capacity must be at least 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(self.clip_norm > 0.0 && self.clip_norm.is_finite()) {
            return Err(format!("clip_norm must be positive, got {}", self.clip_norm));
        }
        if self.target_sync == 0 || self.checkpoint_every == 0 || self.epsilon_decay_every == 0 {
            return Err("update cadences must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.epsilon_start) {
            return Err(format!("epsilon_start must lie in [0, 1], got {}", self.epsilon_start));
        }
        if !(0.0..=1.0).contains(&self.epsilon_decay) {
            return Err(format!("epsilon_decay must lie in [0, 1], got {}", self.epsilon_decay));
        }
        if !(0.0..=self.epsilon_start).contains(&self.epsilon_floor) {
            return Err(format!(
                "epsilon_floor must lie in [0, epsilon_start], got {}",
                self.epsilon_floor
            ));
        }
        if self.episodes == 0 {
            return Err("episodes must be at least 1".into());
        }
        if self.hidden == 0 {
            return Err("hidden must be at least 1".into());
        }
        Ok(())
    }

    pub fn schedule(&self) -> EpsilonSchedule {
        EpsilonSchedule {
            start: self.epsilon_start,
            decay: self.epsilon_decay,
            every: self.epsilon_decay_every,
            floor: self.epsilon_floor,
        }
    }
}

/// TD target: r for terminal transitions, else r + gamma * max over the
/// target network's Q-values at the stored next state.
pub fn td_target(exp: &Experience, target: &AgentParams, gamma: f64) -> f64 {
    match &exp.next_state {
        None => exp.reward,
        Some(s) => {
            let q = target.q_values(s);
            exp.reward + gamma * q.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        }
    }
}

fn rebuild_locals(params: &EncoderParams, ctx: &ExpContext) -> Vec<Vec<f64>> {
    ctx.embeddings
        .iter()
        .zip(ctx.actions.iter().zip(&ctx.statuses))
        .map(|(e, (&a, &u))| local_encoding(e, a, u, params))
        .collect()
}

/// Mean squared TD error over a batch and its gradient in the flat
/// (encoder, network) parameter layout. Targets are detached: no gradient
/// flows through the target network.
pub fn compute_loss_and_grads(
    params: &AgentParams,
    target: &AgentParams,
    batch: &[&Experience],
    gamma: f64,
) -> (f64, Vec<f64>) {
    assert!(!batch.is_empty(), "batch must be non-empty");
    let dim = params.dim();
    let mut enc_grads = EncoderParams::new(dim);
    let mut net_grads = NetGrads::zeros_like(&params.qnet);
    let mut loss = 0.0;
    let inv = 1.0 / batch.len() as f64;
    for exp in batch {
        let ctx = &exp.context;
        let locals = rebuild_locals(&params.encoder, ctx);
        let g = global_encoding(ctx.position, &locals);
        let mut input = Vec::with_capacity(2 * dim);
        input.extend_from_slice(&locals[ctx.position]);
        input.extend_from_slice(&g);

        let trace = params.qnet.forward_trace(&input);
        let q = trace.output(&params.qnet);
        let psi = td_target(exp, target, gamma);
        let diff = q[exp.action.ordinal()] - psi;
        loss += diff * diff * inv;

        let mut out_grad = vec![0.0; q.len()];
        out_grad[exp.action.ordinal()] = 2.0 * diff * inv;
        let input_grad = params.qnet.backward(&trace, &out_grad, &mut net_grads);

        // Split the input gradient back into the state's two halves and
        // push them through the encoder.
        let mut dl: Vec<Vec<f64>> = vec![vec![0.0; dim]; locals.len()];
        for (dst, src) in dl[ctx.position].iter_mut().zip(&input_grad[..dim]) {
            *dst += src;
        }
        global_encoding_backward(ctx.position, &locals, &input_grad[dim..], &mut dl);
        for (j, dlj) in dl.iter().enumerate() {
            let ab = &mut enc_grads.action_bias[ctx.actions[j].ordinal()];
            let sb = &mut enc_grads.status_bias[ctx.statuses[j] as usize];
            for (k, d) in dlj.iter().enumerate() {
                ab[k] += d;
                sb[k] += d;
            }
        }
    }
    let mut flat = Vec::with_capacity(params.param_count());
    enc_grads.flatten_into(&mut flat);
    net_grads.flatten_into(&mut flat);
    (loss, flat)
}

/// One DQN update: sample-free (the caller supplies the batch), clip the
/// gradient's global norm, apply one Adam step in place.
pub fn update(
    params: &mut AgentParams,
    target: &AgentParams,
    batch: &[&Experience],
    adam: &mut AdamState,
    gamma: f64,
    clip: f64,
) -> f64 {
    let (loss, mut grads) = compute_loss_and_grads(params, target, batch, gamma);
    clip_global_norm(&mut grads, clip);
    let mut flat = Vec::with_capacity(params.param_count());
    params.flatten_into(&mut flat);
    adam.step(&mut flat, &grads);
    params.assign_from_flat(&mut flat.iter());
    loss
}

/// Hard copy of the online parameters into the target network.
pub fn sync_target(params: &AgentParams, target: &mut AgentParams) {
    *target = params.clone();
}

/// Parameters snapshotted for model selection, with the replay buffer's
/// mean reward at snapshot time.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub update_index: u64,
    pub mean_reward: f64,
    pub params: AgentParams,
}

/// The checkpoint with the highest mean buffer reward; ties go to the
/// earliest.
pub fn select_model(checkpoints: &[Checkpoint]) -> &Checkpoint {
    assert!(!checkpoints.is_empty(), "no checkpoints recorded");
    let mut best = &checkpoints[0];
    for c in &checkpoints[1..] {
        if c.mean_reward > best.mean_reward {
            best = c;
        }
    }
    best
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateRecord {
    pub update_index: u64,
    pub loss: f64,
    pub epsilon: f64,
    pub buffer_mean_reward: f64,
}

/// Structured training history: every update plus the checkpoint metadata
/// used for model selection.
#[derive(Debug, Clone, Default)]
pub struct TrainingLog {
    pub updates: Vec<UpdateRecord>,
    pub checkpoints: Vec<(u64, f64)>,
}

impl TrainingLog {
    /// Plain-text rendering, one record per line.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for u in &self.updates {
            out.push_str(&format!(
                "update={} loss={} epsilon={} buffer_mean_reward={}\n",
                u.update_index, u.loss, u.epsilon, u.buffer_mean_reward
            ));
        }
        for (idx, reward) in &self.checkpoints {
            out.push_str(&format!("checkpoint={idx} mean_reward={reward}\n"));
        }
        out
    }
}

/// A finished training run: the selected parameters, the parameters as of
/// the last update, the update index the selection came from, and the log.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: AgentParams,
    pub final_params: AgentParams,
    pub selected_update: u64,
    pub log: TrainingLog,
}

/// The full training loop. Sentences are drawn by cycling through seeded
/// shuffles of the corpus; each episode contributes its experiences and is
/// followed by exactly one batched update. Returns the checkpoint with the
/// best mean buffer reward.
pub fn train<L: MaskedLm + ?Sized>(
    corpus: &[Sentence],
    lm: &L,
    reward_cfg: &RewardConfig,
    cfg: &TrainerConfig,
    entropy_mode: EntropyMode,
    mut on_progress: impl FnMut(&UpdateRecord),
) -> Result<TrainOutcome> {
    cfg.validate().map_err(Error::Config)?;
    reward_cfg.validate().map_err(Error::Config)?;
    if corpus.is_empty() {
        return Err(Error::Invalid("training corpus is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = AgentParams::new(lm.embed_dim(), cfg.hidden, &mut rng);
    let mut target = params.clone();
    let mut adam = AdamState::new(params.param_count(), cfg.learning_rate);
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity);
    let schedule = cfg.schedule();
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut log = TrainingLog::default();
    let mut checkpoints: Vec<Checkpoint> = Vec::new();
    let mut update_count: u64 = 0;

    for episode in 0..cfg.episodes {
        let slot = (episode % corpus.len() as u64) as usize;
        if slot == 0 {
            order.shuffle(&mut rng);
        }
        let x = &corpus[order[slot]];
        let policy = ExplorationPolicy {
            epsilon: schedule.epsilon_at(update_count),
            entropy_mode,
        };
        let trace = run_episode(x, &params, lm, reward_cfg, &policy, RolloutMode::Train, &mut rng);
        buffer.push_episode(score_episode(&trace, lm, reward_cfg, episode));

        let batch = buffer.sample_batch(cfg.batch_size, &mut rng);
        let loss = update(&mut params, &target, &batch, &mut adam, cfg.gamma, cfg.clip_norm);
        drop(batch);
        update_count += 1;
        let record = UpdateRecord {
            update_index: update_count,
            loss,
            epsilon: policy.epsilon,
            buffer_mean_reward: buffer.mean_reward(),
        };
        on_progress(&record);
        log.updates.push(record);
        if update_count % cfg.target_sync as u64 == 0 {
            sync_target(&params, &mut target);
        }
        if update_count % cfg.checkpoint_every as u64 == 0 {
            let mean = buffer.mean_reward();
            checkpoints.push(Checkpoint { update_index: update_count, mean_reward: mean, params: params.clone() });
            log.checkpoints.push((update_count, mean));
        }
    }
    if checkpoints.last().map_or(true, |c| c.update_index != update_count) {
        let mean = buffer.mean_reward();
        checkpoints.push(Checkpoint { update_index: update_count, mean_reward: mean, params: params.clone() });
        log.checkpoints.push((update_count, mean));
    }
    let selected = select_model(&checkpoints);
    Ok(TrainOutcome {
        params: selected.params.clone(),
        selected_update: selected.update_index,
        final_params: params,
        log,
    })
}

pub use io::{load_agent, save_agent, AGENT_MAGIC};
