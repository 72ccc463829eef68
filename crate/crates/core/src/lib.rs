//! Unsupervised, edit-based sentence summarization.
//!
//! A Q-learning agent assigns one of three edit actions (remove, keep,
//! replace) to every word of a sentence, operating words in its own
//! confidence order. After each action a deterministic masked-LM converter
//! realizes the current summary and a reconstruction of the input from the
//! kept words alone. Training needs no paired data: the reward prefers
//! summaries that are short yet let the converter restore the original
//! sentence, with per-step thresholds that tighten as the episode proceeds
//! and an episode-level bonus for informativeness, brevity, and fluency.
//!
//! The crate ships all pieces of that loop: corpus and vocabulary handling
//! ([`corpus`]), a pluggable masked LM with a self-contained n-gram
//! reference implementation ([`lm`]), the skeleton converter
//! ([`converter`]), state encoding ([`encoder`]), the reward engine
//! ([`reward`]), the agent and DQN trainer ([`agent`], [`trainer`]),
//! greedy inference plus ROUGE-style evaluation ([`infer_eval`]), and flat
//! key=value run configuration ([`config`]). Everything is deterministic
//! under a fixed seed: same inputs, same bytes out.

pub mod agent;
pub mod config;
pub mod converter;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod infer_eval;
pub mod lm;
pub mod numerics;
pub mod reward;
mod textio;
pub mod trainer;

pub use agent::{
    run_episode, run_scripted_episode, select_explore, select_greedy, ActionTrace, AgentParams,
    EntropyMode, ExplorationPolicy, RolloutMode,
};
pub use config::{Config, CorpusConfig};
pub use converter::{compress, make_skeleton, reconstruct, ConvertCache, Skeleton};
pub use corpus::{load_corpus, tokenize, Sentence, Token, Vocabulary};
pub use encoder::{EditAction, EditState, EncoderParams, StateVector};
pub use error::{Error, Result};
pub use infer_eval::{
    byte_cap, count_new_words, evaluate, lead_n, rouge_l, rouge_n, summarize, EvalReport, Rouge,
    SummaryResult,
};
pub use lm::{LlhMode, LmConfig, MaskedLm, NGramMaskedLm};
pub use reward::{score_episode, RewardConfig, RrMode, StepRewardMode};
pub use trainer::{
    load_agent, save_agent, train, Checkpoint, ReplayBuffer, TrainOutcome, TrainerConfig,
    AGENT_MAGIC,
};
