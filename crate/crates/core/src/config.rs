//! Run configuration: every tunable of the pipeline as a flat set of
//! `key=value` pairs with documented defaults.
//!
//! Config files are plain text, one pair per line, `#` starting a comment
//! line. Values parse into the typed sub-configs; unknown keys and
//! out-of-range values are rejected by name. The fully resolved
//! configuration can be rendered back out, and parsing that rendering
//! reproduces the configuration exactly.

use std::fs;
use std::path::Path;

use crate::agent::EntropyMode;
use crate::corpus;
use crate::error::{Error, Result};
use crate::lm::LmConfig;
use crate::reward::RewardConfig;
use crate::trainer::TrainerConfig;

/// Corpus sampling and vocabulary settings.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusConfig {
    /// Keep only sentences shorter than this many words.
    pub max_len: usize,
    /// Random sample size drawn from the eligible sentences.
    pub sample_size: usize,
    /// Words seen fewer times than this become the unknown word.
    pub min_freq: u32,
    /// Words seen fewer times than this count as stopwords.
    pub rare_cutoff: u32,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig { max_len: 50, sample_size: 30000, min_freq: 1, rare_cutoff: 3 }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.max_len < 2 {
            return Err(format!("max_len must be at least 2, got {}", self.max_len));
        }
        if self.sample_size == 0 {
            return Err("sample_size must be at least 1".into());
        }
        if self.min_freq == 0 {
            return Err("min_freq must be at least 1".into());
        }
        Ok(())
    }

    /// Convenience wrapper over the corpus loader with this config's
    /// filtering parameters.
    pub fn load(&self, path: &Path, seed: u64) -> Result<Vec<crate::corpus::Sentence>> {
        corpus::load_corpus(path, self.max_len, self.sample_size, seed)
    }
}

/// Everything a run can tune, grouped by subsystem.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub corpus: CorpusConfig,
    pub lm: LmConfig,
    pub reward: RewardConfig,
    pub trainer: TrainerConfig,
    pub entropy_mode: EntropyMode,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            corpus: CorpusConfig::default(),
            lm: LmConfig::default(),
            reward: RewardConfig::default(),
            trainer: TrainerConfig::default(),
            entropy_mode: EntropyMode::Normalized,
        }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
    value.parse::<T>().map_err(|_| format!("invalid value `{value}` for key `{key}`"))
}

impl Config {
    /// Sets one key. Unknown keys and unparsable values are reported by
    /// name; range constraints are deferred to [`Config::validate`].
    pub fn apply(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        match key {
            "max_len" => self.corpus.max_len = parse_value(key, value)?,
            "sample_size" => self.corpus.sample_size = parse_value(key, value)?,
            "min_freq" => self.corpus.min_freq = parse_value(key, value)?,
            "rare_cutoff" => self.corpus.rare_cutoff = parse_value(key, value)?,
            "order" => self.lm.order = parse_value(key, value)?,
            "smoothing" => self.lm.smoothing = parse_value(key, value)?,
            "lambda_left" => self.lm.lambda_left = parse_value(key, value)?,
            "lambda_right" => self.lm.lambda_right = parse_value(key, value)?,
            "embed_dim" => self.lm.embed_dim = parse_value(key, value)?,
            "tau" => self.reward.tau = parse_value(key, value)?,
            "rho" => self.reward.rho = parse_value(key, value)?,
            "alpha" => self.reward.alpha = parse_value(key, value)?,
            "beta" => self.reward.beta = parse_value(key, value)?,
            "rr_mode" => self.reward.rr_mode = value.parse()?,
            "rr_topk" => self.reward.rr_topk = parse_value(key, value)?,
            "llh_threshold" => self.reward.llh_threshold = parse_value(key, value)?,
            "llh_mode" => self.reward.llh_mode = value.parse()?,
            "step_reward_mode" => self.reward.step_reward_mode = value.parse()?,
            "entropy_mode" => self.entropy_mode = value.parse()?,
            "gamma" => self.trainer.gamma = parse_value(key, value)?,
            "batch_size" => self.trainer.batch_size = parse_value(key, value)?,
            "buffer_capacity" => self.trainer.buffer_capacity = parse_value(key, value)?,
            "learning_rate" => self.trainer.learning_rate = parse_value(key, value)?,
            "clip_norm" => self.trainer.clip_norm = parse_value(key, value)?,
            "target_sync" => self.trainer.target_sync = parse_value(key, value)?,
            "checkpoint_every" => self.trainer.checkpoint_every = parse_value(key, value)?,
            "epsilon_start" => self.trainer.epsilon_start = parse_value(key, value)?,
            "epsilon_decay" => self.trainer.epsilon_decay = parse_value(key, value)?,
            "epsilon_decay_every" => self.trainer.epsilon_decay_every = parse_value(key, value)?,
            "epsilon_floor" => self.trainer.epsilon_floor = parse_value(key, value)?,
            "episodes" => self.trainer.episodes = parse_value(key, value)?,
            "hidden" => self.trainer.hidden = parse_value(key, value)?,
            "seed" => self.trainer.seed = parse_value(key, value)?,
            _ => return Err(format!("unknown config key `{key}`")),
        }
        Ok(())
    }

    /// Layers a config file over the current values.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::format(path, format!("line {}: expected key=value", idx + 1))
            })?;
            self.apply(key.trim(), value.trim())
                .map_err(|msg| Error::format(path, format!("line {}: {}", idx + 1, msg)))?;
        }
        Ok(())
    }

    /// Defaults overlaid with a config file.
    pub fn load(path: &Path) -> Result<Config> {
        let mut config = Config::default();
        config.apply_file(path)?;
        Ok(config)
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        self.corpus.validate()?;
        self.lm.validate()?;
        self.reward.validate()?;
        self.trainer.validate()?;
        Ok(())
    }

    /// Every key with its current value, in a fixed order.
    pub fn to_key_values(&self) -> Vec<(&'static str, String)> {
        vec![
            ("max_len", self.corpus.max_len.to_string()),
            ("sample_size", self.corpus.sample_size.to_string()),
            ("min_freq", self.corpus.min_freq.to_string()),
            ("rare_cutoff", self.corpus.rare_cutoff.to_string()),
            ("order", self.lm.order.to_string()),
            ("smoothing", format!("{}", self.lm.smoothing)),
            ("lambda_left", format!("{}", self.lm.lambda_left)),
            ("lambda_right", format!("{}", self.lm.lambda_right)),
            ("embed_dim", self.lm.embed_dim.to_string()),
            ("tau", format!("{}", self.reward.tau)),
            ("rho", format!("{}", self.reward.rho)),
            ("alpha", format!("{}", self.reward.alpha)),
            ("beta", format!("{}", self.reward.beta)),
            ("rr_mode", self.reward.rr_mode.as_str().to_string()),
            ("rr_topk", self.reward.rr_topk.to_string()),
            ("llh_threshold", format!("{}", self.reward.llh_threshold)),
            ("llh_mode", self.reward.llh_mode.as_str().to_string()),
            ("step_reward_mode", self.reward.step_reward_mode.as_str().to_string()),
            ("entropy_mode", self.entropy_mode.as_str().to_string()),
            ("gamma", format!("{}", self.trainer.gamma)),
            ("batch_size", self.trainer.batch_size.to_string()),
            ("buffer_capacity", self.trainer.buffer_capacity.to_string()),
            ("learning_rate", format!("{}", self.trainer.learning_rate)),
            ("clip_norm", format!("{}", self.trainer.clip_norm)),
            ("target_sync", self.trainer.target_sync.to_string()),
            ("checkpoint_every", self.trainer.checkpoint_every.to_string()),
            ("epsilon_start", format!("{}", self.trainer.epsilon_start)),
            ("epsilon_decay", format!("{}", self.trainer.epsilon_decay)),
            ("epsilon_decay_every", self.trainer.epsilon_decay_every.to_string()),
            ("epsilon_floor", format!("{}", self.trainer.epsilon_floor)),
            ("episodes", self.trainer.episodes.to_string()),
            ("hidden", self.trainer.hidden.to_string()),
            ("seed", self.trainer.seed.to_string()),
        ]
    }

    /// `key=value` lines for logs and for writing config files.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (key, value) in self.to_key_values() {
            out.push_str(key);
            out.push('=');
            out.push_str(&value);
            out.push('\n');
        }
        out
    }
}
