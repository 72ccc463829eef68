//! Corpus handling: whitespace tokenization, vocabulary construction, and
//! the stopword set used by the relaxed reconstruction rate.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Vocabulary id reserved for out-of-vocabulary words.
pub const UNKNOWN_ID: u32 = 0;
/// Vocabulary id reserved for the prefix/body separator used by the LM.
pub const SEP_ID: u32 = 1;

pub const UNKNOWN_SURFACE: &str = "<unk>";
pub const SEP_SURFACE: &str = "<sep>";

/// One surface token. `vocab_id` 0 marks an out-of-vocabulary word.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub surface: String,
    pub vocab_id: u32,
    pub is_stopword: bool,
}

impl Token {
    pub fn new(surface: impl Into<String>, vocab_id: u32, is_stopword: bool) -> Self {
        let surface = surface.into();
        assert!(
            !surface.is_empty() && !surface.chars().any(char::is_whitespace),
            "token surface must be non-empty and whitespace-free"
        );
        Token { surface, vocab_id, is_stopword }
    }

    pub fn is_unknown(&self) -> bool {
        self.vocab_id == UNKNOWN_ID
    }
}

/// An immutable tokenized sentence.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Sentence {
    tokens: Vec<Token>,
}

impl Sentence {
    pub fn new(tokens: Vec<Token>) -> Self {
        Sentence { tokens }
    }

    /// Unannotated sentence from raw surfaces; handy in tests.
    pub fn from_surfaces<S: AsRef<str>>(surfaces: &[S]) -> Self {
        Sentence {
            tokens: surfaces
                .iter()
                .map(|s| Token::new(s.as_ref(), UNKNOWN_ID, false))
                .collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn surfaces(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.surface.as_str()).collect()
    }

    /// Space-joined surface form.
    pub fn text(&self) -> String {
        self.surfaces().join(" ")
    }
}

/// Splits a line on Unicode whitespace. Empty and all-whitespace lines yield
/// an empty sentence; callers that require content filter those out.
pub fn tokenize(line: &str) -> Sentence {
    Sentence {
        tokens: line
            .split_whitespace()
            .map(|s| Token::new(s, UNKNOWN_ID, false))
            .collect(),
    }
}

/// Word list with dense ids, frequency counts, and the stopword set.
///
/// Ids 0 and 1 are reserved (unknown word, prefix separator); real words
/// start at 2 and are assigned in first-appearance order, which makes two
/// builds over the same corpus identical.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    word_to_id: HashMap<String, u32>,
    id_to_word: Vec<String>,
    freq: Vec<u32>,
    stopwords: HashSet<String>,
    rare_cutoff: u32,
}

impl Vocabulary {
    /// Builds a vocabulary from every token with corpus frequency >= `min_freq`.
    pub fn build(corpus: &[Sentence], min_freq: u32) -> Self {
        let mut counts: HashMap<&str, u32> = HashMap::new();
        let mut order: Vec<&str> = Vec::new();
        for sentence in corpus {
            for token in sentence.tokens() {
                let entry = counts.entry(token.surface.as_str()).or_insert(0);
                if *entry == 0 {
                    order.push(token.surface.as_str());
                }
                *entry += 1;
            }
        }

        let mut id_to_word = vec![UNKNOWN_SURFACE.to_string(), SEP_SURFACE.to_string()];
        let mut freq = vec![0u32, 0u32];
        let mut word_to_id = HashMap::new();
        for surface in order {
            let count = counts[surface];
            if count >= min_freq && surface != UNKNOWN_SURFACE && surface != SEP_SURFACE {
                let id = id_to_word.len() as u32;
                word_to_id.insert(surface.to_string(), id);
                id_to_word.push(surface.to_string());
                freq.push(count);
            }
        }

        Vocabulary { word_to_id, id_to_word, freq, stopwords: HashSet::new(), rare_cutoff: 0 }
    }

    /// Reassembles a vocabulary from serialized parts. Entries must start at
    /// id 2 and be in id order; the two reserved entries are implicit.
    pub fn from_parts(entries: Vec<(String, u32, bool)>, rare_cutoff: u32) -> Self {
        let mut id_to_word = vec![UNKNOWN_SURFACE.to_string(), SEP_SURFACE.to_string()];
        let mut freq = vec![0u32, 0u32];
        let mut word_to_id = HashMap::new();
        let mut stopwords = HashSet::new();
        for (surface, count, stop) in entries {
            let id = id_to_word.len() as u32;
            word_to_id.insert(surface.clone(), id);
            if stop {
                stopwords.insert(surface.clone());
            }
            id_to_word.push(surface);
            freq.push(count);
        }
        Vocabulary { word_to_id, id_to_word, freq, stopwords, rare_cutoff }
    }

    /// Total number of ids, reserved entries included.
    pub fn size(&self) -> usize {
        self.id_to_word.len()
    }

    /// Ids eligible as LM predictions: everything except unknown and separator.
    pub fn predictable_ids(&self) -> impl Iterator<Item = u32> + '_ {
        2..self.id_to_word.len() as u32
    }

    pub fn predictable_count(&self) -> usize {
        self.id_to_word.len().saturating_sub(2)
    }

    pub fn id_of(&self, surface: &str) -> u32 {
        if surface == SEP_SURFACE {
            return SEP_ID;
        }
        self.word_to_id.get(surface).copied().unwrap_or(UNKNOWN_ID)
    }

    pub fn surface_of(&self, id: u32) -> &str {
        &self.id_to_word[id as usize]
    }

    pub fn freq_of_id(&self, id: u32) -> u32 {
        self.freq[id as usize]
    }

    pub fn rare_cutoff(&self) -> u32 {
        self.rare_cutoff
    }

    pub fn stopword_surfaces(&self) -> &HashSet<String> {
        &self.stopwords
    }

    /// Stopword test for arbitrary surfaces. Known words consult the
    /// materialized set; unseen words count as rare whenever a rare-word
    /// cutoff is active, since their corpus frequency is below any cutoff.
    pub fn is_stopword(&self, surface: &str) -> bool {
        if self.stopwords.contains(surface) {
            return true;
        }
        let id = self.id_of(surface);
        if id == UNKNOWN_ID {
            self.rare_cutoff > 0
        } else {
            false
        }
    }

    /// Installs the stopword set: the union of an optional word list file
    /// (one word per line) and every known word with frequency below
    /// `rare_cutoff`. With `rare_cutoff` 0 only the listed words count.
    pub fn load_stopwords(&mut self, path: Option<&Path>, rare_cutoff: u32) -> Result<()> {
        let mut set = HashSet::new();
        if let Some(path) = path {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            for line in text.lines() {
                let word = line.trim();
                if !word.is_empty() {
                    set.insert(word.to_string());
                }
            }
        }
        for id in self.predictable_ids() {
            if self.freq[id as usize] < rare_cutoff {
                set.insert(self.id_to_word[id as usize].clone());
            }
        }
        self.stopwords = set;
        self.rare_cutoff = rare_cutoff;
        Ok(())
    }

    /// Returns a copy of `sentence` with vocabulary ids and stopword flags
    /// filled in.
    pub fn annotate(&self, sentence: &Sentence) -> Sentence {
        Sentence {
            tokens: sentence
                .tokens()
                .iter()
                .map(|t| {
                    Token::new(t.surface.clone(), self.id_of(&t.surface), self.is_stopword(&t.surface))
                })
                .collect(),
        }
    }
}

/// Loads a training corpus: one sentence per line, empty lines and sentences
/// of `max_len` or more tokens dropped, order shuffled by `seed`, then the
/// first `sample_size` sentences taken. When fewer sentences are eligible
/// than requested, all of them are returned and a warning is logged.
pub fn load_corpus(path: &Path, max_len: usize, sample_size: usize, seed: u64) -> Result<Vec<Sentence>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut sentences: Vec<Sentence> = text
        .lines()
        .map(tokenize)
        .filter(|s| !s.is_empty() && s.n() < max_len)
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sentences.shuffle(&mut rng);
    if sentences.len() > sample_size {
        sentences.truncate(sample_size);
    } else if sentences.len() < sample_size {
        log::debug!(
            "{}: only {} eligible sentences (requested {})",
            path.display(),
            sentences.len(),
            sample_size
        );
    }
    Ok(sentences)
}
