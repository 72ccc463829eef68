//! On-disk format for the reference LM.
//!
//! A model file is line-oriented plain text with the magic header
//! `EALM-LM1`, followed by the hyperparameters, the vocabulary block, both
//! context-count tables, the anchor word list, and the embedding matrix.
//! Floats are written in shortest round-trip decimal form and every block is
//! emitted in sorted order, so identical models produce identical bytes.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::textio::{Cursor, FieldIter};

use super::ngram::ContextCounts;
use super::{LmConfig, NGramMaskedLm};

pub const LM_MAGIC: &str = "EALM-LM1";

impl NGramMaskedLm {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        out.push_str(LM_MAGIC);
        out.push('\n');
        writeln!(out, "order {}", self.cfg.order).unwrap();
        writeln!(out, "smoothing {}", self.cfg.smoothing).unwrap();
        writeln!(out, "lambda_left {}", self.cfg.lambda_left).unwrap();
        writeln!(out, "lambda_right {}", self.cfg.lambda_right).unwrap();
        writeln!(out, "embed_dim {}", self.cfg.embed_dim).unwrap();
        writeln!(out, "rare_cutoff {}", self.vocab.rare_cutoff()).unwrap();

        writeln!(out, "vocab {}", self.vocab.predictable_count()).unwrap();
        for id in self.vocab.predictable_ids() {
            let surface = self.vocab.surface_of(id);
            let stop = self.vocab.is_stopword(surface);
            writeln!(out, "{surface} {} {}", self.vocab.freq_of_id(id), stop as u8).unwrap();
        }

        write_table(&mut out, "left", &self.left);
        write_table(&mut out, "right", &self.right);

        write!(out, "anchors {}", self.anchors.len()).unwrap();
        for id in &self.anchors {
            write!(out, " {id}").unwrap();
        }
        out.push('\n');

        writeln!(out, "embeddings {}", self.vocab.predictable_count()).unwrap();
        for id in self.vocab.predictable_ids() {
            let row = &self.embeddings[id as usize];
            let mut first = true;
            for x in row {
                if !first {
                    out.push(' ');
                }
                write!(out, "{x}").unwrap();
                first = false;
            }
            out.push('\n');
        }
        out.push_str("end\n");

        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = Cursor::new(path, &text);

        if lines.next_line()? != LM_MAGIC {
            return Err(Error::format(path, format!("missing {LM_MAGIC} header")));
        }
        let order = lines.kv("order")?.parse_field::<usize>("order")?;
        let smoothing = lines.kv("smoothing")?.parse_field::<f64>("smoothing")?;
        let lambda_left = lines.kv("lambda_left")?.parse_field::<f64>("lambda_left")?;
        let lambda_right = lines.kv("lambda_right")?.parse_field::<f64>("lambda_right")?;
        let embed_dim = lines.kv("embed_dim")?.parse_field::<usize>("embed_dim")?;
        let rare_cutoff = lines.kv("rare_cutoff")?.parse_field::<u32>("rare_cutoff")?;
        let cfg = LmConfig { order, smoothing, lambda_left, lambda_right, embed_dim };
        cfg.validate().map_err(|msg| Error::format(path, msg))?;

        let vocab_len = lines.kv("vocab")?.parse_field::<usize>("vocab")?;
        let mut entries = Vec::with_capacity(vocab_len);
        for _ in 0..vocab_len {
            let line = lines.next_line()?;
            let mut parts = line.split(' ');
            let surface = parts.next().unwrap_or_default().to_string();
            let freq = parts.field::<u32>(&lines, "word frequency")?;
            let stop = parts.field::<u8>(&lines, "stopword flag")? != 0;
            if surface.is_empty() || parts.next().is_some() {
                return Err(lines.err("malformed vocabulary entry"));
            }
            entries.push((surface, freq, stop));
        }
        let vocab = Vocabulary::from_parts(entries, rare_cutoff);

        let left = read_table(&mut lines, "left")?;
        let right = read_table(&mut lines, "right")?;

        let line = lines.next_line()?;
        let mut parts = line.split(' ');
        if parts.next() != Some("anchors") {
            return Err(lines.err("expected anchors block"));
        }
        let n_anchors = parts.field::<usize>(&lines, "anchor count")?;
        let mut anchors = Vec::with_capacity(n_anchors);
        for _ in 0..n_anchors {
            anchors.push(parts.field::<u32>(&lines, "anchor id")?);
        }

        let n_rows = lines.kv("embeddings")?.parse_field::<usize>("embeddings")?;
        if n_rows != vocab.predictable_count() {
            return Err(lines.err("embedding row count does not match vocabulary"));
        }
        let mut embeddings = vec![vec![0.0; embed_dim]; vocab.size()];
        for id in 2..vocab.size() {
            let line = lines.next_line()?;
            let mut row = Vec::with_capacity(embed_dim);
            for part in line.split(' ') {
                row.push(
                    part.parse::<f64>()
                        .map_err(|_| lines.err(format!("bad embedding value {part:?}")))?,
                );
            }
            if row.len() != embed_dim {
                return Err(lines.err("embedding row has wrong dimension"));
            }
            embeddings[id] = row;
        }
        if lines.next_line()? != "end" {
            return Err(lines.err("missing end marker"));
        }

        Ok(NGramMaskedLm::from_parts(vocab, cfg, left, right, anchors, embeddings))
    }
}

fn write_table(out: &mut String, name: &str, table: &HashMap<Vec<u32>, ContextCounts>) {
    let mut keys: Vec<&Vec<u32>> = table.keys().collect();
    keys.sort_unstable_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    writeln!(out, "{name} {}", keys.len()).unwrap();
    for key in keys {
        let counts = &table[key];
        write!(out, "{}", key.len()).unwrap();
        for id in key {
            write!(out, " {id}").unwrap();
        }
        let mut pairs: Vec<(u32, u32)> = counts.counts.iter().map(|(&w, &c)| (w, c)).collect();
        pairs.sort_unstable();
        write!(out, " {}", pairs.len()).unwrap();
        for (w, c) in pairs {
            write!(out, " {w} {c}").unwrap();
        }
        out.push('\n');
    }
}

fn read_table(lines: &mut Cursor, name: &str) -> Result<HashMap<Vec<u32>, ContextCounts>> {
    let line = lines.next_line()?;
    let mut parts = line.split(' ');
    if parts.next() != Some(name) {
        return Err(lines.err(format!("expected {name} table")));
    }
    let n = parts.field::<usize>(lines, "table size")?;
    let mut table = HashMap::with_capacity(n);
    for _ in 0..n {
        let line = lines.next_line()?;
        let mut parts = line.split(' ');
        let key_len = parts.field::<usize>(lines, "context length")?;
        let mut key = Vec::with_capacity(key_len);
        for _ in 0..key_len {
            key.push(parts.field::<u32>(lines, "context id")?);
        }
        let pair_count = parts.field::<usize>(lines, "pair count")?;
        let mut counts = ContextCounts::default();
        for _ in 0..pair_count {
            let w = parts.field::<u32>(lines, "word id")?;
            let c = parts.field::<u32>(lines, "count")?;
            counts.counts.insert(w, c);
            counts.total += c as u64;
        }
        if parts.next().is_some() {
            return Err(lines.err("trailing fields on table row"));
        }
        table.insert(key, counts);
    }
    Ok(table)
}
