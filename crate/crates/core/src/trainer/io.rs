//! On-disk format for trained agents.
//!
//! An agent file is line-oriented plain text with the magic header
//! `EALM-AG1`: the embedding dimension, the reward settings the agent was
//! trained under, the five encoder bias vectors, and the Q-network layers.
//! Floats use shortest round-trip decimal form, so saving a loaded model
//! reproduces the file byte for byte.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::agent::AgentParams;
use crate::encoder::EncoderParams;
use crate::error::{Error, Result};
use crate::numerics::{Activation, DenseLayer, DenseNet, Matrix};
use crate::reward::RewardConfig;
use crate::textio::{join_floats, parse_floats, Cursor, FieldIter};

pub const AGENT_MAGIC: &str = "EALM-AG1";

fn activation_name(a: Activation) -> &'static str {
    match a {
        Activation::Relu => "relu",
        Activation::Identity => "identity",
    }
}

fn parse_activation(name: &str) -> Option<Activation> {
    match name {
        "relu" => Some(Activation::Relu),
        "identity" => Some(Activation::Identity),
        _ => None,
    }
}

pub fn save_agent(path: &Path, params: &AgentParams, reward: &RewardConfig) -> Result<()> {
    let mut out = String::new();
    out.push_str(AGENT_MAGIC);
    out.push('\n');
    writeln!(out, "dim {}", params.dim()).unwrap();
    writeln!(out, "tau {}", reward.tau).unwrap();
    writeln!(out, "rho {}", reward.rho).unwrap();
    writeln!(out, "alpha {}", reward.alpha).unwrap();
    writeln!(out, "beta {}", reward.beta).unwrap();
    writeln!(out, "rr_mode {}", reward.rr_mode.as_str()).unwrap();
    writeln!(out, "rr_topk {}", reward.rr_topk).unwrap();
    writeln!(out, "llh_threshold {}", reward.llh_threshold).unwrap();
    writeln!(out, "llh_mode {}", reward.llh_mode.as_str()).unwrap();
    writeln!(out, "step_reward_mode {}", reward.step_reward_mode.as_str()).unwrap();

    for bias in &params.encoder.action_bias {
        writeln!(out, "action_bias {}", join_floats(bias)).unwrap();
    }
    for bias in &params.encoder.status_bias {
        writeln!(out, "status_bias {}", join_floats(bias)).unwrap();
    }

    writeln!(out, "layers {}", params.qnet.layers().len()).unwrap();
    for layer in params.qnet.layers() {
        writeln!(
            out,
            "layer {} {} {}",
            layer.weight.rows(),
            layer.weight.cols(),
            activation_name(layer.activation)
        )
        .unwrap();
        for r in 0..layer.weight.rows() {
            let row: Vec<f64> = (0..layer.weight.cols()).map(|c| layer.weight.at(r, c)).collect();
            writeln!(out, "{}", join_floats(&row)).unwrap();
        }
        writeln!(out, "bias {}", join_floats(&layer.bias)).unwrap();
    }
    out.push_str("end\n");
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_agent(path: &Path) -> Result<(AgentParams, RewardConfig)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = Cursor::new(path, &text);
    if lines.next_line()? != AGENT_MAGIC {
        return Err(Error::format(path, format!("missing {AGENT_MAGIC} header")));
    }
    let dim: usize = lines.kv("dim")?.parse_field("dim")?;
    if dim == 0 {
        return Err(Error::format(path, "dim must be at least 1"));
    }
    let reward = RewardConfig {
        tau: lines.kv("tau")?.parse_field("tau")?,
        rho: lines.kv("rho")?.parse_field("rho")?,
        alpha: lines.kv("alpha")?.parse_field("alpha")?,
        beta: lines.kv("beta")?.parse_field("beta")?,
        rr_mode: lines.kv("rr_mode")?.parse_field("rr_mode")?,
        rr_topk: lines.kv("rr_topk")?.parse_field("rr_topk")?,
        llh_threshold: lines.kv("llh_threshold")?.parse_field("llh_threshold")?,
        llh_mode: lines.kv("llh_mode")?.parse_field("llh_mode")?,
        step_reward_mode: lines.kv("step_reward_mode")?.parse_field("step_reward_mode")?,
    };
    reward.validate().map_err(|msg| Error::format(path, msg))?;

    let mut encoder = EncoderParams::new(dim);
    for bias in encoder.action_bias.iter_mut() {
        let line = lines.next_line()?;
        let rest = line
            .strip_prefix("action_bias ")
            .ok_or_else(|| lines.err("expected `action_bias <floats>`"))?;
        *bias = parse_row(&mut lines, rest, dim, "action_bias")?;
    }
    for bias in encoder.status_bias.iter_mut() {
        let line = lines.next_line()?;
        let rest = line
            .strip_prefix("status_bias ")
            .ok_or_else(|| lines.err("expected `status_bias <floats>`"))?;
        *bias = parse_row(&mut lines, rest, dim, "status_bias")?;
    }

    let n_layers: usize = lines.kv("layers")?.parse_field("layers")?;
    if n_layers == 0 {
        return Err(Error::format(path, "network must have at least one layer"));
    }
    let mut layers = Vec::with_capacity(n_layers);
    let mut expected_input = 2 * dim;
    for _ in 0..n_layers {
        let header = lines.next_line()?;
        let mut fields = header.split_whitespace();
        if fields.next() != Some("layer") {
            return Err(lines.err("expected `layer <rows> <cols> <activation>`"));
        }
        let rows: usize = fields.field(&lines, "layer rows")?;
        let cols: usize = fields.field(&lines, "layer cols")?;
        let act_name: String = fields.field(&lines, "layer activation")?;
        let activation = parse_activation(&act_name)
            .ok_or_else(|| lines.err(format!("unknown activation {act_name:?}")))?;
        if cols != expected_input {
            return Err(lines.err(format!("layer expects {cols} inputs, previous layer feeds {expected_input}")));
        }
        let mut weight_rows = Vec::with_capacity(rows);
        for _ in 0..rows {
            weight_rows.push(parse_floats(&mut lines, cols, "weight")?);
        }
        let bias_line = lines.next_line()?;
        let rest = bias_line
            .strip_prefix("bias ")
            .ok_or_else(|| lines.err("expected `bias <floats>`"))?;
        let bias = parse_row(&mut lines, rest, rows, "bias")?;
        layers.push(DenseLayer { weight: Matrix::from_rows(weight_rows), bias, activation });
        expected_input = rows;
    }
    if layers.last().unwrap().weight.rows() != 3 {
        return Err(Error::format(path, "output layer must have exactly 3 units"));
    }
    if lines.next_line()? != "end" {
        return Err(Error::format(path, "missing end marker"));
    }
    let params = AgentParams { encoder, qnet: DenseNet::from_layers(layers) };
    Ok((params, reward))
}

/// Parses `dim` floats from an already-stripped remainder string.
fn parse_row(cursor: &Cursor, rest: &str, dim: usize, what: &str) -> Result<Vec<f64>> {
    let mut fields = rest.split_whitespace();
    let mut row = Vec::with_capacity(dim);
    for _ in 0..dim {
        row.push(fields.field(cursor, what)?);
    }
    if fields.next().is_some() {
        return Err(cursor.err(format!("too many fields in {what} row")));
    }
    Ok(row)
}
