//! Per-word agent states. Each word gets a local encoding, its frozen
//! embedding plus learnable action and status bias vectors, and a global
//! encoding that mixes all local encodings through ReLU dot-product
//! attention. The concatenation of the two is the Q-network input.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::Sentence;
use crate::lm::{normalize_or_zero, MaskedLm};

/// Attention denominators below this fall back to uniform weights.
const ATTENTION_EPS: f64 = 1e-12;

/// Edit operation on one word. The ordinal order (Remove, Keep, Replace)
/// doubles as the Q-output layout and the tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EditAction {
    Remove,
    Keep,
    Replace,
}

impl EditAction {
    pub const ALL: [EditAction; 3] = [EditAction::Remove, EditAction::Keep, EditAction::Replace];

    pub fn ordinal(self) -> usize {
        match self {
            EditAction::Remove => 0,
            EditAction::Keep => 1,
            EditAction::Replace => 2,
        }
    }

    pub fn from_ordinal(ordinal: usize) -> Self {
        Self::ALL[ordinal]
    }

    pub fn name(self) -> &'static str {
        match self {
            EditAction::Remove => "remove",
            EditAction::Keep => "keep",
            EditAction::Replace => "replace",
        }
    }
}

/// Mutable episode state: the current action of every word plus whether the
/// agent has already operated on it. Words start as Keep/unoperated; each
/// step flips exactly one status to operated.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EditState {
    actions: Vec<EditAction>,
    operated: Vec<bool>,
}

impl EditState {
    pub fn new(n: usize) -> Self {
        assert!(n > 0, "edit state needs at least one word");
        EditState { actions: vec![EditAction::Keep; n], operated: vec![false; n] }
    }

    pub fn n(&self) -> usize {
        self.actions.len()
    }

    pub fn actions(&self) -> &[EditAction] {
        &self.actions
    }

    pub fn operated(&self) -> &[bool] {
        &self.operated
    }

    pub fn step(&self) -> usize {
        self.operated.iter().filter(|&&u| u).count()
    }

    pub fn unoperated_positions(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| !self.operated[i]).collect()
    }

    pub fn finished(&self) -> bool {
        self.operated.iter().all(|&u| u)
    }

    /// Applies one agent decision. Panics when the position was already
    /// operated on; statuses only ever flip once.
    pub fn commit(&mut self, position: usize, action: EditAction) {
        assert!(!self.operated[position], "position {position} already operated");
        self.actions[position] = action;
        self.operated[position] = true;
    }
}

/// Trainable encoder parameters: one bias vector per action and one per
/// operated status, all zero-initialized.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub dim: usize,
    pub action_bias: [Vec<f64>; 3],
    pub status_bias: [Vec<f64>; 2],
}

impl EncoderParams {
    pub fn new(dim: usize) -> Self {
        EncoderParams {
            dim,
            action_bias: [vec![0.0; dim], vec![0.0; dim], vec![0.0; dim]],
            status_bias: [vec![0.0; dim], vec![0.0; dim]],
        }
    }

    pub fn param_count(&self) -> usize {
        5 * self.dim
    }

    pub fn flatten_into(&self, out: &mut Vec<f64>) {
        for v in &self.action_bias {
            out.extend_from_slice(v);
        }
        for v in &self.status_bias {
            out.extend_from_slice(v);
        }
    }

    pub fn assign_from_flat(&mut self, flat: &mut std::slice::Iter<f64>) {
        for v in self.action_bias.iter_mut().chain(self.status_bias.iter_mut()) {
            for x in v.iter_mut() {
                *x = *flat.next().expect("flat parameter vector too short");
            }
        }
    }
}

/// One word's state: local encoding `l`, global encoding `g`. The network
/// input is their concatenation.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub l: Vec<f64>,
    pub g: Vec<f64>,
}

impl StateVector {
    pub fn concat(&self) -> Vec<f64> {
        let mut s = Vec::with_capacity(self.l.len() + self.g.len());
        s.extend_from_slice(&self.l);
        s.extend_from_slice(&self.g);
        s
    }
}

/// Frozen embeddings for every word of a sentence. Known words use the LM's
/// co-occurrence vectors; unknown words get a fixed unit vector derived from
/// a hash of their surface so distinct unknowns stay distinguishable.
pub fn token_embedding<L: MaskedLm + ?Sized>(x: &Sentence, lm: &L) -> Vec<Vec<f64>> {
    x.tokens()
        .iter()
        .map(|t| {
            if t.is_unknown() {
                unknown_vector(&t.surface, lm.embed_dim())
            } else {
                lm.embed_word(t)
            }
        })
        .collect()
}

fn unknown_vector(surface: &str, dim: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(surface.as_bytes()));
    let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    normalize_or_zero(v)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf29ce484222325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// l_i = e_i + action bias + status bias.
pub fn local_encoding(
    embedding: &[f64],
    action: EditAction,
    operated: bool,
    params: &EncoderParams,
) -> Vec<f64> {
    assert_eq!(embedding.len(), params.dim, "embedding dimension mismatch");
    let ab = &params.action_bias[action.ordinal()];
    let sb = &params.status_bias[operated as usize];
    embedding.iter().zip(ab).zip(sb).map(|((e, a), s)| e + a + s).collect()
}

/// Attention weights of position `i` over all locals: ReLU of the dot
/// products, normalized to sum to one; uniform when the normalizer
/// degenerates.
fn attention_weights(i: usize, locals: &[Vec<f64>]) -> Vec<f64> {
    let n = locals.len();
    let scores: Vec<f64> =
        locals.iter().map(|l| dot(&locals[i], l).max(0.0)).collect();
    let denom: f64 = scores.iter().sum();
    if denom < ATTENTION_EPS {
        vec![1.0 / n as f64; n]
    } else {
        scores.iter().map(|s| s / denom).collect()
    }
}

/// g_i: attention-weighted mixture of all local encodings.
pub fn global_encoding(i: usize, locals: &[Vec<f64>]) -> Vec<f64> {
    let weights = attention_weights(i, locals);
    let dim = locals[i].len();
    let mut g = vec![0.0; dim];
    for (w, l) in weights.iter().zip(locals) {
        for (gx, lx) in g.iter_mut().zip(l) {
            *gx += w * lx;
        }
    }
    g
}

/// Backpropagates a gradient on g_i into gradients on every local encoding,
/// accumulating into `dl`. Mirrors `global_encoding` exactly, including the
/// uniform fallback (whose weights are constants).
pub fn global_encoding_backward(i: usize, locals: &[Vec<f64>], dg: &[f64], dl: &mut [Vec<f64>]) {
    let n = locals.len();
    let raw: Vec<f64> = locals.iter().map(|l| dot(&locals[i], l)).collect();
    let relu: Vec<f64> = raw.iter().map(|&d| d.max(0.0)).collect();
    let denom: f64 = relu.iter().sum();
    if denom < ATTENTION_EPS {
        for l in dl.iter_mut() {
            for (dx, gx) in l.iter_mut().zip(dg) {
                *dx += gx / n as f64;
            }
        }
        return;
    }
    let g = global_encoding(i, locals);
    let dg_dot_g = dot(dg, &g);
    for m in 0..n {
        // direct path through the mixture
        let w_m = relu[m] / denom;
        for (dx, gx) in dl[m].iter_mut().zip(dg) {
            *dx += w_m * gx;
        }
        // path through the attention weight of position m
        if raw[m] > 0.0 {
            let dscore = (dot(dg, &locals[m]) - dg_dot_g) / denom;
            for (dx, &lx) in dl[i].iter_mut().zip(&locals[m]) {
                *dx += dscore * lx;
            }
            for (dx, &lx) in dl[m].iter_mut().zip(&locals[i]) {
                *dx += dscore * lx;
            }
        }
    }
}

/// States for every word position under the current edit state. Recomputed
/// from scratch each step; encodings are cheap at these dimensions.
pub fn encode_all(edit: &EditState, embeddings: &[Vec<f64>], params: &EncoderParams) -> Vec<StateVector> {
    assert_eq!(edit.n(), embeddings.len(), "edit state and embeddings disagree on length");
    let locals: Vec<Vec<f64>> = (0..edit.n())
        .map(|i| local_encoding(&embeddings[i], edit.actions()[i], edit.operated()[i], params))
        .collect();
    (0..edit.n())
        .map(|i| StateVector { g: global_encoding(i, &locals), l: locals[i].clone() })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_vectors_are_stable_and_distinct() {
        let a1 = unknown_vector("zyzzyva", 16);
        let a2 = unknown_vector("zyzzyva", 16);
        let b = unknown_vector("quagga", 16);
        assert_eq!(a1, a2);
        assert_ne!(a1, b);
        assert!((crate::lm::l2_norm(&a1) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn local_encoding_is_embedding_plus_biases() {
        let mut params = EncoderParams::new(2);
        let e = vec![0.5, -0.5];
        assert_eq!(local_encoding(&e, EditAction::Keep, false, &params), e);
        params.action_bias[EditAction::Remove.ordinal()] = vec![1.0, 0.0];
        params.status_bias[1] = vec![0.0, 2.0];
        assert_eq!(local_encoding(&e, EditAction::Remove, true, &params), vec![1.5, 1.5]);
    }

    #[test]
    fn single_word_global_equals_local() {
        let locals = vec![vec![0.3, 0.7]];
        assert_eq!(global_encoding(0, &locals), locals[0]);
    }

    #[test]
    fn zero_locals_fall_back_to_uniform() {
        let locals = vec![vec![0.0, 0.0], vec![0.0, 0.0]];
        assert_eq!(global_encoding(0, &locals), vec![0.0, 0.0]);
    }

    #[test]
    fn attention_matches_hand_computation() {
        // l0=(1,0), l1=(1,1), l2=(-1,0); scores for i=0: relu(1)=1,
        // relu(1)=1, relu(-1)=0 -> weights (0.5, 0.5, 0)
        let locals = vec![vec![1.0, 0.0], vec![1.0, 1.0], vec![-1.0, 0.0]];
        let g = global_encoding(0, &locals);
        assert!((g[0] - 1.0).abs() < 1e-12);
        assert!((g[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn attention_weights_sum_to_one() {
        let locals = vec![vec![0.2, -0.1, 0.4], vec![0.9, 0.3, -0.2], vec![0.1, 0.1, 0.1]];
        for i in 0..locals.len() {
            let w = attention_weights(i, &locals);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(w.iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn global_backward_matches_finite_differences() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let n = rng.gen_range(1..5);
            let dim = 3;
            let locals: Vec<Vec<f64>> =
                (0..n).map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
            let cvec: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let i = rng.gen_range(0..n);

            let loss = |ls: &[Vec<f64>]| dot(&cvec, &global_encoding(i, ls));
            let mut dl = vec![vec![0.0; dim]; n];
            global_encoding_backward(i, &locals, &cvec, &mut dl);

            let h = 1e-6;
            for m in 0..n {
                for k in 0..dim {
                    let mut plus = locals.clone();
                    plus[m][k] += h;
                    let mut minus = locals.clone();
                    minus[m][k] -= h;
                    let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
                    assert!(
                        (fd - dl[m][k]).abs() <= 1e-5 * fd.abs().max(dl[m][k].abs()).max(1.0),
                        "l[{m}][{k}]: fd {fd} vs analytic {}",
                        dl[m][k]
                    );
                }
            }
        }
    }

    #[test]
    fn encode_all_concatenates_local_and_global() {
        let params = EncoderParams::new(2);
        let embeddings = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let edit = EditState::new(2);
        let states = encode_all(&edit, &embeddings, &params);
        assert_eq!(states.len(), 2);
        for s in &states {
            let cat = s.concat();
            assert_eq!(cat.len(), 4);
            assert_eq!(&cat[..2], s.l.as_slice());
            assert_eq!(&cat[2..], s.g.as_slice());
        }
        // orthogonal unit locals: attention of i collapses onto itself
        assert_eq!(states[0].g, states[0].l);
    }

    #[test]
    fn edit_state_tracks_steps() {
        let mut edit = EditState::new(3);
        assert_eq!(edit.step(), 0);
        assert!(!edit.finished());
        edit.commit(1, EditAction::Remove);
        assert_eq!(edit.step(), 1);
        assert_eq!(edit.unoperated_positions(), vec![0, 2]);
        assert_eq!(edit.actions()[1], EditAction::Remove);
    }

    #[test]
    #[should_panic(expected = "already operated")]
    fn double_commit_panics() {
        let mut edit = EditState::new(2);
        edit.commit(0, EditAction::Keep);
        edit.commit(0, EditAction::Remove);
    }
}
