//! Deterministic skeleton-to-sentence conversion. The agent's actions turn
//! the input into a skeleton (kept words plus null slots); the LM then
//! realizes a summary (null slots from Remove vanish, Replace slots are
//! regenerated) and a reconstruction (every null slot regenerated at full
//! length, conditioned on the summary as prefix).

use std::collections::HashMap;
use std::rc::Rc;

use crate::corpus::{Sentence, Token};
use crate::encoder::EditAction;
use crate::lm::{MaskedLm, MaskedSequence, Slot};

/// The kept-word skeleton: one slot per input position, `None` where the
/// word was removed or replaced.
#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton {
    slots: Vec<Option<Token>>,
}

impl Skeleton {
    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn slots(&self) -> &[Option<Token>] {
        &self.slots
    }

    pub fn null_count(&self) -> usize {
        self.slots.iter().filter(|s| s.is_none()).count()
    }

    /// All-mask body for reconstruction-style queries.
    pub fn masked_body(&self) -> Vec<Slot> {
        self.slots
            .iter()
            .map(|s| match s {
                Some(t) => Slot::Word(t.clone()),
                None => Slot::Mask,
            })
            .collect()
    }
}

/// Keeps exactly the Keep positions; Remove and Replace become null slots.
pub fn make_skeleton(x: &Sentence, actions: &[EditAction]) -> Skeleton {
    assert_eq!(x.n(), actions.len(), "actions must cover every input word");
    Skeleton {
        slots: x
            .tokens()
            .iter()
            .zip(actions)
            .map(|(t, a)| (*a == EditAction::Keep).then(|| t.clone()))
            .collect(),
    }
}

/// Realizes the summary: Remove positions are dropped, Replace positions
/// are masked and regenerated with the full input as prefix. Pure deletions
/// need no LM call; removing everything yields the empty sentence.
pub fn compress<L: MaskedLm + ?Sized>(x: &Sentence, actions: &[EditAction], lm: &L) -> Sentence {
    assert_eq!(x.n(), actions.len(), "actions must cover every input word");
    let body: Vec<Slot> = x
        .tokens()
        .iter()
        .zip(actions)
        .filter_map(|(t, a)| match a {
            EditAction::Remove => None,
            EditAction::Keep => Some(Slot::Word(t.clone())),
            EditAction::Replace => Some(Slot::Mask),
        })
        .collect();
    if body.is_empty() {
        return Sentence::default();
    }
    let seq = MaskedSequence::new(x.clone(), body);
    if seq.mask_count() == 0 {
        return seq.realize();
    }
    lm.fill_masks(&seq)
}

/// Realizes the reconstruction: every null slot of the skeleton is masked
/// and regenerated at the input's full length, with the summary as prefix.
pub fn reconstruct<L: MaskedLm + ?Sized>(skeleton: &Skeleton, y: &Sentence, lm: &L) -> Sentence {
    assert!(!skeleton.is_empty(), "cannot reconstruct an empty skeleton");
    let seq = MaskedSequence::new(y.clone(), skeleton.masked_body());
    if seq.mask_count() == 0 {
        return seq.realize();
    }
    lm.fill_masks(&seq)
}

/// Skeleton, summary, and reconstruction for one action vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ConversionOutcome {
    pub skeleton: Skeleton,
    pub summary: Sentence,
    pub reconstruction: Sentence,
}

/// Episode-scoped memo for conversions. Keep decisions leave the action
/// vector unchanged (Keep is the default), so consecutive steps often share
/// an outcome.
#[derive(Default)]
pub struct ConvertCache {
    map: HashMap<Vec<EditAction>, Rc<ConversionOutcome>>,
}

impl ConvertCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn convert<L: MaskedLm + ?Sized>(
        &mut self,
        x: &Sentence,
        actions: &[EditAction],
        lm: &L,
    ) -> Rc<ConversionOutcome> {
        if let Some(hit) = self.map.get(actions) {
            return Rc::clone(hit);
        }
        let skeleton = make_skeleton(x, actions);
        let summary = compress(x, actions, lm);
        let reconstruction = reconstruct(&skeleton, &summary, lm);
        let outcome = Rc::new(ConversionOutcome { skeleton, summary, reconstruction });
        self.map.insert(actions.to_vec(), Rc::clone(&outcome));
        outcome
    }
}
