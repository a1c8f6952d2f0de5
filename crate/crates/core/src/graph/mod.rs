//! Weighted FSTs for CTC decoding: lexicon transducers, composition with an
//! n-gram LM, class slots for runtime phrase injection, and the graph file format.
//!
//! Input labels are phones (0 is epsilon), output labels are word ids (0 is
//! epsilon) and weights are negative log10 probabilities in the tropical semiring.

mod compose;
mod contacts;
mod fst;
mod lexicon;

pub use compose::{compose_lg, BackoffMode};
pub use contacts::{read_contacts, read_overlay, write_overlay, ContactEntry, PersonalizedGraph};
pub use fst::{
    add_ctc_topology, explicit_ctc_graph, Arc, ClassSlot, StateId, WeightedFst, BLANK_LABEL, DYNAMIC_WORD_BASE,
    EPSILON, NO_WORD,
};
pub use lexicon::{build_lexicon_fst, lexicon_paths, read_lexicon, Lexicon, PhoneId, PhoneSet};

/// Read-only view of a decoder graph, possibly with a session overlay.
pub trait DecodingGraph {
    fn start(&self) -> StateId;
    fn num_states(&self) -> usize;
    /// Outgoing arcs of `s`: the base arcs, then any overlay arcs.
    fn arcs(&self, s: StateId) -> (&[Arc], &[Arc]);
    fn final_weight(&self, s: StateId) -> Option<f64>;
    fn is_ctc(&self) -> bool;
    fn phones(&self) -> &PhoneSet;
    fn word(&self, olabel: u32) -> Option<&str>;
    /// Class token that an injected word stands for.
    fn class_of(&self, olabel: u32) -> Option<u32>;
}

impl DecodingGraph for WeightedFst {
    fn start(&self) -> StateId {
        WeightedFst::start(self)
    }

    fn num_states(&self) -> usize {
        WeightedFst::num_states(self)
    }

    fn arcs(&self, s: StateId) -> (&[Arc], &[Arc]) {
        (WeightedFst::arcs(self, s), &[])
    }

    fn final_weight(&self, s: StateId) -> Option<f64> {
        WeightedFst::final_weight(self, s)
    }

    fn is_ctc(&self) -> bool {
        WeightedFst::is_ctc(self)
    }

    fn phones(&self) -> &PhoneSet {
        WeightedFst::phones(self)
    }

    fn word(&self, olabel: u32) -> Option<&str> {
        self.words().get(olabel as usize).map(String::as_str)
    }

    fn class_of(&self, _olabel: u32) -> Option<u32> {
        None
    }
}
