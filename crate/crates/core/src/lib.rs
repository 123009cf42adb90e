//! Measuring how informative word order is.
//!
//! The crate estimates, per sentence, the pointwise mutual information
//! between a sentence and a random scrambling of its words,
//! `pmi(s; t) = log2 q(s | t) - log2 p(s)`, where `p` is a sentence language
//! model and `q` a reordering model that tries to restore the original
//! order. Averaged over pairs this is a variational lower bound on
//! `I(S; T)`. Around that core sit a context-free-grammar diagnostic for the
//! reorderer, edit-distance probe metrics, and a Bayesian mixed-effects
//! logistic regression relating PMI to whether a classifier's prediction
//! survives scrambling.

pub mod cfgbench;
pub mod consistency;
pub mod infometrics;
pub mod ngram;
pub mod providers;
pub mod regression;
pub mod reorder;
pub mod rng;
pub mod scorer;
pub mod textdata;

pub use ngram::{LogProb, NgramModel, TrainConfig};
pub use reorder::{BagOfWords, Derivation, ReorderModel};
pub use textdata::{ScramblePair, SentenceRecord, Split};
