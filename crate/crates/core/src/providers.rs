//! Scoring interfaces the pipeline is written against. The internal n-gram
//! and reordering models implement them, and so does the external scorer
//! client, which lets either side be swapped without touching callers.

use thiserror::Error;

use crate::ngram::{LogProb, NgramModel};
use crate::reorder::{ReorderError, ReorderModel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProviderError {
    /// The inputs were unacceptable (empty sentence, mismatched bags, ...).
    #[error("{0}")]
    Data(String),
    /// The provider itself misbehaved: transport, timeout, malformed reply.
    #[error("scorer: {0}")]
    Protocol(String),
}

/// `log2 p(s)`.
pub trait SentenceScorer: Send + Sync {
    fn logp_sentence(&self, tokens: &[String]) -> Result<LogProb, ProviderError>;
}

/// `log2 q(target | condition)`.
pub trait ConditionalScorer: Send + Sync {
    fn logp_cond(&self, target: &[String], condition: &[String]) -> Result<LogProb, ProviderError>;
}

/// A task classifier choosing one of `labels`.
pub trait Classifier: Send + Sync {
    fn classify(&self, tokens: &[String], labels: &[String]) -> Result<String, ProviderError>;
}

impl SentenceScorer for NgramModel {
    fn logp_sentence(&self, tokens: &[String]) -> Result<LogProb, ProviderError> {
        NgramModel::logp_sentence(self, tokens).map_err(|e| ProviderError::Data(e.to_string()))
    }
}

impl ConditionalScorer for ReorderModel {
    fn logp_cond(&self, target: &[String], condition: &[String]) -> Result<LogProb, ProviderError> {
        self.q_logp(target, condition).map_err(|e: ReorderError| ProviderError::Data(e.to_string()))
    }
}

impl<T: SentenceScorer + ?Sized> SentenceScorer for std::sync::Arc<T> {
    fn logp_sentence(&self, tokens: &[String]) -> Result<LogProb, ProviderError> {
        (**self).logp_sentence(tokens)
    }
}

impl<T: ConditionalScorer + ?Sized> ConditionalScorer for std::sync::Arc<T> {
    fn logp_cond(&self, target: &[String], condition: &[String]) -> Result<LogProb, ProviderError> {
        (**self).logp_cond(target, condition)
    }
}

impl<T: Classifier + ?Sized> Classifier for std::sync::Arc<T> {
    fn classify(&self, tokens: &[String], labels: &[String]) -> Result<String, ProviderError> {
        (**self).classify(tokens, labels)
    }
}
