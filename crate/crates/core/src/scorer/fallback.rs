//! Choosing, operation by operation, between an external scorer and the
//! internal models.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::client::{ScorerConfig, ScorerError, ScorerHandle};
use super::protocol::Capability;
use crate::providers::{Classifier, ConditionalScorer, SentenceScorer};

pub type BoxError = Box<dyn std::error::Error + Send + Sync + 'static>;

#[derive(Debug, Error)]
pub enum ResolveError {
    #[error(transparent)]
    Scorer(#[from] ScorerError),
    #[error("internal model: {0}")]
    Internal(BoxError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Internal,
    External,
}

/// Which source serves each operation.
pub type Plan = BTreeMap<Capability, Source>;

/// The internal models on offer. Any of them may be absent when the plan
/// does not need it.
#[derive(Clone, Default)]
pub struct InternalProviders {
    pub sentence: Option<Arc<dyn SentenceScorer>>,
    pub conditional: Option<Arc<dyn ConditionalScorer>>,
    pub classifier: Option<Arc<dyn Classifier>>,
}

#[derive(Clone)]
pub struct Providers {
    pub sentence: Option<Arc<dyn SentenceScorer>>,
    pub conditional: Option<Arc<dyn ConditionalScorer>>,
    pub classifier: Option<Arc<dyn Classifier>>,
    pub plan: Plan,
    pub handle: Option<Arc<ScorerHandle>>,
}

impl Providers {
    pub fn source(&self, op: Capability) -> Option<Source> {
        self.plan.get(&op).copied()
    }
}

/// An operation goes external when a scorer is configured, declares it, and
/// the config's `ops` list (if any) includes it. Naming an operation in
/// `ops` that the scorer does not declare is an error.
pub fn plan(cfg: Option<&ScorerConfig>, declared: &BTreeSet<Capability>) -> Result<Plan, ScorerError> {
    let mut plan = Plan::new();
    for op in Capability::ALL {
        let external = match cfg {
            None => false,
            Some(c) => match &c.ops {
                Some(ops) if ops.contains(&op) => {
                    if !declared.contains(&op) {
                        return Err(ScorerError::Capability(op));
                    }
                    true
                }
                Some(_) => false,
                None => declared.contains(&op),
            },
        };
        plan.insert(op, if external { Source::External } else { Source::Internal });
    }
    Ok(plan)
}

/// Opens the configured scorer, if any, and builds the providers.
/// `internal` is called once with the operations left to internal models,
/// so nothing is trained or loaded that will not be used.
pub fn fallback_resolve<F>(cfg: Option<&ScorerConfig>, internal: F) -> Result<Providers, ResolveError>
where
    F: FnOnce(&BTreeSet<Capability>) -> Result<InternalProviders, BoxError>,
{
    let handle = match cfg {
        Some(c) => Some(Arc::new(ScorerHandle::open(c)?)),
        None => None,
    };
    let declared = handle.as_ref().map(|h| h.capabilities().clone()).unwrap_or_default();
    let plan = plan(cfg, &declared)?;
    let wanted: BTreeSet<Capability> = plan.iter().filter(|(_, s)| **s == Source::Internal).map(|(c, _)| *c).collect();
    let inner = internal(&wanted).map_err(ResolveError::Internal)?;
    let ext = |op: Capability| plan[&op] == Source::External;
    let h = handle.clone();
    Ok(Providers {
        sentence: if ext(Capability::LogpSentence) {
            h.clone().map(|h| h as Arc<dyn SentenceScorer>)
        } else {
            inner.sentence
        },
        conditional: if ext(Capability::LogpCond) {
            h.clone().map(|h| h as Arc<dyn ConditionalScorer>)
        } else {
            inner.conditional
        },
        classifier: if ext(Capability::Classify) { h.map(|h| h as Arc<dyn Classifier>) } else { inner.classifier },
        plan,
        handle,
    })
}
