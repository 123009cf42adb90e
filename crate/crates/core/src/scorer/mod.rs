//! Bridge to external probability and prediction providers, so that a
//! neural language model, reorderer or classifier can stand in for the
//! internal models through the same provider traits.

mod client;
mod fallback;
pub mod protocol;
mod server;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use client::{ScorerConfig, ScorerError, ScorerHandle, Transport, DEFAULT_TIMEOUT_MS};
pub use fallback::{fallback_resolve, plan, BoxError, InternalProviders, Plan, Providers, ResolveError, Source};
pub use protocol::{Capability, Query, Reply, PROTOCOL_VERSION};
pub use server::{respond, serve, serve_tcp, Backend, ConformanceBackend, ProviderBackend};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConformanceReport {
    pub requests: usize,
    pub matched: usize,
    /// Log probabilities seen, all checked to be finite and at most zero.
    pub logps: usize,
    /// Whether a request the scorer must refuse came back as an error line
    /// and left the connection usable.
    pub error_line_resilience: Option<bool>,
}

impl ConformanceReport {
    pub fn passed(&self) -> bool {
        self.matched == self.requests && self.error_line_resilience != Some(false)
    }
}

const WORDS: [&str; 8] = ["the", "cat", "sat", "on", "a", "mat", "quietly", "today"];

fn random_tokens(rng: &mut ChaCha8Rng) -> Vec<String> {
    let n = rng.gen_range(1..=8);
    (0..n).map(|_| WORDS.choose(rng).expect("non-empty").to_string()).collect()
}

/// Sends `n` pipelined requests spread over the declared capabilities and
/// checks that every one is answered under its own id with a well-formed
/// value. When classification is declared it also sends a request with an
/// empty label set, which a conformant scorer answers with an error line,
/// and then checks that the connection still serves requests.
pub fn run_conformance(handle: &ScorerHandle, n: usize, seed: u64) -> Result<ConformanceReport, ScorerError> {
    let caps: Vec<Capability> = handle.capabilities().iter().copied().collect();
    if caps.is_empty() {
        return Err(ScorerError::Handshake("scorer declares no capabilities".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let queries: Vec<Query> = (0..n)
        .map(|i| match caps[i % caps.len()] {
            Capability::LogpSentence => Query::LogpSentence { tokens: random_tokens(&mut rng) },
            Capability::LogpCond => {
                let target = random_tokens(&mut rng);
                let mut condition = target.clone();
                condition.shuffle(&mut rng);
                Query::LogpCond { target, condition }
            }
            Capability::Classify => {
                Query::Classify { tokens: random_tokens(&mut rng), labels: vec!["entailed".into(), "not_entailed".into()] }
            }
        })
        .collect();
    let replies = handle.score_batch(&queries)?;
    let matched = replies.iter().filter(|r| r.is_ok()).count();
    let logps = replies.iter().filter(|r| matches!(r, Ok(Reply::Logp2(_)))).count();

    let error_line_resilience = if handle.capabilities().contains(&Capability::Classify) {
        let probe = [
            Query::Classify { tokens: vec!["x".into()], labels: vec![] },
            Query::Classify { tokens: vec!["x".into()], labels: vec!["only".into()] },
        ];
        let r = handle.score_batch(&probe)?;
        Some(matches!(r[0], Err(ScorerError::Rejected(_))) && matches!(&r[1], Ok(Reply::Label(l)) if l == "only"))
    } else {
        None
    };
    Ok(ConformanceReport { requests: n, matched, logps, error_line_resilience })
}
