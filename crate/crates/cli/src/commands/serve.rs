//! `serve`: answers scorer protocol requests on stdin/stdout or TCP, either
//! with the deterministic conformance backend or with internal models.

use std::collections::BTreeSet;
use std::io::Write;
use std::net::TcpListener;
use std::path::PathBuf;
use std::sync::Arc;

use clap::{Args, ValueEnum};
use orderinfo::providers::{ConditionalScorer, SentenceScorer};
use orderinfo::scorer::{serve_tcp, Backend, Capability, ConformanceBackend, ProviderBackend};

use super::models::{load_lm, load_reorder};
use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendKind {
    Conformance,
    Internal,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, value_enum, default_value_t = BackendKind::Conformance)]
    pub backend: BackendKind,
    /// Operations to declare (default: all the backend can serve).
    #[arg(long, value_delimiter = ',')]
    pub capabilities: Option<Vec<Capability>>,
    /// Conformance backend: answer every log probability with this value.
    #[arg(long, allow_negative_numbers = true)]
    pub fixed_logp: Option<f64>,
    /// Internal backend: n-gram model for `logp_sentence`.
    #[arg(long)]
    pub lm: Option<PathBuf>,
    /// Internal backend: temperature fit for `logp_cond` (needs --lm).
    #[arg(long)]
    pub reorder: Option<PathBuf>,
    /// Listen on this TCP address instead of standard streams. The bound
    /// address is printed as the first line of stdout.
    #[arg(long)]
    pub listen: Option<String>,
}

fn build_backend(args: &ServeArgs) -> Result<Arc<dyn Backend>> {
    let wanted: Option<BTreeSet<Capability>> = args.capabilities.as_ref().map(|c| c.iter().copied().collect());
    match args.backend {
        BackendKind::Conformance => {
            let mut b = match &wanted {
                Some(w) => ConformanceBackend::new(w.iter().copied()),
                None => ConformanceBackend::all(),
            };
            b.fixed_logp = args.fixed_logp;
            Ok(Arc::new(b))
        }
        BackendKind::Internal => {
            let lm = args.lm.as_deref().map(load_lm).transpose()?.map(Arc::new);
            let mut b = ProviderBackend::default();
            if let Some(lm) = &lm {
                b.sentence = Some(lm.clone() as Arc<dyn SentenceScorer>);
                if let Some(fit) = &args.reorder {
                    b.conditional = Some(Arc::new(load_reorder(lm.clone(), fit)?) as Arc<dyn ConditionalScorer>);
                }
            } else if args.reorder.is_some() {
                return Err(CliError::usage("--reorder needs --lm"));
            }
            if let Some(w) = &wanted {
                if let Some(missing) = w.iter().find(|c| !b.capabilities().contains(c)) {
                    return Err(CliError::usage(format!("the internal backend cannot serve {missing} with the given models")));
                }
                if !w.contains(&Capability::LogpSentence) {
                    b.sentence = None;
                }
                if !w.contains(&Capability::LogpCond) {
                    b.conditional = None;
                }
            }
            if b.capabilities().is_empty() {
                return Err(CliError::usage("the internal backend needs --lm"));
            }
            Ok(Arc::new(b))
        }
    }
}

pub fn serve(args: &ServeArgs) -> Result<()> {
    let backend = build_backend(args)?;
    match &args.listen {
        Some(addr) => {
            let listener = TcpListener::bind(addr).map_err(|e| CliError::usage(format!("cannot listen on {addr}: {e}")))?;
            let local = listener.local_addr()?;
            let mut out = std::io::stdout().lock();
            writeln!(out, "{}", serde_json::json!({ "listening": local.to_string() }))?;
            out.flush()?;
            drop(out);
            serve_tcp(listener, backend)?;
        }
        None => {
            let stdin = std::io::stdin().lock();
            let stdout = std::io::stdout().lock();
            orderinfo::scorer::serve(stdin, stdout, backend.as_ref())?;
        }
    }
    Ok(())
}
