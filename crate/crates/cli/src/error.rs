//! Failure classes, exit codes and the error record written to stderr.

use std::fmt;
use std::path::Path;

use orderinfo::cfgbench::CfgError;
use orderinfo::consistency::ConsistencyError;
use orderinfo::infometrics::InfoError;
use orderinfo::ngram::LmError;
use orderinfo::providers::ProviderError;
use orderinfo::regression::RegressionError;
use orderinfo::reorder::ReorderError;
use orderinfo::scorer::{ResolveError, ScorerError};
use orderinfo::textdata::TextError;
use serde_json::{json, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Usage,
    Data,
    Convergence,
    Scorer,
}

impl Kind {
    pub fn code(self) -> u8 {
        match self {
            Kind::Usage => 1,
            Kind::Data => 2,
            Kind::Convergence => 3,
            Kind::Scorer => 4,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Kind::Usage => "usage",
            Kind::Data => "data",
            Kind::Convergence => "convergence",
            Kind::Scorer => "scorer",
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Kind,
    pub message: String,
    pub details: Option<Value>,
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

impl CliError {
    pub fn new(kind: Kind, message: impl Into<String>) -> Self {
        Self { kind, message: message.into(), details: None }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(Kind::Usage, message)
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self::new(Kind::Data, message)
    }

    pub fn with_details(mut self, details: Value) -> Self {
        self.details = Some(details);
        self
    }

    /// Prefixes the message with the file it concerns.
    pub fn in_file(mut self, path: &Path) -> Self {
        self.message = format!("{}: {}", path.display(), self.message);
        self
    }

    /// One JSON line for stderr.
    pub fn record(&self, command: &str) -> String {
        let mut err = json!({
            "code": self.kind.code(),
            "kind": self.kind.as_str(),
            "command": command,
            "message": self.message,
        });
        if let Some(d) = &self.details {
            err["details"] = d.clone();
        }
        json!({ "error": err }).to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} error: {}", self.kind.as_str(), self.message)
    }
}

impl std::error::Error for CliError {}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::data(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::data(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::data(e.to_string())
    }
}

impl From<TextError> for CliError {
    fn from(e: TextError) -> Self {
        CliError::data(e.to_string())
    }
}

impl From<LmError> for CliError {
    fn from(e: LmError) -> Self {
        CliError::data(e.to_string())
    }
}

impl From<ReorderError> for CliError {
    fn from(e: ReorderError) -> Self {
        CliError::data(e.to_string())
    }
}

impl From<CfgError> for CliError {
    fn from(e: CfgError) -> Self {
        CliError::data(e.to_string())
    }
}

impl From<ConsistencyError> for CliError {
    fn from(e: ConsistencyError) -> Self {
        CliError::data(e.to_string())
    }
}

impl From<ProviderError> for CliError {
    fn from(e: ProviderError) -> Self {
        match e {
            ProviderError::Data(m) => CliError::data(m),
            ProviderError::Protocol(m) => CliError::new(Kind::Scorer, m),
        }
    }
}

impl From<InfoError> for CliError {
    fn from(e: InfoError) -> Self {
        match e {
            InfoError::Provider(p) => p.into(),
            other => CliError::data(other.to_string()),
        }
    }
}

impl From<ScorerError> for CliError {
    fn from(e: ScorerError) -> Self {
        match e {
            ScorerError::BadConfig => CliError::usage(e.to_string()),
            ScorerError::Rejected(_) => CliError::data(e.to_string()),
            other => CliError::new(Kind::Scorer, other.to_string()),
        }
    }
}

impl From<ResolveError> for CliError {
    fn from(e: ResolveError) -> Self {
        match e {
            ResolveError::Scorer(s) => s.into(),
            ResolveError::Internal(inner) => match inner.downcast::<CliError>() {
                Ok(cli) => *cli,
                Err(other) => CliError::data(other.to_string()),
            },
        }
    }
}

impl From<RegressionError> for CliError {
    fn from(e: RegressionError) -> Self {
        match e {
            RegressionError::NotConverged { offenders, .. } => {
                let listed: Vec<Value> = offenders
                    .iter()
                    .map(|d| json!({"parameter": d.name, "rhat": d.rhat, "ess_bulk": d.ess_bulk, "ess_tail": d.ess_tail}))
                    .collect();
                CliError::new(Kind::Convergence, format!("sampler did not converge ({} parameters failed the gate)", offenders.len()))
                    .with_details(json!({ "offenders": listed }))
            }
            other => CliError::data(other.to_string()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_is_one_json_line() {
        let e = CliError::data("bad row").with_details(json!({"line": 3}));
        let line = e.record("pmi");
        assert!(!line.contains('\n'));
        let v: Value = serde_json::from_str(&line).unwrap();
        assert_eq!(v["error"]["code"], 2);
        assert_eq!(v["error"]["kind"], "data");
        assert_eq!(v["error"]["command"], "pmi");
        assert_eq!(v["error"]["details"]["line"], 3);
    }

    #[test]
    fn provider_failures_split_by_blame() {
        assert_eq!(CliError::from(InfoError::Provider(ProviderError::Protocol("x".into()))).kind, Kind::Scorer);
        assert_eq!(CliError::from(InfoError::Provider(ProviderError::Data("x".into()))).kind, Kind::Data);
        assert_eq!(CliError::from(ScorerError::Closed).kind, Kind::Scorer);
        assert_eq!(CliError::from(ScorerError::BadConfig).kind, Kind::Usage);
    }

    #[test]
    fn resolve_errors_keep_the_inner_class() {
        let inner: orderinfo::scorer::BoxError = Box::new(CliError::usage("--lm is required"));
        let e = CliError::from(ResolveError::Internal(inner));
        assert_eq!(e.kind, Kind::Usage);
        assert_eq!(e.message, "--lm is required");
    }
}
