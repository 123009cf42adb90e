//! Message types of the line-delimited JSON scoring protocol.
//!
//! ```text
//! {"op":"hello","version":1}                                -> {"ok":true,"version":1,"capabilities":[...]}
//! {"id":N,"op":"logp_sentence","tokens":[...]}              -> {"id":N,"logp2":float}
//! {"id":N,"op":"logp_cond","target":[...],"condition":[...]} -> {"id":N,"logp2":float}
//! {"id":N,"op":"classify","tokens":[...],"labels":[...]}    -> {"id":N,"label":string}
//! any response may instead be                                  {"id":N,"error":string}
//! ```
//!
//! Log probabilities are base 2, finite and at most zero.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Capability {
    LogpSentence,
    LogpCond,
    Classify,
}

impl Capability {
    pub const ALL: [Capability; 3] = [Capability::LogpSentence, Capability::LogpCond, Capability::Classify];

    pub fn as_str(self) -> &'static str {
        match self {
            Capability::LogpSentence => "logp_sentence",
            Capability::LogpCond => "logp_cond",
            Capability::Classify => "classify",
        }
    }
}

impl fmt::Display for Capability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Capability {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Capability::ALL.into_iter().find(|c| c.as_str() == s).ok_or_else(|| format!("unknown capability `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum Request {
    Hello { version: u32 },
    LogpSentence { id: u64, tokens: Vec<String> },
    LogpCond { id: u64, target: Vec<String>, condition: Vec<String> },
    Classify { id: u64, tokens: Vec<String>, labels: Vec<String> },
}

/// A scoring request before an id is attached.
#[derive(Debug, Clone, PartialEq)]
pub enum Query {
    LogpSentence { tokens: Vec<String> },
    LogpCond { target: Vec<String>, condition: Vec<String> },
    Classify { tokens: Vec<String>, labels: Vec<String> },
}

impl Query {
    pub fn capability(&self) -> Capability {
        match self {
            Query::LogpSentence { .. } => Capability::LogpSentence,
            Query::LogpCond { .. } => Capability::LogpCond,
            Query::Classify { .. } => Capability::Classify,
        }
    }

    pub fn with_id(&self, id: u64) -> Request {
        match self.clone() {
            Query::LogpSentence { tokens } => Request::LogpSentence { id, tokens },
            Query::LogpCond { target, condition } => Request::LogpCond { id, target, condition },
            Query::Classify { tokens, labels } => Request::Classify { id, tokens, labels },
        }
    }
}

/// The payload of a scoring response.
#[derive(Debug, Clone, PartialEq)]
pub enum Reply {
    Logp2(f64),
    Label(String),
    /// The scorer declined this one request.
    Error(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct HelloReply {
    pub version: u32,
    pub capabilities: BTreeSet<Capability>,
}

/// Reads the handshake reply. `Err` carries the reason it is unusable;
/// a version other than ours is reported through `Ok` so the caller can
/// name both versions.
pub fn parse_hello(line: &str) -> Result<HelloReply, String> {
    let v: Value = serde_json::from_str(line).map_err(|e| format!("not JSON: {e}"))?;
    let obj = v.as_object().ok_or("not a JSON object")?;
    if let Some(err) = obj.get("error") {
        return Err(format!("scorer refused the handshake: {}", err.as_str().unwrap_or(&err.to_string())));
    }
    if obj.get("ok") != Some(&Value::Bool(true)) {
        return Err("handshake reply lacks \"ok\":true".into());
    }
    let version = obj
        .get("version")
        .and_then(Value::as_u64)
        .and_then(|v| u32::try_from(v).ok())
        .ok_or("handshake reply lacks an integer \"version\"")?;
    let caps = obj.get("capabilities").and_then(Value::as_array).ok_or("handshake reply lacks a \"capabilities\" array")?;
    let mut capabilities = BTreeSet::new();
    for c in caps {
        let name = c.as_str().ok_or("capability names must be strings")?;
        capabilities.insert(name.parse::<Capability>()?);
    }
    Ok(HelloReply { version, capabilities })
}

/// Splits a response line into its id and payload, checking its shape but
/// not yet its value.
pub fn parse_response(line: &str) -> Result<(u64, Reply), String> {
    let v: Value = serde_json::from_str(line).map_err(|e| format!("not JSON: {e}"))?;
    let obj = v.as_object().ok_or("not a JSON object")?;
    let id = obj.get("id").and_then(Value::as_u64).ok_or("missing or non-integer \"id\"")?;
    let present: Vec<&str> = ["logp2", "label", "error"].into_iter().filter(|k| obj.contains_key(*k)).collect();
    let reply = match present.as_slice() {
        ["logp2"] => Reply::Logp2(obj["logp2"].as_f64().ok_or("\"logp2\" is not a number")?),
        ["label"] => Reply::Label(obj["label"].as_str().ok_or("\"label\" is not a string")?.to_string()),
        ["error"] => Reply::Error(match &obj["error"] {
            Value::String(s) => s.clone(),
            other => other.to_string(),
        }),
        [] => return Err("no \"logp2\", \"label\" or \"error\" field".into()),
        _ => return Err(format!("conflicting result fields {present:?}")),
    };
    Ok((id, reply))
}

/// Checks a reply against the query it answers.
pub fn validate_reply(query: &Query, reply: &Reply) -> Result<(), String> {
    match (query, reply) {
        (_, Reply::Error(_)) => Ok(()),
        (Query::LogpSentence { .. } | Query::LogpCond { .. }, Reply::Logp2(v)) => {
            if v.is_finite() && *v <= 0.0 {
                Ok(())
            } else {
                Err(format!("log probability {v} is not finite and <= 0"))
            }
        }
        (Query::Classify { labels, .. }, Reply::Label(l)) => {
            if labels.contains(l) {
                Ok(())
            } else {
                Err(format!("label `{l}` is not one of {labels:?}"))
            }
        }
        (q, r) => Err(format!("{} answered with {r:?}", q.capability())),
    }
}

pub fn hello_line() -> String {
    serde_json::to_string(&Request::Hello { version: PROTOCOL_VERSION }).expect("hello serializes")
}

pub fn hello_reply_line(capabilities: &BTreeSet<Capability>) -> String {
    serde_json::json!({ "ok": true, "version": PROTOCOL_VERSION, "capabilities": capabilities }).to_string()
}

pub fn reply_line(id: u64, reply: &Reply) -> String {
    match reply {
        Reply::Logp2(v) => serde_json::json!({ "id": id, "logp2": v }),
        Reply::Label(l) => serde_json::json!({ "id": id, "label": l }),
        Reply::Error(e) => serde_json::json!({ "id": id, "error": e }),
    }
    .to_string()
}
