//! The serving side of the protocol. Used by the `serve` command, by the
//! conformance harness, and to expose internal models to other processes.

use std::collections::BTreeSet;
use std::io::{self, BufRead, Write};
use std::net::TcpListener;
use std::sync::Arc;

use serde_json::Value;

use super::protocol::{hello_reply_line, reply_line, Capability, Reply, Request, PROTOCOL_VERSION};
use crate::providers::{Classifier, ConditionalScorer, SentenceScorer};

/// Something that can answer scoring requests. Unsupported operations are
/// never called for capabilities the backend does not declare.
pub trait Backend: Send + Sync {
    fn capabilities(&self) -> BTreeSet<Capability>;

    fn logp_sentence(&self, _tokens: &[String]) -> Result<f64, String> {
        Err("logp_sentence is not offered".into())
    }

    fn logp_cond(&self, _target: &[String], _condition: &[String]) -> Result<f64, String> {
        Err("logp_cond is not offered".into())
    }

    fn classify(&self, _tokens: &[String], _labels: &[String]) -> Result<String, String> {
        Err("classify is not offered".into())
    }
}

/// Deterministic reference backend: `logp_sentence` is minus the token
/// count, `logp_cond` minus half the target length, `classify` the first
/// label. `fixed_logp` replaces both log probabilities with one constant.
#[derive(Debug, Clone)]
pub struct ConformanceBackend {
    pub capabilities: BTreeSet<Capability>,
    pub fixed_logp: Option<f64>,
}

impl ConformanceBackend {
    pub fn new(capabilities: impl IntoIterator<Item = Capability>) -> Self {
        Self { capabilities: capabilities.into_iter().collect(), fixed_logp: None }
    }

    pub fn all() -> Self {
        Self::new(Capability::ALL)
    }
}

impl Backend for ConformanceBackend {
    fn capabilities(&self) -> BTreeSet<Capability> {
        self.capabilities.clone()
    }

    fn logp_sentence(&self, tokens: &[String]) -> Result<f64, String> {
        Ok(self.fixed_logp.unwrap_or(-(tokens.len() as f64)))
    }

    fn logp_cond(&self, target: &[String], _condition: &[String]) -> Result<f64, String> {
        Ok(self.fixed_logp.unwrap_or(-(target.len() as f64) / 2.0))
    }

    fn classify(&self, _tokens: &[String], labels: &[String]) -> Result<String, String> {
        labels.first().cloned().ok_or_else(|| "empty label set".to_string())
    }
}

/// Serves whichever providers are present.
#[derive(Clone, Default)]
pub struct ProviderBackend {
    pub sentence: Option<Arc<dyn SentenceScorer>>,
    pub conditional: Option<Arc<dyn ConditionalScorer>>,
    pub classifier: Option<Arc<dyn Classifier>>,
}

impl Backend for ProviderBackend {
    fn capabilities(&self) -> BTreeSet<Capability> {
        let mut c = BTreeSet::new();
        if self.sentence.is_some() {
            c.insert(Capability::LogpSentence);
        }
        if self.conditional.is_some() {
            c.insert(Capability::LogpCond);
        }
        if self.classifier.is_some() {
            c.insert(Capability::Classify);
        }
        c
    }

    fn logp_sentence(&self, tokens: &[String]) -> Result<f64, String> {
        let p = self.sentence.as_ref().ok_or("logp_sentence is not offered")?;
        p.logp_sentence(tokens).map(|l| l.bits()).map_err(|e| e.to_string())
    }

    fn logp_cond(&self, target: &[String], condition: &[String]) -> Result<f64, String> {
        let q = self.conditional.as_ref().ok_or("logp_cond is not offered")?;
        q.logp_cond(target, condition).map(|l| l.bits()).map_err(|e| e.to_string())
    }

    fn classify(&self, tokens: &[String], labels: &[String]) -> Result<String, String> {
        let f = self.classifier.as_ref().ok_or("classify is not offered")?;
        f.classify(tokens, labels).map_err(|e| e.to_string())
    }
}

/// One response line for one request line. Requests that cannot be parsed
/// still get an error line, carrying the id when one can be recovered.
pub fn respond(line: &str, backend: &dyn Backend) -> String {
    let request: Request = match serde_json::from_str(line) {
        Ok(r) => r,
        Err(e) => {
            let id = serde_json::from_str::<Value>(line).ok().and_then(|v| v.get("id").and_then(Value::as_u64));
            let msg = format!("malformed request: {e}");
            return match id {
                Some(id) => reply_line(id, &Reply::Error(msg)),
                None => serde_json::json!({ "error": msg }).to_string(),
            };
        }
    };
    let caps = backend.capabilities();
    let gate = |c: Capability| caps.contains(&c).then_some(()).ok_or_else(|| format!("capability {c} is not offered"));
    let (id, reply) = match request {
        Request::Hello { version } if version == PROTOCOL_VERSION => return hello_reply_line(&caps),
        Request::Hello { version } => {
            return serde_json::json!({
                "ok": false,
                "version": PROTOCOL_VERSION,
                "error": format!("unsupported protocol version {version}; this scorer speaks {PROTOCOL_VERSION}"),
            })
            .to_string()
        }
        Request::LogpSentence { id, tokens } => {
            (id, gate(Capability::LogpSentence).and_then(|_| backend.logp_sentence(&tokens)).map(Reply::Logp2))
        }
        Request::LogpCond { id, target, condition } => {
            (id, gate(Capability::LogpCond).and_then(|_| backend.logp_cond(&target, &condition)).map(Reply::Logp2))
        }
        Request::Classify { id, tokens, labels } => {
            (id, gate(Capability::Classify).and_then(|_| backend.classify(&tokens, &labels)).map(Reply::Label))
        }
    };
    reply_line(id, &reply.unwrap_or_else(Reply::Error))
}

/// Answers requests line by line until the input ends. Returns the number
/// of lines answered.
pub fn serve<R: BufRead, W: Write>(reader: R, mut writer: W, backend: &dyn Backend) -> io::Result<u64> {
    let mut n = 0;
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        writeln!(writer, "{}", respond(&line, backend))?;
        writer.flush()?;
        n += 1;
    }
    Ok(n)
}

/// Accepts connections forever, one thread per connection.
pub fn serve_tcp(listener: TcpListener, backend: Arc<dyn Backend>) -> io::Result<()> {
    for stream in listener.incoming() {
        let stream = stream?;
        let backend = Arc::clone(&backend);
        std::thread::spawn(move || {
            let reader = io::BufReader::new(stream.try_clone()?);
            serve(reader, io::BufWriter::new(stream), backend.as_ref())
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conformance_values() {
        let b = ConformanceBackend::all();
        assert_eq!(respond(r#"{"id":1,"op":"logp_sentence","tokens":["a","b","c"]}"#, &b), r#"{"id":1,"logp2":-3.0}"#);
        assert_eq!(
            respond(r#"{"id":2,"op":"logp_cond","target":["a","b","c"],"condition":["c","b","a"]}"#, &b),
            r#"{"id":2,"logp2":-1.5}"#
        );
        assert_eq!(respond(r#"{"id":3,"op":"classify","tokens":["a"],"labels":["x","y"]}"#, &b), r#"{"id":3,"label":"x"}"#);
        let fixed = ConformanceBackend { fixed_logp: Some(-10.0), ..ConformanceBackend::all() };
        assert_eq!(respond(r#"{"id":4,"op":"logp_sentence","tokens":["a"]}"#, &fixed), r#"{"id":4,"logp2":-10.0}"#);
    }

    #[test]
    fn handshake_and_errors() {
        let b = ConformanceBackend::new([Capability::LogpSentence]);
        assert_eq!(respond(r#"{"op":"hello","version":1}"#, &b), r#"{"capabilities":["logp_sentence"],"ok":true,"version":1}"#);
        assert!(respond(r#"{"op":"hello","version":9}"#, &b).contains(r#""ok":false"#));
        assert_eq!(
            respond(r#"{"id":5,"op":"classify","tokens":[],"labels":["a"]}"#, &b),
            r#"{"error":"capability classify is not offered","id":5}"#
        );
        assert!(respond(r#"{"id":6,"op":"dance"}"#, &b).starts_with(r#"{"error":"malformed request"#));
        assert!(respond("garbage", &b).starts_with(r#"{"error":"#));
    }

    #[test]
    fn serve_loop() {
        let input = "{\"op\":\"hello\",\"version\":1}\n\n{\"id\":1,\"op\":\"logp_sentence\",\"tokens\":[\"a\"]}\n";
        let mut out = Vec::new();
        let n = serve(input.as_bytes(), &mut out, &ConformanceBackend::all()).unwrap();
        assert_eq!(n, 2);
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().nth(1), Some(r#"{"id":1,"logp2":-1.0}"#));
    }
}
