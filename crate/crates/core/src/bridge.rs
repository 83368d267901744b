//! Client side of the model service protocol.
//!
//! One JSON object per line in each direction. Every request carries a
//! `request_id` that the response echoes; responses may arrive in any order.
//! [`MockBridge`] answers in-process with the same deterministic behavior as
//! the service's mock mode.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::amr::AmrGraph;
use crate::augment::{AugmentError, CaptionGenerator, MockGruenScorer, QualityScorer, StubGenerator};
use crate::metrics::{LexiconNouns, NounExtractor};
use crate::text::words;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BridgeOp {
    TextToAmr,
    AmrToText,
    Gruen,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BridgeRequest {
    pub op: BridgeOp,
    pub payload: String,
    pub request_id: String,
}

/// `result` is a PENMAN string, a caption, or a score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BridgeResponse {
    pub request_id: String,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl BridgeResponse {
    pub fn success(request_id: impl Into<String>, result: serde_json::Value) -> Self {
        BridgeResponse { request_id: request_id.into(), ok: true, result: Some(result), error: None }
    }

    pub fn failure(request_id: impl Into<String>, error: impl Into<String>) -> Self {
        BridgeResponse { request_id: request_id.into(), ok: false, result: None, error: Some(error.into()) }
    }

    /// `ok` exactly when no error is present.
    pub fn is_well_formed(&self) -> bool {
        self.ok == self.error.is_none()
    }
}

#[derive(Debug, Error)]
pub enum BridgeError {
    #[error("cannot reach model service at {addr}: {error}")]
    Connect { addr: String, error: std::io::Error },
    #[error("model service i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed response line: {0}")]
    Protocol(String),
    #[error("request {id} failed: {message}")]
    Remote { id: String, message: String },
    #[error("service closed the stream with {0} requests unanswered")]
    Truncated(usize),
}

/// Sends a batch of requests and returns the responses in request order.
pub trait BridgeTransport: Send + Sync {
    fn call(&self, requests: &[BridgeRequest]) -> Result<Vec<BridgeResponse>, BridgeError>;
}

/// Line-delimited JSON over TCP, keeping at most `window` requests in flight.
#[derive(Debug, Clone)]
pub struct TcpBridge {
    pub addr: String,
    pub window: usize,
    pub timeout: Duration,
}

impl TcpBridge {
    pub fn new(addr: impl Into<String>) -> Self {
        TcpBridge { addr: addr.into(), window: 16, timeout: Duration::from_secs(120) }
    }

    pub fn with_window(mut self, window: usize) -> Self {
        self.window = window.max(1);
        self
    }
}

impl BridgeTransport for TcpBridge {
    fn call(&self, requests: &[BridgeRequest]) -> Result<Vec<BridgeResponse>, BridgeError> {
        if requests.is_empty() {
            return Ok(Vec::new());
        }
        let stream =
            TcpStream::connect(&self.addr).map_err(|error| BridgeError::Connect { addr: self.addr.clone(), error })?;
        stream.set_read_timeout(Some(self.timeout))?;
        stream.set_nodelay(true)?;
        let mut writer = stream.try_clone()?;
        let mut reader = BufReader::new(stream);
        exchange(requests, self.window, &mut writer, &mut reader)
    }
}

/// Pipelined request/response exchange over any line stream.
pub fn exchange(
    requests: &[BridgeRequest],
    window: usize,
    writer: &mut impl Write,
    reader: &mut impl BufRead,
) -> Result<Vec<BridgeResponse>, BridgeError> {
    let index: HashMap<&str, usize> = requests.iter().enumerate().map(|(i, r)| (r.request_id.as_str(), i)).collect();
    if index.len() != requests.len() {
        return Err(BridgeError::Protocol("duplicate request_id in batch".into()));
    }
    let mut out: Vec<Option<BridgeResponse>> = vec![None; requests.len()];
    let mut pending: HashSet<&str> = HashSet::new();
    let (mut sent, mut received) = (0, 0);
    let mut line = String::new();
    while received < requests.len() {
        while sent < requests.len() && pending.len() < window.max(1) {
            let r = &requests[sent];
            serde_json::to_writer(&mut *writer, r).map_err(|e| BridgeError::Protocol(e.to_string()))?;
            writer.write_all(b"\n")?;
            pending.insert(&r.request_id);
            sent += 1;
        }
        writer.flush()?;
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            return Err(BridgeError::Truncated(requests.len() - received));
        }
        if line.trim().is_empty() {
            continue;
        }
        let resp: BridgeResponse =
            serde_json::from_str(line.trim()).map_err(|e| BridgeError::Protocol(format!("{e}: {}", line.trim())))?;
        if !pending.remove(resp.request_id.as_str()) {
            return Err(BridgeError::Protocol(format!("unexpected request_id {}", resp.request_id)));
        }
        let slot = index[resp.request_id.as_str()];
        out[slot] = Some(resp);
        received += 1;
    }
    Ok(out.into_iter().map(|r| r.expect("every request answered")).collect())
}

/// In-process stand-in for the service's mock mode.
///
/// `text_to_amr` builds a conjunction of the caption's lexicon nouns (all
/// words without a lexicon), `amr_to_text` uses [`StubGenerator`] and
/// `gruen` the [`MockGruenScorer`] formula.
#[derive(Debug, Clone, Default)]
pub struct MockBridge {
    pub lexicon: Option<LexiconNouns>,
}

impl MockBridge {
    pub fn respond(&self, req: &BridgeRequest) -> BridgeResponse {
        let id = req.request_id.clone();
        match req.op {
            BridgeOp::Gruen => BridgeResponse::success(id, serde_json::json!(MockGruenScorer::formula(&req.payload))),
            BridgeOp::AmrToText => match req.payload.parse::<AmrGraph>() {
                Ok(g) => match StubGenerator.realize(&g) {
                    Ok(t) => BridgeResponse::success(id, serde_json::json!(t)),
                    Err(e) => BridgeResponse::failure(id, e.to_string()),
                },
                Err(e) => BridgeResponse::failure(id, e.to_string()),
            },
            BridgeOp::TextToAmr => {
                let nouns: Vec<String> = match &self.lexicon {
                    Some(lx) => lx.nouns(&req.payload).map(|s| s.into_iter().collect()).unwrap_or_default(),
                    None => {
                        let mut w = words(&req.payload);
                        w.retain(|t| t.chars().all(|c| c.is_ascii_alphabetic()));
                        w.dedup();
                        w
                    }
                };
                BridgeResponse::success(id, serde_json::json!(template_amr(&nouns)))
            }
        }
    }

    /// Answers one request line; malformed lines get an error response.
    pub fn respond_line(&self, line: &str) -> BridgeResponse {
        match serde_json::from_str::<BridgeRequest>(line) {
            Ok(req) => self.respond(&req),
            Err(e) => {
                let id = serde_json::from_str::<serde_json::Value>(line)
                    .ok()
                    .and_then(|v| v.get("request_id").and_then(|x| x.as_str()).map(String::from))
                    .unwrap_or_default();
                BridgeResponse::failure(id, format!("malformed request: {e}"))
            }
        }
    }
}

impl BridgeTransport for MockBridge {
    fn call(&self, requests: &[BridgeRequest]) -> Result<Vec<BridgeResponse>, BridgeError> {
        Ok(requests.iter().map(|r| self.respond(r)).collect())
    }
}

fn template_amr(nouns: &[String]) -> String {
    match nouns {
        [] => "(z0 / thing)".to_string(),
        [one] => format!("(z0 / {one})"),
        many => {
            let ops: Vec<String> =
                many.iter().enumerate().map(|(i, n)| format!(":op{} (z{} / {n})", i + 1, i + 1)).collect();
            format!("(z0 / and {})", ops.join(" "))
        }
    }
}

/// Typed calls over a transport.
pub struct BridgeClient<T> {
    transport: T,
}

impl<T: BridgeTransport> BridgeClient<T> {
    pub fn new(transport: T) -> Self {
        BridgeClient { transport }
    }

    fn run(&self, op: BridgeOp, payloads: &[String]) -> Result<Vec<serde_json::Value>, BridgeError> {
        let reqs: Vec<BridgeRequest> = payloads
            .iter()
            .enumerate()
            .map(|(i, p)| BridgeRequest { op, payload: p.clone(), request_id: format!("{i}") })
            .collect();
        self.transport
            .call(&reqs)?
            .into_iter()
            .map(|r| {
                if !r.ok {
                    return Err(BridgeError::Remote {
                        id: r.request_id,
                        message: r.error.unwrap_or_else(|| "unspecified error".into()),
                    });
                }
                r.result.ok_or_else(|| BridgeError::Protocol(format!("response {} has no result", r.request_id)))
            })
            .collect()
    }

    fn strings(&self, op: BridgeOp, payloads: &[String]) -> Result<Vec<String>, BridgeError> {
        self.run(op, payloads)?
            .into_iter()
            .map(|v| v.as_str().map(String::from).ok_or_else(|| BridgeError::Protocol(format!("expected text, got {v}"))))
            .collect()
    }

    pub fn text_to_amr(&self, texts: &[String]) -> Result<Vec<String>, BridgeError> {
        self.strings(BridgeOp::TextToAmr, texts)
    }

    pub fn amr_to_text(&self, penman: &[String]) -> Result<Vec<String>, BridgeError> {
        self.strings(BridgeOp::AmrToText, penman)
    }

    pub fn gruen(&self, captions: &[String]) -> Result<Vec<f64>, BridgeError> {
        self.run(BridgeOp::Gruen, captions)?
            .into_iter()
            .map(|v| {
                v.as_f64()
                    .filter(|s| (0.0..=1.0).contains(s))
                    .ok_or_else(|| BridgeError::Protocol(format!("expected a score in [0, 1], got {v}")))
            })
            .collect()
    }
}

impl<T: BridgeTransport> CaptionGenerator for BridgeClient<T> {
    fn realize(&self, graph: &AmrGraph) -> Result<String, AugmentError> {
        Ok(self.realize_batch(std::slice::from_ref(graph))?.remove(0))
    }

    fn realize_batch(&self, graphs: &[AmrGraph]) -> Result<Vec<String>, AugmentError> {
        let penman: Vec<String> = graphs.iter().map(AmrGraph::to_penman).collect();
        let texts = self.amr_to_text(&penman).map_err(|e| AugmentError::GeneratorUnavailable(e.to_string()))?;
        if texts.iter().any(|t| t.trim().is_empty()) {
            return Err(AugmentError::EmptyOutput);
        }
        Ok(texts)
    }
}

impl<T: BridgeTransport> QualityScorer for BridgeClient<T> {
    fn score(&self, caption: &str) -> Result<f64, AugmentError> {
        Ok(self.score_batch(&[caption])?[0])
    }

    fn score_batch(&self, captions: &[&str]) -> Result<Vec<f64>, AugmentError> {
        let owned: Vec<String> = captions.iter().map(|c| c.to_string()).collect();
        self.gruen(&owned).map_err(|e| AugmentError::ScorerUnavailable(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn req(op: BridgeOp, payload: &str, id: &str) -> BridgeRequest {
        BridgeRequest { op, payload: payload.into(), request_id: id.into() }
    }

    #[test]
    fn wire_format() {
        let r = req(BridgeOp::AmrToText, "(z0 / dog)", "7");
        assert_eq!(
            serde_json::to_string(&r).unwrap(),
            r#"{"op":"amr_to_text","payload":"(z0 / dog)","request_id":"7"}"#
        );
        let ok = BridgeResponse::success("7", serde_json::json!(0.8));
        assert_eq!(serde_json::to_string(&ok).unwrap(), r#"{"request_id":"7","ok":true,"result":0.8}"#);
        let bad: BridgeResponse = serde_json::from_str(r#"{"request_id":"1","ok":false,"error":"boom"}"#).unwrap();
        assert!(bad.is_well_formed() && !bad.ok);
    }

    #[test]
    fn mock_answers() {
        let m = MockBridge::default();
        let g = m.respond(&req(BridgeOp::Gruen, "a boat sits at the dock", "1"));
        assert!((g.result.unwrap().as_f64().unwrap() - 0.8).abs() < 1e-12);
        let t = m.respond(&req(BridgeOp::AmrToText, "(z0 / sit-01 :ARG1 (z1 / boat))", "2"));
        assert_eq!(t.result.unwrap(), "boat sit");
        let a = m.respond(&req(BridgeOp::TextToAmr, "a boat and a dock", "3"));
        let penman = a.result.unwrap().as_str().unwrap().to_string();
        assert!(penman.parse::<AmrGraph>().is_ok());
        let back = m.respond(&req(BridgeOp::AmrToText, &penman, "4"));
        assert!(!back.result.unwrap().as_str().unwrap().is_empty());
        let bad = m.respond_line("{not json");
        assert!(!bad.ok && bad.error.is_some());
        assert!(!m.respond(&req(BridgeOp::AmrToText, "(unbalanced", "5")).ok);
    }

    #[test]
    fn exchange_matches_out_of_order_replies() {
        let reqs: Vec<_> = (0..5).map(|i| req(BridgeOp::Gruen, &"w ".repeat(i), &i.to_string())).collect();
        let m = MockBridge::default();
        let mut replies: Vec<String> =
            reqs.iter().map(|r| serde_json::to_string(&m.respond(r)).unwrap()).collect();
        replies.reverse();
        let mut reader = Cursor::new(replies.join("\n") + "\n");
        let mut sink = Vec::new();
        let out = exchange(&reqs, 8, &mut sink, &mut reader).unwrap();
        for (r, o) in reqs.iter().zip(&out) {
            assert_eq!(r.request_id, o.request_id);
        }
        assert_eq!(String::from_utf8(sink).unwrap().lines().count(), 5);
    }

    #[test]
    fn exchange_detects_protocol_errors() {
        let reqs = vec![req(BridgeOp::Gruen, "x", "a"), req(BridgeOp::Gruen, "y", "b")];
        let mut reader = Cursor::new("{\"request_id\":\"a\",\"ok\":true,\"result\":0.5}\n");
        assert!(matches!(exchange(&reqs, 4, &mut Vec::new(), &mut reader), Err(BridgeError::Truncated(1))));
        let mut reader = Cursor::new("{\"request_id\":\"zz\",\"ok\":true,\"result\":0.5}\n");
        assert!(matches!(exchange(&reqs, 4, &mut Vec::new(), &mut reader), Err(BridgeError::Protocol(_))));
    }

    #[test]
    fn client_surfaces_remote_errors() {
        let c = BridgeClient::new(MockBridge::default());
        assert_eq!(c.gruen(&["a b c d e f".into()]).unwrap(), vec![0.8]);
        assert!(matches!(c.amr_to_text(&["(oops".into()]), Err(BridgeError::Remote { .. })));
        let caps = c.realize_batch(&["(z0 / sit-01 :ARG1 (z1 / boat))".parse().unwrap()]).unwrap();
        assert_eq!(caps, vec!["boat sit"]);
    }

    /// Serves `total` requests on one connection, answering each group of
    /// `group` requests in reverse order.
    fn reversing_server(total: usize, group: usize) -> (String, std::thread::JoinHandle<()>) {
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap().to_string();
        let handle = std::thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            stream.set_nodelay(true).unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut writer = stream;
            let mock = MockBridge::default();
            let mut left = total;
            while left > 0 {
                let mut batch = Vec::new();
                for _ in 0..group.min(left) {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    batch.push(mock.respond_line(line.trim()));
                }
                left -= batch.len();
                for r in batch.iter().rev() {
                    writeln!(writer, "{}", serde_json::to_string(r).unwrap()).unwrap();
                }
            }
        });
        (addr, handle)
    }

    #[test]
    fn tcp_client_reorders_responses() {
        let n = 1000;
        let (addr, server) = reversing_server(n, 8);
        let client = BridgeClient::new(TcpBridge::new(addr).with_window(8));
        let captions: Vec<String> = (0..n).map(|i| "w ".repeat(i % 13)).collect();
        let scores = client.gruen(&captions).unwrap();
        server.join().unwrap();
        for (c, s) in captions.iter().zip(&scores) {
            assert_eq!(*s, MockGruenScorer::formula(c));
        }
    }

    #[test]
    fn tcp_client_reports_unreachable_service() {
        let addr = {
            let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
            l.local_addr().unwrap().to_string()
        };
        let client = BridgeClient::new(TcpBridge::new(addr));
        assert!(matches!(client.gruen(&["x".into()]), Err(BridgeError::Connect { .. })));
        assert!(matches!(client.score("x"), Err(AugmentError::ScorerUnavailable(_))));
    }
}
