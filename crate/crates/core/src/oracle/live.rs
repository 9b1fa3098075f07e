//! Chat-completion backed oracle.
//!
//! Requests use the common `/chat/completions` wire format with temperature 0
//! and the fixed prompts below. Replies that cannot be parsed degrade to an
//! empty ledger (with a warning) or an insufficient verdict without gaps.

use std::fs::File;
use std::io::Write;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::corpus::Chunk;
use crate::error::{Error, Result};
use crate::http::Endpoint;

use super::{Answer, Extraction, Fact, Gap, Ledger, Oracle, SufficiencyVerdict};

pub const LEDGER_PROMPT: &str = "You extract facts from passages. Read every passage and list the \
entity-relation-value facts it states that could help answer a multi-hop question. Reply with a \
JSON array only, no prose. Each element is an object with keys \"entity\", \"relation\", \"value\", \
\"confidence\" (a number between 0 and 1 reflecting how explicitly the passage states the fact) and \
\"source\" (the passage id shown in square brackets).";

pub const GAP_PROMPT: &str = "You decide whether known facts are enough to answer a question. \
Reply with a JSON object only: {\"sufficient\": true|false, \"gaps\": [{\"entity\": ..., \
\"relation\": ..., \"rationale\": ...}]}. List a gap for every missing fact needed to answer, naming \
the entity the fact is about and the relation that is missing. When sufficient is true, gaps must be \
empty.";

pub const ANSWER_PROMPT: &str = "Answer the question using only the passages provided. Reply with \
the shortest answer that is fully supported by the passages. If the passages do not support an \
answer, reply exactly: I don't know";

pub const JUDGE_PROMPT: &str = "You grade answers. Given a question, the gold answer and a predicted \
answer, decide whether the prediction means the same as the gold answer. Reply with exactly one \
word: correct or incorrect.";

#[derive(Clone)]
pub struct LiveOracle {
    endpoint: Endpoint,
    model: String,
    judge_model: String,
    log: Option<Arc<Mutex<File>>>,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    temperature: f64,
    messages: Vec<ChatMessage<'a>>,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatReply,
}

#[derive(Deserialize)]
struct ChatReply {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct RawFact {
    entity: String,
    relation: String,
    #[serde(default)]
    value: String,
    #[serde(default = "default_confidence")]
    confidence: f64,
    #[serde(default)]
    source: String,
}

fn default_confidence() -> f64 {
    1.0
}

#[derive(Deserialize)]
struct RawVerdict {
    sufficient: bool,
    #[serde(default)]
    gaps: Vec<RawGap>,
}

#[derive(Deserialize)]
struct RawGap {
    entity: String,
    relation: String,
    #[serde(default)]
    rationale: String,
}

/// Slice from the first `open` to the last `close`, tolerating code fences and prose.
fn json_span(text: &str, open: char, close: char) -> Option<&str> {
    let start = text.find(open)?;
    let end = text.rfind(close)?;
    (end > start).then(|| &text[start..=end])
}

fn render_passages(evidence: &[Chunk]) -> String {
    evidence
        .iter()
        .map(|c| format!("[{}] {}", c.chunk_id, c.text()))
        .collect::<Vec<_>>()
        .join("\n\n")
}

impl LiveOracle {
    pub fn new(endpoint: Endpoint, model: impl Into<String>, judge_model: impl Into<String>) -> Self {
        LiveOracle {
            endpoint,
            model: model.into(),
            judge_model: judge_model.into(),
            log: None,
        }
    }

    /// Appends every request and response body to `file`, one JSON object per line.
    pub fn with_log(mut self, file: File) -> Self {
        self.log = Some(Arc::new(Mutex::new(file)));
        self
    }

    fn chat(&self, model: &str, system: &str, user: &str) -> Result<String> {
        let request = ChatRequest {
            model,
            temperature: 0.0,
            messages: vec![
                ChatMessage {
                    role: "system",
                    content: system,
                },
                ChatMessage {
                    role: "user",
                    content: user,
                },
            ],
        };
        let resp: ChatResponse = self.endpoint.post_json(&request)?;
        let content = resp
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| Error::Schema("chat response has no message content".into()))?;
        if let Some(log) = &self.log {
            let line = json!({ "request": request, "response": content });
            let mut f = log.lock().expect("log lock poisoned");
            writeln!(f, "{line}")?;
        }
        Ok(content)
    }

    fn parse_ledger(reply: &str, evidence: &[Chunk]) -> Extraction {
        let parsed = json_span(reply, '[', ']').and_then(|s| serde_json::from_str::<Vec<RawFact>>(s).ok());
        let Some(raw) = parsed else {
            return Extraction {
                ledger: Ledger::new(),
                warnings: vec![format!("unparseable ledger reply: {}", truncate(reply, 120))],
            };
        };
        let fallback_source = evidence.first().map(|c| c.chunk_id.clone()).unwrap_or_default();
        let mut warnings = Vec::new();
        let mut ledger = Ledger::new();
        for f in raw {
            let source = if evidence.iter().any(|c| c.chunk_id == f.source) {
                f.source
            } else {
                warnings.push(format!("fact cites unknown passage `{}`", f.source));
                fallback_source.clone()
            };
            ledger.insert(Fact {
                entity: f.entity,
                relation: f.relation,
                value: f.value,
                confidence: f.confidence,
                source_chunk: source,
            });
        }
        Extraction { ledger, warnings }
    }

    fn parse_verdict(reply: &str, ledger: &Ledger) -> SufficiencyVerdict {
        let Some(raw) = json_span(reply, '{', '}').and_then(|s| serde_json::from_str::<RawVerdict>(s).ok()) else {
            log::warn!("unparseable sufficiency reply: {}", truncate(reply, 120));
            return SufficiencyVerdict::insufficient(Vec::new());
        };
        if raw.sufficient {
            return SufficiencyVerdict::sufficient();
        }
        SufficiencyVerdict::insufficient(
            raw.gaps
                .into_iter()
                .filter(|g| !g.entity.trim().is_empty() && !g.relation.trim().is_empty())
                .filter(|g| !ledger.has_pair(&g.entity, &g.relation))
                .map(|g| Gap {
                    entity: g.entity,
                    relation: g.relation,
                    rationale: g.rationale,
                })
                .collect(),
        )
    }
}

fn truncate(s: &str, n: usize) -> String {
    s.chars().take(n).collect()
}

impl Oracle for LiveOracle {
    fn extract_ledger(&self, evidence: &[Chunk]) -> Result<Extraction> {
        if evidence.is_empty() {
            return Ok(Extraction::default());
        }
        let reply = self.chat(&self.model, LEDGER_PROMPT, &render_passages(evidence))?;
        Ok(Self::parse_ledger(&reply, evidence))
    }

    fn assess_sufficiency(&self, question: &str, ledger: &Ledger) -> Result<SufficiencyVerdict> {
        let facts = ledger
            .facts()
            .iter()
            .map(|f| {
                format!(
                    "- {} | {} | {} (confidence {:.2})",
                    f.entity, f.relation, f.value, f.confidence
                )
            })
            .collect::<Vec<_>>()
            .join("\n");
        let user = format!("Question: {question}\n\nKnown facts:\n{facts}");
        let reply = self.chat(&self.model, GAP_PROMPT, &user)?;
        Ok(Self::parse_verdict(&reply, ledger))
    }

    fn generate_answer(&self, question: &str, evidence: &[Chunk]) -> Result<Answer> {
        let user = format!("Passages:\n{}\n\nQuestion: {question}", render_passages(evidence));
        let reply = self.chat(&self.model, ANSWER_PROMPT, &user)?;
        Ok(Answer::from_text(&reply))
    }

    fn judge_answer(&self, question: &str, gold: &str, predicted: &Answer) -> Result<bool> {
        if predicted.is_abstain() {
            return Ok(false);
        }
        let user = format!(
            "Question: {question}\nGold answer: {gold}\nPredicted answer: {}",
            predicted.as_str()
        );
        let reply = self.chat(&self.judge_model, JUDGE_PROMPT, &user)?;
        Ok(reply.trim().to_lowercase().starts_with("correct"))
    }
}
