//! Model-dependent primitives behind one interface.
//!
//! [`RuleOracle`] is deterministic and reads the markup documented in
//! [`markup`]; [`LiveOracle`] calls a chat-completion endpoint with fixed
//! prompts.

pub mod live;
pub mod markup;
pub mod rules;

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::corpus::Chunk;
use crate::error::Result;

pub use live::LiveOracle;
pub use rules::RuleOracle;

/// Confidence below which a ledger fact counts as weakly supported.
pub const LOW_CONFIDENCE: f64 = 0.75;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fact {
    pub entity: String,
    pub relation: String,
    pub value: String,
    pub confidence: f64,
    pub source_chunk: String,
}

impl Fact {
    pub fn render(&self) -> String {
        format!("{} {} {}", self.entity, self.relation, self.value)
    }

    fn same_tuple(&self, other: &Fact) -> bool {
        self.entity == other.entity
            && self.relation == other.relation
            && self.value == other.value
            && self.source_chunk == other.source_chunk
    }
}

pub(crate) fn key_eq(a: &str, b: &str) -> bool {
    a.trim().to_lowercase() == b.trim().to_lowercase()
}

/// Facts extracted from the current evidence, in insertion order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Ledger {
    facts: Vec<Fact>,
}

impl Ledger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a fact unless the exact (entity, relation, value, source) tuple is
    /// present. Confidence is clamped into [0, 1]; empty entity or relation is
    /// rejected.
    pub fn insert(&mut self, mut fact: Fact) -> bool {
        if fact.entity.trim().is_empty() || fact.relation.trim().is_empty() {
            return false;
        }
        fact.confidence = if fact.confidence.is_finite() {
            fact.confidence.clamp(0.0, 1.0)
        } else {
            0.0
        };
        if self.facts.iter().any(|f| f.same_tuple(&fact)) {
            return false;
        }
        self.facts.push(fact);
        true
    }

    pub fn merge(&mut self, other: &Ledger) {
        for f in &other.facts {
            self.insert(f.clone());
        }
    }

    pub fn facts(&self) -> &[Fact] {
        &self.facts
    }

    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    /// True if any fact covers the (entity, relation) pair, ignoring case.
    pub fn has_pair(&self, entity: &str, relation: &str) -> bool {
        self.facts
            .iter()
            .any(|f| key_eq(&f.entity, entity) && key_eq(&f.relation, relation))
    }

    /// Highest-confidence fact for the pair; earliest inserted on ties.
    pub fn lookup(&self, entity: &str, relation: &str) -> Option<&Fact> {
        self.facts
            .iter()
            .filter(|f| key_eq(&f.entity, entity) && key_eq(&f.relation, relation))
            .fold(None, |best: Option<&Fact>, f| match best {
                Some(b) if b.confidence >= f.confidence => Some(b),
                _ => Some(f),
            })
    }
}

impl FromIterator<Fact> for Ledger {
    fn from_iter<I: IntoIterator<Item = Fact>>(iter: I) -> Self {
        let mut l = Ledger::new();
        for f in iter {
            l.insert(f);
        }
        l
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gap {
    pub entity: String,
    pub relation: String,
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SufficiencyVerdict {
    pub sufficient: bool,
    pub gaps: Vec<Gap>,
}

impl SufficiencyVerdict {
    pub fn sufficient() -> Self {
        SufficiencyVerdict {
            sufficient: true,
            gaps: Vec::new(),
        }
    }

    pub fn insufficient(gaps: Vec<Gap>) -> Self {
        SufficiencyVerdict {
            sufficient: false,
            gaps,
        }
    }
}

/// Ledger plus any degradation notes (e.g. unparseable model output).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Extraction {
    pub ledger: Ledger,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QueryPlan {
    pub gap_queries: Vec<String>,
    pub fallback_queries: Vec<String>,
}

impl QueryPlan {
    pub fn is_empty(&self) -> bool {
        self.gap_queries.is_empty() && self.fallback_queries.is_empty()
    }
}

pub const ABSTAIN_TEXT: &str = "I don't know";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Answer {
    Text(String),
    Abstain,
}

impl Answer {
    pub fn is_abstain(&self) -> bool {
        matches!(self, Answer::Abstain)
    }

    pub fn as_str(&self) -> &str {
        match self {
            Answer::Text(s) => s,
            Answer::Abstain => ABSTAIN_TEXT,
        }
    }

    /// Interprets free text, mapping empty or "I don't know" style replies to abstention.
    pub fn from_text(text: &str) -> Self {
        let t = text.trim();
        if t.is_empty() || normalize_answer(t) == normalize_answer(ABSTAIN_TEXT) {
            Answer::Abstain
        } else {
            Answer::Text(t.to_string())
        }
    }
}

impl fmt::Display for Answer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for Answer {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Answer {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(Answer::from_text(&s))
    }
}

/// Lowercase, punctuation replaced by spaces, whitespace collapsed.
pub fn normalize_answer(text: &str) -> String {
    text.to_lowercase()
        .chars()
        .map(|c| {
            if c.is_alphanumeric() || c.is_whitespace() {
                c
            } else {
                ' '
            }
        })
        .collect::<String>()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// Gold is correct if its normalised tokens appear as a contiguous run in the
/// prediction. Abstention is always incorrect.
pub fn containment_match(gold: &str, predicted: &Answer) -> bool {
    let Answer::Text(pred) = predicted else {
        return false;
    };
    let g = normalize_answer(gold);
    let p = normalize_answer(pred);
    let gt: Vec<&str> = g.split_whitespace().collect();
    let pt: Vec<&str> = p.split_whitespace().collect();
    if gt.is_empty() || pt.len() < gt.len() {
        return false;
    }
    pt.windows(gt.len()).any(|w| w == gt.as_slice())
}

const STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "by", "did", "do", "does", "for", "from", "had", "has", "have", "he",
    "her", "his", "how", "in", "is", "it", "its", "of", "on", "or", "she", "that", "the", "their", "this", "to", "was",
    "were", "what", "when", "where", "which", "who", "whom", "whose", "why", "with",
];

fn keywords(question: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for raw in question.split_whitespace() {
        let w = raw.trim_matches(|c: char| !c.is_alphanumeric());
        if w.is_empty() || STOPWORDS.contains(&w.to_lowercase().as_str()) {
            continue;
        }
        if !out.iter().any(|o| o == w) {
            out.push(w.to_string());
        }
    }
    out
}

/// One micro-query per gap (`"<entity> <relation>"`, in gap order) and
/// question-anchored fallbacks: the question itself, its content keywords,
/// and its capitalised keywords. Nothing is issued when there are no gaps.
pub fn plan_queries(question: &str, gaps: &[Gap]) -> QueryPlan {
    if gaps.is_empty() {
        return QueryPlan::default();
    }
    let gap_queries = gaps
        .iter()
        .map(|g| format!("{} {}", g.entity.trim(), g.relation.trim()))
        .collect();

    let question = markup::strip_question_markup(question);
    let mut fallback_queries = vec![question.clone()];
    let kw = keywords(&question);
    let named: Vec<String> = kw
        .iter()
        .filter(|w| w.chars().next().is_some_and(char::is_uppercase))
        .cloned()
        .collect();
    for subset in [kw, named] {
        let q = subset.join(" ");
        if !q.is_empty() && !fallback_queries.contains(&q) {
            fallback_queries.push(q);
        }
    }
    QueryPlan {
        gap_queries,
        fallback_queries,
    }
}

pub trait Oracle: Send + Sync {
    fn extract_ledger(&self, evidence: &[Chunk]) -> Result<Extraction>;

    fn assess_sufficiency(&self, question: &str, ledger: &Ledger) -> Result<SufficiencyVerdict>;

    fn make_queries(&self, question: &str, gaps: &[Gap]) -> QueryPlan {
        plan_queries(question, gaps)
    }

    fn generate_answer(&self, question: &str, evidence: &[Chunk]) -> Result<Answer>;

    fn judge_answer(&self, question: &str, gold: &str, predicted: &Answer) -> Result<bool>;
}
