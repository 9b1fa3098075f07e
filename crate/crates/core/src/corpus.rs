//! Multi-hop QA records, passage chunking and token accounting.
//!
//! Input is line-delimited JSON following the HotpotQA distractor schema:
//! `_id`, `question`, `answer`, `supporting_facts` (`[title, sentence_idx]`
//! pairs) and `context` (`[title, [sentences]]` pairs). Each context paragraph
//! becomes exactly one [`Chunk`] whose text is the title heading followed by
//! the body: `"<title>\n<body>"`.

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Counts tokens for budget accounting.
pub trait Tokenizer: Send + Sync {
    fn count(&self, text: &str) -> usize;
}

/// Whitespace-delimited token count. The default tokenizer.
#[derive(Debug, Clone, Copy, Default)]
pub struct WhitespaceTokenizer;

impl Tokenizer for WhitespaceTokenizer {
    fn count(&self, text: &str) -> usize {
        text.split_whitespace().count()
    }
}

/// Token count under the default tokenizer.
pub fn count_tokens(text: &str) -> usize {
    WhitespaceTokenizer.count(text)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Paragraph {
    pub title: String,
    pub sentences: Vec<String>,
}

impl Paragraph {
    /// Sentences joined by single spaces, each trimmed.
    pub fn body(&self) -> String {
        self.sentences
            .iter()
            .map(|s| s.trim())
            .filter(|s| !s.is_empty())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub id: String,
    pub question: String,
    pub gold_answer: String,
    pub gold_titles: BTreeSet<String>,
    pub paragraphs: Vec<Paragraph>,
}

impl Example {
    fn validate(&self, index: usize) -> Result<()> {
        let fail = |message: String| Error::Validation {
            index,
            id: self.id.clone(),
            message,
        };
        if self.question.trim().is_empty() {
            return Err(fail("question is empty".into()));
        }
        if self.gold_titles.is_empty() {
            return Err(fail("no supporting-fact titles".into()));
        }
        for gold in &self.gold_titles {
            if !self.paragraphs.iter().any(|p| &p.title == gold) {
                return Err(fail(format!("gold title `{gold}` is not among the context paragraphs")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Original,
    NoiseSyntax,
    NoiseCrossquery,
    RedundantVariant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: String,
    pub title: String,
    pub body: String,
    pub token_len: usize,
    pub source_example: String,
    pub provenance: Provenance,
}

impl Chunk {
    /// Builds a chunk with its token length computed by `tokenizer`.
    pub fn new(
        chunk_id: impl Into<String>,
        title: impl Into<String>,
        body: impl Into<String>,
        source_example: impl Into<String>,
        provenance: Provenance,
        tokenizer: &dyn Tokenizer,
    ) -> Self {
        let mut chunk = Chunk {
            chunk_id: chunk_id.into(),
            title: title.into(),
            body: body.into(),
            token_len: 0,
            source_example: source_example.into(),
            provenance,
        };
        chunk.token_len = tokenizer.count(&chunk.text());
        chunk
    }

    /// Passage text as indexed and shown to the generator: title heading, then body.
    pub fn text(&self) -> String {
        format!("{}\n{}", self.title, self.body)
    }
}

#[derive(Debug, Deserialize)]
struct RawRecord {
    #[serde(rename = "_id")]
    id: String,
    question: String,
    answer: String,
    supporting_facts: Vec<(String, serde_json::Value)>,
    context: Vec<(String, Vec<String>)>,
}

impl From<RawRecord> for Example {
    fn from(raw: RawRecord) -> Self {
        Example {
            id: raw.id,
            question: raw.question,
            gold_answer: raw.answer,
            gold_titles: raw.supporting_facts.into_iter().map(|(t, _)| t).collect(),
            paragraphs: raw
                .context
                .into_iter()
                .map(|(title, sentences)| Paragraph { title, sentences })
                .collect(),
        }
    }
}

/// Parses line-delimited records from any reader. Blank lines are skipped and
/// do not advance the record index.
pub fn parse_examples<R: BufRead>(reader: R, limit: Option<usize>) -> Result<Vec<Example>> {
    let mut out = Vec::new();
    let mut index = 0usize;
    for line in reader.lines() {
        if limit.is_some_and(|n| out.len() >= n) {
            break;
        }
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            index,
            message: e.to_string(),
        })?;
        let example = Example::from(raw);
        example.validate(index)?;
        out.push(example);
        index += 1;
    }
    Ok(out)
}

pub fn load_examples(path: &Path, limit: Option<usize>) -> Result<Vec<Example>> {
    let file = fs::File::open(path)?;
    parse_examples(BufReader::new(file), limit)
}

/// One chunk per context paragraph, ids `<example id>::<paragraph index>`.
pub fn chunk_corpus(examples: &[Example], tokenizer: &dyn Tokenizer) -> Vec<Chunk> {
    examples
        .iter()
        .flat_map(|ex| {
            ex.paragraphs.iter().enumerate().map(move |(i, p)| {
                Chunk::new(
                    format!("{}::{i}", ex.id),
                    p.title.clone(),
                    p.body(),
                    ex.id.clone(),
                    Provenance::Original,
                    tokenizer,
                )
            })
        })
        .collect()
}

pub fn write_chunks(path: &Path, chunks: &[Chunk]) -> Result<()> {
    let mut w = std::io::BufWriter::new(fs::File::create(path)?);
    for c in chunks {
        serde_json::to_writer(&mut w, c)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_chunks(path: &Path) -> Result<Vec<Chunk>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (index, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            index,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

/// The two-example fixture shipped with the crate.
pub const FIXTURE_JSONL: &str = include_str!("../fixtures/hotpot_fixture.jsonl");

pub fn fixture_examples() -> Vec<Example> {
    parse_examples(FIXTURE_JSONL.as_bytes(), None).expect("bundled fixture is valid")
}
