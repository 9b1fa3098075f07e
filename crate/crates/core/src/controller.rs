//! The gap-aware repair loop and the baseline controllers.
//!
//! All controllers share retrieval (one index namespace), generation and
//! judging; they differ only in how the evidence handed to the generator is
//! chosen.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{Chunk, Example, Tokenizer};
use crate::error::{Error, Result};
use crate::evaluate::{evidence_prf, ExampleResult};
use crate::index::{RetrievalHit, VectorIndex};
use crate::oracle::markup::strip_question_markup;
use crate::oracle::{normalize_answer, Answer, Gap, Ledger, Oracle, SufficiencyVerdict};
use crate::scoring::{utility_map, NoveltyMode, QuestionState, ScoredCandidate, Scorer, TermBreakdown, UtilityWeights};
use crate::selection::{effective_capacity, replace_update, EvidenceState, ScoredChunk};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Adagate,
    Basic,
    AdaptiveK,
    SealStyle,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Adagate => "adagate",
            Mode::Basic => "basic",
            Mode::AdaptiveK => "adaptive_k",
            Mode::SealStyle => "seal_style",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adagate" => Ok(Mode::Adagate),
            "basic" => Ok(Mode::Basic),
            "adaptive_k" | "adaptive-k" => Ok(Mode::AdaptiveK),
            "seal_style" | "seal-style" => Ok(Mode::SealStyle),
            other => Err(Error::invalid(format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    pub mode: Mode,
    /// Maximum repair iterations (L).
    pub max_iterations: usize,
    /// Retrieval depth per query.
    pub k: usize,
    /// Token budget for the evidence set.
    pub budget: usize,
    /// Buffer added to the largest-drop index when estimating capacity.
    pub buffer: usize,
    pub weights: UtilityWeights,
    pub namespace: String,
    /// Retrieval depth for the adaptive-k baseline.
    pub adaptive_k_pool: usize,
    pub novelty: NoveltyMode,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            mode: Mode::Adagate,
            max_iterations: 1,
            k: 3,
            budget: 3000,
            buffer: 2,
            weights: UtilityWeights::default(),
            namespace: "clean".into(),
            adaptive_k_pool: 20,
            novelty: NoveltyMode::Markup,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::invalid("max iterations (L) must be at least 1"));
        }
        if self.k == 0 {
            return Err(Error::invalid("retrieval depth k must be at least 1"));
        }
        if self.budget == 0 {
            return Err(Error::invalid("token budget must be positive"));
        }
        if self.adaptive_k_pool == 0 {
            return Err(Error::invalid("adaptive-k pool must be positive"));
        }
        self.weights.validate()
    }
}

/// Shared, read-only collaborators for a run.
#[derive(Clone, Copy)]
pub struct Backends<'a> {
    pub index: &'a VectorIndex,
    pub oracle: &'a dyn Oracle,
    pub tokenizer: &'a dyn Tokenizer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    Sufficient,
    NoUsefulRepair,
    MaxIterations,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Question,
    Gap,
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelHit {
    pub channel: Channel,
    pub query: String,
    #[serde(flatten)]
    pub hit: RetrievalHit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub chunk_id: String,
    pub title: String,
    pub token_len: usize,
    #[serde(flatten)]
    pub terms: TermBreakdown,
}

impl From<&ScoredCandidate> for CandidateRecord {
    fn from(s: &ScoredCandidate) -> Self {
        CandidateRecord {
            chunk_id: s.chunk.chunk_id.clone(),
            title: s.chunk.title.clone(),
            token_len: s.chunk.token_len,
            terms: s.terms,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<SufficiencyVerdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ledger_size: Option<usize>,
    pub gap_queries: Vec<String>,
    pub fallback_queries: Vec<String>,
    pub hits: Vec<ChannelHit>,
    pub candidates: Vec<CandidateRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_eff: Option<usize>,
    pub selected: Vec<String>,
    pub used_tokens: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerTrace {
    pub example_id: String,
    pub mode: Mode,
    pub iterations: Vec<IterationRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub termination_reason: Option<TerminationReason>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_verdict: Option<SufficiencyVerdict>,
    pub final_answer: Answer,
    pub selected: Vec<String>,
    pub selected_titles: Vec<String>,
    pub input_tokens: usize,
    pub docs_passed: usize,
    pub ledger_extractions: usize,
    /// Retrieval calls issued by repair iterations (seed retrieval excluded).
    pub repair_retrievals: usize,
    #[serde(skip)]
    pub evidence: Vec<Chunk>,
}

struct TraceBuilder<'a> {
    example: &'a Example,
    mode: Mode,
    iterations: Vec<IterationRecord>,
    ledger_extractions: usize,
    repair_retrievals: usize,
}

impl<'a> TraceBuilder<'a> {
    fn new(example: &'a Example, mode: Mode) -> Self {
        TraceBuilder {
            example,
            mode,
            iterations: Vec::new(),
            ledger_extractions: 0,
            repair_retrievals: 0,
        }
    }

    fn finish(
        self,
        evidence: Vec<Chunk>,
        termination_reason: Option<TerminationReason>,
        final_verdict: Option<SufficiencyVerdict>,
        backends: &Backends<'_>,
    ) -> Result<ControllerTrace> {
        let final_answer = backends.oracle.generate_answer(&self.example.question, &evidence)?;
        let input_tokens =
            backends.tokenizer.count(&self.example.question) + evidence.iter().map(|c| c.token_len).sum::<usize>();
        Ok(ControllerTrace {
            example_id: self.example.id.clone(),
            mode: self.mode,
            iterations: self.iterations,
            termination_reason,
            final_verdict,
            final_answer,
            selected: evidence.iter().map(|c| c.chunk_id.clone()).collect(),
            selected_titles: evidence.iter().map(|c| c.title.clone()).collect(),
            input_tokens,
            docs_passed: evidence.len(),
            ledger_extractions: self.ledger_extractions,
            repair_retrievals: self.repair_retrievals,
            evidence,
        })
    }
}

fn record_hits(channel: Channel, query: &str, hits: &[(RetrievalHit, Chunk)]) -> Vec<ChannelHit> {
    hits.iter()
        .map(|(h, _)| ChannelHit {
            channel,
            query: query.to_string(),
            hit: h.clone(),
        })
        .collect()
}

fn to_scored(ranked: &[ScoredCandidate]) -> Vec<ScoredChunk> {
    ranked
        .iter()
        .map(|s| ScoredChunk::new(s.chunk.clone(), s.terms.utility))
        .collect()
}

/// Runs the extract, search, score and replace loop for one example.
///
/// Iteration 0 retrieves `k` passages for the question and selects among them.
/// Each repair iteration extracts the ledger, stops if it is sufficient,
/// otherwise retrieves `k` passages per gap micro-query and per fallback
/// query, ranks the union with the current evidence and re-selects. The loop
/// stops early when the selection is a fixed point and no new candidate
/// outscores the weakest selected passage; exhausting `L` iterations reports
/// `max_iterations`.
pub fn run_adagate(example: &Example, config: &ControllerConfig, backends: &Backends<'_>) -> Result<ControllerTrace> {
    config.validate()?;
    let question = example.question.as_str();
    let seed_query = strip_question_markup(question);
    let scorer = Scorer::new(backends.index.embedder().as_ref(), config.weights, config.novelty);
    let mut tb = TraceBuilder::new(example, Mode::Adagate);

    let seed_hits = backends.index.retrieve(&config.namespace, &seed_query, config.k)?;
    let seed_pool: Vec<Chunk> = seed_hits.iter().map(|(_, c)| c.clone()).collect();
    let empty = Ledger::new();
    let ranked = scorer.rank_pool(
        &seed_pool,
        &QuestionState {
            question,
            ledger: &empty,
            gaps: &[],
        },
    )?;
    let seeded = replace_update(
        &EvidenceState::empty(config.budget),
        &to_scored(&ranked),
        |_| 0.0,
        config.buffer,
    )?;
    let mut state = seeded.state;
    state.iteration = 0;
    tb.iterations.push(IterationRecord {
        iteration: 0,
        hits: record_hits(Channel::Question, &seed_query, &seed_hits),
        candidates: ranked.iter().map(CandidateRecord::from).collect(),
        k_eff: (!ranked.is_empty()).then_some(seeded.k_eff),
        selected: state.ids().iter().map(|s| s.to_string()).collect(),
        used_tokens: state.used_tokens,
        ..Default::default()
    });

    let mut reason = None;
    let mut last_ledger: Option<(Ledger, SufficiencyVerdict)> = None;
    for t in 1..=config.max_iterations {
        let last = t == config.max_iterations;
        let extraction = backends.oracle.extract_ledger(&state.selected)?;
        tb.ledger_extractions += 1;
        let ledger = extraction.ledger;
        let verdict = backends.oracle.assess_sufficiency(question, &ledger)?;
        let mut rec = IterationRecord {
            iteration: t,
            verdict: Some(verdict.clone()),
            ledger_size: Some(ledger.len()),
            warnings: extraction.warnings,
            ..Default::default()
        };
        if verdict.sufficient {
            rec.selected = state.ids().iter().map(|s| s.to_string()).collect();
            rec.used_tokens = state.used_tokens;
            tb.iterations.push(rec);
            reason = Some(TerminationReason::Sufficient);
            break;
        }

        let plan = backends.oracle.make_queries(question, &verdict.gaps);
        rec.gap_queries = plan.gap_queries.clone();
        rec.fallback_queries = plan.fallback_queries.clone();
        if plan.is_empty() {
            rec.selected = state.ids().iter().map(|s| s.to_string()).collect();
            rec.used_tokens = state.used_tokens;
            tb.iterations.push(rec);
            reason = Some(if last {
                TerminationReason::MaxIterations
            } else {
                TerminationReason::NoUsefulRepair
            });
            last_ledger = Some((ledger, verdict));
            break;
        }

        let mut seen: HashSet<String> = state.selected.iter().map(|c| c.chunk_id.clone()).collect();
        let mut new_chunks: Vec<Chunk> = Vec::new();
        let channels = plan
            .gap_queries
            .iter()
            .map(|q| (Channel::Gap, q))
            .chain(plan.fallback_queries.iter().map(|q| (Channel::Fallback, q)));
        for (channel, q) in channels {
            let hits = backends.index.retrieve(&config.namespace, q, config.k)?;
            tb.repair_retrievals += 1;
            rec.hits.extend(record_hits(channel, q, &hits));
            for (_, c) in hits {
                if seen.insert(c.chunk_id.clone()) {
                    new_chunks.push(c);
                }
            }
        }

        let mut pool = state.selected.clone();
        pool.extend(new_chunks.iter().cloned());
        let qstate = QuestionState {
            question,
            ledger: &ledger,
            gaps: &verdict.gaps,
        };
        let ranked = scorer.rank_pool(&pool, &qstate)?;
        let utilities = utility_map(&ranked);
        let current_ids: HashSet<&str> = state.ids().into_iter().collect();
        let new_scored: Vec<ScoredChunk> = to_scored(&ranked)
            .into_iter()
            .filter(|s| !current_ids.contains(s.chunk.chunk_id.as_str()))
            .collect();
        let out = replace_update(&state, &new_scored, |c| utilities[&c.chunk_id], config.buffer)?;

        let before: HashSet<&str> = current_ids;
        let after: HashSet<&str> = out.state.ids().into_iter().collect();
        let unchanged = before == after;
        let max_new = new_scored.iter().map(|s| s.utility).fold(f64::NEG_INFINITY, f64::max);
        let min_selected = out
            .state
            .selected
            .iter()
            .map(|c| utilities[&c.chunk_id])
            .fold(f64::INFINITY, f64::min);

        rec.candidates = ranked.iter().map(CandidateRecord::from).collect();
        rec.k_eff = (!ranked.is_empty()).then_some(out.k_eff);
        rec.selected = out.state.ids().iter().map(|s| s.to_string()).collect();
        rec.used_tokens = out.state.used_tokens;
        tb.iterations.push(rec);
        state = out.state;

        if last {
            reason = Some(TerminationReason::MaxIterations);
            break;
        }
        if unchanged && max_new < min_selected {
            reason = Some(TerminationReason::NoUsefulRepair);
            last_ledger = Some((ledger, verdict));
            break;
        }
    }
    let reason = reason.unwrap_or(TerminationReason::MaxIterations);

    // final verdict is logged only; generation uses the evidence as is
    let final_verdict = match reason {
        TerminationReason::Sufficient => None,
        _ => match last_ledger {
            Some((_, v)) => Some(v),
            None => {
                let ex = backends.oracle.extract_ledger(&state.selected)?;
                tb.ledger_extractions += 1;
                Some(backends.oracle.assess_sufficiency(question, &ex.ledger)?)
            }
        },
    };
    tb.finish(state.selected, Some(reason), final_verdict, backends)
}

fn baseline_record(query: &str, hits: &[(RetrievalHit, Chunk)], selected: &[Chunk]) -> IterationRecord {
    IterationRecord {
        iteration: 0,
        hits: record_hits(Channel::Question, query, hits),
        selected: selected.iter().map(|c| c.chunk_id.clone()).collect(),
        used_tokens: selected.iter().map(|c| c.token_len).sum(),
        ..Default::default()
    }
}

/// Passage count chosen by the adaptive-k rule: cut at the largest adjacent
/// drop in the (descending) similarity scores.
pub fn adaptive_k_cut(scores: &[f64]) -> Result<usize> {
    if scores.is_empty() {
        return Ok(0);
    }
    effective_capacity(scores, 0)
}

fn entity_in_question(entity: &str, question: &str) -> bool {
    let e = normalize_answer(entity);
    let q = normalize_answer(question);
    let et: Vec<&str> = e.split_whitespace().collect();
    let qt: Vec<&str> = q.split_whitespace().collect();
    !et.is_empty() && qt.len() >= et.len() && qt.windows(et.len()).any(|w| w == et.as_slice())
}

/// Runs one of the baseline controllers.
///
/// - `basic`: the top-k passages for the question.
/// - `adaptive_k`: a deep pool cut at the largest similarity drop.
/// - `seal_style`: top-k, then only the passage sourcing the most confident
///   fact about an entity named in the question (top hit if none).
pub fn run_baseline(example: &Example, config: &ControllerConfig, backends: &Backends<'_>) -> Result<ControllerTrace> {
    config.validate()?;
    let query = strip_question_markup(&example.question);
    let mut tb = TraceBuilder::new(example, config.mode);
    let evidence: Vec<Chunk> = match config.mode {
        Mode::Basic => {
            let hits = backends.index.retrieve(&config.namespace, &query, config.k)?;
            let sel: Vec<Chunk> = hits.iter().map(|(_, c)| c.clone()).collect();
            tb.iterations.push(baseline_record(&query, &hits, &sel));
            sel
        }
        Mode::AdaptiveK => {
            let hits = backends
                .index
                .retrieve(&config.namespace, &query, config.adaptive_k_pool)?;
            let scores: Vec<f64> = hits.iter().map(|(h, _)| h.score).collect();
            let n = adaptive_k_cut(&scores)?;
            let sel: Vec<Chunk> = hits.iter().take(n).map(|(_, c)| c.clone()).collect();
            let mut rec = baseline_record(&query, &hits, &sel);
            rec.k_eff = Some(n);
            tb.iterations.push(rec);
            sel
        }
        Mode::SealStyle => {
            let hits = backends.index.retrieve(&config.namespace, &query, config.k)?;
            let retrieved: Vec<Chunk> = hits.iter().map(|(_, c)| c.clone()).collect();
            let extraction = backends.oracle.extract_ledger(&retrieved)?;
            tb.ledger_extractions += 1;
            let best = extraction
                .ledger
                .facts()
                .iter()
                .filter(|f| entity_in_question(&f.entity, &query))
                .fold(None, |best: Option<&crate::oracle::Fact>, f| match best {
                    Some(b) if b.confidence >= f.confidence => Some(b),
                    _ => Some(f),
                });
            let keep: Option<&Chunk> = match best {
                Some(f) => retrieved.iter().find(|c| c.chunk_id == f.source_chunk),
                None => retrieved.first(),
            };
            let sel: Vec<Chunk> = keep.into_iter().cloned().collect();
            let mut rec = baseline_record(&query, &hits, &sel);
            rec.ledger_size = Some(extraction.ledger.len());
            rec.warnings = extraction.warnings;
            tb.iterations.push(rec);
            sel
        }
        Mode::Adagate => return run_adagate(example, config, backends),
    };
    tb.finish(evidence, None, None, backends)
}

pub fn run_controller(
    example: &Example,
    config: &ControllerConfig,
    backends: &Backends<'_>,
) -> Result<ControllerTrace> {
    match config.mode {
        Mode::Adagate => run_adagate(example, config, backends),
        _ => run_baseline(example, config, backends),
    }
}

/// Runs the configured controller, judges the answer and scores the evidence.
pub fn run_example(
    example: &Example,
    condition: &str,
    config: &ControllerConfig,
    backends: &Backends<'_>,
) -> Result<(ControllerTrace, ExampleResult)> {
    let trace = run_controller(example, config, backends)?;
    let correct = backends
        .oracle
        .judge_answer(&example.question, &example.gold_answer, &trace.final_answer)?;
    let prf = evidence_prf(&trace.selected_titles, &example.gold_titles)?;
    let result = ExampleResult {
        example_id: example.id.clone(),
        condition: condition.to_string(),
        mode: config.mode.to_string(),
        correct,
        precision: prf.precision,
        recall: prf.recall,
        f1: prf.f1,
        input_tokens: trace.input_tokens,
        docs_passed: trace.docs_passed,
        termination_reason: trace.termination_reason,
    };
    Ok((trace, result))
}

/// Chunk ids mapped to gap lists, handy for inspecting traces.
pub fn gaps_by_iteration(trace: &ControllerTrace) -> HashMap<usize, Vec<Gap>> {
    trace
        .iterations
        .iter()
        .filter_map(|r| r.verdict.as_ref().map(|v| (r.iteration, v.gaps.clone())))
        .collect()
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::corpus::{chunk_corpus, Paragraph, WhitespaceTokenizer};
    use crate::index::HashEmbedder;
    use crate::oracle::RuleOracle;
    use crate::synth::{generate, SynthConfig};

    fn index_for(examples: &[Example]) -> VectorIndex {
        let index = VectorIndex::new(Arc::new(HashEmbedder::default()));
        index
            .upsert("clean", &chunk_corpus(examples, &WhitespaceTokenizer))
            .unwrap();
        index
    }

    fn run(example: &Example, index: &VectorIndex, mode: Mode, l: usize) -> ControllerTrace {
        let backends = Backends {
            index,
            oracle: &RuleOracle,
            tokenizer: &WhitespaceTokenizer,
        };
        let cfg = ControllerConfig {
            mode,
            max_iterations: l,
            ..ControllerConfig::default()
        };
        run_controller(example, &cfg, &backends).unwrap()
    }

    fn film_example(question: &str) -> Example {
        let p = |title: &str, body: &str| Paragraph {
            title: title.into(),
            sentences: vec![body.into()],
        };
        Example {
            id: "film".into(),
            question: question.into(),
            gold_answer: "Ada Stone".into(),
            gold_titles: ["Blue Harbor".to_string()].into(),
            paragraphs: vec![
                p(
                    "Blue Harbor",
                    "Blue Harbor is a harbor drama. ENT[Blue Harbor] REL[director] VAL[Ada Stone].",
                ),
                p("Red Canyon", "Red Canyon is a western about a canyon."),
                p("Green Valley", "Green Valley is a documentary about farming."),
            ],
        }
    }

    #[test]
    fn bridge_recovered_by_one_repair() {
        let world = generate(&SynthConfig {
            questions: 4,
            ..Default::default()
        })
        .unwrap();
        let index = index_for(&world.examples);
        for (ex, q) in world.examples.iter().zip(&world.questions) {
            let trace = run(ex, &index, Mode::Adagate, 1);
            assert!(!trace.iterations[0]
                .selected
                .iter()
                .any(|id| index.get("clean", id).unwrap().title == q.director));
            assert!(
                trace.selected_titles.contains(&q.director),
                "{:?}",
                trace.selected_titles
            );
            assert!(trace.selected_titles.contains(&q.film));
            let gaps = &gaps_by_iteration(&trace)[&1];
            assert_eq!(
                (gaps[0].entity.as_str(), gaps[0].relation.as_str()),
                (q.director.as_str(), "nationality")
            );
            assert_eq!(trace.termination_reason, Some(TerminationReason::MaxIterations));
            assert_eq!(trace.final_answer, Answer::Text(q.nationality.clone()));
            assert!(trace.final_verdict.as_ref().unwrap().sufficient);
            assert_eq!(trace.ledger_extractions, 2);
        }
    }

    #[test]
    fn sufficient_evidence_stops_before_repair() {
        let ex = film_example("Who directed Blue Harbor? SLOT[Blue Harbor|director]");
        let index = index_for(std::slice::from_ref(&ex));
        let trace = run(&ex, &index, Mode::Adagate, 3);
        assert_eq!(trace.termination_reason, Some(TerminationReason::Sufficient));
        assert_eq!(trace.iterations.len(), 2);
        assert_eq!(trace.repair_retrievals, 0);
        assert_eq!(trace.ledger_extractions, 1);
        assert!(trace.final_verdict.is_none());
        assert_eq!(trace.final_answer, Answer::Text("Ada Stone".into()));
    }

    #[test]
    fn unresolvable_gap_abstains() {
        let ex = film_example("Who scored Blue Harbor? SLOT[Blue Harbor|composer]");
        let index = index_for(std::slice::from_ref(&ex));
        let trace = run(&ex, &index, Mode::Adagate, 1);
        assert_eq!(trace.termination_reason, Some(TerminationReason::MaxIterations));
        assert!(trace.final_answer.is_abstain());
        assert!(!trace.final_verdict.unwrap().sufficient);
        assert!(trace.repair_retrievals > 0);

        let longer = run(&ex, &index, Mode::Adagate, 4);
        assert!(longer.final_answer.is_abstain());
        assert!(longer.iterations.len() <= 5);
        assert!(matches!(
            longer.termination_reason,
            Some(TerminationReason::NoUsefulRepair | TerminationReason::MaxIterations)
        ));
    }

    #[test]
    fn baselines_have_no_termination_reason() {
        let ex = film_example("Who directed Blue Harbor? SLOT[Blue Harbor|director]");
        let index = index_for(std::slice::from_ref(&ex));
        for mode in [Mode::Basic, Mode::AdaptiveK, Mode::SealStyle] {
            let trace = run(&ex, &index, mode, 1);
            assert_eq!(trace.termination_reason, None);
            assert!(trace.docs_passed >= 1);
            assert_eq!(trace.iterations.len(), 1);
        }
        let basic = run(&ex, &index, Mode::Basic, 1);
        assert_eq!(basic.docs_passed, 3);
        let seal = run(&ex, &index, Mode::SealStyle, 1);
        assert_eq!(seal.selected_titles, ["Blue Harbor"]);
    }

    #[test]
    fn adaptive_cut_of_empty_pool_is_zero() {
        assert_eq!(adaptive_k_cut(&[]).unwrap(), 0);
        assert_eq!(adaptive_k_cut(&[0.90, 0.85, 0.40, 0.38]).unwrap(), 2);
    }

    #[test]
    fn mode_names_round_trip() {
        for m in [Mode::Adagate, Mode::Basic, Mode::AdaptiveK, Mode::SealStyle] {
            assert_eq!(m.as_str().parse::<Mode>().unwrap(), m);
        }
        assert!("nope".parse::<Mode>().is_err());
    }
}
