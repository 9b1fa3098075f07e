//! Candidate utility: a weighted sum of gap coverage, corroboration, novelty,
//! redundancy (subtracted) and question relevance. Every term lies in [0, 1].
//!
//! Term definitions:
//!
//! - gap coverage: best cosine between the candidate and any gap micro-query
//!   (`"<entity> <relation>"`); 0 without gaps.
//! - corroboration: best cosine between the candidate and any low-confidence
//!   ledger fact rendered as text, excluding facts the candidate itself
//!   sourced; 0 when no such fact exists.
//! - novelty: fraction of the candidate's entity-relation pairs (markup mode)
//!   or capitalised tokens (named-token mode) not already known from other
//!   passages; 0 when the candidate contributes none. Facts the candidate
//!   itself sourced do not count as known.
//! - redundancy: best cosine with any other chunk already in the evidence.
//! - relevance: cosine with the question, markup stripped.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::corpus::Chunk;
use crate::error::{Error, Result};
use crate::index::{Embedder, Vector};
use crate::oracle::markup::{parse_facts, strip_question_markup};
use crate::oracle::{Gap, Ledger, LOW_CONFIDENCE};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UtilityWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub lambda4: f64,
    pub lambda5: f64,
}

impl Default for UtilityWeights {
    fn default() -> Self {
        UtilityWeights {
            lambda1: 0.30,
            lambda2: 0.15,
            lambda3: 0.15,
            lambda4: 0.25,
            lambda5: 0.15,
        }
    }
}

impl UtilityWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.lambda1, self.lambda2, self.lambda3, self.lambda4, self.lambda5];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid("utility weights must be finite and non-negative"));
        }
        if all.iter().all(|w| *w == 0.0) {
            return Err(Error::invalid("at least one utility weight must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TermBreakdown {
    pub gap_cov: f64,
    pub corr: f64,
    pub nov: f64,
    pub red: f64,
    pub rel_q: f64,
    pub utility: f64,
}

impl TermBreakdown {
    /// Clamps each term into [0, 1] and combines them linearly.
    pub fn combine(gap_cov: f64, corr: f64, nov: f64, red: f64, rel_q: f64, w: &UtilityWeights) -> Self {
        let c = |x: f64| if x.is_finite() { x.clamp(0.0, 1.0) } else { 0.0 };
        let (gap_cov, corr, nov, red, rel_q) = (c(gap_cov), c(corr), c(nov), c(red), c(rel_q));
        TermBreakdown {
            gap_cov,
            corr,
            nov,
            red,
            rel_q,
            utility: w.lambda1 * gap_cov + w.lambda2 * corr + w.lambda3 * nov - w.lambda4 * red + w.lambda5 * rel_q,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoveltyMode {
    /// Entity-relation pairs read from `ENT[..] REL[..] VAL[..]` markup.
    #[default]
    Markup,
    /// Capitalised tokens, for corpora without markup.
    NamedTokens,
}

/// What the controller knows about the question at scoring time.
#[derive(Debug, Clone, Copy)]
pub struct QuestionState<'a> {
    pub question: &'a str,
    pub ledger: &'a Ledger,
    pub gaps: &'a [Gap],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub chunk: Chunk,
    pub terms: TermBreakdown,
}

fn named_tokens(text: &str) -> HashSet<String> {
    text.split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()))
        .filter(|w| w.chars().next().is_some_and(char::is_uppercase))
        .map(str::to_lowercase)
        .collect()
}

fn markup_pairs(text: &str) -> HashSet<(String, String)> {
    parse_facts(text)
        .into_iter()
        .map(|f| (f.entity.to_lowercase(), f.relation.to_lowercase()))
        .collect()
}

/// Known novelty units: ledger units with the chunks that sourced them, plus
/// units carried by candidates already picked while ranking a pool.
#[derive(Debug, Clone)]
struct Known<T> {
    ledger: HashMap<T, HashSet<String>>,
    picked: HashSet<T>,
}

impl<T: Eq + std::hash::Hash + Clone> Known<T> {
    fn new(units: impl IntoIterator<Item = (T, String)>) -> Self {
        let mut ledger: HashMap<T, HashSet<String>> = HashMap::new();
        for (u, src) in units {
            ledger.entry(u).or_default().insert(src);
        }
        Known {
            ledger,
            picked: HashSet::new(),
        }
    }

    /// A unit stays novel for the chunk that sourced it; otherwise retained
    /// evidence would lose its own contribution once extracted.
    fn novelty(&self, chunk_id: &str, units: &HashSet<T>) -> f64 {
        if units.is_empty() {
            return 0.0;
        }
        let known = |u: &T| {
            self.picked.contains(u)
                || self
                    .ledger
                    .get(u)
                    .is_some_and(|srcs| srcs.iter().any(|s| s != chunk_id))
        };
        units.iter().filter(|u| !known(u)).count() as f64 / units.len() as f64
    }
}

#[derive(Debug, Clone)]
enum Novelty {
    Pairs(Known<(String, String)>),
    Names(Known<String>),
}

impl Novelty {
    fn from_ledger(mode: NoveltyMode, ledger: &Ledger) -> Self {
        match mode {
            NoveltyMode::Markup => Novelty::Pairs(Known::new(ledger.facts().iter().map(|f| {
                (
                    (f.entity.trim().to_lowercase(), f.relation.trim().to_lowercase()),
                    f.source_chunk.clone(),
                )
            }))),
            NoveltyMode::NamedTokens => Novelty::Names(Known::new(ledger.facts().iter().flat_map(|f| {
                named_tokens(&format!("{} {}", f.entity, f.value))
                    .into_iter()
                    .map(|n| (n, f.source_chunk.clone()))
            }))),
        }
    }

    fn novelty(&self, chunk: &Chunk) -> f64 {
        match self {
            Novelty::Pairs(k) => k.novelty(&chunk.chunk_id, &markup_pairs(&chunk.body)),
            Novelty::Names(k) => k.novelty(&chunk.chunk_id, &named_tokens(&chunk.text())),
        }
    }

    fn absorb(&mut self, chunk: &Chunk) {
        match self {
            Novelty::Pairs(k) => k.picked.extend(markup_pairs(&chunk.body)),
            Novelty::Names(k) => k.picked.extend(named_tokens(&chunk.text())),
        }
    }
}

/// Query-side vectors computed once per question state.
struct Prepared {
    question: Vector,
    gaps: Vec<Vector>,
    weak_facts: Vec<(String, Vector)>,
}

fn max_cos<'v>(v: &Vector, others: impl IntoIterator<Item = &'v Vector>) -> f64 {
    others.into_iter().map(|o| v.cosine(o)).fold(0.0, f64::max)
}

pub struct Scorer<'a> {
    embedder: &'a dyn Embedder,
    weights: UtilityWeights,
    novelty: NoveltyMode,
}

impl<'a> Scorer<'a> {
    pub fn new(embedder: &'a dyn Embedder, weights: UtilityWeights, novelty: NoveltyMode) -> Self {
        Scorer {
            embedder,
            weights,
            novelty,
        }
    }

    pub fn weights(&self) -> &UtilityWeights {
        &self.weights
    }

    fn prepare(&self, state: &QuestionState<'_>) -> Result<Prepared> {
        let weak: Vec<_> = state
            .ledger
            .facts()
            .iter()
            .filter(|f| f.confidence < LOW_CONFIDENCE)
            .collect();
        let mut texts = vec![strip_question_markup(state.question)];
        texts.extend(state.gaps.iter().map(|g| format!("{} {}", g.entity, g.relation)));
        texts.extend(weak.iter().map(|f| f.render()));
        let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
        let mut vecs = self.embedder.embed(&refs)?.into_iter();
        let question = vecs.next().expect("question vector");
        let gaps = vecs.by_ref().take(state.gaps.len()).collect();
        let weak_facts = weak.iter().map(|f| f.source_chunk.clone()).zip(vecs).collect();
        Ok(Prepared {
            question,
            gaps,
            weak_facts,
        })
    }

    fn embed_chunks(&self, chunks: &[&Chunk]) -> Result<Vec<Vector>> {
        let texts: Vec<String> = chunks.iter().map(|c| c.text()).collect();
        let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
        self.embedder.embed(&refs)
    }

    fn terms(&self, p: &Prepared, chunk: &Chunk, v: &Vector, nov: f64, red: f64) -> TermBreakdown {
        let gap_cov = max_cos(v, &p.gaps);
        let corr = max_cos(
            v,
            p.weak_facts
                .iter()
                .filter(|(src, _)| *src != chunk.chunk_id)
                .map(|(_, fv)| fv),
        );
        let rel_q = v.cosine(&p.question);
        TermBreakdown::combine(gap_cov, corr, nov, red, rel_q, &self.weights)
    }

    /// Scores one candidate against the current question state and evidence.
    /// Evidence entries sharing the candidate's id are ignored for redundancy.
    pub fn score_candidate(
        &self,
        candidate: &Chunk,
        state: &QuestionState<'_>,
        evidence: &[Chunk],
    ) -> Result<TermBreakdown> {
        let p = self.prepare(state)?;
        let others: Vec<&Chunk> = evidence.iter().filter(|e| e.chunk_id != candidate.chunk_id).collect();
        let mut all = vec![candidate];
        all.extend(others.iter().copied());
        let vecs = self.embed_chunks(&all)?;
        let red = max_cos(&vecs[0], &vecs[1..]);
        let nov = Novelty::from_ledger(self.novelty, state.ledger).novelty(candidate);
        Ok(self.terms(&p, candidate, &vecs[0], nov, red))
    }

    /// Orders a candidate pool greedily: each step picks the highest-utility
    /// remaining candidate, where redundancy and novelty are measured against
    /// the candidates already picked (and the ledger). The returned utilities
    /// are therefore non-increasing. Duplicate ids keep their first occurrence;
    /// ties go to the smaller chunk id.
    pub fn rank_pool(&self, pool: &[Chunk], state: &QuestionState<'_>) -> Result<Vec<ScoredCandidate>> {
        let mut seen = HashSet::new();
        let pool: Vec<&Chunk> = pool.iter().filter(|c| seen.insert(c.chunk_id.as_str())).collect();
        if pool.is_empty() {
            return Ok(Vec::new());
        }
        let p = self.prepare(state)?;
        let vecs = self.embed_chunks(&pool)?;
        let mut known = Novelty::from_ledger(self.novelty, state.ledger);
        let mut red = vec![0.0f64; pool.len()];
        let mut remaining: Vec<usize> = (0..pool.len()).collect();
        let mut out = Vec::with_capacity(pool.len());
        while !remaining.is_empty() {
            let mut best: Option<(usize, TermBreakdown)> = None;
            for (slot, &i) in remaining.iter().enumerate() {
                let t = self.terms(&p, pool[i], &vecs[i], known.novelty(pool[i]), red[i]);
                let better = match &best {
                    None => true,
                    Some((bs, bt)) => {
                        t.utility > bt.utility
                            || (t.utility == bt.utility && pool[i].chunk_id < pool[remaining[*bs]].chunk_id)
                    }
                };
                if better {
                    best = Some((slot, t));
                }
            }
            let (slot, terms) = best.expect("remaining is non-empty");
            let picked = remaining.remove(slot);
            known.absorb(pool[picked]);
            for &i in &remaining {
                red[i] = red[i].max(vecs[i].cosine(&vecs[picked]).max(0.0));
            }
            out.push(ScoredCandidate {
                chunk: pool[picked].clone(),
                terms,
            });
        }
        Ok(out)
    }
}

/// Utilities keyed by chunk id.
pub fn utility_map(ranked: &[ScoredCandidate]) -> HashMap<String, f64> {
    ranked
        .iter()
        .map(|s| (s.chunk.chunk_id.clone(), s.terms.utility))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Provenance, WhitespaceTokenizer};
    use crate::index::HashEmbedder;
    use crate::oracle::{Fact, RuleOracle};
    use proptest::prelude::*;

    fn chunk(id: &str, title: &str, body: &str) -> Chunk {
        Chunk::new(id, title, body, "ex", Provenance::Original, &WhitespaceTokenizer)
    }

    const Q: &str =
        "What is the nationality of the director of Blue Harbor? SLOT[Blue Harbor|director] SLOT[$1|nationality]";

    fn film() -> Chunk {
        chunk(
            "film",
            "Blue Harbor",
            "Blue Harbor is a 1998 drama film. ENT[Blue Harbor] REL[director] VAL[Ada Stone].",
        )
    }

    #[test]
    fn linear_combination() {
        let w = UtilityWeights::default();
        assert_eq!(TermBreakdown::combine(0.0, 0.0, 0.0, 0.0, 0.0, &w).utility, 0.0);
        assert_eq!(TermBreakdown::combine(1.0, 0.0, 0.0, 0.0, 0.0, &w).utility, 0.30);
        let t = TermBreakdown::combine(2.0, -1.0, f64::NAN, 0.5, 0.5, &w);
        assert_eq!((t.gap_cov, t.corr, t.nov), (1.0, 0.0, 0.0));
    }

    #[test]
    fn weight_validation() {
        assert!(UtilityWeights::default().validate().is_ok());
        let w = UtilityWeights {
            lambda4: -0.1,
            ..UtilityWeights::default()
        };
        assert!(w.validate().is_err());
        let zero = UtilityWeights {
            lambda1: 0.0,
            lambda2: 0.0,
            lambda3: 0.0,
            lambda4: 0.0,
            lambda5: 0.0,
        };
        assert!(zero.validate().is_err());
    }

    #[test]
    fn degenerate_states() {
        let e = HashEmbedder::default();
        let s = Scorer::new(&e, UtilityWeights::default(), NoveltyMode::Markup);
        let ledger = Ledger::new();
        let state = QuestionState {
            question: Q,
            ledger: &ledger,
            gaps: &[],
        };
        let t = s.score_candidate(&film(), &state, &[]).unwrap();
        assert_eq!(t.red, 0.0);
        assert_eq!(t.gap_cov, 0.0);
        assert_eq!(t.corr, 0.0);
        assert_eq!(t.nov, 1.0);
        assert!(t.rel_q > 0.0);
    }

    #[test]
    fn exact_copy_scores_below_original() {
        let e = HashEmbedder::default();
        let s = Scorer::new(&e, UtilityWeights::default(), NoveltyMode::Markup);
        let empty = Ledger::new();
        let original = film();
        let at_selection = s
            .score_candidate(
                &original,
                &QuestionState {
                    question: Q,
                    ledger: &empty,
                    gaps: &[],
                },
                &[],
            )
            .unwrap();

        let ledger = RuleOracle.extract(std::slice::from_ref(&original));
        let gaps = RuleOracle.assess(Q, &ledger).gaps;
        let mut copy = original.clone();
        copy.chunk_id = "film-copy".into();
        let t = s
            .score_candidate(
                &copy,
                &QuestionState {
                    question: Q,
                    ledger: &ledger,
                    gaps: &gaps,
                },
                std::slice::from_ref(&original),
            )
            .unwrap();
        assert!((t.red - 1.0).abs() < 1e-12);
        assert_eq!(t.nov, 0.0);
        assert!(t.utility < at_selection.utility);
    }

    #[test]
    fn novelty_vanishes_for_others_after_merge() {
        let e = HashEmbedder::default();
        let s = Scorer::new(&e, UtilityWeights::default(), NoveltyMode::Markup);
        let c = film();
        let ledger = RuleOracle.extract(std::slice::from_ref(&c));
        let state = QuestionState {
            question: Q,
            ledger: &ledger,
            gaps: &[],
        };
        assert_eq!(
            s.score_candidate(&c, &state, &[]).unwrap().nov,
            1.0,
            "own facts stay novel"
        );
        let mut copy = c.clone();
        copy.chunk_id = "film-copy".into();
        assert_eq!(s.score_candidate(&copy, &state, &[]).unwrap().nov, 0.0);
    }

    #[test]
    fn corroboration_rewards_support_for_weak_facts() {
        let e = HashEmbedder::default();
        let s = Scorer::new(&e, UtilityWeights::default(), NoveltyMode::Markup);
        let ledger: Ledger = [Fact {
            entity: "Ada Stone".into(),
            relation: "born".into(),
            value: "Oslo".into(),
            confidence: 0.5,
            source_chunk: "rumour".into(),
        }]
        .into_iter()
        .collect();
        let state = QuestionState {
            question: Q,
            ledger: &ledger,
            gaps: &[],
        };
        let support = chunk("s", "Ada Stone", "Ada Stone was born in Oslo.");
        let other = chunk("o", "Weather", "It rained all week.");
        let a = s.score_candidate(&support, &state, &[]).unwrap();
        let b = s.score_candidate(&other, &state, &[]).unwrap();
        assert!(a.corr > 0.5);
        assert_eq!(b.corr, 0.0);
        // a fact's own source does not corroborate itself
        let mut own = support.clone();
        own.chunk_id = "rumour".into();
        assert_eq!(s.score_candidate(&own, &state, &[]).unwrap().corr, 0.0);
    }

    #[test]
    fn named_token_novelty() {
        let e = HashEmbedder::default();
        let s = Scorer::new(&e, UtilityWeights::default(), NoveltyMode::NamedTokens);
        let ledger: Ledger = [Fact {
            entity: "Ada Stone".into(),
            relation: "nationality".into(),
            value: "Norwegian".into(),
            confidence: 1.0,
            source_chunk: "x".into(),
        }]
        .into_iter()
        .collect();
        let state = QuestionState {
            question: "q",
            ledger: &ledger,
            gaps: &[],
        };
        // title "Stone" + body names: Ada, Stone, Norwegian, Bergen -> units {stone, ada, norwegian, bergen}
        let c = chunk("c", "Stone", "Ada Stone is Norwegian, from Bergen.");
        let t = s.score_candidate(&c, &state, &[]).unwrap();
        assert!((t.nov - 0.25).abs() < 1e-12, "{}", t.nov);
    }

    #[test]
    fn rank_pool_penalises_later_duplicates() {
        let e = HashEmbedder::default();
        let s = Scorer::new(&e, UtilityWeights::default(), NoveltyMode::Markup);
        let ledger = Ledger::new();
        let state = QuestionState {
            question: Q,
            ledger: &ledger,
            gaps: &[],
        };
        let a = film();
        let mut b = film();
        b.chunk_id = "film-b".into();
        let ranked = s.rank_pool(&[b.clone(), a.clone(), a.clone()], &state).unwrap();
        assert_eq!(ranked.len(), 2);
        assert_eq!(ranked[0].chunk.chunk_id, "film", "tie goes to the smaller id");
        assert!((ranked[1].terms.red - 1.0).abs() < 1e-12);
        assert_eq!(ranked[1].terms.nov, 0.0);
        assert!(ranked[1].terms.utility < ranked[0].terms.utility);
    }

    proptest! {
        #[test]
        fn utility_monotone_in_gap_cov_and_red(
            terms in proptest::array::uniform5(0.0f64..=1.0),
            bump in 0.0f64..=1.0,
        ) {
            let w = UtilityWeights::default();
            let [g, c, n, r, q] = terms;
            let base = TermBreakdown::combine(g, c, n, r, q, &w).utility;
            let more_gap = TermBreakdown::combine((g + bump).min(1.0), c, n, r, q, &w).utility;
            let more_red = TermBreakdown::combine(g, c, n, (r + bump).min(1.0), q, &w).utility;
            prop_assert!(more_gap >= base);
            prop_assert!(more_red <= base);
        }

        #[test]
        fn ranked_utilities_non_increasing(seed in 0u64..500) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let words = ["alpha", "beta", "gamma", "delta", "ENT[A] REL[r] VAL[v].", "harbor", "blue"];
            let pool: Vec<Chunk> = (0..6)
                .map(|i| {
                    let body: Vec<&str> = (0..rng.gen_range(1..8)).map(|_| words[rng.gen_range(0..words.len())]).collect();
                    chunk(&format!("c{i}"), "T", &body.join(" "))
                })
                .collect();
            let e = HashEmbedder::default();
            let s = Scorer::new(&e, UtilityWeights::default(), NoveltyMode::Markup);
            let ledger = Ledger::new();
            let ranked = s.rank_pool(&pool, &QuestionState { question: "blue harbor", ledger: &ledger, gaps: &[] }).unwrap();
            for w in ranked.windows(2) {
                prop_assert!(w[0].terms.utility >= w[1].terms.utility);
            }
        }
    }
}
