use crate::corpus::Chunk;
use crate::error::Result;

use super::markup::{self, QuestionSpec, SlotEntity};
use super::{containment_match, key_eq, Answer, Extraction, Fact, Gap, Ledger, Oracle, SufficiencyVerdict};

/// Deterministic oracle over the markup convention. Holds no state and reads
/// nothing from the environment.
#[derive(Debug, Clone, Copy, Default)]
pub struct RuleOracle;

enum SlotState {
    Resolved(String),
    Missing(Gap),
    Unformable,
}

fn resolve_slots(spec: &QuestionSpec, ledger: &Ledger) -> Vec<SlotState> {
    let mut states: Vec<SlotState> = Vec::with_capacity(spec.slots.len());
    for slot in &spec.slots {
        let entity = match &slot.entity {
            SlotEntity::Literal(e) => Some(e.clone()),
            SlotEntity::Ref(n) => match n.checked_sub(1).and_then(|i| states.get(i)) {
                Some(SlotState::Resolved(v)) => Some(v.clone()),
                _ => None,
            },
        };
        let state = match entity {
            None => SlotState::Unformable,
            Some(entity) => match ledger.lookup(&entity, &slot.relation) {
                Some(f) => SlotState::Resolved(f.value.clone()),
                None => SlotState::Missing(Gap {
                    rationale: format!("no `{}` fact for {entity}", slot.relation),
                    entity,
                    relation: slot.relation.clone(),
                }),
            },
        };
        states.push(state);
    }
    states
}

impl RuleOracle {
    pub fn extract(&self, evidence: &[Chunk]) -> Ledger {
        let mut ledger = Ledger::new();
        for chunk in evidence {
            for f in markup::parse_facts(&chunk.body) {
                ledger.insert(Fact {
                    entity: f.entity,
                    relation: f.relation,
                    value: f.value,
                    confidence: f.confidence,
                    source_chunk: chunk.chunk_id.clone(),
                });
            }
        }
        ledger
    }

    /// A question without slots is never sufficient and yields no gaps.
    pub fn assess(&self, question: &str, ledger: &Ledger) -> SufficiencyVerdict {
        let spec = markup::parse_question(question);
        if spec.slots.is_empty() {
            return SufficiencyVerdict::insufficient(Vec::new());
        }
        let states = resolve_slots(&spec, ledger);
        if states.iter().all(|s| matches!(s, SlotState::Resolved(_))) {
            return SufficiencyVerdict::sufficient();
        }
        SufficiencyVerdict::insufficient(
            states
                .into_iter()
                .filter_map(|s| match s {
                    SlotState::Missing(g) => Some(g),
                    _ => None,
                })
                .collect(),
        )
    }

    pub fn answer(&self, question: &str, evidence: &[Chunk]) -> Answer {
        let spec = markup::parse_question(question);
        if spec.slots.is_empty() {
            return Answer::Abstain;
        }
        let ledger = self.extract(evidence);
        let mut values = Vec::new();
        for s in resolve_slots(&spec, &ledger) {
            match s {
                SlotState::Resolved(v) => values.push(v),
                _ => return Answer::Abstain,
            }
        }
        if spec.compare {
            let same = values.windows(2).all(|w| key_eq(&w[0], &w[1]));
            Answer::Text(if same { "yes" } else { "no" }.to_string())
        } else {
            Answer::Text(values.pop().expect("at least one slot"))
        }
    }
}

impl Oracle for RuleOracle {
    fn extract_ledger(&self, evidence: &[Chunk]) -> Result<Extraction> {
        Ok(Extraction {
            ledger: self.extract(evidence),
            warnings: Vec::new(),
        })
    }

    fn assess_sufficiency(&self, question: &str, ledger: &Ledger) -> Result<SufficiencyVerdict> {
        Ok(self.assess(question, ledger))
    }

    fn generate_answer(&self, question: &str, evidence: &[Chunk]) -> Result<Answer> {
        Ok(self.answer(question, evidence))
    }

    fn judge_answer(&self, _question: &str, gold: &str, predicted: &Answer) -> Result<bool> {
        Ok(containment_match(gold, predicted))
    }
}
