//! Structured-text convention understood by the rule-based oracle.
//!
//! Passages state facts as `ENT[entity] REL[relation] VAL[value]`. A sentence
//! that also contains `~` marks its facts as low confidence (0.5); otherwise
//! confidence is 1.0.
//!
//! Questions declare the slots they need as `SLOT[entity|relation]`. The
//! entity may be `$n`, meaning the value resolved for the n-th slot (1-based),
//! which is how bridge questions are written. `MODE[compare]` turns the answer
//! into `yes`/`no` depending on whether all slot values agree; otherwise the
//! answer is the value of the last slot.

use std::sync::OnceLock;

use regex::Regex;

fn fact_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"ENT\[([^\]]*)\]\s*REL\[([^\]]*)\]\s*VAL\[([^\]]*)\]").expect("valid regex"))
}

fn slot_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"SLOT\[([^\]|]*)\|([^\]]*)\]").expect("valid regex"))
}

fn mode_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"MODE\[([^\]]*)\]").expect("valid regex"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarkedFact {
    pub entity: String,
    pub relation: String,
    pub value: String,
    pub confidence: f64,
}

/// Splits on `.`, `!` or `?` followed by whitespace, ignoring terminators
/// inside square brackets so values like `K. A. Applegate` stay whole.
pub fn sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut depth = 0usize;
    let mut start = 0usize;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        match c {
            '[' => depth += 1,
            ']' => depth = depth.saturating_sub(1),
            '.' | '!' | '?' if depth == 0 && chars.peek().is_some_and(|(_, n)| n.is_whitespace()) => {
                let end = i + c.len_utf8();
                let s = text[start..end].trim();
                if !s.is_empty() {
                    out.push(s);
                }
                start = end;
            }
            _ => {}
        }
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail);
    }
    out
}

pub fn parse_facts(text: &str) -> Vec<MarkedFact> {
    let mut out = Vec::new();
    for sentence in sentences(text) {
        let confidence = if sentence.contains('~') { 0.5 } else { 1.0 };
        for cap in fact_re().captures_iter(sentence) {
            let entity = cap[1].trim();
            let relation = cap[2].trim();
            if entity.is_empty() || relation.is_empty() {
                continue;
            }
            out.push(MarkedFact {
                entity: entity.to_string(),
                relation: relation.to_string(),
                value: cap[3].trim().to_string(),
                confidence,
            });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SlotEntity {
    Literal(String),
    /// 1-based reference to an earlier slot's value.
    Ref(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Slot {
    pub entity: SlotEntity,
    pub relation: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct QuestionSpec {
    pub slots: Vec<Slot>,
    pub compare: bool,
}

pub fn parse_question(question: &str) -> QuestionSpec {
    let slots = slot_re()
        .captures_iter(question)
        .map(|cap| {
            let raw = cap[1].trim();
            let entity = match raw.strip_prefix('$').and_then(|n| n.parse().ok()) {
                Some(n) => SlotEntity::Ref(n),
                None => SlotEntity::Literal(raw.to_string()),
            };
            Slot {
                entity,
                relation: cap[2].trim().to_string(),
            }
        })
        .collect();
    let compare = mode_re()
        .captures_iter(question)
        .any(|c| c[1].trim().eq_ignore_ascii_case("compare"));
    QuestionSpec { slots, compare }
}

/// Question text with `SLOT[..]` and `MODE[..]` annotations removed.
pub fn strip_question_markup(question: &str) -> String {
    let s = slot_re().replace_all(question, " ");
    let s = mode_re().replace_all(&s, " ");
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_plain_and_low_confidence_facts() {
        let text = "Intro. ENT[Scott Derrickson] REL[nationality] VAL[American]. Maybe ~ ENT[X] REL[born] VAL[1966].";
        let facts = parse_facts(text);
        assert_eq!(facts.len(), 2);
        assert_eq!(facts[0].entity, "Scott Derrickson");
        assert_eq!(facts[0].value, "American");
        assert_eq!(facts[0].confidence, 1.0);
        assert_eq!(facts[1].confidence, 0.5);
    }

    #[test]
    fn initials_inside_brackets_do_not_split() {
        let facts = parse_facts("ENT[Animorphs] REL[author] VAL[K. A. Applegate]. Next sentence.");
        assert_eq!(facts[0].value, "K. A. Applegate");
        assert_eq!(sentences("A b. ENT[x] REL[y] VAL[K. A.]. C").len(), 3);
    }

    #[test]
    fn empty_entity_is_ignored() {
        assert!(parse_facts("ENT[] REL[r] VAL[v]").is_empty());
    }

    #[test]
    fn question_slots_and_strip() {
        let q = "Who? SLOT[Film A|director] SLOT[$1|nationality] MODE[compare]";
        let spec = parse_question(q);
        assert_eq!(spec.slots.len(), 2);
        assert_eq!(spec.slots[0].entity, SlotEntity::Literal("Film A".into()));
        assert_eq!(spec.slots[1].entity, SlotEntity::Ref(1));
        assert!(spec.compare);
        assert_eq!(strip_question_markup(q), "Who?");
        assert_eq!(strip_question_markup("plain question?"), "plain question?");
    }
}
