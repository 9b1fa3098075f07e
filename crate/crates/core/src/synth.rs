//! Seeded synthetic bridge-question worlds in the rule oracle's markup.
//!
//! Each question asks for the nationality of a film's director. Its pool
//! holds the film passage (stating the director), the director's biography
//! (stating the nationality) and same-topic distractors about the film that
//! state no facts. The director's name never appears in the question, so the
//! biography is reachable only by a query that names the director.
//!
//! Film and director names are invented single words. Each is chosen so that
//! its hash-embedder coordinate is shared with no template word and no other
//! name (while free coordinates remain), which keeps retrieval by name exact.

use std::collections::{BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Example, Paragraph};
use crate::error::{Error, Result};
use crate::index::{hash_tokens, HashEmbedder, DEFAULT_DIM};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub questions: usize,
    /// Distractor passages per question, at most [`DISTRACTOR_KINDS`].len().
    pub distractors: usize,
    pub seed: u64,
    /// Hash-embedder dimension the names are spread over.
    pub dim: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            questions: 50,
            distractors: 8,
            seed: 17,
            dim: DEFAULT_DIM,
        }
    }
}

/// Ground truth for one generated question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthQuestion {
    pub example_id: String,
    pub film: String,
    pub director: String,
    pub nationality: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthWorld {
    pub examples: Vec<Example>,
    pub questions: Vec<SynthQuestion>,
}

const ONSETS: &[&str] = &[
    "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "dr", "kr", "st", "th", "vl",
];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ai", "ou", "ei"];
const CODAS: &[&str] = &["", "", "n", "r", "l", "s", "th", "m"];

const NATIONALITIES: &[&str] = &[
    "Canadian",
    "Brazilian",
    "Norwegian",
    "Kenyan",
    "Chilean",
    "Portuguese",
    "Vietnamese",
    "Hungarian",
];
const GENRES: &[&str] = &["drama", "thriller", "comedy", "western", "mystery", "romance"];
const FESTIVALS: &[&str] = &["Locarno", "Venice", "Busan", "Sundance", "Rotterdam", "Toronto"];
const YEARS: &[u32] = &[1968, 1979, 1986, 1994, 2003, 2011];

pub const DISTRACTOR_KINDS: &[&str] = &[
    "soundtrack",
    "reception",
    "production",
    "release",
    "cast",
    "sequel",
    "novel",
    "legacy",
];

const QUESTION_TEMPLATE: &str = "What is the nationality of the director of";

fn word(rng: &mut impl Rng) -> String {
    let syllables = rng.gen_range(2..=3);
    let mut w = String::new();
    for i in 0..syllables {
        w.push_str(ONSETS.choose(rng).expect("non-empty"));
        w.push_str(VOWELS.choose(rng).expect("non-empty"));
        if i + 1 == syllables {
            w.push_str(CODAS.choose(rng).expect("non-empty"));
        }
    }
    let mut cs = w.chars();
    cs.next()
        .map(|f| f.to_uppercase().chain(cs).collect())
        .unwrap_or_default()
}

struct Namer {
    embedder: HashEmbedder,
    words: HashSet<String>,
    buckets: HashSet<usize>,
}

impl Namer {
    const ATTEMPTS: usize = 10_000;

    fn fresh(&mut self, rng: &mut impl Rng) -> String {
        let mut fallback = None;
        for _ in 0..Self::ATTEMPTS {
            let w = word(rng);
            let lower = w.to_lowercase();
            if w.len() < 4 || self.words.contains(&lower) {
                continue;
            }
            let b = self.embedder.bucket(&lower);
            if !self.buckets.contains(&b) {
                self.words.insert(lower);
                self.buckets.insert(b);
                return w;
            }
            fallback.get_or_insert(w);
        }
        // coordinates exhausted: settle for a word that is merely unique
        let w = fallback.unwrap_or_else(|| word(rng));
        self.words.insert(w.to_lowercase());
        w
    }
}

fn film_passage(film: &str, director: &str, year: u32, genre: &str, fest: &str) -> Vec<String> {
    vec![
        format!("{film} is a {year} {genre} film by {director}."),
        format!("ENT[{film}] REL[director] VAL[{director}]."),
        format!("{film} premiered at {fest} and critics praised its cinematography."),
    ]
}

fn bio_passage(director: &str, nationality: &str) -> Vec<String> {
    vec![
        format!("{director} is a {nationality} filmmaker and screenwriter."),
        format!("ENT[{director}] REL[nationality] VAL[{nationality}]."),
        format!("{director} studied painting before turning to cinema."),
    ]
}

fn distractor(kind: &str, film: &str, director: &str, year: u32, genre: &str, fest: &str) -> Vec<String> {
    match kind {
        "soundtrack" => vec![
            format!("{film} soundtrack album accompanies a {year} {genre} film."),
            format!("Critics praised {film} for its orchestral score."),
        ],
        "reception" => vec![
            format!("{film} drew strong reviews after premiering at {fest}."),
            format!("Critics praised {film} for cinematography and pacing."),
        ],
        "production" => vec![
            format!("Filming on {film} began a year earlier with {director} on set."),
            format!("{film} was shot on location."),
        ],
        "release" => vec![
            format!("{film} premiered at {fest} in {year} before a cinema release."),
            format!("Audiences embraced {film} as a {genre} film."),
        ],
        "cast" => vec![
            format!("{film} cast features a young lead in a {genre} film."),
            format!("Critics praised performances in {film}."),
        ],
        "sequel" => vec![
            format!("A sequel to {film} was announced after {fest}."),
            format!("It follows a drifter from {film} in a new {genre} story."),
        ],
        "novel" => vec![
            format!("{film} adapts a novel into a {year} {genre} film."),
            format!("Critics praised {film} for its fidelity."),
        ],
        _ => vec![
            format!("{film} grew in stature as a {genre} film after {fest}."),
            format!("Film schools teach {film} for its cinematography."),
        ],
    }
}

/// Every fixed word the templates can emit, names left blank.
fn template_vocabulary() -> BTreeSet<String> {
    let mut text = vec![QUESTION_TEMPLATE.to_string(), "ENT REL VAL".into()];
    for kind in DISTRACTOR_KINDS {
        text.push(format!("({kind})"));
        text.extend(distractor(kind, "", "", YEARS[0], GENRES[0], FESTIVALS[0]));
    }
    text.extend(film_passage("", "", YEARS[0], GENRES[0], FESTIVALS[0]));
    text.extend(bio_passage("", NATIONALITIES[0]));
    text.extend(NATIONALITIES.iter().map(|s| s.to_string()));
    text.extend(GENRES.iter().map(|s| s.to_string()));
    text.extend(FESTIVALS.iter().map(|s| s.to_string()));
    text.extend(YEARS.iter().map(|y| y.to_string()));
    text.iter().flat_map(|t| hash_tokens(t).collect::<Vec<_>>()).collect()
}

/// Generates the world. Identical configs give identical worlds.
pub fn generate(config: &SynthConfig) -> Result<SynthWorld> {
    if config.questions == 0 {
        return Err(Error::invalid("synthetic world needs at least one question"));
    }
    if config.distractors > DISTRACTOR_KINDS.len() {
        return Err(Error::invalid(format!(
            "at most {} distractors per question",
            DISTRACTOR_KINDS.len()
        )));
    }
    let embedder = HashEmbedder::new(config.dim)?;
    let vocab = template_vocabulary();
    let mut namer = Namer {
        embedder,
        buckets: vocab.iter().map(|t| embedder.bucket(t)).collect(),
        words: vocab.into_iter().collect(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut examples = Vec::with_capacity(config.questions);
    let mut questions = Vec::with_capacity(config.questions);
    for q in 0..config.questions {
        let film = namer.fresh(&mut rng);
        let director = namer.fresh(&mut rng);
        let nationality = NATIONALITIES.choose(&mut rng).expect("non-empty").to_string();
        let genre = *GENRES.choose(&mut rng).expect("non-empty");
        let fest = *FESTIVALS.choose(&mut rng).expect("non-empty");
        let year = *YEARS.choose(&mut rng).expect("non-empty");

        let mut paragraphs = vec![
            Paragraph {
                title: film.clone(),
                sentences: film_passage(&film, &director, year, genre, fest),
            },
            Paragraph {
                title: director.clone(),
                sentences: bio_passage(&director, &nationality),
            },
        ];
        for kind in &DISTRACTOR_KINDS[..config.distractors] {
            paragraphs.push(Paragraph {
                title: format!("{film} ({kind})"),
                sentences: distractor(kind, &film, &director, year, genre, fest),
            });
        }
        paragraphs.shuffle(&mut rng);

        let id = format!("syn-{q:03}");
        examples.push(Example {
            id: id.clone(),
            question: format!("{QUESTION_TEMPLATE} {film}? SLOT[{film}|director] SLOT[$1|nationality]"),
            gold_answer: nationality.clone(),
            gold_titles: BTreeSet::from([film.clone(), director.clone()]),
            paragraphs,
        });
        questions.push(SynthQuestion {
            example_id: id,
            film,
            director,
            nationality,
        });
    }
    Ok(SynthWorld { examples, questions })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_unique() {
        let cfg = SynthConfig::default();
        let a = generate(&cfg).unwrap();
        assert_eq!(a, generate(&cfg).unwrap());
        assert_eq!(a.examples.len(), 50);
        let names: HashSet<_> = a
            .questions
            .iter()
            .flat_map(|q| [q.film.clone(), q.director.clone()])
            .collect();
        assert_eq!(names.len(), 100);
        for (ex, q) in a.examples.iter().zip(&a.questions) {
            assert_eq!(ex.paragraphs.len(), 10);
            assert!(!ex.question.contains(&q.director));
        }
    }

    #[test]
    fn names_own_their_coordinates() {
        let cfg = SynthConfig::default();
        let world = generate(&cfg).unwrap();
        let emb = HashEmbedder::new(cfg.dim).unwrap();
        let vocab: HashSet<usize> = template_vocabulary().iter().map(|t| emb.bucket(t)).collect();
        let mut seen = HashSet::new();
        for q in &world.questions {
            for name in [&q.film, &q.director] {
                let b = emb.bucket(&name.to_lowercase());
                assert!(!vocab.contains(&b), "{name} collides with a template word");
                assert!(seen.insert(b), "{name} collides with another name");
            }
        }
    }

    #[test]
    fn rejects_bad_config() {
        assert!(generate(&SynthConfig {
            questions: 0,
            ..Default::default()
        })
        .is_err());
        assert!(generate(&SynthConfig {
            distractors: 9,
            ..Default::default()
        })
        .is_err());
        assert!(generate(&SynthConfig {
            dim: 0,
            ..Default::default()
        })
        .is_err());
    }
}
