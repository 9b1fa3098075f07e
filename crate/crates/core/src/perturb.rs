//! Seeded stress corpora: noise injection (syntax-distorted copies and
//! cross-query passages) and redundancy injection (near-duplicate variants of
//! gold passages).
//!
//! Original chunks are never modified; injected chunks are appended after all
//! input chunks, grouped by example in input order. Each example draws from
//! its own generator seeded with `seed + fnv1a64(example id)`, so output does
//! not depend on which other examples are present (except for cross-query
//! sampling, which by definition reads them).

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Chunk, Example, Provenance, WhitespaceTokenizer};
use crate::error::{Error, Result};
use crate::index::fnv1a64;
use crate::oracle::markup::sentences;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbKind {
    Noise,
    Redundancy,
}

/// Relative weights of the three syntax distortions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistortionMix {
    pub scramble: f64,
    pub misspell: f64,
    pub truncate: f64,
}

impl Default for DistortionMix {
    fn default() -> Self {
        DistortionMix {
            scramble: 1.0 / 3.0,
            misspell: 1.0 / 3.0,
            truncate: 1.0 / 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Distortion {
    Scramble,
    Misspell,
    Truncate,
}

impl DistortionMix {
    fn pick(&self, rng: &mut impl Rng) -> Distortion {
        let x: f64 = rng.gen::<f64>() * (self.scramble + self.misspell + self.truncate);
        if x < self.scramble {
            Distortion::Scramble
        } else if x < self.scramble + self.misspell {
            Distortion::Misspell
        } else {
            Distortion::Truncate
        }
    }
}

pub const DEFAULT_VARIANT_CAP: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbConfig {
    pub kind: PerturbKind,
    /// Injected fraction of the final pool, in [0, 1).
    pub rho: f64,
    pub seed: u64,
    pub mix: DistortionMix,
    /// Maximum redundant variants per gold passage.
    pub variant_cap: usize,
}

impl PerturbConfig {
    pub fn new(kind: PerturbKind, rho: f64, seed: u64) -> Self {
        PerturbConfig {
            kind,
            rho,
            seed,
            mix: DistortionMix::default(),
            variant_cap: DEFAULT_VARIANT_CAP,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::invalid(format!("rho must lie in [0, 1), got {}", self.rho)));
        }
        let w = [self.mix.scramble, self.mix.misspell, self.mix.truncate];
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-6 {
            return Err(Error::invalid(
                "distortion mix weights must be non-negative and sum to 1",
            ));
        }
        Ok(())
    }

    /// Chunks to inject for a pool of `n` originals.
    pub fn injected_count(&self, n: usize) -> usize {
        (n as f64 * self.rho / (1.0 - self.rho)).round() as usize
    }
}

fn example_rng(seed: u64, example_id: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_add(fnv1a64(example_id.as_bytes())))
}

/// Whitespace tokens, with `[...]` markup spans kept whole.
fn atoms(text: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    let mut depth = 0usize;
    for word in text.split_whitespace() {
        if depth > 0 {
            let last = out.last_mut().expect("open span has a token");
            last.push(' ');
            last.push_str(word);
        } else {
            out.push(word.to_string());
        }
        for ch in word.chars() {
            match ch {
                '[' => depth += 1,
                ']' => depth = depth.saturating_sub(1),
                _ => {}
            }
        }
    }
    out
}

fn is_markup(atom: &str) -> bool {
    atom.contains('[')
}

fn scramble(body: &str, rng: &mut impl Rng) -> String {
    sentences(body)
        .into_iter()
        .map(|s| {
            let mut words = atoms(s);
            words.shuffle(rng);
            words.join(" ")
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn edit_word(word: &str, rng: &mut impl Rng) -> String {
    let mut chars: Vec<char> = word.chars().collect();
    let letters: Vec<usize> = (0..chars.len()).filter(|&i| chars[i].is_alphabetic()).collect();
    let Some(&pos) = letters.choose(rng) else {
        return word.to_string();
    };
    let fresh = (b'a' + rng.gen_range(0..26u8)) as char;
    match rng.gen_range(0..4) {
        0 if chars.len() > 1 => {
            chars.remove(pos);
        }
        1 if pos + 1 < chars.len() && chars[pos + 1] != chars[pos] => chars.swap(pos, pos + 1),
        2 => chars.insert(pos, fresh),
        _ => {
            let replacement = if chars[pos].to_ascii_lowercase() == fresh {
                if fresh == 'z' {
                    'a'
                } else {
                    (fresh as u8 + 1) as char
                }
            } else {
                fresh
            };
            chars[pos] = replacement;
        }
    }
    chars.into_iter().collect()
}

fn misspell(body: &str, rng: &mut impl Rng) -> String {
    let mut words = atoms(body);
    let plain: Vec<usize> = (0..words.len()).filter(|&i| !is_markup(&words[i])).collect();
    let n = ((plain.len() as f64) * 0.1).round().max(1.0) as usize;
    for &i in plain.choose_multiple(rng, n.min(plain.len())) {
        words[i] = edit_word(&words[i], rng);
    }
    words.join(" ")
}

fn truncate(body: &str, rng: &mut impl Rng) -> String {
    let words = atoms(body);
    let frac = rng.gen_range(0.4..=0.7);
    let keep = ((words.len() as f64) * frac).round().max(1.0) as usize;
    words[..keep.min(words.len())].join(" ")
}

fn pools(chunks: &[Chunk]) -> BTreeMap<&str, Vec<&Chunk>> {
    let mut by_example: BTreeMap<&str, Vec<&Chunk>> = BTreeMap::new();
    for c in chunks {
        by_example.entry(c.source_example.as_str()).or_default().push(c);
    }
    by_example
}

/// Appends `round(n * rho / (1 - rho))` noise chunks to each example's pool
/// of `n` chunks: the larger half are distorted copies of the pool's own
/// passages, the rest are passages sampled from other examples.
pub fn inject_noise(examples: &[Example], chunks: &[Chunk], config: &PerturbConfig) -> Result<Vec<Chunk>> {
    if config.kind != PerturbKind::Noise {
        return Err(Error::invalid("inject_noise needs a noise config"));
    }
    config.validate()?;
    let by_example = pools(chunks);
    let mut out = chunks.to_vec();
    for ex in examples {
        let pool: Vec<&Chunk> = by_example
            .get(ex.id.as_str())
            .map(|p| {
                p.iter()
                    .copied()
                    .filter(|c| c.provenance == Provenance::Original)
                    .collect()
            })
            .unwrap_or_default();
        let n_inj = config.injected_count(pool.len());
        if n_inj == 0 {
            continue;
        }
        let n_cross = n_inj / 2;
        let n_syntax = n_inj - n_cross;
        let foreign: Vec<&Chunk> = chunks
            .iter()
            .filter(|c| c.source_example != ex.id && c.provenance == Provenance::Original)
            .collect();
        if n_cross > 0 && foreign.is_empty() {
            return Err(Error::invalid(format!(
                "example `{}`: cross-query noise needs passages from other examples",
                ex.id
            )));
        }
        let mut rng = example_rng(config.seed, &ex.id);
        let mut j = 0usize;
        for _ in 0..n_syntax {
            let src = pool.choose(&mut rng).expect("non-empty pool");
            let body = match config.mix.pick(&mut rng) {
                Distortion::Scramble => scramble(&src.body, &mut rng),
                Distortion::Misspell => misspell(&src.body, &mut rng),
                Distortion::Truncate => truncate(&src.body, &mut rng),
            };
            out.push(Chunk::new(
                format!("{}::noise::{j}", ex.id),
                src.title.clone(),
                body,
                ex.id.clone(),
                Provenance::NoiseSyntax,
                &WhitespaceTokenizer,
            ));
            j += 1;
        }
        let picks: Vec<&Chunk> = if foreign.len() >= n_cross {
            foreign.choose_multiple(&mut rng, n_cross).copied().collect()
        } else {
            (0..n_cross)
                .map(|_| *foreign.choose(&mut rng).expect("non-empty"))
                .collect()
        };
        for src in picks {
            out.push(Chunk::new(
                format!("{}::noise::{j}", ex.id),
                src.title.clone(),
                src.body.clone(),
                ex.id.clone(),
                Provenance::NoiseCrossquery,
                &WhitespaceTokenizer,
            ));
            j += 1;
        }
    }
    Ok(out)
}

/// Fixed substitution table for paraphrastic variants.
pub const SYNONYMS: &[(&str, &str)] = &[
    ("the", "a"),
    ("a", "the"),
    ("an", "the"),
    ("is", "remains"),
    ("was", "had been"),
    ("film", "movie"),
    ("movie", "film"),
    ("director", "filmmaker"),
    ("directed", "helmed"),
    ("written", "authored"),
    ("author", "writer"),
    ("born", "native"),
    ("known", "recognised"),
    ("famous", "renowned"),
    ("large", "big"),
    ("small", "little"),
    ("began", "started"),
    ("received", "earned"),
    ("series", "sequence"),
    ("book", "volume"),
    ("city", "town"),
    ("country", "nation"),
    ("also", "additionally"),
    ("many", "numerous"),
    ("several", "various"),
    ("story", "tale"),
    ("about", "concerning"),
    ("american", "US"),
];

fn substitute(word: &str) -> Option<String> {
    let core = word.trim_end_matches(|c: char| !c.is_alphanumeric());
    let tail = &word[core.len()..];
    let lower = core.to_lowercase();
    let (_, to) = SYNONYMS.iter().find(|(from, _)| *from == lower)?;
    let mut rep = to.to_string();
    if core.chars().next().is_some_and(char::is_uppercase) {
        let mut cs = rep.chars();
        rep = cs
            .next()
            .map(|f| f.to_uppercase().chain(cs).collect())
            .unwrap_or_default();
    }
    Some(rep + tail)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum VariantKind {
    Reorder,
    Subset,
    Synonyms,
}

fn reorder(body: &str, rng: &mut impl Rng) -> String {
    let mut sents = sentences(body);
    if sents.len() > 1 {
        let original = sents.clone();
        sents.shuffle(rng);
        if sents == original {
            sents.rotate_left(1);
        }
    }
    sents.join(" ")
}

fn subset(body: &str, rng: &mut impl Rng) -> String {
    let sents = sentences(body);
    let frac = rng.gen_range(0.5..=0.8);
    let keep = ((sents.len() as f64) * frac).round().clamp(1.0, sents.len() as f64) as usize;
    let mut idx: Vec<usize> = rand::seq::index::sample(rng, sents.len(), keep).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| sents[i]).collect::<Vec<_>>().join(" ")
}

fn synonyms(body: &str) -> String {
    atoms(body)
        .into_iter()
        .map(|w| if is_markup(&w) { w } else { substitute(&w).unwrap_or(w) })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Appends near-duplicate variants of each example's gold passages until
/// `round(n * rho / (1 - rho))` have been added or every gold passage has
/// `variant_cap` variants. Golds are visited round-robin; the first variant
/// of each gold is a sentence reordering, later ones are drawn uniformly from
/// reordering, sentence subset and synonym substitution.
pub fn inject_redundancy(examples: &[Example], chunks: &[Chunk], config: &PerturbConfig) -> Result<Vec<Chunk>> {
    if config.kind != PerturbKind::Redundancy {
        return Err(Error::invalid("inject_redundancy needs a redundancy config"));
    }
    config.validate()?;
    let by_example = pools(chunks);
    let mut out = chunks.to_vec();
    for ex in examples {
        let pool: Vec<&Chunk> = by_example
            .get(ex.id.as_str())
            .map(|p| {
                p.iter()
                    .copied()
                    .filter(|c| c.provenance == Provenance::Original)
                    .collect()
            })
            .unwrap_or_default();
        let golds: Vec<&Chunk> = pool
            .iter()
            .copied()
            .filter(|c| ex.gold_titles.contains(&c.title))
            .collect();
        if golds.is_empty() {
            continue;
        }
        let n_inj = config.injected_count(pool.len()).min(config.variant_cap * golds.len());
        let mut rng = example_rng(config.seed, &ex.id);
        for j in 0..n_inj {
            let src = golds[j % golds.len()];
            let kind = if j < golds.len() {
                VariantKind::Reorder
            } else {
                *[VariantKind::Reorder, VariantKind::Subset, VariantKind::Synonyms]
                    .choose(&mut rng)
                    .expect("non-empty")
            };
            let body = match kind {
                VariantKind::Reorder => reorder(&src.body, &mut rng),
                VariantKind::Subset => subset(&src.body, &mut rng),
                VariantKind::Synonyms => synonyms(&src.body),
            };
            out.push(Chunk::new(
                format!("{}::red::{j}", ex.id),
                src.title.clone(),
                body,
                ex.id.clone(),
                Provenance::RedundantVariant,
                &WhitespaceTokenizer,
            ));
        }
    }
    Ok(out)
}

/// Dispatches on `config.kind`.
pub fn perturb(examples: &[Example], chunks: &[Chunk], config: &PerturbConfig) -> Result<Vec<Chunk>> {
    match config.kind {
        PerturbKind::Noise => inject_noise(examples, chunks, config),
        PerturbKind::Redundancy => inject_redundancy(examples, chunks, config),
    }
}
