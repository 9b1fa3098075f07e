//! Effective capacity and budgeted evidence assembly.

use std::cmp::Ordering;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::Chunk;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceState {
    pub selected: Vec<Chunk>,
    pub budget: usize,
    pub used_tokens: usize,
    pub iteration: usize,
}

impl EvidenceState {
    pub fn empty(budget: usize) -> Self {
        EvidenceState {
            selected: Vec::new(),
            budget,
            used_tokens: 0,
            iteration: 0,
        }
    }

    pub fn ids(&self) -> Vec<&str> {
        self.selected.iter().map(|c| c.chunk_id.as_str()).collect()
    }

    /// The hard budget constraint: selected token lengths sum to at most the budget.
    pub fn within_budget(&self) -> bool {
        let total: usize = self.selected.iter().map(|c| c.token_len).sum();
        total == self.used_tokens && total <= self.budget
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredChunk {
    pub chunk: Chunk,
    pub utility: f64,
}

impl ScoredChunk {
    pub fn new(chunk: Chunk, utility: f64) -> Self {
        ScoredChunk { chunk, utility }
    }
}

/// Utility descending, then chunk id ascending.
fn by_utility(a: &ScoredChunk, b: &ScoredChunk) -> Ordering {
    b.utility
        .total_cmp(&a.utility)
        .then_with(|| a.chunk.chunk_id.cmp(&b.chunk.chunk_id))
}

/// Index of the largest adjacent drop plus `buffer`, clamped to `[1, M]`.
///
/// Drops are `s[i] - s[i+1]` over 1-based positions; the smallest position
/// attaining the maximum wins. A single score yields 1.
pub fn effective_capacity(sorted_utilities: &[f64], buffer: usize) -> Result<usize> {
    let m = sorted_utilities.len();
    if m == 0 {
        return Err(Error::invalid("effective capacity needs at least one utility"));
    }
    if sorted_utilities.iter().any(|s| s.is_nan()) {
        return Err(Error::invalid("utilities must not be NaN"));
    }
    if sorted_utilities.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::invalid("utilities must be sorted non-increasing"));
    }
    if m == 1 {
        return Ok(1);
    }
    let mut best_pos = 1usize;
    let mut best_drop = sorted_utilities[0] - sorted_utilities[1];
    for (i, w) in sorted_utilities.windows(2).enumerate().skip(1) {
        let drop = w[0] - w[1];
        if drop > best_drop {
            best_drop = drop;
            best_pos = i + 1;
        }
    }
    Ok((best_pos + buffer).clamp(1, m))
}

/// Greedy assembly over the `k_eff` highest-utility candidates.
///
/// Candidates are visited by utility (ties by chunk id). A candidate is
/// admitted when its utility is positive and it fits the remaining budget;
/// one that does not fit is skipped and the scan continues.
pub fn select_evidence(scored: &[ScoredChunk], k_eff: usize, budget: usize) -> Result<EvidenceState> {
    if budget == 0 {
        return Err(Error::invalid("token budget must be positive"));
    }
    let mut order: Vec<&ScoredChunk> = scored.iter().collect();
    order.sort_by(|a, b| by_utility(a, b));
    order.dedup_by(|b, a| a.chunk.chunk_id == b.chunk.chunk_id);

    let mut state = EvidenceState::empty(budget);
    for cand in order.into_iter().take(k_eff) {
        if cand.utility <= 0.0 {
            break;
        }
        if state.used_tokens + cand.chunk.token_len > budget {
            continue;
        }
        state.used_tokens += cand.chunk.token_len;
        state.selected.push(cand.chunk.clone());
    }
    Ok(state)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplaceOutcome {
    pub state: EvidenceState,
    pub k_eff: usize,
    /// Union pool after re-scoring and de-duplication, by utility descending.
    pub pool: Vec<ScoredChunk>,
}

/// Re-selects evidence from the current set (re-scored with `rescore`) united
/// with `new_candidates`. Duplicated ids keep the higher utility. Capacity is
/// recomputed over the whole union, so retained evidence competes on equal
/// terms with new candidates.
pub fn replace_update(
    current: &EvidenceState,
    new_candidates: &[ScoredChunk],
    rescore: impl Fn(&Chunk) -> f64,
    buffer: usize,
) -> Result<ReplaceOutcome> {
    let mut pool: Vec<ScoredChunk> = Vec::new();
    let mut slot: HashMap<String, usize> = HashMap::new();
    let rescored = current.selected.iter().map(|c| ScoredChunk::new(c.clone(), rescore(c)));
    for cand in rescored.chain(new_candidates.iter().cloned()) {
        match slot.get(&cand.chunk.chunk_id) {
            Some(&i) => {
                if cand.utility > pool[i].utility {
                    pool[i] = cand;
                }
            }
            None => {
                slot.insert(cand.chunk.chunk_id.clone(), pool.len());
                pool.push(cand);
            }
        }
    }
    pool.sort_by(by_utility);

    let next_iteration = current.iteration + 1;
    if pool.is_empty() {
        let mut state = EvidenceState::empty(current.budget);
        state.iteration = next_iteration;
        return Ok(ReplaceOutcome { state, k_eff: 0, pool });
    }
    let utilities: Vec<f64> = pool.iter().map(|s| s.utility).collect();
    let k_eff = effective_capacity(&utilities, buffer)?;
    let mut state = select_evidence(&pool, k_eff, current.budget)?;
    state.iteration = next_iteration;
    Ok(ReplaceOutcome { state, k_eff, pool })
}
