//! Token probability consistency, the pair-weighted score, and the
//! per-rejected-response argmax selection.
//!
//! For each aligned token the consistency score is
//! `exp(-|lp_chosen - lp_rejected|)`, with each log-probability taken
//! at the token's own position in its own sequence via the alignment's
//! index map. The pair-weighted score sums these over the alignment and
//! divides by the rejected response's token length; an empty alignment
//! scores 0. Accumulation is sequential in index-map order.

use std::collections::BTreeMap;

use crate::alignment::MatchResult;
use crate::candidates::CandidatePair;
use crate::corpus::ResponseRecord;
use crate::error::{Error, Result};

/// A candidate pair with its alignment, per-token scores, and s_w.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPair {
    pub candidate: CandidatePair,
    pub match_result: MatchResult,
    pub token_scores: Vec<f64>,
    pub s_w: f64,
}

/// All scored candidates for one rejected response.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredGroup {
    pub rejected_index: usize,
    pub scored: Vec<ScoredPair>,
}

/// Per-rejected-response winners plus the rejected indices that had no
/// candidates at all.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionOutcome {
    /// rejected_index -> (chosen_index, s_w)
    pub selected: BTreeMap<usize, (usize, f64)>,
    pub skipped: Vec<usize>,
}

/// Consistency of one aligned token: `exp(-|lp_chosen - lp_rejected|)`,
/// in (0, 1]. Invariant under shifting both inputs by the same delta.
pub fn token_consistency(lp_chosen: f64, lp_rejected: f64) -> Result<f64> {
    if !lp_chosen.is_finite() || !lp_rejected.is_finite() {
        return Err(Error::NonFiniteLogProb);
    }
    Ok((-(lp_chosen - lp_rejected).abs()).exp())
}

/// Scores one candidate pair given its alignment: per-token consistency
/// at each index-map entry, summed and divided by the rejected length.
pub fn pair_weighted_score(
    chosen: &ResponseRecord,
    rejected: &ResponseRecord,
    candidate: CandidatePair,
    match_result: MatchResult,
) -> Result<ScoredPair> {
    if rejected.tokens.is_empty() {
        return Err(Error::EmptySequence);
    }
    let mut token_scores = Vec::with_capacity(match_result.index_map.len());
    let mut sum = 0.0;
    for &(ci, rj) in &match_result.index_map {
        let lp_chosen = *chosen
            .logprobs
            .get(ci)
            .ok_or_else(|| Error::Internal(format!("chosen index {ci} out of range")))?;
        let lp_rejected = *rejected
            .logprobs
            .get(rj)
            .ok_or_else(|| Error::Internal(format!("rejected index {rj} out of range")))?;
        let score = token_consistency(lp_chosen, lp_rejected)?;
        token_scores.push(score);
        sum += score;
    }
    let s_w = if token_scores.is_empty() {
        0.0
    } else {
        sum / rejected.tokens.len() as f64
    };
    Ok(ScoredPair {
        candidate,
        match_result,
        token_scores,
        s_w,
    })
}

/// Argmax of s_w within each group; ties broken by smaller Levenshtein
/// rank, then smaller chosen index. Groups must be nonempty; rejected
/// responses without a group belong in `skipped` (callers list them).
pub fn select_pairs(groups: &[ScoredGroup]) -> SelectionOutcome {
    let mut selected = BTreeMap::new();
    let mut skipped = Vec::new();
    for group in groups {
        let best = group.scored.iter().reduce(|best, cur| {
            let better = cur.s_w > best.s_w
                || (cur.s_w == best.s_w
                    && (cur.candidate.rank, cur.candidate.chosen_index)
                        < (best.candidate.rank, best.candidate.chosen_index));
            if better {
                cur
            } else {
                best
            }
        });
        match best {
            Some(pair) => {
                selected.insert(
                    group.rejected_index,
                    (pair.candidate.chosen_index, pair.s_w),
                );
            }
            None => skipped.push(group.rejected_index),
        }
    }
    SelectionOutcome { selected, skipped }
}
