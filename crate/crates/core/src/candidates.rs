//! Candidate pair construction: the full winners × losers Cartesian
//! product, pruned per loser to the k nearest winners by token-level
//! Levenshtein distance.
//!
//! Distance is computed over token sequences, the same tokens the
//! alignment stage consumes, with unit costs for insertion, deletion,
//! and substitution.

use crate::answer::Partition;
use crate::corpus::ResponseRecord;

/// A (chosen, rejected) index pair surviving pruning, with its distance
/// and 1-based rank among the loser's candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CandidatePair {
    pub chosen_index: usize,
    pub rejected_index: usize,
    pub distance: usize,
    pub rank: usize,
}

/// All surviving candidates for one rejected response, distance-sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateGroup {
    pub rejected_index: usize,
    pub candidates: Vec<CandidatePair>,
}

/// Minimum number of single-element insertions, deletions, and
/// substitutions transforming `a` into `b`. Two-row DP.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut cur: Vec<usize> = (0..=b.len()).collect();
    for (i, ta) in a.iter().enumerate() {
        let mut prev_diag = cur[0];
        cur[0] = i + 1;
        for (j, tb) in b.iter().enumerate() {
            let tmp = cur[j + 1];
            let sub = prev_diag + usize::from(ta != tb);
            cur[j + 1] = sub.min(tmp + 1).min(cur[j] + 1);
            prev_diag = tmp;
        }
    }
    cur[b.len()]
}

/// For each loser, computes distances to every winner and keeps the
/// min(p, k) smallest, ranked 1.. with ties broken by smaller winner
/// index. Empty when p == 0 or q == 0. Groups come back in loser-index
/// order.
pub fn build_candidates(
    partition: &Partition,
    responses: &[ResponseRecord],
    k: usize,
) -> Vec<CandidateGroup> {
    assert!(k >= 1, "k must be at least 1");
    if partition.p() == 0 || partition.q() == 0 {
        return Vec::new();
    }
    let keep = partition.p().min(k);
    partition
        .losers
        .iter()
        .map(|&rejected_index| {
            let mut row: Vec<(usize, usize)> = partition
                .winners
                .iter()
                .map(|&w| {
                    (
                        levenshtein(&responses[w].tokens, &responses[rejected_index].tokens),
                        w,
                    )
                })
                .collect();
            row.sort_by_key(|&(distance, winner)| (distance, winner));
            let candidates = row
                .into_iter()
                .take(keep)
                .enumerate()
                .map(|(i, (distance, chosen_index))| CandidatePair {
                    chosen_index,
                    rejected_index,
                    distance,
                    rank: i + 1,
                })
                .collect();
            CandidateGroup {
                rejected_index,
                candidates,
            }
        })
        .collect()
}
