//! Common-token alignment between a chosen and a rejected token
//! sequence: recursive longest-contiguous-block matching producing
//! per-sequence masks and a strictly increasing index mapping.
//!
//! The matcher finds the longest contiguous run of equal tokens
//! (ties: earliest start in the chosen sequence, then earliest in the
//! rejected), keeps it, and recurses on the left and right remainders.
//! Every kept block has length >= 1 and no junk/frequency heuristic is
//! applied, so the result depends only on the two sequences. The
//! matched count is bounded by, but not always equal to, the LCS
//! length.

use std::collections::HashMap;

use crate::corpus::Token;
use crate::error::{Error, Result};

/// Alignment output: masks over both sequences plus the index mapping,
/// strictly increasing in both coordinates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchResult {
    pub mask_chosen: Vec<bool>,
    pub mask_rejected: Vec<bool>,
    pub index_map: Vec<(usize, usize)>,
}

impl MatchResult {
    pub fn matched_count(&self) -> usize {
        self.index_map.len()
    }
}

/// Longest block of equal tokens within `chosen[c_lo..c_hi]` and
/// `rejected[r_lo..r_hi]`; ties prefer the earliest chosen start, then
/// the earliest rejected start. Returns (chosen_start, rejected_start, len).
fn longest_block(
    chosen: &[Token],
    rejected_positions: &HashMap<&Token, Vec<usize>>,
    c_lo: usize,
    c_hi: usize,
    r_lo: usize,
    r_hi: usize,
) -> (usize, usize, usize) {
    let (mut best_c, mut best_r, mut best_len) = (c_lo, r_lo, 0usize);
    // run_ends[j] = length of the common run ending at chosen[i], rejected[j]
    let mut run_ends: HashMap<usize, usize> = HashMap::new();
    for i in c_lo..c_hi {
        let mut next_runs: HashMap<usize, usize> = HashMap::new();
        if let Some(positions) = rejected_positions.get(&chosen[i]) {
            for &j in positions {
                if j < r_lo || j >= r_hi {
                    continue;
                }
                let len = j
                    .checked_sub(1)
                    .and_then(|prev| run_ends.get(&prev).copied())
                    .unwrap_or(0)
                    + 1;
                next_runs.insert(j, len);
                // strict '>' keeps the earliest (i, j) among equal lengths
                if len > best_len {
                    best_c = i + 1 - len;
                    best_r = j + 1 - len;
                    best_len = len;
                }
            }
        }
        run_ends = next_runs;
    }
    (best_c, best_r, best_len)
}

/// Aligns common tokens between the two sequences.
pub fn match_tokens(chosen: &[Token], rejected: &[Token]) -> Result<MatchResult> {
    if chosen.is_empty() || rejected.is_empty() {
        return Err(Error::EmptySequence);
    }
    let mut rejected_positions: HashMap<&Token, Vec<usize>> = HashMap::new();
    for (j, t) in rejected.iter().enumerate() {
        rejected_positions.entry(t).or_default().push(j);
    }

    let mut blocks: Vec<(usize, usize, usize)> = Vec::new();
    let mut queue = vec![(0usize, chosen.len(), 0usize, rejected.len())];
    while let Some((c_lo, c_hi, r_lo, r_hi)) = queue.pop() {
        let (c, r, len) = longest_block(chosen, &rejected_positions, c_lo, c_hi, r_lo, r_hi);
        if len >= 1 {
            blocks.push((c, r, len));
            queue.push((c_lo, c, r_lo, r));
            queue.push((c + len, c_hi, r + len, r_hi));
        }
    }
    blocks.sort_unstable();

    let mut mask_chosen = vec![false; chosen.len()];
    let mut mask_rejected = vec![false; rejected.len()];
    let mut index_map = Vec::new();
    for (c, r, len) in blocks {
        for offset in 0..len {
            mask_chosen[c + offset] = true;
            mask_rejected[r + offset] = true;
            index_map.push((c + offset, r + offset));
        }
    }
    Ok(MatchResult {
        mask_chosen,
        mask_rejected,
        index_map,
    })
}
