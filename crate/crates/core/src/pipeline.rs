//! End-to-end pipeline: parse -> partition -> candidates -> match ->
//! score -> select -> emit, plus the rank-distribution report and the
//! loss verification harness over emitted pairs.
//!
//! Everything here is a pure function of (input bytes, config); prompts
//! may be processed in parallel but results are merged in input order,
//! so the job count never changes output bytes.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alignment::match_tokens;
use crate::answer::partition_responses;
use crate::candidates::build_candidates;
use crate::corpus::{parse_corpus, parse_pairs, write_pairs, PromptRecord, SelectedPair, Token};
use crate::error::{Error, Result};
use crate::loss::{
    compare_gradients, dpo_loss, finite_difference_grad, pcpo_loss, pcpo_loss_grad, GradCheckReport,
    LossConfig, ToyModel,
};
use crate::scoring::{pair_weighted_score, select_pairs, ScoredGroup, ScoredPair};

/// Tie-break policy for equal pair-weighted scores. Only one policy
/// exists; the field pins it in configs so runs stay reproducible.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum TieBreak {
    /// Smaller Levenshtein rank first, then smaller chosen index.
    #[default]
    RankThenIndex,
}

impl std::str::FromStr for TieBreak {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "rank-then-index" => Ok(TieBreak::RankThenIndex),
            other => Err(format!("unknown tie-break policy: {other}")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub input: PathBuf,
    pub output: PathBuf,
    /// Candidates kept per rejected response.
    pub k: usize,
    /// Pairs scoring below this are dropped; 0 disables the filter.
    pub min_s_w: f64,
    pub tie_break: TieBreak,
    /// Optional path for the rank-distribution report of the run.
    pub report: Option<PathBuf>,
    /// Worker threads; 1 = sequential.
    pub jobs: usize,
}

impl PipelineConfig {
    pub fn new(input: impl Into<PathBuf>, output: impl Into<PathBuf>) -> Self {
        PipelineConfig {
            input: input.into(),
            output: output.into(),
            k: 8,
            min_s_w: 0.0,
            tie_break: TieBreak::RankThenIndex,
            report: None,
            jobs: 1,
        }
    }
}

/// Counts from one selection run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSummary {
    pub prompts: usize,
    /// Prompts where every response was correct (q = 0).
    pub all_correct_skips: usize,
    /// Prompts where every response was wrong (p = 0).
    pub all_wrong_skips: usize,
    pub pairs_emitted: usize,
    /// Rejected responses whose best pair scored below min_s_w.
    pub below_threshold_skips: usize,
    /// Total rejected responses across non-skipped prompts.
    pub rejected_considered: usize,
}

/// Rank-distribution report over selected pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoReport {
    pub total_pairs: usize,
    pub skipped_prompts: usize,
    pub rank_frequencies: BTreeMap<usize, f64>,
    pub cumulative: BTreeMap<usize, f64>,
}

fn prompt_pairs(record: &PromptRecord, k: usize, min_s_w: f64) -> Result<(Vec<SelectedPair>, RunSummary)> {
    let mut summary = RunSummary {
        prompts: 1,
        ..RunSummary::default()
    };
    let partition = partition_responses(record);
    if partition.q() == 0 {
        summary.all_correct_skips = 1;
        return Ok((Vec::new(), summary));
    }
    if partition.p() == 0 {
        summary.all_wrong_skips = 1;
        return Ok((Vec::new(), summary));
    }
    summary.rejected_considered = partition.q();

    let mut groups: Vec<ScoredGroup> = Vec::new();
    for group in build_candidates(&partition, &record.responses, k) {
        let mut scored: Vec<ScoredPair> = Vec::with_capacity(group.candidates.len());
        for candidate in group.candidates {
            let chosen = &record.responses[candidate.chosen_index];
            let rejected = &record.responses[candidate.rejected_index];
            let aligned = match_tokens(&chosen.tokens, &rejected.tokens)?;
            scored.push(pair_weighted_score(chosen, rejected, candidate, aligned)?);
        }
        groups.push(ScoredGroup {
            rejected_index: group.rejected_index,
            scored,
        });
    }

    let outcome = select_pairs(&groups);
    let mut pairs = Vec::new();
    for group in &groups {
        let Some(&(chosen_index, s_w)) = outcome.selected.get(&group.rejected_index) else {
            continue;
        };
        if s_w < min_s_w {
            summary.below_threshold_skips += 1;
            continue;
        }
        let winner = group
            .scored
            .iter()
            .find(|sp| sp.candidate.chosen_index == chosen_index)
            .ok_or_else(|| Error::Internal("selected candidate missing from group".into()))?;
        pairs.push(SelectedPair {
            prompt_id: record.id.clone(),
            question: record.question.clone(),
            chosen: record.responses[chosen_index].clone(),
            rejected: record.responses[group.rejected_index].clone(),
            s_w,
            matched_token_count: winner.match_result.matched_count(),
            levenshtein_distance: winner.candidate.distance,
            levenshtein_rank: winner.candidate.rank,
        });
    }
    summary.pairs_emitted = pairs.len();
    Ok((pairs, summary))
}

fn merge_summaries(parts: impl IntoIterator<Item = RunSummary>) -> RunSummary {
    parts.into_iter().fold(RunSummary::default(), |mut acc, s| {
        acc.prompts += s.prompts;
        acc.all_correct_skips += s.all_correct_skips;
        acc.all_wrong_skips += s.all_wrong_skips;
        acc.pairs_emitted += s.pairs_emitted;
        acc.below_threshold_skips += s.below_threshold_skips;
        acc.rejected_considered += s.rejected_considered;
        acc
    })
}

/// Selects preference pairs for a parsed corpus. Results come back in
/// prompt order, then rejected-index order, regardless of `jobs`.
pub fn select_corpus(
    records: &[PromptRecord],
    k: usize,
    min_s_w: f64,
    jobs: usize,
) -> Result<(Vec<SelectedPair>, RunSummary)> {
    let per_prompt: Vec<(Vec<SelectedPair>, RunSummary)> = if jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::Internal(format!("thread pool: {e}")))?;
        pool.install(|| {
            records
                .par_iter()
                .map(|r| prompt_pairs(r, k, min_s_w))
                .collect::<Result<Vec<_>>>()
        })?
    } else {
        records
            .iter()
            .map(|r| prompt_pairs(r, k, min_s_w))
            .collect::<Result<Vec<_>>>()?
    };

    let summary = merge_summaries(per_prompt.iter().map(|(_, s)| *s));
    let pairs = per_prompt.into_iter().flat_map(|(p, _)| p).collect();
    Ok((pairs, summary))
}

/// Runs selection end to end on files: parse, select, emit, and
/// optionally write the rank report.
pub fn run_select(config: &PipelineConfig) -> Result<RunSummary> {
    let input = File::open(&config.input)?;
    let records = parse_corpus(BufReader::new(input))?;
    let (pairs, summary) = select_corpus(&records, config.k, config.min_s_w, config.jobs)?;

    let output = File::create(&config.output)?;
    write_pairs(&pairs, BufWriter::new(output))?;

    if let Some(report_path) = &config.report {
        let skipped = summary.all_correct_skips + summary.all_wrong_skips;
        let report = pareto_report(&pairs, skipped);
        write_report(&report, report_path)?;
    }
    Ok(summary)
}

/// Rank-frequency distribution and cumulative percentages of a set of
/// selected pairs.
pub fn pareto_report(pairs: &[SelectedPair], skipped_prompts: usize) -> ParetoReport {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for pair in pairs {
        *counts.entry(pair.levenshtein_rank).or_insert(0) += 1;
    }
    let total = pairs.len();
    let mut rank_frequencies = BTreeMap::new();
    let mut cumulative = BTreeMap::new();
    let mut running = 0usize;
    for (rank, count) in counts {
        running += count;
        rank_frequencies.insert(rank, count as f64 / total as f64);
        cumulative.insert(rank, running as f64 / total as f64);
    }
    ParetoReport {
        total_pairs: total,
        skipped_prompts,
        rank_frequencies,
        cumulative,
    }
}

fn write_report(report: &ParetoReport, path: &Path) -> Result<()> {
    let file = File::create(path)?;
    let mut writer = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut writer, report)
        .map_err(|e| Error::Internal(format!("report serialization: {e}")))?;
    writer.write_all(b"\n")?;
    writer.flush()?;
    Ok(())
}

/// Reads a pairs file and produces its rank report. Prompt-skip counts
/// are not recoverable from a pairs file and report as 0.
pub fn run_stats(pairs_path: &Path, report_path: Option<&Path>) -> Result<ParetoReport> {
    let pairs = parse_pairs(BufReader::new(File::open(pairs_path)?))?;
    let report = pareto_report(&pairs, 0);
    if let Some(path) = report_path {
        write_report(&report, path)?;
    }
    Ok(report)
}

/// Loss verification settings: toy-model seed and vocabulary size plus
/// the gradient-check step and tolerance.
#[derive(Debug, Clone, Copy)]
pub struct LossCheckConfig {
    pub seed: u64,
    pub vocab_size: usize,
    pub step: f64,
    pub tolerance: f64,
    pub loss: LossConfig,
}

impl Default for LossCheckConfig {
    fn default() -> Self {
        LossCheckConfig {
            seed: 0,
            vocab_size: 8,
            step: 1e-5,
            tolerance: 1e-5,
            loss: LossConfig::default(),
        }
    }
}

/// Outcome of verifying the loss implementation over a pairs file.
#[derive(Debug, Clone, Serialize)]
pub struct LossCheckReport {
    pub pairs_checked: usize,
    pub max_gradient_relative_error: f64,
    pub max_reduction_identity_error: f64,
    pub gradient_failures: usize,
    pub reduction_failures: usize,
}

impl LossCheckReport {
    pub fn pass(&self) -> bool {
        self.gradient_failures == 0 && self.reduction_failures == 0
    }
}

/// FNV-1a over a token's identity; stable across runs and platforms.
fn token_hash(token: &Token) -> u64 {
    const OFFSET: u64 = 0xcbf29ce484222325;
    const PRIME: u64 = 0x100000001b3;
    let mut hash = OFFSET;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            hash ^= u64::from(b);
            hash = hash.wrapping_mul(PRIME);
        }
    };
    match token {
        Token::Str(s) => {
            eat(&[0]);
            eat(s.as_bytes());
        }
        Token::Int(i) => {
            eat(&[1]);
            eat(&i.to_le_bytes());
        }
    }
    hash
}

/// Maps opaque tokens into the toy vocabulary, keeping index 0 for BOS.
pub fn map_tokens_to_vocab(tokens: &[Token], vocab_size: usize) -> Vec<usize> {
    assert!(vocab_size >= 2, "need at least BOS plus one symbol");
    tokens
        .iter()
        .map(|t| 1 + (token_hash(t) % (vocab_size as u64 - 1)) as usize)
        .collect()
}

/// Verifies the loss implementation against the pairs in a file:
/// analytic-vs-numeric gradients and the DPO reduction identity, on
/// deterministic seed-built toy models. An empty file passes trivially.
pub fn run_loss_check(pairs_path: &Path, config: &LossCheckConfig) -> Result<LossCheckReport> {
    let pairs = parse_pairs(BufReader::new(File::open(pairs_path)?))?;

    let mut policy_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut reference_rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let policy = ToyModel::random(config.vocab_size, &mut policy_rng);
    let reference = ToyModel::random(config.vocab_size, &mut reference_rng);

    let mut report = LossCheckReport {
        pairs_checked: pairs.len(),
        max_gradient_relative_error: 0.0,
        max_reduction_identity_error: 0.0,
        gradient_failures: 0,
        reduction_failures: 0,
    };
    for (i, pair) in pairs.iter().enumerate() {
        let chosen = map_tokens_to_vocab(&pair.chosen.tokens, config.vocab_size);
        let rejected = map_tokens_to_vocab(&pair.rejected.tokens, config.vocab_size);

        let analytic =
            pcpo_loss_grad(&policy, &reference, &chosen, &rejected, pair.s_w, config.loss)?;
        let numeric = finite_difference_grad(
            &policy,
            &reference,
            &chosen,
            &rejected,
            pair.s_w,
            config.loss,
            config.step,
        )?;
        let mut grad_report = GradCheckReport::default();
        compare_gradients(
            i,
            config.vocab_size,
            &analytic,
            &numeric,
            config.tolerance,
            &mut grad_report,
        );
        report.max_gradient_relative_error = report
            .max_gradient_relative_error
            .max(grad_report.max_relative_error);
        report.gradient_failures += grad_report.mismatches.len();

        let reduced = LossConfig {
            alpha: 0.0,
            ..config.loss
        };
        let via_pcpo = pcpo_loss(&policy, &reference, &chosen, &rejected, 1.0, reduced)?;
        let via_dpo = dpo_loss(&policy, &reference, &chosen, &rejected, config.loss)?;
        let err = (via_pcpo - via_dpo).abs();
        report.max_reduction_identity_error = report.max_reduction_identity_error.max(err);
        if err > 1e-12 {
            report.reduction_failures += 1;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::ResponseRecord;

    fn response(tokens: &[&str], logprobs: &[f64], answer: &str) -> ResponseRecord {
        ResponseRecord {
            text: format!("reasoning boxed{{{answer}}}"),
            tokens: tokens.iter().map(|t| Token::Str((*t).into())).collect(),
            logprobs: logprobs.to_vec(),
            answer: None,
        }
    }

    fn record(id: &str, gold: &str, responses: Vec<ResponseRecord>) -> PromptRecord {
        PromptRecord {
            id: id.into(),
            question: "q".into(),
            gold_answer: gold.into(),
            responses,
        }
    }

    #[test]
    fn all_correct_corpus_emits_nothing() {
        let records = vec![record(
            "p1",
            "4",
            vec![
                response(&["a"], &[-0.5], "4"),
                response(&["b"], &[-0.5], "4"),
            ],
        )];
        let (pairs, summary) = select_corpus(&records, 8, 0.0, 1).unwrap();
        assert!(pairs.is_empty());
        assert_eq!(summary.all_correct_skips, 1);
        assert_eq!(summary.pairs_emitted, 0);
    }

    #[test]
    fn one_winner_one_loser_emits_one_pair() {
        let records = vec![record(
            "p1",
            "4",
            vec![
                response(&["x", "y", "z"], &[-0.5, -1.0, -0.2], "4"),
                response(&["x", "y", "w"], &[-0.5, -1.0 - 2.0f64.ln(), -0.2], "5"),
            ],
        )];
        let (pairs, summary) = select_corpus(&records, 8, 0.0, 1).unwrap();
        assert_eq!(pairs.len(), 1);
        assert_eq!(summary.pairs_emitted, 1);
        let pair = &pairs[0];
        // matched x (score 1.0) and y (score 0.5); rejected length 3
        assert!((pair.s_w - 0.5).abs() < 1e-12);
        assert_eq!(pair.matched_token_count, 2);
        assert_eq!(pair.levenshtein_distance, 1);
        assert_eq!(pair.levenshtein_rank, 1);
    }

    #[test]
    fn min_s_w_filters_pairs() {
        let records = vec![record(
            "p1",
            "4",
            vec![
                response(&["a", "b"], &[-0.5, -0.5], "4"),
                response(&["c", "d"], &[-0.5, -0.5], "5"),
            ],
        )];
        let (pairs, summary) = select_corpus(&records, 8, 0.5, 1).unwrap();
        assert!(pairs.is_empty());
        assert_eq!(summary.below_threshold_skips, 1);
        assert_eq!(summary.rejected_considered, 1);
    }

    #[test]
    fn conservation_invariant_holds() {
        let records = vec![
            record(
                "p1",
                "4",
                vec![
                    response(&["a", "b"], &[-0.5, -0.5], "4"),
                    response(&["a", "c"], &[-0.5, -0.5], "5"),
                    response(&["a", "d"], &[-0.5, -0.5], "6"),
                ],
            ),
            record("p2", "4", vec![response(&["a"], &[-0.5], "9")]),
        ];
        let (pairs, summary) = select_corpus(&records, 8, 0.0, 1).unwrap();
        assert_eq!(summary.all_wrong_skips, 1);
        assert_eq!(
            pairs.len() + summary.below_threshold_skips,
            summary.rejected_considered
        );
    }

    #[test]
    fn jobs_do_not_change_results() {
        let records: Vec<PromptRecord> = (0..12)
            .map(|i| {
                record(
                    &format!("p{i}"),
                    "1",
                    vec![
                        response(&["a", "b", "c"], &[-0.1, -0.4, -0.9], "1"),
                        response(&["a", "x", "c"], &[-0.1, -0.2, -0.7], "2"),
                        response(&["b", "c"], &[-0.3, -0.9], "1"),
                    ],
                )
            })
            .collect();
        let sequential = select_corpus(&records, 8, 0.0, 1).unwrap();
        let parallel = select_corpus(&records, 8, 0.0, 4).unwrap();
        assert_eq!(sequential.0, parallel.0);
        assert_eq!(sequential.1, parallel.1);
    }

    #[test]
    fn pareto_report_all_rank_one() {
        let pair = SelectedPair {
            prompt_id: "p".into(),
            question: "q".into(),
            chosen: response(&["a"], &[-0.5], "1"),
            rejected: response(&["a"], &[-0.5], "2"),
            s_w: 0.5,
            matched_token_count: 1,
            levenshtein_distance: 0,
            levenshtein_rank: 1,
        };
        let report = pareto_report(&[pair.clone(), pair], 0);
        assert_eq!(report.rank_frequencies[&1], 1.0);
        assert_eq!(report.cumulative[&1], 1.0);
        assert_eq!(report.total_pairs, 2);
    }

    #[test]
    fn pareto_report_hand_counted() {
        let base = SelectedPair {
            prompt_id: "p".into(),
            question: "q".into(),
            chosen: response(&["a"], &[-0.5], "1"),
            rejected: response(&["a"], &[-0.5], "2"),
            s_w: 0.5,
            matched_token_count: 1,
            levenshtein_distance: 0,
            levenshtein_rank: 1,
        };
        let with_rank = |rank: usize| SelectedPair {
            levenshtein_rank: rank,
            ..base.clone()
        };
        let pairs = vec![with_rank(1), with_rank(1), with_rank(2), with_rank(4)];
        let report = pareto_report(&pairs, 3);
        assert_eq!(report.rank_frequencies[&1], 0.5);
        assert_eq!(report.rank_frequencies[&2], 0.25);
        assert_eq!(report.rank_frequencies[&4], 0.25);
        assert_eq!(report.cumulative[&1], 0.5);
        assert_eq!(report.cumulative[&2], 0.75);
        assert_eq!(report.cumulative[&4], 1.0);
        assert_eq!(report.skipped_prompts, 3);
    }

    #[test]
    fn pareto_report_empty() {
        let report = pareto_report(&[], 0);
        assert_eq!(report.total_pairs, 0);
        assert!(report.rank_frequencies.is_empty());
        assert!(report.cumulative.is_empty());
    }

    #[test]
    fn token_mapping_is_deterministic_and_in_range() {
        let tokens = vec![Token::Str("hello".into()), Token::Int(42)];
        let a = map_tokens_to_vocab(&tokens, 8);
        let b = map_tokens_to_vocab(&tokens, 8);
        assert_eq!(a, b);
        assert!(a.iter().all(|&i| (1..8).contains(&i)));
    }
}
