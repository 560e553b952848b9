//! Preference-pair curation by token-level probability consistency.
//!
//! Given prompts with pre-generated responses and per-token
//! log-probabilities, the pipeline partitions responses by final-answer
//! correctness, builds candidate pairs via token-level Levenshtein
//! pruning, aligns common tokens, scores each pair by probability
//! consistency, and keeps the best chosen response per rejected
//! response. A toy autoregressive model provides a verified reference
//! implementation of the pair-weighted DPO+NLL loss.

pub mod alignment;
pub mod answer;
pub mod candidates;
pub mod corpus;
pub mod error;
pub mod loss;
pub mod pipeline;
pub mod scoring;

pub use alignment::{match_tokens, MatchResult};
pub use answer::{answers_equal, extract_answer, normalize_answer, partition_responses, Answer, Partition};
pub use candidates::{build_candidates, levenshtein, CandidateGroup, CandidatePair};
pub use corpus::{
    parse_corpus, parse_pairs, validate_record, write_pairs, PromptRecord, ResponseRecord,
    SelectedPair, Token, ValidationReport,
};
pub use error::{Error, Result};
pub use loss::{
    compute_reward, dpo_loss, grad_check, pcpo_loss, pcpo_loss_grad, sequence_logprob,
    GradCheckReport, LossConfig, ToyModel,
};
pub use pipeline::{
    pareto_report, run_loss_check, run_select, run_stats, select_corpus, LossCheckConfig,
    LossCheckReport, ParetoReport, PipelineConfig, RunSummary, TieBreak,
};
pub use scoring::{
    pair_weighted_score, select_pairs, token_consistency, ScoredGroup, ScoredPair,
    SelectionOutcome,
};
