//! Reference implementation of the pair-weighted DPO+NLL loss on a toy
//! table-parameterized autoregressive model, with analytic gradients
//! and a finite-difference checker.
//!
//! The toy model is a bigram table: row `prev` of `logits` defines the
//! softmax distribution over the next token, with token 0 reserved as
//! BOS conditioning for the first position. Sequence log-probability is
//! the unnormalized sum over positions, standing in for log M(y|x).
//!
//! The loss for a pair (y+, y-) with pair weight s_w is
//!
//!   -s_w * log sigmoid(beta * (delta_chosen - delta_rejected))
//!   - (alpha * s_w / |y+|) * log M_policy(y+)
//!
//! where delta_y = log M_policy(y) - log M_reference(y). The reference
//! model is frozen; gradients are taken w.r.t. the policy logits only.

use rand::distributions::{Distribution, Uniform};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reserved BOS token index.
pub const BOS: usize = 0;

/// Coefficients of the loss: `alpha` scales the NLL term, `beta` the
/// margin inside the sigmoid. Defaults are alpha = 1, beta = 0.5.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            alpha: 1.0,
            beta: 0.5,
        }
    }
}

/// Table-parameterized bigram model: row = previous token, column =
/// next token; conditionals are per-row softmax.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyModel {
    vocab_size: usize,
    logits: Vec<f64>,
}

impl ToyModel {
    pub fn new(vocab_size: usize, logits: Vec<f64>) -> Result<Self> {
        if vocab_size == 0 {
            return Err(Error::Internal("vocab_size must be positive".into()));
        }
        if logits.len() != vocab_size * vocab_size {
            return Err(Error::Internal(format!(
                "logits length {} != {}x{}",
                logits.len(),
                vocab_size,
                vocab_size
            )));
        }
        if logits.iter().any(|l| !l.is_finite()) {
            return Err(Error::Internal("non-finite logit".into()));
        }
        Ok(ToyModel { vocab_size, logits })
    }

    pub fn random<R: Rng>(vocab_size: usize, rng: &mut R) -> Self {
        let dist = Uniform::new(-2.0, 2.0);
        let logits = (0..vocab_size * vocab_size)
            .map(|_| dist.sample(rng))
            .collect();
        ToyModel { vocab_size, logits }
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    fn row(&self, prev: usize) -> &[f64] {
        &self.logits[prev * self.vocab_size..(prev + 1) * self.vocab_size]
    }

    /// log softmax of one row, computed via a max-shifted logsumexp.
    fn row_log_probs(&self, prev: usize) -> Vec<f64> {
        let row = self.row(prev);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_z = row.iter().map(|l| (l - max).exp()).sum::<f64>().ln() + max;
        row.iter().map(|l| l - log_z).collect()
    }

    /// softmax probabilities of one row.
    pub fn row_probs(&self, prev: usize) -> Vec<f64> {
        self.row_log_probs(prev).iter().map(|lp| lp.exp()).collect()
    }

    fn check_tokens(&self, tokens: &[usize]) -> Result<()> {
        if tokens.is_empty() {
            return Err(Error::EmptySequence);
        }
        for &t in tokens {
            if t >= self.vocab_size {
                return Err(Error::TokenOutOfRange {
                    index: t,
                    vocab_size: self.vocab_size,
                });
            }
        }
        Ok(())
    }

    /// In-place gradient-descent step on the logits.
    pub fn descend(&mut self, gradient: &[f64], step: f64) {
        assert_eq!(gradient.len(), self.logits.len());
        for (l, g) in self.logits.iter_mut().zip(gradient) {
            *l -= step * g;
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("toy model serializes")
    }

    pub fn from_json_line(line: &str) -> Result<Self> {
        let wire: ToyModel = serde_json::from_str(line).map_err(|source| Error::MalformedLine {
            line: 1,
            source,
        })?;
        ToyModel::new(wire.vocab_size, wire.logits)
    }
}

/// Sum over positions of `log softmax(logits[prev])[current]`, with
/// prev = BOS at position 0.
pub fn sequence_logprob(model: &ToyModel, tokens: &[usize]) -> Result<f64> {
    model.check_tokens(tokens)?;
    let mut prev = BOS;
    let mut total = 0.0;
    for &t in tokens {
        total += model.row_log_probs(prev)[t];
        prev = t;
    }
    Ok(total)
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

struct PairMargin {
    margin: f64,
    lp_policy_chosen: f64,
}

fn pair_margin(
    policy: &ToyModel,
    reference: &ToyModel,
    chosen: &[usize],
    rejected: &[usize],
    beta: f64,
) -> Result<PairMargin> {
    let lp_policy_chosen = sequence_logprob(policy, chosen)?;
    let lp_policy_rejected = sequence_logprob(policy, rejected)?;
    let lp_ref_chosen = sequence_logprob(reference, chosen)?;
    let lp_ref_rejected = sequence_logprob(reference, rejected)?;
    let margin =
        beta * ((lp_policy_chosen - lp_ref_chosen) - (lp_policy_rejected - lp_ref_rejected));
    Ok(PairMargin {
        margin,
        lp_policy_chosen,
    })
}

/// The pair-weighted DPO+NLL loss. `s_w = 0` short-circuits to 0.
pub fn pcpo_loss(
    policy: &ToyModel,
    reference: &ToyModel,
    chosen: &[usize],
    rejected: &[usize],
    s_w: f64,
    config: LossConfig,
) -> Result<f64> {
    if s_w == 0.0 {
        // touch the inputs so range errors still surface
        policy.check_tokens(chosen)?;
        policy.check_tokens(rejected)?;
        return Ok(0.0);
    }
    let pm = pair_margin(policy, reference, chosen, rejected, config.beta)?;
    let dpo_term = -s_w * log_sigmoid(pm.margin);
    let nll_term = -(config.alpha * s_w / chosen.len() as f64) * pm.lp_policy_chosen;
    let loss = dpo_term + nll_term;
    if !loss.is_finite() {
        return Err(Error::Internal("non-finite loss".into()));
    }
    Ok(loss)
}

/// Plain DPO loss: the pair-weighted loss at s_w = 1, alpha = 0.
pub fn dpo_loss(
    policy: &ToyModel,
    reference: &ToyModel,
    chosen: &[usize],
    rejected: &[usize],
    config: LossConfig,
) -> Result<f64> {
    let pm = pair_margin(policy, reference, chosen, rejected, config.beta)?;
    Ok(-log_sigmoid(pm.margin))
}

/// beta * (log policy(y) - log reference(y)).
pub fn compute_reward(
    policy: &ToyModel,
    reference: &ToyModel,
    tokens: &[usize],
    beta: f64,
) -> Result<f64> {
    Ok(beta * (sequence_logprob(policy, tokens)? - sequence_logprob(reference, tokens)?))
}

/// Adds `coef * d(sequence_logprob)/d(logits)` into `grad`.
fn accumulate_logprob_grad(model: &ToyModel, tokens: &[usize], coef: f64, grad: &mut [f64]) {
    let v = model.vocab_size();
    let mut prev = BOS;
    for &t in tokens {
        let probs = model.row_probs(prev);
        for (j, &p) in probs.iter().enumerate() {
            let indicator = if j == t { 1.0 } else { 0.0 };
            grad[prev * v + j] += coef * (indicator - p);
        }
        prev = t;
    }
}

/// Analytic gradient of `pcpo_loss` w.r.t. every policy logit,
/// row-major V x V. The reference model is frozen.
pub fn pcpo_loss_grad(
    policy: &ToyModel,
    reference: &ToyModel,
    chosen: &[usize],
    rejected: &[usize],
    s_w: f64,
    config: LossConfig,
) -> Result<Vec<f64>> {
    let v = policy.vocab_size();
    let mut grad = vec![0.0; v * v];
    if s_w == 0.0 {
        policy.check_tokens(chosen)?;
        policy.check_tokens(rejected)?;
        return Ok(grad);
    }
    let pm = pair_margin(policy, reference, chosen, rejected, config.beta)?;
    // d/dmargin of -log sigmoid(margin) is -sigmoid(-margin)
    let dpo_coef = -s_w * sigmoid(-pm.margin) * config.beta;
    let nll_coef = -(config.alpha * s_w) / chosen.len() as f64;
    accumulate_logprob_grad(policy, chosen, dpo_coef + nll_coef, &mut grad);
    accumulate_logprob_grad(policy, rejected, -dpo_coef, &mut grad);
    Ok(grad)
}

/// Central finite differences of `pcpo_loss` w.r.t. the policy logits.
pub fn finite_difference_grad(
    policy: &ToyModel,
    reference: &ToyModel,
    chosen: &[usize],
    rejected: &[usize],
    s_w: f64,
    config: LossConfig,
    step: f64,
) -> Result<Vec<f64>> {
    let v = policy.vocab_size();
    let mut grad = vec![0.0; v * v];
    let mut perturbed = policy.clone();
    for idx in 0..v * v {
        let original = perturbed.logits[idx];
        perturbed.logits[idx] = original + step;
        let plus = pcpo_loss(&perturbed, reference, chosen, rejected, s_w, config)?;
        perturbed.logits[idx] = original - step;
        let minus = pcpo_loss(&perturbed, reference, chosen, rejected, s_w, config)?;
        perturbed.logits[idx] = original;
        grad[idx] = (plus - minus) / (2.0 * step);
    }
    Ok(grad)
}

/// One gradient entry that disagreed beyond tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct GradMismatch {
    pub pair_index: usize,
    pub row: usize,
    pub col: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, Default)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub mismatches: Vec<GradMismatch>,
}

impl GradCheckReport {
    pub fn pass(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Compares an analytic gradient table against a numeric one; the
/// relative error denominator is max(1, |analytic|, |numeric|).
pub fn compare_gradients(
    pair_index: usize,
    vocab_size: usize,
    analytic: &[f64],
    numeric: &[f64],
    tolerance: f64,
    report: &mut GradCheckReport,
) {
    for (idx, (&a, &n)) in analytic.iter().zip(numeric).enumerate() {
        let rel = (a - n).abs() / 1.0f64.max(a.abs()).max(n.abs());
        report.max_relative_error = report.max_relative_error.max(rel);
        if rel > tolerance {
            report.mismatches.push(GradMismatch {
                pair_index,
                row: idx / vocab_size,
                col: idx % vocab_size,
                analytic: a,
                numeric: n,
                relative_error: rel,
            });
        }
    }
}

/// Checks the analytic gradient against central differences over all
/// supplied (chosen, rejected, s_w) pairs.
pub fn grad_check(
    policy: &ToyModel,
    reference: &ToyModel,
    pairs: &[(Vec<usize>, Vec<usize>, f64)],
    config: LossConfig,
    step: f64,
    tolerance: f64,
) -> Result<GradCheckReport> {
    assert!(step > 0.0 && tolerance > 0.0);
    let mut report = GradCheckReport::default();
    for (i, (chosen, rejected, s_w)) in pairs.iter().enumerate() {
        let analytic = pcpo_loss_grad(policy, reference, chosen, rejected, *s_w, config)?;
        let numeric =
            finite_difference_grad(policy, reference, chosen, rejected, *s_w, config, step)?;
        compare_gradients(i, policy.vocab_size(), &analytic, &numeric, tolerance, &mut report);
    }
    Ok(report)
}
