//! Conformal p-values, Benjamini–Hochberg and the FastLSU fixed-point
//! iteration.
//!
//! P-values are exact rationals `k / (ℓ + 1)` and every comparison against a
//! step-up line `α·R/M` is done in integer arithmetic, so the distributed
//! FastLSU rejection set matches pooled BH bit for bit.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exact rational p-value.
pub type PValue = Ratio<u64>;

/// Exact rational significance level.
pub type Level = Ratio<u64>;

/// Identity of one hypothesis: the agent holding the test point and the
/// point's index in that agent's test sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TestId {
    pub agent: usize,
    pub index: usize,
}

impl TestId {
    pub fn new(agent: usize, index: usize) -> Self {
        Self { agent, index }
    }
}

/// `a <= b` without overflow.
#[inline]
pub(crate) fn ratio_le(a: &Ratio<u64>, b: &Ratio<u64>) -> bool {
    (*a.numer() as u128) * (*b.denom() as u128) <= (*b.numer() as u128) * (*a.denom() as u128)
}

fn ratio_cmp(a: &Ratio<u64>, b: &Ratio<u64>) -> Ordering {
    ((*a.numer() as u128) * (*b.denom() as u128)).cmp(&((*b.numer() as u128) * (*a.denom() as u128)))
}

/// Step-up line `α·r/m` as an exact rational.
fn step_line(alpha: Level, r: usize, m: usize) -> Level {
    Ratio::new(*alpha.numer() * r as u64, *alpha.denom() * m as u64)
}

/// Parses a significance level written as a decimal (`"0.1"`) or a fraction
/// (`"1/10"`). The result must lie strictly between 0 and 1.
pub fn parse_level(text: &str) -> Result<Level> {
    let text = text.trim();
    let bad = || Error::InvalidInput(format!("cannot parse level {text:?}"));
    let level = if let Some((n, d)) = text.split_once('/') {
        let n: u64 = n.trim().parse().map_err(|_| bad())?;
        let d: u64 = d.trim().parse().map_err(|_| bad())?;
        if d == 0 {
            return Err(bad());
        }
        Ratio::new(n, d)
    } else {
        let (int, frac) = text.split_once('.').unwrap_or((text, ""));
        if frac.len() > 18 || (int.is_empty() && frac.is_empty()) {
            return Err(bad());
        }
        let int: u64 = if int.is_empty() { 0 } else { int.parse().map_err(|_| bad())? };
        let frac_val: u64 = if frac.is_empty() { 0 } else { frac.parse().map_err(|_| bad())? };
        let scale = 10u64.pow(frac.len() as u32);
        let numer = int
            .checked_mul(scale)
            .and_then(|v| v.checked_add(frac_val))
            .ok_or_else(bad)?;
        Ratio::new(numer, scale)
    };
    if *level.numer() == 0 || level.numer() >= level.denom() {
        return Err(Error::InvalidInput(format!("level {text} must lie in (0, 1)")));
    }
    Ok(level)
}

/// Exact level from the shortest decimal representation of `alpha`.
pub fn level_from_f64(alpha: f64) -> Result<Level> {
    if !alpha.is_finite() {
        return Err(Error::InvalidInput(format!("level {alpha} is not finite")));
    }
    parse_level(&format!("{alpha}"))
}

pub fn level_to_f64(level: Level) -> f64 {
    *level.numer() as f64 / *level.denom() as f64
}

fn check_level(alpha: Level) -> Result<()> {
    if *alpha.numer() == 0 || alpha.numer() >= alpha.denom() {
        return Err(Error::InvalidInput(format!("level {alpha} must lie in (0, 1)")));
    }
    Ok(())
}

/// `(1 + #{i : cal[i] >= test}) / (ℓ + 1)`. Ties count against the test
/// point.
pub fn empirical_pvalue(test_score: f64, calibration_scores: &[f64]) -> Result<PValue> {
    if calibration_scores.is_empty() {
        return Err(Error::InvalidInput("empty calibration set".into()));
    }
    if test_score.is_nan() || calibration_scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidInput("NaN score".into()));
    }
    let at_least = calibration_scores.iter().filter(|&&c| c >= test_score).count();
    Ok(Ratio::new(1 + at_least as u64, calibration_scores.len() as u64 + 1))
}

/// Batch form of [`empirical_pvalue`]; sorts the calibration scores once.
pub fn empirical_pvalues(calibration_scores: &[f64], test_scores: &[f64]) -> Result<Vec<PValue>> {
    if calibration_scores.is_empty() {
        return Err(Error::InvalidInput("empty calibration set".into()));
    }
    if test_scores.iter().chain(calibration_scores).any(|s| s.is_nan()) {
        return Err(Error::InvalidInput("NaN score".into()));
    }
    let mut sorted = calibration_scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let ell = sorted.len() as u64;
    Ok(test_scores
        .iter()
        .map(|&t| {
            let below = sorted.partition_point(|&c| c < t) as u64;
            Ratio::new(1 + ell - below, ell + 1)
        })
        .collect())
}

/// One agent's p-values, aligned with the indices of the test points they
/// came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PValueVector {
    pub agent_id: usize,
    pub pvals: Vec<PValue>,
    pub test_index: Vec<usize>,
}

impl PValueVector {
    pub fn new(agent_id: usize, pvals: Vec<PValue>, test_index: Vec<usize>) -> Result<Self> {
        if pvals.len() != test_index.len() {
            return Err(Error::InvalidInput(format!(
                "{} p-values for {} test indices",
                pvals.len(),
                test_index.len()
            )));
        }
        if let Some(p) = pvals
            .iter()
            .find(|p| *p.numer() == 0 || p.numer() > p.denom())
        {
            return Err(Error::InvalidInput(format!("p-value {p} outside (0, 1]")));
        }
        Ok(Self {
            agent_id,
            pvals,
            test_index,
        })
    }

    /// Conformal p-values of `test_scores` against `calibration_scores`.
    pub fn from_scores(
        agent_id: usize,
        calibration_scores: &[f64],
        test_scores: &[f64],
        test_index: Vec<usize>,
    ) -> Result<Self> {
        let pvals = empirical_pvalues(calibration_scores, test_scores)?;
        Self::new(agent_id, pvals, test_index)
    }

    pub fn len(&self) -> usize {
        self.pvals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pvals.is_empty()
    }

    /// Number of p-values at or below `threshold`.
    pub fn count_at_most(&self, threshold: &Ratio<u64>) -> usize {
        self.pvals.iter().filter(|p| ratio_le(p, threshold)).count()
    }

    fn ids(&self) -> impl Iterator<Item = (TestId, &PValue)> + '_ {
        self.test_index
            .iter()
            .zip(&self.pvals)
            .map(move |(&i, p)| (TestId::new(self.agent_id, i), p))
    }
}

/// Hypotheses rejected by a step-up procedure and the realized threshold
/// `α·k̂/M` (zero when nothing is rejected).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectionSet {
    pub rejected: BTreeSet<TestId>,
    pub threshold: Level,
}

impl RejectionSet {
    pub fn empty() -> Self {
        Self {
            rejected: BTreeSet::new(),
            threshold: Ratio::new(0, 1),
        }
    }

    pub fn len(&self) -> usize {
        self.rejected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rejected.is_empty()
    }

    pub fn contains(&self, id: &TestId) -> bool {
        self.rejected.contains(id)
    }

    /// Disjoint union; used to assemble a network-wide set from per-agent sets.
    pub fn merge(&mut self, other: RejectionSet) {
        self.rejected.extend(other.rejected);
    }
}

/// Benjamini–Hochberg step-up at level `alpha`. Hypotheses are identified as
/// agent 0 with their position in `pvals`.
pub fn bh_procedure(pvals: &[PValue], alpha: Level) -> Result<RejectionSet> {
    let vector = PValueVector::new(0, pvals.to_vec(), (0..pvals.len()).collect())?;
    bh_pooled(std::slice::from_ref(&vector), alpha)
}

/// BH on the concatenation of several agents' p-values, keeping identities.
pub fn bh_pooled(vectors: &[PValueVector], alpha: Level) -> Result<RejectionSet> {
    check_level(alpha)?;
    let m: usize = vectors.iter().map(PValueVector::len).sum();
    if m == 0 {
        return Err(Error::InvalidInput("no p-values".into()));
    }
    let mut sorted: Vec<PValue> = vectors.iter().flat_map(|v| v.pvals.iter().copied()).collect();
    sorted.sort_by(ratio_cmp);
    let k_hat = (1..=m)
        .rev()
        .find(|&k| ratio_le(&sorted[k - 1], &step_line(alpha, k, m)))
        .unwrap_or(0);
    Ok(reject_at_most(vectors, step_line(alpha, k_hat, m)))
}

fn reject_at_most(vectors: &[PValueVector], threshold: Level) -> RejectionSet {
    let rejected = vectors
        .iter()
        .flat_map(PValueVector::ids)
        .filter(|(_, p)| ratio_le(p, &threshold))
        .map(|(id, _)| id)
        .collect();
    RejectionSet {
        rejected,
        threshold,
    }
}

/// One count exchange: every agent's local count and the aggregate the
/// coordinator broadcasts back.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Round {
    pub local_counts: Vec<usize>,
    pub global: usize,
}

/// Transcript of a FastLSU run. `total` is `M`, the starting count `R_0`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IterationLog {
    pub total: usize,
    pub rounds: Vec<Round>,
}

impl IterationLog {
    pub fn round_count(&self) -> usize {
        self.rounds.len()
    }

    /// `R_0, R_1, ...` including the starting count.
    pub fn trajectory(&self) -> Vec<usize> {
        std::iter::once(self.total)
            .chain(self.rounds.iter().map(|r| r.global))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FastLsuOutcome {
    pub rejections: RejectionSet,
    pub log: IterationLog,
}

/// FastLSU: iterate `R_{t+1} = Σ_j #{p ∈ agent j : p <= α·R_t/M}` from
/// `R_0 = M` until the count repeats. A count of zero ends the run at once
/// because a zero threshold rejects nothing.
///
/// Each logged round is one count exchange; the round whose count repeats
/// the previous one is the confirmation round and is logged.
pub fn fastlsu(vectors: &[PValueVector], alpha: Level) -> Result<FastLsuOutcome> {
    check_level(alpha)?;
    if vectors.is_empty() {
        return Err(Error::InvalidInput("fastlsu needs at least one agent".into()));
    }
    let total: usize = vectors.iter().map(PValueVector::len).sum();
    if total == 0 {
        return Err(Error::InvalidInput("no p-values across agents".into()));
    }
    let sorted: Vec<Vec<PValue>> = vectors
        .iter()
        .map(|v| {
            let mut p = v.pvals.clone();
            p.sort_by(ratio_cmp);
            p
        })
        .collect();

    let mut rounds = Vec::new();
    let mut current = total;
    loop {
        let line = step_line(alpha, current, total);
        let local_counts: Vec<usize> = sorted
            .iter()
            .map(|p| p.partition_point(|x| ratio_le(x, &line)))
            .collect();
        let global: usize = local_counts.iter().sum();
        assert!(
            global <= current,
            "FastLSU count increased from {current} to {global}"
        );
        rounds.push(Round {
            local_counts,
            global,
        });
        if global == current || global == 0 {
            current = global;
            break;
        }
        current = global;
    }

    let threshold = step_line(alpha, current, total);
    Ok(FastLsuOutcome {
        rejections: reject_at_most(vectors, threshold),
        log: IterationLog { total, rounds },
    })
}

/// `⌈log2(x)⌉` for `x >= 1`: bits needed to send one of `x` values.
pub(crate) fn ceil_log2(x: u64) -> u64 {
    if x <= 1 {
        0
    } else {
        64 - u64::from((x - 1).leading_zeros())
    }
}

/// Bits per agent per round: the local count out and the global count back.
pub fn fastlsu_round_bits(m: usize, agents: usize) -> u64 {
    let m = m as u64;
    let k = agents as u64;
    ceil_log2(m + 1) + ceil_log2(k * m + 1)
}

/// Worst-case per-agent payload `K·m·(⌈log2(m+1)⌉ + ⌈log2(K·m+1)⌉)` bits.
pub fn fastlsu_comm_bound(m: usize, agents: usize) -> u64 {
    (agents as u64) * (m as u64) * fastlsu_round_bits(m, agents)
}

/// Realized per-agent payload of a logged run, in bits.
pub fn fastlsu_actual_comm(log: &IterationLog, m: usize, agents: usize) -> u64 {
    log.round_count() as u64 * fastlsu_round_bits(m, agents)
}

/// Realized error counts of a rejection set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorMetrics {
    pub false_discoveries: usize,
    pub rejections: usize,
    pub true_discoveries: usize,
    pub novelties: usize,
    pub fdp: f64,
    pub power: f64,
}

impl ErrorMetrics {
    pub fn from_counts(
        false_discoveries: usize,
        rejections: usize,
        true_discoveries: usize,
        novelties: usize,
    ) -> Self {
        Self {
            false_discoveries,
            rejections,
            true_discoveries,
            novelties,
            fdp: false_discoveries as f64 / rejections.max(1) as f64,
            power: if novelties == 0 {
                0.0
            } else {
                true_discoveries as f64 / novelties as f64
            },
        }
    }

    /// Pools disjoint per-agent counts into network-wide metrics.
    pub fn pooled<'a>(parts: impl IntoIterator<Item = &'a ErrorMetrics>) -> Self {
        let (v, r, s, n) = parts.into_iter().fold((0, 0, 0, 0), |acc, m| {
            (
                acc.0 + m.false_discoveries,
                acc.1 + m.rejections,
                acc.2 + m.true_discoveries,
                acc.3 + m.novelties,
            )
        });
        Self::from_counts(v, r, s, n)
    }
}

/// FDP and power of `rejections` against ground truth (`true` marks a
/// novelty). Power's denominator counts every novelty present in `truth`.
pub fn score_metrics(
    rejections: &RejectionSet,
    truth: &HashMap<TestId, bool>,
) -> Result<ErrorMetrics> {
    let mut false_discoveries = 0;
    let mut true_discoveries = 0;
    for id in &rejections.rejected {
        match truth.get(id) {
            Some(true) => true_discoveries += 1,
            Some(false) => false_discoveries += 1,
            None => {
                return Err(Error::InvalidInput(format!(
                    "rejected hypothesis {id:?} has no ground truth"
                )))
            }
        }
    }
    let novelties = truth.values().filter(|&&n| n).count();
    Ok(ErrorMetrics::from_counts(
        false_discoveries,
        rejections.len(),
        true_discoveries,
        novelties,
    ))
}
