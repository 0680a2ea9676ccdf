//! Output-distribution comparison: Hellinger distance, shot budgets, the
//! two-consecutive-rounds early-stop protocol and crash classification.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::simulator::{Counts, ErrorRecord, ExecOutcome};

/// Probability mass function over output integers of `width` bits.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Distribution {
    width: usize,
    probs: BTreeMap<u64, f64>,
}

impl Distribution {
    /// Builds a distribution, summing repeated keys and dropping zero entries.
    pub fn from_probs(width: usize, probs: impl IntoIterator<Item = (u64, f64)>) -> Self {
        let mut m = BTreeMap::new();
        for (k, p) in probs {
            if p != 0.0 {
                *m.entry(k).or_insert(0.0) += p;
            }
        }
        Self { width, probs: m }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn probs(&self) -> &BTreeMap<u64, f64> {
        &self.probs
    }

    pub fn prob(&self, outcome: u64) -> f64 {
        self.probs.get(&outcome).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.probs.values().sum()
    }

    /// Largest absolute difference over the union of supports.
    pub fn linf(&self, other: &Distribution) -> f64 {
        self.probs.keys().chain(other.probs.keys()).map(|k| (self.prob(*k) - other.prob(*k)).abs()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("distribution sums to {sum}, expected 1")]
pub struct NormalizationError {
    pub sum: f64,
}

const NORM_TOL: f64 = 1e-6;

/// Distance between output distributions: symmetric, in `[0, 1]`, and zero
/// exactly when the distributions are equal.
pub trait Metric: Sync {
    fn name(&self) -> &'static str;
    fn distance(&self, p: &Distribution, q: &Distribution) -> Result<f64, NormalizationError>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Hellinger;

impl Metric for Hellinger {
    fn name(&self) -> &'static str {
        "hellinger"
    }

    fn distance(&self, p: &Distribution, q: &Distribution) -> Result<f64, NormalizationError> {
        hellinger(p, q)
    }
}

/// `H(P, Q) = sqrt(sum_i (sqrt(p_i) - sqrt(q_i))^2) / sqrt(2)`, with keys
/// missing from one side read as zero.
pub fn hellinger(p: &Distribution, q: &Distribution) -> Result<f64, NormalizationError> {
    for d in [p, q] {
        let sum = d.total();
        if (sum - 1.0).abs() > NORM_TOL {
            return Err(NormalizationError { sum });
        }
    }
    let mut acc = 0.0;
    for (k, pk) in &p.probs {
        let d = pk.sqrt() - q.prob(*k).sqrt();
        acc += d * d;
    }
    for (k, qk) in &q.probs {
        if !p.probs.contains_key(k) {
            acc += qk;
        }
    }
    Ok((acc / 2.0).sqrt().clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("budget needs 0 < delta < 1 and n_qubits >= 1 (got delta={delta}, n_qubits={n_qubits})")]
pub struct DomainError {
    pub delta: f64,
    pub n_qubits: u32,
}

/// Shot counts for one comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub delta: f64,
    pub n_qubits: u32,
    pub s_round: u64,
    pub s_std: u64,
    pub s_max: u64,
}

/// `S(delta, N) = min(N^(2/3) / delta^(8/3), N^(3/4) / delta^2)`.
pub fn sample_bound(delta: f64, n: f64) -> f64 {
    let a = n.powf(2.0 / 3.0) / delta.powf(8.0 / 3.0);
    let b = n.powf(0.75) / (delta * delta);
    a.min(b)
}

/// Ceiling that forgives float noise just above an integer.
fn ceil_shots(x: f64) -> u64 {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * r.abs().max(1.0) {
        r.max(1.0) as u64
    } else {
        x.ceil().max(1.0) as u64
    }
}

pub fn budget(delta: f64, n_qubits: u32) -> Result<Budget, DomainError> {
    if !(delta > 0.0 && delta < 1.0) || n_qubits == 0 {
        return Err(DomainError { delta, n_qubits });
    }
    let n = f64::from(n_qubits);
    let s_std = ceil_shots(sample_bound(delta, 2f64.powf(n)));
    let s_round = ceil_shots(sample_bound(delta, 2f64.powf(n / 2.0)));
    Ok(Budget { delta, n_qubits, s_round, s_std, s_max: 2 * s_std })
}

impl Budget {
    /// Cumulative shot counts at which a comparison can end: every multiple
    /// of `s_round` from two rounds up to `s_max`, then `s_max` itself when
    /// it is not already a multiple.
    pub fn termination_points(&self) -> Vec<u64> {
        let mut v: Vec<u64> = (2..).map(|k| k * self.s_round).take_while(|s| *s <= self.s_max).collect();
        if v.last() != Some(&self.s_max) {
            v.push(self.s_max);
        }
        v
    }

    /// Largest number of whole rounds that fits in `s_max`.
    pub fn max_rounds(&self) -> u64 {
        self.s_max / self.s_round
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyResult {
    pub equivalent: bool,
    /// Shots drawn per side.
    pub total_shots: u64,
    pub rounds: usize,
    pub final_h: f64,
    pub trace: Vec<f64>,
    pub counts_a: Counts,
    pub counts_b: Counts,
}

/// Source of shots for one side of a comparison. `round` starts at 0 and
/// lets the sampler pick an independent seed per round.
pub trait ShotSampler {
    fn sample(&mut self, round: usize, shots: u64) -> ExecOutcome;
}

impl<F: FnMut(usize, u64) -> ExecOutcome> ShotSampler for F {
    fn sample(&mut self, round: usize, shots: u64) -> ExecOutcome {
        self(round, shots)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Original,
    Variant,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CompareError {
    #[error("{side:?} side failed in round {round}: {error}")]
    Exec { side: Side, round: usize, error: ErrorRecord },
    #[error(transparent)]
    Normalization(#[from] NormalizationError),
}

/// Draws `s_round` shots per side per round and merges them cumulatively.
/// Returns equivalent as soon as the metric is below `delta` in two
/// consecutive rounds, and not equivalent once another round would push the
/// per-side total past `s_max`.
pub fn early_stop_compare(
    a: &mut dyn ShotSampler,
    b: &mut dyn ShotSampler,
    budget: &Budget,
    metric: &dyn Metric,
) -> Result<ConsistencyResult, CompareError> {
    let mut counts_a: Option<Counts> = None;
    let mut counts_b: Option<Counts> = None;
    let mut trace = Vec::new();
    let mut total = 0u64;
    let mut streak = 0;
    let exec = |side, round, r: ExecOutcome| r.map_err(|error| CompareError::Exec { side, round, error });
    loop {
        if total + budget.s_round > budget.s_max {
            let final_h = trace.last().copied().unwrap_or(1.0);
            return Ok(ConsistencyResult {
                equivalent: false,
                total_shots: total,
                rounds: trace.len(),
                final_h,
                trace,
                counts_a: counts_a.unwrap_or_default(),
                counts_b: counts_b.unwrap_or_default(),
            });
        }
        let round = trace.len();
        let ra = exec(Side::Original, round, a.sample(round, budget.s_round))?;
        let rb = exec(Side::Variant, round, b.sample(round, budget.s_round))?;
        counts_a.get_or_insert_with(|| Counts::new(ra.width())).merge(&ra);
        counts_b.get_or_insert_with(|| Counts::new(rb.width())).merge(&rb);
        total += budget.s_round;
        let (ca, cb) = (counts_a.as_ref().expect("set"), counts_b.as_ref().expect("set"));
        let h = metric.distance(&ca.to_distribution(), &cb.to_distribution())?;
        trace.push(h);
        streak = if h < budget.delta { streak + 1 } else { 0 };
        if streak == 2 {
            return Ok(ConsistencyResult {
                equivalent: true,
                total_shots: total,
                rounds: trace.len(),
                final_h: h,
                trace,
                counts_a: counts_a.unwrap_or_default(),
                counts_b: counts_b.unwrap_or_default(),
            });
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorComparison {
    BothOk,
    SameError,
    CrashDivergence,
}

pub fn compare_errors<T>(a: &Result<T, ErrorRecord>, b: &Result<T, ErrorRecord>) -> ErrorComparison {
    match (a, b) {
        (Ok(_), Ok(_)) => ErrorComparison::BothOk,
        (Err(x), Err(y)) if x.signature == y.signature => ErrorComparison::SameError,
        _ => ErrorComparison::CrashDivergence,
    }
}

/// `1 - sum(early) / (T * s_std)` where `T = early.len()`.
pub fn speedup_ratio(early: &[u64], s_std: u64) -> f64 {
    assert!(!early.is_empty(), "speedup_ratio needs at least one entry");
    let sum: f64 = early.iter().map(|s| *s as f64).sum();
    1.0 - sum / (early.len() as f64 * s_std as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(pairs: &[(u64, f64)]) -> Distribution {
        Distribution::from_probs(1, pairs.iter().copied())
    }

    #[test]
    fn hellinger_reference_values() {
        let p = d(&[(0, 0.5), (1, 0.5)]);
        assert_eq!(hellinger(&p, &p).unwrap(), 0.0);
        assert!((hellinger(&d(&[(0, 1.0)]), &d(&[(1, 1.0)])).unwrap() - 1.0).abs() < 1e-15);
        let h = hellinger(&p, &d(&[(0, 1.0)])).unwrap();
        let oracle = (1.0 - 0.5f64.sqrt()).sqrt();
        assert!((h - oracle).abs() < 1e-12);
        assert!((h - 0.541196).abs() < 1e-6);
        assert!(hellinger(&d(&[(0, 0.5)]), &p).is_err());
    }

    #[test]
    fn ceiling_tolerates_float_noise() {
        assert_eq!(ceil_shots(6400.000000000001), 6400);
        assert_eq!(ceil_shots(2262.74), 2263);
        assert_eq!(ceil_shots(0.2), 1);
    }

    #[test]
    fn budget_domain() {
        assert!(budget(0.0, 4).is_err());
        assert!(budget(1.0, 4).is_err());
        assert!(budget(0.1, 0).is_err());
    }

    #[test]
    fn speedup_formula() {
        assert_eq!(speedup_ratio(&[2263, 2263], 2263), 0.0);
        assert!((speedup_ratio(&[952; 4], 2263) - (1.0 - 952.0 / 2263.0)).abs() < 1e-15);
    }
}
