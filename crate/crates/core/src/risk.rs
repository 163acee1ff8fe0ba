//! Value-at-risk of cascading large fluctuations.
//!
//! For an agent whose conditional law is `N(μ̃, σ̃²)`, the alarm set at level
//! `δ` is `|ȳ_j| > δ + c` and the risk is the smallest `δ` at which the
//! alarm probability drops below `ε`.

use std::f64::consts::SQRT_2;
use std::fmt;

use rayon::prelude::*;
use libm::erfc;
use statrs::function::erf::erf_inv;

use crate::conditional::{ConditionalStats, ConditionedScenario, FailureScenario};
use crate::covariance::SteadyStateCovariance;
use crate::error::{Error, Result};

/// Default search ceiling as a multiple of the largest marginal std dev.
pub const CEILING_FACTOR: f64 = 1e6;

/// Relative tolerance under which two risks count as tied.
pub const TIE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskParams {
    /// Consensus tolerance.
    pub c: f64,
    /// Confidence parameter in `(0, 1)`.
    pub epsilon: f64,
    /// Ceiling for the root bracket. `None` means
    /// `CEILING_FACTOR · max σ_i` when a covariance is at hand.
    pub delta_max: Option<f64>,
}

impl RiskParams {
    pub fn new(c: f64, epsilon: f64) -> Result<Self> {
        let p = RiskParams { c, epsilon, delta_max: None };
        p.validate()?;
        Ok(p)
    }

    pub fn with_delta_max(mut self, delta_max: f64) -> Result<Self> {
        self.delta_max = Some(delta_max);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::Parameter(format!("c must be positive, got {}", self.c)));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::Parameter(format!(
                "epsilon must lie in (0, 1), got {}",
                self.epsilon
            )));
        }
        if let Some(d) = self.delta_max {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::Parameter(format!("delta_max must be positive and finite, got {d}")));
            }
        }
        Ok(())
    }

    /// Resolves the default ceiling against a covariance.
    pub fn resolved(&self, cov: &SteadyStateCovariance) -> RiskParams {
        let delta_max = self
            .delta_max
            .unwrap_or_else(|| (CEILING_FACTOR * cov.max_std_dev()).max(CEILING_FACTOR * self.c));
        RiskParams { delta_max: Some(delta_max), ..*self }
    }

    /// `erf⁻¹(1 − ε)`.
    pub fn iota(&self) -> f64 {
        erf_inv(1.0 - self.epsilon)
    }
}

/// Why a risk came out infinite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InfiniteTrigger {
    /// The failed-agent covariance block was singular or ill-conditioned.
    IllPosed,
    /// The root bracket grew past `delta_max`.
    Ceiling,
}

impl fmt::Display for InfiniteTrigger {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InfiniteTrigger::IllPosed => "ill_posed",
            InfiniteTrigger::Ceiling => "ceiling",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RiskClass {
    Zero,
    Positive,
    Infinite,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RiskValue {
    Zero,
    Positive(f64),
    Infinite(InfiniteTrigger),
}

impl RiskValue {
    pub fn value(&self) -> f64 {
        match *self {
            RiskValue::Zero => 0.0,
            RiskValue::Positive(v) => v,
            RiskValue::Infinite(_) => f64::INFINITY,
        }
    }

    pub fn classification(&self) -> RiskClass {
        match self {
            RiskValue::Zero => RiskClass::Zero,
            RiskValue::Positive(_) => RiskClass::Positive,
            RiskValue::Infinite(_) => RiskClass::Infinite,
        }
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, RiskValue::Infinite(_))
    }

    pub fn trigger(&self) -> Option<InfiniteTrigger> {
        match *self {
            RiskValue::Infinite(t) => Some(t),
            _ => None,
        }
    }
}

/// `P{|ȳ_j| > δ + c}` under `N(μ̃, σ̃²)`.
///
/// Written as `½ erfc(κ₊) + ½ erfc(κ₋)`, which equals
/// `1 − ½(erf(κ₊) + erf(κ₋))` but keeps precision in the tails.
pub fn exceedance_probability(cs: ConditionalStats, c: f64, delta: f64) -> f64 {
    let edge = delta + c;
    let sd = cs.sigma_tilde();
    if sd == 0.0 {
        return if cs.mu_tilde.abs() > edge { 1.0 } else { 0.0 };
    }
    let scale = SQRT_2 * sd;
    let k_plus = (edge + cs.mu_tilde) / scale;
    let k_minus = (edge - cs.mu_tilde) / scale;
    (0.5 * (erfc(k_plus) + erfc(k_minus))).clamp(0.0, 1.0)
}

/// Cascading risk of one agent given its conditional law.
///
/// Zero when the alarm probability at `δ = 0` is already at most `ε`.
/// Otherwise the unique root of `P(δ) = ε`, found by bisection on a bracket
/// that starts at `√2 σ̃ ι_ε + |μ̃| + c` and doubles until `P` falls below `ε`.
pub fn cascading_risk(cs: ConditionalStats, p: &RiskParams) -> Result<RiskValue> {
    p.validate()?;
    let eps = p.epsilon;
    let prob = |d: f64| exceedance_probability(cs, p.c, d);
    if prob(0.0) <= eps {
        return Ok(RiskValue::Zero);
    }
    let ceiling = p
        .delta_max
        .unwrap_or(CEILING_FACTOR * (cs.sigma_tilde() + cs.mu_tilde.abs() + p.c));

    let sd = cs.sigma_tilde();
    if sd == 0.0 {
        // point mass outside the band
        let d = cs.mu_tilde.abs() - p.c;
        return Ok(if d > ceiling {
            RiskValue::Infinite(InfiniteTrigger::Ceiling)
        } else {
            RiskValue::Positive(d)
        });
    }

    let mut hi = SQRT_2 * sd * p.iota() + cs.mu_tilde.abs() + p.c;
    while prob(hi) >= eps {
        if hi > ceiling {
            return Ok(RiskValue::Infinite(InfiniteTrigger::Ceiling));
        }
        hi *= 2.0;
    }
    if hi > ceiling && prob(ceiling) >= eps {
        return Ok(RiskValue::Infinite(InfiniteTrigger::Ceiling));
    }

    let mut lo = 0.0;
    // Bisect until the bracket cannot shrink further in f64.
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if prob(mid) >= eps {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let root = 0.5 * (lo + hi);
    Ok(if root > 0.0 { RiskValue::Positive(root) } else { RiskValue::Zero })
}

/// Unconditioned risk of an agent with steady-state std dev `sigma_j`:
/// `√2 σ_j ι_ε − c` when `σ_j > c / (√2 ι_ε)`, otherwise zero.
pub fn single_agent_risk(sigma_j: f64, p: &RiskParams) -> Result<RiskValue> {
    p.validate()?;
    if !(sigma_j >= 0.0) {
        return Err(Error::Parameter(format!("std dev must be non-negative, got {sigma_j}")));
    }
    let iota = p.iota();
    if sigma_j > p.c / (SQRT_2 * iota) {
        Ok(RiskValue::Positive(SQRT_2 * sigma_j * iota - p.c))
    } else {
        Ok(RiskValue::Zero)
    }
}

/// Risk of every agent for one failure scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskProfile {
    /// Entry `j` is the risk of agent `j`; failed agents hold `Zero`.
    pub values: Vec<RiskValue>,
    /// Conditional law per agent; `None` for failed agents and when the
    /// scenario could not be conditioned.
    pub stats: Vec<Option<ConditionalStats>>,
}

impl RiskProfile {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `(min, max)` of finite risks over the given agents.
    pub fn finite_range(&self, agents: impl IntoIterator<Item = usize>) -> Option<(f64, f64)> {
        agents
            .into_iter()
            .map(|j| self.values[j])
            .filter(|v| !v.is_infinite())
            .map(|v| v.value())
            .fold(None, |acc, v| match acc {
                None => Some((v, v)),
                Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
            })
    }
}

pub fn risk_profile(
    cov: &SteadyStateCovariance,
    scenario: &FailureScenario,
    p: &RiskParams,
) -> Result<RiskProfile> {
    p.validate()?;
    scenario.validate(cov.n())?;
    scenario.check_outside_band(p.c)?;
    let p = p.resolved(cov);
    let n = cov.n();

    let cond = match ConditionedScenario::new(cov, scenario) {
        Ok(c) => c,
        Err(Error::SingularConditioning { .. }) => {
            let values = (0..n)
                .map(|j| {
                    if scenario.contains(j) {
                        RiskValue::Zero
                    } else {
                        RiskValue::Infinite(InfiniteTrigger::IllPosed)
                    }
                })
                .collect();
            return Ok(RiskProfile { values, stats: vec![None; n] });
        }
        Err(e) => return Err(e),
    };

    let entries: Vec<(RiskValue, Option<ConditionalStats>)> = (0..n)
        .into_par_iter()
        .map(|j| {
            if scenario.contains(j) {
                return Ok((RiskValue::Zero, None));
            }
            let cs = cond.stats(j)?;
            Ok((cascading_risk(cs, &p)?, Some(cs)))
        })
        .collect::<Result<_>>()?;
    let (values, stats) = entries.into_iter().unzip();
    Ok(RiskProfile { values, stats })
}

/// Greedy ordering of agents by successive maximal cascading risk.
#[derive(Debug, Clone, PartialEq)]
pub struct VulnerableSequence {
    pub order: Vec<usize>,
    pub risks: Vec<RiskValue>,
}

/// `true` when `a` should be preferred over the incumbent `b`.
/// Infinite risks outrank finite ones; near-equal finite risks tie.
pub(crate) fn outranks(a: RiskValue, b: RiskValue) -> bool {
    match (a.is_infinite(), b.is_infinite()) {
        (true, false) => true,
        (false, true) | (true, true) => false,
        (false, false) => {
            let (x, y) = (a.value(), b.value());
            x - y > TIE_TOLERANCE * x.abs().max(y.abs()).max(1.0)
        }
    }
}

/// Picks the highest-risk agent, ties to the lowest index.
pub(crate) fn argmax_risk(candidates: impl IntoIterator<Item = (usize, RiskValue)>) -> Option<(usize, RiskValue)> {
    let mut best: Option<(usize, RiskValue)> = None;
    for (j, v) in candidates {
        match best {
            None => best = Some((j, v)),
            Some((_, bv)) if outranks(v, bv) => best = Some((j, v)),
            _ => {}
        }
    }
    best
}

/// Builds the most vulnerable sequence by repeatedly failing the agent of
/// highest risk, observed at `y_f_value`.
///
/// Conditional means and covariances of all agents are carried forward with
/// the one-failure-at-a-time update, so no block is refactored between steps.
pub fn most_vulnerable_sequence(
    cov: &SteadyStateCovariance,
    p: &RiskParams,
    y_f_value: f64,
    length: usize,
    seed_scenario: &FailureScenario,
) -> Result<VulnerableSequence> {
    p.validate()?;
    let n = cov.n();
    seed_scenario.validate(n)?;
    seed_scenario.check_outside_band(p.c)?;
    if !(y_f_value.abs() > p.c) {
        return Err(Error::Parameter(format!(
            "failure value {y_f_value} must lie outside the consensus band |y| <= {}",
            p.c
        )));
    }
    let m = seed_scenario.len();
    if length == 0 || length > n - m {
        return Err(Error::Parameter(format!(
            "sequence length must be in 1..={}, got {length}",
            n - m
        )));
    }
    let p = p.resolved(cov);

    let mut failed: Vec<bool> = (0..n).map(|j| seed_scenario.contains(j)).collect();
    let mut state = match ConditionedScenario::new(cov, seed_scenario) {
        Ok(cond) => Some(JointConditional::from_conditioned(&cond, &failed)?),
        Err(Error::SingularConditioning { .. }) => None,
        Err(e) => return Err(e),
    };

    let mut order = Vec::with_capacity(length);
    let mut risks = Vec::with_capacity(length);
    for _ in 0..length {
        let candidates: Vec<(usize, RiskValue)> = (0..n)
            .filter(|&j| !failed[j])
            .map(|j| {
                let v = match &state {
                    Some(s) => cascading_risk(s.stats(j), &p)?,
                    None => RiskValue::Infinite(InfiniteTrigger::IllPosed),
                };
                Ok((j, v))
            })
            .collect::<Result<_>>()?;
        let (k, v) = argmax_risk(candidates).expect("at least one agent remains");
        order.push(k);
        risks.push(v);
        failed[k] = true;
        if let Some(s) = &mut state {
            if !s.observe(k, y_f_value) {
                state = None;
            }
        }
    }
    Ok(VulnerableSequence { order, risks })
}

/// Joint conditional mean vector and covariance matrix of all agents.
struct JointConditional {
    mean: Vec<f64>,
    cov: Vec<Vec<f64>>,
    marginal: Vec<f64>,
}

impl JointConditional {
    fn from_conditioned(cond: &ConditionedScenario<'_>, failed: &[bool]) -> Result<Self> {
        let n = failed.len();
        let live: Vec<usize> = (0..n).filter(|&j| !failed[j]).collect();
        let mut mean = vec![0.0; n];
        let mut cov = vec![vec![0.0; n]; n];
        for &j in &live {
            mean[j] = cond.stats(j)?.mu_tilde;
            for &k in &live {
                cov[j][k] = cond.cross_covariance(j, k)?;
            }
        }
        let marginal = (0..n).map(|j| cov[j][j]).collect();
        Ok(JointConditional { mean, cov, marginal })
    }

    fn stats(&self, j: usize) -> ConditionalStats {
        let v = self.cov[j][j];
        ConditionalStats::new(self.mean[j], if v > 0.0 { v } else { 0.0 })
    }

    /// Conditions on agent `k` observed at `y`. Returns `false` when the
    /// observation is already determined by earlier ones.
    fn observe(&mut self, k: usize, y: f64) -> bool {
        let n = self.mean.len();
        let pivot = self.cov[k][k];
        if pivot <= crate::conditional::VARIANCE_CLAMP * self.marginal[k].max(f64::MIN_POSITIVE) {
            return false;
        }
        let col: Vec<f64> = (0..n).map(|j| self.cov[j][k]).collect();
        let innovation = self.mean[k] - y;
        for j in 0..n {
            self.mean[j] -= col[j] / pivot * innovation;
            for l in 0..n {
                self.cov[j][l] -= col[j] * col[l] / pivot;
            }
        }
        true
    }
}
