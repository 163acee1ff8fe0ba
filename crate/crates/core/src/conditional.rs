//! Conditioning the stationary law on agents observed in failure states.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::covariance::SteadyStateCovariance;
use crate::error::{Error, Result};

/// Condition-number ceiling for the failed-agent covariance block.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Relative window inside which a slightly negative conditional variance is
/// rounded to zero.
pub const VARIANCE_CLAMP: f64 = 1e-12;

/// Failed agents (sorted, distinct, 0-based) and their observed values.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FailureScenario {
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl FailureScenario {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Pairs are sorted by agent index; duplicates are rejected.
    pub fn new(indices: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if indices.len() != values.len() {
            return Err(Error::Parameter(format!(
                "{} failed agents but {} observed values",
                indices.len(),
                values.len()
            )));
        }
        let mut pairs: Vec<(usize, f64)> = indices.into_iter().zip(values).collect();
        pairs.sort_by_key(|p| p.0);
        for w in pairs.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::Index {
                    agent: w[0].0,
                    reason: "is listed as failed more than once",
                });
            }
        }
        if let Some(&(agent, v)) = pairs.iter().find(|p| !p.1.is_finite()) {
            return Err(Error::Parameter(format!("agent {agent} has non-finite value {v}")));
        }
        let (indices, values) = pairs.into_iter().unzip();
        Ok(FailureScenario { indices, values })
    }

    /// Every listed agent observed at the same value.
    pub fn uniform(indices: Vec<usize>, value: f64) -> Result<Self> {
        let values = vec![value; indices.len()];
        Self::new(indices, values)
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, agent: usize) -> bool {
        self.indices.binary_search(&agent).is_ok()
    }

    /// Copy of the scenario with one more failed agent.
    pub fn with_failure(&self, agent: usize, value: f64) -> Result<Self> {
        let mut idx = self.indices.clone();
        let mut val = self.values.clone();
        idx.push(agent);
        val.push(value);
        Self::new(idx, val)
    }

    /// Checks indices against the network size (`m < n`).
    pub fn validate(&self, n: usize) -> Result<()> {
        if let Some(&agent) = self.indices.iter().find(|&&i| i >= n) {
            return Err(Error::Index { agent, reason: "is out of range" });
        }
        if self.len() >= n {
            return Err(Error::Parameter(format!(
                "{} failures leave no agent to assess in a network of {n}",
                self.len()
            )));
        }
        Ok(())
    }

    /// Failure values must lie outside the consensus band: `|y_f| > c`.
    pub fn check_outside_band(&self, c: f64) -> Result<()> {
        for (&agent, &v) in self.indices.iter().zip(&self.values) {
            if v.abs() <= c {
                return Err(Error::Parameter(format!(
                    "agent {agent} value {v} is inside the consensus band |y| <= {c}"
                )));
            }
        }
        Ok(())
    }
}

/// Conditional law `N(mu_tilde, sigma_tilde_sq)` of one agent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionalStats {
    pub mu_tilde: f64,
    pub sigma_tilde_sq: f64,
}

impl ConditionalStats {
    pub fn new(mu_tilde: f64, sigma_tilde_sq: f64) -> Self {
        ConditionalStats { mu_tilde, sigma_tilde_sq }
    }

    pub fn sigma_tilde(&self) -> f64 {
        self.sigma_tilde_sq.sqrt()
    }
}

fn clamp_variance(v: f64, scale: f64) -> Result<f64> {
    if v >= 0.0 {
        Ok(v)
    } else if v >= -VARIANCE_CLAMP * scale.max(1.0) {
        Ok(0.0)
    } else {
        Err(Error::Numerical(format!("conditional variance {v:e} is negative")))
    }
}

/// A failure scenario with its covariance block factored once, so the
/// conditional law of many agents can be evaluated cheaply.
#[derive(Debug, Clone)]
pub struct ConditionedScenario<'a> {
    cov: &'a SteadyStateCovariance,
    scenario: FailureScenario,
    chol: Option<Cholesky<f64, Dyn>>,
    // Σ̃22⁻¹ y_f
    weights: DVector<f64>,
}

impl<'a> ConditionedScenario<'a> {
    pub fn new(cov: &'a SteadyStateCovariance, scenario: &FailureScenario) -> Result<Self> {
        scenario.validate(cov.n())?;
        let m = scenario.len();
        if m == 0 {
            return Ok(ConditionedScenario {
                cov,
                scenario: scenario.clone(),
                chol: None,
                weights: DVector::zeros(0),
            });
        }
        let idx = scenario.indices();
        let block = DMatrix::from_fn(m, m, |r, c| cov.get(idx[r], idx[c]));

        let ev = block.clone().symmetric_eigenvalues();
        let (lo, hi) = ev
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        if !(condition <= CONDITION_LIMIT) {
            return Err(Error::SingularConditioning { condition });
        }
        let chol = Cholesky::new(block).ok_or(Error::SingularConditioning {
            condition: f64::INFINITY,
        })?;
        let weights = chol.solve(&DVector::from_column_slice(scenario.values()));
        Ok(ConditionedScenario {
            cov,
            scenario: scenario.clone(),
            chol: Some(chol),
            weights,
        })
    }

    pub fn scenario(&self) -> &FailureScenario {
        &self.scenario
    }

    fn cross_column(&self, j: usize) -> DVector<f64> {
        DVector::from_iterator(
            self.scenario.len(),
            self.scenario.indices().iter().map(|&i| self.cov.get(j, i)),
        )
    }

    fn check_agent(&self, j: usize) -> Result<()> {
        if j >= self.cov.n() {
            return Err(Error::Index { agent: j, reason: "is out of range" });
        }
        if self.scenario.contains(j) {
            return Err(Error::Index { agent: j, reason: "is already in the failure set" });
        }
        Ok(())
    }

    /// `μ̃ = Σ̃12 Σ̃22⁻¹ y_f`, `σ̃² = σ_j² − Σ̃12 Σ̃22⁻¹ Σ̃21`.
    pub fn stats(&self, j: usize) -> Result<ConditionalStats> {
        self.check_agent(j)?;
        let var = self.cov.variance(j);
        let Some(chol) = &self.chol else {
            return Ok(ConditionalStats::new(0.0, var));
        };
        let cross = self.cross_column(j);
        let mu = cross.dot(&self.weights);
        let reduction = cross.dot(&chol.solve(&cross));
        Ok(ConditionalStats::new(mu, clamp_variance(var - reduction, var)?))
    }

    /// Conditional cross-covariance `σ̃_jk = σ_jk − Σ̃12(j) Σ̃22⁻¹ Σ̃21(k)`.
    pub fn cross_covariance(&self, j: usize, k: usize) -> Result<f64> {
        self.check_agent(j)?;
        self.check_agent(k)?;
        let raw = self.cov.get(j, k);
        let Some(chol) = &self.chol else {
            return Ok(raw);
        };
        Ok(raw - self.cross_column(j).dot(&chol.solve(&self.cross_column(k))))
    }
}

/// Conditional law of agent `j` given the failed agents' observed values.
pub fn conditional_stats(
    cov: &SteadyStateCovariance,
    j: usize,
    scenario: &FailureScenario,
) -> Result<ConditionalStats> {
    ConditionedScenario::new(cov, scenario)?.stats(j)
}

/// Updates agent `j`'s conditional law when agent `k` is newly observed at
/// `y_fk`, using only quantities conditioned on the prior failure set:
///
/// `μ̃' = μ̃_j − (σ̃_jk / σ̃_k²)(μ̃_k − y_fk)`, `σ̃'² = σ̃_j² − σ̃_jk² / σ̃_k²`.
pub fn incremental_update(
    cov: &SteadyStateCovariance,
    j: usize,
    scenario: &FailureScenario,
    k: usize,
    y_fk: f64,
) -> Result<ConditionalStats> {
    if j == k {
        return Err(Error::Index { agent: j, reason: "is the newly failed agent" });
    }
    let cond = ConditionedScenario::new(cov, scenario)?;
    update_from(&cond, j, k, y_fk)
}

pub(crate) fn update_from(
    cond: &ConditionedScenario<'_>,
    j: usize,
    k: usize,
    y_fk: f64,
) -> Result<ConditionalStats> {
    let sj = cond.stats(j)?;
    let sk = cond.stats(k)?;
    let cross = cond.cross_covariance(j, k)?;
    let var_k = cond.cov.variance(k);
    if sk.sigma_tilde_sq <= VARIANCE_CLAMP * var_k.max(f64::MIN_POSITIVE) {
        return Err(Error::DegenerateUpdate(k));
    }
    let gain = cross / sk.sigma_tilde_sq;
    let mu = sj.mu_tilde - gain * (sk.mu_tilde - y_fk);
    let var = sj.sigma_tilde_sq - cross * cross / sk.sigma_tilde_sq;
    Ok(ConditionalStats::new(mu, clamp_variance(var, cond.cov.variance(j))?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::{steady_state_covariance, NoiseDelayConfig};
    use crate::graph::{build_graph, laplacian, spectral, GraphKind};

    fn cov_of(kind: GraphKind, n: usize, b: f64, tau: f64) -> SteadyStateCovariance {
        let s = spectral(&laplacian(&build_graph(&kind, n).unwrap())).unwrap();
        steady_state_covariance(&s, NoiseDelayConfig::new(b, tau)).unwrap()
    }

    #[test]
    fn scenario_is_sorted_and_validated() {
        let s = FailureScenario::new(vec![5, 2, 9], vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(s.indices(), &[2, 5, 9]);
        assert_eq!(s.values(), &[2.0, 1.0, 3.0]);
        assert!(FailureScenario::new(vec![1, 1], vec![2.0, 2.0]).is_err());
        assert!(FailureScenario::new(vec![1], vec![]).is_err());
        assert!(s.validate(9).is_err());
        assert!(s.validate(10).is_ok());
        assert!(s.check_outside_band(0.5).is_ok());
        assert!(s.check_outside_band(1.0).is_err());
    }

    #[test]
    fn uncorrelated_failures_leave_marginal() {
        let m = DMatrix::from_row_slice(3, 3, &[2.0, 0.0, 0.0, 0.0, 1.0, 0.4, 0.0, 0.4, 1.0]);
        let cov = SteadyStateCovariance::from_matrix(m).unwrap();
        let sc = FailureScenario::uniform(vec![1, 2], 3.0).unwrap();
        let cs = conditional_stats(&cov, 0, &sc).unwrap();
        assert_eq!(cs.mu_tilde, 0.0);
        assert_eq!(cs.sigma_tilde_sq, 2.0);
    }

    #[test]
    fn single_failure_is_scalar_regression() {
        let cov = cov_of(GraphKind::Path, 10, 4.0, 0.05);
        let (j, i, y) = (3, 6, 2.0);
        let sc = FailureScenario::uniform(vec![i], y).unwrap();
        let cs = conditional_stats(&cov, j, &sc).unwrap();
        let s_ji = cov.get(j, i);
        let v_i = cov.variance(i);
        assert!((cs.mu_tilde - s_ji / v_i * y).abs() < 1e-12 * cs.mu_tilde.abs().max(1.0));
        let want = cov.variance(j) - s_ji * s_ji / v_i;
        assert!((cs.sigma_tilde_sq - want).abs() < 1e-12 * want);
    }

    #[test]
    fn empty_scenario_is_unconditional() {
        let cov = cov_of(GraphKind::Complete, 5, 1.0, 0.1);
        let cs = conditional_stats(&cov, 2, &FailureScenario::empty()).unwrap();
        assert_eq!(cs, ConditionalStats::new(0.0, cov.variance(2)));
    }

    #[test]
    fn index_errors() {
        let cov = cov_of(GraphKind::Path, 5, 1.0, 0.1);
        let sc = FailureScenario::uniform(vec![2], 1.0).unwrap();
        assert!(matches!(conditional_stats(&cov, 2, &sc), Err(Error::Index { agent: 2, .. })));
        assert!(matches!(conditional_stats(&cov, 7, &sc), Err(Error::Index { agent: 7, .. })));
        let all_but_one = FailureScenario::uniform(vec![0, 1, 2, 3, 4], 1.0).unwrap();
        assert!(conditional_stats(&cov, 0, &all_but_one).is_err());
    }

    #[test]
    fn singular_block_is_flagged() {
        // Two perfectly correlated failed agents.
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 0.5, 0.5, 0.5, 1.0, 1.0, 0.5, 1.0, 1.0]);
        let cov = SteadyStateCovariance::from_matrix(m).unwrap();
        let sc = FailureScenario::uniform(vec![1, 2], 2.0).unwrap();
        assert!(matches!(
            conditional_stats(&cov, 0, &sc),
            Err(Error::SingularConditioning { .. })
        ));
    }

    #[test]
    fn n_minus_one_failures_pin_the_last_agent() {
        // Observables sum to zero, so the last agent is determined.
        let cov = cov_of(GraphKind::Complete, 4, 1.0, 0.1);
        let sc = FailureScenario::new(vec![0, 1, 2], vec![1.0, 2.0, -0.5]).unwrap();
        let cs = conditional_stats(&cov, 3, &sc).unwrap();
        assert!((cs.mu_tilde + 2.5).abs() < 1e-9);
        assert_eq!(cs.sigma_tilde_sq, 0.0);
    }

    #[test]
    fn update_from_empty_matches_scalar_conditioning() {
        let cov = cov_of(GraphKind::PCycle { p: 2 }, 9, 2.0, 0.1);
        let up = incremental_update(&cov, 1, &FailureScenario::empty(), 4, -1.5).unwrap();
        let direct = conditional_stats(&cov, 1, &FailureScenario::uniform(vec![4], -1.5).unwrap())
            .unwrap();
        assert!((up.mu_tilde - direct.mu_tilde).abs() < 1e-12);
        assert!((up.sigma_tilde_sq - direct.sigma_tilde_sq).abs() < 1e-12);
    }

    #[test]
    fn uninformative_update_changes_nothing() {
        let m = DMatrix::from_row_slice(
            3,
            3,
            &[1.0, 0.3, 0.0, 0.3, 1.0, 0.0, 0.0, 0.0, 1.0],
        );
        let cov = SteadyStateCovariance::from_matrix(m).unwrap();
        let prior = FailureScenario::uniform(vec![1], 2.0).unwrap();
        let before = conditional_stats(&cov, 0, &prior).unwrap();
        let after = incremental_update(&cov, 0, &prior, 2, 5.0).unwrap();
        assert_eq!(before, after);
    }

    #[test]
    fn update_matches_direct_on_case_study_path() {
        let cov = cov_of(GraphKind::Path, 20, 4.0, 0.05);
        let prior = FailureScenario::uniform(vec![8, 9, 10], 2.0).unwrap();
        let enlarged = prior.with_failure(11, 2.0).unwrap();
        for j in [0, 5, 7, 12, 19] {
            let up = incremental_update(&cov, j, &prior, 11, 2.0).unwrap();
            let direct = conditional_stats(&cov, j, &enlarged).unwrap();
            assert!((up.mu_tilde - direct.mu_tilde).abs() <= 1e-10 * direct.mu_tilde.abs());
            assert!(
                (up.sigma_tilde_sq - direct.sigma_tilde_sq).abs() <= 1e-10 * direct.sigma_tilde_sq
            );
        }
    }

    #[test]
    fn update_errors() {
        let cov = cov_of(GraphKind::Complete, 3, 1.0, 0.1);
        let prior = FailureScenario::uniform(vec![0], 1.0).unwrap();
        assert!(matches!(
            incremental_update(&cov, 1, &prior, 1, 1.0),
            Err(Error::Index { .. })
        ));
        assert!(matches!(
            incremental_update(&cov, 1, &prior, 0, 1.0),
            Err(Error::Index { .. })
        ));
        // Agents 0 and 1 fix agent 2, so learning about it after 0 and 1
        // is degenerate; here only 0 is known, so k = 2 still informs j = 1.
        assert!(incremental_update(&cov, 1, &prior, 2, 1.0).is_ok());
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 0.5, 0.5, 0.5, 1.0, 1.0, 0.5, 1.0, 1.0]);
        let cov = SteadyStateCovariance::from_matrix(m).unwrap();
        let prior = FailureScenario::uniform(vec![1], 1.0).unwrap();
        assert!(matches!(
            incremental_update(&cov, 0, &prior, 2, 1.0),
            Err(Error::DegenerateUpdate(2))
        ));
    }
}
