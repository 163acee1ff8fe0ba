//! Steady-state covariance of the centered observables `y = M_n x`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::graph::{max_stable_delay, SpectralData};

/// Noise magnitude `b` and the uniform communication delay `tau`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseDelayConfig {
    pub b: f64,
    pub tau: f64,
}

impl NoiseDelayConfig {
    pub fn new(b: f64, tau: f64) -> Self {
        NoiseDelayConfig { b, tau }
    }
}

/// Stationary covariance `Σ` of the observables. Rank `n - 1` for a
/// connected graph since `Σ · 1 = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SteadyStateCovariance {
    sigma: DMatrix<f64>,
}

/// Per-mode weight `cos(λτ) / (λ (1 - sin(λτ)))` of a non-zero eigenvalue.
pub fn mode_gain(lambda: f64, tau: f64) -> f64 {
    let phase = lambda * tau;
    phase.cos() / (lambda * (1.0 - phase.sin()))
}

/// Evaluates the closed-form stationary covariance
///
/// `σ_ij = (b²/2) Σ_{k≥2} cos(λ_k τ) / (λ_k (1 - sin(λ_k τ))) · q_k[i] q_k[j]`
///
/// summing modes in ascending eigenvalue order. Because every `q_k` with
/// `k ≥ 2` is orthogonal to the consensus direction, `m_iᵀ q_k = q_k[i]`.
pub fn steady_state_covariance(
    s: &SpectralData,
    cfg: NoiseDelayConfig,
) -> Result<SteadyStateCovariance> {
    if !cfg.b.is_finite() {
        return Err(Error::Parameter(format!("noise magnitude must be finite, got {}", cfg.b)));
    }
    if !(cfg.tau.is_finite() && cfg.tau >= 0.0) {
        return Err(Error::Parameter(format!("delay must be non-negative, got {}", cfg.tau)));
    }
    let bound = max_stable_delay(s)?;
    if cfg.tau >= bound {
        return Err(Error::Stability { tau: cfg.tau, bound });
    }

    let n = s.n();
    let q = s.eigenvectors();
    let half_b2 = 0.5 * cfg.b * cfg.b;
    let mut sigma = DMatrix::zeros(n, n);
    for k in 1..n {
        let gain = half_b2 * mode_gain(s.lambdas()[k], cfg.tau);
        let col = q.column(k);
        for j in 0..n {
            let cj = gain * col[j];
            for i in j..n {
                sigma[(i, j)] += cj * col[i];
            }
        }
    }
    for j in 0..n {
        for i in j + 1..n {
            sigma[(j, i)] = sigma[(i, j)];
        }
    }
    Ok(SteadyStateCovariance { sigma })
}

impl SteadyStateCovariance {
    /// Wraps a caller-supplied covariance matrix. Only squareness, symmetry
    /// and non-negative diagonals are checked.
    pub fn from_matrix(sigma: DMatrix<f64>) -> Result<Self> {
        let n = sigma.nrows();
        if n != sigma.ncols() || n == 0 {
            return Err(Error::Parameter("covariance must be square and non-empty".into()));
        }
        for i in 0..n {
            if !(sigma[(i, i)] >= 0.0) {
                return Err(Error::Parameter(format!("negative variance at agent {i}")));
            }
            for j in 0..i {
                if sigma[(i, j)] != sigma[(j, i)] {
                    return Err(Error::Parameter("covariance must be symmetric".into()));
                }
            }
        }
        Ok(SteadyStateCovariance { sigma })
    }

    pub fn n(&self) -> usize {
        self.sigma.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.sigma[(i, j)]
    }

    pub fn variance(&self, i: usize) -> f64 {
        self.sigma[(i, i)]
    }

    pub fn std_dev(&self, i: usize) -> f64 {
        self.sigma[(i, i)].sqrt()
    }

    pub fn max_std_dev(&self) -> f64 {
        (0..self.n()).map(|i| self.std_dev(i)).fold(0.0, f64::max)
    }
}

/// Correlation `ρ_ij = σ_ij / (σ_i σ_j)`; independent of the noise magnitude.
pub fn correlation(cov: &SteadyStateCovariance, i: usize, j: usize) -> Result<f64> {
    let n = cov.n();
    for a in [i, j] {
        if a >= n {
            return Err(Error::Index { agent: a, reason: "is out of range" });
        }
        if cov.variance(a) <= 0.0 {
            return Err(Error::ZeroVariance(a));
        }
    }
    if i == j {
        return Ok(1.0);
    }
    let rho = cov.get(i, j) / (cov.std_dev(i) * cov.std_dev(j));
    Ok(rho.clamp(-1.0, 1.0))
}
