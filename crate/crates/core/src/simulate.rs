//! Monte Carlo oracles: Euler–Maruyama simulation of the delayed consensus
//! dynamics and sampling from the analytical stationary law.
//!
//! Random streams are split deterministically: trial (or chunk) `k` of a run
//! seeded with `seed` uses `ChaCha8Rng::seed_from_u64(seed)` with its stream
//! id set to `k`. Results therefore do not depend on the thread schedule.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::conditional::FailureScenario;
use crate::covariance::{NoiseDelayConfig, SteadyStateCovariance};
use crate::error::{Error, Result};
use crate::graph::{laplacian, max_stable_delay, spectral, WeightedGraph};
use crate::risk::RiskParams;

/// Divergence threshold on `‖x‖∞`.
pub const DIVERGENCE_LIMIT: f64 = 1e8;

/// Minimum number of accepted samples for the rejection oracle.
pub const MIN_ACCEPTED: usize = 1000;

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: f64,
    pub burn_in: f64,
    pub trials: usize,
    pub seed: u64,
    /// Constant initial history on `[-τ, 0]`; empty means all zeros.
    pub initial_history: Vec<f64>,
    /// Number of batches for batch-means standard errors.
    pub batches: usize,
    /// When set, each trial's sampled observables are written to
    /// `trial_<k>.csv` in this directory.
    pub trajectory_dir: Option<PathBuf>,
    /// Skip the stability-bound check. Used to probe divergence past it.
    pub allow_unstable: bool,
}

impl SimConfig {
    pub fn new(dt: f64, horizon: f64, burn_in: f64, trials: usize, seed: u64) -> Self {
        SimConfig {
            dt,
            horizon,
            burn_in,
            trials,
            seed,
            initial_history: Vec::new(),
            batches: 20,
            trajectory_dir: None,
            allow_unstable: false,
        }
    }

    /// Every violated precondition, not just the first.
    pub fn violations(&self, n: usize, lambda_max: f64, tau: f64) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            v.push(format!("dt must be positive, got {}", self.dt));
        }
        if tau > 0.0 && self.dt > tau / 20.0 {
            v.push(format!("dt = {} exceeds tau/20 = {}", self.dt, tau / 20.0));
        }
        if !(self.dt * lambda_max < 0.1) {
            v.push(format!(
                "dt * lambda_max = {} must be below 0.1",
                self.dt * lambda_max
            ));
        }
        if !(self.burn_in > 0.0 && self.burn_in < self.horizon) {
            v.push(format!(
                "burn_in = {} must be positive and below horizon = {}",
                self.burn_in, self.horizon
            ));
        }
        if self.trials == 0 {
            v.push("trials must be positive".into());
        }
        if self.batches < 2 {
            v.push(format!("need at least 2 batches, got {}", self.batches));
        }
        if !self.initial_history.is_empty() && self.initial_history.len() != n {
            v.push(format!(
                "initial history has {} entries for {n} agents",
                self.initial_history.len()
            ));
        }
        v
    }

    fn delay_steps(&self, tau: f64) -> usize {
        (tau / self.dt).round() as usize
    }

    /// Steps between recorded samples: `max(1, round(0.1 τ / dt))`.
    pub fn sample_stride(&self, tau: f64) -> usize {
        ((0.1 * tau / self.dt).round() as usize).max(1)
    }
}

/// Empirical moments of the observables after burn-in.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalStats {
    pub cov_hat: DMatrix<f64>,
    pub mean_hat: Vec<f64>,
    /// Batch-means standard error of each `cov_hat` entry.
    pub cov_se: DMatrix<f64>,
    /// Batch-means standard error of each `mean_hat` entry.
    pub mean_se: Vec<f64>,
    pub samples: usize,
    pub batches: usize,
}

impl EmpiricalStats {
    /// Largest `|cov_hat − Σ| / se` over all entries. Entries with zero
    /// standard error count only if they differ.
    pub fn max_z_score(&self, reference: &DMatrix<f64>) -> f64 {
        let mut worst: f64 = 0.0;
        for (k, (&hat, &want)) in self.cov_hat.iter().zip(reference.iter()).enumerate() {
            let se = self.cov_se[k];
            let diff = (hat - want).abs();
            let z = if se > 0.0 {
                diff / se
            } else if diff > 1e-12 {
                f64::INFINITY
            } else {
                0.0
            };
            worst = worst.max(z);
        }
        worst
    }
}

#[derive(Clone)]
struct Moments {
    count: usize,
    sum: Vec<f64>,
    // row-major n x n
    outer: Vec<f64>,
}

impl Moments {
    fn new(n: usize) -> Self {
        Moments { count: 0, sum: vec![0.0; n], outer: vec![0.0; n * n] }
    }

    fn push(&mut self, y: &[f64]) {
        let n = y.len();
        self.count += 1;
        for i in 0..n {
            self.sum[i] += y[i];
            let row = &mut self.outer[i * n..i * n + n];
            let yi = y[i];
            for j in i..n {
                row[j] += yi * y[j];
            }
        }
    }

    fn merge(&mut self, other: &Moments) {
        self.count += other.count;
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            *a += b;
        }
        for (a, b) in self.outer.iter_mut().zip(&other.outer) {
            *a += b;
        }
    }

    fn finish(&self) -> (Vec<f64>, DMatrix<f64>) {
        let n = self.sum.len();
        let c = self.count.max(1) as f64;
        let mean: Vec<f64> = self.sum.iter().map(|s| s / c).collect();
        let mut cov = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = self.outer[i * n + j] / c - mean[i] * mean[j];
                cov[(i, j)] = v;
                cov[(j, i)] = v;
            }
        }
        (mean, cov)
    }
}

/// Simulates `dx = −L x(t−τ) dt + b dξ` and collects the centered
/// observables `y = x − mean(x)` after burn-in.
///
/// Euler–Maruyama with a ring-buffer delay line of `round(τ/dt)` steps; the
/// delayed drift uses the trapezoid over `[t−τ, t+dt−τ]` when the delay spans
/// at least one step, which keeps the scheme explicit.
/// Standard errors come from batch means: trials are grouped into
/// contiguous batches when there are at least as many trials as batches,
/// otherwise every trial's post-burn-in window is cut into equal time blocks.
pub fn simulate(g: &WeightedGraph, cfg: NoiseDelayConfig, sim: &SimConfig) -> Result<EmpiricalStats> {
    let n = g.n();
    let s = spectral(&laplacian(g))?;
    if !sim.allow_unstable {
        let bound = max_stable_delay(&s)?;
        if !(cfg.tau < bound) {
            return Err(Error::Stability { tau: cfg.tau, bound });
        }
    }
    if !(cfg.tau >= 0.0 && cfg.b.is_finite()) {
        return Err(Error::Parameter(format!("invalid noise/delay {cfg:?}")));
    }
    let errs = sim.violations(n, s.lambda_max(), cfg.tau);
    if !errs.is_empty() {
        return Err(Error::Config(errs));
    }

    let steps = (sim.horizon / sim.dt).round() as usize;
    let burn = (sim.burn_in / sim.dt).round() as usize;
    let stride = sim.sample_stride(cfg.tau);
    let by_trial = sim.trials >= sim.batches;
    let blocks = if by_trial { 1 } else { sim.batches };
    let recorded = (burn + 1..=steps).filter(|s| s % stride == 0).count();
    if recorded < blocks {
        return Err(Error::Config(vec![format!(
            "only {recorded} post-burn-in samples per trial for {blocks} blocks"
        )]));
    }
    if let Some(dir) = &sim.trajectory_dir {
        std::fs::create_dir_all(dir)?;
    }

    let neighbors = g.neighbors();
    let run = TrialRunner {
        neighbors: &neighbors,
        n,
        b: cfg.b,
        dt: sim.dt,
        delay: sim.delay_steps(cfg.tau),
        steps,
        burn,
        stride,
        blocks,
        per_block: recorded.div_ceil(blocks),
        history: if sim.initial_history.is_empty() {
            vec![0.0; n]
        } else {
            sim.initial_history.clone()
        },
        dump: sim.trajectory_dir.clone(),
        seed: sim.seed,
    };

    let per_trial: Vec<Result<Vec<Moments>>> =
        (0..sim.trials).into_par_iter().map(|t| run.trial(t)).collect();

    let mut batches = vec![Moments::new(n); sim.batches];
    for (t, r) in per_trial.into_iter().enumerate() {
        let blocks = r?;
        if by_trial {
            batches[t * sim.batches / sim.trials].merge(&blocks[0]);
        } else {
            for (b, m) in blocks.iter().enumerate() {
                batches[b].merge(m);
            }
        }
    }
    Ok(summarize(&batches))
}

fn summarize(batches: &[Moments]) -> EmpiricalStats {
    let n = batches[0].sum.len();
    let mut total = Moments::new(n);
    for b in batches {
        total.merge(b);
    }
    let (mean_hat, cov_hat) = total.finish();
    let per: Vec<(Vec<f64>, DMatrix<f64>)> = batches.iter().map(Moments::finish).collect();
    let nb = batches.len() as f64;

    let mut cov_se = DMatrix::zeros(n, n);
    let mut mean_se = vec![0.0; n];
    for i in 0..n {
        let avg: f64 = per.iter().map(|p| p.0[i]).sum::<f64>() / nb;
        let var: f64 = per.iter().map(|p| (p.0[i] - avg).powi(2)).sum::<f64>() / (nb - 1.0);
        mean_se[i] = (var / nb).sqrt();
        for j in 0..n {
            let avg: f64 = per.iter().map(|p| p.1[(i, j)]).sum::<f64>() / nb;
            let var: f64 =
                per.iter().map(|p| (p.1[(i, j)] - avg).powi(2)).sum::<f64>() / (nb - 1.0);
            cov_se[(i, j)] = (var / nb).sqrt();
        }
    }
    EmpiricalStats {
        cov_hat,
        mean_hat,
        cov_se,
        mean_se,
        samples: total.count,
        batches: batches.len(),
    }
}

struct TrialRunner<'a> {
    neighbors: &'a [Vec<(usize, f64)>],
    n: usize,
    b: f64,
    dt: f64,
    delay: usize,
    steps: usize,
    burn: usize,
    stride: usize,
    blocks: usize,
    per_block: usize,
    history: Vec<f64>,
    dump: Option<PathBuf>,
    seed: u64,
}

impl TrialRunner<'_> {
    fn trial(&self, trial: usize) -> Result<Vec<Moments>> {
        let n = self.n;
        let slots = self.delay + 1;
        let mut rng = stream_rng(self.seed, trial as u64);
        let mut ring: Vec<Vec<f64>> = vec![self.history.clone(); slots];
        let mut y = vec![0.0; n];
        let mut blocks = vec![Moments::new(n); self.blocks];
        let mut recorded = 0usize;
        let noise = self.b * self.dt.sqrt();

        let mut dump = match &self.dump {
            Some(dir) => {
                let mut w = BufWriter::new(File::create(dir.join(format!("trial_{trial}.csv")))?);
                let cols: Vec<String> = (1..=n).map(|i| format!("y_{i}")).collect();
                writeln!(w, "t,{}", cols.join(","))?;
                Some(w)
            }
            None => None,
        };

        let mut out = vec![0.0; n];
        for step in 0..self.steps {
            let cur = step % slots;
            let next = (step + 1) % slots;
            // slot `next` still holds x(step − delay), the slot after it x(step + 1 − delay)
            {
                let delayed = &ring[next];
                let now = &ring[cur];
                let later = &ring[(step + 2) % slots];
                for i in 0..n {
                    let mut lx = 0.0;
                    if self.delay == 0 {
                        for &(j, w) in &self.neighbors[i] {
                            lx += w * (delayed[i] - delayed[j]);
                        }
                    } else {
                        for &(j, w) in &self.neighbors[i] {
                            lx += 0.5 * w * (delayed[i] - delayed[j] + later[i] - later[j]);
                        }
                    }
                    let g: f64 = rng.sample(StandardNormal);
                    out[i] = now[i] - self.dt * lx + noise * g;
                }
            }
            if out.iter().any(|v| !(v.abs() <= DIVERGENCE_LIMIT)) {
                return Err(Error::Divergence { trial, step: step + 1 });
            }
            ring[next].copy_from_slice(&out);

            let s = step + 1;
            if s % self.stride == 0 && (s > self.burn || dump.is_some()) {
                let x = &ring[next];
                let avg = x.iter().sum::<f64>() / n as f64;
                for i in 0..n {
                    y[i] = x[i] - avg;
                }
                if let Some(w) = dump.as_mut() {
                    write!(w, "{:?}", s as f64 * self.dt)?;
                    for v in &y {
                        write!(w, ",{v:?}")?;
                    }
                    writeln!(w)?;
                }
                if s > self.burn {
                    let b = (recorded / self.per_block).min(self.blocks - 1);
                    blocks[b].push(&y);
                    recorded += 1;
                }
            }
        }
        if let Some(mut w) = dump {
            w.flush()?;
        }
        Ok(blocks)
    }
}

/// Draws from `N(0, Σ)` through the spectral factor `Q diag(√λ)`, keeping
/// only modes with non-negligible variance.
#[derive(Debug, Clone)]
pub struct SteadyStateSampler {
    n: usize,
    // n x r, row-major
    factor: Vec<f64>,
    rank: usize,
}

impl SteadyStateSampler {
    pub fn new(cov: &SteadyStateCovariance) -> Result<Self> {
        let n = cov.n();
        let eig = SymmetricEigen::new(cov.matrix().clone());
        let top = eig.eigenvalues.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        let mut cols = Vec::new();
        for (k, &lam) in eig.eigenvalues.iter().enumerate() {
            if lam < -1e-9 * top {
                return Err(Error::Numerical(format!(
                    "covariance has negative eigenvalue {lam:e}"
                )));
            }
            if lam > 1e-12 * top {
                cols.push((k, lam.sqrt()));
            }
        }
        let rank = cols.len();
        let mut factor = vec![0.0; n * rank];
        for i in 0..n {
            for (r, &(k, root)) in cols.iter().enumerate() {
                factor[i * rank + r] = eig.eigenvectors[(i, k)] * root;
            }
        }
        Ok(SteadyStateSampler { n, factor, rank })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R, z: &mut Vec<f64>, out: &mut [f64]) {
        self.latent(rng, z);
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.component(i, z);
        }
    }

    fn latent<R: Rng + ?Sized>(&self, rng: &mut R, z: &mut Vec<f64>) {
        z.clear();
        z.extend((0..self.rank).map(|_| rng.sample::<f64, _>(StandardNormal)));
    }

    fn component(&self, i: usize, z: &[f64]) -> f64 {
        let row = &self.factor[i * self.rank..(i + 1) * self.rank];
        row.iter().zip(z).map(|(a, b)| a * b).sum()
    }
}

/// `count` independent draws from the analytical stationary law.
pub fn sample_steady_state(cov: &SteadyStateCovariance, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let sampler = SteadyStateSampler::new(cov)?;
    let n = cov.n();
    let chunks = count.div_ceil(CHUNK);
    let parts: Vec<Vec<Vec<f64>>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream_rng(seed, c as u64);
            let len = CHUNK.min(count - c * CHUNK);
            let mut z = Vec::new();
            (0..len)
                .map(|_| {
                    let mut y = vec![0.0; n];
                    sampler.draw(&mut rng, &mut z, &mut y);
                    y
                })
                .collect()
        })
        .collect();
    Ok(parts.into_iter().flatten().collect())
}

const CHUNK: usize = 1 << 14;

/// Settings for the rejection-band conditional oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RejectionSampling {
    /// Half-width of the acceptance window around each failure value.
    pub band: f64,
    /// Number of unconditioned draws.
    pub count: usize,
    pub seed: u64,
}

impl RejectionSampling {
    /// `0.05 · min σ_i` over the failed agents (0.05 · max σ with no failures).
    pub fn default_band(cov: &SteadyStateCovariance, scenario: &FailureScenario) -> f64 {
        let sd = if scenario.is_empty() {
            cov.max_std_dev()
        } else {
            scenario
                .indices()
                .iter()
                .map(|&i| cov.std_dev(i))
                .fold(f64::INFINITY, f64::min)
        };
        0.05 * sd
    }
}

/// Estimated probability with its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleEstimate {
    pub probability: f64,
    pub std_error: f64,
    pub accepted: usize,
    pub drawn: usize,
}

impl OracleEstimate {
    /// `|p̂ − p| / se`; zero standard error counts only on disagreement.
    pub fn z_score(&self, p: f64) -> f64 {
        let d = (self.probability - p).abs();
        if self.std_error > 0.0 {
            d / self.std_error
        } else if d > 0.0 {
            f64::INFINITY
        } else {
            0.0
        }
    }
}

/// Rejection-sampling estimate of `P{|ȳ_j| > δ + c}` given the failed
/// agents lie within `band` of their observed values, for several
/// `(agent, δ)` queries sharing the same draws.
pub fn conditional_exceedance_oracle(
    cov: &SteadyStateCovariance,
    scenario: &FailureScenario,
    c: f64,
    queries: &[(usize, f64)],
    rs: RejectionSampling,
) -> Result<Vec<OracleEstimate>> {
    scenario.validate(cov.n())?;
    if !(rs.band > 0.0) {
        return Err(Error::Parameter(format!("band must be positive, got {}", rs.band)));
    }
    for &(j, _) in queries {
        if j >= cov.n() {
            return Err(Error::Index { agent: j, reason: "is out of range" });
        }
    }
    let sampler = SteadyStateSampler::new(cov)?;
    let chunks = rs.count.div_ceil(CHUNK);
    let tallies: Vec<(usize, Vec<usize>)> = (0..chunks)
        .into_par_iter()
        .map(|ch| {
            let mut rng = stream_rng(rs.seed, ch as u64);
            let len = CHUNK.min(rs.count - ch * CHUNK);
            let mut z = Vec::new();
            let mut accepted = 0;
            let mut hits = vec![0usize; queries.len()];
            for _ in 0..len {
                sampler.latent(&mut rng, &mut z);
                let inside = scenario
                    .indices()
                    .iter()
                    .zip(scenario.values())
                    .all(|(&i, &v)| (sampler.component(i, &z) - v).abs() < rs.band);
                if !inside {
                    continue;
                }
                accepted += 1;
                for (h, &(j, delta)) in hits.iter_mut().zip(queries) {
                    if sampler.component(j, &z).abs() > delta + c {
                        *h += 1;
                    }
                }
            }
            (accepted, hits)
        })
        .collect();

    let accepted: usize = tallies.iter().map(|t| t.0).sum();
    if accepted < MIN_ACCEPTED {
        return Err(Error::InsufficientAcceptance {
            accepted,
            required: MIN_ACCEPTED,
            rate: accepted as f64 / rs.count.max(1) as f64,
        });
    }
    let a = accepted as f64;
    Ok((0..queries.len())
        .map(|q| {
            let hits: usize = tallies.iter().map(|t| t.1[q]).sum();
            let p = hits as f64 / a;
            OracleEstimate {
                probability: p,
                std_error: (p * (1.0 - p) / a).sqrt(),
                accepted,
                drawn: rs.count,
            }
        })
        .collect())
}

/// Single-agent form of [`conditional_exceedance_oracle`].
pub fn conditional_risk_oracle(
    cov: &SteadyStateCovariance,
    j: usize,
    scenario: &FailureScenario,
    p: &RiskParams,
    delta: f64,
    rs: RejectionSampling,
) -> Result<OracleEstimate> {
    p.validate()?;
    if scenario.contains(j) {
        return Err(Error::Index { agent: j, reason: "is already in the failure set" });
    }
    Ok(conditional_exceedance_oracle(cov, scenario, p.c, &[(j, delta)], rs)?[0])
}
