//! Scenario files, result records and the commands behind the
//! `cascade-risk` binary.
//!
//! A scenario is a TOML document:
//!
//! ```toml
//! [graph]
//! kind = "pcycle"      # path | pcycle | complete | custom
//! n = 20               # number of agents
//! p = 5                # pcycle only: neighbours on each side
//! # edges = "ring.txt" # custom only: edge-list file, relative to this file
//!
//! [noise]
//! b = 4.0              # diffusion coefficient (state / sqrt(time))
//! tau = 0.05           # delay (time)
//!
//! [risk]
//! c = 0.1              # consensus tolerance (state)
//! epsilon = 0.1        # confidence parameter in (0, 1)
//! # delta_max = 1e3    # root-search ceiling (state)
//!
//! [failures]
//! agents = [9, 10, 11, 12]  # 1-based labels
//! value = 2.0               # or `values = [...]`, one per agent (state)
//!
//! [sequence]           # `sequence` command
//! length = 5
//! value = 2.0          # value taken by each newly failed agent (state)
//!
//! [sweep]              # `sweep` command
//! counts = [0, 2, 4]   # contiguous failure blocks centred in 1..n
//! placements = [[1, 2, 3, 4], [5, 9, 13, 17]]
//!
//! [simulation]         # `validate` command
//! dt = 0.001
//! horizon = 500.0
//! burn_in = 50.0
//! trials = 200
//! seed = 1
//! oracle_draws = 10000000
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize, Serializer};

use crate::conditional::FailureScenario;
use crate::covariance::{steady_state_covariance, NoiseDelayConfig, SteadyStateCovariance};
use crate::error::{Error, Result};
use crate::graph::{
    build_graph, laplacian, max_stable_delay, spectral, GraphKind, SpectralData, WeightedGraph,
};
use crate::risk::{
    exceedance_probability, most_vulnerable_sequence, risk_profile, RiskParams, RiskValue,
};
use crate::simulate::{conditional_exceedance_oracle, simulate, RejectionSampling, SimConfig};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "CASCADE_RISK_OUT";

/// Standard-error multiple used by every Monte Carlo check.
pub const Z_LIMIT: f64 = 3.0;

/// Fraction of agents whose conditional-oracle check must pass.
pub const ORACLE_PASS_FRACTION: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub graph: GraphSection,
    pub noise: NoiseSection,
    pub risk: RiskSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failures: Option<FailureSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sequence: Option<SequenceSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSection {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub b: f64,
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RiskSection {
    pub c: f64,
    pub epsilon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FailureSection {
    #[serde(default)]
    pub agents: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceSection {
    pub length: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub counts: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub placements: Vec<Vec<usize>>,
    /// Failure value for every sweep point; defaults to `failures.value`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub dt: f64,
    pub horizon: f64,
    pub burn_in: f64,
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batches: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_history: Option<Vec<f64>>,
    /// Write one `trial_<k>.csv` trajectory per trial.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub trajectories: bool,
    /// Unconditioned draws for the rejection-band oracle.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_draws: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub band: Option<f64>,
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(vec![e.to_string()]))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario config always serializes")
    }

    pub fn load(path: &Path) -> Result<(Self, PathBuf)> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(vec![format!("cannot read {}: {e}", path.display())]))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((Self::from_toml_str(&text)?, base))
    }

    fn failure_value(&self) -> Option<f64> {
        self.failures.as_ref().and_then(|f| f.value)
    }

    /// Checks every precondition and builds the analytical model.
    /// All violations are reported together.
    pub fn prepare(&self, base_dir: &Path) -> Result<Prepared> {
        let mut errs = Vec::new();

        let graph = match self.build_graph(base_dir) {
            Ok(g) => Some(g),
            Err(Error::Config(mut e)) => {
                errs.append(&mut e);
                None
            }
            Err(e) => {
                errs.push(format!("graph: {e}"));
                None
            }
        };

        if !self.noise.b.is_finite() {
            errs.push(format!("noise.b must be finite, got {}", self.noise.b));
        }
        if !(self.noise.tau >= 0.0 && self.noise.tau.is_finite()) {
            errs.push(format!("noise.tau must be non-negative, got {}", self.noise.tau));
        }
        let params = RiskParams { c: self.risk.c, epsilon: self.risk.epsilon, delta_max: self.risk.delta_max };
        if let Err(e) = params.validate() {
            errs.push(format!("risk: {e}"));
        }

        let mut spectrum = None;
        if let Some(g) = &graph {
            match spectral(&laplacian(g)) {
                Ok(s) => {
                    let bound = max_stable_delay(&s)?;
                    if self.noise.tau >= bound {
                        errs.push(format!(
                            "noise.tau = {} must be below the stability bound pi/(2 lambda_n) = {bound}",
                            self.noise.tau
                        ));
                    }
                    spectrum = Some(s);
                }
                Err(e) => errs.push(format!("graph: {e}")),
            }
        }
        let n = graph.as_ref().map(WeightedGraph::n);

        let scenario = match self.failure_scenario(n.or(self.graph.n)) {
            Ok(s) => Some(s),
            Err(Error::Config(mut e)) => {
                errs.append(&mut e);
                None
            }
            Err(e) => {
                errs.push(format!("failures: {e}"));
                None
            }
        };
        if let Some(s) = &scenario {
            if params.c > 0.0 {
                if let Err(e) = s.check_outside_band(params.c) {
                    errs.push(format!("failures: {e}"));
                }
            }
        }
        if let (Some(seq), Some(n)) = (&self.sequence, n) {
            let m = scenario.as_ref().map_or(0, FailureScenario::len);
            if seq.length == 0 || seq.length > n.saturating_sub(m) {
                errs.push(format!(
                    "sequence.length must be in 1..={}, got {}",
                    n.saturating_sub(m),
                    seq.length
                ));
            }
            if !(seq.value.abs() > params.c) {
                errs.push(format!(
                    "sequence.value = {} must satisfy |value| > c = {}",
                    seq.value, params.c
                ));
            }
        }
        if let Some(sw) = &self.sweep {
            if sw.counts.is_empty() && sw.placements.is_empty() {
                errs.push("sweep needs `counts` or `placements`".into());
            }
            match sw.value.or(self.failure_value()) {
                None if sw.counts.iter().any(|&c| c > 0) || !sw.placements.is_empty() => {
                    errs.push("sweep needs `value` (or failures.value)".into())
                }
                Some(v) if !(v.abs() > params.c) => {
                    errs.push(format!("sweep value {v} must satisfy |value| > c = {}", params.c))
                }
                _ => {}
            }
        }
        if let (Some(sim), Some(n), Some(s)) = (&self.simulation, n, &spectrum) {
            for v in self.sim_config(sim, None, None).violations(n, s.lambda_max(), self.noise.tau) {
                errs.push(format!("simulation: {v}"));
            }
            if let Some(b) = sim.band {
                if !(b > 0.0) {
                    errs.push(format!("simulation.band must be positive, got {b}"));
                }
            }
        }

        if !errs.is_empty() {
            return Err(Error::Config(errs));
        }
        let graph = graph.expect("checked above");
        let spectrum = spectrum.expect("checked above");
        let noise = NoiseDelayConfig::new(self.noise.b, self.noise.tau);
        let cov = steady_state_covariance(&spectrum, noise)?;
        Ok(Prepared {
            config: self.clone(),
            graph,
            spectral: spectrum,
            noise,
            cov,
            params,
            scenario: scenario.unwrap_or_default(),
        })
    }

    fn build_graph(&self, base_dir: &Path) -> Result<WeightedGraph> {
        let g = &self.graph;
        let need_n = || {
            g.n.ok_or_else(|| Error::Config(vec![format!("graph.n is required for kind {:?}", g.kind)]))
        };
        match g.kind.as_str() {
            "path" => build_graph(&GraphKind::Path, need_n()?),
            "complete" => build_graph(&GraphKind::Complete, need_n()?),
            "pcycle" => {
                let p = g.p.ok_or_else(|| Error::Config(vec!["graph.p is required for kind \"pcycle\"".into()]))?;
                build_graph(&GraphKind::PCycle { p }, need_n()?)
            }
            "custom" => {
                let rel = g.edges.as_ref().ok_or_else(|| {
                    Error::Config(vec!["graph.edges is required for kind \"custom\"".into()])
                })?;
                let path = base_dir.join(rel);
                let text = fs::read_to_string(&path).map_err(|e| {
                    Error::Config(vec![format!("cannot read edge list {}: {e}", path.display())])
                })?;
                let graph = WeightedGraph::from_edge_list(&text)?;
                if let Some(n) = g.n {
                    if n != graph.n() {
                        return Err(Error::Config(vec![format!(
                            "graph.n = {n} but the edge list declares {}",
                            graph.n()
                        )]));
                    }
                }
                Ok(graph)
            }
            other => Err(Error::Config(vec![format!(
                "graph.kind must be path, pcycle, complete or custom, got {other:?}"
            )])),
        }
    }

    fn failure_scenario(&self, n: Option<usize>) -> Result<FailureScenario> {
        let Some(f) = &self.failures else {
            return Ok(FailureScenario::empty());
        };
        let mut errs = Vec::new();
        let mut idx = Vec::with_capacity(f.agents.len());
        for &a in &f.agents {
            match n {
                Some(n) if a == 0 || a > n => errs.push(format!("failures.agents: label {a} is outside 1..={n}")),
                _ if a == 0 => errs.push("failures.agents: labels are 1-based".into()),
                _ => idx.push(a - 1),
            }
        }
        let values = match (&f.value, &f.values) {
            (Some(_), Some(_)) => {
                errs.push("failures: give either `value` or `values`, not both".into());
                None
            }
            (Some(v), None) => Some(vec![*v; f.agents.len()]),
            (None, Some(vs)) => {
                if vs.len() != f.agents.len() {
                    errs.push(format!(
                        "failures: {} agents but {} values",
                        f.agents.len(),
                        vs.len()
                    ));
                }
                Some(vs.clone())
            }
            (None, None) if f.agents.is_empty() => Some(Vec::new()),
            (None, None) => {
                errs.push("failures: `value` or `values` is required".into());
                None
            }
        };
        if !errs.is_empty() {
            return Err(Error::Config(errs));
        }
        let sc = FailureScenario::new(idx, values.unwrap_or_default())?;
        if let Some(n) = n {
            sc.validate(n)?;
        }
        Ok(sc)
    }

    fn sim_config(&self, s: &SimulationSection, seed: Option<u64>, out: Option<&Path>) -> SimConfig {
        let mut cfg = SimConfig::new(s.dt, s.horizon, s.burn_in, s.trials, seed.unwrap_or(s.seed));
        if let Some(b) = s.batches {
            cfg.batches = b;
        }
        if let Some(h) = &s.initial_history {
            cfg.initial_history = h.clone();
        }
        if s.trajectories {
            cfg.trajectory_dir = out.map(|o| o.join("trajectories"));
        }
        cfg
    }
}

/// A validated scenario together with its analytical model.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub config: ScenarioConfig,
    pub graph: WeightedGraph,
    pub spectral: SpectralData,
    pub noise: NoiseDelayConfig,
    pub cov: SteadyStateCovariance,
    pub params: RiskParams,
    pub scenario: FailureScenario,
}

/// Risk as serialized: a number, or `{"inf": true, "trigger": ...}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskField(pub RiskValue);

impl Serialize for RiskField {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        match self.0 {
            RiskValue::Infinite(t) => {
                let mut m = s.serialize_map(Some(2))?;
                m.serialize_entry("inf", &true)?;
                m.serialize_entry("trigger", &t.to_string())?;
                m.end()
            }
            v => s.serialize_f64(v.value()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgentResult {
    pub agent: usize,
    pub failed: bool,
    pub risk: RiskField,
    pub mu_tilde: Option<f64>,
    pub sigma_tilde: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SequenceStep {
    pub step: usize,
    pub agent: usize,
    pub risk: RiskField,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub check: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Taken from `SOURCE_DATE_EPOCH` when set, so reruns stay byte-identical.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<u64>,
}

impl Provenance {
    fn new(seed: Option<u64>) -> Self {
        Provenance {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            seed,
            timestamp: std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|v| v.parse().ok()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRecord {
    pub command: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep_point: Option<usize>,
    pub graph: String,
    pub n: usize,
    pub b: f64,
    pub tau: f64,
    pub c: f64,
    pub epsilon: f64,
    /// 1-based failed agents and their values.
    pub failed_agents: Vec<usize>,
    pub failure_values: Vec<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub agents: Vec<AgentResult>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub sequence: Vec<SequenceStep>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub checks: Vec<CheckResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub passed: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub provenance: Provenance,
}

impl ResultRecord {
    fn base(command: &str, p: &Prepared, scenario: &FailureScenario, seed: Option<u64>) -> Self {
        let graph = match p.config.graph.kind.as_str() {
            "pcycle" => format!("{}-cycle", p.config.graph.p.unwrap_or(0)),
            k => k.to_string(),
        };
        ResultRecord {
            command: command.to_string(),
            sweep_point: None,
            graph,
            n: p.graph.n(),
            b: p.noise.b,
            tau: p.noise.tau,
            c: p.params.c,
            epsilon: p.params.epsilon,
            failed_agents: scenario.indices().iter().map(|i| i + 1).collect(),
            failure_values: scenario.values().to_vec(),
            agents: Vec::new(),
            sequence: Vec::new(),
            checks: Vec::new(),
            passed: None,
            error: None,
            provenance: Provenance::new(seed),
        }
    }

    /// Risk values indexed by 0-based agent.
    pub fn risks(&self) -> Vec<RiskValue> {
        self.agents.iter().map(|a| a.risk.0).collect()
    }
}

fn profile_rows(p: &Prepared, scenario: &FailureScenario) -> Result<Vec<AgentResult>> {
    let prof = risk_profile(&p.cov, scenario, &p.params)?;
    Ok((0..p.graph.n())
        .map(|j| AgentResult {
            agent: j + 1,
            failed: scenario.contains(j),
            risk: RiskField(prof.values[j]),
            mu_tilde: prof.stats[j].map(|s| s.mu_tilde),
            sigma_tilde: prof.stats[j].map(|s| s.sigma_tilde()),
        })
        .collect())
}

/// Risk profile of the configured failure scenario.
pub fn run_profile(p: &Prepared) -> Result<ResultRecord> {
    let mut rec = ResultRecord::base("profile", p, &p.scenario, None);
    rec.agents = profile_rows(p, &p.scenario)?;
    Ok(rec)
}

/// Contiguous block of `count` agents centred in `0..n`.
pub fn centred_block(n: usize, count: usize) -> Vec<usize> {
    let start = n.saturating_sub(count) / 2;
    (start..(start + count).min(n)).collect()
}

/// One record per sweep point; failures at a point are recorded on that
/// record and do not stop the sweep.
pub fn run_sweep(p: &Prepared) -> Result<Vec<ResultRecord>> {
    let sweep = p
        .config
        .sweep
        .as_ref()
        .ok_or_else(|| Error::Config(vec!["the sweep command needs a [sweep] section".into()]))?;
    let value = sweep.value.or(p.config.failure_value()).unwrap_or(0.0);
    let n = p.graph.n();
    let mut points: Vec<Vec<usize>> = sweep.counts.iter().map(|&c| centred_block(n, c)).collect();
    points.extend(
        sweep
            .placements
            .iter()
            .map(|pl| pl.iter().map(|&a| a.wrapping_sub(1)).collect()),
    );

    let mut out = Vec::with_capacity(points.len());
    for (k, idx) in points.into_iter().enumerate() {
        let scenario = FailureScenario::uniform(idx.clone(), value);
        let mut rec = match &scenario {
            Ok(s) => ResultRecord::base("sweep", p, s, None),
            Err(_) => ResultRecord::base("sweep", p, &FailureScenario::empty(), None),
        };
        rec.sweep_point = Some(k);
        match scenario.and_then(|s| profile_rows(p, &s)) {
            Ok(rows) => rec.agents = rows,
            Err(e) => {
                rec.failed_agents = idx.iter().map(|i| i.wrapping_add(1)).collect();
                rec.error = Some(e.to_string());
            }
        }
        out.push(rec);
    }
    Ok(out)
}

/// Most vulnerable sequence starting from the configured failures.
pub fn run_sequence(p: &Prepared) -> Result<ResultRecord> {
    let seq = p
        .config
        .sequence
        .as_ref()
        .ok_or_else(|| Error::Config(vec!["the sequence command needs a [sequence] section".into()]))?;
    let vs = most_vulnerable_sequence(&p.cov, &p.params, seq.value, seq.length, &p.scenario)?;
    let mut rec = ResultRecord::base("sequence", p, &p.scenario, None);
    rec.sequence = vs
        .order
        .iter()
        .zip(&vs.risks)
        .enumerate()
        .map(|(k, (&a, &r))| SequenceStep { step: k + 1, agent: a + 1, risk: RiskField(r) })
        .collect();
    Ok(rec)
}

/// Checks the analytical covariance and conditional risks against the
/// Monte Carlo oracles. `passed` is false when any check fails.
pub fn run_validate(p: &Prepared, seed: Option<u64>, out_dir: Option<&Path>) -> Result<ResultRecord> {
    let simsec = p
        .config
        .simulation
        .as_ref()
        .ok_or_else(|| Error::Config(vec!["the validate command needs a [simulation] section".into()]))?;
    let sim = p.config.sim_config(simsec, seed, out_dir);
    let mut rec = ResultRecord::base("validate", p, &p.scenario, Some(sim.seed));
    let n = p.graph.n();

    let emp = simulate(&p.graph, p.noise, &sim)?;
    let sigma = p.cov.matrix();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let se = emp.cov_se[(i, j)];
            let diff = (emp.cov_hat[(i, j)] - sigma[(i, j)]).abs();
            let z = if se > 0.0 { diff / se } else if diff > 1e-12 { f64::INFINITY } else { 0.0 };
            worst = worst.max(z);
            rec.checks.push(CheckResult {
                check: format!("cov[{},{}]", i + 1, j + 1),
                value: z,
                threshold: Z_LIMIT,
                passed: z <= Z_LIMIT,
            });
        }
    }
    rec.checks.push(CheckResult {
        check: "cov_max_z".into(),
        value: worst,
        threshold: Z_LIMIT,
        passed: worst <= Z_LIMIT,
    });

    if p.noise.b != 0.0 {
        let prof = risk_profile(&p.cov, &p.scenario, &p.params)?;
        let live: Vec<usize> = (0..n)
            .filter(|&j| !p.scenario.contains(j) && !prof.values[j].is_infinite())
            .collect();
        let queries: Vec<(usize, f64)> = live.iter().map(|&j| (j, prof.values[j].value())).collect();
        let rs = RejectionSampling {
            band: simsec.band.unwrap_or_else(|| RejectionSampling::default_band(&p.cov, &p.scenario)),
            count: simsec.oracle_draws.unwrap_or(1_000_000),
            seed: sim.seed ^ 0x9e37_79b9_7f4a_7c15,
        };
        let est = conditional_exceedance_oracle(&p.cov, &p.scenario, p.params.c, &queries, rs)?;
        let mut ok = 0;
        for (&j, e) in live.iter().zip(&est) {
            let (z, passed) = match prof.values[j] {
                RiskValue::Positive(_) => {
                    let z = e.z_score(p.params.epsilon);
                    (z, z <= Z_LIMIT)
                }
                // zero risk: the alarm probability at δ = 0 must not exceed ε
                _ => {
                    let cs = prof.stats[j].expect("live agent has stats");
                    let analytic = exceedance_probability(cs, p.params.c, 0.0);
                    let z = e.z_score(analytic);
                    (z, z <= Z_LIMIT || e.probability <= p.params.epsilon)
                }
            };
            ok += passed as usize;
            rec.checks.push(CheckResult {
                check: format!("oracle[{}]", j + 1),
                value: z,
                threshold: Z_LIMIT,
                passed,
            });
        }
        let needed = (ORACLE_PASS_FRACTION * live.len() as f64).ceil();
        rec.checks.push(CheckResult {
            check: "oracle_agents_passing".into(),
            value: ok as f64,
            threshold: needed,
            passed: ok as f64 >= needed,
        });
    }
    let summary = ["cov_max_z", "oracle_agents_passing"];
    rec.passed = Some(
        rec.checks
            .iter()
            .filter(|c| summary.contains(&c.check.as_str()))
            .all(|c| c.passed),
    );
    Ok(rec)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

/// Full-precision float: 17 significant digits.
fn num(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.16e}")
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn risk_cell(r: RiskValue) -> (String, bool) {
    match r {
        RiskValue::Infinite(_) => ("inf".into(), true),
        v => (num(v.value()), false),
    }
}

fn profile_csv(records: &[ResultRecord], with_point: bool) -> String {
    let mut s = String::new();
    if with_point {
        s.push_str("sweep_point,");
    }
    s.push_str("agent,failed,risk,risk_is_inf,mu_tilde,sigma_tilde\n");
    for rec in records {
        for a in &rec.agents {
            let (risk, inf) = risk_cell(a.risk.0);
            if with_point {
                let _ = write!(s, "{},", rec.sweep_point.unwrap_or(0));
            }
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                a.agent,
                a.failed,
                risk,
                inf,
                opt(a.mu_tilde),
                opt(a.sigma_tilde)
            );
        }
    }
    s
}

/// Renders records in the requested format.
pub fn render(records: &[ResultRecord], format: OutputFormat) -> String {
    match format {
        OutputFormat::Json => {
            let body = if records.len() == 1 && records[0].sweep_point.is_none() {
                serde_json::to_string_pretty(&records[0])
            } else {
                serde_json::to_string_pretty(records)
            };
            body.expect("records serialize") + "\n"
        }
        OutputFormat::Csv => {
            let Some(first) = records.first() else {
                return String::new();
            };
            match first.command.as_str() {
                "sweep" => profile_csv(records, true),
                "sequence" => {
                    let mut s = String::from("step,agent,risk\n");
                    for st in &first.sequence {
                        let _ = writeln!(s, "{},{},{}", st.step, st.agent, risk_cell(st.risk.0).0);
                    }
                    s
                }
                "validate" => {
                    let mut s = String::from("check,value,threshold,passed\n");
                    for c in &first.checks {
                        let _ = writeln!(s, "{},{},{},{}", c.check, num(c.value), num(c.threshold), c.passed);
                    }
                    s
                }
                _ => profile_csv(records, false),
            }
        }
    }
}

/// Writes `<command>.<csv|json>` into `dir` and returns its path.
pub fn write_records(records: &[ResultRecord], dir: &Path, format: OutputFormat) -> Result<PathBuf> {
    let command = records.first().map(|r| r.command.as_str()).unwrap_or("empty");
    fs::create_dir_all(dir)?;
    let ext = match format {
        OutputFormat::Csv => "csv",
        OutputFormat::Json => "json",
    };
    let path = dir.join(format!("{command}.{ext}"));
    fs::write(&path, render(records, format))?;
    Ok(path)
}

impl Error {
    /// Process exit code: 2 for configuration problems, 3 for numerical
    /// or ill-posed ones.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::Parse { .. }
            | Error::Parameter(_)
            | Error::Index { .. }
            | Error::Connectivity { .. }
            | Error::InvalidEdge { .. }
            | Error::Stability { .. }
            | Error::Io(_) => 2,
            Error::Numerical(_)
            | Error::DegenerateGraph
            | Error::ZeroVariance(_)
            | Error::SingularConditioning { .. }
            | Error::DegenerateUpdate(_)
            | Error::Divergence { .. }
            | Error::InsufficientAcceptance { .. } => 3,
        }
    }

    /// Messages for the machine-readable error list.
    pub fn messages(&self) -> Vec<String> {
        match self {
            Error::Config(list) => list.clone(),
            Error::InsufficientAcceptance { .. } => vec![format!(
                "{self}; raise simulation.oracle_draws or widen simulation.band"
            )],
            e => vec![e.to_string()],
        }
    }
}
