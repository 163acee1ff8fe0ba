//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.

mod common;

use std::time::Instant;

use cascade_risk::simulate::{conditional_exceedance_oracle, RejectionSampling};
use cascade_risk::*;
use common::*;
use rand::Rng;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

/// Monte Carlo covariance against the closed form on three topologies.
fn covariance_oracle() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for kind in [GraphKind::Path, GraphKind::PCycle { p: 2 }, GraphKind::Complete] {
        let g = build_graph(&kind, 8).unwrap();
        let s = spectral(&laplacian(&g)).unwrap();
        let tau = 0.5 * max_stable_delay(&s).unwrap();
        let cfg = NoiseDelayConfig::new(1.0, tau);
        let exact = steady_state_covariance(&s, cfg).unwrap();
        let mut sim = SimConfig::new(tau / 50.0, 500.0, 50.0, 200, 106);
        sim.batches = 100;
        let t = Instant::now();
        let st = simulate(&g, cfg, &sim).unwrap();
        let z = st.max_z_score(exact.matrix());
        worst = worst.max(z);
        parts.push(format!("{kind} max z {z:.2} ({:.0?})", t.elapsed()));
    }
    outcome(worst <= 3.0, parts.join(", "))
}

/// One-failure update against direct conditioning on random instances.
fn update_law() -> Outcome {
    let mut r = rng(2024);
    let (mut instances, mut compared, mut worst) = (0, 0, 0.0f64);
    while instances < 200 {
        let n = r.random_range(4..=12);
        let (_, cov) = random_cov(&mut r, n);
        let m = r.random_range(0..=n - 3);
        let sc = random_failures(&mut r, n, m, 0.1);
        let k = (0..n).filter(|k| !sc.contains(*k)).nth(r.random_range(0..n - m)).unwrap();
        let yk = if r.random_bool(0.5) { 1.5 } else { -2.5 };
        let bigger = sc.with_failure(k, yk).unwrap();
        let Ok(direct) = ConditionedScenario::new(&cov, &bigger) else { continue };
        instances += 1;
        for j in (0..n).filter(|j| !bigger.contains(*j)) {
            let a = incremental_update(&cov, j, &sc, k, yk).unwrap();
            let b = direct.stats(j).unwrap();
            // relative, with values below 1e-6 compared absolutely at that scale
            let rel = |x: f64, y: f64| (x - y).abs() / x.abs().max(y.abs()).max(1e-6);
            let e = rel(a.mu_tilde, b.mu_tilde).max(rel(a.sigma_tilde_sq, b.sigma_tilde_sq));
            worst = worst.max(e);
            compared += 1;
        }
    }
    outcome(worst <= 1e-10, format!("{instances} instances, {compared} agents, worst relative error {worst:.2e}"))
}

/// Root sits at ε and a 1e-6 grid brackets it.
fn root_correctness() -> Outcome {
    let mut r = rng(77);
    let (mut roots, mut worst, mut bracket_fail) = (0, 0.0f64, 0);
    for _ in 0..100 {
        let n = r.random_range(3..=12);
        let (_, cov) = random_cov(&mut r, n);
        let m = r.random_range(0..=n - 2);
        let sc = random_failures(&mut r, n, m, 0.1);
        let p = RiskParams::new(r.random_range(0.01..0.5), r.random_range(0.01..0.5)).unwrap();
        let Ok(prof) = risk_profile(&cov, &sc, &p) else { continue };
        for (v, s) in prof.values.iter().zip(&prof.stats) {
            let (RiskValue::Positive(d), Some(s)) = (v, s) else { continue };
            if s.sigma_tilde() == 0.0 {
                continue;
            }
            roots += 1;
            let prob = |x: f64| exceedance_probability(*s, p.c, x);
            worst = worst.max((prob(*d) - p.epsilon).abs());
            // coarse scan to the first cell whose right end is at or below ε, then 1e-6 steps
            let coarse = 1e-3;
            let mut k = 0u64;
            while prob((k + 1) as f64 * coarse) > p.epsilon {
                k += 1;
            }
            let lo = k as f64 * coarse;
            let mut x = lo;
            let step = 1e-6;
            while prob(x + step) > p.epsilon {
                x += step;
            }
            if !(x <= *d + 1e-12 && *d <= x + step + 1e-12) {
                bracket_fail += 1;
            }
        }
    }
    outcome(
        worst <= 1e-9 && bracket_fail == 0 && roots > 0,
        format!("{roots} positive risks, max |P(delta*) - eps| {worst:.2e}, {bracket_fail} grid mismatches"),
    )
}

fn erf_inv_newton(x: f64) -> f64 {
    let mut y = 0.0f64;
    for _ in 0..100 {
        let step = (libm::erf(y) - x) / (2.0 / std::f64::consts::PI.sqrt() * (-y * y).exp());
        y -= step;
        if step.abs() < 1e-16 * y.abs().max(1.0) {
            break;
        }
    }
    y
}

/// Independent failures leave the single-agent value-at-risk.
fn single_agent_reduction() -> Outcome {
    let mut worst = 0.0f64;
    let mut zero_hits = 0;
    for (sigma, eps) in [(1.0, 0.1), (3.7, 0.05), (0.05, 0.2), (0.01, 0.1), (12.0, 0.01), (0.5, 0.5)] {
        // agents 0 and 1 form one block, agents 2 and 3 another
        let m = nalgebra::DMatrix::from_row_slice(
            4,
            4,
            &[sigma * sigma, -0.3 * sigma, 0.0, 0.0, -0.3 * sigma, 1.0, 0.0, 0.0, 0.0, 0.0, 2.0, -0.5, 0.0, 0.0, -0.5, 1.5],
        );
        let cov = SteadyStateCovariance::from_matrix(m).unwrap();
        let sc = FailureScenario::new(vec![2, 3], vec![2.0, -1.0]).unwrap();
        let p = RiskParams::new(0.1, eps).unwrap();
        let got = risk_profile(&cov, &sc, &p).unwrap().values[0];
        let formula = std::f64::consts::SQRT_2 * sigma * erf_inv_newton(1.0 - eps) - p.c;
        let expect = formula.max(0.0);
        if formula <= 0.0 {
            zero_hits += 1;
            worst = worst.max(if got == RiskValue::Zero { 0.0 } else { 1.0 });
        } else {
            worst = worst.max((got.value() - expect).abs());
        }
    }
    outcome(worst <= 1e-10, format!("6 cases ({zero_hits} in the zero branch), worst abs error {worst:.2e}"))
}

fn live_values(values: &[RiskValue], sc: &FailureScenario) -> Vec<f64> {
    values.iter().enumerate().filter(|(j, _)| !sc.contains(*j)).map(|(_, v)| v.value()).collect()
}

fn spread(v: &[f64]) -> f64 {
    v.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - v.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Complete graph: one common risk value for any placement of four failures.
fn complete_symmetry() -> Outcome {
    let cov = case_cov(GraphKind::Complete);
    let p = case_params();
    let base = live_values(&risk_profile(&cov, &case_failures(), &p).unwrap().values, &case_failures());
    let reference = base[0];
    let mut worst = spread(&base);
    let mut placements = vec![vec![0, 1, 2, 3], vec![4, 8, 12, 16]];
    let mut r = rng(5);
    for _ in 0..20 {
        let sc = random_failures(&mut r, 20, 4, 0.1);
        placements.push(sc.indices().to_vec());
    }
    for pl in &placements {
        let sc = FailureScenario::uniform(pl.clone(), 2.0).unwrap();
        for v in live_values(&risk_profile(&cov, &sc, &p).unwrap().values, &sc) {
            worst = worst.max((v - reference).abs());
        }
    }
    outcome(
        worst <= 1e-9 && base.len() == 16,
        format!("common risk {reference:.12}, max deviation {worst:.2e} over {} placements", placements.len() + 1),
    )
}

/// Path graph: the end agents carry the largest risk.
fn path_end_risk() -> Outcome {
    let cov = case_cov(GraphKind::Path);
    let prof = risk_profile(&cov, &case_failures(), &case_params()).unwrap();
    let v: Vec<f64> = prof.values.iter().map(|x| x.value()).collect();
    let top = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let at_top: Vec<usize> = (0..20).filter(|&j| v[j] >= top - 1e-9 * top).map(|j| j + 1).collect();
    outcome(at_top == vec![1, 20], format!("maximum {top:.6} at agents {at_top:?}"))
}

/// Circulant profiles flatten as the neighbourhood widens.
fn pcycle_convergence() -> Outcome {
    let p = case_params();
    let sc = case_failures();
    let mut spreads = Vec::new();
    for q in [1, 2, 5, 7, 9] {
        let cov = case_cov(GraphKind::PCycle { p: q });
        spreads.push(spread(&live_values(&risk_profile(&cov, &sc, &p).unwrap().values, &sc)));
    }
    let complete = spread(&live_values(&risk_profile(&case_cov(GraphKind::Complete), &sc, &p).unwrap().values, &sc));
    let monotone = spreads.windows(2).all(|w| w[1] <= w[0] + 1e-12);
    let text: Vec<String> = spreads.iter().map(|s| format!("{s:.4}")).collect();
    outcome(
        monotone && spreads[4] < spreads[0],
        format!("spread over p = 1, 2, 5, 7, 9: [{}], complete {complete:.1e}", text.join(", ")),
    )
}

/// Rejection-band estimate of the alarm probability at δ* against ε.
fn conditional_oracle() -> Outcome {
    let cov = case_cov(GraphKind::Path);
    let sc = case_failures();
    let p = case_params();
    let prof = risk_profile(&cov, &sc, &p).unwrap();
    let live: Vec<usize> = (0..20).filter(|j| !sc.contains(*j)).collect();
    let queries: Vec<(usize, f64)> = live.iter().map(|&j| (j, prof.values[j].value())).collect();
    let min_sd = sc.indices().iter().map(|&i| cov.std_dev(i)).fold(f64::INFINITY, f64::min);
    let band = 0.2 * min_sd;
    let draws = 60_000_000;
    let wide = conditional_exceedance_oracle(&cov, &sc, p.c, &queries, RejectionSampling { band, count: draws, seed: 31 }).unwrap();
    let narrow =
        conditional_exceedance_oracle(&cov, &sc, p.c, &queries, RejectionSampling { band: band / 2.0, count: draws, seed: 32 })
            .unwrap();
    let within = wide.iter().filter(|e| e.z_score(p.epsilon) <= 3.0).count();
    let stable = wide.iter().zip(&narrow).filter(|(w, n)| (w.probability - n.probability).abs() < 3.0 * n.std_error).count();
    let needed = (0.9 * live.len() as f64).ceil() as usize;
    let narrow_within = narrow.iter().filter(|e| e.z_score(p.epsilon) <= 3.0).count();
    outcome(
        within >= needed && narrow_within >= needed && stable >= needed,
        format!(
            "{within}/{} within 3 SE at band {band:.3} ({} accepted), {narrow_within}/{} at half band ({} accepted), {stable}/{} stable under halving; need {needed}",
            live.len(),
            wide[0].accepted,
            live.len(),
            narrow[0].accepted,
            live.len()
        ),
    )
}

/// Risk falls with ε; conditional variance falls along nested failure sets.
fn monotonicity() -> Outcome {
    let mut r = rng(404);
    let (mut eps_bad, mut var_bad, mut instances) = (0, 0, 0);
    while instances < 50 {
        let n = r.random_range(4..=12);
        let (_, cov) = random_cov(&mut r, n);
        let m = r.random_range(0..=n - 3);
        let sc = random_failures(&mut r, n, m, 0.1);
        let mut prev: Option<Vec<RiskValue>> = None;
        let mut ok = true;
        for eps in [0.01, 0.05, 0.1, 0.2, 0.5] {
            let Ok(prof) = risk_profile(&cov, &sc, &RiskParams::new(0.1, eps).unwrap()) else {
                ok = false;
                break;
            };
            if let Some(prev) = &prev {
                for (now, before) in prof.values.iter().zip(prev) {
                    let worse = match (now.is_infinite(), before.is_infinite()) {
                        (true, false) => true,
                        (false, false) => now.value() > before.value() + 1e-9,
                        _ => false,
                    };
                    eps_bad += worse as usize;
                }
            }
            prev = Some(prof.values);
        }
        if !ok {
            continue;
        }
        instances += 1;

        let full = random_failures(&mut r, n, n - 2, 0.1);
        let mut last: Option<Vec<f64>> = None;
        for k in 0..=full.len() {
            let nested = FailureScenario::new(full.indices()[..k].to_vec(), full.values()[..k].to_vec()).unwrap();
            let Ok(cond) = ConditionedScenario::new(&cov, &nested) else { break };
            let vars: Vec<f64> =
                (0..n).map(|j| if full.contains(j) { f64::NAN } else { cond.stats(j).unwrap().sigma_tilde_sq }).collect();
            if let Some(last) = &last {
                var_bad += vars.iter().zip(last).filter(|(a, b)| a.is_finite() && **a > **b + 1e-12).count();
            }
            last = Some(vars);
        }
    }
    outcome(
        eps_bad == 0 && var_bad == 0,
        format!("{instances} instances: {eps_bad} epsilon violations, {var_bad} nested-variance violations"),
    )
}

fn main() {
    type Check = (&'static str, fn() -> Outcome);
    let criteria: [Check; 9] = [
        ("covariance oracle agreement", covariance_oracle),
        ("update-law equivalence", update_law),
        ("root correctness", root_correctness),
        ("single-agent reduction", single_agent_reduction),
        ("complete-graph symmetry", complete_symmetry),
        ("path-graph end risk", path_end_risk),
        ("p-cycle convergence", pcycle_convergence),
        ("conditional-oracle check", conditional_oracle),
        ("monotonicity suite", monotonicity),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let id = (k + 1).to_string();
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let t = Instant::now();
        let o = check();
        let tag = if o.passed { "PASS" } else { "FAIL" };
        println!("{tag} criterion {id} ({name}): {} [{:.1?}]", o.detail, t.elapsed());
        failed += (!o.passed) as usize;
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
