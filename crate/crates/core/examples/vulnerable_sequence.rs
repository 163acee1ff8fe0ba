//! Order in which agents are most likely to fail next, one at a time.

use cascade_risk::*;

fn main() -> Result<()> {
    let p = RiskParams::new(0.1, 0.1)?;
    for kind in [GraphKind::Path, GraphKind::PCycle { p: 2 }, GraphKind::Complete] {
        let g = build_graph(&kind, 20)?;
        let cov = steady_state_covariance(&spectral(&laplacian(&g))?, NoiseDelayConfig::new(4.0, 0.05))?;
        let seq = most_vulnerable_sequence(&cov, &p, 2.0, 8, &FailureScenario::empty())?;
        let steps: Vec<String> = seq
            .order
            .iter()
            .zip(&seq.risks)
            .map(|(a, r)| format!("{}({:.3})", a + 1, r.value()))
            .collect();
        println!("{kind:>8}: {}", steps.join(" -> "));
    }
    Ok(())
}
