//! Risk as the number and placement of failures changes.

use cascade_risk::scenario::centred_block;
use cascade_risk::*;

fn covariance(kind: &GraphKind) -> Result<SteadyStateCovariance> {
    let g = build_graph(kind, 20)?;
    steady_state_covariance(&spectral(&laplacian(&g))?, NoiseDelayConfig::new(4.0, 0.05))
}

fn summary(cov: &SteadyStateCovariance, sc: &FailureScenario, p: &RiskParams) -> Result<String> {
    let prof = risk_profile(cov, sc, p)?;
    let live = (0..cov.n()).filter(|j| !sc.contains(*j));
    Ok(match prof.finite_range(live) {
        Some((lo, hi)) => format!("min {lo:.4}  max {hi:.4}"),
        None => "no finite risks".into(),
    })
}

fn main() -> Result<()> {
    let p = RiskParams::new(0.1, 0.1)?;
    for kind in [GraphKind::Path, GraphKind::Complete] {
        let cov = covariance(&kind)?;
        println!("{kind}: contiguous failures centred in the network");
        for count in [0, 1, 2, 4, 6, 8] {
            let sc = FailureScenario::uniform(centred_block(20, count), 2.0)?;
            println!("  {count:>2} failed   {}", summary(&cov, &sc, &p)?);
        }
        println!("{kind}: four failures, different placements");
        for labels in [[1, 2, 3, 4], [9, 10, 11, 12], [5, 9, 13, 17], [1, 7, 14, 20]] {
            let sc = FailureScenario::uniform(labels.iter().map(|l| l - 1).collect(), 2.0)?;
            println!("  {labels:?}   {}", summary(&cov, &sc, &p)?);
        }
    }
    Ok(())
}
