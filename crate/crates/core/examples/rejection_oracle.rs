//! Checks the value-at-risk of a few agents by sampling the stationary law
//! and keeping only draws where the failed agents sit near their values.

use cascade_risk::simulate::{conditional_exceedance_oracle, RejectionSampling};
use cascade_risk::*;

fn main() -> Result<()> {
    let g = build_graph(&GraphKind::Path, 20)?;
    let cov = steady_state_covariance(&spectral(&laplacian(&g))?, NoiseDelayConfig::new(4.0, 0.05))?;
    let sc = FailureScenario::uniform(vec![8, 9, 10, 11], 2.0)?;
    let p = RiskParams::new(0.1, 0.1)?;
    let prof = risk_profile(&cov, &sc, &p)?;

    let agents = [0, 4, 7, 12, 19];
    let queries: Vec<(usize, f64)> = agents.iter().map(|&j| (j, prof.values[j].value())).collect();
    let band = 4.0 * RejectionSampling::default_band(&cov, &sc);
    let est = conditional_exceedance_oracle(&cov, &sc, p.c, &queries, RejectionSampling { band, count: 10_000_000, seed: 3 })?;

    println!("band {band:.4}, {} of {} draws accepted", est[0].accepted, est[0].drawn);
    println!("agent   delta*   P(|y| > delta* + c)   z vs epsilon");
    for (&(j, d), e) in queries.iter().zip(&est) {
        println!("{:>5} {:>8.4}   {:.4} +- {:.4}        {:>5.2}", j + 1, d, e.probability, e.std_error, e.z_score(p.epsilon));
    }
    Ok(())
}
