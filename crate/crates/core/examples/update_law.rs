//! Conditioning on failed agents, directly and one failure at a time.

use cascade_risk::*;

fn main() -> Result<()> {
    let g = build_graph(&GraphKind::Path, 20)?;
    let s = spectral(&laplacian(&g))?;
    let cov = steady_state_covariance(&s, NoiseDelayConfig::new(4.0, 0.05))?;

    let prior = FailureScenario::uniform(vec![8, 9, 10], 2.0)?;
    let (k, y_k) = (11, 2.0);
    let both = prior.with_failure(k, y_k)?;

    println!("agent   mu (update)    mu (direct)   var (update)   var (direct)");
    for j in [0, 4, 7, 12, 15, 19] {
        let a = incremental_update(&cov, j, &prior, k, y_k)?;
        let b = conditional_stats(&cov, j, &both)?;
        println!(
            "{:>5} {:>13.9} {:>14.9} {:>14.9} {:>14.9}",
            j + 1,
            a.mu_tilde,
            b.mu_tilde,
            a.sigma_tilde_sq,
            b.sigma_tilde_sq
        );
    }
    Ok(())
}
