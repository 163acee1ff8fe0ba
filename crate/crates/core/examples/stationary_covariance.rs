//! Stationary spread of a noisy delayed path network, and how it grows as
//! the delay approaches the stability bound.

use cascade_risk::*;

fn main() -> Result<()> {
    let g = build_graph(&GraphKind::Path, 20)?;
    let s = spectral(&laplacian(&g))?;
    let bound = max_stable_delay(&s)?;

    let cov = steady_state_covariance(&s, NoiseDelayConfig::new(4.0, 0.05))?;
    println!("agent  std dev  corr with next");
    for i in 0..20 {
        let next = if i + 1 < 20 { format!("{:.4}", correlation(&cov, i, i + 1)?) } else { "-".into() };
        println!("{:>5}  {:>7.4}  {next:>14}", i + 1, cov.std_dev(i));
    }

    println!("\ndelay / bound   std dev of agent 1");
    for frac in [0.0, 0.25, 0.5, 0.75, 0.9, 0.99] {
        let cov = steady_state_covariance(&s, NoiseDelayConfig::new(4.0, frac * bound))?;
        println!("{frac:>13.2}   {:.4}", cov.std_dev(0));
    }
    Ok(())
}
