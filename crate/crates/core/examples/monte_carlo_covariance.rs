//! Simulates the delayed consensus dynamics and compares the empirical
//! covariance with the closed form, entry by entry, in standard errors.
//!
//! cargo run --release --example monte_carlo_covariance -- [trials] [seed]

use cascade_risk::*;

fn main() -> Result<()> {
    let mut args = std::env::args().skip(1);
    let trials = args.next().map_or(100, |a| a.parse().expect("trials"));
    let seed = args.next().map_or(1, |a| a.parse().expect("seed"));

    let g = build_graph(&GraphKind::PCycle { p: 2 }, 8)?;
    let s = spectral(&laplacian(&g))?;
    let tau = 0.5 * max_stable_delay(&s)?;
    let cfg = NoiseDelayConfig::new(1.0, tau);
    let exact = steady_state_covariance(&s, cfg)?;

    let sim = SimConfig::new(tau / 50.0, 300.0, 30.0, trials, seed);
    let st = simulate(&g, cfg, &sim)?;
    println!("{} samples in {} batches", st.samples, st.batches);
    println!("entry   closed form     empirical    z");
    for (i, j) in [(0, 0), (0, 1), (0, 2), (0, 4), (3, 3)] {
        let z = (st.cov_hat[(i, j)] - exact.get(i, j)) / st.cov_se[(i, j)];
        println!("({},{})  {:>11.6}  {:>12.6}  {z:>5.2}", i + 1, j + 1, exact.get(i, j), st.cov_hat[(i, j)]);
    }
    println!("max |z| over all entries: {:.2}", st.max_z_score(exact.matrix()));
    Ok(())
}
