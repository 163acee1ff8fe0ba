//! Builds a weighted graph from edge-list text and profiles its risk.

use cascade_risk::*;

const EDGES: &str = "\
# two triangles joined by a weak bridge
n 6
1 2 1.0
2 3 1.0
1 3 1.0
4 5 1.0
5 6 1.0
4 6 1.0
3 4 0.2
";

fn main() -> Result<()> {
    let g: WeightedGraph = EDGES.parse()?;
    let s = spectral(&laplacian(&g))?;
    let tau = 0.3 * max_stable_delay(&s)?;
    let cov = steady_state_covariance(&s, NoiseDelayConfig::new(1.0, tau))?;
    let sc = FailureScenario::uniform(vec![0], 1.5)?;
    let prof = risk_profile(&cov, &sc, &RiskParams::new(0.1, 0.05)?)?;
    println!("lambda_2 = {:.4}, delay = {tau:.4}", s.lambda_2());
    for (j, v) in prof.values.iter().enumerate() {
        println!("agent {} risk {:.4}", j + 1, v.value());
    }
    print!("{}", g.to_edge_list());
    Ok(())
}
