//! Cascading risk of every agent once agents 9-12 have failed, for the
//! path, 5-cycle and complete graphs.

use cascade_risk::*;

fn main() -> Result<()> {
    let failures = FailureScenario::uniform(vec![8, 9, 10, 11], 2.0)?;
    let params = RiskParams::new(0.1, 0.1)?;
    let kinds = [GraphKind::Path, GraphKind::PCycle { p: 5 }, GraphKind::Complete];

    let mut columns = Vec::new();
    for kind in &kinds {
        let g = build_graph(kind, 20)?;
        let s = spectral(&laplacian(&g))?;
        let cov = steady_state_covariance(&s, NoiseDelayConfig::new(4.0, 0.05))?;
        columns.push(risk_profile(&cov, &failures, &params)?);
    }

    print!("agent");
    for kind in &kinds {
        print!("{:>12}", kind.to_string());
    }
    println!();
    for j in 0..20 {
        print!("{:>5}", j + 1);
        for prof in &columns {
            match prof.values[j] {
                RiskValue::Infinite(t) => print!("{:>12}", format!("inf({t})")),
                v => print!("{:>12.5}", v.value()),
            }
        }
        println!();
    }
    Ok(())
}
