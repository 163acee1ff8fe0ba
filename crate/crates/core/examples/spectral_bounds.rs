//! Laplacian spectra and the admissible delay for the standard topologies.

use cascade_risk::*;

fn main() -> Result<()> {
    let n = 20;
    println!("{:>10} {:>10} {:>10} {:>12}", "graph", "lambda_2", "lambda_n", "max delay");
    for kind in [
        GraphKind::Path,
        GraphKind::PCycle { p: 1 },
        GraphKind::PCycle { p: 5 },
        GraphKind::PCycle { p: 9 },
        GraphKind::Complete,
    ] {
        let g = build_graph(&kind, n)?;
        let s = spectral(&laplacian(&g))?;
        println!(
            "{:>10} {:>10.5} {:>10.5} {:>12.6}",
            kind.to_string(),
            s.lambda_2(),
            s.lambda_max(),
            max_stable_delay(&s)?
        );
    }
    Ok(())
}
