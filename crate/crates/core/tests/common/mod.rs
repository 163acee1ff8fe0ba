#![allow(dead_code)]

use cascade_risk::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random spanning tree plus random chords, weights in [0.2, 2].
pub fn random_graph(r: &mut ChaCha8Rng, n: usize) -> WeightedGraph {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(r);
    let mut edges = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for k in 1..n {
        let parent = order[r.random_range(0..k)];
        let child = order[k];
        seen.insert((parent.min(child), parent.max(child)));
        edges.push((parent, child, r.random_range(0.2..2.0)));
    }
    let extra = r.random_range(0..=n);
    for _ in 0..extra {
        let (a, b) = (r.random_range(0..n), r.random_range(0..n));
        if a != b && seen.insert((a.min(b), a.max(b))) {
            edges.push((a, b, r.random_range(0.2..2.0)));
        }
    }
    WeightedGraph::new(n, edges).unwrap()
}

/// Covariance of a random graph at a random fraction of its delay bound.
pub fn random_cov(r: &mut ChaCha8Rng, n: usize) -> (WeightedGraph, SteadyStateCovariance) {
    let g = random_graph(r, n);
    let s = spectral(&laplacian(&g)).unwrap();
    let tau = r.random_range(0.0..0.9) * max_stable_delay(&s).unwrap();
    let b = r.random_range(0.5..4.0);
    let cov = steady_state_covariance(&s, NoiseDelayConfig::new(b, tau)).unwrap();
    (g, cov)
}

/// Random failure set of size `m` with values of random sign and |y| in (c, 4].
pub fn random_failures(r: &mut ChaCha8Rng, n: usize, m: usize, c: f64) -> FailureScenario {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(r);
    idx.truncate(m);
    let values = idx
        .iter()
        .map(|_| {
            let mag = r.random_range(c + 0.05..4.0);
            if r.random_bool(0.5) { mag } else { -mag }
        })
        .collect();
    FailureScenario::new(idx, values).unwrap()
}

pub fn case_cov(kind: GraphKind) -> SteadyStateCovariance {
    let g = build_graph(&kind, 20).unwrap();
    let s = spectral(&laplacian(&g)).unwrap();
    steady_state_covariance(&s, NoiseDelayConfig::new(4.0, 0.05)).unwrap()
}

pub fn case_failures() -> FailureScenario {
    FailureScenario::uniform(vec![8, 9, 10, 11], 2.0).unwrap()
}

pub fn case_params() -> RiskParams {
    RiskParams::new(0.1, 0.1).unwrap()
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}
