//! Shared fixtures for the integration tests.
#![allow(dead_code)]

use curvcheck::chain::DEFAULT_TOLERANCE;
use curvcheck::families::{make_example, Certificate, Family};
use curvcheck::MarkovChain;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn two_point(a: f64, b: f64) -> MarkovChain {
    make_example(&Family::TwoPoint { a, b }).unwrap().chain
}

pub fn complete(n: usize) -> MarkovChain {
    make_example(&Family::Complete { n, alpha: 0.25 }).unwrap().chain
}

pub fn hypercube(d: usize) -> MarkovChain {
    make_example(&Family::Hypercube { d }).unwrap().chain
}

/// Unit-rate path `0 – 1 – … – (n−1)`.
pub fn path(n: usize) -> MarkovChain {
    let rates: Vec<(usize, usize, f64)> = (0..n - 1).flat_map(|x| [(x, x + 1, 1.0), (x + 1, x, 1.0)]).collect();
    MarkovChain::from_indexed_rates(n, &rates, None, DEFAULT_TOLERANCE).unwrap()
}

pub fn poisson(lambda: f64, cutoff: usize) -> MarkovChain {
    make_example(&Family::poisson(lambda, 1.0, cutoff)).unwrap().chain
}

/// Named operator fixtures.
pub fn operator_fixtures() -> Vec<(&'static str, MarkovChain)> {
    vec![
        ("two-point(1,2)", two_point(1.0, 2.0)),
        ("K5", complete(5)),
        ("Q3", hypercube(3)),
        ("path-5", path(5)),
        ("poisson-30", poisson(1.0, 30)),
    ]
}

/// Families with certificates, plus a label.
pub fn certified_fixtures() -> Vec<(&'static str, MarkovChain, Certificate)> {
    let fams: Vec<(&'static str, Family)> = vec![
        ("two-point(1,1)", Family::TwoPoint { a: 1.0, b: 1.0 }),
        ("two-point(1,2)", Family::TwoPoint { a: 1.0, b: 2.0 }),
        ("K3", Family::Complete { n: 3, alpha: 0.25 }),
        ("K5", Family::Complete { n: 5, alpha: 0.25 }),
        (
            "weighted-complete",
            Family::WeightedComplete {
                l: vec![1.0, 1.5, 2.0, 3.0],
                alpha: 0.25,
                delta: 1.0,
            },
        ),
        ("Q2", Family::Hypercube { d: 2 }),
        ("Q3", Family::Hypercube { d: 3 }),
    ];
    fams.into_iter()
        .map(|(name, fam)| {
            let ex = make_example(&fam).unwrap();
            (name, ex.chain, ex.certificate.unwrap())
        })
        .collect()
}

pub fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let g: f64 = StandardNormal.sample(rng);
            scale * g
        })
        .collect()
}

/// Positive density `e^{σg}/∫e^{σg}dμ`.
pub fn random_density(chain: &MarkovChain, rng: &mut ChaCha8Rng, scale: f64) -> Vec<f64> {
    let g: Vec<f64> = gaussian_vec(rng, chain.len(), scale).iter().map(|v| v.exp()).collect();
    let m: f64 = chain.pi().iter().zip(&g).map(|(p, v)| p * v).sum();
    g.iter().map(|v| v / m).collect()
}

pub fn random_scale(rng: &mut ChaCha8Rng) -> f64 {
    [0.1, 1.0, 3.0][rng.random_range(0..3)]
}
