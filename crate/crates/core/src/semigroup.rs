//! Heat semigroup `P_t = e^{tL}` via the symmetrized eigendecomposition,
//! entropy / Fisher information / Dirichlet form, and the entropy trajectory
//! `Λ(t) = Ent(P_t f)` with its first two derivatives.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;

use crate::cd::CdFunction;
use crate::chain::MarkovChain;
use crate::error::{Error, Result};
use crate::operators::{psi2, ScalarKernel};

/// Values below this are clamped before taking logarithms.
pub const POSITIVITY_FLOOR: f64 = 1e-300;

/// Cached spectral data of `D^{1/2} L D^{−1/2}`, `D = diag(π)`.
#[derive(Debug, Clone)]
pub struct Semigroup {
    sqrt_pi: DVector<f64>,
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
}

impl Semigroup {
    pub fn new(chain: &MarkovChain) -> Self {
        let n = chain.len();
        let sqrt_pi = DVector::from_iterator(n, chain.pi().iter().map(|p| p.sqrt()));
        let l = chain.generator_matrix();
        let mut s = DMatrix::zeros(n, n);
        for x in 0..n {
            for y in 0..n {
                s[(x, y)] = sqrt_pi[x] * l[(x, y)] / sqrt_pi[y];
            }
        }
        let sym = (&s + s.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym);
        Semigroup {
            sqrt_pi,
            eigenvalues: eig.eigenvalues,
            eigenvectors: eig.eigenvectors,
        }
    }

    /// Eigenvalues of `L` (all ≤ 0 up to roundoff).
    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    /// Smallest nonzero `|λ|`.
    pub fn spectral_gap(&self) -> f64 {
        let mut v: Vec<f64> = self.eigenvalues.iter().map(|l| -l).collect();
        v.sort_by(f64::total_cmp);
        v.get(1).copied().unwrap_or(0.0)
    }

    /// `P_t f`.
    pub fn evolve(&self, f: &[f64], t: f64) -> Vec<f64> {
        if t == 0.0 {
            return f.to_vec();
        }
        let g = DVector::from_iterator(f.len(), f.iter().zip(self.sqrt_pi.iter()).map(|(a, s)| a * s));
        let mut coeff = self.eigenvectors.tr_mul(&g);
        for (c, l) in coeff.iter_mut().zip(self.eigenvalues.iter()) {
            *c *= (t * l).exp();
        }
        let h = &self.eigenvectors * coeff;
        h.iter().zip(self.sqrt_pi.iter()).map(|(a, s)| a / s).collect()
    }
}

/// `P_t f`, building the eigendecomposition on the fly.
pub fn evolve(chain: &MarkovChain, f: &[f64], t: f64) -> Vec<f64> {
    Semigroup::new(chain).evolve(f, t)
}

fn require_positive(chain: &MarkovChain, f: &[f64]) -> Result<()> {
    if f.len() != chain.len() {
        return Err(Error::LengthMismatch {
            expected: chain.len(),
            got: f.len(),
        });
    }
    match f.iter().position(|&v| !(v > 0.0 && v.is_finite())) {
        Some(i) => Err(Error::NonPositiveInput {
            state: chain.label(i).to_string(),
            value: f[i],
        }),
        None => Ok(()),
    }
}

/// `∫ f dμ`.
pub fn mean(chain: &MarkovChain, f: &[f64]) -> f64 {
    chain.pi().iter().zip(f).map(|(p, v)| p * v).sum()
}

/// `‖f‖_p` with respect to `μ`; `p = ∞` gives the maximum of `|f|`.
pub fn lp_norm(chain: &MarkovChain, f: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        return f.iter().fold(0.0, |m, v| m.max(v.abs()));
    }
    let s: f64 = chain.pi().iter().zip(f).map(|(w, v)| w * v.abs().powf(p)).sum();
    s.powf(1.0 / p)
}

/// `Ent_μ(f) = ∫ f log f dμ − m log m`, `m = ∫ f dμ`.
pub fn entropy(chain: &MarkovChain, f: &[f64]) -> Result<f64> {
    require_positive(chain, f)?;
    let m = mean(chain, f);
    let e: f64 = chain
        .pi()
        .iter()
        .zip(f)
        .map(|(p, &v)| p * v * (v / m).ln())
        .sum();
    Ok(e.max(0.0))
}

/// `I(f) = ½ ΣΣ k(x,y)(f(y) − f(x))(log f(y) − log f(x)) π(x)`.
pub fn fisher_information(chain: &MarkovChain, f: &[f64]) -> Result<f64> {
    require_positive(chain, f)?;
    Ok(fisher_unchecked(chain, f))
}

fn fisher_unchecked(chain: &MarkovChain, f: &[f64]) -> f64 {
    let pi = chain.pi();
    let mut s = 0.0;
    for x in 0..chain.len() {
        for &(y, r) in chain.neighbors(x) {
            s += r * (f[y] - f[x]) * (f[y] / f[x]).ln() * pi[x];
        }
    }
    0.5 * s
}

/// `E(f,g) = ½ ΣΣ k(x,y)(f(y) − f(x))(g(y) − g(x)) π(x)`.
pub fn dirichlet_form(chain: &MarkovChain, f: &[f64], g: &[f64]) -> f64 {
    let pi = chain.pi();
    let mut s = 0.0;
    for x in 0..chain.len() {
        for &(y, r) in chain.neighbors(x) {
            s += r * (f[y] - f[x]) * (g[y] - g[x]) * pi[x];
        }
    }
    0.5 * s
}

/// `Λ(t)`, `Λ′(t) = −I(P_t f)` and `Λ″(t) = 2∫ P_t f Ψ_{2,Υ}(log P_t f) dμ`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntropyTrajectory {
    pub times: Vec<f64>,
    pub lambda: Vec<f64>,
    pub lambda_prime: Vec<f64>,
    pub lambda_double_prime: Vec<f64>,
    /// True when some `P_t f` entry fell below the positivity floor.
    pub clamped: bool,
}

#[derive(Debug, Clone, Copy)]
struct Point {
    lambda: f64,
    prime: f64,
    second: f64,
    clamped: bool,
}

fn trajectory_point(chain: &MarkovChain, sg: &Semigroup, f: &[f64], t: f64) -> Point {
    let mut g = sg.evolve(f, t);
    let mut clamped = false;
    for v in g.iter_mut() {
        if !(*v >= POSITIVITY_FLOOR) {
            *v = POSITIVITY_FLOOR;
            clamped = true;
        }
    }
    let logg: Vec<f64> = g.iter().map(|v| v.ln()).collect();
    let p2 = psi2(chain, &logg, &ScalarKernel::Upsilon);
    let second = 2.0 * chain.pi().iter().zip(&g).zip(p2.iter()).map(|((p, a), b)| p * a * b).sum::<f64>();
    Point {
        lambda: entropy(chain, &g).unwrap_or(f64::NAN),
        prime: -fisher_unchecked(chain, &g),
        second,
        clamped,
    }
}

fn require_density(chain: &MarkovChain, f: &[f64]) -> Result<()> {
    require_positive(chain, f)?;
    let m = mean(chain, f);
    if (m - 1.0).abs() > 1e-10 {
        return Err(Error::NonDensity { mass: m });
    }
    Ok(())
}

/// Evaluates `Λ`, `Λ′`, `Λ″` at each time on the grid.
pub fn entropy_trajectory(chain: &MarkovChain, sg: &Semigroup, f: &[f64], times: &[f64]) -> Result<EntropyTrajectory> {
    require_density(chain, f)?;
    if times.iter().any(|&t| !(t >= 0.0)) {
        return Err(Error::Precondition("times must be non-negative".into()));
    }
    let pts: Vec<Point> = times.par_iter().map(|&t| trajectory_point(chain, sg, f, t)).collect();
    Ok(EntropyTrajectory {
        times: times.to_vec(),
        lambda: pts.iter().map(|p| p.lambda).collect(),
        lambda_prime: pts.iter().map(|p| p.prime).collect(),
        lambda_double_prime: pts.iter().map(|p| p.second).collect(),
        clamped: pts.iter().any(|p| p.clamped),
    })
}

/// Geometric grid `t₀ ρ^j`, `j = 0..count`, optionally preceded by `t = 0`.
pub fn geometric_grid(t0: f64, ratio: f64, count: usize, include_zero: bool) -> Vec<f64> {
    let mut v = Vec::with_capacity(count + 1);
    if include_zero {
        v.push(0.0);
    }
    let mut t = t0;
    for _ in 0..count {
        v.push(t);
        t *= ratio;
    }
    v
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OdeReport {
    /// `Λ″ + 2κΛ′ − 2F(−Λ′)` per time.
    pub slacks: Vec<f64>,
    pub min_slack: f64,
    pub argmin_time: f64,
    pub lambda_decreasing: bool,
    pub passed: bool,
}

/// Checks `Λ″ ≥ −2κΛ′ + 2F(−Λ′)` along a trajectory.
pub fn check_entropy_ode(traj: &EntropyTrajectory, kappa: f64, big_f: &CdFunction, tol: f64) -> OdeReport {
    let slacks: Vec<f64> = traj
        .lambda_double_prime
        .iter()
        .zip(&traj.lambda_prime)
        .map(|(&l2, &l1)| l2 + 2.0 * kappa * l1 - 2.0 * big_f.eval(-l1))
        .collect();
    let (argmin, min_slack) = slacks
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc });
    let lambda_decreasing = traj
        .lambda
        .windows(2)
        .all(|w| w[1] <= w[0] + 1e-14 * (1.0 + w[0].abs()));
    OdeReport {
        min_slack,
        argmin_time: traj.times.get(argmin).copied().unwrap_or(0.0),
        passed: min_slack >= -tol && lambda_decreasing,
        lambda_decreasing,
        slacks,
    }
}

/// Finite-difference derivative of `Λ` at `t` with step `h`: central when
/// `t ≥ h`, otherwise the one-sided three-point formula.
pub fn entropy_fd_derivative(chain: &MarkovChain, sg: &Semigroup, f: &[f64], t: f64, h: f64) -> f64 {
    let ent = |s: f64| entropy(chain, &sg.evolve(f, s)).unwrap_or(f64::NAN);
    if t >= h {
        (ent(t + h) - ent(t - h)) / (2.0 * h)
    } else {
        (-3.0 * ent(t) + 4.0 * ent(t + h) - ent(t + 2.0 * h)) / (2.0 * h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FdConsistency {
    pub analytic: f64,
    pub error_coarse: f64,
    pub error_fine: f64,
    /// `log₁₀(error_coarse / error_fine)` for a tenfold step reduction.
    pub observed_order: f64,
    /// Both errors below the roundoff floor.
    pub at_roundoff: bool,
}

/// Compares finite differences of `Λ` at steps `h` and `h/10` with `Λ′(t)`.
pub fn fd_consistency(chain: &MarkovChain, sg: &Semigroup, f: &[f64], t: f64, h: f64) -> FdConsistency {
    let analytic = -fisher_unchecked(chain, &sg.evolve(f, t));
    let e1 = (entropy_fd_derivative(chain, sg, f, t, h) - analytic).abs();
    let e2 = (entropy_fd_derivative(chain, sg, f, t, h / 10.0) - analytic).abs();
    FdConsistency {
        analytic,
        error_coarse: e1,
        error_fine: e2,
        observed_order: (e1 / e2).log10(),
        at_roundoff: e1 < 1e-11 && e2 < 1e-11,
    }
}
