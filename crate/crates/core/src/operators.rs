//! Scalar kernels (`Υ`, `ν_{c,d}`) and the Γ-calculus style operators built
//! from them: `L`, `Ψ_H`, `B_H`, `Ψ_{2,H}`, `Γ`, `Γ₂`.
//!
//! One implementation of `Ψ_H` / `Ψ_{2,H}` serves every kernel; `Γ` and `Γ₂`
//! are the special case `H(r) = r²/2`.

use std::fmt;
use std::ops::{Deref, DerefMut};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::chain::MarkovChain;
use crate::error::{Error, Result};

/// `Υ(r) = e^r − r − 1`, accurate to full relative precision near zero.
pub fn upsilon(r: f64) -> f64 {
    if r.abs() < 0.5 {
        // Taylor series from the r² term; 20 terms reach machine precision.
        let mut term = r * r / 2.0;
        let mut sum = term;
        for k in 3..23 {
            term *= r / k as f64;
            sum += term;
        }
        sum
    } else {
        r.exp_m1() - r
    }
}

/// `Υ′(r) = e^r − 1`.
pub fn upsilon_prime(r: f64) -> f64 {
    r.exp_m1()
}

/// `ν_{c,d}(r) = cΥ′(r)r + Υ(−r) − dΥ(r)`.
pub fn nu(c: f64, d: f64, r: f64) -> f64 {
    c * upsilon_prime(r) * r + upsilon(-r) - d * upsilon(r)
}

pub fn nu_prime(c: f64, d: f64, r: f64) -> f64 {
    let e = r.exp();
    c * (e * r + r.exp_m1()) - (-r).exp_m1() - d * r.exp_m1()
}

pub fn nu_second(c: f64, d: f64, r: f64) -> f64 {
    let e = r.exp();
    c * (e * r + 2.0 * e) + (-r).exp() - d * e
}

/// Minimum of `ν″_{c,d}` over `count` equispaced points in `[lo, hi]`,
/// returned as `(min, argmin)`.
pub fn convexity_scan(c: f64, d: f64, lo: f64, hi: f64, count: usize) -> (f64, f64) {
    let count = count.max(2);
    (0..count)
        .map(|i| {
            let r = lo + (hi - lo) * i as f64 / (count - 1) as f64;
            (nu_second(c, d, r), r)
        })
        .fold((f64::INFINITY, lo), |acc, v| if v.0 < acc.0 { v } else { acc })
}

type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A kernel `H` together with its derivative `H′`.
#[derive(Clone)]
pub enum ScalarKernel {
    Upsilon,
    /// `H(r) = r²/2`, so that `Ψ_H = Γ` and `Ψ_{2,H} = Γ₂`.
    Square,
    /// `H(r) = out_scale · ν_{c,d}(r / arg_scale)`.
    NuCD {
        c: f64,
        d: f64,
        arg_scale: f64,
        out_scale: f64,
    },
    Custom {
        value: RealFn,
        derivative: RealFn,
    },
}

impl fmt::Debug for ScalarKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarKernel::Upsilon => write!(f, "Upsilon"),
            ScalarKernel::Square => write!(f, "Square"),
            ScalarKernel::NuCD {
                c,
                d,
                arg_scale,
                out_scale,
            } => write!(f, "NuCD(c={c}, d={d}, arg_scale={arg_scale}, out_scale={out_scale})"),
            ScalarKernel::Custom { .. } => write!(f, "Custom"),
        }
    }
}

impl ScalarKernel {
    pub fn custom(
        value: impl Fn(f64) -> f64 + Send + Sync + 'static,
        derivative: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        ScalarKernel::Custom {
            value: Arc::new(value),
            derivative: Arc::new(derivative),
        }
    }

    pub fn eval(&self, r: f64) -> f64 {
        match self {
            ScalarKernel::Upsilon => upsilon(r),
            ScalarKernel::Square => 0.5 * r * r,
            ScalarKernel::NuCD {
                c,
                d,
                arg_scale,
                out_scale,
            } => out_scale * nu(*c, *d, r / arg_scale),
            ScalarKernel::Custom { value, .. } => value(r),
        }
    }

    pub fn derivative(&self, r: f64) -> f64 {
        match self {
            ScalarKernel::Upsilon => upsilon_prime(r),
            ScalarKernel::Square => r,
            ScalarKernel::NuCD {
                c,
                d,
                arg_scale,
                out_scale,
            } => out_scale / arg_scale * nu_prime(*c, *d, r / arg_scale),
            ScalarKernel::Custom { derivative, .. } => derivative(r),
        }
    }

    /// The derivative as a kernel in its own right (derivative of that is
    /// not needed by any operator, so it is approximated by central differences).
    pub fn derivative_kernel(&self) -> ScalarKernel {
        let k = self.clone();
        let k2 = self.clone();
        ScalarKernel::custom(
            move |r| k.derivative(r),
            move |r| {
                let h = 1e-5 * (1.0 + r.abs());
                (k2.derivative(r + h) - k2.derivative(r - h)) / (2.0 * h)
            },
        )
    }
}

/// One real value per state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct StateFunction(pub Vec<f64>);

impl StateFunction {
    pub fn constant(n: usize, c: f64) -> Self {
        StateFunction(vec![c; n])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Checks length and finiteness against a chain.
    pub fn validate(&self, chain: &MarkovChain) -> Result<()> {
        if self.0.len() != chain.len() {
            return Err(Error::LengthMismatch {
                expected: chain.len(),
                got: self.0.len(),
            });
        }
        if let Some(i) = self.0.iter().position(|v| !v.is_finite()) {
            return Err(Error::Precondition(format!(
                "non-finite value at state {}",
                chain.label(i)
            )));
        }
        Ok(())
    }
}

impl Deref for StateFunction {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for StateFunction {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for StateFunction {
    fn from(v: Vec<f64>) -> Self {
        StateFunction(v)
    }
}

fn check_len(chain: &MarkovChain, f: &[f64]) {
    assert_eq!(f.len(), chain.len(), "state function length must match the chain");
}

/// `(Lf)(x) = Σ_y k(x,y)(f(y) − f(x))` at a single state.
pub fn generator_at(chain: &MarkovChain, f: &[f64], x: usize) -> f64 {
    chain
        .neighbors(x)
        .iter()
        .map(|&(y, r)| r * (f[y] - f[x]))
        .sum()
}

pub fn generator_apply(chain: &MarkovChain, f: &[f64]) -> StateFunction {
    check_len(chain, f);
    (0..chain.len()).map(|x| generator_at(chain, f, x)).collect::<Vec<_>>().into()
}

/// `Ψ_H(f)(x) = Σ_y k(x,y) H(f(y) − f(x))` at a single state.
pub fn psi_at(chain: &MarkovChain, f: &[f64], kernel: &ScalarKernel, x: usize) -> f64 {
    chain
        .neighbors(x)
        .iter()
        .map(|&(y, r)| r * kernel.eval(f[y] - f[x]))
        .sum()
}

pub fn psi(chain: &MarkovChain, f: &[f64], kernel: &ScalarKernel) -> StateFunction {
    check_len(chain, f);
    (0..chain.len()).map(|x| psi_at(chain, f, kernel, x)).collect::<Vec<_>>().into()
}

/// `B_H(f,g)(x) = Σ_y k(x,y) H(f(y) − f(x))(g(y) − g(x))`.
pub fn b_h(chain: &MarkovChain, f: &[f64], g: &[f64], kernel: &ScalarKernel) -> StateFunction {
    check_len(chain, f);
    check_len(chain, g);
    (0..chain.len())
        .map(|x| {
            chain
                .neighbors(x)
                .iter()
                .map(|&(y, r)| r * kernel.eval(f[y] - f[x]) * (g[y] - g[x]))
                .sum()
        })
        .collect::<Vec<_>>()
        .into()
}

/// `Ψ_{2,H}(f)(x) = ½(LΨ_H(f) − B_{H′}(f, Lf))(x)`, evaluated from the
/// 2-ball of `x` only.
pub fn psi2_at(chain: &MarkovChain, f: &[f64], kernel: &ScalarKernel, x: usize) -> f64 {
    let lf_x = generator_at(chain, f, x);
    let psi_x = psi_at(chain, f, kernel, x);
    let mut acc = 0.0;
    for &(y, r) in chain.neighbors(x) {
        let psi_y = psi_at(chain, f, kernel, y);
        let lf_y = generator_at(chain, f, y);
        acc += r * ((psi_y - psi_x) - kernel.derivative(f[y] - f[x]) * (lf_y - lf_x));
    }
    0.5 * acc
}

pub fn psi2(chain: &MarkovChain, f: &[f64], kernel: &ScalarKernel) -> StateFunction {
    check_len(chain, f);
    let lf = generator_apply(chain, f);
    let ps = psi(chain, f, kernel);
    (0..chain.len())
        .map(|x| {
            let s: f64 = chain
                .neighbors(x)
                .iter()
                .map(|&(y, r)| {
                    r * ((ps[y] - ps[x]) - kernel.derivative(f[y] - f[x]) * (lf[y] - lf[x]))
                })
                .sum();
            0.5 * s
        })
        .collect::<Vec<_>>()
        .into()
}

/// The three-sum representation of `2Ψ_{2,Υ}(f)(x)`, halved. Also returns the
/// sum of absolute values of the terms, a natural scale for comparisons.
pub fn psi2_upsilon_rep_at(chain: &MarkovChain, f: &[f64], x: usize) -> (f64, f64) {
    let lf_x = generator_at(chain, f, x);
    let mut inner_total = 0.0;
    let mut scale = 0.0;
    let mut weighted_prime = 0.0;
    let mut m1 = 0.0;
    let mut psi_x = 0.0;
    for &(y, kxy) in chain.neighbors(x) {
        let dy = f[y] - f[x];
        let up = upsilon_prime(dy);
        let mut inner = 0.0;
        for &(z, kyz) in chain.neighbors(y) {
            let dz = f[z] - f[y];
            let t = kyz * (upsilon(dz) - up * dz);
            inner += t;
            scale += (kxy * t).abs();
        }
        inner_total += kxy * inner;
        weighted_prime += kxy * up;
        m1 += kxy;
        psi_x += kxy * upsilon(dy);
    }
    let second = weighted_prime * lf_x;
    let third = m1 * psi_x;
    scale += second.abs() + third.abs();
    (0.5 * (inner_total + second - third), 0.5 * scale)
}

pub fn psi2_upsilon_rep(chain: &MarkovChain, f: &[f64]) -> StateFunction {
    check_len(chain, f);
    (0..chain.len())
        .map(|x| psi2_upsilon_rep_at(chain, f, x).0)
        .collect::<Vec<_>>()
        .into()
}

/// `Γ(f) = ½ Σ k(x,y)(f(y) − f(x))²`.
pub fn gamma(chain: &MarkovChain, f: &[f64]) -> StateFunction {
    psi(chain, f, &ScalarKernel::Square)
}

/// `Γ(f,g) = ½(L(fg) − fLg − gLf)`, computed from products rather than
/// differences.
pub fn gamma_bilinear(chain: &MarkovChain, f: &[f64], g: &[f64]) -> StateFunction {
    let fg: Vec<f64> = f.iter().zip(g).map(|(a, b)| a * b).collect();
    let lfg = generator_apply(chain, &fg);
    let lf = generator_apply(chain, f);
    let lg = generator_apply(chain, g);
    (0..chain.len())
        .map(|x| 0.5 * (lfg[x] - f[x] * lg[x] - g[x] * lf[x]))
        .collect::<Vec<_>>()
        .into()
}

pub fn gamma2(chain: &MarkovChain, f: &[f64]) -> StateFunction {
    psi2(chain, f, &ScalarKernel::Square)
}

pub fn gamma2_at(chain: &MarkovChain, f: &[f64], x: usize) -> f64 {
    psi2_at(chain, f, &ScalarKernel::Square, x)
}

/// `L(log f) − Lf/f + Ψ_Υ(log f)`, identically zero in exact arithmetic.
pub fn chain_rule_residual(chain: &MarkovChain, f: &[f64]) -> Result<StateFunction> {
    check_len(chain, f);
    if let Some(i) = f.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::NonPositiveInput {
            state: chain.label(i).to_string(),
            value: f[i],
        });
    }
    let logf: Vec<f64> = f.iter().map(|v| v.ln()).collect();
    let llog = generator_apply(chain, &logf);
    let lf = generator_apply(chain, f);
    let ps = psi(chain, &logf, &ScalarKernel::Upsilon);
    Ok((0..chain.len())
        .map(|x| llog[x] - lf[x] / f[x] + ps[x])
        .collect::<Vec<_>>()
        .into())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::DEFAULT_TOLERANCE;
    use std::f64::consts::E;

    fn two_point(a: f64, b: f64) -> MarkovChain {
        MarkovChain::from_indexed_rates(2, &[(0, 1, a), (1, 0, b)], None, DEFAULT_TOLERANCE).unwrap()
    }

    fn complete(n: usize) -> MarkovChain {
        let rates: Vec<_> = (0..n)
            .flat_map(|x| (0..n).filter(move |&y| y != x).map(move |y| (x, y, 1.0)))
            .collect();
        MarkovChain::from_indexed_rates(n, &rates, None, DEFAULT_TOLERANCE).unwrap()
    }

    #[test]
    fn upsilon_values() {
        assert_eq!(upsilon(0.0), 0.0);
        assert!((upsilon(1.0) - (E - 2.0)).abs() < 1e-15);
        for r in [1e-8, -1e-8, 3e-9, -2.5e-10] {
            let series = r * r / 2.0 + r * r * r / 6.0;
            assert!(((upsilon(r) - series) / series).abs() < 1e-6);
        }
        // continuity at the series/closed-form switch
        for r in [0.5f64, -0.5] {
            let a = upsilon(r - 1e-12);
            let b = upsilon(r + 1e-12);
            assert!((a - b).abs() < 1e-11);
        }
    }

    #[test]
    fn symmetric_upsilon_dominates_square() {
        for i in 0..=2000 {
            let r = -10.0 + 20.0 * i as f64 / 2000.0;
            let s = upsilon(r) + upsilon(-r);
            if r == 0.0 {
                assert_eq!(s, 0.0);
            } else {
                assert!(s > r * r);
            }
        }
    }

    #[test]
    fn nu_values_and_derivatives() {
        for (c, d) in [(2.0, 1.0), (1.5, 0.5), (2.0, 5.0)] {
            assert_eq!(nu(c, d, 0.0), 0.0);
            for r in [-3.0, -0.2, 0.7, 2.0] {
                let h = 1e-5;
                let fd = (nu(c, d, r + h) - nu(c, d, r - h)) / (2.0 * h);
                assert!((fd - nu_prime(c, d, r)).abs() < 1e-6 * (1.0 + fd.abs()));
                let fd2 = (nu_prime(c, d, r + h) - nu_prime(c, d, r - h)) / (2.0 * h);
                assert!((fd2 - nu_second(c, d, r)).abs() < 1e-6 * (1.0 + fd2.abs()));
            }
        }
        assert!((nu_second(2.0, 1.0, 0.0) - 4.0).abs() < 1e-15);
        // closed form e^r((1+λ)r + 2 + λ) + e^{-r}
        for lam in [0.1, 0.5, 1.0] {
            for r in [-2.0f64, 0.3, 4.0] {
                let closed = r.exp() * ((1.0 + lam) * r + 2.0 + lam) + (-r).exp();
                assert!((nu_second(1.0 + lam, lam, r) - closed).abs() < 1e-12 * closed);
            }
        }
    }

    #[test]
    fn convexity_scan_positive() {
        for i in 1..=10 {
            let lam = i as f64 / 10.0;
            let (m, _) = convexity_scan(1.0 + lam, lam, -20.0, 20.0, 4001);
            assert!(m > 0.0);
        }
    }

    #[test]
    fn kernel_derivatives_match_finite_differences() {
        let kernels = [
            ScalarKernel::Upsilon,
            ScalarKernel::Square,
            ScalarKernel::NuCD {
                c: 2.0,
                d: 5.0,
                arg_scale: 3.0,
                out_scale: 1.5,
            },
            ScalarKernel::custom(|r| r.sin(), |r| r.cos()),
        ];
        for k in &kernels {
            for i in 0..=40 {
                let r = -4.0 + 0.2 * i as f64;
                let h = 1e-5;
                let fd = (k.eval(r + h) - k.eval(r - h)) / (2.0 * h);
                assert!((fd - k.derivative(r)).abs() < 1e-6 * (1.0 + fd.abs()), "{k:?} at {r}");
            }
        }
    }

    #[test]
    fn generator_examples() {
        let k3 = complete(3);
        assert_eq!(generator_apply(&k3, &[1.0, 0.0, 0.0]).0, vec![-2.0, 1.0, 1.0]);
        assert_eq!(generator_apply(&k3, &[4.0, 4.0, 4.0]).0, vec![0.0; 3]);
        let tp = two_point(1.0, 2.0);
        assert_eq!(generator_apply(&tp, &[0.0, 1.0]).0, vec![1.0, -2.0]);
    }

    #[test]
    fn psi_and_b_examples() {
        let tp = two_point(1.0, 1.0);
        let f = [0.0, 1.0];
        assert!((psi(&tp, &f, &ScalarKernel::Upsilon)[0] - (E - 2.0)).abs() < 1e-15);
        assert_eq!(gamma(&tp, &f)[0], 0.5);
        let lf = generator_apply(&tp, &f);
        assert_eq!(lf.0, vec![1.0, -1.0]);
        let b = b_h(&tp, &f, &lf, &ScalarKernel::custom(upsilon_prime, |r| r.exp()));
        assert!((b[0] - (E - 1.0) * -2.0).abs() < 1e-14);
        // H ≡ 1 collapses to Lg
        let k3 = complete(3);
        let g = [0.3, -1.0, 2.0];
        let one = ScalarKernel::custom(|_| 1.0, |_| 0.0);
        let b = b_h(&k3, &[5.0, 1.0, 2.0], &g, &one);
        let lg = generator_apply(&k3, &g);
        for x in 0..3 {
            assert!((b[x] - lg[x]).abs() < 1e-15);
        }
        assert_eq!(b_h(&k3, &[5.0, 1.0, 2.0], &[1.0; 3], &ScalarKernel::Upsilon).0, vec![0.0; 3]);
    }

    #[test]
    fn psi2_examples() {
        let tp = two_point(1.0, 1.0);
        for t in [0.5, 1.0, 2.0] {
            let g2 = gamma2(&tp, &[0.0, t]);
            assert!((g2[0] - t * t).abs() < 1e-14);
            assert!((g2[1] - t * t).abs() < 1e-14);
        }
        let expected = 0.5 * nu(2.0, 1.0, 1.0);
        assert!((expected - 1.5430806).abs() < 1e-7);
        let p = psi2(&tp, &[0.0, 1.0], &ScalarKernel::Upsilon);
        assert!((p[0] - expected).abs() < 1e-14);
        let (rep, _) = psi2_upsilon_rep_at(&tp, &[0.0, 1.0], 0);
        assert!((rep - expected).abs() < 1e-14);
        assert!((psi2_at(&tp, &[0.0, 1.0], &ScalarKernel::Upsilon, 0) - expected).abs() < 1e-14);
        let k3 = complete(3);
        assert_eq!(psi2(&k3, &[2.0; 3], &ScalarKernel::Upsilon).0, vec![0.0; 3]);
        assert_eq!(psi2_upsilon_rep(&k3, &[2.0; 3]).0, vec![0.0; 3]);
    }

    #[test]
    fn chain_rule_examples() {
        let tp = two_point(1.0, 1.0);
        let r = chain_rule_residual(&tp, &[1.5, 0.5]).unwrap();
        assert!(r.iter().all(|v| v.abs() < 1e-12));
        let r = chain_rule_residual(&tp, &[2.0, 2.0]).unwrap();
        assert!(r.iter().all(|&v| v == 0.0));
        assert!(matches!(
            chain_rule_residual(&tp, &[1.0, 0.0]),
            Err(Error::NonPositiveInput { .. })
        ));
    }
}
