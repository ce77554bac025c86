//! Growth functions and numerical verification of the entropy-information,
//! ultracontractivity, Lipschitz/diameter and modified Nash inequalities.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cd::{log_grid, CdFunction};
use crate::chain::MarkovChain;
use crate::error::{Error, Result};
use crate::families::poisson_test_function;
use crate::operators::gamma;
use crate::quadrature::{integrate, integrate_to_infinity, QuadConfig};
use crate::semigroup::{entropy, fisher_information, mean, Semigroup};

/// Relative tolerance applied to every reported slack.
pub const SLACK_TOL: f64 = 1e-10;

/// Concave increasing `Φ` of an entropy-information inequality
/// `Ent(f) ≤ Φ(I(f))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GrowthFunction {
    /// `Φ(r) = (n/2) log(1 + r/(κn))`.
    Log { n: f64, kappa: f64 },
    /// `Φ(r) = (κn)^{1/δ}/(2κ) ∫_{(κn)^{1/δ}/r}^∞ v^{δ−2}/(v^δ + 1) dv`.
    PowerIntegral { n: f64, kappa: f64, delta: f64 },
    /// `Φ(r) = c r`.
    Linear { c: f64 },
}

impl GrowthFunction {
    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        let ok = match *self {
            GrowthFunction::Log { n, kappa } => pos(n) && pos(kappa),
            GrowthFunction::PowerIntegral { n, kappa, delta } => pos(n) && pos(kappa) && delta >= 1.0 && delta.is_finite(),
            GrowthFunction::Linear { c } => pos(c),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::BadParams(format!("invalid growth function {self:?}")))
        }
    }

    /// `Φ(r)`; `Φ(0) = lim_{r→0⁺} Φ(r) = 0` for all variants.
    pub fn try_phi(&self, r: f64) -> Result<f64> {
        if r <= 0.0 {
            return Ok(0.0);
        }
        match *self {
            GrowthFunction::Log { n, kappa } => Ok(0.5 * n * (r / (kappa * n)).ln_1p()),
            GrowthFunction::Linear { c } => Ok(c * r),
            GrowthFunction::PowerIntegral { n, kappa, delta } => {
                if r.is_infinite() {
                    return self.phi_infinity().ok_or(Error::NonIntegrableGrowth);
                }
                let c = (kappa * n).powf(1.0 / delta);
                let a = c / r;
                let g = move |v: f64| v.powf(delta - 2.0) / (v.powf(delta) + 1.0);
                let cfg = QuadConfig::tight();
                let val = if a < 1.0 {
                    integrate(g, a, 1.0, cfg)?.value + integrate_to_infinity(g, 1.0, cfg)?.value
                } else {
                    integrate_to_infinity(g, a, cfg)?.value
                };
                Ok(c / (2.0 * kappa) * val)
            }
        }
    }

    /// `Φ(r)`, NaN when the defining quadrature fails.
    pub fn phi(&self, r: f64) -> f64 {
        self.try_phi(r).unwrap_or(f64::NAN)
    }

    pub fn phi_prime(&self, r: f64) -> f64 {
        let r = r.max(0.0);
        match *self {
            GrowthFunction::Log { n, kappa } => n / (2.0 * (kappa * n + r)),
            GrowthFunction::PowerIntegral { n, kappa, delta } => n / (2.0 * (kappa * n + r.powf(delta))),
            GrowthFunction::Linear { c } => c,
        }
    }

    pub fn phi_second(&self, r: f64) -> f64 {
        let r = r.max(0.0);
        match *self {
            GrowthFunction::Log { n, kappa } => -n / (2.0 * (kappa * n + r).powi(2)),
            GrowthFunction::PowerIntegral { n, kappa, delta } => {
                -n * delta * r.powf(delta - 1.0) / (2.0 * (kappa * n + r.powf(delta)).powi(2))
            }
            GrowthFunction::Linear { .. } => 0.0,
        }
    }

    /// `Θ(r) = Φ(r) − Φ′(r) r`.
    pub fn theta(&self, r: f64) -> f64 {
        self.phi(r) - self.phi_prime(r) * r
    }

    pub fn is_bounded(&self) -> bool {
        matches!(*self, GrowthFunction::PowerIntegral { delta, .. } if delta > 1.0)
    }

    /// `lim_{r→∞} Φ(r)` when finite.
    pub fn phi_infinity(&self) -> Option<f64> {
        match *self {
            GrowthFunction::PowerIntegral { n, kappa, delta } if delta > 1.0 => {
                let c = (kappa * n).powf(1.0 / delta);
                // ∫₀^∞ v^{s−1}/(1 + v^δ) dv = (π/δ)/sin(πs/δ), s = δ − 1
                Some(c / (2.0 * kappa) * (PI / delta) / (PI * (delta - 1.0) / delta).sin())
            }
            _ => None,
        }
    }

    fn kappa_n_delta(&self) -> Option<(f64, f64, f64)> {
        match *self {
            GrowthFunction::Log { n, kappa } => Some((kappa, n, 1.0)),
            GrowthFunction::PowerIntegral { n, kappa, delta } => Some((kappa, n, delta)),
            GrowthFunction::Linear { .. } => None,
        }
    }
}

/// Growth function produced by `CD_Υ(κ, r^{1+δ}/n)`.
pub fn growth_from_power_cd(n: f64, kappa: f64, delta: f64) -> Result<GrowthFunction> {
    let phi = if delta == 1.0 {
        GrowthFunction::Log { n, kappa }
    } else {
        GrowthFunction::PowerIntegral { n, kappa, delta }
    };
    phi.validate()?;
    if let GrowthFunction::PowerIntegral { .. } = phi {
        phi.try_phi(1.0)?;
    }
    Ok(phi)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthCheck {
    pub increasing: bool,
    pub concave: bool,
    pub theta_nonnegative: bool,
    /// `Φ(r) ≤ r/(2κ)` (only meaningful for curvature-derived `Φ`).
    pub below_linear: Option<bool>,
}

/// Checks `Φ′ > 0`, `Φ″ ≤ 0`, `Θ ≥ 0` on a grid.
pub fn check_growth_properties(phi: &GrowthFunction, grid: &[f64]) -> GrowthCheck {
    let vals: Vec<f64> = grid.iter().map(|&r| phi.phi(r)).collect();
    let scale = |v: f64| 1e-12 * (1.0 + v.abs());
    GrowthCheck {
        increasing: grid.iter().all(|&r| phi.phi_prime(r) > 0.0) && vals.windows(2).all(|w| w[1] > w[0]),
        concave: grid.iter().all(|&r| phi.phi_second(r) <= 0.0),
        theta_nonnegative: grid.iter().zip(&vals).all(|(&r, &v)| v - phi.phi_prime(r) * r >= -scale(v)),
        below_linear: phi
            .kappa_n_delta()
            .map(|(k, _, _)| grid.iter().zip(&vals).all(|(&r, &v)| v <= r / (2.0 * k) + scale(v))),
    }
}

/// Inverse of `r ↦ F(r)/r` by bisection on a geometrically grown bracket.
pub fn inverse_ratio(big_f: &CdFunction, y: f64) -> Result<f64> {
    if y <= 0.0 {
        return Ok(0.0);
    }
    let ratio = |r: f64| big_f.eval(r) / r;
    let (mut lo, mut hi) = (1.0f64, 1.0f64);
    let mut grow = 0;
    while ratio(hi) < y {
        hi *= 2.0;
        grow += 1;
        if grow > 2000 || !hi.is_finite() {
            return Err(Error::BadParams("F(r)/r does not reach the requested level".into()));
        }
    }
    while ratio(lo) >= y {
        lo *= 0.5;
        if lo < 1e-300 {
            return Ok(0.0);
        }
    }
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= 1e-15 * hi || mid <= lo || mid >= hi {
            break;
        }
        if ratio(mid) < y {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Right-hand side of the entropy bound under `CD_Υ(κ, F)`:
/// `∫₀^∞ G(κ / (e^{2δκt}(1 + κI/F(I)) − 1)) dt`.
pub fn main_entropy_bound(fisher: f64, kappa: f64, big_f: &CdFunction, delta: f64) -> Result<f64> {
    if !(fisher > 0.0 && kappa > 0.0 && delta > 0.0) {
        return Err(Error::Precondition("need I > 0, κ > 0 and δ > 0".into()));
    }
    big_f.validate()?;
    for r in log_grid(1e-3, 1e3, 61) {
        let lhs = big_f.derivative(r) * r;
        let rhs = (1.0 + delta) * big_f.eval(r);
        if lhs < rhs * (1.0 - 1e-9) {
            return Err(Error::Precondition(format!("F′(r)r < (1+δ)F(r) at r = {r}")));
        }
    }
    let c = kappa * fisher / big_f.eval(fisher);
    let integrand = |t: f64| {
        let denom = (1.0 + c) * (2.0 * delta * kappa * t).exp_m1() + c;
        inverse_ratio(big_f, kappa / denom).unwrap_or(f64::NAN)
    };
    integrate_to_infinity(integrand, 0.0, QuadConfig::tight())
        .map(|q| q.value)
        .map_err(|_| Error::DivergentIntegral)
}

/// One evaluated slack `right side − left side`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlackPoint {
    pub label: String,
    pub parameter: f64,
    pub slack: f64,
    /// Magnitude of the compared terms; the tolerance is relative to it.
    pub scale: f64,
}

impl SlackPoint {
    fn new(label: &str, parameter: f64, slack: f64, scale: f64) -> Self {
        SlackPoint {
            label: label.to_string(),
            parameter,
            slack,
            scale,
        }
    }

    pub fn holds(&self) -> bool {
        self.slack >= -SLACK_TOL * (1.0 + self.scale)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum InequalityKind {
    EntropyInformation,
    Ultracontractivity,
    FisherLipschitz,
    ExpIntegrability,
    Nash,
    BoundedEntropy,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InequalityReport {
    pub kind: InequalityKind,
    pub passed: bool,
    pub min_slack: f64,
    pub points: Vec<SlackPoint>,
    pub parameters: BTreeMap<String, f64>,
    pub quadrature_error: Option<f64>,
    /// Input recorded when some slack is negative.
    pub witness: Option<Vec<f64>>,
}

impl InequalityReport {
    fn new(kind: InequalityKind, points: Vec<SlackPoint>, parameters: &[(&str, f64)], f: &[f64]) -> Self {
        let passed = points.iter().all(|p| p.holds() && !p.slack.is_nan());
        InequalityReport {
            kind,
            passed,
            min_slack: points.iter().map(|p| p.slack).fold(f64::INFINITY, f64::min),
            points,
            parameters: parameters.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            quadrature_error: None,
            witness: if passed { None } else { Some(f.to_vec()) },
        }
    }
}

/// `Ent(f) ≤ ‖f‖₁ Φ(I(f)/‖f‖₁)` and its linearized form
/// `Ent(f) ≤ Φ′(r) I(f) + Θ(r) ‖f‖₁` over a grid of `r` (plus `r = I(f)`).
pub fn ei_check(chain: &MarkovChain, f: &[f64], phi: &GrowthFunction) -> Result<InequalityReport> {
    let ent = entropy(chain, f)?;
    let fi = fisher_information(chain, f)?;
    let m = mean(chain, f);
    let mut points = Vec::new();
    let plain = m * phi.try_phi(fi / m)?;
    points.push(SlackPoint::new("plain", fi, plain - ent, ent.abs().max(plain.abs())));
    let mut grid = log_grid(1e-4, 1e4, 41);
    if fi > 0.0 {
        grid.push(fi / m);
    }
    for r in grid {
        let rhs = phi.phi_prime(r) * fi + phi.theta(r) * m;
        points.push(SlackPoint::new("linearized", r, rhs - ent, ent.abs().max(rhs.abs())));
    }
    Ok(InequalityReport::new(
        InequalityKind::EntropyInformation,
        points,
        &[("entropy", ent), ("fisher", fi), ("mass", m)],
        f,
    ))
}

/// Truncated-chain Poisson computation next to its closed forms.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoissonSharpness {
    pub lambda: f64,
    pub k: f64,
    pub cutoff: usize,
    pub entropy: f64,
    pub fisher: f64,
    pub ratio: f64,
    /// `λ(ke^k − e^k + 1)`.
    pub entropy_closed: f64,
    /// `λk(e^k − 1)`.
    pub fisher_closed: f64,
    pub ratio_closed: f64,
    pub tail: f64,
}

/// `Ent(f_k)` and `I(f_k)` for `f_k(x) ∝ e^{kx}` on the truncated Poisson chain.
pub fn poisson_sharpness(lambda: f64, k: f64, cutoff: usize) -> Result<PoissonSharpness> {
    let p = poisson_test_function(lambda, k, cutoff)?;
    let ent = entropy(&p.chain, &p.f)?;
    let fi = fisher_information(&p.chain, &p.f)?;
    let (entropy_closed, fisher_closed) = poisson_closed_forms(lambda, k);
    Ok(PoissonSharpness {
        lambda,
        k,
        cutoff,
        entropy: ent,
        fisher: fi,
        ratio: ent / fi,
        entropy_closed,
        fisher_closed,
        ratio_closed: entropy_closed / fisher_closed,
        tail: p.tail,
    })
}

/// `(λ(ke^k − e^k + 1), λk(e^k − 1))`.
pub fn poisson_closed_forms(lambda: f64, k: f64) -> (f64, f64) {
    let e = k.exp();
    (lambda * (k * e - e + 1.0), lambda * k * k.exp_m1())
}

/// `t(ρ)` and `m(ρ)` of the ultracontractivity bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UcParams {
    pub t: f64,
    pub m: f64,
    pub quadrature_error: f64,
}

fn check_pq(p: f64, q: f64, uc_rho: f64) -> Result<()> {
    if !(p >= 1.0 && q >= p && p.is_finite() && uc_rho > 0.0 && uc_rho.is_finite()) {
        return Err(Error::BadParams("need 1 ≤ p ≤ q ≤ ∞, p finite and ρ > 0".into()));
    }
    Ok(())
}

/// `t(ρ) = ∫_p^q Φ′(ρr)/r dr`, `m(ρ) = Φ(ρp)/p − Φ(ρq)/q`; closed forms
/// for [`GrowthFunction::Log`], quadrature otherwise.
pub fn ultracontractivity_params(phi: &GrowthFunction, p: f64, q: f64, uc_rho: f64) -> Result<UcParams> {
    check_pq(p, q, uc_rho)?;
    phi.validate()?;
    match *phi {
        GrowthFunction::Linear { .. } if q.is_infinite() => Err(Error::NonIntegrableTail),
        GrowthFunction::Log { n, kappa } => {
            let kn = kappa * n;
            // ∫ n/(2r(κn + ρr)) dr = (1/2κ) log(r/(κn + ρr))
            let at = |r: f64| {
                if r.is_infinite() {
                    -uc_rho.ln()
                } else {
                    (r / (kn + uc_rho * r)).ln()
                }
            };
            let tail = if q.is_infinite() { 0.0 } else { phi.phi(uc_rho * q) / q };
            Ok(UcParams {
                t: (at(q) - at(p)) / (2.0 * kappa),
                m: phi.phi(uc_rho * p) / p - tail,
                quadrature_error: 0.0,
            })
        }
        _ => ultracontractivity_params_quadrature(phi, p, q, uc_rho),
    }
}

/// Quadrature path of [`ultracontractivity_params`] for any growth function.
pub fn ultracontractivity_params_quadrature(phi: &GrowthFunction, p: f64, q: f64, uc_rho: f64) -> Result<UcParams> {
    check_pq(p, q, uc_rho)?;
    let g = |r: f64| phi.phi_prime(uc_rho * r) / r;
    let cfg = QuadConfig::tight();
    let quad = if q.is_infinite() {
        if let GrowthFunction::Linear { .. } = phi {
            return Err(Error::NonIntegrableTail);
        }
        integrate_to_infinity(g, p, cfg).map_err(|_| Error::NonIntegrableTail)?
    } else {
        integrate(g, p, q, cfg)?
    };
    let tail = if q.is_infinite() { 0.0 } else { phi.try_phi(uc_rho * q)? / q };
    Ok(UcParams {
        t: quad.value,
        m: phi.try_phi(uc_rho * p)? / p - tail,
        quadrature_error: quad.error,
    })
}

fn log_exp_norm(chain: &MarkovChain, g: &[f64], q: f64) -> f64 {
    let gmax = g.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if q.is_infinite() {
        return gmax;
    }
    let s: f64 = chain.pi().iter().zip(g).map(|(p, v)| p * (q * (v - gmax)).exp()).sum();
    gmax + s.ln() / q
}

/// `log ‖e^{P_t f}‖_∞ ≤ Φ((n/(2δt))^{1/δ}) + log ‖e^f‖₁` at each `t`, for a
/// growth function coming from a power-type certificate.
pub fn ultracontractivity_check(
    chain: &MarkovChain,
    sg: &Semigroup,
    f: &[f64],
    phi: &GrowthFunction,
    times: &[f64],
) -> Result<InequalityReport> {
    let (_, n, delta) = phi.kappa_n_delta().ok_or(Error::NonIntegrableTail)?;
    let log_l1 = log_exp_norm(chain, f, 1.0);
    let mut points = Vec::with_capacity(times.len());
    for &t in times {
        if !(t > 0.0) {
            return Err(Error::Precondition("times must be positive".into()));
        }
        let lhs = log_exp_norm(chain, &sg.evolve(f, t), f64::INFINITY);
        let rhs = phi.try_phi((n / (2.0 * delta * t)).powf(1.0 / delta))? + log_l1;
        points.push(SlackPoint::new("sup-norm", t, rhs - lhs, lhs.abs().max(rhs.abs())));
    }
    Ok(InequalityReport::new(
        InequalityKind::Ultracontractivity,
        points,
        &[("n", n), ("delta", delta)],
        f,
    ))
}

/// `log ‖e^{P_{t(ρ)} f}‖_q ≤ log ‖e^f‖_p + m(ρ)` for each `ρ`.
pub fn ultracontractivity_check_general(
    chain: &MarkovChain,
    sg: &Semigroup,
    f: &[f64],
    phi: &GrowthFunction,
    p: f64,
    q: f64,
    uc_rhos: &[f64],
) -> Result<InequalityReport> {
    let log_lp = log_exp_norm(chain, f, p);
    let mut points = Vec::new();
    let mut qerr: f64 = 0.0;
    for &rho in uc_rhos {
        let par = ultracontractivity_params(phi, p, q, rho)?;
        qerr = qerr.max(par.quadrature_error);
        let lhs = log_exp_norm(chain, &sg.evolve(f, par.t), q);
        let rhs = log_lp + par.m;
        points.push(SlackPoint::new("lp-lq", rho, rhs - lhs, lhs.abs().max(rhs.abs())));
    }
    let mut rep = InequalityReport::new(InequalityKind::Ultracontractivity, points, &[("p", p), ("q", q)], f);
    rep.quadrature_error = Some(qerr);
    Ok(rep)
}

/// Both sides of
/// `q‖e^{P_t f}‖_q^{q−1} d/dt ‖e^{P_t f}‖_{q(t)} = (q′/q) Ent(e^{qP_t f}) − I(e^{qP_t f})`
/// for `q(t) = q0 + q1·t`; the left side by central differences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormDerivativeIdentity {
    pub lhs: f64,
    pub rhs: f64,
}

pub fn norm_derivative_identity(
    chain: &MarkovChain,
    sg: &Semigroup,
    f: &[f64],
    q0: f64,
    q1: f64,
    t: f64,
    h: f64,
) -> Result<NormDerivativeIdentity> {
    let q = |s: f64| q0 + q1 * s;
    let norm = |s: f64| {
        let g = sg.evolve(f, s);
        let qs = q(s);
        chain.pi().iter().zip(&g).map(|(p, v)| p * (qs * v).exp()).sum::<f64>().powf(1.0 / qs)
    };
    let qt = q(t);
    let derivative = (norm(t + h) - norm(t - h)) / (2.0 * h);
    let lhs = qt * norm(t).powf(qt - 1.0) * derivative;
    let g: Vec<f64> = sg.evolve(f, t).iter().map(|v| (qt * v).exp()).collect();
    let rhs = q1 / qt * entropy(chain, &g)? - fisher_information(chain, &g)?;
    Ok(NormDerivativeIdentity { lhs, rhs })
}

/// `‖f‖_Lip = (max_x Γ(f)(x))^{1/2}`.
pub fn lipschitz_seminorm(chain: &MarkovChain, f: &[f64]) -> f64 {
    gamma(chain, f).iter().cloned().fold(0.0, f64::max).sqrt()
}

/// Rescales `f` to unit Lipschitz seminorm; `None` for constants.
pub fn normalize_lipschitz(chain: &MarkovChain, f: &[f64]) -> Option<Vec<f64>> {
    let c = lipschitz_seminorm(chain, f);
    (c > 0.0).then(|| f.iter().map(|v| v / c).collect())
}

/// `I(e^{sf}) ≤ C² s² ∫ e^{sf} dμ` with `C = ‖f‖_Lip`, per `s`.
pub fn fisher_lipschitz_check(chain: &MarkovChain, f: &[f64], s_grid: &[f64]) -> Result<InequalityReport> {
    let c = lipschitz_seminorm(chain, f);
    let (fmin, fmax) = f.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let mut points = Vec::with_capacity(s_grid.len());
    for &s in s_grid {
        // both sides are 1-homogeneous in e^{sf}, so shifting f is exact
        let shift = if s >= 0.0 { fmax } else { fmin };
        let g: Vec<f64> = f.iter().map(|v| (s * (v - shift)).exp()).collect();
        let lhs = fisher_information(chain, &g)?;
        let rhs = c * c * s * s * mean(chain, &g);
        points.push(SlackPoint::new("fisher-lipschitz", s, rhs - lhs, lhs.abs().max(rhs.abs())));
    }
    Ok(InequalityReport::new(
        InequalityKind::FisherLipschitz,
        points,
        &[("lipschitz", c)],
        f,
    ))
}

/// `J(τ) = ∫₀^τ Φ(s²)/s² ds` (odd in `τ`).
pub fn growth_integral(phi: &GrowthFunction, tau: f64) -> Result<f64> {
    if tau == 0.0 {
        return Ok(0.0);
    }
    if tau < 0.0 {
        return growth_integral(phi, -tau).map(|v| -v);
    }
    if tau.is_infinite() {
        return tail_integral(phi);
    }
    match *phi {
        GrowthFunction::Log { n, kappa } => {
            let a = kappa * n;
            let sa = a.sqrt();
            Ok(0.5 * n * (-(tau * tau / a).ln_1p() / tau + 2.0 / sa * (tau / sa).atan()))
        }
        GrowthFunction::Linear { c } => Ok(c * tau),
        GrowthFunction::PowerIntegral { .. } => growth_integral_quadrature(phi, tau),
    }
}

fn phi_over_square(phi: &GrowthFunction, s: f64) -> f64 {
    if s == 0.0 {
        return phi.phi_prime(0.0);
    }
    let s2 = s * s;
    if s2 == 0.0 {
        return phi.phi_prime(0.0);
    }
    phi.phi(s2) / s2
}

/// Quadrature path of [`growth_integral`]; `τ = ∞` allowed.
pub fn growth_integral_quadrature(phi: &GrowthFunction, tau: f64) -> Result<f64> {
    let g = |s: f64| phi_over_square(phi, s);
    let cfg = QuadConfig {
        abs_tol: 1e-11,
        rel_tol: 1e-11,
        max_intervals: 4000,
    };
    if tau.is_infinite() {
        if let GrowthFunction::Linear { .. } = phi {
            return Err(Error::NonIntegrableGrowth);
        }
        let head = integrate(g, 0.0, 1.0, cfg)?;
        let tail = integrate_to_infinity(g, 1.0, cfg).map_err(|_| Error::NonIntegrableGrowth)?;
        Ok(head.value + tail.value)
    } else {
        Ok(integrate(g, 0.0, tau, cfg)?.value)
    }
}

/// `∫₀^∞ Φ(s²)/s² ds`; `(π/2)√(n/κ)` for [`GrowthFunction::Log`].
pub fn tail_integral(phi: &GrowthFunction) -> Result<f64> {
    match *phi {
        GrowthFunction::Log { n, kappa } => Ok(PI / 2.0 * (n / kappa).sqrt()),
        GrowthFunction::Linear { .. } => Err(Error::NonIntegrableGrowth),
        GrowthFunction::PowerIntegral { .. } => growth_integral_quadrature(phi, f64::INFINITY),
    }
}

/// `diam_ρ ≤ 2∫₀^∞ Φ(s²)/s² ds`.
pub fn diameter_bound(phi: &GrowthFunction) -> Result<f64> {
    tail_integral(phi).map(|v| 2.0 * v)
}

/// Exponential integrability of a 1-Lipschitz `f` at each `t`, plus the
/// mean-deviation bound when the tail integral converges.
pub fn exp_integrability_check(
    chain: &MarkovChain,
    f: &[f64],
    phi: &GrowthFunction,
    t_grid: &[f64],
) -> Result<InequalityReport> {
    let lip = lipschitz_seminorm(chain, f);
    if lip > 1.0 + 1e-9 {
        return Err(Error::Precondition(format!("f must be 1-Lipschitz, has seminorm {lip}")));
    }
    let m = mean(chain, f);
    let mut points = Vec::new();
    for &t in t_grid {
        if t == 0.0 {
            continue;
        }
        let lhs = log_exp_norm(chain, &f.iter().map(|v| t * v).collect::<Vec<_>>(), 1.0);
        let rhs = t * (growth_integral(phi, t)? + m);
        points.push(SlackPoint::new("exp-integrability", t, rhs - lhs, lhs.abs().max(rhs.abs())));
    }
    let mut params = vec![("mean", m), ("lipschitz", lip)];
    if let Ok(bound) = tail_integral(phi) {
        let dev = f.iter().map(|v| (v - m).abs()).fold(0.0, f64::max);
        points.push(SlackPoint::new("mean-deviation", f64::INFINITY, bound - dev, bound));
        params.push(("tail_integral", bound));
    }
    Ok(InequalityReport::new(InequalityKind::ExpIntegrability, points, &params, f))
}

/// `‖f‖₂^{2α+2} ≤ (A‖f‖₂² + I(f²)/β)^α ‖f‖₁²`, compared in log form.
pub fn nash_check(chain: &MarkovChain, f: &[f64], alpha: f64, beta: f64, a: f64) -> Result<InequalityReport> {
    if !(alpha > 0.0 && beta > 0.0 && a >= 1.0) {
        return Err(Error::BadParams("need α > 0, β > 0 and A ≥ 1".into()));
    }
    if let Some(i) = f.iter().position(|&v| v == 0.0) {
        return Err(Error::VanishingEntry(chain.label(i).to_string()));
    }
    let sq: Vec<f64> = f.iter().map(|v| v * v).collect();
    let l2sq = mean(chain, &sq);
    let l1 = mean(chain, &f.iter().map(|v| v.abs()).collect::<Vec<_>>());
    let fi = fisher_information(chain, &sq)?;
    let lhs = (alpha + 1.0) * l2sq.ln();
    let rhs = alpha * (a * l2sq + fi / beta).ln() + 2.0 * l1.ln();
    Ok(InequalityReport::new(
        InequalityKind::Nash,
        vec![SlackPoint::new("nash", alpha, rhs - lhs, lhs.abs().max(rhs.abs()))],
        &[("alpha", alpha), ("beta", beta), ("A", a), ("fisher", fi)],
        f,
    ))
}

/// `(α, β, A)` of the modified Nash inequality implied by `Φ = Log{n, κ}`.
pub fn nash_parameters(phi: &GrowthFunction) -> Option<(f64, f64, f64)> {
    match *phi {
        GrowthFunction::Log { n, kappa } => Some((n / 2.0, kappa * n, 1.0)),
        _ => None,
    }
}

/// `Ent(f) ≤ Φ(∞) ‖f‖₁` for bounded `Φ`.
pub fn bounded_entropy_check(chain: &MarkovChain, f: &[f64], phi: &GrowthFunction) -> Result<InequalityReport> {
    let sup = phi.phi_infinity().ok_or(Error::NonIntegrableGrowth)?;
    let ent = entropy(chain, f)?;
    let l1 = mean(chain, f);
    let rhs = sup * l1;
    Ok(InequalityReport::new(
        InequalityKind::BoundedEntropy,
        vec![SlackPoint::new("bounded", sup, rhs - ent, rhs.abs().max(ent.abs()))],
        &[("phi_infinity", sup)],
        f,
    ))
}

/// Partial sums `f(x) = Σ_{j≤x} b(j)^{−1/2}` on a birth-death chain with
/// their Lipschitz seminorm: bounded `Γ(f)` with growing `f` shows that
/// Lipschitz functions need not be bounded.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartialSums {
    pub f: Vec<f64>,
    pub lipschitz: f64,
    pub range: f64,
}

pub fn birth_death_partial_sums(chain: &MarkovChain, death: impl Fn(usize) -> f64) -> PartialSums {
    let mut f = Vec::with_capacity(chain.len());
    let mut acc = 0.0;
    f.push(0.0);
    for x in 1..chain.len() {
        acc += 1.0 / death(x).sqrt();
        f.push(acc);
    }
    PartialSums {
        lipschitz: lipschitz_seminorm(chain, &f),
        range: acc,
        f,
    }
}

/// Resistance distance `ρ(x,y) = max { f(y) − f(x) : Γ(f) ≤ 1 }` with a
/// primal (feasible) value and a dual upper bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResistanceDistance {
    pub x: usize,
    pub y: usize,
    /// Objective of the feasible iterate: a certified lower bound.
    pub value: f64,
    /// Lagrangian dual value: a certified upper bound.
    pub upper: f64,
    pub kkt_residual: f64,
    pub converged: bool,
    pub witness: Vec<f64>,
    pub graph_distance: usize,
    /// `dist(x,y) ≤ √(M_{1,sup}/2) ρ(x,y)`.
    pub comparison_holds: bool,
}

struct Constraint {
    z: usize,
    nbrs: Vec<(usize, f64)>,
}

impl Constraint {
    fn value(&self, f: &[f64]) -> f64 {
        0.5 * self.nbrs.iter().map(|&(w, k)| k * (f[w] - f[self.z]).powi(2)).sum::<f64>()
    }

    /// Gradient `Q_z f` in full coordinates.
    fn grad(&self, f: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for &(w, k) in &self.nbrs {
            let d = k * (f[w] - f[self.z]);
            out[w] += d;
            out[self.z] -= d;
        }
    }

    /// Adds `weight · Q_z` in full coordinates.
    fn add_hessian(&self, weight: f64, h: &mut DMatrix<f64>) {
        for &(w, k) in &self.nbrs {
            let v = weight * k;
            h[(w, w)] += v;
            h[(self.z, self.z)] += v;
            h[(w, self.z)] -= v;
            h[(self.z, w)] -= v;
        }
    }
}

fn reduce(full: &DMatrix<f64>, keep: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(keep.len(), keep.len(), |i, j| full[(keep[i], keep[j])])
}

/// Stationarity plus complementarity of `(f, λ)`.
fn kkt_of(cons: &[Constraint], lambda: &[f64], f: &[f64], keep: &[usize], c: &DVector<f64>) -> f64 {
    let n = f.len();
    let mut q = DMatrix::<f64>::zeros(n, n);
    for (con, &l) in cons.iter().zip(lambda) {
        if l != 0.0 {
            con.add_hessian(l, &mut q);
        }
    }
    let fr = DVector::from_iterator(keep.len(), keep.iter().map(|&i| f[i]));
    let stationarity = (c - reduce(&q, keep) * fr).amax();
    let complementarity = cons
        .iter()
        .zip(lambda)
        .map(|(con, l)| (l * (1.0 - con.value(f))).abs())
        .fold(0.0, f64::max);
    stationarity + complementarity
}

/// Multipliers re-fitted by least squares on the nearly active constraints;
/// the barrier estimate `1/(t(1 − g))` is ill-conditioned near the boundary.
fn refined_multipliers(cons: &[Constraint], f: &[f64], keep: &[usize], c: &DVector<f64>) -> Option<Vec<f64>> {
    let active: Vec<usize> = (0..cons.len()).filter(|&z| cons[z].value(f) > 1.0 - 1e-6).collect();
    if active.is_empty() {
        return None;
    }
    let mut buf = vec![0.0; f.len()];
    let mut a = DMatrix::<f64>::zeros(keep.len(), active.len());
    for (j, &z) in active.iter().enumerate() {
        cons[z].grad(f, &mut buf);
        for (i, &v) in keep.iter().enumerate() {
            a[(i, j)] = buf[v];
        }
    }
    let sol = a.clone().svd(true, true).solve(c, 1e-14).ok()?;
    let mut lambda = vec![0.0; cons.len()];
    for (j, &z) in active.iter().enumerate() {
        lambda[z] = sol[j].max(0.0);
    }
    Some(lambda)
}

/// Newton on the equality KKT system of the nearly active constraints:
/// `Σ λ_z Q_z f = c`, `g_z(f) = 1`. Returns a rescaled (hence feasible)
/// iterate and clamped multipliers, or `None` if the system is singular.
fn polish_active_set(
    cons: &[Constraint],
    f: &[f64],
    lambda: &[f64],
    keep: &[usize],
    c: &DVector<f64>,
) -> Option<(Vec<f64>, Vec<f64>)> {
    let active: Vec<usize> = (0..cons.len()).filter(|&z| cons[z].value(f) > 1.0 - 1e-4).collect();
    if active.is_empty() {
        return None;
    }
    let (k, a) = (keep.len(), active.len());
    let mut f = f.to_vec();
    let mut lam: Vec<f64> = active.iter().map(|&z| lambda[z]).collect();
    let mut buf = vec![0.0; f.len()];
    for _ in 0..30 {
        let mut q = DMatrix::<f64>::zeros(f.len(), f.len());
        for (j, &z) in active.iter().enumerate() {
            cons[z].add_hessian(lam[j], &mut q);
        }
        let qr = reduce(&q, keep);
        let fr = DVector::from_iterator(k, keep.iter().map(|&i| f[i]));
        let mut jac = DMatrix::<f64>::zeros(k + a, k + a);
        let mut rhs = DVector::<f64>::zeros(k + a);
        jac.view_mut((0, 0), (k, k)).copy_from(&qr);
        let stat = &qr * &fr - c;
        rhs.rows_mut(0, k).copy_from(&(-&stat));
        for (j, &z) in active.iter().enumerate() {
            cons[z].grad(&f, &mut buf);
            for (i, &v) in keep.iter().enumerate() {
                jac[(i, k + j)] = buf[v];
                jac[(k + j, i)] = buf[v];
            }
            rhs[k + j] = 1.0 - cons[z].value(&f);
        }
        let step = jac.svd(true, true).solve(&rhs, 1e-13).ok()?;
        for (i, &v) in keep.iter().enumerate() {
            f[v] += step[i];
        }
        for j in 0..a {
            lam[j] += step[k + j];
        }
        if step.amax() < 1e-15 {
            break;
        }
    }
    // negative multipliers are clamped; the caller re-measures the KKT residual
    if lam.iter().chain(&f).any(|v| !v.is_finite()) {
        return None;
    }
    let worst = cons.iter().map(|con| con.value(&f)).fold(0.0, f64::max);
    let scale = if worst > 1.0 { 1.0 / worst.sqrt() } else { 1.0 };
    f.iter_mut().for_each(|v| *v *= scale);
    let mut full = vec![0.0; cons.len()];
    for (j, &z) in active.iter().enumerate() {
        full[z] = lam[j].max(0.0);
    }
    Some((f, full))
}

/// Primal point `Q_λ⁻¹c` recovered from multipliers, rescaled to be
/// feasible with `λ` rescaled inversely so stationarity stays exact.
fn primal_from_dual(
    cons: &[Constraint],
    lambda: &[f64],
    keep: &[usize],
    c: &DVector<f64>,
    n: usize,
) -> Option<(Vec<f64>, Vec<f64>)> {
    let mut q = DMatrix::<f64>::zeros(n, n);
    for (con, &l) in cons.iter().zip(lambda) {
        con.add_hessian(l, &mut q);
    }
    let sol = reduce(&q, keep).cholesky()?.solve(c);
    let mut f = vec![0.0; n];
    for (i, &v) in keep.iter().enumerate() {
        f[v] = sol[i];
    }
    let worst = cons.iter().map(|con| con.value(&f)).fold(0.0, f64::max);
    if !(worst > 0.0) || !worst.is_finite() {
        return None;
    }
    let s = 1.0 / worst.sqrt();
    f.iter_mut().for_each(|v| *v *= s);
    Some((f, lambda.iter().map(|l| l / s).collect()))
}

/// Lagrangian dual `Σλ + ½cᵀQ_λ⁻¹c`; an upper bound for every `λ ≥ 0`.
fn dual_value(cons: &[Constraint], lambda: &[f64], keep: &[usize], c: &DVector<f64>) -> f64 {
    let n = lambda.len();
    let mut q = DMatrix::<f64>::zeros(n, n);
    for (con, &l) in cons.iter().zip(lambda) {
        con.add_hessian(l, &mut q);
    }
    match reduce(&q, keep).cholesky() {
        Some(ch) => lambda.iter().sum::<f64>() + 0.5 * c.dot(&ch.solve(c)),
        None => f64::INFINITY,
    }
}

/// Log-barrier interior-point solve of the resistance program.
pub fn resistance_distance(chain: &MarkovChain, x: usize, y: usize) -> Result<ResistanceDistance> {
    let n = chain.len();
    if x >= n || y >= n {
        return Err(Error::UnknownState(format!("{}", x.max(y))));
    }
    let graph_distance = chain.graph_distances(x)[y];
    let m1_sup = chain.local_stats().m1_sup;
    if x == y {
        return Ok(ResistanceDistance {
            x,
            y,
            value: 0.0,
            upper: 0.0,
            kkt_residual: 0.0,
            converged: true,
            witness: vec![0.0; n],
            graph_distance,
            comparison_holds: true,
        });
    }
    let cons: Vec<Constraint> = (0..n)
        .map(|z| Constraint {
            z,
            nbrs: chain.neighbors(z).to_vec(),
        })
        .collect();
    let keep: Vec<usize> = (0..n).filter(|&v| v != x).collect();
    let m = n as f64;
    let mut f = vec![0.0; n];
    let mut t = 1.0;
    let mut grad_buf = vec![0.0; n];

    let barrier = |f: &[f64], t: f64| -> f64 {
        let mut v = -t * f[y];
        for c in &cons {
            let g = c.value(f);
            if g >= 1.0 {
                return f64::INFINITY;
            }
            v -= (1.0 - g).ln();
        }
        v
    };

    for _outer in 0..60 {
        // centering by damped Newton
        for _ in 0..200 {
            let mut grad = vec![0.0; n];
            grad[y] -= t;
            let mut hess = DMatrix::<f64>::zeros(n, n);
            for c in &cons {
                let s = 1.0 - c.value(&f);
                c.grad(&f, &mut grad_buf);
                for (g, d) in grad.iter_mut().zip(&grad_buf) {
                    *g += d / s;
                }
                c.add_hessian(1.0 / s, &mut hess);
                let gv = DVector::from_column_slice(&grad_buf);
                hess += (&gv * gv.transpose()) / (s * s);
            }
            let hr = reduce(&hess, &keep);
            let gr = DVector::from_iterator(keep.len(), keep.iter().map(|&i| grad[i]));
            let Some(chol) = hr.clone().cholesky() else {
                return Err(Error::SolverNotConverged {
                    lower: f[y],
                    upper: f64::INFINITY,
                });
            };
            let step = chol.solve(&(-&gr));
            let decrement = -gr.dot(&step);
            if decrement / 2.0 < 1e-13 {
                break;
            }
            let phi0 = barrier(&f, t);
            let mut s = 1.0;
            loop {
                let mut trial = f.clone();
                for (i, &v) in keep.iter().enumerate() {
                    trial[v] += s * step[i];
                }
                let val = barrier(&trial, t);
                if val <= phi0 - 0.25 * s * decrement {
                    f = trial;
                    break;
                }
                s *= 0.5;
                if s < 1e-16 {
                    break;
                }
            }
            if s < 1e-16 {
                break;
            }
        }
        if m / t < 1e-10 {
            break;
        }
        t *= 10.0;
    }

    // dual certificates: barrier λ_z = 1/(t(1 − g_z)) and a least-squares refit
    let lambda: Vec<f64> = cons.iter().map(|c| 1.0 / (t * (1.0 - c.value(&f)))).collect();
    let mut cvec = DVector::zeros(keep.len());
    let yi = keep.iter().position(|&v| v == y).expect("y ≠ x");
    cvec[yi] = 1.0;
    let mut upper = dual_value(&cons, &lambda, &keep, &cvec);
    let mut kkt = kkt_of(&cons, &lambda, &f, &keep, &cvec);
    if let Some(mut refit) = refined_multipliers(&cons, &f, &keep, &cvec) {
        kkt = kkt.min(kkt_of(&cons, &refit, &f, &keep, &cvec));
        // a tiny floor keeps Q_λ invertible; it costs at most n·1e-12 in the bound
        refit.iter_mut().for_each(|l| *l += 1e-12);
        upper = upper.min(dual_value(&cons, &refit, &keep, &cvec));
    }
    if let Some((pf, pl)) = polish_active_set(&cons, &f, &lambda, &keep, &cvec) {
        let pk = kkt_of(&cons, &pl, &pf, &keep, &cvec);
        if pk < kkt && pf[y] >= f[y] {
            kkt = pk;
            f = pf;
            let mut floored = pl;
            floored.iter_mut().for_each(|l| *l += 1e-12);
            upper = upper.min(dual_value(&cons, &floored, &keep, &cvec));
        }
    }
    if let Some((df, dl)) = primal_from_dual(&cons, &lambda, &keep, &cvec, n) {
        let dk = kkt_of(&cons, &dl, &df, &keep, &cvec);
        if dk < kkt && df[y] >= f[y] - 1e-9 * (1.0 + f[y].abs()) {
            kkt = dk;
            f = df;
        }
    }
    let infeasibility = cons.iter().map(|c| (c.value(&f) - 1.0).max(0.0)).fold(0.0, f64::max);
    let kkt = infeasibility + kkt;
    let value = f[y] - f[x];
    let converged = kkt < 1e-6 && upper - value <= 1e-8 * (1.0 + value.abs());
    if !converged {
        return Err(Error::SolverNotConverged { lower: value, upper });
    }
    Ok(ResistanceDistance {
        x,
        y,
        value,
        upper,
        kkt_residual: kkt,
        converged,
        comparison_holds: graph_distance as f64 <= (m1_sup / 2.0).sqrt() * value * (1.0 + 1e-9),
        witness: f,
        graph_distance,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResistanceDiameter {
    pub value: f64,
    pub upper: f64,
    pub pair: (usize, usize),
    /// Symmetric matrix of pairwise distances (row-major).
    pub distances: Vec<Vec<f64>>,
    pub comparison_holds: bool,
}

/// Maximum of [`resistance_distance`] over all pairs, computed in parallel.
pub fn resistance_diameter(chain: &MarkovChain) -> Result<ResistanceDiameter> {
    let n = chain.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
    let results: Vec<ResistanceDistance> = pairs
        .par_iter()
        .map(|&(a, b)| resistance_distance(chain, a, b))
        .collect::<Result<_>>()?;
    let mut distances = vec![vec![0.0; n]; n];
    let mut best = (0.0, 0.0, (0, 0));
    let mut comparison_holds = true;
    for r in &results {
        distances[r.x][r.y] = r.value;
        distances[r.y][r.x] = r.value;
        comparison_holds &= r.comparison_holds;
        if r.value > best.0 {
            best = (r.value, r.upper, (r.x, r.y));
        }
    }
    Ok(ResistanceDiameter {
        value: best.0,
        upper: best.1,
        pair: best.2,
        distances,
        comparison_holds,
    })
}
