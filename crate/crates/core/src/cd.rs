//! Curvature-dimension conditions `Ψ_{2,Υ}(f) ≥ κΨ_Υ(f) + F₀(−Lf)`:
//! pointwise slack, randomized falsification, curvature and dimension
//! estimates, Jensen-type certificates, spike-function negative criteria and
//! the neighbourhood-map check for Ricci-flat graphs.
//!
//! Falsifications are certificates (an explicit `f` is returned); passing a
//! sampling run or an optimizer estimate is only evidence.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::MarkovChain;
use crate::error::{Error, Result};
use crate::operators::{
    generator_at, nu, nu_prime, psi2_at, psi_at, upsilon, upsilon_prime, ScalarKernel,
    StateFunction,
};
use crate::optimize::{grid_then_golden, nelder_mead};

/// Dimension term `F` of a curvature-dimension condition. Evaluation applies
/// the trivial extension: `F₀(r) = 0` for `r ≤ 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CdFunction {
    /// `F ≡ 0`, i.e. infinite dimension.
    Zero,
    /// `F(r) = r^{1+δ}/n`.
    Power { n: f64, delta: f64 },
    /// `F(r) = out_scale · ν_{c,d}(−r/arg_scale)`.
    Nu {
        out_scale: f64,
        c: f64,
        d: f64,
        arg_scale: f64,
    },
    /// Piecewise-linear through `(0,0)` and the samples; power-law tail
    /// beyond the last grid point with the exponent of the last two samples.
    Tabulated { grid: Vec<f64>, values: Vec<f64> },
}

impl CdFunction {
    /// Validates parameters.
    pub fn validate(&self) -> Result<()> {
        match self {
            CdFunction::Zero => Ok(()),
            CdFunction::Power { n, delta } => {
                if !(*n > 0.0) || !(*delta >= 1.0) {
                    return Err(Error::BadParams(format!(
                        "power CD-function needs n > 0 and delta >= 1 (got n={n}, delta={delta})"
                    )));
                }
                Ok(())
            }
            CdFunction::Nu {
                out_scale,
                arg_scale,
                ..
            } => {
                if !(*out_scale > 0.0) || !(*arg_scale > 0.0) {
                    return Err(Error::BadParams("nu CD-function needs positive scales".into()));
                }
                Ok(())
            }
            CdFunction::Tabulated { grid, values } => {
                if grid.len() != values.len() || grid.len() < 2 {
                    return Err(Error::BadParams(
                        "tabulated CD-function needs at least two (grid, value) pairs".into(),
                    ));
                }
                if grid[0] <= 0.0 || grid.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::BadParams(
                        "tabulated grid must be positive and strictly increasing".into(),
                    ));
                }
                if values.iter().any(|&v| !(v > 0.0)) {
                    return Err(Error::BadParams("tabulated values must be positive".into()));
                }
                Ok(())
            }
        }
    }

    fn tail_exponent(grid: &[f64], values: &[f64]) -> f64 {
        let k = grid.len();
        (values[k - 1] / values[k - 2]).ln() / (grid[k - 1] / grid[k - 2]).ln()
    }

    /// `F₀(r)`.
    pub fn eval(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        match self {
            CdFunction::Zero => 0.0,
            CdFunction::Power { n, delta } => r.powf(1.0 + delta) / n,
            CdFunction::Nu {
                out_scale,
                c,
                d,
                arg_scale,
            } => out_scale * nu(*c, *d, -r / arg_scale),
            CdFunction::Tabulated { grid, values } => {
                let k = grid.len();
                if r >= grid[k - 1] {
                    let p = Self::tail_exponent(grid, values);
                    return values[k - 1] * (r / grid[k - 1]).powf(p);
                }
                let (x0, y0, x1, y1) = match grid.iter().position(|&g| g > r) {
                    Some(0) => (0.0, 0.0, grid[0], values[0]),
                    Some(i) => (grid[i - 1], values[i - 1], grid[i], values[i]),
                    None => unreachable!(),
                };
                y0 + (y1 - y0) * (r - x0) / (x1 - x0)
            }
        }
    }

    /// `F′(r)` for `r > 0` (one-sided slopes for tabulated data).
    pub fn derivative(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        match self {
            CdFunction::Zero => 0.0,
            CdFunction::Power { n, delta } => (1.0 + delta) * r.powf(*delta) / n,
            CdFunction::Nu {
                out_scale,
                c,
                d,
                arg_scale,
            } => -out_scale / arg_scale * nu_prime(*c, *d, -r / arg_scale),
            CdFunction::Tabulated { grid, values } => {
                let k = grid.len();
                if r >= grid[k - 1] {
                    let p = Self::tail_exponent(grid, values);
                    return p * self.eval(r) / r;
                }
                match grid.iter().position(|&g| g > r) {
                    Some(0) => values[0] / grid[0],
                    Some(i) => (values[i] - values[i - 1]) / (grid[i] - grid[i - 1]),
                    None => unreachable!(),
                }
            }
        }
    }

    /// Power-law exponent `1+δ` when `F` is exactly a power.
    pub fn power_delta(&self) -> Option<f64> {
        match self {
            CdFunction::Power { delta, .. } => Some(*delta),
            _ => None,
        }
    }

    /// Checks the defining properties of a CD-function on a grid; points
    /// where `F` overflows are skipped.
    pub fn check_properties(&self, grid: &[f64]) -> CdFunctionCheck {
        let grid: Vec<f64> = grid.iter().copied().filter(|&r| self.eval(r).is_finite()).collect();
        let grid = grid.as_slice();
        let vals: Vec<f64> = grid.iter().map(|&r| self.eval(r)).collect();
        let nonneg = vals.iter().all(|&v| v >= 0.0);
        let ratio_increasing = match self {
            CdFunction::Zero => false,
            _ => grid
                .windows(2)
                .zip(vals.windows(2))
                .all(|(g, v)| v[1] / g[1] > v[0] / g[0]),
        };
        let convex = grid.windows(3).all(|g| {
            let (a, b, c) = (g[0], g[1], g[2]);
            let fb = self.eval(b);
            let interp = self.eval(a) + (self.eval(c) - self.eval(a)) * (b - a) / (c - a);
            fb <= interp * (1.0 + 1e-12) + 1e-300
        });
        let tail_integrable = match self {
            CdFunction::Zero => false,
            CdFunction::Power { delta, .. } => *delta > 0.0,
            CdFunction::Nu { .. } => true,
            CdFunction::Tabulated { grid, values } => Self::tail_exponent(grid, values) > 1.0,
        };
        let growth_exponent_min = grid
            .iter()
            .map(|&r| self.derivative(r) * r / self.eval(r))
            .filter(|v| v.is_finite())
            .fold(f64::INFINITY, f64::min);
        CdFunctionCheck {
            zero_at_origin: self.eval(0.0) == 0.0,
            nonnegative: nonneg,
            ratio_increasing,
            tail_integrable,
            convex,
            growth_exponent_min,
        }
    }
}

/// Logarithmic grid with `count` points over `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CdFunctionCheck {
    pub zero_at_origin: bool,
    pub nonnegative: bool,
    pub ratio_increasing: bool,
    pub tail_integrable: bool,
    pub convex: bool,
    /// `min F′(r)r/F(r)` over the grid; `1+δ` for the growth condition.
    pub growth_exponent_min: f64,
}

impl CdFunctionCheck {
    pub fn is_cd_function(&self) -> bool {
        self.zero_at_origin && self.nonnegative && self.ratio_increasing && self.tail_integrable
    }
}

/// The three terms of the CD inequality at one state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlackTerms {
    pub psi2: f64,
    pub curvature: f64,
    pub dimension: f64,
    pub slack: f64,
}

impl SlackTerms {
    /// Roundoff-aware violation test: `slack < −tol·(1 + Σ|terms|)`.
    pub fn violates(&self, tol: f64) -> bool {
        self.slack < -tol * (1.0 + self.psi2.abs() + self.curvature.abs() + self.dimension.abs())
    }
}

pub fn cd_slack_terms(
    chain: &MarkovChain,
    x: usize,
    f: &[f64],
    kappa: f64,
    big_f: &CdFunction,
) -> SlackTerms {
    let psi2 = psi2_at(chain, f, &ScalarKernel::Upsilon, x);
    let curvature = kappa * psi_at(chain, f, &ScalarKernel::Upsilon, x);
    let dimension = big_f.eval(-generator_at(chain, f, x));
    SlackTerms {
        psi2,
        curvature,
        dimension,
        slack: psi2 - curvature - dimension,
    }
}

/// `Ψ_{2,Υ}(f)(x) − κΨ_Υ(f)(x) − F₀(−Lf(x))`.
pub fn cd_slack(chain: &MarkovChain, x: usize, f: &[f64], kappa: f64, big_f: &CdFunction) -> f64 {
    cd_slack_terms(chain, x, f, kappa, big_f).slack
}

/// Shapes of random test functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleFamily {
    /// i.i.d. centred Gaussian values.
    Gaussian,
    /// `f = t` off one random state, `0` there.
    Spike,
    /// Gaussian amplitude times the indicator of a random subset.
    Indicator,
    /// Constant functions (sanity baseline).
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub scales: Vec<f64>,
    pub families: Vec<SampleFamily>,
    /// Relative tolerance in the violation test.
    pub tolerance: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            scales: vec![0.1, 1.0, 10.0],
            families: vec![
                SampleFamily::Gaussian,
                SampleFamily::Spike,
                SampleFamily::Indicator,
            ],
            tolerance: 1e-8,
        }
    }
}

/// Per-trial RNG derived from a root seed; independent of scheduling.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Draws one test function of the given family and scale.
pub fn sample_function(n: usize, family: SampleFamily, scale: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    match family {
        SampleFamily::Gaussian => (0..n).map(|_| scale * gaussian(rng)).collect(),
        SampleFamily::Spike => {
            let x = rng.random_range(0..n);
            let t = scale * gaussian(rng);
            (0..n).map(|y| if y == x { 0.0 } else { t }).collect()
        }
        SampleFamily::Indicator => {
            let a = scale * gaussian(rng);
            (0..n).map(|_| if rng.random_bool(0.5) { a } else { 0.0 }).collect()
        }
        SampleFamily::Constant => vec![scale * gaussian(rng); n],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CdStatus {
    CertifiedByFamily,
    Falsified,
    PassedSampling,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub state: String,
    pub state_index: usize,
    pub f: StateFunction,
    pub terms: SlackTerms,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CdVerdict {
    pub status: CdStatus,
    pub worst_slack: f64,
    /// Worst case found; always present when falsified.
    pub witness: Option<Witness>,
    pub trials: u64,
    pub seed: u64,
    /// Set when the chain is a truncation of an infinite chain.
    pub heuristic: bool,
}

#[derive(Clone)]
struct TrialWorst {
    trial: u64,
    state: usize,
    terms: SlackTerms,
    violated: bool,
    f: Vec<f64>,
}

fn better(a: TrialWorst, b: TrialWorst) -> TrialWorst {
    // violations first, then lowest slack, then lowest trial index
    let key = |t: &TrialWorst| (!t.violated, t.terms.slack, t.trial);
    let (ka, kb) = (key(&a), key(&b));
    match ka.0.cmp(&kb.0) {
        std::cmp::Ordering::Less => a,
        std::cmp::Ordering::Greater => b,
        std::cmp::Ordering::Equal => match ka.1.total_cmp(&kb.1) {
            std::cmp::Ordering::Less => a,
            std::cmp::Ordering::Greater => b,
            std::cmp::Ordering::Equal => {
                if ka.2 <= kb.2 {
                    a
                } else {
                    b
                }
            }
        },
    }
}

/// Randomized search for violations of `CD_Υ(κ,F)` at every state.
pub fn verify_cd_random(
    chain: &MarkovChain,
    kappa: f64,
    big_f: &CdFunction,
    trials: u64,
    seed: u64,
    cfg: &SamplerConfig,
) -> CdVerdict {
    let n = chain.len();
    let fams = if cfg.families.is_empty() {
        vec![SampleFamily::Gaussian]
    } else {
        cfg.families.clone()
    };
    let scales = if cfg.scales.is_empty() {
        vec![1.0]
    } else {
        cfg.scales.clone()
    };
    let worst = (0..trials.max(1))
        .into_par_iter()
        .map(|trial| {
            let mut rng = trial_rng(seed, trial);
            let fam = fams[(trial as usize) % fams.len()];
            let scale = scales[(trial as usize / fams.len()) % scales.len()];
            let f = sample_function(n, fam, scale, &mut rng);
            let mut best: Option<(usize, SlackTerms, bool)> = None;
            for x in 0..n {
                let terms = cd_slack_terms(chain, x, &f, kappa, big_f);
                let v = terms.violates(cfg.tolerance);
                let replace = match &best {
                    None => true,
                    Some((_, t, bv)) => (v && !bv) || (v == *bv && terms.slack < t.slack),
                };
                if replace {
                    best = Some((x, terms, v));
                }
            }
            let (state, terms, violated) = best.expect("chain has states");
            TrialWorst {
                trial,
                state,
                terms,
                violated,
                f,
            }
        })
        .reduce_with(better)
        .expect("at least one trial");
    CdVerdict {
        status: if worst.violated {
            CdStatus::Falsified
        } else {
            CdStatus::PassedSampling
        },
        worst_slack: worst.terms.slack,
        witness: Some(Witness {
            state: chain.label(worst.state).to_string(),
            state_index: worst.state,
            f: worst.f.into(),
            terms: worst.terms,
        }),
        trials: trials.max(1),
        seed,
        heuristic: chain.is_truncated(),
    }
}

/// Which curvature operator pair to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurvatureVariant {
    /// `Ψ_{2,Υ}/Ψ_Υ`.
    Upsilon,
    /// `Γ₂/Γ`.
    BakryEmery,
}

/// Multi-start local search settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub scales: Vec<f64>,
    pub starts_per_scale: usize,
    pub max_evals: usize,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            scales: vec![0.1, 1.0, 10.0],
            starts_per_scale: 4,
            max_evals: 4000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvatureEstimate {
    /// Smallest ratio found; every admissible `κ` is at most this value.
    pub value: f64,
    pub witness: StateFunction,
    pub evaluations: usize,
    pub heuristic: bool,
}

/// Minimizes `objective` over functions supported on the 2-ball of `x` with
/// `f(x) = 0`, from several random starts. Returns the best value and `f`.
fn search_two_ball(
    chain: &MarkovChain,
    x: usize,
    cfg: &SearchConfig,
    objective: &(dyn Fn(&[f64]) -> f64 + Sync),
    prepare_start: &(dyn Fn(&mut Vec<f64>) + Sync),
) -> Result<(f64, Vec<f64>, usize)> {
    if chain.neighbors(x).is_empty() {
        return Err(Error::DegenerateNeighborhood(x));
    }
    let ball = chain.two_ball(x);
    let vars: Vec<usize> = ball[1..].to_vec();
    let n = chain.len();
    let embed = |v: &[f64]| {
        let mut f = vec![0.0; n];
        for (&s, &val) in vars.iter().zip(v) {
            f[s] = val;
        }
        f
    };
    let jobs: Vec<(usize, f64)> = cfg
        .scales
        .iter()
        .flat_map(|&s| (0..cfg.starts_per_scale.max(1)).map(move |i| (i, s)))
        .collect();
    let results: Vec<(f64, Vec<f64>, usize)> = jobs
        .par_iter()
        .enumerate()
        .map(|(job, &(_, scale))| {
            let mut rng = trial_rng(cfg.seed, job as u64);
            let mut f = embed(&(0..vars.len()).map(|_| scale * gaussian(&mut rng)).collect::<Vec<_>>());
            prepare_start(&mut f);
            let start: Vec<f64> = vars.iter().map(|&s| f[s]).collect();
            let obj = |v: &[f64]| objective(&embed(v));
            let m = nelder_mead(&obj, &start, 0.5 * scale, cfg.max_evals, 1e-14);
            (m.value, embed(&m.x), m.evaluations)
        })
        .collect();
    let evals = results.iter().map(|r| r.2).sum();
    let (value, f, _) = results
        .into_iter()
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .expect("at least one start");
    Ok((value, f, evals))
}

/// Estimates the best curvature constant at `x` by minimizing
/// `Ψ_{2,Υ}/Ψ_Υ` (or `Γ₂/Γ`) over functions on the 2-ball of `x`.
///
/// The returned value is the smallest ratio actually evaluated, so it is a
/// certified upper bound for any valid `κ`; as an estimate of the optimum it
/// is heuristic.
pub fn estimate_kappa_infty(
    chain: &MarkovChain,
    x: usize,
    variant: CurvatureVariant,
    cfg: &SearchConfig,
) -> Result<CurvatureEstimate> {
    let kernel = match variant {
        CurvatureVariant::Upsilon => ScalarKernel::Upsilon,
        CurvatureVariant::BakryEmery => ScalarKernel::Square,
    };
    let objective = |f: &[f64]| {
        let denom = psi_at(chain, f, &kernel, x);
        if !(denom > 1e-300) {
            return f64::INFINITY;
        }
        psi2_at(chain, f, &kernel, x) / denom
    };
    let (mut value, mut f, mut evals) = search_two_ball(chain, x, cfg, &objective, &|_| {})?;
    // A single free variable is cheap to scan densely as well.
    if chain.two_ball(x).len() == 2 {
        let y = chain.two_ball(x)[1];
        let n = chain.len();
        let line = |t: f64| {
            let mut g = vec![0.0; n];
            g[y] = t;
            objective(&g)
        };
        for (lo, hi) in [(-20.0, -1e-6), (1e-6, 20.0)] {
            let (t, v) = grid_then_golden(&line, lo, hi, 4001);
            evals += 4001;
            if v < value {
                value = v;
                f = vec![0.0; n];
                f[y] = t;
            }
        }
    }
    Ok(CurvatureEstimate {
        value,
        witness: f.into(),
        evaluations: evals,
        heuristic: chain.is_truncated(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DimensionEstimate {
    /// Supremum estimate of `(−Lf)^{1+δ} / (Ψ_{2,Υ} − κΨ_Υ)`; `+∞` when
    /// some admissible `f` makes the denominator non-positive.
    pub value: f64,
    pub infinite: bool,
    pub witness: StateFunction,
    pub heuristic: bool,
}

/// Estimates the smallest `n` with `CD_Υ(κ, r^{1+δ}/n)` at `x` by searching
/// functions on the 2-ball of `x` with `−Lf(x) > 0`.
pub fn estimate_dimension(
    chain: &MarkovChain,
    x: usize,
    kappa: f64,
    delta: f64,
    cfg: &SearchConfig,
) -> Result<DimensionEstimate> {
    let objective = |f: &[f64]| {
        let drift = -generator_at(chain, f, x);
        if !(drift > 1e-12) {
            return f64::INFINITY;
        }
        let num = psi2_at(chain, f, &ScalarKernel::Upsilon, x)
            - kappa * psi_at(chain, f, &ScalarKernel::Upsilon, x);
        num / drift.powf(1.0 + delta)
    };
    let flip = |f: &mut Vec<f64>| {
        if generator_at(chain, f, x) > 0.0 {
            f.iter_mut().for_each(|v| *v = -*v);
        }
    };
    let (value, f, _) = search_two_ball(chain, x, cfg, &objective, &flip)?;
    Ok(dimension_from_min(value, f, chain.is_truncated()))
}

fn dimension_from_min(min_ratio: f64, f: Vec<f64>, heuristic: bool) -> DimensionEstimate {
    let infinite = min_ratio <= 0.0;
    DimensionEstimate {
        value: if infinite { f64::INFINITY } else { 1.0 / min_ratio },
        infinite,
        witness: f.into(),
        heuristic,
    }
}

/// Dimension estimate at `x` of a birth-death chain from the one-parameter
/// probe `f(x−1) = s`, `f(x−2) = 2s`, zero elsewhere, minimized over `s < 0`.
pub fn birth_death_probe_dimension(
    chain: &MarkovChain,
    x: usize,
    kappa: f64,
    delta: f64,
) -> Result<DimensionEstimate> {
    if x < 2 || x >= chain.len() {
        return Err(Error::Precondition(format!(
            "probe needs 2 <= x < {} (got {x})",
            chain.len()
        )));
    }
    let n = chain.len();
    let probe = |s: f64| {
        let mut f = vec![0.0; n];
        f[x - 1] = s;
        f[x - 2] = 2.0 * s;
        f
    };
    let ratio = |s: f64| {
        let f = probe(s);
        let drift = -generator_at(chain, &f, x);
        let num = psi2_at(chain, &f, &ScalarKernel::Upsilon, x)
            - kappa * psi_at(chain, &f, &ScalarKernel::Upsilon, x);
        num / drift.powf(1.0 + delta)
    };
    let (s, v) = grid_then_golden(&ratio, -20.0, -1e-3, 2001);
    Ok(dimension_from_min(v, probe(s), chain.is_truncated()))
}

/// `2Ψ_{2,Υ}(f)(x)` for the probe above, written out for a birth-death chain
/// with birth rates `a` and death rates `b`.
pub fn birth_death_probe_closed_form(a: &dyn Fn(usize) -> f64, b: &dyn Fn(usize) -> f64, x: usize, s: f64) -> f64 {
    b(x) * (upsilon(s) * (b(x - 1) - b(x) - a(x))
        + upsilon(-s) * a(x - 1)
        + upsilon_prime(s) * s * (a(x - 1) + b(x) - b(x - 1)))
}

/// Optimal `c_δ` in `Υ(r) + Υ(−r) ≥ c_δ |r|^{1+δ}`; `c₁ = 1` exactly.
pub fn c_delta(delta: f64) -> f64 {
    if delta == 1.0 {
        return 1.0;
    }
    let h = |u: f64| {
        let r = u.exp();
        (upsilon(r) + upsilon(-r)) / r.powf(1.0 + delta)
    };
    grid_then_golden(&h, -12.0, 6.0, 3601).1
}

/// The convex comparison function `γ` of the Jensen criterion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GammaKernel {
    /// `γ(r) = coef · |r|^exponent`.
    Power { coef: f64, exponent: f64 },
    /// `γ(r) = ν_{c,d}(−r)`.
    Nu { c: f64, d: f64 },
}

impl GammaKernel {
    pub fn eval(&self, r: f64) -> f64 {
        match self {
            GammaKernel::Power { coef, exponent } => coef * r.abs().powf(*exponent),
            GammaKernel::Nu { c, d } => nu(*c, *d, -r),
        }
    }
}

/// Worst slack of `Ψ_{2,Υ} ≥ κΨ_Υ + α(x) Σ_y k(x,y) γ(f(x) − f(y))` over
/// random functions; non-negative values support the Jensen criterion.
pub fn jensen_premise_slack(
    chain: &MarkovChain,
    kappa: f64,
    gamma: GammaKernel,
    alpha: &[f64],
    trials: u64,
    seed: u64,
) -> f64 {
    let cfg = SamplerConfig::default();
    let n = chain.len();
    (0..trials.max(1))
        .into_par_iter()
        .map(|trial| {
            let mut rng = trial_rng(seed, trial);
            let fam = cfg.families[(trial as usize) % cfg.families.len()];
            let scale = cfg.scales[(trial as usize / cfg.families.len()) % cfg.scales.len()];
            let f = sample_function(n, fam, scale, &mut rng);
            (0..n)
                .map(|x| {
                    let psi2 = psi2_at(chain, &f, &ScalarKernel::Upsilon, x);
                    let psi = psi_at(chain, &f, &ScalarKernel::Upsilon, x);
                    let g: f64 = chain
                        .neighbors(x)
                        .iter()
                        .map(|&(y, k)| k * gamma.eval(f[x] - f[y]))
                        .sum();
                    let slack = psi2 - kappa * psi - alpha[x] * g;
                    slack / (1.0 + psi2.abs() + (kappa * psi).abs() + (alpha[x] * g).abs())
                })
                .fold(f64::INFINITY, f64::min)
        })
        .reduce(|| f64::INFINITY, f64::min)
}

/// Dimension term from the Jensen criterion:
/// `F(r) = α⋆ M_{1,inf} γ(r / M_{1,sup})` with `α⋆ = min α`.
pub fn jensen_dimension_bound(
    chain: &MarkovChain,
    gamma: GammaKernel,
    alpha: &[f64],
) -> Result<CdFunction> {
    if alpha.len() != chain.len() {
        return Err(Error::LengthMismatch {
            expected: chain.len(),
            got: alpha.len(),
        });
    }
    let stats = chain.local_stats();
    if !stats.m1_sup.is_finite() {
        return Err(Error::UnboundedM1);
    }
    let a_star = alpha.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(a_star > 0.0) {
        return Ok(CdFunction::Zero);
    }
    let scale = a_star * stats.m1_inf;
    Ok(match gamma {
        GammaKernel::Power { coef, exponent } => CdFunction::Power {
            n: stats.m1_sup.powf(exponent) / (scale * coef),
            delta: exponent - 1.0,
        },
        GammaKernel::Nu { c, d } => CdFunction::Nu {
            out_scale: scale,
            c,
            d,
            arg_scale: stats.m1_sup,
        },
    })
}

/// Left side of the spike-function criterion for `CD_Υ(0, n)`:
/// `ρ(Υ′(t)t + Υ(−t)) + Υ′(t)t − Υ(t) − t²/n` with `ρ = N/M₁²`.
pub fn spike_lhs(ratio: f64, t: f64, n: f64) -> f64 {
    let ut = upsilon_prime(t) * t;
    ratio * (ut + upsilon(-t)) + ut - upsilon(t) - t * t / n
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpikeEntry {
    pub state: String,
    /// `N(x)/M₁(x)²`.
    pub ratio: f64,
    pub min_lhs: f64,
    pub argmin_t: f64,
    /// The same quantity from a direct `Ψ_{2,Υ}` evaluation of the spike.
    pub direct_lhs: f64,
    pub violated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NegativeCriterionReport {
    pub target_n: f64,
    pub entries: Vec<SpikeEntry>,
    pub any_violation: bool,
}

/// Evaluates the spike criterion at each listed state, minimizing over `t < 0`.
pub fn negative_criterion(chain: &MarkovChain, states: &[usize], target_n: f64) -> NegativeCriterionReport {
    let stats = chain.local_stats();
    let entries: Vec<SpikeEntry> = states
        .iter()
        .map(|&x| {
            let m1 = stats.m1[x];
            let ratio = stats.n_stat[x] / (m1 * m1);
            let (t, v) = grid_then_golden(&|t| spike_lhs(ratio, t, target_n), -30.0, -1e-6, 6001);
            let mut f = vec![t; chain.len()];
            f[x] = 0.0;
            let direct = 2.0 * psi2_at(chain, &f, &ScalarKernel::Upsilon, x) / (m1 * m1) - t * t / target_n;
            SpikeEntry {
                state: chain.label(x).to_string(),
                ratio,
                min_lhs: v,
                argmin_t: t,
                direct_lhs: direct,
                violated: v < -1e-9 && direct < -1e-9,
            }
        })
        .collect();
    let any_violation = entries.iter().any(|e| e.violated);
    NegativeCriterionReport {
        target_n,
        entries,
        any_violation,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IndicatorProbe {
    pub entropy_closed: f64,
    pub fisher_closed: f64,
    pub entropy_direct: f64,
    pub fisher_direct: f64,
}

/// The density `ε` off `x` and `(1 − ε(1 − π(x)))/π(x)` at `x`.
pub fn indicator_density(chain: &MarkovChain, x: usize, eps: f64) -> Vec<f64> {
    let p = chain.pi()[x];
    let mut f = vec![eps; chain.len()];
    f[x] = (1.0 - eps * (1.0 - p)) / p;
    f
}

/// Entropy and Fisher information of the indicator-like density, both in
/// closed form and through the generic functionals.
pub fn indicator_probe(chain: &MarkovChain, x: usize, eps: f64) -> Result<IndicatorProbe> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Precondition(format!("epsilon must lie in (0,1), got {eps}")));
    }
    let p = chain.pi()[x];
    let m1: f64 = chain.neighbors(x).iter().map(|&(_, r)| r).sum();
    let top = 1.0 - eps * (1.0 - p);
    let entropy_closed = top * (top / p).ln() + eps * eps.ln() * (1.0 - p);
    let fisher_closed = m1 * (1.0 - eps) * (top / (eps * p)).ln();
    let f = indicator_density(chain, x, eps);
    Ok(IndicatorProbe {
        entropy_closed,
        fisher_closed,
        entropy_direct: crate::semigroup::entropy(chain, &f)?,
        fisher_direct: crate::semigroup::fisher_information(chain, &f)?,
    })
}

/// Neighbourhood maps `η_1, …, η_d` on the closed 1-ball around `center`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtaMaps {
    pub center: usize,
    pub maps: Vec<BTreeMap<usize, usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RicciFlatViolation {
    /// Condition number 1–4.
    pub condition: u8,
    pub center: String,
    pub map: usize,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RicciFlatReport {
    pub passed: bool,
    pub first_violation: Option<RicciFlatViolation>,
    pub violations: Vec<RicciFlatViolation>,
}

/// Checks the four neighbourhood-map conditions literally at each center:
/// (i) `η_i(u)` is a neighbour of `u`; (ii) the `η_i(u)` are distinct;
/// (iii) `∪_j η_j(η_i(x)) = ∪_j η_i(η_j(x))`; (iv) `η_i(η_i(x)) = x`.
pub fn ricci_flat_check(chain: &MarkovChain, families: &[EtaMaps]) -> Result<RicciFlatReport> {
    let d = chain.regular_unweighted_degree().ok_or_else(|| {
        Error::Precondition("neighbourhood-map check needs a regular graph with unit rates".into())
    })?;
    let mut violations = Vec::new();
    for fam in families {
        let x = fam.center;
        if x >= chain.len() {
            return Err(Error::MalformedMaps(format!("center {x} out of range")));
        }
        if fam.maps.len() != d {
            return Err(Error::MalformedMaps(format!(
                "expected {d} maps at {}, got {}",
                chain.label(x),
                fam.maps.len()
            )));
        }
        let mut ball: BTreeSet<usize> = chain.neighbors(x).iter().map(|&(y, _)| y).collect();
        ball.insert(x);
        for (i, m) in fam.maps.iter().enumerate() {
            let domain: BTreeSet<usize> = m.keys().copied().collect();
            if domain != ball {
                return Err(Error::MalformedMaps(format!(
                    "map {} at {} is not defined exactly on the closed 1-ball",
                    i + 1,
                    chain.label(x)
                )));
            }
            if m.values().any(|&v| v >= chain.len()) {
                return Err(Error::MalformedMaps(format!("map {} has targets out of range", i + 1)));
            }
        }
        let center = chain.label(x).to_string();
        let push = |v: &mut Vec<RicciFlatViolation>, condition, map: usize, detail: String| {
            v.push(RicciFlatViolation {
                condition,
                center: center.clone(),
                map: map + 1,
                detail,
            })
        };
        for (i, m) in fam.maps.iter().enumerate() {
            for (&u, &v) in m {
                if chain.rate(u, v) <= 0.0 || u == v {
                    push(&mut violations, 1, i, format!("η(u={}) = {} is not a neighbour", chain.label(u), chain.label(v)));
                }
            }
        }
        for &u in &ball {
            let images: Vec<usize> = fam.maps.iter().map(|m| m[&u]).collect();
            for i in 0..d {
                for j in (i + 1)..d {
                    if images[i] == images[j] {
                        push(
                            &mut violations,
                            2,
                            i,
                            format!("maps {} and {} agree at {}", i + 1, j + 1, chain.label(u)),
                        );
                    }
                }
            }
        }
        for (i, mi) in fam.maps.iter().enumerate() {
            let yi = mi[&x];
            let left: BTreeSet<usize> = fam.maps.iter().filter_map(|mj| mj.get(&yi).copied()).collect();
            let right: BTreeSet<usize> = fam.maps.iter().filter_map(|mj| mi.get(&mj[&x]).copied()).collect();
            // η_j(η_i(x)) needs η_i(x) in the domain, which (i) guarantees.
            if left != right {
                push(&mut violations, 3, i, format!("{left:?} != {right:?}"));
            }
        }
        for (i, m) in fam.maps.iter().enumerate() {
            let back = m.get(&m[&x]).copied();
            if back != Some(x) {
                push(
                    &mut violations,
                    4,
                    i,
                    format!("η(η({center})) = {:?}", back.map(|b| chain.label(b).to_string())),
                );
            }
        }
    }
    violations.sort_by_key(|v| v.condition);
    Ok(RicciFlatReport {
        passed: violations.is_empty(),
        first_violation: violations.first().cloned(),
        violations,
    })
}
