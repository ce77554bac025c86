//! Named example chains bundled with their certified curvature-dimension pair.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::cd::{c_delta, CdFunction, EtaMaps};
use crate::chain::{truncate_birth_death, ChainSpec, MarkovChain, DEFAULT_TOLERANCE};
use crate::error::{Error, Result};
use crate::operators::StateFunction;

/// Largest hypercube dimension accepted (`2^d` states).
pub const MAX_HYPERCUBE_DIM: usize = 16;

/// A family descriptor, as accepted in chain-spec files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "snake_case")]
pub enum Family {
    /// Rates `k(0,1) = a`, `k(1,0) = b`.
    TwoPoint { a: f64, b: f64 },
    /// Unit-rate complete graph on `n` states; `alpha` selects the certificate.
    Complete { n: usize, alpha: f64 },
    /// `k(x,y) = l(y)`.
    WeightedComplete { l: Vec<f64>, alpha: f64, delta: f64 },
    /// Unit-rate hypercube `{0,1}^d`.
    Hypercube { d: usize },
    /// Birth-death chain on `{0, …, cutoff}`; `birth[x] = a(x)` for
    /// `x < cutoff`, `death[x] = b(x+1)`.
    BirthDeath { birth: Vec<f64>, death: Vec<f64> },
}

/// Certified pair: the chain satisfies `CD_Υ(kappa, cd)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub kappa: f64,
    pub cd: CdFunction,
}

#[derive(Debug, Clone)]
pub struct Example {
    pub family: Family,
    pub chain: MarkovChain,
    pub certificate: Option<Certificate>,
    pub notes: Vec<String>,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::BadParams(msg.into())
}

fn get_f64(params: &Map<String, Value>, key: &str) -> Result<Option<f64>> {
    match params.get(key) {
        None => Ok(None),
        Some(v) => v
            .as_f64()
            .map(Some)
            .ok_or_else(|| bad(format!("parameter `{key}` must be a number"))),
    }
}

fn req_f64(params: &Map<String, Value>, key: &str) -> Result<f64> {
    get_f64(params, key)?.ok_or_else(|| bad(format!("missing parameter `{key}`")))
}

fn req_usize(params: &Map<String, Value>, key: &str) -> Result<usize> {
    let v = req_f64(params, key)?;
    if v < 0.0 || v.fract() != 0.0 || v > u32::MAX as f64 {
        return Err(bad(format!("parameter `{key}` must be a non-negative integer")));
    }
    Ok(v as usize)
}

fn get_vec(params: &Map<String, Value>, key: &str) -> Result<Option<Vec<f64>>> {
    match params.get(key) {
        None => Ok(None),
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| {
                v.as_f64()
                    .ok_or_else(|| bad(format!("parameter `{key}` must be a list of numbers")))
            })
            .collect::<Result<Vec<_>>>()
            .map(Some),
        Some(_) => Err(bad(format!("parameter `{key}` must be a list of numbers"))),
    }
}

fn check_keys(params: &Map<String, Value>, allowed: &[&str]) -> Result<()> {
    match params.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(k) => Err(bad(format!("unknown parameter `{k}`"))),
        None => Ok(()),
    }
}

impl Family {
    /// Parses a family name plus loose parameters. Defaults: `alpha = 1/4` for
    /// `complete`; `delta = 1` for `weighted_complete`; `mu = 1` for the
    /// Poisson form of `birth_death` (`lambda`, `cutoff`, rates `a = λ`,
    /// `b(x) = μx`).
    pub fn from_params(name: &str, params: &Map<String, Value>) -> Result<Family> {
        let fam = match name {
            "two_point" => {
                check_keys(params, &["a", "b"])?;
                Family::TwoPoint {
                    a: req_f64(params, "a")?,
                    b: req_f64(params, "b")?,
                }
            }
            "complete" => {
                check_keys(params, &["n", "alpha"])?;
                Family::Complete {
                    n: req_usize(params, "n")?,
                    alpha: get_f64(params, "alpha")?.unwrap_or(0.25),
                }
            }
            "weighted_complete" => {
                check_keys(params, &["l", "alpha", "delta"])?;
                Family::WeightedComplete {
                    l: get_vec(params, "l")?.ok_or_else(|| bad("missing parameter `l`"))?,
                    alpha: req_f64(params, "alpha")?,
                    delta: get_f64(params, "delta")?.unwrap_or(1.0),
                }
            }
            "hypercube" => {
                check_keys(params, &["d"])?;
                Family::Hypercube {
                    d: req_usize(params, "d")?,
                }
            }
            "birth_death" => {
                if params.contains_key("birth") || params.contains_key("death") {
                    check_keys(params, &["birth", "death"])?;
                    Family::BirthDeath {
                        birth: get_vec(params, "birth")?.ok_or_else(|| bad("missing parameter `birth`"))?,
                        death: get_vec(params, "death")?.ok_or_else(|| bad("missing parameter `death`"))?,
                    }
                } else {
                    check_keys(params, &["lambda", "mu", "cutoff"])?;
                    Family::poisson(
                        req_f64(params, "lambda")?,
                        get_f64(params, "mu")?.unwrap_or(1.0),
                        req_usize(params, "cutoff")?,
                    )
                }
            }
            other => return Err(bad(format!("unknown family `{other}`"))),
        };
        fam.validate()?;
        Ok(fam)
    }

    /// Truncated Poisson-type birth-death chain: `a(x) = λ`, `b(x) = μx`.
    pub fn poisson(lambda: f64, mu: f64, cutoff: usize) -> Family {
        Family::BirthDeath {
            birth: vec![lambda; cutoff],
            death: (1..=cutoff).map(|x| mu * x as f64).collect(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Family::TwoPoint { .. } => "two_point",
            Family::Complete { .. } => "complete",
            Family::WeightedComplete { .. } => "weighted_complete",
            Family::Hypercube { .. } => "hypercube",
            Family::BirthDeath { .. } => "birth_death",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        match self {
            Family::TwoPoint { a, b } => {
                if !(pos(*a) && pos(*b)) {
                    return Err(bad("two_point rates must be positive"));
                }
            }
            Family::Complete { n, alpha } => {
                if *n < 2 {
                    return Err(bad("complete graph needs n ≥ 2"));
                }
                if !(*alpha > 0.0 && *alpha < 0.5) {
                    return Err(bad("complete graph needs alpha in (0, 1/2)"));
                }
            }
            Family::WeightedComplete { l, alpha, delta } => {
                if l.len() < 2 {
                    return Err(bad("weighted_complete needs at least two weights"));
                }
                if !l.iter().all(|&v| pos(v)) {
                    return Err(bad("weights must be positive"));
                }
                let l_min = l.iter().cloned().fold(f64::INFINITY, f64::min);
                if !(*alpha > 0.0 && *alpha < l_min / 2.0) {
                    return Err(bad(format!("alpha must lie in (0, {})", l_min / 2.0)));
                }
                if !(*delta >= 1.0 && delta.is_finite()) {
                    return Err(bad("delta must be ≥ 1"));
                }
            }
            Family::Hypercube { d } => {
                if *d < 1 || *d > MAX_HYPERCUBE_DIM {
                    return Err(bad(format!("hypercube needs 1 ≤ d ≤ {MAX_HYPERCUBE_DIM}")));
                }
            }
            Family::BirthDeath { birth, death } => {
                if birth.is_empty() || birth.len() != death.len() {
                    return Err(bad("birth and death lists must be non-empty and of equal length"));
                }
            }
        }
        Ok(())
    }

    /// The equivalent chain-spec file contents.
    pub fn to_spec(&self) -> ChainSpec {
        match serde_json::to_value(self).expect("family serializes") {
            Value::Object(mut m) => ChainSpec::Family {
                family: self.name().to_string(),
                params: match m.remove("params") {
                    Some(Value::Object(p)) => p,
                    _ => Map::new(),
                },
            },
            _ => unreachable!("family serializes to an object"),
        }
    }
}

fn hypercube_label(u: usize, d: usize) -> String {
    (0..d).map(|i| if u >> i & 1 == 1 { '1' } else { '0' }).collect()
}

fn complete_chain(weights: &[f64]) -> Result<MarkovChain> {
    let n = weights.len();
    let mut rates = Vec::with_capacity(n * (n - 1));
    for x in 0..n {
        for (y, &w) in weights.iter().enumerate() {
            if x != y {
                rates.push((x, y, w));
            }
        }
    }
    let total: f64 = weights.iter().sum();
    let pi = weights.iter().map(|w| w / total).collect();
    MarkovChain::from_indexed_rates(n, &rates, Some(pi), DEFAULT_TOLERANCE)
}

/// Builds the chain and its certificate.
pub fn make_example(family: &Family) -> Result<Example> {
    family.validate()?;
    let mut notes = Vec::new();
    let (chain, certificate) = match family {
        &Family::TwoPoint { a, b } => {
            let chain = MarkovChain::from_indexed_rates(2, &[(0, 1, a), (1, 0, b)], None, DEFAULT_TOLERANCE)?;
            let lambda = (a / b).min(b / a);
            notes.push(
                "certificate carries all strength in F with kappa = 0; a positive curvature constant \
                 is available only as a numerical estimate"
                    .to_string(),
            );
            let cert = Certificate {
                kappa: 0.0,
                cd: CdFunction::Nu {
                    out_scale: a * b / 2.0,
                    c: 1.0 + lambda,
                    d: lambda,
                    arg_scale: a.max(b),
                },
            };
            (chain, Some(cert))
        }
        &Family::Complete { n, alpha } => {
            let chain = complete_chain(&vec![1.0; n])?;
            let cert = Certificate {
                kappa: (2.0 * n as f64 * (1.0 - 2.0 * alpha)).sqrt(),
                cd: CdFunction::Power {
                    n: n as f64 / alpha,
                    delta: 1.0,
                },
            };
            (chain, Some(cert))
        }
        Family::WeightedComplete { l, alpha, delta } => {
            let chain = complete_chain(l)?;
            let l1: f64 = l.iter().sum();
            let l_min = l.iter().cloned().fold(f64::INFINITY, f64::min);
            let cd = c_delta(*delta);
            notes.push(format!("c_delta = {cd}"));
            let cert = Certificate {
                kappa: (2.0 * l1 * (l_min - 2.0 * alpha)).sqrt(),
                // α c_δ r^{1+δ} / |l|₁^δ written as r^{1+δ}/n
                cd: CdFunction::Power {
                    n: l1.powf(*delta) / (alpha * cd),
                    delta: *delta,
                },
            };
            (chain, Some(cert))
        }
        &Family::Hypercube { d } => {
            let size = 1usize << d;
            let mut rates = Vec::with_capacity(size * d);
            for u in 0..size {
                for i in 0..d {
                    rates.push((hypercube_label(u, d), hypercube_label(u ^ (1 << i), d), 1.0));
                }
            }
            let labels = (0..size).map(|u| hypercube_label(u, d)).collect();
            let pi = vec![1.0 / size as f64; size];
            let chain = MarkovChain::from_labelled_rates(labels, &rates, Some(pi), DEFAULT_TOLERANCE)?;
            let cert = Certificate {
                kappa: 2.0,
                cd: CdFunction::Nu {
                    out_scale: d as f64 / 2.0,
                    c: 2.0,
                    d: 5.0,
                    arg_scale: d as f64,
                },
            };
            (chain, Some(cert))
        }
        Family::BirthDeath { birth, death } => {
            let cutoff = birth.len();
            let chain = truncate_birth_death(|x| birth[x], |x| death[x - 1], cutoff)?;
            notes.push(
                "no certificate: for birth-death chains with bounded birth rates and unbounded death \
                 rates no finite dimension term exists; results on the truncated chain are heuristic"
                    .to_string(),
            );
            (chain, None)
        }
    };
    Ok(Example {
        family: family.clone(),
        chain,
        certificate,
        notes,
    })
}

/// Coordinate-flip maps `η_i(u) = u ⊕ e_i` on every closed 1-ball of the
/// hypercube built by [`make_example`].
pub fn hypercube_eta_maps(d: usize) -> Result<Vec<EtaMaps>> {
    Family::Hypercube { d }.validate()?;
    let size = 1usize << d;
    Ok((0..size)
        .map(|x| {
            let ball: Vec<usize> = std::iter::once(x).chain((0..d).map(|j| x ^ (1 << j))).collect();
            let maps = (0..d)
                .map(|i| ball.iter().map(|&u| (u, u ^ (1 << i))).collect::<BTreeMap<_, _>>())
                .collect();
            EtaMaps { center: x, maps }
        })
        .collect())
}

/// Tail mass `P(Poisson(m) > cutoff)`, summed in the log domain.
pub fn poisson_tail(m: f64, cutoff: usize) -> f64 {
    let ln_m = m.ln();
    let mut log_term = -m;
    for x in 1..=cutoff {
        log_term += ln_m - (x as f64).ln();
    }
    let stop = (cutoff as f64).max(m) + 40.0 * m.sqrt() + 200.0;
    let mut tail = 0.0;
    let mut x = cutoff + 1;
    while (x as f64) <= stop {
        log_term += ln_m - (x as f64).ln();
        tail += log_term.exp();
        x += 1;
    }
    tail
}

/// Tilted density on a truncated Poisson chain.
#[derive(Debug, Clone)]
pub struct PoissonTestFunction {
    pub chain: MarkovChain,
    pub f: StateFunction,
    /// `∫ f_k dμ` on the truncated space before renormalization.
    pub renormalization: f64,
    /// Mass of the tilted measure beyond the cutoff.
    pub tail: f64,
}

/// Tail mass above which a truncation is rejected.
pub const POISSON_TAIL_LIMIT: f64 = 1e-8;

/// `f_k(x) = e^{kx − λ(e^k − 1)}` on the Poisson chain truncated at `cutoff`,
/// renormalized to a density of the truncated measure.
pub fn poisson_test_function(lambda: f64, k: f64, cutoff: usize) -> Result<PoissonTestFunction> {
    if !(lambda > 0.0 && lambda.is_finite() && k.is_finite()) || cutoff < 1 {
        return Err(bad("need lambda > 0, finite k and cutoff ≥ 1"));
    }
    let tilted = lambda * k.exp();
    let tail = poisson_tail(tilted, cutoff);
    if tail > POISSON_TAIL_LIMIT {
        return Err(Error::TruncationInsufficient { tail });
    }
    let chain = make_example(&Family::poisson(lambda, 1.0, cutoff))?.chain;
    let shift = lambda * k.exp_m1();
    let log_raw: Vec<f64> = (0..=cutoff).map(|x| k * x as f64 - shift).collect();
    let mass: f64 = chain
        .pi()
        .iter()
        .zip(&log_raw)
        .map(|(p, l)| p * l.exp())
        .sum();
    let log_mass = mass.ln();
    let f = log_raw.iter().map(|l| (l - log_mass).exp()).collect::<Vec<_>>();
    Ok(PoissonTestFunction {
        chain,
        f: StateFunction(f),
        renormalization: mass,
        tail,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cd::ricci_flat_check;
    use crate::semigroup::{entropy, mean};

    fn params(v: serde_json::Value) -> Map<String, Value> {
        v.as_object().unwrap().clone()
    }

    #[test]
    fn two_point_certificate() {
        let ex = make_example(&Family::TwoPoint { a: 1.0, b: 2.0 }).unwrap();
        let c = ex.certificate.unwrap();
        assert_eq!(c.kappa, 0.0);
        assert_eq!(
            c.cd,
            CdFunction::Nu {
                out_scale: 1.0,
                c: 1.5,
                d: 0.5,
                arg_scale: 2.0
            }
        );
        assert!((ex.chain.pi()[0] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn complete_and_weighted_agree() {
        let k3 = make_example(&Family::Complete { n: 3, alpha: 0.25 }).unwrap();
        let c = k3.certificate.unwrap();
        assert!((c.kappa - 3f64.sqrt()).abs() < 1e-15);
        assert_eq!(c.cd, CdFunction::Power { n: 12.0, delta: 1.0 });
        let w = make_example(&Family::WeightedComplete {
            l: vec![1.0; 3],
            alpha: 0.25,
            delta: 1.0,
        })
        .unwrap();
        assert_eq!(w.certificate.unwrap(), c);
    }

    #[test]
    fn hypercube_certificate_and_maps() {
        let ex = make_example(&Family::Hypercube { d: 3 }).unwrap();
        assert_eq!(ex.chain.len(), 8);
        assert_eq!(ex.chain.label(5), "101");
        let c = ex.certificate.unwrap();
        assert_eq!(c.kappa, 2.0);
        for d in 1..=4 {
            let ex = make_example(&Family::Hypercube { d }).unwrap();
            let rep = ricci_flat_check(&ex.chain, &hypercube_eta_maps(d).unwrap()).unwrap();
            assert!(rep.passed, "d = {d}");
        }
        let ex = make_example(&Family::Hypercube { d: 2 }).unwrap();
        let mut maps = hypercube_eta_maps(2).unwrap();
        maps[0].maps[1] = maps[0].maps[0].clone();
        let rep = ricci_flat_check(&ex.chain, &maps).unwrap();
        assert!(!rep.passed);
        assert_eq!(rep.first_violation.unwrap().condition, 2);
    }

    #[test]
    fn parameter_validation() {
        let err = |name: &str, v: serde_json::Value| Family::from_params(name, &params(v)).unwrap_err();
        assert!(matches!(err("complete", serde_json::json!({"n": 1})), Error::BadParams(_)));
        assert!(matches!(err("complete", serde_json::json!({"n": 3, "alpha": 0.5})), Error::BadParams(_)));
        assert!(matches!(err("hypercube", serde_json::json!({"d": 0})), Error::BadParams(_)));
        assert!(matches!(
            err("weighted_complete", serde_json::json!({"l": [1, 2], "alpha": 0.5})),
            Error::BadParams(_)
        ));
        assert!(matches!(err("moebius", serde_json::json!({})), Error::BadParams(_)));
        assert!(matches!(err("two_point", serde_json::json!({"a": 1, "b": 1, "c": 2})), Error::BadParams(_)));
        let f = Family::from_params("birth_death", &params(serde_json::json!({"lambda": 1, "cutoff": 5}))).unwrap();
        assert_eq!(f, Family::poisson(1.0, 1.0, 5));
    }

    #[test]
    fn spec_round_trip() {
        for fam in [
            Family::TwoPoint { a: 1.0, b: 2.0 },
            Family::Complete { n: 4, alpha: 0.1 },
            Family::Hypercube { d: 2 },
            Family::WeightedComplete {
                l: vec![1.0, 2.0, 3.0],
                alpha: 0.2,
                delta: 2.0,
            },
            Family::poisson(2.0, 1.0, 4),
        ] {
            let ChainSpec::Family { family, params } = fam.to_spec() else {
                panic!("expected family spec")
            };
            assert_eq!(Family::from_params(&family, &params).unwrap(), fam);
        }
    }

    #[test]
    fn poisson_density() {
        let p = poisson_test_function(1.0, 0.0, 40).unwrap();
        assert!(p.f.iter().all(|v| (v - 1.0).abs() < 1e-8));
        let p = poisson_test_function(1.0, 2.0, 40).unwrap();
        assert!((mean(&p.chain, &p.f) - 1.0).abs() < 1e-8);
        assert!((p.renormalization - 1.0).abs() < 1e-8);
        let e = entropy(&p.chain, &p.f).unwrap();
        assert!((e - (2f64.exp() + 1.0)).abs() < 1e-6);
        assert!(matches!(
            poisson_test_function(1.0, 5.0, 60),
            Err(Error::TruncationInsufficient { .. })
        ));
    }

    #[test]
    fn poisson_tail_matches_direct_sum() {
        // direct: 1 − Σ_{x≤c} e^{−m} m^x / x!
        let m: f64 = 2.0;
        let mut term = (-m).exp();
        let mut cdf = term;
        for x in 1..=5 {
            term *= m / x as f64;
            cdf += term;
        }
        assert!((poisson_tail(m, 5) - (1.0 - cdf)).abs() < 1e-14);
    }
}
