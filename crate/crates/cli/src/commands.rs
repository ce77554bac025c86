use std::io::Read;

use rayon::prelude::*;
use serde_json::{json, Map, Value};

use curvcheck::cd::{
    estimate_kappa_infty, trial_rng, verify_cd_random, CdStatus, CurvatureVariant, SamplerConfig, SearchConfig,
};
use curvcheck::chain::build_chain;
use curvcheck::families::{make_example, Certificate, Family};
use curvcheck::inequalities::{
    diameter_bound, ei_check, exp_integrability_check, fisher_lipschitz_check, growth_from_power_cd, nash_check,
    nash_parameters, normalize_lipschitz, resistance_diameter, ultracontractivity_check, GrowthFunction,
    InequalityReport,
};
use curvcheck::semigroup::{check_entropy_ode, entropy_trajectory, mean, Semigroup};
use curvcheck::{CdFunction, ChainSpec, Error, MarkovChain};

use crate::descriptors::{format_cdfun, format_growth, parse_cdfun, parse_grid, parse_growth};
use crate::report::{num, sha256_hex, Table};
use crate::{Emit, Failure, Global, Outcome, Suite, Variant};

struct Loaded {
    chain: MarkovChain,
    certificate: Option<Certificate>,
    notes: Vec<String>,
    hash: String,
}

fn read_input(arg: &str) -> Result<Vec<u8>, Failure> {
    if arg == "-" {
        let mut buf = Vec::new();
        std::io::stdin()
            .read_to_end(&mut buf)
            .map_err(|e| Failure::Input(format!("cannot read stdin: {e}")))?;
        Ok(buf)
    } else {
        std::fs::read(arg).map_err(|e| Failure::Input(format!("cannot read {arg}: {e}")))
    }
}

fn load(global: &Global, arg: &str) -> Result<Loaded, Failure> {
    let bytes = read_input(arg)?;
    let text = std::str::from_utf8(&bytes).map_err(|_| Failure::Input("spec is not UTF-8".into()))?;
    let spec = ChainSpec::from_json(text)?;
    let hash = sha256_hex(&bytes);
    match &spec {
        ChainSpec::Family { family, params } => {
            let ex = make_example(&Family::from_params(family, params)?)?;
            Ok(Loaded {
                chain: ex.chain,
                certificate: ex.certificate,
                notes: ex.notes,
                hash,
            })
        }
        ChainSpec::Explicit { .. } => Ok(Loaded {
            chain: build_chain(&spec, global.tol)?,
            certificate: None,
            notes: Vec::new(),
            hash,
        }),
    }
}

fn outcome(command: &'static str, loaded: Option<&Loaded>, seed: Option<u64>) -> Outcome {
    Outcome {
        command,
        text: String::new(),
        result: Value::Null,
        table: Table::default(),
        spec_sha256: loaded.map(|l| l.hash.clone()),
        seed,
        failure: None,
    }
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report types serialize")
}

fn heuristic_note(chain: &MarkovChain) -> &'static str {
    if chain.is_truncated() {
        "note: truncated chain; results are heuristic for the infinite chain\n"
    } else {
        ""
    }
}

pub fn chain_check(global: &Global, spec: &str) -> Result<Outcome, Failure> {
    let l = load(global, spec)?;
    let c = &l.chain;
    let stats = c.local_stats();
    let (db, x, y) = c.detailed_balance_residual();
    let mut out = outcome("chain check", Some(&l), None);
    let mut text = format!(
        "chain: {} states, {} transitions\ndetailed balance residual: {db:.3e} (at {} -> {})\nM1 inf/sup: {} / {}\n",
        c.len(),
        c.edges().len(),
        c.label(x),
        c.label(y),
        stats.m1_inf,
        stats.m1_sup
    );
    text.push_str(heuristic_note(c));
    text.push_str("state\tpi\tM1\tM2\tN\n");
    out.table = Table::new(&["state", "pi", "m1", "m2", "n"]);
    for i in 0..c.len() {
        text.push_str(&format!(
            "{}\t{:.6e}\t{}\t{}\t{}\n",
            c.label(i),
            c.pi()[i],
            stats.m1[i],
            stats.m2[i],
            stats.n_stat[i]
        ));
        out.table.push(vec![
            c.label(i).to_string(),
            num(c.pi()[i]),
            num(stats.m1[i]),
            num(stats.m2[i]),
            num(stats.n_stat[i]),
        ]);
    }
    out.text = text;
    out.result = json!({
        "states": c.labels(),
        "pi": c.pi(),
        "local_stats": to_value(&stats),
        "detailed_balance_residual": db,
        "truncated": c.is_truncated(),
        "notes": l.notes,
    });
    Ok(out)
}

pub fn curvature(
    global: &Global,
    spec: &str,
    variant: Variant,
    state: Option<&str>,
    seed: u64,
) -> Result<Outcome, Failure> {
    let l = load(global, spec)?;
    let c = &l.chain;
    let states: Vec<usize> = match state {
        Some(s) => vec![c.state_index(s)?],
        None => (0..c.len()).collect(),
    };
    let v = match variant {
        Variant::Upsilon => CurvatureVariant::Upsilon,
        Variant::Be => CurvatureVariant::BakryEmery,
    };
    let cfg = SearchConfig {
        seed,
        ..SearchConfig::default()
    };
    let estimates = states
        .par_iter()
        .map(|&x| estimate_kappa_infty(c, x, v, &cfg))
        .collect::<curvcheck::Result<Vec<_>>>()?;
    let mut out = outcome("curvature", Some(&l), Some(seed));
    out.table = Table::new(&["state", "kappa_estimate"]);
    let mut text = format!(
        "curvature estimates ({}; each is an upper bound for any valid constant)\n",
        match variant {
            Variant::Upsilon => "upsilon",
            Variant::Be => "bakry-emery",
        }
    );
    text.push_str(heuristic_note(c));
    let mut rows = Vec::new();
    for (&x, e) in states.iter().zip(&estimates) {
        text.push_str(&format!("{}\t{:.8}\n", c.label(x), e.value));
        out.table.push(vec![c.label(x).to_string(), num(e.value)]);
        rows.push(json!({"state": c.label(x), "estimate": to_value(e)}));
    }
    let min = estimates.iter().map(|e| e.value).fold(f64::INFINITY, f64::min);
    text.push_str(&format!("minimum over states: {min:.8}\n"));
    out.text = text;
    out.result = json!({"variant": format!("{v:?}"), "minimum": min, "states": rows});
    Ok(out)
}

/// `(κ, F)` from flags, falling back to the family certificate.
fn condition(l: &Loaded, kappa: Option<f64>, cdfun: Option<&str>) -> Result<(f64, CdFunction, bool), Failure> {
    let cert = l.certificate.as_ref();
    let kappa = match (kappa, cert) {
        (Some(k), _) => k,
        (None, Some(c)) => c.kappa,
        (None, None) => return Err(Failure::Input("--kappa is required: the spec carries no certificate".into())),
    };
    let f = match (cdfun, cert) {
        (Some(d), _) => parse_cdfun(d)?,
        (None, Some(c)) => c.cd.clone(),
        (None, None) => return Err(Failure::Input("--cdfun is required: the spec carries no certificate".into())),
    };
    let certified = cert.is_some_and(|c| c.kappa == kappa && c.cd == f);
    Ok((kappa, f, certified))
}

pub fn cd_verify(
    global: &Global,
    spec: &str,
    kappa: Option<f64>,
    cdfun: Option<&str>,
    trials: u64,
    seed: u64,
) -> Result<Outcome, Failure> {
    let l = load(global, spec)?;
    let (kappa, f, certified) = condition(&l, kappa, cdfun)?;
    if !kappa.is_finite() {
        return Err(Failure::Input("kappa must be finite".into()));
    }
    let c = &l.chain;
    let mut verdict = verify_cd_random(c, kappa, &f, trials, seed, &SamplerConfig::default());
    if certified && verdict.status == CdStatus::PassedSampling {
        verdict.status = CdStatus::CertifiedByFamily;
    }
    let mut out = outcome("cd verify", Some(&l), Some(seed));
    let mut text = format!(
        "condition: CD_Upsilon(kappa = {kappa}, F = {})\ntrials: {}  seed: {seed}\nstatus: {:?}\nworst slack: {:.6e}\n",
        format_cdfun(&f),
        verdict.trials,
        verdict.status,
        verdict.worst_slack
    );
    text.push_str(heuristic_note(c));
    out.table = Table::new(&["state", "witness_f"]);
    if let Some(w) = &verdict.witness {
        text.push_str(&format!("worst state: {}\n", w.state));
        for (i, v) in w.f.iter().enumerate() {
            out.table.push(vec![c.label(i).to_string(), num(*v)]);
        }
    }
    if verdict.status == CdStatus::Falsified {
        out.failure = Some(format!(
            "condition falsified at state {} (slack {:e})",
            verdict.witness.as_ref().map(|w| w.state.as_str()).unwrap_or("?"),
            verdict.worst_slack
        ));
    }
    out.text = text;
    out.result = json!({
        "kappa": kappa,
        "cdfun": format_cdfun(&f),
        "cdfun_params": to_value(&f),
        "verdict": to_value(&verdict),
    });
    Ok(out)
}

fn read_density(arg: &str, chain: &MarkovChain) -> Result<Vec<f64>, Failure> {
    let bytes = read_input(arg)?;
    let v: Value =
        serde_json::from_slice(&bytes).map_err(|e| Failure::Input(format!("density is not JSON: {e}")))?;
    let number = |v: &Value| v.as_f64().ok_or_else(|| Failure::Input("density entries must be numbers".into()));
    let f = match v {
        Value::Array(items) => items.iter().map(number).collect::<Result<Vec<_>, _>>()?,
        Value::Object(map) => {
            let mut f = vec![f64::NAN; chain.len()];
            for (k, v) in &map {
                f[chain.state_index(k)?] = number(v)?;
            }
            if let Some(i) = f.iter().position(|v| v.is_nan()) {
                return Err(Failure::Input(format!("density misses state `{}`", chain.label(i))));
            }
            f
        }
        _ => return Err(Failure::Input("density must be a JSON array or object".into())),
    };
    if f.len() != chain.len() {
        return Err(Error::LengthMismatch {
            expected: chain.len(),
            got: f.len(),
        }
        .into());
    }
    Ok(f)
}

pub fn entropy_decay(
    global: &Global,
    spec: &str,
    density: &str,
    grid: &str,
    normalize: bool,
    kappa: Option<f64>,
    cdfun: Option<&str>,
) -> Result<Outcome, Failure> {
    if spec == "-" && density == "-" {
        return Err(Failure::Input("spec and density cannot both come from stdin".into()));
    }
    let l = load(global, spec)?;
    let c = &l.chain;
    let mut f = read_density(density, c)?;
    if let Some(i) = f.iter().position(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::NonPositiveInput {
            state: c.label(i).to_string(),
            value: f[i],
        }
        .into());
    }
    if normalize {
        let m = mean(c, &f);
        f.iter_mut().for_each(|v| *v /= m);
    }
    let times = parse_grid(grid)?;
    if times.iter().any(|&t| t < 0.0) {
        return Err(Failure::Input("times must be non-negative".into()));
    }
    let sg = Semigroup::new(c);
    let traj = entropy_trajectory(c, &sg, &f, &times)?;
    let cond = if kappa.is_some() || cdfun.is_some() || l.certificate.is_some() {
        Some(condition(&l, kappa, cdfun)?)
    } else {
        None
    };
    let report = cond.as_ref().map(|(k, big_f, _)| check_entropy_ode(&traj, *k, big_f, 1e-8));
    let mut out = outcome("entropy-decay", Some(&l), None);
    out.table = Table::new(&["t", "entropy", "entropy_prime", "entropy_second", "ode_slack"]);
    let mut text = String::from("t\tEnt(P_t f)\t-I(P_t f)\n");
    for (i, &t) in traj.times.iter().enumerate() {
        text.push_str(&format!("{t:.6e}\t{:.6e}\t{:.6e}\n", traj.lambda[i], traj.lambda_prime[i]));
        out.table.push(vec![
            num(t),
            num(traj.lambda[i]),
            num(traj.lambda_prime[i]),
            num(traj.lambda_double_prime[i]),
            report.as_ref().map(|r| num(r.slacks[i])).unwrap_or_default(),
        ]);
    }
    text.push_str(heuristic_note(c));
    if let (Some(r), Some((k, big_f, _))) = (&report, &cond) {
        text.push_str(&format!(
            "differential inequality under CD_Upsilon({k}, {}): min slack {:.6e} at t = {:.4e}; entropy decreasing: {}\n",
            format_cdfun(big_f),
            r.min_slack,
            r.argmin_time,
            r.lambda_decreasing
        ));
        if !r.passed {
            out.failure = Some(format!("differential inequality violated (min slack {:e})", r.min_slack));
        }
    }
    out.text = text;
    out.result = json!({
        "trajectory": to_value(&traj),
        "condition": cond.as_ref().map(|(k, big_f, _)| json!({"kappa": k, "cdfun": format_cdfun(big_f)})),
        "ode": report.as_ref().map(to_value),
    });
    Ok(out)
}

/// Growth function from a flag, or from a power-type certificate.
fn growth(l: &Loaded, desc: Option<&str>) -> Result<Option<GrowthFunction>, Failure> {
    if let Some(d) = desc {
        return Ok(Some(parse_growth(d)?));
    }
    Ok(match &l.certificate {
        Some(Certificate {
            kappa,
            cd: CdFunction::Power { n, delta },
        }) if *kappa > 0.0 => Some(growth_from_power_cd(*n, *kappa, *delta)?),
        _ => None,
    })
}

pub fn diameter(global: &Global, spec: &str, growth_desc: Option<&str>) -> Result<Outcome, Failure> {
    let l = load(global, spec)?;
    let c = &l.chain;
    let phi = growth(&l, growth_desc)?;
    let mut out = outcome("diameter", Some(&l), None);
    let d = match resistance_diameter(c) {
        Ok(d) => d,
        Err(Error::SolverNotConverged { lower, upper }) => {
            out.text = format!("resistance solver did not converge: {lower} <= rho <= {upper}\n");
            out.result = json!({"converged": false, "lower": lower, "upper": upper});
            out.failure = Some("resistance solver did not converge".into());
            return Ok(out);
        }
        Err(e) => return Err(e.into()),
    };
    let bound = match phi {
        Some(p) => Some(diameter_bound(&p).map_err(Failure::from)?),
        None => None,
    };
    let mut text = format!(
        "resistance diameter: {:.10} (dual upper bound {:.10}) between {} and {}\n",
        d.value,
        d.upper,
        c.label(d.pair.0),
        c.label(d.pair.1)
    );
    text.push_str(&format!(
        "graph-distance comparison dist <= sqrt(M1sup/2) rho: {}\n",
        if d.comparison_holds { "holds" } else { "FAILS" }
    ));
    if let (Some(b), Some(p)) = (bound, phi) {
        let ok = d.upper <= b;
        text.push_str(&format!(
            "bound from {}: {:.10} -> {}\n",
            format_growth(&p),
            b,
            if ok { "holds" } else { "VIOLATED" }
        ));
        if !ok {
            out.failure = Some(format!("diameter {} exceeds bound {b}", d.upper));
        }
    } else {
        text.push_str("no bound: supply --growth or a spec with a power-type certificate\n");
    }
    if !d.comparison_holds && out.failure.is_none() {
        out.failure = Some("graph-distance comparison fails".into());
    }
    text.push_str(heuristic_note(c));
    out.table = Table::new(&["x", "y", "rho"]);
    for x in 0..c.len() {
        for y in x + 1..c.len() {
            out.table
                .push(vec![c.label(x).to_string(), c.label(y).to_string(), num(d.distances[x][y])]);
        }
    }
    out.text = text;
    out.result = json!({
        "diameter": to_value(&d),
        "growth": phi.map(|p| format_growth(&p)),
        "bound": bound,
    });
    Ok(out)
}

pub fn inequalities(
    global: &Global,
    spec: &str,
    suites: &[Suite],
    growth_desc: Option<&str>,
    samples: u64,
    times: &str,
    seed: u64,
) -> Result<Outcome, Failure> {
    let l = load(global, spec)?;
    let c = &l.chain;
    let phi = growth(&l, growth_desc)?
        .ok_or_else(|| Failure::Input("--growth is required: the spec carries no power-type certificate".into()))?;
    let times = parse_grid(times)?;
    let nash = if suites.contains(&Suite::Nash) {
        Some(nash_parameters(&phi).ok_or_else(|| Failure::Input("the nash suite needs a log growth function".into()))?)
    } else {
        None
    };
    let sg = Semigroup::new(c);
    let t_grid = [-10.0, -3.0, -1.0, -0.1, 0.1, 1.0, 3.0, 10.0];
    let s_grid = [-5.0, -1.0, -0.2, 0.2, 1.0, 5.0];
    let scales = [0.1, 1.0, 3.0];
    let run = |suite: Suite, sample: u64| -> curvcheck::Result<Vec<InequalityReport>> {
        let mut rng = trial_rng(seed, sample);
        let scale = scales[(sample % 3) as usize];
        let g: Vec<f64> = curvcheck::cd::sample_function(c.len(), curvcheck::cd::SampleFamily::Gaussian, scale, &mut rng);
        match suite {
            Suite::Ei => {
                let e: Vec<f64> = g.iter().map(|v| v.exp()).collect();
                let m = mean(c, &e);
                let dens: Vec<f64> = e.iter().map(|v| v / m).collect();
                Ok(vec![ei_check(c, &dens, &phi)?])
            }
            Suite::Ultra => Ok(vec![ultracontractivity_check(c, &sg, &g, &phi, &times)?]),
            Suite::Lip => {
                let mut v = vec![fisher_lipschitz_check(c, &g, &s_grid)?];
                if let Some(h) = normalize_lipschitz(c, &g) {
                    v.push(exp_integrability_check(c, &h, &phi, &t_grid)?);
                }
                Ok(v)
            }
            Suite::Nash => {
                let (alpha, beta, a) = nash.expect("checked above");
                Ok(vec![nash_check(c, &g, alpha, beta, a)?])
            }
        }
    };
    let mut out = outcome("inequalities", Some(&l), Some(seed));
    out.table = Table::new(&["suite", "sample", "check", "min_slack", "passed"]);
    let mut text = format!("growth function: {}\nsamples per suite: {samples}  seed: {seed}\n", format_growth(&phi));
    let mut summary = Vec::new();
    let mut failures = Vec::new();
    for &suite in suites {
        let reports = (0..samples)
            .into_par_iter()
            .map(|s| run(suite, s).map(|r| (s, r)))
            .collect::<curvcheck::Result<Vec<_>>>()?;
        let mut min = f64::INFINITY;
        let mut failed = 0u64;
        let mut first_failure = None;
        for (s, rs) in &reports {
            for r in rs {
                min = min.min(r.min_slack);
                if !r.passed {
                    failed += 1;
                    first_failure.get_or_insert_with(|| to_value(r));
                }
                out.table.push(vec![
                    format!("{suite:?}").to_lowercase(),
                    s.to_string(),
                    format!("{:?}", r.kind),
                    num(r.min_slack),
                    r.passed.to_string(),
                ]);
            }
        }
        let name = format!("{suite:?}").to_lowercase();
        text.push_str(&format!(
            "{name}: {} (min slack {min:.6e}, {failed} failing checks)\n",
            if failed == 0 { "PASS" } else { "FAIL" }
        ));
        if failed > 0 {
            failures.push(name.clone());
        }
        summary.push(json!({
            "suite": name,
            "passed": failed == 0,
            "min_slack": min,
            "failing_checks": failed,
            "first_failure": first_failure,
        }));
    }
    text.push_str(heuristic_note(c));
    if !failures.is_empty() {
        out.failure = Some(format!("inequality suites failed: {}", failures.join(", ")));
    }
    out.text = text;
    out.result = json!({
        "growth": format_growth(&phi),
        "growth_params": to_value(&phi),
        "samples": samples,
        "suites": summary,
    });
    Ok(out)
}

fn parse_param(text: &str) -> Result<(String, Value), Failure> {
    let (k, v) = text
        .split_once('=')
        .ok_or_else(|| Failure::Input(format!("parameter `{text}` must look like key=value")))?;
    let number = |s: &str| {
        crate::descriptors::parse_number(s)
            .ok()
            .and_then(serde_json::Number::from_f64)
            .map(Value::Number)
            .ok_or_else(|| Failure::Input(format!("parameter `{text}` is not numeric")))
    };
    let value = if v.contains(',') {
        Value::Array(v.split(',').map(number).collect::<Result<_, _>>()?)
    } else if let Ok(i) = v.parse::<u64>() {
        Value::from(i)
    } else {
        number(v)?
    };
    Ok((k.to_string(), value))
}

pub fn example(family: &str, params: &[String], emit: Emit) -> Result<Outcome, Failure> {
    let map: Map<String, Value> = params.iter().map(|p| parse_param(p)).collect::<Result<_, _>>()?;
    let fam = Family::from_params(family, &map)?;
    let ex = make_example(&fam)?;
    let spec = fam.to_spec();
    let spec_text = serde_json::to_string_pretty(&spec).expect("spec serializes") + "\n";
    let mut out = outcome("example", None, None);
    out.spec_sha256 = Some(sha256_hex(spec_text.as_bytes()));
    out.text = match emit {
        Emit::Spec => spec_text,
        Emit::Summary => {
            let mut t = format!("{}: {} states\n", fam.name(), ex.chain.len());
            match &ex.certificate {
                Some(c) => t.push_str(&format!("certificate: CD_Upsilon({}, {})\n", c.kappa, format_cdfun(&c.cd))),
                None => t.push_str("certificate: none\n"),
            }
            for n in &ex.notes {
                t.push_str(&format!("note: {n}\n"));
            }
            t
        }
    };
    out.table = Table::new(&["state", "pi"]);
    for i in 0..ex.chain.len() {
        out.table.push(vec![ex.chain.label(i).to_string(), num(ex.chain.pi()[i])]);
    }
    out.result = json!({
        "family": to_value(&fam),
        "spec": to_value(&spec),
        "certificate": ex.certificate.as_ref().map(|c| json!({
            "kappa": c.kappa,
            "cdfun": format_cdfun(&c.cd),
            "cdfun_params": to_value(&c.cd),
        })),
        "notes": ex.notes,
    });
    Ok(out)
}
