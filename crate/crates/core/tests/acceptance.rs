//! Acceptance criteria, one PASS/FAIL line each. Exits non-zero on any
//! failure outside the documented unattainable set.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use common::*;
use curvcheck::cd::{
    cd_slack_terms, estimate_kappa_infty, negative_criterion, trial_rng, verify_cd_random, CdStatus,
    CurvatureVariant, SamplerConfig, SearchConfig,
};
use curvcheck::families::{make_example, Family};
use curvcheck::inequalities::{
    ei_check, exp_integrability_check, fisher_lipschitz_check, growth_integral_quadrature, nash_check,
    nash_parameters, normalize_lipschitz, poisson_sharpness, resistance_diameter, resistance_distance,
    ultracontractivity_check, GrowthFunction,
};
use curvcheck::operators::{
    chain_rule_residual, convexity_scan, gamma, gamma2, psi, psi2_at, psi2_upsilon_rep_at, ScalarKernel,
};
use curvcheck::semigroup::{check_entropy_ode, entropy_trajectory, fd_consistency, geometric_grid, Semigroup};
use curvcheck::{CdFunction, MarkovChain};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn operator_consistency() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for (name, chain) in operator_fixtures() {
        for trial in 0..1000u64 {
            let mut rng = trial_rng(11, trial);
            let scale = random_scale(&mut rng);
            let f = gaussian_vec(&mut rng, chain.len(), scale);
            for x in 0..chain.len() {
                let def = psi2_at(&chain, &f, &ScalarKernel::Upsilon, x);
                let (rep, mag) = psi2_upsilon_rep_at(&chain, &f, x);
                let rel = (def - rep).abs() / mag.max(f64::MIN_POSITIVE);
                worst = worst.max(rel);
                ensure(rel <= 1e-10, || format!("{name}: trial {trial}, state {x}: relative gap {rel:e}"))?;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 10.0, || format!("took {secs:.1} s"))?;
    Ok(format!("max relative gap {worst:.2e}, {secs:.2} s"))
}

fn chain_rule() -> Outcome {
    let mut worst: f64 = 0.0;
    for (name, chain) in operator_fixtures() {
        for trial in 0..1000u64 {
            // log f ~ N(0, 1): roundoff in L f / f grows like e^{|Δ log f|}·ε
            let mut rng = trial_rng(12, trial);
            let f: Vec<f64> = gaussian_vec(&mut rng, chain.len(), 1.0).iter().map(|v| v.exp()).collect();
            let r = chain_rule_residual(&chain, &f).map_err(|e| e.to_string())?;
            let m = r.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            worst = worst.max(m);
            ensure(m < 1e-10, || format!("{name}: trial {trial}: residual {m:e}"))?;
        }
    }
    Ok(format!("max residual {worst:.2e}"))
}

fn scaling_limits() -> Outcome {
    let mut min_order = f64::INFINITY;
    let mut floor_pairs = 0;
    for (name, chain) in operator_fixtures() {
        for trial in 0..20u64 {
            let mut rng = trial_rng(13, trial);
            let f = gaussian_vec(&mut rng, chain.len(), 1.0);
            let g2 = gamma2(&chain, &f);
            let g1 = gamma(&chain, &f);
            let err = |lambda: f64| -> (f64, f64) {
                let lf: Vec<f64> = f.iter().map(|v| lambda * v).collect();
                let l2 = lambda * lambda;
                let p1 = psi(&chain, &lf, &ScalarKernel::Upsilon);
                let mut e2: f64 = 0.0;
                let mut e1: f64 = 0.0;
                for x in 0..chain.len() {
                    e2 = e2.max((psi2_at(&chain, &lf, &ScalarKernel::Upsilon, x) / l2 - g2[x]).abs());
                    e1 = e1.max((p1[x] / l2 - g1[x]).abs());
                }
                (e2, e1)
            };
            let (a2, a1) = err(1e-3);
            let (b2, b1) = err(1e-4);
            for (a, b, what) in [(a2, b2, "Ψ₂"), (a1, b1, "Ψ")] {
                if a < 1e-11 && b < 1e-11 {
                    floor_pairs += 1;
                    continue;
                }
                let order = (a / b).log10();
                min_order = min_order.min(order);
                ensure(order >= 0.95, || {
                    format!("{name}: trial {trial}: {what} order {order:.3} (errors {a:e}, {b:e})")
                })?;
            }
        }
    }
    Ok(format!("min observed order {min_order:.3}; {floor_pairs} pairs at roundoff floor"))
}

fn certificates_hold() -> Outcome {
    let cfg = SamplerConfig::default();
    let mut lines = Vec::new();
    let fams = [
        ("two-point(1,1)", Family::TwoPoint { a: 1.0, b: 1.0 }),
        ("two-point(1,2)", Family::TwoPoint { a: 1.0, b: 2.0 }),
        ("two-point(3,0.5)", Family::TwoPoint { a: 3.0, b: 0.5 }),
        ("K3", Family::Complete { n: 3, alpha: 0.25 }),
        ("K5", Family::Complete { n: 5, alpha: 0.25 }),
        ("Q2", Family::Hypercube { d: 2 }),
        ("Q3", Family::Hypercube { d: 3 }),
        ("Q4", Family::Hypercube { d: 4 }),
    ];
    for (name, fam) in fams {
        let ex = make_example(&fam).map_err(|e| e.to_string())?;
        let cert = ex.certificate.expect("certified family");
        let v = verify_cd_random(&ex.chain, cert.kappa, &cert.cd, 10_000, 2024, &cfg);
        ensure(v.status != CdStatus::Falsified, || {
            format!("{name}: falsified, worst slack {:e}", v.worst_slack)
        })?;
        lines.push(format!("{name} {:.1e}", v.worst_slack));
    }
    Ok(format!("0 falsifications in 10^4 trials each (worst slacks: {})", lines.join(", ")))
}

fn bakry_emery_two_point() -> Outcome {
    let chain = two_point(1.0, 1.0);
    let est = estimate_kappa_infty(&chain, 0, CurvatureVariant::BakryEmery, &SearchConfig::default())
        .map_err(|e| e.to_string())?;
    ensure((est.value - 2.0).abs() <= 1e-4, || format!("estimate {}", est.value))?;
    Ok(format!("κ_BE = {:.8}", est.value))
}

fn negative_criterion_k50() -> Outcome {
    let chain = complete(50);
    let rep = negative_criterion(&chain, &[0], 4.0);
    let e = &rep.entries[0];
    ensure(rep.any_violation && e.min_lhs < -1e-6, || format!("min lhs {:e}", e.min_lhs))?;
    // the spike itself violates CD_Υ(0, r²/4) directly
    let mut f = vec![e.argmin_t; chain.len()];
    f[0] = 0.0;
    let terms = cd_slack_terms(&chain, 0, &f, 0.0, &CdFunction::Power { n: 4.0, delta: 1.0 });
    ensure(terms.slack < 0.0, || format!("direct slack {:e}", terms.slack))?;
    Ok(format!(
        "t = {:.4}, criterion {:.6}, direct CD slack {:.4}",
        e.argmin_t, e.min_lhs, terms.slack
    ))
}

fn entropy_ode() -> Outcome {
    let mut min_slack = f64::INFINITY;
    let mut min_order = f64::INFINITY;
    let mut floor = 0;
    let times = geometric_grid(1e-3, 1.4, 30, true);
    for (name, chain, cert) in certified_fixtures() {
        let sg = Semigroup::new(&chain);
        for trial in 0..20u64 {
            let mut rng = trial_rng(17, trial);
            let scale = random_scale(&mut rng);
            let f = random_density(&chain, &mut rng, scale);
            let tr = entropy_trajectory(&chain, &sg, &f, &times).map_err(|e| e.to_string())?;
            let rep = check_entropy_ode(&tr, cert.kappa, &cert.cd, 1e-8);
            min_slack = min_slack.min(rep.min_slack);
            ensure(rep.min_slack >= -1e-8, || {
                format!("{name}: trial {trial}: slack {:e} at t = {}", rep.min_slack, rep.argmin_time)
            })?;
            ensure(rep.lambda_decreasing, || format!("{name}: trial {trial}: Λ not decreasing"))?;
            if trial < 3 {
                for t in [0.0, 0.05, 0.5] {
                    let c = fd_consistency(&chain, &sg, &f, t, 1e-3);
                    if c.at_roundoff {
                        floor += 1;
                        continue;
                    }
                    min_order = min_order.min(c.observed_order);
                    ensure(c.observed_order >= 1.8, || {
                        format!(
                            "{name}: t = {t}: finite-difference order {:.3} ({:e}, {:e})",
                            c.observed_order, c.error_coarse, c.error_fine
                        )
                    })?;
                }
            }
        }
    }
    Ok(format!(
        "min ODE slack {min_slack:.2e}; min FD order {min_order:.2} ({floor} checks at roundoff)"
    ))
}

fn growth_cross_checks() -> Outcome {
    let mut worst_phi: f64 = 0.0;
    for (n, kappa) in [(2.0, 1.0), (12.0, 3f64.sqrt())] {
        let closed = GrowthFunction::Log { n, kappa };
        let quad = GrowthFunction::PowerIntegral { n, kappa, delta: 1.0 };
        for r in [0.1, 1.0, 10.0, 100.0] {
            let d = (closed.phi(r) - quad.try_phi(r).map_err(|e| e.to_string())?).abs();
            worst_phi = worst_phi.max(d);
            ensure(d < 1e-8, || format!("Φ mismatch {d:e} at r = {r}"))?;
        }
    }
    let mut worst_tail: f64 = 0.0;
    for (n, kappa) in [(1.0, 1.0), (4.0, 2.0), (12.0, 3f64.sqrt())] {
        let phi = GrowthFunction::Log { n, kappa };
        let q = growth_integral_quadrature(&phi, f64::INFINITY).map_err(|e| e.to_string())?;
        let closed = std::f64::consts::FRAC_PI_2 * (n / kappa).sqrt();
        let d = (q - closed).abs();
        worst_tail = worst_tail.max(d);
        ensure(d < 1e-6, || format!("tail integral mismatch {d:e} for (n, κ) = ({n}, {kappa})"))?;
    }
    Ok(format!("Φ gap {worst_phi:.1e}, tail-integral gap {worst_tail:.1e}"))
}

fn poisson_sharpness_check() -> Outcome {
    let mut ratios = Vec::new();
    let mut problems = Vec::new();
    for k in [1.0, 2.0, 3.0, 5.0] {
        match poisson_sharpness(1.0, k, 60) {
            Ok(p) => {
                let re = (p.entropy / p.entropy_closed - 1.0).abs();
                let ri = (p.fisher / p.fisher_closed - 1.0).abs();
                if re > 1e-6 || ri > 1e-6 {
                    problems.push(format!("k = {k}: relative errors {re:e}, {ri:e}"));
                }
                ratios.push(p.ratio);
            }
            Err(e) => problems.push(format!("k = {k}: {e}")),
        }
    }
    let increasing = ratios.windows(2).all(|w| w[1] > w[0]) && ratios.iter().all(|&r| r < 1.0);
    if !increasing {
        problems.push(format!("ratios not increasing below 1: {ratios:?}"));
    }
    let shown: Vec<String> = ratios.iter().map(|r| format!("{r:.4}")).collect();
    if problems.is_empty() {
        Ok(format!("ratios {}", shown.join(" < ")))
    } else {
        Err(format!("{} (computed ratios {})", problems.join("; "), shown.join(", ")))
    }
}

fn k3_inequality_suites() -> Outcome {
    let start = Instant::now();
    let chain = complete(3);
    let phi = GrowthFunction::Log { n: 12.0, kappa: 3f64.sqrt() };
    let sg = Semigroup::new(&chain);
    let (alpha, beta, a) = nash_parameters(&phi).expect("log growth");
    let t_grid = [-10.0, -3.0, -1.0, -0.1, 0.1, 1.0, 3.0, 10.0];
    let s_grid = [-5.0, -1.0, -0.2, 0.0, 0.2, 1.0, 5.0];
    let mut mins = [f64::INFINITY; 5];
    for trial in 0..1000u64 {
        let mut rng = trial_rng(31, trial);
        let scale = random_scale(&mut rng);
        let dens = random_density(&chain, &mut rng, scale);
        let g = gaussian_vec(&mut rng, 3, scale);
        let reports = [
            ei_check(&chain, &dens, &phi),
            ultracontractivity_check(&chain, &sg, &g, &phi, &[0.01, 0.1, 1.0]),
            match normalize_lipschitz(&chain, &g) {
                Some(h) => exp_integrability_check(&chain, &h, &phi, &t_grid),
                None => continue,
            },
            fisher_lipschitz_check(&chain, &g, &s_grid),
            nash_check(&chain, &g, alpha, beta, a),
        ];
        for (i, r) in reports.into_iter().enumerate() {
            let r = r.map_err(|e| format!("trial {trial}: {e}"))?;
            mins[i] = mins[i].min(r.min_slack);
            ensure(r.passed, || format!("trial {trial}: {:?} failed, min slack {:e}", r.kind, r.min_slack))?;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 60.0, || format!("took {secs:.1} s"))?;
    Ok(format!(
        "min slacks EI {:.2e}, ultra {:.2e}, exp-int {:.2e}, fisher-lip {:.2e}, nash {:.2e}; {secs:.2} s",
        mins[0], mins[1], mins[2], mins[3], mins[4]
    ))
}

fn resistance_checks() -> Outcome {
    let r = resistance_distance(&two_point(1.0, 1.0), 0, 1).map_err(|e| e.to_string())?;
    ensure((r.value - 2f64.sqrt()).abs() < 1e-6, || format!("two-point ρ = {}", r.value))?;
    let r3 = resistance_distance(&path(3), 0, 2).map_err(|e| e.to_string())?;
    ensure((r3.value - 2.0).abs() < 1e-6, || format!("path-3 ρ = {}", r3.value))?;
    let mut fixtures: Vec<(String, MarkovChain)> = vec![
        ("path-3".into(), path(3)),
        ("path-5".into(), path(5)),
        ("two-point(1,2)".into(), two_point(1.0, 2.0)),
    ];
    let mut bound_checks = Vec::new();
    for (name, chain, cert) in certified_fixtures() {
        if let CdFunction::Power { n, delta } = cert.cd {
            if delta == 1.0 && cert.kappa > 0.0 {
                bound_checks.push((name.to_string(), chain.clone(), std::f64::consts::PI * (n / cert.kappa).sqrt()));
            }
        }
        fixtures.push((name.to_string(), chain));
    }
    for (name, chain) in &fixtures {
        if chain.len() > 12 {
            continue;
        }
        let d = resistance_diameter(chain).map_err(|e| format!("{name}: {e}"))?;
        let m = &d.distances;
        let n = chain.len();
        for x in 0..n {
            ensure(m[x][x] == 0.0, || format!("{name}: ρ(x,x) ≠ 0"))?;
            for y in 0..n {
                ensure((m[x][y] - m[y][x]).abs() < 1e-7, || format!("{name}: asymmetric at ({x},{y})"))?;
                ensure(x == y || m[x][y] > 0.0, || format!("{name}: ρ({x},{y}) = 0"))?;
                for z in 0..n {
                    ensure(m[x][z] <= m[x][y] + m[y][z] + 1e-7, || {
                        format!("{name}: triangle inequality fails at ({x},{y},{z})")
                    })?;
                }
            }
        }
        ensure(d.comparison_holds, || format!("{name}: graph-distance comparison fails"))?;
    }
    let mut shown = Vec::new();
    for (name, chain, bound) in bound_checks {
        let d = resistance_diameter(&chain).map_err(|e| format!("{name}: {e}"))?;
        ensure(d.upper <= bound, || format!("{name}: diameter {} exceeds bound {bound}", d.upper))?;
        shown.push(format!("{name} {:.4} ≤ {:.4}", d.value, bound));
    }
    Ok(format!(
        "ρ(two-point) = {:.7}, ρ(path-3) = {:.7}; {}",
        r.value,
        r3.value,
        shown.join(", ")
    ))
}

fn appendix_convexity() -> Outcome {
    let mut min = f64::INFINITY;
    let mut at = (0.0, 0.0);
    for i in 1..=10 {
        let lambda = i as f64 / 10.0;
        let (m, r) = convexity_scan(1.0 + lambda, lambda, -20.0, 20.0, 40_001);
        if m < min {
            min = m;
            at = (lambda, r);
        }
    }
    ensure(min > 0.0, || format!("minimum {min:e} at λ = {}, r = {}", at.0, at.1))?;
    Ok(format!("min ν″ = {min:.6} at λ = {}, r = {:.4}", at.0, at.1))
}

/// Criteria that cannot hold as stated; they still print FAIL but do not
/// fail the run. Criterion 9: at k = 5 the tilted Poisson law has mean
/// λe⁵ ≈ 148, so a cutoff of 60 discards essentially all of its mass.
const KNOWN_UNATTAINABLE: &[usize] = &[9];

fn main() {
    let criteria: Vec<(&str, fn() -> Outcome)> = vec![
        ("operator consistency (definition vs representation)", operator_consistency),
        ("chain-rule identity", chain_rule),
        ("scaling limits to Γ and Γ₂", scaling_limits),
        ("certified examples survive 10^4 trials", certificates_hold),
        ("Bakry–Émery curvature of the two-point space", bakry_emery_two_point),
        ("no uniform dimension on K50 (n = 4)", negative_criterion_k50),
        ("entropy ODE along trajectories", entropy_ode),
        ("growth-function cross-checks", growth_cross_checks),
        ("Poisson sharpness at cutoff 60", poisson_sharpness_check),
        ("EI / ultracontractivity / Lipschitz / Nash on K3", k3_inequality_suites),
        ("resistance distances and diameter bound", resistance_checks),
        ("convexity of ν_{1+λ,λ}", appendix_convexity),
    ];
    let mut failed = 0;
    let mut known = 0;
    for (i, (name, run)) in criteria.into_iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into()))
        });
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                if KNOWN_UNATTAINABLE.contains(&(i + 1)) {
                    known += 1;
                } else {
                    failed += 1;
                }
                println!("FAIL {:>2} {name}: {detail}", i + 1);
            }
        }
    }
    if known > 0 {
        println!("{known} criterion(s) failed as documented (unattainable as stated)");
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
