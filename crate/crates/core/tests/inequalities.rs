mod common;

use common::*;
use curvcheck::cd::trial_rng;
use curvcheck::inequalities::{
    birth_death_partial_sums, diameter_bound, ei_check, growth_from_power_cd, growth_integral,
    growth_integral_quadrature, main_entropy_bound, nash_check, norm_derivative_identity, poisson_closed_forms,
    poisson_sharpness, resistance_diameter, resistance_distance, tail_integral, ultracontractivity_params,
    ultracontractivity_params_quadrature, GrowthFunction,
};
use curvcheck::semigroup::{entropy, fisher_information, Semigroup};
use curvcheck::Error;

#[test]
fn poisson_closed_forms_by_hand() {
    // k = 1, λ = 1: Ent = 1, I = e − 1
    let (ent, fisher) = poisson_closed_forms(1.0, 1.0);
    assert!((ent - 1.0).abs() < 1e-15);
    assert!((fisher - (std::f64::consts::E - 1.0)).abs() < 1e-15);
    for k in [1.0, 2.0, 3.0] {
        let p = poisson_sharpness(1.0, k, 60).unwrap();
        assert!((p.entropy / p.entropy_closed - 1.0).abs() < 1e-10, "k = {k}");
        assert!((p.fisher / p.fisher_closed - 1.0).abs() < 1e-10, "k = {k}");
    }
    assert!(matches!(
        poisson_sharpness(1.0, 5.0, 60),
        Err(Error::TruncationInsufficient { .. })
    ));
    // k = 4 (tilted mean ≈ 55) fits under cutoff 150
    let p = poisson_sharpness(1.0, 4.0, 150).unwrap();
    assert!((p.entropy / p.entropy_closed - 1.0).abs() < 1e-9);
}

#[test]
fn log_growth_from_quadratic_certificate() {
    let phi = growth_from_power_cd(12.0, 3f64.sqrt(), 1.0).unwrap();
    assert_eq!(phi, GrowthFunction::Log { n: 12.0, kappa: 3f64.sqrt() });
    // Φ′(0) = 1/(2κ)
    assert!((phi.phi_prime(0.0) - 0.5 / 3f64.sqrt()).abs() < 1e-15);
}

#[test]
fn power_integral_closed_forms() {
    // δ = 2: Φ(r) = √(κn)/(2κ)(π/2 − arctan(√(κn)/r)); Φ(∞) = √(κn)π/(4κ)
    let (n, kappa) = (3.0, 2.0);
    let phi = GrowthFunction::PowerIntegral { n, kappa, delta: 2.0 };
    let s = (kappa * n).sqrt();
    for r in [0.01, 1.0, 50.0] {
        let closed = s / (2.0 * kappa) * (std::f64::consts::FRAC_PI_2 - (s / r).atan());
        assert!((phi.try_phi(r).unwrap() - closed).abs() < 1e-9);
    }
    let inf = phi.phi_infinity().unwrap();
    assert!((inf - s * std::f64::consts::PI / (4.0 * kappa)).abs() < 1e-12);
}

#[test]
fn growth_integral_closed_vs_quadrature() {
    let phi = GrowthFunction::Log { n: 4.0, kappa: 2.0 };
    for tau in [0.3, 1.0, 10.0, 200.0] {
        let a = growth_integral(&phi, tau).unwrap();
        let b = growth_integral_quadrature(&phi, tau).unwrap();
        assert!((a - b).abs() < 1e-9, "τ = {tau}");
        assert_eq!(growth_integral(&phi, -tau).unwrap(), -a);
    }
    let tail = tail_integral(&phi).unwrap();
    assert_eq!(diameter_bound(&phi).unwrap(), 2.0 * tail);
    assert!(matches!(
        tail_integral(&GrowthFunction::Linear { c: 1.0 }),
        Err(Error::NonIntegrableGrowth)
    ));
}

#[test]
fn ultracontractivity_params_closed_vs_quadrature() {
    let phi = GrowthFunction::Log { n: 6.0, kappa: 1.5 };
    for (p, q, rho) in [(1.0, 2.0, 1.0), (2.0, 10.0, 0.5), (1.0, f64::INFINITY, 2.0)] {
        let a = ultracontractivity_params(&phi, p, q, rho).unwrap();
        let b = ultracontractivity_params_quadrature(&phi, p, q, rho).unwrap();
        assert!((a.t - b.t).abs() < 1e-8, "({p}, {q}, {rho})");
        assert!((a.m - b.m).abs() < 1e-12);
    }
    assert!(ultracontractivity_params(&GrowthFunction::Linear { c: 1.0 }, 1.0, f64::INFINITY, 1.0).is_err());
}

#[test]
fn main_entropy_bound_dominates_entropy() {
    for (name, c, cert) in certified_fixtures() {
        if cert.kappa <= 0.0 {
            continue;
        }
        let Some(delta) = cert.cd.power_delta() else { continue };
        for trial in 0..10 {
            let mut rng = trial_rng(41, trial);
            let f = random_density(&c, &mut rng, 1.5);
            let ent = entropy(&c, &f).unwrap();
            let i = fisher_information(&c, &f).unwrap();
            let bound = main_entropy_bound(i, cert.kappa, &cert.cd, delta).unwrap();
            assert!(ent <= bound * (1.0 + 1e-9), "{name}: {ent} > {bound}");
        }
    }
}

#[test]
fn entropy_bound_with_log_growth() {
    let c = complete(5);
    let phi = GrowthFunction::Log { n: 20.0, kappa: 5f64.sqrt() };
    for trial in 0..50 {
        let mut rng = trial_rng(42, trial);
        let f = random_density(&c, &mut rng, 3.0);
        assert!(ei_check(&c, &f, &phi).unwrap().passed);
    }
    // an absurdly small Φ is caught
    let tiny = GrowthFunction::Linear { c: 1e-6 };
    let mut rng = trial_rng(43, 0);
    let f = random_density(&c, &mut rng, 3.0);
    assert!(!ei_check(&c, &f, &tiny).unwrap().passed);
}

#[test]
fn norm_derivative_identity_holds() {
    let c = hypercube(2);
    let sg = Semigroup::new(&c);
    let mut rng = trial_rng(44, 0);
    let f = gaussian_vec(&mut rng, 4, 1.0);
    for t in [0.1, 0.7] {
        let r = norm_derivative_identity(&c, &sg, &f, 1.5, 2.0, t, 1e-5).unwrap();
        assert!((r.lhs - r.rhs).abs() < 1e-6 * (1.0 + r.rhs.abs()), "t = {t}: {r:?}");
    }
}

#[test]
fn nash_fails_for_tiny_constants() {
    let c = complete(3);
    let f = [1.0, 2.0, 4.0];
    assert!(nash_check(&c, &f, 6.0, 12.0 * 3f64.sqrt(), 1.0).unwrap().passed);
    // with β → ∞ and A = 1 the inequality reads ‖f‖₂ ≤ ‖f‖₁
    assert!(!nash_check(&c, &f, 6.0, 1e12, 1.0).unwrap().passed);
}

#[test]
fn resistance_two_point_formula() {
    // Γ(f)(0) = aΔ²/2 and Γ(f)(1) = bΔ²/2, so ρ = √(2/max(a,b))
    for (a, b) in [(1.0, 1.0), (1.0, 4.0), (2.5, 0.5)] {
        let r = resistance_distance(&two_point(a, b), 0, 1).unwrap();
        let expect = (2.0 / f64::max(a, b)).sqrt();
        assert!((r.value - expect).abs() < 1e-8, "({a}, {b}): {}", r.value);
        assert!(r.upper >= r.value - 1e-12);
    }
}

#[test]
fn resistance_path_endpoints() {
    // maximize ΣΔᵢ subject to Δ₁², Δₘ² ≤ 2 and Δᵢ² + Δᵢ₊₁² ≤ 2: the optimum
    // alternates, giving m for even m and √(2(k+1)² + 2k²) for m = 2k + 1
    for (n, expect) in [(2, 2f64.sqrt()), (3, 2.0), (4, 10f64.sqrt()), (5, 4.0), (6, 26f64.sqrt())] {
        let r = resistance_distance(&path(n), 0, n - 1).unwrap();
        assert!((r.value - expect).abs() < 1e-7, "n = {n}: {}", r.value);
        assert!(r.kkt_residual < 1e-6);
    }
}

#[test]
fn resistance_diameter_within_bound() {
    let c = complete(3);
    let d = resistance_diameter(&c).unwrap();
    let phi = GrowthFunction::Log { n: 12.0, kappa: 3f64.sqrt() };
    assert!(d.upper <= diameter_bound(&phi).unwrap());
    assert!(d.comparison_holds);
}

#[test]
fn partial_sums_are_one_lipschitz() {
    let c = poisson(1.0, 80);
    let s = birth_death_partial_sums(&c, |x| x as f64);
    assert!(s.lipschitz <= 1.0 + 1e-12, "{}", s.lipschitz);
    // Σ 1/√x diverges, so the range grows without bound in the cutoff
    assert!(s.range > 2.0 * (80f64.sqrt() - 1.0));
}
