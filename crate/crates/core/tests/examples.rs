use curvcheck::chain::{build_chain, ChainSpec, DEFAULT_TOLERANCE};
use curvcheck::families::{make_example, poisson_tail, poisson_test_function, Family};
use curvcheck::{CdFunction, Error};
use serde_json::{json, Map, Value};

fn params(v: Value) -> Map<String, Value> {
    v.as_object().unwrap().clone()
}

#[test]
fn from_params_defaults_and_errors() {
    assert_eq!(
        Family::from_params("complete", &params(json!({"n": 4}))).unwrap(),
        Family::Complete { n: 4, alpha: 0.25 }
    );
    assert_eq!(
        Family::from_params("birth_death", &params(json!({"lambda": 2.0, "cutoff": 3}))).unwrap(),
        Family::BirthDeath {
            birth: vec![2.0; 3],
            death: vec![1.0, 2.0, 3.0]
        }
    );
    for (name, p) in [
        ("complete", json!({"n": 4, "beta": 1})),
        ("complete", json!({"n": 2.5})),
        ("hypercube", json!({})),
        ("torus", json!({})),
        ("two_point", json!({"a": -1.0, "b": 1.0})),
        ("complete", json!({"n": 4, "alpha": 0.6})),
    ] {
        assert!(
            matches!(Family::from_params(name, &params(p.clone())), Err(Error::BadParams(_))),
            "{name} {p}"
        );
    }
}

#[test]
fn spec_round_trip() {
    for fam in [
        Family::TwoPoint { a: 1.0, b: 3.0 },
        Family::Complete { n: 5, alpha: 0.1 },
        Family::Hypercube { d: 3 },
        Family::poisson(1.5, 1.0, 10),
    ] {
        let text = serde_json::to_string(&fam.to_spec()).unwrap();
        let chain = build_chain(&ChainSpec::from_json(&text).unwrap(), DEFAULT_TOLERANCE).unwrap();
        let direct = make_example(&fam).unwrap().chain;
        assert_eq!(chain.len(), direct.len());
        for (a, b) in chain.pi().iter().zip(direct.pi()) {
            assert!((a - b).abs() < 1e-14);
        }
    }
}

#[test]
fn certificate_constants() {
    let k3 = make_example(&Family::Complete { n: 3, alpha: 0.25 }).unwrap().certificate.unwrap();
    assert!((k3.kappa - 3f64.sqrt()).abs() < 1e-15);
    assert_eq!(k3.cd, CdFunction::Power { n: 12.0, delta: 1.0 });

    let q = make_example(&Family::Hypercube { d: 4 }).unwrap().certificate.unwrap();
    assert_eq!(q.kappa, 2.0);

    let tp = make_example(&Family::TwoPoint { a: 1.0, b: 2.0 }).unwrap().certificate.unwrap();
    assert_eq!(tp.kappa, 0.0);
    assert_eq!(
        tp.cd,
        CdFunction::Nu {
            out_scale: 1.0,
            c: 1.5,
            d: 0.5,
            arg_scale: 2.0
        }
    );

    let bd = make_example(&Family::poisson(1.0, 1.0, 20)).unwrap();
    assert!(bd.certificate.is_none());
    assert!(!bd.notes.is_empty());
}

#[test]
fn weighted_complete_reduces_to_complete() {
    let w = make_example(&Family::WeightedComplete {
        l: vec![1.0; 4],
        alpha: 0.25,
        delta: 1.0,
    })
    .unwrap();
    let c = make_example(&Family::Complete { n: 4, alpha: 0.25 }).unwrap();
    let (wc, cc) = (w.certificate.unwrap(), c.certificate.unwrap());
    assert!((wc.kappa - cc.kappa).abs() < 1e-15);
    assert_eq!(wc.cd, cc.cd);
    assert_eq!(w.chain.edges(), c.chain.edges());
}

#[test]
fn hypercube_labels_are_bit_strings() {
    let q = make_example(&Family::Hypercube { d: 3 }).unwrap().chain;
    assert_eq!(q.label(0), "000");
    assert_eq!(q.label(1), "100");
    assert_eq!(q.label(6), "011");
    assert!(matches!(make_example(&Family::Hypercube { d: 17 }), Err(Error::BadParams(_))));
}

#[test]
fn poisson_tail_values() {
    // P(Poisson(1) > 3) = 1 − e⁻¹(1 + 1 + 1/2 + 1/6)
    let expect = 1.0 - (-1f64).exp() * (1.0 + 1.0 + 0.5 + 1.0 / 6.0);
    assert!((poisson_tail(1.0, 3) - expect).abs() < 1e-14);
    let t = poisson_test_function(1.0, 2.0, 60).unwrap();
    assert!(t.tail < 1e-8);
    assert!((t.renormalization - 1.0).abs() < 1e-8);
    assert!(matches!(
        poisson_test_function(1.0, 5.0, 60),
        Err(Error::TruncationInsufficient { .. })
    ));
}
