use splitcert::ensembles::{generate, EnsembleKind, EnsembleParams};
use splitcert::subspace_geometry::{self as sg, Subspace};
use splitcert::NormSpec;

#[test]
fn kinds_parse_and_generate() {
    for kind in EnsembleKind::all() {
        let name = serde_json::to_value(kind).unwrap();
        assert_eq!(EnsembleKind::parse(name.as_str().unwrap()).unwrap(), kind);
        let g = generate(&EnsembleParams::new(kind, 3, 20, 7)).unwrap();
        assert_eq!(g.cocycle.len(), 20);
        assert_eq!(g.cocycle.dim(), 3);
    }
    assert!(EnsembleKind::parse("bogus").is_err());
}

#[test]
fn same_seed_same_window() {
    for kind in EnsembleKind::all() {
        let p = EnsembleParams::new(kind, 3, 15, 42);
        assert_eq!(generate(&p).unwrap().cocycle.to_json(), generate(&p).unwrap().cocycle.to_json());
    }
    let a = generate(&EnsembleParams::new(EnsembleKind::PerturbedHyperbolic, 3, 15, 1)).unwrap();
    let b = generate(&EnsembleParams::new(EnsembleKind::PerturbedHyperbolic, 3, 15, 2)).unwrap();
    assert_ne!(a.cocycle.to_json(), b.cocycle.to_json());
}

#[test]
fn truth_is_invariant() {
    for kind in [EnsembleKind::Diag, EnsembleKind::DiagRot, EnsembleKind::ConjugatedHyperbolic, EnsembleKind::RankDeficient] {
        let g = generate(&EnsembleParams::new(kind, 3, 12, 3)).unwrap();
        let (fast, slow) = g.truth.expect("analytic splitting");
        assert_eq!(fast.len(), 13);
        let hs = NormSpec::hilbert(3);
        for j in 0..12 {
            let a = g.cocycle.op(j as i64).unwrap();
            let e = Subspace::from_basis(&fast[j]).unwrap().image(a);
            let e1 = Subspace::from_basis(&fast[j + 1]).unwrap();
            assert!(sg::symmetric_gap(&e, &e1, &hs).unwrap() < 1e-12, "{kind:?}");
            let f = Subspace::from_basis(&slow[j]).unwrap().image(a);
            let f1 = Subspace::from_basis(&slow[j + 1]).unwrap();
            assert!(sg::max_gap(&f, &f1, &hs).unwrap().value < 1e-12, "{kind:?}");
        }
    }
}

#[test]
fn invalid_parameters_are_rejected() {
    let mut p = EnsembleParams::new(EnsembleKind::Diag, 3, 1, 0);
    assert!(generate(&p).is_err());
    p.length = 10;
    p.noise = -1.0;
    assert!(generate(&p).is_err());
    let mut p = EnsembleParams::new(EnsembleKind::DiagRot, 1, 10, 0);
    p.norm = NormSpec::hilbert(1);
    assert!(generate(&p).is_err());
    let mut p = EnsembleParams::new(EnsembleKind::Diag, 3, 10, 0);
    p.norm = NormSpec::hilbert(2);
    assert!(generate(&p).is_err());
}
