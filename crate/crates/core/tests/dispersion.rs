use decoherence_core::dispersion::{validate_assumptions, ValidationLattice};
use decoherence_core::{Branch, DispersionModel, RadialProfile};
use proptest::prelude::*;

fn occ() -> f64 {
    1.0 / (2f64.exp() - 1.0)
}

#[test]
fn bose_factor_examples() {
    let m = DispersionModel::quadratic_einstein();
    assert!((m.thermal_occupancy(&[1.0, -2.0, 0.5]).unwrap() - 0.156518).abs() < 1e-6);

    let cold = DispersionModel { beta: 50.0, ..DispersionModel::quadratic_einstein() };
    assert!(cold.thermal_occupancy(&[0.0, 0.0, 0.0]).unwrap() < 1e-20);

    let dispersive = DispersionModel {
        phonon: RadialProfile::Quadratic { offset: 1.0, coef: 1.0 },
        ..DispersionModel::quadratic_einstein()
    };
    let n = dispersive.thermal_occupancy(&[0.0, 2.0, 0.0]).unwrap();
    assert!((n - 1.0 / (6f64.exp() - 1.0)).abs() < 1e-15);
}

#[test]
fn divergent_occupancy_is_rejected() {
    let m = DispersionModel { mu: 1.0, ..DispersionModel::quadratic_einstein() };
    assert!(m.thermal_occupancy(&[0.0, 0.0, 0.0]).is_err());
}

#[test]
fn coupling_weight_examples() {
    let m = DispersionModel::quadratic_einstein();
    let k0 = [0.0, 0.0, 0.0];
    assert!((m.coupling_weight(&k0, Branch::Emission).unwrap() - (occ() + 1.0)).abs() < 1e-15);
    assert!((m.coupling_weight(&k0, Branch::Absorption).unwrap() - occ()).abs() < 1e-15);
    let off = m.clone().decoupled();
    for br in Branch::BOTH {
        assert_eq!(off.coupling_weight(&[0.3, 1.0, 0.0], br).unwrap(), 0.0);
    }
}

#[test]
fn phi_sigma_examples() {
    let m = DispersionModel::quadratic_einstein();
    assert_eq!(m.phi_sigma(&[0.0; 3], &[0.0; 3], Branch::Emission), 1.0);
    assert_eq!(m.phi_sigma(&[1.0, 0.0, 0.0], &[1.0, 0.0, 0.0], Branch::Absorption), 1.0);
    let p = [0.3, -1.2, 0.7];
    let k = [-0.3, 1.2, -0.7];
    assert_eq!(m.phi_sigma(&p, &k, Branch::Emission), m.omega(&p));
}

#[test]
fn default_model_passes_every_check() {
    let m = DispersionModel::quadratic_einstein();
    for lattice in [ValidationLattice::default(), ValidationLattice::default().refined()] {
        let r = validate_assumptions(&m, &lattice);
        let failed: Vec<_> = r.failures().map(|c| (&c.name, c.order)).collect();
        assert!(r.passed, "{failed:?}");
        let lo = r.check("hessian-lower").unwrap().fitted_constant;
        let hi = r.check("hessian-upper").unwrap().fitted_constant;
        assert!((lo - 1.0).abs() < 1e-6 && (hi - 1.0).abs() < 1e-6);
    }
}

#[test]
fn quadratic_phonon_breaks_the_hessian_bound() {
    let m = DispersionModel {
        phonon: RadialProfile::Quadratic { offset: 1.0, coef: 1.0 },
        ..DispersionModel::quadratic_einstein()
    };
    let r = validate_assumptions(&m, &ValidationLattice::default());
    assert!(!r.passed);
    // Hess Φ_± = (1 ± 2)·I
    let hi = r.check("hessian-upper").unwrap();
    assert!(!hi.passed && (hi.fitted_constant - 3.0).abs() < 1e-5);
    let lo = r.check("hessian-lower").unwrap();
    assert!(!lo.passed && (lo.fitted_constant + 1.0).abs() < 1e-5);
}

#[test]
fn slow_form_factor_fails_the_decay_check() {
    let m = DispersionModel {
        form_factor: RadialProfile::InverseBracket { power: 1.0 },
        ..DispersionModel::quadratic_einstein()
    };
    let r = validate_assumptions(&m, &ValidationLattice::default());
    assert!(!r.passed);
    let tail = r.check("form-factor-tail-slope").unwrap();
    assert!(!tail.passed);
    assert!((tail.fitted_constant + 1.0).abs() < 1e-2, "{}", tail.fitted_constant);
}

#[test]
fn trace_class_gap_is_checked() {
    let m = DispersionModel { mu: 0.5, ..DispersionModel::quadratic_einstein() };
    let r = validate_assumptions(&m, &ValidationLattice::default());
    assert!(!r.check("trace-class").unwrap().passed);
}

fn rotate(k: [f64; 3], a: f64, b: f64) -> [f64; 3] {
    let (sa, ca) = a.sin_cos();
    let (sb, cb) = b.sin_cos();
    let x = [ca * k[0] - sa * k[1], sa * k[0] + ca * k[1], k[2]];
    [x[0], cb * x[1] - sb * x[2], sb * x[1] + cb * x[2]]
}

proptest! {
    #[test]
    fn branch_weights_are_ordered(k in prop::array::uniform3(-6.0f64..6.0)) {
        let m = DispersionModel::quadratic_einstein();
        let lo = m.coupling_weight(&k, Branch::Absorption).unwrap();
        let hi = m.coupling_weight(&k, Branch::Emission).unwrap();
        prop_assert!(0.0 <= lo && lo <= hi);
        prop_assert!(hi <= m.coupling_envelope(&k).unwrap() * (1.0 + 1e-15));
    }

    #[test]
    fn branches_differ_by_two_omega(
        p in prop::array::uniform3(-4.0f64..4.0),
        k in prop::array::uniform3(-4.0f64..4.0),
    ) {
        let m = DispersionModel {
            phonon: RadialProfile::Relativistic { mass: 0.5 },
            ..DispersionModel::quadratic_einstein()
        };
        let d = m.phi_sigma(&p, &k, Branch::Emission) - m.phi_sigma(&p, &k, Branch::Absorption);
        prop_assert!((d - 2.0 * m.omega(&k)).abs() <= 1e-12 * (1.0 + d.abs()));
    }

    #[test]
    fn evaluators_depend_on_the_norm_only(
        k in prop::array::uniform3(-5.0f64..5.0),
        a in 0.0f64..6.3,
        b in 0.0f64..6.3,
    ) {
        let m = DispersionModel::quadratic_einstein();
        let r = rotate(k, a, b);
        let same = |x: f64, y: f64| (x - y).abs() <= 1e-13 * (1.0 + x.abs());
        prop_assert!(same(m.e(&k), m.e(&r)));
        prop_assert!(same(m.omega(&k), m.omega(&r)));
        prop_assert!(same(m.thermal_occupancy(&k).unwrap(), m.thermal_occupancy(&r).unwrap()));
        let l = m.coupling_weight(&k, Branch::Emission).unwrap();
        prop_assert!(same(l, m.coupling_weight(&r, Branch::Emission).unwrap()));
    }
}
