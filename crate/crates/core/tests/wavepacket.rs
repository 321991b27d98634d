use decoherence_core::grid::Axis;
use decoherence_core::wavepacket::{
    fringe_box, fringe_fourier, free_evolve_offdiagonal, initial_field, initial_wigner_hat,
    initial_wigner_hat_on, simulate_fringes, Component, Envelope, SpatialField, TwoScaleGrid,
    WavePacketSpec,
};
use decoherence_core::wigner::{wigner_transform, WignerGrid};
use decoherence_core::{Complex64, DispersionModel, Error};
use proptest::prelude::*;

const PI: f64 = std::f64::consts::PI;

fn spec(d: usize, eps: f64) -> WavePacketSpec {
    let mut p = vec![0.0; d];
    let mut q = vec![0.0; d];
    p[d - 1] = 2.0;
    q[d - 1] = 1.0;
    WavePacketSpec::new(Envelope::default(), p, q, eps).unwrap()
}

#[test]
fn rejects_bad_specs() {
    let e = Envelope::default();
    assert!(WavePacketSpec::new(e, vec![0.0], vec![1.0], 0.1).is_err());
    assert!(WavePacketSpec::new(e, vec![1.0, 0.0], vec![0.0, 1.0], 0.1).is_err());
    assert!(WavePacketSpec::new(e, vec![1.0], vec![1.0], 1.5).is_err());
    assert!(WavePacketSpec::new(Envelope::Gaussian { width: 1.0 }, vec![1.0], vec![-2.0], 0.2).is_err());
    let s = spec(3, 0.2);
    let n = s.norm_squared();
    assert!((n - 2.0).abs() < 1e-12);
}

#[test]
fn gaussian_wigner_function() {
    // W(x,v) = π^{-1} e^{-x²-v²} for ψ = π^{-1/4} e^{-x²/2}
    let axes = vec![Axis::new(-12.8, 0.2, 128)];
    let psi = SpatialField::sample(axes, |x| Complex64::new(PI.powf(-0.25) * (-x[0] * x[0] / 2.0).exp(), 0.0));
    let w = wigner_transform(&psi, Component::Total, 1.0).unwrap();
    let mut err: f64 = 0.0;
    for i in 0..w.n_space() {
        let x = w.space_point(i)[0];
        for j in 0..w.n_v() {
            let v = w.v_point(j)[0];
            let exact = (-x * x - v * v).exp() / PI;
            err = err.max((w.at(i, j) - exact).norm());
        }
    }
    assert!(err < 1e-12, "sup error {err:e}");

    // global phase invariance
    let rotated = SpatialField {
        axes: psi.axes.clone(),
        values: psi.values.iter().map(|v| v * Complex64::from_polar(1.0, 0.7)).collect(),
    };
    let w2 = wigner_transform(&rotated, Component::Total, 1.0).unwrap();
    let diff = w.values.iter().zip(&w2.values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    assert!(diff < 1e-15);
}

#[test]
fn transform_flags_insufficient_padding() {
    let axes = vec![Axis::new(-4.0, 0.125, 64)];
    let psi = SpatialField::sample(axes, |x| Complex64::new((-x[0] * x[0] / 2.0).exp(), 0.0));
    assert!(matches!(wigner_transform(&psi, Component::Total, 1.0), Err(Error::Aliasing(_))));
}

#[test]
fn fft_route_matches_closed_form_components() {
    let s = spec(1, 0.4);
    let axes = vec![Axis::new(-64.0, 0.25, 512)];
    let psi = initial_field(&s, axes);
    let w = wigner_transform(&psi, Component::Total, s.epsilon).unwrap().to_fourier().unwrap();
    let closed = initial_wigner_hat_on(&s, Component::Total, w.space_axes.clone(), w.v_axes.clone()).unwrap();
    let err = w
        .values
        .iter()
        .zip(&closed.values)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    let peak = closed.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
    assert!(err < 1e-6, "sup error {err:e} (peak {peak})");
}

#[test]
fn plus_minus_slice_at_twice_p() {
    let s = spec(3, 0.2);
    let xi = [0.0, 0.0, 4.0];
    let eps: f64 = 0.2;
    for v in [[0.0, 0.0, 0.0], [0.05, -0.1, 0.02], [0.3, 0.0, -0.2]] {
        let got = s.wigner_hat(Component::PlusMinus, &xi, &v);
        let fh = Envelope::default().hat(&[v[0] / eps, v[1] / eps, v[2] / eps]).norm_sqr();
        let expected = (2.0 * PI).sqrt().powi(-3) * eps.powi(-3) * Complex64::from_polar(fh, 2.0 * v[2] / eps);
        assert!((got - expected).norm() < 1e-12 * (1.0 + expected.norm()));
    }
    // Q = 0 makes the central value real and positive
    let s0 = WavePacketSpec::new(Envelope::default(), vec![0.0, 0.0, 2.0], vec![0.0; 3], 0.2).unwrap();
    let w = s0.wigner_hat(Component::PlusMinus, &xi, &[0.0; 3]);
    assert!(w.re > 0.0 && w.im.abs() < 1e-15);
}

#[test]
fn plus_plus_marginal_is_normalized() {
    let s = spec(3, 0.2);
    let g = TwoScaleGrid { n_xi: 1, n_v: 31, span: 7.0 };
    let w = initial_wigner_hat(&s, Component::PlusPlus, &g).unwrap();
    let m = w.v_integral()[0] * (2.0 * PI).powf(1.5);
    assert!((m - 1.0).norm() < 1e-10, "{m}");
}

#[test]
fn grid_resolution_is_enforced() {
    let s = spec(1, 0.05);
    let coarse = vec![Axis::centered(0.0, 0.2, 21)];
    let r = initial_wigner_hat_on(&s, Component::PlusMinus, vec![Axis::point(4.0)], coarse);
    assert!(matches!(r, Err(Error::GridResolution(_))));
    let off = initial_wigner_hat_on(&s, Component::PlusMinus, vec![Axis::point(0.0)], vec![Axis::centered(0.0, 0.001, 41)]);
    assert!(matches!(off, Err(Error::GridResolution(_))));
}

#[test]
fn free_evolution_is_a_pure_phase() {
    let m = DispersionModel::quadratic_einstein().with_dim(1);
    let s = spec(1, 0.1);
    let g = TwoScaleGrid { n_xi: 13, n_v: 41, span: 6.0 };
    let w0 = initial_wigner_hat(&s, Component::PlusMinus, &g).unwrap();
    assert_eq!(free_evolve_offdiagonal(&s, &m, 0.0, &w0).unwrap(), w0);
    let wt = free_evolve_offdiagonal(&s, &m, 1.3, &w0).unwrap();
    for (a, b) in w0.values.iter().zip(&wt.values) {
        assert!((a.norm() - b.norm()).abs() < 1e-14 * (1.0 + a.norm()));
    }
    let pp = initial_wigner_hat(&s, Component::PlusPlus, &g).unwrap();
    assert!(free_evolve_offdiagonal(&s, &m, 1.0, &pp).is_err());
}

#[test]
fn overlap_pattern_in_one_dimension() {
    let m = DispersionModel::quadratic_einstein().with_dim(1);
    let s = spec(1, 0.1);
    let t_bar = 0.5 / s.epsilon;
    let axes = fringe_box(&s, 0.5);
    let psi = initial_field(&s, axes.clone());
    let psi_t = psi.free_evolve(&m, t_bar);
    let plus = SpatialField::sample(axes.clone(), |x| s.psi(1.0, x)).free_evolve(&m, t_bar);
    let rho = psi_t.density();
    let peak = rho.iter().cloned().fold(0.0, f64::max);
    let mut err: f64 = 0.0;
    for (i, r) in rho.iter().enumerate() {
        let x = axes[0].node(i);
        let pattern = 2.0 * (1.0 + (4.0 * x).cos()) * plus.values[i].norm_sqr();
        err = err.max((r - pattern).abs());
    }
    assert!(err < 1e-8 * peak, "{err:e}");
    // mass is conserved at every time
    for t in [0.0, 0.3 * t_bar, t_bar, 2.0 * t_bar] {
        let rho = psi.free_evolve(&m, t).density();
        let f0 = fringe_fourier(&axes, &rho, &[0.0]);
        assert!((f0.re - psi.norm_squared()).abs() < 1e-8 && f0.im.abs() < 1e-8);
    }
}

#[test]
fn fringe_limits() {
    let m = DispersionModel::quadratic_einstein().with_dim(1);
    let s = spec(1, 0.4);
    let sweep = simulate_fringes(&s, &m, &[0.4, 0.2, 0.1, 0.05], &[0.0, 1.0, -1.0, 0.5]).unwrap();
    for (lim, target) in sweep.limits.iter().zip([2.0, 1.0, 1.0, 0.0]) {
        assert!((lim.extrapolated - target).norm() < 2e-2, "{lim:?}");
    }
}

#[test]
fn grid_dump_roundtrip() {
    let s = spec(1, 0.2);
    let g = TwoScaleGrid { n_xi: 9, n_v: 17, span: 4.0 };
    let w = initial_wigner_hat(&s, Component::PlusMinus, &g).unwrap();
    let dir = std::env::temp_dir().join(format!("wigner-roundtrip-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let stem = dir.join("w");
    w.write(&stem).unwrap();
    let back = WignerGrid::read(&stem).unwrap();
    assert_eq!(back, w);
    std::fs::remove_dir_all(&dir).unwrap();
}

proptest! {
    #[test]
    fn hermitian_pairing(xi in -5.0f64..5.0, v in -1.0f64..1.0, eps in 0.05f64..0.9) {
        let s = spec(1, eps);
        let a = s.wigner_hat(Component::PlusMinus, &[xi], &[v]);
        let b = s.wigner_hat(Component::MinusPlus, &[-xi], &[v]).conj();
        prop_assert!((a - b).norm() <= 1e-12 * (1.0 + a.norm()));
        for c in [Component::PlusPlus, Component::MinusMinus] {
            let w1 = s.wigner_hat(c, &[xi], &[v]);
            let w2 = s.wigner_hat(c, &[-xi], &[v]).conj();
            prop_assert!((w1 - w2).norm() <= 1e-12 * (1.0 + w1.norm()));
        }
    }
}
