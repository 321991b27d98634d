use decoherence_core::analysis::*;
use decoherence_core::{Branch, DispersionModel};

mod common;

const PI: f64 = std::f64::consts::PI;

/// 𝓛(r) of the default model.
fn envelope(r: f64) -> f64 {
    (-r * r).exp() * (common::occupancy() + 1.0)
}

/// m = 1 single-resolvent integral for e = |q|²/2, ω ≡ 1: Φ is affine in the
/// polar cosine, so the cosine integral is an arctangent difference.
fn uno_m1_oracle(p: f64, theta: f64, eta: f64, sign: f64) -> f64 {
    let n = 400_000;
    let hi = 8.0;
    let h = hi / n as f64;
    let mut s = 0.0;
    for i in 0..n {
        let r = (i as f64 + 0.5) * h;
        let a = theta - 0.5 * (r * r + p * p) - sign;
        let b = p * r;
        let inner = if b < 1e-12 {
            2.0 / (a * a + eta * eta)
        } else {
            (((a + b) / eta).atan() - ((a - b) / eta).atan()) / (b * eta)
        };
        s += r * r * envelope(r) * inner;
    }
    2.0 * PI * s * h
}

/// Same integral in α = E + η sinh t, where the integrand is smooth.
fn tre_oracle(level: f64, eta: f64) -> f64 {
    let (n, t_max) = (200_000, 40.0);
    let h = 2.0 * t_max / n as f64;
    (0..=n)
        .map(|i| {
            let t = -t_max + i as f64 * h;
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            w / (level + eta * t.sinh()).hypot(1.0)
        })
        .sum::<f64>()
        * h
}

/// Volume of B(0, R) ∩ B(d ê, r).
fn lens(big: f64, r: f64, d: f64) -> f64 {
    if d >= big + r {
        0.0
    } else if d <= (big - r).abs() {
        4.0 / 3.0 * PI * big.min(r).powi(3)
    } else {
        PI * (big + r - d).powi(2) * (d * d + 2.0 * d * r - 3.0 * r * r + 2.0 * d * big + 6.0 * r * big - 3.0 * big * big)
            / (12.0 * d)
    }
}

fn model() -> DispersionModel {
    DispersionModel::quadratic_einstein()
}

#[test]
fn single_resolvent_matches_arctangent_form() {
    let m = model();
    for (p, theta, sign) in [(0.0, 1.5, 1.0), (1.0, 2.0, 1.0), (2.0, 0.5, -1.0), (1.0, 3.0, -1.0)] {
        let br = Branch::from_sign(sign as i32).unwrap();
        for eta in [1.0, 1e-2, 1e-3] {
            let v = uno_integral(&m, p, theta, eta, 1, br, 1e-8).unwrap();
            let o = uno_m1_oracle(p, theta, eta, sign);
            assert!((v / o - 1.0).abs() < 1e-6, "p {p} theta {theta} eta {eta}: {v} vs {o}");
        }
    }
}

#[test]
fn single_resolvent_trivial_cases() {
    let m = model();
    let total = m.branch_weight(Branch::Emission);
    for theta in [-1.0, 0.0, 1.5, 4.0] {
        for order in [1, 2] {
            let v = uno_integral(&m, 1.0, theta, 1.0, order, Branch::Absorption, 1e-8).unwrap();
            assert!(v <= total * (1.0 + 1e-9), "{v} > {total}");
        }
    }
    let free = m.clone().decoupled();
    assert_eq!(uno_integral(&free, 1.0, 1.5, 1e-2, 2, Branch::Emission, 1e-8).unwrap(), 0.0);
    assert_eq!(due_integral(&free, 0.0, 1.0, 1.5, 2.0, 1e-2, Branch::Emission, 1e-8).unwrap(), 0.0);
    assert!(uno_integral(&m.clone().with_dim(2), 0.0, 1.5, 0.1, 1, Branch::Emission, 1e-8).is_err());
    assert!(uno_integral(&m, 0.0, 1.5, 0.0, 1, Branch::Emission, 1e-8).is_err());
}

#[test]
fn two_resolvent_reduces_and_is_symmetric() {
    let m = model();
    let rel = 1e-8;
    // p = u, θ = θ̃: the product is |·|², i.e. the m = 1 integral over ⟨p⟩².
    for (p, theta, eta) in [(0.0, 1.5, 0.1), (1.0, 2.0, 1e-2), (2.0, 3.0, 1e-3)] {
        let j = due_integral(&m, p, 0.0, theta, theta, eta, Branch::Emission, rel).unwrap();
        let u = uno_m1_oracle(p, theta, eta, 1.0) / (1.0 + p * p);
        assert!((j / u - 1.0).abs() < 1e-6, "{j} vs {u}");
    }
    for (p, sep, th, tt, eta) in [(0.0, 1.0, 1.5, 2.5, 1e-2), (1.0, 0.3, 2.0, 1.5, 1e-3), (0.5, 3.0, 2.5, 4.0, 0.1)] {
        let j = due_integral(&m, p, sep, th, tt, eta, Branch::Emission, rel).unwrap();
        // swap (p, θ) with (u, θ̃): different axis base, same integral
        let k = due_integral(&m, p + sep, -sep, tt, th, eta, Branch::Emission, rel).unwrap();
        assert!((j / k - 1.0).abs() < 1e-6, "{j} vs {k}");
        // Cauchy–Schwarz against the single-resolvent integrals
        let a = uno_m1_oracle(p, th, eta, 1.0);
        let b = uno_m1_oracle(p + sep, tt, eta, 1.0);
        let cs = (a * b).sqrt() / ((1.0 + p * p).sqrt() * (1.0 + (p + sep).powi(2)).sqrt());
        assert!(j <= cs * (1.0 + 1e-6), "{j} > {cs}");
    }
}

#[test]
fn coincident_momenta_take_the_eta_branch() {
    let m = model();
    let rows = due_coincident_branch(&m, 0.0, 1.25, &[1e-1, 1e-2, 1e-3], Branch::Emission, 1e-7).unwrap();
    for r in &rows {
        assert!(r.coincident_shape < r.transversal_shape);
        assert_eq!(due_shape(0.0, 1.25, 1.25, r.eta), r.coincident_shape);
    }
    // the integral grows like 1/η, which the log*η/η branch tracks and the
    // (log*η)²/η branch overestimates by a growing log factor
    let c: Vec<f64> = rows.iter().map(|r| r.value / r.coincident_shape).collect();
    let t: Vec<f64> = rows.iter().map(|r| r.value / r.transversal_shape).collect();
    println!("coincident ratios {c:?}, transversal ratios {t:?}");
    assert!(t[2] < t[1] && t[1] < t[0]);
    let eta_scaled: Vec<f64> = rows.iter().map(|r| r.value * r.eta).collect();
    assert!((eta_scaled[2] / eta_scaled[1] - 1.0).abs() < 0.05, "{eta_scaled:?}");

    // crossover of the two branches sits where (log*η)²/|p−u|_⋆ = log*η/η
    let eta = 1e-3;
    assert!(due_shape(0.5 * eta, 1.0, 1.0, eta) < due_shape(2.0 * eta, 1.0, 1.0, eta) * 10.0);
    assert_eq!(
        due_shape(2.0 * eta, 1.0, 1.0, eta),
        log_star(eta).powi(2) / (lower_star(2.0 * eta, eta) * japanese(1.0))
    );
}

#[test]
fn alpha_integral_matches_sinh_substitution() {
    for level in [-3.0, 0.0, 0.5, 2.0, 10.0] {
        for eta in [1.0, 1e-1, 1e-3] {
            let v = tre_integral(level, eta).unwrap();
            let o = tre_oracle(level, eta);
            assert!((v / o - 1.0).abs() < 1e-9, "{level} {eta}: {v} vs {o}");
        }
    }
    assert!(tre_integral(0.0, -1.0).is_err());
}

#[test]
fn alpha_probe_scales_with_log_star() {
    let p = check_tre(&EstimateLattice::default()).unwrap();
    assert!(p.passed, "{p:?}");
    assert!(p.check("log_slope").unwrap().passed);
    assert!(p.check("unit_eta_spread").unwrap().passed);
    // η = 1 at level 0 is ∫ dα/⟨α⟩² = π
    let unit = p.samples.iter().find(|s| s.get("level") == 0.0 && s.get("eta") == 1.0).unwrap();
    assert!((unit.value - PI).abs() < 1e-9);
}

#[test]
fn level_set_volume_matches_lens_formula() {
    let m = model();
    let (theta, delta, rho): (f64, f64, f64) = (1.5, 0.05, 0.5);
    let q = [0.3, -0.8, 0.4];
    let d = q.iter().map(|x| x * x).sum::<f64>().sqrt();
    let outer = (2.0 * (theta + delta - 1.0)).sqrt();
    let inner = (2.0 * (theta - delta - 1.0)).sqrt();
    let exact = lens(outer, rho, d) - lens(inner, rho, d);
    let set = LevelSet {
        p: vec![0.0; 3],
        theta,
        delta,
        branch: Branch::Emission,
    };
    let v = level_set_volume(&m, &[set.clone()], &q, rho, 400_000, 3).unwrap();
    assert!((v.volume - exact).abs() < 4.0 * v.std_error, "{v:?} vs {exact}");
    assert!(v.ci_low <= exact && exact <= v.ci_high + 2.0 * v.std_error);
    assert_eq!(v, level_set_volume(&m, &[set.clone()], &q, rho, 400_000, 3).unwrap());

    let empty = LevelSet { theta: -5.0, ..set.clone() };
    let e = level_set_volume(&m, &[empty], &q, rho, 10_000, 3).unwrap();
    assert_eq!((e.volume, e.hits), (0.0, 0));

    assert!(level_set_volume(&m, &[set.clone()], &q, 0.6, 10_000, 3).is_err());
    assert!(level_set_volume(&m, &[LevelSet { delta: 0.7, ..set.clone() }], &q, 0.5, 10_000, 3).is_err());
    assert!(level_set_volume(&m.clone().with_dim(2), &[set], &q, 0.5, 10_000, 3).is_err());
}

#[test]
fn level_set_probes_scale_linearly_and_quadratically() {
    let m = model();
    let lat = EstimateLattice::default();
    let one = check_intersection(&m, &lat).unwrap();
    assert!(one.passed, "{:?}", one.checks);
    // thin-shell limit: |E ∩ B| → 2δ·πρ² since |∇Φ| = 1 on the shell
    assert!((one.fitted_constant / (2.0 * PI) - 1.0).abs() < 0.05, "{}", one.fitted_constant);
    let two = check_transversality(&m, &lat).unwrap();
    assert!(two.passed, "{:?}", two.checks);
    // two shells meeting at 60°: (2δ)²/sin 60° times the chord 2ρ
    let thin = 8.0 / (3f64.sqrt() / 2.0);
    assert!((two.fitted_constant / thin - 1.0).abs() < 0.1, "{} vs {thin}", two.fitted_constant);
}

#[test]
fn decoupled_probes_are_trivial() {
    let free = model().decoupled();
    let lat = EstimateLattice {
        p_norms: vec![0.0, 1.0],
        thetas: vec![1.0, 2.0],
        etas: vec![1.0, 0.1],
        ..Default::default()
    };
    for probe in [check_uno(&free, &lat).unwrap(), check_due(&free, &lat).unwrap()] {
        assert_eq!(probe.fitted_constant, 0.0);
        assert!(probe.passed);
    }
}

#[test]
fn upsilon_derivative_probe_is_refinement_stable() {
    let m = model();
    let p = check_upsilon(&m, &EstimateLattice::default()).unwrap();
    assert!(p.stable, "{} vs {}", p.fitted_constant, p.refined_constant);
    let sup = p.check("sup_upsilon").unwrap().value;
    assert!(sup.is_finite() && sup > 0.0);
    // the derivative peaks at the emission threshold α = ω = 1
    let w = p.worst_case.as_ref().unwrap();
    assert_eq!(w.get("alpha"), 1.0);
}

#[test]
fn probe_serializes_to_json() {
    let p = check_tre(&EstimateLattice::default()).unwrap();
    let s = serde_json::to_string(&p).unwrap();
    let back: EstimateProbe = serde_json::from_str(&s).unwrap();
    assert_eq!(back, p);
    let lat: EstimateLattice = serde_json::from_str(&serde_json::to_string(&EstimateLattice::default()).unwrap()).unwrap();
    assert_eq!(lat, EstimateLattice::default());
    assert!(serde_json::from_str::<EstimateLattice>(r#"{"bogus": 1}"#).is_err());
}
