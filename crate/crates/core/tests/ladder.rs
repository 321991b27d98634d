use decoherence_core::collision::{phi_p, DEFAULT_ETA_SEQUENCE};
use decoherence_core::ladder::{
    fit_factorial_bound, ladder_n0_propagator_mc, ladder_n0_script, mean_shell_offset, resum_decoherence,
    residue_sweep, residue_time_integral, residue_time_integral_quadrature, simplex_propagator, LadderTerm,
};
use decoherence_core::observables::{pair_offdiagonal_free, TwoScaleObservable};
use decoherence_core::quadrature::{gauss_hermite, gauss_legendre_on};
use decoherence_core::wavepacket::{Envelope, WavePacketSpec};
use decoherence_core::{Complex64, DispersionModel};
use proptest::prelude::*;
use std::sync::OnceLock;

const I: Complex64 = Complex64::new(0.0, 1.0);
const PI: f64 = std::f64::consts::PI;

fn spec(eps: f64) -> WavePacketSpec {
    WavePacketSpec::new(Envelope::default(), vec![0.0, 0.0, 2.0], vec![0.0, 0.0, 1.0], eps).unwrap()
}

fn phi() -> Complex64 {
    static PHI: OnceLock<Complex64> = OnceLock::new();
    *PHI.get_or_init(|| {
        phi_p(&DispersionModel::quadratic_einstein(), &[0.0, 0.0, 2.0], &DEFAULT_ETA_SEQUENCE)
            .unwrap()
            .value
    })
}

#[test]
fn residue_identity_sweep() {
    let rows = residue_sweep(0.7, 5, &[0.1, 1.0, 10.0], &[1.0, 0.1, 0.01]).unwrap();
    assert_eq!(rows.len(), 54);
    // m = 0..=5 covers both readings of "m ≤ 5"
    for r in &rows {
        assert!(r.relative_error < 1e-6, "{r:?}");
    }
}

#[test]
fn residue_small_time_limit() {
    let v = residue_time_integral_quadrature(0.3, 1e-3, 1e-3, 0).unwrap();
    assert!((v + 2.0 * PI * I).norm() < 1e-2, "{v}");
    assert_eq!(residue_time_integral(0.3, 0.0, 0.5, 0), -2.0 * PI * I);
    assert!(residue_time_integral_quadrature(0.3, 0.0, 0.5, 0).is_err());
}

proptest! {
    #[test]
    fn residue_recursion_and_modulation(e in -3.0f64..3.0, t in 0.05f64..20.0, eta in 0.001f64..2.0, m in 1usize..8, de in -1.0f64..1.0) {
        let r = residue_time_integral(e, t, eta, m) / residue_time_integral(e, t, eta, m - 1);
        prop_assert!((r - (-I * t) / m as f64).norm() < 1e-10 * (1.0 + t));
        let shifted = residue_time_integral(e + de, t, eta, m);
        let expect = residue_time_integral(e, t, eta, m) * (-I * t * de).exp();
        prop_assert!((shifted - expect).norm() <= 1e-10 * expect.norm());
    }
}

#[test]
fn simplex_propagator_oracles() {
    // all rates zero: the simplex volume t^{2m}/(2m)!
    for m in 0..5 {
        let v = simplex_propagator(1.7, &vec![0.0; m]);
        let vol = 1.7f64.powi(2 * m as i32) / (1..=2 * m).map(|k| k as f64).product::<f64>();
        assert!((v - vol).norm() < 1e-12 * vol.max(1.0), "m={m}: {v} vs {vol}");
    }
    // m = 2: integrating out the three zero-rate times leaves
    // ∫_{s1+s3 ≤ t} (t − s1 − s3)²/2 · e^{−iΔ1 s1 − iΔ2 s3}
    let (t, d1, d2) = (3.0, 1.3, -0.6);
    let (x, w) = gauss_legendre_on(40, 0.0, 1.0);
    let mut oracle = Complex64::new(0.0, 0.0);
    for (a, wa) in x.iter().zip(&w) {
        let s1 = t * a;
        for (b, wb) in x.iter().zip(&w) {
            let s3 = (t - s1) * b;
            let jac = t * (t - s1);
            oracle += wa * wb * jac * 0.5 * (t - s1 - s3).powi(2) * (-I * (d1 * s1 + d2 * s3)).exp();
        }
    }
    let v = simplex_propagator(t, &[d1, d2]);
    assert!((v - oracle).norm() < 1e-12, "{v} vs {oracle}");
    // m = 1 closed form against the matrix route through a tiny second rate
    let one = simplex_propagator(2.0, &[0.8]);
    let (x, w) = gauss_legendre_on(40, 0.0, 2.0);
    let direct: Complex64 = x.iter().zip(&w).map(|(s, wi)| wi * (2.0 - s) * (-I * 0.8 * s).exp()).sum();
    assert!((one - direct).norm() < 1e-13);
}

#[test]
fn coupling_sampler_moments() {
    // default model: L(k,σ) ∝ e^{−|k|²} c_σ, so E|k|²/2 = 3/4 and E σ = 1/(2𝒩+1)
    let m = DispersionModel::quadratic_einstein();
    let n = 1.0 / (2f64.exp() - 1.0);
    let want = 0.75 + 1.0 / (2.0 * n + 1.0);
    let got = mean_shell_offset(&m, &[0.0, 0.0, 0.0], 400_000, 3).unwrap();
    assert!((got - want).abs() < 0.01, "{got} vs {want}");
}

#[test]
fn anchor_and_decoupled_cells() {
    let m = DispersionModel::quadratic_einstein();
    let s = spec(0.1);
    let j = TwoScaleObservable::fringe(&s.p, &s.p);
    let mc = ladder_n0_propagator_mc(&s, &m, 0, 0, 1.0, 100_000, 1, &j).unwrap();
    let script = ladder_n0_script(&s, &m, 0, 0, 1.0, &j, phi()).unwrap();
    assert_eq!(mc.value, script.value);
    assert_eq!(mc.std_error, 0.0);
    let free = DispersionModel::quadratic_einstein().decoupled();
    for (a, b) in [(1, 0), (0, 2), (1, 1)] {
        let v = ladder_n0_propagator_mc(&s, &free, a, b, 1.0, 1000, 1, &j).unwrap();
        assert_eq!(v.value, Complex64::new(0.0, 0.0));
    }
}

// Deterministic (1,0) cell for the default model: the k-integral of the
// simplex integral is ∫_0^t (t−s) h_p(s) ds with
// h_p(s) = (π/a)^{3/2} e^{−s²|p|²/(4a)} Σ_σ c_σ e^{−isσ}, a = 1 + is/2.
fn oracle_cell_10(eps: f64, big_t: f64) -> Complex64 {
    let n = 1.0 / (2f64.exp() - 1.0);
    let h = |p2: f64, s: f64| {
        let a = Complex64::new(1.0, s / 2.0);
        (PI / a).powf(1.5) * (-(s * s * p2) / (4.0 * a)).exp() * ((n + 1.0) * (-I * s).exp() + n * (I * s).exp())
    };
    let t = big_t / eps;
    let (x, w) = gauss_hermite(14);
    let panels = (4.0 * t).ceil() as usize + 8;
    let (gx, gw) = gauss_legendre_on(16, 0.0, 1.0);
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..14 {
        for j in 0..14 {
            for k in 0..14 {
                let u = [x[i], x[j], x[k]];
                let wt = w[i] * w[j] * w[k] * PI.powf(-1.5);
                let p2 = (eps * u[0]).powi(2) + (eps * u[1]).powi(2) + (2.0 + eps * u[2]).powi(2);
                let hh = t / panels as f64;
                let mut integ = Complex64::new(0.0, 0.0);
                for pn in 0..panels {
                    for (a, b) in gx.iter().zip(&gw) {
                        let s = hh * (pn as f64 + a);
                        integ += (t - s) * h(p2, s) * b * hh;
                    }
                }
                // e^{2iu·Q} e^{−it[e(p1) − e(p2)]} with e(p1) − e(p2) = 2εu·P
                acc += wt * (2.0 * I * u[2] - 4.0 * I * big_t * u[2]).exp() * (-eps) * integ;
            }
        }
    }
    acc
}

#[test]
fn monte_carlo_matches_deterministic_oracle() {
    let m = DispersionModel::quadratic_einstein();
    for eps in [0.2, 0.1] {
        let s = spec(eps);
        let j = TwoScaleObservable::fringe(&s.p, &s.p);
        let mc = ladder_n0_propagator_mc(&s, &m, 1, 0, 1.0, 200_000, 5, &j).unwrap();
        let oracle = oracle_cell_10(eps, 1.0);
        assert!((mc.value - oracle).norm() < 4.0 * mc.std_error, "{mc:?} vs {oracle}");
        // the conjugate cell samples the other copy
        let mc01 = ladder_n0_propagator_mc(&s, &m, 0, 1, 1.0, 200_000, 6, &j).unwrap();
        assert!((mc01.value - oracle.conj()).norm() < 4.0 * mc01.std_error, "{mc01:?}");
    }
}

#[test]
fn deviation_from_script_shrinks() {
    let m = DispersionModel::quadratic_einstein();
    let devs: Vec<f64> = [0.2, 0.1, 0.05, 0.025]
        .iter()
        .map(|e| {
            let s = spec(*e);
            let j = TwoScaleObservable::fringe(&s.p, &s.p);
            let script = ladder_n0_script(&s, &m, 1, 0, 1.0, &j, phi()).unwrap().value;
            (oracle_cell_10(*e, 1.0) - script).norm()
        })
        .collect();
    for w in devs.windows(2) {
        assert!(w[1] < 0.6 * w[0], "{devs:?}");
    }
}

#[test]
fn monte_carlo_is_seed_deterministic() {
    let m = DispersionModel::quadratic_einstein();
    let s = spec(0.2);
    let j = TwoScaleObservable::fringe(&s.p, &s.p);
    let a = ladder_n0_propagator_mc(&s, &m, 2, 1, 1.0, 20_000, 9, &j).unwrap();
    let b = ladder_n0_propagator_mc(&s, &m, 2, 1, 1.0, 20_000, 9, &j).unwrap();
    let c = ladder_n0_propagator_mc(&s, &m, 2, 1, 1.0, 20_000, 10, &j).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.value, c.value);
}

#[test]
fn resummation_reaches_damping() {
    let m = DispersionModel::quadratic_einstein();
    let s = spec(0.1);
    let j = TwoScaleObservable::fringe(&s.p, &s.p);
    let a = phi().norm();
    for t in [0.5, 1.0, 2.0] {
        let table = resum_decoherence(&s, &m, t, 30, &j, phi()).unwrap();
        let free = pair_offdiagonal_free(&j, &s, &m, t).unwrap();
        assert_eq!(table.rows[0].partial_sum, free);
        assert!((table.damping - (-t * table.sigma_p).exp()).abs() < 1e-15);
        // each truncated exponential misses at most R_K = Σ_{n>K} |TΦ|^n/n!
        let x = t * a;
        for row in &table.rows {
            let mut term = 1.0;
            let mut tail = 0.0;
            for n in 1..200 {
                term *= x / n as f64;
                if n > row.k {
                    tail += term;
                }
            }
            let bound = 2.0 * (t * phi().im).exp() * tail + tail * tail;
            assert!(row.error <= bound * (1.0 + 1e-6) + 1e-14, "T={t} K={}: {:e} > {:e}", row.k, row.error, bound);
        }
    }
    let table = resum_decoherence(&s, &m, 0.5, 20, &j, phi()).unwrap();
    assert!(table.rows[20].error < 1e-10);
    // at T = |Q|/|P| the free pairing is 1 and S_K → e^{−σ_P/2}
    let table = resum_decoherence(&s, &m, 0.5, 25, &j, phi()).unwrap();
    let last = table.rows.last().unwrap();
    assert!((last.partial_sum - (-0.5 * table.sigma_p).exp()).norm() < 1e-10);
}

#[test]
fn swapping_orders_conjugates_the_script() {
    let m = DispersionModel::quadratic_einstein();
    let s = spec(0.1);
    let j = TwoScaleObservable::fringe(&s.p, &s.p);
    // at T = 0.5 the free pairing is real
    for (a, b) in [(1, 0), (2, 1), (3, 0), (4, 2)] {
        let x = ladder_n0_script(&s, &m, a, b, 0.5, &j, phi()).unwrap().value;
        let y = ladder_n0_script(&s, &m, b, a, 0.5, &j, phi()).unwrap().value;
        assert!((x - y.conj()).norm() < 1e-12 * x.norm().max(1.0));
    }
}

#[test]
fn bound_fit_covers_every_cell() {
    let cells: Vec<LadderTerm> = (0..3)
        .flat_map(|m| (0..3).map(move |mt| (m, mt)))
        .map(|(m, mt)| LadderTerm {
            m,
            m_tilde: mt,
            t: 10.0,
            eta: 0.1,
            value: Complex64::new(0.5f64.powi((m + mt) as i32), 0.0),
            std_error: if m + mt == 0 { 0.0 } else { 0.01 },
            samples: 1000,
        })
        .collect();
    let fit = fit_factorial_bound(&cells, 1.0);
    assert!(fit.passed && fit.c_fit.is_finite());
    let mut too_big = cells.clone();
    too_big[0].value = Complex64::new(2.0, 0.0);
    assert!(!fit_factorial_bound(&too_big, 1.0).passed);
}
