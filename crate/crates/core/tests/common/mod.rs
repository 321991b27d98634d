//! Event-driven DSMC for the default model (e = |q|²/2, ω ≡ 1,
//! F = e^{−|k|²/2}, d = 3), written without the library's kernel code.
//!
//! With ω constant the shell of branch σ is the sphere |U|² = |V|² − 2σ, the
//! co-area Jacobian is |U|, and the outgoing direction n has density
//! ∝ e^{2|V||U| n·V̂}: a von Mises–Fisher law.

#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

const PI: f64 = std::f64::consts::PI;

pub fn occupancy() -> f64 {
    1.0 / (2.0f64.exp() - 1.0)
}

/// 2π c_σ r e^{−a²−r²} ∫_{S²} e^{2ar n·V̂} dn with r² = a² − 2σ.
pub fn branch_rate(a: f64, sign: f64) -> f64 {
    let r2 = a * a - 2.0 * sign;
    if r2 <= 0.0 {
        return 0.0;
    }
    let r = r2.sqrt();
    let c = if sign > 0.0 { occupancy() + 1.0 } else { occupancy() };
    let x = 2.0 * a * r;
    // e^{−a²−r²} · 4π sinh(x)/x
    let sphere = if x < 1e-8 {
        4.0 * PI * (-a * a - r2).exp()
    } else {
        2.0 * PI * ((-(a - r).powi(2)).exp() - (-(a + r).powi(2)).exp()) / x
    };
    2.0 * PI * c * r * sphere
}

pub fn total_rate(a: f64) -> f64 {
    branch_rate(a, 1.0) + branch_rate(a, -1.0)
}

fn norm(v: &[f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

fn sample_direction(mu: [f64; 3], kappa: f64, rng: &mut impl Rng) -> [f64; 3] {
    let u: f64 = rng.gen();
    let w = if kappa < 1e-10 {
        2.0 * u - 1.0
    } else {
        1.0 + (u + (1.0 - u) * (-2.0 * kappa).exp()).ln() / kappa
    };
    let phi = 2.0 * PI * rng.gen::<f64>();
    let s = (1.0 - w * w).max(0.0).sqrt();
    // orthonormal frame around mu
    let helper = if mu[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let d = helper[0] * mu[0] + helper[1] * mu[1] + helper[2] * mu[2];
    let mut e1 = [helper[0] - d * mu[0], helper[1] - d * mu[1], helper[2] - d * mu[2]];
    let n1 = norm(&e1);
    e1 = [e1[0] / n1, e1[1] / n1, e1[2] / n1];
    let e2 = [
        mu[1] * e1[2] - mu[2] * e1[1],
        mu[2] * e1[0] - mu[0] * e1[2],
        mu[0] * e1[1] - mu[1] * e1[0],
    ];
    let (sp, cp) = phi.sin_cos();
    [0, 1, 2].map(|i| w * mu[i] + s * (cp * e1[i] + sp * e2[i]))
}

fn scatter(v: [f64; 3], rng: &mut impl Rng) -> [f64; 3] {
    let a = norm(&v);
    let em = branch_rate(a, 1.0);
    let ab = branch_rate(a, -1.0);
    let sign = if rng.gen::<f64>() * (em + ab) < em { 1.0 } else { -1.0 };
    let r = (a * a - 2.0 * sign).sqrt();
    let mu = if a > 0.0 { [v[0] / a, v[1] / a, v[2] / a] } else { [0.0, 0.0, 1.0] };
    let n = sample_direction(mu, 2.0 * a * r, rng);
    [r * n[0], r * n[1], r * n[2]]
}

/// Sample means and standard errors of an observable at each output time.
pub struct Moments {
    pub mean: Vec<f64>,
    pub std_error: Vec<f64>,
}

/// Particles start from N(center, std² I); returns ⟨V_z⟩ and ⟨|V|²/2⟩ at
/// the requested times.
pub fn dsmc_relaxation(
    center: [f64; 3],
    std: f64,
    times: &[f64],
    particles: usize,
    seed: u64,
) -> (Moments, Moments) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let k = times.len();
    let (mut s_vz, mut s_vz2, mut s_e, mut s_e2) = (vec![0.0; k], vec![0.0; k], vec![0.0; k], vec![0.0; k]);
    for _ in 0..particles {
        let mut v = [0, 1, 2].map(|i| center[i] + std * { let z: f64 = StandardNormal.sample(&mut rng); z });
        let mut t = 0.0;
        let mut next = 0;
        while next < k {
            let lam = total_rate(norm(&v));
            let tau = if lam > 0.0 { -(1.0 - rng.gen::<f64>()).ln() / lam } else { f64::INFINITY };
            while next < k && times[next] <= t + tau {
                let e = 0.5 * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
                s_vz[next] += v[2];
                s_vz2[next] += v[2] * v[2];
                s_e[next] += e;
                s_e2[next] += e * e;
                next += 1;
            }
            t += tau;
            if next < k {
                v = scatter(v, &mut rng);
            }
        }
    }
    let n = particles as f64;
    let moments = |s: &[f64], s2: &[f64]| {
        let mean: Vec<f64> = s.iter().map(|x| x / n).collect();
        let std_error = s2
            .iter()
            .zip(&mean)
            .map(|(q, m)| ((q / n - m * m).max(0.0) * n / (n - 1.0) / n).sqrt())
            .collect();
        Moments { mean, std_error }
    };
    (moments(&s_vz, &s_vz2), moments(&s_e, &s_e2))
}

/// ∫ σ(U, V) U dU along V̂: Σ_σ rate_σ · r · (coth κ − 1/κ), κ = 2ar.
pub fn momentum_transfer(a: f64) -> f64 {
    [1.0, -1.0]
        .iter()
        .map(|s| {
            let r2 = a * a - 2.0 * s;
            if r2 <= 0.0 {
                return 0.0;
            }
            let r = r2.sqrt();
            let k = 2.0 * a * r;
            let mean_cos = if k < 1e-6 { k / 3.0 } else { 1.0 / k.tanh() - 1.0 / k };
            branch_rate(a, *s) * r * mean_cos
        })
        .sum()
}

/// d⟨V_z⟩/dT at T = 0 for N(center, std² I) data, by a fine midpoint sum.
pub fn initial_drift(center: [f64; 3], std: f64, h: f64, half: f64) -> f64 {
    let n = (2.0 * half / h).round() as usize;
    let x = |i: usize| -half + h * (i as f64 + 0.5);
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let v = [x(i), x(j), x(k)];
                let d2: f64 = (0..3).map(|m| (v[m] - center[m]).powi(2)).sum();
                let f = (-d2 / (2.0 * std * std)).exp();
                let a = norm(&v);
                let gain = if a > 0.0 { momentum_transfer(a) * v[2] / a } else { 0.0 };
                num += f * (gain - total_rate(a) * v[2]);
                den += f;
            }
        }
    }
    num / den
}
