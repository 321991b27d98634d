//! n = 0 ladder amplitudes: pure immediate recollisions on each copy of the
//! electron, in resolvent (closed) form and propagator (Monte Carlo) form.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dispersion::{Branch, DispersionModel};
use crate::error::{Error, Result};
use crate::fit::{log_log_fit, LineFit};
use crate::observables::{pair_offdiagonal_free, TwoScaleObservable, XiProfile};
use crate::quadrature::{gauss_legendre_on, sphere_area, Adaptive};
use crate::rng::{stream, Welford};
use crate::vector::{add, dot};
use crate::wavepacket::{Envelope, WavePacketSpec};

const I: Complex64 = Complex64::new(0.0, 1.0);

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// −2πi e^{−ηt} e^{−it e} (−it)^m / m!, the value of
/// ∫ e^{−itα} (α − e + iη)^{−(m+1)} dα for t > 0.
pub fn residue_time_integral(e_val: f64, t: f64, eta: f64, m: usize) -> Complex64 {
    let pow = (-I * t).powu(m as u32) / factorial(m);
    -2.0 * std::f64::consts::PI * I * (-eta * t).exp() * (-I * t * e_val).exp() * pow
}

/// The same integral by quadrature along the line Im α = Y, Y = (m+1)/t,
/// which the pole at e − iη does not cross. Tails |Re α| > X are summed from
/// their integration-by-parts asymptotic series.
pub fn residue_time_integral_quadrature(e_val: f64, t: f64, eta: f64, m: usize) -> Result<Complex64> {
    if !(t > 0.0 && eta > 0.0) {
        return Err(Error::InvalidInput("the quadrature route needs t > 0 and eta > 0".into()));
    }
    let y = (m as f64 + 1.0) / t;
    // integrand along α = x + iY: e^{tY} e^{−itx} (x − b)^{−(m+1)}, b = e − iη − iY
    let b = Complex64::new(e_val, -eta - y);
    let lift = (t * y).exp();
    let order = m as i32 + 1;
    let g = |x: f64| lift * (Complex64::new(x, 0.0) - b).powi(-order);
    let terms = 40usize;
    let x_max = e_val.abs() + (4.0 * (m + 1 + terms) as f64 / t).max(50.0);
    let rule = Adaptive::new(1e-300, 1e-11).with_max_panels(20_000);
    let period = 2.0 * std::f64::consts::PI / t;
    let n_breaks = ((2.0 * x_max / period).ceil() as usize).clamp(2, 4000);
    let mut breaks: Vec<f64> = (0..=n_breaks)
        .map(|i| -x_max + 2.0 * x_max * i as f64 / n_breaks as f64)
        .collect();
    breaks.push(e_val);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let body = rule
        .integrate(|x: f64| (-I * t * x).exp() * g(x), &breaks)
        .require("residue line integral")?;
    // ∫_X^∞ e^{−itx} g = e^{−itX} Σ_k g^{(k)}(X)/(it)^{k+1}, and the mirror image
    // ∫_{−∞}^{−X} e^{−itx} g = −e^{itX} Σ_k g^{(k)}(−X)/(it)^{k+1}
    let tail = |x0: f64| -> Complex64 {
        let mut sum = Complex64::new(0.0, 0.0);
        let mut coef = 1.0; // (m+1)_k
        let mut itk = I * t; // (it)^{k+1}
        for k in 0..terms {
            let deriv = (if k % 2 == 0 { 1.0 } else { -1.0 })
                * coef
                * lift
                * (Complex64::new(x0, 0.0) - b).powi(-(order + k as i32));
            sum += deriv / itk;
            coef *= (order + k as i32) as f64;
            itk *= I * t;
        }
        sum
    };
    let upper = (-I * t * x_max).exp() * tail(x_max);
    let lower = -(I * t * x_max).exp() * tail(-x_max);
    Ok(body + upper + lower)
}

/// One point of the residue-identity sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidueCheck {
    pub m: usize,
    pub t: f64,
    pub eta: f64,
    pub e_val: f64,
    pub closed: Complex64,
    pub numeric: Complex64,
    pub relative_error: f64,
}

/// Sweep m ≤ `max_m` × t × η at a fixed e.
pub fn residue_sweep(e_val: f64, max_m: usize, ts: &[f64], etas: &[f64]) -> Result<Vec<ResidueCheck>> {
    let mut cases = Vec::new();
    for m in 0..=max_m {
        for &t in ts {
            for &eta in etas {
                cases.push((m, t, eta));
            }
        }
    }
    cases
        .par_iter()
        .map(|&(m, t, eta)| {
            let closed = residue_time_integral(e_val, t, eta, m);
            let numeric = residue_time_integral_quadrature(e_val, t, eta, m)?;
            Ok(ResidueCheck {
                m,
                t,
                eta,
                e_val,
                closed,
                numeric,
                relative_error: (numeric - closed).norm() / closed.norm(),
            })
        })
        .collect()
}

/// A ladder amplitude paired against an observable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderTerm {
    pub m: usize,
    pub m_tilde: usize,
    /// microscopic time t = T/ε
    pub t: f64,
    /// regularization η = ε
    pub eta: f64,
    pub value: Complex64,
    /// zero for the closed form
    pub std_error: f64,
    pub samples: u64,
}

impl LadderTerm {
    /// Half-width of the 95% normal confidence interval.
    pub fn ci_halfwidth(&self) -> f64 {
        1.96 * self.std_error
    }
}

/// ((−iTΦ_P)^m/m!)·((iT conj Φ_P)^m̃/m̃!)·⟨J_ε, W_{+−,free}(T/ε)⟩.
pub fn ladder_n0_script(
    spec: &WavePacketSpec,
    model: &DispersionModel,
    m: usize,
    m_tilde: usize,
    big_t: f64,
    j: &TwoScaleObservable,
    phi: Complex64,
) -> Result<LadderTerm> {
    let free = pair_offdiagonal_free(j, spec, model, big_t)?;
    Ok(LadderTerm {
        m,
        m_tilde,
        t: big_t / spec.epsilon,
        eta: spec.epsilon,
        value: script_factor(m, m_tilde, big_t, phi) * free,
        std_error: 0.0,
        samples: 0,
    })
}

fn script_factor(m: usize, m_tilde: usize, big_t: f64, phi: Complex64) -> Complex64 {
    (-I * big_t * phi).powu(m as u32) / factorial(m) * (I * big_t * phi.conj()).powu(m_tilde as u32)
        / factorial(m_tilde)
}

/// Sampler for (k, σ) with density L(k, σ)/Z, Z = Σ_σ ∫ L(k, σ) dk.
#[derive(Debug, Clone)]
pub struct CouplingSampler {
    dim: usize,
    pub total: f64,
    branch_prob_emission: f64,
    radii: Vec<f64>,
    /// cumulative radial mass per branch, normalized to 1
    cdf: [Vec<f64>; 2],
}

impl CouplingSampler {
    pub fn new(model: &DispersionModel) -> Result<Self> {
        if model.is_decoupled() {
            return Err(Error::InvalidInput("no phonon coupling to sample".into()));
        }
        let d = model.dim;
        let cut = model.coupling_cutoff();
        let n = 8192;
        let radii: Vec<f64> = (0..=n).map(|i| cut * i as f64 / n as f64).collect();
        let mut cdf = [vec![0.0; n + 1], vec![0.0; n + 1]];
        let mut mass = [0.0; 2];
        for (bi, br) in Branch::BOTH.iter().enumerate() {
            let mut acc = 0.0;
            for i in 0..n {
                let (x, w) = gauss_legendre_on(6, radii[i], radii[i + 1]);
                acc += x
                    .iter()
                    .zip(&w)
                    .map(|(r, wi)| wi * r.powi(d as i32 - 1) * model.coupling_radial(*r, *br))
                    .sum::<f64>();
                cdf[bi][i + 1] = acc;
            }
            mass[bi] = acc * sphere_area(d - 1);
            if acc > 0.0 {
                cdf[bi].iter_mut().for_each(|c| *c /= acc);
            }
        }
        let total = mass[0] + mass[1];
        Ok(CouplingSampler {
            dim: d,
            total,
            branch_prob_emission: mass[0] / total,
            radii,
            cdf,
        })
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> (Vec<f64>, Branch) {
        let (bi, branch) = if rng.gen::<f64>() < self.branch_prob_emission {
            (0, Branch::Emission)
        } else {
            (1, Branch::Absorption)
        };
        let c = &self.cdf[bi];
        let target: f64 = rng.gen();
        let i = c.partition_point(|x| *x < target).clamp(1, c.len() - 1);
        let frac = if c[i] > c[i - 1] {
            (target - c[i - 1]) / (c[i] - c[i - 1])
        } else {
            0.5
        };
        let r = self.radii[i - 1] + frac * (self.radii[i] - self.radii[i - 1]);
        let mut dir: Vec<f64> = (0..self.dim).map(|_| rng.sample(StandardNormal)).collect();
        let len = dot(&dir, &dir).sqrt();
        dir.iter_mut().for_each(|x| *x *= r / len);
        (dir, branch)
    }
}

/// ∫ over {s_0..s_{2m} ≥ 0, Σ s = t} of Π_j e^{−i s_{2j−1} Δ_j}: the corner
/// entry of exp(tM), M lower bidiagonal with unit subdiagonal and diagonal
/// (0, −iΔ_1, 0, −iΔ_2, …, 0).
pub fn simplex_propagator(t: f64, deltas: &[f64]) -> Complex64 {
    match deltas.len() {
        0 => Complex64::new(1.0, 0.0),
        1 => {
            // ∫_0^t (t − s) e^{as} ds = (e^{at} − 1 − at)/a², a = −iΔ
            let a = -I * deltas[0];
            let z = a * t;
            if z.norm() < 1e-3 {
                t * t * (0.5 + z / 6.0 + z * z / 24.0 + z * z * z / 120.0)
            } else {
                (z.exp() - 1.0 - z) / (a * a)
            }
        }
        m => {
            let n = 2 * m + 1;
            let mut mat = DMatrix::<Complex64>::zeros(n, n);
            for i in 0..n {
                if i % 2 == 1 {
                    mat[(i, i)] = -I * deltas[i / 2] * t;
                }
                if i > 0 {
                    mat[(i, i - 1)] = Complex64::new(t, 0.0);
                }
            }
            mat.exp()[(n - 1, 0)]
        }
    }
}

/// Samples of the slow variable u = v/ε distributed as |f̂(u)|².
fn sample_envelope<R: Rng>(envelope: &Envelope, dim: usize, rng: &mut R) -> Vec<f64> {
    match *envelope {
        Envelope::Gaussian { width } => {
            let sd = 1.0 / (2.0f64.sqrt() * width);
            (0..dim).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect()
        }
    }
}

const SHARD: u64 = 4096;

/// Propagator-form Monte Carlo of ⟨J_ε, W^{ladder}_{+−,0,m,m̃}(T/ε)⟩ with
/// λ² = η = ε. The slow variable, the ξ-profile of Ĵ and every phonon vertex
/// (k, σ) ~ L/Z are sampled; the time simplices are integrated exactly for each
/// sample. The cell m = m̃ = 0 has no random vertices and is returned from
/// the deterministic free pairing.
#[allow(clippy::too_many_arguments)]
pub fn ladder_n0_propagator_mc(
    spec: &WavePacketSpec,
    model: &DispersionModel,
    m: usize,
    m_tilde: usize,
    big_t: f64,
    samples: u64,
    seed: u64,
    j: &TwoScaleObservable,
) -> Result<LadderTerm> {
    if m > 4 || m_tilde > 4 {
        return Err(Error::InvalidInput("propagator form supports m, m_tilde <= 4".into()));
    }
    let eps = spec.epsilon;
    let t = big_t / eps;
    let mut term = LadderTerm {
        m,
        m_tilde,
        t,
        eta: eps,
        value: Complex64::new(0.0, 0.0),
        std_error: 0.0,
        samples: 0,
    };
    if m == 0 && m_tilde == 0 {
        term.value = pair_offdiagonal_free(j, spec, model, big_t)?;
        return Ok(term);
    }
    if samples < 2 {
        return Err(Error::InvalidInput("need at least two samples".into()));
    }
    term.samples = samples;
    if model.is_decoupled() {
        return Ok(term);
    }
    let sampler = CouplingSampler::new(model)?;
    let d = spec.dim();
    let prefactor = (-eps * sampler.total).powi((m + m_tilde) as i32);
    let profile = j.xi_profile(eps);
    let two_p: Vec<f64> = spec.p.iter().map(|p| 2.0 * p).collect();
    let n_shards = samples.div_ceil(SHARD);
    let cell = ((m as u64) << 8 | m_tilde as u64) << 40;
    let shards: Vec<Welford> = (0..n_shards)
        .into_par_iter()
        .map(|s| {
            let mut rng = stream(seed, cell | s);
            let count = SHARD.min(samples - s * SHARD);
            let mut acc = Welford::default();
            let mut deltas1 = vec![0.0; m];
            let mut deltas2 = vec![0.0; m_tilde];
            for _ in 0..count {
                let u = sample_envelope(&spec.envelope, d, &mut rng);
                let xi: Vec<f64> = match &profile {
                    XiProfile::Dirac { center } => center.clone(),
                    XiProfile::Gaussian { center, std } => center
                        .iter()
                        .map(|c| c + std * rng.sample::<f64, _>(StandardNormal))
                        .collect(),
                };
                let zeta: Vec<f64> = xi.iter().zip(&two_p).map(|(x, p)| (x - p) / eps).collect();
                let up: Vec<f64> = u.iter().zip(&zeta).map(|(a, b)| a + 0.5 * b).collect();
                let um: Vec<f64> = u.iter().zip(&zeta).map(|(a, b)| a - 0.5 * b).collect();
                let density = spec.envelope.hat(&u).norm_sqr();
                let ratio = spec.envelope.hat(&up) * spec.envelope.hat(&um).conj() / density;
                let v: Vec<f64> = u.iter().map(|x| eps * x).collect();
                let p1: Vec<f64> = v.iter().zip(&xi).map(|(v, x)| v + 0.5 * x).collect();
                let p2: Vec<f64> = v.iter().zip(&xi).map(|(v, x)| v - 0.5 * x).collect();
                let (e1, e2) = (model.e(&p1), model.e(&p2));
                for dl in deltas1.iter_mut() {
                    let (k, br) = sampler.sample(&mut rng);
                    *dl = model.phi_sigma(&p1, &k, br) - e1;
                }
                for dl in deltas2.iter_mut() {
                    let (k, br) = sampler.sample(&mut rng);
                    *dl = model.phi_sigma(&p2, &k, br) - e2;
                }
                let x = ratio
                    * j.alpha(&v)
                    * (I * (2.0 * dot(&u, &spec.q) - t * (e1 - e2))).exp()
                    * prefactor
                    * simplex_propagator(t, &deltas1)
                    * simplex_propagator(t, &deltas2).conj();
                acc.push(x);
            }
            acc
        })
        .collect();
    let mut total = Welford::default();
    for s in &shards {
        total.merge(s);
    }
    term.value = total.mean;
    term.std_error = total.std_error();
    Ok(term)
}

/// One row of the resummation table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResumRow {
    pub k: usize,
    pub partial_sum: Complex64,
    /// S_K / ⟨J, W_free⟩
    pub ratio: Complex64,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResumTable {
    pub big_t: f64,
    pub phi_p: Complex64,
    pub sigma_p: f64,
    pub free_pairing: Complex64,
    /// e^{−Tσ_P}
    pub damping: f64,
    pub rows: Vec<ResumRow>,
}

/// Partial sums S_K = Σ_{m, m̃ ≤ K} of the script-form terms against the
/// target e^{−Tσ_P}·⟨J, W_free⟩, σ_P = −2 Im Φ_P.
pub fn resum_decoherence(
    spec: &WavePacketSpec,
    model: &DispersionModel,
    big_t: f64,
    k_max: usize,
    j: &TwoScaleObservable,
    phi: Complex64,
) -> Result<ResumTable> {
    if k_max > 30 {
        return Err(Error::InvalidInput("K <= 30".into()));
    }
    let free = pair_offdiagonal_free(j, spec, model, big_t)?;
    let sigma_p = -2.0 * phi.im;
    let damping = (-big_t * sigma_p).exp();
    let mut rows = Vec::with_capacity(k_max + 1);
    let mut ratio = Complex64::new(0.0, 0.0);
    for k in 0..=k_max {
        // add the new L-shaped shell {max(m, m̃) = k}
        for i in 0..k {
            ratio += script_factor(k, i, big_t, phi) + script_factor(i, k, big_t, phi);
        }
        ratio += script_factor(k, k, big_t, phi);
        rows.push(ResumRow {
            k,
            partial_sum: ratio * free,
            ratio,
            error: (ratio - damping).norm(),
        });
    }
    Ok(ResumTable {
        big_t,
        phi_p: phi,
        sigma_p,
        free_pairing: free,
        damping,
        rows,
    })
}

/// Per-cell entry of the factorial-bound fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCell {
    pub m: usize,
    pub m_tilde: usize,
    pub epsilon: f64,
    pub magnitude: f64,
    /// |value| + 2·std_error
    pub upper: f64,
    pub bound: f64,
    pub satisfied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorialBound {
    pub c_fit: f64,
    pub cells: Vec<BoundCell>,
    pub passed: bool,
}

/// Smallest C with |value| + 2 SE ≤ (C λ² t)^{m+m̃}/(m! m̃!) on every cell with
/// m + m̃ ≥ 1 (λ² t = T); the m = m̃ = 0 cells must satisfy |value| ≤ 1.
pub fn fit_factorial_bound(terms: &[LadderTerm], big_t: f64) -> FactorialBound {
    let upper = |t: &LadderTerm| t.value.norm() + 2.0 * t.std_error;
    let c_fit = terms
        .iter()
        .filter(|t| t.m + t.m_tilde > 0)
        .map(|t| {
            let n = (t.m + t.m_tilde) as f64;
            (upper(t) * factorial(t.m) * factorial(t.m_tilde)).powf(1.0 / n) / big_t
        })
        .fold(0.0, f64::max);
    let cells: Vec<BoundCell> = terms
        .iter()
        .map(|t| {
            let n = (t.m + t.m_tilde) as i32;
            let bound = (c_fit * big_t).powi(n) / (factorial(t.m) * factorial(t.m_tilde));
            let up = upper(t);
            BoundCell {
                m: t.m,
                m_tilde: t.m_tilde,
                epsilon: t.eta,
                magnitude: t.value.norm(),
                upper: up,
                bound,
                satisfied: up <= bound * (1.0 + 1e-12),
            }
        })
        .collect();
    let passed = c_fit.is_finite() && cells.iter().all(|c| c.satisfied);
    FactorialBound { c_fit, cells, passed }
}

/// Deviation of the propagator form from the script form along an ε sweep and
/// its log-log slope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonRegression {
    pub m: usize,
    pub m_tilde: usize,
    pub epsilons: Vec<f64>,
    pub deviations: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub fit: LineFit,
    pub target_exponent: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[allow(clippy::too_many_arguments)]
pub fn epsilon_regression(
    spec: &WavePacketSpec,
    model: &DispersionModel,
    m: usize,
    m_tilde: usize,
    big_t: f64,
    j: &TwoScaleObservable,
    phi: Complex64,
    epsilons: &[f64],
    samples: u64,
    seed: u64,
) -> Result<EpsilonRegression> {
    let mut deviations = Vec::new();
    let mut std_errors = Vec::new();
    for &eps in epsilons {
        let s = spec.with_epsilon(eps)?;
        let mc = ladder_n0_propagator_mc(&s, model, m, m_tilde, big_t, samples, seed, j)?;
        let script = ladder_n0_script(&s, model, m, m_tilde, big_t, j, phi)?;
        deviations.push((mc.value - script.value).norm());
        std_errors.push(mc.std_error);
    }
    let fit = log_log_fit(epsilons, &deviations);
    let target = 0.5;
    let tolerance = 0.15;
    Ok(EpsilonRegression {
        m,
        m_tilde,
        epsilons: epsilons.to_vec(),
        deviations,
        std_errors,
        passed: (fit.slope - target).abs() <= tolerance,
        fit,
        target_exponent: target,
        tolerance,
    })
}

/// Mean of e(p + k) + σω(k) − e(p) under L/Z, a diagnostic of the sampler.
pub fn mean_shell_offset(model: &DispersionModel, p: &[f64], samples: usize, seed: u64) -> Result<f64> {
    let sampler = CouplingSampler::new(model)?;
    let mut rng = stream(seed, 0);
    let mut acc = 0.0;
    for _ in 0..samples {
        let (k, br) = sampler.sample(&mut rng);
        acc += model.e(&add(p, &k)) + br.sign() * model.omega(&k) - model.e(p);
    }
    Ok(acc / samples as f64)
}
