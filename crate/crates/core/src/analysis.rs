//! Numerical probes of the resolvent estimates, the level-set geometry and the
//! Υ derivative bounds.
//!
//! Every probe evaluates an integral on a parameter lattice, divides by the
//! shape of the claimed bound, and reports the supremum as the fitted
//! constant. The same probe is repeated on the bisected lattice; a constant
//! that moves by more than 10% means the lattice does not resolve the sup.
//! Scaling exponents are checked by log-log regression.
//!
//! All probes assume d = 3. For p ∥ u the k-integrals are axially symmetric
//! and are done in U = p + k, as an outer integral over the polar cosine and
//! an inner adaptive integral over |U| with breakpoints at the resolvent poles.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::collision::{upsilon_with, SelfEnergySettings};
use crate::dispersion::{Branch, DispersionModel};
use crate::error::{Error, Result};
use crate::fit::{linear_fit, log_log_fit};
use crate::quadrature::Adaptive;
use crate::rng::stream;
use crate::roots::{brent, scan_roots};

/// Largest δ and ρ accepted by the level-set probes.
pub const RHO_TILDE: f64 = 0.5;

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// max(1, |log η|).
pub fn log_star(eta: f64) -> f64 {
    eta.ln().abs().max(1.0)
}

/// ⟨x⟩ = (1 + x²)^{1/2}.
pub fn japanese(x: f64) -> f64 {
    x.hypot(1.0)
}

/// min(1, |p − u| + η).
pub fn lower_star(sep: f64, eta: f64) -> f64 {
    (sep.abs() + eta).min(1.0)
}

/// One evaluated lattice point.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ProbeSample {
    pub point: BTreeMap<String, f64>,
    pub value: f64,
    /// Bound shape without its constant.
    pub shape: f64,
    pub ratio: f64,
}

impl ProbeSample {
    fn new(point: &[(&str, f64)], value: f64, shape: f64) -> Self {
        ProbeSample {
            point: point.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            value,
            shape,
            ratio: if shape > 0.0 { value / shape } else { 0.0 },
        }
    }

    pub fn get(&self, key: &str) -> f64 {
        self.point.get(key).copied().unwrap_or(f64::NAN)
    }
}

/// A fitted quantity and the window it must fall in.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ScalingCheck {
    pub name: String,
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
    pub passed: bool,
}

impl ScalingCheck {
    fn new(name: &str, value: f64, lower: f64, upper: f64) -> Self {
        ScalingCheck {
            name: name.to_string(),
            value,
            lower,
            upper,
            passed: value >= lower && value <= upper,
        }
    }
}

/// Outcome of one estimate probe.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EstimateProbe {
    pub id: String,
    pub lattice: BTreeMap<String, Vec<f64>>,
    pub fitted_constant: f64,
    pub refined_constant: f64,
    /// |refined/fitted − 1|.
    pub refinement_change: f64,
    pub stable: bool,
    pub worst_case: Option<ProbeSample>,
    pub checks: Vec<ScalingCheck>,
    pub samples: Vec<ProbeSample>,
    pub passed: bool,
}

impl EstimateProbe {
    fn assemble(
        id: &str,
        lattice: BTreeMap<String, Vec<f64>>,
        samples: Vec<ProbeSample>,
        refined: &[ProbeSample],
        checks: Vec<ScalingCheck>,
    ) -> Self {
        let worst_case = samples
            .iter()
            .max_by(|a, b| a.ratio.total_cmp(&b.ratio))
            .cloned();
        let fitted_constant = worst_case.as_ref().map_or(0.0, |s| s.ratio);
        let refined_constant = refined.iter().map(|s| s.ratio).fold(0.0, f64::max);
        let refinement_change = if fitted_constant > 0.0 {
            (refined_constant / fitted_constant - 1.0).abs()
        } else if refined_constant > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        let stable = refinement_change <= 0.1;
        let passed = stable && checks.iter().all(|c| c.passed);
        EstimateProbe {
            id: id.to_string(),
            lattice,
            fitted_constant,
            refined_constant,
            refinement_change,
            stable,
            worst_case,
            checks,
            samples,
            passed,
        }
    }

    pub fn check(&self, name: &str) -> Option<&ScalingCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Parameter lattice shared by the probes. `refined` bisects the continuous
/// parameter lists and doubles the Monte Carlo sample count.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct EstimateLattice {
    /// |p| for the single-resolvent integral.
    pub p_norms: Vec<f64>,
    pub thetas: Vec<f64>,
    pub etas: Vec<f64>,
    pub orders: Vec<u32>,
    pub branches: Vec<Branch>,
    /// |p| of the base point of p ∥ u pairs.
    pub pair_bases: Vec<f64>,
    /// |p − u| for the two-resolvent integral.
    pub separations: Vec<f64>,
    /// θ and θ̃ grid of the two-resolvent integral.
    pub pair_thetas: Vec<f64>,
    /// θ = θ̃ values of the large-energy ratio test.
    pub theta_decades: Vec<f64>,
    /// Values of e(v₂ + ξ/2) in the one-dimensional α-integral.
    pub levels: Vec<f64>,
    pub alphas: Vec<f64>,
    pub v_norms: Vec<f64>,
    pub upsilon_etas: Vec<f64>,
    pub deltas: Vec<f64>,
    pub radii: Vec<f64>,
    pub samples: usize,
    pub seed: u64,
    pub rel_tol: f64,
}

impl Default for EstimateLattice {
    fn default() -> Self {
        EstimateLattice {
            p_norms: vec![0.0, 1.0, 2.0],
            thetas: vec![-0.5, 0.0, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0],
            etas: vec![1.0, 1e-1, 1e-2, 1e-3],
            orders: vec![1, 2],
            branches: Branch::BOTH.to_vec(),
            pair_bases: vec![0.0, 1.0],
            separations: vec![0.01, 0.1, 1.0, 3.0],
            pair_thetas: vec![1.5, 2.5, 4.0],
            theta_decades: vec![1.0, 10.0, 100.0, 1000.0],
            levels: vec![0.0, 0.25, 0.5, 1.0, 2.0],
            alphas: vec![-2.0, -1.0, 0.0, 1.0, 2.0, 3.0],
            v_norms: vec![0.0, 1.0, 2.0],
            upsilon_etas: vec![0.1, 0.03, 0.01],
            deltas: vec![0.1, 0.05, 0.025, 0.0125],
            radii: vec![0.5, 0.25],
            samples: 200_000,
            seed: 7,
            rel_tol: 1e-6,
        }
    }
}

fn bisect(xs: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * xs.len());
    for w in xs.windows(2) {
        out.push(w[0]);
        out.push(0.5 * (w[0] + w[1]));
    }
    out.extend(xs.last());
    out
}

impl EstimateLattice {
    pub fn refined(&self) -> Self {
        EstimateLattice {
            p_norms: bisect(&self.p_norms),
            thetas: bisect(&self.thetas),
            pair_bases: bisect(&self.pair_bases),
            pair_thetas: bisect(&self.pair_thetas),
            levels: bisect(&self.levels),
            alphas: bisect(&self.alphas),
            v_norms: bisect(&self.v_norms),
            samples: 2 * self.samples,
            ..self.clone()
        }
    }
}

fn require_3d(model: &DispersionModel) -> Result<()> {
    if model.dim != 3 {
        return Err(Error::InvalidInput(format!(
            "estimate probes are three-dimensional, model has d = {}",
            model.dim
        )));
    }
    Ok(())
}

/// Denominator θ − e(|U + s ê|) − σ ω(|U − a ê|) along a ray of cosine c.
#[derive(Debug, Clone, Copy)]
struct Pole {
    theta: f64,
    shift: f64,
    sign: f64,
}

impl Pole {
    fn den(&self, model: &DispersionModel, a: f64, u: f64, c: f64) -> f64 {
        let w = (u * u + self.shift * self.shift + 2.0 * u * self.shift * c).max(0.0).sqrt();
        self.theta - model.e_radial(w) - self.sign * model.omega_radial(k_norm(a, u, c))
    }
}

fn k_norm(a: f64, u: f64, c: f64) -> f64 {
    (u * u + a * a - 2.0 * u * a * c).max(0.0).sqrt()
}

const RAY_SCAN: usize = 256;

/// Integrate u² 𝓛(|U − a ê|) g(u) over the window of |U| on a ray of cosine c.
fn ray_integral(
    model: &DispersionModel,
    a: f64,
    c: f64,
    poles: &[Pole],
    eta: f64,
    rel_tol: f64,
    g: impl Fn(f64) -> f64,
) -> Result<f64> {
    let cut = model.coupling_cutoff();
    let lo = (a - cut).max(0.0);
    let hi = a + cut;
    let mut pts = vec![lo, hi];
    for pole in poles {
        let den = |u: f64| pole.den(model, a, u, c);
        for r in scan_roots(den, lo, hi, RAY_SCAN, 1e-14 * (1.0 + hi)) {
            pts.push(r);
            let h = 1e-6 * (1.0 + r);
            let slope = ((den(r + h) - den(r - h)) / (2.0 * h)).abs().max(1e-3);
            for m in [1.0, 10.0, 100.0] {
                for sg in [-1.0, 1.0] {
                    let x = r + sg * m * eta / slope;
                    if x > lo && x < hi {
                        pts.push(x);
                    }
                }
            }
        }
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let rule = Adaptive::new(1e-300, rel_tol).with_max_panels(4000);
    rule.integrate(
        |u: f64| {
            let l = model.coupling_radial(k_norm(a, u, c), Branch::Emission);
            if l == 0.0 {
                0.0
            } else {
                u * u * l * g(u)
            }
        },
        &pts,
    )
    .require("resolvent integral along a ray")
}

/// 2π ∫_{−1}^{1} inner(c) dc with extra breakpoints.
fn cosine_integral(breaks: &[f64], rel_tol: f64, inner: impl Fn(f64) -> Result<f64> + Sync) -> Result<f64> {
    let mut pts = vec![-1.0, 0.0, 1.0];
    pts.extend(breaks.iter().copied().filter(|c| *c > -1.0 && *c < 1.0));
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let failure = std::sync::Mutex::new(None);
    let r = Adaptive::new(1e-300, 10.0 * rel_tol).with_max_panels(2000).integrate(
        |c: f64| match inner(c) {
            Ok(v) => v,
            Err(e) => {
                failure.lock().unwrap().get_or_insert(e);
                0.0
            }
        },
        &pts,
    );
    if let Some(e) = failure.into_inner().unwrap() {
        return Err(e);
    }
    Ok(TWO_PI * r.require("polar cosine integral")?)
}

/// ∫ 𝓛(k) dk / |θ − Φ_σ(p, k) + iη|^{m+1} at |p| = `p`.
pub fn uno_integral(
    model: &DispersionModel,
    p: f64,
    theta: f64,
    eta: f64,
    m: u32,
    branch: Branch,
    rel_tol: f64,
) -> Result<f64> {
    require_3d(model)?;
    if !(eta > 0.0) {
        return Err(Error::InvalidInput(format!("eta must be positive, got {eta}")));
    }
    if model.is_decoupled() {
        return Ok(0.0);
    }
    let pole = Pole {
        theta,
        shift: 0.0,
        sign: branch.sign(),
    };
    let power = 0.5 * (m as f64 + 1.0);
    cosine_integral(&[], rel_tol, |c| {
        ray_integral(model, p, c, &[pole], eta, rel_tol, |u| {
            let x = pole.den(model, p, u, c);
            (x * x + eta * eta).powf(-power)
        })
    })
}

/// ∫ 𝓛(k) dk / (|θ − Φ_σ(p,k) + iη| |θ̃ − Φ_σ(u,k) − iη| ⟨p⟩⟨u⟩) for
/// p = p ê and u = (p + sep) ê.
pub fn due_integral(
    model: &DispersionModel,
    p: f64,
    sep: f64,
    theta: f64,
    theta_tilde: f64,
    eta: f64,
    branch: Branch,
    rel_tol: f64,
) -> Result<f64> {
    require_3d(model)?;
    if !(eta > 0.0) {
        return Err(Error::InvalidInput(format!("eta must be positive, got {eta}")));
    }
    if model.is_decoupled() {
        return Ok(0.0);
    }
    let first = Pole {
        theta,
        shift: 0.0,
        sign: branch.sign(),
    };
    let second = Pole {
        theta: theta_tilde,
        shift: sep,
        sign: branch.sign(),
    };
    let breaks = pole_crossings(model, p, first, second, eta);
    let weight = 1.0 / (japanese(p) * japanese(p + sep));
    let v = cosine_integral(&breaks, rel_tol, |c| {
        ray_integral(model, p, c, &[first, second], eta, rel_tol, |u| {
            let x = first.den(model, p, u, c);
            let y = second.den(model, p, u, c);
            1.0 / ((x * x + eta * eta).sqrt() * (y * y + eta * eta).sqrt())
        })
    })?;
    Ok(weight * v)
}

/// Cosines where the two pole surfaces cross, with a geometric ladder of
/// breakpoints around each so the outer rule sees the log-type peak.
fn pole_crossings(model: &DispersionModel, a: f64, first: Pole, second: Pole, eta: f64) -> Vec<f64> {
    let cut = model.coupling_cutoff();
    let lo = (a - cut).max(0.0);
    let hi = a + cut;
    let h = |c: f64| -> Option<f64> {
        let roots = scan_roots(|u| first.den(model, a, u, c), lo, hi, RAY_SCAN, 1e-14 * (1.0 + hi));
        roots.first().map(|&u| second.den(model, a, u, c))
    };
    let n = 400;
    let mut out = Vec::new();
    let mut prev: Option<(f64, f64)> = None;
    for i in 0..=n {
        let c = -1.0 + 2.0 * i as f64 / n as f64;
        let cur = h(c).map(|v| (c, v));
        if let (Some((c0, v0)), Some((c1, v1))) = (prev, cur) {
            if v0 == 0.0 {
                out.push(c0);
            } else if v0 * v1 < 0.0 {
                if let Some(r) = brent(|c| h(c).unwrap_or(v1), c0, c1, 1e-15) {
                    out.push(r);
                }
            }
        }
        prev = cur;
    }
    let mut pts = Vec::new();
    for c in out {
        pts.push(c);
        let mut w = eta;
        while w < 0.5 {
            pts.push(c - w);
            pts.push(c + w);
            w *= 10.0;
        }
    }
    pts
}

/// Shape (log*η)²/(|p−u|_⋆⟨θ⟩^{1/2}⟨θ̃⟩^{1/2}), replaced by the
/// log*η/(η⟨θ⟩^{1/2}⟨θ̃⟩^{1/2}) branch when it is smaller and |p − u| < η.
pub fn due_shape(sep: f64, theta: f64, theta_tilde: f64, eta: f64) -> f64 {
    let th = (japanese(theta) * japanese(theta_tilde)).sqrt();
    let l = log_star(eta);
    let transversal = l * l / (lower_star(sep, eta) * th);
    if sep.abs() < eta {
        transversal.min(l / (eta * th))
    } else {
        transversal
    }
}

/// ∫ dα / (|α − level + iη| ⟨α⟩).
pub fn tre_integral(level: f64, eta: f64) -> Result<f64> {
    if !(eta > 0.0) {
        return Err(Error::InvalidInput(format!("eta must be positive, got {eta}")));
    }
    let mut breaks = vec![level];
    for m in [1.0, 10.0, 100.0] {
        breaks.push(level - m * eta);
        breaks.push(level + m * eta);
    }
    Adaptive::new(1e-13, 1e-11)
        .with_max_panels(4000)
        .integrate_real_line(
            |a: f64| 1.0 / ((a - level).hypot(eta) * japanese(a)),
            &breaks,
        )
        .require("alpha integral")
}

fn lattice_map(entries: &[(&str, Vec<f64>)]) -> BTreeMap<String, Vec<f64>> {
    entries.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

fn branch_list(bs: &[Branch]) -> Vec<f64> {
    bs.iter().map(|b| b.sign()).collect()
}

/// Golden-section steps refining the θ maximizer between lattice neighbours.
const THETA_REFINE_STEPS: usize = 14;

fn uno_table(model: &DispersionModel, lat: &EstimateLattice) -> Result<Vec<ProbeSample>> {
    let mut jobs = Vec::new();
    for &m in &lat.orders {
        for &br in &lat.branches {
            for &p in &lat.p_norms {
                for &eta in &lat.etas {
                    jobs.push((m, br, p, eta));
                }
            }
        }
    }
    let rows: Vec<Vec<ProbeSample>> = jobs
        .par_iter()
        .map(|&(m, br, p, eta)| {
            let eval = |th: f64| -> Result<ProbeSample> {
                let v = uno_integral(model, p, th, eta, m, br, lat.rel_tol)?;
                Ok(ProbeSample::new(
                    &[("m", m as f64), ("sigma", br.sign()), ("p", p), ("theta", th), ("eta", eta)],
                    v,
                    eta.powi(-(m as i32)),
                ))
            };
            let mut out = lat.thetas.iter().map(|&th| eval(th)).collect::<Result<Vec<_>>>()?;
            let best = (0..out.len())
                .max_by(|&i, &j| out[i].value.total_cmp(&out[j].value))
                .unwrap_or(0);
            if lat.thetas.len() >= 2 {
                let mut a = lat.thetas[best.saturating_sub(1)];
                let mut b = lat.thetas[(best + 1).min(lat.thetas.len() - 1)];
                let g = 0.5 * (5f64.sqrt() - 1.0);
                let mut x1 = b - g * (b - a);
                let mut x2 = a + g * (b - a);
                let mut f1 = eval(x1)?;
                let mut f2 = eval(x2)?;
                for _ in 0..THETA_REFINE_STEPS {
                    if f1.value >= f2.value {
                        b = x2;
                        x2 = x1;
                        x1 = b - g * (b - a);
                        out.push(std::mem::replace(&mut f2, f1.clone()));
                        f1 = eval(x1)?;
                    } else {
                        a = x1;
                        x1 = x2;
                        x2 = a + g * (b - a);
                        out.push(std::mem::replace(&mut f1, f2.clone()));
                        f2 = eval(x2)?;
                    }
                }
                out.push(f1);
                out.push(f2);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(rows.into_iter().flatten().collect())
}

/// Single-resolvent bound C η^{−m}; the sup over (p, θ, σ) must fall like η^{−m}.
/// The sup over θ is refined by golden-section search around the best
/// lattice value.
pub fn check_uno(model: &DispersionModel, lattice: &EstimateLattice) -> Result<EstimateProbe> {
    require_3d(model)?;
    let samples = uno_table(model, lattice)?;
    let refined = uno_table(model, &lattice.refined())?;
    let mut checks = Vec::new();
    if !model.is_decoupled() {
        for &m in &lattice.orders {
            let sup: Vec<f64> = lattice
                .etas
                .iter()
                .map(|&eta| {
                    samples
                        .iter()
                        .filter(|s| s.get("m") == m as f64 && s.get("eta") == eta)
                        .map(|s| s.value)
                        .fold(0.0, f64::max)
                })
                .collect();
            let fit = log_log_fit(&lattice.etas, &sup);
            let target = -(m as f64);
            checks.push(ScalingCheck::new(&format!("slope_m{m}"), fit.slope, target - 0.15, target + 0.15));
        }
    }
    Ok(EstimateProbe::assemble(
        "uno",
        lattice_map(&[
            ("m", lattice.orders.iter().map(|&m| m as f64).collect()),
            ("sigma", branch_list(&lattice.branches)),
            ("p", lattice.p_norms.clone()),
            ("theta", lattice.thetas.clone()),
            ("eta", lattice.etas.clone()),
        ]),
        samples,
        &refined,
        checks,
    ))
}

fn due_table(model: &DispersionModel, lat: &EstimateLattice) -> Result<Vec<ProbeSample>> {
    let mut jobs = Vec::new();
    for &br in &lat.branches {
        for &p in &lat.pair_bases {
            for &sep in &lat.separations {
                for &th in &lat.pair_thetas {
                    for &tt in &lat.pair_thetas {
                        for &eta in &lat.etas {
                            jobs.push((br, p, sep, th, tt, eta));
                        }
                    }
                }
            }
        }
    }
    jobs.par_iter()
        .map(|&(br, p, sep, th, tt, eta)| {
            let v = due_integral(model, p, sep, th, tt, eta, br, lat.rel_tol)?;
            Ok(ProbeSample::new(
                &[
                    ("sigma", br.sign()),
                    ("p", p),
                    ("sep", sep),
                    ("theta", th),
                    ("theta_tilde", tt),
                    ("eta", eta),
                ],
                v,
                due_shape(sep, th, tt, eta),
            ))
        })
        .collect()
}

/// Two-resolvent bound. Checks:
/// - `log_growth`: slope of log sup J against log log*η at fixed separations
///   |p − u| ≥ 1 over η < 1, at most 2.3;
/// - `transversality`: log-log slope of sup J against |p − u| ∈ [0.1, 3] at
///   the smallest η, −1 ± 0.2;
/// - `theta_monotone` / `theta_suppression`: along θ = θ̃ decades the integral
///   decreases and J⟨θ⟩ does not grow.
pub fn check_due(model: &DispersionModel, lattice: &EstimateLattice) -> Result<EstimateProbe> {
    require_3d(model)?;
    let mut samples = due_table(model, lattice)?;
    let refined = due_table(model, &lattice.refined())?;
    let mut checks = Vec::new();
    if !model.is_decoupled() {
        let sup_at = |sep: f64, eta: f64| {
            samples
                .iter()
                .filter(|s| s.get("sep") == sep && s.get("eta") == eta)
                .map(|s| s.value)
                .fold(0.0, f64::max)
        };
        let small: Vec<f64> = lattice.etas.iter().copied().filter(|&e| e < 0.5).collect();
        let mut growth = f64::NEG_INFINITY;
        for &sep in lattice.separations.iter().filter(|&&s| s >= 1.0) {
            if small.len() >= 2 {
                let x: Vec<f64> = small.iter().map(|&e| log_star(e)).collect();
                let y: Vec<f64> = small.iter().map(|&e| sup_at(sep, e)).collect();
                growth = growth.max(log_log_fit(&x, &y).slope);
            }
        }
        checks.push(ScalingCheck::new("log_growth", growth, f64::NEG_INFINITY, 2.3));

        let eta_min = lattice.etas.iter().copied().fold(f64::INFINITY, f64::min);
        let seps: Vec<f64> = lattice
            .separations
            .iter()
            .copied()
            .filter(|&s| (0.1..=3.0).contains(&s))
            .collect();
        let sup: Vec<f64> = seps.iter().map(|&s| sup_at(s, eta_min)).collect();
        let slope = if seps.len() >= 2 {
            log_log_fit(&seps, &sup).slope
        } else {
            f64::NAN
        };
        checks.push(ScalingCheck::new("transversality", slope, -1.2, -0.8));

        let (p0, sep0, eta0) = (0.0, 1.0, 1e-2);
        let br = lattice.branches.first().copied().unwrap_or(Branch::Emission);
        let decade: Vec<ProbeSample> = lattice
            .theta_decades
            .par_iter()
            .map(|&th| {
                let v = due_integral(model, p0, sep0, th, th, eta0, br, lattice.rel_tol)?;
                Ok(ProbeSample::new(
                    &[
                        ("sigma", br.sign()),
                        ("p", p0),
                        ("sep", sep0),
                        ("theta", th),
                        ("theta_tilde", th),
                        ("eta", eta0),
                    ],
                    v,
                    due_shape(sep0, th, th, eta0),
                ))
            })
            .collect::<Result<_>>()?;
        let monotone = decade.windows(2).all(|w| w[1].value < w[0].value);
        checks.push(ScalingCheck::new("theta_monotone", if monotone { 1.0 } else { 0.0 }, 1.0, 1.0));
        let normalized: Vec<f64> = decade.iter().map(|s| s.value * japanese(s.get("theta"))).collect();
        let growth = normalized
            .windows(2)
            .map(|w| w[1] / w[0])
            .fold(0.0, f64::max);
        checks.push(ScalingCheck::new("theta_suppression", growth, 0.0, 1.0));
        samples.extend(decade);
    }
    Ok(EstimateProbe::assemble(
        "due",
        lattice_map(&[
            ("sigma", branch_list(&lattice.branches)),
            ("p", lattice.pair_bases.clone()),
            ("sep", lattice.separations.clone()),
            ("theta", lattice.pair_thetas.clone()),
            ("theta_decades", lattice.theta_decades.clone()),
            ("eta", lattice.etas.clone()),
        ]),
        samples,
        &refined,
        checks,
    ))
}

/// The p = u case: the integral, the transversal shape with |p−u|_⋆ = η,
/// and the log*η/η shape, for each η of the lattice.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct BranchComparison {
    pub eta: f64,
    pub value: f64,
    pub transversal_shape: f64,
    pub coincident_shape: f64,
}

pub fn due_coincident_branch(
    model: &DispersionModel,
    p: f64,
    theta: f64,
    etas: &[f64],
    branch: Branch,
    rel_tol: f64,
) -> Result<Vec<BranchComparison>> {
    etas.par_iter()
        .map(|&eta| {
            let th = japanese(theta);
            let l = log_star(eta);
            Ok(BranchComparison {
                eta,
                value: due_integral(model, p, 0.0, theta, theta, eta, branch, rel_tol)?,
                transversal_shape: l * l / (lower_star(0.0, eta) * th),
                coincident_shape: l / (eta * th),
            })
        })
        .collect()
}

fn tre_table(lat: &EstimateLattice) -> Result<Vec<ProbeSample>> {
    let mut out = Vec::new();
    for &level in &lat.levels {
        for &eta in &lat.etas {
            out.push(ProbeSample::new(
                &[("level", level), ("eta", eta)],
                tre_integral(level, eta)?,
                log_star(eta),
            ));
        }
    }
    Ok(out)
}

/// One-dimensional bound C log*η. Checks:
/// - `log_slope`: for every level E, the slope of the integral against
///   log(1/η) over η < 1 relative to its small-η value 2/⟨E⟩, within 15%;
/// - `unit_eta_spread`: (max − min)/max of the η = 1 values across levels.
pub fn check_tre(lattice: &EstimateLattice) -> Result<EstimateProbe> {
    let samples = tre_table(lattice)?;
    let refined = tre_table(&lattice.refined())?;
    let small: Vec<f64> = lattice.etas.iter().copied().filter(|&e| e < 0.5).collect();
    let mut worst: f64 = 0.0;
    if small.len() >= 2 {
        for &level in &lattice.levels {
            let x: Vec<f64> = small.iter().map(|e| -e.ln()).collect();
            let y: Vec<f64> = small
                .iter()
                .map(|&e| {
                    samples
                        .iter()
                        .find(|s| s.get("level") == level && s.get("eta") == e)
                        .map_or(f64::NAN, |s| s.value)
                })
                .collect();
            let slope = linear_fit(&x, &y).slope;
            let dev = slope * japanese(level) / 2.0 - 1.0;
            if dev.abs() > worst.abs() || dev.is_nan() {
                worst = dev;
            }
        }
    }
    let mut checks = vec![ScalingCheck::new("log_slope", worst, -0.15, 0.15)];
    let unit: Vec<f64> = samples.iter().filter(|s| s.get("eta") == 1.0).map(|s| s.value).collect();
    if !unit.is_empty() {
        let hi = unit.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = unit.iter().copied().fold(f64::INFINITY, f64::min);
        checks.push(ScalingCheck::new("unit_eta_spread", (hi - lo) / hi, 0.0, 0.2));
    }
    Ok(EstimateProbe::assemble(
        "tre",
        lattice_map(&[("level", lattice.levels.clone()), ("eta", lattice.etas.clone())]),
        samples,
        &refined,
        checks,
    ))
}

/// Thick level set {k : |Φ_σ(p, k) − θ| ≤ δ}.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LevelSet {
    pub p: Vec<f64>,
    pub theta: f64,
    pub delta: f64,
    pub branch: Branch,
}

impl LevelSet {
    pub fn contains(&self, model: &DispersionModel, k: &[f64]) -> bool {
        (model.phi_sigma(&self.p, k, self.branch) - self.theta).abs() <= self.delta
    }
}

/// Monte Carlo volume with a 95% confidence interval.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct VolumeEstimate {
    pub volume: f64,
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub hits: usize,
    pub samples: usize,
}

impl VolumeEstimate {
    pub fn relative_error(&self) -> f64 {
        if self.volume > 0.0 {
            self.std_error / self.volume
        } else {
            f64::INFINITY
        }
    }
}

/// Radial strata of the ball in the level-set Monte Carlo.
pub const VOLUME_STRATA: usize = 16;

/// |E₁ ∩ … ∩ E_n ∩ B(q, ρ)| by Monte Carlo, stratified over equal-volume
/// radial shells of the ball. Each stratum draws from its own stream.
pub fn level_set_volume(
    model: &DispersionModel,
    sets: &[LevelSet],
    q: &[f64],
    rho: f64,
    samples: usize,
    seed: u64,
) -> Result<VolumeEstimate> {
    require_3d(model)?;
    if q.len() != 3 || sets.iter().any(|s| s.p.len() != 3) {
        return Err(Error::InvalidInput("level-set vectors must be three-dimensional".into()));
    }
    if !(rho > 0.0 && rho <= RHO_TILDE) {
        return Err(Error::InvalidInput(format!("rho must lie in (0, {RHO_TILDE}], got {rho}")));
    }
    if sets.iter().any(|s| !(s.delta > 0.0 && s.delta <= RHO_TILDE)) {
        return Err(Error::InvalidInput(format!("delta must lie in (0, {RHO_TILDE}]")));
    }
    if samples < VOLUME_STRATA {
        return Err(Error::InvalidInput("too few samples for the strata".into()));
    }
    let per = samples / VOLUME_STRATA;
    let ball = 4.0 / 3.0 * std::f64::consts::PI * rho.powi(3);
    let shell = ball / VOLUME_STRATA as f64;
    let hits: Vec<usize> = (0..VOLUME_STRATA)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, i as u64);
            let mut count = 0;
            let mut k = [0.0; 3];
            for _ in 0..per {
                let t: f64 = rng.gen();
                let r = rho * ((i as f64 + t) / VOLUME_STRATA as f64).cbrt();
                let mut n = [0.0; 3];
                let mut len2: f64 = 0.0;
                while len2 < 1e-24 {
                    for x in n.iter_mut() {
                        *x = rng.sample(StandardNormal);
                    }
                    len2 = n.iter().map(|x| x * x).sum();
                }
                let s = r / len2.sqrt();
                for j in 0..3 {
                    k[j] = q[j] + s * n[j];
                }
                if sets.iter().all(|set| set.contains(model, &k)) {
                    count += 1;
                }
            }
            count
        })
        .collect();
    let mut volume = 0.0;
    let mut var = 0.0;
    for &h in &hits {
        let f = h as f64 / per as f64;
        volume += shell * f;
        var += shell * shell * f * (1.0 - f) / per as f64;
    }
    let std_error = var.sqrt();
    Ok(VolumeEstimate {
        volume,
        std_error,
        ci_low: (volume - 1.96 * std_error).max(0.0),
        ci_high: volume + 1.96 * std_error,
        hits: hits.iter().sum(),
        samples: per * VOLUME_STRATA,
    })
}

/// Point on both level sets Φ_+(0, k) = Φ_+(e_x, k) = 3/2 of the default model.
pub const TRANSVERSAL_POINT: [f64; 3] = [-0.5, 0.866_025_403_784_438_6, 0.0];

fn single_set(delta: f64) -> LevelSet {
    LevelSet {
        p: vec![0.0; 3],
        theta: 1.5,
        delta,
        branch: Branch::Emission,
    }
}

fn pair_sets(delta: f64) -> [LevelSet; 2] {
    [
        single_set(delta),
        LevelSet {
            p: vec![1.0, 0.0, 0.0],
            ..single_set(delta)
        },
    ]
}

fn volume_table(
    model: &DispersionModel,
    lat: &EstimateLattice,
    pair: bool,
) -> Result<Vec<ProbeSample>> {
    let mut out = Vec::new();
    for (i, &rho) in lat.radii.iter().enumerate() {
        for (j, &delta) in lat.deltas.iter().enumerate() {
            let sets: Vec<LevelSet> = if pair {
                pair_sets(delta).to_vec()
            } else {
                vec![single_set(delta)]
            };
            let seed = lat.seed ^ ((pair as u64) << 32 | (i as u64) << 16 | j as u64);
            let v = level_set_volume(model, &sets, &TRANSVERSAL_POINT, rho, lat.samples, seed)?;
            if v.hits > 0 && v.relative_error() > 0.25 {
                return Err(Error::InvalidInput(format!(
                    "volume confidence interval too wide at delta {delta}, rho {rho}; increase samples"
                )));
            }
            let shape = if pair { delta * delta * rho } else { delta * rho * rho };
            out.push(ProbeSample::new(&[("rho", rho), ("delta", delta)], v.volume, shape));
        }
    }
    Ok(out)
}

fn delta_slope(samples: &[ProbeSample], rho: f64) -> f64 {
    let pts: Vec<&ProbeSample> = samples.iter().filter(|s| s.get("rho") == rho && s.value > 0.0).collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let x: Vec<f64> = pts.iter().map(|s| s.get("delta")).collect();
    let y: Vec<f64> = pts.iter().map(|s| s.value).collect();
    log_log_fit(&x, &y).slope
}

/// Thick-level-set volume |E ∩ B(q, ρ)| ≤ C̃ δ ρ² for p = 0, θ = 3/2 at a
/// point q of the level set; the δ-slope at the largest ρ must be 1 ± 0.1.
pub fn check_intersection(model: &DispersionModel, lattice: &EstimateLattice) -> Result<EstimateProbe> {
    let samples = volume_table(model, lattice, false)?;
    let refined = volume_table(model, &lattice.refined(), false)?;
    let rho = lattice.radii.iter().copied().fold(0.0, f64::max);
    let checks = vec![ScalingCheck::new("delta_slope", delta_slope(&samples, rho), 0.9, 1.1)];
    Ok(EstimateProbe::assemble(
        "intersection",
        lattice_map(&[("rho", lattice.radii.clone()), ("delta", lattice.deltas.clone())]),
        samples,
        &refined,
        checks,
    ))
}

/// Two-set volume |E₁ ∩ E₂ ∩ B(q, ρ)| ≤ C₃ δ² ρ / |p₁ − p₂| with δ₁ = δ₂ = δ,
/// p₁ = 0, p₂ = e_x, θ = 3/2. The δ-slope at the largest ρ must be 2 ± 0.2.
pub fn check_transversality(model: &DispersionModel, lattice: &EstimateLattice) -> Result<EstimateProbe> {
    let samples = volume_table(model, lattice, true)?;
    let refined = volume_table(model, &lattice.refined(), true)?;
    let rho = lattice.radii.iter().copied().fold(0.0, f64::max);
    let checks = vec![ScalingCheck::new("delta_slope", delta_slope(&samples, rho), 1.8, 2.2)];
    Ok(EstimateProbe::assemble(
        "transversality",
        lattice_map(&[("rho", lattice.radii.clone()), ("delta", lattice.deltas.clone())]),
        samples,
        &refined,
        checks,
    ))
}

fn upsilon_table(model: &DispersionModel, lat: &EstimateLattice) -> Result<(Vec<ProbeSample>, f64)> {
    let settings = SelfEnergySettings {
        rel_tol: 1e-9,
        abs_tol: 1e-12,
        ..Default::default()
    };
    let mut jobs = Vec::new();
    for &alpha in &lat.alphas {
        for &v in &lat.v_norms {
            for &eta in &lat.upsilon_etas {
                jobs.push((alpha, v, eta));
            }
        }
    }
    let rows: Vec<(ProbeSample, f64)> = jobs
        .par_iter()
        .map(|&(alpha, v, eta)| {
            let ups = |a: f64, r: f64| upsilon_with(model, a, &[0.0, 0.0, r], eta, &settings);
            let h = 0.1 * eta;
            let value = ups(alpha, v)?.norm();
            let d_alpha = (ups(alpha + h, v)? - ups(alpha - h, v)?).norm() / (2.0 * h);
            let d_v = if v >= h {
                (ups(alpha, v + h)? - ups(alpha, v - h)?).norm() / (2.0 * h)
            } else {
                (ups(alpha, v + h)? - ups(alpha, v)?).norm() / h
            };
            Ok((
                ProbeSample::new(
                    &[("alpha", alpha), ("v", v), ("eta", eta)],
                    eta.sqrt() * (d_alpha + d_v),
                    1.0,
                ),
                value,
            ))
        })
        .collect::<Result<_>>()?;
    let sup = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    Ok((rows.into_iter().map(|r| r.0).collect(), sup))
}

/// η^{1/2}(|∂_α Υ_η| + |∇_v Υ_η|) over the lattice, by central differences
/// with step η/10. The sup |Υ_η| is reported as the `sup_upsilon` check.
pub fn check_upsilon(model: &DispersionModel, lattice: &EstimateLattice) -> Result<EstimateProbe> {
    require_3d(model)?;
    let (samples, sup) = upsilon_table(model, lattice)?;
    let (refined, _) = upsilon_table(model, &lattice.refined())?;
    let checks = vec![ScalingCheck::new("sup_upsilon", sup, 0.0, f64::INFINITY)];
    Ok(EstimateProbe::assemble(
        "useful",
        lattice_map(&[
            ("alpha", lattice.alphas.clone()),
            ("v", lattice.v_norms.clone()),
            ("eta", lattice.upsilon_etas.clone()),
        ]),
        samples,
        &refined,
        checks,
    ))
}

/// All probes, in a fixed order.
pub fn validate_estimates(model: &DispersionModel, lattice: &EstimateLattice) -> Result<Vec<EstimateProbe>> {
    Ok(vec![
        check_uno(model, lattice)?,
        check_due(model, lattice)?,
        check_tre(lattice)?,
        check_intersection(model, lattice)?,
        check_transversality(model, lattice)?,
        check_upsilon(model, lattice)?,
    ])
}
