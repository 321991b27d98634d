//! Self-energy Υ_η, its boundary value Φ_P, and the total cross section σ_P.
//!
//! All integrands are radial in the phonon momentum k and in U = v + k, so a
//! d-dimensional integral over U collapses to an integral over |U| and the
//! polar angle between U and v.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dispersion::{Branch, DispersionModel};
use crate::error::{Error, Result};
use crate::fit::richardson;
use crate::quadrature::{direction_rule_indexed, gauss_legendre_on, sphere_area, Adaptive, AxialRule, QuadValue};
use crate::roots::scan_roots;
use crate::vector::{norm, scale};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Geometry of U = |U| n with n at polar cosine `c` from an axis of length `a`:
/// the phonon momentum has |k| = |U − a ê|.
#[derive(Debug, Clone, Copy)]
struct Ray {
    a: f64,
    c: f64,
}

impl Ray {
    fn k_norm(&self, u: f64) -> f64 {
        (u * u + self.a * self.a - 2.0 * u * self.a * self.c).max(0.0).sqrt()
    }

    /// d|k|/du
    fn dk_du(&self, u: f64) -> f64 {
        let k = self.k_norm(u);
        if k < 1e-300 {
            0.0
        } else {
            (u - self.a * self.c) / k
        }
    }
}

/// Integrate h(u, c) u^{d−1} over U ∈ R^d with an outer adaptive rule in the
/// polar angle (d ≥ 2) or the two directions ±1 (d = 1).
fn axial_integral<T, F>(dim: usize, outer: &Adaptive, inner: F) -> Result<T>
where
    T: QuadValue,
    F: Fn(f64) -> Result<T> + Sync,
{
    if dim == 1 {
        return Ok(inner(1.0)? + inner(-1.0)?);
    }
    let area = sphere_area(dim - 2);
    let failure = std::sync::Mutex::new(None);
    let r = outer.integrate(
        |th: f64| {
            let w = th.sin().powi(dim as i32 - 2);
            if w == 0.0 {
                return T::zero();
            }
            match inner(th.cos()) {
                Ok(v) => v * w,
                Err(e) => {
                    failure.lock().unwrap().get_or_insert(e);
                    T::zero()
                }
            }
        },
        &[0.0, 0.5 * std::f64::consts::PI, std::f64::consts::PI],
    );
    if let Some(e) = failure.into_inner().unwrap() {
        return Err(e);
    }
    Ok(r.require("polar angle integral")? * area)
}

/// Radial window [lo, hi] of |U| outside of which L(|U − a ê|) is negligible.
fn radial_window(cut: f64, a: f64) -> (f64, f64) {
    ((a - cut).max(0.0), a + cut)
}

/// Numerical settings for the self-energy quadrature.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct SelfEnergySettings {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_panels: usize,
    /// Uniform scan intervals used to bracket resolvent poles along each ray.
    pub root_scan: usize,
}

impl Default for SelfEnergySettings {
    fn default() -> Self {
        SelfEnergySettings {
            rel_tol: 1e-10,
            abs_tol: 1e-13,
            max_panels: 4000,
            root_scan: 256,
        }
    }
}

/// Υ_η(α, v) = Σ_σ ∫ L(k, σ)/(α − e(v + k) − σω(k) + iη) dk.
pub fn upsilon(model: &DispersionModel, alpha: f64, v: &[f64], eta: f64) -> Result<Complex64> {
    upsilon_with(model, alpha, v, eta, &SelfEnergySettings::default())
}

pub fn upsilon_with(
    model: &DispersionModel,
    alpha: f64,
    v: &[f64],
    eta: f64,
    settings: &SelfEnergySettings,
) -> Result<Complex64> {
    if !(eta > 0.0) {
        return Err(Error::InvalidInput(format!("eta must be positive, got {eta}")));
    }
    if v.len() != model.dim {
        return Err(Error::InvalidInput("momentum dimension mismatch".into()));
    }
    if model.is_decoupled() {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let a = norm(v);
    let (lo, hi) = radial_window(model.coupling_cutoff(), a);
    let d = model.dim as i32;
    let inner_rule = Adaptive {
        abs_tol: settings.abs_tol,
        rel_tol: settings.rel_tol,
        max_panels: settings.max_panels,
    };
    let outer = Adaptive {
        abs_tol: 10.0 * settings.abs_tol,
        rel_tol: 10.0 * settings.rel_tol,
        max_panels: 200,
    };
    let mut total = Complex64::new(0.0, 0.0);
    for br in Branch::BOTH {
        let s = br.sign();
        let inner = |c: f64| -> Result<Complex64> {
            let ray = Ray { a, c };
            let den = |u: f64| alpha - model.e_radial(u) - s * model.omega_radial(ray.k_norm(u));
            let dden = |u: f64| {
                -model.electron.derivative(u)
                    - s * model.phonon.derivative(ray.k_norm(u)) * ray.dk_du(u)
            };
            let mut pts = vec![lo, hi];
            for r in scan_roots(den, lo, hi, settings.root_scan, 1e-14 * (1.0 + hi)) {
                pts.push(r);
                let slope = dden(r).abs().max(1e-3);
                for m in [1.0, 10.0, 100.0] {
                    for sg in [-1.0, 1.0] {
                        let x = r + sg * m * eta / slope;
                        if x > lo && x < hi {
                            pts.push(x);
                        }
                    }
                }
            }
            pts.sort_by(f64::total_cmp);
            pts.dedup();
            let f = |u: f64| {
                let l = model.coupling_radial(ray.k_norm(u), br);
                if l == 0.0 {
                    return Complex64::new(0.0, 0.0);
                }
                Complex64::new(u.powi(d - 1) * l, 0.0) / Complex64::new(den(u), eta)
            };
            inner_rule.integrate(f, &pts).require("self-energy radial integral")
        };
        total += axial_integral(model.dim, &outer, inner)?;
    }
    Ok(total)
}

/// Φ_P with its extrapolation diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PhiEstimate {
    pub value: Complex64,
    pub residual: f64,
    pub spread: f64,
    pub eta_sequence: Vec<f64>,
    pub samples: Vec<Complex64>,
    pub stages: usize,
}

pub const DEFAULT_ETA_SEQUENCE: [f64; 4] = [0.1, 0.05, 0.025, 0.0125];

/// Richardson-extrapolated η → 0⁺ limit of Υ_η(e(P), P).
pub fn phi_p(model: &DispersionModel, p: &[f64], eta_sequence: &[f64]) -> Result<PhiEstimate> {
    if eta_sequence.is_empty() {
        return Err(Error::InvalidInput("empty eta sequence".into()));
    }
    if eta_sequence.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidInput("eta sequence must be strictly decreasing".into()));
    }
    if eta_sequence.iter().any(|&e| e < 1e-4) {
        return Err(Error::InvalidInput("eta values must be at least 1e-4".into()));
    }
    let alpha = model.e(p);
    let samples: Vec<Complex64> = eta_sequence
        .par_iter()
        .map(|&eta| upsilon(model, alpha, p, eta))
        .collect::<Result<_>>()?;
    let stages = 2.min(samples.len() - 1);
    let ex = richardson(eta_sequence, &samples, stages);
    // raw increments must shrink for the sequence to be Cauchy
    let incs: Vec<f64> = samples.windows(2).map(|w| (w[1] - w[0]).norm()).collect();
    let scale_ = samples.last().unwrap().norm().max(1e-300);
    if incs.windows(2).any(|w| w[1] > w[0] && w[1] > 1e-8 * scale_) {
        return Err(Error::Extrapolation(format!(
            "increments of the eta sequence do not decrease: {incs:?}"
        )));
    }
    Ok(PhiEstimate {
        value: ex.value,
        residual: ex.residual,
        spread: ex.spread,
        eta_sequence: eta_sequence.to_vec(),
        samples,
        stages,
    })
}

/// A point on an energy shell with its co-area weight.
#[derive(Debug, Clone, PartialEq)]
pub struct ShellNode {
    pub branch: Branch,
    /// Outgoing momentum U.
    pub momentum: Vec<f64>,
    /// 2π L(V − U, σ) |U|^{d−1} / |∂_r g| × direction weight.
    pub weight: f64,
}

/// Shell radii along one ray: roots of g(u) = e(V) − e(u) − σω(|V − u n|).
fn shell_roots(model: &DispersionModel, cut: f64, a: f64, c: f64, br: Branch, scan: usize) -> (Vec<(f64, f64)>, usize) {
    let ray = Ray { a, c };
    let ev = model.e_radial(a);
    let s = br.sign();
    let g = |u: f64| ev - model.e_radial(u) - s * model.omega_radial(ray.k_norm(u));
    let dg = |u: f64| {
        -model.electron.derivative(u) - s * model.phonon.derivative(ray.k_norm(u)) * ray.dk_du(u)
    };
    let (lo, hi) = radial_window(cut, a);
    let mut out = Vec::new();
    let mut tangent = 0;
    for r in scan_roots(g, lo, hi, scan, 1e-15 * (1.0 + hi)) {
        let j = dg(r).abs();
        if j < 1e-6 {
            tangent += 1;
        } else {
            out.push((r, j));
        }
    }
    (out, tangent)
}

/// Shell quadrature outcome.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ShellReport {
    pub sigma: f64,
    pub polar_nodes: usize,
    /// Polar nodes with a tangential (excluded) root.
    pub tangent_nodes: usize,
    pub excluded_fraction: f64,
    pub tangency_flag: bool,
}

/// Number of Gauss-Legendre polar nodes used by the shell route.
pub const SHELL_POLAR_NODES: usize = 96;

/// σ_P by the co-area route with the default polar rule.
pub fn sigma_shell(model: &DispersionModel, p: &[f64]) -> Result<f64> {
    Ok(sigma_shell_report(model, p, SHELL_POLAR_NODES)?.sigma)
}

/// σ_P = 2π Σ_σ ∫ L(P − U, σ) δ(e(P) − e(U) − σω(P − U)) dU.
pub fn sigma_shell_report(model: &DispersionModel, p: &[f64], polar_nodes: usize) -> Result<ShellReport> {
    if p.len() != model.dim {
        return Err(Error::InvalidInput("momentum dimension mismatch".into()));
    }
    let rule = AxialRule::new(model.dim, polar_nodes);
    if model.is_decoupled() {
        return Ok(ShellReport {
            sigma: 0.0,
            polar_nodes: rule.len(),
            tangent_nodes: 0,
            excluded_fraction: 0.0,
            tangency_flag: false,
        });
    }
    let a = norm(p);
    let d = model.dim as i32;
    let cut = model.coupling_cutoff();
    let mut sigma = 0.0;
    let mut tangent_nodes = 0;
    for br in Branch::BOTH {
        for (c, w) in rule.cosines.iter().zip(&rule.weights) {
            let ray = Ray { a, c: *c };
            let (roots, tangent) = shell_roots(model, cut, a, *c, br, 512);
            if tangent > 0 {
                tangent_nodes += 1;
            }
            for (r, j) in roots {
                sigma += w * model.coupling_radial(ray.k_norm(r), br) * r.powi(d - 1) / j;
            }
        }
    }
    let total_nodes = 2 * rule.len();
    let excluded_fraction = tangent_nodes as f64 / total_nodes as f64;
    Ok(ShellReport {
        sigma: 2.0 * std::f64::consts::PI * sigma,
        polar_nodes: rule.len(),
        tangent_nodes,
        excluded_fraction,
        tangency_flag: excluded_fraction > 0.01,
    })
}

/// Outgoing shell nodes from momentum `v` on a full direction rule, used as
/// the gain kernel of the Boltzmann operator. Sum of weights equals σ_V up to
/// the direction-rule error.
pub fn shell_nodes(model: &DispersionModel, v: &[f64], n_polar: usize, n_azimuth: usize) -> Vec<ShellNode> {
    if model.is_decoupled() {
        return Vec::new();
    }
    let a = norm(v);
    let d = model.dim as i32;
    let axis: Vec<f64> = if a > 0.0 { v.to_vec() } else { crate::vector::unit(v.len(), 0) };
    let dirs = direction_rule_indexed(&axis, n_polar, n_azimuth);
    let rule = AxialRule::new(model.dim, n_polar);
    let cut = model.coupling_cutoff();
    let mut out = Vec::new();
    let two_pi = 2.0 * std::f64::consts::PI;
    for br in Branch::BOTH {
        // roots depend on the polar cosine only
        let roots: Vec<_> = rule.cosines.iter().map(|c| shell_roots(model, cut, a, *c, br, 256).0).collect();
        for (ip, n, w) in &dirs {
            let ray = Ray { a, c: rule.cosines[*ip] };
            for &(r, j) in &roots[*ip] {
                let weight = two_pi * w * model.coupling_radial(ray.k_norm(r), br) * r.powi(d - 1) / j;
                out.push(ShellNode {
                    branch: br,
                    momentum: scale(n, r),
                    weight,
                });
            }
        }
    }
    out
}

/// Φ_P, σ_P by both routes and the consistency gate.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CrossSectionReport {
    pub p: Vec<f64>,
    pub phi_p: Complex64,
    pub sigma_shell: f64,
    pub sigma_resolvent: f64,
    pub eta_sequence: Vec<f64>,
    pub extrapolation_residual: f64,
    pub relative_gap: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub shell: ShellReport,
    pub provenance: Provenance,
}

/// Where a reported number came from.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Provenance {
    pub module: String,
    pub route: String,
    pub settings: serde_json::Value,
}

pub fn cross_section(
    model: &DispersionModel,
    p: &[f64],
    eta_sequence: &[f64],
    tolerance: f64,
) -> Result<CrossSectionReport> {
    let phi = phi_p(model, p, eta_sequence)?;
    let shell = sigma_shell_report(model, p, SHELL_POLAR_NODES)?;
    let sigma_resolvent = -2.0 * phi.value.im;
    let relative_gap = if shell.sigma > 0.0 {
        (sigma_resolvent - shell.sigma).abs() / shell.sigma
    } else {
        sigma_resolvent.abs()
    };
    let settings = SelfEnergySettings::default();
    Ok(CrossSectionReport {
        p: p.to_vec(),
        phi_p: phi.value,
        sigma_shell: shell.sigma,
        sigma_resolvent,
        eta_sequence: eta_sequence.to_vec(),
        extrapolation_residual: phi.residual,
        relative_gap,
        tolerance,
        passed: relative_gap < tolerance,
        shell,
        provenance: Provenance {
            module: "collision".into(),
            route: "resolvent: adaptive Gauss-Kronrod in |U| with pole breakpoints, adaptive polar angle, Richardson in eta; shell: Gauss-Legendre polar rule with Brent roots".into(),
            settings: serde_json::json!({
                "rel_tol": settings.rel_tol,
                "abs_tol": settings.abs_tol,
                "richardson_stages": phi.stages,
                "shell_polar_nodes": SHELL_POLAR_NODES,
            }),
        },
    })
}

/// g(s) on a grid together with the weighted sup statistic.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DecayTable {
    pub s: Vec<f64>,
    pub g: Vec<Complex64>,
    /// sup_s ⟨s⟩^{d/2} |g(s)|
    pub weighted_sup: f64,
}

impl DecayTable {
    /// sup of ⟨s⟩^{d/2}|g(s)| restricted to s ∈ [lo, hi].
    pub fn weighted_sup_on(&self, dim: usize, lo: f64, hi: f64) -> f64 {
        self.s
            .iter()
            .zip(&self.g)
            .filter(|(s, _)| **s >= lo && **s <= hi)
            .map(|(s, g)| (1.0 + s * s).powf(dim as f64 / 4.0) * g.norm())
            .fold(0.0, f64::max)
    }
}

/// g(s) = Σ_σ ∫ e^{−isΦ_σ(p,k)} L(k,σ) dk on `s_grid`.
pub fn oscillatory_decay(model: &DispersionModel, p: &[f64], s_grid: &[f64]) -> Result<DecayTable> {
    const S_MAX: f64 = 1000.0;
    if s_grid.iter().any(|&s| !(0.0..=S_MAX).contains(&s)) {
        return Err(Error::InvalidInput(format!("s values must lie in [0, {S_MAX}]")));
    }
    let g: Vec<Complex64> = s_grid
        .par_iter()
        .map(|&s| decay_value(model, p, s))
        .collect::<Result<_>>()?;
    let weighted_sup = s_grid
        .iter()
        .zip(&g)
        .map(|(s, g)| (1.0 + s * s).powf(model.dim as f64 / 4.0) * g.norm())
        .fold(0.0, f64::max);
    Ok(DecayTable {
        s: s_grid.to_vec(),
        g,
        weighted_sup,
    })
}

fn decay_value(model: &DispersionModel, p: &[f64], s: f64) -> Result<Complex64> {
    if model.is_decoupled() {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let a = norm(p);
    let (lo, hi) = radial_window(model.coupling_cutoff(), a);
    let d = model.dim as i32;
    let scale_ = model.total_coupling();
    // panels needed to resolve the phase s·e(u) across the window
    let swing = s * (model.e_radial(hi) - model.e_radial(lo)).abs();
    let n_init = ((swing / 6.0).ceil() as usize).clamp(4, 4000);
    let pts: Vec<f64> = (0..=n_init).map(|i| lo + (hi - lo) * i as f64 / n_init as f64).collect();
    let inner_rule = Adaptive {
        abs_tol: 1e-12 * scale_,
        rel_tol: 1e-10,
        max_panels: 8 * n_init + 2000,
    };
    let outer = Adaptive {
        abs_tol: 1e-11 * scale_,
        rel_tol: 1e-9,
        max_panels: 400,
    };
    let mut total = Complex64::new(0.0, 0.0);
    for br in Branch::BOTH {
        let sg = br.sign();
        let inner = |c: f64| -> Result<Complex64> {
            let ray = Ray { a, c };
            let f = |u: f64| {
                let k = ray.k_norm(u);
                let l = model.coupling_radial(k, br);
                if l == 0.0 {
                    return Complex64::new(0.0, 0.0);
                }
                let phase = s * (model.e_radial(u) + sg * model.omega_radial(k));
                (-I * phase).exp() * (u.powi(d - 1) * l)
            };
            inner_rule.integrate(f, &pts).require("oscillatory radial integral")
        };
        total += axial_integral(model.dim, &outer, inner)?;
    }
    Ok(total)
}

/// `n` equally spaced points on [lo, hi].
pub fn uniform_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// ∫_0^t g(τ) w(τ) dτ for a smooth weight by composite Gauss-Legendre.
pub fn integrate_decay(
    model: &DispersionModel,
    p: &[f64],
    t: f64,
    panels: usize,
    weight: impl Fn(f64) -> Complex64 + Sync,
) -> Result<Complex64> {
    let (x, w) = gauss_legendre_on(16, 0.0, 1.0);
    let h = t / panels as f64;
    let nodes: Vec<(f64, f64)> = (0..panels)
        .flat_map(|j| x.iter().zip(&w).map(move |(xi, wi)| (h * (j as f64 + xi), h * wi)))
        .collect();
    let vals: Vec<Complex64> = nodes
        .par_iter()
        .map(|(s, wi)| Ok(decay_value(model, p, *s)? * weight(*s) * *wi))
        .collect::<Result<_>>()?;
    Ok(vals.into_iter().fold(Complex64::new(0.0, 0.0), |a, b| a + b))
}
