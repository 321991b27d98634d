//! Physical model: radial dispersions, form factor, thermal occupancy and
//! coupling weights, plus numerical validation of the standing assumptions.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{sphere_area, Adaptive};
use crate::vector::{add, axpy, norm, scale, unit};

/// Phonon branch: emission (σ = +1) or absorption (σ = −1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Branch {
    Emission,
    Absorption,
}

impl Branch {
    pub const BOTH: [Branch; 2] = [Branch::Emission, Branch::Absorption];

    pub fn sign(self) -> f64 {
        match self {
            Branch::Emission => 1.0,
            Branch::Absorption => -1.0,
        }
    }

    pub fn from_sign(s: i32) -> Option<Branch> {
        match s {
            1 => Some(Branch::Emission),
            -1 => Some(Branch::Absorption),
            _ => None,
        }
    }
}

/// User-supplied radial function with a display name.
#[derive(Clone)]
pub struct CustomRadial {
    pub name: String,
    pub f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl fmt::Debug for CustomRadial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CustomRadial({})", self.name)
    }
}

/// A function of |k| only.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RadialProfile {
    Zero,
    Constant { value: f64 },
    /// offset + coef·r²
    Quadratic { offset: f64, coef: f64 },
    /// sqrt(r² + mass²)
    Relativistic { mass: f64 },
    /// amplitude·exp(−r²/(2 width²))
    Gaussian { amplitude: f64, width: f64 },
    /// (1 + r²)^{−power/2}
    InverseBracket { power: f64 },
    #[serde(skip)]
    Custom(CustomRadial),
}

impl RadialProfile {
    pub fn value(&self, r: f64) -> f64 {
        match self {
            RadialProfile::Zero => 0.0,
            RadialProfile::Constant { value } => *value,
            RadialProfile::Quadratic { offset, coef } => offset + coef * r * r,
            RadialProfile::Relativistic { mass } => (r * r + mass * mass).sqrt(),
            RadialProfile::Gaussian { amplitude, width } => {
                amplitude * (-r * r / (2.0 * width * width)).exp()
            }
            RadialProfile::InverseBracket { power } => (1.0 + r * r).powf(-0.5 * power),
            RadialProfile::Custom(c) => (c.f)(r),
        }
    }

    /// d/dr of the profile.
    pub fn derivative(&self, r: f64) -> f64 {
        match self {
            RadialProfile::Zero | RadialProfile::Constant { .. } => 0.0,
            RadialProfile::Quadratic { coef, .. } => 2.0 * coef * r,
            RadialProfile::Relativistic { mass } => r / (r * r + mass * mass).sqrt(),
            RadialProfile::Gaussian { amplitude, width } => {
                -amplitude * r / (width * width) * (-r * r / (2.0 * width * width)).exp()
            }
            RadialProfile::InverseBracket { power } => {
                -power * r * (1.0 + r * r).powf(-0.5 * power - 1.0)
            }
            RadialProfile::Custom(c) => {
                let h = 1e-5 * (1.0 + r.abs());
                ((c.f)(r + h) - (c.f)(r - h)) / (2.0 * h)
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            RadialProfile::Zero => true,
            RadialProfile::Constant { value } => *value == 0.0,
            RadialProfile::Gaussian { amplitude, .. } => *amplitude == 0.0,
            _ => false,
        }
    }

    /// Infimum over r ≥ 0 when known in closed form.
    fn infimum(&self) -> Option<f64> {
        match self {
            RadialProfile::Zero => Some(0.0),
            RadialProfile::Constant { value } => Some(*value),
            RadialProfile::Quadratic { offset, coef } if *coef >= 0.0 => Some(*offset),
            RadialProfile::Relativistic { mass } => Some(mass.abs()),
            _ => None,
        }
    }

    pub fn describe(&self) -> String {
        match self {
            RadialProfile::Zero => "0".into(),
            RadialProfile::Constant { value } => format!("{value}"),
            RadialProfile::Quadratic { offset, coef } => format!("{offset} + {coef} r^2"),
            RadialProfile::Relativistic { mass } => format!("sqrt(r^2 + {mass}^2)"),
            RadialProfile::Gaussian { amplitude, width } => {
                format!("{amplitude} exp(-r^2 / (2 * {width}^2))")
            }
            RadialProfile::InverseBracket { power } => format!("<r>^-{power}"),
            RadialProfile::Custom(c) => c.name.clone(),
        }
    }
}

/// Constants a model declares for its assumption bounds.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct DeclaredBounds {
    /// C in |∇^l e|, |∇^l ω| ≤ C(1 + ⟨k⟩^{2−l}).
    pub dispersion: f64,
    /// C in |∇^l F| ≤ C⟨k⟩^{−2d−12}.
    pub form_factor: f64,
    /// Lower Hessian bound C₁.
    pub hessian_min: f64,
    /// Upper Hessian bound C₂.
    pub hessian_max: f64,
    /// C in inf ω − μ/β ≥ C.
    pub trace_gap: f64,
}

impl Default for DeclaredBounds {
    fn default() -> Self {
        DeclaredBounds {
            dispersion: 10.0,
            form_factor: 1e11,
            hessian_min: 1.0,
            hessian_max: 1.0,
            trace_gap: 1.0,
        }
    }
}

/// Electron dispersion e, phonon dispersion ω, form factor F, temperature
/// and chemical potential in dimension `dim`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DispersionModel {
    pub dim: usize,
    pub electron: RadialProfile,
    pub phonon: RadialProfile,
    pub form_factor: RadialProfile,
    pub beta: f64,
    pub mu: f64,
    pub bounds: DeclaredBounds,
}

impl DispersionModel {
    /// e(q) = |q|²/2, ω ≡ 1, F(k) = e^{−|k|²/2}, β = 1, μ = −1 in d = 3.
    pub fn quadratic_einstein() -> Self {
        DispersionModel {
            dim: 3,
            electron: RadialProfile::Quadratic {
                offset: 0.0,
                coef: 0.5,
            },
            phonon: RadialProfile::Constant { value: 1.0 },
            form_factor: RadialProfile::Gaussian {
                amplitude: 1.0,
                width: 1.0,
            },
            beta: 1.0,
            mu: -1.0,
            bounds: DeclaredBounds::default(),
        }
    }

    pub fn with_dim(mut self, dim: usize) -> Self {
        self.dim = dim;
        self
    }

    /// Same model with the coupling switched off (F ≡ 0).
    pub fn decoupled(mut self) -> Self {
        self.form_factor = RadialProfile::Zero;
        self
    }

    pub fn is_decoupled(&self) -> bool {
        self.form_factor.is_zero()
    }

    pub fn e_radial(&self, r: f64) -> f64 {
        self.electron.value(r)
    }

    pub fn e(&self, k: &[f64]) -> f64 {
        self.electron.value(norm(k))
    }

    /// ∇e(k) = e'(|k|) k/|k|.
    pub fn grad_e(&self, k: &[f64]) -> Vec<f64> {
        let r = norm(k);
        if r == 0.0 {
            return vec![0.0; k.len()];
        }
        scale(k, self.electron.derivative(r) / r)
    }

    pub fn omega_radial(&self, r: f64) -> f64 {
        self.phonon.value(r)
    }

    pub fn omega(&self, k: &[f64]) -> f64 {
        self.phonon.value(norm(k))
    }

    pub fn form_factor_radial(&self, r: f64) -> f64 {
        self.form_factor.value(r)
    }

    /// Trace-class precondition: βω(k) − μ > 0 at |k| = r.
    fn occupancy_exponent(&self, r: f64) -> f64 {
        self.beta * self.omega_radial(r) - self.mu
    }

    /// 𝒩 at |k| = r without the validity check.
    pub fn occupancy_radial(&self, r: f64) -> f64 {
        1.0 / self.occupancy_exponent(r).exp_m1()
    }

    /// Bose occupancy 𝒩(k) = e^{−βω+μ}/(1 − e^{−βω+μ}).
    pub fn thermal_occupancy(&self, k: &[f64]) -> Result<f64> {
        let x = self.occupancy_exponent(norm(k));
        if !(x > 0.0) {
            return Err(Error::InvalidModel(format!(
                "beta*omega - mu = {x} is not positive; occupancy diverges"
            )));
        }
        Ok(1.0 / x.exp_m1())
    }

    /// L(k, σ) at |k| = r.
    pub fn coupling_radial(&self, r: f64, branch: Branch) -> f64 {
        let f = self.form_factor_radial(r);
        if f == 0.0 {
            return 0.0;
        }
        let extra = match branch {
            Branch::Emission => 1.0,
            Branch::Absorption => 0.0,
        };
        f * f * (self.occupancy_radial(r) + extra)
    }

    /// L(k, σ) = |F(k)|²(𝒩(k) + (σ+1)/2).
    pub fn coupling_weight(&self, k: &[f64], branch: Branch) -> Result<f64> {
        self.thermal_occupancy(k)?;
        Ok(self.coupling_radial(norm(k), branch))
    }

    /// 𝓛(k) = L(k, +1).
    pub fn coupling_envelope(&self, k: &[f64]) -> Result<f64> {
        self.coupling_weight(k, Branch::Emission)
    }

    /// Φ_σ(p, k) = e(k + p) + σ ω(k).
    pub fn phi_sigma(&self, p: &[f64], k: &[f64], branch: Branch) -> f64 {
        self.e(&add(k, p)) + branch.sign() * self.omega(k)
    }

    /// ∫ L(k, σ) dk.
    pub fn branch_weight(&self, branch: Branch) -> f64 {
        if self.is_decoupled() {
            return 0.0;
        }
        let d = self.dim;
        let area = sphere_area(d - 1);
        let cut = self.coupling_cutoff();
        let r = Adaptive::new(1e-15, 1e-13).integrate(
            |r: f64| r.powi(d as i32 - 1) * self.coupling_radial(r, branch),
            &[0.0, 0.5 * cut, cut],
        );
        area * r.value
    }

    /// Σ_σ ∫ L(k, σ) dk.
    pub fn total_coupling(&self) -> f64 {
        Branch::BOTH.iter().map(|b| self.branch_weight(*b)).sum()
    }

    /// Radius beyond which r^{d−1}𝓛(r) is below 1e-17 of its maximum.
    pub fn coupling_cutoff(&self) -> f64 {
        if self.is_decoupled() {
            return 1.0;
        }
        let d = self.dim as i32;
        let g = |r: f64| r.powi(d - 1).max(1.0) * self.coupling_radial(r, Branch::Emission);
        let mut peak = 0.0f64;
        let mut r = 0.0;
        while r <= 200.0 {
            peak = peak.max(g(r));
            r += 0.05;
        }
        let mut cut = 200.0;
        let mut r = 200.0;
        while r > 0.0 {
            if g(r) > 1e-17 * peak {
                cut = r + 0.5;
                break;
            }
            r -= 0.05;
        }
        cut.min(200.0)
    }

    /// Infimum of ω − μ/β estimated over the lattice radii (exact for
    /// profiles with a closed-form infimum).
    fn trace_gap(&self, radii: &[f64]) -> (f64, f64) {
        if let Some(inf) = self.phonon.infimum() {
            return (inf - self.mu / self.beta, 0.0);
        }
        radii
            .iter()
            .map(|&r| (self.omega_radial(r) - self.mu / self.beta, r))
            .fold((f64::INFINITY, 0.0), |a, b| if b.0 < a.0 { b } else { a })
    }
}

/// Sample points and finite-difference step for assumption validation.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ValidationLattice {
    pub radii: Vec<f64>,
    /// |p| values for the Hessian check of Φ_±(p, ·).
    pub p_magnitudes: Vec<f64>,
    pub fd_step: f64,
    /// Highest derivative order checked (capped at 4).
    pub max_order: usize,
    /// Radii used for the log-log tail slope of |F|.
    pub tail_radii: Vec<f64>,
}

impl Default for ValidationLattice {
    fn default() -> Self {
        ValidationLattice {
            radii: vec![0.0, 0.25, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0],
            p_magnitudes: vec![0.0, 1.0, 2.0],
            fd_step: 1e-3,
            max_order: 4,
            tail_radii: vec![4.0, 5.0, 6.0, 7.0, 8.0],
        }
    }
}

impl ValidationLattice {
    /// Same lattice with every radius interval bisected.
    pub fn refined(&self) -> Self {
        let mut radii = Vec::new();
        for w in self.radii.windows(2) {
            radii.push(w[0]);
            radii.push(0.5 * (w[0] + w[1]));
        }
        radii.push(*self.radii.last().unwrap());
        ValidationLattice {
            radii,
            ..self.clone()
        }
    }
}

/// Outcome of one assumption check.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AssumptionCheck {
    pub name: String,
    pub order: Option<usize>,
    pub fitted_constant: f64,
    pub declared_constant: f64,
    pub passed: bool,
    /// Sample point where the fitted constant is attained.
    pub worst_point: Vec<f64>,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ValidationReport {
    pub dim: usize,
    pub electron: String,
    pub phonon: String,
    pub form_factor: String,
    pub checks: Vec<AssumptionCheck>,
    pub passed: bool,
}

impl ValidationReport {
    pub fn failures(&self) -> impl Iterator<Item = &AssumptionCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&AssumptionCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// l-th directional derivative along unit `u` at `k` by a central difference.
fn directional_derivative(f: &dyn Fn(&[f64]) -> f64, k: &[f64], u: &[f64], l: usize, h: f64) -> f64 {
    if l == 0 {
        return f(k);
    }
    let mut acc = 0.0;
    for j in 0..=l {
        let offset = (l as f64 / 2.0 - j as f64) * h;
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        acc += sign * binomial(l, j) * f(&axpy(k, offset, u));
    }
    acc / h.powi(l as i32)
}

fn sample_directions(d: usize) -> Vec<Vec<f64>> {
    let mut dirs: Vec<Vec<f64>> = (0..d).map(|i| unit(d, i)).collect();
    if d > 1 {
        let s = 1.0 / (d as f64).sqrt();
        dirs.push(vec![s; d]);
        let mut alt = vec![s; d];
        alt[1] = -s;
        dirs.push(alt);
    }
    dirs
}

fn bracket(r: f64) -> f64 {
    (1.0 + r * r).sqrt()
}

/// FD Hessian of `f` at `k`.
fn hessian(f: &dyn Fn(&[f64]) -> f64, k: &[f64], h: f64) -> DMatrix<f64> {
    let d = k.len();
    let mut m = DMatrix::zeros(d, d);
    let f0 = f(k);
    for i in 0..d {
        let ei = unit(d, i);
        let fp = f(&axpy(k, h, &ei));
        let fm = f(&axpy(k, -h, &ei));
        m[(i, i)] = (fp - 2.0 * f0 + fm) / (h * h);
        for j in 0..i {
            let ej = unit(d, j);
            let pp = f(&axpy(&axpy(k, h, &ei), h, &ej));
            let pm = f(&axpy(&axpy(k, h, &ei), -h, &ej));
            let mp = f(&axpy(&axpy(k, -h, &ei), h, &ej));
            let mm = f(&axpy(&axpy(k, -h, &ei), -h, &ej));
            let v = (pp - pm - mp + mm) / (4.0 * h * h);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

/// Numerically validate the standing assumptions of the model on a lattice.
pub fn validate_assumptions(model: &DispersionModel, lattice: &ValidationLattice) -> ValidationReport {
    let d = model.dim;
    let b = model.bounds;
    let h = lattice.fd_step;
    let max_order = lattice.max_order.min(4).min(2 * d);
    let dirs = sample_directions(d);
    let base = dirs.last().unwrap().clone();
    let mut checks = Vec::new();

    // trace-class gap
    let (gap, at) = model.trace_gap(&lattice.radii);
    checks.push(AssumptionCheck {
        name: "trace-class".into(),
        order: None,
        fitted_constant: gap,
        declared_constant: b.trace_gap,
        passed: gap >= b.trace_gap && gap > 0.0,
        worst_point: scale(&base, at),
        detail: "inf omega - mu/beta".into(),
    });

    // derivative growth of e and ω
    let e_fn = |k: &[f64]| model.e(k);
    let w_fn = |k: &[f64]| model.omega(k);
    for (label, f) in [("electron", &e_fn as &dyn Fn(&[f64]) -> f64), ("phonon", &w_fn)] {
        for l in 0..=max_order {
            let mut worst = (0.0f64, vec![0.0; d]);
            for &r in &lattice.radii {
                let k = scale(&base, r);
                let bound = 1.0 + bracket(r).powi(2 - l as i32);
                for u in &dirs {
                    let v = directional_derivative(f, &k, u, l, h).abs() / bound;
                    if v > worst.0 {
                        worst = (v, k.clone());
                    }
                }
            }
            checks.push(AssumptionCheck {
                name: format!("{label}-derivatives"),
                order: Some(l),
                fitted_constant: worst.0,
                declared_constant: b.dispersion,
                passed: worst.0 <= b.dispersion,
                worst_point: worst.1,
                detail: "|D^l f| / (1 + <k>^(2-l))".into(),
            });
        }
    }

    // form factor decay
    let decay = 2.0 * d as f64 + 12.0;
    let f_fn = |k: &[f64]| model.form_factor_radial(norm(k));
    for l in 0..=max_order {
        let mut worst = (0.0f64, vec![0.0; d]);
        for &r in &lattice.radii {
            let k = scale(&base, r);
            let weight = bracket(r).powf(decay);
            for u in &dirs {
                let v = directional_derivative(&f_fn, &k, u, l, h).abs() * weight;
                if v > worst.0 {
                    worst = (v, k.clone());
                }
            }
        }
        checks.push(AssumptionCheck {
            name: "form-factor-decay".into(),
            order: Some(l),
            fitted_constant: worst.0,
            declared_constant: b.form_factor,
            passed: worst.0 <= b.form_factor,
            worst_point: worst.1,
            detail: format!("|D^l F| <k>^{decay}"),
        });
    }
    {
        let pts: Vec<(f64, f64)> = lattice
            .tail_radii
            .iter()
            .map(|&r| (bracket(r), model.form_factor_radial(r).abs()))
            .filter(|p| p.1 > 0.0)
            .collect();
        let (slope, passed) = if pts.len() >= 2 {
            let x: Vec<f64> = pts.iter().map(|p| p.0).collect();
            let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
            let fit = crate::fit::log_log_fit(&x, &y);
            (fit.slope, fit.slope <= -decay)
        } else {
            // identically zero on the tail
            (f64::NEG_INFINITY, true)
        };
        checks.push(AssumptionCheck {
            name: "form-factor-tail-slope".into(),
            order: None,
            fitted_constant: slope,
            declared_constant: -decay,
            passed,
            worst_point: scale(&base, *lattice.tail_radii.last().unwrap_or(&0.0)),
            detail: "log-log slope of |F| against <k>".into(),
        });
    }

    // growth at infinity of Φ_± along the radial direction
    {
        let rmax = lattice.radii.iter().cloned().fold(0.0, f64::max);
        let mut ok = true;
        let mut worst = f64::INFINITY;
        for br in Branch::BOTH {
            let phi = |r: f64| model.e_radial(r) + br.sign() * model.omega_radial(r);
            let rise = phi(rmax) - phi(0.5 * rmax);
            worst = worst.min(rise);
            ok &= rise > 0.0;
        }
        checks.push(AssumptionCheck {
            name: "large-k-growth".into(),
            order: None,
            fitted_constant: worst,
            declared_constant: 0.0,
            passed: ok,
            worst_point: scale(&base, rmax),
            detail: "Phi(r_max) - Phi(r_max/2) for both branches".into(),
        });
    }

    // Hessian of Φ_± in k
    {
        let tol = 1e-5 * (1.0 + b.hessian_max.abs());
        let mut lo = (f64::INFINITY, vec![0.0; d]);
        let mut hi = (f64::NEG_INFINITY, vec![0.0; d]);
        for &pm in &lattice.p_magnitudes {
            let p = scale(&unit(d, 0), pm);
            for br in Branch::BOTH {
                let phi = |k: &[f64]| model.phi_sigma(&p, k, br);
                for &r in &lattice.radii {
                    for u in &dirs {
                        // keep away from the |k| = 0 kink of radial ω
                        let k = scale(u, r.max(4.0 * h));
                        let hs = hessian(&phi, &k, h.max(1e-3));
                        let eig = SymmetricEigen::new(hs).eigenvalues;
                        let mn = eig.iter().cloned().fold(f64::INFINITY, f64::min);
                        let mx = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        if mn < lo.0 {
                            lo = (mn, k.clone());
                        }
                        if mx > hi.0 {
                            hi = (mx, k.clone());
                        }
                    }
                }
            }
        }
        checks.push(AssumptionCheck {
            name: "hessian-lower".into(),
            order: Some(2),
            fitted_constant: lo.0,
            declared_constant: b.hessian_min,
            passed: lo.0 >= b.hessian_min - tol && b.hessian_min > 0.0,
            worst_point: lo.1,
            detail: "smallest eigenvalue of Hess_k Phi_+-".into(),
        });
        checks.push(AssumptionCheck {
            name: "hessian-upper".into(),
            order: Some(2),
            fitted_constant: hi.0,
            declared_constant: b.hessian_max,
            passed: hi.0 <= b.hessian_max + tol,
            worst_point: hi.1,
            detail: format!("largest eigenvalue of Hess_k Phi_+-, margin {:.6e}", b.hessian_max - hi.0),
        });
    }

    let passed = checks.iter().all(|c| c.passed);
    ValidationReport {
        dim: d,
        electron: model.electron.describe(),
        phonon: model.phonon.describe(),
        form_factor: model.form_factor.describe(),
        checks,
        passed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_occupancy() {
        let m = DispersionModel::quadratic_einstein();
        let n = m.thermal_occupancy(&[0.3, 0.0, 1.0]).unwrap();
        assert!((n - 1.0 / (2f64.exp() - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn branch_weight_default() {
        // ∫ e^{−|k|²} dk = π^{3/2}
        let m = DispersionModel::quadratic_einstein();
        let n = 1.0 / (2f64.exp() - 1.0);
        let w = m.branch_weight(Branch::Absorption);
        assert!((w - n * std::f64::consts::PI.powf(1.5)).abs() < 1e-12);
    }
}
