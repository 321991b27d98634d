//! Two-bump initial state ψ₀^ε = ψ₊ + ψ₋, its Wigner components in closed
//! form, free evolution, and the fringe Fourier coefficient.
//!
//! Conventions: f̂(p) = (2π)^{−d/2} ∫ e^{−ip·x} f(x) dx,
//! W(x,v) = (2π)^{−d} ∫ e^{−iv·y} ψ(x+y/2) conj ψ(x−y/2) dy and
//! Ŵ(ξ,v) = (2π)^{−d/2} ∫ e^{−iξ·x} W(x,v) dx = (2π)^{−d/2} ψ̂(v+ξ/2) conj ψ̂(v−ξ/2).

use std::fmt;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dispersion::DispersionModel;
use crate::error::{Error, Result};
use crate::grid::{cell_volume, fft_index, fft_nd, point, total_len, Axis};
use crate::quadrature::gauss_hermite;
use crate::vector::{angle, dot, norm, sub};
use crate::wigner::{Domain, WignerGrid};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Real-space envelope f.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Envelope {
    /// f(x) = (π w²)^{−d/4} e^{−|x|²/(2w²)}
    Gaussian { width: f64 },
}

impl Default for Envelope {
    fn default() -> Self {
        Envelope::Gaussian { width: 1.0 }
    }
}

impl Envelope {
    pub fn value(&self, x: &[f64]) -> f64 {
        match *self {
            Envelope::Gaussian { width } => {
                let d = x.len() as f64;
                (std::f64::consts::PI * width * width).powf(-d / 4.0)
                    * (-dot(x, x) / (2.0 * width * width)).exp()
            }
        }
    }

    /// f̂(p)
    pub fn hat(&self, p: &[f64]) -> Complex64 {
        match *self {
            Envelope::Gaussian { width } => {
                let d = p.len() as f64;
                let v = (width * width / std::f64::consts::PI).powf(d / 4.0)
                    * (-width * width * dot(p, p) / 2.0).exp();
                Complex64::new(v, 0.0)
            }
        }
    }

    /// Spatial length scale of f.
    pub fn width(&self) -> f64 {
        match *self {
            Envelope::Gaussian { width } => width,
        }
    }

    /// Momentum scale of f̂.
    pub fn bandwidth(&self) -> f64 {
        1.0 / self.width()
    }

    /// ‖f‖₂² by tensor Gauss-Hermite quadrature.
    pub fn norm_squared(&self, dim: usize) -> f64 {
        match *self {
            Envelope::Gaussian { width } => {
                // |f|² is a product of 1-D factors; x = w t maps the weight e^{−t²}
                let (t, w) = gauss_hermite(24);
                let one_d: f64 = t
                    .iter()
                    .zip(&w)
                    .map(|(ti, wi)| {
                        let f1 = (std::f64::consts::PI * width * width).powf(-0.25)
                            * (-(width * ti).powi(2) / (2.0 * width * width)).exp();
                        wi * width * (ti * ti).exp() * f1 * f1
                    })
                    .sum();
                one_d.powi(dim as i32)
            }
        }
    }
}

/// Which part of |ψ₀⟩⟨ψ₀| a Wigner function represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Component {
    #[serde(rename = "++")]
    PlusPlus,
    #[serde(rename = "--")]
    MinusMinus,
    #[serde(rename = "+-")]
    PlusMinus,
    #[serde(rename = "-+")]
    MinusPlus,
    #[serde(rename = "total")]
    Total,
}

impl Component {
    pub const PARTS: [Component; 4] = [
        Component::PlusPlus,
        Component::MinusMinus,
        Component::PlusMinus,
        Component::MinusPlus,
    ];

    pub fn is_off_diagonal(self) -> bool {
        matches!(self, Component::PlusMinus | Component::MinusPlus)
    }

    /// (left, right) bump signs, None for the total state.
    fn signs(self) -> Option<(f64, f64)> {
        match self {
            Component::PlusPlus => Some((1.0, 1.0)),
            Component::MinusMinus => Some((-1.0, -1.0)),
            Component::PlusMinus => Some((1.0, -1.0)),
            Component::MinusPlus => Some((-1.0, 1.0)),
            Component::Total => None,
        }
    }
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Component::PlusPlus => "++",
            Component::MinusMinus => "--",
            Component::PlusMinus => "+-",
            Component::MinusPlus => "-+",
            Component::Total => "total",
        };
        f.write_str(s)
    }
}

/// Envelope f, momentum P, center Q (parallel to P), scale ε.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WavePacketSpec {
    pub envelope: Envelope,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub epsilon: f64,
}

impl WavePacketSpec {
    pub fn new(envelope: Envelope, p: Vec<f64>, q: Vec<f64>, epsilon: f64) -> Result<Self> {
        let s = WavePacketSpec {
            envelope,
            p,
            q,
            epsilon,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn dim(&self) -> usize {
        self.p.len()
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        WavePacketSpec::new(self.envelope, self.p.clone(), self.q.clone(), epsilon)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.p.len();
        if d == 0 || self.q.len() != d {
            return Err(Error::InvalidInput("P and Q must have the same nonzero dimension".into()));
        }
        if norm(&self.p) == 0.0 {
            return Err(Error::InvalidInput("P must be nonzero".into()));
        }
        if norm(&self.q) > 0.0 && angle(&self.p, &self.q) >= 1e-12 {
            return Err(Error::InvalidInput("P and Q must be parallel".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::InvalidInput(format!("epsilon {} not in (0, 1)", self.epsilon)));
        }
        if self.envelope.width() <= 0.0 {
            return Err(Error::InvalidInput("envelope width must be positive".into()));
        }
        let nf = self.envelope.norm_squared(d);
        if (nf - 1.0).abs() > 1e-8 {
            return Err(Error::InvalidInput(format!("envelope norm^2 = {nf} is not 1")));
        }
        let n = self.norm_squared().sqrt();
        if !(1.0..=2.0).contains(&n) {
            return Err(Error::InvalidInput(format!("|psi_0| = {n} outside [1, 2]")));
        }
        Ok(())
    }

    /// ‖ψ₀^ε‖₂² = 2 + 2 Re⟨ψ₋, ψ₊⟩, the overlap by Gauss-Hermite quadrature in
    /// momentum space.
    pub fn norm_squared(&self) -> f64 {
        let d = self.dim();
        let bw = self.envelope.bandwidth();
        let (t, w) = gauss_hermite(40);
        // ⟨ψ₋,ψ₊⟩ = ∫ conj ψ̂₋(p) ψ̂₊(p) dp; sample around p = P (ψ̂₊'s support)
        let mut overlap = Complex64::new(0.0, 0.0);
        let n = t.len();
        let total = n.pow(d as u32);
        for flat in 0..total {
            let mut p = self.p.clone();
            let mut weight = 1.0;
            let mut rem = flat;
            for pj in p.iter_mut() {
                let k = rem % n;
                rem /= n;
                let scale = self.epsilon * bw;
                *pj += scale * t[k];
                weight *= w[k] * scale * (t[k] * t[k]).exp();
            }
            overlap += self.psi_hat(-1.0, &p).conj() * self.psi_hat(1.0, &p) * weight;
        }
        2.0 + 2.0 * overlap.re
    }

    /// ψ̂₊ (sign = +1) or ψ̂₋ (sign = −1) at momentum p:
    /// ψ̂_± = ε^{−d/2} e^{±i(p ∓ P)·Q/ε} f̂((p ∓ P)/ε).
    pub fn psi_hat(&self, sign: f64, p: &[f64]) -> Complex64 {
        let d = self.dim() as f64;
        let eps = self.epsilon;
        let shifted: Vec<f64> = p.iter().zip(&self.p).map(|(pi, pp)| pi - sign * pp).collect();
        let phase = sign * dot(&shifted, &self.q) / eps;
        let arg: Vec<f64> = shifted.iter().map(|x| x / eps).collect();
        eps.powf(-d / 2.0) * (I * phase).exp() * self.envelope.hat(&arg)
    }

    /// ψ₊ (sign = +1) or ψ₋ (sign = −1) at position x:
    /// ψ_± = ε^{d/2} f(εx ± Q) e^{±iP·x}.
    pub fn psi(&self, sign: f64, x: &[f64]) -> Complex64 {
        let d = self.dim() as f64;
        let eps = self.epsilon;
        let arg: Vec<f64> = x.iter().zip(&self.q).map(|(xi, qi)| eps * xi + sign * qi).collect();
        eps.powf(d / 2.0) * self.envelope.value(&arg) * (I * sign * dot(&self.p, x)).exp()
    }

    /// Closed-form Ŵ of a component at (ξ, v).
    pub fn wigner_hat(&self, component: Component, xi: &[f64], v: &[f64]) -> Complex64 {
        match component.signs() {
            Some((a, b)) => {
                let d = self.dim() as f64;
                let plus: Vec<f64> = v.iter().zip(xi).map(|(v, x)| v + 0.5 * x).collect();
                let minus: Vec<f64> = v.iter().zip(xi).map(|(v, x)| v - 0.5 * x).collect();
                (2.0 * std::f64::consts::PI).powf(-d / 2.0)
                    * self.psi_hat(a, &plus)
                    * self.psi_hat(b, &minus).conj()
            }
            None => Component::PARTS
                .iter()
                .map(|c| self.wigner_hat(*c, xi, v))
                .sum(),
        }
    }

    /// Center (ξ, v) of a component's support.
    pub fn component_center(&self, component: Component) -> (Vec<f64>, Vec<f64>) {
        let d = self.dim();
        let zero = vec![0.0; d];
        let two_p: Vec<f64> = self.p.iter().map(|x| 2.0 * x).collect();
        let neg_two_p: Vec<f64> = two_p.iter().map(|x| -x).collect();
        let neg_p: Vec<f64> = self.p.iter().map(|x| -x).collect();
        match component {
            Component::PlusPlus => (zero, self.p.clone()),
            Component::MinusMinus => (zero, neg_p),
            Component::PlusMinus => (two_p, zero),
            Component::MinusPlus => (neg_two_p, zero),
            Component::Total => (zero.clone(), zero),
        }
    }
}

/// Relative allowance so grids built exactly at a resolution limit pass.
const SLACK: f64 = 1.0 + 1e-9;

/// Resolution requirements for sampling a component on a Fourier grid.
fn check_resolution(spec: &WavePacketSpec, component: Component, xi_axes: &[Axis], v_axes: &[Axis]) -> Result<()> {
    let eps = spec.epsilon;
    let bw = spec.envelope.bandwidth();
    let parts: Vec<Component> = match component {
        Component::Total => Component::PARTS.to_vec(),
        c => vec![c],
    };
    for c in parts {
        let (xi_c, v_c) = spec.component_center(c);
        for (j, (xa, va)) in xi_axes.iter().zip(v_axes).enumerate() {
            let q = spec.q[j].abs();
            if va.len > 1 {
                if va.step > 0.5 * eps * bw * SLACK {
                    return Err(Error::GridResolution(format!(
                        "v step {} exceeds half the envelope scale {}",
                        va.step,
                        0.5 * eps * bw
                    )));
                }
                if c.is_off_diagonal() && va.step * 2.0 * q / eps > 0.5 * std::f64::consts::PI * SLACK {
                    return Err(Error::GridResolution(format!(
                        "v step {} does not resolve the fringe phase 2vQ/eps",
                        va.step
                    )));
                }
            }
            if xa.len > 1 {
                if c.is_off_diagonal() && xa.step > eps * bw * SLACK {
                    return Err(Error::GridResolution(format!(
                        "xi step {} exceeds the envelope scale {}",
                        xa.step,
                        eps * bw
                    )));
                }
                if !c.is_off_diagonal() && xa.step * q / eps > 0.5 * std::f64::consts::PI * SLACK {
                    return Err(Error::GridResolution(format!(
                        "xi step {} does not resolve the phase xi Q/eps",
                        xa.step
                    )));
                }
            }
            if component != Component::Total && (!xa.contains(xi_c[j]) || !va.contains(v_c[j])) {
                return Err(Error::GridResolution(format!(
                    "grid does not cover the {c} support centered at xi={}, v={}",
                    xi_c[j], v_c[j]
                )));
            }
        }
    }
    Ok(())
}

/// Sample the closed-form component on the given Fourier axes.
pub fn initial_wigner_hat_on(
    spec: &WavePacketSpec,
    component: Component,
    xi_axes: Vec<Axis>,
    v_axes: Vec<Axis>,
) -> Result<WignerGrid> {
    let d = spec.dim();
    if xi_axes.len() != d || v_axes.len() != d {
        return Err(Error::GridMismatch("axes dimension differs from the wave packet".into()));
    }
    check_resolution(spec, component, &xi_axes, &v_axes)?;
    let nv = total_len(&v_axes);
    let nx = total_len(&xi_axes);
    let values: Vec<Complex64> = (0..nx * nv)
        .into_par_iter()
        .map(|i| {
            let xi = point(&xi_axes, i / nv);
            let v = point(&v_axes, i % nv);
            spec.wigner_hat(component, &xi, &v)
        })
        .collect();
    Ok(WignerGrid {
        domain: Domain::Fourier,
        space_axes: xi_axes,
        v_axes,
        values,
        component,
        epsilon: spec.epsilon,
    })
}

/// Two-scale grid geometry around a component's support.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoScaleGrid {
    /// ξ nodes per axis (1 keeps only the central slice).
    pub n_xi: usize,
    pub n_v: usize,
    /// Half-width of each axis in units of ε·(envelope bandwidth).
    pub span: f64,
}

impl Default for TwoScaleGrid {
    fn default() -> Self {
        TwoScaleGrid {
            n_xi: 1,
            n_v: 41,
            span: 6.0,
        }
    }
}

impl TwoScaleGrid {
    pub fn axes(&self, spec: &WavePacketSpec, component: Component) -> (Vec<Axis>, Vec<Axis>) {
        let (xi_c, v_c) = spec.component_center(component);
        let half = self.span * spec.epsilon * spec.envelope.bandwidth();
        let mk = |c: f64, n: usize| {
            if n <= 1 {
                Axis::point(c)
            } else {
                Axis::centered(c, 2.0 * half / (n - 1) as f64, n)
            }
        };
        (
            xi_c.iter().map(|c| mk(*c, self.n_xi)).collect(),
            v_c.iter().map(|c| mk(*c, self.n_v)).collect(),
        )
    }
}

/// Ŵ_{0,component} on a two-scale grid centered on the component's support.
pub fn initial_wigner_hat(spec: &WavePacketSpec, component: Component, grid: &TwoScaleGrid) -> Result<WignerGrid> {
    if component == Component::Total {
        return Err(Error::InvalidInput(
            "the total state has no single support center; use initial_wigner_hat_on".into(),
        ));
    }
    let (xi, v) = grid.axes(spec, component);
    initial_wigner_hat_on(spec, component, xi, v)
}

/// Multiply Ŵ_{+−} (or Ŵ_{−+}) by e^{−it[e(v+ξ/2) − e(v−ξ/2)]}, t = T/ε.
pub fn free_evolve_offdiagonal(
    spec: &WavePacketSpec,
    model: &DispersionModel,
    big_t: f64,
    grid: &WignerGrid,
) -> Result<WignerGrid> {
    if !grid.component.is_off_diagonal() {
        return Err(Error::InvalidInput(format!(
            "free_evolve_offdiagonal needs a +- or -+ component, got {}",
            grid.component
        )));
    }
    if grid.domain != Domain::Fourier {
        return Err(Error::InvalidInput("free evolution acts on Fourier-domain grids".into()));
    }
    let t = big_t / spec.epsilon;
    let nv = total_len(&grid.v_axes);
    let values: Vec<Complex64> = grid
        .values
        .par_iter()
        .enumerate()
        .map(|(i, w)| {
            if big_t == 0.0 {
                return *w;
            }
            let xi = point(&grid.space_axes, i / nv);
            let v = point(&grid.v_axes, i % nv);
            let plus: Vec<f64> = v.iter().zip(&xi).map(|(v, x)| v + 0.5 * x).collect();
            let minus: Vec<f64> = v.iter().zip(&xi).map(|(v, x)| v - 0.5 * x).collect();
            w * (-I * t * (model.e(&plus) - model.e(&minus))).exp()
        })
        .collect();
    Ok(WignerGrid {
        values,
        ..grid.clone()
    })
}

/// Complex field sampled on a uniform spatial grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialField {
    pub axes: Vec<Axis>,
    pub values: Vec<Complex64>,
}

impl SpatialField {
    pub fn sample(axes: Vec<Axis>, f: impl Fn(&[f64]) -> Complex64 + Sync) -> Self {
        let n = total_len(&axes);
        let values = (0..n).into_par_iter().map(|i| f(&point(&axes, i))).collect();
        SpatialField { axes, values }
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.len).collect()
    }

    pub fn density(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm_sqr()).collect()
    }

    pub fn norm_squared(&self) -> f64 {
        self.density().iter().sum::<f64>() * cell_volume(&self.axes)
    }

    /// Free evolution e^{−it e(−i∇)} applied spectrally on the periodic box.
    pub fn free_evolve(&self, model: &DispersionModel, t: f64) -> SpatialField {
        let shape = self.shape();
        let mut data = self.values.clone();
        fft_nd(&mut data, &shape, false);
        let n_total = data.len();
        let dp: Vec<f64> = self
            .axes
            .iter()
            .map(|a| 2.0 * std::f64::consts::PI / (a.len as f64 * a.step))
            .collect();
        data.par_iter_mut().enumerate().for_each(|(i, v)| {
            let idx = crate::grid::unravel(i, &shape);
            let p: Vec<f64> = idx
                .iter()
                .zip(&shape)
                .zip(&dp)
                .map(|((k, n), h)| fft_index(*k, *n) as f64 * h)
                .collect();
            *v *= (-I * t * model.e(&p)).exp() / n_total as f64;
        });
        fft_nd(&mut data, &shape, true);
        SpatialField {
            axes: self.axes.clone(),
            values: data,
        }
    }
}

/// ψ₀^ε = ψ₊ + ψ₋ on the given axes.
pub fn initial_field(spec: &WavePacketSpec, axes: Vec<Axis>) -> SpatialField {
    SpatialField::sample(axes, |x| spec.psi(1.0, x) + spec.psi(-1.0, x))
}

/// ∫ e^{2iP̃·x} ρ(x) dx by the rectangle rule on the periodic grid.
pub fn fringe_fourier(axes: &[Axis], rho: &[f64], ptilde: &[f64]) -> Complex64 {
    let n = total_len(axes);
    assert_eq!(rho.len(), n);
    let vol = cell_volume(axes);
    let s: Complex64 = (0..n)
        .into_par_iter()
        .map(|i| {
            let x = point(axes, i);
            (I * 2.0 * dot(ptilde, &x)).exp() * rho[i]
        })
        .sum();
    s * vol
}

/// Spatial box for a fringe demo at scale ε: spacing resolving momenta up to
/// 2(|P| + 12ε/w) and half-width covering the bumps and their spreading.
pub fn fringe_box(spec: &WavePacketSpec, big_t: f64) -> Vec<Axis> {
    let eps = spec.epsilon;
    let w = spec.envelope.width();
    let pmax = norm(&spec.p) + 12.0 * eps / w;
    let dx = std::f64::consts::PI / (4.0 * pmax);
    let spread = w * (1.0 + (eps * big_t / (w * w)).powi(2)).sqrt();
    (0..spec.dim())
        .map(|j| {
            let half = (spec.q[j].abs() + big_t * spec.p[j].abs() + 12.0 * spread) / eps;
            let n = (2.0 * half / dx).ceil() as usize;
            let n = n.next_power_of_two();
            Axis::new(-dx * (n / 2) as f64, dx, n)
        })
        .collect()
}

/// One row of a fringe sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FringeSample {
    pub epsilon: f64,
    pub ptilde_over_p: f64,
    pub value: Complex64,
}

/// ε → 0 extrapolation of the fringe coefficient at one P̃/P ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FringeLimit {
    pub ptilde_over_p: f64,
    pub extrapolated: Complex64,
    pub error_estimate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FringeSweep {
    pub overlap_time: f64,
    pub samples: Vec<FringeSample>,
    pub limits: Vec<FringeLimit>,
}

/// Free evolution of ψ₀^ε to the overlap time t̄ = ε^{−1}|Q|/|P| and the
/// fringe coefficient at P̃ = ratio·P, for each ε; extrapolated to ε = 0.
pub fn simulate_fringes(
    base: &WavePacketSpec,
    model: &DispersionModel,
    epsilons: &[f64],
    ratios: &[f64],
) -> Result<FringeSweep> {
    let big_t = norm(&base.q) / norm(&base.p);
    let mut samples = Vec::new();
    for &eps in epsilons {
        let spec = base.with_epsilon(eps)?;
        let axes = fringe_box(&spec, big_t);
        let psi = initial_field(&spec, axes.clone());
        let psi_t = psi.free_evolve(model, big_t / eps);
        let rho = psi_t.density();
        for &r in ratios {
            let pt: Vec<f64> = spec.p.iter().map(|x| r * x).collect();
            samples.push(FringeSample {
                epsilon: eps,
                ptilde_over_p: r,
                value: fringe_fourier(&axes, &rho, &pt),
            });
        }
    }
    let mut limits = Vec::new();
    for &r in ratios {
        let (hs, vals): (Vec<f64>, Vec<Complex64>) = samples
            .iter()
            .filter(|s| s.ptilde_over_p == r)
            .map(|s| (s.epsilon, s.value))
            .unzip();
        let stages = 2.min(hs.len().saturating_sub(1));
        let ex = crate::fit::richardson(&hs, &vals, stages);
        limits.push(FringeLimit {
            ptilde_over_p: r,
            extrapolated: ex.value,
            error_estimate: ex.residual.max(ex.spread),
        });
    }
    Ok(FringeSweep {
        overlap_time: big_t,
        samples,
        limits,
    })
}

/// Overlap-time phase difference Q − T∇e(P) entering the limit formula.
pub fn overlap_mismatch(spec: &WavePacketSpec, model: &DispersionModel, big_t: f64) -> Vec<f64> {
    let g = model.grad_e(&spec.p);
    sub(&spec.q, &g.iter().map(|x| big_t * x).collect::<Vec<_>>())
}
