//! Two-scale observables J_ε(x,v) = A(εx,v)·b(x) and their pairings with
//! Wigner functions, ⟨J, W⟩ = ∫ conj J(x,v) W(x,v) dx dv.
//!
//! A(X,v) = e^{−|X|²/(2a²)} e^{−|v|²/(2s_v²)}, either factor optionally ≡ 1.
//! With b(x) = e^{2iP̃·x} (possibly times e^{−|x|²/(2s²)}) the x-Fourier
//! transform is
//!   Ĵ_ε(ξ,v) = α(v) w^d e^{−w²|ξ−2P̃|²/2},   w^{−2} = ε²/a² + 1/s²,
//! and a Dirac mass (2π)^{d/2} δ(ξ − 2P̃) α(v) when both windows are absent.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::collision::{phi_p, DEFAULT_ETA_SEQUENCE};
use crate::dispersion::DispersionModel;
use crate::error::{Error, Result};
use crate::grid::{cell_volume, total_len, Axis};
use crate::quadrature::{gauss_hermite, gauss_legendre_on};
use crate::vector::{dot, norm, sub};
use crate::wavepacket::{Component, WavePacketSpec};
use crate::wigner::{Domain, WignerGrid};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;
const I: Complex64 = Complex64::new(0.0, 1.0);

/// Short-scale factor b(x).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ShortScale {
    /// e^{2iP̃·x}
    Phase { ptilde: Vec<f64> },
    /// e^{2iP̃·x} e^{−|x|²/(2 width²)}; b(x)e^{−2iP·x} → 0, so no Dirac part.
    DecayingPhase { ptilde: Vec<f64>, width: f64 },
}

impl ShortScale {
    pub fn ptilde(&self) -> &[f64] {
        match self {
            ShortScale::Phase { ptilde } | ShortScale::DecayingPhase { ptilde, .. } => ptilde,
        }
    }

    fn decay_width(&self) -> Option<f64> {
        match self {
            ShortScale::Phase { .. } => None,
            ShortScale::DecayingPhase { width, .. } => Some(*width),
        }
    }

    pub fn value(&self, x: &[f64]) -> Complex64 {
        let phase = (I * 2.0 * dot(self.ptilde(), x)).exp();
        match self.decay_width() {
            None => phase,
            Some(s) => phase * (-dot(x, x) / (2.0 * s * s)).exp(),
        }
    }
}

/// Shape of Ĵ_ε in ξ.
#[derive(Debug, Clone, PartialEq)]
pub enum XiProfile {
    /// (2π)^{d/2} δ(ξ − center)
    Dirac { center: Vec<f64> },
    /// (2π)^{d/2} × normal density with mean `center`, per-axis std `std`
    Gaussian { center: Vec<f64>, std: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoScaleObservable {
    /// Spatial width a of the macroscopic profile; None means A ≡ 1 in X.
    pub window: Option<f64>,
    /// Velocity width s_v of the macroscopic profile; None means A ≡ 1 in v.
    pub v_width: Option<f64>,
    pub b: ShortScale,
    /// Declared coefficient of the Dirac component of b̂ at 2P.
    pub c_b: Complex64,
}

impl TwoScaleObservable {
    pub fn new(window: Option<f64>, v_width: Option<f64>, b: ShortScale, c_b: Complex64) -> Result<Self> {
        for w in [window, v_width, b.decay_width()].into_iter().flatten() {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::InvalidInput(format!("observable width {w} must be positive")));
            }
        }
        Ok(TwoScaleObservable {
            window,
            v_width,
            b,
            c_b,
        })
    }

    /// A ≡ 1, b = e^{2iP̃·x}; c_b = 1 exactly when P̃ = P.
    pub fn fringe(ptilde: &[f64], p: &[f64]) -> Self {
        TwoScaleObservable {
            window: None,
            v_width: None,
            c_b: dirac_coefficient(ptilde, p),
            b: ShortScale::Phase {
                ptilde: ptilde.to_vec(),
            },
        }
    }

    /// Gaussian A of widths (a, s_v), b = e^{2iP̃·x}.
    pub fn windowed_fringe(ptilde: &[f64], p: &[f64], window: f64, v_width: Option<f64>) -> Result<Self> {
        TwoScaleObservable::new(
            Some(window),
            v_width,
            ShortScale::Phase {
                ptilde: ptilde.to_vec(),
            },
            dirac_coefficient(ptilde, p),
        )
    }

    /// b = e^{2iP̃·x} e^{−|x|²/(2 width²)}: does not resolve the fringes.
    pub fn blind(ptilde: &[f64], width: f64) -> Result<Self> {
        TwoScaleObservable::new(
            None,
            None,
            ShortScale::DecayingPhase {
                ptilde: ptilde.to_vec(),
                width,
            },
            Complex64::new(0.0, 0.0),
        )
    }

    /// J ≡ 1 (mass observable).
    pub fn constant(dim: usize) -> Self {
        TwoScaleObservable {
            window: None,
            v_width: None,
            b: ShortScale::Phase {
                ptilde: vec![0.0; dim],
            },
            c_b: Complex64::new(0.0, 0.0),
        }
    }

    pub fn dim(&self) -> usize {
        self.b.ptilde().len()
    }

    pub fn is_fringe_blind(&self) -> bool {
        self.c_b == Complex64::new(0.0, 0.0)
    }

    /// v-profile α(v) of A.
    pub fn alpha(&self, v: &[f64]) -> f64 {
        match self.v_width {
            None => 1.0,
            Some(s) => (-dot(v, v) / (2.0 * s * s)).exp(),
        }
    }

    /// J_ε(x, v) = A(εx, v) b(x).
    pub fn value(&self, eps: f64, x: &[f64], v: &[f64]) -> Complex64 {
        let a = match self.window {
            None => 1.0,
            Some(a) => (-eps * eps * dot(x, x) / (2.0 * a * a)).exp(),
        };
        self.b.value(x) * (a * self.alpha(v))
    }

    /// Precision w² of the ξ-Gaussian of Ĵ_ε (None for the Dirac case).
    fn xi_precision(&self, eps: f64) -> Option<f64> {
        let mut inv = 0.0;
        if let Some(a) = self.window {
            inv += eps * eps / (a * a);
        }
        if let Some(s) = self.b.decay_width() {
            inv += 1.0 / (s * s);
        }
        (inv > 0.0).then(|| 1.0 / inv)
    }

    pub fn xi_profile(&self, eps: f64) -> XiProfile {
        let center: Vec<f64> = self.b.ptilde().iter().map(|p| 2.0 * p).collect();
        match self.xi_precision(eps) {
            None => XiProfile::Dirac { center },
            Some(w2) => XiProfile::Gaussian {
                center,
                std: 1.0 / w2.sqrt(),
            },
        }
    }

    /// Ĵ_ε(ξ, v) for the non-Dirac case.
    pub fn hat(&self, eps: f64, xi: &[f64], v: &[f64]) -> Option<Complex64> {
        let w2 = self.xi_precision(eps)?;
        let d = xi.len() as i32;
        let r2: f64 = xi
            .iter()
            .zip(self.b.ptilde())
            .map(|(x, p)| (x - 2.0 * p).powi(2))
            .sum();
        Some(Complex64::new(w2.sqrt().powi(d) * (-w2 * r2 / 2.0).exp() * self.alpha(v), 0.0))
    }

    /// sup_ε ∫ sup_v |Ĵ_ε(ξ,v)| dξ = (2π)^{d/2} sup|α| for every member of the family.
    pub fn j_norm(&self) -> f64 {
        TWO_PI.powf(self.dim() as f64 / 2.0)
    }

    /// Rectangle-rule ∫ sup_v |Ĵ_ε| dξ on a grid (refinement check of `j_norm`).
    pub fn j_norm_on(&self, eps: f64, xi_axes: &[Axis], v_axes: &[Axis]) -> Result<f64> {
        if self.xi_precision(eps).is_none() {
            return Ok(self.j_norm());
        }
        let nv = total_len(v_axes);
        let sum: f64 = (0..total_len(xi_axes))
            .map(|i| {
                let xi = crate::grid::point(xi_axes, i);
                (0..nv)
                    .map(|j| self.hat(eps, &xi, &crate::grid::point(v_axes, j)).unwrap().norm())
                    .fold(0.0, f64::max)
            })
            .sum();
        Ok(sum * cell_volume(xi_axes))
    }

    /// Numerical estimate of lim b(x)e^{−2iP·x}: the average of b(x)e^{−2iP·x}
    /// over the cube [−L, L]^d.
    pub fn measured_coefficient(&self, p: &[f64], half_length: f64) -> Complex64 {
        let mut total = Complex64::new(1.0, 0.0);
        for (j, (pt, pj)) in self.b.ptilde().iter().zip(p).enumerate() {
            let k = 2.0 * (pt - pj);
            let panels = ((half_length * (k.abs() + 1.0)) as usize).clamp(64, 200_000);
            let h = 2.0 * half_length / panels as f64;
            let mut acc = Complex64::new(0.0, 0.0);
            for i in 0..panels {
                let a = -half_length + h * i as f64;
                let (x, w) = gauss_legendre_on(8, a, a + h);
                for (xi, wi) in x.iter().zip(&w) {
                    let mut pt = vec![0.0; p.len()];
                    pt[j] = *xi;
                    let decay = match self.b.decay_width() {
                        None => 1.0,
                        Some(s) => (-xi * xi / (2.0 * s * s)).exp(),
                    };
                    acc += Complex64::from_polar(decay * wi, k * xi);
                }
            }
            total *= acc / (2.0 * half_length);
        }
        total
    }

    /// Cross-check the declared c_b against `measured_coefficient` on a large cube.
    pub fn check_coefficient(&self, p: &[f64]) -> Result<()> {
        let measured = self.measured_coefficient(p, 2000.0);
        if (measured - self.c_b).norm() > 0.05 {
            return Err(Error::InvalidInput(format!(
                "declared c_b = {} but b(x)e^(-2iPx) averages to {measured}",
                self.c_b
            )));
        }
        Ok(())
    }
}

fn dirac_coefficient(ptilde: &[f64], p: &[f64]) -> Complex64 {
    let same = ptilde.len() == p.len() && norm(&sub(ptilde, p)) <= 1e-12 * (1.0 + norm(p));
    Complex64::new(if same { 1.0 } else { 0.0 }, 0.0)
}

/// ⟨J, W⟩ by quadrature on the grid's nodes.
pub fn pair(j: &TwoScaleObservable, w: &WignerGrid) -> Result<Complex64> {
    if j.dim() != w.dim() {
        return Err(Error::GridMismatch(format!(
            "observable dimension {} vs grid dimension {}",
            j.dim(),
            w.dim()
        )));
    }
    let eps = w.epsilon;
    let nv = w.n_v();
    let dv = cell_volume(&w.v_axes);
    match w.domain {
        Domain::Position => {
            let dx = cell_volume(&w.space_axes);
            let rows: Vec<Complex64> = (0..w.n_space())
                .into_par_iter()
                .map(|i| {
                    let x = w.space_point(i);
                    (0..nv)
                        .map(|k| j.value(eps, &x, &w.v_point(k)).conj() * w.at(i, k))
                        .sum::<Complex64>()
                })
                .collect();
            Ok(rows.iter().sum::<Complex64>() * dx * dv)
        }
        Domain::Fourier => match j.xi_profile(eps) {
            XiProfile::Dirac { center } => {
                let idx: Option<Vec<usize>> = center
                    .iter()
                    .zip(&w.space_axes)
                    .map(|(c, a)| a.locate(*c))
                    .collect();
                let idx = idx.ok_or_else(|| {
                    Error::GridMismatch(format!("xi = {center:?} is not a node of the grid"))
                })?;
                let shape: Vec<usize> = w.space_axes.iter().map(|a| a.len).collect();
                let i = crate::grid::ravel(&idx, &shape);
                let s: Complex64 = (0..nv).map(|k| w.at(i, k) * j.alpha(&w.v_point(k))).sum();
                Ok(s * dv * TWO_PI.powf(j.dim() as f64 / 2.0))
            }
            XiProfile::Gaussian { .. } => {
                if w.space_axes.iter().any(|a| a.len < 2) {
                    return Err(Error::GridMismatch(
                        "a smooth observable needs a full xi grid, not a slice".into(),
                    ));
                }
                let dxi = cell_volume(&w.space_axes);
                let rows: Vec<Complex64> = (0..w.n_space())
                    .into_par_iter()
                    .map(|i| {
                        let xi = w.space_point(i);
                        (0..nv)
                            .map(|k| j.hat(eps, &xi, &w.v_point(k)).unwrap().conj() * w.at(i, k))
                            .sum::<Complex64>()
                    })
                    .collect();
                Ok(rows.iter().sum::<Complex64>() * dxi * dv)
            }
        },
    }
}

/// Σ_v sup_ξ |W(ξ,v)| Δv, the v-integrated sup bound used with `j_norm`.
pub fn v_sup_bound(w: &WignerGrid) -> f64 {
    let nv = w.n_v();
    let mut sup = vec![0.0f64; nv];
    for (i, val) in w.values.iter().enumerate() {
        let k = i % nv;
        sup[k] = sup[k].max(val.norm());
    }
    sup.iter().sum::<f64>() * cell_volume(&w.v_axes)
}

/// Gauss-Hermite nodes per axis for the closed-form pairings.
fn nodes_per_axis(dims: usize) -> usize {
    match dims {
        1 => 64,
        2 => 48,
        3 => 32,
        4 => 20,
        5 => 14,
        _ => 12,
    }
}

/// ∫_{R^n} h(x) dx with x = t/√c per axis, where c_k is the precision of the
/// Gaussian that dominates h along axis k.
pub(crate) fn gauss_hermite_tensor<F>(precisions: &[f64], h: F) -> Complex64
where
    F: Fn(&[f64]) -> Complex64 + Sync,
{
    let n_axes = precisions.len();
    let n = nodes_per_axis(n_axes);
    let (t, w) = gauss_hermite(n);
    let total = n.pow(n_axes as u32);
    let scales: Vec<f64> = precisions.iter().map(|c| 1.0 / c.sqrt()).collect();
    let parts: Vec<Complex64> = (0..total)
        .into_par_iter()
        .with_min_len(256)
        .map(|flat| {
            let mut x = vec![0.0; n_axes];
            let mut weight = 1.0;
            let mut rem = flat;
            for k in (0..n_axes).rev() {
                let i = rem % n;
                rem /= n;
                x[k] = t[i] * scales[k];
                weight *= w[i] * (t[i] * t[i]).exp() * scales[k];
            }
            h(&x) * weight
        })
        .collect();
    // fixed-order reduction for bitwise reproducibility
    parts.iter().sum()
}

/// ⟨J_ε, W_{+−,free}(T/ε)⟩ by quadrature of the closed form
/// Ŵ_{+−}(ξ,v) e^{−i(T/ε)[e(v+ξ/2) − e(v−ξ/2)]}, in scaled variables
/// ξ = 2P + εη, v = εu.
pub fn pair_offdiagonal_free(
    j: &TwoScaleObservable,
    spec: &WavePacketSpec,
    model: &DispersionModel,
    big_t: f64,
) -> Result<Complex64> {
    let d = spec.dim();
    if j.dim() != d || model.dim != d {
        return Err(Error::GridMismatch("observable, wave packet and model dimensions differ".into()));
    }
    let eps = spec.epsilon;
    let t = big_t / eps;
    let wf2 = spec.envelope.width().powi(2);
    let mut cu = wf2;
    if let Some(s) = j.v_width {
        cu += eps * eps / (2.0 * s * s);
    }
    let phase = |xi: &[f64], v: &[f64]| -> Complex64 {
        if t == 0.0 {
            return Complex64::new(1.0, 0.0);
        }
        let plus: Vec<f64> = v.iter().zip(xi).map(|(v, x)| v + 0.5 * x).collect();
        let minus: Vec<f64> = v.iter().zip(xi).map(|(v, x)| v - 0.5 * x).collect();
        (-I * t * (model.e(&plus) - model.e(&minus))).exp()
    };
    let value = match j.xi_profile(eps) {
        XiProfile::Dirac { center } => {
            let integral = gauss_hermite_tensor(&vec![cu; d], |u| {
                let v: Vec<f64> = u.iter().map(|x| eps * x).collect();
                spec.wigner_hat(Component::PlusMinus, &center, &v) * phase(&center, &v) * j.alpha(&v)
            });
            integral * eps.powi(d as i32) * TWO_PI.powf(d as f64 / 2.0)
        }
        XiProfile::Gaussian { .. } => {
            let w2 = j.xi_precision(eps).unwrap();
            let ceta = wf2 / 4.0 + w2 * eps * eps / 2.0;
            let mut prec = vec![ceta; d];
            prec.extend(std::iter::repeat(cu).take(d));
            let integral = gauss_hermite_tensor(&prec, |z| {
                let xi: Vec<f64> = spec.p.iter().zip(&z[..d]).map(|(p, e)| 2.0 * p + eps * e).collect();
                let v: Vec<f64> = z[d..].iter().map(|x| eps * x).collect();
                j.hat(eps, &xi, &v).unwrap()
                    * spec.wigner_hat(Component::PlusMinus, &xi, &v)
                    * phase(&xi, &v)
            });
            integral * eps.powi(2 * d as i32)
        }
    };
    Ok(value)
}

/// Limiting expectation value of J along the ε sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorollaryValue {
    pub value: Complex64,
    pub sigma_p: f64,
    /// set when J has no Dirac component at 2P (the limit vanishes)
    pub fringe_blind: bool,
}

/// e^{−Tσ_P} conj(c_b) (2π)^{−d/2} ∫ conj Â(ξ,0) e^{2iv·(Q − T∇e(P))} f̂(v+ξ/2) conj f̂(v−ξ/2) dξ dv,
/// with σ_P = −2 Im Φ_P.
pub fn corollary_limit(
    j: &TwoScaleObservable,
    spec: &WavePacketSpec,
    model: &DispersionModel,
    big_t: f64,
) -> Result<CorollaryValue> {
    let sigma_p = if model.is_decoupled() || j.is_fringe_blind() {
        0.0
    } else {
        -2.0 * phi_p(model, &spec.p, &DEFAULT_ETA_SEQUENCE)?.value.im
    };
    corollary_limit_with_sigma(j, spec, model, big_t, sigma_p)
}

/// `corollary_limit` with a precomputed σ_P.
pub fn corollary_limit_with_sigma(
    j: &TwoScaleObservable,
    spec: &WavePacketSpec,
    model: &DispersionModel,
    big_t: f64,
    sigma_p: f64,
) -> Result<CorollaryValue> {
    let d = spec.dim();
    if j.dim() != d || model.dim != d {
        return Err(Error::GridMismatch("observable, wave packet and model dimensions differ".into()));
    }
    if j.is_fringe_blind() {
        return Ok(CorollaryValue {
            value: Complex64::new(0.0, 0.0),
            sigma_p,
            fringe_blind: true,
        });
    }
    let grad = model.grad_e(&spec.p);
    let shift: Vec<f64> = spec.q.iter().zip(&grad).map(|(q, g)| q - big_t * g).collect();
    let wf2 = spec.envelope.width().powi(2);
    let f = spec.envelope;
    let integral = match j.window {
        None => gauss_hermite_tensor(&vec![wf2; d], |v| {
            Complex64::from_polar(f.hat(v).norm_sqr(), 2.0 * dot(v, &shift))
        }),
        Some(a) => {
            let mut prec = vec![wf2 / 4.0 + a * a / 2.0; d];
            prec.extend(std::iter::repeat(wf2).take(d));
            let integral = gauss_hermite_tensor(&prec, |z| {
                let (xi, v) = z.split_at(d);
                let plus: Vec<f64> = v.iter().zip(xi).map(|(v, x)| v + 0.5 * x).collect();
                let minus: Vec<f64> = v.iter().zip(xi).map(|(v, x)| v - 0.5 * x).collect();
                let a_hat = a.powi(d as i32) * (-a * a * dot(xi, xi) / 2.0).exp();
                f.hat(&plus) * f.hat(&minus).conj() * Complex64::from_polar(a_hat, 2.0 * dot(v, &shift))
            });
            integral * TWO_PI.powf(-(d as f64) / 2.0)
        }
    };
    Ok(CorollaryValue {
        value: integral * j.c_b.conj() * (-big_t * sigma_p).exp(),
        sigma_p,
        fringe_blind: false,
    })
}
