//! Quadrature rules: Gauss-Legendre, Gauss-Hermite, and a globally adaptive
//! Gauss-Kronrod integrator for real or complex integrands.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::ops::{Add, Mul, Sub};

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Values that can be accumulated by a quadrature rule.
pub trait QuadValue:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> + Send + Sync
{
    fn zero() -> Self;
    fn magnitude(&self) -> f64;
}

impl QuadValue for f64 {
    fn zero() -> Self {
        0.0
    }
    fn magnitude(&self) -> f64 {
        self.abs()
    }
}

impl QuadValue for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn magnitude(&self) -> f64 {
        self.norm()
    }
}

/// Nodes and weights of an `n`-point Gauss-Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, z);
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let (p, pm1) = if n == 0 { (1.0, 0.0) } else { (p1, p0) };
    let d = n as f64 * (z * p - pm1) / (z * z - 1.0);
    (p, d)
}

/// Gauss-Legendre nodes mapped to [a, b].
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let h = 0.5 * (b - a);
    let c = 0.5 * (a + b);
    (
        x.iter().map(|t| c + h * t).collect(),
        w.iter().map(|wi| wi * h).collect(),
    )
}

/// Nodes and weights of an `n`-point Gauss-Hermite rule for the weight e^{-x^2}
/// (Golub-Welsch).
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0);
    let mut jac = DMatrix::<f64>::zeros(n, n);
    for i in 1..n {
        let b = (i as f64 / 2.0).sqrt();
        jac[(i, i - 1)] = b;
        jac[(i - 1, i)] = b;
    }
    let eig = SymmetricEigen::new(jac);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], std::f64::consts::PI.sqrt() * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    // symmetrize to remove eigen-solver round-off
    let mut x: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let mut w: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let xm = 0.5 * (x[j] - x[i]);
        let wm = 0.5 * (w[i] + w[j]);
        x[i] = -xm;
        x[j] = xm;
        w[i] = wm;
        w[j] = wm;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

const XGK: [f64; 11] = [
    0.995_657_163_025_808_1,
    0.973_906_528_517_171_7,
    0.930_157_491_355_708_2,
    0.865_063_366_688_984_5,
    0.780_817_726_586_416_9,
    0.679_409_568_299_024_4,
    0.562_757_134_668_604_7,
    0.433_395_394_129_247_2,
    0.294_392_862_701_460_2,
    0.148_874_338_981_631_2,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874,
    0.032_558_162_307_964_73,
    0.054_755_896_574_352,
    0.075_039_674_810_919_95,
    0.093_125_454_583_697_6,
    0.109_387_158_802_297_64,
    0.123_491_976_262_065_85,
    0.134_709_217_311_473_33,
    0.142_775_938_577_060_08,
    0.147_739_104_901_338_5,
    0.149_445_554_002_916_9,
];

const WG: [f64; 5] = [
    0.066_671_344_308_688_14,
    0.149_451_349_150_580_6,
    0.219_086_362_515_982_04,
    0.269_266_719_309_996_36,
    0.295_524_224_714_752_87,
];

/// One 21-point Kronrod panel: returns (kronrod estimate, |kronrod - gauss|).
fn gk21<T: QuadValue>(f: &impl Fn(f64) -> T, a: f64, b: f64) -> (T, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[10];
    let mut g = T::zero();
    for j in 0..10 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        k = k + s * WGK[j];
        if j % 2 == 1 {
            g = g + s * WG[j / 2];
        }
    }
    let k = k * h;
    let g = g * h;
    (k, (k - g).magnitude())
}

struct Panel<T> {
    a: f64,
    b: f64,
    value: T,
    error: f64,
}

impl<T> PartialEq for Panel<T> {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error && self.a == other.a
    }
}
impl<T> Eq for Panel<T> {}
impl<T> PartialOrd for Panel<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<T> Ord for Panel<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error
            .total_cmp(&other.error)
            .then_with(|| other.a.total_cmp(&self.a))
    }
}

/// Outcome of an adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct QuadResult<T> {
    pub value: T,
    pub error: f64,
    pub evaluations: usize,
    pub converged: bool,
}

impl<T: QuadValue> QuadResult<T> {
    /// Turn a non-converged result into an error.
    pub fn require(self, what: &str) -> Result<T> {
        if self.converged {
            Ok(self.value)
        } else {
            Err(Error::NonConvergence {
                what: what.to_string(),
                estimate: self.value.magnitude(),
                error: self.error,
            })
        }
    }
}

/// Globally adaptive Gauss-Kronrod (G10/K21) integrator.
#[derive(Debug, Clone, Copy)]
pub struct Adaptive {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_panels: usize,
}

impl Default for Adaptive {
    fn default() -> Self {
        Adaptive {
            abs_tol: 1e-12,
            rel_tol: 1e-10,
            max_panels: 2000,
        }
    }
}

impl Adaptive {
    pub fn new(abs_tol: f64, rel_tol: f64) -> Self {
        Adaptive {
            abs_tol,
            rel_tol,
            ..Default::default()
        }
    }

    pub fn with_max_panels(mut self, n: usize) -> Self {
        self.max_panels = n;
        self
    }

    /// Integrate over [points[0], points[last]], with the interior points as
    /// initial breakpoints. Points must be sorted ascending.
    pub fn integrate<T, F>(&self, f: F, points: &[f64]) -> QuadResult<T>
    where
        T: QuadValue,
        F: Fn(f64) -> T,
    {
        assert!(points.len() >= 2);
        let mut heap = BinaryHeap::new();
        let mut total = T::zero();
        let mut err = 0.0;
        let mut evals = 0;
        for w in points.windows(2) {
            if w[1] <= w[0] {
                continue;
            }
            let (v, e) = gk21(&f, w[0], w[1]);
            evals += 21;
            total = total + v;
            err += e;
            heap.push(Panel {
                a: w[0],
                b: w[1],
                value: v,
                error: e,
            });
        }
        loop {
            let tol = self.abs_tol.max(self.rel_tol * total.magnitude());
            if err <= tol {
                return QuadResult {
                    value: total,
                    error: err,
                    evaluations: evals,
                    converged: true,
                };
            }
            if heap.len() >= self.max_panels {
                break;
            }
            let Some(p) = heap.pop() else { break };
            let m = 0.5 * (p.a + p.b);
            if m <= p.a || m >= p.b {
                // cannot split further; keep as is and stop
                heap.push(p);
                break;
            }
            let (v1, e1) = gk21(&f, p.a, m);
            let (v2, e2) = gk21(&f, m, p.b);
            evals += 42;
            total = total - p.value + v1 + v2;
            err += e1 + e2 - p.error;
            heap.push(Panel {
                a: p.a,
                b: m,
                value: v1,
                error: e1,
            });
            heap.push(Panel {
                a: m,
                b: p.b,
                value: v2,
                error: e2,
            });
        }
        // re-sum to limit drift from incremental updates
        let mut total = T::zero();
        let mut err = 0.0;
        let mut panels: Vec<Panel<T>> = heap.into_vec();
        panels.sort_by(|x, y| x.a.total_cmp(&y.a));
        for p in &panels {
            total = total + p.value;
            err += p.error;
        }
        let tol = self.abs_tol.max(self.rel_tol * total.magnitude());
        QuadResult {
            value: total,
            error: err,
            evaluations: evals,
            converged: err <= tol,
        }
    }

    /// Integrate over [a, ∞) via x = a + s/(1-s). `breaks` are interior points in x.
    pub fn integrate_to_infinity<T, F>(&self, f: F, a: f64, breaks: &[f64]) -> QuadResult<T>
    where
        T: QuadValue,
        F: Fn(f64) -> T,
    {
        let g = |s: f64| {
            let one_minus = 1.0 - s;
            let x = a + s / one_minus;
            f(x) * (1.0 / (one_minus * one_minus))
        };
        let mut pts = vec![0.0];
        let mut inner: Vec<f64> = breaks
            .iter()
            .filter(|&&x| x > a && x.is_finite())
            .map(|&x| (x - a) / (1.0 + (x - a)))
            .collect();
        inner.sort_by(f64::total_cmp);
        inner.dedup();
        pts.extend(inner);
        pts.push(1.0);
        self.integrate(g, &pts)
    }

    /// Integrate over the whole real line.
    pub fn integrate_real_line<T, F>(&self, f: F, breaks: &[f64]) -> QuadResult<T>
    where
        T: QuadValue,
        F: Fn(f64) -> T,
    {
        let pos: Vec<f64> = breaks.iter().copied().filter(|&x| x > 0.0).collect();
        let neg: Vec<f64> = breaks.iter().copied().filter(|&x| x < 0.0).map(|x| -x).collect();
        let half = Adaptive {
            abs_tol: 0.5 * self.abs_tol,
            ..*self
        };
        let r1 = half.integrate_to_infinity(&f, 0.0, &pos);
        let r2 = half.integrate_to_infinity(|x| f(-x), 0.0, &neg);
        QuadResult {
            value: r1.value + r2.value,
            error: r1.error + r2.error,
            evaluations: r1.evaluations + r2.evaluations,
            converged: r1.converged && r2.converged,
        }
    }
}

/// Surface measure of the unit sphere S^{n} in R^{n+1}.
pub fn sphere_area(n: usize) -> f64 {
    let k = (n + 1) as f64 / 2.0;
    2.0 * std::f64::consts::PI.powf(k) / gamma(k)
}

/// Gamma function for positive half-integers and integers (exact recursion).
pub fn gamma(x: f64) -> f64 {
    assert!(x > 0.0 && (2.0 * x).fract() == 0.0, "gamma only for half-integers");
    let mut acc = 1.0;
    let mut y = x;
    while y > 1.0 {
        y -= 1.0;
        acc *= y;
    }
    if (y - 0.5).abs() < 1e-12 {
        acc * std::f64::consts::PI.sqrt()
    } else {
        acc
    }
}

/// Product rule over directions in R^d for integrands depending only on the
/// angle to a fixed axis: nodes are cos(theta) values, weights include the
/// measure of the orthogonal sphere (sum of weights = |S^{d-1}|).
#[derive(Debug, Clone)]
pub struct AxialRule {
    pub dim: usize,
    pub cosines: Vec<f64>,
    pub weights: Vec<f64>,
}

impl AxialRule {
    /// `n` Gauss-Legendre nodes in theta on [0, pi]; for d = 1 the two directions ±1.
    pub fn new(dim: usize, n: usize) -> Self {
        assert!(dim >= 1);
        if dim == 1 {
            return AxialRule {
                dim,
                cosines: vec![1.0, -1.0],
                weights: vec![1.0, 1.0],
            };
        }
        let (th, w) = gauss_legendre_on(n, 0.0, std::f64::consts::PI);
        let orth = sphere_area(dim - 2);
        let weights = th
            .iter()
            .zip(&w)
            .map(|(t, wi)| orth * wi * t.sin().powi(dim as i32 - 2))
            .collect();
        AxialRule {
            dim,
            cosines: th.iter().map(|t| t.cos()).collect(),
            weights,
        }
    }

    pub fn len(&self) -> usize {
        self.cosines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cosines.is_empty()
    }
}

/// Full direction rule on S^{d-1} for an arbitrary axis: polar nodes from
/// [`AxialRule`] times `n_azimuth` uniform azimuths (d = 3), the two
/// half-planes (d = 2), or ±axis (d = 1).
pub fn direction_rule(axis: &[f64], n_polar: usize, n_azimuth: usize) -> Vec<(Vec<f64>, f64)> {
    direction_rule_indexed(axis, n_polar, n_azimuth)
        .into_iter()
        .map(|(_, n, w)| (n, w))
        .collect()
}

/// [`direction_rule`] with the index of each direction's polar node, so
/// callers can share work that depends on the polar angle only.
pub fn direction_rule_indexed(axis: &[f64], n_polar: usize, n_azimuth: usize) -> Vec<(usize, Vec<f64>, f64)> {
    let d = axis.len();
    let frame = crate::vector::frame(axis);
    let rule = AxialRule::new(d, n_polar);
    let mut out = Vec::new();
    match d {
        1 => {
            for (ip, (c, w)) in rule.cosines.iter().zip(&rule.weights).enumerate() {
                out.push((ip, vec![*c * frame[0][0]], *w));
            }
        }
        2 => {
            for (ip, (c, w)) in rule.cosines.iter().zip(&rule.weights).enumerate() {
                let s = (1.0 - c * c).max(0.0).sqrt();
                for sign in [1.0, -1.0] {
                    let n: Vec<f64> = (0..2)
                        .map(|i| c * frame[0][i] + sign * s * frame[1][i])
                        .collect();
                    out.push((ip, n, 0.5 * w));
                }
            }
        }
        _ => {
            // for d > 3 only the first two orthogonal directions carry the
            // azimuth; exact for integrands depending on the polar angle only
            let two_pi = 2.0 * std::f64::consts::PI;
            for (ip, (c, w)) in rule.cosines.iter().zip(&rule.weights).enumerate() {
                let s = (1.0 - c * c).max(0.0).sqrt();
                for j in 0..n_azimuth {
                    let phi = two_pi * (j as f64 + 0.5) / n_azimuth as f64;
                    let (sp, cp) = phi.sin_cos();
                    let n: Vec<f64> = (0..d)
                        .map(|i| c * frame[0][i] + s * (cp * frame[1][i] + sp * frame[2][i]))
                        .collect();
                    out.push((ip, n, w / n_azimuth as f64));
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(7);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(12)).sum();
        assert!((s - 2.0 / 13.0).abs() < 1e-14);
        let total: f64 = w.iter().sum();
        assert!((total - 2.0).abs() < 1e-14);
    }

    #[test]
    fn hermite_moments() {
        let (x, w) = gauss_hermite(20);
        let m0: f64 = w.iter().sum();
        let m4: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(4)).sum();
        let sp = std::f64::consts::PI.sqrt();
        assert!((m0 - sp).abs() < 1e-13);
        assert!((m4 - 0.75 * sp).abs() < 1e-12);
    }

    #[test]
    fn adaptive_handles_near_pole() {
        let eta = 1e-3;
        let r = Adaptive::new(1e-12, 1e-10)
            .with_max_panels(5000)
            .integrate(|x: f64| Complex64::new(1.0, 0.0) / Complex64::new(x, eta), &[-1.0, 0.0, 1.0]);
        assert!(r.converged);
        let exact = Complex64::new(0.0, -2.0 * (1.0f64 / eta).atan());
        assert!((r.value - exact).norm() < 1e-9);
    }

    #[test]
    fn semi_infinite_gaussian() {
        let r = Adaptive::default().integrate_to_infinity(|x: f64| (-x * x).exp(), 0.0, &[]);
        assert!((r.value - 0.5 * std::f64::consts::PI.sqrt()).abs() < 1e-11);
    }

    #[test]
    fn axial_weights_sum_to_sphere_area() {
        for d in 1..=4 {
            let r = AxialRule::new(d, 16);
            let s: f64 = r.weights.iter().sum();
            assert!((s - sphere_area(d - 1)).abs() < 1e-12, "d={d}");
        }
        assert!((sphere_area(2) - 4.0 * std::f64::consts::PI).abs() < 1e-14);
    }

    #[test]
    fn direction_rule_is_normalized() {
        let dirs = direction_rule(&[0.3, -1.0, 0.5], 12, 24);
        let s: f64 = dirs.iter().map(|d| d.1).sum();
        assert!((s - 4.0 * std::f64::consts::PI).abs() < 1e-12);
        for (n, _) in &dirs {
            assert!((crate::vector::norm(n) - 1.0).abs() < 1e-13);
        }
    }
}
