//! Linear Boltzmann equation for the diagonal components and the damped
//! free flow of the off-diagonal ones.
//!
//! ∂_T F + ∇e(V)·∇_X F = ∫ σ(V,U) F(U) dU − (∫ σ(U,V) dU) F(V)
//!
//! The kernel σ(U,V) is the co-area shell measure of the collision module:
//! mass leaving V lands on the energy shells e(U) = e(V) − σω(V − U).

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::collision::{shell_nodes, sigma_shell};
use crate::dispersion::DispersionModel;
use crate::error::{Error, Result};
use crate::grid::{cell_volume, point, ravel, total_len, unravel, Axis};
use crate::vector::norm;
use crate::wavepacket::{free_evolve_offdiagonal, Component, WavePacketSpec};
use crate::wigner::{write_binary, Domain, GridSidecar, WignerGrid};

/// Values below this are clipped to zero and counted.
pub const NEGATIVE_FLOOR: f64 = -1e-10;

/// Density on a tensor grid X × V; `values` is X-major:
/// index = i_x · |V grid| + i_v. Axes of length one make the density
/// homogeneous in that direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSpaceDensity {
    pub x_axes: Vec<Axis>,
    pub v_axes: Vec<Axis>,
    pub values: Vec<f64>,
    pub time: f64,
}

impl PhaseSpaceDensity {
    pub fn new(x_axes: Vec<Axis>, v_axes: Vec<Axis>, values: Vec<f64>) -> Result<Self> {
        if x_axes.len() != v_axes.len() || v_axes.is_empty() {
            return Err(Error::InvalidInput("X and V grids need the same positive dimension".into()));
        }
        if values.len() != total_len(&x_axes) * total_len(&v_axes) {
            return Err(Error::InvalidInput("value count does not match the grid".into()));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidInput(format!("density must be finite and nonnegative, found {v}")));
        }
        Ok(PhaseSpaceDensity {
            x_axes,
            v_axes,
            values,
            time: 0.0,
        })
    }

    /// Sample f(x, v) on the grid.
    pub fn sample(x_axes: Vec<Axis>, v_axes: Vec<Axis>, f: impl Fn(&[f64], &[f64]) -> f64) -> Result<Self> {
        let nx = total_len(&x_axes);
        let nv = total_len(&v_axes);
        let mut values = Vec::with_capacity(nx * nv);
        for ix in 0..nx {
            let x = point(&x_axes, ix);
            for iv in 0..nv {
                values.push(f(&x, &point(&v_axes, iv)));
            }
        }
        Self::new(x_axes, v_axes, values)
    }

    /// Spatially homogeneous density f(v).
    pub fn homogeneous(v_axes: Vec<Axis>, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let x_axes = vec![Axis::point(0.0); v_axes.len()];
        Self::sample(x_axes, v_axes, |_, v| f(v))
    }

    pub fn dim(&self) -> usize {
        self.v_axes.len()
    }

    pub fn n_x(&self) -> usize {
        total_len(&self.x_axes)
    }

    pub fn n_v(&self) -> usize {
        total_len(&self.v_axes)
    }

    pub fn is_homogeneous(&self) -> bool {
        self.x_axes.iter().all(|a| a.len == 1)
    }

    pub fn at(&self, i_x: usize, i_v: usize) -> f64 {
        self.values[i_x * self.n_v() + i_v]
    }

    fn cell(&self) -> f64 {
        cell_volume(&self.x_axes) * cell_volume(&self.v_axes)
    }

    /// ∫ F dX dV.
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.cell()
    }

    /// ∫ F dX as a function of V.
    pub fn v_marginal(&self) -> Vec<f64> {
        let nv = self.n_v();
        let dx = cell_volume(&self.x_axes);
        let mut out = vec![0.0; nv];
        for chunk in self.values.chunks(nv) {
            for (o, v) in out.iter_mut().zip(chunk) {
                *o += v * dx;
            }
        }
        out
    }

    pub fn diagnostics(&self, model: &DispersionModel) -> Diagnostics {
        let marg = self.v_marginal();
        let dv = cell_volume(&self.v_axes);
        let d = self.dim();
        let mut mass = 0.0;
        let mut energy = 0.0;
        let mut speed = 0.0;
        let mut mean = vec![0.0; d];
        for (iv, f) in marg.iter().enumerate() {
            let v = point(&self.v_axes, iv);
            mass += f;
            energy += f * model.e(&v);
            speed += f * norm(&v);
            for (m, c) in mean.iter_mut().zip(&v) {
                *m += f * c;
            }
        }
        let mean_velocity: Vec<f64> = mean.iter().map(|m| m / mass).collect();
        Diagnostics {
            time: self.time,
            mass: mass * dv,
            kinetic_energy: energy * dv,
            anisotropy: if speed > 0.0 { norm(&mean) / speed } else { 0.0 },
            mean_velocity,
        }
    }

    /// Real-valued snapshot: `<stem>.bin` and `<stem>.json`.
    pub fn write(&self, stem: &Path) -> Result<()> {
        let values: Vec<Complex64> = self.values.iter().map(|v| Complex64::new(*v, 0.0)).collect();
        write_binary(stem, &values, true)?;
        let side = GridSidecar {
            format: "f64-le real values, X-major then V, row-major axes".into(),
            domain: Domain::Position,
            space_axes: self.x_axes.clone(),
            v_axes: self.v_axes.clone(),
            component: Component::Total,
            epsilon: 0.0,
            real_valued: true,
        };
        std::fs::write(stem.with_extension("json"), serde_json::to_string_pretty(&side)?)?;
        Ok(())
    }
}

/// Moments of the V-marginal at one time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub time: f64,
    pub mass: f64,
    pub kinetic_energy: f64,
    /// |⟨V⟩| / ⟨|V|⟩
    pub anisotropy: f64,
    pub mean_velocity: Vec<f64>,
}

/// CSV time series with columns T, mass, kinetic_energy, anisotropy.
pub fn write_series_csv(series: &[Diagnostics], mut out: impl Write) -> Result<()> {
    writeln!(out, "T,mass,kinetic_energy,anisotropy")?;
    for d in series {
        writeln!(
            out,
            "{:.16e},{:.16e},{:.16e},{:.16e}",
            d.time, d.mass, d.kinetic_energy, d.anisotropy
        )?;
    }
    Ok(())
}

/// ∫ σ(U, V) dU = σ_V.
pub fn loss_rate(model: &DispersionModel, v: &[f64]) -> Result<f64> {
    sigma_shell(model, v)
}

/// Direction rule for the gain kernel. With `sub_cells > 1` each V-cell is
/// represented by `sub_cells^d` midpoints: its loss rate is the cell average
/// of the shell weight sums and its gain column the average of their
/// deposits, which smooths the kink of the rate at emission thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShellRule {
    pub n_polar: usize,
    pub n_azimuth: usize,
    pub sub_cells: usize,
}

impl ShellRule {
    pub fn new(n_polar: usize, n_azimuth: usize) -> Self {
        ShellRule {
            n_polar,
            n_azimuth,
            sub_cells: 1,
        }
    }
}

impl Default for ShellRule {
    fn default() -> Self {
        ShellRule::new(24, 48)
    }
}

/// Discrete collision operator on a V grid: dF/dT = G F − λ F, with the
/// columns of G summing to λ so that mass is conserved exactly.
#[derive(Debug, Clone)]
pub struct CollisionOperator {
    pub v_axes: Vec<Axis>,
    /// λ_j = loss_rate(V_j), or its cell average with sub-cells.
    pub loss: Vec<f64>,
    col_ptr: Vec<usize>,
    rows: Vec<u32>,
    vals: Vec<f64>,
    /// Largest |Σ_shell weights / λ_j − 1| before rescaling.
    pub max_rescale: f64,
}

impl CollisionOperator {
    pub fn new(model: &DispersionModel, v_axes: &[Axis], rule: ShellRule) -> Result<Self> {
        if v_axes.len() != model.dim {
            return Err(Error::GridMismatch("V grid and model dimensions differ".into()));
        }
        let nv = total_len(v_axes);
        let points: Vec<Vec<f64>> = (0..nv).map(|j| point(v_axes, j)).collect();

        // the rate depends on |V| only; share it across cells on one sphere
        let mut radii: Vec<u64> = points.iter().map(|v| norm(v).to_bits()).collect();
        radii.sort_unstable();
        radii.dedup();
        let rates: Vec<Result<f64>> = radii
            .par_iter()
            .map(|bits| {
                let mut v = vec![0.0; model.dim];
                v[0] = f64::from_bits(*bits);
                loss_rate(model, &v)
            })
            .collect();
        let mut by_radius = HashMap::new();
        for (bits, r) in radii.into_iter().zip(rates) {
            by_radius.insert(bits, r?);
        }
        let node_loss: Vec<f64> = points.iter().map(|v| by_radius[&norm(v).to_bits()]).collect();
        let table = if rule.sub_cells > 1 {
            Some(RateTable::new(model, v_axes)?)
        } else {
            None
        };

        let columns: Vec<(Vec<(usize, f64)>, f64, f64)> = points
            .par_iter()
            .zip(&node_loss)
            .map_init(
                || Scratch::new(nv),
                |scratch, (v, lam)| gain_column(model, v_axes, v, *lam, rule, table.as_ref(), scratch),
            )
            .collect();
        let mut col_ptr = vec![0];
        let mut rows = Vec::new();
        let mut vals = Vec::new();
        let mut max_rescale: f64 = 0.0;
        let mut loss = Vec::with_capacity(nv);
        for (col, lam, dev) in columns {
            loss.push(lam);
            max_rescale = max_rescale.max(dev);
            for (i, w) in col {
                rows.push(i as u32);
                vals.push(w);
            }
            col_ptr.push(rows.len());
        }
        Ok(CollisionOperator {
            v_axes: v_axes.to_vec(),
            loss,
            col_ptr,
            rows,
            vals,
            max_rescale,
        })
    }

    pub fn n_v(&self) -> usize {
        self.loss.len()
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn max_loss(&self) -> f64 {
        self.loss.iter().cloned().fold(0.0, f64::max)
    }

    /// G F.
    pub fn gain(&self, f: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; f.len()];
        for (j, fj) in f.iter().enumerate() {
            if *fj == 0.0 {
                continue;
            }
            for k in self.col_ptr[j]..self.col_ptr[j + 1] {
                out[self.rows[k] as usize] += self.vals[k] * fj;
            }
        }
        out
    }

    /// G F − λ F.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        let mut out = self.gain(f);
        for ((o, fi), l) in out.iter_mut().zip(f).zip(&self.loss) {
            *o -= l * fi;
        }
        out
    }

    /// Column j of G as (row, weight) pairs.
    pub fn column(&self, j: usize) -> Vec<(usize, f64)> {
        (self.col_ptr[j]..self.col_ptr[j + 1])
            .map(|k| (self.rows[k] as usize, self.vals[k]))
            .collect()
    }

    /// One collision step of length dt on a single V slice.
    fn step(&self, f: &mut [f64], dt: f64, variant: CollisionVariant) {
        match variant {
            CollisionVariant::LossOnly => {
                for (fi, l) in f.iter_mut().zip(&self.loss) {
                    *fi *= (-l * dt).exp();
                }
            }
            CollisionVariant::GainLoss => {
                let k1 = self.apply(f);
                let y: Vec<f64> = f.iter().zip(&k1).map(|(a, k)| a + 0.5 * dt * k).collect();
                let k2 = self.apply(&y);
                let y: Vec<f64> = f.iter().zip(&k2).map(|(a, k)| a + 0.5 * dt * k).collect();
                let k3 = self.apply(&y);
                let y: Vec<f64> = f.iter().zip(&k3).map(|(a, k)| a + dt * k).collect();
                let k4 = self.apply(&y);
                for i in 0..f.len() {
                    f[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
            }
        }
    }
}

/// loss_rate on a fine radial grid covering the V box, linearly
/// interpolated.
struct RateTable {
    step: f64,
    values: Vec<f64>,
}

impl RateTable {
    const INTERVALS: usize = 2048;

    fn new(model: &DispersionModel, v_axes: &[Axis]) -> Result<Self> {
        let reach: f64 = v_axes
            .iter()
            .map(|a| a.start.abs().max(a.end().abs()) + a.step.abs())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt();
        let step = reach / Self::INTERVALS as f64;
        let values = (0..=Self::INTERVALS)
            .into_par_iter()
            .map(|i| {
                let mut v = vec![0.0; model.dim];
                v[0] = step * i as f64;
                loss_rate(model, &v)
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(RateTable { step, values })
    }

    fn rate(&self, a: f64) -> f64 {
        let t = (a / self.step).min(Self::INTERVALS as f64);
        let i = (t.floor() as usize).min(Self::INTERVALS - 1);
        let f = t - i as f64;
        (1.0 - f) * self.values[i] + f * self.values[i + 1]
    }
}

/// Dense accumulator reused across columns.
struct Scratch {
    dense: Vec<f64>,
    touched: Vec<usize>,
}

impl Scratch {
    fn new(n: usize) -> Self {
        Scratch {
            dense: vec![0.0; n],
            touched: Vec::new(),
        }
    }

    fn add(&mut self, i: usize, w: f64) {
        if self.dense[i] == 0.0 {
            self.touched.push(i);
        }
        self.dense[i] += w;
    }

    /// Sorted nonzero entries; resets the accumulator.
    fn drain(&mut self) -> Vec<(usize, f64)> {
        self.touched.sort_unstable();
        self.touched.dedup();
        let out = self
            .touched
            .iter()
            .map(|i| (*i, self.dense[*i]))
            .filter(|(_, w)| *w != 0.0)
            .collect();
        for i in self.touched.drain(..) {
            self.dense[i] = 0.0;
        }
        out
    }
}

/// Shell nodes of V deposited onto the grid by multilinear (cloud-in-cell)
/// weights, with nodes outside the box clamped to its faces. With a single
/// point per cell the column is rescaled to sum to λ; returns the column,
/// the cell's loss rate and the rescale deviation.
fn gain_column(
    model: &DispersionModel,
    v_axes: &[Axis],
    v: &[f64],
    lam: f64,
    rule: ShellRule,
    table: Option<&RateTable>,
    scratch: &mut Scratch,
) -> (Vec<(usize, f64)>, f64, f64) {
    let shape: Vec<usize> = v_axes.iter().map(|a| a.len).collect();
    let ns = rule.sub_cells.max(1);
    let active: Vec<usize> = (0..v_axes.len()).filter(|k| v_axes[*k].len > 1).collect();
    let n_sub = ns.pow(active.len() as u32);
    let mut total = 0.0;
    let mut u = v.to_vec();
    for sub in 0..n_sub {
        let mut rest = sub;
        for k in &active {
            let h = v_axes[*k].step;
            u[*k] = v[*k] + h * (((rest % ns) as f64 + 0.5) / ns as f64 - 0.5);
            rest /= ns;
        }
        let nodes = shell_nodes(model, &u, rule.n_polar, rule.n_azimuth);
        let raw: f64 = nodes.iter().map(|n| n.weight).sum();
        // sub-points are normalized to the tabulated rate, the single
        // node below to the exact one
        let scale = match table {
            Some(t) if raw > 0.0 => t.rate(norm(&u)) / raw,
            _ => 1.0,
        };
        for node in nodes {
            if node.weight == 0.0 {
                continue;
            }
            let w = scale * node.weight / n_sub as f64;
            total += w;
            deposit(v_axes, &shape, &node.momentum, w, scratch);
        }
    }
    let mut col = scratch.drain();
    if ns > 1 {
        return (col, total, 0.0);
    }
    if lam == 0.0 {
        return (Vec::new(), 0.0, 0.0);
    }
    if total <= 0.0 {
        // no resolvable shell node: keep the mass in place
        let here = ravel(&nearest(v_axes, v), &shape);
        return (vec![(here, lam)], lam, 1.0);
    }
    let s = lam / total;
    for (_, w) in col.iter_mut() {
        *w *= s;
    }
    (col, lam, (1.0 / s - 1.0).abs())
}

fn nearest(axes: &[Axis], u: &[f64]) -> Vec<usize> {
    axes.iter()
        .zip(u)
        .map(|(a, x)| {
            if a.len == 1 {
                0
            } else {
                ((x - a.start) / a.step).round().clamp(0.0, (a.len - 1) as f64) as usize
            }
        })
        .collect()
}

fn deposit(axes: &[Axis], shape: &[usize], u: &[f64], weight: f64, acc: &mut Scratch) {
    let d = axes.len();
    let mut base = vec![0usize; d];
    let mut frac = vec![0.0; d];
    for k in 0..d {
        let a = &axes[k];
        if a.len == 1 {
            continue;
        }
        let t = ((u[k] - a.start) / a.step).clamp(0.0, (a.len - 1) as f64);
        let i0 = (t.floor() as usize).min(a.len - 2);
        base[k] = i0;
        frac[k] = t - i0 as f64;
    }
    let mut idx = vec![0usize; d];
    for corner in 0..(1usize << d) {
        let mut w = weight;
        for k in 0..d {
            let hi = (corner >> k) & 1 == 1;
            if axes[k].len == 1 {
                if hi {
                    w = 0.0;
                }
                idx[k] = 0;
                continue;
            }
            idx[k] = base[k] + hi as usize;
            w *= if hi { frac[k] } else { 1.0 - frac[k] };
        }
        if w != 0.0 {
            acc.add(ravel(&idx, shape), w);
        }
    }
}

/// Full equation or the gain-free (damped) variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CollisionVariant {
    GainLoss,
    LossOnly,
}

/// Result of a Boltzmann run.
#[derive(Debug, Clone)]
pub struct BoltzmannRun {
    pub density: PhaseSpaceDensity,
    /// Diagnostics at T = 0 and after every step.
    pub series: Vec<Diagnostics>,
    pub steps: usize,
    pub dt: f64,
    /// Values below [`NEGATIVE_FLOOR`] that were clipped to zero.
    pub clipped: usize,
    pub most_negative: f64,
    /// Mass added by clipping.
    pub clipped_mass: f64,
}

/// Evolve with the default shell rule and the full gain+loss operator.
pub fn evolve_boltzmann(f0: &PhaseSpaceDensity, model: &DispersionModel, big_t: f64, dt: f64) -> Result<BoltzmannRun> {
    let op = CollisionOperator::new(model, &f0.v_axes, ShellRule::default())?;
    evolve_with(f0, model, &op, big_t, dt, CollisionVariant::GainLoss)
}

/// Strang splitting: half a transport step, a collision step, half a
/// transport step. Transport is a periodic semi-Lagrangian shift with cubic
/// Lagrange interpolation; collisions use RK4 (gain+loss) or the exact
/// exponential (loss only). The step is shortened so that it divides T.
pub fn evolve_with(
    f0: &PhaseSpaceDensity,
    model: &DispersionModel,
    op: &CollisionOperator,
    big_t: f64,
    dt: f64,
    variant: CollisionVariant,
) -> Result<BoltzmannRun> {
    if op.v_axes != f0.v_axes || model.dim != f0.dim() {
        return Err(Error::GridMismatch("operator, model and density grids differ".into()));
    }
    if !(big_t >= 0.0) || !(dt > 0.0) {
        return Err(Error::InvalidInput(format!("need T >= 0 and dt > 0, got T = {big_t}, dt = {dt}")));
    }
    let bound = dt * op.max_loss();
    if bound >= 0.5 {
        return Err(Error::Stability(format!(
            "dt * max loss rate = {bound:.4} must stay below 0.5"
        )));
    }
    let steps = (big_t / dt).ceil() as usize;
    let h = if steps > 0 { big_t / steps as f64 } else { 0.0 };
    let mut f = f0.clone();
    let mut series = vec![f.diagnostics(model)];
    let mut clipped = 0;
    let mut most_negative: f64 = 0.0;
    let mut clipped_mass = 0.0;
    let cell = f.cell();
    let velocities: Vec<Vec<f64>> = (0..f.n_v()).map(|j| model.grad_e(&point(&f.v_axes, j))).collect();
    for n in 0..steps {
        if !f.is_homogeneous() {
            transport(&mut f, &velocities, 0.5 * h);
        }
        let nv = f.n_v();
        f.values.par_chunks_mut(nv).for_each(|slice| op.step(slice, h, variant));
        if !f.is_homogeneous() {
            transport(&mut f, &velocities, 0.5 * h);
        }
        for v in f.values.iter_mut() {
            if *v < NEGATIVE_FLOOR {
                clipped += 1;
                most_negative = most_negative.min(*v);
                clipped_mass -= *v * cell;
                *v = 0.0;
            }
        }
        f.time = f0.time + h * (n + 1) as f64;
        series.push(f.diagnostics(model));
    }
    Ok(BoltzmannRun {
        density: f,
        series,
        steps,
        dt: h,
        clipped,
        most_negative,
        clipped_mass,
    })
}

/// F(X, V) ← F(X − τ∇e(V), V) on the periodic X box.
fn transport(f: &mut PhaseSpaceDensity, velocities: &[Vec<f64>], tau: f64) {
    let nx = f.n_x();
    let nv = f.n_v();
    let shape: Vec<usize> = f.x_axes.iter().map(|a| a.len).collect();
    let axes = f.x_axes.clone();
    let values = &f.values;
    let slices: Vec<Vec<f64>> = (0..nv)
        .into_par_iter()
        .map(|iv| {
            let mut s: Vec<f64> = (0..nx).map(|ix| values[ix * nv + iv]).collect();
            for (k, a) in axes.iter().enumerate() {
                if a.len > 1 {
                    shift_axis(&mut s, &shape, k, tau * velocities[iv][k] / a.step);
                }
            }
            s
        })
        .collect();
    for (iv, s) in slices.iter().enumerate() {
        for (ix, v) in s.iter().enumerate() {
            f.values[ix * nv + iv] = *v;
        }
    }
}

/// Periodic shift by `cells` grid units along axis k: g(i) = f(i − cells).
fn shift_axis(data: &mut [f64], shape: &[usize], k: usize, cells: f64) {
    if cells == 0.0 {
        return;
    }
    let n = shape[k] as i64;
    let y = -cells;
    let i0 = y.floor();
    let t = y - i0;
    let i0 = i0 as i64;
    let w = [
        -t * (t - 1.0) * (t - 2.0) / 6.0,
        (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
        -(t + 1.0) * t * (t - 2.0) / 2.0,
        (t + 1.0) * t * (t - 1.0) / 6.0,
    ];
    let total = data.len();
    let stride: usize = shape[k + 1..].iter().product();
    let src = data.to_vec();
    for flat in 0..total {
        let idx = unravel(flat, shape);
        let i = idx[k] as i64;
        let base = flat - idx[k] * stride;
        let mut acc = 0.0;
        for (m, wm) in w.iter().enumerate() {
            let j = (i + i0 + m as i64 - 1).rem_euclid(n) as usize;
            acc += wm * src[base + j * stride];
        }
        data[flat] = acc;
    }
}

/// e^{−Tσ_P} times the free off-diagonal evolution.
pub fn evolve_offdiagonal_damped(
    w0: &WignerGrid,
    spec: &WavePacketSpec,
    model: &DispersionModel,
    big_t: f64,
) -> Result<WignerGrid> {
    let sigma = if model.is_decoupled() { 0.0 } else { sigma_shell(model, &spec.p)? };
    evolve_offdiagonal_damped_with_sigma(w0, spec, model, big_t, sigma)
}

/// [`evolve_offdiagonal_damped`] with a precomputed σ_P.
pub fn evolve_offdiagonal_damped_with_sigma(
    w0: &WignerGrid,
    spec: &WavePacketSpec,
    model: &DispersionModel,
    big_t: f64,
    sigma_p: f64,
) -> Result<WignerGrid> {
    let free = free_evolve_offdiagonal(spec, model, big_t, w0)?;
    if sigma_p == 0.0 {
        return Ok(free);
    }
    Ok(free.scaled(Complex64::new((-big_t * sigma_p).exp(), 0.0)))
}
