//! Sampled Wigner functions and the discrete Wigner transform.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{cell_volume, fft_index, fft_nd, fftshift, point, ravel, total_len, unravel, Axis};
use crate::wavepacket::{Component, SpatialField};

/// Whether the first set of axes is position x or its Fourier variable ξ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Position,
    Fourier,
}

/// Complex Wigner samples on a rectangular (space × v) grid; `values` is
/// space-major: index = i_space · |v grid| + i_v.
#[derive(Debug, Clone, PartialEq)]
pub struct WignerGrid {
    pub domain: Domain,
    pub space_axes: Vec<Axis>,
    pub v_axes: Vec<Axis>,
    pub values: Vec<Complex64>,
    pub component: Component,
    pub epsilon: f64,
}

/// JSON sidecar describing a binary grid dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSidecar {
    pub format: String,
    pub domain: Domain,
    pub space_axes: Vec<Axis>,
    pub v_axes: Vec<Axis>,
    pub component: Component,
    pub epsilon: f64,
    /// true when only real parts were written
    pub real_valued: bool,
}

impl WignerGrid {
    pub fn dim(&self) -> usize {
        self.v_axes.len()
    }

    pub fn n_space(&self) -> usize {
        total_len(&self.space_axes)
    }

    pub fn n_v(&self) -> usize {
        total_len(&self.v_axes)
    }

    pub fn at(&self, i_space: usize, i_v: usize) -> Complex64 {
        self.values[i_space * self.n_v() + i_v]
    }

    pub fn space_point(&self, i: usize) -> Vec<f64> {
        point(&self.space_axes, i)
    }

    pub fn v_point(&self, i: usize) -> Vec<f64> {
        point(&self.v_axes, i)
    }

    pub fn same_geometry(&self, other: &WignerGrid) -> bool {
        self.domain == other.domain
            && self.space_axes == other.space_axes
            && self.v_axes == other.v_axes
    }

    /// Pointwise a·self + b·other.
    pub fn combine(&self, a: Complex64, other: &WignerGrid, b: Complex64) -> Result<WignerGrid> {
        if !self.same_geometry(other) {
            return Err(Error::GridMismatch("grids have different axes".into()));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Ok(WignerGrid {
            values,
            component: if self.component == other.component {
                self.component
            } else {
                Component::Total
            },
            ..self.clone()
        })
    }

    pub fn scaled(&self, s: Complex64) -> WignerGrid {
        WignerGrid {
            values: self.values.iter().map(|v| v * s).collect(),
            ..self.clone()
        }
    }

    /// ∫ W(·, v) dv as a function of the space index (rectangle rule).
    pub fn v_integral(&self) -> Vec<Complex64> {
        let nv = self.n_v();
        let dv = cell_volume(&self.v_axes);
        self.values
            .chunks(nv)
            .map(|row| row.iter().sum::<Complex64>() * dv)
            .collect()
    }

    /// Position → Fourier by FFT along the space axes:
    /// Ŵ(ξ,v) = (2π)^{−d/2} Σ_x e^{−iξ·x} W(x,v) Δx^d.
    pub fn to_fourier(&self) -> Result<WignerGrid> {
        if self.domain != Domain::Position {
            return Err(Error::InvalidInput("grid is already in the Fourier domain".into()));
        }
        let d = self.dim();
        let shape: Vec<usize> = self.space_axes.iter().map(|a| a.len).collect();
        let nx = self.n_space();
        let nv = self.n_v();
        let xi_axes: Vec<Axis> = self
            .space_axes
            .iter()
            .map(|a| {
                let dk = 2.0 * std::f64::consts::PI / (a.len as f64 * a.step);
                Axis::new(-dk * (a.len / 2) as f64, dk, a.len)
            })
            .collect();
        let norm = (2.0 * std::f64::consts::PI).powf(-(d as f64) / 2.0) * cell_volume(&self.space_axes);
        let columns: Vec<Vec<Complex64>> = (0..nv)
            .into_par_iter()
            .map(|iv| {
                let mut col: Vec<Complex64> = (0..nx).map(|ix| self.values[ix * nv + iv]).collect();
                fft_nd(&mut col, &shape, false);
                let col = fftshift(&col, &shape);
                (0..nx)
                    .map(|k| {
                        // origin phase e^{−iξ·x₀}
                        let xi = point(&xi_axes, k);
                        let x0: f64 = xi.iter().zip(&self.space_axes).map(|(x, a)| x * a.start).sum();
                        col[k] * Complex64::from_polar(norm, -x0)
                    })
                    .collect()
            })
            .collect();
        let mut values = vec![Complex64::new(0.0, 0.0); nx * nv];
        for (iv, col) in columns.iter().enumerate() {
            for (k, v) in col.iter().enumerate() {
                values[k * nv + iv] = *v;
            }
        }
        Ok(WignerGrid {
            domain: Domain::Fourier,
            space_axes: xi_axes,
            v_axes: self.v_axes.clone(),
            values,
            component: self.component,
            epsilon: self.epsilon,
        })
    }

    /// Write `<stem>.bin` (little-endian f64 pairs re, im) and `<stem>.json`.
    pub fn write(&self, stem: &Path) -> Result<()> {
        write_binary(stem, &self.values, false)?;
        let side = GridSidecar {
            format: "f64-le complex pairs, space-major then v, row-major axes".into(),
            domain: self.domain,
            space_axes: self.space_axes.clone(),
            v_axes: self.v_axes.clone(),
            component: self.component,
            epsilon: self.epsilon,
            real_valued: false,
        };
        std::fs::write(stem.with_extension("json"), serde_json::to_string_pretty(&side)?)?;
        Ok(())
    }

    pub fn read(stem: &Path) -> Result<WignerGrid> {
        let side: GridSidecar = serde_json::from_str(&std::fs::read_to_string(stem.with_extension("json"))?)?;
        let n = total_len(&side.space_axes) * total_len(&side.v_axes);
        let values = read_binary(stem, n, side.real_valued)?;
        Ok(WignerGrid {
            domain: side.domain,
            space_axes: side.space_axes,
            v_axes: side.v_axes,
            values,
            component: side.component,
            epsilon: side.epsilon,
        })
    }
}

/// Dump values as little-endian f64 (pairs, or real parts only).
pub fn write_binary(stem: &Path, values: &[Complex64], real_only: bool) -> Result<()> {
    let mut w = BufWriter::new(File::create(stem.with_extension("bin"))?);
    for v in values {
        w.write_all(&v.re.to_le_bytes())?;
        if !real_only {
            w.write_all(&v.im.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_binary(stem: &Path, n: usize, real_only: bool) -> Result<Vec<Complex64>> {
    let mut r = BufReader::new(File::open(stem.with_extension("bin"))?);
    let mut buf = [0u8; 8];
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        r.read_exact(&mut buf)?;
        let re = f64::from_le_bytes(buf);
        let im = if real_only {
            0.0
        } else {
            r.read_exact(&mut buf)?;
            f64::from_le_bytes(buf)
        };
        out.push(Complex64::new(re, im));
    }
    Ok(out)
}

/// Discrete W(x,v) = (2π)^{−d} ∫ e^{−iv·y} ψ(x+y/2) conj ψ(x−y/2) dy on the
/// field's grid, with y = 2mΔx, |m| < N/4 and periodic wrap; v nodes are
/// πk/(NΔx) for k ∈ [−N/2, N/2).
pub fn wigner_transform(psi: &SpatialField, component: Component, epsilon: f64) -> Result<WignerGrid> {
    let d = psi.axes.len();
    let shape = psi.shape();
    if shape.iter().any(|n| n % 4 != 0) {
        return Err(Error::InvalidInput("grid lengths must be multiples of 4".into()));
    }
    // the y-integral sees pairs separated by up to half the box; the state
    // must live in the central half so no wrapped pair is picked up
    let total: f64 = psi.values.iter().map(|v| v.norm_sqr()).sum();
    let outside: f64 = psi
        .values
        .iter()
        .enumerate()
        .filter(|(i, _)| {
            unravel(*i, &shape)
                .iter()
                .zip(&shape)
                .any(|(j, n)| *j < n / 4 || *j >= 3 * n / 4)
        })
        .map(|(_, v)| v.norm_sqr())
        .sum();
    if outside > 1e-14 * total.max(1e-300) {
        return Err(Error::Aliasing(format!(
            "fraction {:.3e} of |psi|^2 lies outside the central half of the box",
            outside / total
        )));
    }
    let nx = psi.values.len();
    let v_axes: Vec<Axis> = psi
        .axes
        .iter()
        .map(|a| {
            let dv = std::f64::consts::PI / (a.len as f64 * a.step);
            Axis::new(-dv * (a.len / 2) as f64, dv, a.len)
        })
        .collect();
    let norm = (2.0 * std::f64::consts::PI).powi(-(d as i32))
        * psi.axes.iter().map(|a| 2.0 * a.step).product::<f64>();
    let rows: Vec<Vec<Complex64>> = (0..nx)
        .into_par_iter()
        .map(|ix| {
            let jx = unravel(ix, &shape);
            let mut g = vec![Complex64::new(0.0, 0.0); nx];
            for (im, gm) in g.iter_mut().enumerate() {
                let m: Vec<i64> = unravel(im, &shape)
                    .iter()
                    .zip(&shape)
                    .map(|(k, n)| fft_index(*k, *n))
                    .collect();
                if m.iter().zip(&shape).any(|(mi, n)| mi.unsigned_abs() as usize >= n / 4) {
                    continue;
                }
                let plus: Vec<usize> = jx
                    .iter()
                    .zip(&m)
                    .zip(&shape)
                    .map(|((j, mi), n)| (*j as i64 + mi).rem_euclid(*n as i64) as usize)
                    .collect();
                let minus: Vec<usize> = jx
                    .iter()
                    .zip(&m)
                    .zip(&shape)
                    .map(|((j, mi), n)| (*j as i64 - mi).rem_euclid(*n as i64) as usize)
                    .collect();
                *gm = psi.values[ravel(&plus, &shape)] * psi.values[ravel(&minus, &shape)].conj();
            }
            fft_nd(&mut g, &shape, false);
            fftshift(&g, &shape).into_iter().map(|v| v * norm).collect()
        })
        .collect();
    let values: Vec<Complex64> = rows.into_iter().flatten().collect();
    let grid = WignerGrid {
        domain: Domain::Position,
        space_axes: psi.axes.clone(),
        v_axes,
        values,
        component,
        epsilon,
    };
    check_v_boundary(&grid)?;
    Ok(grid)
}

/// Aliasing guard: |W| on the outermost v slices must be below 1e-6 of max |W|.
fn check_v_boundary(grid: &WignerGrid) -> Result<()> {
    let nv = grid.n_v();
    let vshape: Vec<usize> = grid.v_axes.iter().map(|a| a.len).collect();
    let peak = grid.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if peak == 0.0 {
        return Ok(());
    }
    let mut edge: f64 = 0.0;
    for (i, v) in grid.values.iter().enumerate() {
        let iv = unravel(i % nv, &vshape);
        if iv.iter().zip(&vshape).any(|(j, n)| *j == 0 || *j == n - 1) {
            edge = edge.max(v.norm());
        }
    }
    if edge > 1e-6 * peak {
        return Err(Error::Aliasing(format!(
            "|W| reaches {:.3e} of its peak on the v-grid boundary",
            edge / peak
        )));
    }
    Ok(())
}
