//! Uniform axes, row-major multi-index helpers, and N-dimensional FFTs.

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

/// Uniform axis: nodes start + i·step for i < len.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub start: f64,
    pub step: f64,
    pub len: usize,
}

impl Axis {
    pub fn new(start: f64, step: f64, len: usize) -> Self {
        Axis { start, step, len }
    }

    /// `len` nodes symmetric about `center` with spacing `step`
    /// (odd `len` puts a node on the center).
    pub fn centered(center: f64, step: f64, len: usize) -> Self {
        Axis {
            start: center - step * (len as f64 - 1.0) / 2.0,
            step,
            len,
        }
    }

    /// Single node at `x`.
    pub fn point(x: f64) -> Self {
        Axis {
            start: x,
            step: 0.0,
            len: 1,
        }
    }

    pub fn node(&self, i: usize) -> f64 {
        self.start + self.step * i as f64
    }

    pub fn end(&self) -> f64 {
        self.node(self.len - 1)
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.len).map(|i| self.node(i)).collect()
    }

    /// Index of the node closest to `x`, if `x` lies within half a step of the axis.
    pub fn locate(&self, x: f64) -> Option<usize> {
        if self.len == 1 {
            return ((x - self.start).abs() <= 1e-9 * (1.0 + x.abs())).then_some(0);
        }
        let t = (x - self.start) / self.step;
        let i = t.round();
        if i < 0.0 || i >= self.len as f64 || (t - i).abs() > 1e-6 {
            return None;
        }
        Some(i as usize)
    }

    pub fn contains(&self, x: f64) -> bool {
        let (a, b) = if self.step >= 0.0 {
            (self.start, self.end())
        } else {
            (self.end(), self.start)
        };
        x >= a - 1e-12 && x <= b + 1e-12
    }
}

/// Number of points of a tensor grid.
pub fn total_len(axes: &[Axis]) -> usize {
    axes.iter().map(|a| a.len).product()
}

/// Row-major multi-index of flat index `i` (last axis fastest).
pub fn unravel(mut i: usize, shape: &[usize]) -> Vec<usize> {
    let mut idx = vec![0; shape.len()];
    for k in (0..shape.len()).rev() {
        idx[k] = i % shape[k];
        i /= shape[k];
    }
    idx
}

pub fn ravel(idx: &[usize], shape: &[usize]) -> usize {
    idx.iter().zip(shape).fold(0, |acc, (i, n)| acc * n + i)
}

/// Coordinates of flat index `i` on a tensor grid.
pub fn point(axes: &[Axis], i: usize) -> Vec<f64> {
    let shape: Vec<usize> = axes.iter().map(|a| a.len).collect();
    unravel(i, &shape)
        .iter()
        .zip(axes)
        .map(|(j, a)| a.node(*j))
        .collect()
}

/// Cell volume of a tensor grid (axes of length one contribute a factor 1).
pub fn cell_volume(axes: &[Axis]) -> f64 {
    axes.iter()
        .map(|a| if a.len > 1 { a.step.abs() } else { 1.0 })
        .product()
}

/// In-place N-dimensional FFT of a row-major array (unnormalized; the
/// inverse carries no 1/N).
pub fn fft_nd(data: &mut [Complex64], shape: &[usize], inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let total: usize = shape.iter().product();
    assert_eq!(data.len(), total);
    let mut stride = 1;
    for ax in (0..shape.len()).rev() {
        let n = shape[ax];
        if n > 1 {
            let fft = if inverse {
                planner.plan_fft_inverse(n)
            } else {
                planner.plan_fft_forward(n)
            };
            let mut buf = vec![Complex64::new(0.0, 0.0); n];
            let outer = total / (n * stride);
            for o in 0..outer {
                for s in 0..stride {
                    let base = o * n * stride + s;
                    for j in 0..n {
                        buf[j] = data[base + j * stride];
                    }
                    fft.process(&mut buf);
                    for j in 0..n {
                        data[base + j * stride] = buf[j];
                    }
                }
            }
        }
        stride *= n;
    }
}

/// Signed frequency index of FFT bin `k` for length `n`.
pub fn fft_index(k: usize, n: usize) -> i64 {
    if k < n.div_ceil(2) {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

/// Reorder an array so zero frequency sits at index n/2 along every axis.
pub fn fftshift(data: &[Complex64], shape: &[usize]) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); data.len()];
    for (i, v) in data.iter().enumerate() {
        let idx = unravel(i, shape);
        let shifted: Vec<usize> = idx
            .iter()
            .zip(shape)
            .map(|(j, n)| (j + n / 2) % n)
            .collect();
        out[ravel(&shifted, shape)] = *v;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ravel_roundtrip() {
        let shape = [3, 4, 5];
        for i in 0..60 {
            assert_eq!(ravel(&unravel(i, &shape), &shape), i);
        }
    }

    #[test]
    fn fft_2d_of_delta_is_flat() {
        let shape = [4, 6];
        let mut d = vec![Complex64::new(0.0, 0.0); 24];
        d[0] = Complex64::new(1.0, 0.0);
        fft_nd(&mut d, &shape, false);
        assert!(d.iter().all(|v| (v - Complex64::new(1.0, 0.0)).norm() < 1e-15));
        fft_nd(&mut d, &shape, true);
        assert!((d[0] - Complex64::new(24.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn locate_nodes() {
        let a = Axis::centered(1.0, 0.5, 5);
        assert_eq!(a.locate(1.0), Some(2));
        assert_eq!(a.locate(1.2), None);
        assert_eq!(Axis::point(3.0).locate(3.0), Some(0));
    }
}
