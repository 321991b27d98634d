//! Extrapolation tables and least-squares fits used by the convergence studies.

use serde::{Deserialize, Serialize};

use crate::quadrature::QuadValue;

/// Polynomial extrapolation to h = 0 (Neville / Richardson with integer
/// powers 1, 2, ...). `stages` is the number of elimination stages applied.
/// Returns the full tableau; `table[s]` holds the stage-`s` column.
pub fn richardson_table<T: QuadValue>(hs: &[f64], values: &[T], stages: usize) -> Vec<Vec<T>> {
    assert_eq!(hs.len(), values.len());
    let mut table = vec![values.to_vec()];
    for s in 1..=stages.min(hs.len().saturating_sub(1)) {
        let prev = &table[s - 1];
        let col: Vec<T> = (s..hs.len())
            .map(|i| {
                let hi = hs[i];
                let hj = hs[i - s];
                // prev[k] for column s-1 corresponds to row index k + (s-1)
                let a = prev[i - (s - 1)];
                let b = prev[i - 1 - (s - 1)];
                a + (a - b) * (hi / (hj - hi))
            })
            .collect();
        table.push(col);
    }
    table
}

/// Result of an extrapolation in a small parameter.
#[derive(Debug, Clone, Copy)]
pub struct Extrapolated<T> {
    pub value: T,
    /// Magnitude of the last correction applied by the final stage.
    pub residual: f64,
    /// Difference between the last two entries of the final column.
    pub spread: f64,
}

pub fn richardson<T: QuadValue>(hs: &[f64], values: &[T], stages: usize) -> Extrapolated<T> {
    let table = richardson_table(hs, values, stages);
    let last = table.last().unwrap();
    let value = *last.last().unwrap();
    let residual = if table.len() >= 2 {
        let prev = &table[table.len() - 2];
        (value - *prev.last().unwrap()).magnitude()
    } else {
        0.0
    };
    let spread = if last.len() >= 2 {
        (value - last[last.len() - 2]).magnitude()
    } else {
        residual
    };
    Extrapolated {
        value,
        residual,
        spread,
    }
}

/// Ordinary least-squares line y = intercept + slope·x.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub slope_stderr: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> LineFit {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let r = b - intercept - slope * a;
            r * r
        })
        .sum();
    let r_squared = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    let slope_stderr = if x.len() > 2 {
        (ss_res / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    LineFit {
        slope,
        intercept,
        r_squared,
        slope_stderr,
    }
}

/// Slope of log(y) against log(x).
pub fn log_log_fit(x: &[f64], y: &[f64]) -> LineFit {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    linear_fit(&lx, &ly)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn richardson_removes_polynomial_error() {
        let hs = [0.1, 0.05, 0.025, 0.0125];
        let vals: Vec<f64> = hs.iter().map(|h| 3.0 + 2.0 * h - 5.0 * h * h).collect();
        let r = richardson(&hs, &vals, 2);
        assert!((r.value - 3.0).abs() < 1e-13);
    }

    #[test]
    fn line_fit_recovers_slope() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 0.5 - 2.0 * v).collect();
        let f = linear_fit(&x, &y);
        assert!((f.slope + 2.0).abs() < 1e-14);
        assert!((f.intercept - 0.5).abs() < 1e-14);
    }
}
