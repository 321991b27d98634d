//! Small helpers for momentum vectors stored as slices.

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn scale(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|x| x * s).collect()
}

/// `a + s * b`
pub fn axpy(a: &[f64], s: f64, b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + s * y).collect()
}

pub fn unit(d: usize, axis: usize) -> Vec<f64> {
    let mut e = vec![0.0; d];
    e[axis] = 1.0;
    e
}

/// Orthonormal frame whose first vector is `axis / |axis|` (or e_0 when the
/// axis vanishes). Built by Gram-Schmidt against the coordinate basis.
pub fn frame(axis: &[f64]) -> Vec<Vec<f64>> {
    let d = axis.len();
    let n = norm(axis);
    let first = if n > 0.0 { scale(axis, 1.0 / n) } else { unit(d, 0) };
    let mut basis = vec![first];
    for i in 0..d {
        if basis.len() == d {
            break;
        }
        let mut v = unit(d, i);
        for b in &basis {
            let c = dot(&v, b);
            v = axpy(&v, -c, b);
        }
        let nv = norm(&v);
        if nv > 1e-8 {
            basis.push(scale(&v, 1.0 / nv));
        }
    }
    basis
}

/// Angle between two nonzero vectors.
pub fn angle(a: &[f64], b: &[f64]) -> f64 {
    let ua = scale(a, 1.0 / norm(a));
    let ub = scale(b, 1.0 / norm(b));
    2.0 * norm(&sub(&ua, &ub)).atan2(norm(&add(&ua, &ub)))
}
