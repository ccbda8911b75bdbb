// Copyright 2026 The mda Authors
// SPDX-License-Identifier: Apache-2.0

//! Least-squares polynomial fitting on a normalized abscissa.

/// Evaluates `c[0] + c[1]·u + … + c[d]·u^d`.
#[inline]
pub fn horner(coeffs: &[f64], u: f64) -> f64 {
    let mut acc = 0.0;
    for &c in coeffs.iter().rev() {
        acc = acc * u + c;
    }
    acc
}

/// Fits a polynomial of `degree` to `(us, vs)` by solving the normal
/// equations with a Cholesky factorization. Returns `None` when the system
/// is singular (fewer distinct abscissae than coefficients).
pub fn fit(us: &[f64], vs: &[f64], degree: usize) -> Option<Vec<f64>> {
    debug_assert_eq!(us.len(), vs.len());
    let k = degree + 1;
    if us.len() < k {
        return None;
    }
    if degree == 0 {
        // Plain mean; avoids any rounding beyond the summation itself.
        let mean = mean(vs);
        return Some(vec![mean]);
    }
    // Shift values so the constant term does not swamp the others.
    let shift = vs[0];
    let mut ata = vec![0.0f64; k * k];
    let mut atb = vec![0.0f64; k];
    let mut pows = vec![0.0f64; 2 * k - 1];
    for (&u, &v) in us.iter().zip(vs) {
        let mut p = 1.0;
        for slot in pows.iter_mut() {
            *slot = p;
            p *= u;
        }
        for i in 0..k {
            for j in 0..=i {
                ata[i * k + j] += pows[i + j];
            }
            atb[i] += pows[i] * (v - shift);
        }
    }
    for i in 0..k {
        for j in 0..i {
            ata[j * k + i] = ata[i * k + j];
        }
    }
    // Jacobi scaling keeps the factorization well behaved for the higher
    // powers, whose column sums shrink quickly on [0, 1].
    let scale: Vec<f64> = (0..k).map(|i| 1.0 / ata[i * k + i].sqrt()).collect();
    if scale.iter().any(|s| !s.is_finite()) {
        return None;
    }
    for i in 0..k {
        for j in 0..k {
            ata[i * k + j] *= scale[i] * scale[j];
        }
        atb[i] *= scale[i];
    }
    let l = cholesky(&ata, k)?;
    let y = forward(&l, &atb, k);
    let mut c = backward(&l, &y, k);
    for i in 0..k {
        c[i] *= scale[i];
    }
    c[0] += shift;
    if c.iter().all(|x| x.is_finite()) {
        Some(c)
    } else {
        None
    }
}

pub fn mean(vs: &[f64]) -> f64 {
    let n = vs.len() as f64;
    let first = vs[0];
    // Compensated around the first value so constant inputs stay exact.
    let s: f64 = vs.iter().map(|v| v - first).sum();
    first + s / n
}

fn cholesky(a: &[f64], k: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0f64; k * k];
    for i in 0..k {
        for j in 0..=i {
            let mut s = a[i * k + j];
            for p in 0..j {
                s -= l[i * k + p] * l[j * k + p];
            }
            if i == j {
                if s <= 1e-14 {
                    return None;
                }
                l[i * k + i] = s.sqrt();
            } else {
                l[i * k + j] = s / l[j * k + j];
            }
        }
    }
    Some(l)
}

fn forward(l: &[f64], b: &[f64], k: usize) -> Vec<f64> {
    let mut y = vec![0.0; k];
    for i in 0..k {
        let mut s = b[i];
        for p in 0..i {
            s -= l[i * k + p] * y[p];
        }
        y[i] = s / l[i * k + i];
    }
    y
}

fn backward(l: &[f64], y: &[f64], k: usize) -> Vec<f64> {
    let mut x = vec![0.0; k];
    for i in (0..k).rev() {
        let mut s = y[i];
        for p in i + 1..k {
            s -= l[p * k + i] * x[p];
        }
        x[i] = s / l[i * k + i];
    }
    x
}

/// Largest absolute residual of `coeffs` over the points.
pub fn max_residual(coeffs: &[f64], us: &[f64], vs: &[f64]) -> f64 {
    us.iter()
        .zip(vs)
        .map(|(&u, &v)| (horner(coeffs, u) - v).abs())
        .fold(0.0, f64::max)
}
