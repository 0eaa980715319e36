//! Small numerical helpers shared by the modules.

use crate::error::{Error, Result};

/// Deterministic pairwise (tree) summation.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 64 {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let t: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    pairwise_sum(&t)
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Tanh-sinh quadrature on a finite interval with an absolute target.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    let out = quadrature::double_exponential::integrate(f, a, b, tol);
    if !out.integral.is_finite() || out.error_estimate > tol.max(1e-15) * 1e3 {
        return Err(Error::Quadrature { achieved: out.error_estimate, target: tol });
    }
    Ok(out.integral)
}

/// `∫_0^∞ f` for integrands decaying like `t^{-1-decay}`.
///
/// The tail `[c, ∞)` is mapped to `(0, 1]` by `t = c w^{-1/decay}`, which
/// turns the algebraic decay into a bounded integrand at `w = 0`.
pub fn integrate_half_line(f: impl Fn(f64) -> f64, c: f64, decay: f64, tol: f64) -> Result<f64> {
    let head = integrate(&f, 0.0, c, tol)?;
    let p = 1.0 / decay;
    let tail = integrate(
        |w| {
            if w <= 0.0 {
                0.0
            } else {
                let t = c * w.powf(-p);
                let v = f(t) * c * p * w.powf(-p - 1.0);
                if v.is_finite() {
                    v
                } else {
                    0.0
                }
            }
        },
        0.0,
        1.0,
        tol,
    )?;
    Ok(head + tail)
}

/// Four-point Gauss-Legendre nodes and weights on `[-1, 1]`.
pub const GL4: [(f64, f64); 4] = [
    (-0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
    (-0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
];

pub fn gauss_legendre(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let c = 0.5 * (a + b);
    let r = 0.5 * (b - a);
    GL4.iter().map(|&(x, w)| w * f(c + r * x)).sum::<f64>() * r
}

/// Least-squares line `y = a + b x`; returns `(a, b)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let b = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (my - b * mx, b)
}

/// Golden-section minimization of a unimodal function on `[a, b]`.
pub fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, iters: usize) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..iters {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Solves a tridiagonal system in place (Thomas algorithm).
///
/// `lower[i]` couples row `i` to `i-1`, `upper[i]` couples row `i` to `i+1`.
pub fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &mut [f64]) {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut beta = diag[0];
    rhs[0] /= beta;
    for i in 1..n {
        c[i] = upper[i - 1] / beta;
        beta = diag[i] - lower[i] * c[i];
        rhs[i] = (rhs[i] - lower[i] * rhs[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= c[i + 1] * rhs[i + 1];
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_line_integral_of_lorentzian() {
        let v = integrate_half_line(|t| 1.0 / (1.0 + t * t), 1.0, 1.0, 1e-13).unwrap();
        assert!((v - std::f64::consts::FRAC_PI_2).abs() < 1e-11);
    }

    #[test]
    fn tridiagonal_matches_dense() {
        let lower = [0.0, -1.0, -1.0, -1.0];
        let diag = [2.0, 2.0, 2.0, 2.0];
        let upper = [-1.0, -1.0, -1.0, 0.0];
        let mut rhs = [1.0, 0.0, 0.0, 1.0];
        solve_tridiagonal(&lower, &diag, &upper, &mut rhs);
        for v in rhs {
            assert!((v - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn golden_finds_parabola_minimum() {
        let (x, _) = golden_min(|x| (x - 0.3) * (x - 0.3), -1.0, 1.0, 80);
        assert!((x - 0.3).abs() < 1e-8);
    }
}
