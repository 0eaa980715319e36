//! Poisson-kernel extension of traces into the half-space and extraction of
//! the weighted normal flux `-y^alpha ∂_y U` at `y = 0`.
//!
//! The kernel is `P(x, y) = C y^{1-alpha} / (|x|^2 + y^2)^{(n+1-alpha)/2}`.
//! Its Fourier transform in `x` is `Φ_s(|k| y)` with
//! `Φ_s(r) = 2^{1-s} r^s K_s(r) / Γ(s)`, so the periodized convolution of a
//! grid trace is applied mode by mode.

use std::collections::HashMap;
use std::sync::Arc;

use serde::Serialize;
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::grid::{inverse_weight_integral, FractionalOrder, HalfSpaceGrid, ScalarField, TraceField};
use crate::numerics::{integrate_half_line, linear_fit};
use crate::transform::PlaneTransform;

/// Normalizing constant `C_{n,alpha}` making `P(·, y)` a unit-mass kernel:
/// `1 / C = π^{n/2} Γ(e - n/2) / Γ(e)` with `e = (n + 1 - alpha)/2`.
pub fn kernel_normalization(order: FractionalOrder, n: usize) -> Result<f64> {
    if n != 1 && n != 2 {
        return Err(crate::error::invalid("n", n, "1 or 2"));
    }
    let e = 0.5 * (n as f64 + 1.0 - order.alpha());
    let half = 0.5 * n as f64;
    Ok(gamma(e) / (std::f64::consts::PI.powf(half) * gamma(e - half)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PoissonKernel {
    pub order: FractionalOrder,
    pub n: usize,
    pub c: f64,
}

impl PoissonKernel {
    pub fn new(order: FractionalOrder, n: usize) -> Result<Self> {
        Ok(Self { order, n, c: kernel_normalization(order, n)? })
    }

    /// `P(x, y)` at `|x| = r`.
    pub fn eval(&self, r: f64, y: f64) -> f64 {
        let a = self.order.alpha();
        self.c * y.powf(1.0 - a) * (r * r + y * y).powf(-0.5 * (self.n as f64 + 1.0 - a))
    }

    /// `∫ P(x, y) dx` by quadrature at the given height.
    pub fn mass(&self, y: f64) -> Result<f64> {
        let tol = 1e-13;
        let decay = 2.0 * self.order.s();
        if self.n == 1 {
            Ok(2.0 * integrate_half_line(|r| self.eval(r, y), y, decay, tol)?)
        } else {
            Ok(2.0 * std::f64::consts::PI * integrate_half_line(|r| r * self.eval(r, y), y, decay, tol)?)
        }
    }
}

/// Fourier symbol of the unit-mass kernel at `r = |k| y`.
///
/// `K_s` comes from `∫_0^∞ e^{-r cosh t} cosh(s t) dt`, evaluated by the
/// trapezoid rule, which converges geometrically for this integrand.
pub fn poisson_symbol(s: f64, r: f64) -> f64 {
    if r <= 0.0 {
        return 1.0;
    }
    if r > 700.0 {
        return 0.0;
    }
    let step = 0.2;
    let mut acc = 0.5;
    let mut k = 1;
    loop {
        let t = k as f64 * step;
        let expo = r * (t.cosh() - 1.0);
        if expo - s * t > 45.0 {
            break;
        }
        acc += (-expo).exp() * (s * t).cosh();
        k += 1;
    }
    let ks = step * acc * (-r).exp();
    2f64.powf(1.0 - s) / gamma(s) * r.powf(s) * ks
}

/// Extension of a trace by the Poisson kernel; level 0 is the trace itself.
///
/// Periodic grids use the periodized kernel, zero-flux grids the kernel of
/// the even reflection; both reduce to a multiplier per transform mode.
pub fn extend_poisson(trace: &TraceField, order: FractionalOrder) -> Result<ScalarField> {
    let grid = trace.grid_arc().clone();
    let t = PlaneTransform::new(&grid);
    let ks = t.wavenumbers();
    let modes = t.forward(trace.values());
    let np = grid.plane_len();
    let mut values = Vec::with_capacity(grid.len());
    values.extend_from_slice(trace.values());
    let mut sym: HashMap<u64, f64> = HashMap::new();
    for &y in &grid.y()[1..] {
        sym.clear();
        let mut c = modes.clone();
        for (z, k) in c.iter_mut().zip(&ks) {
            let m = *sym.entry(k.to_bits()).or_insert_with(|| poisson_symbol(order.s(), k * y));
            *z *= m;
        }
        values.extend(t.inverse(&c));
    }
    debug_assert_eq!(values.len(), np * grid.levels());
    ScalarField::new(grid, values)
}

/// Direct periodic lattice sum `Σ_z P(x - z, y) u(z) Δz` for the levels in
/// `levels`, with `images` periods on each side. The mass missing from the
/// truncated sum is assigned to the mean of the trace.
pub fn extend_poisson_direct(
    trace: &TraceField,
    order: FractionalOrder,
    levels: &[usize],
    images: usize,
) -> Result<Vec<Vec<f64>>> {
    let g = trace.grid();
    if !g.periodic() {
        return Err(Error::Precondition("direct kernel sums need a periodic grid".into()));
    }
    let kern = PoissonKernel::new(order, g.n())?;
    let nx = g.nx() as i64;
    let h = g.h();
    let u = trace.values();
    let mean = u.iter().sum::<f64>() / u.len() as f64;
    let span = (2 * images as i64 + 1) * nx;
    let half = span / 2;
    let mut out = Vec::with_capacity(levels.len());
    for &j in levels {
        let y = g.y()[j];
        if j == 0 {
            out.push(u.to_vec());
            continue;
        }
        let cell = h.powi(g.n() as i32);
        let w: Vec<f64> = if g.n() == 1 {
            (-half..=half).map(|m| kern.eval((m as f64 * h).abs(), y) * cell).collect()
        } else {
            let side = (2 * half + 1) as usize;
            let mut w = Vec::with_capacity(side * side);
            for m2 in -half..=half {
                for m1 in -half..=half {
                    let r = h * ((m1 * m1 + m2 * m2) as f64).sqrt();
                    w.push(kern.eval(r, y) * cell);
                }
            }
            w
        };
        let missing = 1.0 - w.iter().sum::<f64>();
        let side = 2 * half + 1;
        let mut level = vec![0.0; u.len()];
        for (p, slot) in level.iter_mut().enumerate() {
            let ix = g.split(p);
            let mut acc = 0.0;
            if g.n() == 1 {
                for (o, wk) in w.iter().enumerate() {
                    let m = o as i64 - half;
                    let q = (ix[0] as i64 - m).rem_euclid(nx) as usize;
                    acc += wk * u[q];
                }
            } else {
                for o2 in 0..side {
                    let q2 = (ix[1] as i64 - (o2 - half)).rem_euclid(nx) as usize;
                    for o1 in 0..side {
                        let q1 = (ix[0] as i64 - (o1 - half)).rem_euclid(nx) as usize;
                        acc += w[(o2 * side + o1) as usize] * u[q1 + g.nx() * q2];
                    }
                }
            }
            *slot = acc + missing * mean;
        }
        out.push(level);
    }
    Ok(out)
}

/// Flux extracted from a field, with the per-level values behind it.
#[derive(Debug, Clone)]
pub struct DtnFlux {
    pub flux: TraceField,
    /// Secant fluxes on the three lowest cells.
    pub levels: Vec<Vec<f64>>,
    /// Extrapolation abscissae `y^{1-alpha}` of those cells.
    pub abscissae: [f64; 3],
    /// Points whose three-cell sequence is not monotone.
    pub nonmonotone: usize,
    pub under_resolved: bool,
}

/// Number of levels at or below `Y/100`, counting `y_0`.
pub fn boundary_layer_levels(grid: &HalfSpaceGrid) -> usize {
    grid.y().iter().filter(|y| **y <= grid.y_max() / 100.0).count()
}

/// `-lim_{y→0} y^alpha ∂_y U`, extrapolated linearly in `y^{1-alpha}`.
///
/// On each of the three lowest cells the flux is the secant
/// `-(U_{j+1} - U_j) / ∫ y^{-alpha}`, exact for `a + b y^{1-alpha}`, placed at
/// the cell mean of `y^{1-alpha}`.
pub fn dtn_flux(u: &ScalarField, order: FractionalOrder) -> Result<DtnFlux> {
    let g = u.grid();
    let got = boundary_layer_levels(g);
    if got < 4 {
        return Err(Error::Precondition(format!(
            "flux extraction needs at least 4 levels below Y/100, grid has {got}"
        )));
    }
    let a = order.alpha();
    let y = g.y();
    let np = g.plane_len();
    let mut abscissae = [0.0; 3];
    let mut levels = Vec::with_capacity(3);
    for m in 0..3 {
        let r = inverse_weight_integral(y[m], y[m + 1], a);
        abscissae[m] = 0.5 * (y[m].powf(1.0 - a) + y[m + 1].powf(1.0 - a));
        levels.push((0..np).map(|p| -(u.at(p, m + 1) - u.at(p, m)) / r).collect::<Vec<f64>>());
    }
    let scale = levels.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-6 * scale + 1e-14;
    let mut nonmonotone = 0;
    let mut flux = Vec::with_capacity(np);
    for p in 0..np {
        let f = [levels[0][p], levels[1][p], levels[2][p]];
        let (d1, d2) = (f[1] - f[0], f[2] - f[1]);
        if d1 * d2 < 0.0 && d1.abs().min(d2.abs()) > tol {
            nonmonotone += 1;
        }
        let (c0, _) = linear_fit(&abscissae, &f);
        flux.push(c0);
    }
    Ok(DtnFlux {
        flux: TraceField::new(u.grid_arc().clone(), flux)?,
        levels,
        abscissae,
        nonmonotone,
        under_resolved: nonmonotone > 0,
    })
}

/// Factor relating the raw flux to `|k|^{2s}` on one mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DtnCalibration {
    pub factor: f64,
    pub wavenumber: f64,
}

/// Lowest nonconstant mode along `x_1` for the grid's boundary condition.
pub fn probe_mode(grid: &Arc<HalfSpaceGrid>) -> Result<(TraceField, f64)> {
    let l = grid.l();
    let k = if grid.periodic() {
        std::f64::consts::PI / l
    } else {
        std::f64::consts::PI / (2.0 * l)
    };
    let t = TraceField::from_fn(grid.clone(), |x| (k * (x[0] + l)).cos())?;
    Ok((t, k))
}

/// Calibrates the flux of an arbitrary extension route on the probe mode.
pub fn calibrate_dtn_with(
    order: FractionalOrder,
    grid: &Arc<HalfSpaceGrid>,
    extend: impl Fn(&TraceField) -> Result<ScalarField>,
) -> Result<DtnCalibration> {
    let (u, k) = probe_mode(grid)?;
    let f = dtn_flux(&extend(&u)?, order)?;
    let w = grid.x_masses();
    let num: f64 = f.flux.values().iter().zip(u.values()).zip(&w).map(|((a, b), m)| a * b * m).sum();
    let den: f64 = u.values().iter().zip(&w).map(|(b, m)| b * b * m).sum();
    Ok(DtnCalibration { factor: num / den / k.powf(2.0 * order.s()), wavenumber: k })
}

/// Calibration of the Poisson-kernel route.
pub fn calibrate_dtn(order: FractionalOrder, grid: &Arc<HalfSpaceGrid>) -> Result<DtnCalibration> {
    calibrate_dtn_with(order, grid, |t| extend_poisson(t, order))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symbol_half_order_is_exponential() {
        for r in [1e-6, 0.1, 1.0, 7.5, 40.0] {
            let p = poisson_symbol(0.5, r);
            assert!((p - (-r).exp()).abs() < 1e-13 * (1.0 + (-r).exp()) + 1e-15, "{r}: {p}");
        }
        assert!((poisson_symbol(0.3, 1e-12) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn constant_trace_extends_to_constant() {
        let g = Arc::new(HalfSpaceGrid::new(2, 1.0, 8, 2.0, 6, 1.5, false).unwrap());
        let o = FractionalOrder::new(0.3).unwrap();
        let u = extend_poisson(&TraceField::constant(g, 1.7), o).unwrap();
        assert!(u.values().iter().all(|v| (v - 1.7).abs() < 1e-13));
    }
}
