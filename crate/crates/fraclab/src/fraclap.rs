//! The fractional Laplacian of trace data, by principal-value quadrature and
//! by a Fourier multiplier.
//!
//! The quadrature evaluates the raw singular integral
//! `∫ (u(x) - u(x+z)) / |z|^{n+2s} dz` with no normalizing constant. Near the
//! singularity the integrand is symmetrized and replaced by an even Taylor
//! model fitted to the second differences; the remaining lattice is handled by
//! product integration against the exact kernel, summed over periodic images.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::{FractionalOrder, HalfSpaceGrid, TraceField};
use crate::numerics::{gauss_legendre, integrate, pairwise_sum, GL4};
use crate::transform::PlaneTransform;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PVQuadratureConfig {
    /// Radius, in grid spacings, of the Taylor-modelled near field.
    #[serde(default = "default_inner")]
    pub inner_radius_cells: usize,
    /// Truncation radius of the tail; `None` sums the full image lattice.
    #[serde(default)]
    pub far_cutoff: Option<f64>,
    /// Relative size of the neglected image tail.
    #[serde(default = "default_image_tol")]
    pub image_tol: f64,
}

fn default_inner() -> usize {
    2
}
fn default_image_tol() -> f64 {
    1e-12
}

impl Default for PVQuadratureConfig {
    fn default() -> Self {
        Self { inner_radius_cells: 2, far_cutoff: None, image_tol: 1e-12 }
    }
}

impl PVQuadratureConfig {
    fn validate(&self, h: f64) -> Result<()> {
        if self.inner_radius_cells < 1 {
            return Err(invalid("inner_radius_cells", self.inner_radius_cells, ">= 1"));
        }
        if let Some(c) = self.far_cutoff {
            if !(c > self.inner_radius_cells as f64 * h) {
                return Err(invalid("far_cutoff", c, "greater than the near-field radius"));
            }
        }
        if !(self.image_tol > 0.0) {
            return Err(invalid("image_tol", self.image_tol, "> 0"));
        }
        Ok(())
    }
}

/// Precomputed quadrature for one `(s, grid)` pair.
#[derive(Debug, Clone)]
pub struct PVOperator {
    n: usize,
    nx: usize,
    /// Periodic convolution kernel over plane offsets.
    kernel: Vec<f64>,
    kernel_sum: f64,
    /// 1D near-field weights on second differences at offsets `1..=M`.
    near_weights: Vec<f64>,
    /// 2D near-field factor multiplying the five-point Laplacian.
    near_laplacian: f64,
    /// 2D coefficient of `u(x) - mean(u)` from the continuum tail.
    tail_mean: f64,
    h: f64,
}

fn panel_weights(a: f64, b: f64, p: f64) -> (f64, f64) {
    let wl = gauss_legendre(|z| (b - z) / (b - a) * z.powf(-p), a, b);
    let wr = gauss_legendre(|z| (z - a) / (b - a) * z.powf(-p), a, b);
    (wl, wr)
}

impl PVOperator {
    pub fn new(grid: &HalfSpaceGrid, order: FractionalOrder, cfg: &PVQuadratureConfig) -> Result<Self> {
        if !grid.periodic() {
            return Err(Error::Precondition(
                "principal-value quadrature needs a periodic grid (no tail model for open data)".into(),
            ));
        }
        cfg.validate(grid.h())?;
        match grid.n() {
            1 => Self::new_1d(grid, order.s(), cfg),
            _ => Self::new_2d(grid, order.s(), cfg),
        }
    }

    fn new_1d(grid: &HalfSpaceGrid, s: f64, cfg: &PVQuadratureConfig) -> Result<Self> {
        let nx = grid.nx();
        let h = grid.h();
        let m0 = cfg.inner_radius_cells;
        let delta = m0 as f64 * h;
        let p = 1.0 + 2.0 * s;

        // Even Taylor model S(z) = Σ_k a_k z^{2k}, k = 1..M, through S(jh).
        let vand = nalgebra::DMatrix::from_fn(m0, m0, |j, k| ((j + 1) as f64 * h).powi(2 * (k as i32 + 1)));
        let moments = nalgebra::DVector::from_fn(m0, |k, _| {
            let e = 2.0 * (k as f64 + 1.0) - 2.0 * s;
            delta.powf(e) / e
        });
        let near = vand
            .transpose()
            .lu()
            .solve(&moments)
            .ok_or_else(|| Error::Data("singular near-field Taylor system".into()))?;
        let near_weights = near.iter().copied().collect();

        let mut kernel = vec![0.0; nx];
        let cutoff = cfg.far_cutoff.unwrap_or(f64::INFINITY);
        let explicit_images = 16usize;
        let m_max = explicit_images * nx;
        let mut add = |m: usize, w: f64| {
            kernel[m % nx] += w;
            kernel[(nx - m % nx) % nx] += w;
        };
        let mut prev_right = 0.0;
        for m in m0..m_max {
            let a = m as f64 * h;
            if a >= cutoff {
                break;
            }
            let (wl, wr) = panel_weights(a, a + h, p);
            add(m, wl + prev_right);
            prev_right = wr;
        }
        if cutoff.is_infinite() {
            let a = m_max as f64 * h;
            add(m_max, prev_right + panel_weights(a, a + h, p).0);
            // Euler-Maclaurin sum of h z^{-p} over nodes beyond m_max, per residue.
            let step = nx as f64 * h;
            for r in 0..nx {
                let first = m_max + if r == 0 { nx } else { r };
                let z0 = first as f64 * h;
                let integral = h * z0.powf(1.0 - p) / ((p - 1.0) * step);
                let f0 = h * z0.powf(-p);
                let d1 = -p * step * h * z0.powf(-p - 1.0);
                let d3 = -p * (p + 1.0) * (p + 2.0) * step.powi(3) * h * z0.powf(-p - 3.0);
                let tail = integral + 0.5 * f0 - d1 / 12.0 + d3 / 720.0;
                kernel[r] += tail;
                kernel[(nx - r) % nx] += tail;
            }
        }
        let kernel_sum = pairwise_sum(&kernel);
        Ok(Self { n: 1, nx, kernel, kernel_sum, near_weights, near_laplacian: 0.0, tail_mean: 0.0, h })
    }

    fn new_2d(grid: &HalfSpaceGrid, s: f64, cfg: &PVQuadratureConfig) -> Result<Self> {
        let nx = grid.nx();
        let h = grid.h();
        let m0 = cfg.inner_radius_cells as i64;
        let a = (m0 as f64 + 0.5) * h;
        let quarter = std::f64::consts::FRAC_PI_4;
        // ∫ over the square of half-width a of |z|^{-2s}.
        let sq = 8.0 * integrate(|t| (a / t.cos()).powf(2.0 - 2.0 * s) / (2.0 - 2.0 * s), 0.0, quarter, 1e-13)?;
        let near_laplacian = -0.25 * sq;

        let images: i64 = 3;
        let n = nx as i64;
        let half = (images * n) + n / 2;
        let cutoff = cfg.far_cutoff.unwrap_or(f64::INFINITY);
        let p = 2.0 + 2.0 * s;
        let mut kernel = vec![0.0; nx * nx];
        for m2 in -half..=half {
            for m1 in -half..=half {
                if m1.abs().max(m2.abs()) <= m0 {
                    continue;
                }
                let (c1, c2) = (m1 as f64 * h, m2 as f64 * h);
                if (c1 * c1 + c2 * c2).sqrt() > cutoff {
                    continue;
                }
                let mut w = 0.0;
                for &(x1, w1) in GL4.iter() {
                    for &(x2, w2) in GL4.iter() {
                        let z1 = c1 + 0.5 * h * x1;
                        let z2 = c2 + 0.5 * h * x2;
                        w += w1 * w2 * (z1 * z1 + z2 * z2).powf(-0.5 * p);
                    }
                }
                w *= 0.25 * h * h;
                let r1 = m1.rem_euclid(n) as usize;
                let r2 = m2.rem_euclid(n) as usize;
                kernel[r1 + nx * r2] += w;
            }
        }
        let tail_mean = if cutoff.is_infinite() {
            let b = (half as f64 + 0.5) * h;
            8.0 * integrate(|t| (b / t.cos()).powf(-2.0 * s) / (2.0 * s), 0.0, quarter, 1e-13)?
        } else {
            0.0
        };
        let kernel_sum = pairwise_sum(&kernel);
        Ok(Self { n: 2, nx, kernel, kernel_sum, near_weights: vec![], near_laplacian, tail_mean, h })
    }

    pub fn apply(&self, u: &TraceField, transform: &PlaneTransform) -> Result<TraceField> {
        let g = u.grid();
        if g.nx() != self.nx || g.n() != self.n {
            return Err(Error::GridMismatch("operator built for a different grid"));
        }
        let v = u.values();
        let np = v.len();
        // Periodic convolution with the kernel through the DFT.
        let kh = transform.forward(&self.kernel);
        let mut uh = transform.forward(v);
        for (a, b) in uh.iter_mut().zip(&kh) {
            *a *= b.conj();
        }
        let conv = transform.inverse(&uh);
        let mean = pairwise_sum(v) / np as f64;
        let nx = self.nx;
        let mut out = vec![0.0; np];
        for p in 0..np {
            let far = self.kernel_sum * v[p] - conv[p];
            let near = if self.n == 1 {
                let i = p;
                let mut acc = 0.0;
                for (j, w) in self.near_weights.iter().enumerate() {
                    let jj = j + 1;
                    let s2 = v[(i + jj) % nx] + v[(i + nx - jj % nx) % nx] - 2.0 * v[i];
                    acc -= w * s2;
                }
                acc
            } else {
                let (i1, i2) = (p % nx, p / nx);
                let at = |a: usize, b: usize| v[a + nx * b];
                let lap = (at((i1 + 1) % nx, i2) + at((i1 + nx - 1) % nx, i2) + at(i1, (i2 + 1) % nx)
                    + at(i1, (i2 + nx - 1) % nx)
                    - 4.0 * v[p])
                    / (self.h * self.h);
                self.near_laplacian * lap
            };
            out[p] = near + far + self.tail_mean * (v[p] - mean);
        }
        TraceField::new(u.grid_arc().clone(), out)
    }
}

/// Raw principal-value fractional Laplacian of a periodic trace.
pub fn fraclap_pv(u: &TraceField, order: FractionalOrder, cfg: &PVQuadratureConfig) -> Result<TraceField> {
    let op = PVOperator::new(u.grid(), order, cfg)?;
    op.apply(u, &PlaneTransform::new(u.grid()))
}

/// Multiplies every Fourier mode by `|k|^exponent` (`exponent` in `(0, 2]`).
pub fn spectral_multiplier(u: &TraceField, exponent: f64) -> Result<TraceField> {
    if !u.grid().periodic() {
        return Err(Error::Precondition("spectral multiplier needs a periodic grid".into()));
    }
    if !(exponent > 0.0 && exponent <= 2.0) {
        return Err(invalid("exponent", exponent, "0 < exponent <= 2"));
    }
    let t = PlaneTransform::new(u.grid());
    let mult: Vec<f64> = t.wavenumbers().iter().map(|k| if *k == 0.0 { 0.0 } else { k.powf(exponent) }).collect();
    TraceField::new(u.grid_arc().clone(), t.apply_multiplier(u.values(), &mult))
}

/// Spectral `(-Δ)^s`: multiplier `|k|^{2s}`, zero mode sent to 0.
pub fn fraclap_spectral(u: &TraceField, order: FractionalOrder) -> Result<TraceField> {
    spectral_multiplier(u, 2.0 * order.s())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormalizationRatio {
    pub ratio: f64,
    /// `(max - min) / mean` over the probed modes.
    pub dispersion: f64,
    pub per_mode: Vec<f64>,
    pub modes: Vec<usize>,
}

/// Ratio between the raw quadrature and `|k|^{2s}` on the three lowest modes.
pub fn pv_normalization_ratio(order: FractionalOrder, grid: &std::sync::Arc<HalfSpaceGrid>) -> Result<NormalizationRatio> {
    pv_normalization_ratio_with(order, grid, 0.0, &PVQuadratureConfig::default())
}

/// As [`pv_normalization_ratio`], probing `cos(k (x + shift))`.
pub fn pv_normalization_ratio_with(
    order: FractionalOrder,
    grid: &std::sync::Arc<HalfSpaceGrid>,
    shift: f64,
    cfg: &PVQuadratureConfig,
) -> Result<NormalizationRatio> {
    if grid.n() != 1 || !grid.periodic() {
        return Err(Error::Precondition("normalization ratio needs a periodic 1D grid".into()));
    }
    let op = PVOperator::new(grid, order, cfg)?;
    let tr = PlaneTransform::new(grid);
    let modes = vec![1usize, 2, 3];
    let mut per_mode = Vec::new();
    for &m in &modes {
        let k = std::f64::consts::PI * m as f64 / grid.l();
        let u = TraceField::from_fn(grid.clone(), |x| (k * (x[0] + shift)).cos())?;
        let lu = op.apply(&u, &tr)?;
        let num: f64 = lu.values().iter().zip(u.values()).map(|(a, b)| a * b).sum();
        let den: f64 = u.values().iter().map(|b| b * b).sum::<f64>() * k.powf(2.0 * order.s());
        per_mode.push(num / den);
    }
    let mean = per_mode.iter().sum::<f64>() / per_mode.len() as f64;
    let lo = per_mode.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = per_mode.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(NormalizationRatio { ratio: mean, dispersion: (hi - lo) / mean, per_mode, modes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn grid(nx: usize) -> Arc<HalfSpaceGrid> {
        Arc::new(HalfSpaceGrid::new(1, PI, nx, 1.0, 2, 1.0, true).unwrap())
    }

    #[test]
    fn constants_map_to_zero() {
        let g = grid(64);
        let c = TraceField::constant(g, 2.5);
        for s in [0.25, 0.5, 0.75] {
            let o = FractionalOrder::new(s).unwrap();
            let out = fraclap_pv(&c, o, &PVQuadratureConfig::default()).unwrap();
            assert!(out.values().iter().all(|v| v.abs() < 1e-9), "s = {s}");
            assert!(fraclap_spectral(&c, o).unwrap().values().iter().all(|v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn spectral_single_mode_and_laplacian_limit() {
        let g = grid(32);
        let u = TraceField::from_fn(g.clone(), |x| (3.0 * x[0]).cos()).unwrap();
        let o = FractionalOrder::new(0.3).unwrap();
        let out = fraclap_spectral(&u, o).unwrap();
        for (a, b) in out.values().iter().zip(u.values()) {
            assert!((a - 3f64.powf(0.6) * b).abs() < 1e-12);
        }
        let lap = spectral_multiplier(&u, 2.0).unwrap();
        for (a, b) in lap.values().iter().zip(u.values()) {
            assert!((a - 9.0 * b).abs() < 1e-11);
        }
    }

    #[test]
    fn non_periodic_is_rejected() {
        let g = Arc::new(HalfSpaceGrid::new(1, 1.0, 16, 1.0, 2, 1.0, false).unwrap());
        let u = TraceField::constant(g, 1.0);
        let o = FractionalOrder::new(0.5).unwrap();
        assert!(fraclap_pv(&u, o, &PVQuadratureConfig::default()).is_err());
        assert!(fraclap_spectral(&u, o).is_err());
    }
}
