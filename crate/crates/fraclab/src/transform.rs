//! Modal transforms of the trace plane.
//!
//! Periodic axes use the DFT; zero-flux axes use the DCT-I computed through
//! an even extension. In both cases the plane stencils used elsewhere are
//! diagonal in the modal basis.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::grid::HalfSpaceGrid;

pub struct PlaneTransform {
    n: usize,
    nx: usize,
    periodic: bool,
    h: f64,
    l: f64,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for PlaneTransform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PlaneTransform").field("n", &self.n).field("nx", &self.nx).field("periodic", &self.periodic).finish()
    }
}

impl PlaneTransform {
    pub fn new(grid: &HalfSpaceGrid) -> Self {
        let nx = grid.nx();
        let len = if grid.periodic() { nx } else { 2 * (nx - 1) };
        let mut planner = FftPlanner::new();
        Self {
            n: grid.n(),
            nx,
            periodic: grid.periodic(),
            h: grid.h(),
            l: grid.l(),
            fwd: planner.plan_fft_forward(len),
            inv: planner.plan_fft_inverse(len),
        }
    }

    pub fn plane_len(&self) -> usize {
        self.nx.pow(self.n as u32)
    }

    /// Angular wavenumber of mode index `m` along one axis.
    pub fn axis_wavenumber(&self, m: usize) -> f64 {
        if self.periodic {
            let mm = if m <= self.nx / 2 { m as f64 } else { m as f64 - self.nx as f64 };
            std::f64::consts::PI * mm / self.l
        } else {
            std::f64::consts::PI * m as f64 / (2.0 * self.l)
        }
    }

    fn split(&self, p: usize) -> [usize; 2] {
        if self.n == 1 {
            [p, 0]
        } else {
            [p % self.nx, p / self.nx]
        }
    }

    /// `|k|` per mode, modal storage order.
    pub fn wavenumbers(&self) -> Vec<f64> {
        (0..self.plane_len())
            .map(|p| {
                let ix = self.split(p);
                let mut k2 = 0.0;
                for &i in ix.iter().take(self.n) {
                    let k = self.axis_wavenumber(i);
                    k2 += k * k;
                }
                k2.sqrt()
            })
            .collect()
    }

    /// Eigenvalues of the second-difference operator `-Δ_h` per mode.
    pub fn laplacian_eigenvalues(&self) -> Vec<f64> {
        let h2 = self.h * self.h;
        (0..self.plane_len())
            .map(|p| {
                let ix = self.split(p);
                ix.iter()
                    .take(self.n)
                    .map(|&i| (2.0 - 2.0 * (self.axis_wavenumber(i) * self.h).cos()) / h2)
                    .sum()
            })
            .collect()
    }

    fn axis_pass(&self, data: &mut [Complex64], ax: usize, forward: bool) {
        let nx = self.nx;
        let stride = if ax == 0 { 1 } else { nx };
        let lines = self.plane_len() / nx;
        let plan = if forward { &self.fwd } else { &self.inv };
        let len = plan.len();
        let mut buf = vec![Complex64::new(0.0, 0.0); len];
        for line in 0..lines {
            let start = if ax == 0 { line * nx } else { line };
            let idx = |i: usize| start + i * stride;
            if self.periodic {
                for (i, b) in buf.iter_mut().enumerate() {
                    *b = data[idx(i)];
                }
                plan.process(&mut buf);
                let scale = if forward { 1.0 } else { 1.0 / nx as f64 };
                for (i, b) in buf.iter().enumerate() {
                    data[idx(i)] = b * scale;
                }
            } else {
                for i in 0..nx {
                    buf[i] = data[idx(i)];
                }
                for i in 1..nx - 1 {
                    buf[len - i] = data[idx(i)];
                }
                plan.process(&mut buf);
                let scale = if forward { 1.0 } else { 1.0 / len as f64 };
                for i in 0..nx {
                    data[idx(i)] = buf[i] * scale;
                }
            }
        }
    }

    /// Plane values to modal coefficients.
    pub fn forward(&self, values: &[f64]) -> Vec<Complex64> {
        let mut c: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        for ax in 0..self.n {
            self.axis_pass(&mut c, ax, true);
        }
        c
    }

    /// Modal coefficients back to plane values (real part).
    pub fn inverse(&self, modes: &[Complex64]) -> Vec<f64> {
        let mut c = modes.to_vec();
        for ax in 0..self.n {
            self.axis_pass(&mut c, ax, false);
        }
        c.iter().map(|z| z.re).collect()
    }

    /// Applies a real per-mode multiplier.
    pub fn apply_multiplier(&self, values: &[f64], mult: &[f64]) -> Vec<f64> {
        let mut c = self.forward(values);
        for (z, m) in c.iter_mut().zip(mult) {
            *z *= *m;
        }
        self.inverse(&c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_both_kinds() {
        for periodic in [true, false] {
            for n in [1, 2] {
                let g = HalfSpaceGrid::new(n, 1.3, 12, 1.0, 2, 1.0, periodic).unwrap();
                let t = PlaneTransform::new(&g);
                let v: Vec<f64> = (0..g.plane_len()).map(|i| ((i * 7919) % 31) as f64 - 15.0).collect();
                let back = t.inverse(&t.forward(&v));
                for (a, b) in v.iter().zip(&back) {
                    assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn neumann_mode_is_eigenvector_of_second_difference() {
        let g = HalfSpaceGrid::new(1, 2.0, 17, 1.0, 2, 1.0, false).unwrap();
        let t = PlaneTransform::new(&g);
        let m = 3;
        let k = t.axis_wavenumber(m);
        let v: Vec<f64> = g.x().iter().map(|x| (k * (x + 2.0)).cos()).collect();
        let h = g.h();
        let lam = t.laplacian_eigenvalues()[m];
        for i in 0..17 {
            let left = if i == 0 { v[1] } else { v[i - 1] };
            let right = if i == 16 { v[15] } else { v[i + 1] };
            let lap = (2.0 * v[i] - left - right) / (h * h);
            assert!((lap - lam * v[i]).abs() < 1e-9);
        }
    }
}
