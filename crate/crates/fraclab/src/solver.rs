//! Conductance discretization of `div(y^alpha ∇U) = 0` and the coupled
//! boundary system.
//!
//! The operator in flux form is `A = M_y ⊗ L_x + T_y ⊗ M_x`, where `M_x` holds
//! the x-cell masses, `L_x` the mass-weighted horizontal Laplacian (periodic
//! or reflecting), `M_y` the exact dual-cell integrals of `y^alpha` and `T_y`
//! the vertical resistor chain with conductances `(∫ y^{-alpha})^{-1}`.
//! `M_x^{-1} L_x` is diagonal in the plane transform, so each mode reduces to
//! one tridiagonal system in `y`; this serves as the CG preconditioner.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::extension::{calibrate_dtn_with, dtn_flux, DtnCalibration};
use crate::grid::{diff_x, inverse_weight_integral, same_grid, FractionalOrder, HalfSpaceGrid, ScalarField, TraceField};
use crate::numerics::{dot, linear_fit, norm2, solve_tridiagonal};
use crate::potential::{eval_derivatives, CurvePotential, Poly, PotentialRef};
use crate::transform::PlaneTransform;

/// Edge conductances of the weighted operator for one weight exponent.
#[derive(Debug)]
pub struct WeightedStencil {
    grid: Arc<HalfSpaceGrid>,
    alpha: f64,
    x_mass: Vec<f64>,
    y_mass: Vec<f64>,
    vertical: Vec<f64>,
    eig: Vec<f64>,
    transform: PlaneTransform,
}

impl WeightedStencil {
    pub fn new(grid: Arc<HalfSpaceGrid>, order: FractionalOrder) -> Self {
        let a = order.alpha();
        let y = grid.y();
        let vertical = (0..grid.ny()).map(|j| 1.0 / inverse_weight_integral(y[j], y[j + 1], a)).collect();
        let transform = PlaneTransform::new(&grid);
        Self {
            x_mass: grid.x_masses(),
            y_mass: grid.y_masses(a),
            vertical,
            eig: transform.laplacian_eigenvalues(),
            transform,
            alpha: a,
            grid,
        }
    }

    pub fn grid(&self) -> &Arc<HalfSpaceGrid> {
        &self.grid
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    /// Conductance of the vertical edge between levels `j` and `j + 1` (per unit x-area).
    pub fn vertical_conductance(&self, j: usize) -> f64 {
        self.vertical[j]
    }
    /// Conductance of horizontal edges at level `j` (per unit transverse area).
    pub fn horizontal_conductance(&self, j: usize) -> f64 {
        self.y_mass[j] / (self.grid.h() * self.grid.h())
    }

    /// Reflecting or periodic `-Δ_h` of one plane.
    fn plane_laplacian(&self, u: &[f64], out: &mut [f64]) {
        let g = &self.grid;
        let nx = g.nx();
        let h2 = g.h() * g.h();
        for p in 0..u.len() {
            let ix = g.split(p);
            let mut acc = 0.0;
            for (ax, &i) in ix.iter().enumerate().take(g.n()) {
                let stride = if ax == 0 { 1 } else { nx };
                let base = p - i * stride;
                let (l, r) = if g.periodic() {
                    ((i + nx - 1) % nx, (i + 1) % nx)
                } else if i == 0 {
                    (1, 1)
                } else if i == nx - 1 {
                    (nx - 2, nx - 2)
                } else {
                    (i - 1, i + 1)
                };
                acc += 2.0 * u[p] - u[base + l * stride] - u[base + r * stride];
            }
            out[p] = acc / h2;
        }
    }

    /// Flux-form operator applied to a full field (all levels).
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let np = self.grid.plane_len();
        let ny = self.grid.ny();
        let mut out = vec![0.0; u.len()];
        let mut lap = vec![0.0; np];
        for j in 0..=ny {
            let lv = &u[j * np..(j + 1) * np];
            self.plane_laplacian(lv, &mut lap);
            for p in 0..np {
                let mut v = self.y_mass[j] * lap[p];
                if j > 0 {
                    v += self.vertical[j - 1] * (lv[p] - u[(j - 1) * np + p]);
                }
                if j < ny {
                    v += self.vertical[j] * (lv[p] - u[(j + 1) * np + p]);
                }
                out[j * np + p] = self.x_mass[p] * v;
            }
        }
        out
    }

    /// Discrete Dirichlet form `a(u, w)`, approximating `∫ y^alpha ∇u·∇w`.
    pub fn bilinear(&self, u: &[f64], w: &[f64]) -> f64 {
        dot(w, &self.apply(u))
    }

    /// Exact inverse of the operator restricted to levels `1..=ny` (level 0 held at 0).
    fn modal_solve(&self, rhs: &[f64]) -> Vec<f64> {
        let np = self.grid.plane_len();
        let ny = self.grid.ny();
        let mut modes: Vec<Vec<Complex64>> = (0..ny)
            .map(|m| {
                let lv: Vec<f64> = (0..np).map(|p| rhs[m * np + p] / self.x_mass[p]).collect();
                self.transform.forward(&lv)
            })
            .collect();
        let lower: Vec<f64> = (0..ny).map(|m| if m == 0 { 0.0 } else { -self.vertical[m] }).collect();
        let upper: Vec<f64> = (0..ny).map(|m| if m + 1 < ny { -self.vertical[m + 1] } else { 0.0 }).collect();
        let mut diag = vec![0.0; ny];
        let mut re = vec![0.0; ny];
        let mut im = vec![0.0; ny];
        for k in 0..np {
            for m in 0..ny {
                let j = m + 1;
                let mut d = self.vertical[j - 1] + self.y_mass[j] * self.eig[k];
                if j < ny {
                    d += self.vertical[j];
                }
                diag[m] = d;
                re[m] = modes[m][k].re;
                im[m] = modes[m][k].im;
            }
            solve_tridiagonal(&lower, &diag, &upper, &mut re);
            solve_tridiagonal(&lower, &diag, &upper, &mut im);
            for m in 0..ny {
                modes[m][k] = Complex64::new(re[m], im[m]);
            }
        }
        let mut out = Vec::with_capacity(ny * np);
        for m in modes {
            out.extend(self.transform.inverse(&m));
        }
        out
    }

    /// Operator restricted to the free levels `1..=ny`.
    fn apply_free(&self, x: &[f64]) -> Vec<f64> {
        let np = self.grid.plane_len();
        let mut full = vec![0.0; np];
        full.extend_from_slice(x);
        let mut y = self.apply(&full);
        y.drain(..np);
        y
    }

    pub fn transform(&self) -> &PlaneTransform {
        &self.transform
    }
}

/// Linear solve outcome.
#[derive(Debug, Clone)]
pub struct LinearSolve {
    pub field: ScalarField,
    pub iterations: usize,
    /// Relative residual after each iteration.
    pub residuals: Vec<f64>,
}

/// Solves `A U = 0` on levels `1..=ny` with `U(·, 0) = trace`, zero flux at
/// `y = Y` and the grid's lateral condition, by preconditioned CG.
pub fn solve_dirichlet_with(stencil: &WeightedStencil, trace: &TraceField, tol: f64) -> Result<LinearSolve> {
    same_grid(stencil.grid(), trace.grid_arc())?;
    let np = stencil.grid.plane_len();
    let ny = stencil.grid.ny();
    let mut lifted = trace.values().to_vec();
    lifted.resize(np * (ny + 1), 0.0);
    let b: Vec<f64> = stencil.apply(&lifted)[np..].iter().map(|v| -v).collect();
    let bnorm = norm2(&b);
    let mut x = vec![0.0; np * ny];
    let mut residuals = Vec::new();
    if bnorm > 0.0 {
        let mut r = b.clone();
        let mut z = stencil.modal_solve(&r);
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        for _ in 0..200 {
            let ap = stencil.apply_free(&p);
            let step = rz / dot(&p, &ap);
            for i in 0..x.len() {
                x[i] += step * p[i];
                r[i] -= step * ap[i];
            }
            let rel = norm2(&r) / bnorm;
            residuals.push(rel);
            if rel <= tol {
                break;
            }
            if residuals.len() >= 5 && rel > 0.5 * residuals[residuals.len() - 5] {
                return Err(Error::NonConvergence { stage: "weighted dirichlet solve", residuals });
            }
            z = stencil.modal_solve(&r);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..p.len() {
                p[i] = z[i] + beta * p[i];
            }
        }
        if residuals.last().is_some_and(|r| *r > tol) {
            return Err(Error::NonConvergence { stage: "weighted dirichlet solve", residuals });
        }
    }
    let mut values = trace.values().to_vec();
    values.extend(x);
    Ok(LinearSolve { field: ScalarField::new(trace.grid_arc().clone(), values)?, iterations: residuals.len(), residuals })
}

/// α-harmonic extension of a trace by the direct weighted solve.
pub fn solve_weighted_dirichlet(trace: &TraceField, order: FractionalOrder, tol: f64) -> Result<ScalarField> {
    let st = WeightedStencil::new(trace.grid_arc().clone(), order);
    Ok(solve_dirichlet_with(&st, trace, tol)?.field)
}

/// Calibration of the flux of the weighted-solve route.
pub fn calibrate_weighted(order: FractionalOrder, grid: &Arc<HalfSpaceGrid>, tol: f64) -> Result<DtnCalibration> {
    let st = WeightedStencil::new(grid.clone(), order);
    calibrate_dtn_with(order, grid, |t| Ok(solve_dirichlet_with(&st, t, tol)?.field))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveConfig {
    #[serde(default = "d_damping")]
    pub damping: f64,
    #[serde(default = "d_outer")]
    pub max_outer_iters: usize,
    #[serde(default = "d_linear")]
    pub linear_tol: f64,
    #[serde(default = "d_nonlinear")]
    pub nonlinear_tol: f64,
    /// Restrict iterates to traces odd under `x_a -> -x_a`.
    #[serde(default)]
    pub odd_axis: Option<usize>,
}

fn d_damping() -> f64 {
    0.8
}
fn d_outer() -> usize {
    2000
}
fn d_linear() -> f64 {
    1e-11
}
fn d_nonlinear() -> f64 {
    1e-8
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self { damping: d_damping(), max_outer_iters: d_outer(), linear_tol: d_linear(), nonlinear_tol: d_nonlinear(), odd_axis: None }
    }
}

impl SolveConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(invalid("damping", self.damping, "0 < damping <= 1"));
        }
        if self.max_outer_iters == 0 {
            return Err(invalid("max_outer_iters", 0, ">= 1"));
        }
        if !(self.linear_tol > 0.0) {
            return Err(invalid("linear_tol", self.linear_tol, "> 0"));
        }
        if !(self.nonlinear_tol > 0.0) {
            return Err(invalid("nonlinear_tol", self.nonlinear_tol, "> 0"));
        }
        if let Some(a) = self.odd_axis {
            if a >= n {
                return Err(invalid("odd_axis", a, "an x-axis index below n"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    /// `max(sup|r_U|, sup|r_V|)` per outer step.
    pub residuals: Vec<f64>,
    pub outer_iterations: usize,
    pub damping: f64,
    pub calibration: [f64; 2],
    pub boundary_residual: [f64; 2],
    pub linear_residual: [f64; 2],
}

#[derive(Debug, Clone)]
pub struct SolutionPair {
    pub u: ScalarField,
    pub v: ScalarField,
    pub orders: (FractionalOrder, FractionalOrder),
    pub potential: PotentialRef,
    pub report: SolveReport,
}

impl SolutionPair {
    /// Wraps given fields (for example exact synthetic data) without solving.
    pub fn from_fields(u: ScalarField, v: ScalarField, orders: (FractionalOrder, FractionalOrder), potential: PotentialRef) -> Result<Self> {
        same_grid(u.grid_arc(), v.grid_arc())?;
        let report = SolveReport {
            residuals: vec![],
            outer_iterations: 0,
            damping: 0.0,
            calibration: [f64::NAN; 2],
            boundary_residual: [f64::NAN; 2],
            linear_residual: [f64::NAN; 2],
        };
        Ok(Self { u, v, orders, potential, report })
    }

    pub fn grid(&self) -> &Arc<HalfSpaceGrid> {
        self.u.grid_arc()
    }

    pub fn swapped(&self) -> Self {
        Self {
            u: self.v.clone(),
            v: self.u.clone(),
            orders: (self.orders.1, self.orders.0),
            potential: Arc::new(crate::potential::Swapped(self.potential.clone())),
            report: self.report.clone(),
        }
    }
}

/// Index of the mirror image of plane point `p` under `x_axis -> -x_axis`.
pub fn mirror_index(grid: &HalfSpaceGrid, p: usize, axis: usize) -> usize {
    let mut ix = grid.split(p);
    let nx = grid.nx();
    ix[axis] = if grid.periodic() { (nx - ix[axis]) % nx } else { nx - 1 - ix[axis] };
    grid.join(ix)
}

fn odd_part(grid: &HalfSpaceGrid, v: &[f64], axis: usize) -> Vec<f64> {
    (0..v.len()).map(|p| 0.5 * (v[p] - v[mirror_index(grid, p, axis)])).collect()
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Outer steps without a new best residual after which the iteration is
/// declared stagnant.
pub const STAGNATION_WINDOW: usize = 100;

/// Damped, spectrally preconditioned fixed point for the coupled system.
///
/// Each step extends both traces by the weighted solve, measures the boundary
/// residuals `r = flux - F_i(u, v)` and updates `u <- u - damping P r` with
/// `P = (1 + d |k|^{2s})^{-1}`, `d` the measured flux factor. A residual
/// blow-up restores the best iterate and halves the damping, at most 4 times.
pub fn solve_coupled_system(
    potential: PotentialRef,
    orders: (FractionalOrder, FractionalOrder),
    initial: (&TraceField, &TraceField),
    cfg: &SolveConfig,
) -> Result<SolutionPair> {
    let grid = initial.0.grid_arc().clone();
    same_grid(&grid, initial.1.grid_arc())?;
    cfg.validate(grid.n())?;
    let st = [WeightedStencil::new(grid.clone(), orders.0), WeightedStencil::new(grid.clone(), orders.1)];
    let ord = [orders.0, orders.1];
    let cal = [
        calibrate_dtn_with(ord[0], &grid, |t| Ok(solve_dirichlet_with(&st[0], t, cfg.linear_tol)?.field))?,
        calibrate_dtn_with(ord[1], &grid, |t| Ok(solve_dirichlet_with(&st[1], t, cfg.linear_tol)?.field))?,
    ];
    let ks = st[0].transform().wavenumbers();
    let precond: Vec<Vec<f64>> = (0..2)
        .map(|i| ks.iter().map(|k| 1.0 / (1.0 + cal[i].factor * k.powf(2.0 * ord[i].s()))).collect())
        .collect();
    let sym = |v: Vec<f64>| match cfg.odd_axis {
        Some(a) => odd_part(&grid, &v, a),
        None => v,
    };
    let mut traces = [sym(initial.0.values().to_vec()), sym(initial.1.values().to_vec())];
    let mut damping = cfg.damping;
    let mut halvings = 0;
    let mut best: Option<(f64, [Vec<f64>; 2])> = None;
    let mut best_at = 0;
    let mut residuals = Vec::new();
    loop {
        let tu = TraceField::new(grid.clone(), traces[0].clone())?;
        let tv = TraceField::new(grid.clone(), traces[1].clone())?;
        let su = solve_dirichlet_with(&st[0], &tu, cfg.linear_tol)?;
        let sv = solve_dirichlet_with(&st[1], &tv, cfg.linear_tol)?;
        let fu = dtn_flux(&su.field, ord[0])?;
        let fv = dtn_flux(&sv.field, ord[1])?;
        let d = eval_derivatives(potential.as_ref(), &tu, &tv)?;
        let r: [Vec<f64>; 2] = [
            fu.flux.values().iter().zip(d.f1.values()).map(|(a, b)| a - b).collect(),
            fv.flux.values().iter().zip(d.f2.values()).map(|(a, b)| a - b).collect(),
        ];
        let res = sup(&r[0]).max(sup(&r[1]));
        residuals.push(res);
        if res <= cfg.nonlinear_tol {
            let report = SolveReport {
                outer_iterations: residuals.len(),
                residuals,
                damping,
                calibration: [cal[0].factor, cal[1].factor],
                boundary_residual: [sup(&r[0]), sup(&r[1])],
                linear_residual: [
                    su.residuals.last().copied().unwrap_or(0.0),
                    sv.residuals.last().copied().unwrap_or(0.0),
                ],
            };
            return Ok(SolutionPair { u: su.field, v: sv.field, orders, potential, report });
        }
        let best_res = best.as_ref().map_or(f64::INFINITY, |b| b.0);
        if !res.is_finite() || res > 10.0 * best_res {
            halvings += 1;
            if halvings > 4 {
                return Err(Error::Divergence { stage: "coupled fixed point", damping });
            }
            damping *= 0.5;
            traces = best.as_ref().expect("a finite iterate precedes divergence").1.clone();
            continue;
        }
        if res < best_res {
            best = Some((res, traces.clone()));
            best_at = residuals.len();
        }
        if residuals.len() >= cfg.max_outer_iters || residuals.len() - best_at > STAGNATION_WINDOW {
            return Err(Error::NonConvergence { stage: "coupled fixed point", residuals });
        }
        for i in 0..2 {
            let step = st[i].transform().apply_multiplier(&r[i], &precond[i]);
            let next: Vec<f64> = traces[i].iter().zip(&step).map(|(t, s)| t - damping * s).collect();
            traces[i] = sym(next);
        }
    }
}

/// Discrete weak residuals `a(U, ξ_1) - ∫ F_1 ξ_1` and the `V` counterpart.
pub fn weak_form_residual(pair: &SolutionPair, xi1: &ScalarField, xi2: &ScalarField) -> Result<(f64, f64)> {
    same_grid(pair.grid(), xi1.grid_arc())?;
    same_grid(pair.grid(), xi2.grid_arc())?;
    let st1 = WeightedStencil::new(pair.grid().clone(), pair.orders.0);
    let st2 = WeightedStencil::new(pair.grid().clone(), pair.orders.1);
    let d = eval_derivatives(pair.potential.as_ref(), &pair.u.trace(), &pair.v.trace())?;
    let xm = pair.grid().x_masses();
    let np = pair.grid().plane_len();
    let b1: f64 = (0..np).map(|p| xm[p] * d.f1.values()[p] * xi1.values()[p]).sum();
    let b2: f64 = (0..np).map(|p| xm[p] * d.f2.values()[p] * xi2.values()[p]).sum();
    Ok((st1.bilinear(pair.u.values(), xi1.values()) - b1, st2.bilinear(pair.v.values(), xi2.values()) - b2))
}

/// Residuals of the equations satisfied by `U_{x_j}, V_{x_j}` against `φ`,
/// with masked boundary points left out.
pub fn linearized_identity_residual(pair: &SolutionPair, axis: usize, phi: &ScalarField) -> Result<(f64, f64)> {
    let g = pair.grid().clone();
    same_grid(&g, phi.grid_arc())?;
    if axis >= g.n() {
        return Err(invalid("axis", axis, "an x-axis index below n"));
    }
    let ux = diff_x(&g, pair.u.values(), axis);
    let vx = diff_x(&g, pair.v.values(), axis);
    let st1 = WeightedStencil::new(g.clone(), pair.orders.0);
    let st2 = WeightedStencil::new(g.clone(), pair.orders.1);
    let d = eval_derivatives(pair.potential.as_ref(), &pair.u.trace(), &pair.v.trace())?;
    let xm = g.x_masses();
    let (mut b1, mut b2) = (0.0, 0.0);
    for p in 0..g.plane_len() {
        if let (Some(f11), Some(f12), Some(f22)) = (d.f11.get(p), d.f12.get(p), d.f22.get(p)) {
            b1 += xm[p] * (f11 * ux[p] + f12 * vx[p]) * phi.values()[p];
            b2 += xm[p] * (f12 * ux[p] + f22 * vx[p]) * phi.values()[p];
        }
    }
    Ok((st1.bilinear(&ux, phi.values()) - b1, st2.bilinear(&vx, phi.values()) - b2))
}

/// Manufactured potential whose exact discrete solution is `(u*, P(u*))`.
#[derive(Debug, Clone)]
pub struct Manufactured {
    pub potential: CurvePotential,
    pub u: TraceField,
    pub v: TraceField,
    /// Sup misfit of the polynomial flux fits.
    pub fit_residual: f64,
}

/// Builds a curve potential from a target trace `u*` (injective along the
/// grid's last axis) and the curve `v* = P(u*)`.
///
/// Fluxes of both targets are measured with the same weighted-solve route used
/// by the coupled solver, fitted as polynomials of `t = u*`, and encoded so
/// that `F_1(u*, v*)` and `F_2(u*, v*)` reproduce them.
pub fn manufactured_potential(
    u_star: &TraceField,
    curve: Poly,
    kappa: f64,
    degree: usize,
    orders: (FractionalOrder, FractionalOrder),
    tol: f64,
) -> Result<Manufactured> {
    let grid = u_star.grid_arc().clone();
    let v_star = u_star.map(|t| curve.eval(t))?;
    let g1 = dtn_flux(&solve_weighted_dirichlet(u_star, orders.0, tol)?, orders.0)?.flux;
    let g2 = dtn_flux(&solve_weighted_dirichlet(&v_star, orders.1, tol)?, orders.1)?.flux;
    let t = u_star.values();
    let p1 = poly_fit(t, g1.values(), degree)?;
    let p2 = poly_fit(t, g2.values(), degree)?;
    let fit_residual = t
        .iter()
        .zip(g1.values().iter().zip(g2.values()))
        .map(|(x, (a, b))| (p1.eval(*x) - a).abs().max((p2.eval(*x) - b).abs()))
        .fold(0.0, f64::max);
    let psi = p1.add(&curve.derivative().mul(&p2)).antiderivative();
    let potential = CurvePotential { psi, normal: p2, curve, kappa };
    let _ = grid;
    Ok(Manufactured { potential, u: u_star.clone(), v: v_star, fit_residual })
}

/// Least-squares polynomial of the given degree, solved by SVD in a scaled variable.
pub fn poly_fit(x: &[f64], y: &[f64], degree: usize) -> Result<Poly> {
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return Err(Error::Data("polynomial fit needs distinct abscissae".into()));
    }
    let (c, r) = (0.5 * (hi + lo), 0.5 * (hi - lo));
    let m = nalgebra::DMatrix::from_fn(x.len(), degree + 1, |i, k| ((x[i] - c) / r).powi(k as i32));
    let b = nalgebra::DVector::from_row_slice(y);
    let coef = m
        .svd(true, true)
        .solve(&b, 1e-14)
        .map_err(|e| Error::Data(format!("polynomial fit failed: {e}")))?;
    // Re-expand sum_k a_k ((t - c)/r)^k in powers of t.
    let lin = Poly(vec![-c / r, 1.0 / r]);
    let mut acc = Poly(vec![0.0]);
    let mut pw = Poly(vec![1.0]);
    for a in coef.iter() {
        acc = acc.add(&pw.scale(*a));
        pw = pw.mul(&lin);
    }
    Ok(acc)
}

/// Least-squares slope of `log E` against `log R` over positive energies.
pub fn energy_slope(radii: &[f64], energies: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = radii
        .iter()
        .zip(energies)
        .filter(|(_, e)| **e > 0.0)
        .map(|(r, e)| (r.ln(), e.ln()))
        .collect();
    let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    linear_fit(&x, &y).1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants_are_in_the_kernel() {
        let g = Arc::new(HalfSpaceGrid::new(2, 1.0, 6, 1.0, 5, 2.0, false).unwrap());
        let st = WeightedStencil::new(g.clone(), FractionalOrder::new(0.3).unwrap());
        let c = vec![2.0; g.len()];
        assert!(st.apply(&c).iter().all(|v| v.abs() < 1e-10));
        let u = solve_dirichlet_with(&st, &TraceField::constant(g, 2.0), 1e-12).unwrap();
        assert!(u.field.values().iter().all(|v| (v - 2.0).abs() < 1e-12));
    }

    #[test]
    fn operator_is_symmetric() {
        for periodic in [true, false] {
            let g = Arc::new(HalfSpaceGrid::new(2, 1.0, 5, 1.0, 4, 1.5, periodic).unwrap());
            let st = WeightedStencil::new(g.clone(), FractionalOrder::new(0.7).unwrap());
            let a: Vec<f64> = (0..g.len()).map(|i| ((i * 37) % 11) as f64).collect();
            let b: Vec<f64> = (0..g.len()).map(|i| ((i * 53) % 7) as f64 - 3.0).collect();
            let (ab, ba) = (st.bilinear(&a, &b), st.bilinear(&b, &a));
            assert!((ab - ba).abs() < 1e-10 * ab.abs().max(1.0));
        }
    }

    #[test]
    fn poly_fit_recovers_cubic() {
        let x: Vec<f64> = (0..30).map(|i| -1.0 + i as f64 / 14.5).collect();
        let y: Vec<f64> = x.iter().map(|t| 1.0 - 2.0 * t + 0.5 * t.powi(3)).collect();
        let p = poly_fit(&x, &y, 5).unwrap();
        for (t, v) in x.iter().zip(&y) {
            assert!((p.eval(*t) - v).abs() < 1e-11);
        }
    }
}
