//! Discrete versions of the monotonicity, stability and Poincaré-type
//! inequalities, the annulus lemma, energy growth, the logarithmic cutoff
//! decay experiment and one-dimensional symmetry extraction.
//!
//! All volume integrals use node weights `x_mass * y_mass(alpha)`; boundary
//! integrals use `x_mass` at level 0 and skip points outside the
//! differentiable set of the potential. Inequality slacks are compared with
//! `tol = SLACK_CONSTANT * h * (magnitude of the right-hand side)`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::geometry::{default_eps, geometry_of};
use crate::grid::{diff_x, gradient, same_grid, weighted_volume_integral, HalfBallRegion, HalfSpaceGrid, ScalarField, TraceField};
use crate::numerics::{dot, golden_min, linear_fit, pairwise_sum};
use crate::potential::{eval_derivatives, sign_condition, CoupledPotential, DerivativeFields, SignMode};
use crate::solver::{energy_slope, SolutionPair, WeightedStencil};

/// Constant `c` in `tol = c h |RHS|`.
pub const SLACK_CONSTANT: f64 = 1.0;
/// Ratio fields are used only where both normal derivatives exceed this
/// multiple of the mask threshold.
pub const RATIO_GUARD: f64 = 10.0;
/// Relative misfit below which a field counts as one-dimensional.
pub const SYMMETRY_THRESHOLD: f64 = 0.05;
/// Rejection threshold for `λ_min / λ_max` of the diagonally scaled Gram matrix.
pub const GRAM_CONDITION_LIMIT: f64 = 1e-12;

fn node_radius(grid: &HalfSpaceGrid, k: usize) -> f64 {
    let np = grid.plane_len();
    let rx = grid.radius_x(k % np);
    let y = grid.y()[k / np];
    (rx * rx + y * y).sqrt()
}

/// Plane points away from the ends of non-periodic axes.
fn interior_plane(grid: &HalfSpaceGrid) -> Vec<bool> {
    let nx = grid.nx();
    (0..grid.plane_len())
        .map(|p| grid.periodic() || grid.split(p).iter().take(grid.n()).all(|&i| i > 0 && i + 1 < nx))
        .collect()
}

fn node_weights(grid: &HalfSpaceGrid, alpha: f64) -> Vec<f64> {
    let xm = grid.x_masses();
    let ym = grid.y_masses(alpha);
    let np = grid.plane_len();
    (0..grid.len()).map(|k| xm[k % np] * ym[k / np]).collect()
}

fn weighted_sum(w: &[f64], f: impl Fn(usize) -> f64) -> f64 {
    let t: Vec<f64> = (0..w.len()).map(|k| if w[k] == 0.0 { 0.0 } else { w[k] * f(k) }).collect();
    pairwise_sum(&t)
}

fn slack_tol(grid: &HalfSpaceGrid, magnitude: f64) -> f64 {
    SLACK_CONSTANT * grid.h() * magnitude.abs()
}

/// A pair of test functions vanishing outside `B_R^+`.
#[derive(Debug, Clone)]
pub struct TestFunctionPair {
    pub label: String,
    pub xi1: ScalarField,
    pub xi2: ScalarField,
    pub radius: f64,
}

impl TestFunctionPair {
    /// Checks that both fields vanish at every node with `|X| > radius`.
    pub fn new(label: impl Into<String>, xi1: ScalarField, xi2: ScalarField, radius: f64) -> Result<Self> {
        same_grid(xi1.grid_arc(), xi2.grid_arc())?;
        let grid = xi1.grid();
        if !(radius > 0.0) {
            return Err(invalid("radius", radius, "> 0"));
        }
        let limit = grid.max_radius();
        if radius > limit * (1.0 + 1e-12) {
            return Err(Error::OutOfDomain { what: "test-function support", radius, limit });
        }
        let label = label.into();
        for k in 0..grid.len() {
            if node_radius(grid, k) > radius * (1.0 + 1e-12) && (xi1.values()[k] != 0.0 || xi2.values()[k] != 0.0) {
                return Err(Error::Data(format!("test pair `{label}` does not vanish outside B_{radius}^+")));
            }
        }
        Ok(Self { label, xi1, xi2, radius })
    }

    pub fn grid(&self) -> &Arc<HalfSpaceGrid> {
        self.xi1.grid_arc()
    }
}

/// Outcome of the monotonicity test `U_{x_n} > 0 > V_{x_n}`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MonotonicityReport {
    pub monotone: bool,
    pub margin: f64,
    pub min_u_xn: f64,
    pub max_v_xn: f64,
}

/// Tests `min U_{x_n} > 0` and `max V_{x_n} < 0` over all levels at interior plane points.
pub fn monotonicity_check(pair: &SolutionPair) -> MonotonicityReport {
    let g = pair.grid();
    let ax = g.n() - 1;
    let ux = diff_x(g, pair.u.values(), ax);
    let vx = diff_x(g, pair.v.values(), ax);
    let inner = interior_plane(g);
    let np = g.plane_len();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for k in 0..g.len() {
        if inner[k % np] {
            lo = lo.min(ux[k]);
            hi = hi.max(vx[k]);
        }
    }
    let margin = lo.min(-hi);
    MonotonicityReport { monotone: margin > 0.0, margin, min_u_xn: lo, max_v_xn: hi }
}

struct FormContext {
    stencils: [WeightedStencil; 2],
    weights: [Vec<f64>; 2],
    xm: Vec<f64>,
    d: DerivativeFields,
}

impl FormContext {
    fn new(pair: &SolutionPair) -> Result<Self> {
        let g = pair.grid().clone();
        Ok(Self {
            stencils: [WeightedStencil::new(g.clone(), pair.orders.0), WeightedStencil::new(g.clone(), pair.orders.1)],
            weights: [node_weights(&g, pair.orders.0.alpha()), node_weights(&g, pair.orders.1.alpha())],
            xm: g.x_masses(),
            d: eval_derivatives(pair.potential.as_ref(), &pair.u.trace(), &pair.v.trace())?,
        })
    }

    /// `∫_{D} F_11 a_1 b_1 + F_22 a_2 b_2 + F_12 (a_1 b_2 + a_2 b_1)` at level 0.
    fn boundary(&self, a: (&[f64], &[f64]), b: (&[f64], &[f64])) -> f64 {
        let t: Vec<f64> = (0..self.xm.len())
            .map(|p| match (self.d.f11.get(p), self.d.f22.get(p), self.d.f12.get(p)) {
                (Some(f11), Some(f22), Some(f12)) => {
                    self.xm[p] * (f11 * a.0[p] * b.0[p] + f22 * a.1[p] * b.1[p] + f12 * (a.0[p] * b.1[p] + a.1[p] * b.0[p]))
                }
                _ => 0.0,
            })
            .collect();
        pairwise_sum(&t)
    }

    fn mass(&self, i: usize, a: &[f64], b: &[f64]) -> f64 {
        weighted_sum(&self.weights[i], |k| a[k] * b[k])
    }
}

/// Itemized value of the second-variation form on one test pair.
#[derive(Debug, Clone, Serialize)]
pub struct StabilityTerms {
    pub label: String,
    pub gradient_u: f64,
    pub gradient_v: f64,
    pub boundary: f64,
    pub value: f64,
    pub tol: f64,
    pub nonnegative: bool,
}

fn terms_with(ctx: &FormContext, grid: &HalfSpaceGrid, t: &TestFunctionPair) -> StabilityTerms {
    let (a, b) = (t.xi1.values(), t.xi2.values());
    let gu = ctx.stencils[0].bilinear(a, a);
    let gv = ctx.stencils[1].bilinear(b, b);
    let np = grid.plane_len();
    let bd = ctx.boundary((&a[..np], &b[..np]), (&a[..np], &b[..np]));
    let value = gu + gv - bd;
    let tol = slack_tol(grid, gu + gv + bd.abs());
    StabilityTerms { label: t.label.clone(), gradient_u: gu, gradient_v: gv, boundary: bd, value, tol, nonnegative: value >= -tol }
}

/// Terms of `∫y^{α₁}|∇ξ₁|² + ∫y^{α₂}|∇ξ₂|² - ∫_D (F₁₁ξ₁² + F₂₂ξ₂² + 2F₁₂ξ₁ξ₂)`.
pub fn stability_terms(pair: &SolutionPair, t: &TestFunctionPair) -> Result<StabilityTerms> {
    same_grid(pair.grid(), t.grid())?;
    let ctx = FormContext::new(pair)?;
    Ok(terms_with(&ctx, pair.grid(), t))
}

pub fn stability_form(pair: &SolutionPair, t: &TestFunctionPair) -> Result<f64> {
    Ok(stability_terms(pair, t)?.value)
}

/// Smallest generalized eigenvalue of the form against the weighted `H¹` Gram matrix.
#[derive(Debug, Clone, Serialize)]
pub struct StabilityMin {
    /// Always "stability evidence": a finite family gives a necessary condition only.
    pub label: &'static str,
    pub min_eigenvalue: f64,
    pub coefficients: Vec<f64>,
    pub basis_size: usize,
    pub gram_condition: f64,
    pub tol: f64,
    pub passed: bool,
    pub per_element: Vec<StabilityTerms>,
}

struct Assembled {
    q: DMatrix<f64>,
    g: DMatrix<f64>,
    per_element: Vec<StabilityTerms>,
}

fn assemble(pair: &SolutionPair, basis: &[TestFunctionPair]) -> Result<Assembled> {
    let grid = pair.grid();
    for t in basis {
        same_grid(grid, t.grid())?;
    }
    let ctx = FormContext::new(pair)?;
    let np = grid.plane_len();
    let applied: Vec<[Vec<f64>; 2]> = basis
        .iter()
        .map(|t| [ctx.stencils[0].apply(t.xi1.values()), ctx.stencils[1].apply(t.xi2.values())])
        .collect();
    let m = basis.len();
    let mut q = DMatrix::zeros(m, m);
    let mut g = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let (a, b) = (&basis[i], &basis[j]);
            let grad = dot(a.xi1.values(), &applied[j][0]) + dot(a.xi2.values(), &applied[j][1]);
            let bd = ctx.boundary(
                (&a.xi1.values()[..np], &a.xi2.values()[..np]),
                (&b.xi1.values()[..np], &b.xi2.values()[..np]),
            );
            let l2 = ctx.mass(0, a.xi1.values(), b.xi1.values()) + ctx.mass(1, a.xi2.values(), b.xi2.values());
            q[(i, j)] = grad - bd;
            q[(j, i)] = grad - bd;
            g[(i, j)] = grad + l2;
            g[(j, i)] = grad + l2;
        }
    }
    let per_element = basis.iter().map(|t| terms_with(&ctx, grid, t)).collect();
    Ok(Assembled { q, g, per_element })
}

/// Rayleigh minimization of the second-variation form over the span of `basis`.
pub fn stability_min(pair: &SolutionPair, basis: &[TestFunctionPair]) -> Result<StabilityMin> {
    if basis.is_empty() {
        return Err(Error::Basis("empty test-function family".into()));
    }
    let Assembled { q, g, per_element } = assemble(pair, basis)?;
    let diag: Vec<f64> = (0..g.nrows()).map(|i| g[(i, i)]).collect();
    if diag.iter().any(|d| !(*d > 0.0)) {
        return Err(Error::Basis("a test pair has zero weighted H1 norm".into()));
    }
    let scaled = DMatrix::from_fn(g.nrows(), g.ncols(), |a, b| g[(a, b)] / (diag[a] * diag[b]).sqrt());
    let ge = scaled.symmetric_eigen();
    let gmax = ge.eigenvalues.max();
    let gmin = ge.eigenvalues.min();
    let cond = if gmax > 0.0 { gmin / gmax } else { 0.0 };
    if !(cond > GRAM_CONDITION_LIMIT) {
        return Err(Error::Basis(format!("Gram matrix is singular or ill-conditioned (λ_min/λ_max = {cond:e})")));
    }
    let chol = g.cholesky().ok_or_else(|| Error::Basis("Gram matrix is not positive definite".into()))?;
    let l = chol.l();
    let linv = l.clone().try_inverse().ok_or_else(|| Error::Basis("triangular factor is singular".into()))?;
    let c = &linv * &q * linv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let e = c.symmetric_eigen();
    let (imin, lam) = e.eigenvalues.iter().enumerate().fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
    let w: DVector<f64> = e.eigenvectors.column(imin).into_owned();
    let coef = linv.transpose() * w;
    let tol = SLACK_CONSTANT * pair.grid().h();
    Ok(StabilityMin {
        label: "stability evidence",
        min_eigenvalue: lam,
        coefficients: coef.iter().copied().collect(),
        basis_size: basis.len(),
        gram_condition: cond,
        tol,
        passed: lam >= -tol,
        per_element,
    })
}

/// Greedy selection of a well-conditioned subfamily (in weighted `H¹`).
///
/// Elements with negligible norm (below `rel_tol` times the largest squared
/// norm) or whose addition drives the smallest eigenvalue of the scaled Gram
/// matrix below `rel_tol` are dropped.
pub fn independent_subset(pair: &SolutionPair, basis: Vec<TestFunctionPair>, rel_tol: f64) -> Result<Vec<TestFunctionPair>> {
    if basis.is_empty() {
        return Ok(basis);
    }
    let g = assemble(pair, &basis)?.g;
    let gmax = (0..basis.len()).map(|i| g[(i, i)]).fold(0.0, f64::max);
    let mut keep: Vec<usize> = Vec::new();
    for i in 0..basis.len() {
        if !(g[(i, i)] > rel_tol * gmax) {
            continue;
        }
        let mut trial = keep.clone();
        trial.push(i);
        let sub = DMatrix::from_fn(trial.len(), trial.len(), |a, b| g[(trial[a], trial[b])]);
        let scale = DMatrix::from_fn(trial.len(), trial.len(), |a, b| sub[(a, b)] / (sub[(a, a)] * sub[(b, b)]).sqrt());
        let ev = scale.symmetric_eigen().eigenvalues;
        if ev.min() > rel_tol {
            keep = trial;
        }
    }
    let mut basis: Vec<Option<TestFunctionPair>> = basis.into_iter().map(Some).collect();
    Ok(keep.into_iter().map(|i| basis[i].take().expect("index selected once")).collect())
}

fn spline_bump(t: f64) -> f64 {
    // Cubic B-spline on [0, 4] knots, centered at 2.
    let t = t.abs();
    if t >= 2.0 {
        0.0
    } else if t >= 1.0 {
        (2.0 - t).powi(3) / 6.0
    } else {
        (4.0 - 6.0 * t * t + 3.0 * t.powi(3)) / 6.0
    }
}

/// Smooth radial cutoff `(1 - |X|²/R²)²` inside `B_R^+`, 0 outside.
pub fn bump_cutoff(grid: &Arc<HalfSpaceGrid>, radius: f64) -> Result<ScalarField> {
    ScalarField::from_fn(grid.clone(), |x, y| {
        let r2 = (x[0] * x[0] + x[1] * x[1] + y * y) / (radius * radius);
        if r2 >= 1.0 {
            0.0
        } else {
            (1.0 - r2).powi(2)
        }
    })
}

/// Canonical test family inside `B_R^+`.
///
/// Radial cubic B-splines in `|X|` (with knots spaced `R / (radial + 1)`)
/// multiplied by `1, x_1/R, ..., x_n/R`, placed in each component, followed
/// by the proof-critical pairs `(|∇_x U| φ, |∇_x V| φ)` and `(U_{x_j} φ, V_{x_j} φ)`
/// with `φ` the smooth bump cutoff. Members may be linearly dependent for
/// symmetric solutions; see [`independent_subset`].
pub fn canonical_basis(pair: &SolutionPair, radius: f64, radial: usize) -> Result<Vec<TestFunctionPair>> {
    if radial == 0 {
        return Err(invalid("radial", 0, ">= 1"));
    }
    let g = pair.grid().clone();
    let n = g.n();
    let zero = ScalarField::zeros(g.clone());
    let knot = radius / (radial as f64 + 1.0);
    let mut out = Vec::new();
    for k in 0..radial {
        let center = knot * k as f64;
        for factor in 0..=n {
            let f = ScalarField::from_fn(g.clone(), |x, y| {
                let r = (x[0] * x[0] + x[1] * x[1] + y * y).sqrt();
                if r >= radius {
                    return 0.0;
                }
                let ang = if factor == 0 { 1.0 } else { x[factor - 1] / radius };
                spline_bump((r - center) / knot) * ang
            })?;
            if f.max_abs() == 0.0 {
                continue;
            }
            out.push(TestFunctionPair::new(format!("spline{k}_f{factor}_u"), f.clone(), zero.clone(), radius)?);
            out.push(TestFunctionPair::new(format!("spline{k}_f{factor}_v"), zero.clone(), f, radius)?);
        }
    }
    let phi = bump_cutoff(&g, radius)?;
    let gu = gradient(&pair.u);
    let gv = gradient(&pair.v);
    let norm = |parts: &[ScalarField]| -> Vec<f64> {
        (0..g.len()).map(|k| parts.iter().map(|c| c.values()[k].powi(2)).sum::<f64>().sqrt()).collect()
    };
    let (nu, nv) = (norm(gu.x_part()), norm(gv.x_part()));
    let times_phi = |v: &[f64]| ScalarField::new(g.clone(), v.iter().zip(phi.values()).map(|(a, b)| a * b).collect());
    out.push(TestFunctionPair::new("grad_norm_phi", times_phi(&nu)?, times_phi(&nv)?, radius)?);
    for j in 0..n {
        out.push(TestFunctionPair::new(
            format!("d{}_phi", j + 1),
            times_phi(gu.x_part()[j].values())?,
            times_phi(gv.x_part()[j].values())?,
            radius,
        )?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Equation {
    U,
    V,
}

/// Both sides of one line of the linearized inequality for monotone pairs.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RayleighReport {
    pub lhs: f64,
    pub rhs: f64,
    pub value: f64,
    pub excluded_points: usize,
}

fn ratio_valid(grid: &HalfSpaceGrid, ux: &[f64], vx: &[f64], eps: (f64, f64)) -> Vec<bool> {
    (0..grid.plane_len()).map(|p| ux[p] > RATIO_GUARD * eps.0 && -vx[p] > RATIO_GUARD * eps.1).collect()
}

/// `∫y^{α}|∇ξ|² - ∫_D (F₁₁ + F₁₂ V_{x_n}/U_{x_n}) ξ²` (or the `V` line).
pub fn linearized_rayleigh(pair: &SolutionPair, xi: &ScalarField, which: Equation) -> Result<RayleighReport> {
    let g = pair.grid();
    same_grid(g, xi.grid_arc())?;
    let mono = monotonicity_check(pair);
    if !(mono.margin > 0.0) {
        return Err(Error::Precondition(format!("pair is not monotone (margin {:e})", mono.margin)));
    }
    let ctx = FormContext::new(pair)?;
    let ax = g.n() - 1;
    let np = g.plane_len();
    let ux = diff_x(g, &pair.u.values()[..np], ax);
    let vx = diff_x(g, &pair.v.values()[..np], ax);
    let eps = (default_eps(&pair.u), default_eps(&pair.v));
    let ok = ratio_valid(g, &ux, &vx, eps);
    let xiv = xi.values();
    let idx = if which == Equation::U { 0 } else { 1 };
    let lhs = ctx.stencils[idx].bilinear(xiv, xiv);
    let mut excluded = 0;
    let mut terms = Vec::with_capacity(np);
    for p in 0..np {
        let (Some(f11), Some(f22), Some(f12)) = (ctx.d.f11.get(p), ctx.d.f22.get(p), ctx.d.f12.get(p)) else {
            continue;
        };
        if !ok[p] {
            if xiv[p] != 0.0 {
                excluded += 1;
            }
            continue;
        }
        let coef = match which {
            Equation::U => f11 + f12 * vx[p] / ux[p],
            Equation::V => f12 * ux[p] / vx[p] + f22,
        };
        terms.push(ctx.xm[p] * coef * xiv[p] * xiv[p]);
    }
    let rhs = pairwise_sum(&terms);
    Ok(RayleighReport { lhs, rhs, value: lhs - rhs, excluded_points: excluded })
}

/// Every integral term of the monotone or stable geometric inequality.
#[derive(Debug, Clone, Serialize)]
pub struct InequalityReport {
    pub kind: &'static str,
    pub lhs_curvature_u: f64,
    pub lhs_tangential_u: f64,
    pub lhs_curvature_v: f64,
    pub lhs_tangential_v: f64,
    pub rhs_gradient: f64,
    pub coupling_term: f64,
    /// `rhs_gradient + coupling_term - lhs`.
    pub slack: f64,
    pub tol: f64,
    pub h: f64,
    pub satisfied: bool,
    pub excluded_points: usize,
    /// Observed `sup |∇_x U| + sup |∇_x V|` over levels `y <= R_φ`.
    pub gradient_bound: f64,
    pub eps_grad: [f64; 2],
}

impl InequalityReport {
    pub fn lhs(&self) -> f64 {
        self.lhs_curvature_u + self.lhs_tangential_u + self.lhs_curvature_v + self.lhs_tangential_v
    }
}

struct CommonTerms {
    lhs: [f64; 4],
    rhs: f64,
    grad_u: Vec<Vec<f64>>,
    grad_v: Vec<Vec<f64>>,
    phi2_trace: Vec<f64>,
    bound: f64,
    eps: [f64; 2],
}

fn support_radius(phi: &ScalarField) -> f64 {
    let g = phi.grid();
    (0..g.len()).filter(|&k| phi.values()[k] != 0.0).map(|k| node_radius(g, k)).fold(0.0, f64::max)
}

fn common_terms(pair: &SolutionPair, phi: &ScalarField) -> Result<CommonTerms> {
    let g = pair.grid().clone();
    same_grid(&g, phi.grid_arc())?;
    let eps = [default_eps(&pair.u), default_eps(&pair.v)];
    let w = [node_weights(&g, pair.orders.0.alpha()), node_weights(&g, pair.orders.1.alpha())];
    let phiv = phi.values();
    let geo_u = geometry_of(&pair.u, eps[0]);
    let geo_v = geometry_of(&pair.v, eps[1]);
    let lhs = [
        weighted_sum(&w[0], |k| geo_u.curvature_sq_energy.values()[k] * phiv[k] * phiv[k]),
        weighted_sum(&w[0], |k| geo_u.tangential_sq.values()[k] * phiv[k] * phiv[k]),
        weighted_sum(&w[1], |k| geo_v.curvature_sq_energy.values()[k] * phiv[k] * phiv[k]),
        weighted_sum(&w[1], |k| geo_v.tangential_sq.values()[k] * phiv[k] * phiv[k]),
    ];
    let gphi = gradient(phi);
    let dphi2: Vec<f64> = (0..g.len()).map(|k| gphi.components.iter().map(|c| c.values()[k].powi(2)).sum()).collect();
    let grad_u: Vec<Vec<f64>> = (0..g.n()).map(|a| diff_x(&g, pair.u.values(), a)).collect();
    let grad_v: Vec<Vec<f64>> = (0..g.n()).map(|a| diff_x(&g, pair.v.values(), a)).collect();
    let sq = |c: &[Vec<f64>], k: usize| c.iter().map(|v| v[k] * v[k]).sum::<f64>();
    let rhs = weighted_sum(&w[0], |k| sq(&grad_u, k) * dphi2[k]) + weighted_sum(&w[1], |k| sq(&grad_v, k) * dphi2[k]);
    let np = g.plane_len();
    let r = support_radius(phi);
    let (mut bu, mut bv) = (0.0f64, 0.0f64);
    for k in 0..g.len() {
        if g.y()[k / np] <= r {
            bu = bu.max(sq(&grad_u, k).sqrt());
            bv = bv.max(sq(&grad_v, k).sqrt());
        }
    }
    Ok(CommonTerms {
        lhs,
        rhs,
        phi2_trace: phiv[..np].iter().map(|v| v * v).collect(),
        grad_u,
        grad_v,
        bound: bu + bv,
        eps,
    })
}

fn finish(kind: &'static str, g: &HalfSpaceGrid, c: CommonTerms, coupling: f64, excluded: usize) -> InequalityReport {
    let lhs: f64 = c.lhs.iter().sum();
    let slack = c.rhs + coupling - lhs;
    let tol = slack_tol(g, c.rhs.abs() + coupling.abs());
    InequalityReport {
        kind,
        lhs_curvature_u: c.lhs[0],
        lhs_tangential_u: c.lhs[1],
        lhs_curvature_v: c.lhs[2],
        lhs_tangential_v: c.lhs[3],
        rhs_gradient: c.rhs,
        coupling_term: coupling,
        slack,
        tol,
        h: g.h(),
        satisfied: slack >= -tol,
        excluded_points: excluded,
        gradient_bound: c.bound,
        eps_grad: c.eps,
    }
}

/// Geometric inequality for monotone pairs, coupling
/// `∫ F₁₂ |√(-V_{x_n}/U_{x_n}) ∇_x U + √(U_{x_n}/-V_{x_n}) ∇_x V|² φ²`.
pub fn poincare_monotone(pair: &SolutionPair, phi: &ScalarField) -> Result<InequalityReport> {
    let mono = monotonicity_check(pair);
    if !(mono.margin > 0.0) {
        return Err(Error::Precondition(format!("pair is not monotone (margin {:e})", mono.margin)));
    }
    let g = pair.grid().clone();
    let c = common_terms(pair, phi)?;
    let d = eval_derivatives(pair.potential.as_ref(), &pair.u.trace(), &pair.v.trace())?;
    let np = g.plane_len();
    let ax = g.n() - 1;
    let ok = ratio_valid(&g, &c.grad_u[ax][..np], &c.grad_v[ax][..np], (c.eps[0], c.eps[1]));
    let xm = g.x_masses();
    let mut excluded = 0;
    let mut terms = Vec::with_capacity(np);
    for p in 0..np {
        let Some(f12) = d.f12.get(p) else { continue };
        if c.phi2_trace[p] == 0.0 {
            continue;
        }
        if !ok[p] {
            excluded += 1;
            continue;
        }
        let (un, vn) = (c.grad_u[ax][p], c.grad_v[ax][p]);
        let (a, b) = ((-vn / un).sqrt(), (un / -vn).sqrt());
        let v2: f64 = (0..g.n()).map(|j| (a * c.grad_u[j][p] + b * c.grad_v[j][p]).powi(2)).sum();
        terms.push(xm[p] * f12 * v2 * c.phi2_trace[p]);
    }
    let coupling = pairwise_sum(&terms);
    Ok(finish("monotone", &g, c, coupling, excluded))
}

/// Geometric inequality for stable pairs, coupling
/// `-2 ∫ F₁₂ (|∇_x U| |∇_x V| - ∇_x U·∇_x V) φ²`.
pub fn poincare_stable(pair: &SolutionPair, phi: &ScalarField) -> Result<InequalityReport> {
    let g = pair.grid().clone();
    let c = common_terms(pair, phi)?;
    let d = eval_derivatives(pair.potential.as_ref(), &pair.u.trace(), &pair.v.trace())?;
    let np = g.plane_len();
    let xm = g.x_masses();
    let mut terms = Vec::with_capacity(np);
    for p in 0..np {
        let Some(f12) = d.f12.get(p) else { continue };
        let a: f64 = (0..g.n()).map(|j| c.grad_u[j][p].powi(2)).sum::<f64>().sqrt();
        let b: f64 = (0..g.n()).map(|j| c.grad_v[j][p].powi(2)).sum::<f64>().sqrt();
        let ab: f64 = (0..g.n()).map(|j| c.grad_u[j][p] * c.grad_v[j][p]).sum();
        terms.push(xm[p] * f12 * (a * b - ab).max(0.0) * c.phi2_trace[p]);
    }
    let coupling = -2.0 * pairwise_sum(&terms);
    Ok(finish("stable", &g, c, coupling, 0))
}

/// `φ_R(X)`: 1 on `|X| <= √R`, `2 (log R - log|X|)/log R` up to `R`, 0 beyond.
pub fn log_cutoff_value(r: f64, radius: f64) -> f64 {
    let lr = radius.ln();
    if r <= radius.sqrt() {
        1.0
    } else if r >= radius {
        0.0
    } else {
        2.0 * (lr - r.ln()) / lr
    }
}

pub fn log_cutoff(radius: f64, grid: &Arc<HalfSpaceGrid>) -> Result<ScalarField> {
    if !(radius > 1.0) {
        return Err(invalid("R", radius, "> 1"));
    }
    let limit = grid.max_radius();
    if radius > limit * (1.0 + 1e-12) {
        return Err(Error::OutOfDomain { what: "log cutoff", radius, limit });
    }
    ScalarField::from_fn(grid.clone(), |x, y| log_cutoff_value((x[0] * x[0] + x[1] * x[1] + y * y).sqrt(), radius))
}

/// Largest `|∇_h φ_R| |X| log R` over nodes strictly inside the annulus.
pub fn log_cutoff_gradient_constant(phi: &ScalarField, radius: f64) -> f64 {
    let g = phi.grid();
    let gr = gradient(phi);
    let (lo, hi) = (radius.sqrt(), radius);
    (0..g.len())
        .filter_map(|k| {
            let r = node_radius(g, k);
            if r > lo && r < hi {
                let m: f64 = gr.components.iter().map(|c| c.values()[k].powi(2)).sum::<f64>().sqrt();
                Some(m * r * radius.ln())
            } else {
                None
            }
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct EnergyRow {
    pub radius: f64,
    pub energy_u: f64,
    pub energy_v: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EnergySweep {
    pub rows: Vec<EnergyRow>,
    /// Least-squares slopes of `log E` against `log R`.
    pub slope_u: f64,
    pub slope_v: f64,
}

fn full_grad_sq(f: &ScalarField) -> Result<ScalarField> {
    let gr = gradient(f);
    let g = f.grid_arc().clone();
    let v = (0..g.len()).map(|k| gr.components.iter().map(|c| c.values()[k].powi(2)).sum()).collect();
    ScalarField::new(g, v)
}

/// `E_U(R) = ∫_{B_R^+} y^{α₁} |∇U|²` and the `V` counterpart for each radius.
pub fn energy_growth_sweep(pair: &SolutionPair, radii: &[f64]) -> Result<EnergySweep> {
    let g = pair.grid();
    let (eu, ev) = (full_grad_sq(&pair.u)?, full_grad_sq(&pair.v)?);
    let mut rows = Vec::with_capacity(radii.len());
    for &r in radii {
        let region = HalfBallRegion::new(g, r)?;
        rows.push(EnergyRow {
            radius: r,
            energy_u: weighted_volume_integral(&eu, pair.orders.0.alpha(), &region)?,
            energy_v: weighted_volume_integral(&ev, pair.orders.1.alpha(), &region)?,
        });
    }
    let rs: Vec<f64> = rows.iter().map(|r| r.radius).collect();
    let e_u: Vec<f64> = rows.iter().map(|r| r.energy_u).collect();
    let e_v: Vec<f64> = rows.iter().map(|r| r.energy_v).collect();
    Ok(EnergySweep { slope_u: energy_slope(&rs, &e_u), slope_v: energy_slope(&rs, &e_v), rows })
}

/// Both sides of the annulus lemma.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct AnnulusReport {
    pub radius: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    /// Bound on the quadrature error of the `η` integral.
    pub quad_tol: f64,
    pub satisfied: bool,
}

/// Number of radial nodes on `[√R, R]` for the `η` quadrature.
pub const ANNULUS_RHO_NODES: usize = 4000;

/// `∫_{√R<|X|<R} h/|X|² <= 2 ∫_{√R}^R η(t)/t³ dt + η(R)/R²` with `η(ρ) = ∫_{B_ρ^+} h`.
///
/// `h` is treated as point masses `h_k |cell_k|` at the nodes, so `η` is a
/// step function evaluated on a `ρ`-grid; the `t`-integral uses the trapezoid
/// rule with exact weights `∫ t^{-3}` per interval.
pub fn annulus_lemma_check(h: &ScalarField, radius: f64) -> Result<AnnulusReport> {
    let g = h.grid();
    if let Some(k) = h.values().iter().position(|v| *v < 0.0) {
        return Err(Error::Data(format!("h must be nonnegative; h = {} at node {k}", h.values()[k])));
    }
    if !(radius > 1.0) {
        return Err(invalid("R", radius, "> 1"));
    }
    let limit = g.max_radius();
    if radius > limit * (1.0 + 1e-12) {
        return Err(Error::OutOfDomain { what: "annulus lemma", radius, limit });
    }
    let w = node_weights(g, 0.0);
    let mut pts: Vec<(f64, f64)> = (0..g.len()).map(|k| (node_radius(g, k), w[k] * h.values()[k])).filter(|p| p.1 > 0.0).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let lo = radius.sqrt();
    let lhs = pairwise_sum(&pts.iter().filter(|p| p.0 >= lo && p.0 <= radius).map(|p| p.1 / (p.0 * p.0)).collect::<Vec<_>>());
    let rho: Vec<f64> = (0..=ANNULUS_RHO_NODES).map(|i| lo + (radius - lo) * i as f64 / ANNULUS_RHO_NODES as f64).collect();
    let mut eta = Vec::with_capacity(rho.len());
    let (mut acc, mut idx) = (0.0, 0);
    for &r in &rho {
        while idx < pts.len() && pts[idx].0 <= r {
            acc += pts[idx].1;
            idx += 1;
        }
        eta.push(acc);
    }
    let (mut integral, mut quad) = (0.0, 0.0);
    for i in 0..ANNULUS_RHO_NODES {
        let (a, b) = (rho[i], rho[i + 1]);
        let wt = 0.5 * (1.0 / (a * a) - 1.0 / (b * b));
        integral += 0.5 * (eta[i] + eta[i + 1]) * wt;
        quad += 0.5 * (eta[i + 1] - eta[i]) * wt;
    }
    let eta_r = *eta.last().expect("rho grid is nonempty");
    let rhs = 2.0 * integral + eta_r / (radius * radius);
    let quad_tol = 2.0 * quad;
    let slack = rhs - lhs;
    Ok(AnnulusReport { radius, lhs, rhs, slack, quad_tol, satisfied: slack >= -quad_tol })
}

/// Machine-checked hypotheses of the curvature-decay bound.
#[derive(Debug, Clone, Serialize)]
pub struct Cor1Hypotheses {
    pub monotone: bool,
    pub monotonicity_margin: f64,
    pub f12_nonpos: bool,
    pub f12_nonneg: bool,
    /// Minimum Rayleigh quotient on the canonical family, when computed.
    pub stability_evidence: Option<f64>,
    pub stability_passed: bool,
}

impl Cor1Hypotheses {
    pub fn monotone_branch(&self) -> bool {
        self.monotone && self.f12_nonpos
    }
    pub fn stable_branch(&self) -> bool {
        self.stability_passed && self.f12_nonneg
    }
    pub fn holds(&self) -> bool {
        self.monotone_branch() || self.stable_branch()
    }
}

pub fn cor1_hypotheses(pair: &SolutionPair, evidence: Option<&StabilityMin>) -> Result<Cor1Hypotheses> {
    let mono = monotonicity_check(pair);
    let d = eval_derivatives(pair.potential.as_ref(), &pair.u.trace(), &pair.v.trace())?;
    Ok(Cor1Hypotheses {
        monotone: mono.monotone,
        monotonicity_margin: mono.margin,
        f12_nonpos: sign_condition(&d.f12, &d.mask, SignMode::Nonpos).holds,
        f12_nonneg: sign_condition(&d.f12, &d.mask, SignMode::Nonneg).holds,
        stability_evidence: evidence.map(|e| e.min_eigenvalue),
        stability_passed: evidence.is_some_and(|e| e.passed),
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct DecayRow {
    pub radius: f64,
    /// Curvature and tangential energies inside `B_{√R}^+`.
    pub lhs: f64,
    /// `∫_{√R<|X|<R} (y^{α₁}|∇_x U|² + y^{α₂}|∇_x V|²)/|X|²`.
    pub annulus_energy: f64,
    /// `C₃ annulus_energy / (log R)²` with `C₃ = 4`.
    pub bound: f64,
    /// Right-hand side of the decay bound evaluated with `φ_R`.
    pub cutoff_rhs: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayReport {
    pub rows: Vec<DecayRow>,
    /// Least-squares `C` in `lhs ≈ C / log R`.
    pub fitted_constant: f64,
    /// Slope of `log lhs` against `log(1/log R)`, when at least two rows are positive.
    pub decay_exponent: Option<f64>,
    pub hypotheses: Cor1Hypotheses,
}

/// Square of the cutoff-gradient constant used in the decay bound.
pub const DECAY_C3: f64 = 4.0;

/// Curvature energies on `B_{√R}^+` against the logarithmic-cutoff bound.
pub fn symmetry_decay_experiment(pair: &SolutionPair, radii: &[f64], hypotheses: &Cor1Hypotheses) -> Result<DecayReport> {
    if !hypotheses.holds() {
        return Err(Error::Precondition(format!(
            "decay-bound hypotheses not met (monotone {}, F12 <= 0 {}, stability evidence {:?}, F12 >= 0 {}); the decay bound is not claimed",
            hypotheses.monotone, hypotheses.f12_nonpos, hypotheses.stability_evidence, hypotheses.f12_nonneg
        )));
    }
    let g = pair.grid().clone();
    let eps = [default_eps(&pair.u), default_eps(&pair.v)];
    let geo = [geometry_of(&pair.u, eps[0]), geometry_of(&pair.v, eps[1])];
    let alphas = [pair.orders.0.alpha(), pair.orders.1.alpha()];
    let lhs_fields: Vec<ScalarField> = geo
        .iter()
        .map(|e| e.curvature_sq_energy.axpby(1.0, &e.tangential_sq, 1.0))
        .collect::<Result<_>>()?;
    let grad_sq = |f: &ScalarField| -> Vec<f64> {
        let parts: Vec<Vec<f64>> = (0..g.n()).map(|a| diff_x(&g, f.values(), a)).collect();
        (0..g.len()).map(|k| parts.iter().map(|c| c[k] * c[k]).sum()).collect()
    };
    let gsq = [grad_sq(&pair.u), grad_sq(&pair.v)];
    let mut rows = Vec::with_capacity(radii.len());
    for &r in radii {
        let phi = log_cutoff(r, &g)?;
        let inner = HalfBallRegion::new(&g, r.sqrt())?;
        let ann = HalfBallRegion::annulus(&g, r.sqrt(), r)?;
        let gphi = gradient(&phi);
        let cut = (r.sqrt() * 0.5).max(g.h());
        let mut lhs = 0.0;
        let mut annulus_energy = 0.0;
        let mut cutoff_rhs = 0.0;
        for i in 0..2 {
            lhs += weighted_volume_integral(&lhs_fields[i], alphas[i], &inner)?;
            let over_r2 = ScalarField::new(
                g.clone(),
                (0..g.len())
                    .map(|k| {
                        let rr = node_radius(&g, k);
                        if rr < cut {
                            0.0
                        } else {
                            gsq[i][k] / (rr * rr)
                        }
                    })
                    .collect(),
            )?;
            annulus_energy += weighted_volume_integral(&over_r2, alphas[i], &ann)?;
            let w = node_weights(&g, alphas[i]);
            cutoff_rhs += weighted_sum(&w, |k| gsq[i][k] * gphi.components.iter().map(|c| c.values()[k].powi(2)).sum::<f64>());
        }
        let l = r.ln();
        rows.push(DecayRow { radius: r, lhs, annulus_energy, bound: DECAY_C3 * annulus_energy / (l * l), cutoff_rhs });
    }
    let inv: Vec<f64> = rows.iter().map(|r| 1.0 / r.radius.ln()).collect();
    let num: f64 = rows.iter().zip(&inv).map(|(r, i)| r.lhs * i).sum();
    let den: f64 = inv.iter().map(|i| i * i).sum();
    let fitted_constant = if den > 0.0 { num / den } else { 0.0 };
    let pos: Vec<(f64, f64)> = rows.iter().zip(&inv).filter(|(r, _)| r.lhs > 0.0).map(|(r, i)| (i.ln(), r.lhs.ln())).collect();
    let decay_exponent = if pos.len() >= 2 {
        let (x, y): (Vec<f64>, Vec<f64>) = pos.into_iter().unzip();
        Some(linear_fit(&x, &y).1)
    } else {
        None
    };
    Ok(DecayReport { rows, fitted_constant, decay_exponent, hypotheses: hypotheses.clone() })
}

/// One level of a one-dimensional profile `u₀(t, y)`.
#[derive(Debug, Clone, Serialize)]
pub struct ProfileLevel {
    pub y: f64,
    pub t: Vec<f64>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SymmetryResult {
    pub omega: [f64; 2],
    pub profile: Vec<ProfileLevel>,
    pub fit_residual: f64,
    pub constant_field: bool,
}

/// Degree of the profile B-spline.
const PROFILE_DEGREE: usize = 5;

struct ProfileFit {
    residual: f64,
    t: Vec<f64>,
    values: Vec<f64>,
}

/// Cardinal B-spline of degree `d`, supported on `[0, d + 1]`.
fn cardinal(d: usize, x: f64) -> f64 {
    if d == 0 {
        return if (0.0..1.0).contains(&x) { 1.0 } else { 0.0 };
    }
    let k = d as f64;
    (x * cardinal(d - 1, x) + (k + 1.0 - x) * cardinal(d - 1, x - 1.0)) / k
}

/// First basis index and the `PROFILE_DEGREE + 1` nonzero basis values at
/// `z` (knot units); basis `j` is supported on `[j - degree, j + 1]`.
fn bspline_row(z: f64, intervals: usize) -> (usize, [f64; PROFILE_DEGREE + 1]) {
    let cell = (z.floor().max(0.0) as usize).min(intervals - 1);
    let u = z - cell as f64;
    let mut b = [0.0; PROFILE_DEGREE + 1];
    for (a, v) in b.iter_mut().enumerate() {
        *v = cardinal(PROFILE_DEGREE, u + (PROFILE_DEGREE - a) as f64);
    }
    (cell, b)
}

/// Weighted least-squares quintic spline of `u` in `t = ω·x` with knot
/// spacing equal to the grid step, and the relative L² misfit.
///
/// Tying the knot spacing to `h` caps the resolution along `t` at roughly one
/// degree of freedom per grid column, so a near-axis direction cannot resolve
/// variation across a column.
fn profile_fit(grid: &HalfSpaceGrid, u: &[f64], w: &[f64], omega: [f64; 2], with_table: bool) -> ProfileFit {
    let np = u.len();
    let t: Vec<f64> = (0..np)
        .map(|p| {
            let x = grid.coords(p);
            omega[0] * x[0] + omega[1] * x[1]
        })
        .collect();
    let lo = t.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = t.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let wsum: f64 = w.iter().sum();
    let mean = w.iter().zip(u).map(|(a, b)| a * b).sum::<f64>() / wsum;
    let den: f64 = w.iter().zip(u).map(|(a, b)| a * (b - mean).powi(2)).sum();
    let intervals = (((hi - lo) / grid.h()).ceil() as usize).max(1);
    let delta = ((hi - lo) / intervals as f64).max(1e-300);
    let m = intervals + PROFILE_DEGREE;
    let mut normal = DMatrix::<f64>::zeros(m, m);
    let mut rhs = DVector::<f64>::zeros(m);
    let rows: Vec<(usize, [f64; PROFILE_DEGREE + 1])> = t.iter().map(|&x| bspline_row((x - lo) / delta, intervals)).collect();
    for p in 0..np {
        let (c, b) = rows[p];
        for a in 0..=PROFILE_DEGREE {
            rhs[c + a] += w[p] * b[a] * u[p];
            for d in 0..=PROFILE_DEGREE {
                normal[(c + a, c + d)] += w[p] * b[a] * b[d];
            }
        }
    }
    let ridge = 1e-12 * (0..m).map(|i| normal[(i, i)]).fold(0.0, f64::max);
    for i in 0..m {
        normal[(i, i)] += ridge;
    }
    let coef = normal.cholesky().map(|c| c.solve(&rhs)).unwrap_or_else(|| DVector::zeros(m));
    let eval = |(c, b): (usize, [f64; PROFILE_DEGREE + 1])| (0..=PROFILE_DEGREE).map(|a| coef[c + a] * b[a]).sum::<f64>();
    let num: f64 = (0..np).map(|p| w[p] * (u[p] - eval(rows[p])).powi(2)).sum();
    let (mut tt, mut vv) = (Vec::new(), Vec::new());
    if with_table {
        for i in 0..=intervals {
            let z = i as f64;
            tt.push(lo + z * delta);
            vv.push(eval(bspline_row(z, intervals)));
        }
    }
    let residual = if den > 0.0 { (num / den).sqrt() } else { 0.0 };
    ProfileFit { residual, t: tt, values: vv }
}

/// Half-width (radians) of the angle search around the gradient-moment direction.
const ANGLE_BRACKET: f64 = 0.05;
const ANGLE_ITERS: usize = 60;

fn direction_from_moments(grid: &HalfSpaceGrid, u: &[f64], w: &[f64]) -> Option<[f64; 2]> {
    let d0 = diff_x(grid, u, 0);
    let d1 = diff_x(grid, u, 1);
    let inner = interior_plane(grid);
    let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
    for p in 0..u.len() {
        if inner[p] {
            a += w[p] * d0[p] * d0[p];
            b += w[p] * d0[p] * d1[p];
            c += w[p] * d1[p] * d1[p];
        }
    }
    let scale = u.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    if a + c <= 1e-24 * scale * scale * w.iter().sum::<f64>() {
        return None;
    }
    // Principal eigenvector of [[a, b], [b, c]].
    let theta = 0.5 * (2.0 * b).atan2(a - c);
    let mut omega = [theta.cos(), theta.sin()];
    let (g0, g1) = (
        (0..u.len()).map(|p| w[p] * d0[p]).sum::<f64>(),
        (0..u.len()).map(|p| w[p] * d1[p]).sum::<f64>(),
    );
    let lead = if (omega[0] * g0 + omega[1] * g1).abs() > 0.0 { omega[0] * g0 + omega[1] * g1 } else { omega[0] + omega[1] };
    if lead < 0.0 {
        omega = [-omega[0], -omega[1]];
    }
    Some(omega)
}

/// Direction `ω` and profile `u₀` with `u ≈ u₀(ω·x)` on the trace plane.
///
/// `ω` starts from the principal eigenvector of `Σ ∇u ∇uᵀ` and is refined by
/// minimizing the profile misfit over a small angle bracket.
pub fn extract_direction(trace: &TraceField) -> Result<SymmetryResult> {
    let g = trace.grid();
    if g.n() != 2 {
        return Err(invalid("n", g.n(), "2 for direction extraction"));
    }
    let u = trace.values();
    let w = g.x_masses();
    let Some(omega0) = direction_from_moments(g, u, &w) else {
        let mean = u.iter().sum::<f64>() / u.len() as f64;
        return Ok(SymmetryResult {
            omega: [1.0, 0.0],
            profile: vec![ProfileLevel { y: 0.0, t: vec![0.0], values: vec![mean] }],
            fit_residual: 0.0,
            constant_field: true,
        });
    };
    let theta0 = omega0[1].atan2(omega0[0]);
    let at = |th: f64| [th.cos(), th.sin()];
    let r0 = profile_fit(g, u, &w, omega0, false).residual;
    let (th, r1) = golden_min(|th| profile_fit(g, u, &w, at(th), false).residual, theta0 - ANGLE_BRACKET, theta0 + ANGLE_BRACKET, ANGLE_ITERS);
    let omega = if r1 < r0 { at(th) } else { omega0 };
    let fit = profile_fit(g, u, &w, omega, true);
    Ok(SymmetryResult {
        omega,
        profile: vec![ProfileLevel { y: 0.0, t: fit.t, values: fit.values }],
        fit_residual: fit.residual,
        constant_field: false,
    })
}

/// Direction from the trace, profiles `U₀(·, y)` on every `level_stride`-th
/// level; `fit_residual` is the largest level misfit.
pub fn extract_direction_field(u: &ScalarField, level_stride: usize) -> Result<SymmetryResult> {
    let mut res = extract_direction(&u.trace())?;
    if res.constant_field {
        return Ok(res);
    }
    let g = u.grid();
    let w = g.x_masses();
    res.profile.clear();
    let mut worst = 0.0f64;
    for j in (0..g.levels()).step_by(level_stride.max(1)) {
        let fit = profile_fit(g, u.level(j), &w, res.omega, true);
        worst = worst.max(fit.residual);
        res.profile.push(ProfileLevel { y: g.y()[j], t: fit.t, values: fit.values });
    }
    res.fit_residual = worst;
    Ok(res)
}

/// Angle between `a` and `±b` (unit vectors) in radians.
pub fn fold_angle(a: [f64; 2], b: [f64; 2]) -> f64 {
    let dot = a[0] * b[0] + a[1] * b[1];
    let cross = a[0] * b[1] - a[1] * b[0];
    cross.abs().atan2(dot.abs())
}

/// Angle between `ω_u` and `±ω_v` in radians.
pub fn alignment_check(res_u: &SymmetryResult, res_v: &SymmetryResult, threshold: f64) -> Result<f64> {
    for (name, r) in [("u", res_u), ("v", res_v)] {
        if r.constant_field || !(r.fit_residual < threshold) {
            return Err(Error::Precondition(format!(
                "{name} is not one-dimensional (fit residual {:e}, threshold {threshold:e}{})",
                r.fit_residual,
                if r.constant_field { ", constant field" } else { "" }
            )));
        }
    }
    Ok(fold_angle(res_u.omega, res_v.omega))
}

/// Sampled test of `F₁₂ > 0` on `I_u × I_v` together with `(I_u × I_v) ∩ Im(u, v) ≠ ∅`.
#[derive(Debug, Clone, Serialize)]
pub struct IntervalHypothesis {
    pub interval_u: (f64, f64),
    pub interval_v: (f64, f64),
    pub min_f12_on_rectangle: f64,
    pub f12_positive: bool,
    /// Trace points with `(u, v)` inside the open rectangle.
    pub image_points_inside: usize,
    pub bounding_box_intersects: bool,
    pub holds: bool,
}

/// Lattice resolution per side for sampling `F₁₂` on the rectangle.
pub const RECTANGLE_SAMPLES: usize = 33;

pub fn interval_hypothesis(
    potential: &dyn CoupledPotential,
    u: &TraceField,
    v: &TraceField,
    interval_u: (f64, f64),
    interval_v: (f64, f64),
) -> Result<IntervalHypothesis> {
    same_grid(u.grid_arc(), v.grid_arc())?;
    if !(interval_u.0 < interval_u.1) || !(interval_v.0 < interval_v.1) {
        return Err(invalid("interval", format!("{interval_u:?} x {interval_v:?}"), "nonempty open intervals"));
    }
    let m = RECTANGLE_SAMPLES;
    let mut min_f12 = f64::INFINITY;
    for i in 0..m {
        for j in 0..m {
            // Interior lattice of the open rectangle.
            let t = interval_u.0 + (interval_u.1 - interval_u.0) * (i as f64 + 0.5) / m as f64;
            let s = interval_v.0 + (interval_v.1 - interval_v.0) * (j as f64 + 0.5) / m as f64;
            if potential.is_in_d(t, s) {
                min_f12 = min_f12.min(potential.d12(t, s));
            }
        }
    }
    let inside = |a: f64, (lo, hi): (f64, f64)| a > lo && a < hi;
    let image_points_inside = u.values().iter().zip(v.values()).filter(|(a, b)| inside(**a, interval_u) && inside(**b, interval_v)).count();
    let bounding_box_intersects = u.min() < interval_u.1 && u.max() > interval_u.0 && v.min() < interval_v.1 && v.max() > interval_v.0;
    let f12_positive = min_f12 > 0.0;
    Ok(IntervalHypothesis {
        interval_u,
        interval_v,
        min_f12_on_rectangle: min_f12,
        f12_positive,
        image_points_inside,
        bounding_box_intersects,
        holds: f12_positive && image_points_inside > 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::FractionalOrder;
    use crate::potential::Builtin;

    fn grid2(nx: usize) -> Arc<HalfSpaceGrid> {
        Arc::new(HalfSpaceGrid::new(2, 4.0, nx, 4.0, 8, 1.0, false).unwrap())
    }

    #[test]
    fn log_cutoff_reference_values() {
        let r = 4f64.exp();
        assert_eq!(log_cutoff_value(2f64.exp(), r), 1.0);
        assert!((log_cutoff_value(3f64.exp(), r) - 0.5).abs() < 1e-14);
        assert_eq!(log_cutoff_value(5f64.exp(), r), 0.0);
    }

    #[test]
    fn linear_pair_is_monotone_with_unit_margin() {
        let g = grid2(17);
        let u = ScalarField::from_fn(g.clone(), |x, _| x[1]).unwrap();
        let v = u.map(|t| -t).unwrap();
        let o = FractionalOrder::new(0.5).unwrap();
        let pair = SolutionPair::from_fields(u, v, (o, o), Arc::new(Builtin::Zero)).unwrap();
        let m = monotonicity_check(&pair);
        assert!(m.monotone);
        assert!((m.margin - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_test_pair_has_zero_form() {
        let g = grid2(9);
        let u = ScalarField::from_fn(g.clone(), |x, _| x[1].tanh()).unwrap();
        let o = FractionalOrder::new(0.5).unwrap();
        let pair = SolutionPair::from_fields(u.clone(), u.map(|t| -t).unwrap(), (o, o), Arc::new(Builtin::DoubleWell)).unwrap();
        let z = ScalarField::zeros(g);
        let t = TestFunctionPair::new("zero", z.clone(), z, 2.0).unwrap();
        assert_eq!(stability_form(&pair, &t).unwrap(), 0.0);
    }

    #[test]
    fn support_is_verified() {
        let g = grid2(9);
        let one = ScalarField::from_fn(g.clone(), |_, _| 1.0).unwrap();
        assert!(TestFunctionPair::new("one", one.clone(), ScalarField::zeros(g), 2.0).is_err());
    }
}
