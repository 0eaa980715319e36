//! Level-set geometry of a field, level by level in `y`.
//!
//! With `g = |∇_x U|` and Hessian rows `∇_x U_{x_j}`, the curvature energy is
//! obtained from
//! `K^2 g^2 + |∇_L g|^2 = Σ_j |∇_x U_{x_j}|^2 - |∇_x g|^2`,
//! where `∇_L g` is `∇_x g` with its component along `ν = ∇_x U / g` removed.
//! For `n = 2` the curvature is also computed as `div ν` for cross-checking.

use serde::Serialize;

use crate::grid::{diff_x, diff_y, ScalarField};

#[derive(Debug, Clone)]
pub struct GeometryFields {
    pub grad_x_norm: ScalarField,
    /// `K^2 |∇_x U|^2` on the mask, 0 elsewhere.
    pub curvature_sq_energy: ScalarField,
    /// `|∇_L |∇_x U||^2` on the mask, 0 elsewhere.
    pub tangential_sq: ScalarField,
    pub nondegenerate_mask: Vec<bool>,
    /// Mask points whose whole central stencil lies in the mask.
    pub interior_mask: Vec<bool>,
    /// `|K_div^2 g^2 + |∇_L g|^2 - RHS|`, the identity checked with the
    /// independently computed curvature (`n = 2`; zero for `n = 1`).
    pub identity_residual: ScalarField,
    /// `div ν` on the mask (`n = 2`).
    pub divergence_curvature: Option<ScalarField>,
    pub eps_grad: f64,
}

/// Default mask threshold: `1e-6` times the oscillation of the field.
pub fn default_eps(u: &ScalarField) -> f64 {
    1e-6 * u.oscillation()
}

fn stencil_interior(grid: &crate::grid::HalfSpaceGrid, mask: &[bool]) -> Vec<bool> {
    let np = grid.plane_len();
    let nx = grid.nx();
    (0..mask.len())
        .map(|k| {
            if !mask[k] {
                return false;
            }
            let (p, base) = (k % np, k - k % np);
            let ix = grid.split(p);
            for ax in 0..grid.n() {
                let i = ix[ax];
                let stride = if ax == 0 { 1 } else { nx };
                for d in [-2i64, -1, 1, 2] {
                    let j = i as i64 + d;
                    let jj = if grid.periodic() {
                        j.rem_euclid(nx as i64) as usize
                    } else if j < 0 || j >= nx as i64 {
                        return false;
                    } else {
                        j as usize
                    };
                    if !mask[base + p - i * stride + jj * stride] {
                        return false;
                    }
                }
            }
            true
        })
        .collect()
}

/// Geometric fields of `U`; points with `|∇_x U| <= eps_grad` are degenerate.
pub fn geometry_of(u: &ScalarField, eps_grad: f64) -> GeometryFields {
    let grid = u.grid_arc().clone();
    let n = grid.n();
    let vals = u.values();
    let grads: Vec<Vec<f64>> = (0..n).map(|a| diff_x(&grid, vals, a)).collect();
    let len = vals.len();
    let g: Vec<f64> = (0..len).map(|k| grads.iter().map(|c| c[k] * c[k]).sum::<f64>().sqrt()).collect();
    let mask: Vec<bool> = g.iter().map(|v| *v > eps_grad).collect();
    let hess: Vec<Vec<Vec<f64>>> = grads.iter().map(|c| (0..n).map(|b| diff_x(&grid, c, b)).collect()).collect();
    let dg: Vec<Vec<f64>> = (0..n).map(|a| diff_x(&grid, &g, a)).collect();
    let mut curv = vec![0.0; len];
    let mut tang = vec![0.0; len];
    let mut resid = vec![0.0; len];
    let div = if n == 2 {
        let nu: Vec<Vec<f64>> = (0..n)
            .map(|a| (0..len).map(|k| if mask[k] { grads[a][k] / g[k] } else { 0.0 }).collect())
            .collect();
        let d0 = diff_x(&grid, &nu[0], 0);
        let d1 = diff_x(&grid, &nu[1], 1);
        Some((0..len).map(|k| if mask[k] { d0[k] + d1[k] } else { 0.0 }).collect::<Vec<f64>>())
    } else {
        None
    };
    for k in 0..len {
        if !mask[k] {
            continue;
        }
        let hrows: f64 = (0..n).map(|a| (0..n).map(|b| hess[a][b][k].powi(2)).sum::<f64>()).sum();
        let dg2: f64 = (0..n).map(|a| dg[a][k].powi(2)).sum();
        let along: f64 = (0..n).map(|a| dg[a][k] * grads[a][k] / g[k]).sum();
        let t = (dg2 - along * along).max(0.0);
        tang[k] = t;
        let rhs = hrows - dg2;
        curv[k] = (rhs - t).max(0.0);
        if let Some(d) = &div {
            resid[k] = (d[k] * d[k] * g[k] * g[k] + t - rhs).abs();
        }
    }
    let interior_mask = stencil_interior(&grid, &mask);
    let field = |v: Vec<f64>| ScalarField::new(grid.clone(), v).expect("finite geometry field");
    GeometryFields {
        grad_x_norm: field(g),
        curvature_sq_energy: field(curv),
        tangential_sq: field(tang),
        nondegenerate_mask: mask,
        interior_mask,
        identity_residual: field(resid),
        divergence_curvature: div.map(field),
        eps_grad,
    }
}

/// `Σ_j (∂_y U_{x_j})^2 - (∂_y |∇_x U|)^2` on the mask, 0 elsewhere.
///
/// A point counts as masked only if its whole y-stencil is nondegenerate and
/// `∇_x U` keeps its orientation across the stencil, since `|∇_x U|` is not
/// differentiable where the gradient passes through zero.
pub fn vertical_excess(u: &ScalarField, eps_grad: f64) -> ScalarField {
    let grid = u.grid_arc().clone();
    let vals = u.values();
    let np = grid.plane_len();
    let ny = grid.ny();
    let grads: Vec<Vec<f64>> = (0..grid.n()).map(|a| diff_x(&grid, vals, a)).collect();
    let g: Vec<f64> = (0..vals.len()).map(|k| grads.iter().map(|c| c[k] * c[k]).sum::<f64>().sqrt()).collect();
    let gy = diff_y(&grid, &g);
    let dy: Vec<Vec<f64>> = grads.iter().map(|c| diff_y(&grid, c)).collect();
    let aligned = |k: usize, m: usize| g[m] > eps_grad && grads.iter().map(|c| c[k] * c[m]).sum::<f64>() > 0.0;
    let out = (0..vals.len())
        .map(|k| {
            let j = k / np;
            let below = j == 0 || aligned(k, k - np);
            let above = j == ny || aligned(k, k + np);
            if g[k] > eps_grad && below && above {
                dy.iter().map(|c| c[k] * c[k]).sum::<f64>() - gy[k] * gy[k]
            } else {
                0.0
            }
        })
        .collect();
    ScalarField::new(grid, out).expect("finite excess")
}

/// Summary statistics of one level.
#[derive(Debug, Clone, Serialize)]
pub struct LevelSummary {
    pub y: f64,
    pub mask_fraction: f64,
    pub curvature_energy: f64,
    pub tangential_energy: f64,
}

/// Per-level x-integrals of the curvature and tangential energies.
pub fn level_summaries(geo: &GeometryFields) -> Vec<LevelSummary> {
    let grid = geo.grad_x_norm.grid();
    let np = grid.plane_len();
    let xm = grid.x_masses();
    (0..grid.levels())
        .map(|j| {
            let r = j * np..(j + 1) * np;
            let m = geo.nondegenerate_mask[r.clone()].iter().filter(|b| **b).count();
            let c = geo.curvature_sq_energy.level(j);
            let t = geo.tangential_sq.level(j);
            LevelSummary {
                y: grid.y()[j],
                mask_fraction: m as f64 / np as f64,
                curvature_energy: (0..np).map(|p| xm[p] * c[p]).sum(),
                tangential_energy: (0..np).map(|p| xm[p] * t[p]).sum(),
            }
        })
        .collect()
}

/// Relative L² size of the identity residual over mask-interior points of
/// the given level, normalized by the right-hand side of the identity.
pub fn identity_relative_residual(geo: &GeometryFields, level: usize) -> f64 {
    let grid = geo.grad_x_norm.grid();
    let np = grid.plane_len();
    let xm = grid.x_masses();
    let (mut num, mut den) = (0.0, 0.0);
    for p in 0..np {
        let k = level * np + p;
        if geo.interior_mask[k] {
            let rhs = geo.curvature_sq_energy.values()[k] + geo.tangential_sq.values()[k];
            num += xm[p] * geo.identity_residual.values()[k].powi(2);
            den += xm[p] * rhs * rhs;
        }
    }
    if den > 0.0 {
        (num / den).sqrt()
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::HalfSpaceGrid;
    use std::sync::Arc;

    #[test]
    fn flat_level_sets_have_no_curvature() {
        let g = Arc::new(HalfSpaceGrid::new(2, 1.0, 16, 1.0, 3, 1.0, false).unwrap());
        let u = ScalarField::from_fn(g, |x, y| 0.6 * x[0] + 0.8 * x[1] + y).unwrap();
        let geo = geometry_of(&u, 1e-9);
        assert!(geo.nondegenerate_mask.iter().all(|b| *b));
        assert!(geo.curvature_sq_energy.max_abs() < 1e-20);
        assert!(geo.tangential_sq.max_abs() < 1e-20);
    }
}
