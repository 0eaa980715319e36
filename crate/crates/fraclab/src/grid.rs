//! Truncated half-space grids, fields living on them, and quadrature over
//! half-balls and annuli.
//!
//! Storage order for every field is y-level outermost, then `x_n`, ..., with
//! `x_1` fastest. Dual cells are used for all sums: node `i` on a periodic
//! axis owns `[x_i - h/2, x_i + h/2]`, end nodes of a non-periodic axis own a
//! half cell, and level `j` owns `[y_{j-1/2}, y_{j+1/2}]` clipped to `[0, Y]`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numerics::pairwise_sum;

/// Samples per axis used to estimate the covered fraction of sphere-cut cells.
pub const SUBSAMPLE: usize = 4;

/// Order `s` of a fractional equation together with `alpha = 1 - 2s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FractionalOrder {
    s: f64,
    alpha: f64,
}

impl FractionalOrder {
    pub fn new(s: f64) -> Result<Self> {
        if !(s > 0.0 && s < 1.0) {
            return Err(invalid("s", s, "0 < s < 1"));
        }
        Ok(Self { s, alpha: 1.0 - 2.0 * s })
    }

    pub fn from_alpha(alpha: f64) -> Result<Self> {
        if !(alpha > -1.0 && alpha < 1.0) {
            return Err(invalid("alpha", alpha, "-1 < alpha < 1"));
        }
        Self::new((1.0 - alpha) / 2.0)
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

/// Exact `∫_a^b y^alpha dy` for `0 <= a <= b`.
pub fn weight_integral(a: f64, b: f64, alpha: f64) -> f64 {
    let p = 1.0 + alpha;
    (b.powf(p) - a.powf(p)) / p
}

/// Exact `∫_a^b y^{-alpha} dy`.
pub fn inverse_weight_integral(a: f64, b: f64, alpha: f64) -> f64 {
    weight_integral(a, b, -alpha)
}

/// Grid description as it appears in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub n: usize,
    #[serde(rename = "L")]
    pub l: f64,
    pub nx: usize,
    #[serde(rename = "Y")]
    pub y_max: f64,
    pub ny: usize,
    /// Grading exponent; `None` picks `max(1, 2/(1+alpha))` for the given order.
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default = "default_true")]
    pub periodic: bool,
}

fn default_true() -> bool {
    true
}

/// Default grading exponent for a weight exponent `alpha`.
pub fn default_grading(alpha: f64) -> f64 {
    (2.0 / (1.0 + alpha)).max(1.0)
}

/// Tensor grid on `[-L, L]^n x [0, Y]` with graded levels `y_j = Y (j/ny)^gamma`.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfSpaceGrid {
    n: usize,
    l: f64,
    nx: usize,
    y_max: f64,
    ny: usize,
    gamma: f64,
    periodic: bool,
    x: Vec<f64>,
    y: Vec<f64>,
    y_bounds: Vec<f64>,
}

impl HalfSpaceGrid {
    pub fn new(n: usize, l: f64, nx: usize, y_max: f64, ny: usize, gamma: f64, periodic: bool) -> Result<Self> {
        if n != 1 && n != 2 {
            return Err(invalid("n", n, "1 or 2"));
        }
        if !(l > 0.0 && l.is_finite()) {
            return Err(invalid("L", l, "finite L > 0"));
        }
        if !(y_max > 0.0 && y_max.is_finite()) {
            return Err(invalid("Y", y_max, "finite Y > 0"));
        }
        if nx < 3 {
            return Err(invalid("nx", nx, "nx >= 3"));
        }
        if ny < 2 {
            return Err(invalid("ny", ny, "ny >= 2"));
        }
        if !(gamma >= 1.0 && gamma.is_finite()) {
            return Err(invalid("gamma", gamma, "gamma >= 1"));
        }
        let h = if periodic { 2.0 * l / nx as f64 } else { 2.0 * l / (nx - 1) as f64 };
        let x = (0..nx).map(|i| -l + i as f64 * h).collect();
        let y: Vec<f64> = (0..=ny)
            .map(|j| y_max * (j as f64 / ny as f64).powf(gamma))
            .collect();
        let mut y_bounds = Vec::with_capacity(ny + 2);
        y_bounds.push(0.0);
        for j in 1..=ny {
            y_bounds.push(0.5 * (y[j - 1] + y[j]));
        }
        y_bounds.push(y_max);
        Ok(Self { n, l, nx, y_max, ny, gamma, periodic, x, y, y_bounds })
    }

    /// Builds a grid from a spec; a missing grading exponent is chosen for `alpha`.
    pub fn from_spec(spec: &GridSpec, alpha: f64) -> Result<Self> {
        let gamma = spec.gamma.unwrap_or_else(|| default_grading(alpha));
        Self::new(spec.n, spec.l, spec.nx, spec.y_max, spec.ny, gamma, spec.periodic)
    }

    pub fn spec(&self) -> GridSpec {
        GridSpec {
            n: self.n,
            l: self.l,
            nx: self.nx,
            y_max: self.y_max,
            ny: self.ny,
            gamma: Some(self.gamma),
            periodic: self.periodic,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn l(&self) -> f64 {
        self.l
    }
    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn y_max(&self) -> f64 {
        self.y_max
    }
    pub fn ny(&self) -> usize {
        self.ny
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    pub fn periodic(&self) -> bool {
        self.periodic
    }
    /// Node spacing along each x-axis.
    pub fn h(&self) -> f64 {
        self.x[1] - self.x[0]
    }
    pub fn x(&self) -> &[f64] {
        &self.x
    }
    /// Levels `y_0 = 0 < ... < y_ny = Y`.
    pub fn y(&self) -> &[f64] {
        &self.y
    }
    /// Number of levels, `ny + 1`.
    pub fn levels(&self) -> usize {
        self.ny + 1
    }
    /// Points in one y-plane.
    pub fn plane_len(&self) -> usize {
        self.nx.pow(self.n as u32)
    }
    pub fn len(&self) -> usize {
        self.plane_len() * self.levels()
    }
    pub fn is_empty(&self) -> bool {
        false
    }
    pub fn index(&self, p: usize, j: usize) -> usize {
        j * self.plane_len() + p
    }
    /// Per-axis indices of a flat plane index.
    pub fn split(&self, p: usize) -> [usize; 2] {
        if self.n == 1 {
            [p, 0]
        } else {
            [p % self.nx, p / self.nx]
        }
    }
    pub fn join(&self, ix: [usize; 2]) -> usize {
        if self.n == 1 {
            ix[0]
        } else {
            ix[0] + self.nx * ix[1]
        }
    }
    /// Coordinates of plane point `p` (unused axes are 0).
    pub fn coords(&self, p: usize) -> [f64; 2] {
        let ix = self.split(p);
        if self.n == 1 {
            [self.x[ix[0]], 0.0]
        } else {
            [self.x[ix[0]], self.x[ix[1]]]
        }
    }
    /// `|x|` of plane point `p`.
    pub fn radius_x(&self, p: usize) -> f64 {
        let c = self.coords(p);
        (c[0] * c[0] + c[1] * c[1]).sqrt()
    }

    /// Extent of the dual cell of x-node `i` along one axis.
    pub fn x_cell(&self, i: usize) -> (f64, f64) {
        let h = self.h();
        let xi = self.x[i];
        if self.periodic {
            (xi - 0.5 * h, xi + 0.5 * h)
        } else if i == 0 {
            (xi, xi + 0.5 * h)
        } else if i == self.nx - 1 {
            (xi - 0.5 * h, xi)
        } else {
            (xi - 0.5 * h, xi + 0.5 * h)
        }
    }

    /// Mass of the x-dual cell of plane point `p`.
    pub fn x_mass(&self, p: usize) -> f64 {
        let ix = self.split(p);
        let mut m = 1.0;
        for ax in 0..self.n {
            let (a, b) = self.x_cell(ix[ax]);
            m *= b - a;
        }
        m
    }

    pub fn x_masses(&self) -> Vec<f64> {
        (0..self.plane_len()).map(|p| self.x_mass(p)).collect()
    }

    /// Extent of the dual cell of level `j`.
    pub fn y_cell(&self, j: usize) -> (f64, f64) {
        (self.y_bounds[j], self.y_bounds[j + 1])
    }

    /// Exact `∫ y^alpha` over each level's dual cell.
    pub fn y_masses(&self, alpha: f64) -> Vec<f64> {
        (0..self.levels())
            .map(|j| {
                let (a, b) = self.y_cell(j);
                weight_integral(a, b, alpha)
            })
            .collect()
    }

    /// Largest half-ball radius contained in the grid.
    pub fn max_radius(&self) -> f64 {
        self.l.min(self.y_max)
    }

    pub fn same_shape(&self, other: &HalfSpaceGrid) -> bool {
        self == other
    }
}

/// Scalar field over all grid nodes.
#[derive(Debug, Clone)]
pub struct ScalarField {
    grid: Arc<HalfSpaceGrid>,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Arc<HalfSpaceGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch("field length differs from grid size"));
        }
        check_finite(&values, "scalar field")?;
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Arc<HalfSpaceGrid>) -> Self {
        let values = vec![0.0; grid.len()];
        Self { grid, values }
    }

    /// Samples `f(x, y)` at every node.
    pub fn from_fn(grid: Arc<HalfSpaceGrid>, f: impl Fn([f64; 2], f64) -> f64) -> Result<Self> {
        let np = grid.plane_len();
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..grid.levels() {
            let y = grid.y()[j];
            for p in 0..np {
                values.push(f(grid.coords(p), y));
            }
        }
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &HalfSpaceGrid {
        &self.grid
    }
    pub fn grid_arc(&self) -> &Arc<HalfSpaceGrid> {
        &self.grid
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
    pub fn level(&self, j: usize) -> &[f64] {
        let np = self.grid.plane_len();
        &self.values[j * np..(j + 1) * np]
    }
    pub fn at(&self, p: usize, j: usize) -> f64 {
        self.values[self.grid.index(p, j)]
    }
    /// Values at `y = 0`.
    pub fn trace(&self) -> TraceField {
        TraceField { grid: self.grid.clone(), values: self.level(0).to_vec() }
    }

    /// Pointwise map, for building derived fields.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.grid.clone(), self.values.iter().map(|&v| f(v)).collect())
    }

    /// `a * self + b * other`.
    pub fn axpby(&self, a: f64, other: &ScalarField, b: f64) -> Result<Self> {
        same_grid(&self.grid, &other.grid)?;
        let v = self.values.iter().zip(&other.values).map(|(x, y)| a * x + b * y).collect();
        Self::new(self.grid.clone(), v)
    }

    pub fn mul(&self, other: &ScalarField) -> Result<Self> {
        same_grid(&self.grid, &other.grid)?;
        let v = self.values.iter().zip(&other.values).map(|(x, y)| x * y).collect();
        Self::new(self.grid.clone(), v)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn oscillation(&self) -> f64 {
        oscillation(&self.values)
    }
}

/// Field on the `y = 0` plane.
#[derive(Debug, Clone)]
pub struct TraceField {
    grid: Arc<HalfSpaceGrid>,
    values: Vec<f64>,
}

impl TraceField {
    pub fn new(grid: Arc<HalfSpaceGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.plane_len() {
            return Err(Error::GridMismatch("trace length differs from plane size"));
        }
        check_finite(&values, "trace field")?;
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Arc<HalfSpaceGrid>, f: impl Fn([f64; 2]) -> f64) -> Result<Self> {
        let values = (0..grid.plane_len()).map(|p| f(grid.coords(p))).collect();
        Self::new(grid, values)
    }

    pub fn constant(grid: Arc<HalfSpaceGrid>, c: f64) -> Self {
        let values = vec![c; grid.plane_len()];
        Self { grid, values }
    }

    pub fn grid(&self) -> &HalfSpaceGrid {
        &self.grid
    }
    pub fn grid_arc(&self) -> &Arc<HalfSpaceGrid> {
        &self.grid
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.grid.clone(), self.values.iter().map(|&v| f(v)).collect())
    }
    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

pub(crate) fn same_grid(a: &Arc<HalfSpaceGrid>, b: &Arc<HalfSpaceGrid>) -> Result<()> {
    if Arc::ptr_eq(a, b) || a == b {
        Ok(())
    } else {
        Err(Error::GridMismatch("fields live on different grids"))
    }
}

fn check_finite(values: &[f64], what: &str) -> Result<()> {
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Data(format!("{what} has a non-finite value at flat index {i}")));
    }
    Ok(())
}

pub(crate) fn oscillation(v: &[f64]) -> f64 {
    let (lo, hi) = v
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    if lo.is_finite() {
        hi - lo
    } else {
        0.0
    }
}

/// Covered fractions of grid cells by `B_R^+` (or by an annulus) and of
/// trace-plane cells by the disc `{|x| <= R}`.
#[derive(Debug, Clone)]
pub struct HalfBallRegion {
    inner: f64,
    radius: f64,
    volume: Vec<f64>,
    plane: Vec<f64>,
}

impl HalfBallRegion {
    /// Half-ball `B_R^+` centered at the origin.
    pub fn new(grid: &HalfSpaceGrid, radius: f64) -> Result<Self> {
        Self::annulus(grid, 0.0, radius)
    }

    /// Annulus `{r1 < |X| < r2}` intersected with the half-space.
    pub fn annulus(grid: &HalfSpaceGrid, r1: f64, r2: f64) -> Result<Self> {
        if !(r2 > 0.0) || !(r1 >= 0.0) || r1 >= r2 {
            return Err(invalid("radius", format!("({r1}, {r2})"), "0 <= r1 < r2"));
        }
        let limit = grid.max_radius();
        if r2 > limit * (1.0 + 1e-12) {
            return Err(Error::OutOfDomain { what: "half-ball region", radius: r2, limit });
        }
        let np = grid.plane_len();
        let mut volume = Vec::with_capacity(grid.len());
        for j in 0..grid.levels() {
            let yc = grid.y_cell(j);
            for p in 0..np {
                let b = cell_box(grid, p, Some(yc));
                volume.push(coverage(&b, grid.n() + 1, r2) - coverage(&b, grid.n() + 1, r1));
            }
        }
        let plane = (0..np)
            .map(|p| {
                let b = cell_box(grid, p, None);
                coverage(&b, grid.n(), r2) - coverage(&b, grid.n(), r1)
            })
            .collect();
        Ok(Self { inner: r1, radius: r2, volume, plane })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }
    pub fn inner_radius(&self) -> f64 {
        self.inner
    }
    /// Per-node covered fraction, in field storage order.
    pub fn volume_weights(&self) -> &[f64] {
        &self.volume
    }
    /// Per-node covered fraction on the trace plane.
    pub fn plane_weights(&self) -> &[f64] {
        &self.plane
    }
}

type CellBox = [(f64, f64); 3];

fn cell_box(grid: &HalfSpaceGrid, p: usize, y: Option<(f64, f64)>) -> CellBox {
    let ix = grid.split(p);
    let mut b = [(0.0, 0.0); 3];
    for ax in 0..grid.n() {
        b[ax] = grid.x_cell(ix[ax]);
    }
    if let Some(yc) = y {
        b[grid.n()] = yc;
    }
    b
}

/// Fraction of a box (first `dim` axes) inside the ball of radius `r`.
fn coverage(b: &CellBox, dim: usize, r: f64) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    let (mut dmin, mut dmax) = (0.0, 0.0);
    for &(lo, hi) in b.iter().take(dim) {
        let near = if lo > 0.0 {
            lo
        } else if hi < 0.0 {
            -hi
        } else {
            0.0
        };
        let far = lo.abs().max(hi.abs());
        dmin += near * near;
        dmax += far * far;
    }
    let r2 = r * r;
    if dmax <= r2 {
        return 1.0;
    }
    if dmin >= r2 {
        return 0.0;
    }
    if dim == 1 {
        let (lo, hi) = b[0];
        return ((hi.min(r) - lo.max(-r)) / (hi - lo)).clamp(0.0, 1.0);
    }
    let m = SUBSAMPLE;
    let total = m.pow(dim as u32);
    let mut inside = 0usize;
    for k in 0..total {
        let mut rem = k;
        let mut d2 = 0.0;
        for &(lo, hi) in b.iter().take(dim) {
            let t = (rem % m) as f64 + 0.5;
            rem /= m;
            let c = lo + (hi - lo) * t / m as f64;
            d2 += c * c;
        }
        if d2 <= r2 {
            inside += 1;
        }
    }
    inside as f64 / total as f64
}

/// `∫_region y^alpha f`, with exact per-cell weight integrals.
pub fn weighted_volume_integral(f: &ScalarField, alpha: f64, region: &HalfBallRegion) -> Result<f64> {
    if !(alpha > -1.0 && alpha < 1.0) {
        return Err(invalid("alpha", alpha, "-1 < alpha < 1"));
    }
    let grid = f.grid();
    if region.volume.len() != grid.len() {
        return Err(Error::GridMismatch("region built for a different grid"));
    }
    let xm = grid.x_masses();
    let ym = grid.y_masses(alpha);
    let np = grid.plane_len();
    let terms: Vec<f64> = (0..grid.len())
        .map(|k| {
            let w = region.volume[k];
            if w == 0.0 {
                0.0
            } else {
                w * xm[k % np] * ym[k / np] * f.values[k]
            }
        })
        .collect();
    Ok(pairwise_sum(&terms))
}

/// `∫_{|x| <= R} g dx` over the trace plane.
pub fn boundary_integral(g: &TraceField, region: &HalfBallRegion) -> Result<f64> {
    let grid = g.grid();
    if region.plane.len() != grid.plane_len() {
        return Err(Error::GridMismatch("region built for a different grid"));
    }
    let terms: Vec<f64> = (0..grid.plane_len())
        .map(|p| region.plane[p] * grid.x_mass(p) * g.values[p])
        .collect();
    Ok(pairwise_sum(&terms))
}

/// Gradient components `(∂_{x_1}, ..., ∂_{x_n}, ∂_y)`.
#[derive(Debug, Clone)]
pub struct VectorField {
    pub components: Vec<ScalarField>,
}

impl VectorField {
    pub fn x_part(&self) -> &[ScalarField] {
        &self.components[..self.components.len() - 1]
    }
    pub fn y_part(&self) -> &ScalarField {
        self.components.last().expect("gradient has a y component")
    }
}

/// Derivative along x-axis `ax` of every level: central differences, periodic
/// wrap or second-order one-sided ends.
pub fn diff_x(grid: &HalfSpaceGrid, values: &[f64], ax: usize) -> Vec<f64> {
    let nx = grid.nx();
    let np = grid.plane_len();
    let inv2h = 0.5 / grid.h();
    let stride = if ax == 0 { 1 } else { nx };
    let mut out = vec![0.0; values.len()];
    for base in (0..values.len()).step_by(np) {
        for p in 0..np {
            let i = grid.split(p)[ax];
            let at = |ii: usize| values[base + p - i * stride + ii * stride];
            out[base + p] = if grid.periodic() {
                (at((i + 1) % nx) - at((i + nx - 1) % nx)) * inv2h
            } else if i == 0 {
                (-3.0 * at(0) + 4.0 * at(1) - at(2)) * inv2h
            } else if i == nx - 1 {
                (3.0 * at(nx - 1) - 4.0 * at(nx - 2) + at(nx - 3)) * inv2h
            } else {
                (at(i + 1) - at(i - 1)) * inv2h
            };
        }
    }
    out
}

/// Derivative in y: three-point graded stencil inside, two-point one-sided at
/// `y = 0` and `y = Y`.
pub fn diff_y(grid: &HalfSpaceGrid, values: &[f64]) -> Vec<f64> {
    let np = grid.plane_len();
    let y = grid.y();
    let ny = grid.ny();
    let mut out = vec![0.0; values.len()];
    for j in 0..=ny {
        for p in 0..np {
            let v = |jj: usize| values[jj * np + p];
            out[j * np + p] = if j == 0 {
                (v(1) - v(0)) / (y[1] - y[0])
            } else if j == ny {
                (v(ny) - v(ny - 1)) / (y[ny] - y[ny - 1])
            } else {
                let hm = y[j] - y[j - 1];
                let hp = y[j + 1] - y[j];
                (hm * hm * v(j + 1) - hp * hp * v(j - 1) + (hp * hp - hm * hm) * v(j)) / (hm * hp * (hm + hp))
            };
        }
    }
    out
}

/// Full gradient of a field.
pub fn gradient(f: &ScalarField) -> VectorField {
    let grid = f.grid();
    let mut components = Vec::with_capacity(grid.n() + 1);
    for ax in 0..grid.n() {
        components.push(ScalarField { grid: f.grid.clone(), values: diff_x(grid, &f.values, ax) });
    }
    components.push(ScalarField { grid: f.grid.clone(), values: diff_y(grid, &f.values) });
    VectorField { components }
}

/// Gradient of a trace along the x-axes.
pub fn trace_gradient(g: &TraceField) -> Vec<Vec<f64>> {
    (0..g.grid().n()).map(|ax| diff_x(g.grid(), &g.values, ax)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid1(nx: usize) -> Arc<HalfSpaceGrid> {
        Arc::new(HalfSpaceGrid::new(1, 2.0, nx, 2.0, 64, 1.0, true).unwrap())
    }

    #[test]
    fn order_constructor_validates() {
        assert!(FractionalOrder::new(0.0).is_err());
        assert!(FractionalOrder::new(1.0).is_err());
        let o = FractionalOrder::new(0.25).unwrap();
        assert_eq!(o.alpha(), 0.5);
        assert_eq!(FractionalOrder::from_alpha(0.5).unwrap(), o);
    }

    #[test]
    fn graded_levels() {
        let g = HalfSpaceGrid::new(1, 1.0, 8, 3.0, 10, 2.0, true).unwrap();
        assert_eq!(g.y()[0], 0.0);
        assert_eq!(g.y()[10], 3.0);
        assert!(g.y().windows(2).all(|w| w[1] > w[0]));
        for a in [-0.9, 0.0, 0.9] {
            assert!(g.y_masses(a).iter().all(|m| *m > 0.0 && m.is_finite()));
        }
        let total: f64 = g.y_masses(0.3).iter().sum();
        assert_relative_eq!(total, weight_integral(0.0, 3.0, 0.3), max_relative = 1e-13);
    }

    #[test]
    fn half_disc_area() {
        let g = Arc::new(HalfSpaceGrid::new(1, 1.5, 300, 1.5, 300, 1.0, true).unwrap());
        let one = ScalarField::from_fn(g.clone(), |_, _| 1.0).unwrap();
        let r = HalfBallRegion::new(&g, 1.0).unwrap();
        let v = weighted_volume_integral(&one, 0.0, &r).unwrap();
        assert!((v - std::f64::consts::FRAC_PI_2).abs() < 2e-4, "{v}");
        let zero = ScalarField::zeros(g.clone());
        assert_eq!(weighted_volume_integral(&zero, 0.7, &r).unwrap(), 0.0);
    }

    #[test]
    fn region_outside_grid_is_rejected() {
        let g = grid1(16);
        assert!(matches!(HalfBallRegion::new(&g, 2.5), Err(Error::OutOfDomain { .. })));
    }

    #[test]
    fn boundary_lengths_and_areas() {
        let g = Arc::new(HalfSpaceGrid::new(1, 3.0, 96, 3.0, 4, 1.0, true).unwrap());
        let one = TraceField::constant(g.clone(), 1.0);
        let r = HalfBallRegion::new(&g, 2.0).unwrap();
        assert_relative_eq!(boundary_integral(&one, &r).unwrap(), 4.0, epsilon = 1e-12);
        let odd = TraceField::from_fn(g.clone(), |x| x[0]).unwrap();
        assert!(boundary_integral(&odd, &r).unwrap().abs() < 1e-12);

        let g2 = Arc::new(HalfSpaceGrid::new(2, 1.5, 150, 1.5, 4, 1.0, true).unwrap());
        let one2 = TraceField::constant(g2.clone(), 1.0);
        let r2 = HalfBallRegion::new(&g2, 1.0).unwrap();
        let a = boundary_integral(&one2, &r2).unwrap();
        assert!((a - std::f64::consts::PI).abs() < 1e-3, "{a}");
    }

    #[test]
    fn gradient_of_linear_and_constant() {
        let g = Arc::new(HalfSpaceGrid::new(2, 1.0, 9, 1.0, 6, 2.0, false).unwrap());
        let f = ScalarField::from_fn(g.clone(), |x, y| 2.0 * x[0] - x[1] + 0.5 * y).unwrap();
        let gr = gradient(&f);
        for (c, want) in gr.components.iter().zip([2.0, -1.0, 0.5]) {
            assert!(c.values().iter().all(|v| (v - want).abs() < 1e-12));
        }
        let c = ScalarField::from_fn(g, |_, _| 3.0).unwrap();
        assert!(gradient(&c).components.iter().all(|f| f.max_abs() < 1e-12));
    }

    #[test]
    fn gradient_second_order_in_x() {
        let err = |nx: usize| {
            let g = grid1(nx);
            let l = g.l();
            let k = std::f64::consts::PI / l;
            let f = ScalarField::from_fn(g.clone(), |x, _| (k * x[0]).sin()).unwrap();
            let d = &gradient(&f).components[0];
            (0..g.plane_len())
                .map(|p| (d.at(p, 0) - k * (k * g.coords(p)[0]).cos()).abs())
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(32), err(64));
        let rate = (e1 / e2).log2();
        assert!((rate - 2.0).abs() < 0.1, "rate {rate}");
    }
}
