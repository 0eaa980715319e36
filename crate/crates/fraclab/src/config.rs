//! Run configuration: one TOML document per run.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fraclap::PVQuadratureConfig;
use crate::grid::{default_grading, FractionalOrder, GridSpec, HalfSpaceGrid};
use crate::potential::Builtin;
use crate::solver::SolveConfig;

pub const COMMANDS: [&str; 12] = [
    "fraclap",
    "extend",
    "solve",
    "geometry",
    "check-monotone",
    "check-stability",
    "poincare",
    "energy-sweep",
    "annulus",
    "symmetry",
    "decay",
    "pipeline-symmetry",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Orders {
    pub s1: f64,
    #[serde(default)]
    pub s2: Option<f64>,
}

impl Orders {
    pub fn pair(&self) -> Result<(FractionalOrder, FractionalOrder)> {
        Ok((FractionalOrder::new(self.s1)?, FractionalOrder::new(self.s2.unwrap_or(self.s1))?))
    }
}

/// One cosine mode `amplitude * cos(π m·x / L + phase)`; for zero-flux
/// grids `x` is measured from the left end, `cos(π m (x + L) / (2L))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mode {
    pub amplitude: f64,
    pub m: Vec<u32>,
    #[serde(default)]
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceSpec {
    #[serde(default)]
    pub modes: Vec<Mode>,
    /// Trace CSV (values in the last column, plane order); overrides `modes`.
    #[serde(default)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Initial {
    Zero,
    /// `u = tanh(x_a (1 + p cos(π x_t / L)) / width_u)`,
    /// `v = v_sign tanh(x_a (1 - p sin(π x_t / 2L)) / width_v)` with `x_t` the
    /// other axis when `n = 2`.
    Layer {
        #[serde(default)]
        axis: Option<usize>,
        #[serde(default = "one")]
        width_u: f64,
        #[serde(default = "one")]
        width_v: f64,
        #[serde(default = "minus_one")]
        v_sign: f64,
        #[serde(default)]
        perturbation: f64,
    },
    File { u: PathBuf, v: PathBuf },
}

fn one() -> f64 {
    1.0
}
fn minus_one() -> f64 {
    -1.0
}

/// Origin of the pair analysed by the checking commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum PairSource {
    Solve,
    /// `U = tanh(ω·x / (width (1 + y)))`, `V = v_sign U`.
    SyntheticLayer {
        omega: [f64; 2],
        #[serde(default = "one")]
        width: f64,
        #[serde(default = "minus_one")]
        v_sign: f64,
    },
    /// `U = V = |x|^2 + y`.
    SyntheticRadial,
    Files { u: PathBuf, v: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnulusConfig {
    #[serde(default = "d_annulus_radii")]
    pub radii: Vec<f64>,
    #[serde(default = "d_dims")]
    pub dims: Vec<usize>,
    #[serde(default = "d_random_fields")]
    pub random_fields: usize,
    #[serde(default = "d_annulus_nx")]
    pub nx: usize,
    #[serde(default = "d_annulus_ny")]
    pub ny: usize,
}

fn d_annulus_radii() -> Vec<f64> {
    vec![4.0, 9.0, 16.0]
}
fn d_dims() -> Vec<usize> {
    vec![1, 2]
}
fn d_random_fields() -> usize {
    20
}
fn d_annulus_nx() -> usize {
    65
}
fn d_annulus_ny() -> usize {
    32
}

impl Default for AnnulusConfig {
    fn default() -> Self {
        Self { radii: d_annulus_radii(), dims: d_dims(), random_fields: d_random_fields(), nx: d_annulus_nx(), ny: d_annulus_ny() }
    }
}

/// Radii, thresholds and tolerances of every check. All values are echoed in
/// the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckConfig {
    #[serde(default = "d_radii")]
    pub radii: Vec<f64>,
    #[serde(default = "d_sweep_radii")]
    pub sweep_radii: Vec<f64>,
    #[serde(default = "d_decay_radii")]
    pub decay_radii: Vec<f64>,
    /// Mask threshold; `None` uses `1e-6` times the field oscillation.
    #[serde(default)]
    pub eps_grad: Option<f64>,
    /// Support radius of the canonical test family; `None` uses 3/4 of the grid radius.
    #[serde(default)]
    pub basis_radius: Option<f64>,
    #[serde(default = "d_basis_radial")]
    pub basis_radial: usize,
    #[serde(default = "d_basis_rel_tol")]
    pub basis_rel_tol: f64,
    #[serde(default = "d_slope_limit")]
    pub slope_limit: f64,
    /// Orders swept by `fraclap` and `extend`; `None` uses `orders.s1` only.
    #[serde(default)]
    pub s_sweep: Option<Vec<f64>>,
    #[serde(default = "d_operator_tol")]
    pub operator_tol: f64,
    #[serde(default = "d_pv_tol")]
    pub pv_tol: f64,
    #[serde(default = "d_dispersion_tol")]
    pub dispersion_tol: f64,
    #[serde(default = "d_crossval_tol")]
    pub crossval_tol: f64,
    #[serde(default = "d_kernel_heights")]
    pub kernel_heights: Vec<f64>,
    #[serde(default = "d_kernel_tol")]
    pub kernel_tol: f64,
    #[serde(default = "d_classical_tol")]
    pub classical_tol: f64,
    /// Also run each grid-dependent check at half resolution.
    #[serde(default)]
    pub refine: bool,
    #[serde(default = "d_identity_tol")]
    pub identity_tol: f64,
    #[serde(default = "d_curvature_tol")]
    pub curvature_tol: f64,
    /// Smallest `|x|` at which the radial curvature value is compared.
    #[serde(default = "d_curvature_min_radius")]
    pub curvature_min_radius: f64,
    #[serde(default)]
    pub excess_samples: usize,
    #[serde(default = "d_symmetry_threshold")]
    pub symmetry_threshold: f64,
    #[serde(default = "d_alignment_max_deg")]
    pub alignment_max_deg: f64,
    #[serde(default = "d_direction_max_deg")]
    pub direction_max_deg: f64,
    #[serde(default)]
    pub interval_u: Option<(f64, f64)>,
    #[serde(default)]
    pub interval_v: Option<(f64, f64)>,
    #[serde(default)]
    pub annulus: AnnulusConfig,
}

fn d_radii() -> Vec<f64> {
    vec![2.0, 4.0, 8.0]
}
fn d_sweep_radii() -> Vec<f64> {
    (1..=8).map(f64::from).collect()
}
fn d_decay_radii() -> Vec<f64> {
    vec![2.0, 4.0, 8.0]
}
fn d_basis_radial() -> usize {
    4
}
fn d_basis_rel_tol() -> f64 {
    1e-8
}
fn d_slope_limit() -> f64 {
    2.15
}
fn d_operator_tol() -> f64 {
    0.05
}
fn d_pv_tol() -> f64 {
    0.01
}
fn d_dispersion_tol() -> f64 {
    0.02
}
fn d_crossval_tol() -> f64 {
    0.01
}
fn d_kernel_heights() -> Vec<f64> {
    vec![0.1, 1.0, 10.0]
}
fn d_kernel_tol() -> f64 {
    1e-6
}
fn d_classical_tol() -> f64 {
    1e-8
}
fn d_identity_tol() -> f64 {
    0.02
}
fn d_curvature_tol() -> f64 {
    0.03
}
fn d_curvature_min_radius() -> f64 {
    0.2
}
fn d_symmetry_threshold() -> f64 {
    crate::checks::SYMMETRY_THRESHOLD
}
fn d_alignment_max_deg() -> f64 {
    2.0
}
fn d_direction_max_deg() -> f64 {
    0.1
}

impl Default for CheckConfig {
    fn default() -> Self {
        toml::from_str("").expect("empty check block takes defaults")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// May be left empty when the command is given on the command line.
    #[serde(default)]
    pub command: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    pub grid: GridSpec,
    pub orders: Orders,
    #[serde(default = "d_potential")]
    pub potential: Builtin,
    #[serde(default)]
    pub solver: SolveConfig,
    #[serde(default = "d_initial")]
    pub initial: Initial,
    #[serde(default = "d_pair")]
    pub pair: PairSource,
    #[serde(default)]
    pub trace: Option<TraceSpec>,
    #[serde(default)]
    pub pv: PVQuadratureConfig,
    #[serde(default)]
    pub checks: CheckConfig,
    /// Names of checks whose failure makes the run fail; empty marks all as required.
    #[serde(default)]
    pub required: Vec<String>,
}

fn d_potential() -> Builtin {
    Builtin::Zero
}
fn d_initial() -> Initial {
    Initial::Zero
}
fn d_pair() -> PairSource {
    PairSource::Solve
}

fn cfg_err(field: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("`{field}`: {msg}"))
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Grid built from the spec; an unset grading exponent follows the
    /// larger order.
    pub fn build_grid(&self) -> Result<Arc<HalfSpaceGrid>> {
        let (a, b) = self.orders.pair()?;
        let alpha = a.alpha().min(b.alpha());
        let spec = GridSpec { gamma: Some(self.grid.gamma.unwrap_or_else(|| default_grading(alpha))), ..self.grid.clone() };
        Ok(Arc::new(HalfSpaceGrid::from_spec(&spec, alpha)?))
    }

    /// Range checks and file-existence checks, run before any computation.
    pub fn validate(&self) -> Result<()> {
        if !COMMANDS.contains(&self.command.as_str()) {
            return Err(cfg_err("command", format!("unknown command `{}`; expected one of {}", self.command, COMMANDS.join(", "))));
        }
        self.orders.pair().map_err(|e| cfg_err("orders", e))?;
        if let Some(sweep) = &self.checks.s_sweep {
            for s in sweep {
                FractionalOrder::new(*s).map_err(|e| cfg_err("checks.s_sweep", e))?;
            }
        }
        let grid = self.build_grid().map_err(|e| cfg_err("grid", e))?;
        self.solver.validate(grid.n()).map_err(|e| cfg_err("solver", e))?;
        let limit = grid.max_radius();
        let cmd = self.command.as_str();
        let uses = |names: &[&str]| cmd == "pipeline-symmetry" || names.contains(&cmd);
        let lists = [
            ("checks.radii", &self.checks.radii, uses(&["poincare"])),
            ("checks.sweep_radii", &self.checks.sweep_radii, uses(&["energy-sweep"])),
            ("checks.decay_radii", &self.checks.decay_radii, uses(&["decay"])),
        ];
        for (name, list, used) in lists {
            if !used {
                continue;
            }
            if list.is_empty() {
                return Err(cfg_err(name, "must not be empty"));
            }
            for r in list {
                if !(*r > 0.0 && *r <= limit * (1.0 + 1e-12)) {
                    return Err(cfg_err(name, format!("radius {r} outside (0, {limit}]")));
                }
            }
        }
        for r in lists.iter().filter(|l| l.2 && l.0 != "checks.sweep_radii").flat_map(|l| l.1.iter()) {
            if !(*r > 1.0) {
                return Err(cfg_err("checks.radii", format!("cutoff radius {r} must exceed 1")));
            }
        }
        for r in &self.checks.annulus.radii {
            if !(*r > 1.0) {
                return Err(cfg_err("checks.annulus.radii", format!("radius {r} must exceed 1")));
            }
        }
        for d in &self.checks.annulus.dims {
            if !(1..=2).contains(d) {
                return Err(cfg_err("checks.annulus.dims", format!("dimension {d} not in {{1, 2}}")));
            }
        }
        if let Some(r) = self.checks.basis_radius {
            if !(r > 0.0 && r <= limit) {
                return Err(cfg_err("checks.basis_radius", format!("{r} outside (0, {limit}]")));
            }
        }
        if self.checks.basis_radial == 0 {
            return Err(cfg_err("checks.basis_radial", "must be >= 1"));
        }
        for (name, v) in [
            ("checks.operator_tol", self.checks.operator_tol),
            ("checks.pv_tol", self.checks.pv_tol),
            ("checks.crossval_tol", self.checks.crossval_tol),
            ("checks.kernel_tol", self.checks.kernel_tol),
            ("checks.identity_tol", self.checks.identity_tol),
            ("checks.curvature_tol", self.checks.curvature_tol),
            ("checks.symmetry_threshold", self.checks.symmetry_threshold),
            ("checks.alignment_max_deg", self.checks.alignment_max_deg),
            ("checks.direction_max_deg", self.checks.direction_max_deg),
        ] {
            if !(v > 0.0) {
                return Err(cfg_err(name, format!("{v} must be > 0")));
            }
        }
        if let Some(o) = self.potential_eps() {
            if !o.is_finite() {
                return Err(cfg_err("potential.eps", "must be finite"));
            }
        }
        if let Initial::File { u, v } = &self.initial {
            for p in [u, v] {
                if !p.exists() {
                    return Err(cfg_err("initial", format!("file {} does not exist", p.display())));
                }
            }
        }
        if let PairSource::Files { u, v } = &self.pair {
            for p in [u, v] {
                if !p.exists() {
                    return Err(cfg_err("pair", format!("file {} does not exist", p.display())));
                }
            }
        }
        if let PairSource::SyntheticLayer { omega, width, .. } = &self.pair {
            let norm = (omega[0] * omega[0] + omega[1] * omega[1]).sqrt();
            if (norm - 1.0).abs() > 1e-9 || grid.n() != 2 {
                return Err(cfg_err("pair.omega", "must be a unit vector on an n = 2 grid"));
            }
            if !(*width > 0.0) {
                return Err(cfg_err("pair.width", "must be > 0"));
            }
        }
        if let Some(t) = &self.trace {
            if let Some(p) = &t.csv {
                if !p.exists() {
                    return Err(cfg_err("trace.csv", format!("file {} does not exist", p.display())));
                }
            }
            for m in &t.modes {
                if m.m.len() != grid.n() {
                    return Err(cfg_err("trace.modes", format!("mode index {:?} must have {} entries", m.m, grid.n())));
                }
            }
        }
        if matches!(self.command.as_str(), "fraclap" | "extend") && self.trace.is_none() {
            return Err(cfg_err("trace", format!("command `{}` needs a [trace] block", self.command)));
        }
        if matches!(self.command.as_str(), "symmetry" | "pipeline-symmetry") && grid.n() != 2 {
            return Err(cfg_err("grid", format!("`{}` needs n = 2", self.command)));
        }
        if self.command == "fraclap" && !(grid.n() == 1 && grid.periodic()) {
            return Err(cfg_err("grid", "`fraclap` needs a periodic n = 1 grid"));
        }
        Ok(())
    }

    fn potential_eps(&self) -> Option<f64> {
        match self.potential {
            Builtin::DoubleWellCoupled { eps } => Some(eps),
            Builtin::Plateau { c } => Some(c),
            _ => None,
        }
    }

    pub fn is_required(&self, check: &str) -> bool {
        self.required.is_empty() || self.required.iter().any(|r| r == check)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MIN: &str = r#"
command = "solve"
[grid]
n = 1
L = 3.0
nx = 32
Y = 4.0
ny = 32
[orders]
s1 = 0.5
"#;

    #[test]
    fn minimal_config_takes_defaults() {
        let c = RunConfig::from_toml(MIN).unwrap();
        c.validate().unwrap();
        assert_eq!(c.checks.radii, vec![2.0, 4.0, 8.0]);
        assert_eq!(c.solver, SolveConfig::default());
    }

    #[test]
    fn unknown_command_is_a_config_error() {
        let c = RunConfig::from_toml(&MIN.replace("\"solve\"", "\"melt\"")).unwrap();
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml(&format!("{MIN}\nbogus = 1\n")).is_err());
    }
}
