//! Command execution: builds fields from a [`RunConfig`], runs the checks of
//! the requested command and collects them in a [`RunReport`].

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::checks::*;
use crate::config::{Initial, Mode, PairSource, RunConfig, TraceSpec};
use crate::error::{Error, Result};
use crate::extension::{calibrate_dtn, dtn_flux, extend_poisson, kernel_normalization, PoissonKernel};
use crate::fraclap::{fraclap_pv, fraclap_spectral, pv_normalization_ratio_with};
use crate::geometry::{default_eps, geometry_of, identity_relative_residual, level_summaries, vertical_excess};
use crate::grid::{diff_x, diff_y, FractionalOrder, HalfSpaceGrid, ScalarField, TraceField};
use crate::io::{encode, read_field, read_trace_csv, trace_csv};
use crate::potential::PotentialRef;
use crate::report::{ArtifactDir, RunReport};
use crate::solver::{calibrate_weighted, solve_coupled_system, solve_weighted_dirichlet, SolutionPair};

/// Report plus the files written for it.
#[derive(Debug)]
pub struct RunOutput {
    pub report: RunReport,
    pub artifacts: Vec<PathBuf>,
}

/// Validates `cfg`, runs its command and, when `out` is given, writes the
/// artifacts and `report.json` there.
pub fn run(cfg: &RunConfig, out: Option<&Path>) -> Result<RunOutput> {
    cfg.validate()?;
    let grid = cfg.build_grid()?;
    let mut ctx = Context {
        cfg,
        grid,
        pair: None,
        evidence: None,
        artifacts: out.map(ArtifactDir::new).transpose()?,
        report: RunReport::new(cfg),
    };
    let stages: &[Stage] = match cfg.command.as_str() {
        "fraclap" => &[Stage::Fraclap],
        "extend" => &[Stage::Extend],
        "solve" => &[Stage::Solve],
        "geometry" => &[Stage::Geometry { identity: true }],
        "check-monotone" => &[Stage::Monotone],
        "check-stability" => &[Stage::Stability],
        "poincare" => &[Stage::Poincare],
        "energy-sweep" => &[Stage::Energy],
        "annulus" => &[Stage::Annulus],
        "symmetry" => &[Stage::Symmetry],
        "decay" => &[Stage::Decay],
        "pipeline-symmetry" => &[
            Stage::Geometry { identity: false },
            Stage::Monotone,
            Stage::Stability,
            Stage::Poincare,
            Stage::Energy,
            Stage::Symmetry,
            Stage::Decay,
        ],
        other => return Err(Error::Config(format!("unknown command `{other}`"))),
    };
    for stage in stages {
        let start = Instant::now();
        ctx.run_stage(*stage).map_err(|e| Error::Stage { stage: stage.name().to_string(), source: Box::new(e) })?;
        ctx.report.timings.insert(stage.name().to_string(), start.elapsed().as_secs_f64());
    }
    let mut report = ctx.report;
    report.finalize()?;
    let mut artifacts = Vec::new();
    if let Some(mut dir) = ctx.artifacts {
        dir.write("report.json", &report.to_json()?)?;
        artifacts = dir.written;
    }
    Ok(RunOutput { report, artifacts })
}

#[derive(Debug, Clone, Copy)]
enum Stage {
    Fraclap,
    Extend,
    Solve,
    Geometry { identity: bool },
    Monotone,
    Stability,
    Poincare,
    Energy,
    Annulus,
    Symmetry,
    Decay,
}

impl Stage {
    fn name(&self) -> &'static str {
        match self {
            Stage::Fraclap => "fraclap",
            Stage::Extend => "extend",
            Stage::Solve => "solve",
            Stage::Geometry { .. } => "geometry",
            Stage::Monotone => "check-monotone",
            Stage::Stability => "check-stability",
            Stage::Poincare => "poincare",
            Stage::Energy => "energy-sweep",
            Stage::Annulus => "annulus",
            Stage::Symmetry => "symmetry",
            Stage::Decay => "decay",
        }
    }
}

struct Context<'a> {
    cfg: &'a RunConfig,
    grid: Arc<HalfSpaceGrid>,
    pair: Option<SolutionPair>,
    /// Cached stability evidence; `Some(None)` records a rejected basis.
    evidence: Option<Option<StabilityMin>>,
    artifacts: Option<ArtifactDir>,
    report: RunReport,
}

fn s_tag(s: f64) -> String {
    format!("s{s}")
}

fn rel_l2(a: &[f64], b: &[f64], w: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).zip(w).map(|((x, y), m)| m * (x - y).powi(2)).sum();
    let den: f64 = b.iter().zip(w).map(|(y, m)| m * y * y).sum();
    (num / den).sqrt()
}

/// Node weights `|x-cell| |y-cell|` of the unweighted volume measure.
fn volume_weights(g: &HalfSpaceGrid) -> Vec<f64> {
    let xm = g.x_masses();
    let ym = g.y_masses(0.0);
    (0..g.len()).map(|k| xm[k % g.plane_len()] * ym[k / g.plane_len()]).collect()
}

fn mode_value(m: &Mode, x: [f64; 2], l: f64, periodic: bool) -> f64 {
    if periodic {
        let arg: f64 = m.m.iter().enumerate().map(|(a, k)| f64::from(*k) * x[a]).sum();
        m.amplitude * (PI * arg / l + m.phase).cos()
    } else {
        let prod: f64 = m
            .m
            .iter()
            .enumerate()
            .map(|(a, k)| (PI * f64::from(*k) * (x[a] + l) / (2.0 * l) + if a == 0 { m.phase } else { 0.0 }).cos())
            .product();
        m.amplitude * prod
    }
}

pub fn build_trace(spec: &TraceSpec, grid: &Arc<HalfSpaceGrid>) -> Result<TraceField> {
    if let Some(p) = &spec.csv {
        return read_trace_csv(p, grid.clone());
    }
    let (l, periodic) = (grid.l(), grid.periodic());
    TraceField::from_fn(grid.clone(), |x| spec.modes.iter().map(|m| mode_value(m, x, l, periodic)).sum())
}

fn read_on(path: &Path, grid: &Arc<HalfSpaceGrid>, what: &'static str) -> Result<ScalarField> {
    let f = read_field(path)?;
    if !f.grid().same_shape(grid) {
        return Err(Error::GridMismatch(what));
    }
    ScalarField::new(grid.clone(), f.into_values())
}

/// Initial traces for the coupled solve.
pub fn initial_traces(cfg: &RunConfig, grid: &Arc<HalfSpaceGrid>) -> Result<(TraceField, TraceField)> {
    match &cfg.initial {
        Initial::Zero => Ok((TraceField::constant(grid.clone(), 0.0), TraceField::constant(grid.clone(), 0.0))),
        Initial::Layer { axis, width_u, width_v, v_sign, perturbation } => {
            let n = grid.n();
            let a = axis.unwrap_or(n - 1);
            if a >= n {
                return Err(Error::Config(format!("`initial.axis` {a} must be below n = {n}")));
            }
            let l = grid.l();
            let t = |x: [f64; 2]| if n == 2 { x[1 - a] } else { 0.0 };
            let u = TraceField::from_fn(grid.clone(), |x| (x[a] * (1.0 + perturbation * (PI * t(x) / l).cos()) / width_u).tanh())?;
            let v = TraceField::from_fn(grid.clone(), |x| {
                v_sign * (x[a] * (1.0 - perturbation * (PI * t(x) / (2.0 * l)).sin()) / width_v).tanh()
            })?;
            Ok((u, v))
        }
        Initial::File { u, v } => Ok((read_on(u, grid, "initial u")?.trace(), read_on(v, grid, "initial v")?.trace())),
    }
}

/// The pair analysed by the checking commands, on `grid`.
pub fn acquire_pair(cfg: &RunConfig, grid: &Arc<HalfSpaceGrid>) -> Result<SolutionPair> {
    let orders = cfg.orders.pair()?;
    let potential: PotentialRef = Arc::new(cfg.potential.clone());
    match &cfg.pair {
        PairSource::Solve => {
            let (u, v) = initial_traces(cfg, grid)?;
            solve_coupled_system(potential, orders, (&u, &v), &cfg.solver)
        }
        PairSource::SyntheticLayer { omega, width, v_sign } => {
            let u = ScalarField::from_fn(grid.clone(), |x, y| ((omega[0] * x[0] + omega[1] * x[1]) / (width * (1.0 + y))).tanh())?;
            let v = u.map(|t| v_sign * t)?;
            SolutionPair::from_fields(u, v, orders, potential)
        }
        PairSource::SyntheticRadial => {
            let u = ScalarField::from_fn(grid.clone(), |x, _| x[0] * x[0] + x[1] * x[1])?;
            SolutionPair::from_fields(u.clone(), u, orders, potential)
        }
        PairSource::Files { u, v } => {
            SolutionPair::from_fields(read_on(u, grid, "pair u")?, read_on(v, grid, "pair v")?, orders, potential)
        }
    }
}

/// The configuration with the x-resolution halved (and `ny` too, when `both`).
pub fn coarsened(cfg: &RunConfig, both: bool) -> RunConfig {
    let mut c = cfg.clone();
    let nx = cfg.grid.nx;
    c.grid.nx = if cfg.grid.periodic { nx / 2 } else { (nx - 1) / 2 + 1 };
    if both {
        c.grid.ny = cfg.grid.ny / 2;
    }
    c
}

fn max_of(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(f64::NEG_INFINITY, f64::max)
}

fn min_of(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(f64::INFINITY, f64::min)
}

impl Context<'_> {
    fn run_stage(&mut self, stage: Stage) -> Result<()> {
        match stage {
            Stage::Fraclap => self.fraclap(),
            Stage::Extend => self.extend(),
            Stage::Solve => self.solve(),
            Stage::Geometry { identity } => self.geometry(identity),
            Stage::Monotone => self.monotone(),
            Stage::Stability => self.stability(),
            Stage::Poincare => self.poincare(),
            Stage::Energy => self.energy(),
            Stage::Annulus => self.annulus(),
            Stage::Symmetry => self.symmetry(),
            Stage::Decay => self.decay(),
        }
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        if let Some(d) = &mut self.artifacts {
            d.write(name, bytes)?;
        }
        Ok(())
    }

    fn table(&mut self, name: &str, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
        if let Some(d) = &mut self.artifacts {
            d.write_table(name, header, rows)?;
        }
        Ok(())
    }

    fn pair(&mut self) -> Result<&SolutionPair> {
        if self.pair.is_none() {
            let p = acquire_pair(self.cfg, &self.grid)?;
            self.report.stage("pair", json!({"source": self.cfg.pair, "solve": p.report}))?;
            self.pair = Some(p);
        }
        Ok(self.pair.as_ref().expect("pair was just set"))
    }

    fn basis_radius(&self) -> f64 {
        self.cfg.checks.basis_radius.unwrap_or(0.75 * self.grid.max_radius())
    }

    fn sweep(&self) -> Vec<f64> {
        self.cfg.checks.s_sweep.clone().unwrap_or_else(|| vec![self.cfg.orders.s1])
    }

    /// Stability evidence on the canonical family, computed once.
    fn evidence(&mut self) -> Result<Option<StabilityMin>> {
        if let Some(e) = &self.evidence {
            return Ok(e.clone());
        }
        let (radius, radial, rel) = (self.basis_radius(), self.cfg.checks.basis_radial, self.cfg.checks.basis_rel_tol);
        let pair = self.pair()?.clone();
        let res = canonical_basis(&pair, radius, radial)
            .and_then(|b| independent_subset(&pair, b, rel))
            .and_then(|b| stability_min(&pair, &b));
        let e = match res {
            Ok(m) => Some(m),
            Err(Error::Basis(msg)) => {
                self.report.check("stability.basis", false, f64::NAN, 0.0, msg);
                None
            }
            Err(e) => return Err(e),
        };
        self.evidence = Some(e.clone());
        Ok(e)
    }

    fn hypotheses(&mut self) -> Result<Cor1Hypotheses> {
        let pair = self.pair()?.clone();
        let plain = cor1_hypotheses(&pair, None)?;
        if plain.monotone_branch() && self.evidence.is_none() {
            return Ok(plain);
        }
        let ev = self.evidence()?;
        cor1_hypotheses(&pair, ev.as_ref())
    }

    fn fraclap(&mut self) -> Result<()> {
        let spec = self.cfg.trace.clone().expect("validated trace block");
        let trace = build_trace(&spec, &self.grid)?;
        let xm = self.grid.x_masses();
        let mut rows = Vec::new();
        for s in self.sweep() {
            let o = FractionalOrder::new(s)?;
            let ratio = pv_normalization_ratio_with(o, &self.grid, 0.0, &self.cfg.pv)?;
            let raw = fraclap_pv(&trace, o, &self.cfg.pv)?;
            let spectral = fraclap_spectral(&trace, o)?;
            let scaled: Vec<f64> = raw.values().iter().map(|v| v / ratio.ratio).collect();
            let err = rel_l2(&scaled, spectral.values(), &xm);
            let closed = closed_form_ratio(s);
            let tag = s_tag(s);
            self.report.calibration.insert(format!("pv_ratio.{tag}"), ratio.ratio);
            self.report.check(format!("fraclap.{tag}.spectral"), err <= self.cfg.checks.pv_tol, err, self.cfg.checks.pv_tol, "relative L2 error of the normalized quadrature against the spectral multiplier");
            self.report.check(format!("fraclap.{tag}.dispersion"), ratio.dispersion <= self.cfg.checks.dispersion_tol, ratio.dispersion, self.cfg.checks.dispersion_tol, "spread of the per-mode ratio over the three lowest modes");
            self.report.stage(&format!("fraclap.{tag}"), json!({
                "s": s,
                "ratio": ratio,
                "closed_form_ratio": closed,
                "ratio_deviation": (ratio.ratio / closed - 1.0).abs(),
                "relative_error": err,
            }))?;
            self.write(&format!("fraclap_{tag}.csv"), &trace_csv(&raw)?)?;
            rows.push(vec![s, ratio.ratio, closed, ratio.dispersion, err]);
        }
        self.table("fraclap_ratios.csv", &["s", "ratio", "closed_form", "dispersion", "relative_error"], &rows)
    }

    fn crossval(&self, grid: &Arc<HalfSpaceGrid>, o: FractionalOrder) -> Result<(f64, ScalarField)> {
        let spec = self.cfg.trace.as_ref().expect("validated trace block");
        let trace = build_trace(spec, grid)?;
        let p = extend_poisson(&trace, o)?;
        let w = solve_weighted_dirichlet(&trace, o, self.cfg.solver.linear_tol)?;
        Ok((rel_l2(p.values(), w.values(), &volume_weights(grid)), w))
    }

    fn extend(&mut self) -> Result<()> {
        let spec = self.cfg.trace.clone().expect("validated trace block");
        let trace = build_trace(&spec, &self.grid)?;
        let n = self.grid.n();
        let c = self.cfg.checks.clone();
        let xm = self.grid.x_masses();
        for s in self.sweep() {
            let o = FractionalOrder::new(s)?;
            let tag = s_tag(s);
            let kernel = PoissonKernel::new(o, n)?;
            let mut masses = Vec::new();
            for &y in &c.kernel_heights {
                let m = kernel.mass(y)?;
                masses.push(json!({"y": y, "mass": m}));
                let dev = (m - 1.0).abs();
                self.report.check(format!("kernel.{tag}.mass_y{y}"), dev <= c.kernel_tol, dev, c.kernel_tol, "|kernel mass - 1| by adaptive quadrature");
            }
            let constant = kernel_normalization(o, n)?;
            if n == 1 && (s - 0.5).abs() < 1e-15 {
                let dev = (constant - 1.0 / PI).abs();
                self.report.check("kernel.classical", dev <= c.classical_tol, dev, c.classical_tol, "|C - 1/pi| for the harmonic half-plane kernel");
            }
            let (cross, ext) = self.crossval(&self.grid, o)?;
            self.report.check(format!("crossval.{tag}"), cross <= c.crossval_tol, cross, c.crossval_tol, "relative L2 distance between the Poisson and weighted-solver extensions");
            let mut stage = json!({"s": s, "kernel_constant": constant, "kernel_masses": masses, "crossval": cross});
            if c.refine {
                let coarse = coarsened(self.cfg, true).build_grid()?;
                let (cc, _) = self.crossval(&coarse, o)?;
                let ratio = cc / cross;
                self.report.check(format!("crossval.{tag}.refinement"), ratio >= 2.0, ratio, 2.0, "coarse/fine ratio of the cross-validation distance");
                stage["crossval_coarse"] = json!(cc);
            }
            if self.grid.periodic() {
                let spectral = fraclap_spectral(&trace, o)?;
                let theory = dtn_constant(s);
                let cal_w = calibrate_weighted(o, &self.grid, self.cfg.solver.linear_tol)?;
                let flux_w = dtn_flux(&ext, o)?;
                let op_w: Vec<f64> = flux_w.flux.values().iter().map(|v| v / cal_w.factor).collect();
                let err_w = rel_l2(&op_w, spectral.values(), &xm);
                let cal_p = calibrate_dtn(o, &self.grid)?;
                let flux_p = dtn_flux(&extend_poisson(&trace, o)?, o)?;
                let op_p: Vec<f64> = flux_p.flux.values().iter().map(|v| v / cal_p.factor).collect();
                let err_p = rel_l2(&op_p, spectral.values(), &xm);
                self.report.calibration.insert(format!("dtn_factor.{tag}.solver"), cal_w.factor);
                self.report.calibration.insert(format!("dtn_factor.{tag}.poisson"), cal_p.factor);
                self.report.check(format!("dtn.{tag}.solver"), err_w <= c.operator_tol, err_w, c.operator_tol, "calibrated weighted-solver flux against the spectral fractional Laplacian");
                self.report.check(format!("dtn.{tag}.poisson"), err_p <= c.operator_tol, err_p, c.operator_tol, "calibrated Poisson-route flux against the spectral fractional Laplacian");
                stage["dtn"] = json!({
                    "closed_form_factor": theory,
                    "solver": {"factor": cal_w.factor, "relative_error": err_w, "under_resolved": flux_w.under_resolved},
                    "poisson": {"factor": cal_p.factor, "relative_error": err_p, "under_resolved": flux_p.under_resolved},
                });
                let op = TraceField::new(self.grid.clone(), op_w)?;
                self.write(&format!("dtn_{tag}.csv"), &trace_csv(&op)?)?;
            }
            self.report.stage(&format!("extend.{tag}"), stage)?;
            self.write(&format!("extension_{tag}.frlb"), &encode(&self.grid, ext.values()))?;
        }
        Ok(())
    }

    fn solve(&mut self) -> Result<()> {
        let pair = self.pair()?.clone();
        let r = &pair.report;
        self.report.check("solve.converged", true, r.residuals.last().copied().unwrap_or(0.0), self.cfg.solver.nonlinear_tol, format!("{} outer iterations", r.outer_iterations));
        let mono = monotonicity_check(&pair);
        self.report.stage("solve", json!({"monotonicity": mono}))?;
        self.write("u.frlb", &encode(&self.grid, pair.u.values()))?;
        self.write("v.frlb", &encode(&self.grid, pair.v.values()))?;
        let rows: Vec<Vec<f64>> = r.residuals.iter().enumerate().map(|(i, v)| vec![i as f64, *v]).collect();
        self.table("residuals.csv", &["iteration", "residual"], &rows)
    }

    fn eps_for(&self, f: &ScalarField) -> f64 {
        self.cfg.checks.eps_grad.unwrap_or_else(|| default_eps(f))
    }

    fn geometry(&mut self, identity: bool) -> Result<()> {
        let pair = self.pair()?.clone();
        let c = self.cfg.checks.clone();
        let mut stage = json!({});
        for (name, f) in [("u", &pair.u), ("v", &pair.v)] {
            let geo = geometry_of(f, self.eps_for(f));
            let rows: Vec<Vec<f64>> = level_summaries(&geo)
                .iter()
                .map(|l| vec![l.y, l.mask_fraction, l.curvature_energy, l.tangential_energy])
                .collect();
            self.table(&format!("geometry_{name}.csv"), &["y", "mask_fraction", "curvature_energy", "tangential_energy"], &rows)?;
            stage[name] = json!({"identity_residual_level0": identity_relative_residual(&geo, 0), "eps_grad": geo.eps_grad});
        }
        if identity && self.grid.n() == 2 {
            let geo = geometry_of(&pair.u, self.eps_for(&pair.u));
            let res = identity_relative_residual(&geo, 0);
            self.report.check("geometry.identity", res <= c.identity_tol, res, c.identity_tol, "relative L2 residual of the curvature identity on the trace plane");
            if c.refine {
                let coarse_cfg = coarsened(self.cfg, false);
                let cg = coarse_cfg.build_grid()?;
                let cp = acquire_pair(&coarse_cfg, &cg)?;
                let cres = identity_relative_residual(&geometry_of(&cp.u, self.eps_for(&cp.u)), 0);
                let ratio = cres / res;
                self.report.check("geometry.identity_refinement", ratio >= 1.5, ratio, 1.5, "coarse/fine ratio of the identity residual");
                stage["identity_residual_coarse"] = json!(cres);
            }
            if matches!(self.cfg.pair, PairSource::SyntheticRadial) {
                let np = self.grid.plane_len();
                let dev = max_of((0..np).filter(|p| geo.interior_mask[*p] && self.grid.radius_x(*p) >= c.curvature_min_radius).map(|p| (geo.curvature_sq_energy.values()[p] / 4.0 - 1.0).abs()));
                self.report.check("geometry.radial_value", dev <= c.curvature_tol, dev, c.curvature_tol, "max relative deviation of K^2 |grad U|^2 from 4 on the trace plane");
            }
        }
        if c.excess_samples > 0 {
            stage["excess"] = self.excess_sweep()?;
        }
        self.report.stage("geometry", stage)
    }

    /// Vertical excess on seeded random band-limited harmonic-type extensions.
    fn excess_sweep(&mut self) -> Result<serde_json::Value> {
        let g = self.grid.clone();
        let n = g.n();
        let o = FractionalOrder::new(self.cfg.orders.s1)?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(1);
        let tol = SLACK_CONSTANT * g.h();
        let (mut worst_min, mut worst_1d) = (f64::INFINITY, 0.0f64);
        let mut samples = Vec::new();
        for i in 0..self.cfg.checks.excess_samples {
            let one_d = n == 1 || i % 3 == 0;
            let modes: Vec<Mode> = (0..6)
                .map(|_| {
                    let a = rng.random_range(0..5u32);
                    let b = if one_d { 0 } else { rng.random_range(0..5u32) };
                    Mode { amplitude: rng.random_range(-1.0..1.0), m: if n == 2 { vec![a, b] } else { vec![a] }, phase: 0.0 }
                })
                .collect();
            let trace = build_trace(&TraceSpec { modes, csv: None }, &g)?;
            if trace.max() - trace.min() < 1e-12 {
                continue;
            }
            let u = extend_poisson(&trace, o)?;
            let ex = vertical_excess(&u, default_eps(&u));
            let grads: Vec<Vec<f64>> = (0..n).map(|a| diff_x(&g, u.values(), a)).collect();
            let dy: Vec<Vec<f64>> = grads.iter().map(|c| diff_y(&g, c)).collect();
            let term = max_of((0..g.len()).map(|k| dy.iter().map(|c| c[k] * c[k]).sum::<f64>()));
            if !(term > 0.0) {
                continue;
            }
            let rel_min = min_of(ex.values().iter().copied()) / term;
            let rel_max = ex.max_abs() / term;
            worst_min = worst_min.min(rel_min);
            if one_d {
                worst_1d = worst_1d.max(rel_max);
            }
            samples.push(json!({"index": i, "one_dimensional": one_d, "relative_min": rel_min, "relative_max": rel_max}));
        }
        self.report.check("geometry.excess_nonnegative", worst_min >= -tol, worst_min, -tol, "smallest vertical excess relative to the largest vertical Hessian term");
        self.report.check("geometry.excess_one_dimensional", worst_1d <= tol, worst_1d, tol, "largest |vertical excess| on one-dimensional fields, relative");
        Ok(json!({"tolerance": tol, "samples": samples}))
    }

    fn monotone(&mut self) -> Result<()> {
        let pair = self.pair()?.clone();
        let mono = monotonicity_check(&pair);
        self.report.check("monotone", mono.margin > 0.0, mono.margin, 0.0, "min(min U_xn, -max V_xn) over interior points");
        let mut rows = Vec::new();
        if mono.margin > 0.0 {
            let xi = bump_cutoff(pair.grid(), self.basis_radius())?;
            for (name, eq) in [("u", Equation::U), ("v", Equation::V)] {
                let r = linearized_rayleigh(&pair, &xi, eq)?;
                let tol = SLACK_CONSTANT * self.grid.h() * (r.lhs.abs() + r.rhs.abs());
                self.report.check(format!("rayleigh.{name}"), r.value >= -tol, r.value, -tol, "linearized inequality on the bump test function");
                rows.push(json!({"equation": name, "report": r, "tol": tol}));
            }
        } else {
            for name in ["u", "v"] {
                self.report.check(format!("rayleigh.{name}"), false, f64::NAN, 0.0, "precondition failed: pair is not monotone");
            }
        }
        self.report.stage("check-monotone", json!({"monotonicity": mono, "rayleigh": rows}))
    }

    fn stability(&mut self) -> Result<()> {
        let pair = self.pair()?.clone();
        let family = match canonical_basis(&pair, self.basis_radius(), self.cfg.checks.basis_radial) {
            Ok(b) => b,
            Err(Error::Basis(msg)) => {
                self.report.check("stability.basis", false, f64::NAN, 0.0, msg);
                return Ok(());
            }
            Err(e) => return Err(e),
        };
        let terms: Vec<StabilityTerms> = family.iter().map(|t| stability_terms(&pair, t)).collect::<Result<_>>()?;
        let worst = min_of(terms.iter().map(|t| if t.tol > 0.0 { t.value / t.tol } else if t.value >= 0.0 { 0.0 } else { f64::NEG_INFINITY }));
        self.report.check("stability.elements", terms.iter().all(|t| t.nonnegative), worst, -1.0, "smallest form value over the family, in units of its tolerance");
        let critical = terms.iter().find(|t| t.label == "grad_norm_phi").map_or(f64::NAN, |t| t.value);
        let ev = self.evidence()?;
        if let Some(m) = &ev {
            self.report.check("stability.family_size", m.basis_size >= 20, m.basis_size as f64, 20.0, "independent test pairs in the Rayleigh minimization");
            self.report.check("stability.min_eigenvalue", m.passed, m.min_eigenvalue, -m.tol, "stability evidence: minimum generalized eigenvalue on the family");
        }
        self.report.stage("check-stability", json!({
            "family": terms,
            "family_size": family.len(),
            "grad_norm_phi": critical,
            "evidence": ev,
        }))
    }

    fn poincare(&mut self) -> Result<()> {
        let hyp = self.hypotheses()?;
        if !hyp.holds() {
            self.report.check("poincare.hypotheses", false, hyp.monotonicity_margin, 0.0, format!("neither branch applies: {hyp:?}"));
            return self.report.stage("poincare", json!({"hypotheses": hyp}));
        }
        let pair = self.pair()?.clone();
        let radii = self.cfg.checks.radii.clone();
        let h = self.grid.h();
        let mut reports = Vec::new();
        let mut tols = Vec::new();
        for &r in &radii {
            let phi = log_cutoff(r, &self.grid)?;
            let constant = log_cutoff_gradient_constant(&phi, r);
            let limit = 2.0 * (1.0 + SLACK_CONSTANT * h);
            self.report.check(format!("cutoff.gradient.R{r}"), constant <= limit, constant, limit, "sup |grad phi_R| |X| log R");
            for (kind, rep) in self.branch_reports(&pair, &phi, &hyp)? {
                self.report.check(format!("poincare.{kind}.R{r}"), rep.satisfied, rep.slack, -rep.tol, "slack of the geometric inequality");
                tols.push((r, kind, rep.tol));
                reports.push(json!({"radius": r, "cutoff_constant": constant, "report": rep}));
            }
        }
        let r0 = radii[0];
        let phi = log_cutoff(r0, &self.grid)?;
        let a = poincare_stable(&pair, &phi)?.lhs();
        let b = poincare_stable(&pair.swapped(), &phi)?.lhs();
        let diff = (a - b).abs();
        let lim = 1e-10 * (1.0 + a.abs());
        self.report.check("poincare.swap_invariance", diff <= lim, diff, lim, "|LHS(U, V) - LHS(V, U)|");
        let mut stage = json!({"hypotheses": hyp, "reports": reports});
        if self.cfg.checks.refine {
            let coarse_cfg = coarsened(self.cfg, false);
            let cg = coarse_cfg.build_grid()?;
            let cp = acquire_pair(&coarse_cfg, &cg)?;
            let mut rows = Vec::new();
            for (r, kind, tol) in tols {
                let phi = log_cutoff(r, &cg)?;
                let rep = match kind {
                    "monotone" => poincare_monotone(&cp, &phi)?,
                    _ => poincare_stable(&cp, &phi)?,
                };
                let ratio = rep.tol / tol;
                self.report.check(format!("poincare.{kind}.R{r}.refinement"), ratio >= 1.8 && rep.satisfied, ratio, 1.8, "coarse/fine ratio of the slack tolerance");
                rows.push(json!({"radius": r, "kind": kind, "coarse": rep}));
            }
            stage["coarse"] = json!(rows);
        }
        self.report.stage("poincare", stage)
    }

    fn branch_reports(&self, pair: &SolutionPair, phi: &ScalarField, hyp: &Cor1Hypotheses) -> Result<Vec<(&'static str, InequalityReport)>> {
        let mut out = Vec::new();
        if hyp.monotone_branch() {
            out.push(("monotone", poincare_monotone(pair, phi)?));
        }
        if hyp.stable_branch() {
            out.push(("stable", poincare_stable(pair, phi)?));
        }
        Ok(out)
    }

    fn energy(&mut self) -> Result<()> {
        let pair = self.pair()?.clone();
        let sweep = energy_growth_sweep(&pair, &self.cfg.checks.sweep_radii)?;
        let rows: Vec<Vec<f64>> = sweep.rows.iter().map(|r| vec![r.radius, r.energy_u, r.energy_v]).collect();
        self.table("energy.csv", &["radius", "energy_u", "energy_v"], &rows)?;
        let lim = self.cfg.checks.slope_limit;
        if self.grid.n() == 2 {
            self.report.check("energy.slope_u", sweep.slope_u <= lim, sweep.slope_u, lim, "log-log slope of the U energy");
            self.report.check("energy.slope_v", sweep.slope_v <= lim, sweep.slope_v, lim, "log-log slope of the V energy");
        }
        self.report.stage("energy-sweep", sweep)
    }

    fn annulus(&mut self) -> Result<()> {
        let a = self.cfg.checks.annulus.clone();
        let r_max = max_of(a.radii.iter().copied());
        let mut rows = Vec::new();
        for &d in &a.dims {
            let g = Arc::new(HalfSpaceGrid::new(d, r_max, a.nx, r_max, a.ny, 1.0, false)?);
            let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
            rng.set_stream(100 + d as u64);
            let mut fields = vec![
                ScalarField::from_fn(g.clone(), |_, _| 1.0)?,
                ScalarField::from_fn(g.clone(), |x, y| (-(x[0] * x[0] + x[1] * x[1] + y * y) / (0.25 * r_max * r_max)).exp())?,
            ];
            for _ in 0..a.random_fields {
                let waves: Vec<[f64; 5]> = (0..4)
                    .map(|_| {
                        [
                            rng.random_range(-1.0..1.0),
                            rng.random_range(0.0..1.0),
                            if d == 2 { rng.random_range(0.0..1.0) } else { 0.0 },
                            rng.random_range(0.0..1.0),
                            rng.random_range(0.0..2.0 * PI),
                        ]
                    })
                    .collect();
                let base = rng.random_range(0.0..0.5);
                fields.push(ScalarField::from_fn(g.clone(), |x, y| {
                    let s: f64 = waves.iter().map(|w| w[0] * (w[1] * x[0] + w[2] * x[1] + w[3] * y + w[4]).cos()).sum();
                    base + s * s
                })?);
            }
            let (mut all_ok, mut min_rel) = (true, f64::INFINITY);
            for (fi, h) in fields.iter().enumerate() {
                for &r in &a.radii {
                    let rep = annulus_lemma_check(h, r)?;
                    all_ok &= rep.satisfied;
                    min_rel = min_rel.min(rep.slack / rep.rhs);
                    rows.push(vec![d as f64, fi as f64, r, rep.lhs, rep.rhs, rep.slack, rep.quad_tol]);
                }
            }
            self.report.check(format!("annulus.n{d}.satisfied"), all_ok, min_rel, 0.0, "every field and radius within the quadrature tolerance");
            self.report.check(format!("annulus.n{d}.positive_slack"), min_rel > 0.0, min_rel, 0.0, "smallest slack relative to the right-hand side");
        }
        self.table("annulus.csv", &["n", "field", "radius", "lhs", "rhs", "slack", "quad_tol"], &rows)?;
        self.report.stage("annulus", json!({"rows": rows.len(), "fields_per_dim": 2 + a.random_fields}))
    }

    fn symmetry(&mut self) -> Result<()> {
        let pair = self.pair()?.clone();
        let c = self.cfg.checks.clone();
        let stride = (self.grid.levels() / 8).max(1);
        let ru = extract_direction_field(&pair.u, stride)?;
        let rv = extract_direction_field(&pair.v, stride)?;
        for (name, r) in [("u", &ru), ("v", &rv)] {
            self.report.check(format!("symmetry.fit_{name}"), !r.constant_field && r.fit_residual < c.symmetry_threshold, r.fit_residual, c.symmetry_threshold, "relative misfit of the one-dimensional profile");
        }
        let align = match alignment_check(&ru, &rv, c.symmetry_threshold) {
            Ok(a) => {
                let deg = a.to_degrees();
                self.report.check("symmetry.alignment", deg <= c.alignment_max_deg, deg, c.alignment_max_deg, "angle between the U and V directions, folded over sign, degrees");
                Some(deg)
            }
            Err(Error::Precondition(msg)) => {
                self.report.check("symmetry.alignment", false, f64::NAN, c.alignment_max_deg, msg);
                None
            }
            Err(e) => return Err(e),
        };
        if let PairSource::SyntheticLayer { omega, .. } = &self.cfg.pair {
            let deg = fold_angle(ru.omega, *omega).to_degrees();
            self.report.check("symmetry.direction", deg <= c.direction_max_deg, deg, c.direction_max_deg, "angle between recovered and configured direction, degrees");
        }
        let mut interval = None;
        if let (Some(iu), Some(iv)) = (c.interval_u, c.interval_v) {
            let ih = interval_hypothesis(pair.potential.as_ref(), &pair.u.trace(), &pair.v.trace(), iu, iv)?;
            self.report.check("symmetry.interval_hypothesis", ih.holds, ih.min_f12_on_rectangle, 0.0, format!("{} trace points inside the rectangle", ih.image_points_inside));
            interval = Some(ih);
        }
        let mut rows = Vec::new();
        for lvl in &ru.profile {
            for (t, v) in lvl.t.iter().zip(&lvl.values) {
                rows.push(vec![lvl.y, *t, *v]);
            }
        }
        self.table("profile_u.csv", &["y", "t", "value"], &rows)?;
        self.report.stage("symmetry", json!({
            "omega_u": ru.omega,
            "omega_v": rv.omega,
            "fit_residual_u": ru.fit_residual,
            "fit_residual_v": rv.fit_residual,
            "alignment_deg": align,
            "interval": interval,
        }))
    }

    fn decay(&mut self) -> Result<()> {
        let hyp = self.hypotheses()?;
        self.report.check("decay.hypotheses", hyp.holds(), hyp.monotonicity_margin, 0.0, format!("monotone branch {}, stable branch {}", hyp.monotone_branch(), hyp.stable_branch()));
        if !hyp.holds() {
            return self.report.stage("decay", json!({"hypotheses": hyp, "claimed": false}));
        }
        let pair = self.pair()?.clone();
        let rep = symmetry_decay_experiment(&pair, &self.cfg.checks.decay_radii, &hyp)?;
        let h = self.grid.h();
        let worst = max_of(rep.rows.iter().map(|r| r.lhs - r.cutoff_rhs * (1.0 + SLACK_CONSTANT * h)));
        self.report.check("decay.bounded", worst <= 0.0, worst, 0.0, "inner curvature energy minus the cutoff right-hand side (with slack)");
        if matches!(self.cfg.pair, PairSource::SyntheticLayer { .. }) {
            let lhs = max_of(rep.rows.iter().map(|r| r.lhs));
            let tol = SLACK_CONSTANT * h * max_of(rep.rows.iter().map(|r| r.cutoff_rhs));
            self.report.check("decay.vanishing", lhs <= tol, lhs, tol, "curvature energy of a one-dimensional pair");
        }
        let rows: Vec<Vec<f64>> = rep.rows.iter().map(|r| vec![r.radius, r.lhs, r.annulus_energy, r.bound, r.cutoff_rhs]).collect();
        self.table("decay.csv", &["radius", "lhs", "annulus_energy", "bound", "cutoff_rhs"], &rows)?;
        self.report.stage("decay", rep)
    }
}

/// `π / (Γ(1 + 2s) sin(π s))`, the symbol constant of the raw quadrature.
pub fn closed_form_ratio(s: f64) -> f64 {
    PI / (statrs::function::gamma::gamma(1.0 + 2.0 * s) * (PI * s).sin())
}

/// `2^{1-2s} Γ(1-s) / Γ(s)`, the flux factor of the raw Neumann data.
pub fn dtn_constant(s: f64) -> f64 {
    use statrs::function::gamma::gamma;
    2f64.powf(1.0 - 2.0 * s) * gamma(1.0 - s) / gamma(s)
}
