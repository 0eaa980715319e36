//! Acceptance suite: one line per criterion, nonzero exit if any fails.

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::Instant;

use serde_json::Value;

use fraclab::extension::PoissonKernel;
use fraclab::grid::FractionalOrder;
use fraclab::pipeline::{run, RunOutput};
use fraclab::presets::preset;
use fraclab::report::RunReport;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome { passed, detail: detail.into() }
}

struct Runs {
    dir: tempfile::TempDir,
    reports: BTreeMap<&'static str, (RunReport, f64)>,
}

impl Runs {
    fn get(&mut self, name: &'static str) -> Result<&(RunReport, f64), String> {
        if !self.reports.contains_key(name) {
            let cfg = preset(name).map_err(|e| e.to_string())?;
            let t0 = Instant::now();
            let RunOutput { report, .. } = run(&cfg, Some(&self.dir.path().join(name))).map_err(|e| format!("{name}: {e}"))?;
            self.reports.insert(name, (report, t0.elapsed().as_secs_f64()));
        }
        Ok(&self.reports[name])
    }
}

fn value(r: &RunReport, name: &str) -> Result<f64, String> {
    r.find(name).map(|c| c.value).ok_or_else(|| format!("missing check `{name}`"))
}

fn passed(r: &RunReport, name: &str) -> Result<bool, String> {
    r.find(name).map(|c| c.passed).ok_or_else(|| format!("missing check `{name}`"))
}

fn stage<'a>(r: &'a RunReport, path: &[&str]) -> Result<&'a Value, String> {
    let mut v = r.stages.get(path[0]).ok_or_else(|| format!("missing stage `{}`", path[0]))?;
    for key in &path[1..] {
        v = v.get(*key).ok_or_else(|| format!("missing `{}`", path.join(".")))?;
    }
    Ok(v)
}

fn num(v: &Value) -> Result<f64, String> {
    v.as_f64().ok_or_else(|| format!("not a number: {v}"))
}

fn operator(runs: &mut Runs) -> Result<Outcome, String> {
    let (r, secs) = runs.get("operator")?;
    let mut worst = 0.0f64;
    for s in ["0.25", "0.5", "0.75"] {
        worst = worst.max(value(r, &format!("dtn.s{s}.solver"))?);
    }
    Ok(outcome(worst < 0.05 && *secs < 60.0, format!("max relative L2 error {worst:.2e} (< 5e-2), {secs:.1} s (< 60 s)")))
}

fn kernel(runs: &mut Runs) -> Result<Outcome, String> {
    let (r, _) = runs.get("kernel")?;
    let mut worst = 0.0f64;
    for s in ["0.25", "0.5", "0.75"] {
        for y in ["0.1", "1", "10"] {
            worst = worst.max(value(r, &format!("kernel.s{s}.mass_y{y}"))?);
        }
    }
    // The preset runs n = 1; the plane kernel is checked directly.
    for s in [0.25, 0.5, 0.75] {
        let k = PoissonKernel::new(FractionalOrder::new(s).map_err(|e| e.to_string())?, 2).map_err(|e| e.to_string())?;
        for y in [0.1, 1.0, 10.0] {
            worst = worst.max((k.mass(y).map_err(|e| e.to_string())? - 1.0).abs());
        }
    }
    let classical = value(r, "kernel.classical")?;
    Ok(outcome(worst < 1e-6 && classical < 1e-8, format!("max |mass - 1| {worst:.2e} (< 1e-6), |C - 1/pi| {classical:.2e} (< 1e-8)")))
}

fn crossval(runs: &mut Runs) -> Result<Outcome, String> {
    let (r, _) = runs.get("crossval")?;
    let d = value(r, "crossval.s0.5")?;
    let ratio = value(r, "crossval.s0.5.refinement")?;
    let ok = d < 0.01 && passed(r, "crossval.s0.5.refinement")?;
    Ok(outcome(ok, format!("relative L2 difference {d:.2e} (< 1e-2), refinement ratio {ratio:.2} (>= 2)")))
}

fn geometry(runs: &mut Runs) -> Result<Outcome, String> {
    let (r, _) = runs.get("geometry")?;
    let id = value(r, "geometry.identity")?;
    let ratio = value(r, "geometry.identity_refinement")?;
    let radial = value(r, "geometry.radial_value")?;
    let ok = id < 0.02 && passed(r, "geometry.identity_refinement")? && radial < 0.03;
    Ok(outcome(ok, format!("identity residual {id:.2e} (< 2e-2), refinement ratio {ratio:.2}, radial deviation {radial:.2e} (< 3e-2)")))
}

fn excess(runs: &mut Runs) -> Result<Outcome, String> {
    let (r, _) = runs.get("excess")?;
    let n = stage(r, &["geometry", "excess", "samples"])?.as_array().map_or(0, |a| a.len());
    let min = value(r, "geometry.excess_nonnegative")?;
    let one_d = value(r, "geometry.excess_one_dimensional")?;
    let ok = n == 20 && passed(r, "geometry.excess_nonnegative")? && passed(r, "geometry.excess_one_dimensional")?;
    Ok(outcome(ok, format!("{n} fields, min relative excess {min:.2e}, 1D excess {one_d:.2e}")))
}

fn monotone(runs: &mut Runs) -> Result<Outcome, String> {
    let (r, secs) = runs.get("monotone")?;
    let mut ok = *secs < 300.0;
    let mut worst = f64::INFINITY;
    for radius in ["2", "4", "8"] {
        ok &= passed(r, &format!("poincare.monotone.R{radius}"))?;
        ok &= passed(r, &format!("poincare.monotone.R{radius}.refinement"))?;
        worst = worst.min(value(r, &format!("poincare.monotone.R{radius}.refinement"))?);
    }
    let h = stage(r, &["poincare", "hypotheses"])?;
    let decoupled = h["f12_nonneg"] == Value::Bool(true) && h["f12_nonpos"] == Value::Bool(true);
    ok &= decoupled;
    Ok(outcome(ok, format!("slack >= -tol at R = 2, 4, 8; min tol ratio {worst:.2}; F12 = 0: {decoupled}; {secs:.1} s (< 300 s)")))
}

fn stability(runs: &mut Runs) -> Result<Outcome, String> {
    let (r, _) = runs.get("stability")?;
    let size = value(r, "stability.family_size")?;
    let min = value(r, "stability.min_eigenvalue")?;
    let family = stage(r, &["check-stability", "family"])?.as_array().cloned().unwrap_or_default();
    let critical = family.iter().find(|t| t["label"] == "grad_norm_phi").map(|t| t["nonnegative"] == Value::Bool(true));
    let ok = passed(r, "stability.elements")? && passed(r, "stability.family_size")? && passed(r, "stability.min_eigenvalue")? && critical == Some(true);
    Ok(outcome(ok, format!("{size} elements, |grad U| phi element nonnegative: {critical:?}, min eigenvalue {min:.3}")))
}

fn annulus(runs: &mut Runs) -> Result<Outcome, String> {
    let (r, _) = runs.get("annulus")?;
    let mut ok = true;
    let mut slack = f64::INFINITY;
    for n in [1, 2] {
        ok &= passed(r, &format!("annulus.n{n}.satisfied"))? && passed(r, &format!("annulus.n{n}.positive_slack"))?;
        slack = slack.min(value(r, &format!("annulus.n{n}.positive_slack"))?);
    }
    let fields = num(stage(r, &["annulus", "fields_per_dim"])?)?;
    ok &= fields >= 22.0;
    Ok(outcome(ok, format!("{fields} fields per dimension, min relative slack {slack:.3}")))
}

fn energy(runs: &mut Runs) -> Result<Outcome, String> {
    let (r, _) = runs.get("energy")?;
    let (a, b) = (value(r, "energy.slope_u")?, value(r, "energy.slope_v")?);
    Ok(outcome(a <= 2.15 && b <= 2.15, format!("slopes {a:.3}, {b:.3} (<= 2.15)")))
}

fn synthetic(runs: &mut Runs) -> Result<Outcome, String> {
    let (r, _) = runs.get("synthetic")?;
    let mut ok = true;
    let mut worst = 0.0f64;
    for entry in stage(r, &["poincare", "reports"])?.as_array().cloned().unwrap_or_default() {
        let rep = &entry["report"];
        let lhs: f64 = ["lhs_curvature_u", "lhs_tangential_u", "lhs_curvature_v", "lhs_tangential_v"]
            .iter()
            .map(|k| rep[*k].as_f64().unwrap_or(f64::NAN))
            .sum();
        let tol = num(&rep["tol"])?;
        ok &= lhs <= tol;
        worst = worst.max(lhs / tol);
    }
    let dir = value(r, "symmetry.direction")?;
    ok &= passed(r, "symmetry.direction")? && dir < 0.1;
    let (wu, wv) = (stage(r, &["symmetry", "omega_u"])?, stage(r, &["symmetry", "omega_v"])?);
    let dot = num(&wu[0])? * num(&wv[0])? + num(&wu[1])? * num(&wv[1])?;
    let align = num(stage(r, &["symmetry", "alignment_deg"])?)?;
    ok &= dot < 0.0 && align < 1e-6;
    Ok(outcome(ok, format!("max LHS/tol {worst:.2e}, direction error {dir:.2e} deg, omega_u . omega_v = {dot:.3} folded to {align:.1e} deg")))
}

fn coupled(runs: &mut Runs) -> Result<Outcome, String> {
    let (r, _) = runs.get("coupled")?;
    let (fu, fv) = (value(r, "symmetry.fit_u")?, value(r, "symmetry.fit_v")?);
    let align = num(stage(r, &["symmetry", "alignment_deg"])?)?;
    let interval = passed(r, "symmetry.interval_hypothesis")?;
    let ok = fu < 0.05 && fv < 0.05 && align < 2.0 && interval && passed(r, "solve.converged").unwrap_or(true);
    Ok(outcome(ok, format!("fit residuals {fu:.1e}, {fv:.1e} (< 5e-2), alignment {align:.2e} deg (< 2), F12 > 0 interval: {interval}")))
}

fn determinism(runs: &mut Runs) -> Result<Outcome, String> {
    let names: Vec<&'static str> = runs.reports.keys().copied().collect();
    let mut differing = Vec::new();
    for name in &names {
        let cfg = preset(name).map_err(|e| e.to_string())?;
        let again = run(&cfg, None).map_err(|e| format!("{name}: {e}"))?;
        if again.report.hash != runs.reports[name].0.hash {
            differing.push(*name);
        }
    }
    Ok(outcome(differing.is_empty() && names.len() == 11, format!("{} presets rerun, differing hashes: {differing:?}", names.len())))
}

type Criterion = (&'static str, fn(&mut Runs) -> Result<Outcome, String>);

fn main() -> ExitCode {
    let criteria: [Criterion; 12] = [
        ("operator equivalence", operator),
        ("kernel normalization", kernel),
        ("extension cross-validation", crossval),
        ("level-set identity", geometry),
        ("vertical excess", excess),
        ("monotone inequality", monotone),
        ("stability of monotone pair", stability),
        ("annulus inequality", annulus),
        ("energy growth", energy),
        ("one-dimensional mechanics", synthetic),
        ("coupled alignment", coupled),
        ("determinism", determinism),
    ];
    let mut runs = Runs { dir: tempfile::tempdir().expect("temporary directory"), reports: BTreeMap::new() };
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let o = f(&mut runs).unwrap_or_else(|e| outcome(false, format!("error: {e}")));
        failed += usize::from(!o.passed);
        println!("{} {:>2} {name}: {}", if o.passed { "PASS" } else { "FAIL" }, i + 1, o.detail);
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
