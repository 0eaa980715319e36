use std::f64::consts::PI;
use std::sync::Arc;

use fraclab::grid::{FractionalOrder, HalfSpaceGrid, TraceField};
use fraclab::potential::{Builtin, Poly};
use fraclab::solver::{manufactured_potential, solve_coupled_system, weak_form_residual, SolveConfig};
use fraclab::Error;

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn manufactured_pair_is_recovered() {
    let l = 4.0;
    let g = Arc::new(HalfSpaceGrid::new(1, l, 129, 8.0, 96, 2.5, false).unwrap());
    let o = FractionalOrder::new(0.6).unwrap();
    let th = |x: f64| PI * x / (2.0 * l);
    let a = 0.05;
    let target = TraceField::from_fn(g.clone(), |x| th(x[0]).sin() + a * (3.0 * th(x[0])).sin()).unwrap();
    let m = manufactured_potential(&target, Poly(vec![0.0, -1.0]), -1.0, 32, (o, o), 1e-13).unwrap();
    assert!(m.fit_residual < 1e-8, "fit residual {}", m.fit_residual);
    let u0 = target.map(|t| 0.7 * t).unwrap();
    let v0 = m.v.map(|t| 0.7 * t).unwrap();
    // The even mode u_x is nearly neutral on a finite box; the odd target sidesteps it.
    let cfg = SolveConfig { nonlinear_tol: 1e-8, odd_axis: Some(0), ..SolveConfig::default() };
    let pair = solve_coupled_system(Arc::new(m.potential.clone()), (o, o), (&u0, &v0), &cfg).unwrap();
    let eu = sup_diff(pair.u.trace().values(), target.values());
    let ev = sup_diff(pair.v.trace().values(), m.v.values());
    assert!(eu.max(ev) <= 2e-8, "trace errors {eu:e} {ev:e}");
}

fn layer_setup(nx: usize) -> (Arc<HalfSpaceGrid>, TraceField, TraceField) {
    let g = Arc::new(HalfSpaceGrid::new(2, 8.0, nx, 8.0, 32, 2.0, false).unwrap());
    let u = TraceField::from_fn(g.clone(), |x| x[1].tanh()).unwrap();
    let v = u.map(|t| -t).unwrap();
    (g, u, v)
}

#[test]
fn double_well_layer_converges_and_is_odd() {
    let (g, u0, v0) = layer_setup(32);
    let o = FractionalOrder::new(0.5).unwrap();
    let cfg = SolveConfig { odd_axis: Some(1), ..SolveConfig::default() };
    let pair = solve_coupled_system(Arc::new(Builtin::DoubleWell), (o, o), (&u0, &v0), &cfg).unwrap();
    let r = &pair.report;
    assert!(*r.residuals.last().unwrap() <= cfg.nonlinear_tol);
    assert_eq!(r.outer_iterations, r.residuals.len());
    let t = pair.u.trace();
    let np = g.plane_len();
    for p in 0..np {
        let q = fraclab::solver::mirror_index(&g, p, 1);
        assert!((t.values()[p] + t.values()[q]).abs() < 1e-12);
    }
    // Weak form against a smooth compactly supported test function.
    let xi = fraclab::checks::bump_cutoff(&g, 4.0).unwrap();
    let (r1, r2) = weak_form_residual(&pair, &xi, &xi).unwrap();
    assert!(r1.abs() < 1e-4 && r2.abs() < 1e-4, "{r1:e} {r2:e}");
}

#[test]
fn iteration_cap_reports_residual_history() {
    let (_, u0, v0) = layer_setup(16);
    let o = FractionalOrder::new(0.5).unwrap();
    let cfg = SolveConfig { max_outer_iters: 3, odd_axis: Some(1), ..SolveConfig::default() };
    match solve_coupled_system(Arc::new(Builtin::DoubleWell), (o, o), (&u0, &v0), &cfg) {
        Err(Error::NonConvergence { residuals, .. }) => assert_eq!(residuals.len(), 3),
        other => panic!("expected non-convergence, got {other:?}"),
    }
}

#[test]
fn invalid_damping_is_rejected_before_solving() {
    let (_, u0, v0) = layer_setup(16);
    let o = FractionalOrder::new(0.5).unwrap();
    let cfg = SolveConfig { damping: 1.5, ..SolveConfig::default() };
    assert!(matches!(
        solve_coupled_system(Arc::new(Builtin::DoubleWell), (o, o), (&u0, &v0), &cfg),
        Err(Error::InvalidParameter { name: "damping", .. })
    ));
}
