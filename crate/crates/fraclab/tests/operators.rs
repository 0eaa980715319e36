use std::f64::consts::PI;
use std::sync::Arc;

use approx::assert_relative_eq;
use fraclab::extension::{calibrate_dtn, extend_poisson, extend_poisson_direct, kernel_normalization, PoissonKernel};
use fraclab::fraclap::{fraclap_pv, fraclap_spectral, pv_normalization_ratio, PVQuadratureConfig};
use fraclab::grid::{weighted_volume_integral, FractionalOrder, HalfBallRegion, HalfSpaceGrid, ScalarField, TraceField};
use fraclab::pipeline::{closed_form_ratio, dtn_constant};
use fraclab::solver::{calibrate_weighted, solve_weighted_dirichlet};
use statrs::function::gamma::gamma;

fn order(s: f64) -> FractionalOrder {
    FractionalOrder::new(s).unwrap()
}

fn periodic_1d(nx: usize, l: f64) -> Arc<HalfSpaceGrid> {
    Arc::new(HalfSpaceGrid::new(1, l, nx, 20.0, 200, 1.0, true).unwrap())
}

fn dbl(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    quadrature::double_exponential::integrate(f, a, b, 1e-12).integral
}

#[test]
fn kernel_constant_matches_direct_mass_integral() {
    // Independent oracle: with r = cot(φ) the mass becomes an angular integral
    // with an algebraic singularity at φ = 0, removed by φ = ψ².
    for s in [0.25, 0.5, 0.75] {
        for n in [1usize, 2] {
            let e = 0.5 * (n as f64 + 1.0 - (1.0 - 2.0 * s));
            let angular = |psi: f64| {
                let phi = psi * psi;
                let (sn, cs) = phi.sin_cos();
                let f = if n == 1 { 2.0 * sn.powf(2.0 * e - 2.0) } else { 2.0 * PI * cs * sn.powf(2.0 * e - 3.0) };
                f * 2.0 * psi
            };
            let mass = dbl(angular, 0.0, (PI / 2.0).sqrt());
            assert_relative_eq!(kernel_normalization(order(s), n).unwrap(), 1.0 / mass, max_relative = 1e-10);
        }
    }
}

#[test]
fn harmonic_half_plane_kernel_is_one_over_pi() {
    assert_relative_eq!(kernel_normalization(order(0.5), 1).unwrap(), 1.0 / PI, max_relative = 1e-14);
}

#[test]
fn kernel_has_unit_mass_at_every_height() {
    for s in [0.25, 0.5, 0.75] {
        for n in [1, 2] {
            let k = PoissonKernel::new(order(s), n).unwrap();
            for y in [0.1, 1.0, 10.0] {
                assert!((k.mass(y).unwrap() - 1.0).abs() < 1e-6, "s={s} n={n} y={y}");
            }
        }
    }
}

#[test]
fn pv_ratio_matches_closed_form_symbol() {
    let g = periodic_1d(256, 8.0);
    for s in [0.25, 0.5, 0.75] {
        let r = pv_normalization_ratio(order(s), &g).unwrap();
        let expected = PI / (gamma(1.0 + 2.0 * s) * (PI * s).sin());
        assert_relative_eq!(closed_form_ratio(s), expected, max_relative = 1e-14);
        assert!((r.ratio / expected - 1.0).abs() < 0.01, "s={s}: ratio {} vs {expected}", r.ratio);
        assert!(r.dispersion < 0.02, "s={s}: dispersion {}", r.dispersion);
    }
}

#[test]
fn normalized_quadrature_agrees_with_spectral_operator() {
    let g = periodic_1d(256, 8.0);
    let k = PI / 8.0;
    let u = TraceField::from_fn(g.clone(), |x| (k * x[0]).cos() + 0.4 * (3.0 * k * x[0]).sin()).unwrap();
    for s in [0.3, 0.6] {
        let cfg = PVQuadratureConfig::default();
        let ratio = pv_normalization_ratio(order(s), &g).unwrap().ratio;
        let pv = fraclap_pv(&u, order(s), &cfg).unwrap();
        let sp = fraclap_spectral(&u, order(s)).unwrap();
        let err = pv.values().iter().zip(sp.values()).map(|(a, b)| (a / ratio - b).abs()).fold(0.0, f64::max);
        assert!(err < 0.01 * sp.values().iter().fold(0.0f64, |m, v| m.max(v.abs())), "s={s}: {err}");
    }
}

#[test]
fn dtn_calibration_reproduces_gamma_constant() {
    // Raw flux of the unit-mass extension is d_s |k|^{2s}.
    let g = Arc::new(HalfSpaceGrid::new(1, 8.0, 128, 20.0, 200, 2.0, true).unwrap());
    let s = 0.5;
    let expected = 2f64.powf(1.0 - 2.0 * s) * gamma(1.0 - s) / gamma(s);
    assert_relative_eq!(dtn_constant(s), expected, max_relative = 1e-14);
    let cal = calibrate_dtn(order(s), &g).unwrap();
    assert_relative_eq!(cal.factor, expected, max_relative = 1e-3);
    let cal_w = calibrate_weighted(order(s), &g, 1e-12).unwrap();
    assert_relative_eq!(cal_w.factor, expected, max_relative = 1e-2);
}

#[test]
fn modal_and_direct_poisson_extensions_agree() {
    let g = Arc::new(HalfSpaceGrid::new(1, 6.0, 96, 6.0, 24, 1.0, true).unwrap());
    let k = PI / 6.0;
    let t = TraceField::from_fn(g.clone(), |x| (2.0 * k * x[0]).cos()).unwrap();
    for s in [0.3, 0.7] {
        let a = extend_poisson(&t, order(s)).unwrap();
        let j = g.levels() / 2;
        let b = extend_poisson_direct(&t, order(s), &[j], 8).unwrap();
        let diff = a.level(j).iter().zip(&b[0]).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-3, "s={s}: {diff}");
    }
}

#[test]
fn weighted_solver_matches_poisson_extension_on_a_mode() {
    let g = Arc::new(HalfSpaceGrid::new(1, 8.0, 128, 16.0, 64, 1.0, true).unwrap());
    let t = TraceField::from_fn(g.clone(), |x| (PI * x[0] / 4.0).cos()).unwrap();
    for s in [0.25, 0.5, 0.75] {
        let o = order(s);
        let p = extend_poisson(&t, o).unwrap();
        let w = solve_weighted_dirichlet(&t, o, 1e-12).unwrap();
        let diff = p.values().iter().zip(w.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff < 5e-3, "s={s}: {diff}");
    }
}

#[test]
fn half_disc_weighted_integral_matches_adaptive_quadrature() {
    let (r, alpha) = (2.0, 0.5);
    let f = |x: f64, y: f64| 1.0 + x * x + 0.5 * y;
    let oracle = dbl(
        |y| {
            let w = (r * r - y * y).max(0.0).sqrt();
            y.powf(alpha) * dbl(|x| f(x, y), -w, w)
        },
        0.0,
        r,
    );
    let mut errs = Vec::new();
    for nx in [65, 129] {
        let g = Arc::new(HalfSpaceGrid::new(1, 3.0, nx, 3.0, nx / 2, 1.0, false).unwrap());
        let field = ScalarField::from_fn(g.clone(), |x, y| f(x[0], y)).unwrap();
        let region = HalfBallRegion::new(&g, r).unwrap();
        let v = weighted_volume_integral(&field, alpha, &region).unwrap();
        errs.push((v - oracle).abs() / oracle);
    }
    assert!(errs[1] < 5e-3, "{errs:?}");
    assert!(errs[1] < errs[0], "{errs:?}");
}
