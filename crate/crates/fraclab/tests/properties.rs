use std::sync::{Arc, OnceLock};

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fraclab::checks::{
    annulus_lemma_check, bump_cutoff, extract_direction, fold_angle, log_cutoff, log_cutoff_gradient_constant, log_cutoff_value,
    poincare_stable, stability_form, TestFunctionPair,
};
use fraclab::geometry::{default_eps, vertical_excess};
use fraclab::grid::{FractionalOrder, HalfSpaceGrid, ScalarField, TraceField};
use fraclab::potential::Builtin;
use fraclab::solver::SolutionPair;

fn grid_2d(nx: usize, ny: usize) -> Arc<HalfSpaceGrid> {
    Arc::new(HalfSpaceGrid::new(2, 4.0, nx, 4.0, ny, 2.0, false).unwrap())
}

fn layer_pair(theta: f64, s: (f64, f64)) -> SolutionPair {
    let g = grid_2d(33, 16);
    let (c, sn) = (theta.cos(), theta.sin());
    let u = ScalarField::from_fn(g.clone(), |x, y| (c * x[0] + sn * x[1]).tanh() * (-0.3 * y).exp()).unwrap();
    let v = ScalarField::from_fn(g, |x, y| -0.5 * (c * x[0] + sn * x[1] + 0.2).tanh() / (1.0 + y)).unwrap();
    let o = (FractionalOrder::new(s.0).unwrap(), FractionalOrder::new(s.1).unwrap());
    SolutionPair::from_fields(u, v, o, Arc::new(Builtin::DoubleWellCoupled { eps: 0.3 })).unwrap()
}

fn shared_pair() -> &'static SolutionPair {
    static P: OnceLock<SolutionPair> = OnceLock::new();
    P.get_or_init(|| layer_pair(0.4, (0.5, 0.5)))
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn annulus_inequality_holds_for_nonnegative_densities(seed in any::<u64>(), radius in 1.5f64..4.0) {
        let g = grid_2d(17, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vals: Vec<f64> = (0..g.len()).map(|_| if rng.random::<f64>() < 0.3 { 0.0 } else { rng.random::<f64>() }).collect();
        let h = ScalarField::new(g, vals).unwrap();
        let r = annulus_lemma_check(&h, radius).unwrap();
        prop_assert!(r.satisfied, "slack {} tol {}", r.slack, r.quad_tol);
    }

    #[test]
    fn log_cutoff_values_are_bounded_and_nonincreasing(radius in 1.01f64..100.0, a in 0.0f64..1.5, b in 0.0f64..1.5) {
        let (r1, r2) = (a.min(b) * radius, a.max(b) * radius);
        let (p1, p2) = (log_cutoff_value(r1, radius), log_cutoff_value(r2, radius));
        prop_assert!((0.0..=1.0).contains(&p1) && (0.0..=1.0).contains(&p2));
        prop_assert!(p2 <= p1);
    }

    #[test]
    fn discrete_log_cutoff_gradient_is_near_two(radius in 1.5f64..4.0) {
        let g = grid_2d(65, 32);
        let phi = log_cutoff(radius, &g).unwrap();
        let c = log_cutoff_gradient_constant(&phi, radius);
        prop_assert!(c <= 2.0 * (1.0 + g.h()), "constant {c}");
    }

    #[test]
    fn stable_inequality_terms_scale_quadratically_in_the_cutoff(radius in 1.5f64..4.0) {
        let p = shared_pair();
        let phi = log_cutoff(radius, p.grid()).unwrap();
        let a = poincare_stable(p, &phi).unwrap();
        let b = poincare_stable(p, &phi.map(|t| 2.0 * t).unwrap()).unwrap();
        prop_assert!(rel_close(b.lhs(), 4.0 * a.lhs(), 1e-12));
        prop_assert!(rel_close(b.rhs_gradient, 4.0 * a.rhs_gradient, 1e-12));
        prop_assert!(rel_close(b.slack, 4.0 * a.slack, 1e-10));
        prop_assert!(rel_close(b.tol, 4.0 * a.tol, 1e-12));
    }

    #[test]
    fn swapping_the_pair_leaves_the_left_side_unchanged(theta in 0.0f64..std::f64::consts::PI, s2 in 0.3f64..0.7) {
        let p = layer_pair(theta, (0.5, s2));
        let phi = log_cutoff(3.0, p.grid()).unwrap();
        let a = poincare_stable(&p, &phi).unwrap();
        let b = poincare_stable(&p.swapped(), &phi).unwrap();
        prop_assert!(rel_close(a.lhs(), b.lhs(), 1e-12));
        prop_assert!(rel_close(a.rhs_gradient, b.rhs_gradient, 1e-12));
    }

    #[test]
    fn stability_form_is_quadratic(t in -3.0f64..3.0, w in 0.2f64..2.0) {
        let p = shared_pair();
        let g = p.grid().clone();
        let bump = bump_cutoff(&g, 3.0).unwrap();
        let xi2 = bump.mul(&ScalarField::from_fn(g.clone(), |x, _| (w * x[0]).cos()).unwrap()).unwrap();
        let base = TestFunctionPair::new("base", bump.clone(), xi2.clone(), 3.0).unwrap();
        let scaled = TestFunctionPair::new("scaled", bump.map(|v| t * v).unwrap(), xi2.map(|v| t * v).unwrap(), 3.0).unwrap();
        let (q0, q1) = (stability_form(p, &base).unwrap(), stability_form(p, &scaled).unwrap());
        prop_assert!((q1 - t * t * q0).abs() <= 1e-10 * (1.0 + q1.abs()), "{q1} vs {}", t * t * q0);
    }

    #[test]
    fn direction_of_a_planar_profile_is_recovered(theta in -1.5f64..1.5, width in 0.7f64..2.0) {
        let g = grid_2d(33, 4);
        let (c, s) = (theta.cos(), theta.sin());
        let tr = TraceField::from_fn(g, |x| ((c * x[0] + s * x[1]) / width).tanh()).unwrap();
        let r = extract_direction(&tr).unwrap();
        prop_assert!(fold_angle(r.omega, [c, s]) < 1e-3, "omega {:?} theta {theta}", r.omega);
        prop_assert!(r.fit_residual < 1e-2);
    }

    #[test]
    fn vertical_excess_is_nonnegative_up_to_discretization(seed in any::<u64>()) {
        let g = grid_2d(33, 16);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let modes: Vec<(f64, f64, f64, f64)> = (0..4)
            .map(|_| (rng.random_range(-1.0..1.0), rng.random_range(0.2..1.2), rng.random_range(0.2..1.2), rng.random_range(0.0..6.3)))
            .collect();
        // Decaying harmonic modes a cos(k·x + φ) e^{-|k| y}.
        let u = ScalarField::from_fn(g.clone(), |x, y| {
            modes.iter().map(|&(a, k0, k1, ph)| a * (k0 * x[0] + k1 * x[1] + ph).cos() * (-(k0 * k0 + k1 * k1).sqrt() * y).exp()).sum()
        })
        .unwrap();
        let ex = vertical_excess(&u, default_eps(&u));
        let scale = ex.values().iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
        let min = ex.values().iter().copied().fold(f64::INFINITY, f64::min);
        prop_assert!(min >= -g.h() * scale, "min {min:e} scale {scale:e}");
    }
}
