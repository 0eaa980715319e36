//! Coupling potentials `F(t, σ)` and their derivative fields on traces.

use std::fmt::Debug;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{same_grid, TraceField};

/// A `C^{1,1}_loc` potential with explicitly supplied second derivatives.
///
/// `d11`, `d12`, `d22` are only consulted where `is_in_d` holds; the same
/// `d12` serves as both mixed partials.
pub trait CoupledPotential: Debug + Send + Sync {
    fn name(&self) -> String;
    fn value(&self, t: f64, s: f64) -> f64;
    fn d1(&self, t: f64, s: f64) -> f64;
    fn d2(&self, t: f64, s: f64) -> f64;
    fn d11(&self, t: f64, s: f64) -> f64;
    fn d12(&self, t: f64, s: f64) -> f64;
    fn d22(&self, t: f64, s: f64) -> f64;
    fn is_in_d(&self, _t: f64, _s: f64) -> bool {
        true
    }
    /// Local Lipschitz constant of `(F_1, F_2)` on the box `[lo, hi]^2`, if known.
    fn lipschitz_bound_hint(&self) -> Option<(f64, [f64; 2])> {
        None
    }
}

/// Shipped potentials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum Builtin {
    /// `F = 0`.
    Zero,
    /// `F = t σ`.
    Product,
    /// `F = -t^2 σ^2`.
    Separation,
    /// `F = -(1 - t^2)^2/4 - (1 - σ^2)^2/4`, so that `F_1 = t - t^3`.
    DoubleWell,
    /// Double well plus `eps t σ`.
    DoubleWellCoupled { eps: f64 },
    /// `F = |t|^3/6 + σ^2/2`: `C^{1,1}` with `F_11 = |t|` everywhere.
    CubicAbs,
    /// `F = (t_+)^2/2 + (σ_+)^2/2`: second derivatives jump on the axes.
    PositivePart,
    /// `F = c (t^2 + σ^2)/2`, a flat plateau of `F_11 = F_22 = c`.
    Plateau { c: f64 },
}

fn well(t: f64) -> f64 {
    let a = 1.0 - t * t;
    -0.25 * a * a
}

impl CoupledPotential for Builtin {
    fn name(&self) -> String {
        match self {
            Builtin::Zero => "zero".into(),
            Builtin::Product => "product".into(),
            Builtin::Separation => "separation".into(),
            Builtin::DoubleWell => "double_well".into(),
            Builtin::DoubleWellCoupled { eps } => format!("double_well_coupled(eps={eps})"),
            Builtin::CubicAbs => "cubic_abs".into(),
            Builtin::PositivePart => "positive_part".into(),
            Builtin::Plateau { c } => format!("plateau(c={c})"),
        }
    }

    fn value(&self, t: f64, s: f64) -> f64 {
        match *self {
            Builtin::Zero => 0.0,
            Builtin::Product => t * s,
            Builtin::Separation => -t * t * s * s,
            Builtin::DoubleWell => well(t) + well(s),
            Builtin::DoubleWellCoupled { eps } => well(t) + well(s) + eps * t * s,
            Builtin::CubicAbs => t.abs().powi(3) / 6.0 + 0.5 * s * s,
            Builtin::PositivePart => 0.5 * (t.max(0.0).powi(2) + s.max(0.0).powi(2)),
            Builtin::Plateau { c } => 0.5 * c * (t * t + s * s),
        }
    }

    fn d1(&self, t: f64, s: f64) -> f64 {
        match *self {
            Builtin::Zero => 0.0,
            Builtin::Product => s,
            Builtin::Separation => -2.0 * t * s * s,
            Builtin::DoubleWell => t - t * t * t,
            Builtin::DoubleWellCoupled { eps } => t - t * t * t + eps * s,
            Builtin::CubicAbs => 0.5 * t * t.abs(),
            Builtin::PositivePart => t.max(0.0),
            Builtin::Plateau { c } => c * t,
        }
    }

    fn d2(&self, t: f64, s: f64) -> f64 {
        match *self {
            Builtin::Zero => 0.0,
            Builtin::Product => t,
            Builtin::Separation => -2.0 * t * t * s,
            Builtin::DoubleWell => s - s * s * s,
            Builtin::DoubleWellCoupled { eps } => s - s * s * s + eps * t,
            Builtin::CubicAbs => s,
            Builtin::PositivePart => s.max(0.0),
            Builtin::Plateau { c } => c * s,
        }
    }

    fn d11(&self, t: f64, s: f64) -> f64 {
        match *self {
            Builtin::Zero | Builtin::Product => 0.0,
            Builtin::Separation => -2.0 * s * s,
            Builtin::DoubleWell | Builtin::DoubleWellCoupled { .. } => 1.0 - 3.0 * t * t,
            Builtin::CubicAbs => t.abs(),
            Builtin::PositivePart => {
                if t > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Builtin::Plateau { c } => c,
        }
    }

    fn d12(&self, t: f64, s: f64) -> f64 {
        match *self {
            Builtin::Product => 1.0,
            Builtin::Separation => -4.0 * t * s,
            Builtin::DoubleWellCoupled { eps } => eps,
            _ => 0.0,
        }
    }

    fn d22(&self, t: f64, s: f64) -> f64 {
        match *self {
            Builtin::Zero | Builtin::Product => 0.0,
            Builtin::Separation => -2.0 * t * t,
            Builtin::DoubleWell | Builtin::DoubleWellCoupled { .. } => 1.0 - 3.0 * s * s,
            Builtin::CubicAbs => 1.0,
            Builtin::PositivePart => {
                if s > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Builtin::Plateau { c } => c,
        }
    }

    fn is_in_d(&self, t: f64, s: f64) -> bool {
        match self {
            Builtin::PositivePart => t != 0.0 && s != 0.0,
            _ => true,
        }
    }
}

/// Polynomial in one variable, coefficients in increasing degree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Poly(pub Vec<f64>);

impl Poly {
    pub fn eval(&self, t: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, c| acc * t + c)
    }
    pub fn derivative(&self) -> Poly {
        Poly(self.0.iter().enumerate().skip(1).map(|(k, c)| k as f64 * c).collect())
    }
    pub fn antiderivative(&self) -> Poly {
        let mut v = vec![0.0];
        v.extend(self.0.iter().enumerate().map(|(k, c)| c / (k + 1) as f64));
        Poly(v)
    }
    pub fn mul(&self, other: &Poly) -> Poly {
        if self.0.is_empty() || other.0.is_empty() {
            return Poly(vec![]);
        }
        let mut v = vec![0.0; self.0.len() + other.0.len() - 1];
        for (i, a) in self.0.iter().enumerate() {
            for (j, b) in other.0.iter().enumerate() {
                v[i + j] += a * b;
            }
        }
        Poly(v)
    }
    pub fn add(&self, other: &Poly) -> Poly {
        let n = self.0.len().max(other.0.len());
        Poly((0..n).map(|k| self.0.get(k).unwrap_or(&0.0) + other.0.get(k).unwrap_or(&0.0)).collect())
    }
    pub fn scale(&self, c: f64) -> Poly {
        Poly(self.0.iter().map(|v| v * c).collect())
    }
}

/// `F(t, σ) = Ψ(t) + N(t) (σ - P(t)) + κ/2 (σ - P(t))^2`.
///
/// On the curve `σ = P(t)` this gives `F_1 = Ψ'(t) - P'(t) N(t)` and
/// `F_2 = N(t)`, which is how manufactured targets `(u*, P(u*))` are encoded
/// with polynomial data and no dependence on position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePotential {
    pub psi: Poly,
    pub normal: Poly,
    pub curve: Poly,
    pub kappa: f64,
}

impl CurvePotential {
    fn parts(&self, t: f64, s: f64) -> (f64, f64, f64) {
        let d = s - self.curve.eval(t);
        (d, self.curve.derivative().eval(t), self.normal.eval(t))
    }
}

impl CoupledPotential for CurvePotential {
    fn name(&self) -> String {
        "manufactured_curve".into()
    }
    fn value(&self, t: f64, s: f64) -> f64 {
        let (d, _, nn) = self.parts(t, s);
        self.psi.eval(t) + nn * d + 0.5 * self.kappa * d * d
    }
    fn d1(&self, t: f64, s: f64) -> f64 {
        let (d, pp, nn) = self.parts(t, s);
        self.psi.derivative().eval(t) + self.normal.derivative().eval(t) * d - nn * pp - self.kappa * d * pp
    }
    fn d2(&self, t: f64, s: f64) -> f64 {
        let (d, _, nn) = self.parts(t, s);
        nn + self.kappa * d
    }
    fn d11(&self, t: f64, s: f64) -> f64 {
        let (d, pp, nn) = self.parts(t, s);
        let ppp = self.curve.derivative().derivative().eval(t);
        let np = self.normal.derivative().eval(t);
        let npp = self.normal.derivative().derivative().eval(t);
        self.psi.derivative().derivative().eval(t) + npp * d - 2.0 * np * pp - nn * ppp
            + self.kappa * (pp * pp - d * ppp)
    }
    fn d12(&self, t: f64, _s: f64) -> f64 {
        let pp = self.curve.derivative().eval(t);
        self.normal.derivative().eval(t) - self.kappa * pp
    }
    fn d22(&self, _t: f64, _s: f64) -> f64 {
        self.kappa
    }
}

pub type PotentialRef = Arc<dyn CoupledPotential>;

/// `G(t, σ) = F(σ, t)`: the potential seen after exchanging the two components.
#[derive(Debug, Clone)]
pub struct Swapped(pub PotentialRef);

impl CoupledPotential for Swapped {
    fn name(&self) -> String {
        format!("swapped({})", self.0.name())
    }
    fn value(&self, t: f64, s: f64) -> f64 {
        self.0.value(s, t)
    }
    fn d1(&self, t: f64, s: f64) -> f64 {
        self.0.d2(s, t)
    }
    fn d2(&self, t: f64, s: f64) -> f64 {
        self.0.d1(s, t)
    }
    fn d11(&self, t: f64, s: f64) -> f64 {
        self.0.d22(s, t)
    }
    fn d12(&self, t: f64, s: f64) -> f64 {
        self.0.d12(s, t)
    }
    fn d22(&self, t: f64, s: f64) -> f64 {
        self.0.d11(s, t)
    }
    fn is_in_d(&self, t: f64, s: f64) -> bool {
        self.0.is_in_d(s, t)
    }
}

/// Trace field with a NaN sentinel at masked points.
#[derive(Debug, Clone)]
pub struct MaskedTrace {
    pub values: Vec<f64>,
}

impl MaskedTrace {
    pub fn get(&self, p: usize) -> Option<f64> {
        let v = self.values[p];
        if v.is_nan() {
            None
        } else {
            Some(v)
        }
    }
}

/// Marks trace points whose value pair lies outside the differentiable set.
#[derive(Debug, Clone, PartialEq)]
pub struct NondiffMask {
    pub masked: Vec<bool>,
}

impl NondiffMask {
    pub fn count(&self) -> usize {
        self.masked.iter().filter(|m| **m).count()
    }
    pub fn in_d(&self, p: usize) -> bool {
        !self.masked[p]
    }
}

/// `F_1, F_2, F_11, F_22, F_12` composed with a pair of traces.
#[derive(Debug, Clone)]
pub struct DerivativeFields {
    pub f1: TraceField,
    pub f2: TraceField,
    pub f11: MaskedTrace,
    pub f22: MaskedTrace,
    pub f12: MaskedTrace,
    pub mask: NondiffMask,
}

pub fn eval_derivatives(f: &dyn CoupledPotential, u: &TraceField, v: &TraceField) -> Result<DerivativeFields> {
    same_grid(u.grid_arc(), v.grid_arc())?;
    let g = u.grid_arc().clone();
    let np = g.plane_len();
    let (mut f1, mut f2) = (Vec::with_capacity(np), Vec::with_capacity(np));
    let (mut f11, mut f22, mut f12) = (Vec::with_capacity(np), Vec::with_capacity(np), Vec::with_capacity(np));
    let mut masked = Vec::with_capacity(np);
    for p in 0..np {
        let (t, s) = (u.values()[p], v.values()[p]);
        let a = f.d1(t, s);
        let b = f.d2(t, s);
        let in_d = f.is_in_d(t, s);
        let (c11, c22, c12) = if in_d {
            (f.d11(t, s), f.d22(t, s), f.d12(t, s))
        } else {
            (f64::NAN, f64::NAN, f64::NAN)
        };
        let finite = a.is_finite() && b.is_finite() && (!in_d || (c11.is_finite() && c22.is_finite() && c12.is_finite()));
        if !finite || !f.value(t, s).is_finite() {
            let x = g.coords(p);
            return Err(Error::Data(format!(
                "potential {} is not finite at x = ({}, {}) with (u, v) = ({t}, {s})",
                f.name(),
                x[0],
                x[1]
            )));
        }
        f1.push(a);
        f2.push(b);
        f11.push(c11);
        f22.push(c22);
        f12.push(c12);
        masked.push(!in_d);
    }
    Ok(DerivativeFields {
        f1: TraceField::new(g.clone(), f1)?,
        f2: TraceField::new(g, f2)?,
        f11: MaskedTrace { values: f11 },
        f22: MaskedTrace { values: f22 },
        f12: MaskedTrace { values: f12 },
        mask: NondiffMask { masked },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignMode {
    Nonneg,
    Nonpos,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SignCheck {
    pub holds: bool,
    pub violations: usize,
    pub checked: usize,
}

/// Exact sign test of `F_12` at every unmasked point.
pub fn sign_condition(f12: &MaskedTrace, mask: &NondiffMask, mode: SignMode) -> SignCheck {
    let mut violations = 0;
    let mut checked = 0;
    for (p, &v) in f12.values.iter().enumerate() {
        if mask.masked[p] || v.is_nan() {
            continue;
        }
        checked += 1;
        let bad = match mode {
            SignMode::Nonneg => v < 0.0,
            SignMode::Nonpos => v > 0.0,
        };
        if bad {
            violations += 1;
        }
    }
    SignCheck { holds: violations == 0, violations, checked }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::HalfSpaceGrid;

    fn traces(u: impl Fn(f64) -> f64, v: impl Fn(f64) -> f64) -> (TraceField, TraceField) {
        let g = Arc::new(HalfSpaceGrid::new(1, std::f64::consts::PI, 64, 1.0, 4, 1.0, true).unwrap());
        (
            TraceField::from_fn(g.clone(), |x| u(x[0])).unwrap(),
            TraceField::from_fn(g, |x| v(x[0])).unwrap(),
        )
    }

    #[test]
    fn product_derivatives() {
        let (u, v) = traces(|x| x.sin(), |x| x.cos());
        let d = eval_derivatives(&Builtin::Product, &u, &v).unwrap();
        assert_eq!(d.f1.values(), v.values());
        assert_eq!(d.f2.values(), u.values());
        assert!(d.f12.values.iter().all(|&c| c == 1.0));
        assert!(d.f11.values.iter().chain(&d.f22.values).all(|&c| c == 0.0));
        assert_eq!(d.mask.count(), 0);
    }

    #[test]
    fn separation_mixed_derivative() {
        let (u, v) = traces(|x| 1.5 + x.sin(), |x| 2.0 + x.cos());
        let d = eval_derivatives(&Builtin::Separation, &u, &v).unwrap();
        for p in 0..u.values().len() {
            let want = -4.0 * u.values()[p] * v.values()[p];
            assert!((d.f12.values[p] - want).abs() < 1e-14);
        }
        assert!(sign_condition(&d.f12, &d.mask, SignMode::Nonpos).holds);
    }

    #[test]
    fn sign_test_counts_alternation() {
        let (u, v) = traces(|x| x.sin(), |_| 0.0);
        let f12 = MaskedTrace { values: u.values().to_vec() };
        let mask = NondiffMask { masked: vec![false; f12.values.len()] };
        let a = sign_condition(&f12, &mask, SignMode::Nonneg);
        let b = sign_condition(&f12, &mask, SignMode::Nonpos);
        assert!(!a.holds && !b.holds);
        assert!((a.violations as i64 - 31).abs() <= 1);
        let zero = MaskedTrace { values: vec![0.0; v.values().len()] };
        assert!(sign_condition(&zero, &mask, SignMode::Nonneg).holds);
        assert!(sign_condition(&zero, &mask, SignMode::Nonpos).holds);
    }

    #[test]
    fn positive_part_masks_axes() {
        let (u, v) = traces(|x| x, |_| 1.0);
        let d = eval_derivatives(&Builtin::PositivePart, &u, &v).unwrap();
        assert_eq!(d.mask.count(), 1);
        let p = d.mask.masked.iter().position(|m| *m).unwrap();
        assert!(d.f11.get(p).is_none());
    }

    #[test]
    fn non_finite_potential_names_point() {
        let (u, v) = traces(|x| if x > 1.0 { f64::MAX } else { 0.0 }, |_| f64::MAX);
        let err = eval_derivatives(&Builtin::Separation, &u, &v).unwrap_err();
        assert!(err.to_string().contains("x = ("));
    }
}
