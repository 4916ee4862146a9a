//! Odd cubic replacement for the logistic sigmoid.
//!
//! `sigmoid(z) ~ c0 + c1*z + c3*z^3`, with coefficients fitted by ordinary
//! least squares over the basis `{1, z, z^3}` on 1001 Chebyshev nodes of
//! `[-5, 5]`. The fit is not clamped outside that interval.

use serde::{Deserialize, Serialize};

use crate::arith::Arithmetic;
use crate::fixed::{FixedPoint, FixedPointError, Scalar, ScaleConfig};

/// Half-width of the fitting interval.
pub const FIT_RANGE: f64 = 5.0;
/// Number of fitting nodes.
pub const FIT_POINTS: usize = 1001;

/// Frozen least-squares coefficients `[c0, c1, c3]`.
pub const SIGMOID_COEFFS: [f64; 3] = [0.5, 0.190_433_982_358_332_4, -0.003_887_880_355_979_196];

/// Coefficients of the cubic, plus `3*c3` for the derivative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmoidPoly<S> {
    pub c0: S,
    pub c1: S,
    pub c3: S,
    pub c3_times_3: S,
}

impl<S> SigmoidPoly<S> {
    pub fn map<T>(&self, mut f: impl FnMut(&S) -> T) -> SigmoidPoly<T> {
        SigmoidPoly {
            c0: f(&self.c0),
            c1: f(&self.c1),
            c3: f(&self.c3),
            c3_times_3: f(&self.c3_times_3),
        }
    }
}

impl SigmoidPoly<FixedPoint> {
    /// The frozen coefficients encoded at the given scale.
    pub fn fixed(cfg: &ScaleConfig) -> Result<Self, FixedPointError> {
        let c3 = FixedPoint::from_f64(SIGMOID_COEFFS[2], cfg)?;
        Ok(SigmoidPoly {
            c0: FixedPoint::from_f64(SIGMOID_COEFFS[0], cfg)?,
            c1: FixedPoint::from_f64(SIGMOID_COEFFS[1], cfg)?,
            c3,
            c3_times_3: c3 + c3 + c3,
        })
    }
}

impl<S: Scalar> SigmoidPoly<S> {
    pub fn from_coeffs(coeffs: [f64; 3], ctx: &S::Context) -> Result<Self, FixedPointError> {
        let c3 = S::from_f64(coeffs[2], ctx)?;
        Ok(SigmoidPoly {
            c0: S::from_f64(coeffs[0], ctx)?,
            c1: S::from_f64(coeffs[1], ctx)?,
            c3: c3.clone(),
            c3_times_3: c3.clone() + c3.clone() + c3,
        })
    }
}

impl<V: Clone> SigmoidPoly<V> {
    /// `c0 + c1*z + c3*z^3`, evaluated as `z2 = z*z`, `z3 = z2*z`.
    pub fn eval<A: Arithmetic<V>>(&self, ar: &mut A, z: &V) -> Result<V, A::Error> {
        Ok(self.eval_with_derivative(ar, z, false)?.0)
    }

    /// Value and (optionally) derivative `c1 + 3*c3*z^2`, sharing `z^2`.
    pub fn eval_with_derivative<A: Arithmetic<V>>(
        &self,
        ar: &mut A,
        z: &V,
        derivative: bool,
    ) -> Result<(V, Option<V>), A::Error> {
        let z2 = ar.mul(z, z)?;
        let z3 = ar.mul(&z2, z)?;
        let linear = ar.mul(&self.c1, z)?;
        let cubic = ar.mul(&self.c3, &z3)?;
        let partial = ar.add(&self.c0, &linear);
        let value = ar.add(&partial, &cubic);
        let slope = if derivative {
            let t = ar.mul(&self.c3_times_3, &z2)?;
            Some(ar.add(&self.c1, &t))
        } else {
            None
        };
        Ok((value, slope))
    }
}

/// Chebyshev nodes of the first kind on `[-range, range]`.
pub fn chebyshev_nodes(n: usize, range: f64) -> Vec<f64> {
    (0..n)
        .map(|k| range * ((2 * k + 1) as f64 * std::f64::consts::PI / (2 * n) as f64).cos())
        .collect()
}

/// Least-squares fit of `c0 + c1*z + c3*z^3` to the logistic sigmoid at `nodes`.
pub fn fit_sigmoid(nodes: &[f64]) -> [f64; 3] {
    let basis = |z: f64| [1.0, z, z * z * z];
    let mut gram = [[0.0f64; 3]; 3];
    let mut rhs = [0.0f64; 3];
    for &z in nodes {
        let phi = basis(z);
        let target = 1.0 / (1.0 + (-z).exp());
        for i in 0..3 {
            rhs[i] += phi[i] * target;
            for j in 0..3 {
                gram[i][j] += phi[i] * phi[j];
            }
        }
    }
    solve3(gram, rhs)
}

// Gaussian elimination with partial pivoting on a 3x3 system.
fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> [f64; 3] {
    for col in 0..3 {
        let pivot = (col..3)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..3 {
            let f = a[row][col] / a[col][col];
            for k in col..3 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let s: f64 = (row + 1..3).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// Fixed-point sigmoid with the frozen coefficients.
pub fn sigmoid_approx(z: FixedPoint, cfg: &ScaleConfig) -> Result<FixedPoint, FixedPointError> {
    let poly = SigmoidPoly::fixed(cfg)?;
    poly.eval(&mut crate::arith::Native::<FixedPoint>::new(cfg), &z)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ScaleConfig {
        ScaleConfig::default()
    }

    #[test]
    fn refit_matches_frozen_coefficients() {
        let c = fit_sigmoid(&chebyshev_nodes(FIT_POINTS, FIT_RANGE));
        for (got, want) in c.iter().zip(SIGMOID_COEFFS) {
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        }
    }

    #[test]
    fn encoded_coefficients() {
        let p = SigmoidPoly::fixed(&cfg()).unwrap();
        assert_eq!(p.c0.raw_i128(), Some(50_000));
        assert_eq!(p.c1.raw_i128(), Some(19_043));
        assert_eq!(p.c3.raw_i128(), Some(-389));
        assert_eq!(p.c3_times_3.raw_i128(), Some(-1_167));
    }

    #[test]
    fn value_at_zero_is_c0() {
        let c = cfg();
        let s = sigmoid_approx(FixedPoint::ZERO, &c).unwrap();
        assert_eq!(s, SigmoidPoly::fixed(&c).unwrap().c0);
        assert!((s.to_f64(&c) - 0.5).abs() < 1e-3);
    }

    #[test]
    fn value_at_two() {
        let c = cfg();
        let z = FixedPoint::from_decimal_str("2.0", &c).unwrap();
        let s = sigmoid_approx(z, &c).unwrap().to_f64(&c);
        assert!((s - 0.880_797).abs() < 0.05, "{s}");
    }

    #[test]
    fn antisymmetric_around_c0() {
        let c = cfg();
        let two_c0 = SigmoidPoly::fixed(&c).unwrap().c0 + SigmoidPoly::fixed(&c).unwrap().c0;
        for raw in [1i128, 7, 12_345, 99_999, 250_000, 499_999, 700_001] {
            let z = FixedPoint::from_raw(raw);
            let sum = sigmoid_approx(z, &c).unwrap() + sigmoid_approx(-z, &c).unwrap();
            assert_eq!(sum, two_c0, "raw {raw}");
        }
    }

    #[test]
    fn monotone_on_inner_grid() {
        let c = cfg();
        let vals: Vec<FixedPoint> = (0..601)
            .map(|i| sigmoid_approx(FixedPoint::from_raw(-300_000 + i * 1_000), &c).unwrap())
            .collect();
        for w in vals.windows(2) {
            assert!(w[1].raw_i128() >= w[0].raw_i128());
        }
    }

    #[test]
    fn float_instantiation_matches_coefficients() {
        let p = SigmoidPoly::<f64>::from_coeffs(SIGMOID_COEFFS, &()).unwrap();
        let mut ar = crate::arith::Native::<f64>::new(&());
        let (v, d) = p.eval_with_derivative(&mut ar, &1.0, true).unwrap();
        assert!((v - (SIGMOID_COEFFS[0] + SIGMOID_COEFFS[1] + SIGMOID_COEFFS[2])).abs() < 1e-15);
        assert!((d.unwrap() - (SIGMOID_COEFFS[1] + 3.0 * SIGMOID_COEFFS[2])).abs() < 1e-15);
    }
}
