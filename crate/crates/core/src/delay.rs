//! Statistical delay constraints for two queues in tandem.
//!
//! Delay exponents here are in 1/seconds and `d_max` is in seconds.

use crate::roots::{self, RootError, RootOptions};
use crate::scalar::Real;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DelayError {
    #[error("argument {x:e} outside the domain [-1/e, 0) of W_-1")]
    LambertDomain { x: f64 },
    #[error("violation probability must lie in (0, 1], got {0}")]
    Epsilon(f64),
    #[error("delay bound must be positive and finite, got {0}")]
    DelayBound(f64),
    #[error("J1 = {j1:e} is below J0 = {j0:e}; no J2 meets the constraint")]
    BelowJ0 { j1: f64, j0: f64 },
    #[error(transparent)]
    Root(#[from] RootError),
}

fn to64<F: Real>(x: F) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// Lower real branch of the Lambert W function.
///
/// Returns the unique `y <= -1` with `y * exp(y) = x` for `x` in `[-1/e, 0)`.
pub fn lambert_w_minus1<F: Real>(x: F) -> Result<F, DelayError> {
    let one = F::one();
    let e = F::E();
    let branch = -one / e;
    let slack = F::lit(4.0) * F::epsilon() * branch.abs();
    if !(x < F::zero()) || x < branch - slack || x.is_nan() {
        return Err(DelayError::LambertDomain { x: to64(x) });
    }
    if x <= branch {
        return Ok(-one);
    }
    let q = F::lit(2.0) * (one + e * x);
    let mut w = if q < F::lit(0.5) {
        let p = q.max(F::zero()).sqrt();
        -one - p - p * p / F::lit(3.0) - F::lit(11.0 / 72.0) * p * p * p
    } else {
        let l1 = (-x).ln();
        let l2 = (-l1).ln();
        l1 - l2 + l2 / l1
    };
    for _ in 0..64 {
        let ew = w.exp();
        let f = w * ew - x;
        let wp1 = w + one;
        if wp1 == F::zero() {
            break;
        }
        let denom = ew * wp1 - (w + F::lit(2.0)) * f / (F::lit(2.0) * wp1);
        let step = f / denom;
        let next = w - step;
        let next = if next > -one {
            (w - one) / F::lit(2.0)
        } else {
            next
        };
        if (next - w).abs() <= F::lit(2.0) * F::epsilon() * w.abs() {
            w = next;
            break;
        }
        w = next;
    }
    Ok(w)
}

/// Two-queue end-to-end delay-violation probability for exponents `j1`, `j2`.
///
/// Symmetric in its first two arguments; an infinite exponent reduces it to
/// the single-queue tail `exp(-J * d_max)`.
pub fn end_to_end_violation<F: Real>(j1: F, j2: F, d_max: F) -> F {
    let (lo, hi) = if j1 <= j2 { (j1, j2) } else { (j2, j1) };
    let b = lo * d_max;
    if hi.is_infinite() {
        return (-b).exp();
    }
    let a = hi * d_max;
    if hi - lo <= F::lit(1e-9) * hi {
        let j = (lo + hi) / F::lit(2.0) * d_max;
        return (F::one() + j) * (-j).exp();
    }
    let delta = a - b;
    (-b).exp() * (F::one() - b * (-delta).exp_m1() / delta)
}

/// A statistical end-to-end delay requirement `Pr{D > d_max} <= epsilon`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayConstraint<F = f64> {
    pub epsilon: F,
    pub d_max: F,
    /// Single-queue exponent `-ln(epsilon) / d_max`.
    pub j0: F,
    /// Common exponent at which both queues share the budget equally.
    pub j_th: F,
}

impl<F: Real> DelayConstraint<F> {
    pub fn new(epsilon: F, d_max: F) -> Result<Self, DelayError> {
        if !(epsilon > F::zero() && epsilon <= F::one()) {
            return Err(DelayError::Epsilon(to64(epsilon)));
        }
        if !(d_max > F::zero() && d_max.is_finite()) {
            return Err(DelayError::DelayBound(to64(d_max)));
        }
        Ok(Self {
            epsilon,
            d_max,
            j0: -epsilon.ln() / d_max,
            j_th: j_threshold(epsilon, d_max)?,
        })
    }

    pub fn violation(&self, j1: F, j2: F) -> F {
        end_to_end_violation(j1, j2, self.d_max)
    }

    /// See [`phi`].
    pub fn phi(&self, j1: F) -> Result<F, DelayError> {
        phi(j1, self)
    }
}

/// Symmetric exponent `-(1 + W_-1(-epsilon/e)) / d_max`.
pub fn j_threshold<F: Real>(epsilon: F, d_max: F) -> Result<F, DelayError> {
    if !(epsilon > F::zero() && epsilon <= F::one()) {
        return Err(DelayError::Epsilon(to64(epsilon)));
    }
    if !(d_max > F::zero() && d_max.is_finite()) {
        return Err(DelayError::DelayBound(to64(d_max)));
    }
    let w = lambert_w_minus1(-epsilon / F::E())?;
    Ok((-(F::one() + w)).max(F::zero()) / d_max)
}

/// The relay exponent `J2` that puts `(j1, J2)` exactly on the constraint
/// boundary. Decreasing, convex and self-inverse on `[J0, inf)`.
pub fn phi<F: Real>(j1: F, c: &DelayConstraint<F>) -> Result<F, DelayError> {
    if j1.is_nan() || j1 < c.j0 {
        return Err(DelayError::BelowJ0 {
            j1: to64(j1),
            j0: to64(c.j0),
        });
    }
    if j1 == c.j_th {
        return Ok(c.j_th);
    }
    if j1.is_infinite() {
        return Ok(c.j0);
    }
    if j1 == c.j0 {
        return Ok(F::infinity());
    }
    if c.epsilon == F::one() {
        return Ok(F::zero());
    }
    // Work with y = J * d_max so the equation is dimensionless.
    let a = j1 * c.d_max;
    let y0 = c.j0 * c.d_max;
    let eps = c.epsilon;
    let g = |y: F| -> Result<F, DelayError> { Ok(eps - end_to_end_violation(a, y, F::one())) };
    let start = if j1 < c.j_th {
        c.j_th * c.d_max * F::lit(2.0)
    } else {
        c.j_th * c.d_max
    };
    let y = roots::increasing_root(
        g,
        y0,
        start.max(y0 + F::one()),
        F::max_value() / F::lit(4.0),
        RootOptions::default(),
    )?;
    Ok(y / c.d_max)
}
