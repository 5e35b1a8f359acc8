//! Bracketed scalar root finding.

use crate::scalar::Real;
use thiserror::Error;

/// Failure modes of the bracketed solvers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum RootError {
    #[error("root not bracketed: f(a) = {fa:e}, f(b) = {fb:e}")]
    NotBracketed { fa: f64, fb: f64 },
    #[error("no sign change found while expanding bracket up to {limit:e}")]
    BracketExpansion { limit: f64 },
    #[error("did not converge in {iterations} iterations")]
    MaxIterations { iterations: usize },
}

/// Stopping rule: |b - a| <= xtol + rtol * |x|.
#[derive(Debug, Clone, Copy)]
pub struct RootOptions<F> {
    pub xtol: F,
    pub rtol: F,
    pub max_iter: usize,
}

impl<F: Real> Default for RootOptions<F> {
    fn default() -> Self {
        Self {
            xtol: F::zero(),
            rtol: F::lit(4.0) * F::epsilon(),
            max_iter: 200,
        }
    }
}

impl<F: Real> RootOptions<F> {
    pub fn with_rtol(rtol: F) -> Self {
        Self {
            rtol,
            ..Self::default()
        }
    }
}

/// Brent's method on `[a, b]` for a fallible function.
///
/// The closure error type must absorb [`RootError`] so solver failures and
/// evaluation failures travel through one channel.
pub fn brent<F, E, Fun>(mut f: Fun, a: F, b: F, opts: RootOptions<F>) -> Result<F, E>
where
    F: Real,
    E: From<RootError>,
    Fun: FnMut(F) -> Result<F, E>,
{
    let fa = f(a)?;
    let fb = f(b)?;
    brent_with_values(&mut f, a, fa, b, fb, opts)
}

/// Brent's method when `f(a)` and `f(b)` are already known.
pub fn brent_with_values<F, E, Fun>(
    f: &mut Fun,
    a: F,
    fa: F,
    b: F,
    fb: F,
    opts: RootOptions<F>,
) -> Result<F, E>
where
    F: Real,
    E: From<RootError>,
    Fun: FnMut(F) -> Result<F, E>,
{
    let zero = F::zero();
    let two = F::lit(2.0);
    let (mut a, mut b, mut fa, mut fb) = (a, b, fa, fb);
    if fa == zero {
        return Ok(a);
    }
    if fb == zero {
        return Ok(b);
    }
    if (fa > zero) == (fb > zero) || fa.is_nan() || fb.is_nan() {
        return Err(RootError::NotBracketed {
            fa: fa.to_f64().unwrap_or(f64::NAN),
            fb: fb.to_f64().unwrap_or(f64::NAN),
        }
        .into());
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..opts.max_iter {
        if (fb > zero) == (fc > zero) {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = two * F::epsilon() * b.abs() + (opts.xtol + opts.rtol * b.abs()) / two;
        let m = (c - b) / two;
        if m.abs() <= tol || fb == zero {
            return Ok(b);
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = two * m * s;
                q = F::one() - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (two * m * qa * (qa - r) - (b - a) * (r - F::one()));
                q = (qa - F::one()) * (r - F::one()) * (s - F::one());
            }
            if p > zero {
                q = -q;
            } else {
                p = -p;
            }
            if two * p < (F::lit(3.0) * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b = if d.abs() > tol {
            b + d
        } else if m > zero {
            b + tol
        } else {
            b - tol
        };
        fb = f(b)?;
    }
    Err(RootError::MaxIterations {
        iterations: opts.max_iter,
    }
    .into())
}

/// Plain bisection; used where robustness matters more than speed.
pub fn bisect<F, E, Fun>(mut f: Fun, a: F, b: F, opts: RootOptions<F>) -> Result<F, E>
where
    F: Real,
    E: From<RootError>,
    Fun: FnMut(F) -> Result<F, E>,
{
    let zero = F::zero();
    let two = F::lit(2.0);
    let (mut lo, mut hi) = (a, b);
    let mut flo = f(lo)?;
    let fhi = f(hi)?;
    if flo == zero {
        return Ok(lo);
    }
    if fhi == zero {
        return Ok(hi);
    }
    if (flo > zero) == (fhi > zero) {
        return Err(RootError::NotBracketed {
            fa: flo.to_f64().unwrap_or(f64::NAN),
            fb: fhi.to_f64().unwrap_or(f64::NAN),
        }
        .into());
    }
    for _ in 0..opts.max_iter {
        let mid = lo + (hi - lo) / two;
        if (hi - lo).abs() <= opts.xtol + opts.rtol * mid.abs() || mid == lo || mid == hi {
            return Ok(mid);
        }
        let fm = f(mid)?;
        if fm == zero {
            return Ok(mid);
        }
        if (fm > zero) == (flo > zero) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Err(RootError::MaxIterations {
        iterations: opts.max_iter,
    }
    .into())
}

/// Root of a nondecreasing function `f` with `f(lo) < 0`, doubling the upper
/// end from `hi0` until the sign flips or `limit` is passed.
pub fn increasing_root<F, E, Fun>(
    mut f: Fun,
    lo: F,
    hi0: F,
    limit: F,
    opts: RootOptions<F>,
) -> Result<F, E>
where
    F: Real,
    E: From<RootError>,
    Fun: FnMut(F) -> Result<F, E>,
{
    let flo = f(lo)?;
    if flo >= F::zero() {
        return Ok(lo);
    }
    let (mut a, mut fa) = (lo, flo);
    let mut b = hi0.max(lo + F::epsilon());
    loop {
        let fb = f(b)?;
        if fb >= F::zero() {
            return brent_with_values(&mut f, a, fa, b, fb, opts);
        }
        if b > limit {
            return Err(RootError::BracketExpansion {
                limit: limit.to_f64().unwrap_or(f64::INFINITY),
            }
            .into());
        }
        a = b;
        fa = fb;
        b = b * F::lit(2.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brent_finds_cubic_root() {
        let r: Result<f64, RootError> = brent(
            |x: f64| Ok(x * x * x - 2.0),
            0.0,
            3.0,
            RootOptions::default(),
        );
        assert!((r.unwrap() - 2f64.cbrt()).abs() < 1e-14);
    }

    #[test]
    fn brent_f32() {
        let r: Result<f32, RootError> =
            brent(|x: f32| Ok(x.cos() - x), 0.0, 1.0, RootOptions::default());
        assert!((r.unwrap() - 0.739_085_1).abs() < 1e-6);
    }

    #[test]
    fn unbracketed_is_reported() {
        let r: Result<f64, RootError> =
            brent(|x: f64| Ok(x * x + 1.0), -1.0, 1.0, RootOptions::default());
        assert!(matches!(r, Err(RootError::NotBracketed { .. })));
    }

    #[test]
    fn bisect_matches_brent() {
        let f = |x: f64| -> Result<f64, RootError> { Ok(x.exp() - 5.0) };
        let a = bisect(f, 0.0, 4.0, RootOptions::default()).unwrap();
        let b = brent(f, 0.0, 4.0, RootOptions::default()).unwrap();
        assert!((a - b).abs() < 1e-13);
    }

    #[test]
    fn expanding_bracket() {
        let r: Result<f64, RootError> = increasing_root(
            |x: f64| Ok(x.ln() - 10.0),
            1.0,
            2.0,
            1e12,
            RootOptions::default(),
        );
        assert!((r.unwrap() - 10f64.exp()).abs() < 1e-8);
        let r: Result<f64, RootError> =
            increasing_root(|_x: f64| Ok(-1.0), 1.0, 2.0, 1e3, RootOptions::default());
        assert!(matches!(r, Err(RootError::BracketExpansion { .. })));
    }
}
