//! Effective capacity of the buffered relay system for a given relay policy.
//!
//! Rates are in bits/block and exponents `J` are per block; the delay
//! constraint is converted once, on entry.

use crate::delay::{DelayConstraint, DelayError};
use crate::fading::RelayPolicy;
use crate::mgf::{self, Evaluator, ExponentPoint, MgfError, RateBounds};
use crate::roots::{self, RootError, RootOptions};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CapacityError {
    #[error(transparent)]
    Mgf(#[from] MgfError),
    #[error(transparent)]
    Delay(#[from] DelayError),
    #[error(transparent)]
    Root(#[from] RootError),
    #[error("target exponent {target:e} exceeds the supremum {sup:e} of the exponent function")]
    Saturated { target: f64, sup: f64 },
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CapacityError {
    /// Short machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            CapacityError::Mgf(MgfError::NoConvergence { .. }) => "E_QUAD",
            CapacityError::Mgf(MgfError::Divergent) => "E_DIVERGENT",
            CapacityError::Mgf(_) => "E_ENGINE",
            CapacityError::Delay(_) => "E_DOMAIN",
            CapacityError::Root(_) => "E_ROOT",
            CapacityError::Saturated { .. } => "E_SATURATED",
            CapacityError::Numerical(_) => "E_NUMERICAL",
        }
    }
}

/// A relay policy, possibly depending on the source exponent.
pub trait PolicyFamily {
    /// Policy in force when the source queue exponent is `theta1` (1/bit).
    fn policy_at(&self, theta1: f64) -> Result<RelayPolicy, CapacityError>;

    fn is_fixed(&self) -> bool {
        true
    }
}

impl PolicyFamily for RelayPolicy {
    fn policy_at(&self, _theta1: f64) -> Result<RelayPolicy, CapacityError> {
        Ok(self.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CaseLabel {
    I,
    II,
    IIDegenerate,
    III,
    IIIDegenerate,
    Unstable,
}

impl CaseLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            CaseLabel::I => "I",
            CaseLabel::II => "II",
            CaseLabel::IIDegenerate => "II-degenerate",
            CaseLabel::III => "III",
            CaseLabel::IIIDegenerate => "III-degenerate",
            CaseLabel::Unstable => "unstable",
        }
    }
}

impl fmt::Display for CaseLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One evaluated point of the constraint boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundarySample {
    pub theta1: f64,
    pub theta2: f64,
    pub j1: f64,
    pub j2: f64,
    pub lambda_p1: f64,
    pub prob_z: f64,
}

impl BoundarySample {
    pub fn point(&self) -> ExponentPoint {
        ExponentPoint {
            theta1: self.theta1,
            theta2: self.theta2,
            j1: self.j1,
            j2: self.j2,
            lambda_p1_at_theta2: self.lambda_p1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    pub theta1_th: f64,
    pub theta2_th: f64,
    pub lambda_p1_th: f64,
    /// `min{J1/theta1, J2/Lambda_p1(theta2)}` at the returned point.
    pub upper_bound: f64,
    /// Source exponents of every root of the case equation that was found.
    pub roots: Vec<f64>,
    pub trace: Vec<BoundarySample>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapacityResult {
    pub case: CaseLabel,
    /// Effective capacity in bits/block.
    pub rate: f64,
    pub point: ExponentPoint,
    pub prob_z: f64,
    pub diagnostics: Diagnostics,
}

impl CapacityResult {
    pub fn rate_bits_per_s(&self, t_block: f64) -> f64 {
        self.rate / t_block
    }
}

/// Mean-rate stability of the relay queue: `E{C_sr ; Z} < E{C_r}`.
pub fn check_stability(policy: &RelayPolicy, ev: &Evaluator) -> Result<bool, CapacityError> {
    let m = mgf::mean_rates(policy, ev)?;
    Ok(m.csr_z < m.cr)
}

/// `min{J1/theta1, J2/Lambda_p1(theta2)}`; the relay term is infinite when
/// nothing is routed to the relay.
pub fn upper_bound_rate(point: &ExponentPoint) -> f64 {
    point.source_rate().min(point.relay_rate())
}

/// Throughput as the delay constraint vanishes: `min{E C_s, E C_r / Pr{Z}}`.
pub fn limit_capacity_eps1(policy: &RelayPolicy, ev: &Evaluator) -> Result<f64, CapacityError> {
    let m = mgf::mean_rates(policy, ev)?;
    let pz = mgf::prob_z(policy, ev)?;
    if pz <= 0.0 {
        return Ok(m.cs);
    }
    Ok(m.cs.min(m.cr / pz))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    J1,
    J2,
}

/// Root of an increasing `f` at `target`, starting from `guess`.
fn invert_increasing(
    mut f: impl FnMut(f64) -> Result<f64, CapacityError>,
    target: f64,
    guess: f64,
    sup: f64,
) -> Result<f64, CapacityError> {
    if target <= 0.0 {
        return Ok(0.0);
    }
    if target >= sup {
        return Err(CapacityError::Saturated { target, sup });
    }
    let mut g = |t: f64| -> Result<f64, CapacityError> { Ok(f(t)? - target) };
    let guess = if guess > 0.0 && guess.is_finite() {
        guess
    } else {
        1e-6
    };
    let mut a = guess;
    let mut fa = g(a)?;
    let (lo, flo, hi, fhi);
    if fa < 0.0 {
        let mut b = a * 1.5;
        let mut fb = g(b)?;
        let mut n = 0;
        while fb < 0.0 {
            a = b;
            fa = fb;
            b *= 2.0;
            fb = g(b)?;
            n += 1;
            if n > 2000 || !b.is_finite() {
                return Err(CapacityError::Saturated { target, sup });
            }
        }
        (lo, flo, hi, fhi) = (a, fa, b, fb);
    } else {
        let mut b = a / 1.5;
        let mut fb = g(b)?;
        let mut n = 0;
        while fb >= 0.0 {
            if fb == 0.0 {
                return Ok(b);
            }
            a = b;
            fa = fb;
            b /= 2.0;
            fb = g(b)?;
            n += 1;
            if n > 2000 {
                return Err(CapacityError::Numerical(
                    "exponent inversion underflow".into(),
                ));
            }
        }
        (lo, flo, hi, fhi) = (b, fb, a, fa);
    }
    if !fhi.is_finite() {
        return roots::bisect(g, lo, hi, RootOptions::with_rtol(1e-13));
    }
    roots::brent_with_values(&mut g, lo, flo, hi, fhi, RootOptions::with_rtol(1e-13))
}

/// Exponent `theta` (1/bit) with `J(theta) = j_target` (per block) for a fixed policy.
pub fn invert_exponent(
    j_target: f64,
    which: Which,
    policy: &RelayPolicy,
    ev: &Evaluator,
) -> Result<f64, CapacityError> {
    let bounds = mgf::rate_bounds(policy, ev);
    let m = mgf::mean_rates(policy, ev)?;
    let (sup, mean) = match which {
        Which::J1 => (bounds.sup_j1(), m.cs),
        Which::J2 => (bounds.sup_j2(), m.cr),
    };
    let f = |t: f64| -> Result<f64, CapacityError> {
        Ok(match which {
            Which::J1 => mgf::j1(t, policy, ev)?,
            Which::J2 => mgf::j2(t, policy, ev)?,
        })
    };
    invert_increasing(f, j_target, j_target / mean, sup)
}

struct Walker<'a, P: PolicyFamily + ?Sized> {
    family: &'a P,
    ev: &'a Evaluator,
    cb: DelayConstraint,
    bounds_th: RateBounds,
    trace: Vec<BoundarySample>,
    last_theta2: Option<(f64, f64)>,
}

impl<'a, P: PolicyFamily + ?Sized> Walker<'a, P> {
    /// `J1(theta, g(theta))`, coupling the policy to the exponent.
    fn j1_coupled(&self, theta1: f64) -> Result<f64, CapacityError> {
        let pol = self.family.policy_at(theta1)?;
        Ok(mgf::j1(theta1, &pol, self.ev)?)
    }

    fn invert_source(&self, j: f64, guess: f64) -> Result<f64, CapacityError> {
        let sup = if self.family.is_fixed() {
            self.bounds_th.sup_j1()
        } else {
            f64::INFINITY
        };
        invert_increasing(|t| self.j1_coupled(t), j, guess, sup)
    }

    fn invert_relay(
        &self,
        j: f64,
        pol: &RelayPolicy,
        bounds: &RateBounds,
        guess: f64,
    ) -> Result<f64, CapacityError> {
        invert_increasing(|t| Ok(mgf::j2(t, pol, self.ev)?), j, guess, bounds.sup_j2())
    }

    fn sample(&mut self, theta1: f64) -> Result<BoundarySample, CapacityError> {
        let pol = self.family.policy_at(theta1)?;
        let j1 = mgf::j1(theta1, &pol, self.ev)?;
        let pz = mgf::prob_z(&pol, self.ev)?;
        let j2 = if j1 <= self.cb.j0 {
            f64::INFINITY
        } else {
            self.cb.phi(j1)?
        };
        let bounds = if self.family.is_fixed() {
            self.bounds_th
        } else {
            mgf::rate_bounds(&pol, self.ev)
        };
        let guess = match self.last_theta2 {
            Some((t, j)) if j > 0.0 && t > 0.0 && t.is_finite() => t * j2 / j,
            _ => j2 / mgf::mean_rates(&pol, self.ev)?.cr,
        };
        let theta2 = if j2.is_infinite() {
            f64::INFINITY
        } else {
            match self.invert_relay(j2, &pol, &bounds, guess) {
                Ok(t) => t,
                Err(CapacityError::Saturated { .. }) => f64::INFINITY,
                Err(e) => return Err(e),
            }
        };
        if theta2.is_finite() {
            self.last_theta2 = Some((theta2, j2));
        }
        let s = BoundarySample {
            theta1,
            theta2,
            j1,
            j2,
            lambda_p1: mgf::lambda_p1(theta2, pz),
            prob_z: pz,
        };
        self.trace.push(s);
        Ok(s)
    }

    /// Slack of the relay queue at rate `J1/theta1`; negative once the relay binds.
    fn case2_residual(&mut self, theta1: f64) -> Result<(f64, BoundarySample), CapacityError> {
        let s = match self.sample(theta1) {
            Err(e) if unresolved(&e) => return Ok((f64::NAN, nan_sample(theta1))),
            r => r?,
        };
        if s.theta2.is_infinite() {
            return Ok((
                if s.prob_z > 0.0 {
                    f64::NEG_INFINITY
                } else {
                    f64::INFINITY
                },
                s,
            ));
        }
        let pol = self.family.policy_at(theta1)?;
        let lc = match mgf::source_lmgf(s.lambda_p1 - theta1, &pol, self.ev) {
            Ok(v) => v,
            Err(MgfError::Divergent | MgfError::NoConvergence { .. }) => return Ok((f64::NAN, s)),
            Err(e) => return Err(e.into()),
        };
        Ok((s.j2 - s.j1 - lc, s))
    }

    fn case3_residual(&mut self, theta1: f64) -> Result<(f64, BoundarySample), CapacityError> {
        let s = match self.sample(theta1) {
            Err(e) if unresolved(&e) => return Ok((f64::NAN, nan_sample(theta1))),
            r => r?,
        };
        let p = s.point();
        Ok((p.source_rate() - p.relay_rate(), s))
    }
}

/// Expectations that cannot be resolved at extreme exponents.
fn unresolved(e: &CapacityError) -> bool {
    matches!(
        e,
        CapacityError::Mgf(MgfError::Divergent | MgfError::NoConvergence { .. })
    )
}

fn nan_sample(theta1: f64) -> BoundarySample {
    BoundarySample {
        theta1,
        theta2: f64::NAN,
        j1: f64::NAN,
        j2: f64::NAN,
        lambda_p1: f64::NAN,
        prob_z: f64::NAN,
    }
}

fn refine(
    mut h: impl FnMut(f64) -> Result<f64, CapacityError>,
    a: f64,
    fa: f64,
    b: f64,
    fb: f64,
) -> Result<f64, CapacityError> {
    let opts = RootOptions::with_rtol(1e-11);
    if fa.is_finite() && fb.is_finite() {
        return roots::brent_with_values(&mut h, a, fa, b, fb, opts);
    }
    // Bisect, keeping the end where the residual is still non-negative so the
    // returned point is never on the unresolved side.
    let (mut good, mut bad) = if fa >= 0.0 { (a, b) } else { (b, a) };
    for _ in 0..opts.max_iter {
        let mid = 0.5 * (good + bad);
        if (good - bad).abs() <= opts.rtol * mid.abs() || mid == good || mid == bad {
            break;
        }
        if h(mid)? >= 0.0 {
            good = mid;
        } else {
            bad = mid;
        }
    }
    Ok(good)
}

const CASE2_GRID: usize = 25;

/// Effective capacity (bits/block) of `family` under the delay constraint `c`
/// (`d_max` in seconds).
pub fn effective_capacity<P: PolicyFamily + ?Sized>(
    family: &P,
    c: &DelayConstraint,
    ev: &Evaluator,
) -> Result<CapacityResult, CapacityError> {
    let t_block = ev.scenario().t_block;
    let cb = DelayConstraint::new(c.epsilon, c.d_max / t_block)?;

    if cb.j_th == 0.0 {
        let pol = family.policy_at(0.0)?;
        let pz = mgf::prob_z(&pol, ev)?;
        if !check_stability(&pol, ev)? {
            return Ok(unstable(pz));
        }
        let rate = limit_capacity_eps1(&pol, ev)?;
        return Ok(CapacityResult {
            case: CaseLabel::I,
            rate,
            point: ExponentPoint {
                theta1: 0.0,
                theta2: 0.0,
                j1: 0.0,
                j2: 0.0,
                lambda_p1_at_theta2: 0.0,
            },
            prob_z: pz,
            diagnostics: Diagnostics {
                upper_bound: rate,
                ..Diagnostics::default()
            },
        });
    }

    let pol0 = family.policy_at(0.0)?;
    let guess1 = cb.j_th / mgf::mean_rates(&pol0, ev)?.cs;
    let mut w = Walker {
        family,
        ev,
        cb,
        bounds_th: mgf::rate_bounds(&pol0, ev),
        trace: Vec::new(),
        last_theta2: None,
    };
    let theta1_th = w.invert_source(cb.j_th, guess1)?;
    let pol_th = family.policy_at(theta1_th)?;
    w.bounds_th = mgf::rate_bounds(&pol_th, ev);
    let pz_th = mgf::prob_z(&pol_th, ev)?;
    if !check_stability(&pol_th, ev)? {
        return Ok(unstable(pz_th));
    }
    let guess2 = cb.j_th / mgf::mean_rates(&pol_th, ev)?.cr;
    let theta2_th = w.invert_relay(cb.j_th, &pol_th, &w.bounds_th, guess2)?;
    w.last_theta2 = Some((theta2_th, cb.j_th));
    let x_th = mgf::lambda_p1(theta2_th, pz_th);
    let mut diag = Diagnostics {
        theta1_th,
        theta2_th,
        lambda_p1_th: x_th,
        ..Diagnostics::default()
    };

    let (case, point, prob_z, rate) = if (theta1_th - x_th).abs() <= 1e-8 * theta1_th.max(x_th) {
        let p = ExponentPoint {
            theta1: theta1_th,
            theta2: theta2_th,
            j1: cb.j_th,
            j2: cb.j_th,
            lambda_p1_at_theta2: x_th,
        };
        (CaseLabel::I, p, pz_th, p.source_rate())
    } else if theta1_th > x_th {
        case_two(&mut w, theta1_th, &mut diag)?
    } else {
        case_three(&mut w, theta1_th, &mut diag)?
    };

    let ub = upper_bound_rate(&point);
    diag.upper_bound = ub;
    diag.trace = std::mem::take(&mut w.trace);
    if !(rate <= ub * (1.0 + 1e-6)) {
        return Err(CapacityError::Numerical(format!(
            "rate {rate:e} exceeds the bound {ub:e} at its own exponent point"
        )));
    }
    Ok(CapacityResult {
        case,
        rate,
        point,
        prob_z,
        diagnostics: diag,
    })
}

fn unstable(pz: f64) -> CapacityResult {
    CapacityResult {
        case: CaseLabel::Unstable,
        rate: 0.0,
        point: ExponentPoint {
            theta1: f64::NAN,
            theta2: f64::NAN,
            j1: f64::NAN,
            j2: f64::NAN,
            lambda_p1_at_theta2: f64::NAN,
        },
        prob_z: pz,
        diagnostics: Diagnostics::default(),
    }
}

/// Relay constraint is slack at the symmetric point: relax the source.
fn case_two<P: PolicyFamily + ?Sized>(
    w: &mut Walker<'_, P>,
    theta1_th: f64,
    diag: &mut Diagnostics,
) -> Result<(CaseLabel, ExponentPoint, f64, f64), CapacityError> {
    let j0 = w.cb.j0;
    let theta1_0 = w.invert_source(j0, theta1_th * j0 / w.cb.j_th)?;
    let at_j0 = |pz: f64| ExponentPoint {
        theta1: theta1_0,
        theta2: f64::INFINITY,
        j1: j0,
        j2: f64::INFINITY,
        lambda_p1_at_theta2: if pz > 0.0 { f64::INFINITY } else { 0.0 },
    };
    let pol0 = w.family.policy_at(theta1_0)?;
    let pz0 = mgf::prob_z(&pol0, w.ev)?;
    let b = if w.family.is_fixed() {
        w.bounds_th
    } else {
        mgf::rate_bounds(&pol0, w.ev)
    };
    if b.min_cr >= b.max_cs {
        let p = at_j0(pz0);
        return Ok((CaseLabel::IIDegenerate, p, pz0, p.source_rate()));
    }
    // Scan from the symmetric point toward J0, geometric in theta1 - theta1_0.
    let span = theta1_th - theta1_0;
    let mut grid = Vec::with_capacity(CASE2_GRID);
    for k in 0..CASE2_GRID {
        let q = 10f64.powf(-9.0 * k as f64 / (CASE2_GRID - 1) as f64);
        grid.push(theta1_0 + span * q);
    }
    // With E C_r < Pr{Z} E C_s, convexity gives
    // h <= theta2 (E C_r - pz E C_s) + theta1 E C_s - J1, which only falls
    // further as theta1 decreases.
    let means = if w.family.is_fixed() {
        let pol = w.family.policy_at(theta1_th)?;
        Some((mgf::mean_rates(&pol, w.ev)?, mgf::prob_z(&pol, w.ev)?))
    } else {
        None
    };
    let mut vals = Vec::with_capacity(grid.len());
    let mut used = Vec::with_capacity(grid.len());
    for &t in &grid {
        let (v, s) = w.case2_residual(t)?;
        vals.push(v);
        used.push(t);
        if v < 0.0 {
            if v == f64::NEG_INFINITY {
                break;
            }
            if let Some((m, pz)) = means {
                let slope = m.cr - pz * m.cs;
                if slope < 0.0 && s.theta2 * slope + s.theta1 * m.cs - s.j1 < 0.0 {
                    break;
                }
            }
        }
        if s.lambda_p1 > s.theta1 && v.is_nan() && s.theta2.is_finite() {
            // Divergence of the source MGF persists for larger arguments.
            break;
        }
    }
    // Roots are where the residual turns negative moving down in theta1.
    let mut roots_found = Vec::new();
    let mut prev: Option<(f64, f64)> = None;
    for (&t, &v) in used.iter().zip(&vals) {
        if v.is_nan() {
            continue;
        }
        if let Some((tp, vp)) = prev {
            if vp >= 0.0 && v < 0.0 {
                let r = refine(|x| Ok(w.case2_residual(x)?.0), t, v, tp, vp)?;
                roots_found.push(r);
            }
        }
        prev = Some((t, v));
    }
    let bottom_feasible = matches!(prev, Some((t, v)) if v >= 0.0 && t == *grid.last().unwrap());
    diag.roots = roots_found.clone();
    let smallest = roots_found
        .iter()
        .copied()
        .fold(None, |m: Option<f64>, r| Some(m.map_or(r, |m| m.min(r))));
    match smallest.filter(|_| !bottom_feasible) {
        Some(theta) => {
            let s = w.sample(theta)?;
            let p = s.point();
            Ok((CaseLabel::II, p, s.prob_z, p.source_rate()))
        }
        None => {
            let p = at_j0(pz0);
            Ok((CaseLabel::II, p, pz0, p.source_rate()))
        }
    }
}

/// Source constraint is slack at the symmetric point: relax the relay.
fn case_three<P: PolicyFamily + ?Sized>(
    w: &mut Walker<'_, P>,
    theta1_th: f64,
    diag: &mut Diagnostics,
) -> Result<(CaseLabel, ExponentPoint, f64, f64), CapacityError> {
    let j0 = w.cb.j0;
    let pol = w.family.policy_at(theta1_th)?;
    let pz = mgf::prob_z(&pol, w.ev)?;
    let b = w.bounds_th;
    let guess = w.last_theta2.map(|(t, j)| t * j0 / j).unwrap_or(1e-6);
    let theta2_0 = w.invert_relay(j0, &pol, &b, guess)?;
    let x0 = mgf::lambda_p1(theta2_0, pz);
    let at_inf = ExponentPoint {
        theta1: f64::INFINITY,
        theta2: theta2_0,
        j1: f64::INFINITY,
        j2: j0,
        lambda_p1_at_theta2: x0,
    };
    if b.min_cs >= j0 / x0 {
        return Ok((CaseLabel::IIIDegenerate, at_inf, pz, at_inf.relay_rate()));
    }
    let (mut tp, mut vp) = (theta1_th, w.case3_residual(theta1_th)?.0);
    for _ in 0..200 {
        let t = tp * 2.0;
        let (v, s) = w.case3_residual(t)?;
        if v <= 0.0 {
            let r = refine(|x| Ok(w.case3_residual(x)?.0), tp, vp, t, v)?;
            diag.roots = vec![r];
            let s = w.sample(r)?;
            let p = s.point();
            return Ok((
                CaseLabel::III,
                p,
                s.prob_z,
                p.source_rate().min(p.relay_rate()),
            ));
        }
        if s.j1 >= b.sup_j1() * (1.0 - 1e-12) {
            break;
        }
        tp = t;
        vp = v;
    }
    // No crossing before the source exponent saturates: the source queue can
    // only be kept empty, which caps the rate at min C_s.
    Ok((
        CaseLabel::III,
        at_inf,
        pz,
        b.min_cs.min(at_inf.relay_rate()),
    ))
}
