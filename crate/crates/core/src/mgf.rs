//! Expectations over the channel state and the exponent functions built on
//! them. Exponents `theta` are per bit; delay exponents `J` are per block.

use crate::fading::{ChannelState, FadingError, LinkFading, RelayPolicy, Scenario};
use crate::quad::{self, QuadResult};
use crate::roots::{self, RootError, RootOptions};
use crate::scalar::Real;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

const MAX_SEGMENTS: usize = 200;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MgfError {
    #[error("exact enumeration needs finite-support fading on every link")]
    EnumerationUnsupported,
    #[error("quadrature missed relative tolerance {requested:e} (achieved {achieved:e})")]
    NoConvergence { requested: f64, achieved: f64 },
    #[error("expectation diverges")]
    Divergent,
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error(transparent)]
    Fading(#[from] FadingError),
    #[error(transparent)]
    Root(#[from] RootError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    /// Sum over every combination of atoms; finite-support fading only.
    ExactEnumeration,
    /// Nested one-dimensional adaptive quadrature; atoms are summed exactly.
    AdaptiveQuadrature,
    /// Sample average over a fixed, seeded set of channel states.
    MonteCarlo { samples: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Engine {
    pub method: Method,
    /// Relative tolerance per quadrature level.
    pub rel_tol: f64,
}

impl Engine {
    pub fn exact() -> Self {
        Self {
            method: Method::ExactEnumeration,
            rel_tol: 1e-12,
        }
    }

    pub fn quadrature(rel_tol: f64) -> Self {
        Self {
            method: Method::AdaptiveQuadrature,
            rel_tol,
        }
    }

    pub fn monte_carlo(samples: usize, seed: u64) -> Self {
        Self {
            method: Method::MonteCarlo { samples, seed },
            rel_tol: 1e-8,
        }
    }

    /// Enumeration for finite-support fading, quadrature otherwise.
    pub fn auto(s: &Scenario, rel_tol: f64) -> Self {
        if s.fading.is_finite_support() {
            Self::exact()
        } else {
            Self::quadrature(rel_tol)
        }
    }
}

impl Default for Engine {
    fn default() -> Self {
        Self::quadrature(1e-8)
    }
}

/// A value with an absolute error estimate (standard error for Monte Carlo).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

/// Quantities the engine knows how to average over the channel state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Functional {
    /// `E{exp(a C_s + b C_r)} - 1`.
    Expm1 {
        a: f64,
        b: f64,
    },
    /// `E{exp(a C_s + b C_r)}`.
    Exp {
        a: f64,
        b: f64,
    },
    MeanCs,
    MeanCr,
    /// `E{C_sr ; z in Z}`.
    MeanCsrZ,
    ProbZ,
}

impl Functional {
    fn point(self, in_z: bool, cs: f64, cr: f64) -> f64 {
        match self {
            Functional::Expm1 { a, b } => (a * cs + b * cr).exp_m1(),
            Functional::Exp { a, b } => (a * cs + b * cr).exp(),
            Functional::MeanCs => cs,
            Functional::MeanCr => cr,
            Functional::MeanCsrZ => {
                if in_z {
                    cs
                } else {
                    0.0
                }
            }
            Functional::ProbZ => {
                if in_z {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// A scenario bound to an expectation engine.
#[derive(Debug, Clone)]
pub struct Evaluator {
    scenario: Scenario,
    engine: Engine,
    sr_tilde: LinkFading,
    samples: Option<Vec<ChannelState>>,
}

impl Evaluator {
    pub fn new(scenario: &Scenario, engine: Engine) -> Result<Self, MgfError> {
        scenario.validate()?;
        if !(engine.rel_tol > 0.0) {
            return Err(MgfError::Invalid(format!("tolerance {}", engine.rel_tol)));
        }
        let samples = match engine.method {
            Method::ExactEnumeration => {
                if !scenario.fading.is_finite_support() {
                    return Err(MgfError::EnumerationUnsupported);
                }
                None
            }
            Method::AdaptiveQuadrature => None,
            Method::MonteCarlo { samples, seed } => {
                if samples < 2 {
                    return Err(MgfError::Invalid("Monte Carlo needs >= 2 samples".into()));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                Some(
                    (0..samples)
                        .map(|_| scenario.sample_state(&mut rng))
                        .collect(),
                )
            }
        };
        Ok(Self {
            sr_tilde: scenario.sr_tilde(),
            scenario: scenario.clone(),
            engine,
            samples,
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn engine(&self) -> Engine {
        self.engine
    }

    /// `E{h(z) ; lo < z <= hi}` for one link, with atoms summed exactly.
    pub fn expect_link(
        &self,
        link: &LinkFading,
        lo: f64,
        hi: f64,
        h: &mut dyn FnMut(f64) -> f64,
    ) -> QuadResult {
        self.expect_link_with(link, lo, hi, self.engine.rel_tol, MAX_SEGMENTS, h)
    }

    fn expect_link_with(
        &self,
        link: &LinkFading,
        lo: f64,
        hi: f64,
        tol: f64,
        max_segments: usize,
        h: &mut dyn FnMut(f64) -> f64,
    ) -> QuadResult {
        match link {
            LinkFading::Rayleigh { mean } => {
                // Direct in z over the head, where e^{-z/m} loses resolution,
                // and via u = e^{-z/m} over the tail.
                let m = *mean;
                let lo = lo.max(0.0);
                if !(hi > lo) {
                    return QuadResult::exact(0.0);
                }
                let mut out = QuadResult::exact(0.0);
                if lo < m {
                    let b = hi.min(m);
                    out = out.join(quad::integrate(
                        &mut |z: f64| h(z) * (-z / m).exp() / m,
                        lo,
                        b,
                        tol,
                        1e-300,
                        max_segments,
                    ));
                }
                if hi > m {
                    // z = z0 + m s, s = t / (1 - t): the density factor e^{-s}
                    // damps the tail smoothly as t -> 1.
                    let z0 = lo.max(m);
                    let w0 = (-z0 / m).exp();
                    let tb = if hi.is_infinite() {
                        1.0
                    } else {
                        let sb = (hi - z0) / m;
                        sb / (1.0 + sb)
                    };
                    if tb > 0.0 {
                        out = out.join(quad::integrate(
                            &mut |t: f64| {
                                if t >= 1.0 {
                                    return 0.0;
                                }
                                let r = 1.0 / (1.0 - t);
                                let sv = t * r;
                                let e = (-sv).exp();
                                if e == 0.0 {
                                    return 0.0;
                                }
                                w0 * h(z0 + m * sv) * e * r * r
                            },
                            0.0,
                            tb,
                            tol,
                            1e-300,
                            max_segments,
                        ));
                    }
                }
                out
            }
            _ => {
                let mut v = 0.0;
                for (z, p) in link.atoms().unwrap_or_default() {
                    if z > lo && z <= hi {
                        v += p * h(z);
                    }
                }
                QuadResult::exact(v)
            }
        }
    }

    /// Average of `fun` over the channel state under `policy`.
    pub fn expect(&self, policy: &RelayPolicy, fun: Functional) -> Result<Estimate, MgfError> {
        let est = match self.engine.method {
            Method::ExactEnumeration => self.enumerate(policy, fun),
            Method::MonteCarlo { .. } => self.sample_mean(policy, fun),
            Method::AdaptiveQuadrature => self.nested(policy, fun)?,
        };
        if !est.value.is_finite() {
            return Err(MgfError::Divergent);
        }
        Ok(est)
    }

    fn enumerate(&self, policy: &RelayPolicy, fun: Functional) -> Estimate {
        let f = &self.scenario.fading;
        let sd = f.sd.atoms().unwrap_or_default();
        let sr = self.sr_tilde.atoms().unwrap_or_default();
        let rd = f.rd.atoms().unwrap_or_default();
        let mut v = 0.0;
        for &(a, pa) in &sd {
            for &(b, pb) in &sr {
                for &(c, pc) in &rd {
                    let z = ChannelState::new(a, b, c);
                    let (region, cs, cr) = policy.rates(&z, &self.scenario);
                    v += pa * pb * pc * fun.point(region == crate::fading::Region::Z, cs, cr);
                }
            }
        }
        Estimate {
            value: v,
            error: 0.0,
        }
    }

    fn sample_mean(&self, policy: &RelayPolicy, fun: Functional) -> Estimate {
        let samples = self.samples.as_deref().unwrap_or(&[]);
        let n = samples.len() as f64;
        let (mut mean, mut m2) = (0.0, 0.0);
        for (i, z) in samples.iter().enumerate() {
            let (region, cs, cr) = policy.rates(z, &self.scenario);
            let x = fun.point(region == crate::fading::Region::Z, cs, cr);
            let d = x - mean;
            mean += d / (i + 1) as f64;
            m2 += d * (x - mean);
        }
        let var = if n > 1.0 { m2 / (n - 1.0) } else { 0.0 };
        Estimate {
            value: mean,
            error: (var / n).sqrt(),
        }
    }

    fn nested(&self, policy: &RelayPolicy, fun: Functional) -> Result<Estimate, MgfError> {
        let mut inner_err: f64 = 0.0;
        let sd = self.scenario.fading.sd.clone();
        let outer = {
            let mut h = |z_sd: f64| {
                let (v, e) = self.conditional(policy, fun, z_sd);
                inner_err = inner_err.max(e);
                v
            };
            self.expect_link(&sd, f64::NEG_INFINITY, f64::INFINITY, &mut h)
        };
        let mut error = outer.error + inner_err;
        if !outer.value.is_finite() {
            return Err(MgfError::Divergent);
        }
        let rel = |error: f64| {
            if outer.value == 0.0 {
                if error == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            } else {
                error / outer.value.abs()
            }
        };
        let mut achieved = rel(error);
        if achieved > 100.0 * self.engine.rel_tol {
            // The worst inner error can be far larger than its weighted average.
            // Only its order of magnitude matters.
            let spread =
                self.expect_link_with(&sd, f64::NEG_INFINITY, f64::INFINITY, 0.1, 8, &mut |z_sd| {
                    self.conditional(policy, fun, z_sd).1
                });
            error = outer.error + spread.value;
            achieved = rel(error);
        }
        if achieved > 100.0 * self.engine.rel_tol && error > 1e-300 {
            return Err(MgfError::NoConvergence {
                requested: self.engine.rel_tol,
                achieved,
            });
        }
        Ok(Estimate {
            value: outer.value,
            error,
        })
    }

    /// Conditional expectation given `z_sd`, with an absolute error bound.
    fn conditional(&self, policy: &RelayPolicy, fun: Functional, z_sd: f64) -> (f64, f64) {
        let s = &self.scenario;
        let rd = &s.fading.rd;
        let sr = &self.sr_tilde;
        let g = policy.g.eval(z_sd);
        let f = policy.f.eval(z_sd);
        let inf = f64::INFINITY;
        let ninf = f64::NEG_INFINITY;
        let pz = sr.prob_in(g, inf);
        let pzc = sr.prob_in(ninf, g);
        let mut err = 0.0;
        let mut track = |r: QuadResult| {
            err += r.error;
            r.value
        };
        let value = match fun {
            Functional::ProbZ => pz,
            Functional::MeanCsrZ => track(self.expect_link(sr, g, inf, &mut |z| s.rate_sr(z))),
            Functional::MeanCs => {
                let mut v = track(self.expect_link(sr, g, inf, &mut |z| s.rate_sr(z)));
                if pzc > 0.0 {
                    let direct = rd.prob_in(f, inf) * s.rate_sd(z_sd);
                    let mixed =
                        track(self.expect_link(rd, ninf, f, &mut |r| s.rate_sd_int(z_sd, r)));
                    v += pzc * (direct + mixed);
                }
                v
            }
            Functional::MeanCr => {
                let mut v = 0.0;
                if pz > 0.0 {
                    v += pz
                        * track(self.expect_link(rd, ninf, inf, &mut |r| s.rate_rd_int(r, z_sd)));
                }
                if pzc > 0.0 {
                    let hi = track(self.expect_link(rd, f, inf, &mut |r| s.rate_rd_int(r, z_sd)));
                    let lo = track(self.expect_link(rd, ninf, f, &mut |r| s.rate_rd(r)));
                    v += pzc * (hi + lo);
                }
                v
            }
            Functional::Expm1 { a, b } => {
                let mut v = 0.0;
                if pz > 0.0 {
                    let am = if a == 0.0 {
                        0.0
                    } else {
                        track(self.expect_link(sr, g, inf, &mut |z| (a * s.rate_sr(z)).exp_m1()))
                    };
                    let bm = if b == 0.0 {
                        0.0
                    } else {
                        track(self.expect_link(rd, ninf, inf, &mut |r| {
                            (b * s.rate_rd_int(r, z_sd)).exp_m1()
                        }))
                    };
                    v += pz * bm + am + am * bm;
                }
                if pzc > 0.0 {
                    let csd = s.rate_sd(z_sd);
                    let hi = if b == 0.0 {
                        rd.prob_in(f, inf) * (a * csd).exp_m1()
                    } else {
                        track(self.expect_link(rd, f, inf, &mut |r| {
                            (a * csd + b * s.rate_rd_int(r, z_sd)).exp_m1()
                        }))
                    };
                    let lo = track(self.expect_link(rd, ninf, f, &mut |r| {
                        (a * s.rate_sd_int(z_sd, r) + b * s.rate_rd(r)).exp_m1()
                    }));
                    v += pzc * (hi + lo);
                }
                v
            }
            Functional::Exp { a, b } => {
                let mut v = 0.0;
                if pz > 0.0 {
                    let ae = if a == 0.0 {
                        pz
                    } else {
                        track(self.expect_link(sr, g, inf, &mut |z| (a * s.rate_sr(z)).exp()))
                    };
                    let be = if b == 0.0 {
                        1.0
                    } else {
                        track(self.expect_link(rd, ninf, inf, &mut |r| {
                            (b * s.rate_rd_int(r, z_sd)).exp()
                        }))
                    };
                    v += ae * be;
                }
                if pzc > 0.0 {
                    let csd = s.rate_sd(z_sd);
                    let hi = if b == 0.0 {
                        rd.prob_in(f, inf) * (a * csd).exp()
                    } else {
                        track(self.expect_link(rd, f, inf, &mut |r| {
                            (a * csd + b * s.rate_rd_int(r, z_sd)).exp()
                        }))
                    };
                    let lo = track(self.expect_link(rd, ninf, f, &mut |r| {
                        (a * s.rate_sd_int(z_sd, r) + b * s.rate_rd(r)).exp()
                    }));
                    v += pzc * (hi + lo);
                }
                v
            }
        };
        (value, err)
    }

    /// `ln E{exp(a C_s + b C_r)}`, accurate both near zero and far in the tail.
    pub fn log_mgf(&self, policy: &RelayPolicy, a: f64, b: f64) -> Result<f64, MgfError> {
        if a == 0.0 && b == 0.0 {
            return Ok(0.0);
        }
        let m = self.expect(policy, Functional::Expm1 { a, b })?.value;
        if m > -0.5 {
            return Ok(m.ln_1p());
        }
        let raw = self.expect(policy, Functional::Exp { a, b })?.value;
        if raw <= 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(raw.ln())
    }
}

/// Routing-process LMGF `ln((1 - pz) + pz * e^theta)`.
pub fn lambda_p1<F: Real>(theta: F, pz: F) -> F {
    if theta > F::lit(30.0) {
        if pz == F::zero() {
            return F::zero();
        }
        return theta + (pz + (F::one() - pz) * (-theta).exp()).ln();
    }
    (pz * theta.exp_m1()).ln_1p()
}

/// Derivative of [`lambda_p1`] in `theta`.
pub fn lambda_p1_derivative<F: Real>(theta: F, pz: F) -> F {
    let num = pz * theta.exp();
    num / ((F::one() - pz) + num)
}

fn check_theta(theta: f64) -> Result<(), MgfError> {
    if theta.is_nan() || theta < 0.0 {
        return Err(MgfError::Invalid(format!("exponent {theta} must be >= 0")));
    }
    Ok(())
}

/// `Pr{z in Z}`.
pub fn prob_z(policy: &RelayPolicy, ev: &Evaluator) -> Result<f64, MgfError> {
    Ok(ev
        .expect(policy, crate::mgf::Functional::ProbZ)?
        .value
        .clamp(0.0, 1.0))
}

/// Source delay exponent `-ln E{exp(-theta C_s)}` per block.
pub fn j1(theta: f64, policy: &RelayPolicy, ev: &Evaluator) -> Result<f64, MgfError> {
    check_theta(theta)?;
    Ok(-ev.log_mgf(policy, -theta, 0.0)?)
}

/// Relay delay exponent `-ln E{exp(-theta C_r)}` per block.
pub fn j2(theta: f64, policy: &RelayPolicy, ev: &Evaluator) -> Result<f64, MgfError> {
    check_theta(theta)?;
    Ok(-ev.log_mgf(policy, 0.0, -theta)?)
}

/// Source service LMGF `ln E{exp(s C_s)}` for any real `s`.
pub fn source_lmgf(s: f64, policy: &RelayPolicy, ev: &Evaluator) -> Result<f64, MgfError> {
    ev.log_mgf(policy, s, 0.0)
}

/// Effective bandwidth of the traffic the source forwards to the relay,
/// for a constant source arrival `rate` (bits/block) whose own queue
/// exponent is `theta_tilde`.
pub fn arrival_lmgf_relay(
    theta: f64,
    rate: f64,
    theta_tilde: f64,
    pz: f64,
    policy: &RelayPolicy,
    ev: &Evaluator,
) -> Result<f64, MgfError> {
    check_theta(theta)?;
    let x = lambda_p1(theta, pz);
    if x <= theta_tilde {
        return Ok(rate * x);
    }
    Ok(rate * theta_tilde + source_lmgf(x - theta_tilde, policy, ev)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanRates {
    pub cs: f64,
    pub cr: f64,
    /// `E{C_sr ; z in Z}`: the mean rate into the relay queue.
    pub csr_z: f64,
}

pub fn mean_rates(policy: &RelayPolicy, ev: &Evaluator) -> Result<MeanRates, MgfError> {
    Ok(MeanRates {
        cs: ev.expect(policy, Functional::MeanCs)?.value,
        cr: ev.expect(policy, Functional::MeanCr)?.value,
        csr_z: ev.expect(policy, Functional::MeanCsrZ)?.value,
    })
}

/// Extremes of the service rates and the mass at their minima.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateBounds {
    pub min_cs: f64,
    pub max_cs: f64,
    pub min_cr: f64,
    pub max_cr: f64,
    pub p_min_cs: f64,
    pub p_min_cr: f64,
}

impl RateBounds {
    /// Supremum of `J1` over all exponents; finite only when the source can
    /// be cut off entirely.
    pub fn sup_j1(&self) -> f64 {
        if self.min_cs <= 0.0 && self.p_min_cs > 0.0 {
            -self.p_min_cs.ln()
        } else {
            f64::INFINITY
        }
    }

    pub fn sup_j2(&self) -> f64 {
        if self.min_cr <= 0.0 && self.p_min_cr > 0.0 {
            -self.p_min_cr.ln()
        } else {
            f64::INFINITY
        }
    }
}

/// Rate extremes: exact over the support for finite-support fading,
/// otherwise from the per-link gain extremes.
pub fn rate_bounds(policy: &RelayPolicy, ev: &Evaluator) -> RateBounds {
    let s = ev.scenario();
    let f = &s.fading;
    if f.is_finite_support() {
        let sd = f.sd.atoms().unwrap_or_default();
        let sr = s.sr_tilde().atoms().unwrap_or_default();
        let rd = f.rd.atoms().unwrap_or_default();
        let mut pts = Vec::with_capacity(sd.len() * sr.len() * rd.len());
        for &(a, pa) in &sd {
            for &(b, pb) in &sr {
                for &(c, pc) in &rd {
                    let (_, cs, cr) = policy.rates(&ChannelState::new(a, b, c), s);
                    pts.push((pa * pb * pc, cs, cr));
                }
            }
        }
        let min_cs = pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        let max_cs = pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        let min_cr = pts.iter().map(|p| p.2).fold(f64::INFINITY, f64::min);
        let max_cr = pts.iter().map(|p| p.2).fold(f64::NEG_INFINITY, f64::max);
        let near = |x: f64, m: f64| (x - m).abs() <= 1e-12 * m.abs().max(1e-300);
        let p_min_cs = pts.iter().filter(|p| near(p.1, min_cs)).map(|p| p.0).sum();
        let p_min_cr = pts.iter().filter(|p| near(p.2, min_cr)).map(|p| p.0).sum();
        return RateBounds {
            min_cs,
            max_cs,
            min_cr,
            max_cr,
            p_min_cs,
            p_min_cr,
        };
    }
    let (sd_min, sd_max) = f.sd.support();
    let (sr_min, sr_max) = s.sr_tilde().support();
    let (rd_min, rd_max) = f.rd.support();
    RateBounds {
        min_cs: s.rate_sr(sr_min).min(s.rate_sd_int(sd_min, rd_max)),
        max_cs: s.rate_sr(sr_max).max(s.rate_sd(sd_max)),
        min_cr: s.rate_rd_int(rd_min, sd_max),
        max_cr: s.rate_rd(rd_max),
        p_min_cs: 0.0,
        p_min_cr: 0.0,
    }
}

/// Source queue exponent `theta_tilde` solving `rate = J1(theta)/theta`.
///
/// Returns 0 when `rate >= E{C_s}` (the queue is unstable) and infinity
/// when `rate <= min C_s` (the queue never builds up).
pub fn source_queue_exponent(
    rate: f64,
    policy: &RelayPolicy,
    ev: &Evaluator,
) -> Result<f64, MgfError> {
    let mean = ev.expect(policy, Functional::MeanCs)?.value;
    if rate >= mean {
        return Ok(0.0);
    }
    let b = rate_bounds(policy, ev);
    if rate <= b.min_cs {
        return Ok(f64::INFINITY);
    }
    let h = |t: f64| -> Result<f64, MgfError> { Ok(rate - j1(t, policy, ev)? / t) };
    let scale = 1.0 / mean.max(1e-300);
    roots::increasing_root(h, scale * 1e-9, scale, 1e300, RootOptions::with_rtol(1e-12))
}

/// A point `(theta1, theta2)` with its exponents, `J` per block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentPoint {
    pub theta1: f64,
    pub theta2: f64,
    pub j1: f64,
    pub j2: f64,
    pub lambda_p1_at_theta2: f64,
}

impl ExponentPoint {
    /// Source-side rate bound `J1/theta1`.
    pub fn source_rate(&self) -> f64 {
        let r = self.j1 / self.theta1;
        if r.is_finite() {
            r
        } else {
            f64::INFINITY
        }
    }

    /// Relay-side rate bound `J2/Lambda_p1(theta2)`; infinite when nothing is routed.
    pub fn relay_rate(&self) -> f64 {
        if self.lambda_p1_at_theta2 <= 0.0 {
            return f64::INFINITY;
        }
        let r = self.j2 / self.lambda_p1_at_theta2;
        if r.is_finite() {
            r
        } else {
            f64::INFINITY
        }
    }

    pub fn j1_per_second(&self, t_block: f64) -> f64 {
        self.j1 / t_block
    }

    pub fn j2_per_second(&self, t_block: f64) -> f64 {
        self.j2 / t_block
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fading::{FadingSpec, Threshold};

    fn const_scenario(sd: f64, sr: f64, rd: f64) -> Scenario {
        Scenario {
            d: 0.5,
            alpha: 4.0,
            snr_s: 1.0,
            snr_r: 1.0,
            gamma: 1.0,
            t_block: 1e-3,
            bandwidth: 180e3,
            fading: FadingSpec {
                sd: LinkFading::Constant(sd),
                sr: LinkFading::Constant(sr),
                rd: LinkFading::Constant(rd),
            },
        }
    }

    #[test]
    fn lambda_p1_values() {
        assert_eq!(lambda_p1(0.0, 0.3), 0.0);
        assert!((lambda_p1(0.7, 1.0) - 0.7f64).abs() < 1e-15);
        let want = (0.5 + 0.5 * std::f64::consts::E).ln();
        assert!((lambda_p1(1.0, 0.5) - want).abs() < 1e-15);
        assert!((lambda_p1(1.0f64, 0.5) - 0.620_115).abs() < 1e-6);
        assert!((lambda_p1(100.0, 0.25) - (0.75 + 0.25 * 100f64.exp()).ln()).abs() < 1e-12);
        assert!((lambda_p1(1.0f32, 0.5) - 0.620_115).abs() < 1e-6);
    }

    #[test]
    fn constant_service_exponents() {
        let s = const_scenario(1.0, 2.0, 1.0);
        let ev = Evaluator::new(&s, Engine::exact()).unwrap();
        let pol = RelayPolicy::mcg(1.0);
        let cs = s.rate_sr(2.0);
        let cr = s.rate_rd_int(1.0, 1.0);
        let t = 1e-3;
        assert!((j1(t, &pol, &ev).unwrap() - t * cs).abs() < 1e-12);
        assert!((j2(t, &pol, &ev).unwrap() - t * cr).abs() < 1e-12);
        assert_eq!(j1(0.0, &pol, &ev).unwrap(), 0.0);
        let m = mean_rates(&pol, &ev).unwrap();
        assert!((m.cs - cs).abs() < 1e-12 && (m.cr - cr).abs() < 1e-12);
        assert!((m.csr_z - cs).abs() < 1e-12);
    }

    #[test]
    fn enumeration_rejected_for_rayleigh() {
        let s = Scenario::preset(0.5, 10.0).unwrap();
        assert!(matches!(
            Evaluator::new(&s, Engine::exact()),
            Err(MgfError::EnumerationUnsupported)
        ));
    }

    #[test]
    fn prob_z_closed_form() {
        let m = 3.0;
        let mut s = Scenario::preset(0.5, 10.0).unwrap();
        s.fading.sr = LinkFading::Rayleigh { mean: m };
        let ev = Evaluator::new(&s, Engine::quadrature(1e-10)).unwrap();
        let p = prob_z(&RelayPolicy::mcg(1.0), &ev).unwrap();
        assert!((p - m / (1.0 + m)).abs() < 1e-9);
        let always = RelayPolicy::fixed(Threshold::Linear(0.0), Threshold::Linear(1.0));
        assert!((prob_z(&always, &ev).unwrap() - 1.0).abs() < 1e-15);
        let never = RelayPolicy::fixed(Threshold::Infinite, Threshold::Linear(1.0));
        assert_eq!(prob_z(&never, &ev).unwrap(), 0.0);
    }

    #[test]
    fn quadrature_matches_enumeration_on_atoms() {
        let mut s = const_scenario(1.0, 1.0, 1.0);
        s.snr_r = 3.0;
        s.fading = FadingSpec {
            sd: LinkFading::Discrete(vec![(0.4, 0.5), (1.7, 0.5)]),
            sr: LinkFading::Discrete(vec![(0.3, 0.25), (2.2, 0.75)]),
            rd: LinkFading::Discrete(vec![(0.1, 0.6), (3.0, 0.4)]),
        };
        let pol = RelayPolicy::mcg(1.0);
        let a = Evaluator::new(&s, Engine::exact()).unwrap();
        let b = Evaluator::new(&s, Engine::quadrature(1e-10)).unwrap();
        for fun in [
            Functional::Expm1 { a: -0.01, b: 0.0 },
            Functional::Expm1 { a: 0.0, b: -0.02 },
            Functional::Expm1 {
                a: 0.003,
                b: -0.001,
            },
            Functional::Exp { a: -0.05, b: -0.01 },
            Functional::MeanCs,
            Functional::MeanCr,
            Functional::MeanCsrZ,
            Functional::ProbZ,
        ] {
            let x = a.expect(&pol, fun).unwrap().value;
            let y = b.expect(&pol, fun).unwrap().value;
            assert!(
                (x - y).abs() <= 1e-12 * x.abs().max(1.0),
                "{fun:?}: {x} vs {y}"
            );
        }
    }

    #[test]
    fn monte_carlo_agrees_with_quadrature() {
        let s = Scenario::preset(0.5, 10.0).unwrap();
        let pol = RelayPolicy::mcg(1.0);
        let q = Evaluator::new(&s, Engine::quadrature(1e-8)).unwrap();
        let mc = Evaluator::new(&s, Engine::monte_carlo(200_000, 7)).unwrap();
        for fun in [Functional::MeanCs, Functional::MeanCr, Functional::ProbZ] {
            let x = q.expect(&pol, fun).unwrap();
            let y = mc.expect(&pol, fun).unwrap();
            assert!((x.value - y.value).abs() < 4.0 * y.error + 1e-12, "{fun:?}");
        }
    }

    #[test]
    fn source_queue_exponent_inverts_rate() {
        let s = Scenario::preset(0.5, 10.0).unwrap();
        let pol = RelayPolicy::mcg(1.0);
        let ev = Evaluator::new(&s, Engine::quadrature(1e-9)).unwrap();
        let m = mean_rates(&pol, &ev).unwrap();
        let r = 0.8 * m.cs;
        let t = source_queue_exponent(r, &pol, &ev).unwrap();
        assert!((j1(t, &pol, &ev).unwrap() / t - r).abs() < 1e-7 * r);
        assert_eq!(source_queue_exponent(1.1 * m.cs, &pol, &ev).unwrap(), 0.0);
    }
}
