//! Relay strategies: max channel gain, max delay exponent, and the
//! no-buffer decode-and-forward baseline.

use crate::capacity::{effective_capacity, CapacityError, CapacityResult, PolicyFamily};
use crate::delay::DelayConstraint;
use crate::fading::{LinkFading, PolicyKind, RelayPolicy, Scenario, Threshold, ThresholdTable};
use crate::mgf::{Engine, Evaluator, Method, MgfError};
use crate::quad::QuadResult;
use crate::roots::{self, RootOptions};
use std::collections::HashMap;
use std::sync::{Arc, Mutex};

/// Max channel gain routing: relay when `z_sr_tilde > z_sd`; decoding
/// threshold `f(z_sd) = lambda * z_sd`.
pub fn mcg_policy(lambda: f64) -> RelayPolicy {
    RelayPolicy::mcg(lambda)
}

/// Evaluator for the one-dimensional expectations inside the threshold;
/// Monte Carlo engines fall back to quadrature here.
fn inner_evaluator(ev: &Evaluator) -> Result<Evaluator, MgfError> {
    match ev.engine().method {
        Method::MonteCarlo { .. } => Evaluator::new(
            ev.scenario(),
            Engine::quadrature(ev.engine().rel_tol.min(1e-8)),
        ),
        _ => Ok(ev.clone()),
    }
}

fn mac_expectation(
    z_sd: f64,
    f_val: f64,
    ev: &Evaluator,
    mut h: impl FnMut(f64) -> f64,
) -> QuadResult {
    let s = ev.scenario();
    let rd = &s.fading.rd;
    let above = rd.prob_in(f_val, f64::INFINITY) * h(s.rate_sd(z_sd));
    let below = ev.expect_link(rd, f64::NEG_INFINITY, f_val, &mut |r| {
        h(s.rate_sd_int(z_sd, r))
    });
    QuadResult {
        value: above + below.value,
        ..below
    }
}

/// Routing threshold on `z_sr_tilde` that maximizes the source delay
/// exponent at `theta1` (1/bit), for decoding threshold value `f_val`
/// at this `z_sd`. At `theta1 = 0` the small-exponent limit is returned.
pub fn mde_threshold(z_sd: f64, theta1: f64, f_val: f64, ev: &Evaluator) -> Result<f64, MgfError> {
    if !(theta1 >= 0.0) {
        return Err(MgfError::Invalid(format!("theta1 = {theta1}")));
    }
    if z_sd <= 0.0 {
        return Ok(0.0);
    }
    let s = ev.scenario();
    let tb = s.tb();
    if theta1 == 0.0 {
        let mean = mac_expectation(z_sd, f_val, ev, |c| c).value;
        return Ok((mean * std::f64::consts::LN_2 / tb).exp_m1() / s.snr_s);
    }
    let beta = theta1 * tb / std::f64::consts::LN_2;
    let m = mac_expectation(z_sd, f_val, ev, |c| (-theta1 * c).exp_m1()).value;
    let log_b = if m > -0.5 {
        m.ln_1p()
    } else {
        mac_expectation(z_sd, f_val, ev, |c| (-theta1 * c).exp())
            .value
            .ln()
    };
    if !log_b.is_finite() {
        return Err(MgfError::Divergent);
    }
    Ok((-log_b / beta).exp_m1() / s.snr_s)
}

/// First-order optimality residual of a threshold value `g` at `z_sd`:
/// `-(1 + snr g)^-beta + E_rd{(1 + SINR)^-beta}`.
pub fn mde_residual(z_sd: f64, theta1: f64, f_val: f64, g: f64, ev: &Evaluator) -> f64 {
    let s = ev.scenario();
    let beta = theta1 * s.tb() / std::f64::consts::LN_2;
    let e = mac_expectation(z_sd, f_val, ev, |c| (-theta1 * c).exp()).value;
    -(1.0 + s.snr_s * g).powf(-beta) + e
}

const GRID_NODES: usize = 97;

/// Policy with the max-delay-exponent threshold instantiated at `theta1`
/// and decoding threshold `f(z_sd) = lambda * z_sd`.
///
/// Finite-support `z_sd` is tabulated exactly at its atoms; continuous
/// `z_sd` uses a log-spaced grid with monotone interpolation and direct
/// evaluation outside the grid.
pub fn mde_policy(theta1: f64, lambda: f64, ev: &Evaluator) -> Result<RelayPolicy, MgfError> {
    let inner = Arc::new(inner_evaluator(ev)?);
    let s = inner.scenario();
    let f = Threshold::Linear(lambda);
    let eval = |z: f64| mde_threshold(z, theta1, f.eval(z), &inner);
    let table = match &s.fading.sd {
        LinkFading::Rayleigh { mean } => {
            let (lo, hi) = ((1e-7 * mean).ln(), (60.0 * mean).ln());
            let mut grid = Vec::with_capacity(GRID_NODES);
            for i in 0..GRID_NODES {
                let z = (lo + (hi - lo) * i as f64 / (GRID_NODES - 1) as f64).exp();
                grid.push((z, eval(z)?));
            }
            let fb_inner = inner.clone();
            let fallback =
                move |z: f64| mde_threshold(z, theta1, lambda * z, &fb_inner).unwrap_or(f64::NAN);
            ThresholdTable::new(vec![], grid, Some(Box::new(fallback)))
        }
        other => {
            let mut atoms = Vec::new();
            for (z, _) in other.atoms().unwrap_or_default() {
                atoms.push((z, eval(z)?));
            }
            let fb_inner = inner.clone();
            let fallback =
                move |z: f64| mde_threshold(z, theta1, lambda * z, &fb_inner).unwrap_or(f64::NAN);
            ThresholdTable::new(atoms, vec![], Some(Box::new(fallback)))
        }
    };
    Ok(RelayPolicy {
        g: Threshold::Table(Arc::new(table)),
        f,
        kind: PolicyKind::Mde { theta1 },
    })
}

/// The max-delay-exponent family: the routing threshold follows the source
/// exponent wherever the capacity solver evaluates it.
pub struct MdeFamily {
    lambda: f64,
    ev: Evaluator,
    cache: Mutex<HashMap<u64, RelayPolicy>>,
}

impl MdeFamily {
    pub fn new(lambda: f64, ev: &Evaluator) -> Self {
        Self {
            lambda,
            ev: ev.clone(),
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

impl PolicyFamily for MdeFamily {
    fn policy_at(&self, theta1: f64) -> Result<RelayPolicy, CapacityError> {
        let key = theta1.to_bits();
        if let Some(p) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok(p.clone());
        }
        let p = mde_policy(theta1, self.lambda, &self.ev)?;
        let mut cache = self.cache.lock().expect("cache lock");
        if cache.len() > 256 {
            cache.clear();
        }
        cache.insert(key, p.clone());
        Ok(p)
    }

    fn is_fixed(&self) -> bool {
        false
    }
}

/// Effective capacity under the max-delay-exponent family.
pub fn effective_capacity_mde(
    lambda: f64,
    c: &DelayConstraint,
    ev: &Evaluator,
) -> Result<CapacityResult, CapacityError> {
    effective_capacity(&MdeFamily::new(lambda, ev), c, ev)
}

/// Half-duplex decode-and-forward rate without relay buffering, bits/block.
/// Uses the raw source-relay gain.
pub fn nobuffer_rate(s: &Scenario, z_sd: f64, z_sr: f64, z_rd: f64) -> f64 {
    let a = (2.0 * s.snr_s * z_sr).ln_1p();
    let b = (2.0 * s.snr_s * z_sd + 2.0 * s.snr_s * z_rd).ln_1p();
    0.5 * s.tb() * a.min(b) / std::f64::consts::LN_2
}

/// `E{k(C)}` for the no-buffer rate `C`. The rate depends on the gains only
/// through `min(z_sr, z_sd + z_rd)`, so the source-relay integral is split there.
fn nobuffer_expect(ev: &Evaluator, k: &dyn Fn(f64) -> f64) -> Result<f64, MgfError> {
    let s = ev.scenario();
    let f = &s.fading;
    let rate = |v: f64| nobuffer_rate(s, v, v, 0.0);
    let v = match ev.engine().method {
        Method::MonteCarlo { samples, seed } => {
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut acc = 0.0;
            for _ in 0..samples {
                let (a, b, c) = (
                    f.sd.sample(&mut rng),
                    f.sr.sample(&mut rng),
                    f.rd.sample(&mut rng),
                );
                acc += k(nobuffer_rate(s, a, b, c));
            }
            acc / samples as f64
        }
        _ => {
            let inf = f64::INFINITY;
            let ninf = f64::NEG_INFINITY;
            ev.expect_link(&f.sd, ninf, inf, &mut |a| {
                ev.expect_link(&f.rd, ninf, inf, &mut |c| {
                    let w = a + c;
                    let below = ev.expect_link(&f.sr, ninf, w, &mut |b| k(rate(b))).value;
                    below + f.sr.prob_in(w, inf) * k(rate(w))
                })
                .value
            })
            .value
        }
    };
    if !v.is_finite() {
        return Err(MgfError::Divergent);
    }
    Ok(v)
}

/// `-ln E{exp(-theta C)}` for the no-buffer rate.
pub fn nobuffer_exponent(theta: f64, ev: &Evaluator) -> Result<f64, MgfError> {
    if theta == 0.0 {
        return Ok(0.0);
    }
    let m = nobuffer_expect(ev, &|c| (-theta * c).exp_m1())?;
    if m > -0.5 {
        return Ok(-m.ln_1p());
    }
    let raw = nobuffer_expect(ev, &|c| (-theta * c).exp())?;
    Ok(if raw > 0.0 { -raw.ln() } else { f64::INFINITY })
}

/// Mean no-buffer rate, bits/block.
pub fn nobuffer_mean(ev: &Evaluator) -> Result<f64, MgfError> {
    nobuffer_expect(ev, &|c| c)
}

/// No-buffer effective capacity (bits/block): the rate `-ln E{e^{-theta C}}/theta`
/// at the smallest `theta` whose exponent reaches `-ln(epsilon)/d_max`.
/// Returns 0 when that exponent is out of reach.
pub fn nobuffer_capacity(c: &DelayConstraint, ev: &Evaluator) -> Result<f64, CapacityError> {
    let s = ev.scenario();
    let j0 = c.j0 * s.t_block;
    let mean = nobuffer_mean(ev)?;
    if j0 == 0.0 {
        return Ok(mean);
    }
    if !(mean > 0.0) {
        return Ok(0.0);
    }
    // A zero-rate atom caps the exponent at -ln Pr{C = 0}.
    let f = &s.fading;
    if let (Some(sd), Some(sr), Some(rd)) = (f.sd.atoms(), f.sr.atoms(), f.rd.atoms()) {
        let mut pts = Vec::new();
        for &(a, pa) in &sd {
            for &(b, pb) in &sr {
                for &(cc, pc) in &rd {
                    pts.push((pa * pb * pc, nobuffer_rate(s, a, b, cc)));
                }
            }
        }
        let min = pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        let pmin: f64 = pts
            .iter()
            .filter(|p| (p.1 - min).abs() <= 1e-12 * min.abs().max(1e-300))
            .map(|p| p.0)
            .sum();
        if min <= 0.0 && pmin > 0.0 && j0 >= -pmin.ln() {
            return Ok(if j0 == -pmin.ln() { min } else { 0.0 });
        }
    }
    let h = |t: f64| -> Result<f64, CapacityError> { Ok(nobuffer_exponent(t, ev)? - j0) };
    let lo = j0 / mean;
    let theta = match roots::increasing_root(
        h,
        lo,
        2.0 * lo,
        1e6 * lo.max(1e-300) + 1e3,
        RootOptions::with_rtol(1e-12),
    ) {
        Ok(t) => t,
        Err(CapacityError::Root(_)) => return Ok(0.0),
        Err(e) => return Err(e),
    };
    Ok(nobuffer_exponent(theta, ev)? / theta)
}
