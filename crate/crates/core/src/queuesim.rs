//! Block-level fluid simulation of the source and relay queues.
//!
//! Within a block the source receives `R` and serves `C_s` at constant rates,
//! so the cumulative departure curve is `D(n + t) = D(n) + min(C t, Q + R t)`.
//! Tagged fluid particles are located on the cumulative curves, which gives
//! their exit times without per-bit bookkeeping.

use crate::delay::DelayConstraint;
use crate::fading::{FadingError, Region, RelayPolicy, Scenario};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::VecDeque;
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error(transparent)]
    Fading(#[from] FadingError),
    #[error("trace output: {0}")]
    Trace(#[from] csv::Error),
    #[error("trace output: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// Constant arrival rate at the source, bits/block.
    pub rate: f64,
    pub horizon: usize,
    pub warmup: usize,
    pub seed: u64,
    /// Blocks between tagged particles.
    pub tag_period: usize,
    /// Keep per-block queue lengths after warmup.
    pub keep_traces: bool,
}

impl SimConfig {
    /// Warmup of 10% of the horizon, one tagged particle per block.
    pub fn new(rate: f64, horizon: usize, seed: u64) -> Self {
        Self {
            rate,
            horizon,
            warmup: horizon / 10,
            seed,
            tag_period: 1,
            keep_traces: false,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.rate >= 0.0) || !self.rate.is_finite() {
            return Err(SimError::Config(format!("rate = {}", self.rate)));
        }
        if self.horizon <= self.warmup {
            return Err(SimError::Config(format!(
                "horizon {} must exceed warmup {}",
                self.horizon, self.warmup
            )));
        }
        if self.tag_period == 0 {
            return Err(SimError::Config("tag_period must be positive".into()));
        }
        Ok(())
    }
}

/// Cumulative bit counts of one queue over the whole run.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Flow {
    pub arrived: f64,
    pub served: f64,
    pub backlog: f64,
}

impl Flow {
    /// `|arrived - served - backlog| / arrived`.
    pub fn imbalance(&self) -> f64 {
        if self.arrived == 0.0 {
            return (self.served + self.backlog).abs();
        }
        (self.arrived - self.served - self.backlog).abs() / self.arrived
    }
}

/// One tagged fluid particle; times in blocks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Particle {
    pub arrival: f64,
    pub source_exit: f64,
    /// Relay exit for relay-routed particles.
    pub relay_exit: Option<f64>,
    pub relay_entry_order: Option<u64>,
}

impl Particle {
    pub fn exit(&self) -> f64 {
        self.relay_exit.unwrap_or(self.source_exit)
    }

    pub fn delay_blocks(&self) -> f64 {
        self.exit() - self.arrival
    }
}

#[derive(Debug, Clone, Default)]
pub struct DelayStats {
    pub t_block: f64,
    pub horizon: usize,
    /// Finished particles in source-arrival order.
    pub particles: Vec<Particle>,
    /// Arrival times of particles still queued at the end of the run.
    pub unfinished: Vec<f64>,
    pub source: Flow,
    pub relay: Flow,
    /// Blocks with positive source departures, and those among them in Z.
    pub departure_blocks: usize,
    pub departure_blocks_z: usize,
    /// Queue lengths (bits) at the start of each post-warmup block.
    pub q1: Vec<f64>,
    pub q2: Vec<f64>,
}

impl DelayStats {
    /// End-to-end delays in seconds.
    pub fn delays(&self) -> Vec<f64> {
        self.particles
            .iter()
            .map(|p| p.delay_blocks() * self.t_block)
            .collect()
    }

    /// Number of particles with a known outcome for bound `d_max` (seconds).
    pub fn samples(&self, d_max: f64) -> usize {
        let d = d_max / self.t_block;
        self.particles.len()
            + self
                .unfinished
                .iter()
                .filter(|&&a| self.horizon as f64 - a > d)
                .count()
    }

    /// Empirical `Pr{D1 + D2 > d_max}`. Particles still queued count as
    /// violations once they have waited longer than `d_max`.
    pub fn violation(&self, d_max: f64) -> f64 {
        let d = d_max / self.t_block;
        let late_done = self
            .particles
            .iter()
            .filter(|p| p.delay_blocks() > d)
            .count();
        let late_open = self
            .unfinished
            .iter()
            .filter(|&&a| self.horizon as f64 - a > d)
            .count();
        let n = self.samples(d_max);
        if n == 0 {
            return f64::NAN;
        }
        (late_done + late_open) as f64 / n as f64
    }

    /// Fraction of source departures routed to the relay.
    pub fn routing_fraction(&self) -> f64 {
        self.departure_blocks_z as f64 / self.departure_blocks as f64
    }

    /// Backlog growth per block over the second half of the trace; clearly
    /// positive for an overloaded system.
    pub fn backlog_trend(&self) -> f64 {
        let n = self.q1.len();
        if n < 4 {
            return 0.0;
        }
        let h = n / 2;
        let q = |i: usize| self.q1[i] + self.q2[i];
        (q(n - 1) - q(h)) / (n - 1 - h) as f64
    }
}

/// Decay rate of `Pr{Q > q}` from a least-squares fit of its logarithm,
/// over thresholds between the median and the level exceeded by
/// `min_tail` of the samples.
pub fn tail_exponent(samples: &[f64], min_tail: f64) -> Option<f64> {
    let mut v: Vec<f64> = samples.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n < 100 {
        return None;
    }
    let lo = v[n / 2];
    let hi = v[((1.0 - min_tail) * n as f64) as usize];
    if !(hi > lo) {
        return None;
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for k in 0..=40 {
        let q = lo + (hi - lo) * k as f64 / 40.0;
        let above = n - v.partition_point(|&x| x <= q);
        if above == 0 {
            break;
        }
        xs.push(q);
        ys.push((above as f64 / n as f64).ln());
    }
    if xs.len() < 3 {
        return None;
    }
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Some(-sxy / sxx)
}

struct Pending {
    arrival: f64,
    /// Position on the cumulative curve of the queue the particle is in.
    position: f64,
    source_exit: f64,
    order: u64,
}

/// Time into the block at which the cumulative departure
/// `min(c t, q + a t)` reaches `y`.
fn crossing(y: f64, q: f64, a: f64, c: f64) -> f64 {
    if y <= 0.0 {
        return 0.0;
    }
    let tc = if c > 0.0 { y / c } else { f64::INFINITY };
    let ta = if a > 0.0 {
        (y - q) / a
    } else if y <= q {
        f64::NEG_INFINITY
    } else {
        f64::INFINITY
    };
    tc.max(ta).clamp(0.0, 1.0)
}

/// Runs the tandem queue. With `trace`, one CSV row per block is written.
pub fn simulate(
    s: &Scenario,
    policy: &RelayPolicy,
    cfg: &SimConfig,
    mut trace: Option<&mut dyn Write>,
) -> Result<DelayStats, SimError> {
    cfg.validate()?;
    s.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut writer = trace.as_mut().map(|w| csv::Writer::from_writer(w));
    if let Some(w) = writer.as_mut() {
        w.write_record([
            "block",
            "z_sd",
            "z_sr_tilde",
            "z_rd",
            "region",
            "C_s",
            "C_r",
            "Q1",
            "Q2",
        ])?;
    }
    let r = cfg.rate;
    let (mut q1, mut q2) = (0.0f64, 0.0f64);
    let (mut a2_cum, mut d1, mut d2) = (0.0f64, 0.0f64, 0.0f64);
    let mut src: VecDeque<Pending> = VecDeque::new();
    let mut rly: VecDeque<Pending> = VecDeque::new();
    let mut relay_seq = 0u64;
    let mut st = DelayStats {
        t_block: s.t_block,
        horizon: cfg.horizon,
        ..DelayStats::default()
    };
    let mut done: Vec<(u64, Particle)> = Vec::new();
    let mut tag_seq = 0u64;

    for n in 0..cfg.horizon {
        let z = s.sample_state(&mut rng);
        let (region, cs, cr) = policy.rates(&z, s);
        let nf = n as f64;
        if n >= cfg.warmup && (n - cfg.warmup) % cfg.tag_period == 0 {
            let u: f64 = rng.gen();
            src.push_back(Pending {
                arrival: nf + u,
                position: r * (nf + u),
                source_exit: f64::NAN,
                order: tag_seq,
            });
            tag_seq += 1;
        }
        if n >= cfg.warmup && cfg.keep_traces {
            st.q1.push(q1);
            st.q2.push(q2);
        }
        if let Some(w) = writer.as_mut() {
            w.write_record([
                n.to_string(),
                z.z_sd.to_string(),
                z.z_sr_tilde.to_string(),
                z.z_rd.to_string(),
                region.label().to_string(),
                cs.to_string(),
                cr.to_string(),
                q1.to_string(),
                q2.to_string(),
            ])?;
        }

        let served1 = (q1 + r).min(cs);
        let routed = region == Region::Z;
        if served1 > 0.0 {
            st.departure_blocks += 1;
            if routed {
                st.departure_blocks_z += 1;
            }
        }
        while let Some(p) = src.front() {
            if p.position > d1 + served1 {
                break;
            }
            let p = src.pop_front().unwrap();
            let exit = (nf + crossing(p.position - d1, q1, r, cs)).max(p.arrival);
            if routed {
                rly.push_back(Pending {
                    arrival: p.arrival,
                    position: a2_cum + (p.position - d1),
                    source_exit: exit,
                    order: p.order,
                });
                relay_seq += 1;
            } else {
                done.push((
                    p.order,
                    Particle {
                        arrival: p.arrival,
                        source_exit: exit,
                        relay_exit: None,
                        relay_entry_order: None,
                    },
                ));
            }
        }
        let a2 = if routed { served1 } else { 0.0 };
        let served2 = (q2 + a2).min(cr);
        while let Some(p) = rly.front() {
            if p.position > d2 + served2 {
                break;
            }
            let p = rly.pop_front().unwrap();
            let exit = (nf + crossing(p.position - d2, q2, a2, cr)).max(p.source_exit);
            let entry = relay_seq - rly.len() as u64 - 1;
            done.push((
                p.order,
                Particle {
                    arrival: p.arrival,
                    source_exit: p.source_exit,
                    relay_exit: Some(exit),
                    relay_entry_order: Some(entry),
                },
            ));
        }
        q1 = (q1 + r - served1).max(0.0);
        q2 = (q2 + a2 - served2).max(0.0);
        st.source.arrived += r;
        st.source.served += served1;
        st.relay.arrived += a2;
        st.relay.served += served2;
        a2_cum += a2;
        d1 += served1;
        d2 += served2;
    }
    if let Some(mut w) = writer {
        w.flush()?;
    }
    st.source.backlog = q1;
    st.relay.backlog = q2;
    done.sort_by_key(|(o, _)| *o);
    st.particles = done.into_iter().map(|(_, p)| p).collect();
    st.unfinished = src.iter().chain(rly.iter()).map(|p| p.arrival).collect();
    Ok(st)
}

/// Result of checking a capacity value against simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub capacity: f64,
    pub epsilon: f64,
    pub slack: f64,
    /// Test rates (bits/block) and their empirical violation probabilities.
    pub rates: Vec<f64>,
    pub violations: Vec<f64>,
    pub samples: Vec<usize>,
    pub monotone: bool,
    pub below_ok: bool,
    pub above_ok: bool,
    pub low_confidence: bool,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.monotone && self.below_ok && self.above_ok
    }
}

pub const VALIDATION_FACTORS: [f64; 4] = [0.85, 0.95, 1.05, 1.15];

/// Simulates at `0.85, 0.95, 1.05, 1.15` times `capacity` (bits/block) and
/// checks that the violation probability grows with the rate, stays within
/// `epsilon (1 + slack)` below capacity and exceeds `epsilon` above it.
pub fn validate_capacity(
    s: &Scenario,
    policy: &RelayPolicy,
    constraint: &DelayConstraint,
    capacity: f64,
    cfg: &SimConfig,
    slack: f64,
) -> Result<ValidationReport, SimError> {
    let mut rep = ValidationReport {
        capacity,
        epsilon: constraint.epsilon,
        slack,
        rates: Vec::new(),
        violations: Vec::new(),
        samples: Vec::new(),
        monotone: true,
        below_ok: true,
        above_ok: true,
        low_confidence: false,
    };
    for k in VALIDATION_FACTORS {
        let mut c = cfg.clone();
        c.rate = k * capacity;
        c.keep_traces = false;
        let st = simulate(s, policy, &c, None)?;
        let v = st.violation(constraint.d_max);
        let n = st.samples(constraint.d_max);
        if n < 10_000 {
            rep.low_confidence = true;
        }
        if let Some(&prev) = rep.violations.last() {
            if v < prev {
                rep.monotone = false;
            }
        }
        if k < 1.0 && v > constraint.epsilon * (1.0 + slack) {
            rep.below_ok = false;
        }
        if k > 1.0 && v <= constraint.epsilon {
            rep.above_ok = false;
        }
        rep.rates.push(c.rate);
        rep.violations.push(v);
        rep.samples.push(n);
    }
    Ok(rep)
}
