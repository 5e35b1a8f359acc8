//! Channel model: block-fading gains, routing/decoding regions and the
//! per-block service rates of the source and relay queues.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FadingError {
    #[error("Rayleigh mean power must be positive and finite, got {0}")]
    RayleighMean(f64),
    #[error("discrete fading needs at least one atom")]
    EmptyDiscrete,
    #[error("discrete gain {0} must be finite and >= 0")]
    DiscreteGain(f64),
    #[error("discrete probability {0} must lie in [0, 1]")]
    DiscreteProb(f64),
    #[error("discrete probabilities sum to {0}, expected 1")]
    DiscreteSum(f64),
    #[error("constant gain {0} must be finite and >= 0")]
    ConstantGain(f64),
    #[error("invalid scenario: {0}")]
    Scenario(String),
}

/// Power gains of the three links in one block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelState {
    pub z_sd: f64,
    /// Source-relay gain already divided by the self-interference factor.
    pub z_sr_tilde: f64,
    pub z_rd: f64,
}

impl ChannelState {
    pub fn new(z_sd: f64, z_sr_tilde: f64, z_rd: f64) -> Self {
        Self {
            z_sd,
            z_sr_tilde,
            z_rd,
        }
    }

    pub fn is_valid(&self) -> bool {
        [self.z_sd, self.z_sr_tilde, self.z_rd]
            .iter()
            .all(|z| z.is_finite() && *z >= 0.0)
    }
}

/// Distribution of a single link's power gain.
#[derive(Debug, Clone, PartialEq)]
pub enum LinkFading {
    /// Exponentially distributed power gain with the given mean.
    Rayleigh {
        mean: f64,
    },
    /// Finite support: `(gain, probability)` pairs.
    Discrete(Vec<(f64, f64)>),
    Constant(f64),
}

impl LinkFading {
    pub fn validate(&self) -> Result<(), FadingError> {
        match self {
            LinkFading::Rayleigh { mean } => {
                if !(*mean > 0.0 && mean.is_finite()) {
                    return Err(FadingError::RayleighMean(*mean));
                }
            }
            LinkFading::Discrete(atoms) => {
                if atoms.is_empty() {
                    return Err(FadingError::EmptyDiscrete);
                }
                let mut sum = 0.0;
                for &(z, p) in atoms {
                    if !(z >= 0.0 && z.is_finite()) {
                        return Err(FadingError::DiscreteGain(z));
                    }
                    if !(0.0..=1.0).contains(&p) {
                        return Err(FadingError::DiscreteProb(p));
                    }
                    sum += p;
                }
                if (sum - 1.0).abs() > 1e-12 {
                    return Err(FadingError::DiscreteSum(sum));
                }
            }
            LinkFading::Constant(c) => {
                if !(*c >= 0.0 && c.is_finite()) {
                    return Err(FadingError::ConstantGain(*c));
                }
            }
        }
        Ok(())
    }

    pub fn is_continuous(&self) -> bool {
        matches!(self, LinkFading::Rayleigh { .. })
    }

    /// Atoms with positive probability, for finite-support links.
    pub fn atoms(&self) -> Option<Vec<(f64, f64)>> {
        match self {
            LinkFading::Rayleigh { .. } => None,
            LinkFading::Discrete(a) => Some(a.iter().copied().filter(|&(_, p)| p > 0.0).collect()),
            LinkFading::Constant(c) => Some(vec![(*c, 1.0)]),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            LinkFading::Rayleigh { mean } => *mean,
            LinkFading::Discrete(a) => a.iter().map(|&(z, p)| z * p).sum(),
            LinkFading::Constant(c) => *c,
        }
    }

    /// Smallest and largest gain in the support.
    pub fn support(&self) -> (f64, f64) {
        match self {
            LinkFading::Rayleigh { .. } => (0.0, f64::INFINITY),
            _ => {
                let atoms = self.atoms().unwrap_or_default();
                let lo = atoms.iter().map(|a| a.0).fold(f64::INFINITY, f64::min);
                let hi = atoms.iter().map(|a| a.0).fold(f64::NEG_INFINITY, f64::max);
                (lo, hi)
            }
        }
    }

    /// `Pr{lo < z <= hi}`.
    pub fn prob_in(&self, lo: f64, hi: f64) -> f64 {
        if !(hi > lo) {
            return 0.0;
        }
        match self {
            LinkFading::Rayleigh { mean } => {
                let upper = if lo <= 0.0 { 1.0 } else { (-lo / mean).exp() };
                let lower = if hi.is_infinite() {
                    0.0
                } else if hi <= 0.0 {
                    1.0
                } else {
                    (-hi / mean).exp()
                };
                (upper - lower).max(0.0)
            }
            _ => self
                .atoms()
                .unwrap_or_default()
                .iter()
                .filter(|&&(z, _)| z > lo && z <= hi)
                .map(|&(_, p)| p)
                .sum(),
        }
    }

    /// Gains scaled by `factor`.
    pub fn scaled(&self, factor: f64) -> LinkFading {
        match self {
            LinkFading::Rayleigh { mean } => LinkFading::Rayleigh {
                mean: mean * factor,
            },
            LinkFading::Discrete(a) => {
                LinkFading::Discrete(a.iter().map(|&(z, p)| (z * factor, p)).collect())
            }
            LinkFading::Constant(c) => LinkFading::Constant(c * factor),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            LinkFading::Rayleigh { mean } => {
                Exp::new(1.0 / mean).expect("validated mean").sample(rng)
            }
            LinkFading::Discrete(atoms) => {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                for &(z, p) in atoms {
                    acc += p;
                    if u < acc {
                        return z;
                    }
                }
                atoms
                    .iter()
                    .rev()
                    .find(|a| a.1 > 0.0)
                    .map(|a| a.0)
                    .unwrap_or(0.0)
            }
            LinkFading::Constant(c) => *c,
        }
    }
}

/// Independent fading on the three links. `sr` describes the raw
/// source-relay gain, before self-interference normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct FadingSpec {
    pub sd: LinkFading,
    pub sr: LinkFading,
    pub rd: LinkFading,
}

impl FadingSpec {
    pub fn validate(&self) -> Result<(), FadingError> {
        self.sd.validate()?;
        self.sr.validate()?;
        self.rd.validate()
    }

    pub fn is_finite_support(&self) -> bool {
        !(self.sd.is_continuous() || self.sr.is_continuous() || self.rd.is_continuous())
    }
}

/// Physical and channel parameters of the relay system.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub d: f64,
    pub alpha: f64,
    pub snr_s: f64,
    pub snr_r: f64,
    pub gamma: f64,
    /// Block duration in seconds.
    pub t_block: f64,
    /// Bandwidth in Hz.
    pub bandwidth: f64,
    pub fading: FadingSpec,
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

impl Scenario {
    /// Rayleigh links with path loss set by the relay position `d`:
    /// unit mean on the direct link, `d^-alpha` and `(1-d)^-alpha` on the hops.
    pub fn rayleigh(d: f64, alpha: f64, snr_s: f64, snr_r: f64) -> Result<Self, FadingError> {
        if !(d > 0.0 && d < 1.0) {
            return Err(FadingError::Scenario(format!("d = {d} must lie in (0, 1)")));
        }
        let s = Scenario {
            d,
            alpha,
            snr_s,
            snr_r,
            gamma: 1.0,
            t_block: 1e-3,
            bandwidth: 180e3,
            fading: FadingSpec {
                sd: LinkFading::Rayleigh { mean: 1.0 },
                sr: LinkFading::Rayleigh {
                    mean: d.powf(-alpha),
                },
                rd: LinkFading::Rayleigh {
                    mean: (1.0 - d).powf(-alpha),
                },
            },
        };
        s.validate()?;
        Ok(s)
    }

    /// The evaluation preset: alpha = 4, 0 dB source SNR, 1 ms blocks, 180 kHz.
    pub fn preset(d: f64, snr_r_db: f64) -> Result<Self, FadingError> {
        Self::rayleigh(d, 4.0, 1.0, db_to_linear(snr_r_db))
    }

    pub fn with_fading(mut self, fading: FadingSpec) -> Result<Self, FadingError> {
        self.fading = fading;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), FadingError> {
        let tb = self.tb();
        if !(tb > 0.0 && tb.is_finite()) {
            return Err(FadingError::Scenario(format!(
                "T*B = {tb} must be positive"
            )));
        }
        if !(self.snr_s > 0.0 && self.snr_s.is_finite()) {
            return Err(FadingError::Scenario(format!(
                "snr_s = {} must be positive",
                self.snr_s
            )));
        }
        if !(self.snr_r > 0.0 && self.snr_r.is_finite()) {
            return Err(FadingError::Scenario(format!(
                "snr_r = {} must be positive",
                self.snr_r
            )));
        }
        if !(self.gamma >= 1.0 && self.gamma.is_finite()) {
            return Err(FadingError::Scenario(format!(
                "gamma = {} must be >= 1",
                self.gamma
            )));
        }
        self.fading.validate()
    }

    /// Bits per block per unit of log2 spectral efficiency.
    pub fn tb(&self) -> f64 {
        self.t_block * self.bandwidth
    }

    /// Distribution of the normalized source-relay gain.
    pub fn sr_tilde(&self) -> LinkFading {
        self.fading.sr.scaled(1.0 / self.gamma)
    }

    fn log2_1p(&self, x: f64) -> f64 {
        self.tb() * x.ln_1p() / std::f64::consts::LN_2
    }

    /// Source to relay rate.
    pub fn rate_sr(&self, z_sr_tilde: f64) -> f64 {
        self.log2_1p(self.snr_s * z_sr_tilde)
    }

    /// Source to destination rate, relay signal removed first.
    pub fn rate_sd(&self, z_sd: f64) -> f64 {
        self.log2_1p(self.snr_s * z_sd)
    }

    /// Source to destination rate with the relay signal as interference.
    pub fn rate_sd_int(&self, z_sd: f64, z_rd: f64) -> f64 {
        self.log2_1p(self.snr_s * z_sd / (1.0 + self.snr_r * z_rd))
    }

    /// Relay to destination rate with the source signal as interference.
    pub fn rate_rd_int(&self, z_rd: f64, z_sd: f64) -> f64 {
        self.log2_1p(self.snr_r * z_rd / (1.0 + self.snr_s * z_sd))
    }

    /// Relay to destination rate, source signal removed first.
    pub fn rate_rd(&self, z_rd: f64) -> f64 {
        self.log2_1p(self.snr_r * z_rd)
    }

    /// One independent draw of all three gains.
    pub fn sample_state<R: Rng + ?Sized>(&self, rng: &mut R) -> ChannelState {
        let z_sd = self.fading.sd.sample(rng);
        let z_sr = self.fading.sr.sample(rng);
        let z_rd = self.fading.rd.sample(rng);
        ChannelState::new(z_sd, z_sr / self.gamma, z_rd)
    }
}

/// A threshold function `z_sd -> t(z_sd)`.
#[derive(Clone)]
pub enum Threshold {
    /// `k * z_sd`.
    Linear(f64),
    /// Never exceeded.
    Infinite,
    /// Tabulated function.
    Table(Arc<ThresholdTable>),
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl Threshold {
    pub fn eval(&self, z_sd: f64) -> f64 {
        match self {
            Threshold::Linear(k) => {
                if *k == 0.0 {
                    0.0
                } else {
                    k * z_sd
                }
            }
            Threshold::Infinite => f64::INFINITY,
            Threshold::Table(t) => t.eval(z_sd),
            Threshold::Custom(f) => f(z_sd),
        }
    }
}

impl fmt::Debug for Threshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Threshold::Linear(k) => write!(f, "Linear({k})"),
            Threshold::Infinite => write!(f, "Infinite"),
            Threshold::Table(t) => write!(f, "Table({} nodes)", t.len()),
            Threshold::Custom(_) => write!(f, "Custom"),
        }
    }
}

/// Tabulated threshold: exact values at listed atoms, and a monotone cubic
/// interpolant of `t(z)/z` over `ln z` between grid nodes. Outside the grid
/// the ratio is held at its end values unless a fallback is present.
pub struct ThresholdTable {
    atoms: Vec<(f64, f64)>,
    ln_z: Vec<f64>,
    ratio: Vec<f64>,
    slopes: Vec<f64>,
    fallback: Option<Box<dyn Fn(f64) -> f64 + Send + Sync>>,
}

impl ThresholdTable {
    /// `atoms` are `(z, t(z))` pairs looked up exactly; `grid` are `(z, t(z))`
    /// pairs with `z > 0`, sorted ascending, used for interpolation.
    pub fn new(
        atoms: Vec<(f64, f64)>,
        grid: Vec<(f64, f64)>,
        fallback: Option<Box<dyn Fn(f64) -> f64 + Send + Sync>>,
    ) -> Self {
        let mut atoms = atoms;
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let ln_z: Vec<f64> = grid.iter().map(|p| p.0.ln()).collect();
        let ratio: Vec<f64> = grid.iter().map(|p| p.1 / p.0).collect();
        let slopes = pchip_slopes(&ln_z, &ratio);
        Self {
            atoms,
            ln_z,
            ratio,
            slopes,
            fallback,
        }
    }

    pub fn len(&self) -> usize {
        self.atoms.len() + self.ln_z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn eval(&self, z: f64) -> f64 {
        if z <= 0.0 {
            return 0.0;
        }
        if let Ok(i) = self.atoms.binary_search_by(|a| a.0.total_cmp(&z)) {
            return self.atoms[i].1;
        }
        let n = self.ln_z.len();
        if n == 0 {
            return self.fallback.as_ref().map(|f| f(z)).unwrap_or(f64::NAN);
        }
        let x = z.ln();
        if x < self.ln_z[0] || x > self.ln_z[n - 1] {
            if let Some(f) = &self.fallback {
                return f(z);
            }
            let r = if x < self.ln_z[0] {
                self.ratio[0]
            } else {
                self.ratio[n - 1]
            };
            return r * z;
        }
        if n == 1 {
            return self.ratio[0] * z;
        }
        let i = match self.ln_z.binary_search_by(|v| v.total_cmp(&x)) {
            Ok(i) => return self.ratio[i] * z,
            Err(i) => i - 1,
        };
        let h = self.ln_z[i + 1] - self.ln_z[i];
        let t = (x - self.ln_z[i]) / h;
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        let r = h00 * self.ratio[i]
            + h10 * h * self.slopes[i]
            + h01 * self.ratio[i + 1]
            + h11 * h * self.slopes[i + 1];
        r * z
    }
}

/// Fritsch-Carlson slopes for a shape-preserving cubic Hermite interpolant.
fn pchip_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n < 2 {
        return vec![0.0; n];
    }
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
    let mut m = vec![0.0; n];
    if n == 2 {
        m[0] = delta[0];
        m[1] = delta[0];
        return m;
    }
    for i in 1..n - 1 {
        if delta[i - 1] * delta[i] > 0.0 {
            let w1 = 2.0 * h[i] + h[i - 1];
            let w2 = h[i] + 2.0 * h[i - 1];
            m[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
        }
    }
    let end = |h0: f64, h1: f64, d0: f64, d1: f64| {
        let s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
        if s * d0 <= 0.0 {
            0.0
        } else if d0 * d1 <= 0.0 && s.abs() > 3.0 * d0.abs() {
            3.0 * d0
        } else {
            s
        }
    };
    m[0] = end(h[0], h[1], delta[0], delta[1]);
    m[n - 1] = end(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    m
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PolicyKind {
    Mcg,
    /// Max-delay-exponent threshold instantiated at this source exponent (1/bit).
    Mde {
        theta1: f64,
    },
    FixedFunction,
}

/// Which link carries the source's data in a block, and the destination's
/// decoding order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Region {
    /// Routed to the relay.
    Z,
    /// Direct; relay signal decoded first.
    ZcZ0,
    /// Direct; source signal decoded first.
    ZcZ0c,
}

impl Region {
    pub fn label(self) -> &'static str {
        match self {
            Region::Z => "Z",
            Region::ZcZ0 => "ZcZ0",
            Region::ZcZ0c => "ZcZ0c",
        }
    }
}

/// Routing threshold `g` on `z_sr_tilde` and decoding threshold `f` on `z_rd`.
#[derive(Debug, Clone)]
pub struct RelayPolicy {
    pub g: Threshold,
    pub f: Threshold,
    pub kind: PolicyKind,
}

impl RelayPolicy {
    /// Max channel gain routing with decoding threshold `f(z_sd) = lambda * z_sd`.
    pub fn mcg(lambda: f64) -> Self {
        Self {
            g: Threshold::Linear(1.0),
            f: Threshold::Linear(lambda),
            kind: PolicyKind::Mcg,
        }
    }

    pub fn fixed(g: Threshold, f: Threshold) -> Self {
        Self {
            g,
            f,
            kind: PolicyKind::FixedFunction,
        }
    }

    pub fn in_region_z(&self, z: &ChannelState) -> bool {
        z.z_sr_tilde > self.g.eval(z.z_sd)
    }

    pub fn in_region_z0(&self, z: &ChannelState) -> bool {
        z.z_rd > self.f.eval(z.z_sd)
    }

    pub fn region(&self, z: &ChannelState) -> Region {
        if self.in_region_z(z) {
            Region::Z
        } else if self.in_region_z0(z) {
            Region::ZcZ0
        } else {
            Region::ZcZ0c
        }
    }

    pub fn service_rate_source(&self, z: &ChannelState, s: &Scenario) -> f64 {
        match self.region(z) {
            Region::Z => s.rate_sr(z.z_sr_tilde),
            Region::ZcZ0 => s.rate_sd(z.z_sd),
            Region::ZcZ0c => s.rate_sd_int(z.z_sd, z.z_rd),
        }
    }

    pub fn service_rate_relay(&self, z: &ChannelState, s: &Scenario) -> f64 {
        match self.region(z) {
            Region::Z | Region::ZcZ0 => s.rate_rd_int(z.z_rd, z.z_sd),
            Region::ZcZ0c => s.rate_rd(z.z_rd),
        }
    }

    /// Region and both rates for one state.
    pub fn rates(&self, z: &ChannelState, s: &Scenario) -> (Region, f64, f64) {
        let region = self.region(z);
        let (cs, cr) = match region {
            Region::Z => (s.rate_sr(z.z_sr_tilde), s.rate_rd_int(z.z_rd, z.z_sd)),
            Region::ZcZ0 => (s.rate_sd(z.z_sd), s.rate_rd_int(z.z_rd, z.z_sd)),
            Region::ZcZ0c => (s.rate_sd_int(z.z_sd, z.z_rd), s.rate_rd(z.z_rd)),
        };
        (region, cs, cr)
    }
}
