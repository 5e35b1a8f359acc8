//! Reference computations over finite-support channels, written from the
//! model definitions without touching the library's solver paths.
#![allow(dead_code)]

use relaycap::fading::{FadingSpec, LinkFading, Scenario};

#[derive(Debug, Clone, Copy)]
pub struct State {
    pub p: f64,
    pub cs: f64,
    pub cr: f64,
    pub z: bool,
}

fn atoms(l: &LinkFading) -> Vec<(f64, f64)> {
    match l {
        LinkFading::Discrete(a) => a.clone(),
        LinkFading::Constant(c) => vec![(*c, 1.0)],
        LinkFading::Rayleigh { .. } => panic!("finite support only"),
    }
}

pub fn discrete(
    sd: &[(f64, f64)],
    sr: &[(f64, f64)],
    rd: &[(f64, f64)],
    snr_s: f64,
    snr_r: f64,
) -> Scenario {
    Scenario {
        d: 0.5,
        alpha: 4.0,
        snr_s,
        snr_r,
        gamma: 1.0,
        t_block: 1e-3,
        bandwidth: 180e3,
        fading: FadingSpec {
            sd: LinkFading::Discrete(sd.to_vec()),
            sr: LinkFading::Discrete(sr.to_vec()),
            rd: LinkFading::Discrete(rd.to_vec()),
        },
    }
}

/// Every channel state with its rates, routing `z_sr/gamma > g(z_sd)` and
/// decoding order `z_rd > f(z_sd)`.
pub fn states(s: &Scenario, g: impl Fn(f64) -> f64, f: impl Fn(f64) -> f64) -> Vec<State> {
    let tb = s.t_block * s.bandwidth;
    let c = |x: f64| tb * (1.0 + x).log2();
    let mut out = Vec::new();
    for (a, pa) in atoms(&s.fading.sd) {
        for (b, pb) in atoms(&s.fading.sr) {
            let b = b / s.gamma;
            for (r, pr) in atoms(&s.fading.rd) {
                let p = pa * pb * pr;
                let st = if b > g(a) {
                    State {
                        p,
                        cs: c(s.snr_s * b),
                        cr: c(s.snr_r * r / (1.0 + s.snr_s * a)),
                        z: true,
                    }
                } else if r > f(a) {
                    State {
                        p,
                        cs: c(s.snr_s * a),
                        cr: c(s.snr_r * r / (1.0 + s.snr_s * a)),
                        z: false,
                    }
                } else {
                    State {
                        p,
                        cs: c(s.snr_s * a / (1.0 + s.snr_r * r)),
                        cr: c(s.snr_r * r),
                        z: false,
                    }
                };
                out.push(st);
            }
        }
    }
    out
}

/// Hypoexponential tail of the sum of two exponential delays.
pub fn violation(j1: f64, j2: f64, d: f64) -> f64 {
    if j1.is_infinite() {
        return (-j2 * d).exp();
    }
    if j2.is_infinite() {
        return (-j1 * d).exp();
    }
    if (j1 - j2).abs() < 1e-7 * j1.max(j2) {
        let j = 0.5 * (j1 + j2) * d;
        return (1.0 + j) * (-j).exp();
    }
    (j2 * (-j1 * d).exp() - j1 * (-j2 * d).exp()) / (j2 - j1)
}

/// Bisection for the `J2` that puts `(j1, J2)` on the violation boundary.
pub fn phi(j1: f64, eps: f64, d: f64) -> f64 {
    let j0 = -eps.ln() / d;
    let mut hi = 2.0 * j0.max(j1);
    while violation(j1, hi, d) > eps {
        hi *= 2.0;
        if hi > 1e300 {
            return f64::INFINITY;
        }
    }
    let mut lo = j0;
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if violation(j1, mid, d) > eps {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Symmetric exponent by bisection on `(1 + y) e^-y = eps`, `y = J d`.
pub fn j_threshold(eps: f64, d: f64) -> f64 {
    if eps >= 1.0 {
        return 0.0;
    }
    let (mut lo, mut hi) = (1e-300, 1.0f64);
    while (1.0 + hi) * (-hi).exp() > eps {
        hi *= 2.0;
    }
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if (1.0 + mid) * (-mid).exp() > eps {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi) / d
}

pub struct Oracle {
    pub st: Vec<State>,
}

impl Oracle {
    pub fn new(st: Vec<State>) -> Self {
        Self { st }
    }

    fn lse(&self, k: impl Fn(&State) -> f64) -> f64 {
        let m = self.st.iter().map(&k).fold(f64::NEG_INFINITY, f64::max);
        if m.is_infinite() {
            return m;
        }
        m + self
            .st
            .iter()
            .map(|s| s.p * (k(s) - m).exp())
            .sum::<f64>()
            .ln()
    }

    pub fn pz(&self) -> f64 {
        self.st.iter().filter(|s| s.z).map(|s| s.p).sum()
    }

    pub fn lc1(&self, t: f64) -> f64 {
        self.lse(|s| t * s.cs)
    }

    pub fn lc2(&self, t: f64) -> f64 {
        self.lse(|s| t * s.cr)
    }

    pub fn j1(&self, t: f64) -> f64 {
        -self.lc1(-t)
    }

    pub fn j2(&self, t: f64) -> f64 {
        -self.lc2(-t)
    }

    pub fn lp1(&self, t: f64) -> f64 {
        let pz = self.pz();
        if pz == 0.0 {
            return 0.0;
        }
        if t.is_infinite() {
            return t;
        }
        t + (pz + (1.0 - pz) * (-t).exp()).ln()
    }

    pub fn mean_cs(&self) -> f64 {
        self.st.iter().map(|s| s.p * s.cs).sum()
    }

    pub fn mean_cr(&self) -> f64 {
        self.st.iter().map(|s| s.p * s.cr).sum()
    }

    pub fn mean_csr_z(&self) -> f64 {
        self.st.iter().filter(|s| s.z).map(|s| s.p * s.cs).sum()
    }

    pub fn stable(&self) -> bool {
        self.mean_csr_z() < self.mean_cr()
    }

    pub fn min_cs(&self) -> f64 {
        self.st.iter().map(|s| s.cs).fold(f64::INFINITY, f64::min)
    }

    pub fn max_cs(&self) -> f64 {
        self.st
            .iter()
            .map(|s| s.cs)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_cr(&self) -> f64 {
        self.st.iter().map(|s| s.cr).fold(f64::INFINITY, f64::min)
    }

    pub fn max_cr(&self) -> f64 {
        self.st
            .iter()
            .map(|s| s.cr)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn sup(&self, min: f64, rate: impl Fn(&State) -> f64) -> f64 {
        let p: f64 = self
            .st
            .iter()
            .filter(|s| (rate(s) - min).abs() <= 1e-12 * min.abs().max(1e-300))
            .map(|s| s.p)
            .sum();
        if min > 0.0 {
            f64::INFINITY
        } else {
            -p.ln()
        }
    }

    pub fn sup_j1(&self) -> f64 {
        self.sup(self.min_cs(), |s| s.cs)
    }

    pub fn sup_j2(&self) -> f64 {
        self.sup(self.min_cr(), |s| s.cr)
    }

    /// `theta` with `j(theta) = target`; infinite past the supremum.
    fn invert(&self, target: f64, j: impl Fn(f64) -> f64, sup: f64) -> f64 {
        if target <= 0.0 {
            return 0.0;
        }
        if target >= sup {
            return f64::INFINITY;
        }
        let mut hi = 1e-9;
        while j(hi) < target {
            hi *= 2.0;
            if hi > 1e300 {
                return f64::INFINITY;
            }
        }
        let mut lo = 0.0;
        for _ in 0..400 {
            let mid = 0.5 * (lo + hi);
            if j(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * hi {
                break;
            }
        }
        0.5 * (lo + hi)
    }

    pub fn inv1(&self, j: f64) -> f64 {
        self.invert(j, |t| self.j1(t), self.sup_j1())
    }

    pub fn inv2(&self, j: f64) -> f64 {
        self.invert(j, |t| self.j2(t), self.sup_j2())
    }

    /// Effective bandwidth at `theta` of the source's relay-bound departures
    /// for a source running at exponent `theta_tilde`.
    pub fn lambda_a2(&self, theta: f64, theta_tilde: f64) -> f64 {
        let x = self.lp1(theta);
        self.departures(x, theta_tilde)
    }

    fn departures(&self, x: f64, tt: f64) -> f64 {
        if x == 0.0 {
            return 0.0;
        }
        if x.is_infinite() {
            return f64::INFINITY;
        }
        if tt.is_infinite() {
            return self.min_cs() * x;
        }
        let rate = self.j1(tt) / tt;
        if x <= tt {
            rate * x
        } else {
            self.j1(tt) + self.lc1(x - tt)
        }
    }

    /// Largest source rate meeting source exponent `j1` whose relay-bound
    /// traffic still fits relay exponent `j2`.
    pub fn supported(&self, j1: f64, j2: f64) -> f64 {
        let t1 = self.inv1(j1);
        let t2 = self.inv2(j2);
        let x = if t2.is_infinite() {
            if self.pz() > 0.0 {
                f64::INFINITY
            } else {
                0.0
            }
        } else {
            self.lp1(t2)
        };
        let fits = |tt: f64| self.departures(x, tt) <= j2 * (1.0 + 1e-13);
        let floor = || {
            if x > 0.0 {
                self.min_cs().min(j2 / x)
            } else {
                self.min_cs()
            }
        };
        if t1.is_infinite() {
            return floor();
        }
        if fits(t1) {
            return j1 / t1;
        }
        let mut hi = t1 * 2.0;
        let mut n = 0;
        while !fits(hi) {
            hi *= 2.0;
            n += 1;
            if n > 200 {
                return floor();
            }
        }
        let mut lo = t1;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if fits(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo <= 1e-14 * hi {
                break;
            }
        }
        self.j1(hi) / hi
    }

    /// Classification at the symmetric point: "I", "II" or "III", plus the
    /// degenerate variants under bounded support.
    pub fn case(&self, eps: f64, d: f64) -> &'static str {
        if !self.stable() {
            return "unstable";
        }
        if eps >= 1.0 {
            return "I";
        }
        let jth = j_threshold(eps, d);
        let j0 = -eps.ln() / d;
        let t1 = self.inv1(jth);
        let x = self.lp1(self.inv2(jth));
        if (t1 - x).abs() <= 1e-8 * t1.max(x) {
            "I"
        } else if t1 > x {
            if self.min_cr() >= self.max_cs() {
                "II-degenerate"
            } else {
                "II"
            }
        } else {
            let x0 = self.lp1(self.inv2(j0));
            if self.min_cs() >= j0 / x0 {
                "III-degenerate"
            } else {
                "III"
            }
        }
    }

    /// Maximum supported rate over the constraint boundary: 400 grid points
    /// in `J1`, both endpoints, and a golden-section polish around the best.
    pub fn capacity(&self, eps: f64, d: f64) -> f64 {
        if !self.stable() {
            return 0.0;
        }
        if eps >= 1.0 {
            let pz = self.pz();
            return if pz > 0.0 {
                self.mean_cs().min(self.mean_cr() / pz)
            } else {
                self.mean_cs()
            };
        }
        let j0 = -eps.ln() / d;
        let jth = j_threshold(eps, d);
        let sup = self.sup_j1();
        let mut grid = Vec::with_capacity(400);
        for k in 0..200 {
            grid.push(j0 + (jth - j0) * 10f64.powf(-10.0 * k as f64 / 199.0));
        }
        for k in 1..=200 {
            let q = k as f64 / 200.0;
            let j = if sup.is_finite() {
                jth + (sup - jth) * (1.0 - 10f64.powf(-12.0 * q))
            } else {
                jth * 10f64.powf(8.0 * q)
            };
            grid.push(j);
        }
        grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let rate = |j1: f64| {
            if j1 >= sup {
                return 0.0;
            }
            self.supported(j1, phi(j1, eps, d))
        };
        let vals: Vec<f64> = grid.iter().map(|&j| rate(j)).collect();
        let (mut best, mut bi) = (0.0, 0);
        for (i, &v) in vals.iter().enumerate() {
            if v > best {
                best = v;
                bi = i;
            }
        }
        if bi > 0 && bi + 1 < grid.len() {
            let (mut a, mut b) = (grid[bi - 1], grid[bi + 1]);
            let gr = 0.5 * (5f64.sqrt() - 1.0);
            for _ in 0..80 {
                let c = b - gr * (b - a);
                let e = a + gr * (b - a);
                if rate(c) >= rate(e) {
                    b = e;
                } else {
                    a = c;
                }
            }
            best = best.max(rate(0.5 * (a + b)));
        }
        // Source exponent unbounded: the relay alone at J0.
        if sup.is_infinite() {
            best = best.max(self.supported(f64::INFINITY, j0));
        }
        // Relay exponent unbounded: the source alone at J0.
        let t10 = self.inv1(j0);
        if self.pz() == 0.0 || self.min_cr() >= self.max_cs() {
            best = best.max(j0 / t10);
        }
        best
    }
}

/// Oracle for max-channel-gain routing with decoding threshold `lambda * z_sd`.
pub fn mcg_oracle(s: &Scenario, lambda: f64) -> Oracle {
    Oracle::new(states(s, |z| z, |z| lambda * z))
}

/// A random two-atom-per-link system with its constraint: `(scenario,
/// epsilon, d_max in seconds, lambda)`.
pub fn random_system<R: rand::Rng>(rng: &mut R) -> (Scenario, f64, f64, f64) {
    let link = |rng: &mut R| {
        let g = |rng: &mut R| 10f64.powf(rng.gen_range(-1.5..1.3));
        let p: f64 = rng.gen_range(0.2..0.8);
        vec![(g(rng), p), (g(rng), 1.0 - p)]
    };
    let sd = link(rng);
    let sr = link(rng);
    let rd = link(rng);
    let snr_r = 10f64.powf(rng.gen_range(-0.5..1.5));
    let eps = 10f64.powf(rng.gen_range(-3.0..-0.3));
    let d_max = 10f64.powf(rng.gen_range(-2.3..0.0));
    let lambda = rng.gen_range(0.0..2.0);
    (discrete(&sd, &sr, &rd, 1.0, snr_r), eps, d_max, lambda)
}
