mod common;

use common::*;
use rand::SeedableRng;
use relaycap::capacity::{
    check_stability, invert_exponent, limit_capacity_eps1, upper_bound_rate, Which,
};
use relaycap::mgf::{self, arrival_lmgf_relay, lambda_p1};
use relaycap::*;

const T: f64 = 1e-3;

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    (a - b).abs() / b.abs().max(1e-300)
}

fn case_three() -> Scenario {
    discrete(
        &[
            (0.23326091539394841, 0.5153784437695192),
            (4.118742585903985, 0.48462155623048075),
        ],
        &[
            (0.17437398504498752, 0.236778226451999),
            (0.5095757191678435, 0.763221773548001),
        ],
        &[
            (0.39274425318111256, 0.5252403273941203),
            (0.10911629850476942, 0.4747596726058797),
        ],
        1.0,
        1.3314416378371108,
    )
}

const A_EPS: f64 = 0.09369506829633507;
const A_DMAX: f64 = 0.43411845134577526;
const A_LAMBDA: f64 = 0.44692477818700604;

fn solve(s: &Scenario, lambda: f64, eps: f64, d_max: f64) -> CapacityResult {
    let ev = Evaluator::new(s, Engine::exact()).unwrap();
    let c = DelayConstraint::new(eps, d_max).unwrap();
    effective_capacity(&mcg_policy(lambda), &c, &ev).unwrap()
}

#[test]
fn random_systems_match_enumeration() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    for _ in 0..40 {
        let (s, eps, d_max, lambda) = random_system(&mut rng);
        let ev = Evaluator::new(&s, Engine::exact()).unwrap();
        let pol = mcg_policy(lambda);
        let o = mcg_oracle(&s, lambda);
        assert_eq!(o.st.len(), 8);
        let pz = mgf::prob_z(&pol, &ev).unwrap();
        assert!((pz - o.pz()).abs() < 1e-12);
        for t in [1e-4, 3e-3, 0.05] {
            assert!(rel(mgf::j1(t, &pol, &ev).unwrap(), o.j1(t)) < 1e-9);
            assert!(rel(mgf::j2(t, &pol, &ev).unwrap(), o.j2(t)) < 1e-9);
            for tt in [1e-4, 2e-2] {
                let rate = o.j1(tt) / tt;
                let lib = arrival_lmgf_relay(t, rate, tt, pz, &pol, &ev).unwrap();
                assert!(rel(lib, o.lambda_a2(t, tt)) < 1e-9);
            }
        }
        assert_eq!(check_stability(&pol, &ev).unwrap(), o.stable());
        let c = DelayConstraint::new(eps, d_max).unwrap();
        let r = effective_capacity(&pol, &c, &ev).unwrap();
        let d = d_max / T;
        assert_eq!(r.case.as_str(), o.case(eps, d));
        let oc = o.capacity(eps, d);
        if oc == 0.0 {
            assert_eq!(r.rate, 0.0);
            continue;
        }
        assert!(rel(r.rate, oc) < 5e-3, "{} vs {}", r.rate, oc);
        let p = &r.point;
        let ub = o.j1(p.theta1) / p.theta1;
        let ub = if p.theta2.is_finite() && o.pz() > 0.0 {
            ub.min(o.j2(p.theta2) / o.lp1(p.theta2))
        } else {
            ub
        };
        assert!(rel(upper_bound_rate(p), ub) < 5e-3);
        assert!(r.rate <= upper_bound_rate(p) * (1.0 + 1e-9));
    }
}

#[test]
fn every_branch_is_reached() {
    let mut seen = std::collections::HashSet::new();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let (s, eps, d_max, lambda) = random_system(&mut rng);
        seen.insert(solve(&s, lambda, eps, d_max).case);
    }
    for c in [
        CaseLabel::II,
        CaseLabel::IIDegenerate,
        CaseLabel::III,
        CaseLabel::IIIDegenerate,
        CaseLabel::Unstable,
    ] {
        assert!(seen.contains(&c), "{c} not reached");
    }

    let r = solve(&case_three(), A_LAMBDA, A_EPS, A_DMAX);
    assert_eq!(r.case, CaseLabel::III);
    assert!(rel(r.rate, 172.32234) < 1e-6);

    let mut s = case_three();
    s.snr_r = 1.7733574914791115;
    let r = solve(&s, A_LAMBDA, A_EPS, A_DMAX);
    assert_eq!(r.case, CaseLabel::I);
    assert!(rel(r.rate, mcg_oracle(&s, A_LAMBDA).capacity(A_EPS, A_DMAX / T)) < 5e-3);

    let s = discrete(
        &[(82.29844793803657, 0.5), (227.82100842262344, 0.5)],
        &[
            (0.9849812872362422, 0.7783501625182336),
            (828.5652324267897, 0.2216498374817663),
        ],
        &[
            (0.0014178854349442174, 0.4745502727847137),
            (14.732842933326657, 0.5254497272152863),
        ],
        1.0,
        7.822513757126969,
    );
    let (eps, d_max) = (0.00040581291983736613, 0.009308363308598824);
    let r = solve(&s, 1000.0, eps, d_max);
    assert_eq!(r.case, CaseLabel::IIIDegenerate);
    assert!(rel(r.rate, 86.347988) < 1e-6);
    assert!(rel(r.rate, mcg_oracle(&s, 1000.0).capacity(eps, d_max / T)) < 5e-3);
}

#[test]
fn tighter_constraints_never_help() {
    let s = case_three();
    let mut prev = 0.0;
    for eps in [1e-4, 1e-3, 1e-2, 0.05, 0.2, 0.6, 1.0] {
        let r = solve(&s, A_LAMBDA, eps, A_DMAX).rate;
        assert!(r >= prev * (1.0 - 1e-9), "eps {eps}: {r} < {prev}");
        prev = r;
    }
    let mut prev = 0.0;
    for d_max in [0.01, 0.03, 0.1, 0.3, 1.0, 3.0] {
        let r = solve(&s, A_LAMBDA, A_EPS, d_max).rate;
        assert!(r >= prev * (1.0 - 1e-9), "d_max {d_max}: {r} < {prev}");
        prev = r;
    }
}

#[test]
fn exponent_inversion_round_trips() {
    let s = case_three();
    let ev = Evaluator::new(&s, Engine::exact()).unwrap();
    let pol = mcg_policy(A_LAMBDA);
    for j in [1e-5, 1e-3, 0.05, 0.3] {
        let t = invert_exponent(j, Which::J1, &pol, &ev).unwrap();
        assert!(rel(mgf::j1(t, &pol, &ev).unwrap(), j) < 1e-10);
        let t = invert_exponent(j, Which::J2, &pol, &ev).unwrap();
        assert!(rel(mgf::j2(t, &pol, &ev).unwrap(), j) < 1e-10);
    }
    assert_eq!(invert_exponent(0.0, Which::J1, &pol, &ev).unwrap(), 0.0);
}

#[test]
fn loose_constraint_reaches_mean_limit() {
    let s = case_three();
    let ev = Evaluator::new(&s, Engine::exact()).unwrap();
    let pol = mcg_policy(A_LAMBDA);
    let lim = limit_capacity_eps1(&pol, &ev).unwrap();
    let o = mcg_oracle(&s, A_LAMBDA);
    assert!(rel(lim, o.mean_cs().min(o.mean_cr() / o.pz())) < 1e-12);
    assert!(rel(solve(&s, A_LAMBDA, 1.0, A_DMAX).rate, lim) < 1e-9);
    assert!(rel(solve(&s, A_LAMBDA, 1.0 - 1e-4, 100.0).rate, lim) < 1e-2);
}

#[test]
fn unstable_relay_gives_zero() {
    let s = discrete(&[(0.1, 1.0)], &[(50.0, 1.0)], &[(0.01, 1.0)], 1.0, 1.0);
    let r = solve(&s, 1.0, 0.05, 0.1);
    assert_eq!(r.case, CaseLabel::Unstable);
    assert_eq!(r.rate, 0.0);
}

#[test]
fn routing_lmgf_limits() {
    for pz in [0.0, 0.1, 0.5, 1.0] {
        assert_eq!(lambda_p1(0.0, pz), 0.0);
        for t in [1e-6, 0.3, 5.0, 60.0] {
            assert!(lambda_p1(t, pz) <= t * (1.0 + 1e-15));
        }
    }
    assert!(rel(lambda_p1(80.0, 0.25), 80.0 + 0.25f64.ln()) < 1e-12);
}
