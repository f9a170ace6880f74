mod common;

use common::{ev_oracle, random_ev, sampled_distance};
use dlmc::conic::{ClarabelEngine, SolverTolerances};
use dlmc::der::{project_box_disk, solve_ev_opt, solve_pv_opt, HourlyPQ, StepMode};
use dlmc::scenario::PvParams;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn projection_matches_dense_sampling_on_1000_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..1000 {
        let c: f64 = rng.gen_range(0.05..2.0);
        let lo: f64 = rng.gen_range(-c..0.8 * c);
        let hi: f64 = rng.gen_range(lo..1.2 * c);
        let p0: f64 = rng.gen_range(-3.0..3.0);
        let q0: f64 = rng.gen_range(-3.0..3.0);
        let (p, q) = project_box_disk(p0, q0, lo, hi, c).unwrap();
        assert!(p >= lo.max(-c) - 1e-12 && p <= hi.min(c) + 1e-12, "case {case}: p outside box");
        assert!(p * p + q * q <= c * c * (1.0 + 1e-12), "case {case}: outside disk");
        let d = (p - p0).hypot(q - q0);
        let (sampled, spacing) = sampled_distance(p0, q0, lo, hi, c, 120);
        assert!(d <= sampled + 1e-12, "case {case}: sample point closer ({sampled} < {d})");
        assert!(d >= sampled - spacing, "case {case}: projection {d} far below sampled {sampled}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn projection_is_nonexpansive(
        a in (-3.0f64..3.0, -3.0f64..3.0),
        b in (-3.0f64..3.0, -3.0f64..3.0),
        c in 0.05f64..2.0,
        lo_frac in -1.0f64..0.9,
        width_frac in 0.0f64..1.0,
    ) {
        let lo = lo_frac * c;
        let hi = lo + width_frac * (c - lo);
        let pa = project_box_disk(a.0, a.1, lo, hi, c).unwrap();
        let pb = project_box_disk(b.0, b.1, lo, hi, c).unwrap();
        let before = (a.0 - b.0).hypot(a.1 - b.1);
        let after = (pa.0 - pb.0).hypot(pa.1 - pb.1);
        prop_assert!(after <= before + 1e-12);
    }

    #[test]
    fn projection_is_idempotent(p0 in -3.0f64..3.0, q0 in -3.0f64..3.0, c in 0.05f64..2.0) {
        let once = project_box_disk(p0, q0, 0.0, c, c).unwrap();
        let twice = project_box_disk(once.0, once.1, 0.0, c, c).unwrap();
        prop_assert!((once.0 - twice.0).abs() < 1e-15 && (once.1 - twice.1).abs() < 1e-15);
    }
}

#[test]
fn ev_proximal_step_matches_conic_oracle_on_200_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let tight = SolverTolerances { feasibility: 1e-11, gap_abs: 1e-12, gap_rel: 1e-12, ..SolverTolerances::default() };
    let engine = ClarabelEngine::new(tight);
    let mut worst: f64 = 0.0;
    for case in 0..200 {
        let inst = random_ev(&mut rng);
        let ours = solve_ev_opt(&inst.price_p, &inst.price_q, &inst.prev, StepMode::Proximal { sigma: inst.sigma }, &inst.ev).unwrap();
        let (p, q) = ev_oracle(&inst, &engine);
        for t in 0..p.len() {
            let dev = (ours.p[t] - p[t]).abs().max((ours.q[t] - q[t]).abs());
            worst = worst.max(dev);
            assert!(dev <= 1e-6, "case {case} hour {t}: ours ({}, {}) vs oracle ({}, {})", ours.p[t], ours.q[t], p[t], q[t]);
        }
    }
    assert!(worst <= 1e-6);
}

#[test]
fn ev_free_step_is_no_worse_than_any_proximal_point() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..200 {
        let inst = random_ev(&mut rng);
        let cost = |s: &HourlyPQ| -> f64 { (0..s.p.len()).map(|t| inst.price_p[t] * s.p[t] + inst.price_q[t] * s.q[t]).sum() };
        let free = solve_ev_opt(&inst.price_p, &inst.price_q, &inst.prev, StepMode::Free, &inst.ev).unwrap();
        let prox = solve_ev_opt(&inst.price_p, &inst.price_q, &inst.prev, StepMode::Proximal { sigma: inst.sigma }, &inst.ev).unwrap();
        assert!(cost(&free) <= cost(&prox) + 1e-9);
        assert!((free.p.iter().sum::<f64>() - inst.ev.energy).abs() <= 1e-9);
    }
}

#[test]
fn pv_stays_within_availability_and_nameplate() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..200 {
        let horizon = 6;
        let pv = PvParams { node: 2, nameplate: rng.gen_range(0.002..0.02), irradiance: (0..horizon).map(|_| rng.gen_range(0.0f64..1.0).max(0.0)).collect() };
        let lp: Vec<f64> = (0..horizon).map(|_| rng.gen_range(-10.0..60.0)).collect();
        let lq: Vec<f64> = (0..horizon).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let prev = HourlyPQ::zeros(horizon);
        for mode in [StepMode::Free, StepMode::Proximal { sigma: 1e-3 }] {
            let s = solve_pv_opt(&lp, &lq, &prev, mode, &pv).unwrap();
            for t in 0..horizon {
                assert!(s.p[t] >= -1e-15 && s.p[t] <= pv.available(t) + 1e-12);
                assert!(s.p[t].hypot(s.q[t]) <= pv.nameplate * (1.0 + 1e-12));
            }
        }
    }
}
