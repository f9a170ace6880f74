//! Helpers shared by the property suites and the acceptance run.
#![allow(dead_code)]

use dlmc::conic::{Affine, ClarabelEngine, ConeTag, ConicProgram, ConicSolver, RowTag};
use dlmc::der::HourlyPQ;
use dlmc::gen::{generate_feeder, generate_fleet, GeneratorSpec};
use dlmc::scenario::{Case, EvParams};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn desk() -> Case {
    let spec = GeneratorSpec::desk(42);
    let model = generate_feeder(&spec).unwrap();
    let fleet = generate_fleet(&spec, &model).unwrap();
    Case::new(model, fleet).unwrap()
}

/// Smallest squared distance from `(p0, q0)` to a dense sample of the set:
/// an interior grid plus the arc and both vertical edges.
pub fn sampled_distance(p0: f64, q0: f64, lo: f64, hi: f64, c: f64, n: usize) -> (f64, f64) {
    let (lo, hi) = (lo.max(-c), hi.min(c));
    let mut best = f64::INFINITY;
    let mut take = |p: f64, q: f64| {
        if p >= lo && p <= hi && p * p + q * q <= c * c {
            best = best.min((p - p0).powi(2) + (q - q0).powi(2));
        }
    };
    for i in 0..=n {
        let p = lo + (hi - lo) * i as f64 / n as f64;
        for k in 0..=n {
            take(p, -c + 2.0 * c * k as f64 / n as f64);
        }
        let h = (c * c - p * p).max(0.0).sqrt();
        take(p, h);
        take(p, -h);
    }
    for i in 0..=8 * n {
        let a = std::f64::consts::TAU * i as f64 / (8 * n) as f64;
        take(c * a.cos(), c * a.sin());
    }
    for edge in [lo, hi] {
        let h = (c * c - edge * edge).max(0.0).sqrt();
        for k in 0..=4 * n {
            take(edge, -h + 2.0 * h * k as f64 / (4 * n) as f64);
        }
    }
    let spacing = ((hi - lo) / n as f64).max(2.0 * c / n as f64).max(std::f64::consts::TAU * c / (8 * n) as f64);
    (best.sqrt(), spacing)
}

pub struct EvInstance {
    pub ev: EvParams,
    pub price_p: Vec<f64>,
    pub price_q: Vec<f64>,
    pub prev: HourlyPQ,
    pub sigma: f64,
}

pub fn random_ev(rng: &mut ChaCha8Rng) -> EvInstance {
    let horizon = 8;
    let mut window: Vec<usize> = (0..horizon).filter(|_| rng.gen_bool(0.6)).collect();
    if window.is_empty() {
        window.push(rng.gen_range(0..horizon));
    }
    let charger: f64 = rng.gen_range(0.02..0.2);
    let inverter = charger * rng.gen_range(0.8..1.6);
    let cap = charger.min(inverter);
    let energy = rng.gen_range(0.05f64..0.95) * cap * window.len() as f64;
    let price_p: Vec<f64> = (0..horizon).map(|_| rng.gen_range(-5.0..60.0)).collect();
    let price_q: Vec<f64> = (0..horizon).map(|_| rng.gen_range(-3.0..6.0)).collect();
    let prev = HourlyPQ {
        p: (0..horizon).map(|_| rng.gen_range(0.0..cap)).collect(),
        q: (0..horizon).map(|_| rng.gen_range(-0.5 * cap..0.5 * cap)).collect(),
    };
    EvInstance {
        ev: EvParams { node: 1, window, energy, charger, inverter },
        price_p,
        price_q,
        prev,
        sigma: 10f64.powf(rng.gen_range(-4.0..-2.0)),
    }
}

/// The EV proximal step written directly as a conic program.
pub fn ev_oracle(inst: &EvInstance, engine: &ClarabelEngine) -> (Vec<f64>, Vec<f64>) {
    let horizon = inst.price_p.len();
    let ev = &inst.ev;
    let mut prog = ConicProgram::new();
    let mut p = vec![None; horizon];
    let mut q = vec![None; horizon];
    let mut energy = Affine::constant(-ev.energy);
    for &t in &ev.window {
        let pv = prog.add_var(format!("p{t}"), Some(0.0), Some(ev.max_rate()));
        let qv = prog.add_var(format!("q{t}"), None, None);
        let dp = prog.add_var(format!("dp{t}"), None, None);
        let dq = prog.add_var(format!("dq{t}"), None, None);
        prog.add_eq(Affine::var(dp).term(pv, -1.0).plus(inst.prev.p[t]), RowTag::Other);
        prog.add_eq(Affine::var(dq).term(qv, -1.0).plus(inst.prev.q[t]), RowTag::Other);
        prog.add_cost(pv, inst.price_p[t]);
        prog.add_cost(qv, inst.price_q[t]);
        prog.add_quadratic_cost(dp, 0.5 / inst.sigma);
        prog.add_quadratic_cost(dq, 0.5 / inst.sigma);
        prog.add_soc(Affine::constant(ev.inverter), vec![Affine::var(pv), Affine::var(qv)], ConeTag::Inverter);
        energy = energy.term(pv, 1.0);
        p[t] = Some(pv);
        q[t] = Some(qv);
    }
    prog.add_eq(energy, RowTag::EvEnergy { ev: 0 });
    let sol = engine.solve(&prog).unwrap();
    let read = |v: &Vec<Option<_>>| v.iter().map(|x| x.map_or(0.0, |id| sol.value(id))).collect();
    (read(&p), read(&q))
}

