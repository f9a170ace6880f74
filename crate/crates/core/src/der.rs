//! EV and PV self-scheduling against nodal prices.
//!
//! Both subproblems are separable per hour (EVs up to their energy
//! requirement, handled by a scalar multiplier), so each hour reduces to a
//! Euclidean projection onto a box-disk intersection. Prices passed here are
//! in $ per p.u.-hour.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::opf::{DlmcSchedule, NodalInjections};
use crate::scenario::{EvParams, PvParams, Scenario};

/// Real and reactive setpoints of one resource, per hour (p.u.).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourlyPQ {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

impl HourlyPQ {
    pub fn zeros(horizon: usize) -> Self {
        HourlyPQ { p: vec![0.0; horizon], q: vec![0.0; horizon] }
    }

    /// Largest absolute change in any setpoint.
    pub fn max_change(&self, other: &HourlyPQ) -> f64 {
        self.p.iter().zip(&other.p).chain(self.q.iter().zip(&other.q)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

/// Setpoints of the whole fleet. EV entries consume, PV entries provide.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerSchedule {
    pub iteration: usize,
    pub ev: Vec<HourlyPQ>,
    pub pv: Vec<HourlyPQ>,
}

impl DerSchedule {
    pub fn max_change(&self, other: &DerSchedule) -> f64 {
        self.ev
            .iter()
            .zip(&other.ev)
            .chain(self.pv.iter().zip(&other.pv))
            .map(|(a, b)| a.max_change(b))
            .fold(0.0, f64::max)
    }

    pub fn empty(scenario: &Scenario) -> Self {
        let h = scenario.horizon;
        DerSchedule { iteration: 0, ev: vec![HourlyPQ::zeros(h); scenario.evs.len()], pv: vec![HourlyPQ::zeros(h); scenario.pvs.len()] }
    }
}

/// How a subproblem treats the previous iterate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepMode {
    /// Pure price response without the proximal term.
    Free,
    /// Proximal response with weight `1/(2σ)` on the squared change.
    Proximal { sigma: f64 },
}

/// Proximal weight schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProximalConfig {
    pub sigma: f64,
    /// Solve the first iteration in [`StepMode::Free`].
    pub free_first: bool,
    pub shrink: f64,
    pub floor: f64,
}

impl Default for ProximalConfig {
    fn default() -> Self {
        ProximalConfig { sigma: 1e-4, free_first: true, shrink: 2.0 / 3.0, floor: 1e-7 }
    }
}

/// Euclidean projection of `(p0, q0)` onto `{lo ≤ p ≤ hi, p² + q² ≤ c²}`.
///
/// The projection lies at the point itself, on the arc (radial scaling) or on
/// one of the two vertical edges; every candidate is enumerated and the
/// nearest feasible one returned.
pub fn project_box_disk(p0: f64, q0: f64, lo: f64, hi: f64, c: f64) -> Result<(f64, f64)> {
    let hi = hi.min(c);
    let lo = lo.max(-c);
    if !(c >= 0.0) || lo > hi {
        return Err(Error::Infeasible(format!("empty box-disk set: p in [{lo}, {hi}] with radius {c}")));
    }
    let feasible = |p: f64, q: f64| p >= lo && p <= hi && p * p + q * q <= c * c * (1.0 + 1e-15) + 1e-300;
    if feasible(p0, q0) {
        return Ok((p0, q0));
    }
    let mut best = (f64::INFINITY, (lo, 0.0));
    let mut consider = |p: f64, q: f64| {
        if feasible(p, q) {
            let d = (p - p0).powi(2) + (q - q0).powi(2);
            if d < best.0 {
                best = (d, (p, q));
            }
        }
    };
    let r = p0.hypot(q0);
    if r > 0.0 {
        consider(p0 * c / r, q0 * c / r);
    }
    for edge in [lo, hi] {
        let h = (c * c - edge * edge).max(0.0).sqrt();
        consider(edge, q0.clamp(-h, h));
    }
    consider(c.min(hi), 0.0);
    Ok(best.1)
}

/// PV response for one hour: maximize `λp·p + λq·q` over its feasible set,
/// less the proximal term in proximal mode.
fn pv_hour(lp: f64, lq: f64, prev: (f64, f64), avail: f64, c: f64, mode: StepMode) -> Result<(f64, f64)> {
    match mode {
        StepMode::Proximal { sigma } => project_box_disk(prev.0 + sigma * lp, prev.1 + sigma * lq, 0.0, avail, c),
        StepMode::Free => {
            if lp == 0.0 && lq == 0.0 {
                return Ok(prev);
            }
            if lp <= 0.0 {
                return Ok((0.0, if lq == 0.0 { 0.0 } else { c.copysign(lq) }));
            }
            let norm = lp.hypot(lq);
            let (p, q) = (c * lp / norm, c * lq / norm);
            if p <= avail {
                Ok((p, q))
            } else {
                let h = (c * c - avail * avail).max(0.0).sqrt();
                Ok((avail, if lq == 0.0 { 0.0 } else { h.copysign(lq) }))
            }
        }
    }
}

/// PV self-scheduling over the horizon. Hours without sun are zero.
pub fn solve_pv_opt(price_p: &[f64], price_q: &[f64], prev: &HourlyPQ, mode: StepMode, pv: &PvParams) -> Result<HourlyPQ> {
    let horizon = pv.irradiance.len();
    let mut out = HourlyPQ::zeros(horizon);
    for t in 0..horizon {
        if !pv.is_sunny(t) {
            continue;
        }
        let (p, q) = pv_hour(price_p[t], price_q[t], (prev.p[t], prev.q[t]), pv.available(t), pv.nameplate, mode)?;
        out.p[t] = p;
        out.q[t] = q;
    }
    Ok(out)
}

/// Free-mode EV real power for one hour at multiplier `mu`: the minimizer of
/// `(λp+μ)·p − |λq|·√(C_e² − p²)` on `[0, cap]`, or `None` on an exact tie.
fn ev_free_p(lp: f64, lq: f64, mu: f64, cap: f64, ce: f64, tie_tol: f64) -> Option<f64> {
    let slope = lp + mu;
    if lq == 0.0 {
        if slope > tie_tol {
            Some(0.0)
        } else if slope < -tie_tol {
            Some(cap)
        } else {
            None
        }
    } else {
        if slope >= 0.0 {
            return Some(0.0);
        }
        let s = -slope / lq.abs();
        Some((ce * s / (1.0 + s * s).sqrt()).min(cap))
    }
}

/// Free-mode reactive setpoint: the rest of the inverter disk, against the price.
fn ev_free_q(p: f64, lq: f64, ce: f64) -> f64 {
    if lq == 0.0 {
        0.0
    } else {
        -(ce * ce - p * p).max(0.0).sqrt().copysign(lq)
    }
}

/// Nudges `p` so the hourly total meets `target` exactly, keeping every hour
/// inside `[0, cap]` and the disk.
fn polish(p: &mut [f64], q: &mut [f64], hours: &[usize], target: f64, cap: f64, ce: f64) {
    for _ in 0..8 {
        let residual = target - hours.iter().map(|&t| p[t]).sum::<f64>();
        if residual.abs() <= 1e-14 {
            break;
        }
        let room: Vec<usize> = hours
            .iter()
            .copied()
            .filter(|&t| if residual > 0.0 { p[t] < cap } else { p[t] > 0.0 })
            .collect();
        if room.is_empty() {
            break;
        }
        let share = residual / room.len() as f64;
        for &t in &room {
            p[t] = (p[t] + share).clamp(0.0, cap);
            let h = (ce * ce - p[t] * p[t]).max(0.0).sqrt();
            q[t] = q[t].clamp(-h, h);
        }
    }
}

/// Splits `amount` across tied hours as evenly as the cap allows.
fn water_fill(p: &mut [f64], ties: &[usize], mut amount: f64, cap: f64) {
    let mut open: Vec<usize> = ties.to_vec();
    while amount > 1e-15 && !open.is_empty() {
        let share = amount / open.len() as f64;
        let mut next = Vec::new();
        for &t in &open {
            let add = share.min(cap - p[t]);
            p[t] += add;
            amount -= add;
            if p[t] < cap {
                next.push(t);
            }
        }
        if next.len() == open.len() {
            break;
        }
        open = next;
    }
}

/// EV self-scheduling: minimize `Σ λp·p + λq·q` (plus the proximal term) subject
/// to delivering exactly the energy requirement within the plug window.
pub fn solve_ev_opt(price_p: &[f64], price_q: &[f64], prev: &HourlyPQ, mode: StepMode, ev: &EvParams) -> Result<HourlyPQ> {
    let horizon = price_p.len();
    if price_q.len() != horizon || prev.p.len() != horizon {
        return Err(Error::Dimension("EV price and schedule lengths differ".into()));
    }
    ev.check(horizon)?;
    let hours = &ev.window;
    let cap = ev.max_rate();
    let ce = ev.inverter;
    let target = ev.energy;
    let mut out = HourlyPQ::zeros(horizon);
    if hours.is_empty() {
        return Ok(out);
    }
    let lmax = hours.iter().map(|&t| price_p[t].abs()).fold(0.0, f64::max);
    let pmax = hours.iter().map(|&t| prev.p[t].abs() + prev.q[t].abs()).fold(0.0, f64::max);

    match mode {
        StepMode::Proximal { sigma } => {
            if !(sigma > 0.0) {
                return Err(Error::Invalid(format!("proximal weight must be positive, got {sigma}")));
            }
            let eval = |mu: f64, out: &mut HourlyPQ| -> Result<f64> {
                let mut s = 0.0;
                for &t in hours {
                    let (p, q) = project_box_disk(prev.p[t] - sigma * (price_p[t] + mu), prev.q[t] - sigma * price_q[t], 0.0, cap, ce)?;
                    out.p[t] = p;
                    out.q[t] = q;
                    s += p;
                }
                Ok(s)
            };
            let width = lmax + (2.0 * cap + pmax) / sigma;
            let (mut lo, mut hi) = (-width, width);
            let mut expansions = 0;
            while eval(lo, &mut out)? < target - 1e-12 {
                lo *= 4.0;
                expansions += 1;
                if expansions > 60 {
                    return Err(Error::NonConvergence(format!("EV at node {}: multiplier bracket does not reach the requirement", ev.node)));
                }
            }
            while eval(hi, &mut out)? > target + 1e-12 {
                hi *= 4.0;
                expansions += 1;
                if expansions > 120 {
                    return Err(Error::NonConvergence(format!("EV at node {}: multiplier bracket does not reach zero charging", ev.node)));
                }
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                let s = eval(mid, &mut out)?;
                if (s - target).abs() <= 1e-13 || hi - lo <= 1e-15 * (1.0 + mid.abs()) {
                    break;
                }
                if s > target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let HourlyPQ { p, q } = &mut out;
            polish(p, q, hours, target, cap, ce);
        }
        StepMode::Free => {
            let lqmin = hours.iter().map(|&t| price_q[t].abs()).filter(|&x| x > 0.0).fold(f64::INFINITY, f64::min);
            let width = 2.0 * lmax + 1.0 + if lqmin.is_finite() { 1e3 * lqmin.max(1.0) } else { 0.0 };
            let tie_tol = 1e-10 * (1.0 + lmax);
            let total = |mu: f64| -> f64 {
                hours
                    .iter()
                    .map(|&t| ev_free_p(price_p[t], price_q[t], mu, cap, ce, 0.0).unwrap_or(0.0))
                    .sum()
            };
            let (mut lo, mut hi) = (-width, width);
            let mut guard = 0;
            while total(lo) < target - 1e-12 && guard < 60 {
                lo *= 4.0;
                guard += 1;
            }
            while total(hi) > target + 1e-12 && guard < 120 {
                hi *= 4.0;
                guard += 1;
            }
            for _ in 0..300 {
                let mid = 0.5 * (lo + hi);
                if hi - lo <= 1e-15 * (1.0 + mid.abs()) {
                    break;
                }
                if total(mid) >= target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let mu = 0.5 * (lo + hi);
            let mut ties = Vec::new();
            let mut assigned = 0.0;
            for &t in hours {
                match ev_free_p(price_p[t], price_q[t], mu, cap, ce, tie_tol) {
                    Some(p) => {
                        out.p[t] = p;
                        assigned += p;
                    }
                    None => ties.push(t),
                }
            }
            if !ties.is_empty() {
                let remaining = target - assigned;
                if remaining < 0.0 {
                    for &t in &ties {
                        out.p[t] = 0.0;
                    }
                } else {
                    water_fill(&mut out.p, &ties, remaining, cap);
                }
            }
            for &t in hours {
                out.q[t] = ev_free_q(out.p[t], price_q[t], ce);
            }
            let HourlyPQ { p, q } = &mut out;
            polish(p, q, hours, target, cap, ce);
        }
    }
    let residual = (out.p.iter().sum::<f64>() - target).abs();
    if residual > 1e-9 {
        return Err(Error::NonConvergence(format!("EV at node {}: energy residual {residual:.3e}", ev.node)));
    }
    Ok(out)
}

/// Sums fleet setpoints into nodal net consumption (EV draw minus PV output).
pub fn aggregate_to_nodes(scenario: &Scenario, schedule: &DerSchedule, nodes: usize) -> NodalInjections {
    let mut inj = NodalInjections::zeros(nodes, scenario.horizon);
    for (ev, s) in scenario.evs.iter().zip(&schedule.ev) {
        for t in 0..scenario.horizon {
            inj.p[ev.node][t] += s.p[t];
            inj.q[ev.node][t] += s.q[t];
        }
    }
    for (pv, s) in scenario.pvs.iter().zip(&schedule.pv) {
        for t in 0..scenario.horizon {
            inj.p[pv.node][t] -= s.p[t];
            inj.q[pv.node][t] -= s.q[t];
        }
    }
    inj
}

/// Runs every DER subproblem in parallel against the nodal prices.
/// `dlmc` is in $/MWh; `pu_hour_mwh` converts it to $ per p.u.-hour.
pub fn solve_all(scenario: &Scenario, dlmc: &DlmcSchedule, pu_hour_mwh: f64, prev: &DerSchedule, mode: StepMode) -> Result<DerSchedule> {
    let scale = |row: &[f64]| -> Vec<f64> { row.iter().map(|x| x * pu_hour_mwh).collect() };
    let ev = scenario
        .evs
        .par_iter()
        .zip(&prev.ev)
        .map(|(e, prev)| solve_ev_opt(&scale(&dlmc.p[e.node]), &scale(&dlmc.q[e.node]), prev, mode, e))
        .collect::<Result<Vec<_>>>()?;
    let pv = scenario
        .pvs
        .par_iter()
        .zip(&prev.pv)
        .map(|(s, prev)| solve_pv_opt(&scale(&dlmc.p[s.node]), &scale(&dlmc.q[s.node]), prev, mode, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(DerSchedule { iteration: prev.iteration + 1, ev, pv })
}

#[cfg(test)]
mod tests {
    use super::*;

    const C: f64 = 0.01;

    #[test]
    fn interior_point_unchanged() {
        assert_eq!(project_box_disk(0.3 * C, 0.2 * C, 0.0, C, C).unwrap(), (0.3 * C, 0.2 * C));
    }

    #[test]
    fn clamp_then_disk() {
        let (p, q) = project_box_disk(2.0 * C, 0.0, 0.0, C, C).unwrap();
        assert!((p - C).abs() < 1e-15 && q.abs() < 1e-15);
    }

    #[test]
    fn radial_projection() {
        let (p, q) = project_box_disk(C, C, 0.0, C, C).unwrap();
        let s = C / 2f64.sqrt();
        assert!((p - s).abs() < 1e-15 && (q - s).abs() < 1e-15);
    }

    #[test]
    fn empty_set_is_error() {
        assert!(project_box_disk(0.0, 0.0, 2.0 * C, 3.0 * C, C).is_err());
    }

    fn ev(window: Vec<usize>, energy: f64, charger: f64, inverter: f64) -> EvParams {
        EvParams { node: 1, window, energy, charger, inverter }
    }

    #[test]
    fn free_ev_fills_cheapest_hour() {
        let e = ev(vec![0, 1], 5.0, 4.0, 100.0);
        let s = solve_ev_opt(&[10.0, 20.0], &[0.0, 0.0], &HourlyPQ::zeros(2), StepMode::Free, &e).unwrap();
        assert!((s.p[0] - 4.0).abs() < 1e-12 && (s.p[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn flat_prices_split_uniformly() {
        let e = ev(vec![0, 1, 2, 3], 0.02, 0.01, 0.012);
        let free = solve_ev_opt(&[30.0; 4], &[0.0; 4], &HourlyPQ::zeros(4), StepMode::Free, &e).unwrap();
        assert!(free.p.iter().all(|p| (p - 0.005).abs() < 1e-12));
        let prev = HourlyPQ { p: vec![0.005; 4], q: vec![0.0; 4] };
        let prox = solve_ev_opt(&[30.0; 4], &[0.0; 4], &prev, StepMode::Proximal { sigma: 1e-4 }, &e).unwrap();
        assert!(prox.p.iter().all(|p| (p - 0.005).abs() < 1e-12));
    }

    #[test]
    fn pv_free_mode_rules() {
        let pv = PvParams { node: 1, nameplate: C, irradiance: vec![0.8] };
        let s = solve_pv_opt(&[-3.0], &[1.0], &HourlyPQ::zeros(1), StepMode::Free, &pv).unwrap();
        assert_eq!(s.p[0], 0.0);
        let s = solve_pv_opt(&[0.0], &[2.0], &HourlyPQ::zeros(1), StepMode::Free, &pv).unwrap();
        assert!((s.q[0] - C).abs() < 1e-15);
    }

    #[test]
    fn zero_prices_keep_previous_pv() {
        let pv = PvParams { node: 1, nameplate: C, irradiance: vec![0.8] };
        let prev = HourlyPQ { p: vec![0.004], q: vec![-0.003] };
        let s = solve_pv_opt(&[0.0], &[0.0], &prev, StepMode::Proximal { sigma: 1e-4 }, &pv).unwrap();
        assert_eq!(s, prev);
    }

    #[test]
    fn aggregation_cancels() {
        let scenario = Scenario {
            horizon: 1,
            price_p: vec![1.0],
            price_q: vec![0.1],
            ambient: vec![20.0],
            evs: vec![ev(vec![0], 0.01, 0.02, 0.02)],
            pvs: vec![PvParams { node: 1, nameplate: 0.02, irradiance: vec![1.0] }],
        };
        let sched = DerSchedule {
            iteration: 0,
            ev: vec![HourlyPQ { p: vec![0.01], q: vec![0.0] }],
            pv: vec![HourlyPQ { p: vec![0.01], q: vec![0.0] }],
        };
        let inj = aggregate_to_nodes(&scenario, &sched, 2);
        assert_eq!(inj.p[1][0], 0.0);
        let empty = aggregate_to_nodes(&Scenario { evs: vec![], pvs: vec![], ..scenario.clone() }, &DerSchedule::empty(&Scenario { evs: vec![], pvs: vec![], ..scenario }), 2);
        assert!(empty.p.iter().flatten().all(|&x| x == 0.0));
    }
}
