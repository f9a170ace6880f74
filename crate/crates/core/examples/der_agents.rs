//! EV and PV self-scheduling against a price signal, in the free mode used on
//! the first iteration and in the proximal mode used afterwards.

use dlmc::der::{project_box_disk, solve_ev_opt, solve_pv_opt, HourlyPQ, StepMode};
use dlmc::scenario::{EvParams, PvParams};

fn main() -> dlmc::Result<()> {
    let price_p = [42.0, 38.0, 30.0, 27.0, 26.0, 29.0, 35.0, 44.0];
    let price_q: Vec<f64> = price_p.iter().map(|c| 0.1 * c).collect();
    let horizon = price_p.len();

    let ev = EvParams { node: 4, window: (1..horizon).collect(), energy: 0.02, charger: 0.0066, inverter: 0.0072 };
    let free = solve_ev_opt(&price_p, &price_q, &HourlyPQ::zeros(horizon), StepMode::Free, &ev)?;
    let prox = solve_ev_opt(&price_p, &price_q, &free, StepMode::Proximal { sigma: 1e-4 }, &ev)?;
    println!("hour  price   free p     free q   proximal p");
    for t in 0..horizon {
        println!("{:4} {:6.1} {:9.5} {:9.5} {:10.5}", t + 1, price_p[t], free.p[t], free.q[t], prox.p[t]);
    }

    let pv = PvParams { node: 4, nameplate: 0.01, irradiance: vec![0.0, 0.1, 0.4, 0.8, 1.0, 0.7, 0.3, 0.0] };
    let out = solve_pv_opt(&price_p, &price_q, &HourlyPQ::zeros(horizon), StepMode::Free, &pv)?;
    println!("\nPV output (p, q) per hour:");
    for t in 0..horizon {
        println!("{:4} {:8.5} {:8.5}", t + 1, out.p[t], out.q[t]);
    }

    let (p, q) = project_box_disk(0.012, -0.004, 0.0, 0.0066, 0.0072)?;
    println!("\nprojection of (0.012, -0.004) onto the charger box and inverter disk: ({p:.5}, {q:.5})");
    Ok(())
}
