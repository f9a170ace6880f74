//! Top-oil temperature over a day for a 45 kVA transformer under a loading
//! profile, with the hot spot, aging factor and loss of life per hour.

use dlmc::gen::{ambient_profile, thermal_params};
use dlmc::thermal::{aging_factor, degradation_value, temperature_trajectory};
use dlmc::units::PerUnitBase;

fn main() -> dlmc::Result<()> {
    let ambient = ambient_profile();
    let mean = ambient.iter().sum::<f64>() / ambient.len() as f64;
    let params = thermal_params(45.0, &PerUnitBase::default(), mean)?;

    let rated = (0.045f64).powi(2);
    let loading: Vec<f64> = (0..24).map(|t| if (17..22).contains(&t) { 1.4 } else { 0.6 }).collect();
    let current_sq: Vec<f64> = loading.iter().map(|k| k * k * rated).collect();
    let zeta = params.zeta(&ambient);
    let traj = temperature_trajectory(params.h0, &current_sq, &zeta, params.delta, params.epsilon)?;

    println!("hour  load  top-oil  hot-spot  aging  loss of life (h)");
    let mut total = 0.0;
    for t in 0..24 {
        let h = traj.h[t + 1];
        let hot = params.hot_spot(h, current_sq[t]);
        let d = degradation_value(h, current_sq[t], &params.segments);
        total += d;
        println!("{:4} {:5.2} {:8.2} {:9.2} {:6.3} {:9.4}", t + 1, loading[t], h, hot, aging_factor(hot), d);
    }
    println!("day: {total:.3} hours of life, final top oil {:.2} C (closed form {:.2} C)", traj.h[24], traj.closed_form_final);
    Ok(())
}
