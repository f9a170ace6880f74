//! Transformer top-oil temperature dynamics and piecewise-linear loss of life.
//!
//! The top-oil temperature follows `h_t = δ·h_{t−1} + ε·l_t + ζ_t` and the
//! hourly loss of life is the epigraph `D_t ≥ max_m(α_m·h_t + β_m·l_t + γ_m)`,
//! `D_t ≥ 0`. Both are emitted as conic-program rows for the OPF and exposed
//! as plain evaluators for testing.

use serde::{Deserialize, Serialize};

use crate::conic::{Affine, ConicProgram, RowTag, VarId};
use crate::error::{Error, Result};

/// Top-oil persistence for an hourly step.
pub const DEFAULT_DELTA: f64 = 0.75;

/// Initial hot-spot breakpoints (°C) for the degradation linearization.
pub const INITIAL_BREAKPOINTS: [f64; 8] = [100.0, 105.0, 110.0, 115.0, 120.0, 130.0, 140.0, 150.0];

/// Reference hot-spot temperature (°C) at which the aging factor is 1.
pub const REFERENCE_HOT_SPOT: f64 = 110.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegradationSegment {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl DegradationSegment {
    pub fn value(&self, h: f64, l: f64) -> f64 {
        self.alpha * h + self.beta * l + self.gamma
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformerThermalParams {
    pub segments: Vec<DegradationSegment>,
    pub delta: f64,
    /// °C per squared p.u. current.
    pub epsilon: f64,
    /// No-load top-oil rise over ambient (°C); with the ambient series it fixes ζ.
    pub ambient_rise: f64,
    /// Initial top-oil temperature (°C).
    pub h0: f64,
    /// $ per hour of life lost.
    pub cost_per_hour: f64,
    /// Hot-spot gradient (°C per squared p.u. current). Needed to regenerate segments.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hotspot_gain: Option<f64>,
    /// Hot-spot breakpoints the segments were generated from, if known.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub breakpoints: Vec<f64>,
}

impl TransformerThermalParams {
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.segments.is_empty() {
            out.push("degradation needs at least one segment".to_string());
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            out.push(format!("delta must lie in (0,1), got {}", self.delta));
        }
        if self.segments.windows(2).any(|w| w[1].alpha < w[0].alpha) {
            out.push("segment slopes alpha must be nondecreasing".to_string());
        }
        if !(self.epsilon >= 0.0) {
            out.push("epsilon must be nonnegative".to_string());
        }
        if !(self.cost_per_hour >= 0.0) {
            out.push("degradation cost must be nonnegative".to_string());
        }
        out
    }

    /// Hourly drive `ζ_t = (1−δ)·(ambient_t + ambient_rise)`.
    pub fn zeta(&self, ambient: &[f64]) -> Vec<f64> {
        ambient.iter().map(|a| (1.0 - self.delta) * (a + self.ambient_rise)).collect()
    }

    pub fn hot_spot(&self, h: f64, l: f64) -> f64 {
        h + self.hotspot_gain.unwrap_or(0.0) * l
    }
}

/// Top-oil trajectory `h_0..=h_T` plus the closed-form end value for cross-checks.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub h: Vec<f64>,
    pub closed_form_final: f64,
}

pub fn temperature_trajectory(
    h0: f64,
    current_sq: &[f64],
    zeta: &[f64],
    delta: f64,
    epsilon: f64,
) -> Result<Trajectory> {
    if current_sq.len() != zeta.len() {
        return Err(Error::Dimension(format!(
            "current series has {} hours, drive has {}",
            current_sq.len(),
            zeta.len()
        )));
    }
    let mut h = Vec::with_capacity(zeta.len() + 1);
    h.push(h0);
    for (l, z) in current_sq.iter().zip(zeta) {
        let prev = *h.last().unwrap();
        h.push(delta * prev + epsilon * l + z);
    }
    let horizon = zeta.len() as i32;
    let closed = delta.powi(horizon) * h0
        + current_sq
            .iter()
            .zip(zeta)
            .enumerate()
            .map(|(t, (l, z))| delta.powi(horizon - 1 - t as i32) * (epsilon * l + z))
            .sum::<f64>();
    Ok(Trajectory { h, closed_form_final: closed })
}

/// Loss of life for one hour: the upper envelope of the segments, floored at zero.
pub fn degradation_value(h: f64, current_sq: f64, segments: &[DegradationSegment]) -> f64 {
    segments.iter().map(|s| s.value(h, current_sq)).fold(0.0, f64::max)
}

/// Insulation aging acceleration factor at hot-spot temperature `theta` (°C).
pub fn aging_factor(theta: f64) -> f64 {
    (15000.0 / (REFERENCE_HOT_SPOT + 273.0) - 15000.0 / (theta + 273.0)).exp()
}

fn aging_factor_slope(theta: f64) -> f64 {
    aging_factor(theta) * 15000.0 / ((theta + 273.0) * (theta + 273.0))
}

/// Tangents of the aging factor at each hot-spot breakpoint, with hot spot
/// `h + hotspot_gain·l`. Sorted by breakpoint, so slopes are nondecreasing.
pub fn aging_tangent_segments(breakpoints: &[f64], hotspot_gain: f64) -> Vec<DegradationSegment> {
    let mut bps = breakpoints.to_vec();
    bps.sort_by(f64::total_cmp);
    bps.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    bps.iter()
        .map(|&theta| {
            let slope = aging_factor_slope(theta);
            DegradationSegment {
                alpha: slope,
                beta: slope * hotspot_gain,
                gamma: aging_factor(theta) - slope * theta,
            }
        })
        .collect()
}

/// Adds `center ± half_width` (and `center`) to a breakpoint set, keeping at
/// most `max_points` points by dropping new points that would exceed the cap.
pub fn densify_breakpoints(breakpoints: &[f64], center: f64, half_width: f64, max_points: usize) -> Vec<f64> {
    let mut out = breakpoints.to_vec();
    for candidate in [center, center - half_width, center + half_width] {
        if out.len() >= max_points {
            break;
        }
        if out.iter().all(|b| (b - candidate).abs() > 1e-6) {
            out.push(candidate);
        }
    }
    out.sort_by(f64::total_cmp);
    out
}

/// How the end-of-horizon temperature is treated.
#[derive(Debug, Clone, PartialEq)]
pub enum ThermalMode {
    /// `h_T = h_0` with `h_0` free; the equality's multiplier is reported as ρ.
    Cyclic,
    /// `h_0` fixed and `ρ·h_T` added to the objective.
    Pinned { rho: Vec<f64>, initial: Option<Vec<f64>> },
}

/// Per-transformer temperature, loss of life and end-of-day marginal value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ThermalState {
    /// `h[k][t]`, `t = 0..=T`.
    pub h: Vec<Vec<f64>>,
    /// `d[k][t]`, `t = 0..T` (hours 1..=T).
    pub d: Vec<Vec<f64>>,
    /// $ per °C of end-of-horizon top-oil temperature.
    pub rho: Vec<f64>,
}

/// Variables and rows created by [`build_thermal_constraints`].
#[derive(Debug, Clone)]
pub struct ThermalVars {
    pub h: Vec<Vec<VarId>>,
    pub d: Vec<Vec<VarId>>,
    pub cyclic_rows: Vec<Option<usize>>,
}

/// One transformer's inputs to the constraint builder.
pub struct ThermalInput<'a> {
    pub params: &'a TransformerThermalParams,
    pub zeta: &'a [f64],
    /// Squared-current variable of the transformer line, per hour.
    pub current: &'a [VarId],
}

/// Emits recursion equalities, epigraph inequalities, the cyclic equality (or
/// pinned terminal term) and the degradation cost for each transformer.
pub fn build_thermal_constraints(
    program: &mut ConicProgram,
    inputs: &[ThermalInput<'_>],
    mode: &ThermalMode,
) -> Result<ThermalVars> {
    if let ThermalMode::Pinned { rho, initial } = mode {
        if rho.len() != inputs.len() {
            return Err(Error::Dimension(format!(
                "pinned thermal mode needs one rho per transformer ({} supplied, {} needed)",
                rho.len(),
                inputs.len()
            )));
        }
        if initial.as_ref().is_some_and(|h| h.len() != inputs.len()) {
            return Err(Error::Dimension("pinned initial temperatures do not match transformers".into()));
        }
    }
    let mut vars = ThermalVars { h: Vec::new(), d: Vec::new(), cyclic_rows: Vec::new() };
    for (k, input) in inputs.iter().enumerate() {
        let p = input.params;
        let horizon = input.zeta.len();
        if input.current.len() != horizon {
            return Err(Error::Dimension(format!("transformer {k}: current/drive length mismatch")));
        }
        let h: Vec<VarId> = (0..=horizon).map(|t| program.add_var(format!("h[{k},{t}]"), None, None)).collect();
        let d: Vec<VarId> =
            (0..horizon).map(|t| program.add_var(format!("D[{k},{}]", t + 1), Some(0.0), None)).collect();
        for t in 0..horizon {
            program.add_eq(
                Affine::var(h[t + 1]).term(h[t], -p.delta).term(input.current[t], -p.epsilon).plus(-input.zeta[t]),
                RowTag::Thermal { transformer: k, hour: t },
            );
            for (m, s) in p.segments.iter().enumerate() {
                program.add_le(
                    Affine::var(h[t + 1])
                        .scaled(s.alpha)
                        .term(input.current[t], s.beta)
                        .term(d[t], -1.0)
                        .plus(s.gamma),
                    RowTag::Epigraph { transformer: k, hour: t, segment: m },
                );
            }
            program.add_cost(d[t], p.cost_per_hour);
        }
        let cyclic = match mode {
            ThermalMode::Cyclic => Some(program.add_eq(
                Affine::var(h[horizon]).term(h[0], -1.0),
                RowTag::Cyclic { transformer: k },
            )),
            ThermalMode::Pinned { rho, initial } => {
                let h0 = initial.as_ref().map_or(p.h0, |v| v[k]);
                program.add_eq(Affine::var(h[0]).plus(-h0), RowTag::InitialTemperature { transformer: k });
                program.add_cost(h[horizon], rho[k]);
                None
            }
        };
        vars.h.push(h);
        vars.d.push(d);
        vars.cyclic_rows.push(cyclic);
    }
    Ok(vars)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn steady_state_is_fixed_point() {
        let traj = temperature_trajectory(80.0, &[0.0; 24], &[20.0; 24], 0.75, 1.0).unwrap();
        assert!(traj.h.iter().all(|h| (h - 80.0).abs() < 1e-12));
    }

    #[test]
    fn pure_decay() {
        let traj = temperature_trajectory(60.0, &[0.0; 24], &[0.0; 24], 0.75, 5.0).unwrap();
        for (t, h) in traj.h.iter().enumerate() {
            assert!((h - 60.0 * 0.75f64.powi(t as i32)).abs() < 1e-12);
        }
    }

    #[test]
    fn length_mismatch_is_error() {
        assert!(temperature_trajectory(60.0, &[0.0; 23], &[0.0; 24], 0.75, 1.0).is_err());
    }

    #[test]
    fn degradation_examples() {
        let segs = [
            DegradationSegment { alpha: 0.01, beta: 0.0, gamma: -1.0 },
            DegradationSegment { alpha: 0.1, beta: 0.0, gamma: -11.0 },
        ];
        assert_eq!(degradation_value(100.0, 0.0, &segs), 0.0);
        assert!((degradation_value(150.0, 0.0, &segs) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn tangents_are_convex_nondecreasing_on_grid() {
        let segs = aging_tangent_segments(&INITIAL_BREAKPOINTS, 0.0);
        assert_eq!(segs.len(), 8);
        let grid: Vec<f64> = (0..=1000).map(|i| 90.0 + 0.07 * i as f64).collect();
        let vals: Vec<f64> = grid.iter().map(|&h| degradation_value(h, 0.0, &segs)).collect();
        for w in vals.windows(2) {
            assert!(w[1] >= w[0] - 1e-12);
        }
        for w in vals.windows(3) {
            assert!(w[0] + w[2] - 2.0 * w[1] >= -1e-9, "not convex");
        }
        // tangent at the reference point is exact
        assert!((degradation_value(110.0, 0.0, &segs) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn densify_caps_points() {
        let b = densify_breakpoints(&INITIAL_BREAKPOINTS, 123.0, 2.5, 40);
        assert_eq!(b, vec![100.0, 105.0, 110.0, 115.0, 120.0, 120.5, 123.0, 125.5, 130.0, 140.0, 150.0]);
        let capped = densify_breakpoints(&INITIAL_BREAKPOINTS, 123.0, 2.5, 9);
        assert_eq!(capped.len(), 9);
    }

    #[test]
    fn cyclic_constraint_counts() {
        let params = TransformerThermalParams {
            segments: aging_tangent_segments(&INITIAL_BREAKPOINTS, 1.0),
            delta: 0.75,
            epsilon: 1.0,
            ambient_rise: 9.0,
            h0: 50.0,
            cost_per_hour: 0.01,
            hotspot_gain: Some(1.0),
            breakpoints: INITIAL_BREAKPOINTS.to_vec(),
        };
        let mut program = ConicProgram::new();
        let l: Vec<VarId> = (0..24).map(|t| program.add_var(format!("l{t}"), Some(0.0), None)).collect();
        let zeta = vec![5.0; 24];
        let inputs = [ThermalInput { params: &params, zeta: &zeta, current: &l }];
        build_thermal_constraints(&mut program, &inputs, &ThermalMode::Cyclic).unwrap();
        let recursion = program.equalities.iter().filter(|r| matches!(r.tag, RowTag::Thermal { .. })).count();
        let cyclic = program.equalities.iter().filter(|r| matches!(r.tag, RowTag::Cyclic { .. })).count();
        let epi = program.inequalities.iter().filter(|r| matches!(r.tag, RowTag::Epigraph { .. })).count();
        assert_eq!((recursion, epi, cyclic), (24, 8 * 24, 1));
    }

    #[test]
    fn pinned_without_rho_is_error() {
        let mut program = ConicProgram::new();
        let l: Vec<VarId> = vec![program.add_var("l", None, None)];
        let params = TransformerThermalParams {
            segments: vec![DegradationSegment { alpha: 0.0, beta: 0.0, gamma: 0.0 }],
            delta: 0.75,
            epsilon: 1.0,
            ambient_rise: 0.0,
            h0: 50.0,
            cost_per_hour: 0.0,
            hotspot_gain: None,
            breakpoints: vec![],
        };
        let inputs = [ThermalInput { params: &params, zeta: &[1.0], current: &l }];
        let mode = ThermalMode::Pinned { rho: vec![], initial: None };
        assert!(build_thermal_constraints(&mut program, &inputs, &mode).is_err());
    }
}
