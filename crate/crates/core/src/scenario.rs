//! DER fleets, prices and ambient drive, and the validated [`Case`] pairing a
//! feeder with a scenario.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feeder::{FeederModel, NodeId};

/// Default reactive-power opportunity cost as a fraction of the energy price.
pub const DEFAULT_REACTIVE_PRICE_RATIO: f64 = 0.1;

/// An EV charging session. Hours are 0-based internally.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvParams {
    pub node: NodeId,
    /// Plugged-in hours, sorted and unique.
    pub window: Vec<usize>,
    /// Energy requirement (p.u.·h).
    pub energy: f64,
    /// Charger rate limit (p.u.).
    pub charger: f64,
    /// Inverter apparent-power limit (p.u.).
    pub inverter: f64,
}

impl EvParams {
    /// Largest real power attainable in a plugged hour.
    pub fn max_rate(&self) -> f64 {
        self.charger.min(self.inverter)
    }

    pub fn check(&self, horizon: usize) -> Result<()> {
        if self.window.iter().any(|&t| t >= horizon) {
            return Err(Error::Invalid(format!("EV at node {} plugged outside the horizon", self.node)));
        }
        if self.window.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Invalid(format!("EV at node {}: window must be sorted and unique", self.node)));
        }
        if !(self.energy >= 0.0) || !(self.charger >= 0.0) || !(self.inverter >= 0.0) {
            return Err(Error::Invalid(format!("EV at node {}: negative parameter", self.node)));
        }
        let reachable = self.window.len() as f64 * self.max_rate();
        if self.energy > reachable * (1.0 + 1e-12) {
            return Err(Error::Infeasible(format!(
                "EV at node {} needs {:.6} p.u.h but can deliver at most {:.6}",
                self.node, self.energy, reachable
            )));
        }
        Ok(())
    }
}

/// A rooftop PV with its irradiance factor per hour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PvParams {
    pub node: NodeId,
    /// Inverter nameplate (p.u.).
    pub nameplate: f64,
    /// Irradiance factor in [0, 1] per hour.
    pub irradiance: Vec<f64>,
}

impl PvParams {
    /// Available real power in hour `t`.
    pub fn available(&self, t: usize) -> f64 {
        self.irradiance[t] * self.nameplate
    }

    pub fn is_sunny(&self, t: usize) -> bool {
        self.irradiance[t] > 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub horizon: usize,
    /// Energy price at the substation ($/MWh).
    pub price_p: Vec<f64>,
    /// Reactive opportunity cost ($/MVARh).
    pub price_q: Vec<f64>,
    /// Ambient temperature (°C).
    pub ambient: Vec<f64>,
    pub evs: Vec<EvParams>,
    pub pvs: Vec<PvParams>,
}

impl Scenario {
    /// Scenario without DERs, reactive price at the default ratio.
    pub fn network_only(price_p: Vec<f64>, ambient: Vec<f64>) -> Self {
        let price_q = price_p.iter().map(|c| c * DEFAULT_REACTIVE_PRICE_RATIO).collect();
        Scenario { horizon: price_p.len(), price_p, price_q, ambient, evs: vec![], pvs: vec![] }
    }

    pub fn check(&self, node_count: usize) -> Result<()> {
        let t = self.horizon;
        for (name, len) in [("price_p", self.price_p.len()), ("price_q", self.price_q.len()), ("ambient", self.ambient.len())] {
            if len != t {
                return Err(Error::Dimension(format!("{name} has {len} entries, horizon is {t}")));
            }
        }
        for ev in &self.evs {
            if ev.node == 0 || ev.node >= node_count {
                return Err(Error::Invalid(format!("EV references missing node {}", ev.node)));
            }
            ev.check(t)?;
        }
        for pv in &self.pvs {
            if pv.node == 0 || pv.node >= node_count {
                return Err(Error::Invalid(format!("PV references missing node {}", pv.node)));
            }
            if pv.irradiance.len() != t {
                return Err(Error::Dimension(format!("PV at node {}: irradiance length", pv.node)));
            }
            if pv.irradiance.iter().any(|r| !(0.0..=1.0).contains(r)) || !(pv.nameplate >= 0.0) {
                return Err(Error::Invalid(format!("PV at node {}: irradiance outside [0,1]", pv.node)));
            }
        }
        Ok(())
    }
}

/// A feeder and scenario checked against each other, with the thermal drive
/// `ζ[k][t]` precomputed from the ambient series.
#[derive(Debug, Clone, PartialEq)]
pub struct Case {
    pub feeder: FeederModel,
    pub scenario: Scenario,
    pub zeta: Vec<Vec<f64>>,
}

impl Case {
    pub fn new(feeder: FeederModel, scenario: Scenario) -> Result<Self> {
        if feeder.horizon() != scenario.horizon {
            return Err(Error::Dimension(format!(
                "feeder loads cover {} hours, scenario {}",
                feeder.horizon(),
                scenario.horizon
            )));
        }
        scenario.check(feeder.node_count())?;
        let zeta = feeder.transformers.iter().map(|t| t.thermal.zeta(&scenario.ambient)).collect();
        Ok(Case { feeder, scenario, zeta })
    }

    pub fn horizon(&self) -> usize {
        self.scenario.horizon
    }

    /// Recomputes ζ after transformer parameters change.
    pub fn refresh_drive(&mut self) {
        self.zeta = self.feeder.transformers.iter().map(|t| t.thermal.zeta(&self.scenario.ambient)).collect();
    }

    /// Same case with every DER removed.
    pub fn without_ders(&self) -> Case {
        let mut c = self.clone();
        c.scenario.evs.clear();
        c.scenario.pvs.clear();
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(window: Vec<usize>, energy: f64) -> EvParams {
        EvParams { node: 1, window, energy, charger: 4.0, inverter: 10.0 }
    }

    #[test]
    fn ev_feasibility() {
        assert!(ev(vec![0, 1], 8.0).check(24).is_ok());
        assert!(matches!(ev(vec![0, 1], 8.5).check(24), Err(Error::Infeasible(_))));
        assert!(ev(vec![23, 24], 1.0).check(24).is_err());
        assert!(ev(vec![3, 2], 1.0).check(24).is_err());
    }

    #[test]
    fn price_length_checked() {
        let mut s = Scenario::network_only(vec![30.0; 24], vec![20.0; 24]);
        assert!(s.check(3).is_ok());
        s.price_q.pop();
        assert!(matches!(s.check(3), Err(Error::Dimension(_))));
    }
}
