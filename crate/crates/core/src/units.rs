//! Per-unit conversion. Power quantities are divided by the MVA base;
//! energy prices stay in $/MWh and are converted with [`PerUnitBase::mwh_per_pu_hour`].

use crate::error::{Error, Result};

/// Default system base (1 MVA, 13.8 kV line-to-line).
pub const DEFAULT_BASE_MVA: f64 = 1.0;
pub const DEFAULT_BASE_KV: f64 = 13.8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerUnitBase {
    pub mva: f64,
    pub kv: f64,
}

impl Default for PerUnitBase {
    fn default() -> Self {
        PerUnitBase { mva: DEFAULT_BASE_MVA, kv: DEFAULT_BASE_KV }
    }
}

impl PerUnitBase {
    pub fn new(mva: f64, kv: f64) -> Result<Self> {
        if !(mva > 0.0) || !(kv > 0.0) {
            return Err(Error::Invalid(format!(
                "per-unit base must be positive (got {mva} MVA, {kv} kV)"
            )));
        }
        Ok(PerUnitBase { mva, kv })
    }

    /// Base impedance in ohms.
    pub fn z_base(&self) -> f64 {
        self.kv * self.kv / self.mva
    }

    /// MWh represented by one p.u. of power held for one hour.
    pub fn mwh_per_pu_hour(&self) -> f64 {
        self.mva
    }

    pub fn kw_to_pu(&self, kw: f64) -> f64 {
        kw / (1000.0 * self.mva)
    }

    pub fn pu_to_kw(&self, pu: f64) -> f64 {
        pu * 1000.0 * self.mva
    }

    pub fn ohm_to_pu(&self, ohm: f64) -> f64 {
        ohm / self.z_base()
    }

    /// Squared per-unit current limit for a three-phase ampacity in amperes.
    pub fn ampacity_to_squared_pu(&self, amps: f64) -> f64 {
        let mva = 3f64.sqrt() * self.kv * amps / 1000.0;
        let pu = mva / self.mva;
        pu * pu
    }
}

/// Divides kW / kVAR / kVA quantities by the base. Errors on a nonpositive base.
pub fn to_per_unit(raw_kw: &[f64], base_mva: f64) -> Result<Vec<f64>> {
    if !(base_mva > 0.0) {
        return Err(Error::Invalid(format!("base power must be positive, got {base_mva}")));
    }
    Ok(raw_kw.iter().map(|kw| kw / (1000.0 * base_mva)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pv_nameplates_at_one_mva() {
        let pu = to_per_unit(&[150.0, 10.0, 0.0], 1.0).unwrap();
        assert!((pu[0] - 0.15).abs() < 1e-15);
        assert!((pu[1] - 0.01).abs() < 1e-15);
        assert_eq!(pu[2], 0.0);
    }

    #[test]
    fn nonpositive_base_rejected() {
        assert!(to_per_unit(&[1.0], 0.0).is_err());
        assert!(to_per_unit(&[1.0], -2.0).is_err());
        assert!(PerUnitBase::new(0.0, 13.8).is_err());
    }

    #[test]
    fn impedance_base() {
        let b = PerUnitBase::default();
        assert!((b.z_base() - 190.44).abs() < 1e-9);
        assert!((b.ohm_to_pu(190.44) - 1.0).abs() < 1e-12);
    }
}
