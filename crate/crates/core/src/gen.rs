//! Seeded synthetic feeders and DER fleets.
//!
//! Topology: node 0 feeds node 1; line nodes `2..=L` attach to their
//! predecessor with probability 0.7 and to a uniformly chosen earlier line node
//! otherwise; service transformers are leaves `L+1..=L+K`, each hanging off a
//! random line node. Load shapes, price and ambient profiles are smooth
//! synthetic 24-hour curves.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::feeder::{FeederModel, Line, LoadClass, Transformer};
use crate::scenario::{EvParams, PvParams, Scenario, DEFAULT_REACTIVE_PRICE_RATIO};
use crate::thermal::{aging_tangent_segments, TransformerThermalParams, DEFAULT_DELTA, INITIAL_BREAKPOINTS};
use crate::units::PerUnitBase;

pub const PRICE_MIN: f64 = 25.59;
pub const PRICE_MAX: f64 = 53.48;
pub const EV_ENERGY_MIN_KWH: f64 = 5.97;
pub const EV_ENERGY_MAX_KWH: f64 = 47.54;

/// A transformer size class with its EV count range and replacement cost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformerClass {
    pub kva: f64,
    pub ev_min: usize,
    pub ev_max: usize,
    /// Replacement cost, $.
    pub price: f64,
}

pub const CLASSES: [TransformerClass; 5] = [
    TransformerClass { kva: 15.0, ev_min: 1, ev_max: 3, price: 2000.0 },
    TransformerClass { kva: 30.0, ev_min: 3, ev_max: 6, price: 3000.0 },
    TransformerClass { kva: 45.0, ev_min: 4, ev_max: 8, price: 3800.0 },
    TransformerClass { kva: 75.0, ev_min: 8, ev_max: 12, price: 5000.0 },
    TransformerClass { kva: 150.0, ev_min: 12, ev_max: 24, price: 7000.0 },
];

pub fn class_of(kva: f64) -> Result<TransformerClass> {
    CLASSES
        .iter()
        .copied()
        .find(|c| (c.kva - kva).abs() < 1e-9)
        .ok_or_else(|| Error::Invalid(format!("no transformer class for {kva} kVA")))
}

/// Insulation life in hours used to turn replacement cost into $ per hour of life.
pub const INSULATION_LIFE_HOURS: f64 = 180_000.0;

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSpec {
    pub seed: u64,
    pub horizon: usize,
    /// Distribution line nodes (excluding the root and transformer leaves).
    pub line_nodes: usize,
    /// `(kVA, count)` pairs.
    pub transformer_mix: Vec<(f64, usize)>,
    pub commercial_fraction: f64,
    /// Total EVs, reached by adjusting per-transformer draws within class ranges.
    pub ev_target: Option<usize>,
    pub evs: bool,
    pub pvs_per_transformer: usize,
    pub pv_kva: f64,
}

impl GeneratorSpec {
    /// 25 nodes: 14 line nodes and 10 transformers, about 30 EVs and 10 PVs.
    pub fn desk(seed: u64) -> Self {
        GeneratorSpec {
            seed,
            horizon: 24,
            line_nodes: 14,
            transformer_mix: vec![(15.0, 4), (30.0, 4), (45.0, 2)],
            commercial_fraction: 0.2,
            ev_target: Some(30),
            evs: true,
            pvs_per_transformer: 1,
            pv_kva: 10.0,
        }
    }

    /// 307 nodes: 196 line nodes and 110 transformers with 662 EVs.
    pub fn paper_scale(seed: u64) -> Self {
        GeneratorSpec {
            seed,
            horizon: 24,
            line_nodes: 196,
            transformer_mix: vec![(15.0, 20), (30.0, 40), (45.0, 25), (75.0, 15), (150.0, 10)],
            commercial_fraction: 0.15,
            ev_target: Some(662),
            evs: true,
            pvs_per_transformer: 0,
            pv_kva: 10.0,
        }
    }

    /// The paper-scale feeder with two 10 kVA rooftop PVs per transformer and no EVs.
    pub fn paper_scale_pv(seed: u64) -> Self {
        GeneratorSpec { evs: false, ev_target: None, pvs_per_transformer: 2, ..Self::paper_scale(seed) }
    }

    pub fn transformer_count(&self) -> usize {
        self.transformer_mix.iter().map(|m| m.1).sum()
    }

    pub fn node_count(&self) -> usize {
        1 + self.line_nodes + self.transformer_count()
    }

    pub fn check(&self) -> Result<()> {
        if self.line_nodes == 0 {
            return Err(Error::Invalid("generator needs at least one line node".into()));
        }
        if self.transformer_count() == 0 {
            return Err(Error::Invalid("generator needs at least one transformer".into()));
        }
        if self.horizon != 24 {
            return Err(Error::Invalid("synthetic profiles are defined for 24 hours".into()));
        }
        if !(0.0..=1.0).contains(&self.commercial_fraction) {
            return Err(Error::Invalid("commercial fraction must lie in [0, 1]".into()));
        }
        for &(kva, _) in &self.transformer_mix {
            class_of(kva)?;
        }
        if let Some(target) = self.ev_target {
            let (lo, hi) = self.ev_range()?;
            if target < lo || target > hi {
                return Err(Error::Invalid(format!("EV target {target} outside the class range [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    fn ev_range(&self) -> Result<(usize, usize)> {
        let mut lo = 0;
        let mut hi = 0;
        for &(kva, count) in &self.transformer_mix {
            let c = class_of(kva)?;
            lo += c.ev_min * count;
            hi += c.ev_max * count;
        }
        Ok((lo, hi))
    }
}

fn rng_for(spec: &GeneratorSpec, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(stream);
    rng
}

/// Residential demand shape, fraction of peak, hours 1..=24.
const RESIDENTIAL: [f64; 24] = [
    0.45, 0.40, 0.37, 0.36, 0.37, 0.42, 0.52, 0.60, 0.58, 0.54, 0.52, 0.52, 0.53, 0.54, 0.57, 0.63, 0.74, 0.88, 0.97, 1.00,
    0.95, 0.84, 0.70, 0.55,
];
/// Commercial demand shape, fraction of peak.
const COMMERCIAL: [f64; 24] = [
    0.35, 0.33, 0.32, 0.32, 0.33, 0.38, 0.50, 0.70, 0.86, 0.95, 0.99, 1.00, 0.99, 1.00, 0.98, 0.94, 0.87, 0.74, 0.60, 0.50,
    0.45, 0.41, 0.38, 0.36,
];
/// Clear-sky irradiance factor.
const IRRADIANCE: [f64; 24] = [
    0.0, 0.0, 0.0, 0.0, 0.0, 0.02, 0.10, 0.25, 0.43, 0.60, 0.74, 0.83, 0.86, 0.83, 0.74, 0.60, 0.43, 0.25, 0.10, 0.02, 0.0,
    0.0, 0.0, 0.0,
];

/// Day-ahead energy price profile spanning exactly `[PRICE_MIN, PRICE_MAX]`.
pub fn price_profile() -> Vec<f64> {
    let shape: [f64; 24] = [
        0.30, 0.18, 0.08, 0.00, 0.04, 0.16, 0.34, 0.52, 0.58, 0.55, 0.52, 0.50, 0.49, 0.50, 0.55, 0.63, 0.78, 0.93, 1.00, 0.94,
        0.80, 0.66, 0.52, 0.40,
    ];
    shape.iter().map(|s| PRICE_MIN + s * (PRICE_MAX - PRICE_MIN)).collect()
}

/// Ambient temperature between 20 °C (05:00) and 32 °C (15:00).
pub fn ambient_profile() -> Vec<f64> {
    (0..24)
        .map(|t| {
            let hour = (t + 1) as f64;
            let phase = (hour - 15.0) / 24.0 * std::f64::consts::TAU;
            26.0 + 6.0 * phase.cos()
        })
        .collect()
}

/// Conductor data: resistance and reactance in Ω/mile, ampacity in A.
const MAIN: (f64, f64, f64) = (0.306, 0.627, 530.0);
const LATERAL: (f64, f64, f64) = (0.592, 0.656, 340.0);

/// Thermal parameters of a transformer class at 1.0 p.u. voltage.
pub fn thermal_params(kva: f64, base: &PerUnitBase, mean_ambient: f64) -> Result<TransformerThermalParams> {
    let class = class_of(kva)?;
    let s = base.kw_to_pu(kva);
    let rated = s * s;
    let gain = 25.0 / rated;
    let rise = 9.2;
    let epsilon = (1.0 - DEFAULT_DELTA) * 45.8 / rated;
    Ok(TransformerThermalParams {
        segments: aging_tangent_segments(&INITIAL_BREAKPOINTS, gain),
        delta: DEFAULT_DELTA,
        epsilon,
        ambient_rise: rise,
        h0: mean_ambient + rise + 20.0,
        cost_per_hour: class.price / INSULATION_LIFE_HOURS,
        hotspot_gain: Some(gain),
        breakpoints: INITIAL_BREAKPOINTS.to_vec(),
    })
}

/// Builds a radial feeder from the spec.
pub fn generate_feeder(spec: &GeneratorSpec) -> Result<FeederModel> {
    spec.check()?;
    let mut rng = rng_for(spec, 1);
    let base = PerUnitBase::default();
    let n = spec.node_count();
    let lines_end = spec.line_nodes;
    let mut parent = vec![None; n];
    let mut lines = vec![None; n];
    for j in 1..=lines_end {
        let p = if j == 1 || rng.gen_bool(0.7) { j - 1 } else { rng.gen_range(1..j) };
        parent[j] = Some(p);
        let (r, x, amp) = if p + 1 == j { MAIN } else { LATERAL };
        let miles = rng.gen_range(0.2..1.0);
        lines[j] = Some(Line { r: base.ohm_to_pu(r * miles), x: base.ohm_to_pu(x * miles), l_max: base.ampacity_to_squared_pu(amp) });
    }

    let mut sizes: Vec<f64> = spec.transformer_mix.iter().flat_map(|&(kva, count)| std::iter::repeat(kva).take(count)).collect();
    sizes.shuffle(&mut rng);
    let mean_ambient = ambient_profile().iter().sum::<f64>() / 24.0;
    let horizon = spec.horizon;
    let mut load_p = vec![vec![0.0; horizon]; n];
    let mut load_q = vec![vec![0.0; horizon]; n];
    let mut load_class = vec![None; n];
    let mut transformers = Vec::with_capacity(sizes.len());
    for (k, &kva) in sizes.iter().enumerate() {
        let node = lines_end + 1 + k;
        parent[node] = Some(rng.gen_range(1..=lines_end));
        let s = base.kw_to_pu(kva);
        lines[node] = Some(Line { r: 0.011 * 1000.0 / kva * base.mva, x: 0.016 * 1000.0 / kva * base.mva, l_max: (2.0 * s).powi(2) });
        transformers.push(Transformer { node, nameplate_kva: kva, thermal: thermal_params(kva, &base, mean_ambient)? });

        let class = if rng.gen_bool(spec.commercial_fraction) { LoadClass::Commercial } else { LoadClass::Residential };
        let shape = match class {
            LoadClass::Residential => &RESIDENTIAL,
            LoadClass::Commercial => &COMMERCIAL,
        };
        let peak = s * rng.gen_range(0.45..0.7);
        let tan = class.power_factor().acos().tan();
        for t in 0..horizon {
            let jitter = 1.0 + rng.gen_range(-0.03..0.03);
            load_p[node][t] = peak * shape[t] * jitter;
            load_q[node][t] = load_p[node][t] * tan;
        }
        load_class[node] = Some(class);
    }
    FeederModel::new(base, 1.0, parent, lines, vec![0.95 * 0.95; n], vec![1.05 * 1.05; n], transformers, load_p, load_q, load_class)
}

/// Draws EV and PV fleets for a feeder made by [`generate_feeder`].
pub fn generate_fleet(spec: &GeneratorSpec, model: &FeederModel) -> Result<Scenario> {
    spec.check()?;
    if model.node_count() != spec.node_count() || model.transformers.len() != spec.transformer_count() {
        return Err(Error::Invalid("feeder was not generated from this spec".into()));
    }
    let mut rng = rng_for(spec, 2);
    let base = model.base;
    let price_p = price_profile();
    let price_q = price_p.iter().map(|c| c * DEFAULT_REACTIVE_PRICE_RATIO).collect();

    let mut evs = Vec::new();
    if spec.evs {
        let classes: Vec<TransformerClass> = model.transformers.iter().map(|t| class_of(t.nameplate_kva)).collect::<Result<_>>()?;
        let mut counts: Vec<usize> = classes.iter().map(|c| rng.gen_range(c.ev_min..=c.ev_max)).collect();
        if let Some(target) = spec.ev_target {
            let mut total: usize = counts.iter().sum();
            while total != target {
                let up = total < target;
                let movable: Vec<usize> = (0..counts.len())
                    .filter(|&k| if up { counts[k] < classes[k].ev_max } else { counts[k] > classes[k].ev_min })
                    .collect();
                let &k = movable.choose(&mut rng).ok_or_else(|| Error::Invalid("EV target unreachable".into()))?;
                if up {
                    counts[k] += 1;
                    total += 1;
                } else {
                    counts[k] -= 1;
                    total -= 1;
                }
            }
        }
        for (tr, &count) in model.transformers.iter().zip(&counts) {
            for _ in 0..count {
                evs.push(draw_ev(&mut rng, tr.node, &base, spec.horizon));
            }
        }
    }

    let mut pvs = Vec::new();
    for tr in &model.transformers {
        for _ in 0..spec.pvs_per_transformer {
            let cloud = rng.gen_range(0.9..1.0);
            pvs.push(PvParams {
                node: tr.node,
                nameplate: base.kw_to_pu(spec.pv_kva),
                irradiance: IRRADIANCE.iter().map(|r| r * cloud).collect(),
            });
        }
    }
    let scenario = Scenario { horizon: spec.horizon, price_p, price_q, ambient: ambient_profile(), evs, pvs };
    scenario.check(model.node_count())?;
    Ok(scenario)
}

fn draw_ev(rng: &mut ChaCha8Rng, node: usize, base: &PerUnitBase, horizon: usize) -> EvParams {
    let arrival = rng.gen_range(16..=22usize);
    let length = rng.gen_range(5..=21usize);
    let mut window: Vec<usize> = (0..length).map(|i| (arrival - 1 + i) % horizon).collect();
    window.sort_unstable();
    let charger_kw = if rng.gen_bool(0.5) { 3.3 } else { 6.6 };
    let inverter_kw = charger_kw * rng.gen_range(1.1..1.2);
    let reachable = 0.95 * length as f64 * charger_kw;
    let energy_kwh = rng.gen_range(EV_ENERGY_MIN_KWH..=EV_ENERGY_MAX_KWH.min(reachable));
    EvParams {
        node,
        window,
        energy: base.kw_to_pu(energy_kwh),
        charger: base.kw_to_pu(charger_kw),
        inverter: base.kw_to_pu(inverter_kw),
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecFile {
    preset: Option<String>,
    seed: Option<u64>,
    line_nodes: Option<usize>,
    transformer_mix: Option<Vec<(f64, usize)>>,
    commercial_fraction: Option<f64>,
    ev_target: Option<usize>,
    evs: Option<bool>,
    pvs_per_transformer: Option<usize>,
    pv_kva: Option<f64>,
}

/// Named generator presets: `desk`, `paper` and `paper-pv`.
pub fn preset(name: &str, seed: u64) -> Result<GeneratorSpec> {
    match name {
        "desk" => Ok(GeneratorSpec::desk(seed)),
        "paper" => Ok(GeneratorSpec::paper_scale(seed)),
        "paper-pv" => Ok(GeneratorSpec::paper_scale_pv(seed)),
        other => Err(Error::Parse(format!("unknown generator preset '{other}'"))),
    }
}

/// Parses a generator spec file: an optional `preset` (default `desk`) plus
/// any field overrides.
///
/// ```toml
/// preset = "paper"
/// seed = 7
/// pvs_per_transformer = 2
/// ```
pub fn spec_from_toml(text: &str) -> Result<GeneratorSpec> {
    let file: SpecFile = toml::from_str(text).map_err(|e| Error::Parse(format!("generator spec: {e}")))?;
    let mut spec = preset(file.preset.as_deref().unwrap_or("desk"), file.seed.unwrap_or(42))?;
    if let Some(v) = file.line_nodes {
        spec.line_nodes = v;
    }
    if let Some(v) = file.transformer_mix {
        spec.transformer_mix = v;
    }
    if let Some(v) = file.commercial_fraction {
        spec.commercial_fraction = v;
    }
    if let Some(v) = file.evs {
        spec.evs = v;
        if !v {
            spec.ev_target = None;
        }
    }
    if file.ev_target.is_some() {
        spec.ev_target = file.ev_target;
    }
    if let Some(v) = file.pvs_per_transformer {
        spec.pvs_per_transformer = v;
    }
    if let Some(v) = file.pv_kva {
        spec.pv_kva = v;
    }
    spec.check()?;
    Ok(spec)
}

/// The same scenario with every EV duplicated at its node.
pub fn duplicate_evs(scenario: &Scenario) -> Scenario {
    let mut s = scenario.clone();
    s.evs.extend(scenario.evs.iter().cloned());
    s
}

/// Overrides one hour's energy price (and its reactive opportunity cost).
pub fn with_price(scenario: &Scenario, hour: usize, price: f64) -> Scenario {
    let mut s = scenario.clone();
    s.price_p[hour] = price;
    s.price_q[hour] = price * DEFAULT_REACTIVE_PRICE_RATIO;
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feeder::validate_radial;

    #[test]
    fn desk_counts() {
        let spec = GeneratorSpec::desk(42);
        let m = generate_feeder(&spec).unwrap();
        assert_eq!(m.node_count(), 25);
        assert_eq!(m.transformers.len(), 10);
        let s = generate_fleet(&spec, &m).unwrap();
        assert_eq!(s.evs.len(), 30);
        assert_eq!(s.pvs.len(), 10);
        assert_eq!(m, generate_feeder(&spec).unwrap());
    }

    #[test]
    fn paper_scale_counts() {
        let spec = GeneratorSpec::paper_scale(7);
        let m = generate_feeder(&spec).unwrap();
        assert_eq!((m.node_count(), m.transformers.len()), (307, 110));
        assert!(validate_radial(&m).is_valid());
        let s = generate_fleet(&spec, &m).unwrap();
        assert_eq!(s.evs.len(), 662);
        for e in &s.evs {
            let kwh = base_kwh(e.energy);
            assert!((EV_ENERGY_MIN_KWH..=EV_ENERGY_MAX_KWH).contains(&kwh));
            assert!((5..=21).contains(&e.window.len()));
        }
        let pv = generate_fleet(&GeneratorSpec::paper_scale_pv(7), &m).unwrap();
        assert_eq!(pv.pvs.len(), 220);
        assert!(pv.evs.is_empty());
        assert_eq!(duplicate_evs(&s).evs.len(), 1324);
    }

    fn base_kwh(pu: f64) -> f64 {
        PerUnitBase::default().pu_to_kw(pu)
    }

    #[test]
    fn single_transformer_feeder() {
        let spec = GeneratorSpec { line_nodes: 1, transformer_mix: vec![(30.0, 1)], ev_target: None, ..GeneratorSpec::desk(1) };
        let m = generate_feeder(&spec).unwrap();
        assert_eq!(m.node_count(), 3);
        assert!(validate_radial(&m).is_valid());
    }

    #[test]
    fn prices_span_range() {
        let p = price_profile();
        let lo = p.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert!((lo - PRICE_MIN).abs() < 1e-12 && (hi - PRICE_MAX).abs() < 1e-12);
    }

    #[test]
    fn power_factors() {
        let m = generate_feeder(&GeneratorSpec::desk(3)).unwrap();
        for j in 0..m.node_count() {
            if let Some(c) = m.load_class[j] {
                let tan = c.power_factor().acos().tan();
                for t in 0..24 {
                    assert!((m.load_q[j][t] - m.load_p[j][t] * tan).abs() < 1e-15);
                }
            }
        }
    }
}
