//! Feeder and scenario files (TOML).
//!
//! Feeder file sections: `[nodes]`, `[[lines]]`, `[[transformers]]`, `[[loads]]`.
//! Scenario file sections: `[prices]`, `[ambient]`, `[[ev]]`, `[[pv]]`.
//! Electrical quantities are per-unit on the declared base unless given with a
//! physical-unit field name (`r_ohm`, `ampacity_a`, `p_kw`, `energy_kwh`, ...),
//! in which case they are normalized at load time. Time series are length-T
//! arrays for hours 1..=T; EV windows list 1-based hours.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feeder::{validate_radial, FeederModel, Line, LoadClass, NodeId, Transformer};
use crate::scenario::{EvParams, PvParams, Scenario, DEFAULT_REACTIVE_PRICE_RATIO};
use crate::thermal::{DegradationSegment, TransformerThermalParams, DEFAULT_DELTA};
use crate::units::{PerUnitBase, DEFAULT_BASE_KV, DEFAULT_BASE_MVA};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum PerNode {
    Uniform(f64),
    Each(Vec<f64>),
}

impl PerNode {
    fn expand(&self, n: usize, what: &str) -> Result<Vec<f64>> {
        match self {
            PerNode::Uniform(v) => Ok(vec![*v; n]),
            PerNode::Each(v) if v.len() == n => Ok(v.clone()),
            PerNode::Each(v) => Err(Error::Dimension(format!("{what} lists {} values for {n} nodes", v.len()))),
        }
    }

    fn compact(values: &[f64]) -> PerNode {
        match values.first() {
            Some(&first) if values.iter().all(|&v| v == first) => PerNode::Uniform(first),
            _ => PerNode::Each(values.to_vec()),
        }
    }
}

fn default_base_mva() -> f64 {
    DEFAULT_BASE_MVA
}
fn default_base_kv() -> f64 {
    DEFAULT_BASE_KV
}
fn default_root_voltage() -> f64 {
    1.0
}
fn default_delta() -> f64 {
    DEFAULT_DELTA
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct NodesSection {
    count: usize,
    #[serde(default = "default_base_mva")]
    base_mva: f64,
    #[serde(default = "default_base_kv")]
    base_kv: f64,
    /// Squared p.u.
    #[serde(default = "default_root_voltage")]
    root_voltage: f64,
    v_min: PerNode,
    v_max: PerNode,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LineRecord {
    node: NodeId,
    parent: NodeId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    r: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    x: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    l_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    r_ohm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    x_ohm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ampacity_a: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TransformerRecord {
    node: NodeId,
    nameplate_kva: f64,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    gamma: Vec<f64>,
    #[serde(default = "default_delta")]
    delta: f64,
    epsilon: f64,
    #[serde(default)]
    ambient_rise: f64,
    h0: f64,
    cost_per_hour: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    hotspot_gain: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    breakpoints: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LoadRecord {
    node: NodeId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    class: Option<LoadClass>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    q: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p_kw: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    q_kvar: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FeederFile {
    nodes: NodesSection,
    lines: Vec<LineRecord>,
    #[serde(default)]
    transformers: Vec<TransformerRecord>,
    #[serde(default)]
    loads: Vec<LoadRecord>,
}

fn pick(pu: Option<f64>, physical: Option<f64>, convert: impl Fn(f64) -> f64, what: &str, node: NodeId) -> Result<f64> {
    match (pu, physical) {
        (Some(v), None) => Ok(v),
        (None, Some(v)) => Ok(convert(v)),
        (Some(_), Some(_)) => Err(Error::Parse(format!("node {node}: {what} given twice"))),
        (None, None) => Err(Error::Parse(format!("node {node}: {what} missing"))),
    }
}

fn pick_series(pu: &Option<Vec<f64>>, physical: &Option<Vec<f64>>, base: &PerUnitBase, what: &str, node: NodeId) -> Result<Vec<f64>> {
    match (pu, physical) {
        (Some(v), None) => Ok(v.clone()),
        (None, Some(v)) => Ok(v.iter().map(|&k| base.kw_to_pu(k)).collect()),
        (Some(_), Some(_)) => Err(Error::Parse(format!("load at node {node}: {what} given twice"))),
        (None, None) => Err(Error::Parse(format!("load at node {node}: {what} missing"))),
    }
}

/// Parses and validates a feeder document.
pub fn load_feeder(text: &str) -> Result<FeederModel> {
    let file: FeederFile = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let n = file.nodes.count;
    if n < 2 {
        return Err(Error::Invalid("feeder needs at least two nodes".into()));
    }
    let base = PerUnitBase::new(file.nodes.base_mva, file.nodes.base_kv)?;
    let mut parent: Vec<Option<NodeId>> = vec![None; n];
    let mut lines: Vec<Option<Line>> = vec![None; n];
    for rec in &file.lines {
        let j = rec.node;
        if j == 0 || j >= n {
            return Err(Error::Invalid(format!("line into node {j} is outside 1..{n}")));
        }
        if parent[j].is_some() {
            return Err(Error::Invalid(format!("not a tree at node {j}: more than one parent")));
        }
        parent[j] = Some(rec.parent);
        lines[j] = Some(Line {
            r: pick(rec.r, rec.r_ohm, |o| base.ohm_to_pu(o), "resistance", j)?,
            x: pick(rec.x, rec.x_ohm, |o| base.ohm_to_pu(o), "reactance", j)?,
            l_max: pick(rec.l_max, rec.ampacity_a, |a| base.ampacity_to_squared_pu(a), "ampacity", j)?,
        });
    }
    let transformers = file
        .transformers
        .iter()
        .map(|t| {
            let m = t.alpha.len();
            if t.beta.len() != m || t.gamma.len() != m {
                return Err(Error::Parse(format!("transformer {}: alpha/beta/gamma lengths differ", t.node)));
            }
            let segments = (0..m)
                .map(|i| DegradationSegment { alpha: t.alpha[i], beta: t.beta[i], gamma: t.gamma[i] })
                .collect();
            Ok(Transformer {
                node: t.node,
                nameplate_kva: t.nameplate_kva,
                thermal: TransformerThermalParams {
                    segments,
                    delta: t.delta,
                    epsilon: t.epsilon,
                    ambient_rise: t.ambient_rise,
                    h0: t.h0,
                    cost_per_hour: t.cost_per_hour,
                    hotspot_gain: t.hotspot_gain,
                    breakpoints: t.breakpoints.clone(),
                },
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let horizon = file
        .loads
        .iter()
        .find_map(|l| l.p.as_ref().or(l.p_kw.as_ref()).map(Vec::len))
        .ok_or_else(|| Error::Parse("feeder has no [[loads]] entries; cannot infer horizon".into()))?;
    let mut load_p = vec![vec![0.0; horizon]; n];
    let mut load_q = vec![vec![0.0; horizon]; n];
    let mut load_class = vec![None; n];
    let mut seen = vec![false; n];
    for rec in &file.loads {
        let j = rec.node;
        if j >= n {
            return Err(Error::Invalid(format!("load at missing node {j}")));
        }
        if std::mem::replace(&mut seen[j], true) {
            return Err(Error::Invalid(format!("node {j} has two load entries")));
        }
        load_p[j] = pick_series(&rec.p, &rec.p_kw, &base, "p", j)?;
        load_q[j] = pick_series(&rec.q, &rec.q_kvar, &base, "q", j)?;
        load_class[j] = rec.class;
    }
    let model = FeederModel::assemble(
        base,
        file.nodes.root_voltage,
        parent,
        lines,
        file.nodes.v_min.expand(n, "v_min")?,
        file.nodes.v_max.expand(n, "v_max")?,
        transformers,
        load_p,
        load_q,
        load_class,
    );
    validate_radial(&model).into_result()?;
    Ok(model)
}

/// Writes a feeder in per-unit fields; [`load_feeder`] reads it back identically.
pub fn save_feeder(model: &FeederModel) -> Result<String> {
    let n = model.node_count();
    let file = FeederFile {
        nodes: NodesSection {
            count: n,
            base_mva: model.base.mva,
            base_kv: model.base.kv,
            root_voltage: model.root_voltage,
            v_min: PerNode::compact(&model.v_min),
            v_max: PerNode::compact(&model.v_max),
        },
        lines: (1..n)
            .map(|j| {
                let l = model.line(j);
                LineRecord {
                    node: j,
                    parent: model.up(j),
                    r: Some(l.r),
                    x: Some(l.x),
                    l_max: Some(l.l_max),
                    r_ohm: None,
                    x_ohm: None,
                    ampacity_a: None,
                }
            })
            .collect(),
        transformers: model
            .transformers
            .iter()
            .map(|t| {
                let th = &t.thermal;
                TransformerRecord {
                    node: t.node,
                    nameplate_kva: t.nameplate_kva,
                    alpha: th.segments.iter().map(|s| s.alpha).collect(),
                    beta: th.segments.iter().map(|s| s.beta).collect(),
                    gamma: th.segments.iter().map(|s| s.gamma).collect(),
                    delta: th.delta,
                    epsilon: th.epsilon,
                    ambient_rise: th.ambient_rise,
                    h0: th.h0,
                    cost_per_hour: th.cost_per_hour,
                    hotspot_gain: th.hotspot_gain,
                    breakpoints: th.breakpoints.clone(),
                }
            })
            .collect(),
        loads: (0..n)
            .filter(|&j| {
                model.load_class[j].is_some()
                    || model.load_p[j].iter().chain(&model.load_q[j]).any(|&v| v != 0.0)
                    || j == n - 1
            })
            .map(|j| LoadRecord {
                node: j,
                class: model.load_class[j],
                p: Some(model.load_p[j].clone()),
                q: Some(model.load_q[j].clone()),
                p_kw: None,
                q_kvar: None,
            })
            .collect(),
    };
    toml::to_string(&file).map_err(|e| Error::Parse(e.to_string()))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PricesSection {
    energy: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    reactive: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct AmbientSection {
    temperature: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EvRecord {
    node: NodeId,
    window: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    energy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    charger: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    inverter: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    energy_kwh: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    charger_kw: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    inverter_kva: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PvRecord {
    node: NodeId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    nameplate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    nameplate_kva: Option<f64>,
    irradiance: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ScenarioFile {
    horizon: usize,
    prices: PricesSection,
    ambient: AmbientSection,
    #[serde(default)]
    ev: Vec<EvRecord>,
    #[serde(default)]
    pv: Vec<PvRecord>,
}

/// Parses a scenario document; physical-unit fields are normalized with `base`.
pub fn load_scenario(text: &str, base: &PerUnitBase) -> Result<Scenario> {
    let file: ScenarioFile = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let price_q = file
        .prices
        .reactive
        .unwrap_or_else(|| file.prices.energy.iter().map(|c| c * DEFAULT_REACTIVE_PRICE_RATIO).collect());
    let evs = file
        .ev
        .iter()
        .map(|e| {
            if e.window.iter().any(|&h| h == 0 || h > file.horizon) {
                return Err(Error::Invalid(format!("EV at node {}: window hours must lie in 1..={}", e.node, file.horizon)));
            }
            let mut window: Vec<usize> = e.window.iter().map(|h| h - 1).collect();
            window.sort_unstable();
            window.dedup();
            Ok(EvParams {
                node: e.node,
                window,
                energy: pick(e.energy, e.energy_kwh, |k| base.kw_to_pu(k), "energy", e.node)?,
                charger: pick(e.charger, e.charger_kw, |k| base.kw_to_pu(k), "charger", e.node)?,
                inverter: pick(e.inverter, e.inverter_kva, |k| base.kw_to_pu(k), "inverter", e.node)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let pvs = file
        .pv
        .iter()
        .map(|p| {
            Ok(PvParams {
                node: p.node,
                nameplate: pick(p.nameplate, p.nameplate_kva, |k| base.kw_to_pu(k), "nameplate", p.node)?,
                irradiance: p.irradiance.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let scenario = Scenario {
        horizon: file.horizon,
        price_p: file.prices.energy,
        price_q,
        ambient: file.ambient.temperature,
        evs,
        pvs,
    };
    let max_node = scenario.evs.iter().map(|e| e.node).chain(scenario.pvs.iter().map(|p| p.node)).max().unwrap_or(0);
    scenario.check(max_node + 1)?;
    Ok(scenario)
}

pub fn save_scenario(s: &Scenario) -> Result<String> {
    let file = ScenarioFile {
        horizon: s.horizon,
        prices: PricesSection { energy: s.price_p.clone(), reactive: Some(s.price_q.clone()) },
        ambient: AmbientSection { temperature: s.ambient.clone() },
        ev: s
            .evs
            .iter()
            .map(|e| EvRecord {
                node: e.node,
                window: e.window.iter().map(|t| t + 1).collect(),
                energy: Some(e.energy),
                charger: Some(e.charger),
                inverter: Some(e.inverter),
                energy_kwh: None,
                charger_kw: None,
                inverter_kva: None,
            })
            .collect(),
        pv: s
            .pvs
            .iter()
            .map(|p| PvRecord { node: p.node, nameplate: Some(p.nameplate), nameplate_kva: None, irradiance: p.irradiance.clone() })
            .collect(),
    };
    toml::to_string(&file).map_err(|e| Error::Parse(e.to_string()))
}

pub fn read_feeder(path: &Path) -> Result<FeederModel> {
    load_feeder(&std::fs::read_to_string(path)?)
}

pub fn read_scenario(path: &Path, base: &PerUnitBase) -> Result<Scenario> {
    load_scenario(&std::fs::read_to_string(path)?, base)
}

/// Node counts per section, used by the CLI validate mode.
pub fn summarize(model: &FeederModel) -> BTreeMap<&'static str, usize> {
    BTreeMap::from([
        ("nodes", model.node_count()),
        ("lines", model.line_count()),
        ("transformers", model.transformers.len()),
        ("hours", model.horizon()),
    ])
}
