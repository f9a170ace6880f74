//! Radial feeder data model and its structural validation.
//!
//! Nodes are dense integers `0..=N` with node 0 the root (the T&D interface).
//! The line feeding node `j` is also indexed by `j`. Node ids must be in
//! topological order (every parent precedes its children), which lets the
//! network algorithms walk the tree with plain index loops.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::thermal::TransformerThermalParams;
use crate::units::PerUnitBase;

pub type NodeId = usize;

/// Series impedance and squared ampacity of the line feeding a node (p.u.).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub r: f64,
    pub x: f64,
    pub l_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LoadClass {
    #[default]
    Residential,
    Commercial,
}

impl LoadClass {
    /// Power factor used by the synthetic load generator.
    pub fn power_factor(self) -> f64 {
        match self {
            LoadClass::Residential => 0.95,
            LoadClass::Commercial => 0.85,
        }
    }
}

/// A service transformer: the line into leaf node `node`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transformer {
    pub node: NodeId,
    pub nameplate_kva: f64,
    pub thermal: TransformerThermalParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeederModel {
    pub base: PerUnitBase,
    /// Squared root voltage (p.u.), held fixed.
    pub root_voltage: f64,
    pub parent: Vec<Option<NodeId>>,
    pub children: Vec<Vec<NodeId>>,
    /// Indexed by node; `None` only at the root.
    pub lines: Vec<Option<Line>>,
    /// Squared voltage bounds per node.
    pub v_min: Vec<f64>,
    pub v_max: Vec<f64>,
    pub transformers: Vec<Transformer>,
    /// Conventional demand `[node][hour]` (p.u.).
    pub load_p: Vec<Vec<f64>>,
    pub load_q: Vec<Vec<f64>>,
    pub load_class: Vec<Option<LoadClass>>,
    transformer_at: Vec<Option<usize>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub node: Option<NodeId>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.node {
            Some(n) => write!(f, "{} (node {n})", self.message),
            None => f.write_str(&self.message),
        }
    }
}

/// Every violated invariant of a model; empty iff the model is valid.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, node: Option<NodeId>, message: impl Into<String>) {
        self.violations.push(Violation { node, message: message.into() });
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_valid() {
            return Ok(());
        }
        let text: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        Err(Error::Invalid(text.join("; ")))
    }
}

impl FeederModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        base: PerUnitBase,
        root_voltage: f64,
        parent: Vec<Option<NodeId>>,
        lines: Vec<Option<Line>>,
        v_min: Vec<f64>,
        v_max: Vec<f64>,
        transformers: Vec<Transformer>,
        load_p: Vec<Vec<f64>>,
        load_q: Vec<Vec<f64>>,
        load_class: Vec<Option<LoadClass>>,
    ) -> Result<Self> {
        let model = Self::assemble(
            base, root_voltage, parent, lines, v_min, v_max, transformers, load_p, load_q,
            load_class,
        );
        validate_radial(&model).into_result()?;
        Ok(model)
    }

    /// Builds without validating; used by loaders that report violations themselves.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn assemble(
        base: PerUnitBase,
        root_voltage: f64,
        parent: Vec<Option<NodeId>>,
        lines: Vec<Option<Line>>,
        v_min: Vec<f64>,
        v_max: Vec<f64>,
        transformers: Vec<Transformer>,
        load_p: Vec<Vec<f64>>,
        load_q: Vec<Vec<f64>>,
        load_class: Vec<Option<LoadClass>>,
    ) -> Self {
        let n = parent.len();
        let mut children = vec![Vec::new(); n];
        for (j, p) in parent.iter().enumerate() {
            if let Some(p) = *p {
                if p < n {
                    children[p].push(j);
                }
            }
        }
        let mut transformer_at = vec![None; n];
        for (k, t) in transformers.iter().enumerate() {
            if t.node < n {
                transformer_at[t.node] = Some(k);
            }
        }
        FeederModel {
            base,
            root_voltage,
            parent,
            children,
            lines,
            v_min,
            v_max,
            transformers,
            load_p,
            load_q,
            load_class,
            transformer_at,
        }
    }

    /// Number of nodes including the root.
    pub fn node_count(&self) -> usize {
        self.parent.len()
    }

    /// Number of lines, i.e. non-root nodes.
    pub fn line_count(&self) -> usize {
        self.parent.len().saturating_sub(1)
    }

    pub fn horizon(&self) -> usize {
        self.load_p.first().map_or(0, Vec::len)
    }

    /// Parent of a non-root node.
    pub fn up(&self, j: NodeId) -> NodeId {
        self.parent[j].expect("root has no parent")
    }

    pub fn line(&self, j: NodeId) -> &Line {
        self.lines[j].as_ref().expect("root has no line")
    }

    /// Index into `transformers` if line `j` is a service transformer.
    pub fn transformer_at(&self, j: NodeId) -> Option<usize> {
        self.transformer_at.get(j).copied().flatten()
    }

    pub fn is_leaf(&self, j: NodeId) -> bool {
        self.children[j].is_empty()
    }

    /// All nodes in depth-first preorder, starting at the root.
    pub fn depth_first(&self) -> Vec<NodeId> {
        let mut order = Vec::with_capacity(self.node_count());
        let mut stack = vec![0];
        while let Some(j) = stack.pop() {
            order.push(j);
            for &c in self.children[j].iter().rev() {
                stack.push(c);
            }
        }
        order
    }

    /// Replaces a transformer's thermal parameters, e.g. after densifying breakpoints.
    pub fn set_thermal(&mut self, k: usize, thermal: TransformerThermalParams) {
        self.transformers[k].thermal = thermal;
    }
}

/// Checks every structural and parametric invariant, collecting all violations.
pub fn validate_radial(model: &FeederModel) -> ValidationReport {
    let mut report = ValidationReport::default();
    let n = model.parent.len();
    if n < 2 {
        report.push(None, "feeder needs a root and at least one line");
        return report;
    }
    if model.parent[0].is_some() {
        report.push(Some(0), "root must not have a parent");
    }

    let mut tree_ok = true;
    for j in 1..n {
        match model.parent[j] {
            None => {
                report.push(Some(j), "non-root node has no parent");
                tree_ok = false;
            }
            Some(p) if p >= n => {
                report.push(Some(j), format!("parent {p} does not exist"));
                tree_ok = false;
            }
            Some(_) => {}
        }
    }
    if tree_ok {
        for j in 1..n {
            let mut cur = j;
            let mut steps = 0;
            while let Some(p) = model.parent[cur] {
                cur = p;
                steps += 1;
                if steps > n {
                    break;
                }
            }
            if cur != 0 || steps > n {
                report.push(Some(j), format!("not a tree at node {j}: cycle or unreachable"));
                tree_ok = false;
            }
        }
    }
    if tree_ok {
        for j in 1..n {
            if model.up(j) >= j {
                report.push(Some(j), format!("node {j} precedes its parent {}", model.up(j)));
            }
        }
        if model.children[0].len() != 1 {
            report.push(
                Some(0),
                format!("root must have one child (has {})", model.children[0].len()),
            );
        }
    }

    if model.lines.len() != n {
        report.push(None, format!("expected {n} line slots, found {}", model.lines.len()));
    } else {
        for j in 1..n {
            match model.lines[j] {
                None => report.push(Some(j), "missing line data"),
                Some(line) => {
                    if !(line.r >= 0.0) || !(line.x >= 0.0) {
                        report.push(Some(j), "line impedance must be nonnegative");
                    }
                    if !(line.l_max > 0.0) {
                        report.push(Some(j), "ampacity limit must be positive");
                    }
                }
            }
        }
    }

    if model.v_min.len() != n || model.v_max.len() != n {
        report.push(None, "voltage limits must cover every node");
    } else {
        for j in 0..n {
            if !(model.v_min[j] > 0.0 && model.v_min[j] < model.v_max[j]) {
                report.push(Some(j), "voltage limits must satisfy 0 < v_min < v_max");
            }
        }
    }
    if !(model.root_voltage > 0.0) {
        report.push(Some(0), "root voltage must be positive");
    }

    let mut seen = BTreeSet::new();
    for t in &model.transformers {
        if t.node == 0 || t.node >= n {
            report.push(Some(t.node), "transformer must sit on an existing non-root node");
            continue;
        }
        if !seen.insert(t.node) {
            report.push(Some(t.node), "duplicate transformer");
        }
        if tree_ok && !model.children[t.node].is_empty() {
            report.push(Some(t.node), "transformer downstream node must be a leaf");
        }
        for msg in t.thermal.violations() {
            report.push(Some(t.node), msg);
        }
    }

    let horizon = model.horizon();
    if horizon == 0 {
        report.push(None, "load series are empty");
    }
    if model.load_p.len() != n || model.load_q.len() != n {
        report.push(None, "load series must cover every node");
    } else {
        for j in 0..n {
            if model.load_p[j].len() != horizon || model.load_q[j].len() != horizon {
                report.push(Some(j), format!("load series length differs from {horizon}"));
            }
            if model.load_p[j].iter().chain(&model.load_q[j]).any(|v| !v.is_finite()) {
                report.push(Some(j), "non-finite load value");
            }
        }
    }
    if model.load_class.len() != n {
        report.push(None, "load class table must cover every node");
    }
    report
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn path_model(n: usize, r: f64, x: f64, horizon: usize) -> FeederModel {
        let parent = (0..n).map(|j| if j == 0 { None } else { Some(j - 1) }).collect();
        let lines = (0..n)
            .map(|j| (j > 0).then_some(Line { r, x, l_max: 10.0 }))
            .collect();
        FeederModel::new(
            PerUnitBase::default(),
            1.0,
            parent,
            lines,
            vec![0.9025; n],
            vec![1.1025; n],
            vec![],
            vec![vec![0.0; horizon]; n],
            vec![vec![0.0; horizon]; n],
            vec![None; n],
        )
        .unwrap()
    }

    #[test]
    fn two_node_model_is_valid() {
        let m = path_model(2, 0.01, 0.01, 1);
        assert!(validate_radial(&m).is_valid());
        assert_eq!(m.line_count(), 1);
    }

    #[test]
    fn root_with_two_children_is_reported() {
        let mut m = path_model(3, 0.01, 0.01, 1);
        m.parent[2] = Some(0);
        let m = FeederModel::assemble(
            m.base, m.root_voltage, m.parent, m.lines, m.v_min, m.v_max, m.transformers,
            m.load_p, m.load_q, m.load_class,
        );
        let report = validate_radial(&m);
        assert!(report.violations.iter().any(|v| v.message.contains("root must have one child")));
    }

    #[test]
    fn cycle_is_reported() {
        let m = path_model(4, 0.01, 0.01, 1);
        let mut parent = m.parent.clone();
        parent[2] = Some(3);
        let m = FeederModel::assemble(
            m.base, m.root_voltage, parent, m.lines, m.v_min, m.v_max, m.transformers, m.load_p,
            m.load_q, m.load_class,
        );
        let report = validate_radial(&m);
        assert!(report.violations.iter().any(|v| v.message.contains("not a tree")));
    }

    #[test]
    fn depth_first_visits_each_node_once() {
        let m = path_model(5, 0.01, 0.01, 2);
        let order = m.depth_first();
        assert_eq!(order, vec![0, 1, 2, 3, 4]);
    }
}
