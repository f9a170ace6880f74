//! Run directories: the delimited tables and summary written by each run
//! mode, and the per-figure tables derived from them.
//!
//! A coordination run directory holds
//!
//! | file | rows |
//! |---|---|
//! | `summary.toml` | run status, final cost split, gap history |
//! | `trace.csv` | one per outer iteration |
//! | `dlmc.csv` | one per (iteration, node, hour) |
//! | `substation.csv` | one per (iteration, hour) |
//! | `schedules.csv` | one per (resource, hour) of the final schedule |
//! | `thermal.csv` | one per (transformer, hour) of the final solution |
//! | `gaps.csv` | one per (inner stage, line, hour) |
//!
//! [`build_report`] turns these into the `report/*.csv` figure tables.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::coordinator::{BaselineTrace, CoordinationOutcome, IterationRecord};
use crate::der::DerSchedule;
use crate::error::{Error, Result};
use crate::exactness::GapReport;
use crate::opf::{DlmcSchedule, OpfSolution};
use crate::oracle::{Benchmark, LoadFlowResult};
use crate::scenario::Case;

/// Numbers a reader of a run directory looks at first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub mode: String,
    /// `converged`, `iteration cap`, `solved` or `stopped`.
    pub status: String,
    pub converged: bool,
    pub iterations: usize,
    pub cost: f64,
    pub real: f64,
    pub reactive: f64,
    pub degradation: f64,
    pub penalty: f64,
    pub final_gap: f64,
    pub max_balance_residual: f64,
    pub runtime_s: f64,
    pub nodes: usize,
    pub transformers: usize,
    pub evs: usize,
    pub pvs: usize,
    pub horizon: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub benchmark_cost: Option<f64>,
    /// Total relaxation gap per iteration.
    #[serde(default)]
    pub gap_history: Vec<f64>,
}

impl RunSummary {
    fn new(mode: &str, case: &Case, solution: &OpfSolution) -> Self {
        RunSummary {
            mode: mode.to_string(),
            status: "solved".into(),
            converged: true,
            iterations: 1,
            cost: solution.cost.system(),
            real: solution.cost.real,
            reactive: solution.cost.reactive,
            degradation: solution.cost.degradation,
            penalty: solution.cost.penalty,
            final_gap: 0.0,
            max_balance_residual: solution.balance_residual,
            runtime_s: 0.0,
            nodes: case.feeder.node_count(),
            transformers: case.feeder.transformers.len(),
            evs: case.scenario.evs.len(),
            pvs: case.scenario.pvs.len(),
            horizon: case.horizon(),
            benchmark_cost: None,
            gap_history: Vec::new(),
        }
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join("summary.toml");
        if !path.is_file() {
            return Err(Error::Invalid(format!("{} is not a run directory (no summary.toml)", dir.display())));
        }
        let text = fs::read_to_string(&path)?;
        toml::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }

    fn write(&self, dir: &Path) -> Result<()> {
        let text = toml::to_string(self).map_err(|e| Error::Parse(format!("summary: {e}")))?;
        fs::write(dir.join("summary.toml"), text)?;
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TraceRow {
    iteration: usize,
    cost: f64,
    real: f64,
    reactive: f64,
    degradation: f64,
    penalty: f64,
    gap: f64,
    gap_transformer: f64,
    gap_line: f64,
    relaxed_gap: f64,
    sigma: f64,
    inner_iterations: usize,
    remedied: bool,
    schedule_delta: f64,
    balance_residual: f64,
    model_changed: bool,
    wall_time: f64,
}

impl From<&IterationRecord> for TraceRow {
    fn from(r: &IterationRecord) -> Self {
        TraceRow {
            iteration: r.iteration,
            cost: r.cost,
            real: r.real,
            reactive: r.reactive,
            degradation: r.degradation,
            penalty: r.penalty,
            gap: r.gap,
            gap_transformer: r.gap_transformer,
            gap_line: r.gap_line,
            relaxed_gap: r.relaxed_gap,
            sigma: r.sigma,
            inner_iterations: r.inner_iterations,
            remedied: r.remedied,
            schedule_delta: r.schedule_delta,
            balance_residual: r.balance_residual,
            model_changed: r.model_changed,
            wall_time: r.wall_time,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct DlmcRow {
    iteration: usize,
    node: usize,
    hour: usize,
    lambda_p: f64,
    lambda_q: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct SubstationRow {
    iteration: usize,
    hour: usize,
    p: f64,
    q: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct ScheduleRow {
    kind: String,
    index: usize,
    node: usize,
    hour: usize,
    p: f64,
    q: f64,
    capacity: f64,
    /// The resource may operate this hour (plugged in, or sunlit).
    active: bool,
    spare: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct ThermalRow {
    transformer: usize,
    node: usize,
    hour: usize,
    top_oil: f64,
    hot_spot: f64,
    current_sq: f64,
    loss_of_life: f64,
    lambda_p: f64,
    lambda_q: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct GapRow {
    iteration: usize,
    stage: usize,
    node: usize,
    transformer: bool,
    hour: usize,
    gap: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct BaselineRow {
    iteration: usize,
    imbalance: f64,
    dual_value: f64,
    network_cost: f64,
    step: f64,
    wall_time: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct LoadFlowRow {
    node: usize,
    hour: usize,
    p: f64,
    q: f64,
    v: f64,
    l: f64,
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    if !path.is_file() {
        return Err(Error::Invalid(format!("missing run artifact {}", path.display())));
    }
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

fn dlmc_rows(iteration: usize, dlmc: &DlmcSchedule) -> impl Iterator<Item = DlmcRow> + '_ {
    dlmc.p.iter().zip(&dlmc.q).enumerate().flat_map(move |(node, (p, q))| {
        p.iter().zip(q).enumerate().map(move |(hour, (&lambda_p, &lambda_q))| DlmcRow { iteration, node, hour, lambda_p, lambda_q })
    })
}

fn schedule_rows(case: &Case, schedule: &DerSchedule) -> Vec<ScheduleRow> {
    let mut rows = Vec::new();
    for (e, (ev, s)) in case.scenario.evs.iter().zip(&schedule.ev).enumerate() {
        for t in 0..case.horizon() {
            let active = ev.window.contains(&t);
            let used = s.p[t].hypot(s.q[t]);
            rows.push(ScheduleRow {
                kind: "ev".into(),
                index: e,
                node: ev.node,
                hour: t,
                p: s.p[t],
                q: s.q[t],
                capacity: ev.inverter,
                active,
                spare: if active { (ev.inverter - used).max(0.0) } else { 0.0 },
            });
        }
    }
    for (i, (pv, s)) in case.scenario.pvs.iter().zip(&schedule.pv).enumerate() {
        for t in 0..case.horizon() {
            let active = pv.is_sunny(t);
            let used = s.p[t].hypot(s.q[t]);
            rows.push(ScheduleRow {
                kind: "pv".into(),
                index: i,
                node: pv.node,
                hour: t,
                p: s.p[t],
                q: s.q[t],
                capacity: pv.nameplate,
                active,
                spare: if active { (pv.nameplate - used).max(0.0) } else { 0.0 },
            });
        }
    }
    rows
}

fn thermal_rows(case: &Case, solution: &OpfSolution) -> Vec<ThermalRow> {
    let mut rows = Vec::new();
    for (k, tr) in case.feeder.transformers.iter().enumerate() {
        for t in 0..case.horizon() {
            let l = solution.flows.l[tr.node][t];
            let h = solution.thermal.h[k][t + 1];
            rows.push(ThermalRow {
                transformer: k,
                node: tr.node,
                hour: t,
                top_oil: h,
                hot_spot: tr.thermal.hot_spot(h, l),
                current_sq: l,
                loss_of_life: solution.thermal.d[k][t],
                lambda_p: solution.lambda_p[tr.node][t],
                lambda_q: solution.lambda_q[tr.node][t],
            });
        }
    }
    rows
}

fn gap_rows<'a>(case: &'a Case, iteration: usize, stages: &'a [GapReport]) -> impl Iterator<Item = GapRow> + 'a {
    stages.iter().enumerate().flat_map(move |(stage, g)| {
        (1..g.terms.len()).flat_map(move |node| {
            g.terms[node].iter().enumerate().map(move |(hour, &gap)| GapRow {
                iteration,
                stage,
                node,
                transformer: case.feeder.transformer_at(node).is_some(),
                hour,
                gap,
            })
        })
    })
}

fn substation_rows<'a>(iteration: usize, p: &'a [f64], q: &'a [f64]) -> impl Iterator<Item = SubstationRow> + 'a {
    p.iter().zip(q).enumerate().map(move |(hour, (&p, &q))| SubstationRow { iteration, hour, p, q })
}

/// Writes every artifact of a coordination run. `benchmark_cost` is stored
/// when the caller compared against the centralized solve.
pub fn write_coordination(dir: &Path, outcome: &CoordinationOutcome, benchmark_cost: Option<f64>, runtime_s: f64) -> Result<()> {
    fs::create_dir_all(dir)?;
    let case = &outcome.case;
    let records = &outcome.trace.records;
    write_rows(&dir.join("trace.csv"), records.iter().map(TraceRow::from))?;
    write_rows(
        &dir.join("dlmc.csv"),
        outcome.trace.dlmc.iter().zip(records).flat_map(|(d, r)| dlmc_rows(r.iteration, d)),
    )?;
    write_rows(&dir.join("substation.csv"), records.iter().flat_map(|r| substation_rows(r.iteration, &r.substation_p, &r.substation_q)))?;
    write_rows(&dir.join("schedules.csv"), schedule_rows(case, &outcome.schedule))?;
    write_rows(&dir.join("thermal.csv"), thermal_rows(case, &outcome.solution))?;
    write_rows(&dir.join("gaps.csv"), gap_rows(case, outcome.inner_gaps_iteration, &outcome.inner_gaps))?;

    let mut summary = RunSummary::new("coordinate", case, &outcome.solution);
    summary.status = if outcome.converged { "converged" } else { "iteration cap" }.into();
    summary.converged = outcome.converged;
    summary.iterations = outcome.iterations;
    summary.final_gap = outcome.gap.total;
    summary.max_balance_residual = records.iter().map(|r| r.balance_residual).fold(0.0, f64::max);
    summary.gap_history = records.iter().map(|r| r.gap).collect();
    summary.benchmark_cost = benchmark_cost;
    summary.runtime_s = runtime_s;
    summary.write(dir)
}

/// Writes the artifacts of a single centralized solve in the coordination layout.
pub fn write_centralized(dir: &Path, case: &Case, bench: &Benchmark, runtime_s: f64) -> Result<()> {
    fs::create_dir_all(dir)?;
    let sol = &bench.solution;
    let (sub_p, sub_q) = sol.substation(case);
    let record = TraceRow {
        iteration: 1,
        cost: bench.cost,
        real: sol.cost.real,
        reactive: sol.cost.reactive,
        degradation: sol.cost.degradation,
        penalty: sol.cost.penalty,
        gap: bench.gap.total,
        gap_transformer: bench.gap.transformer_total,
        gap_line: bench.gap.line_total,
        relaxed_gap: bench.gap.total,
        sigma: 0.0,
        inner_iterations: 0,
        remedied: bench.remedied,
        schedule_delta: 0.0,
        balance_residual: sol.balance_residual,
        model_changed: false,
        wall_time: runtime_s,
    };
    write_rows(&dir.join("trace.csv"), [record])?;
    write_rows(&dir.join("dlmc.csv"), dlmc_rows(1, &bench.dlmc))?;
    write_rows(&dir.join("substation.csv"), substation_rows(1, &sub_p, &sub_q))?;
    write_rows(&dir.join("schedules.csv"), schedule_rows(case, &bench.schedule))?;
    write_rows(&dir.join("thermal.csv"), thermal_rows(case, sol))?;
    write_rows(&dir.join("gaps.csv"), gap_rows(case, 1, std::slice::from_ref(&bench.gap)))?;
    let mut summary = RunSummary::new("centralized", case, sol);
    summary.final_gap = bench.gap.total;
    summary.gap_history = vec![bench.gap.total];
    summary.benchmark_cost = Some(bench.cost);
    summary.runtime_s = runtime_s;
    summary.write(dir)
}

/// Writes the dual-decomposition trace (`baseline.csv`) and summary.
pub fn write_baseline(dir: &Path, case: &Case, trace: &BaselineTrace, runtime_s: f64) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_rows(
        &dir.join("baseline.csv"),
        trace.records.iter().map(|r| BaselineRow {
            iteration: r.iteration,
            imbalance: r.imbalance,
            dual_value: r.dual_value,
            network_cost: r.network_cost,
            step: r.step,
            wall_time: r.wall_time,
        }),
    )?;
    write_rows(&dir.join("schedules.csv"), schedule_rows(case, &trace.schedule))?;
    let last = trace.records.last();
    let summary = RunSummary {
        mode: "baseline-dual".into(),
        status: if last.is_some_and(|r| r.imbalance <= 1e-7) { "converged" } else { "stopped" }.into(),
        converged: last.is_some_and(|r| r.imbalance <= 1e-7),
        iterations: trace.records.len(),
        cost: trace.best_dual(),
        real: 0.0,
        reactive: 0.0,
        degradation: 0.0,
        penalty: 0.0,
        final_gap: 0.0,
        max_balance_residual: trace.records.iter().map(|r| r.imbalance).fold(0.0, f64::max),
        runtime_s,
        nodes: case.feeder.node_count(),
        transformers: case.feeder.transformers.len(),
        evs: case.scenario.evs.len(),
        pvs: case.scenario.pvs.len(),
        horizon: case.horizon(),
        benchmark_cost: None,
        gap_history: Vec::new(),
    };
    summary.write(dir)
}

/// Writes a load-flow result (`loadflow.csv`) and summary.
pub fn write_loadflow(dir: &Path, case: &Case, lf: &LoadFlowResult, runtime_s: f64) -> Result<()> {
    fs::create_dir_all(dir)?;
    let f = &lf.flows;
    let rows = (0..case.feeder.node_count())
        .flat_map(|j| (0..case.horizon()).map(move |t| LoadFlowRow { node: j, hour: t, p: f.p[j][t], q: f.q[j][t], v: f.v[j][t], l: f.l[j][t] }));
    write_rows(&dir.join("loadflow.csv"), rows)?;
    let summary = RunSummary {
        mode: "loadflow".into(),
        status: "solved".into(),
        converged: true,
        iterations: lf.iterations,
        cost: 0.0,
        real: 0.0,
        reactive: 0.0,
        degradation: 0.0,
        penalty: 0.0,
        final_gap: 0.0,
        max_balance_residual: lf.residual,
        runtime_s,
        nodes: case.feeder.node_count(),
        transformers: case.feeder.transformers.len(),
        evs: case.scenario.evs.len(),
        pvs: case.scenario.pvs.len(),
        horizon: case.horizon(),
        benchmark_cost: None,
        gap_history: Vec::new(),
    };
    summary.write(dir)
}

/// Names of the tables written by [`build_report`].
pub const REPORT_TABLES: [&str; 7] = [
    "fig2_cost_gap.csv",
    "fig3_substation_q.csv",
    "fig4_cost_components.csv",
    "fig6_spare_inverter.csv",
    "fig7_dlmc_lol.csv",
    "fig8_gap_per_line.csv",
    "fig10_qdlmc.csv",
];

/// Fraction of an inverter's rating that must be unused for it to count as
/// having spare capacity. Proximal iterates approach a saturated inverter from
/// inside and stop a few tenths of a percent short of its rating.
pub const SPARE_FRACTION: f64 = 0.01;

/// Whether `spare` unused capacity out of `rating` counts as spare.
pub fn has_spare(spare: f64, rating: f64) -> bool {
    spare > SPARE_FRACTION * rating
}

#[derive(Serialize)]
struct CostGapRow {
    iteration: usize,
    cost: f64,
    reference: f64,
    cost_gap: f64,
}

#[derive(Serialize)]
struct ComponentRow {
    iteration: usize,
    real: f64,
    reactive: f64,
    degradation: f64,
    penalty: f64,
    total: f64,
}

#[derive(Serialize)]
struct SpareRow {
    hour: usize,
    capacity: f64,
    used: f64,
    spare: f64,
    reactive: f64,
    resources_with_spare: usize,
    /// Largest |λ^Q| over the nodes of resources with spare capacity ($/MVARh).
    max_abs_lambda_q_at_spare: f64,
}

#[derive(Serialize)]
struct LineGapRow {
    iteration: usize,
    stage: usize,
    node: usize,
    transformer: bool,
    gap: f64,
}

/// Reads a run directory and writes the seven figure tables into `report/`.
/// Returns the paths written.
pub fn build_report(run_dir: &Path) -> Result<Vec<PathBuf>> {
    let summary = RunSummary::read(run_dir)?;
    let trace: Vec<TraceRow> = read_rows(&run_dir.join("trace.csv"))?;
    if trace.is_empty() {
        return Err(Error::Invalid(format!("{}: trace.csv has no iterations", run_dir.display())));
    }
    let substation: Vec<SubstationRow> = read_rows(&run_dir.join("substation.csv"))?;
    let dlmc: Vec<DlmcRow> = read_rows(&run_dir.join("dlmc.csv"))?;
    let schedules: Vec<ScheduleRow> = read_rows(&run_dir.join("schedules.csv"))?;
    let thermal: Vec<ThermalRow> = read_rows(&run_dir.join("thermal.csv"))?;
    let gaps: Vec<GapRow> = read_rows(&run_dir.join("gaps.csv"))?;

    let out = run_dir.join("report");
    fs::create_dir_all(&out)?;
    let path = |name: &str| out.join(name);
    let reference = summary.benchmark_cost.unwrap_or(summary.cost);

    write_rows(
        &path(REPORT_TABLES[0]),
        trace.iter().map(|r| CostGapRow { iteration: r.iteration, cost: r.cost, reference, cost_gap: r.cost - reference }),
    )?;
    write_rows(&path(REPORT_TABLES[1]), substation.iter().map(|r| SubstationRow { iteration: r.iteration, hour: r.hour, p: r.p, q: r.q }))?;
    write_rows(
        &path(REPORT_TABLES[2]),
        trace.iter().map(|r| ComponentRow {
            iteration: r.iteration,
            real: r.real,
            reactive: r.reactive,
            degradation: r.degradation,
            penalty: r.penalty,
            total: r.cost,
        }),
    )?;

    let last_iteration = trace.last().map_or(0, |r| r.iteration);
    let final_lambda_q = |node: usize, hour: usize| {
        dlmc.iter().find(|d| d.iteration == last_iteration && d.node == node && d.hour == hour).map_or(0.0, |d| d.lambda_q)
    };
    let spare: Vec<SpareRow> = (0..summary.horizon)
        .map(|hour| {
            let active: Vec<&ScheduleRow> = schedules.iter().filter(|s| s.hour == hour && s.active).collect();
            let with_spare: Vec<&&ScheduleRow> = active.iter().filter(|s| has_spare(s.spare, s.capacity)).collect();
            SpareRow {
                hour,
                capacity: active.iter().map(|s| s.capacity).sum(),
                used: active.iter().map(|s| s.p.hypot(s.q)).sum(),
                spare: active.iter().map(|s| s.spare).sum(),
                reactive: active.iter().map(|s| s.q).sum(),
                resources_with_spare: with_spare.len(),
                max_abs_lambda_q_at_spare: with_spare.iter().map(|s| final_lambda_q(s.node, hour).abs()).fold(0.0, f64::max),
            }
        })
        .collect();
    write_rows(&path(REPORT_TABLES[3]), spare)?;
    write_rows(&path(REPORT_TABLES[4]), thermal)?;

    let mut per_line: Vec<LineGapRow> = Vec::new();
    for g in &gaps {
        match per_line.iter_mut().find(|r| r.stage == g.stage && r.node == g.node) {
            Some(r) => r.gap += g.gap,
            None => per_line.push(LineGapRow { iteration: g.iteration, stage: g.stage, node: g.node, transformer: g.transformer, gap: g.gap }),
        }
    }
    write_rows(&path(REPORT_TABLES[5]), per_line)?;

    let transformer_nodes: Vec<usize> = {
        let mut v: Vec<usize> = read_rows::<ThermalRow>(&run_dir.join("thermal.csv"))?.iter().map(|r| r.node).collect();
        v.dedup();
        v
    };
    write_rows(
        &path(REPORT_TABLES[6]),
        dlmc.iter().filter(|d| transformer_nodes.contains(&d.node)).map(|d| DlmcRow { ..*d }),
    )?;
    Ok(REPORT_TABLES.iter().map(|n| path(n)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_directory_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(build_report(dir.path()), Err(Error::Invalid(_))));
    }
}
