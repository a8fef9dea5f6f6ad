//! Per-cell summaries and the comparison table.

use std::collections::BTreeMap;

use bida_core::decision_mdp::TerminalStatus;
use bida_core::traffic_world::ScenarioKind;
use serde::{Deserialize, Serialize};

use crate::agents::AgentKind;
use crate::episode::EpisodeMetrics;
use crate::BenchError;

/// Identity of one evaluation cell.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellKey {
    pub scenario: ScenarioKind,
    pub sv_count: usize,
    pub agent: AgentKind,
}

pub fn scenario_label(kind: ScenarioKind) -> &'static str {
    match kind {
        ScenarioKind::MultiLaneHighway => "multi_lane_highway",
        ScenarioKind::UnsignalizedTIntersection => "unsignalized_t_intersection",
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellSummary {
    pub key: CellKey,
    pub episodes: usize,
    pub collisions: usize,
    pub invasive_actions: usize,
    pub task_complete: usize,
    pub infeasible: usize,
    pub timeouts: usize,
    /// Over TaskComplete episodes; absent when there are none.
    pub mean_completion_time: Option<f64>,
    pub min_completion_time: Option<f64>,
    pub max_completion_time: Option<f64>,
    pub mean_min_distance: f64,
    pub mean_return: f64,
}

pub fn summarize(key: CellKey, metrics: &[EpisodeMetrics]) -> CellSummary {
    let count = |s: TerminalStatus| metrics.iter().filter(|m| m.outcome == s).count();
    let times: Vec<f64> = metrics.iter().filter_map(|m| m.completion_time).collect();
    let mean = |xs: &[f64]| (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64);
    let finite_d: Vec<f64> = metrics
        .iter()
        .map(|m| m.min_distance)
        .filter(|d| d.is_finite())
        .collect();
    let returns: Vec<f64> = metrics.iter().map(|m| m.discounted_return).collect();
    CellSummary {
        key,
        episodes: metrics.len(),
        collisions: metrics.iter().filter(|m| m.collision).count(),
        invasive_actions: metrics.iter().map(|m| m.invasive_actions).sum(),
        task_complete: count(TerminalStatus::TaskComplete),
        infeasible: count(TerminalStatus::Infeasible),
        timeouts: count(TerminalStatus::Timeout),
        mean_completion_time: mean(&times),
        min_completion_time: times.iter().copied().reduce(f64::min),
        max_completion_time: times.iter().copied().reduce(f64::max),
        mean_min_distance: mean(&finite_d).unwrap_or(f64::NAN),
        mean_return: mean(&returns).unwrap_or(0.0),
    }
}

pub const TABLE_HEADER: [&str; 15] = [
    "scenario",
    "sv_count",
    "agent",
    "episodes",
    "collisions",
    "invasive_actions",
    "task_complete",
    "infeasible",
    "timeouts",
    "running",
    "mean_completion_time",
    "min_completion_time",
    "max_completion_time",
    "mean_min_distance",
    "mean_return",
];

fn fmt_f(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.4}")
    } else {
        String::new()
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f).unwrap_or_default()
}

fn cell_row(c: &CellSummary) -> Vec<String> {
    let running = c.episodes - c.collisions - c.task_complete - c.infeasible - c.timeouts;
    vec![
        scenario_label(c.key.scenario).to_string(),
        c.key.sv_count.to_string(),
        c.key.agent.label().to_string(),
        c.episodes.to_string(),
        c.collisions.to_string(),
        c.invasive_actions.to_string(),
        c.task_complete.to_string(),
        c.infeasible.to_string(),
        c.timeouts.to_string(),
        running.to_string(),
        fmt_opt(c.mean_completion_time),
        fmt_opt(c.min_completion_time),
        fmt_opt(c.max_completion_time),
        fmt_f(c.mean_min_distance),
        fmt_f(c.mean_return),
    ]
}

/// Mean over cells of every column; time columns average the cells that have them.
fn average_row(scenario: ScenarioKind, agent: AgentKind, cells: &[&CellSummary]) -> Vec<String> {
    let n = cells.len() as f64;
    let m = |f: &dyn Fn(&CellSummary) -> f64| fmt_f(cells.iter().map(|c| f(c)).sum::<f64>() / n);
    let opt_mean = |f: &dyn Fn(&CellSummary) -> Option<f64>| {
        let xs: Vec<f64> = cells.iter().filter_map(|c| f(c)).collect();
        fmt_opt((!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64))
    };
    vec![
        scenario_label(scenario).to_string(),
        "Average".to_string(),
        agent.label().to_string(),
        m(&|c| c.episodes as f64),
        m(&|c| c.collisions as f64),
        m(&|c| c.invasive_actions as f64),
        m(&|c| c.task_complete as f64),
        m(&|c| c.infeasible as f64),
        m(&|c| c.timeouts as f64),
        m(&|c| (c.episodes - c.collisions - c.task_complete - c.infeasible - c.timeouts) as f64),
        opt_mean(&|c| c.mean_completion_time),
        opt_mean(&|c| c.min_completion_time),
        opt_mean(&|c| c.max_completion_time),
        m(&|c| c.mean_min_distance),
        m(&|c| c.mean_return),
    ]
}

/// CSV with one row per cell, ordered by scenario, density and agent, followed by one
/// "Average" row per scenario and agent.
pub fn comparison_csv(cells: &[CellSummary]) -> Result<String, BenchError> {
    let mut sorted: Vec<&CellSummary> = cells.iter().collect();
    sorted.sort_by(|a, b| a.key.cmp(&b.key));
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let io = |e: csv::Error| BenchError::Runtime(e.to_string());
    w.write_record(TABLE_HEADER).map_err(io)?;
    let mut groups: BTreeMap<ScenarioKind, BTreeMap<AgentKind, Vec<&CellSummary>>> = BTreeMap::new();
    for c in &sorted {
        w.write_record(cell_row(c)).map_err(io)?;
        groups
            .entry(c.key.scenario)
            .or_default()
            .entry(c.key.agent)
            .or_default()
            .push(c);
    }
    for (scenario, agents) in &groups {
        for (agent, cs) in agents {
            w.write_record(average_row(*scenario, *agent, cs)).map_err(io)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| BenchError::Runtime(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}

/// Per-episode metrics as CSV.
pub fn episodes_csv(metrics: &[EpisodeMetrics]) -> Result<String, BenchError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let io = |e: csv::Error| BenchError::Runtime(e.to_string());
    w.write_record([
        "episode",
        "seed",
        "outcome",
        "completion_time",
        "collision",
        "invasive_actions",
        "min_distance",
        "discounted_return",
        "decisions",
        "fallbacks",
    ])
    .map_err(io)?;
    for m in metrics {
        w.write_record([
            m.episode.to_string(),
            m.seed.to_string(),
            format!("{:?}", m.outcome),
            fmt_opt(m.completion_time),
            (m.collision as u8).to_string(),
            m.invasive_actions.to_string(),
            fmt_f(m.min_distance),
            fmt_f(m.discounted_return),
            m.decisions.to_string(),
            m.fallbacks.to_string(),
        ])
        .map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| BenchError::Runtime(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(outcome: TerminalStatus, t: Option<f64>, invasive: usize) -> EpisodeMetrics {
        EpisodeMetrics {
            episode: 0,
            seed: 0,
            outcome,
            completion_time: t,
            collision: outcome == TerminalStatus::Collided,
            invasive_actions: invasive,
            min_distance: 5.0,
            discounted_return: 1.0,
            decisions: 10,
            fallbacks: 0,
        }
    }

    fn key() -> CellKey {
        CellKey {
            scenario: ScenarioKind::MultiLaneHighway,
            sv_count: 10,
            agent: AgentKind::Bida,
        }
    }

    #[test]
    fn all_success_mean() {
        let ms: Vec<_> = (0..10).map(|_| m(TerminalStatus::TaskComplete, Some(6.0), 0)).collect();
        let s = summarize(key(), &ms);
        assert_eq!(s.mean_completion_time, Some(6.0));
        assert_eq!(s.task_complete, 10);
    }

    #[test]
    fn no_completions_leave_time_absent() {
        let ms = vec![m(TerminalStatus::Collided, None, 0), m(TerminalStatus::Timeout, None, 1)];
        let s = summarize(key(), &ms);
        assert_eq!(s.mean_completion_time, None);
        let csv = comparison_csv(&[s]).unwrap();
        let row = csv.lines().nth(1).unwrap();
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields[10], "");
        assert_eq!(fields[4], "1");
    }

    #[test]
    fn hand_built_cell() {
        let ms = vec![
            m(TerminalStatus::TaskComplete, Some(6.0), 1),
            m(TerminalStatus::Collided, None, 2),
            m(TerminalStatus::TaskComplete, Some(7.5), 0),
        ];
        let s = summarize(key(), &ms);
        assert_eq!((s.collisions, s.invasive_actions, s.task_complete), (1, 3, 2));
        assert_eq!(s.mean_completion_time, Some(6.75));
        assert_eq!((s.min_completion_time, s.max_completion_time), (Some(6.0), Some(7.5)));
    }

    #[test]
    fn average_rows_follow_cells() {
        let mut a = summarize(key(), &[m(TerminalStatus::Collided, None, 0)]);
        let mut b = a.clone();
        a.key.sv_count = 5;
        b.key.sv_count = 20;
        b.collisions = 0;
        let csv = comparison_csv(&[b, a]).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[1].contains(",5,"));
        assert!(lines[3].starts_with("multi_lane_highway,Average,BIDA,1.0000,0.5000"));
    }
}
