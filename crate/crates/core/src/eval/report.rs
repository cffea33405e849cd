use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{pass_at_k, EvalError, FilterKind};
use crate::task::Difficulty;

pub const ALL_DIFFICULTIES: &str = "all";

/// Private-test outcome of one task's candidates in one round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub task_id: String,
    pub difficulty: Difficulty,
    /// Candidates generated.
    pub n: usize,
    /// Candidates passing every private test.
    pub c: usize,
    pub correct_ids: Vec<usize>,
    /// Ids kept by each filter that could be applied.
    pub retained: BTreeMap<FilterKind, Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundLabel {
    Round(usize),
    /// The per-task round picked by the round-selection rule.
    Selected,
}

impl fmt::Display for RoundLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RoundLabel::Round(r) => write!(f, "{r}"),
            RoundLabel::Selected => f.write_str("selected"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub round: RoundLabel,
    pub difficulty: String,
    pub metric: String,
    pub filter: FilterKind,
    /// Mean over tasks, in percent.
    pub value: f64,
    pub tasks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub rows: Vec<ReportRow>,
    /// Tasks left out, with the reason.
    pub excluded: Vec<(String, String)>,
}

/// pass@k of one record under a filter, or `None` when the filter was not
/// applied to this task.
///
/// An empty retained set scores 0. When fewer than k candidates are
/// available, the score is 1 if any of them is correct and 0 otherwise.
pub fn filtered_pass_at_k(record: &EvalRecord, filter: FilterKind, k: usize) -> Option<f64> {
    let (n, c) = match filter {
        FilterKind::None => (record.n, record.c),
        other => {
            let kept = record.retained.get(&other)?;
            let correct = kept.iter().filter(|id| record.correct_ids.contains(id)).count();
            (kept.len(), correct)
        }
    };
    if n == 0 {
        return Some(0.0);
    }
    if n < k {
        return Some(if c > 0 { 1.0 } else { 0.0 });
    }
    Some(pass_at_k(n, c, k).expect("1 <= k <= n and c <= n"))
}

/// Per-difficulty and overall means for every round label, filter and k.
pub fn aggregate_report(
    records: &[(RoundLabel, EvalRecord)],
    ks: &[usize],
    filters: &[FilterKind],
) -> Result<Report, EvalError> {
    if records.is_empty() {
        return Err(EvalError::NoRecords);
    }
    let rounds: BTreeSet<RoundLabel> = records.iter().map(|(r, _)| *r).collect();
    let mut rows = Vec::new();
    for &round in &rounds {
        let in_round: Vec<&EvalRecord> = records.iter().filter(|(r, _)| *r == round).map(|(_, e)| e).collect();
        for &filter in filters {
            for &k in ks {
                let mut by_difficulty: BTreeMap<Difficulty, Vec<f64>> = BTreeMap::new();
                for rec in &in_round {
                    if let Some(v) = filtered_pass_at_k(rec, filter, k) {
                        by_difficulty.entry(rec.difficulty).or_default().push(v);
                    }
                }
                if by_difficulty.is_empty() {
                    continue;
                }
                let metric = format!("pass@{k}");
                let mut all = Vec::new();
                for (difficulty, values) in &by_difficulty {
                    rows.push(ReportRow {
                        round,
                        difficulty: difficulty.as_str().to_string(),
                        metric: metric.clone(),
                        filter,
                        value: 100.0 * values.iter().sum::<f64>() / values.len() as f64,
                        tasks: values.len(),
                    });
                    all.extend(values);
                }
                rows.push(ReportRow {
                    round,
                    difficulty: ALL_DIFFICULTIES.to_string(),
                    metric,
                    filter,
                    value: 100.0 * all.iter().sum::<f64>() / all.len() as f64,
                    tasks: all.len(),
                });
            }
        }
    }
    Ok(Report {
        rows,
        excluded: Vec::new(),
    })
}

/// Checks that every "all" row is the task-weighted mean of its
/// difficulty rows.
pub fn check_all_reconstruction(report: &Report) -> bool {
    // Per (round, metric, filter): the "all" row, weighted sum, task count.
    type Sums = (Option<(f64, usize)>, f64, usize);
    let mut groups: BTreeMap<(RoundLabel, String, FilterKind), Sums> = BTreeMap::new();
    for row in &report.rows {
        let entry = groups
            .entry((row.round, row.metric.clone(), row.filter))
            .or_insert((None, 0.0, 0));
        if row.difficulty == ALL_DIFFICULTIES {
            entry.0 = Some((row.value, row.tasks));
        } else {
            entry.1 += row.value * row.tasks as f64;
            entry.2 += row.tasks;
        }
    }
    groups.values().all(|(all, weighted, tasks)| match all {
        Some((value, count)) => {
            *count == *tasks && *tasks > 0 && (value - weighted / *tasks as f64).abs() <= 1e-9 * value.abs().max(1.0)
        }
        None => false,
    })
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Aligned table: one line per (round, filter, metric), one column per
    /// difficulty, values in percent with task counts in parentheses.
    pub fn to_text(&self) -> String {
        let mut columns: Vec<String> = Difficulty::ALL
            .iter()
            .map(|d| d.as_str().to_string())
            .filter(|d| self.rows.iter().any(|r| &r.difficulty == d))
            .collect();
        columns.push(ALL_DIFFICULTIES.to_string());

        let mut lines: BTreeMap<(RoundLabel, FilterKind, String), BTreeMap<String, String>> = BTreeMap::new();
        for row in &self.rows {
            lines
                .entry((row.round, row.filter, row.metric.clone()))
                .or_default()
                .insert(row.difficulty.clone(), format!("{:.2} ({})", row.value, row.tasks));
        }
        let mut table: Vec<Vec<String>> = vec![["round", "filter", "metric"]
            .iter()
            .map(|s| s.to_string())
            .chain(columns.iter().cloned())
            .collect()];
        for ((round, filter, metric), cells) in &lines {
            let mut line = vec![round.to_string(), filter.as_str().to_string(), metric.clone()];
            line.extend(columns.iter().map(|c| cells.get(c).cloned().unwrap_or_else(|| "-".into())));
            table.push(line);
        }
        let widths: Vec<usize> = (0..table[0].len())
            .map(|i| table.iter().map(|l| l[i].len()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for line in &table {
            let cells: Vec<String> = line
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (cell, w))| if i < 3 { format!("{cell:<w$}") } else { format!("{cell:>w$}") })
                .collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
        }
        for (task, reason) in &self.excluded {
            out.push_str(&format!("excluded {task}: {reason}\n"));
        }
        out
    }

    /// Per-round series for plotting; the selected-round rows are left out.
    pub fn to_csv(&self) -> Result<String, csv::Error> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["round", "difficulty", "metric", "filter", "value", "tasks"])?;
        for row in &self.rows {
            if let RoundLabel::Round(r) = row.round {
                w.write_record([
                    r.to_string(),
                    row.difficulty.clone(),
                    row.metric.clone(),
                    row.filter.as_str().to_string(),
                    format!("{:.6}", row.value),
                    row.tasks.to_string(),
                ])?;
            }
        }
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }
}
