//! Evaluation-time candidate filters.
//!
//! Each filter sees one [`TestReport`] per candidate over the same filter
//! test suite (public tests, plus synthetic ones when generated) and returns
//! the retained sample ids in ascending order. Unlike the revision-time
//! public filter, none of them falls back to the full set.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::exec::{normalize_output, TestOutcome, TestReport, Verdict};
use crate::task::IoMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    /// Every generated candidate.
    None,
    Naive,
    LargestCluster,
    Consensus,
}

impl FilterKind {
    pub const ALL: [FilterKind; 4] = [
        FilterKind::None,
        FilterKind::Naive,
        FilterKind::LargestCluster,
        FilterKind::Consensus,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FilterKind::None => "none",
            FilterKind::Naive => "naive",
            FilterKind::LargestCluster => "largest_cluster",
            FilterKind::Consensus => "consensus",
        }
    }
}

impl std::str::FromStr for FilterKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "none" => Ok(FilterKind::None),
            "naive" => Ok(FilterKind::Naive),
            "largest_cluster" => Ok(FilterKind::LargestCluster),
            "consensus" => Ok(FilterKind::Consensus),
            other => Err(format!("unknown filter `{other}`")),
        }
    }
}

/// Candidates passing every filter test.
pub fn naive_filter(reports: &[TestReport]) -> Vec<usize> {
    let mut ids: Vec<usize> = reports.iter().filter(|r| r.all_passed).map(|r| r.sample_id).collect();
    ids.sort_unstable();
    ids
}

/// Canonical text of one outcome. Outputs are compared after the same
/// normalization the judge applies; anything that did not run to completion
/// becomes an error token that cannot collide with real output.
fn outcome_token(outcome: &TestOutcome, io_mode: IoMode) -> String {
    match outcome.verdict {
        Verdict::Pass | Verdict::WrongAnswer => match io_mode {
            IoMode::Stdio => normalize_output(&outcome.actual_output).join("\n"),
            IoMode::CallBased => serde_json::from_str::<Value>(&outcome.actual_output)
                .map(|v| v.to_string())
                .unwrap_or_else(|_| outcome.actual_output.trim().to_string()),
        },
        other => format!("\u{0}error:{}", other.as_str()),
    }
}

/// One token per test, joined with a separator that outputs cannot contain.
pub fn output_signature(report: &TestReport, io_mode: IoMode) -> String {
    report
        .per_test
        .iter()
        .map(|o| outcome_token(o, io_mode))
        .collect::<Vec<_>>()
        .join("\u{1}")
}

fn pick_group(groups: BTreeMap<impl Ord, Vec<usize>>, better: impl Fn(&[usize], &[usize]) -> bool) -> Vec<usize> {
    let mut best: Option<Vec<usize>> = None;
    for (_, mut ids) in groups {
        ids.sort_unstable();
        best = match best {
            Some(b) if !better(&ids, &b) => Some(b),
            _ => Some(ids),
        };
    }
    best.unwrap_or_default()
}

/// The largest group of candidates with identical output signatures; ties
/// go to the group holding the lowest sample id.
pub fn largest_cluster_filter(reports: &[TestReport], io_mode: IoMode) -> Vec<usize> {
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for r in reports {
        groups.entry(output_signature(r, io_mode)).or_default().push(r.sample_id);
    }
    pick_group(groups, |a, b| a.len() > b.len() || (a.len() == b.len() && a[0] < b[0]))
}

/// Groups candidates by the exact set of tests they pass and keeps the group
/// with the highest size x passed-count score. Ties go to the larger passed
/// set, then to the group holding the lowest sample id.
pub fn consensus_filter(reports: &[TestReport]) -> Vec<usize> {
    let mut groups: BTreeMap<Vec<bool>, Vec<usize>> = BTreeMap::new();
    for r in reports {
        let passed: Vec<bool> = r.per_test.iter().map(TestOutcome::passed).collect();
        groups.entry(passed).or_default().push(r.sample_id);
    }
    let passed_count: BTreeMap<usize, usize> = reports
        .iter()
        .map(|r| (r.sample_id, r.pass_count()))
        .collect();
    pick_group(groups, |a, b| {
        let (pa, pb) = (passed_count[&a[0]], passed_count[&b[0]]);
        let (sa, sb) = (a.len() * pa, b.len() * pb);
        sa > sb || (sa == sb && (pa > pb || (pa == pb && a[0] < b[0])))
    })
}
