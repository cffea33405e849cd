use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{anyhow, Context, Result};

use codechain_core::chain::{read_json, select_best_round, write_json, RoundRecord, RoundSelection, RunManifest};
use codechain_core::eval::{
    aggregate_report, consensus_filter, largest_cluster_filter, naive_filter, EvalRecord, FilterKind, Report,
    RoundLabel,
};
use codechain_core::exec::TestReport;
use codechain_core::Task;

use crate::run::{load_task, task_store, SyntheticSuite, SYNTHETIC_FILE};

pub struct ReportArgs<'a> {
    pub run_dir: &'a Path,
    pub ks: Option<Vec<usize>>,
    pub filters: Option<Vec<FilterKind>>,
    pub selection: Option<RoundSelection>,
}

/// Per-candidate reports over the filter suite: public tests followed by
/// synthetic ones. `None` when the suite is empty.
fn filter_suite(round: &RoundRecord, synthetic: Option<&SyntheticSuite>) -> Option<Vec<TestReport>> {
    let extra = synthetic.and_then(|s| s.reports.get(&round.round_index));
    if round.public_reports.is_empty() && extra.is_none_or(|e| e.is_empty()) {
        return None;
    }
    Some(
        round
            .candidates
            .iter()
            .map(|c| {
                let mut per_test = Vec::new();
                for source in [Some(&round.public_reports), extra].into_iter().flatten() {
                    if let Some(r) = source.iter().find(|r| r.sample_id == c.sample_id) {
                        per_test.extend(r.per_test.iter().cloned());
                    }
                }
                TestReport::new(c.sample_id, per_test)
            })
            .collect(),
    )
}

/// Private-test outcome and filter selections of one round.
pub fn eval_record(task: &Task, round: &RoundRecord, synthetic: Option<&SyntheticSuite>) -> EvalRecord {
    let correct_ids: Vec<usize> = round
        .private_reports
        .iter()
        .filter(|r| r.all_passed)
        .map(|r| r.sample_id)
        .collect();
    let mut retained = BTreeMap::new();
    if let Some(suite) = filter_suite(round, synthetic) {
        // Unparsed candidates share one trivial signature and would
        // otherwise form a cluster of their own.
        let parsed: Vec<TestReport> = suite
            .iter()
            .filter(|r| round.candidates.iter().any(|c| c.sample_id == r.sample_id && c.is_parsed()))
            .cloned()
            .collect();
        retained.insert(FilterKind::Naive, naive_filter(&suite));
        retained.insert(FilterKind::LargestCluster, largest_cluster_filter(&parsed, task.io_mode));
        retained.insert(FilterKind::Consensus, consensus_filter(&parsed));
    }
    EvalRecord {
        task_id: task.id.clone(),
        difficulty: task.difficulty,
        n: round.candidates.len(),
        c: correct_ids.len(),
        correct_ids,
        retained,
    }
}

pub fn build_report(args: &ReportArgs<'_>) -> Result<(Report, BTreeMap<String, usize>)> {
    let run_dir = args.run_dir;
    let manifest = RunManifest::load(run_dir).context("not a run directory")?;
    let evaluation = crate::run::run_config(run_dir, false)
        .map(|c| c.config.evaluation)
        .unwrap_or_default();
    let ks = args.ks.clone().unwrap_or(evaluation.ks.clone());
    let filters = args.filters.clone().unwrap_or(evaluation.filters.clone());
    let selection = match args.selection {
        Some(s) => s,
        None => evaluation.round_selection.parse().map_err(|e: String| anyhow!(e))?,
    };

    let mut records = Vec::new();
    let mut excluded = Vec::new();
    let mut chosen = BTreeMap::new();
    for id in &manifest.task_ids {
        let store = task_store(run_dir, id);
        let chain = store
            .load_chain()?
            .ok_or_else(|| anyhow!("incomplete run directory: task {id} has no finished chain"))?;
        let task = load_task(run_dir, id)?;
        if task.private_tests.is_empty() {
            excluded.push((id.clone(), "no private tests".to_string()));
            continue;
        }
        let synthetic_path = store.dir().join(SYNTHETIC_FILE);
        let synthetic: Option<SyntheticSuite> = if synthetic_path.exists() {
            Some(read_json(&synthetic_path)?)
        } else {
            None
        };
        for round in &chain.rounds {
            records.push((RoundLabel::Round(round.round_index), eval_record(&task, round, synthetic.as_ref())));
        }
        let best = select_best_round(&chain.rounds, selection);
        log::info!("task {id}: reporting round {best}");
        chosen.insert(id.clone(), best);
        records.push((RoundLabel::Selected, eval_record(&task, &chain.rounds[best], synthetic.as_ref())));
    }
    let mut report = aggregate_report(&records, &ks, &filters).context("nothing to report")?;
    report.excluded = excluded;
    Ok((report, chosen))
}

pub fn cmd_report(args: &ReportArgs<'_>) -> Result<()> {
    let (report, chosen) = build_report(args)?;
    let dir = args.run_dir.join("report");
    fs::create_dir_all(&dir)?;
    write_if_changed(&dir.join("report.json"), &(report.to_json() + "\n"))?;
    write_if_changed(&dir.join("report.txt"), &report.to_text())?;
    write_if_changed(&dir.join("series.csv"), &report.to_csv()?)?;
    write_json(&dir.join("selected_rounds.json"), &chosen)?;
    for (task, round) in &chosen {
        println!("{task}: selected round {round}");
    }
    print!("{}", report.to_text());
    Ok(())
}

fn write_if_changed(path: &Path, text: &str) -> Result<()> {
    if fs::read_to_string(path).is_ok_and(|old| old == text) {
        return Ok(());
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
