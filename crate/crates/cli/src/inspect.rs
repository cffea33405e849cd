use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{anyhow, Result};

use codechain_core::chain::RoundRecord;
use codechain_core::extract::CandidateSolution;
use codechain_core::FeedbackItem;

use crate::run::task_store;

fn rounds(run_dir: &Path, task_id: &str, only: Option<usize>) -> Result<Vec<RoundRecord>> {
    let all = task_store(run_dir, task_id).load_rounds()?;
    if all.is_empty() {
        return Err(anyhow!("no rounds recorded for task {task_id}"));
    }
    Ok(match only {
        Some(r) => vec![all
            .into_iter()
            .find(|x| x.round_index == r)
            .ok_or_else(|| anyhow!("task {task_id} has no round {r}"))?],
        None => all,
    })
}

fn describe_item(item: &FeedbackItem) -> String {
    match item {
        FeedbackItem::SubModule(m) => format!("{} (sample {}, #{})", m.name, m.source_sample_id, m.ordinal),
        FeedbackItem::Program { sample_id, .. } => format!("program (sample {sample_id})"),
    }
}

pub fn clusters_text(run_dir: &Path, task_id: &str, only: Option<usize>) -> Result<String> {
    let mut out = String::new();
    for r in rounds(run_dir, task_id, only)? {
        writeln!(out, "round {}", r.round_index)?;
        if r.round_index == 0 {
            writeln!(out, "  direct generation, no feedback")?;
        } else {
            writeln!(out, "  pool: {:?}", r.feedback_pool)?;
            if let Some(k) = r.cluster_k {
                writeln!(out, "  requested k: {k}")?;
            }
            if let Some(a) = &r.cluster_assignment {
                let sizes: Vec<usize> = (0..a.effective_k).map(|c| a.members(c).len()).collect();
                writeln!(
                    out,
                    "  effective k: {}, sizes {:?}, inertia {:.6}, {} iteration(s)",
                    a.effective_k, sizes, a.inertia, a.iterations
                )?;
            }
            if r.feedback_reused {
                writeln!(out, "  feedback reused from an earlier round")?;
            }
            for (i, item) in r.selected_feedback.iter().enumerate() {
                writeln!(out, "  selected[{i}]: {}", describe_item(item))?;
            }
        }
        writeln!(
            out,
            "  public filter kept {:?}{}",
            r.filtered_ids,
            if r.filter_fallback { " (fallback)" } else { "" }
        )?;
        for note in &r.notes {
            writeln!(out, "  note: {note}")?;
        }
    }
    Ok(out)
}

pub fn prompts_text(run_dir: &Path, task_id: &str, only: Option<usize>) -> Result<String> {
    let mut out = String::new();
    for r in rounds(run_dir, task_id, only)? {
        for p in &r.prompts {
            writeln!(
                out,
                "===== round {} | {} | {} =====",
                r.round_index,
                p.template_name,
                &p.fingerprint()[..16]
            )?;
            writeln!(out, "{}", p.text)?;
        }
    }
    Ok(out)
}

/// Extraction result for a raw completion file, as JSON.
pub fn submodules_json(path: &Path) -> Result<String> {
    let raw = fs::read_to_string(path)?;
    let c = CandidateSolution::from_completion("inspect", 0, 0, &raw);
    let modules: Vec<serde_json::Value> = c
        .submodules
        .iter()
        .map(|m| serde_json::json!({"name": m.name, "header": m.header, "docstring": m.docstring, "ordinal": m.ordinal}))
        .collect();
    Ok(serde_json::to_string_pretty(&serde_json::json!({
        "parse_status": c.parse_status,
        "diagnostic": c.diagnostic,
        "code": c.code,
        "submodules": modules,
    }))?)
}
