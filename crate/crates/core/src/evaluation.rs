//! Stage metrics over held-out (candidate, selection) pairs.
//!
//! All metrics work on decoded integer stages except [`grouped_auc`], which
//! ranks `score_high`, the predicted probability of reaching stage 2 or
//! beyond. Undefined values are `None` rather than zero.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

const CLASSES: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub candidate_id: String,
    pub selection_id: String,
    pub truth: u8,
    pub predicted: u8,
    pub score_high: f64,
}

fn confusion(records: &[EvalRecord]) -> [[usize; CLASSES]; CLASSES] {
    let mut m = [[0usize; CLASSES]; CLASSES];
    for r in records {
        m[r.truth as usize][r.predicted as usize] += 1;
    }
    m
}

/// Mean recall over the classes present in the truth.
pub fn balanced_accuracy(records: &[EvalRecord]) -> Option<f64> {
    let m = confusion(records);
    let recalls: Vec<f64> = (0..CLASSES)
        .filter_map(|c| {
            let support: usize = m[c].iter().sum();
            (support > 0).then(|| m[c][c] as f64 / support as f64)
        })
        .collect();
    (!recalls.is_empty()).then(|| recalls.iter().sum::<f64>() / recalls.len() as f64)
}

/// Mean absolute and root mean squared error on stage codes.
pub fn mae_rmse(records: &[EvalRecord]) -> Option<(f64, f64)> {
    if records.is_empty() {
        return None;
    }
    let n = records.len() as f64;
    let (abs, sq) = records.iter().fold((0.0, 0.0), |(a, s), r| {
        let d = (r.truth as f64 - r.predicted as f64).abs();
        (a + d, s + d * d)
    });
    Some((abs / n, (sq / n).sqrt()))
}

/// Support-weighted mean of per-class F1.
pub fn weighted_f1(records: &[EvalRecord]) -> Option<f64> {
    if records.is_empty() {
        return None;
    }
    let m = confusion(records);
    let n = records.len() as f64;
    let mut total = 0.0;
    for c in 0..CLASSES {
        let support: usize = m[c].iter().sum();
        let predicted: usize = (0..CLASSES).map(|t| m[t][c]).sum();
        let tp = m[c][c];
        if support == 0 || tp == 0 {
            continue;
        }
        // 2PR/(P+R) simplifies to 2tp/(support+predicted)
        let f1 = 2.0 * tp as f64 / (support + predicted) as f64;
        total += support as f64 / n * f1;
    }
    Some(total)
}

/// AUC of `score_high` for stages {2,3} against {0,1}, ties counted half.
/// `None` unless both groups occur in the truth.
pub fn grouped_auc(records: &[EvalRecord]) -> Option<f64> {
    let mut scored: Vec<(f64, bool)> = records
        .iter()
        .map(|r| (r.score_high, r.truth >= 2))
        .collect();
    let pos = scored.iter().filter(|s| s.1).count();
    let neg = scored.len() - pos;
    if pos == 0 || neg == 0 {
        return None;
    }
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    // rank-sum with average ranks over tied runs
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < scored.len() {
        let mut j = i;
        while j < scored.len() && scored[j].0 == scored[i].0 {
            j += 1;
        }
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        rank_sum += avg_rank * scored[i..j].iter().filter(|s| s.1).count() as f64;
        i = j;
    }
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Some(u / (pos * neg) as f64)
}

/// The five reported columns plus stage supports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub count: usize,
    pub balanced_accuracy: Option<f64>,
    pub mae: Option<f64>,
    pub rmse: Option<f64>,
    pub weighted_f1: Option<f64>,
    pub auc: Option<f64>,
    pub support: [usize; CLASSES],
}

impl MetricReport {
    pub fn compute(records: &[EvalRecord]) -> Self {
        let mut support = [0usize; CLASSES];
        for r in records {
            support[r.truth as usize] += 1;
        }
        let mr = mae_rmse(records);
        MetricReport {
            count: records.len(),
            balanced_accuracy: balanced_accuracy(records),
            mae: mr.map(|m| m.0),
            rmse: mr.map(|m| m.1),
            weighted_f1: weighted_f1(records),
            auc: grouped_auc(records),
            support,
        }
    }
}

/// Pooled metrics with a per-selection breakdown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub pooled: MetricReport,
    pub per_selection: BTreeMap<String, MetricReport>,
}

pub fn evaluate(records: &[EvalRecord]) -> EvaluationReport {
    let mut groups: BTreeMap<String, Vec<EvalRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(r.selection_id.clone()).or_default().push(r.clone());
    }
    EvaluationReport {
        pooled: MetricReport::compute(records),
        per_selection: groups
            .into_iter()
            .map(|(s, rs)| (s, MetricReport::compute(&rs)))
            .collect(),
    }
}

/// Document written to `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsFile {
    pub model: String,
    pub test: EvaluationReport,
}

pub fn write_metrics(path: &Path, metrics: &MetricsFile) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, metrics)?;
    w.write_all(b"\n")?;
    w.flush()
}

fn cell(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.digits$}"))
}

/// Plain-text table with columns Acc. (percent), MAE, RMSE, F1, AUC.
pub fn render_table(rows: &[(String, MetricReport)]) -> String {
    let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0).max(5);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<width$}  {:>6}  {:>6}  {:>6}  {:>6}  {:>6}",
        "Model", "Acc.", "MAE", "RMSE", "F1", "AUC"
    );
    for (name, m) in rows {
        let _ = writeln!(
            out,
            "{:<width$}  {:>6}  {:>6}  {:>6}  {:>6}  {:>6}",
            name,
            cell(m.balanced_accuracy.map(|a| a * 100.0), 1),
            cell(m.mae, 3),
            cell(m.rmse, 3),
            cell(m.weighted_f1, 3),
            cell(m.auc, 3),
        );
    }
    out
}
