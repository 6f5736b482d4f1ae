//! Report rows, failure accounting, and rendering.
//!
//! The CSV is the contract; columns are fixed per protocol:
//!
//! - grid: `pipeline,threshold,questions,covered,coverage,scored,
//!   mean_score,median_score,config_hash`
//! - buckets: `bucket,cases,share,generated_mean,generated_median,
//!   accepted_mean,accepted_median,mwu_p,cliffs_delta,config_hash`
//! - models: `model,questions,pairs,rag_mean,rag_median,
//!   zero_shot_mean,zero_shot_median,wilcoxon_w,wilcoxon_p,
//!   no_difference,partial,config_hash`
//!
//! Markdown renderings add a failure-counter footer; the CSV carries
//! data rows only. Missing values (for example a score over zero
//! cases) render as empty cells.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::Stage;
use crate::stats::ScoredCase;

use super::{ExperimentKind, RunnerError};

/// Per-stage counters for everything that was excluded from a report.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureCounts {
    pub query: usize,
    pub retrieval: usize,
    pub context: usize,
    pub generation: usize,
    pub judge_answers: usize,
    pub judge_comparators: usize,
    pub missing_reference: usize,
}

impl FailureCounts {
    pub fn record_stage(&mut self, stage: Stage) {
        match stage {
            Stage::Query => self.query += 1,
            Stage::Retrieval => self.retrieval += 1,
            Stage::Context => self.context += 1,
            Stage::Generation => self.generation += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.query
            + self.retrieval
            + self.context
            + self.generation
            + self.judge_answers
            + self.judge_comparators
            + self.missing_reference
    }

    fn footer(&self) -> String {
        format!(
            "Failures: query {}, retrieval {}, context {}, generation {}, judge answers {}, judge comparators {}, missing references {}.",
            self.query,
            self.retrieval,
            self.context,
            self.generation,
            self.judge_answers,
            self.judge_comparators,
            self.missing_reference
        )
    }
}

/// One pipeline-threshold cell of the grid protocol. Scores cover
/// retrieved cases only; questions without hits are excluded there
/// but still count toward coverage's denominator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rq1Row {
    pub pipeline: String,
    pub threshold: f64,
    pub questions: usize,
    pub covered: usize,
    pub coverage: f64,
    pub scored: usize,
    pub mean_score: Option<f64>,
    pub median_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rq1Report {
    pub rows: Vec<Rq1Row>,
    pub failures: FailureCounts,
    pub config_hash: String,
}

/// One effective-threshold bucket of the adaptive protocol, plus the
/// "zero_shot" fallback bucket and the "all" aggregate row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rq2Row {
    pub bucket: String,
    pub cases: usize,
    pub share: f64,
    pub generated_mean: Option<f64>,
    pub generated_median: Option<f64>,
    pub accepted_mean: Option<f64>,
    pub accepted_median: Option<f64>,
    pub mwu_p: Option<f64>,
    pub cliffs_delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rq2Report {
    pub rows: Vec<Rq2Row>,
    pub scored: Vec<ScoredCase>,
    pub failures: FailureCounts,
    pub config_hash: String,
}

/// One model's paired comparison. `partial` flags a section whose
/// provider blew the failure budget and was cut short; `no_difference`
/// flags identical score pairs everywhere, where the signed-rank test
/// is undefined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rq3Row {
    pub model: String,
    pub questions: usize,
    pub pairs: usize,
    pub rag_mean: Option<f64>,
    pub rag_median: Option<f64>,
    pub zero_shot_mean: Option<f64>,
    pub zero_shot_median: Option<f64>,
    pub wilcoxon_w: Option<f64>,
    pub wilcoxon_p: Option<f64>,
    pub no_difference: bool,
    pub partial: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rq3Report {
    pub rows: Vec<Rq3Row>,
    /// Per-model judged pairs, in row order, for persistence.
    pub scored_by_model: Vec<(String, Vec<ScoredCase>)>,
    pub failures: FailureCounts,
    pub config_hash: String,
}

/// Run-level record written next to the reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub kind: ExperimentKind,
    pub config_hash: String,
    pub corpus: String,
    pub question_set: String,
    pub questions: usize,
    pub rows: usize,
    pub seeds: BTreeMap<String, u64>,
    pub failures: FailureCounts,
    pub outputs: Vec<String>,
}

impl ExperimentManifest {
    pub fn save(&self, path: &Path) -> Result<(), RunnerError> {
        let mut text = serde_json::to_string_pretty(self)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        text.push('\n');
        Ok(fs::write(path, text)?)
    }

    pub fn load(path: &Path) -> Result<Self, RunnerError> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e).into())
    }
}

/// Threshold as text with trailing zeros trimmed: 0.9 not 0.900.
pub(crate) fn fmt_threshold(tau: f64) -> String {
    let mut text = format!("{tau:.3}");
    while text.ends_with('0') {
        text.pop();
    }
    if text.ends_with('.') {
        text.pop();
    }
    text
}

fn fmt_f64(value: f64) -> String {
    format!("{value:.4}")
}

fn fmt_opt(value: Option<f64>) -> String {
    value.map(fmt_f64).unwrap_or_default()
}

fn fmt_p(value: Option<f64>) -> String {
    value.map(|p| format!("{p:.6}")).unwrap_or_default()
}

fn csv_string(rows: Vec<Vec<String>>) -> Result<String, RunnerError> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in rows {
        writer
            .write_record(&row)
            .map_err(|e| std::io::Error::other(e.to_string()))?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| std::io::Error::other(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| std::io::Error::other(e.to_string()).into())
}

fn markdown_table(header: &[&str], rows: Vec<Vec<String>>) -> String {
    let mut out = String::new();
    out.push_str(&format!("| {} |\n", header.join(" | ")));
    out.push_str(&format!("|{}\n", "---|".repeat(header.len())));
    for row in rows {
        let row: Vec<String> = row
            .into_iter()
            .map(|cell| if cell.is_empty() { "-".to_string() } else { cell })
            .collect();
        out.push_str(&format!("| {} |\n", row.join(" | ")));
    }
    out
}

impl Rq1Report {
    fn cells(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|row| {
                vec![
                    row.pipeline.clone(),
                    fmt_threshold(row.threshold),
                    row.questions.to_string(),
                    row.covered.to_string(),
                    fmt_f64(row.coverage),
                    row.scored.to_string(),
                    fmt_opt(row.mean_score),
                    fmt_opt(row.median_score),
                    self.config_hash.clone(),
                ]
            })
            .collect()
    }

    pub fn to_csv(&self) -> Result<String, RunnerError> {
        let mut rows = vec![RQ1_COLUMNS.iter().map(|c| c.to_string()).collect()];
        rows.extend(self.cells());
        csv_string(rows)
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::from("# Pipeline grid\n\n");
        out.push_str(&markdown_table(RQ1_COLUMNS, self.cells()));
        out.push('\n');
        out.push_str(&self.failures.footer());
        out.push('\n');
        out
    }
}

const RQ1_COLUMNS: &[&str] = &[
    "pipeline",
    "threshold",
    "questions",
    "covered",
    "coverage",
    "scored",
    "mean_score",
    "median_score",
    "config_hash",
];

impl Rq2Report {
    fn cells(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|row| {
                vec![
                    row.bucket.clone(),
                    row.cases.to_string(),
                    fmt_f64(row.share),
                    fmt_opt(row.generated_mean),
                    fmt_opt(row.generated_median),
                    fmt_opt(row.accepted_mean),
                    fmt_opt(row.accepted_median),
                    fmt_p(row.mwu_p),
                    fmt_opt(row.cliffs_delta),
                    self.config_hash.clone(),
                ]
            })
            .collect()
    }

    pub fn to_csv(&self) -> Result<String, RunnerError> {
        let mut rows = vec![RQ2_COLUMNS.iter().map(|c| c.to_string()).collect()];
        rows.extend(self.cells());
        csv_string(rows)
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::from("# Adaptive threshold buckets\n\n");
        out.push_str(&markdown_table(RQ2_COLUMNS, self.cells()));
        out.push('\n');
        out.push_str(&self.failures.footer());
        out.push('\n');
        out
    }
}

const RQ2_COLUMNS: &[&str] = &[
    "bucket",
    "cases",
    "share",
    "generated_mean",
    "generated_median",
    "accepted_mean",
    "accepted_median",
    "mwu_p",
    "cliffs_delta",
    "config_hash",
];

impl Rq3Report {
    fn cells(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|row| {
                vec![
                    row.model.clone(),
                    row.questions.to_string(),
                    row.pairs.to_string(),
                    fmt_opt(row.rag_mean),
                    fmt_opt(row.rag_median),
                    fmt_opt(row.zero_shot_mean),
                    fmt_opt(row.zero_shot_median),
                    fmt_opt(row.wilcoxon_w),
                    fmt_p(row.wilcoxon_p),
                    row.no_difference.to_string(),
                    row.partial.to_string(),
                    self.config_hash.clone(),
                ]
            })
            .collect()
    }

    pub fn to_csv(&self) -> Result<String, RunnerError> {
        let mut rows = vec![RQ3_COLUMNS.iter().map(|c| c.to_string()).collect()];
        rows.extend(self.cells());
        csv_string(rows)
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::from("# Model comparison\n\n");
        out.push_str(&markdown_table(RQ3_COLUMNS, self.cells()));
        for row in &self.rows {
            if row.no_difference {
                out.push_str(&format!(
                    "\nModel {} scored identically under both arms: no difference to test.\n",
                    row.model
                ));
            }
            if row.partial {
                out.push_str(&format!(
                    "\nModel {} exceeded the 10% failure budget; its section is partial.\n",
                    row.model
                ));
            }
        }
        out.push('\n');
        out.push_str(&self.failures.footer());
        out.push('\n');
        out
    }
}

const RQ3_COLUMNS: &[&str] = &[
    "model",
    "questions",
    "pairs",
    "rag_mean",
    "rag_median",
    "zero_shot_mean",
    "zero_shot_median",
    "wilcoxon_w",
    "wilcoxon_p",
    "no_difference",
    "partial",
    "config_hash",
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thresholds_render_without_trailing_zeros() {
        assert_eq!(fmt_threshold(0.9), "0.9");
        assert_eq!(fmt_threshold(0.85), "0.85");
        assert_eq!(fmt_threshold(0.125), "0.125");
        assert_eq!(fmt_threshold(1.0), "1");
        assert_eq!(fmt_threshold(0.0), "0");
    }

    fn sample_rq1() -> Rq1Report {
        Rq1Report {
            rows: vec![
                Rq1Row {
                    pipeline: "HB1".to_string(),
                    threshold: 0.9,
                    questions: 4,
                    covered: 2,
                    coverage: 0.5,
                    scored: 2,
                    mean_score: Some(6.05),
                    median_score: Some(6.0),
                },
                Rq1Row {
                    pipeline: "HB1".to_string(),
                    threshold: 1.0,
                    questions: 4,
                    covered: 0,
                    coverage: 0.0,
                    scored: 0,
                    mean_score: None,
                    median_score: None,
                },
            ],
            failures: FailureCounts {
                generation: 1,
                ..FailureCounts::default()
            },
            config_hash: "abc123".to_string(),
        }
    }

    #[test]
    fn grid_csv_has_the_documented_columns_and_empty_cells() {
        let csv = sample_rq1().to_csv().unwrap();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "pipeline,threshold,questions,covered,coverage,scored,mean_score,median_score,config_hash"
        );
        assert_eq!(lines.next().unwrap(), "HB1,0.9,4,2,0.5000,2,6.0500,6.0000,abc123");
        assert_eq!(lines.next().unwrap(), "HB1,1,4,0,0.0000,0,,,abc123");
        assert_eq!(lines.next(), None);
    }

    #[test]
    fn markdown_carries_the_failure_footer() {
        let md = sample_rq1().to_markdown();
        assert!(md.contains("| pipeline | threshold |"));
        assert!(md.contains("generation 1"));
        assert!(md.contains("missing references 0."));
        // empty cells render as a dash so the table stays aligned
        assert!(md.contains("| - | - |"));
    }

    #[test]
    fn manifest_roundtrips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.json");
        let manifest = ExperimentManifest {
            kind: ExperimentKind::Rq2Adaptive,
            config_hash: "deadbeef".to_string(),
            corpus: "corpus.jsonl".to_string(),
            question_set: "questions.jsonl".to_string(),
            questions: 12,
            rows: 3,
            seeds: BTreeMap::from([("chat".to_string(), 7u64)]),
            failures: FailureCounts::default(),
            outputs: vec!["rq2_adaptive.csv".to_string()],
        };
        manifest.save(&path).unwrap();
        assert_eq!(ExperimentManifest::load(&path).unwrap(), manifest);
    }

    #[test]
    fn failure_totals_sum_every_counter() {
        let counts = FailureCounts {
            query: 1,
            retrieval: 2,
            context: 3,
            generation: 4,
            judge_answers: 5,
            judge_comparators: 6,
            missing_reference: 7,
        };
        assert_eq!(counts.total(), 28);
    }
}
