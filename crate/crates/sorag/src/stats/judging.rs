//! The scoring loop. Each answered case goes to the LLM judge, along
//! with an optional comparator answer (an accepted answer or a
//! zero-shot baseline). A case whose main answer cannot be scored is
//! excluded and counted; a failed comparator call keeps the case but
//! drops the comparator score, also counted. Cases are judged in
//! order, one at a time, so reruns line up byte for byte.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::llm::{judge, ChatProvider, JudgeScore, TemplateSet};
use crate::util::RetryPolicy;

use super::StatsError;

/// One answer to score against its question.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JudgeItem {
    pub case_ref: String,
    pub question: String,
    pub answer: String,
    pub comparator_answer: Option<String>,
}

/// Judge verdicts for one case.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoredCase {
    pub case_ref: String,
    pub judge_score: JudgeScore,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comparator_score: Option<JudgeScore>,
}

/// Scored cases plus the exclusion counts the final report must carry.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct JudgingOutcome {
    pub scored: Vec<ScoredCase>,
    /// Cases dropped because the main answer could not be scored.
    pub answer_failures: usize,
    /// Cases kept without a comparator score after that call failed.
    pub comparator_failures: usize,
}

impl JudgingOutcome {
    /// Main-answer score values in case order.
    pub fn answer_scores(&self) -> Vec<f64> {
        self.scored
            .iter()
            .map(|case| case.judge_score.value as f64)
            .collect()
    }

    /// (answer, comparator) score pairs for the cases that have both.
    pub fn paired_scores(&self) -> Vec<(f64, f64)> {
        self.scored
            .iter()
            .filter_map(|case| {
                case.comparator_score
                    .as_ref()
                    .map(|c| (case.judge_score.value as f64, c.value as f64))
            })
            .collect()
    }
}

/// Scores every item, excluding rather than aborting on judge
/// failures. The judge itself already re-asks once on an unparseable
/// reply, so a failure here means both attempts were unusable.
pub fn judge_cases(
    items: &[JudgeItem],
    provider: &dyn ChatProvider,
    templates: &TemplateSet,
    retry: &RetryPolicy,
) -> JudgingOutcome {
    let mut outcome = JudgingOutcome::default();
    for item in items {
        let judge_score = match judge(&item.question, &item.answer, provider, templates, retry) {
            Ok(score) => score,
            Err(err) => {
                log::warn!("excluding case {}: judge failed: {err}", item.case_ref);
                outcome.answer_failures += 1;
                continue;
            }
        };
        let comparator_score = match &item.comparator_answer {
            None => None,
            Some(answer) => match judge(&item.question, answer, provider, templates, retry) {
                Ok(score) => Some(score),
                Err(err) => {
                    log::warn!(
                        "dropping comparator score for case {}: judge failed: {err}",
                        item.case_ref
                    );
                    outcome.comparator_failures += 1;
                    None
                }
            },
        };
        outcome.scored.push(ScoredCase {
            case_ref: item.case_ref.clone(),
            judge_score,
            comparator_score,
        });
    }
    outcome
}

pub fn write_scored_cases(path: &Path, cases: &[ScoredCase]) -> Result<(), StatsError> {
    let mut out = BufWriter::new(File::create(path)?);
    for case in cases {
        let line = serde_json::to_string(case)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        out.write_all(line.as_bytes())?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a scored-case JSONL file, rejecting scores outside 1..=10.
pub fn read_scored_cases(path: &Path) -> Result<Vec<ScoredCase>, StatsError> {
    let file = BufReader::new(File::open(path)?);
    let display = path.display().to_string();
    let mut cases = Vec::new();
    for (idx, line) in file.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| StatsError::ScoreFile {
            path: display.clone(),
            line: idx + 1,
            message,
        };
        let case: ScoredCase = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        let mut values = vec![case.judge_score.value];
        values.extend(case.comparator_score.as_ref().map(|c| c.value));
        if let Some(out_of_range) = values.iter().find(|v| !(1..=10).contains(*v)) {
            return Err(bad(format!("score {out_of_range} is outside 1..=10")));
        }
        cases.push(case);
    }
    Ok(cases)
}
