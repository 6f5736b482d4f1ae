//! Retrieval pipeline engine: pipeline presets over the query-source,
//! retrieval-target, and granularity dimensions, fixed and adaptive
//! threshold retrieval, context assembly, and end-to-end answering.

mod kb;
mod ops;

pub use kb::{
    answer_doc_id, answer_payload_ref, question_doc_id, question_id_from_doc,
    question_payload_ref, sentence_doc_id, sentence_payload_ref, KnowledgeBase,
};
pub use ops::{
    answer_question, assemble_context, make_query, retrieve, retrieve_adaptive, retrieve_fixed,
    Providers, CONTEXT_DELIMITER, TRUNCATION_MARKER,
};

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::EmbedError;
use crate::index::{CollectionName, Hit, IndexError};
use crate::ingest::EvalQuestion;
use crate::llm::LlmError;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("unknown pipeline preset {0:?}")]
    UnknownPreset(String),
    #[error("invalid threshold policy: {0}")]
    BadPolicy(String),
    #[error("question text is empty")]
    EmptyQuestion,
    #[error("index has no {0} collection")]
    MissingCollection(CollectionName),
    #[error("index and corpus disagree: {0}")]
    CorpusIndexMismatch(String),
    #[error(transparent)]
    Chat(#[from] LlmError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{path}:{line}: bad case record: {message}")]
    CaseFile {
        path: String,
        line: usize,
        message: String,
    },
}

/// Where the retrieval query text comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuerySource {
    /// Embed the user's question verbatim.
    OriginalQuestion,
    /// Ask the chat model for a hypothetical answer and embed that.
    HydePseudoAnswer,
}

/// Which corpus the query vector is matched against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetrievalTarget {
    /// Match question titles, then follow each match to its accepted
    /// answer content.
    IndirectViaQuestions,
    /// Match answer content directly.
    DirectOverAnswers,
}

/// The unit of retrieved content.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    FullAnswer,
    Sentence,
}

/// One point in the design space, optionally carrying its preset name.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub query_source: QuerySource,
    pub retrieval_target: RetrievalTarget,
    pub granularity: Granularity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset_name: Option<String>,
}

/// The named presets. Seven of the eight combinations carry a name;
/// (hyde_pseudo_answer, indirect_via_questions, sentence) is the one
/// left out.
const PRESETS: [(&str, QuerySource, RetrievalTarget, Granularity); 7] = [
    (
        "QB1",
        QuerySource::OriginalQuestion,
        RetrievalTarget::IndirectViaQuestions,
        Granularity::FullAnswer,
    ),
    (
        "QB2",
        QuerySource::OriginalQuestion,
        RetrievalTarget::DirectOverAnswers,
        Granularity::FullAnswer,
    ),
    (
        "QB3",
        QuerySource::OriginalQuestion,
        RetrievalTarget::IndirectViaQuestions,
        Granularity::Sentence,
    ),
    (
        "QB4",
        QuerySource::OriginalQuestion,
        RetrievalTarget::DirectOverAnswers,
        Granularity::Sentence,
    ),
    (
        "HB1",
        QuerySource::HydePseudoAnswer,
        RetrievalTarget::DirectOverAnswers,
        Granularity::FullAnswer,
    ),
    (
        "HB2",
        QuerySource::HydePseudoAnswer,
        RetrievalTarget::DirectOverAnswers,
        Granularity::Sentence,
    ),
    (
        "HB3",
        QuerySource::HydePseudoAnswer,
        RetrievalTarget::IndirectViaQuestions,
        Granularity::FullAnswer,
    ),
];

impl PipelineConfig {
    /// Builds a config for the given triple, attaching the preset name
    /// when the triple has one.
    pub fn new(
        query_source: QuerySource,
        retrieval_target: RetrievalTarget,
        granularity: Granularity,
    ) -> Self {
        let preset_name = PRESETS
            .iter()
            .find(|(_, s, t, g)| *s == query_source && *t == retrieval_target && *g == granularity)
            .map(|(name, _, _, _)| (*name).to_string());
        PipelineConfig {
            query_source,
            retrieval_target,
            granularity,
            preset_name,
        }
    }

    /// Looks up a preset by name, case-insensitively.
    pub fn from_preset(name: &str) -> Result<Self, EngineError> {
        let wanted = name.trim().to_ascii_uppercase();
        PRESETS
            .iter()
            .find(|(preset, _, _, _)| *preset == wanted)
            .map(|(_, s, t, g)| PipelineConfig::new(*s, *t, *g))
            .ok_or_else(|| EngineError::UnknownPreset(name.to_string()))
    }

    /// All seven named presets, in table order.
    pub fn presets() -> Vec<PipelineConfig> {
        PRESETS
            .iter()
            .map(|(_, s, t, g)| PipelineConfig::new(*s, *t, *g))
            .collect()
    }

    /// Preset names in table order.
    pub fn preset_names() -> Vec<&'static str> {
        PRESETS.iter().map(|(name, _, _, _)| *name).collect()
    }

    /// The full 2x2x2 cross-product, named presets first, then the one
    /// unnamed combination.
    pub fn all_combinations() -> Vec<PipelineConfig> {
        let mut all = Self::presets();
        all.push(PipelineConfig::new(
            QuerySource::HydePseudoAnswer,
            RetrievalTarget::IndirectViaQuestions,
            Granularity::Sentence,
        ));
        all
    }

    /// Preset name when the triple has one, otherwise a stable
    /// `source+target+granularity` label.
    pub fn label(&self) -> String {
        match &self.preset_name {
            Some(name) => name.clone(),
            None => format!(
                "{}+{}+{}",
                serde_name(&self.query_source),
                serde_name(&self.retrieval_target),
                serde_name(&self.granularity)
            ),
        }
    }
}

fn serde_name<T: Serialize>(value: &T) -> String {
    match serde_json::to_value(value) {
        Ok(serde_json::Value::String(s)) => s,
        other => format!("{other:?}"),
    }
}

impl fmt::Display for PipelineConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMode {
    Fixed,
    Adaptive,
}

/// How the similarity threshold is chosen during retrieval. Fixed mode
/// uses `start` alone; adaptive mode walks down from `start` by `step`
/// until content is found or `floor` is passed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPolicy {
    pub mode: ThresholdMode,
    pub start: f64,
    pub step: f64,
    pub floor: f64,
}

pub const DEFAULT_THRESHOLD_STEP: f64 = 0.1;
pub const DEFAULT_ADAPTIVE_START: f64 = 0.9;
pub const DEFAULT_ADAPTIVE_FLOOR: f64 = 0.5;
/// Floor for runs that relax all the way down rather than stopping at
/// the default midpoint.
pub const DEEP_ADAPTIVE_FLOOR: f64 = 0.1;

impl ThresholdPolicy {
    /// A single-threshold policy.
    pub fn fixed(tau: f64) -> Result<Self, EngineError> {
        let policy = ThresholdPolicy {
            mode: ThresholdMode::Fixed,
            start: tau,
            step: DEFAULT_THRESHOLD_STEP,
            floor: tau,
        };
        policy.validate()?;
        Ok(policy)
    }

    pub fn adaptive(start: f64, step: f64, floor: f64) -> Result<Self, EngineError> {
        let policy = ThresholdPolicy {
            mode: ThresholdMode::Adaptive,
            start,
            step,
            floor,
        };
        policy.validate()?;
        Ok(policy)
    }

    /// Start 0.9, step 0.1, floor 0.5.
    pub fn adaptive_default() -> Self {
        ThresholdPolicy {
            mode: ThresholdMode::Adaptive,
            start: DEFAULT_ADAPTIVE_START,
            step: DEFAULT_THRESHOLD_STEP,
            floor: DEFAULT_ADAPTIVE_FLOOR,
        }
    }

    /// Start 0.9, step 0.1, floor 0.1.
    pub fn adaptive_deep() -> Self {
        ThresholdPolicy {
            mode: ThresholdMode::Adaptive,
            start: DEFAULT_ADAPTIVE_START,
            step: DEFAULT_THRESHOLD_STEP,
            floor: DEEP_ADAPTIVE_FLOOR,
        }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        if !self.start.is_finite() || !self.step.is_finite() || !self.floor.is_finite() {
            return Err(EngineError::BadPolicy(
                "thresholds must be finite".to_string(),
            ));
        }
        if self.step <= 0.0 {
            return Err(EngineError::BadPolicy(format!(
                "step must be positive, got {}",
                self.step
            )));
        }
        if self.floor < 0.0 || self.floor > self.start || self.start > 1.0 {
            return Err(EngineError::BadPolicy(format!(
                "need 0 <= floor <= start <= 1, got floor {} start {}",
                self.floor, self.start
            )));
        }
        Ok(())
    }

    /// The thresholds this policy will try, in order. Fixed mode yields
    /// just `start`. Arithmetic runs on thousandths so a 0.9 start with
    /// a 0.1 step yields exactly [0.9, 0.8, ...] down to the last value
    /// at or above `floor`.
    pub fn grid(&self) -> Vec<f64> {
        match self.mode {
            ThresholdMode::Fixed => vec![self.start],
            ThresholdMode::Adaptive => {
                let start = to_milli(self.start);
                let step = to_milli(self.step).max(1);
                let floor = to_milli(self.floor);
                let mut taus = Vec::new();
                let mut at = start;
                while at >= floor {
                    taus.push(at as f64 / 1000.0);
                    at -= step;
                }
                taus
            }
        }
    }
}

fn to_milli(x: f64) -> i64 {
    (x * 1000.0).round() as i64
}

/// Retrieval size limits. The hit caps apply after threshold filtering;
/// the budget bounds assembled context length in characters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Caps {
    pub full_answers: usize,
    pub sentences: usize,
    pub context_budget_chars: usize,
}

impl Default for Caps {
    fn default() -> Self {
        Caps {
            full_answers: 5,
            sentences: 20,
            context_budget_chars: 16_000,
        }
    }
}

impl Caps {
    pub fn hit_cap(&self, granularity: Granularity) -> usize {
        match granularity {
            Granularity::FullAnswer => self.full_answers,
            Granularity::Sentence => self.sentences,
        }
    }
}

/// One threshold the retriever tried. `hit_count` is the number of
/// documents that passed the filter at that threshold, before caps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdAttempt {
    pub threshold: f64,
    pub hit_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub hits: Vec<Hit>,
    /// The threshold that produced `hits`; for an empty result, the last
    /// threshold tried.
    pub effective_threshold: f64,
    pub attempts: Vec<ThresholdAttempt>,
    pub fell_back_to_zero_shot: bool,
}

/// The pipeline stage a failed case stopped at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Query,
    Retrieval,
    Context,
    Generation,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::Query => "query",
            Stage::Retrieval => "retrieval",
            Stage::Context => "context",
            Stage::Generation => "generation",
        };
        f.write_str(name)
    }
}

/// A case that failed partway through the pipeline. Runs record these
/// and keep going.
#[derive(Debug, Clone, PartialEq, Error, Serialize, Deserialize)]
#[error("{stage} stage failed: {message}")]
pub struct CaseFailure {
    pub stage: Stage,
    pub message: String,
}

impl CaseFailure {
    pub fn new(stage: Stage, error: &EngineError) -> Self {
        CaseFailure {
            stage,
            message: error.to_string(),
        }
    }
}

/// Everything produced for one successfully answered question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnsweredCase {
    pub question: EvalQuestion,
    pub config: PipelineConfig,
    /// The text that was embedded: the question itself, or the pseudo
    /// answer standing in for it.
    pub query_text: String,
    pub retrieval: RetrievalResult,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context_text: Option<String>,
    pub answer_text: String,
    pub provider_model: String,
}

/// One row of a persisted case stream: either an answered case or a
/// failure with its stage label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CaseOutcome {
    Answered(AnsweredCase),
    Failed {
        question: EvalQuestion,
        config: PipelineConfig,
        failure: CaseFailure,
    },
}

impl CaseOutcome {
    pub fn question(&self) -> &EvalQuestion {
        match self {
            CaseOutcome::Answered(case) => &case.question,
            CaseOutcome::Failed { question, .. } => question,
        }
    }

    pub fn answered(&self) -> Option<&AnsweredCase> {
        match self {
            CaseOutcome::Answered(case) => Some(case),
            CaseOutcome::Failed { .. } => None,
        }
    }
}

/// Identifying record for a run: configuration, policy, caps, provider
/// ids, and the seeds that drove sampling and mocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: PipelineConfig,
    pub policy: ThresholdPolicy,
    pub caps: Caps,
    pub chat_model: String,
    pub embed_model: String,
    pub seeds: BTreeMap<String, u64>,
}

impl RunManifest {
    pub fn save(&self, path: &Path) -> Result<(), EngineError> {
        let mut out = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut out, self)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        out.write_all(b"\n")?;
        out.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, EngineError> {
        let file = File::open(path)?;
        serde_json::from_reader(BufReader::new(file))
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e).into())
    }
}

/// Writes one JSON object per line.
pub fn write_cases(path: &Path, cases: &[CaseOutcome]) -> Result<(), EngineError> {
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

pub fn read_cases(path: &Path) -> Result<Vec<CaseOutcome>, EngineError> {
    let file = BufReader::new(File::open(path)?);
    let display = path.display().to_string();
    let mut cases = Vec::new();
    for (idx, line) in file.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let case = serde_json::from_str(&line).map_err(|e| EngineError::CaseFile {
            path: display.clone(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        cases.push(case);
    }
    Ok(cases)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pinned_presets_map_to_their_triples() {
        let hb1 = PipelineConfig::from_preset("HB1").unwrap();
        assert_eq!(hb1.query_source, QuerySource::HydePseudoAnswer);
        assert_eq!(hb1.retrieval_target, RetrievalTarget::DirectOverAnswers);
        assert_eq!(hb1.granularity, Granularity::FullAnswer);

        let hb2 = PipelineConfig::from_preset("HB2").unwrap();
        assert_eq!(hb2.query_source, QuerySource::HydePseudoAnswer);
        assert_eq!(hb2.retrieval_target, RetrievalTarget::DirectOverAnswers);
        assert_eq!(hb2.granularity, Granularity::Sentence);

        let qb2 = PipelineConfig::from_preset("QB2").unwrap();
        assert_eq!(qb2.query_source, QuerySource::OriginalQuestion);
        assert_eq!(qb2.retrieval_target, RetrievalTarget::DirectOverAnswers);
        assert_eq!(qb2.granularity, Granularity::FullAnswer);
    }

    #[test]
    fn presets_are_seven_unique_triples_and_combinations_are_eight() {
        let presets = PipelineConfig::presets();
        assert_eq!(presets.len(), 7);
        let mut names: Vec<String> = presets
            .iter()
            .map(|p| p.preset_name.clone().unwrap())
            .collect();
        names.dedup();
        assert_eq!(names.len(), 7);
        let triples: std::collections::HashSet<_> = presets
            .iter()
            .map(|p| (p.query_source, p.retrieval_target, p.granularity))
            .collect();
        assert_eq!(triples.len(), 7);

        let all = PipelineConfig::all_combinations();
        assert_eq!(all.len(), 8);
        let all_triples: std::collections::HashSet<_> = all
            .iter()
            .map(|p| (p.query_source, p.retrieval_target, p.granularity))
            .collect();
        assert_eq!(all_triples.len(), 8);
        assert!(all.last().unwrap().preset_name.is_none());
    }

    #[test]
    fn preset_lookup_ignores_case_and_rejects_unknown_names() {
        let lower = PipelineConfig::from_preset("hb1").unwrap();
        assert_eq!(lower.preset_name.as_deref(), Some("HB1"));
        match PipelineConfig::from_preset("ZZ9") {
            Err(EngineError::UnknownPreset(name)) => assert_eq!(name, "ZZ9"),
            other => panic!("expected unknown preset, got {other:?}"),
        }
    }

    #[test]
    fn config_serializes_with_snake_case_dimension_names() {
        let qb2 = PipelineConfig::from_preset("QB2").unwrap();
        let json = serde_json::to_value(&qb2).unwrap();
        assert_eq!(json["query_source"], "original_question");
        assert_eq!(json["retrieval_target"], "direct_over_answers");
        assert_eq!(json["granularity"], "full_answer");
        assert_eq!(json["preset_name"], "QB2");
        let back: PipelineConfig = serde_json::from_value(json).unwrap();
        assert_eq!(back, qb2);
    }

    #[test]
    fn unnamed_combination_gets_a_structural_label() {
        let odd = PipelineConfig::new(
            QuerySource::HydePseudoAnswer,
            RetrievalTarget::IndirectViaQuestions,
            Granularity::Sentence,
        );
        assert!(odd.preset_name.is_none());
        assert_eq!(
            odd.label(),
            "hyde_pseudo_answer+indirect_via_questions+sentence"
        );
        assert_eq!(PipelineConfig::from_preset("HB3").unwrap().label(), "HB3");
    }

    #[test]
    fn policy_validation_rejects_bad_shapes() {
        assert!(ThresholdPolicy::adaptive(0.9, 0.1, 0.5).is_ok());
        assert!(ThresholdPolicy::adaptive(0.5, 0.1, 0.9).is_err());
        assert!(ThresholdPolicy::adaptive(0.9, 0.0, 0.5).is_err());
        assert!(ThresholdPolicy::adaptive(1.2, 0.1, 0.5).is_err());
        assert!(ThresholdPolicy::adaptive(0.9, 0.1, -0.1).is_err());
        assert!(ThresholdPolicy::fixed(0.7).is_ok());
        assert!(ThresholdPolicy::fixed(1.5).is_err());
    }

    #[test]
    fn grid_steps_down_to_the_floor_exactly() {
        let policy = ThresholdPolicy::adaptive(0.9, 0.1, 0.5).unwrap();
        assert_eq!(policy.grid(), vec![0.9, 0.8, 0.7, 0.6, 0.5]);

        let offset = ThresholdPolicy::adaptive(0.85, 0.1, 0.5).unwrap();
        assert_eq!(offset.grid(), vec![0.85, 0.75, 0.65, 0.55]);

        let deep = ThresholdPolicy::adaptive_deep();
        assert_eq!(deep.grid().len(), 9);
        assert_eq!(*deep.grid().last().unwrap(), 0.1);

        let fixed = ThresholdPolicy::fixed(0.7).unwrap();
        assert_eq!(fixed.grid(), vec![0.7]);
    }

    proptest::proptest! {
        #[test]
        fn grid_is_strictly_decreasing_and_floored(
            start_m in 0u32..=1000,
            step_m in 1u32..=400,
            floor_frac in 0.0f64..=1.0,
        ) {
            let start = start_m as f64 / 1000.0;
            let floor = (start * floor_frac * 1000.0).round() / 1000.0;
            let step = step_m as f64 / 1000.0;
            let policy = ThresholdPolicy::adaptive(start, step, floor).unwrap();
            let grid = policy.grid();
            proptest::prop_assert!(!grid.is_empty());
            proptest::prop_assert_eq!(grid[0], start);
            for pair in grid.windows(2) {
                proptest::prop_assert!(pair[1] < pair[0]);
                proptest::prop_assert!((pair[0] - pair[1] - step).abs() < 1e-9);
            }
            for tau in &grid {
                proptest::prop_assert!(*tau >= floor - 1e-9);
            }
            // One more step would cross the floor.
            let last = *grid.last().unwrap();
            proptest::prop_assert!(last - step < floor + 1e-9);
        }
    }

    #[test]
    fn default_caps_are_five_answers_twenty_sentences() {
        let caps = Caps::default();
        assert_eq!(caps.full_answers, 5);
        assert_eq!(caps.sentences, 20);
        assert_eq!(caps.hit_cap(Granularity::FullAnswer), 5);
        assert_eq!(caps.hit_cap(Granularity::Sentence), 20);
    }

    #[test]
    fn case_stream_roundtrips_through_jsonl() {
        use crate::ingest::QuestionOrigin;
        let question = EvalQuestion {
            id: 42,
            question_text: "How do I copy an array?".to_string(),
            reference_answer: Some("Use clone.".to_string()),
            origin: QuestionOrigin::Unseen,
        };
        let config = PipelineConfig::from_preset("HB1").unwrap();
        let answered = CaseOutcome::Answered(AnsweredCase {
            question: question.clone(),
            config: config.clone(),
            query_text: "a pseudo answer".to_string(),
            retrieval: RetrievalResult {
                hits: vec![Hit {
                    doc_id: "a7".to_string(),
                    similarity: 0.91,
                    payload_ref: "a:7".to_string(),
                }],
                effective_threshold: 0.9,
                attempts: vec![ThresholdAttempt {
                    threshold: 0.9,
                    hit_count: 1,
                }],
                fell_back_to_zero_shot: false,
            },
            context_text: Some("Use clone.".to_string()),
            answer_text: "Call clone on the array.".to_string(),
            provider_model: "mock".to_string(),
        });
        let failed = CaseOutcome::Failed {
            question,
            config,
            failure: CaseFailure {
                stage: Stage::Generation,
                message: "provider went away".to_string(),
            },
        };

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cases.jsonl");
        write_cases(&path, &[answered.clone(), failed.clone()]).unwrap();
        let back = read_cases(&path).unwrap();
        assert_eq!(back, vec![answered, failed]);

        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.lines().next().unwrap().contains("\"status\":\"answered\""));
        assert!(text.lines().nth(1).unwrap().contains("\"status\":\"failed\""));
    }

    #[test]
    fn manifest_roundtrips_and_keeps_seed_names() {
        let mut seeds = BTreeMap::new();
        seeds.insert("sampling".to_string(), 7u64);
        seeds.insert("mock_chat".to_string(), 11u64);
        let manifest = RunManifest {
            config: PipelineConfig::from_preset("QB2").unwrap(),
            policy: ThresholdPolicy::adaptive_default(),
            caps: Caps::default(),
            chat_model: "scripted-mock".to_string(),
            embed_model: "hash-embedder".to_string(),
            seeds,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        manifest.save(&path).unwrap();
        let back = RunManifest::load(&path).unwrap();
        assert_eq!(back, manifest);
    }
}
