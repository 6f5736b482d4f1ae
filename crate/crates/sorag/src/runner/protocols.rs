//! The three experiment protocols and the file-writing orchestrator.
//!
//! Questions are processed in input order and judged in case order,
//! one at a time, so a rerun against the same corpus, spec, and
//! providers reproduces every output byte.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::embed::EmbedProvider;
use crate::engine::{
    answer_question, assemble_context, make_query, retrieve_fixed, Caps, KnowledgeBase,
    Providers, RetrievalResult,
};
use crate::ingest::{read_corpus, read_questions, EvalQuestion};
use crate::llm::{generate_answer, judge, ChatProvider, JudgeScore, TemplateSet};
use crate::stats::{
    self, judge_cases, mann_whitney_u, wilcoxon_signed_rank, write_scored_cases, JudgeItem,
    ScoredCase, StatsError,
};
use crate::util::RetryPolicy;

use super::report::{
    fmt_threshold, ExperimentManifest, FailureCounts, Rq1Report, Rq1Row, Rq2Report, Rq2Row,
    Rq3Report, Rq3Row,
};
use super::{ExperimentKind, ExperimentSpec, RunnerError};

/// One generation model under test in the model protocol.
pub struct ModelArm<'a> {
    pub name: String,
    pub chat: &'a dyn ChatProvider,
}

/// Everything an experiment needs beyond the spec: a generation
/// provider, a judge, an embedder, templates, and the retry schedule.
/// The model protocol ignores `chat` and iterates `models` instead.
pub struct ExperimentProviders<'a> {
    pub chat: &'a dyn ChatProvider,
    pub judge: &'a dyn ChatProvider,
    pub embedder: &'a dyn EmbedProvider,
    pub templates: &'a TemplateSet,
    pub retry: &'a RetryPolicy,
    pub models: Vec<ModelArm<'a>>,
}

impl<'a> ExperimentProviders<'a> {
    fn engine_providers(&self, chat: &'a dyn ChatProvider) -> Providers<'a> {
        Providers {
            chat,
            embedder: self.embedder,
            templates: self.templates,
            retry: self.retry,
        }
    }
}

fn check_kind(spec: &ExperimentSpec, expected: ExperimentKind) -> Result<(), RunnerError> {
    if spec.kind != expected {
        return Err(RunnerError::BadSpec(format!(
            "spec kind {} does not match the {} protocol",
            spec.kind.slug(),
            expected.slug()
        )));
    }
    Ok(())
}

fn summary_cells(scores: &[f64]) -> (Option<f64>, Option<f64>) {
    match stats::summarize(scores, None) {
        Ok(summary) => (Some(summary.mean), Some(summary.median)),
        Err(_) => (None, None),
    }
}

/// Fixed-threshold sweep: one row per pipeline and threshold, scoring
/// only the cases that retrieved content.
pub fn run_rq1_grid(
    spec: &ExperimentSpec,
    kb: &KnowledgeBase,
    questions: &[EvalQuestion],
    providers: &ExperimentProviders<'_>,
) -> Result<Rq1Report, RunnerError> {
    check_kind(spec, ExperimentKind::Rq1Grid)?;
    spec.validate()?;
    let pipelines = spec.resolved_pipelines()?;
    let thresholds = spec.effective_thresholds();
    let config_hash = spec.config_hash()?;
    let caps = Caps::default();
    let mut failures = FailureCounts::default();
    let mut rows = Vec::with_capacity(pipelines.len() * thresholds.len());

    for config in &pipelines {
        // One query per question per pipeline; it does not depend on
        // the threshold, and redoing it would multiply provider calls
        // by the grid width.
        let mut queries = Vec::with_capacity(questions.len());
        for question in questions {
            match make_query(
                &question.question_text,
                config,
                providers.chat,
                providers.embedder,
                providers.templates,
                providers.retry,
            ) {
                Ok((_, vector)) => queries.push(Some(vector)),
                Err(err) => {
                    log::warn!("query failed for question {}: {err}", question.id);
                    failures.query += 1;
                    queries.push(None);
                }
            }
        }

        for &tau in &thresholds {
            let mut results: Vec<RetrievalResult> = Vec::new();
            let mut items = Vec::new();
            for (question, vector) in questions.iter().zip(&queries) {
                let Some(vector) = vector else { continue };
                let result = retrieve_fixed(kb, vector, config, tau, &caps)?;
                if !result.hits.is_empty() {
                    let context = assemble_context(&result.hits, kb, caps.context_budget_chars);
                    match generate_answer(
                        &question.question_text,
                        Some(&context),
                        providers.chat,
                        providers.templates,
                        providers.retry,
                    ) {
                        Ok(answer) => items.push(JudgeItem {
                            case_ref: format!("q{}", question.id),
                            question: question.question_text.clone(),
                            answer,
                            comparator_answer: None,
                        }),
                        Err(err) => {
                            log::warn!(
                                "generation failed for question {}: {err}",
                                question.id
                            );
                            failures.generation += 1;
                        }
                    }
                }
                results.push(result);
            }
            let covered = results.iter().filter(|r| !r.hits.is_empty()).count();
            let coverage = stats::coverage(&results, questions.len())?;
            let outcome = judge_cases(&items, providers.judge, providers.templates, providers.retry);
            failures.judge_answers += outcome.answer_failures;
            let scores = outcome.answer_scores();
            let (mean_score, median_score) = summary_cells(&scores);
            rows.push(Rq1Row {
                pipeline: config.label(),
                threshold: tau,
                questions: questions.len(),
                covered,
                coverage,
                scored: scores.len(),
                mean_score,
                median_score,
            });
        }
    }

    Ok(Rq1Report {
        rows,
        failures,
        config_hash,
    })
}

/// Bucket key: milli-units keep float thresholds exact and sortable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
enum Bucket {
    Threshold(i64),
    ZeroShot,
}

impl Bucket {
    fn label(self) -> String {
        match self {
            Bucket::Threshold(milli) => fmt_threshold(milli as f64 / 1000.0),
            Bucket::ZeroShot => "zero_shot".to_string(),
        }
    }
}

/// Adaptive-relaxation protocol: answer every question under the
/// relaxation policy, judge generated answers against the questions'
/// accepted answers, and bucket cases by the threshold that produced
/// them. Fallback answers form their own bucket; the closing "all"
/// row aggregates every scored case.
pub fn run_rq2_adaptive(
    spec: &ExperimentSpec,
    kb: &KnowledgeBase,
    questions: &[EvalQuestion],
    providers: &ExperimentProviders<'_>,
) -> Result<Rq2Report, RunnerError> {
    check_kind(spec, ExperimentKind::Rq2Adaptive)?;
    spec.validate()?;
    let config = spec.resolved_pipelines()?.remove(0);
    let policy = spec.effective_policy();
    let config_hash = spec.config_hash()?;
    let caps = Caps::default();
    let engine = providers.engine_providers(providers.chat);
    let mut failures = FailureCounts::default();

    let mut answered = Vec::new();
    for question in questions {
        let Some(reference) = question.reference_answer.clone() else {
            log::warn!("question {} has no accepted answer; excluded", question.id);
            failures.missing_reference += 1;
            continue;
        };
        match answer_question(question, kb, &config, &policy, &engine, &caps) {
            Ok(case) => answered.push((reference, case)),
            Err(failure) => {
                log::warn!("question {} failed: {failure}", question.id);
                failures.record_stage(failure.stage);
            }
        }
    }

    // Accepted answers are judged once each and the verdict reused, so
    // duplicated references do not multiply judge calls.
    let mut reference_scores: HashMap<String, Option<JudgeScore>> = HashMap::new();
    let mut scored = Vec::new();
    let mut buckets: HashMap<Bucket, Vec<(f64, Option<f64>)>> = HashMap::new();
    for (reference, case) in &answered {
        let judge_score = match judge(
            &case.question.question_text,
            &case.answer_text,
            providers.judge,
            providers.templates,
            providers.retry,
        ) {
            Ok(score) => score,
            Err(err) => {
                log::warn!("judge failed for question {}: {err}", case.question.id);
                failures.judge_answers += 1;
                continue;
            }
        };
        let comparator = match reference_scores.get(reference) {
            Some(cached) => cached.clone(),
            None => {
                let fresh = judge(
                    &case.question.question_text,
                    reference,
                    providers.judge,
                    providers.templates,
                    providers.retry,
                )
                .ok();
                if fresh.is_none() {
                    failures.judge_comparators += 1;
                }
                reference_scores.insert(reference.clone(), fresh.clone());
                fresh
            }
        };
        let bucket = if case.retrieval.fell_back_to_zero_shot {
            Bucket::ZeroShot
        } else {
            Bucket::Threshold((case.retrieval.effective_threshold * 1000.0).round() as i64)
        };
        buckets.entry(bucket).or_default().push((
            judge_score.value as f64,
            comparator.as_ref().map(|c| c.value as f64),
        ));
        scored.push(ScoredCase {
            case_ref: format!("q{}", case.question.id),
            judge_score,
            comparator_score: comparator,
        });
    }

    // Threshold buckets from the strictest down, fallback last.
    let mut keys: Vec<Bucket> = buckets.keys().copied().collect();
    keys.sort_by(|a, b| match (a, b) {
        (Bucket::Threshold(x), Bucket::Threshold(y)) => y.cmp(x),
        other => other.0.cmp(other.1),
    });
    let total = questions.len();
    let mut rows = Vec::new();
    for key in keys {
        let cases = &buckets[&key];
        rows.push(bucket_row(key.label(), cases, total));
    }
    let all: Vec<(f64, Option<f64>)> = buckets.values().flatten().copied().collect();
    rows.push(bucket_row("all".to_string(), &all, total));

    Ok(Rq2Report {
        rows,
        scored,
        failures,
        config_hash,
    })
}

fn bucket_row(bucket: String, cases: &[(f64, Option<f64>)], total: usize) -> Rq2Row {
    let generated: Vec<f64> = cases.iter().map(|(g, _)| *g).collect();
    let accepted: Vec<f64> = cases.iter().filter_map(|(_, a)| *a).collect();
    let (generated_mean, generated_median) = summary_cells(&generated);
    let (accepted_mean, accepted_median) = summary_cells(&accepted);
    let (mwu_p, delta) = match mann_whitney_u(&generated, &accepted) {
        Ok(report) => (Some(report.p_value), report.effect_size),
        Err(_) => (None, None),
    };
    Rq2Row {
        bucket,
        cases: cases.len(),
        share: cases.len() as f64 / total as f64,
        generated_mean,
        generated_median,
        accepted_mean,
        accepted_median,
        mwu_p,
        cliffs_delta: delta,
    }
}

/// Paired model comparison: each model answers every question twice,
/// once through the retrieval pipeline and once zero-shot, and the
/// judge scores both. A model that fails more than 10% of its
/// questions is cut off and its row flagged partial.
pub fn run_rq3_models(
    spec: &ExperimentSpec,
    kb: &KnowledgeBase,
    questions: &[EvalQuestion],
    providers: &ExperimentProviders<'_>,
) -> Result<Rq3Report, RunnerError> {
    check_kind(spec, ExperimentKind::Rq3Models)?;
    spec.validate()?;
    if providers.models.is_empty() {
        return Err(RunnerError::BadSpec(
            "no model providers supplied for the model protocol".to_string(),
        ));
    }
    let config = spec.resolved_pipelines()?.remove(0);
    let policy = spec.effective_policy();
    let config_hash = spec.config_hash()?;
    let caps = Caps::default();
    let mut failures = FailureCounts::default();
    let mut rows = Vec::new();
    let mut scored_by_model = Vec::new();

    for arm in &providers.models {
        let engine = providers.engine_providers(arm.chat);
        let mut items = Vec::new();
        let mut failed_questions = 0usize;
        let mut partial = false;
        for question in questions {
            let mut question_failed = false;
            let rag = match answer_question(question, kb, &config, &policy, &engine, &caps) {
                Ok(case) => Some(case.answer_text),
                Err(failure) => {
                    log::warn!(
                        "model {}: pipeline arm failed for question {}: {failure}",
                        arm.name,
                        question.id
                    );
                    failures.record_stage(failure.stage);
                    question_failed = true;
                    None
                }
            };
            let zero_shot = match generate_answer(
                &question.question_text,
                None,
                arm.chat,
                providers.templates,
                providers.retry,
            ) {
                Ok(answer) => Some(answer),
                Err(err) => {
                    log::warn!(
                        "model {}: zero-shot arm failed for question {}: {err}",
                        arm.name,
                        question.id
                    );
                    failures.generation += 1;
                    question_failed = true;
                    None
                }
            };
            if let (Some(rag), Some(zero_shot)) = (rag, zero_shot) {
                items.push(JudgeItem {
                    case_ref: format!("q{}", question.id),
                    question: question.question_text.clone(),
                    answer: rag,
                    comparator_answer: Some(zero_shot),
                });
            }
            if question_failed {
                failed_questions += 1;
                if failed_questions * 10 > questions.len() {
                    log::warn!(
                        "model {}: {failed_questions} of {} questions failed; aborting its run",
                        arm.name,
                        questions.len()
                    );
                    partial = true;
                    break;
                }
            }
        }

        let outcome = judge_cases(&items, providers.judge, providers.templates, providers.retry);
        failures.judge_answers += outcome.answer_failures;
        failures.judge_comparators += outcome.comparator_failures;
        let pairs = outcome.paired_scores();
        let rag_scores: Vec<f64> = pairs.iter().map(|(r, _)| *r).collect();
        let zero_shot_scores: Vec<f64> = pairs.iter().map(|(_, z)| *z).collect();
        let (rag_mean, rag_median) = summary_cells(&rag_scores);
        let (zero_shot_mean, zero_shot_median) = summary_cells(&zero_shot_scores);
        let (wilcoxon_w, wilcoxon_p, no_difference) = match wilcoxon_signed_rank(&pairs) {
            Ok(report) => (Some(report.statistic), Some(report.p_value), false),
            Err(StatsError::Degenerate(_)) => (None, None, true),
            Err(_) => (None, None, false),
        };
        rows.push(Rq3Row {
            model: arm.name.clone(),
            questions: questions.len(),
            pairs: pairs.len(),
            rag_mean,
            rag_median,
            zero_shot_mean,
            zero_shot_median,
            wilcoxon_w,
            wilcoxon_p,
            no_difference,
            partial,
        });
        scored_by_model.push((arm.name.clone(), outcome.scored));
    }

    Ok(Rq3Report {
        rows,
        scored_by_model,
        failures,
        config_hash,
    })
}

fn model_slug(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '.' || c == '_' || c == '-' {
                c.to_ascii_lowercase()
            } else {
                '-'
            }
        })
        .collect()
}

/// Loads the corpus and questions, builds the knowledge base, runs the
/// spec's protocol, and writes the CSV, markdown, scored-case, and
/// manifest files into `out_dir`.
pub fn run_experiment(
    spec: &ExperimentSpec,
    out_dir: &Path,
    providers: &ExperimentProviders<'_>,
) -> Result<ExperimentManifest, RunnerError> {
    spec.validate()?;
    let records = read_corpus(&spec.corpus)?;
    let kb = KnowledgeBase::build(&records, providers.embedder, providers.retry)?;
    let questions = read_questions(&spec.question_set)?;
    if questions.is_empty() {
        return Err(RunnerError::BadSpec(format!(
            "question set {} is empty",
            spec.question_set.display()
        )));
    }
    fs::create_dir_all(out_dir)?;

    let slug = spec.kind.slug();
    let csv_name = format!("{slug}.csv");
    let md_name = format!("{slug}.md");
    let mut outputs = vec![csv_name.clone(), md_name.clone()];
    let (csv, markdown, rows, failures) = match spec.kind {
        ExperimentKind::Rq1Grid => {
            let report = run_rq1_grid(spec, &kb, &questions, providers)?;
            (
                report.to_csv()?,
                report.to_markdown(),
                report.rows.len(),
                report.failures,
            )
        }
        ExperimentKind::Rq2Adaptive => {
            let report = run_rq2_adaptive(spec, &kb, &questions, providers)?;
            let scored_name = format!("{slug}_scored.jsonl");
            write_scored_cases(&out_dir.join(&scored_name), &report.scored)?;
            outputs.push(scored_name);
            (
                report.to_csv()?,
                report.to_markdown(),
                report.rows.len(),
                report.failures,
            )
        }
        ExperimentKind::Rq3Models => {
            let report = run_rq3_models(spec, &kb, &questions, providers)?;
            for (model, scored) in &report.scored_by_model {
                let pairs_name = format!("{slug}_pairs_{}.jsonl", model_slug(model));
                write_scored_cases(&out_dir.join(&pairs_name), scored)?;
                outputs.push(pairs_name);
            }
            (
                report.to_csv()?,
                report.to_markdown(),
                report.rows.len(),
                report.failures,
            )
        }
    };
    fs::write(out_dir.join(&csv_name), &csv)?;
    fs::write(out_dir.join(&md_name), &markdown)?;
    outputs.push("manifest.json".to_string());

    let manifest = ExperimentManifest {
        kind: spec.kind,
        config_hash: spec.config_hash()?,
        corpus: spec.corpus.display().to_string(),
        question_set: spec.question_set.display().to_string(),
        questions: questions.len(),
        rows,
        seeds: spec.seeds.clone(),
        failures,
        outputs,
    };
    manifest.save(&out_dir.join("manifest.json"))?;
    Ok(manifest)
}
