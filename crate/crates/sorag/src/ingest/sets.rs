//! Construction of the two evaluation question sets: tag-balanced
//! unseen questions and synthesized paraphrases of knowledge-base
//! questions. All sampling is seeded and reproducible.

use std::collections::HashSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{EvalQuestion, IngestError, QARecord, QuestionOrigin};
use crate::llm::{ChatProvider, LlmError, TemplateSet};
use crate::util::RetryPolicy;

/// Builds the unseen evaluation set from post-cutoff records: drops
/// records whose exact title already occurs in the knowledge base, then
/// balances the java and python classes by sampling the larger class
/// down to the smaller one without replacement. Output preserves input
/// order and has size `2 * min(class sizes)`.
pub fn build_unseen_set(
    pool: &[QARecord],
    kb_titles: &HashSet<String>,
    rng_seed: u64,
) -> Result<Vec<EvalQuestion>, IngestError> {
    let mut java = Vec::new();
    let mut python = Vec::new();
    for (idx, record) in pool.iter().enumerate() {
        if kb_titles.contains(&record.title) {
            continue;
        }
        if record.tags.iter().any(|t| t == "java") {
            java.push(idx);
        } else if record.tags.iter().any(|t| t == "python") {
            python.push(idx);
        }
    }
    if java.is_empty() {
        return Err(IngestError::CannotBalance("java".into()));
    }
    if python.is_empty() {
        return Err(IngestError::CannotBalance("python".into()));
    }

    let target = java.len().min(python.len());
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let java = sample_down(&mut rng, java, target);
    let python = sample_down(&mut rng, python, target);

    let mut kept: Vec<usize> = java.into_iter().chain(python).collect();
    kept.sort_unstable();
    Ok(kept
        .into_iter()
        .map(|idx| {
            let record = &pool[idx];
            EvalQuestion {
                id: record.question_id,
                question_text: record.title.clone(),
                reference_answer: Some(record.accepted_answer.clone()),
                origin: QuestionOrigin::Unseen,
            }
        })
        .collect())
}

/// Uniform sample of `target` elements without replacement; keeps all
/// of them when the class is already at or below the target.
fn sample_down(rng: &mut ChaCha8Rng, class: Vec<usize>, target: usize) -> Vec<usize> {
    if class.len() <= target {
        return class;
    }
    rand::seq::index::sample(rng, class.len(), target)
        .into_iter()
        .map(|i| class[i])
        .collect()
}

/// Result of synthetic-set generation: the questions plus how many
/// sampled records were skipped after generator failures.
#[derive(Debug)]
pub struct SyntheticOutcome {
    pub questions: Vec<EvalQuestion>,
    pub skipped: usize,
}

/// Samples `n` knowledge-base questions and asks the generator for a
/// paraphrase of each. Generator failures skip the record; more than
/// 10% skipped aborts the run. Configuration problems (broken template)
/// abort immediately.
pub fn build_synthetic_set(
    kb: &[QARecord],
    n: usize,
    generator: &dyn ChatProvider,
    templates: &TemplateSet,
    retry_policy: &RetryPolicy,
    rng_seed: u64,
) -> Result<SyntheticOutcome, IngestError> {
    if n > kb.len() {
        return Err(IngestError::SampleTooLarge {
            requested: n,
            available: kb.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut picked: Vec<usize> = rand::seq::index::sample(&mut rng, kb.len(), n).into_vec();
    picked.sort_unstable();

    let mut questions = Vec::with_capacity(n);
    let mut skipped = 0usize;
    for idx in picked {
        let record = &kb[idx];
        match synthesize_one(record, generator, templates, retry_policy) {
            Ok(question) => questions.push(question),
            Err(SynthesizeError::Skip(reason)) => {
                skipped += 1;
                log::warn!(
                    "synthetic question for post {} skipped: {reason}",
                    record.question_id
                );
            }
            Err(SynthesizeError::Fatal(message)) => {
                return Err(IngestError::Generator(message));
            }
        }
    }
    if skipped * 10 > n {
        return Err(IngestError::TooManyFailures {
            failed: skipped,
            total: n,
        });
    }
    Ok(SyntheticOutcome { questions, skipped })
}

enum SynthesizeError {
    /// Per-record generator failure; the record is dropped.
    Skip(String),
    /// Setup problem that would fail every record the same way.
    Fatal(String),
}

fn synthesize_one(
    record: &QARecord,
    generator: &dyn ChatProvider,
    templates: &TemplateSet,
    retry_policy: &RetryPolicy,
) -> Result<EvalQuestion, SynthesizeError> {
    let prompt = templates
        .synthetic_question
        .render(&record.title, None, None)
        .map_err(|e| SynthesizeError::Fatal(e.to_string()))?;
    let request = crate::llm::ChatOptions::default().request(
        generator.model_id(),
        "You rephrase developer questions.",
        prompt,
    );
    let reply = crate::llm::complete(&request, generator, retry_policy).map_err(|err| match err {
        LlmError::Config(_) | LlmError::MissingPlaceholder { .. } | LlmError::Io(_) => {
            SynthesizeError::Fatal(err.to_string())
        }
        other => SynthesizeError::Skip(other.to_string()),
    })?;
    let text = reply.trim();
    if text.is_empty() {
        return Err(SynthesizeError::Skip("empty generator reply".into()));
    }
    Ok(EvalQuestion {
        id: record.question_id,
        question_text: text.to_string(),
        reference_answer: Some(record.accepted_answer.clone()),
        origin: QuestionOrigin::Synthetic,
    })
}
