//! The pipeline operations: query construction, threshold-gated
//! retrieval with optional relaxation, context assembly, and the
//! end-to-end answer path.

use std::collections::HashSet;

use crate::embed::{embed_batch, EmbedProvider, UnitVector};
use crate::index::{CollectionName, Hit, ThresholdRule};
use crate::ingest::EvalQuestion;
use crate::llm::{generate_answer, generate_hyde, ChatProvider, TemplateSet};
use crate::util::RetryPolicy;

use super::kb::{
    answer_doc_id, answer_payload_ref, question_id_from_doc, sentence_doc_id,
    sentence_payload_ref, KnowledgeBase,
};
use super::{
    AnsweredCase, Caps, CaseFailure, EngineError, PipelineConfig, QuerySource, RetrievalResult,
    RetrievalTarget, Stage, ThresholdAttempt, ThresholdMode, ThresholdPolicy,
};

/// Line placed between context items.
pub const CONTEXT_DELIMITER: &str = "\n---\n";
/// Appended when an item had to be cut to fit the budget.
pub const TRUNCATION_MARKER: &str = " [truncated]";

/// The providers and settings one answering run needs.
pub struct Providers<'a> {
    pub chat: &'a dyn ChatProvider,
    pub embedder: &'a dyn EmbedProvider,
    pub templates: &'a TemplateSet,
    pub retry: &'a RetryPolicy,
}

/// Produces the text to embed and its vector. The original-question
/// source embeds the question as-is; the pseudo-answer source first asks
/// the chat model for a hypothetical answer and embeds that instead.
pub fn make_query(
    question: &str,
    config: &PipelineConfig,
    chat: &dyn ChatProvider,
    embedder: &dyn EmbedProvider,
    templates: &TemplateSet,
    retry: &RetryPolicy,
) -> Result<(String, UnitVector), EngineError> {
    let question = question.trim();
    if question.is_empty() {
        return Err(EngineError::EmptyQuestion);
    }
    let query_text = match config.query_source {
        QuerySource::OriginalQuestion => question.to_string(),
        QuerySource::HydePseudoAnswer => generate_hyde(question, chat, templates, retry)?,
    };
    let mut vectors = embed_batch(std::slice::from_ref(&query_text), embedder, retry)?;
    let vector = vectors.pop().expect("one vector for one text");
    Ok((query_text, vector))
}

/// Single-threshold retrieval.
pub fn retrieve_fixed(
    kb: &KnowledgeBase,
    query: &UnitVector,
    config: &PipelineConfig,
    tau: f64,
    caps: &Caps,
) -> Result<RetrievalResult, EngineError> {
    let (hits, available) = scan_at(kb, query, config, tau, caps)?;
    Ok(RetrievalResult {
        hits,
        effective_threshold: tau,
        attempts: vec![ThresholdAttempt {
            threshold: tau,
            hit_count: available,
        }],
        fell_back_to_zero_shot: false,
    })
}

/// Walks the policy's threshold grid from the top and stops at the
/// first threshold that yields content. Exhausting the grid returns an
/// empty result flagged for zero-shot fallback.
pub fn retrieve_adaptive(
    kb: &KnowledgeBase,
    query: &UnitVector,
    config: &PipelineConfig,
    policy: &ThresholdPolicy,
    caps: &Caps,
) -> Result<RetrievalResult, EngineError> {
    if policy.mode != ThresholdMode::Adaptive {
        return Err(EngineError::BadPolicy(
            "retrieve_adaptive needs an adaptive policy".to_string(),
        ));
    }
    policy.validate()?;
    let mut attempts = Vec::new();
    for tau in policy.grid() {
        let (hits, available) = scan_at(kb, query, config, tau, caps)?;
        attempts.push(ThresholdAttempt {
            threshold: tau,
            hit_count: available,
        });
        if !hits.is_empty() {
            return Ok(RetrievalResult {
                hits,
                effective_threshold: tau,
                attempts,
                fell_back_to_zero_shot: false,
            });
        }
    }
    let floor = attempts
        .last()
        .map(|a| a.threshold)
        .unwrap_or(policy.floor);
    Ok(RetrievalResult {
        hits: Vec::new(),
        effective_threshold: floor,
        attempts,
        fell_back_to_zero_shot: true,
    })
}

/// Dispatches on the policy mode.
pub fn retrieve(
    kb: &KnowledgeBase,
    query: &UnitVector,
    config: &PipelineConfig,
    policy: &ThresholdPolicy,
    caps: &Caps,
) -> Result<RetrievalResult, EngineError> {
    policy.validate()?;
    match policy.mode {
        ThresholdMode::Fixed => retrieve_fixed(kb, query, config, policy.start, caps),
        ThresholdMode::Adaptive => retrieve_adaptive(kb, query, config, policy, caps),
    }
}

/// One scan at one threshold. Returns the capped hits plus the count
/// that passed the filter before capping.
fn scan_at(
    kb: &KnowledgeBase,
    query: &UnitVector,
    config: &PipelineConfig,
    tau: f64,
    caps: &Caps,
) -> Result<(Vec<Hit>, usize), EngineError> {
    let cap = caps.hit_cap(config.granularity).max(1);
    match config.retrieval_target {
        RetrievalTarget::DirectOverAnswers => {
            let name = match config.granularity {
                super::Granularity::FullAnswer => CollectionName::AnswersFull,
                super::Granularity::Sentence => CollectionName::AnswerSentences,
            };
            let collection = kb
                .index()
                .collection(name)
                .ok_or(EngineError::MissingCollection(name))?;
            let mut hits = collection.search(query, tau, usize::MAX)?;
            let available = hits.len();
            hits.truncate(cap);
            Ok((hits, available))
        }
        RetrievalTarget::IndirectViaQuestions => {
            let titles = kb
                .index()
                .collection(CollectionName::QuestionTitles)
                .ok_or(EngineError::MissingCollection(CollectionName::QuestionTitles))?;
            let question_hits = titles.search(query, tau, usize::MAX)?;
            let mut hits = match config.granularity {
                super::Granularity::FullAnswer => {
                    expand_to_answers(kb, &question_hits)?
                }
                super::Granularity::Sentence => {
                    expand_to_sentences(kb, query, &question_hits, tau)?
                }
            };
            hits.sort_by(|a, b| {
                b.similarity
                    .total_cmp(&a.similarity)
                    .then_with(|| a.doc_id.cmp(&b.doc_id))
            });
            let available = hits.len();
            hits.truncate(cap);
            Ok((hits, available))
        }
    }
}

/// Follows matched question titles to their accepted answers. The hit
/// keeps the title's similarity: the title is what cleared the
/// threshold, the answer is just the content it points to.
fn expand_to_answers(
    kb: &KnowledgeBase,
    question_hits: &[Hit],
) -> Result<Vec<Hit>, EngineError> {
    let answers = kb
        .index()
        .collection(CollectionName::AnswersFull)
        .ok_or(EngineError::MissingCollection(CollectionName::AnswersFull))?;
    let mut hits = Vec::with_capacity(question_hits.len());
    for q_hit in question_hits {
        let Some(id) = question_id_from_doc(&q_hit.doc_id) else {
            return Err(EngineError::CorpusIndexMismatch(format!(
                "unexpected doc id {:?} in the question collection",
                q_hit.doc_id
            )));
        };
        let doc_id = answer_doc_id(id);
        if !answers.contains(&doc_id) {
            return Err(EngineError::CorpusIndexMismatch(format!(
                "question {id} matched but its answer is not indexed"
            )));
        }
        hits.push(Hit {
            doc_id,
            similarity: q_hit.similarity,
            payload_ref: answer_payload_ref(id),
        });
    }
    Ok(hits)
}

/// Follows matched question titles to their answer sentences, re-scores
/// each sentence against the query, and keeps those that clear the same
/// threshold.
fn expand_to_sentences(
    kb: &KnowledgeBase,
    query: &UnitVector,
    question_hits: &[Hit],
    tau: f64,
) -> Result<Vec<Hit>, EngineError> {
    let sentences = kb
        .index()
        .collection(CollectionName::AnswerSentences)
        .ok_or(EngineError::MissingCollection(CollectionName::AnswerSentences))?;
    let rule = ThresholdRule::Inclusive;
    let mut hits = Vec::new();
    for q_hit in question_hits {
        let Some(id) = question_id_from_doc(&q_hit.doc_id) else {
            return Err(EngineError::CorpusIndexMismatch(format!(
                "unexpected doc id {:?} in the question collection",
                q_hit.doc_id
            )));
        };
        for i in 0..kb.sentence_count(id) {
            let doc_id = sentence_doc_id(id, i);
            let Some(vector) = sentences.vector(&doc_id) else {
                return Err(EngineError::CorpusIndexMismatch(format!(
                    "question {id} matched but sentence {i} is not indexed"
                )));
            };
            let similarity = query.dot(vector)?.clamp(-1.0, 1.0);
            if rule.selects(similarity, tau) {
                hits.push(Hit {
                    doc_id,
                    similarity,
                    payload_ref: sentence_payload_ref(id, i),
                });
            }
        }
    }
    Ok(hits)
}

/// Joins hit payloads in hit order, one delimiter line between items,
/// dropping repeated doc ids and stopping at the last whole item that
/// fits the character budget. A first item too large for the whole
/// budget is cut at the budget and marked.
pub fn assemble_context(hits: &[Hit], kb: &KnowledgeBase, budget_chars: usize) -> String {
    let mut seen: HashSet<&str> = HashSet::new();
    let mut parts: Vec<&str> = Vec::new();
    let mut used = 0usize;
    let delimiter_len = CONTEXT_DELIMITER.chars().count();
    for hit in hits {
        if !seen.insert(hit.doc_id.as_str()) {
            continue;
        }
        let Some(text) = kb.payload(&hit.payload_ref) else {
            log::warn!("hit {} has no payload {}", hit.doc_id, hit.payload_ref);
            continue;
        };
        let cost = match parts.is_empty() {
            true => text.chars().count(),
            false => delimiter_len + text.chars().count(),
        };
        if used + cost > budget_chars {
            if parts.is_empty() {
                let clipped: String = text.chars().take(budget_chars).collect();
                return format!("{clipped}{TRUNCATION_MARKER}");
            }
            break;
        }
        used += cost;
        parts.push(text);
    }
    parts.join(CONTEXT_DELIMITER)
}

/// Runs one question end to end: build the query, retrieve under the
/// policy, assemble context when anything was retrieved, and generate
/// the answer (zero-shot when retrieval came back empty). A failure is
/// labeled with the stage it happened in so a run can record it and
/// move on.
pub fn answer_question(
    question: &EvalQuestion,
    kb: &KnowledgeBase,
    config: &PipelineConfig,
    policy: &ThresholdPolicy,
    providers: &Providers<'_>,
    caps: &Caps,
) -> Result<AnsweredCase, CaseFailure> {
    let (query_text, query_vector) = make_query(
        &question.question_text,
        config,
        providers.chat,
        providers.embedder,
        providers.templates,
        providers.retry,
    )
    .map_err(|e| CaseFailure::new(Stage::Query, &e))?;

    let retrieval = retrieve(kb, &query_vector, config, policy, caps)
        .map_err(|e| CaseFailure::new(Stage::Retrieval, &e))?;

    let context_text = match retrieval.hits.is_empty() {
        true => None,
        false => Some(assemble_context(
            &retrieval.hits,
            kb,
            caps.context_budget_chars,
        )),
    };

    let answer_text = generate_answer(
        &question.question_text,
        context_text.as_deref(),
        providers.chat,
        providers.templates,
        providers.retry,
    )
    .map_err(|e| CaseFailure::new(Stage::Generation, &EngineError::Chat(e)))?;

    Ok(AnsweredCase {
        question: question.clone(),
        config: config.clone(),
        query_text,
        retrieval,
        context_text,
        answer_text,
        provider_model: providers.chat.model_id().to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::HashEmbedder;
    use crate::engine::kb::test_record;
    use crate::index::Index;
    use crate::ingest::{QARecord, QuestionOrigin};
    use crate::llm::{EchoChat, PromptRole, SyntheticChat};

    fn unit(values: &[f64]) -> UnitVector {
        UnitVector::new(values.to_vec()).unwrap()
    }

    fn retry() -> RetryPolicy {
        RetryPolicy::immediate(1)
    }

    fn toy_records() -> Vec<QARecord> {
        vec![
            test_record(
                1,
                "How do I reverse an array in Java?",
                "Use Collections.reverse after wrapping with Arrays.asList. It flips the list in place.",
                &[
                    "Use Collections.reverse after wrapping with Arrays.asList.",
                    "It flips the list in place.",
                ],
            ),
            test_record(
                2,
                "Why does my HashMap drop entries?",
                "Mutable keys break hashing. Make the key type immutable.",
                &["Mutable keys break hashing.", "Make the key type immutable."],
            ),
            test_record(
                3,
                "What does the volatile keyword guarantee?",
                "Visibility across threads, not atomicity of compound actions.",
                &["Visibility across threads, not atomicity of compound actions."],
            ),
        ]
    }

    fn toy_kb(embedder: &HashEmbedder) -> KnowledgeBase {
        KnowledgeBase::build(&toy_records(), embedder, &retry()).unwrap()
    }

    /// A KB with hand-placed vectors so similarities are exact.
    /// Question 1's title sits at [1,0]; its answer at [0,1]; its two
    /// sentences at [1,0] and [0,1]. Question 2 is rotated away from
    /// the x axis entirely, with a sentence back at [1,0].
    fn planted_kb() -> KnowledgeBase {
        let records = vec![
            test_record(1, "title one", "answer one", &["sentence 1.0", "sentence 1.1"]),
            test_record(2, "title two", "answer two", &["sentence 2.0"]),
        ];
        let mut index = Index::new(2);
        index
            .add(CollectionName::QuestionTitles, "q1", unit(&[1.0, 0.0]), "q:1")
            .unwrap();
        index
            .add(CollectionName::QuestionTitles, "q2", unit(&[0.0, 1.0]), "q:2")
            .unwrap();
        index
            .add(CollectionName::AnswersFull, "a1", unit(&[0.0, 1.0]), "a:1")
            .unwrap();
        index
            .add(CollectionName::AnswersFull, "a2", unit(&[0.0, 1.0]), "a:2")
            .unwrap();
        index
            .add(
                CollectionName::AnswerSentences,
                "s1.0",
                unit(&[1.0, 0.0]),
                "s:1:0",
            )
            .unwrap();
        index
            .add(
                CollectionName::AnswerSentences,
                "s1.1",
                unit(&[0.0, 1.0]),
                "s:1:1",
            )
            .unwrap();
        index
            .add(
                CollectionName::AnswerSentences,
                "s2.0",
                unit(&[1.0, 0.0]),
                "s:2:0",
            )
            .unwrap();
        KnowledgeBase::from_parts(index, &records).unwrap()
    }

    #[test]
    fn original_question_source_embeds_the_question_verbatim() {
        let config = PipelineConfig::from_preset("QB2").unwrap();
        let embedder = HashEmbedder::new(16, 0);
        let chat = EchoChat::new("echo");
        let templates = TemplateSet::builtin();
        let (text, vector) = make_query(
            "  How do I sort a map by value?  ",
            &config,
            &chat,
            &embedder,
            &templates,
            &retry(),
        )
        .unwrap();
        assert_eq!(text, "How do I sort a map by value?");
        assert_eq!(vector.dim(), 16);
    }

    #[test]
    fn hyde_source_embeds_the_pseudo_answer() {
        let config = PipelineConfig::from_preset("HB1").unwrap();
        let embedder = HashEmbedder::new(16, 0);
        let chat = EchoChat::new("echo");
        let templates = TemplateSet::builtin();
        let question = "How do I sort a map by value?";
        let (text, _) = make_query(question, &config, &chat, &embedder, &templates, &retry())
            .unwrap();
        let expected = templates
            .for_role(PromptRole::Hyde)
            .render(question, None, None)
            .unwrap();
        assert_eq!(text, expected);
        assert_ne!(text, question);
    }

    #[test]
    fn empty_question_is_rejected() {
        let config = PipelineConfig::from_preset("QB2").unwrap();
        let embedder = HashEmbedder::new(16, 0);
        let chat = EchoChat::new("echo");
        let templates = TemplateSet::builtin();
        match make_query("   ", &config, &chat, &embedder, &templates, &retry()) {
            Err(EngineError::EmptyQuestion) => {}
            other => panic!("expected empty-question error, got {other:?}"),
        }
    }

    #[test]
    fn direct_full_finds_the_answer_matching_the_query_exactly() {
        let embedder = HashEmbedder::new(64, 0);
        let kb = toy_kb(&embedder);
        let target = "Mutable keys break hashing. Make the key type immutable.";
        let query = embed_batch(&[target.to_string()], &embedder, &retry())
            .unwrap()
            .pop()
            .unwrap();
        let config = PipelineConfig::from_preset("HB1").unwrap();
        let result = retrieve_fixed(&kb, &query, &config, 0.9, &Caps::default()).unwrap();
        assert_eq!(result.hits.len(), 1);
        assert_eq!(result.hits[0].doc_id, "a2");
        assert!((result.hits[0].similarity - 1.0).abs() < 1e-9);
        assert_eq!(result.effective_threshold, 0.9);
        assert!(!result.fell_back_to_zero_shot);
        assert_eq!(result.attempts.len(), 1);
    }

    #[test]
    fn exact_threshold_with_no_identical_vector_returns_empty() {
        let embedder = HashEmbedder::new(64, 0);
        let kb = toy_kb(&embedder);
        let query = embed_batch(
            &["Totally unrelated cooking question about souffles.".to_string()],
            &embedder,
            &retry(),
        )
        .unwrap()
        .pop()
        .unwrap();
        let config = PipelineConfig::from_preset("QB2").unwrap();
        let result = retrieve_fixed(&kb, &query, &config, 1.0, &Caps::default()).unwrap();
        assert!(result.hits.is_empty());
        assert_eq!(result.attempts[0].hit_count, 0);
    }

    #[test]
    fn indirect_full_returns_the_answer_on_a_title_match() {
        let kb = planted_kb();
        let query = unit(&[1.0, 0.0]);
        let config = PipelineConfig::from_preset("QB1").unwrap();
        let result = retrieve_fixed(&kb, &query, &config, 0.8, &Caps::default()).unwrap();
        assert_eq!(result.hits.len(), 1);
        assert_eq!(result.hits[0].doc_id, "a1");
        assert_eq!(result.hits[0].payload_ref, "a:1");
        // The answer's own vector sits at zero similarity to the query;
        // the hit carries the title similarity that cleared the bar.
        assert!((result.hits[0].similarity - 1.0).abs() < 1e-9);
    }

    #[test]
    fn indirect_sentences_rescore_and_filter_at_the_same_threshold() {
        let kb = planted_kb();
        let query = unit(&[1.0, 0.0]);
        let config = PipelineConfig::from_preset("QB3").unwrap();
        let result = retrieve_fixed(&kb, &query, &config, 0.8, &Caps::default()).unwrap();
        // Question 1 matched; its sentence at [1,0] survives re-scoring,
        // its sentence at [0,1] does not. Question 2 never matched, so
        // its on-axis sentence must not leak in.
        let ids: Vec<&str> = result.hits.iter().map(|h| h.doc_id.as_str()).collect();
        assert_eq!(ids, vec!["s1.0"]);
    }

    #[test]
    fn caps_bound_hits_after_filtering() {
        let embedder = HashEmbedder::new(32, 7);
        let records: Vec<QARecord> = (0..10)
            .map(|i| {
                test_record(
                    i,
                    &format!("question {i}"),
                    &format!("answer {i}"),
                    &[&format!("answer {i}")],
                )
            })
            .collect();
        let kb = KnowledgeBase::build(&records, &embedder, &retry()).unwrap();
        let query = embed_batch(&["answer 3".to_string()], &embedder, &retry())
            .unwrap()
            .pop()
            .unwrap();
        let caps = Caps {
            full_answers: 2,
            ..Caps::default()
        };
        let config = PipelineConfig::from_preset("QB2").unwrap();
        let result = retrieve_fixed(&kb, &query, &config, 0.0, &caps).unwrap();
        assert_eq!(result.hits.len(), 2);
        assert_eq!(result.attempts[0].hit_count, 10);
        assert_eq!(result.hits[0].doc_id, "a3");
    }

    #[test]
    fn adaptive_walks_down_until_the_planted_similarity_clears() {
        let records = vec![test_record(1, "t", "a", &["a"])];
        let mut index = Index::new(2);
        let y = (1.0f64 - 0.63 * 0.63).sqrt();
        index
            .add(CollectionName::QuestionTitles, "q1", unit(&[0.0, 1.0]), "q:1")
            .unwrap();
        index
            .add(CollectionName::AnswersFull, "a1", unit(&[0.63, y]), "a:1")
            .unwrap();
        index
            .add(CollectionName::AnswerSentences, "s1.0", unit(&[0.0, 1.0]), "s:1:0")
            .unwrap();
        let kb = KnowledgeBase::from_parts(index, &records).unwrap();
        let query = unit(&[1.0, 0.0]);
        let config = PipelineConfig::from_preset("QB2").unwrap();
        let policy = ThresholdPolicy::adaptive(0.9, 0.1, 0.5).unwrap();
        let result = retrieve_adaptive(&kb, &query, &config, &policy, &Caps::default()).unwrap();

        let tried: Vec<f64> = result.attempts.iter().map(|a| a.threshold).collect();
        assert_eq!(tried, vec![0.9, 0.8, 0.7, 0.6]);
        assert_eq!(result.effective_threshold, 0.6);
        assert_eq!(result.hits.len(), 1);
        assert!((result.hits[0].similarity - 0.63).abs() < 1e-9);
        assert!(!result.fell_back_to_zero_shot);
        let counts: Vec<usize> = result.attempts.iter().map(|a| a.hit_count).collect();
        assert_eq!(counts, vec![0, 0, 0, 1]);
    }

    #[test]
    fn adaptive_stops_at_the_first_threshold_with_content() {
        let embedder = HashEmbedder::new(64, 0);
        let kb = toy_kb(&embedder);
        let target = "Visibility across threads, not atomicity of compound actions.";
        let query = embed_batch(&[target.to_string()], &embedder, &retry())
            .unwrap()
            .pop()
            .unwrap();
        let config = PipelineConfig::from_preset("QB2").unwrap();
        let policy = ThresholdPolicy::adaptive_default();
        let result = retrieve_adaptive(&kb, &query, &config, &policy, &Caps::default()).unwrap();
        assert_eq!(result.attempts.len(), 1);
        assert_eq!(result.effective_threshold, 0.9);
        assert_eq!(result.hits[0].doc_id, "a3");
    }

    #[test]
    fn adaptive_flags_zero_shot_when_nothing_clears_the_floor() {
        let kb = planted_kb();
        // Max similarity to any answer is 0.2 < floor 0.5.
        let query = unit(&[0.98, 0.2]);
        let config = PipelineConfig::from_preset("QB2").unwrap();
        let policy = ThresholdPolicy::adaptive(0.9, 0.1, 0.5).unwrap();
        let result = retrieve_adaptive(&kb, &query, &config, &policy, &Caps::default()).unwrap();
        assert!(result.hits.is_empty());
        assert!(result.fell_back_to_zero_shot);
        assert_eq!(result.attempts.len(), 5);
        assert_eq!(result.effective_threshold, 0.5);
    }

    #[test]
    fn adaptive_rejects_a_fixed_policy() {
        let kb = planted_kb();
        let query = unit(&[1.0, 0.0]);
        let config = PipelineConfig::from_preset("QB2").unwrap();
        let policy = ThresholdPolicy::fixed(0.7).unwrap();
        match retrieve_adaptive(&kb, &query, &config, &policy, &Caps::default()) {
            Err(EngineError::BadPolicy(_)) => {}
            other => panic!("expected policy error, got {other:?}"),
        }
    }

    #[test]
    fn effective_threshold_matches_a_brute_force_sweep() {
        let embedder = HashEmbedder::new(24, 99);
        let texts = [
            "generics type erasure",
            "list comprehension scope",
            "null pointer dereference",
            "dependency injection setup",
            "regex lookahead syntax",
            "thread pool sizing",
        ];
        let records: Vec<QARecord> = texts
            .iter()
            .enumerate()
            .map(|(i, t)| test_record(i as i64, &format!("about {t}"), t, &[t]))
            .collect();
        let kb = KnowledgeBase::build(&records, &embedder, &retry()).unwrap();
        let policy = ThresholdPolicy::adaptive(0.9, 0.1, 0.1).unwrap();
        let caps = Caps::default();

        for config in PipelineConfig::all_combinations() {
            for probe in ["thread pool sizing", "regex syntax", "llamas in hats"] {
                let query = embed_batch(&[probe.to_string()], &embedder, &retry())
                    .unwrap()
                    .pop()
                    .unwrap();
                let adaptive =
                    retrieve_adaptive(&kb, &query, &config, &policy, &caps).unwrap();
                let sweep_best = policy.grid().into_iter().find(|tau| {
                    !retrieve_fixed(&kb, &query, &config, *tau, &caps)
                        .unwrap()
                        .hits
                        .is_empty()
                });
                match sweep_best {
                    Some(tau) => {
                        assert!(!adaptive.fell_back_to_zero_shot);
                        assert_eq!(adaptive.effective_threshold, tau, "{}", config.label());
                    }
                    None => {
                        assert!(adaptive.fell_back_to_zero_shot, "{}", config.label());
                        assert!(adaptive.hits.is_empty());
                    }
                }
            }
        }
    }

    #[test]
    fn coverage_never_increases_with_the_threshold() {
        let embedder = HashEmbedder::new(24, 5);
        let kb = toy_kb(&embedder);
        let probes = [
            "How do I reverse an array in Java?",
            "HashMap drop entries",
            "volatile keyword",
            "unrelated pottery glazing",
            "Mutable keys break hashing.",
        ];
        let config = PipelineConfig::from_preset("QB2").unwrap();
        let caps = Caps::default();
        let mut last_covered = usize::MAX;
        for tau_m in [0, 2, 4, 6, 8, 10] {
            let tau = tau_m as f64 / 10.0;
            let covered = probes
                .iter()
                .filter(|probe| {
                    let query = embed_batch(&[probe.to_string()], &embedder, &retry())
                        .unwrap()
                        .pop()
                        .unwrap();
                    !retrieve_fixed(&kb, &query, &config, tau, &caps)
                        .unwrap()
                        .hits
                        .is_empty()
                })
                .count();
            assert!(covered <= last_covered, "coverage rose at tau {tau}");
            last_covered = covered;
        }
    }

    #[test]
    fn adaptive_coverage_dominates_fixed_start() {
        let embedder = HashEmbedder::new(24, 13);
        let kb = toy_kb(&embedder);
        let probes = [
            "reverse an array",
            "HashMap entries disappearing",
            "volatile guarantees",
            "quantum cheese physics",
        ];
        let config = PipelineConfig::from_preset("QB2").unwrap();
        let policy = ThresholdPolicy::adaptive(0.9, 0.1, 0.1).unwrap();
        let caps = Caps::default();
        for probe in probes {
            let query = embed_batch(&[probe.to_string()], &embedder, &retry())
                .unwrap()
                .pop()
                .unwrap();
            let fixed = retrieve_fixed(&kb, &query, &config, policy.start, &caps).unwrap();
            let adaptive = retrieve_adaptive(&kb, &query, &config, &policy, &caps).unwrap();
            if !fixed.hits.is_empty() {
                assert!(!adaptive.hits.is_empty());
                assert_eq!(adaptive.effective_threshold, policy.start);
            }
            if adaptive.hits.is_empty() {
                assert!(fixed.hits.is_empty());
            }
        }
    }

    #[test]
    fn context_joins_payloads_in_hit_order() {
        let kb = planted_kb();
        let hits = vec![
            Hit {
                doc_id: "a1".to_string(),
                similarity: 0.9,
                payload_ref: "a:1".to_string(),
            },
            Hit {
                doc_id: "a2".to_string(),
                similarity: 0.8,
                payload_ref: "a:2".to_string(),
            },
        ];
        let text = assemble_context(&hits, &kb, 10_000);
        assert_eq!(text, format!("answer one{CONTEXT_DELIMITER}answer two"));
    }

    #[test]
    fn context_drops_repeated_doc_ids() {
        let kb = planted_kb();
        let hit = Hit {
            doc_id: "a1".to_string(),
            similarity: 0.9,
            payload_ref: "a:1".to_string(),
        };
        let text = assemble_context(&[hit.clone(), hit], &kb, 10_000);
        assert_eq!(text, "answer one");
    }

    #[test]
    fn context_stops_at_the_last_whole_item_that_fits() {
        let kb = planted_kb();
        let hits = vec![
            Hit {
                doc_id: "a1".to_string(),
                similarity: 0.9,
                payload_ref: "a:1".to_string(),
            },
            Hit {
                doc_id: "a2".to_string(),
                similarity: 0.8,
                payload_ref: "a:2".to_string(),
            },
        ];
        // "answer one" is 10 chars; the delimiter and second item need
        // 15 more. A budget of 12 keeps only the first item whole.
        let text = assemble_context(&hits, &kb, 12);
        assert_eq!(text, "answer one");
    }

    #[test]
    fn oversized_first_item_is_cut_at_the_budget_and_marked() {
        let kb = planted_kb();
        let hits = vec![Hit {
            doc_id: "a1".to_string(),
            similarity: 0.9,
            payload_ref: "a:1".to_string(),
        }];
        let text = assemble_context(&hits, &kb, 6);
        assert_eq!(text, format!("answer{TRUNCATION_MARKER}"));
    }

    fn eval_question(text: &str) -> EvalQuestion {
        EvalQuestion {
            id: 9001,
            question_text: text.to_string(),
            reference_answer: None,
            origin: QuestionOrigin::Unseen,
        }
    }

    #[test]
    fn answered_case_records_context_and_effective_threshold() {
        let embedder = HashEmbedder::new(64, 0);
        let kb = toy_kb(&embedder);
        let chat = SyntheticChat::new("synthetic-chat", 1);
        let templates = TemplateSet::builtin();
        let providers = Providers {
            chat: &chat,
            embedder: &embedder,
            templates: &templates,
            retry: &retry(),
        };
        // Asking with a title the KB contains verbatim guarantees an
        // indirect title match on the first attempt.
        let question = eval_question("How do I reverse an array in Java?");
        let config = PipelineConfig::from_preset("QB1").unwrap();
        let policy = ThresholdPolicy::adaptive_default();
        let case =
            answer_question(&question, &kb, &config, &policy, &providers, &Caps::default())
                .unwrap();

        assert_eq!(case.retrieval.effective_threshold, 0.9);
        assert!(!case.retrieval.fell_back_to_zero_shot);
        assert_eq!(case.retrieval.hits[0].doc_id, "a1");
        let context = case.context_text.as_deref().unwrap();
        assert!(context.contains("Collections.reverse"));
        assert!(!case.answer_text.is_empty());
        assert_eq!(case.provider_model, "synthetic-chat");
        assert_eq!(case.query_text, question.question_text);
    }

    #[test]
    fn empty_retrieval_at_the_floor_falls_back_to_zero_shot() {
        let embedder = HashEmbedder::new(64, 0);
        let kb = toy_kb(&embedder);
        let chat = SyntheticChat::new("synthetic-chat", 1);
        let templates = TemplateSet::builtin();
        let providers = Providers {
            chat: &chat,
            embedder: &embedder,
            templates: &templates,
            retry: &retry(),
        };
        let question = eval_question("Completely unrelated llama grooming question?");
        let config = PipelineConfig::from_preset("QB2").unwrap();
        let policy = ThresholdPolicy::adaptive_default();
        let case =
            answer_question(&question, &kb, &config, &policy, &providers, &Caps::default())
                .unwrap();

        assert!(case.retrieval.fell_back_to_zero_shot);
        assert!(case.retrieval.hits.is_empty());
        assert!(case.context_text.is_none());
        assert!(!case.answer_text.is_empty());
        assert_eq!(case.retrieval.attempts.len(), 5);
    }

    #[test]
    fn fixed_mode_with_no_hits_is_not_a_fallback() {
        let embedder = HashEmbedder::new(64, 0);
        let kb = toy_kb(&embedder);
        let chat = SyntheticChat::new("synthetic-chat", 1);
        let templates = TemplateSet::builtin();
        let providers = Providers {
            chat: &chat,
            embedder: &embedder,
            templates: &templates,
            retry: &retry(),
        };
        let question = eval_question("Completely unrelated llama grooming question?");
        let config = PipelineConfig::from_preset("QB2").unwrap();
        let policy = ThresholdPolicy::fixed(0.9).unwrap();
        let case =
            answer_question(&question, &kb, &config, &policy, &providers, &Caps::default())
                .unwrap();

        assert!(!case.retrieval.fell_back_to_zero_shot);
        assert!(case.context_text.is_none());
        assert!(!case.answer_text.is_empty());
    }

    #[test]
    fn failures_carry_the_stage_they_happened_in() {
        let embedder = HashEmbedder::new(64, 0);
        let kb = toy_kb(&embedder);
        let chat = crate::llm::ScriptedChat::new(Vec::<String>::new());
        let templates = TemplateSet::builtin();
        let providers = Providers {
            chat: &chat,
            embedder: &embedder,
            templates: &templates,
            retry: &retry(),
        };
        // An exhausted script makes the hyde call fail in the query stage.
        let question = eval_question("How do I reverse an array in Java?");
        let config = PipelineConfig::from_preset("HB1").unwrap();
        let policy = ThresholdPolicy::adaptive_default();
        let failure =
            answer_question(&question, &kb, &config, &policy, &providers, &Caps::default())
                .unwrap_err();
        assert_eq!(failure.stage, Stage::Query);

        // With retrieval disabled by an original-question config, the
        // same empty script fails at generation instead.
        let config = PipelineConfig::from_preset("QB2").unwrap();
        let failure =
            answer_question(&question, &kb, &config, &policy, &providers, &Caps::default())
                .unwrap_err();
        assert_eq!(failure.stage, Stage::Generation);
    }

    #[test]
    fn identical_inputs_produce_identical_cases() {
        let embedder = HashEmbedder::new(64, 3);
        let kb = toy_kb(&embedder);
        let templates = TemplateSet::builtin();
        let question = eval_question("How do I reverse an array in Java?");
        let config = PipelineConfig::from_preset("HB1").unwrap();
        let policy = ThresholdPolicy::adaptive_default();

        let mut transcripts = Vec::new();
        for _ in 0..2 {
            let chat = SyntheticChat::new("synthetic-chat", 42);
            let providers = Providers {
                chat: &chat,
                embedder: &embedder,
                templates: &templates,
                retry: &retry(),
            };
            let case = answer_question(
                &question,
                &kb,
                &config,
                &policy,
                &providers,
                &Caps::default(),
            )
            .unwrap();
            transcripts.push(serde_json::to_string(&case).unwrap());
        }
        assert_eq!(transcripts[0], transcripts[1]);
    }

    #[test]
    fn missing_collection_is_a_configuration_error() {
        let records = vec![test_record(1, "t", "a", &["a"])];
        let mut index = Index::new(2);
        index
            .add(CollectionName::QuestionTitles, "q1", unit(&[1.0, 0.0]), "q:1")
            .unwrap();
        index
            .add(CollectionName::AnswersFull, "a1", unit(&[1.0, 0.0]), "a:1")
            .unwrap();
        // No sentence collection at all: pairing up the corpus fails
        // before any retrieval can run against a half-built index.
        match KnowledgeBase::from_parts(index, &records) {
            Err(EngineError::MissingCollection(name)) => {
                assert_eq!(name, CollectionName::AnswerSentences);
            }
            other => panic!("expected missing collection, got {other:?}"),
        }

        // With all collections present every combination retrieves.
        let mut full = Index::new(2);
        full.add(CollectionName::QuestionTitles, "q1", unit(&[1.0, 0.0]), "q:1")
            .unwrap();
        full.add(CollectionName::AnswersFull, "a1", unit(&[1.0, 0.0]), "a:1")
            .unwrap();
        full.add(CollectionName::AnswerSentences, "s1.0", unit(&[1.0, 0.0]), "s:1:0")
            .unwrap();
        let kb = KnowledgeBase::from_parts(full, &records).unwrap();
        let query = unit(&[1.0, 0.0]);
        for config in PipelineConfig::all_combinations() {
            retrieve_fixed(&kb, &query, &config, 0.5, &Caps::default()).unwrap();
        }
    }
}
