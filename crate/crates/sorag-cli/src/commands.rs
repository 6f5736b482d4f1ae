//! The five subcommand implementations. Each returns a serializable
//! summary; stdout printing stays in the dispatcher so the functions
//! can be exercised directly in tests.

use std::collections::HashSet;
use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sorag::engine::{
    answer_question, Caps, KnowledgeBase, PipelineConfig, Providers, ThresholdAttempt,
    ThresholdPolicy, DEFAULT_ADAPTIVE_FLOOR, DEFAULT_ADAPTIVE_START, DEFAULT_THRESHOLD_STEP,
};
use sorag::index::{CollectionName, Index};
use sorag::ingest::{
    build_synthetic_set, build_unseen_set, default_allowed_tags, default_cutoff, filter_qa,
    parse_post_links, parse_posts, read_corpus, temporal_split, write_corpus, write_questions,
    DuplicatePolicy, EvalQuestion, IngestError, IngestManifest, QuestionOrigin,
};
use sorag::runner::{run_experiment, ExperimentManifest, ExperimentProviders, ModelArm,
    RunnerError,
};

use crate::config::load_settings;
use crate::{AskArgs, CliError, ExperimentArgs, IndexArgs, IngestArgs, QuestionsArgs,
    QuestionsCommand,
};

fn input_ingest(err: IngestError) -> CliError {
    CliError::input(err.to_string())
}

fn runtime(err: impl std::fmt::Display) -> CliError {
    CliError::runtime(err.to_string())
}

fn create_parent(path: &Path) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .map_err(|e| runtime(format!("cannot create {}: {e}", parent.display())))?;
        }
    }
    Ok(())
}

fn sibling(path: &Path, name: &str) -> PathBuf {
    match path.parent() {
        Some(parent) if !parent.as_os_str().is_empty() => parent.join(name),
        _ => PathBuf::from(name),
    }
}

/// Parses the dump, filters to usable QA pairs, splits on the cutoff
/// date, and writes the knowledge-base corpus, the unseen pool, and a
/// manifest of every counter the run produced.
pub fn cmd_ingest(args: &IngestArgs) -> Result<IngestManifest, CliError> {
    let dump = File::open(&args.dump)
        .map_err(|e| CliError::input(format!("cannot read dump {}: {e}", args.dump.display())))?;
    let mut stream = parse_posts(BufReader::new(dump));
    let mut posts = Vec::new();
    for item in &mut stream {
        let post = item
            .map_err(|e| CliError::input(format!("dump {}: {e}", args.dump.display())))?;
        posts.push(post);
    }
    let posts_row_errors = stream.row_errors();
    let posts_skipped_types = stream.skipped_types();

    let (duplicates, policy_name, post_links) = match &args.links {
        Some(path) => {
            let file = File::open(path).map_err(|e| {
                CliError::input(format!("cannot read links {}: {e}", path.display()))
            })?;
            let (ids, stats) = parse_post_links(BufReader::new(file))
                .map_err(|e| CliError::input(format!("links {}: {e}", path.display())))?;
            (DuplicatePolicy::Ids(ids), "post_links", Some(stats))
        }
        None => (DuplicatePolicy::ClosedDate, "closed_date", None),
    };

    let tags: HashSet<String> = if args.tags.is_empty() {
        default_allowed_tags()
    } else {
        args.tags
            .iter()
            .map(|t| t.trim().to_ascii_lowercase())
            .filter(|t| !t.is_empty())
            .collect()
    };

    let (records, filter) = filter_qa(posts, &duplicates, &tags);
    let cutoff = args.cutoff.unwrap_or_else(default_cutoff);
    let split = temporal_split(records, cutoff);

    create_parent(&args.corpus)?;
    write_corpus(&args.corpus, &split.kb).map_err(runtime)?;
    let unseen_path = args
        .unseen_out
        .clone()
        .unwrap_or_else(|| sibling(&args.corpus, "unseen_pool.jsonl"));
    create_parent(&unseen_path)?;
    write_corpus(&unseen_path, &split.unseen_pool).map_err(runtime)?;

    let mut allowed_tags: Vec<String> = tags.into_iter().collect();
    allowed_tags.sort();
    let manifest = IngestManifest {
        cutoff,
        duplicate_policy: policy_name.to_string(),
        allowed_tags,
        posts_row_errors,
        posts_skipped_types,
        post_links,
        filter,
        kb_records: split.kb.len(),
        unseen_records: split.unseen_pool.len(),
    };
    manifest
        .save(&args.corpus.with_extension("manifest.json"))
        .map_err(runtime)?;
    Ok(manifest)
}

/// What `index` prints: per-collection entry counts plus the artifact
/// location.
#[derive(Debug, Serialize)]
pub struct IndexSummary {
    pub records: usize,
    pub dim: usize,
    pub question_titles: usize,
    pub answers_full: usize,
    pub answer_sentences: usize,
    pub index: String,
}

/// Embeds a corpus into the three collections and persists the index.
pub fn cmd_index(args: &IndexArgs) -> Result<IndexSummary, CliError> {
    let records = read_corpus(&args.corpus).map_err(input_ingest)?;
    let settings = load_settings(&args.providers, None)?;
    let embedder = settings.build_embedder()?;
    let retry = settings.retry();
    let kb = KnowledgeBase::build(&records, &*embedder, &retry).map_err(runtime)?;

    create_parent(&args.index)?;
    kb.index().save(&args.index).map_err(runtime)?;

    let count = |name: CollectionName| {
        kb.index().collection(name).map(|c| c.len()).unwrap_or(0)
    };
    Ok(IndexSummary {
        records: records.len(),
        dim: kb.index().dim(),
        question_titles: count(CollectionName::QuestionTitles),
        answers_full: count(CollectionName::AnswersFull),
        answer_sentences: count(CollectionName::AnswerSentences),
        index: args.index.display().to_string(),
    })
}

#[derive(Debug, Serialize)]
pub struct ProvenanceHit {
    pub doc_id: String,
    pub similarity: f64,
}

/// The JSON block printed after the answer text.
#[derive(Debug, Serialize)]
pub struct Provenance {
    pub pipeline: String,
    pub query_text: String,
    pub effective_threshold: f64,
    pub fell_back_to_zero_shot: bool,
    pub attempts: Vec<ThresholdAttempt>,
    pub hits: Vec<ProvenanceHit>,
    pub model: String,
}

#[derive(Debug)]
pub struct AskOutput {
    pub answer: String,
    pub provenance: Provenance,
}

fn resolve_policy(args: &AskArgs) -> Result<ThresholdPolicy, CliError> {
    let wants_adaptive =
        args.adaptive || args.start.is_some() || args.step.is_some() || args.floor.is_some();
    match (args.threshold, wants_adaptive) {
        (Some(_), true) => Err(CliError::usage(
            "--threshold conflicts with --adaptive/--start/--step/--floor",
        )),
        (Some(tau), false) => ThresholdPolicy::fixed(tau).map_err(|e| CliError::usage(e.to_string())),
        (None, true) => ThresholdPolicy::adaptive(
            args.start.unwrap_or(DEFAULT_ADAPTIVE_START),
            args.step.unwrap_or(DEFAULT_THRESHOLD_STEP),
            args.floor.unwrap_or(DEFAULT_ADAPTIVE_FLOOR),
        )
        .map_err(|e| CliError::usage(e.to_string())),
        (None, false) => Ok(ThresholdPolicy::adaptive_default()),
    }
}

/// Answers one question against a saved index, printing the answer and
/// a provenance block. The mock embedder must be seeded the same way it
/// was for `index`, which holds whenever the same `--seed` is passed.
pub fn cmd_ask(args: &AskArgs) -> Result<AskOutput, CliError> {
    let config =
        PipelineConfig::from_preset(&args.preset).map_err(|e| CliError::usage(e.to_string()))?;
    let policy = resolve_policy(args)?;

    let index = Index::load(&args.index)
        .map_err(|e| CliError::input(format!("index {}: {e}", args.index.display())))?;
    let records = read_corpus(&args.corpus).map_err(input_ingest)?;
    let settings = load_settings(&args.providers, Some(index.dim()))?;
    let kb = KnowledgeBase::from_parts(index, &records).map_err(|e| {
        CliError::input(format!(
            "index {} does not match corpus {}: {e}",
            args.index.display(),
            args.corpus.display()
        ))
    })?;

    let chat = settings.build_chat()?;
    let embedder = settings.build_embedder()?;
    let retry = settings.retry();
    let providers = Providers {
        chat: &*chat,
        embedder: &*embedder,
        templates: &settings.templates,
        retry: &retry,
    };

    let question = EvalQuestion {
        id: 0,
        question_text: args.question.clone(),
        reference_answer: None,
        origin: QuestionOrigin::Unseen,
    };
    let case = answer_question(&question, &kb, &config, &policy, &providers, &Caps::default())
        .map_err(|f| CliError::stage(format!("ask failed at the {} stage: {}", f.stage, f.message)))?;

    let hits = case
        .retrieval
        .hits
        .iter()
        .map(|h| ProvenanceHit {
            doc_id: h.doc_id.clone(),
            similarity: h.similarity,
        })
        .collect();
    Ok(AskOutput {
        answer: case.answer_text,
        provenance: Provenance {
            pipeline: case.config.label(),
            query_text: case.query_text,
            effective_threshold: case.retrieval.effective_threshold,
            fell_back_to_zero_shot: case.retrieval.fell_back_to_zero_shot,
            attempts: case.retrieval.attempts,
            hits,
            model: case.provider_model,
        },
    })
}

fn map_runner(err: RunnerError) -> CliError {
    match err {
        RunnerError::BadSpec(_) | RunnerError::SpecFile { .. } => CliError::spec(err.to_string()),
        RunnerError::Ingest(inner) => input_ingest(inner),
        other => runtime(other),
    }
}

/// Loads an experiment spec, builds providers (one arm per model for
/// the model protocol), runs it, and returns the manifest.
pub fn cmd_experiment(args: &ExperimentArgs) -> Result<ExperimentManifest, CliError> {
    let spec = sorag::runner::ExperimentSpec::load(&args.spec).map_err(map_runner)?;
    spec.validate().map_err(map_runner)?;
    let settings = load_settings(&args.providers, None)?;

    let seed_for = |key: &str, fallback: u64| spec.seeds.get(key).copied().unwrap_or(fallback);
    let chat = settings.build_chat_seeded(seed_for("chat", settings.seed))?;
    let judge = settings.build_judge_seeded(seed_for("judge", settings.judge_seed()))?;
    let embedder = settings.build_embedder_seeded(seed_for("embedder", settings.embed_seed()))?;
    let retry = settings.retry();

    // Arm seeds combine the base seed with each model's own offset so
    // two arms never collapse onto the same synthetic stream unless the
    // spec says so.
    let mut arms: Vec<(String, Box<dyn sorag::llm::ChatProvider>)> = Vec::new();
    for model in &spec.models {
        let seed = settings.seed.wrapping_add(model.seed);
        let provider = settings.build_arm(&model.name, seed)?;
        arms.push((model.name.clone(), provider));
    }
    let providers = ExperimentProviders {
        chat: &*chat,
        judge: &*judge,
        embedder: &*embedder,
        templates: &settings.templates,
        retry: &retry,
        models: arms
            .iter()
            .map(|(name, handle)| ModelArm {
                name: name.clone(),
                chat: &**handle,
            })
            .collect(),
    };

    run_experiment(&spec, &args.out, &providers).map_err(map_runner)
}

/// What `questions` prints.
#[derive(Debug, Serialize)]
pub struct QuestionsSummary {
    pub mode: String,
    pub written: usize,
    pub skipped: usize,
    pub out: String,
}

/// Builds an evaluation question set, either by paraphrasing sampled
/// knowledge-base posts or by balancing the post-cutoff pool against
/// the knowledge base.
pub fn cmd_questions(args: &QuestionsArgs) -> Result<QuestionsSummary, CliError> {
    match &args.command {
        QuestionsCommand::Unseen {
            corpus,
            pool,
            out,
            providers,
        } => {
            let kb = read_corpus(corpus).map_err(input_ingest)?;
            let pool_records = read_corpus(pool).map_err(input_ingest)?;
            let settings = load_settings(providers, None)?;
            let titles: HashSet<String> = kb.iter().map(|r| r.title.clone()).collect();
            let questions = build_unseen_set(&pool_records, &titles, settings.seed)
                .map_err(runtime)?;
            write_out(out, &questions)?;
            Ok(QuestionsSummary {
                mode: "unseen".to_string(),
                written: questions.len(),
                skipped: pool_records.len() - questions.len(),
                out: out.display().to_string(),
            })
        }
        QuestionsCommand::Synthetic {
            corpus,
            count,
            out,
            providers,
        } => {
            let records = read_corpus(corpus).map_err(input_ingest)?;
            let settings = load_settings(providers, None)?;
            let chat = settings.build_chat()?;
            let retry = settings.retry();
            let outcome = build_synthetic_set(
                &records,
                *count,
                &*chat,
                &settings.templates,
                &retry,
                settings.seed,
            )
            .map_err(|e| match e {
                IngestError::SampleTooLarge { .. } => CliError::usage(e.to_string()),
                other => runtime(other),
            })?;
            write_out(out, &outcome.questions)?;
            Ok(QuestionsSummary {
                mode: "synthetic".to_string(),
                written: outcome.questions.len(),
                skipped: outcome.skipped,
                out: out.display().to_string(),
            })
        }
    }
}

fn write_out(path: &Path, questions: &[EvalQuestion]) -> Result<(), CliError> {
    create_parent(path)?;
    write_questions(path, questions).map_err(runtime)
}
