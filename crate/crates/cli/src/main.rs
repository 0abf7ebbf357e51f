use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use selfedit_core::comment::CommentRecord;
use selfedit_core::dataset::{build_dataset, check_single_model, EditorExample};
use selfedit_core::editor::{Editor, EditorBackendKind, EditorConfig};
use selfedit_core::generator::{
    generate_all, parse_candidate_id, Candidate, CountingBackend, GeneratorBackendKind, GeneratorConfig, Origin,
    RateLimiter,
};
use selfedit_core::jsonl::{read_jsonl, write_json_pretty, write_jsonl};
use selfedit_core::metrics::{build_matrix, evaluate, render_report_table, Estimator};
use selfedit_core::pipeline::{
    comment_outcomes, edit_candidates, exec_candidates, resume_until, run_until, EditGating, RunConfig, RunStatus,
    TestSet,
};
use selfedit_core::sandbox::{OutcomeRecord, SandboxConfig};
use selfedit_core::store::{
    corpus_stats, ingest_apps, ingest_humaneval, load_split_ids, render_stats_table, write_corpus, AppsIngestOptions,
    AppsSplit, Corpus,
};

#[derive(Parser)]
#[command(
    name = "selfedit",
    version,
    about = "Generate, execute, comment, edit and score code candidates"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Apps,
    Humaneval,
}

#[derive(Clone, Copy, ValueEnum)]
enum Split {
    Train,
    Dev,
    Test,
}

#[derive(Clone, Copy, ValueEnum)]
enum Tests {
    Example,
    Hidden,
}

#[derive(Clone, Copy, ValueEnum)]
enum GenBackend {
    Http,
    Mock,
}

#[derive(Clone, Copy, ValueEnum)]
enum EditBackend {
    Http,
    Icl,
    Mock,
}

#[derive(Clone, Copy, ValueEnum)]
enum Gating {
    Always,
    OnlyFailingExample,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportFormat {
    Json,
    Table,
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimatorArg {
    Prefix,
    Unbiased,
}

#[derive(clap::Args, Clone)]
struct GeneratorArgs {
    /// Directory of `<problem id>/NNN.txt` completions for the mock backend.
    #[arg(long)]
    fixtures: Option<PathBuf>,
    /// Completion endpoint; falls back to SELFEDIT_ENDPOINT.
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long, default_value = "mock")]
    model: String,
    #[arg(long, default_value_t = 0.8)]
    temperature: f64,
    #[arg(long, default_value_t = 512)]
    max_new_tokens: u32,
    #[arg(long, default_value_t = 3)]
    max_retries: u32,
    #[arg(long, default_value_t = 60_000)]
    request_timeout_ms: u64,
    #[arg(long)]
    rate_limit_per_minute: Option<u32>,
}

impl GeneratorArgs {
    fn config(&self, backend: GenBackend, k: usize) -> GeneratorConfig {
        GeneratorConfig {
            backend: match backend {
                GenBackend::Http => GeneratorBackendKind::HttpCompletion,
                GenBackend::Mock => GeneratorBackendKind::Mock,
            },
            endpoint_url: self.endpoint.clone(),
            model_name: self.model.clone(),
            temperature: self.temperature,
            samples_per_problem: k,
            max_new_tokens: self.max_new_tokens,
            request_timeout_ms: self.request_timeout_ms,
            max_retries: self.max_retries,
            retry_backoff_ms: 500,
            rate_limit_per_minute: self.rate_limit_per_minute,
            fixture_dir: self.fixtures.clone(),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Normalize an APPS directory or the HumanEval archive into corpus JSONL.
    Ingest {
        #[arg(long, value_enum)]
        format: Format,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// APPS split to read.
        #[arg(long, value_enum, default_value = "test")]
        split: Split,
        /// File of APPS dev-split folder names, one per line.
        #[arg(long)]
        dev_ids: Option<PathBuf>,
        /// Skip APPS folders without hidden tests instead of failing.
        #[arg(long)]
        skip_invalid: bool,
    },
    /// Problem counts and mean hidden tests of a corpus.
    Stats {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Run candidates on example or hidden tests.
    Exec {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        candidates: PathBuf,
        #[arg(long, value_enum)]
        tests: Tests,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 4000)]
        time_limit_ms: u64,
        #[arg(long, default_value_t = 4)]
        jobs: usize,
        #[arg(long)]
        fail_fast: bool,
        /// Interpreter command, split on whitespace.
        #[arg(long, default_value = "python3")]
        interpreter: String,
        #[arg(long)]
        memory_limit_mb: Option<u64>,
    },
    /// Render supplementary comments from example outcomes.
    Comment {
        #[arg(long)]
        outcomes: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Candidates file; problem ids are read from candidate ids otherwise.
        #[arg(long)]
        candidates: Option<PathBuf>,
    },
    /// Sample k programs per problem.
    Generate {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, value_enum)]
        backend: GenBackend,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 4)]
        jobs: usize,
        #[command(flatten)]
        generator: GeneratorArgs,
    },
    /// Edit each candidate once given its comment.
    Edit {
        #[arg(long)]
        cands: PathBuf,
        #[arg(long)]
        comments: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, value_enum)]
        backend: EditBackend,
        #[arg(long)]
        out: PathBuf,
        /// Example outcomes, needed for only-failing-example gating.
        #[arg(long)]
        outcomes: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "always")]
        gating: Gating,
        /// JSON rewrite rules for the mock editor.
        #[arg(long)]
        mock_rules: Option<PathBuf>,
        /// Editor endpoint; falls back to SELFEDIT_ENDPOINT.
        #[arg(long)]
        editor_endpoint: Option<String>,
        #[arg(long, default_value = "editor")]
        editor_model: String,
        /// Generator backend used by `--backend icl`.
        #[arg(long, value_enum, default_value = "http")]
        generator_backend: GenBackend,
        #[arg(long, default_value_t = 1024)]
        input_token_budget: usize,
        #[arg(long, default_value_t = 512)]
        output_token_budget: usize,
        #[arg(long, default_value_t = 4)]
        jobs: usize,
        #[command(flatten)]
        generator: GeneratorArgs,
    },
    /// pass@k, sol@k and their edited counterparts.
    Report {
        #[arg(long)]
        base_outcomes: PathBuf,
        #[arg(long)]
        edited_outcomes: Option<PathBuf>,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1,5,10")]
        k: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "json")]
        format: ReportFormat,
        #[arg(long, value_enum, default_value = "prefix")]
        estimator: EstimatorArg,
        /// Comments file for the class histogram.
        #[arg(long)]
        comments: Option<PathBuf>,
    },
    /// Build the editor training set from sampled programs.
    BuildEditorDataset {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, value_enum)]
        backend: GenBackend,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
        /// Append to an existing dataset file.
        #[arg(long)]
        append: bool,
        /// Allow examples from different generating models in one file.
        #[arg(long)]
        allow_mixed_models: bool,
        /// Where to write the build summary (JSON).
        #[arg(long)]
        summary: Option<PathBuf>,
        #[arg(long, default_value_t = 4000)]
        time_limit_ms: u64,
        #[arg(long, default_value_t = 4)]
        jobs: usize,
        #[command(flatten)]
        generator: GeneratorArgs,
    },
    /// Run the whole loop from a TOML config.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
        /// Stop after this stage; continue later with `resume`.
        #[arg(long)]
        stop_after: Option<String>,
    },
    /// Continue a run from its last completed stage.
    Resume {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long)]
        stop_after: Option<String>,
    },
}

/// Candidates known only by id, for files that carry ids alone.
fn candidates_from_ids<'a>(ids: impl IntoIterator<Item = &'a str>) -> Result<Vec<Candidate>> {
    let unique: BTreeSet<&str> = ids.into_iter().collect();
    unique
        .into_iter()
        .map(|id| {
            let (problem, sample, round) =
                parse_candidate_id(id).with_context(|| format!("cannot read problem id from candidate id {id}"))?;
            Ok(Candidate {
                candidate_id: id.to_string(),
                problem_id: problem.to_string(),
                sample_index: sample,
                program: String::new(),
                origin: if round == 0 { Origin::Base } else { Origin::Edited },
                edit_round: round,
                parent_candidate_id: None,
                model_name: String::new(),
                created_at: None,
                failed: false,
            })
        })
        .collect()
}

fn load_corpus(path: &Path) -> Result<Corpus> {
    Corpus::load(path).with_context(|| format!("loading corpus {}", path.display()))
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Ingest {
            format,
            input,
            out,
            split,
            dev_ids,
            skip_invalid,
        } => {
            let problems = match format {
                Format::Humaneval => ingest_humaneval(&input)?,
                Format::Apps => {
                    let split = match split {
                        Split::Train => AppsSplit::Train,
                        Split::Dev => AppsSplit::Dev,
                        Split::Test => AppsSplit::Test,
                    };
                    let options = AppsIngestOptions {
                        dev_ids: dev_ids.as_deref().map(load_split_ids).transpose()?,
                        skip_invalid,
                    };
                    ingest_apps(&input, split, &options)?
                }
            };
            write_corpus(&out, &problems)?;
            eprintln!("wrote {} problems to {}", problems.len(), out.display());
        }
        Command::Stats { input, json } => {
            let corpus = load_corpus(&input)?;
            let stats = corpus_stats(corpus.problems());
            if json {
                println!("{}", serde_json::to_string_pretty(&stats)?);
            } else {
                print!("{}", render_stats_table(&stats));
            }
        }
        Command::Exec {
            corpus,
            candidates,
            tests,
            out,
            time_limit_ms,
            jobs,
            fail_fast,
            interpreter,
            memory_limit_mb,
        } => {
            let corpus = load_corpus(&corpus)?;
            let cands: Vec<Candidate> = read_jsonl(&candidates)?;
            let sandbox = SandboxConfig {
                interpreter_command: interpreter.split_whitespace().map(String::from).collect(),
                time_limit_ms,
                memory_limit_mb,
                ..SandboxConfig::default()
            };
            let tests = match tests {
                Tests::Example => TestSet::Example,
                Tests::Hidden => TestSet::Hidden,
            };
            let recs = exec_candidates(&corpus, &cands, tests, &sandbox, jobs, fail_fast)?;
            write_jsonl(&out, &recs)?;
            eprintln!("wrote {} outcomes to {}", recs.len(), out.display());
        }
        Command::Comment {
            outcomes,
            corpus,
            out,
            candidates,
        } => {
            let corpus = load_corpus(&corpus)?;
            let recs: Vec<OutcomeRecord> = read_jsonl(&outcomes)?;
            let cands = match candidates {
                Some(path) => read_jsonl(&path)?,
                None => candidates_from_ids(recs.iter().map(|r| r.candidate_id.as_str()))?,
            };
            let comments = comment_outcomes(&corpus, &cands, &recs)?;
            write_jsonl(&out, &comments)?;
            eprintln!("wrote {} comments to {}", comments.len(), out.display());
        }
        Command::Generate {
            corpus,
            backend,
            k,
            out,
            jobs,
            generator,
        } => {
            let corpus = load_corpus(&corpus)?;
            let config = generator.config(backend, k);
            let limiter = Arc::new(RateLimiter::new(config.rate_limit_per_minute));
            let counting = CountingBackend::new(config.build_backend(limiter)?);
            let cands = generate_all(corpus.problems(), &config, &counting, jobs)?;
            write_jsonl(&out, &cands)?;
            let failed = cands.iter().filter(|c| c.failed).count();
            eprintln!(
                "wrote {} candidates to {} ({} calls, {failed} failed)",
                cands.len(),
                out.display(),
                counting.calls()
            );
        }
        Command::Edit {
            cands,
            comments,
            corpus,
            backend,
            out,
            outcomes,
            gating,
            mock_rules,
            editor_endpoint,
            editor_model,
            generator_backend,
            input_token_budget,
            output_token_budget,
            jobs,
            generator,
        } => {
            let corpus = load_corpus(&corpus)?;
            let cands: Vec<Candidate> = read_jsonl(&cands)?;
            let comments: Vec<CommentRecord> = read_jsonl(&comments)?;
            let outcomes: Vec<OutcomeRecord> = match outcomes {
                Some(path) => read_jsonl(&path)?,
                None => Vec::new(),
            };
            let gating = match gating {
                Gating::Always => EditGating::Always,
                Gating::OnlyFailingExample => {
                    if outcomes.is_empty() {
                        bail!("--gating only-failing-example needs --outcomes");
                    }
                    EditGating::OnlyFailingExample
                }
            };
            let config = EditorConfig {
                backend: match backend {
                    EditBackend::Http => EditorBackendKind::HttpSeq2seq,
                    EditBackend::Icl => EditorBackendKind::IclViaGenerator,
                    EditBackend::Mock => EditorBackendKind::Mock,
                },
                endpoint_url: editor_endpoint,
                model_name: editor_model,
                input_token_budget,
                output_token_budget,
                mock_rules,
                ..EditorConfig::mock(None)
            };
            let gen_config = generator.config(generator_backend, 1);
            let limiter = Arc::new(RateLimiter::new(gen_config.rate_limit_per_minute));
            let gen_backend = match config.backend {
                EditorBackendKind::IclViaGenerator => Some((
                    gen_config.build_backend(limiter.clone())?,
                    gen_config.model_name.clone(),
                )),
                _ => None,
            };
            let editor = Editor::new(&config, gen_backend, limiter)?;
            let (children, summary) = edit_candidates(&corpus, &cands, &outcomes, &comments, &editor, gating, jobs)?;
            write_jsonl(&out, &children)?;
            eprintln!(
                "wrote {} edited candidates to {}: {}",
                children.len(),
                out.display(),
                serde_json::to_string(&summary)?
            );
        }
        Command::Report {
            base_outcomes,
            edited_outcomes,
            corpus,
            k,
            out,
            format,
            estimator,
            comments,
        } => {
            let corpus = load_corpus(&corpus)?;
            let base_out: Vec<OutcomeRecord> = read_jsonl(&base_outcomes)?;
            let base = candidates_from_ids(base_out.iter().map(|r| r.candidate_id.as_str()))?;
            let edited = match &edited_outcomes {
                Some(path) => {
                    let recs: Vec<OutcomeRecord> = read_jsonl(path)?;
                    let cands = candidates_from_ids(recs.iter().map(|r| r.candidate_id.as_str()))?;
                    Some((cands, recs))
                }
                None => None,
            };
            let matrix = build_matrix(
                &corpus,
                (&base, &base_out),
                edited.as_ref().map(|(c, r)| (c.as_slice(), r.as_slice())),
            )?;
            let classes: Vec<String> = match comments {
                Some(path) => read_jsonl::<CommentRecord>(&path)?
                    .into_iter()
                    .map(|c| c.comment_class)
                    .collect(),
                None => Vec::new(),
            };
            let estimator = match estimator {
                EstimatorArg::Prefix => Estimator::Prefix,
                EstimatorArg::Unbiased => Estimator::Unbiased,
            };
            let report = evaluate(&matrix, &k, estimator, &classes)?;
            if let Some(path) = &out {
                write_json_pretty(path, &report)?;
            }
            match format {
                ReportFormat::Table => print!("{}", render_report_table(&report)),
                ReportFormat::Json if out.is_none() => println!("{}", serde_json::to_string_pretty(&report)?),
                ReportFormat::Json => {}
            }
        }
        Command::BuildEditorDataset {
            corpus,
            backend,
            k,
            out,
            append,
            allow_mixed_models,
            summary,
            time_limit_ms,
            jobs,
            generator,
        } => {
            let corpus = load_corpus(&corpus)?;
            let config = generator.config(backend, k);
            let limiter = Arc::new(RateLimiter::new(config.rate_limit_per_minute));
            let backend = config.build_backend(limiter)?;
            let sandbox = SandboxConfig {
                time_limit_ms,
                ..SandboxConfig::default()
            };
            let build = build_dataset(corpus.problems(), &config, backend.as_ref(), &sandbox, jobs)?;
            let mut examples: Vec<EditorExample> = if append && out.exists() {
                read_jsonl(&out)?
            } else {
                Vec::new()
            };
            examples.extend(build.examples);
            check_single_model(&examples, allow_mixed_models)?;
            write_jsonl(&out, &examples)?;
            if let Some(path) = &summary {
                write_json_pretty(path, &build.summary)?;
            }
            eprintln!(
                "wrote {} examples to {} ({} problems dropped for lack of targets, {} without an example test)",
                build.summary.examples,
                out.display(),
                build.summary.dropped_empty_pool,
                build.summary.skipped_no_example
            );
            for share in &build.summary.comment_distribution {
                eprintln!("{:<32}{:>7}{:>9.2}%", share.class, share.count, share.percent);
            }
        }
        Command::Pipeline { config, stop_after } => {
            let config = RunConfig::load(&config)?;
            finish(run_until(&config, stop_after.as_deref())?, &config.output_dir);
        }
        Command::Resume { dir, stop_after } => {
            finish(resume_until(&dir, stop_after.as_deref())?, &dir);
        }
    }
    Ok(())
}

fn finish(status: RunStatus, dir: &Path) {
    match status {
        RunStatus::Complete(report) => {
            print!("{}", render_report_table(&report));
            eprintln!("artifacts in {}", dir.display());
        }
        RunStatus::Stopped(stage) => {
            eprintln!(
                "stopped after {stage}; continue with `selfedit resume --dir {}`",
                dir.display()
            );
        }
    }
}
