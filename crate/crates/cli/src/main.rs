use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};

use ragtuner::components::builtin_registry;
use ragtuner::dem::DemStore;
use ragtuner::dsl::{apply_assignment, canonical_form, default_assignment, parse_spec, validate_against_registry, PipelineSpec};
use ragtuner::eval::{load_corpus, load_dataset, score_run, EvalError, MetricReport, QaExample};
use ragtuner::runtime::{build_pipeline, run_pipeline, ComponentRegistry, Document, QueryRecord, RunResult};
use ragtuner::tuner::{
    best_record, load_trace, running_best, tune_with_observer, warm_start_load, PipelineEvaluator, SearchSpace,
    TraceError, TraceWriter, TrialRecord, TuneOptions,
};

#[derive(Parser)]
#[command(name = "ragtuner", version, about = "Declarative RAG pipelines with Bayesian hyper-parameter tuning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a spec against the component registry.
    Validate {
        #[arg(short = 'c', long = "config")]
        spec: PathBuf,
    },
    /// Run a pipeline over a corpus and score it on a dataset.
    Run {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(short = 'o', long = "out")]
        out: PathBuf,
        /// Recall cutoff; defaults to the spec's tuner.k.
        #[arg(short = 'k')]
        k: Option<usize>,
    },
    /// Score an existing run file.
    Eval {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(short = 'k', default_value_t = 5)]
        k: usize,
        /// Weight of mean Recall@k in the objective; F1 gets the rest.
        #[arg(long, default_value_t = 0.5)]
        recall_weight: f64,
        #[arg(short = 'o', long = "out")]
        out: Option<PathBuf>,
    },
    /// Search the spec's tunable parameters.
    Tune {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        warm_start: Option<PathBuf>,
        /// Where to write the best concrete spec; defaults to TRACE with a
        /// `.best.json` extension.
        #[arg(long)]
        best_spec: Option<PathBuf>,
        /// Record wall-clock timestamps in the trace.
        #[arg(long)]
        timestamps: bool,
    },
    /// Re-run the best (or a chosen) trial of a trace.
    Replay {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        trial: Option<usize>,
        #[arg(short = 'o', long = "out")]
        out: Option<PathBuf>,
    },
    /// Print the best-so-far curve of a trace as TSV.
    Report {
        #[arg(long)]
        trace: PathBuf,
    },
}

#[derive(Args)]
struct Inputs {
    #[arg(short = 'c', long = "config")]
    spec: PathBuf,
    /// Corpus directory or JSONL file; defaults to the spec's tuner.corpus,
    /// resolved against the spec's directory.
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    data: PathBuf,
}

/// A failure with its exit code: 1 for domain errors, 2 for usage and I/O.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn domain(error: impl Into<anyhow::Error>) -> Failure {
    Failure { code: 1, error: error.into() }
}

fn usage(error: impl Into<anyhow::Error>) -> Failure {
    Failure { code: 2, error: error.into() }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Validate { spec } => cmd_validate(&spec),
        Command::Run { inputs, out, k } => cmd_run(&inputs, &out, k),
        Command::Eval { run, data, k, recall_weight, out } => cmd_eval(&run, &data, k, recall_weight, out.as_deref()),
        Command::Tune { inputs, budget, epsilon, seed, trace, warm_start, best_spec, timestamps } => {
            let flags = TuneFlags { budget, epsilon, seed, warm_start, best_spec, timestamps };
            cmd_tune(&inputs, &trace, &flags)
        }
        Command::Replay { inputs, trace, trial, out } => cmd_replay(&inputs, &trace, trial, out.as_deref()),
        Command::Report { trace } => cmd_report(&trace),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn read_spec(path: &Path) -> Result<PipelineSpec, Failure> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))
        .map_err(usage)?;
    parse_spec(&text).map_err(|e| domain(anyhow!("{}: {e}", path.display())))
}

/// Parses and registry-checks a spec, failing with every diagnostic.
fn load_checked_spec(path: &Path, registry: &ComponentRegistry) -> Result<PipelineSpec, Failure> {
    let spec = read_spec(path)?;
    let diagnostics = validate_against_registry(&spec, registry);
    if !diagnostics.is_empty() {
        let lines: Vec<String> = diagnostics.iter().map(|d| d.to_string()).collect();
        return Err(domain(anyhow!("{}:\n{}", path.display(), lines.join("\n"))));
    }
    Ok(spec)
}

fn eval_failure(e: EvalError) -> Failure {
    match e {
        EvalError::Io { .. } => usage(e),
        other => domain(other),
    }
}

fn trace_failure(e: TraceError) -> Failure {
    match e {
        TraceError::Io { .. } => usage(e),
        other => domain(other),
    }
}

fn load_inputs(inputs: &Inputs, spec: &PipelineSpec) -> Result<(Vec<Document>, Vec<QaExample>), Failure> {
    let corpus_path = match (&inputs.corpus, &spec.tuner.corpus) {
        (Some(p), _) => p.clone(),
        (None, Some(rel)) => inputs.spec.parent().unwrap_or(Path::new(".")).join(rel),
        (None, None) => return Err(usage(anyhow!("no corpus: pass --corpus or set tuner.corpus in the spec"))),
    };
    let corpus = load_corpus(&corpus_path).map_err(eval_failure)?;
    let dataset = load_dataset(&inputs.data).map_err(eval_failure)?;
    Ok((corpus, dataset))
}

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
fn write_atomic(path: &Path, bytes: &[u8]) -> Outcome {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let write = || -> std::io::Result<()> {
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        tmp.write_all(bytes)?;
        tmp.as_file().sync_all()?;
        tmp.persist(path).map_err(|e| e.error)?;
        Ok(())
    };
    write().with_context(|| format!("cannot write {}", path.display())).map_err(usage)
}

/// Builds, runs and scores one concrete spec.
fn execute(
    registry: &ComponentRegistry,
    spec: &PipelineSpec,
    corpus: &[Document],
    dataset: &[QaExample],
    k: usize,
) -> Result<(RunResult, MetricReport), Failure> {
    let mut pipeline = build_pipeline(registry, spec).map_err(domain)?;
    let queries: Vec<_> = dataset.iter().map(QaExample::query).collect();
    let mut store = DemStore::new();
    let run = run_pipeline(&mut pipeline, corpus, &queries, &mut store).map_err(domain)?;
    let report = score_run(&run, dataset, k, spec.tuner.weights).map_err(eval_failure)?;
    Ok((run, report))
}

fn print_aggregates(report: &MetricReport) {
    println!(
        "recall@{} {:.6}\tf1 {:.6}\tobjective {:.6}",
        report.k, report.mean_recall_at_k, report.mean_f1, report.objective
    );
}

fn cmd_validate(path: &Path) -> Outcome {
    let spec = match std::fs::read_to_string(path) {
        Ok(text) => parse_spec(&text),
        Err(e) => return Err(usage(anyhow!("cannot read {}: {e}", path.display()))),
    };
    let diagnostics: Vec<String> = match spec {
        Ok(spec) => validate_against_registry(&spec, &builtin_registry()).iter().map(|d| d.to_string()).collect(),
        Err(e) => vec![match e.pointer() {
            "" => format!("(document): {e}"),
            _ => e.to_string(),
        }],
    };
    for d in &diagnostics {
        println!("{d}");
    }
    if diagnostics.is_empty() {
        Ok(())
    } else {
        Err(domain(anyhow!("{} diagnostic(s) in {}", diagnostics.len(), path.display())))
    }
}

fn cmd_run(inputs: &Inputs, out: &Path, k: Option<usize>) -> Outcome {
    let registry = builtin_registry();
    let mut spec = load_checked_spec(&inputs.spec, &registry)?;
    if !spec.is_concrete() {
        eprintln!("notice: {} tunable(s) set to their defaults", spec.tunables.len());
        spec = apply_assignment(&spec, &default_assignment(&spec)).map_err(domain)?;
    }
    let (corpus, dataset) = load_inputs(inputs, &spec)?;
    let k = k.unwrap_or(spec.tuner.k);
    if k == 0 {
        return Err(usage(anyhow!("-k must be at least 1")));
    }
    let (run, report) = execute(&registry, &spec, &corpus, &dataset, k)?;

    std::fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display())).map_err(usage)?;
    let mut jsonl = Vec::new();
    run.export_jsonl(&mut jsonl).map_err(usage)?;
    write_atomic(&out.join("run.jsonl"), &jsonl)?;
    write_atomic(&out.join("report.json"), report.to_json().as_bytes())?;
    let log = serde_json::json!({
        "spec": spec.name,
        "documents": corpus.len(),
        "queries": dataset.len(),
        "artifacts": run.artifacts,
        "index_timings_ms": run.index_timings_ms,
    });
    let mut log_text = serde_json::to_string_pretty(&log).expect("run log serializes");
    log_text.push('\n');
    write_atomic(&out.join("run_log.json"), log_text.as_bytes())?;
    for (key, value) in &run.artifacts {
        eprintln!("{key}: {value}");
    }
    print_aggregates(&report);
    Ok(())
}

fn read_run(path: &Path) -> Result<RunResult, Failure> {
    let file = File::open(path).with_context(|| format!("cannot read {}", path.display())).map_err(usage)?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.with_context(|| format!("cannot read {}", path.display())).map_err(usage)?;
        if line.trim().is_empty() {
            continue;
        }
        let record: QueryRecord = serde_json::from_str(&line)
            .map_err(|e| domain(anyhow!("{}: line {}: {e}", path.display(), i + 1)))?;
        records.push(record);
    }
    Ok(RunResult { records, ..RunResult::default() })
}

fn cmd_eval(run: &Path, data: &Path, k: usize, recall_weight: f64, out: Option<&Path>) -> Outcome {
    if k == 0 || !(0.0..=1.0).contains(&recall_weight) {
        return Err(usage(anyhow!("-k must be positive and --recall-weight must lie in [0, 1]")));
    }
    let run = read_run(run)?;
    let dataset = load_dataset(data).map_err(eval_failure)?;
    let weights = ragtuner::dsl::ObjectiveWeights { recall: recall_weight, f1: 1.0 - recall_weight };
    let report = score_run(&run, &dataset, k, weights).map_err(eval_failure)?;
    match out {
        Some(path) => write_atomic(path, report.to_json().as_bytes())?,
        None => print!("{}", report.to_json()),
    }
    print_aggregates_to_stderr(&report);
    Ok(())
}

fn print_aggregates_to_stderr(report: &MetricReport) {
    eprintln!(
        "recall@{} {:.6}\tf1 {:.6}\tobjective {:.6}",
        report.k, report.mean_recall_at_k, report.mean_f1, report.objective
    );
}

struct TuneFlags {
    budget: Option<usize>,
    epsilon: Option<f64>,
    seed: Option<u64>,
    warm_start: Option<PathBuf>,
    best_spec: Option<PathBuf>,
    timestamps: bool,
}

fn cmd_tune(inputs: &Inputs, trace_path: &Path, flags: &TuneFlags) -> Outcome {
    let registry = builtin_registry();
    let spec = load_checked_spec(&inputs.spec, &registry)?;
    if spec.tunables.is_empty() {
        return Err(domain(anyhow!("{} declares no tunable parameters", inputs.spec.display())));
    }
    let mut settings = spec.tuner.clone();
    if let Some(b) = flags.budget {
        if b == 0 {
            return Err(usage(anyhow!("--budget must be at least 1")));
        }
        settings.budget = b;
    }
    if let Some(e) = flags.epsilon {
        if e.is_nan() || e < 0.0 {
            return Err(usage(anyhow!("--epsilon must be nonnegative")));
        }
        settings.epsilon = e;
    }
    if let Some(s) = flags.seed {
        settings.seed = s;
    }
    let (corpus, dataset) = load_inputs(inputs, &spec)?;

    let space = SearchSpace::new(&spec.tunables);
    let warm_start = match &flags.warm_start {
        Some(path) => {
            let warm = warm_start_load(path, &space).map_err(trace_failure)?;
            eprintln!("warm start: {} record(s) loaded, {} skipped", warm.records.len(), warm.skipped);
            warm.records
        }
        None => Vec::new(),
    };
    let options = TuneOptions { settings, warm_start, timestamps: flags.timestamps };
    let mut evaluator = PipelineEvaluator {
        registry: &registry,
        corpus: &corpus,
        dataset: &dataset,
        k: options.settings.k,
        weights: options.settings.weights,
    };

    let mut writer = TraceWriter::create(trace_path).map_err(trace_failure)?;
    let mut best = f64::NEG_INFINITY;
    let mut progress = |r: &TrialRecord| {
        let phase = serde_json::to_value(r.phase).expect("phase serializes");
        let phase = phase.as_str().unwrap_or("?");
        match r.objective {
            Some(y) => {
                best = best.max(y);
                eprintln!("trial {:>3}  {:<8}  objective {y:.6}  best {best:.6}", r.trial, phase);
            }
            None => eprintln!(
                "trial {:>3}  {:<8}  failed: {}  best {best:.6}",
                r.trial,
                phase,
                r.error.as_deref().unwrap_or("unknown error")
            ),
        }
    };
    let outcome =
        tune_with_observer(&spec, &mut evaluator, &options, Some(&mut writer), &mut progress).map_err(domain)?;

    let Some(best) = outcome.best else {
        return Err(domain(anyhow!("all {} trials failed", outcome.trials.len())));
    };
    let concrete = apply_assignment(&spec, &best.assignment).map_err(domain)?;
    let best_path = flags.best_spec.clone().unwrap_or_else(|| trace_path.with_extension("best.json"));
    write_atomic(&best_path, canonical_form(&concrete).as_bytes())?;
    eprintln!(
        "stopped after {} trials ({:?}); best spec written to {}",
        outcome.trials.len(),
        outcome.stop,
        best_path.display()
    );
    println!("best trial {}  objective {:.6}  {}", best.trial, best.objective.unwrap_or(f64::NAN), best.assignment);
    Ok(())
}

fn cmd_replay(inputs: &Inputs, trace_path: &Path, trial: Option<usize>, out: Option<&Path>) -> Outcome {
    let registry = builtin_registry();
    let spec = load_checked_spec(&inputs.spec, &registry)?;
    let records = load_trace(trace_path).map_err(trace_failure)?;
    let record = match trial {
        Some(n) => records
            .iter()
            .find(|r| r.trial == n)
            .ok_or_else(|| domain(anyhow!("{} has no trial {n}", trace_path.display())))?,
        None => best_record(&records)
            .ok_or_else(|| domain(anyhow!("{} has no successful trial", trace_path.display())))?,
    };
    let space = SearchSpace::new(&spec.tunables);
    if let Err(e) = space.check(&record.assignment) {
        return Err(domain(anyhow!(
            "IncompatibleTrace: trial {} of {} does not fit {}: {e}",
            record.trial,
            trace_path.display(),
            inputs.spec.display()
        )));
    }
    let concrete = apply_assignment(&spec, &record.assignment).map_err(domain)?;
    let (corpus, dataset) = load_inputs(inputs, &spec)?;
    let (_, report) = execute(&registry, &concrete, &corpus, &dataset, spec.tuner.k)?;
    match out {
        Some(path) => write_atomic(path, report.to_json().as_bytes())?,
        None => print!("{}", report.to_json()),
    }
    match record.objective {
        Some(recorded) => eprintln!(
            "trial {}: recorded objective {recorded:.12}, replayed {:.12} (difference {:.3e})",
            record.trial,
            report.objective,
            (report.objective - recorded).abs()
        ),
        None => eprintln!("trial {} failed when recorded; replayed objective {:.12}", record.trial, report.objective),
    }
    Ok(())
}

fn cmd_report(trace_path: &Path) -> Outcome {
    let records = load_trace(trace_path).map_err(trace_failure)?;
    let mut text = String::from("trial\tphase\tobjective\tbest\n");
    for (r, best) in records.iter().zip(running_best(&records)) {
        let phase = serde_json::to_value(r.phase).expect("phase serializes");
        let fmt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |y| format!("{y:.6}"));
        text.push_str(&format!("{}\t{}\t{}\t{}\n", r.trial, phase.as_str().unwrap_or("?"), fmt(r.objective), fmt(best)));
    }
    std::io::stdout().write_all(text.as_bytes()).map_err(usage)
}
