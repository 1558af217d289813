//! Bayesian optimization of a spec's tunable parameters.
//!
//! The loop draws random points until enough observations exist, then fits a
//! Gaussian process and maximizes expected improvement. Every trial is
//! appended to a JSONL trace as soon as it finishes, and a previous trace can
//! seed a new run.

mod acquisition;
mod gp;
mod space;
mod trace;

use std::collections::BTreeMap;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use acquisition::{expected_improvement, halton, suggest, SuggestConfig};
pub use gp::{se_kernel, GpError, GpSurrogate, JITTER, LENGTH_SCALES, SIGNAL_SDS};
pub use space::{Dimension, SearchSpace, SpaceError};
pub use trace::{load_trace, read_trace, warm_start_load, TraceError, TraceWriter, TrialPhase, TrialRecord, WarmStart};

use crate::dem::DemStore;
use crate::dsl::{apply_assignment, ObjectiveWeights, PipelineSpec, TunerSettings};
use crate::eval::{score_run, QaExample};
use crate::runtime::{build_pipeline, run_pipeline, ComponentRegistry, Document};

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub objective: f64,
    pub metrics: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{0}")]
pub struct EvaluationError(pub String);

/// Scores one concrete spec. `seed` is the trial's seed, for evaluators
/// with randomness of their own.
pub trait Evaluator {
    fn evaluate(&mut self, spec: &PipelineSpec, seed: u64) -> Result<Evaluation, EvaluationError>;
}

/// Builds and runs the pipeline over a corpus and scores it on a dataset.
pub struct PipelineEvaluator<'a> {
    pub registry: &'a ComponentRegistry,
    pub corpus: &'a [Document],
    pub dataset: &'a [QaExample],
    pub k: usize,
    pub weights: ObjectiveWeights,
}

impl Evaluator for PipelineEvaluator<'_> {
    fn evaluate(&mut self, spec: &PipelineSpec, _seed: u64) -> Result<Evaluation, EvaluationError> {
        let err = |e: &dyn std::fmt::Display| EvaluationError(e.to_string());
        let mut pipeline = build_pipeline(self.registry, spec).map_err(|e| err(&e))?;
        let queries: Vec<_> = self.dataset.iter().map(QaExample::query).collect();
        let mut store = DemStore::new();
        let run = run_pipeline(&mut pipeline, self.corpus, &queries, &mut store).map_err(|e| err(&e))?;
        let report = score_run(&run, self.dataset, self.k, self.weights).map_err(|e| err(&e))?;
        Ok(Evaluation {
            objective: report.objective,
            metrics: BTreeMap::from([
                ("mean_recall_at_k".to_string(), report.mean_recall_at_k),
                ("mean_f1".to_string(), report.mean_f1),
            ]),
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TuneError {
    #[error("the spec declares no tunable parameters")]
    NoTunables,
    #[error("budget must be at least 1")]
    ZeroBudget,
    #[error(transparent)]
    Trace(#[from] TraceError),
}

#[derive(Debug, Clone, Default)]
pub struct TuneOptions {
    pub settings: TunerSettings,
    /// Records from an earlier trace; they are rewritten to the new trace
    /// first and count toward the budget.
    pub warm_start: Vec<TrialRecord>,
    /// Stamp records with wall-clock time. Off by default so traces are
    /// reproducible byte for byte.
    pub timestamps: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Budget,
    Converged,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneOutcome {
    pub best: Option<TrialRecord>,
    pub trials: Vec<TrialRecord>,
    pub stop: StopReason,
    pub n_init: usize,
}

/// Seed of trial `trial` under master seed `seed`.
pub fn trial_seed(seed: u64, trial: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng.next_u64()
}

/// The successful record with the highest objective; the earliest on ties.
pub fn best_record(records: &[TrialRecord]) -> Option<&TrialRecord> {
    let mut best: Option<&TrialRecord> = None;
    for r in records {
        if let Some(y) = r.objective {
            if best.is_none_or(|b| y > b.objective.expect("successful")) {
                best = Some(r);
            }
        }
    }
    best
}

/// Best objective seen up to and including each record.
pub fn running_best(records: &[TrialRecord]) -> Vec<Option<f64>> {
    let mut best: Option<f64> = None;
    records
        .iter()
        .map(|r| {
            if let Some(y) = r.objective {
                best = Some(best.map_or(y, |b| b.max(y)));
            }
            best
        })
        .collect()
}

fn max_objective(records: &[TrialRecord]) -> Option<f64> {
    records.iter().filter_map(|r| r.objective).reduce(f64::max)
}

/// True once at least `n_init + patience` trials exist and the best
/// objective rose by less than `epsilon` over the last `patience` trials.
pub fn converged(records: &[TrialRecord], n_init: usize, patience: usize, epsilon: f64) -> bool {
    let n = records.len();
    if n < n_init + patience {
        return false;
    }
    match (max_objective(records), max_objective(&records[..n - patience])) {
        (Some(now), Some(before)) => now - before < epsilon,
        _ => false,
    }
}

fn now_seconds() -> f64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

/// Runs the tuning loop until the budget is spent or the epsilon rule
/// fires. Failed evaluations are recorded and never returned as best.
pub fn tune<E: Evaluator + ?Sized>(
    spec: &PipelineSpec,
    evaluator: &mut E,
    options: &TuneOptions,
    trace: Option<&mut TraceWriter>,
) -> Result<TuneOutcome, TuneError> {
    tune_with_observer(spec, evaluator, options, trace, &mut |_| {})
}

/// [`tune`], calling `observer` with every record right after it is traced.
pub fn tune_with_observer<E: Evaluator + ?Sized>(
    spec: &PipelineSpec,
    evaluator: &mut E,
    options: &TuneOptions,
    mut trace: Option<&mut TraceWriter>,
    observer: &mut dyn FnMut(&TrialRecord),
) -> Result<TuneOutcome, TuneError> {
    let s = &options.settings;
    if spec.tunables.is_empty() {
        return Err(TuneError::NoTunables);
    }
    if s.budget == 0 {
        return Err(TuneError::ZeroBudget);
    }
    let space = SearchSpace::new(&spec.tunables);
    let n_init = s.n_init.unwrap_or_else(|| SuggestConfig::default_n_init(space.len()));
    let cfg = SuggestConfig {
        n_init,
        xi: s.xi,
        n_candidates: s.n_candidates,
        n_local: s.n_local,
        local_std: s.local_std,
    };

    let mut history: Vec<TrialRecord> = Vec::new();
    for (i, r) in options.warm_start.iter().enumerate() {
        let mut r = r.clone();
        r.trial = i;
        r.phase = TrialPhase::Warm;
        if let Some(t) = trace.as_deref_mut() {
            t.append(&r)?;
        }
        observer(&r);
        history.push(r);
    }

    let stop = loop {
        if history.len() >= s.budget {
            break StopReason::Budget;
        }
        let trial = history.len();
        let seed = trial_seed(s.seed, trial);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (assignment, phase) = suggest(&history, &space, &mut rng, &cfg);
        let outcome = apply_assignment(spec, &assignment)
            .map_err(|e| EvaluationError(e.to_string()))
            .and_then(|concrete| evaluator.evaluate(&concrete, seed));
        let mut record = match outcome {
            Ok(ev) => {
                log::info!("trial {trial} [{phase:?}] {assignment} -> {:.6}", ev.objective);
                TrialRecord::success(trial, phase, assignment, ev.objective, ev.metrics, seed)
            }
            Err(e) => {
                log::warn!("trial {trial} [{phase:?}] {assignment} failed: {e}");
                TrialRecord::failure(trial, phase, assignment, e.0, seed)
            }
        };
        if options.timestamps {
            record.timestamp = Some(now_seconds());
        }
        if let Some(t) = trace.as_deref_mut() {
            t.append(&record)?;
        }
        observer(&record);
        history.push(record);
        if converged(&history, n_init, s.patience, s.epsilon) {
            break StopReason::Converged;
        }
    };

    Ok(TuneOutcome { best: best_record(&history).cloned(), trials: history, stop, n_init })
}
