//! Datasets, corpora and the retrieval and answer metrics.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::BufRead;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dsl::ObjectiveWeights;
use crate::runtime::{Document, Query, RunResult};
use crate::text::answer_tokens;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaExample {
    pub qid: String,
    pub question: String,
    #[serde(rename = "answer")]
    pub gold_answer: String,
    #[serde(rename = "gold_passages")]
    pub gold_passage_keys: BTreeSet<String>,
}

impl QaExample {
    pub fn query(&self) -> Query {
        Query { qid: self.qid.clone(), question: self.question.clone() }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("duplicate qid `{0}`")]
    DuplicateQid(String),
    #[error("duplicate doc_id `{0}`")]
    DuplicateDocId(String),
    #[error("gold passage set is empty")]
    EmptyGold,
    #[error("run has no record for qid `{0}`")]
    MissingQuery(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> EvalError + '_ {
    move |source| EvalError::Io { path: path.to_path_buf(), source }
}

/// Reads JSONL examples in file order. Blank lines are skipped; line
/// numbers are 1-based.
pub fn read_dataset<R: BufRead>(input: R) -> Result<Vec<QaExample>, EvalError> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, line) in input.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| EvalError::Parse { line: line_no, message: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        let ex: QaExample = serde_json::from_str(&line)
            .map_err(|e| EvalError::Parse { line: line_no, message: e.to_string() })?;
        if !seen.insert(ex.qid.clone()) {
            return Err(EvalError::DuplicateQid(ex.qid));
        }
        out.push(ex);
    }
    Ok(out)
}

pub fn load_dataset(path: &Path) -> Result<Vec<QaExample>, EvalError> {
    let file = std::fs::File::open(path).map_err(io_error(path))?;
    read_dataset(std::io::BufReader::new(file))
}

/// Loads a corpus from either a directory of `.txt` files (the file stem is
/// the doc_id, files sorted by name) or a JSONL file of
/// `{"doc_id": …, "text": …}` records.
pub fn load_corpus(path: &Path) -> Result<Vec<Document>, EvalError> {
    let docs = if path.is_dir() {
        let mut files: Vec<PathBuf> = std::fs::read_dir(path)
            .map_err(io_error(path))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "txt"))
            .collect();
        files.sort();
        let mut docs = Vec::with_capacity(files.len());
        for f in files {
            let text = std::fs::read_to_string(&f).map_err(io_error(&f))?;
            let doc_id = f.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            docs.push(Document { doc_id, text });
        }
        docs
    } else {
        let file = std::fs::File::open(path).map_err(io_error(path))?;
        let mut docs = Vec::new();
        for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line.map_err(io_error(path))?;
            if line.trim().is_empty() {
                continue;
            }
            let doc: Document = serde_json::from_str(&line)
                .map_err(|e| EvalError::Parse { line: i + 1, message: e.to_string() })?;
            docs.push(doc);
        }
        docs
    };
    let mut seen = BTreeSet::new();
    for d in &docs {
        if !seen.insert(d.doc_id.as_str()) {
            return Err(EvalError::DuplicateDocId(d.doc_id.clone()));
        }
    }
    Ok(docs)
}

/// Passage key of a gold or retrieved key: `doc#chunk` collapses to `doc`.
pub fn passage_key(key: &str) -> &str {
    key.split_once('#').map_or(key, |(doc, _)| doc)
}

/// Fraction of gold passages among the first `k` distinct retrieved
/// passages.
pub fn recall_at_k(retrieved: &[String], gold: &BTreeSet<String>, k: usize) -> Result<f64, EvalError> {
    let gold: BTreeSet<&str> = gold.iter().map(|g| passage_key(g)).collect();
    if gold.is_empty() {
        return Err(EvalError::EmptyGold);
    }
    let mut top: Vec<&str> = Vec::with_capacity(k);
    for r in retrieved {
        if top.len() == k {
            break;
        }
        let key = passage_key(r);
        if !top.contains(&key) {
            top.push(key);
        }
    }
    let hits = top.iter().filter(|t| gold.contains(*t)).count();
    Ok(hits as f64 / gold.len() as f64)
}

/// Token-multiset F1 after answer normalization.
pub fn f1_answer(pred: &str, gold: &str) -> f64 {
    let (p, g) = (answer_tokens(pred), answer_tokens(gold));
    if p.is_empty() || g.is_empty() {
        return if p.is_empty() && g.is_empty() { 1.0 } else { 0.0 };
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &g {
        *counts.entry(t).or_insert(0) += 1;
    }
    let mut overlap = 0usize;
    for t in &p {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    if overlap == 0 {
        return 0.0;
    }
    let precision = overlap as f64 / p.len() as f64;
    let recall = overlap as f64 / g.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryMetrics {
    pub qid: String,
    pub recall_at_k: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub k: usize,
    pub weight_recall: f64,
    pub weight_f1: f64,
    pub per_query: Vec<QueryMetrics>,
    pub mean_recall_at_k: f64,
    pub mean_f1: f64,
    pub objective: f64,
}

impl MetricReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Scores every dataset example against its run record. Means are summed in
/// qid order, so the report's aggregates do not depend on dataset order.
pub fn score_run(
    run: &RunResult,
    dataset: &[QaExample],
    k: usize,
    weights: ObjectiveWeights,
) -> Result<MetricReport, EvalError> {
    let records: HashMap<&str, _> = run.records.iter().map(|r| (r.qid.as_str(), r)).collect();
    let mut per_query = Vec::with_capacity(dataset.len());
    for ex in dataset {
        let rec = records
            .get(ex.qid.as_str())
            .ok_or_else(|| EvalError::MissingQuery(ex.qid.clone()))?;
        per_query.push(QueryMetrics {
            qid: ex.qid.clone(),
            recall_at_k: recall_at_k(&rec.passages, &ex.gold_passage_keys, k)?,
            f1: f1_answer(&rec.answer, &ex.gold_answer),
        });
    }
    let sorted: BTreeMap<&str, &QueryMetrics> = per_query.iter().map(|m| (m.qid.as_str(), m)).collect();
    let n = sorted.len().max(1) as f64;
    let mean_recall_at_k = sorted.values().map(|m| m.recall_at_k).sum::<f64>() / n;
    let mean_f1 = sorted.values().map(|m| m.f1).sum::<f64>() / n;
    Ok(MetricReport {
        k,
        weight_recall: weights.recall,
        weight_f1: weights.f1,
        per_query,
        mean_recall_at_k,
        mean_f1,
        objective: weights.recall * mean_recall_at_k + weights.f1 * mean_f1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runtime::QueryRecord;
    use proptest::prelude::*;

    fn keys(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn gold(v: &[&str]) -> BTreeSet<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn recall_examples() {
        assert_eq!(recall_at_k(&keys(&["a", "b", "c"]), &gold(&["a", "d"]), 5).unwrap(), 0.5);
        assert_eq!(recall_at_k(&keys(&["x", "a", "d"]), &gold(&["a", "d"]), 5).unwrap(), 1.0);
        assert_eq!(recall_at_k(&keys(&["x", "y"]), &gold(&["a"]), 5).unwrap(), 0.0);
        assert!(matches!(recall_at_k(&keys(&["a"]), &gold(&[]), 5), Err(EvalError::EmptyGold)));
    }

    #[test]
    fn recall_counts_passages_not_chunks() {
        // three chunks of one doc occupy a single slot
        let r = keys(&["a#0", "a#1", "a#2", "b#0"]);
        assert_eq!(recall_at_k(&r, &gold(&["a", "b"]), 2).unwrap(), 1.0);
        assert_eq!(recall_at_k(&r, &gold(&["a#3"]), 1).unwrap(), 1.0);
    }

    #[test]
    fn f1_examples() {
        assert_eq!(f1_answer("The Cat", "cat"), 1.0);
        assert_eq!(f1_answer("x b", "b c"), 0.5);
        // "a" is an article and is dropped: pred {b}, gold {b, c}
        assert!((f1_answer("a b", "b c") - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(f1_answer("cat", "dog"), 0.0);
        assert_eq!(f1_answer("", ""), 1.0);
        assert_eq!(f1_answer("the", "cat"), 0.0);
        // multiset: one "x" of two overlaps, p = 1/2, r = 1
        assert!((f1_answer("x y", "x") - 2.0 / 3.0).abs() < 1e-12);
        assert!((f1_answer("x x", "x y") - 0.5).abs() < 1e-12);
    }

    fn example(qid: &str, answer: &str, gold_docs: &[&str]) -> QaExample {
        QaExample { qid: qid.into(), question: String::new(), gold_answer: answer.into(), gold_passage_keys: gold(gold_docs) }
    }

    fn record(qid: &str, passages: &[&str], answer: &str) -> QueryRecord {
        QueryRecord {
            qid: qid.into(),
            retrieved: vec![],
            passages: keys(passages),
            answer: answer.into(),
            timings_ms: BTreeMap::new(),
        }
    }

    fn fixture() -> (RunResult, Vec<QaExample>) {
        let run = RunResult {
            records: vec![record("q1", &["a"], "paris"), record("q2", &["b", "z"], "wrong")],
            ..RunResult::default()
        };
        let data = vec![example("q1", "Paris", &["a"]), example("q2", "right", &["b", "c"])];
        (run, data)
    }

    #[test]
    fn two_query_objective() {
        let (run, data) = fixture();
        let r = score_run(&run, &data, 5, ObjectiveWeights::default()).unwrap();
        assert_eq!(r.mean_recall_at_k, 0.75);
        assert_eq!(r.mean_f1, 0.5);
        assert_eq!(r.objective, 0.625);
        let recall_only = score_run(&run, &data, 5, ObjectiveWeights { recall: 1.0, f1: 0.0 }).unwrap();
        assert_eq!(recall_only.objective, recall_only.mean_recall_at_k);
    }

    #[test]
    fn perfect_run() {
        let run = RunResult { records: vec![record("q", &["a"], "Paris")], ..RunResult::default() };
        let r = score_run(&run, &[example("q", "paris", &["a"])], 5, ObjectiveWeights::default()).unwrap();
        assert_eq!((r.mean_recall_at_k, r.mean_f1, r.objective), (1.0, 1.0, 1.0));
    }

    #[test]
    fn missing_query_is_an_error() {
        let (run, mut data) = fixture();
        data.push(example("q3", "x", &["a"]));
        assert!(matches!(score_run(&run, &data, 5, ObjectiveWeights::default()), Err(EvalError::MissingQuery(q)) if q == "q3"));
    }

    #[test]
    fn dataset_parsing() {
        let ok = "{\"qid\":\"1\",\"question\":\"q\",\"answer\":\"a\",\"gold_passages\":[\"d1\"]}\n\
                  {\"qid\":\"2\",\"question\":\"q\",\"answer\":\"a\",\"gold_passages\":[\"d2\"]}\n\
                  {\"qid\":\"3\",\"question\":\"q\",\"answer\":\"a\",\"gold_passages\":[\"d3\"]}\n";
        assert_eq!(read_dataset(ok.as_bytes()).unwrap().len(), 3);
        let dup = "{\"qid\":\"1\",\"question\":\"q\",\"answer\":\"a\",\"gold_passages\":[]}\n\
                   {\"qid\":\"1\",\"question\":\"q\",\"answer\":\"a\",\"gold_passages\":[]}\n";
        assert!(matches!(read_dataset(dup.as_bytes()), Err(EvalError::DuplicateQid(q)) if q == "1"));
        let missing = "{\"qid\":\"1\",\"question\":\"q\",\"answer\":\"a\",\"gold_passages\":[]}\n\
                       {\"qid\":\"2\",\"question\":\"q\",\"gold_passages\":[]}\n";
        assert!(matches!(read_dataset(missing.as_bytes()), Err(EvalError::Parse { line: 2, .. })));
    }

    #[test]
    fn corpus_from_directory_and_jsonl() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("b.txt"), "second").unwrap();
        std::fs::write(dir.path().join("a.txt"), "first").unwrap();
        std::fs::write(dir.path().join("notes.md"), "ignored").unwrap();
        let docs = load_corpus(dir.path()).unwrap();
        assert_eq!(docs.iter().map(|d| d.doc_id.as_str()).collect::<Vec<_>>(), vec!["a", "b"]);
        let jsonl = dir.path().join("c.jsonl");
        std::fs::write(&jsonl, "{\"doc_id\":\"x\",\"text\":\"t\"}\n{\"doc_id\":\"x\",\"text\":\"u\"}\n").unwrap();
        assert!(matches!(load_corpus(&jsonl), Err(EvalError::DuplicateDocId(_))));
    }

    fn words() -> impl Strategy<Value = String> {
        prop::collection::vec(prop::sample::select(vec!["a", "the", "cat", "Dog", "x", "y.", "An", "z"]), 0..6)
            .prop_map(|w| w.join(" "))
    }

    proptest! {
        #[test]
        fn recall_monotone_in_k(
            retrieved in prop::collection::vec("[a-f]", 0..10),
            g in prop::collection::btree_set("[a-f]", 1..4),
            k in 1usize..10,
        ) {
            prop_assert!(recall_at_k(&retrieved, &g, k).unwrap() <= recall_at_k(&retrieved, &g, k + 1).unwrap());
        }

        #[test]
        fn f1_symmetric_and_bounded(p in words(), g in words()) {
            let a = f1_answer(&p, &g);
            prop_assert!((a - f1_answer(&g, &p)).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&a));
            if !p.is_empty() {
                prop_assert_eq!(f1_answer(&p, &p), 1.0);
            }
        }

        #[test]
        fn objective_ignores_dataset_order(
            answer_picks in prop::collection::vec(0usize..3, 1..12),
            seed in any::<u64>(),
        ) {
            let answers = ["alpha", "beta", "alpha beta"];
            let mut run = RunResult::default();
            let mut data = Vec::new();
            for (i, a) in answer_picks.iter().enumerate() {
                let qid = format!("q{i}");
                run.records.push(record(&qid, &["d0", "d1"], answers[*a]));
                data.push(example(&qid, "alpha", if i % 2 == 0 { &["d0"] } else { &["d1", "d9"] }));
            }
            let base = score_run(&run, &data, 1, ObjectiveWeights::default()).unwrap();
            let mut shuffled = data.clone();
            use rand::seq::SliceRandom;
            shuffled.shuffle(&mut <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed));
            let other = score_run(&run, &shuffled, 1, ObjectiveWeights::default()).unwrap();
            prop_assert_eq!(base.objective, other.objective);
        }
    }
}
