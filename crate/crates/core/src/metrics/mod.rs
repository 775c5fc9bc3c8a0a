//! Compilation rate, auto-rubric, construct targeting rate, coverage
//! summary and compile-error clustering.

pub mod kmeans;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::critique::critique;
use crate::harness::{Coverage, Outcome, RunResult};
use crate::recipe::{rule_for, AssertionKind, TestRecipe};
use crate::synth::{ExecModel, GeneratedTest};
use kmeans::{elbow, silhouette, KMeans64};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("no inputs")]
    EmptyInput,
    #[error("all messages are identical")]
    DegenerateInput,
}

/// Round half up to one decimal.
pub fn round1(x: f64) -> f64 {
    (x * 10.0 + 0.5).floor() / 10.0
}

/// `100·num/den` to one decimal (round half up), exact in integers.
/// `None` when the denominator is zero.
pub fn pct(num: u64, den: u64) -> Option<f64> {
    if den == 0 {
        return None;
    }
    let tenths = (num as u128 * 2000 + den as u128) / (2 * den as u128);
    Some(tenths as f64 / 10.0)
}

pub fn compilation_rate(results: &[RunResult]) -> Result<f64, MetricsError> {
    let compiled = results
        .iter()
        .filter(|r| !matches!(r.outcome, Outcome::CompileError | Outcome::ToolchainUnavailable))
        .count();
    pct(compiled as u64, results.len() as u64).ok_or(MetricsError::EmptyInput)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RubricScore {
    pub parallel_relevance: u8,
    pub assertion_correctness: u8,
    pub functionally_correct: bool,
}

impl RubricScore {
    pub fn new(parallel_relevance: u8, assertion_correctness: u8) -> Self {
        RubricScore {
            parallel_relevance,
            assertion_correctness,
            functionally_correct: parallel_relevance == 2 && assertion_correctness == 2,
        }
    }
}

/// Automated proxy for the manual two-axis rubric. Evidence comes from the
/// rule critic and, when present, the run verdict.
pub fn score_rubric(test: &GeneratedTest, recipe: &TestRecipe, result: Option<&RunResult>) -> RubricScore {
    let report = critique(recipe, test);
    let has = |c: &str| report.findings.iter().any(|f| f.code == c || f.code.starts_with(&format!("{c}:")));

    let parallelism = match test.launch_spec.model {
        ExecModel::Mpi => test.launch_spec.num_processes.unwrap_or(1),
        ExecModel::Openmp => test.launch_spec.num_threads.unwrap_or(1),
        ExecModel::Serial => 0,
    };
    let required = recipe.int("num_processes").or(recipe.int("num_threads"));
    let relevance = if has("ERR_MISSING_PARALLEL_SETUP") || has("WARN_RELEVANCE_TARGET_NOT_EXERCISED") || parallelism == 0 {
        0
    } else if parallelism == 1 && required != Some(1) {
        // one thread/process is only meaningful when the recipe asks for it
        1
    } else {
        2
    };

    let wanted = rule_for(&recipe.test_type).map(|r| r.assertion_kind);
    let declared: BTreeSet<AssertionKind> = test.declared_assertions.iter().map(|a| a.kind).collect();
    let verdict_ok = result.map_or(true, |r| {
        matches!(r.outcome, Outcome::Pass | Outcome::AssertionFailure | Outcome::TimeoutDeadlock)
    });
    let assertion = if has("ERR_ASSERTION_MISSING") || has("WARN_ASSERTION_TARGET_MISMATCH") || declared.is_empty() {
        0
    } else if wanted.is_some_and(|w| declared.contains(&w)) && verdict_ok && report.errors() == 0 {
        2
    } else {
        1
    };
    RubricScore::new(relevance, assertion)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Targeting {
    pub identified_constructs: usize,
    pub functionally_tested: usize,
    pub rate_pct: Option<f64>,
}

/// `scores` pairs each scored test with the recipe it realizes.
pub fn targeting_rate(recipes: &[TestRecipe], scores: &[(&TestRecipe, RubricScore)]) -> Targeting {
    let key = |r: &TestRecipe| r.construct_ids.first().cloned().unwrap_or_else(|| r.target_construct.clone());
    let identified: BTreeSet<String> = recipes.iter().map(key).collect();
    let tested: BTreeSet<String> = scores
        .iter()
        .filter(|(_, s)| s.functionally_correct)
        .map(|(r, _)| key(r))
        .filter(|k| identified.contains(k))
        .collect();
    Targeting {
        identified_constructs: identified.len(),
        functionally_tested: tested.len(),
        rate_pct: pct(tested.len() as u64, identified.len() as u64),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CoverageSummary {
    pub tests_with_coverage: usize,
    pub lines_total: u64,
    pub lines_hit: u64,
    pub branches_total: u64,
    pub branches_hit: u64,
    pub line_pct: Option<f64>,
    pub branch_pct: Option<f64>,
}

pub fn summarize_coverage<'a>(items: impl IntoIterator<Item = &'a Coverage>) -> CoverageSummary {
    let mut s = CoverageSummary::default();
    for c in items {
        s.tests_with_coverage += 1;
        s.lines_total += c.lines_total as u64;
        s.lines_hit += c.lines_hit as u64;
        s.branches_total += c.branches_total as u64;
        s.branches_hit += c.branches_hit as u64;
    }
    s.line_pct = pct(s.lines_hit, s.lines_total);
    s.branch_pct = pct(s.branches_hit, s.branches_total);
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorCluster {
    pub centroid_terms: Vec<String>,
    pub members: Vec<String>,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorClustering {
    pub k: usize,
    pub sse: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub silhouette: Option<f64>,
    /// SSE for k = 1, 2, … (empty when k was forced).
    pub elbow_curve: Vec<f64>,
    pub clusters: Vec<ErrorCluster>,
}

fn norm_res() -> &'static [(Regex, &'static str)] {
    static RES: OnceLock<Vec<(Regex, &'static str)>> = OnceLock::new();
    RES.get_or_init(|| {
        [
            (r"['‘`][^'’`]*['’`]", " ID "),
            (r"(?:[\w.-]*/)+[\w.-]+|\b[\w-]+\.(?:cpp|cc|cxx|c|hpp|h)\b", " PATH "),
            (r"\b\d+(?:\.\d+)?\b", " NUM "),
        ]
        .iter()
        .map(|(p, r)| (Regex::new(p).expect("static regex"), *r))
        .collect()
    })
}

/// Mask quoted identifiers, paths and numbers.
pub fn normalize_message(msg: &str) -> String {
    let mut s = msg.to_string();
    for (re, rep) in norm_res() {
        s = re.replace_all(&s, *rep).into_owned();
    }
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn tokens(msg: &str) -> Vec<String> {
    msg.split(|c: char| !(c.is_alphanumeric() || c == '_'))
        .filter(|t| !t.is_empty())
        .map(|t| if t.chars().all(|c| c.is_uppercase()) { t.to_string() } else { t.to_lowercase() })
        .collect()
}

/// TF-IDF rows (L2-normalized) over the normalized messages.
pub fn tfidf(messages: &[String]) -> (Vec<String>, Vec<Vec<f64>>) {
    let docs: Vec<Vec<String>> = messages.iter().map(|m| tokens(&normalize_message(m))).collect();
    let vocab: Vec<String> = docs.iter().flatten().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    let index: BTreeMap<&str, usize> = vocab.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
    let n = docs.len() as f64;
    let mut df = vec![0usize; vocab.len()];
    for d in &docs {
        for t in d.iter().collect::<BTreeSet<_>>() {
            df[index[t.as_str()]] += 1;
        }
    }
    let rows = docs
        .iter()
        .map(|d| {
            let mut row = vec![0.0; vocab.len()];
            for t in d {
                row[index[t.as_str()]] += 1.0;
            }
            let len = d.len().max(1) as f64;
            for (i, v) in row.iter_mut().enumerate() {
                *v = *v / len * (((1.0 + n) / (1.0 + df[i] as f64)).ln() + 1.0);
            }
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.iter_mut().for_each(|v| *v /= norm);
            }
            row
        })
        .collect();
    (vocab, rows)
}

/// Cluster compiler messages; with `k` unset it is chosen by the elbow rule
/// over k ∈ [1, min(10, n)].
pub fn cluster_errors(messages: &[String], k: Option<usize>) -> Result<ErrorClustering, MetricsError> {
    if messages.is_empty() || (k.is_none() && messages.len() < 2) {
        return Err(MetricsError::EmptyInput);
    }
    let (vocab, data) = tfidf(messages);
    let distinct: BTreeSet<String> = data.iter().map(|r| format!("{r:?}")).collect();
    if distinct.len() == 1 {
        return Err(MetricsError::DegenerateInput);
    }
    let (k, curve) = match k {
        Some(k) => (k.clamp(1, messages.len()), Vec::new()),
        None => {
            let kmax = messages.len().min(10).min(distinct.len());
            let curve: Vec<f64> = (1..=kmax).map(|k| KMeans64::new(k).fit(&data).sse).collect();
            (elbow(&curve), curve)
        }
    };
    let fit = KMeans64::new(k).fit(&data);
    let mut clusters: Vec<ErrorCluster> = (0..k)
        .map(|c| {
            let mut weights: Vec<(f64, &String)> =
                fit.centroids[c].iter().zip(&vocab).filter(|(w, _)| **w > 0.0).map(|(w, t)| (*w, t)).collect();
            weights.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(b.1)));
            let members: Vec<String> = messages
                .iter()
                .zip(&fit.assignments)
                .filter(|(_, a)| **a == c)
                .map(|(m, _)| m.clone())
                .collect();
            ErrorCluster {
                centroid_terms: weights.into_iter().take(5).map(|(_, t)| t.clone()).collect(),
                size: members.len(),
                members,
            }
        })
        .filter(|c| c.size > 0)
        .collect();
    clusters.sort_by(|a, b| b.size.cmp(&a.size).then(a.members.cmp(&b.members)));
    Ok(ErrorClustering {
        k,
        sse: fit.sse,
        silhouette: if k >= 2 { silhouette(&data, &fit.assignments) } else { None },
        elbow_curve: curve,
        clusters,
    })
}

/// `error:` lines of a compiler log, location prefix dropped.
pub fn compile_errors(log: &str) -> Vec<String> {
    log.lines()
        .filter_map(|l| l.split_once("error:").map(|(_, m)| m.trim().to_string()))
        .filter(|m| !m.is_empty())
        .collect()
}

/// One generated test with everything known about it.
#[derive(Debug, Clone, Copy)]
pub struct TestEvidence<'a> {
    pub recipe: &'a TestRecipe,
    pub test: &'a GeneratedTest,
    pub result: Option<&'a RunResult>,
    /// The source is a known-buggy fixture.
    pub known_buggy: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestScore {
    pub recipe_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<Outcome>,
    pub rubric: RubricScore,
    /// Set when a race test passed on a known-buggy fixture.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rubric_kind: String,
    pub tests: usize,
    pub compilation_rate_pct: Option<f64>,
    pub fully_correct_pct: Option<f64>,
    pub scores: Vec<TestScore>,
    pub targeting: Targeting,
    pub coverage: CoverageSummary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_clusters: Option<ErrorClustering>,
}

pub fn compute_metrics(recipes: &[TestRecipe], evidence: &[TestEvidence<'_>]) -> MetricsReport {
    let results: Vec<RunResult> = evidence.iter().filter_map(|e| e.result.cloned()).collect();
    let scored: Vec<(&TestRecipe, RubricScore)> = evidence
        .iter()
        .map(|e| (e.recipe, score_rubric(e.test, e.recipe, e.result)))
        .collect();
    let scores = evidence
        .iter()
        .zip(&scored)
        .map(|(e, (_, rubric))| {
            let race_family = rule_for(&e.recipe.test_type).is_some_and(|r| r.assertion_kind == AssertionKind::ValueConsistency);
            let outcome = e.result.map(|r| r.outcome);
            TestScore {
                recipe_id: e.recipe.test_id.clone(),
                outcome,
                rubric: *rubric,
                note: (race_family && e.known_buggy && outcome == Some(Outcome::Pass)).then(|| "race_undetected".into()),
            }
        })
        .collect();
    let passed = results.iter().filter(|r| r.outcome == Outcome::Pass).count();
    let messages: Vec<String> = results.iter().flat_map(|r| compile_errors(&r.compile_log)).collect();
    let error_clusters = if messages.len() >= 2 { cluster_errors(&messages, None).ok() } else { None };
    MetricsReport {
        rubric_kind: "auto-rubric".into(),
        tests: evidence.len(),
        compilation_rate_pct: compilation_rate(&results).ok(),
        fully_correct_pct: pct(passed as u64, results.len() as u64),
        scores,
        targeting: targeting_rate(recipes, &scored),
        coverage: summarize_coverage(results.iter().filter_map(|r| r.coverage.as_ref())),
        error_clusters,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_is_half_up() {
        assert_eq!(pct(2, 3), Some(66.7));
        assert_eq!(pct(1, 8), Some(12.5));
        assert_eq!(pct(1, 16), Some(6.3));
        assert_eq!(pct(3, 3), Some(100.0));
        assert_eq!(pct(0, 0), None);
        assert_eq!(round1(0.25), 0.3);
    }

    #[test]
    fn normalization_masks_variable_parts() {
        assert_eq!(
            normalize_message("src/a.cpp:12: 'foo' was not declared"),
            normalize_message("lib/b.cpp:7: 'bar' was not declared")
        );
    }
}
