//! Rule-based review of generated tests and the synthesize/critique loop.
//!
//! The critic only looks at the scaffold: everything outside the embedded
//! code-under-test block and the embedded header.

use std::collections::{BTreeSet, HashSet};
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::llm::{CompletionClient, CompletionRequest};
use crate::recipe::{
    refine_recipe, rule_for, AssertionKind, ConditionRegistry, ConditionValue, RefinementDirective, TestRecipe,
};
use crate::synth::{scaffold_of, ExecModel, Feedback, GeneratedTest, SynthError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FindingSeverity {
    Suggestion,
    Warning,
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FindingCategory {
    Adherence,
    Correctness,
    Relevance,
    Robustness,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CritiqueFinding {
    pub code: String,
    pub severity: FindingSeverity,
    pub category: FindingCategory,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub line: Option<u32>,
    pub confidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Accept,
    Revise,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CritiqueReport {
    pub recipe_id: String,
    pub candidate: usize,
    pub findings: Vec<CritiqueFinding>,
    pub verdict: Verdict,
    /// Recipe changes that would address the findings.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub refinement: Vec<RefinementDirective>,
    /// The scaffold could not be structurally parsed.
    #[serde(default)]
    pub degraded: bool,
}

impl CritiqueReport {
    pub fn errors(&self) -> usize {
        self.findings.iter().filter(|f| f.severity == FindingSeverity::Error).count()
    }

    pub fn has(&self, code: &str) -> bool {
        self.findings.iter().any(|f| f.code == code)
    }
}

/// Registered finding codes: severity, category and base confidence.
/// Codes may carry a `:<DETAIL>` suffix; lookup uses the part before it.
pub const ERROR_CODES: &[(&str, FindingSeverity, FindingCategory, f64)] = &[
    ("ERR_RECIPE_CONSTRAINT_VIOLATED", FindingSeverity::Error, FindingCategory::Adherence, 0.95),
    ("WARN_ASSERTION_TARGET_MISMATCH", FindingSeverity::Warning, FindingCategory::Adherence, 0.6),
    ("ERR_ENTRYPOINT_MALFORMED", FindingSeverity::Error, FindingCategory::Correctness, 1.0),
    ("ERR_MISSING_PARALLEL_SETUP", FindingSeverity::Error, FindingCategory::Correctness, 1.0),
    ("ERR_WATCHDOG_MISSING", FindingSeverity::Error, FindingCategory::Robustness, 1.0),
    ("ERR_ASSERTION_MISSING", FindingSeverity::Error, FindingCategory::Correctness, 0.9),
    ("WARN_RELEVANCE_TARGET_NOT_EXERCISED", FindingSeverity::Warning, FindingCategory::Relevance, 0.3),
    ("SUGGEST_RETRY_WITH_NON_BLOCKING_MPI", FindingSeverity::Suggestion, FindingCategory::Robustness, 0.6),
    ("ERR_IDENTICAL_RESUBMISSION", FindingSeverity::Error, FindingCategory::Robustness, 0.9),
    ("ERR_BACKEND_FAILURE", FindingSeverity::Error, FindingCategory::Robustness, 1.0),
    ("SUGGEST_LLM_SECOND_OPINION", FindingSeverity::Suggestion, FindingCategory::Relevance, 0.3),
];

fn code_info(code: &str) -> (FindingSeverity, FindingCategory, f64) {
    let base = code.split(':').next().unwrap_or(code);
    ERROR_CODES
        .iter()
        .find(|(c, ..)| *c == base)
        .map(|&(_, s, k, p)| (s, k, p))
        .unwrap_or((FindingSeverity::Warning, FindingCategory::Robustness, 0.5))
}

/// Confidence of a finding: the code's registered base confidence.
pub fn compute_confidence(code: &str) -> f64 {
    code_info(code).2
}

pub fn finding(code: impl Into<String>, message: impl Into<String>, line: Option<u32>) -> CritiqueFinding {
    let code = code.into();
    let (severity, category, confidence) = code_info(&code);
    CritiqueFinding {
        code,
        severity,
        category,
        message: message.into(),
        line,
        confidence,
    }
}

/// Accept iff nothing is an error and no adherence warning is open;
/// reject only when the candidate is beyond revision.
pub fn verdict_for(findings: &[CritiqueFinding]) -> Verdict {
    if findings
        .iter()
        .any(|f| f.code == "ERR_ENTRYPOINT_MALFORMED" || f.code == "ERR_BACKEND_FAILURE")
    {
        return Verdict::Reject;
    }
    let blocking = findings.iter().any(|f| {
        f.severity == FindingSeverity::Error
            || (f.severity == FindingSeverity::Warning && f.category == FindingCategory::Adherence)
    });
    if blocking {
        Verdict::Revise
    } else {
        Verdict::Accept
    }
}

const HEADER_BEGIN: &str = "// ---- hpct embedded test header ----";
const HEADER_END: &str = "// ---- end hpct embedded test header ----";

/// Scaffold with the header blanked too, line structure kept.
fn scaffold_without_header(text: &str) -> String {
    let s = scaffold_of(text);
    match (s.find(HEADER_BEGIN), s.find(HEADER_END)) {
        (Some(a), Some(b)) if a < b => {
            let end = b + HEADER_END.len();
            let blank: String = s[a..end].chars().map(|c| if c == '\n' { '\n' } else { ' ' }).collect();
            format!("{}{}{}", &s[..a], blank, &s[end..])
        }
        _ => s,
    }
}

/// Remove `//` comments and string literal contents, keep line breaks.
fn strip_comments(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for line in text.lines() {
        let mut in_str = false;
        let mut prev = '\0';
        let mut kept = String::new();
        let chars: Vec<char> = line.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            if !in_str && c == '/' && chars.get(i + 1) == Some(&'/') {
                break;
            }
            if c == '"' && prev != '\\' {
                in_str = !in_str;
                kept.push('"');
            } else if !in_str {
                kept.push(c);
            }
            prev = c;
            i += 1;
        }
        out.push_str(&kept);
        out.push('\n');
    }
    out
}

fn re(cell: &'static OnceLock<Regex>, pat: &str) -> &'static Regex {
    cell.get_or_init(|| Regex::new(pat).expect("static regex"))
}

fn line_of(text: &str, offset: usize) -> u32 {
    text[..offset].matches('\n').count() as u32 + 1
}

fn ints(re: &Regex, text: &str) -> Vec<(i64, u32)> {
    re.captures_iter(text)
        .filter_map(|c| {
            let m = c.get(1)?;
            Some((m.as_str().parse().ok()?, line_of(text, m.start())))
        })
        .collect()
}

fn numbers(text: &str) -> Vec<f64> {
    static RE: OnceLock<Regex> = OnceLock::new();
    re(&RE, r"\b\d+(?:\.\d*)?(?:[eE][+-]?\d+)?")
        .find_iter(text)
        .filter_map(|m| m.as_str().parse().ok())
        .collect()
}

fn violation(key: &str, message: String, line: Option<u32>) -> CritiqueFinding {
    finding(format!("ERR_RECIPE_CONSTRAINT_VIOLATED:{}", key.to_ascii_uppercase()), message, line)
}

fn check_adherence(recipe: &TestRecipe, code: &str, out: &mut Vec<CritiqueFinding>, refine: &mut Vec<RefinementDirective>) {
    static PROCS: OnceLock<Regex> = OnceLock::new();
    static SIZE_CMP: OnceLock<Regex> = OnceLock::new();
    static SET_THREADS: OnceLock<Regex> = OnceLock::new();
    static THREADS_CLAUSE: OnceLock<Regex> = OnceLock::new();
    static ON_RANK: OnceLock<Regex> = OnceLock::new();
    static COMPLETES: OnceLock<Regex> = OnceLock::new();

    if let Some(n) = recipe.int("num_processes") {
        let mut found = ints(re(&PROCS, r"HPCT_REQUIRE_PROCS\s*\(\s*(\d+)\s*\)"), code);
        found.extend(ints(re(&SIZE_CMP, r"\b\w*size\s*[!=]=\s*(\d+)"), code));
        match found.iter().find(|(v, _)| *v != n) {
            Some((v, line)) => out.push(violation(
                "num_processes",
                format!("test requires {v} processes but the recipe specifies {n}"),
                Some(*line),
            )),
            None if found.is_empty() => out.push(violation(
                "num_processes",
                format!("test never checks that it runs on {n} processes"),
                None,
            )),
            None => {}
        }
    }
    if let Some(n) = recipe.int("num_threads") {
        let mut found = ints(re(&SET_THREADS, r"omp_set_num_threads\s*\(\s*(\d+)\s*\)"), code);
        found.extend(ints(re(&THREADS_CLAUSE, r"num_threads\s*\(\s*(\d+)\s*\)"), code));
        // a sequential reference may legitimately pin one thread
        if !found.iter().any(|(v, _)| *v == n) {
            out.push(violation(
                "num_threads",
                format!("test never runs with the recipe's {n} threads"),
                found.first().map(|(_, l)| *l),
            ));
        }
    }
    if let Some(r) = recipe.int("repetitions") {
        let pat = Regex::new(&format!(r"<=?\s*{r}\b")).expect("numeric pattern");
        if !pat.is_match(code) {
            out.push(violation("repetitions", format!("no loop repeats the check {r} times"), None));
        }
    }
    if let Some(n) = recipe.int("input_size") {
        if !numbers(code).iter().any(|x| *x == n as f64) {
            out.push(violation("input_size", format!("input size {n} does not appear in the test"), None));
        }
    }
    if let Some(s) = recipe.condition("schedule").and_then(ConditionValue::as_str) {
        for kind in s.split(',').map(str::trim).filter(|k| !k.is_empty()) {
            if !code.contains(kind) {
                out.push(violation("schedule", format!("schedule `{kind}` is never exercised"), None));
            }
        }
    }
    if let Some(t) = recipe.condition("timeout_seconds").and_then(ConditionValue::as_f64) {
        let found: Vec<f64> = re(&COMPLETES, r"HPCT_ASSERT_COMPLETES\s*\(\s*([0-9.eE+-]+)")
            .captures_iter(code)
            .filter_map(|c| c[1].parse().ok())
            .collect();
        if !found.is_empty() && found.iter().any(|v| (v - t).abs() > 1e-9) {
            out.push(violation("timeout_seconds", format!("watchdog timeout differs from {t} s"), None));
        }
    }
    if let Some(v) = recipe.condition("expected_value").and_then(ConditionValue::as_f64) {
        if !numbers(code).iter().any(|x| (x - v).abs() <= 1e-9 * v.abs().max(1.0)) {
            out.push(violation("expected_value", format!("expected value {v} is never compared"), None));
        }
    }

    let wants_all_ranks = recipe.flag("assert_on_all_ranks")
        || rule_for(&recipe.test_type).is_some_and(|r| r.assertion_kind == AssertionKind::CompletionAllRanks);
    if wants_all_ranks {
        let sites = ints(re(&ON_RANK, r"HPCT_ASSERT_ON_RANK\s*\(\s*(\d+)"), code);
        let ranks: BTreeSet<i64> = sites.iter().map(|(r, _)| *r).collect();
        let nprocs = recipe.int("num_processes").unwrap_or(2);
        if !sites.is_empty() && (0..nprocs).any(|r| !ranks.contains(&r)) {
            let covered: Vec<String> = ranks.iter().map(i64::to_string).collect();
            out.push(finding(
                "WARN_ASSERTION_TARGET_MISMATCH",
                format!(
                    "assertions only run on rank(s) {}; ranks that skip the collective would go unchecked",
                    covered.join(", ")
                ),
                sites.first().map(|(_, l)| *l),
            ));
            refine.push(RefinementDirective::SetCondition {
                key: "assert_on_all_ranks".into(),
                value: ConditionValue::Bool(true),
            });
            refine.push(RefinementDirective::AddAssertion {
                text: "Assert on every rank, not only rank 0.".into(),
            });
        }
    }
}

fn braces_balanced(code: &str) -> bool {
    let mut depth: i64 = 0;
    for c in code.chars() {
        match c {
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth < 0 {
                    return false;
                }
            }
            _ => {}
        }
    }
    depth == 0
}

fn check_correctness(
    recipe: &TestRecipe,
    test: &GeneratedTest,
    code: &str,
    out: &mut Vec<CritiqueFinding>,
) -> bool {
    static MAIN: OnceLock<Regex> = OnceLock::new();
    static INIT: OnceLock<Regex> = OnceLock::new();
    static FINALIZE: OnceLock<Regex> = OnceLock::new();
    static WATCHDOG: OnceLock<Regex> = OnceLock::new();
    static ASSERT: OnceLock<Regex> = OnceLock::new();
    static BLOCKING: OnceLock<Regex> = OnceLock::new();

    let degraded = !braces_balanced(code);
    if degraded {
        out.push(finding(
            "ERR_ENTRYPOINT_MALFORMED",
            "test scaffold does not parse (unbalanced braces)",
            None,
        ));
        return true;
    }
    let main = re(&MAIN, r"\bint\s+main\s*\(").find(code);
    if main.is_none() {
        out.push(finding("ERR_ENTRYPOINT_MALFORMED", "no `int main(...)` entry point", None));
    }
    let watchdog = re(&WATCHDOG, r"\b(HPCT_ASSERT_COMPLETES|hpct_watchdog_start)\s*\(").is_match(code);
    if test.launch_spec.model == ExecModel::Mpi {
        let inits: Vec<usize> = re(&INIT, r"\bMPI_Init(_thread)?\s*\(").find_iter(code).map(|m| m.start()).collect();
        let fins: Vec<usize> = re(&FINALIZE, r"\bMPI_Finalize\s*\(").find_iter(code).map(|m| m.start()).collect();
        let ok = inits.len() == 1 && fins.len() == 1 && inits[0] < fins[0];
        if !ok {
            out.push(finding(
                "ERR_MISSING_PARALLEL_SETUP",
                format!(
                    "expected one MPI_Init before one MPI_Finalize, found {} and {}",
                    inits.len(),
                    fins.len()
                ),
                inits.first().or(fins.first()).map(|o| line_of(code, *o)),
            ));
        }
        if recipe.test_type == "MPI_Potential_Deadlock_Order_Mismatch" {
            if let Some(m) = re(&BLOCKING, r"\bMPI_(Send|Recv)\s*\(").find(code) {
                out.push(finding(
                    "SUGGEST_RETRY_WITH_NON_BLOCKING_MPI",
                    "the test itself uses blocking point-to-point calls; MPI_Isend/MPI_Irecv avoid adding its own deadlock",
                    Some(line_of(code, m.start())),
                ));
            }
        }
    }
    if !watchdog {
        out.push(finding(
            "ERR_WATCHDOG_MISSING",
            "calls into the code under test are not guarded by a watchdog",
            None,
        ));
    }
    let asserts = re(&ASSERT, r"\bHPCT_ASSERT_(TRUE|EQ|NEAR|ON_RANK)\s*\(|\bassert\s*\(").is_match(code);
    let completion_only = rule_for(&recipe.test_type).is_some_and(|r| r.assertion_kind == AssertionKind::Completion);
    if !asserts && !(completion_only && watchdog) {
        out.push(finding("ERR_ASSERTION_MISSING", "the test never asserts on a result", None));
    }
    false
}

fn check_relevance(test: &GeneratedTest, target_function: Option<&str>, code: &str, out: &mut Vec<CritiqueFinding>) {
    let Some(name) = target_function else { return };
    let callee = if name == "main" { "hpct_target_main" } else { name };
    let pat = Regex::new(&format!(r"\b{}\s*\(", regex::escape(callee))).expect("escaped pattern");
    if !pat.is_match(code) {
        out.push(finding(
            "WARN_RELEVANCE_TARGET_NOT_EXERCISED",
            format!("`{callee}` is never called from {}", test.file_name),
            None,
        ));
    }
}

/// Deterministic review of one candidate.
pub fn critique(recipe: &TestRecipe, test: &GeneratedTest) -> CritiqueReport {
    let code = strip_comments(&scaffold_without_header(&test.source_text));
    let mut findings = Vec::new();
    let mut refinement = Vec::new();
    let degraded = check_correctness(recipe, test, &code, &mut findings);
    if !degraded {
        check_adherence(recipe, &code, &mut findings, &mut refinement);
        check_relevance(test, recipe.target_function.as_deref(), &code, &mut findings);
    }
    let verdict = verdict_for(&findings);
    CritiqueReport {
        recipe_id: recipe.test_id.clone(),
        candidate: test.candidate,
        findings,
        verdict,
        refinement,
        degraded,
    }
}

/// Advisory reviewer that can only add suggestion-severity findings.
pub trait SecondOpinion: Send + Sync {
    fn review(&self, recipe: &TestRecipe, test: &GeneratedTest) -> Vec<String>;
}

/// Asks a completion model for concerns; each `- ` line becomes a suggestion.
pub struct LlmSecondOpinion<'a> {
    pub client: &'a dyn CompletionClient,
}

impl SecondOpinion for LlmSecondOpinion<'_> {
    fn review(&self, recipe: &TestRecipe, test: &GeneratedTest) -> Vec<String> {
        let req = CompletionRequest {
            system: "You review C++ test programs for parallel code. List concrete concerns, one per line, \
                     each starting with `- `. Reply `- none` if there are none."
                .into(),
            user: format!(
                "Recipe {} ({}):\n{}\n\nTest program:\n```cpp\n{}\n```",
                recipe.test_id, recipe.test_type, recipe.suggested_assertion_method, test.source_text
            ),
            temperature: 0.2,
            n: 1,
            max_tokens: 512,
        };
        match self.client.complete(&req) {
            Ok(replies) => replies
                .first()
                .map(|r| {
                    r.lines()
                        .filter_map(|l| l.trim().strip_prefix("- "))
                        .map(str::trim)
                        .filter(|l| !l.is_empty() && !l.eq_ignore_ascii_case("none"))
                        .map(String::from)
                        .collect()
                })
                .unwrap_or_default(),
            Err(e) => {
                log::warn!("second-opinion review unavailable: {e}");
                Vec::new()
            }
        }
    }
}

pub trait Critic {
    fn critique(&self, recipe: &TestRecipe, test: &GeneratedTest) -> CritiqueReport;
}

#[derive(Default)]
pub struct RuleCritic<'a> {
    pub second_opinion: Option<&'a dyn SecondOpinion>,
}

impl Critic for RuleCritic<'_> {
    fn critique(&self, recipe: &TestRecipe, test: &GeneratedTest) -> CritiqueReport {
        let mut report = critique(recipe, test);
        if let Some(so) = self.second_opinion {
            for s in so.review(recipe, test) {
                report.findings.push(finding("SUGGEST_LLM_SECOND_OPINION", s, None));
            }
            // suggestions never change the verdict
            report.verdict = verdict_for(&report.findings);
        }
        report
    }
}

pub trait Synthesizer {
    fn synthesize(
        &self,
        recipe: &TestRecipe,
        feedback: Option<&Feedback>,
    ) -> Result<Vec<Result<GeneratedTest, SynthError>>, SynthError>;
}

impl<F> Synthesizer for F
where
    F: Fn(&TestRecipe, Option<&Feedback>) -> Result<Vec<Result<GeneratedTest, SynthError>>, SynthError>,
{
    fn synthesize(
        &self,
        recipe: &TestRecipe,
        feedback: Option<&Feedback>,
    ) -> Result<Vec<Result<GeneratedTest, SynthError>>, SynthError> {
        self(recipe, feedback)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoopConfig {
    pub max_iterations: u32,
    /// When false, one synthesis round and the first usable candidate wins.
    pub critique_enabled: bool,
    /// Escalate after this many consecutive iterations with only
    /// low-confidence findings.
    pub low_confidence_streak: u32,
    pub low_confidence_threshold: f64,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig {
            max_iterations: 5,
            critique_enabled: true,
            low_confidence_streak: 3,
            low_confidence_threshold: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub candidate: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<CritiqueReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// 1-based.
    pub iteration: u32,
    pub recipe_id: String,
    pub candidates: Vec<CandidateRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accepted: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoopStatus {
    Accepted,
    /// Critique disabled; the candidate was not reviewed.
    Unchecked,
    Escalated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EscalationBundle {
    pub recipe_id: String,
    pub reason: String,
    pub hint: String,
    pub final_recipe: TestRecipe,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_candidate: Option<String>,
    pub history: Vec<IterationRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopOutcome {
    pub status: LoopStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test: Option<GeneratedTest>,
    pub final_recipe: TestRecipe,
    pub iterations: Vec<IterationRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub escalation: Option<EscalationBundle>,
}

impl LoopOutcome {
    pub fn iteration_count(&self) -> usize {
        self.iterations.len()
    }
}

fn escalate(
    recipe: TestRecipe,
    iterations: Vec<IterationRecord>,
    reason: impl Into<String>,
    last: Option<String>,
) -> LoopOutcome {
    let reason = reason.into();
    log::warn!("escalating {}: {reason}", recipe.test_id);
    LoopOutcome {
        status: LoopStatus::Escalated,
        test: None,
        escalation: Some(EscalationBundle {
            recipe_id: recipe.test_id.clone(),
            reason,
            hint: "review the recipe and the last candidate by hand".into(),
            final_recipe: recipe.clone(),
            last_candidate: last,
            history: iterations.clone(),
        }),
        final_recipe: recipe,
        iterations,
    }
}

/// Synthesize, critique, refine; at most `max_iterations` rounds. All
/// candidates of a round are reviewed and the first accepted one wins.
pub fn run_loop(
    recipe: &TestRecipe,
    synth: &dyn Synthesizer,
    critic: &dyn Critic,
    registry: &ConditionRegistry,
    config: &LoopConfig,
) -> LoopOutcome {
    let mut recipe = recipe.clone();
    let mut feedback: Option<Feedback> = None;
    let mut seen: HashSet<String> = HashSet::new();
    let mut iterations = Vec::new();
    let mut low_streak = 0;
    let mut last_candidate = None;

    for it in 0..config.max_iterations.max(1) {
        let mut record = IterationRecord {
            iteration: it + 1,
            recipe_id: recipe.test_id.clone(),
            candidates: Vec::new(),
            accepted: None,
        };
        let candidates = match synth.synthesize(&recipe, feedback.as_ref()) {
            Ok(c) => c,
            Err(e) => {
                record.candidates.push(CandidateRecord {
                    candidate: 0,
                    report: None,
                    error: Some(e.to_string()),
                });
                iterations.push(record);
                return escalate(recipe, iterations, format!("synthesis failed: {e}"), last_candidate);
            }
        };

        if !config.critique_enabled {
            let mut chosen = None;
            for (i, c) in candidates.into_iter().enumerate() {
                match c {
                    Ok(t) if chosen.is_none() => {
                        record.accepted = Some(i);
                        record.candidates.push(CandidateRecord {
                            candidate: i,
                            report: None,
                            error: None,
                        });
                        chosen = Some(t);
                    }
                    Ok(_) => {}
                    Err(e) => record.candidates.push(CandidateRecord {
                        candidate: i,
                        report: None,
                        error: Some(e.to_string()),
                    }),
                }
            }
            iterations.push(record);
            return match chosen {
                Some(t) => LoopOutcome {
                    status: LoopStatus::Unchecked,
                    test: Some(t),
                    final_recipe: recipe,
                    iterations,
                    escalation: None,
                },
                None => escalate(recipe, iterations, "no usable candidate", None),
            };
        }

        let mut reviewed: Vec<(GeneratedTest, CritiqueReport)> = Vec::new();
        for (i, c) in candidates.into_iter().enumerate() {
            let report = match &c {
                Ok(t) => {
                    let mut r = critic.critique(&recipe, t);
                    if seen.contains(&t.source_text) {
                        r.findings.push(finding(
                            "ERR_IDENTICAL_RESUBMISSION",
                            "candidate is identical to one already rejected",
                            None,
                        ));
                        r.verdict = verdict_for(&r.findings);
                    }
                    r
                }
                Err(e) => {
                    let findings = vec![finding("ERR_BACKEND_FAILURE", e.to_string(), None)];
                    CritiqueReport {
                        recipe_id: recipe.test_id.clone(),
                        candidate: i,
                        verdict: verdict_for(&findings),
                        findings,
                        refinement: Vec::new(),
                        degraded: false,
                    }
                }
            };
            record.candidates.push(CandidateRecord {
                candidate: i,
                report: Some(report.clone()),
                error: c.as_ref().err().map(|e| e.to_string()),
            });
            if let Ok(t) = c {
                reviewed.push((t, report));
            }
        }

        if let Some(pos) = reviewed.iter().position(|(_, r)| r.verdict == Verdict::Accept) {
            let (test, report) = reviewed.swap_remove(pos);
            record.accepted = Some(report.candidate);
            iterations.push(record);
            return LoopOutcome {
                status: LoopStatus::Accepted,
                test: Some(test),
                final_recipe: recipe,
                iterations,
                escalation: None,
            };
        }

        let all_low = record.candidates.iter().all(|c| {
            c.report.as_ref().is_some_and(|r| {
                r.findings
                    .iter()
                    .all(|f| f.confidence < config.low_confidence_threshold)
            })
        });
        low_streak = if all_low { low_streak + 1 } else { 0 };
        iterations.push(record);

        for (t, _) in &reviewed {
            seen.insert(t.source_text.clone());
        }
        // feed back the least-broken candidate (lowest index breaks ties)
        let best = reviewed.iter().min_by_key(|(t, r)| (r.verdict == Verdict::Reject, r.errors(), t.candidate));
        if let Some((t, _)) = best {
            last_candidate = Some(t.source_text.clone());
        }
        if config.low_confidence_streak > 0 && low_streak >= config.low_confidence_streak {
            return escalate(
                recipe,
                iterations,
                format!("{low_streak} consecutive iterations with only low-confidence findings"),
                last_candidate,
            );
        }
        if let Some((t, r)) = best {
            match refine_recipe(&recipe, r, registry) {
                Ok(next) => recipe = next,
                Err(u) => return escalate(recipe, iterations, u.reason, last_candidate),
            }
            feedback = Some(Feedback {
                prior_candidate: t.source_text.clone(),
                findings: r.findings.iter().map(|f| (f.code.clone(), f.message.clone())).collect(),
            });
        } else {
            feedback = None;
        }
    }
    let n = iterations.len();
    escalate(recipe, iterations, format!("no accepted candidate after {n} iterations"), last_candidate)
}

/// Write a review bundle as `<dir>/escalation_<recipe>.json`.
pub fn write_escalation(dir: &Path, bundle: &EscalationBundle) -> std::io::Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(format!("escalation_{}.json", bundle.recipe_id.replace('.', "_")));
    let text = serde_json::to_string_pretty(bundle).map_err(std::io::Error::other)?;
    std::fs::write(&path, text + "\n")?;
    Ok(path)
}
