//! Turns recipes into compilable C++ test programs, either from
//! deterministic templates or from language-model completions.

pub mod binder;
pub mod prompt;
pub mod template;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analyzer::{AnalysisMetadata, FunctionInfo, SourceUnit};
use crate::llm::{CompletionClient, CompletionRequest, LlmError};
use crate::recipe::{rule_for, AssertionKind, TemplateFamily, TestRecipe};

pub use prompt::{build_prompt, parse_llm_output, ExcerptMode, LlmParse, PromptBundle};
pub use template::{scaffold_of, BEGIN_MARKER, END_MARKER};

/// The embedded assertion/watchdog header shipped inside every test.
pub const HEADER: &str = include_str!("header.hpp");

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("no template for test type `{0}`")]
    NoTemplateForTestType(String),
    #[error("recipe is missing required condition `{0}`")]
    MissingCondition(String),
    #[error("target function `{0}` not found in the analyzed source")]
    MissingTarget(String),
    #[error("language model unavailable: {0}")]
    LlmUnavailable(String),
    #[error("candidate {0} has no usable code block")]
    LlmOutputUnparseable(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Template,
    Llm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExecModel {
    Serial,
    Openmp,
    Mpi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaunchSpec {
    pub model: ExecModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_processes: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_threads: Option<u32>,
    pub timeout_seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankScope {
    All,
    Rank(u32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssertionDescriptor {
    pub kind: AssertionKind,
    pub rank_scope: RankScope,
    pub expected: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedTest {
    pub recipe_id: String,
    pub backend: BackendKind,
    /// Critique-loop iteration that produced this candidate (0-based).
    pub revision: u32,
    pub candidate: usize,
    pub file_name: String,
    /// Path of the embedded source, as used in its `#line` directive.
    pub embedded_source: String,
    pub source_text: String,
    pub launch_spec: LaunchSpec,
    pub declared_assertions: Vec<AssertionDescriptor>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthParams {
    /// Watchdog for MPI tests unless the recipe sets `timeout_seconds`.
    pub timeout_seconds: f64,
    /// Watchdog for whole OpenMP repetition loops.
    pub omp_timeout_seconds: f64,
    /// Buffer length for MPI targets that take arrays.
    pub mpi_input_size: u32,
    pub n_candidates: usize,
    pub temperature: f64,
    pub excerpt_mode: ExcerptMode,
    pub context_lines: usize,
    pub max_excerpt_lines: usize,
    pub max_tokens: u32,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            timeout_seconds: 5.0,
            omp_timeout_seconds: 30.0,
            mpi_input_size: 16,
            n_candidates: 5,
            temperature: 0.2,
            excerpt_mode: ExcerptMode::Function,
            context_lines: 3,
            max_excerpt_lines: 400,
            max_tokens: 2048,
        }
    }
}

/// What a later iteration learns from the critic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feedback {
    pub prior_candidate: String,
    /// `(code, message)` pairs.
    pub findings: Vec<(String, String)>,
}

/// The analyzed source a recipe refers to.
#[derive(Debug, Clone)]
pub struct SynthTarget {
    pub unit: SourceUnit,
    pub metadata: AnalysisMetadata,
}

impl SynthTarget {
    pub fn new(unit: SourceUnit, metadata: AnalysisMetadata) -> Self {
        SynthTarget { unit, metadata }
    }

    /// Function that encloses the recipe's primary construct, falling back
    /// to the recorded function name.
    pub fn function_for(&self, recipe: &TestRecipe) -> Result<&FunctionInfo, SynthError> {
        if let Some(c) = recipe.construct_ids.first().and_then(|id| self.metadata.construct(id)) {
            if let Some(f) = c.enclosing_function.as_deref().and_then(|id| self.metadata.function(id)) {
                return Ok(f);
            }
        }
        let name = recipe.target_function.clone().unwrap_or_default();
        self.metadata
            .functions
            .iter()
            .find(|f| f.name == name)
            .ok_or(SynthError::MissingTarget(name))
    }
}

pub fn test_file_name(recipe: &TestRecipe) -> String {
    format!("test_{}.cpp", recipe.test_id.replace('.', "_"))
}

fn launch_for(family: TemplateFamily, nprocs: Option<u32>, nthreads: Option<u32>, timeout: f64) -> LaunchSpec {
    LaunchSpec {
        model: if family.is_mpi() { ExecModel::Mpi } else { ExecModel::Openmp },
        num_processes: if family.is_mpi() { nprocs.or(Some(1)) } else { None },
        num_threads: nthreads,
        timeout_seconds: timeout,
    }
}

/// Template backend: exactly one candidate.
pub fn synthesize_template(
    recipe: &TestRecipe,
    target: &SynthTarget,
    params: &SynthParams,
) -> Result<GeneratedTest, SynthError> {
    let rule = rule_for(&recipe.test_type).ok_or_else(|| SynthError::NoTemplateForTestType(recipe.test_type.clone()))?;
    let function = target.function_for(recipe)?;
    let file_name = test_file_name(recipe);
    let r = template::render_template(recipe, &target.unit, function, params, &file_name)?;
    Ok(GeneratedTest {
        recipe_id: recipe.test_id.clone(),
        backend: BackendKind::Template,
        revision: recipe.revision(),
        candidate: 0,
        file_name,
        embedded_source: target.unit.path.clone(),
        source_text: r.text,
        launch_spec: launch_for(rule.template, r.num_processes, r.num_threads, r.timeout_seconds),
        declared_assertions: r.assertions,
        warnings: Vec::new(),
    })
}

/// Language-model backend: one entry per returned candidate, each either a
/// test or the reason it was unusable.
pub fn synthesize_llm(
    recipe: &TestRecipe,
    target: &SynthTarget,
    client: &dyn CompletionClient,
    params: &SynthParams,
    feedback: Option<&Feedback>,
) -> Result<Vec<Result<GeneratedTest, SynthError>>, SynthError> {
    let rule = rule_for(&recipe.test_type);
    let function = target.function_for(recipe).ok();
    let bundle = build_prompt(recipe, &target.unit, function, params, feedback);
    let request = CompletionRequest {
        system: bundle.system_preamble.clone(),
        user: bundle.user_message(),
        temperature: bundle.temperature,
        n: bundle.n,
        max_tokens: params.max_tokens,
    };
    let completions = client.complete(&request).map_err(|e| match e {
        LlmError::AuthFailed => SynthError::LlmUnavailable("authentication failed".into()),
        other => SynthError::LlmUnavailable(other.to_string()),
    })?;
    let file_name = test_file_name(recipe);
    let family = rule.as_ref().map(|r| r.template).unwrap_or(TemplateFamily::OmpConsistency);
    let nprocs = recipe.int("num_processes").map(|n| n as u32);
    let nthreads = recipe.int("num_threads").map(|n| n as u32);
    let timeout = recipe
        .condition("timeout_seconds")
        .and_then(|v| v.as_f64())
        .unwrap_or(if family.is_mpi() { params.timeout_seconds } else { params.omp_timeout_seconds });
    let embedding = prompt::llm_embedding(family, recipe);
    let embedded = template::embed_code(&target.unit, &embedding);
    let kind = rule.as_ref().map(|r| r.assertion_kind).unwrap_or(AssertionKind::Completion);
    Ok(completions
        .iter()
        .enumerate()
        .map(|(idx, text)| {
            let parsed = parse_llm_output(text).map_err(|_| SynthError::LlmOutputUnparseable(idx))?;
            let mut warnings = parsed.warnings;
            let source = if parsed.source_text.contains(prompt::CODE_MARKER) {
                parsed.source_text.replacen(prompt::CODE_MARKER, embedded.trim_end(), 1)
            } else {
                warnings.push("candidate does not embed the code under test".into());
                parsed.source_text
            };
            Ok(GeneratedTest {
                recipe_id: recipe.test_id.clone(),
                backend: BackendKind::Llm,
                revision: recipe.revision(),
                candidate: idx,
                file_name: file_name.clone(),
                embedded_source: target.unit.path.clone(),
                source_text: template::finalize_lines(&source, &file_name),
                launch_spec: launch_for(family, nprocs, nthreads, timeout),
                declared_assertions: vec![AssertionDescriptor {
                    kind,
                    rank_scope: RankScope::All,
                    expected: recipe.suggested_assertion_method.clone(),
                }],
                warnings,
            })
        })
        .collect())
}

/// Backend selection for [`synthesize`].
pub enum Backend<'a> {
    Template,
    Llm(&'a dyn CompletionClient),
}

pub fn synthesize(
    recipe: &TestRecipe,
    target: &SynthTarget,
    backend: &Backend<'_>,
    params: &SynthParams,
    feedback: Option<&Feedback>,
) -> Result<Vec<Result<GeneratedTest, SynthError>>, SynthError> {
    match backend {
        Backend::Template => synthesize_template(recipe, target, params).map(|t| vec![Ok(t)]),
        Backend::Llm(client) => synthesize_llm(recipe, target, *client, params, feedback),
    }
}
