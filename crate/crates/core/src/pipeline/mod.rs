//! End-to-end orchestration and the run-directory artifacts.
//!
//! Layout of `<output_dir>/<run_id>/`:
//! `metadata.json`, `recipes.json`, `tests.json`, `results.json`,
//! `report.json`, generated sources under `tests/<source-slug>/`, build
//! scratch under `work/`, review bundles under `escalations/`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analyzer::{analyze_source, AnalysisMetadata, AnalyzerConfig, SourceUnit};
use crate::corpus::{load_corpus, Corpus};
use crate::critique::{run_loop, write_escalation, IterationRecord, LoopConfig, LoopStatus, RuleCritic};
use crate::harness::{run_test, HarnessConfig, Outcome, RunResult, Toolchain, ToolchainConfig};
use crate::kg::{load_kg, KnowledgeGraph};
use crate::llm::{CompletionClient, HttpClient, LlmConfig, ScriptedMock};
use crate::metrics::{compute_metrics, MetricsReport, TestEvidence};
use crate::recipe::{bare_targets, generate_recipes, validate_recipe, RecipeConfig, RecipeSet, TestRecipe};
use crate::synth::{synthesize, Backend, ExcerptMode, GeneratedTest, SynthParams, SynthTarget};

pub const REPORT_SCHEMA_VERSION: &str = "hpct.report/1";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("input not found: {0}")]
    InputNotFound(String),
    #[error("knowledge graph invalid: {0}")]
    KgInvalid(String),
    #[error("analysis failed: {0}")]
    Analysis(String),
    #[error("recipe stage failed: {0}")]
    Recipe(String),
    #[error("synthesis failed: {0}")]
    Synth(String),
    #[error("harness failed: {0}")]
    Harness(String),
    #[error("report failed: {0}")]
    Report(String),
}

impl PipelineError {
    /// Process exit code for each failure class.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::InputNotFound(_) => 3,
            PipelineError::KgInvalid(_) => 4,
            PipelineError::Analysis(_) => 5,
            PipelineError::Recipe(_) => 6,
            PipelineError::Synth(_) => 7,
            PipelineError::Harness(_) => 8,
            PipelineError::Report(_) => 9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendChoice {
    Template,
    Llm,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ablations {
    pub no_recipe: bool,
    pub no_critique: bool,
}

/// Named ablation configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Full,
    NoCritique,
    NoRecipe,
    Standalone,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::Full, Preset::NoCritique, Preset::NoRecipe, Preset::Standalone];

    pub fn ablations(self) -> Ablations {
        match self {
            Preset::Full => Ablations::default(),
            Preset::NoCritique => Ablations {
                no_recipe: false,
                no_critique: true,
            },
            Preset::NoRecipe => Ablations {
                no_recipe: true,
                no_critique: false,
            },
            Preset::Standalone => Ablations {
                no_recipe: true,
                no_critique: true,
            },
        }
    }

    pub fn parse(s: &str) -> Option<Preset> {
        Preset::ALL.into_iter().find(|p| p.as_str() == s)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Preset::Full => "full",
            Preset::NoCritique => "no-critique",
            Preset::NoRecipe => "no-recipe",
            Preset::Standalone => "standalone",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Source files or directories; filters the manifest when one is given.
    pub inputs: Vec<PathBuf>,
    pub manifest: Option<PathBuf>,
    /// Knowledge graph file; the built-in seed graph when unset.
    pub kg_path: Option<PathBuf>,
    pub backend: BackendChoice,
    pub llm: LlmConfig,
    /// JSON array of canned completions; replaces the HTTP client.
    pub mock_script: Option<PathBuf>,
    pub max_iterations: u32,
    pub candidates: usize,
    pub temperature: f64,
    pub timeout_seconds: f64,
    pub omp_timeout_seconds: f64,
    pub excerpt_mode: ExcerptMode,
    pub ablations: Ablations,
    pub output_dir: PathBuf,
    /// Not part of the echoed configuration.
    #[serde(skip)]
    pub run_id: Option<String>,
    pub toolchain: ToolchainConfig,
    pub harness: HarnessConfig,
    /// Stop after synthesis: no compile/run.
    pub skip_run: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            inputs: Vec::new(),
            manifest: None,
            kg_path: None,
            backend: BackendChoice::Template,
            llm: LlmConfig::default(),
            mock_script: None,
            max_iterations: 5,
            candidates: 5,
            temperature: 0.2,
            timeout_seconds: 5.0,
            omp_timeout_seconds: 30.0,
            excerpt_mode: ExcerptMode::Function,
            ablations: Ablations::default(),
            output_dir: PathBuf::from("runs"),
            run_id: None,
            toolchain: ToolchainConfig::default(),
            harness: HarnessConfig::default(),
            skip_run: false,
        }
    }
}

impl PipelineConfig {
    pub fn synth_params(&self) -> SynthParams {
        SynthParams {
            timeout_seconds: self.timeout_seconds,
            omp_timeout_seconds: self.omp_timeout_seconds,
            n_candidates: self.candidates,
            temperature: self.temperature,
            excerpt_mode: self.excerpt_mode,
            ..SynthParams::default()
        }
    }

    pub fn loop_config(&self) -> LoopConfig {
        LoopConfig {
            max_iterations: self.max_iterations,
            critique_enabled: !self.ablations.no_critique,
            ..LoopConfig::default()
        }
    }

    pub fn recipe_config(&self) -> RecipeConfig {
        RecipeConfig {
            no_recipe: self.ablations.no_recipe,
            ..RecipeConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestEntry {
    pub source: String,
    pub known_buggy: bool,
    /// Recipe as first generated.
    pub recipe_id: String,
    /// Recipe after refinement.
    pub final_recipe: TestRecipe,
    pub status: LoopStatus,
    /// Synthesis rounds used.
    pub iterations: usize,
    /// Backend invocations (one per round).
    pub synth_calls: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test: Option<GeneratedTest>,
    /// Generated source, relative to the run directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub escalation: Option<String>,
    pub history: Vec<IterationRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetadataArtifact {
    pub schema_version: String,
    pub sources: Vec<AnalysisMetadata>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecipesArtifact {
    pub schema_version: String,
    pub sets: Vec<RecipeSet>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestsArtifact {
    pub schema_version: String,
    pub tests: Vec<TestEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsArtifact {
    pub schema_version: String,
    pub results: Vec<SourcedResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourcedResult {
    pub source: String,
    pub result: RunResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolInfo {
    pub path: Option<String>,
    pub version: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolchainReport {
    pub cxx: ToolInfo,
    pub mpicxx: ToolInfo,
    pub mpirun: ToolInfo,
    pub gcov: ToolInfo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSummary {
    pub source: String,
    pub constructs: usize,
    pub testing_areas: usize,
    pub patterns: Vec<String>,
    pub recipes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSummary {
    pub source: String,
    pub recipe_id: String,
    pub final_recipe_id: String,
    pub status: LoopStatus,
    pub iterations: usize,
    pub synth_calls: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<Outcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: String,
    pub run_id: String,
    /// Seconds since the Unix epoch.
    pub generated_at: u64,
    pub config: PipelineConfig,
    pub toolchain: ToolchainReport,
    pub sources: Vec<SourceSummary>,
    pub tests: Vec<TestSummary>,
    pub escalations: usize,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub run_dir: PathBuf,
    pub report: Report,
}

fn now_secs() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

pub fn default_run_id() -> String {
    let nanos = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_nanos())
        .unwrap_or(0);
    format!("{}-{:06}", nanos / 1_000_000_000, (nanos / 1000) % 1_000_000)
}

pub fn slug(path: &str) -> String {
    path.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect::<String>()
        .trim_matches('_')
        .to_string()
}

fn tool_info(path: &Option<PathBuf>) -> ToolInfo {
    let version = path.as_ref().and_then(|p| {
        let out = std::process::Command::new(p).arg("--version").output().ok()?;
        let text = String::from_utf8_lossy(&out.stdout).into_owned() + &String::from_utf8_lossy(&out.stderr);
        text.lines().find(|l| !l.trim().is_empty()).map(|l| l.trim().to_string())
    });
    ToolInfo {
        path: path.as_ref().map(|p| p.display().to_string()),
        version,
    }
}

pub fn toolchain_report(tc: &Toolchain) -> ToolchainReport {
    ToolchainReport {
        cxx: tool_info(&tc.cxx),
        mpicxx: tool_info(&tc.mpicxx),
        mpirun: tool_info(&tc.mpirun),
        gcov: tool_info(&tc.gcov),
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let text = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
    std::fs::write(path, text + "\n")
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

/// A source to process and whether it is a known-buggy fixture.
#[derive(Debug, Clone)]
pub struct SourceItem {
    pub unit: SourceUnit,
    pub known_buggy: bool,
}

fn collect_files(path: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    if path.is_dir() {
        let mut entries: Vec<PathBuf> = std::fs::read_dir(path)?.filter_map(|e| e.ok().map(|e| e.path())).collect();
        entries.sort();
        for e in entries {
            collect_files(&e, out)?;
        }
    } else if path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| matches!(e, "c" | "cc" | "cpp" | "cxx" | "C"))
    {
        out.push(path.to_path_buf());
    }
    Ok(())
}

pub fn collect_sources(config: &PipelineConfig) -> Result<Vec<SourceItem>, PipelineError> {
    let corpus: Option<Corpus> = match &config.manifest {
        Some(m) => {
            if !m.is_file() {
                return Err(PipelineError::InputNotFound(m.display().to_string()));
            }
            Some(load_corpus(m).map_err(|e| PipelineError::InputNotFound(e.to_string()))?)
        }
        None => None,
    };
    let mut items = Vec::new();
    if let Some(c) = &corpus {
        let filter: Vec<PathBuf> = config
            .inputs
            .iter()
            .map(|p| std::fs::canonicalize(p).map_err(|_| PipelineError::InputNotFound(p.display().to_string())))
            .collect::<Result<_, _>>()?;
        for e in c.entries() {
            let path = c.source_path(e);
            if !filter.is_empty() {
                let canon = std::fs::canonicalize(&path).unwrap_or(path.clone());
                if !filter.iter().any(|f| canon.starts_with(f)) {
                    continue;
                }
            }
            let unit = c.read_unit(e).map_err(|e| PipelineError::Analysis(e.to_string()))?;
            items.push(SourceItem {
                unit,
                known_buggy: e.is_buggy(),
            });
        }
        return Ok(items);
    }
    if config.inputs.is_empty() {
        return Err(PipelineError::InputNotFound("no inputs given".into()));
    }
    for input in &config.inputs {
        if !input.exists() {
            return Err(PipelineError::InputNotFound(input.display().to_string()));
        }
        let mut files = Vec::new();
        collect_files(input, &mut files).map_err(|e| PipelineError::InputNotFound(format!("{}: {e}", input.display())))?;
        for f in files {
            let display = f.display().to_string();
            let unit = SourceUnit::read(&f, &display, None).map_err(|e| PipelineError::Analysis(e.to_string()))?;
            items.push(SourceItem {
                unit,
                known_buggy: false,
            });
        }
    }
    Ok(items)
}

pub fn load_kg_for(config: &PipelineConfig) -> Result<KnowledgeGraph, PipelineError> {
    match &config.kg_path {
        Some(p) if !p.exists() => Err(PipelineError::InputNotFound(p.display().to_string())),
        Some(p) => load_kg(p).map_err(|e| PipelineError::KgInvalid(e.to_string())),
        None => Ok(KnowledgeGraph::seed()),
    }
}

/// Completion client for the LLM backend: the mock script when given,
/// otherwise the HTTP client.
pub fn make_client(config: &PipelineConfig) -> Result<Box<dyn CompletionClient>, PipelineError> {
    if let Some(p) = &config.mock_script {
        let text = std::fs::read_to_string(p).map_err(|_| PipelineError::InputNotFound(p.display().to_string()))?;
        let mock = ScriptedMock::from_json(&text).map_err(|e| PipelineError::Synth(format!("mock script: {e}")))?;
        return Ok(Box::new(mock));
    }
    let client = match HttpClient::new(config.llm.clone()) {
        Ok(c) => c,
        Err(e) => {
            log::warn!("{e}; sending requests without a token");
            HttpClient::without_token(config.llm.clone()).map_err(|e| PipelineError::Synth(e.to_string()))?
        }
    };
    Ok(Box::new(client))
}

pub fn analyze_all(
    items: &[SourceItem],
    kg: &KnowledgeGraph,
) -> Result<Vec<AnalysisMetadata>, PipelineError> {
    items
        .iter()
        .map(|i| analyze_source(&i.unit, kg, &AnalyzerConfig::default()).map_err(|e| PipelineError::Analysis(e.to_string())))
        .collect()
}

pub fn recipes_for(
    metadata: &AnalysisMetadata,
    kg: &KnowledgeGraph,
    config: &RecipeConfig,
) -> Result<RecipeSet, PipelineError> {
    let set = if config.no_recipe {
        RecipeSet {
            schema_version: crate::recipe::RECIPE_SCHEMA_VERSION.into(),
            source: metadata.source.path.clone(),
            recipes: bare_targets(metadata),
            warnings: Vec::new(),
        }
    } else {
        generate_recipes(metadata, kg, config)
    };
    for r in &set.recipes {
        if let Err(v) = validate_recipe(r, &config.registry) {
            let msgs: Vec<String> = v.iter().map(|v| format!("{}: {}", v.field, v.message)).collect();
            return Err(PipelineError::Recipe(format!("{}: {}", r.test_id, msgs.join("; "))));
        }
    }
    Ok(set)
}

/// Synthesis + critique for every recipe of one source. Tests are written
/// under `run_dir/tests/<slug>/`.
pub fn synthesize_source(
    item: &SourceItem,
    metadata: &AnalysisMetadata,
    set: &RecipeSet,
    config: &PipelineConfig,
    client: Option<&dyn CompletionClient>,
    run_dir: &Path,
) -> Result<Vec<TestEntry>, PipelineError> {
    let target = SynthTarget::new(item.unit.clone(), metadata.clone());
    let backend = match (config.backend, client) {
        (BackendChoice::Llm, Some(c)) => Backend::Llm(c),
        (BackendChoice::Llm, None) => return Err(PipelineError::Synth("LLM backend without a client".into())),
        (BackendChoice::Template, _) => Backend::Template,
    };
    let params = config.synth_params();
    let registry = config.recipe_config().registry;
    let critic = RuleCritic::default();
    let loop_config = config.loop_config();
    let source_slug = slug(&item.unit.path);
    let mut entries = Vec::new();
    for recipe in &set.recipes {
        let calls = std::cell::Cell::new(0usize);
        let synth = |r: &TestRecipe, fb: Option<&crate::synth::Feedback>| {
            calls.set(calls.get() + 1);
            synthesize(r, &target, &backend, &params, fb)
        };
        let outcome = run_loop(recipe, &synth, &critic, &registry, &loop_config);
        let mut entry = TestEntry {
            source: item.unit.path.clone(),
            known_buggy: item.known_buggy,
            recipe_id: recipe.test_id.clone(),
            final_recipe: outcome.final_recipe.clone(),
            status: outcome.status,
            iterations: outcome.iterations.len(),
            synth_calls: calls.get(),
            test: outcome.test.clone(),
            path: None,
            escalation: None,
            history: outcome.iterations.clone(),
        };
        if let Some(t) = &outcome.test {
            let rel = format!("tests/{source_slug}/{}", t.file_name);
            let p = run_dir.join(&rel);
            std::fs::create_dir_all(p.parent().expect("has parent")).map_err(|e| PipelineError::Synth(e.to_string()))?;
            std::fs::write(&p, &t.source_text).map_err(|e| PipelineError::Synth(e.to_string()))?;
            entry.path = Some(rel);
        }
        if let Some(b) = &outcome.escalation {
            let dir = run_dir.join("escalations").join(&source_slug);
            let p = write_escalation(&dir, b).map_err(|e| PipelineError::Synth(e.to_string()))?;
            entry.escalation = p.strip_prefix(run_dir).ok().map(|p| p.display().to_string());
        }
        entries.push(entry);
    }
    Ok(entries)
}

pub fn run_tests(
    entries: &[TestEntry],
    toolchain: &Toolchain,
    config: &HarnessConfig,
    run_dir: &Path,
) -> Vec<SourcedResult> {
    entries
        .iter()
        .filter_map(|e| {
            let t = e.test.as_ref()?;
            let work = run_dir.join("work").join(slug(&e.source));
            Some(SourcedResult {
                source: e.source.clone(),
                result: run_test(t, toolchain, config, &work),
            })
        })
        .collect()
}

/// Rebuild the report from stage artifacts.
pub fn build_report(
    run_id: &str,
    config: &PipelineConfig,
    toolchain: &ToolchainReport,
    metadata: &MetadataArtifact,
    recipes: &RecipesArtifact,
    tests: &TestsArtifact,
    results: &ResultsArtifact,
) -> Report {
    let find_result = |e: &TestEntry| {
        let t = e.test.as_ref()?;
        results
            .results
            .iter()
            .find(|r| r.source == e.source && r.result.file_name == t.file_name)
            .map(|r| &r.result)
    };
    // construct ids are per file; qualify them with the source path
    let qualify = |source: &str, r: &TestRecipe| {
        let mut r = r.clone();
        r.construct_ids = r.construct_ids.iter().map(|c| format!("{source}::{c}")).collect();
        r.target_construct = format!("{source}::{}", r.target_construct);
        r
    };
    let qualified: Vec<TestRecipe> = recipes
        .sets
        .iter()
        .flat_map(|s| s.recipes.iter().map(|r| qualify(&s.source, r)))
        .collect();
    let final_recipes: Vec<TestRecipe> = tests.tests.iter().map(|e| qualify(&e.source, &e.final_recipe)).collect();
    let evidence: Vec<TestEvidence<'_>> = tests
        .tests
        .iter()
        .zip(&final_recipes)
        .filter_map(|(e, r)| {
            Some(TestEvidence {
                recipe: r,
                test: e.test.as_ref()?,
                result: find_result(e),
                known_buggy: e.known_buggy,
            })
        })
        .collect();
    let metrics = compute_metrics(&qualified, &evidence);
    Report {
        schema_version: REPORT_SCHEMA_VERSION.into(),
        run_id: run_id.to_string(),
        generated_at: now_secs(),
        config: config.clone(),
        toolchain: toolchain.clone(),
        sources: metadata
            .sources
            .iter()
            .map(|m| SourceSummary {
                source: m.source.path.clone(),
                constructs: m.constructs.len(),
                testing_areas: m.testing_areas.len(),
                patterns: m.testing_areas.iter().map(|t| t.pattern_id.clone()).collect(),
                recipes: recipes
                    .sets
                    .iter()
                    .filter(|s| s.source == m.source.path)
                    .flat_map(|s| s.recipes.iter().map(|r| r.test_id.clone()))
                    .collect(),
            })
            .collect(),
        tests: tests
            .tests
            .iter()
            .map(|e| TestSummary {
                source: e.source.clone(),
                recipe_id: e.recipe_id.clone(),
                final_recipe_id: e.final_recipe.test_id.clone(),
                status: e.status,
                iterations: e.iterations,
                synth_calls: e.synth_calls,
                file: e.path.clone(),
                outcome: find_result(e).map(|r| r.outcome),
            })
            .collect(),
        escalations: tests.tests.iter().filter(|e| e.status == LoopStatus::Escalated).count(),
        metrics,
    }
}

pub const METADATA_FILE: &str = "metadata.json";
pub const RECIPES_FILE: &str = "recipes.json";
pub const TESTS_FILE: &str = "tests.json";
pub const RESULTS_FILE: &str = "results.json";
pub const REPORT_FILE: &str = "report.json";

fn io_err(e: std::io::Error) -> PipelineError {
    PipelineError::Report(e.to_string())
}

pub fn stage_analyze(config: &PipelineConfig, kg: &KnowledgeGraph) -> Result<MetadataArtifact, PipelineError> {
    let items = collect_sources(config)?;
    Ok(MetadataArtifact {
        schema_version: "hpct.run-metadata/1".into(),
        sources: analyze_all(&items, kg)?,
    })
}

pub fn stage_recipes(
    config: &PipelineConfig,
    kg: &KnowledgeGraph,
    metadata: &MetadataArtifact,
) -> Result<RecipesArtifact, PipelineError> {
    let rc = config.recipe_config();
    Ok(RecipesArtifact {
        schema_version: crate::recipe::RECIPE_SCHEMA_VERSION.into(),
        sets: metadata
            .sources
            .iter()
            .map(|m| recipes_for(m, kg, &rc))
            .collect::<Result<_, _>>()?,
    })
}

/// Synthesis + critique loop for every recipe set. Sources are re-read from
/// the configured inputs and matched to the metadata by display path.
/// Re-read the analysed sources by the paths recorded in the metadata.
fn sources_from_metadata(metadata: &MetadataArtifact) -> Result<Vec<SourceItem>, PipelineError> {
    metadata
        .sources
        .iter()
        .map(|m| {
            let path = Path::new(&m.source.path);
            if !path.is_file() {
                return Err(PipelineError::InputNotFound(m.source.path.clone()));
            }
            let unit = SourceUnit::read(path, &m.source.path, Some(m.source.language))
                .map_err(|e| PipelineError::Analysis(e.to_string()))?;
            Ok(SourceItem {
                unit,
                known_buggy: false,
            })
        })
        .collect()
}

pub fn stage_tests(
    config: &PipelineConfig,
    metadata: &MetadataArtifact,
    recipes: &RecipesArtifact,
    run_dir: &Path,
) -> Result<TestsArtifact, PipelineError> {
    let items = if config.inputs.is_empty() && config.manifest.is_none() {
        sources_from_metadata(metadata)?
    } else {
        collect_sources(config)?
    };
    let client = match config.backend {
        BackendChoice::Llm => Some(make_client(config)?),
        BackendChoice::Template => None,
    };
    let mut tests = Vec::new();
    for set in &recipes.sets {
        let item = items
            .iter()
            .find(|i| i.unit.path == set.source)
            .ok_or_else(|| PipelineError::InputNotFound(set.source.clone()))?;
        let meta = metadata
            .sources
            .iter()
            .find(|m| m.source.path == set.source)
            .ok_or_else(|| PipelineError::Synth(format!("no metadata for {}", set.source)))?;
        tests.extend(synthesize_source(item, meta, set, config, client.as_deref(), run_dir)?);
    }
    Ok(TestsArtifact {
        schema_version: "hpct.tests/1".into(),
        tests,
    })
}

pub fn stage_run(config: &PipelineConfig, tests: &TestsArtifact, run_dir: &Path) -> ResultsArtifact {
    let results = if config.skip_run {
        Vec::new()
    } else {
        let toolchain = Toolchain::discover(&config.toolchain);
        run_tests(&tests.tests, &toolchain, &config.harness, run_dir)
    };
    ResultsArtifact {
        schema_version: "hpct.results/1".into(),
        results,
    }
}

/// Report from the artifacts already in `run_dir`.
pub fn stage_report(config: &PipelineConfig, run_dir: &Path) -> Result<Report, PipelineError> {
    let load = |name: &str| run_dir.join(name);
    for f in [METADATA_FILE, RECIPES_FILE, TESTS_FILE, RESULTS_FILE] {
        if !load(f).is_file() {
            return Err(PipelineError::InputNotFound(load(f).display().to_string()));
        }
    }
    let metadata: MetadataArtifact = read_json(&load(METADATA_FILE)).map_err(PipelineError::Report)?;
    let recipes: RecipesArtifact = read_json(&load(RECIPES_FILE)).map_err(PipelineError::Report)?;
    let tests: TestsArtifact = read_json(&load(TESTS_FILE)).map_err(PipelineError::Report)?;
    let results: ResultsArtifact = read_json(&load(RESULTS_FILE)).map_err(PipelineError::Report)?;
    let run_id = run_dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let toolchain = toolchain_report(&Toolchain::discover(&config.toolchain));
    let report = build_report(&run_id, config, &toolchain, &metadata, &recipes, &tests, &results);
    write_json(&load(REPORT_FILE), &report).map_err(io_err)?;
    Ok(report)
}

pub fn run_dir_for(config: &PipelineConfig) -> PathBuf {
    let run_id = config.run_id.clone().unwrap_or_else(default_run_id);
    config.output_dir.join(run_id)
}

/// Analyze → recipes → synthesize/critique → compile/run → metrics → report.
/// Each stage's artifact is written before the next stage starts.
pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineOutcome, PipelineError> {
    let kg = load_kg_for(config)?;
    let run_dir = run_dir_for(config);
    std::fs::create_dir_all(&run_dir).map_err(|e| PipelineError::Report(format!("{}: {e}", run_dir.display())))?;

    let metadata = stage_analyze(config, &kg)?;
    write_json(&run_dir.join(METADATA_FILE), &metadata).map_err(io_err)?;
    let recipes = stage_recipes(config, &kg, &metadata)?;
    write_json(&run_dir.join(RECIPES_FILE), &recipes).map_err(io_err)?;
    let tests = stage_tests(config, &metadata, &recipes, &run_dir)?;
    write_json(&run_dir.join(TESTS_FILE), &tests).map_err(io_err)?;
    let results = stage_run(config, &tests, &run_dir);
    write_json(&run_dir.join(RESULTS_FILE), &results).map_err(io_err)?;
    let report = stage_report(config, &run_dir)?;
    Ok(PipelineOutcome { run_dir, report })
}

/// Report JSON with the volatile fields (`generated_at`, `run_id`) cleared,
/// for byte comparison between runs.
pub fn normalized_report_json(report: &Report) -> String {
    let mut r = report.clone();
    r.generated_at = 0;
    r.run_id = String::new();
    serde_json::to_string_pretty(&r).expect("report serializes")
}
