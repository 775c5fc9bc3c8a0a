//! Static analysis of C/C++ OpenMP/MPI sources.
//!
//! The pipeline is: [`parse_source`] builds a token/brace sketch, the two
//! extractors pull out OpenMP directives and MPI calls, the data-flow and
//! control-flow passes annotate them, and [`analyze_source`] matches every
//! construct against the bug knowledge graph to produce testing areas.

pub mod control;
pub mod dataflow;
pub mod lexer;
pub mod lint;
pub mod mpi;
pub mod openmp;
pub mod sketch;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kg::{KnowledgeGraph, MatchEvidence, Severity};

pub use control::analyze_control_flow;
pub use dataflow::analyze_data_dependencies;
pub use lint::{run_lint, LintConfig};
pub use mpi::extract_mpi_calls;
pub use openmp::extract_openmp_directives;
pub use sketch::{parse_source, SyntaxSketch};

pub const METADATA_SCHEMA_VERSION: &str = "hpct.metadata/1";

#[derive(Debug, Error)]
pub enum AnalyzerError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0} is not valid UTF-8")]
    NotUtf8(String),
    #[error("{0} is empty")]
    EmptySource(String),
    #[error("cannot determine language of {0}; pass it explicitly")]
    UnknownLanguage(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Language {
    C,
    #[serde(rename = "CPP")]
    Cpp,
}

impl Language {
    pub fn from_path(path: &str) -> Option<Self> {
        let ext = Path::new(path).extension()?.to_str()?.to_ascii_lowercase();
        match ext.as_str() {
            "c" | "h" => Some(Language::C),
            "cc" | "cpp" | "cxx" | "c++" | "hpp" | "hh" | "hxx" => Some(Language::Cpp),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceUnit {
    /// Path used for display and in serialized metadata.
    pub path: String,
    pub text: String,
    pub language: Language,
}

impl SourceUnit {
    pub fn new(path: impl Into<String>, text: impl Into<String>) -> Result<Self, AnalyzerError> {
        let path = path.into();
        let language =
            Language::from_path(&path).ok_or_else(|| AnalyzerError::UnknownLanguage(path.clone()))?;
        Self::with_language(path, text, language)
    }

    pub fn with_language(
        path: impl Into<String>,
        text: impl Into<String>,
        language: Language,
    ) -> Result<Self, AnalyzerError> {
        let path = path.into();
        let text = text.into();
        if text.trim().is_empty() {
            return Err(AnalyzerError::EmptySource(path));
        }
        Ok(Self {
            path,
            text,
            language,
        })
    }

    /// Read `fs_path` from disk, recording it under `display_path`.
    pub fn read(fs_path: &Path, display_path: &str, language: Option<Language>) -> Result<Self, AnalyzerError> {
        let bytes = std::fs::read(fs_path).map_err(|source| AnalyzerError::Io {
            path: fs_path.display().to_string(),
            source,
        })?;
        let text = String::from_utf8(bytes).map_err(|_| AnalyzerError::NotUtf8(display_path.to_string()))?;
        match language {
            Some(l) => Self::with_language(display_path, text, l),
            None => Self::new(display_path, text),
        }
    }

    pub fn file_name(&self) -> String {
        Path::new(&self.path)
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| self.path.clone())
    }

    pub fn line_count(&self) -> usize {
        self.text.lines().count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Location {
    pub file: String,
    pub line: u32,
    pub col: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ConstructKind {
    OmpParallel,
    OmpFor,
    OmpParallelFor,
    OmpSections,
    OmpSection,
    OmpCritical,
    OmpAtomic,
    OmpBarrier,
    OmpTask,
    OmpTaskwait,
    MpiInit,
    MpiFinalize,
    MpiSend,
    MpiRecv,
    MpiIsend,
    MpiIrecv,
    MpiBcast,
    MpiScatter,
    MpiGather,
    MpiReduce,
    MpiBarrier,
    MpiCommRank,
    MpiCommSize,
    Other,
}

impl ConstructKind {
    pub fn is_openmp(self) -> bool {
        use ConstructKind::*;
        matches!(
            self,
            OmpParallel | OmpFor | OmpParallelFor | OmpSections | OmpSection | OmpCritical | OmpAtomic
                | OmpBarrier | OmpTask | OmpTaskwait
        )
    }

    pub fn is_mpi(self) -> bool {
        !self.is_openmp() && self != ConstructKind::Other
    }

    pub fn is_collective(self) -> bool {
        use ConstructKind::*;
        matches!(self, MpiBcast | MpiScatter | MpiGather | MpiReduce | MpiBarrier)
    }

    /// Canonical MPI routine name (`MPI_Send`) for MPI kinds.
    pub fn mpi_name(self) -> Option<&'static str> {
        use ConstructKind::*;
        Some(match self {
            MpiInit => "MPI_Init",
            MpiFinalize => "MPI_Finalize",
            MpiSend => "MPI_Send",
            MpiRecv => "MPI_Recv",
            MpiIsend => "MPI_Isend",
            MpiIrecv => "MPI_Irecv",
            MpiBcast => "MPI_Bcast",
            MpiScatter => "MPI_Scatter",
            MpiGather => "MPI_Gather",
            MpiReduce => "MPI_Reduce",
            MpiBarrier => "MPI_Barrier",
            MpiCommRank => "MPI_Comm_rank",
            MpiCommSize => "MPI_Comm_size",
            _ => return None,
        })
    }

    pub fn as_str(self) -> &'static str {
        use ConstructKind::*;
        match self {
            OmpParallel => "OmpParallel",
            OmpFor => "OmpFor",
            OmpParallelFor => "OmpParallelFor",
            OmpSections => "OmpSections",
            OmpSection => "OmpSection",
            OmpCritical => "OmpCritical",
            OmpAtomic => "OmpAtomic",
            OmpBarrier => "OmpBarrier",
            OmpTask => "OmpTask",
            OmpTaskwait => "OmpTaskwait",
            MpiInit => "MpiInit",
            MpiFinalize => "MpiFinalize",
            MpiSend => "MpiSend",
            MpiRecv => "MpiRecv",
            MpiIsend => "MpiIsend",
            MpiIrecv => "MpiIrecv",
            MpiBcast => "MpiBcast",
            MpiScatter => "MpiScatter",
            MpiGather => "MpiGather",
            MpiReduce => "MpiReduce",
            MpiBarrier => "MpiBarrier",
            MpiCommRank => "MpiCommRank",
            MpiCommSize => "MpiCommSize",
            Other => "Other",
        }
    }
}

impl std::fmt::Display for ConstructKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextFlag {
    InsideConditional,
    InsideLoop,
    InsideParallelRegion,
    RankDependentBranch,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Clause {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub argument: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParallelConstruct {
    pub id: String,
    pub kind: ConstructKind,
    /// Directive text after `omp` for OpenMP, callee name for MPI.
    pub name: String,
    pub location: Location,
    pub clauses: Vec<Clause>,
    pub call_args: Vec<String>,
    pub enclosing_function: Option<String>,
    pub context_flags: BTreeSet<ContextFlag>,
}

impl ParallelConstruct {
    pub fn is_mpi_call(&self) -> bool {
        self.kind.is_mpi() || (self.kind == ConstructKind::Other && self.name.starts_with("MPI_"))
    }

    pub fn has_clause(&self, name: &str) -> bool {
        self.clauses.iter().any(|c| c.name == name)
    }

    /// Short human label, e.g. `MPI_Send_line_6` or `omp_parallel_for_line_4`.
    pub fn label(&self) -> String {
        if self.is_mpi_call() {
            format!("{}_line_{}", self.name, self.location.line)
        } else {
            let words: Vec<&str> = self
                .name
                .split(|c: char| !c.is_alphanumeric())
                .take_while(|w| !w.is_empty())
                .take(2)
                .collect();
            let head = match self.kind {
                ConstructKind::OmpParallelFor => "parallel_for".to_string(),
                ConstructKind::Other => words.first().copied().unwrap_or("directive").to_string(),
                _ => words.join("_"),
            };
            format!("omp_{}_line_{}", head, self.location.line)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionInfo {
    pub id: String,
    pub name: String,
    pub return_type_text: String,
    pub parameter_texts: Vec<String>,
    pub location: Location,
    pub body_span: (u32, u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeclaredScope {
    OutsideParallel,
    InsideParallel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccessMode {
    Read,
    Write,
    ReadWrite,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Access {
    pub line: u32,
    pub col: u32,
    pub mode: AccessMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sharing {
    SharedImplicit,
    SharedExplicit,
    Private,
    Firstprivate,
    Reduction,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Guard {
    Critical,
    Atomic,
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataFlowFact {
    /// Id of the parallel-region construct the accesses belong to.
    pub region: String,
    pub variable: String,
    pub declared_scope: DeclaredScope,
    pub accesses: Vec<Access>,
    pub sharing: Sharing,
    pub guarded_by: BTreeSet<Guard>,
    /// All writes happen inside one section/single/master block.
    pub exclusive_writer: bool,
}

impl DataFlowFact {
    pub fn first_mode(&self) -> AccessMode {
        self.accesses[0].mode
    }

    pub fn has_mode(&self, mode: AccessMode) -> bool {
        self.accesses.iter().any(|a| a.mode == mode)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlFlowSummary {
    pub construct_id: String,
    pub flags: BTreeSet<ContextFlag>,
    /// Enclosing control structures, outermost first.
    pub nesting: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestingArea {
    pub construct_id: String,
    pub pattern_id: String,
    pub description: String,
    pub test_type: String,
    pub severity: Severity,
    pub evidence: MatchEvidence,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LintIssue {
    pub location: Location,
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceRef {
    pub path: String,
    pub language: Language,
    pub line_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalysisMetadata {
    pub schema_version: String,
    pub source: SourceRef,
    pub kg_version: String,
    /// Non-fatal analysis problems (e.g. `unbalanced_braces@12`).
    pub degraded: Vec<String>,
    pub lint_skipped: bool,
    pub lint_warnings: Vec<String>,
    pub constructs: Vec<ParallelConstruct>,
    pub functions: Vec<FunctionInfo>,
    pub data_flow: Vec<DataFlowFact>,
    pub control_flow: Vec<ControlFlowSummary>,
    pub testing_areas: Vec<TestingArea>,
    pub lint_issues: Vec<LintIssue>,
}

impl AnalysisMetadata {
    pub fn construct(&self, id: &str) -> Option<&ParallelConstruct> {
        self.constructs.iter().find(|c| c.id == id)
    }

    pub fn function(&self, id: &str) -> Option<&FunctionInfo> {
        self.functions.iter().find(|f| f.id == id)
    }

    pub fn facts_for<'a>(&'a self, region: &'a str) -> impl Iterator<Item = &'a DataFlowFact> + 'a {
        self.data_flow.iter().filter(move |f| f.region == region)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("metadata serializes");
        s.push('\n');
        s
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalyzerConfig {
    pub lint: LintConfig,
}

/// Assign `Kind@file:line` ids, suffixing `#n` on collisions.
fn assign_ids(constructs: &mut [ParallelConstruct]) {
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    for c in constructs.iter_mut() {
        let base = format!("{}@{}:{}", c.kind, c.location.file, c.location.line);
        let n = seen.entry(base.clone()).or_insert(0);
        *n += 1;
        c.id = if *n == 1 { base } else { format!("{base}#{n}") };
    }
}

/// Extract, order and identify every parallel construct in the sketch.
pub fn extract_constructs(sketch: &SyntaxSketch) -> Vec<ParallelConstruct> {
    let mut constructs = extract_openmp_directives(sketch);
    constructs.extend(extract_mpi_calls(sketch));
    constructs.sort_by_key(|c| (c.location.line, c.location.col));
    assign_ids(&mut constructs);
    constructs
}

pub fn analyze_source(
    unit: &SourceUnit,
    kg: &KnowledgeGraph,
    config: &AnalyzerConfig,
) -> Result<AnalysisMetadata, AnalyzerError> {
    let sketch = parse_source(unit);
    let lint = run_lint(unit, &config.lint);
    let mut constructs = extract_constructs(&sketch);
    let data_flow = analyze_data_dependencies(&sketch, &constructs);
    let control_flow = analyze_control_flow(&sketch, &mut constructs);

    let mut metadata = AnalysisMetadata {
        schema_version: METADATA_SCHEMA_VERSION.to_string(),
        source: SourceRef {
            path: unit.path.clone(),
            language: unit.language,
            line_count: unit.line_count(),
        },
        kg_version: kg.version.clone(),
        degraded: sketch.degraded.iter().map(ToString::to_string).collect(),
        lint_skipped: lint.skipped,
        lint_warnings: lint.warnings,
        constructs,
        functions: sketch.functions.clone(),
        data_flow,
        control_flow,
        testing_areas: Vec::new(),
        lint_issues: lint.issues,
    };

    let mut areas = Vec::new();
    for c in &metadata.constructs {
        for p in kg.query(c.kind) {
            if let Some(evidence) = crate::kg::match_pattern(p, c, &metadata) {
                areas.push(TestingArea {
                    construct_id: c.id.clone(),
                    pattern_id: p.id.clone(),
                    description: p.description.clone(),
                    test_type: p.test_type.clone(),
                    severity: p.severity,
                    evidence,
                });
            }
        }
    }
    metadata.testing_areas = areas;
    Ok(metadata)
}
