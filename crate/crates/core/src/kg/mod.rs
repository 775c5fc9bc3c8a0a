//! HPC bug knowledge graph: curated patterns keyed by construct kind, each
//! with a declarative match predicate evaluated against analysis metadata.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analyzer::{
    AccessMode, AnalysisMetadata, ConstructKind, ContextFlag, DataFlowFact, Guard, ParallelConstruct, Sharing,
};

pub const KG_SCHEMA_VERSION: &str = "hpct.kg/1";

/// The curated knowledge graph shipped with the crate.
pub const SEED_KG_JSON: &str = include_str!("../../data/seed_kg.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Info,
    Warn,
    High,
}

#[derive(Debug, Error)]
pub enum KgError {
    #[error("cannot read knowledge graph {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("duplicate pattern id {0}")]
    DuplicatePatternId(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SiblingOrder {
    Before,
    After,
    Any,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccessPattern {
    /// Some access both reads and writes (`x += e`, `x = x + e`, `x++`).
    Accumulate,
    /// The first access in the region is a plain write.
    WriteFirst,
    /// The first access in the region reads the incoming value.
    ReadFirst,
    /// Any write at all.
    AnyWrite,
}

impl AccessPattern {
    fn holds(self, fact: &DataFlowFact) -> bool {
        match self {
            AccessPattern::Accumulate => fact.has_mode(AccessMode::ReadWrite),
            AccessPattern::WriteFirst => fact.first_mode() == AccessMode::Write,
            AccessPattern::ReadFirst => fact.first_mode() != AccessMode::Write,
            AccessPattern::AnyWrite => fact.accesses.iter().any(|a| a.mode != AccessMode::Read),
        }
    }
}

/// One atomic condition of a match predicate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "atom", rename_all = "snake_case", deny_unknown_fields)]
pub enum Condition {
    FlagsInclude {
        flags: BTreeSet<ContextFlag>,
    },
    FlagsExclude {
        flags: BTreeSet<ContextFlag>,
    },
    HasClause {
        clause: String,
    },
    LacksClause {
        clause: String,
    },
    /// Another construct of one of `kinds` in the same function body.
    Sibling {
        kinds: BTreeSet<ConstructKind>,
        order: SiblingOrder,
        present: bool,
        #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
        flags_exclude: BTreeSet<ContextFlag>,
    },
    /// Some data-flow fact of this region satisfies every listed constraint.
    DataFlow {
        /// Empty means any sharing.
        #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
        sharing_in: BTreeSet<Sharing>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        guard: Option<Guard>,
        access: AccessPattern,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        exclusive_writer: Option<bool>,
    },
}

fn flag_list(flags: &BTreeSet<ContextFlag>) -> String {
    flags
        .iter()
        .map(|f| serde_json::to_value(f).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default())
        .collect::<Vec<_>>()
        .join(", ")
}

fn snake<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

impl Condition {
    pub fn describe(&self) -> String {
        match self {
            Condition::FlagsInclude { flags } => format!("context flags include {{{}}}", flag_list(flags)),
            Condition::FlagsExclude { flags } => format!("context flags exclude {{{}}}", flag_list(flags)),
            Condition::HasClause { clause } => format!("has clause {clause}"),
            Condition::LacksClause { clause } => format!("lacks clause {clause}"),
            Condition::Sibling {
                kinds,
                order,
                present,
                flags_exclude,
            } => {
                let kinds: Vec<_> = kinds.iter().map(|k| k.as_str()).collect();
                let mut s = format!(
                    "{} sibling {} {} in same function",
                    if *present { "exists" } else { "no" },
                    kinds.join("|"),
                    snake(order)
                );
                if !flags_exclude.is_empty() {
                    s.push_str(&format!(" without {{{}}}", flag_list(flags_exclude)));
                }
                s
            }
            Condition::DataFlow {
                sharing_in,
                guard,
                access,
                exclusive_writer,
            } => {
                let mut parts = vec![format!("access {}", snake(access))];
                if !sharing_in.is_empty() {
                    let s: Vec<_> = sharing_in.iter().map(snake).collect();
                    parts.push(format!("sharing in {{{}}}", s.join(", ")));
                }
                if let Some(g) = guard {
                    parts.push(format!("guarded_by contains {}", snake(g)));
                }
                if let Some(e) = exclusive_writer {
                    parts.push(format!("exclusive_writer={e}"));
                }
                format!("data-flow fact with {}", parts.join(", "))
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatchPredicate {
    /// Conjunction; an empty list always holds.
    #[serde(default)]
    pub all: Vec<Condition>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BugPattern {
    pub id: String,
    pub construct_kinds: BTreeSet<ConstructKind>,
    pub description: String,
    pub test_type: String,
    pub severity: Severity,
    #[serde(default)]
    pub predicate: MatchPredicate,
    #[serde(default)]
    pub references: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchEvidence {
    pub pattern_id: String,
    pub construct_id: String,
    pub satisfied_conditions: Vec<String>,
    pub bound_variables: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KgFile {
    schema_version: String,
    version: String,
    patterns: Vec<BugPattern>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnowledgeGraph {
    pub version: String,
    /// Sorted by id.
    pub patterns: Vec<BugPattern>,
    index: BTreeMap<ConstructKind, Vec<usize>>,
}

impl KnowledgeGraph {
    pub fn new(version: impl Into<String>, mut patterns: Vec<BugPattern>) -> Result<Self, KgError> {
        patterns.sort_by(|a, b| a.id.cmp(&b.id));
        for w in patterns.windows(2) {
            if w[0].id == w[1].id {
                return Err(KgError::DuplicatePatternId(w[0].id.clone()));
            }
        }
        for p in &patterns {
            if p.id.trim().is_empty() {
                return Err(KgError::SchemaViolation("pattern with empty id".into()));
            }
            if p.construct_kinds.is_empty() {
                return Err(KgError::SchemaViolation(format!("{}: construct_kinds is empty", p.id)));
            }
            if p.test_type.trim().is_empty() {
                return Err(KgError::SchemaViolation(format!("{}: test_type is empty", p.id)));
            }
        }
        let mut index: BTreeMap<ConstructKind, Vec<usize>> = BTreeMap::new();
        for (i, p) in patterns.iter().enumerate() {
            for k in &p.construct_kinds {
                index.entry(*k).or_default().push(i);
            }
        }
        Ok(Self {
            version: version.into(),
            patterns,
            index,
        })
    }

    pub fn from_json_str(s: &str) -> Result<Self, KgError> {
        let file: KgFile = serde_json::from_str(s).map_err(|e| KgError::SchemaViolation(e.to_string()))?;
        if file.schema_version != KG_SCHEMA_VERSION {
            return Err(KgError::SchemaViolation(format!(
                "schema_version {:?}, expected {KG_SCHEMA_VERSION:?}",
                file.schema_version
            )));
        }
        Self::new(file.version, file.patterns)
    }

    pub fn seed() -> Self {
        Self::from_json_str(SEED_KG_JSON).expect("seed knowledge graph is valid")
    }

    pub fn to_json(&self) -> String {
        let file = KgFile {
            schema_version: KG_SCHEMA_VERSION.into(),
            version: self.version.clone(),
            patterns: self.patterns.clone(),
        };
        serde_json::to_string_pretty(&file).expect("kg serializes")
    }

    pub fn pattern(&self, id: &str) -> Option<&BugPattern> {
        self.patterns
            .binary_search_by(|p| p.id.as_str().cmp(id))
            .ok()
            .map(|i| &self.patterns[i])
    }

    /// Patterns applicable to `kind`, in id order.
    pub fn query(&self, kind: ConstructKind) -> Vec<&BugPattern> {
        self.index
            .get(&kind)
            .map(|ix| ix.iter().map(|&i| &self.patterns[i]).collect())
            .unwrap_or_default()
    }
}

pub fn load_kg(path: &Path) -> Result<KnowledgeGraph, KgError> {
    let text = std::fs::read_to_string(path).map_err(|source| KgError::Io {
        path: path.display().to_string(),
        source,
    })?;
    KnowledgeGraph::from_json_str(&text)
}

fn siblings<'a>(
    construct: &'a ParallelConstruct,
    metadata: &'a AnalysisMetadata,
) -> impl Iterator<Item = &'a ParallelConstruct> + 'a {
    metadata.constructs.iter().filter(move |c| {
        c.id != construct.id
            && construct.enclosing_function.is_some()
            && c.enclosing_function == construct.enclosing_function
    })
}

/// Evaluate one condition; `Some(bindings)` when it holds.
pub fn eval_condition(
    cond: &Condition,
    construct: &ParallelConstruct,
    metadata: &AnalysisMetadata,
) -> Option<Vec<(String, String)>> {
    let pos = |c: &ParallelConstruct| (c.location.line, c.location.col);
    match cond {
        Condition::FlagsInclude { flags } => flags.is_subset(&construct.context_flags).then(Vec::new),
        Condition::FlagsExclude { flags } => flags.is_disjoint(&construct.context_flags).then(Vec::new),
        Condition::HasClause { clause } => construct
            .clauses
            .iter()
            .find(|c| &c.name == clause)
            .map(|c| vec![(clause.clone(), c.argument.clone().unwrap_or_default())]),
        Condition::LacksClause { clause } => (!construct.has_clause(clause)).then(Vec::new),
        Condition::Sibling {
            kinds,
            order,
            present,
            flags_exclude,
        } => {
            let found = siblings(construct, metadata).find(|c| {
                kinds.contains(&c.kind)
                    && c.context_flags.is_disjoint(flags_exclude)
                    && match order {
                        SiblingOrder::Before => pos(c) < pos(construct),
                        SiblingOrder::After => pos(c) > pos(construct),
                        SiblingOrder::Any => true,
                    }
            });
            match (found, present) {
                (Some(c), true) => Some(vec![("partner_construct".into(), c.id.clone())]),
                (None, false) => Some(Vec::new()),
                _ => None,
            }
        }
        Condition::DataFlow {
            sharing_in,
            guard,
            access,
            exclusive_writer,
        } => metadata
            .facts_for(&construct.id)
            .find(|f| {
                (sharing_in.is_empty() || sharing_in.contains(&f.sharing))
                    && guard.is_none_or(|g| f.guarded_by.contains(&g))
                    && access.holds(f)
                    && exclusive_writer.is_none_or(|e| f.exclusive_writer == e)
            })
            .map(|f| vec![("variable".into(), f.variable.clone())]),
    }
}

/// Evidence iff `construct` has an applicable kind and every atom holds.
pub fn match_pattern(
    pattern: &BugPattern,
    construct: &ParallelConstruct,
    metadata: &AnalysisMetadata,
) -> Option<MatchEvidence> {
    if !pattern.construct_kinds.contains(&construct.kind) {
        return None;
    }
    let mut satisfied = Vec::with_capacity(pattern.predicate.all.len() + 1);
    satisfied.push(format!("construct kind {} ∈ construct_kinds", construct.kind));
    let mut bound = BTreeMap::new();
    for cond in &pattern.predicate.all {
        let binds = eval_condition(cond, construct, metadata)?;
        satisfied.push(cond.describe());
        for (k, v) in binds {
            bound.entry(k).or_insert(v);
        }
    }
    Some(MatchEvidence {
        pattern_id: pattern.id.clone(),
        construct_id: construct.id.clone(),
        satisfied_conditions: satisfied,
        bound_variables: bound,
    })
}
