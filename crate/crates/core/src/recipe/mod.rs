//! Test recipes: structured test plans derived from KG matches.

pub mod registry;
pub mod rules;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analyzer::{AnalysisMetadata, FunctionInfo, ParallelConstruct, TestingArea};
use crate::critique::CritiqueReport;
use crate::kg::{KnowledgeGraph, Severity};

pub use registry::{ConditionRegistry, ConditionSpec, ValueType};
pub use rules::{rule_for, rule_table, AssertionKind, RecipeRule, TemplateFamily};

pub const RECIPE_SCHEMA_VERSION: &str = "hpct.recipes/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ConditionValue {
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
}

impl ConditionValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            ConditionValue::Int(i) => Some(*i as f64),
            ConditionValue::Float(f) => Some(*f),
            _ => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self {
            ConditionValue::Int(i) => Some(*i),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            ConditionValue::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            ConditionValue::Str(s) => Some(s),
            _ => None,
        }
    }
}

impl fmt::Display for ConditionValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConditionValue::Bool(b) => write!(f, "{b}"),
            ConditionValue::Int(i) => write!(f, "{i}"),
            ConditionValue::Float(x) => write!(f, "{x:?}"),
            ConditionValue::Str(s) => write!(f, "{s:?}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NoteSource {
    Analyzer,
    #[serde(rename = "KG_Pattern")]
    KgPattern,
    #[serde(rename = "Constraint_DB")]
    ConstraintDb,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JustificationNote {
    pub source: NoteSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule_id: Option<String>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestRecipe {
    pub test_id: String,
    pub target_construct: String,
    pub test_type: String,
    pub conditions: BTreeMap<String, ConditionValue>,
    pub expected_behavior_under_test: String,
    pub justification_notes: Vec<JustificationNote>,
    pub suggested_assertion_method: String,
    #[serde(default = "default_priority")]
    pub priority: Severity,
    /// Name of the function that contains the target construct.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_function: Option<String>,
    /// Construct ids the recipe targets (the primary construct first).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub construct_ids: Vec<String>,
}

fn default_priority() -> Severity {
    Severity::Info
}

impl TestRecipe {
    pub fn condition(&self, key: &str) -> Option<&ConditionValue> {
        self.conditions.get(key)
    }

    pub fn int(&self, key: &str) -> Option<i64> {
        self.conditions.get(key).and_then(ConditionValue::as_i64)
    }

    pub fn flag(&self, key: &str) -> bool {
        self.conditions.get(key).and_then(ConditionValue::as_bool).unwrap_or(false)
    }

    /// Id without any `.r<k>` revision suffix.
    pub fn base_id(&self) -> &str {
        split_revision(&self.test_id).0
    }

    pub fn revision(&self) -> u32 {
        split_revision(&self.test_id).1
    }

    /// A pass-through target produced in no-recipe mode.
    pub fn is_bare(&self) -> bool {
        self.test_id.starts_with("TARGET_")
    }

    pub fn kg_pattern_id(&self) -> Option<&str> {
        self.justification_notes
            .iter()
            .find(|n| n.source == NoteSource::KgPattern)
            .and_then(|n| n.id.as_deref())
    }
}

fn split_revision(id: &str) -> (&str, u32) {
    if let Some((base, rev)) = id.rsplit_once(".r") {
        if let Ok(k) = rev.parse() {
            return (base, k);
        }
    }
    (id, 0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecipeConfig {
    pub registry: ConditionRegistry,
    /// Emit bare targets instead of recipes.
    pub no_recipe: bool,
    /// Copied into every recipe's conditions when set.
    pub runtime_version_hint: Option<String>,
}

impl Default for RecipeConfig {
    fn default() -> Self {
        Self {
            registry: ConditionRegistry::default(),
            no_recipe: false,
            runtime_version_hint: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RecipeSet {
    pub schema_version: String,
    pub source: String,
    pub recipes: Vec<TestRecipe>,
    /// Areas that could not be turned into recipes.
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "directive", rename_all = "snake_case")]
pub enum RefinementDirective {
    SetCondition { key: String, value: ConditionValue },
    RemoveCondition { key: String },
    /// Split the assertion method into an additional explicit check.
    AddAssertion { text: String },
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("unresolvable critique for {}: {reason}", recipe.test_id)]
pub struct UnresolvableCritique {
    /// The recipe, unchanged.
    pub recipe: TestRecipe,
    pub reason: String,
    pub escalation_hint: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

fn id_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^(RECIPE|TARGET)_[A-Z0-9]+(_[A-Z0-9]+)*_\d{3}(\.r\d+)?$").expect("static regex"))
}

/// Check id format, condition keys/types/ranges and justification presence.
pub fn validate_recipe(recipe: &TestRecipe, registry: &ConditionRegistry) -> Result<(), Vec<Violation>> {
    let mut v = Vec::new();
    let mut push = |field: &str, message: String| {
        v.push(Violation {
            field: field.to_string(),
            message,
        })
    };
    if !id_re().is_match(&recipe.test_id) {
        push("test_id", format!("`{}` does not match RECIPE_<TYPE>_<NNN>", recipe.test_id));
    }
    if recipe.test_type.trim().is_empty() {
        push("test_type", "must not be empty".into());
    }
    if recipe.target_construct.trim().is_empty() {
        push("target_construct", "must not be empty".into());
    }
    for (key, value) in &recipe.conditions {
        if let Err(m) = registry.check(&recipe.test_type, key, value) {
            push(&format!("conditions.{key}"), m);
        }
    }
    if !recipe
        .justification_notes
        .iter()
        .any(|n| matches!(n.source, NoteSource::KgPattern | NoteSource::Analyzer))
    {
        push("justification_notes", "needs a KG_Pattern or Analyzer note".into());
    }
    if v.is_empty() {
        Ok(())
    } else {
        Err(v)
    }
}

fn function_of<'a>(metadata: &'a AnalysisMetadata, c: &ParallelConstruct) -> Option<&'a FunctionInfo> {
    c.enclosing_function.as_deref().and_then(|id| metadata.function(id))
}

/// `T name(T* data, int n)` whose name mentions a sum: its value over the
/// input 1..n has the closed form n(n+1)/2.
fn is_sum_shaped(f: &FunctionInfo) -> bool {
    let ret = f.return_type_text.replace("const", "");
    let ret = ret.trim();
    f.name.to_ascii_lowercase().contains("sum")
        && matches!(ret, "double" | "float" | "long double")
        && f.parameter_texts.len() == 2
        && f.parameter_texts[0].contains('*')
        && !f.parameter_texts[1].contains('*')
}

fn sorted_areas(metadata: &AnalysisMetadata) -> Vec<(&TestingArea, &ParallelConstruct)> {
    let mut areas: Vec<_> = metadata
        .testing_areas
        .iter()
        .filter_map(|a| metadata.construct(&a.construct_id).map(|c| (a, c)))
        .collect();
    areas.sort_by(|(a, ca), (b, cb)| {
        b.severity
            .cmp(&a.severity)
            .then(ca.location.line.cmp(&cb.location.line))
            .then(ca.location.col.cmp(&cb.location.col))
            .then(a.pattern_id.cmp(&b.pattern_id))
    });
    areas
}

fn targets(metadata: &AnalysisMetadata, area: &TestingArea, c: &ParallelConstruct) -> (String, Vec<String>) {
    let mut label = c.label();
    let mut ids = vec![c.id.clone()];
    if let Some(p) = area
        .evidence
        .bound_variables
        .get("partner_construct")
        .and_then(|id| metadata.construct(id))
    {
        label = format!("{label}_{}", p.label());
        ids.push(p.id.clone());
    }
    (label, ids)
}

fn analyzer_detail(metadata: &AnalysisMetadata, area: &TestingArea, c: &ParallelConstruct) -> String {
    let what = if c.is_mpi_call() {
        c.name.clone()
    } else {
        format!("#pragma omp {}", c.name)
    };
    let mut s = format!("Identified {what} at line {}", c.location.line);
    if let Some(f) = function_of(metadata, c) {
        s.push_str(&format!(" in {}", f.name));
    }
    let bound: Vec<_> = area
        .evidence
        .bound_variables
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect();
    if !bound.is_empty() {
        s.push_str(&format!(" ({})", bound.join(", ")));
    }
    s.push_str(&format!("; {}.", area.evidence.satisfied_conditions[1..].join("; ")));
    s
}

/// One recipe per testing area, ordered by (severity desc, line asc) and
/// numbered per test type. Areas whose test type has no rule are skipped
/// with a warning.
pub fn generate_recipes(metadata: &AnalysisMetadata, kg: &KnowledgeGraph, config: &RecipeConfig) -> RecipeSet {
    let mut set = RecipeSet {
        schema_version: RECIPE_SCHEMA_VERSION.into(),
        source: metadata.source.path.clone(),
        ..Default::default()
    };
    if config.no_recipe {
        set.recipes = bare_targets(metadata);
        return set;
    }
    let registry = &config.registry;
    let mut counters: BTreeMap<&str, usize> = BTreeMap::new();
    for (area, c) in sorted_areas(metadata) {
        if kg.pattern(&area.pattern_id).is_none() {
            set.warnings.push(format!("{}: pattern {} not in knowledge graph", area.construct_id, area.pattern_id));
            continue;
        }
        let Some(rule) = rule_for(&area.test_type) else {
            log::warn!("no recipe rule for test type {}", area.test_type);
            set.warnings.push(format!(
                "UnknownTestType({}) for pattern {} on {}",
                area.test_type, area.pattern_id, area.construct_id
            ));
            continue;
        };
        let n = counters.entry(rule.tag).or_insert(0);
        *n += 1;
        let (target_construct, construct_ids) = targets(metadata, area, c);
        let func = function_of(metadata, c);

        let mut conditions: BTreeMap<String, ConditionValue> =
            rule.defaults.iter().map(|(k, v)| (k.to_string(), v.clone())).collect();
        if rule.tag == "OMP_RACE" && func.is_some_and(is_sum_shaped) {
            if let Some(size) = conditions.get("input_size").and_then(ConditionValue::as_i64) {
                let size = size as f64;
                conditions.insert("expected_value".into(), ConditionValue::Float(size * (size + 1.0) / 2.0));
            }
        }
        if let Some(h) = &config.runtime_version_hint {
            conditions.insert("runtime_version_hint".into(), ConditionValue::Str(h.clone()));
        }

        let mut notes = vec![
            JustificationNote {
                source: NoteSource::Analyzer,
                id: Some(c.id.clone()),
                rule_id: None,
                detail: analyzer_detail(metadata, area, c),
            },
            JustificationNote {
                source: NoteSource::KgPattern,
                id: Some(area.pattern_id.clone()),
                rule_id: None,
                detail: area.description.clone(),
            },
        ];
        let mut rules_cited = BTreeSet::new();
        for key in conditions.keys() {
            if let Some(spec) = registry.get(key) {
                if rules_cited.insert(spec.rule_id.clone()) {
                    notes.push(JustificationNote {
                        source: NoteSource::ConstraintDb,
                        id: None,
                        rule_id: Some(spec.rule_id.clone()),
                        detail: spec.description.clone(),
                    });
                }
            }
        }

        set.recipes.push(TestRecipe {
            test_id: format!("RECIPE_{}_{:03}", rule.tag, n),
            target_construct,
            test_type: area.test_type.clone(),
            conditions,
            expected_behavior_under_test: rule.expected_behavior.to_string(),
            justification_notes: notes,
            suggested_assertion_method: rule.assertion_method.to_string(),
            priority: area.severity,
            target_function: func.map(|f| f.name.clone()),
            construct_ids,
        });
    }
    set
}

/// No-recipe mode: construct id and test type only.
pub fn bare_targets(metadata: &AnalysisMetadata) -> Vec<TestRecipe> {
    let mut counters: BTreeMap<String, usize> = BTreeMap::new();
    sorted_areas(metadata)
        .into_iter()
        .map(|(area, c)| {
            let tag = rule_for(&area.test_type)
                .map(|r| r.tag.to_string())
                .unwrap_or_else(|| "UNKNOWN".into());
            let n = counters.entry(tag.clone()).or_insert(0);
            *n += 1;
            TestRecipe {
                test_id: format!("TARGET_{tag}_{:03}", n),
                target_construct: c.label(),
                test_type: area.test_type.clone(),
                conditions: BTreeMap::new(),
                expected_behavior_under_test: String::new(),
                justification_notes: vec![JustificationNote {
                    source: NoteSource::Analyzer,
                    id: Some(c.id.clone()),
                    rule_id: None,
                    detail: format!("construct {}", c.id),
                }],
                suggested_assertion_method: String::new(),
                priority: area.severity,
                target_function: function_of(metadata, c).map(|f| f.name.clone()),
                construct_ids: vec![c.id.clone()],
            }
        })
        .collect()
}

/// Apply a critique's refinement directives. An empty directive list returns
/// the recipe unchanged; otherwise the id gains the next `.r<k>` suffix.
pub fn refine_recipe(
    recipe: &TestRecipe,
    critique: &CritiqueReport,
    registry: &ConditionRegistry,
) -> Result<TestRecipe, UnresolvableCritique> {
    let fail = |reason: String| UnresolvableCritique {
        recipe: recipe.clone(),
        reason,
        escalation_hint: "escalate for human review with the critique history".into(),
    };
    if split_revision(&critique.recipe_id).0 != recipe.base_id() {
        return Err(fail(format!("critique targets {}", critique.recipe_id)));
    }
    if critique.refinement.is_empty() {
        return Ok(recipe.clone());
    }
    let mut out = recipe.clone();
    for d in &critique.refinement {
        match d {
            RefinementDirective::SetCondition { key, value } => {
                registry
                    .check(&recipe.test_type, key, value)
                    .map_err(|m| fail(format!("cannot set {key}: {m}")))?;
                out.conditions.insert(key.clone(), value.clone());
            }
            RefinementDirective::RemoveCondition { key } => {
                if rule_for(&recipe.test_type).is_some_and(|r| r.defaults.iter().any(|(k, _)| k == key)) {
                    return Err(fail(format!("{key} is required for {}", recipe.test_type)));
                }
                out.conditions.remove(key);
            }
            RefinementDirective::AddAssertion { text } => {
                if !out.suggested_assertion_method.contains(text.as_str()) {
                    out.suggested_assertion_method = format!("{} {}", out.suggested_assertion_method, text)
                        .trim()
                        .to_string();
                }
            }
        }
    }
    out.test_id = format!("{}.r{}", recipe.base_id(), recipe.revision() + 1);
    Ok(out)
}
