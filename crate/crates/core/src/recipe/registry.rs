//! Registry of recipe condition keys. Each key carries a type, a range and
//! the `Constraint_DB` rule id cited in justification notes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ConditionValue;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueType {
    Int,
    Float,
    Bool,
    Str,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSpec {
    pub key: String,
    pub value_type: ValueType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
    /// For string keys: comma-separated items must all be in this list.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub allowed: Vec<String>,
    pub rule_id: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionRegistry {
    pub specs: BTreeMap<String, ConditionSpec>,
    /// Per test type, tighter lower bounds on numeric keys.
    pub minimums: BTreeMap<String, BTreeMap<String, f64>>,
}

fn spec(
    key: &str,
    value_type: ValueType,
    min: Option<f64>,
    max: Option<f64>,
    rule_id: &str,
    description: &str,
) -> (String, ConditionSpec) {
    (
        key.to_string(),
        ConditionSpec {
            key: key.to_string(),
            value_type,
            min,
            max,
            allowed: Vec::new(),
            rule_id: rule_id.to_string(),
            description: description.to_string(),
        },
    )
}

impl Default for ConditionRegistry {
    fn default() -> Self {
        use ValueType::*;
        let mut specs: BTreeMap<String, ConditionSpec> = [
            spec("num_processes", Int, Some(1.0), Some(64.0), "CDR_MPI_PROC_001",
                "Number of MPI processes the test is launched with."),
            spec("num_threads", Int, Some(1.0), Some(256.0), "CDR_OMP_THREADS_001",
                "OpenMP team size requested by the test."),
            spec("rank0_send_first", Bool, None, None, "CDR_MPI_SYNC_003",
                "Rank 0 issues its blocking send before its receive."),
            spec("rank1_recv_first", Bool, None, None, "CDR_MPI_SYNC_003",
                "Rank 1 posts its receive before its send."),
            spec("schedule", Str, None, None, "CDR_OMP_SCHED_002",
                "Loop schedules to exercise (comma-separated)."),
            spec("repetitions", Int, Some(1.0), Some(100_000.0), "CDR_GEN_REPS_001",
                "Number of repeated executions in a consistency loop."),
            spec("input_size", Int, Some(1.0), Some(100_000_000.0), "CDR_GEN_INPUT_001",
                "Length of generated input buffers."),
            spec("expected_value", Float, None, None, "CDR_GEN_EXPECT_001",
                "Closed-form expected result computed at generation time."),
            spec("assert_on_all_ranks", Bool, None, None, "CDR_MPI_ASSERT_004",
                "Assertions are evaluated on every rank, not only the root."),
            spec("timeout_seconds", Float, Some(0.1), Some(3600.0), "CDR_GEN_TIMEOUT_001",
                "Watchdog budget for the code under test."),
            spec("runtime_version_hint", Str, None, None, "CDR_GEN_VERSION_001",
                "Runtime version the behaviour is expected under (informational)."),
        ]
        .into_iter()
        .collect();
        if let Some(s) = specs.get_mut("schedule") {
            s.allowed = ["static", "dynamic", "guided", "auto", "runtime"].map(String::from).to_vec();
        }
        let minimums = [
            ("MPI_Potential_Deadlock_Order_Mismatch", 2.0),
            ("MPI_Conditional_Barrier_Deadlock", 2.0),
            ("MPI_Collective_Partial_Participation", 2.0),
        ]
        .into_iter()
        .map(|(t, n)| (t.to_string(), BTreeMap::from([("num_processes".to_string(), n)])))
        .collect();
        Self { specs, minimums }
    }
}

impl ConditionRegistry {
    pub fn get(&self, key: &str) -> Option<&ConditionSpec> {
        self.specs.get(key)
    }

    pub fn rule_id(&self, key: &str) -> Option<&str> {
        self.specs.get(key).map(|s| s.rule_id.as_str())
    }

    /// Check one value; `Err` describes the violation.
    pub fn check(&self, test_type: &str, key: &str, value: &ConditionValue) -> Result<(), String> {
        let Some(spec) = self.specs.get(key) else {
            return Err(format!("unknown condition key `{key}`"));
        };
        let type_ok = matches!(
            (spec.value_type, value),
            (ValueType::Int, ConditionValue::Int(_))
                | (ValueType::Float, ConditionValue::Float(_) | ConditionValue::Int(_))
                | (ValueType::Bool, ConditionValue::Bool(_))
                | (ValueType::Str, ConditionValue::Str(_))
        );
        if !type_ok {
            return Err(format!("`{key}` must be {:?}, got {value}", spec.value_type).to_lowercase());
        }
        if let Some(x) = value.as_f64() {
            if !x.is_finite() {
                return Err(format!("`{key}` must be finite"));
            }
            let min = self
                .minimums
                .get(test_type)
                .and_then(|m| m.get(key))
                .copied()
                .into_iter()
                .chain(spec.min)
                .fold(None, |acc: Option<f64>, m| Some(acc.map_or(m, |a| a.max(m))));
            if let Some(min) = min {
                if x < min {
                    return Err(format!("`{key}` = {value} is below the minimum {min}"));
                }
            }
            if let Some(max) = spec.max {
                if x > max {
                    return Err(format!("`{key}` = {value} exceeds the maximum {max}"));
                }
            }
        }
        if let (false, ConditionValue::Str(s)) = (spec.allowed.is_empty(), value) {
            for item in s.split(',').map(str::trim) {
                if !spec.allowed.iter().any(|a| a == item) {
                    return Err(format!("`{key}` item `{item}` not in {:?}", spec.allowed));
                }
            }
        }
        Ok(())
    }
}
