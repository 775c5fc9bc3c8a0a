//! Deterministic test-program templates, one per [`TemplateFamily`].

use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;

use super::binder::{bind_call, BindModel, BoundCall};
use super::{AssertionDescriptor, RankScope, SynthError, SynthParams, HEADER};
use crate::analyzer::{FunctionInfo, SourceUnit};
use crate::recipe::{rule_for, AssertionKind, ConditionValue, TemplateFamily, TestRecipe};

pub const BEGIN_MARKER: &str = "// ---- begin code under test ----";
pub const END_MARKER: &str = "// ---- end code under test ----";
const LINE_PLACEHOLDER: &str = "@@HPCT_RESUME_LINE@@";

const COLLECTIVES: &[&str] = &[
    "MPI_Bcast", "MPI_Scatter", "MPI_Gather", "MPI_Reduce", "MPI_Barrier", "MPI_Allreduce", "MPI_Allgather",
];

const PREAMBLE: &str = "\
// Generated test {{test_id}} ({{backend}} backend)
// test_type: {{test_type}}
// target: {{target}}
// conditions: {{conditions}}
// expected behaviour: {{expected}}
";

const MPI_COMPLETION: &str = "\
#include <mpi.h>
#include <vector>
#define HPCT_USE_MPI 1
{{header}}
{{code}}
int main(int argc, char** argv) {
    MPI_Init(&argc, &argv);
    MPI_Comm_rank(MPI_COMM_WORLD, &hpct_rank);
    MPI_Comm_size(MPI_COMM_WORLD, &hpct_size);
    HPCT_REQUIRE_PROCS({{num_processes}});
    const int hpct_n = {{input_size}};
    (void)hpct_n;
{{setup}}{{notes}}    HPCT_ASSERT_COMPLETES({{timeout}}, {{call}});
    int hpct_status = hpct_mpi_status();
    MPI_Finalize();
    return hpct_status;
}
";

const MPI_COLLECTIVE: &str = "\
#include <mpi.h>
#include <vector>
#define HPCT_USE_MPI 1
{{header}}
{{code}}
int main(int argc, char** argv) {
    MPI_Init(&argc, &argv);
    MPI_Comm_rank(MPI_COMM_WORLD, &hpct_rank);
    MPI_Comm_size(MPI_COMM_WORLD, &hpct_size);
    HPCT_REQUIRE_PROCS({{num_processes}});
    const int hpct_n = {{input_size}};
    (void)hpct_n;
{{setup}}    HPCT_ASSERT_COMPLETES({{timeout}}, {{call}});
    // every rank must have entered the same number of collectives
    int hpct_calls_min = 0, hpct_calls_max = 0;
    HPCT_ASSERT_COMPLETES({{timeout}},
        MPI_Allreduce(&hpct_collective_calls, &hpct_calls_min, 1, MPI_INT, MPI_MIN, MPI_COMM_WORLD);
        MPI_Allreduce(&hpct_collective_calls, &hpct_calls_max, 1, MPI_INT, MPI_MAX, MPI_COMM_WORLD));
{{rank_assertions}}    int hpct_status = hpct_mpi_status();
    MPI_Finalize();
    return hpct_status;
}
";

const MPI_INIT_FINALIZE: &str = "\
#include <mpi.h>
#include <vector>
#define HPCT_USE_MPI 1
{{header}}
{{code}}
int main(int argc, char** argv) {
    MPI_Init(&argc, &argv);
    MPI_Comm_rank(MPI_COMM_WORLD, &hpct_rank);
    MPI_Comm_size(MPI_COMM_WORLD, &hpct_size);
    HPCT_REQUIRE_PROCS({{num_processes}});
    const int hpct_n = {{input_size}};
    (void)hpct_n;
{{setup}}    HPCT_ASSERT_COMPLETES({{timeout}}, {{call}});
    HPCT_ASSERT_EQ(hpct_init_calls, 1);
    HPCT_ASSERT_EQ(hpct_finalize_calls, 1);
    int hpct_status = hpct_mpi_status();
    MPI_Finalize();
    return hpct_status;
}
";

const OMP_CONSISTENCY: &str = "\
#include <omp.h>
#include <vector>
{{header}}
{{code}}
static double hpct_observe(int hpct_n) {
{{setup}}    double hpct_value = 0.0;
{{invoke}}{{observe}}    return hpct_value;
}

int main() {
    const int hpct_n = {{input_size}};
    const int hpct_reps = {{repetitions}};
{{reference}}    omp_set_num_threads({{num_threads}});
{{schedules}}    int hpct_mismatches = 0;
    HPCT_ASSERT_COMPLETES({{timeout}},
        for (int hpct_rep = 0; hpct_rep < {{repetitions}}; ++hpct_rep) {
{{schedule_set}}            double hpct_got = hpct_observe(hpct_n);
            if (!hpct_close(hpct_got, hpct_expected)) {
                ++hpct_mismatches;
            }
        });
    std::printf(\"[hpct] %d/%d repetitions consistent\\n\", hpct_reps - hpct_mismatches, hpct_reps);
    HPCT_ASSERT_EQ(hpct_mismatches, 0);
    return hpct_result();
}
";

/// Replace every `{{key}}`; unknown keys are an error so nothing leaks.
pub fn substitute(template: &str, vars: &BTreeMap<&str, String>) -> Result<String, SynthError> {
    let mut out = String::with_capacity(template.len() * 2);
    let mut rest = template;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let end = after
            .find("}}")
            .ok_or_else(|| SynthError::MissingCondition("unterminated placeholder".into()))?;
        let key = &after[..end];
        let value = vars.get(key).ok_or_else(|| SynthError::MissingCondition(key.to_string()))?;
        out.push_str(value);
        rest = &after[end + 2..];
    }
    out.push_str(rest);
    Ok(out)
}

fn schedule_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"schedule\s*\([^()]*\)").expect("static regex"))
}

/// Defines/undefines wrapped around the embedded source.
#[derive(Debug, Clone, Default)]
pub struct Embedding {
    pub defines: Vec<(String, String)>,
    /// Rewrite `schedule(...)` clauses to `schedule(runtime)`.
    pub runtime_schedule: bool,
}

/// The embedded code-under-test block. `#line` directives keep diagnostics
/// and coverage attributed to the original file.
pub fn embed_code(unit: &SourceUnit, embedding: &Embedding) -> String {
    let mut s = String::new();
    s.push_str(BEGIN_MARKER);
    s.push('\n');
    for (name, value) in &embedding.defines {
        s.push_str(&format!("#define {name} {value}\n"));
    }
    let path = unit.path.replace('\\', "\\\\").replace('"', "\\\"");
    s.push_str(&format!("#line 1 \"{path}\"\n"));
    let mut text = unit.text.clone();
    if embedding.runtime_schedule {
        text = text
            .lines()
            .map(|l| {
                if l.trim_start().starts_with('#') && l.contains("omp") {
                    schedule_re().replace_all(l, "schedule(runtime)").into_owned()
                } else {
                    l.to_string()
                }
            })
            .collect::<Vec<_>>()
            .join("\n");
    }
    s.push_str(&text);
    if !text.ends_with('\n') {
        s.push('\n');
    }
    s.push_str(&format!("#line {LINE_PLACEHOLDER}\n"));
    for (name, _) in embedding.defines.iter().rev() {
        let bare = name.split('(').next().unwrap_or(name);
        s.push_str(&format!("#undef {bare}\n"));
    }
    s.push_str(END_MARKER);
    s.push('\n');
    s
}

/// Resolve the `#line` placeholder now that the final layout is known.
pub fn finalize_lines(text: &str, file_name: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for (i, line) in text.lines().enumerate() {
        if line.contains(LINE_PLACEHOLDER) {
            out.push_str(&format!("#line {} \"{file_name}\"", i + 2));
        } else {
            out.push_str(line);
        }
        out.push('\n');
    }
    out
}

/// Text outside the code-under-test block.
pub fn scaffold_of(text: &str) -> String {
    match (text.find(BEGIN_MARKER), text.find(END_MARKER)) {
        (Some(a), Some(b)) if a < b => {
            // keep line structure so scaffold line numbers match the test file
            let blanked: String = text[a..b + END_MARKER.len()]
                .chars()
                .map(|c| if c == '\n' { '\n' } else { ' ' })
                .collect();
            format!("{}{}{}", &text[..a], blanked, &text[b + END_MARKER.len()..])
        }
        _ => text.to_string(),
    }
}

fn fmt_float(x: f64) -> String {
    let s = format!("{x:?}");
    if s.contains('.') || s.contains('e') {
        s
    } else {
        format!("{s}.0")
    }
}

fn conditions_line(recipe: &TestRecipe) -> String {
    if recipe.conditions.is_empty() {
        return "(none)".into();
    }
    recipe
        .conditions
        .iter()
        .map(|(k, v)| format!("{k}={}", v.to_string().trim_matches('"')))
        .collect::<Vec<_>>()
        .join(" ")
}

fn indent(lines: &[String], depth: usize) -> String {
    let pad = " ".repeat(depth);
    lines.iter().map(|l| format!("{pad}{l}\n")).collect()
}

/// Condition lookup that falls back to the rule defaults only for bare
/// targets; full recipes must carry every key their template needs.
struct Conds<'a> {
    recipe: &'a TestRecipe,
    defaults: BTreeMap<String, ConditionValue>,
}

impl Conds<'_> {
    fn get(&self, key: &str) -> Option<&ConditionValue> {
        self.recipe.conditions.get(key).or_else(|| {
            if self.recipe.is_bare() {
                self.defaults.get(key)
            } else {
                None
            }
        })
    }

    fn int(&self, key: &str) -> Result<i64, SynthError> {
        self.get(key)
            .and_then(ConditionValue::as_i64)
            .ok_or_else(|| SynthError::MissingCondition(key.to_string()))
    }

    fn flag(&self, key: &str) -> bool {
        self.get(key).and_then(ConditionValue::as_bool).unwrap_or(false)
    }
}

pub struct Rendered {
    pub text: String,
    pub assertions: Vec<AssertionDescriptor>,
    pub num_processes: Option<u32>,
    pub num_threads: Option<u32>,
    pub timeout_seconds: f64,
}

/// Whether the function body already creates a thread team.
fn creates_team(unit: &SourceUnit, f: &FunctionInfo) -> bool {
    unit.text
        .lines()
        .enumerate()
        .filter(|(i, _)| {
            let line = *i as u32 + 1;
            line >= f.body_span.0 && line <= f.body_span.1
        })
        .any(|(_, l)| {
            let t = l.trim_start();
            t.starts_with('#') && t.contains("omp") && t.contains("parallel")
        })
}

pub fn render_template(
    recipe: &TestRecipe,
    unit: &SourceUnit,
    function: &FunctionInfo,
    params: &SynthParams,
    file_name: &str,
) -> Result<Rendered, SynthError> {
    let rule = rule_for(&recipe.test_type).ok_or_else(|| SynthError::NoTemplateForTestType(recipe.test_type.clone()))?;
    let conds = Conds {
        recipe,
        defaults: rule.defaults.iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
    };
    let family = rule.template;
    let timeout = recipe
        .condition("timeout_seconds")
        .and_then(ConditionValue::as_f64)
        .unwrap_or(if family.is_mpi() { params.timeout_seconds } else { params.omp_timeout_seconds });

    let mut vars: BTreeMap<&str, String> = BTreeMap::new();
    vars.insert("test_id", recipe.test_id.clone());
    vars.insert("backend", "template".into());
    vars.insert("test_type", recipe.test_type.clone());
    vars.insert("target", recipe.target_construct.clone());
    vars.insert("conditions", conditions_line(recipe));
    let expected = if recipe.expected_behavior_under_test.is_empty() {
        rule.expected_behavior.to_string()
    } else {
        recipe.expected_behavior_under_test.clone()
    };
    vars.insert("expected", expected.split_whitespace().collect::<Vec<_>>().join(" "));
    vars.insert("header", HEADER.trim_end().to_string());
    vars.insert("timeout", fmt_float(timeout));

    let mut embedding = Embedding::default();
    embedding.defines.push(("main".into(), "hpct_target_main".into()));
    let mut assertions = Vec::new();
    let (body, num_processes, num_threads) = if family.is_mpi() {
        let nprocs = conds.int("num_processes")?;
        let input_size = conds
            .get("input_size")
            .and_then(ConditionValue::as_i64)
            .unwrap_or(params.mpi_input_size as i64);
        vars.insert("num_processes", nprocs.to_string());
        vars.insert("input_size", input_size.to_string());
        let bound: BoundCall = bind_call(function, BindModel::Mpi, "hpct_n");
        vars.insert("setup", indent(&bound.setup, 4));
        vars.insert("call", bound.call.clone());
        embedding.defines.push(("MPI_Init".into(), "hpct_shim_MPI_Init".into()));
        embedding.defines.push(("MPI_Finalize".into(), "hpct_shim_MPI_Finalize".into()));
        let template = match family {
            TemplateFamily::MpiCompletion => {
                let mut notes = Vec::new();
                if conds.get("rank0_send_first").is_some() || conds.get("rank1_recv_first").is_some() {
                    notes.push(format!(
                        "// ordering under test: rank0_send_first={}, rank1_recv_first={}",
                        conds.flag("rank0_send_first"),
                        conds.flag("rank1_recv_first")
                    ));
                    notes.push(
                        "// MPI_Send is synchronous here so eager buffering cannot mask the ordering".to_string(),
                    );
                    embedding.defines.push(("MPI_Send".into(), "MPI_Ssend".into()));
                }
                vars.insert("notes", indent(&notes, 4));
                assertions.push(AssertionDescriptor {
                    kind: AssertionKind::Completion,
                    rank_scope: RankScope::All,
                    expected: format!("completes within {} s", fmt_float(timeout)),
                });
                MPI_COMPLETION
            }
            TemplateFamily::MpiCollective => {
                for name in COLLECTIVES {
                    embedding.defines.push((
                        format!("{name}(...)"),
                        format!("(++hpct_collective_calls, P{name}(__VA_ARGS__))"),
                    ));
                }
                let ranks: Vec<i64> = if conds.flag("assert_on_all_ranks") {
                    (0..nprocs).collect()
                } else {
                    vec![0]
                };
                let lines: Vec<String> = ranks
                    .iter()
                    .map(|r| {
                        format!("HPCT_ASSERT_ON_RANK({r}, hpct_collective_calls > 0 && hpct_calls_min == hpct_calls_max);")
                    })
                    .collect();
                vars.insert("rank_assertions", indent(&lines, 4));
                assertions.push(AssertionDescriptor {
                    kind: AssertionKind::Completion,
                    rank_scope: RankScope::All,
                    expected: format!("completes within {} s", fmt_float(timeout)),
                });
                for r in ranks {
                    assertions.push(AssertionDescriptor {
                        kind: AssertionKind::CompletionAllRanks,
                        rank_scope: RankScope::Rank(r as u32),
                        expected: "equal collective participation on every rank".into(),
                    });
                }
                MPI_COLLECTIVE
            }
            TemplateFamily::MpiInitFinalize => {
                assertions.push(AssertionDescriptor {
                    kind: AssertionKind::CallPairing,
                    rank_scope: RankScope::All,
                    expected: "hpct_init_calls == 1 && hpct_finalize_calls == 1".into(),
                });
                MPI_INIT_FINALIZE
            }
            TemplateFamily::OmpConsistency => unreachable!("not an MPI family"),
        };
        (template, Some(nprocs as u32), None)
    } else {
        let threads = conds.int("num_threads")?;
        let reps = conds.int("repetitions")?;
        let input_size = conds.int("input_size")?;
        vars.insert("num_threads", threads.to_string());
        vars.insert("repetitions", reps.to_string());
        vars.insert("input_size", input_size.to_string());
        let bound = bind_call(function, BindModel::OpenMp, "hpct_n");
        vars.insert("setup", indent(&bound.setup, 4));
        let call = if bound.returns_value {
            format!("hpct_ret = (double){};", bound.call)
        } else {
            format!("{};", bound.call)
        };
        let invoke = if creates_team(unit, function) {
            vec!["double hpct_ret = 0.0;".to_string(), call, "hpct_value += hpct_ret;".into()]
        } else {
            // tasks and orphaned directives need an enclosing team
            vec![
                "double hpct_ret = 0.0;".to_string(),
                "#pragma omp parallel".into(),
                "{".into(),
                "    #pragma omp single".into(),
                format!("    {{ {call} }}"),
                "}".into(),
                "hpct_value += hpct_ret;".into(),
            ]
        };
        vars.insert("invoke", indent(&invoke, 4));
        let observe: Vec<String> = bound
            .observed_buffers
            .iter()
            .map(|b| format!("for (const auto& hpct_x : {b}) hpct_value += (double)hpct_x;"))
            .collect();
        vars.insert("observe", indent(&observe, 4));

        let expected_value = conds.get("expected_value").and_then(ConditionValue::as_f64);
        let expected = match expected_value {
            Some(v) => vec![format!("const double hpct_expected = {};", fmt_float(v))],
            None => vec![
                "// sequential reference".to_string(),
                "double hpct_expected = 0.0;".into(),
                "omp_set_num_threads(1);".into(),
                format!("HPCT_ASSERT_COMPLETES({}, hpct_expected = hpct_observe(hpct_n));", fmt_float(timeout)),
            ],
        };
        vars.insert("reference", indent(&expected, 4));

        let schedules: Vec<&str> = conds
            .get("schedule")
            .and_then(ConditionValue::as_str)
            .map(|s| s.split(',').map(str::trim).filter(|k| *k != "runtime").collect())
            .unwrap_or_default();
        if schedules.is_empty() {
            vars.insert("schedules", String::new());
            vars.insert("schedule_set", String::new());
        } else {
            embedding.runtime_schedule = true;
            let list: Vec<String> = schedules.iter().map(|k| format!("omp_sched_{k}")).collect();
            vars.insert(
                "schedules",
                indent(&[format!("const omp_sched_t hpct_schedules[] = {{{}}};", list.join(", "))], 4),
            );
            vars.insert(
                "schedule_set",
                indent(&[format!("omp_set_schedule(hpct_schedules[hpct_rep % {}], 0);", schedules.len())], 12),
            );
        }
        assertions.push(AssertionDescriptor {
            kind: AssertionKind::ValueConsistency,
            rank_scope: RankScope::All,
            expected: match expected_value {
                Some(v) => fmt_float(v),
                None => "sequential reference".into(),
            },
        });
        (OMP_CONSISTENCY, None, Some(threads as u32))
    };

    vars.insert("code", embed_code(unit, &embedding));
    let mut text = substitute(PREAMBLE, &vars)?;
    text.push_str(&substitute(body, &vars)?);
    let text = finalize_lines(&text, file_name);
    debug_assert!(!text.contains("{{"));
    Ok(Rendered {
        text,
        assertions,
        num_processes,
        num_threads,
        timeout_seconds: timeout,
    })
}
