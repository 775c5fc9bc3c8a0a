#![allow(dead_code)]

use std::path::{Path, PathBuf};

use hpct_core::analyzer::{analyze_source, AnalysisMetadata, AnalyzerConfig, SourceUnit};
use hpct_core::corpus::{load_corpus, Corpus};
use hpct_core::kg::KnowledgeGraph;
use hpct_core::recipe::{generate_recipes, RecipeConfig, TestRecipe};
use hpct_core::synth::SynthTarget;

pub fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn corpus() -> Corpus {
    load_corpus(&workspace_root().join("corpus/manifest.json")).expect("corpus manifest loads")
}

pub fn fixture(rel: &str) -> PathBuf {
    workspace_root().join("crates/core/tests/fixtures").join(rel)
}

pub fn fixture_text(rel: &str) -> String {
    std::fs::read_to_string(fixture(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

pub fn unit(name: &str) -> SourceUnit {
    let c = corpus();
    let e = c.entry(name).unwrap_or_else(|| panic!("no corpus entry {name}"));
    c.read_unit(e).expect("corpus source reads")
}

pub fn analyze(name: &str) -> AnalysisMetadata {
    analyze_source(&unit(name), &KnowledgeGraph::seed(), &AnalyzerConfig::default()).expect("analysis")
}

/// Recipes and synthesis target for a corpus entry.
pub fn planned(name: &str) -> (Vec<TestRecipe>, SynthTarget) {
    let meta = analyze(name);
    let set = generate_recipes(&meta, &KnowledgeGraph::seed(), &RecipeConfig::default());
    (set.recipes, SynthTarget::new(unit(name), meta))
}

/// Target built from one source but recipes from another (fixed-variant runs).
pub fn target_for(name: &str) -> SynthTarget {
    SynthTarget::new(unit(name), analyze(name))
}

#[derive(Debug, serde::Deserialize)]
pub struct CritiqueCase {
    pub fixture: String,
    pub entry: String,
    pub code: String,
    #[serde(default)]
    pub mode: Option<String>,
}

pub fn critique_cases() -> Vec<CritiqueCase> {
    serde_json::from_str(&fixture_text("critique/cases.json")).expect("cases.json parses")
}

/// All findings the critic raises for a fixture, following the case's mode:
/// direct review, loop (backend failures, resubmissions) or second opinion.
pub fn observe_case(case: &CritiqueCase) -> Vec<hpct_core::critique::CritiqueFinding> {
    use hpct_core::critique::{critique, run_loop, Critic, LlmSecondOpinion, LoopConfig, RuleCritic};
    use hpct_core::llm::ScriptedMock;
    use hpct_core::recipe::ConditionRegistry;
    use hpct_core::synth::{synthesize, Backend, Feedback, SynthParams};

    let (recipes, target) = planned(&case.entry);
    let recipe = &recipes[0];
    let reply = fixture_text(&format!("critique/{}", case.fixture));
    let params = SynthParams {
        n_candidates: 1,
        ..SynthParams::default()
    };
    let loop_findings = |script: Vec<String>, iterations: u32| {
        let mock = ScriptedMock::new(script);
        let synth = |r: &TestRecipe, fb: Option<&Feedback>| synthesize(r, &target, &Backend::Llm(&mock), &params, fb);
        let config = LoopConfig {
            max_iterations: iterations,
            ..LoopConfig::default()
        };
        let out = run_loop(recipe, &synth, &RuleCritic::default(), &ConditionRegistry::default(), &config);
        out.iterations
            .into_iter()
            .flat_map(|i| i.candidates)
            .filter_map(|c| c.report)
            .flat_map(|r| r.findings)
            .collect::<Vec<_>>()
    };
    match case.mode.as_deref() {
        None => {
            let mock = ScriptedMock::new(vec![reply]);
            let test = synthesize(recipe, &target, &Backend::Llm(&mock), &params, None)
                .expect("mock answers")
                .remove(0)
                .expect("fixture parses");
            critique(recipe, &test).findings
        }
        Some("loop") => loop_findings(vec![reply], 1),
        Some("loop_resubmit") => loop_findings(vec![reply.clone(), reply], 2),
        Some("second_opinion") => {
            let good = fixture_text("llm/deadlock_good.md");
            let author = ScriptedMock::new(vec![good]);
            let reviewer = ScriptedMock::new(vec![reply]);
            let test = synthesize(recipe, &target, &Backend::Llm(&author), &params, None)
                .expect("mock answers")
                .remove(0)
                .expect("fixture parses");
            let so = LlmSecondOpinion { client: &reviewer };
            RuleCritic {
                second_opinion: Some(&so),
            }
            .critique(recipe, &test)
            .findings
        }
        Some(other) => panic!("unknown case mode {other}"),
    }
}

/// `| CODE | confidence |` rows from the documented finding table.
pub fn documented_confidences() -> Vec<(String, f64)> {
    let doc = std::fs::read_to_string(workspace_root().join("docs/critique.md")).expect("docs/critique.md");
    doc.lines()
        .filter_map(|l| {
            let cells: Vec<&str> = l.split('|').map(str::trim).collect();
            if cells.len() < 4 {
                return None;
            }
            let code = cells[1].trim_matches('`');
            let conf: f64 = cells.last().filter(|c| !c.is_empty()).or(cells.get(cells.len() - 2))?.parse().ok()?;
            code.chars().all(|c| c.is_ascii_uppercase() || c == '_').then(|| (code.to_string(), conf))
        })
        .collect()
}

/// Violations of `schemas/<name>.schema.json` for `instance`.
pub fn schema_errors(name: &str, instance: &serde_json::Value) -> Vec<String> {
    let path = workspace_root().join(format!("schemas/{name}.schema.json"));
    let schema: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).expect("schema file")).expect("schema json");
    let v = jsonschema::validator_for(&schema).expect("schema compiles");
    v.iter_errors(instance).map(|e| format!("{}: {e}", e.instance_path())).collect()
}

/// Each seed pattern with the corpus entry it must match and the sibling it
/// must reject.
pub const PATTERN_PAIRS: &[(&str, &str, &str)] = &[
    ("KGP_MPI_015", "mpi_deadlock/buggy", "mpi_deadlock/fixed"),
    ("KGP_MPI_BARRIER_COND", "mpi_barrier_cond/buggy", "mpi_barrier_cond/fixed"),
    ("KGP_MPI_COLLECTIVE_BRANCH", "mpi_bcast_branch/buggy", "mpi_bcast_branch/fixed"),
    ("KGP_MPI_COLLECTIVE_BRANCH", "mpi_reduce_branch/buggy", "mpi_reduce_branch/fixed"),
    ("KGP_MPI_DEGENERATE_COMM", "mpi_bcast_branch/fixed", "mpi_bcast_branch/buggy"),
    ("KGP_MPI_INIT_FINALIZE", "mpi_init_finalize/buggy", "mpi_init_finalize/fixed"),
    ("KGP_OMP_FIRSTPRIVATE_INIT", "omp_firstprivate/buggy", "omp_firstprivate/fixed"),
    ("KGP_OMP_PRIVATE_TEMP", "omp_private_temp/buggy", "omp_private_temp/fixed"),
    ("KGP_OMP_RACE_SHARED_ACCUM", "omp_race_sum/buggy", "omp_race_sum/fixed"),
    ("KGP_OMP_RACE_SHARED_ACCUM", "omp_counter_atomic/buggy", "omp_counter_atomic/fixed"),
    ("KGP_OMP_RACE_SHARED_ACCUM", "omp_counter_critical/buggy", "omp_counter_critical/fixed"),
    ("KGP_OMP_RACE_SHARED_ACCUM", "omp_sections/buggy", "omp_sections/fixed"),
    ("KGP_OMP_SCHEDULE_COVERAGE", "omp_schedule/hint", "omp_schedule/plain"),
    ("KGP_OMP_SECTIONS_COVERAGE", "omp_sections/fixed", "omp_sections/buggy"),
    ("KGP_OMP_SYNC_CHECK", "omp_counter_atomic/fixed", "omp_counter_atomic/buggy"),
    ("KGP_OMP_SYNC_CHECK", "omp_counter_critical/fixed", "omp_counter_critical/buggy"),
    ("KGP_OMP_TASK_TASKWAIT", "omp_task/buggy", "omp_task/fixed"),
];

/// (false positives, false negatives) of the seed patterns over the pairs.
pub fn pattern_confusion() -> (Vec<String>, Vec<String>) {
    let mut fp = Vec::new();
    let mut fn_ = Vec::new();
    for (pattern, pos, neg) in PATTERN_PAIRS {
        if !analyze(pos).testing_areas.iter().any(|t| t.pattern_id == *pattern) {
            fn_.push(format!("{pattern} on {pos}"));
        }
        if analyze(neg).testing_areas.iter().any(|t| t.pattern_id == *pattern) {
            fp.push(format!("{pattern} on {neg}"));
        }
    }
    (fp, fn_)
}
