mod support;

use std::fs;

use hpct_core::critique::LoopStatus;
use hpct_core::pipeline::Preset;
use support::*;

fn code(out: &std::process::Output) -> i32 {
    out.status.code().unwrap()
}

#[test]
fn analyze_prints_the_golden() {
    let corpus = root().join("corpus");
    let out = hpct_in(&corpus, &["analyze", "mpi_deadlock/buggy.cpp"]);
    assert_eq!(ok(&out), fs::read_to_string(corpus.join("golden/mpi_deadlock.buggy.json")).unwrap());
}

#[test]
fn failure_classes_have_distinct_exit_codes() {
    assert_eq!(code(&hpct(&["analyze", "no/such/file.cpp"])), 3);
    assert_eq!(code(&hpct(&["kg", "validate", "missing.json"])), 3);
    assert_eq!(code(&hpct(&["report", "--run-dir", "/nonexistent/run"])), 3);
    assert_eq!(code(&hpct(&["pipeline", "--preset", "bogus"])), 1);
    assert_eq!(code(&hpct(&["frobnicate"])), 1);
    assert_eq!(code(&hpct(&["--help"])), 0);

    let dir = tempfile::tempdir().unwrap();
    let bad_kg = dir.path().join("kg.json");
    fs::write(&bad_kg, r#"{"schema_version": "hpct.kg/1", "patterns": 3}"#).unwrap();
    assert_eq!(code(&hpct(&["kg", "validate", bad_kg.to_str().unwrap()])), 2);
    let src = dir.path().join("a.cpp");
    fs::write(&src, "int main() { return 0; }\n").unwrap();
    let out = hpct(&["pipeline", src.to_str().unwrap(), "--kg", bad_kg.to_str().unwrap(), "--skip-run"]);
    assert_eq!(code(&out), 4);
}

#[test]
fn seed_kg_validates() {
    let out = ok(&hpct(&["kg", "validate", "crates/core/data/seed_kg.json"]));
    assert!(out.starts_with("ok:"), "{out}");
}

#[test]
fn recipe_validation_flags_broken_conditions() {
    let dir = tempfile::tempdir().unwrap();
    let run = pipeline(dir.path(), "r", &["corpus/mpi_deadlock/buggy.cpp", "--skip-run"]);
    let recipes = run.join("recipes.json");
    assert!(ok(&hpct(&["recipe", "validate", recipes.to_str().unwrap()])).contains("1 recipes"));

    let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&recipes).unwrap()).unwrap();
    v["sets"][0]["recipes"][0]["conditions"]["num_processes"] = serde_json::json!(0);
    let broken = dir.path().join("broken.json");
    fs::write(&broken, v.to_string()).unwrap();
    let out = hpct(&["recipe", "validate", broken.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("num_processes"));
}

/// Running the stages one by one on each other's artifacts gives the same
/// report as `pipeline`.
#[test]
fn stages_compose_to_the_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let inputs = ["corpus/omp_schedule/hint.cpp", "corpus/mpi_bcast_branch/buggy.cpp", "corpus/omp_task/fixed.cpp"];
    let mut args: Vec<&str> = inputs.to_vec();
    args.push("--no-coverage");
    let whole = pipeline(dir.path(), "whole", &args);

    let staged = dir.path().join("staged");
    fs::create_dir(&staged).unwrap();
    let s = staged.to_str().unwrap();
    let meta = staged.join("metadata.json");
    let mut a = vec!["analyze"];
    a.extend_from_slice(&inputs);
    a.extend_from_slice(&["-o", meta.to_str().unwrap()]);
    ok(&hpct(&a));
    // same flags as the pipeline run, so the echoed config matches too
    let out_dir = dir.path().to_str().unwrap();
    let mut common: Vec<&str> = inputs.to_vec();
    common.extend_from_slice(&["--no-coverage", "--output-dir", out_dir]);
    for stage in [&["recipe", "generate"][..], &["test", "generate"], &["run"], &["report"]] {
        let mut a: Vec<&str> = stage.to_vec();
        a.extend_from_slice(&["--run-dir", s]);
        a.extend_from_slice(&common);
        ok(&hpct(&a));
    }
    assert_eq!(normalized(&whole), normalized(&staged));
    for f in ["metadata.json", "recipes.json", "tests.json"] {
        assert_eq!(fs::read(whole.join(f)).unwrap(), fs::read(staged.join(f)).unwrap(), "{f}");
    }
    let r = read_report(&whole);
    assert!(r.tests.iter().all(|t| t.outcome.is_some()));
}

#[test]
fn config_file_is_echoed_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.json");
    fs::write(&cfg, r#"{"max_iterations": 3, "temperature": 0.4, "candidates": 2}"#).unwrap();
    let run = pipeline(
        dir.path(),
        "c",
        &["corpus/mpi_deadlock/buggy.cpp", "--skip-run", "--config", cfg.to_str().unwrap(), "--candidates", "4"],
    );
    let r = read_report(&run);
    assert_eq!(r.config.max_iterations, 3);
    assert_eq!(r.config.temperature, 0.4);
    assert_eq!(r.config.candidates, 4);
    assert!(report_schema_errors(&run).is_empty());
}

#[test]
fn presets_produce_valid_reports_with_the_mock() {
    let dir = tempfile::tempdir().unwrap();
    let script = mock_script();
    for preset in Preset::ALL {
        let run = pipeline(
            dir.path(),
            preset.as_str(),
            &[
                "--manifest", "corpus/manifest.json", "--backend", "llm", "--mock-script",
                script.to_str().unwrap(), "--preset", preset.as_str(), "--skip-run",
            ],
        );
        let errs = report_schema_errors(&run);
        assert!(errs.is_empty(), "{}: {errs:#?}", preset.as_str());
        let r = read_report(&run);
        assert!(!r.tests.is_empty());
        let ab = preset.ablations();
        assert_eq!(r.config.ablations, ab);
        if ab.no_critique {
            assert!(r.tests.iter().all(|t| t.synth_calls == 1 && t.iterations == 1 && t.status == LoopStatus::Unchecked));
            assert_eq!(r.escalations, 0);
        }
        if ab.no_recipe {
            assert!(r.tests.iter().all(|t| t.recipe_id.starts_with("TARGET_")));
        }
    }
}

#[test]
fn template_pipeline_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["--manifest", "corpus/manifest.json", "--backend", "template", "--skip-run"];
    let a = pipeline(dir.path(), "a", &args);
    let b = pipeline(dir.path(), "b", &args);
    assert_eq!(normalized(&a), normalized(&b));
}
