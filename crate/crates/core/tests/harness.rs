//! Compiles and runs generated tests. Skips (with a notice) when no compiler
//! or MPI launcher is installed.

mod common;

use std::sync::{Mutex, MutexGuard};
use std::time::Instant;

use hpct_core::harness::{run_test, HarnessConfig, Outcome, RunResult, Toolchain, ToolchainConfig};
use hpct_core::metrics::{compilation_rate, pct};
use hpct_core::synth::{synthesize_template, GeneratedTest, SynthParams};

// one test at a time: timings are meaningless when runs compete for cores
static SERIAL: Mutex<()> = Mutex::new(());

fn toolchain() -> Option<(Toolchain, MutexGuard<'static, ()>)> {
    let guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let t = Toolchain::discover(&ToolchainConfig::default());
    if t.cxx.is_some() && t.mpicxx.is_some() && t.mpirun.is_some() {
        Some((t, guard))
    } else {
        eprintln!("skipping: C++/MPI toolchain not found");
        None
    }
}

/// The family positive's recipes bound to `source` (which may be the fixed sibling).
fn tests_for(positive: &str, source: &str) -> Vec<GeneratedTest> {
    let (recipes, _) = common::planned(positive);
    let target = common::target_for(source);
    recipes
        .iter()
        .map(|r| synthesize_template(r, &target, &SynthParams::default()).unwrap())
        .collect()
}

fn run(t: &GeneratedTest, tc: &Toolchain, coverage: bool) -> RunResult {
    let dir = tempfile::tempdir().unwrap();
    let config = HarnessConfig {
        coverage,
        ..HarnessConfig::default()
    };
    run_test(t, tc, &config, dir.path())
}

#[test]
fn deadlock_times_out_and_the_fix_passes() {
    let Some((tc, _serial)) = toolchain() else { return };
    let buggy = &tests_for("mpi_deadlock/buggy", "mpi_deadlock/buggy")[0];
    let start = Instant::now();
    let r = run(buggy, &tc, false);
    let total = start.elapsed().as_secs_f64();
    assert_eq!(r.outcome, Outcome::TimeoutDeadlock, "{}", r.stderr);
    assert!(!r.hard_killed, "the in-test watchdog should decide");
    // launch to verdict; compilation is reported separately
    assert!(r.wall_seconds < 6.0, "ran {:.2}s ({total:.2}s with compilation)", r.wall_seconds);
    let fixed = &tests_for("mpi_deadlock/buggy", "mpi_deadlock/fixed")[0];
    let r = run(fixed, &tc, false);
    assert_eq!(r.outcome, Outcome::Pass, "{}", r.stderr);
}

#[test]
fn fixed_reduction_passes_every_repetition() {
    let Some((tc, _serial)) = toolchain() else { return };
    let t = &tests_for("omp_race_sum/buggy", "omp_race_sum/fixed")[0];
    // one run executes all 100 repetitions; any mismatch fails it
    assert!(t.source_text.contains("100"));
    let r = run(t, &tc, false);
    assert_eq!(r.outcome, Outcome::Pass, "{}", r.stdout);
}

#[test]
fn racy_sum_is_flagged_within_three_runs() {
    let Some((tc, _serial)) = toolchain() else { return };
    let t = &tests_for("omp_race_sum/buggy", "omp_race_sum/buggy")[0];
    let flagged = (0..3).filter(|_| run(t, &tc, false).outcome == Outcome::AssertionFailure).count();
    assert!(flagged >= 1);
}

#[test]
fn syntax_errors_are_compile_errors() {
    let Some((tc, _serial)) = toolchain() else { return };
    let mut t = tests_for("omp_race_sum/buggy", "omp_race_sum/fixed")[0].clone();
    t.source_text.push_str("int broken( {\n");
    let r = run(&t, &tc, false);
    assert_eq!(r.outcome, Outcome::CompileError);
    assert!(r.compile_log.contains("error"));
}

#[test]
fn coverage_percentages_match_their_counters() {
    let Some((tc, _serial)) = toolchain() else { return };
    if tc.gcov.is_none() {
        eprintln!("skipping: gcov not found");
        return;
    }
    let t = &tests_for("mpi_deadlock/buggy", "mpi_deadlock/fixed")[0];
    let r = run(t, &tc, true);
    assert_eq!(r.outcome, Outcome::Pass);
    let c = r.coverage.expect("coverage collected");
    assert!(c.lines_total > 0 && c.lines_hit > 0);
    assert_eq!(c.line_pct, pct(c.lines_hit.into(), c.lines_total.into()));
    assert_eq!(c.branch_pct, pct(c.branches_hit.into(), c.branches_total.into()));
}

/// Every corpus entry with a recorded verdict gets it, and everything compiles.
#[test]
fn corpus_verdicts_match_the_manifest() {
    let Some((tc, _serial)) = toolchain() else { return };
    let corpus = common::corpus();
    let mut results = Vec::new();
    for e in corpus.entries() {
        let positive = if e.is_positive() {
            e.name.clone()
        } else if let Some(s) = &e.sibling {
            s.clone()
        } else {
            continue;
        };
        for t in tests_for(&positive, &e.name) {
            let r = run(&t, &tc, false);
            if let Some(want) = e.expected_verdict {
                assert_eq!(r.outcome, want, "{} {}: {}{}", e.name, t.recipe_id, r.stdout, r.stderr);
            }
            results.push(r);
        }
    }
    assert!(results.len() >= 28);
    assert_eq!(compilation_rate(&results), Ok(100.0));
}
