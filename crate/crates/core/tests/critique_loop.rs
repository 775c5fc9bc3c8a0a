mod common;

use hpct_core::critique::{
    compute_confidence, run_loop, write_escalation, Critic, CritiqueReport, LoopConfig, LoopOutcome, LoopStatus,
    RuleCritic, Verdict, ERROR_CODES,
};
use hpct_core::critique::finding;
use hpct_core::llm::ScriptedMock;
use hpct_core::recipe::{ConditionRegistry, TestRecipe};
use hpct_core::synth::{synthesize, Backend, Feedback, GeneratedTest, SynthParams};

fn run_with_script(script: Vec<String>, cycle: bool, config: &LoopConfig) -> (LoopOutcome, usize) {
    let (recipes, target) = common::planned("mpi_deadlock/buggy");
    let mock = if cycle { ScriptedMock::cycling(script) } else { ScriptedMock::new(script) };
    let params = SynthParams::default();
    let synth = |r: &TestRecipe, fb: Option<&Feedback>| synthesize(r, &target, &Backend::Llm(&mock), &params, fb);
    let out = run_loop(&recipes[0], &synth, &RuleCritic::default(), &ConditionRegistry::default(), config);
    (out, mock.calls())
}

fn flawed_then_fixed() -> Vec<String> {
    let bad = common::fixture_text("llm/deadlock_flawed.md");
    let good = common::fixture_text("llm/deadlock_good.md");
    // one round of five flawed candidates, then five good ones
    std::iter::repeat(bad).take(5).chain(std::iter::repeat(good).take(5)).collect()
}

#[test]
fn flawed_then_fixed_accepts_in_second_round() {
    let (out, calls) = run_with_script(flawed_then_fixed(), false, &LoopConfig::default());
    assert_eq!(out.status, LoopStatus::Accepted);
    assert_eq!(out.iteration_count(), 2);
    assert_eq!(calls, 2);
    assert_eq!(out.iterations[0].iteration, 1);
    assert_eq!(out.iterations[1].iteration, 2);
    assert_eq!(out.iterations[0].accepted, None);
    assert_eq!(out.iterations[1].accepted, Some(0));
    let first = out.iterations[0].candidates[0].report.as_ref().unwrap();
    assert!(first.has("ERR_WATCHDOG_MISSING"));
}

#[test]
fn always_flawed_escalates_at_the_cap_with_full_history() {
    let bad = common::fixture_text("llm/deadlock_flawed.md");
    let (out, calls) = run_with_script(vec![bad], true, &LoopConfig::default());
    assert_eq!(out.status, LoopStatus::Escalated);
    assert_eq!(out.iteration_count(), 5);
    assert_eq!(calls, 5);
    let bundle = out.escalation.as_ref().expect("bundle");
    assert_eq!(bundle.history.len(), 5);
    assert!(bundle.history.iter().all(|i| i.candidates.len() == 5));
    assert!(bundle.last_candidate.is_some());
    // later rounds recognise the resubmission
    let r = bundle.history[1].candidates[0].report.as_ref().unwrap();
    assert!(r.has("ERR_IDENTICAL_RESUBMISSION"));
    assert_eq!(r.verdict, Verdict::Revise);
}

#[test]
fn loop_is_deterministic() {
    let a = run_with_script(flawed_then_fixed(), false, &LoopConfig::default());
    let b = run_with_script(flawed_then_fixed(), false, &LoopConfig::default());
    assert_eq!(serde_json::to_string(&a.0).unwrap(), serde_json::to_string(&b.0).unwrap());
    let bad = common::fixture_text("llm/deadlock_flawed.md");
    let c = run_with_script(vec![bad.clone()], true, &LoopConfig::default());
    let d = run_with_script(vec![bad], true, &LoopConfig::default());
    assert_eq!(serde_json::to_string(&c.0).unwrap(), serde_json::to_string(&d.0).unwrap());
}

#[test]
fn no_critique_synthesizes_once_and_keeps_the_first_candidate() {
    let config = LoopConfig {
        critique_enabled: false,
        ..LoopConfig::default()
    };
    let (out, calls) = run_with_script(flawed_then_fixed(), false, &config);
    assert_eq!(calls, 1);
    assert_eq!(out.status, LoopStatus::Unchecked);
    assert_eq!(out.iteration_count(), 1);
    assert!(out.test.unwrap().source_text.contains("exchange_data(hpct_rank, 1 - hpct_rank);"));
}

#[test]
fn exhausted_backend_escalates_immediately() {
    let (out, _) = run_with_script(Vec::new(), false, &LoopConfig::default());
    assert_eq!(out.status, LoopStatus::Escalated);
    assert_eq!(out.iteration_count(), 1);
    assert!(out.escalation.unwrap().reason.contains("synthesis failed"));
}

/// Critic that always asks for revision with a single weak finding.
struct Doubtful;

impl Critic for Doubtful {
    fn critique(&self, recipe: &TestRecipe, test: &GeneratedTest) -> CritiqueReport {
        CritiqueReport {
            recipe_id: recipe.test_id.clone(),
            candidate: test.candidate,
            findings: vec![finding("WARN_RELEVANCE_TARGET_NOT_EXERCISED", "unsure", None)],
            verdict: Verdict::Revise,
            refinement: Vec::new(),
            degraded: false,
        }
    }
}

#[test]
fn low_confidence_streak_escalates_early() {
    let (recipes, target) = common::planned("mpi_deadlock/buggy");
    let params = SynthParams::default();
    let round = std::cell::Cell::new(0);
    // vary the text so resubmission detection stays quiet
    let synth = |r: &TestRecipe, fb: Option<&Feedback>| {
        round.set(round.get() + 1);
        let mut t = synthesize(r, &target, &Backend::Template, &params, fb)?;
        if let Some(Ok(test)) = t.first_mut() {
            test.source_text.push_str(&format!("// round {}\n", round.get()));
        }
        Ok(t)
    };
    let out = run_loop(&recipes[0], &synth, &Doubtful, &ConditionRegistry::default(), &LoopConfig::default());
    assert_eq!(out.status, LoopStatus::Escalated);
    assert_eq!(out.iteration_count(), 3);
    assert!(out.escalation.unwrap().reason.contains("low-confidence"));
}

#[test]
fn template_candidates_pass_review_first_time() {
    for name in ["mpi_deadlock/buggy", "omp_race_sum/buggy", "mpi_bcast_branch/buggy", "omp_schedule/hint"] {
        let (recipes, target) = common::planned(name);
        let params = SynthParams::default();
        let synth = |r: &TestRecipe, fb: Option<&Feedback>| synthesize(r, &target, &Backend::Template, &params, fb);
        for r in &recipes {
            let out = run_loop(r, &synth, &RuleCritic::default(), &ConditionRegistry::default(), &LoopConfig::default());
            assert_eq!(out.status, LoopStatus::Accepted, "{name} {}", r.test_id);
            assert_eq!(out.iteration_count(), 1);
        }
    }
}

#[test]
fn escalation_bundle_is_written() {
    let bad = common::fixture_text("llm/deadlock_flawed.md");
    let (out, _) = run_with_script(vec![bad], true, &LoopConfig::default());
    let dir = tempfile::tempdir().unwrap();
    let path = write_escalation(dir.path(), out.escalation.as_ref().unwrap()).unwrap();
    assert!(path.ends_with("escalation_RECIPE_MPI_DEADLOCK_001.json"));
    let back: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    assert_eq!(back["history"].as_array().unwrap().len(), 5);
}

#[test]
fn every_registered_code_is_triggered_by_a_fixture() {
    let cases = common::critique_cases();
    for (code, ..) in ERROR_CODES {
        assert!(
            cases.iter().any(|c| c.code.split(':').next() == Some(code)),
            "no fixture for {code}"
        );
    }
    for case in &cases {
        let findings = common::observe_case(case);
        let f = findings
            .iter()
            .find(|f| f.code == case.code)
            .unwrap_or_else(|| panic!("{} did not raise {}: {findings:#?}", case.fixture, case.code));
        assert_eq!(f.confidence, compute_confidence(&case.code));
    }
}

#[test]
fn documented_table_matches_the_registry() {
    let doc = common::documented_confidences();
    assert_eq!(doc.len(), ERROR_CODES.len());
    for ((code, _, _, conf), (dcode, dconf)) in ERROR_CODES.iter().zip(&doc) {
        assert_eq!(code, dcode);
        assert_eq!(conf, dconf);
    }
}

mod termination {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        /// Whatever the backend says, the loop stops within the cap and its
        /// history is numbered and consistent with the final status.
        #[test]
        fn loop_terminates_within_the_cap(good in proptest::collection::vec(any::<bool>(), 1..12), cap in 1u32..=6) {
            let bad = common::fixture_text("llm/deadlock_flawed.md");
            let ok = common::fixture_text("llm/deadlock_good.md");
            let script: Vec<String> = good.iter().map(|g| if *g { ok.clone() } else { bad.clone() }).collect();
            let config = LoopConfig { max_iterations: cap, ..LoopConfig::default() };
            let (out, calls) = run_with_script(script, true, &config);
            let n = out.iteration_count();
            prop_assert!(n >= 1 && n <= cap as usize);
            prop_assert_eq!(calls, n);
            for (i, it) in out.iterations.iter().enumerate() {
                prop_assert_eq!(it.iteration as usize, i + 1);
            }
            match out.status {
                LoopStatus::Accepted => {
                    prop_assert!(out.test.is_some());
                    prop_assert!(out.iterations.last().unwrap().accepted.is_some());
                    prop_assert!(out.iterations[..n - 1].iter().all(|it| it.accepted.is_none()));
                }
                LoopStatus::Escalated => {
                    let bundle = out.escalation.as_ref().unwrap();
                    prop_assert_eq!(bundle.history.len(), n);
                    prop_assert!(out.iterations.iter().all(|it| it.accepted.is_none()));
                }
                LoopStatus::Unchecked => prop_assert!(false, "critique was enabled"),
            }
        }
    }
}
