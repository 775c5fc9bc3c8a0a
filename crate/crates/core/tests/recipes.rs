mod common;

use hpct_core::critique::CritiqueReport;
use hpct_core::kg::KnowledgeGraph;
use hpct_core::recipe::{
    bare_targets, generate_recipes, refine_recipe, validate_recipe, ConditionRegistry, ConditionValue, NoteSource,
    RecipeConfig, RecipeSet, RefinementDirective, TestRecipe,
};

fn deadlock_recipe() -> TestRecipe {
    let (recipes, _) = common::planned("mpi_deadlock/buggy");
    recipes.into_iter().next().expect("a recipe for exchange_data")
}

#[test]
fn deadlock_recipe_matches_the_reference_shape() {
    let r = deadlock_recipe();
    assert!(r.test_id.starts_with("RECIPE_MPI_DEADLOCK"), "{}", r.test_id);
    assert_eq!(r.condition("num_processes"), Some(&ConditionValue::Int(2)));
    assert_eq!(r.condition("rank0_send_first"), Some(&ConditionValue::Bool(true)));
    assert_eq!(r.condition("rank1_recv_first"), Some(&ConditionValue::Bool(true)));
    assert!(r
        .justification_notes
        .iter()
        .any(|n| n.source == NoteSource::KgPattern && n.id.as_deref() == Some("KGP_MPI_015")));
    assert_eq!(r.target_function.as_deref(), Some("exchange_data"));
    assert_eq!(r.target_construct, "MPI_Send_line_6_MPI_Recv_line_7");
    // same top-level keys as the reference listing
    let v = serde_json::to_value(&r).unwrap();
    for key in [
        "test_id",
        "target_construct",
        "test_type",
        "conditions",
        "expected_behavior_under_test",
        "justification_notes",
        "suggested_assertion_method",
    ] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
}

#[test]
fn generated_sets_validate_against_schema_and_registry() {
    let kg = KnowledgeGraph::seed();
    let registry = ConditionRegistry::default();
    for e in common::corpus().entries() {
        let m = common::analyze(&e.name);
        for config in [RecipeConfig::default(), RecipeConfig { no_recipe: true, ..RecipeConfig::default() }] {
            let set = if config.no_recipe {
                RecipeSet {
                    schema_version: hpct_core::recipe::RECIPE_SCHEMA_VERSION.into(),
                    source: m.source.path.clone(),
                    recipes: bare_targets(&m),
                    warnings: Vec::new(),
                }
            } else {
                generate_recipes(&m, &kg, &config)
            };
            let errs = common::schema_errors("recipes", &serde_json::to_value(&set).unwrap());
            assert!(errs.is_empty(), "{}: {errs:?}", e.name);
            for r in &set.recipes {
                assert_eq!(validate_recipe(r, &registry), Ok(()), "{} {}", e.name, r.test_id);
            }
        }
    }
}

#[test]
fn one_recipe_per_testing_area_and_stable_ids() {
    for e in common::corpus().entries() {
        let m = common::analyze(&e.name);
        let (recipes, _) = common::planned(&e.name);
        assert_eq!(recipes.len(), m.testing_areas.len(), "{}", e.name);
        let (again, _) = common::planned(&e.name);
        assert_eq!(recipes, again);
    }
    let (task, _) = common::planned("omp_task/buggy");
    let ids: Vec<&str> = task.iter().map(|r| r.test_id.as_str()).collect();
    assert_eq!(ids, ["RECIPE_OMP_TASKWAIT_001", "RECIPE_OMP_TASKWAIT_002"]);
}

#[test]
fn race_recipe_carries_the_closed_form_expectation() {
    let (recipes, _) = common::planned("omp_race_sum/buggy");
    let r = &recipes[0];
    assert_eq!(r.int("input_size"), Some(1_000_000));
    let n = 1_000_000f64;
    assert_eq!(r.condition("expected_value").and_then(ConditionValue::as_f64), Some(n * (n + 1.0) / 2.0));
}

#[test]
fn schema_round_trip() {
    let r = deadlock_recipe();
    let text = serde_json::to_string_pretty(&r).unwrap();
    let back: TestRecipe = serde_json::from_str(&text).unwrap();
    assert_eq!(back, r);
}

#[test]
fn validation_reports_bad_fields() {
    let mut r = deadlock_recipe();
    r.test_id = "deadlock-1".into();
    r.conditions.insert("num_processes".into(), ConditionValue::Int(0));
    r.conditions.insert("colour".into(), ConditionValue::Str("blue".into()));
    r.justification_notes.retain(|n| n.source == NoteSource::ConstraintDb);
    let fields: Vec<String> = validate_recipe(&r, &ConditionRegistry::default())
        .unwrap_err()
        .into_iter()
        .map(|v| v.field)
        .collect();
    for f in ["test_id", "conditions.num_processes", "conditions.colour", "justification_notes"] {
        assert!(fields.iter().any(|x| x == f), "{f} not reported: {fields:?}");
    }
}

fn report_for(r: &TestRecipe, refinement: Vec<RefinementDirective>) -> CritiqueReport {
    CritiqueReport {
        recipe_id: r.test_id.clone(),
        candidate: 0,
        findings: Vec::new(),
        verdict: hpct_core::critique::Verdict::Revise,
        refinement,
        degraded: false,
    }
}

#[test]
fn refinement_bumps_the_revision() {
    let r = deadlock_recipe();
    let registry = ConditionRegistry::default();
    assert_eq!(refine_recipe(&r, &report_for(&r, vec![]), &registry).unwrap(), r);
    let set = RefinementDirective::SetCondition {
        key: "timeout_seconds".into(),
        value: ConditionValue::Float(8.0),
    };
    let r1 = refine_recipe(&r, &report_for(&r, vec![set.clone()]), &registry).unwrap();
    assert_eq!(r1.test_id, "RECIPE_MPI_DEADLOCK_001.r1");
    assert_eq!(r1.revision(), 1);
    assert_eq!(r1.base_id(), "RECIPE_MPI_DEADLOCK_001");
    let r2 = refine_recipe(&r1, &report_for(&r1, vec![set]), &registry).unwrap();
    assert_eq!(r2.test_id, "RECIPE_MPI_DEADLOCK_001.r2");
}

#[test]
fn unresolvable_refinements_leave_the_recipe_alone() {
    let r = deadlock_recipe();
    let registry = ConditionRegistry::default();
    let bad = RefinementDirective::SetCondition {
        key: "num_processes".into(),
        value: ConditionValue::Int(-3),
    };
    let err = refine_recipe(&r, &report_for(&r, vec![bad]), &registry).unwrap_err();
    assert_eq!(err.recipe, r);
    let drop_required = RefinementDirective::RemoveCondition {
        key: "num_processes".into(),
    };
    assert!(refine_recipe(&r, &report_for(&r, vec![drop_required]), &registry).is_err());
}

#[test]
fn bare_targets_have_no_conditions() {
    let m = common::analyze("mpi_deadlock/buggy");
    let bare = bare_targets(&m);
    assert!(!bare.is_empty());
    for b in &bare {
        assert!(b.is_bare(), "{}", b.test_id);
        assert!(b.conditions.is_empty());
    }
}

mod generated {
    use super::*;
    use hpct_core::analyzer::{analyze_source, AnalyzerConfig, SourceUnit};
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        /// Recipes for any mix of corpus sources are schema-valid, pass the
        /// registry and carry unique ids.
        #[test]
        fn recipes_for_mixed_sources_validate(picks in proptest::collection::vec(any::<prop::sample::Index>(), 1..4)) {
            let c = common::corpus();
            let entries = c.entries();
            let text: String = picks
                .iter()
                .map(|i| c.read_unit(&entries[i.index(entries.len())]).unwrap().text.clone())
                .collect::<Vec<_>>()
                .join("\n");
            let unit = SourceUnit::new("mixed.cpp", text).unwrap();
            let kg = KnowledgeGraph::seed();
            let meta = analyze_source(&unit, &kg, &AnalyzerConfig::default()).unwrap();
            let set = generate_recipes(&meta, &kg, &RecipeConfig::default());
            let errs = common::schema_errors("recipes", &serde_json::to_value(&set).unwrap());
            prop_assert!(errs.is_empty(), "{:?}", errs);
            let registry = ConditionRegistry::default();
            let mut ids = std::collections::BTreeSet::new();
            for r in &set.recipes {
                prop_assert_eq!(validate_recipe(r, &registry), Ok(()));
                prop_assert!(ids.insert(r.test_id.clone()), "duplicate {}", r.test_id);
            }
        }
    }
}
