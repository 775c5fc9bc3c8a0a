mod common;

use std::time::{Duration, Instant};

use hpct_core::analyzer::{analyze_source, AccessMode, AnalyzerConfig, ConstructKind, Guard, Sharing, SourceUnit};
use hpct_core::kg::KnowledgeGraph;

fn pretty(v: &impl serde::Serialize) -> String {
    serde_json::to_string_pretty(v).unwrap() + "\n"
}

#[test]
fn goldens_are_byte_exact_and_fast() {
    let c = common::corpus();
    let kg = KnowledgeGraph::seed();
    for e in c.entries() {
        let unit = c.read_unit(e).unwrap();
        let start = Instant::now();
        let meta = analyze_source(&unit, &kg, &AnalyzerConfig::default()).unwrap();
        let took = start.elapsed();
        assert!(took < Duration::from_secs(1), "{} took {took:?}", e.name);
        let golden = std::fs::read_to_string(c.golden_path(e)).unwrap();
        assert_eq!(pretty(&meta), golden, "golden mismatch for {}", e.name);
    }
}

#[test]
fn goldens_validate_against_the_schema() {
    let c = common::corpus();
    for e in c.entries() {
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(c.golden_path(e)).unwrap()).unwrap();
        let errs = common::schema_errors("analysis-metadata", &v);
        assert!(errs.is_empty(), "{}: {errs:?}", e.name);
    }
}

#[test]
fn parallel_sum_has_one_parallel_for_and_an_unguarded_accumulator() {
    let m = common::analyze("omp_race_sum/buggy");
    let pf: Vec<_> = m.constructs.iter().filter(|c| c.kind == ConstructKind::OmpParallelFor).collect();
    assert_eq!(pf.len(), 1);
    let total: Vec<_> = m.data_flow.iter().filter(|f| f.variable == "total").collect();
    assert_eq!(total.len(), 1);
    let f = total[0];
    assert_eq!(f.region, pf[0].id);
    assert!(matches!(f.sharing, Sharing::SharedImplicit | Sharing::SharedExplicit));
    assert!(f.guarded_by.contains(&Guard::None));
    assert!(f.has_mode(AccessMode::ReadWrite));
}

#[test]
fn exchange_data_sends_before_it_receives() {
    let m = common::analyze("mpi_deadlock/buggy");
    let line_of = |k: ConstructKind| {
        m.constructs
            .iter()
            .find(|c| c.kind == k && c.enclosing_function.as_deref().is_some_and(|f| f.contains("exchange_data")))
            .map(|c| c.location.line)
            .unwrap_or_else(|| panic!("no {k} in exchange_data"))
    };
    assert!(line_of(ConstructKind::MpiSend) < line_of(ConstructKind::MpiRecv));
}

#[test]
fn fixed_reduction_is_guarded() {
    let m = common::analyze("omp_race_sum/fixed");
    assert!(m.data_flow.iter().filter(|f| f.variable == "total").all(|f| f.sharing == Sharing::Reduction));
    assert!(m.testing_areas.is_empty());
}

#[test]
fn analysis_is_deterministic_and_round_trips() {
    let kg = KnowledgeGraph::seed();
    let unit = common::unit("omp_task/buggy");
    let a = analyze_source(&unit, &kg, &AnalyzerConfig::default()).unwrap();
    let b = analyze_source(&unit, &kg, &AnalyzerConfig::default()).unwrap();
    assert_eq!(a, b);
    let back: hpct_core::AnalysisMetadata = serde_json::from_str(&pretty(&a)).unwrap();
    assert_eq!(back, a);
}

#[test]
fn testing_areas_reference_existing_constructs() {
    for e in common::corpus().entries() {
        let m = common::analyze(&e.name);
        for t in &m.testing_areas {
            assert!(m.constructs.iter().any(|c| c.id == t.construct_id), "{}: {}", e.name, t.construct_id);
        }
    }
}

#[test]
fn unbalanced_source_degrades_instead_of_failing() {
    let unit = SourceUnit::new("broken.cpp", "void f() {\n#pragma omp parallel for\nfor (int i = 0; i < 4; ++i) {\n").unwrap();
    let m = analyze_source(&unit, &KnowledgeGraph::seed(), &AnalyzerConfig::default()).unwrap();
    assert!(!m.degraded.is_empty());
}

mod robustness {
    use hpct_core::analyzer::{analyze_source, AnalyzerConfig, SourceUnit};
    use hpct_core::kg::KnowledgeGraph;
    use proptest::prelude::*;

    const PIECES: &[&str] = &[
        "#pragma omp parallel for\n", "#pragma omp critical\n", "#pragma omp atomic\n",
        "MPI_Send(&x, 1, MPI_INT, p, 0, MPI_COMM_WORLD);\n", "MPI_Recv(&x, 1, MPI_INT, p, 0, MPI_COMM_WORLD, &s);\n",
        "MPI_Barrier(MPI_COMM_WORLD);\n", "if (rank == 0) {\n", "}\n", "{\n", "for (int i = 0; i < n; ++i)\n",
        "total += a[i];\n", "void f(int rank, int p) {\n", "/* comment { */\n", "\"str }\";\n", "// x\n",
    ];

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        /// Arbitrary fragments never panic the analyzer and analyze identically twice.
        #[test]
        fn any_fragment_soup_is_deterministic(idx in prop::collection::vec(0..PIECES.len(), 1..40)) {
            let text: String = idx.iter().map(|i| PIECES[*i]).collect();
            let unit = SourceUnit::new("soup.cpp", text).unwrap();
            let kg = KnowledgeGraph::seed();
            let a = analyze_source(&unit, &kg, &AnalyzerConfig::default()).unwrap();
            let b = analyze_source(&unit, &kg, &AnalyzerConfig::default()).unwrap();
            prop_assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
            for c in &a.constructs {
                prop_assert!(c.location.line >= 1);
            }
        }

        #[test]
        fn arbitrary_text_never_panics(text in "\\PC{1,400}") {
            if let Ok(unit) = SourceUnit::new("x.cpp", text) {
                let _ = analyze_source(&unit, &KnowledgeGraph::seed(), &AnalyzerConfig::default());
            }
        }
    }
}
