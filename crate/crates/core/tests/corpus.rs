mod common;

use hpct_core::corpus::{load_corpus, CorpusError};
use hpct_core::harness::Outcome;

#[test]
fn manifest_covers_the_required_families() {
    let c = common::corpus();
    assert!(c.entries().len() >= 14);
    for e in c.entries() {
        assert!(c.source_path(e).is_file(), "{}", e.source);
        if e.is_buggy() {
            let sib = c.entry(e.sibling.as_deref().unwrap()).unwrap();
            assert_eq!(sib.variant, "fixed");
            assert!(!e.expected_patterns.is_empty(), "{} has no expected pattern", e.name);
        }
    }
    let race = c.entry("omp_race_sum/buggy").unwrap();
    assert_eq!(race.expected_patterns[0].pattern_id, "KGP_OMP_RACE_SHARED_ACCUM");
    let dl = c.entry("mpi_deadlock/buggy").unwrap();
    assert_eq!(dl.expected_patterns[0].pattern_id, "KGP_MPI_015");
    assert_eq!(dl.expected_verdict, Some(Outcome::TimeoutDeadlock));
    assert_eq!(c.entry("mpi_deadlock/fixed").unwrap().expected_verdict, Some(Outcome::Pass));
}

#[test]
fn broken_manifests_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("manifest.json");
    let write = |v: serde_json::Value| std::fs::write(&path, v.to_string()).unwrap();

    write(serde_json::json!({"schema_version": "hpct.corpus/9", "entries": []}));
    assert!(matches!(load_corpus(&path), Err(CorpusError::Schema(_))));

    let entry = serde_json::json!({
        "name": "f/buggy", "family": "f", "variant": "buggy",
        "source": "f/buggy.cpp", "golden": "g.json",
        "expected_patterns": [], "taxonomy": "t"
    });
    write(serde_json::json!({"schema_version": "hpct.corpus/1", "entries": [entry.clone()]}));
    assert!(matches!(load_corpus(&path), Err(CorpusError::MissingFile(_))));

    std::fs::create_dir(dir.path().join("f")).unwrap();
    std::fs::write(dir.path().join("f/buggy.cpp"), "int main() {}\n").unwrap();
    std::fs::write(dir.path().join("g.json"), "{}").unwrap();
    assert!(matches!(load_corpus(&path), Err(CorpusError::Inconsistent { .. })));

    assert!(matches!(load_corpus(&dir.path().join("nope.json")), Err(CorpusError::Io { .. })));
}
