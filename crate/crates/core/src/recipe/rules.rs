//! The deterministic `test_type` → recipe template table.

use serde::{Deserialize, Serialize};

use super::ConditionValue;

/// Which test-program template realizes a recipe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateFamily {
    /// Run the target on every rank under a watchdog; pass iff it completes.
    MpiCompletion,
    /// As above, plus per-rank assertions on collective participation.
    MpiCollective,
    /// Run a program entry point and check MPI_Init/MPI_Finalize pairing.
    MpiInitFinalize,
    /// Repeat the target under a thread team and compare results.
    OmpConsistency,
}

impl TemplateFamily {
    pub fn is_mpi(self) -> bool {
        !matches!(self, TemplateFamily::OmpConsistency)
    }
}

/// What the primary assertion of a test checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssertionKind {
    Completion,
    CompletionAllRanks,
    CallPairing,
    ValueConsistency,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecipeRule {
    pub test_type: &'static str,
    /// Middle part of `RECIPE_<TAG>_<NNN>`.
    pub tag: &'static str,
    pub template: TemplateFamily,
    pub defaults: Vec<(&'static str, ConditionValue)>,
    pub expected_behavior: &'static str,
    pub assertion_method: &'static str,
    pub assertion_kind: AssertionKind,
}

fn int(v: i64) -> ConditionValue {
    ConditionValue::Int(v)
}

fn boolean(v: bool) -> ConditionValue {
    ConditionValue::Bool(v)
}

fn omp_defaults(threads: i64, reps: i64, size: i64) -> Vec<(&'static str, ConditionValue)> {
    vec![("num_threads", int(threads)), ("repetitions", int(reps)), ("input_size", int(size))]
}

pub fn rule_table() -> Vec<RecipeRule> {
    use AssertionKind::*;
    use TemplateFamily::*;
    vec![
        RecipeRule {
            test_type: "MPI_Potential_Deadlock_Order_Mismatch",
            tag: "MPI_DEADLOCK",
            template: MpiCompletion,
            defaults: vec![
                ("num_processes", int(2)),
                ("rank0_send_first", boolean(true)),
                ("rank1_recv_first", boolean(true)),
            ],
            expected_behavior: "Test may hang: every rank enters a blocking send before posting its receive. \
                The watchdog turns the hang into a timeout verdict; a correctly ordered exchange completes.",
            assertion_method: "Verify completion of the exchange on all ranks within the watchdog timeout.",
            assertion_kind: Completion,
        },
        RecipeRule {
            test_type: "MPI_Conditional_Barrier_Deadlock",
            tag: "MPI_BARRIER",
            template: MpiCompletion,
            defaults: vec![("num_processes", int(2))],
            expected_behavior: "Test may hang: ranks that skip the rank-dependent branch never reach the barrier.",
            assertion_method: "Verify completion on all ranks within the watchdog timeout.",
            assertion_kind: Completion,
        },
        RecipeRule {
            test_type: "MPI_Collective_Partial_Participation",
            tag: "MPI_COLLECTIVE",
            template: MpiCollective,
            defaults: vec![("num_processes", int(2)), ("assert_on_all_ranks", boolean(true))],
            expected_behavior: "Collective is entered by only a subset of ranks; the test may hang or \
                observe mismatched participation counts.",
            assertion_method: "Assert on every rank that the collective completed and that all ranks \
                entered the same number of collectives.",
            assertion_kind: CompletionAllRanks,
        },
        RecipeRule {
            test_type: "MPI_Single_Process_Communicator",
            tag: "MPI_SINGLE_PROC",
            template: MpiCompletion,
            defaults: vec![("num_processes", int(1))],
            expected_behavior: "Collective on a one-process communicator completes immediately.",
            assertion_method: "Verify completion within the watchdog timeout.",
            assertion_kind: Completion,
        },
        RecipeRule {
            test_type: "MPI_Init_Finalize_Pairing",
            tag: "MPI_INIT_FINALIZE",
            template: MpiInitFinalize,
            defaults: vec![("num_processes", int(1))],
            expected_behavior: "Program must call MPI_Init and MPI_Finalize exactly once each, in that order.",
            assertion_method: "Count MPI_Init and MPI_Finalize calls through shims and assert both equal one.",
            assertion_kind: CallPairing,
        },
        RecipeRule {
            test_type: "OMP_Data_Race_Shared_Accumulation",
            tag: "OMP_RACE",
            template: OmpConsistency,
            defaults: omp_defaults(4, 100, 1_000_000),
            expected_behavior: "Unsynchronized updates of a shared accumulator may lose increments; results \
                can differ between runs and from the sequential value.",
            assertion_method: "Consistency across repetitions: compare every parallel result with the expected value.",
            assertion_kind: ValueConsistency,
        },
        RecipeRule {
            test_type: "OMP_Missing_Private_Temporary",
            tag: "OMP_PRIVATE",
            template: OmpConsistency,
            defaults: omp_defaults(4, 100, 1_000_000),
            expected_behavior: "A shared temporary is overwritten by other threads between its write and read.",
            assertion_method: "Consistency across repetitions: compare every parallel result with the expected value.",
            assertion_kind: ValueConsistency,
        },
        RecipeRule {
            test_type: "OMP_Synchronization_Check",
            tag: "OMP_SYNC",
            template: OmpConsistency,
            defaults: omp_defaults(4, 100, 100_000),
            expected_behavior: "Protected update yields the sequential result under contention.",
            assertion_method: "Consistency across repetitions: compare every parallel result with the expected value.",
            assertion_kind: ValueConsistency,
        },
        RecipeRule {
            test_type: "OMP_Schedule_Coverage",
            tag: "OMP_SCHEDULE",
            template: OmpConsistency,
            defaults: {
                let mut d = omp_defaults(4, 10, 10_000);
                d.push(("schedule", ConditionValue::Str("static,dynamic,guided".into())));
                d
            },
            expected_behavior: "Loop result is independent of the scheduling policy.",
            assertion_method: "Consistency across repetitions and schedules: compare with the expected value.",
            assertion_kind: ValueConsistency,
        },
        RecipeRule {
            test_type: "OMP_Sections_Coverage",
            tag: "OMP_SECTIONS",
            template: OmpConsistency,
            defaults: omp_defaults(4, 20, 10_000),
            expected_behavior: "Every section runs exactly once and its result is visible after the construct.",
            assertion_method: "Consistency across repetitions: compare every parallel result with the expected value.",
            assertion_kind: ValueConsistency,
        },
        RecipeRule {
            test_type: "OMP_Task_Synchronization",
            tag: "OMP_TASKWAIT",
            template: OmpConsistency,
            defaults: omp_defaults(4, 20, 20),
            expected_behavior: "Task results may be read before the tasks complete, yielding wrong values.",
            assertion_method: "Consistency across repetitions: compare every parallel result with the expected value.",
            assertion_kind: ValueConsistency,
        },
        RecipeRule {
            test_type: "OMP_Firstprivate_Initialization",
            tag: "OMP_FIRSTPRIVATE",
            template: OmpConsistency,
            defaults: omp_defaults(4, 20, 10_000),
            expected_behavior: "Private copies start uninitialized; results depend on garbage values.",
            assertion_method: "Consistency across repetitions: compare every parallel result with the expected value.",
            assertion_kind: ValueConsistency,
        },
    ]
}

pub fn rule_for(test_type: &str) -> Option<RecipeRule> {
    rule_table().into_iter().find(|r| r.test_type == test_type)
}
