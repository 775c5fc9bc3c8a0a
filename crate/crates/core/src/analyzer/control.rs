use std::collections::{BTreeSet, HashMap};

use super::openmp::pragma_sites;
use super::sketch::{RegionKind, SyntaxSketch};
use super::{ContextFlag, ControlFlowSummary, ParallelConstruct};

/// Token index a construct is anchored at: the callee identifier for MPI
/// calls, the first token after the pragma for OpenMP directives.
pub fn locate(sketch: &SyntaxSketch, c: &ParallelConstruct) -> Option<usize> {
    if !c.is_mpi_call() {
        let d = sketch
            .directives
            .iter()
            .find(|d| d.line == c.location.line && d.col == c.location.col)?;
        Some(sketch.first_token_after_line(d.end_line))
    } else {
        sketch
            .tokens
            .iter()
            .position(|t| t.line == c.location.line && t.col == c.location.col)
    }
}

fn strip_address(arg: &str) -> Option<String> {
    let s = arg.trim().trim_start_matches('&').trim();
    let s = s.trim_start_matches('(').trim_end_matches(')').trim();
    if !s.is_empty() && s.chars().all(|c| c.is_alphanumeric() || c == '_') {
        Some(s.to_string())
    } else {
        None
    }
}

/// Variables that receive the calling rank via `MPI_Comm_rank(comm, &v)`,
/// grouped by enclosing function index.
pub fn rank_variables(sketch: &SyntaxSketch) -> HashMap<usize, BTreeSet<String>> {
    let mut out: HashMap<usize, BTreeSet<String>> = HashMap::new();
    for i in super::mpi::mpi_call_sites(sketch) {
        if !sketch.tokens[i].is("MPI_Comm_rank") {
            continue;
        }
        let args = sketch.split_args(i + 1);
        let Some(&(a, b)) = args.get(1) else { continue };
        let Some(f) = sketch.enclosing_function(i) else { continue };
        if let Some(v) = strip_address(&sketch.text_of(a, b)) {
            out.entry(f).or_default().insert(v);
        }
    }
    out
}

fn region_label(sketch: &SyntaxSketch, kind: RegionKind, keyword: usize, cond: Option<(usize, usize)>) -> String {
    let kw = &sketch.tokens[keyword];
    let cond_text = cond.map(|(a, b)| sketch.text_of(a, b)).unwrap_or_default();
    match kind {
        RegionKind::Else => format!("else({cond_text})@{}", kw.line),
        RegionKind::If => format!("if({cond_text})@{}", kw.line),
        RegionKind::Loop | RegionKind::Switch => format!("{}@{}", kw.text, kw.line),
    }
}

pub fn analyze_control_flow(
    sketch: &SyntaxSketch,
    constructs: &mut [ParallelConstruct],
) -> Vec<ControlFlowSummary> {
    let ranks = rank_variables(sketch);
    let teams: Vec<_> = pragma_sites(sketch)
        .into_iter()
        .filter(|s| s.directive.creates_team)
        .filter_map(|s| s.scope.map(|scope| (scope, s.line, s.directive.text.clone())))
        .collect();

    let mut out = Vec::with_capacity(constructs.len());
    for c in constructs.iter_mut() {
        let mut flags = BTreeSet::new();
        let mut nesting: Vec<(usize, String)> = Vec::new();
        if let Some(pos) = locate(sketch, c) {
            let func = sketch.enclosing_function(pos);
            let rank_vars = func.and_then(|f| ranks.get(&f));
            for r in &sketch.regions {
                if !(r.body.0 <= pos && pos <= r.body.1) {
                    continue;
                }
                match r.kind {
                    RegionKind::If | RegionKind::Else | RegionKind::Switch => {
                        flags.insert(ContextFlag::InsideConditional);
                    }
                    RegionKind::Loop => {
                        flags.insert(ContextFlag::InsideLoop);
                    }
                }
                if matches!(r.kind, RegionKind::If | RegionKind::Else) {
                    if let (Some((a, b)), Some(vars)) = (r.cond, rank_vars) {
                        let references_rank = sketch.tokens[a..=b.min(sketch.tokens.len() - 1)]
                            .iter()
                            .any(|t| t.is_ident() && vars.contains(&t.text));
                        if references_rank {
                            flags.insert(ContextFlag::RankDependentBranch);
                        }
                    }
                }
                nesting.push((r.keyword, region_label(sketch, r.kind, r.keyword, r.cond)));
            }
            for ((a, b), line, text) in &teams {
                let own = c.kind.is_openmp() && *line == c.location.line;
                if !own && *a <= pos && pos <= *b {
                    flags.insert(ContextFlag::InsideParallelRegion);
                    // pragma sits just before its anchor token
                    nesting.push((a.saturating_sub(1), format!("omp {text}@{line}")));
                }
            }
        }
        nesting.sort();
        c.context_flags = flags.clone();
        out.push(ControlFlowSummary {
            construct_id: c.id.clone(),
            flags,
            nesting: nesting.into_iter().map(|(_, s)| s).collect(),
        });
    }
    out
}
