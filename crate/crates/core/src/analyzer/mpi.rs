use regex::Regex;
use std::sync::OnceLock;

use super::sketch::SyntaxSketch;
use super::{ConstructKind, ParallelConstruct};

fn mpi_callee() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^MPI_[A-Z][A-Za-z_]*$").expect("static regex"))
}

pub fn mpi_kind(name: &str) -> ConstructKind {
    match name {
        "MPI_Init" | "MPI_Init_thread" => ConstructKind::MpiInit,
        "MPI_Finalize" => ConstructKind::MpiFinalize,
        "MPI_Send" => ConstructKind::MpiSend,
        "MPI_Recv" => ConstructKind::MpiRecv,
        "MPI_Isend" => ConstructKind::MpiIsend,
        "MPI_Irecv" => ConstructKind::MpiIrecv,
        "MPI_Bcast" => ConstructKind::MpiBcast,
        "MPI_Scatter" => ConstructKind::MpiScatter,
        "MPI_Gather" => ConstructKind::MpiGather,
        "MPI_Reduce" => ConstructKind::MpiReduce,
        "MPI_Barrier" => ConstructKind::MpiBarrier,
        "MPI_Comm_rank" => ConstructKind::MpiCommRank,
        "MPI_Comm_size" => ConstructKind::MpiCommSize,
        _ => ConstructKind::Other,
    }
}

/// Token indices of every `MPI_Xxx(` call expression, in source order.
pub fn mpi_call_sites(sketch: &SyntaxSketch) -> Vec<usize> {
    let re = mpi_callee();
    (0..sketch.tokens.len())
        .filter(|&i| {
            let t = &sketch.tokens[i];
            t.is_ident()
                && re.is_match(&t.text)
                && sketch.is_tok(i + 1, "(")
                && !(i > 0
                    && matches!(sketch.tokens[i - 1].text.as_str(), "." | "->" | "::"))
        })
        .collect()
}

pub fn extract_mpi_calls(sketch: &SyntaxSketch) -> Vec<ParallelConstruct> {
    mpi_call_sites(sketch)
        .into_iter()
        .map(|i| {
            let t = &sketch.tokens[i];
            let call_args = sketch
                .split_args(i + 1)
                .into_iter()
                .map(|(a, b)| sketch.text_of(a, b))
                .collect();
            ParallelConstruct {
                id: String::new(),
                kind: mpi_kind(&t.text),
                name: t.text.clone(),
                location: sketch.location(t.line, t.col),
                clauses: Vec::new(),
                call_args,
                enclosing_function: sketch
                    .enclosing_function(i)
                    .map(|f| sketch.functions[f].id.clone()),
                context_flags: Default::default(),
            }
        })
        .collect()
}
