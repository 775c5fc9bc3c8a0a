//! Prompt assembly and completion parsing for the language-model backend.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::template::Embedding;
use super::{Feedback, SynthParams, HEADER};
use crate::analyzer::{FunctionInfo, SourceUnit};
use crate::recipe::{TemplateFamily, TestRecipe};

/// Where a completion must place the code under test.
pub const CODE_MARKER: &str = "// HPCT_CODE_UNDER_TEST";

const TEMPERATURES: [f64; 3] = [0.2, 0.5, 0.7];

const SYSTEM_PREAMBLE: &str = "You write self-contained C++17 test programs for OpenMP and MPI code. \
A test must build with a single compiler invocation, finish on its own, and report its verdict \
only through its exit status.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExcerptMode {
    /// Enclosing function plus a few context lines.
    Function,
    /// The whole file, unless it exceeds the excerpt limit.
    FullFile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system_preamble: String,
    pub recipe_json: String,
    pub excerpt: String,
    /// 1-based inclusive line range of the excerpt.
    pub excerpt_range: (u32, u32),
    pub output_instructions: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feedback: Option<String>,
    pub temperature: f64,
    pub n: usize,
}

impl PromptBundle {
    pub fn user_message(&self) -> String {
        let mut s = format!(
            "Test recipe:\n{}\n\nSource excerpt (lines {}-{}):\n```cpp\n{}\n```\n\n{}",
            self.recipe_json, self.excerpt_range.0, self.excerpt_range.1, self.excerpt, self.output_instructions
        );
        if let Some(f) = &self.feedback {
            s.push_str("\n\nA previous attempt was rejected:\n");
            s.push_str(f);
        }
        s
    }
}

fn output_instructions(family: Option<TemplateFamily>) -> String {
    let mut s = String::from(
        "Reply with exactly one ```cpp fenced block containing the complete test program.\n\
         - Put the line `// HPCT_CODE_UNDER_TEST` after your #include lines; it is replaced by the source \
         above, with its `main` renamed to `hpct_target_main`.\n\
         - Define `int main(...)`.\n\
         - Guard every call into the code under test with HPCT_ASSERT_COMPLETES(seconds, statements).\n\
         - Check results with HPCT_ASSERT_TRUE / HPCT_ASSERT_EQ / HPCT_ASSERT_NEAR / HPCT_ASSERT_ON_RANK.\n\
         - Exit with 0 on success, 2 on a failed assertion, 3 on timeout, 4 on setup errors \
         (return hpct_result() does this for you).\n",
    );
    if family.is_some_and(TemplateFamily::is_mpi) {
        s.push_str(
            "- Call MPI_Init and MPI_Finalize exactly once each in main, and check the communicator size \
             with HPCT_REQUIRE_PROCS(n) right after MPI_Init.\n",
        );
    } else {
        s.push_str("- Set the thread count with omp_set_num_threads and repeat the check as the recipe says.\n");
    }
    s
}

fn excerpt(unit: &SourceUnit, function: Option<&FunctionInfo>, params: &SynthParams) -> (String, (u32, u32)) {
    let lines: Vec<&str> = unit.text.lines().collect();
    let total = lines.len().max(1) as u32;
    let function_range = function.map(|f| {
        let ctx = params.context_lines as u32;
        let start = f.location.line.min(f.body_span.0).saturating_sub(ctx).max(1);
        let end = (f.body_span.1 + ctx).min(total);
        (start, end)
    });
    let full = (1, total);
    let range = match (params.excerpt_mode, function_range) {
        (ExcerptMode::FullFile, Some(fr)) if lines.len() > params.max_excerpt_lines => fr,
        (ExcerptMode::FullFile, _) => full,
        (ExcerptMode::Function, Some(fr)) => fr,
        (ExcerptMode::Function, None) => full,
    };
    let text = lines[(range.0 - 1) as usize..(range.1 as usize).min(lines.len())].join("\n");
    (text, range)
}

pub fn build_prompt(
    recipe: &TestRecipe,
    unit: &SourceUnit,
    function: Option<&FunctionInfo>,
    params: &SynthParams,
    feedback: Option<&Feedback>,
) -> PromptBundle {
    let family = crate::recipe::rule_for(&recipe.test_type).map(|r| r.template);
    let (excerpt, excerpt_range) = excerpt(unit, function, params);
    // start at the configured temperature, move up the ladder on revisions
    let base = TEMPERATURES
        .iter()
        .position(|t| *t >= params.temperature - 1e-9)
        .unwrap_or(TEMPERATURES.len() - 1);
    let step = (base + recipe.revision() as usize).min(TEMPERATURES.len() - 1);
    let feedback = feedback.map(|f| {
        let mut s = String::from("Findings:\n");
        for (code, msg) in &f.findings {
            s.push_str(&format!("- {code}: {msg}\n"));
        }
        s.push_str("Previous candidate:\n```cpp\n");
        s.push_str(f.prior_candidate.trim_end());
        s.push_str("\n```\n");
        s
    });
    PromptBundle {
        system_preamble: SYSTEM_PREAMBLE.to_string(),
        recipe_json: serde_json::to_string_pretty(recipe).unwrap_or_default(),
        excerpt,
        excerpt_range,
        output_instructions: output_instructions(family),
        feedback,
        temperature: TEMPERATURES[step],
        n: params.n_candidates.max(1),
    }
}

/// Defines applied around the embedded code for completions; the same
/// interposition the templates use.
pub fn llm_embedding(family: TemplateFamily, recipe: &TestRecipe) -> Embedding {
    let mut e = Embedding::default();
    e.defines.push(("main".into(), "hpct_target_main".into()));
    if family.is_mpi() {
        e.defines.push(("MPI_Init".into(), "hpct_shim_MPI_Init".into()));
        e.defines.push(("MPI_Finalize".into(), "hpct_shim_MPI_Finalize".into()));
        let ordering = ["rank0_send_first", "rank1_recv_first"].iter().any(|k| recipe.condition(k).is_some());
        if ordering {
            e.defines.push(("MPI_Send".into(), "MPI_Ssend".into()));
        }
    }
    e
}

#[derive(Debug, Clone, PartialEq)]
pub struct LlmParse {
    pub source_text: String,
    pub warnings: Vec<String>,
}

fn fence_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?s)```[A-Za-z0-9+_-]*[ \t]*\r?\n(.*?)```").expect("static regex"))
}

fn void_main_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\bvoid\s+main\s*\(").expect("static regex"))
}

/// Extract the test program from a completion: first fenced block, header
/// injected if missing, `void main` normalized.
pub fn parse_llm_output(text: &str) -> Result<LlmParse, String> {
    let mut warnings = Vec::new();
    let blocks: Vec<&str> = fence_re()
        .captures_iter(text)
        .filter_map(|c| c.get(1).map(|m| m.as_str()))
        .collect();
    let code = match blocks.as_slice() {
        [] if text.contains("#include") && text.contains("main") => {
            warnings.push("no fenced block; using the whole reply".to_string());
            text.to_string()
        }
        [] => return Err("no code block found".into()),
        [first, rest @ ..] => {
            if !rest.is_empty() {
                warnings.push(format!("{} code blocks; using the first", blocks.len()));
            }
            first.to_string()
        }
    };
    if code.trim().is_empty() {
        return Err("empty code block".into());
    }
    let mut code = void_main_re().replace_all(&code, "int main(").into_owned();
    if !code.contains("HPCT_HEADER_VERSION") {
        let mut inject = String::new();
        if code.contains("<mpi.h>") && !code.contains("HPCT_USE_MPI") {
            inject.push_str("#define HPCT_USE_MPI 1\n");
        }
        inject.push_str(HEADER);
        let lines: Vec<&str> = code.lines().collect();
        let at = lines
            .iter()
            .rposition(|l| l.trim_start().starts_with("#include"))
            .map(|i| i + 1)
            .unwrap_or(0);
        let mut out = lines[..at].join("\n");
        if !out.is_empty() {
            out.push('\n');
        }
        out.push_str(&inject);
        out.push_str(&lines[at..].join("\n"));
        out.push('\n');
        code = out;
    }
    if !code.ends_with('\n') {
        code.push('\n');
    }
    Ok(LlmParse {
        source_text: code,
        warnings,
    })
}
