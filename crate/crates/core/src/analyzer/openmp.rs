use super::sketch::SyntaxSketch;
use super::{Clause, ConstructKind, ParallelConstruct};

/// A `#pragma omp` line split into its directive words and clauses.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OmpDirective {
    pub kind: ConstructKind,
    /// Directive words, e.g. `["parallel", "for"]` or `["single"]`.
    pub words: Vec<String>,
    pub clauses: Vec<Clause>,
    /// Everything after `omp`, whitespace-collapsed.
    pub text: String,
    /// True when the directive creates a team of threads.
    pub creates_team: bool,
}

impl OmpDirective {
    /// Directives that are followed by a structured block or statement.
    pub fn has_body(&self) -> bool {
        let first = self.words.first().map(String::as_str).unwrap_or("");
        !matches!(
            first,
            "barrier"
                | "taskwait"
                | "taskyield"
                | "flush"
                | "threadprivate"
                | "declare"
                | "end"
                | "requires"
                | "cancel"
                | "cancellation"
                | "scan"
                | "depobj"
                | ""
        )
    }

    /// Blocks executed by exactly one thread of the team.
    pub fn is_exclusive(&self) -> bool {
        matches!(self.kind, ConstructKind::OmpSection)
            || matches!(
                self.words.first().map(String::as_str),
                Some("single" | "master" | "masked")
            )
    }

    pub fn clause(&self, name: &str) -> Option<&Clause> {
        self.clauses.iter().find(|c| c.name == name)
    }
}

/// Recognize the text following `#pragma`; returns `None` for non-OpenMP pragmas.
pub fn parse_pragma(directive_text: &str) -> Option<OmpDirective> {
    let rest = directive_text.strip_prefix('#')?.trim_start();
    let rest = rest.strip_prefix("pragma")?;
    if !rest.starts_with(char::is_whitespace) {
        return None;
    }
    let rest = rest.trim_start();
    let rest = rest.strip_prefix("omp")?;
    if !(rest.is_empty() || rest.starts_with(char::is_whitespace)) {
        return None;
    }
    let text = rest.trim().to_string();
    let items = tokenize_clauses(&text);

    let word = |i: usize| items.get(i).map(|(w, a)| (w.as_str(), a.is_some()));
    let (kind, consumed, creates_team) = match (word(0), word(1)) {
        (Some(("parallel", false)), Some(("for" | "loop", false))) => {
            let extra = usize::from(matches!(word(2), Some(("simd", false))));
            (ConstructKind::OmpParallelFor, 2 + extra, true)
        }
        (Some(("parallel", false)), Some(("sections", false))) => (ConstructKind::OmpSections, 2, true),
        (Some(("parallel", _)), _) => (ConstructKind::OmpParallel, 1, true),
        (Some(("for", false)), _) => {
            let extra = usize::from(matches!(word(1), Some(("simd", false))));
            (ConstructKind::OmpFor, 1 + extra, false)
        }
        (Some(("sections", false)), _) => (ConstructKind::OmpSections, 1, false),
        (Some(("section", false)), _) => (ConstructKind::OmpSection, 1, false),
        (Some(("critical", _)), _) => (ConstructKind::OmpCritical, 1, false),
        (Some(("atomic", _)), _) => (ConstructKind::OmpAtomic, 1, false),
        (Some(("barrier", false)), _) => (ConstructKind::OmpBarrier, 1, false),
        (Some(("task", false)), _) => (ConstructKind::OmpTask, 1, false),
        (Some(("taskwait", _)), _) => (ConstructKind::OmpTaskwait, 1, false),
        (Some((_, false)), _) => (ConstructKind::Other, 1, false),
        _ => (ConstructKind::Other, 0, false),
    };

    let mut words: Vec<String> = items.iter().take(consumed).map(|(w, _)| w.clone()).collect();
    let mut clauses = Vec::new();
    // `critical(name)`: the name travels as a clause
    if kind == ConstructKind::OmpCritical {
        if let Some((_, Some(arg))) = items.first() {
            clauses.push(Clause {
                name: "name".into(),
                argument: Some(arg.clone()),
            });
        }
    }
    // `parallel(...)` is malformed; keep it visible as an argument-less word
    if words.is_empty() {
        if let Some((w, _)) = items.first() {
            words.push(w.clone());
        }
    }
    for (name, arg) in items.into_iter().skip(consumed) {
        clauses.push(Clause {
            name,
            argument: arg,
        });
    }
    Some(OmpDirective {
        kind,
        words,
        clauses,
        text,
        creates_team,
    })
}

/// Split `a(b) c, d(e(f))` into `[(a, Some(b)), (c, None), (d, Some(e(f)))]`.
fn tokenize_clauses(text: &str) -> Vec<(String, Option<String>)> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() || c == ',' {
            i += 1;
            continue;
        }
        let start = i;
        while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
            i += 1;
        }
        if start == i {
            // stray punctuation; keep it as its own word
            out.push((chars[i].to_string(), None));
            i += 1;
            continue;
        }
        let name: String = chars[start..i].iter().collect();
        let mut j = i;
        while j < chars.len() && chars[j].is_whitespace() {
            j += 1;
        }
        if j < chars.len() && chars[j] == '(' {
            let mut depth = 0;
            let mut k = j;
            while k < chars.len() {
                match chars[k] {
                    '(' => depth += 1,
                    ')' => {
                        depth -= 1;
                        if depth == 0 {
                            break;
                        }
                    }
                    _ => {}
                }
                k += 1;
            }
            let arg: String = chars[j + 1..k.min(chars.len())].iter().collect();
            out.push((name, Some(arg.trim().to_string())));
            i = (k + 1).min(chars.len());
        } else {
            out.push((name, None));
        }
    }
    out
}

/// Names listed in a data-sharing clause argument. For `reduction(+:a, b)`
/// the operator prefix is dropped.
pub fn clause_variables(clause: &Clause) -> Vec<String> {
    let Some(arg) = &clause.argument else {
        return Vec::new();
    };
    let list = if matches!(clause.name.as_str(), "reduction" | "in_reduction" | "task_reduction") {
        arg.rsplit_once(':').map_or(arg.as_str(), |(_, v)| v)
    } else {
        arg.as_str()
    };
    list.split(',')
        .map(|v| {
            // strip array sections: a[0:n] -> a
            let v = v.trim();
            v.split('[').next().unwrap_or(v).trim().to_string()
        })
        .filter(|v| !v.is_empty())
        .collect()
}

/// One OpenMP pragma occurrence found in a sketch.
#[derive(Debug, Clone)]
pub struct PragmaSite {
    pub directive: OmpDirective,
    pub line: u32,
    pub col: u32,
    /// First token after the pragma line(s).
    pub anchor: usize,
    /// Token range governed by the pragma, if it takes a body.
    pub scope: Option<(usize, usize)>,
}

pub fn pragma_sites(sketch: &SyntaxSketch) -> Vec<PragmaSite> {
    let mut out = Vec::new();
    for d in &sketch.directives {
        let Some(directive) = parse_pragma(&d.text) else {
            continue;
        };
        let anchor = sketch.first_token_after_line(d.end_line);
        let scope = if directive.has_body()
            && anchor < sketch.tokens.len()
            && !sketch.tokens[anchor].is("}")
        {
            Some((anchor, sketch.statement_end(anchor)))
        } else {
            None
        };
        out.push(PragmaSite {
            directive,
            line: d.line,
            col: d.col,
            anchor,
            scope,
        });
    }
    out
}

pub fn extract_openmp_directives(sketch: &SyntaxSketch) -> Vec<ParallelConstruct> {
    pragma_sites(sketch)
        .into_iter()
        .map(|site| {
            let enclosing_function = sketch
                .enclosing_function(site.anchor)
                .map(|f| sketch.functions[f].id.clone());
            ParallelConstruct {
                id: String::new(),
                kind: site.directive.kind,
                name: site.directive.text.clone(),
                location: sketch.location(site.line, site.col),
                clauses: site.directive.clauses.clone(),
                call_args: Vec::new(),
                enclosing_function,
                context_flags: Default::default(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clauses(d: &OmpDirective) -> Vec<(&str, Option<&str>)> {
        d.clauses
            .iter()
            .map(|c| (c.name.as_str(), c.argument.as_deref()))
            .collect()
    }

    #[test]
    fn combined_parallel_for() {
        let d = parse_pragma("#pragma omp parallel for").unwrap();
        assert_eq!(d.kind, ConstructKind::OmpParallelFor);
        assert!(d.clauses.is_empty());
        assert!(d.creates_team);
    }

    #[test]
    fn reduction_argument_kept_intact() {
        let d = parse_pragma("#pragma omp parallel for reduction(+:total)").unwrap();
        assert_eq!(clauses(&d), [("reduction", Some("+:total"))]);
        assert_eq!(clause_variables(&d.clauses[0]), ["total"]);
    }

    #[test]
    fn private_and_shared() {
        let d = parse_pragma("#pragma omp parallel private(a) shared(b)").unwrap();
        assert_eq!(d.kind, ConstructKind::OmpParallel);
        assert_eq!(clauses(&d), [("private", Some("a")), ("shared", Some("b"))]);
    }

    #[test]
    fn nested_parens_and_commas() {
        let d = parse_pragma("#pragma omp for schedule(dynamic, 4), collapse(2) nowait").unwrap();
        assert_eq!(d.kind, ConstructKind::OmpFor);
        assert_eq!(
            clauses(&d),
            [("schedule", Some("dynamic, 4")), ("collapse", Some("2")), ("nowait", None)]
        );
        let d = parse_pragma("#pragma omp task depend(in: a[f(1)]) firstprivate(x, y)").unwrap();
        assert_eq!(d.kind, ConstructKind::OmpTask);
        assert_eq!(clause_variables(&d.clauses[1]), ["x", "y"]);
        assert_eq!(d.clauses[0].argument.as_deref(), Some("in: a[f(1)]"));
    }

    #[test]
    fn directive_kinds() {
        let k = |s: &str| parse_pragma(s).unwrap().kind;
        assert_eq!(k("#pragma omp critical (lock)"), ConstructKind::OmpCritical);
        assert_eq!(k("#pragma omp atomic update"), ConstructKind::OmpAtomic);
        assert_eq!(k("#pragma omp barrier"), ConstructKind::OmpBarrier);
        assert_eq!(k("#pragma omp taskwait"), ConstructKind::OmpTaskwait);
        assert_eq!(k("#pragma omp section"), ConstructKind::OmpSection);
        assert_eq!(k("#pragma omp parallel sections"), ConstructKind::OmpSections);
        assert_eq!(k("#pragma omp single nowait"), ConstructKind::Other);
        assert_eq!(k("#pragma omp frobnicate(3)"), ConstructKind::Other);
        let d = parse_pragma("#pragma omp critical(lock)").unwrap();
        assert_eq!(clauses(&d), [("name", Some("lock"))]);
        let d = parse_pragma("#pragma omp frobnicate").unwrap();
        assert_eq!(d.text, "frobnicate");
        assert!(parse_pragma("#pragma once").is_none());
        assert!(parse_pragma("#pragma ompx parallel").is_none());
        assert!(parse_pragma("#include <omp.h>").is_none());
    }
}
