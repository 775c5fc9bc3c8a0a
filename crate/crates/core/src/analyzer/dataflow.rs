//! Lexical, intraprocedural data-sharing classification for variables touched
//! inside OpenMP parallel regions.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use super::lexer::TokenKind;
use super::openmp::{clause_variables, pragma_sites, PragmaSite};
use super::sketch::{SyntaxSketch, NON_TYPE_KEYWORDS};
use super::{Access, AccessMode, ConstructKind, DataFlowFact, DeclaredScope, Guard, ParallelConstruct, Sharing};

const ASSIGN_OPS: &[&str] = &["=", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "<<=", ">>="];

const TYPE_WORDS: &[&str] = &[
    "int", "double", "float", "char", "long", "short", "unsigned", "signed", "bool", "void",
    "auto", "const", "static", "volatile", "register", "constexpr", "struct", "class", "enum",
    "typename", "size_t", "extern", "inline", "mutable",
];

fn is_keyword(s: &str) -> bool {
    NON_TYPE_KEYWORDS.contains(&s) || TYPE_WORDS.contains(&s)
}

/// Whether token `i` (an identifier) is the name in a declaration such as
/// `double total = 0;`, `int i` in a for-init, or a parameter.
pub(crate) fn is_declaration(sketch: &SyntaxSketch, i: usize) -> bool {
    let toks = &sketch.tokens;
    let Some(next) = toks.get(i + 1) else {
        return false;
    };
    if !matches!(next.text.as_str(), "=" | ";" | "," | "[" | ")" | "{" | ":") {
        return false;
    }
    let mut k = i;
    let mut consumed_type = false;
    let mut angle = 0i32;
    while k > 0 {
        let t = &toks[k - 1];
        let s = t.text.as_str();
        let take = match s {
            "*" | "&" | "&&" | "::" => true,
            ">" => {
                angle += 1;
                true
            }
            ">>" => {
                angle += 2;
                true
            }
            "<" if angle > 0 => {
                angle -= 1;
                true
            }
            "," if angle > 0 => true,
            _ if t.kind == TokenKind::Ident && !NON_TYPE_KEYWORDS.contains(&s) => {
                consumed_type = true;
                true
            }
            _ if t.kind == TokenKind::Number && angle > 0 => true,
            _ => false,
        };
        if !take {
            break;
        }
        k -= 1;
    }
    if !consumed_type || angle != 0 {
        return false;
    }
    if k == 0 {
        return true;
    }
    matches!(toks[k - 1].text.as_str(), ";" | "{" | "}" | "(" | ",")
}

fn is_variable_occurrence(sketch: &SyntaxSketch, i: usize) -> bool {
    let t = &sketch.tokens[i];
    if t.kind != TokenKind::Ident || is_keyword(&t.text) {
        return false;
    }
    if i > 0 && matches!(sketch.tokens[i - 1].text.as_str(), "." | "->" | "::") {
        return false;
    }
    if sketch.is_tok(i + 1, "(") || sketch.is_tok(i + 1, "::") {
        return false;
    }
    true
}

fn is_unary_address_of(sketch: &SyntaxSketch, amp: usize) -> bool {
    if !sketch.tokens[amp].is("&") {
        return false;
    }
    match amp.checked_sub(1).map(|p| &sketch.tokens[p]) {
        None => true,
        Some(p) => !(matches!(p.kind, TokenKind::Ident | TokenKind::Number)
            && !NON_TYPE_KEYWORDS.contains(&p.text.as_str())
            || p.is(")")
            || p.is("]")),
    }
}

/// End (inclusive) of the right-hand side that starts at `i`.
fn rhs_end(sketch: &SyntaxSketch, i: usize, limit: usize) -> usize {
    let mut k = i;
    while k <= limit {
        let t = &sketch.tokens[k];
        match t.text.as_str() {
            "(" | "[" | "{" => {
                k = sketch.matching[k].unwrap_or(limit) + 1;
                continue;
            }
            ";" | "," | ")" | "]" | "}" => return k.saturating_sub(1),
            _ => {}
        }
        k += 1;
    }
    limit
}

/// Variable initialised in the header of the `for` loop at `for_tok`.
fn loop_control_variable(sketch: &SyntaxSketch, for_tok: usize) -> Option<String> {
    if !sketch.is_tok(for_tok, "for") || !sketch.is_tok(for_tok + 1, "(") {
        return None;
    }
    let close = sketch.matching[for_tok + 1]?;
    let mut k = for_tok + 2;
    while k < close && !sketch.tokens[k].is(";") {
        if sketch.tokens[k].is("=") && k > for_tok + 2 {
            let v = &sketch.tokens[k - 1];
            return (v.kind == TokenKind::Ident).then(|| v.text.clone());
        }
        k += 1;
    }
    None
}

fn innermost<'a>(sites: &'a [PragmaSite], i: usize, pred: impl Fn(&PragmaSite) -> bool) -> Option<(usize, &'a PragmaSite)> {
    sites
        .iter()
        .enumerate()
        .filter(|(_, s)| pred(s))
        .filter(|(_, s)| s.scope.is_some_and(|(a, b)| a <= i && i <= b))
        .max_by_key(|(_, s)| s.scope.map(|(a, _)| a))
}

#[derive(Default)]
struct VarInfo {
    accesses: Vec<(usize, AccessMode)>,
    guards: BTreeSet<Guard>,
    exclusive_blocks: Vec<Option<usize>>,
}

pub fn analyze_data_dependencies(
    sketch: &SyntaxSketch,
    constructs: &[ParallelConstruct],
) -> Vec<DataFlowFact> {
    let sites = pragma_sites(sketch);
    let mut facts = Vec::new();

    for site in &sites {
        if !site.directive.creates_team {
            continue;
        }
        let Some((a, b)) = site.scope else { continue };
        let Some(region) = constructs
            .iter()
            .find(|c| c.kind.is_openmp() && c.location.line == site.line && c.location.col == site.col)
        else {
            continue;
        };

        // data-sharing clauses of this directive and of worksharing directives nested in it
        let mut clause_sharing: BTreeMap<String, Sharing> = BTreeMap::new();
        let mut loop_vars: HashSet<String> = HashSet::new();
        for s in sites.iter().filter(|s| s.anchor >= a && s.anchor <= b) {
            for cl in &s.directive.clauses {
                let sharing = match cl.name.as_str() {
                    "reduction" => Sharing::Reduction,
                    "private" | "lastprivate" => Sharing::Private,
                    "firstprivate" => Sharing::Firstprivate,
                    "shared" => Sharing::SharedExplicit,
                    _ => continue,
                };
                for v in clause_variables(cl) {
                    let e = clause_sharing.entry(v).or_insert(sharing);
                    if sharing_rank(sharing) > sharing_rank(*e) {
                        *e = sharing;
                    }
                }
            }
            if matches!(s.directive.kind, ConstructKind::OmpParallelFor | ConstructKind::OmpFor) {
                if let Some(v) = loop_control_variable(sketch, s.anchor) {
                    loop_vars.insert(v);
                }
            }
        }

        let mut declared_inside: HashSet<String> = HashSet::new();
        for i in a..=b {
            if sketch.tokens[i].kind == TokenKind::Ident && is_declaration(sketch, i) {
                declared_inside.insert(sketch.tokens[i].text.clone());
            }
        }

        let mut address_taken: HashSet<String> = HashSet::new();
        let (fa, fb) = sketch
            .enclosing_function(a)
            .map(|f| sketch.function_bodies[f])
            .unwrap_or((0, sketch.tokens.len().saturating_sub(1)));
        for i in fa..fb {
            if is_unary_address_of(sketch, i) && sketch.tokens[i + 1].kind == TokenKind::Ident {
                address_taken.insert(sketch.tokens[i + 1].text.clone());
            }
        }

        let mut vars: BTreeMap<String, VarInfo> = BTreeMap::new();
        let mut skip: HashSet<usize> = HashSet::new();
        for i in a..=b {
            if skip.contains(&i) || !is_variable_occurrence(sketch, i) {
                continue;
            }
            let name = sketch.tokens[i].text.clone();
            let next = sketch.tokens.get(i + 1).map(|t| t.text.as_str()).unwrap_or("");
            let prev = i.checked_sub(1).map(|p| sketch.tokens[p].text.as_str()).unwrap_or("");
            let mode = if next == "=" {
                let end = rhs_end(sketch, i + 2, b);
                let mut mode = AccessMode::Write;
                for k in i + 2..=end.max(i + 1) {
                    if k <= b && sketch.tokens[k].text == name && is_variable_occurrence(sketch, k) {
                        mode = AccessMode::ReadWrite;
                        skip.insert(k);
                    }
                }
                mode
            } else if ASSIGN_OPS.contains(&next) || matches!(next, "++" | "--") || matches!(prev, "++" | "--") {
                AccessMode::ReadWrite
            } else {
                AccessMode::Read
            };
            let info = vars.entry(name).or_default();
            info.accesses.push((i, mode));
            if mode != AccessMode::Read {
                let guard = if innermost(&sites, i, |s| s.directive.kind == ConstructKind::OmpCritical).is_some() {
                    Guard::Critical
                } else if innermost(&sites, i, |s| s.directive.kind == ConstructKind::OmpAtomic).is_some() {
                    Guard::Atomic
                } else {
                    Guard::None
                };
                info.guards.insert(guard);
                let excl = innermost(&sites, i, |s| s.directive.is_exclusive())
                    .filter(|(_, s)| s.scope.is_some_and(|(sa, _)| sa >= a))
                    .map(|(idx, _)| idx);
                info.exclusive_blocks.push(excl);
            }
        }

        let mut region_facts = Vec::new();
        for (name, info) in vars {
            let is_loop_var = loop_vars.contains(&name);
            let in_clause = clause_sharing.contains_key(&name);
            let written = !info.exclusive_blocks.is_empty();
            if !(written || in_clause) {
                continue;
            }
            if declared_inside.contains(&name) && !is_loop_var {
                continue;
            }
            let declared_scope = if declared_inside.contains(&name) {
                DeclaredScope::InsideParallel
            } else {
                DeclaredScope::OutsideParallel
            };
            let sharing = if address_taken.contains(&name) {
                Sharing::Unknown
            } else if let Some(s) = clause_sharing.get(&name) {
                *s
            } else if is_loop_var {
                Sharing::Private
            } else {
                Sharing::SharedImplicit
            };
            let exclusive_writer = written
                && info.exclusive_blocks[0].is_some()
                && info.exclusive_blocks.iter().all(|e| *e == info.exclusive_blocks[0]);
            let first = info.accesses[0].0;
            region_facts.push((
                first,
                DataFlowFact {
                    region: region.id.clone(),
                    variable: name,
                    declared_scope,
                    accesses: info
                        .accesses
                        .iter()
                        .map(|&(i, mode)| Access {
                            line: sketch.tokens[i].line,
                            col: sketch.tokens[i].col,
                            mode,
                        })
                        .collect(),
                    sharing,
                    guarded_by: info.guards,
                    exclusive_writer,
                },
            ));
        }
        region_facts.sort_by(|x, y| (x.0, &x.1.variable).cmp(&(y.0, &y.1.variable)));
        facts.extend(region_facts.into_iter().map(|(_, f)| f));
    }
    facts
}

fn sharing_rank(s: Sharing) -> u8 {
    match s {
        Sharing::Reduction => 5,
        Sharing::Private => 4,
        Sharing::Firstprivate => 3,
        Sharing::SharedExplicit => 2,
        Sharing::SharedImplicit => 1,
        Sharing::Unknown => 0,
    }
}
