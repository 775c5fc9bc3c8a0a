//! Lightweight concrete-syntax sketch: tokens, a brace-matched block tree,
//! preprocessor lines, function definitions and statement extents.
//!
//! This is not a C++ parser. It understands just enough structure to scope
//! pragmas to the statement that follows them, to find call expressions, and
//! to classify blocks as function bodies or control-flow bodies.

use std::collections::HashSet;

use super::lexer::{self, collapse_ws, Directive, Token, TokenKind};
use super::{FunctionInfo, Location, SourceUnit};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    Function,
    If,
    Else,
    Loop,
    Switch,
    Namespace,
    Type,
    Plain,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub open: usize,
    pub close: usize,
    pub kind: BlockKind,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub depth: usize,
    pub start_line: u32,
    pub end_line: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionKind {
    If,
    Else,
    Loop,
    Switch,
}

/// A control-flow body: `if`/`else`/loop/`switch` plus the token range of the
/// governing condition (for `else`, the condition of the matching `if`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Region {
    pub kind: RegionKind,
    pub keyword: usize,
    pub cond: Option<(usize, usize)>,
    pub body: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Degradation {
    UnbalancedBraces(u32),
}

impl std::fmt::Display for Degradation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Degradation::UnbalancedBraces(l) => write!(f, "unbalanced_braces@{l}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntaxSketch {
    pub path: String,
    pub file_name: String,
    pub cleaned: String,
    pub tokens: Vec<Token>,
    pub directives: Vec<Directive>,
    /// Matching bracket for every `(`/`)`/`{`/`}`/`[`/`]` token.
    pub matching: Vec<Option<usize>>,
    pub blocks: Vec<Block>,
    pub roots: Vec<usize>,
    pub functions: Vec<FunctionInfo>,
    /// Token range (open brace, close brace) of each entry in `functions`.
    pub function_bodies: Vec<(usize, usize)>,
    pub regions: Vec<Region>,
    pub degraded: Vec<Degradation>,
}

pub const CONTROL_KEYWORDS: &[&str] = &["if", "for", "while", "switch", "catch", "return"];

pub const NON_TYPE_KEYWORDS: &[&str] = &[
    "return", "if", "else", "for", "while", "do", "switch", "case", "default", "break",
    "continue", "goto", "sizeof", "new", "delete", "throw", "typedef", "using", "namespace",
    "public", "private", "protected", "operator", "this", "true", "false", "nullptr", "and",
    "or", "not", "try", "catch", "alignof", "decltype", "static_assert",
];

impl SyntaxSketch {
    pub fn text_of(&self, a: usize, b: usize) -> String {
        if a > b || b >= self.tokens.len() {
            return String::new();
        }
        collapse_ws(&self.cleaned[self.tokens[a].start..self.tokens[b].end])
    }

    pub fn tok(&self, i: usize) -> Option<&Token> {
        self.tokens.get(i)
    }

    pub fn is_tok(&self, i: usize, s: &str) -> bool {
        self.tokens.get(i).is_some_and(|t| t.is(s))
    }

    pub fn location(&self, line: u32, col: u32) -> Location {
        Location {
            file: self.file_name.clone(),
            line,
            col,
        }
    }

    /// Index of the first token that starts after `line`.
    pub fn first_token_after_line(&self, line: u32) -> usize {
        self.tokens.partition_point(|t| t.line <= line)
    }

    /// Index of the last token of the statement that starts at `i`.
    pub fn statement_end(&self, i: usize) -> usize {
        statement_end(&self.tokens, &self.matching, i)
    }

    /// Index of the function body (open, close) enclosing token `i`.
    pub fn enclosing_function(&self, i: usize) -> Option<usize> {
        self.function_bodies
            .iter()
            .position(|&(a, b)| a <= i && i <= b)
    }

    /// Maximum nesting depth of the block tree (0 when there are no blocks).
    pub fn block_depth(&self) -> usize {
        self.blocks.iter().map(|b| b.depth + 1).max().unwrap_or(0)
    }

    /// Split the contents of the parenthesised list opened at `open` at
    /// top-level commas. Returns token ranges (inclusive); empty list for `()`.
    pub fn split_args(&self, open: usize) -> Vec<(usize, usize)> {
        let Some(close) = self.matching.get(open).copied().flatten() else {
            return Vec::new();
        };
        let mut out = Vec::new();
        let mut start = open + 1;
        let mut i = open + 1;
        while i < close {
            let t = &self.tokens[i];
            if matches!(t.text.as_str(), "(" | "[" | "{") {
                i = self.matching[i].unwrap_or(i) + 1;
                continue;
            }
            if t.is(",") {
                if start < i {
                    out.push((start, i - 1));
                }
                start = i + 1;
            }
            i += 1;
        }
        if start < close {
            out.push((start, close - 1));
        }
        out
    }
}

fn match_brackets(tokens: &[Token]) -> (Vec<Option<usize>>, Vec<Degradation>) {
    let mut matching = vec![None; tokens.len()];
    let mut degraded = Vec::new();
    let mut stacks: [Vec<usize>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for (i, t) in tokens.iter().enumerate() {
        if t.kind != TokenKind::Punct {
            continue;
        }
        let (slot, open) = match t.text.as_str() {
            "(" => (0, true),
            ")" => (0, false),
            "[" => (1, true),
            "]" => (1, false),
            "{" => (2, true),
            "}" => (2, false),
            _ => continue,
        };
        if open {
            stacks[slot].push(i);
        } else if let Some(o) = stacks[slot].pop() {
            matching[o] = Some(i);
            matching[i] = Some(o);
        } else if slot == 2 {
            degraded.push(Degradation::UnbalancedBraces(t.line));
        }
    }
    for &o in &stacks[2] {
        degraded.push(Degradation::UnbalancedBraces(tokens[o].line));
    }
    (matching, degraded)
}

pub(crate) fn statement_end(tokens: &[Token], matching: &[Option<usize>], i: usize) -> usize {
    let n = tokens.len();
    if i >= n {
        return n.saturating_sub(1);
    }
    let after_paren = |k: usize| -> Option<usize> {
        if k < n && tokens[k].is("(") {
            matching[k].map(|c| c + 1)
        } else {
            None
        }
    };
    match tokens[i].text.as_str() {
        "{" => matching[i].unwrap_or(n - 1),
        "if" => {
            let Some(body) = after_paren(i + 1) else {
                return simple_end(tokens, matching, i);
            };
            let end = statement_end(tokens, matching, body);
            if end + 1 < n && tokens[end + 1].is("else") {
                statement_end(tokens, matching, end + 2)
            } else {
                end
            }
        }
        "for" | "while" | "switch" => match after_paren(i + 1) {
            Some(body) => statement_end(tokens, matching, body),
            None => simple_end(tokens, matching, i),
        },
        "do" => {
            let end = statement_end(tokens, matching, i + 1);
            let mut k = end + 1;
            if k < n && tokens[k].is("while") {
                if let Some(p) = after_paren(k + 1) {
                    k = p;
                }
                if k < n && tokens[k].is(";") {
                    return k;
                }
                return k.saturating_sub(1).max(end);
            }
            end
        }
        _ => simple_end(tokens, matching, i),
    }
}

fn simple_end(tokens: &[Token], matching: &[Option<usize>], i: usize) -> usize {
    let mut k = i;
    while k < tokens.len() {
        let t = &tokens[k];
        match t.text.as_str() {
            ";" => return k,
            "(" | "[" | "{" => {
                k = matching[k].unwrap_or(tokens.len() - 1) + 1;
                continue;
            }
            ")" | "]" | "}" => return k.saturating_sub(1).max(i),
            _ => {}
        }
        k += 1;
    }
    tokens.len() - 1
}

/// Walk back from `close_paren` over trailing qualifiers to decide whether
/// the `{` at `open` opens a function body; returns (name token, open paren).
fn function_head(tokens: &[Token], matching: &[Option<usize>], open: usize) -> Option<(usize, usize)> {
    let mut k = open.checked_sub(1)?;
    while matches!(
        tokens[k].text.as_str(),
        "const" | "noexcept" | "override" | "final" | "volatile" | "&" | "&&"
    ) {
        k = k.checked_sub(1)?;
    }
    // constructor initializer lists are not handled; they fall back to Plain
    if !tokens[k].is(")") {
        return None;
    }
    let lparen = matching[k]?;
    let name = lparen.checked_sub(1)?;
    let nt = &tokens[name];
    if !nt.is_ident() || CONTROL_KEYWORDS.contains(&nt.text.as_str()) {
        return None;
    }
    Some((name, lparen))
}

fn declaration_start(tokens: &[Token], name: usize) -> usize {
    let mut k = name;
    while k > 0 {
        let t = &tokens[k - 1];
        if matches!(t.text.as_str(), ";" | "}" | "{") || t.is(":") && k >= 2 && matches!(tokens[k - 2].text.as_str(), "public" | "private" | "protected") {
            break;
        }
        k -= 1;
    }
    k
}

pub fn parse_source(unit: &SourceUnit) -> SyntaxSketch {
    let lexed = lexer::lex(&unit.text);
    let tokens = lexed.tokens;
    let (matching, degraded) = match_brackets(&tokens);
    let file_name = unit.file_name();

    // block tree
    let mut blocks: Vec<Block> = Vec::new();
    let mut roots = Vec::new();
    let mut stack: Vec<usize> = Vec::new();
    let mut functions = Vec::new();
    let mut function_bodies = Vec::new();
    for (i, t) in tokens.iter().enumerate() {
        if t.is("{") {
            let Some(close) = matching[i] else {
                continue;
            };
            let parent = stack.last().copied();
            let at_decl_scope = parent.map_or(true, |p| {
                matches!(blocks[p].kind, BlockKind::Namespace | BlockKind::Type)
            });
            let mut kind = classify_block(&tokens, &matching, i);
            if kind == BlockKind::Function && !at_decl_scope {
                kind = BlockKind::Plain;
            }
            if kind == BlockKind::Function {
                if let Some((name_tok, lparen)) = function_head(&tokens, &matching, i) {
                    let mut name_start = name_tok;
                    while name_start >= 2
                        && tokens[name_start - 1].is("::")
                        && tokens[name_start - 2].is_ident()
                    {
                        name_start -= 2;
                    }
                    let decl_start = declaration_start(&tokens, name_start);
                    let text_of = |a: usize, b: usize| {
                        if a > b {
                            String::new()
                        } else {
                            collapse_ws(&lexed.cleaned[tokens[a].start..tokens[b].end])
                        }
                    };
                    let name = text_of(name_start, name_tok).replace(' ', "");
                    let return_type_text = if decl_start < name_start {
                        text_of(decl_start, name_start - 1)
                    } else {
                        String::new()
                    };
                    let sketch_args = split_top_level(&tokens, &matching, lparen);
                    let mut parameter_texts: Vec<String> =
                        sketch_args.iter().map(|&(a, b)| text_of(a, b)).collect();
                    if parameter_texts.len() == 1 && parameter_texts[0] == "void" {
                        parameter_texts.clear();
                    }
                    let nt = &tokens[name_tok];
                    functions.push(FunctionInfo {
                        id: format!("fn:{}@{}:{}", name, file_name, nt.line),
                        name,
                        return_type_text,
                        parameter_texts,
                        location: Location {
                            file: file_name.clone(),
                            line: tokens[name_start].line,
                            col: tokens[name_start].col,
                        },
                        body_span: (t.line, tokens[close].line),
                    });
                    function_bodies.push((i, close));
                } else {
                    kind = BlockKind::Plain;
                }
            }
            let idx = blocks.len();
            blocks.push(Block {
                open: i,
                close,
                kind,
                parent,
                children: Vec::new(),
                depth: stack.len(),
                start_line: t.line,
                end_line: tokens[close].line,
            });
            match parent {
                Some(p) => blocks[p].children.push(idx),
                None => roots.push(idx),
            }
            stack.push(idx);
        } else if t.is("}") {
            if let Some(&top) = stack.last() {
                if blocks[top].close == i {
                    stack.pop();
                }
            }
        }
    }

    let regions = control_regions(&tokens, &matching);

    SyntaxSketch {
        path: unit.path.clone(),
        file_name,
        cleaned: lexed.cleaned,
        tokens,
        directives: lexed.directives,
        matching,
        blocks,
        roots,
        functions,
        function_bodies,
        regions,
        degraded,
    }
}

fn split_top_level(tokens: &[Token], matching: &[Option<usize>], open: usize) -> Vec<(usize, usize)> {
    let Some(close) = matching[open] else {
        return Vec::new();
    };
    let mut out = Vec::new();
    let mut start = open + 1;
    let mut i = open + 1;
    let mut angle = 0i32;
    while i < close {
        let t = &tokens[i];
        match t.text.as_str() {
            "(" | "[" | "{" => {
                i = matching[i].unwrap_or(i) + 1;
                continue;
            }
            "<" => angle += 1,
            ">" => angle = (angle - 1).max(0),
            ">>" => angle = (angle - 2).max(0),
            "," if angle == 0 => {
                if start < i {
                    out.push((start, i - 1));
                }
                start = i + 1;
            }
            _ => {}
        }
        i += 1;
    }
    if start < close {
        out.push((start, close - 1));
    }
    out
}

fn classify_block(tokens: &[Token], matching: &[Option<usize>], open: usize) -> BlockKind {
    let Some(prev) = open.checked_sub(1) else {
        return BlockKind::Plain;
    };
    let pt = &tokens[prev];
    if pt.is("else") {
        return BlockKind::Else;
    }
    if pt.is("do") {
        return BlockKind::Loop;
    }
    if pt.is(")") {
        if let Some(lp) = matching[prev] {
            if let Some(kw) = lp.checked_sub(1) {
                match tokens[kw].text.as_str() {
                    "if" => return BlockKind::If,
                    "for" | "while" => return BlockKind::Loop,
                    "switch" => return BlockKind::Switch,
                    "catch" => return BlockKind::Plain,
                    _ => {}
                }
            }
        }
    }
    if function_head(tokens, matching, open).is_some() {
        return BlockKind::Function;
    }
    // namespace X {, struct X {, class X : public Y {, extern "C" {
    let mut k = prev;
    for _ in 0..8 {
        match tokens[k].text.as_str() {
            "namespace" | "extern" => return BlockKind::Namespace,
            "struct" | "class" | "union" | "enum" => return BlockKind::Type,
            ";" | "}" | "{" | "=" | ")" | "(" | "," | "return" => break,
            _ => {}
        }
        match k.checked_sub(1) {
            Some(p) => k = p,
            None => break,
        }
    }
    BlockKind::Plain
}

fn control_regions(tokens: &[Token], matching: &[Option<usize>]) -> Vec<Region> {
    let mut regions = Vec::new();
    let mut do_whiles: HashSet<usize> = HashSet::new();
    let n = tokens.len();
    for i in 0..n {
        let t = &tokens[i];
        if !t.is_ident() {
            continue;
        }
        let paren = |k: usize| -> Option<(usize, usize)> {
            if k < n && tokens[k].is("(") {
                matching[k].map(|c| (k, c))
            } else {
                None
            }
        };
        match t.text.as_str() {
            "if" => {
                let Some((lp, rp)) = paren(i + 1) else { continue };
                if rp + 1 >= n {
                    continue;
                }
                let body_end = statement_end(tokens, matching, rp + 1);
                let cond = Some((lp + 1, rp.saturating_sub(1).max(lp + 1)));
                regions.push(Region {
                    kind: RegionKind::If,
                    keyword: i,
                    cond,
                    body: (rp + 1, body_end),
                });
                if body_end + 2 < n && tokens[body_end + 1].is("else") {
                    let else_end = statement_end(tokens, matching, body_end + 2);
                    regions.push(Region {
                        kind: RegionKind::Else,
                        keyword: body_end + 1,
                        cond,
                        body: (body_end + 2, else_end),
                    });
                }
            }
            "for" | "while" | "switch" => {
                if t.is("while") && do_whiles.contains(&i) {
                    continue;
                }
                let Some((lp, rp)) = paren(i + 1) else { continue };
                if rp + 1 >= n {
                    continue;
                }
                let body_end = statement_end(tokens, matching, rp + 1);
                regions.push(Region {
                    kind: if t.is("switch") {
                        RegionKind::Switch
                    } else {
                        RegionKind::Loop
                    },
                    keyword: i,
                    cond: Some((lp + 1, rp.saturating_sub(1).max(lp + 1))),
                    body: (rp + 1, body_end),
                });
            }
            "do" => {
                if i + 1 >= n {
                    continue;
                }
                let body_end = statement_end(tokens, matching, i + 1);
                if body_end + 1 < n && tokens[body_end + 1].is("while") {
                    do_whiles.insert(body_end + 1);
                }
                regions.push(Region {
                    kind: RegionKind::Loop,
                    keyword: i,
                    cond: None,
                    body: (i + 1, body_end),
                });
            }
            _ => {}
        }
    }
    regions
}
