//! Tokenizer for C/C++ source text.
//!
//! Comments are blanked out (newlines kept) so byte offsets and line numbers
//! of the cleaned text line up with the original. Preprocessor lines are not
//! tokenized; they are collected as [`Directive`]s with backslash
//! continuations joined.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TokenKind {
    Ident,
    Number,
    Str,
    Char,
    Punct,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub text: String,
    pub line: u32,
    pub col: u32,
    /// Byte range in the cleaned text.
    pub start: usize,
    pub end: usize,
}

impl Token {
    pub fn is(&self, s: &str) -> bool {
        self.text == s
    }

    pub fn is_ident(&self) -> bool {
        self.kind == TokenKind::Ident
    }
}

/// One preprocessor line (possibly spanning several physical lines).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Directive {
    pub line: u32,
    pub col: u32,
    pub end_line: u32,
    /// Joined, comment-free, whitespace-collapsed text starting at `#`.
    pub text: String,
}

#[derive(Debug, Clone, Default)]
pub struct Lexed {
    pub cleaned: String,
    pub tokens: Vec<Token>,
    pub directives: Vec<Directive>,
}

const PUNCT3: &[&str] = &["<<=", ">>=", "...", "->*"];
const PUNCT2: &[&str] = &[
    "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "++", "--", "==", "!=", "<=", ">=", "&&",
    "||", "->", "::", "<<", ">>", ".*", "##",
];

struct Cursor<'a> {
    src: &'a [u8],
    out: Vec<u8>,
    pos: usize,
    line: u32,
    col: u32,
}

impl<'a> Cursor<'a> {
    fn peek(&self, off: usize) -> u8 {
        *self.src.get(self.pos + off).unwrap_or(&0)
    }

    fn at_end(&self) -> bool {
        self.pos >= self.src.len()
    }

    /// Advance one byte, copying it to the cleaned output (or a blank).
    fn bump(&mut self, keep: bool) {
        let b = self.src[self.pos];
        self.out.push(if keep || b == b'\n' { b } else { b' ' });
        if b == b'\n' {
            self.line += 1;
            self.col = 1;
        } else if b & 0xC0 != 0x80 {
            self.col += 1;
        }
        self.pos += 1;
    }

    fn skip_block_comment(&mut self) {
        self.bump(false);
        self.bump(false);
        while !self.at_end() {
            if self.peek(0) == b'*' && self.peek(1) == b'/' {
                self.bump(false);
                self.bump(false);
                return;
            }
            self.bump(false);
        }
    }

    fn skip_line_comment(&mut self) {
        while !self.at_end() && self.peek(0) != b'\n' {
            self.bump(false);
        }
    }

    fn quoted(&mut self, quote: u8) {
        self.bump(true);
        while !self.at_end() {
            let b = self.peek(0);
            if b == b'\\' && self.pos + 1 < self.src.len() {
                self.bump(true);
                self.bump(true);
                continue;
            }
            if b == b'\n' {
                // unterminated literal; stop at end of line
                return;
            }
            self.bump(true);
            if b == quote {
                return;
            }
        }
    }

    fn raw_string(&mut self) {
        // R"delim( ... )delim"
        self.bump(true); // R
        self.bump(true); // "
        let mut delim = Vec::new();
        while !self.at_end() && self.peek(0) != b'(' && delim.len() < 16 {
            delim.push(self.peek(0));
            self.bump(true);
        }
        let mut close = vec![b')'];
        close.extend_from_slice(&delim);
        close.push(b'"');
        while !self.at_end() {
            if self.src[self.pos..].starts_with(&close) {
                for _ in 0..close.len() {
                    self.bump(true);
                }
                return;
            }
            self.bump(true);
        }
    }
}

fn is_ident_start(b: u8) -> bool {
    b.is_ascii_alphabetic() || b == b'_'
}

fn is_ident_char(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_'
}

pub fn collapse_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn lex(text: &str) -> Lexed {
    let mut c = Cursor {
        src: text.as_bytes(),
        out: Vec::with_capacity(text.len()),
        pos: 0,
        line: 1,
        col: 1,
    };
    let mut tokens = Vec::new();
    let mut directives = Vec::new();
    let mut line_has_code = false;

    while !c.at_end() {
        let b = c.peek(0);
        if b == b'\n' {
            line_has_code = false;
            c.bump(true);
            continue;
        }
        if b.is_ascii_whitespace() {
            c.bump(true);
            continue;
        }
        if b == b'/' && c.peek(1) == b'/' {
            c.skip_line_comment();
            continue;
        }
        if b == b'/' && c.peek(1) == b'*' {
            c.skip_block_comment();
            continue;
        }
        if b == b'#' && !line_has_code {
            let (line, col) = (c.line, c.col);
            let start = c.out.len();
            // consume to end of logical line, honouring continuations
            while !c.at_end() {
                let d = c.peek(0);
                if d == b'\\' && c.peek(1) == b'\n' {
                    c.bump(true);
                    c.bump(true);
                    continue;
                }
                if d == b'\\' && c.peek(1) == b'\r' && c.peek(2) == b'\n' {
                    c.bump(true);
                    c.bump(true);
                    c.bump(true);
                    continue;
                }
                if d == b'\n' {
                    break;
                }
                if d == b'/' && c.peek(1) == b'/' {
                    c.skip_line_comment();
                    break;
                }
                if d == b'/' && c.peek(1) == b'*' {
                    c.skip_block_comment();
                    continue;
                }
                if d == b'"' || d == b'\'' {
                    c.quoted(d);
                    continue;
                }
                c.bump(true);
            }
            let raw = String::from_utf8_lossy(&c.out[start..]).replace("\\\r\n", " ");
            let joined = raw.replace("\\\n", " ");
            directives.push(Directive {
                line,
                col,
                end_line: c.line,
                text: collapse_ws(&joined),
            });
            continue;
        }

        line_has_code = true;
        let (line, col) = (c.line, c.col);
        let start = c.out.len();
        let kind = if b == b'R' && c.peek(1) == b'"' {
            c.raw_string();
            TokenKind::Str
        } else if (b == b'L' || b == b'u' || b == b'U') && (c.peek(1) == b'"' || c.peek(1) == b'\'')
        {
            let q = c.peek(1);
            c.bump(true);
            c.quoted(q);
            if q == b'"' {
                TokenKind::Str
            } else {
                TokenKind::Char
            }
        } else if is_ident_start(b) {
            while !c.at_end() && is_ident_char(c.peek(0)) {
                c.bump(true);
            }
            TokenKind::Ident
        } else if b.is_ascii_digit() || (b == b'.' && c.peek(1).is_ascii_digit()) {
            while !c.at_end() {
                let d = c.peek(0);
                let prev = c.pos.checked_sub(1).map_or(0, |i| c.src[i]);
                if is_ident_char(d) || d == b'.' || d == b'\'' {
                    c.bump(true);
                } else if (d == b'+' || d == b'-') && matches!(prev, b'e' | b'E' | b'p' | b'P') {
                    c.bump(true);
                } else {
                    break;
                }
            }
            TokenKind::Number
        } else if b == b'"' {
            c.quoted(b'"');
            TokenKind::Str
        } else if b == b'\'' {
            c.quoted(b'\'');
            TokenKind::Char
        } else {
            let rest = &c.src[c.pos..];
            let n = if PUNCT3.iter().any(|p| rest.starts_with(p.as_bytes())) {
                3
            } else if PUNCT2.iter().any(|p| rest.starts_with(p.as_bytes())) {
                2
            } else {
                // keep multibyte characters whole
                let mut n = 1;
                while c.pos + n < c.src.len() && c.src[c.pos + n] & 0xC0 == 0x80 {
                    n += 1;
                }
                n
            };
            for _ in 0..n {
                c.bump(true);
            }
            TokenKind::Punct
        };
        let end = c.out.len();
        tokens.push(Token {
            kind,
            text: String::from_utf8_lossy(&c.out[start..end]).into_owned(),
            line,
            col,
            start,
            end,
        });
    }

    Lexed {
        cleaned: String::from_utf8_lossy(&c.out).into_owned(),
        tokens,
        directives,
    }
}
