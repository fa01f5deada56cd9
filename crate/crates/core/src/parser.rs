//! Reader for the small Prolog-like concrete syntax.
//!
//! Clauses are `Head.` or `Head :- Body.`, directives are `:- Goal.`.
//! Comments run from `%` to end of line or between `/*` and `*/`. The
//! operator table is fixed:
//!
//! ```text
//! :-                1200 xfx        ;   1100 xfy      ->  1050 xfy
//! ,                 1000 xfy        = is > < >= =<  700 xfx
//! + -                500 yfx        * //              400 yfx
//! ```
//!
//! Variables start with an uppercase letter or `_`; atoms start lowercase
//! or are quoted. Lists are `[a,b|T]` and `[]` is an atom.

use std::fmt;

use thiserror::Error;

use crate::term::{Clause, Name, Pred, Program, Term, VarId};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("syntax error at {line}:{col}: {message}")]
pub struct SyntaxError {
    pub line: u32,
    pub col: u32,
    pub message: String,
}

impl SyntaxError {
    fn new(line: u32, col: u32, message: impl Into<String>) -> Self {
        SyntaxError {
            line,
            col,
            message: message.into(),
        }
    }
}

type Result<T> = std::result::Result<T, SyntaxError>;

// ---------------------------------------------------------------------------
// Lexer
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
enum TokKind {
    Atom(String),
    Var(String),
    Int(i64),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Bar,
    /// End-of-clause dot.
    Dot,
}

impl fmt::Display for TokKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokKind::Atom(a) => write!(f, "atom `{}`", a),
            TokKind::Var(v) => write!(f, "variable `{}`", v),
            TokKind::Int(i) => write!(f, "integer {}", i),
            TokKind::LParen => write!(f, "`(`"),
            TokKind::RParen => write!(f, "`)`"),
            TokKind::LBracket => write!(f, "`[`"),
            TokKind::RBracket => write!(f, "`]`"),
            TokKind::Comma => write!(f, "`,`"),
            TokKind::Bar => write!(f, "`|`"),
            TokKind::Dot => write!(f, "`.`"),
        }
    }
}

#[derive(Debug, Clone)]
struct Tok {
    kind: TokKind,
    line: u32,
    col: u32,
    /// True when the token starts immediately after the previous one,
    /// with no layout in between. `f(` needs this to distinguish a
    /// compound from `f (`.
    glued: bool,
}

const SYMBOL_CHARS: &str = "+-*/\\^<>=~:.?@#&$";

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
    line: u32,
    col: u32,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            src: src.as_bytes(),
            pos: 0,
            line: 1,
            col: 1,
        }
    }

    fn peek_ch(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn peek2(&self) -> Option<u8> {
        self.src.get(self.pos + 1).copied()
    }

    fn bump(&mut self) -> Option<u8> {
        let c = self.peek_ch()?;
        self.pos += 1;
        if c == b'\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn err(&self, msg: impl Into<String>) -> SyntaxError {
        SyntaxError::new(self.line, self.col, msg)
    }

    /// Skips whitespace and comments; returns whether anything was skipped.
    fn skip_layout(&mut self) -> Result<bool> {
        let mut skipped = false;
        loop {
            match self.peek_ch() {
                Some(c) if c.is_ascii_whitespace() => {
                    self.bump();
                    skipped = true;
                }
                Some(b'%') => {
                    while let Some(c) = self.peek_ch() {
                        if c == b'\n' {
                            break;
                        }
                        self.bump();
                    }
                    skipped = true;
                }
                Some(b'/') if self.peek2() == Some(b'*') => {
                    let (line, col) = (self.line, self.col);
                    self.bump();
                    self.bump();
                    loop {
                        match self.peek_ch() {
                            None => {
                                return Err(SyntaxError::new(line, col, "unterminated /* comment"))
                            }
                            Some(b'*') if self.peek2() == Some(b'/') => {
                                self.bump();
                                self.bump();
                                break;
                            }
                            _ => {
                                self.bump();
                            }
                        }
                    }
                    skipped = true;
                }
                _ => return Ok(skipped),
            }
        }
    }

    fn next_token(&mut self) -> Result<Option<Tok>> {
        let skipped = self.skip_layout()?;
        let (line, col) = (self.line, self.col);
        let glued = !skipped;
        let c = match self.peek_ch() {
            None => return Ok(None),
            Some(c) => c,
        };
        let tok = |kind| {
            Ok(Some(Tok {
                kind,
                line,
                col,
                glued,
            }))
        };
        match c {
            b'(' => {
                self.bump();
                tok(TokKind::LParen)
            }
            b')' => {
                self.bump();
                tok(TokKind::RParen)
            }
            b'[' => {
                self.bump();
                tok(TokKind::LBracket)
            }
            b']' => {
                self.bump();
                tok(TokKind::RBracket)
            }
            b',' => {
                self.bump();
                tok(TokKind::Comma)
            }
            b'|' => {
                self.bump();
                tok(TokKind::Bar)
            }
            b'\'' => {
                self.bump();
                let mut bytes = Vec::new();
                loop {
                    match self.bump() {
                        None => return Err(SyntaxError::new(line, col, "unterminated quoted atom")),
                        Some(b'\'') => {
                            if self.peek_ch() == Some(b'\'') {
                                self.bump();
                                bytes.push(b'\'');
                            } else {
                                break;
                            }
                        }
                        Some(b'\\') => match self.bump() {
                            Some(b'n') => bytes.push(b'\n'),
                            Some(b't') => bytes.push(b'\t'),
                            Some(b'\\') => bytes.push(b'\\'),
                            Some(b'\'') => bytes.push(b'\''),
                            other => {
                                return Err(self.err(format!(
                                    "unsupported escape in quoted atom: \\{}",
                                    other.map(|b| b as char).unwrap_or(' ')
                                )))
                            }
                        },
                        Some(b) => bytes.push(b),
                    }
                }
                let s = String::from_utf8(bytes)
                    .map_err(|_| SyntaxError::new(line, col, "invalid UTF-8 in quoted atom"))?;
                tok(TokKind::Atom(s))
            }
            b'0'..=b'9' => {
                let mut v: i64 = 0;
                while let Some(d @ b'0'..=b'9') = self.peek_ch() {
                    self.bump();
                    v = v
                        .checked_mul(10)
                        .and_then(|v| v.checked_add((d - b'0') as i64))
                        .ok_or_else(|| SyntaxError::new(line, col, "integer literal overflows"))?;
                }
                tok(TokKind::Int(v))
            }
            b'_' | b'A'..=b'Z' => {
                let mut s = String::new();
                while let Some(c) = self.peek_ch() {
                    if c == b'_' || c.is_ascii_alphanumeric() {
                        s.push(c as char);
                        self.bump();
                    } else {
                        break;
                    }
                }
                tok(TokKind::Var(s))
            }
            b'a'..=b'z' => {
                let mut s = String::new();
                while let Some(c) = self.peek_ch() {
                    if c == b'_' || c.is_ascii_alphanumeric() {
                        s.push(c as char);
                        self.bump();
                    } else {
                        break;
                    }
                }
                tok(TokKind::Atom(s))
            }
            c if SYMBOL_CHARS.contains(c as char) => {
                let mut s = String::new();
                while let Some(c) = self.peek_ch() {
                    if SYMBOL_CHARS.contains(c as char) {
                        s.push(c as char);
                        self.bump();
                    } else {
                        break;
                    }
                }
                // A solitary `.` followed by layout or EOF ends a clause.
                if s == "." {
                    match self.peek_ch() {
                        None => return tok(TokKind::Dot),
                        Some(c) if c.is_ascii_whitespace() || c == b'%' => {
                            return tok(TokKind::Dot)
                        }
                        _ => {}
                    }
                }
                tok(TokKind::Atom(s))
            }
            b';' => {
                self.bump();
                tok(TokKind::Atom(";".into()))
            }
            other => Err(SyntaxError::new(
                line,
                col,
                format!("unexpected character `{}`", other as char),
            )),
        }
    }
}

// ---------------------------------------------------------------------------
// Operator table
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum OpType {
    Xfx,
    Xfy,
    Yfx,
}

/// The fixed infix operator table: `(priority, type)` per name.
pub fn infix_op(name: &str) -> Option<(u32, OpType)> {
    Some(match name {
        ":-" => (1200, OpType::Xfx),
        ";" => (1100, OpType::Xfy),
        "->" => (1050, OpType::Xfy),
        "," => (1000, OpType::Xfy),
        "=" | "is" | ">" | "<" | ">=" | "=<" => (700, OpType::Xfx),
        "+" | "-" => (500, OpType::Yfx),
        "*" | "//" => (400, OpType::Yfx),
        _ => return None,
    })
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

/// Allocates variable ids while reading; clause scopes keep name sharing.
struct VarScope {
    next: u64,
    named: Vec<(String, VarId)>,
}

impl VarScope {
    fn fresh(&mut self, hint: &str) -> Term {
        let id = VarId(self.next);
        self.next += 1;
        Term::var(id, hint)
    }

    fn lookup(&mut self, name: &str) -> Term {
        if name == "_" {
            return self.fresh("_");
        }
        if let Some((_, id)) = self.named.iter().find(|(n, _)| n == name) {
            return Term::var(*id, name);
        }
        let t = self.fresh(name);
        if let Term::Var(id, _) = t {
            self.named.push((name.to_string(), id));
        }
        t
    }

    fn clear_names(&mut self) {
        self.named.clear();
    }
}

pub struct Parser<'a> {
    lexer: Lexer<'a>,
    peeked: Option<Option<Tok>>,
    scope: VarScope,
}

impl<'a> Parser<'a> {
    pub fn new(src: &'a str) -> Self {
        Parser {
            lexer: Lexer::new(src),
            peeked: None,
            scope: VarScope {
                next: 0,
                named: Vec::new(),
            },
        }
    }

    /// Starts variable numbering at `first_id` (used when reading a query
    /// whose variables must not collide with an existing store).
    pub fn with_first_var_id(src: &'a str, first_id: u64) -> Self {
        let mut p = Parser::new(src);
        p.scope.next = first_id;
        p
    }

    fn peek(&mut self) -> Result<Option<&Tok>> {
        if self.peeked.is_none() {
            self.peeked = Some(self.lexer.next_token()?);
        }
        Ok(self.peeked.as_ref().unwrap().as_ref())
    }

    fn next(&mut self) -> Result<Option<Tok>> {
        match self.peeked.take() {
            Some(t) => Ok(t),
            None => self.lexer.next_token(),
        }
    }

    fn expect(&mut self, kind: &TokKind) -> Result<Tok> {
        match self.next()? {
            Some(t) if t.kind == *kind => Ok(t),
            Some(t) => Err(SyntaxError::new(
                t.line,
                t.col,
                format!("expected {}, found {}", kind, t.kind),
            )),
            None => Err(self.eof_err(&format!("expected {}", kind))),
        }
    }

    fn eof_err(&self, what: &str) -> SyntaxError {
        SyntaxError::new(self.lexer.line, self.lexer.col, format!("{} at end of input", what))
    }

    /// Precedence climbing: reads a term of priority <= max_prec.
    fn read(&mut self, max_prec: u32) -> Result<Term> {
        let mut left = self.read_primary(max_prec)?;
        let mut left_prec = left.1;
        loop {
            let (name, line, col) = match self.peek()? {
                Some(t) => match &t.kind {
                    TokKind::Atom(a) if infix_op(a).is_some() => {
                        (a.clone(), t.line, t.col)
                    }
                    TokKind::Comma => (",".to_string(), t.line, t.col),
                    _ => break,
                },
                None => break,
            };
            let (prec, optype) = infix_op(&name).unwrap();
            if prec > max_prec {
                break;
            }
            let left_max = match optype {
                OpType::Yfx => prec,
                _ => prec - 1,
            };
            if left_prec > left_max {
                return Err(SyntaxError::new(
                    line,
                    col,
                    format!("operator priority clash at `{}`", name),
                ));
            }
            self.next()?;
            let right_max = match optype {
                OpType::Xfy => prec,
                _ => prec - 1,
            };
            let right = self.read(right_max)?;
            left = (Term::compound(&name, vec![left.0, right]), prec);
            left_prec = prec;
        }
        Ok(left.0)
    }

    /// Reads a primary term; returns the term and its priority (0 unless
    /// the term is an operator compound read through parentheses, which
    /// resets priority to 0 anyway).
    fn read_primary(&mut self, _max_prec: u32) -> Result<(Term, u32)> {
        let tok = match self.next()? {
            Some(t) => t,
            None => return Err(self.eof_err("expected a term")),
        };
        match tok.kind {
            TokKind::Int(v) => Ok((Term::Int(v), 0)),
            TokKind::Var(name) => Ok((self.scope.lookup(&name), 0)),
            TokKind::LParen => {
                let t = self.read(1200)?;
                self.expect(&TokKind::RParen)?;
                Ok((t, 0))
            }
            TokKind::LBracket => Ok((self.read_list()?, 0)),
            TokKind::Atom(name) => {
                // `-` immediately before an integer is a negative literal.
                if name == "-" {
                    if let Some(t) = self.peek()? {
                        if let TokKind::Int(v) = t.kind {
                            self.next()?;
                            return Ok((Term::Int(-v), 0));
                        }
                    }
                }
                // A compound requires `(` glued to the atom.
                let is_call = matches!(
                    self.peek()?,
                    Some(Tok { kind: TokKind::LParen, glued: true, .. })
                );
                if is_call {
                    self.next()?;
                    let mut args = vec![self.read(999)?];
                    loop {
                        match self.next()? {
                            Some(Tok { kind: TokKind::Comma, .. }) => args.push(self.read(999)?),
                            Some(Tok { kind: TokKind::RParen, .. }) => break,
                            Some(t) => {
                                return Err(SyntaxError::new(
                                    t.line,
                                    t.col,
                                    format!("expected `,` or `)` in argument list, found {}", t.kind),
                                ))
                            }
                            None => return Err(self.eof_err("expected `)`")),
                        }
                    }
                    Ok((Term::compound(&name, args), 0))
                } else {
                    Ok((Term::Atom(Name::new(&name)), 0))
                }
            }
            other => Err(SyntaxError::new(
                tok.line,
                tok.col,
                format!("expected a term, found {}", other),
            )),
        }
    }

    fn read_list(&mut self) -> Result<Term> {
        if let Some(Tok { kind: TokKind::RBracket, .. }) = self.peek()? {
            self.next()?;
            return Ok(Term::nil());
        }
        let mut items = vec![self.read(999)?];
        let tail;
        loop {
            match self.next()? {
                Some(Tok { kind: TokKind::Comma, .. }) => items.push(self.read(999)?),
                Some(Tok { kind: TokKind::Bar, .. }) => {
                    tail = self.read(999)?;
                    self.expect(&TokKind::RBracket)?;
                    break;
                }
                Some(Tok { kind: TokKind::RBracket, .. }) => {
                    tail = Term::nil();
                    break;
                }
                Some(t) => {
                    return Err(SyntaxError::new(
                        t.line,
                        t.col,
                        format!("expected `,`, `|` or `]` in list, found {}", t.kind),
                    ))
                }
                None => return Err(self.eof_err("expected `]`")),
            }
        }
        Ok(Term::list(items, tail))
    }

    /// Reads one clause or directive; None at end of input.
    fn read_clause_or_directive(&mut self) -> Result<Option<ClauseOrDirective>> {
        self.scope.clear_names();
        let first = match self.peek()? {
            None => return Ok(None),
            Some(t) => t.clone(),
        };
        // A leading `:-` introduces a directive.
        if let TokKind::Atom(a) = &first.kind {
            if a == ":-" {
                self.next()?;
                let goal = self.read(1199)?;
                self.expect(&TokKind::Dot)?;
                return Ok(Some(ClauseOrDirective::Directive(goal)));
            }
        }
        let t = self.read(1200)?;
        self.expect(&TokKind::Dot)?;
        let clause = match &t {
            Term::Compound(f, args) if f == ":-" && args.len() == 2 => {
                Clause::new(args[0].clone(), args[1].clone())
            }
            _ => Clause::new(t, Term::atom("true")),
        };
        validate_head(&clause.head, first.line, first.col)?;
        Ok(Some(ClauseOrDirective::Clause(clause)))
    }
}

enum ClauseOrDirective {
    Clause(Clause),
    Directive(Term),
}

/// Built-in predicate indicators that may not be redefined by clauses.
pub fn is_reserved_builtin(pred: &Pred) -> bool {
    matches!(
        (pred.name.as_str(), pred.arity),
        ("true", 0)
            | ("fail", 0)
            | (",", 2)
            | (";", 2)
            | ("->", 2)
            | ("=", 2)
            | ("var", 1)
            | ("nonvar", 1)
            | ("is", 2)
            | (">", 2)
            | ("<", 2)
            | (">=", 2)
            | ("=<", 2)
            | ("catch", 3)
            | ("throw", 1)
            | ("btid", 2)
            | ("sort_desc", 2)
            | ("backjump", 1)
            | ("parent_choice", 1)
    )
}

fn validate_head(head: &Term, line: u32, col: u32) -> Result<()> {
    let pred = match Pred::of_term(head) {
        Some(p) => p,
        None => {
            return Err(SyntaxError::new(
                line,
                col,
                "clause head must be an atom or compound term",
            ))
        }
    };
    if is_reserved_builtin(&pred) {
        return Err(SyntaxError::new(
            line,
            col,
            format!("clause head redefines built-in {}", pred),
        ));
    }
    if pred.name.as_str().starts_with('$') {
        return Err(SyntaxError::new(
            line,
            col,
            format!("clause head uses reserved functor {}", pred),
        ));
    }
    Ok(())
}

/// Parses a whole program. Clause variables are renamed apart per clause
/// (each clause draws ids from a shared running counter).
pub fn parse_program(src: &str) -> Result<Program> {
    let mut parser = Parser::new(src);
    let mut clauses = Vec::new();
    let mut directives = Vec::new();
    while let Some(item) = parser.read_clause_or_directive()? {
        match item {
            ClauseOrDirective::Clause(c) => clauses.push(c),
            ClauseOrDirective::Directive(d) => directives.push(d),
        }
    }
    let mut p = Program::new(clauses, directives);
    p.set_var_ceiling(parser.scope.next);
    Ok(p)
}

/// Parses a single term followed by optional layout.
pub fn parse_term(src: &str) -> Result<Term> {
    parse_term_from(src, 0).map(|(t, _)| t)
}

/// Parses a single term with variable ids starting at `first_id`; returns
/// the term and the next unused id.
pub fn parse_term_from(src: &str, first_id: u64) -> Result<(Term, u64)> {
    let mut parser = Parser::with_first_var_id(src, first_id);
    let t = parser.read(1200)?;
    match parser.peek()? {
        None => Ok((t, parser.scope.next)),
        Some(Tok { kind: TokKind::Dot, .. }) => {
            parser.next()?;
            match parser.peek()? {
                None => Ok((t, parser.scope.next)),
                Some(t2) => Err(SyntaxError::new(
                    t2.line,
                    t2.col,
                    format!("unexpected {} after term", t2.kind),
                )),
            }
        }
        Some(t2) => Err(SyntaxError::new(
            t2.line,
            t2.col,
            format!("unexpected {} after term", t2.kind),
        )),
    }
}
