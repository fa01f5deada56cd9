//! Term and program writers.
//!
//! Output is canonical enough to reparse: operators are emitted with the
//! reader's priorities and parenthesised where needed, lists use bracket
//! sugar, and atoms that the lexer would not read back bare are quoted.
//! `write_term` prints through a variable store (bound variables appear
//! dereferenced, unbound ones as `_<id>`); `pretty_program` names clause
//! variables by their source hints.

use crate::parser::{infix_op, OpType};
use crate::term::{Name, Program, Term, VarId};
use crate::unify::{Bindings, DepthExceeded, DEREF_BUDGET, MAX_NESTING};

fn is_symbolic(c: char) -> bool {
    "+-*/\\^<>=~:.?@#&$".contains(c)
}

fn is_wordy(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

fn bare_atom_ok(name: &str) -> bool {
    if name == "[]" {
        return true;
    }
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_lowercase() => chars.all(is_wordy),
        _ => false,
    }
}

fn quote_atom(name: &str) -> String {
    let mut s = String::with_capacity(name.len() + 2);
    s.push('\'');
    for c in name.chars() {
        match c {
            '\'' => s.push_str("''"),
            '\\' => s.push_str("\\\\"),
            '\n' => s.push_str("\\n"),
            '\t' => s.push_str("\\t"),
            _ => s.push(c),
        }
    }
    s.push('\'');
    s
}

struct Emitter<'a> {
    out: String,
    bindings: Option<&'a Bindings>,
    budget: usize,
    namer: &'a dyn Fn(VarId, &Name) -> String,
}

impl<'a> Emitter<'a> {
    /// Appends a token, inserting a space when gluing it to the previous
    /// character would change how the lexer splits the text.
    fn push_token(&mut self, tok: &str) {
        if let (Some(last), Some(first)) = (self.out.chars().last(), tok.chars().next()) {
            if (is_symbolic(last) && is_symbolic(first)) || (is_wordy(last) && is_wordy(first)) {
                self.out.push(' ');
            }
        }
        self.out.push_str(tok);
    }

    fn resolve(&self, t: &Term) -> Term {
        match self.bindings {
            Some(b) => b.resolve(t),
            None => t.clone(),
        }
    }

    fn spend(&mut self) -> Result<(), DepthExceeded> {
        if self.budget == 0 {
            return Err(DepthExceeded);
        }
        self.budget -= 1;
        Ok(())
    }

    fn emit(&mut self, t: &Term, max_prec: u32, depth: usize) -> Result<(), DepthExceeded> {
        self.spend()?;
        if depth > MAX_NESTING {
            return Err(DepthExceeded);
        }
        let t = self.resolve(t);
        match &t {
            Term::Var(id, hint) => {
                let name = (self.namer)(*id, hint);
                self.push_token(&name);
            }
            Term::Int(i) => self.push_token(&i.to_string()),
            Term::Atom(n) => {
                if bare_atom_ok(n.as_str()) {
                    self.push_token(n.as_str());
                } else {
                    self.push_token(&quote_atom(n.as_str()));
                }
            }
            Term::Compound(f, args) => {
                if f == "." && args.len() == 2 {
                    return self.emit_list(&args[0], &args[1], depth);
                }
                if args.len() == 2 {
                    if let Some((prec, optype)) = infix_op(f.as_str()) {
                        return self.emit_infix(f, &args[0], &args[1], prec, optype, max_prec, depth);
                    }
                }
                if bare_atom_ok(f.as_str()) {
                    self.push_token(f.as_str());
                } else {
                    self.push_token(&quote_atom(f.as_str()));
                }
                self.out.push('(');
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        self.out.push(',');
                    }
                    self.emit(a, 999, depth + 1)?;
                }
                self.out.push(')');
            }
        }
        Ok(())
    }

    fn emit_infix(
        &mut self,
        f: &Name,
        left: &Term,
        right: &Term,
        prec: u32,
        optype: OpType,
        max_prec: u32,
        depth: usize,
    ) -> Result<(), DepthExceeded> {
        let parens = prec > max_prec;
        if parens {
            self.out.push('(');
        }
        let (left_max, right_max) = match optype {
            OpType::Xfx => (prec - 1, prec - 1),
            OpType::Xfy => (prec - 1, prec),
            OpType::Yfx => (prec, prec - 1),
        };
        self.emit(left, left_max, depth + 1)?;
        if f == "," {
            self.out.push(',');
        } else {
            self.push_token(f.as_str());
        }
        self.emit(right, right_max, depth + 1)?;
        if parens {
            self.out.push(')');
        }
        Ok(())
    }

    fn emit_list(&mut self, head: &Term, tail: &Term, depth: usize) -> Result<(), DepthExceeded> {
        self.out.push('[');
        self.emit(head, 999, depth + 1)?;
        let mut cur = self.resolve(tail);
        loop {
            self.spend()?;
            match &cur {
                Term::Atom(n) if n == "[]" => break,
                Term::Compound(f, args) if f == "." && args.len() == 2 => {
                    self.out.push(',');
                    self.emit(&args[0], 999, depth + 1)?;
                    cur = self.resolve(&args[1]);
                }
                other => {
                    self.out.push('|');
                    self.emit(other, 999, depth + 1)?;
                    break;
                }
            }
        }
        self.out.push(']');
        Ok(())
    }
}

/// Writes a term through a variable store. Bound variables are printed
/// dereferenced, unbound ones as `_<id>`. Fails on terms deeper than the
/// dereference budget, which is how cyclic stores surface.
pub fn write_term(t: &Term, b: &Bindings) -> Result<String, DepthExceeded> {
    let namer = |id: VarId, _hint: &Name| format!("_{}", id.0);
    let mut e = Emitter {
        out: String::new(),
        bindings: Some(b),
        budget: DEREF_BUDGET,
        namer: &namer,
    };
    e.emit(t, 1200, 0)?;
    Ok(e.out)
}

/// Writes a plain term (no store). Plain terms cannot be cyclic.
pub fn term_to_string(t: &Term) -> String {
    let namer = |id: VarId, _hint: &Name| format!("_{}", id.0);
    let mut e = Emitter {
        out: String::new(),
        bindings: None,
        budget: usize::MAX,
        namer: &namer,
    };
    e.emit(t, 1200, 0).expect("unbounded budget");
    e.out
}

/// Per-clause variable naming for program output: source hints where
/// unambiguous, `_` for singleton anonymous variables, id-suffixed
/// fallbacks otherwise.
fn var_names_for(terms: &[&Term]) -> Vec<(VarId, String)> {
    let mut vars: Vec<(VarId, Name)> = Vec::new();
    let mut counts: Vec<usize> = Vec::new();
    for t in terms {
        for (id, hint) in t.variables() {
            if !vars.iter().any(|(i, _)| *i == id) {
                vars.push((id, hint));
            }
        }
    }
    for (id, _) in &vars {
        let mut n = 0;
        for t in terms {
            let mut stack = vec![*t];
            while let Some(t) = stack.pop() {
                match t {
                    Term::Var(v, _) if v == id => n += 1,
                    Term::Compound(_, args) => stack.extend(args.iter()),
                    _ => {}
                }
            }
        }
        counts.push(n);
    }
    let mut used: Vec<String> = Vec::new();
    let mut out = Vec::new();
    for ((id, hint), count) in vars.into_iter().zip(counts) {
        let name = if count == 1 && hint == "_" {
            "_".to_string()
        } else {
            let base = if hint == "_" {
                format!("_G{}", id.0)
            } else {
                hint.as_str().to_string()
            };
            let mut candidate = base.clone();
            while used.contains(&candidate) {
                candidate = format!("{}_{}", candidate, id.0);
            }
            used.push(candidate.clone());
            candidate
        };
        out.push((id, name));
    }
    out
}

fn write_clause_term(t: &Term, names: &[(VarId, String)], max_prec: u32) -> String {
    let namer = |id: VarId, _hint: &Name| {
        names
            .iter()
            .find(|(i, _)| *i == id)
            .map(|(_, n)| n.clone())
            .unwrap_or_else(|| format!("_{}", id.0))
    };
    let mut e = Emitter {
        out: String::new(),
        bindings: None,
        budget: usize::MAX,
        namer: &namer,
    };
    e.emit(t, max_prec, 0).expect("unbounded budget");
    e.out
}

/// Prints a program as reparseable source, one clause per predicate group,
/// bodies laid out one conjunct per line.
pub fn pretty_program(p: &Program) -> String {
    let mut out = String::new();
    for d in p.directives() {
        out.push_str(":- ");
        out.push_str(&write_clause_term(d, &var_names_for(&[d]), 1199));
        out.push_str(".\n");
    }
    if !p.directives().is_empty() {
        out.push('\n');
    }
    let mut prev_pred = None;
    for c in p.clauses() {
        let pred = c.pred();
        if let Some(prev) = &prev_pred {
            if *prev != pred {
                out.push('\n');
            }
        }
        prev_pred = Some(pred);
        let names = var_names_for(&[&c.head, &c.body]);
        out.push_str(&write_clause_term(&c.head, &names, 1199));
        if c.is_fact() {
            out.push_str(".\n");
        } else {
            out.push_str(" :-\n");
            let conjuncts = c.body.conjuncts();
            let n = conjuncts.len();
            for (i, g) in conjuncts.into_iter().enumerate() {
                out.push_str("    ");
                out.push_str(&write_clause_term(g, &names, 999));
                out.push_str(if i + 1 == n { ".\n" } else { ",\n" });
            }
        }
    }
    out
}
