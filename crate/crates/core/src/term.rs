//! Term representation for the engine.
//!
//! Terms are variables, atoms, integers, and compounds. Lists are `'.'/2`
//! chains ending in the atom `[]`, and pairs `A-B` are ordinary `'-'/2`
//! compounds; both are sugar handled by the reader and writer, not by the
//! representation itself.

use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

/// An interned-ish functor or atom name. Cloning is a refcount bump.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Name(Arc<str>);

impl Name {
    pub fn new(s: &str) -> Self {
        Name(Arc::from(s))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<&str> for Name {
    fn from(s: &str) -> Self {
        Name::new(s)
    }
}

impl From<String> for Name {
    fn from(s: String) -> Self {
        Name(Arc::from(s))
    }
}

impl fmt::Display for Name {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for Name {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", &*self.0)
    }
}

impl PartialEq<str> for Name {
    fn eq(&self, other: &str) -> bool {
        &*self.0 == other
    }
}

impl PartialEq<&str> for Name {
    fn eq(&self, other: &&str) -> bool {
        &*self.0 == *other
    }
}

/// A logic variable identity. Unique within one engine run; the printable
/// hint lives next to it in the term and takes no part in equality.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct VarId(pub u64);

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "_{}", self.0)
    }
}

/// A Prolog-like term.
///
/// `Compound` always has arity >= 1; an arity-0 "compound" is an `Atom`.
/// Argument vectors are shared (`Arc`), so cloning a term is cheap and
/// terms can be handed between threads.
#[derive(Clone)]
pub enum Term {
    /// A variable: identity plus a printing hint (hints never affect equality).
    Var(VarId, Name),
    Atom(Name),
    Int(i64),
    Compound(Name, Arc<[Term]>),
}

impl PartialEq for Term {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Term::Var(a, _), Term::Var(b, _)) => a == b,
            (Term::Atom(a), Term::Atom(b)) => a == b,
            (Term::Int(a), Term::Int(b)) => a == b,
            (Term::Compound(f, xs), Term::Compound(g, ys)) => f == g && xs == ys,
            _ => false,
        }
    }
}

impl Eq for Term {}

impl Hash for Term {
    fn hash<H: Hasher>(&self, state: &mut H) {
        match self {
            Term::Var(id, _) => {
                0u8.hash(state);
                id.hash(state);
            }
            Term::Atom(n) => {
                1u8.hash(state);
                n.hash(state);
            }
            Term::Int(i) => {
                2u8.hash(state);
                i.hash(state);
            }
            Term::Compound(f, args) => {
                3u8.hash(state);
                f.hash(state);
                args.hash(state);
            }
        }
    }
}

impl fmt::Debug for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(id, hint) => write!(f, "{}#{}", hint, id.0),
            Term::Atom(n) => write!(f, "{}", n),
            Term::Int(i) => write!(f, "{}", i),
            Term::Compound(name, args) => {
                write!(f, "{}(", name)?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{:?}", a)?;
                }
                write!(f, ")")
            }
        }
    }
}

impl Term {
    pub fn atom(name: &str) -> Term {
        Term::Atom(Name::new(name))
    }

    pub fn int(v: i64) -> Term {
        Term::Int(v)
    }

    pub fn var(id: VarId, hint: &str) -> Term {
        Term::Var(id, Name::new(hint))
    }

    pub fn compound(name: &str, args: Vec<Term>) -> Term {
        debug_assert!(!args.is_empty(), "arity-0 compound must be an Atom");
        Term::Compound(Name::new(name), Arc::from(args))
    }

    pub fn compound_name(name: Name, args: Vec<Term>) -> Term {
        debug_assert!(!args.is_empty(), "arity-0 compound must be an Atom");
        Term::Compound(name, Arc::from(args))
    }

    /// `A-B`.
    pub fn pair(a: Term, b: Term) -> Term {
        Term::compound("-", vec![a, b])
    }

    /// Right-nested conjunction of `goals`; `true` when empty.
    pub fn conj(goals: Vec<Term>) -> Term {
        let mut it = goals.into_iter().rev();
        match it.next() {
            None => Term::atom("true"),
            Some(last) => it.fold(last, |acc, g| Term::compound(",", vec![g, acc])),
        }
    }

    /// A proper list `[x1,...,xn]` (or partial with the given tail).
    pub fn list(items: Vec<Term>, tail: Term) -> Term {
        items
            .into_iter()
            .rev()
            .fold(tail, |acc, x| Term::compound(".", vec![x, acc]))
    }

    pub fn nil() -> Term {
        Term::atom("[]")
    }

    pub fn is_atom(&self, name: &str) -> bool {
        matches!(self, Term::Atom(n) if n == name)
    }

    /// Functor name and arity, treating atoms as arity 0.
    pub fn functor(&self) -> Option<(&Name, usize)> {
        match self {
            Term::Atom(n) => Some((n, 0)),
            Term::Compound(n, args) => Some((n, args.len())),
            _ => None,
        }
    }

    pub fn args(&self) -> &[Term] {
        match self {
            Term::Compound(_, args) => args,
            _ => &[],
        }
    }

    /// Splits a `','`-chain into its top-level conjuncts.
    pub fn conjuncts(&self) -> Vec<&Term> {
        let mut out = Vec::new();
        let mut cur = self;
        while let Term::Compound(f, args) = cur {
            if f == "," && args.len() == 2 {
                out.push(&args[0]);
                cur = &args[1];
            } else {
                break;
            }
        }
        out.push(cur);
        out
    }

    /// Iterates the elements of a proper list, or returns None if the term
    /// is not a nil-terminated `'.'/2` chain.
    pub fn proper_list(&self) -> Option<Vec<&Term>> {
        let mut out = Vec::new();
        let mut cur = self;
        loop {
            match cur {
                Term::Atom(n) if n == "[]" => return Some(out),
                Term::Compound(f, args) if f == "." && args.len() == 2 => {
                    out.push(&args[0]);
                    cur = &args[1];
                }
                _ => return None,
            }
        }
    }

    /// Collects the distinct variables of the term in first-occurrence order.
    pub fn variables(&self) -> Vec<(VarId, Name)> {
        let mut seen = Vec::new();
        let mut stack = vec![self];
        let mut out: Vec<(VarId, Name)> = Vec::new();
        while let Some(t) = stack.pop() {
            match t {
                Term::Var(id, hint) => {
                    if !seen.contains(id) {
                        seen.push(*id);
                        out.push((*id, hint.clone()));
                    }
                }
                Term::Compound(_, args) => {
                    for a in args.iter().rev() {
                        stack.push(a);
                    }
                }
                _ => {}
            }
        }
        out
    }

    pub fn max_var_id(&self) -> Option<u64> {
        let mut max = None;
        let mut stack = vec![self];
        while let Some(t) = stack.pop() {
            match t {
                Term::Var(VarId(id), _) => {
                    max = Some(max.map_or(*id, |m: u64| m.max(*id)));
                }
                Term::Compound(_, args) => stack.extend(args.iter()),
                _ => {}
            }
        }
        max
    }

    /// True if any subterm has the given functor/arity.
    pub fn contains_functor(&self, name: &str, arity: usize) -> bool {
        let mut stack = vec![self];
        while let Some(t) = stack.pop() {
            if let Term::Compound(f, args) = t {
                if f == name && args.len() == arity {
                    return true;
                }
                stack.extend(args.iter());
            } else if arity == 0 {
                if let Term::Atom(n) = t {
                    if n == name {
                        return true;
                    }
                }
            }
        }
        false
    }
}

/// A predicate indicator, `name/arity`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Pred {
    pub name: Name,
    pub arity: usize,
}

impl Pred {
    pub fn new(name: &str, arity: usize) -> Self {
        Pred {
            name: Name::new(name),
            arity,
        }
    }

    pub fn of_term(t: &Term) -> Option<Pred> {
        t.functor().map(|(n, a)| Pred {
            name: n.clone(),
            arity: a,
        })
    }

    /// Parses `"name/arity"`, accepting quoted-atom-free names only.
    pub fn parse(s: &str) -> Option<Pred> {
        let (name, arity) = s.rsplit_once('/')?;
        if name.is_empty() {
            return None;
        }
        let arity: usize = arity.parse().ok()?;
        Some(Pred::new(name, arity))
    }
}

impl fmt::Display for Pred {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.name, self.arity)
    }
}

/// One definite clause. Facts carry the body `true`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Clause {
    pub head: Term,
    pub body: Term,
}

impl Clause {
    pub fn new(head: Term, body: Term) -> Self {
        Clause { head, body }
    }

    pub fn pred(&self) -> Pred {
        Pred::of_term(&self.head).expect("clause head is an atom or compound")
    }

    pub fn is_fact(&self) -> bool {
        self.body.is_atom("true")
    }
}

/// An ordered clause database plus directives.
///
/// Clause source order is preserved within each predicate; the engine's
/// clause selection depends on it. Immutable after construction.
#[derive(Clone, Debug, Default)]
pub struct Program {
    clauses: Vec<Clause>,
    directives: Vec<Term>,
    /// Predicates in first-definition order, with their clause positions.
    index: Vec<(Pred, Vec<usize>)>,
    /// All variable ids in the program are below this bound.
    var_ceiling: u64,
}

impl Program {
    pub fn new(clauses: Vec<Clause>, directives: Vec<Term>) -> Self {
        let mut p = Program {
            clauses: Vec::new(),
            directives,
            index: Vec::new(),
            var_ceiling: 0,
        };
        for c in clauses {
            p.push_clause(c);
        }
        for d in &p.directives {
            if let Some(m) = d.max_var_id() {
                p.var_ceiling = p.var_ceiling.max(m + 1);
            }
        }
        p
    }

    pub fn push_clause(&mut self, clause: Clause) {
        let pred = clause.pred();
        for t in [&clause.head, &clause.body] {
            if let Some(m) = t.max_var_id() {
                self.var_ceiling = self.var_ceiling.max(m + 1);
            }
        }
        let pos = self.clauses.len();
        match self.index.iter_mut().find(|(p, _)| *p == pred) {
            Some((_, positions)) => positions.push(pos),
            None => self.index.push((pred, vec![pos])),
        }
        self.clauses.push(clause);
    }

    pub fn clauses(&self) -> &[Clause] {
        &self.clauses
    }

    pub fn clause(&self, idx: usize) -> &Clause {
        &self.clauses[idx]
    }

    pub fn directives(&self) -> &[Term] {
        &self.directives
    }

    /// Clause positions for a predicate, in source order.
    pub fn clauses_of(&self, pred: &Pred) -> Option<&[usize]> {
        self.index
            .iter()
            .find(|(p, _)| p == pred)
            .map(|(_, v)| v.as_slice())
    }

    /// Predicates in first-definition order.
    pub fn predicates(&self) -> impl Iterator<Item = &Pred> {
        self.index.iter().map(|(p, _)| p)
    }

    pub fn var_ceiling(&self) -> u64 {
        self.var_ceiling
    }

    pub fn set_var_ceiling(&mut self, ceiling: u64) {
        self.var_ceiling = self.var_ceiling.max(ceiling);
    }
}

/// Structural equality up to a variable bijection.
pub fn alpha_eq(a: &Term, b: &Term) -> bool {
    let mut map: Vec<(VarId, VarId)> = Vec::new();
    alpha_eq_inner(a, b, &mut map)
}

fn alpha_eq_inner(a: &Term, b: &Term, map: &mut Vec<(VarId, VarId)>) -> bool {
    match (a, b) {
        (Term::Var(x, _), Term::Var(y, _)) => {
            let fwd = map.iter().find(|(l, _)| l == x).map(|(_, r)| r);
            let bwd = map.iter().find(|(_, r)| r == y).map(|(l, _)| l);
            match (fwd, bwd) {
                (None, None) => {
                    map.push((*x, *y));
                    true
                }
                (Some(r), Some(l)) => r == y && l == x,
                _ => false,
            }
        }
        (Term::Atom(m), Term::Atom(n)) => m == n,
        (Term::Int(i), Term::Int(j)) => i == j,
        (Term::Compound(f, xs), Term::Compound(g, ys)) => {
            f == g
                && xs.len() == ys.len()
                && xs
                    .iter()
                    .zip(ys.iter())
                    .all(|(x, y)| alpha_eq_inner(x, y, map))
        }
        _ => false,
    }
}

/// Clause-level alpha-equivalence: head and body together, one bijection.
pub fn alpha_eq_clause(a: &Clause, b: &Clause) -> bool {
    let mut map = Vec::new();
    alpha_eq_inner(&a.head, &b.head, &mut map) && alpha_eq_inner(&a.body, &b.body, &mut map)
}

/// Program-level alpha-equivalence: same clause sequence, clause-wise alpha.
pub fn alpha_eq_program(a: &Program, b: &Program) -> bool {
    a.clauses.len() == b.clauses.len()
        && a.directives.len() == b.directives.len()
        && a.clauses
            .iter()
            .zip(b.clauses.iter())
            .all(|(x, y)| alpha_eq_clause(x, y))
        && a.directives
            .iter()
            .zip(b.directives.iter())
            .all(|(x, y)| alpha_eq(x, y))
}
