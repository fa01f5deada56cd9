//! Variable store, unification with trailing, checkpoint/undo.
//!
//! A `Bindings` owns the mutable state of one engine run: the variable
//! store, the trail, and the fresh-variable counter. Distinct instances
//! are fully independent, so engines can run concurrently.

use std::collections::HashMap;
use std::hash::{BuildHasherDefault, Hasher};

use crate::term::{Clause, Name, Term, VarId};

/// Variable ids are already well distributed; hash them with a single
/// multiply instead of SipHash. The store is hit on every resolution step.
#[derive(Default, Clone)]
pub struct IdHasher(u64);

impl Hasher for IdHasher {
    fn finish(&self) -> u64 {
        self.0
    }

    fn write(&mut self, _bytes: &[u8]) {
        unreachable!("IdHasher only hashes u64 keys");
    }

    fn write_u64(&mut self, n: u64) {
        self.0 = n.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    }
}

type IdMap<V> = HashMap<VarId, V, BuildHasherDefault<IdHasher>>;

/// A checkpoint into the trail; see [`Bindings::mark`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TrailMark(usize);

/// Node budget for printing through a store. Without the occurs check the
/// store can hold cyclic terms; walks give up past this many visited nodes.
pub const DEREF_BUDGET: usize = 10_000;

/// Node budget for snapshots and ball copies. Larger than the print
/// budget: answers of annotated programs legitimately embed identifier
/// terms that repeat big argument tuples.
pub const COPY_BUDGET: usize = 1_000_000;

/// Nesting bound for recursive walks, so a cyclic argument chain is caught
/// before it eats the call stack. List spines do not count against it.
pub const MAX_NESTING: usize = 1_000;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("term too deeply nested or cyclic (dereference budget exhausted)")]
pub struct DepthExceeded;

#[derive(Debug, Default)]
pub struct Bindings {
    store: IdMap<Term>,
    trail: Vec<VarId>,
    next_var: u64,
}

impl Bindings {
    pub fn new() -> Self {
        Bindings::default()
    }

    /// Starts the fresh-variable counter at `first`. Terms already carrying
    /// ids below `first` keep their identity.
    pub fn with_first_var(first: u64) -> Self {
        Bindings {
            next_var: first,
            ..Bindings::default()
        }
    }

    pub fn next_var_id(&self) -> u64 {
        self.next_var
    }

    pub fn bump_next_var(&mut self, at_least: u64) {
        self.next_var = self.next_var.max(at_least);
    }

    pub fn fresh_var(&mut self, hint: &str) -> Term {
        let id = VarId(self.next_var);
        self.next_var += 1;
        Term::var(id, hint)
    }

    fn fresh_var_name(&mut self, hint: Name) -> Term {
        let id = VarId(self.next_var);
        self.next_var += 1;
        Term::Var(id, hint)
    }

    pub fn is_bound(&self, v: VarId) -> bool {
        self.store.contains_key(&v)
    }

    pub fn bound_count(&self) -> usize {
        self.store.len()
    }

    /// Follows bound variables until an unbound variable or a non-variable
    /// term; the returned clone is cheap (argument vectors are shared).
    pub fn resolve(&self, t: &Term) -> Term {
        let mut cur = t;
        while let Term::Var(v, _) = cur {
            match self.store.get(v) {
                Some(next) => cur = next,
                None => break,
            }
        }
        cur.clone()
    }

    fn bind(&mut self, v: VarId, t: Term) {
        debug_assert!(
            !self.store.contains_key(&v),
            "variable {v:?} rebound without undo"
        );
        self.store.insert(v, t);
        self.trail.push(v);
    }

    pub fn mark(&self) -> TrailMark {
        TrailMark(self.trail.len())
    }

    /// Removes every binding made after `m`. A mark beyond the current
    /// trail is a programming error and aborts.
    pub fn undo_to(&mut self, m: TrailMark) {
        assert!(
            m.0 <= self.trail.len(),
            "stale trail mark: {} > {}",
            m.0,
            self.trail.len()
        );
        while self.trail.len() > m.0 {
            let v = self.trail.pop().unwrap();
            self.store.remove(&v);
        }
    }

    /// Unifies `a` and `b`, extending the store to an mgu on success. On
    /// failure the store is restored to its pre-call state.
    pub fn unify(&mut self, a: &Term, b: &Term, occurs_check: bool) -> bool {
        let m = self.mark();
        if self.unify_inner(a.clone(), b.clone(), occurs_check) {
            true
        } else {
            self.undo_to(m);
            false
        }
    }

    fn unify_inner(&mut self, a: Term, b: Term, oc: bool) -> bool {
        let a = self.resolve(&a);
        let b = self.resolve(&b);
        match (a, b) {
            (Term::Var(x, _), Term::Var(y, _)) if x == y => true,
            (Term::Var(x, _), t) | (t, Term::Var(x, _)) => {
                if oc && self.occurs(x, &t) {
                    return false;
                }
                self.bind(x, t);
                true
            }
            (Term::Atom(m), Term::Atom(n)) => m == n,
            (Term::Int(i), Term::Int(j)) => i == j,
            (Term::Compound(f, xs), Term::Compound(g, ys)) => {
                f == g
                    && xs.len() == ys.len()
                    && xs
                        .iter()
                        .zip(ys.iter())
                        .all(|(x, y)| self.unify_inner(x.clone(), y.clone(), oc))
            }
            _ => false,
        }
    }

    /// True if variable `v` occurs in (the dereferenced form of) `t`.
    pub fn occurs(&self, v: VarId, t: &Term) -> bool {
        let mut stack = vec![self.resolve(t)];
        while let Some(t) = stack.pop() {
            match t {
                Term::Var(w, _) => {
                    if w == v {
                        return true;
                    }
                }
                Term::Compound(_, args) => {
                    for a in args.iter() {
                        stack.push(self.resolve(a));
                    }
                }
                _ => {}
            }
        }
        false
    }

    /// Fresh variant of a clause: every variable replaced by a new one
    /// drawn from this store's counter, hints preserved.
    pub fn rename_clause(&mut self, c: &Clause) -> Clause {
        let mut map: IdMap<Term> = IdMap::default();
        let head = self.rename_term(&c.head, &mut map);
        let body = self.rename_term(&c.body, &mut map);
        Clause::new(head, body)
    }

    fn rename_term(&mut self, t: &Term, map: &mut IdMap<Term>) -> Term {
        match t {
            Term::Var(v, hint) => match map.get(v) {
                Some(fresh) => fresh.clone(),
                None => {
                    let fresh = self.fresh_var_name(hint.clone());
                    map.insert(*v, fresh.clone());
                    fresh
                }
            },
            Term::Atom(_) | Term::Int(_) => t.clone(),
            Term::Compound(f, args) => {
                let new_args: Vec<Term> =
                    args.iter().map(|a| self.rename_term(a, map)).collect();
                Term::Compound(f.clone(), new_args.into())
            }
        }
    }

    /// Fully dereferenced copy of `t`; unbound variables stay themselves.
    pub fn snapshot(&self, t: &Term) -> Result<Term, DepthExceeded> {
        let mut budget = COPY_BUDGET;
        self.snapshot_inner(t, &mut budget, 0)
    }

    fn snapshot_inner(
        &self,
        t: &Term,
        budget: &mut usize,
        depth: usize,
    ) -> Result<Term, DepthExceeded> {
        if *budget == 0 || depth > MAX_NESTING {
            return Err(DepthExceeded);
        }
        *budget -= 1;
        match self.resolve(t) {
            Term::Compound(f, args) => {
                let mut new_args = Vec::with_capacity(args.len());
                for a in args.iter() {
                    new_args.push(self.snapshot_inner(a, budget, depth + 1)?);
                }
                Ok(Term::Compound(f, new_args.into()))
            }
            other => Ok(other),
        }
    }

    /// `copy_term`: dereferenced copy with unbound variables renamed to
    /// fresh ones (sharing preserved). Used for the exception ball, which
    /// must be insulated from later trail undos.
    pub fn copy_fresh(&mut self, t: &Term) -> Result<Term, DepthExceeded> {
        let mut budget = COPY_BUDGET;
        let mut map: IdMap<Term> = IdMap::default();
        self.copy_fresh_inner(t, &mut map, &mut budget, 0)
    }

    /// Copy of the term *as written*: no dereferencing, every variable
    /// replaced by a fresh one. Cheap and store-independent; used for the
    /// term a btid identifier carries, where inlining variable values
    /// would compound earlier identifiers into later ones.
    pub fn copy_syntactic(&mut self, t: &Term) -> Term {
        let mut map: IdMap<Term> = IdMap::default();
        self.copy_syntactic_inner(t, &mut map)
    }

    fn copy_syntactic_inner(&mut self, t: &Term, map: &mut IdMap<Term>) -> Term {
        match t {
            Term::Var(v, hint) => match map.get(v) {
                Some(fresh) => fresh.clone(),
                None => {
                    let fresh = self.fresh_var_name(hint.clone());
                    map.insert(*v, fresh.clone());
                    fresh
                }
            },
            Term::Atom(_) | Term::Int(_) => t.clone(),
            Term::Compound(f, args) => {
                let args: Vec<Term> =
                    args.iter().map(|a| self.copy_syntactic_inner(a, map)).collect();
                Term::Compound(f.clone(), args.into())
            }
        }
    }

    fn copy_fresh_inner(
        &mut self,
        t: &Term,
        map: &mut IdMap<Term>,
        budget: &mut usize,
        depth: usize,
    ) -> Result<Term, DepthExceeded> {
        if *budget == 0 || depth > MAX_NESTING {
            return Err(DepthExceeded);
        }
        *budget -= 1;
        match self.resolve(t) {
            Term::Var(v, hint) => Ok(match map.get(&v) {
                Some(fresh) => fresh.clone(),
                None => {
                    let fresh = self.fresh_var_name(hint);
                    map.insert(v, fresh.clone());
                    fresh
                }
            }),
            Term::Compound(f, args) => {
                let mut new_args = Vec::with_capacity(args.len());
                for a in args.iter() {
                    new_args.push(self.copy_fresh_inner(a, map, budget, depth + 1)?);
                }
                Ok(Term::Compound(f, new_args.into()))
            }
            other => Ok(other),
        }
    }
}
