//! Source-to-source transformations that make exception handling emulate
//! backjumping on the plain engine.
//!
//! Programs destined for backjumping carry marker goals:
//!
//! * `'$my_id'(V)` in a clause body names the variable that receives the
//!   clause's backjump identifier. Approach 1/1a consume it into `V = Id`
//!   where `Id` comes from `btid/2`; native lowering turns it into
//!   `parent_choice(V)`.
//! * `backjump(V)` initiates the jump. The native engine runs it directly;
//!   Approach 1/1a rewrite it to `throw(V)` so the inserted catch barriers
//!   can field it.
//! * `'$catch_rest'(IdTerm)` splits a clause body for Approach 2:
//!   everything right of the marker becomes `catch(Rest, IdTerm, fail)`.
//!   The reserved atom `fresh` asks for a `btid/2` identifier instead of a
//!   verbatim catcher.
//!
//! Markers that survive to runtime are rejected by the engine, so a
//! program must pass through exactly one of these lowerings before it runs.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::term::{Clause, Pred, Program, Term, VarId};

pub const MY_ID_MARKER: &str = "$my_id";
pub const CATCH_REST_MARKER: &str = "$catch_rest";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransformError {
    #[error("approach 1/1a needs a non-empty target set")]
    EmptyTargets,
    #[error("target predicate {0} is not defined in the program")]
    NoSuchPredicate(Pred),
    #[error("'{marker}' appears more than once in clause {clause} of {pred}")]
    MarkerRepeated {
        marker: &'static str,
        pred: Pred,
        clause: usize,
    },
    #[error("'$catch_rest' in clause {clause} of {pred} is nested; the split point must be a top-level conjunct")]
    CatchRestNested { pred: Pred, clause: usize },
    #[error("approach 2 requires at least one '$catch_rest' marker")]
    NoCatchRestMarkers,
    #[error("program already carries btid/catch instrumentation; transforming twice is not supported")]
    AlreadyTransformed,
    #[error("'$catch_rest' markers cannot be lowered for the native engine; use approach 2")]
    CatchRestUnderNative,
}

#[derive(Debug)]
pub struct TransformOutput {
    pub program: Program,
    pub warnings: Vec<String>,
}

/// Detects an already-instrumented program: `btid/2` goals only ever come
/// from these transformations (the `'$bj'` identifiers they produce exist
/// only at runtime, so the call sites are the durable evidence).
pub fn already_transformed(p: &Program) -> bool {
    p.clauses().iter().any(|c| {
        c.body.contains_functor("btid", 2) || c.body.contains_functor(super_bj(), 2)
    })
}

fn super_bj() -> &'static str {
    crate::engine::BTID_FUNCTOR
}

struct FreshVars {
    next: u64,
}

impl FreshVars {
    fn new(p: &Program) -> Self {
        FreshVars {
            next: p.var_ceiling(),
        }
    }

    fn fresh(&mut self, hint: &str) -> Term {
        let id = VarId(self.next);
        self.next += 1;
        Term::var(id, hint)
    }
}

/// The head-argument tuple fed to `btid/2`: the lone argument for arity 1,
/// a right-nested `','` tuple otherwise, the predicate name for arity 0.
fn head_tuple(head: &Term) -> Term {
    match head {
        Term::Atom(n) => Term::Atom(n.clone()),
        Term::Compound(_, args) => {
            let mut it = args.iter().rev().cloned();
            let last = it.next().expect("compound arity >= 1");
            it.fold(last, |acc, a| Term::compound(",", vec![a, acc]))
        }
        _ => unreachable!("clause heads are atoms or compounds"),
    }
}

fn count_functor(t: &Term, name: &str, arity: usize) -> usize {
    let mut n = 0;
    let mut stack = vec![t];
    while let Some(t) = stack.pop() {
        if let Term::Compound(f, args) = t {
            if f == name && args.len() == arity {
                n += 1;
            }
            stack.extend(args.iter());
        }
    }
    n
}

/// Replaces every `'$my_id'(V)` subgoal with `V = Id`.
fn consume_my_id(t: &Term, id_var: &Term) -> Term {
    match t {
        Term::Compound(f, args) if f == MY_ID_MARKER && args.len() == 1 => {
            Term::compound("=", vec![args[0].clone(), id_var.clone()])
        }
        Term::Compound(f, args) => {
            let new_args: Vec<Term> = args.iter().map(|a| consume_my_id(a, id_var)).collect();
            Term::Compound(f.clone(), new_args.into())
        }
        other => other.clone(),
    }
}

/// Rewrites `backjump(V)` into `throw(V)`; the inserted catch barriers
/// realize the jump on the plain engine.
fn backjump_to_throw(t: &Term) -> Term {
    match t {
        Term::Compound(f, args) if f == "backjump" && args.len() == 1 => {
            Term::compound("throw", vec![args[0].clone()])
        }
        Term::Compound(f, args) => {
            let new_args: Vec<Term> = args.iter().map(backjump_to_throw).collect();
            Term::Compound(f.clone(), new_args.into())
        }
        other => other.clone(),
    }
}

fn replace_functor1(t: &Term, from: &str, to: &str) -> Term {
    match t {
        Term::Compound(f, args) if f == from && args.len() == 1 => {
            Term::compound(to, vec![args[0].clone()])
        }
        Term::Compound(f, args) => {
            let new_args: Vec<Term> = args.iter().map(|a| replace_functor1(a, from, to)).collect();
            Term::Compound(f.clone(), new_args.into())
        }
        other => other.clone(),
    }
}

fn catch_goal(goal: Term, catcher: Term, recovery: Term) -> Term {
    Term::compound("catch", vec![goal, catcher, recovery])
}

fn validate_targets(p: &Program, targets: &BTreeSet<Pred>) -> Result<(), TransformError> {
    if targets.is_empty() {
        return Err(TransformError::EmptyTargets);
    }
    for t in targets {
        if p.clauses_of(t).is_none() {
            return Err(TransformError::NoSuchPredicate(t.clone()));
        }
    }
    Ok(())
}

fn check_single_my_id(
    body: &Term,
    pred: &Pred,
    clause: usize,
) -> Result<usize, TransformError> {
    let n = count_functor(body, MY_ID_MARKER, 1);
    if n > 1 {
        Err(TransformError::MarkerRepeated {
            marker: MY_ID_MARKER,
            pred: pred.clone(),
            clause,
        })
    } else {
        Ok(n)
    }
}

fn warn_leftover_my_id(warnings: &mut Vec<String>, pred: &Pred, clause: usize) {
    warnings.push(format!(
        "'$my_id' marker in non-target clause {clause} of {pred} is left in place and will be rejected at runtime"
    ));
}

/// Approach 1: every clause `p(t) :- B` of a target predicate becomes
/// `p(t) :- btid(t, Id), catch(B', Id, fail)`, where `B'` has the
/// `'$my_id'(V)` marker turned into `V = Id` and `backjump(V)` turned into
/// `throw(V)`. A thrown identifier then fails exactly the clause whose
/// btid produced it, and the call moves on to its next alternative.
pub fn approach1(p: &Program, targets: &BTreeSet<Pred>) -> Result<TransformOutput, TransformError> {
    validate_targets(p, targets)?;
    if already_transformed(p) {
        return Err(TransformError::AlreadyTransformed);
    }
    let mut fresh = FreshVars::new(p);
    let mut warnings = Vec::new();
    let mut out = Program::new(Vec::new(), p.directives().to_vec());
    for (pos, clause) in p.clauses().iter().enumerate() {
        let pred = clause.pred();
        let body = backjump_to_throw(&clause.body);
        if targets.contains(&pred) {
            check_single_my_id(&body, &pred, pos)?;
            let id = fresh.fresh("Id");
            let body = consume_my_id(&body, &id);
            let new_body = Term::compound(
                ",",
                vec![
                    Term::compound("btid", vec![head_tuple(&clause.head), id.clone()]),
                    catch_goal(body, id, Term::atom("fail")),
                ],
            );
            out.push_clause(Clause::new(clause.head.clone(), new_body));
        } else {
            if count_functor(&body, MY_ID_MARKER, 1) > 0 {
                warn_leftover_my_id(&mut warnings, &pred, pos);
            }
            out.push_clause(Clause::new(clause.head.clone(), body));
        }
    }
    out.set_var_ceiling(fresh.next);
    Ok(TransformOutput {
        program: out,
        warnings,
    })
}

/// Approach 1a: the n clauses of a target predicate collapse into one
/// clause over a fresh head `p(X1..Xk)` whose body is a nested catch
/// chain; backtracking off the end of clause j's alternatives raises the
/// identifier, and the handler runs clause j+1:
///
/// ```text
/// p(Xs) :- btid(Xs, Id),
///          catch(((Xs = t1, B1) ; throw(Id)), Id,
///          catch(((Xs = t2, B2) ; throw(Id)), Id,
///          ...
///          catch((Xs = tn, Bn), Id, fail) ... )).
/// ```
///
/// The explicit `Xs = tj` unifications generalize identical-head procedures
/// to arbitrary ones.
pub fn approach1a(
    p: &Program,
    targets: &BTreeSet<Pred>,
) -> Result<TransformOutput, TransformError> {
    validate_targets(p, targets)?;
    if already_transformed(p) {
        return Err(TransformError::AlreadyTransformed);
    }
    let mut fresh = FreshVars::new(p);
    let mut warnings = Vec::new();
    let mut out = Program::new(Vec::new(), p.directives().to_vec());
    let mut done: BTreeSet<Pred> = BTreeSet::new();
    for (pos, clause) in p.clauses().iter().enumerate() {
        let pred = clause.pred();
        if !targets.contains(&pred) {
            let body = backjump_to_throw(&clause.body);
            if count_functor(&body, MY_ID_MARKER, 1) > 0 {
                warn_leftover_my_id(&mut warnings, &pred, pos);
            }
            out.push_clause(Clause::new(clause.head.clone(), body));
            continue;
        }
        if done.contains(&pred) {
            continue; // merged at the first clause
        }
        done.insert(pred.clone());
        let positions = p.clauses_of(&pred).expect("validated above");
        let id = fresh.fresh("Id");
        let head_vars: Vec<Term> = (1..=pred.arity)
            .map(|i| fresh.fresh(&format!("X{i}")))
            .collect();
        let new_head = if head_vars.is_empty() {
            Term::Atom(pred.name.clone())
        } else {
            Term::Compound(pred.name.clone(), head_vars.clone().into())
        };
        // build the chain innermost-first
        let mut chain: Option<Term> = None;
        for (j, &cpos) in positions.iter().enumerate().rev() {
            let src = p.clause(cpos);
            let body = backjump_to_throw(&src.body);
            check_single_my_id(&body, &pred, cpos)?;
            let body = consume_my_id(&body, &id);
            let entry = if head_vars.is_empty() {
                body
            } else {
                let unif = Term::compound(
                    "=",
                    vec![Term::conj(head_vars.clone()), head_tuple(&src.head)],
                );
                Term::compound(",", vec![unif, body])
            };
            chain = Some(match chain {
                None => catch_goal(entry, id.clone(), Term::atom("fail")),
                Some(inner) => {
                    let last = j == positions.len() - 1;
                    debug_assert!(!last);
                    let left = Term::compound(
                        ";",
                        vec![entry, Term::compound("throw", vec![id.clone()])],
                    );
                    catch_goal(left, id.clone(), inner)
                }
            });
        }
        let chain = chain.expect("target predicate has at least one clause");
        let new_body = Term::compound(
            ",",
            vec![
                Term::compound("btid", vec![head_tuple(&new_head), id.clone()]),
                chain,
            ],
        );
        out.push_clause(Clause::new(new_head, new_body));
    }
    out.set_var_ceiling(fresh.next);
    Ok(TransformOutput {
        program: out,
        warnings,
    })
}

/// Approach 2: a clause `H :- B0, '$catch_rest'(IdTerm), B1` becomes
/// `H :- B0, catch(B1, IdTerm, fail)`. When a matching identifier is
/// thrown from within B1, the catch fails and standard backtracking
/// resumes at the success of B0 — the paper's approximate backjump target.
/// `'$catch_rest'(fresh)` inserts `btid(HeadArgs, Id)` and catches on that
/// identifier instead.
pub fn approach2(p: &Program) -> Result<TransformOutput, TransformError> {
    if already_transformed(p) {
        return Err(TransformError::AlreadyTransformed);
    }
    let mut fresh = FreshVars::new(p);
    let mut out = Program::new(Vec::new(), p.directives().to_vec());
    let mut marked = 0usize;
    for (pos, clause) in p.clauses().iter().enumerate() {
        let pred = clause.pred();
        let total = count_functor(&clause.body, CATCH_REST_MARKER, 1);
        if total == 0 {
            out.push_clause(clause.clone());
            continue;
        }
        if total > 1 {
            return Err(TransformError::MarkerRepeated {
                marker: CATCH_REST_MARKER,
                pred,
                clause: pos,
            });
        }
        let conjuncts: Vec<Term> = clause.body.conjuncts().into_iter().cloned().collect();
        let at = conjuncts.iter().position(
            |g| matches!(g, Term::Compound(f, args) if f == CATCH_REST_MARKER && args.len() == 1),
        );
        let Some(at) = at else {
            // present in the body but not as a top-level conjunct
            return Err(TransformError::CatchRestNested { pred, clause: pos });
        };
        marked += 1;
        let id_term = conjuncts[at].args()[0].clone();
        let mut prefix: Vec<Term> = conjuncts[..at].to_vec();
        let rest = Term::conj(conjuncts[at + 1..].to_vec());
        let catcher = if id_term.is_atom("fresh") {
            let id = fresh.fresh("Id");
            prefix.push(Term::compound(
                "btid",
                vec![head_tuple(&clause.head), id.clone()],
            ));
            id
        } else {
            id_term
        };
        prefix.push(catch_goal(rest, catcher, Term::atom("fail")));
        out.push_clause(Clause::new(clause.head.clone(), Term::conj(prefix)));
    }
    if marked == 0 {
        return Err(TransformError::NoCatchRestMarkers);
    }
    out.set_var_ceiling(fresh.next);
    Ok(TransformOutput {
        program: out,
        warnings: Vec::new(),
    })
}

/// Lowers an annotated program for the native-backjump engine:
/// `'$my_id'(V)` becomes `parent_choice(V)` and `backjump(V)` stays as the
/// native primitive.
pub fn lower_native(p: &Program) -> Result<TransformOutput, TransformError> {
    let mut out = Program::new(Vec::new(), p.directives().to_vec());
    for clause in p.clauses() {
        if count_functor(&clause.body, CATCH_REST_MARKER, 1) > 0 {
            return Err(TransformError::CatchRestUnderNative);
        }
        let body = replace_functor1(&clause.body, MY_ID_MARKER, "parent_choice");
        out.push_clause(Clause::new(clause.head.clone(), body));
    }
    out.set_var_ceiling(p.var_ceiling());
    Ok(TransformOutput {
        program: out,
        warnings: Vec::new(),
    })
}
