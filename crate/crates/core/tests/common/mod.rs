//! Shared test machinery: a tiny independent SLD enumerator used as an
//! answer-order oracle, and the native-vs-transformed equivalence harness.

#![allow(dead_code)]

use std::collections::BTreeSet;

use leaplog::engine::{solve, Answer, EngineConfig, EngineMode, ExitStatus};
use leaplog::parser::{parse_program, parse_term_from};
use leaplog::term::{alpha_eq, Pred, Program, Term, VarId};
use leaplog::trace::{clause_tries, compare, project_user, MemorySink, TraceEvent, Verdict};
use leaplog::transform::{approach1, approach1a, lower_native};
use leaplog::writer::term_to_string;

// ---------------------------------------------------------------------------
// Reference SLD enumerator (independent oracle for pure programs)
// ---------------------------------------------------------------------------

/// Naive SLD resolution over pure programs (user predicates, `,`, `true`),
/// depth-first with textual clause order, collecting rendered answers.
/// Deliberately separate from the engine: terms are walked through a plain
/// substitution map and clause renaming composes substitutions.
pub mod sld {
    use super::*;
    use std::collections::HashMap;

    type Sub = HashMap<u64, Term>;

    fn walk(t: &Term, sub: &Sub) -> Term {
        let mut cur = t.clone();
        while let Term::Var(VarId(id), _) = &cur {
            match sub.get(id) {
                Some(next) => cur = next.clone(),
                None => break,
            }
        }
        cur
    }

    fn unify(a: &Term, b: &Term, sub: &mut Sub) -> bool {
        let a = walk(a, sub);
        let b = walk(b, sub);
        match (a, b) {
            (Term::Var(VarId(x), _), Term::Var(VarId(y), _)) if x == y => true,
            (Term::Var(VarId(x), _), t) | (t, Term::Var(VarId(x), _)) => {
                sub.insert(x, t);
                true
            }
            (Term::Atom(m), Term::Atom(n)) => m == n,
            (Term::Int(i), Term::Int(j)) => i == j,
            (Term::Compound(f, xs), Term::Compound(g, ys)) => {
                f == g
                    && xs.len() == ys.len()
                    && xs.iter().zip(ys.iter()).all(|(x, y)| unify(x, y, sub))
            }
            _ => false,
        }
    }

    fn rename(t: &Term, map: &mut HashMap<u64, u64>, next: &mut u64) -> Term {
        match t {
            Term::Var(VarId(id), hint) => {
                let nid = *map.entry(*id).or_insert_with(|| {
                    let n = *next;
                    *next += 1;
                    n
                });
                Term::Var(VarId(nid), hint.clone())
            }
            Term::Compound(f, args) => {
                let args: Vec<Term> = args.iter().map(|a| rename(a, map, next)).collect();
                Term::Compound(f.clone(), args.into())
            }
            other => other.clone(),
        }
    }

    fn resolve(t: &Term, sub: &Sub) -> Term {
        match walk(t, sub) {
            Term::Compound(f, args) => {
                let args: Vec<Term> = args.iter().map(|a| resolve(a, sub)).collect();
                Term::Compound(f, args.into())
            }
            other => other,
        }
    }

    fn dfs(
        program: &Program,
        goals: &mut Vec<Term>,
        sub: &mut Sub,
        next: &mut u64,
        fuel: &mut u64,
        out: &mut Vec<Sub>,
    ) {
        if *fuel == 0 {
            panic!("reference interpreter fuel exhausted");
        }
        *fuel -= 1;
        let orig = match goals.pop() {
            None => {
                out.push(sub.clone());
                return;
            }
            Some(g) => g,
        };
        // the original (unwalked) goal goes back on the stack before every
        // return, so sibling branches see it under their own substitution
        let goal = walk(&orig, sub);
        if goal.is_atom("true") {
            dfs(program, goals, sub, next, fuel, out);
            goals.push(orig);
            return;
        }
        if let Term::Compound(f, args) = &goal {
            if f.as_str() == "," && args.len() == 2 {
                goals.push(args[1].clone());
                goals.push(args[0].clone());
                dfs(program, goals, sub, next, fuel, out);
                goals.pop();
                goals.pop();
                goals.push(orig);
                return;
            }
        }
        let pred = Pred::of_term(&goal).expect("pure goal");
        let positions = program.clauses_of(&pred).expect("defined predicate");
        for &pos in positions {
            let clause = program.clause(pos);
            let mut map = HashMap::new();
            let head = rename(&clause.head, &mut map, next);
            let body = rename(&clause.body, &mut map, next);
            let saved = sub.clone();
            if unify(&goal, &head, sub) {
                goals.push(body);
                dfs(program, goals, sub, next, fuel, out);
                goals.pop();
            }
            *sub = saved;
        }
        goals.push(orig);
    }

    /// Answers in LD order as `name = value` text lines per answer.
    pub fn answers(program: &Program, query: &Term) -> Vec<Vec<String>> {
        let mut next = program
            .var_ceiling()
            .max(query.max_var_id().map_or(0, |m| m + 1));
        let mut goals = vec![query.clone()];
        let mut sub = Sub::new();
        let mut out = Vec::new();
        let mut fuel = 1_000_000;
        dfs(program, &mut goals, &mut sub, &mut next, &mut fuel, &mut out);
        let qvars = query.variables();
        out.into_iter()
            .map(|sub| {
                qvars
                    .iter()
                    .map(|(id, hint)| {
                        let v = resolve(&Term::Var(*id, hint.clone()), &sub);
                        format!("{hint} = {}", term_to_string(&v))
                    })
                    .collect()
            })
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Run helpers
// ---------------------------------------------------------------------------

pub struct Run {
    pub answers: Vec<Answer>,
    pub status: ExitStatus,
    pub events: Vec<TraceEvent>,
}

pub fn run_with(program: &Program, query: &str, config: &EngineConfig) -> Run {
    let (goal, _) = parse_term_from(query, program.var_ceiling()).expect("query parses");
    run_goal(program, &goal, config)
}

pub fn run_goal(program: &Program, goal: &Term, config: &EngineConfig) -> Run {
    let mut sink = MemorySink::new();
    let outcome = solve(program, goal, config, &mut sink);
    Run {
        answers: outcome.answers,
        status: outcome.status,
        events: sink.events,
    }
}

pub fn run_plain(src: &str, query: &str) -> Run {
    let program = parse_program(src).expect("program parses");
    run_with(&program, query, &EngineConfig::default())
}

pub fn targets(specs: &[(&str, usize)]) -> BTreeSet<Pred> {
    specs.iter().map(|(n, a)| Pred::new(n, *a)).collect()
}

// ---------------------------------------------------------------------------
// Answer comparison modulo backjump identifiers
// ---------------------------------------------------------------------------

/// Replaces `'$node'/1` and `'$bj'/2` subterms with a placeholder: the two
/// backjump realizations mint structurally different identifiers, which
/// are opaque tokens as far as program meaning goes.
pub fn normalize_ids(t: &Term) -> Term {
    match t {
        Term::Compound(f, args) if f.as_str() == "$node" && args.len() == 1 => Term::atom("$id"),
        Term::Compound(f, args) if f.as_str() == "$bj" && args.len() == 2 => Term::atom("$id"),
        Term::Compound(f, args) => {
            let args: Vec<Term> = args.iter().map(normalize_ids).collect();
            Term::Compound(f.clone(), args.into())
        }
        other => other.clone(),
    }
}

fn answer_tuple(a: &Answer) -> Term {
    let mut pairs: Vec<(String, Term)> = a
        .bindings
        .iter()
        .map(|(n, _, t)| (n.as_str().to_string(), normalize_ids(t)))
        .collect();
    pairs.sort_by(|(x, _), (y, _)| x.cmp(y));
    let items: Vec<Term> = pairs.into_iter().map(|(_, t)| t).collect();
    if items.is_empty() {
        Term::atom("empty")
    } else {
        Term::compound("answer", items)
    }
}

/// Same answers in the same order, values compared structurally up to
/// variable renaming after identifier normalization.
pub fn answers_equivalent(a: &[Answer], b: &[Answer]) -> Result<(), String> {
    if a.len() != b.len() {
        return Err(format!("answer counts differ: {} vs {}", a.len(), b.len()));
    }
    for (i, (x, y)) in a.iter().zip(b.iter()).enumerate() {
        let (tx, ty) = (answer_tuple(x), answer_tuple(y));
        if !alpha_eq(&tx, &ty) {
            return Err(format!(
                "answer {i} differs:\n  left:  {}\n  right: {}",
                term_to_string(&tx),
                term_to_string(&ty)
            ));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Native-vs-transformed equivalence harness
// ---------------------------------------------------------------------------

pub enum Route {
    Native,
    A1(BTreeSet<Pred>),
    A1a(BTreeSet<Pred>),
}

pub fn prepare(src_program: &Program, route: &Route) -> (Program, EngineConfig) {
    match route {
        Route::Native => (
            lower_native(src_program).expect("lowers").program,
            EngineConfig {
                mode: EngineMode::NativeBackjump,
                ..EngineConfig::default()
            },
        ),
        Route::A1(targets) => (
            approach1(src_program, targets).expect("transforms").program,
            EngineConfig::default(),
        ),
        Route::A1a(targets) => (
            approach1a(src_program, targets).expect("transforms").program,
            EngineConfig::default(),
        ),
    }
}

/// The visited-alternative sequence: projected ClauseTry events, optionally
/// with some predicates excluded (the 1a merge changes the clause geometry
/// of the target predicates themselves).
pub fn try_sequence(events: &[TraceEvent], exclude: &BTreeSet<Pred>) -> Vec<TraceEvent> {
    clause_tries(&project_user(events))
        .into_iter()
        .filter(|e| !exclude.contains(&e.pred))
        .collect()
}

/// Runs the annotated source both ways and checks: equal status labels,
/// equivalent answer sequences, and identical ClauseTry sequences up to
/// node-id isomorphism (excluding `exclude_preds`).
pub fn assert_equivalent_runs(
    annotated: &Program,
    goal: &Term,
    left: &Route,
    right: &Route,
    exclude_preds: &BTreeSet<Pred>,
    label: &str,
) {
    let (lp, lc) = prepare(annotated, left);
    let (rp, rc) = prepare(annotated, right);
    let lr = run_goal(&lp, goal, &lc);
    let rr = run_goal(&rp, goal, &rc);
    assert_eq!(
        lr.status.label(),
        rr.status.label(),
        "{label}: statuses differ: {:?} vs {:?}",
        lr.status,
        rr.status
    );
    if let Err(e) = answers_equivalent(&lr.answers, &rr.answers) {
        panic!("{label}: {e}");
    }
    let lt = try_sequence(&lr.events, exclude_preds);
    let rt = try_sequence(&rr.events, exclude_preds);
    match compare(&lt, &rt) {
        Verdict::Equal => {}
        Verdict::FirstDivergence { index, .. } => {
            let show = |t: &[TraceEvent]| {
                t.iter()
                    .map(|e| e.to_line())
                    .collect::<Vec<_>>()
                    .join("\n")
            };
            panic!(
                "{label}: ClauseTry sequences diverge at {index}\nleft:\n{}\nright:\n{}",
                show(&lt),
                show(&rt)
            );
        }
    }
}
