//! Equivalence of the two backjump realizations: the native primitive and
//! the exception-handling transformations, on annotated binary programs.

mod common;

use std::collections::BTreeSet;

use common::{assert_equivalent_runs, targets, Route};
use leaplog::engine::EngineMode;
use leaplog::parser::{parse_program, parse_term_from};
use leaplog::satlab::{gen_cnf, to_query, CorpusProgram};
use leaplog::term::{Pred, Program, Term};

const BT_CHAIN: &str = include_str!("fixtures/bt_chain.pl");
const BT_TWO_LEVEL: &str = include_str!("fixtures/bt_two_level.pl");
const BT_FUNNEL: &str = include_str!("fixtures/bt_funnel.pl");

fn fixture(src: &str) -> Program {
    parse_program(src).unwrap()
}

fn goal(p: &Program, q: &str) -> Term {
    parse_term_from(q, p.var_ceiling()).unwrap().0
}

struct Case {
    program: Program,
    queries: Vec<&'static str>,
    targets: BTreeSet<Pred>,
}

fn fixture_cases() -> Vec<Case> {
    vec![
        Case {
            program: fixture(BT_CHAIN),
            queries: vec!["chain_pick(X)", "chain_pick(2)", "chain_pick(1)"],
            targets: targets(&[("chain_pick", 1)]),
        },
        Case {
            program: fixture(BT_TWO_LEVEL),
            queries: vec!["tl_outer(A, B)", "tl_outer(a3, B)", "tl_outer(a1, B)"],
            targets: targets(&[("tl_outer", 2)]),
        },
        Case {
            program: fixture(BT_FUNNEL),
            queries: vec!["fn_a(X, Y)", "fn_a(2, Y)", "fn_a(1, Y)"],
            targets: targets(&[("fn_a", 2), ("fn_b", 3)]),
        },
    ]
}

#[test]
fn fixtures_native_equals_approach1() {
    for case in fixture_cases() {
        for q in &case.queries {
            let g = goal(&case.program, q);
            assert_equivalent_runs(
                &case.program,
                &g,
                &Route::Native,
                &Route::A1(case.targets.clone()),
                &BTreeSet::new(),
                &format!("native vs a1 on {q}"),
            );
        }
    }
}

#[test]
fn fixtures_approach1_equals_approach1a() {
    for case in fixture_cases() {
        for q in &case.queries {
            let g = goal(&case.program, q);
            // the merge rewrites the target predicates' clause geometry,
            // so their own ClauseTry events are excluded from comparison
            assert_equivalent_runs(
                &case.program,
                &g,
                &Route::A1(case.targets.clone()),
                &Route::A1a(case.targets.clone()),
                &case.targets,
                &format!("a1 vs a1a on {q}"),
            );
        }
    }
}

#[test]
fn fixtures_expected_answers() {
    // sanity-pin the fixtures themselves so the equivalence tests can't
    // pass vacuously on empty answer sets
    let chain = fixture(BT_CHAIN);
    let (p, c) = common::prepare(&chain, &Route::Native);
    let run = common::run_goal(&p, &goal(&chain, "chain_pick(X)"), &c);
    let xs: Vec<_> = run
        .answers
        .iter()
        .map(|a| a.value_of("X").unwrap().clone())
        .collect();
    assert_eq!(xs, vec![Term::Int(2)]);

    let funnel = fixture(BT_FUNNEL);
    let (p, c) = common::prepare(&funnel, &Route::Native);
    let run = common::run_goal(&p, &goal(&funnel, "fn_a(X, Y)"), &c);
    assert_eq!(run.answers.len(), 1);
    assert_eq!(run.answers[0].value_of("X"), Some(&Term::Int(2)));
    assert_eq!(run.answers[0].value_of("Y"), Some(&Term::Int(2)));
}

#[test]
fn two_level_jump_skips_inner_alternatives() {
    // with a1 as with native, the a1-conflict jump must skip (a1, b2)
    let program = fixture(BT_TWO_LEVEL);
    let g = goal(&program, "tl_outer(A, B)");
    for route in [Route::Native, Route::A1(targets(&[("tl_outer", 2)]))] {
        let (p, c) = common::prepare(&program, &route);
        let run = common::run_goal(&p, &g, &c);
        let inner_tries: Vec<_> = common::try_sequence(&run.events, &BTreeSet::new())
            .into_iter()
            .filter(|e| e.pred == Pred::new("tl_inner", 3))
            .map(|e| e.clause_index.unwrap())
            .collect();
        // a1: inner b1 tried once, the conflict jumps over b2;
        // a2: b1 then b2 (answer); a3: b1 (answer), then b2 on the final
        // exhaustion sweep
        assert_eq!(
            inner_tries,
            vec![1, 1, 2, 1, 2],
            "route answers: {:?}",
            run.answers.len()
        );
    }
}

#[test]
fn binarized_solver_native_equals_approach1_on_random_instances() {
    let annotated = CorpusProgram::P1Binary.load();
    let tg = targets(&[("b_cl", 4)]);
    let mut checked = 0;
    for seed in 0..40u64 {
        let num_vars = 3 + (seed % 4) as usize; // 3..=6
        let num_clauses = 2 + (seed % 9) as usize * 2; // 2..=18
        let len = 1 + (seed % 3) as usize; // 1..=3
        let inst = gen_cnf(num_vars, num_clauses, len.min(num_vars), seed);
        let (g, _) = to_query(&inst, CorpusProgram::P1Binary, annotated.var_ceiling());
        assert_equivalent_runs(
            &annotated,
            &g,
            &Route::Native,
            &Route::A1(tg.clone()),
            &BTreeSet::new(),
            &format!("p1-binary seed {seed}"),
        );
        checked += 1;
    }
    assert_eq!(checked, 40);
}

#[test]
fn binarized_solver_a1_equals_a1a_on_random_instances() {
    let annotated = CorpusProgram::P1Binary.load();
    let tg = targets(&[("b_cl", 4)]);
    for seed in 100..120u64 {
        let inst = gen_cnf(4, 8, 3, seed);
        let (g, _) = to_query(&inst, CorpusProgram::P1Binary, annotated.var_ceiling());
        assert_equivalent_runs(
            &annotated,
            &g,
            &Route::A1(tg.clone()),
            &Route::A1a(tg.clone()),
            &tg,
            &format!("p1-binary a1/a1a seed {seed}"),
        );
    }
}

/// Random fact tables over the two-level template: the equivalence must
/// hold whatever the conflict structure is, because every jump originates
/// inside its target's execution by construction.
#[test]
fn randomized_fact_tables_stay_equivalent() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
    for round in 0..60 {
        let outers = 2 + rng.gen_range(0..3); // 2..=4 outer picks
        let inners = 2 + rng.gen_range(0..2); // 2..=3 inner picks
        let mut src = String::new();
        for a in 1..=outers {
            src.push_str(&format!(
                "tl_outer(a{a}, B) :- '$my_id'(I), tl_inner(a{a}, B, I).\n"
            ));
        }
        for b in 1..=inners {
            src.push_str(&format!("tl_inner(A, b{b}, I) :- tl_check(A, b{b}, I).\n"));
        }
        src.push_str("tl_check(A, _B, I) :- always_bad(A), backjump(I).\n");
        src.push_str("tl_check(A, B, _) :- ok(A, B).\n");
        let mut any_bad = false;
        let mut any_ok = false;
        for a in 1..=outers {
            if rng.gen_bool(0.4) {
                src.push_str(&format!("always_bad(a{a}).\n"));
                any_bad = true;
            }
            for b in 1..=inners {
                if rng.gen_bool(0.4) {
                    src.push_str(&format!("ok(a{a}, b{b}).\n"));
                    any_ok = true;
                }
            }
        }
        // keep both predicates defined
        if !any_bad {
            src.push_str("always_bad(a_none).\n");
        }
        if !any_ok {
            src.push_str("ok(a_none, b_none).\n");
        }
        let program = parse_program(&src).unwrap();
        let g = goal(&program, "tl_outer(A, B)");
        let tg = targets(&[("tl_outer", 2)]);
        assert_equivalent_runs(
            &program,
            &g,
            &Route::Native,
            &Route::A1(tg.clone()),
            &BTreeSet::new(),
            &format!("random table round {round} (native/a1)\n{src}"),
        );
        assert_equivalent_runs(
            &program,
            &g,
            &Route::A1(tg.clone()),
            &Route::A1a(tg.clone()),
            &tg,
            &format!("random table round {round} (a1/a1a)\n{src}"),
        );
    }
}
