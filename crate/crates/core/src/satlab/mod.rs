//! The SAT lab: the solver corpus as executable programs, instance
//! generation and DIMACS ingestion, a brute-force oracle, and the
//! node-count benchmark.
//!
//! The oracle shares no code with the engine: it enumerates assignments
//! over a plain bit representation and is deliberately exponential.

use std::collections::BTreeSet;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::engine::{solve, Answer, EngineConfig, EngineMode, ExitStatus};
use crate::parser::parse_program;
use crate::term::{Pred, Program, Term, VarId};
use crate::trace::{CountingSink, TraceSink, TraceStats};
use crate::transform::{approach1, lower_native};

/// A CNF instance: clauses of (polarity, variable) literals with variables
/// numbered 1..=num_vars. Polarity `true` is a positive literal.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CnfInstance {
    pub num_vars: usize,
    pub clauses: Vec<Vec<(bool, usize)>>,
}

impl CnfInstance {
    pub fn new(num_vars: usize, clauses: Vec<Vec<(bool, usize)>>) -> Self {
        debug_assert!(clauses
            .iter()
            .flatten()
            .all(|(_, v)| (1..=num_vars).contains(v)));
        CnfInstance { num_vars, clauses }
    }
}

/// The formula (x ∨ ¬y ∨ z) ∧ (¬x ∨ v) used throughout the examples,
/// with x,y,z,v numbered 1..4.
pub fn example_formula() -> CnfInstance {
    CnfInstance::new(
        4,
        vec![
            vec![(true, 1), (false, 2), (true, 3)],
            vec![(false, 1), (true, 4)],
        ],
    )
}

// ---------------------------------------------------------------------------
// Corpus
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum CorpusProgram {
    /// The naive solver.
    P1,
    /// The naive solver with variable numbering.
    P2,
    /// P2 with approximate backjumping via catch/throw.
    P3,
    /// Binarized P1 with backjump annotations (derived engineering, not a
    /// published listing; it gives Approach 1 a realistic exercise).
    P1Binary,
}

pub const CORPUS: [CorpusProgram; 4] = [
    CorpusProgram::P1,
    CorpusProgram::P2,
    CorpusProgram::P3,
    CorpusProgram::P1Binary,
];

impl CorpusProgram {
    pub fn name(self) -> &'static str {
        match self {
            CorpusProgram::P1 => "p1",
            CorpusProgram::P2 => "p2",
            CorpusProgram::P3 => "p3",
            CorpusProgram::P1Binary => "p1b",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Some(match s {
            "p1" => CorpusProgram::P1,
            "p2" => CorpusProgram::P2,
            "p3" => CorpusProgram::P3,
            "p1b" | "p1_binary" | "p1-binary" => CorpusProgram::P1Binary,
            _ => return None,
        })
    }

    pub fn source(self) -> &'static str {
        match self {
            CorpusProgram::P1 => include_str!("assets/p1.pl"),
            CorpusProgram::P2 => include_str!("assets/p2.pl"),
            CorpusProgram::P3 => include_str!("assets/p3.pl"),
            CorpusProgram::P1Binary => include_str!("assets/p1_binary.pl"),
        }
    }

    /// P3's clause set with the catch in `'$catch_rest'` marker form; the
    /// Approach 2 input that reconstructs P3.
    pub fn p2_marked_source() -> &'static str {
        include_str!("assets/p2_marked.pl")
    }

    pub fn load(self) -> Program {
        parse_program(self.source()).expect("corpus program parses")
    }

    /// The program as the given engine mode can run it: the annotated
    /// binary solver is lowered to native primitives or put through
    /// Approach 1; the plain corpus programs run as they are.
    pub fn runnable(self, mode: EngineMode) -> Program {
        let p = self.load();
        match (self, mode) {
            (CorpusProgram::P1Binary, EngineMode::NativeBackjump) => {
                lower_native(&p).expect("corpus asset lowers").program
            }
            (CorpusProgram::P1Binary, EngineMode::Plain) => {
                let targets: BTreeSet<Pred> = [Pred::new("b_cl", 4)].into();
                approach1(&p, &targets).expect("corpus asset transforms").program
            }
            _ => p,
        }
    }

    fn entry_goal(self, formula: Term) -> Term {
        match self {
            CorpusProgram::P1 => Term::compound("sat_cnf", vec![formula]),
            CorpusProgram::P2 | CorpusProgram::P3 => {
                Term::compound("sat_cnf", vec![formula, Term::Int(0)])
            }
            CorpusProgram::P1Binary => Term::compound("b_sat", vec![formula]),
        }
    }
}

/// Builds the query goal for an instance: the pair-list formula with one
/// fresh variable per propositional variable (ids from `first_var_id`).
/// Returns the goal and the variable terms indexed by propositional
/// variable (position 0 is variable 1).
pub fn to_query(c: &CnfInstance, program: CorpusProgram, first_var_id: u64) -> (Term, Vec<Term>) {
    let vars: Vec<Term> = (1..=c.num_vars)
        .map(|i| Term::var(VarId(first_var_id + (i as u64) - 1), &format!("V{i}")))
        .collect();
    let clauses: Vec<Term> = c
        .clauses
        .iter()
        .map(|cl| {
            let lits: Vec<Term> = cl
                .iter()
                .map(|(pol, v)| {
                    Term::pair(
                        Term::atom(if *pol { "true" } else { "false" }),
                        vars[v - 1].clone(),
                    )
                })
                .collect();
            Term::list(lits, Term::nil())
        })
        .collect();
    let formula = Term::list(clauses, Term::nil());
    (program.entry_goal(formula), vars)
}

// ---------------------------------------------------------------------------
// Brute-force oracle
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BruteResult {
    /// First model in lexicographic order (true < false per variable,
    /// most significant variable first). Indexed by variable - 1.
    Sat(Vec<bool>),
    Unsat,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OracleError {
    #[error("oracle refuses instances with more than 26 variables (got {0})")]
    TooManyVariables(usize),
}

/// Exhaustively tries all 2^num_vars assignments. Independent of the
/// engine by construction.
pub fn brute_force(c: &CnfInstance) -> Result<BruteResult, OracleError> {
    let n = c.num_vars;
    if n > 26 {
        return Err(OracleError::TooManyVariables(n));
    }
    'next: for k in 0u64..(1u64 << n) {
        // bit 0 means true; variable 1 sits at the most significant bit,
        // so k counts assignments in lexicographic order with true first
        let value = |var: usize| (k >> (n - var)) & 1 == 0;
        for clause in &c.clauses {
            if !clause.iter().any(|(pol, v)| value(*v) == *pol) {
                continue 'next;
            }
        }
        return Ok(BruteResult::Sat((1..=n).map(value).collect()));
    }
    Ok(BruteResult::Unsat)
}

// ---------------------------------------------------------------------------
// Instance generation and DIMACS
// ---------------------------------------------------------------------------

/// Uniform random instance: each clause draws `clause_len` distinct
/// variables and random polarities. Deterministic in the seed.
pub fn gen_cnf(num_vars: usize, num_clauses: usize, clause_len: usize, seed: u64) -> CnfInstance {
    assert!(clause_len <= num_vars, "clause_len must be <= num_vars");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut clauses = Vec::with_capacity(num_clauses);
    for _ in 0..num_clauses {
        let mut vars: Vec<usize> = Vec::with_capacity(clause_len);
        while vars.len() < clause_len {
            let v = rng.gen_range(1..=num_vars);
            if !vars.contains(&v) {
                vars.push(v);
            }
        }
        clauses.push(vars.into_iter().map(|v| (rng.gen_bool(0.5), v)).collect());
    }
    CnfInstance::new(num_vars, clauses)
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DimacsError {
    #[error("line {0}: malformed header (expected `p cnf VARS CLAUSES`)")]
    BadHeader(usize),
    #[error("line {0}: literal {1} out of range")]
    OutOfRange(usize, i64),
    #[error("line {0}: unterminated clause (missing 0)")]
    MissingTerminator(usize),
    #[error("line {0}: unexpected token `{1}`")]
    BadToken(usize, String),
    #[error("missing `p cnf` header")]
    NoHeader,
}

pub fn dimacs_import(text: &str) -> Result<CnfInstance, DimacsError> {
    let mut num_vars: Option<usize> = None;
    let mut clauses: Vec<Vec<(bool, usize)>> = Vec::new();
    let mut current: Vec<(bool, usize)> = Vec::new();
    let mut last_line = 0usize;
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        last_line = lineno;
        let line = line.trim();
        if line.is_empty() || line.starts_with('c') || line.starts_with('%') {
            continue;
        }
        if line.starts_with('p') {
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 4 || parts[0] != "p" || parts[1] != "cnf" {
                return Err(DimacsError::BadHeader(lineno));
            }
            let v: usize = parts[2].parse().map_err(|_| DimacsError::BadHeader(lineno))?;
            let _c: usize = parts[3].parse().map_err(|_| DimacsError::BadHeader(lineno))?;
            num_vars = Some(v);
            continue;
        }
        let Some(nv) = num_vars else {
            return Err(DimacsError::NoHeader);
        };
        for tok in line.split_whitespace() {
            let lit: i64 = tok
                .parse()
                .map_err(|_| DimacsError::BadToken(lineno, tok.to_string()))?;
            if lit == 0 {
                clauses.push(std::mem::take(&mut current));
            } else {
                let v = lit.unsigned_abs() as usize;
                if v > nv {
                    return Err(DimacsError::OutOfRange(lineno, lit));
                }
                current.push((lit > 0, v));
            }
        }
    }
    if num_vars.is_none() {
        return Err(DimacsError::NoHeader);
    }
    if !current.is_empty() {
        return Err(DimacsError::MissingTerminator(last_line));
    }
    Ok(CnfInstance::new(num_vars.unwrap(), clauses))
}

pub fn dimacs_export(c: &CnfInstance) -> String {
    let mut out = format!("p cnf {} {}\n", c.num_vars, c.clauses.len());
    for clause in &c.clauses {
        for (pol, v) in clause {
            let lit = *v as i64 * if *pol { 1 } else { -1 };
            out.push_str(&lit.to_string());
            out.push(' ');
        }
        out.push_str("0\n");
    }
    out
}

/// Every instance over `num_vars` variables whose clauses are drawn,
/// without repetition, from all clauses of length 1..=max_len with
/// distinct variables; instance sizes 0..=max_clauses.
pub fn enumerate_small_instances(
    num_vars: usize,
    max_clauses: usize,
    max_len: usize,
) -> Vec<CnfInstance> {
    let mut universe: Vec<Vec<(bool, usize)>> = Vec::new();
    let vars: Vec<usize> = (1..=num_vars).collect();
    for len in 1..=max_len.min(num_vars) {
        for combo in combinations(&vars, len) {
            for signs in 0..(1u32 << len) {
                let clause: Vec<(bool, usize)> = combo
                    .iter()
                    .enumerate()
                    .map(|(i, v)| ((signs >> i) & 1 == 0, *v))
                    .collect();
                universe.push(clause);
            }
        }
    }
    let idx: Vec<usize> = (0..universe.len()).collect();
    let mut out = Vec::new();
    for k in 0..=max_clauses {
        for combo in combinations(&idx, k) {
            out.push(CnfInstance::new(
                num_vars,
                combo.iter().map(|&i| universe[i].clone()).collect(),
            ));
        }
    }
    out
}

fn combinations<T: Clone>(items: &[T], k: usize) -> Vec<Vec<T>> {
    let mut out = Vec::new();
    let mut cur: Vec<T> = Vec::with_capacity(k);
    fn rec<T: Clone>(items: &[T], k: usize, start: usize, cur: &mut Vec<T>, out: &mut Vec<Vec<T>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        let need = k - cur.len();
        for i in start..=items.len().saturating_sub(need) {
            cur.push(items[i].clone());
            rec(items, k, i + 1, cur, out);
            cur.pop();
        }
    }
    if k <= items.len() {
        rec(items, k, 0, &mut cur, &mut out);
    }
    out
}

// ---------------------------------------------------------------------------
// Running instances and validating models
// ---------------------------------------------------------------------------

#[derive(Debug)]
pub struct SatRun {
    /// None when the run hit a limit or error before deciding.
    pub sat: Option<bool>,
    pub status: ExitStatus,
    pub stats: TraceStats,
    /// On SAT: the value snapshot per propositional variable (the
    /// variable itself when unbound).
    pub values: Option<Vec<Term>>,
}

impl SatRun {
    pub fn steps(&self) -> u64 {
        self.stats.calls + self.stats.redos
    }
}

/// Runs one instance through a prepared program (see
/// [`CorpusProgram::runnable`]), stopping at the first answer.
pub fn solve_instance(
    which: CorpusProgram,
    prepared: &Program,
    instance: &CnfInstance,
    config: &EngineConfig,
    sink: Option<&mut dyn TraceSink>,
) -> SatRun {
    let (goal, vars) = to_query(instance, which, prepared.var_ceiling());
    let config = EngineConfig {
        max_answers: 1,
        ..config.clone()
    };
    let mut counter = CountingSink::default();
    let outcome = match sink {
        Some(s) => {
            let mut tee = crate::trace::Tee(s, &mut counter);
            solve(prepared, &goal, &config, &mut tee)
        }
        None => solve(prepared, &goal, &config, &mut counter),
    };
    let (sat, values) = match (&outcome.status, outcome.answers.first()) {
        (_, Some(answer)) => (Some(true), Some(answer_values(answer, &vars))),
        (ExitStatus::Exhausted, None) => (Some(false), None),
        _ => (None, None),
    };
    SatRun {
        sat,
        status: outcome.status,
        stats: counter.stats,
        values,
    }
}

fn answer_values(answer: &Answer, vars: &[Term]) -> Vec<Term> {
    vars.iter()
        .map(|v| {
            let Term::Var(id, _) = v else { unreachable!() };
            answer
                .bindings
                .iter()
                .find(|(_, vid, _)| vid == id)
                .map(|(_, _, t)| t.clone())
                .unwrap_or_else(|| v.clone())
        })
        .collect()
}

/// Per-variable assignment extracted from a value snapshot, or None for
/// an unbound variable. Accepts the three corpus value shapes: a bare
/// polarity atom (P1), `(N, Pol)` (P2/P3), and `(N, Id, Pol)` (binary).
pub fn assignment_of(values: &[Term]) -> Result<Vec<Option<bool>>, String> {
    values.iter().map(|t| value_polarity(t)).collect()
}

fn value_polarity(t: &Term) -> Result<Option<bool>, String> {
    fn pol_atom(t: &Term) -> Option<bool> {
        match t {
            Term::Atom(n) if n == "true" => Some(true),
            Term::Atom(n) if n == "false" => Some(false),
            _ => None,
        }
    }
    match t {
        Term::Var(_, _) => Ok(None),
        Term::Atom(_) => pol_atom(t)
            .map(Some)
            .ok_or_else(|| format!("unexpected value {t:?}")),
        Term::Compound(f, args) if f == "," && args.len() == 2 => {
            // (N, Pol) or (N, (Id, Pol))
            match &args[1] {
                Term::Compound(g, inner) if g == "," && inner.len() == 2 => pol_atom(&inner[1])
                    .map(Some)
                    .ok_or_else(|| format!("unexpected value {t:?}")),
                other => pol_atom(other)
                    .map(Some)
                    .ok_or_else(|| format!("unexpected value {t:?}")),
            }
        }
        _ => Err(format!("unexpected value {t:?}")),
    }
}

/// Numbered-value model check for P2/P3-style successes: every clause
/// contains a literal whose variable got its own polarity, and the
/// assignment numbers are exactly 1..k in assignment order with no gaps.
pub fn check_numbered_model(instance: &CnfInstance, values: &[Term]) -> Result<(), String> {
    let assignment = assignment_of(values)?;
    check_model(instance, &assignment)?;
    let mut numbers: Vec<i64> = Vec::new();
    for t in values {
        match t {
            Term::Var(_, _) => {}
            Term::Compound(f, args) if f == "," && args.len() == 2 => match &args[0] {
                Term::Int(n) => numbers.push(*n),
                other => return Err(format!("number slot holds {other:?}")),
            },
            other => return Err(format!("unexpected value {other:?}")),
        }
    }
    numbers.sort_unstable();
    for (i, n) in numbers.iter().enumerate() {
        if *n != (i as i64) + 1 {
            return Err(format!("assignment numbers not gap-free 1..k: {numbers:?}"));
        }
    }
    Ok(())
}

/// Plain model check: every clause has a literal satisfied by the
/// (partial) assignment.
pub fn check_model(instance: &CnfInstance, assignment: &[Option<bool>]) -> Result<(), String> {
    for (i, clause) in instance.clauses.iter().enumerate() {
        let ok = clause
            .iter()
            .any(|(pol, v)| assignment[*v - 1] == Some(*pol));
        if !ok {
            return Err(format!("clause {i} not satisfied"));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Benchmark
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct BenchRow {
    pub instance: String,
    pub program: String,
    /// "true", "false", or a limit/error label.
    pub sat: String,
    pub clause_tries: u64,
    pub backjumps: u64,
    pub steps: u64,
    pub micros: u128,
}

pub const BENCH_CSV_HEADER: &str = "instance,program,sat,clause_tries,backjumps,steps,micros";

impl BenchRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.instance,
            self.program,
            self.sat,
            self.clause_tries,
            self.backjumps,
            self.steps,
            self.micros
        )
    }
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("oracle disagreement on {instance} with {program}: engine says {engine}, oracle says {oracle}")]
    OracleDisagreement {
        instance: String,
        program: String,
        engine: bool,
        oracle: bool,
    },
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

/// Runs each instance through each program, cross-checking satisfiability
/// against the oracle when feasible. Limit-exceeded rows are flagged in
/// the `sat` column, not dropped. Rows are ordered by instance then
/// program.
pub fn bench(
    instances: &[(String, CnfInstance)],
    programs: &[CorpusProgram],
    config: &EngineConfig,
    use_oracle: bool,
) -> Result<Vec<BenchRow>, BenchError> {
    let prepared: Vec<(CorpusProgram, Program)> = programs
        .iter()
        .map(|p| (*p, p.runnable(config.mode)))
        .collect();
    let mut rows = Vec::with_capacity(instances.len() * programs.len());
    for (id, instance) in instances {
        let oracle = if use_oracle && instance.num_vars <= 26 {
            match brute_force(instance)? {
                BruteResult::Sat(_) => Some(true),
                BruteResult::Unsat => Some(false),
            }
        } else {
            None
        };
        for (which, program) in &prepared {
            let start = Instant::now();
            let run = solve_instance(*which, program, instance, config, None);
            let micros = start.elapsed().as_micros();
            if let (Some(engine), Some(oracle)) = (run.sat, oracle) {
                if engine != oracle {
                    return Err(BenchError::OracleDisagreement {
                        instance: id.clone(),
                        program: which.name().to_string(),
                        engine,
                        oracle,
                    });
                }
            }
            rows.push(BenchRow {
                instance: id.clone(),
                program: which.name().to_string(),
                sat: match run.sat {
                    Some(true) => "true".into(),
                    Some(false) => "false".into(),
                    None => run.status.label().into(),
                },
                clause_tries: run.stats.clause_tries,
                backjumps: run.stats.backjumps,
                steps: run.steps(),
                micros,
            });
        }
    }
    Ok(rows)
}
