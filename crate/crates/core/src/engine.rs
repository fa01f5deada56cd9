//! The LD-resolution solver.
//!
//! Depth-first, leftmost selection, textual clause order. Control state is
//! a continuation (a persistent list of goal items, so choice points can
//! snapshot it in O(1)), a choice-point stack, and a catch-frame stack.
//!
//! Exception handling follows ISO semantics: the ball is copied at throw
//! time, catch/3 stays armed while execution can still backtrack into its
//! goal, and a non-unifying catcher rethrows outward. Whether a frame is
//! "armed" at a throw is read off the continuation itself: a frame is
//! eligible exactly when its end-of-goal marker is still pending there.
//!
//! In `NativeBackjump` mode two extra builtins exist: `parent_choice(Id)`
//! binds `Id` to the node of the call whose clause body is executing, and
//! `backjump(Id)` discards every choice point younger than that node and
//! fails into it, so the node's *remaining alternatives are still tried*.
//! That is the behavior catch/3 alone cannot produce, and the transform
//! module exists to approximate it.

use std::rc::Rc;

use thiserror::Error;

use crate::term::{Name, Pred, Program, Term, VarId};
use crate::trace::{EventKind, TraceEvent, TraceSink};
use crate::unify::{Bindings, TrailMark};
use crate::writer::term_to_string;

#[derive(Clone, Copy, PartialEq, Eq, Debug, Default)]
pub enum EngineMode {
    #[default]
    Plain,
    NativeBackjump,
}

#[derive(Clone, Debug)]
pub struct EngineConfig {
    pub mode: EngineMode,
    pub occurs_check: bool,
    pub max_steps: u64,
    pub max_answers: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            mode: EngineMode::Plain,
            occurs_check: false,
            max_steps: 10_000_000,
            max_answers: usize::MAX,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("unknown predicate {0}")]
    UnknownPredicate(Pred),
    #[error("reserved transformation marker {0} reached the engine; run the transformation first")]
    MarkerAtRuntime(Pred),
    #[error("parent_choice/1 called with no enclosing user predicate call")]
    ParentChoiceAtTop,
    #[error("goal is not callable: {0}")]
    NotCallable(String),
    #[error("trace sink failure: {0}")]
    Trace(String),
    #[error("term too deep or cyclic while {0}")]
    Depth(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExitStatus {
    /// The whole LD tree was traversed.
    Exhausted,
    /// Stopped after `max_answers` answers.
    AnswerLimit,
    /// Stopped after `max_steps` calls/redos.
    StepLimit,
    /// An exception reached the top. Carries the ball snapshot.
    Uncaught(Term),
    Error(EngineError),
}

impl ExitStatus {
    pub fn label(&self) -> &'static str {
        match self {
            ExitStatus::Exhausted => "exhausted",
            ExitStatus::AnswerLimit => "answer-limit",
            ExitStatus::StepLimit => "step-limit",
            ExitStatus::Uncaught(_) => "uncaught-exception",
            ExitStatus::Error(_) => "error",
        }
    }
}

/// One answer: the query variables with their values, fully dereferenced.
/// An unbound query variable maps to itself.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Answer {
    pub bindings: Vec<(Name, VarId, Term)>,
}

impl Answer {
    /// Value of the query variable with the given source name, if bound.
    pub fn value_of(&self, name: &str) -> Option<&Term> {
        self.bindings.iter().find_map(|(n, id, t)| {
            if n == name && *t != Term::Var(*id, n.clone()) {
                Some(t)
            } else {
                None
            }
        })
    }

    /// (name, value) for the variables that are actually bound.
    pub fn bound(&self) -> impl Iterator<Item = (&Name, &Term)> {
        self.bindings.iter().filter_map(|(n, id, t)| match t {
            Term::Var(v, _) if v == id => None,
            _ => Some((n, t)),
        })
    }
}

#[derive(Debug)]
pub struct SolveOutcome {
    pub answers: Vec<Answer>,
    pub status: ExitStatus,
}

/// Identifies the choice point created for one user-predicate call.
/// Strictly increasing in creation order within an engine run.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct NodeId(pub u64);

pub const NODE_FUNCTOR: &str = "$node";
pub const BTID_FUNCTOR: &str = "$bj";

impl NodeId {
    pub fn to_term(self) -> Term {
        Term::compound(NODE_FUNCTOR, vec![Term::Int(self.0 as i64)])
    }
}

// ---------------------------------------------------------------------------
// Continuation
// ---------------------------------------------------------------------------

#[derive(Clone)]
enum GoalItem {
    Call(Term),
    /// Emits Exit for a user call; also marks the call's dynamic extent
    /// (parent_choice reads the innermost pending one).
    EndCall { pred: Pred, node: NodeId },
    /// Marks the end of a catch goal; while pending, the frame is armed.
    PopCatch { index: usize, token: u64 },
    /// Commits an if-then-else once its condition has succeeded.
    CommitIte { index: usize, token: u64 },
}

type GoalList = Option<Rc<GoalNode>>;

struct GoalNode {
    item: GoalItem,
    rest: GoalList,
}

fn push_goal(list: &mut GoalList, item: GoalItem) {
    *list = Some(Rc::new(GoalNode {
        item,
        rest: list.take(),
    }));
}

fn pop_goal(list: &mut GoalList) -> Option<GoalItem> {
    let rc = list.take()?;
    match Rc::try_unwrap(rc) {
        Ok(node) => {
            *list = node.rest;
            Some(node.item)
        }
        Err(rc) => {
            *list = rc.rest.clone();
            Some(rc.item.clone())
        }
    }
}

struct GoalIter<'a>(Option<&'a GoalNode>);

impl<'a> Iterator for GoalIter<'a> {
    type Item = &'a GoalItem;

    fn next(&mut self) -> Option<&'a GoalItem> {
        let node = self.0?;
        self.0 = node.rest.as_deref();
        Some(&node.item)
    }
}

fn iter_goals(list: &GoalList) -> GoalIter<'_> {
    GoalIter(list.as_deref())
}

// ---------------------------------------------------------------------------
// Control stacks
// ---------------------------------------------------------------------------

enum CpKind<'p> {
    /// Clause alternatives of one user-predicate call. Stays on the stack
    /// until backtracking finds it exhausted, so a backjump arriving while
    /// the last clause runs behaves like a plain failure of the call.
    Clauses {
        pred: Pred,
        node: NodeId,
        call: Term,
        positions: &'p [usize],
        cursor: usize,
        entered: bool,
    },
    Disjunct {
        right: Term,
    },
    IfThenElse {
        else_goal: Term,
    },
}

struct ChoicePoint<'p> {
    kind: CpKind<'p>,
    saved_goals: GoalList,
    trail_mark: TrailMark,
    catch_height: usize,
    token: u64,
}

struct CatchFrame {
    catcher: Term,
    recovery: Term,
    trail_mark: TrailMark,
    saved_goals: GoalList,
    cp_height: usize,
    token: u64,
}

enum Flow {
    Continue,
    Backtrack,
}

type Step = Result<Flow, ExitStatus>;

// ---------------------------------------------------------------------------
// Engine
// ---------------------------------------------------------------------------

pub struct Engine<'p> {
    program: &'p Program,
    config: EngineConfig,
    bindings: Bindings,
    goals: GoalList,
    cps: Vec<ChoicePoint<'p>>,
    frames: Vec<CatchFrame>,
    answers: Vec<Answer>,
    query_vars: Vec<(VarId, Name)>,
    steps: u64,
    event_seq: u64,
    next_node: u64,
    next_btid: u64,
    next_token: u64,
}

/// Runs a query against a program, streaming events into `sink`.
pub fn solve(
    program: &Program,
    query: &Term,
    config: &EngineConfig,
    sink: &mut dyn TraceSink,
) -> SolveOutcome {
    Engine::new(program, config.clone()).run(query, sink)
}

impl<'p> Engine<'p> {
    pub fn new(program: &'p Program, config: EngineConfig) -> Self {
        Engine {
            program,
            config,
            bindings: Bindings::new(),
            goals: None,
            cps: Vec::new(),
            frames: Vec::new(),
            answers: Vec::new(),
            query_vars: Vec::new(),
            steps: 0,
            event_seq: 0,
            next_node: 0,
            next_btid: 0,
            next_token: 0,
        }
    }

    pub fn run(&mut self, query: &Term, sink: &mut dyn TraceSink) -> SolveOutcome {
        self.bindings.bump_next_var(self.program.var_ceiling());
        if let Some(m) = query.max_var_id() {
            self.bindings.bump_next_var(m + 1);
        }
        self.query_vars = query.variables();
        push_goal(&mut self.goals, GoalItem::Call(query.clone()));
        let status = self.drive(sink);
        SolveOutcome {
            answers: std::mem::take(&mut self.answers),
            status,
        }
    }

    fn drive(&mut self, sink: &mut dyn TraceSink) -> ExitStatus {
        let mut flow = Flow::Continue;
        loop {
            let r = match flow {
                Flow::Continue => self.step(sink),
                Flow::Backtrack => self.backtrack(sink),
            };
            match r {
                Ok(f) => flow = f,
                Err(status) => return status,
            }
        }
    }

    // -- events ------------------------------------------------------------

    fn emit(
        &mut self,
        sink: &mut dyn TraceSink,
        kind: EventKind,
        pred: &Pred,
        node: Option<u64>,
        clause_index: Option<usize>,
        ball: Option<String>,
    ) -> Result<(), ExitStatus> {
        self.event_seq += 1;
        let ev = TraceEvent {
            step: self.event_seq,
            kind,
            pred: pred.clone(),
            node,
            clause_index,
            ball,
        };
        sink.record(&ev)
            .map_err(|e| ExitStatus::Error(EngineError::Trace(e.to_string())))
    }

    /// Call and Redo are the resource-counted ports.
    fn count_step(&mut self) -> Result<(), ExitStatus> {
        self.steps += 1;
        if self.steps > self.config.max_steps {
            Err(ExitStatus::StepLimit)
        } else {
            Ok(())
        }
    }

    fn emit_call(&mut self, sink: &mut dyn TraceSink, pred: &Pred) -> Result<(), ExitStatus> {
        self.count_step()?;
        self.emit(sink, EventKind::Call, pred, None, None, None)
    }

    // -- main loop ----------------------------------------------------------

    fn step(&mut self, sink: &mut dyn TraceSink) -> Step {
        match pop_goal(&mut self.goals) {
            None => self.record_answer(),
            Some(GoalItem::Call(t)) => self.dispatch(t, sink),
            Some(GoalItem::EndCall { pred, node }) => {
                self.emit(sink, EventKind::Exit, &pred, Some(node.0), None, None)?;
                Ok(Flow::Continue)
            }
            Some(GoalItem::PopCatch { index, token }) => {
                self.emit(sink, EventKind::Exit, &Pred::new("catch", 3), None, None, None)?;
                // The goal left no choice points, so nothing can re-enter
                // this frame; drop it instead of waiting for a backtrack.
                if let Some(f) = self.frames.last() {
                    if index + 1 == self.frames.len()
                        && f.token == token
                        && self.cps.len() == f.cp_height
                    {
                        self.frames.pop();
                    }
                }
                Ok(Flow::Continue)
            }
            Some(GoalItem::CommitIte { index, token }) => {
                match self.cps.get(index) {
                    Some(cp) if cp.token == token => {
                        let catch_height = cp.catch_height;
                        self.frames.truncate(catch_height);
                        self.cps.truncate(index);
                    }
                    _ => debug_assert!(false, "if-then-else commit marker went stale"),
                }
                Ok(Flow::Continue)
            }
        }
    }

    fn record_answer(&mut self) -> Step {
        let mut bs = Vec::with_capacity(self.query_vars.len());
        for (id, hint) in &self.query_vars {
            let value = self
                .bindings
                .snapshot(&Term::Var(*id, hint.clone()))
                .map_err(|_| ExitStatus::Error(EngineError::Depth("recording an answer".into())))?;
            bs.push((hint.clone(), *id, value));
        }
        self.answers.push(Answer { bindings: bs });
        if self.answers.len() >= self.config.max_answers {
            Err(ExitStatus::AnswerLimit)
        } else {
            Ok(Flow::Backtrack)
        }
    }

    fn dispatch(&mut self, goal: Term, sink: &mut dyn TraceSink) -> Step {
        let g = self.bindings.resolve(&goal);
        let (name, arity) = match g.functor() {
            Some((n, a)) => (n.clone(), a),
            None => {
                return Err(ExitStatus::Error(EngineError::NotCallable(term_to_string(
                    &g,
                ))))
            }
        };
        let args = g.args();
        match (name.as_str(), arity) {
            (",", 2) => {
                let (a, b) = (args[0].clone(), args[1].clone());
                push_goal(&mut self.goals, GoalItem::Call(b));
                push_goal(&mut self.goals, GoalItem::Call(a));
                Ok(Flow::Continue)
            }
            (";", 2) => {
                let left = self.bindings.resolve(&args[0]);
                if let Term::Compound(f, ite) = &left {
                    if f == "->" && ite.len() == 2 {
                        return self.push_if_then_else(
                            ite[0].clone(),
                            ite[1].clone(),
                            args[1].clone(),
                        );
                    }
                }
                let right = args[1].clone();
                self.push_choice(CpKind::Disjunct { right });
                push_goal(&mut self.goals, GoalItem::Call(left));
                Ok(Flow::Continue)
            }
            ("->", 2) => {
                self.push_if_then_else(args[0].clone(), args[1].clone(), Term::atom("fail"))
            }
            ("true", 0) => {
                let pred = Pred::new("true", 0);
                self.emit_call(sink, &pred)?;
                self.emit(sink, EventKind::Exit, &pred, None, None, None)?;
                Ok(Flow::Continue)
            }
            ("fail", 0) => {
                let pred = Pred::new("fail", 0);
                self.emit_call(sink, &pred)?;
                self.emit(sink, EventKind::Fail, &pred, None, None, None)?;
                Ok(Flow::Backtrack)
            }
            ("=", 2) => {
                let pred = Pred::new("=", 2);
                self.emit_call(sink, &pred)?;
                let ok = self
                    .bindings
                    .unify(&args[0], &args[1], self.config.occurs_check);
                self.finish_builtin(sink, &pred, ok)
            }
            ("var", 1) | ("nonvar", 1) => {
                let pred = Pred::new(name.as_str(), 1);
                self.emit_call(sink, &pred)?;
                let is_var = matches!(self.bindings.resolve(&args[0]), Term::Var(_, _));
                self.finish_builtin(sink, &pred, is_var == (name.as_str() == "var"))
            }
            ("is", 2) => {
                let pred = Pred::new("is", 2);
                self.emit_call(sink, &pred)?;
                match self.eval_arith(&args[1], "is") {
                    Ok(v) => {
                        let ok = self
                            .bindings
                            .unify(&args[0], &Term::Int(v), self.config.occurs_check);
                        self.finish_builtin(sink, &pred, ok)
                    }
                    Err(ball) => self.throw_ball(sink, &ball),
                }
            }
            (">", 2) | ("<", 2) | (">=", 2) | ("=<", 2) => {
                let pred = Pred::new(name.as_str(), 2);
                self.emit_call(sink, &pred)?;
                let l = self.eval_arith(&args[0], name.as_str());
                let r = self.eval_arith(&args[1], name.as_str());
                match (l, r) {
                    (Ok(l), Ok(r)) => {
                        let ok = match name.as_str() {
                            ">" => l > r,
                            "<" => l < r,
                            ">=" => l >= r,
                            _ => l <= r,
                        };
                        self.finish_builtin(sink, &pred, ok)
                    }
                    (Err(ball), _) | (_, Err(ball)) => self.throw_ball(sink, &ball),
                }
            }
            ("btid", 2) => {
                let pred = Pred::new("btid", 2);
                self.emit_call(sink, &pred)?;
                let n = self.next_btid;
                self.next_btid += 1;
                // The identifier carries the argument term as written, with
                // fresh variables. A live reference would turn cyclic when
                // the guarded clause binds a variable occurring in it, and
                // a dereferencing copy would inline earlier identifiers
                // into later ones; matching is by the counter either way.
                let frozen = self.bindings.copy_syntactic(&args[0]);
                let id = Term::compound(BTID_FUNCTOR, vec![Term::Int(n as i64), frozen]);
                let ok = self.bindings.unify(&args[1], &id, self.config.occurs_check);
                self.finish_builtin(sink, &pred, ok)
            }
            ("sort_desc", 2) => {
                let pred = Pred::new("sort_desc", 2);
                self.emit_call(sink, &pred)?;
                match self.int_list(&args[0]) {
                    Ok(mut ints) => {
                        ints.sort_unstable_by(|a, b| b.cmp(a));
                        let sorted = Term::list(ints.into_iter().map(Term::Int).collect(), Term::nil());
                        let ok = self
                            .bindings
                            .unify(&args[1], &sorted, self.config.occurs_check);
                        self.finish_builtin(sink, &pred, ok)
                    }
                    Err(ball) => self.throw_ball(sink, &ball),
                }
            }
            ("throw", 1) => {
                let pred = Pred::new("throw", 1);
                self.emit_call(sink, &pred)?;
                self.throw_ball(sink, &args[0].clone())
            }
            ("catch", 3) => {
                let pred = Pred::new("catch", 3);
                self.emit_call(sink, &pred)?;
                let token = self.fresh_token();
                self.frames.push(CatchFrame {
                    catcher: args[1].clone(),
                    recovery: args[2].clone(),
                    trail_mark: self.bindings.mark(),
                    saved_goals: self.goals.clone(),
                    cp_height: self.cps.len(),
                    token,
                });
                let index = self.frames.len() - 1;
                push_goal(&mut self.goals, GoalItem::PopCatch { index, token });
                push_goal(&mut self.goals, GoalItem::Call(args[0].clone()));
                Ok(Flow::Continue)
            }
            ("backjump", 1) if self.config.mode == EngineMode::NativeBackjump => {
                let pred = Pred::new("backjump", 1);
                self.emit_call(sink, &pred)?;
                self.do_backjump(sink, &args[0].clone())
            }
            ("parent_choice", 1) if self.config.mode == EngineMode::NativeBackjump => {
                let pred = Pred::new("parent_choice", 1);
                self.emit_call(sink, &pred)?;
                let node = iter_goals(&self.goals).find_map(|item| match item {
                    GoalItem::EndCall { node, .. } => Some(*node),
                    _ => None,
                });
                match node {
                    Some(node) => {
                        let ok = self.bindings.unify(
                            &args[0],
                            &node.to_term(),
                            self.config.occurs_check,
                        );
                        self.finish_builtin(sink, &pred, ok)
                    }
                    None => Err(ExitStatus::Error(EngineError::ParentChoiceAtTop)),
                }
            }
            _ if name.as_str().starts_with('$') => Err(ExitStatus::Error(
                EngineError::MarkerAtRuntime(Pred::new(name.as_str(), arity)),
            )),
            _ => self.user_call(g, sink),
        }
    }

    fn finish_builtin(&mut self, sink: &mut dyn TraceSink, pred: &Pred, ok: bool) -> Step {
        if ok {
            self.emit(sink, EventKind::Exit, pred, None, None, None)?;
            Ok(Flow::Continue)
        } else {
            self.emit(sink, EventKind::Fail, pred, None, None, None)?;
            Ok(Flow::Backtrack)
        }
    }

    fn fresh_token(&mut self) -> u64 {
        self.next_token += 1;
        self.next_token
    }

    fn push_choice(&mut self, kind: CpKind<'p>) {
        let token = self.fresh_token();
        self.cps.push(ChoicePoint {
            kind,
            saved_goals: self.goals.clone(),
            trail_mark: self.bindings.mark(),
            catch_height: self.frames.len(),
            token,
        });
    }

    fn push_if_then_else(&mut self, cond: Term, then: Term, els: Term) -> Step {
        self.push_choice(CpKind::IfThenElse { else_goal: els });
        let index = self.cps.len() - 1;
        let token = self.cps[index].token;
        push_goal(&mut self.goals, GoalItem::Call(then));
        push_goal(&mut self.goals, GoalItem::CommitIte { index, token });
        push_goal(&mut self.goals, GoalItem::Call(cond));
        Ok(Flow::Continue)
    }

    fn user_call(&mut self, goal: Term, sink: &mut dyn TraceSink) -> Step {
        let pred = Pred::of_term(&goal).expect("dispatch only passes callable terms");
        let Some(positions) = self.program.clauses_of(&pred) else {
            self.count_step()?;
            self.emit(sink, EventKind::Call, &pred, None, None, None)?;
            return Err(ExitStatus::Error(EngineError::UnknownPredicate(pred)));
        };
        let node = NodeId(self.next_node);
        self.next_node += 1;
        self.count_step()?;
        self.emit(sink, EventKind::Call, &pred, Some(node.0), None, None)?;
        self.push_choice(CpKind::Clauses {
            pred,
            node,
            call: goal,
            positions,
            cursor: 0,
            entered: false,
        });
        // Enter the fresh choice point through the normal backtrack path.
        Ok(Flow::Backtrack)
    }

    // -- backtracking --------------------------------------------------------

    fn backtrack(&mut self, sink: &mut dyn TraceSink) -> Step {
        loop {
            let cp = match self.cps.pop() {
                Some(cp) => cp,
                None => return Err(ExitStatus::Exhausted),
            };
            let ChoicePoint {
                kind,
                saved_goals,
                trail_mark,
                catch_height,
                token,
            } = cp;
            self.bindings.undo_to(trail_mark);
            self.frames.truncate(catch_height);
            self.goals = saved_goals.clone();
            match kind {
                CpKind::Disjunct { right } => {
                    push_goal(&mut self.goals, GoalItem::Call(right));
                    return Ok(Flow::Continue);
                }
                CpKind::IfThenElse { else_goal } => {
                    push_goal(&mut self.goals, GoalItem::Call(else_goal));
                    return Ok(Flow::Continue);
                }
                CpKind::Clauses {
                    pred,
                    node,
                    call,
                    positions,
                    mut cursor,
                    mut entered,
                } => {
                    if cursor >= positions.len() {
                        self.emit(sink, EventKind::Fail, &pred, Some(node.0), None, None)?;
                        continue;
                    }
                    if entered {
                        self.count_step()?;
                        self.emit(sink, EventKind::Redo, &pred, Some(node.0), None, None)?;
                    }
                    while cursor < positions.len() {
                        let pos = positions[cursor];
                        cursor += 1;
                        self.emit(
                            sink,
                            EventKind::ClauseTry,
                            &pred,
                            Some(node.0),
                            Some(cursor),
                            None,
                        )?;
                        let renamed = self.bindings.rename_clause(self.program.clause(pos));
                        if self
                            .bindings
                            .unify(&call, &renamed.head, self.config.occurs_check)
                        {
                            entered = true;
                            push_goal(
                                &mut self.goals,
                                GoalItem::EndCall {
                                    pred: pred.clone(),
                                    node,
                                },
                            );
                            push_goal(&mut self.goals, GoalItem::Call(renamed.body));
                            self.cps.push(ChoicePoint {
                                kind: CpKind::Clauses {
                                    pred,
                                    node,
                                    call,
                                    positions,
                                    cursor,
                                    entered,
                                },
                                saved_goals,
                                trail_mark,
                                catch_height,
                                token,
                            });
                            return Ok(Flow::Continue);
                        }
                    }
                    self.emit(sink, EventKind::Fail, &pred, Some(node.0), None, None)?;
                    continue;
                }
            }
        }
    }

    // -- exceptions ----------------------------------------------------------

    fn throw_ball(&mut self, sink: &mut dyn TraceSink, ball: &Term) -> Step {
        let resolved = self.bindings.resolve(ball);
        if matches!(resolved, Term::Var(_, _)) {
            // Unbound ball: a system error that no catcher sees.
            let b = system_ball(Term::atom("instantiation_error"), "throw");
            self.emit(
                sink,
                EventKind::Throw,
                &Pred::new("throw", 1),
                None,
                None,
                Some(term_to_string(&b)),
            )?;
            return Err(ExitStatus::Uncaught(b));
        }
        let snapshot = self
            .bindings
            .copy_fresh(&resolved)
            .map_err(|_| ExitStatus::Error(EngineError::Depth("copying a thrown ball".into())))?;
        let text = term_to_string(&snapshot);
        self.emit(
            sink,
            EventKind::Throw,
            &Pred::new("throw", 1),
            None,
            None,
            Some(text.clone()),
        )?;
        // Frames still armed are exactly those whose end marker is pending
        // in the current continuation, innermost first.
        let armed: Vec<(usize, u64)> = iter_goals(&self.goals)
            .filter_map(|item| match item {
                GoalItem::PopCatch { index, token } => Some((*index, *token)),
                _ => None,
            })
            .collect();
        for (index, token) in armed {
            let frame = match self.frames.get(index) {
                Some(f) if f.token == token => f,
                _ => {
                    debug_assert!(false, "catch marker went stale");
                    continue;
                }
            };
            let catcher = frame.catcher.clone();
            let recovery = frame.recovery.clone();
            let frame_goals = frame.saved_goals.clone();
            let trail_mark = frame.trail_mark;
            let cp_height = frame.cp_height;
            // Undo to the frame and discard the goal's control state,
            // whether or not the catcher matches (a miss rethrows outward).
            self.bindings.undo_to(trail_mark);
            self.cps.truncate(cp_height);
            self.frames.truncate(index);
            if self.bindings.unify(&snapshot, &catcher, self.config.occurs_check) {
                self.emit(
                    sink,
                    EventKind::Catch,
                    &Pred::new("catch", 3),
                    None,
                    None,
                    Some(text),
                )?;
                debug_assert_eq!(self.frames.len(), index);
                self.goals = frame_goals;
                push_goal(&mut self.goals, GoalItem::Call(recovery));
                return Ok(Flow::Continue);
            }
        }
        Err(ExitStatus::Uncaught(snapshot))
    }

    // -- native backjumping ----------------------------------------------------

    fn do_backjump(&mut self, sink: &mut dyn TraceSink, id: &Term) -> Step {
        let idt = self.bindings.resolve(id);
        let target = match &idt {
            Term::Compound(f, args) if f == NODE_FUNCTOR && args.len() == 1 => {
                match self.bindings.resolve(&args[0]) {
                    Term::Int(k) if k >= 0 => Some(k as u64),
                    _ => None,
                }
            }
            _ => None,
        };
        let Some(target) = target else {
            let culprit = self.bindings.snapshot(&idt).unwrap_or(Term::atom("?"));
            return Err(ExitStatus::Uncaught(system_ball(
                Term::compound("type_error", vec![Term::atom("backjump_target"), culprit]),
                "backjump",
            )));
        };
        let found = self.cps.iter().rposition(|cp| {
            matches!(&cp.kind, CpKind::Clauses { node, .. } if node.0 == target)
        });
        let Some(idx) = found else {
            return Err(ExitStatus::Uncaught(system_ball(
                Term::compound("stale_backjump_target", vec![idt]),
                "backjump",
            )));
        };
        let pred = match &self.cps[idx].kind {
            CpKind::Clauses { pred, .. } => pred.clone(),
            _ => unreachable!(),
        };
        self.emit(sink, EventKind::Backjump, &pred, Some(target), None, None)?;
        let catch_height = self.cps[idx].catch_height;
        self.frames.truncate(catch_height);
        self.cps.truncate(idx + 1);
        // Fail *into* the target: its next alternative is tried next.
        Ok(Flow::Backtrack)
    }

    // -- arithmetic ------------------------------------------------------------

    fn eval_arith(&self, t: &Term, ctx: &str) -> Result<i64, Term> {
        match self.bindings.resolve(t) {
            Term::Int(v) => Ok(v),
            Term::Var(_, _) => Err(system_ball(Term::atom("instantiation_error"), ctx)),
            Term::Compound(f, args) if args.len() == 2 => {
                let l = self.eval_arith(&args[0], ctx)?;
                let r = self.eval_arith(&args[1], ctx)?;
                let v = match f.as_str() {
                    "+" => l.checked_add(r),
                    "-" => l.checked_sub(r),
                    "*" => l.checked_mul(r),
                    "//" => {
                        if r == 0 {
                            return Err(system_ball(
                                Term::compound(
                                    "evaluation_error",
                                    vec![Term::atom("zero_divisor")],
                                ),
                                ctx,
                            ));
                        }
                        l.checked_div(r)
                    }
                    _ => {
                        return Err(type_error_ball(
                            "evaluable",
                            Term::Compound(f, args.clone()),
                            ctx,
                        ))
                    }
                };
                v.ok_or_else(|| {
                    system_ball(
                        Term::compound("evaluation_error", vec![Term::atom("int_overflow")]),
                        ctx,
                    )
                })
            }
            other => Err(type_error_ball("evaluable", other, ctx)),
        }
    }

    fn int_list(&self, t: &Term) -> Result<Vec<i64>, Term> {
        let mut out = Vec::new();
        let mut cur = self.bindings.resolve(t);
        loop {
            match cur {
                Term::Atom(ref n) if n == "[]" => return Ok(out),
                Term::Compound(ref f, ref args) if f == "." && args.len() == 2 => {
                    match self.bindings.resolve(&args[0]) {
                        Term::Int(v) => out.push(v),
                        other => return Err(type_error_ball("integer", other, "sort_desc")),
                    }
                    cur = self.bindings.resolve(&args[1]);
                }
                other => return Err(type_error_ball("list", other, "sort_desc")),
            }
        }
    }
}

fn system_ball(kind: Term, ctx: &str) -> Term {
    Term::compound("error", vec![kind, Term::atom(ctx)])
}

fn type_error_ball(expected: &str, culprit: Term, ctx: &str) -> Term {
    system_ball(
        Term::compound("type_error", vec![Term::atom(expected), culprit]),
        ctx,
    )
}
