//! A small definite-clause logic programming engine with ISO-style
//! exception handling, a native backjumping primitive, source-to-source
//! transformations that emulate backjumping with catch/throw, structured
//! trace recording for equivalence checks, and a SAT-solving lab that
//! exercises all of it against an independent oracle.

pub mod engine;
pub mod satlab;
pub mod transform;
pub mod parser;
pub mod term;
pub mod trace;
pub mod unify;
pub mod writer;

pub use engine::{solve, Answer, Engine, EngineConfig, EngineError, EngineMode, ExitStatus, SolveOutcome};
pub use parser::{parse_program, parse_term, parse_term_from, SyntaxError};
pub use term::{alpha_eq, alpha_eq_clause, alpha_eq_program, Clause, Name, Pred, Program, Term, VarId};
pub use writer::{pretty_program, term_to_string, write_term};
