//! The perception-action program language: grammar, canonical printer,
//! interpreter, and planners.
//!
//! Programs are small line-oriented scripts over the primitive API, e.g.
//!
//! ```text
//! let ps = find("mug")
//! answer argbest(min, p in ps, do(focus_on_patch(p), measure_distance(p)))
//! ```
//!
//! [`parser::parse`] enforces the static rules (known primitives, arity,
//! scoping, answer coverage), [`printer::print_program`] lays out the
//! canonical text, and [`interp::interpret`] runs a program against any
//! [`crate::rig::PrimitiveHost`].

pub mod ast;
pub mod fuzz;
pub mod interp;
pub mod parser;
pub mod plan;
pub mod printer;

pub use ast::{binding, has_effects, CmpOp, Direction, Expr, PrimitiveBinding, Program, Stmt, REGISTRY};
pub use interp::{interpret, EpisodeTrace, InterpConfig, Outcome, RuntimeError, TraceEntry, Value};
pub use parser::{parse, ParseError};
pub use plan::{
    api_documentation, ordinal_word, plan_external, plan_template, PlanError, PlannerClientConfig,
    Query, QueryFamily, ORDINAL_WORDS,
};
pub use printer::print_program;
