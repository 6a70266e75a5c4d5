//! Modeling language, validator, and deterministic simulator for Thinging
//! Machine (TM) models.
//!
//! A TM model is a tree of machines whose things flow through five stages —
//! create, process, release, transfer, receive — along solid flows, with
//! dashed triggers activating flows across the model. On top of the static
//! model sit events (regions of the model with an occurrence anchor), a
//! chronology (which event may follow which), and control rules (warn when
//! too many ticks pass between two events).
//!
//! The crate is organized around the pipeline:
//!
//! ```text
//! .tm text --parse--> Ast --compile--> Document { Model, Events,
//!                                                 Chronology, Controls }
//!                                       |            |
//!                              simulate | run     validate / check
//!                                       v
//!                        SimResult { tokens, trace, warnings, violations }
//! ```
//!
//! plus exporters: DOT diagrams, stage-elided simplification, and class
//! skeletons.

pub mod ast;
pub mod behavior;
pub mod compile;
pub mod diag;
pub mod expr;
pub mod lexer;
pub mod model;
pub mod parser;
pub mod printer;
pub mod sim;
pub mod transforms;

pub use behavior::{
    check_trace, enumerate_traces, read_trace, validate_event, write_trace, Chronology, Event,
    EventId, Trace, Violation,
};
pub use compile::{compile, compile_source, Document};
pub use diag::{DiagCode, Diagnostic, SourceFile, Span};
pub use expr::{Assignment, AttrExpr, CmpOp, Comparison, Predicate};
pub use model::{
    FlowId, MachineId, Model, ModelBuilder, Stage, StageId, StageKind, ThingTypeId, Token, TokenId,
    TriggerId,
};
pub use parser::{parse, parse_expression, ParsedExpr};
pub use printer::serialize;
pub use sim::{
    elapsed, parse_injection, render_report, ControlRule, Elapsed, Injection, SimConfig, SimError,
    SimResult, Simulation, Warning,
};
pub use transforms::{simplify, simplify_document, to_class, to_dot, ClassSkeleton, DotOptions};
