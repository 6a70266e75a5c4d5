//! Syntax tree for `.tm` files.
//!
//! Every node keeps the span it was parsed from; spans are ignored by
//! equality so that `parse(serialize(ast)) == ast` is a structural check.

use crate::diag::Span;
use crate::expr::{Assignment, Predicate};
use crate::model::StageKind;

/// `Machine.kind[label]` as written, unresolved.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StageRef {
    pub machine: String,
    pub kind: StageKind,
    pub label: Option<String>,
    pub span: Span,
}

impl std::fmt::Display for StageRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.label {
            Some(l) => write!(f, "{}.{}[{}]", self.machine, self.kind, l),
            None => write!(f, "{}.{}", self.machine, self.kind),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AttrDeclAst {
    pub name: String,
    pub nonnegative: bool,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ThingDecl {
    pub name: String,
    pub attrs: Vec<AttrDeclAst>,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StageDecl {
    pub kind: StageKind,
    pub label: Option<String>,
    pub sink: bool,
    pub guard: Option<Predicate>,
    pub actions: Vec<Assignment>,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FlowDecl {
    pub name: String,
    pub src: StageRef,
    pub dst: StageRef,
    pub guard: Option<Predicate>,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TriggerDecl {
    pub name: String,
    pub src: StageRef,
    pub dst: StageRef,
    pub span: Span,
}

/// Body item of a `machine` block, in declaration order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum MachineItem {
    Stage(StageDecl),
    Machine(MachineDecl),
    Thing(ThingDecl),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MachineDecl {
    pub name: String,
    pub items: Vec<MachineItem>,
    pub span: Span,
}

/// Body item of the top-level `model` block, in declaration order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ModelItem {
    Machine(MachineDecl),
    Thing(ThingDecl),
    Flow(FlowDecl),
    Trigger(TriggerDecl),
}

/// Region member: a stage reference or the name of a flow/trigger.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RegionItem {
    Stage(StageRef),
    Arc(String, Span),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EventDecl {
    pub name: String,
    pub description: String,
    pub region: Vec<RegionItem>,
    /// Explicit occurrence marker; defaults to the topologically last
    /// region stage when absent.
    pub anchor: Option<StageRef>,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChronologyEdge {
    pub from: String,
    pub to: String,
    pub forbidden: bool,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChronologyDecl {
    pub edges: Vec<ChronologyEdge>,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ControlDecl {
    pub name: String,
    pub from_event: String,
    pub to_event: String,
    pub threshold: u64,
    pub message: String,
    pub span: Span,
}

/// One parsed `.tm` file: a model, then events, an optional chronology,
/// and control rules.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Ast {
    pub model_name: String,
    pub items: Vec<ModelItem>,
    pub events: Vec<EventDecl>,
    pub chronology: Option<ChronologyDecl>,
    pub controls: Vec<ControlDecl>,
    pub span: Span,
}
