//! In-memory representation and well-formedness validation of TM static
//! models.
//!
//! A model is a tree of machines. Each machine performs up to five kinds of
//! operation on the things flowing through it — create, process, release,
//! transfer, receive — realized as stages. Solid flows move things between
//! stages; dashed triggers activate other flows without moving anything.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::diag::{sort_diagnostics, DiagCode, Diagnostic, Span};
use crate::expr::{Assignment, Predicate};

// ---------------------------------------------------------------------------
// Identifiers
// ---------------------------------------------------------------------------

macro_rules! index_id {
    ($(#[$doc:meta])* $name:ident) => {
        $(#[$doc])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(pub u32);

        impl $name {
            pub fn index(self) -> usize {
                self.0 as usize
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }
    };
}

index_id!(MachineId);
index_id!(StageId);
index_id!(FlowId);
index_id!(TriggerId);
index_id!(ThingTypeId);

/// Runtime token identity. Minted only by Create (injection or trigger);
/// never reused within a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TokenId(pub u64);

impl fmt::Display for TokenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t{}", self.0)
    }
}

// ---------------------------------------------------------------------------
// Stage kinds and the adjacency table
// ---------------------------------------------------------------------------

/// The five stage kinds. Arrive and Accept are not kinds of their own; both
/// are folded into Receive.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum StageKind {
    Create,
    Process,
    Release,
    Transfer,
    Receive,
}

impl StageKind {
    pub const ALL: [StageKind; 5] = [
        StageKind::Create,
        StageKind::Process,
        StageKind::Release,
        StageKind::Transfer,
        StageKind::Receive,
    ];

    pub fn keyword(self) -> &'static str {
        match self {
            StageKind::Create => "create",
            StageKind::Process => "process",
            StageKind::Release => "release",
            StageKind::Transfer => "transfer",
            StageKind::Receive => "receive",
        }
    }
}

impl fmt::Display for StageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

/// Permitted source→destination kind pairs for a flow whose endpoints live
/// in the same machine. Kept in one place so the reading can be amended.
pub const INTRA_MACHINE_ADJACENCY: [(StageKind, StageKind); 8] = [
    (StageKind::Transfer, StageKind::Receive),
    (StageKind::Receive, StageKind::Process),
    (StageKind::Receive, StageKind::Release),
    (StageKind::Process, StageKind::Release),
    (StageKind::Process, StageKind::Create),
    (StageKind::Create, StageKind::Process),
    (StageKind::Create, StageKind::Release),
    (StageKind::Release, StageKind::Transfer),
];

pub fn intra_machine_flow_allowed(src: StageKind, dst: StageKind) -> bool {
    INTRA_MACHINE_ADJACENCY.contains(&(src, dst))
}

// ---------------------------------------------------------------------------
// Elements
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct Machine {
    pub id: MachineId,
    pub name: String,
    pub parent: Option<MachineId>,
    pub stages: Vec<StageId>,
    pub submachines: Vec<MachineId>,
    pub thing_types: Vec<ThingTypeId>,
    pub span: Span,
}

#[derive(Clone, Debug)]
pub struct Stage {
    pub id: StageId,
    pub owner: MachineId,
    pub kind: StageKind,
    pub label: Option<String>,
    /// Transfer stages marked `sink` despawn arriving tokens out of the
    /// model boundary.
    pub sink: bool,
    /// Entry condition: a token may only move onto this stage while the
    /// guard holds for its attributes.
    pub guard: Option<Predicate>,
    /// Executed in order when a token arrives. Process/Create only.
    pub actions: Vec<Assignment>,
    pub span: Span,
}

#[derive(Clone, Debug)]
pub struct Flow {
    pub id: FlowId,
    pub name: String,
    pub src: StageId,
    pub dst: StageId,
    pub guard: Option<Predicate>,
    pub span: Span,
}

/// Activation arc. No token moves along a trigger; it either mints a token
/// at a Create stage or enables a gated stage for one tick.
#[derive(Clone, Debug)]
pub struct Trigger {
    pub id: TriggerId,
    pub name: String,
    pub src: StageId,
    pub dst: StageId,
    pub span: Span,
}

#[derive(Clone, Debug)]
pub struct AttrDecl {
    pub name: String,
    pub nonnegative: bool,
}

#[derive(Clone, Debug)]
pub struct ThingType {
    pub id: ThingTypeId,
    pub name: String,
    pub owner: MachineId,
    pub attrs: Vec<AttrDecl>,
    pub span: Span,
}

impl ThingType {
    pub fn attr(&self, name: &str) -> Option<&AttrDecl> {
        self.attrs.iter().find(|a| a.name == name)
    }
}

/// A thing instance occupying one stage.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    pub id: TokenId,
    pub thing_type: ThingTypeId,
    pub stage: StageId,
    pub attrs: BTreeMap<String, i64>,
    pub birth_tick: u64,
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

/// A validated model is immutable; transforms return new models.
#[derive(Clone, Debug)]
pub struct Model {
    pub name: String,
    machines: Vec<Machine>,
    stages: Vec<Stage>,
    flows: Vec<Flow>,
    triggers: Vec<Trigger>,
    things: Vec<ThingType>,
    root: MachineId,
    /// Outgoing flows per stage, in declaration order. Declaration order is
    /// load-bearing: the simulator resolves unguarded choice by it.
    flows_from: Vec<Vec<FlowId>>,
    triggers_from: Vec<Vec<TriggerId>>,
}

impl Model {
    pub fn root(&self) -> MachineId {
        self.root
    }

    pub fn machines(&self) -> &[Machine] {
        &self.machines
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    pub fn flows(&self) -> &[Flow] {
        &self.flows
    }

    pub fn triggers(&self) -> &[Trigger] {
        &self.triggers
    }

    pub fn things(&self) -> &[ThingType] {
        &self.things
    }

    pub fn machine(&self, id: MachineId) -> &Machine {
        &self.machines[id.index()]
    }

    pub fn stage(&self, id: StageId) -> &Stage {
        &self.stages[id.index()]
    }

    pub fn flow(&self, id: FlowId) -> &Flow {
        &self.flows[id.index()]
    }

    pub fn trigger(&self, id: TriggerId) -> &Trigger {
        &self.triggers[id.index()]
    }

    pub fn thing(&self, id: ThingTypeId) -> &ThingType {
        &self.things[id.index()]
    }

    pub fn flows_from(&self, stage: StageId) -> &[FlowId] {
        &self.flows_from[stage.index()]
    }

    pub fn triggers_from(&self, stage: StageId) -> &[TriggerId] {
        &self.triggers_from[stage.index()]
    }

    pub fn machine_by_name(&self, name: &str) -> Option<&Machine> {
        self.machines.iter().find(|m| m.name == name)
    }

    pub fn thing_by_name(&self, name: &str) -> Option<&ThingType> {
        self.things.iter().find(|t| t.name == name)
    }

    /// Stage lookup by (machine, kind, label) — the `Machine.kind[label]`
    /// reference form.
    pub fn stage_by_ref(
        &self,
        machine: MachineId,
        kind: StageKind,
        label: Option<&str>,
    ) -> Option<StageId> {
        self.machine(machine).stages.iter().copied().find(|&s| {
            let st = self.stage(s);
            st.kind == kind && st.label.as_deref() == label
        })
    }

    /// Parse and resolve a textual stage reference `Machine.kind[label]`.
    pub fn resolve_stageref(&self, text: &str) -> Result<StageId, String> {
        let (machine_name, rest) = text
            .split_once('.')
            .ok_or_else(|| format!("malformed stage reference `{}`", text))?;
        let (kind_str, label) = match rest.split_once('[') {
            Some((k, l)) => {
                let l = l
                    .strip_suffix(']')
                    .ok_or_else(|| format!("malformed stage reference `{}`", text))?;
                (k, Some(l))
            }
            None => (rest, None),
        };
        let kind = StageKind::ALL
            .into_iter()
            .find(|k| k.keyword() == kind_str)
            .ok_or_else(|| format!("unknown stage kind `{}`", kind_str))?;
        let machine = self
            .machine_by_name(machine_name)
            .ok_or_else(|| format!("unknown machine `{}`", machine_name))?;
        self.stage_by_ref(machine.id, kind, label)
            .ok_or_else(|| format!("no stage `{}`", text))
    }

    /// `Machine.kind[label]` display form for a stage.
    pub fn stage_ref(&self, id: StageId) -> String {
        let stage = self.stage(id);
        let machine = self.machine(stage.owner);
        match &stage.label {
            Some(l) => format!("{}.{}[{}]", machine.name, stage.kind, l),
            None => format!("{}.{}", machine.name, stage.kind),
        }
    }

    /// True when `ancestor` is `m` or a transitive parent of `m`.
    pub fn machine_within(&self, m: MachineId, ancestor: MachineId) -> bool {
        let mut cur = Some(m);
        while let Some(c) = cur {
            if c == ancestor {
                return true;
            }
            cur = self.machine(c).parent;
        }
        false
    }

    /// Union of declared attribute names across all thing types.
    pub fn declared_attrs(&self) -> BTreeSet<&str> {
        self.things
            .iter()
            .flat_map(|t| t.attrs.iter().map(|a| a.name.as_str()))
            .collect()
    }

    /// True when an attribute is declared nonnegative on any thing type
    /// carrying it.
    pub fn attr_nonnegative(&self, thing: ThingTypeId, name: &str) -> bool {
        self.thing(thing)
            .attr(name)
            .map(|a| a.nonnegative)
            .unwrap_or(false)
    }

    /// A stage is activatable when it is a Create stage or the head of at
    /// least one flow.
    pub fn stage_activatable(&self, id: StageId) -> bool {
        self.stage(id).kind == StageKind::Create || !self.flows_from(id).is_empty()
    }

    /// Stages that are the target of some trigger but are not Create
    /// stages: tokens may not leave them until an activation arrives.
    pub fn gated_stages(&self) -> BTreeSet<StageId> {
        self.triggers
            .iter()
            .filter(|t| self.stage(t.dst).kind != StageKind::Create)
            .map(|t| t.dst)
            .collect()
    }

    /// Forward closure over flows (not triggers) from a stage.
    pub fn reachable_stages(&self, from: StageId) -> Result<BTreeSet<StageId>, ModelError> {
        if from.index() >= self.stages.len() {
            return Err(ModelError::UnknownStage(from));
        }
        let mut seen = BTreeSet::new();
        let mut work = vec![from];
        while let Some(s) = work.pop() {
            if seen.insert(s) {
                for &f in self.flows_from(s) {
                    work.push(self.flow(f).dst);
                }
            }
        }
        Ok(seen)
    }

    /// Full well-formedness sweep under the strict adjacency table. Empty
    /// iff the model is well formed. Never aborts at the first problem;
    /// the result is sorted by source position for determinism.
    pub fn validate(&self) -> Vec<Diagnostic> {
        self.validate_with(ValidationProfile::Strict)
    }

    /// Like [`validate`](Model::validate), but stage-elided models (only
    /// create/process stages anywhere) switch to the relaxed profile where
    /// flow direction alone carries the elided stages' meaning.
    pub fn validate_auto(&self) -> Vec<Diagnostic> {
        let profile = if self.is_stage_elided_form() {
            ValidationProfile::StageElided
        } else {
            ValidationProfile::Strict
        };
        self.validate_with(profile)
    }

    pub fn validate_with(&self, profile: ValidationProfile) -> Vec<Diagnostic> {
        let mut diags = Vec::new();

        self.check_tree(&mut diags);
        let simplified_profile = profile == ValidationProfile::StageElided;

        for flow in &self.flows {
            let src = self.stage(flow.src);
            let dst = self.stage(flow.dst);
            if src.owner == dst.owner {
                if !simplified_profile && !intra_machine_flow_allowed(src.kind, dst.kind) {
                    diags.push(Diagnostic::with_span(
                        DiagCode::BadAdjacency,
                        format!(
                            "flow {}: {} -> {} is not a permitted stage adjacency",
                            flow.name,
                            self.stage_ref(flow.src),
                            self.stage_ref(flow.dst)
                        ),
                        flow.span,
                    ));
                }
            } else if !simplified_profile
                && (src.kind != StageKind::Transfer || dst.kind != StageKind::Transfer)
            {
                diags.push(Diagnostic::with_span(
                    DiagCode::BoundaryViolation,
                    format!(
                        "flow {}: {} -> {} crosses machines but is not transfer -> transfer",
                        flow.name,
                        self.stage_ref(flow.src),
                        self.stage_ref(flow.dst)
                    ),
                    flow.span,
                ));
            }
        }

        for trigger in &self.triggers {
            if trigger.src == trigger.dst {
                diags.push(Diagnostic::with_span(
                    DiagCode::BadTriggerTarget,
                    format!("trigger {}: source and target coincide", trigger.name),
                    trigger.span,
                ));
            } else if !self.stage_activatable(trigger.dst) {
                diags.push(Diagnostic::with_span(
                    DiagCode::BadTriggerTarget,
                    format!(
                        "trigger {}: target {} is neither a create stage nor the head of a flow",
                        trigger.name,
                        self.stage_ref(trigger.dst)
                    ),
                    trigger.span,
                ));
            }
        }

        let known_attrs = self.declared_attrs();
        let check_pred = |pred: &Predicate, span: Span, what: &str, diags: &mut Vec<Diagnostic>| {
            let mut names = Vec::new();
            pred.attr_names(&mut names);
            for name in names {
                if !known_attrs.contains(name) {
                    diags.push(Diagnostic::with_span(
                        DiagCode::UnknownAttribute,
                        format!("{} references undeclared attribute `{}`", what, name),
                        span,
                    ));
                }
            }
        };

        for stage in &self.stages {
            if !stage.actions.is_empty()
                && !matches!(stage.kind, StageKind::Process | StageKind::Create)
            {
                diags.push(Diagnostic::with_span(
                    DiagCode::BadAction,
                    format!(
                        "stage {} carries assignments but is neither process nor create",
                        self.stage_ref(stage.id)
                    ),
                    stage.span,
                ));
            }
            if stage.sink {
                if stage.kind != StageKind::Transfer {
                    diags.push(Diagnostic::with_span(
                        DiagCode::BadSink,
                        format!("stage {} is marked sink but is not a transfer", self.stage_ref(stage.id)),
                        stage.span,
                    ));
                } else if !self.flows_from(stage.id).is_empty() {
                    diags.push(Diagnostic::with_span(
                        DiagCode::BadSink,
                        format!("sink stage {} has outgoing flows", self.stage_ref(stage.id)),
                        stage.span,
                    ));
                }
            }
            if let Some(guard) = &stage.guard {
                check_pred(guard, stage.span, &format!("guard on {}", self.stage_ref(stage.id)), &mut diags);
            }
            for action in &stage.actions {
                let mut names = vec![action.target.as_str()];
                action.value.attr_names(&mut names);
                for name in names {
                    if !known_attrs.contains(name) {
                        diags.push(Diagnostic::with_span(
                            DiagCode::UnknownAttribute,
                            format!(
                                "assignment on {} references undeclared attribute `{}`",
                                self.stage_ref(stage.id),
                                name
                            ),
                            stage.span,
                        ));
                    }
                }
            }
        }

        for flow in &self.flows {
            if let Some(guard) = &flow.guard {
                check_pred(guard, flow.span, &format!("guard on flow {}", flow.name), &mut diags);
            }
        }

        sort_diagnostics(&mut diags);
        diags
    }

    /// Stage-elided models (no transfer/release/receive anywhere) use a
    /// relaxed adjacency profile: flow direction carries the meaning the
    /// elided stages used to spell out.
    pub fn is_stage_elided_form(&self) -> bool {
        !self.stages.is_empty()
            && self.stages.iter().all(|s| {
                matches!(s.kind, StageKind::Create | StageKind::Process)
            })
    }

    fn check_tree(&self, diags: &mut Vec<Diagnostic>) {
        for machine in &self.machines {
            if machine.parent.is_none() && machine.id != self.root {
                diags.push(Diagnostic::with_span(
                    DiagCode::NotATree,
                    format!("machine {} is parentless but is not the root", machine.name),
                    machine.span,
                ));
            }
            // Walk up; a cycle would revisit the starting machine.
            let mut cur = machine.parent;
            let mut hops = 0usize;
            while let Some(p) = cur {
                if p == machine.id || hops > self.machines.len() {
                    diags.push(Diagnostic::with_span(
                        DiagCode::NotATree,
                        format!("machine {} is contained in itself", machine.name),
                        machine.span,
                    ));
                    break;
                }
                cur = self.machine(p).parent;
                hops += 1;
            }
        }
    }
}

/// Which adjacency rules apply during validation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ValidationProfile {
    /// The full five-stage adjacency table.
    #[default]
    Strict,
    /// For stage-elided models: any flow among create/process stages is
    /// legal, including across machine boundaries.
    StageElided,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("unknown stage {0}")]
    UnknownStage(StageId),
    #[error("unknown machine {0}")]
    UnknownMachine(MachineId),
}

// ---------------------------------------------------------------------------
// Builder
// ---------------------------------------------------------------------------

/// Accumulates declarations, checks identifier uniqueness and reference
/// resolution, and produces a [`Model`]. Unresolved references are reported
/// as diagnostics, never silently dropped.
pub struct ModelBuilder {
    model: Model,
    diags: Vec<Diagnostic>,
}

impl ModelBuilder {
    pub fn new(name: impl Into<String>) -> Self {
        let name = name.into();
        let root = Machine {
            id: MachineId(0),
            name: name.clone(),
            parent: None,
            stages: Vec::new(),
            submachines: Vec::new(),
            thing_types: Vec::new(),
            span: Span::default(),
        };
        ModelBuilder {
            model: Model {
                name,
                machines: vec![root],
                stages: Vec::new(),
                flows: Vec::new(),
                triggers: Vec::new(),
                things: Vec::new(),
                root: MachineId(0),
                flows_from: Vec::new(),
                triggers_from: Vec::new(),
            },
            diags: Vec::new(),
        }
    }

    pub fn root(&self) -> MachineId {
        self.model.root
    }

    pub fn add_machine(&mut self, parent: MachineId, name: impl Into<String>, span: Span) -> MachineId {
        let name = name.into();
        if self.model.machines.iter().any(|m| m.name == name) {
            self.diags.push(Diagnostic::with_span(
                DiagCode::DuplicateId,
                format!("duplicate machine name `{}`", name),
                span,
            ));
        }
        let id = MachineId(self.model.machines.len() as u32);
        self.model.machines.push(Machine {
            id,
            name,
            parent: Some(parent),
            stages: Vec::new(),
            submachines: Vec::new(),
            thing_types: Vec::new(),
            span,
        });
        self.model.machines[parent.index()].submachines.push(id);
        id
    }

    pub fn add_stage(
        &mut self,
        owner: MachineId,
        kind: StageKind,
        label: Option<String>,
        span: Span,
    ) -> StageId {
        if self
            .model
            .stage_by_ref(owner, kind, label.as_deref())
            .is_some()
        {
            let shown = label.as_deref().unwrap_or("");
            self.diags.push(Diagnostic::with_span(
                DiagCode::DuplicateId,
                format!(
                    "machine {} already has a {} stage labeled `{}`",
                    self.model.machine(owner).name,
                    kind,
                    shown
                ),
                span,
            ));
        }
        let id = StageId(self.model.stages.len() as u32);
        self.model.stages.push(Stage {
            id,
            owner,
            kind,
            label,
            sink: false,
            guard: None,
            actions: Vec::new(),
            span,
        });
        self.model.machines[owner.index()].stages.push(id);
        id
    }

    pub fn set_stage_sink(&mut self, stage: StageId) {
        self.model.stages[stage.index()].sink = true;
    }

    pub fn set_stage_guard(&mut self, stage: StageId, guard: Predicate) {
        self.model.stages[stage.index()].guard = Some(guard);
    }

    pub fn set_stage_actions(&mut self, stage: StageId, actions: Vec<Assignment>) {
        self.model.stages[stage.index()].actions = actions;
    }

    pub fn add_flow(
        &mut self,
        name: impl Into<String>,
        src: StageId,
        dst: StageId,
        guard: Option<Predicate>,
        span: Span,
    ) -> FlowId {
        let name = name.into();
        if self.model.flows.iter().any(|f| f.name == name) {
            self.diags.push(Diagnostic::with_span(
                DiagCode::DuplicateId,
                format!("duplicate flow name `{}`", name),
                span,
            ));
        }
        let id = FlowId(self.model.flows.len() as u32);
        self.model.flows.push(Flow {
            id,
            name,
            src,
            dst,
            guard,
            span,
        });
        id
    }

    pub fn add_trigger(
        &mut self,
        name: impl Into<String>,
        src: StageId,
        dst: StageId,
        span: Span,
    ) -> TriggerId {
        let name = name.into();
        if self.model.triggers.iter().any(|t| t.name == name) {
            self.diags.push(Diagnostic::with_span(
                DiagCode::DuplicateId,
                format!("duplicate trigger name `{}`", name),
                span,
            ));
        }
        let id = TriggerId(self.model.triggers.len() as u32);
        self.model.triggers.push(Trigger {
            id,
            name,
            src,
            dst,
            span,
        });
        id
    }

    pub fn add_thing(
        &mut self,
        owner: MachineId,
        name: impl Into<String>,
        attrs: Vec<AttrDecl>,
        span: Span,
    ) -> ThingTypeId {
        let name = name.into();
        if self.model.things.iter().any(|t| t.name == name) {
            self.diags.push(Diagnostic::with_span(
                DiagCode::DuplicateId,
                format!("duplicate thing name `{}`", name),
                span,
            ));
        }
        let id = ThingTypeId(self.model.things.len() as u32);
        self.model.things.push(ThingType {
            id,
            name,
            owner,
            attrs,
            span,
        });
        self.model.machines[owner.index()].thing_types.push(id);
        id
    }

    pub fn push_diagnostic(&mut self, diag: Diagnostic) {
        self.diags.push(diag);
    }

    /// The model as declared so far. Flow/trigger indexes are not built
    /// yet; only name and stage lookups are meaningful.
    pub(crate) fn peek_model(&self) -> &Model {
        &self.model
    }

    pub(crate) fn peek_stage_kind(&self, stage: StageId) -> StageKind {
        self.model.stages[stage.index()].kind
    }

    /// Outgoing-flow map over the flows added so far.
    pub(crate) fn peek_flows_from(&self) -> BTreeMap<StageId, Vec<FlowId>> {
        let mut map: BTreeMap<StageId, Vec<FlowId>> = BTreeMap::new();
        for flow in &self.model.flows {
            map.entry(flow.src).or_default().push(flow.id);
        }
        map
    }

    /// Resolve indexes and hand the model over. Errs with every collected
    /// diagnostic if any declaration failed.
    pub fn finish(mut self) -> Result<Model, Vec<Diagnostic>> {
        if !self.diags.is_empty() {
            sort_diagnostics(&mut self.diags);
            return Err(self.diags);
        }
        let n = self.model.stages.len();
        self.model.flows_from = vec![Vec::new(); n];
        self.model.triggers_from = vec![Vec::new(); n];
        for flow in &self.model.flows {
            self.model.flows_from[flow.src.index()].push(flow.id);
        }
        for trigger in &self.model.triggers {
            self.model.triggers_from[trigger.src.index()].push(trigger.id);
        }
        Ok(self.model)
    }
}
