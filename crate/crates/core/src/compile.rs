//! Lowering from syntax trees to resolved models, events, chronologies,
//! and control rules.

use std::collections::BTreeMap;

use crate::ast::*;
use crate::behavior::{Chronology, Event, EventId, RegionElement};
use crate::diag::{sort_diagnostics, DiagCode, Diagnostic, SourceFile};
use crate::model::{AttrDecl, MachineId, Model, ModelBuilder, StageId};
use crate::parser::parse;
use crate::sim::ControlRule;

/// Everything a `.tm` file declares, resolved and cross-checked.
#[derive(Clone, Debug)]
pub struct Document {
    pub model: Model,
    pub events: Vec<Event>,
    pub chronology: Chronology,
    pub controls: Vec<ControlRule>,
}

/// Parse and lower a source file in one step.
pub fn compile_source(source: &SourceFile) -> Result<Document, Vec<Diagnostic>> {
    let ast = parse(source)?;
    compile(&ast)
}

/// Lower a syntax tree. Identifier clashes and unresolved references are
/// reported together, never silently dropped.
pub fn compile(ast: &Ast) -> Result<Document, Vec<Diagnostic>> {
    let model = build_model(ast)?;

    let mut diags = Vec::new();
    let mut events = Vec::new();
    let mut event_ids: BTreeMap<&str, EventId> = BTreeMap::new();

    for decl in &ast.events {
        if event_ids.contains_key(decl.name.as_str()) {
            diags.push(Diagnostic::with_span(
                DiagCode::DuplicateId,
                format!("duplicate event name `{}`", decl.name),
                decl.span,
            ));
            continue;
        }

        let mut region = Vec::new();
        let mut stages = Vec::new();
        for item in &decl.region {
            match item {
                RegionItem::Stage(sref) => match resolve_stageref(&model, sref, &mut diags) {
                    Some(s) => {
                        region.push(RegionElement::Stage(s));
                        stages.push(s);
                    }
                    None => continue,
                },
                RegionItem::Arc(name, span) => {
                    if let Some(f) = model.flows().iter().find(|f| &f.name == name) {
                        region.push(RegionElement::Flow(f.id));
                    } else if let Some(t) = model.triggers().iter().find(|t| &t.name == name) {
                        region.push(RegionElement::Trigger(t.id));
                    } else {
                        diags.push(Diagnostic::with_span(
                            DiagCode::UnresolvedReference,
                            format!("no flow or trigger named `{}`", name),
                            *span,
                        ));
                    }
                }
            }
        }

        let anchor = match &decl.anchor {
            Some(sref) => resolve_stageref(&model, sref, &mut diags),
            // Default: the topologically last region stage.
            None => last_region_stage(&model, &stages),
        };
        let Some(anchor) = anchor else {
            diags.push(Diagnostic::with_span(
                DiagCode::BadAnchor,
                format!("event {} has no anchor stage (empty stage region)", decl.name),
                decl.span,
            ));
            continue;
        };

        let id = EventId(events.len() as u32);
        event_ids.insert(decl.name.as_str(), id);
        events.push(Event {
            id,
            name: decl.name.clone(),
            description: decl.description.clone(),
            region,
            anchor,
            span: decl.span,
        });
    }

    let mut chronology = Chronology::default();
    if let Some(chron) = &ast.chronology {
        for edge in &chron.edges {
            let from = event_ids.get(edge.from.as_str()).copied();
            let to = event_ids.get(edge.to.as_str()).copied();
            match (from, to) {
                (Some(f), Some(t)) => {
                    if edge.forbidden {
                        chronology.forbid(f, t);
                    } else {
                        chronology.permit(f, t);
                    }
                }
                _ => {
                    let missing = if from.is_none() { &edge.from } else { &edge.to };
                    diags.push(Diagnostic::with_span(
                        DiagCode::UnknownEvent,
                        format!("chronology references undeclared event `{}`", missing),
                        edge.span,
                    ));
                }
            }
        }
    }

    let mut controls = Vec::new();
    for decl in &ast.controls {
        let from = event_ids.get(decl.from_event.as_str()).copied();
        let to = event_ids.get(decl.to_event.as_str()).copied();
        let (Some(from_event), Some(to_event)) = (from, to) else {
            let missing = if from.is_none() { &decl.from_event } else { &decl.to_event };
            diags.push(Diagnostic::with_span(
                DiagCode::UnknownEvent,
                format!("control rule {} references undeclared event `{}`", decl.name, missing),
                decl.span,
            ));
            continue;
        };
        if decl.threshold < 1 {
            diags.push(Diagnostic::with_span(
                DiagCode::BadThreshold,
                format!("control rule {} needs a threshold of at least 1 tick", decl.name),
                decl.span,
            ));
            continue;
        }
        controls.push(ControlRule {
            name: decl.name.clone(),
            from_event,
            to_event,
            threshold: decl.threshold,
            message: decl.message.clone(),
        });
    }

    if !diags.is_empty() {
        sort_diagnostics(&mut diags);
        return Err(diags);
    }

    Ok(Document {
        model,
        events,
        chronology,
        controls,
    })
}

/// Build just the static model out of a syntax tree.
pub fn build_model(ast: &Ast) -> Result<Model, Vec<Diagnostic>> {
    let mut builder = ModelBuilder::new(ast.model_name.clone());
    let root = builder.root();

    // Two passes: machines/things/stages first so that flows and triggers
    // can reference stages declared later in the file.
    for item in &ast.items {
        match item {
            ModelItem::Machine(m) => declare_machine(&mut builder, root, m),
            ModelItem::Thing(t) => declare_thing(&mut builder, root, t),
            ModelItem::Flow(_) | ModelItem::Trigger(_) => {}
        }
    }

    // Arcs resolve against the finished stage set.
    let mut arc_diags = Vec::new();
    let mut arcs: Vec<ResolvedArc<'_>> = Vec::new();
    {
        let probe = builder.peek_model();
        for item in &ast.items {
            match item {
                ModelItem::Flow(f) => {
                    let src = resolve_stageref(probe, &f.src, &mut arc_diags);
                    let dst = resolve_stageref(probe, &f.dst, &mut arc_diags);
                    if let (Some(src), Some(dst)) = (src, dst) {
                        arcs.push(ResolvedArc::Flow(f, src, dst));
                    }
                }
                ModelItem::Trigger(t) => {
                    let src = resolve_stageref(probe, &t.src, &mut arc_diags);
                    let dst = resolve_stageref(probe, &t.dst, &mut arc_diags);
                    if let (Some(src), Some(dst)) = (src, dst) {
                        arcs.push(ResolvedArc::Trigger(t, src, dst));
                    }
                }
                _ => {}
            }
        }
    }
    for diag in arc_diags {
        builder.push_diagnostic(diag);
    }
    for arc in arcs {
        match arc {
            ResolvedArc::Flow(f, src, dst) => {
                builder.add_flow(f.name.clone(), src, dst, f.guard.clone(), f.span);
            }
            ResolvedArc::Trigger(t, src, dst) => {
                builder.add_trigger(t.name.clone(), src, dst, t.span);
            }
        }
    }

    builder.finish()
}

enum ResolvedArc<'a> {
    Flow(&'a FlowDecl, StageId, StageId),
    Trigger(&'a TriggerDecl, StageId, StageId),
}

fn declare_machine(builder: &mut ModelBuilder, parent: MachineId, decl: &MachineDecl) {
    let id = builder.add_machine(parent, decl.name.clone(), decl.span);
    for item in &decl.items {
        match item {
            MachineItem::Stage(s) => {
                let stage = builder.add_stage(id, s.kind, s.label.clone(), s.span);
                if s.sink {
                    builder.set_stage_sink(stage);
                }
                if let Some(guard) = &s.guard {
                    builder.set_stage_guard(stage, guard.clone());
                }
                if !s.actions.is_empty() {
                    builder.set_stage_actions(stage, s.actions.clone());
                }
            }
            MachineItem::Machine(sub) => declare_machine(builder, id, sub),
            MachineItem::Thing(t) => declare_thing(builder, id, t),
        }
    }
}

fn declare_thing(builder: &mut ModelBuilder, owner: MachineId, decl: &ThingDecl) {
    let attrs = decl
        .attrs
        .iter()
        .map(|a| AttrDecl {
            name: a.name.clone(),
            nonnegative: a.nonnegative,
        })
        .collect();
    builder.add_thing(owner, decl.name.clone(), attrs, decl.span);
}

fn resolve_stageref(
    model: &Model,
    sref: &StageRef,
    diags: &mut Vec<Diagnostic>,
) -> Option<StageId> {
    let Some(machine) = model.machine_by_name(&sref.machine) else {
        diags.push(Diagnostic::with_span(
            DiagCode::UnresolvedReference,
            format!("unknown machine `{}`", sref.machine),
            sref.span,
        ));
        return None;
    };
    match model.stage_by_ref(machine.id, sref.kind, sref.label.as_deref()) {
        Some(s) => Some(s),
        None => {
            diags.push(Diagnostic::with_span(
                DiagCode::UnresolvedReference,
                format!("machine {} has no stage `{}`", sref.machine, sref),
                sref.span,
            ));
            None
        }
    }
}

/// Inverse of [`compile`]: turn a resolved document back into a syntax
/// tree in canonical declaration order (things, stages, submachines, then
/// flows and triggers at the top level). Anchors are always explicit so
/// no information rides on defaults.
pub fn document_to_ast(doc: &Document) -> Ast {
    let model = &doc.model;
    let span = crate::diag::Span::default();

    let stageref = |stage: StageId| -> StageRef {
        let st = model.stage(stage);
        StageRef {
            machine: model.machine(st.owner).name.clone(),
            kind: st.kind,
            label: st.label.clone(),
            span,
        }
    };

    fn machine_decl(
        model: &Model,
        machine: crate::model::MachineId,
        span: crate::diag::Span,
    ) -> MachineDecl {
        let m = model.machine(machine);
        let mut items = Vec::new();
        for &thing in &m.thing_types {
            items.push(MachineItem::Thing(thing_decl(model, thing, span)));
        }
        for &stage in &m.stages {
            let st = model.stage(stage);
            items.push(MachineItem::Stage(StageDecl {
                kind: st.kind,
                label: st.label.clone(),
                sink: st.sink,
                guard: st.guard.clone(),
                actions: st.actions.clone(),
                span,
            }));
        }
        for &sub in &m.submachines {
            items.push(MachineItem::Machine(machine_decl(model, sub, span)));
        }
        MachineDecl {
            name: m.name.clone(),
            items,
            span,
        }
    }

    fn thing_decl(
        model: &Model,
        thing: crate::model::ThingTypeId,
        span: crate::diag::Span,
    ) -> ThingDecl {
        let t = model.thing(thing);
        ThingDecl {
            name: t.name.clone(),
            attrs: t
                .attrs
                .iter()
                .map(|a| AttrDeclAst {
                    name: a.name.clone(),
                    nonnegative: a.nonnegative,
                    span,
                })
                .collect(),
            span,
        }
    }

    let mut items = Vec::new();
    let root = model.machine(model.root());
    for &thing in &root.thing_types {
        items.push(ModelItem::Thing(thing_decl(model, thing, span)));
    }
    for &sub in &root.submachines {
        items.push(ModelItem::Machine(machine_decl(model, sub, span)));
    }
    for flow in model.flows() {
        items.push(ModelItem::Flow(FlowDecl {
            name: flow.name.clone(),
            src: stageref(flow.src),
            dst: stageref(flow.dst),
            guard: flow.guard.clone(),
            span,
        }));
    }
    for trigger in model.triggers() {
        items.push(ModelItem::Trigger(TriggerDecl {
            name: trigger.name.clone(),
            src: stageref(trigger.src),
            dst: stageref(trigger.dst),
            span,
        }));
    }

    let events = doc
        .events
        .iter()
        .map(|event| EventDecl {
            name: event.name.clone(),
            description: event.description.clone(),
            region: event
                .region
                .iter()
                .map(|element| match element {
                    crate::behavior::RegionElement::Stage(s) => RegionItem::Stage(stageref(*s)),
                    crate::behavior::RegionElement::Flow(f) => {
                        RegionItem::Arc(model.flow(*f).name.clone(), span)
                    }
                    crate::behavior::RegionElement::Trigger(t) => {
                        RegionItem::Arc(model.trigger(*t).name.clone(), span)
                    }
                })
                .collect(),
            anchor: Some(stageref(event.anchor)),
            span,
        })
        .collect();

    let event_name = |id: crate::behavior::EventId| doc.events[id.index()].name.clone();
    let mut edges = Vec::new();
    for &(a, b) in &doc.chronology.permitted {
        edges.push(ChronologyEdge {
            from: event_name(a),
            to: event_name(b),
            forbidden: false,
            span,
        });
    }
    for &(a, b) in &doc.chronology.forbidden {
        edges.push(ChronologyEdge {
            from: event_name(a),
            to: event_name(b),
            forbidden: true,
            span,
        });
    }
    let chronology = if edges.is_empty() {
        None
    } else {
        Some(ChronologyDecl { edges, span })
    };

    let controls = doc
        .controls
        .iter()
        .map(|rule| ControlDecl {
            name: rule.name.clone(),
            from_event: event_name(rule.from_event),
            to_event: event_name(rule.to_event),
            threshold: rule.threshold,
            message: rule.message.clone(),
            span,
        })
        .collect();

    Ast {
        model_name: model.name.clone(),
        items,
        events,
        chronology,
        controls,
        span,
    }
}

/// Topologically last region stage under the flow relation restricted to
/// the given stages; falls back to the last-listed stage on ties/cycles.
fn last_region_stage(model: &Model, stages: &[StageId]) -> Option<StageId> {
    if stages.is_empty() {
        return None;
    }
    // A stage with no outgoing flow into another region stage is "last".
    // Scan in reverse listing order so later declarations win ties.
    for &candidate in stages.iter().rev() {
        let has_out = model.flows_from(candidate).iter().any(|&f| {
            let dst = model.flow(f).dst;
            dst != candidate && stages.contains(&dst)
        });
        if !has_out {
            return Some(candidate);
        }
    }
    stages.last().copied()
}
