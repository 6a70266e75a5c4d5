//! Model-to-model and model-to-text derivations: stage-elided
//! simplification, DOT diagram export, and class-notation mapping.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::behavior::{Chronology, Event, EventId, RegionElement};
use crate::compile::Document;
use crate::diag::Span;
use crate::expr::Predicate;
use crate::model::{FlowId, MachineId, Model, ModelBuilder, StageId, StageKind, TriggerId};

#[derive(Debug, thiserror::Error)]
pub enum TransformError {
    #[error("cannot splice: elided chain branches at {stage} (chain: {chain})")]
    AmbiguousSplice { stage: String, chain: String },
    #[error("cannot splice: elided chain cycles through {stage} (chain: {chain})")]
    SpliceCycle { stage: String, chain: String },
    #[error("unknown machine `{0}`")]
    UnknownMachine(String),
}

// ---------------------------------------------------------------------------
// Simplification
// ---------------------------------------------------------------------------

/// Result of eliding transfer/release/receive stages. Keeps the mapping
/// from surviving elements of the original model so that events and rules
/// can be carried over.
#[derive(Clone, Debug)]
pub struct Simplified {
    pub model: Model,
    pub stage_map: BTreeMap<StageId, StageId>,
    pub flow_map: BTreeMap<FlowId, FlowId>,
    pub trigger_map: BTreeMap<TriggerId, TriggerId>,
}

fn survives(kind: StageKind) -> bool {
    matches!(kind, StageKind::Create | StageKind::Process)
}

/// Delete every Transfer, Release, and Receive stage and re-splice flows
/// across the elided chains; flow direction alone carries what those
/// stages used to spell out.
///
/// Guards along an elided chain are conjoined onto the spliced flow.
/// Triggers re-anchor to the nearest surviving stage upstream of their
/// original endpoint; triggers that collapse onto themselves or whose
/// re-anchored target is no longer activatable are dropped. Chains that
/// dead-end inside elided stages contribute no spliced flow, so tokens
/// rest at the last surviving stage instead.
pub fn simplify(model: &Model) -> Result<Simplified, TransformError> {
    let mut b = ModelBuilder::new(model.name.clone());

    // Machine tree and things carry over unchanged, in declaration order.
    let mut machine_map: BTreeMap<MachineId, MachineId> = BTreeMap::new();
    machine_map.insert(model.root(), b.root());
    let mut work: std::collections::VecDeque<MachineId> = [model.root()].into();
    while let Some(old) = work.pop_front() {
        let new_parent = machine_map[&old];
        for &sub in &model.machine(old).submachines {
            let new = b.add_machine(new_parent, model.machine(sub).name.clone(), Span::default());
            machine_map.insert(sub, new);
            work.push_back(sub);
        }
    }
    let mut stage_map: BTreeMap<StageId, StageId> = BTreeMap::new();
    for stage in model.stages() {
        if !survives(stage.kind) {
            continue;
        }
        let new = b.add_stage(
            machine_map[&stage.owner],
            stage.kind,
            stage.label.clone(),
            Span::default(),
        );
        if let Some(guard) = &stage.guard {
            b.set_stage_guard(new, guard.clone());
        }
        if !stage.actions.is_empty() {
            b.set_stage_actions(new, stage.actions.clone());
        }
        stage_map.insert(stage.id, new);
    }
    for thing in model.things() {
        b.add_thing(
            machine_map[&thing.owner],
            thing.name.clone(),
            thing.attrs.clone(),
            Span::default(),
        );
    }

    // Flows: surviving->surviving flows are kept; flows into elided land
    // are walked to every surviving exit, conjoining guards along the way.
    let mut flow_map: BTreeMap<FlowId, FlowId> = BTreeMap::new();
    let mut used_names: BTreeSet<String> = BTreeSet::new();
    for flow in model.flows() {
        if !survives(model.stage(flow.src).kind) {
            continue;
        }
        let src = stage_map[&flow.src];
        if survives(model.stage(flow.dst).kind) {
            let name = unique_name(&flow.name, &mut used_names);
            let id = b.add_flow(name, src, stage_map[&flow.dst], flow.guard.clone(), Span::default());
            flow_map.insert(flow.id, id);
        } else {
            for (exit, guards) in walk_chain(model, flow)? {
                let name = unique_name(&flow.name, &mut used_names);
                let guard = guards
                    .into_iter()
                    .reduce(|acc, p| acc.and(p));
                let id = b.add_flow(name, src, stage_map[&exit], guard, Span::default());
                flow_map.entry(flow.id).or_insert(id);
            }
        }
    }

    // Triggers: both endpoints re-anchor upstream to surviving stages.
    let mut trigger_map: BTreeMap<TriggerId, TriggerId> = BTreeMap::new();
    let probe = b.peek_flows_from();
    for trigger in model.triggers() {
        let src = nearest_surviving_upstream(model, trigger.src, &stage_map);
        let dst = nearest_surviving_upstream(model, trigger.dst, &stage_map);
        let (Some(src), Some(dst)) = (src, dst) else { continue };
        if src == dst {
            continue;
        }
        let activatable = b.peek_stage_kind(dst) == StageKind::Create
            || probe.get(&dst).is_some_and(|flows| !flows.is_empty());
        if !activatable {
            continue;
        }
        let name = unique_name(&trigger.name, &mut used_names);
        let id = b.add_trigger(name, src, dst, Span::default());
        trigger_map.insert(trigger.id, id);
    }

    let model = b
        .finish()
        .expect("simplification preserves identifier uniqueness");
    Ok(Simplified {
        model,
        stage_map,
        flow_map,
        trigger_map,
    })
}

fn unique_name(base: &str, used: &mut BTreeSet<String>) -> String {
    if used.insert(base.to_string()) {
        return base.to_string();
    }
    for i in 2.. {
        let candidate = format!("{}_{}", base, i);
        if used.insert(candidate.clone()) {
            return candidate;
        }
    }
    unreachable!()
}

/// Every (surviving exit stage, guards along the path) reachable from a
/// flow that dives into elided stages. A branch whose flows all carry
/// guards is deterministic routing and fans out into one spliced flow per
/// path; an unguarded branch at a Release or Transfer would fall back to
/// declaration order, which a spliced guard cannot express, so it is
/// rejected. Receive fan-out splices per path either way.
fn walk_chain(
    model: &Model,
    entry: &crate::model::Flow,
) -> Result<Vec<(StageId, Vec<Predicate>)>, TransformError> {
    // Pre-order DFS in declaration order at every node, so the spliced
    // flows preserve the original guard-evaluation order.
    fn dfs(
        model: &Model,
        cur: StageId,
        guards: &[Predicate],
        path: &mut Vec<StageId>,
        out: &mut Vec<(StageId, Vec<Predicate>)>,
    ) -> Result<(), TransformError> {
        let outs = model.flows_from(cur);
        if outs.len() > 1
            && matches!(
                model.stage(cur).kind,
                StageKind::Release | StageKind::Transfer
            )
            && outs.iter().any(|&f| model.flow(f).guard.is_none())
        {
            return Err(TransformError::AmbiguousSplice {
                stage: model.stage_ref(cur),
                chain: chain_display(model, path),
            });
        }
        for &fid in outs {
            let flow = model.flow(fid);
            let mut guards = guards.to_vec();
            if let Some(g) = &flow.guard {
                guards.push(g.clone());
            }
            if survives(model.stage(flow.dst).kind) {
                out.push((flow.dst, guards));
            } else if path.contains(&flow.dst) {
                return Err(TransformError::SpliceCycle {
                    stage: model.stage_ref(flow.dst),
                    chain: chain_display(model, path),
                });
            } else {
                path.push(flow.dst);
                dfs(model, flow.dst, &guards, path, out)?;
                path.pop();
            }
        }
        Ok(())
    }

    let mut out = Vec::new();
    let mut initial_guards = Vec::new();
    if let Some(g) = &entry.guard {
        initial_guards.push(g.clone());
    }
    let mut path = vec![entry.dst];
    dfs(model, entry.dst, &initial_guards, &mut path, &mut out)?;
    Ok(out)
}

fn chain_display(model: &Model, path: &[StageId]) -> String {
    path.iter()
        .map(|&s| model.stage_ref(s))
        .collect::<Vec<_>>()
        .join(" -> ")
}

/// Closest Create/Process stage walking backward over flows. Ties resolve
/// by stage id for determinism.
fn nearest_surviving_upstream(
    model: &Model,
    from: StageId,
    stage_map: &BTreeMap<StageId, StageId>,
) -> Option<StageId> {
    if let Some(&mapped) = stage_map.get(&from) {
        return Some(mapped);
    }
    let mut frontier = BTreeSet::from([from]);
    let mut seen = frontier.clone();
    while !frontier.is_empty() {
        let mut next = BTreeSet::new();
        let mut found: Option<StageId> = None;
        for &stage in &frontier {
            for flow in model.flows() {
                if flow.dst != stage || seen.contains(&flow.src) {
                    continue;
                }
                if let Some(&mapped) = stage_map.get(&flow.src) {
                    found = Some(found.map_or(mapped, |f| f.min(mapped)));
                } else {
                    next.insert(flow.src);
                }
            }
        }
        if let Some(f) = found {
            return Some(f);
        }
        seen.extend(next.iter().copied());
        frontier = next;
    }
    None
}

/// Carry a whole document across simplification: events keep only their
/// surviving region elements and are dropped entirely when their anchor
/// is elided; chronology edges and control rules over dropped events go
/// with them.
pub fn simplify_document(doc: &Document) -> Result<Document, TransformError> {
    let simplified = simplify(&doc.model)?;

    let mut event_map: BTreeMap<EventId, EventId> = BTreeMap::new();
    let mut events = Vec::new();
    for event in &doc.events {
        let Some(&anchor) = simplified.stage_map.get(&event.anchor) else {
            continue;
        };
        let region: Vec<RegionElement> = event
            .region
            .iter()
            .filter_map(|e| match e {
                RegionElement::Stage(s) => {
                    simplified.stage_map.get(s).map(|&s| RegionElement::Stage(s))
                }
                RegionElement::Flow(f) => {
                    simplified.flow_map.get(f).map(|&f| RegionElement::Flow(f))
                }
                RegionElement::Trigger(t) => simplified
                    .trigger_map
                    .get(t)
                    .map(|&t| RegionElement::Trigger(t)),
            })
            .collect();
        let id = EventId(events.len() as u32);
        event_map.insert(event.id, id);
        events.push(Event {
            id,
            name: event.name.clone(),
            description: event.description.clone(),
            region,
            anchor,
            span: Span::default(),
        });
    }

    let mut chronology = Chronology::default();
    for &(a, b) in &doc.chronology.permitted {
        if let (Some(&a), Some(&b)) = (event_map.get(&a), event_map.get(&b)) {
            chronology.permit(a, b);
        }
    }
    for &(a, b) in &doc.chronology.forbidden {
        if let (Some(&a), Some(&b)) = (event_map.get(&a), event_map.get(&b)) {
            chronology.forbid(a, b);
        }
    }

    let controls = doc
        .controls
        .iter()
        .filter_map(|rule| {
            let from_event = *event_map.get(&rule.from_event)?;
            let to_event = *event_map.get(&rule.to_event)?;
            Some(crate::sim::ControlRule {
                name: rule.name.clone(),
                from_event,
                to_event,
                threshold: rule.threshold,
                message: rule.message.clone(),
            })
        })
        .collect();

    Ok(Document {
        model: simplified.model,
        events,
        chronology,
        controls,
    })
}

// ---------------------------------------------------------------------------
// DOT export
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, Default)]
pub struct DotOptions<'a> {
    /// Overlay event regions as filled node groups.
    pub events: Option<&'a [Event]>,
}

const REGION_COLORS: [&str; 8] = [
    "#cfe2ff", "#d1e7dd", "#fff3cd", "#f8d7da", "#e2d9f3", "#fde2ff", "#d2f4ea", "#ffe5d0",
];

/// Valid DOT digraph: machines as nested clusters, flows as solid edges,
/// triggers as dashed edges, event regions as colored node groups.
pub fn to_dot(model: &Model, options: &DotOptions) -> String {
    let mut out = String::new();
    out.push_str(&format!("digraph {} {{\n", quote(&model.name)));
    out.push_str("  rankdir=LR;\n");
    out.push_str("  node [shape=box, fontname=\"Helvetica\"];\n");

    // First event whose region contains the stage wins the color.
    let mut region_color: BTreeMap<StageId, &str> = BTreeMap::new();
    if let Some(events) = options.events {
        for event in events {
            let color = REGION_COLORS[event.id.index() % REGION_COLORS.len()];
            for stage in event.region_stages() {
                region_color.entry(stage).or_insert(color);
            }
        }
    }

    write_machine_cluster(&mut out, model, model.root(), &region_color, 1);

    for flow in model.flows() {
        let mut label = flow.name.clone();
        if let Some(guard) = &flow.guard {
            label.push_str(&format!(" when {}", guard));
        }
        out.push_str(&format!(
            "  s{} -> s{} [label={}];\n",
            flow.src.0,
            flow.dst.0,
            quote(&label)
        ));
    }
    for trigger in model.triggers() {
        out.push_str(&format!(
            "  s{} -> s{} [style=dashed, label={}];\n",
            trigger.src.0,
            trigger.dst.0,
            quote(&trigger.name)
        ));
    }
    out.push_str("}\n");
    out
}

fn write_machine_cluster(
    out: &mut String,
    model: &Model,
    machine: MachineId,
    region_color: &BTreeMap<StageId, &str>,
    depth: usize,
) {
    let indent = "  ".repeat(depth);
    let m = model.machine(machine);
    out.push_str(&format!("{}subgraph cluster_m{} {{\n", indent, machine.0));
    out.push_str(&format!("{}  label={};\n", indent, quote(&m.name)));
    for &stage in &m.stages {
        let st = model.stage(stage);
        let mut label = st.kind.to_string();
        if let Some(l) = &st.label {
            label.push_str(&format!(" [{}]", l));
        }
        if st.sink {
            label.push_str(" (sink)");
        }
        let mut attrs = format!("label={}", quote(&label));
        if let Some(color) = region_color.get(&stage) {
            attrs.push_str(&format!(", style=filled, fillcolor={}", quote(color)));
        }
        out.push_str(&format!("{}  s{} [{}];\n", indent, stage.0, attrs));
    }
    for &sub in &m.submachines {
        write_machine_cluster(out, model, sub, region_color, depth + 1);
    }
    out.push_str(&format!("{}}}\n", indent));
}

fn quote(s: &str) -> String {
    let mut q = String::with_capacity(s.len() + 2);
    q.push('"');
    for c in s.chars() {
        if c == '"' {
            q.push('\\');
        }
        q.push(c);
    }
    q.push('"');
    q
}

// ---------------------------------------------------------------------------
// Class mapping
// ---------------------------------------------------------------------------

/// Class-notation skeleton derived from a machine: attributes are the
/// thing types resident in the machine, operations come from the events
/// whose region touches it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassSkeleton {
    pub class_name: String,
    pub attributes: Vec<(String, String)>,
    pub operations: Vec<String>,
}

impl fmt::Display for ClassSkeleton {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "class {}", self.class_name)?;
        writeln!(f, "  attributes:")?;
        for (name, kind) in &self.attributes {
            writeln!(f, "    {}: {}", name, kind)?;
        }
        writeln!(f, "  operations:")?;
        for op in &self.operations {
            writeln!(f, "    {}", op)?;
        }
        Ok(())
    }
}

/// Map a machine to a class skeleton: one attribute per thing type
/// declared in the machine or its submachines, one operation per event
/// whose region intersects them.
pub fn to_class(model: &Model, machine: MachineId, events: &[Event]) -> ClassSkeleton {
    let attributes = model
        .things()
        .iter()
        .filter(|t| model.machine_within(t.owner, machine))
        .map(|t| (t.name.clone(), "thing".to_string()))
        .collect();

    let mut operations: Vec<String> = Vec::new();
    for event in events {
        if !region_intersects(model, event, machine) {
            continue;
        }
        let base = if event.description.is_empty() {
            event.name.clone()
        } else {
            event.description.clone()
        };
        let op = if operations.contains(&base) {
            format!("{} [{}]", base, event.name)
        } else {
            base
        };
        operations.push(op);
    }

    ClassSkeleton {
        class_name: model.machine(machine).name.clone(),
        attributes,
        operations,
    }
}

/// Name-resolving wrapper around [`to_class`].
pub fn to_class_by_name(
    model: &Model,
    machine: &str,
    events: &[Event],
) -> Result<ClassSkeleton, TransformError> {
    let m = model
        .machine_by_name(machine)
        .ok_or_else(|| TransformError::UnknownMachine(machine.to_string()))?;
    Ok(to_class(model, m.id, events))
}

fn region_intersects(model: &Model, event: &Event, machine: MachineId) -> bool {
    event.region.iter().any(|element| match element {
        RegionElement::Stage(s) => model.machine_within(model.stage(*s).owner, machine),
        RegionElement::Flow(f) => {
            let flow = model.flow(*f);
            model.machine_within(model.stage(flow.src).owner, machine)
                || model.machine_within(model.stage(flow.dst).owner, machine)
        }
        RegionElement::Trigger(t) => {
            let trig = model.trigger(*t);
            model.machine_within(model.stage(trig.src).owner, machine)
                || model.machine_within(model.stage(trig.dst).owner, machine)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::AttrDecl;

    /// create -> release -> transfer => transfer -> receive -> process
    /// across two machines.
    fn chain_model() -> Model {
        let mut b = ModelBuilder::new("M");
        let root = b.root();
        let a = b.add_machine(root, "A", Span::default());
        let z = b.add_machine(root, "B", Span::default());
        b.add_thing(
            root,
            "part",
            vec![AttrDecl { name: "qty".into(), nonnegative: false }],
            Span::default(),
        );
        let c = b.add_stage(a, StageKind::Create, None, Span::default());
        let rel = b.add_stage(a, StageKind::Release, None, Span::default());
        let t1 = b.add_stage(a, StageKind::Transfer, None, Span::default());
        let t2 = b.add_stage(z, StageKind::Transfer, None, Span::default());
        let rec = b.add_stage(z, StageKind::Receive, None, Span::default());
        let p = b.add_stage(z, StageKind::Process, None, Span::default());
        b.add_flow("f1", c, rel, None, Span::default());
        b.add_flow("f2", rel, t1, None, Span::default());
        b.add_flow("f3", t1, t2, None, Span::default());
        b.add_flow("f4", t2, rec, None, Span::default());
        b.add_flow("f5", rec, p, None, Span::default());
        let m = b.finish().unwrap();
        assert!(m.validate().is_empty());
        m
    }

    #[test]
    fn single_chain_splices_to_create_process() {
        let model = chain_model();
        let simplified = simplify(&model).unwrap();
        let m = &simplified.model;
        assert_eq!(m.stages().len(), 2);
        assert!(m.is_stage_elided_form());
        assert_eq!(m.flows().len(), 1);
        let flow = &m.flows()[0];
        assert_eq!(m.stage(flow.src).kind, StageKind::Create);
        assert_eq!(m.stage(flow.dst).kind, StageKind::Process);
        assert!(m.validate_auto().is_empty());
        // The strict profile would reject the spliced cross-machine flow.
        assert!(!m.validate().is_empty());
    }

    #[test]
    fn model_without_elided_stages_is_a_fixed_point() {
        let mut b = ModelBuilder::new("M");
        let root = b.root();
        let a = b.add_machine(root, "A", Span::default());
        let c = b.add_stage(a, StageKind::Create, None, Span::default());
        let p = b.add_stage(a, StageKind::Process, None, Span::default());
        b.add_flow("f1", c, p, None, Span::default());
        let model = b.finish().unwrap();

        let once = simplify(&model).unwrap();
        assert_eq!(once.model.stages().len(), 2);
        assert_eq!(once.model.flows().len(), 1);
        let twice = simplify(&once.model).unwrap();
        assert_eq!(
            crate::printer::serialize(&crate::compile::document_to_ast(&Document {
                model: once.model.clone(),
                events: vec![],
                chronology: Chronology::default(),
                controls: vec![],
            })),
            crate::printer::serialize(&crate::compile::document_to_ast(&Document {
                model: twice.model.clone(),
                events: vec![],
                chronology: Chronology::default(),
                controls: vec![],
            }))
        );
    }

    #[test]
    fn guards_conjoin_across_the_chain() {
        let mut b = ModelBuilder::new("M");
        let root = b.root();
        let a = b.add_machine(root, "A", Span::default());
        let p = b.add_stage(a, StageKind::Process, None, Span::default());
        let rel = b.add_stage(a, StageKind::Release, None, Span::default());
        let t = b.add_stage(a, StageKind::Transfer, None, Span::default());
        let z = b.add_machine(root, "B", Span::default());
        let t2 = b.add_stage(z, StageKind::Transfer, None, Span::default());
        let rec = b.add_stage(z, StageKind::Receive, None, Span::default());
        let q = b.add_stage(z, StageKind::Process, None, Span::default());
        b.add_thing(
            root,
            "part",
            vec![AttrDecl { name: "x".into(), nonnegative: false }],
            Span::default(),
        );
        use crate::expr::{AttrExpr, CmpOp};
        b.add_flow(
            "g1",
            p,
            rel,
            Some(Predicate::single(AttrExpr::attr("x"), CmpOp::Ge, AttrExpr::Const(0))),
            Span::default(),
        );
        b.add_flow("g2", rel, t, None, Span::default());
        b.add_flow(
            "g3",
            t,
            t2,
            Some(Predicate::single(AttrExpr::attr("x"), CmpOp::Lt, AttrExpr::Const(9))),
            Span::default(),
        );
        b.add_flow("g4", t2, rec, None, Span::default());
        b.add_flow("g5", rec, q, None, Span::default());
        let model = b.finish().unwrap();
        assert!(model.validate().is_empty());

        let simplified = simplify(&model).unwrap();
        let flow = &simplified.model.flows()[0];
        let guard = flow.guard.as_ref().unwrap();
        assert_eq!(guard.to_string(), "x >= 0 and x < 9");
    }

    #[test]
    fn unguarded_branching_at_release_is_ambiguous() {
        let mut b = ModelBuilder::new("M");
        let root = b.root();
        let a = b.add_machine(root, "A", Span::default());
        let p = b.add_stage(a, StageKind::Process, None, Span::default());
        let rel = b.add_stage(a, StageKind::Release, None, Span::default());
        let t1 = b.add_stage(a, StageKind::Transfer, Some("x".into()), Span::default());
        let t2 = b.add_stage(a, StageKind::Transfer, Some("y".into()), Span::default());
        b.add_flow("f1", p, rel, None, Span::default());
        b.add_flow("f2", rel, t1, None, Span::default());
        b.add_flow("f3", rel, t2, None, Span::default());
        let model = b.finish().unwrap();
        let err = simplify(&model).unwrap_err();
        assert!(matches!(err, TransformError::AmbiguousSplice { .. }));
        assert!(err.to_string().contains("A.release"));
    }

    #[test]
    fn fully_guarded_transfer_branch_splices_per_route() {
        use crate::expr::{AttrExpr, CmpOp};
        let mut b = ModelBuilder::new("M");
        let root = b.root();
        b.add_thing(
            root,
            "part",
            vec![AttrDecl { name: "kind".into(), nonnegative: false }],
            Span::default(),
        );
        let a = b.add_machine(root, "A", Span::default());
        let p = b.add_stage(a, StageKind::Process, None, Span::default());
        let rel = b.add_stage(a, StageKind::Release, None, Span::default());
        let t = b.add_stage(a, StageKind::Transfer, None, Span::default());
        let m1 = b.add_machine(root, "B", Span::default());
        let t1 = b.add_stage(m1, StageKind::Transfer, None, Span::default());
        let rec1 = b.add_stage(m1, StageKind::Receive, None, Span::default());
        let q1 = b.add_stage(m1, StageKind::Process, None, Span::default());
        let m2 = b.add_machine(root, "C", Span::default());
        let t2 = b.add_stage(m2, StageKind::Transfer, None, Span::default());
        let rec2 = b.add_stage(m2, StageKind::Receive, None, Span::default());
        let q2 = b.add_stage(m2, StageKind::Process, None, Span::default());
        b.add_flow("f1", p, rel, None, Span::default());
        b.add_flow("f2", rel, t, None, Span::default());
        b.add_flow(
            "route_b",
            t,
            t1,
            Some(Predicate::single(AttrExpr::attr("kind"), CmpOp::Eq, AttrExpr::Const(0))),
            Span::default(),
        );
        b.add_flow(
            "route_c",
            t,
            t2,
            Some(Predicate::single(AttrExpr::attr("kind"), CmpOp::Eq, AttrExpr::Const(1))),
            Span::default(),
        );
        b.add_flow("f3", t1, rec1, None, Span::default());
        b.add_flow("f4", rec1, q1, None, Span::default());
        b.add_flow("f5", t2, rec2, None, Span::default());
        b.add_flow("f6", rec2, q2, None, Span::default());
        let model = b.finish().unwrap();
        assert!(model.validate().is_empty());

        let simplified = simplify(&model).unwrap();
        let m = &simplified.model;
        assert_eq!(m.flows().len(), 2);
        assert_eq!(m.flows()[0].guard.as_ref().unwrap().to_string(), "kind = 0");
        assert_eq!(m.flows()[1].guard.as_ref().unwrap().to_string(), "kind = 1");
        assert_eq!(m.stage_ref(m.flows()[0].dst), "B.process");
        assert_eq!(m.stage_ref(m.flows()[1].dst), "C.process");
    }

    #[test]
    fn fan_out_at_receive_splices_per_path() {
        let mut b = ModelBuilder::new("M");
        let root = b.root();
        let a = b.add_machine(root, "A", Span::default());
        let c = b.add_stage(a, StageKind::Create, None, Span::default());
        let rel = b.add_stage(a, StageKind::Release, None, Span::default());
        let t1 = b.add_stage(a, StageKind::Transfer, None, Span::default());
        let z = b.add_machine(root, "B", Span::default());
        let t2 = b.add_stage(z, StageKind::Transfer, None, Span::default());
        let rec = b.add_stage(z, StageKind::Receive, None, Span::default());
        let p1 = b.add_stage(z, StageKind::Process, Some("a".into()), Span::default());
        let rel2 = b.add_stage(z, StageKind::Release, None, Span::default());
        let t3 = b.add_stage(z, StageKind::Transfer, Some("out".into()), Span::default());
        let y = b.add_machine(root, "C", Span::default());
        let t4 = b.add_stage(y, StageKind::Transfer, None, Span::default());
        let rec2 = b.add_stage(y, StageKind::Receive, None, Span::default());
        let p2 = b.add_stage(y, StageKind::Process, None, Span::default());
        b.add_flow("f1", c, rel, None, Span::default());
        b.add_flow("f2", rel, t1, None, Span::default());
        b.add_flow("f3", t1, t2, None, Span::default());
        b.add_flow("f4", t2, rec, None, Span::default());
        // Receive fans out: one path processes locally, one forwards.
        b.add_flow("f5", rec, p1, None, Span::default());
        b.add_flow("f6", rec, rel2, None, Span::default());
        b.add_flow("f7", rel2, t3, None, Span::default());
        b.add_flow("f8", t3, t4, None, Span::default());
        b.add_flow("f9", t4, rec2, None, Span::default());
        b.add_flow("f10", rec2, p2, None, Span::default());
        let model = b.finish().unwrap();
        assert!(model.validate().is_empty());

        let simplified = simplify(&model).unwrap();
        let m = &simplified.model;
        // create -> process[a] and create -> C.process
        assert_eq!(m.flows().len(), 2);
        let dsts: BTreeSet<String> = m.flows().iter().map(|f| m.stage_ref(f.dst)).collect();
        assert_eq!(dsts, BTreeSet::from(["B.process[a]".to_string(), "C.process".to_string()]));
    }

    #[test]
    fn trigger_reanchors_upstream() {
        let mut b = ModelBuilder::new("M");
        let root = b.root();
        let a = b.add_machine(root, "A", Span::default());
        let c = b.add_stage(a, StageKind::Create, Some("in".into()), Span::default());
        let rel = b.add_stage(a, StageKind::Release, None, Span::default());
        let t = b.add_stage(a, StageKind::Transfer, None, Span::default());
        let z = b.add_machine(root, "B", Span::default());
        let t2 = b.add_stage(z, StageKind::Transfer, None, Span::default());
        let rec = b.add_stage(z, StageKind::Receive, None, Span::default());
        let p = b.add_stage(z, StageKind::Process, None, Span::default());
        let mint = b.add_stage(a, StageKind::Create, Some("copy".into()), Span::default());
        b.add_flow("f1", c, rel, None, Span::default());
        b.add_flow("f2", rel, t, None, Span::default());
        b.add_flow("f3", t, t2, None, Span::default());
        b.add_flow("f4", t2, rec, None, Span::default());
        b.add_flow("f5", rec, p, None, Span::default());
        // Trigger out of the (elided) transfer into a create.
        b.add_trigger("tg", t, mint, Span::default());
        let model = b.finish().unwrap();
        assert!(model.validate().is_empty());

        let simplified = simplify(&model).unwrap();
        let m = &simplified.model;
        assert_eq!(m.triggers().len(), 1);
        let tg = &m.triggers()[0];
        // Source re-anchored upstream to the surviving create.
        assert_eq!(m.stage_ref(tg.src), "A.create[in]");
        assert_eq!(m.stage_ref(tg.dst), "A.create[copy]");
    }

    #[test]
    fn empty_model_dot_has_one_cluster() {
        let model = ModelBuilder::new("Empty").finish().unwrap();
        let dot = to_dot(&model, &DotOptions::default());
        assert!(dot.starts_with("digraph \"Empty\" {"));
        assert_eq!(dot.matches("subgraph cluster_").count(), 1);
    }

    #[test]
    fn dot_uses_dashed_triggers_and_solid_flows() {
        let mut b = ModelBuilder::new("M");
        let root = b.root();
        let a = b.add_machine(root, "A", Span::default());
        let c = b.add_stage(a, StageKind::Create, None, Span::default());
        let p = b.add_stage(a, StageKind::Process, None, Span::default());
        let c2 = b.add_stage(a, StageKind::Create, Some("x".into()), Span::default());
        b.add_flow("f1", c, p, None, Span::default());
        b.add_trigger("t1", p, c2, Span::default());
        let model = b.finish().unwrap();
        let dot = to_dot(&model, &DotOptions::default());
        assert!(dot.contains("s0 -> s1 [label=\"f1\"];"));
        assert!(dot.contains("s1 -> s2 [style=dashed, label=\"t1\"];"));
    }

    #[test]
    fn class_of_machine_without_things_or_events_is_empty() {
        let model = chain_model();
        let b = model.machine_by_name("B").unwrap().id;
        let skeleton = to_class(&model, b, &[]);
        assert_eq!(skeleton.class_name, "B");
        assert!(skeleton.attributes.is_empty());
        assert!(skeleton.operations.is_empty());
    }

    #[test]
    fn unknown_machine_errors() {
        let model = chain_model();
        assert!(matches!(
            to_class_by_name(&model, "Nope", &[]),
            Err(TransformError::UnknownMachine(_))
        ));
    }
}
