//! Seeded random generation of valid models and documents.
//!
//! Construction is correct by design: stages get unique labels, flows only
//! run from lower to higher stage index (so the flow graph is acyclic and
//! every run terminates), intra-machine pairs come from the adjacency
//! table, cross-machine pairs are transfer to transfer, and Release and
//! Transfer stages keep fan-out at most one so splicing stays unambiguous.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use tm_core::behavior::{Chronology, Event, EventId, RegionElement};
use tm_core::diag::Span;
use tm_core::expr::{AttrExpr, CmpOp, Predicate};
use tm_core::model::{AttrDecl, intra_machine_flow_allowed, Model, ModelBuilder, StageId, StageKind};
use tm_core::sim::{ControlRule, Injection};
use tm_core::{Document, ThingTypeId};

pub struct GenOptions {
    pub max_stages: usize,
    pub max_tokens: usize,
    pub with_guards: bool,
    pub with_triggers: bool,
    pub with_sinks: bool,
}

impl Default for GenOptions {
    fn default() -> Self {
        GenOptions {
            max_stages: 6,
            max_tokens: 2,
            with_guards: true,
            with_triggers: false,
            with_sinks: true,
        }
    }
}

pub struct GeneratedCase {
    pub model: Model,
    pub injections: Vec<Injection>,
    pub max_ticks: u64,
}

pub fn random_model(rng: &mut ChaCha8Rng, opts: &GenOptions) -> GeneratedCase {
    let mut b = ModelBuilder::new("Gen");
    let root = b.root();
    b.add_thing(
        root,
        "part",
        vec![
            AttrDecl { name: "a".into(), nonnegative: false },
            AttrDecl { name: "b".into(), nonnegative: false },
        ],
        Span::default(),
    );

    let n_machines = rng.gen_range(1..=2usize);
    let machines: Vec<_> = (0..n_machines)
        .map(|i| b.add_machine(root, format!("M{}", i), Span::default()))
        .collect();

    let n_stages = rng.gen_range(1..=opts.max_stages);
    let mut stages: Vec<(StageId, StageKind, usize)> = Vec::new();
    for i in 0..n_stages {
        let kind = *[
            StageKind::Create,
            StageKind::Process,
            StageKind::Release,
            StageKind::Transfer,
            StageKind::Receive,
        ]
        .choose(rng)
        .unwrap();
        let machine_idx = rng.gen_range(0..machines.len());
        let id = b.add_stage(
            machines[machine_idx],
            kind,
            Some(format!("s{}", i)),
            Span::default(),
        );
        stages.push((id, kind, machine_idx));
    }

    // Forward-only flows keep the graph acyclic.
    let mut flow_count = 0usize;
    let mut out_degree = vec![0usize; n_stages];
    let mut has_incoming = vec![false; n_stages];
    for i in 0..n_stages {
        for j in (i + 1)..n_stages {
            let (_, ki, mi) = stages[i];
            let (_, kj, mj) = stages[j];
            let permitted = if mi == mj {
                intra_machine_flow_allowed(ki, kj)
            } else {
                ki == StageKind::Transfer && kj == StageKind::Transfer
            };
            if !permitted || !rng.gen_bool(0.55) {
                continue;
            }
            // Cap Release/Transfer fan-out so chains splice cleanly.
            if matches!(ki, StageKind::Release | StageKind::Transfer) && out_degree[i] >= 1 {
                continue;
            }
            let guard = if opts.with_guards && rng.gen_bool(0.3) {
                let attr = if rng.gen_bool(0.5) { "a" } else { "b" };
                let op = *[CmpOp::Eq, CmpOp::Ne, CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge]
                    .choose(rng)
                    .unwrap();
                Some(Predicate::single(
                    AttrExpr::attr(attr),
                    op,
                    AttrExpr::Const(rng.gen_range(0..=5)),
                ))
            } else {
                None
            };
            b.add_flow(
                format!("f{}", flow_count),
                stages[i].0,
                stages[j].0,
                guard,
                Span::default(),
            );
            flow_count += 1;
            out_degree[i] += 1;
            has_incoming[j] = true;
        }
    }

    if opts.with_sinks {
        for i in 0..n_stages {
            if stages[i].1 == StageKind::Transfer && out_degree[i] == 0 && rng.gen_bool(0.5) {
                b.set_stage_sink(stages[i].0);
            }
        }
    }

    if opts.with_triggers {
        let activatable: Vec<StageId> = stages
            .iter()
            .enumerate()
            .filter(|(i, (_, kind, _))| *kind == StageKind::Create || out_degree[*i] > 0)
            .map(|(_, (id, _, _))| *id)
            .collect();
        if !activatable.is_empty() {
            for t in 0..rng.gen_range(0..=2usize) {
                let src = stages.choose(rng).unwrap().0;
                let dst = *activatable.choose(rng).unwrap();
                if src != dst {
                    b.add_trigger(format!("t{}", t), src, dst, Span::default());
                }
            }
        }
    }

    let model = b.finish().expect("generated names are unique");
    let diags = model.validate();
    assert!(diags.is_empty(), "generator produced an invalid model: {:#?}", diags);

    let creates: Vec<StageId> = model
        .stages()
        .iter()
        .filter(|s| s.kind == StageKind::Create)
        .map(|s| s.id)
        .collect();
    let mut injections = Vec::new();
    if !creates.is_empty() {
        for _ in 0..rng.gen_range(0..=opts.max_tokens) {
            injections.push(Injection {
                tick: rng.gen_range(0..=2),
                thing: ThingTypeId(0),
                stage: *creates.choose(rng).unwrap(),
                attrs: vec![
                    ("a".into(), rng.gen_range(0..=5)),
                    ("b".into(), rng.gen_range(0..=5)),
                ],
            });
        }
    }

    GeneratedCase {
        model,
        injections,
        max_ticks: 30,
    }
}

/// A random document: model plus syntactically valid events, chronology,
/// and control rules (round-trip tests only care about syntax).
pub fn random_document(rng: &mut ChaCha8Rng, opts: &GenOptions) -> Document {
    let case = random_model(rng, opts);
    let model = case.model;

    let mut events = Vec::new();
    let stage_count = model.stages().len();
    if stage_count > 0 {
        for i in 0..rng.gen_range(0..=3usize) {
            let mut region: Vec<RegionElement> = Vec::new();
            let n = rng.gen_range(1..=stage_count.min(3));
            let mut picked: Vec<StageId> = model.stages().iter().map(|s| s.id).collect();
            picked.shuffle(rng);
            picked.truncate(n);
            for s in &picked {
                region.push(RegionElement::Stage(*s));
            }
            if !model.flows().is_empty() && rng.gen_bool(0.4) {
                region.push(RegionElement::Flow(
                    model.flows().choose(rng).unwrap().id,
                ));
            }
            events.push(Event {
                id: EventId(i as u32),
                name: format!("E{}", i),
                description: format!("generated event {}", i),
                region,
                anchor: picked[0],
                span: Span::default(),
            });
        }
    }

    let mut chronology = Chronology::default();
    if events.len() >= 2 {
        for _ in 0..rng.gen_range(0..=4) {
            let a = EventId(rng.gen_range(0..events.len()) as u32);
            let b = EventId(rng.gen_range(0..events.len()) as u32);
            if rng.gen_bool(0.75) {
                if !chronology.forbidden.contains(&(a, b)) {
                    chronology.permit(a, b);
                }
            } else if !chronology.permitted.contains(&(a, b)) {
                chronology.forbid(a, b);
            }
        }
    }

    let mut controls = Vec::new();
    if !events.is_empty() {
        for i in 0..rng.gen_range(0..=2usize) {
            controls.push(ControlRule {
                name: format!("c{}", i),
                from_event: EventId(rng.gen_range(0..events.len()) as u32),
                to_event: EventId(rng.gen_range(0..events.len()) as u32),
                threshold: rng.gen_range(1..=9),
                message: format!("rule {} tripped", i),
            });
        }
    }

    Document {
        model,
        events,
        chronology,
        controls,
    }
}
