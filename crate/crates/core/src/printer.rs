//! Canonical text form for syntax trees. `parse(serialize(ast)) == ast`,
//! and serializing twice yields byte-identical output.

use crate::ast::*;
use crate::expr::Assignment;

const INDENT: &str = "  ";

pub fn serialize(ast: &Ast) -> String {
    let mut out = String::new();
    out.push_str(&format!("model {} {{\n", ast.model_name));
    for item in &ast.items {
        match item {
            ModelItem::Machine(m) => write_machine(&mut out, m, 1),
            ModelItem::Thing(t) => write_thing(&mut out, t, 1),
            ModelItem::Flow(f) => write_flow(&mut out, f, 1),
            ModelItem::Trigger(t) => write_trigger(&mut out, t, 1),
        }
    }
    out.push_str("}\n");

    for event in &ast.events {
        out.push('\n');
        write_event(&mut out, event);
    }

    if let Some(chron) = &ast.chronology {
        out.push('\n');
        out.push_str("chronology {\n");
        for edge in &chron.edges {
            if edge.forbidden {
                out.push_str(&format!("{}forbid {} -> {};\n", INDENT, edge.from, edge.to));
            } else {
                out.push_str(&format!("{}{} -> {};\n", INDENT, edge.from, edge.to));
            }
        }
        out.push_str("}\n");
    }

    for control in &ast.controls {
        out.push('\n');
        out.push_str(&format!("control {} {{\n", control.name));
        out.push_str(&format!(
            "{}when elapsed({} -> {}) > {} emit {}\n",
            INDENT,
            control.from_event,
            control.to_event,
            control.threshold,
            quote(&control.message)
        ));
        out.push_str("}\n");
    }

    out
}

fn pad(out: &mut String, depth: usize) {
    for _ in 0..depth {
        out.push_str(INDENT);
    }
}

fn quote(s: &str) -> String {
    let mut q = String::with_capacity(s.len() + 2);
    q.push('"');
    for c in s.chars() {
        match c {
            '"' => q.push_str("\\\""),
            '\\' => q.push_str("\\\\"),
            _ => q.push(c),
        }
    }
    q.push('"');
    q
}

fn write_machine(out: &mut String, m: &MachineDecl, depth: usize) {
    pad(out, depth);
    out.push_str(&format!("machine {} {{\n", m.name));
    for item in &m.items {
        match item {
            MachineItem::Stage(s) => write_stage(out, s, depth + 1),
            MachineItem::Machine(sub) => write_machine(out, sub, depth + 1),
            MachineItem::Thing(t) => write_thing(out, t, depth + 1),
        }
    }
    pad(out, depth);
    out.push_str("}\n");
}

fn write_thing(out: &mut String, t: &ThingDecl, depth: usize) {
    pad(out, depth);
    out.push_str(&format!("thing {}", t.name));
    if !t.attrs.is_empty() {
        out.push_str(" { ");
        for (i, a) in t.attrs.iter().enumerate() {
            if i > 0 {
                out.push_str(", ");
            }
            out.push_str(&a.name);
            if a.nonnegative {
                out.push_str(" >= 0");
            }
        }
        out.push_str(" }");
    }
    out.push('\n');
}

fn write_stage(out: &mut String, s: &StageDecl, depth: usize) {
    pad(out, depth);
    out.push_str(s.kind.keyword());
    if let Some(label) = &s.label {
        out.push_str(&format!("[{}]", label));
    }
    if s.sink {
        out.push_str(" sink");
    }
    if let Some(guard) = &s.guard {
        out.push_str(&format!(" guard {}", guard));
    }
    if !s.actions.is_empty() {
        out.push_str(" do ");
        out.push_str(&join_assignments(&s.actions));
    }
    out.push('\n');
}

fn join_assignments(actions: &[Assignment]) -> String {
    actions
        .iter()
        .map(|a| a.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

fn write_flow(out: &mut String, f: &FlowDecl, depth: usize) {
    pad(out, depth);
    out.push_str(&format!("flow {}: {} -> {}", f.name, f.src, f.dst));
    if let Some(guard) = &f.guard {
        out.push_str(&format!(" when {}", guard));
    }
    out.push('\n');
}

fn write_trigger(out: &mut String, t: &TriggerDecl, depth: usize) {
    pad(out, depth);
    out.push_str(&format!("trigger {}: {} ~> {}\n", t.name, t.src, t.dst));
}

fn write_event(out: &mut String, e: &EventDecl) {
    out.push_str(&format!("event {} {} {{\n", e.name, quote(&e.description)));
    pad(out, 1);
    out.push_str("region: ");
    for (i, item) in e.region.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        match item {
            RegionItem::Stage(s) => out.push_str(&s.to_string()),
            RegionItem::Arc(name, _) => out.push_str(name),
        }
    }
    out.push('\n');
    if let Some(anchor) = &e.anchor {
        pad(out, 1);
        out.push_str(&format!("anchor: {}\n", anchor));
    }
    out.push_str("}\n");
}
