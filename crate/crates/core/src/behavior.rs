//! Events as regions of the static model, and chronologies as
//! permitted-successor relations with trace checking.
//!
//! An event is a named region (a subgraph of the static model) plus an
//! anchor stage that marks its occurrence. A chronology whitelists the
//! successors of each constrained event and can additionally forbid pairs
//! outright. Both checks are purely local to adjacent trace entries.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::diag::{sort_diagnostics, DiagCode, Diagnostic, Span};
use crate::model::{FlowId, Model, StageId, TriggerId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventId(pub u32);

impl EventId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for EventId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Region member: a stage, flow, or trigger of the static model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum RegionElement {
    Stage(StageId),
    Flow(FlowId),
    Trigger(TriggerId),
}

/// A behavioral unit: region, occurrence anchor, and a name. The event's
/// time submachine is realized operationally as the occurrence log the
/// simulator keeps per run.
#[derive(Clone, Debug)]
pub struct Event {
    pub id: EventId,
    pub name: String,
    pub description: String,
    pub region: Vec<RegionElement>,
    pub anchor: StageId,
    pub span: Span,
}

impl Event {
    pub fn region_stages(&self) -> impl Iterator<Item = StageId> + '_ {
        self.region.iter().filter_map(|e| match e {
            RegionElement::Stage(s) => Some(*s),
            _ => None,
        })
    }
}

/// Permitted/forbidden successor pairs over event ids.
///
/// Permitted edges are a whitelist per source event: an event with no
/// outgoing permitted edges constrains nothing.
#[derive(Clone, Debug, Default)]
pub struct Chronology {
    pub permitted: BTreeSet<(EventId, EventId)>,
    pub forbidden: BTreeSet<(EventId, EventId)>,
}

impl Chronology {
    pub fn permit(&mut self, from: EventId, to: EventId) {
        self.permitted.insert((from, to));
    }

    pub fn forbid(&mut self, from: EventId, to: EventId) {
        self.forbidden.insert((from, to));
    }

    fn constrains(&self, from: EventId) -> bool {
        self.permitted
            .range((from, EventId(0))..=(from, EventId(u32::MAX)))
            .next()
            .is_some()
    }

    /// Local acceptance: may `to` immediately follow `from`?
    pub fn allows(&self, from: EventId, to: EventId) -> bool {
        if self.forbidden.contains(&(from, to)) {
            return false;
        }
        !self.constrains(from) || self.permitted.contains(&(from, to))
    }

    pub fn validate(&self, events: &[Event]) -> Vec<Diagnostic> {
        let mut diags = Vec::new();
        let n = events.len() as u32;
        for &(a, b) in self.permitted.iter().chain(self.forbidden.iter()) {
            if a.0 >= n || b.0 >= n {
                diags.push(Diagnostic::new(
                    DiagCode::UnknownEvent,
                    format!("chronology references undeclared event pair ({}, {})", a, b),
                ));
            }
        }
        for pair in self.permitted.intersection(&self.forbidden) {
            let shown = |id: EventId| {
                events
                    .get(id.index())
                    .map(|e| e.name.clone())
                    .unwrap_or_else(|| id.to_string())
            };
            diags.push(Diagnostic::new(
                DiagCode::ChronologyConflict,
                format!(
                    "{} -> {} is both permitted and forbidden",
                    shown(pair.0),
                    shown(pair.1)
                ),
            ));
        }
        sort_diagnostics(&mut diags);
        diags
    }
}

/// Ordered occurrence log: (event, tick) with nondecreasing ticks.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord)]
pub struct Trace(pub Vec<(EventId, u64)>);

impl Trace {
    pub fn events(&self) -> impl Iterator<Item = EventId> + '_ {
        self.0.iter().map(|(e, _)| *e)
    }

    pub fn is_monotone(&self) -> bool {
        self.0.windows(2).all(|w| w[0].1 <= w[1].1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ViolationKind {
    Forbidden,
    NotPermitted,
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ViolationKind::Forbidden => write!(f, "forbidden"),
            ViolationKind::NotPermitted => write!(f, "not-permitted"),
        }
    }
}

/// One bad adjacent pair in a trace. `index` is the position of the first
/// event of the pair.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub index: usize,
    pub from: EventId,
    pub to: EventId,
    pub kind: ViolationKind,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum BehaviorError {
    #[error("unknown event `{0}`")]
    UnknownEvent(String),
    #[error("trace enumeration limited to max_len <= {limit}, got {got}")]
    LimitExceeded { limit: usize, got: usize },
}

/// Checks the region against the model: every element must belong to the
/// model, the region must be nonempty, its stages must be weakly connected
/// by flows, and the anchor must lie inside it.
pub fn validate_event(model: &Model, event: &Event) -> Vec<Diagnostic> {
    let mut diags = Vec::new();

    if event.region.is_empty() {
        diags.push(Diagnostic::with_span(
            DiagCode::EmptyRegion,
            format!("event {} has an empty region", event.name),
            event.span,
        ));
        sort_diagnostics(&mut diags);
        return diags;
    }

    let mut foreign = false;
    for element in &event.region {
        let ok = match element {
            RegionElement::Stage(s) => s.index() < model.stages().len(),
            RegionElement::Flow(f) => f.index() < model.flows().len(),
            RegionElement::Trigger(t) => t.index() < model.triggers().len(),
        };
        if !ok {
            foreign = true;
            diags.push(Diagnostic::with_span(
                DiagCode::ForeignElement,
                format!(
                    "event {} region references an element outside the model",
                    event.name
                ),
                event.span,
            ));
        }
    }
    if foreign {
        sort_diagnostics(&mut diags);
        return diags;
    }

    let stages: BTreeSet<StageId> = event.region_stages().collect();
    if !stages.contains(&event.anchor) {
        diags.push(Diagnostic::with_span(
            DiagCode::BadAnchor,
            format!(
                "event {} anchor {} is not a region stage",
                event.name,
                model.stage_ref(event.anchor)
            ),
            event.span,
        ));
    }

    if !region_connected(model, event, &stages) {
        diags.push(Diagnostic::with_span(
            DiagCode::DisconnectedRegion,
            format!("event {} region stages are not flow-connected", event.name),
            event.span,
        ));
    }

    sort_diagnostics(&mut diags);
    diags
}

/// Weak connectivity over the region's stages. Edges come from flows listed
/// in the region and from any model flow or trigger joining two region
/// stages directly.
fn region_connected(model: &Model, event: &Event, stages: &BTreeSet<StageId>) -> bool {
    if stages.len() <= 1 {
        return true;
    }
    let mut adj: BTreeMap<StageId, Vec<StageId>> = BTreeMap::new();
    let connect = |a: StageId, b: StageId, adj: &mut BTreeMap<StageId, Vec<StageId>>| {
        if stages.contains(&a) && stages.contains(&b) {
            adj.entry(a).or_default().push(b);
            adj.entry(b).or_default().push(a);
        }
    };
    for flow in model.flows() {
        connect(flow.src, flow.dst, &mut adj);
    }
    for trigger in model.triggers() {
        connect(trigger.src, trigger.dst, &mut adj);
    }
    for element in &event.region {
        match element {
            RegionElement::Flow(f) => {
                let flow = model.flow(*f);
                connect(flow.src, flow.dst, &mut adj);
            }
            RegionElement::Trigger(t) => {
                let trig = model.trigger(*t);
                connect(trig.src, trig.dst, &mut adj);
            }
            RegionElement::Stage(_) => {}
        }
    }

    let start = *stages.iter().next().expect("nonempty");
    let mut seen = BTreeSet::from([start]);
    let mut work = vec![start];
    while let Some(s) = work.pop() {
        if let Some(neighbors) = adj.get(&s) {
            for &n in neighbors {
                if seen.insert(n) {
                    work.push(n);
                }
            }
        }
    }
    seen.len() == stages.len()
}

/// A violation for each adjacent pair that is forbidden, or not whitelisted
/// while its source event is constrained. Empty iff the trace is accepted.
pub fn check_trace(
    chronology: &Chronology,
    trace: &Trace,
    event_count: usize,
) -> Result<Vec<Violation>, BehaviorError> {
    for (event, _) in &trace.0 {
        if event.index() >= event_count {
            return Err(BehaviorError::UnknownEvent(event.to_string()));
        }
    }
    let mut violations = Vec::new();
    for (i, pair) in trace.0.windows(2).enumerate() {
        let (from, to) = (pair[0].0, pair[1].0);
        if chronology.forbidden.contains(&(from, to)) {
            violations.push(Violation {
                index: i,
                from,
                to,
                kind: ViolationKind::Forbidden,
            });
        } else if !chronology.allows(from, to) {
            violations.push(Violation {
                index: i,
                from,
                to,
                kind: ViolationKind::NotPermitted,
            });
        }
    }
    Ok(violations)
}

pub const ENUMERATION_LIMIT: usize = 12;

/// Brute-force expansion of every acceptable trace that starts at `start`,
/// of length 1..=max_len. Ticks are assigned positionally. Exists as an
/// independent oracle for the local checker; the two must agree.
pub fn enumerate_traces(
    chronology: &Chronology,
    event_count: usize,
    start: EventId,
    max_len: usize,
) -> Result<BTreeSet<Trace>, BehaviorError> {
    if max_len > ENUMERATION_LIMIT {
        return Err(BehaviorError::LimitExceeded {
            limit: ENUMERATION_LIMIT,
            got: max_len,
        });
    }
    if start.index() >= event_count {
        return Err(BehaviorError::UnknownEvent(start.to_string()));
    }
    let mut out = BTreeSet::new();
    if max_len == 0 {
        return Ok(out);
    }
    let mut frontier = vec![vec![start]];
    while let Some(seq) = frontier.pop() {
        if seq.len() < max_len {
            let last = *seq.last().expect("nonempty");
            for next in (0..event_count as u32).map(EventId) {
                if chronology.allows(last, next) {
                    let mut longer = seq.clone();
                    longer.push(next);
                    frontier.push(longer);
                }
            }
        }
        out.insert(Trace(
            seq.into_iter()
                .enumerate()
                .map(|(i, e)| (e, i as u64))
                .collect(),
        ));
    }
    Ok(out)
}

/// Read a tab-separated trace (`event_name<TAB>tick` per line). Blank lines
/// and `#` comments are skipped.
pub fn read_trace(text: &str, events: &[Event]) -> Result<Trace, BehaviorError> {
    let mut entries = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split('\t');
        let name = parts.next().unwrap_or("");
        let tick: u64 = parts
            .next()
            .and_then(|t| t.trim().parse().ok())
            .ok_or_else(|| BehaviorError::UnknownEvent(format!("bad trace line `{}`", line)))?;
        let event = events
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| BehaviorError::UnknownEvent(name.to_string()))?;
        entries.push((event.id, tick));
    }
    Ok(Trace(entries))
}

/// Write a trace in the format `read_trace` accepts.
pub fn write_trace(trace: &Trace, events: &[Event]) -> String {
    let mut out = String::new();
    for (event, tick) in &trace.0 {
        out.push_str(&format!("{}\t{}\n", events[event.index()].name, tick));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    /// The six-event thermostat chronology: COOL (0), OFF (1), HEAT (2),
    /// SET (3), FAN ON (4), FAN AUTO (5). Switching between COOL and HEAT
    /// without passing through OFF is not permitted.
    fn thermostat_chronology() -> (Chronology, usize) {
        let e = |n: u32| EventId(n);
        let mut c = Chronology::default();
        for to in [e(0), e(2), e(4), e(5)] {
            c.permit(e(1), to);
        }
        for from in [e(0), e(2)] {
            c.permit(from, e(1));
            c.permit(from, e(3));
            c.permit(from, e(4));
            c.permit(from, e(5));
        }
        c.forbid(e(0), e(2));
        c.forbid(e(2), e(0));
        (c, 6)
    }

    fn trace_of(ids: &[u32]) -> Trace {
        Trace(
            ids.iter()
                .enumerate()
                .map(|(i, &e)| (EventId(e), i as u64))
                .collect(),
        )
    }

    #[test]
    fn cool_off_heat_is_accepted() {
        let (c, n) = thermostat_chronology();
        assert!(check_trace(&c, &trace_of(&[0, 1, 2]), n).unwrap().is_empty());
    }

    #[test]
    fn cool_directly_to_heat_is_one_violation() {
        let (c, n) = thermostat_chronology();
        let violations = check_trace(&c, &trace_of(&[0, 2]), n).unwrap();
        assert_eq!(violations.len(), 1);
        assert_eq!(violations[0].kind, ViolationKind::Forbidden);
        assert_eq!(violations[0].index, 0);
    }

    #[test]
    fn empty_trace_is_accepted() {
        let (c, n) = thermostat_chronology();
        assert!(check_trace(&c, &trace_of(&[]), n).unwrap().is_empty());
    }

    #[test]
    fn unknown_event_in_trace_errors() {
        let (c, n) = thermostat_chronology();
        assert!(matches!(
            check_trace(&c, &trace_of(&[0, 9]), n),
            Err(BehaviorError::UnknownEvent(_))
        ));
    }

    #[test]
    fn unconstrained_event_allows_anything() {
        let (c, n) = thermostat_chronology();
        // SET has no outgoing permitted edges, so it constrains nothing.
        assert!(check_trace(&c, &trace_of(&[3, 0]), n).unwrap().is_empty());
        assert!(check_trace(&c, &trace_of(&[3, 2]), n).unwrap().is_empty());
    }

    #[test]
    fn enumerate_from_off_contains_cool_and_heat_successors() {
        let (c, n) = thermostat_chronology();
        let traces = enumerate_traces(&c, n, EventId(1), 3).unwrap();
        assert!(traces.contains(&trace_of(&[1, 0])));
        assert!(traces.contains(&trace_of(&[1, 2])));
        // No enumerated trace has COOL and HEAT adjacent in either order.
        for t in &traces {
            let ids: Vec<u32> = t.events().map(|e| e.0).collect();
            for w in ids.windows(2) {
                assert!(
                    !((w[0] == 0 && w[1] == 2) || (w[0] == 2 && w[1] == 0)),
                    "bad trace {:?}",
                    ids
                );
            }
        }
    }

    #[test]
    fn enumerate_lengths_zero_and_one() {
        let (c, n) = thermostat_chronology();
        assert!(enumerate_traces(&c, n, EventId(1), 0).unwrap().is_empty());
        let ones = enumerate_traces(&c, n, EventId(1), 1).unwrap();
        assert_eq!(ones.len(), 1);
        assert!(ones.contains(&trace_of(&[1])));
    }

    #[test]
    fn enumerate_guards_the_limit() {
        let (c, n) = thermostat_chronology();
        assert!(matches!(
            enumerate_traces(&c, n, EventId(0), 13),
            Err(BehaviorError::LimitExceeded { .. })
        ));
    }

    /// Everything the enumerator returns passes the checker, and nothing
    /// the checker accepts (up to the length bound) is missed.
    #[test]
    fn enumeration_agrees_with_checker_up_to_length_four() {
        let (c, n) = thermostat_chronology();
        for start in 0..n as u32 {
            let enumerated = enumerate_traces(&c, n, EventId(start), 4).unwrap();
            for t in &enumerated {
                assert!(check_trace(&c, t, n).unwrap().is_empty());
            }
            let mut accepted = BTreeSet::new();
            let mut frontier = vec![vec![start]];
            while let Some(seq) = frontier.pop() {
                if seq.len() < 4 {
                    for next in 0..n as u32 {
                        let mut longer = seq.clone();
                        longer.push(next);
                        frontier.push(longer);
                    }
                }
                let t = trace_of(&seq);
                if check_trace(&c, &t, n).unwrap().is_empty() {
                    accepted.insert(t);
                }
            }
            assert_eq!(enumerated, accepted, "start {}", start);
        }
    }

    #[test]
    fn permitted_and_forbidden_overlap_is_flagged() {
        let mut c = Chronology::default();
        c.permit(EventId(0), EventId(1));
        c.forbid(EventId(0), EventId(1));
        let diags = c.validate(&[]);
        assert!(diags.iter().any(|d| d.code == DiagCode::ChronologyConflict));
    }

    #[test]
    fn chronology_conflict_still_rejects_the_pair() {
        // Forbidden wins over permitted.
        let mut c = Chronology::default();
        c.permit(EventId(0), EventId(1));
        c.forbid(EventId(0), EventId(1));
        let v = check_trace(&c, &trace_of(&[0, 1]), 2).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].kind, ViolationKind::Forbidden);
    }
}
