//! Deterministic discrete-event execution of a validated model.
//!
//! Time is a logical tick; one tick is one global scheduler step. Within a
//! tick, tokens move in ascending token id, restricted to the front of
//! their stage's FIFO queue, taking the first guarded flow whose guard
//! holds (an unguarded flow acts as the default). Trigger activations
//! collected during the moves drain after them and take effect next tick.
//! Two runs over the same inputs are byte-identical.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::behavior::{check_trace, BehaviorError, Chronology, Event, EventId, Trace, Violation};
use crate::model::{Model, StageId, StageKind, ThingTypeId, Token, TokenId};

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// One token minted from outside the model at a Create stage.
#[derive(Clone, Debug)]
pub struct Injection {
    pub tick: u64,
    pub thing: ThingTypeId,
    pub stage: StageId,
    pub attrs: Vec<(String, i64)>,
}

#[derive(Clone, Debug)]
pub struct SimConfig {
    /// Reserved; runs are deterministic regardless.
    pub seed: u64,
    pub max_ticks: u64,
    pub injections: Vec<Injection>,
    /// Record a placement signature per tick (used by state-space checks).
    pub record_states: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            seed: 0,
            max_ticks: 200,
            injections: Vec::new(),
            record_states: false,
        }
    }
}

impl SimConfig {
    pub fn validate(&self, model: &Model) -> Result<(), SimError> {
        if self.max_ticks < 1 {
            return Err(SimError::InvalidConfig("max_ticks must be at least 1".into()));
        }
        for inj in &self.injections {
            if model.stage(inj.stage).kind != StageKind::Create {
                return Err(SimError::InvalidConfig(format!(
                    "injection stage {} is not a create stage",
                    model.stage_ref(inj.stage)
                )));
            }
        }
        Ok(())
    }
}

/// Parse a textual injection: `[tick:]thing[@Machine.kind[label]] [attr=value]...`
///
/// Without an explicit stage the unique Create stage labeled with the thing
/// name is used, falling back to the unique Create stage of a machine that
/// declares the thing.
pub fn parse_injection(model: &Model, spec: &str) -> Result<Injection, String> {
    let mut words = spec.split_whitespace();
    let head = words.next().ok_or("empty injection spec")?;

    let (tick, head) = match head.split_once(':') {
        Some((t, rest)) if !t.is_empty() && t.bytes().all(|b| b.is_ascii_digit()) => {
            (t.parse::<u64>().map_err(|e| e.to_string())?, rest)
        }
        _ => (0, head),
    };

    let (thing_name, stage_ref) = match head.split_once('@') {
        Some((t, s)) => (t, Some(s)),
        None => (head, None),
    };

    let thing = model
        .thing_by_name(thing_name)
        .ok_or_else(|| format!("unknown thing `{}`", thing_name))?;

    let stage = match stage_ref {
        Some(r) => {
            let s = model.resolve_stageref(r)?;
            if model.stage(s).kind != StageKind::Create {
                return Err(format!("injection stage `{}` is not a create stage", r));
            }
            s
        }
        None => infer_injection_stage(model, thing.id, thing_name)?,
    };

    let mut attrs = Vec::new();
    for word in words {
        let (name, value) = word
            .split_once('=')
            .ok_or_else(|| format!("expected `attr=value`, got `{}`", word))?;
        if thing.attr(name).is_none() {
            return Err(format!(
                "thing `{}` declares no attribute `{}`",
                thing_name, name
            ));
        }
        let value: i64 = value
            .parse()
            .map_err(|_| format!("bad integer `{}` for attribute `{}`", value, name))?;
        attrs.push((name.to_string(), value));
    }

    Ok(Injection {
        tick,
        thing: thing.id,
        stage,
        attrs,
    })
}

fn infer_injection_stage(
    model: &Model,
    thing: ThingTypeId,
    thing_name: &str,
) -> Result<StageId, String> {
    let labeled: Vec<StageId> = model
        .stages()
        .iter()
        .filter(|s| s.kind == StageKind::Create && s.label.as_deref() == Some(thing_name))
        .map(|s| s.id)
        .collect();
    if labeled.len() == 1 {
        return Ok(labeled[0]);
    }
    let owned: Vec<StageId> = model
        .stages()
        .iter()
        .filter(|s| {
            s.kind == StageKind::Create
                && model.machine(s.owner).thing_types.contains(&thing)
        })
        .map(|s| s.id)
        .collect();
    if owned.len() == 1 {
        return Ok(owned[0]);
    }
    Err(format!(
        "cannot infer a create stage for thing `{}`; use `{}@Machine.create[label]`",
        thing_name, thing_name
    ))
}

// ---------------------------------------------------------------------------
// Control rules
// ---------------------------------------------------------------------------

/// Temporal rule: warn when the gap between the latest `from_event` and the
/// next `to_event` exceeds `threshold` ticks.
#[derive(Clone, Debug)]
pub struct ControlRule {
    pub name: String,
    pub from_event: EventId,
    pub to_event: EventId,
    pub threshold: u64,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Warning {
    pub rule: String,
    pub raised_at: u64,
    pub elapsed: u64,
    pub message: String,
}

/// Elapsed ticks between event occurrences: closed once the target event
/// occurred, open (still counting) otherwise.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Elapsed {
    Closed(u64),
    Open(u64),
}

/// Ticks between the latest `from` occurrence and the first subsequent
/// `to` occurrence; `Open(now - latest_from)` while `to` has not yet
/// occurred. `None` when `from` never occurred (the rule is inert).
pub fn elapsed(
    trace: &Trace,
    from: EventId,
    to: EventId,
    now: u64,
    event_count: usize,
) -> Result<Option<Elapsed>, BehaviorError> {
    if from.index() >= event_count {
        return Err(BehaviorError::UnknownEvent(from.to_string()));
    }
    if to.index() >= event_count {
        return Err(BehaviorError::UnknownEvent(to.to_string()));
    }
    let Some(from_pos) = trace.0.iter().rposition(|(e, _)| *e == from) else {
        return Ok(None);
    };
    let from_tick = trace.0[from_pos].1;
    for (e, tick) in &trace.0[from_pos + 1..] {
        if *e == to {
            return Ok(Some(Elapsed::Closed(tick - from_tick)));
        }
    }
    Ok(Some(Elapsed::Open(now.saturating_sub(from_tick))))
}

// ---------------------------------------------------------------------------
// State
// ---------------------------------------------------------------------------

/// A pending trigger activation, carrying a snapshot of the token that
/// fired it.
#[derive(Clone, Debug)]
struct Activation {
    target: StageId,
    thing: ThingTypeId,
    attrs: BTreeMap<String, i64>,
}

#[derive(Clone, Debug, Default)]
struct RuleState {
    armed_at: Option<u64>,
    warned: bool,
}

/// Placement signature: (token, stage or despawned) in token order.
pub type StateSig = Vec<(u64, Option<u32>)>;

#[derive(Clone, Debug)]
pub struct SimState {
    pub tick: u64,
    pub tokens: BTreeMap<TokenId, Token>,
    pub occurrences: Trace,
    pub warnings: Vec<Warning>,
    queues: BTreeMap<StageId, VecDeque<TokenId>>,
    enabled_now: BTreeSet<StageId>,
    enabled_next: BTreeSet<StageId>,
    activations: VecDeque<Activation>,
    next_token: u64,
    next_injection: usize,
    fires_this_tick: BTreeSet<StageId>,
    /// Per event: region stages that fired since its last occurrence.
    event_fired: Vec<BTreeSet<StageId>>,
    rule_states: Vec<RuleState>,
    /// (tick, token, stage) logs; token counts change only through these.
    pub minted: Vec<(u64, TokenId, StageId)>,
    pub despawned: Vec<(u64, TokenId, StageId)>,
}

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("attribute `{attr}` on {stage} went negative ({value}) at tick {tick}")]
    AttributeUnderflow {
        attr: String,
        stage: String,
        value: i64,
        tick: u64,
    },
}

/// Everything `run` produces. Immutable once returned.
#[derive(Clone, Debug)]
pub struct SimResult {
    pub tokens: Vec<Token>,
    pub occurrences: Trace,
    pub warnings: Vec<Warning>,
    pub violations: Vec<Violation>,
    pub minted: Vec<(u64, TokenId, StageId)>,
    pub despawned: Vec<(u64, TokenId, StageId)>,
    pub ticks: u64,
    /// False when the run stopped at the tick limit with work left.
    pub quiescent: bool,
    pub state_log: Vec<StateSig>,
}

// ---------------------------------------------------------------------------
// Simulation
// ---------------------------------------------------------------------------

pub struct Simulation<'a> {
    pub model: &'a Model,
    pub events: &'a [Event],
    pub chronology: &'a Chronology,
    pub rules: &'a [ControlRule],
    pub config: SimConfig,
    gated: BTreeSet<StageId>,
    /// stage -> events whose region contains it.
    stage_events: BTreeMap<StageId, Vec<EventId>>,
    injections: Vec<Injection>,
}

impl<'a> Simulation<'a> {
    pub fn new(
        model: &'a Model,
        events: &'a [Event],
        chronology: &'a Chronology,
        rules: &'a [ControlRule],
        config: SimConfig,
    ) -> Result<Self, SimError> {
        config.validate(model)?;
        let mut stage_events: BTreeMap<StageId, Vec<EventId>> = BTreeMap::new();
        for event in events {
            for stage in event.region_stages() {
                stage_events.entry(stage).or_default().push(event.id);
            }
        }
        // Stable injection order: by tick, then declaration order.
        let mut injections = config.injections.clone();
        injections.sort_by_key(|i| i.tick);
        Ok(Simulation {
            model,
            events,
            chronology,
            rules,
            gated: model.gated_stages(),
            stage_events,
            injections,
            config,
        })
    }

    pub fn initial_state(&self) -> Result<SimState, SimError> {
        let mut state = SimState {
            tick: 0,
            tokens: BTreeMap::new(),
            occurrences: Trace::default(),
            warnings: Vec::new(),
            queues: BTreeMap::new(),
            enabled_now: BTreeSet::new(),
            enabled_next: BTreeSet::new(),
            activations: VecDeque::new(),
            next_token: 0,
            next_injection: 0,
            fires_this_tick: BTreeSet::new(),
            event_fired: vec![BTreeSet::new(); self.events.len()],
            rule_states: vec![RuleState::default(); self.rules.len()],
            minted: Vec::new(),
            despawned: Vec::new(),
        };
        self.deliver_injections(&mut state)?;
        self.detect_occurrences(&mut state);
        self.poll_rules(&mut state);
        Ok(state)
    }

    /// Advance one tick. Tokens minted this tick (injections and trigger
    /// mints) move no earlier than the next tick, matching how tick-0
    /// injections rest in the initial state.
    pub fn step(&self, state: &mut SimState) -> Result<(), SimError> {
        state.tick += 1;
        state.fires_this_tick.clear();
        state.enabled_now = std::mem::take(&mut state.enabled_next);

        self.move_tokens(state)?;
        self.deliver_injections(state)?;
        self.drain_activations(state)?;
        self.detect_occurrences(state);
        self.poll_rules(state);
        Ok(())
    }

    /// Execute until quiescence or the tick limit, then check the
    /// occurrence log against the chronology.
    pub fn run(&self) -> Result<SimResult, SimError> {
        let mut state = self.initial_state()?;
        let mut state_log = Vec::new();
        if self.config.record_states {
            state_log.push(signature(&state));
        }
        while state.tick < self.config.max_ticks && !self.is_quiescent(&state) {
            self.step(&mut state)?;
            if self.config.record_states {
                state_log.push(signature(&state));
            }
        }
        let quiescent = self.is_quiescent(&state);
        let violations = check_trace(self.chronology, &state.occurrences, self.events.len())
            .expect("occurrence log only contains declared events");
        Ok(SimResult {
            tokens: state.tokens.into_values().collect(),
            occurrences: state.occurrences,
            warnings: state.warnings,
            violations,
            minted: state.minted,
            despawned: state.despawned,
            ticks: state.tick,
            quiescent,
            state_log,
        })
    }

    /// Nothing movable, nothing pending, nothing scheduled.
    pub fn is_quiescent(&self, state: &SimState) -> bool {
        if state.next_injection < self.injections.len() {
            return false;
        }
        if !state.activations.is_empty() || !state.enabled_next.is_empty() {
            return false;
        }
        for (&stage, queue) in &state.queues {
            let Some(&front) = queue.front() else { continue };
            if self.gated.contains(&stage) && !state.enabled_next.contains(&stage) {
                continue;
            }
            let token = &state.tokens[&front];
            if self.choose_move(token).is_some() {
                return false;
            }
        }
        true
    }

    // -- phases ----------------------------------------------------------

    fn deliver_injections(&self, state: &mut SimState) -> Result<(), SimError> {
        while state.next_injection < self.injections.len()
            && self.injections[state.next_injection].tick <= state.tick
        {
            let inj = &self.injections[state.next_injection];
            state.next_injection += 1;
            let attrs = inj.attrs.iter().cloned().collect();
            self.mint(state, inj.thing, inj.stage, attrs)?;
        }
        Ok(())
    }

    /// Mint a token at a Create stage: schema attributes default to zero,
    /// the stage's assignments run on arrival.
    fn mint(
        &self,
        state: &mut SimState,
        thing: ThingTypeId,
        stage: StageId,
        attrs: BTreeMap<String, i64>,
    ) -> Result<TokenId, SimError> {
        let id = TokenId(state.next_token);
        state.next_token += 1;
        let mut full_attrs: BTreeMap<String, i64> = self
            .model
            .thing(thing)
            .attrs
            .iter()
            .map(|a| (a.name.clone(), 0))
            .collect();
        full_attrs.extend(attrs);
        let mut token = Token {
            id,
            thing_type: thing,
            stage,
            attrs: full_attrs,
            birth_tick: state.tick,
        };
        self.record_fire(state, stage);
        self.apply_actions(state.tick, &mut token, stage)?;
        state.minted.push((state.tick, id, stage));
        state.queues.entry(stage).or_default().push_back(id);
        state.tokens.insert(id, token);
        Ok(id)
    }

    /// The flow a token at its stage would take right now: the first
    /// guarded flow (declaration order) whose guard holds wins; an
    /// unguarded flow acts as the default when no guard holds. The
    /// destination's entry guard must also hold, else the token waits.
    fn choose_move(&self, token: &Token) -> Option<&crate::model::Flow> {
        let mut chosen = None;
        let mut default = None;
        for &fid in self.model.flows_from(token.stage) {
            let flow = self.model.flow(fid);
            match &flow.guard {
                Some(guard) => {
                    if guard.eval(&token.attrs) {
                        chosen = Some(flow);
                        break;
                    }
                }
                None => {
                    if default.is_none() {
                        default = Some(flow);
                    }
                }
            }
        }
        let flow = chosen.or(default)?;
        if let Some(entry) = &self.model.stage(flow.dst).guard {
            if !entry.eval(&token.attrs) {
                return None;
            }
        }
        Some(flow)
    }

    fn move_tokens(&self, state: &mut SimState) -> Result<(), SimError> {
        let ids: Vec<TokenId> = state.tokens.keys().copied().collect();
        for id in ids {
            let Some(token) = state.tokens.get(&id) else { continue };
            let stage = token.stage;

            // FIFO per stage: only the queue front may leave.
            if state.queues.get(&stage).and_then(|q| q.front()) != Some(&id) {
                continue;
            }
            if self.gated.contains(&stage) && !state.enabled_now.contains(&stage) {
                continue;
            }
            let Some(flow) = self.choose_move(token) else { continue };
            let (dst, src) = (flow.dst, stage);

            state.queues.get_mut(&src).expect("front checked").pop_front();
            self.fire_departure_triggers(state, src, id);

            if let Some(tok) = state.tokens.get_mut(&id) {
                tok.stage = dst;
            }
            self.record_fire(state, dst);
            let mut token = state.tokens.remove(&id).expect("token exists");
            self.apply_actions(state.tick, &mut token, dst)?;
            state.tokens.insert(id, token);

            if self.model.stage(dst).sink {
                // Despawning completes the sink stage too.
                self.fire_departure_triggers(state, dst, id);
                state.despawned.push((state.tick, id, dst));
                state.tokens.remove(&id);
            } else {
                state.queues.entry(dst).or_default().push_back(id);
            }
        }
        Ok(())
    }

    /// A trigger fires when a token completes (departs) its source stage.
    /// The activation snapshots the departing token's type and attributes.
    fn fire_departure_triggers(&self, state: &mut SimState, stage: StageId, token: TokenId) {
        if self.model.triggers_from(stage).is_empty() {
            return;
        }
        let (thing, attrs) = {
            let tok = &state.tokens[&token];
            (tok.thing_type, tok.attrs.clone())
        };
        for &tid in self.model.triggers_from(stage) {
            let trigger = self.model.trigger(tid);
            state.activations.push_back(Activation {
                target: trigger.dst,
                thing,
                attrs: attrs.clone(),
            });
        }
    }

    fn drain_activations(&self, state: &mut SimState) -> Result<(), SimError> {
        while let Some(activation) = state.activations.pop_front() {
            if self.model.stage(activation.target).kind == StageKind::Create {
                self.mint(state, activation.thing, activation.target, activation.attrs)?;
            } else {
                state.enabled_next.insert(activation.target);
            }
        }
        Ok(())
    }

    fn apply_actions(&self, tick: u64, token: &mut Token, stage: StageId) -> Result<(), SimError> {
        let st = self.model.stage(stage);
        if !matches!(st.kind, StageKind::Process | StageKind::Create) {
            return Ok(());
        }
        for action in &st.actions {
            let value = action.eval(&token.attrs);
            if value < 0 && self.model.attr_nonnegative(token.thing_type, &action.target) {
                return Err(SimError::AttributeUnderflow {
                    attr: action.target.clone(),
                    stage: self.model.stage_ref(stage),
                    value,
                    tick,
                });
            }
            token.attrs.insert(action.target.clone(), value);
        }
        Ok(())
    }

    fn record_fire(&self, state: &mut SimState, stage: StageId) {
        state.fires_this_tick.insert(stage);
        if let Some(events) = self.stage_events.get(&stage) {
            for &e in events {
                state.event_fired[e.index()].insert(stage);
            }
        }
    }

    /// An event occurs when its anchor fired this tick and every other
    /// region stage has fired since the event's previous occurrence.
    fn detect_occurrences(&self, state: &mut SimState) {
        for event in self.events {
            if !state.fires_this_tick.contains(&event.anchor) {
                continue;
            }
            let fired = &state.event_fired[event.id.index()];
            if event.region_stages().all(|s| fired.contains(&s)) {
                state.occurrences.0.push((event.id, state.tick));
                state.event_fired[event.id.index()].clear();
            }
        }
    }

    /// Rules poll every tick; at most one warning per (rule, arming).
    fn poll_rules(&self, state: &mut SimState) {
        let tick = state.tick;
        let first_new = state
            .occurrences
            .0
            .iter()
            .rposition(|(_, t)| *t != tick)
            .map_or(0, |i| i + 1);
        let new_occurrences: Vec<EventId> = state.occurrences.0[first_new..]
            .iter()
            .map(|(e, _)| *e)
            .collect();

        for (rule, rs) in self.rules.iter().zip(state.rule_states.iter_mut()) {
            for &event in &new_occurrences {
                if event == rule.from_event {
                    rs.armed_at = Some(tick);
                    rs.warned = false;
                } else if event == rule.to_event && rs.armed_at.is_some() {
                    rs.armed_at = None;
                }
            }
            if let Some(t0) = rs.armed_at {
                let open = tick - t0;
                if !rs.warned && open > rule.threshold {
                    state.warnings.push(Warning {
                        rule: rule.name.clone(),
                        raised_at: tick,
                        elapsed: open,
                        message: rule.message.clone(),
                    });
                    rs.warned = true;
                }
            }
        }
    }
}

fn signature(state: &SimState) -> StateSig {
    let mut sig: BTreeMap<u64, Option<u32>> = state
        .despawned
        .iter()
        .map(|(_, id, _)| (id.0, None))
        .collect();
    for (id, token) in &state.tokens {
        sig.insert(id.0, Some(token.stage.0));
    }
    sig.into_iter().collect()
}

// ---------------------------------------------------------------------------
// Report rendering
// ---------------------------------------------------------------------------

/// Plain-text run report: TOKENS, OCCURRENCES, WARNINGS, VIOLATIONS.
/// Tab-separated lines, stable ordering.
pub fn render_report(model: &Model, events: &[Event], result: &SimResult) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "# run ticks={} quiescent={} tokens={} despawned={}\n",
        result.ticks,
        result.quiescent,
        result.tokens.len(),
        result.despawned.len()
    ));
    out.push_str("TOKENS\n");
    for token in &result.tokens {
        out.push_str(&format!(
            "{}\t{}\t{}",
            token.id,
            model.thing(token.thing_type).name,
            model.stage_ref(token.stage)
        ));
        for (name, value) in &token.attrs {
            out.push_str(&format!("\t{}={}", name, value));
        }
        out.push('\n');
    }
    out.push_str("OCCURRENCES\n");
    for (event, tick) in &result.occurrences.0 {
        out.push_str(&format!("{}\t{}\n", events[event.index()].name, tick));
    }
    out.push_str("WARNINGS\n");
    for w in &result.warnings {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            w.rule, w.raised_at, w.elapsed, w.message
        ));
    }
    out.push_str("VIOLATIONS\n");
    for v in &result.violations {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            v.index,
            events[v.from.index()].name,
            events[v.to.index()].name,
            v.kind
        ));
    }
    out
}
