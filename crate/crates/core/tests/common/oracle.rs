//! Independent restatement of the token-placement semantics, used as a
//! brute-force oracle against the simulator. Written directly from the
//! scheduling rules — ascending token id, FIFO queue front only, first
//! satisfied guard else first unguarded flow, sinks despawn on arrival,
//! injections mint after the moves — and deliberately shares none of the
//! simulator's code, including the expression evaluator.

use std::collections::BTreeMap;

use tm_core::expr::{AttrExpr, CmpOp, Predicate};
use tm_core::model::{Model, StageKind};
use tm_core::sim::Injection;

#[derive(Clone, Debug)]
struct OToken {
    id: u64,
    stage: Option<u32>,
    attrs: BTreeMap<String, i64>,
}

pub struct Oracle<'a> {
    model: &'a Model,
    injections: Vec<Injection>,
}

/// (token id, stage index or despawned) in ascending token order.
pub type Placement = Vec<(u64, Option<u32>)>;

impl<'a> Oracle<'a> {
    pub fn new(model: &'a Model, injections: &[Injection]) -> Self {
        let mut injections = injections.to_vec();
        injections.sort_by_key(|i| i.tick);
        Oracle { model, injections }
    }

    /// Placement signature per tick, index 0 being the initial state.
    pub fn run(&self, max_ticks: u64) -> Vec<Placement> {
        let mut tokens: Vec<OToken> = Vec::new();
        let mut queues: BTreeMap<u32, Vec<u64>> = BTreeMap::new();
        let mut next_injection = 0usize;
        let mut tick = 0u64;

        let mut mint = |tokens: &mut Vec<OToken>,
                        queues: &mut BTreeMap<u32, Vec<u64>>,
                        injection: &Injection| {
            let id = tokens.len() as u64;
            let mut attrs: BTreeMap<String, i64> = self
                .model
                .thing(injection.thing)
                .attrs
                .iter()
                .map(|a| (a.name.clone(), 0))
                .collect();
            for (k, v) in &injection.attrs {
                attrs.insert(k.clone(), *v);
            }
            let stage = injection.stage.0;
            queues.entry(stage).or_default().push(id);
            tokens.push(OToken {
                id,
                stage: Some(stage),
                attrs,
            });
        };

        while next_injection < self.injections.len() && self.injections[next_injection].tick == 0 {
            mint(&mut tokens, &mut queues, &self.injections[next_injection]);
            next_injection += 1;
        }

        let mut log = vec![snapshot(&tokens)];
        while tick < max_ticks {
            let movable = tokens
                .iter()
                .any(|t| self.next_hop(t, &queues).is_some());
            if !movable && next_injection >= self.injections.len() {
                break;
            }
            tick += 1;

            for i in 0..tokens.len() {
                let Some(hop) = self.next_hop(&tokens[i], &queues) else {
                    continue;
                };
                let from = tokens[i].stage.expect("movable implies placed");
                let queue = queues.get_mut(&from).expect("token is queued");
                assert_eq!(queue.first(), Some(&tokens[i].id));
                queue.remove(0);
                let dst = self.model.stages()[hop as usize].clone();
                if dst.sink {
                    tokens[i].stage = None;
                } else {
                    tokens[i].stage = Some(hop);
                    queues.entry(hop).or_default().push(tokens[i].id);
                }
            }

            while next_injection < self.injections.len()
                && self.injections[next_injection].tick <= tick
            {
                mint(&mut tokens, &mut queues, &self.injections[next_injection]);
                next_injection += 1;
            }

            log.push(snapshot(&tokens));
        }
        log
    }

    /// Destination stage index if the token can move this tick.
    fn next_hop(&self, token: &OToken, queues: &BTreeMap<u32, Vec<u64>>) -> Option<u32> {
        let stage = token.stage?;
        if queues.get(&stage)?.first() != Some(&token.id) {
            return None;
        }
        let mut fallback = None;
        for flow in self.model.flows() {
            if flow.src.0 != stage {
                continue;
            }
            match &flow.guard {
                Some(guard) => {
                    if eval_pred(guard, &token.attrs) {
                        return Some(flow.dst.0);
                    }
                }
                None => {
                    if fallback.is_none() {
                        fallback = Some(flow.dst.0);
                    }
                }
            }
        }
        fallback
    }
}

fn snapshot(tokens: &[OToken]) -> Placement {
    tokens.iter().map(|t| (t.id, t.stage)).collect()
}

// Hand-rolled evaluation so the oracle does not lean on expr::eval.
fn eval_pred(pred: &Predicate, attrs: &BTreeMap<String, i64>) -> bool {
    pred.terms.iter().all(|cmp| {
        let lhs = eval_expr(&cmp.lhs, attrs);
        let rhs = eval_expr(&cmp.rhs, attrs);
        match cmp.op {
            CmpOp::Eq => lhs == rhs,
            CmpOp::Ne => lhs != rhs,
            CmpOp::Lt => lhs < rhs,
            CmpOp::Le => lhs <= rhs,
            CmpOp::Gt => lhs > rhs,
            CmpOp::Ge => lhs >= rhs,
        }
    })
}

fn eval_expr(expr: &AttrExpr, attrs: &BTreeMap<String, i64>) -> i64 {
    match expr {
        AttrExpr::Const(n) => *n,
        AttrExpr::Attr(name) => attrs.get(name).copied().unwrap_or(0),
        AttrExpr::Add(l, r) => eval_expr(l, attrs) + eval_expr(r, attrs),
        AttrExpr::Sub(l, r) => eval_expr(l, attrs) - eval_expr(r, attrs),
    }
}

// The oracle ignores stage kinds except through the model's flow table;
// this keeps StageKind in the imports honest.
#[allow(dead_code)]
fn is_create(kind: StageKind) -> bool {
    kind == StageKind::Create
}
