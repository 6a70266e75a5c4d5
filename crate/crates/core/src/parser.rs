//! Recursive-descent parser for the `.tm` language. See `docs/grammar.md`
//! for the grammar.

use crate::ast::*;
use crate::diag::{DiagCode, Diagnostic, SourceFile, Span};
use crate::expr::{Assignment, AttrExpr, CmpOp, Comparison, Predicate};
use crate::lexer::{lex, Tok, Token};
use crate::model::StageKind;

/// Result of [`parse_expression`]: the text was either a predicate or an
/// assignment.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ParsedExpr {
    Predicate(Predicate),
    Assignment(Assignment),
}

/// Parse a whole `.tm` file.
pub fn parse(source: &SourceFile) -> Result<Ast, Vec<Diagnostic>> {
    let tokens = lex(&source.text).map_err(|d| vec![d])?;
    let mut p = Parser { tokens, pos: 0 };
    p.file().map_err(|d| vec![d])
}

/// Parse a standalone guard predicate or assignment, e.g.
/// `remaining := current - requested` or `remaining >= 0`.
pub fn parse_expression(text: &str) -> Result<ParsedExpr, Diagnostic> {
    let tokens = lex(text)?;
    let mut p = Parser { tokens, pos: 0 };
    let is_assign = p
        .tokens
        .iter()
        .any(|t| matches!(t.tok, Tok::Assign));
    let out = if is_assign {
        ParsedExpr::Assignment(p.assignment()?)
    } else {
        ParsedExpr::Predicate(p.predicate()?)
    };
    p.expect_eof()?;
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn peek2(&self) -> &Tok {
        let i = (self.pos + 1).min(self.tokens.len() - 1);
        &self.tokens[i].tok
    }

    fn span(&self) -> Span {
        self.tokens[self.pos].span
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, expected: &str) -> Diagnostic {
        Diagnostic::with_span(
            DiagCode::SyntaxError,
            format!("expected {}, found {}", expected, self.peek()),
            self.span(),
        )
    }

    fn expect(&mut self, tok: Tok, expected: &str) -> Result<Span, Diagnostic> {
        if *self.peek() == tok {
            Ok(self.bump().span)
        } else {
            Err(self.error(expected))
        }
    }

    fn expect_eof(&mut self) -> Result<(), Diagnostic> {
        if matches!(self.peek(), Tok::Eof) {
            Ok(())
        } else {
            Err(self.error("end of input"))
        }
    }

    /// Any identifier, including stage-kind words (labels and names may
    /// shadow nothing: keywords are recognized by position).
    fn ident(&mut self, what: &str) -> Result<(String, Span), Diagnostic> {
        match self.peek() {
            Tok::Ident(s) => {
                let s = s.clone();
                let span = self.bump().span;
                Ok((s, span))
            }
            _ => Err(self.error(what)),
        }
    }

    fn keyword(&mut self, kw: &str) -> Result<Span, Diagnostic> {
        match self.peek() {
            Tok::Ident(s) if s == kw => Ok(self.bump().span),
            _ => Err(self.error(&format!("`{}`", kw))),
        }
    }

    fn at_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn stage_kind(&self) -> Option<StageKind> {
        if let Tok::Ident(s) = self.peek() {
            StageKind::ALL.into_iter().find(|k| k.keyword() == s)
        } else {
            None
        }
    }

    fn string(&mut self, what: &str) -> Result<(String, Span), Diagnostic> {
        match self.peek() {
            Tok::Str(s) => {
                let s = s.clone();
                let span = self.bump().span;
                Ok((s, span))
            }
            _ => Err(self.error(what)),
        }
    }

    fn int(&mut self, what: &str) -> Result<(u64, Span), Diagnostic> {
        match self.peek() {
            Tok::Int(n) => {
                let n = *n;
                let span = self.bump().span;
                Ok((n, span))
            }
            _ => Err(self.error(what)),
        }
    }

    // -- file ----------------------------------------------------------

    fn file(&mut self) -> Result<Ast, Diagnostic> {
        let start = self.keyword("model")?;
        let (model_name, _) = self.ident("model name")?;
        self.expect(Tok::LBrace, "`{`")?;
        let mut items = Vec::new();
        while !matches!(self.peek(), Tok::RBrace) {
            items.push(self.model_item()?);
        }
        let mut end = self.expect(Tok::RBrace, "`}`")?;

        let mut events = Vec::new();
        while self.at_keyword("event") {
            let e = self.event()?;
            end = e.span;
            events.push(e);
        }

        let chronology = if self.at_keyword("chronology") {
            let c = self.chronology()?;
            end = c.span;
            Some(c)
        } else {
            None
        };

        let mut controls = Vec::new();
        while self.at_keyword("control") {
            let c = self.control()?;
            end = c.span;
            controls.push(c);
        }

        self.expect_eof()?;
        Ok(Ast {
            model_name,
            items,
            events,
            chronology,
            controls,
            span: start.join(end),
        })
    }

    fn model_item(&mut self) -> Result<ModelItem, Diagnostic> {
        if self.at_keyword("machine") {
            Ok(ModelItem::Machine(self.machine()?))
        } else if self.at_keyword("thing") {
            Ok(ModelItem::Thing(self.thing()?))
        } else if self.at_keyword("flow") {
            Ok(ModelItem::Flow(self.flow()?))
        } else if self.at_keyword("trigger") {
            Ok(ModelItem::Trigger(self.trigger()?))
        } else {
            Err(self.error("`machine`, `thing`, `flow`, or `trigger`"))
        }
    }

    fn machine(&mut self) -> Result<MachineDecl, Diagnostic> {
        let start = self.keyword("machine")?;
        let (name, _) = self.ident("machine name")?;
        self.expect(Tok::LBrace, "`{`")?;
        let mut items = Vec::new();
        loop {
            if self.at_keyword("machine") {
                items.push(MachineItem::Machine(self.machine()?));
            } else if self.at_keyword("thing") {
                items.push(MachineItem::Thing(self.thing()?));
            } else if self.stage_kind().is_some() {
                items.push(MachineItem::Stage(self.stage()?));
            } else {
                break;
            }
        }
        let end = self.expect(Tok::RBrace, "a stage, `machine`, `thing`, or `}`")?;
        Ok(MachineDecl {
            name,
            items,
            span: start.join(end),
        })
    }

    fn thing(&mut self) -> Result<ThingDecl, Diagnostic> {
        let start = self.keyword("thing")?;
        let (name, mut end) = self.ident("thing name")?;
        let mut attrs = Vec::new();
        if matches!(self.peek(), Tok::LBrace) {
            self.bump();
            loop {
                let (attr_name, attr_span) = self.ident("attribute name")?;
                let mut nonnegative = false;
                if matches!(self.peek(), Tok::Ge) {
                    self.bump();
                    let (bound, bound_span) = self.int("`0`")?;
                    if bound != 0 {
                        return Err(Diagnostic::with_span(
                            DiagCode::SyntaxError,
                            "only `>= 0` is supported as an attribute bound",
                            bound_span,
                        ));
                    }
                    nonnegative = true;
                }
                attrs.push(AttrDeclAst {
                    name: attr_name,
                    nonnegative,
                    span: attr_span,
                });
                if matches!(self.peek(), Tok::Comma) {
                    self.bump();
                } else {
                    break;
                }
            }
            end = self.expect(Tok::RBrace, "`,` or `}`")?;
        }
        Ok(ThingDecl {
            name,
            attrs,
            span: start.join(end),
        })
    }

    fn stage(&mut self) -> Result<StageDecl, Diagnostic> {
        let kind = self.stage_kind().expect("caller checked");
        let start = self.bump().span;
        let mut end = start;
        let mut label = None;
        if matches!(self.peek(), Tok::LBracket) {
            self.bump();
            let (l, _) = self.ident("stage label")?;
            label = Some(l);
            end = self.expect(Tok::RBracket, "`]`")?;
        }
        let mut sink = false;
        if self.at_keyword("sink") {
            end = self.bump().span;
            sink = true;
        }
        let mut guard = None;
        if self.at_keyword("guard") {
            self.bump();
            let p = self.predicate()?;
            end = self.tokens[self.pos - 1].span;
            guard = Some(p);
        }
        let mut actions = Vec::new();
        if self.at_keyword("do") {
            self.bump();
            actions.push(self.assignment()?);
            while matches!(self.peek(), Tok::Semi) {
                self.bump();
                actions.push(self.assignment()?);
            }
            end = self.tokens[self.pos - 1].span;
        }
        Ok(StageDecl {
            kind,
            label,
            sink,
            guard,
            actions,
            span: start.join(end),
        })
    }

    fn stageref(&mut self) -> Result<StageRef, Diagnostic> {
        let (machine, start) = self.ident("machine name")?;
        self.expect(Tok::Dot, "`.`")?;
        let kind = self
            .stage_kind()
            .ok_or_else(|| self.error("a stage kind"))?;
        let mut end = self.bump().span;
        let mut label = None;
        if matches!(self.peek(), Tok::LBracket) {
            self.bump();
            let (l, _) = self.ident("stage label")?;
            label = Some(l);
            end = self.expect(Tok::RBracket, "`]`")?;
        }
        Ok(StageRef {
            machine,
            kind,
            label,
            span: start.join(end),
        })
    }

    fn flow(&mut self) -> Result<FlowDecl, Diagnostic> {
        let start = self.keyword("flow")?;
        let (name, _) = self.ident("flow name")?;
        self.expect(Tok::Colon, "`:`")?;
        let src = self.stageref()?;
        self.expect(Tok::Arrow, "`->`")?;
        let dst = self.stageref()?;
        let mut end = dst.span;
        let mut guard = None;
        if self.at_keyword("when") {
            self.bump();
            guard = Some(self.predicate()?);
            end = self.tokens[self.pos - 1].span;
        }
        Ok(FlowDecl {
            name,
            src,
            dst,
            guard,
            span: start.join(end),
        })
    }

    fn trigger(&mut self) -> Result<TriggerDecl, Diagnostic> {
        let start = self.keyword("trigger")?;
        let (name, _) = self.ident("trigger name")?;
        self.expect(Tok::Colon, "`:`")?;
        let src = self.stageref()?;
        self.expect(Tok::Squiggle, "`~>`")?;
        let dst = self.stageref()?;
        let span = start.join(dst.span);
        Ok(TriggerDecl { name, src, dst, span })
    }

    fn event(&mut self) -> Result<EventDecl, Diagnostic> {
        let start = self.keyword("event")?;
        let (name, _) = self.ident("event name")?;
        let (description, _) = self.string("event description string")?;
        self.expect(Tok::LBrace, "`{`")?;
        self.keyword("region")?;
        self.expect(Tok::Colon, "`:`")?;
        let mut region = vec![self.region_item()?];
        while matches!(self.peek(), Tok::Comma) {
            self.bump();
            region.push(self.region_item()?);
        }
        let mut anchor = None;
        if self.at_keyword("anchor") {
            self.bump();
            self.expect(Tok::Colon, "`:`")?;
            anchor = Some(self.stageref()?);
        }
        let end = self.expect(Tok::RBrace, "`,`, `anchor`, or `}`")?;
        Ok(EventDecl {
            name,
            description,
            region,
            anchor,
            span: start.join(end),
        })
    }

    fn region_item(&mut self) -> Result<RegionItem, Diagnostic> {
        // `Name.` starts a stage reference; a bare name is a flow/trigger.
        if matches!(self.peek(), Tok::Ident(_)) && matches!(self.peek2(), Tok::Dot) {
            Ok(RegionItem::Stage(self.stageref()?))
        } else {
            let (name, span) = self.ident("stage reference or arc name")?;
            Ok(RegionItem::Arc(name, span))
        }
    }

    fn chronology(&mut self) -> Result<ChronologyDecl, Diagnostic> {
        let start = self.keyword("chronology")?;
        self.expect(Tok::LBrace, "`{`")?;
        let mut edges = Vec::new();
        while !matches!(self.peek(), Tok::RBrace) {
            let forbidden = if self.at_keyword("forbid") {
                self.bump();
                true
            } else {
                false
            };
            let (from, from_span) = self.ident("event name")?;
            self.expect(Tok::Arrow, "`->`")?;
            let (to, _) = self.ident("event name")?;
            let end = self.expect(Tok::Semi, "`;`")?;
            edges.push(ChronologyEdge {
                from,
                to,
                forbidden,
                span: from_span.join(end),
            });
        }
        let end = self.expect(Tok::RBrace, "`}`")?;
        Ok(ChronologyDecl {
            edges,
            span: start.join(end),
        })
    }

    fn control(&mut self) -> Result<ControlDecl, Diagnostic> {
        let start = self.keyword("control")?;
        let (name, _) = self.ident("control rule name")?;
        self.expect(Tok::LBrace, "`{`")?;
        self.keyword("when")?;
        self.keyword("elapsed")?;
        self.expect(Tok::LParen, "`(`")?;
        let (from_event, _) = self.ident("event name")?;
        self.expect(Tok::Arrow, "`->`")?;
        let (to_event, _) = self.ident("event name")?;
        self.expect(Tok::RParen, "`)`")?;
        self.expect(Tok::Gt, "`>`")?;
        let (threshold, _) = self.int("tick threshold")?;
        self.keyword("emit")?;
        let (message, _) = self.string("warning message string")?;
        let end = self.expect(Tok::RBrace, "`}`")?;
        Ok(ControlDecl {
            name,
            from_event,
            to_event,
            threshold,
            message,
            span: start.join(end),
        })
    }

    // -- expressions ----------------------------------------------------

    fn predicate(&mut self) -> Result<Predicate, Diagnostic> {
        let mut terms = vec![self.comparison()?];
        while self.at_keyword("and") {
            self.bump();
            terms.push(self.comparison()?);
        }
        Ok(Predicate { terms })
    }

    fn comparison(&mut self) -> Result<Comparison, Diagnostic> {
        let lhs = self.expr()?;
        let op = match self.peek() {
            Tok::Eq => CmpOp::Eq,
            Tok::Ne => CmpOp::Ne,
            Tok::Lt => CmpOp::Lt,
            Tok::Le => CmpOp::Le,
            Tok::Gt => CmpOp::Gt,
            Tok::Ge => CmpOp::Ge,
            _ => return Err(self.error("a comparison operator")),
        };
        self.bump();
        let rhs = self.expr()?;
        Ok(Comparison { lhs, op, rhs })
    }

    fn assignment(&mut self) -> Result<Assignment, Diagnostic> {
        let (target, start) = self.ident("attribute name")?;
        self.expect(Tok::Assign, "`:=`")?;
        let value = self.expr()?;
        let end = self.tokens[self.pos - 1].span;
        Ok(Assignment {
            target,
            value,
            span: start.join(end),
        })
    }

    // Left-associative; + and - share one precedence level.
    fn expr(&mut self) -> Result<AttrExpr, Diagnostic> {
        let mut lhs = self.term()?;
        loop {
            let add = match self.peek() {
                Tok::Plus => true,
                Tok::Minus => false,
                _ => break,
            };
            self.bump();
            let rhs = self.term()?;
            lhs = if add {
                AttrExpr::Add(Box::new(lhs), Box::new(rhs))
            } else {
                AttrExpr::Sub(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<AttrExpr, Diagnostic> {
        match self.peek() {
            Tok::Int(n) => {
                let n = *n as i64;
                self.bump();
                Ok(AttrExpr::Const(n))
            }
            Tok::Ident(_) => {
                let (name, _) = self.ident("attribute")?;
                Ok(AttrExpr::Attr(name))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            _ => Err(self.error("an integer, attribute, or `(`")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn src(text: &str) -> SourceFile {
        SourceFile::new("test.tm", text)
    }

    #[test]
    fn empty_model_parses() {
        let ast = parse(&src("model Empty { }")).unwrap();
        assert_eq!(ast.model_name, "Empty");
        assert!(ast.items.is_empty());
        assert!(ast.events.is_empty());
        assert!(ast.chronology.is_none());
    }

    #[test]
    fn truncated_flow_is_a_syntax_error_at_end_of_input() {
        let err = parse(&src("model M { flow f1: A.release ->")).unwrap_err();
        assert_eq!(err.len(), 1);
        assert_eq!(err[0].code, DiagCode::SyntaxError);
        // The error points at the end of the input.
        let source = src("model M { flow f1: A.release ->");
        assert_eq!(err[0].span.unwrap().start, source.text.len());
    }

    #[test]
    fn stage_with_everything() {
        let text = "model M { machine A { process[check] guard x >= 0 do y := x - 1; z := y + 2 } }";
        let ast = parse(&src(text)).unwrap();
        let ModelItem::Machine(m) = &ast.items[0] else { panic!() };
        let MachineItem::Stage(s) = &m.items[0] else { panic!() };
        assert_eq!(s.kind, StageKind::Process);
        assert_eq!(s.label.as_deref(), Some("check"));
        assert!(s.guard.is_some());
        assert_eq!(s.actions.len(), 2);
    }

    #[test]
    fn parse_expression_assignment_remaining() {
        let got = parse_expression("remaining := current - requested").unwrap();
        let ParsedExpr::Assignment(a) = got else { panic!() };
        assert_eq!(a.target, "remaining");
        assert_eq!(
            a.value,
            AttrExpr::Sub(
                Box::new(AttrExpr::attr("current")),
                Box::new(AttrExpr::attr("requested"))
            )
        );
    }

    #[test]
    fn parse_expression_assignment_pending() {
        let got = parse_expression("pending := requested - current").unwrap();
        let ParsedExpr::Assignment(a) = got else { panic!() };
        assert_eq!(a.target, "pending");
        assert_eq!(
            a.value,
            AttrExpr::Sub(
                Box::new(AttrExpr::attr("requested")),
                Box::new(AttrExpr::attr("current"))
            )
        );
    }

    #[test]
    fn parse_expression_predicate() {
        let got = parse_expression("remaining >= 0").unwrap();
        let ParsedExpr::Predicate(p) = got else { panic!() };
        assert_eq!(p.terms.len(), 1);
        assert_eq!(p.terms[0].op, CmpOp::Ge);
        assert_eq!(p.terms[0].lhs, AttrExpr::attr("remaining"));
        assert_eq!(p.terms[0].rhs, AttrExpr::Const(0));
    }

    #[test]
    fn event_with_anchor() {
        let text = r#"model M { }
event E1 "something" { region: A.create[X], f1 anchor: A.create[X] }"#;
        let ast = parse(&src(text)).unwrap();
        assert_eq!(ast.events.len(), 1);
        assert_eq!(ast.events[0].region.len(), 2);
        assert!(ast.events[0].anchor.is_some());
    }

    #[test]
    fn chronology_with_forbid() {
        let text = "model M { }\nchronology { E1 -> E2; forbid E1 -> E3; }";
        let ast = parse(&src(text)).unwrap();
        let c = ast.chronology.unwrap();
        assert_eq!(c.edges.len(), 2);
        assert!(!c.edges[0].forbidden);
        assert!(c.edges[1].forbidden);
    }

    #[test]
    fn control_rule() {
        let text = r#"model M { }
control c1 { when elapsed(E14 -> E19) > 5 emit "order overdue" }"#;
        let ast = parse(&src(text)).unwrap();
        assert_eq!(ast.controls.len(), 1);
        assert_eq!(ast.controls[0].threshold, 5);
        assert_eq!(ast.controls[0].message, "order overdue");
    }
}
