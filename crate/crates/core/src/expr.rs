//! Guard predicates and stage assignments.
//!
//! All attribute values are integers. Expressions are sums and differences
//! of attributes and constants; predicates are conjunctions of comparisons.

use std::collections::BTreeMap;
use std::fmt;

use crate::diag::Span;

/// Integer expression over token attributes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AttrExpr {
    Const(i64),
    Attr(String),
    Add(Box<AttrExpr>, Box<AttrExpr>),
    Sub(Box<AttrExpr>, Box<AttrExpr>),
}

impl AttrExpr {
    pub fn attr(name: impl Into<String>) -> Self {
        AttrExpr::Attr(name.into())
    }

    /// Evaluate against a token's attribute map. Attributes the token does
    /// not carry read as 0.
    pub fn eval(&self, attrs: &BTreeMap<String, i64>) -> i64 {
        match self {
            AttrExpr::Const(n) => *n,
            AttrExpr::Attr(name) => attrs.get(name).copied().unwrap_or(0),
            AttrExpr::Add(l, r) => l.eval(attrs) + r.eval(attrs),
            AttrExpr::Sub(l, r) => l.eval(attrs) - r.eval(attrs),
        }
    }

    /// Attribute names mentioned anywhere in the expression.
    pub fn attr_names<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            AttrExpr::Const(_) => {}
            AttrExpr::Attr(name) => out.push(name),
            AttrExpr::Add(l, r) | AttrExpr::Sub(l, r) => {
                l.attr_names(out);
                r.attr_names(out);
            }
        }
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, as_right_operand: bool) -> fmt::Result {
        match self {
            AttrExpr::Const(n) => write!(f, "{}", n),
            AttrExpr::Attr(name) => write!(f, "{}", name),
            AttrExpr::Add(l, r) | AttrExpr::Sub(l, r) => {
                // + and - share one precedence level and associate left, so
                // only a compound right operand needs parentheses.
                let op = if matches!(self, AttrExpr::Add(..)) { "+" } else { "-" };
                if as_right_operand {
                    write!(f, "(")?;
                }
                l.fmt_prec(f, false)?;
                write!(f, " {} ", op)?;
                r.fmt_prec(f, true)?;
                if as_right_operand {
                    write!(f, ")")?;
                }
                Ok(())
            }
        }
    }
}

impl fmt::Display for AttrExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, false)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn apply(self, lhs: i64, rhs: i64) -> bool {
        match self {
            CmpOp::Eq => lhs == rhs,
            CmpOp::Ne => lhs != rhs,
            CmpOp::Lt => lhs < rhs,
            CmpOp::Le => lhs <= rhs,
            CmpOp::Gt => lhs > rhs,
            CmpOp::Ge => lhs >= rhs,
        }
    }
}

impl fmt::Display for CmpOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Comparison {
    pub lhs: AttrExpr,
    pub op: CmpOp,
    pub rhs: AttrExpr,
}

impl Comparison {
    pub fn eval(&self, attrs: &BTreeMap<String, i64>) -> bool {
        self.op.apply(self.lhs.eval(attrs), self.rhs.eval(attrs))
    }
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.lhs, self.op, self.rhs)
    }
}

/// Conjunction of comparisons. Always nonempty.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Predicate {
    pub terms: Vec<Comparison>,
}

impl Predicate {
    pub fn single(lhs: AttrExpr, op: CmpOp, rhs: AttrExpr) -> Self {
        Predicate {
            terms: vec![Comparison { lhs, op, rhs }],
        }
    }

    /// Conjoin another predicate onto this one (used when splicing guarded
    /// flow chains).
    pub fn and(mut self, other: Predicate) -> Predicate {
        self.terms.extend(other.terms);
        self
    }

    pub fn eval(&self, attrs: &BTreeMap<String, i64>) -> bool {
        self.terms.iter().all(|c| c.eval(attrs))
    }

    pub fn attr_names<'a>(&'a self, out: &mut Vec<&'a str>) {
        for c in &self.terms {
            c.lhs.attr_names(out);
            c.rhs.attr_names(out);
        }
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.terms.iter().enumerate() {
            if i > 0 {
                write!(f, " and ")?;
            }
            write!(f, "{}", c)?;
        }
        Ok(())
    }
}

/// `target := expr`, executed when a token arrives at a Process or Create
/// stage.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Assignment {
    pub target: String,
    pub value: AttrExpr,
    pub span: Span,
}

impl Assignment {
    pub fn new(target: impl Into<String>, value: AttrExpr) -> Self {
        Assignment {
            target: target.into(),
            value,
            span: Span::default(),
        }
    }

    /// Compute the new value; the caller stores it and enforces any
    /// nonnegativity constraint on the target.
    pub fn eval(&self, attrs: &BTreeMap<String, i64>) -> i64 {
        self.value.eval(attrs)
    }
}

impl fmt::Display for Assignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} := {}", self.target, self.value)
    }
}
