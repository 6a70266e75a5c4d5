//! Source positions and diagnostics shared by the parser, the model
//! validator, and the behavior checkers.

use std::fmt;

/// Byte range into a source file.
///
/// Spans never participate in equality or hashing: two syntax trees that
/// differ only in where their nodes came from compare equal, which is what
/// round-trip tests want.
#[derive(Clone, Copy, Debug, Default)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn join(self, other: Span) -> Span {
        Span {
            start: self.start.min(other.start),
            end: self.end.max(other.end),
        }
    }
}

impl PartialEq for Span {
    fn eq(&self, _: &Span) -> bool {
        true
    }
}

impl Eq for Span {}

impl std::hash::Hash for Span {
    fn hash<H: std::hash::Hasher>(&self, _: &mut H) {}
}

/// A source file plus the line index needed to turn byte offsets into
/// 1-based line:column pairs.
#[derive(Clone, Debug)]
pub struct SourceFile {
    pub path: String,
    pub text: String,
    line_starts: Vec<usize>,
}

impl SourceFile {
    pub fn new(path: impl Into<String>, text: impl Into<String>) -> Self {
        let text = text.into();
        let mut line_starts = vec![0];
        for (i, b) in text.bytes().enumerate() {
            if b == b'\n' {
                line_starts.push(i + 1);
            }
        }
        SourceFile {
            path: path.into(),
            text,
            line_starts,
        }
    }

    /// 1-based (line, column) for a byte offset.
    pub fn line_col(&self, offset: usize) -> (usize, usize) {
        let line = match self.line_starts.binary_search(&offset) {
            Ok(l) => l,
            Err(l) => l - 1,
        };
        let col = self.text[self.line_starts[line]..offset].chars().count();
        (line + 1, col + 1)
    }
}

/// Rule identifiers carried by every diagnostic.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DiagCode {
    LexError,
    SyntaxError,
    DuplicateId,
    UnresolvedReference,
    NotATree,
    BadAdjacency,
    BoundaryViolation,
    BadTriggerTarget,
    BadAction,
    BadSink,
    UnknownAttribute,
    EmptyRegion,
    ForeignElement,
    DisconnectedRegion,
    BadAnchor,
    ChronologyConflict,
    UnknownEvent,
    BadThreshold,
}

impl fmt::Display for DiagCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self)
    }
}

/// One finding. Validation never aborts at the first problem; callers get
/// the full list, sorted by source position.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostic {
    pub code: DiagCode,
    pub message: String,
    pub span: Option<Span>,
}

impl Diagnostic {
    pub fn new(code: DiagCode, message: impl Into<String>) -> Self {
        Diagnostic {
            code,
            message: message.into(),
            span: None,
        }
    }

    pub fn with_span(code: DiagCode, message: impl Into<String>, span: Span) -> Self {
        Diagnostic {
            code,
            message: message.into(),
            span: Some(span),
        }
    }

    /// Render as `code line:col message` against the file the span points
    /// into. Positionless diagnostics render without the location.
    pub fn render(&self, source: Option<&SourceFile>) -> String {
        match (self.span, source) {
            (Some(span), Some(src)) => {
                let (line, col) = src.line_col(span.start);
                format!("{} {}:{} {}", self.code, line, col, self.message)
            }
            _ => format!("{} {}", self.code, self.message),
        }
    }
}

/// Deterministic order: by position, then code, then message.
pub fn sort_diagnostics(diags: &mut [Diagnostic]) {
    diags.sort_by(|a, b| {
        let ka = (a.span.map_or(usize::MAX, |s| s.start), a.code, &a.message);
        let kb = (b.span.map_or(usize::MAX, |s| s.start), b.code, &b.message);
        ka.cmp(&kb)
    });
}
