//! Engine-wide error type with stable error codes and source locations.

use std::fmt;

/// Location of a token or expression in the query text.
///
/// `offset`/`length` are byte positions; `line`/`column` are 1-based and
/// count characters on the line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Span {
    pub line: u32,
    pub column: u32,
    pub offset: u32,
    pub length: u32,
}

impl Span {
    pub fn new(line: u32, column: u32, offset: u32, length: u32) -> Self {
        Span { line, column, offset, length }
    }

    /// Span covering both `self` and `other` (assumes `other` ends later).
    pub fn to(self, other: Span) -> Span {
        let end = other.offset + other.length;
        Span { length: end.saturating_sub(self.offset), ..self }
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}", self.line, self.column)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ErrorCode {
    Syntax,
    UnresolvedVariable,
    JsonParse,
    Io,
    Type,
    Ebv,
    Cast,
    Treat,
    DivByZero,
    NonatomicKey,
    MultiItemKey,
    OrderIncomparable,
    Annotate,
    InvalidArgument,
    Unsupported,
}

impl ErrorCode {
    /// Stable name used in CLI output and by try/catch error matching.
    pub fn name(self) -> &'static str {
        match self {
            ErrorCode::Syntax => "SYNTAX_ERROR",
            ErrorCode::UnresolvedVariable => "UNRESOLVED_VARIABLE",
            ErrorCode::JsonParse => "JSON_PARSE_ERROR",
            ErrorCode::Io => "IO_ERROR",
            ErrorCode::Type => "TYPE_ERROR",
            ErrorCode::Ebv => "EBV_ERROR",
            ErrorCode::Cast => "CAST_ERROR",
            ErrorCode::Treat => "TREAT_ERROR",
            ErrorCode::DivByZero => "DIV_BY_ZERO",
            ErrorCode::NonatomicKey => "NONATOMIC_KEY_ERROR",
            ErrorCode::MultiItemKey => "MULTI_ITEM_KEY_ERROR",
            ErrorCode::OrderIncomparable => "ORDER_INCOMPARABLE",
            ErrorCode::Annotate => "ANNOTATE_ERROR",
            ErrorCode::InvalidArgument => "INVALID_ARGUMENT",
            ErrorCode::Unsupported => "UNSUPPORTED_FEATURE",
        }
    }

    /// Static errors are raised before execution and cannot be caught by
    /// try/catch.
    pub fn is_static(self) -> bool {
        matches!(
            self,
            ErrorCode::Syntax | ErrorCode::UnresolvedVariable | ErrorCode::Unsupported
        )
    }
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Error {
    pub code: ErrorCode,
    pub message: String,
    pub span: Option<Span>,
}

impl Error {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Error { code, message: message.into(), span: None }
    }

    pub fn with_span(mut self, span: Span) -> Self {
        self.span = Some(span);
        self
    }

    /// Attach a span only if the error does not carry one yet, so the
    /// innermost location wins.
    pub fn or_span(mut self, span: Span) -> Self {
        if self.span.is_none() {
            self.span = Some(span);
        }
        self
    }

    pub fn is_catchable(&self) -> bool {
        !self.code.is_static()
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code, self.message)?;
        if let Some(span) = self.span {
            write!(f, " (at {})", span)?;
        }
        Ok(())
    }
}

impl std::error::Error for Error {}

pub type Result<T> = std::result::Result<T, Error>;

