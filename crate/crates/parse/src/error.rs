use std::fmt;

use thiserror::Error;

use crate::parser::Phase;
use crate::token::Position;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GrammarError {
    #[error("grammar syntax error on line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("element {0:?} is referenced but never declared")]
    UndeclaredElement(String),
}

/// Scanner failure at a specific input location. `byte` is `None` when the
/// input ended inside an unfinished construct.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("lexical error at {position}: {}", describe_byte(*.byte))]
pub struct LexError {
    pub position: Position,
    pub byte: Option<u8>,
}

fn describe_byte(byte: Option<u8>) -> String {
    match byte {
        Some(b) if b.is_ascii_graphic() => format!("unexpected {:?}", b as char),
        Some(b) => format!("unexpected byte 0x{b:02x}"),
        None => "unexpected end of input".to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValidationReason {
    ChildNotAllowed,
    MissingRequiredAttr,
    UndeclaredAttr,
    MissingChild,
    UnknownElement,
    UnbalancedTag,
    WrongRoot,
}

impl fmt::Display for ValidationReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ValidationReason::ChildNotAllowed => "child not allowed",
            ValidationReason::MissingRequiredAttr => "missing required attribute",
            ValidationReason::UndeclaredAttr => "undeclared attribute",
            ValidationReason::MissingChild => "missing child element",
            ValidationReason::UnknownElement => "unknown element",
            ValidationReason::UnbalancedTag => "unbalanced tag",
            ValidationReason::WrongRoot => "wrong root",
        };
        f.write_str(s)
    }
}

/// Grammar violation found while iterating tokens. `path` is the chain of
/// element names from the root to the offending node, `/`-separated.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("validation error at {position} ({path}): {reason}")]
pub struct ValidationError {
    pub path: String,
    pub reason: ValidationReason,
    pub position: Position,
}

#[derive(Debug, Error)]
pub enum ParseError {
    #[error(transparent)]
    Lex(#[from] LexError),
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error("invalid UTF-8 in token starting at {0}")]
    Utf8(Position),
    #[error("{operation} is not allowed in phase {phase:?}")]
    LifecycleViolation {
        operation: &'static str,
        phase: Phase,
    },
    #[error("input stream: {0}")]
    Io(#[from] std::io::Error),
}

impl ParseError {
    /// Input location of the fault, when the error has one.
    pub fn position(&self) -> Option<Position> {
        match self {
            ParseError::Lex(e) => Some(e.position),
            ParseError::Validation(e) => Some(e.position),
            ParseError::Utf8(p) => Some(*p),
            ParseError::LifecycleViolation { .. } | ParseError::Io(_) => None,
        }
    }
}
