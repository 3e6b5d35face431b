//! Parse engine for MCLML, the small markup dialect used for `Data` content.
//!
//! MCLML has elements, double-quoted attributes, text, `<!-- -->` comments
//! and self-closing tags. There are no entities, namespaces, CDATA sections
//! or processing instructions. Documents are checked against a line-oriented
//! grammar (see [`grammar`]) while the DOM is built through a
//! [`ContentSink`].

pub mod dom;
pub mod error;
pub mod grammar;
pub mod parser;
pub mod scanner;
pub mod sink;
pub mod token;

pub use dom::{serialize_canonical, DomBuilder, DomNode};
pub use error::{GrammarError, LexError, ParseError, ValidationError, ValidationReason};
pub use grammar::{load_grammar, AttrUse, ContentModel, DtdGrammar};
pub use parser::{parse_document, validate_tokens, ParseStats, Parser, Phase, Source};
pub use scanner::{tokenize, ScanConfig, Scanner};
pub use sink::{ContentSink, NullSink, RecordingSink};
pub use token::{Attributes, Position, Token, TokenKind};
