//! The parse engine and its lifecycle.
//!
//! A [`Parser`] moves through five phases in a fixed order:
//!
//! 1. `Constructed`: grammar and sink attached.
//! 2. `StreamOpen`: an input source is attached.
//! 3. `Tokenizing`: bytes are pushed through the scanner until end of input.
//! 4. `Iterating`: tokens are validated against the grammar and replayed
//!    into the sink, producing the DOM.
//! 5. `Destroyed`: buffers released, statistics handed back.
//!
//! Any call made out of order fails with `LifecycleViolation` and leaves the
//! parser untouched.

use std::fs::File;
use std::io::Read;
use std::path::PathBuf;

use crate::dom::{DomBuilder, DomNode};
use crate::error::{ParseError, ValidationError, ValidationReason};
use crate::grammar::{ContentModel, DtdGrammar};
use crate::scanner::{ScanConfig, Scanner};
use crate::sink::ContentSink;
use crate::token::{is_space, Attributes, Position, Token, TokenKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Phase {
    Constructed,
    StreamOpen,
    Tokenizing,
    Iterating,
    Destroyed,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ParseStats {
    pub tokens: usize,
    pub nodes: usize,
    pub bytes_consumed: u64,
}

/// Where the document bytes come from.
pub enum Source {
    /// Bytes will be supplied through [`Parser::tokenize_push`].
    Push,
    Memory(Vec<u8>),
    File(PathBuf),
    Reader(Box<dyn Read + Send>),
}

impl std::fmt::Debug for Source {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Source::Push => f.write_str("Push"),
            Source::Memory(b) => write!(f, "Memory({} bytes)", b.len()),
            Source::File(p) => write!(f, "File({})", p.display()),
            Source::Reader(_) => f.write_str("Reader"),
        }
    }
}

enum OpenSource {
    Push,
    Memory(Vec<u8>),
    Reader(Box<dyn Read + Send>),
}

const READ_BLOCK: usize = 4096;

pub struct Parser<'g, S> {
    grammar: &'g DtdGrammar,
    sink: S,
    config: ScanConfig,
    phase: Phase,
    source: Option<OpenSource>,
    scanner: Scanner,
    tokens: Vec<Token>,
    saw_eof: bool,
    stats: ParseStats,
}

impl<'g, S: ContentSink> Parser<'g, S> {
    /// Object construction phase.
    pub fn construct(grammar: &'g DtdGrammar, sink: S) -> Self {
        Self::with_config(grammar, sink, ScanConfig::default())
    }

    pub fn with_config(grammar: &'g DtdGrammar, sink: S, config: ScanConfig) -> Self {
        Parser {
            grammar,
            sink,
            config,
            phase: Phase::Constructed,
            source: None,
            scanner: Scanner::new(config),
            tokens: Vec::new(),
            saw_eof: false,
            stats: ParseStats::default(),
        }
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn stats(&self) -> ParseStats {
        self.stats
    }

    pub fn sink(&self) -> &S {
        &self.sink
    }

    pub fn into_sink(self) -> S {
        self.sink
    }

    /// Tokens produced so far.
    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    fn require(&self, operation: &'static str, allowed: &[Phase]) -> Result<(), ParseError> {
        if allowed.contains(&self.phase) {
            Ok(())
        } else {
            Err(ParseError::LifecycleViolation {
                operation,
                phase: self.phase,
            })
        }
    }

    /// Input stream phase. A file that cannot be opened leaves the phase
    /// unchanged.
    pub fn open_stream(&mut self, source: Source) -> Result<(), ParseError> {
        self.require("open_stream", &[Phase::Constructed])?;
        let open = match source {
            Source::Push => OpenSource::Push,
            Source::Memory(bytes) => OpenSource::Memory(bytes),
            Source::File(path) => OpenSource::Reader(Box::new(File::open(path)?)),
            Source::Reader(r) => OpenSource::Reader(r),
        };
        self.source = Some(open);
        self.phase = Phase::StreamOpen;
        Ok(())
    }

    /// Pushes bytes through the scanner and returns the tokens they completed.
    pub fn tokenize_push(&mut self, bytes: &[u8]) -> Result<Vec<Token>, ParseError> {
        self.require("tokenize_push", &[Phase::StreamOpen, Phase::Tokenizing])?;
        if self.saw_eof {
            return Err(ParseError::LifecycleViolation {
                operation: "tokenize_push",
                phase: self.phase,
            });
        }
        self.phase = Phase::Tokenizing;
        let mut fresh = Vec::new();
        let result = self.scanner.push(bytes, &mut fresh);
        self.absorb(&fresh);
        result.map(|_| fresh)
    }

    /// Marks end of input, returning any trailing text plus `Eof`.
    pub fn end_of_input(&mut self) -> Result<Vec<Token>, ParseError> {
        self.require("end_of_input", &[Phase::StreamOpen, Phase::Tokenizing])?;
        self.phase = Phase::Tokenizing;
        let mut fresh = Vec::new();
        let result = self.scanner.finish(&mut fresh);
        self.absorb(&fresh);
        result.map(|_| fresh)
    }

    fn absorb(&mut self, fresh: &[Token]) {
        self.stats.tokens += fresh.len();
        self.stats.bytes_consumed = self.scanner.bytes_consumed();
        self.saw_eof |= fresh.iter().any(Token::is_eof);
        self.tokens.extend_from_slice(fresh);
    }

    /// Drains the opened source through the scanner up to end of input.
    pub fn tokenize_source(&mut self) -> Result<(), ParseError> {
        self.require("tokenize_source", &[Phase::StreamOpen, Phase::Tokenizing])?;
        match self.source.take() {
            Some(OpenSource::Memory(bytes)) => {
                self.source = Some(OpenSource::Push);
                self.tokenize_push(&bytes)?;
            }
            Some(OpenSource::Reader(mut reader)) => {
                let mut block = vec![0u8; READ_BLOCK];
                loop {
                    let n = reader.read(&mut block)?;
                    if n == 0 {
                        break;
                    }
                    self.tokenize_push(&block[..n])?;
                }
                self.source = Some(OpenSource::Push);
            }
            other => self.source = other,
        }
        self.end_of_input()?;
        Ok(())
    }

    /// Token iteration phase: validates the token stream, replays it into the
    /// sink and returns the root element.
    pub fn iterate(&mut self) -> Result<DomNode, ParseError> {
        self.require("iterate", &[Phase::Tokenizing])?;
        if !self.saw_eof {
            return Err(ParseError::LifecycleViolation {
                operation: "iterate",
                phase: self.phase,
            });
        }
        self.phase = Phase::Iterating;
        let tokens = std::mem::take(&mut self.tokens);
        let mut builder = DomBuilder::new();
        let result = {
            let mut tee = Tee {
                first: &mut builder,
                second: &mut self.sink,
            };
            validate_tokens(self.grammar, &tokens, &mut tee)
        };
        self.tokens = tokens;
        result?;
        let root = builder
            .finish()
            .expect("validated token stream always yields a root");
        self.stats.nodes = root.node_count();
        Ok(root)
    }

    /// Object destruction phase.
    pub fn destroy(&mut self) -> Result<ParseStats, ParseError> {
        if self.phase == Phase::Destroyed {
            return Err(ParseError::LifecycleViolation {
                operation: "destroy",
                phase: self.phase,
            });
        }
        self.phase = Phase::Destroyed;
        self.source = None;
        self.tokens = Vec::new();
        self.scanner = Scanner::new(self.config);
        Ok(self.stats)
    }
}

/// Runs all five phases over an in-memory document.
pub fn parse_document<S: ContentSink>(
    grammar: &DtdGrammar,
    sink: S,
    config: ScanConfig,
    input: &[u8],
) -> Result<(DomNode, ParseStats), ParseError> {
    let mut parser = Parser::with_config(grammar, sink, config);
    parser.open_stream(Source::Push)?;
    parser.tokenize_push(input)?;
    parser.end_of_input()?;
    let outcome = parser.iterate();
    let stats = parser.destroy()?;
    outcome.map(|root| (root, stats))
}

struct Tee<'a, A, B> {
    first: &'a mut A,
    second: &'a mut B,
}

impl<A: ContentSink, B: ContentSink> ContentSink for Tee<'_, A, B> {
    fn open_element(&mut self, name: &str, attrs: &Attributes) {
        self.first.open_element(name, attrs);
        self.second.open_element(name, attrs);
    }
    fn text(&mut self, text: &str) {
        self.first.text(text);
        self.second.text(text);
    }
    fn close_element(&mut self, name: &str) {
        self.first.close_element(name);
        self.second.close_element(name);
    }
}

struct OpenElement<'g> {
    name: String,
    model: &'g ContentModel,
    next_in_sequence: usize,
}

struct Validator<'g> {
    grammar: &'g DtdGrammar,
    stack: Vec<OpenElement<'g>>,
    root_closed: bool,
}

impl<'g> Validator<'g> {
    fn path_with(&self, leaf: &str) -> String {
        let mut parts: Vec<&str> = self.stack.iter().map(|e| e.name.as_str()).collect();
        parts.push(leaf);
        parts.join("/")
    }

    fn path(&self) -> String {
        self.stack
            .iter()
            .map(|e| e.name.as_str())
            .collect::<Vec<_>>()
            .join("/")
    }

    fn open(
        &mut self,
        name: &str,
        attrs: &Attributes,
        position: Position,
        sink: &mut impl ContentSink,
    ) -> Result<(), ValidationError> {
        let fail = |reason, path: String| ValidationError {
            path,
            reason,
            position,
        };
        if self.stack.is_empty() && (self.root_closed || name != self.grammar.root()) {
            return Err(fail(ValidationReason::WrongRoot, name.to_string()));
        }
        let Some(model) = self.grammar.element(name) else {
            return Err(fail(ValidationReason::UnknownElement, self.path_with(name)));
        };
        if let Some(parent) = self.stack.last_mut() {
            let allowed = match parent.model {
                ContentModel::Empty | ContentModel::Text => false,
                ContentModel::ChoiceStar(names) => names.iter().any(|n| n == name),
                ContentModel::Sequence(names) => {
                    if names.get(parent.next_in_sequence).map(String::as_str) == Some(name) {
                        parent.next_in_sequence += 1;
                        true
                    } else {
                        false
                    }
                }
            };
            if !allowed {
                return Err(fail(
                    ValidationReason::ChildNotAllowed,
                    self.path_with(name),
                ));
            }
        }
        if attrs
            .keys()
            .any(|a| self.grammar.attr_use(name, a).is_none())
        {
            return Err(fail(ValidationReason::UndeclaredAttr, self.path_with(name)));
        }
        if self
            .grammar
            .required_attrs(name)
            .iter()
            .any(|r| !attrs.contains_key(*r))
        {
            return Err(fail(
                ValidationReason::MissingRequiredAttr,
                self.path_with(name),
            ));
        }
        sink.open_element(name, attrs);
        self.stack.push(OpenElement {
            name: name.to_string(),
            model,
            next_in_sequence: 0,
        });
        Ok(())
    }

    fn close(
        &mut self,
        name: &str,
        position: Position,
        sink: &mut impl ContentSink,
    ) -> Result<(), ValidationError> {
        let matches_top = self.stack.last().is_some_and(|top| top.name == name);
        if !matches_top {
            return Err(ValidationError {
                path: self.path_with(name),
                reason: ValidationReason::UnbalancedTag,
                position,
            });
        }
        let top = self.stack.last().expect("checked above");
        if let ContentModel::Sequence(names) = top.model {
            if top.next_in_sequence < names.len() {
                return Err(ValidationError {
                    path: self.path_with(&names[top.next_in_sequence]),
                    reason: ValidationReason::MissingChild,
                    position,
                });
            }
        }
        self.stack.pop();
        sink.close_element(name);
        if self.stack.is_empty() {
            self.root_closed = true;
        }
        Ok(())
    }

    fn text(
        &mut self,
        text: &str,
        position: Position,
        sink: &mut impl ContentSink,
    ) -> Result<(), ValidationError> {
        let blank = text.bytes().all(is_space);
        match self.stack.last() {
            None if blank => Ok(()),
            None => Err(ValidationError {
                path: "#text".to_string(),
                reason: ValidationReason::WrongRoot,
                position,
            }),
            Some(top) if top.model.allows_text() => {
                sink.text(text);
                Ok(())
            }
            Some(_) if blank => Ok(()),
            Some(_) => Err(ValidationError {
                path: self.path_with("#text"),
                reason: ValidationReason::ChildNotAllowed,
                position,
            }),
        }
    }

    fn eof(&self, position: Position) -> Result<(), ValidationError> {
        if !self.stack.is_empty() {
            return Err(ValidationError {
                path: self.path(),
                reason: ValidationReason::UnbalancedTag,
                position,
            });
        }
        if !self.root_closed {
            return Err(ValidationError {
                path: self.grammar.root().to_string(),
                reason: ValidationReason::WrongRoot,
                position,
            });
        }
        Ok(())
    }
}

/// Checks a complete token stream against `grammar`, delivering events to
/// `sink` as they are accepted.
pub fn validate_tokens(
    grammar: &DtdGrammar,
    tokens: &[Token],
    sink: &mut impl ContentSink,
) -> Result<(), ValidationError> {
    let mut v = Validator {
        grammar,
        stack: Vec::new(),
        root_closed: false,
    };
    for token in tokens {
        match &token.kind {
            TokenKind::StartTag {
                name,
                attrs,
                self_closing,
            } => {
                v.open(name, attrs, token.position, sink)?;
                if *self_closing {
                    v.close(name, token.position, sink)?;
                }
            }
            TokenKind::EndTag { name } => v.close(name, token.position, sink)?,
            TokenKind::Text(text) => v.text(text, token.position, sink)?,
            TokenKind::Comment(_) => {}
            TokenKind::Eof => return v.eof(token.position),
        }
    }
    v.eof(tokens.last().map_or(Position::START, |t| t.position))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::load_grammar;
    use crate::sink::{NullSink, RecordingSink};

    fn grammar(text: &str) -> DtdGrammar {
        load_grammar(text).unwrap()
    }

    fn parse(g: &DtdGrammar, doc: &str) -> Result<DomNode, ParseError> {
        parse_document(g, NullSink, ScanConfig::default(), doc.as_bytes()).map(|(d, _)| d)
    }

    fn reason(err: ParseError) -> ValidationReason {
        match err {
            ParseError::Validation(v) => v.reason,
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn text_page() {
        let g = grammar("ROOT page\nELEMENT page TEXT");
        let root = parse(&g, "<page>hi</page>").unwrap();
        assert_eq!(
            root,
            DomNode::Element {
                name: "page".into(),
                attrs: Attributes::new(),
                children: vec![DomNode::Text("hi".into())],
            }
        );
    }

    #[test]
    fn child_not_allowed_path() {
        let g = grammar("ROOT body\nELEMENT body (p)*\nELEMENT p TEXT\nELEMENT img EMPTY");
        match parse(&g, "<body><img/></body>").unwrap_err() {
            ParseError::Validation(v) => {
                assert_eq!(v.path, "body/img");
                assert_eq!(v.reason, ValidationReason::ChildNotAllowed);
                assert_eq!(v.position, Position { line: 1, column: 7 });
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_required_attribute() {
        let g =
            grammar("ROOT body\nELEMENT body (img)*\nELEMENT img EMPTY\nATTLIST img src REQUIRED");
        assert_eq!(
            reason(parse(&g, "<body><img/></body>").unwrap_err()),
            ValidationReason::MissingRequiredAttr
        );
        assert!(parse(&g, r#"<body><img src="a"/></body>"#).is_ok());
        assert_eq!(
            reason(parse(&g, r#"<body><img src="a" w="1"/></body>"#).unwrap_err()),
            ValidationReason::UndeclaredAttr
        );
    }

    #[test]
    fn structural_faults() {
        let g = grammar("ROOT a\nELEMENT a (b, c)\nELEMENT b EMPTY\nELEMENT c TEXT");
        assert!(parse(&g, "<a><b/><c>x</c></a>").is_ok());
        assert_eq!(
            reason(parse(&g, "<a><c>x</c><b/></a>").unwrap_err()),
            ValidationReason::ChildNotAllowed
        );
        assert_eq!(
            reason(parse(&g, "<a><b/></a>").unwrap_err()),
            ValidationReason::MissingChild
        );
        assert_eq!(
            reason(parse(&g, "<a><b/><c>x</b></a>").unwrap_err()),
            ValidationReason::UnbalancedTag
        );
        assert_eq!(
            reason(parse(&g, "<a><b/><c>x</c>").unwrap_err()),
            ValidationReason::UnbalancedTag
        );
        assert_eq!(
            reason(parse(&g, "<c>x</c>").unwrap_err()),
            ValidationReason::WrongRoot
        );
        assert_eq!(
            reason(parse(&g, "").unwrap_err()),
            ValidationReason::WrongRoot
        );
        assert_eq!(
            reason(parse(&g, "<a><b/><c/></a><a/>").unwrap_err()),
            ValidationReason::WrongRoot
        );
        assert_eq!(
            reason(parse(&g, "<a><b/><zz/></a>").unwrap_err()),
            ValidationReason::UnknownElement
        );
        assert_eq!(
            reason(parse(&g, "<a>text<b/><c/></a>").unwrap_err()),
            ValidationReason::ChildNotAllowed
        );
    }

    #[test]
    fn empty_lifecycle_has_zero_stats() {
        let g = grammar("ROOT page\nELEMENT page TEXT");
        let mut p = Parser::construct(&g, NullSink);
        assert_eq!(p.phase(), Phase::Constructed);
        assert_eq!(p.destroy().unwrap(), ParseStats::default());
        assert!(matches!(
            p.destroy(),
            Err(ParseError::LifecycleViolation { .. })
        ));
        assert!(matches!(
            p.open_stream(Source::Push),
            Err(ParseError::LifecycleViolation { .. })
        ));
    }

    #[test]
    fn full_lifecycle_stats() {
        let g = grammar("ROOT page\nELEMENT page TEXT");
        let mut p = Parser::construct(&g, RecordingSink::default());
        p.open_stream(Source::Memory(b"<page>hi</page>".to_vec()))
            .unwrap();
        assert_eq!(p.phase(), Phase::StreamOpen);
        assert!(matches!(
            p.open_stream(Source::Push),
            Err(ParseError::LifecycleViolation { .. })
        ));
        assert!(matches!(
            p.iterate(),
            Err(ParseError::LifecycleViolation { .. })
        ));
        p.tokenize_source().unwrap();
        assert_eq!(p.phase(), Phase::Tokenizing);
        p.iterate().unwrap();
        assert_eq!(p.phase(), Phase::Iterating);
        assert!(p.iterate().is_err());
        let stats = p.destroy().unwrap();
        assert_eq!(stats.tokens, 4);
        assert_eq!(stats.nodes, 2);
        assert_eq!(stats.bytes_consumed, 15);
        assert_eq!(
            p.sink().events,
            ["open page []", "text \"hi\"", "close page"]
        );
    }

    #[test]
    fn unreadable_file_keeps_phase() {
        let g = grammar("ROOT page\nELEMENT page TEXT");
        let mut p = Parser::construct(&g, NullSink);
        let err = p
            .open_stream(Source::File("/nonexistent/doc.mcl".into()))
            .unwrap_err();
        assert!(matches!(err, ParseError::Io(_)));
        assert_eq!(p.phase(), Phase::Constructed);
    }

    #[test]
    fn push_after_eof_is_violation() {
        let g = grammar("ROOT page\nELEMENT page TEXT");
        let mut p = Parser::construct(&g, NullSink);
        p.open_stream(Source::Push).unwrap();
        p.tokenize_push(b"<page/>").unwrap();
        p.end_of_input().unwrap();
        assert!(p.tokenize_push(b"x").is_err());
    }

    #[test]
    fn independent_parsers() {
        let g = grammar("ROOT page\nELEMENT page TEXT");
        let mut a = Parser::construct(&g, NullSink);
        let b = Parser::construct(&g, NullSink);
        a.open_stream(Source::Push).unwrap();
        assert_eq!(a.phase(), Phase::StreamOpen);
        assert_eq!(b.phase(), Phase::Constructed);
    }
}
