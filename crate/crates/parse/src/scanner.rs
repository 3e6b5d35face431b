//! Push-based scanner.
//!
//! Input is consumed one byte at a time by a state machine, so the token
//! stream never depends on how the caller splits its input. Text is only
//! emitted once the following `<` (or end of input) has been seen.

use crate::error::{LexError, ParseError};
use crate::token::{is_name_char, is_name_start, is_space, Attributes, Position, Token, TokenKind};

/// Removal of "useless data" during scanning. Both strips default to on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScanConfig {
    pub strip_comments: bool,
    pub strip_whitespace: bool,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            strip_comments: true,
            strip_whitespace: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Data,
    TagOpen,
    TagName,
    BeforeAttrName,
    AttrName,
    AfterAttrName,
    BeforeAttrValue,
    AttrValue,
    AfterAttrValue,
    SelfClosing,
    EndTagOpen,
    EndTagName,
    AfterEndTagName,
    MarkupDecl,
    CommentOpen,
    Comment,
    CommentDash,
    CommentDashDash,
    Done,
}

#[derive(Debug, Clone, Copy)]
enum Fault {
    Lex(LexError),
    Utf8(Position),
}

impl From<Fault> for ParseError {
    fn from(f: Fault) -> Self {
        match f {
            Fault::Lex(e) => ParseError::Lex(e),
            Fault::Utf8(p) => ParseError::Utf8(p),
        }
    }
}

#[derive(Debug)]
pub struct Scanner {
    config: ScanConfig,
    state: State,
    cursor: Position,
    token_start: Position,
    attr_start: Position,
    text: Vec<u8>,
    name: Vec<u8>,
    attr_name: Vec<u8>,
    attr_value: Vec<u8>,
    attrs: Attributes,
    consumed: u64,
    fault: Option<Fault>,
}

impl Scanner {
    pub fn new(config: ScanConfig) -> Self {
        Scanner {
            config,
            state: State::Data,
            cursor: Position::START,
            token_start: Position::START,
            attr_start: Position::START,
            text: Vec::new(),
            name: Vec::new(),
            attr_name: Vec::new(),
            attr_value: Vec::new(),
            attrs: Attributes::new(),
            consumed: 0,
            fault: None,
        }
    }

    pub fn bytes_consumed(&self) -> u64 {
        self.consumed
    }

    pub fn is_finished(&self) -> bool {
        self.state == State::Done
    }

    /// Feeds more input, appending completed tokens to `out`. After an error
    /// the scanner is poisoned and keeps returning the same error.
    pub fn push(&mut self, bytes: &[u8], out: &mut Vec<Token>) -> Result<(), ParseError> {
        if let Some(f) = self.fault {
            return Err(f.into());
        }
        for &b in bytes {
            if let Err(f) = self.step(b, out) {
                self.fault = Some(f);
                return Err(f.into());
            }
            self.advance_cursor(b);
        }
        Ok(())
    }

    /// Signals end of input: flushes trailing text and appends `Eof`.
    pub fn finish(&mut self, out: &mut Vec<Token>) -> Result<(), ParseError> {
        if let Some(f) = self.fault {
            return Err(f.into());
        }
        let result = match self.state {
            State::Data => self.flush_text(out).map(|_| {
                out.push(Token {
                    kind: TokenKind::Eof,
                    position: self.cursor,
                });
                self.state = State::Done;
            }),
            State::Done => Ok(()),
            _ => Err(Fault::Lex(LexError {
                position: self.token_start,
                byte: None,
            })),
        };
        if let Err(f) = result {
            self.fault = Some(f);
            return Err(f.into());
        }
        Ok(())
    }

    fn advance_cursor(&mut self, b: u8) {
        self.consumed += 1;
        if b == b'\n' {
            self.cursor.line += 1;
            self.cursor.column = 1;
        } else if b & 0xC0 != 0x80 {
            self.cursor.column += 1;
        }
    }

    fn lex_error(&self, b: u8) -> Fault {
        Fault::Lex(LexError {
            position: self.cursor,
            byte: Some(b),
        })
    }

    fn step(&mut self, b: u8, out: &mut Vec<Token>) -> Result<(), Fault> {
        match self.state {
            State::Data => {
                if b == b'<' {
                    self.flush_text(out)?;
                    self.token_start = self.cursor;
                    self.state = State::TagOpen;
                } else {
                    if self.text.is_empty() {
                        self.token_start = self.cursor;
                    }
                    self.text.push(b);
                }
            }
            State::TagOpen => match b {
                b'/' => self.state = State::EndTagOpen,
                b'!' => self.state = State::MarkupDecl,
                _ if is_name_start(b) => {
                    self.name.clear();
                    self.name.push(b);
                    self.attrs.clear();
                    self.state = State::TagName;
                }
                _ => return Err(self.lex_error(b)),
            },
            State::TagName => match b {
                _ if is_name_char(b) => self.name.push(b),
                _ if is_space(b) => self.state = State::BeforeAttrName,
                b'/' => self.state = State::SelfClosing,
                b'>' => self.emit_start(false, out)?,
                _ => return Err(self.lex_error(b)),
            },
            State::BeforeAttrName => match b {
                _ if is_space(b) => {}
                b'/' => self.state = State::SelfClosing,
                b'>' => self.emit_start(false, out)?,
                _ if is_name_start(b) => {
                    self.attr_start = self.cursor;
                    self.attr_name.clear();
                    self.attr_name.push(b);
                    self.state = State::AttrName;
                }
                _ => return Err(self.lex_error(b)),
            },
            State::AttrName => match b {
                _ if is_name_char(b) => self.attr_name.push(b),
                b'=' => {
                    self.check_duplicate_attr()?;
                    self.state = State::BeforeAttrValue;
                }
                _ if is_space(b) => {
                    self.check_duplicate_attr()?;
                    self.state = State::AfterAttrName;
                }
                _ => return Err(self.lex_error(b)),
            },
            State::AfterAttrName => match b {
                _ if is_space(b) => {}
                b'=' => self.state = State::BeforeAttrValue,
                _ => return Err(self.lex_error(b)),
            },
            State::BeforeAttrValue => match b {
                _ if is_space(b) => {}
                b'"' => {
                    self.attr_value.clear();
                    self.state = State::AttrValue;
                }
                _ => return Err(self.lex_error(b)),
            },
            State::AttrValue => {
                if b == b'"' {
                    let name = ascii_string(&self.attr_name);
                    let value = String::from_utf8(std::mem::take(&mut self.attr_value))
                        .map_err(|_| Fault::Utf8(self.attr_start))?;
                    self.attrs.insert(name, value);
                    self.state = State::AfterAttrValue;
                } else {
                    self.attr_value.push(b);
                }
            }
            State::AfterAttrValue => match b {
                _ if is_space(b) => self.state = State::BeforeAttrName,
                b'/' => self.state = State::SelfClosing,
                b'>' => self.emit_start(false, out)?,
                _ => return Err(self.lex_error(b)),
            },
            State::SelfClosing => match b {
                b'>' => self.emit_start(true, out)?,
                _ => return Err(self.lex_error(b)),
            },
            State::EndTagOpen => {
                if is_name_start(b) {
                    self.name.clear();
                    self.name.push(b);
                    self.state = State::EndTagName;
                } else {
                    return Err(self.lex_error(b));
                }
            }
            State::EndTagName => match b {
                _ if is_name_char(b) => self.name.push(b),
                _ if is_space(b) => self.state = State::AfterEndTagName,
                b'>' => self.emit_end(out),
                _ => return Err(self.lex_error(b)),
            },
            State::AfterEndTagName => match b {
                _ if is_space(b) => {}
                b'>' => self.emit_end(out),
                _ => return Err(self.lex_error(b)),
            },
            State::MarkupDecl => match b {
                b'-' => self.state = State::CommentOpen,
                _ => return Err(self.lex_error(b)),
            },
            State::CommentOpen => match b {
                b'-' => {
                    self.text.clear();
                    self.state = State::Comment;
                }
                _ => return Err(self.lex_error(b)),
            },
            State::Comment => match b {
                b'-' => self.state = State::CommentDash,
                _ => self.text.push(b),
            },
            State::CommentDash => match b {
                b'-' => self.state = State::CommentDashDash,
                _ => {
                    self.text.extend_from_slice(&[b'-', b]);
                    self.state = State::Comment;
                }
            },
            State::CommentDashDash => match b {
                b'>' => self.emit_comment(out)?,
                b'-' => self.text.push(b'-'),
                _ => {
                    self.text.extend_from_slice(&[b'-', b'-', b]);
                    self.state = State::Comment;
                }
            },
            State::Done => return Err(self.lex_error(b)),
        }
        Ok(())
    }

    fn check_duplicate_attr(&self) -> Result<(), Fault> {
        if self.attrs.contains_key(ascii_str(&self.attr_name)) {
            return Err(Fault::Lex(LexError {
                position: self.attr_start,
                byte: self.attr_name.first().copied(),
            }));
        }
        Ok(())
    }

    fn flush_text(&mut self, out: &mut Vec<Token>) -> Result<(), Fault> {
        if self.text.is_empty() {
            return Ok(());
        }
        let bytes = std::mem::take(&mut self.text);
        if self.config.strip_whitespace && bytes.iter().all(|b| is_space(*b)) {
            return Ok(());
        }
        let text = String::from_utf8(bytes).map_err(|_| Fault::Utf8(self.token_start))?;
        out.push(Token {
            kind: TokenKind::Text(text),
            position: self.token_start,
        });
        Ok(())
    }

    fn emit_start(&mut self, self_closing: bool, out: &mut Vec<Token>) -> Result<(), Fault> {
        out.push(Token {
            kind: TokenKind::StartTag {
                name: ascii_string(&self.name),
                attrs: std::mem::take(&mut self.attrs),
                self_closing,
            },
            position: self.token_start,
        });
        self.state = State::Data;
        Ok(())
    }

    fn emit_end(&mut self, out: &mut Vec<Token>) {
        out.push(Token {
            kind: TokenKind::EndTag {
                name: ascii_string(&self.name),
            },
            position: self.token_start,
        });
        self.state = State::Data;
    }

    fn emit_comment(&mut self, out: &mut Vec<Token>) -> Result<(), Fault> {
        let bytes = std::mem::take(&mut self.text);
        self.state = State::Data;
        if self.config.strip_comments {
            return Ok(());
        }
        let text = String::from_utf8(bytes).map_err(|_| Fault::Utf8(self.token_start))?;
        out.push(Token {
            kind: TokenKind::Comment(text),
            position: self.token_start,
        });
        Ok(())
    }
}

// Name bytes are validated ASCII by the state machine.
fn ascii_str(bytes: &[u8]) -> &str {
    std::str::from_utf8(bytes).unwrap_or_default()
}

fn ascii_string(bytes: &[u8]) -> String {
    ascii_str(bytes).to_string()
}

/// One-shot convenience: scans the whole input and appends `Eof`.
pub fn tokenize(input: &[u8], config: ScanConfig) -> Result<Vec<Token>, ParseError> {
    let mut scanner = Scanner::new(config);
    let mut out = Vec::new();
    scanner.push(input, &mut out)?;
    scanner.finish(&mut out)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(input: &str, config: ScanConfig) -> Vec<TokenKind> {
        tokenize(input.as_bytes(), config)
            .unwrap()
            .into_iter()
            .map(|t| t.kind)
            .collect()
    }

    fn start(name: &str, attrs: &[(&str, &str)], self_closing: bool) -> TokenKind {
        TokenKind::StartTag {
            name: name.into(),
            attrs: attrs
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
            self_closing,
        }
    }

    #[test]
    fn direct_lexing() {
        assert_eq!(
            kinds(r#"<p a="1">hi</p>"#, ScanConfig::default()),
            vec![
                start("p", &[("a", "1")], false),
                TokenKind::Text("hi".into()),
                TokenKind::EndTag { name: "p".into() },
                TokenKind::Eof,
            ]
        );
    }

    #[test]
    fn split_inside_attribute_value() {
        let mut scanner = Scanner::new(ScanConfig::default());
        let mut out = Vec::new();
        scanner.push(br#"<p a=""#, &mut out).unwrap();
        assert!(out.is_empty());
        scanner.push(br#"1">hi</p>"#, &mut out).unwrap();
        scanner.finish(&mut out).unwrap();
        assert_eq!(
            out,
            tokenize(br#"<p a="1">hi</p>"#, ScanConfig::default()).unwrap()
        );
    }

    #[test]
    fn stray_lt_at_end() {
        let err = tokenize(b"<p>x</p>\n<", ScanConfig::default()).unwrap_err();
        match err {
            ParseError::Lex(e) => {
                assert_eq!(e.position, Position { line: 2, column: 1 });
                assert_eq!(e.byte, None);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_byte_after_lt() {
        let err = tokenize(b"<p>a < b</p>", ScanConfig::default()).unwrap_err();
        match err {
            ParseError::Lex(e) => {
                assert_eq!(e.position, Position { line: 1, column: 7 });
                assert_eq!(e.byte, Some(b' '));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn comments_and_whitespace_strips() {
        let input = "<a>\n  <!-- note -- here -->\n  <b/> </a>";
        assert_eq!(
            kinds(input, ScanConfig::default()),
            vec![
                start("a", &[], false),
                start("b", &[], true),
                TokenKind::EndTag { name: "a".into() },
                TokenKind::Eof,
            ]
        );
        let kept = kinds(
            input,
            ScanConfig {
                strip_comments: false,
                strip_whitespace: false,
            },
        );
        assert_eq!(kept[2], TokenKind::Comment(" note -- here ".into()));
        assert_eq!(kept.len(), 8);
    }

    #[test]
    fn attribute_spacing_and_duplicates() {
        assert_eq!(
            kinds(r#"<img src = "x.png"  alt="a b" />"#, ScanConfig::default())[0],
            start("img", &[("alt", "a b"), ("src", "x.png")], true)
        );
        assert!(tokenize(br#"<img a="1" a="2"/>"#, ScanConfig::default()).is_err());
        assert!(tokenize(br#"<img a="1"b="2"/>"#, ScanConfig::default()).is_err());
        assert!(tokenize(br#"<img a/>"#, ScanConfig::default()).is_err());
    }

    #[test]
    fn positions_track_lines() {
        let toks = tokenize(b"<a>\n<b>x</b></a>", ScanConfig::default()).unwrap();
        assert_eq!(toks[1].position, Position { line: 2, column: 1 });
        assert_eq!(toks[2].position, Position { line: 2, column: 4 });
    }

    #[test]
    fn poisoned_after_error() {
        let mut scanner = Scanner::new(ScanConfig::default());
        let mut out = Vec::new();
        assert!(scanner.push(b"<1", &mut out).is_err());
        assert!(scanner.push(b"<a>", &mut out).is_err());
        assert!(scanner.finish(&mut out).is_err());
    }
}
