//! Test-only document generator, brute-force reference parser and post-hoc
//! grammar checker. Nothing here calls into the scanner or validator, so the
//! engine can be compared against it.

#![allow(dead_code)]

use std::collections::BTreeMap;

use mcl_parse::{AttrUse, ContentModel, DomNode, DtdGrammar};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const COURSE_GRAMMAR: &str = "\
# lesson markup used by the generated corpus
ROOT lesson
ELEMENT lesson (title, body)
ELEMENT title TEXT
ELEMENT body (section | para | list | figure | note)*
ELEMENT section (heading, body)
ELEMENT heading TEXT
ELEMENT para TEXT
ELEMENT list (item)*
ELEMENT item TEXT
ELEMENT figure (img, caption)
ELEMENT img EMPTY
ELEMENT caption TEXT
ELEMENT note TEXT
ELEMENT br EMPTY
ATTLIST lesson lang REQUIRED
ATTLIST lesson level OPTIONAL
ATTLIST section id REQUIRED
ATTLIST img src REQUIRED
ATTLIST img alt OPTIONAL
ATTLIST para class OPTIONAL
ATTLIST item n OPTIONAL
";

pub const MAX_DEPTH: usize = 6;
pub const MAX_NODES: usize = 200;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PieceKind {
    Start {
        name: String,
        attrs: BTreeMap<String, String>,
        self_closing: bool,
    },
    End {
        name: String,
    },
    Text,
    Blank,
    Comment,
}

/// One lexical unit of a generated document, kept separately so faults can
/// be injected at token granularity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Piece {
    pub kind: PieceKind,
    pub text: String,
}

#[derive(Debug, Clone)]
pub struct GeneratedDoc {
    pub pieces: Vec<Piece>,
    pub dom: DomNode,
}

impl GeneratedDoc {
    pub fn source(&self) -> String {
        join(&self.pieces)
    }
}

pub fn join(pieces: &[Piece]) -> String {
    pieces.iter().map(|p| p.text.as_str()).collect()
}

const WORDS: &[&str] = &[
    "mobile",
    "learning",
    "chunk",
    "naïve",
    "größe",
    "x>y",
    "a=b",
    "\"quoted\"",
    "peer",
    "group",
    "42",
    "-",
    "élan",
    "data",
    "voice",
    "graph",
];

struct Gen<'a> {
    rng: &'a mut ChaCha8Rng,
    grammar: &'a DtdGrammar,
    pieces: Vec<Piece>,
    nodes: usize,
}

impl Gen<'_> {
    fn blank(&mut self) {
        if self.rng.gen_bool(0.3) {
            let ws = [" ", "\n", "\n  ", "\t", " \n "];
            let s = ws.choose(self.rng).unwrap();
            self.pieces.push(Piece {
                kind: PieceKind::Blank,
                text: s.to_string(),
            });
        }
        if self.rng.gen_bool(0.08) {
            let body = ["note", " - dash - ", "", "x-y", "a --b"]
                .choose(self.rng)
                .unwrap();
            self.pieces.push(Piece {
                kind: PieceKind::Comment,
                text: format!("<!--{body}-->"),
            });
        }
    }

    fn text(&mut self) -> String {
        let n = self.rng.gen_range(1..5);
        let mut words: Vec<&str> = (0..n).map(|_| *WORDS.choose(self.rng).unwrap()).collect();
        if self.rng.gen_bool(0.2) {
            words.insert(0, "");
        }
        words.join(" ")
    }

    fn attrs_for(&mut self, name: &str) -> BTreeMap<String, String> {
        let declared: Vec<(String, AttrUse)> = self
            .grammar
            .attributes(name)
            .map(|(a, u)| (a.to_string(), u))
            .collect();
        let mut attrs = BTreeMap::new();
        for (attr, usage) in declared {
            if usage == AttrUse::Required || self.rng.gen_bool(0.5) {
                let v = format!(
                    "{}{}",
                    ["v", "x y", "é", "p>q", ""].choose(self.rng).unwrap(),
                    self.rng.gen_range(0..100)
                );
                attrs.insert(attr, v);
            }
        }
        attrs
    }

    fn start_tag_text(
        &mut self,
        name: &str,
        attrs: &BTreeMap<String, String>,
        self_closing: bool,
    ) -> String {
        let mut s = format!("<{name}");
        let mut order: Vec<(&String, &String)> = attrs.iter().collect();
        order.shuffle(self.rng);
        for (k, v) in order {
            let sep = if self.rng.gen_bool(0.2) { "  " } else { " " };
            let eq = if self.rng.gen_bool(0.15) { " = " } else { "=" };
            s.push_str(&format!("{sep}{k}{eq}\"{v}\""));
        }
        if self.rng.gen_bool(0.1) {
            s.push(' ');
        }
        s.push_str(if self_closing { "/>" } else { ">" });
        s
    }

    fn element(&mut self, name: &str, depth: usize) -> DomNode {
        self.nodes += 1;
        let model = self.grammar.element(name).unwrap().clone();
        let attrs = self.attrs_for(name);
        let mut children = Vec::new();
        let self_closing = matches!(model, ContentModel::Empty) && self.rng.gen_bool(0.7);
        let text = self.start_tag_text(name, &attrs, self_closing);
        self.pieces.push(Piece {
            kind: PieceKind::Start {
                name: name.to_string(),
                attrs: attrs.clone(),
                self_closing,
            },
            text,
        });
        if self_closing {
            return DomNode::Element {
                name: name.to_string(),
                attrs,
                children,
            };
        }
        match &model {
            ContentModel::Empty => {}
            ContentModel::Text => {
                if depth < MAX_DEPTH && self.nodes < MAX_NODES && self.rng.gen_bool(0.9) {
                    let t = self.text();
                    if t.trim().is_empty() {
                        // whitespace-only text is stripped by the scanner
                    } else {
                        self.nodes += 1;
                        self.pieces.push(Piece {
                            kind: PieceKind::Text,
                            text: t.clone(),
                        });
                        children.push(DomNode::Text(t));
                    }
                }
            }
            ContentModel::Sequence(names) => {
                for child in names.clone() {
                    self.blank();
                    children.push(self.element(&child, depth + 1));
                }
                self.blank();
            }
            ContentModel::ChoiceStar(names) => {
                let count = self.rng.gen_range(0..5);
                for _ in 0..count {
                    let fits: Vec<&String> = names
                        .iter()
                        .filter(|n| subtree_min_depth(self.grammar, n) + depth <= MAX_DEPTH)
                        .collect();
                    if fits.is_empty() || self.nodes + 45 > MAX_NODES {
                        break;
                    }
                    let child = (*fits.choose(self.rng).unwrap()).clone();
                    self.blank();
                    children.push(self.element(&child, depth + 1));
                }
                self.blank();
            }
        }
        self.pieces.push(Piece {
            kind: PieceKind::End {
                name: name.to_string(),
            },
            text: format!("</{name}>"),
        });
        DomNode::Element {
            name: name.to_string(),
            attrs,
            children,
        }
    }
}

/// Levels (elements plus a text leaf) below and including `name` in the
/// shallowest valid subtree.
fn subtree_min_depth(g: &DtdGrammar, name: &str) -> usize {
    match g.element(name).unwrap() {
        ContentModel::Empty => 1,
        ContentModel::Text => 2,
        ContentModel::ChoiceStar(_) => 1,
        ContentModel::Sequence(names) => {
            1 + names
                .iter()
                .map(|n| subtree_min_depth(g, n))
                .max()
                .unwrap_or(0)
        }
    }
}

pub fn generate_document(grammar: &DtdGrammar, rng: &mut ChaCha8Rng) -> GeneratedDoc {
    let mut gen = Gen {
        rng,
        grammar,
        pieces: Vec::new(),
        nodes: 0,
    };
    gen.blank();
    let root = grammar.root().to_string();
    let dom = gen.element(&root, 1);
    gen.blank();
    GeneratedDoc {
        pieces: gen.pieces,
        dom,
    }
}

// ---------------------------------------------------------------------------
// Brute-force reference parser
// ---------------------------------------------------------------------------

struct Cursor<'a> {
    s: &'a str,
    at: usize,
}

impl<'a> Cursor<'a> {
    fn rest(&self) -> &'a str {
        &self.s[self.at..]
    }

    fn eat(&mut self, prefix: &str) -> bool {
        if self.rest().starts_with(prefix) {
            self.at += prefix.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, prefix: &str) -> Result<(), usize> {
        if self.eat(prefix) {
            Ok(())
        } else {
            Err(self.at)
        }
    }

    fn spaces(&mut self) -> usize {
        let n = self
            .rest()
            .bytes()
            .take_while(|b| matches!(b, b' ' | b'\t' | b'\n' | b'\r'))
            .count();
        self.at += n;
        n
    }

    fn name(&mut self) -> Result<String, usize> {
        let rest = self.rest();
        let mut chars = rest.char_indices();
        match chars.next() {
            Some((_, c)) if c.is_ascii_alphabetic() => {}
            _ => return Err(self.at),
        }
        let end = rest
            .char_indices()
            .skip(1)
            .find(|(_, c)| !(c.is_ascii_alphanumeric() || *c == '_' || *c == '-'))
            .map_or(rest.len(), |(i, _)| i);
        let name = rest[..end].to_string();
        self.at += end;
        Ok(name)
    }

    fn skip_comment(&mut self) -> Result<bool, usize> {
        if !self.eat("<!--") {
            return Ok(false);
        }
        match self.rest().find("-->") {
            Some(i) => {
                self.at += i + 3;
                Ok(true)
            }
            None => Err(self.s.len()),
        }
    }

    fn misc(&mut self) -> Result<(), usize> {
        loop {
            self.spaces();
            if !self.skip_comment()? {
                return Ok(());
            }
        }
    }

    fn element(&mut self) -> Result<DomNode, usize> {
        self.expect("<")?;
        let name = self.name()?;
        let mut attrs = BTreeMap::new();
        loop {
            let had_space = self.spaces() > 0;
            if self.eat("/>") {
                return Ok(DomNode::Element {
                    name,
                    attrs,
                    children: vec![],
                });
            }
            if self.eat(">") {
                break;
            }
            if !had_space {
                return Err(self.at);
            }
            let attr = self.name()?;
            self.spaces();
            self.expect("=")?;
            self.spaces();
            self.expect("\"")?;
            let end = self.rest().find('"').ok_or(self.s.len())?;
            let value = self.rest()[..end].to_string();
            self.at += end + 1;
            if attrs.insert(attr, value).is_some() {
                return Err(self.at);
            }
        }
        let mut children: Vec<DomNode> = Vec::new();
        loop {
            if self.eat("</") {
                let close = self.name()?;
                self.spaces();
                self.expect(">")?;
                if close != name {
                    return Err(self.at);
                }
                return Ok(DomNode::Element {
                    name,
                    attrs,
                    children,
                });
            }
            if self.skip_comment()? {
                continue;
            }
            if self.rest().starts_with('<') {
                children.push(self.element()?);
                continue;
            }
            if self.rest().is_empty() {
                return Err(self.at);
            }
            let end = self.rest().find('<').unwrap_or(self.rest().len());
            let segment = &self.rest()[..end];
            self.at += end;
            if segment
                .bytes()
                .all(|b| matches!(b, b' ' | b'\t' | b'\n' | b'\r'))
            {
                continue;
            }
            match children.last_mut() {
                Some(DomNode::Text(prev)) => prev.push_str(segment),
                _ => children.push(DomNode::Text(segment.to_string())),
            }
        }
    }
}

/// Parses a whole document by recursive descent. Errors carry a byte offset.
pub fn oracle_parse(doc: &str) -> Result<DomNode, usize> {
    let mut c = Cursor { s: doc, at: 0 };
    c.misc()?;
    let root = c.element()?;
    c.misc()?;
    if !c.rest().is_empty() {
        return Err(c.at);
    }
    Ok(root)
}

/// Tree-level grammar check, independent of the streaming validator.
pub fn oracle_valid(g: &DtdGrammar, root: &DomNode) -> bool {
    root.name() == Some(g.root()) && node_valid(g, root)
}

fn node_valid(g: &DtdGrammar, node: &DomNode) -> bool {
    let DomNode::Element {
        name,
        attrs,
        children,
    } = node
    else {
        return true;
    };
    let Some(model) = g.element(name) else {
        return false;
    };
    let declared: BTreeMap<&str, AttrUse> = g.attributes(name).collect();
    if attrs.keys().any(|a| !declared.contains_key(a.as_str())) {
        return false;
    }
    if declared
        .iter()
        .any(|(a, u)| *u == AttrUse::Required && !attrs.contains_key(*a))
    {
        return false;
    }
    let child_names: Option<Vec<&str>> = children.iter().map(DomNode::name).collect();
    let ok = match model {
        ContentModel::Empty => children.is_empty(),
        ContentModel::Text => children.iter().all(|c| matches!(c, DomNode::Text(_))),
        ContentModel::Sequence(seq) => child_names.is_some_and(|n| {
            n.len() == seq.len() && n.iter().zip(seq).all(|(a, b)| *a == b.as_str())
        }),
        ContentModel::ChoiceStar(set) => {
            child_names.is_some_and(|n| n.iter().all(|a| set.iter().any(|s| s == a)))
        }
    };
    ok && children.iter().all(|c| node_valid(g, c))
}

// ---------------------------------------------------------------------------
// Single-fault mutations
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultKind {
    IllegalChild,
    UndeclaredChild,
    DroppedRequiredAttr,
    RenamedEndTag,
    StrayEndTag,
}

#[derive(Debug, Clone)]
pub struct Mutant {
    pub kind: FaultKind,
    pub pieces: Vec<Piece>,
    /// Index of the injected or altered piece.
    pub fault_piece: usize,
}

impl Mutant {
    pub fn source(&self) -> String {
        join(&self.pieces)
    }

    /// Byte offset where the faulty piece starts.
    pub fn fault_offset(&self) -> usize {
        self.pieces[..self.fault_piece]
            .iter()
            .map(|p| p.text.len())
            .sum()
    }
}

/// Injects one fault of the requested kind, or `None` when the document has
/// no site for it.
pub fn mutate(doc: &GeneratedDoc, kind: FaultKind, rng: &mut ChaCha8Rng) -> Option<Mutant> {
    let pieces = &doc.pieces;
    let open_sites: Vec<usize> = pieces
        .iter()
        .enumerate()
        .filter(|(_, p)| {
            matches!(
                &p.kind,
                PieceKind::Start {
                    self_closing: false,
                    ..
                }
            )
        })
        .map(|(i, _)| i)
        .collect();
    let mut out = pieces.clone();
    let fault_piece = match kind {
        FaultKind::IllegalChild | FaultKind::UndeclaredChild | FaultKind::StrayEndTag => {
            let at = *open_sites.choose(rng)? + 1;
            let opened = match &pieces[at - 1].kind {
                PieceKind::Start { name, .. } => name.clone(),
                _ => unreachable!(),
            };
            let (kind, text) = match kind {
                FaultKind::IllegalChild => (
                    PieceKind::Start {
                        name: "br".into(),
                        attrs: BTreeMap::new(),
                        self_closing: true,
                    },
                    "<br/>".to_string(),
                ),
                FaultKind::UndeclaredChild => (
                    PieceKind::Start {
                        name: "blink".into(),
                        attrs: BTreeMap::new(),
                        self_closing: true,
                    },
                    "<blink/>".to_string(),
                ),
                _ => {
                    let other = if opened == "note" { "para" } else { "note" };
                    (PieceKind::End { name: other.into() }, format!("</{other}>"))
                }
            };
            out.insert(at, Piece { kind, text });
            at
        }
        FaultKind::DroppedRequiredAttr => {
            let sites: Vec<(usize, String)> = pieces
                .iter()
                .enumerate()
                .filter_map(|(i, p)| match &p.kind {
                    PieceKind::Start { attrs, .. } => {
                        let req: Vec<&String> = attrs
                            .keys()
                            .filter(|a| matches!(a.as_str(), "lang" | "id" | "src"))
                            .collect();
                        req.first().map(|a| (i, (*a).clone()))
                    }
                    _ => None,
                })
                .collect();
            let (i, attr) = sites.choose(rng)?.clone();
            let PieceKind::Start {
                name,
                mut attrs,
                self_closing,
            } = pieces[i].kind.clone()
            else {
                unreachable!()
            };
            attrs.remove(&attr);
            let mut text = format!("<{name}");
            for (k, v) in &attrs {
                text.push_str(&format!(" {k}=\"{v}\""));
            }
            text.push_str(if self_closing { "/>" } else { ">" });
            out[i] = Piece {
                kind: PieceKind::Start {
                    name,
                    attrs,
                    self_closing,
                },
                text,
            };
            i
        }
        FaultKind::RenamedEndTag => {
            let ends: Vec<usize> = pieces
                .iter()
                .enumerate()
                .filter(|(_, p)| matches!(p.kind, PieceKind::End { .. }))
                .map(|(i, _)| i)
                .collect();
            let i = *ends.choose(rng)?;
            let PieceKind::End { name } = &pieces[i].kind else {
                unreachable!()
            };
            let other = if name == "item" { "para" } else { "item" };
            out[i] = Piece {
                kind: PieceKind::End { name: other.into() },
                text: format!("</{other}>"),
            };
            i
        }
    };
    Some(Mutant {
        kind,
        pieces: out,
        fault_piece,
    })
}

/// Random partition of `len` bytes into contiguous non-empty ranges.
pub fn random_partition(len: usize, rng: &mut ChaCha8Rng) -> Vec<std::ops::Range<usize>> {
    let mut cuts: Vec<usize> = (0..rng.gen_range(0..=len.min(40)))
        .map(|_| rng.gen_range(0..=len))
        .collect();
    cuts.push(0);
    cuts.push(len);
    cuts.sort_unstable();
    cuts.dedup();
    cuts.windows(2).map(|w| w[0]..w[1]).collect()
}
