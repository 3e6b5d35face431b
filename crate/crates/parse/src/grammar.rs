//! Line-oriented document grammar.
//!
//! ```text
//! # comment
//! ROOT lesson
//! ELEMENT lesson (title, body)
//! ELEMENT body (para | img)*
//! ELEMENT title TEXT
//! ELEMENT para TEXT
//! ELEMENT img EMPTY
//! ATTLIST img src REQUIRED
//! ATTLIST img alt OPTIONAL
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::error::GrammarError;
use crate::token::is_valid_name;

/// Allowed children of an element.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ContentModel {
    /// No children.
    Empty,
    /// Character data only.
    Text,
    /// Exactly these elements, in this order.
    Sequence(Vec<String>),
    /// Any number of children, each one of these elements.
    ChoiceStar(Vec<String>),
}

impl ContentModel {
    pub fn names(&self) -> &[String] {
        match self {
            ContentModel::Sequence(names) | ContentModel::ChoiceStar(names) => names,
            ContentModel::Empty | ContentModel::Text => &[],
        }
    }

    pub fn allows_text(&self) -> bool {
        matches!(self, ContentModel::Text)
    }
}

impl fmt::Display for ContentModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ContentModel::Empty => f.write_str("EMPTY"),
            ContentModel::Text => f.write_str("TEXT"),
            ContentModel::Sequence(names) => write!(f, "({})", names.join(", ")),
            ContentModel::ChoiceStar(names) => write!(f, "({})*", names.join(" | ")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum AttrUse {
    Required,
    Optional,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DtdGrammar {
    root: String,
    elements: BTreeMap<String, ContentModel>,
    attlists: BTreeMap<String, BTreeMap<String, AttrUse>>,
}

impl DtdGrammar {
    pub fn root(&self) -> &str {
        &self.root
    }

    pub fn element(&self, name: &str) -> Option<&ContentModel> {
        self.elements.get(name)
    }

    pub fn elements(&self) -> impl Iterator<Item = (&str, &ContentModel)> {
        self.elements.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Declared attributes of `element`; empty when it has no ATTLIST lines.
    pub fn attributes(&self, element: &str) -> impl Iterator<Item = (&str, AttrUse)> {
        self.attlists
            .get(element)
            .into_iter()
            .flat_map(|m| m.iter().map(|(k, v)| (k.as_str(), *v)))
    }

    pub fn attr_use(&self, element: &str, attr: &str) -> Option<AttrUse> {
        self.attlists
            .get(element)
            .and_then(|m| m.get(attr))
            .copied()
    }

    pub fn required_attrs(&self, element: &str) -> BTreeSet<&str> {
        self.attributes(element)
            .filter(|(_, u)| *u == AttrUse::Required)
            .map(|(n, _)| n)
            .collect()
    }
}

/// Parses grammar text. Declarations may appear in any order; references are
/// resolved once the whole file has been read.
pub fn load_grammar(text: &str) -> Result<DtdGrammar, GrammarError> {
    let mut root: Option<(String, usize)> = None;
    let mut elements = BTreeMap::new();
    let mut attlists: Vec<(usize, String, String, AttrUse)> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let syntax = |message: &str| GrammarError::Syntax {
            line,
            message: message.to_string(),
        };
        let (keyword, rest) = match content.split_once(char::is_whitespace) {
            Some((k, r)) => (k, r.trim()),
            None => (content, ""),
        };
        match keyword {
            "ROOT" => {
                if root.is_some() {
                    return Err(syntax("duplicate ROOT"));
                }
                if !is_valid_name(rest) {
                    return Err(syntax("ROOT expects one element name"));
                }
                root = Some((rest.to_string(), line));
            }
            "ELEMENT" => {
                let (name, model) = rest
                    .split_once(char::is_whitespace)
                    .ok_or_else(|| syntax("ELEMENT expects a name and a model"))?;
                if !is_valid_name(name) {
                    return Err(syntax("invalid element name"));
                }
                let model = parse_model(model.trim()).map_err(|m| syntax(&m))?;
                if elements.insert(name.to_string(), model).is_some() {
                    return Err(syntax("duplicate ELEMENT declaration"));
                }
            }
            "ATTLIST" => {
                let parts: Vec<&str> = rest.split_whitespace().collect();
                let [element, attr, usage] = parts[..] else {
                    return Err(syntax(
                        "ATTLIST expects element, attribute and REQUIRED|OPTIONAL",
                    ));
                };
                if !is_valid_name(element) || !is_valid_name(attr) {
                    return Err(syntax("invalid name in ATTLIST"));
                }
                let usage = match usage {
                    "REQUIRED" => AttrUse::Required,
                    "OPTIONAL" => AttrUse::Optional,
                    _ => return Err(syntax("attribute use must be REQUIRED or OPTIONAL")),
                };
                attlists.push((line, element.to_string(), attr.to_string(), usage));
            }
            _ => return Err(syntax("unknown declaration")),
        }
    }

    let Some((root, _)) = root else {
        return Err(GrammarError::Syntax {
            line: text.lines().count() + 1,
            message: "missing ROOT declaration".to_string(),
        });
    };
    if !elements.contains_key(&root) {
        return Err(GrammarError::UndeclaredElement(root));
    }
    for model in elements.values() {
        if let Some(missing) = model.names().iter().find(|n| !elements.contains_key(*n)) {
            return Err(GrammarError::UndeclaredElement(missing.clone()));
        }
    }

    let mut lists: BTreeMap<String, BTreeMap<String, AttrUse>> = BTreeMap::new();
    for (line, element, attr, usage) in attlists {
        if !elements.contains_key(&element) {
            return Err(GrammarError::UndeclaredElement(element));
        }
        if lists
            .entry(element)
            .or_default()
            .insert(attr, usage)
            .is_some()
        {
            return Err(GrammarError::Syntax {
                line,
                message: "duplicate ATTLIST entry".to_string(),
            });
        }
    }

    Ok(DtdGrammar {
        root,
        elements,
        attlists: lists,
    })
}

fn parse_model(model: &str) -> Result<ContentModel, String> {
    match model {
        "EMPTY" => return Ok(ContentModel::Empty),
        "TEXT" => return Ok(ContentModel::Text),
        _ => {}
    }
    let (inner, starred) = if let Some(body) = model.strip_suffix(")*") {
        (
            body.strip_prefix('(').ok_or("model must start with '('")?,
            true,
        )
    } else if let Some(body) = model.strip_suffix(')') {
        (
            body.strip_prefix('(').ok_or("model must start with '('")?,
            false,
        )
    } else {
        return Err(format!("unrecognised content model {model:?}"));
    };

    let sep = if starred { '|' } else { ',' };
    let other = if starred { ',' } else { '|' };
    if inner.contains(other) {
        return Err("mixed ',' and '|' in one model".to_string());
    }
    let names: Vec<String> = inner.split(sep).map(|n| n.trim().to_string()).collect();
    if names.iter().any(|n| !is_valid_name(n)) {
        return Err("invalid name in content model".to_string());
    }
    if starred {
        Ok(ContentModel::ChoiceStar(names))
    } else {
        Ok(ContentModel::Sequence(names))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_element_grammar() {
        let g = load_grammar("ROOT page\nELEMENT page (body)\nELEMENT body TEXT").unwrap();
        assert_eq!(g.root(), "page");
        assert_eq!(g.elements().count(), 2);
        assert_eq!(
            g.element("page"),
            Some(&ContentModel::Sequence(vec!["body".into()]))
        );
        assert_eq!(g.element("body"), Some(&ContentModel::Text));
    }

    #[test]
    fn undeclared_child_is_rejected() {
        let err = load_grammar("ROOT page\nELEMENT page (foo)").unwrap_err();
        assert_eq!(err, GrammarError::UndeclaredElement("foo".into()));
    }

    #[test]
    fn empty_file_is_missing_root() {
        assert!(matches!(
            load_grammar("").unwrap_err(),
            GrammarError::Syntax { .. }
        ));
    }

    #[test]
    fn choice_star_attlist_and_comments() {
        let g = load_grammar(
            "# course grammar\nROOT body\nELEMENT body (p | img)*  # blocks\nELEMENT p TEXT\nELEMENT img EMPTY\nATTLIST img src REQUIRED\nATTLIST img alt OPTIONAL\n",
        )
        .unwrap();
        assert_eq!(
            g.element("body"),
            Some(&ContentModel::ChoiceStar(vec!["p".into(), "img".into()]))
        );
        assert_eq!(
            g.required_attrs("img").into_iter().collect::<Vec<_>>(),
            ["src"]
        );
        assert_eq!(g.attr_use("img", "alt"), Some(AttrUse::Optional));
        assert_eq!(g.attr_use("p", "alt"), None);
    }

    #[test]
    fn syntax_errors_carry_line() {
        let err = load_grammar("ROOT a\nELEMENT a (b, c | d)\n").unwrap_err();
        assert!(matches!(err, GrammarError::Syntax { line: 2, .. }));
        let err = load_grammar("ROOT a\nELEMENT a EMPTY\nATTLIST a x SOMETIMES\n").unwrap_err();
        assert!(matches!(err, GrammarError::Syntax { line: 3, .. }));
        let err = load_grammar("ROOT a\nELEMENT a EMPTY\nELEMENT a TEXT\n").unwrap_err();
        assert!(matches!(err, GrammarError::Syntax { line: 3, .. }));
    }

    #[test]
    fn attlist_for_undeclared_element() {
        let err = load_grammar("ROOT a\nELEMENT a EMPTY\nATTLIST b x OPTIONAL\n").unwrap_err();
        assert_eq!(err, GrammarError::UndeclaredElement("b".into()));
    }

    #[test]
    fn undeclared_root() {
        let err = load_grammar("ROOT a\nELEMENT b EMPTY\n").unwrap_err();
        assert_eq!(err, GrammarError::UndeclaredElement("a".into()));
    }
}
