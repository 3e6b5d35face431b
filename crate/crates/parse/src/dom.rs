use crate::sink::ContentSink;
use crate::token::Attributes;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DomNode {
    Element {
        name: String,
        attrs: Attributes,
        children: Vec<DomNode>,
    },
    Text(String),
}

impl DomNode {
    pub fn element(name: &str) -> DomNode {
        DomNode::Element {
            name: name.to_string(),
            attrs: Attributes::new(),
            children: Vec::new(),
        }
    }

    pub fn name(&self) -> Option<&str> {
        match self {
            DomNode::Element { name, .. } => Some(name),
            DomNode::Text(_) => None,
        }
    }

    pub fn children(&self) -> &[DomNode] {
        match self {
            DomNode::Element { children, .. } => children,
            DomNode::Text(_) => &[],
        }
    }

    /// Number of nodes in this subtree, itself included.
    pub fn node_count(&self) -> usize {
        1 + self
            .children()
            .iter()
            .map(DomNode::node_count)
            .sum::<usize>()
    }

    pub fn depth(&self) -> usize {
        1 + self
            .children()
            .iter()
            .map(DomNode::depth)
            .max()
            .unwrap_or(0)
    }
}

/// Deterministic text form: attributes sorted by name, no added whitespace,
/// childless elements written as `<name/>`.
pub fn serialize_canonical(root: &DomNode) -> String {
    let mut out = String::new();
    write_node(root, &mut out);
    out
}

fn write_node(node: &DomNode, out: &mut String) {
    match node {
        DomNode::Text(text) => out.push_str(text),
        DomNode::Element {
            name,
            attrs,
            children,
        } => {
            out.push('<');
            out.push_str(name);
            for (k, v) in attrs {
                out.push(' ');
                out.push_str(k);
                out.push_str("=\"");
                out.push_str(v);
                out.push('"');
            }
            if children.is_empty() {
                out.push_str("/>");
                return;
            }
            out.push('>');
            for child in children {
                write_node(child, out);
            }
            out.push_str("</");
            out.push_str(name);
            out.push('>');
        }
    }
}

/// Sink that assembles the event stream into a tree. Adjacent text events
/// are merged into one text node.
#[derive(Debug, Default)]
pub struct DomBuilder {
    stack: Vec<DomNode>,
    root: Option<DomNode>,
}

impl DomBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn finish(self) -> Option<DomNode> {
        self.root
    }
}

impl ContentSink for DomBuilder {
    fn open_element(&mut self, name: &str, attrs: &Attributes) {
        self.stack.push(DomNode::Element {
            name: name.to_string(),
            attrs: attrs.clone(),
            children: Vec::new(),
        });
    }

    fn text(&mut self, text: &str) {
        if let Some(DomNode::Element { children, .. }) = self.stack.last_mut() {
            if let Some(DomNode::Text(prev)) = children.last_mut() {
                prev.push_str(text);
            } else {
                children.push(DomNode::Text(text.to_string()));
            }
        }
    }

    fn close_element(&mut self, _name: &str) {
        let Some(node) = self.stack.pop() else {
            return;
        };
        match self.stack.last_mut() {
            Some(DomNode::Element { children, .. }) => children.push(node),
            _ => self.root = Some(node),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sorted_attributes() {
        let node = DomNode::Element {
            name: "p".into(),
            attrs: [("b", "2"), ("a", "1")]
                .into_iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
            children: vec![DomNode::Text("x".into())],
        };
        assert_eq!(serialize_canonical(&node), r#"<p a="1" b="2">x</p>"#);
    }

    #[test]
    fn empty_element_self_closes() {
        assert_eq!(serialize_canonical(&DomNode::element("img")), "<img/>");
    }

    #[test]
    fn builder_merges_text() {
        let mut b = DomBuilder::new();
        b.open_element("p", &Attributes::new());
        b.text("a");
        b.text("b");
        b.close_element("p");
        let root = b.finish().unwrap();
        assert_eq!(root.children(), &[DomNode::Text("ab".into())]);
        assert_eq!(root.node_count(), 2);
        assert_eq!(root.depth(), 2);
    }
}
