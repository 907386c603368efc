//! Constituency trees over generated sentences. The tree is the ground truth
//! the hierarchical transformation rules and the positional queries run on.

use std::fmt;

use super::GrammarError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeLabel {
    S,
    NP,
    VP,
    RC,
    PP,
    Det,
    Noun,
    Verb,
    Aux,
    Prep,
    Rel,
    Term,
}

impl fmt::Display for NodeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            NodeLabel::S => "S",
            NodeLabel::NP => "NP",
            NodeLabel::VP => "VP",
            NodeLabel::RC => "RC",
            NodeLabel::PP => "PP",
            NodeLabel::Det => "Det",
            NodeLabel::Noun => "N",
            NodeLabel::Verb => "V",
            NodeLabel::Aux => "Aux",
            NodeLabel::Prep => "P",
            NodeLabel::Rel => "Rel",
            NodeLabel::Term => "Term",
        };
        f.write_str(s)
    }
}

/// Half-open token index range covered by a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
}

/// A node is either internal (non-empty `children`) or a leaf carrying one
/// word. Spans index into the sentence's token sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseTree {
    pub label: NodeLabel,
    pub span: Span,
    pub children: Vec<ParseTree>,
    pub leaf: Option<String>,
}

impl ParseTree {
    pub fn leaf(label: NodeLabel, word: impl Into<String>) -> Self {
        ParseTree {
            label,
            span: Span { start: 0, end: 0 },
            children: Vec::new(),
            leaf: Some(word.into()),
        }
    }

    pub fn internal(label: NodeLabel, children: Vec<ParseTree>) -> Self {
        ParseTree {
            label,
            span: Span { start: 0, end: 0 },
            children,
            leaf: None,
        }
    }

    /// Builds a tree and assigns spans in one pass. Use after assembling
    /// nodes with [`ParseTree::leaf`]/[`ParseTree::internal`].
    pub fn with_spans(mut self) -> Self {
        fn assign(node: &mut ParseTree, start: usize) -> usize {
            if node.leaf.is_some() {
                node.span = Span {
                    start,
                    end: start + 1,
                };
                return start + 1;
            }
            let mut cursor = start;
            for c in &mut node.children {
                cursor = assign(c, cursor);
            }
            node.span = Span { start, end: cursor };
            cursor
        }
        assign(&mut self, 0);
        self
    }

    /// Leaf concatenation, in order.
    pub fn tokens(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_tokens(&mut out);
        out
    }

    fn collect_tokens(&self, out: &mut Vec<String>) {
        if let Some(w) = &self.leaf {
            out.push(w.clone());
            return;
        }
        for c in &self.children {
            c.collect_tokens(out);
        }
    }

    /// Checks that spans partition parents in order and leaf positions match
    /// the token sequence.
    pub fn validate(&self) -> Result<(), GrammarError> {
        fn walk(node: &ParseTree) -> Result<(), GrammarError> {
            if let Some(_) = &node.leaf {
                if node.span.len() != 1 || !node.children.is_empty() {
                    return Err(GrammarError::MalformedTree("leaf with bad span or children".into()));
                }
                return Ok(());
            }
            if node.children.is_empty() {
                return Err(GrammarError::MalformedTree(format!(
                    "internal {} node without children",
                    node.label
                )));
            }
            let mut cursor = node.span.start;
            for c in &node.children {
                if c.span.start != cursor {
                    return Err(GrammarError::MalformedTree(format!(
                        "child spans of {} do not partition the parent",
                        node.label
                    )));
                }
                cursor = c.span.end;
                walk(c)?;
            }
            if cursor != node.span.end {
                return Err(GrammarError::MalformedTree(format!(
                    "children of {} do not cover the parent span",
                    node.label
                )));
            }
            Ok(())
        }
        walk(self)
    }

    /// First child with the given label, if any.
    pub fn child(&self, label: NodeLabel) -> Option<&ParseTree> {
        self.children.iter().find(|c| c.label == label)
    }

    /// Depth-first search for the first descendant (including self) with the
    /// given label.
    pub fn find(&self, label: NodeLabel) -> Option<&ParseTree> {
        if self.label == label {
            return Some(self);
        }
        self.children.iter().find_map(|c| c.find(label))
    }

    /// Token index of the main-clause auxiliary: the `Aux` child of the root
    /// clause's `VP`, not descending into embedded clauses.
    pub fn main_aux_index(&self) -> Result<usize, GrammarError> {
        let vp = self
            .child(NodeLabel::VP)
            .ok_or_else(|| GrammarError::MalformedTree("root has no VP".into()))?;
        let aux = vp
            .children
            .iter()
            .find(|c| c.label == NodeLabel::Aux)
            .ok_or(GrammarError::NoMainAuxiliary)?;
        Ok(aux.span.start)
    }

    /// Token index of the main-clause direct object's head noun.
    pub fn object_index(&self) -> Result<usize, GrammarError> {
        let vp = self
            .child(NodeLabel::VP)
            .ok_or_else(|| GrammarError::MalformedTree("root has no VP".into()))?;
        let object = vp.child(NodeLabel::NP).ok_or(GrammarError::NoObject)?;
        let head = object
            .children
            .iter()
            .find(|c| c.label == NodeLabel::Noun)
            .ok_or_else(|| GrammarError::MalformedTree("object NP has no head noun".into()))?;
        Ok(head.span.start)
    }

    /// Bracketed rendering, useful in failure output.
    pub fn pretty(&self) -> String {
        fn walk(node: &ParseTree, out: &mut String) {
            if let Some(w) = &node.leaf {
                out.push_str(w);
                return;
            }
            out.push('(');
            out.push_str(&node.label.to_string());
            for c in &node.children {
                out.push(' ');
                walk(c, out);
            }
            out.push(')');
        }
        let mut out = String::new();
        walk(self, &mut out);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn np(det: &str, noun: &str) -> ParseTree {
        ParseTree::internal(
            NodeLabel::NP,
            vec![
                ParseTree::leaf(NodeLabel::Det, det),
                ParseTree::leaf(NodeLabel::Noun, noun),
            ],
        )
    }

    fn simple_sentence() -> ParseTree {
        ParseTree::internal(
            NodeLabel::S,
            vec![
                np("the", "raven"),
                ParseTree::internal(
                    NodeLabel::VP,
                    vec![
                        ParseTree::leaf(NodeLabel::Aux, "does"),
                        ParseTree::leaf(NodeLabel::Verb, "observe"),
                        np("the", "newts"),
                    ],
                ),
                ParseTree::leaf(NodeLabel::Term, "."),
            ],
        )
        .with_spans()
    }

    #[test]
    fn spans_partition_and_tokens_match() {
        let t = simple_sentence();
        t.validate().unwrap();
        assert_eq!(
            t.tokens(),
            vec!["the", "raven", "does", "observe", "the", "newts", "."]
        );
        assert_eq!(t.span, Span { start: 0, end: 7 });
    }

    #[test]
    fn main_aux_and_object_queries() {
        let t = simple_sentence();
        assert_eq!(t.main_aux_index().unwrap(), 2);
        assert_eq!(t.object_index().unwrap(), 5);
    }

    #[test]
    fn missing_aux_is_an_error() {
        let t = ParseTree::internal(
            NodeLabel::S,
            vec![
                np("the", "raven"),
                ParseTree::internal(
                    NodeLabel::VP,
                    vec![ParseTree::leaf(NodeLabel::Verb, "observed"), np("the", "newts")],
                ),
                ParseTree::leaf(NodeLabel::Term, "."),
            ],
        )
        .with_spans();
        assert!(matches!(t.main_aux_index(), Err(GrammarError::NoMainAuxiliary)));
    }

    #[test]
    fn validate_rejects_tampered_spans() {
        let mut t = simple_sentence();
        t.children[0].span.end = 1;
        assert!(t.validate().is_err());
    }
}
