//! TOP tree data model and transforms: bracketed-format parsing and
//! serialization, unary-chain collapsing, right-branching binarization with a
//! dummy label, and labeled-span extraction.
//!
//! Spans are fence coordinates: `(i, j)` covers tokens `i+1..=j` when tokens
//! are 1-indexed, with `0 <= i < j <= n`. A split at fence `k` divides `(i, j)`
//! into `(i, k)` and `(k, j)`.

use crate::error::{Error, Result};

/// Node label. Intent and slot labels keep their raw `IN:` / `SL:` prefixes;
/// a collapsed chain lists its raw labels top-down; the dummy label marks
/// nodes introduced by binarization and always scores zero.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Intent(String),
    Slot(String),
    Chain(Vec<String>),
    Dummy,
}

impl Label {
    /// Parses a raw label string. Chains are joined with `+` in the label
    /// vocabulary, so `+` splits them back apart.
    pub fn parse(raw: &str) -> Result<Label> {
        if raw.contains('+') {
            let parts: Vec<String> = raw.split('+').map(str::to_string).collect();
            for p in &parts {
                Label::atom(p)?;
            }
            return Ok(Label::Chain(parts));
        }
        Label::atom(raw)
    }

    fn atom(raw: &str) -> Result<Label> {
        if let Some(rest) = raw.strip_prefix("IN:") {
            if rest.is_empty() {
                return Err(Error::parse(format!("empty intent label `{raw}`")));
            }
            Ok(Label::Intent(raw.to_string()))
        } else if let Some(rest) = raw.strip_prefix("SL:") {
            if rest.is_empty() {
                return Err(Error::parse(format!("empty slot label `{raw}`")));
            }
            Ok(Label::Slot(raw.to_string()))
        } else {
            Err(Error::parse(format!("label `{raw}` must start with IN: or SL:")))
        }
    }

    pub fn is_dummy(&self) -> bool {
        matches!(self, Label::Dummy)
    }

    pub fn is_slot(&self) -> bool {
        matches!(self, Label::Slot(_))
    }

    /// Raw label parts, top-down. Empty for the dummy label.
    pub fn parts(&self) -> Vec<&str> {
        match self {
            Label::Intent(s) | Label::Slot(s) => vec![s.as_str()],
            Label::Chain(parts) => parts.iter().map(String::as_str).collect(),
            Label::Dummy => vec![],
        }
    }

    /// Vocabulary string: chain parts joined with `+`.
    pub fn joined(&self) -> String {
        match self {
            Label::Intent(s) | Label::Slot(s) => s.clone(),
            Label::Chain(parts) => parts.join("+"),
            Label::Dummy => "<dummy>".to_string(),
        }
    }
}

/// Labeled constituent over a token span. Children cover disjoint, ordered
/// subspans of the parent; tokens not covered by any child belong directly to
/// this constituent (they become dummy leaves under binarization).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseTree {
    pub label: Label,
    pub span: (usize, usize),
    pub children: Vec<ParseTree>,
}

impl ParseTree {
    pub fn new(label: Label, span: (usize, usize), children: Vec<ParseTree>) -> Self {
        ParseTree { label, span, children }
    }

    pub fn width(&self) -> usize {
        self.span.1 - self.span.0
    }

    fn visit(&self, f: &mut impl FnMut(&ParseTree)) {
        f(self);
        for c in &self.children {
            c.visit(f);
        }
    }
}

/// Tokenized utterance. Tokens contain no whitespace or bracket characters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Utterance {
    pub tokens: Vec<String>,
    pub raw: Option<String>,
}

impl Utterance {
    pub fn new(tokens: Vec<String>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::parse("utterance has no tokens"));
        }
        for t in &tokens {
            if t.chars().any(|c| c.is_whitespace() || c == '[' || c == ']') {
                return Err(Error::parse(format!("invalid token `{t}`")));
            }
        }
        Ok(Utterance { tokens, raw: None })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Lowercased copies of the tokens in `span`.
    pub fn span_tokens_lower(&self, span: (usize, usize)) -> Vec<String> {
        self.tokens[span.0..span.1].iter().map(|t| t.to_lowercase()).collect()
    }
}

/// Span plus raw label string; the unit of bracket scoring.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LabeledSpan {
    pub start: usize,
    pub end: usize,
    pub label: String,
}

/// Formats a fence span in 1-indexed inclusive token coordinates ("6:8").
pub fn span_display(span: (usize, usize)) -> String {
    format!("{}:{}", span.0 + 1, span.1)
}

/// Parses a bracketed TOP annotation like
/// `[IN:GET_INFO_TRAFFIC How is traffic [SL:DESTINATION Dad 's house ] ]`.
pub fn parse_top(text: &str) -> Result<(ParseTree, Utterance)> {
    struct Open {
        label: Label,
        start: usize,
        children: Vec<ParseTree>,
    }
    let mut stack: Vec<Open> = Vec::new();
    let mut tokens: Vec<String> = Vec::new();
    let mut root: Option<ParseTree> = None;

    for piece in text.split_whitespace() {
        if let Some(raw) = piece.strip_prefix('[') {
            if raw.is_empty() {
                return Err(Error::parse("bare `[` without a label"));
            }
            if root.is_some() {
                return Err(Error::parse("content after the root constituent closed"));
            }
            let label = Label::parse(raw)?;
            if matches!(label, Label::Chain(_)) {
                return Err(Error::parse(format!("chain label `{raw}` not allowed in annotations")));
            }
            stack.push(Open { label, start: tokens.len(), children: Vec::new() });
        } else if piece == "]" {
            let open = stack.pop().ok_or_else(|| Error::parse("unbalanced `]`"))?;
            let span = (open.start, tokens.len());
            if span.0 == span.1 {
                return Err(Error::parse("empty constituent"));
            }
            let node = ParseTree::new(open.label, span, open.children);
            match stack.last_mut() {
                Some(parent) => parent.children.push(node),
                None => root = Some(node),
            }
        } else {
            if piece.contains('[') || piece.contains(']') {
                return Err(Error::parse(format!("token `{piece}` contains a bracket")));
            }
            if stack.is_empty() {
                return Err(Error::parse(format!("token `{piece}` outside any constituent")));
            }
            tokens.push(piece.to_string());
        }
    }
    if !stack.is_empty() {
        return Err(Error::parse("unbalanced brackets: constituent never closed"));
    }
    let root = root.ok_or_else(|| Error::parse("no constituent found"))?;
    let mut utt = Utterance::new(tokens)?;
    utt.raw = Some(text.trim().to_string());
    Ok((root, utt))
}

/// Serializes an original-form tree (no dummy or collapsed-chain labels) back
/// to the bracketed annotation. Inverse of [`parse_top`] up to single spacing.
pub fn serialize_top(tree: &ParseTree, utt: &Utterance) -> Result<String> {
    fn write_node(tree: &ParseTree, utt: &Utterance, out: &mut String) -> Result<()> {
        let raw = match &tree.label {
            Label::Intent(s) | Label::Slot(s) => s,
            Label::Chain(_) => {
                return Err(Error::Tree("serialize requires unary chains expanded".into()))
            }
            Label::Dummy => {
                return Err(Error::Tree("serialize requires dummy nodes removed".into()))
            }
        };
        out.push('[');
        out.push_str(raw);
        let mut pos = tree.span.0;
        let mut child_iter = tree.children.iter().peekable();
        while pos < tree.span.1 {
            out.push(' ');
            if let Some(child) = child_iter.peek() {
                if child.span.0 == pos {
                    write_node(child, utt, out)?;
                    pos = child.span.1;
                    child_iter.next();
                    continue;
                }
            }
            out.push_str(&utt.tokens[pos]);
            pos += 1;
        }
        out.push_str(" ]");
        Ok(())
    }
    let mut out = String::new();
    write_node(tree, utt, &mut out)?;
    Ok(out)
}

/// Collapses every maximal chain of single-child nodes over an identical span
/// into one chain label listing the chain top-down.
pub fn collapse_unary(tree: &ParseTree) -> ParseTree {
    let mut parts: Vec<String> = tree.label.parts().iter().map(|s| s.to_string()).collect();
    let mut cur = tree;
    while cur.children.len() == 1 && cur.children[0].span == cur.span && !cur.children[0].label.is_dummy() {
        cur = &cur.children[0];
        parts.extend(cur.label.parts().iter().map(|s| s.to_string()));
    }
    let label = if tree.label.is_dummy() {
        Label::Dummy
    } else if parts.len() == 1 {
        Label::parse(&parts[0]).expect("label parts are valid")
    } else {
        Label::Chain(parts)
    };
    let children = cur.children.iter().map(collapse_unary).collect();
    ParseTree::new(label, tree.span, children)
}

/// Expands collapsed chain labels back into nested single-child nodes.
/// Inverse of [`collapse_unary`].
pub fn expand_unary(tree: &ParseTree) -> ParseTree {
    let children: Vec<ParseTree> = tree.children.iter().map(expand_unary).collect();
    match &tree.label {
        Label::Chain(parts) => {
            let mut node = ParseTree::new(
                Label::parse(parts.last().unwrap()).expect("chain parts are valid"),
                tree.span,
                children,
            );
            for part in parts[..parts.len() - 1].iter().rev() {
                node = ParseTree::new(
                    Label::parse(part).expect("chain parts are valid"),
                    tree.span,
                    vec![node],
                );
            }
            node
        }
        other => ParseTree::new(other.clone(), tree.span, children),
    }
}

/// Right-branching binarization. Tokens not covered by a child become dummy
/// width-1 leaves; n-ary nodes become cascades of dummy-labeled binary nodes.
/// Expects a collapsed tree (no unary chains).
pub fn binarize(tree: &ParseTree) -> ParseTree {
    if tree.children.is_empty() && tree.width() == 1 {
        return tree.clone();
    }
    let mut items: Vec<ParseTree> = Vec::new();
    let mut pos = tree.span.0;
    for child in &tree.children {
        assert!(
            child.span != tree.span,
            "binarize requires collapsed input (single child covers the parent span)"
        );
        while pos < child.span.0 {
            items.push(ParseTree::new(Label::Dummy, (pos, pos + 1), vec![]));
            pos += 1;
        }
        items.push(binarize(child));
        pos = child.span.1;
    }
    while pos < tree.span.1 {
        items.push(ParseTree::new(Label::Dummy, (pos, pos + 1), vec![]));
        pos += 1;
    }
    let children = cascade(items);
    ParseTree::new(tree.label.clone(), tree.span, children)
}

fn cascade(mut items: Vec<ParseTree>) -> Vec<ParseTree> {
    match items.len() {
        0 | 1 => items,
        2 => items,
        _ => {
            let first = items.remove(0);
            let span = (first.span.1, items.last().unwrap().span.1);
            let rest = ParseTree::new(Label::Dummy, span, cascade(items));
            vec![first, rest]
        }
    }
}

/// Removes binarization artifacts: dummy leaves are dropped and dummy internal
/// nodes are dissolved into their parent. Inverse of [`binarize`].
pub fn debinarize(tree: &ParseTree) -> Result<ParseTree> {
    if tree.label.is_dummy() {
        return Err(Error::Tree("dummy root cannot be removed without merging siblings".into()));
    }
    fn gather(node: &ParseTree, out: &mut Vec<ParseTree>) -> Result<()> {
        for child in &node.children {
            if child.label.is_dummy() {
                gather(child, out)?;
            } else {
                out.push(debinarize_inner(child)?);
            }
        }
        Ok(())
    }
    fn debinarize_inner(node: &ParseTree) -> Result<ParseTree> {
        let mut children = Vec::new();
        gather(node, &mut children)?;
        Ok(ParseTree::new(node.label.clone(), node.span, children))
    }
    debinarize_inner(tree)
}

/// All labeled spans of the tree with unary chains flattened and dummy nodes
/// excluded. A chain contributes one span per part, all over the same fences.
pub fn labeled_spans(tree: &ParseTree) -> Vec<LabeledSpan> {
    let mut out = Vec::new();
    tree.visit(&mut |node| {
        for part in node.label.parts() {
            out.push(LabeledSpan { start: node.span.0, end: node.span.1, label: part.to_string() });
        }
    });
    out
}

/// Loads a corpus file: one annotation per line, or tab-separated columns with
/// the annotation last. Blank lines are skipped. Errors carry line numbers.
pub fn load_corpus(path: &std::path::Path) -> Result<Vec<(ParseTree, Utterance)>> {
    let text = std::fs::read_to_string(path)?;
    parse_corpus(&text)
}

pub fn parse_corpus(text: &str) -> Result<Vec<(ParseTree, Utterance)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let annotation = line.rsplit('\t').next().unwrap();
        let pair = parse_top(annotation).map_err(|e| match e {
            Error::Parse { msg, .. } => Error::parse_at(i + 1, msg),
            other => other,
        })?;
        out.push(pair);
    }
    Ok(out)
}

#[cfg(test)]
pub mod testutil {
    use super::*;
    use rand::Rng;

    /// Random collapsed original-form tree over `n` tokens: no unary chains,
    /// labeled children over disjoint subspans with token gaps allowed.
    pub fn random_tree(rng: &mut impl Rng, n: usize) -> ParseTree {
        let root_label = Label::Intent(format!("IN:R{}", rng.gen_range(0..3)));
        build(rng, (0, n), root_label, 0)
    }

    fn build(rng: &mut impl Rng, span: (usize, usize), label: Label, depth: usize) -> ParseTree {
        let width = span.1 - span.0;
        let mut children = Vec::new();
        if width >= 2 && depth < 4 {
            let mut pos = span.0;
            while pos < span.1 && children.len() < 8 {
                let remaining = span.1 - pos;
                // gap, or a child covering 1..=remaining tokens
                if rng.gen_bool(0.4) {
                    pos += 1;
                    continue;
                }
                let w = rng.gen_range(1..=remaining);
                // a single child covering the whole span would be a unary chain
                if pos == span.0 && w == width {
                    if width == 1 {
                        break;
                    }
                    continue;
                }
                let child_label = if rng.gen_bool(0.5) {
                    Label::Slot(format!("SL:C{}", rng.gen_range(0..4)))
                } else {
                    Label::Intent(format!("IN:C{}", rng.gen_range(0..4)))
                };
                children.push(build(rng, (pos, pos + w), child_label, depth + 1));
                pos += w;
            }
        }
        ParseTree::new(label, span, children)
    }
}
