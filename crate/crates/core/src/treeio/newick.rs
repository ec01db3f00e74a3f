//! Newick reader and writer.
//!
//! Dialect: every non-root edge carries a branch length, internal labels are
//! read and dropped, `[...]` comments are skipped anywhere whitespace is
//! allowed. Heights come from root-to-tip depths, with the deepest tip at 0.

use std::collections::HashSet;
use std::fmt::Write as _;

use super::tree::{Node, NodeId, TimeTree};
use crate::error::{Error, NewickErrorKind, Result};

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    nodes: Vec<Node>,
    branch: Vec<Option<f64>>,
    labels: HashSet<String>,
}

fn err(pos: usize, kind: NewickErrorKind) -> Error {
    Error::Newick { pos, kind }
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn skip_ws(&mut self) -> Result<()> {
        loop {
            match self.peek() {
                Some(c) if c.is_ascii_whitespace() => self.pos += 1,
                Some(b'[') => {
                    let start = self.pos;
                    while self.peek() != Some(b']') {
                        if self.peek().is_none() {
                            return Err(err(start, NewickErrorKind::UnexpectedEnd));
                        }
                        self.pos += 1;
                    }
                    self.pos += 1;
                }
                _ => return Ok(()),
            }
        }
    }

    fn label(&mut self) -> Result<Option<String>> {
        self.skip_ws()?;
        match self.peek() {
            Some(b'\'') => {
                let start = self.pos;
                self.pos += 1;
                let mut out = Vec::new();
                loop {
                    match self.peek() {
                        None => return Err(err(start, NewickErrorKind::UnexpectedEnd)),
                        Some(b'\'') if self.src.get(self.pos + 1) == Some(&b'\'') => {
                            out.push(b'\'');
                            self.pos += 2;
                        }
                        Some(b'\'') => {
                            self.pos += 1;
                            break;
                        }
                        Some(c) => {
                            out.push(c);
                            self.pos += 1;
                        }
                    }
                }
                Ok(Some(String::from_utf8_lossy(&out).into_owned()))
            }
            _ => {
                let start = self.pos;
                while let Some(c) = self.peek() {
                    if c.is_ascii_whitespace() || b"(),:;[".contains(&c) {
                        break;
                    }
                    self.pos += 1;
                }
                if self.pos == start {
                    Ok(None)
                } else {
                    let raw = String::from_utf8_lossy(&self.src[start..self.pos]);
                    Ok(Some(raw.replace('_', " ")))
                }
            }
        }
    }

    fn branch_length(&mut self) -> Result<Option<f64>> {
        self.skip_ws()?;
        if self.peek() != Some(b':') {
            return Ok(None);
        }
        self.pos += 1;
        self.skip_ws()?;
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c.is_ascii_digit() || b"+-.eE".contains(&c) {
                self.pos += 1;
            } else {
                break;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
        match text.parse::<f64>() {
            Ok(v) if v.is_finite() && v >= 0.0 => Ok(Some(v)),
            _ => Err(err(start, NewickErrorKind::InvalidNumber(text.to_string()))),
        }
    }

    fn push(&mut self, node: Node) -> NodeId {
        self.nodes.push(node);
        self.branch.push(None);
        self.nodes.len() - 1
    }

    fn subtree(&mut self, is_root: bool) -> Result<NodeId> {
        self.skip_ws()?;
        let start = self.pos;
        let id = match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let mut children = vec![self.subtree(false)?];
                loop {
                    self.skip_ws()?;
                    match self.peek() {
                        Some(b',') => {
                            self.pos += 1;
                            children.push(self.subtree(false)?);
                        }
                        Some(b')') => {
                            self.pos += 1;
                            break;
                        }
                        None | Some(b';') => {
                            return Err(err(self.pos, NewickErrorKind::UnbalancedParentheses))
                        }
                        Some(c) => return Err(err(self.pos, NewickErrorKind::UnexpectedChar(c as char))),
                    }
                }
                if children.len() != 2 {
                    return Err(err(
                        start,
                        NewickErrorKind::NonBinary {
                            children: children.len(),
                        },
                    ));
                }
                self.label()?;
                let id = self.push(Node {
                    parent: None,
                    children: Some([children[0], children[1]]),
                    height: 0.0,
                    label: None,
                });
                for c in children {
                    self.nodes[c].parent = Some(id);
                }
                id
            }
            Some(b')') => return Err(err(start, NewickErrorKind::UnbalancedParentheses)),
            None => return Err(err(start, NewickErrorKind::UnexpectedEnd)),
            Some(_) => {
                let label = self
                    .label()?
                    .ok_or_else(|| err(start, NewickErrorKind::UnlabeledTip))?;
                if !self.labels.insert(label.clone()) {
                    return Err(err(start, NewickErrorKind::DuplicateLabel(label)));
                }
                self.push(Node {
                    parent: None,
                    children: None,
                    height: 0.0,
                    label: Some(label),
                })
            }
        };
        let bl_pos = self.pos;
        let bl = self.branch_length()?;
        if bl.is_none() && !is_root {
            return Err(err(bl_pos, NewickErrorKind::MissingBranchLength));
        }
        self.branch[id] = bl;
        Ok(id)
    }
}

/// Parse a single rooted binary Newick tree.
pub fn parse_newick(text: &str) -> Result<TimeTree> {
    let mut p = Parser {
        src: text.as_bytes(),
        pos: 0,
        nodes: Vec::new(),
        branch: Vec::new(),
        labels: HashSet::new(),
    };
    let root = p.subtree(true)?;
    p.skip_ws()?;
    match p.peek() {
        Some(b';') => p.pos += 1,
        Some(b')') => return Err(err(p.pos, NewickErrorKind::UnbalancedParentheses)),
        Some(c) => return Err(err(p.pos, NewickErrorKind::UnexpectedChar(c as char))),
        None => return Err(err(p.pos, NewickErrorKind::UnexpectedEnd)),
    }
    p.skip_ws()?;
    if p.peek().is_some() {
        return Err(err(p.pos, NewickErrorKind::TrailingInput));
    }

    let Parser { nodes, branch, .. } = p;
    let n = nodes.len();
    // Depth from the root, top-down; ids are post-order so iterate in reverse.
    let mut depth = vec![0.0; n];
    for id in (0..n).rev() {
        if id == root {
            continue;
        }
        let parent = nodes[id].parent.expect("non-root has a parent");
        depth[id] = depth[parent] + branch[id].expect("checked during parsing");
    }
    let max_depth = nodes
        .iter()
        .enumerate()
        .filter(|(_, node)| node.is_tip())
        .map(|(id, _)| depth[id])
        .fold(0.0, f64::max);
    let nodes = nodes
        .into_iter()
        .enumerate()
        .map(|(id, mut node)| {
            node.height = max_depth - depth[id];
            if node.is_tip() && node.height < 0.0 {
                node.height = 0.0;
            }
            node
        })
        .collect();
    TimeTree::new(nodes, root)
}

fn write_label(out: &mut String, label: &str) {
    let plain = !label.is_empty()
        && label
            .chars()
            .all(|c| !c.is_whitespace() && !"(),:;[]'_".contains(c));
    if plain {
        out.push_str(label);
    } else if label.chars().all(|c| c == ' ' || (!c.is_whitespace() && !"(),:;[]'_".contains(c)))
        && !label.starts_with(' ')
    {
        out.push_str(&label.replace(' ', "_"));
    } else {
        out.push('\'');
        out.push_str(&label.replace('\'', "''"));
        out.push('\'');
    }
}

/// Write a tree as Newick with branch lengths equal to height differences.
pub fn serialize_newick(tree: &TimeTree) -> String {
    fn rec(tree: &TimeTree, id: NodeId, out: &mut String) {
        let node = tree.node(id);
        match node.children {
            Some([a, b]) => {
                out.push('(');
                rec(tree, a, out);
                out.push(',');
                rec(tree, b, out);
                out.push(')');
            }
            None => write_label(out, node.label.as_deref().unwrap_or("")),
        }
        if node.parent.is_some() {
            let _ = write!(out, ":{}", tree.branch_length(id));
        }
    }
    let mut out = String::new();
    rec(tree, tree.root(), &mut out);
    out.push(';');
    out
}
