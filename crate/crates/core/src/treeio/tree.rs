//! Rooted binary genealogies with backward-time node heights.
//!
//! Nodes live in a flat arena addressed by [`NodeId`]. Heights increase into
//! the past; after normalization the most recent tip sits at height 0.

use crate::error::{Error, Result};

pub type NodeId = usize;

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub parent: Option<NodeId>,
    pub children: Option<[NodeId; 2]>,
    /// Backward time in user units.
    pub height: f64,
    /// Tip label; internal labels are not kept.
    pub label: Option<String>,
}

impl Node {
    pub fn is_tip(&self) -> bool {
        self.children.is_none()
    }
}

/// Direction of user-supplied tip dates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DateDirection {
    /// Calendar-like dates, larger is more recent.
    Forward,
    /// Ages before present, larger is older.
    Backward,
}

/// Anchors heights to the user's time axis so other time-indexed inputs
/// (binned covariates) can be mapped onto the same scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DateReference {
    pub direction: DateDirection,
    /// Date (forward) or age (backward) of the youngest tip.
    pub youngest: f64,
}

impl DateReference {
    pub fn to_height(&self, t: f64) -> f64 {
        match self.direction {
            DateDirection::Forward => self.youngest - t,
            DateDirection::Backward => t - self.youngest,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeTree {
    nodes: Vec<Node>,
    root: NodeId,
    reference: Option<DateReference>,
}

impl TimeTree {
    /// Build a tree from an arena and validate every structural invariant.
    pub fn new(nodes: Vec<Node>, root: NodeId) -> Result<Self> {
        let tree = Self {
            nodes,
            root,
            reference: None,
        };
        tree.validate()?;
        Ok(tree)
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn root_height(&self) -> f64 {
        self.nodes[self.root].height
    }

    pub fn reference(&self) -> Option<DateReference> {
        self.reference
    }

    pub(crate) fn set_reference(&mut self, reference: Option<DateReference>) {
        self.reference = reference;
    }

    pub fn tip_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_tip()).count()
    }

    pub fn tips(&self) -> impl Iterator<Item = (NodeId, &Node)> {
        self.nodes.iter().enumerate().filter(|(_, n)| n.is_tip())
    }

    pub fn internals(&self) -> impl Iterator<Item = (NodeId, &Node)> {
        self.nodes.iter().enumerate().filter(|(_, n)| !n.is_tip())
    }

    pub fn tip_by_label(&self, label: &str) -> Option<NodeId> {
        self.tips()
            .find(|(_, n)| n.label.as_deref() == Some(label))
            .map(|(id, _)| id)
    }

    /// Length of the branch above `id` (0 for the root).
    pub fn branch_length(&self, id: NodeId) -> f64 {
        match self.nodes[id].parent {
            Some(p) => self.nodes[p].height - self.nodes[id].height,
            None => 0.0,
        }
    }

    /// Node ids with every child listed before its parent.
    pub fn postorder(&self) -> Vec<NodeId> {
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![(self.root, false)];
        while let Some((id, expanded)) = stack.pop() {
            match (self.nodes[id].children, expanded) {
                (Some([a, b]), false) => {
                    stack.push((id, true));
                    stack.push((b, false));
                    stack.push((a, false));
                }
                _ => out.push(id),
            }
        }
        out
    }

    /// Shift all heights so the youngest tip is at exactly 0; returns the shift.
    pub fn normalize(&mut self) -> f64 {
        let min = self
            .tips()
            .map(|(_, n)| n.height)
            .fold(f64::INFINITY, f64::min);
        if min != 0.0 {
            for node in &mut self.nodes {
                node.height -= min;
            }
            // Tips sharing the minimum must land on 0 exactly.
            for node in &mut self.nodes {
                if node.is_tip() && node.height.abs() <= f64::EPSILON * min.abs() {
                    node.height = 0.0;
                }
            }
        }
        min
    }

    pub(crate) fn set_heights(&mut self, heights: &[f64]) {
        for (node, &h) in self.nodes.iter_mut().zip(heights) {
            node.height = h;
        }
    }

    /// Check the binary-tree and height invariants.
    ///
    /// Zero-length branches are allowed; a parent younger than a child is not.
    pub fn validate(&self) -> Result<()> {
        let n_nodes = self.nodes.len();
        if n_nodes < 3 {
            return Err(Error::InvalidTree(format!(
                "need at least 2 tips, got {n_nodes} nodes"
            )));
        }
        if self.root >= n_nodes {
            return Err(Error::InvalidTree("root index out of range".into()));
        }
        let roots = self.nodes.iter().filter(|n| n.parent.is_none()).count();
        if roots != 1 || self.nodes[self.root].parent.is_some() {
            return Err(Error::InvalidTree(format!(
                "expected exactly one root, found {roots}"
            )));
        }
        let tips = self.tip_count();
        if n_nodes != 2 * tips - 1 {
            return Err(Error::InvalidTree(format!(
                "{tips} tips require {} internal nodes, found {}",
                tips - 1,
                n_nodes - tips
            )));
        }
        for (id, node) in self.nodes.iter().enumerate() {
            if !node.height.is_finite() {
                return Err(Error::InvalidTree(format!("node {id} has non-finite height")));
            }
            if node.is_tip() && node.height < 0.0 {
                return Err(Error::InvalidTree(format!("tip {id} has negative height")));
            }
            if let Some(children) = node.children {
                for c in children {
                    if c >= n_nodes || self.nodes[c].parent != Some(id) {
                        return Err(Error::InvalidTree(format!(
                            "child link {id} -> {c} is inconsistent"
                        )));
                    }
                    if self.nodes[c].height > node.height {
                        return Err(Error::InvalidTree(format!(
                            "node {id} (height {}) is younger than its child {c} (height {})",
                            node.height, self.nodes[c].height
                        )));
                    }
                }
            }
        }
        if self.postorder().len() != n_nodes {
            return Err(Error::InvalidTree("not all nodes reachable from root".into()));
        }
        Ok(())
    }
}
