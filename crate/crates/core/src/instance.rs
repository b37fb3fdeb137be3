//! WORMS instances: a static tree, a set of messages with target leaves,
//! and the DAM parameters `P` (parallel flushes per step) and `B` (node and
//! flush capacity).

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, WormsError};

/// Smallest node capacity accepted; keeps the `B/12` threshold nonzero.
pub const MIN_CAPACITY: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DamParams {
    /// Parallel flushes per time step.
    pub p: usize,
    /// Flush size and node capacity.
    pub b: usize,
}

impl DamParams {
    pub fn new(p: usize, b: usize) -> Result<Self> {
        if p < 1 {
            return Err(WormsError::NoParallelism(p));
        }
        if b < MIN_CAPACITY {
            return Err(WormsError::CapacityTooSmall(b));
        }
        Ok(DamParams { p, b })
    }
}

/// A rooted tree over dense node ids `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeTopology {
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    depth: Vec<usize>,
    root: usize,
    height: usize,
    leaves: Vec<usize>,
    // preorder entry/exit stamps for O(1) descendant tests
    enter: Vec<usize>,
    exit: Vec<usize>,
}

impl TreeTopology {
    /// Builds and checks a tree from a parent array (`None` marks the root).
    ///
    /// Requires exactly one root, no cycles, all nodes reachable, height at
    /// least one and every leaf at the same height.
    pub fn from_parents(parents: &[Option<usize>]) -> Result<Self> {
        let n = parents.len();
        if n == 0 {
            return Err(WormsError::InvalidTree("tree has no nodes".into()));
        }
        let mut root = None;
        let mut children = vec![Vec::new(); n];
        for (v, p) in parents.iter().enumerate() {
            match *p {
                None => {
                    if let Some(r) = root {
                        return Err(WormsError::InvalidTree(format!(
                            "nodes {r} and {v} are both roots"
                        )));
                    }
                    root = Some(v);
                }
                Some(p) if p >= n => {
                    return Err(WormsError::InvalidTree(format!(
                        "node {v} has out-of-range parent {p}"
                    )));
                }
                Some(p) if p == v => {
                    return Err(WormsError::InvalidTree(format!("node {v} is its own parent")));
                }
                Some(p) => children[p].push(v),
            }
        }
        let root = root.ok_or_else(|| WormsError::InvalidTree("no root node".into()))?;

        let mut depth = vec![usize::MAX; n];
        let mut enter = vec![0; n];
        let mut exit = vec![0; n];
        let mut clock = 0;
        // iterative preorder; children are already in ascending id order
        let mut stack = vec![(root, 0usize, false)];
        depth[root] = 0;
        let mut seen = 0;
        while let Some((v, d, done)) = stack.pop() {
            if done {
                exit[v] = clock;
                continue;
            }
            seen += 1;
            depth[v] = d;
            enter[v] = clock;
            clock += 1;
            stack.push((v, d, true));
            for &c in children[v].iter().rev() {
                stack.push((c, d + 1, false));
            }
        }
        if seen != n {
            return Err(WormsError::InvalidTree(format!(
                "{} of {n} nodes are unreachable from root {root} (cycle or disconnected)",
                n - seen
            )));
        }

        let leaves: Vec<usize> = (0..n).filter(|&v| children[v].is_empty()).collect();
        let height = leaves.iter().map(|&l| depth[l]).max().unwrap_or(0);
        if height == 0 {
            return Err(WormsError::InvalidTree("tree height must be at least 1".into()));
        }
        if let Some(&leaf) = leaves.iter().find(|&&l| depth[l] != height) {
            return Err(WormsError::NonUniformLeafHeight {
                leaf,
                height: depth[leaf],
                expected: height,
            });
        }

        Ok(TreeTopology {
            parent: parents.to_vec(),
            children,
            depth,
            root,
            height,
            leaves,
            enter,
            exit,
        })
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn root(&self) -> usize {
        self.root
    }

    /// Tree height `h`: edges from the root to any leaf.
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn parent(&self, v: usize) -> Option<usize> {
        self.parent[v]
    }

    pub fn parents(&self) -> &[Option<usize>] {
        &self.parent
    }

    pub fn children(&self, v: usize) -> &[usize] {
        &self.children[v]
    }

    /// Edges between `v` and the root.
    pub fn depth(&self, v: usize) -> usize {
        self.depth[v]
    }

    pub fn is_leaf(&self, v: usize) -> bool {
        self.children[v].is_empty()
    }

    pub fn is_root(&self, v: usize) -> bool {
        v == self.root
    }

    /// Internal nodes other than the root; the only nodes with a capacity.
    pub fn is_bounded(&self, v: usize) -> bool {
        v != self.root && !self.children[v].is_empty()
    }

    pub fn leaves(&self) -> &[usize] {
        &self.leaves
    }

    /// True when `d` lies in the subtree of `a` (including `a` itself).
    pub fn is_descendant(&self, d: usize, a: usize) -> bool {
        self.enter[a] <= self.enter[d] && self.enter[d] < self.exit[a]
    }

    /// Nodes from the root down to `v`, inclusive.
    pub fn path_from_root(&self, v: usize) -> Vec<usize> {
        let mut path = Vec::with_capacity(self.depth[v] + 1);
        let mut cur = Some(v);
        while let Some(u) = cur {
            path.push(u);
            cur = self.parent[u];
        }
        path.reverse();
        path
    }

    /// Nodes in preorder (children ascending).
    pub fn preorder(&self) -> Vec<usize> {
        let mut order = vec![0; self.len()];
        for v in 0..self.len() {
            order[self.enter[v]] = v;
        }
        order
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Message {
    pub id: usize,
    pub target: usize,
}

/// A validated WORMS instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WormsInstance {
    tree: TreeTopology,
    targets: Vec<usize>,
    params: DamParams,
    // root-to-target path of every message, flattened with stride h + 1
    paths: Vec<usize>,
}

impl WormsInstance {
    pub fn new(tree: TreeTopology, targets: Vec<usize>, params: DamParams) -> Result<Self> {
        for (m, &t) in targets.iter().enumerate() {
            if t >= tree.len() || !tree.is_leaf(t) {
                return Err(WormsError::TargetNotLeaf { message: m, node: t });
            }
        }
        let stride = tree.height() + 1;
        let mut paths = Vec::with_capacity(targets.len() * stride);
        for &t in &targets {
            paths.extend(tree.path_from_root(t));
        }
        Ok(WormsInstance {
            tree,
            targets,
            params,
            paths,
        })
    }

    /// Convenience constructor straight from a parent array.
    pub fn from_parts(
        parents: &[Option<usize>],
        targets: Vec<usize>,
        p: usize,
        b: usize,
    ) -> Result<Self> {
        let params = DamParams::new(p, b)?;
        let tree = TreeTopology::from_parents(parents)?;
        Self::new(tree, targets, params)
    }

    pub fn tree(&self) -> &TreeTopology {
        &self.tree
    }

    pub fn params(&self) -> DamParams {
        self.params
    }

    pub fn p(&self) -> usize {
        self.params.p
    }

    pub fn b(&self) -> usize {
        self.params.b
    }

    pub fn height(&self) -> usize {
        self.tree.height()
    }

    pub fn num_messages(&self) -> usize {
        self.targets.len()
    }

    pub fn target(&self, m: usize) -> usize {
        self.targets[m]
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    pub fn messages(&self) -> impl Iterator<Item = Message> + '_ {
        self.targets
            .iter()
            .enumerate()
            .map(|(id, &target)| Message { id, target })
    }

    /// Node at depth `d` on the root-to-target path of message `m`.
    pub fn path_node(&self, m: usize, d: usize) -> usize {
        self.paths[m * (self.height() + 1) + d]
    }

    /// `n = |M| + |T|`.
    pub fn size(&self) -> usize {
        self.targets.len() + self.tree.len()
    }

    pub fn to_doc(&self) -> InstanceDoc {
        InstanceDoc {
            b: self.params.b,
            p: self.params.p,
            parents: self.tree.parents().to_vec(),
            message_targets: self.targets.clone(),
        }
    }

    pub fn from_doc(doc: &InstanceDoc) -> Result<Self> {
        Self::from_parts(&doc.parents, doc.message_targets.clone(), doc.p, doc.b)
    }

    /// Parses and validates an instance document.
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: InstanceDoc = serde_json::from_str(text).map_err(|e| {
            WormsError::Parse(format!("line {}, column {}: {e}", e.line(), e.column()))
        })?;
        Self::from_doc(&doc)
    }

    /// Canonical single-line JSON encoding.
    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_doc()).expect("instance document serializes")
    }

    /// Hex SHA-256 of the canonical encoding.
    pub fn content_hash(&self) -> String {
        let digest = Sha256::digest(self.to_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// On-disk instance format, fields in canonical order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceDoc {
    #[serde(rename = "B")]
    pub b: usize,
    #[serde(rename = "P")]
    pub p: usize,
    pub parents: Vec<Option<usize>>,
    pub message_targets: Vec<usize>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_leaf_instance_has_height_two() {
        // root 0 -> x 1 -> leaves 2,3,4
        let inst = WormsInstance::from_parts(
            &[None, Some(0), Some(1), Some(1), Some(1)],
            vec![2, 2, 3, 4],
            1,
            12,
        )
        .unwrap();
        assert_eq!(inst.height(), 2);
        assert_eq!(inst.tree().leaves(), &[2, 3, 4]);
        assert_eq!(inst.path_node(2, 0), 0);
        assert_eq!(inst.path_node(2, 1), 1);
        assert_eq!(inst.path_node(2, 2), 3);
    }

    #[test]
    fn uneven_leaves_rejected() {
        // leaf 1 at height 1, leaf 3 at height 2
        let err = TreeTopology::from_parents(&[None, Some(0), Some(0), Some(2)]).unwrap_err();
        assert!(matches!(err, WormsError::NonUniformLeafHeight { leaf: 1, .. }));
        assert!(err.to_string().contains("non-uniform leaf height"));
    }

    #[test]
    fn structural_errors() {
        assert!(matches!(
            TreeTopology::from_parents(&[None, None]),
            Err(WormsError::InvalidTree(_))
        ));
        assert!(matches!(
            TreeTopology::from_parents(&[Some(1), Some(0)]),
            Err(WormsError::InvalidTree(_))
        ));
        // cycle detached from the root
        assert!(matches!(
            TreeTopology::from_parents(&[None, Some(0), Some(3), Some(2)]),
            Err(WormsError::InvalidTree(_))
        ));
        // root-only tree has height 0
        assert!(matches!(
            TreeTopology::from_parents(&[None]),
            Err(WormsError::InvalidTree(_))
        ));
        assert!(matches!(
            WormsInstance::from_parts(&[None, Some(0), Some(1)], vec![1], 1, 12),
            Err(WormsError::TargetNotLeaf { message: 0, node: 1 })
        ));
        assert_eq!(
            WormsInstance::from_parts(&[None, Some(0)], vec![1], 1, 11).unwrap_err(),
            WormsError::CapacityTooSmall(11)
        );
        assert_eq!(
            WormsInstance::from_parts(&[None, Some(0)], vec![1], 0, 12).unwrap_err(),
            WormsError::NoParallelism(0)
        );
    }

    #[test]
    fn parse_errors_carry_location() {
        let err = WormsInstance::from_json("{\"B\": 12,\n \"P\": }").unwrap_err();
        match err {
            WormsError::Parse(msg) => assert!(msg.contains("line 2"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn descendant_test() {
        let t = TreeTopology::from_parents(&[None, Some(0), Some(0), Some(1), Some(2)]).unwrap();
        assert!(t.is_descendant(3, 1));
        assert!(t.is_descendant(3, 0));
        assert!(!t.is_descendant(4, 1));
        assert!(t.is_descendant(1, 1));
        assert_eq!(t.preorder(), vec![0, 1, 3, 2, 4]);
    }
}
