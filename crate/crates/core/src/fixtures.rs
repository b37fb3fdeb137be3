//! Small hand-built instances shared by tests, benches and docs.

use crate::instance::WormsInstance;

/// Nested tree description: a leaf carrying a message count, or an internal
/// node with children.
#[derive(Debug, Clone)]
pub enum Shape {
    Leaf(usize),
    Node(Vec<Shape>),
}

/// Builds an instance from `shape` with node ids in BFS order. Messages are
/// numbered leaf by leaf in BFS order.
pub fn from_shape(shape: &Shape, p: usize, b: usize) -> WormsInstance {
    let mut parents: Vec<Option<usize>> = vec![None];
    let mut loads: Vec<usize> = vec![0];
    let mut queue = std::collections::VecDeque::new();
    queue.push_back((0usize, shape));
    while let Some((id, s)) = queue.pop_front() {
        match s {
            Shape::Leaf(k) => loads[id] = *k,
            Shape::Node(kids) => {
                for kid in kids {
                    let c = parents.len();
                    parents.push(Some(id));
                    loads.push(0);
                    queue.push_back((c, kid));
                }
            }
        }
    }
    let mut targets = Vec::new();
    for (v, &k) in loads.iter().enumerate() {
        targets.extend(std::iter::repeat_n(v, k));
    }
    WormsInstance::from_parts(&parents, targets, p, b).expect("fixture shape is a valid instance")
}

/// Height-4 tree with B = 60 whose packed contents are 40, 11, 36, 14, 15
/// and 3 (the root).
pub fn mixed_packing_shape() -> Shape {
    use Shape::{Leaf, Node};
    Node(vec![
        Node(vec![
            Node(vec![
                Node(vec![Leaf(40), Leaf(3)]),
                Node(vec![Leaf(5), Leaf(6)]),
            ]),
            Node(vec![
                Node(vec![Leaf(6), Leaf(3)]),
                Node(vec![Leaf(9)]),
                Node(vec![Leaf(9)]),
                Node(vec![Leaf(4), Leaf(5)]),
            ]),
        ]),
        Node(vec![
            Node(vec![
                Node(vec![Leaf(5), Leaf(3)]),
                Node(vec![Leaf(1)]),
            ]),
            Node(vec![
                Node(vec![Leaf(6), Leaf(8)]),
                Node(vec![Leaf(3), Leaf(3)]),
            ]),
        ]),
    ])
}

pub fn mixed_packing_instance(p: usize) -> WormsInstance {
    from_shape(&mixed_packing_shape(), p, 60)
}
