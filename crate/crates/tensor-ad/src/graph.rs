use crate::error::{AdError, Result};
use crate::tensor::Tensor;
use std::collections::BTreeMap;

/// Handle to a node inside one `Graph`.
pub type NodeId = usize;

/// Primitive operations. Every node stores the ids of its inputs; inputs
/// always precede the node in the graph order, so a single left-to-right
/// sweep evaluates the graph.
#[derive(Debug, Clone)]
pub enum Node {
    /// Named input bound at evaluation time.
    Leaf(String),
    /// Baked-in constant.
    Const(Tensor),
    /// Elementwise a + b.
    Add(NodeId, NodeId),
    /// Elementwise a - b.
    Sub(NodeId, NodeId),
    /// Elementwise a * b.
    Mul(NodeId, NodeId),
    /// Elementwise a / b.
    Div(NodeId, NodeId),
    /// Elementwise -a.
    Neg(NodeId),
    /// a * c for a fixed constant c.
    Scale(NodeId, f64),
    /// Tensor scaled by a scalar-valued node.
    ScaleBy { tensor: NodeId, scalar: NodeId },
    /// [n,m] matrix plus a length-m row vector broadcast over rows.
    AddRow { matrix: NodeId, row: NodeId },
    /// [n,m] x [m,p] matrix product.
    MatMul(NodeId, NodeId),
    Tanh(NodeId),
    Relu(NodeId),
    Sigmoid(NodeId),
    /// Softmax over the last axis (rank 1 or 2).
    Softmax(NodeId),
    /// Scalar element of a rank-1 tensor.
    Index(NodeId, usize),
    /// Collapse to rank 1, keeping the data order.
    Flatten(NodeId),
    /// Sum of all entries -> scalar.
    Sum(NodeId),
    /// Mean of all entries -> scalar. Errors on empty input.
    Mean(NodeId),
    /// Sum of squared entries -> scalar.
    SquaredNorm(NodeId),
    /// Per-row cross-entropy between logits [n,k] and one-hot targets
    /// [n,k]; output is the length-n vector of losses.
    CrossEntropyLogits { logits: NodeId, targets: NodeId },
}

impl Node {
    pub fn inputs(&self) -> Vec<NodeId> {
        use Node::*;
        match self {
            Leaf(_) | Const(_) => vec![],
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) | MatMul(a, b) => vec![*a, *b],
            Neg(a) | Scale(a, _) | Tanh(a) | Relu(a) | Sigmoid(a) | Softmax(a) | Index(a, _)
            | Flatten(a) | Sum(a) | Mean(a) | SquaredNorm(a) => vec![*a],
            ScaleBy { tensor, scalar } => vec![*tensor, *scalar],
            AddRow { matrix, row } => vec![*matrix, *row],
            CrossEntropyLogits { logits, targets } => vec![*logits, *targets],
        }
    }

    pub fn op_name(&self) -> &'static str {
        use Node::*;
        match self {
            Leaf(_) => "leaf",
            Const(_) => "const",
            Add(..) => "add",
            Sub(..) => "sub",
            Mul(..) => "mul",
            Div(..) => "div",
            Neg(..) => "neg",
            Scale(..) => "scale",
            ScaleBy { .. } => "scale_by",
            AddRow { .. } => "add_row",
            MatMul(..) => "matmul",
            Tanh(..) => "tanh",
            Relu(..) => "relu",
            Sigmoid(..) => "sigmoid",
            Softmax(..) => "softmax",
            Index(..) => "index",
            Flatten(..) => "flatten",
            Sum(..) => "sum",
            Mean(..) => "mean",
            SquaredNorm(..) => "squared_norm",
            CrossEntropyLogits { .. } => "cross_entropy_logits",
        }
    }
}

/// Immutable define-then-run computation graph with a scalar output.
/// Built once, evaluated many times with fresh bindings; safe to share
/// across threads.
#[derive(Debug, Clone)]
pub struct Graph {
    nodes: Vec<Node>,
    output: NodeId,
    leaves: BTreeMap<String, NodeId>,
}

impl Graph {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn output(&self) -> NodeId {
        self.output
    }

    pub fn leaves(&self) -> &BTreeMap<String, NodeId> {
        &self.leaves
    }

    pub fn leaf_names(&self) -> impl Iterator<Item = &str> {
        self.leaves.keys().map(|s| s.as_str())
    }

    pub fn has_leaf(&self, name: &str) -> bool {
        self.leaves.contains_key(name)
    }
}

/// Builder for [`Graph`]. Methods append nodes and hand back ids.
#[derive(Debug, Default)]
pub struct GraphBuilder {
    nodes: Vec<Node>,
    leaves: BTreeMap<String, NodeId>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, node: Node) -> NodeId {
        self.nodes.push(node);
        self.nodes.len() - 1
    }

    /// Register (or reuse) a named leaf.
    pub fn leaf(&mut self, name: &str) -> NodeId {
        if let Some(&id) = self.leaves.get(name) {
            return id;
        }
        let id = self.push(Node::Leaf(name.to_string()));
        self.leaves.insert(name.to_string(), id);
        id
    }

    pub fn constant(&mut self, t: Tensor) -> NodeId {
        self.push(Node::Const(t))
    }

    pub fn scalar_const(&mut self, v: f64) -> NodeId {
        self.constant(Tensor::scalar(v))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Node::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Node::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Node::Mul(a, b))
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Node::Div(a, b))
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        self.push(Node::Neg(a))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        self.push(Node::Scale(a, c))
    }

    pub fn scale_by(&mut self, tensor: NodeId, scalar: NodeId) -> NodeId {
        self.push(Node::ScaleBy { tensor, scalar })
    }

    pub fn add_row(&mut self, matrix: NodeId, row: NodeId) -> NodeId {
        self.push(Node::AddRow { matrix, row })
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Node::MatMul(a, b))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.push(Node::Tanh(a))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        self.push(Node::Relu(a))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        self.push(Node::Sigmoid(a))
    }

    pub fn softmax(&mut self, a: NodeId) -> NodeId {
        self.push(Node::Softmax(a))
    }

    pub fn index(&mut self, a: NodeId, i: usize) -> NodeId {
        self.push(Node::Index(a, i))
    }

    pub fn flatten(&mut self, a: NodeId) -> NodeId {
        self.push(Node::Flatten(a))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        self.push(Node::Sum(a))
    }

    pub fn mean(&mut self, a: NodeId) -> NodeId {
        self.push(Node::Mean(a))
    }

    pub fn squared_norm(&mut self, a: NodeId) -> NodeId {
        self.push(Node::SquaredNorm(a))
    }

    pub fn cross_entropy_logits(&mut self, logits: NodeId, targets: NodeId) -> NodeId {
        self.push(Node::CrossEntropyLogits { logits, targets })
    }

    pub fn finish(self, output: NodeId) -> Result<Graph> {
        if output >= self.nodes.len() {
            return Err(AdError::shape("GraphBuilder::finish", "output id out of range"));
        }
        Ok(Graph { nodes: self.nodes, output, leaves: self.leaves })
    }
}
