use crate::error::{EngineError, Result};
use tensor_ad::{Bindings, GradMap, Graph, Tensor};

/// What a parameter group plays in the problem; informational, used by
/// instantiations to find their pieces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Architecture,
    Weights,
    Head,
    Encoder,
    Creator,
    Executor,
}

/// An ordered set of named tensors treated as one flat vector. Group
/// values, gradients, and finite-difference directions all share this
/// layout, so the vector-space helpers line up by position.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorGroup {
    items: Vec<(String, Tensor)>,
}

impl TensorGroup {
    pub fn new(items: Vec<(String, Tensor)>) -> Self {
        TensorGroup { items }
    }

    pub fn items(&self) -> &[(String, Tensor)] {
        &self.items
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.items.iter().map(|(n, _)| n.as_str())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.items.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn tensor_count(&self) -> usize {
        self.items.len()
    }

    pub fn param_count(&self) -> usize {
        self.items.iter().map(|(_, t)| t.len()).sum()
    }

    pub fn zeros_like(&self) -> TensorGroup {
        TensorGroup {
            items: self
                .items
                .iter()
                .map(|(n, t)| (n.clone(), Tensor::zeros(t.shape())))
                .collect(),
        }
    }

    /// self += c * other; layouts must match.
    pub fn axpy(&mut self, c: f64, other: &TensorGroup) -> Result<()> {
        debug_assert_eq!(self.items.len(), other.items.len());
        for ((_, a), (_, b)) in self.items.iter_mut().zip(&other.items) {
            a.axpy(c, b)?;
        }
        Ok(())
    }

    pub fn scale(&self, c: f64) -> TensorGroup {
        TensorGroup {
            items: self.items.iter().map(|(n, t)| (n.clone(), t.scale(c))).collect(),
        }
    }

    pub fn norm2(&self) -> f64 {
        self.items
            .iter()
            .map(|(_, t)| t.data().iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    pub fn max_abs_diff(&self, other: &TensorGroup) -> f64 {
        self.items
            .iter()
            .zip(&other.items)
            .flat_map(|((_, a), (_, b))| {
                a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs())
            })
            .fold(0.0, f64::max)
    }

    pub fn all_finite(&self) -> bool {
        self.items.iter().all(|(_, t)| t.all_finite())
    }

    /// Insert every tensor into a binding map, transforming names.
    pub fn bind_into(&self, bindings: &mut Bindings, rename: impl Fn(&str) -> String) {
        for (n, t) in &self.items {
            bindings.insert(rename(n), t.clone());
        }
    }

    /// Collect the gradient of `graph`'s output with respect to this
    /// group's leaves, renamed through `rename` (identity for committed
    /// values, `~`-prefix for approximations). Leaves the graph does not
    /// reference get zero entries.
    pub fn grad_from(
        &self,
        graph: &Graph,
        grads: &GradMap,
        rename: impl Fn(&str) -> String,
    ) -> TensorGroup {
        TensorGroup {
            items: self
                .items
                .iter()
                .map(|(n, t)| {
                    let leaf = rename(n);
                    let g = if graph.has_leaf(&leaf) {
                        grads
                            .get(&leaf)
                            .cloned()
                            .unwrap_or_else(|| Tensor::zeros(t.shape()))
                    } else {
                        Tensor::zeros(t.shape())
                    };
                    (n.clone(), g)
                })
                .collect(),
        }
    }

    /// Leaf names of this group that occur in the graph, renamed.
    pub fn present_leaves(&self, graph: &Graph, rename: impl Fn(&str) -> String) -> Vec<String> {
        self.items
            .iter()
            .map(|(n, _)| rename(n))
            .filter(|leaf| graph.has_leaf(leaf))
            .collect()
    }
}

/// Named, role-tagged collection of tensors with its own step size.
#[derive(Debug, Clone)]
pub struct ParamGroup {
    pub name: String,
    pub role: Role,
    pub lr: f64,
    pub value: TensorGroup,
}

impl ParamGroup {
    pub fn new(name: impl Into<String>, role: Role, lr: f64, value: TensorGroup) -> Result<Self> {
        let name = name.into();
        if lr < 0.0 || !lr.is_finite() {
            return Err(EngineError::NegativeLearnRate(name));
        }
        Ok(ParamGroup { name, role, lr, value })
    }
}

/// Leaf-name prefix marking a stage output (one-step approximation) rather
/// than a committed value.
pub const APPROX_PREFIX: &str = "~";

pub fn approx_leaf(name: &str) -> String {
    format!("{APPROX_PREFIX}{name}")
}

pub fn is_approx_leaf(name: &str) -> bool {
    name.starts_with(APPROX_PREFIX)
}

pub fn strip_approx(name: &str) -> &str {
    name.strip_prefix(APPROX_PREFIX).unwrap_or(name)
}
