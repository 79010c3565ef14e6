use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

/// A backward rule maps the node's output gradient to `(parent, gradient)`
/// contributions. Rules capture whatever forward values they need by clone.
pub(crate) type Backward = Box<dyn Fn(&Tensor) -> Vec<(Var, Tensor)>>;

struct Node {
    value: Tensor,
    backward: Option<Backward>,
}

/// Append-only computation graph for one forward pass.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    /// Inserts an input node (no gradient flows past it).
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, None)
    }

    pub(crate) fn push(&mut self, value: Tensor, backward: Option<Backward>) -> Var {
        self.nodes.push(Node { value, backward });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Reverse-mode sweep from the scalar node `loss`. Returns one gradient
    /// tensor per node (zeros where the loss does not depend on the node).
    pub fn backward(&self, loss: Var) -> Result<Vec<Tensor>> {
        let loss_value = self.value(loss);
        if loss_value.len() != 1 {
            return Err(Error::domain(
                "backward requires a scalar loss node".to_string(),
            ));
        }
        let mut grads: Vec<Tensor> = self
            .nodes
            .iter()
            .map(|n| Tensor::zeros(n.value.shape()))
            .collect();
        grads[loss.0].data_mut()[0] = 1.0;
        for id in (0..=loss.0).rev() {
            let Some(rule) = &self.nodes[id].backward else {
                continue;
            };
            if grads[id].data().iter().all(|&g| g == 0.0) {
                continue;
            }
            for (parent, contribution) in rule(&grads[id]) {
                debug_assert!(parent.0 < id, "graph must be topologically ordered");
                let acc = grads[parent.0].data_mut();
                for (a, c) in acc.iter_mut().zip(contribution.data()) {
                    *a += c;
                }
            }
        }
        Ok(grads)
    }
}
