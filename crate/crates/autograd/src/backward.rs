//! Reverse-topological gradient accumulation.

use std::collections::{HashMap, HashSet};

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// In-flight gradient buffers keyed by tensor id. Contributions for tensors
/// that do not require a gradient are dropped on arrival.
pub(crate) struct GradSink<T: Real> {
    map: HashMap<u64, Vec<T>>,
}

impl<T: Real> GradSink<T> {
    fn new() -> Self {
        GradSink { map: HashMap::new() }
    }

    pub(crate) fn add(&mut self, t: &Tensor<T>, contrib: Vec<T>) {
        if !t.requires_grad() {
            return;
        }
        debug_assert_eq!(contrib.len(), t.numel());
        match self.map.entry(t.id()) {
            std::collections::hash_map::Entry::Occupied(mut e) => {
                for (a, b) in e.get_mut().iter_mut().zip(contrib) {
                    *a = *a + b;
                }
            }
            std::collections::hash_map::Entry::Vacant(e) => {
                e.insert(contrib);
            }
        }
    }

    fn take(&mut self, id: u64) -> Option<Vec<T>> {
        self.map.remove(&id)
    }
}

/// Iterative post-order DFS over the gradient-relevant subgraph: every
/// operation's inputs precede it in the returned order, and each node
/// appears exactly once.
fn topo_order<T: Real>(root: &Tensor<T>) -> Vec<Tensor<T>> {
    let mut order = Vec::new();
    let mut visited = HashSet::new();
    let mut stack: Vec<(Tensor<T>, bool)> = vec![(root.clone(), false)];
    while let Some((node, expanded)) = stack.pop() {
        if expanded {
            order.push(node);
            continue;
        }
        if !visited.insert(node.id()) {
            continue;
        }
        stack.push((node.clone(), true));
        if let Some(op) = node.op() {
            for input in op.inputs() {
                // Tensors without requires_grad are always leaves, so the
                // traversal naturally stops at stop-gradient boundaries.
                if input.requires_grad() && !visited.contains(&input.id()) {
                    stack.push((input.clone(), false));
                }
            }
        }
    }
    order
}

impl<T: Real> Tensor<T> {
    /// Run the backward pass from a scalar loss, accumulating gradients into
    /// every `requires_grad` tensor reachable through the recorded graph.
    ///
    /// Each recorded operation is visited exactly once. Calling this a second
    /// time from the same tensor is an error.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(Error::NonScalarLoss { numel: self.numel() });
        }
        if self.backward_done().replace(true) {
            return Err(Error::DoubleBackward);
        }
        if !self.requires_grad() {
            return Ok(());
        }
        let order = topo_order(self);
        let mut sink = GradSink::new();
        sink.map.insert(self.id(), vec![T::one()]);
        for node in order.iter().rev() {
            let Some(grad) = sink.take(node.id()) else { continue };
            node.accumulate_grad(&grad);
            if let Some(op) = node.op() {
                op.backward(node, &grad, &mut sink);
            }
        }
        Ok(())
    }
}
