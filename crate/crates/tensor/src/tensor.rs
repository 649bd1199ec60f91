use std::cmp::Reverse;
use std::collections::{HashMap, HashSet};
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use crate::error::{Result, TensorError};
use crate::ops::Op;

static NEXT_ID: AtomicU64 = AtomicU64::new(0);

/// An n-dimensional row-major array of `f64` that participates in a
/// differentiation graph.
///
/// Cloning is cheap: clones share the same node, including its gradient slot.
#[derive(Clone)]
pub struct Tensor(pub(crate) Arc<Node>);

pub(crate) struct Node {
    /// Creation order. Parents always have smaller ids than their children,
    /// so descending id order is a valid reverse topological order.
    pub(crate) id: u64,
    pub(crate) shape: Vec<usize>,
    pub(crate) data: Vec<f64>,
    pub(crate) requires_grad: bool,
    pub(crate) grad: Mutex<Option<Vec<f64>>>,
    pub(crate) op: Op,
}

impl Tensor {
    pub(crate) fn from_op(data: Vec<f64>, shape: Vec<usize>, op: Op) -> Tensor {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        let requires_grad = op.parents().iter().any(|p| p.requires_grad());
        // Nothing upstream needs a gradient: keep the value, drop the graph.
        let op = if requires_grad { op } else { Op::Leaf };
        Tensor(Arc::new(Node {
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            shape,
            data,
            requires_grad,
            grad: Mutex::new(None),
            op,
        }))
    }

    fn leaf(data: Vec<f64>, shape: Vec<usize>, requires_grad: bool) -> Result<Tensor> {
        if shape.iter().any(|&d| d == 0) {
            return Err(TensorError::param(
                "tensor",
                format!("zero-sized dimension in {shape:?}"),
            ));
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(TensorError::dim("tensor", &shape, &[data.len()]));
        }
        Ok(Tensor(Arc::new(Node {
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            shape,
            data,
            requires_grad,
            grad: Mutex::new(None),
            op: Op::Leaf,
        })))
    }

    /// A constant (no gradient tracking).
    pub fn new(data: Vec<f64>, shape: &[usize]) -> Result<Tensor> {
        Tensor::leaf(data, shape.to_vec(), false)
    }

    /// A leaf that accumulates a gradient on `backward`.
    pub fn param(data: Vec<f64>, shape: &[usize]) -> Result<Tensor> {
        Tensor::leaf(data, shape.to_vec(), true)
    }

    pub fn scalar(value: f64) -> Tensor {
        Tensor::leaf(vec![value], vec![1], false).expect("scalar shape")
    }

    pub fn zeros(shape: &[usize]) -> Result<Tensor> {
        Tensor::new(vec![0.0; shape.iter().product()], shape)
    }

    pub fn ones(shape: &[usize]) -> Result<Tensor> {
        Tensor::new(vec![1.0; shape.iter().product()], shape)
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.0.data
    }

    pub fn numel(&self) -> usize {
        self.0.data.len()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(
            self.numel(),
            1,
            "item() on tensor of shape {:?}",
            self.shape()
        );
        self.0.data[0]
    }

    pub fn grad(&self) -> Option<Vec<f64>> {
        self.0.grad.lock().expect("grad lock").clone()
    }

    pub fn zero_grad(&self) {
        *self.0.grad.lock().expect("grad lock") = None;
    }

    /// Same values, cut from the graph.
    pub fn detach(&self) -> Tensor {
        Tensor::leaf(self.0.data.clone(), self.0.shape.clone(), false).expect("valid shape")
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.0.data.clone()
    }

    pub(crate) fn id(&self) -> u64 {
        self.0.id
    }

    fn accumulate_grad(&self, g: &[f64]) {
        let mut slot = self.0.grad.lock().expect("grad lock");
        match slot.as_mut() {
            Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
            None => *slot = Some(g.to_vec()),
        }
    }

    /// Reverse-mode pass from a scalar loss.
    ///
    /// Gradients accumulate into every reachable tensor with
    /// `requires_grad`; call [`Tensor::zero_grad`] on leaves between passes
    /// over a shared leaf.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(TensorError::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape()
            )));
        }
        if !self.requires_grad() {
            return Ok(());
        }

        let mut nodes = Vec::new();
        let mut seen = HashSet::new();
        let mut stack = vec![self.clone()];
        while let Some(t) = stack.pop() {
            if !seen.insert(t.id()) {
                continue;
            }
            for p in t.0.op.parents() {
                if p.requires_grad() && !seen.contains(&p.id()) {
                    stack.push(p.clone());
                }
            }
            nodes.push(t);
        }
        nodes.sort_by_key(|t| Reverse(t.id()));

        let mut pending: HashMap<u64, Vec<f64>> = HashMap::new();
        pending.insert(self.id(), vec![1.0]);
        for node in &nodes {
            let Some(g) = pending.remove(&node.id()) else {
                continue;
            };
            for (parent, pg) in node.0.op.backward(node, &g) {
                if !parent.requires_grad() {
                    continue;
                }
                match pending.get_mut(&parent.id()) {
                    Some(acc) => acc.iter_mut().zip(&pg).for_each(|(a, b)| *a += b),
                    None => {
                        pending.insert(parent.id(), pg);
                    }
                }
            }
            node.accumulate_grad(&g);
        }
        Ok(())
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let preview: Vec<f64> = self.data().iter().take(8).copied().collect();
        f.debug_struct("Tensor")
            .field("shape", &self.shape())
            .field("requires_grad", &self.requires_grad())
            .field("data", &preview)
            .finish()
    }
}
