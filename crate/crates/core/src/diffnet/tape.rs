use std::sync::Arc;

use super::conv::{Lowered, Padding, Sweep};
use super::tensor::Tensor;
use crate::error::{invalid, Result};
use crate::scalar::Scalar;
use crate::spectral::SpectralFilter;

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Elementwise nonlinearities.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    Relu,
    LeakyRelu(f64),
    Tanh,
    Sigmoid,
    Abs,
}

/// Scalar reductions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Reduction {
    Sum,
    Mean,
    /// mean |x|
    MeanAbs,
    /// mean x^2
    MeanSquare,
    /// mean log(max(x, eps))
    LogClamped(f64),
}

pub(crate) struct ConvSaved<T> {
    pub input: Var,
    pub weight: Var,
    pub bias: Var,
    pub padding: Padding,
    pub sweep: Sweep,
    pub in_dims: [usize; 4],
    pub out_channels: usize,
    pub lowered: Lowered<T>,
}

pub(crate) struct ConvTransposeSaved {
    pub input: Var,
    pub weight: Var,
    pub bias: Var,
    pub crop: usize,
    pub sweep: Sweep,
    pub in_dims: [usize; 4],
    pub out_dims: [usize; 4],
}

pub(crate) struct NormSaved<T> {
    pub input: Var,
    pub gain: Var,
    pub shift: Var,
    pub normalized: Vec<T>,
    pub inv_std: Vec<T>,
}

pub(crate) enum Op<T: Scalar> {
    Leaf,
    Conv(ConvSaved<T>),
    ConvTranspose(ConvTransposeSaved),
    InstanceNorm(NormSaved<T>),
    Activation { input: Var, kind: Activation },
    Spectral { input: Var, filter: Arc<SpectralFilter<T>> },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Affine { input: Var, scale: T },
    Concat { inputs: Vec<Var> },
    Slice { input: Var, offset: usize },
    SpatialMean { input: Var },
    Reduce { input: Var, kind: Reduction },
}

pub(crate) struct Node<T: Scalar> {
    pub shape: Vec<usize>,
    pub value: Vec<T>,
    pub requires_grad: bool,
    pub grad: Option<Vec<T>>,
    pub op: Op<T>,
}

/// Records a computation graph for one forward pass and replays it backwards.
///
/// Nodes are appended in evaluation order, so the node list is already
/// topologically sorted and the backward sweep is a reverse scan.
pub struct Tape<T: Scalar> {
    pub(crate) nodes: Vec<Node<T>>,
    kinks: Option<u64>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            kinks: None,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a leaf. Only leaves with `requires_grad` ever get a gradient buffer.
    pub fn leaf(&mut self, tensor: Tensor<T>, requires_grad: bool) -> Var {
        let shape = tensor.shape().to_vec();
        self.nodes.push(Node {
            shape,
            value: tensor.into_data(),
            requires_grad,
            grad: None,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, tensor: Tensor<T>) -> Var {
        self.leaf(tensor, true)
    }

    pub fn constant(&mut self, tensor: Tensor<T>) -> Var {
        self.leaf(tensor, false)
    }

    /// Copies a node's value into a fresh constant leaf; gradients stop here.
    pub fn detach(&mut self, v: Var) -> Var {
        let node = &self.nodes[v.0];
        let t = Tensor::new(node.shape.clone(), node.value.clone()).expect("node shape is valid");
        self.constant(t)
    }

    pub fn value(&self, v: Var) -> &[T] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn tensor(&self, v: Var) -> Tensor<T> {
        let node = &self.nodes[v.0];
        Tensor::new(node.shape.clone(), node.value.clone()).expect("node shape is valid")
    }

    /// The single value of a one-element node.
    pub fn scalar(&self, v: Var) -> T {
        self.nodes[v.0].value[0]
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient of a leaf, if any backward pass reached it.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn zero_grads(&mut self) {
        for node in &mut self.nodes {
            node.grad = None;
        }
    }

    /// Starts hashing the on/off pattern of every kinked nonlinearity evaluated from
    /// now on. Two forward passes with equal signatures took the same smooth branch
    /// everywhere, which is what finite-difference checks need.
    pub fn track_kinks(&mut self) {
        self.kinks = Some(0xcbf2_9ce4_8422_2325);
    }

    pub fn kink_signature(&self) -> Option<u64> {
        self.kinks
    }

    pub(crate) fn note_kinks(&mut self, bits: impl Iterator<Item = bool>) {
        if let Some(h) = self.kinks.as_mut() {
            for b in bits {
                *h ^= b as u64 + 1;
                *h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
    }

    pub(crate) fn push(&mut self, shape: Vec<usize>, value: Vec<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.nodes.push(Node {
            shape,
            value,
            requires_grad,
            grad: None,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    /// Propagates `d loss / d node` to every reachable leaf with `requires_grad`.
    ///
    /// Leaf gradients accumulate across calls until [`Tape::zero_grads`].
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let numel = self.nodes[loss.0].value.len();
        if numel != 1 {
            return Err(invalid(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.nodes[loss.0].shape
            )));
        }
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            if matches!(self.nodes[i].op, Op::Leaf) {
                let node = &mut self.nodes[i];
                match node.grad.as_mut() {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, &b)| *a += b),
                    None => node.grad = Some(g),
                }
                continue;
            }
            let (before, rest) = self.nodes.split_at(i);
            let mut sink = GradSink {
                nodes: before,
                grads: &mut grads[..i],
            };
            super::ops::backward_node(&rest[0], &g, &mut sink);
        }
        Ok(())
    }
}

/// Gradient buffers for the nodes preceding the one being differentiated.
pub(crate) struct GradSink<'a, T: Scalar> {
    pub nodes: &'a [Node<T>],
    grads: &'a mut [Option<Vec<T>>],
}

impl<'a, T: Scalar> GradSink<'a, T> {
    pub fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &'a [T] {
        &self.nodes[v.0].value
    }

    /// Zero-initialized gradient buffer of `v`.
    pub fn buf(&mut self, v: Var) -> &mut [T] {
        let len = self.nodes[v.0].value.len();
        self.grads[v.0].get_or_insert_with(|| vec![T::zero(); len])
    }

    /// Adds `g` into the gradient of `v` when `v` needs one.
    pub fn add(&mut self, v: Var, g: &[T]) {
        if self.wants(v) {
            self.buf(v).iter_mut().zip(g).for_each(|(a, &b)| *a += b);
        }
    }
}
