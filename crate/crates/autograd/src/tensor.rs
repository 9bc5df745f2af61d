use std::cell::{Cell, RefCell};
use std::fmt;
use std::rc::Rc;

use crate::error::{shape_err, Result};
use crate::op::Op;

/// Element type of a tensor: `f32` for training, `f64` for verification.
pub trait Real:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + fmt::Debug
    + fmt::Display
    + Default
    + Send
    + Sync
    + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

/// Convert an `f64` constant into the element type.
#[inline]
pub fn real<T: Real>(v: f64) -> T {
    T::from_f64(v).expect("constant not representable")
}

// Graphs never span threads, so a thread-local counter is enough for
// unique node ids.
thread_local! {
    static NEXT_ID: Cell<u64> = const { Cell::new(0) };
}

fn next_id() -> u64 {
    NEXT_ID.with(|c| {
        let id = c.get();
        c.set(id + 1);
        id
    })
}

pub(crate) struct Inner<T: Real> {
    id: u64,
    shape: Vec<usize>,
    values: Vec<T>,
    requires_grad: bool,
    grad: RefCell<Option<Vec<T>>>,
    op: Option<Op<T>>,
    backward_done: Cell<bool>,
}

/// A dense n-dimensional array participating in the computation graph.
///
/// Cloning is cheap (reference-counted handle). Values are immutable after
/// creation; only the gradient slot is written during backward.
pub struct Tensor<T: Real> {
    pub(crate) inner: Rc<Inner<T>>,
}

impl<T: Real> Clone for Tensor<T> {
    fn clone(&self) -> Self {
        Tensor {
            inner: Rc::clone(&self.inner),
        }
    }
}

impl<T: Real> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "Tensor(id={}, shape={:?}, requires_grad={})",
            self.inner.id, self.inner.shape, self.inner.requires_grad
        )
    }
}

impl<T: Real> Tensor<T> {
    fn new(shape: Vec<usize>, values: Vec<T>, requires_grad: bool, op: Option<Op<T>>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), values.len());
        Tensor {
            inner: Rc::new(Inner {
                id: next_id(),
                shape,
                values,
                requires_grad,
                grad: RefCell::new(None),
                op,
                backward_done: Cell::new(false),
            }),
        }
    }

    /// Leaf tensor that does not track gradients.
    pub fn from_vec(shape: &[usize], values: Vec<T>) -> Result<Self> {
        if shape.iter().product::<usize>() != values.len() {
            return shape_err(
                "from_vec",
                format!("shape {:?} incompatible with {} values", shape, values.len()),
            );
        }
        Ok(Self::new(shape.to_vec(), values, false, None))
    }

    /// Leaf tensor that accumulates gradients.
    pub fn param(shape: &[usize], values: Vec<T>) -> Result<Self> {
        if shape.iter().product::<usize>() != values.len() {
            return shape_err(
                "param",
                format!("shape {:?} incompatible with {} values", shape, values.len()),
            );
        }
        Ok(Self::new(shape.to_vec(), values, true, None))
    }

    /// Leaf tensor built from `f64` values, converting to the element type.
    pub fn from_f64(shape: &[usize], values: &[f64], requires_grad: bool) -> Result<Self> {
        let converted: Vec<T> = values.iter().map(|&v| real(v)).collect();
        if requires_grad {
            Self::param(shape, converted)
        } else {
            Self::from_vec(shape, converted)
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::new(shape.to_vec(), vec![T::zero(); shape.iter().product()], false, None)
    }

    pub fn full(shape: &[usize], v: T) -> Self {
        Self::new(shape.to_vec(), vec![v; shape.iter().product()], false, None)
    }

    /// Rank-0 tensor holding a single value.
    pub fn scalar(v: T) -> Self {
        Self::new(Vec::new(), vec![v], false, None)
    }

    pub(crate) fn from_op(shape: Vec<usize>, values: Vec<T>, op: Op<T>) -> Self {
        Self::new(shape, values, true, Some(op))
    }

    /// Result tensor: records the op only if some input requires a gradient,
    /// otherwise the output is a plain leaf.
    pub(crate) fn result(shape: Vec<usize>, values: Vec<T>, track: bool, op: impl FnOnce() -> Op<T>) -> Self {
        if track {
            Self::from_op(shape, values, op())
        } else {
            Self::new(shape, values, false, None)
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn rank(&self) -> usize {
        self.inner.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.inner.values.len()
    }

    pub fn values(&self) -> &[T] {
        &self.inner.values
    }

    /// Single value of a rank-0/one-element tensor. Panics otherwise.
    pub fn item(&self) -> T {
        assert_eq!(self.numel(), 1, "item() on non-scalar tensor");
        self.inner.values[0]
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad
    }

    pub fn id(&self) -> u64 {
        self.inner.id
    }

    /// Copy of the accumulated gradient, if any.
    pub fn grad(&self) -> Option<Vec<T>> {
        self.inner.grad.borrow().clone()
    }

    pub fn clear_grad(&self) {
        *self.inner.grad.borrow_mut() = None;
    }

    pub(crate) fn accumulate_grad(&self, g: &[T]) {
        debug_assert!(self.inner.requires_grad);
        let mut slot = self.inner.grad.borrow_mut();
        match slot.as_mut() {
            Some(acc) => {
                for (a, &b) in acc.iter_mut().zip(g) {
                    *a = *a + b;
                }
            }
            None => *slot = Some(g.to_vec()),
        }
    }

    /// Identity in the forward pass; contributes exactly zero gradient to
    /// all ancestors (the result is a fresh constant leaf).
    pub fn stop_gradient(&self) -> Tensor<T> {
        Self::new(self.inner.shape.clone(), self.inner.values.clone(), false, None)
    }

    pub(crate) fn op(&self) -> Option<&Op<T>> {
        self.inner.op.as_ref()
    }

    pub(crate) fn backward_done(&self) -> &Cell<bool> {
        &self.inner.backward_done
    }
}
