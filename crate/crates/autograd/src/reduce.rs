//! Reductions and shape changes. Axis reductions keep the reduced axis as
//! size 1, and accumulation order is always sequential for determinism.

use crate::error::{shape_err, Error, Result};
use crate::op::Op;
use crate::tensor::{real, Real, Tensor};

impl<T: Real> Tensor<T> {
    /// Sum of all elements as a rank-0 tensor.
    pub fn sum_all(&self) -> Tensor<T> {
        let mut acc = T::zero();
        for &v in self.values() {
            acc = acc + v;
        }
        Tensor::result(Vec::new(), vec![acc], self.requires_grad(), || Op::SumAll(self.clone()))
    }

    /// Mean of all elements as a rank-0 tensor.
    pub fn mean_all(&self) -> Tensor<T> {
        let mut acc = T::zero();
        for &v in self.values() {
            acc = acc + v;
        }
        let mean = acc / real::<T>(self.numel() as f64);
        Tensor::result(Vec::new(), vec![mean], self.requires_grad(), || Op::MeanAll(self.clone()))
    }

    pub fn sum_axis(&self, axis: usize) -> Result<Tensor<T>> {
        self.reduce_axis(axis, false)
    }

    pub fn mean_axis(&self, axis: usize) -> Result<Tensor<T>> {
        self.reduce_axis(axis, true)
    }

    fn reduce_axis(&self, axis: usize, mean: bool) -> Result<Tensor<T>> {
        if axis >= self.rank() {
            return Err(Error::InvalidAxis { axis, rank: self.rank() });
        }
        let shape = self.shape();
        let outer: usize = shape[..axis].iter().product();
        let len = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let mut out = vec![T::zero(); outer * inner];
        let vals = self.values();
        for o in 0..outer {
            for j in 0..len {
                let base = (o * len + j) * inner;
                let dst = o * inner;
                for i in 0..inner {
                    out[dst + i] = out[dst + i] + vals[base + i];
                }
            }
        }
        if mean {
            let scale = T::one() / real::<T>(len as f64);
            for v in &mut out {
                *v = *v * scale;
            }
        }
        let mut out_shape = shape.to_vec();
        out_shape[axis] = 1;
        let op = if mean {
            Op::MeanAxis(self.clone(), axis)
        } else {
            Op::SumAxis(self.clone(), axis)
        };
        Ok(Tensor::result(out_shape, out, self.requires_grad(), || op))
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor<T>> {
        if shape.iter().product::<usize>() != self.numel() {
            return shape_err(
                "reshape",
                format!("{:?} -> {:?} changes element count", self.shape(), shape),
            );
        }
        Ok(Tensor::result(shape.to_vec(), self.values().to_vec(), self.requires_grad(), || {
            Op::Reshape(self.clone())
        }))
    }
}

/// Broadcast the reduced gradient back along `axis`.
pub(crate) fn axis_backward<T: Real>(input: &Tensor<T>, axis: usize, grad: &[T], mean: bool) -> Vec<T> {
    let shape = input.shape();
    let outer: usize = shape[..axis].iter().product();
    let len = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let scale = if mean { T::one() / real::<T>(len as f64) } else { T::one() };
    let mut out = vec![T::zero(); input.numel()];
    for o in 0..outer {
        for j in 0..len {
            let base = (o * len + j) * inner;
            let src = o * inner;
            for i in 0..inner {
                out[base + i] = grad[src + i] * scale;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use crate::Tensor;

    #[test]
    fn mean_all_value_and_gradient() {
        let a = Tensor::<f64>::param(&[4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let m = a.mean_all();
        assert_eq!(m.item(), 2.5);
        m.backward().unwrap();
        assert_eq!(a.grad().unwrap(), vec![0.25; 4]);
    }

    #[test]
    fn sum_then_backward_gives_ones() {
        let a = Tensor::<f64>::param(&[2, 3], vec![1.0; 6]).unwrap();
        a.sum_all().backward().unwrap();
        assert_eq!(a.grad().unwrap(), vec![1.0; 6]);
    }

    #[test]
    fn mean_axis_keeps_axis() {
        let a = Tensor::<f64>::from_vec(&[1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let m = a.mean_axis(1).unwrap();
        assert_eq!(m.shape(), &[1, 1, 2]);
        assert_eq!(m.values(), &[2.0, 3.0]);
    }

    #[test]
    fn reshape_roundtrip() {
        let a = Tensor::<f32>::param(&[2, 3], vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let b = a.reshape(&[6]).unwrap().reshape(&[3, 2]).unwrap();
        assert_eq!(b.values(), a.values());
        b.sum_all().backward().unwrap();
        assert_eq!(a.grad().unwrap(), vec![1.0; 6]);
    }
}
