//! Elementwise operators. Tensor-tensor forms require identical shapes;
//! the only broadcasting supported anywhere is scalar ⊗ tensor.

use crate::error::{shape_err, Error, Result};
use crate::op::Op;
use crate::tensor::{Real, Tensor};

/// Denominators smaller than this magnitude are rejected.
pub const NEAR_ZERO: f64 = 1e-12;

fn check_same<T: Real>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return shape_err(op, format!("{:?} vs {:?}", a.shape(), b.shape()));
    }
    Ok(())
}

fn zip_vals<T: Real>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Vec<T> {
    a.values().iter().zip(b.values()).map(|(&x, &y)| f(x, y)).collect()
}

fn map_vals<T: Real>(a: &Tensor<T>, f: impl Fn(T) -> T) -> Vec<T> {
    a.values().iter().map(|&x| f(x)).collect()
}

impl<T: Real> Tensor<T> {
    pub fn add(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        check_same("add", self, other)?;
        let vals = zip_vals(self, other, |x, y| x + y);
        let track = self.requires_grad() || other.requires_grad();
        Ok(Tensor::result(self.shape().to_vec(), vals, track, || {
            Op::Add(self.clone(), other.clone())
        }))
    }

    pub fn sub(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        check_same("sub", self, other)?;
        let vals = zip_vals(self, other, |x, y| x - y);
        let track = self.requires_grad() || other.requires_grad();
        Ok(Tensor::result(self.shape().to_vec(), vals, track, || {
            Op::Sub(self.clone(), other.clone())
        }))
    }

    pub fn mul(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        check_same("mul", self, other)?;
        let vals = zip_vals(self, other, |x, y| x * y);
        let track = self.requires_grad() || other.requires_grad();
        Ok(Tensor::result(self.shape().to_vec(), vals, track, || {
            Op::Mul(self.clone(), other.clone())
        }))
    }

    pub fn div(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        check_same("div", self, other)?;
        let near = crate::real::<T>(NEAR_ZERO);
        if let Some(&v) = other.values().iter().find(|v| v.abs() < near) {
            return Err(Error::DivisionByNearZero { value: v.to_f64().unwrap_or(0.0) });
        }
        let vals = zip_vals(self, other, |x, y| x / y);
        let track = self.requires_grad() || other.requires_grad();
        Ok(Tensor::result(self.shape().to_vec(), vals, track, || {
            Op::Div(self.clone(), other.clone())
        }))
    }

    pub fn add_scalar(&self, c: T) -> Tensor<T> {
        Tensor::result(self.shape().to_vec(), map_vals(self, |x| x + c), self.requires_grad(), || {
            Op::AddScalar(self.clone())
        })
    }

    pub fn sub_scalar(&self, c: T) -> Tensor<T> {
        Tensor::result(self.shape().to_vec(), map_vals(self, |x| x - c), self.requires_grad(), || {
            Op::SubScalar(self.clone())
        })
    }

    /// c - self
    pub fn rsub_scalar(&self, c: T) -> Tensor<T> {
        Tensor::result(self.shape().to_vec(), map_vals(self, |x| c - x), self.requires_grad(), || {
            Op::RsubScalar(self.clone())
        })
    }

    pub fn mul_scalar(&self, c: T) -> Tensor<T> {
        Tensor::result(self.shape().to_vec(), map_vals(self, |x| x * c), self.requires_grad(), || {
            Op::MulScalar(self.clone(), c)
        })
    }

    pub fn div_scalar(&self, c: T) -> Result<Tensor<T>> {
        if c.abs() < crate::real::<T>(NEAR_ZERO) {
            return Err(Error::DivisionByNearZero { value: c.to_f64().unwrap_or(0.0) });
        }
        Ok(Tensor::result(self.shape().to_vec(), map_vals(self, |x| x / c), self.requires_grad(), || {
            Op::DivScalar(self.clone(), c)
        }))
    }

    /// c / self
    pub fn rdiv_scalar(&self, c: T) -> Result<Tensor<T>> {
        let near = crate::real::<T>(NEAR_ZERO);
        if let Some(&v) = self.values().iter().find(|v| v.abs() < near) {
            return Err(Error::DivisionByNearZero { value: v.to_f64().unwrap_or(0.0) });
        }
        Ok(Tensor::result(self.shape().to_vec(), map_vals(self, |x| c / x), self.requires_grad(), || {
            Op::RdivScalar(self.clone(), c)
        }))
    }

    pub fn neg(&self) -> Tensor<T> {
        Tensor::result(self.shape().to_vec(), map_vals(self, |x| -x), self.requires_grad(), || {
            Op::Neg(self.clone())
        })
    }

    /// |x|; the subgradient at 0 is 0.
    pub fn abs(&self) -> Tensor<T> {
        Tensor::result(self.shape().to_vec(), map_vals(self, |x| x.abs()), self.requires_grad(), || {
            Op::Abs(self.clone())
        })
    }

    pub fn exp(&self) -> Tensor<T> {
        Tensor::result(self.shape().to_vec(), map_vals(self, |x| x.exp()), self.requires_grad(), || {
            Op::Exp(self.clone())
        })
    }

    /// Elementwise minimum; ties route the gradient to `self`.
    pub fn minimum(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        check_same("minimum", self, other)?;
        let vals = zip_vals(self, other, |x, y| if x <= y { x } else { y });
        let track = self.requires_grad() || other.requires_grad();
        Ok(Tensor::result(self.shape().to_vec(), vals, track, || {
            Op::Min(self.clone(), other.clone())
        }))
    }

    /// Elementwise maximum; ties route the gradient to `self`.
    pub fn maximum(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        check_same("maximum", self, other)?;
        let vals = zip_vals(self, other, |x, y| if x >= y { x } else { y });
        let track = self.requires_grad() || other.requires_grad();
        Ok(Tensor::result(self.shape().to_vec(), vals, track, || {
            Op::Max(self.clone(), other.clone())
        }))
    }

    pub fn min_scalar(&self, c: T) -> Tensor<T> {
        let vals = map_vals(self, |x| if x <= c { x } else { c });
        Tensor::result(self.shape().to_vec(), vals, self.requires_grad(), || {
            Op::MinScalar(self.clone(), c)
        })
    }

    pub fn max_scalar(&self, c: T) -> Tensor<T> {
        let vals = map_vals(self, |x| if x >= c { x } else { c });
        Tensor::result(self.shape().to_vec(), vals, self.requires_grad(), || {
            Op::MaxScalar(self.clone(), c)
        })
    }

    pub fn clamp(&self, lo: T, hi: T) -> Tensor<T> {
        self.max_scalar(lo).min_scalar(hi)
    }

    // Comparisons produce 0/1 masks that never carry gradient.

    pub fn gt_scalar(&self, c: T) -> Tensor<T> {
        mask(self, |x| x > c)
    }

    pub fn ge_scalar(&self, c: T) -> Tensor<T> {
        mask(self, |x| x >= c)
    }

    pub fn lt_scalar(&self, c: T) -> Tensor<T> {
        mask(self, |x| x < c)
    }

    pub fn le_scalar(&self, c: T) -> Tensor<T> {
        mask(self, |x| x <= c)
    }

    pub fn gt(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        check_same("gt", self, other)?;
        let vals = zip_vals(self, other, |x, y| if x > y { T::one() } else { T::zero() });
        Tensor::from_vec(self.shape(), vals)
    }
}

fn mask<T: Real>(t: &Tensor<T>, pred: impl Fn(T) -> bool) -> Tensor<T> {
    let vals = t
        .values()
        .iter()
        .map(|&x| if pred(x) { T::one() } else { T::zero() })
        .collect();
    Tensor::from_vec(t.shape(), vals).expect("mask shape")
}
