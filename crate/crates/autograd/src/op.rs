use std::rc::Rc;

use crate::backward::GradSink;
use crate::spatial;
use crate::tensor::{Real, Tensor};

/// Recorded operation: holds the input tensors (keeping the graph alive)
/// plus whatever the backward pass needs.
pub(crate) enum Op<T: Real> {
    Add(Tensor<T>, Tensor<T>),
    AddScalar(Tensor<T>),
    Sub(Tensor<T>, Tensor<T>),
    SubScalar(Tensor<T>),
    /// c - x
    RsubScalar(Tensor<T>),
    Mul(Tensor<T>, Tensor<T>),
    MulScalar(Tensor<T>, T),
    Div(Tensor<T>, Tensor<T>),
    DivScalar(Tensor<T>, T),
    /// c / x
    RdivScalar(Tensor<T>, T),
    Neg(Tensor<T>),
    Abs(Tensor<T>),
    Exp(Tensor<T>),
    Min(Tensor<T>, Tensor<T>),
    Max(Tensor<T>, Tensor<T>),
    MinScalar(Tensor<T>, T),
    MaxScalar(Tensor<T>, T),
    Reshape(Tensor<T>),
    SumAll(Tensor<T>),
    MeanAll(Tensor<T>),
    SumAxis(Tensor<T>, usize),
    MeanAxis(Tensor<T>, usize),
    Conv2d {
        input: Tensor<T>,
        weight: Tensor<T>,
        bias: Option<Tensor<T>>,
        stride: usize,
        padding: usize,
    },
    WarpH {
        source: Tensor<T>,
        disparity: Tensor<T>,
    },
    SoftArgmin {
        cost: Tensor<T>,
        probs: Rc<Vec<T>>,
    },
    BoxMean3(Tensor<T>),
    Upsample {
        input: Tensor<T>,
        factor: usize,
    },
    FlipX(Tensor<T>),
    DiffX(Tensor<T>),
    DiffY(Tensor<T>),
    ConcatC(Vec<Tensor<T>>),
}

impl<T: Real> Op<T> {
    pub(crate) fn inputs(&self) -> Vec<&Tensor<T>> {
        use Op::*;
        match self {
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) | Min(a, b) | Max(a, b) => vec![a, b],
            AddScalar(a) | SubScalar(a) | RsubScalar(a) | MulScalar(a, _) | DivScalar(a, _)
            | RdivScalar(a, _) | Neg(a) | Abs(a) | Exp(a) | MinScalar(a, _) | MaxScalar(a, _)
            | Reshape(a) | SumAll(a) | MeanAll(a) | SumAxis(a, _) | MeanAxis(a, _)
            | BoxMean3(a) | FlipX(a) | DiffX(a) | DiffY(a) => vec![a],
            Conv2d { input, weight, bias, .. } => {
                let mut v = vec![input, weight];
                if let Some(b) = bias {
                    v.push(b);
                }
                v
            }
            WarpH { source, disparity } => vec![source, disparity],
            SoftArgmin { cost, .. } => vec![cost],
            Upsample { input, .. } => vec![input],
            ConcatC(xs) => xs.iter().collect(),
        }
    }

    /// Propagate `grad` (gradient of the loss w.r.t. `node`) to the inputs.
    pub(crate) fn backward(&self, node: &Tensor<T>, grad: &[T], sink: &mut GradSink<T>) {
        use Op::*;
        match self {
            Add(a, b) => {
                sink.add(a, grad.to_vec());
                sink.add(b, grad.to_vec());
            }
            AddScalar(a) | SubScalar(a) | Reshape(a) => sink.add(a, grad.to_vec()),
            Sub(a, b) => {
                sink.add(a, grad.to_vec());
                sink.add(b, grad.iter().map(|&g| -g).collect());
            }
            RsubScalar(a) | Neg(a) => sink.add(a, grad.iter().map(|&g| -g).collect()),
            Mul(a, b) => {
                sink.add(a, zip(grad, b.values(), |g, bv| g * bv));
                sink.add(b, zip(grad, a.values(), |g, av| g * av));
            }
            MulScalar(a, c) => sink.add(a, grad.iter().map(|&g| g * *c).collect()),
            Div(a, b) => {
                sink.add(a, zip(grad, b.values(), |g, bv| g / bv));
                let ga: Vec<T> = grad
                    .iter()
                    .zip(a.values())
                    .zip(b.values())
                    .map(|((&g, &av), &bv)| -g * av / (bv * bv))
                    .collect();
                sink.add(b, ga);
            }
            DivScalar(a, c) => sink.add(a, grad.iter().map(|&g| g / *c).collect()),
            RdivScalar(a, c) => {
                let g: Vec<T> = grad
                    .iter()
                    .zip(a.values())
                    .map(|(&g, &av)| -g * *c / (av * av))
                    .collect();
                sink.add(a, g);
            }
            Abs(a) => {
                let g: Vec<T> = grad
                    .iter()
                    .zip(a.values())
                    .map(|(&g, &av)| {
                        if av > T::zero() {
                            g
                        } else if av < T::zero() {
                            -g
                        } else {
                            T::zero()
                        }
                    })
                    .collect();
                sink.add(a, g);
            }
            Exp(a) => sink.add(a, zip(grad, node.values(), |g, out| g * out)),
            // Ties route the whole gradient to the first operand.
            Min(a, b) => {
                sink.add(a, select(grad, a.values(), b.values(), |x, y| x <= y));
                sink.add(b, select(grad, a.values(), b.values(), |x, y| x > y));
            }
            Max(a, b) => {
                sink.add(a, select(grad, a.values(), b.values(), |x, y| x >= y));
                sink.add(b, select(grad, a.values(), b.values(), |x, y| x < y));
            }
            MinScalar(a, c) => {
                let g: Vec<T> = grad
                    .iter()
                    .zip(a.values())
                    .map(|(&g, &av)| if av <= *c { g } else { T::zero() })
                    .collect();
                sink.add(a, g);
            }
            MaxScalar(a, c) => {
                let g: Vec<T> = grad
                    .iter()
                    .zip(a.values())
                    .map(|(&g, &av)| if av >= *c { g } else { T::zero() })
                    .collect();
                sink.add(a, g);
            }
            SumAll(a) => sink.add(a, vec![grad[0]; a.numel()]),
            MeanAll(a) => {
                let scale = T::one() / crate::real::<T>(a.numel() as f64);
                sink.add(a, vec![grad[0] * scale; a.numel()]);
            }
            SumAxis(a, axis) => sink.add(a, crate::reduce::axis_backward(a, *axis, grad, false)),
            MeanAxis(a, axis) => sink.add(a, crate::reduce::axis_backward(a, *axis, grad, true)),
            Conv2d { input, weight, bias, stride, padding } => {
                spatial::conv2d_backward(input, weight, bias.as_ref(), *stride, *padding, grad, sink);
            }
            WarpH { source, disparity } => {
                spatial::warp_backward(source, disparity, grad, sink);
            }
            SoftArgmin { cost, probs } => {
                spatial::soft_argmin_backward(cost, probs, node.values(), grad, sink);
            }
            BoxMean3(a) => spatial::box_mean3_backward(a, grad, sink),
            Upsample { input, factor } => spatial::upsample_backward(input, *factor, grad, sink),
            FlipX(a) => spatial::flip_x_backward(a, grad, sink),
            DiffX(a) => spatial::diff_backward(a, grad, sink, true),
            DiffY(a) => spatial::diff_backward(a, grad, sink, false),
            ConcatC(xs) => spatial::concat_backward(xs, node.shape(), grad, sink),
        }
    }
}

fn zip<T: Real>(g: &[T], v: &[T], f: impl Fn(T, T) -> T) -> Vec<T> {
    g.iter().zip(v).map(|(&g, &v)| f(g, v)).collect()
}

fn select<T: Real>(g: &[T], a: &[T], b: &[T], keep: impl Fn(T, T) -> bool) -> Vec<T> {
    g.iter()
        .zip(a.iter().zip(b))
        .map(|(&g, (&x, &y))| if keep(x, y) { g } else { T::zero() })
        .collect()
}
