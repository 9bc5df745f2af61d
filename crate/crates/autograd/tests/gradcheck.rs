//! Finite-difference verification of every differentiable operator, in
//! double precision. Fixtures are sampled away from the kinks of the
//! piecewise-linear ops (abs / min / max / bilinear sampling) so central
//! differences measure the true derivative.

use costereo_autograd::check::check_gradients;
use costereo_autograd::{
    box_mean3, concat_channels, conv2d, flip_x, forward_diff_x, forward_diff_y, soft_argmin,
    upsample_bilinear, warp_horizontal, Tensor,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// Values bounded away from zero (for abs) and from each other (for min/max).
fn signed_nonzero(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let mag = rng.random_range(0.1..2.0);
            if rng.random_bool(0.5) {
                mag
            } else {
                -mag
            }
        })
        .collect()
}

/// Disparities whose fractional part stays inside [0.15, 0.85] so the probe
/// step never crosses a bilinear kink.
fn safe_disparity(rng: &mut ChaCha8Rng, n: usize, max: f64) -> Vec<f64> {
    (0..n)
        .map(|_| rng.random_range(0.0..max).floor() + rng.random_range(0.15..0.85))
        .collect()
}

#[test]
fn elementwise_binary_ops() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..5 {
        let a = signed_nonzero(&mut rng, 6);
        let mut b = signed_nonzero(&mut rng, 6);
        // keep |a - b| and |b| away from the min/max tie and div pole
        for (bi, &ai) in b.iter_mut().zip(&a) {
            if (*bi - ai).abs() < 1e-2 {
                *bi += 0.05;
            }
        }
        let inputs = [(vec![2, 3], a), (vec![2, 3], b)];
        for (name, f) in [
            ("add", 0usize),
            ("sub", 1),
            ("mul", 2),
            ("div", 3),
            ("minimum", 4),
            ("maximum", 5),
        ] {
            let worst = check_gradients(&inputs, 1e-5, 1e-6, |ts| {
                let out = match f {
                    0 => ts[0].add(&ts[1])?,
                    1 => ts[0].sub(&ts[1])?,
                    2 => ts[0].mul(&ts[1])?,
                    3 => ts[0].div(&ts[1])?,
                    4 => ts[0].minimum(&ts[1])?,
                    _ => ts[0].maximum(&ts[1])?,
                };
                Ok(out.mean_all())
            });
            assert!(worst.is_ok(), "{name}: {}", worst.unwrap_err());
        }
    }
}

#[test]
fn elementwise_unary_and_scalar_ops() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..5 {
        let a = signed_nonzero(&mut rng, 8);
        let inputs = [(vec![8], a)];
        for name in ["abs", "exp", "neg", "add_s", "sub_s", "rsub_s", "mul_s", "div_s", "rdiv_s", "min_s", "max_s"] {
            let worst = check_gradients(&inputs, 1e-5, 1e-6, |ts| {
                let x = &ts[0];
                let out = match name {
                    "abs" => x.abs(),
                    "exp" => x.exp(),
                    "neg" => x.neg(),
                    "add_s" => x.add_scalar(0.7),
                    "sub_s" => x.sub_scalar(0.4),
                    "rsub_s" => x.rsub_scalar(1.0),
                    "mul_s" => x.mul_scalar(-1.3),
                    "div_s" => x.div_scalar(2.5)?,
                    "rdiv_s" => x.rdiv_scalar(1.5)?,
                    "min_s" => x.min_scalar(0.01),
                    _ => x.max_scalar(0.01),
                };
                Ok(out.mean_all())
            });
            assert!(worst.is_ok(), "{name}: {}", worst.unwrap_err());
        }
    }
}

#[test]
fn reductions_and_reshape() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let a = uniform(&mut rng, 24, -1.0, 1.0);
    let inputs = [(vec![2, 3, 4], a)];
    for name in ["sum_all", "mean_all", "sum_axis", "mean_axis", "reshape"] {
        let worst = check_gradients(&inputs, 1e-5, 1e-6, |ts| {
            let x = &ts[0];
            let out = match name {
                "sum_all" => x.sum_all(),
                "mean_all" => x.mean_all(),
                "sum_axis" => x.sum_axis(1)?.mul(&x.sum_axis(1)?)?.mean_all(),
                "mean_axis" => x.mean_axis(2)?.exp().mean_all(),
                _ => x.reshape(&[4, 6])?.mul_scalar(2.0).mean_all(),
            };
            Ok(out)
        });
        assert!(worst.is_ok(), "{name}: {}", worst.unwrap_err());
    }
}

#[test]
fn conv2d_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let input = uniform(&mut rng, 2 * 3 * 8 * 8, -1.0, 1.0);
    let weight = uniform(&mut rng, 4 * 3 * 3 * 3, -0.5, 0.5);
    let bias = uniform(&mut rng, 4, -0.2, 0.2);
    let inputs = [
        (vec![2, 3, 8, 8], input),
        (vec![4, 3, 3, 3], weight),
        (vec![4], bias),
    ];
    for (stride, padding) in [(1usize, 1usize), (2, 1), (1, 0)] {
        let worst = check_gradients(&inputs, 1e-5, 1e-5, |ts| {
            Ok(conv2d(&ts[0], &ts[1], Some(&ts[2]), stride, padding)?.mean_all())
        });
        assert!(worst.is_ok(), "stride {stride} pad {padding}: {}", worst.unwrap_err());
    }
}

#[test]
fn warp_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let src = uniform(&mut rng, 2 * 8 * 8, 0.0, 1.0);
    let disp = safe_disparity(&mut rng, 8 * 8, 4.0);
    let inputs = [(vec![1, 2, 8, 8], src), (vec![1, 1, 8, 8], disp)];
    let worst = check_gradients(&inputs, 1e-5, 1e-4, |ts| {
        let (warped, _) = warp_horizontal(&ts[0], &ts[1])?;
        Ok(warped.mean_all())
    });
    assert!(worst.is_ok(), "{}", worst.unwrap_err());
}

#[test]
fn soft_argmin_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let cost = uniform(&mut rng, 6 * 3 * 3, -1.0, 1.0);
    let inputs = [(vec![1, 6, 3, 3], cost)];
    let worst = check_gradients(&inputs, 1e-5, 1e-6, |ts| Ok(soft_argmin(&ts[0])?.mean_all()));
    assert!(worst.is_ok(), "{}", worst.unwrap_err());
}

#[test]
fn filters_and_structural_ops() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let a = uniform(&mut rng, 2 * 5 * 6, -1.0, 1.0);
    let b = uniform(&mut rng, 1 * 5 * 6, -1.0, 1.0);
    let inputs = [(vec![1, 2, 5, 6], a), (vec![1, 1, 5, 6], b)];
    for name in ["box_mean3", "upsample", "flip_x", "concat"] {
        let worst = check_gradients(&inputs, 1e-5, 1e-6, |ts| {
            let out = match name {
                "box_mean3" => box_mean3(&ts[0])?,
                "upsample" => upsample_bilinear(&ts[0], 3)?,
                "flip_x" => flip_x(&ts[0])?,
                _ => concat_channels(&[&ts[0], &ts[1]])?,
            };
            Ok(out.exp().mean_all())
        });
        assert!(worst.is_ok(), "{name}: {}", worst.unwrap_err());
    }
}

/// Edge-aware smoothness-style composite on a 6x6 map, exercising the
/// forward differences, abs, exp and reductions together.
#[test]
fn composite_smoothness_expression_on_6x6() {
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    for _ in 0..3 {
        // keep forward differences away from the abs kink
        let mut d = vec![0.0; 36];
        for (i, v) in d.iter_mut().enumerate() {
            *v = (i % 6) as f64 * 0.31 + (i / 6) as f64 * 0.17 + rng.random_range(-0.05..0.05);
        }
        let img = uniform(&mut rng, 36, 0.0, 1.0);
        let inputs = [(vec![1, 1, 6, 6], d), (vec![1, 1, 6, 6], img)];
        let worst = check_gradients(&inputs, 1e-5, 1e-5, |ts| {
            let (d, i) = (&ts[0], &ts[1]);
            let tx = forward_diff_x(d)?.abs().mul(&forward_diff_x(i)?.abs().neg().exp())?;
            let ty = forward_diff_y(d)?.abs().mul(&forward_diff_y(i)?.abs().neg().exp())?;
            Ok(tx.add(&ty)?.mean_all())
        });
        assert!(worst.is_ok(), "{}", worst.unwrap_err());
    }
}

/// Determinism of forward results, and bitwise equality between the serial
/// and parallel kernel paths.
#[test]
fn forward_is_deterministic_and_parallel_matches_serial() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let input = uniform(&mut rng, 2 * 3 * 12 * 16, -1.0, 1.0);
    let weight = uniform(&mut rng, 5 * 3 * 3 * 3, -0.5, 0.5);
    let it = Tensor::<f64>::from_f64(&[2, 3, 12, 16], &input, false).unwrap();
    let wt = Tensor::<f64>::from_f64(&[5, 3, 3, 3], &weight, false).unwrap();
    let a = conv2d(&it, &wt, None, 1, 1).unwrap();
    let b = conv2d(&it, &wt, None, 1, 1).unwrap();
    assert_eq!(a.values(), b.values());
    costereo_autograd::set_parallel(true);
    let c = conv2d(&it, &wt, None, 1, 1).unwrap();
    costereo_autograd::set_parallel(false);
    assert_eq!(a.values(), c.values());
}
