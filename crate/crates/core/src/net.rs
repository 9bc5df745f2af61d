//! Compact differentiable stereo matcher.
//!
//! Shared conv features (stride 2, 2, 1), an absolute-difference cost volume
//! over quarter-resolution disparity hypotheses, a conv aggregation stack
//! treating hypotheses as channels, soft-argmin regression, x4 bilinear
//! upsampling (disparity values scaled x4) and a two-conv refinement head
//! conditioned on the left image.

use costereo_autograd::{
    concat_channels, conv2d, flip_x, real, soft_argmin, upsample_bilinear, warp_horizontal, Real,
    Tensor,
};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::ArchConfig;
use crate::error::{Error, Result};

pub const LEAKY_SLOPE: f64 = 0.2;

/// Multiplier on the aggregated cost before soft-argmin.
pub const COST_SHARPNESS: f64 = 12.0;

/// The full ordered parameter set of one stereo network.
#[derive(Clone)]
pub struct NetworkParams<T: Real> {
    pub arch: ArchConfig,
    pub init_seed: u64,
    tensors: Vec<(String, Tensor<T>)>,
}

impl<T: Real> NetworkParams<T> {
    pub fn tensors(&self) -> &[(String, Tensor<T>)] {
        &self.tensors
    }

    pub fn get(&self, name: &str) -> &Tensor<T> {
        &self
            .tensors
            .iter()
            .find(|(n, _)| n == name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
            .1
    }

    pub fn param_count(&self) -> usize {
        self.tensors.iter().map(|(_, t)| t.numel()).sum()
    }

    /// Copy whose tensors do not track gradients; forwards through it build
    /// no graph.
    pub fn detached(&self) -> NetworkParams<T> {
        NetworkParams {
            arch: self.arch,
            init_seed: self.init_seed,
            tensors: self
                .tensors
                .iter()
                .map(|(n, t)| (n.clone(), t.stop_gradient()))
                .collect(),
        }
    }

    pub fn clear_grads(&self) {
        for (_, t) in &self.tensors {
            t.clear_grad();
        }
    }

    pub(crate) fn set_tensor(&mut self, idx: usize, t: Tensor<T>) {
        self.tensors[idx].1 = t;
    }

    pub(crate) fn from_parts(
        arch: ArchConfig,
        init_seed: u64,
        tensors: Vec<(String, Tensor<T>)>,
    ) -> Self {
        NetworkParams { arch, init_seed, tensors }
    }
}

/// Parameter names and shapes, fixed by the architecture. Identically
/// shaped for any seed.
pub fn layer_shapes(arch: &ArchConfig) -> Vec<(String, Vec<usize>)> {
    let (i, f, a, r, d) = (
        arch.in_channels,
        arch.feat_channels,
        arch.agg_channels,
        arch.refine_channels,
        arch.d_max_coarse,
    );
    let conv = |name: &str, co: usize, ci: usize| {
        [
            (format!("{name}.w"), vec![co, ci, 3, 3]),
            (format!("{name}.b"), vec![co]),
        ]
    };
    [
        conv("feat1", f, i),
        conv("feat2", f, f),
        conv("feat3", f, f),
        conv("agg1", a, d),
        conv("agg2", a, a),
        conv("agg3", a, a),
        conv("agg4", d, a),
        conv("ref1", r, 1 + i),
        conv("ref2", 1, r),
    ]
    .into_iter()
    .flatten()
    .collect()
}

/// Init gain per layer. The two residual output layers start near zero so
/// the raw matching cost and the upsampled disparity pass through almost
/// untouched at initialization; everything else uses unit gain.
pub fn init_gain(name: &str) -> f64 {
    match name {
        "agg4.w" | "ref2.w" => 0.05,
        _ => 1.0,
    }
}

/// Target variance of the uniform weight init for a given fan-in
/// (variance-scaled for the leaky activation, times the layer gain).
pub fn weight_init_variance(fan_in: usize, gain: f64) -> f64 {
    gain * gain * 2.0 / (fan_in as f64 * (1.0 + LEAKY_SLOPE * LEAKY_SLOPE))
}

/// Deterministic variance-scaled uniform initialization keyed by `seed`.
/// Biases start at zero.
pub fn init_params<T: Real>(seed: u64, arch: &ArchConfig) -> Result<NetworkParams<T>> {
    arch.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tensors = layer_shapes(arch)
        .into_iter()
        .map(|(name, shape)| {
            let n = shape.iter().product::<usize>();
            let values: Vec<T> = if shape.len() == 1 {
                vec![T::zero(); n]
            } else {
                let fan_in: usize = shape[1..].iter().product();
                let bound = (3.0 * weight_init_variance(fan_in, init_gain(&name))).sqrt();
                (0..n).map(|_| real(rng.random_range(-bound..bound))).collect()
            };
            Ok((name.clone(), Tensor::param(&shape, values)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(NetworkParams { arch: *arch, init_seed: seed, tensors })
}

fn leaky_relu<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>> {
    Ok(x.maximum(&x.mul_scalar(real(LEAKY_SLOPE)))?)
}

fn conv_block<T: Real>(
    params: &NetworkParams<T>,
    name: &str,
    x: &Tensor<T>,
    stride: usize,
) -> Result<Tensor<T>> {
    Ok(conv2d(
        x,
        params.get(&format!("{name}.w")),
        Some(params.get(&format!("{name}.b"))),
        stride,
        1,
    )?)
}

/// Quarter-resolution feature map; the same parameters serve both views.
pub fn extract_features<T: Real>(params: &NetworkParams<T>, image: &Tensor<T>) -> Result<Tensor<T>> {
    let shape = image.shape();
    if shape.len() != 4 || shape[1] != params.arch.in_channels {
        return Err(Error::ShapeMismatch(format!(
            "expected [N,{},H,W] image, got {:?}",
            params.arch.in_channels, shape
        )));
    }
    let c1 = leaky_relu(&conv_block(params, "feat1", image, 2)?)?;
    let c2 = leaky_relu(&conv_block(params, "feat2", &c1, 2)?)?;
    leaky_relu(&conv_block(params, "feat3", &c2, 1)?)
}

pub struct CostVolume<T: Real> {
    /// `[N, D, h, w]` matching cost per disparity hypothesis.
    pub cost: Tensor<T>,
    /// 1 where the shifted sample stayed in range, 0 where it was clamped.
    pub valid: Tensor<T>,
}

/// Absolute-difference correlation cost:
/// `cost(d, x, y) = mean_c |f_left(x, y) - f_right(x - d, y)|`.
/// Out-of-range shifts clamp to the border and are marked in `valid`.
pub fn build_cost_volume<T: Real>(
    f_left: &Tensor<T>,
    f_right: &Tensor<T>,
    d_max_coarse: usize,
) -> Result<CostVolume<T>> {
    if f_left.shape() != f_right.shape() {
        return Err(Error::ShapeMismatch(format!(
            "feature maps {:?} vs {:?}",
            f_left.shape(),
            f_right.shape()
        )));
    }
    let [n, _, h, w] = match f_left.shape() {
        [n, c, h, w] => [*n, *c, *h, *w],
        s => return Err(Error::ShapeMismatch(format!("expected rank-4 features, got {s:?}"))),
    };
    let mut slices = Vec::with_capacity(d_max_coarse);
    let mut valid_slices = Vec::with_capacity(d_max_coarse);
    for d in 0..d_max_coarse {
        let shift = Tensor::full(&[n, 1, h, w], real(d as f64));
        let (shifted, valid) = warp_horizontal(f_right, &shift)?;
        slices.push(f_left.sub(&shifted)?.abs().mean_axis(1)?);
        valid_slices.push(valid);
    }
    let cost = concat_channels(&slices.iter().collect::<Vec<_>>())?;
    let valid = concat_channels(&valid_slices.iter().collect::<Vec<_>>())?;
    Ok(CostVolume { cost, valid })
}

/// Dense left-referenced disparity in `[0, 4 * (d_max_coarse - 1)]`,
/// shaped like the input views.
pub fn forward<T: Real>(
    params: &NetworkParams<T>,
    left: &Tensor<T>,
    right: &Tensor<T>,
) -> Result<Tensor<T>> {
    if left.shape() != right.shape() {
        return Err(Error::ShapeMismatch(format!(
            "left {:?} vs right {:?}",
            left.shape(),
            right.shape()
        )));
    }
    let [_, _, h, w] = match left.shape() {
        [n, c, h, w] => [*n, *c, *h, *w],
        s => return Err(Error::ShapeMismatch(format!("expected rank-4 images, got {s:?}"))),
    };
    if h % 4 != 0 || w % 4 != 0 || h < 8 || w < 8 {
        return Err(Error::ShapeMismatch(format!(
            "spatial dims must be multiples of 4 and >= 8, got {h}x{w}"
        )));
    }
    let f_l = extract_features(params, left)?;
    let f_r = extract_features(params, right)?;
    let cv = build_cost_volume(&f_l, &f_r, params.arch.d_max_coarse)?;
    let a1 = leaky_relu(&conv_block(params, "agg1", &cv.cost, 1)?)?;
    let a2 = leaky_relu(&conv_block(params, "agg2", &a1, 1)?)?;
    let a3 = leaky_relu(&conv_block(params, "agg3", &a2, 1)?)?;
    // residual aggregation: the raw matching cost already ranks the true
    // shift lowest, so the conv stack only refines it; the sharpness factor
    // keeps the soft-argmin peaked enough to follow the cost minimum
    let agg = cv
        .cost
        .add(&conv_block(params, "agg4", &a3, 1)?)?
        .mul_scalar(real(COST_SHARPNESS));
    let d_coarse = soft_argmin(&agg)?;
    let d_up = upsample_bilinear(&d_coarse, 4)?.mul_scalar(real(4.0));
    let d_max_full = real::<T>(params.arch.d_max_full() as f64);
    let d_norm = d_up.div_scalar(d_max_full)?;
    let refine_in = concat_channels(&[&d_norm, left])?;
    let r1 = leaky_relu(&conv_block(params, "ref1", &refine_in, 1)?)?;
    let delta = conv_block(params, "ref2", &r1, 1)?;
    Ok(d_up.add(&delta)?.max_scalar(T::zero()).min_scalar(d_max_full))
}

/// Right-referenced disparity via the mirror trick: run the matcher on the
/// horizontally mirrored, swapped pair, then mirror the result back.
pub fn forward_right<T: Real>(
    params: &NetworkParams<T>,
    left: &Tensor<T>,
    right: &Tensor<T>,
) -> Result<Tensor<T>> {
    let d = forward(params, &flip_x(right)?, &flip_x(left)?)?;
    Ok(flip_x(&d)?)
}
