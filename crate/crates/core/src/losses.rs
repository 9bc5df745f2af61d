//! The three training-loss terms and their weighted combination.
//!
//! Occlusion weights and normalizers enter through stop-gradient, so a
//! loss only ever differentiates its photometric/disparity path. Batches
//! whose normalizer collapses to zero skip the affected term (contributing
//! zero) instead of aborting training.

use costereo_autograd::{
    box_mean3, forward_diff_x, forward_diff_y, real, warp_horizontal, Real, Tensor,
};
use log::warn;

use crate::config::LossWeights;
use crate::error::{Error, Result};

pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

/// Normalizers below this are treated as empty.
const EMPTY_EPS: f64 = 1e-6;

fn check_same<T: Real>(what: &str, a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch(format!(
            "{what}: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// Per-pixel SSIM map (same shape as the inputs, per channel) with 3x3 mean
/// filtering and the standard stabilizers. Values in [-1, 1]; differentiable
/// w.r.t. both inputs.
pub fn ssim<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    check_same("ssim", a, b)?;
    let c1 = real::<T>(SSIM_C1);
    let c2 = real::<T>(SSIM_C2);
    let mu_a = box_mean3(a)?;
    let mu_b = box_mean3(b)?;
    let mu_ab = mu_a.mul(&mu_b)?;
    let var_a = box_mean3(&a.mul(a)?)?.sub(&mu_a.mul(&mu_a)?)?;
    let var_b = box_mean3(&b.mul(b)?)?.sub(&mu_b.mul(&mu_b)?)?;
    let cov = box_mean3(&a.mul(b)?)?.sub(&mu_ab)?;
    let num = mu_ab
        .mul_scalar(real(2.0))
        .add_scalar(c1)
        .mul(&cov.mul_scalar(real(2.0)).add_scalar(c2))?;
    let den = mu_a
        .mul(&mu_a)?
        .add(&mu_b.mul(&mu_b)?)?
        .add_scalar(c1)
        .mul(&var_a.add(&var_b)?.add_scalar(c2))?;
    Ok(num.div(&den)?)
}

/// Occlusion-weighted photometric error between the left view and the right
/// view warped by the predicted disparity:
/// per pixel `e = alpha * (1 - SSIM) / 2 + (1 - alpha) * |I_l - I_hat|`,
/// averaged with stop-gradient weights `(1 - O) * warp_valid` and normalized
/// by their sum. The L1 term and the SSIM map average over color channels.
pub fn photometric_loss<T: Real>(
    i_left: &Tensor<T>,
    i_right: &Tensor<T>,
    d: &Tensor<T>,
    o: &Tensor<T>,
    alpha: f64,
) -> Result<Tensor<T>> {
    check_same("photometric images", i_left, i_right)?;
    let (i_hat, valid) = warp_horizontal(i_right, d)?;
    check_same("photometric occlusion", o, &valid)?;
    let ssim_px = ssim(i_left, &i_hat)?.mean_axis(1)?;
    let l1_px = i_left.sub(&i_hat)?.abs().mean_axis(1)?;
    let e = ssim_px
        .rsub_scalar(T::one())
        .mul_scalar(real(alpha / 2.0))
        .add(&l1_px.mul_scalar(real(1.0 - alpha)))?;
    let weight = o.rsub_scalar(T::one()).mul(&valid)?.stop_gradient();
    let norm = weight.sum_all();
    if norm.item().to_f64().unwrap_or(0.0) < EMPTY_EPS {
        return Err(Error::EmptyNormalizer { term: "photometric" });
    }
    Ok(e.mul(&weight)?.sum_all().div(&norm)?)
}

/// Edge-aware smoothness: forward-difference disparity gradients, attenuated
/// by `exp(-|grad I|_1)` with the L1 norm summing over color channels. The
/// last row/column difference is zero by construction.
pub fn smoothness_loss<T: Real>(i_left: &Tensor<T>, d: &Tensor<T>) -> Result<Tensor<T>> {
    let tx = forward_diff_x(d)?.abs();
    let ty = forward_diff_y(d)?.abs();
    let wx = forward_diff_x(i_left)?.abs().sum_axis(1)?.neg().exp();
    let wy = forward_diff_y(i_left)?.abs().sum_axis(1)?.neg().exp();
    Ok(tx.mul(&wx)?.add(&ty.mul(&wy)?)?.mean_all())
}

/// Smooth-L1: `x - 0.5` for `x >= 1`, `x^2 / 2` for `x < 1`.
pub fn smooth_l1(x: f64) -> Result<f64> {
    if x < 0.0 {
        return Err(Error::NegativeInput(x));
    }
    Ok(if x >= 1.0 { x - 0.5 } else { x * x / 2.0 })
}

/// Elementwise smooth-L1 over a nonnegative tensor (as produced by `abs`).
pub fn smooth_l1_map<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let hi_mask = x.ge_scalar(T::one());
    let hi = x.sub_scalar(real(0.5));
    let lo = x.mul(x)?.mul_scalar(real(0.5));
    Ok(hi.mul(&hi_mask)?.add(&lo.mul(&hi_mask.rsub_scalar(T::one()))?)?)
}

/// Augmentation-consistency loss: smooth-L1 between the (stopped) teacher
/// disparity and the student prediction, weighted by the stop-gradient map
/// `o_tilde` and normalized by its sum. Gradient flows only into the student.
pub fn data_augmentation_loss<T: Real>(
    d_teacher: &Tensor<T>,
    d_student: &Tensor<T>,
    o_tilde: &Tensor<T>,
) -> Result<Tensor<T>> {
    check_same("augmentation disparities", d_teacher, d_student)?;
    check_same("augmentation weights", d_teacher, o_tilde)?;
    let diff = d_teacher.stop_gradient().sub(d_student)?.abs();
    let lmap = smooth_l1_map(&diff)?;
    let weight = o_tilde.stop_gradient();
    let norm = weight.sum_all();
    if norm.item().to_f64().unwrap_or(0.0) < EMPTY_EPS {
        return Err(Error::EmptyNormalizer { term: "data-augmentation" });
    }
    Ok(lmap.mul(&weight)?.sum_all().div(&norm)?)
}

/// Teacher-side inputs of the augmentation term.
pub struct AugLossInputs<T: Real> {
    pub d_teacher: Tensor<T>,
    pub d_student: Tensor<T>,
    pub o_tilde: Tensor<T>,
}

/// The three loss terms as in-graph scalars;
/// `total = ph + lambda1 * sm + lambda2 * da` exactly, in that order.
pub struct LossBreakdown<T: Real> {
    pub ph: Tensor<T>,
    pub sm: Tensor<T>,
    pub da: Tensor<T>,
    pub total: Tensor<T>,
}

impl<T: Real> LossBreakdown<T> {
    pub fn scalars(&self) -> (f64, f64, f64, f64) {
        let v = |t: &Tensor<T>| t.item().to_f64().unwrap_or(f64::NAN);
        (v(&self.ph), v(&self.sm), v(&self.da), v(&self.total))
    }
}

/// Assemble one network's hybrid loss. `o_swapped` is the other network's
/// thresholded occlusion map; `aug` carries the teacher/student pair and the
/// other network's `o_tilde`. Terms whose normalizer is empty contribute
/// zero with a warning.
pub fn hybrid_loss<T: Real>(
    i_left: &Tensor<T>,
    i_right: &Tensor<T>,
    d: &Tensor<T>,
    o_swapped: &Tensor<T>,
    aug: Option<&AugLossInputs<T>>,
    weights: &LossWeights,
    use_smoothness: bool,
) -> Result<LossBreakdown<T>> {
    let ph = match photometric_loss(i_left, i_right, d, o_swapped, weights.alpha as f64) {
        Ok(t) => t,
        Err(Error::EmptyNormalizer { term }) => {
            warn!("{term} loss skipped: empty normalizer");
            Tensor::scalar(T::zero())
        }
        Err(e) => return Err(e),
    };
    let sm = if use_smoothness {
        smoothness_loss(i_left, d)?
    } else {
        Tensor::scalar(T::zero())
    };
    let da = match aug {
        Some(a) => match data_augmentation_loss(&a.d_teacher, &a.d_student, &a.o_tilde) {
            Ok(t) => t,
            Err(Error::EmptyNormalizer { term }) => {
                warn!("{term} loss skipped: empty normalizer");
                Tensor::scalar(T::zero())
            }
            Err(e) => return Err(e),
        },
        None => Tensor::scalar(T::zero()),
    };
    let total = ph
        .add(&sm.mul_scalar(real(weights.lambda1 as f64)))?
        .add(&da.mul_scalar(real(weights.lambda2 as f64)))?;
    Ok(LossBreakdown { ph, sm, da, total })
}
