//! Occlusion probability maps from left-right disparity consistency, and
//! the dynamic-threshold omission rule.
//!
//! Convention: higher value = more likely occluded. Maps are computed and
//! consumed entirely under stop-gradient.

use std::path::Path;

use costereo_autograd::{real, warp_horizontal, Real, Tensor};

use crate::data::Map;
use crate::error::{Error, Result};

pub const DEFAULT_GAMMA1: f32 = 0.1;
pub const DEFAULT_GAMMA2: f32 = 1.0;

/// Soft left-right consistency:
/// `O(p) = clamp(|D_l(p) - Dr_hat(p)| / (g1 * (D_l(p) + Dr_hat(p)) + g2), 0, 1)`
/// where `Dr_hat` is the right-view disparity warped into the left view by
/// `D_l`. Pixels whose warp falls out of range get O = 1.
pub fn estimate_occlusion<T: Real>(
    d_left: &Tensor<T>,
    d_right: &Tensor<T>,
    gamma1: f32,
    gamma2: f32,
) -> Result<Tensor<T>> {
    if d_left.shape() != d_right.shape() {
        return Err(Error::ShapeMismatch(format!(
            "disparity maps {:?} vs {:?}",
            d_left.shape(),
            d_right.shape()
        )));
    }
    debug_assert!(d_left.values().iter().all(|v| *v >= T::zero()));
    let dl = d_left.stop_gradient();
    let dr = d_right.stop_gradient();
    let (dr_hat, valid) = warp_horizontal(&dr, &dl)?;
    let num = dl.sub(&dr_hat)?.abs();
    let den = dl
        .add(&dr_hat)?
        .mul_scalar(real(gamma1 as f64))
        .add_scalar(real(gamma2 as f64));
    let o = num.div(&den)?.clamp(T::zero(), T::one());
    // invalid warp -> O = 1
    Ok(o.mul(&valid)?.add(&valid.rsub_scalar(T::one()))?)
}

/// Omit pixels with high occlusion probability: values strictly greater
/// than `r` become exactly 1; everything else is unchanged. The input map
/// is not mutated.
pub fn apply_dynamic_threshold<T: Real>(o: &Tensor<T>, r: f64) -> Result<Tensor<T>> {
    if !(0.0..=1.0).contains(&r) {
        return Err(Error::ThresholdOutOfRange(r));
    }
    let mask = o.gt_scalar(real(r));
    Ok(o.mul(&mask.rsub_scalar(T::one()))?.add(&mask)?)
}

/// Export an occlusion map as 8-bit grayscale (value = round(255 * O)).
pub fn occlusion_to_png(o: &Map, path: &Path) -> Result<()> {
    let mut img = image::GrayImage::new(o.w as u32, o.h as u32);
    for y in 0..o.h {
        for x in 0..o.w {
            let v = (o.at(y, x).clamp(0.0, 1.0) * 255.0).round() as u8;
            img.put_pixel(x as u32, y as u32, image::Luma([v]));
        }
    }
    img.save(path)?;
    Ok(())
}
