//! Evaluation metrics: average end-point error and the bad-pixel rate
//! (tolerance 3 px, strict inequality), each over all valid pixels ("All")
//! and over valid non-occluded pixels ("Noc").

use std::fmt;

use crate::data::{Map, Mask};
use crate::error::{Error, Result};

pub const BAD_PIXEL_TOLERANCE: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub aepe_all: f64,
    pub aepe_noc: f64,
    /// Bad-pixel percentages in [0, 100].
    pub f1_all: f64,
    pub f1_noc: f64,
    pub valid_pixel_count: usize,
}

impl EvalReport {
    pub fn csv_header() -> &'static str {
        "aepe_all,aepe_noc,f1_all,f1_noc,valid_pixels"
    }

    pub fn to_csv_row(&self) -> String {
        format!(
            "{:.6},{:.6},{:.4},{:.4},{}",
            self.aepe_all, self.aepe_noc, self.f1_all, self.f1_noc, self.valid_pixel_count
        )
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "evaluation over {} valid pixels", self.valid_pixel_count)?;
        writeln!(f, "  AEPE  all: {:.3} px   noc: {:.3} px", self.aepe_all, self.aepe_noc)?;
        write!(f, "  F1>3px all: {:.2} %    noc: {:.2} %", self.f1_all, self.f1_noc)
    }
}

fn check_shapes(pred: &Map, gt: &Map, valid: &Mask) -> Result<()> {
    if pred.h != gt.h || pred.w != gt.w || pred.h != valid.h || pred.w != valid.w {
        return Err(Error::ShapeMismatch(format!(
            "pred {}x{}, gt {}x{}, mask {}x{}",
            pred.h, pred.w, gt.h, gt.w, valid.h, valid.w
        )));
    }
    Ok(())
}

/// Mean absolute disparity error over valid pixels.
pub fn aepe(pred: &Map, gt: &Map, valid: &Mask) -> Result<f64> {
    check_shapes(pred, gt, valid)?;
    let mut acc = 0.0f64;
    let mut count = 0usize;
    for i in 0..pred.data.len() {
        if valid.data[i] {
            acc += (pred.data[i] as f64 - gt.data[i] as f64).abs();
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(acc / count as f64)
}

/// Percentage of valid pixels whose error strictly exceeds `tol`.
pub fn f1_bad(pred: &Map, gt: &Map, valid: &Mask, tol: f64) -> Result<f64> {
    check_shapes(pred, gt, valid)?;
    let mut bad = 0usize;
    let mut count = 0usize;
    for i in 0..pred.data.len() {
        if valid.data[i] {
            if (pred.data[i] as f64 - gt.data[i] as f64).abs() > tol {
                bad += 1;
            }
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(100.0 * bad as f64 / count as f64)
}

/// Metrics over all valid pixels and over the valid non-occluded subset.
pub fn split_noc(pred: &Map, gt: &Map, valid: &Mask, gt_occlusion: &Mask) -> Result<EvalReport> {
    check_shapes(pred, gt, valid)?;
    if gt_occlusion.h != pred.h || gt_occlusion.w != pred.w {
        return Err(Error::ShapeMismatch("occlusion mask size".into()));
    }
    let noc = Mask {
        h: valid.h,
        w: valid.w,
        data: valid
            .data
            .iter()
            .zip(&gt_occlusion.data)
            .map(|(&v, &occ)| v && !occ)
            .collect(),
    };
    Ok(EvalReport {
        aepe_all: aepe(pred, gt, valid)?,
        aepe_noc: aepe(pred, gt, &noc)?,
        f1_all: f1_bad(pred, gt, valid, BAD_PIXEL_TOLERANCE)?,
        f1_noc: f1_bad(pred, gt, &noc, BAD_PIXEL_TOLERANCE)?,
        valid_pixel_count: valid.data.iter().filter(|&&b| b).count(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_fixture(rng: &mut ChaCha8Rng, h: usize, w: usize) -> (Map, Map, Mask) {
        let mut pred = Map::zeros(h, w);
        let mut gt = Map::zeros(h, w);
        let mut valid = Mask::filled(h, w, false);
        for i in 0..h * w {
            pred.data[i] = rng.random_range(0.0..40.0);
            gt.data[i] = rng.random_range(0.0..40.0);
            valid.data[i] = rng.random_bool(0.85);
        }
        if valid.count() == 0 {
            valid.data[0] = true;
        }
        (pred, gt, valid)
    }

    #[test]
    fn aepe_trivial_cases() {
        let gt = Map::filled(4, 4, 10.0);
        let valid = Mask::filled(4, 4, true);
        assert_eq!(aepe(&gt, &gt, &valid).unwrap(), 0.0);
        let mut pred = gt.clone();
        for v in &mut pred.data {
            *v += 2.0;
        }
        assert_eq!(aepe(&pred, &gt, &valid).unwrap(), 2.0);
    }

    #[test]
    fn aepe_matches_brute_force_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        for _ in 0..20 {
            let (pred, gt, valid) = random_fixture(&mut rng, 5, 5);
            // naive double loop, same accumulation order
            let mut acc = 0.0f64;
            let mut n = 0usize;
            for y in 0..5 {
                for x in 0..5 {
                    if valid.at(y, x) {
                        acc += (pred.at(y, x) as f64 - gt.at(y, x) as f64).abs();
                        n += 1;
                    }
                }
            }
            assert_eq!(aepe(&pred, &gt, &valid).unwrap(), acc / n as f64);
        }
    }

    #[test]
    fn f1_counts_and_boundary() {
        let (h, w) = (10, 10);
        let gt = Map::filled(h, w, 10.0);
        let valid = Mask::filled(h, w, true);
        let mut pred = gt.clone();
        assert_eq!(f1_bad(&pred, &gt, &valid, 3.0).unwrap(), 0.0);
        // one of 100 pixels off by 5
        pred.set(3, 3, 15.0);
        assert_eq!(f1_bad(&pred, &gt, &valid, 3.0).unwrap(), 1.0);
        // an error of exactly 3.0 counts as good (strict >)
        pred.set(3, 3, 13.0);
        assert_eq!(f1_bad(&pred, &gt, &valid, 3.0).unwrap(), 0.0);
    }

    #[test]
    fn empty_mask_rejected() {
        let m = Map::zeros(2, 2);
        let none = Mask::filled(2, 2, false);
        assert!(matches!(aepe(&m, &m, &none), Err(Error::EmptyMask)));
        assert!(matches!(f1_bad(&m, &m, &none, 3.0), Err(Error::EmptyMask)));
    }

    #[test]
    fn split_noc_trivial_and_constructed() {
        let (h, w) = (6, 6);
        let gt = Map::filled(h, w, 8.0);
        let valid = Mask::filled(h, w, true);
        let no_occ = Mask::filled(h, w, false);
        let pred = gt.clone();
        // occlusion-free scene: noc == all exactly
        let r = split_noc(&pred, &gt, &valid, &no_occ).unwrap();
        assert_eq!(r.aepe_all, r.aepe_noc);
        assert_eq!(r.f1_all, r.f1_noc);

        // errors only inside the occluded band
        let mut occ = Mask::filled(h, w, false);
        let mut pred = gt.clone();
        for y in 0..h {
            occ.data[y * w + 2] = true;
            pred.set(y, 2, 20.0);
        }
        let r = split_noc(&pred, &gt, &valid, &occ).unwrap();
        assert_eq!(r.f1_noc, 0.0);
        assert!(r.f1_all > 0.0);
        // partition: noc + occluded = all
        let noc_count = valid
            .data
            .iter()
            .zip(&occ.data)
            .filter(|(&v, &o)| v && !o)
            .count();
        let occ_count = valid
            .data
            .iter()
            .zip(&occ.data)
            .filter(|(&v, &o)| v && o)
            .count();
        assert_eq!(noc_count + occ_count, r.valid_pixel_count);
    }

    #[test]
    fn metrics_are_permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(62);
        let (pred, gt, valid) = random_fixture(&mut rng, 8, 8);
        let base_aepe = aepe(&pred, &gt, &valid).unwrap();
        let base_f1 = f1_bad(&pred, &gt, &valid, 3.0).unwrap();
        // reverse every buffer: same multiset of pixels
        let rev = |m: &Map| Map { h: m.h, w: m.w, data: m.data.iter().rev().cloned().collect() };
        let rev_mask = Mask { h: valid.h, w: valid.w, data: valid.data.iter().rev().cloned().collect() };
        let aepe_rev = aepe(&rev(&pred), &rev(&gt), &rev_mask).unwrap();
        let f1_rev = f1_bad(&rev(&pred), &rev(&gt), &rev_mask, 3.0).unwrap();
        assert!((base_aepe - aepe_rev).abs() < 1e-12);
        assert_eq!(base_f1, f1_rev);
    }
}
