//! Sample containers, dataset directory IO and codecs.
//!
//! Directory layout: `left/*.png`, `right/*.png`, optional `disp/*.pfm`
//! (ground-truth disparity) and `occ/*.png` (binary occlusion truth).

mod kitti;
mod pfm;
mod scene;

pub use kitti::{load_kitti_png, save_kitti_png};
pub use pfm::{load_pfm, save_pfm};
pub use scene::{generate_scene, sample_scene_spec, LayerSpec, SyntheticSceneSpec, DEFAULT_NOISE_SIGMA};

use std::path::Path;

use costereo_autograd::{real, Real, Tensor};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Planar CHW image with values in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub channels: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f32>,
}

impl Image {
    pub fn zeros(channels: usize, h: usize, w: usize) -> Self {
        Image { channels, h, w, data: vec![0.0; channels * h * w] }
    }

    #[inline]
    pub fn at(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.h + y) * self.w + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f32) {
        self.data[(c * self.h + y) * self.w + x] = v;
    }

    /// `[1, C, H, W]` constant tensor.
    pub fn to_tensor<T: Real>(&self) -> Tensor<T> {
        let vals = self.data.iter().map(|&v| real::<T>(v as f64)).collect();
        Tensor::from_vec(&[1, self.channels, self.h, self.w], vals).expect("image shape")
    }
}

/// Single-channel real-valued per-pixel map (disparity or occlusion).
#[derive(Debug, Clone, PartialEq)]
pub struct Map {
    pub h: usize,
    pub w: usize,
    pub data: Vec<f32>,
}

impl Map {
    pub fn zeros(h: usize, w: usize) -> Self {
        Map { h, w, data: vec![0.0; h * w] }
    }

    pub fn filled(h: usize, w: usize, v: f32) -> Self {
        Map { h, w, data: vec![v; h * w] }
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize) -> f32 {
        self.data[y * self.w + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, v: f32) {
        self.data[y * self.w + x] = v;
    }

    /// `[1, 1, H, W]` constant tensor.
    pub fn to_tensor<T: Real>(&self) -> Tensor<T> {
        let vals = self.data.iter().map(|&v| real::<T>(v as f64)).collect();
        Tensor::from_vec(&[1, 1, self.h, self.w], vals).expect("map shape")
    }

    pub fn from_tensor(t: &Tensor<f32>) -> Result<Map> {
        match t.shape() {
            [1, 1, h, w] => Ok(Map { h: *h, w: *w, data: t.values().to_vec() }),
            s => Err(Error::ShapeMismatch(format!("expected [1,1,H,W] map tensor, got {s:?}"))),
        }
    }
}

/// Binary per-pixel mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    pub h: usize,
    pub w: usize,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn filled(h: usize, w: usize, v: bool) -> Self {
        Mask { h, w, data: vec![v; h * w] }
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize) -> bool {
        self.data[y * self.w + x]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }
}

/// Rectified stereo pair, with ground truth when synthetic.
#[derive(Debug, Clone)]
pub struct StereoSample {
    pub id: String,
    pub left: Image,
    pub right: Image,
    pub gt_disparity: Option<Map>,
    pub gt_occlusion: Option<Mask>,
}

/// Seeded Fisher-Yates permutation of `0..n`, independent per epoch.
pub fn shuffle_indices(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        idx.swap(i, j);
    }
    idx
}

fn image_to_rgb8(img: &Image) -> image::RgbImage {
    let mut out = image::RgbImage::new(img.w as u32, img.h as u32);
    for y in 0..img.h {
        for x in 0..img.w {
            let px = [0, 1, 2].map(|c| {
                let v = if img.channels == 1 { img.at(0, y, x) } else { img.at(c, y, x) };
                (v.clamp(0.0, 1.0) * 255.0).round() as u8
            });
            out.put_pixel(x as u32, y as u32, image::Rgb(px));
        }
    }
    out
}

fn rgb8_to_image(img: &image::RgbImage) -> Image {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut out = Image::zeros(3, h, w);
    for y in 0..h {
        for x in 0..w {
            let px = img.get_pixel(x as u32, y as u32);
            for c in 0..3 {
                out.set(c, y, x, px.0[c] as f32 / 255.0);
            }
        }
    }
    out
}

/// Write samples under `dir` in the standard layout. Ground truth is stored
/// when present: disparity as PFM, occlusion as a 0/255 grayscale PNG.
pub fn save_dataset(dir: &Path, samples: &[StereoSample]) -> Result<()> {
    for sub in ["left", "right", "disp", "occ"] {
        std::fs::create_dir_all(dir.join(sub))?;
    }
    for s in samples {
        image_to_rgb8(&s.left).save(dir.join("left").join(format!("{}.png", s.id)))?;
        image_to_rgb8(&s.right).save(dir.join("right").join(format!("{}.png", s.id)))?;
        if let Some(d) = &s.gt_disparity {
            save_pfm(&dir.join("disp").join(format!("{}.pfm", s.id)), d)?;
        }
        if let Some(o) = &s.gt_occlusion {
            let mut img = image::GrayImage::new(o.w as u32, o.h as u32);
            for y in 0..o.h {
                for x in 0..o.w {
                    img.put_pixel(x as u32, y as u32, image::Luma([if o.at(y, x) { 255 } else { 0 }]));
                }
            }
            img.save(dir.join("occ").join(format!("{}.png", s.id)))?;
        }
    }
    Ok(())
}

/// Load every sample found under `dir`, sorted by id.
pub fn load_dataset(dir: &Path) -> Result<Vec<StereoSample>> {
    let left_dir = dir.join("left");
    let mut ids: Vec<String> = std::fs::read_dir(&left_dir)?
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let p = e.path();
            (p.extension().map_or(false, |x| x == "png"))
                .then(|| p.file_stem().unwrap().to_string_lossy().into_owned())
        })
        .collect();
    ids.sort();
    let mut samples = Vec::with_capacity(ids.len());
    for id in ids {
        let left = rgb8_to_image(&image::open(left_dir.join(format!("{id}.png")))?.to_rgb8());
        let right = rgb8_to_image(&image::open(dir.join("right").join(format!("{id}.png")))?.to_rgb8());
        let disp_path = dir.join("disp").join(format!("{id}.pfm"));
        let gt_disparity = disp_path.exists().then(|| load_pfm(&disp_path)).transpose()?;
        let occ_path = dir.join("occ").join(format!("{id}.png"));
        let gt_occlusion = if occ_path.exists() {
            let g = image::open(&occ_path)?.to_luma8();
            let (w, h) = (g.width() as usize, g.height() as usize);
            let data = (0..h * w)
                .map(|i| g.get_pixel((i % w) as u32, (i / w) as u32).0[0] > 127)
                .collect();
            Some(Mask { h, w, data })
        } else {
            None
        };
        samples.push(StereoSample { id, left, right, gt_disparity, gt_occlusion });
    }
    Ok(samples)
}
