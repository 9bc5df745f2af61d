//! Layered synthetic stereo scenes with exact ground truth.
//!
//! Each scene is a stack of fronto-parallel textured layers. Layer textures
//! are procedural (band-limited value noise), so the right view can be
//! rendered by evaluating the texture at the exact shifted coordinate:
//! with integer layer disparities the stereo correspondence holds exactly
//! at pixel centres, and the only left/right discrepancy is the added
//! sensor noise.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{Image, Map, Mask, StereoSample};
use crate::error::{Error, Result};

pub const DEFAULT_NOISE_SIGMA: f32 = 0.005;

/// One fronto-parallel layer. Index 0 is the background and must cover the
/// frame; later layers are nearer and must have strictly larger disparity.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub disparity: f32,
    pub x0: i32,
    pub y0: i32,
    pub w: u32,
    pub h: u32,
    pub texture_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSceneSpec {
    pub width: usize,
    pub height: usize,
    pub layers: Vec<LayerSpec>,
    pub noise_sigma: f32,
}

impl SyntheticSceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width < 8 || self.height < 8 {
            return Err(Error::InvalidSpec(format!("frame {}x{} too small", self.width, self.height)));
        }
        if self.layers.is_empty() {
            return Err(Error::InvalidSpec("need at least a background layer".into()));
        }
        let bg = &self.layers[0];
        if bg.x0 > 0
            || bg.y0 > 0
            || (bg.x0 + bg.w as i32) < self.width as i32
            || (bg.y0 + bg.h as i32) < self.height as i32
        {
            return Err(Error::InvalidSpec("background layer must cover the frame".into()));
        }
        let mut prev = f32::NEG_INFINITY;
        for (i, layer) in self.layers.iter().enumerate() {
            if !(2.0..=40.0).contains(&layer.disparity) {
                return Err(Error::InvalidSpec(format!(
                    "layer {} disparity {} outside [2, 40]",
                    i, layer.disparity
                )));
            }
            if layer.disparity <= prev {
                return Err(Error::InvalidSpec(
                    "layer disparities must be strictly increasing (nearer layers later)".into(),
                ));
            }
            if layer.w == 0 || layer.h == 0 {
                return Err(Error::InvalidSpec(format!("layer {} has an empty rectangle", i)));
            }
            prev = layer.disparity;
        }
        Ok(())
    }
}

/// Bilinear interpolation of a random lattice — smooth, band-limited noise.
struct ValueNoise {
    spacing: f32,
    x_min: f32,
    cols: usize,
    rows: usize,
    values: Vec<f32>,
}

impl ValueNoise {
    fn new(rng: &mut ChaCha8Rng, spacing: f32, x_min: f32, x_max: f32, height: usize) -> Self {
        let cols = ((x_max - x_min) / spacing).ceil() as usize + 2;
        let rows = (height as f32 / spacing).ceil() as usize + 2;
        let values = (0..cols * rows).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        ValueNoise { spacing, x_min, cols, rows, values }
    }

    fn sample(&self, x: f32, y: f32) -> f32 {
        let u = ((x - self.x_min) / self.spacing).clamp(0.0, (self.cols - 2) as f32);
        let v = (y / self.spacing).clamp(0.0, (self.rows - 2) as f32);
        let (u0, v0) = (u.floor() as usize, v.floor() as usize);
        let (fu, fv) = (u - u0 as f32, v - v0 as f32);
        let at = |r: usize, c: usize| self.values[r * self.cols + c];
        let top = at(v0, u0) * (1.0 - fu) + at(v0, u0 + 1) * fu;
        let bot = at(v0 + 1, u0) * (1.0 - fu) + at(v0 + 1, u0 + 1) * fu;
        top * (1.0 - fv) + bot * fv
    }
}

struct LayerTexture {
    base: [f32; 3],
    chroma: [f32; 3],
    broad: ValueNoise,
    coarse: ValueNoise,
    fine: ValueNoise,
}

impl LayerTexture {
    fn new(seed: u64, x_min: f32, x_max: f32, height: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base = [(); 3].map(|_| rng.random_range(0.22f32..0.78));
        let chroma = [(); 3].map(|_| rng.random_range(0.60f32..1.00));
        // roughly 1/f: the broad octave gives the photometric error surface
        // a wide basin of attraction, the finer ones make matching locally
        // discriminative
        let broad = ValueNoise::new(&mut rng, 32.0, x_min, x_max, height);
        let coarse = ValueNoise::new(&mut rng, 8.0, x_min, x_max, height);
        let fine = ValueNoise::new(&mut rng, 4.0, x_min, x_max, height);
        LayerTexture { base, chroma, broad, coarse, fine }
    }

    fn color(&self, x: f32, y: f32) -> [f32; 3] {
        let n = 0.32 * self.broad.sample(x, y)
            + 0.16 * self.coarse.sample(x, y)
            + 0.07 * self.fine.sample(x, y);
        [0, 1, 2].map(|c| (self.base[c] + self.chroma[c] * n).clamp(0.02, 0.98))
    }
}

fn covers_left(layer: &LayerSpec, is_background: bool, x: usize, y: usize) -> bool {
    is_background
        || (x as i32 >= layer.x0
            && (x as i32) < layer.x0 + layer.w as i32
            && y as i32 >= layer.y0
            && (y as i32) < layer.y0 + layer.h as i32)
}

fn covers_right(layer: &LayerSpec, is_background: bool, xr: f32, y: usize) -> bool {
    is_background
        || (xr >= layer.x0 as f32 - layer.disparity
            && xr < (layer.x0 + layer.w as i32) as f32 - layer.disparity
            && y as i32 >= layer.y0
            && (y as i32) < layer.y0 + layer.h as i32)
}

/// Front-most layer index covering a left-view pixel.
fn front_left(spec: &SyntheticSceneSpec, x: usize, y: usize) -> usize {
    for i in (0..spec.layers.len()).rev() {
        if covers_left(&spec.layers[i], i == 0, x, y) {
            return i;
        }
    }
    0
}

/// Front-most layer index covering a right-view position.
fn front_right(spec: &SyntheticSceneSpec, xr: f32, y: usize) -> usize {
    for i in (0..spec.layers.len()).rev() {
        if covers_right(&spec.layers[i], i == 0, xr, y) {
            return i;
        }
    }
    0
}

/// Render the stereo pair with ground-truth disparity and occlusion.
///
/// The right view shifts every layer left by its disparity. A left pixel is
/// occluded when its correspondence in the right view is covered by a nearer
/// layer; correspondences falling outside the right frame are not marked.
pub fn generate_scene(spec: &SyntheticSceneSpec) -> Result<StereoSample> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let x_min = -2.0f32;
    let x_max = w as f32 + 44.0;
    let textures: Vec<LayerTexture> = spec
        .layers
        .iter()
        .map(|l| LayerTexture::new(l.texture_seed, x_min, x_max, h))
        .collect();

    let mut left = Image::zeros(3, h, w);
    let mut right = Image::zeros(3, h, w);
    let mut disp = Map::zeros(h, w);
    let mut occ = Mask::filled(h, w, false);

    for y in 0..h {
        for x in 0..w {
            let li = front_left(spec, x, y);
            let color = textures[li].color(x as f32, y as f32);
            for c in 0..3 {
                left.set(c, y, x, color[c]);
            }
            disp.set(y, x, spec.layers[li].disparity);

            let ri = front_right(spec, x as f32, y);
            let rd = spec.layers[ri].disparity;
            let rcolor = textures[ri].color(x as f32 + rd, y as f32);
            for c in 0..3 {
                right.set(c, y, x, rcolor[c]);
            }
        }
    }
    for y in 0..h {
        for x in 0..w {
            let d = disp.at(y, x);
            let xr = x as f32 - d;
            if xr >= 0.0 && xr <= (w - 1) as f32 {
                let fi = front_right(spec, xr, y);
                if spec.layers[fi].disparity > d + 0.5 {
                    occ.data[y * w + x] = true;
                }
            }
        }
    }

    if spec.noise_sigma > 0.0 {
        let noise_seed = spec.layers[0].texture_seed ^ 0x9e37_79b9_7f4a_7c15;
        let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
        let normal = Normal::new(0.0f32, spec.noise_sigma)
            .map_err(|e| Error::InvalidSpec(format!("bad noise sigma: {e}")))?;
        for img in [&mut left, &mut right] {
            for v in &mut img.data {
                *v = (*v + normal.sample(&mut rng)).clamp(0.0, 1.0);
            }
        }
    }

    Ok(StereoSample {
        id: String::new(),
        left,
        right,
        gt_disparity: Some(disp),
        gt_occlusion: Some(occ),
    })
}

/// Random scene: one background plus 2-4 foreground rectangles with strictly
/// increasing integer disparities. Integer disparities keep the rendered
/// correspondence exact at pixel centres.
pub fn sample_scene_spec(
    rng: &mut ChaCha8Rng,
    width: usize,
    height: usize,
    noise_sigma: f32,
) -> SyntheticSceneSpec {
    let bg_disp = rng.random_range(2..=6);
    let n_fg = rng.random_range(2..=4usize);
    let mut disps = std::collections::BTreeSet::new();
    while disps.len() < n_fg {
        disps.insert(rng.random_range(bg_disp + 4..=40i64));
    }
    let mut layers = vec![LayerSpec {
        disparity: bg_disp as f32,
        x0: 0,
        y0: 0,
        w: width as u32,
        h: height as u32,
        texture_seed: rng.random(),
    }];
    for d in disps {
        let rw = rng.random_range((width / 4).max(12)..=(2 * width / 5).max(16)) as u32;
        let rh = rng.random_range((height / 4).max(10)..=(2 * height / 5).max(12)) as u32;
        let x_hi = (width as i32 - rw as i32 - 4).max(5);
        let y_hi = (height as i32 - rh as i32 - 2).max(3);
        layers.push(LayerSpec {
            disparity: d as f32,
            x0: rng.random_range(4..x_hi),
            y0: rng.random_range(2..y_hi),
            w: rw,
            h: rh,
            texture_seed: rng.random(),
        });
    }
    SyntheticSceneSpec { width, height, layers, noise_sigma }
}
