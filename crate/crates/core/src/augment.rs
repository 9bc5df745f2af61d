//! Spatial / occlusion / appearance augmentation driving the second forward
//! pass: crops, horizontal rescaling (which scales disparity), injected
//! occluder rectangles in the right view, and photometric jitter.
//!
//! The teacher maps transform along: `d_teacher = s * resample(D)`, and
//! `o_tilde` is high exactly where the teacher is confident and the student
//! faces an occlusion it cannot match photometrically.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::data::{Image, Map};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CropRect {
    pub x0: usize,
    pub y0: usize,
    pub w: usize,
    pub h: usize,
}

/// Axis-aligned occluder injected into the augmented right view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OcclusionRect {
    pub x0: usize,
    pub y0: usize,
    pub w: usize,
    pub h: usize,
    pub fill: [f32; 3],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Appearance {
    pub brightness: f32,
    pub contrast: f32,
    pub gamma: [f32; 3],
}

impl Appearance {
    pub fn neutral() -> Self {
        Appearance { brightness: 0.0, contrast: 1.0, gamma: [1.0; 3] }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentationSpec {
    pub crop: CropRect,
    /// Width after horizontal rescaling; the effective scale factor is
    /// `out_w / crop.w`.
    pub out_w: usize,
    /// In augmented right-view coordinates.
    pub occlusions: Vec<OcclusionRect>,
    pub appearance: Appearance,
    pub rng_seed: u64,
}

impl AugmentationSpec {
    /// Full crop, unit scale, no occluders, neutral appearance.
    pub fn identity(w: usize, h: usize) -> Self {
        AugmentationSpec {
            crop: CropRect { x0: 0, y0: 0, w, h },
            out_w: w,
            occlusions: Vec::new(),
            appearance: Appearance::neutral(),
            rng_seed: 0,
        }
    }

    pub fn scale(&self) -> f32 {
        self.out_w as f32 / self.crop.w as f32
    }

    /// Compact one-line form for the run log.
    pub fn to_log_string(&self) -> String {
        let rects: Vec<String> = self
            .occlusions
            .iter()
            .map(|r| format!("{},{},{},{}", r.x0, r.y0, r.w, r.h))
            .collect();
        format!(
            "seed={} crop={},{},{}x{} out_w={} occ=[{}] bright={:.4} contrast={:.4} gamma={:.4},{:.4},{:.4}",
            self.rng_seed,
            self.crop.x0,
            self.crop.y0,
            self.crop.w,
            self.crop.h,
            self.out_w,
            rects.join(";"),
            self.appearance.brightness,
            self.appearance.contrast,
            self.appearance.gamma[0],
            self.appearance.gamma[1],
            self.appearance.gamma[2],
        )
    }

    fn validate(&self, img_w: usize, img_h: usize) -> Result<()> {
        let c = &self.crop;
        // the matcher downsamples by 4, so augmented sizes must stay
        // 4-aligned and at least two coarse cells wide
        if c.w < 8 || c.h < 8 || c.w % 4 != 0 || c.h % 4 != 0 || self.out_w < 8 || self.out_w % 4 != 0 {
            return Err(Error::DegenerateCrop(format!(
                "crop {}x{} -> width {} (need multiples of 4, at least 8)",
                c.w, c.h, self.out_w
            )));
        }
        if c.x0 + c.w > img_w || c.y0 + c.h > img_h {
            return Err(Error::InvalidSpec(format!(
                "crop {},{} {}x{} outside {}x{} frame",
                c.x0, c.y0, c.w, c.h, img_w, img_h
            )));
        }
        for r in &self.occlusions {
            if r.w == 0 || r.h == 0 || r.x0 + r.w > self.out_w || r.y0 + r.h > c.h {
                return Err(Error::InvalidSpec(format!(
                    "occluder {},{} {}x{} outside augmented {}x{} frame",
                    r.x0, r.y0, r.w, r.h, self.out_w, c.h
                )));
            }
        }
        Ok(())
    }
}

/// All outputs of one augmentation pass.
#[derive(Debug, Clone)]
pub struct AugmentedSample {
    pub left: Image,
    pub right: Image,
    pub d_teacher: Map,
    pub o_tilde: Map,
}

/// Uniformly sampled spec: crop of at least 3/4 of the frame, horizontal
/// scale in [0.8, 1.2] (snapped so the output width stays 4-aligned), one or
/// two occluder rectangles and mild appearance jitter. Deterministic given
/// the rng state.
pub fn sample_spec(rng: &mut ChaCha8Rng, width: usize, height: usize) -> AugmentationSpec {
    let snap4 = |v: usize| (v / 4) * 4;
    let cw = snap4(rng.random_range(3 * width / 4..=width)).max(8);
    let ch = snap4(rng.random_range(3 * height / 4..=height)).max(8);
    let x0 = rng.random_range(0..=width - cw);
    let y0 = rng.random_range(0..=height - ch);
    let scale = rng.random_range(0.8..1.2f32);
    let out_w = snap4((cw as f32 * scale).round() as usize).max(8);

    let n_occ = rng.random_range(1..=2usize);
    let occlusions = (0..n_occ)
        .map(|_| {
            let rw = rng.random_range(8..=(out_w / 4).max(8));
            let rh = rng.random_range(8..=(ch / 3).max(8));
            OcclusionRect {
                x0: rng.random_range(0..=out_w - rw),
                y0: rng.random_range(0..=ch - rh),
                w: rw,
                h: rh,
                fill: [(); 3].map(|_| rng.random_range(0.0..1.0)),
            }
        })
        .collect();

    AugmentationSpec {
        crop: CropRect { x0, y0, w: cw, h: ch },
        out_w,
        occlusions,
        appearance: Appearance {
            brightness: rng.random_range(-0.08..0.08),
            contrast: rng.random_range(0.9..1.1),
            gamma: [(); 3].map(|_| rng.random_range(0.85..1.18)),
        },
        rng_seed: rng.random(),
    }
}

fn crop_plane(src: &[f32], src_w: usize, rect: &CropRect) -> Vec<f32> {
    let mut out = Vec::with_capacity(rect.w * rect.h);
    for y in rect.y0..rect.y0 + rect.h {
        out.extend_from_slice(&src[y * src_w + rect.x0..y * src_w + rect.x0 + rect.w]);
    }
    out
}

/// Bilinear row resampling; exact identity when `out_w == src_w`.
fn resample_row(src: &[f32], out_w: usize) -> Vec<f32> {
    let src_w = src.len();
    let ratio = src_w as f32 / out_w as f32;
    (0..out_w)
        .map(|xo| {
            let xs = ((xo as f32 + 0.5) * ratio - 0.5).clamp(0.0, (src_w - 1) as f32);
            let x0 = (xs.floor() as usize).min(src_w - 2);
            let f = xs - x0 as f32;
            src[x0] * (1.0 - f) + src[x0 + 1] * f
        })
        .collect()
}

fn spatial_image(img: &Image, spec: &AugmentationSpec) -> Image {
    let c = &spec.crop;
    let mut out = Image::zeros(img.channels, c.h, spec.out_w);
    for ch in 0..img.channels {
        let plane = crop_plane(&img.data[ch * img.h * img.w..][..img.h * img.w], img.w, c);
        for y in 0..c.h {
            let row = resample_row(&plane[y * c.w..][..c.w], spec.out_w);
            out.data[(ch * c.h + y) * spec.out_w..][..spec.out_w].copy_from_slice(&row);
        }
    }
    out
}

fn spatial_map(map: &Map, spec: &AugmentationSpec) -> Map {
    let c = &spec.crop;
    let plane = crop_plane(&map.data, map.w, c);
    let mut out = Map::zeros(c.h, spec.out_w);
    for y in 0..c.h {
        let row = resample_row(&plane[y * c.w..][..c.w], spec.out_w);
        out.data[y * spec.out_w..][..spec.out_w].copy_from_slice(&row);
    }
    out
}

fn apply_appearance(img: &mut Image, a: &Appearance) {
    let affine = a.contrast != 1.0 || a.brightness != 0.0;
    for ch in 0..img.channels {
        let gamma = a.gamma[ch.min(2)];
        let plane = &mut img.data[ch * img.h * img.w..][..img.h * img.w];
        for v in plane.iter_mut() {
            if affine {
                *v = ((*v - 0.5) * a.contrast + 0.5 + a.brightness).clamp(0.0, 1.0);
            }
            if gamma != 1.0 {
                *v = v.powf(gamma);
            }
        }
    }
}

/// Transform the image pair: crop + rescale, inject occluders into the
/// right view only, then apply the appearance jitter identically to both.
pub fn transform_pair(spec: &AugmentationSpec, left: &Image, right: &Image) -> Result<(Image, Image)> {
    spec.validate(left.w, left.h)?;
    if left.w != right.w || left.h != right.h || left.channels != right.channels {
        return Err(Error::ShapeMismatch(format!(
            "left {}x{} vs right {}x{}",
            left.w, left.h, right.w, right.h
        )));
    }
    let mut l = spatial_image(left, spec);
    let mut r = spatial_image(right, spec);
    for rect in &spec.occlusions {
        for ch in 0..r.channels {
            for y in rect.y0..rect.y0 + rect.h {
                for x in rect.x0..rect.x0 + rect.w {
                    r.set(ch, y, x, rect.fill[ch.min(2)]);
                }
            }
        }
    }
    apply_appearance(&mut l, &spec.appearance);
    apply_appearance(&mut r, &spec.appearance);
    Ok((l, r))
}

/// Transform the teacher maps. Disparity rescales spatially and its values
/// scale by the horizontal factor. `o_tilde` = max(1 - O_t, injected-occluder
/// indicator), then forced to 0 wherever the transformed teacher occlusion
/// exceeds 0.5 so the student never trains on teacher outliers.
pub fn transform_maps(spec: &AugmentationSpec, d: &Map, o: &Map) -> Result<(Map, Map)> {
    spec.validate(d.w, d.h)?;
    if d.w != o.w || d.h != o.h {
        return Err(Error::ShapeMismatch(format!(
            "disparity {}x{} vs occlusion {}x{}",
            d.w, d.h, o.w, o.h
        )));
    }
    let s = spec.scale();
    let mut d_teacher = spatial_map(d, spec);
    for v in &mut d_teacher.data {
        *v *= s;
    }
    let o_t = spatial_map(o, spec);
    let (h, w) = (o_t.h, o_t.w);
    let mut o_tilde = Map::zeros(h, w);
    for y in 0..h {
        for x in 0..w {
            let ot = o_t.at(y, x);
            if ot > 0.5 {
                continue; // low-confidence teacher: weight stays 0
            }
            let xr = x as f32 - d_teacher.at(y, x);
            let hits_injected = spec.occlusions.iter().any(|r| {
                y >= r.y0
                    && y < r.y0 + r.h
                    && xr >= r.x0 as f32 - 0.5
                    && xr < (r.x0 + r.w) as f32 - 0.5
            });
            o_tilde.set(y, x, if hits_injected { 1.0 } else { 1.0 - ot });
        }
    }
    Ok((d_teacher, o_tilde))
}

/// Full augmentation pass over a sample and its teacher maps.
pub fn apply(
    spec: &AugmentationSpec,
    left: &Image,
    right: &Image,
    d: &Map,
    o: &Map,
) -> Result<AugmentedSample> {
    let (l, r) = transform_pair(spec, left, right)?;
    let (d_teacher, o_tilde) = transform_maps(spec, d, o)?;
    Ok(AugmentedSample { left: l, right: r, d_teacher, o_tilde })
}
