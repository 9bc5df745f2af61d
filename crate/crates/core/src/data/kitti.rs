//! KITTI-style 16-bit PNG disparity maps: disparity = stored / 256, and a
//! stored value of 0 marks an invalid pixel.

use std::path::Path;

use crate::data::{Map, Mask};
use crate::error::{Error, Result};

pub fn load_kitti_png(path: &Path) -> Result<(Map, Mask)> {
    let img = image::open(path)?;
    let g16 = match img {
        image::DynamicImage::ImageLuma16(g) => g,
        other => {
            return Err(Error::WrongBitDepth { got: format!("{:?}", other.color()) });
        }
    };
    let (w, h) = (g16.width() as usize, g16.height() as usize);
    let mut map = Map::zeros(h, w);
    let mut valid = Mask::filled(h, w, false);
    for y in 0..h {
        for x in 0..w {
            let v = g16.get_pixel(x as u32, y as u32).0[0];
            if v > 0 {
                map.set(y, x, v as f32 / 256.0);
                valid.data[y * w + x] = true;
            }
        }
    }
    Ok((map, valid))
}

/// Invalid pixels store 0; valid disparities round to the nearest
/// representable value and clamp to at least 1 so they stay distinguishable
/// from the invalid marker.
pub fn save_kitti_png(path: &Path, map: &Map, valid: &Mask) -> Result<()> {
    if map.h != valid.h || map.w != valid.w {
        return Err(Error::ShapeMismatch(format!(
            "disparity {}x{} vs mask {}x{}",
            map.h, map.w, valid.h, valid.w
        )));
    }
    let mut img = image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::new(map.w as u32, map.h as u32);
    for y in 0..map.h {
        for x in 0..map.w {
            let v = if valid.at(y, x) {
                ((map.at(y, x) * 256.0).round() as i64).clamp(1, u16::MAX as i64) as u16
            } else {
                0
            };
            img.put_pixel(x as u32, y as u32, image::Luma([v]));
        }
    }
    img.save(path)?;
    Ok(())
}
