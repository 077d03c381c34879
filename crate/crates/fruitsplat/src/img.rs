//! In-memory image buffers and PNG I/O.
//!
//! All pixel math in the crate runs on `f64` values in [0, 1]; 8-bit PNG is
//! only touched at the filesystem boundary. Masks are binarized with the
//! `> 127` rule when read from grayscale PNGs.

use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("failed to read image {path}: {source}")]
    Read {
        path: String,
        source: image::ImageError,
    },
    #[error("failed to write image {path}: {source}")]
    Write {
        path: String,
        source: image::ImageError,
    },
    #[error("image {path} is {got_w}x{got_h}, expected {want_w}x{want_h}")]
    SizeMismatch {
        path: String,
        got_w: usize,
        got_h: usize,
        want_w: usize,
        want_h: usize,
    },
}

/// Row-major RGB image, channel-interleaved, values in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct ColorImage {
    pub width: usize,
    pub height: usize,
    data: Vec<f64>,
}

impl ColorImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height * 3],
        }
    }

    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Self {
        let mut img = Self::new(width, height);
        for p in 0..width * height {
            img.data[p * 3..p * 3 + 3].copy_from_slice(&rgb);
        }
        img
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), width * height * 3);
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [f64; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, rgb: [f64; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Mean squared error against another image of the same shape.
    pub fn mse(&self, other: &Self) -> f64 {
        assert!(self.same_shape(other));
        let n = self.data.len() as f64;
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / n
    }
}

/// Row-major single-channel image, values in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarImage {
    pub width: usize,
    pub height: usize,
    data: Vec<f64>,
}

impl ScalarImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn filled(width: usize, height: usize, v: f64) -> Self {
        Self {
            width,
            height,
            data: vec![v; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), width * height);
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Binarize at a threshold: strictly greater maps to 1.
    pub fn threshold(&self, t: f64) -> BinaryMask {
        BinaryMask {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| u8::from(v > t)).collect(),
        }
    }
}

/// Binary mask; one byte per pixel, values 0 or 1.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask {
    pub width: usize,
    pub height: usize,
    data: Vec<u8>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<u8>) -> Self {
        assert_eq!(data.len(), width * height);
        debug_assert!(data.iter().all(|&v| v <= 1));
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        debug_assert!(v <= 1);
        self.data[y * self.width + x] = v;
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.data
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().map(|&v| v as usize).sum()
    }

    pub fn same_shape_as_image(&self, img: &ColorImage) -> bool {
        self.width == img.width && self.height == img.height
    }
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Load an 8-bit PNG as an RGB image in [0, 1].
pub fn load_color_png(path: &Path) -> Result<ColorImage, ImageError> {
    let img = image::open(path)
        .map_err(|source| ImageError::Read {
            path: path.display().to_string(),
            source,
        })?
        .to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = img.as_raw().iter().map(|&b| b as f64 / 255.0).collect();
    Ok(ColorImage::from_vec(w, h, data))
}

/// Write an RGB image as an 8-bit PNG, rounding to the nearest level.
pub fn save_color_png(img: &ColorImage, path: &Path) -> Result<(), ImageError> {
    let mut out = image::RgbImage::new(img.width as u32, img.height as u32);
    for y in 0..img.height {
        for x in 0..img.width {
            let rgb = img.get(x, y);
            out.put_pixel(
                x as u32,
                y as u32,
                image::Rgb([quantize(rgb[0]), quantize(rgb[1]), quantize(rgb[2])]),
            );
        }
    }
    out.save(path).map_err(|source| ImageError::Write {
        path: path.display().to_string(),
        source,
    })
}

/// Load an 8-bit grayscale PNG as a binary mask: pixels > 127 map to 1.
pub fn load_mask_png(path: &Path) -> Result<BinaryMask, ImageError> {
    let img = image::open(path)
        .map_err(|source| ImageError::Read {
            path: path.display().to_string(),
            source,
        })?
        .to_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = img.as_raw().iter().map(|&b| u8::from(b > 127)).collect();
    Ok(BinaryMask::from_vec(w, h, data))
}

/// Write a binary mask as an 8-bit grayscale PNG (0 or 255).
pub fn save_mask_png(mask: &BinaryMask, path: &Path) -> Result<(), ImageError> {
    let mut out = image::GrayImage::new(mask.width as u32, mask.height as u32);
    for y in 0..mask.height {
        for x in 0..mask.width {
            out.put_pixel(x as u32, y as u32, image::Luma([mask.get(x, y) * 255]));
        }
    }
    out.save(path).map_err(|source| ImageError::Write {
        path: path.display().to_string(),
        source,
    })
}

/// Write a scalar channel as an 8-bit grayscale PNG.
pub fn save_scalar_png(img: &ScalarImage, path: &Path) -> Result<(), ImageError> {
    let mut out = image::GrayImage::new(img.width as u32, img.height as u32);
    for y in 0..img.height {
        for x in 0..img.width {
            out.put_pixel(x as u32, y as u32, image::Luma([quantize(img.get(x, y))]));
        }
    }
    out.save(path).map_err(|source| ImageError::Write {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_color_roundtrip_is_exact_on_quantized_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.png");
        let mut img = ColorImage::new(5, 4);
        for y in 0..4 {
            for x in 0..5 {
                let v = (y * 5 + x) as f64 / 255.0;
                img.set(x, y, [v, 1.0 - v, 42.0 / 255.0]);
            }
        }
        save_color_png(&img, &path).unwrap();
        let back = load_color_png(&path).unwrap();
        assert_eq!(img, back);
    }

    #[test]
    fn mask_threshold_rule() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mask.png");
        // 127 -> 0, 128 -> 1 under the > 127 rule.
        let img = image::GrayImage::from_fn(2, 1, |x, _| image::Luma([if x == 0 { 127 } else { 128 }]));
        img.save(&path).unwrap();
        let mask = load_mask_png(&path).unwrap();
        assert_eq!(mask.get(0, 0), 0);
        assert_eq!(mask.get(1, 0), 1);
    }
}
