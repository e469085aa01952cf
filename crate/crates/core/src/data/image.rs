use std::path::Path;

use image::imageops::FilterType;

use crate::error::{Error, Result};

/// Recognized image file extensions (compared case-insensitively).
pub const IMAGE_EXTENSIONS: [&str; 4] = ["png", "jpg", "jpeg", "bmp"];

pub fn is_image_file(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| IMAGE_EXTENSIONS.iter().any(|x| x.eq_ignore_ascii_case(e)))
        .unwrap_or(false)
}

/// An RGB image stored as `f32` in HWC order. Values are in `0..=255` until a
/// backbone preprocessing transform is applied.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl Image {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), height * width * 3, "HWC buffer size");
        Self {
            height,
            width,
            data,
        }
    }

    pub fn filled(height: usize, width: usize, rgb: [f32; 3]) -> Self {
        let data = (0..height * width).flat_map(|_| rgb).collect();
        Self::new(height, width, data)
    }

    #[inline]
    pub fn pixel(&self, y: usize, x: usize) -> [f32; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, y: usize, x: usize, rgb: [f32; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn flip_horizontal(&self) -> Image {
        let mut out = self.clone();
        for y in 0..self.height {
            for x in 0..self.width {
                out.set_pixel(y, x, self.pixel(y, self.width - 1 - x));
            }
        }
        out
    }

    /// Bilinear sample with edge clamping (`nearest` fill outside the frame).
    pub fn sample_bilinear(&self, y: f32, x: f32) -> [f32; 3] {
        let max_y = (self.height - 1) as f32;
        let max_x = (self.width - 1) as f32;
        let y = y.clamp(0.0, max_y);
        let x = x.clamp(0.0, max_x);
        let y0 = y.floor() as usize;
        let x0 = x.floor() as usize;
        let y1 = (y0 + 1).min(self.height - 1);
        let x1 = (x0 + 1).min(self.width - 1);
        let dy = y - y0 as f32;
        let dx = x - x0 as f32;
        let (a, b, c, d) = (
            self.pixel(y0, x0),
            self.pixel(y0, x1),
            self.pixel(y1, x0),
            self.pixel(y1, x1),
        );
        let mut out = [0.0; 3];
        for ch in 0..3 {
            let top = a[ch] * (1.0 - dx) + b[ch] * dx;
            let bottom = c[ch] * (1.0 - dx) + d[ch] * dx;
            out[ch] = top * (1.0 - dy) + bottom * dy;
        }
        out
    }

    pub fn to_rgb8(&self) -> image::RgbImage {
        let bytes = self
            .data
            .iter()
            .map(|v| v.round().clamp(0.0, 255.0) as u8)
            .collect();
        image::RgbImage::from_raw(self.width as u32, self.height as u32, bytes)
            .expect("buffer size matches dimensions")
    }

    pub fn from_rgb8(img: &image::RgbImage) -> Image {
        Image::new(
            img.height() as usize,
            img.width() as usize,
            img.as_raw().iter().map(|&b| b as f32).collect(),
        )
    }
}

/// Decodes an image file and resizes it bilinearly to `(height, width)`.
pub fn load_resized(path: &Path, size: (u32, u32)) -> Result<image::RgbImage> {
    let decoded = image::open(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let rgb = decoded.to_rgb8();
    let (h, w) = size;
    if rgb.height() == h && rgb.width() == w {
        return Ok(rgb);
    }
    Ok(image::imageops::resize(&rgb, w, h, FilterType::Triangle))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extensions_case_insensitive() {
        assert!(is_image_file(Path::new("a/b.PNG")));
        assert!(is_image_file(Path::new("a/b.jpeg")));
        assert!(is_image_file(Path::new("x.Bmp")));
        assert!(!is_image_file(Path::new("notes.txt")));
        assert!(!is_image_file(Path::new("noext")));
    }

    #[test]
    fn flip_twice_is_identity() {
        let data: Vec<f32> = (0..2 * 3 * 3).map(|v| v as f32).collect();
        let img = Image::new(2, 3, data);
        assert_eq!(img.flip_horizontal().flip_horizontal(), img);
        assert_eq!(img.flip_horizontal().pixel(0, 0), img.pixel(0, 2));
    }

    #[test]
    fn bilinear_on_grid_points_is_exact() {
        let data: Vec<f32> = (0..4 * 4 * 3).map(|v| v as f32).collect();
        let img = Image::new(4, 4, data);
        assert_eq!(img.sample_bilinear(2.0, 1.0), img.pixel(2, 1));
        // clamped outside
        assert_eq!(img.sample_bilinear(-3.0, 9.0), img.pixel(0, 3));
    }

    #[test]
    fn resize_to_target() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.png");
        image::RgbImage::from_pixel(10, 7, image::Rgb([1, 2, 3]))
            .save(&path)
            .unwrap();
        let out = load_resized(&path, (4, 5)).unwrap();
        assert_eq!((out.height(), out.width()), (4, 5));
        assert_eq!(out.get_pixel(0, 0).0, [1, 2, 3]);
    }

    #[test]
    fn undecodable_names_path() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("broken.png");
        std::fs::write(&path, b"not a png").unwrap();
        match load_resized(&path, (4, 4)) {
            Err(Error::Image { path: p, .. }) => assert_eq!(p, path),
            other => panic!("unexpected {other:?}"),
        }
    }
}
