use std::fmt;
use std::sync::Arc;

use rand::{Rng, RngCore};

use super::image::Image;
use crate::config::AugmentationMode;
use crate::error::{Error, Result};

type TransformFn = dyn Fn(&Image) -> Image + Send + Sync;

/// A named user image transform, applied to training images only.
#[derive(Clone)]
pub struct ImageTransform {
    name: String,
    f: Arc<TransformFn>,
}

impl ImageTransform {
    pub fn new(name: impl Into<String>, f: impl Fn(&Image) -> Image + Send + Sync + 'static) -> Self {
        Self {
            name: name.into(),
            f: Arc::new(f),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn apply(&self, image: &Image) -> Image {
        (self.f)(image)
    }
}

impl fmt::Debug for ImageTransform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("ImageTransform").field(&self.name).finish()
    }
}

impl PartialEq for ImageTransform {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && Arc::ptr_eq(&self.f, &other.f)
    }
}

/// Parameters of the built-in `basic` plan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasicAugmentation {
    pub flip_probability: f32,
    pub rotation_degrees: f32,
    pub width_shift: f32,
    pub height_shift: f32,
    pub zoom: f32,
}

impl Default for BasicAugmentation {
    fn default() -> Self {
        Self {
            flip_probability: 0.5,
            rotation_degrees: 15.0,
            width_shift: 0.1,
            height_shift: 0.1,
            zoom: 0.1,
        }
    }
}

impl BasicAugmentation {
    pub fn apply(&self, image: &Image, rng: &mut dyn RngCore) -> Image {
        let flip = rng.random::<f32>() < self.flip_probability;
        let angle = symmetric(rng, self.rotation_degrees).to_radians();
        let tx = symmetric(rng, self.width_shift) * image.width as f32;
        let ty = symmetric(rng, self.height_shift) * image.height as f32;
        let zx = 1.0 + symmetric(rng, self.zoom);
        let zy = 1.0 + symmetric(rng, self.zoom);

        let src = if flip {
            image.flip_horizontal()
        } else {
            image.clone()
        };
        let cy = (image.height as f32 - 1.0) / 2.0;
        let cx = (image.width as f32 - 1.0) / 2.0;
        let (sin, cos) = angle.sin_cos();
        let mut out = Image::filled(image.height, image.width, [0.0; 3]);
        for y in 0..image.height {
            for x in 0..image.width {
                // inverse map: output pixel -> source pixel
                let u = (x as f32 - cx - tx) * zx;
                let v = (y as f32 - cy - ty) * zy;
                let sx = cos * u + sin * v + cx;
                let sy = -sin * u + cos * v + cy;
                out.set_pixel(y, x, src.sample_bilinear(sy, sx));
            }
        }
        out
    }
}

fn symmetric(rng: &mut dyn RngCore, range: f32) -> f32 {
    if range == 0.0 {
        0.0
    } else {
        rng.random_range(-range..=range)
    }
}

/// Training-time augmentation, applied after resizing and before the
/// backbone preprocessing transform.
#[derive(Debug, Clone, PartialEq)]
pub enum AugmentationPlan {
    Identity,
    Basic(BasicAugmentation),
    Custom(Vec<ImageTransform>),
}

impl AugmentationPlan {
    pub fn apply(&self, image: &Image, rng: &mut dyn RngCore) -> Image {
        match self {
            AugmentationPlan::Identity => image.clone(),
            AugmentationPlan::Basic(params) => params.apply(image, rng),
            AugmentationPlan::Custom(hooks) => hooks
                .iter()
                .fold(image.clone(), |img, hook| hook.apply(&img)),
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, AugmentationPlan::Identity)
    }
}

pub fn resolve_augmentation(
    mode: AugmentationMode,
    custom_hooks: &[ImageTransform],
) -> Result<AugmentationPlan> {
    match mode {
        AugmentationMode::None => Ok(AugmentationPlan::Identity),
        AugmentationMode::Basic => Ok(AugmentationPlan::Basic(BasicAugmentation::default())),
        AugmentationMode::Custom if custom_hooks.is_empty() => Err(Error::Augmentation(
            "custom augmentation requires at least one transform".into(),
        )),
        AugmentationMode::Custom => Ok(AugmentationPlan::Custom(custom_hooks.to_vec())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn gradient_image() -> Image {
        let data = (0..6 * 5 * 3).map(|v| (v % 251) as f32).collect();
        Image::new(6, 5, data)
    }

    #[test]
    fn none_is_identity() {
        let plan = resolve_augmentation(AugmentationMode::None, &[]).unwrap();
        let img = gradient_image();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(plan.apply(&img, &mut rng), img);
    }

    #[test]
    fn custom_flip_matches_direct_flip() {
        let flip = ImageTransform::new("flip", |img| {
            let mut out = img.clone();
            for y in 0..img.height {
                for x in 0..img.width {
                    out.set_pixel(y, x, img.pixel(y, img.width - 1 - x));
                }
            }
            out
        });
        let plan = resolve_augmentation(AugmentationMode::Custom, &[flip]).unwrap();
        let img = gradient_image();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = plan.apply(&img, &mut rng);
        for y in 0..img.height {
            for x in 0..img.width {
                assert_eq!(out.pixel(y, x), img.pixel(y, img.width - 1 - x));
            }
        }
    }

    #[test]
    fn custom_hooks_run_in_order() {
        let add = ImageTransform::new("add", |img| {
            let mut o = img.clone();
            o.data.iter_mut().for_each(|v| *v += 1.0);
            o
        });
        let double = ImageTransform::new("double", |img| {
            let mut o = img.clone();
            o.data.iter_mut().for_each(|v| *v *= 2.0);
            o
        });
        let plan = resolve_augmentation(AugmentationMode::Custom, &[add, double]).unwrap();
        let img = Image::filled(1, 1, [1.0, 2.0, 3.0]);
        let out = plan.apply(&img, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(out.data, vec![4.0, 6.0, 8.0]);
    }

    #[test]
    fn custom_without_hooks_fails() {
        assert!(resolve_augmentation(AugmentationMode::Custom, &[]).is_err());
    }

    #[test]
    fn basic_plan_parameters() {
        match resolve_augmentation(AugmentationMode::Basic, &[]).unwrap() {
            AugmentationPlan::Basic(p) => {
                assert_eq!(p.flip_probability, 0.5);
                assert_eq!(p.rotation_degrees, 15.0);
                assert_eq!(p.width_shift, 0.1);
                assert_eq!(p.height_shift, 0.1);
                assert_eq!(p.zoom, 0.1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn basic_keeps_size_and_solid_color() {
        let img = Image::filled(8, 8, [10.0, 20.0, 30.0]);
        let plan = AugmentationPlan::Basic(BasicAugmentation::default());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let out = plan.apply(&img, &mut rng);
            assert_eq!((out.height, out.width), (8, 8));
            for px in out.data.chunks(3) {
                assert!((px[0] - 10.0).abs() < 1e-3 && (px[2] - 30.0).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn zero_params_with_no_flip_is_identity() {
        let params = BasicAugmentation {
            flip_probability: 0.0,
            rotation_degrees: 0.0,
            width_shift: 0.0,
            height_shift: 0.0,
            zoom: 0.0,
        };
        let img = gradient_image();
        let out = params.apply(&img, &mut ChaCha8Rng::seed_from_u64(1));
        for (a, b) in out.data.iter().zip(&img.data) {
            assert!((a - b).abs() < 1e-3);
        }
    }
}
