//! Small generated image datasets for demos and tests.
//!
//! Each class has a distinct pattern (solid colors or stripes) with light
//! per-pixel noise, so a tiny network separates them within a few epochs.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    /// Number of classes, at most [`PATTERNS`]`.len()`.
    pub classes: usize,
    pub train_per_class: usize,
    pub val_per_class: usize,
    pub test_per_class: usize,
    /// Images per class in an external test folder; 0 skips the folder.
    pub external_per_class: usize,
    pub size: u32,
    pub noise: f32,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            classes: 3,
            train_per_class: 20,
            val_per_class: 5,
            test_per_class: 5,
            external_per_class: 0,
            size: 32,
            noise: 12.0,
            seed: 0,
        }
    }
}

pub const PATTERNS: [&str; 6] = ["blue_hstripes", "green", "red", "vstripes", "yellow", "checker"];

/// Paths of a generated dataset.
#[derive(Debug, Clone)]
pub struct SyntheticPaths {
    pub train_val: PathBuf,
    pub test: PathBuf,
    pub external: Option<PathBuf>,
}

fn pattern_pixel(pattern: &str, y: u32, x: u32) -> [f32; 3] {
    match pattern {
        "red" => [210.0, 40.0, 40.0],
        "green" => [40.0, 190.0, 60.0],
        "yellow" => [220.0, 210.0, 40.0],
        "blue_hstripes" => {
            if (y / 4).is_multiple_of(2) {
                [30.0, 50.0, 220.0]
            } else {
                [240.0, 240.0, 240.0]
            }
        }
        "vstripes" => {
            if (x / 4).is_multiple_of(2) {
                [20.0, 20.0, 20.0]
            } else {
                [230.0, 120.0, 200.0]
            }
        }
        _ => {
            if ((x / 4) + (y / 4)).is_multiple_of(2) {
                [0.0, 0.0, 0.0]
            } else {
                [255.0, 255.0, 255.0]
            }
        }
    }
}

pub fn render(pattern: &str, size: u32, noise: f32, rng: &mut impl Rng) -> image::RgbImage {
    image::RgbImage::from_fn(size, size, |x, y| {
        let base = pattern_pixel(pattern, y, x);
        let px = base.map(|c| {
            let n = if noise > 0.0 {
                rng.random_range(-noise..=noise)
            } else {
                0.0
            };
            (c + n).round().clamp(0.0, 255.0) as u8
        });
        image::Rgb(px)
    })
}

/// Writes `root/train_val/{train,val}/<class>`, `root/test/<class>` and, when
/// requested, `root/external/<class>` as PNG files.
pub fn write_dataset(root: &Path, spec: &SyntheticSpec) -> Result<SyntheticPaths> {
    if spec.classes < 1 || spec.classes > PATTERNS.len() {
        return Err(Error::InvalidArgument(format!(
            "synthetic datasets support 1..={} classes",
            PATTERNS.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let train_val = root.join("train_val");
    let test = root.join("test");
    let external = (spec.external_per_class > 0).then(|| root.join("external"));

    let mut targets = vec![
        (train_val.join("train"), spec.train_per_class),
        (train_val.join("val"), spec.val_per_class),
        (test.clone(), spec.test_per_class),
    ];
    if let Some(ext) = &external {
        targets.push((ext.clone(), spec.external_per_class));
    }
    for (dir, per_class) in targets {
        for pattern in &PATTERNS[..spec.classes] {
            let class_dir = dir.join(pattern);
            std::fs::create_dir_all(&class_dir).map_err(|e| Error::io(&class_dir, e))?;
            for i in 0..per_class {
                let img = render(pattern, spec.size, spec.noise, &mut rng);
                let path = class_dir.join(format!("{pattern}_{i:03}.png"));
                img.save(&path).map_err(|e| Error::Image {
                    path: path.clone(),
                    message: e.to_string(),
                })?;
            }
        }
    }
    Ok(SyntheticPaths {
        train_val,
        test,
        external,
    })
}
