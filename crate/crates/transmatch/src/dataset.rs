//! Dataset sources: the procedural blob generator and image folders on disk.
//!
//! A folder dataset is a directory with a `manifest.toml` and one
//! sub-directory of PNG files per class:
//!
//! ```text
//! root/
//!   manifest.toml
//!   class_000/0000.png ...
//!   class_001/0000.png ...
//! ```
//!
//! The manifest fixes the image shape and assigns every class a split role.
//! Files inside a class directory are loaded in file-name order.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use transmatch_core::data::synthetic::generate_blob_dataset;
use transmatch_core::data::{make_split, ClassSplit, ImageDataset, LabeledExample};
use transmatch_core::{Image, ImageShape};

use crate::config::DatasetSpec;
use crate::error::{AppError, Result};

pub const MANIFEST_FILE: &str = "manifest.toml";
pub const MANIFEST_VERSION: u32 = 1;

/// Anything that can produce a labeled dataset together with its class split.
pub trait DataSource {
    fn load(&self) -> Result<(ImageDataset, ClassSplit)>;
}

impl DataSource for DatasetSpec {
    fn load(&self) -> Result<(ImageDataset, ClassSplit)> {
        match self {
            DatasetSpec::Synthetic { blobs, split } => {
                let dataset = generate_blob_dataset(blobs)?;
                let split = make_split(
                    dataset.num_classes(),
                    (split.base, split.validation, split.novel),
                    split.seed,
                )?;
                Ok((dataset, split))
            }
            DatasetSpec::Folder { path } => load_folder(path),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitRole {
    Base,
    Validation,
    Novel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestClass {
    pub name: String,
    pub role: SplitRole,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format_version: u32,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub classes: Vec<ManifestClass>,
}

impl Manifest {
    pub fn shape(&self) -> ImageShape {
        ImageShape::new(self.channels, self.height, self.width)
    }

    fn validate(&self) -> Result<()> {
        if self.format_version != MANIFEST_VERSION {
            return Err(AppError::config(format!(
                "unsupported manifest version {} (expected {MANIFEST_VERSION})",
                self.format_version
            )));
        }
        if !matches!(self.channels, 1 | 3) {
            return Err(AppError::config("manifest channels must be 1 or 3"));
        }
        if self.height == 0 || self.width == 0 {
            return Err(AppError::config("manifest image size must be positive"));
        }
        let mut names: Vec<&str> = self.classes.iter().map(|c| c.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(AppError::config("manifest lists a class twice"));
        }
        if names
            .iter()
            .any(|n| n.is_empty() || n.contains(['/', '\\']) || *n == "." || *n == "..")
        {
            return Err(AppError::config("class names must be plain directory names"));
        }
        Ok(())
    }

    fn split(&self) -> ClassSplit {
        let of = |role| {
            self.classes
                .iter()
                .enumerate()
                .filter(|(_, c)| c.role == role)
                .map(|(i, _)| i)
                .collect()
        };
        ClassSplit {
            base_classes: of(SplitRole::Base),
            validation_classes: of(SplitRole::Validation),
            novel_classes: of(SplitRole::Novel),
        }
    }
}

pub fn read_manifest(root: &Path) -> Result<Manifest> {
    let path = root.join(MANIFEST_FILE);
    if !root.is_dir() {
        return Err(AppError::config(format!(
            "dataset directory {} does not exist",
            root.display()
        )));
    }
    let text = fs::read_to_string(&path).map_err(|e| AppError::io(&path, e))?;
    let manifest: Manifest = toml::from_str(&text).map_err(|e| AppError::config(format!("{}: {e}", path.display())))?;
    manifest.validate()?;
    Ok(manifest)
}

/// Loads a folder dataset. Pixels are scaled from 8 bits to `[0, 1]`.
pub fn load_folder(root: &Path) -> Result<(ImageDataset, ClassSplit)> {
    let manifest = read_manifest(root)?;
    let shape = manifest.shape();
    let mut examples = Vec::new();
    for (label, class) in manifest.classes.iter().enumerate() {
        let dir = root.join(&class.name);
        let mut files: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(|e| AppError::io(&dir, e))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|ext| ext.eq_ignore_ascii_case("png")))
            .collect();
        files.sort();
        if files.is_empty() {
            return Err(AppError::config(format!(
                "class directory {} holds no PNG files",
                dir.display()
            )));
        }
        for file in files {
            examples.push(LabeledExample {
                image: read_png(&file, shape)?,
                label,
            });
        }
    }
    let names = manifest.classes.iter().map(|c| c.name.clone()).collect();
    let dataset = ImageDataset::new(names, examples)?;
    let split = manifest.split();
    split.validate(dataset.num_classes())?;
    Ok((dataset, split))
}

fn read_png(path: &Path, shape: ImageShape) -> Result<Image> {
    let img = image::open(path).map_err(|e| AppError::config(format!("{}: {e}", path.display())))?;
    if img.width() as usize != shape.width || img.height() as usize != shape.height {
        return Err(AppError::config(format!(
            "{} is {}x{}, expected {}x{}",
            path.display(),
            img.width(),
            img.height(),
            shape.width,
            shape.height
        )));
    }
    let (w, h) = (shape.width, shape.height);
    let mut data = vec![0.0; shape.len()];
    if shape.channels == 1 {
        for (i, p) in img.to_luma8().pixels().enumerate() {
            data[i] = f64::from(p.0[0]) / 255.0;
        }
    } else {
        for (i, p) in img.to_rgb8().pixels().enumerate() {
            for c in 0..3 {
                data[c * h * w + i] = f64::from(p.0[c]) / 255.0;
            }
        }
    }
    Ok(Image::new(shape, data)?)
}

fn write_png(path: &Path, img: &Image) -> Result<()> {
    let shape = img.shape();
    let (w, h) = (shape.width as u32, shape.height as u32);
    let quantize = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    let plane = shape.height * shape.width;
    let result = if shape.channels == 1 {
        let buf = image::GrayImage::from_fn(w, h, |x, y| image::Luma([quantize(img.get(0, y as usize, x as usize))]));
        buf.save(path)
    } else {
        let buf = image::RgbImage::from_fn(w, h, |x, y| {
            let i = y as usize * shape.width + x as usize;
            image::Rgb([0, 1, 2].map(|c| quantize(img.data()[c * plane + i])))
        });
        buf.save(path)
    };
    result.map_err(|e| AppError::Runtime(format!("cannot write {}: {e}", path.display())))
}

/// Writes `dataset` as a folder dataset that [`load_folder`] reads back.
///
/// Only 1- and 3-channel images can be stored. Pixel values are quantized to
/// 8 bits on the way out.
pub fn write_folder(root: &Path, dataset: &ImageDataset, split: &ClassSplit) -> Result<()> {
    let shape = dataset.shape();
    if !matches!(shape.channels, 1 | 3) {
        return Err(AppError::config("only 1- or 3-channel datasets can be written as PNG"));
    }
    split.validate(dataset.num_classes())?;
    let role_of = |class: usize| {
        if split.base_classes.contains(&class) {
            SplitRole::Base
        } else if split.validation_classes.contains(&class) {
            SplitRole::Validation
        } else {
            SplitRole::Novel
        }
    };
    let manifest = Manifest {
        format_version: MANIFEST_VERSION,
        channels: shape.channels,
        height: shape.height,
        width: shape.width,
        classes: dataset
            .class_names()
            .iter()
            .enumerate()
            .map(|(i, name)| ManifestClass {
                name: name.clone(),
                role: role_of(i),
            })
            .collect(),
    };
    manifest.validate()?;
    fs::create_dir_all(root).map_err(|e| AppError::io(root, e))?;
    for (class, name) in dataset.class_names().iter().enumerate() {
        let dir = root.join(name);
        fs::create_dir_all(&dir).map_err(|e| AppError::io(&dir, e))?;
        for (k, &i) in dataset.class_indices(class).iter().enumerate() {
            write_png(&dir.join(format!("{k:05}.png")), &dataset.example(i).image)?;
        }
    }
    let text = toml::to_string(&manifest).map_err(|e| AppError::Runtime(format!("cannot serialize manifest: {e}")))?;
    let path = root.join(MANIFEST_FILE);
    fs::write(&path, text).map_err(|e| AppError::io(&path, e))
}
