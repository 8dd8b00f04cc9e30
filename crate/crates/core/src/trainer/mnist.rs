//! IDX files as distributed with MNIST.

use std::path::{Path, PathBuf};

use crate::channel::TargetImage;
use crate::error::{Error, Result};
use crate::scene::SceneConfig;

pub const SIDE: usize = 28;
const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

/// Images as raw `28 × 28` row-major bytes, paired with digit labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MnistSet {
    pub images: Vec<Vec<u8>>,
    pub labels: Vec<u8>,
}

impl MnistSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Paths of the four standard files under one directory.
#[derive(Debug, Clone)]
pub struct MnistFiles {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
}

impl MnistFiles {
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let d = dir.as_ref();
        Self {
            train_images: d.join("train-images-idx3-ubyte"),
            train_labels: d.join("train-labels-idx1-ubyte"),
            test_images: d.join("t10k-images-idx3-ubyte"),
            test_labels: d.join("t10k-labels-idx1-ubyte"),
        }
    }

    pub fn exist(&self) -> bool {
        [&self.train_images, &self.train_labels, &self.test_images, &self.test_labels]
            .iter()
            .all(|p| p.is_file())
    }

    pub fn load_train(&self) -> Result<MnistSet> {
        load_mnist(&self.train_images, &self.train_labels)
    }

    pub fn load_test(&self) -> Result<MnistSet> {
        load_mnist(&self.test_images, &self.test_labels)
    }
}

pub fn load_mnist(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<MnistSet> {
    let images = parse_images(&std::fs::read(images_path)?)?;
    let labels = parse_labels(&std::fs::read(labels_path)?)?;
    if images.len() != labels.len() {
        return Err(Error::Parse {
            offset: 4,
            msg: format!("{} images but {} labels", images.len(), labels.len()),
        });
    }
    Ok(MnistSet { images, labels })
}

fn be_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| Error::Parse {
            offset: offset as u64,
            msg: "truncated header".into(),
        })
}

fn check_magic(bytes: &[u8], expected: u32) -> Result<()> {
    let magic = be_u32(bytes, 0)?;
    if magic != expected {
        return Err(Error::Parse {
            offset: 0,
            msg: format!("bad magic {magic:#010x}, expected {expected:#010x}"),
        });
    }
    Ok(())
}

fn check_body(bytes: &[u8], start: usize, needed: usize) -> Result<()> {
    let available = bytes.len() - start.min(bytes.len());
    if available < needed {
        return Err(Error::Parse {
            offset: bytes.len() as u64,
            msg: format!("truncated: header promises {needed} data bytes, file has {available}"),
        });
    }
    if available > needed {
        return Err(Error::Parse {
            offset: (start + needed) as u64,
            msg: format!("{} unexpected trailing bytes", available - needed),
        });
    }
    Ok(())
}

pub fn parse_images(bytes: &[u8]) -> Result<Vec<Vec<u8>>> {
    check_magic(bytes, IMAGE_MAGIC)?;
    let count = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)? as usize;
    let cols = be_u32(bytes, 12)? as usize;
    if rows != SIDE || cols != SIDE {
        return Err(Error::Parse {
            offset: 8,
            msg: format!("images are {rows}x{cols}, expected {SIDE}x{SIDE}"),
        });
    }
    check_body(bytes, 16, count * SIDE * SIDE)?;
    Ok(bytes[16..].chunks_exact(SIDE * SIDE).map(<[u8]>::to_vec).collect())
}

pub fn parse_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    check_magic(bytes, LABEL_MAGIC)?;
    let count = be_u32(bytes, 4)? as usize;
    check_body(bytes, 8, count)?;
    Ok(bytes[8..].to_vec())
}

/// Zero-pads a `28 × 28` image to the ROI grid and rescales bytes so that
/// 255 maps to the largest scattering coefficient. Row-major.
pub fn to_target_image(raw: &[u8], scene: &SceneConfig) -> Result<TargetImage> {
    if raw.len() != SIDE * SIDE {
        return Err(Error::DimensionMismatch {
            what: "raw image",
            expected: SIDE * SIDE,
            found: raw.len(),
        });
    }
    let side = scene.roi_side_voxels;
    if side < SIDE {
        return Err(Error::InvalidScene(format!(
            "ROI of {side}x{side} voxels cannot hold a {SIDE}x{SIDE} image"
        )));
    }
    let pad = (side - SIDE) / 2;
    let gain = scene.max_scattering() / 255.0;
    let mut sigma = vec![0.0; side * side];
    for r in 0..SIDE {
        for c in 0..SIDE {
            sigma[(r + pad) * side + c + pad] = f64::from(raw[r * SIDE + c]) * gain;
        }
    }
    TargetImage::new(sigma, scene)
}
