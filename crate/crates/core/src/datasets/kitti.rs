//! KITTI optical-flow ground truth.
//!
//! Flow maps are 16-bit, 3-channel PNGs: `u = (R - 2^15) / 64`,
//! `v = (G - 2^15) / 64`, and `B == 1` marks pixels with ground truth.

use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageBuffer, Rgb};

use super::image::{image_error, open_image};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowVector {
    pub u: f64,
    pub v: f64,
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    vectors: Vec<FlowVector>,
}

impl FlowField {
    pub fn new(width: usize, height: usize, vectors: Vec<FlowVector>) -> Result<Self> {
        if width * height != vectors.len() || vectors.is_empty() {
            return Err(Error::rejected(format!(
                "{width}x{height} flow field cannot hold {} vectors",
                vectors.len()
            )));
        }
        Ok(FlowField {
            width,
            height,
            vectors,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// `None` where the dataset makes no flow claim.
    pub fn at(&self, x: usize, y: usize) -> Option<(f64, f64)> {
        let f = self.vectors[y * self.width + x];
        f.valid.then_some((f.u, f.v))
    }

    pub fn raw(&self, x: usize, y: usize) -> FlowVector {
        self.vectors[y * self.width + x]
    }
}

const OFFSET: f64 = 32768.0;
const SCALE: f64 = 64.0;

pub fn decode_flow_channels(width: usize, height: usize, rgb16: &[u16]) -> Result<FlowField> {
    if rgb16.len() != width * height * 3 {
        return Err(Error::rejected("flow buffer must hold three channels per pixel"));
    }
    let vectors = rgb16
        .chunks_exact(3)
        .map(|p| FlowVector {
            u: (p[0] as f64 - OFFSET) / SCALE,
            v: (p[1] as f64 - OFFSET) / SCALE,
            valid: p[2] == 1,
        })
        .collect();
    FlowField::new(width, height, vectors)
}

pub fn decode_kitti_flow_image(img: &DynamicImage) -> Result<FlowField> {
    match img {
        DynamicImage::ImageRgb16(buf) => {
            decode_flow_channels(buf.width() as usize, buf.height() as usize, buf.as_raw())
        }
        other => Err(Error::rejected(format!(
            "KITTI flow must be a 16-bit 3-channel PNG, got {:?}",
            other.color()
        ))),
    }
}

pub fn decode_kitti_flow(path: &Path) -> Result<FlowField> {
    decode_kitti_flow_image(&open_image(path)?)
}

/// Inverse of the decoder for flows on the 1/64 grid; invalid pixels are
/// written as zero flow with `B = 0`.
pub fn encode_kitti_flow(flow: &FlowField) -> Result<ImageBuffer<Rgb<u16>, Vec<u16>>> {
    let mut raw = Vec::with_capacity(flow.vectors.len() * 3);
    for f in &flow.vectors {
        if !f.valid {
            raw.extend_from_slice(&[OFFSET as u16, OFFSET as u16, 0]);
            continue;
        }
        let enc = |c: f64| -> Result<u16> {
            let q = c * SCALE + OFFSET;
            if q.fract() != 0.0 || !(0.0..=65535.0).contains(&q) {
                return Err(Error::rejected(format!("flow component {c} is not representable")));
            }
            Ok(q as u16)
        };
        raw.extend_from_slice(&[enc(f.u)?, enc(f.v)?, 1]);
    }
    Ok(ImageBuffer::from_raw(flow.width as u32, flow.height as u32, raw).expect("sized buffer"))
}

pub fn save_kitti_flow(path: &Path, flow: &FlowField) -> Result<()> {
    encode_kitti_flow(flow)?
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| image_error(path, e))
}

/// One frame pair with its ground truth.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KittiPair {
    pub frame_t: PathBuf,
    pub frame_t1: PathBuf,
    pub flow: PathBuf,
}

/// Finds `<image dir>/NNNNNN_10.png` + `_11.png` pairs with a matching
/// `flow_noc` (or `flow_occ`) map. Both the 2012 (`image_0`) and 2015
/// (`image_2`) layouts are recognized.
pub fn find_kitti_pairs(root: &Path) -> Result<Vec<KittiPair>> {
    let image_dir = ["image_0", "image_2"]
        .iter()
        .map(|d| root.join(d))
        .find(|p| p.is_dir())
        .ok_or_else(|| Error::CorruptDataset(format!("{}: no image_0/ or image_2/", root.display())))?;
    let flow_dir = ["flow_noc", "flow_occ"]
        .iter()
        .map(|d| root.join(d))
        .find(|p| p.is_dir())
        .ok_or_else(|| Error::CorruptDataset(format!("{}: no flow_noc/ or flow_occ/", root.display())))?;
    let mut names: Vec<String> = std::fs::read_dir(&image_dir)
        .map_err(|e| Error::io(&image_dir, e))?
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().into_string().ok())
        .filter(|n| n.ends_with("_10.png"))
        .collect();
    names.sort();
    Ok(names
        .into_iter()
        .filter_map(|n| {
            let stem = n.trim_end_matches("_10.png");
            let pair = KittiPair {
                frame_t: image_dir.join(&n),
                frame_t1: image_dir.join(format!("{stem}_11.png")),
                flow: flow_dir.join(&n),
            };
            (pair.frame_t1.is_file() && pair.flow.is_file()).then_some(pair)
        })
        .collect())
}
