use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};

use super::TrackerState;
use crate::datasets::image::image_error;
use crate::datasets::GrayImage;
use crate::error::{Error, Result};

const GREEN: Rgb<u8> = Rgb([0, 255, 0]);
const RED: Rgb<u8> = Rgb([255, 0, 0]);

fn put(img: &mut RgbImage, x: i64, y: i64, c: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, c);
    }
}

fn line(img: &mut RgbImage, (x0, y0): (i64, i64), (x1, y1): (i64, i64), c: Rgb<u8>) {
    let steps = (x1 - x0).abs().max((y1 - y0).abs()).max(1);
    for s in 0..=steps {
        let x = x0 as f64 + (x1 - x0) as f64 * s as f64 / steps as f64;
        let y = y0 as f64 + (y1 - y0) as f64 * s as f64 / steps as f64;
        put(img, x.round() as i64, y.round() as i64, c);
    }
}

fn dot(img: &mut RgbImage, (x, y): (i64, i64), c: Rgb<u8>) {
    for dy in -1..=1 {
        for dx in -1..=1 {
            put(img, x + dx, y + dy, c);
        }
    }
}

/// Frame `index` in color with every track visible at that frame: its path
/// so far and a dot at its current position. Green tracks are live after
/// this frame; red ones were lost at it.
pub fn render_overlay(frame: &GrayImage, state: &TrackerState, index: usize) -> RgbImage {
    let mut img = RgbImage::from_fn(frame.width() as u32, frame.height() as u32, |x, y| {
        let v = frame.get(x as usize, y as usize);
        Rgb([v, v, v])
    });
    for t in &state.tracks {
        let lost_here = match t.ended_at() {
            Some(f) if f < index => continue,
            Some(f) => f == index,
            None => false,
        };
        let path: Vec<(i64, i64)> = t
            .history()
            .iter()
            .take_while(|p| p.frame <= index)
            .map(|p| (p.x as i64, p.y as i64))
            .collect();
        let Some(&last) = path.last() else { continue };
        let color = if lost_here { RED } else { GREEN };
        for w in path.windows(2) {
            line(&mut img, w[0], w[1], color);
        }
        dot(&mut img, last, color);
    }
    img
}

/// Writes `overlay_NNNN.png` for every frame into `dir`.
pub fn save_overlays(frames: &[GrayImage], state: &TrackerState, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    frames
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let path = dir.join(format!("overlay_{i:04}.png"));
            render_overlay(f, state, i)
                .save_with_format(&path, image::ImageFormat::Png)
                .map_err(|e| image_error(&path, e))?;
            Ok(path)
        })
        .collect()
}
