use std::path::Path;

use image::{DynamicImage, ImageError};

use crate::error::{Error, Result};

/// 8-bit luminance image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || width * height != data.len() {
            return Err(Error::rejected(format!(
                "{width}x{height} image cannot hold {} samples",
                data.len()
            )));
        }
        Ok(GrayImage {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        GrayImage::new(width, height, vec![value; width * height]).expect("non-empty extents")
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        GrayImage::new(width, height, data).expect("non-empty extents")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    pub fn same_extents(&self, other: &GrayImage) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// `size`×`size` window whose top-left pixel is `(x0, y0)`.
    pub fn crop(&self, x0: usize, y0: usize, size: usize) -> Result<Vec<u8>> {
        if x0 + size > self.width || y0 + size > self.height {
            return Err(Error::rejected(format!(
                "{size}x{size} crop at ({x0}, {y0}) leaves the {}x{} image",
                self.width, self.height
            )));
        }
        let mut out = Vec::with_capacity(size * size);
        for y in y0..y0 + size {
            out.extend_from_slice(&self.data[y * self.width + x0..y * self.width + x0 + size]);
        }
        Ok(out)
    }

    /// Odd-sized window centered on `(x, y)`.
    pub fn centered_patch(&self, x: i64, y: i64, size: usize) -> Result<Vec<u8>> {
        let half = (size / 2) as i64;
        if x < half || y < half {
            return Err(Error::rejected(format!(
                "{size}x{size} patch around ({x}, {y}) leaves the image"
            )));
        }
        self.crop((x - half) as usize, (y - half) as usize, size)
    }

    pub fn to_dynamic(&self) -> DynamicImage {
        DynamicImage::ImageLuma8(
            image::GrayImage::from_raw(self.width as u32, self.height as u32, self.data.clone())
                .expect("consistent buffer"),
        )
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        self.to_dynamic()
            .save_with_format(path, image::ImageFormat::Png)
            .map_err(|e| image_error(path, e))
    }
}

/// `round(0.299 r + 0.587 g + 0.114 b)`
pub fn luminance(r: u8, g: u8, b: u8) -> u8 {
    (0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64)
        .round()
        .clamp(0.0, 255.0) as u8
}

pub(crate) fn image_error(path: &Path, e: ImageError) -> Error {
    match e {
        ImageError::IoError(io) => Error::io(path, io),
        ImageError::Unsupported(u) => Error::UnsupportedFormat(format!("{}: {u}", path.display())),
        other => Error::Image {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    }
}

pub(crate) fn open_image(path: &Path) -> Result<DynamicImage> {
    image::io::Reader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|e| image_error(path, e))
}

pub fn from_dynamic(img: &DynamicImage) -> Result<GrayImage> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = match img {
        DynamicImage::ImageLuma8(g) => g.as_raw().clone(),
        DynamicImage::ImageLumaA8(g) => g.pixels().map(|p| p.0[0]).collect(),
        DynamicImage::ImageLuma16(g) => g
            .pixels()
            .map(|p| ((p.0[0] as f64) / 257.0).round() as u8)
            .collect(),
        DynamicImage::ImageRgb8(c) => c.pixels().map(|p| luminance(p.0[0], p.0[1], p.0[2])).collect(),
        DynamicImage::ImageRgba8(c) => c.pixels().map(|p| luminance(p.0[0], p.0[1], p.0[2])).collect(),
        other => {
            let c = other.to_rgb8();
            c.pixels().map(|p| luminance(p.0[0], p.0[1], p.0[2])).collect()
        }
    };
    GrayImage::new(w, h, data)
}

/// Decodes 8-bit grayscale PNG/PGM directly; color images are reduced to
/// luminance.
pub fn load_gray_image(path: &Path) -> Result<GrayImage> {
    from_dynamic(&open_image(path)?)
}
