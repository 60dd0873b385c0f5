//! Synthetic integer translations with exact ground truth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::image::GrayImage;
use crate::tracker::{Displacement, TrackingSample, MAX_DISPLACEMENT, SEARCH_SIZE, TEMPLATE_SIZE};

/// Side of the rendered frames.
pub const FRAME: usize = SEARCH_SIZE + 2 * TEMPLATE_SIZE;
const PAD: usize = MAX_DISPLACEMENT as usize;
const BLUR_SIGMA: f64 = 1.5;

/// Frame A, frame B = A shifted by `displacement`, and the shared center.
#[derive(Debug, Clone)]
pub struct SyntheticPair {
    pub frame_a: GrayImage,
    pub frame_b: GrayImage,
    pub center: (usize, usize),
    pub displacement: Displacement,
}

/// Gaussian-blurred uniform noise stretched to the full 8-bit range.
pub fn smooth_noise(width: usize, height: usize, sigma: f64, rng: &mut impl Rng) -> GrayImage {
    let noise: Vec<f64> = (0..width * height).map(|_| rng.gen::<f64>()).collect();
    let radius = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let norm: f64 = kernel.iter().sum();
    let blur = |src: &[f64], horizontal: bool| -> Vec<f64> {
        let mut out = vec![0.0; src.len()];
        for y in 0..height as isize {
            for x in 0..width as isize {
                let mut acc = 0.0;
                for (k, &wgt) in kernel.iter().enumerate() {
                    let o = k as isize - radius;
                    let (sx, sy) = if horizontal { (x + o, y) } else { (x, y + o) };
                    let sx = sx.clamp(0, width as isize - 1) as usize;
                    let sy = sy.clamp(0, height as isize - 1) as usize;
                    acc += wgt * src[sy * width + sx];
                }
                out[y as usize * width + x as usize] = acc / norm;
            }
        }
        out
    };
    let smooth = blur(&blur(&noise, true), false);
    let lo = smooth.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = smooth.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = (hi - lo).max(1e-12);
    GrayImage::new(
        width,
        height,
        smooth
            .iter()
            .map(|&v| ((v - lo) / span * 255.0).round() as u8)
            .collect(),
    )
    .expect("non-empty extents")
}

/// Renders one pair with a displacement drawn uniformly from [-18, 18]².
pub fn make_synthetic_pair(rng: &mut impl Rng) -> SyntheticPair {
    let d = Displacement::new(
        rng.gen_range(-MAX_DISPLACEMENT..=MAX_DISPLACEMENT),
        rng.gen_range(-MAX_DISPLACEMENT..=MAX_DISPLACEMENT),
    );
    make_synthetic_pair_with(rng, d)
}

pub fn make_synthetic_pair_with(rng: &mut impl Rng, d: Displacement) -> SyntheticPair {
    make_synthetic_pair_scaled(rng, d, 1.0)
}

/// As [`make_synthetic_pair_with`], with the texture's deviation from
/// mid-gray scaled by `contrast`. Small values give nearly flat frames.
pub fn make_synthetic_pair_scaled(rng: &mut impl Rng, d: Displacement, contrast: f64) -> SyntheticPair {
    let side = FRAME + 2 * PAD;
    let mut texture = smooth_noise(side, side, BLUR_SIGMA, rng);
    if contrast != 1.0 {
        texture = GrayImage::from_fn(side, side, |x, y| {
            (128.0 + contrast * (texture.get(x, y) as f64 - 128.0)).round().clamp(0.0, 255.0) as u8
        });
    }
    let pad = PAD as i32;
    let frame_a = GrayImage::new(FRAME, FRAME, texture.crop(PAD, PAD, FRAME).expect("fits")).unwrap();
    // B[y][x] = A[y - dy][x - dx]
    let bx = (pad - d.dx) as usize;
    let by = (pad - d.dy) as usize;
    let frame_b = GrayImage::new(FRAME, FRAME, texture.crop(bx, by, FRAME).expect("fits")).unwrap();
    SyntheticPair {
        frame_a,
        frame_b,
        center: (FRAME / 2, FRAME / 2),
        displacement: d,
    }
}

impl SyntheticPair {
    pub fn to_sample(&self) -> TrackingSample {
        let (cx, cy) = (self.center.0 as i64, self.center.1 as i64);
        TrackingSample::new(
            self.frame_a.centered_patch(cx, cy, TEMPLATE_SIZE).expect("fits"),
            self.frame_b.centered_patch(cx, cy, SEARCH_SIZE).expect("fits"),
            self.displacement,
        )
        .expect("valid by construction")
    }
}

pub fn make_synthetic_translations(count: usize, seed: u64) -> Vec<TrackingSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| make_synthetic_pair(&mut rng).to_sample())
        .collect()
}

/// Like [`make_synthetic_translations`], but each pair is rendered at low
/// contrast with probability `low_fraction`.
pub fn make_mixed_contrast_translations(
    count: usize,
    seed: u64,
    low_fraction: f64,
    low_contrast: f64,
) -> Vec<TrackingSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let d = Displacement::new(
                rng.gen_range(-MAX_DISPLACEMENT..=MAX_DISPLACEMENT),
                rng.gen_range(-MAX_DISPLACEMENT..=MAX_DISPLACEMENT),
            );
            let contrast = if rng.gen_bool(low_fraction) { low_contrast } else { 1.0 };
            make_synthetic_pair_scaled(&mut rng, d, contrast).to_sample()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frames_are_shifted_copies() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..5 {
            let p = make_synthetic_pair(&mut rng);
            let (dx, dy) = (p.displacement.dx as i64, p.displacement.dy as i64);
            for y in 0..FRAME as i64 {
                for x in 0..FRAME as i64 {
                    let (sx, sy) = (x - dx, y - dy);
                    if sx >= 0 && sy >= 0 && sx < FRAME as i64 && sy < FRAME as i64 {
                        assert_eq!(
                            p.frame_b.get(x as usize, y as usize),
                            p.frame_a.get(sx as usize, sy as usize)
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn zero_shift_center_crop_equals_template() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = make_synthetic_pair_with(&mut rng, Displacement::new(0, 0)).to_sample();
        for y in 0..19 {
            for x in 0..19 {
                assert_eq!(s.template()[y * 19 + x], s.search()[(y + 18) * 55 + x + 18]);
            }
        }
    }

    #[test]
    fn seeded_datasets_repeat() {
        assert_eq!(make_synthetic_translations(3, 9), make_synthetic_translations(3, 9));
        assert_ne!(make_synthetic_translations(3, 9), make_synthetic_translations(3, 10));
    }

    #[test]
    fn low_contrast_pairs_stay_shifted_copies() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = make_synthetic_pair_scaled(&mut rng, Displacement::new(2, -1), 0.05);
        let (lo, hi) = p.frame_a.data().iter().fold((255u8, 0u8), |(l, h), &v| (l.min(v), h.max(v)));
        assert!(hi - lo <= 14);
        assert_eq!(p.frame_b.get(40, 40), p.frame_a.get(38, 41));
        assert_eq!(make_mixed_contrast_translations(4, 1, 0.5, 0.05).len(), 4);
    }

    #[test]
    fn frame_is_large_enough() {
        assert!(FRAME >= 93);
    }
}
