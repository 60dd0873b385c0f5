use super::image::GrayImage;

pub const DEFAULT_K: f64 = 0.04;
/// Fraction of the strongest response a corner must reach.
pub const DEFAULT_THRESHOLD: f64 = 0.01;
pub const DEFAULT_NMS_RADIUS: usize = 5;
const BOX: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Corner {
    pub x: usize,
    pub y: usize,
    pub response: f64,
}

/// `det(M) - k·trace(M)²` per pixel, with `M` the 3×3-Sobel structure tensor
/// summed over a 5×5 box. Pixels whose box reaches past the gradient border
/// are 0.
pub fn harris_response(img: &GrayImage, k: f64) -> Vec<f64> {
    let (w, h) = (img.width(), img.height());
    let mut out = vec![0.0; w * h];
    let reach = 1 + BOX / 2;
    if w <= 2 * reach || h <= 2 * reach {
        return out;
    }
    let px = |x: usize, y: usize| img.get(x, y) as f64;
    let mut ixx = vec![0.0; w * h];
    let mut iyy = vec![0.0; w * h];
    let mut ixy = vec![0.0; w * h];
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let gx = (px(x + 1, y - 1) + 2.0 * px(x + 1, y) + px(x + 1, y + 1))
                - (px(x - 1, y - 1) + 2.0 * px(x - 1, y) + px(x - 1, y + 1));
            let gy = (px(x - 1, y + 1) + 2.0 * px(x, y + 1) + px(x + 1, y + 1))
                - (px(x - 1, y - 1) + 2.0 * px(x, y - 1) + px(x + 1, y - 1));
            let i = y * w + x;
            ixx[i] = gx * gx;
            iyy[i] = gy * gy;
            ixy[i] = gx * gy;
        }
    }
    let r = BOX as isize / 2;
    for y in reach..h - reach {
        for x in reach..w - reach {
            let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
            for dy in -r..=r {
                for dx in -r..=r {
                    let i = (y as isize + dy) as usize * w + (x as isize + dx) as usize;
                    a += ixx[i];
                    b += iyy[i];
                    c += ixy[i];
                }
            }
            let trace = a + b;
            out[y * w + x] = a * b - c * c - k * trace * trace;
        }
    }
    out
}

/// Corners above `threshold × max response`, thinned so no two lie within
/// `nms_radius` (Chebyshev) of each other, strongest first.
pub fn harris_corners(img: &GrayImage, k: f64, threshold: f64, nms_radius: usize) -> Vec<Corner> {
    let response = harris_response(img, k);
    let max = response.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return Vec::new();
    }
    let cut = threshold * max;
    let w = img.width();
    let mut candidates: Vec<Corner> = response
        .iter()
        .enumerate()
        .filter(|&(_, &r)| r > 0.0 && r >= cut)
        .map(|(i, &r)| Corner {
            x: i % w,
            y: i / w,
            response: r,
        })
        .collect();
    candidates.sort_by(|a, b| {
        b.response
            .total_cmp(&a.response)
            .then((a.y, a.x).cmp(&(b.y, b.x)))
    });
    suppress(candidates, nms_radius, |c| (c.x, c.y))
}

/// Greedy non-maximum suppression over items already sorted best-first.
pub(crate) fn suppress<C>(sorted: Vec<C>, radius: usize, pos: impl Fn(&C) -> (usize, usize)) -> Vec<C> {
    let mut kept: Vec<C> = Vec::new();
    for c in sorted {
        let (x, y) = pos(&c);
        let clash = kept.iter().any(|k| {
            let (kx, ky) = pos(k);
            kx.abs_diff(x).max(ky.abs_diff(y)) <= radius
        });
        if !clash {
            kept.push(c);
        }
    }
    kept
}
