//! Pyramidal Lucas-Kanade point tracking with a forward-backward check.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datasets::GrayImage;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Real-valued image.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Scalar> Plane<T> {
    pub fn new(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(Error::rejected(format!(
                "{} values for a {width}x{height} plane",
                data.len()
            )));
        }
        Ok(Plane { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Plane { width, height, data }
    }

    pub fn from_gray(img: &GrayImage) -> Self {
        Plane::from_fn(img.width(), img.height(), |x, y| T::lit(img.get(x, y) as f64))
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[y * self.width + x]
    }

    /// Bilinear interpolation; coordinates are clamped to the border.
    pub fn sample(&self, x: T, y: T) -> T {
        let xm = T::lit((self.width - 1) as f64);
        let ym = T::lit((self.height - 1) as f64);
        let x = x.max(T::zero()).min(xm);
        let y = y.max(T::zero()).min(ym);
        let x0 = x.floor();
        let y0 = y.floor();
        let (fx, fy) = (x - x0, y - y0);
        let x0 = x0.to_usize().unwrap_or(0);
        let y0 = y0.to_usize().unwrap_or(0);
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let one = T::one();
        let top = self.get(x0, y0) * (one - fx) + self.get(x1, y0) * fx;
        let bottom = self.get(x0, y1) * (one - fx) + self.get(x1, y1) * fx;
        top * (one - fy) + bottom * fy
    }

    fn half(&self) -> Plane<T> {
        let (w, h) = (self.width / 2, self.height / 2);
        let q = T::lit(0.25);
        Plane::from_fn(w, h, |x, y| {
            (self.get(2 * x, 2 * y)
                + self.get(2 * x + 1, 2 * y)
                + self.get(2 * x, 2 * y + 1)
                + self.get(2 * x + 1, 2 * y + 1))
                * q
        })
    }
}

/// Level 0 is the source; each further level halves both extents.
#[derive(Debug, Clone, PartialEq)]
pub struct Pyramid<T> {
    levels: Vec<Plane<T>>,
}

impl<T: Scalar> Pyramid<T> {
    pub fn levels(&self) -> &[Plane<T>] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn from_gray(img: &GrayImage, levels: usize) -> Result<Self> {
        build_pyramid(Plane::from_gray(img), levels)
    }
}

/// 2×2 block-mean downsampling chain.
pub fn build_pyramid<T: Scalar>(source: Plane<T>, levels: usize) -> Result<Pyramid<T>> {
    if levels == 0 {
        return Err(Error::rejected("a pyramid needs at least one level"));
    }
    let shrink = 1usize << (levels - 1);
    if source.width / shrink == 0 || source.height / shrink == 0 {
        return Err(Error::rejected(format!(
            "{}x{} image is too small for {levels} levels",
            source.width, source.height
        )));
    }
    let mut out = vec![source];
    for _ in 1..levels {
        let next = out.last().expect("non-empty").half();
        out.push(next);
    }
    Ok(Pyramid { levels: out })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LkParams {
    /// Odd window side.
    pub window: usize,
    pub iterations: usize,
    pub eps: f64,
    pub fb_threshold: f64,
}

impl Default for LkParams {
    fn default() -> Self {
        LkParams {
            window: 11,
            iterations: 20,
            eps: 0.01,
            fb_threshold: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LkResult {
    pub point: (f64, f64),
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FbResult {
    pub point: (f64, f64),
    pub reliable: bool,
    /// Infinite when the forward result cannot be tracked back.
    pub fb_error: f64,
}

/// Whether the window plus a one-pixel gradient border fits at every level.
pub fn inside_lk_margins<T: Scalar>(pyr: &Pyramid<T>, p: (f64, f64), window: usize) -> bool {
    let half = (window / 2) as f64 + 1.0;
    pyr.levels.iter().enumerate().all(|(l, plane)| {
        let s = (1u64 << l) as f64;
        let (x, y) = (p.0 / s, p.1 / s);
        x - half >= 0.0
            && y - half >= 0.0
            && x + half <= (plane.width - 1) as f64
            && y + half <= (plane.height - 1) as f64
    })
}

/// Coarse-to-fine iterative LK. `converged` is false when the structure
/// tensor is near-singular at any level or level 0 hits the iteration cap.
pub fn lk_track_point<T: Scalar>(
    pyr_t: &Pyramid<T>,
    pyr_t1: &Pyramid<T>,
    p: (f64, f64),
    params: &LkParams,
) -> Result<LkResult> {
    if pyr_t.len() != pyr_t1.len()
        || pyr_t.levels.iter().zip(&pyr_t1.levels).any(|(a, b)| a.width != b.width || a.height != b.height)
    {
        return Err(Error::rejected("pyramids differ in shape"));
    }
    if params.window % 2 == 0 || params.window < 3 {
        return Err(Error::config(format!("window {} must be odd and at least 3", params.window)));
    }
    if !inside_lk_margins(pyr_t, p, params.window) {
        return Err(Error::rejected(format!(
            "point ({:.2}, {:.2}) is too close to the border",
            p.0, p.1
        )));
    }
    let half = (params.window / 2) as i64;
    let min_eig_floor = 1e-6 * (params.window * params.window) as f64;
    let mut guess = (0.0f64, 0.0f64);
    let mut converged = true;
    for level in (0..pyr_t.len()).rev() {
        let (img, next) = (&pyr_t.levels[level], &pyr_t1.levels[level]);
        let s = (1u64 << level) as f64;
        let (px, py) = (p.0 / s, p.1 / s);

        let mut grads = Vec::with_capacity(params.window * params.window);
        let (mut gxx, mut gxy, mut gyy) = (0.0f64, 0.0f64, 0.0f64);
        for j in -half..=half {
            for i in -half..=half {
                let (x, y) = (px + i as f64, py + j as f64);
                let at = |dx: f64, dy: f64| img.sample(T::lit(x + dx), T::lit(y + dy)).to_f64_lossy();
                let ix = (at(1.0, 0.0) - at(-1.0, 0.0)) / 2.0;
                let iy = (at(0.0, 1.0) - at(0.0, -1.0)) / 2.0;
                gxx += ix * ix;
                gxy += ix * iy;
                gyy += iy * iy;
                grads.push((x, y, ix, iy, at(0.0, 0.0)));
            }
        }
        let tr = gxx + gyy;
        let det = gxx * gyy - gxy * gxy;
        let min_eig = tr / 2.0 - ((tr * tr / 4.0 - det).max(0.0)).sqrt();
        if min_eig < min_eig_floor {
            return Ok(LkResult {
                point: (p.0 + guess.0 * s, p.1 + guess.1 * s),
                converged: false,
            });
        }

        let mut v = (0.0f64, 0.0f64);
        let mut level_done = false;
        for _ in 0..params.iterations {
            let (mut bx, mut by) = (0.0f64, 0.0f64);
            for &(x, y, ix, iy, i0) in &grads {
                let j = next
                    .sample(T::lit(x + guess.0 + v.0), T::lit(y + guess.1 + v.1))
                    .to_f64_lossy();
                let dt = i0 - j;
                bx += dt * ix;
                by += dt * iy;
            }
            let ex = (gyy * bx - gxy * by) / det;
            let ey = (gxx * by - gxy * bx) / det;
            v.0 += ex;
            v.1 += ey;
            if (ex * ex + ey * ey).sqrt() < params.eps {
                level_done = true;
                break;
            }
        }
        if level == 0 {
            converged &= level_done;
            guess = (guess.0 + v.0, guess.1 + v.1);
        } else {
            guess = (2.0 * (guess.0 + v.0), 2.0 * (guess.1 + v.1));
        }
    }
    let point = (p.0 + guess.0, p.1 + guess.1);
    let base = &pyr_t.levels[0];
    if !(point.0.is_finite()
        && point.1.is_finite()
        && point.0 >= 0.0
        && point.1 >= 0.0
        && point.0 <= (base.width - 1) as f64
        && point.1 <= (base.height - 1) as f64)
    {
        converged = false;
    }
    Ok(LkResult { point, converged })
}

/// Forward then backward tracking; reliable iff both passes converge and
/// the round trip lands within `params.fb_threshold` of the start.
pub fn fb_track<T: Scalar>(
    pyr_t: &Pyramid<T>,
    pyr_t1: &Pyramid<T>,
    p: (f64, f64),
    params: &LkParams,
) -> Result<FbResult> {
    let fwd = lk_track_point(pyr_t, pyr_t1, p, params)?;
    if !inside_lk_margins(pyr_t1, fwd.point, params.window) {
        return Ok(FbResult {
            point: fwd.point,
            reliable: false,
            fb_error: f64::INFINITY,
        });
    }
    let back = lk_track_point(pyr_t1, pyr_t, fwd.point, params)?;
    let fb_error = ((back.point.0 - p.0).powi(2) + (back.point.1 - p.1).powi(2)).sqrt();
    Ok(FbResult {
        point: fwd.point,
        reliable: fwd.converged && back.converged && fb_error <= params.fb_threshold,
        fb_error,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct KltTrack {
    pub id: u64,
    /// `(frame, x, y, fb error)`; the first entry has error 0.
    pub history: Vec<(usize, f64, f64, f64)>,
    /// Frame at which the track became unreliable.
    pub lost_at: Option<usize>,
}

/// Tracks `points` through `frames`, dropping a point at its first
/// unreliable step.
pub fn klt_track_sequence(
    frames: &[GrayImage],
    points: &[(f64, f64)],
    levels: usize,
    params: &LkParams,
) -> Result<Vec<KltTrack>> {
    if frames.len() < 2 {
        return Err(Error::config("a sequence needs at least 2 frames"));
    }
    let pyramids = frames
        .par_iter()
        .map(|f| Pyramid::<f32>::from_gray(f, levels))
        .collect::<Result<Vec<_>>>()?;
    let mut tracks: Vec<KltTrack> = points
        .iter()
        .enumerate()
        .map(|(i, &(x, y))| KltTrack {
            id: i as u64,
            history: vec![(0, x, y, 0.0)],
            lost_at: None,
        })
        .collect();
    for f in 1..frames.len() {
        let (a, b) = (&pyramids[f - 1], &pyramids[f]);
        tracks.par_iter_mut().try_for_each(|t| -> Result<()> {
            if t.lost_at.is_some() {
                return Ok(());
            }
            let &(_, x, y, _) = t.history.last().expect("non-empty");
            if !inside_lk_margins(a, (x, y), params.window) {
                t.lost_at = Some(f);
                return Ok(());
            }
            let r = fb_track(a, b, (x, y), params)?;
            if r.reliable {
                t.history.push((f, r.point.0, r.point.1, r.fb_error));
            } else {
                t.lost_at = Some(f);
            }
            Ok(())
        })?;
    }
    Ok(tracks)
}

/// Same `frame id x y score status` layout as the network pipeline; the
/// score column carries the forward-backward error.
pub fn format_klt_table(tracks: &[KltTrack], frames: usize) -> String {
    let mut rows: Vec<(usize, u64, String)> = Vec::new();
    for t in tracks {
        for &(f, x, y, e) in &t.history {
            rows.push((f, t.id, format!("{x:.3} {y:.3} {e:.6} live")));
        }
        if let Some(f) = t.lost_at {
            let &(_, x, y, _) = t.history.last().expect("non-empty");
            rows.push((f, t.id, format!("{x:.3} {y:.3} inf dropped")));
        }
    }
    rows.sort_by_key(|r| (r.0, r.1));
    let mut out = String::from("frame id x y score status\n");
    for (f, id, rest) in rows {
        let _ = writeln!(out, "{f} {id} {rest}");
    }
    let lost = tracks.iter().filter(|t| t.lost_at.is_some()).count();
    let _ = writeln!(
        out,
        "# frames {frames} tracks {} live {} dropped {lost} out-of-bounds 0",
        tracks.len(),
        tracks.len() - lost
    );
    out
}
