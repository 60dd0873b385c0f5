use serde::{Deserialize, Serialize};

use super::harris::Corner;
use super::image::GrayImage;
use super::kitti::FlowField;
use crate::error::{Error, Result};
use crate::tracker::{Displacement, TrackingSample, MAX_DISPLACEMENT, SEARCH_SIZE, TEMPLATE_SIZE};

/// Distance from a feature to the image border needed by the search window.
pub const MARGIN: usize = SEARCH_SIZE / 2;

/// Why candidate points were dropped.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleStats {
    pub considered: usize,
    pub invalid_flow: usize,
    pub too_far: usize,
    pub out_of_bounds: usize,
    pub emitted: usize,
}

pub fn inside_margins(x: i64, y: i64, width: usize, height: usize) -> bool {
    let m = MARGIN as i64;
    x >= m && y >= m && x + m < width as i64 && y + m < height as i64
}

/// Builds samples around `corners` from ground-truth flow.
///
/// Displacements are rounded half away from zero and must stay within the
/// ±18 search window; both patches must fit in their frames.
pub fn generate_tracking_samples(
    img_t: &GrayImage,
    img_t1: &GrayImage,
    flow: &FlowField,
    corners: &[Corner],
    max_samples: usize,
) -> Result<(Vec<TrackingSample>, SampleStats)> {
    if !img_t.same_extents(img_t1)
        || flow.width() != img_t.width()
        || flow.height() != img_t.height()
    {
        return Err(Error::rejected(format!(
            "frames {}x{} / {}x{} and flow {}x{} must share extents",
            img_t.width(),
            img_t.height(),
            img_t1.width(),
            img_t1.height(),
            flow.width(),
            flow.height()
        )));
    }
    let mut stats = SampleStats::default();
    let mut out = Vec::new();
    for c in corners {
        if out.len() >= max_samples {
            break;
        }
        stats.considered += 1;
        let Some((u, v)) = (c.x < flow.width() && c.y < flow.height())
            .then(|| flow.at(c.x, c.y))
            .flatten()
        else {
            stats.invalid_flow += 1;
            continue;
        };
        let d = Displacement::new(u.round() as i32, v.round() as i32);
        if d.dx.abs() > MAX_DISPLACEMENT || d.dy.abs() > MAX_DISPLACEMENT {
            stats.too_far += 1;
            continue;
        }
        let (x, y) = (c.x as i64, c.y as i64);
        if !inside_margins(x, y, img_t.width(), img_t.height()) {
            stats.out_of_bounds += 1;
            continue;
        }
        let template = img_t.centered_patch(x, y, TEMPLATE_SIZE)?;
        let search = img_t1.centered_patch(x, y, SEARCH_SIZE)?;
        out.push(TrackingSample::new(template, search, d)?);
        stats.emitted += 1;
    }
    Ok((out, stats))
}
