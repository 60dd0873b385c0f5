//! The live detect, track, re-detect loop.
//!
//! Tracks start from detector scans of the first frame. Each step localizes
//! every live track in the next frame, drops tracks whose match score falls
//! under the score threshold, and replenishes from the next frame when the
//! live count sinks below `min_live`.

mod overlay;

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datasets::harris::suppress;
use crate::datasets::{inside_margins, GrayImage, MARGIN};
use crate::error::{Error, Result};
use crate::heads::{match_score, point_feature, trackability_score};
use crate::scalar::Scalar;
use crate::tracker::{normalize_patch, track_patch, Displacement, NetworkParams, SEARCH_SIZE, TEMPLATE_SIZE};

pub use overlay::{render_overlay, save_overlays};

/// What the loop needs from the networks. Implemented by [`NetworkParams`];
/// tests substitute scripted models.
pub trait PointModel: Sync {
    /// Detector probability that the point at `(x, y)` can be tracked.
    fn trackability(&self, frame: &GrayImage, x: usize, y: usize) -> Result<f64>;

    /// Displacement of the point at `(x, y)` from `frame_t` to `frame_t1`,
    /// with the match score of that correspondence.
    fn track(&self, frame_t: &GrayImage, frame_t1: &GrayImage, x: usize, y: usize) -> Result<(Displacement, f64)>;
}

impl<T: Scalar> PointModel for NetworkParams<T> {
    fn trackability(&self, frame: &GrayImage, x: usize, y: usize) -> Result<f64> {
        let template = frame.centered_patch(x as i64, y as i64, TEMPLATE_SIZE)?;
        trackability_score(&self.detector_head, &point_feature(self, &template)?)
    }

    fn track(&self, frame_t: &GrayImage, frame_t1: &GrayImage, x: usize, y: usize) -> Result<(Displacement, f64)> {
        let (xi, yi) = (x as i64, y as i64);
        let template = normalize_patch(&frame_t.centered_patch(xi, yi, TEMPLATE_SIZE)?, TEMPLATE_SIZE)?;
        let search = normalize_patch(&frame_t1.centered_patch(xi, yi, SEARCH_SIZE)?, SEARCH_SIZE)?;
        let (d, score) = track_patch(self, &template, &search)?;
        Ok((d, match_score(&self.score_head, &score)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Re-detect when fewer tracks than this are live (ε).
    pub min_live: usize,
    pub score_threshold: f64,
    pub detect_threshold: f64,
    pub max_tracks: usize,
    pub nms_radius: usize,
    pub scan_stride: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            min_live: 100,
            score_threshold: 0.5,
            detect_threshold: 0.5,
            max_tracks: 500,
            nms_radius: 5,
            scan_stride: 2,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_live > self.max_tracks {
            return Err(Error::config(format!(
                "min_live {} exceeds max_tracks {}",
                self.min_live, self.max_tracks
            )));
        }
        for (name, v) in [
            ("score_threshold", self.score_threshold),
            ("detect_threshold", self.detect_threshold),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(format!("{name} {v} outside [0, 1]")));
            }
        }
        if self.scan_stride == 0 {
            return Err(Error::config("scan_stride must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrackStatus {
    Live,
    Dropped,
    OutOfBounds,
}

impl TrackStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            TrackStatus::Live => "live",
            TrackStatus::Dropped => "dropped",
            TrackStatus::OutOfBounds => "out-of-bounds",
        }
    }
}

/// Position of a track in one frame. `score` is the detector score on the
/// first point and the match score afterwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackPoint {
    pub frame: usize,
    pub x: usize,
    pub y: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub id: u64,
    history: Vec<TrackPoint>,
    status: TrackStatus,
    /// Frame at which the track left the live state.
    ended_at: Option<usize>,
    last_score: f64,
}

impl Track {
    fn new(id: u64, start: TrackPoint) -> Self {
        Track {
            id,
            history: vec![start],
            status: TrackStatus::Live,
            ended_at: None,
            last_score: start.score,
        }
    }

    pub fn history(&self) -> &[TrackPoint] {
        &self.history
    }

    pub fn status(&self) -> TrackStatus {
        self.status
    }

    pub fn ended_at(&self) -> Option<usize> {
        self.ended_at
    }

    pub fn last_score(&self) -> f64 {
        self.last_score
    }

    pub fn position(&self) -> (usize, usize) {
        let p = self.history.last().expect("history is never empty");
        (p.x, p.y)
    }

    pub fn is_live(&self) -> bool {
        self.status == TrackStatus::Live
    }

    fn end(&mut self, status: TrackStatus, frame: usize, score: f64) {
        debug_assert!(self.is_live());
        self.status = status;
        self.ended_at = Some(frame);
        self.last_score = score;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackerState {
    /// All tracks ever created, in id order.
    pub tracks: Vec<Track>,
    /// Index of the most recent frame processed.
    pub frame: usize,
    next_id: u64,
}

impl TrackerState {
    pub fn live_count(&self) -> usize {
        self.tracks.iter().filter(|t| t.is_live()).count()
    }

    pub fn live(&self) -> impl Iterator<Item = &Track> {
        self.tracks.iter().filter(|t| t.is_live())
    }
}

/// Counts for one step.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepReport {
    pub frame: usize,
    pub tracked: usize,
    pub dropped: usize,
    pub out_of_bounds: usize,
    pub redetected: bool,
    pub added: usize,
    pub live: usize,
}

fn check_frame(frame: &GrayImage) -> Result<()> {
    let need = 2 * MARGIN + 1;
    if frame.width() < need || frame.height() < need {
        return Err(Error::rejected(format!(
            "frame {}x{} is smaller than {need}x{need}",
            frame.width(),
            frame.height()
        )));
    }
    Ok(())
}

/// Scans the frame on the stride grid inside the margins, keeps candidates
/// scoring at least `detect_threshold`, and suppresses by score, also
/// against `occupied`. Returns at most `budget` points, best first.
pub fn detect_points(
    frame: &GrayImage,
    model: &dyn PointModel,
    config: &PipelineConfig,
    occupied: &[(usize, usize)],
    budget: usize,
) -> Result<Vec<(usize, usize, f64)>> {
    check_frame(frame)?;
    if budget == 0 {
        return Ok(Vec::new());
    }
    let grid: Vec<(usize, usize)> = (MARGIN..frame.height() - MARGIN)
        .step_by(config.scan_stride)
        .flat_map(|y| {
            (MARGIN..frame.width() - MARGIN)
                .step_by(config.scan_stride)
                .map(move |x| (x, y))
        })
        .collect();
    let scored = grid
        .par_iter()
        .map(|&(x, y)| model.trackability(frame, x, y).map(|s| (x, y, s)))
        .collect::<Result<Vec<_>>>()?;
    let mut candidates: Vec<(usize, usize, f64)> = scored
        .into_iter()
        .filter(|c| c.2 >= config.detect_threshold)
        .collect();
    // Stable: equal scores keep scan order.
    candidates.sort_by(|a, b| b.2.total_cmp(&a.2));
    let r = config.nms_radius;
    let free = |x: usize, y: usize| {
        occupied
            .iter()
            .all(|&(ox, oy)| ox.abs_diff(x).max(oy.abs_diff(y)) > r)
    };
    candidates.retain(|&(x, y, _)| free(x, y));
    let mut kept = suppress(candidates, r, |c| (c.0, c.1));
    kept.truncate(budget);
    Ok(kept)
}

/// Detector pass over the first frame.
pub fn initialize_tracks(frame: &GrayImage, model: &dyn PointModel, config: &PipelineConfig) -> Result<TrackerState> {
    config.validate()?;
    let mut state = TrackerState {
        tracks: Vec::new(),
        frame: 0,
        next_id: 0,
    };
    for (x, y, score) in detect_points(frame, model, config, &[], config.max_tracks)? {
        add_track(&mut state, TrackPoint { frame: 0, x, y, score });
    }
    Ok(state)
}

fn add_track(state: &mut TrackerState, p: TrackPoint) {
    state.tracks.push(Track::new(state.next_id, p));
    state.next_id += 1;
}

/// Advances every live track from `frame_t` to `frame_t1`, then
/// re-detects on `frame_t1` if too few tracks survive.
pub fn track_step(
    state: &mut TrackerState,
    frame_t: &GrayImage,
    frame_t1: &GrayImage,
    model: &dyn PointModel,
    config: &PipelineConfig,
) -> Result<StepReport> {
    config.validate()?;
    if !frame_t.same_extents(frame_t1) {
        return Err(Error::rejected(format!(
            "frames differ in size: {}x{} vs {}x{}",
            frame_t.width(),
            frame_t.height(),
            frame_t1.width(),
            frame_t1.height()
        )));
    }
    check_frame(frame_t)?;
    let next = state.frame + 1;
    let live: Vec<usize> = (0..state.tracks.len())
        .filter(|&i| state.tracks[i].is_live())
        .collect();
    let results = live
        .par_iter()
        .map(|&i| {
            let (x, y) = state.tracks[i].position();
            model.track(frame_t, frame_t1, x, y)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut report = StepReport {
        frame: next,
        ..StepReport::default()
    };
    let (w, h) = (frame_t1.width(), frame_t1.height());
    for (&i, (d, score)) in live.iter().zip(results) {
        let track = &mut state.tracks[i];
        let (x, y) = track.position();
        let (nx, ny) = (x as i64 + d.dx as i64, y as i64 + d.dy as i64);
        if score < config.score_threshold {
            track.end(TrackStatus::Dropped, next, score);
            report.dropped += 1;
        } else if !inside_margins(nx, ny, w, h) {
            track.end(TrackStatus::OutOfBounds, next, score);
            report.out_of_bounds += 1;
        } else {
            track.history.push(TrackPoint {
                frame: next,
                x: nx as usize,
                y: ny as usize,
                score,
            });
            track.last_score = score;
            report.tracked += 1;
        }
    }
    state.frame = next;

    let live_now = state.live_count();
    if live_now < config.min_live {
        report.redetected = true;
        let occupied: Vec<(usize, usize)> = state.live().map(|t| t.position()).collect();
        let budget = config.max_tracks.saturating_sub(live_now);
        for (x, y, score) in detect_points(frame_t1, model, config, &occupied, budget)? {
            add_track(state, TrackPoint { frame: next, x, y, score });
            report.added += 1;
        }
    }
    report.live = state.live_count();
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceResult {
    pub state: TrackerState,
    pub initial: usize,
    pub steps: Vec<StepReport>,
}

pub fn run_sequence(frames: &[GrayImage], model: &dyn PointModel, config: &PipelineConfig) -> Result<SequenceResult> {
    if frames.len() < 2 {
        return Err(Error::config(format!(
            "a sequence needs at least 2 frames, got {}",
            frames.len()
        )));
    }
    let mut state = initialize_tracks(&frames[0], model, config)?;
    let initial = state.tracks.len();
    let mut steps = Vec::with_capacity(frames.len() - 1);
    for pair in frames.windows(2) {
        let report = track_step(&mut state, &pair[0], &pair[1], model, config)?;
        log::info!(
            "frame {}: {} tracked, {} dropped, {} out of bounds, {} added, {} live",
            report.frame,
            report.tracked,
            report.dropped,
            report.out_of_bounds,
            report.added,
            report.live
        );
        steps.push(report);
    }
    Ok(SequenceResult { state, initial, steps })
}

/// One `frame id x y score status` row per track and frame, sorted by
/// frame then id, followed by a `#` summary line. A track that ended gets a
/// final row at its end frame carrying its last position.
pub fn format_track_table(state: &TrackerState) -> String {
    let mut rows: Vec<(usize, u64, usize, usize, f64, &str)> = Vec::new();
    for t in &state.tracks {
        for p in &t.history {
            rows.push((p.frame, t.id, p.x, p.y, p.score, TrackStatus::Live.as_str()));
        }
        if let Some(f) = t.ended_at {
            let (x, y) = t.position();
            rows.push((f, t.id, x, y, t.last_score, t.status.as_str()));
        }
    }
    rows.sort_by_key(|r| (r.0, r.1));
    let mut out = String::from("frame id x y score status\n");
    for (f, id, x, y, s, status) in rows {
        let _ = writeln!(out, "{f} {id} {x} {y} {s:.6} {status}");
    }
    let count = |s: TrackStatus| state.tracks.iter().filter(|t| t.status == s).count();
    let _ = writeln!(
        out,
        "# frames {} tracks {} live {} dropped {} out-of-bounds {}",
        state.frame + 1,
        state.tracks.len(),
        count(TrackStatus::Live),
        count(TrackStatus::Dropped),
        count(TrackStatus::OutOfBounds)
    );
    out
}

/// Inverse of [`format_track_table`].
pub fn parse_track_table(text: &str) -> Result<TrackerState> {
    let mut tracks: std::collections::BTreeMap<u64, Track> = std::collections::BTreeMap::new();
    let mut last_frame = 0;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("frame ") {
            continue;
        }
        let bad = || Error::rejected(format!("track table line {}: {line:?}", i + 1));
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 6 {
            return Err(bad());
        }
        let frame: usize = f[0].parse().map_err(|_| bad())?;
        let id: u64 = f[1].parse().map_err(|_| bad())?;
        let x: usize = f[2].parse().map_err(|_| bad())?;
        let y: usize = f[3].parse().map_err(|_| bad())?;
        let score: f64 = f[4].parse().map_err(|_| bad())?;
        last_frame = last_frame.max(frame);
        let point = TrackPoint { frame, x, y, score };
        let status = match f[5] {
            "live" => TrackStatus::Live,
            "dropped" => TrackStatus::Dropped,
            "out-of-bounds" => TrackStatus::OutOfBounds,
            _ => return Err(bad()),
        };
        match (tracks.get_mut(&id), status) {
            (None, TrackStatus::Live) => {
                tracks.insert(id, Track::new(id, point));
            }
            (Some(t), TrackStatus::Live) if t.is_live() => {
                t.history.push(point);
                t.last_score = score;
            }
            (Some(t), ended) if t.is_live() => t.end(ended, frame, score),
            _ => return Err(bad()),
        }
    }
    let next_id = tracks.keys().next_back().map_or(0, |&k| k + 1);
    Ok(TrackerState {
        tracks: tracks.into_values().collect(),
        frame: last_frame,
        next_id,
    })
}
