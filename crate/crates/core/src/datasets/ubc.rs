//! UBC patch dataset (Liberty / Notre Dame / Yosemite).
//!
//! Each directory holds 1024×1024 bitmap montages of 16×16 patches of
//! 64×64 pixels (`patches0000.bmp`, ...), `info.txt` whose line `i` starts
//! with patch `i`'s 3D point id, and `m50_*.txt` match files with six fields
//! per line: patch id, point id, unused, patch id, point id, unused.

use std::fs;
use std::path::{Path, PathBuf};

use super::image::{load_gray_image, GrayImage};
use crate::error::{Error, Result};

pub const PATCH: usize = 64;
pub const MONTAGE: usize = 1024;
pub const PER_ROW: usize = MONTAGE / PATCH;
pub const PER_MONTAGE: usize = PER_ROW * PER_ROW;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchPair {
    pub a: Vec<u8>,
    pub b: Vec<u8>,
    pub matching: bool,
}

/// Indices of a labeled pair; patches are fetched lazily.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairIndex {
    pub a: usize,
    pub b: usize,
    pub matching: bool,
}

#[derive(Debug, Clone)]
pub struct UbcDataset {
    montages: Vec<GrayImage>,
    point_ids: Vec<u64>,
    pairs: Vec<PairIndex>,
}

/// Montage number and top-left pixel (x, y) of patch `index`.
pub fn patch_location(index: usize) -> (usize, usize, usize) {
    let local = index % PER_MONTAGE;
    (
        index / PER_MONTAGE,
        (local % PER_ROW) * PATCH,
        (local / PER_ROW) * PATCH,
    )
}

impl UbcDataset {
    pub fn from_parts(
        montages: Vec<GrayImage>,
        point_ids: Vec<u64>,
        pairs: Vec<PairIndex>,
    ) -> Result<Self> {
        for (i, m) in montages.iter().enumerate() {
            if m.width() != MONTAGE || m.height() != MONTAGE {
                return Err(Error::CorruptDataset(format!(
                    "montage {i} is {}x{}, expected {MONTAGE}x{MONTAGE}",
                    m.width(),
                    m.height()
                )));
            }
        }
        let capacity = montages.len() * PER_MONTAGE;
        let lower = capacity.saturating_sub(PER_MONTAGE);
        if point_ids.len() > capacity || point_ids.len() <= lower {
            return Err(Error::CorruptDataset(format!(
                "{} info lines do not fit {} montages ({} patch slots)",
                point_ids.len(),
                montages.len(),
                capacity
            )));
        }
        for p in &pairs {
            if p.a >= point_ids.len() || p.b >= point_ids.len() {
                return Err(Error::CorruptDataset(format!(
                    "pair ({}, {}) references a patch beyond {}",
                    p.a,
                    p.b,
                    point_ids.len()
                )));
            }
        }
        Ok(UbcDataset {
            montages,
            point_ids,
            pairs,
        })
    }

    pub fn len(&self) -> usize {
        self.point_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.point_ids.is_empty()
    }

    pub fn point_id(&self, index: usize) -> u64 {
        self.point_ids[index]
    }

    pub fn pairs(&self) -> &[PairIndex] {
        &self.pairs
    }

    pub fn patch(&self, index: usize) -> Result<Vec<u8>> {
        if index >= self.len() {
            return Err(Error::rejected(format!("patch {index} beyond {}", self.len())));
        }
        let (m, x, y) = patch_location(index);
        self.montages[m].crop(x, y, PATCH)
    }

    pub fn pair(&self, p: PairIndex) -> Result<PatchPair> {
        Ok(PatchPair {
            a: self.patch(p.a)?,
            b: self.patch(p.b)?,
            matching: p.matching,
        })
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn parse_info(text: &str) -> Result<Vec<u64>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.split_whitespace()
                .next()
                .and_then(|f| f.parse().ok())
                .ok_or_else(|| Error::CorruptDataset(format!("info line {}: {l:?}", i + 1)))
        })
        .collect()
}

/// Match-file lines must agree with `point_ids` on both 3D point ids.
pub fn parse_matches(text: &str, point_ids: &[u64]) -> Result<Vec<PairIndex>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<u64> = line
            .split_whitespace()
            .map(|s| s.parse::<u64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::CorruptDataset(format!("match line {}: {line:?}", i + 1)))?;
        if f.len() != 6 {
            return Err(Error::CorruptDataset(format!(
                "match line {} has {} fields, expected 6",
                i + 1,
                f.len()
            )));
        }
        let (a, pa, b, pb) = (f[0] as usize, f[1], f[3] as usize, f[4]);
        for (patch, point) in [(a, pa), (b, pb)] {
            match point_ids.get(patch) {
                Some(&id) if id == point => {}
                Some(&id) => {
                    return Err(Error::CorruptDataset(format!(
                        "match line {}: patch {patch} has point {id} in info.txt, not {point}",
                        i + 1
                    )))
                }
                None => {
                    return Err(Error::CorruptDataset(format!(
                        "match line {}: patch {patch} not in info.txt",
                        i + 1
                    )))
                }
            }
        }
        out.push(PairIndex {
            a,
            b,
            matching: pa == pb,
        });
    }
    Ok(out)
}

fn sorted_files(dir: &Path, pred: impl Fn(&str) -> bool) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.file_name().and_then(|n| n.to_str()).is_some_and(&pred))
        .collect();
    files.sort();
    Ok(files)
}

/// Loads a UBC directory. `match_file` selects one `m50_*.txt`; by default
/// the first one in name order is used.
pub fn parse_ubc_dataset(dir: &Path, match_file: Option<&str>) -> Result<UbcDataset> {
    let montage_paths = sorted_files(dir, |n| n.starts_with("patches") && n.ends_with(".bmp"))?;
    if montage_paths.is_empty() {
        return Err(Error::CorruptDataset(format!("{}: no patches*.bmp", dir.display())));
    }
    let point_ids = parse_info(&read_text(&dir.join("info.txt"))?)?;
    let match_path = match match_file {
        Some(name) => dir.join(name),
        None => sorted_files(dir, |n| n.starts_with("m50_") && n.ends_with(".txt"))?
            .into_iter()
            .next()
            .ok_or_else(|| Error::CorruptDataset(format!("{}: no m50_*.txt", dir.display())))?,
    };
    let pairs = parse_matches(&read_text(&match_path)?, &point_ids)?;
    let montages = montage_paths
        .iter()
        .map(|p| load_gray_image(p))
        .collect::<Result<Vec<_>>>()?;
    UbcDataset::from_parts(montages, point_ids, pairs)
}

/// Central `size`×`size` region of a 64×64 patch (offset `(64 - size) / 2`).
pub fn center_crop(patch64: &[u8], size: usize) -> Result<Vec<u8>> {
    if patch64.len() != PATCH * PATCH {
        return Err(Error::rejected(format!(
            "expected a 64x64 patch, got {} pixels",
            patch64.len()
        )));
    }
    if size == 0 || size > PATCH {
        return Err(Error::rejected(format!("crop size {size} must be in 1..=64")));
    }
    let off = (PATCH - size) / 2;
    let mut out = Vec::with_capacity(size * size);
    for y in off..off + size {
        out.extend_from_slice(&patch64[y * PATCH + off..y * PATCH + off + size]);
    }
    Ok(out)
}
