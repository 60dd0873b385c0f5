//! Tracking samples and their "DPTS" record cache.
//!
//! File layout: magic `DPTS`, record count `u64` (little endian), then per
//! record 361 template bytes, 3025 search bytes, `dx: i8`, `dy: i8`.

use std::fs;
use std::path::Path;

use super::{normalize_patch, Displacement, SEARCH_SIZE, TEMPLATE_SIZE};
use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::scalar::Scalar;

pub const SAMPLE_MAGIC: &[u8; 4] = b"DPTS";
const TEMPLATE_LEN: usize = TEMPLATE_SIZE * TEMPLATE_SIZE;
const SEARCH_LEN: usize = SEARCH_SIZE * SEARCH_SIZE;
const RECORD_LEN: usize = TEMPLATE_LEN + SEARCH_LEN + 2;

/// A 19×19 template from frame t, the 55×55 window around the same point in
/// frame t+1 and where the template actually moved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrackingSample {
    template: Vec<u8>,
    search: Vec<u8>,
    displacement: Displacement,
}

impl TrackingSample {
    pub fn new(template: Vec<u8>, search: Vec<u8>, displacement: Displacement) -> Result<Self> {
        if template.len() != TEMPLATE_LEN || search.len() != SEARCH_LEN {
            return Err(Error::rejected(format!(
                "sample patches must hold {TEMPLATE_LEN} and {SEARCH_LEN} pixels, got {} and {}",
                template.len(),
                search.len()
            )));
        }
        if !displacement.in_window() {
            return Err(Error::rejected(format!(
                "displacement ({}, {}) outside the search window",
                displacement.dx, displacement.dy
            )));
        }
        Ok(TrackingSample {
            template,
            search,
            displacement,
        })
    }

    pub fn template(&self) -> &[u8] {
        &self.template
    }

    pub fn search(&self) -> &[u8] {
        &self.search
    }

    pub fn displacement(&self) -> Displacement {
        self.displacement
    }

    pub fn template_tensor<T: Scalar>(&self) -> Tensor<T> {
        normalize_patch(&self.template, TEMPLATE_SIZE).expect("validated extent")
    }

    pub fn search_tensor<T: Scalar>(&self) -> Tensor<T> {
        normalize_patch(&self.search, SEARCH_SIZE).expect("validated extent")
    }
}

pub fn encode_samples(samples: &[TrackingSample]) -> Vec<u8> {
    let mut buf = Vec::with_capacity(12 + samples.len() * RECORD_LEN);
    buf.extend_from_slice(SAMPLE_MAGIC);
    buf.extend_from_slice(&(samples.len() as u64).to_le_bytes());
    for s in samples {
        buf.extend_from_slice(&s.template);
        buf.extend_from_slice(&s.search);
        buf.push(s.displacement.dx as i8 as u8);
        buf.push(s.displacement.dy as i8 as u8);
    }
    buf
}

pub fn decode_samples(bytes: &[u8]) -> Result<Vec<TrackingSample>> {
    if bytes.len() < 12 || &bytes[..4] != SAMPLE_MAGIC {
        return Err(Error::CorruptFile(
            "sample cache must start with \"DPTS\" and a u64 count".into(),
        ));
    }
    let count = u64::from_le_bytes(bytes[4..12].try_into().unwrap());
    let body = &bytes[12..];
    if (body.len() as u64) != count.saturating_mul(RECORD_LEN as u64) {
        return Err(Error::CorruptFile(format!(
            "sample cache declares {count} records but holds {} bytes",
            body.len()
        )));
    }
    body.chunks_exact(RECORD_LEN)
        .map(|r| {
            let d = Displacement::new(r[RECORD_LEN - 2] as i8 as i32, r[RECORD_LEN - 1] as i8 as i32);
            TrackingSample::new(
                r[..TEMPLATE_LEN].to_vec(),
                r[TEMPLATE_LEN..TEMPLATE_LEN + SEARCH_LEN].to_vec(),
                d,
            )
            .map_err(|e| Error::CorruptFile(e.to_string()))
        })
        .collect()
}

pub fn write_samples(path: &Path, samples: &[TrackingSample]) -> Result<()> {
    fs::write(path, encode_samples(samples)).map_err(|e| Error::io(path, e))
}

pub fn read_samples(path: &Path) -> Result<Vec<TrackingSample>> {
    decode_samples(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn records_survive_the_cache(
            seed in any::<u8>(),
            dx in -18i32..=18,
            dy in -18i32..=18,
        ) {
            let t: Vec<u8> = (0..TEMPLATE_LEN).map(|i| (i as u8).wrapping_mul(seed)).collect();
            let s: Vec<u8> = (0..SEARCH_LEN).map(|i| (i as u8) ^ seed).collect();
            let sample = TrackingSample::new(t, s, Displacement::new(dx, dy)).unwrap();
            let back = decode_samples(&encode_samples(&[sample.clone(), sample.clone()])).unwrap();
            prop_assert_eq!(back, vec![sample.clone(), sample]);
        }
    }

    #[test]
    fn invariants_enforced() {
        assert!(TrackingSample::new(vec![0; 360], vec![0; SEARCH_LEN], Displacement::default()).is_err());
        assert!(TrackingSample::new(vec![0; TEMPLATE_LEN], vec![0; SEARCH_LEN], Displacement::new(0, -19)).is_err());
    }

    #[test]
    fn corrupt_caches_rejected() {
        let s = TrackingSample::new(vec![1; TEMPLATE_LEN], vec![2; SEARCH_LEN], Displacement::new(1, 2)).unwrap();
        let bytes = encode_samples(&[s]);
        assert!(decode_samples(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_samples(&bad).is_err());
        let mut far = bytes;
        let n = far.len();
        far[n - 1] = 40;
        assert!(decode_samples(&far).is_err());
    }
}
