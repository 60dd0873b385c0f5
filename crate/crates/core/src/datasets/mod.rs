//! Inputs: grayscale frames, KITTI flow ground truth, Harris corners,
//! tracking-sample extraction, UBC patch montages and synthetic
//! translations.

pub mod harris;
pub mod image;
pub mod kitti;
pub mod samples;
pub mod synthetic;
pub mod ubc;

pub use self::image::{load_gray_image, luminance, GrayImage};
pub use harris::{harris_corners, harris_response, Corner};
pub use kitti::{decode_kitti_flow, find_kitti_pairs, FlowField, FlowVector, KittiPair};
pub use samples::{generate_tracking_samples, inside_margins, SampleStats, MARGIN};
pub use synthetic::{
    make_mixed_contrast_translations, make_synthetic_pair, make_synthetic_translations, SyntheticPair,
};
pub use ubc::{center_crop, parse_ubc_dataset, PairIndex, PatchPair, UbcDataset};
