//! Published figures, shown next to measured results for context only.

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AccuracyReference {
    pub method: &'static str,
    /// Percent at 1, 2 and 3 pixels on KITTI Flow 2015 points.
    pub percent: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BackprojectionReference {
    pub method: &'static str,
    pub mean: f64,
    pub std: f64,
    pub inlier_percent: f64,
}

/// Error at 95% recall, percent. `None` where no number was published.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MatchingReference {
    pub method: &'static str,
    pub train_notredame_test_liberty: Option<f64>,
    pub train_liberty_test_notredame: Option<f64>,
}

pub const TRACKING_ACCURACY: [AccuracyReference; 2] = [
    AccuracyReference {
        method: "network tracker",
        percent: [78.22, 88.78, 90.42],
    },
    AccuracyReference {
        method: "forward-backward KLT",
        percent: [53.93, 65.48, 70.61],
    },
];

pub const BACKPROJECTION: [BackprojectionReference; 5] = [
    BackprojectionReference { method: "Lowe", mean: 4.66, std: 4.24, inlier_percent: 34.0 },
    BackprojectionReference { method: "AMA", mean: 2.49, std: 2.42, inlier_percent: 40.0 },
    BackprojectionReference { method: "Cho", mean: 3.56, std: 3.35, inlier_percent: 39.0 },
    BackprojectionReference { method: "HMA", mean: 2.84, std: 2.64, inlier_percent: 39.0 },
    BackprojectionReference { method: "network tracker", mean: 2.71, std: 2.81, inlier_percent: 82.0 },
];

pub const MATCHING: [MatchingReference; 6] = [
    MatchingReference {
        method: "nSIFT + NNet",
        train_notredame_test_liberty: Some(20.44),
        train_liberty_test_notredame: Some(14.35),
    },
    MatchingReference {
        method: "Trzcinski et al.",
        train_notredame_test_liberty: Some(18.05),
        train_liberty_test_notredame: Some(14.15),
    },
    MatchingReference {
        method: "Brown et al.",
        train_notredame_test_liberty: Some(16.85),
        train_liberty_test_notredame: None,
    },
    MatchingReference {
        method: "Simonyan et al.",
        train_notredame_test_liberty: Some(16.56),
        train_liberty_test_notredame: Some(9.88),
    },
    MatchingReference {
        method: "MatchNet",
        train_notredame_test_liberty: Some(9.82),
        train_liberty_test_notredame: Some(5.02),
    },
    MatchingReference {
        method: "network score head",
        train_notredame_test_liberty: Some(15.99),
        train_liberty_test_notredame: Some(12.79),
    },
];
