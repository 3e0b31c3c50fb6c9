//! Exact values, upper bounds and published estimates of learning
//! coefficients for the zoo models.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceKind {
    Exact,
    UpperBound1,
    UpperBoundHalf,
    TableFixture,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RlctReference {
    pub kind: ReferenceKind,
    pub value: f64,
    pub source: String,
}

impl RlctReference {
    fn new(kind: ReferenceKind, value: f64, source: &str) -> Self {
        debug_assert!(value > 0.0);
        Self { kind, value, source: source.to_string() }
    }
}

/// Two-component unit-variance Gaussian mixture fitted to a standard normal.
pub const GMM2_STANDARD_NORMAL_RLCT: f64 = 0.75;

pub fn gmm2_reference() -> RlctReference {
    RlctReference::new(
        ReferenceKind::Exact,
        GMM2_STANDARD_NORMAL_RLCT,
        "Aoyagi (2010), normal mixture with standard normal truth",
    )
}

/// Parameter-counting bound `(i + j)/2 - 1/2` for an `i`-component binomial
/// mixture with a `j`-component truth.
pub fn binomial_bound_one(i: usize, j: usize) -> f64 {
    (i + j) as f64 / 2.0 - 0.5
}

/// Sharper bound `(i + 3j)/4 - 1/2` (Rousseau & Mengersen type analysis).
pub fn binomial_bound_half(i: usize, j: usize) -> f64 {
    (i + 3 * j) as f64 / 4.0 - 0.5
}

/// Regular-model value `d/2` with `d = 2i - 1`.
pub fn binomial_half_dim(i: usize) -> f64 {
    (2 * i - 1) as f64 / 2.0
}

pub fn binomial_reference(kind: ReferenceKind, i: usize, j: usize) -> Option<RlctReference> {
    if j == 0 || j > i {
        return None;
    }
    match kind {
        ReferenceKind::UpperBound1 => Some(RlctReference::new(
            kind,
            binomial_bound_one(i, j),
            "parameter counting",
        )),
        ReferenceKind::UpperBoundHalf => Some(RlctReference::new(
            kind,
            binomial_bound_half(i, j),
            "Rousseau & Mengersen (2011)",
        )),
        ReferenceKind::TableFixture => binomial_published_estimate(i, j)
            .map(|v| RlctReference::new(kind, v, "published estimate, k = 30, n_s = 10000, m = 100")),
        ReferenceKind::Exact => None,
    }
}

/// Published variance-based estimates for binomial mixtures with `k = 30`
/// trials (`n_s = 10000`, `m = 100`), indexed by fitted components `i` and
/// true components `j`, `1 <= j <= i <= 4`.
pub fn binomial_published_estimate(i: usize, j: usize) -> Option<f64> {
    const TABLE: [[f64; 4]; 4] = [
        [0.49, 0.0, 0.0, 0.0],
        [0.78, 1.45, 0.0, 0.0],
        [1.29, 1.84, 2.49, 0.0],
        [1.66, 2.20, 2.79, 3.52],
    ];
    if j == 0 || j > i || i > 4 {
        return None;
    }
    Some(TABLE[i - 1][j - 1])
}

/// Reduced-rank regression with a rank-`i` model and rank-`i` truth:
/// `(i (M + N) - i^2) / 2`.
pub fn rrr_regular(inputs: usize, outputs: usize, rank: usize) -> f64 {
    let h = rank as f64;
    (h * (inputs + outputs) as f64 - h * h) / 2.0
}

/// Exact learning coefficients for reduced-rank regression with
/// `M + N = 12` (`M = N = 6`), model rank `i`, true rank `j`, `1 <= j <= i <= 5`.
pub fn rrr_exact_table(i: usize, j: usize) -> Option<f64> {
    const TABLE: [[f64; 5]; 5] = [
        [5.5, 0.0, 0.0, 0.0, 0.0],
        [8.0, 10.0, 0.0, 0.0, 0.0],
        [10.0, 12.0, 13.5, 0.0, 0.0],
        [12.0, 13.5, 15.0, 16.0, 0.0],
        [13.5, 15.0, 16.0, 17.0, 17.5],
    ];
    if j == 0 || j > i || i > 5 {
        return None;
    }
    Some(TABLE[i - 1][j - 1])
}

/// Published variance-based estimates matching [`rrr_exact_table`]
/// (`n_s = 2000`, `m = 100`).
pub fn rrr_published_estimate(i: usize, j: usize) -> Option<f64> {
    const TABLE: [[f64; 5]; 5] = [
        [5.50, 0.0, 0.0, 0.0, 0.0],
        [7.91, 10.01, 0.0, 0.0, 0.0],
        [9.92, 11.75, 13.49, 0.0, 0.0],
        [11.75, 13.30, 14.79, 16.02, 0.0],
        [13.32, 14.65, 15.81, 16.79, 17.35],
    ];
    if j == 0 || j > i || i > 5 {
        return None;
    }
    Some(TABLE[i - 1][j - 1])
}

pub fn rrr_reference(i: usize, j: usize) -> Option<RlctReference> {
    rrr_exact_table(i, j).map(|v| {
        RlctReference::new(ReferenceKind::Exact, v, "Aoyagi & Watanabe (2005), M = N = 6")
    })
}
