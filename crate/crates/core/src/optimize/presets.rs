//! Reference channel transforms.
//!
//! The optimized matrices are printed to three or four decimals, so most of
//! their rows miss unit L1 norm by a rounding residue. [`validate_rows`]
//! separates that residue from genuine violations, and [`preset`] always
//! returns the row-normalized matrix.

use crate::error::{Error, Result};
use crate::polar::{row_l1_norms, ChannelTransform};

use super::normalize_rows;

pub type Matrix = [[f64; 3]; 3];

pub const STOKES: Matrix = [[0.5, 0.0, 0.5], [0.5, 0.0, -0.5], [-0.25, 0.5, -0.25]];

pub const OPPONENT: Matrix = [
    [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
    [0.5, 0.0, -0.5],
    [0.25, -0.5, 0.25],
];

/// Optimum over all noise levels, as printed (second row sums to 1.02).
pub const OPT_GLOBAL: Matrix = [
    [0.3133, 0.3833, 0.3033],
    [0.4800, 0.0300, -0.5100],
    [0.2600, -0.5200, 0.2200],
];

/// Per-noise-level optima from pattern search, keyed by sigma.
pub const OPT_SIGMA: [(f64, Matrix); 10] = [
    (0.01, [[0.323, 0.363, 0.313], [0.500, -0.210, -0.290], [0.150, -0.500, 0.350]]),
    (0.026, [[0.323, 0.363, 0.313], [0.500, -0.210, -0.290], [0.150, -0.500, 0.350]]),
    (0.041, [[0.323, 0.363, 0.313], [0.500, -0.230, -0.270], [0.160, -0.500, 0.340]]),
    (0.057, [[0.323, 0.363, 0.313], [0.500, -0.210, -0.290], [0.150, -0.500, 0.350]]),
    (0.072, [[0.323, 0.363, 0.313], [0.510, -0.010, -0.480], [0.250, -0.510, 0.240]]),
    (0.088, [[0.323, 0.363, 0.313], [0.300, 0.210, -0.490], [0.240, -0.520, 0.240]]),
    (0.1, [[0.323, 0.373, 0.303], [0.420, 0.080, -0.500], [0.250, -0.510, 0.240]]),
    (0.12, [[0.343, 0.353, 0.303], [0.480, -0.120, -0.400], [0.130, -0.520, 0.350]]),
    (0.13, [[0.333, 0.333, 0.333], [0.480, -0.230, -0.290], [0.040, -0.530, 0.430]]),
    (0.15, [[0.343, 0.353, 0.303], [0.480, -0.120, -0.400], [0.130, -0.520, 0.350]]),
];

/// How far a row's L1 norm is from one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowNormStatus {
    Exact,
    /// Within what rounding each entry to the printed precision can explain.
    Rounding,
    Violation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RowNormCheck {
    pub row: usize,
    pub l1: f64,
    pub status: RowNormStatus,
}

/// Decimal places of a preset as printed.
fn printed_decimals(name: &str) -> u32 {
    match name {
        "opt-global" => 4,
        n if n.starts_with("opt-sigma-") => 3,
        _ => 16,
    }
}

/// Classifies each row's L1 norm given entries rounded to `decimals` places.
pub fn validate_rows(m: &Matrix, decimals: u32) -> Vec<RowNormCheck> {
    // three entries, each off by at most half a unit in the last place
    let rounding = 1.5 * 10f64.powi(-(decimals as i32));
    row_l1_norms(m)
        .iter()
        .enumerate()
        .map(|(row, &l1)| {
            let dev = (l1 - 1.0).abs();
            let status = if dev <= crate::polar::ROW_NORM_TOLERANCE {
                RowNormStatus::Exact
            } else if dev <= rounding + 1e-12 {
                RowNormStatus::Rounding
            } else {
                RowNormStatus::Violation
            };
            RowNormCheck { row, l1, status }
        })
        .collect()
}

/// Every accepted preset name.
pub fn names() -> Vec<String> {
    let mut v = vec!["stokes".to_string(), "opponent".into(), "opt-global".into()];
    v.extend(OPT_SIGMA.iter().map(|(s, _)| format!("opt-sigma-{s}")));
    v
}

/// The matrix with its printed digits, rows not renormalized.
pub fn preset_verbatim(name: &str) -> Result<Matrix> {
    let lookup = || Error::Lookup {
        kind: "preset matrix",
        name: name.to_string(),
    };
    match name {
        "stokes" => Ok(STOKES),
        "opponent" => Ok(OPPONENT),
        "opt-global" => Ok(OPT_GLOBAL),
        _ => {
            let value: f64 = name
                .strip_prefix("opt-sigma-")
                .and_then(|v| v.parse().ok())
                .ok_or_else(lookup)?;
            OPT_SIGMA
                .iter()
                .find(|(s, _)| (s - value).abs() < 1e-9)
                .map(|(_, m)| *m)
                .ok_or_else(lookup)
        }
    }
}

/// Row checks of a named preset at its printed precision.
pub fn validate_preset(name: &str) -> Result<Vec<RowNormCheck>> {
    Ok(validate_rows(&preset_verbatim(name)?, printed_decimals(name)))
}

/// A preset with every row renormalized to unit L1 norm.
pub fn preset(name: &str) -> Result<ChannelTransform> {
    normalize_rows(&preset_verbatim(name)?)
}

pub fn stokes() -> ChannelTransform {
    preset("stokes").expect("valid preset")
}

pub fn opponent() -> ChannelTransform {
    preset("opponent").expect("valid preset")
}

/// The all-noise-level optimum, renormalized.
pub fn opt_global() -> ChannelTransform {
    preset("opt-global").expect("valid preset")
}
