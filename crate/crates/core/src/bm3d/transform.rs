//! Block transforms used inside a 3D group.
//!
//! The 2D transform is applied to each square block as a pair of dense
//! `n×n` matrix products (rows then columns). The 1D transform across the
//! stack of blocks uses fast butterflies, which requires power-of-two stacks.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Transform applied to every block of a group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Transform2d {
    #[serde(rename = "dct")]
    Dct,
    /// Biorthogonal 1.5 wavelet with full dyadic decomposition, periodic boundaries.
    #[serde(rename = "bior1.5")]
    Bior15,
}

impl std::str::FromStr for Transform2d {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dct" => Ok(Self::Dct),
            "bior1.5" => Ok(Self::Bior15),
            _ => Err(Error::Lookup {
                kind: "2D transform",
                name: s.to_string(),
            }),
        }
    }
}

/// Transform across the stack of blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Transform1d {
    #[serde(rename = "haar")]
    Haar,
    #[serde(rename = "walsh-hadamard")]
    WalshHadamard,
}

impl std::str::FromStr for Transform1d {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "haar" => Ok(Self::Haar),
            "walsh-hadamard" => Ok(Self::WalshHadamard),
            _ => Err(Error::Lookup {
                kind: "1D transform",
                name: s.to_string(),
            }),
        }
    }
}

/// Orthonormal DCT-II matrix, `out = C · x`.
pub fn dct_matrix(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for k in 0..n {
        let scale = if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
        for i in 0..n {
            m[k * n + i] = scale * (PI * (2 * i + 1) as f64 * k as f64 / (2 * n) as f64).cos();
        }
    }
    m
}

const BIOR15_DEC_LO: [f64; 10] = [
    0.01657281518405971,
    -0.01657281518405971,
    -0.12153397801643787,
    0.12153397801643787,
    FRAC_1_SQRT_2,
    FRAC_1_SQRT_2,
    0.12153397801643787,
    -0.12153397801643787,
    -0.01657281518405971,
    0.01657281518405971,
];
const BIOR15_DEC_HI: [f64; 10] = [
    0.0,
    0.0,
    0.0,
    0.0,
    -FRAC_1_SQRT_2,
    FRAC_1_SQRT_2,
    0.0,
    0.0,
    0.0,
    0.0,
];

/// Analysis matrix of the periodic multi-level bior1.5 transform.
/// Output order is `[a_coarsest, d_coarsest, ..., d_finest]`.
pub fn bior15_matrix(n: usize) -> Vec<f64> {
    // analysis of one level on a length-`len` periodic signal
    fn level(len: usize) -> Vec<f64> {
        let half = len / 2;
        let mut m = vec![0.0; len * len];
        for k in 0..half {
            for j in 0..10 {
                let idx = (2 * k as isize + j as isize - 4).rem_euclid(len as isize) as usize;
                m[k * len + idx] += BIOR15_DEC_LO[j];
                m[(half + k) * len + idx] += BIOR15_DEC_HI[j];
            }
        }
        m
    }
    let mut total = identity(n);
    let mut len = n;
    while len > 1 {
        // embed the level in the leading `len` coordinates
        let lvl = level(len);
        let mut full = identity(n);
        for r in 0..len {
            for c in 0..len {
                full[r * n + c] = lvl[r * len + c];
            }
        }
        total = matmul(&full, &total, n);
        len /= 2;
    }
    total
}

fn identity(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        m[i * n + i] = 1.0;
    }
    m
}

fn matmul(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            for j in 0..n {
                out[i * n + j] += aik * b[k * n + j];
            }
        }
    }
    out
}

fn invert(m: &[f64], n: usize) -> Result<Vec<f64>> {
    let inv = DMatrix::from_row_slice(n, n, m)
        .try_inverse()
        .ok_or_else(|| Error::Internal("block transform is not invertible".into()))?;
    let mut out = vec![0.0; n * n];
    for r in 0..n {
        for c in 0..n {
            out[r * n + c] = inv[(r, c)];
        }
    }
    Ok(out)
}

/// Separable 2D block transform with precomputed forward/inverse matrices.
#[derive(Debug, Clone)]
pub struct BlockTransform {
    n: usize,
    forward: Vec<f64>,
    inverse: Vec<f64>,
    forward_t: Vec<f64>,
    inverse_t: Vec<f64>,
    /// Noise gain of each 2D coefficient (`‖row_u‖·‖row_v‖`); 1 for orthonormal bases.
    gains: Vec<f64>,
}

impl BlockTransform {
    pub fn new(kind: Transform2d, n: usize) -> Result<Self> {
        let forward = match kind {
            Transform2d::Dct => dct_matrix(n),
            Transform2d::Bior15 => {
                if !n.is_power_of_two() {
                    return Err(Error::validation(format!(
                        "bior1.5 needs a power-of-two block size, got {n}"
                    )));
                }
                bior15_matrix(n)
            }
        };
        let inverse = invert(&forward, n)?;
        let row_norms: Vec<f64> = (0..n)
            .map(|r| forward[r * n..(r + 1) * n].iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect();
        let mut gains = vec![0.0; n * n];
        for u in 0..n {
            for v in 0..n {
                gains[u * n + v] = row_norms[u] * row_norms[v];
            }
        }
        let transpose = |m: &[f64]| {
            let mut t = vec![0.0; n * n];
            for r in 0..n {
                for c in 0..n {
                    t[c * n + r] = m[r * n + c];
                }
            }
            t
        };
        Ok(Self {
            n,
            forward_t: transpose(&forward),
            inverse_t: transpose(&inverse),
            forward,
            inverse,
            gains,
        })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn gains(&self) -> &[f64] {
        &self.gains
    }

    /// Row-major 1D analysis matrix `M`; the 2D transform is `M · block · Mᵀ`.
    pub fn analysis_matrix(&self) -> &[f64] {
        &self.forward
    }

    /// `out = M · block · Mᵀ` for a row-major `n×n` block; `mt` is `Mᵀ`.
    /// Both passes are row-wise multiply-adds so they vectorize.
    fn apply(m: &[f64], mt: &[f64], n: usize, block: &[f64], tmp: &mut [f64], out: &mut [f64]) {
        if n == 8 {
            return apply_fixed::<8>(m, mt, block, tmp, out);
        }
        mul_rows(m, n, block, tmp);
        mul_rows(tmp, n, mt, out);
    }

    pub fn forward(&self, block: &[f64], tmp: &mut [f64], out: &mut [f64]) {
        Self::apply(&self.forward, &self.forward_t, self.n, block, tmp, out);
    }

    pub fn inverse(&self, coeffs: &[f64], tmp: &mut [f64], out: &mut [f64]) {
        Self::apply(&self.inverse, &self.inverse_t, self.n, coeffs, tmp, out);
    }
}

/// `out = a · b` for row-major `n×n` matrices.
fn mul_rows(a: &[f64], n: usize, b: &[f64], out: &mut [f64]) {
    for i in 0..n {
        let row = &mut out[i * n..(i + 1) * n];
        row.fill(0.0);
        for k in 0..n {
            let aik = a[i * n + k];
            for (o, &v) in row.iter_mut().zip(&b[k * n..(k + 1) * n]) {
                *o += aik * v;
            }
        }
    }
}

#[inline]
fn mul_fixed<const N: usize>(a: &[f64], b: &[f64], out: &mut [f64]) {
    for i in 0..N {
        let mut row = [0.0; N];
        for k in 0..N {
            let aik = a[i * N + k];
            let src: &[f64; N] = b[k * N..(k + 1) * N].try_into().expect("row of N");
            for j in 0..N {
                row[j] += aik * src[j];
            }
        }
        out[i * N..(i + 1) * N].copy_from_slice(&row);
    }
}

fn apply_fixed<const N: usize>(m: &[f64], mt: &[f64], block: &[f64], tmp: &mut [f64], out: &mut [f64]) {
    mul_fixed::<N>(m, block, tmp);
    mul_fixed::<N>(tmp, mt, out);
}

/// In-place orthonormal transform along the stack of a block-major group
/// (`group[m * stride + c]`, `m < len`). `len` must be a power of two.
pub fn stack_forward(kind: Transform1d, group: &mut [f64], len: usize, stride: usize, scratch: &mut Vec<f64>) {
    debug_assert!(len.is_power_of_two());
    match kind {
        Transform1d::Haar => haar_forward(group, len, stride, scratch),
        Transform1d::WalshHadamard => hadamard(group, len, stride),
    }
}

pub fn stack_inverse(kind: Transform1d, group: &mut [f64], len: usize, stride: usize, scratch: &mut Vec<f64>) {
    debug_assert!(len.is_power_of_two());
    match kind {
        Transform1d::Haar => haar_inverse(group, len, stride, scratch),
        // orthonormal and symmetric, so self-inverse
        Transform1d::WalshHadamard => hadamard(group, len, stride),
    }
}

fn haar_forward(group: &mut [f64], len: usize, stride: usize, scratch: &mut Vec<f64>) {
    scratch.resize(len * stride, 0.0);
    let mut n = len;
    while n > 1 {
        let half = n / 2;
        for i in 0..half {
            let (a, b) = (2 * i * stride, (2 * i + 1) * stride);
            for c in 0..stride {
                let x = group[a + c];
                let y = group[b + c];
                scratch[i * stride + c] = (x + y) * FRAC_1_SQRT_2;
                scratch[(half + i) * stride + c] = (x - y) * FRAC_1_SQRT_2;
            }
        }
        group[..n * stride].copy_from_slice(&scratch[..n * stride]);
        n = half;
    }
}

fn haar_inverse(group: &mut [f64], len: usize, stride: usize, scratch: &mut Vec<f64>) {
    scratch.resize(len * stride, 0.0);
    let mut n = 2;
    while n <= len {
        let half = n / 2;
        for i in 0..half {
            for c in 0..stride {
                let s = group[i * stride + c];
                let d = group[(half + i) * stride + c];
                scratch[2 * i * stride + c] = (s + d) * FRAC_1_SQRT_2;
                scratch[(2 * i + 1) * stride + c] = (s - d) * FRAC_1_SQRT_2;
            }
        }
        group[..n * stride].copy_from_slice(&scratch[..n * stride]);
        n *= 2;
    }
}

fn hadamard(group: &mut [f64], len: usize, stride: usize) {
    let mut h = 1;
    while h < len {
        for start in (0..len).step_by(2 * h) {
            for i in start..start + h {
                let (a, b) = (i * stride, (i + h) * stride);
                for c in 0..stride {
                    let x = group[a + c];
                    let y = group[b + c];
                    group[a + c] = (x + y) * FRAC_1_SQRT_2;
                    group[b + c] = (x - y) * FRAC_1_SQRT_2;
                }
            }
        }
        h *= 2;
    }
}
