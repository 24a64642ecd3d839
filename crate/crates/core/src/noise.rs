//! Additive Gaussian noise, the DoP bias probe and a wavelet noise estimator.
//!
//! Random numbers come from ChaCha8 (`rand_chacha`), a counter-based stream
//! cipher generator with a platform-independent output sequence. Each camera
//! component draws from its own stream `(seed, component index)`, so the three
//! noise realizations are independent and reproducible in isolation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::plane::Plane;
use crate::polar::CameraImage;

/// Normalizer turning the median absolute deviation of a Gaussian into its std.
pub const MAD_NORMALIZER: f64 = 0.6745;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    /// Standard deviation in intensity units, image range `[0, 1]`.
    pub sigma: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(sigma: f64, seed: u64) -> Result<Self> {
        let spec = Self { sigma, seed };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::validation(format!(
                "noise sigma must be finite and >= 0, got {}",
                self.sigma
            )));
        }
        Ok(())
    }
}

/// Generator for substream `stream` of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn noisy_plane(plane: &Plane, sigma: f64, mut rng: ChaCha8Rng) -> Plane {
    let data = plane
        .as_slice()
        .iter()
        .map(|&v| {
            let n: f64 = rng.sample(StandardNormal);
            v + sigma * n
        })
        .collect();
    Plane::new(plane.width(), plane.height(), data).expect("dimensions preserved")
}

/// Adds independent `N(0, σ²)` noise to every sample of every component.
/// The result is not clipped.
pub fn add_noise(img: &CameraImage, spec: NoiseSpec) -> Result<CameraImage> {
    spec.validate()?;
    if spec.sigma == 0.0 {
        return Ok(img.clone());
    }
    let planes: Vec<Plane> = img
        .planes()
        .par_iter()
        .enumerate()
        .map(|(k, p)| noisy_plane(p, spec.sigma, stream_rng(spec.seed, k as u64)))
        .collect();
    let [a, b, c]: [Plane; 3] = planes.try_into().expect("three planes");
    CameraImage::new(a, b, c)
}

/// Adds `N(0, σ²)` noise to one plane using substream `stream` of `seed`.
pub fn add_plane_noise(plane: &Plane, sigma: f64, seed: u64, stream: u64) -> Result<Plane> {
    NoiseSpec::new(sigma, seed)?;
    Ok(noisy_plane(plane, sigma, stream_rng(seed, stream)))
}

/// Mean naive DoP measured on `n_samples` noisy unpolarized pixels of total
/// intensity `intensity` (each component `intensity / 2`, true DoP zero).
///
/// Samples whose noisy S0 is not positive have no defined DoP and are left out
/// of the mean.
pub fn dop_bias_probe(intensity: f64, sigma: f64, n_samples: usize, seed: u64) -> Result<f64> {
    if !(intensity > 0.0) || !intensity.is_finite() {
        return Err(Error::validation(format!("intensity must be > 0, got {intensity}")));
    }
    if n_samples == 0 {
        return Err(Error::validation("bias probe needs at least one sample"));
    }
    NoiseSpec::new(sigma, seed)?;
    if sigma == 0.0 {
        return Ok(0.0);
    }
    let c = intensity / 2.0;
    let mut rng = stream_rng(seed, 0);
    let mut sum = 0.0;
    let mut counted = 0usize;
    for _ in 0..n_samples {
        let i0 = c + sigma * rng.sample::<f64, _>(StandardNormal);
        let i45 = c + sigma * rng.sample::<f64, _>(StandardNormal);
        let i90 = c + sigma * rng.sample::<f64, _>(StandardNormal);
        let s0 = i0 + i90;
        if s0 <= 0.0 {
            continue;
        }
        let s1 = i0 - i90;
        let s2 = -i0 + 2.0 * i45 - i90;
        sum += s1.hypot(s2) / s0;
        counted += 1;
    }
    Ok(if counted == 0 { 0.0 } else { sum / counted as f64 })
}

fn median(values: &mut [f64]) -> f64 {
    let n = values.len();
    let mid = n / 2;
    let (_, upper, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    if n % 2 == 1 {
        upper
    } else {
        let lower = values[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}

/// Noise std of one plane from the finest diagonal Haar subband.
pub fn estimate_plane_sigma(plane: &Plane) -> Result<f64> {
    let (w, h) = plane.dims();
    if w < 16 || h < 16 {
        return Err(Error::validation(format!(
            "noise estimation needs at least 16x16 pixels, got {w}x{h}"
        )));
    }
    let mut detail = Vec::with_capacity((w / 2) * (h / 2));
    for r in (0..h - 1).step_by(2) {
        for c in (0..w - 1).step_by(2) {
            let hh = (plane.get(r, c) - plane.get(r, c + 1) - plane.get(r + 1, c)
                + plane.get(r + 1, c + 1))
                / 2.0;
            detail.push(hh.abs());
        }
    }
    Ok(median(&mut detail) / MAD_NORMALIZER)
}

/// Average of the per-component estimates.
pub fn estimate_sigma(img: &CameraImage) -> Result<f64> {
    let mut total = 0.0;
    for p in img.planes() {
        total += estimate_plane_sigma(p)?;
    }
    Ok(total / 3.0)
}
