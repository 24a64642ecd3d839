//! Stokes-domain MSE and PSNR.
//!
//! `MSE = (1/3MN)·Σ[(S0−S0')² + ½(S1−S1')² + ½(S2−S2')²]` and
//! `PSNR = 10·log10(1/MSE)`. When scoring camera images, Stokes planes are
//! halved first so that S0 lies in `[0, 1]` for in-range input. Nothing is
//! clipped before scoring.

use serde::{Deserialize, Serialize};

use crate::bm3d::DenoiseProfile;
use crate::error::{Error, Result};
use crate::pbm3d::Method;
use crate::polar::{stokes_from_camera, CameraImage, ChannelTransform, StokesImage};

/// Per-plane and weighted mean squared errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StokesMse {
    pub mse: f64,
    pub mse_s0: f64,
    pub mse_s1: f64,
    pub mse_s2: f64,
}

/// PSNR in dB; `infinite` is set (and `db` is `+∞`) when the MSE is zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Psnr {
    pub db: f64,
    pub infinite: bool,
    pub mse: f64,
}

fn plane_mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

pub fn mse_stokes(s: &StokesImage, truth: &StokesImage) -> Result<StokesMse> {
    if s.dims() != truth.dims() {
        return Err(Error::Dimensions {
            expected: truth.dims(),
            found: s.dims(),
        });
    }
    let [a, b, c] = [0, 1, 2].map(|k| plane_mse(s.planes()[k].as_slice(), truth.planes()[k].as_slice()));
    Ok(StokesMse {
        mse: (a + 0.5 * b + 0.5 * c) / 3.0,
        mse_s0: a,
        mse_s1: b,
        mse_s2: c,
    })
}

pub fn psnr_from_mse(mse: f64) -> Psnr {
    if mse == 0.0 {
        Psnr {
            db: f64::INFINITY,
            infinite: true,
            mse,
        }
    } else {
        Psnr {
            db: 10.0 * (1.0 / mse).log10(),
            infinite: false,
            mse,
        }
    }
}

pub fn psnr_stokes(s: &StokesImage, truth: &StokesImage) -> Result<Psnr> {
    Ok(psnr_from_mse(mse_stokes(s, truth)?.mse))
}

/// Stokes planes of a camera image on the metric scale (S0 in `[0, 1]`).
pub fn metric_stokes(img: &CameraImage) -> StokesImage {
    stokes_from_camera(img).scaled(0.5)
}

/// Stokes-domain scores of a camera image against its ground truth.
pub fn score_camera(estimate: &CameraImage, truth: &CameraImage) -> Result<(StokesMse, Psnr)> {
    let mse = mse_stokes(&metric_stokes(estimate), &metric_stokes(truth))?;
    Ok((mse, psnr_from_mse(mse.mse)))
}

/// Everything `evaluate_method` needs besides the images.
#[derive(Debug, Clone)]
pub struct EvalParams {
    pub image_id: String,
    pub sigma: f64,
    pub seed: u64,
    /// Transform used by PBM3D and its label for reports.
    pub transform: ChannelTransform,
    pub matrix_label: String,
    pub profile: DenoiseProfile,
}

impl EvalParams {
    pub fn new(image_id: impl Into<String>, sigma: f64, transform: ChannelTransform, matrix_label: impl Into<String>) -> Self {
        Self {
            image_id: image_id.into(),
            sigma,
            seed: 0,
            transform,
            matrix_label: matrix_label.into(),
            profile: DenoiseProfile::default(),
        }
    }
}

/// One benchmark cell.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub image_id: String,
    pub method: Method,
    pub sigma: f64,
    pub seed: u64,
    pub matrix: String,
    pub mse: f64,
    pub psnr_db: f64,
    pub psnr_infinite: bool,
    pub mse_s0: f64,
    pub mse_s1: f64,
    pub mse_s2: f64,
}

/// Line-delimited JSON form of [`EvalReport`]; an infinite PSNR is `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub image_id: String,
    pub method: String,
    pub sigma: f64,
    pub seed: u64,
    pub matrix: String,
    pub mse: f64,
    pub psnr_db: Option<f64>,
    pub mse_s0: f64,
    pub mse_s1: f64,
    pub mse_s2: f64,
}

impl EvalReport {
    pub fn record(&self) -> EvalRecord {
        EvalRecord {
            image_id: self.image_id.clone(),
            method: self.method.label().to_string(),
            sigma: self.sigma,
            seed: self.seed,
            matrix: self.matrix.clone(),
            mse: self.mse,
            psnr_db: (!self.psnr_infinite).then_some(self.psnr_db),
            mse_s0: self.mse_s0,
            mse_s1: self.mse_s1,
            mse_s2: self.mse_s2,
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(&self.record()).expect("record serializes")
    }
}

/// Runs `method` on `noisy` and scores it against `truth`.
pub fn evaluate_method(noisy: &CameraImage, truth: &CameraImage, method: Method, params: &EvalParams) -> Result<EvalReport> {
    if noisy.dims() != truth.dims() {
        return Err(Error::Dimensions {
            expected: truth.dims(),
            found: noisy.dims(),
        });
    }
    let estimate = method.run(noisy, params.sigma, &params.transform, &params.profile)?;
    let (mse, psnr) = score_camera(&estimate, truth)?;
    let matrix = match method {
        Method::Pbm3d => params.matrix_label.clone(),
        Method::Bm3dPerChannel => "identity".into(),
        Method::Bm3dStokes => "stokes".into(),
        Method::None => "-".into(),
    };
    Ok(EvalReport {
        image_id: params.image_id.clone(),
        method,
        sigma: params.sigma,
        seed: params.seed,
        matrix,
        mse: mse.mse,
        psnr_db: psnr.db,
        psnr_infinite: psnr.infinite,
        mse_s0: mse.mse_s0,
        mse_s1: mse.mse_s1,
        mse_s2: mse.mse_s2,
    })
}

/// Aligned PSNR table: one row per (image, sigma), one column per method.
pub fn format_table(reports: &[EvalReport]) -> String {
    let mut methods: Vec<Method> = reports.iter().map(|r| r.method).collect();
    methods.sort();
    methods.dedup();
    let mut rows: Vec<(String, f64)> = Vec::new();
    for r in reports {
        if !rows.iter().any(|(id, s)| *id == r.image_id && *s == r.sigma) {
            rows.push((r.image_id.clone(), r.sigma));
        }
    }
    let id_width = rows.iter().map(|(id, _)| id.len()).max().unwrap_or(5).max(5);
    let mut out = format!("{:<id_width$}  {:>7}", "image", "sigma");
    for m in &methods {
        out.push_str(&format!("  {:>11}", m.label()));
    }
    out.push('\n');
    for (id, sigma) in &rows {
        out.push_str(&format!("{id:<id_width$}  {sigma:>7.3}"));
        for m in &methods {
            let cell = reports
                .iter()
                .find(|r| r.image_id == *id && r.sigma == *sigma && r.method == *m)
                .map(|r| if r.psnr_infinite { "inf".to_string() } else { format!("{:.2}", r.psnr_db) })
                .unwrap_or_else(|| "-".into());
            out.push_str(&format!("  {cell:>11}"));
        }
        out.push('\n');
    }
    out
}
