//! Joint denoising of the three camera components in a luminance–polarization
//! space.
//!
//! The camera components are mapped through a [`ChannelTransform`] to
//! `(P0, P1, P2)`. Each BM3D stage finds its groups on `P0` only and reuses
//! them for `P1` and `P2`; the stage-2 groups come from the stage-1 estimate of
//! `P0`. The three estimates are mapped back with the inverse transform.

use rayon::prelude::*;

use crate::bm3d::{stage1_hard_threshold, stage2_wiener, two_stage, BlockGroup, DenoiseProfile};
use crate::error::{Error, Result};
use crate::optimize::presets;
use crate::plane::Plane;
use crate::polar::{apply_transform, invert_transform, CameraImage, ChannelTransform};

/// Whether `P1` and `P2` borrow the groups of `P0` or match on their own.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Grouping {
    #[default]
    Shared,
    Independent,
}

#[derive(Debug, Clone)]
pub struct Pbm3dConfig {
    pub transform: ChannelTransform,
    pub profile: DenoiseProfile,
    /// Noise std of each camera component.
    pub sigma: f64,
    pub grouping: Grouping,
}

impl Pbm3dConfig {
    pub fn new(transform: ChannelTransform, sigma: f64) -> Self {
        Self {
            transform,
            profile: DenoiseProfile::default(),
            sigma,
            grouping: Grouping::Shared,
        }
    }

    pub fn with_profile(mut self, profile: DenoiseProfile) -> Self {
        self.profile = profile;
        self
    }

    pub fn with_grouping(mut self, grouping: Grouping) -> Self {
        self.grouping = grouping;
        self
    }
}

/// Std of each transformed channel when the camera components carry
/// independent `N(0, σ²)` noise: `σ·‖row_k‖₂`.
pub fn channel_sigmas(t: &ChannelTransform, sigma: f64) -> [f64; 3] {
    t.matrix()
        .map(|row| sigma * row.iter().map(|v| v * v).sum::<f64>().sqrt())
}

/// Groups used by each channel in each stage.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupTrace {
    pub stage1: [Vec<BlockGroup>; 3],
    pub stage2: [Vec<BlockGroup>; 3],
}

/// Runs `stage` on all three channels: channel 0 first, then the other two
/// with its groups when sharing.
fn run_stage<F>(grouping: Grouping, stage: F) -> Result<([Plane; 3], [Vec<BlockGroup>; 3])>
where
    F: Fn(usize, Option<&[BlockGroup]>) -> Result<(Plane, Vec<BlockGroup>)> + Sync,
{
    let (p0, g0) = stage(0, None)?;
    let shared = match grouping {
        Grouping::Shared => Some(g0.as_slice()),
        Grouping::Independent => None,
    };
    let rest: Vec<(Plane, Vec<BlockGroup>)> = [1usize, 2]
        .par_iter()
        .map(|&k| stage(k, shared))
        .collect::<Result<_>>()?;
    let [(p1, g1), (p2, g2)]: [(Plane, Vec<BlockGroup>); 2] = rest.try_into().expect("two channels");
    Ok(([p0, p1, p2], [g0, g1, g2]))
}

/// Two-stage denoising returning the groups each channel used.
pub fn denoise_polarization_traced(img: &CameraImage, cfg: &Pbm3dConfig) -> Result<(CameraImage, GroupTrace)> {
    if !(cfg.sigma >= 0.0) || !cfg.sigma.is_finite() {
        return Err(Error::validation(format!("sigma must be finite and >= 0, got {}", cfg.sigma)));
    }
    cfg.profile.validate(img.width(), img.height())?;
    let t = &cfg.transform;
    let noisy = apply_transform(t, img);
    let sigmas = channel_sigmas(t, cfg.sigma);

    let (basic, groups1) = run_stage(cfg.grouping, |k, g| {
        stage1_hard_threshold(&noisy[k], sigmas[k], &cfg.profile, g)
    })?;
    let (fine, groups2) = run_stage(cfg.grouping, |k, g| {
        stage2_wiener(&noisy[k], &basic[k], sigmas[k], &cfg.profile, g)
    })?;
    let out = invert_transform(t, &fine)?;
    Ok((
        out,
        GroupTrace {
            stage1: groups1,
            stage2: groups2,
        },
    ))
}

/// Groups of both stages found on `P0`, with the final estimate of `P0`.
pub(crate) struct Guide {
    pub stage1: Vec<BlockGroup>,
    pub stage2: Vec<BlockGroup>,
    pub estimate: Plane,
}

/// Denoises `P0` on its own groups. Together with [`follow_channel`] this
/// reproduces the shared-grouping pipeline one channel at a time.
pub(crate) fn guide_channel(p0: &Plane, sigma: f64, profile: &DenoiseProfile) -> Result<Guide> {
    let r = two_stage(p0, sigma, profile, None, None)?;
    Ok(Guide {
        stage1: r.stage1,
        stage2: r.stage2,
        estimate: r.estimate,
    })
}

/// Denoises `P1` or `P2` on the guide's groups.
pub(crate) fn follow_channel(p: &Plane, sigma: f64, profile: &DenoiseProfile, guide: &Guide) -> Result<Plane> {
    Ok(two_stage(p, sigma, profile, Some(&guide.stage1), Some(&guide.stage2))?.estimate)
}

/// PBM3D: joint denoising through `cfg.transform` with shared grouping.
pub fn denoise_polarization(img: &CameraImage, cfg: &Pbm3dConfig) -> Result<CameraImage> {
    denoise_polarization_traced(img, cfg).map(|(out, _)| out)
}

/// Grayscale BM3D on each camera component separately.
pub fn denoise_per_channel(img: &CameraImage, sigma: f64, profile: &DenoiseProfile) -> Result<CameraImage> {
    let cfg = Pbm3dConfig::new(ChannelTransform::identity(), sigma)
        .with_profile(profile.clone())
        .with_grouping(Grouping::Independent);
    denoise_polarization(img, &cfg)
}

/// Grayscale BM3D on each (normalized) Stokes component separately.
pub fn denoise_stokes(img: &CameraImage, sigma: f64, profile: &DenoiseProfile) -> Result<CameraImage> {
    let cfg = Pbm3dConfig::new(presets::stokes(), sigma)
        .with_profile(profile.clone())
        .with_grouping(Grouping::Independent);
    denoise_polarization(img, &cfg)
}

/// Denoising methods compared by the evaluation tools.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    /// Joint denoising with shared grouping.
    Pbm3d,
    /// BM3D on each camera component.
    Bm3dPerChannel,
    /// BM3D on each Stokes component.
    Bm3dStokes,
    /// Returns the input unchanged.
    None,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Pbm3d, Method::Bm3dPerChannel, Method::Bm3dStokes, Method::None];

    pub fn label(self) -> &'static str {
        match self {
            Method::Pbm3d => "pbm3d",
            Method::Bm3dPerChannel => "bm3d",
            Method::Bm3dStokes => "bm3d-stokes",
            Method::None => "none",
        }
    }

    /// Runs the method; `transform` is only used by [`Method::Pbm3d`].
    pub fn run(
        self,
        noisy: &CameraImage,
        sigma: f64,
        transform: &ChannelTransform,
        profile: &DenoiseProfile,
    ) -> Result<CameraImage> {
        match self {
            Method::Pbm3d => denoise_polarization(
                noisy,
                &Pbm3dConfig::new(transform.clone(), sigma).with_profile(profile.clone()),
            ),
            Method::Bm3dPerChannel => denoise_per_channel(noisy, sigma, profile),
            Method::Bm3dStokes => denoise_stokes(noisy, sigma, profile),
            Method::None => Ok(noisy.clone()),
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pbm3d" => Ok(Method::Pbm3d),
            "bm3d" | "bm3d-per-channel" => Ok(Method::Bm3dPerChannel),
            "bm3d-stokes" => Ok(Method::Bm3dStokes),
            "none" => Ok(Method::None),
            _ => Err(Error::Lookup {
                kind: "method",
                name: s.to_string(),
            }),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigma_propagation() {
        let s = 0.09;
        assert_eq!(channel_sigmas(&ChannelTransform::identity(), s), [s, s, s]);
        let opp = channel_sigmas(&presets::opponent(), s);
        assert!((opp[0] - s / 3f64.sqrt()).abs() < 1e-15);
        let st = channel_sigmas(&presets::stokes(), s);
        assert!((st[0] - s / 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn method_names() {
        for m in Method::ALL {
            assert_eq!(m.label().parse::<Method>().unwrap(), m);
        }
        assert!("zhao".parse::<Method>().is_err());
    }

    #[test]
    fn negative_sigma_rejected() {
        let img = CameraImage::unpolarized(Plane::filled(16, 16, 0.5)).unwrap();
        let cfg = Pbm3dConfig::new(presets::opponent(), -0.1);
        assert!(matches!(denoise_polarization(&img, &cfg), Err(Error::Validation(_))));
    }
}
