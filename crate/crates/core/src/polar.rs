//! Camera components, Stokes components and the linear algebra between them.
//!
//! A polarimeter measures three intensities per pixel through polarizers at
//! 0°, 45° and 90° from horizontal. Every other quantity in the crate (Stokes
//! planes, degree and angle of polarization, luminance–polarization channels)
//! is a function of that triple.

use std::f64::consts::FRAC_PI_2;

use nalgebra::Matrix3;

use crate::error::{Error, Result};
use crate::plane::Plane;

/// Row L1 norms must equal one within this tolerance.
pub const ROW_NORM_TOLERANCE: f64 = 1e-9;
/// Transforms with a 2-norm condition number at or above this are rejected.
pub const MAX_CONDITION: f64 = 1e6;
/// Default S0 floor below which the degree of polarization is masked.
pub const DEFAULT_DOP_EPS: f64 = 1e-8;

fn check_triple(planes: &[Plane; 3]) -> Result<()> {
    for p in &planes[1..] {
        planes[0].check_same_dims(p)?;
    }
    if let Some(k) = planes.iter().position(|p| !p.is_finite()) {
        return Err(Error::validation(format!("plane {k} contains non-finite samples")));
    }
    Ok(())
}

/// Raw polarimeter measurement: intensities behind 0°, 45° and 90° polarizers.
///
/// Values are nominally in `[0, 1]` but are never clipped.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraImage {
    planes: [Plane; 3],
}

impl CameraImage {
    pub fn new(i0: Plane, i45: Plane, i90: Plane) -> Result<Self> {
        Self::from_planes([i0, i45, i90])
    }

    pub fn from_planes(planes: [Plane; 3]) -> Result<Self> {
        check_triple(&planes)?;
        Ok(Self { planes })
    }

    /// The same plane replicated into all three components (an unpolarized scene).
    pub fn unpolarized(intensity: Plane) -> Result<Self> {
        Self::from_planes([intensity.clone(), intensity.clone(), intensity])
    }

    pub fn i0(&self) -> &Plane {
        &self.planes[0]
    }

    pub fn i45(&self) -> &Plane {
        &self.planes[1]
    }

    pub fn i90(&self) -> &Plane {
        &self.planes[2]
    }

    pub fn planes(&self) -> &[Plane; 3] {
        &self.planes
    }

    pub fn into_planes(self) -> [Plane; 3] {
        self.planes
    }

    pub fn width(&self) -> usize {
        self.planes[0].width()
    }

    pub fn height(&self) -> usize {
        self.planes[0].height()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.planes[0].dims()
    }

    /// Applies `f` to every sample of every component.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> CameraImage {
        CameraImage {
            planes: [self.planes[0].map(&f), self.planes[1].map(&f), self.planes[2].map(&f)],
        }
    }

    pub fn max_abs_diff(&self, other: &CameraImage) -> f64 {
        self.planes
            .iter()
            .zip(&other.planes)
            .map(|(a, b)| a.max_abs_diff(b))
            .fold(0.0, f64::max)
    }

    pub fn crop(&self, row: usize, col: usize, width: usize, height: usize) -> Result<CameraImage> {
        Ok(CameraImage {
            planes: [
                self.planes[0].crop(row, col, width, height)?,
                self.planes[1].crop(row, col, width, height)?,
                self.planes[2].crop(row, col, width, height)?,
            ],
        })
    }

    /// Centered crop, or the whole image when it is already small enough.
    pub fn center_crop(&self, width: usize, height: usize) -> Result<CameraImage> {
        let w = width.min(self.width());
        let h = height.min(self.height());
        self.crop((self.height() - h) / 2, (self.width() - w) / 2, w, h)
    }
}

/// Linear Stokes components S0, S1, S2.
#[derive(Debug, Clone, PartialEq)]
pub struct StokesImage {
    planes: [Plane; 3],
}

impl StokesImage {
    pub fn new(s0: Plane, s1: Plane, s2: Plane) -> Result<Self> {
        let planes = [s0, s1, s2];
        check_triple(&planes)?;
        Ok(Self { planes })
    }

    pub fn s0(&self) -> &Plane {
        &self.planes[0]
    }

    pub fn s1(&self) -> &Plane {
        &self.planes[1]
    }

    pub fn s2(&self) -> &Plane {
        &self.planes[2]
    }

    pub fn planes(&self) -> &[Plane; 3] {
        &self.planes
    }

    pub fn dims(&self) -> (usize, usize) {
        self.planes[0].dims()
    }

    pub fn scaled(&self, k: f64) -> StokesImage {
        StokesImage {
            planes: [
                self.planes[0].map(|v| v * k),
                self.planes[1].map(|v| v * k),
                self.planes[2].map(|v| v * k),
            ],
        }
    }
}

/// Per-pixel `out = m · (a, b, c)`.
fn mix(m: &[[f64; 3]; 3], planes: &[Plane; 3]) -> [Plane; 3] {
    let (w, h) = planes[0].dims();
    let (a, b, c) = (planes[0].as_slice(), planes[1].as_slice(), planes[2].as_slice());
    let channel = |row: &[f64; 3]| {
        let data = a
            .iter()
            .zip(b)
            .zip(c)
            .map(|((&x, &y), &z)| row[0] * x + row[1] * y + row[2] * z)
            .collect();
        Plane::new(w, h, data).expect("dimensions preserved")
    };
    [channel(&m[0]), channel(&m[1]), channel(&m[2])]
}

/// `S0 = I0 + I90`, `S1 = I0 − I90`, `S2 = −I0 + 2·I45 − I90`.
pub fn stokes_from_camera(img: &CameraImage) -> StokesImage {
    const M: [[f64; 3]; 3] = [[1.0, 0.0, 1.0], [1.0, 0.0, -1.0], [-1.0, 2.0, -1.0]];
    StokesImage {
        planes: mix(&M, &img.planes),
    }
}

/// Exact inverse of [`stokes_from_camera`].
pub fn camera_from_stokes(s: &StokesImage) -> CameraImage {
    // I0 = (S0+S1)/2, I45 = (S0+S2)/2, I90 = (S0−S1)/2
    const M: [[f64; 3]; 3] = [[0.5, 0.5, 0.0], [0.5, 0.0, 0.5], [0.5, -0.5, 0.0]];
    CameraImage {
        planes: mix(&M, &s.planes),
    }
}

/// Degree and angle of linear polarization with validity masks.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarizationMaps {
    /// `sqrt(S1² + S2²) / S0`, not clamped; 0 where masked.
    pub dop: Plane,
    /// `½·atan2(S2, S1)` in `(−π/2, π/2]`; 0 where `aop_mask` is set.
    pub aop: Plane,
    /// Pixels where `S0 ≤ eps`.
    pub mask: Vec<bool>,
    /// Pixels where `S1 = S2 = 0` and the angle is undefined.
    pub aop_mask: Vec<bool>,
}

/// Degree of polarization and its mask.
pub fn compute_dop(s: &StokesImage, eps: f64) -> (Plane, Vec<bool>) {
    let (w, h) = s.dims();
    let mut mask = vec![false; w * h];
    let data = s.planes[0]
        .as_slice()
        .iter()
        .zip(s.planes[1].as_slice())
        .zip(s.planes[2].as_slice())
        .zip(mask.iter_mut())
        .map(|(((&s0, &s1), &s2), m)| {
            if s0 > eps {
                s1.hypot(s2) / s0
            } else {
                *m = true;
                0.0
            }
        })
        .collect();
    (Plane::new(w, h, data).expect("dimensions preserved"), mask)
}

/// Angle of polarization of a single Stokes pair, folded into `(−π/2, π/2]`.
#[inline]
pub fn aop_angle(s1: f64, s2: f64) -> f64 {
    let a = 0.5 * s2.atan2(s1);
    // atan2(−0, x<0) = −π
    if a <= -FRAC_PI_2 {
        a + std::f64::consts::PI
    } else {
        a
    }
}

/// Angle of polarization and its degeneracy mask.
pub fn compute_aop(s: &StokesImage) -> (Plane, Vec<bool>) {
    let (w, h) = s.dims();
    let mut mask = vec![false; w * h];
    let data = s.planes[1]
        .as_slice()
        .iter()
        .zip(s.planes[2].as_slice())
        .zip(mask.iter_mut())
        .map(|((&s1, &s2), m)| {
            if s1 == 0.0 && s2 == 0.0 {
                *m = true;
                0.0
            } else {
                aop_angle(s1, s2)
            }
        })
        .collect();
    (Plane::new(w, h, data).expect("dimensions preserved"), mask)
}

pub fn polarization_maps(s: &StokesImage, eps: f64) -> PolarizationMaps {
    let (dop, mask) = compute_dop(s, eps);
    let (aop, aop_mask) = compute_aop(s);
    PolarizationMaps {
        dop,
        aop,
        mask,
        aop_mask,
    }
}

/// 2-norm condition number of a 3×3 matrix (infinite when singular).
pub fn condition_number(m: &[[f64; 3]; 3]) -> f64 {
    let mat = to_matrix(m);
    let sv = mat.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Sum of absolute values of each row.
pub fn row_l1_norms(m: &[[f64; 3]; 3]) -> [f64; 3] {
    m.map(|r| r.iter().map(|v| v.abs()).sum())
}

fn to_matrix(m: &[[f64; 3]; 3]) -> Matrix3<f64> {
    Matrix3::from_fn(|r, c| m[r][c])
}

/// Invertible 3×3 map from camera components `(I0, I45, I90)` to
/// luminance–polarization channels `(P0, P1, P2)`, with unit L1 rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelTransform {
    m: [[f64; 3]; 3],
    inv: [[f64; 3]; 3],
}

impl ChannelTransform {
    /// Validates row normalization and conditioning.
    pub fn new(m: [[f64; 3]; 3]) -> Result<Self> {
        if m.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::validation("transform has non-finite entries"));
        }
        for (k, norm) in row_l1_norms(&m).iter().enumerate() {
            if (norm - 1.0).abs() > ROW_NORM_TOLERANCE {
                return Err(Error::validation(format!(
                    "transform row {k} has L1 norm {norm}, expected 1"
                )));
            }
        }
        Self::invertible(m)
    }

    /// Checks conditioning only; used for matrices whose rows are known
    /// normalized up to rounding.
    pub(crate) fn invertible(m: [[f64; 3]; 3]) -> Result<Self> {
        let condition = condition_number(&m);
        if !(condition < MAX_CONDITION) {
            return Err(Error::Singular { condition });
        }
        let inv = to_matrix(&m)
            .try_inverse()
            .ok_or(Error::Singular { condition })?;
        let inv = [0, 1, 2].map(|r| [0, 1, 2].map(|c| inv[(r, c)]));
        Ok(Self { m, inv })
    }

    pub fn identity() -> Self {
        Self::new([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]).expect("identity is valid")
    }

    pub fn matrix(&self) -> &[[f64; 3]; 3] {
        &self.m
    }

    pub fn inverse_matrix(&self) -> &[[f64; 3]; 3] {
        &self.inv
    }

    pub fn condition_number(&self) -> f64 {
        condition_number(&self.m)
    }
}

/// `(P0, P1, P2) = T · (I0, I45, I90)` per pixel.
pub fn apply_transform(t: &ChannelTransform, img: &CameraImage) -> [Plane; 3] {
    mix(&t.m, &img.planes)
}

/// Maps channel planes back to camera components with `T⁻¹`.
pub fn invert_transform(t: &ChannelTransform, channels: &[Plane; 3]) -> Result<CameraImage> {
    for p in &channels[1..] {
        channels[0].check_same_dims(p)?;
    }
    CameraImage::from_planes(mix(&t.inv, channels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_4;

    fn px(v: f64) -> Plane {
        Plane::filled(1, 1, v)
    }

    fn camera(i0: f64, i45: f64, i90: f64) -> CameraImage {
        CameraImage::new(px(i0), px(i45), px(i90)).unwrap()
    }

    fn stokes(s0: f64, s1: f64, s2: f64) -> StokesImage {
        StokesImage::new(px(s0), px(s1), px(s2)).unwrap()
    }

    fn values(planes: &[Plane; 3]) -> [f64; 3] {
        [planes[0].get(0, 0), planes[1].get(0, 0), planes[2].get(0, 0)]
    }

    #[test]
    fn stokes_of_unpolarized_light() {
        let c = 0.37;
        let s = stokes_from_camera(&camera(c, c, c));
        assert_eq!(values(s.planes()), [2.0 * c, 0.0, 0.0]);
    }

    #[test]
    fn stokes_of_malus_cases() {
        assert_eq!(values(stokes_from_camera(&camera(1.0, 0.5, 0.0)).planes()), [1.0, 1.0, 0.0]);
        assert_eq!(values(stokes_from_camera(&camera(0.0, 0.5, 1.0)).planes()), [1.0, -1.0, 0.0]);
    }

    #[test]
    fn camera_from_known_stokes() {
        assert_eq!(values(camera_from_stokes(&stokes(0.8, 0.0, 0.0)).planes()), [0.4, 0.4, 0.4]);
        assert_eq!(values(camera_from_stokes(&stokes(1.0, 1.0, 0.0)).planes()), [1.0, 0.5, 0.0]);
    }

    #[test]
    fn mismatched_planes_rejected() {
        let err = CameraImage::new(Plane::zeros(2, 2), Plane::zeros(2, 2), Plane::zeros(3, 2));
        assert!(matches!(err, Err(Error::Dimensions { .. })));
        let err = StokesImage::new(Plane::zeros(2, 2), Plane::zeros(2, 3), Plane::zeros(2, 2));
        assert!(matches!(err, Err(Error::Dimensions { .. })));
    }

    #[test]
    fn non_finite_rejected() {
        let err = CameraImage::new(px(f64::NAN), px(0.0), px(0.0));
        assert!(matches!(err, Err(Error::Validation(_))));
    }

    #[test]
    fn dop_examples() {
        let (d, m) = compute_dop(&stokes(1.0, 1.0, 0.0), DEFAULT_DOP_EPS);
        assert_eq!(d.get(0, 0), 1.0);
        assert!(!m[0]);
        let (d, _) = compute_dop(&stokes(0.6, 0.0, 0.0), DEFAULT_DOP_EPS);
        assert_eq!(d.get(0, 0), 0.0);
        let (d, _) = compute_dop(&stokes(1.0, 0.6, 0.8), DEFAULT_DOP_EPS);
        assert!((d.get(0, 0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn dop_masks_dark_pixels() {
        let (d, m) = compute_dop(&stokes(0.0, 0.1, 0.0), DEFAULT_DOP_EPS);
        assert_eq!(d.get(0, 0), 0.0);
        assert!(m[0]);
    }

    #[test]
    fn dop_is_not_clamped() {
        let (d, _) = compute_dop(&stokes(0.1, 0.3, 0.0), DEFAULT_DOP_EPS);
        assert!((d.get(0, 0) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn aop_examples() {
        assert_eq!(aop_angle(1.0, 0.0), 0.0);
        assert!((aop_angle(0.0, 1.0) - FRAC_PI_4).abs() < 1e-15);
        assert_eq!(aop_angle(-1.0, 0.0), FRAC_PI_2);
        assert_eq!(aop_angle(-1.0, -0.0), FRAC_PI_2);
        let (_, mask) = compute_aop(&stokes(1.0, 0.0, 0.0));
        assert!(mask[0]);
    }

    const T_OPP: [[f64; 3]; 3] = [
        [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
        [0.5, 0.0, -0.5],
        [0.25, -0.5, 0.25],
    ];
    const T_STOKES: [[f64; 3]; 3] = [[0.5, 0.0, 0.5], [0.5, 0.0, -0.5], [-0.25, 0.5, -0.25]];

    #[test]
    fn transform_examples() {
        let id = ChannelTransform::identity();
        let img = camera(0.2, 0.3, 0.4);
        assert_eq!(values(&apply_transform(&id, &img)), [0.2, 0.3, 0.4]);

        let ts = ChannelTransform::new(T_STOKES).unwrap();
        let c = 0.6;
        let p = values(&apply_transform(&ts, &camera(c, c, c)));
        assert!((p[0] - c).abs() < 1e-15 && p[1].abs() < 1e-15 && p[2].abs() < 1e-15);

        let to = ChannelTransform::new(T_OPP).unwrap();
        let p = values(&apply_transform(&to, &camera(1.0, 0.0, 0.0)));
        assert!((p[0] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(p[1], 0.5);
        assert_eq!(p[2], 0.25);
    }

    #[test]
    fn singular_transform_rejected() {
        let m = [[0.5, 0.5, 0.0], [0.5, 0.5, 0.0], [0.0, 0.0, 1.0]];
        assert!(matches!(ChannelTransform::new(m), Err(Error::Singular { .. })));
        let unnormalized = [[1.0, 1.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(matches!(ChannelTransform::new(unnormalized), Err(Error::Validation(_))));
    }

    #[test]
    fn transform_roundtrip_on_pixel() {
        let t = ChannelTransform::new(T_OPP).unwrap();
        let img = camera(0.1, 0.7, 0.3);
        let back = invert_transform(&t, &apply_transform(&t, &img)).unwrap();
        assert!(back.max_abs_diff(&img) < 1e-14);
    }

    #[test]
    fn consistent_rewrite_zeroes_s2() {
        // I45 = (I0 + I90)/2 is the unpolarized-diagonal case
        let s = stokes_from_camera(&camera(0.8, 0.5, 0.2));
        assert!(s.s2().get(0, 0).abs() < 1e-15);
        assert!(s.s1().get(0, 0).abs() <= s.s0().get(0, 0));
    }
}
