//! Dataset plumbing: triples on disk, TOML manifests, frame averaging,
//! false-colour renders and synthetic fixtures.
//!
//! A manifest lists one `[[entry]]` per capture:
//!
//! ```toml
//! [[entry]]
//! id = "garden"
//! i0 = "garden_i0.pfm"
//! i45 = "garden_i45.pfm"
//! i90 = "garden_i90.pfm"
//! truth_i0 = "garden_avg_i0.pfm"   # optional, all three or none
//! truth_i45 = "garden_avg_i45.pfm"
//! truth_i90 = "garden_avg_i90.pfm"
//! sigma = 0.026                     # optional
//! ```
//!
//! Relative paths are resolved against the manifest's directory.

mod fixture;
mod io;

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use fixture::{make_fixture, FixtureKind};
pub use io::{read_plane, write_plane, write_ppm, PlaneFormat, TriplePaths};

use crate::error::{Error, Result};
use crate::plane::Plane;
use crate::polar::{compute_aop, compute_dop, stokes_from_camera, CameraImage, DEFAULT_DOP_EPS};

pub fn load_triple(paths: &TriplePaths) -> Result<CameraImage> {
    let [a, b, c] = paths.as_array().map(read_plane);
    let planes = [a?, b?, c?];
    for p in &planes[1..] {
        if p.dims() != planes[0].dims() {
            return Err(Error::Dimensions {
                expected: planes[0].dims(),
                found: p.dims(),
            });
        }
    }
    CameraImage::from_planes(planes)
}

pub fn save_triple(img: &CameraImage, paths: &TriplePaths, format: PlaneFormat, clip: bool) -> Result<()> {
    for (plane, path) in img.planes().iter().zip(paths.as_array()) {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        write_plane(path, plane, format, clip)?;
    }
    Ok(())
}

/// Saves `img` as `{stem}_i0.{ext}` etc. and returns the paths written.
pub fn save_stem(img: &CameraImage, stem: &Path, format: PlaneFormat, clip: bool) -> Result<TriplePaths> {
    let paths = TriplePaths::from_stem(stem, format.extension());
    save_triple(img, &paths, format, clip)?;
    Ok(paths)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub id: String,
    pub noisy: TriplePaths,
    pub truth: Option<TriplePaths>,
    pub sigma: Option<f64>,
}

impl ManifestEntry {
    pub fn load(&self) -> Result<CameraImage> {
        load_triple(&self.noisy)
    }

    pub fn load_truth(&self) -> Result<Option<CameraImage>> {
        self.truth.as_ref().map(load_triple).transpose()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEntry {
    id: String,
    i0: PathBuf,
    i45: PathBuf,
    i90: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    truth_i0: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    truth_i45: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    truth_i90: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sigma: Option<f64>,
}

#[derive(Serialize, Deserialize, Default)]
struct RawManifest {
    #[serde(default)]
    entry: Vec<RawEntry>,
}

fn relative_to(path: &Path, dir: &Path) -> PathBuf {
    path.strip_prefix(dir).map(Path::to_path_buf).unwrap_or_else(|_| path.to_path_buf())
}

impl DatasetManifest {
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let raw: RawManifest = toml::from_str(text).map_err(|e| Error::validation(format!("manifest: {e}")))?;
        let mut seen = HashSet::new();
        let mut entries = Vec::with_capacity(raw.entry.len());
        for e in raw.entry {
            if !seen.insert(e.id.clone()) {
                return Err(Error::validation(format!("duplicate manifest id `{}`", e.id)));
            }
            if let Some(s) = e.sigma {
                if !(s.is_finite() && s >= 0.0) {
                    return Err(Error::validation(format!("entry `{}`: sigma must be >= 0", e.id)));
                }
            }
            let truth = match (e.truth_i0, e.truth_i45, e.truth_i90) {
                (None, None, None) => None,
                (Some(a), Some(b), Some(c)) => Some(TriplePaths {
                    i0: base.join(a),
                    i45: base.join(b),
                    i90: base.join(c),
                }),
                _ => return Err(Error::validation(format!("entry `{}`: truth needs all three planes", e.id))),
            };
            entries.push(ManifestEntry {
                id: e.id,
                noisy: TriplePaths {
                    i0: base.join(e.i0),
                    i45: base.join(e.i45),
                    i90: base.join(e.i90),
                },
                truth,
                sigma: e.sigma,
            });
        }
        Ok(Self { entries })
    }

    /// Reads and validates a manifest; every referenced file must exist.
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m = Self::parse(&text, path.parent().unwrap_or(Path::new("")))?;
        for e in &m.entries {
            for p in e.noisy.as_array().into_iter().chain(e.truth.iter().flat_map(|t| t.as_array())) {
                if !p.exists() {
                    return Err(Error::MissingFile(p.to_path_buf()));
                }
            }
        }
        Ok(m)
    }

    /// Writes the manifest with paths relative to its own directory where possible.
    pub fn save(&self, path: &Path) -> Result<()> {
        let dir = path.parent().unwrap_or(Path::new(""));
        let rel = |p: &Path| relative_to(p, dir);
        let raw = RawManifest {
            entry: self
                .entries
                .iter()
                .map(|e| RawEntry {
                    id: e.id.clone(),
                    i0: rel(&e.noisy.i0),
                    i45: rel(&e.noisy.i45),
                    i90: rel(&e.noisy.i90),
                    truth_i0: e.truth.as_ref().map(|t| rel(&t.i0)),
                    truth_i45: e.truth.as_ref().map(|t| rel(&t.i45)),
                    truth_i90: e.truth.as_ref().map(|t| rel(&t.i90)),
                    sigma: e.sigma,
                })
                .collect(),
        };
        let text = toml::to_string(&raw).map_err(|e| Error::Internal(e.to_string()))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Per-pixel mean of aligned frames.
pub fn average_frames(frames: &[CameraImage]) -> Result<CameraImage> {
    let first = frames.first().ok_or_else(|| Error::validation("no frames to average"))?;
    let (w, h) = first.dims();
    let mut sums = [0, 1, 2].map(|_| vec![0.0; w * h]);
    for f in frames {
        if f.dims() != first.dims() {
            return Err(Error::Dimensions {
                expected: first.dims(),
                found: f.dims(),
            });
        }
        for (sum, plane) in sums.iter_mut().zip(f.planes()) {
            for (s, v) in sum.iter_mut().zip(plane.as_slice()) {
                *s += v;
            }
        }
    }
    let k = frames.len() as f64;
    let [a, b, c] = sums.map(|s| Plane::new(w, h, s.into_iter().map(|v| v / k).collect()));
    CameraImage::new(a?, b?, c?)
}

/// DoP as grey levels: black is 0, white is 0.5 and above.
pub fn render_dop(img: &CameraImage) -> Plane {
    let (dop, _) = compute_dop(&stokes_from_camera(img), DEFAULT_DOP_EPS);
    dop.map(|v| (2.0 * v).clamp(0.0, 1.0))
}

/// AoP on a cyclic hue wheel; undefined angles are black.
pub fn render_aop(img: &CameraImage) -> Vec<[f64; 3]> {
    let (aop, degenerate) = compute_aop(&stokes_from_camera(img));
    aop.as_slice()
        .iter()
        .zip(degenerate)
        .map(|(&a, dark)| if dark { [0.0; 3] } else { hue(a / std::f64::consts::PI + 0.5) })
        .collect()
}

fn hue(t: f64) -> [f64; 3] {
    let h = t.rem_euclid(1.0) * 6.0;
    let x = 1.0 - (h % 2.0 - 1.0).abs();
    match h as u32 {
        0 => [1.0, x, 0.0],
        1 => [x, 1.0, 0.0],
        2 => [0.0, 1.0, x],
        3 => [0.0, x, 1.0],
        4 => [x, 0.0, 1.0],
        _ => [1.0, 0.0, x],
    }
}
