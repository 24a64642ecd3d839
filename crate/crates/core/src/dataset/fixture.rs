//! Synthetic captures with exact ground truth.
//!
//! Every kind is built from a luminance plane `L` plus DoP `p` and AoP `φ`
//! fields, giving `S0 = 2L`, `S1 = S0·p·cos2φ`, `S2 = S0·p·sin2φ`.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, FRAC_PI_4, PI};
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::noise::stream_rng;
use crate::plane::Plane;
use crate::polar::CameraImage;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FixtureKind {
    /// Four quadrants and a disc of constant S0, DoP and AoP. The top-left
    /// quadrant has DoP 0.5 at AoP 0.
    UniformDop,
    /// Fractal texture with occluding shapes; each shape carries its own
    /// slowly varying polarization.
    Textured,
    /// The textured luminance with no polarization at all.
    Unpolarized,
}

impl FixtureKind {
    pub const ALL: [FixtureKind; 3] = [FixtureKind::UniformDop, FixtureKind::Textured, FixtureKind::Unpolarized];

    pub fn label(self) -> &'static str {
        match self {
            FixtureKind::UniformDop => "uniform-dop",
            FixtureKind::Textured => "textured",
            FixtureKind::Unpolarized => "unpolarized",
        }
    }
}

impl FromStr for FixtureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FixtureKind::ALL.into_iter().find(|k| k.label() == s).ok_or_else(|| Error::Lookup {
            kind: "fixture kind",
            name: s.to_string(),
        })
    }
}

pub fn make_fixture(kind: FixtureKind, size: usize, seed: u64) -> Result<CameraImage> {
    if size < 32 {
        return Err(Error::validation(format!("fixture size {size} is below 32")));
    }
    match kind {
        FixtureKind::UniformDop => uniform_dop(size, seed),
        FixtureKind::Textured => {
            let scene = Scene::new(size, seed);
            let (dop, aop) = scene.polarization(seed);
            from_polar(&scene.luminance, &dop, &aop)
        }
        FixtureKind::Unpolarized => CameraImage::unpolarized(Scene::new(size, seed).luminance),
    }
}

fn from_polar(l: &Plane, dop: &Plane, aop: &Plane) -> Result<CameraImage> {
    let (w, h) = l.dims();
    let at = |k: usize| (l.as_slice()[k], dop.as_slice()[k], aop.as_slice()[k]);
    let i0 = Plane::from_fn(w, h, |r, c| {
        let (l, p, a) = at(r * w + c);
        l * (1.0 + p * (2.0 * a).cos())
    });
    let i45 = Plane::from_fn(w, h, |r, c| {
        let (l, p, a) = at(r * w + c);
        l * (1.0 + p * (2.0 * a).sin())
    });
    let i90 = Plane::from_fn(w, h, |r, c| {
        let (l, p, a) = at(r * w + c);
        l * (1.0 - p * (2.0 * a).cos())
    });
    CameraImage::new(i0, i45, i90)
}

fn uniform_dop(size: usize, seed: u64) -> Result<CameraImage> {
    let mut rng = stream_rng(seed, 0);
    let half = size / 2;
    let (cr, cc) = (rng.random_range(size / 3..=2 * size / 3), rng.random_range(size / 3..=2 * size / 3));
    let radius = rng.random_range(size as f64 / 10.0..=size as f64 / 6.0);
    // (luminance, DoP, AoP) per region: four quadrants in reading order, then the disc.
    let regions = [
        (0.4, 0.5, 0.0),
        (0.3, 0.2, FRAC_PI_4),
        (0.2, 0.0, 0.0),
        (0.45, 0.3, -FRAC_PI_3),
        (0.25, 0.8, FRAC_PI_2),
    ];
    let label = |r: usize, c: usize| {
        let (dr, dc) = (r as f64 - cr as f64, c as f64 - cc as f64);
        if dr * dr + dc * dc <= radius * radius {
            4
        } else {
            usize::from(r >= half) * 2 + usize::from(c >= half)
        }
    };
    let field = |f: fn(&(f64, f64, f64)) -> f64| Plane::from_fn(size, size, |r, c| f(&regions[label(r, c)]));
    from_polar(&field(|t| t.0), &field(|t| t.1), &field(|t| t.2))
}

/// Smoothly interpolated lattice noise in `[0, 1]`.
fn value_noise(size: usize, cell: usize, rng: &mut ChaCha8Rng) -> Plane {
    let n = size / cell + 2;
    let lattice: Vec<f64> = (0..n * n).map(|_| rng.random()).collect();
    let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
    Plane::from_fn(size, size, |r, c| {
        let (y, x) = (r as f64 / cell as f64, c as f64 / cell as f64);
        let (y0, x0) = (y.floor() as usize, x.floor() as usize);
        let (ty, tx) = (smooth(y - y0 as f64), smooth(x - x0 as f64));
        let v = |i: usize, j: usize| lattice[i * n + j];
        let top = v(y0, x0) * (1.0 - tx) + v(y0, x0 + 1) * tx;
        let bottom = v(y0 + 1, x0) * (1.0 - tx) + v(y0 + 1, x0 + 1) * tx;
        top * (1.0 - ty) + bottom * ty
    })
}

/// Octave sum from `coarsest` down to 2-pixel cells, rescaled to `[0, 1]`.
fn fractal(size: usize, coarsest: usize, persistence: f64, rng: &mut ChaCha8Rng) -> Plane {
    let mut acc = Plane::zeros(size, size);
    let (mut cell, mut amp) = (coarsest.max(2), 1.0);
    loop {
        let octave = value_noise(size, cell, rng);
        for (a, v) in acc.as_mut_slice().iter_mut().zip(octave.as_slice()) {
            *a += amp * v;
        }
        if cell <= 2 {
            break;
        }
        cell /= 2;
        amp *= persistence;
    }
    let (lo, hi) = acc.as_slice().iter().fold((f64::MAX, f64::MIN), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    acc.map(|v| (v - lo) / (hi - lo).max(1e-12))
}

enum Shape {
    Ellipse { r: f64, c: f64, ry: f64, rx: f64, angle: f64 },
    Rect { r0: f64, c0: f64, r1: f64, c1: f64 },
}

impl Shape {
    fn contains(&self, r: f64, c: f64) -> bool {
        match *self {
            Shape::Ellipse { r: cr, c: cc, ry, rx, angle } => {
                let (dy, dx) = (r - cr, c - cc);
                let (s, co) = angle.sin_cos();
                let (u, v) = (dx * co + dy * s, -dx * s + dy * co);
                (u / rx).powi(2) + (v / ry).powi(2) <= 1.0
            }
            Shape::Rect { r0, c0, r1, c1 } => r >= r0 && r < r1 && c >= c0 && c < c1,
        }
    }
}

struct Scene {
    size: usize,
    luminance: Plane,
    /// 0 for background, `k + 1` for the k-th shape (later shapes occlude earlier ones).
    labels: Vec<usize>,
    shapes: usize,
}

impl Scene {
    fn new(size: usize, seed: u64) -> Self {
        let mut rng = stream_rng(seed, 0);
        let s = size as f64;
        let background = fractal(size, size / 2, 0.6, &mut rng);
        let shapes: Vec<(Shape, f64, f64)> = (0..rng.random_range(6..=10))
            .map(|_| {
                let shape = if rng.random_bool(0.5) {
                    Shape::Ellipse {
                        r: rng.random_range(0.0..s),
                        c: rng.random_range(0.0..s),
                        ry: rng.random_range(s / 12.0..s / 4.0),
                        rx: rng.random_range(s / 12.0..s / 4.0),
                        angle: rng.random_range(0.0..PI),
                    }
                } else {
                    let (r0, c0) = (rng.random_range(-s / 8.0..s), rng.random_range(-s / 8.0..s));
                    Shape::Rect {
                        r0,
                        c0,
                        r1: r0 + rng.random_range(s / 8.0..s / 2.5),
                        c1: c0 + rng.random_range(s / 8.0..s / 2.5),
                    }
                };
                (shape, rng.random::<f64>(), rng.random_range(0.2..0.6))
            })
            .collect();
        let detail = fractal(size, size / 8, 0.7, &mut rng);
        let mut labels = vec![0; size * size];
        let mut tone = background.clone();
        for r in 0..size {
            for c in 0..size {
                let (y, x) = (r as f64 + 0.5, c as f64 + 0.5);
                if let Some(k) = shapes.iter().rposition(|(sh, _, _)| sh.contains(y, x)) {
                    let (_, base, texture) = shapes[k];
                    labels[r * size + c] = k + 1;
                    tone.set(r, c, (1.0 - texture) * base + texture * detail.get(r, c));
                }
            }
        }
        // Dark enough that roughly a quarter of pixels show a visible DoP bias at σ = 0.02.
        let luminance = tone.map(|t| 0.05 + 0.6 * t.clamp(0.0, 1.0));
        Scene {
            size,
            luminance,
            labels,
            shapes: shapes.len(),
        }
    }

    fn polarization(&self, seed: u64) -> (Plane, Plane) {
        let size = self.size;
        let mut rng = stream_rng(seed, 1);
        let dop_field = value_noise(size, (size / 4).max(2), &mut rng);
        let aop_field = value_noise(size, (size / 3).max(2), &mut rng);
        // (DoP, AoP) per region; the background is index 0.
        let mut params = vec![(0.05, 0.0)];
        params.extend((0..self.shapes).map(|_| (rng.random_range(0.1..0.6), rng.random_range(-FRAC_PI_2..FRAC_PI_2))));
        let dop = Plane::from_fn(size, size, |r, c| {
            let k = r * size + c;
            let (base, _) = params[self.labels[k]];
            let spread = if self.labels[k] == 0 { 0.2 } else { 0.1 };
            (base + spread * (dop_field.as_slice()[k] - 0.25)).clamp(0.0, 1.0 / self.luminance.as_slice()[k] - 1.0)
        });
        let aop = Plane::from_fn(size, size, |r, c| {
            let k = r * size + c;
            let (_, base) = params[self.labels[k]];
            let spread = if self.labels[k] == 0 { PI } else { 0.4 };
            base + spread * (aop_field.as_slice()[k] - 0.5)
        });
        (dop, aop)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polar::{compute_dop, stokes_from_camera};

    #[test]
    fn unpolarized_has_zero_dop() {
        let img = make_fixture(FixtureKind::Unpolarized, 48, 3).unwrap();
        let (dop, _) = compute_dop(&stokes_from_camera(&img), 1e-8);
        assert!(dop.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn uniform_dop_quadrant() {
        let img = make_fixture(FixtureKind::UniformDop, 64, 9).unwrap();
        let s = stokes_from_camera(&img);
        // The disc never reaches the top-left corner.
        for (r, c) in [(0, 0), (3, 7), (10, 2)] {
            let ratio = s.s1().get(r, c) / s.s0().get(r, c);
            assert!((ratio - 0.5).abs() < 1e-12);
            assert!(s.s2().get(r, c).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_and_seed_dependent() {
        for kind in FixtureKind::ALL {
            let a = make_fixture(kind, 40, 5).unwrap();
            assert_eq!(a, make_fixture(kind, 40, 5).unwrap());
            assert_ne!(a, make_fixture(kind, 40, 6).unwrap());
            assert!(a.planes().iter().all(|p| p.as_slice().iter().all(|v| (0.0..=1.0).contains(v))));
        }
    }

    #[test]
    fn rejects_small_and_unknown() {
        assert!(make_fixture(FixtureKind::Textured, 31, 0).is_err());
        assert!("marble".parse::<FixtureKind>().is_err());
        assert_eq!("uniform-dop".parse::<FixtureKind>().unwrap(), FixtureKind::UniformDop);
    }
}
