//! Building a low-noise reference by averaging many noisy captures.

use polar_bm3d::dataset::{average_frames, make_fixture, FixtureKind};
use polar_bm3d::noise::{add_noise, NoiseSpec};
use polar_bm3d::CameraImage;

fn residual_std(a: &CameraImage, b: &CameraImage) -> f64 {
    let d: Vec<f64> = a
        .planes()
        .iter()
        .zip(b.planes())
        .flat_map(|(p, q)| p.as_slice().iter().zip(q.as_slice()).map(|(x, y)| x - y).collect::<Vec<_>>())
        .collect();
    (d.iter().map(|v| v * v).sum::<f64>() / d.len() as f64).sqrt()
}

fn main() -> polar_bm3d::Result<()> {
    let clean = make_fixture(FixtureKind::Textured, 96, 5)?;
    let frames = (0..64).map(|s| add_noise(&clean, NoiseSpec::new(0.08, s)?)).collect::<Result<Vec<_>, _>>()?;
    for k in [1, 4, 16, 64] {
        let avg = average_frames(&frames[..k])?;
        println!("{k:>2} frames: residual std {:.4} (expected {:.4})", residual_std(&avg, &clean), 0.08 / (k as f64).sqrt());
    }
    Ok(())
}
