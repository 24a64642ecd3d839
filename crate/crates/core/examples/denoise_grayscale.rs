//! Plain two-stage BM3D on a single plane.

use polar_bm3d::bm3d::{denoise_grayscale, DenoiseProfile};
use polar_bm3d::dataset::{make_fixture, FixtureKind};
use polar_bm3d::noise::add_plane_noise;
use polar_bm3d::Plane;

fn psnr(a: &Plane, b: &Plane) -> f64 {
    let mse = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64;
    -10.0 * mse.log10()
}

fn main() -> polar_bm3d::Result<()> {
    let clean = make_fixture(FixtureKind::Unpolarized, 128, 2)?.i0().clone();
    for sigma in [0.02, 0.05, 0.1] {
        let noisy = add_plane_noise(&clean, sigma, 7, 0)?;
        for (name, profile) in [("default", DenoiseProfile::default()), ("fast", DenoiseProfile::fast())] {
            let out = denoise_grayscale(&noisy, sigma, &profile)?;
            println!("sigma {sigma:<5} {name:<7}: {:.2} dB -> {:.2} dB", psnr(&noisy, &clean), psnr(&out, &clean));
        }
    }
    Ok(())
}
