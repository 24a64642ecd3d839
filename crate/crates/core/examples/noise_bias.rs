//! How noise inflates the measured DoP of unpolarized light, and how much of
//! that bias survives denoising.

use polar_bm3d::dataset::{make_fixture, FixtureKind};
use polar_bm3d::noise::{add_noise, dop_bias_probe, estimate_sigma, NoiseSpec};
use polar_bm3d::optimize::presets;
use polar_bm3d::pbm3d::{denoise_polarization, Pbm3dConfig};
use polar_bm3d::polar::{compute_dop, stokes_from_camera};

fn main() -> polar_bm3d::Result<()> {
    println!("mean DoP of an unpolarized pixel, sigma 0.02:");
    for intensity in [0.1, 0.2, 0.5, 1.0, 2.0] {
        println!("  S0 = {intensity:<4} -> {:.4}", dop_bias_probe(intensity, 0.02, 200_000, 0)?);
    }

    let clean = make_fixture(FixtureKind::Unpolarized, 96, 1)?;
    let noisy = add_noise(&clean, NoiseSpec::new(0.02, 1)?)?;
    println!("estimated sigma {:.4}", estimate_sigma(&noisy)?);
    let den = denoise_polarization(&noisy, &Pbm3dConfig::new(presets::opt_global(), 0.02))?;
    let mean_dop = |img| compute_dop(&stokes_from_camera(img), 1e-8).0.mean();
    println!("scene mean DoP: clean {:.4}, noisy {:.4}, denoised {:.4}", mean_dop(&clean), mean_dop(&noisy), mean_dop(&den));
    Ok(())
}
