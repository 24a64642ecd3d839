//! Stokes parameters, DoP and AoP of a synthetic scene with known polarization.

use polar_bm3d::dataset::{make_fixture, FixtureKind};
use polar_bm3d::polar::{polarization_maps, stokes_from_camera};

fn main() -> polar_bm3d::Result<()> {
    let img = make_fixture(FixtureKind::UniformDop, 64, 0)?;
    let maps = polarization_maps(&stokes_from_camera(&img), 1e-9);
    // one pixel from each quadrant
    for (name, row, col) in [("top-left", 4, 4), ("top-right", 4, 60), ("bottom-left", 60, 4), ("bottom-right", 60, 60)] {
        let aop = maps.aop.get(row, col).to_degrees();
        println!("{name:>12}: DoP {:.3}  AoP {aop:>7.2} deg", maps.dop.get(row, col));
    }
    let no_dop = maps.mask.iter().filter(|&&m| m).count();
    let no_aop = maps.aop_mask.iter().filter(|&&m| m).count();
    println!("{} pixels: {no_dop} without DoP, {no_aop} without AoP (the unpolarized quadrant)", maps.mask.len());
    Ok(())
}
