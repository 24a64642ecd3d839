//! Writing and reading triples, a dataset manifest and DoP/AoP renders.

use polar_bm3d::dataset::{
    load_triple, make_fixture, render_aop, render_dop, save_stem, write_plane, write_ppm, DatasetManifest, FixtureKind,
    ManifestEntry, PlaneFormat,
};

fn main() -> polar_bm3d::Result<()> {
    let dir = std::env::temp_dir().join("polar-bm3d-file-io");
    let img = make_fixture(FixtureKind::UniformDop, 64, 0)?;

    for format in [PlaneFormat::Pfd, PlaneFormat::Pfm, PlaneFormat::Pgm16, PlaneFormat::Pgm8] {
        let stem = dir.join(format!("scene-{format:?}").to_lowercase());
        let paths = save_stem(&img, &stem, format, false)?;
        let back = load_triple(&paths)?;
        println!("{:<40} max error {:.2e}", paths.i0.display(), back.max_abs_diff(&img));
    }

    let noisy = save_stem(&img, &dir.join("data/a"), PlaneFormat::Pfd, false)?;
    let manifest = DatasetManifest {
        entries: vec![ManifestEntry { id: "a".into(), noisy, truth: None, sigma: Some(0.05) }],
    };
    let path = dir.join("set.toml");
    manifest.save(&path)?;
    println!("\n{}", std::fs::read_to_string(&path).map_err(|e| polar_bm3d::Error::Io { path: path.clone(), source: e })?);
    assert_eq!(DatasetManifest::load(&path)?, manifest);

    write_plane(&dir.join("dop.pgm"), &render_dop(&img), PlaneFormat::Pgm8, false)?;
    write_ppm(&dir.join("aop.ppm"), img.width(), img.height(), &render_aop(&img))?;
    println!("renders written to {}", dir.display());
    Ok(())
}
