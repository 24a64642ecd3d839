use std::fs;

use polar_bm3d::dataset::{
    average_frames, load_triple, make_fixture, read_plane, save_stem, write_plane, DatasetManifest, FixtureKind,
    PlaneFormat, TriplePaths,
};
use polar_bm3d::noise::{add_noise, NoiseSpec};
use polar_bm3d::{CameraImage, Error, Plane};

#[test]
fn averaging_follows_the_square_root_law() {
    let clean = CameraImage::unpolarized(Plane::filled(64, 64, 0.4)).unwrap();
    let frames: Vec<CameraImage> = (0..16)
        .map(|s| add_noise(&clean, NoiseSpec::new(0.08, 100 + s).unwrap()).unwrap())
        .collect();
    let avg = average_frames(&frames).unwrap();
    for p in avg.planes() {
        let std = p.map(|v| v - 0.4).variance().sqrt();
        assert!((std - 0.02).abs() < 0.002, "std {std}");
    }
}

#[test]
fn sixteen_bit_full_scale_is_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("full.pgm");
    let mut bytes = b"P5\n2 1\n65535\n".to_vec();
    bytes.extend_from_slice(&[0xff, 0xff, 0x80, 0x00]);
    fs::write(&path, bytes).unwrap();
    let p = read_plane(&path).unwrap();
    assert_eq!(p.as_slice()[0], 1.0);
    assert!((p.as_slice()[1] - 32768.0 / 65535.0).abs() < 1e-12);
}

#[test]
fn integer_formats_refuse_out_of_range_without_clip() {
    let dir = tempfile::tempdir().unwrap();
    let plane = Plane::new(2, 1, vec![0.5, 1.2]).unwrap();
    let path = dir.path().join("x.pgm");
    for format in [PlaneFormat::Pgm8, PlaneFormat::Pgm16] {
        assert!(matches!(
            write_plane(&path, &plane, format, false),
            Err(Error::OutOfRange { index: 1, .. })
        ));
        write_plane(&path, &plane, format, true).unwrap();
        assert_eq!(read_plane(&path).unwrap().as_slice()[1], 1.0);
    }
    // float formats keep the value as is
    let pfd = dir.path().join("x.pfd");
    write_plane(&pfd, &plane, PlaneFormat::Pfd, false).unwrap();
    assert_eq!(read_plane(&pfd).unwrap().as_slice()[1], 1.2);
}

#[test]
fn triples_roundtrip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let img = make_fixture(FixtureKind::Textured, 40, 2).unwrap();
    let paths = save_stem(&img, &dir.path().join("scene"), PlaneFormat::Pfd, false).unwrap();
    assert_eq!(load_triple(&paths).unwrap(), img);
    assert_eq!(TriplePaths::resolve(&dir.path().join("scene")).unwrap(), paths);

    let p16 = save_stem(&img, &dir.path().join("q"), PlaneFormat::Pgm16, false).unwrap();
    assert!(load_triple(&p16).unwrap().max_abs_diff(&img) <= 0.5 / 65535.0 + 1e-12);
}

#[test]
fn manifest_resolves_relative_paths() {
    let dir = tempfile::tempdir().unwrap();
    let img = make_fixture(FixtureKind::UniformDop, 32, 0).unwrap();
    save_stem(&img, &dir.path().join("data/a"), PlaneFormat::Pfd, false).unwrap();
    let text = r#"
[[entry]]
id = "a"
i0 = "data/a_i0.pfd"
i45 = "data/a_i45.pfd"
i90 = "data/a_i90.pfd"
sigma = 0.05
"#;
    let manifest_path = dir.path().join("set.toml");
    fs::write(&manifest_path, text).unwrap();
    let m = DatasetManifest::load(&manifest_path).unwrap();
    assert_eq!(m.entries.len(), 1);
    assert_eq!(m.entries[0].sigma, Some(0.05));
    assert_eq!(m.entries[0].load().unwrap(), img);

    fs::write(&manifest_path, text.replace("data/a_i45", "data/missing")).unwrap();
    assert!(matches!(DatasetManifest::load(&manifest_path), Err(Error::MissingFile(_))));
}
