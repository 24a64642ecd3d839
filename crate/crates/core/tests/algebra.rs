use polar_bm3d::optimize::presets;
use polar_bm3d::polar::{
    apply_transform, camera_from_stokes, compute_aop, compute_dop, invert_transform, stokes_from_camera,
};
use polar_bm3d::{CameraImage, ChannelTransform, Plane, StokesImage};
use proptest::prelude::*;

const W: usize = 5;
const H: usize = 4;

fn plane(range: std::ops::Range<f64>) -> impl Strategy<Value = Plane> {
    prop::collection::vec(range, W * H).prop_map(|v| Plane::new(W, H, v).unwrap())
}

fn camera(range: std::ops::Range<f64>) -> impl Strategy<Value = CameraImage> {
    (plane(range.clone()), plane(range.clone()), plane(range)).prop_map(|(a, b, c)| CameraImage::new(a, b, c).unwrap())
}

fn transforms() -> Vec<ChannelTransform> {
    let mut ts = vec![ChannelTransform::identity(), presets::stokes(), presets::opponent(), presets::opt_global()];
    ts.extend(presets::names().iter().filter(|n| n.starts_with("opt-sigma")).map(|n| presets::preset(n).unwrap()));
    ts
}

proptest! {
    #[test]
    fn camera_stokes_roundtrip(img in camera(-10.0..10.0)) {
        let back = camera_from_stokes(&stokes_from_camera(&img));
        prop_assert!(back.max_abs_diff(&img) < 1e-12);
    }

    #[test]
    fn stokes_camera_roundtrip(s0 in plane(-5.0..5.0), s1 in plane(-5.0..5.0), s2 in plane(-5.0..5.0)) {
        let s = StokesImage::new(s0, s1, s2).unwrap();
        let back = stokes_from_camera(&camera_from_stokes(&s));
        for k in 0..3 {
            prop_assert!(back.planes()[k].max_abs_diff(&s.planes()[k]) < 1e-12);
        }
    }

    #[test]
    fn transform_roundtrip(img in camera(-2.0..2.0)) {
        for t in transforms() {
            let back = invert_transform(&t, &apply_transform(&t, &img)).unwrap();
            prop_assert!(back.max_abs_diff(&img) < 1e-10);
        }
    }

    #[test]
    fn transform_is_linear(x in camera(-1.0..1.0), y in camera(-1.0..1.0), a in -3.0..3.0f64, b in -3.0..3.0f64) {
        let mixed = CameraImage::from_planes([0, 1, 2].map(|k| {
            let (px, py) = (&x.planes()[k], &y.planes()[k]);
            Plane::from_fn(W, H, |r, c| a * px.get(r, c) + b * py.get(r, c))
        })).unwrap();
        let t = presets::opponent();
        let (tm, tx, ty) = (apply_transform(&t, &mixed), apply_transform(&t, &x), apply_transform(&t, &y));
        for k in 0..3 {
            for i in 0..W * H {
                let expect = a * tx[k].as_slice()[i] + b * ty[k].as_slice()[i];
                prop_assert!((tm[k].as_slice()[i] - expect).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn dop_is_scale_invariant(img in camera(0.01..1.0), k in 0.01..100.0f64) {
        let (a, ma) = compute_dop(&stokes_from_camera(&img), 1e-8);
        let (b, mb) = compute_dop(&stokes_from_camera(&img.map(|v| v * k)), 1e-8);
        prop_assert_eq!(ma, mb);
        prop_assert!(a.max_abs_diff(&b) < 1e-10);
    }

    #[test]
    fn aop_is_scale_invariant(s1 in plane(-1.0..1.0), s2 in plane(-1.0..1.0), k in 0.01..100.0f64) {
        let s0 = Plane::filled(W, H, 2.0);
        let a = StokesImage::new(s0.clone(), s1.clone(), s2.clone()).unwrap();
        let b = StokesImage::new(s0, s1.map(|v| v * k), s2.map(|v| v * k)).unwrap();
        let ((pa, _), (pb, _)) = (compute_aop(&a), compute_aop(&b));
        for (x, y) in pa.as_slice().iter().zip(pb.as_slice()) {
            prop_assert!((x - y).abs() < 1e-10);
            prop_assert!(*x > -std::f64::consts::FRAC_PI_2 && *x <= std::f64::consts::FRAC_PI_2);
        }
    }

    #[test]
    fn in_range_stokes_bounds(img in camera(0.0..1.0)) {
        let s = stokes_from_camera(&img);
        for i in 0..W * H {
            let (s0, s1, s2) = (s.s0().as_slice()[i], s.s1().as_slice()[i], s.s2().as_slice()[i]);
            prop_assert!((0.0..=2.0).contains(&s0));
            prop_assert!(s1.abs() <= s0 + 1e-15);
            prop_assert!((-2.0..=2.0).contains(&s2));
        }
    }

    #[test]
    fn midpoint_diagonal_has_no_s2(i0 in plane(0.0..1.0), i90 in plane(0.0..1.0)) {
        let i45 = Plane::from_fn(W, H, |r, c| (i0.get(r, c) + i90.get(r, c)) / 2.0);
        let s = stokes_from_camera(&CameraImage::new(i0, i45, i90).unwrap());
        prop_assert!(s.s2().as_slice().iter().all(|v| v.abs() < 1e-15));
        let (dop, _) = compute_dop(&s, 1e-8);
        for i in 0..W * H {
            let s0 = s.s0().as_slice()[i];
            if s0 > 1e-8 {
                prop_assert!((dop.as_slice()[i] - s.s1().as_slice()[i].abs() / s0).abs() < 1e-12);
            }
        }
    }
}
