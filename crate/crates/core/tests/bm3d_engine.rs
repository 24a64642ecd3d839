use polar_bm3d::bm3d::{
    block_match, compute_groups, denoise_grayscale, reference_grid, stage1_hard_threshold, DenoiseProfile, Stage,
};
use polar_bm3d::noise::add_plane_noise;
use polar_bm3d::Plane;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn psnr(a: &Plane, b: &Plane) -> f64 {
    let mse = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64;
    10.0 * (1.0 / mse).log10()
}

/// Smooth pattern plus fine noise: many candidates pass the stage-1 threshold,
/// all at distinct distances.
fn busy_plane(size: usize, seed: u64) -> Plane {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Plane::from_fn(size, size, |r, c| {
        0.5 + 0.15 * ((r as f64) / 6.0).sin() * ((c as f64) / 9.0).cos() + 0.08 * rng.random::<f64>()
    })
}

fn copy_block(p: &mut Plane, from: (usize, usize), to: (usize, usize), n: usize) {
    for i in 0..n {
        for j in 0..n {
            let v = p.get(from.0 + i, from.1 + j);
            p.set(to.0 + i, to.1 + j, v);
        }
    }
}

/// Exhaustive scan of every block origin inside the search window.
fn brute_force(p: &Plane, reference: (usize, usize), profile: &DenoiseProfile, threshold: f64, max_group: usize) -> Vec<((usize, usize), f64)> {
    let n = profile.block_size;
    let half = profile.search_window / 2;
    let within = |o: usize, extent: usize| o.saturating_sub(half)..=(o + half).min(extent - n);
    let mut found = Vec::new();
    for r in within(reference.0, p.height()) {
        for c in within(reference.1, p.width()) {
            if (r, c) == reference {
                continue;
            }
            let mut sum = 0.0;
            for i in 0..n {
                for j in 0..n {
                    let d = p.get(reference.0 + i, reference.1 + j) - p.get(r + i, c + j);
                    sum += d * d;
                }
            }
            let d = sum / (n * n) as f64;
            if d < threshold {
                found.push(((r, c), d));
            }
        }
    }
    found.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    found.truncate(max_group - 1);
    let mut group = vec![(reference, 0.0)];
    group.extend(found);
    let len = 1 << (usize::BITS - 1 - group.len().leading_zeros());
    group.truncate(len);
    group
}

#[test]
fn matching_agrees_with_exhaustive_scan() {
    let profile = DenoiseProfile::default();
    let mut plane = busy_plane(80, 4);
    let reference = (30, 33);
    copy_block(&mut plane, reference, (36, 24), 8);
    for stage in [Stage::HardThreshold, Stage::Wiener] {
        let (threshold, max_group) = match stage {
            Stage::HardThreshold => (profile.match_threshold_ht, profile.max_group_ht),
            Stage::Wiener => (profile.match_threshold_wie, profile.max_group_wie),
        };
        for r in [reference, (0, 0), (72, 5), (17, 72)] {
            let g = block_match(&plane, r, &profile, stage);
            let oracle = brute_force(&plane, r, &profile, threshold, max_group);
            assert_eq!(g.members, oracle.iter().map(|m| m.0).collect::<Vec<_>>(), "{stage:?} at {r:?}");
            for (d, (_, od)) in g.distances.iter().zip(&oracle) {
                assert!((d - od).abs() < 1e-12);
            }
        }
        let g = block_match(&plane, reference, &profile, stage);
        assert_eq!(g.members[1], (36, 24));
        assert_eq!(g.distances[1], 0.0);
    }
}

#[test]
fn duplicate_outside_window_is_not_matched() {
    let profile = DenoiseProfile {
        search_window: 15,
        ..DenoiseProfile::default()
    };
    let mut plane = busy_plane(64, 8);
    let reference = (10, 10);
    copy_block(&mut plane, reference, (40, 44), 8);
    copy_block(&mut plane, reference, (14, 4), 8);
    let g = block_match(&plane, reference, &profile, Stage::HardThreshold);
    assert!(!g.members.contains(&(40, 44)));
    assert_eq!((g.members[1], g.distances[1]), ((14, 4), 0.0));
}

#[test]
fn groups_follow_the_grid() {
    let profile = DenoiseProfile::fast();
    let plane = busy_plane(50, 1);
    let groups = compute_groups(&plane, 0.05, &profile, Stage::Wiener).unwrap();
    let grid = reference_grid(50, 50, &profile);
    assert_eq!(groups.len(), grid.len());
    for (g, r) in groups.iter().zip(&grid) {
        assert_eq!(g.members[0], *r);
        assert!(g.members.len().is_power_of_two() && g.members.len() <= profile.max_group_wie);
        assert!(g.distances.windows(2).all(|w| w[0] <= w[1]));
        assert!(g.members.iter().all(|&(r, c)| r + 8 <= 50 && c + 8 <= 50));
    }
    assert!(grid.contains(&(42, 42)));
}

fn luminance(size: usize) -> Plane {
    polar_bm3d::dataset::make_fixture(polar_bm3d::dataset::FixtureKind::Unpolarized, size, 21)
        .unwrap()
        .i0()
        .clone()
}

#[test]
fn denoising_a_textured_image_gains_at_least_6_db() {
    let clean = luminance(256);
    let noisy = add_plane_noise(&clean, 0.1, 3, 0).unwrap();
    let profile = DenoiseProfile::default();
    let (basic, _) = stage1_hard_threshold(&noisy, 0.1, &profile, None).unwrap();
    let full = denoise_grayscale(&noisy, 0.1, &profile).unwrap();
    let (p_noisy, p_basic, p_full) = (psnr(&noisy, &clean), psnr(&basic, &clean), psnr(&full, &clean));
    assert!((p_noisy - 20.0).abs() < 0.1);
    assert!(p_full >= p_noisy + 6.0, "noisy {p_noisy:.2} dB, denoised {p_full:.2} dB");
    assert!(p_full > p_basic, "stage 1 {p_basic:.2} dB, both stages {p_full:.2} dB");
}

#[test]
fn clean_constant_survives_any_sigma() {
    let flat = Plane::filled(40, 40, 0.37);
    for sigma in [0.01, 0.05, 0.1, 0.15] {
        let out = denoise_grayscale(&flat, sigma, &DenoiseProfile::default()).unwrap();
        assert!(out.max_abs_diff(&flat) < 1e-3, "sigma {sigma}");
    }
}

#[test]
fn output_is_independent_of_thread_count() {
    let noisy = add_plane_noise(&luminance(64), 0.12, 5, 0).unwrap();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| denoise_grayscale(&noisy, 0.12, &DenoiseProfile::default()).unwrap())
    };
    let one = run(1);
    for threads in [2, 8] {
        assert!(run(threads).as_slice().iter().zip(one.as_slice()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}
