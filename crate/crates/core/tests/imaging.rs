use proptest::prelude::*;
use srclpm::rng::SplitMix64;
use srclpm::{
    add_salt_pepper, grid_blocks, load_pgm, sample_blocks, save_pgm, vectorize, BlockShape,
    SonarImage,
};

fn random_image(width: usize, height: usize, seed: u64) -> SonarImage {
    let mut rng = SplitMix64::new(seed);
    let pixels = (0..width * height).map(|_| rng.uniform(0.0, 1.0)).collect();
    SonarImage::new(width, height, pixels).unwrap()
}

fn image_strategy() -> impl Strategy<Value = SonarImage> {
    (1usize..24, 1usize..24, any::<u64>()).prop_map(|(w, h, seed)| random_image(w, h, seed))
}

proptest! {
    #[test]
    fn vectorized_blocks_have_unit_norm(
        image in image_strategy(),
        m in 1usize..24,
        n in 1usize..24,
        count in 1usize..8,
        seed in any::<u64>(),
    ) {
        let shape = BlockShape::new(m.min(image.height()), n.min(image.width())).unwrap();
        for block in sample_blocks(&image, count, shape, seed).unwrap() {
            if block.pixels.iter().all(|&p| p == 0.0) {
                prop_assert!(vectorize(&block).is_err());
                continue;
            }
            let v = vectorize(&block).unwrap();
            let norm = v.values.iter().map(|x| x * x).sum::<f64>().sqrt();
            prop_assert!((norm - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn sampled_blocks_copy_the_image(
        image in image_strategy(),
        m in 1usize..24,
        n in 1usize..24,
        seed in any::<u64>(),
    ) {
        let shape = BlockShape::new(m.min(image.height()), n.min(image.width())).unwrap();
        for block in sample_blocks(&image, 5, shape, seed).unwrap() {
            let (r0, c0) = block.origin;
            prop_assert!(r0 + shape.m <= image.height() && c0 + shape.n <= image.width());
            for r in 0..shape.m {
                for c in 0..shape.n {
                    prop_assert_eq!(block.pixels[r * shape.n + c], image.get(r0 + r, c0 + c));
                }
            }
        }
        // Same seed, same blocks.
        prop_assert_eq!(
            sample_blocks(&image, 5, shape, seed).unwrap(),
            sample_blocks(&image, 5, shape, seed).unwrap()
        );
    }

    #[test]
    fn grid_origins_match_brute_force(
        image in image_strategy(),
        m in 1usize..24,
        n in 1usize..24,
        sr in 1usize..6,
        sc in 1usize..6,
    ) {
        let shape = BlockShape::new(m.min(image.height()), n.min(image.width())).unwrap();
        let got: Vec<(usize, usize)> = grid_blocks(&image, shape, (sr, sc))
            .unwrap()
            .iter()
            .map(|b| b.origin)
            .collect();
        let mut expected = Vec::new();
        for r in 0..image.height() {
            for c in 0..image.width() {
                if r % sr == 0 && c % sc == 0 && r + shape.m <= image.height() && c + shape.n <= image.width() {
                    expected.push((r, c));
                }
            }
        }
        prop_assert_eq!(got, expected);
    }

    #[test]
    fn pgm_round_trip_is_stable(image in image_strategy()) {
        let bytes = save_pgm(&image);
        let loaded = load_pgm(&bytes).unwrap();
        prop_assert_eq!(loaded.shape(), image.shape());
        for (a, b) in loaded.pixels().iter().zip(image.pixels()) {
            prop_assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
        prop_assert_eq!(save_pgm(&loaded), bytes);
    }
}

#[test]
fn corrupted_fraction_is_binomial() {
    let image = SonarImage::filled(100, 100, 0.3).unwrap();
    let n = image.len() as f64;
    let density = 0.25;
    // Three standard deviations is 0.013 here; over 100 seeds one excursion just
    // past that is expected, so the pinned band is the wider ±0.02.
    let tolerance = 0.02;
    let (mut total_hits, mut total_salt) = (0, 0);
    for seed in 0..100 {
        let noisy = add_salt_pepper(&image, density, seed).unwrap();
        let hits: Vec<f64> = noisy
            .pixels()
            .iter()
            .copied()
            .filter(|&p| p != 0.3)
            .collect();
        assert!(hits.iter().all(|&p| p == 0.0 || p == 1.0));
        let fraction = hits.len() as f64 / n;
        assert!(
            (fraction - density).abs() <= tolerance,
            "seed {seed}: fraction {fraction}"
        );
        total_hits += hits.len();
        total_salt += hits.iter().filter(|&&p| p == 1.0).count();
    }
    // Salt and pepper share the corrupted pixels evenly, pooled over all seeds.
    let half = total_hits as f64 / 2.0;
    assert!((total_salt as f64 - half).abs() <= 3.0 * (total_hits as f64 * 0.25).sqrt());
}

#[test]
fn noise_extremes() {
    let image = random_image(30, 20, 4);
    assert_eq!(add_salt_pepper(&image, 0.0, 1).unwrap(), image);
    let full = add_salt_pepper(&image, 1.0, 1).unwrap();
    assert!(full.pixels().iter().all(|&p| p == 0.0 || p == 1.0));
    assert!(add_salt_pepper(&image, 1.01, 1).is_err());
    assert!(add_salt_pepper(&image, -0.1, 1).is_err());
}

#[test]
fn denser_noise_corrupts_a_superset() {
    let image = SonarImage::filled(40, 40, 0.5).unwrap();
    let light = add_salt_pepper(&image, 0.1, 8).unwrap();
    let heavy = add_salt_pepper(&image, 0.3, 8).unwrap();
    for (l, h) in light.pixels().iter().zip(heavy.pixels()) {
        if *l != 0.5 {
            assert_eq!(l, h);
        }
    }
}

#[test]
fn ascii_pgm_with_comments() {
    let text = b"P2\n# made by hand\n3 2\n# max value next\n4\n0 1 2\n3 4 4\n";
    let image = load_pgm(text).unwrap();
    assert_eq!((image.width(), image.height()), (3, 2));
    assert_eq!(image.pixels(), &[0.0, 0.25, 0.5, 0.75, 1.0, 1.0]);
}

#[test]
fn malformed_pgm_is_rejected() {
    for bad in [
        &b"P6\n1 1\n255\n\x00"[..],
        b"P5\n2 2\n255\n\x00\x00",
        b"P2\n2 1\n0\n0 0\n",
        b"P2\n2 1\n255\n0 300\n",
        b"P5\n0 3\n255\n",
        b"",
    ] {
        let err = load_pgm(bad).unwrap_err();
        assert_eq!(err.exit_code(), 3, "{err}");
    }
}
