//! Property tests for the structural invariants: framing shape law, DCT
//! round trips, pixel-shuffle bijectivity, soft-DTW bounds, WAV symmetry.

use proptest::prelude::*;
use wavestamp_core::dsp::{dct2, dct3, FrameSpec};
use wavestamp_core::io::Image;
use wavestamp_core::losses::soft_dtw;
use wavestamp_core::model::{pixel_shuffle, pixel_unshuffle};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn frame_count_shape_law(frame_len in 2usize..200, hop_frac in 1usize..100, extra in 0usize..500) {
        let hop = (hop_frac % frame_len).max(1);
        let len = frame_len + extra;
        let spec = FrameSpec::max_frames(frame_len, hop, len).unwrap();
        prop_assert_eq!(spec.num_frames, (len - frame_len) / hop + 1);
        prop_assert!(spec.covered() <= len);
        // one more hop would not fit
        prop_assert!(spec.covered() + hop > len);
    }

    #[test]
    fn dct_round_trip_and_energy(frame in prop::collection::vec(-1.0f32..1.0, 1..96)) {
        let coeffs = dct2(&frame).unwrap();
        let back = dct3(&coeffs).unwrap();
        for (a, b) in frame.iter().zip(&back) {
            prop_assert!((a - b).abs() < 1e-5);
        }
        let ein: f64 = frame.iter().map(|&v| (v as f64) * (v as f64)).sum();
        let eout: f64 = coeffs.iter().map(|&v| (v as f64) * (v as f64)).sum();
        prop_assert!((ein - eout).abs() <= 1e-5 * ein.max(1e-9));
    }

    #[test]
    fn pixel_shuffle_is_a_bijection(s in 1usize..12, seed in 0u64..1000) {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let img: Vec<f32> = (0..4 * s * s).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        let map = pixel_shuffle(&img, s).unwrap();
        let back = pixel_unshuffle(&map, 2 * s).unwrap();
        prop_assert!(img.iter().zip(&back).all(|(a, b)| a.to_bits() == b.to_bits()));
        // and in the other direction
        let img2 = pixel_unshuffle(&map, 2 * s).unwrap();
        let map2 = pixel_shuffle(&img2, s).unwrap();
        prop_assert!(map.iter().zip(&map2).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn soft_dtw_symmetric_and_below_hard_dtw(
        a in prop::collection::vec(-1.0f32..1.0, 1..10),
        b in prop::collection::vec(-1.0f32..1.0, 1..10),
        gamma in 0.05f32..2.0,
    ) {
        let ab = soft_dtw(&a, &b, gamma).unwrap();
        let ba = soft_dtw(&b, &a, gamma).unwrap();
        prop_assert!((ab - ba).abs() < 1e-6);

        // classic min-cost DP as the upper bound
        let (n, m) = (a.len(), b.len());
        let w = m + 1;
        let mut r = vec![f64::INFINITY; (n + 1) * w];
        r[0] = 0.0;
        for i in 1..=n {
            for j in 1..=m {
                let d = (a[i - 1] as f64 - b[j - 1] as f64).powi(2);
                r[i * w + j] = d + r[(i - 1) * w + j].min(r[i * w + j - 1]).min(r[(i - 1) * w + j - 1]);
            }
        }
        let hard = r[n * w + m];
        prop_assert!(ab <= hard + 1e-9, "soft {} above hard {}", ab, hard);
    }

    #[test]
    fn image_file_round_trip(w in 1usize..20, h in 1usize..20, seed in 0u64..1000) {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut pixels = vec![0u8; w * h * 3];
        rng.fill(&mut pixels[..]);
        let img = Image::new(w, h, pixels).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.ppm");
        wavestamp_core::io::write_ppm(&path, &img).unwrap();
        prop_assert_eq!(wavestamp_core::io::read_ppm(&path).unwrap(), img);
    }
}
