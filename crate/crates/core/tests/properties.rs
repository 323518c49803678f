//! Randomised invariants of the public API.

use proptest::prelude::*;
use rand::SeedableRng;
use subband_esc::augment::{mix_minibatch, mixup_pair, sample_lambda, MixupConfig};
use subband_esc::dsp::{stft_energy, BandScheme, MelFilterBank, SpectrogramConfig};
use subband_esc::fusion::{accuracy, fuse, grid_search_weights, simplex_grid, FusionWeights};
use subband_esc::harness::ExperimentConfig;
use subband_esc::model::{Architecture, CrnnModel};
use subband_esc::nn::{decode_checkpoint, encode_checkpoint, one_hot, softmax, LrSchedule, Tensor};
use subband_esc::seed::Rng;

fn prob(raw: &[f64]) -> Vec<f64> {
    let s: f64 = raw.iter().sum();
    raw.iter().map(|v| v / s).collect()
}

fn binom(n: u64, k: u64) -> u64 {
    (1..=k).fold(1, |acc, i| acc * (n - k + i) / i)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_rows_are_distributions(rows in 1usize..5, logits in proptest::collection::vec(-50.0f64..50.0, 20)) {
        let c = logits.len() / rows;
        let t = Tensor::from_vec(&[rows, c], logits[..rows * c].to_vec()).unwrap();
        let p = softmax(&t).unwrap();
        for row in p.data.chunks(c) {
            prop_assert!(row.iter().all(|v| *v >= 0.0 && *v <= 1.0));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn mixup_is_symmetric(
        a in proptest::collection::vec(-10.0f64..10.0, 8),
        b in proptest::collection::vec(-10.0f64..10.0, 8),
        ca in 0usize..4,
        cb in 0usize..4,
        lambda in 0.0f64..=1.0,
    ) {
        let ya: Vec<f64> = (0..4).map(|c| f64::from(u8::from(c == ca))).collect();
        let yb: Vec<f64> = (0..4).map(|c| f64::from(u8::from(c == cb))).collect();
        let (x1, y1) = mixup_pair(&a, &ya, &b, &yb, lambda).unwrap();
        let (x2, y2) = mixup_pair(&b, &yb, &a, &ya, 1.0 - lambda).unwrap();
        for (p, q) in x1.iter().zip(&x2).chain(y1.iter().zip(&y2)) {
            prop_assert!((p - q).abs() < 1e-12);
        }
        prop_assert!((y1.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lambda_stays_in_unit_interval(seed in any::<u64>(), alpha in 0.05f64..4.0) {
        let cfg = MixupConfig { enabled: true, alpha };
        let mut rng = Rng::seed_from_u64(seed);
        for _ in 0..50 {
            let l = sample_lambda(&cfg, &mut rng).unwrap();
            prop_assert!((0.0..=1.0).contains(&l));
        }
    }

    #[test]
    fn mixed_minibatch_labels_sum_to_one(seed in any::<u64>(), b in 1usize..12) {
        let mut rng = Rng::seed_from_u64(seed);
        let labels: Vec<usize> = (0..b).map(|i| (i * 7 + seed as usize) % 5).collect();
        let mut x = Tensor::<f32>::zeros(&[b, 3]);
        let mut y: Tensor<f32> = one_hot(&labels, 5).unwrap();
        mix_minibatch(&mut x, &mut y, &MixupConfig::default(), &mut rng).unwrap();
        for row in y.data.chunks(5) {
            prop_assert!((row.iter().sum::<f32>() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn fused_scores_are_distributions(
        raw in proptest::collection::vec(proptest::collection::vec(0.001f64..1.0, 6), 1..5),
        w in proptest::collection::vec(0.001f64..1.0, 4),
    ) {
        let scores: Vec<Vec<f64>> = raw.iter().map(|r| prob(r)).collect();
        let refs: Vec<&[f64]> = scores.iter().map(|s| s.as_slice()).collect();
        let weights = FusionWeights::new(prob(&w[..scores.len()])).unwrap();
        let p = fuse(&refs, &weights).unwrap();
        prop_assert!(p.iter().all(|v| *v >= 0.0));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fusion_commutes_with_branch_permutation(
        raw in proptest::collection::vec(proptest::collection::vec(0.001f64..1.0, 5), 3),
        w in proptest::collection::vec(0.001f64..1.0, 3),
        rot in 0usize..3,
    ) {
        let scores: Vec<Vec<f64>> = raw.iter().map(|r| prob(r)).collect();
        let w = prob(&w);
        let perm: Vec<usize> = (0..3).map(|i| (i + rot) % 3).collect();
        let refs: Vec<&[f64]> = scores.iter().map(|s| s.as_slice()).collect();
        let prefs: Vec<&[f64]> = perm.iter().map(|&i| scores[i].as_slice()).collect();
        let pw: Vec<f64> = perm.iter().map(|&i| w[i]).collect();
        let a = fuse(&refs, &FusionWeights::new(w).unwrap()).unwrap();
        let b = fuse(&prefs, &FusionWeights::new(pw).unwrap()).unwrap();
        for (p, q) in a.iter().zip(&b) {
            prop_assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn search_beats_every_branch_and_ignores_order(
        seed in any::<u64>(),
        n_clips in 2usize..30,
    ) {
        use rand::Rng as _;
        let mut rng = Rng::seed_from_u64(seed);
        let labels: Vec<usize> = (0..n_clips).map(|_| rng.random_range(0..4)).collect();
        let branches: Vec<Vec<Vec<f64>>> = (0..3)
            .map(|_| (0..n_clips).map(|_| prob(&(0..4).map(|_| rng.random_range(0.01..1.0)).collect::<Vec<_>>())).collect())
            .collect();
        let r = grid_search_weights(&branches, &labels, 0.1).unwrap();
        for b in &branches {
            prop_assert!(r.best_accuracy >= accuracy(b, &labels).unwrap());
        }
        let reversed: Vec<Vec<Vec<f64>>> = branches.iter().rev().cloned().collect();
        let rr = grid_search_weights(&reversed, &labels, 0.1).unwrap();
        prop_assert_eq!(r.best_accuracy, rr.best_accuracy);
        let maxima = r.grid.iter().filter(|(_, a)| *a == r.best_accuracy).count();
        if maxima == 1 {
            let mut w = rr.best_weights.as_slice().to_vec();
            w.reverse();
            prop_assert_eq!(w, r.best_weights.as_slice().to_vec());
        }
    }

    #[test]
    fn grid_size_is_stars_and_bars(n in 1usize..6) {
        let g = simplex_grid(n, 0.1).unwrap();
        prop_assert_eq!(g.len() as u64, binom(9 + n as u64, n as u64 - 1));
        for w in &g {
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        prop_assert!(g.windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn energy_is_non_negative_and_scales_quadratically(
        x in proptest::collection::vec(-1.0f64..1.0, 64),
        gain in 0.1f64..4.0,
    ) {
        let cfg = SpectrogramConfig { fft_size: 16, n_frames: 7, ..SpectrogramConfig::default() };
        let e = stft_energy(&x, &cfg, 0).unwrap();
        let scaled: Vec<f64> = x.iter().map(|v| v * gain).collect();
        let es = stft_energy(&scaled, &cfg, 0).unwrap();
        for (a, b) in e.values.iter().zip(&es.values) {
            prop_assert!(*a >= 0.0);
            prop_assert!((b - a * gain * gain).abs() <= 1e-9 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn filters_stay_inside_their_band(lo in 0.0f64..15000.0, width in 3000.0f64..7000.0) {
        let cfg = SpectrogramConfig { allow_empty_filters: true, ..SpectrogramConfig::default() };
        let hi = (lo + width).min(22050.0);
        let bank = MelFilterBank::new(&cfg, lo, hi).unwrap();
        let hz_per_bin = 44100.0 / 1024.0;
        for k in 0..cfg.n_mels {
            let row = bank.row(k);
            prop_assert!(row.iter().all(|v| (0.0..=1.0).contains(v)));
            if let Some((a, b)) = bank.support(k) {
                // support holds 0-based indices of bins m = j + 1
                prop_assert!((a + 1) as f64 * hz_per_bin > lo && (b + 1) as f64 * hz_per_bin < hi);
            }
        }
    }

    #[test]
    fn schedule_is_piecewise_constant(epoch in 0usize..1000) {
        let s = LrSchedule::default();
        let lr = s.lr_at(epoch);
        prop_assert!((lr - 0.1 / 10f64.powi((epoch / 100) as i32)).abs() < 1e-15);
        prop_assert!(s.lr_at(epoch + 1) <= lr);
    }

    #[test]
    fn config_survives_toml(seed in 0u64..i64::MAX as u64, epochs in 1usize..300, inner in proptest::collection::btree_set(1u32..22, 0..5)) {
        let mut cfg = ExperimentConfig::esc50("data", "out");
        cfg.seed = seed;
        cfg.training.epochs = epochs;
        let inner: Vec<f64> = inner.into_iter().map(f64::from).collect();
        cfg.bands = BandScheme::from_inner_khz(&inner, 44100).unwrap();
        let back = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.hash().unwrap(), cfg.hash().unwrap());
    }
}

#[test]
fn checkpoint_round_trip_keeps_predictions_bitwise() {
    let mut rng = Rng::seed_from_u64(3);
    let mut model = CrnnModel::new(5, 1, Architecture::Crnn, &mut rng).unwrap();
    let x: Vec<subband_esc::dsp::LogmelTensor> = (0..2)
        .map(|w| subband_esc::dsp::LogmelTensor {
            data: (0..60 * 60 * 3).map(|i| ((i * (w + 3)) % 17) as f32 / 8.0 - 1.0).collect(),
            n_frames: 60,
            n_mels: 60,
            band_index: 1,
            clip_id: format!("c{w}"),
            window_index: w,
        })
        .collect();
    let refs: Vec<_> = x.iter().collect();
    let before = model.predict_batch(&refs).unwrap();

    let bytes = encode_checkpoint(&model.net.params(), None).unwrap();
    let ckpt = decode_checkpoint::<f32>(&bytes).unwrap();
    let mut reloaded = CrnnModel::new(5, 1, Architecture::Crnn, &mut Rng::seed_from_u64(99)).unwrap();
    reloaded.net.load_params(&ckpt.tensors).unwrap();
    let after = reloaded.predict_batch(&refs).unwrap();
    for (a, b) in before.iter().zip(&after) {
        let same = a.probs.iter().zip(&b.probs).all(|(p, q)| p.to_bits() == q.to_bits());
        assert!(same, "{:?} vs {:?}", a.probs, b.probs);
    }

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    model.save(&path, None).unwrap();
    let (mut loaded, opt) = CrnnModel::load(&path, 5, 1, Architecture::Crnn).unwrap();
    assert!(opt.is_none());
    assert_eq!(loaded.predict_batch(&refs).unwrap(), before);
}
