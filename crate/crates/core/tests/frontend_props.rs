//! Statistical properties of the log-frequency frontend.

use oteq::frontend::{augment, sample_shifted_pair, synth_tone, Frontend, FrontendConfig, HarmonicToneSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn argmax(v: &[f64]) -> usize {
    v.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0
}

fn tone(f0: f64, harmonics: usize, decay: f64) -> HarmonicToneSpec {
    HarmonicToneSpec {
        f0,
        num_harmonics: harmonics,
        amplitude_decay: decay,
        duration: 1.5,
        sample_rate: 16_000.0,
        noise_snr_db: None,
    }
}

/// Lag in `[-max_lag, max_lag]` maximizing `sum_i a[i] b[i + lag]`.
fn best_lag(a: &[f64], b: &[f64], max_lag: i64) -> i64 {
    (-max_lag..=max_lag)
        .max_by(|&l1, &l2| {
            let score = |lag: i64| -> f64 {
                (0..a.len() as i64)
                    .filter_map(|i| b.get((i + lag) as usize).filter(|_| i + lag >= 0).map(|bv| a[i as usize] * bv))
                    .sum()
            };
            score(l1).total_cmp(&score(l2))
        })
        .unwrap()
}

#[test]
fn semitone_shift_moves_argmax() {
    let fe = Frontend::new(FrontendConfig::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    for s in [-7i64, -2, 1, 5, 12] {
        let f0 = 220.0;
        let a = synth_tone(&tone(f0, 1, 1.0), &mut rng).unwrap();
        let b = synth_tone(&tone(f0 * (s as f64 / 12.0).exp2(), 1, 1.0), &mut rng).unwrap();
        let (ia, ib) = (argmax(&fe.input_frame(&a, 12_000)), argmax(&fe.input_frame(&b, 12_000)));
        assert_eq!(ib as i64 - ia as i64, 3 * s, "s = {s}");
    }
}

#[test]
fn transposition_is_translation() {
    let fe = Frontend::new(FrontendConfig::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let trials = 100;
    let mut hits = 0;
    for _ in 0..trials {
        let f0 = (rng.random_range(90f64.ln()..500f64.ln())).exp();
        let s: i64 = rng.random_range(-12..=12);
        let decay = rng.random_range(0.5..0.9);
        let a = synth_tone(&tone(f0, 6, decay), &mut rng).unwrap();
        let b = synth_tone(&tone(f0 * (s as f64 / 12.0).exp2(), 6, decay), &mut rng).unwrap();
        let (wa, wb) = (fe.wide_frame(&a, 12_000), fe.wide_frame(&b, 12_000));
        if best_lag(&wa, &wb, 48) == 3 * s {
            hits += 1;
        }
    }
    assert!(hits as f64 >= 0.95 * trials as f64, "{hits}/{trials}");
}

#[test]
fn shift_draws_are_uniform() {
    let k_max = 24;
    let n = 20;
    let wide = vec![0.5; n + 2 * k_max];
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let draws = 10_000;
    let mut counts = vec![0usize; 2 * k_max + 1];
    for _ in 0..draws {
        let p = sample_shifted_pair(&wide, n, k_max, &mut rng).unwrap();
        counts[(p.k + k_max as i64) as usize] += 1;
    }
    let p = 1.0 / counts.len() as f64;
    let (mean, sd) = (draws as f64 * p, (draws as f64 * p * (1.0 - p)).sqrt());
    for (i, &c) in counts.iter().enumerate() {
        assert!((c as f64 - mean).abs() <= 3.0 * sd + 1.0, "k = {}: {c} vs {mean}", i as i64 - k_max as i64);
    }
    // aggregate check: chi-square well inside its bulk for 48 dof
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - mean).powi(2) / mean).sum();
    assert!(chi2 < 90.0, "chi2 = {chi2}");
}

#[test]
fn small_noise_keeps_argmax() {
    let fe = Frontend::new(FrontendConfig::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let x = synth_tone(&tone(330.0, 6, 0.7), &mut rng).unwrap();
    let frame = fe.input_frame(&x, 12_000);
    let peak = frame.iter().copied().fold(0.0, f64::max);
    let target = argmax(&frame);
    let kept = (0..1000)
        .filter(|_| argmax(&augment(&frame, &mut rng, (-6.0, 6.0), 0.01 * peak).0) == target)
        .count();
    assert!(kept >= 990, "{kept}/1000");
}
