use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spinlab_core::corpus::{generate_sentences, synthesise_sentence};
use spinlab_core::enhance::EnhancedOutput;
use spinlab_core::listener::Audiogram;
use spinlab_core::prediction::{envelope_metric, fit_logistic, predict, LogisticMap, PredictConfig};
use spinlab_core::render::SpinSignalSet;
use spinlab_core::scene::{ChannelLabel, Ear};

const FS: u32 = 16_000;

fn speech(seed: u64) -> Vec<f64> {
    let sentence = generate_sentences(1, seed).remove(0);
    let mut x = vec![0.0; FS as usize / 4];
    x.extend(synthesise_sentence(&sentence, seed, FS));
    x.extend(vec![0.0; FS as usize / 4]);
    x
}

fn noise(len: usize, rms: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-1.0..1.0) * rms * 3f64.sqrt()).collect()
}

fn spin(reference: Vec<f64>) -> SpinSignalSet {
    SpinSignalSet {
        scene_id: "S00001".into(),
        mic_signals: vec![
            (ChannelLabel::new(Ear::Left, 0), reference.clone()),
            (ChannelLabel::new(Ear::Right, 0), reference.clone()),
        ],
        anechoic_target: reference,
        transcript: "unused".into(),
        sample_rate: FS,
    }
}

fn output(left: Vec<f64>, right: Vec<f64>) -> EnhancedOutput {
    EnhancedOutput {
        scene_id: "S00001".into(),
        listener_id: "L0001".into(),
        left,
        right,
        processing_latency_samples: 0,
    }
}

#[test]
fn self_comparison_scores_one() {
    let x = speech(1);
    assert!((envelope_metric(&x, &x, FS).unwrap() - 1.0).abs() < 1e-6);
}

#[test]
fn uncorrelated_noise_scores_near_zero() {
    let x = speech(2);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let worst = (0..100)
        .map(|_| envelope_metric(&x, &noise(x.len(), 0.05, &mut rng), FS).unwrap().abs())
        .fold(0.0, f64::max);
    println!("largest |d| over 100 white-noise instances: {worst:.4}");
    // The -15 dB envelope clipping makes noise partially track the reference
    // in sparse bands, so the floor sits well above zero (about 0.4 here).
    assert!(worst < 0.5);
}

#[test]
fn clean_speech_with_normal_hearing_is_near_perfect() {
    let x = speech(3);
    let s = predict(&spin(x.clone()), &output(x.clone(), x), &Audiogram::flat("n", 0.0), &PredictConfig::default()).unwrap();
    assert!(s.score >= 0.95, "{}", s.score);
}

#[test]
fn total_loss_never_beats_normal_hearing() {
    let x = speech(4);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let y: Vec<f64> = x.iter().zip(noise(x.len(), 0.003, &mut rng)).map(|(a, b)| a + b).collect();
    let (s, o, cfg) = (spin(x), output(y.clone(), y), PredictConfig::default());
    let normal = predict(&s, &o, &Audiogram::flat("n", 0.0), &cfg).unwrap().score;
    let deaf = predict(&s, &o, &Audiogram::flat("d", 120.0), &cfg).unwrap().score;
    assert!(deaf <= normal, "{deaf} > {normal}");
}

#[test]
fn noiseless_fit_recovers_known_map_within_two_percent() {
    let truth = LogisticMap { a: 8.0, b: 0.6 };
    let pairs: Vec<(f64, f64)> = (0..40).map(|i| 0.1 + 0.8 * i as f64 / 39.0).map(|d| (d, truth.apply(d))).collect();
    let fit = fit_logistic(&pairs).unwrap();
    assert!((fit.map.a - 8.0).abs() / 8.0 < 0.02, "{:?}", fit.map);
    assert!((fit.map.b - 0.6).abs() / 0.6 < 0.02, "{:?}", fit.map);
}

#[test]
fn noisy_fits_keep_the_midpoint_close() {
    let truth = LogisticMap { a: 8.0, b: 0.6 };
    let sigma = 0.02;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let pairs: Vec<(f64, f64)> = (0..50)
            .map(|i| 0.2 + 0.8 * i as f64 / 49.0)
            .map(|d| {
                let n: f64 = rng.random_range(-1.0..1.0) * sigma * 3f64.sqrt();
                (d, truth.apply(d) + n)
            })
            .collect();
        worst = worst.max((fit_logistic(&pairs).unwrap().map.b - 0.6).abs());
    }
    println!("largest midpoint error over 100 draws: {worst:.4}");
    assert!(worst < 2.0 * sigma);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn metric_ignores_positive_scaling(seed in 0u64..1000, gain in 1e-3f64..1e3, snr_rms in 0.0f64..0.05) {
        let x = speech(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y: Vec<f64> = x.iter().zip(noise(x.len(), snr_rms, &mut rng)).map(|(a, b)| a + b).collect();
        let scaled: Vec<f64> = y.iter().map(|v| v * gain).collect();
        let d1 = envelope_metric(&x, &y, FS).unwrap();
        let d2 = envelope_metric(&x, &scaled, FS).unwrap();
        prop_assert!((d1 - d2).abs() < 1e-9);
    }

    #[test]
    fn scores_are_probabilities_and_ear_symmetric(
        seed in 0u64..1000,
        left_noise in 0.0f64..0.05,
        right_noise in 0.0f64..0.05,
        left_hl in prop::array::uniform6(0.0f64..120.0),
        right_hl in prop::array::uniform6(0.0f64..120.0),
    ) {
        let x = speech(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 5);
        let l: Vec<f64> = x.iter().zip(noise(x.len(), left_noise, &mut rng)).map(|(a, b)| a + b).collect();
        let r: Vec<f64> = x.iter().zip(noise(x.len(), right_noise, &mut rng)).map(|(a, b)| a + b).collect();
        let cfg = PredictConfig::default();
        let s = spin(x);
        let a = predict(&s, &output(l.clone(), r.clone()), &Audiogram::new("a", left_hl, right_hl), &cfg).unwrap().score;
        let b = predict(&s, &output(r, l), &Audiogram::new("a", right_hl, left_hl), &cfg).unwrap().score;
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert_eq!(a, b);
    }
}

proptest! {
    #[test]
    fn fitted_map_never_loses_to_the_mean(
        pairs in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 10..60),
    ) {
        let span = pairs.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max)
            - pairs.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
        prop_assume!(span >= 0.2);
        let mean = pairs.iter().map(|p| p.1).sum::<f64>() / pairs.len() as f64;
        let constant = pairs.iter().map(|p| (p.1 - mean).powi(2)).sum::<f64>() / pairs.len() as f64;
        if let Ok(fit) = fit_logistic(&pairs) {
            prop_assert!(fit.mse <= constant);
        }
    }
}
