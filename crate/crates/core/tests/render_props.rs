use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spinlab_core::corpus::{SyntheticCorpus, UtteranceStore};
use spinlab_core::dataset::{build_dataset, generate_scenes, SceneGenConfig};
use spinlab_core::interferers::SynthInterfererStore;
use spinlab_core::render::{interferer_gains, mix_components, render_components, render_scene, set_snr, RenderConfig};
use spinlab_core::Execution;

fn quick_render() -> RenderConfig {
    RenderConfig {
        sample_rate: 16_000,
        max_order: 4,
        ..Default::default()
    }
}

fn small_plan(count: usize, seed: u64) -> (SyntheticCorpus, SceneGenConfig) {
    let cfg = SceneGenConfig {
        scene_count: count,
        ..Default::default()
    };
    (SyntheticCorpus::new(count + 2, seed), cfg)
}

/// Target-to-interferer ratio over 10 ms target frames within 40 dB of the
/// loudest, written without the library's helpers.
fn oracle_snr_db(target: &[f64], noise: &[f64], fs: u32) -> f64 {
    let frame = (fs / 100) as usize;
    let frames = target.len() / frame;
    let e = |x: &[f64], k: usize| x[k * frame..(k + 1) * frame].iter().map(|v| v * v).sum::<f64>();
    let max = (0..frames).map(|k| e(target, k)).fold(0.0, f64::max);
    let (mut pt, mut pn) = (0.0, 0.0);
    for k in 0..frames {
        if e(target, k) >= max * 1e-4 {
            pt += e(target, k);
            pn += e(noise, k);
        }
    }
    10.0 * (pt / pn).log10()
}

#[test]
fn six_db_snr_is_measured_back_independently() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let fs = 16_000;
    // Bursty target: tone bursts separated by silence.
    let target: Vec<f64> = (0..fs as usize * 2)
        .map(|i| {
            let on = (i / 4000) % 2 == 0;
            if on {
                0.3 * (i as f64 * 0.07).sin()
            } else {
                0.0
            }
        })
        .collect();
    let noise: Vec<f64> = (0..target.len()).map(|_| rng.random_range(-0.2..0.2)).collect();
    let g = set_snr(&target, &noise, 6.0, fs).unwrap();
    let scaled: Vec<f64> = noise.iter().map(|v| v * g).collect();
    let snr = oracle_snr_db(&target, &scaled, fs);
    assert!((5.9..=6.1).contains(&snr), "{snr}");
}

#[test]
fn mixture_is_linear_in_its_components() {
    let (corpus, cfg) = small_plan(2, 8);
    let store = SynthInterfererStore::new(3);
    let plan = generate_scenes(&cfg, 8, &corpus).unwrap();
    let spec = &plan.scenes[0].spec;
    let rc = quick_render();
    let parts = render_components(spec, &corpus, &store, &rc).unwrap();
    let gains = interferer_gains(spec, &parts, rc.sample_rate).unwrap();
    let mix = mix_components(&parts, &gains);
    for (c, channel) in mix.iter().enumerate() {
        for (n, &v) in channel.iter().enumerate() {
            let mut noise = 0.0;
            for (g, sig) in gains.iter().zip(&parts.interferers) {
                noise += g * sig[c][n];
            }
            assert_eq!(v, parts.target[c][n] + noise);
        }
    }
}

#[test]
fn rendered_scenes_keep_transcripts_and_sane_levels() {
    let (corpus, cfg) = small_plan(3, 21);
    let store = SynthInterfererStore::new(5);
    let plan = generate_scenes(&cfg, 21, &corpus).unwrap();
    for planned in &plan.scenes {
        let r = render_scene(&planned.spec, &corpus, &store, &quick_render()).unwrap();
        let utt = corpus.load(&planned.spec.target_utterance_id).unwrap();
        assert_eq!(r.spin.transcript.as_bytes(), utt.transcript.as_bytes());
        for (label, x) in &r.spin.mic_signals {
            let rms = (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt();
            let db = 20.0 * rms.log10();
            assert!((-60.0..=0.0).contains(&db), "{label}: {db} dBFS");
        }
    }
}

#[test]
fn dataset_build_is_a_pure_function_of_seed_and_config() {
    let (corpus, cfg) = small_plan(2, 33);
    let store = SynthInterfererStore::new(7);
    let rc = quick_render();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (pa, da) = build_dataset(&cfg, 33, &corpus, &store, &rc, a.path(), Execution::Sequential).unwrap();
    let (pb, db) = build_dataset(&cfg, 33, &corpus, &store, &rc, b.path(), Execution::Parallel).unwrap();
    assert_eq!(pa, pb);
    assert_eq!(da, db);
    for s in &da.scenes {
        for (_, rel) in &s.channel_files {
            assert_eq!(std::fs::read(a.path().join(rel)).unwrap(), std::fs::read(b.path().join(rel)).unwrap());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn set_snr_hits_any_target(snr in -10.0f64..20.0, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fs = 8_000;
        let target: Vec<f64> = (0..8000).map(|i| if (i / 800) % 3 == 0 { 0.0 } else { rng.random_range(-0.5..0.5) }).collect();
        let noise: Vec<f64> = (0..8000).map(|_| rng.random_range(-0.1..0.1)).collect();
        let g = set_snr(&target, &noise, snr, fs).unwrap();
        let scaled: Vec<f64> = noise.iter().map(|v| v * g).collect();
        prop_assert!((oracle_snr_db(&target, &scaled, fs) - snr).abs() < 0.1);
    }
}
