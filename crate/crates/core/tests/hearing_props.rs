use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spinlab_core::enhance::prescribe_gains;
use spinlab_core::hearing_loss::{simulate_hearing_loss, simulate_hearing_loss_bands, HearingLossConfig};
use spinlab_core::listener::{generate_listener, Audiogram, ListenerProfile, Severity, Shape};
use spinlab_core::scene::Ear;

const FS: u32 = 16_000;

fn noise(len: usize, seed: u64, rms: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.random_range(-1.0..1.0) * rms * 3f64.sqrt()).collect()
}

fn energy(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

fn thresholds() -> impl Strategy<Value = [f64; 6]> {
    prop::array::uniform6(0.0f64..120.0)
}

fn profile() -> impl Strategy<Value = ListenerProfile> {
    (
        prop::sample::select(Shape::ALL.to_vec()),
        prop::sample::select(Severity::ALL.to_vec()),
        0.0f64..=30.0,
    )
        .prop_map(|(shape, severity, asymmetry_db)| ListenerProfile {
            shape,
            severity,
            asymmetry_db,
        })
}

#[test]
fn normal_hearing_is_transparent_within_half_a_db() {
    let x = noise(FS as usize, 1, 0.02);
    let y = simulate_hearing_loss(&x, &Audiogram::flat("n", 0.0), Ear::Left, FS).unwrap();
    let diff: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
    // Deviation relative to the signal, in dB below it.
    let dev_db = 10.0 * (energy(&diff) / energy(&x)).log10();
    assert!(dev_db < -20.0, "{dev_db}");
    let level_change = 10.0 * (energy(&y) / energy(&x)).log10();
    assert!(level_change.abs() <= 0.5);
}

#[test]
fn total_loss_attenuates_by_at_least_forty_db() {
    let x = noise(FS as usize, 2, 0.05);
    let y = simulate_hearing_loss(&x, &Audiogram::flat("d", 120.0), Ear::Right, FS).unwrap();
    assert!(10.0 * (energy(&y) / energy(&x)).log10() <= -40.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn generated_audiograms_are_valid(p in profile(), seed in any::<u64>()) {
        let a = generate_listener("L0001", &p, seed).unwrap();
        a.validate().unwrap();
        for ear in Ear::BOTH {
            prop_assert!(a.ear(ear).iter().all(|v| (0.0..=120.0).contains(v)));
        }
    }

    #[test]
    fn hearing_loss_is_deterministic_and_length_preserving(t in thresholds(), len in 200usize..4000, seed in any::<u64>()) {
        let a = Audiogram::new("x", t, t);
        let x = noise(len, seed, 0.03);
        let y1 = simulate_hearing_loss(&x, &a, Ear::Left, FS).unwrap();
        let y2 = simulate_hearing_loss(&x, &a, Ear::Left, FS).unwrap();
        prop_assert_eq!(y1.len(), len);
        prop_assert_eq!(y1, y2);
    }

    #[test]
    fn band_energy_never_grows_with_threshold(t in thresholds(), band in 0usize..6, raise in 0.0f64..60.0, seed in any::<u64>()) {
        let x = noise(4000, seed, 0.03);
        let cfg = HearingLossConfig::default();
        let base = Audiogram::new("a", t, t);
        let mut worse = base.clone();
        worse.ear_mut(Ear::Left)[band] = (t[band] + raise).min(120.0);
        let e0 = energy(&simulate_hearing_loss_bands(&x, &base, Ear::Left, FS, &cfg).unwrap()[band]);
        let e1 = energy(&simulate_hearing_loss_bands(&x, &worse, Ear::Left, FS, &cfg).unwrap()[band]);
        prop_assert!(e1 <= e0 * (1.0 + 1e-12));
    }

    #[test]
    fn prescription_grows_with_loss(t in thresholds(), band in 0usize..6, raise in 0.0f64..40.0) {
        let base = Audiogram::new("a", t, t);
        let mut worse = base.clone();
        worse.ear_mut(Ear::Right)[band] = (t[band] + raise).min(120.0);
        let g0 = prescribe_gains(&base, Ear::Right);
        let g1 = prescribe_gains(&worse, Ear::Right);
        for (a, b) in g0.iter().zip(&g1) {
            prop_assert!(b >= a);
        }
        prop_assert!(g1.iter().all(|g| (0.0..=40.0).contains(g)));
    }
}
