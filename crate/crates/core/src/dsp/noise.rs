use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::AudioSignal;
use crate::error::{Error, Result};

/// Mean squared sample value.
pub fn signal_power(samples: &[f64]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples.iter().map(|s| s * s).sum::<f64>() / samples.len() as f64
}

/// Adds zero-mean Gaussian noise at `snr_db` relative to the signal's mean
/// power. The drawn noise is rescaled so that its realised power equals
/// `P_signal / 10^(snr_db/10)` exactly. `f64::INFINITY` returns the input
/// unchanged. Output is not clamped.
pub fn add_noise_snr(signal: &AudioSignal, snr_db: f64, seed: u64) -> Result<AudioSignal> {
    let p_signal = signal_power(signal.samples());
    if p_signal == 0.0 {
        return Err(Error::ZeroPower);
    }
    if snr_db == f64::INFINITY {
        return Ok(signal.clone());
    }
    if !snr_db.is_finite() {
        return Err(Error::InvalidParameter(format!("snr_db = {snr_db}")));
    }
    let target = p_signal / 10f64.powf(snr_db / 10.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut noise: Vec<f64> = (0..signal.len())
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let drawn = signal_power(&noise);
    if drawn > 0.0 {
        let scale = (target / drawn).sqrt();
        noise.iter_mut().for_each(|n| *n *= scale);
    }
    let samples = signal
        .samples()
        .iter()
        .zip(&noise)
        .map(|(s, n)| s + n)
        .collect();
    AudioSignal::new(samples, signal.sample_rate())
}

/// `10 log10(P_clean / P_(noisy - clean))`; `f64::INFINITY` when the two are identical.
pub fn measure_snr(clean: &AudioSignal, noisy: &AudioSignal) -> Result<f64> {
    if clean.len() != noisy.len() {
        return Err(Error::DimensionMismatch {
            context: "measure_snr",
            expected: clean.len(),
            found: noisy.len(),
        });
    }
    let p_noise = clean
        .samples()
        .iter()
        .zip(noisy.samples())
        .map(|(c, n)| (n - c) * (n - c))
        .sum::<f64>()
        / clean.len().max(1) as f64;
    if p_noise == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (signal_power(clean.samples()) / p_noise).log10())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn tone(n: usize) -> AudioSignal {
        let s = (0..n)
            .map(|i| 0.4 * (2.0 * PI * 300.0 * i as f64 / 16_000.0).sin())
            .collect();
        AudioSignal::new(s, 16_000).unwrap()
    }

    #[test]
    fn zero_db_noise_power_equals_signal_power() {
        let s = tone(16_000);
        let noisy = add_noise_snr(&s, 0.0, 1).unwrap();
        let noise: Vec<f64> = noisy
            .samples()
            .iter()
            .zip(s.samples())
            .map(|(n, c)| n - c)
            .collect();
        let p = signal_power(s.samples());
        assert!((signal_power(&noise) - p).abs() < 1e-12 * p.max(1.0));
    }

    #[test]
    fn infinite_snr_is_identity() {
        let s = tone(4000);
        assert_eq!(add_noise_snr(&s, f64::INFINITY, 9).unwrap(), s);
    }

    #[test]
    fn zero_power_rejected() {
        let s = AudioSignal::silence(100, 16_000);
        assert!(matches!(add_noise_snr(&s, 10.0, 0), Err(Error::ZeroPower)));
    }

    #[test]
    fn identical_signals_measure_infinite() {
        let s = tone(100);
        assert_eq!(measure_snr(&s, &s).unwrap(), f64::INFINITY);
    }

    #[test]
    fn rms_amplitude_noise_is_zero_db() {
        // Square-wave noise with amplitude equal to the signal RMS.
        let s = tone(16_000);
        let rms = signal_power(s.samples()).sqrt();
        let noisy = AudioSignal::new(
            s.samples()
                .iter()
                .enumerate()
                .map(|(i, x)| x + if i % 2 == 0 { rms } else { -rms })
                .collect(),
            16_000,
        )
        .unwrap();
        assert!(measure_snr(&s, &noisy).unwrap().abs() < 1e-9);
    }

    #[test]
    fn length_mismatch() {
        assert!(measure_snr(&tone(10), &tone(11)).is_err());
    }

    #[test]
    fn deterministic_per_seed() {
        let s = tone(1600);
        assert_eq!(add_noise_snr(&s, 5.0, 4).unwrap(), add_noise_snr(&s, 5.0, 4).unwrap());
        assert_ne!(add_noise_snr(&s, 5.0, 4).unwrap(), add_noise_snr(&s, 5.0, 5).unwrap());
    }

    #[test]
    fn four_second_round_trip() {
        let s = tone(64_000);
        for target in [10.0, 20.0] {
            let got = measure_snr(&s, &add_noise_snr(&s, target, 11).unwrap()).unwrap();
            assert!((got - target).abs() <= 0.1, "{target} -> {got}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn snr_round_trip(secs in 1.0f64..3.0, snr in -10.0f64..40.0, seed in any::<u64>()) {
            let s = tone((secs * 16_000.0) as usize);
            let noisy = add_noise_snr(&s, snr, seed).unwrap();
            let got = measure_snr(&s, &noisy).unwrap();
            prop_assert!((got - snr).abs() <= 0.1);
        }
    }
}
