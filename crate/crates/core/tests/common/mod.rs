#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use stn::optimize::gaussian_monopulse;
use stn::tsm::{energy_envelope, ENVELOPE_MS};

pub const FS: f64 = 44100.0;

pub fn white(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

pub fn energy(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

pub fn rel_err(est: &[f64], truth: &[f64]) -> f64 {
    assert_eq!(est.len(), truth.len());
    let num: f64 = est.iter().zip(truth).map(|(a, b)| (a - b).powi(2)).sum();
    (num / energy(truth)).sqrt()
}

/// Unit-peak 4 kHz monopulse clicks every `period` seconds plus a 440 Hz tone.
pub struct ClickTone {
    pub signal: Vec<f64>,
    pub clicks: Vec<usize>,
}

pub fn click_tone(duration: f64, period: f64, tone_amp: f64) -> ClickTone {
    let n = (duration * FS).round() as usize;
    let pulse = gaussian_monopulse(4000.0, FS, 0.002).unwrap();
    let half = pulse.len() / 2;
    let mut signal: Vec<f64> = (0..n)
        .map(|i| tone_amp * (2.0 * PI * 440.0 * i as f64 / FS).sin())
        .collect();
    let mut clicks = Vec::new();
    let mut t = period / 2.0;
    while t < duration - period / 4.0 {
        let c = (t * FS).round() as usize;
        for (j, v) in pulse.iter().enumerate() {
            signal[c + j - half] += v;
        }
        clicks.push(c);
        t += period;
    }
    ClickTone { signal, clicks }
}

pub fn envelope(x: &[f64]) -> Vec<f64> {
    energy_envelope(x, (ENVELOPE_MS * 1e-3 * FS).round() as usize)
}

/// Width in samples of the region around the envelope peak near `at`
/// (searched within ±`search` samples) that stays within `drop_db` of it.
pub fn envelope_width(env: &[f64], at: usize, search: usize, drop_db: f64) -> usize {
    let lo = at.saturating_sub(search);
    let hi = (at + search).min(env.len());
    let (peak_i, peak) = (lo..hi)
        .map(|i| (i, env[i]))
        .fold((lo, f64::MIN), |b, c| if c.1 > b.1 { c } else { b });
    let level = peak * 10f64.powf(-drop_db / 10.0);
    let mut a = peak_i;
    while a > 0 && env[a - 1] >= level {
        a -= 1;
    }
    let mut b = peak_i;
    while b + 1 < env.len() && env[b + 1] >= level {
        b += 1;
    }
    b - a + 1
}
