//! Synthetic test mixtures whose three parts each belong to one class.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::f64::consts::PI;

use crate::decompose::StnComponents;
use crate::error::{param, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StnClass {
    Sines,
    Transients,
    Noise,
}

impl StnClass {
    pub const ALL: [StnClass; 3] = [StnClass::Sines, StnClass::Transients, StnClass::Noise];
}

impl StnComponents {
    pub fn class(&self, class: StnClass) -> &[f64] {
        match class {
            StnClass::Sines => &self.sines,
            StnClass::Transients => &self.transients,
            StnClass::Noise => &self.noise,
        }
    }
}

/// Single-cycle pulse `√e · 2π f_c t · exp(−2(π f_c t)²)`, peaking at 1 for
/// `t = 1/(2π f_c)`, sampled on a grid symmetric about `t = 0` that spans
/// `duration` seconds.
pub fn gaussian_monopulse(center_freq: f64, sample_rate: f64, duration: f64) -> Result<Vec<f64>> {
    if !(center_freq > 0.0 && center_freq < sample_rate / 2.0) {
        return Err(param(format!(
            "centre frequency {center_freq} Hz outside (0, {}) Hz",
            sample_rate / 2.0
        )));
    }
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(param("pulse duration must be positive"));
    }
    let half = (duration * sample_rate / 2.0).round() as i64;
    Ok((-half..=half)
        .map(|i| monopulse_at(center_freq, i as f64 / sample_rate))
        .collect())
}

fn monopulse_at(fc: f64, t: f64) -> f64 {
    let x = PI * fc * t;
    std::f64::consts::E.sqrt() * 2.0 * x * (-2.0 * x * x).exp()
}

/// Ingredients of [`make_synthetic_mixture`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureRecipe {
    pub duration: f64,
    pub sinusoids: usize,
    pub freq_range: (f64, f64),
    pub pulses: usize,
    pub pulse_center_freq: f64,
    /// Minimum spacing between pulse centres, seconds.
    pub pulse_min_gap: f64,
    /// RMS of each of the three parts.
    pub part_rms: f64,
}

impl Default for MixtureRecipe {
    fn default() -> Self {
        MixtureRecipe {
            duration: 4.0,
            sinusoids: 5,
            freq_range: (200.0, 4000.0),
            pulses: 8,
            pulse_center_freq: 4000.0,
            pulse_min_gap: 0.1,
            part_rms: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticMixture {
    pub sines: Vec<f64>,
    pub transients: Vec<f64>,
    pub noise: Vec<f64>,
    pub mixture: Vec<f64>,
    pub sample_rate: f64,
    /// Sample index of each pulse centre, ascending.
    pub pulse_positions: Vec<usize>,
}

impl SyntheticMixture {
    pub fn truth(&self, class: StnClass) -> &[f64] {
        match class {
            StnClass::Sines => &self.sines,
            StnClass::Transients => &self.transients,
            StnClass::Noise => &self.noise,
        }
    }

    pub fn len(&self) -> usize {
        self.mixture.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mixture.is_empty()
    }
}

fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

fn scale_to_rms(x: &mut [f64], target: f64) {
    let r = rms(x);
    if r > 0.0 {
        x.iter_mut().for_each(|v| *v *= target / r);
    }
}

/// Default 4 s mixture: five equal-amplitude sinusoids with random
/// frequencies and phases, eight 4 kHz monopulses at least 100 ms apart, and
/// white Gaussian noise, each part scaled to the same RMS.
pub fn make_synthetic_mixture(seed: u64, sample_rate: f64) -> Result<SyntheticMixture> {
    make_mixture_with(seed, sample_rate, &MixtureRecipe::default())
}

pub fn make_mixture_with(
    seed: u64,
    sample_rate: f64,
    recipe: &MixtureRecipe,
) -> Result<SyntheticMixture> {
    if !(sample_rate > 0.0 && sample_rate.is_finite()) {
        return Err(param("sample rate must be positive"));
    }
    let (f_lo, f_hi) = recipe.freq_range;
    if !(0.0 < f_lo && f_lo < f_hi && f_hi < sample_rate / 2.0) {
        return Err(param("sinusoid band must lie inside (0, fs/2)"));
    }
    let n = (recipe.duration * sample_rate).round() as usize;
    let margin = recipe.pulse_min_gap;
    let span = recipe.duration - 2.0 * margin;
    if recipe.pulses > 0 && (recipe.pulses - 1) as f64 * recipe.pulse_min_gap > span {
        return Err(param("too many pulses for the requested spacing"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut sines = vec![0.0; n];
    for _ in 0..recipe.sinusoids {
        let f = rng.gen_range(f_lo..f_hi);
        let phase = rng.gen_range(0.0..2.0 * PI);
        let w = 2.0 * PI * f / sample_rate;
        for (i, v) in sines.iter_mut().enumerate() {
            *v += (w * i as f64 + phase).cos();
        }
    }

    let mut times: Vec<f64> = Vec::with_capacity(recipe.pulses);
    while times.len() < recipe.pulses {
        let t = rng.gen_range(margin..recipe.duration - margin);
        if times.iter().all(|&u| (u - t).abs() >= recipe.pulse_min_gap) {
            times.push(t);
        }
    }
    times.sort_by(f64::total_cmp);
    let pulse_positions: Vec<usize> = times
        .iter()
        .map(|t| (t * sample_rate).round() as usize)
        .collect();
    let pulse = gaussian_monopulse(recipe.pulse_center_freq, sample_rate, 0.002)?;
    let half = pulse.len() / 2;
    let mut transients = vec![0.0; n];
    for &p in &pulse_positions {
        for (j, v) in pulse.iter().enumerate() {
            if let Some(slot) = (p + j).checked_sub(half).and_then(|i| transients.get_mut(i)) {
                *slot += v;
            }
        }
    }

    let mut noise: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();

    scale_to_rms(&mut sines, recipe.part_rms);
    scale_to_rms(&mut transients, recipe.part_rms);
    scale_to_rms(&mut noise, recipe.part_rms);
    let mixture = (0..n).map(|i| sines[i] + transients[i] + noise[i]).collect();

    Ok(SyntheticMixture {
        sines,
        transients,
        noise,
        mixture,
        sample_rate,
        pulse_positions,
    })
}

/// Relative L2 error `‖estimate − truth‖ / ‖truth‖`.
pub fn relative_error(estimate: &[f64], truth: &[f64]) -> Result<f64> {
    if estimate.len() != truth.len() {
        return Err(param(format!(
            "length mismatch: {} vs {}",
            estimate.len(),
            truth.len()
        )));
    }
    let den: f64 = truth.iter().map(|v| v * v).sum();
    if den == 0.0 {
        return Err(param("reference has zero energy"));
    }
    let num: f64 = estimate
        .iter()
        .zip(truth)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok((num / den).sqrt())
}

pub fn decomposition_error(
    components: &StnComponents,
    truth: &SyntheticMixture,
    which: StnClass,
) -> Result<f64> {
    relative_error(components.class(which), truth.truth(which))
}
