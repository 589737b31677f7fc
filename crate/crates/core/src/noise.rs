//! Distribution of tonalness values produced by pure white noise.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{param, Result};
use crate::median::{tonalness, MedianConfig};
use crate::spectral::{stft, StftConfig};

/// Histogram of tonalness over `[0, 1]`, normalised to unit mass.
#[derive(Debug, Clone, PartialEq)]
pub struct TonalnessHistogram {
    pub bin_edges: Vec<f64>,
    pub normalized_counts: Vec<f64>,
    pub window_length: usize,
    pub instance_count: usize,
}

impl TonalnessHistogram {
    pub fn bin_centers(&self) -> Vec<f64> {
        self.bin_edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    /// Mass of the bins whose centres fall inside `[lo, hi]`.
    pub fn mass_between(&self, lo: f64, hi: f64) -> f64 {
        self.bin_centers()
            .iter()
            .zip(&self.normalized_counts)
            .filter(|(c, _)| (lo..=hi).contains(*c))
            .map(|(_, m)| m)
            .sum()
    }

    /// Centre of the fullest bin.
    pub fn peak_center(&self) -> f64 {
        let (idx, _) = self
            .normalized_counts
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("histogram has bins");
        0.5 * (self.bin_edges[idx] + self.bin_edges[idx + 1])
    }
}

fn bin_index(r: f64, bins: usize) -> usize {
    ((r * bins as f64) as usize).min(bins - 1)
}

fn counts_for(signal: &[f64], cfg: &StftConfig, median: &MedianConfig, bins: usize) -> Result<Vec<u64>> {
    let spec = stft(signal, cfg)?;
    let maps = tonalness(&spec.magnitude(), median)?;
    let mut counts = vec![0u64; bins];
    for &r in maps.tonal.iter() {
        counts[bin_index(r, bins)] += 1;
    }
    Ok(counts)
}

fn normalise(counts: Vec<u64>, window_length: usize, instance_count: usize) -> TonalnessHistogram {
    let bins = counts.len();
    let total: u64 = counts.iter().sum();
    TonalnessHistogram {
        bin_edges: (0..=bins).map(|i| i as f64 / bins as f64).collect(),
        normalized_counts: counts
            .into_iter()
            .map(|c| c as f64 / total as f64)
            .collect(),
        window_length,
        instance_count,
    }
}

/// Histogram of tonalness over every bin of every signal's spectrogram.
pub fn tonalness_histogram(
    signals: &[Vec<f64>],
    cfg: &StftConfig,
    median: &MedianConfig,
    bins: usize,
) -> Result<TonalnessHistogram> {
    if signals.is_empty() || bins == 0 {
        return Err(param("need at least one signal and one bin"));
    }
    let mut counts = vec![0u64; bins];
    for s in signals {
        for (c, n) in counts.iter_mut().zip(counts_for(s, cfg, median, bins)?) {
            *c += n;
        }
    }
    Ok(normalise(counts, cfg.window_length, signals.len()))
}

/// White-noise instances of `length` seconds, instance `i` drawn from stream
/// `i` of a generator seeded with `seed`.
pub fn noise_tonalness_histogram(
    instances: usize,
    length: f64,
    cfg: &StftConfig,
    median: &MedianConfig,
    bins: usize,
    seed: u64,
) -> Result<TonalnessHistogram> {
    if instances == 0 || bins == 0 {
        return Err(param("need at least one instance and one bin"));
    }
    cfg.validate()?;
    median.validate()?;
    let n = (length * cfg.sample_rate).round() as usize;
    if n == 0 {
        return Err(param("noise instances must be at least one sample long"));
    }
    let per_instance: Vec<Vec<u64>> = (0..instances)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let x: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            counts_for(&x, cfg, median, bins)
        })
        .collect::<Result<_>>()?;
    let mut counts = vec![0u64; bins];
    for c in per_instance {
        counts.iter_mut().zip(c).for_each(|(a, b)| *a += b);
    }
    Ok(normalise(counts, cfg.window_length, instances))
}
