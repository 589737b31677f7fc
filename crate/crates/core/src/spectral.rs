//! Short-time Fourier analysis and weighted overlap-add synthesis.
//!
//! Frames are indexed so that frame `m` is centred on input sample `m * hop`;
//! the signal is implicitly zero-extended by half a window on both ends. With
//! `N` input samples there are `1 + ceil(N / hop)` frames and every sample is
//! covered by at least one frame with a non-zero window value, which is all
//! the synthesis needs: it divides by the summed squared window pointwise.

use ndarray::Array2;
use num_complex::Complex64;
use realfft::RealFftPlanner;
use std::f64::consts::PI;

use crate::error::{param, Result};

/// Analysis/synthesis window shape.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Window {
    /// Periodic raised cosine, `sin²(πn/L)`.
    #[default]
    Hann,
    /// Square root of the periodic raised cosine, `|sin(πn/L)|`.
    SqrtHann,
}

impl Window {
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        let l = len as f64;
        (0..len)
            .map(|n| {
                let s = (PI * n as f64 / l).sin();
                match self {
                    Window::Hann => s * s,
                    Window::SqrtHann => s.abs(),
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StftConfig {
    pub window_length: usize,
    pub hop: usize,
    pub sample_rate: f64,
    pub window: Window,
}

impl StftConfig {
    /// Raised-cosine configuration with an explicit hop.
    pub fn new(window_length: usize, hop: usize, sample_rate: f64) -> Result<Self> {
        let cfg = StftConfig {
            window_length,
            hop,
            sample_rate,
            window: Window::Hann,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Raised-cosine configuration with a hop of a quarter window.
    pub fn with_quarter_hop(window_length: usize, sample_rate: f64) -> Result<Self> {
        Self::new(window_length, window_length / 4, sample_rate)
    }

    pub fn validate(&self) -> Result<()> {
        let (l, h) = (self.window_length, self.hop);
        if l < 4 || l % 2 != 0 {
            return Err(param(format!("window length must be even and >= 4, got {l}")));
        }
        if h == 0 || h > l / 2 {
            return Err(param(format!("hop must be in 1..={}, got {h}", l / 2)));
        }
        if l % h != 0 {
            return Err(param(format!(
                "window length {l} is not an integer multiple of hop {h}"
            )));
        }
        if !(self.sample_rate.is_finite() && self.sample_rate > 0.0) {
            return Err(param(format!("sample rate must be positive, got {}", self.sample_rate)));
        }
        Ok(())
    }

    /// One-sided bin count `L/2 + 1`.
    pub fn num_bins(&self) -> usize {
        self.window_length / 2 + 1
    }

    pub fn num_frames(&self, signal_len: usize) -> usize {
        1 + signal_len.div_ceil(self.hop)
    }

    /// Frequency spacing between adjacent bins in Hz.
    pub fn bin_spacing(&self) -> f64 {
        self.sample_rate / self.window_length as f64
    }

    /// Time between adjacent frames in seconds.
    pub fn frame_period(&self) -> f64 {
        self.hop as f64 / self.sample_rate
    }
}

/// Complex one-sided spectrogram, `num_bins × num_frames`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    data: Array2<Complex64>,
    config: StftConfig,
    original_length: usize,
}

impl Spectrogram {
    pub fn from_parts(
        data: Array2<Complex64>,
        config: StftConfig,
        original_length: usize,
    ) -> Result<Self> {
        config.validate()?;
        let expected = (config.num_bins(), config.num_frames(original_length));
        if data.dim() != expected {
            return Err(param(format!(
                "spectrogram shape {:?} does not match config (expected {:?})",
                data.dim(),
                expected
            )));
        }
        Ok(Spectrogram {
            data,
            config,
            original_length,
        })
    }

    pub fn data(&self) -> &Array2<Complex64> {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut Array2<Complex64> {
        &mut self.data
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    pub fn original_length(&self) -> usize {
        self.original_length
    }

    pub fn num_bins(&self) -> usize {
        self.data.nrows()
    }

    pub fn num_frames(&self) -> usize {
        self.data.ncols()
    }

    pub fn magnitude(&self) -> Array2<f64> {
        self.data.mapv(|c| c.norm())
    }

    /// Elementwise product with a real gain matrix of the same shape.
    pub fn masked(&self, gains: &Array2<f64>) -> Result<Spectrogram> {
        if gains.dim() != self.data.dim() {
            return Err(param(format!(
                "mask shape {:?} does not match spectrogram shape {:?}",
                gains.dim(),
                self.data.dim()
            )));
        }
        let mut data = self.data.clone();
        data.zip_mut_with(gains, |c, &g| *c *= g);
        Ok(Spectrogram {
            data,
            config: self.config,
            original_length: self.original_length,
        })
    }
}

pub fn stft(signal: &[f64], config: &StftConfig) -> Result<Spectrogram> {
    config.validate()?;
    if signal.is_empty() {
        return Err(param("cannot analyse an empty signal"));
    }
    let centres: Vec<usize> = (0..config.num_frames(signal.len()))
        .map(|m| m * config.hop)
        .collect();
    Ok(Spectrogram {
        data: analyze_frames(signal, config, &centres),
        config: *config,
        original_length: signal.len(),
    })
}

/// Windowed spectra of frames centred at arbitrary sample positions, with
/// zeros outside the signal. Column `j` belongs to `centres[j]`.
pub fn analyze_frames(signal: &[f64], config: &StftConfig, centres: &[usize]) -> Array2<Complex64> {
    let l = config.window_length;
    let half = (l / 2) as isize;
    let window = config.window.coefficients(l);

    let mut planner = RealFftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(l);
    let mut input = fft.make_input_vec();
    let mut output = fft.make_output_vec();
    let mut scratch = fft.make_scratch_vec();
    let mut data = Array2::<Complex64>::zeros((l / 2 + 1, centres.len()));

    for (m, &c) in centres.iter().enumerate() {
        let start = c as isize - half;
        for (i, slot) in input.iter_mut().enumerate() {
            let idx = start + i as isize;
            *slot = if idx >= 0 && (idx as usize) < signal.len() {
                signal[idx as usize] * window[i]
            } else {
                0.0
            };
        }
        fft.process_with_scratch(&mut input, &mut output, &mut scratch)
            .expect("buffer sizes come from the planner");
        data.column_mut(m)
            .iter_mut()
            .zip(&output)
            .for_each(|(d, &o)| *d = o);
    }
    data
}

pub fn istft(spec: &Spectrogram) -> Result<Vec<f64>> {
    let config = spec.config;
    config.validate()?;
    let l = config.window_length;
    let half = (l / 2) as isize;
    let n_out = spec.original_length;
    let window = config.window.coefficients(l);

    let mut planner = RealFftPlanner::<f64>::new();
    let ifft = planner.plan_fft_inverse(l);
    let mut input = ifft.make_input_vec();
    let mut output = ifft.make_output_vec();
    let mut scratch = ifft.make_scratch_vec();

    let mut acc = vec![0.0; n_out];
    let mut norm = vec![0.0; n_out];
    let scale = 1.0 / l as f64;

    for m in 0..spec.num_frames() {
        let start = (m * config.hop) as isize - half;
        let lo = (-start).max(0) as usize;
        let hi = ((n_out as isize - start).min(l as isize)).max(0) as usize;
        if lo >= hi {
            continue;
        }
        for (slot, &c) in input.iter_mut().zip(spec.data.column(m).iter()) {
            *slot = c;
        }
        input[0].im = 0.0;
        input[l / 2].im = 0.0;
        ifft.process_with_scratch(&mut input, &mut output, &mut scratch)
            .expect("buffer sizes come from the planner");
        for i in lo..hi {
            let idx = (start + i as isize) as usize;
            acc[idx] += output[i] * scale * window[i];
            norm[idx] += window[i] * window[i];
        }
    }

    for (a, &n) in acc.iter_mut().zip(&norm) {
        if n <= f64::EPSILON {
            return Err(param(
                "window/hop combination leaves samples without synthesis support",
            ));
        }
        *a /= n;
    }
    Ok(acc)
}

/// Summed squared synthesis window at every output sample of a signal of
/// `len` samples, including the partially covered edges.
pub fn synthesis_norm(config: &StftConfig, len: usize) -> Vec<f64> {
    let l = config.window_length;
    let half = (l / 2) as isize;
    let window = config.window.coefficients(l);
    let mut norm = vec![0.0; len];
    for m in 0..config.num_frames(len) {
        let start = (m * config.hop) as isize - half;
        for (i, w) in window.iter().enumerate() {
            let idx = start + i as isize;
            if idx >= 0 && (idx as usize) < len {
                norm[idx as usize] += w * w;
            }
        }
    }
    norm
}

/// Summed squared window `Σ_m w²(n − mH)` over one hop period `n = 0..H`.
///
/// Only requires an even window length and `0 < H <= L`; the hop need not
/// divide the window so that non-conforming combinations can be inspected.
pub fn overlap_add_profile(config: &StftConfig) -> Result<Vec<f64>> {
    let (l, h) = (config.window_length, config.hop);
    if l < 2 || l % 2 != 0 || h == 0 || h > l {
        return Err(param(format!("cannot profile window {l} with hop {h}")));
    }
    let w = config.window.coefficients(l);
    Ok((0..h)
        .map(|n| w.iter().skip(n).step_by(h).map(|v| v * v).sum())
        .collect())
}

/// Whether the squared-window overlap-add sum is constant to within `tol`.
pub fn overlap_add_is_constant(config: &StftConfig, tol: f64) -> Result<bool> {
    let p = overlap_add_profile(config)?;
    let max = p.iter().cloned().fold(f64::MIN, f64::max);
    let min = p.iter().cloned().fold(f64::MAX, f64::min);
    Ok(max - min <= tol)
}
