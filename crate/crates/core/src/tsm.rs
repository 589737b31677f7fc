//! Time-scale modification on top of the decomposition: sines through a
//! phase vocoder with identity phase locking, noise through phase
//! randomisation, transients cut out and re-placed unmodified.

use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

use crate::decompose::{analyze, DecompositionPlan};
use crate::error::{param, Result};
use crate::spectral::{analyze_frames, istft, synthesis_norm, Spectrogram, StftConfig};

const TAU: f64 = 2.0 * PI;

fn check_factor(factor: f64) -> Result<()> {
    if factor > 0.0 && factor.is_finite() {
        Ok(())
    } else {
        Err(param(format!("stretch factor must be positive, got {factor}")))
    }
}

fn output_length(len: usize, factor: f64) -> Result<usize> {
    let n = (factor * len as f64).round() as usize;
    if n == 0 {
        return Err(param("stretched signal would be empty"));
    }
    Ok(n)
}

/// Analysis spectra at `round(m·H/factor)` for every synthesis frame `m`.
fn remapped_frames(signal: &[f64], factor: f64, cfg: &StftConfig) -> Result<(Array2<Complex64>, Vec<usize>, usize)> {
    check_factor(factor)?;
    cfg.validate()?;
    if signal.is_empty() {
        return Err(param("cannot stretch an empty signal"));
    }
    let n_out = output_length(signal.len(), factor)?;
    let centres: Vec<usize> = (0..cfg.num_frames(n_out))
        .map(|m| (m as f64 * cfg.hop as f64 / factor).round() as usize)
        .collect();
    Ok((analyze_frames(signal, cfg, &centres), centres, n_out))
}

fn princarg(x: f64) -> f64 {
    x - TAU * (x / TAU).round()
}

/// Bins that are strict maxima over their left neighbour and at least as
/// large as their right neighbour.
fn spectral_peaks(mag: &[f64]) -> Vec<usize> {
    (0..mag.len())
        .filter(|&k| {
            let left = if k > 0 { mag[k - 1] } else { 0.0 };
            let right = mag.get(k + 1).copied().unwrap_or(0.0);
            mag[k] > left && mag[k] >= right
        })
        .collect()
}

/// Phase vocoder with identity phase locking. The synthesis hop is
/// `cfg.hop`; analysis frames sit at `m·hop/factor`.
pub fn pv_stretch_locked(signal: &[f64], factor: f64, cfg: &StftConfig) -> Result<Vec<f64>> {
    let (frames, centres, n_out) = remapped_frames(signal, factor, cfg)?;
    let (bins, count) = frames.dim();
    let l = cfg.window_length as f64;
    let hop = cfg.hop as f64;
    let omega: Vec<f64> = (0..bins).map(|k| TAU * k as f64 / l).collect();

    let mut out = Array2::<Complex64>::zeros((bins, count));
    let mut prev_analysis = vec![0.0; bins];
    let mut prev_synth = vec![0.0; bins];
    let mut synth = vec![0.0; bins];

    for m in 0..count {
        let col = frames.column(m);
        let mag: Vec<f64> = col.iter().map(|c| c.norm()).collect();
        let phase: Vec<f64> = col.iter().map(|c| c.arg()).collect();
        if m == 0 {
            synth.copy_from_slice(&phase);
        } else {
            let ha = centres[m] as f64 - centres[m - 1] as f64;
            let peaks = spectral_peaks(&mag);
            if peaks.is_empty() {
                synth.copy_from_slice(&phase);
            }
            for (i, &p) in peaks.iter().enumerate() {
                let inst = if ha > 0.0 {
                    omega[p] + princarg(phase[p] - prev_analysis[p] - omega[p] * ha) / ha
                } else {
                    omega[p]
                };
                let peak_phase = (prev_synth[p] + inst * hop).rem_euclid(TAU);
                let lo = if i == 0 { 0 } else { (peaks[i - 1] + p) / 2 + 1 };
                let hi = peaks.get(i + 1).map_or(bins, |&q| (p + q) / 2 + 1);
                for k in lo..hi {
                    synth[k] = peak_phase + phase[k] - phase[p];
                }
            }
        }
        for k in 0..bins {
            out[[k, m]] = Complex64::from_polar(mag[k], synth[k]);
        }
        prev_analysis.copy_from_slice(&phase);
        prev_synth.copy_from_slice(&synth);
    }
    istft(&Spectrogram::from_parts(out, *cfg, n_out)?)
}

/// Stretch with the remapped analysis magnitudes and uniformly random
/// synthesis phases. The output is rescaled so that stationary noise keeps
/// its RMS.
pub fn pv_stretch_randomized(signal: &[f64], factor: f64, cfg: &StftConfig, seed: u64) -> Result<Vec<f64>> {
    let (frames, _, n_out) = remapped_frames(signal, factor, cfg)?;
    let (bins, count) = frames.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Array2::<Complex64>::zeros((bins, count));
    for m in 0..count {
        for k in 0..bins {
            let mag = frames[[k, m]].norm();
            out[[k, m]] = if k == 0 || k == bins - 1 {
                // DC and Nyquist bins must stay real
                Complex64::new(if rng.gen::<bool>() { mag } else { -mag }, 0.0)
            } else {
                Complex64::from_polar(mag, rng.gen_range(0.0..TAU))
            };
        }
    }
    let mut y = istft(&Spectrogram::from_parts(out, *cfg, n_out)?)?;
    let w = cfg.window.coefficients(cfg.window_length);
    let mean_sq = w.iter().map(|v| v * v).sum::<f64>() / w.len() as f64;
    for (v, n) in y.iter_mut().zip(synthesis_norm(cfg, n_out)) {
        *v *= (n / mean_sq).sqrt();
    }
    Ok(y)
}

/// One detected transient, in input samples. `start..end` is the segment
/// that gets copied; `anchor` is its energy peak.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TransientEvent {
    pub start: usize,
    pub anchor: usize,
    pub end: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransientParams {
    /// Detection level above the envelope's noise floor, dB.
    pub threshold_db: f64,
    /// Events whose peaks are closer than this are merged, ms.
    pub min_separation_ms: f64,
    pub pre_ms: f64,
    pub post_ms: f64,
}

impl Default for TransientParams {
    fn default() -> Self {
        TransientParams {
            threshold_db: 20.0,
            min_separation_ms: 50.0,
            pre_ms: 5.0,
            post_ms: 20.0,
        }
    }
}

impl TransientParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.threshold_db.is_finite()
            && self.min_separation_ms >= 0.0
            && self.pre_ms >= 0.0
            && self.post_ms >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(param("transient detector timings must be non-negative"))
        }
    }
}

/// Length of the energy-envelope window, ms.
pub const ENVELOPE_MS: f64 = 1.0;

fn ms_to_samples(ms: f64, sample_rate: f64) -> usize {
    (ms * 1e-3 * sample_rate).round() as usize
}

/// Centred moving sum of squares over `width` samples.
pub fn energy_envelope(x: &[f64], width: usize) -> Vec<f64> {
    let width = width.max(1);
    let mut prefix = Vec::with_capacity(x.len() + 1);
    prefix.push(0.0);
    for v in x {
        prefix.push(prefix.last().unwrap() + v * v);
    }
    let back = width / 2;
    (0..x.len())
        .map(|i| {
            let lo = i.saturating_sub(back);
            let hi = (i + width - back).min(x.len());
            (prefix[hi] - prefix[lo]).max(0.0)
        })
        .collect()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Regions where the energy envelope of `x` rises more than
/// `threshold_db` above its median level (never taken below 60 dB under the
/// peak), merged when their peaks are closer than the minimum separation,
/// then padded.
pub fn detect_transients(x: &[f64], sample_rate: f64, params: &TransientParams) -> Result<Vec<TransientEvent>> {
    params.validate()?;
    if !(sample_rate > 0.0) {
        return Err(param("sample rate must be positive"));
    }
    let env = energy_envelope(x, ms_to_samples(ENVELOPE_MS, sample_rate));
    let peak = env.iter().cloned().fold(0.0, f64::max);
    if peak <= 0.0 {
        return Ok(Vec::new());
    }
    let db: Vec<f64> = env.iter().map(|&e| 10.0 * (e + peak * 1e-30).log10()).collect();
    let peak_db = 10.0 * peak.log10();
    let floor = median(db.clone()).max(peak_db - 60.0);
    let level = floor + params.threshold_db;

    let mut regions: Vec<TransientEvent> = Vec::new();
    let mut i = 0;
    while i < db.len() {
        if db[i] <= level {
            i += 1;
            continue;
        }
        let start = i;
        let mut anchor = i;
        while i < db.len() && db[i] > level {
            if env[i] > env[anchor] {
                anchor = i;
            }
            i += 1;
        }
        regions.push(TransientEvent { start, anchor, end: i });
    }

    let min_sep = ms_to_samples(params.min_separation_ms, sample_rate);
    let pre = ms_to_samples(params.pre_ms, sample_rate);
    let post = ms_to_samples(params.post_ms, sample_rate);
    let mut events: Vec<TransientEvent> = Vec::new();
    for r in regions {
        let r = TransientEvent {
            start: r.start.saturating_sub(pre),
            anchor: r.anchor,
            end: (r.end + post).min(x.len()),
        };
        match events.last_mut() {
            Some(last) if r.anchor - last.anchor < min_sep || r.start < last.end => {
                if env[r.anchor] > env[last.anchor] {
                    last.anchor = r.anchor;
                }
                last.end = last.end.max(r.end);
            }
            _ => events.push(r),
        }
    }
    Ok(events)
}

/// Raised-cosine fade length used at both ends of a copied segment, ms.
pub const CROSSFADE_MS: f64 = 5.0;

fn segment_gain(len: usize, fade: usize) -> Vec<f64> {
    let fade = fade.min(len / 2);
    (0..len)
        .map(|i| {
            let d = i.min(len - 1 - i);
            if d >= fade {
                1.0
            } else {
                let x = PI * (d as f64 + 0.5) / (2.0 * fade as f64);
                x.sin().powi(2)
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TsmRequest {
    pub factor: f64,
    pub plan: DecompositionPlan,
    pub pv_stft: StftConfig,
    pub transient_detect: TransientParams,
    pub seed: u64,
}

impl TsmRequest {
    /// Default vocoder: 2048-sample window, 512-sample hop.
    pub fn new(factor: f64, plan: DecompositionPlan) -> Result<Self> {
        let pv_stft = StftConfig::new(2048, 512, plan.stage1.stft.sample_rate)?;
        let req = TsmRequest {
            factor,
            plan,
            pv_stft,
            transient_detect: TransientParams::default(),
            seed: 0,
        };
        req.validate()?;
        Ok(req)
    }

    pub fn validate(&self) -> Result<()> {
        check_factor(self.factor)?;
        self.plan.validate()?;
        self.pv_stft.validate()?;
        self.transient_detect.validate()?;
        if self.pv_stft.sample_rate != self.plan.stage1.stft.sample_rate {
            return Err(param("vocoder and decomposition sample rates differ"));
        }
        Ok(())
    }
}

/// Stretched components and the transient events they were built from.
#[derive(Debug, Clone, PartialEq)]
pub struct TsmParts {
    pub sines: Vec<f64>,
    pub transients: Vec<f64>,
    pub noise: Vec<f64>,
    pub events: Vec<TransientEvent>,
}

impl TsmParts {
    pub fn sum(&self) -> Vec<f64> {
        self.sines
            .iter()
            .zip(&self.transients)
            .zip(&self.noise)
            .map(|((a, b), c)| a + b + c)
            .collect()
    }
}

pub fn tsm_stretch(signal: &[f64], req: &TsmRequest) -> Result<Vec<f64>> {
    Ok(tsm_stretch_parts(signal, req)?.sum())
}

/// Transient energy outside the detected segments is stretched with the
/// noise.
pub fn tsm_stretch_parts(signal: &[f64], req: &TsmRequest) -> Result<TsmParts> {
    req.validate()?;
    let fs = req.pv_stft.sample_rate;
    let (_, comps) = analyze(signal, &req.plan)?;
    let n_out = output_length(signal.len(), req.factor)?;
    let events = detect_transients(&comps.transients, fs, &req.transient_detect)?;

    let fade = ms_to_samples(CROSSFADE_MS, fs);
    let mut transients = vec![0.0; n_out];
    let mut leftover = comps.transients.clone();
    for e in &events {
        let gain = segment_gain(e.end - e.start, fade);
        let target = (req.factor * e.anchor as f64).round() as isize;
        let offset = target - (e.anchor - e.start) as isize;
        for (j, g) in gain.iter().enumerate() {
            let src = e.start + j;
            let v = comps.transients[src];
            leftover[src] -= g * v;
            let dst = offset + j as isize;
            if dst >= 0 && (dst as usize) < n_out {
                transients[dst as usize] += g * v;
            }
        }
    }
    let noise_in: Vec<f64> = comps.noise.iter().zip(&leftover).map(|(a, b)| a + b).collect();

    let (sines, noise) = rayon::join(
        || pv_stretch_locked(&comps.sines, req.factor, &req.pv_stft),
        || pv_stretch_randomized(&noise_in, req.factor, &req.pv_stft, req.seed),
    );
    Ok(TsmParts {
        sines: sines?,
        transients,
        noise: noise?,
        events,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decompose::{default_plan, Method};

    fn cfg() -> StftConfig {
        StftConfig::new(2048, 512, 44100.0).unwrap()
    }

    fn tone(freq: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| (TAU * freq * i as f64 / 44100.0).sin()).collect()
    }

    fn white(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
        let den: f64 = b.iter().map(|y| y * y).sum();
        (num / den).sqrt()
    }

    fn rms(x: &[f64]) -> f64 {
        (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
    }

    fn dominant_bin(x: &[f64]) -> f64 {
        // plain DFT magnitude scan in 1 Hz steps around the audio band
        let n = x.len() as f64;
        let mut best = (0.0, 0.0);
        for f in (100..2000).map(|f| f as f64) {
            let (mut re, mut im) = (0.0, 0.0);
            for (i, v) in x.iter().enumerate() {
                let ph = TAU * f * i as f64 / 44100.0;
                re += v * ph.cos();
                im += v * ph.sin();
            }
            let p = (re * re + im * im) / n;
            if p > best.1 {
                best = (f, p);
            }
        }
        best.0
    }

    #[test]
    fn identity_stretch_passes_through() {
        let x = white(30000, 1);
        let y = pv_stretch_locked(&x, 1.0, &cfg()).unwrap();
        assert_eq!(y.len(), x.len());
        assert!(rel_err(&y, &x) < 1e-6);
    }

    #[test]
    fn doubled_tone_keeps_pitch() {
        let x = tone(440.0, 22050);
        let y = pv_stretch_locked(&x, 2.0, &cfg()).unwrap();
        assert_eq!(y.len(), 44100);
        let bin = 44100.0 / 2048.0;
        let mid = &y[8192..8192 + 22050];
        assert!((dominant_bin(mid) - 440.0).abs() <= bin);
        assert!((rms(mid) - rms(&x)).abs() / rms(&x) < 0.1);
    }

    #[test]
    fn silence_stretches_to_silence() {
        let y = pv_stretch_locked(&vec![0.0; 10000], 1.5, &cfg()).unwrap();
        assert_eq!(y.len(), 15000);
        assert!(y.iter().all(|&v| v == 0.0));
        let z = pv_stretch_randomized(&vec![0.0; 10000], 1.5, &cfg(), 3).unwrap();
        assert!(z.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn invalid_factor_is_rejected() {
        let x = white(1000, 1);
        for f in [0.0, -1.0, f64::NAN, f64::INFINITY] {
            assert!(pv_stretch_locked(&x, f, &cfg()).is_err());
            assert!(pv_stretch_randomized(&x, f, &cfg(), 0).is_err());
        }
    }

    #[test]
    fn randomized_is_seeded() {
        let x = white(20000, 2);
        let a = pv_stretch_randomized(&x, 1.3, &cfg(), 9).unwrap();
        let b = pv_stretch_randomized(&x, 1.3, &cfg(), 9).unwrap();
        let c = pv_stretch_randomized(&x, 1.3, &cfg(), 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn randomized_keeps_noise_level() {
        for (seed, factor) in (0..10).zip([1.0, 1.1, 1.2, 1.3, 1.4, 1.5, 1.6, 1.7, 1.8, 2.0]) {
            let x = white(44100, seed);
            let y = pv_stretch_randomized(&x, factor, &cfg(), seed + 100).unwrap();
            let db = 20.0 * (rms(&y) / rms(&x)).log10();
            assert!(db.abs() <= 1.5, "factor {factor}: {db} dB");
        }
    }

    #[test]
    fn peaks_are_three_bin_maxima() {
        assert_eq!(spectral_peaks(&[0.0, 1.0, 0.5, 0.2, 0.9, 0.9, 0.1]), vec![1, 4]);
        assert!(spectral_peaks(&[0.0; 5]).is_empty());
    }

    #[test]
    fn detector_on_silence_and_high_threshold() {
        let p = TransientParams::default();
        assert!(detect_transients(&vec![0.0; 44100], 44100.0, &p).unwrap().is_empty());
        let mut x = vec![0.0; 44100];
        x[20000] = 1.0;
        let events = detect_transients(&x, 44100.0, &p).unwrap();
        assert_eq!(events.len(), 1);
        let e = events[0];
        assert!(e.start < e.anchor && e.anchor < e.end);
        assert!((e.anchor as isize - 20000).abs() <= 22);
        let high = TransientParams { threshold_db: 400.0, ..p };
        assert!(detect_transients(&x, 44100.0, &high).unwrap().is_empty());
    }

    #[test]
    fn close_events_merge() {
        let mut x = vec![0.0; 44100];
        x[10000] = 1.0;
        x[10000 + 441] = 0.8;
        x[30000] = 1.0;
        let events = detect_transients(&x, 44100.0, &TransientParams::default()).unwrap();
        assert_eq!(events.len(), 2);
        assert!(events[0].end <= events[1].start);
    }

    #[test]
    fn envelope_matches_direct_sum() {
        let x = white(200, 4);
        let env = energy_envelope(&x, 10);
        for i in [0usize, 3, 50, 199] {
            let lo = i.saturating_sub(5);
            let hi = (i + 5).min(200);
            let direct: f64 = x[lo..hi].iter().map(|v| v * v).sum();
            assert!((env[i] - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn segment_gain_shape() {
        let g = segment_gain(20, 4);
        assert!(g[..4].windows(2).all(|w| w[0] < w[1]));
        assert!(g[4..16].iter().all(|&v| v == 1.0));
        assert_eq!(g[0], g[19]);
        assert!(segment_gain(3, 4).iter().all(|&v| v > 0.0 && v <= 1.0));
    }

    #[test]
    fn stretch_length_contract() {
        let plan = default_plan(Method::Enhanced, 44100.0).unwrap();
        let x = white(44100, 5);
        let req = TsmRequest::new(2.0, plan).unwrap();
        let y = tsm_stretch(&x, &req).unwrap();
        assert_eq!(y.len(), 88200);
        assert!(TsmRequest::new(0.0, plan).is_err());
    }
}
