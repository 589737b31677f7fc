//! Local orientation and anisotropy of the log-magnitude spectrogram from a
//! smoothed 2×2 structure tensor, and the hard masks that gate on them.
//!
//! Orientation `α` is the direction along which the spectrogram changes
//! least, measured from the time axis in (frame, bin) index units: a steady
//! partial has `α = 0`, a click has `|α| = π/2`. The frequency change rate
//! converts `tan α` from bins/frame to Hz/s with the factor `f_s² / (H L)`.

use ndarray::{Array2, Axis, Zip};
use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{param, Result};
use crate::masks::MaskSet;
use crate::spectral::Spectrogram;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StConfig {
    /// Step of the central difference, in frames or bins.
    pub derivative_scale: usize,
    pub smoothing_sigma_time: f64,
    pub smoothing_sigma_freq: f64,
    /// Minimum anisotropy for a bin to count as sine or transient.
    pub anisotropy_threshold: f64,
    /// Bins changing frequency no faster than this (Hz/s) are sines.
    pub rate_threshold_sines: f64,
    /// Bins changing frequency at least this fast (Hz/s) are transients.
    pub rate_threshold_transients: f64,
    /// Added to magnitudes before taking decibels.
    pub log_floor: f64,
}

impl Default for StConfig {
    fn default() -> Self {
        StConfig {
            derivative_scale: 1,
            smoothing_sigma_time: 8.0,
            smoothing_sigma_freq: 8.0,
            anisotropy_threshold: 0.2,
            rate_threshold_sines: 10_000.0,
            rate_threshold_transients: 10_000.0,
            log_floor: 1e-10,
        }
    }
}

impl StConfig {
    pub fn validate(&self) -> Result<()> {
        if self.derivative_scale == 0 {
            return Err(param("derivative scale must be at least 1"));
        }
        if !(self.smoothing_sigma_time > 0.0 && self.smoothing_sigma_freq > 0.0) {
            return Err(param("smoothing sigmas must be positive"));
        }
        if !(0.0..1.0).contains(&self.anisotropy_threshold) {
            return Err(param(format!(
                "anisotropy threshold must be in [0, 1), got {}",
                self.anisotropy_threshold
            )));
        }
        let (rs, rt) = (self.rate_threshold_sines, self.rate_threshold_transients);
        if !(rs > 0.0 && rs <= rt && rt.is_finite()) {
            return Err(param(format!(
                "rate thresholds need 0 < sines <= transients, got ({rs}, {rt})"
            )));
        }
        if !(self.log_floor > 0.0) {
            return Err(param("log floor must be positive"));
        }
        Ok(())
    }
}

/// Per-bin orientation (rad), anisotropy in `[0, 1]` and frequency change
/// rate (Hz/s).
#[derive(Debug, Clone, PartialEq)]
pub struct StFeatures {
    pub orientation: Array2<f64>,
    pub anisotropy: Array2<f64>,
    pub rate: Array2<f64>,
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i as f64).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.into_iter().map(|v| v / sum).collect()
}

/// Truncated Gaussian along one axis, renormalised where the kernel hangs
/// over the edge.
fn smooth_along(m: &Array2<f64>, sigma: f64, axis: Axis) -> Array2<f64> {
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as isize;
    let mut out = Array2::zeros(m.dim());
    for (src, mut dst) in m.lanes(axis).into_iter().zip(out.lanes_mut(axis)) {
        let n = src.len() as isize;
        for i in 0..n {
            let (mut acc, mut wsum) = (0.0, 0.0);
            for (j, w) in kernel.iter().enumerate() {
                let idx = i + j as isize - radius;
                if (0..n).contains(&idx) {
                    acc += w * src[idx as usize];
                    wsum += w;
                }
            }
            dst[i as usize] = acc / wsum;
        }
    }
    out
}

/// Central difference with clamped indices.
fn derivative_along(m: &Array2<f64>, step: usize, axis: Axis) -> Array2<f64> {
    let mut out = Array2::zeros(m.dim());
    for (src, mut dst) in m.lanes(axis).into_iter().zip(out.lanes_mut(axis)) {
        let n = src.len();
        for i in 0..n {
            let hi = (i + step).min(n - 1);
            let lo = i.saturating_sub(step);
            dst[i] = (src[hi] - src[lo]) / (hi - lo) as f64;
        }
    }
    out
}

/// Orientation and anisotropy of a real field laid out `bins × frames`.
pub fn structure_orientation(
    field: &Array2<f64>,
    sigma_time: f64,
    sigma_freq: f64,
    step: usize,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let (bins, frames) = field.dim();
    if bins < 3 || frames < 3 {
        return Err(param(format!(
            "structure tensor needs at least 3x3 values, got {bins}x{frames}"
        )));
    }
    let dt = derivative_along(field, step, Axis(1));
    let df = derivative_along(field, step, Axis(0));
    let smooth = |m: Array2<f64>| {
        let m = smooth_along(&m, sigma_time, Axis(1));
        smooth_along(&m, sigma_freq, Axis(0))
    };
    let jtt = smooth(&dt * &dt);
    let jtf = smooth(&dt * &df);
    let jff = smooth(&df * &df);

    let mut orientation = Array2::zeros(field.dim());
    let mut anisotropy = Array2::zeros(field.dim());
    Zip::from(&mut orientation)
        .and(&mut anisotropy)
        .and(&jtt)
        .and(&jtf)
        .and(&jff)
        .for_each(|alpha, c, &a, &b, &d| {
            let trace = a + d;
            let spread = ((a - d).powi(2) + 4.0 * b * b).sqrt();
            *c = if trace > 0.0 {
                (spread / trace).powi(2).min(1.0)
            } else {
                0.0
            };
            // dominant gradient direction, rotated onto the structure
            let mut angle = 0.5 * (2.0 * b).atan2(a - d) + FRAC_PI_2;
            if angle > FRAC_PI_2 {
                angle -= PI;
            }
            *alpha = angle;
        });
    Ok((orientation, anisotropy))
}

pub fn st_features(spec: &Spectrogram, cfg: &StConfig) -> Result<StFeatures> {
    cfg.validate()?;
    let floor = cfg.log_floor;
    let log_mag = spec.data().mapv(|c| 20.0 * (c.norm() + floor).log10());
    let (orientation, anisotropy) = structure_orientation(
        &log_mag,
        cfg.smoothing_sigma_time,
        cfg.smoothing_sigma_freq,
        cfg.derivative_scale,
    )?;
    let sc = spec.config();
    let factor = sc.sample_rate * sc.sample_rate / (sc.hop as f64 * sc.window_length as f64);
    let rate = orientation.mapv(|a| factor * a.tan());
    Ok(StFeatures {
        orientation,
        anisotropy,
        rate,
    })
}

/// Hard masks: sine where the rate is slow and the bin is anisotropic,
/// transient where it is fast and anisotropic. When the two rate thresholds
/// coincide, a bin sitting exactly on them is a sine.
pub fn masks_from_structure_tensor(feat: &StFeatures, cfg: &StConfig) -> Result<MaskSet> {
    cfg.validate()?;
    let mut s = Array2::zeros(feat.rate.dim());
    let mut t = Array2::zeros(feat.rate.dim());
    Zip::from(&mut s)
        .and(&mut t)
        .and(&feat.rate)
        .and(&feat.anisotropy)
        .for_each(|s, t, &r, &c| {
            if c > cfg.anisotropy_threshold {
                if r.abs() <= cfg.rate_threshold_sines {
                    *s = 1.0;
                } else if r.abs() >= cfg.rate_threshold_transients {
                    *t = 1.0;
                }
            }
        });
    Ok(MaskSet::from_sines_transients(s, t))
}
