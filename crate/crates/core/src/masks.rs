//! Sines/transients/noise mask families.
//!
//! Every family produces a [`MaskSet`] whose three gains sum to one in every
//! bin, so the masked spectrograms add back up to the unmasked one.

use ndarray::{Array2, Zip};
use std::f64::consts::FRAC_PI_2;

use crate::error::{param, Result};
use crate::median::TonalnessMaps;
use crate::spectral::Spectrogram;

/// Rounding slack allowed before the fuzzy masks are clamped at zero.
const FUZZY_CLAMP_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct MaskSet {
    pub sines: Array2<f64>,
    pub transients: Array2<f64>,
    pub noise: Array2<f64>,
}

impl MaskSet {
    /// Completes a set from sine and transient gains, with noise as the
    /// complement.
    pub fn from_sines_transients(sines: Array2<f64>, transients: Array2<f64>) -> Self {
        let mut noise = Array2::zeros(sines.dim());
        Zip::from(&mut noise)
            .and(&sines)
            .and(&transients)
            .for_each(|n, &s, &t| *n = 1.0 - s - t);
        MaskSet {
            sines,
            transients,
            noise,
        }
    }

    pub fn dim(&self) -> (usize, usize) {
        self.sines.dim()
    }

    /// Largest deviation of `S + T + N` from one.
    pub fn partition_error(&self) -> f64 {
        let mut worst = 0.0f64;
        Zip::from(&self.sines)
            .and(&self.transients)
            .and(&self.noise)
            .for_each(|&s, &t, &n| worst = worst.max((s + t + n - 1.0).abs()));
        worst
    }
}

/// Separation factor of the hard harmonic/percussive/residual masks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HprBeta(f64);

impl HprBeta {
    pub fn new(beta: f64) -> Result<Self> {
        if !(beta.is_finite() && beta > 1.0) {
            return Err(param(format!("separation factor must exceed 1, got {beta}")));
        }
        Ok(HprBeta(beta))
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl Default for HprBeta {
    fn default() -> Self {
        HprBeta(2.5)
    }
}

/// Limits `(upper, lower)` of the raised-cosine transition of the enhanced
/// masks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionBounds {
    upper: f64,
    lower: f64,
}

impl TransitionBounds {
    /// Sines-versus-residual bounds used for the long-window stage.
    pub const STAGE1: TransitionBounds = TransitionBounds {
        upper: 0.8,
        lower: 0.7,
    };
    /// Transients-versus-noise bounds used for the short-window stage.
    pub const STAGE2: TransitionBounds = TransitionBounds {
        upper: 0.85,
        lower: 0.75,
    };

    pub fn new(upper: f64, lower: f64) -> Result<Self> {
        if !(upper.is_finite() && lower.is_finite()) {
            return Err(param("transition bounds must be finite"));
        }
        if lower < 0.5 {
            return Err(param(format!(
                "lower bound {lower} < 0.5 would let sine and transient gains overlap"
            )));
        }
        if !(lower < upper && upper <= 1.0) {
            return Err(param(format!(
                "transition bounds need 0.5 <= lower < upper <= 1, got ({upper}, {lower})"
            )));
        }
        Ok(TransitionBounds { upper, lower })
    }

    pub fn upper(self) -> f64 {
        self.upper
    }

    pub fn lower(self) -> f64 {
        self.lower
    }

    /// Transfer curve: 0 below `lower`, 1 from `upper` on, raised-cosine
    /// wing in between.
    pub fn gain(self, a: f64) -> f64 {
        // sin²(π/2·x) written as 0.5 + 0.5·sin(π/2·(2x − 1)) so that the
        // midpoint maps to 0.5 exactly
        if a >= self.upper {
            1.0
        } else if a <= self.lower {
            0.0
        } else {
            let mid = 0.5 * (self.upper + self.lower);
            let half = 0.5 * (self.upper - self.lower);
            0.5 + 0.5 * (FRAC_PI_2 * (a - mid) / half).sin()
        }
    }
}

fn map_pair(
    maps: &TonalnessMaps,
    mut f: impl FnMut(f64, f64) -> (f64, f64),
) -> (Array2<f64>, Array2<f64>) {
    let mut s = Array2::zeros(maps.dim());
    let mut t = Array2::zeros(maps.dim());
    Zip::from(&mut s)
        .and(&mut t)
        .and(&maps.tonal)
        .and(&maps.transient)
        .for_each(|s, t, &rs, &rt| {
            let (a, b) = f(rs, rt);
            *s = a;
            *t = b;
        });
    (s, t)
}

/// Binary masks: sine where `R_s > β R_t`, transient where `R_t > β R_s`.
pub fn masks_hard_hpr(maps: &TonalnessMaps, beta: HprBeta) -> MaskSet {
    let b = beta.get();
    let (s, t) = map_pair(maps, |rs, rt| {
        (
            if rs > b * rt { 1.0 } else { 0.0 },
            if rt > b * rs { 1.0 } else { 0.0 },
        )
    });
    MaskSet::from_sines_transients(s, t)
}

/// Fuzzy masks with noisiness `1 − sqrt(|R_s − R_t|)` split evenly out of the
/// sine and transient memberships.
pub fn masks_fuzzy(maps: &TonalnessMaps) -> MaskSet {
    let clamp = |v: f64| {
        if v < 0.0 && v > -FUZZY_CLAMP_TOL {
            0.0
        } else {
            v
        }
    };
    let (s, t) = map_pair(maps, |rs, rt| {
        let rn = 1.0 - (rs - rt).abs().sqrt();
        (clamp(rs - 0.5 * rn), clamp(rt - 0.5 * rn))
    });
    MaskSet::from_sines_transients(s, t)
}

/// Raised-cosine wings meeting at `R_s = 1/2`, where everything is noise.
pub fn masks_prototype(maps: &TonalnessMaps) -> MaskSet {
    let (s, t) = map_pair(maps, |rs, _| {
        let wing = |x: f64| (std::f64::consts::PI * x).sin().powi(2);
        (
            if rs >= 0.5 { wing(rs + 0.5) } else { 0.0 },
            if rs <= 0.5 { wing(rs - 0.5) } else { 0.0 },
        )
    });
    MaskSet::from_sines_transients(s, t)
}

/// Enhanced fuzzy masks: `S = f(R_s)`, `T = f(R_t)` with `f` the
/// [`TransitionBounds::gain`] curve.
pub fn masks_enhanced(maps: &TonalnessMaps, bounds: TransitionBounds) -> MaskSet {
    let (s, t) = map_pair(maps, |rs, rt| (bounds.gain(rs), bounds.gain(rt)));
    MaskSet::from_sines_transients(s, t)
}

/// Splits a spectrogram into its sine, transient and noise parts.
pub fn apply_masks(
    spec: &Spectrogram,
    masks: &MaskSet,
) -> Result<(Spectrogram, Spectrogram, Spectrogram)> {
    if masks.dim() != spec.data().dim() {
        return Err(param(format!(
            "mask shape {:?} does not match spectrogram shape {:?}",
            masks.dim(),
            spec.data().dim()
        )));
    }
    Ok((
        spec.masked(&masks.sines)?,
        spec.masked(&masks.transients)?,
        spec.masked(&masks.noise)?,
    ))
}
