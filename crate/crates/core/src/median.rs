//! Horizontal/vertical median filtering of magnitude spectrograms and the
//! tonalness/transientness maps derived from them.
//!
//! Matrices are `bins × frames`. A filter of length `len` centred on index `i`
//! covers `i + 1 - ceil(len/2) ..= i + floor(len/2)`; positions outside the
//! matrix count as zeros. Even windows take the mean of the two central order
//! statistics.

use ndarray::{Array2, ArrayView1, ArrayViewMut1, Axis, Zip};

use crate::error::{param, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MedianConfig {
    /// Filter length along time, in frames.
    pub horizontal: usize,
    /// Filter length along frequency, in bins.
    pub vertical: usize,
}

impl Default for MedianConfig {
    fn default() -> Self {
        MedianConfig {
            horizontal: 17,
            vertical: 17,
        }
    }
}

impl MedianConfig {
    pub fn new(horizontal: usize, vertical: usize) -> Result<Self> {
        let cfg = MedianConfig {
            horizontal,
            vertical,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizontal < 2 || self.vertical < 2 {
            return Err(param(format!(
                "median lengths must be >= 2, got {}x{}",
                self.horizontal, self.vertical
            )));
        }
        Ok(())
    }
}

/// Tonalness `R_s` and transientness `R_t = 1 − R_s`, both `bins × frames`.
#[derive(Debug, Clone, PartialEq)]
pub struct TonalnessMaps {
    pub tonal: Array2<f64>,
    pub transient: Array2<f64>,
}

impl TonalnessMaps {
    /// Builds maps from a tonalness matrix, deriving transientness as its
    /// complement.
    pub fn from_tonalness(tonal: Array2<f64>) -> Result<Self> {
        if tonal.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(param("tonalness values must lie in [0, 1]"));
        }
        let transient = tonal.mapv(|r| 1.0 - r);
        Ok(TonalnessMaps { tonal, transient })
    }

    pub fn dim(&self) -> (usize, usize) {
        self.tonal.dim()
    }
}

fn median_of(buf: &mut [f64]) -> f64 {
    let n = buf.len();
    let mid = n / 2;
    let (lower, upper, _) = buf.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    if n % 2 == 1 {
        upper
    } else {
        let lower_max = lower.iter().cloned().fold(f64::MIN, f64::max);
        0.5 * (lower_max + upper)
    }
}

fn filter_lane(src: ArrayView1<f64>, mut dst: ArrayViewMut1<f64>, len: usize, buf: &mut Vec<f64>) {
    let n = src.len() as isize;
    let back = len.div_ceil(2) as isize - 1;
    for i in 0..n {
        buf.clear();
        for j in (i - back)..(i - back + len as isize) {
            buf.push(if (0..n).contains(&j) { src[j as usize] } else { 0.0 });
        }
        dst[i as usize] = median_of(buf);
    }
}

fn filter_along(mag: &Array2<f64>, len: usize, axis: Axis) -> Result<Array2<f64>> {
    if len < 2 {
        return Err(param(format!("median length must be >= 2, got {len}")));
    }
    let mut out = Array2::zeros(mag.dim());
    let mut buf = Vec::with_capacity(len);
    for (src, dst) in mag.lanes(axis).into_iter().zip(out.lanes_mut(axis)) {
        filter_lane(src, dst, len, &mut buf);
    }
    Ok(out)
}

/// Median over `len` frames along the time axis.
pub fn median_filter_h(mag: &Array2<f64>, len: usize) -> Result<Array2<f64>> {
    filter_along(mag, len, Axis(1))
}

/// Median over `len` bins along the frequency axis.
pub fn median_filter_v(mag: &Array2<f64>, len: usize) -> Result<Array2<f64>> {
    filter_along(mag, len, Axis(0))
}

/// `R_s = X_h / (X_h + X_v)`, with `R_s = 0.5` where both medians vanish.
pub fn tonalness_from_medians(
    horizontal: &Array2<f64>,
    vertical: &Array2<f64>,
) -> Result<TonalnessMaps> {
    if horizontal.dim() != vertical.dim() {
        return Err(param(format!(
            "median shapes differ: {:?} vs {:?}",
            horizontal.dim(),
            vertical.dim()
        )));
    }
    let mut tonal = Array2::zeros(horizontal.dim());
    Zip::from(&mut tonal)
        .and(horizontal)
        .and(vertical)
        .for_each(|r, &h, &v| {
            let sum = h + v;
            *r = if sum > 0.0 { h / sum } else { 0.5 };
        });
    TonalnessMaps::from_tonalness(tonal)
}

pub fn tonalness(mag: &Array2<f64>, cfg: &MedianConfig) -> Result<TonalnessMaps> {
    cfg.validate()?;
    if mag.iter().any(|&v| !(v >= 0.0)) {
        return Err(param("magnitudes must be non-negative"));
    }
    let h = median_filter_h(mag, cfg.horizontal)?;
    let v = median_filter_v(mag, cfg.vertical)?;
    tonalness_from_medians(&h, &v)
}
