//! Single- and two-stage sines/transients/noise decomposition.
//!
//! A single stage masks one spectrogram. The two-stage cascade extracts sines
//! with a long window, then splits the remainder with a short window into
//! transients and noise; sines detected by the second stage are returned with
//! the noise. Both shapes reconstruct the input exactly up to rounding,
//! because every mask set sums to one and the inverse transform is linear.

use std::fmt;
use std::str::FromStr;

use crate::error::{param, Result};
use crate::masks::{
    masks_enhanced, masks_fuzzy, masks_hard_hpr, masks_prototype, HprBeta, MaskSet,
    TransitionBounds,
};
use crate::median::{tonalness, MedianConfig};
use crate::spectral::{istft, stft, StftConfig};
use crate::structure_tensor::{masks_from_structure_tensor, st_features, StConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Hpr,
    St,
    Fuzzy,
    Prototype,
    Enhanced,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Hpr,
        Method::St,
        Method::Fuzzy,
        Method::Prototype,
        Method::Enhanced,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Hpr => "hpr",
            Method::St => "st",
            Method::Fuzzy => "fz",
            Method::Prototype => "prototype",
            Method::Enhanced => "enhanced",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| param(format!("unknown method '{s}'")))
    }
}

/// Method-specific parameters of one stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MaskParams {
    Hpr(HprBeta),
    St(StConfig),
    Enhanced(TransitionBounds),
    /// Fuzzy and prototype masks take no parameters.
    None,
}

impl MaskParams {
    fn matches(&self, method: Method) -> bool {
        matches!(
            (self, method),
            (MaskParams::Hpr(_), Method::Hpr)
                | (MaskParams::St(_), Method::St)
                | (MaskParams::Enhanced(_), Method::Enhanced)
                | (MaskParams::None, Method::Fuzzy | Method::Prototype)
        )
    }

    pub fn default_for(method: Method, stage: usize) -> MaskParams {
        match method {
            Method::Hpr => MaskParams::Hpr(HprBeta::default()),
            Method::St => MaskParams::St(StConfig::default()),
            Method::Enhanced if stage == 2 => MaskParams::Enhanced(TransitionBounds::STAGE2),
            Method::Enhanced => MaskParams::Enhanced(TransitionBounds::STAGE1),
            Method::Fuzzy | Method::Prototype => MaskParams::None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StagePlan {
    pub stft: StftConfig,
    pub median: MedianConfig,
    pub params: MaskParams,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecompositionPlan {
    pub method: Method,
    pub stage1: StagePlan,
    /// Short-window stage; `None` for a single-stage decomposition.
    pub stage2: Option<StagePlan>,
}

impl DecompositionPlan {
    pub fn stages(&self) -> usize {
        if self.stage2.is_some() {
            2
        } else {
            1
        }
    }

    pub fn validate(&self) -> Result<()> {
        let stages = std::iter::once(&self.stage1).chain(self.stage2.as_ref());
        for stage in stages {
            stage.stft.validate()?;
            stage.median.validate()?;
            if !stage.params.matches(self.method) {
                return Err(param(format!(
                    "stage parameters {:?} do not belong to method {}",
                    stage.params, self.method
                )));
            }
            if let MaskParams::St(cfg) = stage.params {
                cfg.validate()?;
            }
        }
        if let Some(s2) = &self.stage2 {
            if s2.stft.window_length >= self.stage1.stft.window_length {
                return Err(param(format!(
                    "second-stage window ({}) must be shorter than the first ({})",
                    s2.stft.window_length, self.stage1.stft.window_length
                )));
            }
            if s2.stft.sample_rate != self.stage1.stft.sample_rate {
                return Err(param("both stages must share a sample rate"));
            }
        }
        Ok(())
    }

    /// Turns the plan into a single-stage one using the first stage.
    pub fn single_stage(mut self) -> Self {
        self.stage2 = None;
        self
    }

    /// Turns the plan into a two-stage one, filling the short-window stage
    /// with defaults if it is missing.
    pub fn two_stage(mut self) -> Result<Self> {
        if self.stage2.is_none() {
            let rate = self.stage1.stft.sample_rate;
            if self.stage1.stft.window_length <= SHORT_WINDOW {
                self.stage1.stft = StftConfig::with_quarter_hop(LONG_WINDOW, rate)?;
            }
            self.stage2 = Some(StagePlan {
                stft: StftConfig::with_quarter_hop(SHORT_WINDOW, rate)?,
                median: MedianConfig::default(),
                params: MaskParams::default_for(self.method, 2),
            });
        }
        Ok(self)
    }
}

const LONG_WINDOW: usize = 8192;
const SHORT_WINDOW: usize = 512;
const SINGLE_WINDOW: usize = 4096;

/// Defaults per method: enhanced and HPR run two stages (8192 then 512
/// samples); fuzzy, prototype and structure-tensor run one 4096-sample stage.
/// All hops are a quarter window.
pub fn default_plan(method: Method, sample_rate: f64) -> Result<DecompositionPlan> {
    let stage = |window: usize, idx: usize| -> Result<StagePlan> {
        Ok(StagePlan {
            stft: StftConfig::with_quarter_hop(window, sample_rate)?,
            median: MedianConfig::default(),
            params: MaskParams::default_for(method, idx),
        })
    };
    let plan = match method {
        Method::Enhanced | Method::Hpr => DecompositionPlan {
            method,
            stage1: stage(LONG_WINDOW, 1)?,
            stage2: Some(stage(SHORT_WINDOW, 2)?),
        },
        Method::Fuzzy | Method::Prototype | Method::St => DecompositionPlan {
            method,
            stage1: stage(SINGLE_WINDOW, 1)?,
            stage2: None,
        },
    };
    plan.validate()?;
    Ok(plan)
}

/// Time-domain components, each as long as the input.
#[derive(Debug, Clone, PartialEq)]
pub struct StnComponents {
    pub sines: Vec<f64>,
    pub transients: Vec<f64>,
    pub noise: Vec<f64>,
}

impl StnComponents {
    pub fn zeros(len: usize) -> Self {
        StnComponents {
            sines: vec![0.0; len],
            transients: vec![0.0; len],
            noise: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.sines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sines.is_empty()
    }

    pub fn sum(&self) -> Vec<f64> {
        self.sines
            .iter()
            .zip(&self.transients)
            .zip(&self.noise)
            .map(|((s, t), n)| s + t + n)
            .collect()
    }
}

/// Masks of one stage computed from the spectrogram of `signal`.
pub fn stage_masks(signal: &[f64], stage: &StagePlan, method: Method) -> Result<MaskSet> {
    let spec = stft(signal, &stage.stft)?;
    masks_for_spectrogram(&spec, stage, method)
}

fn masks_for_spectrogram(
    spec: &crate::spectral::Spectrogram,
    stage: &StagePlan,
    method: Method,
) -> Result<MaskSet> {
    if let MaskParams::St(cfg) = stage.params {
        let feat = st_features(spec, &cfg)?;
        return masks_from_structure_tensor(&feat, &cfg);
    }
    let maps = tonalness(&spec.magnitude(), &stage.median)?;
    Ok(match (method, stage.params) {
        (Method::Hpr, MaskParams::Hpr(beta)) => masks_hard_hpr(&maps, beta),
        (Method::Enhanced, MaskParams::Enhanced(bounds)) => masks_enhanced(&maps, bounds),
        (Method::Fuzzy, _) => masks_fuzzy(&maps),
        (Method::Prototype, _) => masks_prototype(&maps),
        _ => {
            return Err(param(format!(
                "stage parameters {:?} do not belong to method {method}",
                stage.params
            )))
        }
    })
}

/// Masks frozen from one analysis. [`StnAnalysis::separate`] applies the same
/// linear filtering chain to any signal of the analysed length, which lets a
/// known source be traced through the masks derived from a mixture.
#[derive(Debug, Clone)]
pub struct StnAnalysis {
    pub stage1: (StftConfig, MaskSet),
    pub stage2: Option<(StftConfig, MaskSet)>,
    len: usize,
}

impl StnAnalysis {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Signal that `stage` (1 or 2) analyses: the input itself, or the
    /// stage-1 transient-plus-noise residual.
    pub fn stage_input(&self, signal: &[f64], stage: usize) -> Result<Vec<f64>> {
        self.check_len(signal)?;
        match (stage, &self.stage2) {
            (1, _) => Ok(signal.to_vec()),
            (2, Some(_)) => {
                let (cfg1, m1) = &self.stage1;
                istft(&stft(signal, cfg1)?.masked(&(&m1.transients + &m1.noise))?)
            }
            _ => Err(param(format!("no stage {stage} in this analysis"))),
        }
    }

    fn check_len(&self, signal: &[f64]) -> Result<()> {
        if signal.len() != self.len {
            return Err(param(format!(
                "signal has {} samples, analysis was made on {}",
                signal.len(),
                self.len
            )));
        }
        Ok(())
    }

    pub fn separate(&self, signal: &[f64]) -> Result<StnComponents> {
        if signal.len() != self.len {
            return Err(param(format!(
                "signal has {} samples, analysis was made on {}",
                signal.len(),
                self.len
            )));
        }
        let (cfg1, m1) = &self.stage1;
        let spec = stft(signal, cfg1)?;
        let sines = istft(&spec.masked(&m1.sines)?)?;
        match &self.stage2 {
            None => Ok(StnComponents {
                sines,
                transients: istft(&spec.masked(&m1.transients)?)?,
                noise: istft(&spec.masked(&m1.noise)?)?,
            }),
            Some((cfg2, m2)) => {
                let residual = istft(&spec.masked(&(&m1.transients + &m1.noise))?)?;
                let spec2 = stft(&residual, cfg2)?;
                Ok(StnComponents {
                    sines,
                    transients: istft(&spec2.masked(&m2.transients)?)?,
                    noise: istft(&spec2.masked(&(&m2.sines + &m2.noise))?)?,
                })
            }
        }
    }
}

/// Decomposes `signal` and keeps the masks that produced the result.
pub fn analyze(signal: &[f64], plan: &DecompositionPlan) -> Result<(StnAnalysis, StnComponents)> {
    plan.validate()?;
    if signal.is_empty() {
        return Err(param("cannot decompose an empty signal"));
    }
    let spec = stft(signal, &plan.stage1.stft)?;
    let m1 = masks_for_spectrogram(&spec, &plan.stage1, plan.method)?;
    let sines = istft(&spec.masked(&m1.sines)?)?;

    let (stage2, transients, noise) = match &plan.stage2 {
        None => (
            None,
            istft(&spec.masked(&m1.transients)?)?,
            istft(&spec.masked(&m1.noise)?)?,
        ),
        Some(s2) => {
            let residual = istft(&spec.masked(&(&m1.transients + &m1.noise))?)?;
            let (m2, transients, noise) = split_residual_with_masks(&residual, s2, plan.method)?;
            (Some((s2.stft, m2)), transients, noise)
        }
    };
    let analysis = StnAnalysis {
        stage1: (plan.stage1.stft, m1),
        stage2,
        len: signal.len(),
    };
    Ok((
        analysis,
        StnComponents {
            sines,
            transients,
            noise,
        },
    ))
}

fn split_residual_with_masks(
    residual: &[f64],
    stage: &StagePlan,
    method: Method,
) -> Result<(MaskSet, Vec<f64>, Vec<f64>)> {
    let spec = stft(residual, &stage.stft)?;
    let m = masks_for_spectrogram(&spec, stage, method)?;
    let transients = istft(&spec.masked(&m.transients)?)?;
    let noise = istft(&spec.masked(&(&m.sines + &m.noise))?)?;
    Ok((m, transients, noise))
}

/// Second-stage split of a residual into `(transients, noise)`; any sines
/// still present leave through the noise output.
pub fn split_residual(
    residual: &[f64],
    stage: &StagePlan,
    method: Method,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let (_, t, n) = split_residual_with_masks(residual, stage, method)?;
    Ok((t, n))
}

pub fn decompose_single(signal: &[f64], plan: &DecompositionPlan) -> Result<StnComponents> {
    if plan.stage2.is_some() {
        return Err(param("single-stage decomposition given a two-stage plan"));
    }
    analyze(signal, plan).map(|(_, c)| c)
}

pub fn decompose_two_stage(signal: &[f64], plan: &DecompositionPlan) -> Result<StnComponents> {
    if plan.stage2.is_none() {
        return Err(param("two-stage decomposition given a single-stage plan"));
    }
    analyze(signal, plan).map(|(_, c)| c)
}

/// Runs whichever pipeline shape the plan describes.
pub fn decompose(signal: &[f64], plan: &DecompositionPlan) -> Result<StnComponents> {
    analyze(signal, plan).map(|(_, c)| c)
}
