//! Search for transition bounds of the enhanced masks on synthetic mixtures
//! with known sine, transient and noise parts.
//!
//! Stage 1 minimises the sine error of the long-window stage. Stage 2 freezes
//! a stage-1 pair and minimises the transient error of the full cascade. The
//! expensive, bound-independent parts of each stage (spectrograms, median
//! filtering, the stage-1 residual) are computed once per objective.

mod ga;
mod mixture;

pub use ga::{run_ga, GaConfig, GaOutcome, GenerationRecord, SearchBox};
pub use mixture::{
    decomposition_error, gaussian_monopulse, make_mixture_with, make_synthetic_mixture,
    relative_error, MixtureRecipe, StnClass, SyntheticMixture,
};

use crate::decompose::{analyze, default_plan, DecompositionPlan, MaskParams, Method};
use crate::error::{param, Result};
use crate::masks::{masks_enhanced, TransitionBounds};
use crate::median::{tonalness, TonalnessMaps};
use crate::spectral::{istft, stft, Spectrogram};

/// Relative tolerance on the best fitness for a pair to join the candidate set.
pub const CANDIDATE_TOLERANCE: f64 = 0.05;

/// Stage-1 objective: sine error as a function of the stage-1 bounds.
pub struct Stage1Objective {
    spec: Spectrogram,
    maps: TonalnessMaps,
    truth: Vec<f64>,
}

impl Stage1Objective {
    pub fn new(mix: &SyntheticMixture, plan: &DecompositionPlan) -> Result<Self> {
        plan.validate()?;
        let spec = stft(&mix.mixture, &plan.stage1.stft)?;
        let maps = tonalness(&spec.magnitude(), &plan.stage1.median)?;
        Ok(Stage1Objective {
            spec,
            maps,
            truth: mix.sines.clone(),
        })
    }

    pub fn error(&self, bounds: TransitionBounds) -> Result<f64> {
        let masks = masks_enhanced(&self.maps, bounds);
        let sines = istft(&self.spec.masked(&masks.sines)?)?;
        relative_error(&sines, &self.truth)
    }
}

/// Stage-2 objective: transient error of the cascade as a function of the
/// stage-2 bounds, with stage 1 frozen.
pub struct Stage2Objective {
    spec: Spectrogram,
    maps: TonalnessMaps,
    truth: Vec<f64>,
}

impl Stage2Objective {
    pub fn new(
        mix: &SyntheticMixture,
        plan: &DecompositionPlan,
        stage1: TransitionBounds,
    ) -> Result<Self> {
        plan.validate()?;
        let stage2 = plan
            .stage2
            .ok_or_else(|| param("stage-2 objective needs a two-stage plan"))?;
        let spec1 = stft(&mix.mixture, &plan.stage1.stft)?;
        let maps1 = tonalness(&spec1.magnitude(), &plan.stage1.median)?;
        let m1 = masks_enhanced(&maps1, stage1);
        let residual = istft(&spec1.masked(&(&m1.transients + &m1.noise))?)?;
        let spec = stft(&residual, &stage2.stft)?;
        let maps = tonalness(&spec.magnitude(), &stage2.median)?;
        Ok(Stage2Objective {
            spec,
            maps,
            truth: mix.transients.clone(),
        })
    }

    pub fn error(&self, bounds: TransitionBounds) -> Result<f64> {
        let masks = masks_enhanced(&self.maps, bounds);
        let transients = istft(&self.spec.masked(&masks.transients)?)?;
        relative_error(&transients, &self.truth)
    }
}

/// Pairs found by a search. `stage1` is the candidate set `B₁` (or the single
/// frozen pair for a stage-2 run); `final_set` is filled once both stages are
/// known.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundCandidateSet {
    pub stage1: Vec<(TransitionBounds, f64)>,
    pub stage2: Vec<(TransitionBounds, f64)>,
    pub final_set: Option<(TransitionBounds, TransitionBounds)>,
    pub history: Vec<GenerationRecord>,
}

fn enhanced_plan(sample_rate: f64) -> Result<DecompositionPlan> {
    default_plan(Method::Enhanced, sample_rate)
}

fn objective_fn<'a, O>(
    objective: &'a O,
    error: fn(&O, TransitionBounds) -> Result<f64>,
) -> impl Fn(TransitionBounds) -> f64 + Sync + 'a
where
    O: Sync,
{
    move |b| error(objective, b).unwrap_or(f64::INFINITY)
}

pub fn optimize_stage1(mix: &SyntheticMixture, ga: &GaConfig) -> Result<BoundCandidateSet> {
    optimize_stage1_with(mix, &enhanced_plan(mix.sample_rate)?, ga)
}

pub fn optimize_stage1_with(
    mix: &SyntheticMixture,
    plan: &DecompositionPlan,
    ga: &GaConfig,
) -> Result<BoundCandidateSet> {
    let objective = Stage1Objective::new(mix, plan)?;
    let outcome = run_ga(ga, objective_fn(&objective, Stage1Objective::error))?;
    Ok(BoundCandidateSet {
        stage1: outcome.within(CANDIDATE_TOLERANCE),
        stage2: Vec::new(),
        final_set: None,
        history: outcome.history,
    })
}

pub fn optimize_stage2(
    mix: &SyntheticMixture,
    fixed_stage1: TransitionBounds,
    ga: &GaConfig,
) -> Result<BoundCandidateSet> {
    optimize_stage2_with(mix, &enhanced_plan(mix.sample_rate)?, fixed_stage1, ga)
}

pub fn optimize_stage2_with(
    mix: &SyntheticMixture,
    plan: &DecompositionPlan,
    fixed_stage1: TransitionBounds,
    ga: &GaConfig,
) -> Result<BoundCandidateSet> {
    let objective = Stage2Objective::new(mix, plan, fixed_stage1)?;
    let outcome = run_ga(ga, objective_fn(&objective, Stage2Objective::error))?;
    let best = outcome.best.0;
    Ok(BoundCandidateSet {
        stage1: vec![(fixed_stage1, f64::NAN)],
        stage2: outcome.within(CANDIDATE_TOLERANCE),
        final_set: Some((fixed_stage1, best)),
        history: outcome.history,
    })
}

/// Summed sine, transient and noise error of a two-stage enhanced
/// decomposition of one mixture.
pub fn total_error(
    mix: &SyntheticMixture,
    plan: &DecompositionPlan,
    stage1: TransitionBounds,
    stage2: TransitionBounds,
) -> Result<f64> {
    let mut plan = *plan;
    plan.stage1.params = MaskParams::Enhanced(stage1);
    let s2 = plan
        .stage2
        .as_mut()
        .ok_or_else(|| param("total error needs a two-stage plan"))?;
    s2.params = MaskParams::Enhanced(stage2);
    let (_, comps) = analyze(&mix.mixture, &plan)?;
    StnClass::ALL
        .iter()
        .map(|&c| decomposition_error(&comps, mix, c))
        .sum()
}

/// Picks, among `(stage1, stage2)` pairs, the one with the lowest summed
/// per-class error over the given mixture seeds.
pub fn choose_final_set(
    candidates: &[(TransitionBounds, TransitionBounds)],
    seeds: &[u64],
    sample_rate: f64,
) -> Result<((TransitionBounds, TransitionBounds), f64)> {
    if candidates.is_empty() || seeds.is_empty() {
        return Err(param("need at least one candidate and one seed"));
    }
    let plan = enhanced_plan(sample_rate)?;
    let mixes = seeds
        .iter()
        .map(|&s| make_synthetic_mixture(s, sample_rate))
        .collect::<Result<Vec<_>>>()?;
    let mut best: Option<((TransitionBounds, TransitionBounds), f64)> = None;
    for &(b1, b2) in candidates {
        let score = mixes
            .iter()
            .map(|m| total_error(m, &plan, b1, b2))
            .sum::<Result<f64>>()?;
        if best.map_or(true, |(_, s)| score < s) {
            best = Some(((b1, b2), score));
        }
    }
    Ok(best.expect("candidates is non-empty"))
}

/// Whole procedure: stage-1 search, a stage-2 search for each of the `top`
/// best stage-1 candidates, then selection of the final pair over
/// `selection_seeds`.
pub fn optimize_final_set(
    mix: &SyntheticMixture,
    ga: &GaConfig,
    top: usize,
    selection_seeds: &[u64],
) -> Result<BoundCandidateSet> {
    let plan = enhanced_plan(mix.sample_rate)?;
    let s1 = optimize_stage1_with(mix, &plan, ga)?;
    let mut pairs = Vec::new();
    let mut stage2 = Vec::new();
    for &(b1, _) in s1.stage1.iter().take(top.max(1)) {
        let s2 = optimize_stage2_with(mix, &plan, b1, ga)?;
        let (_, b2) = s2.final_set.expect("stage-2 search sets the final pair");
        stage2.extend(s2.stage2.first().copied());
        pairs.push((b1, b2));
    }
    let (chosen, _) = choose_final_set(&pairs, selection_seeds, mix.sample_rate)?;
    Ok(BoundCandidateSet {
        stage1: s1.stage1,
        stage2,
        final_set: Some(chosen),
        history: s1.history,
    })
}
