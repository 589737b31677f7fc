//! Flat `key = value` run configuration, merged as
//! command-line flag > config file > built-in default.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use stn::decompose::{default_plan, DecompositionPlan, MaskParams, Method, StagePlan};
use stn::masks::{HprBeta, TransitionBounds};
use stn::median::MedianConfig;
use stn::optimize::GaConfig;
use stn::spectral::StftConfig;
use stn::structure_tensor::StConfig;
use stn::tsm::{TransientParams, TsmRequest};
use stn::{Error, Result};

use crate::wav::BitDepth;

const STAGE_KEYS: [&str; 6] = ["window", "hop", "median_h", "median_v", "beta_upper", "beta_lower"];

const GLOBAL_KEYS: &[&str] = &[
    "method",
    "stages",
    "sample_rate",
    "hpr.beta",
    "st.derivative_scale",
    "st.sigma_time",
    "st.sigma_freq",
    "st.anisotropy",
    "st.rate_sines",
    "st.rate_transients",
    "ga.population",
    "ga.generations",
    "ga.mutation_rate",
    "ga.crossover_rate",
    "ga.mutation_sigma",
    "ga.tournament",
    "ga.elitism",
    "ga.seed",
    "tsm.factor",
    "tsm.window",
    "tsm.hop",
    "tsm.threshold_db",
    "tsm.min_separation_ms",
    "tsm.pre_ms",
    "tsm.post_ms",
    "tsm.seed",
    "output.bit_depth",
];

pub fn is_known_key(key: &str) -> bool {
    if GLOBAL_KEYS.contains(&key) {
        return true;
    }
    match key.split_once('.') {
        Some(("stage1" | "stage2", rest)) => STAGE_KEYS.contains(&rest),
        _ => false,
    }
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Parameter(format!("config line {}: expected key = value", n + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if !is_known_key(k) {
            return Err(Error::Parameter(format!("config line {}: unknown key {k:?}", n + 1)));
        }
        map.insert(k.to_string(), v.to_string());
    }
    Ok(map)
}

pub fn load_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}

/// Merged configuration. Typed views are built on demand; [`RunConfig::new`]
/// builds each once so invalid values are reported up front.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl RunConfig {
    /// Later layers override earlier ones.
    pub fn new(layers: &[BTreeMap<String, String>]) -> Result<Self> {
        let mut values = BTreeMap::new();
        for layer in layers {
            for (k, v) in layer {
                if !is_known_key(k) {
                    return Err(Error::Parameter(format!("unknown configuration key {k:?}")));
                }
                values.insert(k.clone(), v.clone());
            }
        }
        let cfg = RunConfig { values };
        let fs = cfg.sample_rate()?;
        cfg.plan(fs)?;
        cfg.ga()?;
        cfg.tsm_request(fs)?;
        cfg.bit_depth()?;
        Ok(cfg)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.raw(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|_| Error::Parameter(format!("invalid value {v:?} for {key}")))
            })
            .transpose()
    }

    fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn method(&self) -> Result<Method> {
        self.raw("method").map_or(Ok(Method::Enhanced), str::parse)
    }

    pub fn sample_rate(&self) -> Result<f64> {
        self.get_or("sample_rate", 44100.0)
    }

    pub fn bit_depth(&self) -> Result<BitDepth> {
        self.raw("output.bit_depth").map_or(Ok(BitDepth::Float32), str::parse)
    }

    fn stage_stft(&self, prefix: &str, base: StftConfig) -> Result<StftConfig> {
        let window = self.get_or(&format!("{prefix}.window"), base.window_length)?;
        let default_hop = if window == base.window_length { base.hop } else { window / 4 };
        let hop = self.get_or(&format!("{prefix}.hop"), default_hop)?;
        StftConfig::new(window, hop, base.sample_rate)
    }

    fn stage_plan(&self, idx: usize, method: Method, base: StagePlan) -> Result<StagePlan> {
        let prefix = format!("stage{idx}");
        let stft = self.stage_stft(&prefix, base.stft)?;
        let median = MedianConfig::new(
            self.get_or(&format!("{prefix}.median_h"), base.median.horizontal)?,
            self.get_or(&format!("{prefix}.median_v"), base.median.vertical)?,
        )?;
        let params = match (method, base.params) {
            (Method::Enhanced, MaskParams::Enhanced(b)) => MaskParams::Enhanced(TransitionBounds::new(
                self.get_or(&format!("{prefix}.beta_upper"), b.upper())?,
                self.get_or(&format!("{prefix}.beta_lower"), b.lower())?,
            )?),
            (Method::Hpr, MaskParams::Hpr(b)) => MaskParams::Hpr(HprBeta::new(self.get_or("hpr.beta", b.get())?)?),
            (Method::St, MaskParams::St(_)) => MaskParams::St(self.st_config()?),
            (_, p) => p,
        };
        Ok(StagePlan { stft, median, params })
    }

    pub fn st_config(&self) -> Result<StConfig> {
        let d = StConfig::default();
        let cfg = StConfig {
            derivative_scale: self.get_or("st.derivative_scale", d.derivative_scale)?,
            smoothing_sigma_time: self.get_or("st.sigma_time", d.smoothing_sigma_time)?,
            smoothing_sigma_freq: self.get_or("st.sigma_freq", d.smoothing_sigma_freq)?,
            anisotropy_threshold: self.get_or("st.anisotropy", d.anisotropy_threshold)?,
            rate_threshold_sines: self.get_or("st.rate_sines", d.rate_threshold_sines)?,
            rate_threshold_transients: self.get_or("st.rate_transients", d.rate_threshold_transients)?,
            log_floor: d.log_floor,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Median lengths of the first stage, also used by the noise histogram.
    pub fn median(&self) -> Result<MedianConfig> {
        let d = MedianConfig::default();
        MedianConfig::new(
            self.get_or("stage1.median_h", d.horizontal)?,
            self.get_or("stage1.median_v", d.vertical)?,
        )
    }

    pub fn plan(&self, sample_rate: f64) -> Result<DecompositionPlan> {
        let method = self.method()?;
        let mut plan = default_plan(method, sample_rate)?;
        match self.get::<usize>("stages")? {
            None => {}
            Some(1) => plan = plan.single_stage(),
            Some(2) => plan = plan.two_stage()?,
            Some(n) => return Err(Error::Parameter(format!("stages must be 1 or 2, got {n}"))),
        }
        plan.stage1 = self.stage_plan(1, method, plan.stage1)?;
        if let Some(s2) = plan.stage2 {
            plan.stage2 = Some(self.stage_plan(2, method, s2)?);
        }
        plan.validate()?;
        Ok(plan)
    }

    pub fn ga(&self) -> Result<GaConfig> {
        let d = GaConfig::default();
        let cfg = GaConfig {
            population: self.get_or("ga.population", d.population)?,
            generations: self.get_or("ga.generations", d.generations)?,
            mutation_rate: self.get_or("ga.mutation_rate", d.mutation_rate)?,
            crossover_rate: self.get_or("ga.crossover_rate", d.crossover_rate)?,
            mutation_sigma: self.get_or("ga.mutation_sigma", d.mutation_sigma)?,
            tournament_size: self.get_or("ga.tournament", d.tournament_size)?,
            elitism: self.get_or("ga.elitism", d.elitism)?,
            seed: self.get_or("ga.seed", d.seed)?,
            search_box: d.search_box,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn tsm_request(&self, sample_rate: f64) -> Result<TsmRequest> {
        let mut req = TsmRequest::new(self.get_or("tsm.factor", 1.0)?, self.plan(sample_rate)?)?;
        let window = self.get_or("tsm.window", req.pv_stft.window_length)?;
        let hop = self.get_or("tsm.hop", if window == req.pv_stft.window_length { req.pv_stft.hop } else { window / 4 })?;
        req.pv_stft = StftConfig::new(window, hop, sample_rate)?;
        let d = TransientParams::default();
        req.transient_detect = TransientParams {
            threshold_db: self.get_or("tsm.threshold_db", d.threshold_db)?,
            min_separation_ms: self.get_or("tsm.min_separation_ms", d.min_separation_ms)?,
            pre_ms: self.get_or("tsm.pre_ms", d.pre_ms)?,
            post_ms: self.get_or("tsm.post_ms", d.post_ms)?,
        };
        req.seed = self.get_or("tsm.seed", 0)?;
        req.validate()?;
        Ok(req)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layer(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn parses_comments_and_blanks() {
        let m = parse_config("# header\n\nmethod = fz  # trailing\n stage1.window=2048\n").unwrap();
        assert_eq!(m.get("method").unwrap(), "fz");
        assert_eq!(m.get("stage1.window").unwrap(), "2048");
        assert!(parse_config("nonsense").is_err());
        assert!(parse_config("stage3.window = 4").is_err());
    }

    #[test]
    fn defaults_match_default_plan() {
        let cfg = RunConfig::new(&[]).unwrap();
        assert_eq!(cfg.plan(44100.0).unwrap(), default_plan(Method::Enhanced, 44100.0).unwrap());
        assert_eq!(cfg.bit_depth().unwrap(), BitDepth::Float32);
    }

    #[test]
    fn later_layers_win() {
        let file = layer(&[("stage1.beta_upper", "0.9"), ("stage1.beta_lower", "0.6")]);
        let cli = layer(&[("stage1.beta_upper", "0.95")]);
        let cfg = RunConfig::new(&[file, cli]).unwrap();
        let plan = cfg.plan(44100.0).unwrap();
        assert_eq!(plan.stage1.params, MaskParams::Enhanced(TransitionBounds::new(0.95, 0.6).unwrap()));
    }

    #[test]
    fn window_override_sets_quarter_hop() {
        let cfg = RunConfig::new(&[layer(&[("stage2.window", "1024")])]).unwrap();
        let s2 = cfg.plan(44100.0).unwrap().stage2.unwrap();
        assert_eq!((s2.stft.window_length, s2.stft.hop), (1024, 256));
    }

    #[test]
    fn invalid_values_rejected_at_load() {
        for (k, v) in [
            ("stage1.beta_upper", "0.4"),
            ("method", "nmf"),
            ("stages", "3"),
            ("ga.population", "2"),
            ("tsm.factor", "-1"),
            ("output.bit_depth", "pcm8"),
            ("stage1.window", "1000x"),
        ] {
            assert!(RunConfig::new(&[layer(&[(k, v)])]).is_err(), "{k} = {v}");
        }
    }
}
