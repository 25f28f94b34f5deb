//! The run configuration document and dotted-key overrides.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::Experiment;
use crate::analytics::{ChshSettings, DetectorPair, RateModel};
use crate::error::{Error, Result};
use crate::interferometer::FransonConfig;
use crate::montecarlo::{DetectorConfig, RunConfig, SimMode};
use crate::source::{BackgroundModel, SourceParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkSection {
    pub phi_a: f64,
    pub phi_b: f64,
    pub n_bins: u32,
    pub multiport_n: u8,
    pub splitter_transmission: f64,
    pub amzi_transmission: f64,
}

impl Default for NetworkSection {
    fn default() -> Self {
        NetworkSection {
            phi_a: 0.0,
            phi_b: 0.0,
            n_bins: 2,
            multiport_n: 3,
            splitter_transmission: 0.5,
            amzi_transmission: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MonteCarloSection {
    /// Bins simulated per grid point or CHSH setting.
    pub bins: u64,
    pub tau_ps: u64,
    pub seed: Option<u64>,
    pub window_bins: u32,
    pub max_photons: u32,
    /// Channels A1, A2, B1, B2.
    pub detectors: [DetectorConfig; 4],
}

impl Default for MonteCarloSection {
    fn default() -> Self {
        MonteCarloSection {
            bins: 1_000_000,
            tau_ps: 1070,
            seed: None,
            window_bins: 8,
            max_photons: 3,
            detectors: [DetectorConfig::default(); 4],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSection {
    pub chsh: ChshSettings,
    /// Full width of the lag-0 coincidence window; `τ/4` when absent.
    pub coincidence_window_ps: Option<u64>,
    /// Points of every phase grid over one period.
    pub phase_points: usize,
    pub lags: Vec<i32>,
    pub betas: Vec<f64>,
    pub pair: DetectorPair,
    /// Solve the background fraction that gives this mean fringe visibility.
    pub target_visibility: Option<f64>,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        AnalysisSection {
            chsh: ChshSettings::default(),
            coincidence_window_ps: None,
            phase_points: 24,
            lags: (-3..=3).collect(),
            betas: (0..=16).map(|k| k as f64 * 0.05).collect(),
            pair: DetectorPair::A1B1,
            target_visibility: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub source: SourceParams,
    pub background: BackgroundModel,
    pub network: NetworkSection,
    pub montecarlo: MonteCarloSection,
    pub analysis: AnalysisSection,
    pub experiments: Vec<Experiment>,
    pub output_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            source: SourceParams::default(),
            background: BackgroundModel::Coherent,
            network: NetworkSection::default(),
            montecarlo: MonteCarloSection::default(),
            analysis: AnalysisSection::default(),
            experiments: Vec::new(),
            output_dir: PathBuf::from("results"),
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string())
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = serde_json::from_str(text).map_err(config_err)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| e.context(path.display().to_string()))
    }

    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("config is always serializable")
    }

    /// Applies `section.key=value`. The key must already exist in the
    /// document. Values are read as JSON, falling back to a bare string.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::Config(format!(
                "override {assignment:?} has an empty key"
            )));
        }
        let value: Value =
            serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.trim().into()));
        let mut doc = self.to_json();
        let mut slot = &mut doc;
        for part in key.split('.') {
            slot = match slot {
                Value::Object(map) => map.get_mut(part),
                Value::Array(items) => part.parse::<usize>().ok().and_then(|i| items.get_mut(i)),
                _ => None,
            }
            .ok_or_else(|| Error::Config(format!("unknown config key {key:?}")))?;
        }
        *slot = value;
        let updated: PipelineConfig = serde_json::from_value(doc)
            .map_err(|e| Error::Config(format!("override {key}: {e}")))?;
        updated.validate()?;
        *self = updated;
        Ok(())
    }

    pub fn apply_overrides<S: AsRef<str>>(&mut self, assignments: &[S]) -> Result<()> {
        assignments
            .iter()
            .try_for_each(|a| self.apply_override(a.as_ref()))
    }

    pub fn validate(&self) -> Result<()> {
        self.source.validate().map_err(|e| e.context("source"))?;
        self.franson(self.network.phi_a, self.network.phi_b)
            .validate()
            .map_err(|e| e.context("network"))?;
        if !(2..=8).contains(&self.network.multiport_n) {
            return Err(Error::Config(format!(
                "network.multiport_n = {} outside 2..=8",
                self.network.multiport_n
            )));
        }
        let a = &self.analysis;
        if a.phase_points < 5 {
            return Err(Error::Config(
                "analysis.phase_points must be at least 5".into(),
            ));
        }
        if a.lags.is_empty() || a.betas.is_empty() {
            return Err(Error::Config("analysis grids must be non-empty".into()));
        }
        if !matches!(a.pair.a, 1 | 2) || !matches!(a.pair.b, 1 | 2) {
            return Err(Error::Config(format!(
                "analysis.pair {} does not exist",
                a.pair
            )));
        }
        if let Some(v) = a.target_visibility {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::Config(format!("analysis.target_visibility = {v}")));
            }
        }
        if self.window_ps() == 0 {
            return Err(Error::Config("coincidence window is zero".into()));
        }
        let m = &self.montecarlo;
        if m.bins == 0 {
            return Err(Error::Config("montecarlo.bins must be positive".into()));
        }
        for e in &self.experiments {
            e.validate(self)?;
        }
        Ok(())
    }

    pub fn franson(&self, phi_a: f64, phi_b: f64) -> FransonConfig {
        FransonConfig {
            phi_a,
            phi_b,
            n_bins: self.network.n_bins,
            splitter_transmission: self.network.splitter_transmission,
            amzi_transmission: self.network.amzi_transmission,
        }
    }

    pub fn rate_model(&self) -> RateModel {
        RateModel {
            splitter_transmission: self.network.splitter_transmission,
            amzi_transmission: self.network.amzi_transmission,
            ..RateModel::new(self.source).with_background(self.background)
        }
    }

    pub fn window_ps(&self) -> u64 {
        self.analysis
            .coincidence_window_ps
            .unwrap_or(self.montecarlo.tau_ps / 4)
    }

    /// Equally spaced analyzer phases over `[0, 2π)`.
    pub fn phase_grid(&self) -> Vec<f64> {
        let n = self.analysis.phase_points;
        (0..n).map(|k| 2.0 * PI * k as f64 / n as f64).collect()
    }

    pub fn require_seed(&self) -> Result<u64> {
        self.montecarlo
            .seed
            .ok_or_else(|| Error::Config("Monte-Carlo runs need montecarlo.seed".into()))
    }

    /// Simulation of one phase setting; `index` selects an independent
    /// stream family under the configured seed.
    pub fn run_config(&self, phi_a: f64, phi_b: f64, index: u64) -> Result<RunConfig> {
        let seed = self.require_seed()?;
        let m = &self.montecarlo;
        let cfg = RunConfig {
            tau_ps: m.tau_ps,
            source: self.source,
            background: self.background,
            franson: self.franson(phi_a, phi_b),
            mode: SimMode::Franson,
            detectors: m.detectors,
            seed: seed ^ index.wrapping_mul(0xd1b5_4a32_d192_ed03),
            window_bins: m.window_bins,
            max_photons: m.max_photons,
            ..RunConfig::default()
        }
        .with_bins(m.bins);
        cfg.validate()?;
        Ok(cfg)
    }
}
