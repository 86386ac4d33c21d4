//! Run configuration: one TOML file with a section per pipeline stage.

use std::path::Path;

use lanepred::evaluation::DecisionRule;
use lanepred::pipeline::{PrepareConfig, TrainSettings};
use lanepred::report::sha256_hex;
use lanepred::synth::ScenarioConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusSection {
    pub recordings: usize,
}

impl Default for CorpusSection {
    fn default() -> Self {
        Self { recordings: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationSection {
    /// Held-out fold, 1-based.
    pub fold: u8,
    pub density_bin_width: f64,
    /// Gate probability that counts as a stable decision; argmax when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decision_threshold: Option<f64>,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        Self {
            fold: 6,
            density_bin_width: 1.0,
            decision_threshold: None,
        }
    }
}

impl EvaluationSection {
    pub fn rule(&self) -> DecisionRule {
        self.decision_threshold
            .map_or(DecisionRule::Argmax, DecisionRule::Threshold)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    /// Seeds corpus generation, fold assignment, undersampling and training.
    pub seed: u64,
    pub corpus: CorpusSection,
    pub synth: ScenarioConfig,
    pub prepare: PrepareConfig,
    pub train: TrainSettings,
    pub evaluation: EvaluationSection,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub fold: Option<u8>,
    pub horizon: Option<f64>,
    pub density_bin_width: Option<f64>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.message().to_string())
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        Self::parse(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn apply(mut self, o: Overrides) -> Self {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(f) = o.fold {
            self.evaluation.fold = f;
        }
        if let Some(h) = o.horizon {
            self.prepare.horizon = h;
        }
        if let Some(w) = o.density_bin_width {
            self.evaluation.density_bin_width = w;
        }
        self.synth.seed = self.seed;
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        self.synth.validate().map_err(|e| e.to_string())?;
        self.prepare.schema().map_err(|e| e.to_string())?;
        self.prepare.grid().map_err(|e| e.to_string())?;
        if self.corpus.recordings == 0 {
            return Err("corpus.recordings must be at least 1".into());
        }
        let folds = self.prepare.folds;
        if !(1..=folds).contains(&(self.evaluation.fold as usize)) {
            return Err(format!(
                "evaluation fold {} outside 1..={folds}",
                self.evaluation.fold
            ));
        }
        if self.evaluation.density_bin_width.is_nan() || self.evaluation.density_bin_width <= 0.0 {
            return Err("evaluation.density_bin_width must be positive".into());
        }
        if let Some(p) = self.evaluation.decision_threshold {
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("decision_threshold {p} outside [0, 1]"));
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).unwrap_or_default()
    }

    /// SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> String {
        sha256_hex(self.to_toml().as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = Config::default();
        assert_eq!(Config::parse(&c.to_toml()).unwrap(), c);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn unknown_key_is_named() {
        let err = Config::parse("[prepare]\nhorizonn = 4.0\n").unwrap_err();
        assert!(err.contains("horizonn"), "{err}");
        let err = Config::parse("[train.gate]\nhiden = 3\n").unwrap_err();
        assert!(err.contains("hiden"), "{err}");
        let err = Config::parse("bogus = 1\n").unwrap_err();
        assert!(err.contains("bogus"), "{err}");
    }

    #[test]
    fn partial_sections_keep_defaults() {
        let c = Config::parse("seed = 3\n[evaluation]\nfold = 2\n[synth]\nlanes = 2\n").unwrap();
        assert_eq!((c.seed, c.evaluation.fold, c.synth.lanes), (3, 2, 2));
        assert_eq!(c.prepare, PrepareConfig::default());
    }

    #[test]
    fn overrides_and_hash() {
        let base = Config::default();
        let c = base.clone().apply(Overrides {
            seed: Some(9),
            horizon: Some(4.0),
            ..Default::default()
        });
        assert_eq!((c.seed, c.synth.seed, c.prepare.horizon), (9, 9, 4.0));
        assert_ne!(c.hash(), base.hash());
        assert_eq!(c.hash(), c.clone().hash());
        assert_eq!(c.hash().len(), 64);
    }

    #[test]
    fn validation_catches_bad_fold() {
        let mut c = Config::default();
        c.evaluation.fold = 7;
        assert!(c.validate().unwrap_err().contains("fold 7"));
    }
}
