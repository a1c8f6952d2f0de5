use crate::error::{Error, Result};

/// Search parameters. Scores are negative log10 values.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderConfig {
    /// Hypotheses scoring more than `beam` above the frame's best are dropped.
    pub beam: f64,
    pub max_active: usize,
    pub acoustic_scale: f64,
    /// Apply the rescoring LM when one is supplied.
    pub rescoring: bool,
    /// Multiplier of phrase completion bonuses; must be zero or negative.
    pub bias_strength: f64,
    /// Require a blank between two identical consecutive labels and allow
    /// repeated frames of the last label. When off only blank self-loops exist.
    pub strict_ctc: bool,
    /// Rounds of epsilon expansion per frame.
    pub max_epsilon_depth: usize,
    /// Audio seconds covered by one posterior step.
    pub step_seconds: f64,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            beam: 12.0,
            max_active: 2000,
            acoustic_scale: 1.0,
            rescoring: true,
            bias_strength: 0.0,
            strict_ctc: true,
            max_epsilon_depth: 8,
            step_seconds: 0.03,
        }
    }
}

impl DecoderConfig {
    /// A configuration that never prunes.
    pub fn exhaustive() -> Self {
        Self {
            beam: f64::INFINITY,
            max_active: usize::MAX,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.beam.is_nan() || self.beam <= 0.0 {
            return Err(Error::Config(format!("beam must be positive, got {}", self.beam)));
        }
        if self.max_active == 0 {
            return Err(Error::Config("max active hypotheses must be at least 1".into()));
        }
        if !(self.acoustic_scale.is_finite() && self.acoustic_scale > 0.0) {
            return Err(Error::Config(format!("acoustic scale must be positive, got {}", self.acoustic_scale)));
        }
        if !(self.bias_strength.is_finite() && self.bias_strength <= 0.0) {
            return Err(Error::Config(format!(
                "bias strength must be finite and <= 0, got {}",
                self.bias_strength
            )));
        }
        if self.max_epsilon_depth == 0 {
            return Err(Error::Config("epsilon depth must be at least 1".into()));
        }
        if !(self.step_seconds.is_finite() && self.step_seconds > 0.0) {
            return Err(Error::Config("step duration must be positive".into()));
        }
        Ok(())
    }
}
