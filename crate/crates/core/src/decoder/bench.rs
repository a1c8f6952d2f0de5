use std::time::Instant;

use crate::error::{Error, Result};

/// Real-time factors of a benchmark run.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    /// Median real-time factor of each utterance over the repetitions.
    pub per_utterance: Vec<f64>,
    /// Median over utterances (RT50).
    pub rt50: f64,
    pub repetitions: usize,
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Times `run` on every input `repetitions` times. `durations` are the audio
/// lengths in seconds; the real-time factor is wall-clock time over duration.
pub fn benchmark<I>(
    inputs: &[I],
    durations: &[f64],
    repetitions: usize,
    mut run: impl FnMut(&I) -> Result<()>,
) -> Result<BenchReport> {
    if inputs.len() != durations.len() {
        return Err(Error::InvalidInput(format!(
            "{} inputs but {} durations",
            inputs.len(),
            durations.len()
        )));
    }
    if inputs.is_empty() || repetitions == 0 {
        return Err(Error::InvalidInput("benchmark needs inputs and at least one repetition".into()));
    }
    if let Some(d) = durations.iter().find(|d| !(d.is_finite() && **d > 0.0)) {
        return Err(Error::InvalidInput(format!("utterance duration must be positive, got {d}")));
    }
    let mut per_utterance = Vec::with_capacity(inputs.len());
    for (input, &duration) in inputs.iter().zip(durations) {
        let mut rtfs = Vec::with_capacity(repetitions);
        for _ in 0..repetitions {
            let t = Instant::now();
            run(input)?;
            rtfs.push(t.elapsed().as_secs_f64() / duration);
        }
        per_utterance.push(median(&rtfs));
    }
    Ok(BenchReport {
        rt50: median(&per_utterance),
        per_utterance,
        repetitions,
    })
}
