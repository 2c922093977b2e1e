//! Score normalization, bootstrap aggregation, the consistency scale,
//! failure tallies, and ordinary least squares.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EvalError;

/// Affine map of a 1-4 rubric score onto [0, 100].
pub fn normalize_rubric(score: u8) -> Result<f64, EvalError> {
    if !(1..=4).contains(&score) {
        return Err(EvalError::OutOfRange(score as i64));
    }
    Ok((score as f64 - 1.0) / 3.0 * 100.0)
}

/// Doctor-report consistency levels: significantly inconsistent (1),
/// slightly inconsistent (2), mostly consistent (3).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsistencyLevel(u8);

impl ConsistencyLevel {
    pub fn new(level: u8) -> Result<Self, EvalError> {
        if !(1..=3).contains(&level) {
            return Err(EvalError::OutOfRange(level as i64));
        }
        Ok(ConsistencyLevel(level))
    }

    pub fn level(self) -> u8 {
        self.0
    }
}

/// Affine map of a consistency level onto [0, 100].
pub fn consistency_to_score(level: ConsistencyLevel) -> f64 {
    (level.0 as f64 - 1.0) / 2.0 * 100.0
}

/// One consistency annotation per line, as an integer in 1..=3.
pub fn parse_consistency_file(text: &str) -> Result<Vec<ConsistencyLevel>, EvalError> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            let level: u8 = l.parse().map_err(|_| EvalError::OutOfRange(-1))?;
            ConsistencyLevel::new(level)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateScore {
    pub mean: f64,
    pub bootstrap_sd: f64,
    pub n: usize,
    pub resamples: usize,
    pub seed: u64,
}

/// Arithmetic mean plus the standard deviation of `resamples` bootstrap
/// resample means (n-with-replacement, seeded).
pub fn aggregate_scores(
    values: &[f64],
    resamples: usize,
    seed: u64,
) -> Result<AggregateScore, EvalError> {
    if values.is_empty() || resamples == 0 {
        return Err(EvalError::EmptySample);
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut resample_means = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let mut sum = 0.0;
        for _ in 0..n {
            sum += values[rng.gen_range(0..n)];
        }
        resample_means.push(sum / n as f64);
    }
    let grand = resample_means.iter().sum::<f64>() / resamples as f64;
    let bootstrap_sd = if resamples > 1 {
        let ss: f64 = resample_means.iter().map(|m| (m - grand).powi(2)).sum();
        (ss / (resamples as f64 - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(AggregateScore { mean, bootstrap_sd, n, resamples, seed })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r: f64,
}

/// Ordinary least squares with the Pearson correlation coefficient.
pub fn fit_linear(x: &[f64], y: &[f64]) -> Result<LinearFit, EvalError> {
    if x.len() != y.len() {
        return Err(EvalError::LengthMismatch { x: x.len(), y: y.len() });
    }
    if x.len() < 2 {
        return Err(EvalError::EmptySample);
    }
    let n = x.len() as f64;
    let mean_x = x.iter().sum::<f64>() / n;
    let mean_y = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (&xi, &yi) in x.iter().zip(y) {
        sxx += (xi - mean_x) * (xi - mean_x);
        syy += (yi - mean_y) * (yi - mean_y);
        sxy += (xi - mean_x) * (yi - mean_y);
    }
    if sxx == 0.0 {
        return Err(EvalError::DegenerateX);
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let r = if syy == 0.0 { 1.0 } else { sxy / (sxx.sqrt() * syy.sqrt()) };
    Ok(LinearFit { slope, intercept, r })
}

/// The closed taxonomy of misdiagnosis causes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FailureLabel {
    OmissionOfAuxiliaryExaminations,
    ExclusiveFocusOnComplications,
    ErroneousJudgment,
}

impl FailureLabel {
    pub const ALL: [FailureLabel; 3] = [
        FailureLabel::OmissionOfAuxiliaryExaminations,
        FailureLabel::ExclusiveFocusOnComplications,
        FailureLabel::ErroneousJudgment,
    ];

    pub fn parse(token: &str) -> Result<Self, EvalError> {
        match token {
            "OmissionOfAuxiliaryExaminations" => Ok(FailureLabel::OmissionOfAuxiliaryExaminations),
            "ExclusiveFocusOnComplications" => Ok(FailureLabel::ExclusiveFocusOnComplications),
            "ErroneousJudgment" => Ok(FailureLabel::ErroneousJudgment),
            other => Err(EvalError::UnknownLabel(other.to_string())),
        }
    }
}

/// One label token per line.
pub fn parse_failure_labels(text: &str) -> Result<Vec<FailureLabel>, EvalError> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(FailureLabel::parse)
        .collect()
}

pub fn tally_failures(labels: &[FailureLabel]) -> BTreeMap<FailureLabel, usize> {
    let mut tally: BTreeMap<FailureLabel, usize> =
        FailureLabel::ALL.iter().map(|l| (*l, 0)).collect();
    for label in labels {
        *tally.get_mut(label).expect("closed enum") += 1;
    }
    tally
}
