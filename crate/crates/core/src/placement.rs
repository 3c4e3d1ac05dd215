//! Backward Sequential Sensor Placement (BSSP).
//!
//! Starting from all candidate sensors, the algorithm repeatedly evaluates
//! the target-reconstruction RMSE after each possible single-sensor removal
//! and permanently removes the least critical sensor (the one whose removal
//! leaves the lowest RMSE), until a minimum sensor count is reached. The
//! output is the removal order and the RMSE-versus-count curve.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sensing::{estimate, tune_pipeline, PipelineConfig, SensorSpec, TunedParameters};
use crate::signal::{rmse, trac, TimeSeriesSet};
use crate::structural::{ModalModel, Quantity};

/// Removal rule for step selection.
///
/// The default removes the sensor whose removal leaves the *lowest* RMSE
/// (the least critical sensor). The literal-text mode removes the sensor
/// whose removal leaves the *highest* RMSE instead, i.e. it discards the
/// most informative sensor at every step; it exists for comparison only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum RemovalRule {
    #[default]
    LeastCritical,
    LiteralHighestRmse,
}

/// BSSP settings.
#[derive(Debug, Clone, Default)]
pub struct BsspConfig {
    pub pipeline: PipelineConfig,
    /// Re-tune for every candidate evaluation instead of reusing the
    /// full-set tuning. Much slower; off by default.
    pub retune_per_evaluation: bool,
    pub rule: RemovalRule,
}

/// RMSE of one candidate removal.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CandidateEval {
    pub channel: String,
    pub rmse: f64,
    pub trac: f64,
}

/// One BSSP iteration: the sensor removed and the metrics of the surviving
/// set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BsspStep {
    pub removed: String,
    pub retained: Vec<String>,
    pub rmse: f64,
    pub trac: f64,
    /// Evaluation table for this iteration (one entry per non-failed
    /// candidate removal).
    pub evaluations: Vec<CandidateEval>,
}

/// BSSP result: removal order and the per-cardinality metric curve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BsspResult {
    /// Metrics with the full candidate set, before any removal.
    pub initial_rmse: f64,
    pub initial_trac: f64,
    pub removal_order: Vec<String>,
    pub steps: Vec<BsspStep>,
    /// Set when every candidate evaluation of an iteration failed and the
    /// search stopped early with a partial result.
    pub aborted: bool,
    pub warnings: Vec<String>,
}

impl BsspResult {
    /// `(sensor_count, rmse)` pairs from the full set down to the stop.
    pub fn rmse_curve(&self) -> Vec<(usize, f64)> {
        let n0 = self.steps.first().map_or(0, |s| s.retained.len() + 1);
        let mut curve = vec![(n0, self.initial_rmse)];
        curve.extend(self.steps.iter().map(|s| (s.retained.len(), s.rmse)));
        curve
    }
}

fn score_set(
    data: &TimeSeriesSet,
    modal: &ModalModel,
    observing: &[SensorSpec],
    target: (usize, Quantity),
    reference: &[f64],
    params: &TunedParameters,
) -> Result<(f64, f64)> {
    let result = estimate(data, modal, observing, &[target], params)?;
    let reconstructed: Vec<f64> = result.outputs.mean.row(0).iter().copied().collect();
    Ok((
        rmse(reference, &reconstructed)?,
        trac(reference, &reconstructed)?,
    ))
}

/// Runs BSSP for reconstructing `target` from the `candidates` channels,
/// scoring against `reference` (the noise-free simulated target when ground
/// truth exists, a held-out measurement otherwise).
///
/// Tuning is performed once on the full candidate set and reused unless
/// `retune_per_evaluation` is set. Failed candidate evaluations are skipped
/// with a warning; if every candidate of an iteration fails, the search
/// aborts and returns the partial result with `aborted` set.
pub fn run_bssp(
    data: &TimeSeriesSet,
    modal: &ModalModel,
    candidates: &[SensorSpec],
    target: (usize, Quantity),
    reference: &[f64],
    min_sensors: usize,
    cfg: &BsspConfig,
) -> Result<BsspResult> {
    if min_sensors == 0 {
        return Err(Error::InvalidInput("min_sensors must be at least 1".into()));
    }
    if candidates.len() <= min_sensors {
        return Err(Error::InvalidInput(format!(
            "need more than {min_sensors} candidates, got {}",
            candidates.len()
        )));
    }
    if reference.len() != data.n_samples() {
        return Err(Error::InvalidInput(
            "reference series length does not match the data".into(),
        ));
    }

    let shared = tune_pipeline(data, modal, candidates, &cfg.pipeline)?;
    let mut warnings = Vec::new();

    let (initial_rmse, initial_trac) =
        score_set(data, modal, candidates, target, reference, &shared)?;

    let mut retained: Vec<SensorSpec> = candidates.to_vec();
    let mut removal_order = Vec::new();
    let mut steps = Vec::new();
    let mut aborted = false;

    while retained.len() > min_sensors {
        let evals: Vec<(usize, Result<(f64, f64)>)> = (0..retained.len())
            .into_par_iter()
            .map(|i| {
                let subset: Vec<SensorSpec> = retained
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, s)| s.clone())
                    .collect();
                let outcome = if cfg.retune_per_evaluation {
                    tune_pipeline(data, modal, &subset, &cfg.pipeline).and_then(|p| {
                        score_set(data, modal, &subset, target, reference, &p)
                    })
                } else {
                    score_set(data, modal, &subset, target, reference, &shared)
                };
                (i, outcome)
            })
            .collect();

        let mut table = Vec::new();
        let mut chosen: Option<(usize, f64, f64)> = None;
        for (i, outcome) in evals {
            match outcome {
                Ok((r, t)) => {
                    table.push(CandidateEval {
                        channel: retained[i].name.clone(),
                        rmse: r,
                        trac: t,
                    });
                    let better = match (cfg.rule, chosen) {
                        (_, None) => true,
                        (RemovalRule::LeastCritical, Some((_, best, _))) => r < best,
                        (RemovalRule::LiteralHighestRmse, Some((_, best, _))) => r > best,
                    };
                    if better {
                        chosen = Some((i, r, t));
                    }
                }
                Err(e) => {
                    warnings.push(format!(
                        "evaluation without '{}' failed: {e}",
                        retained[i].name
                    ));
                }
            }
        }

        let Some((idx, step_rmse, step_trac)) = chosen else {
            warnings.push(format!(
                "all candidate evaluations failed at {} sensors; aborting",
                retained.len()
            ));
            aborted = true;
            break;
        };

        let removed = retained.remove(idx);
        removal_order.push(removed.name.clone());
        steps.push(BsspStep {
            removed: removed.name,
            retained: retained.iter().map(|s| s.name.clone()).collect(),
            rmse: step_rmse,
            trac: step_trac,
            evaluations: table,
        });
    }

    Ok(BsspResult {
        initial_rmse,
        initial_trac,
        removal_order,
        steps,
        aborted,
        warnings,
    })
}
