//! End-to-end virtual sensing: tuned estimation runs, targeted
//! reconstruction with held-out validation, and leave-one-out
//! cross-validation across sensor locations.
//!
//! Data channels are bound to the structural model by explicit
//! `(name, dof, quantity)` entries, so observation rows follow the data
//! ordering and duplicate sensors are representable. Reconstructed and
//! measured series are compared as provided; apply any preprocessing to the
//! data set before estimation so both sides see identical filtering.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{to_state_space, Matern32Params};
use crate::model::{
    assemble, extract_forces, kalman_filter, project_states, rts_smooth, virtual_observation_rows,
    AugmentedModel, EstimationResult,
};
use crate::signal::{rmse, trac, TimeSeriesSet};
use crate::structural::{
    build_continuous, discretize, ContinuousStateSpace, ModalModel, Quantity, SensorLayout,
};
use crate::tuning::{tune_prior, tune_r, RTuneConfig, ThetaEstimate, TuningConfig};

/// Binding of one data channel to a model DOF and quantity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensorSpec {
    pub name: String,
    pub dof: usize,
    pub quantity: Quantity,
}

impl SensorSpec {
    pub fn new(name: impl Into<String>, dof: usize, quantity: Quantity) -> Self {
        Self {
            name: name.into(),
            dof,
            quantity,
        }
    }

    /// Specs matching a layout's canonical channel order and names.
    pub fn from_layout(layout: &SensorLayout) -> Vec<SensorSpec> {
        layout
            .channels()
            .iter()
            .zip(layout.channel_names())
            .map(|(&(dof, quantity), name)| SensorSpec {
                name,
                dof,
                quantity,
            })
            .collect()
    }
}

/// A reconstruction target: either a held-out data channel (validated
/// against its measurement) or a purely virtual location.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum TargetSpec {
    Channel(String),
    Virtual { dof: usize, quantity: Quantity },
}

/// Tuning settings for a full estimation pipeline.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub prior: TuningConfig,
    pub noise: RTuneConfig,
    /// Re-tune inside every leave-one-out fold (the default); clearing this
    /// reuses one shared tuning across folds, which is much faster.
    pub retune_per_fold: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            prior: TuningConfig::default(),
            noise: RTuneConfig::default(),
            retune_per_fold: true,
        }
    }
}

impl PipelineConfig {
    /// Shared-tuning configuration with a reduced search budget.
    pub fn fast() -> Self {
        Self {
            prior: TuningConfig {
                restarts: 4,
                max_iters: 60,
                ..TuningConfig::default()
            },
            noise: RTuneConfig {
                grid_points: 9,
                max_iters: 40,
                ..RTuneConfig::default()
            },
            retune_per_fold: false,
        }
    }
}

/// Tuned pipeline parameters: GP prior, structural noise scalar, and one
/// measurement-noise variance per quantity group.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TunedParameters {
    pub alpha: f64,
    pub ell: f64,
    pub qx: f64,
    /// `(quantity, variance)` pairs for the groups present.
    pub r_groups: Vec<(Quantity, f64)>,
    pub hellinger: f64,
    pub prediction_rmse: f64,
    pub r_flat: bool,
}

impl TunedParameters {
    pub fn r_for(&self, q: Quantity) -> Option<f64> {
        self.r_groups.iter().find(|(g, _)| *g == q).map(|(_, v)| *v)
    }

    fn theta(&self) -> ThetaEstimate {
        ThetaEstimate {
            alpha: self.alpha,
            ell: self.ell,
            qx: self.qx,
        }
    }
}

fn quantity_groups(specs: &[SensorSpec]) -> Vec<Quantity> {
    let mut groups = Vec::new();
    for q in [
        Quantity::Acceleration,
        Quantity::Velocity,
        Quantity::Displacement,
    ] {
        if specs.iter().any(|s| s.quantity == q) {
            groups.push(q);
        }
    }
    groups
}

/// Continuous model with observation rows stacked in `specs` order (the
/// canonical layout reorders by quantity, which must not happen here).
fn stacked_continuous(modal: &ModalModel, specs: &[SensorSpec]) -> Result<ContinuousStateSpace> {
    if specs.is_empty() {
        return Err(Error::InvalidInput("no observing channels".into()));
    }
    let n_r = modal.n_modes();
    let mut gc = DMatrix::zeros(specs.len(), 2 * n_r);
    let mut jc = DMatrix::zeros(specs.len(), n_r);
    let mut ac_bc = None;
    for (row, spec) in specs.iter().enumerate() {
        let single = SensorLayout::from_channels(&[(spec.dof, spec.quantity)], modal.n_dof())?;
        let css = build_continuous(modal, &single)?;
        gc.row_mut(row).copy_from(&css.gc.row(0));
        jc.row_mut(row).copy_from(&css.jc.row(0));
        if ac_bc.is_none() {
            ac_bc = Some((css.ac, css.bc));
        }
    }
    let (ac, bc) = ac_bc.expect("specs nonempty");
    Ok(ContinuousStateSpace { ac, bc, gc, jc })
}

/// Assembles the augmented estimation model for the given channels, prior
/// parameters, and per-group measurement noise.
pub fn estimation_model(
    modal: &ModalModel,
    specs: &[SensorSpec],
    dt: f64,
    theta: &ThetaEstimate,
    r_groups: &[(Quantity, f64)],
) -> Result<AugmentedModel> {
    let css = stacked_continuous(modal, specs)?;
    let dss = discretize(&css, dt)?;
    let params = Matern32Params::new(theta.alpha, theta.ell)?;
    let gp = to_state_space(&params, dt)?;
    let gps = vec![gp; modal.n_modes()];
    let n_struct = 2 * modal.n_modes();
    let qx = DMatrix::identity(n_struct, n_struct) * theta.qx;
    let mut r = DMatrix::zeros(specs.len(), specs.len());
    for (i, spec) in specs.iter().enumerate() {
        let var = r_groups
            .iter()
            .find(|(q, _)| *q == spec.quantity)
            .map(|(_, v)| *v)
            .ok_or_else(|| {
                Error::InvalidInput(format!(
                    "no noise variance for {} channels",
                    spec.quantity.short_name()
                ))
            })?;
        r[(i, i)] = var;
    }
    assemble(&dss, &gps, &qx, &r)
}

/// Runs the two-stage tuning (covariance matching, then measurement noise)
/// on the given observing channels.
pub fn tune_pipeline(
    data: &TimeSeriesSet,
    modal: &ModalModel,
    specs: &[SensorSpec],
    cfg: &PipelineConfig,
) -> Result<TunedParameters> {
    let names: Vec<&str> = specs.iter().map(|s| s.name.as_str()).collect();
    let obs = data.to_observations(&names)?;
    let dt = 1.0 / data.fs;
    let groups = quantity_groups(specs);

    // Stage 1: Hellinger covariance matching over (alpha, ell, qx). The
    // stationary output covariance does not involve R; a placeholder is
    // used in the build. Duplicate sensors make the model-implied
    // covariance singular without adding information, so the match runs on
    // the distinct (dof, quantity) channels only.
    let mut distinct: Vec<SensorSpec> = Vec::new();
    for s in specs {
        if !distinct
            .iter()
            .any(|d| d.dof == s.dof && d.quantity == s.quantity)
        {
            distinct.push(s.clone());
        }
    }
    let distinct_names: Vec<&str> = distinct.iter().map(|s| s.name.as_str()).collect();
    let distinct_obs = data.to_observations(&distinct_names)?;
    let placeholder: Vec<(Quantity, f64)> = groups.iter().map(|&q| (q, 1.0)).collect();
    let prior_res = tune_prior(
        |theta| estimation_model(modal, &distinct, dt, theta, &placeholder),
        &distinct_obs,
        &cfg.prior,
    )?;

    // Stage 2: per-group measurement noise by prediction RMSE.
    let theta = prior_res.theta;
    let r_res = tune_r(
        |vars| {
            let r_groups: Vec<(Quantity, f64)> =
                groups.iter().zip(vars).map(|(&q, &v)| (q, v)).collect();
            estimation_model(modal, specs, dt, &theta, &r_groups)
        },
        &obs,
        groups.len(),
        &cfg.noise,
    )?;

    Ok(TunedParameters {
        alpha: theta.alpha,
        ell: theta.ell,
        qx: theta.qx,
        r_groups: groups
            .iter()
            .zip(&r_res.variances)
            .map(|(&q, &v)| (q, v))
            .collect(),
        hellinger: prior_res.objective,
        prediction_rmse: r_res.rmse,
        r_flat: r_res.flat,
    })
}

/// Joint input-state estimation over the observing channels, with response
/// reconstruction at the requested `(dof, quantity)` targets.
pub fn estimate(
    data: &TimeSeriesSet,
    modal: &ModalModel,
    specs: &[SensorSpec],
    targets: &[(usize, Quantity)],
    params: &TunedParameters,
) -> Result<EstimationResult> {
    let names: Vec<&str> = specs.iter().map(|s| s.name.as_str()).collect();
    let obs = data.to_observations(&names)?;
    let dt = 1.0 / data.fs;
    let m = estimation_model(modal, specs, dt, &params.theta(), &params.r_groups)?;

    let fr = kalman_filter(&m, &obs, &m.initial_state())?;
    let smoothed = rts_smooth(&m, &fr)?;
    let forces = extract_forces(&m, &smoothed);

    let outputs = if targets.is_empty() {
        project_states(&m.ha, &smoothed)
    } else {
        let layout = SensorLayout::from_channels(targets, modal.n_dof())?;
        // from_channels preserves within-group order; map rows back to the
        // requested target order.
        let rows = virtual_observation_rows(&m, modal, &layout)?;
        let ordered = reorder_rows(&rows, targets, &layout);
        project_states(&ordered, &smoothed)
    };

    Ok(EstimationResult {
        filtered: fr.filtered,
        smoothed,
        forces,
        outputs,
        loglik: fr.loglik,
    })
}

fn reorder_rows(
    rows: &DMatrix<f64>,
    requested: &[(usize, Quantity)],
    layout: &SensorLayout,
) -> DMatrix<f64> {
    let canonical = layout.channels();
    let mut out = DMatrix::zeros(requested.len(), rows.ncols());
    let mut used = vec![false; canonical.len()];
    for (i, target) in requested.iter().enumerate() {
        let pos = canonical
            .iter()
            .enumerate()
            .position(|(j, c)| !used[j] && c == target)
            .expect("layout built from the requested channels");
        used[pos] = true;
        out.row_mut(i).copy_from(&rows.row(pos));
    }
    out
}

/// One leave-one-out fold.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldReport {
    pub channel: String,
    pub rmse: Option<f64>,
    pub trac: Option<f64>,
    pub reconstructed: Vec<f64>,
    pub variance: Vec<f64>,
    pub tuning: Option<TunedParameters>,
    /// Set when the fold failed; the run continues.
    pub error: Option<String>,
}

/// Leave-one-out cross-validation report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LooReport {
    pub folds: Vec<FoldReport>,
    /// Channel names ordered by ascending RMSE; failed folds last.
    pub ranking: Vec<String>,
}

impl LooReport {
    pub fn failed_folds(&self) -> usize {
        self.folds.iter().filter(|f| f.error.is_some()).count()
    }
}

fn validated_metrics(
    data: &TimeSeriesSet,
    channel: &str,
    reconstructed: &[f64],
) -> Result<(f64, f64)> {
    let ch = data
        .channel(channel)
        .ok_or_else(|| Error::InvalidInput(format!("unknown channel '{channel}'")))?;
    let mut a = Vec::with_capacity(reconstructed.len());
    let mut b = Vec::with_capacity(reconstructed.len());
    for k in 0..ch.values.len() {
        if ch.valid[k] {
            a.push(ch.values[k]);
            b.push(reconstructed[k]);
        }
    }
    Ok((rmse(&a, &b)?, trac(&a, &b)?))
}

fn run_fold(
    data: &TimeSeriesSet,
    modal: &ModalModel,
    specs: &[SensorSpec],
    fold: usize,
    shared: Option<&TunedParameters>,
    cfg: &PipelineConfig,
) -> Result<FoldReport> {
    let target = &specs[fold];
    let observing: Vec<SensorSpec> = specs
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != fold)
        .map(|(_, s)| s.clone())
        .collect();
    let params = match shared {
        Some(p) => p.clone(),
        None => tune_pipeline(data, modal, &observing, cfg)?,
    };
    let result = estimate(
        data,
        modal,
        &observing,
        &[(target.dof, target.quantity)],
        &params,
    )?;
    let reconstructed: Vec<f64> = result.outputs.mean.row(0).iter().copied().collect();
    let variance: Vec<f64> = result.outputs.variance.row(0).iter().copied().collect();
    let (fold_rmse, fold_trac) = validated_metrics(data, &target.name, &reconstructed)?;
    Ok(FoldReport {
        channel: target.name.clone(),
        rmse: Some(fold_rmse),
        trac: Some(fold_trac),
        reconstructed,
        variance,
        tuning: Some(params),
        error: None,
    })
}

/// Leave-one-out cross-validation: each channel is excluded in turn,
/// reconstructed from the remaining channels, and scored against its own
/// measurement. Failed folds are reported and do not stop the run.
pub fn run_loo(
    data: &TimeSeriesSet,
    modal: &ModalModel,
    specs: &[SensorSpec],
    cfg: &PipelineConfig,
) -> Result<LooReport> {
    if specs.len() < 2 {
        return Err(Error::InvalidInput(
            "leave-one-out needs at least two channels".into(),
        ));
    }
    let shared = if cfg.retune_per_fold {
        None
    } else {
        Some(tune_pipeline(data, modal, specs, cfg)?)
    };

    let folds: Vec<FoldReport> = (0..specs.len())
        .into_par_iter()
        .map(|fold| {
            run_fold(data, modal, specs, fold, shared.as_ref(), cfg).unwrap_or_else(|e| {
                FoldReport {
                    channel: specs[fold].name.clone(),
                    rmse: None,
                    trac: None,
                    reconstructed: Vec::new(),
                    variance: Vec::new(),
                    tuning: None,
                    error: Some(e.to_string()),
                }
            })
        })
        .collect();

    let mut order: Vec<usize> = (0..folds.len()).collect();
    order.sort_by(|&a, &b| match (folds[a].rmse, folds[b].rmse) {
        (Some(x), Some(y)) => x.partial_cmp(&y).unwrap_or(std::cmp::Ordering::Equal),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.cmp(&b),
    });
    let ranking = order.into_iter().map(|i| folds[i].channel.clone()).collect();
    Ok(LooReport { folds, ranking })
}

/// One reconstruction target's result.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TargetResult {
    pub target: TargetSpec,
    pub dof: usize,
    pub quantity: Quantity,
    pub reconstructed: Vec<f64>,
    pub variance: Vec<f64>,
    /// Present only when a held-out measurement exists.
    pub rmse: Option<f64>,
    pub trac: Option<f64>,
}

/// Targeted estimation report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TargetReport {
    pub targets: Vec<TargetResult>,
    pub tuning: TunedParameters,
    pub loglik: f64,
}

/// Single estimation run with the given targets excluded from the
/// observations. Channel targets are validated against their held-out
/// measurements; virtual targets are reported without metrics.
pub fn run_target(
    data: &TimeSeriesSet,
    modal: &ModalModel,
    specs: &[SensorSpec],
    targets: &[TargetSpec],
    cfg: &PipelineConfig,
) -> Result<TargetReport> {
    if targets.is_empty() {
        return Err(Error::InvalidInput("at least one target is required".into()));
    }
    let mut resolved: Vec<(Option<String>, usize, Quantity)> = Vec::with_capacity(targets.len());
    for t in targets {
        match t {
            TargetSpec::Channel(name) => {
                let spec = specs.iter().find(|s| &s.name == name).ok_or_else(|| {
                    Error::InvalidInput(format!("target channel '{name}' not in layout"))
                })?;
                resolved.push((Some(name.clone()), spec.dof, spec.quantity));
            }
            TargetSpec::Virtual { dof, quantity } => {
                if *dof >= modal.n_dof() {
                    return Err(Error::InvalidInput(format!(
                        "virtual target DOF {dof} out of range"
                    )));
                }
                resolved.push((None, *dof, *quantity));
            }
        }
    }

    let observing: Vec<SensorSpec> = specs
        .iter()
        .filter(|s| {
            !targets
                .iter()
                .any(|t| matches!(t, TargetSpec::Channel(name) if name == &s.name))
        })
        .cloned()
        .collect();
    if observing.is_empty() {
        return Err(Error::InvalidInput(
            "all channels are targets; nothing left to observe".into(),
        ));
    }

    let params = tune_pipeline(data, modal, &observing, cfg)?;
    let target_channels: Vec<(usize, Quantity)> =
        resolved.iter().map(|(_, d, q)| (*d, *q)).collect();
    let result = estimate(data, modal, &observing, &target_channels, &params)?;

    let mut out = Vec::with_capacity(targets.len());
    for (i, ((name, dof, quantity), spec)) in resolved.iter().zip(targets).enumerate() {
        let reconstructed: Vec<f64> = result.outputs.mean.row(i).iter().copied().collect();
        let variance: Vec<f64> = result.outputs.variance.row(i).iter().copied().collect();
        let (r, t) = match name {
            Some(n) => {
                let (a, b) = validated_metrics(data, n, &reconstructed)?;
                (Some(a), Some(b))
            }
            None => (None, None),
        };
        out.push(TargetResult {
            target: spec.clone(),
            dof: *dof,
            quantity: *quantity,
            reconstructed,
            variance,
            rmse: r,
            trac: t,
        });
    }
    Ok(TargetReport {
        targets: out,
        tuning: params,
        loglik: result.loglik,
    })
}
