//! Hyperparameter and noise-covariance inference.
//!
//! The GP hyperparameters and the structural process noise scalar are tuned
//! by matching the model-implied stationary output covariance against the
//! empirical covariance of the measurements, measured by the Hellinger
//! distance between the two zero-mean Gaussians:
//!
//! ```text
//! H^2 = 1 - det(P1)^(1/4) det(P2)^(1/4) / det((P1 + P2)/2)^(1/2)
//! ```
//!
//! The measurement noise covariance is tuned afterwards by minimizing the
//! RMSE between the measurements and the smoothed model predictions. Both
//! searches are derivative-free (Nelder-Mead in log-parameter space, with
//! Latin-hypercube multi-starts for the covariance match).

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{
    kalman_filter, predicted_observations, rts_smooth, AugmentedModel, Observations,
};

/// Inclusive search interval for one positive parameter. Setting
/// `lo == hi` pins the parameter at that value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamBounds {
    pub lo: f64,
    pub hi: f64,
}

impl ParamBounds {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo > 0.0 && lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::InvalidInput(
                "bounds must be finite, positive, and ordered".into(),
            ));
        }
        Ok(Self { lo, hi })
    }

    pub fn fixed(v: f64) -> Result<Self> {
        Self::new(v, v)
    }

    fn is_fixed(&self) -> bool {
        self.lo == self.hi
    }
}

/// Settings for the covariance-matching stage.
#[derive(Debug, Clone)]
pub struct TuningConfig {
    pub alpha: ParamBounds,
    pub ell: ParamBounds,
    pub qx: ParamBounds,
    /// Number of Latin-hypercube restarts.
    pub restarts: usize,
    pub max_iters: usize,
    /// Relative objective-spread convergence tolerance.
    pub tol: f64,
    pub seed: u64,
    /// Remove a per-channel linear trend before the empirical covariance
    /// (the mean is always removed).
    pub detrend: bool,
    /// Sample range `[start, end)` for the empirical covariance; `None`
    /// uses the full record.
    pub segment: Option<(usize, usize)>,
}

impl Default for TuningConfig {
    fn default() -> Self {
        Self {
            alpha: ParamBounds { lo: 1e-3, hi: 1e4 },
            ell: ParamBounds { lo: 1e-3, hi: 1e2 },
            qx: ParamBounds { lo: 1e-14, hi: 1.0 },
            restarts: 8,
            max_iters: 200,
            tol: 1e-9,
            seed: 0,
            detrend: false,
            segment: None,
        }
    }
}

/// Tuned prior parameters: kernel scale, length scale, and the structural
/// process noise scalar.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaEstimate {
    pub alpha: f64,
    pub ell: f64,
    pub qx: f64,
}

/// One multi-start record.
#[derive(Debug, Clone)]
pub struct RestartRecord {
    pub start: ThetaEstimate,
    pub theta: ThetaEstimate,
    pub objective: f64,
    pub evaluations: usize,
}

/// Output of the covariance-matching stage.
#[derive(Debug, Clone)]
pub struct PriorTuneResult {
    pub theta: ThetaEstimate,
    pub objective: f64,
    /// Best objective so far across restarts, in restart order;
    /// non-increasing.
    pub trace: Vec<f64>,
    pub restarts: Vec<RestartRecord>,
}

/// Empirical output covariance with diagnostic metadata.
#[derive(Debug, Clone)]
pub struct CovEstimate {
    pub cov: DMatrix<f64>,
    /// Number of complete-case samples used.
    pub n_samples: usize,
    /// Channels whose sample variance is numerically zero.
    pub singular_channels: Vec<usize>,
}

/// Sample covariance of the channels after per-channel mean removal
/// (optionally also removing a linear trend), over the complete-case
/// samples of the selected segment.
pub fn empirical_output_cov(
    obs: &Observations,
    detrend: bool,
    segment: Option<(usize, usize)>,
) -> Result<CovEstimate> {
    let n_ch = obs.n_channels();
    let (start, end) = segment.unwrap_or((0, obs.n_steps()));
    if start >= end || end > obs.n_steps() {
        return Err(Error::InvalidInput("invalid covariance segment".into()));
    }

    let steps: Vec<usize> = (start..end)
        .filter(|&k| (0..n_ch).all(|c| obs.is_valid(c, k)))
        .collect();
    let n = steps.len();
    if n < 2 {
        return Err(Error::InvalidInput(
            "at least two complete samples are required".into(),
        ));
    }

    let mut x = DMatrix::zeros(n_ch, n);
    for (col, &k) in steps.iter().enumerate() {
        for c in 0..n_ch {
            x[(c, col)] = obs.values[(c, k)];
        }
    }
    for c in 0..n_ch {
        let mean = x.row(c).sum() / n as f64;
        for col in 0..n {
            x[(c, col)] -= mean;
        }
        if detrend {
            // Least-squares line through the centered samples.
            let tbar = (n as f64 - 1.0) / 2.0;
            let mut num = 0.0;
            let mut den = 0.0;
            for col in 0..n {
                let t = col as f64 - tbar;
                num += t * x[(c, col)];
                den += t * t;
            }
            let slope = if den > 0.0 { num / den } else { 0.0 };
            for col in 0..n {
                x[(c, col)] -= slope * (col as f64 - tbar);
            }
        }
    }

    let cov = linalg::symmetrize(&(&x * x.transpose() / (n as f64 - 1.0)));
    let scale = cov.diagonal().amax().max(1e-300);
    let singular_channels = (0..n_ch)
        .filter(|&c| cov[(c, c)] <= 1e-14 * scale)
        .collect();
    Ok(CovEstimate {
        cov,
        n_samples: n,
        singular_channels,
    })
}

/// Stationary output covariance `Ha Pinf Ha^T` of the augmented model,
/// where `Pinf` solves the continuous Lyapunov equation of the augmented
/// system. The block-triangular structure is exploited: the GP blocks are
/// independent, the cross block solves one Sylvester equation per mode, and
/// the structural block solves one Lyapunov equation.
pub fn prior_output_cov(m: &AugmentedModel) -> Result<DMatrix<f64>> {
    let map = m.index_map();
    let ns = map.n_struct;
    let n = m.n_states();

    let mut pinf = DMatrix::zeros(n, n);
    for (j, gp) in m.gps.iter().enumerate() {
        let off = map.gp_force(j);
        pinf.view_mut((off, off), (2, 2)).copy_from(&gp.pinf);
    }

    if ns > 0 {
        let a11 = m.fa_c.view((0, 0), (ns, ns)).into_owned();
        if !linalg::is_hurwitz(&a11) {
            return Err(Error::InvalidModel(
                "structural block is not asymptotically stable".into(),
            ));
        }
        // The stored structural noise is the per-step discrete covariance;
        // its continuous spectral density is Qx / dt.
        let q11 = &m.qx / m.dt;

        // Cross covariance, one Sylvester solve per GP block.
        let mut p12 = DMatrix::zeros(ns, n - ns);
        for (j, gp) in m.gps.iter().enumerate() {
            let off = map.gp_force(j);
            let a12_j = m.fa_c.view((0, off), (ns, 2)).into_owned();
            let rhs = -(&a12_j * &gp.pinf);
            let x = linalg::solve_sylvester(&a11, &gp.fc.transpose(), &rhs)?;
            p12.view_mut((0, off - ns), (ns, 2)).copy_from(&x);
        }

        let a12 = m.fa_c.view((0, ns), (ns, n - ns)).into_owned();
        let cross = &a12 * p12.transpose();
        let q_eff = &q11 + &cross + cross.transpose();
        let p11 = linalg::solve_lyapunov(&a11, &q_eff)?;

        pinf.view_mut((0, 0), (ns, ns)).copy_from(&p11);
        pinf.view_mut((0, ns), (ns, n - ns)).copy_from(&p12);
        pinf.view_mut((ns, 0), (n - ns, ns))
            .copy_from(&p12.transpose());
    }

    Ok(linalg::symmetrize(&(&m.ha * pinf * m.ha.transpose())))
}

/// Log Bhattacharyya coefficient between two zero-mean Gaussians:
/// `log BC = 1/4 logdet(P1) + 1/4 logdet(P2) - 1/2 logdet((P1+P2)/2)`,
/// with `H^2 = 1 - BC`. Always `<= 0`; `0` for identical distributions and
/// `-inf` for mutually singular ones.
///
/// Degenerate (singular) covariances are handled on the common support.
/// In near-saturation regimes (`H` close to 1) this quantity still varies
/// smoothly where `H` itself has no floating-point resolution left, which
/// is why the covariance-matching search optimizes it directly.
pub fn log_bhattacharyya(p1: &DMatrix<f64>, p2: &DMatrix<f64>) -> Result<f64> {
    let n = p1.nrows();
    if p1.ncols() != n || p2.nrows() != n || p2.ncols() != n {
        return Err(Error::InvalidInput(
            "covariance matrices must be square and equally sized".into(),
        ));
    }
    for (name, p) in [("first", p1), ("second", p2)] {
        if !linalg::is_symmetric(p, 1e-8) {
            return Err(Error::InvalidInput(format!(
                "{name} covariance is not symmetric"
            )));
        }
        let e = linalg::symmetrize(p).symmetric_eigen();
        let s = e.eigenvalues.amax().max(1e-300);
        if e.eigenvalues.iter().any(|&l| l < -1e-10 * s) {
            return Err(Error::InvalidInput(format!("{name} covariance is not PSD")));
        }
    }

    let avg = (p1 + p2) * 0.5;
    let eig = linalg::symmetrize(&avg).symmetric_eigen();
    let lmax = eig.eigenvalues.amax();
    let tol = 1e-12 * lmax.max(1e-300);

    // Common support of the mixture.
    let kept: Vec<usize> = (0..n).filter(|&i| eig.eigenvalues[i] > tol).collect();
    if kept.is_empty() {
        // Both are (numerically) zero: identical point masses.
        return Ok(0.0);
    }
    let rank = kept.len();
    let mut basis = DMatrix::zeros(n, rank);
    for (col, &i) in kept.iter().enumerate() {
        basis.set_column(col, &eig.eigenvectors.column(i));
    }

    let logdet = |p: &DMatrix<f64>| -> Option<f64> {
        let reduced = linalg::symmetrize(&(basis.transpose() * p * &basis));
        let chol = reduced.cholesky()?;
        let mut ld = 0.0;
        for i in 0..rank {
            let d = chol.l()[(i, i)];
            if d <= 0.0 || !d.is_finite() {
                return None;
            }
            ld += 2.0 * d.ln();
        }
        Some(ld)
    };

    let ld_avg = logdet(&avg).ok_or_else(|| {
        Error::Numerical("mixture covariance lost rank on its own support".into())
    })?;
    match (logdet(p1), logdet(p2)) {
        (Some(ld1), Some(ld2)) => Ok((0.25 * ld1 + 0.25 * ld2 - 0.5 * ld_avg).min(0.0)),
        // One input is singular inside the common support: the supports
        // differ, so the distributions are mutually singular.
        _ => Ok(f64::NEG_INFINITY),
    }
}

/// Hellinger distance between two zero-mean Gaussians given by their
/// covariance matrices, in `[0, 1]`.
///
/// Distributions with different supports are mutually singular and at
/// distance 1; identical matrices are at distance 0 regardless of rank.
pub fn hellinger(p1: &DMatrix<f64>, p2: &DMatrix<f64>) -> Result<f64> {
    let log_bc = log_bhattacharyya(p1, p2)?;
    if log_bc == 0.0 {
        return Ok(0.0);
    }
    let h2 = (1.0 - log_bc.exp()).clamp(0.0, 1.0);
    Ok(h2.sqrt())
}

// ---------------------------------------------------------------------------
// Derivative-free optimization.

struct NmOutcome {
    x: Vec<f64>,
    fval: f64,
    history: Vec<f64>,
    evaluations: usize,
}

/// Standard Nelder-Mead with reflection/expansion/contraction/shrink.
fn nelder_mead<F: Fn(&[f64]) -> f64>(
    f: F,
    x0: &[f64],
    step: &[f64],
    max_iters: usize,
    ftol: f64,
) -> NmOutcome {
    let dim = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &[f64]| {
        evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..dim {
        let mut v = x0.to_vec();
        v[i] += step[i];
        simplex.push(v);
    }
    let mut fvals: Vec<f64> = simplex.iter().map(|v| eval(v)).collect();
    let mut history = Vec::with_capacity(max_iters);

    for _ in 0..max_iters {
        let mut order: Vec<usize> = (0..=dim).collect();
        order.sort_by(|&a, &b| fvals[a].partial_cmp(&fvals[b]).unwrap());
        let best = order[0];
        let worst = order[dim];
        let second_worst = order[dim - 1];
        history.push(fvals[best]);

        let spread = fvals[worst] - fvals[best];
        if spread.is_finite() && spread <= ftol * (fvals[best].abs() + ftol) {
            break;
        }

        // Centroid of all but the worst vertex.
        let mut centroid = vec![0.0; dim];
        for (i, v) in simplex.iter().enumerate() {
            if i != worst {
                for d in 0..dim {
                    centroid[d] += v[d] / dim as f64;
                }
            }
        }

        let reflected: Vec<f64> = centroid
            .iter()
            .zip(&simplex[worst])
            .map(|(c, w)| c + (c - w))
            .collect();
        let f_ref = eval(&reflected);

        if f_ref < fvals[best] {
            let expanded: Vec<f64> = centroid
                .iter()
                .zip(&simplex[worst])
                .map(|(c, w)| c + 2.0 * (c - w))
                .collect();
            let f_exp = eval(&expanded);
            if f_exp < f_ref {
                simplex[worst] = expanded;
                fvals[worst] = f_exp;
            } else {
                simplex[worst] = reflected;
                fvals[worst] = f_ref;
            }
        } else if f_ref < fvals[second_worst] {
            simplex[worst] = reflected;
            fvals[worst] = f_ref;
        } else {
            // Contraction toward the better of worst/reflected.
            let (base, f_base) = if f_ref < fvals[worst] {
                (reflected.clone(), f_ref)
            } else {
                (simplex[worst].clone(), fvals[worst])
            };
            let contracted: Vec<f64> = centroid
                .iter()
                .zip(&base)
                .map(|(c, b)| c + 0.5 * (b - c))
                .collect();
            let f_con = eval(&contracted);
            if f_con < f_base {
                simplex[worst] = contracted;
                fvals[worst] = f_con;
            } else {
                // Shrink toward the best vertex.
                let best_v = simplex[best].clone();
                for (i, v) in simplex.iter_mut().enumerate() {
                    if i != best {
                        for d in 0..dim {
                            v[d] = best_v[d] + 0.5 * (v[d] - best_v[d]);
                        }
                        fvals[i] = eval(v);
                    }
                }
            }
        }
    }

    let (ibest, &fbest) = fvals
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .unwrap();
    history.push(fbest);
    // Record the best objective so far, which is non-increasing.
    let mut run_best = f64::INFINITY;
    for h in history.iter_mut() {
        run_best = run_best.min(*h);
        *h = run_best;
    }
    NmOutcome {
        x: simplex[ibest].clone(),
        fval: fbest,
        history,
        evaluations: evals,
    }
}

/// Latin hypercube sample of `n` points mapped to the given ranges.
fn latin_hypercube(rng: &mut ChaCha8Rng, n: usize, ranges: &[(f64, f64)]) -> Vec<Vec<f64>> {
    let dim = ranges.len();
    let mut strata: Vec<Vec<usize>> = Vec::with_capacity(dim);
    for _ in 0..dim {
        let mut order: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = rng.random_range(0..=i);
            order.swap(i, j);
        }
        strata.push(order);
    }
    (0..n)
        .map(|s| {
            (0..dim)
                .map(|d| {
                    let (lo, hi) = ranges[d];
                    let u: f64 = rng.random();
                    lo + (hi - lo) * ((strata[d][s] as f64 + u) / n as f64)
                })
                .collect()
        })
        .collect()
}

fn clamp_penalized(x: &[f64], ranges: &[(f64, f64)]) -> (Vec<f64>, f64) {
    let mut clamped = x.to_vec();
    let mut penalty = 0.0;
    for (d, &(lo, hi)) in ranges.iter().enumerate() {
        let span = (hi - lo).max(1e-12);
        if clamped[d] < lo {
            penalty += ((lo - clamped[d]) / span).powi(2);
            clamped[d] = lo;
        } else if clamped[d] > hi {
            penalty += ((clamped[d] - hi) / span).powi(2);
            clamped[d] = hi;
        }
    }
    (clamped, 1e4 * penalty)
}

/// Minimizes the Hellinger distance between the empirical output covariance
/// and the model-implied stationary covariance over `theta = (alpha, ell,
/// qx)`, by multi-start Nelder-Mead in log-parameter space.
///
/// `build` maps a parameter triple to an augmented model; parameter points
/// where the build or the stationary solve fails score as infinitely bad.
pub fn tune_prior<F>(build: F, obs: &Observations, cfg: &TuningConfig) -> Result<PriorTuneResult>
where
    F: Fn(&ThetaEstimate) -> Result<AugmentedModel> + Sync,
{
    if cfg.restarts == 0 {
        return Err(Error::InvalidInput("at least one restart is required".into()));
    }
    let empirical = empirical_output_cov(obs, cfg.detrend, cfg.segment)?;

    let all_bounds = [cfg.alpha, cfg.ell, cfg.qx];
    let free: Vec<usize> = (0..3).filter(|&i| !all_bounds[i].is_fixed()).collect();
    let log_ranges: Vec<(f64, f64)> = free
        .iter()
        .map(|&i| (all_bounds[i].lo.log10(), all_bounds[i].hi.log10()))
        .collect();

    let theta_of = |x: &[f64]| -> ThetaEstimate {
        let mut vals = [all_bounds[0].lo, all_bounds[1].lo, all_bounds[2].lo];
        for (slot, &i) in free.iter().enumerate() {
            vals[i] = 10f64.powf(x[slot]);
        }
        ThetaEstimate {
            alpha: vals[0],
            ell: vals[1],
            qx: vals[2],
        }
    };

    // Work in -log BC rather than H itself: strictly increasing in H, and
    // still resolvable when H saturates toward 1.
    let objective = |x: &[f64]| -> f64 {
        let (clamped, penalty) = clamp_penalized(x, &log_ranges);
        let theta = theta_of(&clamped);
        let value = build(&theta)
            .and_then(|m| prior_output_cov(&m))
            .and_then(|prior| log_bhattacharyya(&empirical.cov, &prior));
        match value {
            Ok(log_bc) if log_bc.is_finite() => -log_bc + penalty,
            _ => f64::INFINITY,
        }
    };
    let to_hellinger = |working: f64| -> f64 {
        if !working.is_finite() {
            return 1.0;
        }
        (1.0 - (-working).exp()).clamp(0.0, 1.0).sqrt()
    };

    if free.is_empty() {
        // Everything pinned: a single evaluation.
        let theta = theta_of(&[]);
        let obj = objective(&[]);
        if !obj.is_finite() {
            return Err(Error::TuningFailure(
                "the pinned parameter point is not evaluable".into(),
            ));
        }
        let h = to_hellinger(obj);
        return Ok(PriorTuneResult {
            theta,
            objective: h,
            trace: vec![h],
            restarts: vec![RestartRecord {
                start: theta,
                theta,
                objective: h,
                evaluations: 1,
            }],
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let starts = latin_hypercube(&mut rng, cfg.restarts, &log_ranges);
    let steps: Vec<f64> = log_ranges.iter().map(|(lo, hi)| 0.2 * (hi - lo)).collect();

    let outcomes: Vec<(ThetaEstimate, NmOutcome)> = starts
        .par_iter()
        .map(|start| {
            let out = nelder_mead(objective, start, &steps, cfg.max_iters, cfg.tol);
            (theta_of(start), out)
        })
        .collect();

    let mut restarts = Vec::with_capacity(cfg.restarts);
    let mut trace = Vec::new();
    let mut best: Option<(f64, usize)> = None;
    let mut run_best = f64::INFINITY;
    for (i, (start_theta, out)) in outcomes.iter().enumerate() {
        for &h in &out.history {
            run_best = run_best.min(h);
            trace.push(to_hellinger(run_best));
        }
        let (clamped, _) = clamp_penalized(&out.x, &log_ranges);
        restarts.push(RestartRecord {
            start: *start_theta,
            theta: theta_of(&clamped),
            objective: to_hellinger(out.fval),
            evaluations: out.evaluations,
        });
        if best.map_or(true, |(f, _)| out.fval < f) {
            best = Some((out.fval, i));
        }
    }

    let (fbest, ibest) = best.expect("at least one restart");
    if !fbest.is_finite() {
        return Err(Error::TuningFailure(format!(
            "no restart produced a stable model; all {} starts failed",
            cfg.restarts
        )));
    }
    Ok(PriorTuneResult {
        theta: restarts[ibest].theta,
        objective: to_hellinger(fbest),
        trace,
        restarts,
    })
}

/// Residual definition for the measurement-noise search.
///
/// The smoothed-posterior residual is monotone in `R` (a looser filter
/// always tracks the data worse, a tighter one always better), so it can
/// only ever select the lower bound. The one-step-ahead prediction residual
/// instead penalizes overfitting measurement noise and attains its minimum
/// near the true noise level, which is why it is the default.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RmseKind {
    /// RMSE of `y_k - Ha s_{k|k-1}` (filter prediction errors).
    OneStepPrediction,
    /// RMSE of `y_k - Ha s_{k|N}` (smoothed posterior predictions).
    SmoothedPosterior,
}

/// Settings for the measurement-noise stage.
#[derive(Debug, Clone)]
pub struct RTuneConfig {
    /// Variance bounds shared by every channel group.
    pub bounds: ParamBounds,
    /// Grid resolution of the initial scan.
    pub grid_points: usize,
    pub max_iters: usize,
    pub tol: f64,
    pub objective: RmseKind,
}

impl Default for RTuneConfig {
    fn default() -> Self {
        Self {
            bounds: ParamBounds { lo: 1e-12, hi: 1e2 },
            grid_points: 13,
            max_iters: 60,
            tol: 1e-6,
            objective: RmseKind::OneStepPrediction,
        }
    }
}

/// Output of the measurement-noise stage.
#[derive(Debug, Clone)]
pub struct RTuneResult {
    /// Tuned variance per channel group, in the caller's group order.
    pub variances: Vec<f64>,
    /// RMSE at the returned point.
    pub rmse: f64,
    /// Set when the objective was flat over the search range; the bounds
    /// midpoint is returned in that case.
    pub flat: bool,
    pub evaluations: usize,
}

fn pooled_rmse(values: &DMatrix<f64>, obs: &Observations) -> Result<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for k in 0..obs.n_steps() {
        for c in 0..obs.n_channels() {
            if obs.is_valid(c, k) {
                let d = obs.values[(c, k)] - values[(c, k)];
                sum += d * d;
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::InvalidInput("no valid samples to score".into()));
    }
    Ok((sum / count as f64).sqrt())
}

/// Pooled RMSE between the measured samples and the model's observation
/// predictions, over all valid samples.
pub fn model_rmse(m: &AugmentedModel, obs: &Observations, kind: RmseKind) -> Result<f64> {
    let fr = kalman_filter(m, obs, &m.initial_state())?;
    let states = match kind {
        RmseKind::OneStepPrediction => fr.predicted,
        RmseKind::SmoothedPosterior => rts_smooth(m, &fr)?,
    };
    let pred = predicted_observations(m, &states);
    pooled_rmse(&pred.mean, obs)
}

/// Tunes one measurement-noise variance per channel group by log-space
/// search (grid scan plus Nelder-Mead refinement) minimizing the
/// configured prediction RMSE. `build` maps per-group variances to a model.
pub fn tune_r<F>(
    build: F,
    obs: &Observations,
    n_groups: usize,
    cfg: &RTuneConfig,
) -> Result<RTuneResult>
where
    F: Fn(&[f64]) -> Result<AugmentedModel>,
{
    if n_groups == 0 {
        return Err(Error::InvalidInput(
            "at least one channel group is required".into(),
        ));
    }
    let (lo, hi) = (cfg.bounds.lo.log10(), cfg.bounds.hi.log10());
    let ranges: Vec<(f64, f64)> = vec![(lo, hi); n_groups];
    let evals = std::cell::Cell::new(0usize);

    let objective = |x: &[f64]| -> f64 {
        evals.set(evals.get() + 1);
        let (clamped, penalty) = clamp_penalized(x, &ranges);
        let vars: Vec<f64> = clamped.iter().map(|v| 10f64.powf(*v)).collect();
        match build(&vars).and_then(|m| model_rmse(&m, obs, cfg.objective)) {
            Ok(r) => r * (1.0 + penalty),
            Err(_) => f64::INFINITY,
        }
    };

    // Coarse scan along the diagonal of the log box, then a per-group
    // coordinate sweep to decouple groups of very different scales, then
    // simplex refinement.
    let grid = cfg.grid_points.max(3);
    let mut best_x = vec![0.5 * (lo + hi); n_groups];
    let mut best_f = f64::INFINITY;
    let mut seen_min = f64::INFINITY;
    let mut seen_max = f64::NEG_INFINITY;
    for i in 0..grid {
        let v = lo + (hi - lo) * i as f64 / (grid - 1) as f64;
        let x = vec![v; n_groups];
        let f = objective(&x);
        if f.is_finite() {
            seen_min = seen_min.min(f);
            seen_max = seen_max.max(f);
        }
        if f < best_f {
            best_f = f;
            best_x = x;
        }
    }
    if !best_f.is_finite() {
        return Err(Error::TuningFailure(
            "measurement-noise objective failed at every grid point".into(),
        ));
    }
    if n_groups > 1 {
        for g in 0..n_groups {
            for i in 0..grid {
                let v = lo + (hi - lo) * i as f64 / (grid - 1) as f64;
                let mut x = best_x.clone();
                x[g] = v;
                let f = objective(&x);
                if f.is_finite() {
                    seen_min = seen_min.min(f);
                    seen_max = seen_max.max(f);
                }
                if f < best_f {
                    best_f = f;
                    best_x = x;
                }
            }
        }
    }

    let step = vec![0.1 * (hi - lo); n_groups];
    let out = nelder_mead(&objective, &best_x, &step, cfg.max_iters, cfg.tol);
    seen_min = seen_min.min(out.fval);

    let flat = seen_max.is_finite()
        && (seen_max - seen_min).abs() <= 1e-12 * seen_max.abs().max(1e-300);
    if flat {
        let mid = vec![0.5 * (lo + hi); n_groups];
        let rmse = objective(&mid);
        return Ok(RTuneResult {
            variances: mid.iter().map(|v| 10f64.powf(*v)).collect(),
            rmse,
            flat: true,
            evaluations: evals.get(),
        });
    }

    // For a single group, prefer the smallest noise consistent with the
    // fit: below the filter's sensitivity the objective is flat in R, so
    // walk down while the fit does not degrade materially (1 % of the
    // optimum). With several groups the pooled residual is insensitive to
    // minority groups and the walk would starve them, so it is skipped.
    let mut x_best = clamp_penalized(&out.x, &ranges).0;
    let mut f_best = out.fval;
    if n_groups == 1 {
        let reference = out.fval * (1.0 + 1e-2);
        let g = 0;
        while x_best[g] - 0.5 >= lo {
            let mut probe = x_best.clone();
            probe[g] -= 0.5;
            let f = objective(&probe);
            if f <= reference {
                x_best = probe;
                f_best = f_best.min(f);
            } else {
                break;
            }
        }
        let mut probe = x_best.clone();
        probe[g] = lo;
        let f = objective(&probe);
        if f <= reference {
            x_best = probe;
            f_best = f_best.min(f);
        }
    }

    Ok(RTuneResult {
        variances: x_best.iter().map(|v| 10f64.powf(*v)).collect(),
        rmse: f_best,
        flat: false,
        evaluations: evals.get(),
    })
}
