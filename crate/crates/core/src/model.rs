//! The augmented GPLFM state-space model and its Bayesian inference.
//!
//! The structural state vector is stacked with one two-state Matérn block
//! per retained mode:
//!
//! ```text
//! Fa = [[Ac, b_1 Hc, ..., b_nr Hc],      Ha = [Gc, j_1 Hc, ..., j_nr Hc]
//!       [ 0, Fc_1,   ...,      0],
//!       [ 0,   0,    ...,  Fc_nr]]
//! ```
//!
//! where `b_j`, `j_j` are the columns of the structural input and direct
//! transmission matrices. The augmented continuous model is discretized
//! jointly with a single matrix exponential, and the process noise is the
//! block diagonal of the structural noise and the per-mode discrete GP
//! noise. Inference is a standard Kalman filter (Joseph-form updates,
//! per-channel missing-sample masks) followed by an RTS smoother.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernel::GpKernelSsm;
use crate::linalg;
use crate::structural::{build_continuous, DiscreteStateSpace, ModalModel, SensorLayout};

/// Partition of augmented state indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateIndexMap {
    /// Number of retained structural modes (zero for a pure-GP model).
    pub n_modes: usize,
    /// Number of structural states (`2 * n_modes`).
    pub n_struct: usize,
    /// Number of latent-force blocks.
    pub n_forces: usize,
}

impl StateIndexMap {
    /// Indices of the modal displacement states.
    pub fn displacement(&self) -> std::ops::Range<usize> {
        0..self.n_modes
    }

    /// Indices of the modal velocity states.
    pub fn velocity(&self) -> std::ops::Range<usize> {
        self.n_modes..self.n_struct
    }

    /// Index of the force state of latent-force block `j`.
    pub fn gp_force(&self, j: usize) -> usize {
        self.n_struct + 2 * j
    }

    /// Index of the force-derivative state of latent-force block `j`.
    pub fn gp_derivative(&self, j: usize) -> usize {
        self.n_struct + 2 * j + 1
    }

    pub fn n_states(&self) -> usize {
        self.n_struct + 2 * self.n_forces
    }
}

/// Discrete augmented structure + latent-force model.
#[derive(Debug, Clone)]
pub struct AugmentedModel {
    /// Continuous augmented state matrix.
    pub fa_c: DMatrix<f64>,
    /// Discrete augmented transition `exp(Fa_c dt)`.
    pub fa_d: DMatrix<f64>,
    /// Augmented observation matrix.
    pub ha: DMatrix<f64>,
    /// Block-diagonal discrete process noise.
    pub qa: DMatrix<f64>,
    /// Measurement noise covariance.
    pub r: DMatrix<f64>,
    /// Time step in seconds.
    pub dt: f64,
    /// Structural process noise block used in `qa`.
    pub qx: DMatrix<f64>,
    /// Per-mode latent-force kernels.
    pub gps: Vec<GpKernelSsm>,
    index_map: StateIndexMap,
}

impl AugmentedModel {
    /// Low-level constructor from explicit continuous matrices. `n_struct`
    /// leading states are structural; the remainder must hold one two-state
    /// block per entry of `gps`. Used directly for pure-GP models
    /// (`n_struct = 0`).
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        fa_c: DMatrix<f64>,
        ha: DMatrix<f64>,
        qx: DMatrix<f64>,
        r: DMatrix<f64>,
        dt: f64,
        n_struct: usize,
        gps: Vec<GpKernelSsm>,
    ) -> Result<Self> {
        let n_aug = n_struct + 2 * gps.len();
        if fa_c.nrows() != n_aug || fa_c.ncols() != n_aug {
            return Err(Error::InvalidInput(format!(
                "augmented state matrix must be {n_aug} x {n_aug}"
            )));
        }
        if ha.ncols() != n_aug || ha.nrows() == 0 {
            return Err(Error::InvalidInput(
                "observation matrix has inconsistent dimensions".into(),
            ));
        }
        if qx.nrows() != n_struct || qx.ncols() != n_struct {
            return Err(Error::InvalidInput(
                "structural process noise must match the structural state count".into(),
            ));
        }
        let n_y = ha.nrows();
        if r.nrows() != n_y || r.ncols() != n_y {
            return Err(Error::InvalidInput(
                "measurement noise must be square with one row per channel".into(),
            ));
        }
        if !linalg::is_symmetric(&r, 1e-8) {
            return Err(Error::InvalidInput("measurement noise must be symmetric".into()));
        }
        if dt <= 0.0 {
            return Err(Error::InvalidInput("time step must be positive".into()));
        }
        for (j, gp) in gps.iter().enumerate() {
            if (gp.dt - dt).abs() > 1e-12 * dt {
                return Err(Error::InvalidInput(format!(
                    "latent-force block {j} was discretized at a different step"
                )));
            }
        }

        let fa_d = linalg::expm(&(&fa_c * dt))?;

        let mut qa = DMatrix::zeros(n_aug, n_aug);
        qa.view_mut((0, 0), (n_struct, n_struct)).copy_from(&qx);
        for (j, gp) in gps.iter().enumerate() {
            let off = n_struct + 2 * j;
            qa.view_mut((off, off), (2, 2)).copy_from(&gp.qf);
        }

        let index_map = StateIndexMap {
            n_modes: n_struct / 2,
            n_struct,
            n_forces: gps.len(),
        };
        Ok(Self {
            fa_c,
            fa_d,
            ha,
            qa,
            r,
            dt,
            qx,
            gps,
            index_map,
        })
    }

    pub fn n_states(&self) -> usize {
        self.fa_d.nrows()
    }

    pub fn n_outputs(&self) -> usize {
        self.ha.nrows()
    }

    pub fn index_map(&self) -> StateIndexMap {
        self.index_map
    }

    /// Prior at the start of the record: zero mean, steady-state covariance
    /// for each latent-force block, and a small multiple of the implied
    /// structural response scale on the structural diagonal (the structure
    /// is assumed near rest before the impact).
    pub fn initial_state(&self) -> GaussianState {
        let n = self.n_states();
        let map = self.index_map;
        let mut cov = DMatrix::zeros(n, n);

        if map.n_struct > 0 {
            let alpha2 = self
                .gps
                .iter()
                .map(|g| g.pinf[(0, 0)])
                .fold(0.0, f64::max)
                .max(1e-300);
            // Smallest omega^2 from the -W^2 block of the structural rows.
            let w2_min = (0..map.n_modes)
                .map(|j| -self.fa_c[(map.n_modes + j, j)])
                .fold(f64::INFINITY, f64::min)
                .max(1e-300);
            let scale = (alpha2 / (w2_min * w2_min)).max(alpha2 / w2_min);
            let eps = 1e-6 * scale;
            for i in 0..map.n_struct {
                cov[(i, i)] = eps;
            }
        }
        for (j, gp) in self.gps.iter().enumerate() {
            let off = map.gp_force(j);
            cov.view_mut((off, off), (2, 2)).copy_from(&gp.pinf);
        }
        GaussianState {
            mean: DVector::zeros(n),
            cov,
            t: 0.0,
        }
    }
}

/// Assembles the augmented model from a discrete structural model, one
/// latent-force kernel per retained mode, and the noise covariances.
pub fn assemble(
    dss: &DiscreteStateSpace,
    gps: &[GpKernelSsm],
    qx: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<AugmentedModel> {
    let n_r = dss.n_modes();
    if gps.len() != n_r {
        return Err(Error::InvalidInput(format!(
            "expected one latent force per mode ({n_r}), got {}",
            gps.len()
        )));
    }
    let n_struct = dss.n_states();
    let n_y = dss.n_outputs();
    let n_aug = n_struct + 2 * n_r;

    let mut fa_c = DMatrix::zeros(n_aug, n_aug);
    fa_c.view_mut((0, 0), (n_struct, n_struct)).copy_from(&dss.ac);
    let mut ha = DMatrix::zeros(n_y, n_aug);
    ha.view_mut((0, 0), (n_y, n_struct)).copy_from(&dss.g);

    for (j, gp) in gps.iter().enumerate() {
        let off = n_struct + 2 * j;
        // Coupling block b_j Hc and the GP companion dynamics.
        let coupling = dss.bc.column(j) * &gp.hc;
        fa_c.view_mut((0, off), (n_struct, 2)).copy_from(&coupling);
        fa_c.view_mut((off, off), (2, 2)).copy_from(&gp.fc);
        // Observation coupling j_j Hc.
        let obs = dss.j.column(j) * &gp.hc;
        ha.view_mut((0, off), (n_y, 2)).copy_from(&obs);
    }

    AugmentedModel::from_parts(fa_c, ha, qx.clone(), r.clone(), dss.dt, n_struct, gps.to_vec())
}

/// Gaussian state estimate at one time step.
#[derive(Debug, Clone)]
pub struct GaussianState {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    /// Time in seconds.
    pub t: f64,
}

/// Multichannel observation sequence with a per-sample validity mask.
#[derive(Debug, Clone)]
pub struct Observations {
    /// One row per channel, one column per time step.
    pub values: DMatrix<f64>,
    /// Validity mask matching `values`; `None` means fully observed.
    pub valid: Option<DMatrix<bool>>,
}

impl Observations {
    pub fn new(values: DMatrix<f64>) -> Self {
        Self { values, valid: None }
    }

    pub fn with_mask(values: DMatrix<f64>, valid: DMatrix<bool>) -> Result<Self> {
        if valid.nrows() != values.nrows() || valid.ncols() != values.ncols() {
            return Err(Error::InvalidInput(
                "validity mask must match the observation dimensions".into(),
            ));
        }
        Ok(Self {
            values,
            valid: Some(valid),
        })
    }

    pub fn n_channels(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_steps(&self) -> usize {
        self.values.ncols()
    }

    pub fn is_valid(&self, channel: usize, step: usize) -> bool {
        match &self.valid {
            Some(m) => m[(channel, step)],
            None => true,
        }
    }

    /// Marks every sample of one channel invalid (used by leave-one-out and
    /// placement searches).
    pub fn mask_channel(&mut self, channel: usize) {
        let (ny, n) = (self.n_channels(), self.n_steps());
        let mask = self
            .valid
            .get_or_insert_with(|| DMatrix::from_element(ny, n, true));
        for k in 0..n {
            mask[(channel, k)] = false;
        }
    }
}

/// Output of a forward filtering pass.
#[derive(Debug, Clone)]
pub struct FilterResult {
    /// Posterior state at each step.
    pub filtered: Vec<GaussianState>,
    /// Prior (one-step-predicted) state at each step.
    pub predicted: Vec<GaussianState>,
    /// Marginal log-likelihood of the observed samples.
    pub loglik: f64,
}

/// Per-mode latent-force posterior time series.
#[derive(Debug, Clone)]
pub struct LatentForces {
    /// One row per mode, one column per step.
    pub mean: DMatrix<f64>,
    /// Pointwise variance, same layout.
    pub variance: DMatrix<f64>,
}

/// Reconstructed output time series with pointwise variance.
#[derive(Debug, Clone)]
pub struct OutputSeries {
    pub mean: DMatrix<f64>,
    pub variance: DMatrix<f64>,
}

/// Joint estimation output bundle.
#[derive(Debug, Clone)]
pub struct EstimationResult {
    pub filtered: Vec<GaussianState>,
    pub smoothed: Vec<GaussianState>,
    pub forces: LatentForces,
    pub outputs: OutputSeries,
    pub loglik: f64,
}

const LN_2PI: f64 = 1.8378770664093453;

/// Runs the Kalman filter over an observation sequence starting from prior
/// `s0` at the time of the first sample. Masked samples are skipped row-wise;
/// a step with no valid samples reduces to pure prediction.
pub fn kalman_filter(
    m: &AugmentedModel,
    obs: &Observations,
    s0: &GaussianState,
) -> Result<FilterResult> {
    let n = m.n_states();
    let n_y = m.n_outputs();
    if obs.n_channels() != n_y {
        return Err(Error::InvalidInput(format!(
            "observation rows ({}) do not match model outputs ({n_y})",
            obs.n_channels()
        )));
    }
    if s0.mean.len() != n || s0.cov.nrows() != n || s0.cov.ncols() != n {
        return Err(Error::InvalidInput(
            "initial state dimension does not match the model".into(),
        ));
    }
    let n_steps = obs.n_steps();
    if n_steps == 0 {
        return Err(Error::InvalidInput("observation sequence is empty".into()));
    }

    let mut predicted = Vec::with_capacity(n_steps);
    let mut filtered = Vec::with_capacity(n_steps);
    let mut loglik = 0.0;

    let mut m_pred = s0.mean.clone();
    let mut p_pred = s0.cov.clone();
    let eye = DMatrix::<f64>::identity(n, n);

    for k in 0..n_steps {
        let t = s0.t + k as f64 * m.dt;
        predicted.push(GaussianState {
            mean: m_pred.clone(),
            cov: p_pred.clone(),
            t,
        });

        let rows: Vec<usize> = (0..n_y).filter(|&c| obs.is_valid(c, k)).collect();
        let (m_filt, p_filt) = if rows.is_empty() {
            (m_pred.clone(), p_pred.clone())
        } else {
            let h = m.ha.select_rows(rows.iter());
            let r_sub = m.r.select_rows(rows.iter()).select_columns(rows.iter());
            let y = DVector::from_iterator(rows.len(), rows.iter().map(|&c| obs.values[(c, k)]));

            let innovation = &y - &h * &m_pred;
            let s = &h * &p_pred * h.transpose() + &r_sub;
            let chol = linalg::symmetrize(&s).cholesky().ok_or(Error::Conditioning {
                step: k,
                msg: "innovation covariance is not positive-definite".into(),
            })?;

            let s_inv_v = chol.solve(&innovation);
            let mut logdet = 0.0;
            for i in 0..rows.len() {
                logdet += 2.0 * chol.l()[(i, i)].ln();
            }
            loglik -=
                0.5 * (rows.len() as f64 * LN_2PI + logdet + innovation.dot(&s_inv_v));

            let ph_t = &p_pred * h.transpose();
            let gain = chol.solve(&ph_t.transpose()).transpose();

            let m_filt = &m_pred + &gain * innovation;
            let i_kh = &eye - &gain * &h;
            let p_filt =
                &i_kh * &p_pred * i_kh.transpose() + &gain * &r_sub * gain.transpose();
            (m_filt, linalg::symmetrize(&p_filt))
        };

        filtered.push(GaussianState {
            mean: m_filt.clone(),
            cov: p_filt.clone(),
            t,
        });

        m_pred = &m.fa_d * m_filt;
        p_pred = linalg::symmetrize(&(&m.fa_d * p_filt * m.fa_d.transpose() + &m.qa));
    }

    Ok(FilterResult {
        filtered,
        predicted,
        loglik,
    })
}

/// Backward RTS smoothing pass over a completed filter result. The final
/// step's smoothed state equals its filtered state.
pub fn rts_smooth(m: &AugmentedModel, fr: &FilterResult) -> Result<Vec<GaussianState>> {
    let n_steps = fr.filtered.len();
    if n_steps == 0 {
        return Err(Error::InvalidInput("filter result is empty".into()));
    }
    let mut smoothed = fr.filtered.clone();

    for k in (0..n_steps - 1).rev() {
        let p_filt = &fr.filtered[k].cov;
        let p_pred_next = &fr.predicted[k + 1].cov;
        let chol = p_pred_next.clone().cholesky().ok_or(Error::Conditioning {
            step: k + 1,
            msg: "predicted covariance is singular in the smoother".into(),
        })?;
        let pf_ft = p_filt * m.fa_d.transpose();
        let gain = chol.solve(&pf_ft.transpose()).transpose();

        let dm = &smoothed[k + 1].mean - &fr.predicted[k + 1].mean;
        let dp = &smoothed[k + 1].cov - p_pred_next;
        smoothed[k].mean = &fr.filtered[k].mean + &gain * dm;
        smoothed[k].cov = linalg::symmetrize(&(p_filt + &gain * dp * gain.transpose()));
    }
    Ok(smoothed)
}

/// Extracts the per-mode latent-force posterior from a state sequence.
pub fn extract_forces(m: &AugmentedModel, states: &[GaussianState]) -> LatentForces {
    let map = m.index_map();
    let n_steps = states.len();
    let mut mean = DMatrix::zeros(map.n_forces, n_steps);
    let mut variance = DMatrix::zeros(map.n_forces, n_steps);
    for (k, s) in states.iter().enumerate() {
        for (j, gp) in m.gps.iter().enumerate() {
            let off = map.gp_force(j);
            let z = s.mean.rows(off, 2);
            let p = s.cov.view((off, off), (2, 2));
            mean[(j, k)] = (&gp.hc * z)[(0, 0)];
            variance[(j, k)] = (&gp.hc * p * gp.hc.transpose())[(0, 0)];
        }
    }
    LatentForces { mean, variance }
}

/// Builds the augmented observation rows for a (possibly virtual) sensor
/// layout on the structural model behind `m`.
pub fn virtual_observation_rows(
    m: &AugmentedModel,
    modal: &ModalModel,
    layout: &SensorLayout,
) -> Result<DMatrix<f64>> {
    let map = m.index_map();
    if map.n_modes != modal.n_modes() || map.n_forces != modal.n_modes() {
        return Err(Error::InvalidInput(
            "modal model does not match the augmented model's mode count".into(),
        ));
    }
    let css = build_continuous(modal, layout)?;
    let n_ch = css.gc.nrows();
    let mut rows = DMatrix::zeros(n_ch, m.n_states());
    rows.view_mut((0, 0), (n_ch, map.n_struct)).copy_from(&css.gc);
    for (j, gp) in m.gps.iter().enumerate() {
        let obs = css.jc.column(j) * &gp.hc;
        rows.view_mut((0, map.gp_force(j)), (n_ch, 2)).copy_from(&obs);
    }
    Ok(rows)
}

/// Applies explicit observation rows to a state sequence, returning the
/// projected mean and pointwise variance.
pub fn project_states(rows: &DMatrix<f64>, states: &[GaussianState]) -> OutputSeries {
    let n_ch = rows.nrows();
    let n_steps = states.len();
    let mut mean = DMatrix::zeros(n_ch, n_steps);
    let mut variance = DMatrix::zeros(n_ch, n_steps);
    for (k, s) in states.iter().enumerate() {
        let mu = rows * &s.mean;
        let cov = rows * &s.cov * rows.transpose();
        for c in 0..n_ch {
            mean[(c, k)] = mu[c];
            variance[(c, k)] = cov[(c, c)];
        }
    }
    OutputSeries { mean, variance }
}

/// Reconstructs response channels at arbitrary (virtual) sensor locations
/// from a smoothed state sequence.
pub fn reconstruct_outputs(
    m: &AugmentedModel,
    modal: &ModalModel,
    states: &[GaussianState],
    virtual_layout: &SensorLayout,
) -> Result<OutputSeries> {
    let rows = virtual_observation_rows(m, modal, virtual_layout)?;
    Ok(project_states(&rows, states))
}

/// Model-implied observations `Ha s_k` for a state sequence.
pub fn predicted_observations(m: &AugmentedModel, states: &[GaussianState]) -> OutputSeries {
    project_states(&m.ha, states)
}
