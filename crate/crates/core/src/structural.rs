//! Modal reduced-order structural models and their state-space form.
//!
//! A second-order system `M u'' + C u' + K u = load` is projected onto a
//! truncated set of mass-normalized mode shapes, giving decoupled modal
//! coordinates under proportional damping:
//!
//! ```text
//! r'' + diag(2 zeta_j w_j) r' + diag(w_j^2) r = f(t)
//! ```
//!
//! with `f` the modal force vector. The module builds the continuous
//! state-space matrices for that system and for a measurement model mixing
//! acceleration, velocity, and displacement channels, and discretizes them
//! with the matrix exponential.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Physical quantity measured by a sensor channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quantity {
    #[serde(alias = "accel")]
    Acceleration,
    #[serde(alias = "vel")]
    Velocity,
    #[serde(alias = "disp")]
    Displacement,
}

impl Quantity {
    pub fn short_name(self) -> &'static str {
        match self {
            Quantity::Acceleration => "accel",
            Quantity::Velocity => "vel",
            Quantity::Displacement => "disp",
        }
    }
}

/// Full-order second-order system `(M, C, K)`.
#[derive(Debug, Clone)]
pub struct FullOrderSystem {
    m: DMatrix<f64>,
    c: DMatrix<f64>,
    k: DMatrix<f64>,
}

impl FullOrderSystem {
    /// Validates and stores the system matrices. `M` must be symmetric
    /// positive-definite, `K` symmetric, and all three square of equal size.
    pub fn new(m: DMatrix<f64>, c: DMatrix<f64>, k: DMatrix<f64>) -> Result<Self> {
        let n = m.nrows();
        if m.ncols() != n || c.nrows() != n || c.ncols() != n || k.nrows() != n || k.ncols() != n {
            return Err(Error::InvalidInput(
                "M, C, K must be square matrices of identical dimension".into(),
            ));
        }
        if n == 0 {
            return Err(Error::InvalidInput("system must have at least one DOF".into()));
        }
        if !linalg::is_symmetric(&m, 1e-8) {
            return Err(Error::InvalidInput("mass matrix is not symmetric".into()));
        }
        if !linalg::is_symmetric(&k, 1e-8) {
            return Err(Error::InvalidInput("stiffness matrix is not symmetric".into()));
        }
        if m.clone().cholesky().is_none() {
            return Err(Error::InvalidInput(
                "mass matrix is not positive-definite".into(),
            ));
        }
        Ok(Self { m, c, k })
    }

    pub fn n_dof(&self) -> usize {
        self.m.nrows()
    }

    pub fn mass(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn damping(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn stiffness(&self) -> &DMatrix<f64> {
        &self.k
    }

    /// Uniform spring-mass chain anchored to ground at the first DOF and
    /// free at the last: the built-in synthetic structure.
    pub fn spring_mass_chain(masses: &[f64], stiffnesses: &[f64]) -> Result<Self> {
        let n = masses.len();
        if n == 0 || stiffnesses.len() != n {
            return Err(Error::InvalidInput(
                "chain needs one mass and one spring per DOF (ground spring first)".into(),
            ));
        }
        if masses.iter().any(|&m| m <= 0.0) || stiffnesses.iter().any(|&k| k < 0.0) {
            return Err(Error::InvalidInput(
                "masses must be positive and stiffnesses non-negative".into(),
            ));
        }
        let m = DMatrix::from_diagonal(&DVector::from_row_slice(masses));
        let mut k = DMatrix::zeros(n, n);
        // Spring i connects DOF i to DOF i-1 (or to ground for i = 0).
        for i in 0..n {
            k[(i, i)] += stiffnesses[i];
            if i > 0 {
                k[(i - 1, i - 1)] += stiffnesses[i];
                k[(i, i - 1)] -= stiffnesses[i];
                k[(i - 1, i)] -= stiffnesses[i];
            }
        }
        let c = DMatrix::zeros(n, n);
        Self::new(m, c, k)
    }
}

/// Truncated modal model: mass-normalized mode shapes, natural frequencies,
/// and (optionally assigned) modal damping ratios.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModalModel {
    /// Mode shapes, one column per retained mode (`n_dof x n_modes`).
    phi: DMatrix<f64>,
    /// Natural angular frequencies in rad/s, strictly positive and ascending.
    omega: DVector<f64>,
    /// Modal damping ratios; `None` until assigned.
    zeta: Option<DVector<f64>>,
}

impl ModalModel {
    pub fn new(phi: DMatrix<f64>, omega: DVector<f64>, zeta: Option<DVector<f64>>) -> Result<Self> {
        let n_r = phi.ncols();
        if omega.len() != n_r || n_r == 0 {
            return Err(Error::InvalidInput(
                "omega length must equal the number of mode-shape columns".into(),
            ));
        }
        for j in 0..n_r {
            if omega[j] <= 0.0 {
                return Err(Error::InvalidInput(format!(
                    "natural frequency of mode {j} must be strictly positive"
                )));
            }
            if j > 0 && omega[j] < omega[j - 1] {
                return Err(Error::InvalidInput(
                    "natural frequencies must be ascending".into(),
                ));
            }
        }
        let model = Self { phi, omega, zeta: None };
        match zeta {
            Some(z) => model.with_damping(z),
            None => Ok(model),
        }
    }

    /// Returns a copy with the given per-mode damping ratios assigned.
    pub fn with_damping(&self, zeta: DVector<f64>) -> Result<Self> {
        if zeta.len() != self.n_modes() {
            return Err(Error::InvalidInput(
                "zeta length must equal the number of modes".into(),
            ));
        }
        if zeta.iter().any(|&z| z <= 0.0 || z >= 1.0) {
            return Err(Error::InvalidInput(
                "damping ratios must lie strictly between 0 and 1".into(),
            ));
        }
        Ok(Self {
            phi: self.phi.clone(),
            omega: self.omega.clone(),
            zeta: Some(zeta),
        })
    }

    /// Returns a copy with the same damping ratio assigned to every mode.
    pub fn with_uniform_damping(&self, zeta: f64) -> Result<Self> {
        self.with_damping(DVector::from_element(self.n_modes(), zeta))
    }

    pub fn n_dof(&self) -> usize {
        self.phi.nrows()
    }

    pub fn n_modes(&self) -> usize {
        self.phi.ncols()
    }

    pub fn mode_shapes(&self) -> &DMatrix<f64> {
        &self.phi
    }

    pub fn omega(&self) -> &DVector<f64> {
        &self.omega
    }

    pub fn zeta(&self) -> Option<&DVector<f64>> {
        self.zeta.as_ref()
    }

    fn zeta_required(&self) -> Result<&DVector<f64>> {
        self.zeta.as_ref().ok_or_else(|| {
            Error::InvalidInput("modal damping ratios have not been assigned".into())
        })
    }
}

/// Sensor channels grouped by measured quantity. Channel order is the
/// concatenation `[accel..., vel..., disp...]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensorLayout {
    accel_dofs: Vec<usize>,
    vel_dofs: Vec<usize>,
    disp_dofs: Vec<usize>,
}

impl SensorLayout {
    /// Validated constructor: indices in range, and a DOF appears at most
    /// once per quantity list.
    pub fn new(
        accel_dofs: Vec<usize>,
        vel_dofs: Vec<usize>,
        disp_dofs: Vec<usize>,
        n_dof: usize,
    ) -> Result<Self> {
        for (name, list) in [
            ("acceleration", &accel_dofs),
            ("velocity", &vel_dofs),
            ("displacement", &disp_dofs),
        ] {
            let mut seen = vec![false; n_dof];
            for &d in list {
                if d >= n_dof {
                    return Err(Error::InvalidInput(format!(
                        "{name} DOF index {d} out of range (n_dof = {n_dof})"
                    )));
                }
                if seen[d] {
                    return Err(Error::InvalidInput(format!(
                        "{name} DOF index {d} listed more than once"
                    )));
                }
                seen[d] = true;
            }
        }
        Ok(Self {
            accel_dofs,
            vel_dofs,
            disp_dofs,
        })
    }

    /// Constructor that permits repeated DOFs within a quantity list, for
    /// redundancy studies where two physical sensors observe the same DOF.
    pub fn allowing_duplicates(
        accel_dofs: Vec<usize>,
        vel_dofs: Vec<usize>,
        disp_dofs: Vec<usize>,
        n_dof: usize,
    ) -> Result<Self> {
        for list in [&accel_dofs, &vel_dofs, &disp_dofs] {
            if let Some(&d) = list.iter().find(|&&d| d >= n_dof) {
                return Err(Error::InvalidInput(format!(
                    "DOF index {d} out of range (n_dof = {n_dof})"
                )));
            }
        }
        Ok(Self {
            accel_dofs,
            vel_dofs,
            disp_dofs,
        })
    }

    /// Layout with one acceleration channel at every DOF.
    pub fn all_accelerometers(n_dof: usize) -> Self {
        Self {
            accel_dofs: (0..n_dof).collect(),
            vel_dofs: Vec::new(),
            disp_dofs: Vec::new(),
        }
    }

    /// Channels in output order as `(dof, quantity)` pairs.
    pub fn channels(&self) -> Vec<(usize, Quantity)> {
        let mut out = Vec::with_capacity(self.n_channels());
        out.extend(self.accel_dofs.iter().map(|&d| (d, Quantity::Acceleration)));
        out.extend(self.vel_dofs.iter().map(|&d| (d, Quantity::Velocity)));
        out.extend(self.disp_dofs.iter().map(|&d| (d, Quantity::Displacement)));
        out
    }

    /// Builds a layout from explicit `(dof, quantity)` pairs, preserving the
    /// canonical `[accel, vel, disp]` group order. Duplicates are allowed.
    pub fn from_channels(channels: &[(usize, Quantity)], n_dof: usize) -> Result<Self> {
        let pick = |q: Quantity| -> Vec<usize> {
            channels
                .iter()
                .filter(|(_, cq)| *cq == q)
                .map(|(d, _)| *d)
                .collect()
        };
        Self::allowing_duplicates(
            pick(Quantity::Acceleration),
            pick(Quantity::Velocity),
            pick(Quantity::Displacement),
            n_dof,
        )
    }

    pub fn n_channels(&self) -> usize {
        self.accel_dofs.len() + self.vel_dofs.len() + self.disp_dofs.len()
    }

    pub fn accel_dofs(&self) -> &[usize] {
        &self.accel_dofs
    }

    pub fn vel_dofs(&self) -> &[usize] {
        &self.vel_dofs
    }

    pub fn disp_dofs(&self) -> &[usize] {
        &self.disp_dofs
    }

    /// Default channel names, e.g. `a3`, `v0`, `d2` for a DOF index.
    pub fn channel_names(&self) -> Vec<String> {
        self.channels()
            .iter()
            .map(|(d, q)| match q {
                Quantity::Acceleration => format!("a{d}"),
                Quantity::Velocity => format!("v{d}"),
                Quantity::Displacement => format!("d{d}"),
            })
            .collect()
    }
}

/// Continuous-time state-space form of the modal model with modal forces
/// as input.
#[derive(Debug, Clone)]
pub struct ContinuousStateSpace {
    /// State matrix `[[0, I], [-W^2, -Gamma]]` (`2 n_r` square).
    pub ac: DMatrix<f64>,
    /// Input matrix `[[0], [I]]` (`2 n_r x n_r`).
    pub bc: DMatrix<f64>,
    /// Output influence matrix (`n_y x 2 n_r`).
    pub gc: DMatrix<f64>,
    /// Direct transmission from modal forces (`n_y x n_r`); nonzero only on
    /// acceleration channels.
    pub jc: DMatrix<f64>,
}

/// Discrete-time state-space model at a fixed step, with the continuous
/// matrices retained for joint augmentation.
#[derive(Debug, Clone)]
pub struct DiscreteStateSpace {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub j: DMatrix<f64>,
    pub dt: f64,
    /// Structural process noise covariance; zero until tuned.
    pub qx: DMatrix<f64>,
    /// Measurement noise covariance; zero until tuned.
    pub r: DMatrix<f64>,
    /// Continuous state matrix this model was discretized from.
    pub ac: DMatrix<f64>,
    /// Continuous input matrix this model was discretized from.
    pub bc: DMatrix<f64>,
}

impl DiscreteStateSpace {
    pub fn n_states(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_modes(&self) -> usize {
        self.b.ncols()
    }

    pub fn n_outputs(&self) -> usize {
        self.g.nrows()
    }
}

/// Solves the undamped generalized eigenproblem `K phi = w^2 M phi` and
/// returns the `n_modes` lowest modes, mass-normalized. Damping ratios are
/// left unassigned.
pub fn solve_modal(sys: &FullOrderSystem, n_modes: usize) -> Result<ModalModel> {
    let n = sys.n_dof();
    if n_modes == 0 || n_modes > n {
        return Err(Error::InvalidInput(format!(
            "n_modes must lie in 1..={n} (got {n_modes})"
        )));
    }

    // Reduce to a standard symmetric problem via Cholesky of M:
    // with M = L L^T, solve (L^-1 K L^-T) v = w^2 v and map phi = L^-T v.
    let chol = sys
        .m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidInput("mass matrix is not positive-definite".into()))?;
    let l = chol.l();
    let linv_k = l
        .solve_lower_triangular(&sys.k)
        .ok_or_else(|| Error::Numerical("singular Cholesky factor of M".into()))?;
    let s = l
        .solve_lower_triangular(&linv_k.transpose())
        .ok_or_else(|| Error::Numerical("singular Cholesky factor of M".into()))?;
    let s = linalg::symmetrize(&s);

    let eig = s.symmetric_eigen();

    // Sort ascending by eigenvalue; ties keep the eigensolver's ordering.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[i]
            .partial_cmp(&eig.eigenvalues[j])
            .expect("symmetric eigenvalues are finite")
    });

    let mut phi = DMatrix::zeros(n, n_modes);
    let mut omega = DVector::zeros(n_modes);
    let scale = eig.eigenvalues.amax().max(1.0);
    for (col, &idx) in order.iter().take(n_modes).enumerate() {
        let lam = eig.eigenvalues[idx];
        if lam <= 1e-12 * scale {
            return Err(Error::InvalidInput(format!(
                "mode {col} has zero or negative frequency; rigid-body modes are not representable"
            )));
        }
        omega[col] = lam.sqrt();
        let v = eig.eigenvectors.column(idx);
        let mut shape = l
            .transpose()
            .solve_upper_triangular(&v.into_owned())
            .ok_or_else(|| Error::Numerical("singular Cholesky factor of M".into()))?;
        // Deterministic sign: largest-magnitude entry positive.
        let (imax, _) = shape
            .iter()
            .enumerate()
            .fold((0, 0.0), |acc, (i, &x)| if x.abs() > acc.1 { (i, x.abs()) } else { acc });
        if shape[imax] < 0.0 {
            shape = -shape;
        }
        phi.set_column(col, &shape);
    }

    ModalModel::new(phi, omega, None)
}

/// Builds the continuous state-space matrices for a damped modal model and
/// a sensor layout. Acceleration channels carry direct transmission from
/// the modal forces; velocity and displacement channels do not.
pub fn build_continuous(modal: &ModalModel, layout: &SensorLayout) -> Result<ContinuousStateSpace> {
    let zeta = modal.zeta_required()?;
    if layout.n_channels() == 0 {
        return Err(Error::InvalidInput("sensor layout has no channels".into()));
    }
    if let Some(&d) = layout
        .channels()
        .iter()
        .map(|(d, _)| d)
        .find(|&&d| d >= modal.n_dof())
    {
        return Err(Error::InvalidInput(format!(
            "layout DOF {d} out of range for a {}-DOF model",
            modal.n_dof()
        )));
    }

    let n_r = modal.n_modes();
    let omega2: Vec<f64> = modal.omega.iter().map(|w| w * w).collect();
    let gamma: Vec<f64> = modal
        .omega
        .iter()
        .zip(zeta.iter())
        .map(|(w, z)| 2.0 * z * w)
        .collect();

    let mut ac = DMatrix::zeros(2 * n_r, 2 * n_r);
    for j in 0..n_r {
        ac[(j, n_r + j)] = 1.0;
        ac[(n_r + j, j)] = -omega2[j];
        ac[(n_r + j, n_r + j)] = -gamma[j];
    }
    let mut bc = DMatrix::zeros(2 * n_r, n_r);
    for j in 0..n_r {
        bc[(n_r + j, j)] = 1.0;
    }

    let channels = layout.channels();
    let n_y = channels.len();
    let mut gc = DMatrix::zeros(n_y, 2 * n_r);
    let mut jc = DMatrix::zeros(n_y, n_r);
    for (row, &(dof, q)) in channels.iter().enumerate() {
        let shape = modal.phi.row(dof);
        match q {
            Quantity::Acceleration => {
                for j in 0..n_r {
                    gc[(row, j)] = -shape[j] * omega2[j];
                    gc[(row, n_r + j)] = -shape[j] * gamma[j];
                    jc[(row, j)] = shape[j];
                }
            }
            Quantity::Velocity => {
                for j in 0..n_r {
                    gc[(row, n_r + j)] = shape[j];
                }
            }
            Quantity::Displacement => {
                for j in 0..n_r {
                    gc[(row, j)] = shape[j];
                }
            }
        }
    }

    Ok(ContinuousStateSpace { ac, bc, gc, jc })
}

/// Discretizes a continuous model at step `dt` with the matrix exponential.
/// Noise covariances are initialized to zero and filled by tuning.
pub fn discretize(css: &ContinuousStateSpace, dt: f64) -> Result<DiscreteStateSpace> {
    if dt <= 0.0 || !dt.is_finite() {
        return Err(Error::InvalidInput("time step must be positive".into()));
    }
    let n = css.ac.nrows();
    let a = linalg::expm(&(&css.ac * dt))?;

    // B = (A - I) Ac^-1 Bc when Ac is safely invertible; otherwise the
    // augmented-exponential form, which is exact for singular Ac.
    let b = match invert_checked(&css.ac) {
        Some(ac_inv) => (&a - DMatrix::identity(n, n)) * ac_inv * &css.bc,
        None => linalg::discretize_input_van_loan(&css.ac, &css.bc, dt)?.1,
    };

    let n_y = css.gc.nrows();
    Ok(DiscreteStateSpace {
        a,
        b,
        g: css.gc.clone(),
        j: css.jc.clone(),
        dt,
        qx: DMatrix::zeros(n, n),
        r: DMatrix::zeros(n_y, n_y),
        ac: css.ac.clone(),
        bc: css.bc.clone(),
    })
}

fn invert_checked(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let inv = a.clone().lu().try_inverse()?;
    let resid = (a * &inv - DMatrix::<f64>::identity(n, n)).amax();
    (resid < 1e-8).then_some(inv)
}

/// Per-channel, per-mode sensitivity `|phi(dof, j)|`: the magnitude of each
/// mode shape at each sensor location, the diagnostic used to judge which
/// sensors observe which modes.
pub fn modal_influence(modal: &ModalModel, layout: &SensorLayout) -> DMatrix<f64> {
    let channels = layout.channels();
    let mut out = DMatrix::zeros(channels.len(), modal.n_modes());
    for (row, &(dof, _)) in channels.iter().enumerate() {
        for j in 0..modal.n_modes() {
            out[(row, j)] = modal.phi[(dof, j)].abs();
        }
    }
    out
}
