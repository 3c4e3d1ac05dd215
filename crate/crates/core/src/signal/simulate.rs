//! Synthetic impact scenarios on modal models, used as ground truth for
//! validating the estimation pipeline.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::structural::{build_continuous, discretize, ModalModel, Quantity, SensorLayout};

use super::{Channel, TimeSeriesSet};

/// Triangular force pulse: linear rise to `peak` over `rise` seconds
/// starting at `onset`, then linear fall over `fall` seconds.
#[derive(Debug, Clone, Copy)]
pub struct TriangularPulse {
    pub peak: f64,
    pub rise: f64,
    pub fall: f64,
    pub onset: f64,
}

impl TriangularPulse {
    pub fn value(&self, t: f64) -> f64 {
        let x = t - self.onset;
        if x <= 0.0 || x >= self.rise + self.fall {
            0.0
        } else if x < self.rise {
            self.peak * x / self.rise
        } else {
            self.peak * (1.0 - (x - self.rise) / self.fall)
        }
    }
}

/// Independent Gaussian measurement noise RMS per channel group.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoiseSpec {
    pub accel_rms: f64,
    pub vel_rms: f64,
    pub disp_rms: f64,
}

impl NoiseSpec {
    pub fn noise_free() -> Self {
        Self::default()
    }

    fn rms_for(&self, q: Quantity) -> f64 {
        match q {
            Quantity::Acceleration => self.accel_rms,
            Quantity::Velocity => self.vel_rms,
            Quantity::Displacement => self.disp_rms,
        }
    }
}

/// A simulated impact on a structure: force shape, load application,
/// noise model, record length, and RNG seed.
#[derive(Debug, Clone)]
pub struct ImpactScenario {
    pub force: TriangularPulse,
    /// Load application as `(dof, weight)` pairs; weights encode direction.
    pub load: Vec<(usize, f64)>,
    pub noise: NoiseSpec,
    pub duration: f64,
    pub fs: f64,
    pub seed: u64,
}

/// Noise-free reference data accompanying a simulated record.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    /// Modal states (`2 n_r` rows) at each sample.
    pub modal_states: DMatrix<f64>,
    /// Modal force vector (`n_r` rows) at each sample.
    pub modal_forces: DMatrix<f64>,
    /// Physical displacement at every DOF.
    pub displacement: DMatrix<f64>,
    /// Physical velocity at every DOF.
    pub velocity: DMatrix<f64>,
    /// Physical acceleration at every DOF.
    pub acceleration: DMatrix<f64>,
    /// Noise-free values of the measured channels.
    pub clean_channels: DMatrix<f64>,
}

impl GroundTruth {
    /// Noise-free series for a `(dof, quantity)` pair.
    pub fn response(&self, dof: usize, quantity: Quantity) -> Vec<f64> {
        let m = match quantity {
            Quantity::Acceleration => &self.acceleration,
            Quantity::Velocity => &self.velocity,
            Quantity::Displacement => &self.displacement,
        };
        m.row(dof).iter().copied().collect()
    }
}

/// Integrates the modal model under the scenario's load and returns noisy
/// measured channels plus the full noise-free ground truth.
///
/// State propagation uses the exact discrete transition with the force held
/// constant over each step at its midpoint value; output equations use the
/// instantaneous force at the sample time.
pub fn simulate(
    scenario: &ImpactScenario,
    modal: &ModalModel,
    layout: &SensorLayout,
) -> Result<(TimeSeriesSet, GroundTruth)> {
    if scenario.force.rise <= 0.0 || scenario.force.fall <= 0.0 {
        return Err(Error::InvalidInput("rise and fall times must be positive".into()));
    }
    if scenario.duration < scenario.force.onset + scenario.force.rise + scenario.force.fall {
        return Err(Error::InvalidInput(
            "duration must cover onset + rise + fall".into(),
        ));
    }
    if !(scenario.fs > 0.0) {
        return Err(Error::InvalidInput("sampling rate must be positive".into()));
    }
    if scenario.load.is_empty() {
        return Err(Error::InvalidInput("at least one load DOF is required".into()));
    }
    for &(dof, _) in &scenario.load {
        if dof >= modal.n_dof() {
            return Err(Error::InvalidInput(format!(
                "load DOF {dof} out of range for a {}-DOF model",
                modal.n_dof()
            )));
        }
    }

    let dt = 1.0 / scenario.fs;
    let css = build_continuous(modal, layout)?;
    let dss = discretize(&css, dt)?;
    let n_r = modal.n_modes();
    let n_dof = modal.n_dof();
    let n = (scenario.duration * scenario.fs).round() as usize;
    if n == 0 {
        return Err(Error::InvalidInput("record has no samples".into()));
    }

    // Modal force direction: phi^T S_p weights.
    let mut sp = DVector::zeros(n_dof);
    for &(dof, w) in &scenario.load {
        sp[dof] += w;
    }
    let dir = modal.mode_shapes().transpose() * sp;

    let zeta = modal
        .zeta()
        .ok_or_else(|| Error::InvalidInput("modal damping ratios are required".into()))?;
    let omega2: Vec<f64> = modal.omega().iter().map(|w| w * w).collect();
    let gamma: Vec<f64> = modal
        .omega()
        .iter()
        .zip(zeta.iter())
        .map(|(w, z)| 2.0 * z * w)
        .collect();

    let mut modal_states = DMatrix::zeros(2 * n_r, n);
    let mut modal_forces = DMatrix::zeros(n_r, n);
    let mut displacement = DMatrix::zeros(n_dof, n);
    let mut velocity = DMatrix::zeros(n_dof, n);
    let mut acceleration = DMatrix::zeros(n_dof, n);

    let mut x = DVector::zeros(2 * n_r);
    for k in 0..n {
        let t = k as f64 * dt;
        let p = scenario.force.value(t);
        let f = &dir * p;

        modal_states.set_column(k, &x);
        modal_forces.set_column(k, &f);

        let r = x.rows(0, n_r).into_owned();
        let v = x.rows(n_r, n_r).into_owned();
        let mut rdd = f.clone();
        for j in 0..n_r {
            rdd[j] -= omega2[j] * r[j] + gamma[j] * v[j];
        }
        displacement.set_column(k, &(modal.mode_shapes() * r));
        velocity.set_column(k, &(modal.mode_shapes() * v));
        acceleration.set_column(k, &(modal.mode_shapes() * rdd));

        // Hold the midpoint force over the step.
        let p_mid = scenario.force.value(t + 0.5 * dt);
        let f_mid = &dir * p_mid;
        x = &dss.a * x + &dss.b * f_mid;
    }

    // Noise-free channel values via the observation equation.
    let mut clean = DMatrix::zeros(layout.n_channels(), n);
    for k in 0..n {
        let y = &dss.g * modal_states.column(k) + &dss.j * modal_forces.column(k);
        clean.set_column(k, &y);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let normal = StandardNormal;
    let names = layout.channel_names();
    let channels = layout
        .channels()
        .iter()
        .enumerate()
        .map(|(row, &(_, q))| {
            let rms = scenario.noise.rms_for(q);
            let values: Vec<f64> = (0..n)
                .map(|k| {
                    let e: f64 = normal.sample(&mut rng);
                    clean[(row, k)] + rms * e
                })
                .collect();
            Channel::new(names[row].clone(), q, values)
        })
        .collect();

    let ts = TimeSeriesSet::new(0.0, scenario.fs, channels)?;
    Ok((
        ts,
        GroundTruth {
            modal_states,
            modal_forces,
            displacement,
            velocity,
            acceleration,
            clean_channels: clean,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structural::{solve_modal, FullOrderSystem};

    fn sdof_modal(f_n: f64, zeta: f64) -> ModalModel {
        let w = 2.0 * std::f64::consts::PI * f_n;
        ModalModel::new(
            DMatrix::from_element(1, 1, 1.0),
            DVector::from_element(1, w),
            None,
        )
        .unwrap()
        .with_uniform_damping(zeta)
        .unwrap()
    }

    fn scenario(peak: f64, fs: f64, seed: u64) -> ImpactScenario {
        ImpactScenario {
            force: TriangularPulse {
                peak,
                rise: 0.2,
                fall: 0.3,
                onset: 0.5,
            },
            load: vec![(0, 1.0)],
            noise: NoiseSpec::noise_free(),
            duration: 6.0,
            fs,
            seed,
        }
    }

    #[test]
    fn zero_force_gives_zero_response() {
        let modal = sdof_modal(1.0, 0.05);
        let layout = SensorLayout::all_accelerometers(1);
        let (ts, truth) = simulate(&scenario(0.0, 100.0, 1), &modal, &layout).unwrap();
        assert_eq!(truth.clean_channels.amax(), 0.0);
        assert_eq!(ts.channels[0].values.iter().fold(0.0f64, |m, v| m.max(v.abs())), 0.0);
    }

    #[test]
    fn linearity_in_peak_force() {
        let modal = sdof_modal(1.0, 0.05);
        let layout = SensorLayout::all_accelerometers(1);
        let (_, t1) = simulate(&scenario(5.0, 100.0, 1), &modal, &layout).unwrap();
        let (_, t2) = simulate(&scenario(10.0, 100.0, 1), &modal, &layout).unwrap();
        let diff = (&t2.clean_channels - &t1.clean_channels * 2.0).amax();
        assert!(diff < 1e-10 * t2.clean_channels.amax());
    }

    #[test]
    fn seeded_noise_is_reproducible() {
        let modal = sdof_modal(1.0, 0.05);
        let layout = SensorLayout::all_accelerometers(1);
        let mut sc = scenario(5.0, 100.0, 99);
        sc.noise.accel_rms = 0.1;
        let (a, _) = simulate(&sc, &modal, &layout).unwrap();
        let (b, _) = simulate(&sc, &modal, &layout).unwrap();
        assert_eq!(a.channels[0].values, b.channels[0].values);
    }

    #[test]
    fn sdof_displacement_matches_duhamel_oracle() {
        // Duhamel integral: r(t) = int h(t - tau) f(tau) dtau with
        // h(t) = exp(-zeta w t) sin(wd t) / wd for a unit modal mass.
        // Evaluated by trapezoidal convolution on a 20x finer grid.
        let f_n = 1.0;
        let zeta = 0.05;
        let fs = 100.0 * f_n;
        let modal = sdof_modal(f_n, zeta);
        let phi = modal.mode_shapes()[(0, 0)];
        let layout = SensorLayout::new(vec![], vec![], vec![0], 1).unwrap();
        let sc = scenario(10.0, fs, 1);
        let (_, truth) = simulate(&sc, &modal, &layout).unwrap();

        let w = 2.0 * std::f64::consts::PI * f_n;
        let wd = w * (1.0 - zeta * zeta).sqrt();
        let refine = 20usize;
        let dt_f = 1.0 / fs / refine as f64;
        let n_f = (sc.duration / dt_f) as usize;
        // Modal force f(t) = phi * p(t) for the single-DOF load.
        let f_of = |t: f64| phi * sc.force.value(t);
        let h_of = |t: f64| {
            if t < 0.0 {
                0.0
            } else {
                (-zeta * w * t).exp() * (wd * t).sin() / wd
            }
        };

        let n = truth.displacement.ncols();
        let mut max_err = 0.0f64;
        let mut rms_true = 0.0f64;
        let mut rms_err = 0.0f64;
        for k in 0..n {
            let t = k as f64 / fs;
            let steps = ((t / dt_f) as usize).min(n_f);
            let mut integral = 0.0;
            for i in 0..steps {
                let tau0 = i as f64 * dt_f;
                let tau1 = tau0 + dt_f;
                integral +=
                    0.5 * dt_f * (h_of(t - tau0) * f_of(tau0) + h_of(t - tau1) * f_of(tau1));
            }
            let r_oracle = integral;
            let u_oracle = phi * r_oracle;
            let got = truth.displacement[(0, k)];
            max_err = max_err.max((got - u_oracle).abs());
            rms_true += u_oracle * u_oracle;
            rms_err += (got - u_oracle) * (got - u_oracle);
        }
        let rel = (rms_err / rms_true).sqrt();
        assert!(rel < 0.005, "relative RMS error {rel}, max {max_err}");
    }

    #[test]
    fn five_dof_chain_runs_and_has_finite_output() {
        let sys = FullOrderSystem::spring_mass_chain(
            &[1.0; 5],
            &[1096.0; 5],
        )
        .unwrap();
        let modal = solve_modal(&sys, 5).unwrap().with_uniform_damping(0.05).unwrap();
        let layout = SensorLayout::all_accelerometers(5);
        let sc = ImpactScenario {
            force: TriangularPulse {
                peak: 100.0,
                rise: 0.05,
                fall: 0.1,
                onset: 0.5,
            },
            load: vec![(2, 1.0)],
            noise: NoiseSpec::noise_free(),
            duration: 4.0,
            fs: 128.0,
            seed: 7,
        };
        let (ts, truth) = simulate(&sc, &modal, &layout).unwrap();
        assert_eq!(ts.n_samples(), 512);
        assert!(truth.acceleration.iter().all(|v| v.is_finite()));
        assert!(truth.acceleration.amax() > 1.0);
    }

    #[test]
    fn duration_must_cover_pulse() {
        let modal = sdof_modal(1.0, 0.05);
        let layout = SensorLayout::all_accelerometers(1);
        let mut sc = scenario(1.0, 100.0, 1);
        sc.duration = 0.6;
        assert!(simulate(&sc, &modal, &layout).is_err());
    }
}
