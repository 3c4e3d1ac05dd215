//! Temporary Hellinger-landscape diagnostics (ignored by default).

use gplfm::sensing::{estimation_model, SensorSpec};
use gplfm::signal::{simulate, Channel, ImpactScenario, NoiseSpec, TriangularPulse};
use gplfm::structural::{solve_modal, FullOrderSystem, Quantity, SensorLayout};
use gplfm::tuning::{
    empirical_output_cov, hellinger, model_rmse, prior_output_cov, RmseKind, ThetaEstimate,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

#[test]
#[ignore]
fn probe_hellinger_landscape() {
    let sys = FullOrderSystem::spring_mass_chain(&[1.0; 5], &[1096.0; 5]).unwrap();
    let modal = solve_modal(&sys, 5).unwrap().with_uniform_damping(0.05).unwrap();
    let layout = SensorLayout::new(vec![0, 1, 2, 3, 4], vec![], vec![0, 2], 5).unwrap();

    let clean_scenario = ImpactScenario {
        force: TriangularPulse {
            peak: 100.0,
            rise: 0.12,
            fall: 0.24,
            onset: 0.5,
        },
        load: vec![(3, 1.0)],
        noise: NoiseSpec::noise_free(),
        duration: 4.0,
        fs: 640.0,
        seed: 1,
    };
    let (_, clean) = simulate(&clean_scenario, &modal, &layout).unwrap();
    let accel_rms = {
        let mut sum = 0.0;
        let mut count = 0;
        for r in 0..5 {
            for v in clean.clean_channels.row(r).iter() {
                sum += v * v;
                count += 1;
            }
        }
        (sum / count as f64).sqrt()
    };
    let mut scenario = clean_scenario.clone();
    scenario.noise.accel_rms = 0.1 * accel_rms;
    scenario.noise.disp_rms = 1e-3;
    scenario.seed = 70;
    let (mut data, truth) = simulate(&scenario, &modal, &layout).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(71);
    let normal = StandardNormal;
    for (name, dof) in [("a1b", 1usize), ("a3b", 3usize)] {
        let clean_row = truth.response(dof, Quantity::Acceleration);
        let values: Vec<f64> = clean_row
            .iter()
            .map(|v| {
                let e: f64 = normal.sample(&mut rng);
                v + scenario.noise.accel_rms * e
            })
            .collect();
        data.channels
            .push(Channel::new(name, Quantity::Acceleration, values));
    }
    let candidates = vec![
        SensorSpec::new("a0", 0, Quantity::Acceleration),
        SensorSpec::new("a1", 1, Quantity::Acceleration),
        SensorSpec::new("a1b", 1, Quantity::Acceleration),
        SensorSpec::new("a2", 2, Quantity::Acceleration),
        SensorSpec::new("a3", 3, Quantity::Acceleration),
        SensorSpec::new("a3b", 3, Quantity::Acceleration),
        SensorSpec::new("d0", 0, Quantity::Displacement),
        SensorSpec::new("d2", 2, Quantity::Displacement),
    ];
    let names: Vec<&str> = candidates.iter().map(|s| s.name.as_str()).collect();
    let obs = data.to_observations(&names).unwrap();
    let emp = empirical_output_cov(&obs, false, None).unwrap();
    let dt = 1.0 / 640.0;
    let sigma_a2 = scenario.noise.accel_rms * scenario.noise.accel_rms;

    println!("sigma_a^2 = {sigma_a2:.3e}");
    for alpha in [5.0, 17.0, 30.0, 60.0, 120.0] {
        for ell in [0.01, 0.03, 0.1, 0.3, 1.0] {
            let theta = ThetaEstimate {
                alpha,
                ell,
                qx: 1e-12,
            };
            let groups = [
                (Quantity::Acceleration, 1.0),
                (Quantity::Displacement, 1.0),
            ];
            let m = estimation_model(&modal, &candidates, dt, &theta, &groups).unwrap();
            let h = prior_output_cov(&m)
                .and_then(|p| hellinger(&emp.cov, &p))
                .unwrap_or(f64::NAN);
            // One-step prediction RMSE at the TRUE noise level.
            let groups_true = [
                (Quantity::Acceleration, sigma_a2),
                (Quantity::Displacement, 1e-6),
            ];
            let m_true = estimation_model(&modal, &candidates, dt, &theta, &groups_true).unwrap();
            let pred = model_rmse(&m_true, &obs, RmseKind::OneStepPrediction).unwrap_or(f64::NAN);
            println!("alpha {alpha:6.1} ell {ell:5.2}: hellinger {h:.4}  pred-rmse(trueR) {pred:.4}");
        }
    }
}
