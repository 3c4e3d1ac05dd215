//! Temporary BSSP diagnostics (ignored by default).

use gplfm::placement::{run_bssp, BsspConfig, RemovalRule};
use gplfm::sensing::{PipelineConfig, SensorSpec};
use gplfm::signal::{simulate, Channel, ImpactScenario, NoiseSpec, TriangularPulse};
use gplfm::structural::{solve_modal, FullOrderSystem, Quantity, SensorLayout};
use gplfm::tuning::{ParamBounds, RTuneConfig, TuningConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

#[test]
#[ignore]
fn probe_bssp_curve() {
    let sys = FullOrderSystem::spring_mass_chain(&[1.0; 5], &[1096.0; 5]).unwrap();
    let modal = solve_modal(&sys, 5).unwrap().with_uniform_damping(0.05).unwrap();
    let layout = SensorLayout::new(vec![0, 1, 2, 3, 4], vec![], vec![0, 2], 5).unwrap();

    for (noise_frac, fs, duration) in [
        (0.4, 640.0, 4.0),
        (0.8, 640.0, 4.0),
    ] {
        let clean_scenario = ImpactScenario {
            force: TriangularPulse {
                peak: 100.0,
                rise: 0.12,
                fall: 0.24,
                onset: 0.5,
            },
            load: vec![(3, 1.0)],
            noise: NoiseSpec::noise_free(),
            duration,
            fs,
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
        let disp_rms = {
            let mut sum = 0.0;
            let mut count = 0;
            for r in 5..7 {
                for v in clean.clean_channels.row(r).iter() {
                    sum += v * v;
                    count += 1;
                }
            }
            (sum / count as f64).sqrt()
        };

        let mut scenario = clean_scenario.clone();
        scenario.noise.accel_rms = noise_frac * accel_rms;
        scenario.noise.disp_rms = noise_frac * disp_rms;
        scenario.seed = 70;
        let (mut data, truth) = simulate(&scenario, &modal, &layout).unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(71);
        let normal = StandardNormal;
        for (name, dof) in [("a0b", 0usize), ("a1b", 1usize), ("a2b", 2usize)] {
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
            SensorSpec::new("a0b", 0, Quantity::Acceleration),
            SensorSpec::new("a1", 1, Quantity::Acceleration),
            SensorSpec::new("a1b", 1, Quantity::Acceleration),
            SensorSpec::new("a2", 2, Quantity::Acceleration),
            SensorSpec::new("a2b", 2, Quantity::Acceleration),
            SensorSpec::new("d0", 0, Quantity::Displacement),
            SensorSpec::new("d2", 2, Quantity::Displacement),
        ];
        let reference = truth.response(4, Quantity::Acceleration);
        let cfg = BsspConfig {
            pipeline: PipelineConfig {
                prior: TuningConfig {
                    restarts: 4,
                    max_iters: 80,
                    alpha: ParamBounds::new(1e-1, 1e5).unwrap(),
                    ell: ParamBounds::new(1e-3, 1e1).unwrap(),
                    qx: ParamBounds::fixed(1e-12).unwrap(),
                    seed: 72,
                    ..TuningConfig::default()
                },
                noise: RTuneConfig {
                    grid_points: 9,
                    max_iters: 30,
                    bounds: ParamBounds::new(1e-10, 1e4).unwrap(),
                    ..RTuneConfig::default()
                },
                retune_per_fold: false,
            },
            retune_per_evaluation: false,
            rule: RemovalRule::LeastCritical,
        };
        let tuned =
            gplfm::sensing::tune_pipeline(&data, &modal, &candidates, &cfg.pipeline).unwrap();
        println!(
            "noise {noise_frac} fs {fs} T {duration}: tuned alpha={:.3e} ell={:.3e} r={:?} (true sigma_a^2={:.3e}, sigma_d^2={:.3e})",
            tuned.alpha,
            tuned.ell,
            tuned
                .r_groups
                .iter()
                .map(|(q, v)| format!("{}:{v:.3e}", q.short_name()))
                .collect::<Vec<_>>(),
            (noise_frac * accel_rms).powi(2),
            (noise_frac * disp_rms).powi(2),
        );

        let res = run_bssp(
            &data,
            &modal,
            &candidates,
            (4, Quantity::Acceleration),
            &reference,
            3,
            &cfg,
        )
        .unwrap();
        println!(
            "  curve {:?}, removals {:?}",
            res.rmse_curve()
                .iter()
                .map(|(n, r)| format!("{n}:{r:.4}"))
                .collect::<Vec<_>>(),
            res.removal_order
        );
    }
}
