//! Temporary diagnostics (ignored by default).

use gplfm::sensing::{estimate, tune_pipeline, PipelineConfig, SensorSpec, TunedParameters};
use gplfm::signal::{simulate, trac, ImpactScenario, NoiseSpec, TriangularPulse};
use gplfm::structural::{solve_modal, FullOrderSystem, ModalModel, Quantity, SensorLayout};
use gplfm::tuning::{ParamBounds, RTuneConfig, TuningConfig};

fn twin_modal() -> ModalModel {
    let sys = FullOrderSystem::spring_mass_chain(&[1.0; 5], &[1096.0; 5]).unwrap();
    solve_modal(&sys, 5).unwrap().with_uniform_damping(0.05).unwrap()
}

fn cfgp(seed: u64) -> PipelineConfig {
    PipelineConfig {
        prior: TuningConfig {
            restarts: 4,
            max_iters: 80,
            alpha: ParamBounds::new(1e-1, 1e5).unwrap(),
            ell: ParamBounds::new(1e-3, 1e1).unwrap(),
            qx: ParamBounds::fixed(1e-12).unwrap(),
            seed,
            ..TuningConfig::default()
        },
        noise: RTuneConfig {
            grid_points: 9,
            max_iters: 30,
            bounds: ParamBounds::new(1e-10, 1e4).unwrap(),
            ..RTuneConfig::default()
        },
        retune_per_fold: false,
    }
}

#[test]
#[ignore]
fn probe_twin_variants() {
    for (label, k, fs, duration, rise, fall, load_dof) in [
        ("T3 fs=640 p=.12/.24 load=3", 1096.0, 640.0, 4.0, 0.12, 0.24, 3usize),
        ("Q3 fs=512 p=.12/.24 load=3", 1096.0, 512.0, 4.0, 0.12, 0.24, 3),
    ] {
        let sys = FullOrderSystem::spring_mass_chain(&[1.0; 5], &[k; 5]).unwrap();
        let modal = solve_modal(&sys, 5).unwrap().with_uniform_damping(0.05).unwrap();
        let layout = SensorLayout::all_accelerometers(5);
        let scenario = ImpactScenario {
            force: TriangularPulse {
                peak: 100.0,
                rise,
                fall,
                onset: 0.5,
            },
            load: vec![(load_dof, 1.0)],
            noise: NoiseSpec::noise_free(),
            duration,
            fs,
            seed: 5,
        };
        let (data, truth) = simulate(&scenario, &modal, &layout).unwrap();
        let specs: Vec<SensorSpec> = (0..5)
            .map(|d| SensorSpec::new(format!("a{d}"), d, Quantity::Acceleration))
            .collect();
        let p = TunedParameters {
            alpha: 50.0,
            ell: 0.03,
            qx: 1e-12,
            r_groups: vec![(Quantity::Acceleration, 1e-8)],
            hellinger: 0.0,
            prediction_rmse: 0.0,
            r_flat: false,
        };
        let mut tracs = Vec::new();
        for fold in 0..5 {
            let observing: Vec<SensorSpec> = specs
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != fold)
                .map(|(_, s)| s.clone())
                .collect();
            let res = estimate(
                &data,
                &modal,
                &observing,
                &[(fold, Quantity::Acceleration)],
                &p,
            )
            .unwrap();
            let rec: Vec<f64> = res.outputs.mean.row(0).iter().copied().collect();
            let measured = &data.channel(&format!("a{fold}")).unwrap().values;
            tracs.push(trac(measured, &rec).unwrap());
        }
        // Force correlations with all observed.
        let res_all = estimate(&data, &modal, &specs, &[], &p).unwrap();
        let mut corrs = Vec::new();
        for j in 0..5 {
            let est: Vec<f64> = res_all.forces.mean.row(j).iter().copied().collect();
            let tru: Vec<f64> = truth.modal_forces.row(j).iter().copied().collect();
            let n = est.len() as f64;
            let (me, mt) = (est.iter().sum::<f64>() / n, tru.iter().sum::<f64>() / n);
            let cov: f64 = est.iter().zip(&tru).map(|(a, b)| (a - me) * (b - mt)).sum();
            let va: f64 = est.iter().map(|a| (a - me) * (a - me)).sum();
            let vb: f64 = tru.iter().map(|b| (b - mt) * (b - mt)).sum();
            corrs.push(cov / (va * vb).sqrt());
        }
        let f5 = modal.omega()[4] / (2.0 * std::f64::consts::PI);
        println!(
            "{label} (f5={f5:.2}Hz): LOO TRAC {:?}  force corr {:?}",
            tracs.iter().map(|t| format!("{t:.1}")).collect::<Vec<_>>(),
            corrs.iter().map(|c| format!("{c:.3}")).collect::<Vec<_>>()
        );

        // Same twin under the real tuned pipeline, clean and at 20 dB SNR.
        use gplfm::sensing::run_loo;
        let signal_rms = {
            let m = &truth.clean_channels;
            (m.iter().map(|v| v * v).sum::<f64>() / (m.nrows() * m.ncols()) as f64).sqrt()
        };
        for (tag, noise, seed) in [("clean", 0.0, 5u64), ("20dB", 0.1 * signal_rms, 6u64)] {
            let mut sc = scenario.clone();
            sc.noise.accel_rms = noise;
            sc.seed = seed;
            let (d2, _) = simulate(&sc, &modal, &layout).unwrap();
            let report = run_loo(&d2, &modal, &specs, &cfgp(50)).unwrap();
            let tr: Vec<String> = report
                .folds
                .iter()
                .map(|f| format!("{}:{:.1}", f.channel, f.trac.unwrap_or(-1.0)))
                .collect();
            println!("  tuned LOO {tag}: {tr:?}");
        }
    }
}

#[test]
#[ignore]
fn probe_twin_tuning() {
    let modal = twin_modal();
    let layout = SensorLayout::all_accelerometers(5);
    let scenario = ImpactScenario {
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
        seed: 5,
    };
    let (data, truth) = simulate(&scenario, &modal, &layout).unwrap();
    println!("modal force peak rows:");
    for j in 0..5 {
        let peak = truth.modal_forces.row(j).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        println!("  mode {j}: peak {peak:.3}, omega {:.3} Hz", modal.omega()[j] / (2.0 * std::f64::consts::PI));
    }

    let specs: Vec<SensorSpec> = (0..5)
        .map(|d| SensorSpec::new(format!("a{d}"), d, Quantity::Acceleration))
        .collect();
    let observing: Vec<SensorSpec> = specs.iter().filter(|s| s.name != "a1").cloned().collect();

    let params = tune_pipeline(&data, &modal, &observing, &cfgp(50)).unwrap();
    println!("tuned: alpha={:.4e} ell={:.4e} qx={:.1e} r={:?} hellinger={:.4} rmse={:.4e} flat={}",
        params.alpha, params.ell, params.qx, params.r_groups, params.hellinger, params.prediction_rmse, params.r_flat);

    let measured = &data.channel("a1").unwrap().values;
    let score = |p: &TunedParameters| -> f64 {
        let res = estimate(&data, &modal, &observing, &[(1, Quantity::Acceleration)], p).unwrap();
        let rec: Vec<f64> = res.outputs.mean.row(0).iter().copied().collect();
        trac(measured, &rec).unwrap()
    };
    println!("tuned TRAC at a1: {:.2}", score(&params));

    for alpha in [1.0, 10.0, 50.0, 200.0, 1000.0] {
        for ell in [0.01, 0.03, 0.1, 0.3] {
            let p = TunedParameters {
                alpha,
                ell,
                qx: 1e-12,
                r_groups: vec![(Quantity::Acceleration, 1e-8)],
                hellinger: 0.0,
                prediction_rmse: 0.0,
                r_flat: false,
            };
            println!("alpha {alpha:8.1} ell {ell:5.2} -> TRAC {:.2}", score(&p));
        }
    }

    // Error decomposition in time for one sensible parameter set.
    let p = TunedParameters {
        alpha: 50.0,
        ell: 0.03,
        qx: 1e-12,
        r_groups: vec![(Quantity::Acceleration, 1e-8)],
        hellinger: 0.0,
        prediction_rmse: 0.0,
        r_flat: false,
    };
    let res = estimate(&data, &modal, &observing, &[(1, Quantity::Acceleration)], &p).unwrap();
    let rec: Vec<f64> = res.outputs.mean.row(0).iter().copied().collect();
    let clean = truth.response(1, Quantity::Acceleration);
    let fs = 128.0;
    for (label, lo, hi) in [
        ("pulse  0.4-0.8s", 0.4, 0.8),
        ("ring   0.8-2.0s", 0.8, 2.0),
        ("tail   2.0-4.0s", 2.0, 4.0),
        ("full   0.0-4.0s", 0.0, 4.0),
    ] {
        let a = (lo * fs) as usize;
        let b = (hi * fs) as usize;
        let t = trac(&clean[a..b], &rec[a..b]).unwrap();
        let rms: f64 = (clean[a..b].iter().zip(&rec[a..b]).map(|(x, y)| (x - y) * (x - y)).sum::<f64>()
            / (b - a) as f64)
            .sqrt();
        let scale: f64 = (clean[a..b].iter().map(|x| x * x).sum::<f64>() / (b - a) as f64).sqrt();
        println!("{label}: TRAC {t:7.3}  rmse {rms:9.4}  signal rms {scale:9.4}");
    }

    // Reconstruction with ALL channels observed, as a ceiling.
    let res_all = estimate(&data, &modal, &specs, &[(1, Quantity::Acceleration)], &p).unwrap();
    let rec_all: Vec<f64> = res_all.outputs.mean.row(0).iter().copied().collect();
    println!("all-observed TRAC at a1: {:.3}", trac(&clean, &rec_all).unwrap());

    // Force recovery with all channels observed.
    for j in 0..5 {
        let est: Vec<f64> = res_all.forces.mean.row(j).iter().copied().collect();
        let tru: Vec<f64> = truth.modal_forces.row(j).iter().copied().collect();
        let n = est.len() as f64;
        let (me, mt) = (est.iter().sum::<f64>() / n, tru.iter().sum::<f64>() / n);
        let cov: f64 = est.iter().zip(&tru).map(|(a, b)| (a - me) * (b - mt)).sum();
        let va: f64 = est.iter().map(|a| (a - me) * (a - me)).sum();
        let vb: f64 = tru.iter().map(|b| (b - mt) * (b - mt)).sum();
        println!("force corr mode {j}: {:.4}", cov / (va * vb).sqrt());
    }
}
