use hpm_core::pipeline::{generate_corpus, Protocol};
use hpm_core::policy::{ModelWeights, PolicyArchitecture};
use hpm_core::rollout::density::{density_grid, silverman_bandwidth, trapezoid};
use hpm_core::rollout::{
    filter_by_density, forecast_deterministic, forecast_fv, marginal_density, rollout_probabilistic, Density,
    propagate_closed_form, step_dynamics, ForecastInput, FvSource, SpatProvider, Variable,
};
use hpm_core::sim::{Episode, GeneratorConfig};
use hpm_core::{AblationMode, Error, FeatureScaler, Snippet, VehicleKinState};
use proptest::prelude::*;

fn snippets() -> Vec<Snippet> {
    let cfg = GeneratorConfig {
        episodes: 30,
        seed: 21,
        ..GeneratorConfig::default()
    };
    let eps = generate_corpus(&cfg).unwrap();
    let refs: Vec<&Episode> = eps.iter().collect();
    Protocol::default().all_eval_snippets(&refs).unwrap()
}

fn with_fv(sns: &[Snippet]) -> &Snippet {
    sns.iter()
        .find(|s| FvSource::fv_history(s).is_some() && s.future_contexts.iter().all(|c| c.fv.is_some()))
        .expect("corpus has a snippet with a front vehicle")
}

fn arch_det() -> PolicyArchitecture {
    PolicyArchitecture::deterministic(11, 6, vec![5])
}

fn arch_mdn(n: usize) -> PolicyArchitecture {
    PolicyArchitecture::mixture(11, 6, vec![5], n)
}

fn random_model(arch: PolicyArchitecture, mode: AblationMode, seed: u64) -> ModelWeights {
    let dim = arch.input_dim();
    ModelWeights::init(arch, mode, FeatureScaler::identity(dim), seed).unwrap()
}

/// Zero network with the head bias set to `bias`: a constant output.
fn constant_model(arch: PolicyArchitecture, mode: AblationMode, bias: &[f64]) -> ModelWeights {
    let mut w = ModelWeights::zeros(arch, mode).unwrap();
    let b = w.layout().get("head.b").unwrap().range();
    w.params[b].copy_from_slice(bias);
    w
}

fn sources(mode: AblationMode, sn: &Snippet) -> (Option<SpatProvider>, FvSource<'static>) {
    let spat = mode.uses_tl().then(|| SpatProvider::from_snippet(sn).unwrap());
    let fv = if mode.uses_fv() { FvSource::oracle(sn) } else { FvSource::None };
    (spat, fv)
}

#[test]
fn zero_policy_keeps_constant_velocity() {
    let sns = snippets();
    let dt = 0.2;
    for mode in AblationMode::ALL {
        let sn = with_fv(&sns);
        let w = ModelWeights::zeros(arch_det(), mode).unwrap();
        let (spat, fv) = sources(mode, sn);
        let input = ForecastInput::from_snippet(sn);
        let traj = forecast_deterministic(&w, &input, spat.as_ref(), &fv).unwrap();
        let x0 = sn.origin().state;
        assert_eq!(traj.states.len(), 25);
        for (k, x) in traj.states.iter().enumerate() {
            let t = (k + 1) as f64 * dt;
            assert!((x.v - x0.v).abs() < 1e-12);
            assert!((x.s - (x0.s + x0.v * t)).abs() < 1e-9, "{mode} step {k}");
        }
        assert!(traj.accels.iter().all(|&a| a == 0.0));
        assert!(traj.log_densities.is_none());
    }
}

#[test]
fn constant_braking_policy_stops_and_stays_stopped() {
    let sns = snippets();
    let sn = sns.iter().find(|s| s.origin().state.v > 5.0).unwrap();
    let w = constant_model(arch_det(), AblationMode::NoFVTL, &[-3.0]);
    let traj = forecast_deterministic(&w, &ForecastInput::from_snippet(sn), None, &FvSource::None).unwrap();
    assert!(traj.states.iter().all(|x| x.v >= 0.0));
    assert_eq!(traj.states.last().unwrap().v, 0.0);
    let v0 = sn.origin().state.v;
    let travelled = traj.states.last().unwrap().s - sn.origin().state.s;
    assert!((travelled - v0 * v0 / 6.0).abs() < v0 * 0.2 + 1e-9);
}

#[test]
fn sharp_mixture_reproduces_the_deterministic_forecast() {
    let sns = snippets();
    let sn = &sns[0];
    let det = constant_model(arch_det(), AblationMode::NoFVTL, &[0.4]);
    let mdn = constant_model(arch_mdn(1), AblationMode::NoFVTL, &[0.0, 0.4, -40.0]);
    let input = ForecastInput::from_snippet(sn);
    let d = forecast_deterministic(&det, &input, None, &FvSource::None).unwrap();
    let e = rollout_probabilistic(&mdn, &input, None, &FvSource::None, 20, 3).unwrap();
    for run in &e.samples {
        for (a, b) in run.states.iter().zip(&d.states) {
            assert!((a.s - b.s).abs() < 0.05);
        }
    }
}

#[test]
fn joint_log_probability_is_the_sum_of_step_densities() {
    let sns = snippets();
    let sn = with_fv(&sns);
    for (i, mode) in AblationMode::ALL.into_iter().enumerate() {
        let w = random_model(arch_mdn(3), mode, 40 + i as u64);
        let (spat, fv) = sources(mode, sn);
        let ens =
            rollout_probabilistic(&w, &ForecastInput::from_snippet(sn), spat.as_ref(), &fv, 50, 8).unwrap();
        assert_eq!(ens.len(), 50);
        for (run, joint) in ens.samples.iter().zip(&ens.joint_log_prob) {
            let logs = run.log_densities.as_ref().unwrap();
            assert_eq!(logs.len(), 25);
            assert!(logs.iter().all(|l| l.is_finite()));
            assert!((logs.iter().sum::<f64>() - joint).abs() < 1e-9);
        }
    }
}

#[test]
fn ensembles_are_reproducible_and_thread_independent() {
    let sns = snippets();
    let sn = &sns[3];
    let w = random_model(arch_mdn(2), AblationMode::NoFV, 5);
    let spat = SpatProvider::from_snippet(sn).unwrap();
    let input = ForecastInput::from_snippet(sn);
    let run = |threads: usize, seed: u64| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| rollout_probabilistic(&w, &input, Some(&spat), &FvSource::None, 64, seed).unwrap())
    };
    let a = run(1, 17);
    assert_eq!(a, run(4, 17));
    assert_ne!(a.samples, run(1, 18).samples);
}

#[test]
fn kde_marginals_integrate_to_one() {
    let sns = snippets();
    let sn = &sns[5];
    let w = random_model(arch_mdn(2), AblationMode::NoFVTL, 77);
    let input = ForecastInput::from_snippet(sn);
    for m in [10, 100, 1000] {
        let ens = rollout_probabilistic(&w, &input, None, &FvSource::None, m, 2).unwrap();
        for k in [1, 12, 25] {
            for var in [Variable::Position, Variable::Speed] {
                let xs = ens.values_at(k, var);
                let h = silverman_bandwidth(&xs).unwrap();
                let grid = density_grid(&xs, h, 2001);
                let Density::Values { values, bandwidth } = marginal_density(&ens, k, var, &grid).unwrap() else {
                    panic!("spread ensemble gave a point mass");
                };
                assert_eq!(bandwidth, h);
                let mass = trapezoid(&grid, &values);
                assert!((mass - 1.0).abs() < 0.02, "M={m} k={k} {var:?}: {mass}");
            }
        }
    }
}

#[test]
fn coincident_rollouts_give_a_point_mass() {
    let sns = snippets();
    let sn = sns.iter().find(|s| s.origin().state.v == 0.0).expect("corpus has a stopped origin");
    let input = ForecastInput::from_snippet(sn);
    // a stopped vehicle under braking accelerations never moves: v is clamped at zero
    let w = constant_model(arch_mdn(1), AblationMode::NoFVTL, &[0.0, -1.0, -40.0]);
    let ens = rollout_probabilistic(&w, &input, None, &FvSource::None, 10, 1).unwrap();
    let grid = [0.0, 1.0];
    assert_eq!(
        marginal_density(&ens, 25, Variable::Speed, &grid).unwrap(),
        Density::PointMass(0.0)
    );
}

#[test]
fn density_filter_thresholds() {
    let sns = snippets();
    let sn = &sns[7];
    let w = random_model(arch_mdn(2), AblationMode::NoFVTL, 9);
    let ens = rollout_probabilistic(&w, &ForecastInput::from_snippet(sn), None, &FvSource::None, 200, 6).unwrap();
    assert_eq!(filter_by_density(&ens, 0.0).len(), 200);
    assert!(filter_by_density(&ens, 1e9).is_empty());
    let loose = filter_by_density(&ens, 0.01);
    let tight = filter_by_density(&ens, 0.05);
    assert!(tight.iter().all(|i| loose.contains(i)));
    assert!(tight.len() <= loose.len());
}

#[test]
fn sources_must_match_the_model_inputs() {
    let sns = snippets();
    let sn = with_fv(&sns);
    let input = ForecastInput::from_snippet(sn);
    let spat = SpatProvider::from_snippet(sn).unwrap();

    let all = ModelWeights::zeros(arch_det(), AblationMode::All).unwrap();
    assert!(matches!(forecast_fv(&all, &input, Some(&spat)), Err(Error::Config(_))));

    let nofvtl = ModelWeights::zeros(arch_det(), AblationMode::NoFVTL).unwrap();
    let r = forecast_deterministic(&nofvtl, &input, None, &FvSource::oracle(sn));
    assert!(matches!(r, Err(Error::Config(_))));

    let nofv = ModelWeights::zeros(arch_det(), AblationMode::NoFV).unwrap();
    let r = forecast_deterministic(&nofv, &input, None, &FvSource::None);
    assert!(matches!(r, Err(Error::Config(_))));

    let mdn = ModelWeights::zeros(arch_mdn(2), AblationMode::NoFVTL).unwrap();
    assert!(forecast_deterministic(&mdn, &input, None, &FvSource::None).is_err());
    assert!(rollout_probabilistic(&nofvtl, &input, None, &FvSource::None, 5, 0).is_err());
    assert!(rollout_probabilistic(&mdn, &input, None, &FvSource::None, 0, 0).is_err());
}

#[test]
fn forecast_front_vehicle_feeds_the_host_forecast() {
    let sns = snippets();
    let sn = with_fv(&sns);
    let input = ForecastInput::from_snippet(sn);
    let spat = SpatProvider::from_snippet(sn).unwrap();
    let fv_model = ModelWeights::zeros(arch_det(), AblationMode::NoFV).unwrap();
    let host = random_model(arch_det(), AblationMode::All, 12);
    let history = FvSource::fv_history(sn).unwrap();
    let fv = FvSource::Forecast {
        weights: &fv_model,
        history: history.clone(),
    };
    let a = forecast_deterministic(&host, &input, Some(&spat), &fv).unwrap();

    // the zero FV model drives the FV at constant speed: an equivalent oracle track
    let f0 = *history.last().unwrap();
    let track = (0..input.steps)
        .map(|k| {
            Some(hpm_core::VehicleKinState {
                s: f0.s + f0.v * k as f64 * input.dt,
                v: f0.v,
            })
        })
        .collect();
    let b = forecast_deterministic(&host, &input, Some(&spat), &FvSource::Oracle(track)).unwrap();
    for (x, y) in a.states.iter().zip(&b.states) {
        assert!((x.s - y.s).abs() < 1e-9 && (x.v - y.v).abs() < 1e-9);
    }
}

#[test]
fn front_vehicle_behind_the_host_is_dropped_with_a_warning() {
    let sns = snippets();
    let sn = sns.iter().find(|s| s.origin().state.v > 2.0).unwrap();
    let input = ForecastInput::from_snippet(sn);
    let w = ModelWeights::zeros(arch_det(), AblationMode::NoTL).unwrap();
    let x0 = sn.origin().state;
    // FV parked just ahead: the host at constant speed overtakes it
    let parked = hpm_core::VehicleKinState { s: x0.s + 1.0, v: 0.0 };
    let traj = forecast_deterministic(&w, &input, None, &FvSource::Oracle(vec![Some(parked); input.steps])).unwrap();
    assert_eq!(traj.warnings.len(), 1);
    assert!(traj.warnings[0].contains("front vehicle"));
    assert!((traj.states.last().unwrap().v - x0.v).abs() < 1e-12);
}

proptest! {
    #[test]
    fn stepping_matches_closed_form(
        s0 in -200.0f64..200.0,
        v0 in 0.0f64..30.0,
        steps in prop::collection::vec((-3.0f64..3.0, 0.05f64..0.5), 1..60),
    ) {
        let x0 = VehicleKinState { s: s0, v: v0 };
        let mut x = x0;
        let mut stepped = Vec::new();
        for &(a, dt) in &steps {
            x = step_dynamics(x, a, dt);
            stepped.push(x);
        }
        prop_assume!(steps.iter().zip(std::iter::once(&x0).chain(&stepped)).all(|(&(a, dt), p)| p.v + a * dt >= 0.0));
        let (accels, dts): (Vec<f64>, Vec<f64>) = steps.iter().copied().unzip();
        for (a, b) in stepped.iter().zip(propagate_closed_form(x0, &accels, &dts)) {
            prop_assert!((a.s - b.s).abs() < 1e-9 && (a.v - b.v).abs() < 1e-9);
        }
    }

    #[test]
    fn stepping_never_reverses(v0 in 0.0f64..30.0, accels in prop::collection::vec(-8.0f64..3.0, 1..80)) {
        let mut x = VehicleKinState { s: 0.0, v: v0 };
        for a in accels {
            let next = step_dynamics(x, a, 0.2);
            prop_assert!(next.v >= 0.0 && next.s >= x.s);
            x = next;
        }
    }
}
