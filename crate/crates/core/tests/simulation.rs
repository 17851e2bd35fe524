use std::collections::BTreeMap;

use hpm_core::sim::{
    extract_snippets, simulate_episode, GeneratorConfig, Span, WindowConfig,
};
use hpm_core::{Phase, ScenarioLabel};

#[test]
fn compliant_drivers_stop_at_red() {
    let mut cfg = GeneratorConfig::default();
    cfg.driver.yellow_pass_propensity = Span::new(0.0, 0.0);
    let mut stopped = 0;
    for i in 0..100 {
        let ep = simulate_episode(&cfg.episode_spec(i)).unwrap();
        for k in 1..ep.len() {
            let d_prev = ep.spec.tl_position - ep.hv.s[k - 1];
            let d = ep.spec.tl_position - ep.hv.s[k];
            let tl = ep.tl[k];
            if tl.phase != Phase::Red || tl.timer <= 2.0 {
                continue;
            }
            assert!(
                !(d_prev > 0.0 && d <= 0.0),
                "episode {i} step {k}: crossed the bar {}s into red",
                tl.timer
            );
            if (0.0..3.0).contains(&d) && ep.hv.v[k] == 0.0 {
                stopped += 1;
            }
        }
    }
    assert!(stopped > 100, "only {stopped} stopped-at-red samples");
}

#[test]
fn slower_front_vehicle_is_never_hit() {
    let mut cfg = GeneratorConfig {
        fv_probability: 1.0,
        ..GeneratorConfig::default()
    };
    cfg.driver.desired_speed = Span::new(10.0, 16.0);
    let mut min_ratio = f64::INFINITY;
    for i in 0..200 {
        let spec = cfg.episode_spec(i);
        let fv_spec = spec.fv.unwrap();
        if fv_spec.params.desired_speed >= spec.hv.params.desired_speed {
            continue;
        }
        let ep = simulate_episode(&spec).unwrap();
        let fv = ep.fv.as_ref().unwrap();
        for k in 0..ep.len() {
            let r = fv.s[k] - ep.hv.s[k];
            let gap = r - hpm_core::sim::driver::VEHICLE_LENGTH;
            min_ratio = min_ratio.min(gap / (spec.hv.params.min_gap / 2.0));
            assert!(r > 0.0);
        }
    }
    assert!(min_ratio > 1.0, "closest approach {min_ratio} x min_gap/2");
}

#[test]
fn default_corpus_covers_every_headline_scenario() {
    let cfg = GeneratorConfig::default();
    let short = WindowConfig::new(2.0, 5.0, 0.2, 5).unwrap();
    let long = WindowConfig::new(2.0, 15.0, 0.2, 5).unwrap();
    let mut counts: BTreeMap<ScenarioLabel, usize> = BTreeMap::new();
    for i in 0..10_000 {
        let ep = simulate_episode(&cfg.episode_spec(i)).unwrap();
        for s in extract_snippets(&ep, &short).unwrap() {
            *counts.entry(s.scenario).or_default() += 1;
        }
        for s in extract_snippets(&ep, &long).unwrap() {
            if s.scenario == ScenarioLabel::GYR {
                *counts.entry(ScenarioLabel::GYR).or_default() += 1;
            }
        }
    }
    for label in [
        ScenarioLabel::G,
        ScenarioLabel::R,
        ScenarioLabel::GY,
        ScenarioLabel::YR,
        ScenarioLabel::RG,
        ScenarioLabel::GYR,
    ] {
        let n = counts.get(&label).copied().unwrap_or(0);
        assert!(n >= 100, "{label}: {n} snippets ({counts:?})");
    }
}
