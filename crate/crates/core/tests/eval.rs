use hpm_core::eval::{
    emit_all, parse_structured, render_structured, render_table, run_ablation, AblationModels, AblationReport,
    ErrorMetrics, MetricTriple, SnippetRecord, HEADLINE,
};
use hpm_core::pipeline::{generate_corpus, Protocol};
use hpm_core::policy::{ModelWeights, PolicyArchitecture};
use hpm_core::sim::{Episode, GeneratorConfig};
use hpm_core::{AblationMode, Error, ScenarioLabel};
use proptest::prelude::*;

fn record(scenario: ScenarioLabel, mode: AblationMode, episode: u64, step: usize, x: f64) -> SnippetRecord {
    let m = ErrorMetrics {
        mae: x,
        twae: 2.0 * x,
        adn: 0.5 * x,
    };
    SnippetRecord {
        snippet_id: format!("{episode}:{step}"),
        episode_id: episode,
        origin_step: step,
        horizon: 25,
        scenario,
        mode,
        metrics: MetricTriple { position: m, speed: m },
        warnings: 0,
    }
}

fn sample_report() -> AblationReport {
    let mut rs = Vec::new();
    for (i, s) in HEADLINE.iter().enumerate() {
        for (j, m) in AblationMode::ALL.iter().enumerate() {
            for k in 0..5 {
                rs.push(record(*s, *m, k, 10 * i, 0.1 + (i * 7 + j * 3 + k as usize) as f64 / 9.0));
            }
        }
    }
    AblationReport::new(rs)
}

#[test]
fn structured_report_round_trips() {
    let r = sample_report();
    assert_eq!(parse_structured(&render_structured(&r)).unwrap(), r);
    assert!(matches!(parse_structured("{not json"), Err(Error::Format { .. })));
}

#[test]
fn table_has_one_row_per_scenario_and_mode() {
    let r = sample_report();
    assert_eq!(r.rows().len(), 24);
    let text = render_table(&r);
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 25);
    let cols = rows[0].split(',').count();
    assert!(rows.iter().all(|l| l.split(',').count() == cols));
    assert!(rows[1].starts_with("G,all,5,"));

    let mut with_y = r.records.clone();
    with_y.push(record(ScenarioLabel::Y, AblationMode::NoFV, 3, 4, 1.0));
    let r = AblationReport::new(with_y);
    assert_eq!(r.rows().len(), 28);
    let text = render_table(&r);
    assert_eq!(text.lines().filter(|l| l.starts_with("# short-horizon: ")).count(), 4);
}

#[test]
fn row_means_match_a_hand_computation() {
    let r = AblationReport::new(vec![
        record(ScenarioLabel::RG, AblationMode::NoFV, 1, 0, 1.0),
        record(ScenarioLabel::RG, AblationMode::NoFV, 2, 0, 3.0),
        record(ScenarioLabel::RG, AblationMode::NoTL, 2, 0, 9.0),
    ]);
    let row = r.row(ScenarioLabel::RG, AblationMode::NoFV);
    assert_eq!(row.count, 2);
    let mean = row.mean.unwrap();
    assert_eq!(mean.position.mae, 2.0);
    assert_eq!(mean.position.twae, 4.0);
    assert_eq!(mean.speed.adn, 1.0);
    assert_eq!(row.position_adn.unwrap().median, 1.0);
}

#[test]
fn empty_bucket_has_no_aggregates() {
    let r = AblationReport::new(vec![record(ScenarioLabel::G, AblationMode::All, 1, 0, 1.0)]);
    let row = r.row(ScenarioLabel::GYR, AblationMode::NoTL);
    assert_eq!(row.count, 0);
    assert!(row.mean.is_none() && row.position_adn.is_none() && row.speed_adn.is_none());
    let text = render_table(&r);
    let line = text.lines().find(|l| l.starts_with("GYR,notl,")).unwrap();
    assert_eq!(line, format!("GYR,notl,0{}", ",".repeat(18)));
}

#[test]
fn emission_is_byte_identical() {
    let r = sample_report();
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    emit_all(&r, &a).unwrap();
    emit_all(&r.clone(), &b).unwrap();
    for f in ["ablation_table.csv", "ablation_report.json", "ablation_snippets.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let ledger = std::fs::read_to_string(a.join("ablation_snippets.csv")).unwrap();
    assert_eq!(ledger.lines().count(), 1 + r.records.len());
}

fn shard(seed: u64, n: usize) -> AblationReport {
    let labels = [ScenarioLabel::G, ScenarioLabel::YR, ScenarioLabel::Y];
    AblationReport::new(
        (0..n)
            .map(|i| {
                let h = seed.wrapping_mul(6364136223846793005).wrapping_add(i as u64);
                record(labels[(h % 3) as usize], AblationMode::ALL[(h / 3 % 4) as usize], h % 97, i, (h % 13) as f64)
            })
            .collect(),
    )
}

proptest! {
    #[test]
    fn merge_is_associative_and_commutative(a in 0u64..1000, b in 0u64..1000, c in 0u64..1000, n in 0usize..20) {
        let (x, y, z) = (shard(a, n), shard(b, n + 1), shard(c, 3));
        let left = x.clone().merge(y.clone()).merge(z.clone());
        let right = x.clone().merge(y.clone().merge(z.clone()));
        prop_assert_eq!(&left, &right);
        prop_assert_eq!(x.clone().merge(y.clone()), y.merge(x));
    }
}

#[test]
fn zero_models_give_identical_modes() {
    let cfg = GeneratorConfig {
        episodes: 20,
        seed: 4,
        ..GeneratorConfig::default()
    };
    let eps = generate_corpus(&cfg).unwrap();
    let refs: Vec<&Episode> = eps.iter().collect();
    let test = Protocol::default().eval_snippets(&refs).unwrap();
    let arch = PolicyArchitecture::deterministic(11, 4, vec![]);
    let models = AblationModels::from_models(
        AblationMode::ALL
            .iter()
            .map(|m| ModelWeights::zeros(arch.clone(), *m).unwrap())
            .collect(),
    )
    .unwrap();
    let r = run_ablation(&models, &test).unwrap();
    assert_eq!(r.records.len(), 4 * test.len());
    for s in HEADLINE {
        let rows: Vec<_> = AblationMode::ALL.iter().map(|m| r.row(s, *m)).collect();
        for row in &rows[1..] {
            assert_eq!(row.count, rows[0].count);
            assert_eq!(row.mean, rows[0].mean);
        }
    }
    assert_eq!(r, run_ablation(&models, &test).unwrap());
}

#[test]
fn ablation_rejects_wrong_model_sets() {
    let arch = PolicyArchitecture::deterministic(11, 4, vec![]);
    let z = |m| ModelWeights::zeros(arch.clone(), m).unwrap();
    let missing = vec![z(AblationMode::All), z(AblationMode::NoFV), z(AblationMode::NoTL)];
    assert!(matches!(AblationModels::from_models(missing), Err(Error::Config(_))));
    let dup = vec![z(AblationMode::All), z(AblationMode::All), z(AblationMode::NoTL), z(AblationMode::NoFVTL)];
    assert!(AblationModels::from_models(dup).is_err());

    let mut models = AblationModels::from_models(AblationMode::ALL.map(z).to_vec()).unwrap();
    models.notl = ModelWeights::zeros(PolicyArchitecture::mixture(11, 4, vec![], 2), AblationMode::NoTL).unwrap();
    assert!(run_ablation(&models, &[]).is_err());
}
