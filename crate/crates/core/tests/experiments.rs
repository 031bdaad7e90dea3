use semicomp::copulas::CopulaFamily;
use semicomp::experiments::config::{StudyConfig, StudyKind};
use semicomp::experiments::report::{FitReport, ModelReport, StudyReport};
use semicomp::experiments::study::{run_fit, run_study1, run_study2};
use semicomp::experiments::presets::{study2_spec, study2_truth};
use semicomp::likelihood::ModelSpec;
use semicomp::margins::MarginFamily;
use semicomp::simulation::{simulate, summarize_censoring, SimConfig};

fn small(json: &str) -> StudyConfig {
    StudyConfig::from_json(json).unwrap()
}

#[test]
fn study_results_do_not_depend_on_thread_count() {
    let base = r#"{"replications": 4, "sim": {"n": 300, "seed": 5}, "threads": THREADS}"#;
    let one = small(&base.replace("THREADS", "1")).plan(StudyKind::Study1).unwrap();
    let two = small(&base.replace("THREADS", "3")).plan(StudyKind::Study1).unwrap();
    let a = StudyReport::from_outcome(&run_study1(&one).unwrap());
    let b = StudyReport::from_outcome(&run_study1(&two).unwrap());
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    // every estimand appears once per table
    let cox = &a.tables[0];
    assert_eq!(cox.rows.len(), 6);
    assert_eq!(a.tables.len(), 3);
    assert_eq!(a.tables[2].rows.len(), 10);
    assert_eq!(a.schema_version, "1");
}

#[test]
fn null_effects_give_nominal_coverage() {
    let cfg = small(
        r#"{"replications": 200, "sim": {"n": 400, "seed": 99, "covariate_prevalences": [0.4],
            "truth": {"a": [-3.0, 0.0], "c": [-3.5, 0.0], "b": [0.5, 0.0]}}}"#,
    );
    let out = run_study1(&cfg.plan(StudyKind::Study1).unwrap()).unwrap();
    let model2 = out.tables.iter().find(|t| t.title.starts_with("copula model 2")).unwrap();
    for name in ["HR_NT(age)", "HR_T(age)"] {
        let row = model2.row(name).unwrap();
        assert!((row.mean_estimate - 1.0).abs() < 0.05, "{name}: {}", row.mean_estimate);
        assert!((91.0..=98.0).contains(&row.coverage), "{name}: {}", row.coverage);
    }
}

#[test]
fn study2_tallies_selection() {
    let cfg = small(r#"{"replications": 3, "sim": {"copula": "clayton", "margin": "weibull", "n": 400}}"#);
    let out = run_study2(&cfg.plan(StudyKind::Study2).unwrap()).unwrap();
    assert_eq!(out.selection.len(), 3);
    let total: usize = out.selection.iter().map(|s| s.count).sum();
    assert_eq!(total + out.tables[0].failed, 3);
    let text = StudyReport::from_outcome(&out).to_text();
    assert!(text.contains("percent chosen by AIC"));
}

#[test]
fn frank_has_lowest_aic_on_frank_weibull_data() {
    let spec = study2_spec(CopulaFamily::Frank, MarginFamily::Weibull);
    let cfg = SimConfig {
        spec,
        truth: study2_truth(CopulaFamily::Frank, MarginFamily::Weibull),
        n: 1500,
        covariate_prevalences: vec![0.4],
        censor_max: 25.0,
        seed: 4,
    };
    let data = simulate(&cfg).unwrap();
    let mut models: Vec<ModelSpec> = CopulaFamily::ALL.iter().map(|&c| ModelSpec::new(c, MarginFamily::Weibull, 1)).collect();
    models.push(models[2]);
    let fits = run_fit(&models, &data, 1).unwrap();
    let names = vec!["age".to_string()];
    let reports: Vec<ModelReport> = fits
        .iter()
        .zip(&models)
        .map(|(f, m)| match f {
            Ok(f) => ModelReport::from_fit(f, &names, &[1.0, 5.0]),
            Err(e) => ModelReport::failed(m.label(), e),
        })
        .collect();
    let report = FitReport::new(data.len(), names, summarize_censoring(&data), reports);
    let best = report.models.iter().find(|m| m.aic_rank == Some(1)).unwrap();
    assert_eq!(best.model, "frank-weibull");
    // duplicate specs give identical rows
    assert_eq!(report.models[2].coefficients, report.models[4].coefficients);
    assert_eq!(report.models[2].hazards.len(), 4);
    assert!(report.to_text().contains("frank-weibull"));
}
