use semicomp::copulas::CopulaFamily;
use semicomp::optimize::BfgsOptions;
use semicomp::estimation::{fit, initial_values, univariate_fit, FitOptions};
use semicomp::experiments::presets::{study1_spec, study1_truth, study2_spec, study2_truth, CENSOR_MAX, STUDY1_PREVALENCES};
use semicomp::likelihood::{ModelSpec, ParameterVector, SubjectRecord};
use semicomp::margins::MarginFamily;
use semicomp::simulation::{simulate, SimConfig};

fn config(spec: ModelSpec, truth: ParameterVector, n: usize, seed: u64) -> SimConfig {
    let covariate_prevalences = if spec.p == 3 { STUDY1_PREVALENCES.to_vec() } else { vec![0.4; spec.p] };
    SimConfig { spec, truth, n, covariate_prevalences, censor_max: CENSOR_MAX, seed }
}

#[test]
fn recovers_nonterminal_age_effect() {
    let spec = study1_spec(CopulaFamily::Clayton);
    let truth = study1_truth(CopulaFamily::Clayton);
    for seed in [1, 2] {
        let data = simulate(&config(spec, truth.clone(), 3000, seed)).unwrap();
        let f = fit(&spec, &data, &FitOptions::default()).unwrap();
        assert!(f.converged);
        let z = (f.params_hat.0[1] - 0.32) / f.std_error(1);
        assert!(z.abs() < 3.0, "seed {seed}: z = {z}");
        for i in 0..spec.n_params() {
            assert!(f.covariance[(i, i)] > 0.0);
            for j in 0..spec.n_params() {
                assert_eq!(f.covariance[(i, j)], f.covariance[(j, i)]);
            }
        }
        assert!((f.aic - (2.0 * 12.0 - 2.0 * f.loglik)).abs() < 1e-9);
        for hr in f.hr_nonterminal.iter().chain(&f.hr_terminal) {
            assert!(hr.ci_low <= hr.hr && hr.hr <= hr.ci_high);
        }
    }
}

#[test]
fn independence_fit_matches_univariate_fits() {
    let spec = ModelSpec::new(CopulaFamily::Frank, MarginFamily::Exponential, 1);
    let truth = ParameterVector::from_parts(&spec, &[-3.0, 0.4], &[-3.8, 1.2], &[0.0, 0.0], &[]).unwrap();
    let data = simulate(&config(spec, truth.clone(), 1500, 12)).unwrap();
    // association held at independence
    let options = FitOptions { start: Some(truth), fixed: spec.b_range().collect(), ..FitOptions::default() };
    let joint = fit(&spec, &data, &options).unwrap();
    let w: Vec<&[f64]> = data.iter().map(|r| r.w.as_slice()).collect();
    let x: Vec<f64> = data.iter().map(|r| r.x).collect();
    let d1: Vec<bool> = data.iter().map(|r| r.d1).collect();
    let y: Vec<f64> = data.iter().map(|r| r.y).collect();
    let d2: Vec<bool> = data.iter().map(|r| r.d2).collect();
    let (a, _) = univariate_fit(MarginFamily::Exponential, &x, &d1, &w);
    let (c, _) = univariate_fit(MarginFamily::Exponential, &y, &d2, &w);
    for (k, v) in a.iter().chain(&c).enumerate() {
        assert!((joint.params_hat.0[k] - v).abs() < 1e-3, "coef {k}: {} vs {v}", joint.params_hat.0[k]);
    }
}

#[test]
fn refit_from_optimum_is_idempotent() {
    let spec = study2_spec(CopulaFamily::Gumbel, MarginFamily::Gompertz);
    let data = simulate(&config(spec, study2_truth(CopulaFamily::Gumbel, MarginFamily::Gompertz), 800, 3)).unwrap();
    let first = fit(&spec, &data, &FitOptions::default()).unwrap();
    assert!(first.converged);
    let again = fit(&spec, &data, &FitOptions { start: Some(first.params_hat.clone()), ..FitOptions::default() }).unwrap();
    for (a, b) in first.params_hat.0.iter().zip(&again.params_hat.0) {
        assert!((a - b).abs() < 1e-8);
    }
}

#[test]
fn default_and_perturbed_starts_agree() {
    let spec = study1_spec(CopulaFamily::Clayton);
    let truth = study1_truth(CopulaFamily::Clayton);
    let data = simulate(&config(spec, truth.clone(), 1000, 8)).unwrap();
    let start = initial_values(&spec, &data).unwrap();
    assert_eq!(start.len(), spec.n_params());
    let a = fit(&spec, &data, &FitOptions::default()).unwrap();
    let perturbed = ParameterVector(truth.0.iter().enumerate().map(|(i, v)| v + 0.05 * ((i % 3) as f64 - 1.0)).collect());
    let b = fit(&spec, &data, &FitOptions { start: Some(perturbed), ..FitOptions::default() }).unwrap();
    let dist = a.params_hat.0.iter().zip(&b.params_hat.0).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(dist < 1e-4, "distance {dist}");
    assert!((a.loglik - b.loglik).abs() < 1e-6);
}

#[test]
fn interval_width_shrinks_with_sample_size() {
    let spec = study2_spec(CopulaFamily::Frank, MarginFamily::Exponential);
    let truth = study2_truth(CopulaFamily::Frank, MarginFamily::Exponential);
    let se = |n: usize| {
        let data = simulate(&config(spec, truth.clone(), n, 31)).unwrap();
        fit(&spec, &data, &FitOptions::default()).unwrap().std_error(1)
    };
    let (s500, s2000, s8000) = (se(500), se(2000), se(8000));
    for ratio in [s500 / s2000, s2000 / s8000] {
        assert!((ratio - 2.0).abs() <= 0.5, "ratio {ratio}");
    }
}

#[test]
fn hazard_ratios_do_not_depend_on_shape_scale() {
    let spec = study2_spec(CopulaFamily::Clayton, MarginFamily::Weibull);
    let data = simulate(&config(spec, study2_truth(CopulaFamily::Clayton, MarginFamily::Weibull), 1000, 17)).unwrap();
    let tight = FitOptions { polish: BfgsOptions { max_iter: 500, grad_tol: 1e-9 }, ..FitOptions::default() };
    let log_scale = fit(&spec, &data, &tight).unwrap();
    let natural = fit(&spec, &data, &FitOptions { log_shape: false, ..tight }).unwrap();
    for (a, b) in log_scale.hr_nonterminal.iter().zip(&natural.hr_nonterminal) {
        assert!((a.hr - b.hr).abs() < 1e-6, "{} vs {}", a.hr, b.hr);
    }
    for (a, b) in log_scale.hr_terminal.iter().zip(&natural.hr_terminal) {
        assert!((a.hr - b.hr).abs() < 1e-6, "{} vs {}", a.hr, b.hr);
        assert!((a.variance / b.variance - 1.0).abs() < 1e-3);
    }
}

#[test]
fn rejects_mismatched_or_empty_data() {
    let spec = study1_spec(CopulaFamily::Normal);
    assert!(fit(&spec, &[], &FitOptions::default()).is_err());
    let data = vec![SubjectRecord::new(1.0, true, 2.0, true, vec![1.0])];
    assert!(fit(&spec, &data, &FitOptions::default()).is_err());
}
