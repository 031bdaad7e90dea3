use semicomp::copulas::CopulaFamily;
use semicomp::cox::{cox_fit, CoxOptions};
use semicomp::experiments::presets::{study1_spec, study1_truth, CENSOR_MAX, STUDY1_PREVALENCES};
use semicomp::simulation::{simulate, SimConfig};

#[test]
fn terminal_hazard_ratio_recovered() {
    let cfg = SimConfig {
        spec: study1_spec(CopulaFamily::Normal),
        truth: study1_truth(CopulaFamily::Normal),
        n: 8000,
        covariate_prevalences: STUDY1_PREVALENCES.to_vec(),
        censor_max: CENSOR_MAX,
        seed: 14,
    };
    let data = simulate(&cfg).unwrap();
    let w: Vec<&[f64]> = data.iter().map(|r| r.w.as_slice()).collect();
    let y: Vec<f64> = data.iter().map(|r| r.y).collect();
    let d2: Vec<bool> = data.iter().map(|r| r.d2).collect();
    let fit = cox_fit(&y, &d2, &w, &CoxOptions::default()).unwrap();
    assert!(fit.converged);
    assert!(fit.score_norm <= 1e-8);
    let hr = fit.hr[0];
    let z = (hr.hr - 1.32f64.exp()) / hr.variance.sqrt();
    assert!(z.abs() < 3.0, "HR {} (z = {z})", hr.hr);
    for i in 0..3 {
        for j in 0..3 {
            assert_eq!(fit.covariance[i][j], fit.covariance[j][i]);
        }
    }
}
