use nalgebra::{DMatrix, DVector};
use twostep::error::Error;
use twostep::rng::Stream;
use twostep::simulate::{generate_dgp, run_monte_carlo, InferenceMode, SimulationSpec, THETA0};

fn small(mode: InferenceMode) -> SimulationSpec {
    SimulationSpec {
        n: 120,
        k_grid: vec![5, 20],
        reps: 12,
        bootstrap_b: 50,
        mode,
        ..SimulationSpec::default()
    }
}

fn with_workers<T: Send>(w: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(w).build().unwrap().install(f)
}

#[test]
fn tables_do_not_depend_on_worker_count() {
    for mode in [InferenceMode::OracleNormal, InferenceMode::BootstrapPercentileT] {
        let spec = small(mode);
        let a = with_workers(1, || run_monte_carlo(&spec).unwrap());
        let b = with_workers(4, || run_monte_carlo(&spec).unwrap());
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.to_text(), b.to_text());
        assert_eq!(a.estimates, b.estimates);
    }
}

#[test]
fn bias_row_is_the_centred_mean() {
    let spec = small(InferenceMode::OracleNormal);
    let t = run_monte_carlo(&spec).unwrap();
    let sn = (spec.n as f64).sqrt();
    for est in &t.estimates {
        for (vals, corrected) in [(&est.tau_hat, false), (&est.tau_bc, true)] {
            let centred = vals.iter().map(|v| (v - 0.5) * sn).sum::<f64>() / vals.len() as f64;
            let row = t.row(est.k, corrected).unwrap();
            assert!((row.bias - centred).abs() < 1e-12);
            assert!((row.rmse.powi(2) - row.bias.powi(2) - row.sd.powi(2)).abs() < 1e-9);
        }
    }
    let csv = t.to_csv();
    assert!(csv.starts_with("k,bias,sd,rmse,coverage,length"));
    assert_eq!(csv.lines().count(), 1 + 2 * spec.k_grid.len());
}

#[test]
fn invalid_specs_are_rejected() {
    let mut s = SimulationSpec::smoke();
    s.reps = 1;
    assert!(matches!(run_monte_carlo(&s), Err(Error::Config(_))));
    let mut s = SimulationSpec::smoke();
    s.k_grid = vec![195];
    assert!(matches!(run_monte_carlo(&s), Err(Error::Config(_))));
    let mut s = SimulationSpec::smoke();
    s.k_grid = vec![1];
    assert!(s.validate().is_err());
}

#[test]
fn outcome_regression_on_true_propensity_recovers_theta() {
    let n = 1_000_000;
    let s = generate_dgp(n, 5, 0.2, &Stream::new(99)).unwrap();
    let mut xtx = DMatrix::<f64>::zeros(3, 3);
    let mut xty = DVector::<f64>::zeros(3);
    let rows: Vec<(DVector<f64>, f64)> = (0..n)
        .map(|i| {
            let p = s.truth.propensity_of(i);
            (DVector::from_vec(vec![1.0, p, p * p]), s.data.y_row(i)[0])
        })
        .collect();
    for (x, y) in &rows {
        xtx.ger(1.0, x, x, 1.0);
        xty.axpy(*y, x, 1.0);
    }
    let inv = xtx.clone().try_inverse().unwrap();
    let beta = &inv * &xty;
    let mut meat = DMatrix::<f64>::zeros(3, 3);
    for (x, y) in &rows {
        let e = y - x.dot(&beta);
        meat.ger(e * e, x, x, 1.0);
    }
    let cov = &inv * meat * &inv;
    for j in 0..3 {
        let z = (beta[j] - THETA0[j]) / cov[(j, j)].sqrt();
        assert!(z.abs() < 3.0, "coefficient {j}: {} (z = {z})", beta[j]);
    }
}

#[test]
fn uncorrected_bias_grows_with_k() {
    let spec = SimulationSpec {
        n: 1000,
        k_grid: vec![5, 40, 80],
        reps: 1000,
        oracle: false,
        ..SimulationSpec::default()
    };
    let t = run_monte_carlo(&spec).unwrap();
    let b: Vec<f64> = spec.k_grid.iter().map(|&k| t.row(k, false).unwrap().bias.abs()).collect();
    assert!(b[0] <= b[1] && b[1] <= b[2], "{b:?}");
}
