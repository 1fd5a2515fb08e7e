use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use twostep::bootstrap::{
    bootstrap_statistic, normal_interval, BootstrapOptions, InferenceReport, WeightDistribution,
};
use twostep::data::{expand_columns, ColumnSelection, Dataset};
use twostep::error::Error;
use twostep::firststep::{fit_least_squares, BalanceDiagnostics, K_RATIO_WARNING};
use twostep::gmm::{GmmConfig, GmmStep, MeanMoment, ObsWeights, SecondStep};
use twostep::jackknife::{jackknife_two_step, Functional, LinearFunctional};
use twostep::mte::{
    default_grid, estimate_mte, validate_mte_data, LinearOutcomeStep, MteOptions, OutcomeSpec,
    PolynomialSpec, TauFunctional,
};
use twostep::simulate::{run_monte_carlo, SimulationSpec};

use crate::plot::render_curve;
use crate::{CurveArgs, DataArgs, DiagnosticsArgs, EstimateArgs, InferenceArgs, MomentKind, SimulateArgs};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] Error),
    #[error("{0} simulation row(s) exceeded the 2% failure threshold")]
    Flagged(usize),
}

impl CliError {
    /// 1 usage or configuration, 2 data, 3 numerical failure.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Flagged(_) => 3,
            CliError::Core(e) if e.is_numerical() => 3,
            CliError::Core(e) if e.is_data() => 2,
            CliError::Core(_) => 1,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn columns(list: &str) -> Result<Vec<String>> {
    Ok(expand_columns(list)?)
}

fn load(data: &DataArgs, y: Vec<String>) -> Result<Dataset> {
    let sel = ColumnSelection {
        y,
        r: data.r_col.clone(),
        z: columns(&data.z_cols)?,
        intercept: !data.no_intercept,
    };
    Ok(Dataset::from_csv(&data.data, &sel)?)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(CliError::Usage(format!("--alpha must lie in (0, 1), got {alpha}")))
    }
}

fn bootstrap_options(inf: &InferenceArgs) -> Result<Option<BootstrapOptions>> {
    check_alpha(inf.alpha)?;
    let weights: WeightDistribution = inf.weights.parse()?;
    Ok((inf.bootstrap > 0).then_some(BootstrapOptions {
        draws: inf.bootstrap,
        weights,
        seed: inf.seed,
    }))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| CliError::Core(Error::Io(e)))
}

pub fn estimate(args: &EstimateArgs) -> Result<()> {
    let boot = bootstrap_options(&args.inference)?;
    let alpha = args.inference.alpha;
    let y_cols = columns(&args.y_cols)?;
    let x_cols = columns(&args.x_cols)?;

    let (data, label) = match args.moment {
        MomentKind::Mte => {
            if y_cols.len() != 1 {
                return Err(CliError::Usage("the MTE model takes exactly one outcome column".into()));
            }
            let mut y = y_cols.clone();
            y.extend(x_cols.iter().cloned());
            (load(&args.data, y)?, format!("mte (degree {})", args.degree))
        }
        MomentKind::Mean => {
            if y_cols.is_empty() {
                return Err(CliError::Usage("--y-cols is empty".into()));
            }
            (load(&args.data, y_cols.clone())?, "mean".to_string())
        }
    };

    let spec = PolynomialSpec {
        degree: args.degree,
        n_covariates: x_cols.len(),
    };
    let mean = MeanMoment { dim: y_cols.len() };
    let step: Box<dyn SecondStep + '_> = match args.moment {
        MomentKind::Mte => {
            if args.degree == 0 {
                return Err(CliError::Usage("--degree must be at least 1".into()));
            }
            validate_mte_data(&data, spec.dim_x())?;
            Box::new(LinearOutcomeStep::new(&spec))
        }
        MomentKind::Mean => Box::new(GmmStep::new(&mean, GmmConfig::default())),
    };

    let fit = fit_least_squares(&data)?;
    let theta = step.solve(&data, fit.mu_hat.as_slice(), ObsWeights::unit(), None)?;
    let d = theta.len();
    let jk = jackknife_two_step(step.as_ref(), &data, &fit, &theta)?;

    let coords: Vec<LinearFunctional> = (0..d).map(|j| LinearFunctional::coordinate(d, j)).collect();
    let mut names: Vec<String> = (1..=d).map(|j| format!("theta[{j}]")).collect();
    let x_bar: Vec<f64> = (0..x_cols.len())
        .map(|j| (0..data.n()).map(|i| data.y_row(i)[1 + j]).sum::<f64>() / data.n() as f64)
        .collect();
    let tau = TauFunctional {
        spec: &spec,
        x: x_bar,
        a: args.eval_a,
    };
    let mut fns: Vec<&dyn Functional> = coords.iter().map(|c| c as &dyn Functional).collect();
    if args.moment == MomentKind::Mte {
        fns.push(&tau);
        names.push(format!("tau({})", args.eval_a));
    }
    let named: Vec<(&str, &dyn Functional)> = names.iter().map(|s| s.as_str()).zip(fns.iter().copied()).collect();

    let report = match &boot {
        Some(opts) => bootstrap_statistic(step.as_ref(), &data, &fit, &jk, opts)?.report(&named, alpha)?,
        None => {
            let mut r = InferenceReport::from_jackknife(&jk);
            for (name, phi) in &named {
                r.intervals.push(normal_interval(&jk, name, *phi, alpha)?);
            }
            r
        }
    };

    let balance = fit.design_balance();
    let summary = summarize(&data, &label, &report, &balance, alpha);
    print!("{summary}");
    if let Some(p) = &args.summary {
        write_file(p, &summary)?;
    }
    if let Some(p) = &args.out {
        write_file(p, &(report.to_json() + "\n"))?;
    }
    Ok(())
}

fn balance_lines(b: &BalanceDiagnostics) -> String {
    let mut s = String::new();
    let inv_gap = if b.max_inv_gap.is_finite() {
        format!("{:.4}", b.max_inv_gap)
    } else {
        "inf".to_string()
    };
    let _ = writeln!(
        s,
        "design balance: n = {}, k = {} (rank {}), sum pi_ii^2 = {:.4}, max pi_ii = {:.4}, max 1/(1-pi_ii) = {}, k/sqrt(n) = {:.3}",
        b.n, b.k, b.rank, b.sum_sq_leverage, b.max_leverage, inv_gap, b.k_ratio
    );
    if b.many_covariates {
        let _ = writeln!(
            s,
            "advisory: k/sqrt(n) = {:.3} >= {K_RATIO_WARNING}; the many-covariates bias can be first order, prefer the corrected estimates",
            b.k_ratio
        );
    }
    if b.overparameterized {
        let _ = writeln!(s, "advisory: more covariates than observations");
    }
    if b.deletion_singular {
        let _ = writeln!(s, "warning: some observation has leverage one; the jackknife is undefined");
    }
    s
}

fn summarize(
    data: &Dataset,
    label: &str,
    report: &InferenceReport,
    balance: &BalanceDiagnostics,
    alpha: f64,
) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "second step: {label}, n = {}", data.n());
    let _ = writeln!(
        s,
        "{:<14} {:>12} {:>12} {:>12} {:>12}",
        "parameter", "estimate", "bias", "corrected", "se"
    );
    for (j, th) in report.theta_hat.iter().enumerate() {
        let b = report.bias_hat[j];
        let _ = writeln!(
            s,
            "{:<14} {:>12.6} {:>12.6} {:>12.6} {:>12.6}",
            format!("theta[{}]", j + 1),
            th,
            b,
            th - b,
            report.var_hat[j][j].max(0.0).sqrt()
        );
    }
    let method = report
        .intervals
        .first()
        .map(|i| i.method.clone())
        .unwrap_or_default();
    let mut header = format!("{:.0}% intervals ({method}", 100.0 * (1.0 - alpha));
    if report.n_draws > 0 {
        let _ = write!(
            header,
            ", B = {}, weights {}, seed {}, failed draws {}",
            report.n_draws,
            report.weights.as_deref().unwrap_or("?"),
            report.seed.unwrap_or_default(),
            report.failures
        );
    }
    let _ = writeln!(s, "{header})");
    for iv in &report.intervals {
        let _ = writeln!(
            s,
            "{:<14} {:>12.6} {:>12.6}   [{:.6}, {:.6}]",
            iv.functional, iv.estimate, iv.corrected, iv.lower, iv.upper
        );
    }
    s.push_str(&balance_lines(balance));
    s
}

/// Parses `start:stop:step` or a comma-separated list.
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let bad = || CliError::Usage(format!("cannot parse grid '{text}'"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
    if let Some((a, rest)) = text.split_once(':') {
        let (b, h) = rest.split_once(':').ok_or_else(bad)?;
        let (a, b, h) = (num(a)?, num(b)?, num(h)?);
        if !(h > 0.0) || !(b >= a) {
            return Err(bad());
        }
        let steps = ((b - a) / h + 1e-9).floor() as usize;
        Ok((0..=steps)
            .map(|i| ((a + i as f64 * h) * 1e10).round() / 1e10)
            .collect())
    } else {
        text.split(',').map(num).collect()
    }
}

pub fn mte_curve(args: &CurveArgs) -> Result<()> {
    let boot = bootstrap_options(&args.inference)?;
    if args.degree == 0 {
        return Err(CliError::Usage("--degree must be at least 1".into()));
    }
    let x_cols = columns(&args.x_cols)?;
    let mut y = vec![args.y_col.clone()];
    y.extend(x_cols.iter().cloned());
    let data = load(&args.data, y)?;
    let grid = match &args.grid {
        Some(g) => parse_grid(g)?,
        None => default_grid(),
    };
    let spec = PolynomialSpec {
        degree: args.degree,
        n_covariates: x_cols.len(),
    };
    let options = MteOptions {
        grid,
        x_eval: None,
        alpha: args.inference.alpha,
        bootstrap: boot,
        clamp: args.clamp,
        gmm: GmmConfig::default(),
    };
    let est = estimate_mte(&data, &spec, &options)?;

    let mut csv = String::from("a,tau_hat,tau_bc,ci_lo,ci_hi\n");
    for p in &est.points {
        let _ = writeln!(
            csv,
            "{},{:.6},{:.6},{:.6},{:.6}",
            p.a, p.tau_hat, p.tau_bc, p.ci_lo, p.ci_hi
        );
    }
    write_file(&args.out, &csv)?;
    if let Some(svg) = &args.svg {
        let method = est
            .report
            .intervals
            .first()
            .map(|i| i.method.as_str())
            .unwrap_or("normal");
        write_file(svg, &render_curve(&est.points, args.inference.alpha, method))?;
    }
    println!(
        "theta_hat = {:?}\nATE over grid: {:.6} (corrected {:.6})\nfitted propensities outside [0, 1]: {}",
        est.theta_hat.iter().map(|v| (v * 1e6).round() / 1e6).collect::<Vec<_>>(),
        est.ate_hat,
        est.ate_bc,
        est.propensity_outside
    );
    print!("{}", balance_lines(&est.balance));
    Ok(())
}

pub fn simulate(args: &SimulateArgs) -> Result<()> {
    let mut spec = match &args.preset {
        Some(p) => SimulationSpec::preset(p)?,
        None => SimulationSpec::default(),
    };
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path).map_err(|e| CliError::Core(Error::Io(e)))?;
        spec = SimulationSpec::parse_config(&text, spec)?;
    }
    for kv in &args.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set expects key=value, got '{kv}'")))?;
        spec.set(k.trim(), v.trim())?;
    }
    let table = run_monte_carlo(&spec)?;
    let text = table.to_text();
    print!("{text}");
    if let Some(p) = &args.out {
        write_file(p, &table.to_csv())?;
    }
    if let Some(p) = &args.text {
        write_file(p, &text)?;
    }
    let flagged = table.rows.iter().filter(|r| r.flagged).count();
    if flagged > 0 {
        return Err(CliError::Flagged(flagged));
    }
    Ok(())
}

pub fn diagnostics(args: &DiagnosticsArgs) -> Result<()> {
    let data = load(&args.data, Vec::new())?;
    let fit = fit_least_squares(&data)?;
    let b = fit.design_balance();
    if args.json {
        println!(
            "{}",
            serde_json::to_string_pretty(&b).expect("diagnostics are serializable")
        );
    } else {
        print!("{}", balance_lines(&b));
    }
    Ok(())
}
