use serde_json::json;
use shelab::gaussian::{covariance_report, eta_from_variances, IncrementScheme};
use shelab::grid::sample_noise;
use shelab::heat_kernel::{lambda_theta, lambda_theta_quadrature, increment_variance_direct, increment_variance_quadrature, IncrementIntegral};
use shelab::holder::{mollify, spatial_sup, temporal_sup, HolderFunction};
use shelab::localization::{beta_sweep, level_sweep};
use shelab::smallball::{
    check_initial_profile, estimate_importance, estimate_plain_many, estimate_splitting, exponent_fit, girsanov_tilt, tail_curve,
    tail_fit, tail_samples, Ensemble, EventSpec, MCEstimate, Method, SplittingConfig, TailBox,
};
use shelab::solver::solve_fd;
use shelab::stats::linear_fit;
use shelab::{KernelConfig64, SigmaSpec64};

use crate::config::{Command, ExperimentConfig};
use crate::error::CliError;
use crate::record::{Cell, ResultRecord, Table};

const KERNEL_TOL: f64 = 1e-8;

pub fn run(config: &ExperimentConfig) -> Result<ResultRecord, CliError> {
    config.validate()?;
    let (table, metadata) = match config.command {
        Command::Simulate => simulate(config)?,
        Command::Smallball => smallball(config)?,
        Command::ExponentFit => fit(config)?,
        Command::TailCurve => tails(config)?,
        Command::Localize => localize(config)?,
        Command::Mollify => mollification(config)?,
        Command::VerifyKernel => verify_kernel()?,
        Command::VerifyCovariance => verify_covariance(config)?,
    };
    Ok(ResultRecord::new(config, table, metadata))
}

type Output = (Table, serde_json::Value);

fn sigma(config: &ExperimentConfig) -> Result<SigmaSpec64, CliError> {
    Ok(config.sigma.build::<f64>()?)
}

fn simulate(config: &ExperimentConfig) -> Result<Output, CliError> {
    let grid = config.grid()?;
    let drift = config.drift.map(|d| d.build::<f64>()).transpose()?;
    let u0 = config.u0.sample(&grid);
    let noise = sample_noise(&grid, 0, config.base_seed);
    let path = solve_fd(&grid, &sigma(config)?, &u0, drift.as_ref(), &noise)?;
    let mut table = Table::new(&["t", "x", "u"]);
    for (i, row) in path.values().rows().into_iter().enumerate() {
        for (j, &u) in row.iter().enumerate() {
            table.push(vec![grid.time(i).into(), grid.space(j).into(), u.into()]);
        }
    }
    let theta = config.event.theta;
    let sp = spatial_sup(path.values(), theta, config.event.metric)?;
    let tm = temporal_sup(path.values(), theta, grid.horizon(), config.event.stride)?;
    Ok((table, json!({ "spatial_sup": sp.value, "temporal_sup": tm.value, "theta": theta })))
}

fn event_specs(config: &ExperimentConfig) -> Result<Vec<EventSpec>, CliError> {
    let ev = &config.event;
    config
        .event
        .epsilons
        .iter()
        .map(|&eps| {
            let mut spec = EventSpec::new(ev.kind, eps, ev.theta)?.with_metric(ev.metric).with_stride(ev.stride);
            if let Some(b) = ev.block_rows {
                spec = spec.with_block_rows(b);
            }
            Ok(spec)
        })
        .collect()
}

fn estimates(config: &ExperimentConfig) -> Result<Vec<(f64, MCEstimate)>, CliError> {
    let grid = config.grid()?;
    let u0 = config.u0.sample(&grid);
    let specs = event_specs(config)?;
    if !config.event.allow_any_u0 {
        for spec in &specs {
            check_initial_profile(spec, &u0)?;
        }
    }
    let sigma = sigma(config)?;
    let eps = config.event.epsilons.iter().copied();
    let ests = match config.method {
        Method::Plain => {
            let ens = Ensemble::new(grid, sigma, u0, config.n, config.base_seed)?;
            estimate_plain_many(&specs, &ens)?
        }
        Method::Splitting => {
            let ens = Ensemble::new(grid, sigma, u0, config.m, config.base_seed)?;
            let cfg = SplittingConfig { m: config.m, replications: config.replications };
            specs.iter().map(|s| Ok(estimate_splitting(s, &ens, &cfg)?.estimate)).collect::<Result<_, CliError>>()?
        }
        Method::Importance => {
            let t1 = config.t1.unwrap_or(grid.horizon());
            let tilt = girsanov_tilt(&grid, &u0, t1, &sigma)?;
            let ens = Ensemble::new(grid, sigma, u0, config.n, config.base_seed)?;
            specs.iter().map(|s| Ok(estimate_importance(s, &tilt, &ens)?)).collect::<Result<_, CliError>>()?
        }
    };
    Ok(eps.zip(ests).collect())
}

fn method_name(m: Method) -> &'static str {
    match m {
        Method::Plain => "plain",
        Method::Splitting => "splitting",
        Method::Importance => "importance",
    }
}

fn smallball(config: &ExperimentConfig) -> Result<Output, CliError> {
    let mut table =
        Table::new(&["epsilon", "p_hat", "stderr", "ci_lo", "ci_hi", "n", "method", "ess", "low_confidence"]);
    for (eps, e) in estimates(config)? {
        table.push(vec![
            eps.into(),
            e.p_hat.into(),
            e.stderr.into(),
            e.ci95.0.into(),
            e.ci95.1.into(),
            e.n.into(),
            method_name(e.method).into(),
            e.ess.map_or(Cell::Text(String::new()), Cell::Num),
            e.low_confidence.into(),
        ]);
    }
    Ok((table, json!({ "kind": config.event.kind, "theta": config.event.theta })))
}

fn fit(config: &ExperimentConfig) -> Result<Output, CliError> {
    let rows: Vec<(f64, f64, f64)> = estimates(config)?.into_iter().map(|(eps, e)| (eps, e.p_hat, e.stderr)).collect();
    let f = exponent_fit(&rows)?;
    let mut table = Table::new(&["epsilon", "p_hat", "stderr", "log_epsilon", "log_neg_log_p", "used"]);
    for r in &f.rows {
        let y = if r.p_hat > 0.0 && r.p_hat < 1.0 { (-r.p_hat.ln()).ln() } else { f64::NAN };
        table.push(vec![r.epsilon.into(), r.p_hat.into(), r.stderr.into(), r.epsilon.ln().into(), y.into(), r.used.into()]);
    }
    let meta = json!({
        "slope": f.slope,
        "intercept": f.intercept,
        "r2": f.r2,
        "slope_stderr": f.slope_stderr,
        "kind": config.event.kind,
        "theta": config.event.theta,
    });
    Ok((table, meta))
}

fn tails(config: &ExperimentConfig) -> Result<Output, CliError> {
    let t = &config.tail;
    let bx = TailBox {
        epsilon: t.epsilon,
        theta: config.event.theta,
        alpha: t.alpha,
        a: t.a,
        n_x: config.grid.n_x,
        n_t: config.grid.n_t,
    };
    let mut xs = tail_samples(t.statistic, &bx, &sigma(config)?, config.n, config.base_seed)?;
    xs.sort_by(f64::total_cmp);
    let lambdas = t.lambdas.clone().unwrap_or_else(|| {
        let (lo, hi) = (xs[xs.len() / 2], xs[xs.len() - 1]);
        (0..=20).map(|k| lo + (hi - lo) * k as f64 / 20.0).collect()
    });
    let rows = tail_curve(&xs, &lambdas);
    let mut table = Table::new(&["lambda", "p_hat", "stderr", "ci_lo", "ci_hi"]);
    for r in &rows {
        table.push(vec![r.lambda.into(), r.p_hat.into(), r.stderr.into(), r.ci_lo.into(), r.ci_hi.into()]);
    }
    let fit = tail_fit(&rows, 20.0 / config.n as f64, 0.5).ok();
    let meta = json!({
        "statistic": t.statistic,
        "fit": fit.map(|f| json!({ "slope": f.slope, "intercept": f.intercept, "r2": f.r2 })),
    });
    Ok((table, meta))
}

fn localize(config: &ExperimentConfig) -> Result<Output, CliError> {
    let grid = config.grid()?;
    let u0 = config.u0.sample(&grid);
    let sigma = sigma(config)?;
    let l = &config.localize;
    let mut table = Table::new(&["sweep", "parameter", "moment", "stderr"]);
    for b in beta_sweep(&grid, &sigma, &u0, &l.betas, l.level, l.p, config.n, config.base_seed)? {
        table.push(vec!["beta".into(), b.beta.into(), b.moment.into(), b.stderr.into()]);
    }
    for e in level_sweep(&grid, &sigma, &u0, l.level_beta, l.max_level, l.p, config.n, config.base_seed)? {
        table.push(vec!["level".into(), (e.level as f64).into(), e.moment.into(), e.stderr.into()]);
    }
    Ok((table, json!({ "level": l.level, "level_beta": l.level_beta, "p": l.p })))
}

fn mollification(config: &ExperimentConfig) -> Result<Output, CliError> {
    let grid = config.grid()?;
    let m = &config.mollify;
    let (beta, gamma) = (m.beta, m.gamma);
    let f = HolderFunction::from_fn(grid, gamma, beta, move |t, x| {
        (std::f64::consts::PI * x).sin().abs().powf(beta) * (1.0 + t.powf(gamma))
    })?;
    let mut table = Table::new(&["n", "sup_error"]);
    let (mut logn, mut loge) = (Vec::new(), Vec::new());
    for &k in &m.ns {
        let err = (&mollify(&f, k)? - f.values()).iter().fold(0.0f64, |a, v| a.max(v.abs()));
        table.push(vec![k.into(), err.into()]);
        logn.push((k as f64).ln());
        loge.push(err.ln());
    }
    let slope = linear_fit(&logn, &loge).ok().map(|f| f.slope);
    Ok((table, json!({ "beta": beta, "gamma": gamma, "norm": f.sampled_norm(), "slope": slope })))
}

fn verify_kernel() -> Result<Output, CliError> {
    let cfg = KernelConfig64::default();
    let mut table = Table::new(&["check", "parameter", "reference", "computed", "abs_error"]);
    let mut worst = 0.0f64;
    for i in 1..=10 {
        let th = 0.05 * i as f64;
        let (a, b) = (lambda_theta(th)?, lambda_theta_quadrature(th, &cfg)?);
        worst = worst.max((a - b).abs());
        table.push(vec!["lambda_theta".into(), th.into(), a.into(), b.into(), (a - b).abs().into()]);
    }
    for &(t1, delta) in &[(1e-3, 0.05), (1e-2, 0.1), (0.1, 0.25)] {
        let kind = IncrementIntegral::SpatialShift { t1, delta };
        let (a, b) = (increment_variance_direct(kind, &cfg)?, increment_variance_quadrature(kind, &cfg)?);
        worst = worst.max((a - b).abs());
        table.push(vec!["spatial_shift".into(), delta.into(), a.into(), b.into(), (a - b).abs().into()]);
    }
    if worst > KERNEL_TOL {
        return Err(CliError::ChecksFailed(format!("kernel checks off by {worst:e} (tolerance {KERNEL_TOL:e})")));
    }
    Ok((table, json!({ "max_abs_error": worst, "tolerance": KERNEL_TOL })))
}

fn verify_covariance(config: &ExperimentConfig) -> Result<Output, CliError> {
    let c = &config.covariance;
    let scheme = IncrementScheme::new(c.epsilon, c.theta, c.c0, c.c1)?;
    let report = covariance_report(&scheme, &sigma(config)?, &KernelConfig64::default())?;
    let mut table = Table::new(&["j", "x", "sd", "conditional_variance"]);
    for (j, (sd, cv)) in report.d.iter().zip(&report.conditional_variances).enumerate() {
        table.push(vec![j.into(), scheme.point(j).into(), (*sd).into(), (*cv).into()]);
    }
    let eta = eta_from_variances(&scheme, &report.conditional_variances).ok();
    let meta = json!({
        "j": report.j,
        "delta": report.delta,
        "t1": report.t1,
        "a_norm_11": report.a_norm_11,
        "s_inv_norm_11": report.s_inv_norm_11,
        "s_inv_neumann_bound": report.s_inv_neumann_bound,
        "eta": eta,
        "singular": report.singular,
    });
    if report.singular {
        return Err(CliError::ChecksFailed("increment covariance matrix is singular".into()));
    }
    Ok((table, meta))
}
