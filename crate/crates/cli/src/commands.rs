//! Subcommand implementations. Each returns a table plus the named checks
//! it evaluated; the caller turns failed checks into exit code 1.

use constrained_growth::constraints::ConstraintSetQuery;
use constrained_growth::market::{z_quadrature, z_time_average};
use constrained_growth::numerics::norm_quantile;
use constrained_growth::projection::{d_sigma, delta, delta_star, merton_proportion, oracle_project, project_merton};
use constrained_growth::risk::{mc_oracle, measure, relative_measure, unclamped_measure};
use constrained_growth::simulate::{
    beta_coalescence_report, dominance_sweep, finite_horizon_log_check, growth_target, naive_growth_constant, run,
    summarize_growth, supermartingale_check, RunSpec, StoppingRule,
};
use constrained_growth::verification::{random_market, Check, VerifyOptions, NUMERIC_CRITERIA, TITLES};
use constrained_growth::{rng, PortfolioStats, RiskMeasure, StrategyRule};
use rand::Rng;

use crate::config::{ConfigError, Experiment, ExperimentConfig, Format};
use crate::output::{Cell, Provenance, Table};

#[derive(Debug, thiserror::Error)]
pub enum CommandError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error("run failed: {0}")]
    Run(#[from] constrained_growth::Error),
}

pub struct Report {
    pub table: Table,
    pub checks: Vec<Check>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn wants(exp: &Experiment, check: &str) -> bool {
    exp.config.checks.iter().any(|c| c == check)
}

const RISK_COLUMNS: &[&str] = &[
    "measure",
    "x",
    "zeta_mu",
    "zeta_sigma",
    "closed_form",
    "relative",
    "unclamped",
    "mc_oracle",
    "mc_se",
    "z_score",
    "units",
];

pub fn cmd_risk(exp: &Experiment) -> Result<Report, CommandError> {
    let grid = &exp.config.risk;
    let mut table = Table::new(RISK_COLUMNS);
    let mut worst_z = 0.0f64;
    for &m in &grid.measures {
        let kind: RiskMeasure = m.into();
        for &x in &grid.wealths {
            for &zm in &grid.zeta_mu {
                for &zs in &grid.zeta_sigma {
                    let stats = PortfolioStats::new(zm, zs)?;
                    let closed = measure(kind, x, stats, &exp.params)?;
                    let unclamped = unclamped_measure(kind, x, stats, &exp.params);
                    let (oracle, se, z) = if grid.oracle_samples == 0 {
                        (None, None, None)
                    } else {
                        let o = mc_oracle(kind, x, stats, &exp.params, exp.config.seed, grid.oracle_samples)?;
                        // zero volatility makes the loss deterministic; the
                        // error is then rounding, measured against wealth
                        let z = (unclamped - o.estimate).abs() / o.standard_error.max(1e-12 * x);
                        worst_z = worst_z.max(z);
                        (Some(o.estimate), Some(o.standard_error), Some(z))
                    };
                    table.push(vec![
                        kind.name().into(),
                        x.into(),
                        zm.into(),
                        zs.into(),
                        closed.into(),
                        relative_measure(kind, stats, &exp.params).into(),
                        unclamped.into(),
                        oracle.into(),
                        se.into(),
                        z.into(),
                        "wealth".into(),
                    ]);
                }
            }
        }
    }
    let mut checks = Vec::new();
    if wants(exp, "risk_oracle") {
        if grid.oracle_samples == 0 {
            return Err(ConfigError("checks: risk_oracle needs risk.oracle_samples > 0".into()).into());
        }
        checks.push(Check::at_most("risk_oracle: max |closed - oracle| / se", worst_z, 4.0));
    }
    Ok(Report { table, checks })
}

const DELTA_COLUMNS: &[&str] = &["lambda", "wealth", "beta", "reference", "nonincreasing", "units"];

/// Root of `g(beta) = 0` from the VaR quadratic, or the LEL inversion.
fn delta_reference(exp: &Experiment, lambda: f64) -> Result<Option<f64>, CommandError> {
    let p = &exp.params;
    let (t, r) = (p.tau(), p.r());
    let root = match exp.pair.measure() {
        Some(RiskMeasure::VaR) => {
            let qa = 0.5 * t * lambda * lambda;
            let qb = -t * lambda * lambda - p.z_alpha() * t.sqrt() * lambda;
            let qc = -r * t;
            (-qb + (qb * qb - 4.0 * qa * qc).sqrt()) / (2.0 * qa)
        }
        Some(RiskMeasure::LEL) => {
            let u = norm_quantile(p.alpha())? - norm_quantile(p.alpha() * (-r * t).exp())?;
            u / (lambda * t.sqrt())
        }
        _ => return Ok(None),
    };
    Ok(Some(root.min(1.0)))
}

pub fn cmd_delta(exp: &Experiment) -> Result<Report, CommandError> {
    let grid = &exp.config.delta;
    let mut table = Table::new(DELTA_COLUMNS);
    let columns = grid.wealths.len() + 1;
    let mut previous: Vec<Option<f64>> = vec![None; columns];
    let mut violations = vec![0usize; columns];
    let mut worst_ref = 0.0f64;
    for lambda in grid.lambdas() {
        let mut push = |col: usize, wealth: f64, beta: f64, reference: Option<f64>, table: &mut Table| {
            let ok = previous[col].is_none_or(|p| beta <= p + 1e-12);
            if !ok {
                violations[col] += 1;
            }
            previous[col] = Some(beta);
            table.push(vec![
                lambda.into(),
                wealth.into(),
                beta.into(),
                reference.into(),
                ok.into(),
                "fraction_of_merton".into(),
            ]);
        };
        let d = delta(&exp.pair, lambda)?;
        let reference = delta_reference(exp, lambda)?;
        if let Some(r) = reference {
            worst_ref = worst_ref.max((d - r).abs());
        }
        push(0, f64::INFINITY, d, reference, &mut table);
        for (i, &x) in grid.wealths.iter().enumerate() {
            push(i + 1, x, delta_star(&exp.pair, lambda, x)?, None, &mut table);
        }
    }
    let mut checks = Vec::new();
    if wants(exp, "delta_reference") {
        if exp.pair.measure() == Some(RiskMeasure::TVaR) {
            return Err(ConfigError("checks: delta_reference has no closed form for tvar".into()).into());
        }
        checks.push(Check::at_most("delta_reference: max |delta - closed form|", worst_ref, 1e-10));
    }
    if wants(exp, "delta_monotone") {
        checks.push(Check::at_most("delta_monotone: increases in delta(lambda)", violations[0] as f64, 0.0));
        for (i, &x) in grid.wealths.iter().enumerate() {
            checks.push(Check::at_most(
                format!("delta_monotone: increases in delta*(lambda, {x})"),
                violations[i + 1] as f64,
                0.0,
            ));
        }
    }
    Ok(Report { table, checks })
}

const PROJECT_COLUMNS: &[&str] = &[
    "instance",
    "assets",
    "factors",
    "wealth",
    "binding",
    "beta",
    "distance_projection",
    "distance_oracle",
    "distance_excess",
    "sin_angle",
    "units",
];

const PROJECT_STREAM: u64 = 0x50524f4a;

pub fn cmd_project(exp: &Experiment) -> Result<Report, CommandError> {
    let cfg = &exp.config.project;
    let mut table = Table::new(PROJECT_COLUMNS);
    let (mut worst_sin, mut worst_excess) = (0.0f64, 0.0f64);
    for i in 0..cfg.instances {
        let mut rng = rng::stream(exp.config.seed, &[PROJECT_STREAM, i as u64]);
        let n = 1 + i % cfg.max_assets;
        let m = rng.random_range(n..=cfg.max_factors);
        let (mu, sigma) = random_market(&mut rng, n, m);
        let wealth = if cfg.wealth_max > cfg.wealth_min {
            rng.random_range(cfg.wealth_min..cfg.wealth_max)
        } else {
            cfg.wealth_min
        };
        let query = ConstraintSetQuery::new(mu, sigma, wealth)?;
        if !exp.pair.h_eval(wealth)?.is_finite() {
            return Err(ConfigError(format!("project: h(x) is infinite at wealth {wealth}; raise project.wealth_min")).into());
        }
        let merton = merton_proportion(&query.mu, &query.sigma)?;
        let proj = project_merton(&exp.pair, &query)?;
        let oracle = oracle_project(&exp.pair, &query, rng.random())?;
        let d_proj = d_sigma(&proj.zeta_proj, &merton.zeta_m, &query.sigma)?;
        let d_oracle = d_sigma(&oracle, &merton.zeta_m, &query.sigma)?;
        let norms = oracle.norm() * merton.zeta_m.norm();
        let sin = if norms > 0.0 {
            let cos = oracle.dot(&merton.zeta_m) / norms;
            (1.0 - cos * cos).max(0.0).sqrt()
        } else {
            0.0
        };
        worst_sin = worst_sin.max(sin);
        worst_excess = worst_excess.max(d_oracle - d_proj);
        table.push(vec![
            i.into(),
            n.into(),
            m.into(),
            wealth.into(),
            proj.binding.into(),
            proj.beta.into(),
            d_proj.into(),
            d_oracle.into(),
            (d_oracle - d_proj).into(),
            sin.into(),
            "d_sigma".into(),
        ]);
    }
    let mut checks = Vec::new();
    if wants(exp, "projection_oracle") {
        checks.push(Check::at_most("projection_oracle: max |sin angle|", worst_sin, 1e-5));
        checks.push(Check::at_most("projection_oracle: max distance excess", worst_excess, 1e-6));
    }
    Ok(Report { table, checks })
}

const SIMULATE_COLUMNS: &[&str] = &["row_kind", "label", "value", "se", "reference", "bound", "passed", "units"];

fn check_row(table: &mut Table, check: &Check) {
    table.push(vec![
        "check".into(),
        check.name.clone().into(),
        check.value.into(),
        Cell::Empty,
        Cell::Empty,
        check.bound.into(),
        check.passed.into(),
        "statistic".into(),
    ]);
}

fn z_ratio(diff: f64, se: f64) -> f64 {
    if se > 0.0 {
        diff.abs() / se
    } else if diff == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

pub fn cmd_simulate(exp: &Experiment) -> Result<Report, CommandError> {
    let (model, pair, sim) = (&exp.model, &exp.pair, &exp.sim);
    let burn_in = exp.config.sim.burn_in;
    let nodes = exp.config.sim.quadrature_nodes;
    let mut table = Table::new(SIMULATE_COLUMNS);
    let mut checks = Vec::new();

    let results = run(&RunSpec::new(model, pair, &exp.rules, sim))?;
    let summaries = summarize_growth(&results, burn_in)?;
    for (rule, s) in exp.rules.iter().zip(&summaries) {
        let target = growth_target(model, pair, rule, nodes)?;
        let naive = naive_growth_constant(model, pair, rule, nodes)?;
        table.push(vec![
            "growth".into(),
            s.strategy_tag.clone().into(),
            s.mean.into(),
            s.se.into(),
            target.into(),
            Cell::Empty,
            Cell::Empty,
            "1/time".into(),
        ]);
        if let Some(p) = naive {
            table.push(vec![
                "naive_constant".into(),
                s.strategy_tag.clone().into(),
                p.into(),
                Cell::Empty,
                Cell::Empty,
                Cell::Empty,
                Cell::Empty,
                "1/time".into(),
            ]);
        }
        if wants(exp, "growth_target") {
            if let Some(t) = target {
                checks.push(Check::at_most(
                    format!("growth_target: {} |growth - target| / se", s.strategy_tag),
                    z_ratio(s.mean - t, s.se),
                    3.0,
                ));
            }
        }
        if wants(exp, "naive_constant") {
            if let Some(p) = naive {
                checks.push(Check::at_most(
                    format!("naive_constant: {} |growth - naive| / se", s.strategy_tag),
                    z_ratio(s.mean - p, s.se),
                    3.0,
                ));
            }
        }
    }

    if wants(exp, "ergodic") {
        let phi = |l: f64| l * l * delta(pair, l).unwrap_or(f64::NAN);
        let quad = z_quadrature(model, phi, nodes)?;
        let avg = z_time_average(model, phi, sim.horizon, sim.dt, exp.config.seed)?;
        for (label, v) in [("ergodic_quadrature", &quad), ("ergodic_time_average", &avg)] {
            table.push(vec![
                label.into(),
                "lambda^2 delta(lambda)".into(),
                v.value.into(),
                v.error_estimate.into(),
                Cell::Empty,
                Cell::Empty,
                Cell::Empty,
                "1/time".into(),
            ]);
        }
        let scale = quad.value.abs().max(f64::MIN_POSITIVE);
        checks.push(Check::at_most(
            "ergodic: relative gap between time average and quadrature",
            (avg.value - quad.value).abs() / scale,
            0.02,
        ));
    }

    if wants(exp, "coalescence") {
        let rep = beta_coalescence_report(model, pair, sim, 0.01)?;
        checks.push(Check::at_least(
            "coalescence: fraction of paths with late beta gap < 0.01",
            rep.fraction_below,
            0.99,
        ));
    }

    let others: Vec<StrategyRule> = exp
        .rules
        .iter()
        .filter(|r| !matches!(r, StrategyRule::RelativeProjected))
        .cloned()
        .collect();
    if (wants(exp, "supermartingale") || wants(exp, "log_dominance")) && others.is_empty() {
        return Err(ConfigError("strategies: relative checks need a strategy besides relative_projected".into()).into());
    }
    if wants(exp, "supermartingale") {
        for rep in supermartingale_check(model, pair, &others, sim)? {
            let value = if rep.se > 0.0 {
                (rep.estimate - 1.0) / rep.se
            } else {
                rep.estimate - 1.0
            };
            checks.push(Check::at_most(
                format!("supermartingale: {} (E[ratio] - 1) / se", rep.strategy_tag),
                value,
                3.0,
            ));
        }
    }
    if wants(exp, "log_dominance") {
        for rule in &others {
            for stop in [
                StoppingRule::Fixed(0.5 * sim.horizon),
                StoppingRule::FirstHitting { multiple: 1.05 },
            ] {
                let rep = finite_horizon_log_check(model, pair, rule, stop, sim)?;
                let label = match stop {
                    StoppingRule::Fixed(_) => "fixed time",
                    StoppingRule::FirstHitting { .. } => "capped hitting time",
                };
                let value = if rep.se > 0.0 { rep.estimate / rep.se } else { rep.estimate.signum() };
                checks.push(Check::at_least(
                    format!("log_dominance: {} at {label}, E[log difference] / se", rep.strategy_tag),
                    value,
                    -3.0,
                ));
            }
        }
    }

    if wants(exp, "dominance") {
        let challengers: Vec<StrategyRule> = exp
            .rules
            .iter()
            .filter(|r| !matches!(r, StrategyRule::ProjectedLimiting))
            .cloned()
            .collect();
        let rep = dominance_sweep(model, pair, &challengers, sim, burn_in)?;
        for row in &rep.rows {
            checks.push(Check::at_most(
                format!("dominance: {} excess / combined sigma", row.strategy_tag),
                row.excess / row.combined_sigma,
                3.0,
            ));
        }
    }

    for c in &checks {
        check_row(&mut table, c);
    }
    Ok(Report { table, checks })
}

const VERIFY_COLUMNS: &[&str] = &["criterion", "title", "check", "value", "bound", "passed"];

/// Renders a small simulation twice and compares bytes, and confirms a
/// malformed config is rejected as a config error.
pub fn determinism_self_check(seed: u64) -> Vec<Check> {
    let render = || -> Option<Vec<u8>> {
        let mut cfg = ExperimentConfig {
            seed,
            ..Default::default()
        };
        cfg.sim.horizon = 20.0;
        cfg.sim.paths = 8;
        cfg.checks = vec!["growth_target".into()];
        let hash = cfg.hash();
        let exp = cfg.build().ok()?;
        let report = cmd_simulate(&exp).ok()?;
        let prov = Provenance {
            command: "simulate",
            seed,
            config_hash: hash,
        };
        Some(report.table.render(Format::Csv, &prov))
    };
    let (a, b) = (render(), render());
    let identical = a.is_some() && a == b;
    let rejected = ExperimentConfig::from_toml("[sim]\ndt = \"fast\"\n").is_err();
    vec![
        Check::at_least("repeated run is byte-identical", f64::from(u8::from(identical)), 1.0),
        Check::at_least("malformed config is rejected", f64::from(u8::from(rejected)), 1.0),
    ]
}

pub fn cmd_verify(exp: &Experiment, quick: bool, progress: bool) -> Result<Report, CommandError> {
    let opts = VerifyOptions {
        seed: exp.config.seed,
        quick,
    };
    let mut table = Table::new(VERIFY_COLUMNS);
    let mut checks = Vec::new();
    let mut emit = |id: usize, list: Vec<Check>, table: &mut Table| {
        let passed = list.iter().all(|c| c.passed);
        if progress {
            eprintln!("criterion {id:>2} {}: {}", if passed { "PASS" } else { "FAIL" }, TITLES[id - 1]);
        }
        for c in list {
            table.push(vec![
                id.into(),
                TITLES[id - 1].into(),
                c.name.clone().into(),
                c.value.into(),
                c.bound.into(),
                c.passed.into(),
            ]);
            checks.push(c);
        }
    };
    for (i, criterion) in NUMERIC_CRITERIA.iter().enumerate() {
        let outcome = criterion(&opts)?;
        emit(i + 1, outcome.checks, &mut table);
    }
    emit(10, determinism_self_check(exp.config.seed), &mut table);
    Ok(Report { table, checks })
}
