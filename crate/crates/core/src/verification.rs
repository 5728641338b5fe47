//! End-to-end verification suite.
//!
//! Each criterion runs a self-contained numerical experiment and returns the
//! measured statistics next to their bounds. The CLI `verify` subcommand and
//! the acceptance test target both call into this module.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;

use crate::constraints::{ConstraintPair, ConstraintSetQuery, Limit};
use crate::error::Result;
use crate::market::{ou_variance_estimate, z_quadrature, z_time_average, MarketModel, OuStochVol, VolMap};
use crate::numerics::norm_quantile;
use crate::projection::{beta_of, d_sigma, delta, limiting_beta, merton_proportion, oracle_project, project_merton};
use crate::risk::{mc_oracle, unclamped_measure, PortfolioStats, RiskMeasure, RiskParams};
use crate::rng;
use crate::simulate::{
    beta_coalescence_report, dominance_sweep, finite_horizon_log_check, growth_target, naive_growth_constant, run,
    summarize_growth, supermartingale_check, CustomRule, Position, RunSpec, SimConfig, StoppingRule, StrategyInput,
    StrategyRule,
};

/// One measured quantity against its bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub passed: bool,
}

impl Check {
    /// Passes when `value <= bound`.
    pub fn at_most(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            value,
            bound,
            passed: value <= bound,
        }
    }

    /// Passes when `value >= bound`.
    pub fn at_least(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            value,
            bound,
            passed: value >= bound,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionOutcome {
    pub id: u32,
    pub title: &'static str,
    pub checks: Vec<Check>,
}

impl CriterionOutcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// The first failing check, or the first check when all pass.
    pub fn worst(&self) -> Option<&Check> {
        self.checks
            .iter()
            .find(|c| !c.passed)
            .or_else(|| self.checks.first())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Divides Monte Carlo sample sizes and horizons for a fast smoke run;
    /// bounds scale with the statistics, so a quick run is still meaningful.
    pub quick: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { seed: 20240917, quick: false }
    }
}

impl VerifyOptions {
    fn size(&self, full: usize, quick: usize) -> usize {
        if self.quick {
            quick
        } else {
            full
        }
    }

    fn span(&self, full: f64, quick: f64) -> f64 {
        if self.quick {
            quick
        } else {
            full
        }
    }
}

/// Fraction of the horizon dropped before estimating long-run growth, so the
/// start-up phase at moderate wealth does not bias the comparison.
const BURN_IN: f64 = 0.2;

fn risk_params() -> RiskParams {
    RiskParams::new(0.05, 10.0 / 252.0, 0.03).expect("valid parameters")
}

fn constant_market() -> MarketModel {
    MarketModel::constant(0.03, 0.05, 0.2).expect("valid market")
}

fn relative_var(limit: f64) -> ConstraintPair {
    ConstraintPair::new(RiskMeasure::VaR, Limit::Relative { limit }, risk_params()).expect("valid pair")
}

fn absolute_var(limit: f64) -> ConstraintPair {
    ConstraintPair::new(RiskMeasure::VaR, Limit::Absolute { limit }, risk_params()).expect("valid pair")
}

pub const TITLES: [&str; 10] = [
    "risk formulas against Monte Carlo oracles",
    "projection collinearity against the brute-force oracle",
    "delta closed-form cross-checks",
    "constant-market unconstrained growth",
    "constrained growth and the naive growth constant",
    "absolute vs limiting projection",
    "OU ergodic averages",
    "relative-case optimality",
    "dominance sweep",
    "determinism and exit codes",
];

fn outcome(id: u32, checks: Vec<Check>) -> CriterionOutcome {
    CriterionOutcome {
        id,
        title: TITLES[id as usize - 1],
        checks,
    }
}

/// Closed-form measures against percentile and tail-mean oracles on 20
/// random parameter sets, within 4 standard errors.
pub fn criterion_1(opts: &VerifyOptions) -> Result<CriterionOutcome> {
    let n = opts.size(10_000_000, 200_000);
    let mut rng = rng::stream(opts.seed, &[1]);
    let mut checks = Vec::new();
    for set in 0..20 {
        let alpha = rng.random_range(0.005..0.5);
        let tau = rng.random_range(10.0 / 252.0..=1.0);
        let r = rng.random_range(0.001..=0.1);
        let params = RiskParams::new(alpha, tau, r)?;
        let x = rng.random_range(1.0..1000.0);
        let stats = PortfolioStats::new(rng.random_range(-0.5..1.0), rng.random_range(0.01..1.5))?;
        for kind in RiskMeasure::ALL {
            let closed = unclamped_measure(kind, x, stats, &params);
            let oracle = mc_oracle(kind, x, stats, &params, opts.seed, n)?;
            checks.push(Check::at_most(
                format!("set {set} {}: |closed - oracle| / se", kind.name()),
                (closed - oracle.estimate).abs() / oracle.standard_error,
                4.0,
            ));
        }
    }
    Ok(outcome(1, checks))
}

/// Random `(mu, sigma)` with `n` assets and `m` factors and a solvable Merton system.
pub fn random_market(rng: &mut impl Rng, n: usize, m: usize) -> (DVector<f64>, DMatrix<f64>) {
    loop {
        let mu = DVector::from_fn(n, |_, _| rng.random_range(-0.2..0.4));
        let sigma = DMatrix::from_fn(n, m, |_, _| rng.random_range(-0.5..0.5));
        if merton_proportion(&mu, &sigma).is_ok() {
            return (mu, sigma);
        }
    }
}

/// Largest collinearity and distance deviations of the oracle over 100
/// random binding instances.
pub fn criterion_2(opts: &VerifyOptions) -> Result<CriterionOutcome> {
    let instances = opts.size(100, 20);
    let mut rng = rng::stream(opts.seed, &[2]);
    let (mut worst_sin, mut worst_excess) = (0.0f64, 0.0f64);
    let mut found = 0;
    let mut trial = 0u64;
    while found < instances {
        trial += 1;
        let kind = RiskMeasure::ALL[(trial % 3) as usize];
        let n = rng.random_range(1..=3usize);
        let m = rng.random_range(n..=4usize);
        let limit = if trial.is_multiple_of(2) {
            Limit::Absolute { limit: rng.random_range(0.2..2.0) }
        } else {
            Limit::Relative { limit: rng.random_range(0.005..0.1) }
        };
        let pair = ConstraintPair::new(kind, limit, risk_params())?;
        let (mu, sigma) = random_market(&mut rng, n, m);
        let query = ConstraintSetQuery::new(mu, sigma, rng.random_range(2.5..40.0))?;
        let proj = project_merton(&pair, &query)?;
        if !proj.binding {
            continue;
        }
        found += 1;
        let merton = merton_proportion(&query.mu, &query.sigma)?;
        let oracle = oracle_project(&pair, &query, opts.seed ^ trial)?;
        let d_oracle = d_sigma(&oracle, &merton.zeta_m, &query.sigma)?;
        let d_proj = d_sigma(&proj.zeta_proj, &merton.zeta_m, &query.sigma)?;
        let cos = oracle.dot(&merton.zeta_m) / (oracle.norm() * merton.zeta_m.norm());
        worst_sin = worst_sin.max((1.0 - cos * cos).max(0.0).sqrt());
        worst_excess = worst_excess.max(d_oracle - d_proj);
    }
    Ok(outcome(
        2,
        vec![
            Check::at_most("max |sin angle(oracle, zeta_M)|", worst_sin, 1e-5),
            Check::at_most("max oracle distance minus projection distance", worst_excess, 1e-6),
        ],
    ))
}

/// Root finders against the VaR quadratic and the LEL inversion on a
/// lambda grid over [0.05, 3].
pub fn criterion_3(_opts: &VerifyOptions) -> Result<CriterionOutcome> {
    let p = risk_params();
    let (t, z, r) = (p.tau(), p.z_alpha(), p.r());
    let var = relative_var(0.01);
    let a = 0.01;
    let lel = ConstraintPair::new(RiskMeasure::LEL, Limit::Relative { limit: a }, p)?;
    let u = norm_quantile(p.alpha())? - norm_quantile(p.alpha() * (1.0 - a) * (-r * t).exp())?;
    let (mut var_err, mut lel_err) = (0.0f64, 0.0f64);
    for k in 0..=59 {
        let lambda = 0.05 + 0.05 * k as f64;
        let (qa, qb, qc) = (0.5 * t * lambda * lambda, -t * lambda * lambda - z * t.sqrt() * lambda, -r * t);
        let root = (-qb + (qb * qb - 4.0 * qa * qc).sqrt()) / (2.0 * qa);
        var_err = var_err.max((delta(&var, lambda)? - root.min(1.0)).abs());
        let closed = (u / (lambda * t.sqrt())).min(1.0);
        lel_err = lel_err.max((beta_of(&lel, lambda, lel.h_limit())? - closed).abs());
    }
    Ok(outcome(
        3,
        vec![
            Check::at_most("VaR delta vs quadratic root", var_err, 1e-10),
            Check::at_most("LEL beta vs closed-form inversion", lel_err, 1e-10),
        ],
    ))
}

/// Merton growth `r + lambda^2 / 2` in the constant market.
pub fn criterion_4(opts: &VerifyOptions) -> Result<CriterionOutcome> {
    let horizon = opts.span(4000.0, 400.0);
    let cfg = SimConfig {
        horizon,
        dt: 0.01,
        paths: opts.size(100, 20),
        seed: opts.seed ^ 4,
        x0_wealth: 1.0,
        record_stride: 10_000,
        noise_substeps: 1,
    };
    let model = constant_market();
    let rules = [StrategyRule::MertonUnconstrained];
    let pair = relative_var(0.01);
    let results = run(&RunSpec::new(&model, &pair, &rules, &cfg))?;
    let g = summarize_growth(&results, 0.0)?.remove(0);
    let target = 0.03 + 0.5 * 0.0625;
    let single = results[0][0].growth_estimate;
    let band = 3.0 * 0.25 / horizon.sqrt();
    Ok(outcome(
        4,
        vec![
            Check::at_most("|mean growth - (r + lambda^2/2)|", (g.mean - target).abs(), band),
            Check::at_most("|single-path growth - (r + lambda^2/2)|", (single - target).abs(), band),
        ],
    ))
}

/// Relative-VaR growth against `r + (d - d^2/2) lambda^2` and against the
/// constant without the quadratic-variation term.
pub fn criterion_5(opts: &VerifyOptions) -> Result<CriterionOutcome> {
    let cfg = SimConfig {
        horizon: opts.span(4000.0, 1000.0),
        dt: 0.01,
        paths: opts.size(100, 160),
        seed: opts.seed ^ 5,
        x0_wealth: 1.0,
        record_stride: 10_000,
        noise_substeps: 1,
    };
    let model = constant_market();
    let pair = relative_var(0.01);
    let rule = StrategyRule::RelativeProjected;
    let results = run(&RunSpec::new(&model, &pair, std::slice::from_ref(&rule), &cfg))?;
    let g = summarize_growth(&results, 0.0)?.remove(0);
    let target = growth_target(&model, &pair, &rule, 50)?.expect("built-in rule");
    let naive = naive_growth_constant(&model, &pair, &rule, 50)?.expect("built-in rule");
    let d = limiting_beta(&pair, 0.25)?;
    let correction = 0.5 * d * d * 0.0625;
    Ok(outcome(
        5,
        vec![
            Check::at_most("|growth - corrected target| / se", (g.mean - target).abs() / g.se, 3.0),
            Check::at_most(
                "|(naive - growth) - d^2 lambda^2 / 2| / se",
                ((naive - g.mean) - correction).abs() / g.se,
                3.0,
            ),
            Check::at_least("|growth - naive constant| / se", (g.mean - naive).abs() / g.se, 3.0),
        ],
    ))
}

/// Absolute VaR: current-wealth and limiting projections grow alike, and
/// `beta(t, X)` merges with its limit late in the horizon.
pub fn criterion_6(opts: &VerifyOptions) -> Result<CriterionOutcome> {
    let model = constant_market();
    let pair = absolute_var(0.01);
    let cfg = SimConfig {
        horizon: opts.span(2000.0, 500.0),
        dt: 0.01,
        paths: opts.size(20, 16),
        seed: opts.seed ^ 6,
        x0_wealth: 1.0,
        record_stride: 10_000,
        noise_substeps: 1,
    };
    let rules = [StrategyRule::ProjectedCurrent, StrategyRule::ProjectedLimiting];
    let g = summarize_growth(&run(&RunSpec::new(&model, &pair, &rules, &cfg))?, BURN_IN)?;
    let combined = (g[0].se.powi(2) + g[1].se.powi(2)).sqrt();

    let coalescence_cfg = SimConfig {
        horizon: 400.0,
        dt: 0.02,
        paths: opts.size(1000, 100),
        ..cfg
    };
    let report = beta_coalescence_report(&model, &pair, &coalescence_cfg, 0.01)?;
    Ok(outcome(
        6,
        vec![
            Check::at_most(
                "|growth(current) - growth(limiting)| / combined sigma",
                (g[0].mean - g[1].mean).abs() / combined,
                3.0,
            ),
            Check::at_least("fraction of paths with late beta gap < 0.01", report.fraction_below, 0.99),
        ],
    ))
}

pub(crate) fn ou_market() -> OuStochVol {
    OuStochVol {
        r: 0.03,
        mu: 0.05,
        nu: 2.0,
        vbar: 0.0,
        rho: 0.3,
        vol: VolMap::default(),
        v0: 0.0,
    }
}

/// Quadrature and time average of `lambda^2 delta(lambda)`, and the OU
/// stationary variance.
pub fn criterion_7(opts: &VerifyOptions) -> Result<CriterionOutcome> {
    let ou = ou_market();
    let model = MarketModel::ou(ou.clone())?;
    let pair = relative_var(0.01);
    let phi = |x: f64| x * x * delta(&pair, x).unwrap_or(f64::NAN);
    let quad = z_quadrature(&model, phi, 50)?;
    let avg = z_time_average(&model, phi, opts.span(5000.0, 1000.0), 0.01, opts.seed ^ 7)?;
    let (var, se) = ou_variance_estimate(&ou, opts.size(1_000_000, 200_000), 0.01, opts.seed ^ 7);
    Ok(outcome(
        7,
        vec![
            Check::at_most(
                "relative error of time average vs quadrature",
                (avg.value - quad.value).abs() / quad.value.abs(),
                if opts.quick { 0.05 } else { 0.02 },
            ),
            Check::at_most("|variance - 1/(2 nu)| / se", (var - ou.stationary_variance()).abs() / se, 4.0),
        ],
    ))
}

fn random_fraction_rule() -> StrategyRule {
    let rule: CustomRule = Arc::new(|input: &StrategyInput<'_>| Ok(Position::Scaled(input.uniform * input.beta_current()?)));
    StrategyRule::custom("random_fraction", rule)
}

/// Supermartingale and stopped log-dominance of the relative projection.
pub fn criterion_8(opts: &VerifyOptions) -> Result<CriterionOutcome> {
    let model = constant_market();
    let pair = relative_var(0.01);
    let cfg = SimConfig {
        horizon: 1.0,
        dt: 1.0 / 252.0,
        paths: opts.size(100_000, 10_000),
        seed: opts.seed ^ 8,
        x0_wealth: 1.0,
        record_stride: 1000,
        noise_substeps: 1,
    };
    let tests = [
        StrategyRule::ScaledProjection(0.5),
        StrategyRule::FixedFraction(0.0),
        random_fraction_rule(),
    ];
    let mut checks = Vec::new();
    for rep in supermartingale_check(&model, &pair, &tests, &cfg)? {
        checks.push(Check::at_most(
            format!("{}: (E[ratio] - 1) / se", rep.strategy_tag),
            if rep.se > 0.0 { (rep.estimate - 1.0) / rep.se } else { rep.estimate - 1.0 },
            3.0,
        ));
    }
    let challenger = StrategyRule::ScaledProjection(0.3);
    for stopping in [StoppingRule::Fixed(1.0), StoppingRule::FirstHitting { multiple: 1.05 }] {
        let rep = finite_horizon_log_check(&model, &pair, &challenger, stopping, &cfg)?;
        let label = match stopping {
            StoppingRule::Fixed(_) => "fixed time",
            StoppingRule::FirstHitting { .. } => "capped hitting time",
        };
        checks.push(Check::at_least(format!("{label}: E[log difference] / se"), rep.estimate / rep.se, -3.0));
    }
    Ok(outcome(8, checks))
}

/// Ten admissible challengers for the absolute-VaR market.
pub fn challengers() -> Vec<StrategyRule> {
    let sine: CustomRule = Arc::new(|input: &StrategyInput<'_>| {
        Ok(Position::Scaled(input.beta_limit()? * (0.6 + 0.4 * (input.t * std::f64::consts::TAU / 50.0).sin())))
    });
    let midpoint: CustomRule = Arc::new(|input: &StrategyInput<'_>| {
        Ok(Position::Scaled(0.5 * (input.beta_limit()? + input.beta_current()?)))
    });
    let capped: CustomRule = Arc::new(|input: &StrategyInput<'_>| {
        Ok(Position::Scaled(input.beta_current()?.min(1.5 * input.beta_limit()?)))
    });
    vec![
        StrategyRule::FixedFraction(0.0),
        StrategyRule::FixedFraction(0.005),
        StrategyRule::FixedFraction(0.01),
        StrategyRule::ScaledProjection(0.5),
        StrategyRule::ScaledProjection(0.9),
        StrategyRule::ProjectedCurrent,
        StrategyRule::custom("sine_fraction", sine),
        StrategyRule::custom("midpoint", midpoint),
        StrategyRule::custom("capped_current", capped),
        random_fraction_rule(),
    ]
}

/// No challenger's growth exceeds the limiting projection's by more than
/// three combined standard errors.
pub fn criterion_9(opts: &VerifyOptions) -> Result<CriterionOutcome> {
    let model = constant_market();
    let pair = absolute_var(0.01);
    let cfg = SimConfig {
        horizon: opts.span(2000.0, 400.0),
        dt: 0.01,
        paths: opts.size(20, 16),
        seed: opts.seed ^ 9,
        x0_wealth: 1.0,
        record_stride: 1000,
        noise_substeps: 1,
    };
    let report = dominance_sweep(&model, &pair, &challengers(), &cfg, BURN_IN)?;
    Ok(outcome(
        9,
        report
            .rows
            .iter()
            .map(|row| Check::at_most(format!("{}: excess / combined sigma", row.strategy_tag), row.excess / row.combined_sigma, 3.0))
            .collect(),
    ))
}

pub type CriterionFn = fn(&VerifyOptions) -> Result<CriterionOutcome>;

/// Criteria 1 through 9; criterion 10 exercises the binary and lives with it.
pub const NUMERIC_CRITERIA: [CriterionFn; 9] = [
    criterion_1,
    criterion_2,
    criterion_3,
    criterion_4,
    criterion_5,
    criterion_6,
    criterion_7,
    criterion_8,
    criterion_9,
];

pub fn run_numeric_criteria(opts: &VerifyOptions) -> Result<Vec<CriterionOutcome>> {
    NUMERIC_CRITERIA.iter().map(|c| c(opts)).collect()
}
