//! Euler simulation of log-wealth under constrained and test strategies.
//!
//! For a proportion process `zeta` the log-wealth `Y = ln X` solves
//!
//! ```text
//! dY = Q(t, zeta) dt + zeta' sigma dW,    Q = r + zeta' mu - |zeta' sigma|^2 / 2,
//! ```
//!
//! which is stepped with `zeta` frozen at the left endpoint. All strategies
//! in one run share the Brownian increments and the market state path, so
//! comparisons between them are paired. Paths run in parallel; each owns a
//! random stream derived from `(seed, path index)`, so results do not depend
//! on the thread count.

use std::cell::RefCell;
use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constraints::ConstraintPair;
use crate::error::{domain, Error, Result};
use crate::market::{MarketModel, MarketPoint, Snapshot};
use crate::numerics::GaussHermite;
use crate::projection::{beta_of, limiting_beta};
use crate::rng;

const PATH_STREAM: u64 = 0x5041_5448;
const UNIFORM_STREAM: u64 = 0x554e_4946;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub horizon: f64,
    pub dt: f64,
    pub paths: usize,
    pub seed: u64,
    pub x0_wealth: f64,
    /// Record every `record_stride`-th step (the final step is always kept).
    pub record_stride: usize,
    /// Each Brownian increment is the sum of this many finer increments, so
    /// runs with `(dt, 2k)` and `(dt/2, k)` see the same Brownian path.
    pub noise_substeps: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            horizon: 10.0,
            dt: 0.01,
            paths: 100,
            seed: 0,
            x0_wealth: 1.0,
            record_stride: 100,
            noise_substeps: 1,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(domain(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.horizon >= self.dt && self.horizon.is_finite()) {
            return Err(domain(format!("horizon {} is shorter than dt {}", self.horizon, self.dt)));
        }
        if self.paths == 0 {
            return Err(domain("need at least one path"));
        }
        if !(self.x0_wealth > 0.0 && self.x0_wealth.is_finite()) {
            return Err(domain(format!("initial wealth must be positive, got {}", self.x0_wealth)));
        }
        if self.record_stride == 0 || self.noise_substeps == 0 {
            return Err(domain("record_stride and noise_substeps must be at least 1"));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        ((self.horizon / self.dt).round() as usize).max(1)
    }
}

/// A proportion vector, either as a multiple of the Merton proportion or
/// explicitly.
#[derive(Debug, Clone, PartialEq)]
pub enum Position {
    Scaled(f64),
    Vector(DVector<f64>),
}

/// What a custom strategy sees at the left end of a step.
pub struct StrategyInput<'a> {
    pub t: f64,
    pub step: usize,
    /// Market state (the OU factor; zero for the other models).
    pub state: f64,
    pub wealth: f64,
    pub snapshot: &'a Snapshot,
    /// Uniform draw on [0, 1) independent of the Brownian increments.
    pub uniform: f64,
    pair: &'a ConstraintPair,
}

impl StrategyInput<'_> {
    /// `beta(t, X)` at the strategy's own wealth.
    pub fn beta_current(&self) -> Result<f64> {
        beta_of(self.pair, self.snapshot.lambda, self.pair.h_eval(self.wealth)?)
    }

    /// `beta(t, infinity)`.
    pub fn beta_limit(&self) -> Result<f64> {
        limiting_beta(self.pair, self.snapshot.lambda)
    }

    pub fn pair(&self) -> &ConstraintPair {
        self.pair
    }
}

pub type CustomRule = Arc<dyn Fn(&StrategyInput<'_>) -> Result<Position> + Send + Sync>;

#[derive(Clone)]
pub enum StrategyRule {
    MertonUnconstrained,
    /// `beta(t, X) zeta_M`, the constrained optimum at current wealth.
    ProjectedCurrent,
    /// `beta(t, infinity) zeta_M`.
    ProjectedLimiting,
    /// The projection for a relative (wealth-independent) pair.
    RelativeProjected,
    /// `c zeta_M`.
    FixedFraction(f64),
    /// `k beta(t, X) zeta_M`; admissible for `0 <= k <= 1`.
    ScaledProjection(f64),
    Custom { tag: String, rule: CustomRule },
}

impl fmt::Debug for StrategyRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.tag())
    }
}

impl StrategyRule {
    pub fn tag(&self) -> String {
        match self {
            Self::MertonUnconstrained => "merton".into(),
            Self::ProjectedCurrent => "projected_current".into(),
            Self::ProjectedLimiting => "projected_limiting".into(),
            Self::RelativeProjected => "relative_projected".into(),
            Self::FixedFraction(c) => format!("fixed_fraction({c})"),
            Self::ScaledProjection(k) => format!("scaled_projection({k})"),
            Self::Custom { tag, .. } => tag.clone(),
        }
    }

    pub fn custom(tag: impl Into<String>, rule: CustomRule) -> Self {
        Self::Custom { tag: tag.into(), rule }
    }
}

/// Bounded stopping rule for finite-horizon comparisons.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StoppingRule {
    /// Stop at `t` (capped at the horizon).
    Fixed(f64),
    /// Stop when the reference strategy's wealth first reaches
    /// `multiple * x0`, or at the horizon.
    FirstHitting { multiple: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathResult {
    pub strategy_tag: String,
    pub times: Vec<f64>,
    pub log_wealth: Vec<f64>,
    /// Multiple of the Merton proportion in force on each recorded step
    /// (`zeta' mu / lambda^2` for explicit vectors).
    pub beta_series: Vec<f64>,
    /// `(Y(T) - Y(0)) / T`.
    pub growth_estimate: f64,
    /// `sum Q(t_k, zeta_k) dt`; the rest of `Y(T) - Y(0)` is the martingale part.
    pub drift_integral: f64,
    pub final_log_wealth: f64,
    /// `sup |beta(t, X) - beta(t, infinity)|` over the second half of the
    /// horizon, for rules built on `beta(t, X)`.
    pub late_beta_gap: Option<f64>,
    /// Log-wealth and time at the stopping rule, when one was requested.
    pub stopped: Option<(f64, f64)>,
}

/// One simulation request.
#[derive(Clone)]
pub struct RunSpec<'a> {
    pub model: &'a MarketModel,
    pub pair: &'a ConstraintPair,
    pub rules: &'a [StrategyRule],
    pub cfg: &'a SimConfig,
    /// Stopping rule and the index of the reference strategy.
    pub stopping: Option<(StoppingRule, usize)>,
    /// Check `f <= h` on every step for these strategy indices.
    pub enforce: &'a [usize],
}

impl<'a> RunSpec<'a> {
    pub fn new(
        model: &'a MarketModel,
        pair: &'a ConstraintPair,
        rules: &'a [StrategyRule],
        cfg: &'a SimConfig,
    ) -> Self {
        Self {
            model,
            pair,
            rules,
            cfg,
            stopping: None,
            enforce: &[],
        }
    }

    fn validate(&self) -> Result<()> {
        self.cfg.validate()?;
        if self.rules.is_empty() {
            return Err(domain("no strategies requested"));
        }
        if !self.pair.is_relative() && self.rules.iter().any(|r| matches!(r, StrategyRule::RelativeProjected)) {
            return Err(domain("relative_projected needs a relative constraint"));
        }
        if let Some((rule, reference)) = self.stopping {
            if reference >= self.rules.len() {
                return Err(domain(format!("stopping reference {reference} out of range")));
            }
            match rule {
                StoppingRule::Fixed(t) if !(t > 0.0) => {
                    return Err(domain(format!("stopping time must be positive, got {t}")))
                }
                StoppingRule::FirstHitting { multiple } if !(multiple > 0.0) => {
                    return Err(domain(format!("hitting multiple must be positive, got {multiple}")))
                }
                _ => {}
            }
        }
        if let Some(&i) = self.enforce.iter().find(|&&i| i >= self.rules.len()) {
            return Err(domain(format!("enforced strategy index {i} out of range")));
        }
        Ok(())
    }
}

/// Runs every path of `spec`; the result is indexed `[path][strategy]`.
pub fn run(spec: &RunSpec<'_>) -> Result<Vec<Vec<PathResult>>> {
    spec.validate()?;
    let first = spec.model.snapshot(0.0, spec.model.initial_state())?;
    let results: Vec<Result<Vec<PathResult>>> = (0..spec.cfg.paths)
        .into_par_iter()
        .map(|p| run_path_inner(spec, &first, p))
        .collect();
    results.into_iter().collect()
}

/// One path of one strategy.
pub fn simulate_path(
    model: &MarketModel,
    pair: &ConstraintPair,
    rule: &StrategyRule,
    cfg: &SimConfig,
    path_index: usize,
) -> Result<PathResult> {
    let rules = std::slice::from_ref(rule);
    let spec = RunSpec::new(model, pair, rules, cfg);
    spec.validate()?;
    let first = model.snapshot(0.0, model.initial_state())?;
    Ok(run_path_inner(&spec, &first, path_index)?.remove(0))
}

/// Per-step cache of the wealth-independent scalings.
struct LambdaCache {
    lambda: f64,
    limit: f64,
}

impl LambdaCache {
    fn get(&mut self, pair: &ConstraintPair, lambda: f64) -> Result<f64> {
        if lambda != self.lambda {
            self.limit = limiting_beta(pair, lambda)?;
            self.lambda = lambda;
        }
        Ok(self.limit)
    }
}

fn run_path_inner(spec: &RunSpec<'_>, first: &Snapshot, path: usize) -> Result<Vec<PathResult>> {
    let RunSpec { model, pair, rules, cfg, .. } = *spec;
    let steps = cfg.steps();
    let dt = cfg.dt;
    let sqrt_dt = dt.sqrt();
    let (_, m) = model.dims();
    let mut rng = rng::stream(cfg.seed, &[PATH_STREAM, path as u64]);
    let mut snap = first.clone();
    let mut state = model.initial_state();
    let mut z = vec![0.0; m];
    let mut extra = vec![0.0; model.state_noise_dim()];
    let sub_scale = (cfg.noise_substeps as f64).sqrt().recip();
    let mut cache = LambdaCache {
        lambda: f64::NAN,
        limit: f64::NAN,
    };
    let y0 = cfg.x0_wealth.ln();
    let horizon = steps as f64 * dt;
    let late_start = steps / 2;

    let s = rules.len();
    let mut y = vec![y0; s];
    let mut drift = vec![0.0; s];
    let mut gaps: Vec<Option<f64>> = rules
        .iter()
        .map(|r| matches!(r, StrategyRule::ProjectedCurrent | StrategyRule::ScaledProjection(_)).then_some(0.0))
        .collect();
    let mut last_beta = vec![f64::NAN; s];
    let mut records: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = (0..s).map(|_| Default::default()).collect();
    let enforce: Vec<bool> = (0..s).map(|i| spec.enforce.contains(&i)).collect();
    let mut stopped: Option<(Vec<f64>, f64)> = None;
    let stop_level = match spec.stopping {
        Some((StoppingRule::FirstHitting { multiple }, _)) => Some(y0 + multiple.ln()),
        _ => None,
    };
    let stop_step = match spec.stopping {
        Some((StoppingRule::Fixed(t), _)) => Some(((t / dt).round() as usize).clamp(1, steps)),
        Some(_) => Some(steps),
        None => None,
    };

    for k in 0..steps {
        let t = k as f64 * dt;
        if k > 0 && !model.is_constant() {
            model.update_snapshot(t, state, &mut snap)?;
        }
        for zj in z.iter_mut() {
            let mut acc = 0.0;
            for _ in 0..cfg.noise_substeps {
                acc += rng.sample::<f64, _>(StandardNormal);
            }
            *zj = acc * sub_scale;
        }
        for e in extra.iter_mut() {
            *e = rng.sample(StandardNormal);
        }
        let lambda = snap.lambda;
        let merton_noise: f64 = snap.exposure.iter().zip(&z).map(|(a, b)| a * b).sum();
        let record = k % cfg.record_stride == 0;

        for i in 0..s {
            let wealth = y[i].exp();
            let mut current_beta = None;
            let position = match &rules[i] {
                StrategyRule::MertonUnconstrained => Position::Scaled(1.0),
                StrategyRule::FixedFraction(c) => Position::Scaled(*c),
                StrategyRule::ProjectedLimiting | StrategyRule::RelativeProjected => {
                    Position::Scaled(cache.get(pair, lambda)?)
                }
                StrategyRule::ProjectedCurrent => {
                    let b = beta_of(pair, lambda, pair.h_eval(wealth)?)?;
                    current_beta = Some(b);
                    Position::Scaled(b)
                }
                StrategyRule::ScaledProjection(c) => {
                    let b = beta_of(pair, lambda, pair.h_eval(wealth)?)?;
                    current_beta = Some(b);
                    Position::Scaled(c * b)
                }
                StrategyRule::Custom { rule, .. } => {
                    let input = StrategyInput {
                        t,
                        step: k,
                        state,
                        wealth,
                        snapshot: &snap,
                        uniform: rng::counter_uniform(cfg.seed, &[UNIFORM_STREAM, path as u64, k as u64, i as u64]),
                        pair,
                    };
                    rule(&input)?
                }
            };

            let (zeta_mu, zeta_sigma, noise, beta) = match &position {
                Position::Scaled(c) => (c * lambda * lambda, c.abs() * lambda, c * merton_noise, *c),
                Position::Vector(v) => {
                    if v.len() != snap.mu.len() {
                        return Err(domain(format!(
                            "strategy `{}` returned {} weights for {} assets",
                            rules[i].tag(),
                            v.len(),
                            snap.mu.len()
                        )));
                    }
                    let load = snap.sigma.tr_mul(v);
                    let zm = v.dot(&snap.mu);
                    let beta = if lambda > 0.0 { zm / (lambda * lambda) } else { 0.0 };
                    (zm, load.norm(), load.iter().zip(&z).map(|(a, b)| a * b).sum(), beta)
                }
            };

            if enforce[i] {
                let f = pair.f(zeta_mu, zeta_sigma);
                if !(f <= pair.h_eval(wealth)?) {
                    return Err(Error::Inadmissible {
                        tag: rules[i].tag(),
                        step: k,
                        t,
                    });
                }
            }
            if let (Some(gap), Some(b)) = (gaps[i].as_mut(), current_beta) {
                if k >= late_start {
                    *gap = gap.max((b - cache.get(pair, lambda)?).abs());
                }
            }

            let q = snap.r + zeta_mu - 0.5 * zeta_sigma * zeta_sigma;
            if record {
                let (times, ys, betas) = &mut records[i];
                times.push(t);
                ys.push(y[i]);
                betas.push(beta);
            }
            last_beta[i] = beta;
            y[i] += q * dt + noise * sqrt_dt;
            drift[i] += q * dt;
            if !y[i].is_finite() {
                return Err(Error::NonFinite {
                    step: k,
                    t,
                    what: format!("log-wealth of `{}`", rules[i].tag()),
                });
            }
        }

        state = model.advance_state(state, dt, &z, &extra);
        if stopped.is_none() {
            let hit = match (stop_level, spec.stopping) {
                (Some(level), Some((_, reference))) => y[reference] >= level,
                _ => false,
            };
            if hit || stop_step == Some(k + 1) {
                stopped = Some((y.clone(), (k + 1) as f64 * dt));
            }
        }
    }

    Ok(rules
        .iter()
        .enumerate()
        .map(|(i, rule)| {
            let (mut times, mut ys, mut betas) = std::mem::take(&mut records[i]);
            times.push(horizon);
            ys.push(y[i]);
            betas.push(last_beta[i]);
            PathResult {
                strategy_tag: rule.tag(),
                times,
                log_wealth: ys,
                beta_series: betas,
                growth_estimate: (y[i] - y0) / horizon,
                drift_integral: drift[i],
                final_log_wealth: y[i],
                late_beta_gap: gaps[i],
                stopped: stopped.as_ref().map(|(ys, t)| (ys[i], *t)),
            }
        })
        .collect())
}

/// Growth over the part of the path after `burn_in_fraction` of the horizon,
/// measured from the first recorded time at or after the burn-in.
pub fn growth_rate(result: &PathResult, burn_in_fraction: f64) -> Result<f64> {
    if !(0.0..=0.9).contains(&burn_in_fraction) {
        return Err(domain(format!("burn-in fraction must lie in [0, 0.9], got {burn_in_fraction}")));
    }
    let end = *result.times.last().ok_or_else(|| domain("empty path"))?;
    let cut = end * burn_in_fraction;
    let i = result.times.partition_point(|&t| t < cut);
    let (t0, y0) = (result.times[i], result.log_wealth[i]);
    if end <= t0 {
        return Err(domain("no recorded time after the burn-in"));
    }
    Ok((result.final_log_wealth - y0) / (end - t0))
}

/// `zeta' mu >= |zeta' sigma|^2 / 2`: wealth under `zeta` drifts upward.
pub fn check_transience(zeta: &DVector<f64>, point: &MarketPoint) -> bool {
    let load = point.sigma.tr_mul(zeta);
    zeta.dot(&point.mu) >= 0.5 * load.norm_squared()
}

/// Sample mean and standard error of the mean.
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, f64::INFINITY);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthSummary {
    pub strategy_tag: String,
    pub mean: f64,
    pub se: f64,
    pub paths: usize,
}

/// Growth estimates per strategy, averaged over paths.
pub fn summarize_growth(results: &[Vec<PathResult>], burn_in_fraction: f64) -> Result<Vec<GrowthSummary>> {
    let Some(first) = results.first() else {
        return Ok(Vec::new());
    };
    (0..first.len())
        .map(|i| {
            let g = results
                .iter()
                .map(|p| growth_rate(&p[i], burn_in_fraction))
                .collect::<Result<Vec<_>>>()?;
            let (mean, se) = mean_se(&g);
            Ok(GrowthSummary {
                strategy_tag: first[i].strategy_tag.clone(),
                mean,
                se,
                paths: g.len(),
            })
        })
        .collect()
}

/// Average of `r` over the market's invariant law.
fn mean_rate(model: &MarketModel, nodes: usize) -> Result<f64> {
    Ok(match model {
        MarketModel::Constant(p) => p.r,
        MarketModel::OuStochVol(ou) => ou.r,
        MarketModel::Periodic(p) => {
            (0..nodes)
                .map(|k| model.coefficients_at(p.period * k as f64 / nodes as f64, 0.0).r)
                .sum::<f64>()
                / nodes as f64
        }
    })
}

/// Long-run average of `phi(lambda)` by quadrature over the invariant law.
fn ergodic_mean<F: Fn(f64) -> Result<f64>>(model: &MarketModel, phi: F, nodes: usize) -> Result<f64> {
    match model {
        MarketModel::Constant(_) => phi(model.lambda_at(0.0, 0.0)?),
        MarketModel::Periodic(p) => {
            let mut sum = 0.0;
            for k in 0..nodes {
                sum += phi(model.lambda_at(p.period * k as f64 / nodes as f64, 0.0)?)?;
            }
            Ok(sum / nodes as f64)
        }
        MarketModel::OuStochVol(ou) => {
            let gh = GaussHermite::new(nodes)?;
            let err = RefCell::new(None);
            let v = gh.expectation(
                |v| {
                    phi(ou.lambda(v)).unwrap_or_else(|e| {
                        err.borrow_mut().get_or_insert(e);
                        f64::NAN
                    })
                },
                ou.vbar,
                ou.nu,
            )?;
            match err.into_inner() {
                Some(e) => Err(e),
                None => Ok(v),
            }
        }
    }
}

/// Multiple of `zeta_M` a rule holds in the long run, as a function of
/// `lambda`; `None` for custom rules.
fn long_run_multiple(rule: &StrategyRule, pair: &ConstraintPair, lambda: f64) -> Option<Result<f64>> {
    Some(match rule {
        StrategyRule::MertonUnconstrained => Ok(1.0),
        StrategyRule::FixedFraction(c) => Ok(*c),
        StrategyRule::ProjectedCurrent | StrategyRule::ProjectedLimiting | StrategyRule::RelativeProjected => {
            limiting_beta(pair, lambda)
        }
        StrategyRule::ScaledProjection(k) => limiting_beta(pair, lambda).map(|b| k * b),
        StrategyRule::Custom { .. } => return None,
    })
}

/// Analytic long-run growth `r + Z((b - b^2/2) lambda^2)` of a rule holding
/// `b(lambda) zeta_M` in the long run.
pub fn growth_target(model: &MarketModel, pair: &ConstraintPair, rule: &StrategyRule, nodes: usize) -> Result<Option<f64>> {
    if matches!(rule, StrategyRule::Custom { .. }) {
        return Ok(None);
    }
    let r = mean_rate(model, nodes)?;
    let z = ergodic_mean(
        model,
        |l| {
            let b = long_run_multiple(rule, pair, l).expect("built-in rule")?;
            Ok((b - 0.5 * b * b) * l * l)
        },
        nodes,
    )?;
    Ok(Some(r + z))
}

/// The growth constant `r + Z(b lambda^2)`, which omits the quadratic
/// variation term of the drift.
pub fn naive_growth_constant(model: &MarketModel, pair: &ConstraintPair, rule: &StrategyRule, nodes: usize) -> Result<Option<f64>> {
    if matches!(rule, StrategyRule::Custom { .. }) {
        return Ok(None);
    }
    let r = mean_rate(model, nodes)?;
    let z = ergodic_mean(
        model,
        |l| Ok(long_run_multiple(rule, pair, l).expect("built-in rule")? * l * l),
        nodes,
    )?;
    Ok(Some(r + z))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoalescenceReport {
    pub paths: usize,
    /// Per path, `sup |beta(t, X) - beta(t, infinity)|` over the second half.
    pub late_gaps: Vec<f64>,
    pub threshold: f64,
    pub fraction_below: f64,
    pub max_gap: f64,
}

/// Runs `ProjectedCurrent` and records how far `beta(t, X)` stays from its
/// large-wealth limit late in the horizon.
pub fn beta_coalescence_report(
    model: &MarketModel,
    pair: &ConstraintPair,
    cfg: &SimConfig,
    threshold: f64,
) -> Result<CoalescenceReport> {
    let rules = [StrategyRule::ProjectedCurrent];
    let results = run(&RunSpec::new(model, pair, &rules, cfg))?;
    let late_gaps: Vec<f64> = results.iter().map(|p| p[0].late_beta_gap.unwrap_or(0.0)).collect();
    let below = late_gaps.iter().filter(|&&g| g < threshold).count();
    Ok(CoalescenceReport {
        paths: late_gaps.len(),
        fraction_below: below as f64 / late_gaps.len() as f64,
        max_gap: late_gaps.iter().copied().fold(0.0, f64::max),
        late_gaps,
        threshold,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupermartingaleReport {
    pub strategy_tag: String,
    /// Mean of `X^zeta(T) / X^r(T)`.
    pub estimate: f64,
    pub se: f64,
    pub paths: usize,
    pub passed: bool,
}

fn require_relative(pair: &ConstraintPair) -> Result<()> {
    if pair.is_relative() {
        Ok(())
    } else {
        Err(domain("this check needs a relative constraint"))
    }
}

/// `E[X^zeta(T) / X^r(T)] <= 1` for test rules against the relative
/// projection, with per-step admissibility enforced on the test rules.
pub fn supermartingale_check(
    model: &MarketModel,
    pair: &ConstraintPair,
    test_rules: &[StrategyRule],
    cfg: &SimConfig,
) -> Result<Vec<SupermartingaleReport>> {
    require_relative(pair)?;
    let mut rules = vec![StrategyRule::RelativeProjected];
    rules.extend_from_slice(test_rules);
    let enforce: Vec<usize> = (1..rules.len()).collect();
    let spec = RunSpec {
        enforce: &enforce,
        ..RunSpec::new(model, pair, &rules, cfg)
    };
    let results = run(&spec)?;
    Ok((1..rules.len())
        .map(|i| {
            let ratios: Vec<f64> = results
                .iter()
                .map(|p| (p[i].final_log_wealth - p[0].final_log_wealth).exp())
                .collect();
            let (estimate, se) = mean_se(&ratios);
            SupermartingaleReport {
                strategy_tag: rules[i].tag(),
                estimate,
                se,
                paths: ratios.len(),
                passed: estimate <= 1.0 + 3.0 * se || ratios.iter().all(|&r| r <= 1.0),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogDominanceReport {
    pub strategy_tag: String,
    pub stopping: StoppingRule,
    /// Mean of `ln X^r(stop) - ln X^zeta(stop)`.
    pub estimate: f64,
    pub se: f64,
    pub mean_stop_time: f64,
    pub paths: usize,
    pub passed: bool,
}

/// `E[ln X^r(tau) - ln X^zeta(tau)] >= 0` at a bounded stopping time, with
/// hitting times measured on the relative projection's wealth.
pub fn finite_horizon_log_check(
    model: &MarketModel,
    pair: &ConstraintPair,
    test_rule: &StrategyRule,
    stopping: StoppingRule,
    cfg: &SimConfig,
) -> Result<LogDominanceReport> {
    require_relative(pair)?;
    let rules = [StrategyRule::RelativeProjected, test_rule.clone()];
    let spec = RunSpec {
        stopping: Some((stopping, 0)),
        enforce: &[1],
        ..RunSpec::new(model, pair, &rules, cfg)
    };
    let results = run(&spec)?;
    let mut diffs = Vec::with_capacity(results.len());
    let mut stop_sum = 0.0;
    for p in &results {
        let (yr, t) = p[0].stopped.expect("stopping requested");
        let (yz, _) = p[1].stopped.expect("stopping requested");
        diffs.push(yr - yz);
        stop_sum += t;
    }
    let (estimate, se) = mean_se(&diffs);
    Ok(LogDominanceReport {
        strategy_tag: test_rule.tag(),
        stopping,
        estimate,
        se,
        mean_stop_time: stop_sum / results.len() as f64,
        paths: results.len(),
        passed: estimate >= -3.0 * se || diffs.iter().all(|&d| d >= 0.0),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DominanceRow {
    pub strategy_tag: String,
    pub growth: f64,
    pub se: f64,
    /// Challenger growth minus the benchmark's.
    pub excess: f64,
    /// `sqrt(se^2 + se_benchmark^2)`.
    pub combined_sigma: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DominanceReport {
    pub benchmark: GrowthSummary,
    pub rows: Vec<DominanceRow>,
}

impl DominanceReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.passed)
    }
}

/// Growth of each challenger against `ProjectedLimiting` on common noise.
pub fn dominance_sweep(
    model: &MarketModel,
    pair: &ConstraintPair,
    challengers: &[StrategyRule],
    cfg: &SimConfig,
    burn_in_fraction: f64,
) -> Result<DominanceReport> {
    let mut rules = vec![StrategyRule::ProjectedLimiting];
    rules.extend_from_slice(challengers);
    let enforce: Vec<usize> = (1..rules.len()).collect();
    let spec = RunSpec {
        enforce: &enforce,
        ..RunSpec::new(model, pair, &rules, cfg)
    };
    let summaries = summarize_growth(&run(&spec)?, burn_in_fraction)?;
    let benchmark = summaries[0].clone();
    let rows = summaries[1..]
        .iter()
        .map(|s| {
            let combined_sigma = (s.se * s.se + benchmark.se * benchmark.se).sqrt();
            let excess = s.mean - benchmark.mean;
            DominanceRow {
                strategy_tag: s.strategy_tag.clone(),
                growth: s.mean,
                se: s.se,
                excess,
                combined_sigma,
                passed: excess <= 3.0 * combined_sigma,
            }
        })
        .collect();
    Ok(DominanceReport { benchmark, rows })
}
