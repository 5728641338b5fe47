//! Closed-form VaR, TVaR and LEL of the projected wealth loss.
//!
//! Over a horizon `tau` with proportions and coefficients frozen, the loss of
//! a position worth `x` is `L = x (1 - exp(Y))` where `Y` is normal with mean
//! `qtilde * tau` and standard deviation `zeta_sigma * sqrt(tau)`. All three
//! measures are linear in `x`; the positive part is applied last.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::numerics::{cdf, quantile};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RiskMeasure {
    VaR,
    TVaR,
    LEL,
}

impl RiskMeasure {
    pub const ALL: [RiskMeasure; 3] = [RiskMeasure::VaR, RiskMeasure::TVaR, RiskMeasure::LEL];

    pub fn name(self) -> &'static str {
        match self {
            RiskMeasure::VaR => "VaR",
            RiskMeasure::TVaR => "TVaR",
            RiskMeasure::LEL => "LEL",
        }
    }

    fn code(self) -> u64 {
        self as u64 + 1
    }
}

/// Percentile, measurement horizon and riskless rate shared by every measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RiskParams {
    alpha: f64,
    tau: f64,
    r: f64,
    #[serde(skip)]
    z_alpha: f64,
}

impl RiskParams {
    pub fn new(alpha: f64, tau: f64, r: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 0.5) {
            return Err(domain(format!("alpha must lie in (0, 1/2), got {alpha}")));
        }
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(domain(format!("tau must be positive, got {tau}")));
        }
        if !(r > 0.0 && r.is_finite()) {
            return Err(domain(format!("r must be positive, got {r}")));
        }
        Ok(Self {
            alpha,
            tau,
            r,
            z_alpha: quantile(alpha),
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    /// `N^{-1}(alpha)`, negative since `alpha < 1/2`.
    pub fn z_alpha(&self) -> f64 {
        self.z_alpha
    }
}

/// Portfolio rate of return `zeta' mu` and volatility `|zeta' sigma|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PortfolioStats {
    pub zeta_mu: f64,
    pub zeta_sigma: f64,
}

impl PortfolioStats {
    pub fn new(zeta_mu: f64, zeta_sigma: f64) -> Result<Self> {
        if !(zeta_sigma >= 0.0) || !zeta_mu.is_finite() || !zeta_sigma.is_finite() {
            return Err(domain(format!(
                "invalid portfolio statistics ({zeta_mu}, {zeta_sigma})"
            )));
        }
        Ok(Self {
            zeta_mu,
            zeta_sigma,
        })
    }
}

/// One realized projected loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossSample {
    pub value: f64,
}

/// Log-wealth drift `r + zeta_mu - zeta_sigma^2 / 2`.
pub fn qtilde(stats: PortfolioStats, params: &RiskParams) -> f64 {
    params.r + stats.zeta_mu - 0.5 * stats.zeta_sigma * stats.zeta_sigma
}

fn check_wealth(x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(domain(format!("wealth must be positive, got {x}")))
    }
}

/// Upper `alpha`-percentile of the loss, before the positive part.
pub fn upper_loss_quantile(x: f64, stats: PortfolioStats, params: &RiskParams) -> f64 {
    let t = params.tau;
    x * -(qtilde(stats, params) * t + params.z_alpha * stats.zeta_sigma * t.sqrt()).exp_m1()
}

/// Mean loss beyond the upper `alpha`-percentile, before the positive part.
pub fn tail_conditional_loss(x: f64, stats: PortfolioStats, params: &RiskParams) -> f64 {
    let t = params.tau;
    let tail = cdf(params.z_alpha - stats.zeta_sigma * t.sqrt());
    x * (1.0 - (t * (params.r + stats.zeta_mu)).exp() * tail / params.alpha)
}

pub fn value_at_risk(x: f64, stats: PortfolioStats, params: &RiskParams) -> Result<f64> {
    check_wealth(x)?;
    Ok(upper_loss_quantile(x, stats, params).max(0.0))
}

pub fn tail_value_at_risk(x: f64, stats: PortfolioStats, params: &RiskParams) -> Result<f64> {
    check_wealth(x)?;
    Ok(tail_conditional_loss(x, stats, params).max(0.0))
}

/// TVaR with the portfolio rate of return set to zero.
pub fn limited_expected_loss(x: f64, zeta_sigma: f64, params: &RiskParams) -> Result<f64> {
    check_wealth(x)?;
    if !(zeta_sigma >= 0.0) {
        return Err(domain(format!("zeta_sigma must be non-negative, got {zeta_sigma}")));
    }
    let stats = PortfolioStats {
        zeta_mu: 0.0,
        zeta_sigma,
    };
    Ok(tail_conditional_loss(x, stats, params).max(0.0))
}

/// The measure before its positive part.
pub fn unclamped_measure(
    kind: RiskMeasure,
    x: f64,
    stats: PortfolioStats,
    params: &RiskParams,
) -> f64 {
    match kind {
        RiskMeasure::VaR => upper_loss_quantile(x, stats, params),
        RiskMeasure::TVaR => tail_conditional_loss(x, stats, params),
        RiskMeasure::LEL => tail_conditional_loss(
            x,
            PortfolioStats {
                zeta_mu: 0.0,
                ..stats
            },
            params,
        ),
    }
}

pub fn measure(kind: RiskMeasure, x: f64, stats: PortfolioStats, params: &RiskParams) -> Result<f64> {
    check_wealth(x)?;
    Ok(unclamped_measure(kind, x, stats, params).max(0.0))
}

/// Measure as a fraction of wealth; does not depend on the wealth level.
pub fn relative_measure(kind: RiskMeasure, stats: PortfolioStats, params: &RiskParams) -> f64 {
    unclamped_measure(kind, 1.0, stats, params).max(0.0)
}

/// `n` i.i.d. draws of the projected loss.
pub fn sample_projected_loss(
    x: f64,
    stats: PortfolioStats,
    params: &RiskParams,
    seed: u64,
    n: usize,
) -> Result<Vec<LossSample>> {
    check_wealth(x)?;
    if n == 0 {
        return Err(domain("sample count must be at least 1"));
    }
    let mean = qtilde(stats, params) * params.tau;
    let sd = stats.zeta_sigma * params.tau.sqrt();
    let mut rng = rng::stream(seed, &[0x4c4f_5353]);
    Ok((0..n)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            LossSample {
                value: -x * (mean + sd * z).exp_m1(),
            }
        })
        .collect())
}

/// Monte Carlo estimate of a measure (before the positive part) with its
/// standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleEstimate {
    pub estimate: f64,
    pub standard_error: f64,
    pub samples: usize,
}

/// Percentile / conditional-tail-mean oracle over antithetic pairs of the
/// loss law. The stream seed is derived from `(seed, kind, parameters)`.
///
/// Standard errors use the i.i.d. asymptotic formulas (order-statistic
/// sparsity for the percentile, the tail-mean variance plus the percentile
/// correction for TVaR/LEL). Antithetic pairing only reduces the variance of
/// these monotone statistics, so the reported errors are conservative.
pub fn mc_oracle(
    kind: RiskMeasure,
    x: f64,
    stats: PortfolioStats,
    params: &RiskParams,
    seed: u64,
    n: usize,
) -> Result<OracleEstimate> {
    check_wealth(x)?;
    if n < 1000 {
        return Err(domain(format!("oracle needs at least 1000 samples, got {n}")));
    }
    let stats = match kind {
        RiskMeasure::LEL => PortfolioStats {
            zeta_mu: 0.0,
            ..stats
        },
        _ => stats,
    };
    let param_hash = rng::hash_f64s(&[
        x,
        stats.zeta_mu,
        stats.zeta_sigma,
        params.alpha,
        params.tau,
        params.r,
    ]);
    let mut rng = rng::stream(seed, &[kind.code(), param_hash]);
    let mean = qtilde(stats, params) * params.tau;
    let sd = stats.zeta_sigma * params.tau.sqrt();
    let n = n & !1;
    let mut losses = Vec::with_capacity(n);
    for _ in 0..n / 2 {
        let z: f64 = rng.sample(StandardNormal);
        losses.push(-x * (mean + sd * z).exp_m1());
        losses.push(-x * (mean - sd * z).exp_m1());
    }

    let alpha = params.alpha;
    let nf = n as f64;
    let p = 1.0 - alpha;
    let rank = |q: f64| (((q * nf).ceil() as usize).max(1) - 1).min(n - 1);
    let k = rank(p);
    let (_, gamma, _) = losses.select_nth_unstable_by(k, f64::total_cmp);
    let gamma = *gamma;

    match kind {
        RiskMeasure::VaR => {
            let h = 0.1 * alpha;
            let k_hi = rank(p + h);
            let k_lo = rank(p - h);
            let q_hi = *losses[k + 1..]
                .select_nth_unstable_by(k_hi - k - 1, f64::total_cmp)
                .1;
            let q_lo = *losses[..k].select_nth_unstable_by(k_lo, f64::total_cmp).1;
            let sparsity = (q_hi - q_lo) / (2.0 * h);
            Ok(OracleEstimate {
                estimate: gamma,
                standard_error: (p * alpha / nf).sqrt() * sparsity,
                samples: n,
            })
        }
        RiskMeasure::TVaR | RiskMeasure::LEL => {
            let tail = &losses[k..];
            let m = tail.len() as f64;
            let w = tail.iter().sum::<f64>() / m;
            let var_tail = tail.iter().map(|l| (l - w) * (l - w)).sum::<f64>() / (m - 1.0);
            let spread = w - gamma;
            Ok(OracleEstimate {
                estimate: w,
                standard_error: ((var_tail + p * spread * spread) / (nf * alpha)).sqrt(),
                samples: n,
            })
        }
    }
}
