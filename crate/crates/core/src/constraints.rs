//! The scalar constraint pair `(f, h)`.
//!
//! A proportion vector `zeta` is admissible at wealth `x` when
//! `f(zeta' mu, |zeta' sigma|) <= h(x)`. For the built-in risk limits `f`
//! is the log-form compliance function of the measure and
//!
//! * absolute limit `a`: `h(x) = -ln((1 - a/x)^+)`, infinite for `x <= a`;
//! * relative limit `a`: `h = -ln(1 - a)`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::numerics::{inverse_mills, log_norm_cdf};
use crate::risk::{PortfolioStats, RiskMeasure, RiskParams};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Limit {
    /// Limit in currency; the set depends on wealth.
    Absolute { limit: f64 },
    /// Limit as a fraction of wealth, in (0, 1).
    Relative { limit: f64 },
}

pub type ComplianceFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
pub type LevelFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Kind {
    Measure {
        measure: RiskMeasure,
        limit: Limit,
        params: RiskParams,
    },
    Custom {
        f: ComplianceFn,
        h: LevelFn,
        threshold: Option<f64>,
        h_limit: f64,
    },
}

/// Immutable `(f, h)` pair.
#[derive(Clone)]
pub struct ConstraintPair {
    kind: Kind,
}

impl fmt::Debug for ConstraintPair {
    fn fmt(&self, fm: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            Kind::Measure {
                measure,
                limit,
                params,
            } => fm
                .debug_struct("ConstraintPair")
                .field("measure", measure)
                .field("limit", limit)
                .field("params", params)
                .finish(),
            Kind::Custom {
                threshold, h_limit, ..
            } => fm
                .debug_struct("ConstraintPair::Custom")
                .field("threshold", threshold)
                .field("h_limit", h_limit)
                .finish_non_exhaustive(),
        }
    }
}

/// Lower-bound constants: `f(m, s) >= k1 s^2 - k2 m - k3`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Kappas {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
}

impl ConstraintPair {
    pub fn new(measure: RiskMeasure, limit: Limit, params: RiskParams) -> Result<Self> {
        match limit {
            Limit::Absolute { limit: a } if !(a > 0.0 && a.is_finite()) => {
                return Err(domain(format!("absolute limit must be positive, got {a}")))
            }
            Limit::Relative { limit: a } if !(a > 0.0 && a < 1.0) => {
                return Err(domain(format!("relative limit must lie in (0, 1), got {a}")))
            }
            _ => {}
        }
        Ok(Self {
            kind: Kind::Measure {
                measure,
                limit,
                params,
            },
        })
    }

    /// Pair from arbitrary `f` and `h`. `threshold` is the wealth at or below
    /// which `h` is infinite (absolute-type pairs); `h_limit` is the infimum
    /// of `h`, reached as wealth grows.
    pub fn custom(f: ComplianceFn, h: LevelFn, threshold: Option<f64>, h_limit: f64) -> Self {
        Self {
            kind: Kind::Custom {
                f,
                h,
                threshold,
                h_limit,
            },
        }
    }

    pub fn measure(&self) -> Option<RiskMeasure> {
        match &self.kind {
            Kind::Measure { measure, .. } => Some(*measure),
            Kind::Custom { .. } => None,
        }
    }

    pub fn limit(&self) -> Option<Limit> {
        match &self.kind {
            Kind::Measure { limit, .. } => Some(*limit),
            Kind::Custom { .. } => None,
        }
    }

    pub fn params(&self) -> Option<&RiskParams> {
        match &self.kind {
            Kind::Measure { params, .. } => Some(params),
            Kind::Custom { .. } => None,
        }
    }

    pub fn label(&self) -> String {
        match &self.kind {
            Kind::Measure { measure, limit, .. } => match limit {
                Limit::Absolute { limit } => format!("{}-absolute({limit})", measure.name()),
                Limit::Relative { limit } => format!("{}-relative({limit})", measure.name()),
            },
            Kind::Custom { .. } => "custom".to_string(),
        }
    }

    /// Wealth at or below which `h` is infinite; `None` for constant `h`.
    pub fn wealth_threshold(&self) -> Option<f64> {
        match &self.kind {
            Kind::Measure {
                limit: Limit::Absolute { limit },
                ..
            } => Some(*limit),
            Kind::Measure { .. } => None,
            Kind::Custom { threshold, .. } => *threshold,
        }
    }

    /// True when `h` does not depend on wealth.
    pub fn is_relative(&self) -> bool {
        self.wealth_threshold().is_none()
    }

    pub fn f_eval(&self, stats: PortfolioStats) -> f64 {
        self.f(stats.zeta_mu, stats.zeta_sigma)
    }

    pub(crate) fn f(&self, m: f64, s: f64) -> f64 {
        match &self.kind {
            Kind::Measure {
                measure, params, ..
            } => {
                let tau = params.tau();
                let rt = tau.sqrt();
                match measure {
                    RiskMeasure::VaR => {
                        -tau * (params.r() + m - 0.5 * s * s) - params.z_alpha() * s * rt
                    }
                    RiskMeasure::TVaR => {
                        params.alpha().ln()
                            - tau * (params.r() + m)
                            - log_norm_cdf(params.z_alpha() - s * rt)
                    }
                    RiskMeasure::LEL => {
                        params.alpha().ln() - tau * params.r() - log_norm_cdf(params.z_alpha() - s * rt)
                    }
                }
            }
            Kind::Custom { f, .. } => f(m, s),
        }
    }

    /// Partial derivatives `(df/dm, df/ds)`; `None` for custom pairs.
    pub fn f_grad(&self, stats: PortfolioStats) -> Option<(f64, f64)> {
        match &self.kind {
            Kind::Measure {
                measure, params, ..
            } => {
                let tau = params.tau();
                let rt = tau.sqrt();
                let s = stats.zeta_sigma;
                Some(match measure {
                    RiskMeasure::VaR => (-tau, tau * s - params.z_alpha() * rt),
                    RiskMeasure::TVaR => (-tau, rt * inverse_mills(params.z_alpha() - s * rt)),
                    RiskMeasure::LEL => (0.0, rt * inverse_mills(params.z_alpha() - s * rt)),
                })
            }
            Kind::Custom { .. } => None,
        }
    }

    pub fn h_eval(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Err(domain(format!("wealth must be positive, got {x}")));
        }
        Ok(match &self.kind {
            Kind::Measure { limit, .. } => match *limit {
                Limit::Relative { limit } => -(-limit).ln_1p(),
                Limit::Absolute { limit } => {
                    if x <= limit {
                        f64::INFINITY
                    } else {
                        -(-limit / x).ln_1p()
                    }
                }
            },
            Kind::Custom { h, threshold, .. } => match threshold {
                Some(x0) if x <= *x0 => f64::INFINITY,
                _ => h(x),
            },
        })
    }

    /// `inf_x h(x)`: zero for absolute limits, the constant for relative ones.
    pub fn h_limit(&self) -> f64 {
        match &self.kind {
            Kind::Measure {
                limit: Limit::Absolute { .. },
                ..
            } => 0.0,
            Kind::Measure {
                limit: Limit::Relative { limit },
                ..
            } => -(-limit).ln_1p(),
            Kind::Custom { h_limit, .. } => *h_limit,
        }
    }

    pub fn is_admissible(&self, query: &ConstraintSetQuery, zeta: &DVector<f64>) -> Result<bool> {
        let stats = query.stats(zeta)?;
        Ok(self.f_eval(stats) <= self.h_eval(query.wealth)?)
    }

    /// `g(beta) = f(beta lambda^2, beta lambda)`: `f` along the Merton ray.
    pub fn g_eval(&self, lambda: f64, beta: f64) -> f64 {
        self.f(beta * lambda * lambda, beta * lambda)
    }

    /// `g` and `dg/dbeta`, when `f` has an analytic gradient.
    pub(crate) fn g_with_derivative(&self, lambda: f64, beta: f64) -> Option<(f64, f64)> {
        let stats = PortfolioStats {
            zeta_mu: beta * lambda * lambda,
            zeta_sigma: beta * lambda,
        };
        let (dm, ds) = self.f_grad(stats)?;
        Some((self.f_eval(stats), dm * lambda * lambda + ds * lambda))
    }

    /// Constants of the quadratic lower bound on `f`.
    ///
    /// Built-in measures use bounds valid on the whole half-plane
    /// (`N(-y) <= exp(-y^2/2)/2` for the tail measures); custom pairs are
    /// fitted on the default grid.
    pub fn kappas(&self) -> Kappas {
        match &self.kind {
            Kind::Measure {
                measure, params, ..
            } => {
                let tau = params.tau();
                match measure {
                    RiskMeasure::VaR => Kappas {
                        k1: 0.5 * tau,
                        k2: tau,
                        k3: params.r() * tau,
                    },
                    RiskMeasure::TVaR => Kappas {
                        k1: 0.5 * tau,
                        k2: tau,
                        k3: params.r() * tau - params.alpha().ln(),
                    },
                    // No dependence on the rate of return: the bound holds with k2 = 0.
                    RiskMeasure::LEL => Kappas {
                        k1: 0.5 * tau,
                        k2: 0.0,
                        k3: params.r() * tau - params.alpha().ln(),
                    },
                }
            }
            Kind::Custom { .. } => fit_kappas(self, &GridSpec::default()),
        }
    }

    /// Bound on `|zeta' sigma|` over the admissible set at level `hval`,
    /// from the quadratic lower bound on `f` and `zeta' mu <= |zeta' sigma| lambda`.
    pub fn radius_bound(&self, lambda: f64, hval: f64) -> f64 {
        if hval == f64::INFINITY {
            return f64::INFINITY;
        }
        let Kappas { k1, k2, k3 } = self.kappas();
        let b = k2 * lambda;
        let disc = (b * b + 4.0 * k1 * (hval + k3)).max(0.0);
        ((b + disc.sqrt()) / (2.0 * k1)).max(0.0)
    }

    pub fn verify_axioms(&self, grid: &GridSpec) -> AxiomReport {
        verify_axioms(self, grid)
    }
}

/// Market coefficients and wealth at which admissibility is tested.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSetQuery {
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub wealth: f64,
}

impl ConstraintSetQuery {
    pub fn new(mu: DVector<f64>, sigma: DMatrix<f64>, wealth: f64) -> Result<Self> {
        if mu.len() != sigma.nrows() {
            return Err(domain(format!(
                "mu has {} entries but sigma has {} rows",
                mu.len(),
                sigma.nrows()
            )));
        }
        if sigma.nrows() > sigma.ncols() || sigma.rank(1e-12 * sigma.amax().max(1e-300)) < sigma.nrows() {
            return Err(domain("sigma must have full row rank"));
        }
        if !(wealth > 0.0) {
            return Err(domain(format!("wealth must be positive, got {wealth}")));
        }
        Ok(Self { mu, sigma, wealth })
    }

    /// `(zeta' mu, |zeta' sigma|)`.
    pub fn stats(&self, zeta: &DVector<f64>) -> Result<PortfolioStats> {
        portfolio_stats(zeta, &self.mu, &self.sigma)
    }
}

pub fn portfolio_stats(
    zeta: &DVector<f64>,
    mu: &DVector<f64>,
    sigma: &DMatrix<f64>,
) -> Result<PortfolioStats> {
    if zeta.len() != mu.len() || zeta.len() != sigma.nrows() {
        return Err(domain(format!(
            "zeta has {} entries, mu {}, sigma {} rows",
            zeta.len(),
            mu.len(),
            sigma.nrows()
        )));
    }
    Ok(PortfolioStats {
        zeta_mu: zeta.dot(mu),
        zeta_sigma: (sigma.transpose() * zeta).norm(),
    })
}

/// Rectangle of `(zeta_mu, zeta_sigma)` used for axiom checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub mu_min: f64,
    pub mu_max: f64,
    pub sigma_max: f64,
    pub mu_steps: usize,
    pub sigma_steps: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            mu_min: -2.0,
            mu_max: 2.0,
            sigma_max: 5.0,
            mu_steps: 40,
            sigma_steps: 50,
        }
    }
}

impl GridSpec {
    fn mu(&self, i: usize) -> f64 {
        self.mu_min + (self.mu_max - self.mu_min) * i as f64 / self.mu_steps as f64
    }

    fn sigma(&self, j: usize) -> f64 {
        self.sigma_max * j as f64 / self.sigma_steps as f64
    }

    fn refined(&self) -> Self {
        Self {
            mu_steps: 2 * self.mu_steps + 1,
            sigma_steps: 2 * self.sigma_steps + 1,
            ..*self
        }
    }

    fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        (0..=self.mu_steps).flat_map(move |i| (0..=self.sigma_steps).map(move |j| (self.mu(i), self.sigma(j))))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AxiomReport {
    pub f_origin: f64,
    pub origin_negative: bool,
    pub convex: bool,
    pub nonincreasing_in_mu: bool,
    pub nondecreasing_in_sigma: bool,
    pub kappas: Kappas,
    pub lower_bound_holds: bool,
    pub failures: Vec<String>,
}

impl AxiomReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

fn slack(v: f64) -> f64 {
    1e-12 * (1.0 + v.abs())
}

/// Fits `k1`, `k2` from the grid's curvature and slope, then takes `k3` as
/// the largest violation of `f >= k1 s^2 - k2 m` on the grid.
pub fn fit_kappas(pair: &ConstraintPair, grid: &GridSpec) -> Kappas {
    let f00 = pair.f(0.0, 0.0);
    let k1 = (grid.sigma_steps / 2..=grid.sigma_steps)
        .filter(|&j| j > 0)
        .map(|j| {
            let s = grid.sigma(j);
            (pair.f(0.0, s) - f00) / (s * s)
        })
        .fold(f64::INFINITY, f64::min);
    let k1 = if k1.is_finite() && k1 > 0.0 { 0.5 * k1 } else { 1e-6 };
    let span = grid.mu_max - grid.mu_min;
    let k2 = (0..=grid.sigma_steps)
        .map(|j| {
            let s = grid.sigma(j);
            (pair.f(grid.mu_min, s) - pair.f(grid.mu_max, s)) / span
        })
        .fold(0.0f64, f64::max)
        .max(1e-6);
    let worst = grid
        .points()
        .map(|(m, s)| k1 * s * s - k2 * m - pair.f(m, s))
        .fold(f64::NEG_INFINITY, f64::max);
    let k3 = (worst + slack(worst)).max(1e-12);
    Kappas { k1, k2, k3 }
}

fn verify_axioms(pair: &ConstraintPair, grid: &GridSpec) -> AxiomReport {
    let mut failures = Vec::new();
    let f_origin = pair.f(0.0, 0.0);
    let origin_negative = f_origin < 0.0;
    if !origin_negative {
        failures.push(format!("f(0,0) = {f_origin} is not negative"));
    }

    let mut nonincreasing_in_mu = true;
    let mut nondecreasing_in_sigma = true;
    for j in 0..=grid.sigma_steps {
        for i in 1..=grid.mu_steps {
            let (a, b) = (pair.f(grid.mu(i - 1), grid.sigma(j)), pair.f(grid.mu(i), grid.sigma(j)));
            if b > a + slack(a) {
                nonincreasing_in_mu = false;
            }
        }
    }
    for i in 0..=grid.mu_steps {
        for j in 1..=grid.sigma_steps {
            let (a, b) = (pair.f(grid.mu(i), grid.sigma(j - 1)), pair.f(grid.mu(i), grid.sigma(j)));
            if b < a - slack(a) {
                nondecreasing_in_sigma = false;
            }
        }
    }
    if !nonincreasing_in_mu {
        failures.push("f is not nonincreasing in zeta_mu".into());
    }
    if !nondecreasing_in_sigma {
        failures.push("f is not nondecreasing in zeta_sigma".into());
    }

    // Midpoint convexity on random pairs of grid-rectangle points.
    let mut rng = rng::stream(0xc0ffee, &[grid.mu_steps as u64, grid.sigma_steps as u64]);
    let mut convex = true;
    for _ in 0..20_000 {
        use rand::Rng;
        let p = (rng.random_range(grid.mu_min..=grid.mu_max), rng.random_range(0.0..=grid.sigma_max));
        let q = (rng.random_range(grid.mu_min..=grid.mu_max), rng.random_range(0.0..=grid.sigma_max));
        let mid = pair.f(0.5 * (p.0 + q.0), 0.5 * (p.1 + q.1));
        let chord = 0.5 * (pair.f(p.0, p.1) + pair.f(q.0, q.1));
        if mid > chord + slack(chord) {
            convex = false;
            break;
        }
    }
    if !convex {
        failures.push("f fails the midpoint convexity test".into());
    }

    let kappas = fit_kappas(pair, grid);
    if !(kappas.k1 > 0.0 && kappas.k2 > 0.0 && kappas.k3 > 0.0) {
        failures.push(format!("fitted constants not all positive: {kappas:?}"));
    }
    let lower_bound_holds = grid.refined().points().all(|(m, s)| {
        let f = pair.f(m, s);
        f >= kappas.k1 * s * s - kappas.k2 * m - kappas.k3 - slack(f)
    });
    if !lower_bound_holds {
        failures.push(format!("quadratic lower bound {kappas:?} violated on the refined grid"));
    }

    AxiomReport {
        f_origin,
        origin_negative,
        convex,
        nonincreasing_in_mu,
        nondecreasing_in_sigma,
        kappas,
        lower_bound_holds,
        failures,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::risk::{measure, RiskMeasure::*};
    use rand::Rng;

    fn params() -> RiskParams {
        RiskParams::new(0.05, 10.0 / 252.0, 0.03).unwrap()
    }

    fn pair(m: RiskMeasure, limit: Limit) -> ConstraintPair {
        ConstraintPair::new(m, limit, params()).unwrap()
    }

    fn stats(m: f64, s: f64) -> PortfolioStats {
        PortfolioStats::new(m, s).unwrap()
    }

    fn random_query(rng: &mut impl Rng, n: usize, m: usize, wealth: f64) -> ConstraintSetQuery {
        loop {
            let mu = DVector::from_fn(n, |_, _| rng.random_range(-0.1..0.2));
            let sigma = DMatrix::from_fn(n, m, |_, _| rng.random_range(-0.4..0.4));
            if let Ok(q) = ConstraintSetQuery::new(mu, sigma, wealth) {
                return q;
            }
        }
    }

    #[test]
    fn limit_validation() {
        assert!(ConstraintPair::new(VaR, Limit::Relative { limit: 1.0 }, params()).is_err());
        assert!(ConstraintPair::new(VaR, Limit::Absolute { limit: 0.0 }, params()).is_err());
    }

    #[test]
    fn f_at_origin() {
        let p = params();
        let rt = p.r() * p.tau();
        assert!((pair(VaR, Limit::Relative { limit: 0.1 }).f_eval(stats(0.0, 0.0)) + rt).abs() < 1e-15);
        assert!((pair(TVaR, Limit::Relative { limit: 0.1 }).f_eval(stats(0.0, 0.0)) + rt).abs() < 1e-15);
        assert!((pair(LEL, Limit::Relative { limit: 0.1 }).f_eval(stats(0.0, 0.0)) + rt).abs() < 1e-15);
    }

    #[test]
    fn var_compliance_sign_matches_the_measure() {
        let p = params();
        let vp = pair(VaR, Limit::Relative { limit: 0.1 });
        let s = stats(0.05, 0.2);
        let f = vp.f_eval(s);
        let var = measure(VaR, 1.0, s, &p).unwrap();
        assert_eq!(f < 0.0, var == 0.0);
        let s = stats(0.05, 0.9);
        assert_eq!(vp.f_eval(s) < 0.0, measure(VaR, 1.0, s, &p).unwrap() == 0.0);
    }

    #[test]
    fn h_examples() {
        let ap = pair(VaR, Limit::Absolute { limit: 10.0 });
        assert_eq!(ap.h_eval(10.0).unwrap(), f64::INFINITY);
        assert_eq!(ap.h_eval(5.0).unwrap(), f64::INFINITY);
        assert!((ap.h_eval(20.0).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!(ap.h_eval(1e15).unwrap() < 1e-13);
        assert!(ap.h_eval(0.0).is_err());
        let mut prev = f64::INFINITY;
        for k in 1..200 {
            let h = ap.h_eval(10.0 * (1.0 + 0.05 * k as f64)).unwrap();
            assert!(h < prev && h > 0.0);
            prev = h;
        }
        let rp = pair(TVaR, Limit::Relative { limit: 0.2 });
        assert!((rp.h_eval(3.0).unwrap() - rp.h_eval(3000.0).unwrap()).abs() == 0.0);
        assert!((rp.h_eval(3.0).unwrap() + 0.8f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn origin_always_admissible_and_small_wealth_unconstrained() {
        let mut rng = rng::stream(1, &[]);
        for m in RiskMeasure::ALL {
            for limit in [Limit::Absolute { limit: 10.0 }, Limit::Relative { limit: 0.01 }] {
                let p = pair(m, limit);
                let q = random_query(&mut rng, 2, 3, 50.0);
                assert!(p.is_admissible(&q, &DVector::zeros(2)).unwrap());
            }
            let p = pair(m, Limit::Absolute { limit: 10.0 });
            let q = random_query(&mut rng, 2, 3, 9.0);
            assert!(p.is_admissible(&q, &DVector::from_vec(vec![1e3, -4e2])).unwrap());
        }
    }

    #[test]
    fn dimension_mismatch() {
        let p = pair(VaR, Limit::Relative { limit: 0.01 });
        let q = ConstraintSetQuery::new(DVector::from_vec(vec![0.05]), DMatrix::from_element(1, 1, 0.2), 1.0).unwrap();
        assert!(p.is_admissible(&q, &DVector::zeros(2)).is_err());
        assert!(ConstraintSetQuery::new(DVector::zeros(2), DMatrix::from_element(1, 1, 0.2), 1.0).is_err());
        assert!(ConstraintSetQuery::new(DVector::zeros(2), DMatrix::from_element(2, 2, 0.2), 1.0).is_err());
    }

    #[test]
    fn membership_flips_across_the_boundary() {
        let mut rng = rng::stream(2, &[]);
        for m in RiskMeasure::ALL {
            let p = pair(m, Limit::Absolute { limit: 1.0 });
            for _ in 0..50 {
                let q = random_query(&mut rng, 3, 4, 20.0);
                let dir = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
                let h = p.h_eval(q.wealth).unwrap();
                let phi = |t: f64| p.f_eval(q.stats(&(&dir * t)).unwrap()) - h;
                let b = crate::numerics::RootBracket::with_tolerances(0.0, 1e4, 1e-14, 1e-15, 400).unwrap();
                let t = crate::numerics::solve_increasing_root(phi, &b).unwrap();
                assert!(p.is_admissible(&q, &(&dir * (t * (1.0 - 1e-6)))).unwrap());
                assert!(!p.is_admissible(&q, &(&dir * (t * (1.0 + 1e-6)))).unwrap());
            }
        }
    }

    #[test]
    fn admissibility_equals_measure_bound() {
        let mut rng = rng::stream(3, &[]);
        let mut checked = 0;
        for draw in 0..1000 {
            let m = RiskMeasure::ALL[draw % 3];
            let relative = draw % 2 == 0;
            let wealth = rng.random_range(1.0..100.0);
            let q = random_query(&mut rng, 2, 3, wealth);
            let zeta = DVector::from_fn(2, |_, _| rng.random_range(-3.0..3.0));
            let s = q.stats(&zeta).unwrap();
            let (p, bound) = if relative {
                let a = rng.random_range(0.001..0.2);
                (pair(m, Limit::Relative { limit: a }), a * wealth)
            } else {
                let a = rng.random_range(0.1..20.0);
                (pair(m, Limit::Absolute { limit: a }), a)
            };
            let value = measure(m, wealth, s, &params()).unwrap();
            if (value - bound).abs() < 1e-9 * bound {
                continue;
            }
            checked += 1;
            assert_eq!(p.is_admissible(&q, &zeta).unwrap(), value <= bound, "{m:?} {value} {bound}");
        }
        assert!(checked > 990);
    }

    #[test]
    fn absolute_sets_shrink_with_wealth() {
        let mut rng = rng::stream(4, &[]);
        for m in RiskMeasure::ALL {
            let p = pair(m, Limit::Absolute { limit: 5.0 });
            for _ in 0..300 {
                let w = rng.random_range(1.0..50.0);
                let q1 = random_query(&mut rng, 2, 2, w);
                let mut q2 = q1.clone();
                q2.wealth = q1.wealth * rng.random_range(1.0..10.0);
                let zeta = DVector::from_fn(2, |_, _| rng.random_range(-2.0..2.0));
                if p.is_admissible(&q2, &zeta).unwrap() {
                    assert!(p.is_admissible(&q1, &zeta).unwrap());
                }
            }
        }
    }

    #[test]
    fn admissible_sets_are_convex() {
        let mut rng = rng::stream(5, &[]);
        for m in RiskMeasure::ALL {
            let p = pair(m, Limit::Relative { limit: 0.02 });
            let q = random_query(&mut rng, 3, 3, 1.0);
            let mut admissible = Vec::new();
            while admissible.len() < 200 {
                let z = DVector::from_fn(3, |_, _| rng.random_range(-1.5..1.5));
                if p.is_admissible(&q, &z).unwrap() {
                    admissible.push(z);
                }
            }
            for w in admissible.windows(2) {
                let mid = (&w[0] + &w[1]) * 0.5;
                assert!(p.is_admissible(&q, &mid).unwrap());
            }
        }
    }

    #[test]
    fn g_examples() {
        let p = params();
        let vp = pair(VaR, Limit::Relative { limit: 0.01 });
        assert_eq!(vp.g_eval(0.7, 0.0), vp.f_eval(stats(0.0, 0.0)));
        let (t, z) = (p.tau(), p.z_alpha());
        let mut rng = rng::stream(6, &[]);
        for _ in 0..100 {
            let lam: f64 = rng.random_range(0.0..3.0);
            let b: f64 = rng.random_range(0.0..5.0);
            let quad = 0.5 * t * b * b * lam * lam - t * b * lam * lam - z * t.sqrt() * b * lam - p.r() * t;
            assert!((vp.g_eval(lam, b) - quad).abs() < 1e-14);
        }
    }

    #[test]
    fn g_is_convex_and_crosses_each_level_once() {
        let mut rng = rng::stream(7, &[]);
        for m in RiskMeasure::ALL {
            let p = pair(m, Limit::Relative { limit: 0.05 });
            for _ in 0..100 {
                let lam: f64 = rng.random_range(0.01..3.0);
                let (b1, b2): (f64, f64) = (rng.random_range(0.0..20.0), rng.random_range(0.0..20.0));
                let mid = p.g_eval(lam, 0.5 * (b1 + b2));
                let chord = 0.5 * (p.g_eval(lam, b1) + p.g_eval(lam, b2));
                assert!(mid <= chord + 1e-12 * (1.0 + chord.abs()));
            }
            // Sign changes of g - c on a fine grid: exactly one for c > f(0,0).
            let lam = 0.8;
            for c in [0.001, 0.05, 1.0] {
                let crossings = (0..4000)
                    .map(|k| p.g_eval(lam, k as f64 * 0.01) - c)
                    .collect::<Vec<_>>()
                    .windows(2)
                    .filter(|w| w[0] < 0.0 && w[1] >= 0.0 || w[0] >= 0.0 && w[1] < 0.0)
                    .count();
                assert_eq!(crossings, 1, "{m:?} c={c}");
            }
        }
    }

    #[test]
    fn analytic_derivative_matches_differences() {
        for m in RiskMeasure::ALL {
            let p = pair(m, Limit::Relative { limit: 0.05 });
            for (lam, b) in [(0.3, 0.4), (1.2, 2.0), (2.5, 7.0)] {
                let (_, d) = p.g_with_derivative(lam, b).unwrap();
                let h = 1e-6;
                let fd = (p.g_eval(lam, b + h) - p.g_eval(lam, b - h)) / (2.0 * h);
                assert!((d - fd).abs() < 1e-6 * (1.0 + d.abs()), "{m:?}: {d} vs {fd}");
            }
        }
    }

    #[test]
    fn radius_bound_covers_admissible_points() {
        let mut rng = rng::stream(8, &[]);
        for m in RiskMeasure::ALL {
            let p = pair(m, Limit::Absolute { limit: 2.0 });
            assert_eq!(p.radius_bound(0.4, f64::INFINITY), f64::INFINITY);
            let q = random_query(&mut rng, 2, 3, 10.0);
            let merton = crate::projection::merton_proportion(&q.mu, &q.sigma).unwrap();
            let h = p.h_eval(q.wealth).unwrap();
            let bound = p.radius_bound(merton.lambda, h);
            assert!(bound.is_finite());
            let mut hits = 0;
            for _ in 0..20_000 {
                let z = DVector::from_fn(2, |_, _| rng.random_range(-60.0..60.0));
                if p.is_admissible(&q, &z).unwrap() {
                    hits += 1;
                    assert!(q.stats(&z).unwrap().zeta_sigma <= bound);
                }
            }
            assert!(hits > 0);
        }
    }

    #[test]
    fn analytic_kappas_hold_on_a_wide_grid() {
        let grid = GridSpec {
            mu_min: -2.0,
            mu_max: 20.0,
            sigma_max: 30.0,
            mu_steps: 100,
            sigma_steps: 300,
        };
        for m in RiskMeasure::ALL {
            let p = pair(m, Limit::Relative { limit: 0.05 });
            let k = p.kappas();
            for (mu, s) in grid.points() {
                assert!(p.f(mu, s) >= k.k1 * s * s - k.k2 * mu - k.k3 - 1e-12, "{m:?} at ({mu}, {s})");
            }
        }
        let k = pair(VaR, Limit::Relative { limit: 0.05 }).kappas();
        let p = params();
        assert_eq!((k.k1, k.k2, k.k3), (p.tau() / 2.0, p.tau(), p.r() * p.tau()));
    }

    #[test]
    fn builtin_pairs_satisfy_the_axioms() {
        for m in RiskMeasure::ALL {
            let report = pair(m, Limit::Absolute { limit: 1.0 }).verify_axioms(&GridSpec::default());
            assert!(report.passed(), "{m:?}: {:?}", report.failures);
        }
    }

    #[test]
    fn custom_pair_with_positive_origin_is_flagged() {
        let f: ComplianceFn = Arc::new(|m, s| s * s - m + 1.0);
        let h: LevelFn = Arc::new(|_| 0.5);
        let p = ConstraintPair::custom(f, h, None, 0.5);
        let report = p.verify_axioms(&GridSpec::default());
        assert!(!report.origin_negative);
        assert!(!report.passed());
        assert!(report.failures.iter().any(|f| f.contains("f(0,0)")));
    }

    #[test]
    fn non_convex_custom_pair_is_flagged() {
        let f: ComplianceFn = Arc::new(|m, s| (3.0 * s).sin() + s - m - 2.0);
        let h: LevelFn = Arc::new(|_| 0.5);
        let report = ConstraintPair::custom(f, h, None, 0.5).verify_axioms(&GridSpec::default());
        assert!(!report.convex);
        assert!(!report.passed());
    }
}
