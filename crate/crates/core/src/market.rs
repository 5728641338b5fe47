//! Market coefficient models and the ergodic functional `Z(phi)`.
//!
//! Three models are built in: constant coefficients, deterministic periodic
//! coefficients, and a single stock whose volatility `Sigma(V)` is driven by
//! an Ornstein-Uhlenbeck factor
//!
//! ```text
//! dV = nu (Vbar - V) dt + dW2,    sigma = [rho Sigma(V), sqrt(1 - rho^2) Sigma(V)].
//! ```
//!
//! `Z(phi)` is the long-run time average of `phi(lambda(t))`, where `lambda`
//! is the market price of risk. It is computed either by quadrature over the
//! invariant law of the market state or by averaging along a simulated path.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{domain, Result};
use crate::numerics::GaussHermite;
use crate::projection::merton_proportion;
use crate::rng;

/// Market coefficients at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketPoint {
    pub r: f64,
    /// Excess rates of return `alpha - r`.
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
}

impl MarketPoint {
    pub fn new(r: f64, mu: DVector<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        if !r.is_finite() {
            return Err(domain(format!("rate must be finite, got {r}")));
        }
        // Validates dimensions, finiteness and rank.
        merton_proportion(&mu, &sigma)?;
        Ok(Self { r, mu, sigma })
    }

    /// One stock driven by one Brownian motion.
    pub fn scalar(r: f64, mu: f64, sigma: f64) -> Result<Self> {
        Self::new(r, DVector::from_element(1, mu), DMatrix::from_element(1, 1, sigma))
    }

    pub fn assets(&self) -> usize {
        self.mu.len()
    }

    pub fn factors(&self) -> usize {
        self.sigma.ncols()
    }
}

/// Market price of risk and Merton data at one instant, with buffers sized
/// for in-place updates along a path.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub r: f64,
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub zeta_m: DVector<f64>,
    /// `sigma' zeta_M`, the diffusion loading of the Merton portfolio.
    pub exposure: DVector<f64>,
    /// `|sigma' zeta_M|`.
    pub lambda: f64,
}

impl Snapshot {
    fn refresh(&mut self) -> Result<()> {
        if self.mu.len() == 1 {
            let s2 = self.sigma.row(0).norm_squared();
            if !(s2 > 0.0 && s2.is_finite() && self.mu[0].is_finite()) {
                return Err(domain(format!("degenerate volatility row, |sigma|^2 = {s2}")));
            }
            self.zeta_m[0] = self.mu[0] / s2;
        } else {
            self.zeta_m = merton_proportion(&self.mu, &self.sigma)?.zeta_m;
        }
        self.sigma.tr_mul_to(&self.zeta_m, &mut self.exposure);
        self.lambda = self.exposure.norm();
        Ok(())
    }
}

/// Bounded volatility map `v -> Sigma(v)` with its bounds.
#[derive(Clone)]
pub struct VolMap {
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    lo: f64,
    hi: f64,
}

impl fmt::Debug for VolMap {
    fn fmt(&self, fm: &mut fmt::Formatter<'_>) -> fmt::Result {
        fm.debug_struct("VolMap")
            .field("lo", &self.lo)
            .field("hi", &self.hi)
            .finish_non_exhaustive()
    }
}

impl VolMap {
    /// `lo + (hi - lo) / (1 + exp(-v))`.
    pub fn logistic(lo: f64, hi: f64) -> Result<Self> {
        if !(lo > 0.0 && hi > lo && hi.is_finite()) {
            return Err(domain(format!("need 0 < sigma_lo < sigma_hi, got [{lo}, {hi}]")));
        }
        Ok(Self {
            f: Arc::new(move |v: f64| lo + (hi - lo) / (1.0 + (-v).exp())),
            lo,
            hi,
        })
    }

    /// Arbitrary continuous map; values are clamped to `[lo, hi]`.
    pub fn custom(f: Arc<dyn Fn(f64) -> f64 + Send + Sync>, lo: f64, hi: f64) -> Result<Self> {
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return Err(domain(format!("need 0 < lo <= hi, got [{lo}, {hi}]")));
        }
        Ok(Self { f, lo, hi })
    }

    pub fn eval(&self, v: f64) -> f64 {
        (self.f)(v).clamp(self.lo, self.hi)
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }
}

impl Default for VolMap {
    fn default() -> Self {
        Self::logistic(0.1, 0.6).expect("valid default bounds")
    }
}

/// Single stock with Ornstein-Uhlenbeck driven volatility.
#[derive(Debug, Clone)]
pub struct OuStochVol {
    pub r: f64,
    pub mu: f64,
    pub nu: f64,
    pub vbar: f64,
    pub rho: f64,
    pub vol: VolMap,
    pub v0: f64,
}

impl OuStochVol {
    /// Variance `1/(2 nu)` of the stationary law.
    pub fn stationary_variance(&self) -> f64 {
        0.5 / self.nu
    }

    pub fn lambda(&self, v: f64) -> f64 {
        self.mu.abs() / self.vol.eval(v)
    }

    /// Exact transition over `dt` driven by a standard normal draw.
    pub fn step(&self, v: f64, dt: f64, noise: f64) -> f64 {
        let decay = (-self.nu * dt).exp();
        let sd = (-(-2.0 * self.nu * dt).exp_m1() / (2.0 * self.nu)).sqrt();
        self.vbar + (v - self.vbar) * decay + sd * noise
    }

    /// Correlation between the transition noise and the factor's Brownian
    /// increment over the same step.
    fn increment_correlation(&self, dt: f64) -> f64 {
        let cov = -(-self.nu * dt).exp_m1() / self.nu;
        let var = -(-2.0 * self.nu * dt).exp_m1() / (2.0 * self.nu);
        (cov / (var * dt).sqrt()).min(1.0)
    }
}

pub type PhaseFn = Arc<dyn Fn(f64) -> MarketPoint + Send + Sync>;

#[derive(Clone)]
pub struct PeriodicMarket {
    pub period: f64,
    point: PhaseFn,
    assets: usize,
    factors: usize,
}

impl fmt::Debug for PeriodicMarket {
    fn fmt(&self, fm: &mut fmt::Formatter<'_>) -> fmt::Result {
        fm.debug_struct("PeriodicMarket")
            .field("period", &self.period)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone)]
pub enum MarketModel {
    Constant(MarketPoint),
    Periodic(PeriodicMarket),
    OuStochVol(OuStochVol),
}

impl MarketModel {
    pub fn constant(r: f64, mu: f64, sigma: f64) -> Result<Self> {
        Ok(Self::Constant(MarketPoint::scalar(r, mu, sigma)?))
    }

    /// Periodic model from a map of the phase `t mod period`. The map is
    /// sampled at 64 phases to validate it.
    pub fn periodic(period: f64, point: PhaseFn) -> Result<Self> {
        if !(period > 0.0 && period.is_finite()) {
            return Err(domain(format!("period must be positive, got {period}")));
        }
        let first = point(0.0);
        let (assets, factors) = (first.assets(), first.factors());
        for k in 0..64 {
            let p = point(period * k as f64 / 64.0);
            if p.assets() != assets || p.factors() != factors {
                return Err(domain("periodic market changes dimension with phase"));
            }
            MarketPoint::new(p.r, p.mu, p.sigma)?;
        }
        Ok(Self::Periodic(PeriodicMarket {
            period,
            point,
            assets,
            factors,
        }))
    }

    /// One stock with `mu(t) = mu (1 + a sin(2 pi t / T0))` and
    /// `sigma(t) = sigma (1 + b cos(2 pi t / T0))`.
    pub fn sinusoidal(r: f64, mu: f64, mu_amp: f64, sigma: f64, sigma_amp: f64, period: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma_amp.abs() < 1.0) {
            return Err(domain("need sigma > 0 and |sigma amplitude| < 1"));
        }
        let point: PhaseFn = Arc::new(move |t: f64| {
            let w = 2.0 * PI * t / period;
            MarketPoint {
                r,
                mu: DVector::from_element(1, mu * (1.0 + mu_amp * w.sin())),
                sigma: DMatrix::from_element(1, 1, sigma * (1.0 + sigma_amp * w.cos())),
            }
        });
        Self::periodic(period, point)
    }

    pub fn ou(ou: OuStochVol) -> Result<Self> {
        if !(ou.nu > 0.0 && ou.nu.is_finite()) {
            return Err(domain(format!("nu must be positive, got {}", ou.nu)));
        }
        if !(-1.0..=1.0).contains(&ou.rho) {
            return Err(domain(format!("rho must lie in [-1, 1], got {}", ou.rho)));
        }
        if !(ou.r.is_finite() && ou.mu.is_finite() && ou.vbar.is_finite() && ou.v0.is_finite()) {
            return Err(domain("OU parameters must be finite"));
        }
        Ok(Self::OuStochVol(ou))
    }

    /// `(n, m)`: assets and Brownian factors.
    pub fn dims(&self) -> (usize, usize) {
        match self {
            Self::Constant(p) => (p.assets(), p.factors()),
            Self::Periodic(p) => (p.assets, p.factors),
            Self::OuStochVol(_) => (1, 2),
        }
    }

    pub fn initial_state(&self) -> f64 {
        match self {
            Self::OuStochVol(ou) => ou.v0,
            _ => 0.0,
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Self::Constant(_))
    }

    pub fn coefficients_at(&self, t: f64, state: f64) -> MarketPoint {
        match self {
            Self::Constant(p) => p.clone(),
            Self::Periodic(p) => (p.point)(t.rem_euclid(p.period)),
            Self::OuStochVol(ou) => {
                let s = ou.vol.eval(state);
                MarketPoint {
                    r: ou.r,
                    mu: DVector::from_element(1, ou.mu),
                    sigma: DMatrix::from_row_slice(1, 2, &[ou.rho * s, (1.0 - ou.rho * ou.rho).sqrt() * s]),
                }
            }
        }
    }

    pub fn snapshot(&self, t: f64, state: f64) -> Result<Snapshot> {
        let p = self.coefficients_at(t, state);
        let (n, m) = (p.assets(), p.factors());
        let mut snap = Snapshot {
            r: p.r,
            mu: p.mu,
            sigma: p.sigma,
            zeta_m: DVector::zeros(n),
            exposure: DVector::zeros(m),
            lambda: 0.0,
        };
        snap.refresh()?;
        Ok(snap)
    }

    /// Updates `snap` to time `t` and state `state` without reallocating.
    /// A no-op for the constant model.
    pub fn update_snapshot(&self, t: f64, state: f64, snap: &mut Snapshot) -> Result<()> {
        match self {
            Self::Constant(_) => Ok(()),
            Self::Periodic(p) => {
                let point = (p.point)(t.rem_euclid(p.period));
                snap.r = point.r;
                snap.mu = point.mu;
                snap.sigma = point.sigma;
                snap.refresh()
            }
            Self::OuStochVol(ou) => {
                let s = ou.vol.eval(state);
                snap.sigma[(0, 0)] = ou.rho * s;
                snap.sigma[(0, 1)] = (1.0 - ou.rho * ou.rho).sqrt() * s;
                snap.refresh()
            }
        }
    }

    pub fn lambda_at(&self, t: f64, state: f64) -> Result<f64> {
        match self {
            Self::OuStochVol(ou) => Ok(ou.lambda(state)),
            _ => Ok(self.snapshot(t, state)?.lambda),
        }
    }

    /// Number of extra standard normals per step used by the state dynamics.
    pub fn state_noise_dim(&self) -> usize {
        match self {
            Self::OuStochVol(_) => 1,
            _ => 0,
        }
    }

    /// Advances the market state over `dt`. `factor_normals` are the
    /// standardized Brownian increments driving the assets; `extra` holds
    /// [`Self::state_noise_dim`] independent normals.
    ///
    /// For the OU model the factor's transition noise is drawn jointly
    /// Gaussian with the second Brownian increment, so the pair has the exact
    /// law of `(V(t + dt), W2(t + dt) - W2(t))` given `V(t)`.
    pub fn advance_state(&self, state: f64, dt: f64, factor_normals: &[f64], extra: &[f64]) -> f64 {
        match self {
            Self::OuStochVol(ou) => {
                let c = ou.increment_correlation(dt);
                let noise = c * factor_normals[1] + (1.0 - c * c).max(0.0).sqrt() * extra[0];
                ou.step(state, dt, noise)
            }
            _ => state,
        }
    }
}

/// Exact OU transition; see [`OuStochVol::step`].
pub fn ou_step(model: &OuStochVol, v: f64, dt: f64, noise: f64) -> f64 {
    model.step(v, dt, noise)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErgodicMethod {
    Quadrature,
    TimeAverage,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErgodicValue {
    pub value: f64,
    pub method: ErgodicMethod,
    pub error_estimate: f64,
}

/// `Z(phi)` as an integral over the invariant law of the market.
///
/// Periodic models use the trapezoid rule on `nodes` panels over one period;
/// the OU model uses Gauss-Hermite with `nodes` points. The error estimate is
/// the change when the resolution is doubled.
pub fn z_quadrature<F>(model: &MarketModel, phi: F, nodes: usize) -> Result<ErgodicValue>
where
    F: Fn(f64) -> f64,
{
    if nodes < 2 {
        return Err(domain(format!("quadrature needs at least 2 nodes, got {nodes}")));
    }
    let (value, finer) = match model {
        MarketModel::Constant(_) => {
            let v = phi(model.lambda_at(0.0, 0.0)?);
            (v, v)
        }
        MarketModel::Periodic(p) => {
            let trapezoid = |panels: usize| -> Result<f64> {
                let mut sum = 0.0;
                for k in 0..panels {
                    sum += phi(model.lambda_at(p.period * k as f64 / panels as f64, 0.0)?);
                }
                Ok(sum / panels as f64)
            };
            (trapezoid(nodes)?, trapezoid(2 * nodes)?)
        }
        MarketModel::OuStochVol(ou) => {
            let integrand = |v: f64| phi(ou.lambda(v));
            (
                GaussHermite::new(nodes)?.expectation(integrand, ou.vbar, ou.nu)?,
                GaussHermite::new(2 * nodes)?.expectation(integrand, ou.vbar, ou.nu)?,
            )
        }
    };
    Ok(ErgodicValue {
        value,
        method: ErgodicMethod::Quadrature,
        error_estimate: (value - finer).abs(),
    })
}

const BATCHES: usize = 20;

/// Mean and batch-means standard error of a series.
pub(crate) fn batch_means(values: &[f64], batches: usize) -> (f64, f64) {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let size = n / batches;
    if size == 0 || batches < 2 {
        return (mean, f64::INFINITY);
    }
    let means: Vec<f64> = values
        .chunks_exact(size)
        .take(batches)
        .map(|c| c.iter().sum::<f64>() / size as f64)
        .collect();
    let bm = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|m| (m - bm).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (mean, (var / batches as f64).sqrt())
}

/// `Z(phi)` as the left-endpoint time average of `phi(lambda)` along one
/// simulated state path, with a batch-means error estimate.
pub fn z_time_average<F>(model: &MarketModel, phi: F, horizon: f64, dt: f64, seed: u64) -> Result<ErgodicValue>
where
    F: Fn(f64) -> f64,
{
    if !(dt > 0.0 && horizon >= dt) {
        return Err(domain(format!("need 0 < dt <= horizon, got dt = {dt}, horizon = {horizon}")));
    }
    let steps = (horizon / dt).round() as usize;
    if let MarketModel::Constant(_) = model {
        return Ok(ErgodicValue {
            value: phi(model.lambda_at(0.0, 0.0)?),
            method: ErgodicMethod::TimeAverage,
            error_estimate: 0.0,
        });
    }
    let mut rng = rng::stream(seed, &[0x7a, steps as u64]);
    let mut state = model.initial_state();
    let mut samples = Vec::with_capacity(steps);
    for k in 0..steps {
        let t = k as f64 * dt;
        samples.push(phi(model.lambda_at(t, state)?));
        if let MarketModel::OuStochVol(ou) = model {
            state = ou.step(state, dt, rng.sample(StandardNormal));
        }
    }
    let (value, se) = batch_means(&samples, BATCHES);
    Ok(ErgodicValue {
        value,
        method: ErgodicMethod::TimeAverage,
        error_estimate: se,
    })
}

/// Long-run sample variance of the OU factor over `steps` exact transitions
/// started at `vbar`, with a batch-means standard error.
pub fn ou_variance_estimate(ou: &OuStochVol, steps: usize, dt: f64, seed: u64) -> (f64, f64) {
    let mut rng = rng::stream(seed, &[0x0a7, steps as u64]);
    let mut v = ou.vbar;
    let squares: Vec<f64> = (0..steps)
        .map(|_| {
            v = ou.step(v, dt, rng.sample(StandardNormal));
            (v - ou.vbar).powi(2)
        })
        .collect();
    batch_means(&squares, BATCHES)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ou(nu: f64, rho: f64) -> OuStochVol {
        OuStochVol {
            r: 0.03,
            mu: 0.05,
            nu,
            vbar: 0.0,
            rho,
            vol: VolMap::default(),
            v0: 0.0,
        }
    }

    #[test]
    fn constant_model_ignores_time_and_state() {
        let m = MarketModel::constant(0.03, 0.05, 0.2).unwrap();
        assert_eq!(m.coefficients_at(0.0, 0.0), m.coefficients_at(17.3, -4.0));
        assert!((m.lambda_at(3.0, 1.0).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn ou_coefficients() {
        let flat = VolMap::custom(Arc::new(|_| 0.2), 0.2, 0.2).unwrap();
        let m = MarketModel::ou(OuStochVol { vol: flat, ..ou(1.0, 0.0) }).unwrap();
        let p = m.coefficients_at(0.0, 3.0);
        assert_eq!(p.sigma[(0, 0)], 0.0);
        assert!((p.sigma.row(0).norm() - 0.2).abs() < 1e-15);
        let m = MarketModel::ou(ou(1.0, 0.4)).unwrap();
        for v in [-3.0, 0.0, 0.7, 5.0] {
            let s = VolMap::default().eval(v);
            let lam = m.lambda_at(0.0, v).unwrap();
            assert!((lam * lam - 0.05f64.powi(2) / (s * s)).abs() < 1e-15);
            let snap = m.snapshot(0.0, v).unwrap();
            assert!((snap.lambda - lam).abs() < 1e-15);
        }
    }

    #[test]
    fn invalid_models() {
        assert!(MarketModel::ou(ou(0.0, 0.0)).is_err());
        assert!(MarketModel::ou(ou(1.0, 1.5)).is_err());
        assert!(VolMap::logistic(0.0, 0.5).is_err());
        assert!(MarketModel::sinusoidal(0.03, 0.05, 0.1, 0.2, 1.0, 1.0).is_err());
        assert!(MarketModel::constant(0.03, 0.05, 0.0).is_err());
    }

    #[test]
    fn periodic_depends_on_phase_only() {
        let m = MarketModel::sinusoidal(0.03, 0.05, 0.5, 0.2, 0.3, 2.0).unwrap();
        for t in [0.1, 0.77, 1.9] {
            let a = m.lambda_at(t, 0.0).unwrap();
            let b = m.lambda_at(t + 6.0, 0.0).unwrap();
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn snapshot_updates_in_place() {
        let m = MarketModel::sinusoidal(0.03, 0.05, 0.5, 0.2, 0.3, 2.0).unwrap();
        let mut snap = m.snapshot(0.0, 0.0).unwrap();
        m.update_snapshot(0.6, 0.0, &mut snap).unwrap();
        assert_eq!(snap, m.snapshot(0.6, 0.0).unwrap());
        let m = MarketModel::ou(ou(1.0, -0.3)).unwrap();
        let mut snap = m.snapshot(0.0, 0.0).unwrap();
        m.update_snapshot(0.0, 1.3, &mut snap).unwrap();
        let fresh = m.snapshot(0.0, 1.3).unwrap();
        assert!((snap.lambda - fresh.lambda).abs() < 1e-15);
        assert!((&snap.exposure - &fresh.exposure).norm() < 1e-15);
    }

    #[test]
    fn ou_step_examples() {
        let o = ou(1.5, 0.0);
        assert_eq!(o.step(o.vbar, 0.1, 0.0), o.vbar);
        let fast = OuStochVol { nu: 1e12, ..ou(1.0, 0.0) };
        assert!(fast.step(5.0, 0.1, 1.0).abs() < 1e-5);
    }

    #[test]
    fn ou_long_run_variance() {
        let o = ou(2.0, 0.0);
        let (var, se) = ou_variance_estimate(&o, 1_000_000, 0.01, 3);
        assert!((var - 0.25).abs() <= 4.0 * se, "{var} +- {se}");
    }

    #[test]
    fn ou_one_step_preserves_the_stationary_law() {
        let o = ou(1.0, 0.0);
        let sd = o.stationary_variance().sqrt();
        let mut rng = rng::stream(4, &[]);
        let mut v: Vec<f64> = (0..100_000)
            .map(|_| {
                let v0 = o.vbar + sd * rng.sample::<f64, _>(StandardNormal);
                o.step(v0, 0.3, rng.sample(StandardNormal))
            })
            .collect();
        v.sort_by(f64::total_cmp);
        let n = v.len() as f64;
        let d = v
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let c = crate::numerics::norm_cdf((x - o.vbar) / sd).unwrap();
                (c - i as f64 / n).abs().max((c - (i + 1) as f64 / n).abs())
            })
            .fold(0.0, f64::max);
        // Kolmogorov critical value at significance 1e-3.
        assert!(d < 1.949 / n.sqrt(), "KS statistic {d}");
    }

    #[test]
    fn joint_transition_matches_the_integral_covariance() {
        let m = MarketModel::ou(ou(3.0, 0.0)).unwrap();
        let (dt, n) = (0.2, 200_000);
        let mut rng = rng::stream(5, &[]);
        let (mut sxy, mut sx) = (0.0, 0.0);
        for _ in 0..n {
            let z = [rng.sample(StandardNormal), rng.sample(StandardNormal)];
            let e = [rng.sample(StandardNormal)];
            let v = m.advance_state(0.0, dt, &z, &e);
            sxy += v * z[1] * dt.sqrt();
            sx += v * v;
        }
        let nu: f64 = 3.0;
        let cov = (1.0 - (-nu * dt).exp()) / nu;
        let var = (1.0 - (-2.0 * nu * dt).exp()) / (2.0 * nu);
        assert!((sxy / n as f64 - cov).abs() < 4.0 * (var * dt / n as f64).sqrt() * 1.5);
        assert!((sx / n as f64 - var).abs() < 4.0 * var * (2.0 / n as f64).sqrt());
    }

    #[test]
    fn lambda_stays_in_the_vol_bounds() {
        let o = ou(0.5, 0.2);
        let (lo, hi) = o.vol.bounds();
        let mut rng = rng::stream(6, &[]);
        let mut v = 4.0;
        for _ in 0..100_000 {
            v = o.step(v, 0.05, rng.sample(StandardNormal));
            let lam = o.lambda(v);
            assert!(lam >= o.mu / hi - 1e-15 && lam <= o.mu / lo + 1e-15);
        }
    }

    #[test]
    fn constant_z_is_phi_of_lambda() {
        let m = MarketModel::constant(0.03, 0.05, 0.2).unwrap();
        let z = z_quadrature(&m, |x| x * x, 10).unwrap();
        let lam = m.lambda_at(0.0, 0.0).unwrap();
        assert_eq!(z.value, lam * lam);
        assert!((z.value - 0.0625).abs() < 1e-15);
        let t = z_time_average(&m, |x| x * x, 10.0, 0.1, 1).unwrap();
        assert_eq!(t.value, z.value);
        assert!(z_quadrature(&m, |x| x, 1).is_err());
    }

    #[test]
    fn ou_quadrature_normalization() {
        let m = MarketModel::ou(ou(1.0, 0.0)).unwrap();
        let z = z_quadrature(&m, |_| 1.0, 20).unwrap();
        assert!((z.value - 1.0).abs() < 1e-13);
    }

    #[test]
    fn periodic_time_average_matches_trapezoid() {
        let m = MarketModel::sinusoidal(0.03, 0.05, 0.5, 0.2, 0.3, 1.0).unwrap();
        let q = z_quadrature(&m, |x| x * x, 64).unwrap();
        assert!(q.error_estimate < 1e-12);
        // Closed form average of mu(t)^2 / sigma(t)^2 by fine midpoint sum.
        let fine: f64 = (0..100_000)
            .map(|k| {
                let w = 2.0 * PI * (k as f64 + 0.5) / 100_000.0;
                (0.05 * (1.0 + 0.5 * w.sin())).powi(2) / (0.2 * (1.0 + 0.3 * w.cos())).powi(2)
            })
            .sum::<f64>()
            / 100_000.0;
        assert!((q.value - fine).abs() < 1e-9);
        let t = z_time_average(&m, |x| x * x, 200.0, 0.01, 1).unwrap();
        assert!((t.value - q.value).abs() < 1.0 / 200.0 * q.value);
    }

    #[test]
    fn ou_time_average_matches_quadrature() {
        let m = MarketModel::ou(ou(2.0, 0.0)).unwrap();
        let q = z_quadrature(&m, |x| x * x, 50).unwrap();
        let t = z_time_average(&m, |x| x * x, 5000.0, 0.01, 11).unwrap();
        assert!((t.value - q.value).abs() <= 3.0 * t.error_estimate, "{t:?} vs {q:?}");
        assert!((t.value - q.value).abs() <= 0.02 * q.value);
    }

    #[test]
    fn time_average_error_shrinks_with_horizon() {
        let m = MarketModel::ou(ou(1.0, 0.0)).unwrap();
        let q = z_quadrature(&m, |x| x * x, 50).unwrap().value;
        // Average absolute error over seeds, horizon quadrupled.
        let err = |h: f64| -> f64 {
            (0..16)
                .map(|s| (z_time_average(&m, |x| x * x, h, 0.05, s).unwrap().value - q).abs())
                .sum::<f64>()
                / 16.0
        };
        let (e1, e4) = (err(250.0), err(1000.0));
        let ratio = e4 / e1;
        assert!(ratio > 0.25 && ratio < 0.9, "ratio {ratio}");
    }
}
