//! The Merton proportion and its projection onto the admissible set.
//!
//! Distances between proportions are measured in the volatility metric
//! `d(z1, z2) = |sigma'(z1 - z2)|`. In that metric the projection of the
//! Merton proportion `zeta_M` onto `{f(zeta' mu, |zeta' sigma|) <= h}` is the
//! rescaled vector `beta * zeta_M`, so every constrained optimum reduces to a
//! scalar root of `g(beta) = f(beta lambda^2, beta lambda)`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;

use crate::constraints::{ConstraintPair, ConstraintSetQuery};
use crate::error::{domain, Error, Result};
use crate::numerics::{solve_increasing_root, solve_increasing_root_newton, RootBracket};
use crate::risk::RiskMeasure;
use crate::rng;

/// Largest accepted condition number of `sigma sigma'`.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct MertonData {
    pub zeta_m: DVector<f64>,
    /// `|zeta_M' sigma|`, the market price of risk.
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionResult {
    pub beta: f64,
    pub zeta_proj: DVector<f64>,
    pub binding: bool,
}

/// Solves `sigma sigma' zeta = mu`.
pub fn merton_proportion(mu: &DVector<f64>, sigma: &DMatrix<f64>) -> Result<MertonData> {
    let n = mu.len();
    if n == 0 || sigma.nrows() != n {
        return Err(domain(format!(
            "mu has {n} entries but sigma has {} rows",
            sigma.nrows()
        )));
    }
    if !mu.iter().chain(sigma.iter()).all(|v| v.is_finite()) {
        return Err(domain("market coefficients must be finite"));
    }
    let a = sigma * sigma.transpose();
    let eig = a.clone().symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    if !(lo > 0.0) || hi / lo > MAX_CONDITION {
        return Err(Error::Singular(format!(
            "sigma sigma' has eigenvalues in [{lo:e}, {hi:e}]"
        )));
    }
    let chol = a
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular("sigma sigma' is not positive definite".into()))?;
    let mut zeta_m = chol.solve(mu);
    // One refinement step keeps the residual at working precision.
    let residual = mu - &a * &zeta_m;
    zeta_m += chol.solve(&residual);
    let residual = (mu - &a * &zeta_m).norm();
    if residual > 1e-10 * mu.norm().max(f64::MIN_POSITIVE) && residual > 0.0 {
        return Err(Error::Singular(format!("residual {residual:e} after refinement")));
    }
    let lambda = (sigma.transpose() * &zeta_m).norm();
    Ok(MertonData { zeta_m, lambda })
}

/// `|sigma'(zeta1 - zeta2)|`.
pub fn d_sigma(zeta1: &DVector<f64>, zeta2: &DVector<f64>, sigma: &DMatrix<f64>) -> Result<f64> {
    if zeta1.len() != zeta2.len() || zeta1.len() != sigma.nrows() {
        return Err(domain(format!(
            "dimensions {} and {} against {} rows",
            zeta1.len(),
            zeta2.len(),
            sigma.nrows()
        )));
    }
    Ok((sigma.transpose() * (zeta1 - zeta2)).norm())
}

/// Log-wealth drift `r + zeta' mu - |zeta' sigma|^2 / 2`.
pub fn growth_drift(r: f64, zeta_mu: f64, zeta_sigma: f64) -> f64 {
    r + zeta_mu - 0.5 * zeta_sigma * zeta_sigma
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda >= 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(domain(format!("lambda must be finite and nonnegative, got {lambda}")))
    }
}

/// Root of `g = hval` on `[0, hi]` where `g(0) <= hval < g(hi)`.
fn crossing(pair: &ConstraintPair, lambda: f64, hval: f64, hi: f64) -> Result<f64> {
    let g0 = pair.g_eval(lambda, 0.0);
    if g0 > hval {
        return Err(domain(format!(
            "empty admissible set: f(0,0) = {g0} exceeds h = {hval}"
        )));
    }
    let bracket = RootBracket::with_tolerances(0.0, hi, 1e-14, 1e-15, 400)?;
    let root = if let Some(b) = var_root(pair, lambda, hval) {
        b
    } else if pair.g_with_derivative(lambda, 1.0).is_some() {
        let fdf = |b: f64| {
            let (g, dg) = pair.g_with_derivative(lambda, b).expect("analytic gradient");
            (g - hval, dg)
        };
        solve_increasing_root_newton(fdf, &bracket, 0.5 * hi)?
    } else {
        solve_increasing_root(|b| pair.g_eval(lambda, b) - hval, &bracket)?
    };
    Ok(admissible_side(pair, lambda, hval, root.min(hi)))
}

/// For VaR, `g` is the quadratic `a b^2 + c b + d` with `a > 0 > d - hval`.
fn var_root(pair: &ConstraintPair, lambda: f64, hval: f64) -> Option<f64> {
    if pair.measure()? != RiskMeasure::VaR {
        return None;
    }
    let p = pair.params()?;
    let tau = p.tau();
    let a = 0.5 * tau * lambda * lambda;
    let mb = tau * lambda * lambda + p.z_alpha() * tau.sqrt() * lambda;
    let c = -p.r() * tau - hval;
    let disc = (mb * mb - 4.0 * a * c).sqrt();
    Some(if mb >= 0.0 {
        (mb + disc) / (2.0 * a)
    } else {
        2.0 * c / (mb - disc)
    })
}

/// Steps down from `b` until `g(b) <= hval`.
fn admissible_side(pair: &ConstraintPair, lambda: f64, hval: f64, mut b: f64) -> f64 {
    let mut step = b * f64::EPSILON;
    for _ in 0..200 {
        if pair.g_eval(lambda, b) <= hval {
            return b;
        }
        b = (b - step).max(0.0);
        step *= 2.0;
    }
    b
}

/// The scaling `beta in (0, 1]` of the projection at level `hval`.
pub fn beta_of(pair: &ConstraintPair, lambda: f64, hval: f64) -> Result<f64> {
    check_lambda(lambda)?;
    if hval.is_nan() {
        return Err(domain("h is NaN"));
    }
    if hval == f64::INFINITY || lambda == 0.0 || pair.g_eval(lambda, 1.0) <= hval {
        return Ok(1.0);
    }
    crossing(pair, lambda, hval, 1.0)
}

/// Unclipped root of `g(beta) = hval` on `[0, inf)`; the bracket is doubled
/// from 1 until `g` exceeds the level.
pub fn scaling_root(pair: &ConstraintPair, lambda: f64, hval: f64) -> Result<f64> {
    check_lambda(lambda)?;
    if !hval.is_finite() || lambda == 0.0 {
        return Ok(f64::INFINITY);
    }
    let mut hi = 1.0;
    while pair.g_eval(lambda, hi) <= hval {
        hi *= 2.0;
        if hi > 1e300 {
            return Err(Error::Convergence {
                iterations: 1000,
                lo: 0.0,
                hi,
            });
        }
    }
    crossing(pair, lambda, hval, hi)
}

/// `beta` at level zero: the scaling that makes the risk measure vanish.
pub fn delta(pair: &ConstraintPair, lambda: f64) -> Result<f64> {
    beta_of(pair, lambda, 0.0)
}

/// `beta` at wealth `x`.
pub fn delta_star(pair: &ConstraintPair, lambda: f64, x: f64) -> Result<f64> {
    beta_of(pair, lambda, pair.h_eval(x)?)
}

/// `beta` at `inf_x h`, the large-wealth limit of [`delta_star`]. Equals
/// [`delta`] for absolute limits and the constant scaling for relative ones.
pub fn limiting_beta(pair: &ConstraintPair, lambda: f64) -> Result<f64> {
    beta_of(pair, lambda, pair.h_limit())
}

pub fn project_merton(pair: &ConstraintPair, query: &ConstraintSetQuery) -> Result<ProjectionResult> {
    let merton = merton_proportion(&query.mu, &query.sigma)?;
    let mut beta = beta_of(pair, merton.lambda, pair.h_eval(query.wealth)?)?;
    let mut zeta_proj = &merton.zeta_m * beta;
    if beta < 1.0 {
        // g and f(zeta' mu, |zeta' sigma|) round differently near the boundary.
        let mut step = beta * f64::EPSILON;
        while !pair.is_admissible(query, &zeta_proj)? && beta > 0.0 {
            beta = (beta - step).max(0.0);
            step *= 2.0;
            zeta_proj = &merton.zeta_m * beta;
        }
    }
    Ok(ProjectionResult {
        beta,
        zeta_proj,
        binding: beta < 1.0,
    })
}

/// Brute-force projection of `zeta_M` onto the admissible set, without using
/// collinearity.
///
/// The set is star-shaped about the origin, so its boundary is the graph of
/// the exit distance `t(u)` along each unit direction `u`, found by plain
/// bisection. The distance `|sigma'(t(u) u - zeta_M)|` is minimized over the
/// sphere by Nelder-Mead in gnomonic charts from several starts.
pub fn oracle_project(pair: &ConstraintPair, query: &ConstraintSetQuery, seed: u64) -> Result<DVector<f64>> {
    let merton = merton_proportion(&query.mu, &query.sigma)?;
    if pair.is_admissible(query, &merton.zeta_m)? {
        return Ok(merton.zeta_m);
    }
    let h = pair.h_eval(query.wealth)?;
    if !h.is_finite() {
        return Ok(merton.zeta_m);
    }
    let n = query.mu.len();
    let sigma_t = query.sigma.transpose();
    let exit = |u: &DVector<f64>| -> f64 {
        let (m, s) = (u.dot(&query.mu), (&sigma_t * u).norm());
        let outside = |t: f64| pair.f(t * m, t * s) > h;
        let mut hi = 1.0;
        while !outside(hi) {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..1100 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if outside(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        lo
    };
    let point = |u: &DVector<f64>| u * exit(u);
    let cost = |u: &DVector<f64>| (&sigma_t * (point(u) - &merton.zeta_m)).norm();

    if n == 1 {
        let (p, q) = (DVector::from_element(1, 1.0), DVector::from_element(1, -1.0));
        let best = if cost(&p) <= cost(&q) { p } else { q };
        return Ok(point(&best));
    }

    let mut starts: Vec<DVector<f64>> = Vec::new();
    for i in 0..n {
        for sign in [1.0, -1.0] {
            let mut e = DVector::zeros(n);
            e[i] = sign;
            starts.push(e);
        }
    }
    let mut rng = rng::stream(seed, &[0x0ac1e, n as u64]);
    for _ in 0..8 {
        let v = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        if v.norm() > 1e-3 {
            starts.push(v.normalize());
        }
    }

    let mut best: Option<(f64, DVector<f64>)> = None;
    for start in starts {
        let mut center = start;
        let mut step = 0.5;
        let mut value = cost(&center);
        for _ in 0..6 {
            let (u, v) = chart_minimize(&cost, &center, step);
            center = u;
            value = v;
            step *= 0.05;
        }
        if best.as_ref().is_none_or(|(b, _)| value < *b) {
            best = Some((value, center));
        }
    }
    let (_, u) = best.expect("at least one start");
    Ok(point(&u))
}

/// Nelder-Mead on the tangent chart `y -> normalize(c + E y)`.
fn chart_minimize<F>(cost: &F, center: &DVector<f64>, step: f64) -> (DVector<f64>, f64)
where
    F: Fn(&DVector<f64>) -> f64,
{
    let n = center.len();
    let basis = tangent_basis(center);
    let lift = |y: &DVector<f64>| (center + &basis * y).normalize();
    let objective = |y: &DVector<f64>| cost(&lift(y));
    let (y, v) = nelder_mead(&objective, n - 1, step);
    (lift(&y), v)
}

/// Orthonormal basis (as columns) of the complement of unit vector `c`.
fn tangent_basis(c: &DVector<f64>) -> DMatrix<f64> {
    let n = c.len();
    let mut cols: Vec<DVector<f64>> = vec![c.clone()];
    for i in 0..n {
        let mut v = DVector::zeros(n);
        v[i] = 1.0;
        for q in &cols {
            let proj = q.dot(&v);
            v -= q * proj;
        }
        if v.norm() > 1e-8 {
            cols.push(v.normalize());
        }
        if cols.len() == n {
            break;
        }
    }
    DMatrix::from_columns(&cols[1..])
}

fn nelder_mead<F>(f: &F, dim: usize, step: f64) -> (DVector<f64>, f64)
where
    F: Fn(&DVector<f64>) -> f64,
{
    let mut simplex: Vec<(DVector<f64>, f64)> = (0..=dim)
        .map(|k| {
            let mut y = DVector::zeros(dim);
            if k > 0 {
                y[k - 1] = step;
            }
            let v = f(&y);
            (y, v)
        })
        .collect();
    for _ in 0..4000 {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (lo, hi) = (simplex[0].1, simplex[dim].1);
        let size = simplex
            .iter()
            .map(|(y, _)| (y - &simplex[0].0).norm())
            .fold(0.0, f64::max);
        if hi - lo <= 1e-16 * (1.0 + lo.abs()) && size < 1e-10 || size < 1e-13 {
            break;
        }
        let centroid = simplex[..dim]
            .iter()
            .fold(DVector::zeros(dim), |acc, (y, _)| acc + y)
            / dim as f64;
        let worst = simplex[dim].0.clone();
        let at = |t: f64| &centroid + (&worst - &centroid) * t;
        let reflected = at(-1.0);
        let fr = f(&reflected);
        if fr < simplex[0].1 {
            let expanded = at(-2.0);
            let fe = f(&expanded);
            simplex[dim] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
        } else if fr < simplex[dim - 1].1 {
            simplex[dim] = (reflected, fr);
        } else {
            let contracted = if fr < hi { at(-0.5) } else { at(0.5) };
            let fc = f(&contracted);
            if fc < hi.min(fr) {
                simplex[dim] = (contracted, fc);
            } else {
                let best = simplex[0].0.clone();
                for (y, v) in simplex.iter_mut().skip(1) {
                    *y = &best + (&*y - &best) * 0.5;
                    *v = f(y);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    simplex.swap_remove(0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LipschitzReport {
    pub pairs_checked: usize,
    /// Largest `|beta(x1) - beta(x2)| / |ln x1 - ln x2|` observed.
    pub max_ratio: f64,
    /// `(lambda, x1, x2)` attaining `max_ratio`.
    pub worst: Option<(f64, f64, f64)>,
    /// Ratio not finite or above `ratio_cap`.
    pub blowup: bool,
}

/// Empirical Lipschitz constant of `ln x -> beta` at each `lambda`.
pub fn lipschitz_report(
    pair: &ConstraintPair,
    lambdas: &[f64],
    wealth_pairs: &[(f64, f64)],
    ratio_cap: f64,
) -> Result<LipschitzReport> {
    let mut report = LipschitzReport {
        pairs_checked: 0,
        max_ratio: 0.0,
        worst: None,
        blowup: false,
    };
    for &lambda in lambdas {
        for &(x1, x2) in wealth_pairs {
            if let Some(x0) = pair.wealth_threshold() {
                if x1 <= x0 || x2 <= x0 {
                    return Err(domain(format!("wealths must exceed {x0}")));
                }
            }
            let b1 = delta_star(pair, lambda, x1)?;
            let b2 = delta_star(pair, lambda, x2)?;
            let dy = (x1.ln() - x2.ln()).abs();
            let ratio = if dy == 0.0 { 0.0 } else { (b1 - b2).abs() / dy };
            report.pairs_checked += 1;
            if !ratio.is_finite() || ratio > ratio_cap {
                report.blowup = true;
            }
            if ratio > report.max_ratio || !ratio.is_finite() {
                report.max_ratio = ratio;
                report.worst = Some((lambda, x1, x2));
            }
        }
    }
    Ok(report)
}
