//! Special functions, scalar root finding and Gauss-Hermite quadrature.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{domain, Error, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Below this point `erfc` loses relative precision and the tail series takes over.
const ASYMPTOTIC_TAIL: f64 = -35.0;

/// Standard normal CDF, absolute error below 1e-14.
pub fn norm_cdf(z: f64) -> Result<f64> {
    if !z.is_finite() {
        return Err(domain(format!("norm_cdf of non-finite argument {z}")));
    }
    Ok(cdf(z))
}

#[inline]
pub(crate) fn cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * FRAC_1_SQRT_2)
}

#[inline]
pub fn norm_pdf(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

/// `1 - 1/z^2 + 3/z^4 - 15/z^6 + ...`, the correction factor in
/// `N(z) ~ pdf(z) / |z| * series` for large negative `z`.
fn tail_series(z: f64) -> f64 {
    let u = 1.0 / (z * z);
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..=7 {
        term *= -((2 * k - 1) as f64) * u;
        sum += term;
    }
    sum
}

/// `ln N(z)`, finite for every finite `z`.
pub fn log_norm_cdf(z: f64) -> f64 {
    if z < ASYMPTOTIC_TAIL {
        -0.5 * z * z - (-z).ln() - LN_SQRT_2PI + tail_series(z).ln()
    } else if z > 0.0 {
        (-cdf(-z)).ln_1p()
    } else {
        cdf(z).ln()
    }
}

/// `pdf(z) / N(z)`, the derivative of [`log_norm_cdf`].
pub fn inverse_mills(z: f64) -> f64 {
    if z < ASYMPTOTIC_TAIL {
        -z / tail_series(z)
    } else {
        norm_pdf(z) / cdf(z)
    }
}

/// Inverse of the standard normal CDF (Wichura's AS 241, PPND16).
pub fn norm_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(domain(format!("norm_quantile requires p in (0, 1), got {p}")));
    }
    Ok(quantile(p))
}

pub(crate) fn quantile(p: f64) -> f64 {
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        let num = (((((((2.509_080_928_730_122_7e3 * r + 3.343_057_558_358_813e4) * r
            + 6.726_577_092_700_87e4)
            * r
            + 4.592_195_393_154_987e4)
            * r
            + 1.373_169_376_550_946e4)
            * r
            + 1.971_590_950_306_551_3e3)
            * r
            + 1.331_416_678_917_843_8e2)
            * r
            + 3.387_132_872_796_366_5)
            * q;
        let den = ((((((5.226_495_278_852_854e3 * r + 2.872_908_573_572_194_3e4) * r
            + 3.930_789_580_009_271e4)
            * r
            + 2.121_379_430_158_659_7e4)
            * r
            + 5.394_196_021_424_751e3)
            * r
            + 6.871_870_074_920_579e2)
            * r
            + 4.231_333_070_160_091e1)
            * r
            + 1.0;
        return num / den;
    }

    let tail = if q < 0.0 { p } else { 1.0 - p };
    let mut r = (-tail.ln()).sqrt();
    let x = if r <= 5.0 {
        r -= 1.6;
        let num = ((((((7.745_450_142_783_414e-4 * r + 2.272_384_498_926_918_4e-2) * r
            + 2.417_807_251_774_506e-1)
            * r
            + 1.270_458_252_452_368_4)
            * r
            + 3.647_848_324_763_204_5)
            * r
            + 5.769_497_221_460_691)
            * r
            + 4.630_337_846_156_545)
            * r
            + 1.423_437_110_749_683_5;
        let den = ((((((1.050_750_071_644_416_8e-9 * r + 5.475_938_084_995_345e-4) * r
            + 1.519_866_656_361_645_7e-2)
            * r
            + 1.481_039_764_274_800_8e-1)
            * r
            + 6.897_673_349_851e-1)
            * r
            + 1.676_384_830_183_803_8)
            * r
            + 2.053_191_626_637_759)
            * r
            + 1.0;
        num / den
    } else {
        r -= 5.0;
        let num = ((((((2.010_334_399_292_288e-7 * r + 2.711_555_568_743_487_6e-5) * r
            + 1.242_660_947_388_078_4e-3)
            * r
            + 2.653_218_952_657_612_4e-2)
            * r
            + 2.965_605_718_285_049e-1)
            * r
            + 1.784_826_539_917_291_3)
            * r
            + 5.463_784_911_164_114)
            * r
            + 6.657_904_643_501_103;
        let den = ((((((2.044_263_103_389_939_7e-15 * r + 1.421_511_758_316_446e-7) * r
            + 1.846_318_317_510_054_8e-5)
            * r
            + 7.868_691_311_456_133e-4)
            * r
            + 1.487_536_129_085_061_5e-2)
            * r
            + 1.369_298_809_227_358e-1)
            * r
            + 5.998_322_065_558_88e-1)
            * r
            + 1.0;
        num / den
    };
    if q < 0.0 {
        -x
    } else {
        x
    }
}

/// Search interval and stopping rule for the scalar root finders.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootBracket {
    pub lo: f64,
    pub hi: f64,
    pub tol_abs: f64,
    pub tol_rel: f64,
    pub max_iter: usize,
}

impl RootBracket {
    pub const DEFAULT_TOL_ABS: f64 = 1e-12;
    pub const DEFAULT_TOL_REL: f64 = 1e-12;
    pub const DEFAULT_MAX_ITER: usize = 200;

    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        Self::with_tolerances(
            lo,
            hi,
            Self::DEFAULT_TOL_ABS,
            Self::DEFAULT_TOL_REL,
            Self::DEFAULT_MAX_ITER,
        )
    }

    pub fn with_tolerances(
        lo: f64,
        hi: f64,
        tol_abs: f64,
        tol_rel: f64,
        max_iter: usize,
    ) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(domain(format!("invalid bracket [{lo}, {hi}]")));
        }
        if !(tol_abs > 0.0 && tol_rel > 0.0) {
            return Err(domain("root tolerances must be positive"));
        }
        if max_iter == 0 {
            return Err(domain("max_iter must be at least 1"));
        }
        Ok(Self {
            lo,
            hi,
            tol_abs,
            tol_rel,
            max_iter,
        })
    }

    fn width_converged(&self, lo: f64, hi: f64) -> bool {
        let mid = 0.5 * (lo + hi);
        hi - lo <= self.tol_rel * lo.abs().max(hi.abs()) || mid <= lo || mid >= hi
    }
}

fn check_bracket(b: &RootBracket, f_lo: f64, f_hi: f64) -> Result<()> {
    if f_lo <= 0.0 && f_hi >= 0.0 {
        Ok(())
    } else {
        Err(Error::Bracket {
            lo: b.lo,
            hi: b.hi,
            f_lo,
            f_hi,
        })
    }
}

/// Root of a continuous increasing function with `f(lo) <= 0 <= f(hi)`.
///
/// Illinois false-position steps, with a bisection whenever two steps fail
/// to halve the bracket. Stops when `|f(x)| <= tol_abs` or the bracket is
/// narrower than `tol_rel * |x|`.
pub fn solve_increasing_root<F>(f: F, bracket: &RootBracket) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let (mut lo, mut hi) = (bracket.lo, bracket.hi);
    let (mut f_lo, mut f_hi) = (f(lo), f(hi));
    check_bracket(bracket, f_lo, f_hi)?;
    if f_lo.abs() <= bracket.tol_abs {
        return Ok(lo);
    }
    if f_hi.abs() <= bracket.tol_abs {
        return Ok(hi);
    }

    // Illinois bookkeeping: which end was retained on the previous step.
    let mut retained = 0i8;
    let mut widths = [hi - lo; 2];
    for iter in 0..bracket.max_iter {
        let width = hi - lo;
        let stalled = iter >= 2 && width > 0.5 * widths[iter % 2];
        widths[iter % 2] = width;

        let mut x = (lo * f_hi - hi * f_lo) / (f_hi - f_lo);
        if stalled || !(x > lo && x < hi) {
            x = 0.5 * (lo + hi);
        }
        let fx = f(x);
        if fx.is_nan() {
            return Err(domain(format!("root function returned NaN at {x}")));
        }
        if fx.abs() <= bracket.tol_abs {
            return Ok(x);
        }
        if fx < 0.0 {
            lo = x;
            f_lo = fx;
            if retained == 1 {
                f_hi *= 0.5;
            }
            retained = 1;
        } else {
            hi = x;
            f_hi = fx;
            if retained == -1 {
                f_lo *= 0.5;
            }
            retained = -1;
        }
        if bracket.width_converged(lo, hi) {
            return Ok(x);
        }
    }
    Err(Error::Convergence {
        iterations: bracket.max_iter,
        lo,
        hi,
    })
}

/// Newton-accelerated variant of [`solve_increasing_root`]; `fdf` returns
/// the value and the derivative. A Newton step that leaves the current
/// bracket, or shrinks it too slowly, is replaced by a bisection.
pub fn solve_increasing_root_newton<F>(fdf: F, bracket: &RootBracket, start: f64) -> Result<f64>
where
    F: Fn(f64) -> (f64, f64),
{
    let (mut lo, mut hi) = (bracket.lo, bracket.hi);
    let (f_lo, _) = fdf(lo);
    let (f_hi, _) = fdf(hi);
    check_bracket(bracket, f_lo, f_hi)?;
    if f_lo.abs() <= bracket.tol_abs {
        return Ok(lo);
    }
    if f_hi.abs() <= bracket.tol_abs {
        return Ok(hi);
    }

    let mut x = if start > lo && start < hi {
        start
    } else {
        0.5 * (lo + hi)
    };
    let mut step_before_last = hi - lo;
    let mut last_step = step_before_last;
    for _ in 0..bracket.max_iter {
        let (fx, dfx) = fdf(x);
        if fx.is_nan() {
            return Err(domain(format!("root function returned NaN at {x}")));
        }
        if fx.abs() <= bracket.tol_abs {
            return Ok(x);
        }
        if fx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        if bracket.width_converged(lo, hi) {
            return Ok(x);
        }

        let newton = x - fx / dfx;
        let usable = dfx > 0.0
            && newton > lo
            && newton < hi
            && (fx / dfx).abs() < 0.5 * step_before_last.abs();
        step_before_last = last_step;
        let next = if usable { newton } else { 0.5 * (lo + hi) };
        last_step = next - x;
        x = next;
    }
    Err(Error::Convergence {
        iterations: bracket.max_iter,
        lo,
        hi,
    })
}

/// Gauss-Hermite rule for the weight `exp(-x^2)`.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(domain(format!("Gauss-Hermite needs at least 2 nodes, got {n}")));
        }
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        let pim4 = PI.powf(-0.25);
        let mut z = 0.0f64;
        for i in 0..n.div_ceil(2) {
            z = match i {
                0 => (2.0 * nf + 1.0).sqrt() - 1.855_75 * (2.0 * nf + 1.0).powf(-0.166_67),
                1 => z - 1.14 * nf.powf(0.426) / z,
                2 => 1.86 * z - 0.86 * nodes[0],
                3 => 1.91 * z - 0.91 * nodes[1],
                _ => 2.0 * z - nodes[i - 2],
            };
            let mut pp = 0.0;
            let mut converged = false;
            for _ in 0..100 {
                // Orthonormal Hermite recurrence.
                let mut p1 = pim4;
                let mut p2 = 0.0;
                for j in 1..=n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
                }
                pp = (2.0 * nf).sqrt() * p2;
                let z_prev = z;
                z = z_prev - p1 / pp;
                if (z - z_prev).abs() <= 1e-15 * z.abs().max(1.0) {
                    converged = true;
                    break;
                }
            }
            if !converged {
                return Err(Error::Convergence {
                    iterations: 100,
                    lo: z,
                    hi: z,
                });
            }
            nodes[i] = z;
            nodes[n - 1 - i] = -z;
            weights[i] = 2.0 / (pp * pp);
            weights[n - 1 - i] = weights[i];
        }
        Ok(Self { nodes, weights })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `E[phi(X)]` for `X ~ N(mean, 1 / (2 * concentration))`, i.e. the
    /// density `sqrt(c / pi) * exp(-c (x - mean)^2)`.
    pub fn expectation<F>(&self, phi: F, mean: f64, concentration: f64) -> Result<f64>
    where
        F: Fn(f64) -> f64,
    {
        if !(concentration > 0.0 && concentration.is_finite()) {
            return Err(domain(format!(
                "concentration must be positive and finite, got {concentration}"
            )));
        }
        let scale = concentration.sqrt().recip();
        let sum: f64 = self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * phi(mean + x * scale))
            .sum();
        Ok(sum / PI.sqrt())
    }
}

/// One-shot [`GaussHermite::expectation`].
pub fn gauss_expectation<F>(phi: F, mean: f64, concentration: f64, nodes: usize) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if !(concentration > 0.0) {
        return Err(domain(format!(
            "concentration must be positive, got {concentration}"
        )));
    }
    GaussHermite::new(nodes)?.expectation(phi, mean, concentration)
}

#[cfg(test)]
#[allow(clippy::excessive_precision)]
mod tests {
    use super::*;

    // 50-digit values from tests/reference/gen_reference.py
    const CDF_REFERENCE: &[(f64, f64)] = &[
        (-1.6448536269514722, 0.050000000000000053101),
        (-8.0, 6.2209605742717841235e-16),
        (-6.0, 9.865876450376981407e-10),
        (-3.5, 0.00023262907903552503635),
        (-1.0, 0.15865525393145705141),
        (-0.3, 0.38208857781104736269),
        (0.7, 0.75803634777692698525),
        (1.3, 0.90319951541438966685),
        (2.5, 0.99379033467422386483),
        (5.0, 0.99999971334842812081),
        (8.0, 0.9999999999999993779),
    ];

    const QUANTILE_REFERENCE: &[(f64, f64)] = &[
        (0.05, -1.644853626951472688),
        (1e-10, -6.3613409024040561991),
        (0.001, -3.0902323061678135354),
        (0.2, -0.84162123357291416552),
        (0.975, 1.9599639845400538556),
        (0.999999, 4.7534243088170877657),
    ];

    #[test]
    fn cdf_matches_high_precision_values() {
        for &(z, expected) in CDF_REFERENCE {
            let got = norm_cdf(z).unwrap();
            assert!((got - expected).abs() <= 1e-14, "z={z}: {got} vs {expected}");
        }
        assert_eq!(norm_cdf(0.0).unwrap(), 0.5);
        assert!(norm_cdf(8.0).unwrap() > 1.0 - 1e-14);
    }

    #[test]
    fn cdf_rejects_non_finite() {
        assert!(matches!(norm_cdf(f64::NAN), Err(Error::Domain(_))));
        assert!(matches!(norm_cdf(f64::INFINITY), Err(Error::Domain(_))));
    }

    #[test]
    fn quantile_matches_high_precision_values() {
        for &(p, expected) in QUANTILE_REFERENCE {
            let got = norm_quantile(p).unwrap();
            assert!(
                (got - expected).abs() <= 1e-13 * expected.abs().max(1.0),
                "p={p}: {got} vs {expected}"
            );
        }
        assert_eq!(norm_quantile(0.5).unwrap(), 0.0);
    }

    #[test]
    fn quantile_agrees_with_bisection_on_cdf() {
        // Independent route: bisect the CDF down to 1e-14.
        let bisect = |p: f64| {
            let (mut lo, mut hi) = (-10.0, 10.0);
            while hi - lo > 1e-14 {
                let mid = 0.5 * (lo + hi);
                if cdf(mid) < p {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        };
        let oracle = bisect(0.05);
        assert!((oracle - -1.6448536269514722).abs() < 2e-14);
        for p in [0.01, 0.05, 0.1, 0.3, 0.5, 0.77, 0.95] {
            assert!((norm_quantile(p).unwrap() - bisect(p)).abs() < 5e-14, "p={p}");
        }
    }

    #[test]
    fn quantile_rejects_out_of_range() {
        for p in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(norm_quantile(p).is_err(), "p={p}");
        }
    }

    #[test]
    fn round_trip_on_dense_grid() {
        let mut prev = 0.0;
        for i in 0..=1600 {
            let z = -8.0 + i as f64 * 0.01;
            let p = norm_cdf(z).unwrap();
            assert!(p > 0.0 && p < 1.0);
            assert!(p >= prev, "cdf not monotone at {z}");
            prev = p;
            if z.abs() <= 6.0 {
                // Above the median p is stored next to 1, so an f64 p only
                // pins z down to about eps / pdf(z).
                let conditioning = if z > 0.0 { 2.0 * f64::EPSILON / norm_pdf(z) } else { 0.0 };
                let back = norm_quantile(p).unwrap();
                assert!(
                    (back - z).abs() <= 1e-12 * z.abs().max(1.0) + conditioning,
                    "z={z} back={back}"
                );
            }
        }
        assert!((norm_quantile(norm_cdf(1.3).unwrap()).unwrap() - 1.3).abs() < 1e-12);
    }

    #[test]
    fn log_cdf_is_continuous_across_the_tail_switch() {
        let below = log_norm_cdf(ASYMPTOTIC_TAIL - 1e-9);
        let above = log_norm_cdf(ASYMPTOTIC_TAIL + 1e-9);
        assert!((below - above).abs() < 1e-6);
        let m_below = inverse_mills(ASYMPTOTIC_TAIL - 1e-9);
        let m_above = inverse_mills(ASYMPTOTIC_TAIL + 1e-9);
        assert!((m_below - m_above).abs() / m_above < 1e-10);
        assert!(log_norm_cdf(-1e3).is_finite());
        assert!((log_norm_cdf(-1.0) - 0.15865525393145705141f64.ln()).abs() < 1e-14);
        assert!(log_norm_cdf(10.0) < 0.0);
    }

    #[test]
    fn linear_and_quadratic_roots() {
        let b = RootBracket::new(0.0, 5.0).unwrap();
        let x = solve_increasing_root(|x| x - 2.0, &b).unwrap();
        assert!((x - 2.0).abs() < 1e-12);

        let b = RootBracket::new(0.0, 2.0).unwrap();
        let x = solve_increasing_root(|x| x * x - 2.0, &b).unwrap();
        assert!((x - std::f64::consts::SQRT_2).abs() < 1e-12);
        let x = solve_increasing_root_newton(|x| (x * x - 2.0, 2.0 * x), &b, 1.9).unwrap();
        assert!((x - std::f64::consts::SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn sign_violation_is_a_bracket_error() {
        let b = RootBracket::new(3.0, 5.0).unwrap();
        assert!(matches!(
            solve_increasing_root(|x| x - 2.0, &b),
            Err(Error::Bracket { .. })
        ));
        assert!(matches!(
            solve_increasing_root_newton(|x| (x - 2.0, 1.0), &b, 4.0),
            Err(Error::Bracket { .. })
        ));
    }

    #[test]
    fn iteration_cap_is_a_convergence_error() {
        let b = RootBracket::with_tolerances(0.0, 1.0, 1e-300, 1e-300, 1).unwrap();
        assert!(matches!(
            solve_increasing_root(|x| x.powi(9) - 0.3, &b),
            Err(Error::Convergence { .. })
        ));
    }

    #[test]
    fn bracket_validation() {
        assert!(RootBracket::new(1.0, 1.0).is_err());
        assert!(RootBracket::new(2.0, 1.0).is_err());
        assert!(RootBracket::with_tolerances(0.0, 1.0, 0.0, 1e-12, 10).is_err());
        assert!(RootBracket::with_tolerances(0.0, 1.0, 1e-12, 1e-12, 0).is_err());
    }

    #[test]
    fn newton_falls_back_when_steps_leave_the_bracket() {
        // Very flat left part: raw Newton from 0.01 would jump far outside [0, 3].
        let f = |x: f64| (x.powi(5) - 1.0, 5.0 * x.powi(4));
        let b = RootBracket::new(0.0, 3.0).unwrap();
        let x = solve_increasing_root_newton(f, &b, 0.01).unwrap();
        assert!((x - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gauss_hermite_moments() {
        for (mean, conc) in [(0.0, 1.0), (1.5, 0.3), (-2.0, 7.0)] {
            let one = gauss_expectation(|_| 1.0, mean, conc, 10).unwrap();
            assert!((one - 1.0).abs() < 1e-13);
            let m1 = gauss_expectation(|x| x, mean, conc, 10).unwrap();
            assert!((m1 - mean).abs() < 1e-12);
        }
        let var = gauss_expectation(|x| x * x, 0.0, 1.0, 10).unwrap();
        assert!((var - 0.5).abs() < 1e-13);
    }

    #[test]
    fn gauss_hermite_exact_to_degree_2n_minus_1() {
        // E[(s Z)^k] = s^k (k-1)!! for even k, 0 for odd k.
        for n in [2usize, 5, 12, 30] {
            let rule = GaussHermite::new(n).unwrap();
            let conc: f64 = 0.8;
            let s = (1.0 / (2.0 * conc)).sqrt();
            for k in 0..(2 * n) {
                // Odd moments vanish; compare them against the size of the
                // neighbouring even moment.
                let even = k + k % 2;
                let dfact: f64 = (1..even).step_by(2).map(|j| j as f64).product();
                let scale = s.powi(even as i32) * dfact;
                let exact = if k % 2 == 1 { 0.0 } else { scale };
                let got = rule.expectation(|x| x.powi(k as i32), 0.0, conc).unwrap();
                assert!(
                    (got - exact).abs() <= 1e-12 * scale.max(1.0),
                    "n={n} k={k}: {got} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn gauss_hermite_domain_errors() {
        assert!(gauss_expectation(|x| x, 0.0, 0.0, 10).is_err());
        assert!(gauss_expectation(|x| x, 0.0, -1.0, 10).is_err());
        assert!(GaussHermite::new(1).is_err());
        assert_eq!(GaussHermite::new(50).unwrap().len(), 50);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(1000))]

            #[test]
            fn root_has_small_residual(
                root in -50.0f64..50.0,
                slope in 0.05f64..20.0,
                cubic in 0.0f64..5.0,
                bend in 0.0f64..3.0,
                left in 0.1f64..40.0,
                right in 0.1f64..40.0,
            ) {
                let f = |x: f64| {
                    let d = x - root;
                    slope * d + cubic * d * d * d + bend * d.tanh()
                };
                let df = |x: f64| {
                    let d = x - root;
                    slope + 3.0 * cubic * d * d + bend / d.cosh().powi(2)
                };
                // With the default relative width stop the residual is only
                // bounded by slope * tol_rel * |x|.
                let default = RootBracket::new(root - left, root + right).unwrap();
                let x = solve_increasing_root(f, &default).unwrap();
                prop_assert!(
                    f(x).abs() <= default.tol_abs
                        || f(x).abs() <= df(x) * 2.0 * default.tol_rel * x.abs().max(1.0)
                );

                // A width stop at the rounding level leaves only the residual test.
                let b = RootBracket::with_tolerances(root - left, root + right, 1e-12, 1e-16, 200).unwrap();
                let x = solve_increasing_root(f, &b).unwrap();
                prop_assert!(f(x).abs() <= b.tol_abs, "residual {} at {}", f(x), x);
                let y = solve_increasing_root_newton(|x| (f(x), df(x)), &b, root - 0.5 * left).unwrap();
                prop_assert!(f(y).abs() <= b.tol_abs, "newton residual {} at {}", f(y), y);
                prop_assert_eq!(x, solve_increasing_root(f, &b).unwrap());
            }
        }
    }
}
