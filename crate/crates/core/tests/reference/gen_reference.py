"""Reference values for the numerics and risk tests, computed at 50 digits."""
from mpmath import mp, mpf, ncdf, erfc, sqrt, exp, log

mp.dps = 50


def n_inv(p):
    # bisection on the high-precision cdf
    lo, hi = mpf(-40), mpf(40)
    for _ in range(400):
        mid = (lo + hi) / 2
        if ncdf(mid) < p:
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2


print("# norm_cdf")
for z in ["-1.6448536269514722", "-8", "-6", "-3.5", "-1", "-0.3", "0.7", "1.3", "2.5", "5", "8"]:
    print(z, mp.nstr(ncdf(mpf(z)), 20))

print("# norm_quantile")
for p in ["0.05", "1e-10", "0.001", "0.2", "0.5", "0.975", "0.999999"]:
    # exact binary value of the f64 literal
    print(p, mp.nstr(n_inv(mpf(float(p))), 20))


def risk(x, zm, zs, r, tau, alpha):
    x, zm, zs, r, tau, alpha = map(mpf, (x, zm, zs, r, tau, alpha))
    za = n_inv(alpha)
    q = r + zm - zs**2 / 2
    var = x * (1 - exp(q * tau + za * zs * sqrt(tau)))
    tvar = x * (1 - exp(tau * (r + zm)) * ncdf(za - zs * sqrt(tau)) / alpha)
    lel = x * (1 - exp(tau * r) * ncdf(za - zs * sqrt(tau)) / alpha)
    return var, tvar, lel


print("# risk (x, zm, zs, r, tau, alpha) -> var tvar lel")
for args in [(100, 0.05, 0.2, 0.03, 0.5, 0.05), (50, 0, 0.3, 0.03, mpf(10) / 252, 0.05)]:
    print(args, [mp.nstr(v, 20) for v in risk(*args)])
