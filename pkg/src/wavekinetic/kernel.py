"""Closed-form linearization kernel V(p) and its logarithmic form K(x) = V(e^{x/2}).

V = R + S with

    p < 1:  R = 2 log p / (1+p^2) - 2 asinh(p) / (p sqrt(1+p^2))
            S = -2 log p / (1-p^2) + 2 asin(p) / (p sqrt(1-p^2))
    p > 1:  R = -2 log p / (p (1+p^2)) - 2 asinh(1/p) / (p sqrt(1+p^2))
            S = 2 log p / (p (p^2-1)) + 2 asin(1/p) / (p sqrt(p^2-1))

The inverse hyperbolic/trigonometric factors are the log identities
arctanh(p/sqrt(1+p^2)) = asinh(p) and arctan(p/sqrt(1-p^2)) = asin(p).
V satisfies V(1/p) = p^3 V(p), which is used to evaluate the p > 1 half
from the p < 1 half without cancellation.  Near p = 1 the closed form is
replaced by a Puiseux series in u = sqrt|x|, x = 2 log p.
"""

from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import DomainError, NumericError

LOG1P_SQRT2 = float(np.log1p(np.sqrt(2.0)))
SQRT2 = float(np.sqrt(2.0))
_SL = SQRT2 * LOG1P_SQRT2

#: constant term of V near p = 1 (and of K near x = 0)
SINGULAR_CONSTANT = -1.0 - _SL

# K(x) = pi/u + sum_n c_n u^n, u = sqrt(|x|), n = 0..11, one list per side.
_KSERIES_LEFT = np.array([
    SINGULAR_CONSTANT,
    3 * np.pi / 4,
    -5 / 6 - 3 * _SL / 4,
    25 * np.pi / 96,
    -61 / 240 - 7 * _SL / 32,
    7 * np.pi / 128,
    -253 / 20160 - 3 * _SL / 128,
    79 * np.pi / 10240,
    2347 / 322560 - _SL / 6144,
    33 * np.pi / 40960,
    -24793 / 14192640 - 41 * _SL / 40960,
    923 * np.pi / 12386304,
])
_KSERIES_RIGHT = np.array([
    SINGULAR_CONSTANT,
    -3 * np.pi / 4,
    2 / 3 + 3 * _SL / 4,
    25 * np.pi / 96,
    -31 / 240 - 7 * _SL / 32,
    -7 * np.pi / 128,
    -127 / 20160 + 3 * _SL / 128,
    79 * np.pi / 10240,
    -653 / 322560 - _SL / 6144,
    -33 * np.pi / 40960,
    52361 / 14192640 + 41 * _SL / 40960,
    923 * np.pi / 12386304,
])


def kernel_series_coefficients(side):
    """Coefficients (a_{-1}, a_0, ..., a_11) of K(x) = sum a_n |x|^{n/2} near 0.

    ``side`` is +1 for x > 0 and -1 for x < 0.
    """
    body = _KSERIES_RIGHT if side > 0 else _KSERIES_LEFT
    return np.concatenate(([np.pi], body))


# asin(p)/sqrt(1-p^2) = sum_n c_n p^(2n+1), c_n = 4^n (n!)^2 / (2n+1)!
def _odd_asin_coefficients(n_max=81):
    c = np.empty(n_max + 1)
    c[0] = 1.0
    for n in range(n_max):
        c[n + 1] = c[n] * 2.0 * (n + 1) / (2 * n + 3)
    return c


_C_ASIN = _odd_asin_coefficients()
_ODD_N = np.arange(1, _C_ASIN.size, 2)
_ODD_C = 4.0 * _C_ASIN[_ODD_N]  # coefficient of p^(2n) in the arc part of V
_P_SERIES = 0.5

DEFAULT_EXCLUSION = 1e-4


def _as_array(v):
    a = np.asarray(v, dtype=float)
    return a, a.ndim == 0


def _ret(a, scalar):
    return float(a) if scalar else a


def _arc_part(p):
    """2 asin(p)/(p sqrt(1-p^2)) - 2 asinh(p)/(p sqrt(1+p^2)) for 0 < p < 1."""
    out = np.empty_like(p)
    small = p < _P_SERIES
    if np.any(small):
        ps = p[small]
        p2 = ps * ps
        # Horner in p^4 on the odd-index coefficients: sum_k C_k p^(2+4k)
        acc = np.zeros_like(ps)
        q = p2 * p2
        for c in _ODD_C[::-1]:
            acc = acc * q + c
        out[small] = acc * p2
    big = ~small
    if np.any(big):
        pb = p[big]
        om = (1.0 - pb) * (1.0 + pb)
        out[big] = (2.0 * np.arcsin(pb) / (pb * np.sqrt(om))
                    - 2.0 * np.arcsinh(pb) / (pb * np.sqrt(1.0 + pb * pb)))
    return out


def _arc_part_prime(p):
    out = np.empty_like(p)
    small = p < _P_SERIES
    if np.any(small):
        ps = p[small]
        p2 = ps * ps
        q = p2 * p2
        acc = np.zeros_like(ps)
        for n, c in zip(_ODD_N[::-1], _ODD_C[::-1]):
            acc = acc * q + 2.0 * n * c
        out[small] = acc * ps
    big = ~small
    if np.any(big):
        pb = p[big]
        s = np.sqrt(1.0 + pb * pb)
        om = (1.0 - pb) * (1.0 + pb)
        c = np.sqrt(om)
        t2 = -2.0 * (pb - np.arcsinh(pb) * (1.0 + 2.0 * pb * pb) / s) / (pb * pb * (1.0 + pb * pb))
        t4 = 2.0 * (pb - np.arcsin(pb) * (1.0 - 2.0 * pb * pb) / c) / (pb * pb * om)
        out[big] = t2 + t4
    return out


def _log_part(p):
    # 2 log p/(1+p^2) - 2 log p/(1-p^2), combined without cancellation
    p2 = p * p
    return -4.0 * p2 * np.log(p) / ((1.0 - p2) * (1.0 + p2))


def _log_part_prime(p):
    p2 = p * p
    p4 = p2 * p2
    lp = np.log(p)
    den = 1.0 - p4
    return -4.0 * ((2.0 * p * lp + p) * den + 4.0 * p4 * p * lp) / (den * den)


def _v_below_one(p):
    return _log_part(p) + _arc_part(p)


def _v_below_one_prime(p):
    return _log_part_prime(p) + _arc_part_prime(p)


def _k_series(x):
    """Puiseux series of K around x = 0 (both sides)."""
    u = np.sqrt(np.abs(x))
    out = np.empty_like(x)
    for mask, coef in ((x > 0, _KSERIES_RIGHT), (x < 0, _KSERIES_LEFT)):
        if np.any(mask):
            um = u[mask]
            acc = np.zeros_like(um)
            for c in coef[::-1]:
                acc = acc * um + c
            out[mask] = np.pi / um + acc
    return out


def _k_series_prime(x):
    u = np.sqrt(np.abs(x))
    out = np.empty_like(x)
    for mask, coef, sgn in ((x > 0, _KSERIES_RIGHT, 1.0), (x < 0, _KSERIES_LEFT, -1.0)):
        if np.any(mask):
            um = u[mask]
            # d/dx u^n = sgn * n u^(n-2) / 2
            acc = np.zeros_like(um)
            for n in range(coef.size - 1, 0, -1):
                acc = acc * um + n * coef[n]
            # acc = sum_{n>=1} n c_n u^(n-1); add the pi/u term
            out[mask] = sgn * 0.5 * (acc / um - np.pi / um ** 3)
    return out


def _k_negative(x, exclusion):
    """K for x < 0 (array)."""
    out = np.empty_like(x)
    near = x >= -2.0 * exclusion
    if np.any(near):
        out[near] = _k_series(x[near])
    far = ~near
    if np.any(far):
        out[far] = _v_below_one(np.exp(0.5 * x[far]))
    return out


def _kprime_negative(x, exclusion):
    out = np.empty_like(x)
    near = x >= -2.0 * exclusion
    if np.any(near):
        out[near] = _k_series_prime(x[near])
    far = ~near
    if np.any(far):
        p = np.exp(0.5 * x[far])
        out[far] = 0.5 * p * _v_below_one_prime(p)
    return out


def eval_K(x, exclusion=DEFAULT_EXCLUSION):
    """K(x) = V(e^{x/2}); the series around 0 is used for |x| <= 2*exclusion."""
    x, scalar = _as_array(x)
    if np.any(x == 0) or np.any(~np.isfinite(x)):
        raise DomainError("K is singular at x = 0 and defined for finite x only")
    out = np.empty_like(x)
    neg = x < 0
    if np.any(neg):
        out[neg] = _k_negative(x[neg], exclusion)
    pos = ~neg
    if np.any(pos):
        xp = x[pos]
        near = xp <= 2.0 * exclusion
        res = np.empty_like(xp)
        if np.any(near):
            res[near] = _k_series(xp[near])
        far = ~near
        if np.any(far):
            # K(x) = e^{-3x/2} K(-x)
            res[far] = np.exp(-1.5 * xp[far]) * _k_negative(-xp[far], exclusion)
        out[pos] = res
    return _ret(out, scalar)


def eval_Kprime(x, exclusion=DEFAULT_EXCLUSION):
    """K'(x) = V'(p) p / 2 with p = e^{x/2}."""
    x, scalar = _as_array(x)
    if np.any(x == 0) or np.any(~np.isfinite(x)):
        raise DomainError("K' is singular at x = 0 and defined for finite x only")
    out = np.empty_like(x)
    neg = x < 0
    if np.any(neg):
        out[neg] = _kprime_negative(x[neg], exclusion)
    pos = ~neg
    if np.any(pos):
        xp = x[pos]
        near = xp <= 2.0 * exclusion
        res = np.empty_like(xp)
        if np.any(near):
            res[near] = _k_series_prime(xp[near])
        far = ~near
        if np.any(far):
            xf = xp[far]
            e = np.exp(-1.5 * xf)
            res[far] = e * (-1.5 * _k_negative(-xf, exclusion) - _kprime_negative(-xf, exclusion))
        out[pos] = res
    return _ret(out, scalar)


def _check_p(p, allow_one=False):
    p, scalar = _as_array(p)
    if np.any(~(p > 0)) or np.any(~np.isfinite(p)):
        raise DomainError("p must be finite and strictly positive")
    if not allow_one and np.any(p == 1.0):
        raise DomainError("p = 1 is a singular point")
    return p, scalar


def eval_R(p):
    """Regular part R(p), literal closed-form branches."""
    p, scalar = _check_p(p)
    out = np.empty_like(p)
    lo = p < 1
    if np.any(lo):
        q = p[lo]
        s = np.sqrt(1 + q * q)
        out[lo] = 2 * np.log(q) / (1 + q * q) - 2 * np.arcsinh(q) / (q * s)
    hi = ~lo
    if np.any(hi):
        q = p[hi]
        s = np.sqrt(1 + q * q)
        out[hi] = -(2 * np.log(q) / (q * (1 + q * q)) + 2 * np.arcsinh(1 / q) / (q * s))
    return _ret(out, scalar)


def eval_S(p):
    """Singular part S(p), literal closed-form branches."""
    p, scalar = _check_p(p)
    out = np.empty_like(p)
    lo = p < 1
    if np.any(lo):
        q = p[lo]
        om = (1 - q) * (1 + q)
        out[lo] = -2 * np.log(q) / om + 2 * np.arcsin(q) / (q * np.sqrt(om))
    hi = ~lo
    if np.any(hi):
        q = p[hi]
        om = (q - 1) * (q + 1)
        out[hi] = 2 * np.log(q) / (q * om) + 2 * np.arcsin(1 / q) / (q * np.sqrt(om))
    return _ret(out, scalar)


def eval_V(p, exclusion=DEFAULT_EXCLUSION):
    """V(p) = R(p) + S(p).

    Within |p - 1| <= exclusion the Puiseux series of K(2 log p) is used.
    For p > 1 the value is p^-3 V(1/p).
    """
    p, scalar = _check_p(p)
    out = np.empty_like(p)
    near = np.abs(p - 1.0) <= exclusion
    if np.any(near):
        out[near] = _k_series(2.0 * np.log(p[near]))
    lo = (p < 1) & ~near
    if np.any(lo):
        out[lo] = _v_below_one(p[lo])
    hi = (p > 1) & ~near
    if np.any(hi):
        q = 1.0 / p[hi]
        out[hi] = q ** 3 * _v_below_one(q)
    return _ret(out, scalar)


def eval_Vprime(p, exclusion=DEFAULT_EXCLUSION):
    """Derivative of V."""
    p, scalar = _check_p(p)
    out = np.empty_like(p)
    near = np.abs(p - 1.0) <= exclusion
    if np.any(near):
        pn = p[near]
        out[near] = 2.0 * _k_series_prime(2.0 * np.log(pn)) / pn
    lo = (p < 1) & ~near
    if np.any(lo):
        out[lo] = _v_below_one_prime(p[lo])
    hi = (p > 1) & ~near
    if np.any(hi):
        q = 1.0 / p[hi]
        out[hi] = -q ** 4 * (3.0 * _v_below_one(q) + q * _v_below_one_prime(q))
    return _ret(out, scalar)


# ---------------------------------------------------------------------------
# asymptotic forms and envelopes

def asymptotic_small_p(p):
    """Leading behaviour -4 p^2 (log p - 2/3) as p -> 0."""
    p = np.asarray(p, dtype=float)
    return -4.0 * p * p * (np.log(p) - 2.0 / 3.0)


def asymptotic_large_p(p):
    """Leading behaviour 4 p^-5 (log p + 2/3) as p -> infinity.

    Note the positive sign; V is positive for all p.
    """
    p = np.asarray(p, dtype=float)
    return 4.0 * p ** -5 * (np.log(p) + 2.0 / 3.0)


def asymptotic_K(x):
    """Leading tail forms: -4 e^x (x/2 - 2/3) for x < 0 and 4 e^{-5x/2}(x/2 + 2/3) for x > 0."""
    x = np.asarray(x, dtype=float)
    return np.where(x < 0, -4.0 * np.exp(np.minimum(x, 0.0)) * (x / 2 - 2.0 / 3.0),
                    4.0 * np.exp(-2.5 * np.maximum(x, 0.0)) * (x / 2 + 2.0 / 3.0))


def envelope_bound(x):
    """Twice the leading tail form; dominates |K(x)| for |x| >= 3."""
    return 2.0 * np.abs(asymptotic_K(x))


def _tail_integral(q, weight, x_max):
    """Integral of envelope^q * weight over |x| > x_max (closed form bound)."""
    w = 0.5 if weight else 0.0
    a = x_max
    # |x|/2 + 2/3 <= (a/2 + 2/3) exp((|x| - a)/(a + 4/3)) for |x| >= a
    poly = (8.0 * (a / 2 + 2 / 3)) ** q
    slack = q / (a + 4 / 3)
    tot = 0.0
    for lam in (q * 1.0 + w, q * 2.5 - w):
        tot += poly * np.exp(-lam * a) / (lam - slack)
    return tot


def k_norm(p_exponent=1.0, weight="none", x_max=60.0, return_error=False):
    """L^p norm of K, optionally with weight e^{x/2}.

    The singular neighbourhood (-1, 1) is integrated in u = sqrt|x| with the
    algebraic weight u^(1-p); the tails beyond x_max are bounded by the
    envelope and added to the error estimate.
    """
    q = float(p_exponent)
    if not (1.0 <= q < 2.0):
        if q >= 2.0:
            raise DomainError(f"||K||_p diverges for p = {q} >= 2 (K ~ |x|^-1/2 at 0)")
        raise DomainError("exponent must lie in [1, 2)")
    if weight in ("none", None):
        wexp = 0.0
    elif weight in ("e^{x/2}", "exp-half", "exp_half"):
        wexp = 0.5
    else:
        raise DomainError(f"unknown weight {weight!r}")
    opts = dict(epsabs=0.0, epsrel=1e-13, limit=400)
    total = 0.0
    err = 0.0
    for sgn in (-1.0, 1.0):
        def near(u, sgn=sgn):
            if u == 0.0:
                return 2.0 * np.pi ** q
            x = sgn * u * u
            return 2.0 * np.abs(u * eval_K(x)) ** q * np.exp(wexp * x)
        val, e = integrate.quad(near, 0.0, 1.0, weight="alg", wvar=(1.0 - q, 0.0), **opts)
        total += val
        err += e

        def far(x):
            return np.abs(eval_K(x)) ** q * np.exp(wexp * x)
        lo, hi = (-x_max, -1.0) if sgn < 0 else (1.0, x_max)
        pts = [c for c in (-30.0, -10.0, -3.0, 3.0, 10.0, 30.0) if lo < c < hi]
        val, e = integrate.quad(far, lo, hi, points=pts or None, **opts)
        total += val
        err += e
    err += _tail_integral(q, wexp > 0, x_max)
    if not np.isfinite(total):
        raise NumericError("norm quadrature did not converge")
    return (total, err) if return_error else total


def conv_KK(x, x_max=60.0):
    """(K*K)(x) = int K(x-y) K(y) dy.

    Both singular points y = 0 and y = x are resolved by y = c +/- v^2.
    At x = 0 the two singularities merge into a non-integrable 1/|y|
    and the result is +inf.
    """
    x = float(x)
    if x == 0.0:
        return np.inf
    a, b = min(0.0, x), max(0.0, x)
    m = 0.5 * (a + b)
    hw = np.sqrt(0.5 * (b - a))

    def f(y):
        return eval_K(x - y) * eval_K(y)

    opts = dict(epsabs=0.0, epsrel=1e-12, limit=400)
    pieces = [
        (lambda v: 2 * v * f(a + v * v), 0.0, hw),
        (lambda v: 2 * v * f(b - v * v), 0.0, hw),
        (lambda v: 2 * v * f(a - v * v), 0.0, 1.0),
        (lambda v: 2 * v * f(b + v * v), 0.0, 1.0),
        (f, -(x_max + abs(x)), a - 1.0),
        (f, b + 1.0, x_max + abs(x)),
    ]
    tot = 0.0
    for g, lo, hi in pieces:
        tot += integrate.quad(g, lo, hi, **opts)[0]
    return tot


def kastk_asymptotic(x):
    """The stated leading forms (8x^3/3) e^{-5x/2} (x > 0) and -(8x^3/3) e^x (x < 0)."""
    x = np.asarray(x, dtype=float)
    return np.where(x > 0, 8 * x ** 3 / 3 * np.exp(-2.5 * np.maximum(x, 0.0)),
                    -8 * x ** 3 / 3 * np.exp(np.minimum(x, 0.0)))


@dataclass(frozen=True)
class KernelTable:
    """Cached samples of K and K' on a uniform grid that avoids x = 0."""

    x_grid: np.ndarray
    k_values: np.ndarray
    kprime_values: np.ndarray
    x_max: float = 60.0
    exclusion: float = DEFAULT_EXCLUSION

    @classmethod
    def build(cls, n_points=2 ** 14, half_width=40.0, x_max=60.0, exclusion=DEFAULT_EXCLUSION):
        if n_points < 4 or half_width <= 0 or x_max <= 0 or exclusion <= 0:
            raise DomainError("grid parameters must be positive")
        h = 2.0 * half_width / n_points
        x = -half_width + (np.arange(n_points) + 0.5) * h
        x = x[x != 0.0]
        k = eval_K(x, exclusion)
        kp = eval_Kprime(x, exclusion)
        tab = cls(x, k, kp, float(x_max), float(exclusion))
        tab._check()
        for arr in (x, k, kp):
            arr.setflags(write=False)
        return tab

    def _check(self):
        if not (np.all(np.isfinite(self.k_values)) and np.all(np.isfinite(self.kprime_values))):
            raise NumericError("non-finite kernel sample")
        xs = np.concatenate([-np.linspace(self.x_max, 2 * self.x_max, 64),
                             np.linspace(self.x_max, 2 * self.x_max, 64)])
        if np.any(np.abs(eval_K(xs, self.exclusion)) > envelope_bound(xs)):
            raise NumericError("tail envelope does not dominate K beyond x_max")

    def envelope(self):
        return envelope_bound(self.x_grid)

    def interp(self, x):
        """Linear interpolation of the stored samples (for plotting only)."""
        return np.interp(x, self.x_grid, self.k_values)
