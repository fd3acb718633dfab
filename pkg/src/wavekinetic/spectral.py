"""Mellin transform W_V, calibrated constant gamma, Fourier transform of K and the multiplier.

Conventions (s = -2 i xi):

    W_V(s)  = int_0^inf V(p) p^(s-1) dp,          -2 < Re s < 5
    K^(xi)  = int e^{-i x xi} K(x) dx = 2 W_V(-2 i xi),   -1 < Im xi < 5/2
    W(s)    = gamma/2 + W_V(s)
    Omega   = gamma + K^(xi) = 2 W(-2 i xi)

gamma is fixed by W(2) = 0; W(1) = 0 is then a consistency check.

Two independent numerical routes are provided.  The Mellin route
integrates in p (exact analytic pieces near p = 0 and p = inf, Gauss
rules or QUADPACK in between).  The Fourier route integrates in x after
subtracting a sum of one-sided terms |x|^a e^{-b|x|} that carries the
singular behaviour of K at the origin and whose transform is known in
closed form.
"""

import warnings
from dataclasses import dataclass, field
from math import comb, factorial

import numpy as np
from scipy import fft as sfft
from scipy import integrate, interpolate, optimize, special

from . import kernel
from .errors import DomainError, NumericError

S_STRIP = (-2.0, 5.0)
XI_IM_STRIP = (-1.0, 2.5)

_P0 = 0.25  # analytic piece on (0, _P0]
_P1 = 4.0  # analytic piece on [_P1, inf)
_M_TERMS = 40


def xi_to_s(xi):
    return -2j * np.asarray(xi, dtype=complex)


def s_to_xi(s):
    return 0.5j * np.asarray(s, dtype=complex)


def _check_s(s):
    s = np.asarray(s, dtype=complex)
    if np.any(~((s.real > S_STRIP[0]) & (s.real < S_STRIP[1]))):
        raise DomainError(f"Re s must lie in {S_STRIP}")
    return s


def _check_xi(xi):
    xi = np.asarray(xi, dtype=complex)
    if np.any(~((xi.imag > XI_IM_STRIP[0]) & (xi.imag < XI_IM_STRIP[1]))):
        raise DomainError(f"Im xi must lie in {XI_IM_STRIP}")
    return xi


# ---------------------------------------------------------------------------
# Mellin route

def _dpow_over(w, ell, k):
    """d^k/dw^k [exp(w ell) / w]."""
    acc = 0.0
    for j in range(k + 1):
        acc = acc + comb(k, j) * ell ** (k - j) * (-1) ** j * factorial(j) / w ** (j + 1)
    return np.exp(w * ell) * acc


def _analytic_ends(s, n):
    """Exact integrals of V(p) p^(s-1) (log p)^n over (0, _P0] and [_P1, inf).

    Uses V(p) = sum_m p^(2+4m) (C_m - 4 log p) for p < 1 and the
    symmetry V(p) = p^-3 V(1/p).
    """
    coef = kernel._ODD_C[:_M_TERMS]
    l0 = np.log(_P0)
    l1 = np.log(_P1)
    total = np.zeros_like(s)
    for m, cm in enumerate(coef):
        w = s + 2 + 4 * m
        total = total + cm * _dpow_over(w, l0, n) - 4.0 * _dpow_over(w, l0, n + 1)
        w = s - 5 - 4 * m
        # int_P^inf p^(w-1) (log p)^k dp = -d^k/dw^k (P^w / w),  Re w < 0
        total = total - (cm * _dpow_over(w, l1, n) + 4.0 * _dpow_over(w, l1, n + 1))
    return total


def _gl_nodes(a, b, panels, order):
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, panels + 1)
    lo, hi = edges[:-1, None], edges[1:, None]
    nodes = (0.5 * (hi - lo) * x + 0.5 * (hi + lo)).ravel()
    weights = (0.5 * (hi - lo) * w).ravel()
    return nodes, weights


class _MellinRule:
    """Composite Gauss-Legendre rule on (_P0, _P1) with p = 1 -/+ v^2 around p = 1."""

    def __init__(self, panels=48, order=20):
        pa, wa = _gl_nodes(_P0, 0.5, panels, order)
        vb, wb = _gl_nodes(0.0, np.sqrt(0.5), panels, order)
        vc, wc = _gl_nodes(0.0, 1.0, panels, order)
        pd, wd = _gl_nodes(2.0, _P1, panels, order)
        # log p from log1p so that |p - 1| keeps full relative precision
        logp = np.concatenate([np.log(pa), np.log1p(-vb ** 2), np.log1p(vc ** 2), np.log(pd)])
        p = np.concatenate([pa, 1 - vb ** 2, 1 + vc ** 2, pd])
        w = np.concatenate([wa, 2 * vb * wb, 2 * vc * wc, wd])
        self.logp = logp
        self.weights = w * kernel.eval_K(2.0 * logp) / p  # V(p) p^-1 dp

    def __call__(self, s, n=0):
        s = np.asarray(s, dtype=complex)
        flat = s.reshape(-1, 1)
        lw = self.weights * self.logp ** n if n else self.weights
        vals = np.exp(flat * self.logp) @ lw
        return vals.reshape(s.shape)


_RULE = None


def _rule():
    global _RULE
    if _RULE is None:
        _RULE = _MellinRule()
    return _RULE


def _mellin_quad(s, n):
    """Middle section by QUADPACK (independent of the Gauss rule)."""
    opts = dict(epsabs=1e-15, epsrel=1e-13, limit=500)

    def parts(f, a, b):
        re = integrate.quad(lambda t: f(t).real, a, b, **opts)[0]
        im = integrate.quad(lambda t: f(t).imag, a, b, **opts)[0]
        return re + 1j * im

    def g(lp):
        return kernel.eval_K(2.0 * lp) * np.exp(s * lp) * lp ** n

    def near(v, sgn):
        if v == 0.0:
            return np.sqrt(2.0) * np.pi + 0j if n == 0 else 0j
        lp = np.log1p(sgn * v * v)
        return 2 * v * g(lp) / (1 + sgn * v * v)

    tot = parts(lambda p: g(np.log(p)) / p, _P0, 0.5)
    tot += parts(lambda v: near(v, -1.0), 0.0, np.sqrt(0.5))
    tot += parts(lambda v: near(v, 1.0), 0.0, 1.0)
    tot += parts(lambda p: g(np.log(p)) / p, 2.0, _P1)
    return tot


def mellin_WV(s, n=0, method="gauss"):
    """n-th derivative of the Mellin transform W_V at s (array or scalar).

    ``method`` is "gauss" (vectorised composite Gauss-Legendre) or "quad"
    (QUADPACK, scalar loop).  Both share the closed-form end pieces.
    """
    s = _check_s(s)
    scalar = s.ndim == 0
    s1 = np.atleast_1d(s)
    if method == "gauss":
        mid = _rule()(s1, n)
    elif method == "quad":
        mid = np.array([_mellin_quad(v, n) for v in s1])
    else:
        raise DomainError(f"unknown method {method!r}")
    out = mid + _analytic_ends(s1, n)
    if not np.all(np.isfinite(out)):
        raise NumericError("Mellin quadrature produced non-finite values")
    return complex(out[0]) if scalar else out


# ---------------------------------------------------------------------------
# Fourier route

_B_SUB = 4.0


def _subtraction_coefficients(b=_B_SUB):
    """Coefficients d_N (N = -1..11) of e^{-b|x|} sum d_N |x|^{N/2} matching K near 0."""
    out = {}
    for side in (1, -1):
        a = kernel.kernel_series_coefficients(side)  # index i <-> exponent (i-1)/2
        d = np.zeros_like(a)
        for i in range(a.size):
            for k in range(0, i // 2 + 1):
                d[i] += a[i - 2 * k] * b ** k / factorial(k)
        out[side] = d
    return out


_DSUB = _subtraction_coefficients()
_GAMMAS = special.gamma(np.arange(13) / 2.0 + 0.5)  # Gamma(a+1), a = (i-1)/2


def singular_part(x, b=_B_SUB):
    x = np.asarray(x, dtype=float)
    u = np.sqrt(np.abs(x))
    out = np.zeros_like(x)
    for side, mask in ((1, x > 0), (-1, x < 0)):
        if np.any(mask):
            um = u[mask]
            d = _DSUB[side]
            acc = np.zeros_like(um)
            for c in d[:0:-1]:
                acc = acc * um + c
            out[mask] = np.exp(-b * um * um) * (d[0] / um + acc)
    return out


def singular_part_hat(xi, b=_B_SUB):
    """Closed-form transform of singular_part."""
    xi = np.asarray(xi, dtype=complex)
    zp = b + 1j * xi
    zm = b - 1j * xi
    lp, lm = np.log(zp), np.log(zm)
    out = np.zeros_like(xi)
    for i in range(_GAMMAS.size):
        e = (i + 1) / 2.0  # a + 1
        out = out + _GAMMAS[i] * (_DSUB[1][i] * np.exp(-e * lp) + _DSUB[-1][i] * np.exp(-e * lm))
    return out


def _residual(x):
    """K - singular_part, exactly 0 at x = 0."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    nz = x != 0
    out[nz] = kernel.eval_K(x[nz]) - singular_part(x[nz])
    return out


def _tail_extent(rate, floor=40.0):
    rate = max(rate, 1e-3)
    x = floor / rate
    for _ in range(4):
        x = (floor + np.log(2.0 + x)) / rate
    return x


def fourier_K(xi, asymptotic_threshold=1e3):
    """K^(xi) by x-space quadrature (QUADPACK with oscillatory weights).

    For |Re xi| above ``asymptotic_threshold`` only the closed-form
    transform of the subtracted singular part is returned; the neglected
    residual transform is O(|xi|^-7).
    """
    xi = _check_xi(xi)
    scalar = xi.ndim == 0
    flat = np.atleast_1d(xi).ravel()
    out = np.empty(flat.shape, dtype=complex)
    for i, z in enumerate(flat):
        out[i] = singular_part_hat(z)
        if abs(z.real) <= asymptotic_threshold:
            out[i] += _residual_hat_quad(z.real, z.imag)
    out = out.reshape(np.shape(xi))
    return complex(out) if scalar else out


def _residual_hat_quad(u, sigma):
    opts = dict(epsabs=1e-14, epsrel=1e-11, limit=2000)
    xr = _tail_extent(2.5 - sigma)
    xl = _tail_extent(1.0 + sigma)

    def right(x):
        return float(_residual(x) * np.exp(sigma * x))

    def left(y):
        return float(_residual(-y) * np.exp(-sigma * y))

    if u == 0.0:
        re = integrate.quad(right, 0, xr, points=[1, 5], **opts)[0]
        re += integrate.quad(left, 0, xl, points=[1, 5], **opts)[0]
        return complex(re, 0.0)
    w = abs(u)
    sg = np.sign(u)
    cr = integrate.quad(right, 0, xr, weight="cos", wvar=w, **opts)[0]
    sr = integrate.quad(right, 0, xr, weight="sin", wvar=w, **opts)[0]
    cl = integrate.quad(left, 0, xl, weight="cos", wvar=w, **opts)[0]
    sl = integrate.quad(left, 0, xl, weight="sin", wvar=w, **opts)[0]
    # e^{-iux} on the right, e^{+iuy} on the left
    return complex(cr + cl, sg * (sl - sr))


def residual_hat_line(du, n_freq, sigma, h_max=0.01):
    """Residual transform at u_k = k du, k = 0..n_freq-1, on the line Im xi = sigma.

    Trapezoid sums on a fine x-grid whose period is an integer multiple of
    2 pi / du, evaluated by one FFT.
    """
    xr = _tail_extent(2.5 - sigma)
    xl = _tail_extent(1.0 + sigma)
    period = 2 * np.pi / du
    u_max = (n_freq - 1) * du
    h = min(h_max, np.pi / max(u_max, 1e-12))
    q = int(np.ceil((xr + xl) / period))
    m = int(np.ceil(q * period / h))
    m = max(m, 1)
    # round m up so that FFT sizes are fast
    m = sfft.next_fast_len(m)
    h = q * period / m
    jr = int(np.floor(xr / h))
    jl = int(np.floor(xl / h))
    if jr + jl + 1 > m:
        raise NumericError("residual support exceeds FFT period")
    j = np.arange(-jl, jr + 1)
    x = j * h
    r = np.zeros(m)
    r[j % m] = _residual(x) * np.exp(sigma * x)
    spec = sfft.rfft(r) * h
    idx = q * np.arange(n_freq)
    if idx[-1] >= spec.size:
        raise NumericError("requested frequency beyond Nyquist of residual grid")
    return spec[idx]


def fourier_K_line(du, n_freq, sigma):
    """K^(u_k + i sigma) for u_k = k du, k = 0..n_freq-1 (FFT route)."""
    if not (XI_IM_STRIP[0] < sigma < XI_IM_STRIP[1]):
        raise DomainError(f"sigma must lie in {XI_IM_STRIP}")
    u = du * np.arange(n_freq)
    return singular_part_hat(u + 1j * sigma) + residual_hat_line(du, n_freq, sigma)


# ---------------------------------------------------------------------------
# Context

@dataclass(frozen=True)
class QuadratureControls:
    mellin_method: str = "gauss"
    consistency_tol: float = 1e-6
    derivative_step: float = 1e-3


@dataclass(frozen=True)
class SpectralContext:
    """Calibrated constant gamma with evaluators for W, K^ and Omega."""

    gamma: float
    gamma_consistency: float
    strip: tuple = S_STRIP
    controls: QuadratureControls = field(default_factory=QuadratureControls)

    @property
    def gamma_N(self):
        return 0.5 * self.gamma

    def W_V(self, s, n=0):
        return mellin_WV(s, n, method=self.controls.mellin_method)

    def W(self, s):
        return 0.5 * self.gamma + self.W_V(s)

    def fourier_K(self, xi):
        return fourier_K(xi)

    def omega(self, xi, route="fourier"):
        """Omega(xi) = gamma + K^(xi); route="mellin" gives 2 W(-2 i xi)."""
        if route == "fourier":
            return self.gamma + fourier_K(xi)
        if route == "mellin":
            return 2.0 * self.W(xi_to_s(_check_xi(xi)))
        raise DomainError(f"unknown route {route!r}")

    def omega_line(self, du, n_freq, sigma):
        """Omega(u_k + i sigma), u_k = k du, by the FFT route."""
        return self.gamma + fourier_K_line(du, n_freq, sigma)

    def w_derivative(self, s, order=1, method="moment"):
        """Derivative of W by differentiating under the Mellin integral.

        ``method="complex-step"`` gives Im W(s + i h)/h for real s (order 1 only).
        """
        if order not in (1, 2):
            raise DomainError("order must be 1 or 2")
        s_arr = _check_s(s)
        step = self.controls.derivative_step
        dist = np.minimum(s_arr.real - S_STRIP[0], S_STRIP[1] - s_arr.real)
        if np.any(dist < 10 * step):
            warnings.warn("s is within 10 steps of the strip boundary; derivative accuracy is reduced",
                          RuntimeWarning, stacklevel=2)
        if method == "moment":
            return self.W_V(s, n=order)
        if method == "complex-step":
            if order != 1 or np.any(s_arr.imag != 0):
                raise DomainError("complex-step needs real s and order 1")
            h = 1e-20
            return np.imag(self.W_V(s_arr + 1j * h)) / h
        raise DomainError(f"unknown method {method!r}")

    def saddle_find(self, ratio):
        """Real root s* of W'(s) = ratio in (-2, 5).

        W' is strictly increasing on the strip (W'' = int V log^2 p p^(s-1) > 0),
        so the root is unique and bracketed.
        """
        ratio = float(ratio)
        if not np.isfinite(ratio):
            raise DomainError("ratio must be finite")

        def f(s):
            return float(np.real(self.W_V(s, n=1))) - ratio

        # leading pole forms W' ~ -8/(s+2)^3 and W' ~ -8/(s-5)^3
        if ratio < 0:
            lo = -2.0 + min(1.0, 0.5 * (8.0 / -ratio) ** (1 / 3))
            hi = 1.5
        elif ratio > 0:
            lo = 1.5
            hi = 5.0 - min(1.0, 0.5 * (8.0 / ratio) ** (1 / 3))
        else:
            lo, hi = 1.0, 2.0
        for _ in range(60):
            if f(lo) <= 0:
                break
            lo = -2.0 + 0.5 * (lo + 2.0)
        for _ in range(60):
            if f(hi) >= 0:
                break
            hi = 5.0 - 0.5 * (5.0 - hi)
        if f(lo) > 0 or f(hi) < 0:
            raise NumericError(f"no root of W'(s) = {ratio} bracketed in the strip")
        return optimize.brentq(f, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=200)

    def saddle_point(self, x, t):
        """Saddle s* for f(t, x) in the time of the equation f' = gamma f + K*f.

        The Mellin representation reads f = (1/4 pi) int Phi(s) e^{-xs/2 + 2tW(s)} dv,
        so the critical point solves W'(s*) = x/(4t).
        """
        return self.saddle_find(float(x) / (4.0 * float(t)))

    @property
    def omega_critical(self):
        """Omega(3i/4) = 2 W(3/2), the value at the critical point."""
        return float(np.real(2.0 * self.W(1.5)))

    @property
    def nu(self):
        return -self.omega_critical

    def moment_exponent(self, r):
        """lambda_r = Omega(i r) = gamma + 2 W_V(2r)."""
        r = np.asarray(r, dtype=float)
        return np.real(self.gamma + 2.0 * self.W_V(2.0 * r + 0j))

    def h_kernel(self, t, x_grid=None, xi_max=2048.0, n=2 ** 18, rtol=1e-3):
        """H(t) = F^-1(e^{t K^} - 1) on a grid.

        H = t K + B with B = F^-1(e^{tK^} - 1 - tK^); K is evaluated pointwise
        and B spectrally.  Returns (x, H, info).  Without ``x_grid`` the native
        grid (spacing pi/xi_max, zero excluded) is used.
        """
        if t <= 0:
            raise DomainError("t must be positive")
        dx = np.pi / xi_max
        du = 2 * np.pi / (n * dx)
        khat = self.fourier_K_real(du, n // 2 + 1)
        b = np.expm1(t * khat) - t * khat
        vals = sfft.irfft(b, n=n) / dx
        x_nat = sfft.fftshift(sfft.fftfreq(n, d=1.0 / (n * dx)))
        b_nat = sfft.fftshift(vals)
        # tail estimate: B ~ c/u beyond xi_max, L2 norm of the dropped part
        trunc = abs(b[-1]) * np.sqrt(xi_max / np.pi)
        scale = np.sqrt(np.sum(b_nat ** 2) * dx) + t * 10.0
        if trunc > rtol * scale:
            raise NumericError(f"spectral truncation estimate {trunc:.3g} above tolerance")
        info = {"truncation_l2": float(trunc), "b_l1": float(np.sum(np.abs(b_nat)) * dx),
                "dx": dx}
        if x_grid is None:
            keep = x_nat != 0
            x = x_nat[keep]
            bx = b_nat[keep]
        else:
            x = np.asarray(x_grid, dtype=float)
            spl = interpolate.CubicSpline(x_nat, b_nat)
            bx = spl(x)
        return x, t * kernel.eval_K(x) + bx, info

    def fourier_K_real(self, du, n_freq):
        """K^ on the real line at u_k = k du (FFT route)."""
        return np.real(fourier_K_line(du, n_freq, 0.0))

    def conv_KK_fourier(self, x, u_max=2048.0, n=2 ** 18, taper=400.0):
        """(K*K)(x) = F^-1(K^2)(x) by a tapered direct Fourier sum (x != 0)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        du = 2 * u_max / n
        nf = n // 2 + 1
        u = du * np.arange(nf)
        kh = fourier_K_line(du, nf, 0.0)
        f = kh * kh * np.exp(-0.5 * (u / taper) ** 2)
        w = np.full(nf, 2.0)
        w[0] = 1.0
        out = np.array([np.sum(w * np.real(f * np.exp(1j * u * xv))) * du / (2 * np.pi) for xv in x])
        return out


def calibrate_gamma(controls=None):
    """Build a SpectralContext with gamma = -2 W_V(2)."""
    controls = controls or QuadratureControls()
    w1 = float(np.real(mellin_WV(1.0 + 0j, method=controls.mellin_method)))
    w2 = float(np.real(mellin_WV(2.0 + 0j, method=controls.mellin_method)))
    gamma = -2.0 * w2
    resid = abs(w1 - w2)
    if not (gamma < 0):
        raise NumericError("calibrated gamma is not negative")
    if resid > controls.consistency_tol * abs(gamma):
        raise NumericError(f"gamma calibration inconsistent: |W_V(1)-W_V(2)| = {resid:.3g}")
    return SpectralContext(gamma=gamma, gamma_consistency=resid, controls=controls)
