"""Linearised equation f_t = gamma f + K * f on a uniform periodic grid.

Time is the variable of the equation above.  Fields are propagated in a
weighted frame g = f e^{sigma x}; there the generator is the Fourier
multiplier Omega(u + i sigma) and g decays at both ends, so the periodic
FFT is a faithful model of the whole line.  ``timestep_propagate`` is an
independent product-integration scheme that serves as the oracle.
"""

from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from scipy import fft as sfft
from scipy import integrate, signal
from sklearn.base import BaseEstimator, TransformerMixin

from . import kernel, spectral
from .errors import DomainError, NumericError, PreconditionError
from .validation import check_uniform_grid

BOUNDARY_TOL = 1e-8
ALIAS_TOL = 1e-6
COMPACT_TAGS = (1.0, -2.5)  # envelope reached by compactly supported data after any t > 0
PREFERRED_SIGMA = 0.75


@lru_cache(maxsize=None)
def default_context():
    return spectral.calibrate_gamma()


@lru_cache(maxsize=None)
def k_l1_norm():
    return kernel.k_norm(1.0)


def make_grid(half_width=40.0, n=2 ** 13):
    """x_j = -L + j h, j = 0..n-1, h = 2L/n (periodic, contains x = 0 for even n)."""
    if half_width <= 0 or n < 16:
        raise PreconditionError("grid needs L > 0 and at least 16 points")
    h = 2.0 * half_width / n
    return -half_width + h * np.arange(n)


# ---------------------------------------------------------------------------
# fields and initial data

@dataclass(frozen=True)
class LinearField:
    """Samples of f(t, .) with the declared envelope e^{Ax} (x<0), e^{Bx} (x>0)."""

    x_grid: np.ndarray
    values: np.ndarray
    decay_tags: tuple = COMPACT_TAGS
    time: float = 0.0

    def __post_init__(self):
        x = np.asarray(self.x_grid, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if x.shape != v.shape:
            raise PreconditionError("x_grid and values must have the same shape")
        check_uniform_grid(x)
        object.__setattr__(self, "x_grid", x)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "decay_tags", tuple(float(a) for a in self.decay_tags))

    @property
    def h(self):
        return self.x_grid[1] - self.x_grid[0]

    @property
    def half_width(self):
        return -self.x_grid[0]

    def weighted(self, sigma):
        return self.values * np.exp(sigma * self.x_grid)

    def sigma_interval(self):
        """Open interval of admissible frame exponents for this envelope."""
        a, b = self.decay_tags
        return max(spectral.XI_IM_STRIP[0], -a), min(spectral.XI_IM_STRIP[1], -b)

    def check_boundary(self, sigma, tol=BOUNDARY_TOL, cells=2):
        g = self.weighted(sigma)
        scale = np.max(np.abs(g))
        edge = max(np.max(np.abs(g[:cells])), np.max(np.abs(g[-cells:])))
        if scale > 0 and edge > tol * scale:
            raise PreconditionError(
                f"field is not small at the grid boundary (ratio {edge / scale:.2e}); enlarge L")
        return edge / scale if scale > 0 else 0.0


def smoothstep(z):
    """C-infinity step: 0 for z <= 0, 1 for z >= 1."""
    z = np.clip(np.asarray(z, dtype=float), 0.0, 1.0)
    a = np.where(z > 0, np.exp(-1.0 / np.where(z > 0, z, 1.0)), 0.0)
    b = np.where(z < 1, np.exp(-1.0 / np.where(z < 1, 1.0 - z, 1.0)), 0.0)
    return a / (a + b)


def edge_window(x, half_width, frac=0.1):
    """1 in the interior, smoothly 0 over the outer ``frac`` of each side."""
    return smoothstep((half_width - np.abs(x)) / (frac * half_width))


def initial_data(kind, x, **params):
    """Build a LinearField at t = 0.

    kind: "gaussian" (center, width, amplitude), "bump" (smoothed indicator of
    [-a, a], ``a`` and ``ramp``), "exp-left" (e^{Ax} for x<0), "exp-right"
    (e^{Bx} for x>0), "stationary" (e^{-kx}) or "zero".
    """
    x = np.asarray(x, dtype=float)
    L = -x[0]
    if kind == "gaussian":
        c = params.get("center", 0.0)
        w = params.get("width", 1.0)
        v = params.get("amplitude", 1.0) * np.exp(-0.5 * ((x - c) / w) ** 2)
        tags = COMPACT_TAGS
    elif kind == "bump":
        a = params.get("a", 1.0)
        ramp = params.get("ramp", 0.5)
        v = smoothstep((a + ramp - np.abs(x)) / ramp)
        tags = COMPACT_TAGS
    elif kind == "exp-left":
        A = params["A"]
        if not (-2.5 < A < 1.0):
            raise DomainError("A must lie in (-5/2, 1)")
        ramp = params.get("ramp", 0.5)
        w = smoothstep((ramp - x) / (2 * ramp)) * edge_window(x, L)
        v = np.zeros_like(x)
        v[w > 0] = np.exp(A * x[w > 0]) * w[w > 0]
        tags = (A, -2.5)
    elif kind == "exp-right":
        B = params["B"]
        if not (-2.5 < B < 1.0):
            raise DomainError("B must lie in (-5/2, 1)")
        ramp = params.get("ramp", 0.5)
        w = smoothstep((x + ramp) / (2 * ramp)) * edge_window(x, L)
        v = np.zeros_like(x)
        v[w > 0] = np.exp(B * x[w > 0]) * w[w > 0]
        tags = (1.0, B)
    elif kind == "stationary":
        # flat on |x| < 0.6 L, ramp to 0 at 0.7 L, empty margin beyond
        k = params["k"]
        v = np.exp(-k * x) * smoothstep((0.7 * L - np.abs(x)) / (0.1 * L))
        tags = COMPACT_TAGS
    elif kind == "zero":
        v = np.zeros_like(x)
        tags = COMPACT_TAGS
    else:
        raise DomainError(f"unknown initial data kind {kind!r}")
    return LinearField(x, v, tags, 0.0)


def choose_sigma(field_, sigma="auto"):
    lo, hi = field_.sigma_interval()
    if lo >= hi:
        raise PreconditionError(f"empty frame interval ({lo}, {hi}) for envelope {field_.decay_tags}")
    if sigma == "auto" or sigma is None:
        return PREFERRED_SIGMA if lo < PREFERRED_SIGMA < hi else 0.5 * (lo + hi)
    sigma = float(sigma)
    if not (spectral.XI_IM_STRIP[0] < sigma < spectral.XI_IM_STRIP[1]):
        raise DomainError(f"sigma must lie in {spectral.XI_IM_STRIP}")
    return sigma


def alias_fraction(g):
    """Share of spectral energy in the top 1% of rfft modes."""
    p = np.abs(sfft.rfft(g)) ** 2
    total = p.sum()
    if total == 0:
        return 0.0
    k0 = int(np.floor(0.99 * p.size))
    return float(p[k0:].sum() / total)


def _check_alias(g, where):
    frac = alias_fraction(g)
    if frac > ALIAS_TOL:
        raise NumericError(f"aliasing detector: {frac:.2e} of the energy in the top 1% modes ({where})")


# ---------------------------------------------------------------------------
# spectral route

class LinearSemigroup(BaseEstimator, TransformerMixin):
    """Fourier-multiplier propagator f(0) -> f(t).

    ``fit`` builds Omega(u_k + i sigma) on the rfft frequencies of the
    field's grid; ``transform`` returns the field at time ``t``.

    Parameters
    ----------
    t : float
        Propagation time used by ``transform``.
    sigma : "auto" or float
        Frame exponent; "auto" takes 3/4 when the envelope allows it.
    check_boundary : bool
        Enforce the boundary-decay invariant on input and output.
    """

    def __init__(self, t=1.0, sigma="auto", check_boundary=True, context=None):
        self.t = t
        self.sigma = sigma
        self.check_boundary = check_boundary
        self.context = context

    def fit(self, X, y=None):
        ctx = self.context or default_context()
        self.sigma_ = choose_sigma(X, self.sigma)
        x = X.x_grid
        n = x.size
        h = X.h
        self.grid_ = (float(x[0]), float(h), n)
        du = 2.0 * np.pi / (n * h)
        self.omega_ = ctx.omega_line(du, n // 2 + 1, self.sigma_)
        self.gamma_ = ctx.gamma
        return self

    def _check_grid(self, X):
        if (float(X.x_grid[0]), float(X.h), X.x_grid.size) != self.grid_:
            raise PreconditionError("field grid differs from the fitted grid")

    def propagate(self, X, t):
        if t < 0:
            raise DomainError("t must be non-negative")
        self._check_grid(X)
        s = self.sigma_
        if self.check_boundary:
            X.check_boundary(s)
        g = X.weighted(s)
        if t == 0:
            return replace(X)
        _check_alias(g, "input")
        n = g.size
        gh = sfft.rfft(g) * np.exp(t * self.omega_)
        g1 = sfft.irfft(gh, n=n)
        out = LinearField(X.x_grid, g1 * np.exp(-s * X.x_grid), X.decay_tags, X.time + t)
        if self.check_boundary:
            out.check_boundary(s)
        return out

    def transform(self, X):
        return self.propagate(X, self.t)

    def trajectory(self, X, times):
        """Fields at the requested absolute times (each computed from X directly)."""
        return [self.propagate(X, float(tt) - X.time) for tt in times]

    def weighted_trajectory(self, X, times):
        """Weighted samples g(t) = f(t) e^{sigma x}, shape (len(times), n)."""
        self._check_grid(X)
        g = X.weighted(self.sigma_)
        gh = sfft.rfft(g)
        return np.array([sfft.irfft(gh * np.exp(float(tt) * self.omega_), n=g.size) for tt in times])


def spectral_propagate(f0, t, sigma="auto", context=None):
    return LinearSemigroup(t=t, sigma=sigma, context=context).fit(f0).transform(f0)


# ---------------------------------------------------------------------------
# time-stepping oracle

_LAG_NODES = np.array([-1.0, 0.0, 1.0, 2.0])


def _lagrange(z):
    """Cubic Lagrange basis on nodes -1, 0, 1, 2; shape (4,) + z.shape."""
    z = np.asarray(z, dtype=float)
    return np.stack([
        -z * (z - 1) * (z - 2) / 6.0,
        (z + 1) * (z - 1) * (z - 2) / 2.0,
        -(z + 1) * z * (z - 2) / 2.0,
        (z + 1) * z * (z - 1) / 6.0,
    ])


def convolution_stencil(h, sigma, reach=40.0, order=16):
    """Weights c[d] with (K_sigma * g)(x_i) ~ sum_d c[d] g_{i-d}, K_sigma = K e^{sigma x}.

    Product integration: on each cell [m h, (m+1) h] the shifted field is
    replaced by its cubic interpolant on four neighbouring nodes and the
    kernel is integrated exactly up to Gauss-Legendre error.  The two
    cells touching the x^-1/2 singularity use y = +-v^2.
    Returns (c, d0) where c[0] corresponds to offset d0.
    """
    m_lo = -int(np.ceil(reach / (1.0 + sigma) / h))
    m_hi = int(np.ceil(reach / (2.5 - sigma) / h))
    gx, gw = np.polynomial.legendre.leggauss(order)
    z = 0.5 * (gx + 1.0)
    wz = 0.5 * gw
    m = np.arange(m_lo, m_hi)
    regular = (m != 0) & (m != -1)
    mr = m[regular]
    y = (mr[:, None] + z[None, :]) * h
    kv = kernel.eval_K(y) * np.exp(sigma * y)
    lag = _lagrange(z)  # (4, order)
    wts = h * np.einsum("mk,qk,k->mq", kv, lag, wz)
    W = np.zeros((m.size, 4))
    W[regular] = wts
    # m = 0: y = h v^2, v in (0, 1)
    y0 = h * z ** 2
    k0 = kernel.eval_K(y0) * np.exp(sigma * y0) * 2 * z
    W[m == 0] = h * _lagrange(z ** 2) @ (k0 * wz)
    # m = -1: y = -h v^2, local coordinate 1 - v^2
    k1 = kernel.eval_K(-y0) * np.exp(-sigma * y0) * 2 * z
    W[m == -1] = h * _lagrange(1.0 - z ** 2) @ (k1 * wz)
    d0 = m_lo - 1
    c = np.zeros(m.size + 3)
    for q in range(4):
        c[np.arange(m.size) + q] += W[:, q]
    return c, d0


class _StencilOperator:
    def __init__(self, n, h, sigma):
        self.n = n
        self.c, self.d0 = convolution_stencil(h, sigma)

    def __call__(self, g):
        full = signal.fftconvolve(g, self.c, mode="full")
        k = -self.d0
        return full[k:k + self.n]


def timestep_propagate(f0, t, dt=0.005, sigma="auto", method="rk4", context=None):
    """Integrating-factor time stepping: f(t+dt) = e^{gamma dt} Step(f), Step for f' = K*f.

    ``method`` is "rk4" (default) or "midpoint" (second order).
    """
    if t < 0:
        raise DomainError("t must be non-negative")
    if dt <= 0 or dt * k_l1_norm() >= 0.5:
        raise PreconditionError(f"dt must satisfy 0 < dt*||K||_1 < 0.5 (dt = {dt})")
    ctx = context or default_context()
    s = choose_sigma(f0, sigma)
    steps = int(np.ceil(t / dt - 1e-9))
    if steps == 0:
        return replace(f0)
    dt = t / steps
    op = _StencilOperator(f0.x_grid.size, f0.h, s)
    g = f0.weighted(s)
    decay = np.exp(ctx.gamma * dt)
    for _ in range(steps):
        if method == "rk4":
            k1 = op(g)
            k2 = op(g + 0.5 * dt * k1)
            k3 = op(g + 0.5 * dt * k2)
            k4 = op(g + dt * k3)
            g = decay * (g + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4))
        elif method == "midpoint":
            k1 = op(g)
            g = decay * (g + dt * op(g + 0.5 * dt * k1))
        else:
            raise DomainError(f"unknown method {method!r}")
    return LinearField(f0.x_grid, g * np.exp(-s * f0.x_grid), f0.decay_tags, f0.time + t)


def oracle_difference(f_a, f_b, inner=0.8):  # also used for the semigroup residual
    """max |a-b| / max |a| over the central ``inner`` fraction of the grid."""
    x = f_a.x_grid
    mask = np.abs(x) <= inner * f_a.half_width
    scale = np.max(np.abs(f_a.values[mask]))
    if scale == 0:
        return float(np.max(np.abs(f_b.values[mask])))
    return float(np.max(np.abs(f_a.values[mask] - f_b.values[mask])) / scale)


# ---------------------------------------------------------------------------
# moments and long-time diagnostics

def moment(f, r):
    """M_r = int f e^{rx} dx by the (periodic) trapezoid rule."""
    r = float(r)
    a, b = f.decay_tags
    if not (-1.0 < r < 2.5):
        raise DomainError("r must lie in (-1, 5/2)")
    if not (r + a > 0 and r + b < 0):
        raise DomainError(f"e^({r} x) is not integrable against the envelope {f.decay_tags}")
    return float(f.h * np.sum(f.values * np.exp(r * f.x_grid)))


@dataclass
class MomentLedger:
    """M_r(t) records; ``moments[i, j]`` is M_{r_j}(times[i])."""

    times: np.ndarray
    r_values: np.ndarray
    moments: np.ndarray
    exponents: dict = field(default_factory=dict)

    @classmethod
    def record(cls, trajectory, r_values):
        times = np.array([f.time for f in trajectory])
        r_values = np.asarray(r_values, dtype=float)
        mom = np.array([[moment(f, r) for r in r_values] for f in trajectory])
        return cls(times, r_values, mom)

    def column(self, r):
        j = int(np.argmin(np.abs(self.r_values - r)))
        if abs(self.r_values[j] - r) > 1e-12:
            raise DomainError(f"r = {r} not recorded")
        return self.moments[:, j]


def moment_frame(r):
    """Fallback frame exponent halfway between r and 3/4, kept inside [0.6, 1].

    The trapezoid sum of g e^{(r - sigma) x} amplifies round-off in g by
    e^{|r - sigma| L}, which favours sigma = r.  Frames far from 3/4 let the
    stretched-exponential tails of f reach the grid ends for t of order 1,
    hence the clip.
    """
    return float(np.clip(0.5 * (float(r) + PREFERRED_SIGMA), 0.6, 1.0))


def _moment_column(f0, r, times, context):
    # sigma = r when the boundary monitor accepts it, the clipped frame otherwise
    for sigma in (float(r), moment_frame(r)):
        try:
            sg = LinearSemigroup(sigma=sigma, context=context).fit(f0)
            return [moment(f, r) for f in sg.trajectory(f0, times)]
        except PreconditionError:
            continue
    raise PreconditionError(f"no frame keeps the r = {r} run inside the grid; enlarge L")


def moment_ledger(f0, r_values, times, context=None):
    """Propagate f0 and record M_r(t) for each r in its own frame."""
    times = np.asarray(times, dtype=float)
    r_values = np.asarray(r_values, dtype=float)
    mom = np.empty((times.size, r_values.size))
    for j, r in enumerate(r_values):
        mom[:, j] = _moment_column(f0, r, times, context)
    return MomentLedger(times, r_values, mom)


def fit_moment_exponent(ledger, r):
    """Least-squares slope of log M_r(t) against t."""
    m = ledger.column(r)
    if ledger.times.size < 5:
        raise NumericError("need at least 5 time samples to fit an exponent")
    if np.any(m <= 0):
        raise NumericError("moment samples are not all positive")
    lam = float(np.polyfit(ledger.times, np.log(m), 1)[0])
    ledger.exponents[float(r)] = lam
    return lam


def tail_wave_action(f, L_cut):
    """int_{x <= L_cut} f e^{x/2} dx."""
    a, b = f.decay_tags
    if not (b < -0.5 < a):
        raise DomainError("envelope is not integrable against e^{x/2}")
    mask = f.x_grid <= L_cut
    return float(f.h * np.sum(f.values[mask] * np.exp(0.5 * f.x_grid[mask])))


def wave_action_gap(weighted, x, sigma, L_cut):
    """int_{x > L_cut} f e^{x/2} from weighted samples g = f e^{sigma x}."""
    mask = x > L_cut
    h = x[1] - x[0]
    return h * np.sum(weighted[..., mask] * np.exp((0.5 - sigma) * x[mask]), axis=-1)


def fit_concentration_rate(times, gap):
    """nu from log(gap) + log(t)/2 = -nu t + a + b/t (saddle expansion to first order)."""
    times = np.asarray(times, dtype=float)
    gap = np.asarray(gap, dtype=float)
    if np.any(gap <= 0):
        raise NumericError("wave-action gap must stay positive")
    y = np.log(gap) + 0.5 * np.log(times)
    design = np.column_stack([times, np.ones_like(times), 1.0 / times])
    coef = np.linalg.lstsq(design, y, rcond=None)[0]
    return float(-coef[0])


def concentration_rate(f0, times=None, L_cut=0.0, context=None):
    """Fit the decay rate of the wave-action gap over ``times`` (default 10..40).

    The gap int_{x > L_cut} f e^{x/2} is read in the frame sigma = 3/4, where
    its integrand g e^{-x/4} decays on both sides.  The limit value
    int_{x <= L_cut} f e^{x/2} at the last time is read in the frame 1/2,
    whose samples are the wave-action density itself.
    """
    times = np.linspace(10.0, 40.0, 16) if times is None else np.asarray(times, dtype=float)
    sg = LinearSemigroup(sigma=PREFERRED_SIGMA, context=context).fit(f0)
    g = sg.weighted_trajectory(f0, times)
    gap = wave_action_gap(g, f0.x_grid, sg.sigma_, L_cut)
    nu = fit_concentration_rate(times, gap)
    half = LinearSemigroup(sigma=0.5, context=context).fit(f0)
    f_end = half.propagate(f0, float(times[-1]))
    total = f0.h * np.sum(f0.values * np.exp(0.5 * f0.x_grid))
    return {"nu_fit": nu, "times": times, "gap": gap, "wave_action": float(total),
            "limit": tail_wave_action(f_end, L_cut)}


def omega_second_derivative(context=None):
    """Omega''(3i/4).  With Omega(xi) = 2 W(-2 i xi) this is -8 W''(3/2)."""
    ctx = context or default_context()
    return -8.0 * float(np.real(ctx.w_derivative(1.5, 2)))


def center_profile(f0, t, x, context=None):
    """Leading saddle term f^0(3i/4) e^{-3x/4} e^{t Omega(3i/4)} / sqrt(2 pi |Omega''| t)."""
    ctx = context or default_context()
    fhat = f0.h * np.sum(f0.values * np.exp(0.75 * f0.x_grid))
    d2 = -omega_second_derivative(ctx)
    return fhat * np.exp(-0.75 * np.asarray(x)) * np.exp(t * ctx.omega_critical) / np.sqrt(2 * np.pi * d2 * t)


def weak_star_gap(f0, times, context=None):
    """1 - Q(t), Q = int f e^{x/2} phi(e^{x/2}) / int f0 e^{x/2}, phi(p) = 1/(1+p).

    Uses conservation of int f e^{x/2}: 1 - Q = int f e^{x} / (1 + e^{x/2}) / W0,
    an integrand that decays on both sides in the frame 3/4.
    """
    sg = LinearSemigroup(sigma=PREFERRED_SIGMA, context=context).fit(f0)
    g = sg.weighted_trajectory(f0, times)
    x = f0.x_grid
    w = np.exp((1.0 - sg.sigma_) * x) / (1.0 + np.exp(0.5 * x))
    w0 = np.sum(f0.values * np.exp(0.5 * x))
    return np.sum(g * w, axis=1) / w0


# ---------------------------------------------------------------------------
# stretched-exponential regime from the Mellin contour

def gaussian_transform(s, center=0.0, width=1.0, amplitude=1.0):
    """Phi(s) = int f0(x) e^{x s/2} dx for a Gaussian f0."""
    s = np.asarray(s, dtype=complex)
    return amplitude * np.sqrt(2 * np.pi) * width * np.exp(center * s / 2 + width ** 2 * s ** 2 / 8)


def contour_log_f(x, t, center=0.0, width=1.0, context=None):
    """log f(t, x) for Gaussian data by steepest descent quadrature.

    f = (1/4 pi) int Phi(s) e^{-x s/2 + 2 t W(s)} dv along s = s* + i v,
    with s* the real saddle.  The integrand is scaled by its value at s*
    so that log f is returned without overflow.
    """
    ctx = context or default_context()
    x = float(x)
    t = float(t)
    s0 = ctx.saddle_point(x, t)

    def expo(s):
        return -x * s / 2 + 2 * t * ctx.W(s) + np.log(gaussian_transform(s, center, width))

    e0 = float(np.real(expo(s0 + 0j)))
    w2 = float(np.real(ctx.W_V(s0 + 0j, n=2)))
    scale = 1.0 / np.sqrt(2 * t * w2)

    def integrand(v):
        return float(np.real(np.exp(expo(s0 + 1j * v) - e0)))

    vmax = scale
    while abs(integrand(vmax)) > 1e-18 and vmax < 1e3:
        vmax *= 2.0
    val = integrate.quad(integrand, 0.0, vmax, epsabs=0.0, epsrel=1e-11, limit=400,
                         points=[scale, 4 * scale])[0]
    if val <= 0:
        raise NumericError("contour integral is not positive")
    return e0 + np.log(2 * val / (4 * np.pi))


def stretched_exponent_fit(t, ratios=(1e3, 1e5), n=12, side=-1, context=None):
    """Coefficient a in log f = lead(x) + a |x|^{2/3} + b |x|^{1/3} + c - (2/3) log|x|.

    lead(x) = x on the left (side=-1) and -5x/2 on the right (side=+1).
    Returns (a, a / t^{1/3}, samples).
    """
    ax = t * np.geomspace(ratios[0], ratios[1], n)
    x = side * ax
    logf = np.array([contour_log_f(v, t, context=context) for v in x])
    lead = x if side < 0 else -2.5 * x
    y = logf - lead + (2.0 / 3.0) * np.log(ax)
    design = np.column_stack([ax ** (2 / 3), ax ** (1 / 3), np.ones_like(ax)])
    coef = np.linalg.lstsq(design, y, rcond=None)[0]
    return float(coef[0]), float(coef[0] / t ** (1 / 3)), {"x": x, "log_f": logf}


# ---------------------------------------------------------------------------
# reports

def exponential_data_check(A, t, half_width=None, n=2 ** 15, context=None):
    """Plateau and remainder checks for data e^{Ax} 1_{x<0}.

    The remainder f e^{-Ax} - e^{t Omega(-iA)} on x < 0 decays only once
    |x| dominates the stretched-exponential growth of the propagator, so
    the default domain is wide (L = 480, or 240 when A < -1 to keep e^{Ax}
    finite).  The frame sigma = 0.1 - A leaves g ~ e^{x/10} on the left,
    which keeps round-off amplification on the plateau window small.
    """
    if not (-2.5 < A < 1.0):
        raise DomainError("A must lie in (-5/2, 1)")
    ctx = context or default_context()
    L = float(half_width) if half_width is not None else (480.0 if A >= -1.0 else 240.0)
    x = make_grid(L, n)
    f0 = initial_data("exp-left", x, A=A)
    sigma = float(min(0.1 - A, 2.45))
    f = spectral_propagate(f0, t, sigma=sigma, context=ctx)
    target = float(np.exp(t * np.real(ctx.omega(-1j * A, route="mellin"))))
    left = (x >= -L / 2) & (x <= -L / 4)
    plateau = f.values[left] * np.exp(-A * x[left])
    plateau_err = float(np.max(np.abs(plateau / target - 1.0)))
    # left remainder R = |f - T e^{Ax}| against e^{-a' x}, a' the midpoint of
    # (-1, -A); only cells where R clears the round-off floor of the frame count
    a1 = 0.5 * (-1.0 - A)
    g_max = float(np.max(np.abs(f.values * np.exp(sigma * x))))
    R = np.abs(f.values - target * np.exp(A * x))
    floor = 1e-13 * g_max * np.exp(-sigma * x)
    rem_mask = (x >= -L / 2) & (x <= -1.0) & (R > 100.0 * floor)
    xr = x[rem_mask]
    c_left = float(np.max(R[rem_mask] * np.exp(a1 * xr)) / (t * np.exp(t * ctx.gamma)))
    deep = xr <= xr.min() + 20.0
    rate = float(np.polyfit(xr[deep], np.log(R[rem_mask][deep]), 1)[0])
    # right side: |f - e^{t gamma} f0| against C t e^{t gamma} e^{-a'' x}
    a2 = 1.25
    right = (x >= 2.0) & (x <= 12.0)
    diff = np.abs(f.values[right] - np.exp(t * ctx.gamma) * f0.values[right])
    c_right = float(np.max(diff * np.exp(a2 * x[right])) / (t * np.exp(t * ctx.gamma)))
    slope = float(np.polyfit(x[right], np.log(diff), 1)[0])
    return {"A": A, "t": t, "sigma": sigma, "half_width": L, "plateau_target": target,
            "plateau_mean": float(np.mean(plateau)), "plateau_rel_error": plateau_err,
            "a_left": a1, "C_left": c_left, "left_resolved_to": float(xr.min()),
            "left_decay_rate": rate, "left_envelope_ok": rate >= -a1, "a_right": a2, "C_right": c_right,
            "right_log_slope": slope}


def positivity_check(f0, times, context=None):
    """min g(t) / max g(t) in the weighted frame (same sign as f)."""
    sg = LinearSemigroup(context=context).fit(f0)
    g = sg.weighted_trajectory(f0, times)
    out = []
    for row in g:
        mx = np.max(np.abs(row))
        out.append(0.0 if mx == 0 else float(np.min(row) / mx))
    return np.array(out)


def lp_norm(f, p=1, theta=0.0):
    w = np.exp(theta * f.x_grid)
    return float((f.h * np.sum(np.abs(f.values * w) ** p)) ** (1.0 / p))


def norm_bound_check(f0, t, p=1, theta=None, context=None):
    """||f(t)|| against e^{gamma t} ||f0|| (1 + k (e^{k t} - 1)), k the kernel L1 norm.

    With ``theta`` the weighted norm L^p(e^{theta x}) is used; for theta = 1/2
    the weighted kernel norm equals -gamma.
    """
    ctx = context or default_context()
    if theta is None:
        knorm = k_l1_norm()
        th = 0.0
    else:
        th = float(theta)
        if not (-1.0 < th < 2.5):
            raise DomainError("theta must lie in (-1, 5/2)")
        if th == 0.5:
            knorm = -ctx.gamma
        elif th == 0.0:
            knorm = k_l1_norm()
        else:
            knorm = integrate.quad(lambda u: 2 * u * (kernel.eval_K(u * u) * np.exp(th * u * u)
                                                       + kernel.eval_K(-u * u) * np.exp(-th * u * u)),
                                   0.0, 12.0, limit=400)[0]
    f = spectral_propagate(f0, t, context=ctx) if t > 0 else f0
    lhs = lp_norm(f, p, th)
    bound = np.exp(ctx.gamma * t) * lp_norm(f0, p, th) * (1.0 + knorm * np.expm1(knorm * t))
    return {"norm": lhs, "bound": float(bound), "slack": float(bound / lhs) if lhs > 0 else np.inf,
            "kernel_norm": float(knorm), "theta": th, "p": p}
