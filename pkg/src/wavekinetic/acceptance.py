"""Acceptance suite: one function per criterion, each returning a CriterionResult.

Failures are data.  A criterion that cannot be met is still evaluated at its
stated tolerance and reported as failed together with the measured value.
"""

import hashlib
import io
import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import IntegrationWarning

from . import condensation as cond
from . import kernel, linear

OMEGA_TARGET = -0.1572


@dataclass
class CriterionResult:
    cid: int
    name: str
    passed: bool
    measured: dict
    target: str
    detail: str = ""
    runtime: float = 0.0
    parts: dict = field(default_factory=dict)

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        meas = ", ".join(f"{k}={_fmt(v)}" for k, v in self.measured.items())
        return f"[{status}] {self.cid:2d} {self.name}: {meas} (target: {self.target})"


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.6g}"
    return str(v)


def _ctx():
    return linear.default_context()


# ---------------------------------------------------------------------------

def criterion_1():
    target = math.pi / math.sqrt(2.0)
    d = 1e-6
    exp_err = max(abs(kernel.eval_V(1 + s * d) * math.sqrt(d) / target - 1) for s in (-1, 1))
    d = 1e-3
    closed_err = max(abs(kernel.eval_V(1 + s * d, exclusion=0.0) * math.sqrt(d) / target - 1)
                     for s in (-1, 1))
    parts = {"expansion": exp_err <= 1e-3, "closed_form": closed_err <= 1e-2}
    return CriterionResult(1, "kernel singularity", all(parts.values()),
                           {"rel_err_expansion_1e-6": exp_err, "rel_err_closed_1e-3": closed_err},
                           "<= 1e-3 and <= 1e-2 vs pi/sqrt(2)", parts=parts,
                           detail="the constant term -1-sqrt2 log(1+sqrt2) of V shifts V sqrt|p-1| by O(sqrt|p-1|)")


def criterion_2():
    ctx = _ctx()
    w1 = abs(float(np.real(ctx.W(1.0 + 0j))))
    resid = ctx.gamma_consistency
    parts = {"W1": w1 <= 1e-6, "consistency": resid <= 1e-6 * abs(ctx.gamma)}
    return CriterionResult(2, "multiplier zeros", all(parts.values()),
                           {"gamma": ctx.gamma, "abs_W1": w1, "abs_WV1_minus_WV2": resid},
                           "|W(1)| <= 1e-6, residual <= 1e-6 |gamma|", parts=parts)


def criterion_3():
    ctx = _ctx()
    om = ctx.omega_critical
    w1 = float(np.real(ctx.w_derivative(1.5, 1)))
    w2 = float(np.real(ctx.w_derivative(1.5, 2)))
    parts = {"omega": abs(om - OMEGA_TARGET) <= 1e-3, "W1": abs(w1) <= 1e-6, "W2": w2 > 0}
    return CriterionResult(3, "Omega(3i/4)", all(parts.values()),
                           {"omega_3i4": om, "W_prime_3/2": w1, "W_second_3/2": w2},
                           "-0.1572 +- 1e-3, W'(3/2)=0 +- 1e-6, W''(3/2)>0", parts=parts)


def strip_sample(n=50, seed=7):
    rng = np.random.default_rng(seed)
    u = rng.uniform(-20.0, 20.0, n)
    eta = rng.uniform(-0.9, 2.4, n)
    return u + 1j * eta


def criterion_4():
    ctx = _ctx()
    xi = strip_sample()
    # QUADPACK flags round-off on a few oscillatory points; the comparison
    # itself is the check, so the flags are counted rather than shown
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", IntegrationWarning)
        four = np.array([ctx.fourier_K(z) for z in xi])
    mell = np.array([2.0 * ctx.W_V(-2j * z) for z in xi])
    err = float(np.max(np.abs(four - mell) / np.abs(mell)))
    flags = sum(issubclass(w.category, IntegrationWarning) for w in caught)
    return CriterionResult(4, "Mellin-Fourier identity", err <= 1e-6,
                           {"max_rel_err": err, "quad_warnings": flags},
                           "<= 1e-6 over 50 strip points")


def criterion_5():
    xi = 1e3
    val = abs(complex(_ctx().fourier_K(xi))) * math.sqrt(xi) / (math.pi * math.sqrt(2 * math.pi))
    return CriterionResult(5, "K^ asymptote", abs(val - 1) <= 0.05, {"ratio": val},
                           "ratio within 5% of 1 at xi = 1e3")


C6_SHAPES = (("gaussian", {"center": 0.0, "width": 1.0}),
             ("bump", {"a": 1.0, "ramp": 0.5}),
             ("gaussian", {"center": -3.0, "width": 0.7}))


def criterion_6():
    ctx = _ctx()
    x = linear.make_grid(40.0, 2 ** 13)
    worst_oracle = 0.0
    worst_semi = 0.0
    for kind, params in C6_SHAPES:
        f0 = linear.initial_data(kind, x, **params)
        sg = linear.LinearSemigroup(sigma=0.5, context=ctx).fit(f0)
        for t in (0.5, 1.0, 2.0):
            fs = sg.propagate(f0, t)
            ft = linear.timestep_propagate(f0, t, dt=0.005, sigma=0.5, context=ctx)
            worst_oracle = max(worst_oracle, linear.oracle_difference(fs, ft))
        f1 = sg.propagate(f0, 1.0)
        f2 = sg.propagate(f1, 1.0)
        worst_semi = max(worst_semi, linear.oracle_difference(sg.propagate(f0, 2.0), f2))
    parts = {"oracle": worst_oracle <= 1e-5, "semigroup": worst_semi <= 1e-8}
    return CriterionResult(6, "semigroup oracle", all(parts.values()),
                           {"oracle_rel": worst_oracle, "semigroup_rel": worst_semi},
                           "<= 1e-5 (oracle), <= 1e-8 (composition)", parts=parts)


C7_R = (0.25, 0.5, 0.75, 1.0, 1.5)


def criterion_7():
    ctx = _ctx()
    x = linear.make_grid(60.0, 2 ** 14)
    f0 = linear.initial_data("gaussian", x)
    times = np.linspace(0.0, 3.0, 7)
    led = linear.moment_ledger(f0, C7_R, times, context=ctx)
    wa = led.column(0.5)
    drift = float(np.max(np.abs(wa / wa[0] - 1)))
    errs = {}
    signs_ok = True
    for r in C7_R:
        lam = linear.fit_moment_exponent(led, r)
        ref = float(ctx.moment_exponent(r))
        errs[r] = abs(lam - ref)
        # signs of the fitted exponents: zero at 1/2 and 1, negative between, positive outside
        if r in (0.5, 1.0):
            signs_ok &= abs(ref) < 1e-9 and abs(lam) <= 1e-3
        elif 0.5 < r < 1.0:
            signs_ok &= ref < 0 and lam < 0
        else:
            signs_ok &= ref > 0 and lam > 0
    worst = max(errs.values())
    parts = {"drift": drift <= 1e-6, "lambda": worst <= 1e-3, "signs": bool(signs_ok)}
    measured = {"wave_action_drift": drift, "max_lambda_err": worst}
    measured.update({f"lambda_err_r={r}": e for r, e in errs.items()})
    return CriterionResult(7, "conservation laws", all(parts.values()), measured,
                           "drift <= 1e-6, |lambda_r - Omega(ir)| <= 1e-3, signs", parts=parts)


def criterion_8():
    ctx = _ctx()
    L = 160.0
    x = linear.make_grid(L, 2 ** 15)
    res = {}
    for k in (0.5, 1.0):
        f0 = linear.initial_data("stationary", x, k=k)
        f1 = linear.spectral_propagate(f0, 1.0, sigma=k, context=ctx)
        m = np.abs(x) <= 0.5 * L
        res[k] = float(np.max(np.abs(f1.values[m] / f0.values[m] - 1)))
    worst = max(res.values())
    return CriterionResult(8, "stationarity", worst <= 1e-4,
                           {"residual_k=0.5": res[0.5], "residual_k=1": res[1.0]},
                           "<= 1e-4 on the inner half at t = 1")


def criterion_9():
    ctx = _ctx()
    x = linear.make_grid(200.0, 2 ** 13)
    f0 = linear.initial_data("gaussian", x)
    out = linear.concentration_rate(f0, context=ctx)
    rel = out["nu_fit"] / ctx.nu - 1
    return CriterionResult(9, "concentration rate", abs(rel) <= 0.05,
                           {"nu_fit": out["nu_fit"], "nu": ctx.nu, "rel_err": rel},
                           "within 5% of -Omega(3i/4)")


def criterion_10():
    ctx = _ctx()
    x = linear.make_grid(200.0, 2 ** 13)
    f0 = linear.initial_data("gaussian", x)
    t = 40.0
    f = linear.spectral_propagate(f0, t, context=ctx)
    i0 = int(np.argmin(np.abs(x)))
    ratio = float(f.values[i0] / linear.center_profile(f0, t, x[i0], context=ctx))
    _, slope, _ = linear.stretched_exponent_fit(1.0, context=ctx)
    parts = {"center": abs(ratio - 1) <= 0.1, "stretched": abs(slope / 3 - 1) <= 0.1}
    return CriterionResult(10, "saddle profile", all(parts.values()),
                           {"center_ratio_t40": ratio, "stretched_coef_over_t^1/3": slope},
                           "ratio within 10%, coefficient 3 within 10%", parts=parts)


def criterion_11():
    ctx = _ctx()
    k1 = linear.k_l1_norm()
    h_ok = True
    measured = {}
    for t in (0.1, 1.0, 3.0):
        kw = {"xi_max": 2.0 ** 14, "n": 2 ** 21} if t < 0.5 else {}
        _, _, info = ctx.h_kernel(t, **kw)
        # H >= 0, so ||H||_1 = t ||K||_1 + ||B||_1 with B = H - tK >= 0
        hn = t * k1 + info["b_l1"]
        bound = k1 * math.expm1(k1 * t)
        measured[f"H_norm_t={t}"] = hn
        measured[f"bound_t={t}"] = bound
        h_ok &= hn <= bound
    ratios = {xv: kernel.conv_KK(xv) / float(kernel.kastk_asymptotic(xv)) for xv in (15.0, -15.0)}
    measured.update({f"KK_ratio_x={xv}": r for xv, r in ratios.items()})
    parts = {"H_bound": bool(h_ok), "KK": all(abs(r - 1) <= 0.1 for r in ratios.values())}
    return CriterionResult(11, "H(t) bound and K*K", all(parts.values()), measured,
                           "||H||_1 <= bound; K*K ratio within 10% at |x| = 15", parts=parts)


def random_states(count=100, seed=11, n=12):
    """Atom-only states on a small geometric grid, occupied only where w4 stays on the grid."""
    rng = np.random.default_rng(seed)
    om = np.geomspace(0.01, 2.0, n)
    out = []
    for _ in range(count):
        g = rng.exponential(size=n) * (rng.random(n) < 0.7) * (om <= 1.0)
        if not np.any(g > 0):
            g[0] = 1.0
        out.append((cond.MeasureState(om, g), float(rng.uniform(0.05, 1.0))))
    return out


def criterion_12():
    worst = {"drift": 0.0, "phi_eps_excess": 0.0, "ii": 0.0, "iii": 0.0, "iv": 0.0}
    for state, eps in random_states():
        op = cond.CollisionOperator(state.omega)
        rhs = op(state.g)
        scale = cond.weak_form_scale(state, op)
        for phi in (lambda w: 1.0, lambda w: w):
            a = cond.pair_with(rhs, state.omega, phi)
            b = cond.kollision_weak(state, phi)
            worst["drift"] = max(worst["drift"], abs(a) / scale, abs(b) / scale)
        pe = lambda w: float(cond.phi_eps(w, eps))  # noqa: E731
        kv = cond.kollision_weak(state, pe)
        gap = abs(cond.pair_with(rhs, state.omega, pe) - kv)
        bound = cond.redistribution_error_bound(state, 2.0 / eps ** 2, op)
        worst["phi_eps_excess"] = max(worst["phi_eps_excess"], (gap - bound) / scale)
        for al in (0.0, 0.25, 0.5):
            f = cond.n_functional(state, eps, al)
            f_half = cond.n_functional(state, 0.5 * eps, al)
            worst["ii"] = max(worst["ii"], f_half.N_bar - f.N_bar)
            a2 = cond.A_value(state, eps, (1 - al) / 2)
            worst["iii"] = max(worst["iii"], (f.N_under * a2 ** 2 - kv) / scale)
            worst["iv"] = max(worst["iv"], math.sqrt(f.N) - cond.lemma_iv_rhs(state, eps, al))
    parts = {"exact_phi": worst["drift"] <= 1e-12, "phi_eps": worst["phi_eps_excess"] <= 1e-12,
             "lemma_ii": worst["ii"] <= 1e-12, "lemma_iii": worst["iii"] <= 1e-12,
             "lemma_iv": worst["iv"] <= 1e-12}
    return CriterionResult(12, "weak-form fidelity", all(parts.values()), dict(worst),
                           "drift <= 1e-12; redistribution bound; inequalities on 100 states",
                           parts=parts)


def criterion_13():
    base = cond.scaling_experiment(n_atoms=96)
    fine = cond.scaling_experiment(n_atoms=192)
    s3 = base["slope"][1e-3]
    s4 = base["slope"][1e-4]
    sf = fine["slope"][1e-3]
    ok = None not in (s3, s4, sf)
    parts = {"slope": ok and abs(s3 + 2) <= 0.3,
             "grid": ok and abs(sf - s3) < 0.1,
             "threshold": ok and abs(s4 - s3) < 0.1}
    measured = {"slope": s3, "slope_192": sf, "slope_thr_1e-4": s4}
    if ok:
        tstar = np.array([p["t_star"][1e-3] for p in base["per_A"]])
        resid = np.log(tstar) - np.polyval(np.polyfit(np.log(base["A"]), np.log(tstar), 1),
                                           np.log(base["A"]))
        sxx = np.sum((np.log(base["A"]) - np.mean(np.log(base["A"]))) ** 2)
        se = math.sqrt(np.sum(resid ** 2) / (len(tstar) - 2) / sxx)
        measured["slope_ci95_halfwidth"] = 4.303 * se  # t quantile, 2 degrees of freedom
        measured.update({f"t_star_A={a:g}": t for a, t in zip(base["A"], tstar)})
    return CriterionResult(13, "condensation scaling", all(parts.values()), measured,
                           "slope -2 +- 0.3, grid and threshold changes < 0.1", parts=parts)


CRITERIA = {i: globals()[f"criterion_{i}"] for i in range(1, 14)}


def run_criterion(cid):
    t0 = time.perf_counter()
    res = CRITERIA[cid]()
    res.runtime = time.perf_counter() - t0
    return res


def results_csv(results):
    """CSV body (no runtimes) with 17 significant digits."""
    buf = io.StringIO()
    buf.write("criterion,name,passed,quantity,value\n")
    for r in results:
        for k, v in r.measured.items():
            val = f"{float(v):.17g}" if isinstance(v, (float, int, np.floating)) else str(v)
            buf.write(f"{r.cid},{r.name},{int(r.passed)},{k},{val}\n")
    return buf.getvalue()


def run_acceptance(ids=None, determinism=True, log=print):
    """Run the criteria, then (if ``determinism``) rerun and compare CSV hashes."""
    ids = list(ids or range(1, 14))
    results = []
    for cid in ids:
        r = run_criterion(cid)
        results.append(r)
        if log:
            log(r.line())
    if determinism:
        t0 = time.perf_counter()
        first = hashlib.sha256(results_csv(results).encode()).hexdigest()
        again = [CRITERIA[cid]() for cid in ids]
        second = hashlib.sha256(results_csv(again).encode()).hexdigest()
        r14 = CriterionResult(14, "determinism", first == second,
                              {"sha256_first": first, "sha256_rerun": second},
                              "identical CSV bodies", runtime=time.perf_counter() - t0)
        results.append(r14)
        if log:
            log(r14.line())
    return results
