"""Dense BFGS with a strong-Wolfe line search, and the CWS shape-optimization loop."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import LineSearchFailed, NumericError
from .inverse import SolverSettings
from .shape_gradient import PenaltyConfig, evaluate
from .surfaces import FourierSurface, geometry_report, min_distance

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class BFGSSettings:
    max_iter: int = 2000
    gtol: float = 1e-10  # on ||g||_inf relative to max(1, |f|)
    ftol: float = 0.0  # stop when the relative decrease falls below this
    xtol: float = 1e-12  # step collapse
    c1: float = 1e-4
    c2: float = 0.9
    max_ls: int = 25
    max_step: float = 0.05  # length of the first trial step
    reset_after: int = 3
    f_noise: float = 1e-10  # relative value level below which slopes decide comparisons

    def __post_init__(self):
        if not 0.0 < self.c1 < self.c2 < 1.0:
            raise ValueError("line-search constants need 0 < c1 < c2 < 1")
        if self.max_iter < 0 or self.max_ls < 1:
            raise ValueError("max_iter >= 0 and max_ls >= 1 required")
        if not 0.0 <= self.f_noise < 1.0:
            raise ValueError("f_noise must lie in [0, 1)")


@dataclass
class BFGSResult:
    x: np.ndarray
    f: float
    g: np.ndarray
    n_iter: int
    n_eval: int
    status: str
    message: str = ""
    history: list = field(default_factory=list)


class _Counter:
    def __init__(self, fun: Callable):
        self.fun = fun
        self.n = 0

    def __call__(self, x):
        self.n += 1
        try:
            f, g = self.fun(x)
        except NumericError as exc:
            log.debug("trial point rejected: %s", exc)
            return np.inf, None
        if not np.isfinite(f):
            return np.inf, None
        return float(f), np.asarray(g, dtype=float)


def _cubic_min(a, fa, da, b, fb, db):
    """Minimizer of the cubic interpolant through (a, fa, da), (b, fb, db), or None."""
    d1 = da + db - 3.0 * (fa - fb) / (a - b)
    rad = d1 * d1 - da * db
    if rad < 0.0:
        return None
    d2 = np.copysign(np.sqrt(rad), b - a)
    denom = db - da + 2.0 * d2
    if denom == 0.0:
        return None
    return b - (b - a) * (db + d2 - d1) / denom


def strong_wolfe(phi: Callable, f0: float, d0: float, alpha1: float, c1: float, c2: float,
                 max_trials: int, f_noise: float = 1e-10):
    """Line search for the strong Wolfe conditions.

    ``phi(alpha)`` returns (value, slope, payload); failed trial points return
    an infinite value. Returns (alpha, value, payload, trials) or raises
    LineSearchFailed with the best sufficient-decrease point in ``.best``.

    Values closer than ``f_noise * |f0|`` are compared through the trapezoid
    rule on the slopes (approximate Wolfe conditions), since near a minimum the
    roundoff in f swamps the true differences.
    """
    trials = 0
    best = None  # (alpha, value, payload) with sufficient decrease
    # value differences below this are roundoff; compare slopes instead
    noise = max(f_noise, 8.0 * np.finfo(float).eps) * max(abs(f0), np.finfo(float).tiny)

    def rises(a, fa, da, b, fb, db):
        """Whether f(a) > f(b), judged from the slopes when the values are within roundoff."""
        if not np.isfinite(fa):
            return True
        if abs(fa - fb) > noise or da is None or db is None:
            return fa > fb
        return 0.5 * (a - b) * (da + db) > 0.0

    def sufficient(a, fa, da):
        if not np.isfinite(fa):
            return False
        if fa <= f0 + c1 * a * d0:
            return True
        if abs(fa - f0) <= noise and da is not None:
            return 0.5 * a * (d0 + da) <= c1 * a * d0
        return False

    def record(a, fa, da, payload):
        nonlocal best
        if sufficient(a, fa, da) and (best is None or fa < best[1]):
            best = (a, fa, payload)

    def zoom(lo, f_lo, d_lo, hi, f_hi, d_hi):
        nonlocal trials
        while trials < max_trials:
            width = hi - lo
            a = None
            if np.isfinite(f_hi) and d_hi is not None:
                a = _cubic_min(lo, f_lo, d_lo, hi, f_hi, d_hi)
            lo_b, hi_b = sorted((lo + 0.1 * width, hi - 0.1 * width))
            if a is None or not lo_b <= a <= hi_b:
                a = lo + 0.5 * width
            fa, da, payload = phi(a)
            trials += 1
            record(a, fa, da, payload)
            if not sufficient(a, fa, da) or not rises(lo, f_lo, d_lo, a, fa, da):
                hi, f_hi, d_hi = a, fa, da
            else:
                if abs(da) <= -c2 * d0:
                    return a, fa, payload
                if da * (hi - lo) >= 0.0:
                    hi, f_hi, d_hi = lo, f_lo, d_lo
                lo, f_lo, d_lo = a, fa, da
            if abs(hi - lo) <= 1e-14 * max(1.0, abs(lo)):
                break
        return None

    a_prev, f_prev, d_prev = 0.0, f0, d0
    a = alpha1
    while trials < max_trials:
        fa, da, payload = phi(a)
        trials += 1
        record(a, fa, da, payload)
        if not sufficient(a, fa, da) or (trials > 1 and not rises(a_prev, f_prev, d_prev,
                                                                   a, fa, da)):
            out = zoom(a_prev, f_prev, d_prev, a, fa, da)
            break
        if abs(da) <= -c2 * d0:
            out = (a, fa, payload)
            break
        if da >= 0.0:
            out = zoom(a, fa, da, a_prev, f_prev, d_prev)
            break
        a_prev, f_prev, d_prev = a, fa, da
        a = 2.0 * a
    else:
        out = None
    if out is None:
        exc = LineSearchFailed(f"no strong-Wolfe point within {max_trials} trials")
        exc.best = best
        raise exc
    return out[0], out[1], out[2], trials


def bfgs(fun: Callable, x0, settings: BFGSSettings = BFGSSettings(),
         callback: Callable | None = None) -> BFGSResult:
    """Minimize ``fun(x) -> (f, g)`` by BFGS with an inverse-Hessian update.

    Trial points where ``fun`` raises a NumericError or returns a non-finite
    value count as +inf. ``callback(k, x, f, g, step)`` runs after every
    accepted step (k = 0 for the initial point).
    """
    ev = _Counter(fun)
    x = np.array(x0, dtype=float)
    f, g = ev(x)
    if g is None:
        raise NumericError("objective is not finite at the initial point")
    n = x.size
    H = np.eye(n)
    scaled = False
    failures = 0
    history = []
    if callback:
        callback(0, x, f, g, 0.0)
    status, message = "max_iter", ""
    k = 0
    for k in range(1, settings.max_iter + 1):
        gnorm = float(np.max(np.abs(g))) if n else 0.0
        if gnorm <= settings.gtol * max(1.0, abs(f)):
            status, k = "gtol", k - 1
            break
        p = -H @ g
        slope = float(g @ p)
        if not slope < 0.0:
            H = np.eye(n) * (1.0 if not scaled else float(np.mean(np.diag(H))))
            p = -H @ g
            slope = float(g @ p)
        pnorm = float(np.linalg.norm(p))
        alpha1 = 1.0 if scaled else min(1.0, settings.max_step / pnorm)

        def phi(a):
            fa, ga = ev(x + a * p)
            return fa, (float(ga @ p) if ga is not None else None), ga

        try:
            alpha, f_new, g_new, _ = strong_wolfe(phi, f, slope, alpha1, settings.c1,
                                                  settings.c2, settings.max_ls, settings.f_noise)
        except LineSearchFailed as exc:
            if exc.best is None:
                status, message, k = "line_search_failed", str(exc), k - 1
                break
            # accept the best sufficient-decrease point seen
            alpha, f_new, g_new = exc.best
            message = "accepted an Armijo point without curvature condition"
        s = alpha * p
        y = g_new - g
        sy = float(s @ y)
        x_new = x + s
        decrease = f - f_new
        x, f, g = x_new, f_new, g_new
        if sy > 1e-14 * float(np.linalg.norm(s) * np.linalg.norm(y)):
            failures = 0
            if not scaled:
                H = np.eye(n) * (sy / float(y @ y))
                scaled = True
            rho = 1.0 / sy
            Hy = H @ y
            H = H + (rho * rho * float(y @ Hy) + rho) * np.outer(s, s) \
                - rho * (np.outer(Hy, s) + np.outer(s, Hy))
            H = 0.5 * (H + H.T)
        else:
            failures += 1
            if failures >= settings.reset_after:
                H = np.eye(n) * (abs(sy) / float(y @ y) if y @ y > 0 else 1.0)
                failures = 0
        if callback:
            callback(k, x, f, g, float(np.linalg.norm(s)))
        history.append((k, f))
        if np.linalg.norm(s) <= settings.xtol * max(1.0, float(np.linalg.norm(x))):
            status = "xtol"
            break
        if settings.ftol > 0 and decrease <= settings.ftol * max(1.0, abs(f)):
            status = "ftol"
            break
    return BFGSResult(x, f, g, k, ev.n, status, message, history)


# ---------------------------------------------------------------- shape loop

HISTORY_COLUMNS = ["iteration", "total", "cost", "chi2_b", "chi2_j", "pen_perimeter",
                   "pen_distance", "pen_reach", "distance", "area", "reach", "grad_norm",
                   "step", "n_eval"]


@dataclass
class OptimizationResult:
    surface: FourierSurface
    history: list  # rows keyed by HISTORY_COLUMNS
    status: str
    message: str
    bfgs: BFGSResult


def run_bfgs(initial: FourierSurface, target, settings: SolverSettings,
             penalty: PenaltyConfig = PenaltyConfig(), opt: BFGSSettings = BFGSSettings(),
             free_ids=None, on_iterate: Callable | None = None) -> OptimizationResult:
    """Optimize the free Fourier coefficients of ``initial``.

    ``free_ids`` restricts the optimization to a subset of
    ``initial.coefficient_ids()``; ``on_iterate(row, surface)`` receives each
    history row as soon as it is accepted.
    """
    ids = list(initial.coefficient_ids() if free_ids is None else free_ids)
    known = set(initial.coefficient_ids())
    for cid in ids:
        if cid not in known:
            raise ValueError(f"coefficient {cid} is outside the surface truncation")
    cache: dict = {}
    counter = {"n": 0}

    def fun(x):
        counter["n"] += 1
        surf = initial.with_vector(x, ids)
        ev = evaluate(surf, target, settings, penalty, ids)
        cache[x.tobytes()] = ev
        return ev.total, ev.gradient.dTotal

    history: list = []

    def callback(k, x, f, g, step):
        ev = cache[x.tobytes()]
        mesh = ev.state.mesh
        rep = geometry_report(mesh, None, penalty.reach_cutoff)
        res = ev.state.result
        row = {
            "iteration": k, "total": f, "cost": res.cost, "chi2_b": res.chi2_b,
            "chi2_j": res.chi2_j, "pen_perimeter": ev.penalties.values["perimeter"],
            "pen_distance": ev.penalties.values["distance"],
            "pen_reach": ev.penalties.values["reach"],
            "distance": min_distance(mesh, target.plasma_mesh), "area": rep.area,
            "reach": rep.reach_estimate, "grad_norm": float(np.linalg.norm(g)),
            "step": step, "n_eval": counter["n"],
        }
        history.append(row)
        cache.clear()
        cache[x.tobytes()] = ev
        if on_iterate:
            on_iterate(row, ev.surface)

    res = bfgs(fun, initial.vector(ids), opt, callback)
    return OptimizationResult(initial.with_vector(res.x, ids), history, res.status,
                              res.message, res)
