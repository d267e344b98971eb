"""Least-squares fitting of the actuator torque relations.

The two-exponential torque-angle relation is fitted with a Levenberg-Marquardt
iteration started from a fixed grid of decay rates, with the linear
amplitudes of each start obtained by solving the linear subproblem (variable
projection).  The torque-pressure relation is an ordinary linear regression.
"""

from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .errors import (DegenerateDesignError, DomainError, FitFailure,
                     InsufficientDataError, UndefinedRSquaredError)
from .models import (AA_RANGE_DEG, MAX_PRESSURE_KPA, REFERENCE_PRESSURE_KPA,
                     ActuatorVariant, TorqueModel, get_variant)

DEFAULT_RATE_GRID = (-0.05, -0.02, -0.005, 0.0)
FTOL = 1e-10
MAX_ITER = 200
GTOL = 1e-6

# Band over which the torque output is effectively constant.
PLATEAU_BAND_DEG = (180.0, 270.0)


@dataclass(frozen=True)
class FitReport:
    """Outcome of a fit.

    ``parameters`` is a dict; for the torque-angle fit it has keys a, b, c, d
    and for the torque-pressure fit f, g.  ``gradient_norm`` is the largest
    cosine between the residual vector and a Jacobian column, so it is scale
    free; a converged fit has it below ``GTOL`` or zero residual.
    """

    parameters: dict
    r_squared: float
    residual_norm: float
    iterations: int
    converged: bool
    gradient_norm: float = 0.0

    def model(self, **kwargs) -> TorqueModel:
        p = self.parameters
        return TorqueModel(p["a"], p["b"], p["c"], p["d"], **kwargs)


def _as_samples(x, y, min_count):
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise DomainError("x and y must have the same length")
    if x.size < min_count:
        raise InsufficientDataError(
            f"need at least {min_count} samples, got {x.size}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise DomainError("samples must be finite")
    return x, y


def r_squared(x, y, predictor) -> float:
    """Coefficient of determination ``1 - SS_res / SS_tot`` (not clamped)."""
    x, y = _as_samples(x, y, 2)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        raise UndefinedRSquaredError("R^2 is undefined when y has zero variance")
    pred = np.asarray(predictor(x), dtype=float)
    ss_res = float(np.sum((y - pred) ** 2))
    return 1.0 - ss_res / ss_tot


def _r_squared_or_exact(x, y, predictor):
    # constant data reproduced exactly counts as a perfect fit
    try:
        return r_squared(x, y, predictor)
    except UndefinedRSquaredError:
        resid = y - np.asarray(predictor(x), dtype=float)
        return 1.0 if np.all(resid == 0) else float("nan")


def _two_exp(theta, x):
    a, b, c, d = theta
    return a * np.exp(b * x) + c * np.exp(d * x)


def _two_exp_jac(theta, x):
    a, b, c, d = theta
    eb = np.exp(b * x)
    ed = np.exp(d * x)
    return np.column_stack([eb, a * x * eb, ed, c * x * ed])


def _gradient_cosine(jac, resid):
    rnorm = np.linalg.norm(resid)
    if rnorm == 0.0:
        return 0.0
    col = np.linalg.norm(jac, axis=0)
    g = np.abs(jac.T @ resid)
    with np.errstate(divide="ignore", invalid="ignore"):
        cos = np.where(col > 0, g / (col * rnorm), 0.0)
    return float(np.max(cos))


def levenberg_marquardt(fun, jac, theta0, *, weights=None, ftol=FTOL,
                        gtol=GTOL, max_iter=MAX_ITER, cost_floor=0.0):
    """Minimize ``sum(w * fun(theta)**2)`` by Levenberg-Marquardt.

    ``fun`` returns the residual vector and ``jac`` its Jacobian.  Uses
    Marquardt's diagonal scaling.  A cost at or below ``cost_floor`` counts
    as an exact fit.  Returns ``(theta, cost, iterations, converged,
    gradient_cosine)``; ``cost`` is the weighted sum of squares.
    """
    theta = np.asarray(theta0, dtype=float).copy()
    sw = None if weights is None else np.sqrt(np.asarray(weights, dtype=float))

    def resid_at(t):
        r = np.asarray(fun(t), dtype=float)
        return r if sw is None else r * sw

    def jac_at(t):
        j = np.asarray(jac(t), dtype=float)
        return j if sw is None else j * sw[:, None]

    r = resid_at(theta)
    if not np.all(np.isfinite(r)):
        raise DomainError("residuals are not finite at the starting point")
    cost = float(r @ r)
    lam = 1e-3
    it = 0
    converged = False
    while it < max_iter:
        it += 1
        J = jac_at(theta)
        g = J.T @ r
        if cost <= cost_floor or _gradient_cosine(J, r) <= gtol:
            converged = True
            break
        A = J.T @ J
        diag = np.diag(A).copy()
        floor = 1e-12 * max(float(diag.max()), 1e-300)
        diag = np.maximum(diag, floor)
        accepted = False
        while lam < 1e16:
            try:
                step = np.linalg.solve(A + lam * np.diag(diag), -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            trial = theta + step
            with np.errstate(over="ignore", invalid="ignore"):
                r_new = resid_at(trial)
                new_cost = float(r_new @ r_new)
            if np.isfinite(new_cost):
                if new_cost < cost:
                    accepted = True
                    break
            lam *= 10.0
        if not accepted:
            # no descent direction left at working precision
            converged = _gradient_cosine(J, r) <= gtol or cost <= cost_floor
            break
        rel_change = (cost - new_cost) / cost
        theta, r, cost = trial, r_new, new_cost
        lam = max(lam / 10.0, 1e-12)
        if rel_change < ftol:
            J = jac_at(theta)
            converged = _gradient_cosine(J, r) <= gtol or cost <= cost_floor
            break
    gcos = _gradient_cosine(jac_at(theta), r)
    if cost <= cost_floor:
        # cosine is meaningless once residuals are rounding noise
        converged, gcos = True, 0.0
    return theta, cost, it, converged, gcos


def _canonical(theta):
    a, b, c, d = theta
    if b > d:
        return np.array([c, d, a, b])
    return np.array([a, b, c, d])


def default_starts(x, y, weights=None, rates=DEFAULT_RATE_GRID):
    """Initial parameter vectors for the two-exponential fit.

    One start per pair of distinct grid rates ``b < d``; amplitudes come from
    the linear least-squares problem with the rates held fixed.
    """
    w = np.ones_like(y) if weights is None else np.asarray(weights, dtype=float)
    sw = np.sqrt(w)
    starts = []
    for b0, d0 in itertools.combinations(sorted(rates), 2):
        E = np.column_stack([np.exp(b0 * x), np.exp(d0 * x)])
        amp, *_ = np.linalg.lstsq(E * sw[:, None], y * sw, rcond=None)
        starts.append(np.array([amp[0], b0, amp[1], d0]))
    return starts


def fit_torque_angle(angles, torques, init=None, weights=None) -> FitReport:
    """Fit ``a*exp(b*A) + c*exp(d*A)`` to torque-angle samples.

    Parameters
    ----------
    angles, torques : array-like
        A-A' angles in degrees (within [0, 270]) and torques in N-m.  At
        least four samples.
    init : sequence of 4 floats, optional
        Single starting point ``(a, b, c, d)``.  Without it every start from
        :func:`default_starts` is run and the lowest residual wins, ties going
        to the earlier start.  The winner's own ``converged`` flag is
        reported.
    weights : array-like, optional
        Non-negative per-sample weights.

    Raises
    ------
    FitFailure
        When no start converges; ``best`` holds the lowest-residual attempt.
    """
    x, y = _as_samples(angles, torques, 4)
    lo, hi = AA_RANGE_DEG
    if np.any(x < lo) or np.any(x > hi):
        raise DomainError(f"angles must lie in [{lo:g}, {hi:g}]")
    starts = [np.asarray(init, dtype=float)] if init is not None else \
        default_starts(x, y, weights)

    w = np.ones_like(y) if weights is None else np.asarray(weights, dtype=float)
    # residuals at the rounding level of the data count as an exact fit
    cost_floor = float(np.sum(w * (1e-13 * np.max(np.abs(y)) + 1e-300) ** 2))
    best = None
    any_converged = False
    for theta0 in starts:
        try:
            theta, cost, it, conv, gcos = levenberg_marquardt(
                lambda t: _two_exp(t, x) - y, lambda t: _two_exp_jac(t, x),
                theta0, weights=weights, cost_floor=cost_floor)
        except DomainError:
            continue
        attempt = (cost, _canonical(theta), it, conv, gcos)
        if best is None or cost < best[0]:
            best = attempt
        any_converged = any_converged or conv

    if best is None:
        raise FitFailure("every starting point produced non-finite residuals")
    report = _angle_report(x, y, *best)
    if not any_converged:
        raise FitFailure("torque-angle fit did not converge from any start",
                         best=report)
    return report


def _angle_report(x, y, cost, theta, it, conv, gcos):
    resid = _two_exp(theta, x) - y
    params = dict(zip("abcd", (float(v) for v in theta)))
    return FitReport(
        parameters=params,
        r_squared=_r_squared_or_exact(x, y, lambda xx: _two_exp(theta, xx)),
        residual_norm=float(np.linalg.norm(resid)),
        iterations=it,
        converged=conv,
        gradient_norm=gcos,
    )


def fit_torque_pressure(pressures, torques, fix_g_to_zero=True) -> FitReport:
    """Closed-form least-squares line ``T = f*P + g``.

    With ``fix_g_to_zero`` the line is forced through the origin, matching
    the observation that an unpressurized actuator produces no torque.
    """
    x, y = _as_samples(pressures, torques, 2)
    if np.any(x < 0) or np.any(x > MAX_PRESSURE_KPA):
        raise DomainError(f"pressures must lie in [0, {MAX_PRESSURE_KPA:g}]")
    if fix_g_to_zero:
        sxx = float(x @ x)
        if sxx == 0.0:
            raise DegenerateDesignError("all pressures are zero")
        f, g = float(x @ y) / sxx, 0.0
    else:
        if np.all(x == x[0]):
            raise DegenerateDesignError("all pressures are identical")
        xm, ym = x.mean(), y.mean()
        f = float(np.sum((x - xm) * (y - ym)) / np.sum((x - xm) ** 2))
        g = float(ym - f * xm)
    resid = f * x + g - y
    return FitReport(
        parameters={"f": f, "g": g},
        r_squared=_r_squared_or_exact(x, y, lambda xx: f * xx + g),
        residual_norm=float(np.linalg.norm(resid)),
        iterations=1,
        converged=True,
    )


# -- reference models from published torque anchors ---------------------------
#
# A two-exponential curve cannot in general pass through the peak, the 90 deg
# value and a flat plateau at both 180 and 270 deg (for D2 no real solution
# exists at all).  The reference model therefore hits the peak and the 90 deg
# anchor exactly, has the plateau value as its mean over 180..270 deg, and
# uses the one remaining degree of freedom to make the band as flat as
# possible (least variance over the band).


def _band_mean_exp(k):
    """Mean of exp(k*A) over the plateau band, stable for small |k|."""
    lo, hi = PLATEAU_BAND_DEG
    width = hi - lo
    k = np.asarray(k, dtype=float)
    kw = k * width
    small = np.abs(kw) < 1e-8
    safe = np.where(small, 1.0, kw)
    ratio = np.where(small, 1.0 + kw / 2.0, np.expm1(safe) / safe)
    return np.exp(k * lo) * ratio


def _endpoint_amplitudes(b, d, peak, t90):
    """Solve a + c = peak and a*e^(90b) + c*e^(90d) = t90."""
    eb = np.exp(90.0 * b)
    ed = np.exp(90.0 * d)
    with np.errstate(divide="ignore", invalid="ignore"):
        c = (t90 - peak * eb) / (ed - eb)
    return peak - c, c


def _band_stats(b, d, peak, t90):
    a, c = _endpoint_amplitudes(b, d, peak, t90)
    mean = a * _band_mean_exp(b) + c * _band_mean_exp(d)
    second = (a * a * _band_mean_exp(2 * b) + 2 * a * c * _band_mean_exp(b + d)
              + c * c * _band_mean_exp(2 * d))
    return a, c, mean, second - mean * mean


def _constrained_candidates(peak, t90, plateau, b_grid, d_grid):
    """Grid cells where the band-mean constraint changes sign, by variance."""
    B, D = np.meshgrid(b_grid, d_grid, indexing="ij")
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        _, _, mean, var = _band_stats(B, D, peak, t90)
    h = mean - plateau
    valid = (D > B) & np.isfinite(h) & np.isfinite(var)
    pair = valid[:, :-1] & valid[:, 1:]
    crossing = pair & ((h[:, :-1] == 0.0) | (h[:, :-1] * h[:, 1:] < 0))
    ii, jj = np.nonzero(crossing)
    order = np.argsort(var[ii, jj], kind="stable")
    return [(float(var[ii[k], jj[k]]), int(ii[k]), int(jj[k])) for k in order]


def _mean_constrained_rate(b, peak, t90, plateau, d_hint):
    """Rate ``d`` (> b) giving the plateau as band mean, nearest ``d_hint``."""
    d_grid = np.linspace(b + 1e-6, b + 0.2, 801)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        h = _band_stats(b, d_grid, peak, t90)[2] - plateau
    ok = np.isfinite(h[:-1]) & np.isfinite(h[1:])
    idx = np.flatnonzero(ok & (np.sign(h[:-1]) * np.sign(h[1:]) <= 0))
    if idx.size == 0:
        return None
    j = idx[np.argmin(np.abs(d_grid[idx] - d_hint))]
    if h[j] == 0.0:
        return float(d_grid[j])
    return optimize.brentq(
        lambda d: _band_stats(b, d, peak, t90)[2] - plateau,
        d_grid[j], d_grid[j + 1], xtol=1e-15, rtol=1e-15, maxiter=200)


def derive_reference_model(variant: ActuatorVariant) -> TorqueModel:
    """Torque model reproducing a variant's published torque anchors.

    ``T(0)`` equals the peak torque and ``T(90)`` the 90 deg torque; the mean
    torque over 180..270 deg equals the plateau torque.  Among all curves
    meeting those three conditions the one with least variance over the
    plateau band is returned.  Results are cached per variant.
    """
    return _derive_cached(variant)


@functools.lru_cache(maxsize=None)
def _derive_cached(variant: ActuatorVariant) -> TorqueModel:
    peak = variant.peak_torque_nm
    t90 = variant.torque_90_nm
    plateau = variant.plateau_torque_nm
    f = t90 / REFERENCE_PRESSURE_KPA
    if peak == t90 == plateau:
        return TorqueModel(peak, 0.0, 0.0, 0.0, f=f)

    step = 5e-4
    grid = np.arange(-0.12, 0.04 + step / 2, step)
    candidates = _constrained_candidates(peak, t90, plateau, grid, grid)
    if not candidates:
        raise FitFailure(f"variant {variant.name}: no two-exponential curve "
                         "matches its torque anchors")

    best = None
    for _, i, j in candidates[:8]:
        b0, d_hint = grid[i], 0.5 * (grid[j] + grid[j + 1])

        def objective(b):
            d = _mean_constrained_rate(b, peak, t90, plateau, d_hint)
            if d is None:
                return 1e300
            return float(_band_stats(b, d, peak, t90)[3])

        res = optimize.minimize_scalar(
            objective, bounds=(b0 - 2 * step, b0 + 2 * step), method="bounded",
            options={"xatol": 1e-13})
        b = float(res.x)
        d = _mean_constrained_rate(b, peak, t90, plateau, d_hint)
        if d is None or d <= b:
            continue
        a, c, _, var = _band_stats(b, d, peak, t90)
        if best is None or var < best[0]:
            best = (float(var), float(a), b, float(c), float(d))
    if best is None:
        raise FitFailure(f"variant {variant.name}: constrained solve failed")
    _, a, b, c, d = best
    return TorqueModel(a, b, c, d, f=f)


def reference_model(variant) -> TorqueModel:
    """Reference model for a variant object or variant name."""
    if isinstance(variant, str):
        variant = get_variant(variant)
    return derive_reference_model(variant)
