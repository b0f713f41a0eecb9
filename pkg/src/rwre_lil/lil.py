"""LIL statistic, its three-term regeneration decomposition and error-term decay.

For a path started at X_0 the statistic at time n is

    (X_n - X_0 - n v) . u / (E[tau]^(-1/2) * sqrt(2 c_u n log log sqrt(n)))

and it splits exactly as main + term2 + term3 with

    main  = sum_{j <= k_n} Z_j / (E[tau]^(-1/2) phi(c_u k_n))
            * sqrt(k_n log log sqrt(c_u k_n) / (n log log sqrt(n)))
    term2 = (X_n - X_{tau_{k_n}}) . u / denominator
    term3 = -(n - tau_{k_n}) (v . u) / denominator

The minus sign on term3 is what makes the split exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numba as nb
import numpy as np

from rwre_lil.errors import DomainError, NonpositiveVariance, Undetermined
from rwre_lil.regeneration import RegenerationSequence, count_kn
from rwre_lil.statistics import E_SQUARED, phi
from rwre_lil.walk import Trajectory, check_unit


def dyadic_checkpoints(jmin: int, jmax: int) -> np.ndarray:
    return np.array([2**j for j in range(jmin, jmax + 1)], dtype=np.int64)


def lil_denominator(n: int, c_u: float, mean_tau: float) -> float:
    if not n > E_SQUARED:
        raise DomainError(f"n must exceed e^2, got {n}")
    if not c_u > 0.0:
        raise NonpositiveVariance(f"c_u must be positive, got {c_u!r}")
    if not mean_tau >= 1.0:
        raise ValueError(f"mean_tau must be >= 1, got {mean_tau!r}")
    return mean_tau**-0.5 * math.sqrt(2.0 * c_u * n * math.log(math.log(math.sqrt(n))))


def _dot(x, u) -> float:
    total = x[0] * u[0]
    for i in range(1, len(u)):
        total = total + x[i] * u[i]
    return float(total)


def lil_statistic(t: Trajectory, n: int, v, c_u: float, mean_tau: float, u) -> float:
    """(X_n - X_0 - n v) . u over the LIL normaliser."""
    u = check_unit(u, "u")
    v = np.asarray(v, dtype=np.float64)
    if n > t.horizon:
        raise Undetermined(f"n={n} beyond horizon {t.horizon}")
    den = lil_denominator(n, c_u, mean_tau)
    disp = (t.positions[n] - t.positions[0]) - n * v
    return _dot(disp, u) / den


def clt_scaled(displacement, n: int, v, step_variance: float, u) -> float:
    """(X_n - X_0 - n v) . u / sqrt(n c_u / E[tau])."""
    v = np.asarray(v, dtype=np.float64)
    return _dot(np.asarray(displacement) - n * v, u) / math.sqrt(n * step_variance)


@nb.njit(cache=True)
def _compensated_cumsum(z):
    # Neumaier summation: near-zero partial sums of ~10^5 terms would
    # otherwise carry an absolute error of order K * eps * max|partial sum|
    out = np.empty_like(z)
    total = 0.0
    comp = 0.0
    for i in range(z.shape[0]):
        x = z[i]
        t = total + x
        if abs(total) >= abs(x):
            comp += (total - t) + x
        else:
            comp += (x - t) + total
        total = t
        out[i] = total + comp
    return out


def _block_z_cumsum(positions, times, v, u):
    """Cumulative sums of Z_j^u over blocks j = 1..K (tau_0 = 0)."""
    tau = np.concatenate(([0], times))
    x = positions[tau]
    dx = np.diff(x, axis=0)
    dt = np.diff(tau)
    centred = dx - dt[:, None] * v[None, :]
    z = centred[:, 0] * u[0]
    for i in range(1, u.shape[0]):
        z = z + centred[:, i] * u[i]
    return _compensated_cumsum(np.ascontiguousarray(z, dtype=np.float64))


def _terms_at(positions, times, zsum, n, v, c_u, mean_tau, u):
    k = int(np.searchsorted(times, n, side="right"))
    tau_k = int(times[k - 1]) if k else 0
    ck = c_u * k
    if not ck > E_SQUARED:
        raise DomainError(f"c_u * k_n = {ck!r} is not above e^2 at n={n}")
    den = lil_denominator(n, c_u, mean_tau)
    head = float(zsum[k - 1])
    scale = math.sqrt(k * math.log(math.log(math.sqrt(ck))) / (n * math.log(math.log(math.sqrt(n)))))
    main = head / (mean_tau**-0.5 * phi(ck)) * scale
    t2 = _dot(positions[n] - positions[tau_k], u) / den
    t3 = -((n - tau_k) * float(np.dot(v, u))) / den
    return main, t2, t3


def decomposition_terms(t: Trajectory, r: RegenerationSequence, n: int, v, c_u, mean_tau, u):
    """(main, term2, term3) at time n; they add up to lil_statistic."""
    u = check_unit(u, "u")
    v = np.asarray(v, dtype=np.float64)
    k = count_kn(r, n)
    times = r.times[:k]
    zsum = _block_z_cumsum(t.positions, times, v, u)
    return _terms_at(t.positions, times, zsum, n, v, c_u, mean_tau, u)


def running_extremes(values):
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ValueError("running extremes of an empty sequence")
    return np.fmax.accumulate(values), np.fmin.accumulate(values)


@dataclass(frozen=True, eq=False)
class LilCurve:
    checkpoints: np.ndarray
    statistic: np.ndarray
    term_main: np.ndarray
    term2: np.ndarray
    term3: np.ndarray
    running_max: np.ndarray
    running_min: np.ndarray


def lil_curve(positions, r: RegenerationSequence, checkpoints, v, c_u, mean_tau, u) -> LilCurve:
    """Statistic and decomposition at every checkpoint.

    Checkpoints whose k_n is censored, or where a logarithm is not yet
    defined, are NaN.
    """
    u = check_unit(u, "u")
    v = np.asarray(v, dtype=np.float64)
    checkpoints = np.asarray(checkpoints, dtype=np.int64)
    m = checkpoints.shape[0]
    stat = np.full(m, np.nan)
    main = np.full(m, np.nan)
    t2 = np.full(m, np.nan)
    t3 = np.full(m, np.nan)
    zsum = _block_z_cumsum(positions, r.times, v, u)
    start = positions[0]
    for i, n in enumerate(checkpoints.tolist()):
        if n > r.horizon:
            continue
        try:
            den = lil_denominator(n, c_u, mean_tau)
            stat[i] = _dot((positions[n] - start) - n * v, u) / den
            count_kn(r, n)
            main[i], t2[i], t3[i] = _terms_at(positions, r.times, zsum, n, v, c_u, mean_tau, u)
        except (Undetermined, DomainError):
            pass
    hi, lo = running_extremes(stat)
    return LilCurve(checkpoints, stat, main, t2, t3, hi, lo)


@dataclass(frozen=True)
class DecayTable:
    checkpoints: np.ndarray
    max_abs_t2: np.ndarray
    max_abs_t3: np.ndarray
    q50_abs_t2: np.ndarray
    q50_abs_t3: np.ndarray
    q99_abs_t2: np.ndarray
    q99_abs_t3: np.ndarray
    stat_max: np.ndarray
    stat_min: np.ndarray
    t2_decreasing: bool
    t3_decreasing: bool


def _nan_reduce(fn, a):
    out = np.full(a.shape[1], np.nan)
    for j in range(a.shape[1]):
        col = a[:, j]
        col = col[~np.isnan(col)]
        if col.size:
            out[j] = fn(col)
    return out


def error_term_report(curves) -> DecayTable:
    """Per checkpoint: max and quantiles over replicas of |term2|, |term3|."""
    curves = list(curves)
    if not curves:
        raise ValueError("no curves")
    cps = curves[0].checkpoints
    a2 = np.abs(np.stack([c.term2 for c in curves]))
    a3 = np.abs(np.stack([c.term3 for c in curves]))
    st = np.stack([c.statistic for c in curves])
    q99 = lambda col: np.quantile(col, 0.99)  # noqa: E731
    q50 = lambda col: np.quantile(col, 0.5)  # noqa: E731
    table = DecayTable(
        checkpoints=cps,
        max_abs_t2=_nan_reduce(np.max, a2),
        max_abs_t3=_nan_reduce(np.max, a3),
        q50_abs_t2=_nan_reduce(q50, a2),
        q50_abs_t3=_nan_reduce(q50, a3),
        q99_abs_t2=_nan_reduce(q99, a2),
        q99_abs_t3=_nan_reduce(q99, a3),
        stat_max=_nan_reduce(np.max, st),
        stat_min=_nan_reduce(np.min, st),
        t2_decreasing=False,
        t3_decreasing=False,
    )
    return replace(
        table,
        t2_decreasing=_trend_down(table.q99_abs_t2),
        t3_decreasing=_trend_down(table.q99_abs_t3),
    )


def _trend_down(col) -> bool:
    """Last finite value strictly below the first finite one."""
    finite = col[np.isfinite(col)]
    return bool(finite.size >= 2 and finite[-1] < finite[0])
