"""Regeneration times of a walk along a direction ell.

Two routes compute the same thing:

* `first_regeneration_oracle` runs the ladder recursion literally
  (S_{k+1} = T_{>= M_k + 1}, R_{k+1} = S_{k+1} + D o theta_{S_{k+1}},
  M_{k+1} = max proj[0..R_{k+1}]) using the stopping-time helpers below.
  `regenerations_by_oracle` re-applies it block by block.
* `detect_regenerations` is a compiled single left-to-right pass with a
  suffix-minimum table, O(horizon).

A finite path can never show R_j = infinity, so a candidate S_j whose
projection stays at or above proj[S_j] up to the horizon is accepted only if
at least `guard` further steps were observed (CensorPolicy). The first
candidate failing that test ends the scan; everything from it on is the
censored tail.
"""

from __future__ import annotations

import csv
import math
import operator
from dataclasses import dataclass

import numba as nb
import numpy as np

from rwre_lil.errors import Censored, IndexOutOfRange, InsufficientRegenerations, Undetermined
from rwre_lil.walk import Trajectory, check_unit

INF = math.inf
DEFAULT_GUARD = 1000


@dataclass(frozen=True)
class CensorPolicy:
    guard: int = DEFAULT_GUARD

    def __post_init__(self):
        if self.guard < 0:
            raise ValueError(f"guard must be >= 0, got {self.guard}")


@dataclass(frozen=True)
class LadderState:
    k: int
    M: float
    S: float
    R: float


@dataclass(frozen=True, eq=False)
class RegenerationSequence:
    """Accepted times tau_1 < tau_2 < ... (tau_0 = 0 implicit).

    `censored_tail_from` is the time of the first candidate that could not be
    confirmed, or horizon + 1 when nothing was censored; k_n is known exactly
    for n < censored_tail_from.
    """

    times: np.ndarray
    censored_tail_from: int
    horizon: int
    guard: int
    rejected: int = 0
    # rejected candidates whose drop came more than `guard` steps later: on a
    # path cut at S + guard they would have been accepted (censoring bias)
    late_drops: int = 0

    def __eq__(self, other):
        if not isinstance(other, RegenerationSequence):
            return NotImplemented
        return (
            np.array_equal(self.times, other.times)
            and self.censored_tail_from == other.censored_tail_from
            and self.horizon == other.horizon
            and self.guard == other.guard
        )

    def __len__(self):
        return self.times.shape[0]


_HEAD = 8
_SCALAR_OPS = {np.less: operator.lt, np.greater_equal: operator.ge}


def _first_true(values, op, level):
    """Index of the first i with op(values[i], level), or None.

    Hits are usually within a few steps, so a short scalar scan comes before
    the vectorised one.
    """
    test = _SCALAR_OPS[op]
    for j, x in enumerate(values[:_HEAD].tolist()):
        if test(x, level):
            return j
    if values.shape[0] <= _HEAD:
        return None
    tail = op(values[_HEAD:], level)
    j = int(tail.argmax())
    return _HEAD + j if tail[j] else None


def stopping_time_D(proj, start: int = 0):
    """Smallest m >= 0 with proj[start + m] < proj[start]; None if the
    projection never drops strictly below within the sequence."""
    proj = np.asarray(proj, dtype=np.float64)
    if not (0 <= start < proj.shape[0]):
        raise IndexOutOfRange(f"start {start} outside [0, {proj.shape[0]})")
    return _first_true(proj[start:], np.less, proj[start])


def stopping_time_T(proj, level: float):
    """Smallest n with proj[n] >= level; None if the level is never reached."""
    proj = np.asarray(proj, dtype=np.float64)
    return _first_true(proj, np.greater_equal, level)


def first_regeneration_oracle(proj, policy: CensorPolicy = CensorPolicy()):
    """tau_1 = S_K by the literal ladder recursion.

    Returns (tau_1, final LadderState) or raises Censored.
    """
    proj = np.asarray(proj, dtype=np.float64)
    if proj.shape[0] == 0:
        raise ValueError("empty projection")
    horizon = proj.shape[0] - 1
    M = proj[0]
    k = 0
    while True:
        S = stopping_time_T(proj, M + 1.0)
        if S is None:
            raise Censored(f"level {M + 1.0} never reached after {k} ladder steps")
        k += 1
        d = stopping_time_D(proj, S)
        if d is None:
            if S + policy.guard <= horizon:
                return S, LadderState(k, float(M), S, INF)
            raise Censored(f"candidate {S} has only {horizon - S} confirming steps", S)
        R = S + d
        M = proj[: R + 1].max()


def regenerations_by_oracle(proj, policy: CensorPolicy = CensorPolicy()) -> RegenerationSequence:
    """Apply the oracle to the path re-based at tau_0, tau_1, ... in turn."""
    proj = np.asarray(proj, dtype=np.float64)
    horizon = proj.shape[0] - 1
    times = []
    base = 0
    censored = horizon + 1
    while True:
        shifted = proj[base:] - proj[base]
        try:
            tau, _ = first_regeneration_oracle(shifted, policy)
        except Censored as exc:
            if exc.candidate is not None:
                censored = base + exc.candidate
            break
        base += tau
        times.append(base)
    return RegenerationSequence(np.array(times, dtype=np.int64), censored, horizon, policy.guard)


@nb.njit(cache=True)
def _detect(proj, guard):
    n = proj.shape[0]
    horizon = n - 1
    sufmin = np.empty(n + 1)
    sufmin[n] = np.inf
    for i in range(n - 1, -1, -1):
        sufmin[i] = min(proj[i], sufmin[i + 1])

    times = np.empty(n, dtype=np.int64)
    count = 0
    rejected = 0
    late = 0
    censored = horizon + 1
    base = proj[0]
    top = 0.0  # running max of the re-based path since the last regeneration
    i = 0
    while True:
        target = top + 1.0
        while i <= horizon:
            x = proj[i] - base
            if x >= target:
                break
            if x > top:
                top = x
            i += 1
        if i > horizon:
            break
        S = i
        level = proj[S] - base
        if level > top:
            top = level
        if sufmin[S + 1] - base < level:
            # D finite: walk forward to R and keep the running max
            i = S + 1
            while True:
                x = proj[i] - base
                if x > top:
                    top = x
                if x < level:
                    break
                i += 1
            rejected += 1
            if i - S > guard:
                late += 1
            i += 1
            continue
        if S + guard > horizon:
            censored = S
            break
        times[count] = S
        count += 1
        base = proj[S]
        top = 0.0
        i = S
    return times[:count].copy(), censored, rejected, late


def detect_regenerations(proj, policy: CensorPolicy = CensorPolicy()) -> RegenerationSequence:
    """All accepted regeneration times of `proj` in one O(horizon) pass."""
    proj = np.ascontiguousarray(proj, dtype=np.float64)
    if proj.shape[0] == 0:
        raise ValueError("empty projection")
    times, censored, rejected, late = _detect(proj, policy.guard)
    return RegenerationSequence(times, int(censored), proj.shape[0] - 1, policy.guard, int(rejected), int(late))


def count_kn(r: RegenerationSequence, n: int) -> int:
    """Largest k with tau_k <= n (tau_0 = 0)."""
    if n < 0 or n > r.horizon or n >= r.censored_tail_from:
        raise Undetermined(f"k_n unknown for n={n} (censored from {r.censored_tail_from})")
    return int(np.searchsorted(r.times, n, side="right"))


@dataclass(frozen=True, eq=False)
class RegenSamples:
    """Per-block increments, one row per block k = 1..K (columnar).

    `first_block` marks k = 1, whose law is P^0 rather than P^0(. | D = inf).
    """

    delta_tau: np.ndarray
    delta_x: np.ndarray
    block_sup: np.ndarray
    first_block: np.ndarray
    tau: np.ndarray | None = None

    def __len__(self):
        return self.delta_tau.shape[0]

    @property
    def dimension(self) -> int:
        return self.delta_x.shape[1]

    def later(self) -> "RegenSamples":
        """Only blocks k >= 2."""
        keep = ~self.first_block
        return RegenSamples(
            self.delta_tau[keep], self.delta_x[keep], self.block_sup[keep], self.first_block[keep],
            None if self.tau is None else self.tau[keep],
        )

    def first(self) -> "RegenSamples":
        keep = self.first_block
        return RegenSamples(
            self.delta_tau[keep], self.delta_x[keep], self.block_sup[keep], self.first_block[keep],
            None if self.tau is None else self.tau[keep],
        )

    @staticmethod
    def concat(parts) -> "RegenSamples":
        parts = list(parts)
        if not parts:
            raise InsufficientRegenerations("no samples to merge")
        return RegenSamples(
            np.concatenate([p.delta_tau for p in parts]),
            np.concatenate([p.delta_x for p in parts]),
            np.concatenate([p.block_sup for p in parts]),
            np.concatenate([p.first_block for p in parts]),
            None,
        )


def block_samples(t: Trajectory, times) -> RegenSamples:
    """One row per block between consecutive times of (0, *times)."""
    times = np.asarray(times, dtype=np.int64)
    tau = np.concatenate(([0], times))
    pos = t.positions
    x = pos[tau]
    delta_tau = np.diff(tau)
    delta_x = np.diff(x, axis=0)
    # sup over m in [tau_{k-1}, tau_k] of |X_m - X_{tau_{k-1}}|
    owner = np.repeat(np.arange(delta_tau.size), delta_tau)
    rel = (pos[1: tau[-1] + 1] - x[:-1][owner]).astype(np.float64)
    norms = np.sqrt(np.einsum("ij,ij->i", rel, rel))
    block_sup = np.maximum.reduceat(norms, tau[:-1]) if norms.size else np.zeros(0)
    first = np.zeros(delta_tau.size, dtype=bool)
    first[:1] = True
    return RegenSamples(delta_tau, delta_x, block_sup, first, times.copy())


def extract_samples(t: Trajectory, r: RegenerationSequence, ell=None) -> RegenSamples:
    """Blocks (tau_{k-1}, tau_k] for k = 1..K; needs K >= 2 so that at least one
    block has the conditioned law. `ell`, if given, is only validated."""
    if ell is not None:
        check_unit(ell)
    if len(r) < 2:
        raise InsufficientRegenerations(f"{len(r)} regeneration(s); need at least 2")
    return block_samples(t, r.times)


def z_increment(s: RegenSamples, v, u) -> np.ndarray:
    """Z_k^u = (delta_x - delta_tau v) . u for every block of `s`."""
    v = np.asarray(v, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    centred = s.delta_x - s.delta_tau[:, None] * v[None, :]
    out = centred[:, 0] * u[0]
    for i in range(1, u.shape[0]):
        out = out + centred[:, i] * u[i]
    return out


def regeneration_header(d: int) -> list[str]:
    return ["k", "tau_k", "delta_tau"] + [f"dx{i + 1}" for i in range(d)] + ["block_sup"]


def write_regeneration_csv(s: RegenSamples, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(regeneration_header(s.dimension))
    tau = s.tau if s.tau is not None else np.cumsum(s.delta_tau)
    for k in range(len(s)):
        w.writerow([
            k + 1, int(tau[k]), int(s.delta_tau[k]), *s.delta_x[k].tolist(), repr(float(s.block_sup[k])),
        ])
