"""Quenched walk X_n in a fixed environment, plus trajectory I/O."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numba as nb
import numpy as np

from rwre_lil import _rng
from rwre_lil.environment import EnvironmentView, fill_kernel
from rwre_lil.errors import NotUnitVector, ParseError

MAX_HORIZON = 2**40
UNIT_TOL = 1e-12


@dataclass(frozen=True)
class WalkSeed:
    replica_seed: int

    @property
    def key(self) -> int:
        return _rng.stream_key_py(self.replica_seed, _rng.TAG_WALK)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Path X_0..X_n. `positions` has shape (n + 1, d); `steps` holds direction
    indices in the fixed enumeration (+e1, -e1, ..., -ed)."""

    positions: np.ndarray
    steps: np.ndarray

    @property
    def start(self) -> np.ndarray:
        return self.positions[0]

    @property
    def horizon(self) -> int:
        return self.steps.shape[0]

    @property
    def dimension(self) -> int:
        return self.positions.shape[1]

    def __eq__(self, other):
        if not isinstance(other, Trajectory):
            return NotImplemented
        return np.array_equal(self.positions, other.positions) and np.array_equal(
            self.steps, other.steps
        )


def direction_vectors(d: int) -> np.ndarray:
    """Row j is the unit vector of direction index j."""
    e = np.zeros((2 * d, d), dtype=np.int64)
    for j in range(2 * d):
        e[j, j // 2] = 1 if j % 2 == 0 else -1
    return e


@nb.njit(cache=True)
def sample_direction(probs, u):
    """Inverse CDF over the fixed enumeration."""
    acc = 0.0
    m = probs.shape[0]
    for j in range(m - 1):
        acc += probs[j]
        if u < acc:
            return j
    return m - 1


@nb.njit(cache=True)
def _simulate(code, kappa, k1, k2, param, env_key, walk_key, start, n, positions, steps):
    d = start.shape[0]
    probs = np.empty(2 * d)
    pos = start.copy()
    for i in range(d):
        positions[0, i] = pos[i]
    if code == 0:
        fill_kernel(code, kappa, k1, k2, param, env_key, pos, probs)
    for k in range(n):
        if code != 0:
            fill_kernel(code, kappa, k1, k2, param, env_key, pos, probs)
        j = sample_direction(probs, _rng.to_unit(_rng.draw(walk_key, k)))
        steps[k] = j
        if j % 2 == 0:
            pos[j // 2] += 1
        else:
            pos[j // 2] -= 1
        for i in range(d):
            positions[k + 1, i] = pos[i]


def simulate(env: EnvironmentView, start, horizon: int, seed: WalkSeed) -> Trajectory:
    """Run `horizon` steps of the walk in `env` from `start`.

    Step k uses the uniform number k of the stream keyed by `seed`, so the
    path is a pure function of (env, start, horizon, seed).
    """
    d = env.model.dimension
    start = np.asarray(start, dtype=np.int64)
    if start.shape != (d,):
        raise ValueError(f"start must have {d} coordinates")
    if not (0 <= horizon <= MAX_HORIZON):
        raise ValueError(f"horizon must lie in [0, 2**40], got {horizon}")
    positions = np.empty((horizon + 1, d), dtype=np.int64)
    steps = np.empty(horizon, dtype=np.int8)
    code, kappa, k1, k2, param = env.model._packed
    _simulate(
        code, kappa, k1, k2, param,
        np.uint64(env.key), np.uint64(seed.key),
        start, horizon, positions, steps,
    )
    return Trajectory(positions, steps)


def check_unit(vec, name="ell") -> np.ndarray:
    v = np.asarray(vec, dtype=np.float64)
    if v.ndim != 1 or not np.all(np.isfinite(v)) or abs(np.linalg.norm(v) - 1.0) > UNIT_TOL:
        raise NotUnitVector(f"{name} must be a unit vector, got {vec!r}")
    return v


def projection(t: Trajectory, ell) -> np.ndarray:
    """Sequence X_k . ell for k = 0..n."""
    ell = check_unit(ell)
    if ell.shape[0] != t.dimension:
        raise NotUnitVector(f"ell has {ell.shape[0]} components, walk lives in Z^{t.dimension}")
    return project_positions(t.positions, ell)


def project_positions(positions: np.ndarray, ell: np.ndarray) -> np.ndarray:
    # explicit left-to-right sum so every caller gets identical rounding
    out = positions[:, 0] * ell[0]
    for i in range(1, positions.shape[1]):
        out = out + positions[:, i] * ell[i]
    return out


def trajectory_header(d: int) -> list[str]:
    return ["step"] + [f"x{i + 1}" for i in range(d)] + ["proj"]


def write_trajectory_csv(t: Trajectory, ell, fh) -> None:
    """Columns step,x1..xd,proj; proj is the projection on `ell`."""
    proj = projection(t, ell)
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(trajectory_header(t.dimension))
    for k in range(t.positions.shape[0]):
        w.writerow([k, *t.positions[k].tolist(), repr(float(proj[k]))])


def read_trajectory_csv(fh) -> Trajectory:
    """Parse the trajectory format back. The `proj` column is ignored (it is
    recomputed against whatever ell the caller chooses)."""
    if isinstance(fh, str):
        fh = io.StringIO(fh)
    reader = csv.reader(fh)
    header = next(reader, None)
    if not header:
        raise ParseError("empty trajectory file", row=0)
    header = [h.strip() for h in header]
    if len(header) < 3 or header[0] != "step" or header[-1] != "proj":
        raise ParseError(f"unexpected header {header!r}", row=0)
    d = len(header) - 2
    if header[1:-1] != [f"x{i + 1}" for i in range(d)]:
        raise ParseError(f"unexpected coordinate columns {header[1:-1]!r}", row=0)

    rows = []
    for row_no, row in enumerate(reader, start=1):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != d + 2:
            raise ParseError(f"expected {d + 2} fields, got {len(row)}", row=row_no)
        try:
            step = int(row[0])
        except ValueError:
            raise ParseError(f"bad step {row[0]!r}", row=row_no, column=1) from None
        if step != len(rows):
            raise ParseError(f"step {step} out of sequence", row=row_no, column=1)
        coords = []
        for i in range(d):
            try:
                coords.append(int(row[i + 1]))
            except ValueError:
                raise ParseError(f"bad coordinate {row[i + 1]!r}", row=row_no, column=i + 2) from None
        rows.append(coords)
    if not rows:
        raise ParseError("trajectory file has no data rows", row=1)

    positions = np.array(rows, dtype=np.int64).reshape(len(rows), d)
    diffs = np.diff(positions, axis=0)
    steps = np.empty(len(rows) - 1, dtype=np.int8)
    for k, delta in enumerate(diffs):
        nz = np.flatnonzero(delta)
        if nz.size != 1 or abs(delta[nz[0]]) != 1:
            # row numbers count the header as row 0
            raise ParseError(f"non-unit step {delta.tolist()}", row=k + 2)
        axis = int(nz[0])
        steps[k] = 2 * axis + (0 if delta[axis] > 0 else 1)
    return Trajectory(positions, steps)
