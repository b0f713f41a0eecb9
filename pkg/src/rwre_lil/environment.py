"""I.i.d. uniformly elliptic environments on Z^d.

Directions are enumerated as (+e1, -e1, +e2, -e2, ..., +ed, -ed); index j
moves along axis j // 2, forwards when j is even. Every kernel vector in the
package uses this order.

An environment is never stored. `kernel_at` hashes (env_seed, site) and
builds the kernel on the fly, so the same site always gets the same kernel
and distinct sites get independent ones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numba as nb
import numpy as np

from rwre_lil import _rng
from rwre_lil.errors import ConfigError, EllipticityViolation, NotStochastic

STOCHASTIC_TOL = 1e-12

POINT_MASS = 0
ELLIPTIC_PERTURBATION = 1
TWO_KERNEL_MIXTURE = 2


@dataclass(frozen=True, eq=False)
class TransitionKernel:
    probs: np.ndarray

    def __post_init__(self):
        p = np.array(self.probs, dtype=np.float64)
        if p.ndim != 1 or p.size < 2 or p.size % 2:
            raise ValueError(f"kernel needs 2d entries, got shape {p.shape}")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @property
    def dimension(self) -> int:
        return self.probs.size // 2

    def __eq__(self, other):
        if not isinstance(other, TransitionKernel):
            return NotImplemented
        return np.array_equal(self.probs, other.probs)

    def __hash__(self):
        return hash(self.probs.tobytes())

    def __repr__(self):
        return f"TransitionKernel({self.probs.tolist()})"


def as_kernel(k) -> TransitionKernel:
    return k if isinstance(k, TransitionKernel) else TransitionKernel(k)


def validate_kernel(k, kappa: float) -> None:
    """Raise unless `k` is a probability vector with every entry >= kappa."""
    p = as_kernel(k).probs
    total = math.fsum(p)
    if not np.all(np.isfinite(p)) or abs(total - 1.0) > STOCHASTIC_TOL:
        raise NotStochastic(f"kernel sums to {total!r}, not 1")
    if p.min() < kappa:
        j = int(np.argmin(p))
        raise EllipticityViolation(f"entry {j} is {p[j]!r} < kappa={kappa!r}")


def mean_drift(k) -> np.ndarray:
    """Expected one-step displacement sum_e p(e) e."""
    p = as_kernel(k).probs
    return p[0::2] - p[1::2]


def step_second_moment(k) -> np.ndarray:
    """E[(X_1 . e_i)(X_1 . e_j)] for a walk driven by the single kernel `k`."""
    p = as_kernel(k).probs
    return np.diag(p[0::2] + p[1::2])


def step_covariance(k) -> np.ndarray:
    m = mean_drift(k)
    return step_second_moment(k) - np.outer(m, m)


@dataclass(frozen=True)
class PointMass:
    base: TransitionKernel

    def __post_init__(self):
        object.__setattr__(self, "base", as_kernel(self.base))


@dataclass(frozen=True)
class EllipticPerturbation:
    """Random kernel kappa + (1 - 2d kappa) * ((1-spread) b + spread * w).

    b is the base kernel rescaled onto the unit simplex above kappa and w is
    a flat Dirichlet draw at the site. spread in [0, 1] tunes the disorder.
    """

    base: TransitionKernel
    spread: float

    def __post_init__(self):
        object.__setattr__(self, "base", as_kernel(self.base))


@dataclass(frozen=True)
class TwoKernelMixture:
    """k1 with probability `weight`, otherwise k2."""

    weight: float
    k1: TransitionKernel
    k2: TransitionKernel

    def __post_init__(self):
        object.__setattr__(self, "k1", as_kernel(self.k1))
        object.__setattr__(self, "k2", as_kernel(self.k2))


Variant = Union[PointMass, EllipticPerturbation, TwoKernelMixture]


@dataclass(frozen=True)
class EnvironmentModel:
    dimension: int
    kappa: float
    variant: Variant
    _packed: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        d, kappa, var = self.dimension, self.kappa, self.variant
        if not isinstance(d, (int, np.integer)) or d < 1:
            raise ConfigError(f"dimension must be an integer >= 1, got {d!r}")
        if not (0.0 < kappa <= 1.0 / (2 * d)):
            raise ConfigError(f"kappa must lie in (0, 1/(2d)], got {kappa!r}")
        zeros = np.zeros(2 * d)
        if isinstance(var, PointMass):
            kernels = [var.base]
            packed = (POINT_MASS, var.base.probs, zeros, 0.0)
        elif isinstance(var, EllipticPerturbation):
            if not (0.0 <= var.spread <= 1.0):
                raise ConfigError(f"spread must lie in [0, 1], got {var.spread!r}")
            kernels = [var.base]
            packed = (ELLIPTIC_PERTURBATION, var.base.probs, zeros, float(var.spread))
        elif isinstance(var, TwoKernelMixture):
            if not (0.0 <= var.weight <= 1.0):
                raise ConfigError(f"weight must lie in [0, 1], got {var.weight!r}")
            kernels = [var.k1, var.k2]
            packed = (TWO_KERNEL_MIXTURE, var.k1.probs, var.k2.probs, float(var.weight))
        else:
            raise ConfigError(f"unknown variant {var!r}")
        for k in kernels:
            if k.dimension != d:
                raise ConfigError(f"kernel {k!r} does not match dimension {d}")
            validate_kernel(k, kappa)
        object.__setattr__(self, "_packed", (packed[0], float(kappa)) + packed[1:])

    @property
    def is_homogeneous(self) -> bool:
        return isinstance(self.variant, PointMass)

    def to_json(self) -> dict:
        return {
            "dimension": int(self.dimension),
            "kappa": float(self.kappa),
            "variant": _variant_to_json(self.variant),
        }


@dataclass(frozen=True)
class EnvironmentView:
    """One environment omega: a model plus the seed that fixes every site."""

    model: EnvironmentModel
    env_seed: int

    @property
    def key(self) -> int:
        return _rng.stream_key_py(self.env_seed, _rng.TAG_ENV)

    def to_json(self) -> dict:
        out = self.model.to_json()
        out["env_seed"] = int(self.env_seed)
        return out


@nb.njit(cache=True)
def fill_kernel(code, kappa, k1, k2, param, env_key, pos, out):
    """Write the kernel at `pos` into `out`. Shared by kernel_at and the walk."""
    m = out.shape[0]
    if code == POINT_MASS:
        for j in range(m):
            out[j] = k1[j]
        return
    h = _rng.site_key(np.uint64(env_key), pos)
    if code == TWO_KERNEL_MIXTURE:
        src = k1 if _rng.to_unit(_rng.draw(h, 0)) < param else k2
        for j in range(m):
            out[j] = src[j]
        return
    # elliptic perturbation; w = spacings of m - 1 sorted uniforms (flat Dirichlet)
    free = 1.0 - m * kappa
    for j in range(m - 1):
        x = _rng.to_unit(_rng.draw(h, j))
        i = j
        while i > 0 and out[i - 1] > x:
            out[i] = out[i - 1]
            i -= 1
        out[i] = x
    prev = 0.0
    for j in range(m - 1):
        cur = out[j]
        out[j] = cur - prev
        prev = cur
    out[m - 1] = 1.0 - prev
    for j in range(m):
        b = (k1[j] - kappa) / free if free > 0.0 else 1.0 / m
        out[j] = kappa + free * ((1.0 - param) * b + param * out[j])


def kernel_at(env: EnvironmentView, site) -> TransitionKernel:
    """Kernel omega(site, .) of the environment `env`."""
    code, kappa, k1, k2, param = env.model._packed
    pos = np.asarray(site, dtype=np.int64)
    if pos.shape != (env.model.dimension,):
        raise ValueError(f"site must have {env.model.dimension} coordinates")
    out = np.empty(2 * env.model.dimension)
    fill_kernel(code, kappa, k1, k2, param, np.uint64(env.key), pos, out)
    return TransitionKernel(out)


def _variant_to_json(var: Variant) -> dict:
    if isinstance(var, PointMass):
        return {"type": "PointMass", "base": var.base.probs.tolist()}
    if isinstance(var, EllipticPerturbation):
        return {
            "type": "EllipticPerturbation",
            "base": var.base.probs.tolist(),
            "spread": float(var.spread),
        }
    return {
        "type": "TwoKernelMixture",
        "weight": float(var.weight),
        "k1": var.k1.probs.tolist(),
        "k2": var.k2.probs.tolist(),
    }


def variant_from_json(obj: dict) -> Variant:
    try:
        kind = obj["type"]
        if kind == "PointMass":
            return PointMass(obj["base"])
        if kind == "EllipticPerturbation":
            return EllipticPerturbation(obj["base"], float(obj["spread"]))
        if kind == "TwoKernelMixture":
            return TwoKernelMixture(float(obj["weight"]), obj["k1"], obj["k2"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad variant {obj!r}: {exc}") from exc
    raise ConfigError(f"unknown variant type {kind!r}")


def model_from_json(obj: dict) -> EnvironmentModel:
    try:
        return EnvironmentModel(
            int(obj["dimension"]), float(obj["kappa"]), variant_from_json(obj["variant"])
        )
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"bad environment model: {exc}") from exc


def environment_from_json(obj: dict) -> EnvironmentView:
    model = model_from_json(obj)
    try:
        seed = int(obj["env_seed"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad env_seed: {exc}") from exc
    return EnvironmentView(model, seed & _rng.MASK64)


DRIFTED_KERNEL = (0.4, 0.1, 0.25, 0.25)

PRESETS = {
    # homogeneous walk with analytic constants; the baseline for acceptance
    "drifted": lambda: EnvironmentModel(2, 0.1, PointMass(DRIFTED_KERNEL)),
    "perturbed": lambda: EnvironmentModel(
        2, 0.05, EllipticPerturbation(DRIFTED_KERNEL, 0.5)
    ),
    "mixture": lambda: EnvironmentModel(
        2, 0.05, TwoKernelMixture(0.5, (0.55, 0.05, 0.2, 0.2), (0.25, 0.15, 0.3, 0.3))
    ),
    # d = 1: debugging only, the LIL setting is d >= 2
    "line": lambda: EnvironmentModel(1, 0.1, PointMass((0.8, 0.2))),
}


def preset(name: str) -> EnvironmentModel:
    try:
        return PRESETS[name]()
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
