"""Estimators for the constants of the LIL and diagnostics on regeneration blocks.

Every estimator uses only blocks k >= 2 (their common law is the law of the
first block conditioned on D = infinity); the first block of each replica
feeds only the k = 1 terms of the Lyapunov profile.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from rwre_lil.errors import DegenerateSample, DomainError, InsufficientRegenerations
from rwre_lil.regeneration import RegenSamples, z_increment

E_SQUARED = math.exp(2.0)
DEFAULT_BOOTSTRAP = 200


def _later(samples: RegenSamples, need: int = 1) -> RegenSamples:
    later = samples.later()
    if len(later) < need:
        raise InsufficientRegenerations(f"{len(later)} non-first block(s); need {need}")
    return later


def _dot(a: np.ndarray, u) -> np.ndarray:
    u = np.asarray(u, dtype=np.float64)
    out = a[:, 0] * u[0]
    for i in range(1, u.shape[0]):
        out = out + a[:, i] * u[i]
    return out


def estimate_velocity(samples: RegenSamples) -> np.ndarray:
    """Ratio estimator sum(delta_x) / sum(delta_tau) over blocks k >= 2."""
    later = _later(samples)
    return later.delta_x.sum(axis=0) / later.delta_tau.sum()


def estimate_mean_tau(samples: RegenSamples) -> float:
    return float(_later(samples).delta_tau.mean())


def mean_tau_stderr(samples: RegenSamples) -> float:
    dt = _later(samples, 2).delta_tau
    return float(dt.std(ddof=1) / math.sqrt(dt.size))


def estimate_cu(samples: RegenSamples, v, u) -> float:
    """Mean of (Z_k^u)^2 over blocks k >= 2, with Z centred at the supplied v."""
    z = z_increment(_later(samples, 2), v, u)
    return float(np.mean(z * z))


def estimate_cu_centered(samples: RegenSamples, v, u) -> float:
    z = z_increment(_later(samples, 2), v, u)
    return float(z.var(ddof=1))


def estimate_third_moment(samples: RegenSamples, u) -> float:
    """Mean of |delta_x . u|^3 over blocks k >= 2 (uncentred, no v involved)."""
    a = np.abs(_dot(_later(samples).delta_x, u))
    return float(np.mean(a * a * a))


def first_block_moments(samples: RegenSamples, u) -> tuple[float, float]:
    """(mean (dx . u)^2, mean |dx . u|^3) over first blocks only."""
    first = samples.first()
    if len(first) == 0:
        raise InsufficientRegenerations("no first block")
    a = np.abs(_dot(first.delta_x, u))
    return float(np.mean(a * a)), float(np.mean(a * a * a))


def phi(x: float) -> float:
    """LIL normaliser sqrt(2 x log log sqrt(x)), defined for x > e^2."""
    if not x > E_SQUARED:
        raise DomainError(f"phi needs x > e^2, got {x!r}")
    inner = math.log(math.log(math.sqrt(x)))
    if inner <= 0.0:
        raise DomainError(f"log log sqrt(x) is not positive at x={x!r}")
    return math.sqrt(2.0 * x * inner)


def lyapunov_profile(m2_first, m3_first, c_u, c_hat_u, k_list, epsilon=0.5) -> list[float]:
    """Gamma_k / s_k^3 * (log s_k)^(1 + epsilon) for each k in `k_list`.

    s_k^2 = m2_first + (k - 1) c_u and Gamma_k = m3_first + (k - 1) c_hat_u.
    """
    if not (0.0 < epsilon < 1.0):
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    out = []
    for k in k_list:
        s2 = m2_first + (k - 1) * c_u
        s = math.sqrt(s2) if s2 > 0 else 0.0
        if s <= 1.0:
            raise DomainError(f"s_k = {s!r} <= 1 at k={k}")
        gamma = m3_first + (k - 1) * c_hat_u
        out.append(gamma / s**3 * math.log(s) ** (1.0 + epsilon))
    return out


@dataclass(frozen=True)
class TailDiagnosticConfig:
    gamma: float = 0.5
    c: float = 0.1

    def __post_init__(self):
        if not (0.0 < self.gamma < 1.0):
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if not self.c > 0.0:
            raise ValueError(f"c must be positive, got {self.c}")


@dataclass(frozen=True)
class TailDiagnostic:
    value: float
    unstable: bool
    top_share: float


def tail_diagnostic(samples: RegenSamples, cfg: TailDiagnosticConfig = TailDiagnosticConfig()) -> TailDiagnostic:
    """Empirical mean of exp(c * block_sup^gamma) over blocks k >= 2.

    `unstable` is raised when the largest 1% of summands carry more than half
    of the total. This is finite-sample evidence, not a test of any tail
    condition.
    """
    terms = np.exp(cfg.c * _later(samples).block_sup ** cfg.gamma)
    top = max(1, math.ceil(0.01 * terms.size))
    ordered = np.sort(terms)
    share = float(ordered[-top:].sum() / ordered.sum())
    return TailDiagnostic(float(terms.mean()), share > 0.5, share)


def independence_diagnostic(z, lag: int = 1) -> float:
    """Sample autocorrelation of `z` at `lag`."""
    z = np.asarray(z, dtype=np.float64)
    if lag < 1 or z.size <= lag:
        raise InsufficientRegenerations(f"need more than {lag} values, got {z.size}")
    c = z - z.mean()
    denom = float(np.dot(c, c))
    if denom == 0.0:
        raise DegenerateSample("zero sample variance")
    return float(np.dot(c[:-lag], c[lag:]) / denom)


def bootstrap_errors(samples: RegenSamples, u_list, n_resamples: int, seed: int, v=None) -> dict:
    """Standard errors by resampling blocks k >= 2 with replacement.

    With `v` given, c_u is always centred at it; otherwise each resample
    re-estimates v first, as the point estimate does.
    """
    later = _later(samples, 2)
    rng = np.random.default_rng(seed)
    n = len(later)
    d = later.dimension
    vs = np.empty((n_resamples, d))
    taus = np.empty(n_resamples)
    cus = np.empty((n_resamples, len(u_list)))
    chats = np.empty((n_resamples, len(u_list)))
    dx = later.delta_x
    dt = later.delta_tau
    for b in range(n_resamples):
        idx = rng.integers(0, n, size=n)
        bdx = dx[idx]
        bdt = dt[idx]
        vb = bdx.sum(axis=0) / bdt.sum()
        vs[b] = vb
        taus[b] = bdt.mean()
        centre = vb if v is None else np.asarray(v, dtype=np.float64)
        cen = bdx - bdt[:, None] * centre[None, :]
        for i, u in enumerate(u_list):
            z = _dot(cen, u)
            cus[b, i] = np.mean(z * z)
            a = np.abs(_dot(bdx, u))
            chats[b, i] = np.mean(a * a * a)
    return {
        "se_v_hat": vs.std(axis=0, ddof=1).tolist(),
        "se_mean_tau_hat": float(taus.std(ddof=1)),
        "se_c_u_hat": cus.std(axis=0, ddof=1).tolist(),
        "se_c_hat_u_hat": chats.std(axis=0, ddof=1).tolist(),
    }


@dataclass
class EstimateSummary:
    u_list: list
    v_hat: list
    mean_tau_hat: float
    c_u_hat: list
    c_u_centered: list
    c_hat_u_hat: list
    m2_first: list
    m3_first: list
    n_blocks: int
    n_first_blocks: int
    standard_errors: dict
    v_used: list
    warnings: list = field(default_factory=list)

    def step_variance(self, i: int) -> float:
        """c_u / E[tau]: variance per unit time of the centred walk along u_i."""
        return self.c_u_hat[i] / self.mean_tau_hat


def summarize(
    samples: RegenSamples,
    u_list,
    ell=None,
    v=None,
    n_resamples: int = DEFAULT_BOOTSTRAP,
    seed: int = 0,
) -> EstimateSummary:
    """All point estimates plus bootstrap standard errors.

    `v` overrides the plug-in velocity inside Z_k^u (for bias studies).
    """
    u_list = [np.asarray(u, dtype=np.float64) for u in u_list]
    later = _later(samples, 2)
    v_hat = estimate_velocity(samples)
    v_used = v_hat if v is None else np.asarray(v, dtype=np.float64)
    mean_tau = estimate_mean_tau(samples)
    warnings = []
    if ell is not None and float(np.dot(v_hat, ell)) <= 0.0:
        warnings.append("v_hat . ell <= 0: the walk does not look ballistic along ell")

    c_u = [estimate_cu(samples, v_used, u) for u in u_list]
    c_u_centered = [estimate_cu_centered(samples, v_used, u) for u in u_list]
    c_hat = [estimate_third_moment(samples, u) for u in u_list]
    m2, m3 = [], []
    for u in u_list:
        a, b = first_block_moments(samples, u)
        m2.append(a)
        m3.append(b)

    if n_resamples > 0:
        se = bootstrap_errors(samples, u_list, n_resamples, seed, v=v)
    else:
        se = {}
    return EstimateSummary(
        u_list=[u.tolist() for u in u_list],
        v_hat=v_hat.tolist(),
        mean_tau_hat=mean_tau,
        c_u_hat=c_u,
        c_u_centered=c_u_centered,
        c_hat_u_hat=c_hat,
        m2_first=m2,
        m3_first=m3,
        n_blocks=len(later),
        n_first_blocks=len(samples.first()),
        standard_errors=se,
        v_used=v_used.tolist(),
        warnings=warnings,
    )
