"""Experiment orchestration: config, replica scheduling and output files.

Each replica i draws env_seed = derive_seed(master, TAG_ENV, i) (or one shared
environment with --fixed-env) and replica_seed = derive_seed(master, TAG_WALK, i),
so every output is a function of the config alone. Replica results are merged
in index order whatever the number of workers.

The LIL stage needs constants pooled over all replicas before any curve can be
drawn, so it runs in two passes: the first pass estimates, the second
re-simulates each replica (bit-identically) and evaluates its curve.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from rwre_lil import _rng, __version__
from rwre_lil.environment import (
    EnvironmentModel,
    EnvironmentView,
    model_from_json,
    preset,
)
from rwre_lil.errors import (
    ConfigError,
    DegenerateSample,
    DomainError,
    InsufficientRegenerations,
    NotUnitVector,
    ParseError,
    Undetermined,
)
from rwre_lil.lil import LilCurve, dyadic_checkpoints, error_term_report, lil_curve
from rwre_lil.regeneration import (
    CensorPolicy,
    RegenerationSequence,
    RegenSamples,
    block_samples,
    count_kn,
    detect_regenerations,
    regeneration_header,
    write_regeneration_csv,
    z_increment,
)
from rwre_lil.statistics import (
    DEFAULT_BOOTSTRAP,
    EstimateSummary,
    TailDiagnosticConfig,
    independence_diagnostic,
    lyapunov_profile,
    summarize,
    tail_diagnostic,
)
from rwre_lil.walk import (
    MAX_HORIZON,
    UNIT_TOL,
    WalkSeed,
    project_positions,
    read_trajectory_csv,
    simulate,
    write_trajectory_csv,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ExperimentConfig:
    model: EnvironmentModel
    ell: tuple
    u_list: tuple
    horizon: int
    replicas: int = 1
    guard: int = 1000
    master_seed: int = 0
    checkpoints: tuple = (10, 20)
    gamma: float = 0.5
    c: float = 0.1
    output_dir: str = "out"
    fixed_env: bool = False
    env_seed: int | None = None
    bootstrap: int = DEFAULT_BOOTSTRAP
    max_blocks_per_replica: int | None = None
    v_external: tuple | None = None
    k_list: tuple = (100, 1000, 10000)
    epsilon: float = 0.5

    def validate(self) -> list[str]:
        """Raise ConfigError on hard violations; return soft warnings."""
        d = self.model.dimension
        if self.replicas < 1:
            raise ConfigError(f"replicas must be >= 1, got {self.replicas}")
        if not (0 <= self.horizon <= MAX_HORIZON):
            raise ConfigError(f"horizon must lie in [0, 2**40], got {self.horizon}")
        if self.guard < 0:
            raise ConfigError(f"guard must be >= 0, got {self.guard}")
        for name, vec in [("ell", self.ell)] + [(f"u[{i}]", u) for i, u in enumerate(self.u_list)]:
            arr = np.asarray(vec, dtype=np.float64)
            if arr.shape != (d,):
                raise ConfigError(f"{name} must have {d} components, got {vec!r}")
            if abs(float(np.linalg.norm(arr)) - 1.0) > UNIT_TOL:
                raise ConfigError(f"{name} is not a unit vector: {vec!r}")
        if not self.u_list:
            raise ConfigError("u_list is empty")
        jmin, jmax = self.checkpoints
        if not (1 <= jmin <= jmax <= 40):
            raise ConfigError(f"checkpoint exponents must satisfy 1 <= jmin <= jmax <= 40, got {self.checkpoints}")
        if self.v_external is not None and len(self.v_external) != d:
            raise ConfigError(f"v_external must have {d} components")
        try:
            TailDiagnosticConfig(self.gamma, self.c)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if not (0.0 < self.epsilon < 1.0):
            raise ConfigError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        warnings = []
        if self.guard >= self.horizon:
            warnings.append(f"guard {self.guard} >= horizon {self.horizon}: no regeneration can be confirmed")
        if d == 1:
            warnings.append("d = 1 is a debugging mode; the LIL setting here is d >= 2")
        if 2**jmax > self.horizon - self.guard:
            warnings.append("some checkpoints fall in the censored tail and will be NaN")
        return warnings

    def to_json(self) -> dict:
        out = asdict(self)
        out["model"] = self.model.to_json()
        for key in ("ell", "u_list", "checkpoints", "v_external", "k_list"):
            if out[key] is not None:
                out[key] = json.loads(json.dumps(out[key]))
        return out


def config_from_json(obj: dict) -> ExperimentConfig:
    obj = dict(obj)
    try:
        if "preset" in obj:
            model = preset(obj.pop("preset"))
            obj.pop("model", None)
        else:
            model_obj = obj.pop("model")
            model = model_from_json(model_obj)
            if "env_seed" in model_obj and "env_seed" not in obj:
                obj["env_seed"] = int(model_obj["env_seed"])
        obj["ell"] = tuple(float(x) for x in obj["ell"])
        obj["u_list"] = tuple(tuple(float(x) for x in u) for u in obj["u_list"])
        if "checkpoints" in obj:
            obj["checkpoints"] = tuple(int(x) for x in obj["checkpoints"])
        if obj.get("v_external") is not None:
            obj["v_external"] = tuple(float(x) for x in obj["v_external"])
        if "k_list" in obj:
            obj["k_list"] = tuple(int(x) for x in obj["k_list"])
        return ExperimentConfig(model=model, **obj)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad experiment config: {exc}") from exc


def replica_seeds(cfg: ExperimentConfig, i: int) -> tuple[int, int]:
    if cfg.fixed_env:
        env_seed = cfg.env_seed if cfg.env_seed is not None else _rng.derive_seed(cfg.master_seed, _rng.TAG_ENV, 0)
    else:
        env_seed = _rng.derive_seed(cfg.master_seed, _rng.TAG_ENV, i)
    return env_seed, _rng.derive_seed(cfg.master_seed, _rng.TAG_WALK, i)


def _run_path(cfg: ExperimentConfig, i: int):
    env_seed, walk_seed = replica_seeds(cfg, i)
    env = EnvironmentView(cfg.model, env_seed)
    t = simulate(env, np.zeros(cfg.model.dimension, dtype=np.int64), cfg.horizon, WalkSeed(walk_seed))
    proj = project_positions(t.positions, np.asarray(cfg.ell, dtype=np.float64))
    r = detect_regenerations(proj, CensorPolicy(cfg.guard))
    return t, r


@dataclass
class ReplicaResult:
    index: int
    n_regenerations: int
    censored_tail_from: int
    rejected: int
    late_drops: int
    samples: RegenSamples | None
    renewal_kn: int | None


def _pass_one(args) -> ReplicaResult:
    cfg, i = args
    t, r = _run_path(cfg, i)
    keep = len(r) if cfg.max_blocks_per_replica is None else min(len(r), cfg.max_blocks_per_replica + 1)
    samples = block_samples(t, r.times[:keep]) if keep >= 1 else None
    renewal_n = cfg.horizon - cfg.guard
    try:
        kn = count_kn(r, renewal_n) if renewal_n > 0 else None
    except Undetermined:
        kn = None
    return ReplicaResult(i, len(r), r.censored_tail_from, r.rejected, r.late_drops, samples, kn)


@dataclass(frozen=True)
class Constants:
    v: np.ndarray
    mean_tau: float
    c_u: tuple


def _pass_two(args) -> list[LilCurve]:
    cfg, i, consts = args
    t, r = _run_path(cfg, i)
    cps = dyadic_checkpoints(*cfg.checkpoints)
    return [
        lil_curve(t.positions, r, cps, consts.v, c_u, consts.mean_tau, u)
        for u, c_u in zip(cfg.u_list, consts.c_u)
    ]


def _map(fn, jobs, workers: int):
    if workers <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs, chunksize=max(1, len(jobs) // (4 * workers))))


@dataclass
class RunManifest:
    config: dict
    replica_seeds: list
    version: str
    wall_time: float = 0.0
    warnings: list = field(default_factory=list)
    outputs: list = field(default_factory=list)

    def to_json(self) -> dict:
        return asdict(self)


@dataclass
class ExperimentResult:
    """Everything a run produced, for callers that want more than the files."""

    manifest: RunManifest
    replicas: list
    summary: EstimateSummary | None
    estimates: dict
    curves: list | None = None  # curves[u_index][replica]
    tables: list | None = None


def _fmt(x) -> str:
    return repr(float(x))


def estimates_record(cfg: ExperimentConfig, results: list, summary, pooled, warnings) -> dict:
    rec = {
        "v_hat": None,
        "mean_tau_hat": None,
        "c_u_hat": None,
        "c_hat_u_hat": None,
        "n_blocks": 0,
    }
    rec["u_list"] = [list(map(float, u)) for u in cfg.u_list]
    rec["ell"] = list(map(float, cfg.ell))
    rec["guard"] = cfg.guard
    rec["horizon"] = cfg.horizon
    rec["replicas"] = cfg.replicas
    rec["regenerations_total"] = int(sum(r.n_regenerations for r in results))
    rec["rejected_candidates"] = int(sum(r.rejected for r in results))
    late = int(sum(r.late_drops for r in results))
    rec["late_drop_candidates"] = late
    # share of candidates that a guard-G window would misclassify
    rec["censoring_bias_rate"] = late / max(1, rec["regenerations_total"] + rec["rejected_candidates"])
    rec["replicas_with_censored_tail"] = int(sum(r.censored_tail_from <= cfg.horizon for r in results))
    if summary is None:
        rec["warnings"] = list(warnings)
        return rec

    s = summary
    rec.update(
        v_hat=s.v_hat,
        mean_tau_hat=s.mean_tau_hat,
        c_u_hat=s.c_u_hat,
        c_hat_u_hat=s.c_hat_u_hat,
        n_blocks=s.n_blocks,
    )
    for key, val in s.standard_errors.items():
        rec[key] = val
    rec["c_u_centered"] = s.c_u_centered
    rec["step_variance"] = [s.step_variance(i) for i in range(len(s.u_list))]
    rec["v_used"] = s.v_used
    rec["n_first_blocks"] = s.n_first_blocks
    rec["m2_first"] = s.m2_first
    rec["m3_first"] = s.m3_first

    tail = tail_diagnostic(pooled, TailDiagnosticConfig(cfg.gamma, cfg.c))
    rec["tail_diagnostic"] = {
        "gamma": cfg.gamma, "c": cfg.c, "value": tail.value,
        "unstable": tail.unstable, "top_share": tail.top_share,
    }

    later = pooled.later()
    indep = {}
    for lag in (1, 2):
        vals = []
        for u in cfg.u_list:
            try:
                vals.append(independence_diagnostic(z_increment(later, s.v_used, u), lag))
            except (DegenerateSample, InsufficientRegenerations) as exc:
                vals.append(None)
                warnings.append(f"independence lag {lag}: {exc}")
        indep[f"lag{lag}"] = vals
    rec["independence"] = indep

    profiles = []
    for i in range(len(cfg.u_list)):
        try:
            profiles.append(lyapunov_profile(
                s.m2_first[i], s.m3_first[i], s.c_u_hat[i], s.c_hat_u_hat[i], cfg.k_list, cfg.epsilon
            ))
        except DomainError as exc:
            profiles.append(None)
            warnings.append(f"lyapunov profile u[{i}]: {exc}")
    rec["lyapunov"] = {"k_list": list(cfg.k_list), "epsilon": cfg.epsilon, "profile": profiles}

    n = cfg.horizon - cfg.guard
    kns = [r.renewal_kn for r in results if r.renewal_kn is not None]
    if n > 0 and kns:
        ratios = [k / n for k in kns]
        rec["renewal"] = {
            "n": n,
            "kn_over_n_mean": float(np.mean(ratios)),
            "inverse_mean_tau": 1.0 / s.mean_tau_hat,
            "max_abs_deviation": float(max(abs(x - 1.0 / s.mean_tau_hat) for x in ratios)),
        }
    rec["warnings"] = list(s.warnings) + list(warnings)
    return rec


def _curve_rows(curves: list) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["replica", "n", "statistic", "term_main", "term2", "term3"])
    for rep, c in enumerate(curves):
        for j, n in enumerate(c.checkpoints.tolist()):
            w.writerow([rep, n, _fmt(c.statistic[j]), _fmt(c.term_main[j]), _fmt(c.term2[j]), _fmt(c.term3[j])])
    return buf.getvalue()


def _envelope_rows(table) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", "stat_max", "stat_min", "q99_abs_t2", "q99_abs_t3"])
    for j, n in enumerate(table.checkpoints.tolist()):
        w.writerow([n, _fmt(table.stat_max[j]), _fmt(table.stat_min[j]),
                    _fmt(table.q99_abs_t2[j]), _fmt(table.q99_abs_t3[j])])
    return buf.getvalue()


def _suffix(i: int) -> str:
    return "" if i == 0 else f"_u{i}"


def run_experiment(
    cfg: ExperimentConfig,
    workers: int = 1,
    lil: bool = True,
    figures: bool = True,
    write: bool = True,
) -> ExperimentResult:
    """simulate -> detect -> estimate (-> LIL curves) for every replica."""
    started = time.perf_counter()
    warnings = cfg.validate()
    seeds = [list(replica_seeds(cfg, i)) for i in range(cfg.replicas)]
    manifest = RunManifest(cfg.to_json(), seeds, __version__)

    results = _map(_pass_one, [(cfg, i) for i in range(cfg.replicas)], workers)
    parts = [r.samples for r in results if r.samples is not None]
    summary = None
    pooled = None
    try:
        pooled = RegenSamples.concat(parts)
        boot_seed = _rng.derive_seed(cfg.master_seed, _rng.TAG_BOOT, 0)
        summary = summarize(pooled, cfg.u_list, ell=cfg.ell, v=cfg.v_external,
                            n_resamples=cfg.bootstrap, seed=boot_seed)
    except InsufficientRegenerations as exc:
        warnings.append(f"InsufficientRegenerations: {exc}")
    estimates = estimates_record(cfg, results, summary, pooled, warnings)

    out = ExperimentResult(manifest, results, summary, estimates)
    files = {"estimates.json": json.dumps(estimates, indent=2) + "\n"}

    if lil and summary is not None:
        if any(c <= 0.0 for c in summary.c_u_hat):
            warnings.append("non-positive c_u estimate; LIL curves skipped")
        else:
            consts = Constants(np.asarray(summary.v_used), summary.mean_tau_hat, tuple(summary.c_u_hat))
            per_rep = _map(_pass_two, [(cfg, i, consts) for i in range(cfg.replicas)], workers)
            curves = [[rep[k] for rep in per_rep] for k in range(len(cfg.u_list))]
            tables = [error_term_report(cs) for cs in curves]
            out.curves, out.tables = curves, tables
            for k in range(len(cfg.u_list)):
                files[f"lil_curve{_suffix(k)}.csv"] = _curve_rows(curves[k])
                files[f"lil_envelope{_suffix(k)}.csv"] = _envelope_rows(tables[k])
    elif lil:
        warnings.append("LIL curves skipped: no estimates")

    manifest.warnings = list(warnings)
    for w in warnings:
        log.warning(w)

    if write:
        outdir = Path(cfg.output_dir)
        outdir.mkdir(parents=True, exist_ok=True)
        for name, text in files.items():
            (outdir / name).write_text(text)
            manifest.outputs.append(name)
        if figures and out.curves is not None:
            from rwre_lil import plotting

            for k in range(len(cfg.u_list)):
                manifest.outputs += plotting.render_lil_figures(
                    out.curves[k], out.tables[k], cfg.u_list[k], outdir, suffix=_suffix(k)
                )
        manifest.wall_time = time.perf_counter() - started
        (outdir / "manifest.json").write_text(json.dumps(manifest.to_json(), indent=2) + "\n")
    else:
        manifest.wall_time = time.perf_counter() - started
    return out


def simulate_to_files(cfg: ExperimentConfig, workers: int = 1) -> list[Path]:
    """Write one trajectory CSV per replica (the `simulate` subcommand)."""
    cfg.validate()
    outdir = Path(cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = []
    width = max(3, len(str(cfg.replicas - 1)))
    for i in range(cfg.replicas):
        env_seed, walk_seed = replica_seeds(cfg, i)
        t = simulate(EnvironmentView(cfg.model, env_seed), np.zeros(cfg.model.dimension, dtype=np.int64),
                     cfg.horizon, WalkSeed(walk_seed))
        path = outdir / f"trajectory_{i:0{width}d}.csv"
        with open(path, "w", newline="") as fh:
            write_trajectory_csv(t, cfg.ell, fh)
        paths.append(path)
    return paths


@dataclass
class RegenerationReport:
    regenerations: RegenerationSequence
    samples: RegenSamples | None
    dimension: int

    @property
    def times(self) -> list[int]:
        return self.regenerations.times.tolist()

    def to_csv(self) -> str:
        buf = io.StringIO()
        if self.samples is None:
            csv.writer(buf, lineterminator="\n").writerow(regeneration_header(self.dimension))
        else:
            write_regeneration_csv(self.samples, buf)
        return buf.getvalue()


def analyze_file(path, ell, guard: int) -> RegenerationReport:
    """Detection and block extraction on an externally supplied trajectory."""
    try:
        with open(path, newline="") as fh:
            t = read_trajectory_csv(fh)
    except UnicodeDecodeError as exc:
        raise ParseError(f"not a text file: {exc}") from None
    ell = np.asarray(ell, dtype=np.float64)
    if ell.shape != (t.dimension,) or abs(float(np.linalg.norm(ell)) - 1.0) > UNIT_TOL:
        raise NotUnitVector(f"ell must be a unit vector in R^{t.dimension}, got {ell.tolist()}")
    proj = project_positions(t.positions, ell)
    r = detect_regenerations(proj, CensorPolicy(guard))
    samples = block_samples(t, r.times) if len(r) else None
    return RegenerationReport(r, samples, t.dimension)
