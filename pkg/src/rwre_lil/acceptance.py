"""Exit criteria of the package, runnable from pytest or `rwre-lil verify`.

Each check returns a CriterionResult; none of them raises on failure. The
expensive simulations are shared between checks through small caches.
"""

from __future__ import annotations

import filecmp
import functools
import json
import math
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from rwre_lil import _rng
from rwre_lil.environment import DRIFTED_KERNEL, EnvironmentView, mean_drift, preset, step_covariance
from rwre_lil.errors import DomainError
from rwre_lil.harness import ExperimentConfig, run_experiment
from rwre_lil.lil import clt_scaled
from rwre_lil.regeneration import (
    CensorPolicy,
    RegenSamples,
    detect_regenerations,
    first_regeneration_oracle,
    regenerations_by_oracle,
    z_increment,
)
from rwre_lil.statistics import independence_diagnostic, phi
from rwre_lil.walk import WalkSeed, project_positions, simulate

E1 = (1.0, 0.0)
E2 = (0.0, 1.0)
MASTER_SEED = 20240611


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"[{tag}] {self.number:>2} {self.name}: {self.detail} ({self.seconds:.1f}s)"


def _analytic():
    v = mean_drift(DRIFTED_KERNEL)
    cov = step_covariance(DRIFTED_KERNEL)
    return v, {E1: float(cov[0, 0]), E2: float(cov[1, 1])}


# ---------------------------------------------------------------- criterion 1
def oracle_equivalence(n_paths=1000, horizon=10**4, guard=1000, budget=60.0) -> CriterionResult:
    started = time.perf_counter()
    model = preset("drifted")
    ell = np.array(E1)
    mismatches = 0
    regs = 0
    for i in range(n_paths):
        env = EnvironmentView(model, _rng.derive_seed(MASTER_SEED, _rng.TAG_ENV, i))
        t = simulate(env, (0, 0), horizon, WalkSeed(_rng.derive_seed(MASTER_SEED, _rng.TAG_WALK, i)))
        proj = project_positions(t.positions, ell)
        fast = detect_regenerations(proj, CensorPolicy(guard))
        slow = regenerations_by_oracle(proj, CensorPolicy(guard))
        mismatches += fast != slow
        regs += len(fast)
    elapsed = time.perf_counter() - started
    ok = mismatches == 0 and elapsed < budget
    return CriterionResult(
        1, "oracle equivalence", ok,
        f"{mismatches} mismatches over {n_paths} paths ({regs} regenerations), "
        f"{elapsed:.1f}s vs budget {budget:.0f}s",
        elapsed,
    )


# ---------------------------------------------------------------- criterion 2
def hand_traced() -> CriterionResult:
    started = time.perf_counter()
    checks = []
    tau1, _ = first_regeneration_oracle([0, 1, 0, 1, 2, 3, 4, 5], CensorPolicy(3))
    checks.append(("[0,1,0,1,2,3,4,5] tau1", tau1, 4))
    fast = detect_regenerations([0, 1, 0, 1, 2, 3, 4, 5], CensorPolicy(3)).times.tolist()
    checks.append(("[0,1,0,1,2,3,4,5] detect", fast[:1], [4]))
    times = detect_regenerations([0, 1, 2, 1, 2, 3, 4, 5], CensorPolicy(2)).times.tolist()
    checks.append(("[0,1,2,1,2,3,4,5] times", times, [1, 5]))
    tau1, _ = first_regeneration_oracle(np.arange(10.0), CensorPolicy(5))
    checks.append(("increasing tau1", tau1, 1))
    bad = [name for name, got, want in checks if got != want]
    return CriterionResult(
        2, "hand-traced recursion", not bad,
        "all exact" if not bad else f"mismatch in {bad}",
        time.perf_counter() - started,
    )


# ------------------------------------------------ shared LIL run (3, 8, 11)
def lil_config(replicas=1000, jmax=20, guard=1000, output_dir="out") -> ExperimentConfig:
    return ExperimentConfig(
        model=preset("drifted"),
        ell=E1,
        u_list=(E1, E2, (-1.0, 0.0), (0.0, -1.0)),
        horizon=2**jmax + guard,
        replicas=replicas,
        guard=guard,
        master_seed=MASTER_SEED,
        checkpoints=(10, jmax),
        output_dir=output_dir,
        bootstrap=200,
        max_blocks_per_replica=500,
    )


def lil_run(replicas=1000, jmax=20):
    return _lil_run(int(replicas), int(jmax))


@functools.lru_cache(maxsize=2)
def _lil_run(replicas, jmax):
    return run_experiment(lil_config(replicas, jmax), lil=True, figures=False, write=False)


def decomposition_identity(replicas=1000, jmax=20, rtol=1e-9) -> CriterionResult:
    started = time.perf_counter()
    res = lil_run(replicas, jmax)
    worst = 0.0
    missing = 0
    points = 0
    for curves in res.curves:
        for c in curves:
            total = c.term_main + c.term2 + c.term3
            scale = np.maximum.reduce([np.abs(c.statistic), np.abs(c.term_main), np.abs(c.term2), np.abs(c.term3)])
            bad = ~np.isfinite(total) | ~np.isfinite(c.statistic)
            missing += int(bad.sum())
            ok = ~bad
            points += int(ok.sum())
            if ok.any():
                worst = max(worst, float(np.max(np.abs(total[ok] - c.statistic[ok]) / scale[ok])))
    passed = missing == 0 and worst <= rtol
    return CriterionResult(
        3, "decomposition identity", passed,
        f"max relative residual {worst:.2e} over {points} checkpoints ({missing} undefined), tol {rtol:g}",
        time.perf_counter() - started,
    )


def error_term_decay(replicas=1000, jmax=20, early=12) -> CriterionResult:
    started = time.perf_counter()
    res = lil_run(replicas, jmax)
    notes = []
    ok = True
    for k, u in enumerate(res.manifest.config["u_list"][:2]):
        tab = res.tables[k]
        cps = tab.checkpoints.tolist()
        i0, i1 = cps.index(2**early), cps.index(2**jmax)
        for name, col in (("t2", tab.q99_abs_t2), ("t3", tab.q99_abs_t3)):
            a, b = col[i0], col[i1]
            good = bool(np.isfinite(a) and np.isfinite(b) and b < a)
            ok &= good
            notes.append(f"u={u} q99|{name}| {a:.4f} -> {b:.4f}")
    return CriterionResult(
        8, "error-term decay", ok,
        f"2^{early} -> 2^{jmax}: " + "; ".join(notes),
        time.perf_counter() - started,
    )


def antisymmetry(replicas=1000, jmax=20) -> CriterionResult:
    started = time.perf_counter()
    res = lil_run(replicas, jmax)
    bad = 0
    for k_pos, k_neg in ((0, 2), (1, 3)):
        for a, b in zip(res.curves[k_pos], res.curves[k_neg]):
            for field in ("statistic", "term_main", "term2", "term3"):
                x, y = getattr(a, field), getattr(b, field)
                if not np.array_equal(x, -y, equal_nan=True):
                    bad += 1
            if not (np.array_equal(a.running_max, -b.running_min, equal_nan=True)
                    and np.array_equal(a.running_min, -b.running_max, equal_nan=True)):
                bad += 1
    return CriterionResult(
        11, "antisymmetry u vs -u", bad == 0,
        f"{bad} non-negated series across {2 * len(res.curves[0])} curve pairs",
        time.perf_counter() - started,
    )


# ----------------------------------------------- shared baseline run (4, 6, 7)
def baseline_config(replicas=10, horizon=10**5, guard=1000, output_dir="out") -> ExperimentConfig:
    return ExperimentConfig(
        model=preset("drifted"),
        ell=E1,
        u_list=(E1, E2),
        horizon=horizon + guard,
        replicas=replicas,
        guard=guard,
        master_seed=MASTER_SEED + 1,
        output_dir=output_dir,
        bootstrap=200,
    )


def baseline_run(replicas=10, horizon=10**5):
    return _baseline_run(int(replicas), int(horizon))


@functools.lru_cache(maxsize=2)
def _baseline_run(replicas, horizon):
    return run_experiment(baseline_config(replicas, horizon), lil=False, figures=False, write=False)


def homogeneous_baseline(replicas=10, horizon=10**5, min_blocks=10**5) -> CriterionResult:
    started = time.perf_counter()
    est = baseline_run(replicas, horizon).estimates
    v_true, var_true = _analytic()
    v_hat = np.array(est["v_hat"])
    se = np.array(est["se_v_hat"])
    z = np.abs(v_hat - v_true) / se
    ratios = [est["c_u_hat"][i] / est["mean_tau_hat"] for i in range(2)]
    rel = [abs(r - var_true[u]) / var_true[u] for r, u in zip(ratios, (E1, E2))]
    ok = bool(np.all(z <= 3.0)) and all(x <= 0.05 for x in rel) and est["n_blocks"] >= min_blocks
    return CriterionResult(
        4, "homogeneous baseline", ok,
        f"v_hat={np.round(v_hat, 5).tolist()} ({np.round(z, 2).tolist()} SE from {v_true.tolist()}); "
        f"c_u/E[tau]={ratios[0]:.4f} vs 0.41 ({rel[0]:.2%}), {ratios[1]:.4f} vs 0.5 ({rel[1]:.2%}); "
        f"{est['n_blocks']} blocks",
        time.perf_counter() - started,
    )


def renewal_density(replicas=10, horizon=10**5, tol=0.02) -> CriterionResult:
    started = time.perf_counter()
    res = baseline_run(replicas, horizon)
    inv = 1.0 / res.estimates["mean_tau_hat"]
    devs = [abs(r.renewal_kn / horizon - inv) for r in res.replicas if r.renewal_kn is not None]
    ok = len(devs) == replicas and max(devs) <= tol
    return CriterionResult(
        6, "renewal density", ok,
        f"max |k_n/n - 1/E[tau]| = {max(devs) if devs else float('nan'):.5f} at n={horizon} "
        f"over {len(devs)} replicas (1/E[tau]={inv:.4f}), tol {tol}",
        time.perf_counter() - started,
    )


def independence(replicas=10, horizon=10**5, n_blocks=10**4) -> CriterionResult:
    started = time.perf_counter()
    res = baseline_run(replicas, horizon)
    later = RegenSamples.concat(r.samples for r in res.replicas if r.samples is not None).later()
    band = 3.0 / math.sqrt(n_blocks)
    notes = []
    ok = len(later.delta_tau) >= n_blocks
    v = res.estimates["v_hat"]
    for u in (E1, E2):
        z = z_increment(later, v, u)[:n_blocks]
        for lag in (1, 2):
            rho = independence_diagnostic(z, lag)
            ok &= abs(rho) <= band
            notes.append(f"u={list(u)} lag{lag} {rho:+.4f}")
    return CriterionResult(
        7, "independence of increments", bool(ok),
        f"|rho| <= {band:.3f} required; " + ", ".join(notes),
        time.perf_counter() - started,
    )


# ---------------------------------------------------------------- criterion 5
def variance_identity(replicas=10**4, n=10**4, tol=0.10) -> CriterionResult:
    started = time.perf_counter()
    model = preset("drifted")
    v, var = _analytic()
    vals = {E1: np.empty(replicas), E2: np.empty(replicas)}
    for i in range(replicas):
        env = EnvironmentView(model, _rng.derive_seed(MASTER_SEED + 2, _rng.TAG_ENV, i))
        t = simulate(env, (0, 0), n, WalkSeed(_rng.derive_seed(MASTER_SEED + 2, _rng.TAG_WALK, i)))
        disp = t.positions[n] - t.positions[0]
        for u in (E1, E2):
            vals[u][i] = clt_scaled(disp, n, v, var[u], u)
    sv = {u: float(vals[u].var(ddof=1)) for u in vals}
    ok = all(abs(x - 1.0) <= tol for x in sv.values())
    return CriterionResult(
        5, "variance identity", ok,
        f"sample variance {sv[E1]:.4f} (u=e1), {sv[E2]:.4f} (u=e2) over {replicas} replicas at n={n}, tol {tol:.0%}",
        time.perf_counter() - started,
    )


# ---------------------------------------------------------------- criterion 9
def phi_exactness(rtol=1e-12) -> CriterionResult:
    started = time.perf_counter()
    a = phi(math.exp(4.0))
    a_ref = math.sqrt(2.0 * math.exp(4.0) * math.log(2.0))
    b = phi(math.exp(2.0 * math.e))
    b_ref = math.sqrt(2.0) * math.exp(math.e)
    errs = [abs(a - a_ref) / a_ref, abs(b - b_ref) / b_ref]
    try:
        phi(math.exp(2.0))
        raised = False
    except DomainError:
        raised = True
    ok = max(errs) <= rtol and raised
    return CriterionResult(
        9, "phi exactness", ok,
        f"phi(e^4)={a:.12g}, phi(e^2e)={b:.12g}, max rel err {max(errs):.1e}; "
        f"DomainError at e^2: {raised}",
        time.perf_counter() - started,
    )


# --------------------------------------------------------------- criterion 10
def determinism_config(output_dir) -> ExperimentConfig:
    return ExperimentConfig(
        model=preset("perturbed"),
        ell=E1,
        u_list=(E1, E2),
        horizon=2**13 + 200,
        replicas=16,
        guard=200,
        master_seed=MASTER_SEED + 3,
        checkpoints=(8, 13),
        output_dir=str(output_dir),
        bootstrap=50,
    )


def _output_files(d: Path) -> dict:
    return {p.name: p for p in sorted(d.iterdir()) if p.is_file()}


def _manifest_sans_time(path: Path) -> dict:
    m = json.loads(path.read_text())
    m.pop("wall_time", None)
    m["config"].pop("output_dir", None)
    return m


def determinism(workers=8) -> CriterionResult:
    started = time.perf_counter()
    with tempfile.TemporaryDirectory() as tmp:
        dirs = [Path(tmp) / name for name in ("run_a", "run_b", f"run_w{workers}")]
        for d, w in zip(dirs, (1, 1, workers)):
            run_experiment(determinism_config(d), workers=w, lil=True, figures=True)
        base = _output_files(dirs[0])
        diffs = []
        for d in dirs[1:]:
            other = _output_files(d)
            if sorted(other) != sorted(base):
                diffs.append(f"{d.name}: file set differs")
                continue
            for name, path in base.items():
                if name == "manifest.json":
                    if _manifest_sans_time(path) != _manifest_sans_time(other[name]):
                        diffs.append(f"{d.name}/{name}")
                elif not filecmp.cmp(path, other[name], shallow=False):
                    diffs.append(f"{d.name}/{name}")
        names = [n for n in base if n != "manifest.json"]
    return CriterionResult(
        10, "determinism", not diffs,
        f"{len(names)} files byte-identical across 2 runs and 1 vs {workers} workers"
        if not diffs else f"differences: {diffs}",
        time.perf_counter() - started,
    )


CRITERIA = {
    1: oracle_equivalence,
    2: hand_traced,
    3: decomposition_identity,
    4: homogeneous_baseline,
    5: variance_identity,
    6: renewal_density,
    7: independence,
    8: error_term_decay,
    9: phi_exactness,
    10: determinism,
    11: antisymmetry,
}


def run_all(only=None, echo=print) -> list[CriterionResult]:
    results = []
    for number, fn in CRITERIA.items():
        if only and number not in only:
            continue
        res = fn()
        echo(res.line())
        results.append(res)
    return results
