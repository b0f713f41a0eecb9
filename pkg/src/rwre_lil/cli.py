"""Command line entry point: rwre-lil {simulate,analyze,estimate,lil,verify}."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from rwre_lil import __version__
from rwre_lil.environment import PRESETS, preset
from rwre_lil.errors import ConfigError, NotUnitVector, ParseError, RwreError
from rwre_lil.harness import (
    ExperimentConfig,
    analyze_file,
    config_from_json,
    run_experiment,
    simulate_to_files,
)

log = logging.getLogger("rwre_lil")

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_ACCEPTANCE = 2


def _vector(text: str) -> tuple:
    try:
        return tuple(float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _range(text: str) -> tuple:
    try:
        lo, hi = text.split(":")
        return int(lo), int(hi)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected jmin:jmax, got {text!r}") from None


def _int_list(text: str) -> tuple:
    try:
        return tuple(int(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


# CLI flag -> ExperimentConfig field; every flag defaults to None so that a
# --config file is only overridden by flags that were actually given
_FIELDS = {
    "ell": "ell",
    "u": "u_list",
    "horizon": "horizon",
    "replicas": "replicas",
    "guard": "guard",
    "master_seed": "master_seed",
    "checkpoints": "checkpoints",
    "gamma": "gamma",
    "c": "c",
    "output_dir": "output_dir",
    "fixed_env": "fixed_env",
    "env_seed": "env_seed",
    "bootstrap": "bootstrap",
    "max_blocks_per_replica": "max_blocks_per_replica",
    "v_external": "v_external",
    "k_list": "k_list",
    "epsilon": "epsilon",
}


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("experiment")
    g.add_argument("--config", type=Path, help="JSON file with ExperimentConfig fields")
    g.add_argument("--preset", choices=sorted(PRESETS), help="environment preset (default: drifted)")
    g.add_argument("--ell", type=_vector, help="direction of ballisticity, e.g. 1,0")
    g.add_argument("--u", type=_vector, action="append", help="LIL direction; repeat for several")
    g.add_argument("--horizon", type=int)
    g.add_argument("--replicas", type=int)
    g.add_argument("--guard", type=int, help="confirmation window for the last regenerations")
    g.add_argument("--master-seed", type=int)
    g.add_argument("--checkpoints", type=_range, help="dyadic exponents jmin:jmax")
    g.add_argument("--gamma", type=float, help="tail diagnostic exponent")
    g.add_argument("--c", type=float, help="tail diagnostic scale")
    g.add_argument("--output-dir")
    g.add_argument("--fixed-env", action="store_const", const=True, help="one environment for all replicas")
    g.add_argument("--env-seed", type=int)
    g.add_argument("--bootstrap", type=int, help="bootstrap resamples (0 disables)")
    g.add_argument("--max-blocks-per-replica", type=int)
    g.add_argument("--v-external", type=_vector, help="use this v inside Z_k instead of v_hat")
    g.add_argument("--k-list", type=_int_list)
    g.add_argument("--epsilon", type=float)
    g.add_argument("--workers", type=int, default=1)


def build_config(args) -> ExperimentConfig:
    if args.config is not None:
        try:
            obj = json.loads(args.config.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read {args.config}: {exc}") from None
        if args.preset:
            obj.pop("model", None)
            obj["preset"] = args.preset
        base = obj
    else:
        base = {"preset": args.preset or "drifted"}

    given = {field: getattr(args, flag) for flag, field in _FIELDS.items() if getattr(args, flag) is not None}
    if args.config is None:
        model = preset(base["preset"])
        d = model.dimension
        unit = tuple(1.0 if i == 0 else 0.0 for i in range(d))
        given.setdefault("ell", unit)
        given.setdefault("u_list", (unit,))
        given.setdefault("horizon", 10**5)
        try:
            return ExperimentConfig(model=model, **given)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None
    for key, val in given.items():
        base[key] = list(val) if isinstance(val, tuple) else val
    return config_from_json(base)


def _prepare(args) -> ExperimentConfig:
    cfg = build_config(args)
    cfg.validate()
    return cfg


def cmd_simulate(args) -> int:
    cfg = _prepare(args)
    paths = simulate_to_files(cfg, args.workers)
    print(f"wrote {len(paths)} trajectories to {cfg.output_dir}")
    return EXIT_OK


def cmd_analyze(args) -> int:
    report = analyze_file(args.path, args.ell, args.guard)
    text = report.to_csv()
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    r = report.regenerations
    log.info("%d regenerations, censored tail from %d", len(r), r.censored_tail_from)
    return EXIT_OK


def _run(args, lil: bool) -> int:
    cfg = _prepare(args)
    res = run_experiment(cfg, workers=args.workers, lil=lil, figures=lil and not args.no_figures)
    est = res.estimates
    if est.get("v_hat") is not None:
        print(f"v_hat = {est['v_hat']}  mean_tau_hat = {est['mean_tau_hat']:.6g}  blocks = {est['n_blocks']}")
        for u, cu in zip(est["u_list"], est["c_u_hat"]):
            print(f"u = {u}: c_u_hat = {cu:.6g}")
    print(f"outputs in {cfg.output_dir}: {', '.join(res.manifest.outputs)}")
    return EXIT_OK


def cmd_estimate(args) -> int:
    return _run(args, lil=False)


def cmd_lil(args) -> int:
    return _run(args, lil=True)


def cmd_verify(args) -> int:
    from rwre_lil import acceptance

    results = acceptance.run_all(only=set(args.only) if args.only else None)
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed")
    if args.report:
        rows = [dataclasses.asdict(r) for r in results]
        Path(args.report).write_text(json.dumps(rows, indent=2) + "\n")
    return EXIT_ACCEPTANCE if failed else EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rwre-lil",
        description="Regeneration-based Monte Carlo for the LIL of random walks in random environment.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write trajectory CSVs")
    _add_config_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", help="detect regenerations in a trajectory CSV")
    p.add_argument("path", type=Path)
    p.add_argument("--ell", type=_vector, default=(1.0, 0.0))
    p.add_argument("--guard", type=int, default=1000)
    p.add_argument("-o", "--output", help="regeneration CSV (default: stdout)")
    p.set_defaults(func=cmd_analyze)

    for name, func, text in [
        ("estimate", cmd_estimate, "estimate v, E[tau], c_u and diagnostics"),
        ("lil", cmd_lil, "estimate, then LIL curves, envelopes and figures"),
    ]:
        p = sub.add_parser(name, help=text)
        _add_config_flags(p)
        p.add_argument("--no-figures", action="store_true")
        p.set_defaults(func=func)

    p = sub.add_parser("verify", help="run the acceptance suite (slow: several minutes)")
    p.add_argument("--only", type=_int_list, help="comma-separated criterion numbers")
    p.add_argument("--report", help="also write results as JSON")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (ConfigError, ParseError, NotUnitVector) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except RwreError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
