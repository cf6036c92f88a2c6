"""Command-line entry point: run | sweep | extract | validate.

Runs are described by a single JSON config file (the parameters are too
coupled for flags); command-line flags cover only paths, seed override,
worker count, and verbosity.  Every output embeds the config hash and seed,
and reruns with identical inputs are byte-identical apart from the `created`
timestamp.
"""

from __future__ import annotations

import argparse
import importlib
import json
import logging
import math
import sys
from pathlib import Path

from .bench import PROBLEMS, Problem, convergence_sweep, level_for_tolerance
from .extract import export_geometry, extract_levelset
from .grid import Domain, validate_partition
from .io import (make_metadata, read_checkpoint, write_checkpoint,
                 write_ledger, write_sweep_csv, write_sweep_summary)
from .oracles import (DeterministicOracle, GaussianNoiseOracle, MonteCarloOracle,
                      averaged_mc_variance)
from .refine import RunConfig, run_adaptive

logger = logging.getLogger("levelmesh")

_CONFIG_KEYS = {
    "problem", "function", "domain", "h0", "max_level", "epsilon",
    "alpha", "beta", "p", "R", "c", "M0", "seed", "base_level_override",
    "oracle", "n_runs", "n_points", "L_range", "uniform", "geometry_format",
}


class ConfigError(ValueError):
    pass


def _load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}") from exc
    unknown = set(raw) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return raw


def _import_callable(spec: str):
    mod_name, _, attr = spec.partition(":")
    if not attr:
        raise ConfigError(f"callable spec must look like 'module:attr', got {spec!r}")
    try:
        return getattr(importlib.import_module(mod_name), attr)
    except (ImportError, AttributeError) as exc:
        raise ConfigError(f"cannot import {spec!r}: {exc}") from exc


def _inf_ok(v, default):
    if v is None:
        return default
    return math.inf if v in ("inf", "Infinity") else float(v)


def _resolve(raw: dict) -> tuple[RunConfig, object, Problem | None, dict]:
    """Build (config, oracle, problem, resolved-dict) from a raw config mapping."""
    problem = None
    fn = None
    if "problem" in raw:
        name = raw["problem"]
        if name not in PROBLEMS:
            raise ConfigError(f"unknown problem {name!r}; available: {sorted(PROBLEMS)}")
        problem = PROBLEMS[name]
        fn = problem.f
    elif "function" in raw:
        fn = _import_callable(raw["function"])

    if "domain" in raw:
        domain = Domain(lower=tuple(raw["domain"]["lower"]),
                        upper=tuple(raw["domain"]["upper"]))
    elif problem is not None:
        domain = problem.domain
    else:
        raise ConfigError("config needs a 'domain' (or a stock 'problem')")

    h0 = raw.get("h0", problem.h0 if problem else None)
    if h0 is None:
        raise ConfigError("config needs 'h0' (or a stock 'problem')")

    kwargs = dict(
        domain=domain, h0=float(h0),
        alpha=float(raw.get("alpha", 2.0)),
        beta=_inf_ok(raw.get("beta"), 0.5),
        p=_inf_ok(raw.get("p"), math.inf),
        R=None if raw.get("R") is None else float(raw["R"]),
        c=float(raw.get("c", 1.0)),
        M0=float(raw.get("M0", 1.0)),
        seed=int(raw.get("seed", 0)),
        base_level_override=(None if raw.get("base_level_override") is None
                             else int(raw["base_level_override"])),
    )
    if "max_level" in raw:
        max_level = int(raw["max_level"])
    elif "epsilon" in raw:
        probe = RunConfig(max_level=1, **kwargs)
        max_level = max(1, level_for_tolerance(float(raw["epsilon"]), probe))
        logger.info("epsilon=%s mapped to max_level=%d", raw["epsilon"], max_level)
    else:
        raise ConfigError("config needs 'max_level' or 'epsilon'")
    cfg = RunConfig(max_level=max_level, **kwargs)
    cfg.validate()

    oracle_spec = dict(raw.get("oracle", {"kind": "gaussian"}))
    kind = oracle_spec.pop("kind", "gaussian")
    schedule = cfg.schedule()
    if kind == "deterministic":
        if fn is None:
            raise ConfigError("deterministic oracle needs 'problem' or 'function'")
        oracle = DeterministicOracle(fn, M0=cfg.M0)
    elif kind == "gaussian":
        if fn is None:
            raise ConfigError("gaussian oracle needs 'problem' or 'function'")
        default_var = problem.sample_variance if problem else 1.0
        sample_variance = float(oracle_spec.pop("sample_variance", default_var))
        oracle = GaussianNoiseOracle(
            fn, variance_at=averaged_mc_variance(schedule, sample_variance),
            schedule=schedule, sigma=math.sqrt(sample_variance))
    elif kind == "monte_carlo":
        sampler_spec = oracle_spec.pop("sampler", None)
        if sampler_spec is None:
            raise ConfigError("monte_carlo oracle needs a 'sampler' (module:attr)")
        oracle = MonteCarloOracle(_import_callable(sampler_spec), schedule=schedule)
    else:
        raise ConfigError(f"unknown oracle kind {kind!r}")
    if oracle_spec:
        raise ConfigError(f"unknown oracle keys: {sorted(oracle_spec)}")

    resolved = dict(raw)
    resolved["max_level"] = max_level
    return cfg, oracle, problem, resolved


def cmd_run(args) -> int:
    raw = _load_config(args.config)
    if args.seed is not None:
        raw["seed"] = args.seed
    cfg, oracle, problem, resolved = _resolve(raw)
    outdir = Path(args.output)
    outdir.mkdir(parents=True, exist_ok=True)
    meta = make_metadata(resolved, cfg.seed)

    logger.info("running adaptive sweep: d=%d, L=%d, ell0=%d",
                cfg.d, cfg.max_level, cfg.ell0)
    result = run_adaptive(cfg, oracle, uniform=bool(raw.get("uniform", False)),
                          workers=args.workers)
    mesh = result.mesh()

    write_checkpoint(result, outdir / "checkpoint.json", metadata=meta)
    write_ledger(result.ledger, outdir / "ledger.json", metadata=meta)

    geometry_file = None
    if mesh.d in (2, 3):
        fmt = raw.get("geometry_format", "segments-csv" if mesh.d == 2 else "obj")
        geom = extract_levelset(mesh)
        suffix = "csv" if fmt == "segments-csv" else "obj"
        geometry_file = outdir / f"levelset.{suffix}"
        export_geometry(geom, geometry_file, fmt, metadata=meta)

    summary = {
        "format": "levelmesh-run",
        "version": 1,
        "meta": meta,
        "config": resolved,
        "n_leaves": mesh.n_cells,
        "leaf_levels": {str(k): v for k, v in mesh.level_counts().items()},
        "total_work": result.ledger.total_cost,
        "outputs": sorted(p.name for p in
                          [outdir / "checkpoint.json", outdir / "ledger.json"]
                          + ([geometry_file] if geometry_file else [])),
    }
    with open(outdir / "run.json", "w") as fh:
        json.dump(summary, fh, sort_keys=True, indent=1)
        fh.write("\n")
    logger.info("run complete: %d leaf cells, total work %.6g",
                mesh.n_cells, result.ledger.total_cost)
    return 0


def cmd_sweep(args) -> int:
    raw = _load_config(args.config)
    if args.seed is not None:
        raw["seed"] = args.seed
    if "L_range" not in raw or not raw["L_range"]:
        raise ConfigError("sweep config needs a nonempty ascending 'L_range'")
    raw.setdefault("max_level", int(max(raw["L_range"])))
    cfg, oracle, problem, resolved = _resolve(raw)
    if problem is None:
        raise ConfigError("sweep needs a stock 'problem' (analytic truth required)")
    noisy = raw.get("oracle", {}).get("kind", "gaussian") != "deterministic"

    outdir = Path(args.output)
    outdir.mkdir(parents=True, exist_ok=True)
    meta = make_metadata(resolved, cfg.seed)
    sweep = convergence_sweep(
        problem, [int(L) for L in raw["L_range"]], cfg=cfg,
        n_runs=int(raw.get("n_runs", 10)), n_points=int(raw.get("n_points", 512)),
        noisy=noisy, uniform=bool(raw.get("uniform", False)),
        seed=cfg.seed, workers=args.workers)
    write_sweep_csv(sweep, outdir / "sweep.csv", metadata=meta)
    write_sweep_summary(sweep, outdir / "sweep.json", metadata=meta)
    logger.info("sweep complete: fitted slope %.3f (target %.3f)",
                sweep.fitted_slope, sweep.target_slope)
    return 0


def cmd_extract(args) -> int:
    result = read_checkpoint(args.checkpoint)
    mesh = result.mesh()
    geom = extract_levelset(mesh)
    meta = make_metadata(result.config.config_fields(), result.config.seed)
    export_geometry(geom, args.output, args.format, metadata=meta)
    logger.info("wrote %d pieces to %s", geom.n_pieces, args.output)
    return 0


def cmd_validate(args) -> int:
    result = read_checkpoint(args.checkpoint)
    mesh = result.mesh()
    report = validate_partition(mesh)
    print(report)
    if not mesh.has_values():
        print("approximants: MISSING on some leaves")
        return 1
    print(f"approximants: present on all {mesh.n_cells} leaves")
    recomputed = sum(
        t.evaluations * result.ledger.schedule.at_level(t.level)
        for t in result.ledger.per_level
    )
    exact = recomputed == result.ledger.total_cost
    print(f"ledger: total {result.ledger.total_cost!r}, recomputed {recomputed!r} "
          f"({'exact' if exact else 'MISMATCH'})")
    return 0 if (report.ok and exact) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="levelmesh",
        description="Adaptive, noise-robust zero level-set estimation on dyadic meshes.",
    )
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="one adaptive run from a JSON config")
    p_run.add_argument("config")
    p_run.add_argument("-o", "--output", default="out")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--workers", type=int, default=1)
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="work-versus-error convergence sweep")
    p_sweep.add_argument("config")
    p_sweep.add_argument("-o", "--output", default="out")
    p_sweep.add_argument("--seed", type=int, default=None)
    p_sweep.add_argument("--workers", type=int, default=1)
    p_sweep.set_defaults(func=cmd_sweep)

    p_ext = sub.add_parser("extract", help="level-set geometry from a checkpoint")
    p_ext.add_argument("checkpoint")
    p_ext.add_argument("--format", choices=("segments-csv", "obj"),
                       default="segments-csv")
    p_ext.add_argument("-o", "--output", default="levelset.csv")
    p_ext.set_defaults(func=cmd_extract)

    p_val = sub.add_parser("validate", help="partition and ledger checks on a checkpoint")
    p_val.add_argument("checkpoint")
    p_val.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose > 1 else
        logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
