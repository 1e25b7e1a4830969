"""Command-line entry point.

Exit codes: 0 success, 1 validation checks failed, 2 config error,
3 method guard violated, 4 runtime error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
import time
from pathlib import Path
from typing import Sequence

from .config import ConfigError, RunConfig, load_config
from .experiments import ExperimentError, ExperimentSpec, run_experiment
from .game import ENUMERATION_MAX_N, EnumerationLimitError
from .models import SchemaError
from .models import model_from_dict as learner_from_dict
from .risk import risk_derdava
from .valuation import (
    ESTIMATOR_MAX_N,
    EXACT_MAX_N,
    exact_derdava,
    mc_derdava,
    mcmc012_derdava,
    plan_sample_size,
    scaled_semivalue,
)
from .validation import run_validation_suite

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_GUARD, EXIT_RUNTIME = 0, 1, 2, 3, 4
log = logging.getLogger("derdava")


class GuardError(Exception):
    pass


def _write(out_dir: Path, name: str, text: str) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / name
    path.write_text(text, encoding="utf-8")
    return path


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    if args.seed is not None:
        cfg.seed = args.seed
        cfg.estimator = dataclasses.replace(cfg.estimator, seed=args.seed)
    if args.output_dir is not None:
        cfg.output_dir = args.output_dir
    cfg.estimator = dataclasses.replace(cfg.estimator, threads=args.threads)
    return cfg


def check_guards(cfg: RunConfig, n: int) -> None:
    """Reject method/size combinations before any data is loaded or models fit."""
    method = cfg.method
    if method == "exact" and n > EXACT_MAX_N:
        raise GuardError(f"exact DeRDaVa supports n <= {EXACT_MAX_N} (got {n}); use method mc or mcmc012")
    if method == "risk" and cfg.risk_mode == "exact" and n > EXACT_MAX_N:
        raise GuardError(f"exact Risk-DeRDaVa supports n <= {EXACT_MAX_N} (got {n}); set risk.mode: mc")
    if method == "scaled" and n > ENUMERATION_MAX_N:
        raise GuardError(f"scaled semivalue enumerates 2^n coalitions; n <= {ENUMERATION_MAX_N} (got {n})")
    if method in ("mc", "mcmc012") or (method == "risk" and cfg.risk_mode == "mc"):
        if n > ESTIMATOR_MAX_N:
            raise GuardError(f"estimators support n <= {ESTIMATOR_MAX_N} (got {n})")


def _dispatch(cfg: RunConfig, game, model):
    if cfg.method == "exact":
        return exact_derdava(game, cfg.prior, model)
    if cfg.method == "mc":
        return mc_derdava(game, cfg.prior, model, cfg.estimator)
    if cfg.method == "mcmc012":
        return mcmc012_derdava(game, cfg.prior, model, cfg.estimator)
    if cfg.method == "scaled":
        return scaled_semivalue(game, cfg.prior, model)
    return risk_derdava(
        game, cfg.prior, model, cfg.risk, cfg.estimator, mode=cfg.risk_mode, cvar_samples=cfg.cvar_samples
    )


def cmd_value(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    if "game" not in cfg.raw:
        raise ConfigError("missing required key 'game'")
    n = cfg.num_sources()
    check_guards(cfg, n)
    game = cfg.build_game()
    model = cfg.build_deletion(game.n)
    result = _dispatch(cfg, game, model)
    out = Path(cfg.output_dir)
    _write(out, "values.csv", result.to_csv())
    _write(out, "values.json", result.to_json())
    _write(out, "config.resolved.yaml", cfg.to_yaml())
    print(f"method={result.method} n={game.n} wall_time={result.wall_time:.3f}s")
    print(f"{'source':>6}  {'score':>14}  {'stderr':>10}")
    for i, (s, e) in enumerate(zip(result.scores, result.stderr)):
        print(f"{i:>6}  {s:>14.8f}  {e:>10.2e}")
    for key in ("converged", "gelman_rubin", "samples_per_source", "never_present"):
        if key in result.diagnostics:
            print(f"{key}: {result.diagnostics[key]}")
    return EXIT_OK


def experiment_spec(cfg: RunConfig, threads: int) -> ExperimentSpec:
    exp = dict(cfg.raw.get("experiment") or {})
    if "kind" not in exp:
        raise ConfigError("missing required key 'kind'", ("experiment",))
    kwargs = {}
    for key in ("trials", "num_draws"):
        if key in exp:
            kwargs[key] = int(exp[key])
    for key in ("order", "mode", "scoring"):
        if key in exp:
            kwargs[key] = str(exp[key])
    for key in ("alphas", "p_grid", "base_p", "noise_rates"):
        if key in exp:
            val = exp[key]
            kwargs[key] = tuple(float(x) for x in (val if isinstance(val, list) else [val]))
    if "stay_prob" in exp:
        kwargs["stay_prob"] = float(exp["stay_prob"])
    if "learner" in exp:
        kwargs["learner"] = learner_from_dict(exp["learner"])
    unknown = set(exp) - {"kind", "learner", "stay_prob"} - set(kwargs)
    if unknown:
        key = sorted(unknown)[0]
        raise ConfigError(f"unknown key {key!r}", ("experiment", key))
    game = model = None
    if exp["kind"] not in ("Similarity", "Quality"):
        if "game" not in cfg.raw:
            raise ConfigError("missing required key 'game'")
        game = cfg.build_game()
        if EXACT_MAX_N < game.n:
            raise GuardError(f"experiments use exact DeRDaVa; n <= {EXACT_MAX_N} (got {game.n})")
        if exp["kind"] != "StayingSweep" or "deletion" in cfg.raw:
            model = cfg.build_deletion(game.n)
    try:
        return ExperimentSpec(
            exp["kind"], game, cfg.prior, model, seed=cfg.seed, threads=threads, **kwargs
        )
    except ExperimentError as exc:
        raise ConfigError(str(exc), ("experiment",)) from None


def cmd_experiment(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    try:
        spec = experiment_spec(cfg, args.threads)
    except ConfigError as err:
        raise _anchor(err, cfg) from None
    t0 = time.perf_counter()
    report = run_experiment(spec)
    out = Path(cfg.output_dir)
    _write(out, "experiment.csv", report.to_csv())
    _write(out, "experiment.json", report.to_json())
    _write(out, "config.resolved.yaml", cfg.to_yaml())
    print(f"experiment={report.experiment} rows={len(report.rows)} wall_time={time.perf_counter() - t0:.3f}s")
    for key, val in report.summary.items():
        print(f"{key}: {val}")
    return EXIT_OK


def _anchor(err: ConfigError, cfg: RunConfig) -> ConfigError:
    if err.line is not None or not cfg.source:
        return err
    import yaml

    from .config import _line_of

    node = yaml.compose(Path(cfg.source).read_text(encoding="utf-8"))
    return ConfigError(err.message, err.path, _line_of(node, err.path))


def cmd_validate(args) -> int:
    if args.trials < 1:
        raise ConfigError("trials must be >= 1", ("trials",))
    seed = 0 if args.seed is None else args.seed
    t0 = time.perf_counter()
    reports = run_validation_suite(seed, args.trials)
    ok = all(r.passed for r in reports)
    out = Path(args.output_dir or "out")
    doc = {"seed": seed, "trials": args.trials, "passed": ok, "reports": [r.to_dict() for r in reports]}
    _write(out, "validation_report.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")
    failed = [r for r in reports if not r.passed]
    print(f"checks={len(reports)} failed={len(failed)} wall_time={time.perf_counter() - t0:.3f}s")
    for r in failed:
        print(f"FAIL {r.axiom}: violation={r.max_violation:.3e} witness={json.dumps(r.witness, sort_keys=True)}")
    return EXIT_OK if ok else EXIT_FAILED


def cmd_plan_samples(args) -> int:
    n, eps, delta = args.n, args.epsilon, args.delta
    width = args.utility_range
    if args.config:
        cfg = load_config(args.config)
        if n is None and "game" in cfg.raw:
            n = cfg.num_sources()
        eps = eps if eps is not None else cfg.estimator.epsilon
        delta = delta if delta is not None else cfg.estimator.delta
    if n is None or eps is None or delta is None:
        raise ConfigError("plan-samples needs n, epsilon and delta (flags or config)")
    if n < 1 or eps <= 0 or not 0 < delta < 1 or width <= 0:
        raise ConfigError("need n >= 1, epsilon > 0, 0 < delta < 1 and utility range > 0")
    t = plan_sample_size(n, width, eps, delta)
    print(t)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="derdava", description="Deletion-robust data valuation")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        if config_required:
            p.add_argument("config", help="YAML run configuration")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--output-dir", default=None)

    common(sub.add_parser("value", help="compute valuation scores"))
    common(sub.add_parser("experiment", help="run an experiment"))
    p = sub.add_parser("validate", help="run axiom and consistency checks")
    common(p, config_required=False)
    p.add_argument("--trials", type=int, default=50)
    p = sub.add_parser("plan-samples", help="Monte-Carlo sample size for an (epsilon, delta) target")
    common(p, config_required=False)
    p.add_argument("--config", default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--utility-range", type=float, default=1.0)
    return parser


COMMANDS = {
    "value": cmd_value,
    "experiment": cmd_experiment,
    "validate": cmd_validate,
    "plan-samples": cmd_plan_samples,
}


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, SchemaError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (GuardError, EnumerationLimitError) as err:
        print(f"guard error: {err}", file=sys.stderr)
        return EXIT_GUARD
    except Exception as err:  # noqa: BLE001
        print(f"runtime error: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
