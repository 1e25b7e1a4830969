"""YAML run configuration with line-anchored validation errors.

Schema (all sections optional unless stated)::

    seed: 0                      # global seed
    output_dir: out
    game:                        # required
      kind: two_source | additive | random_monotone | table | dataset
      weights: [..]              # additive
      n: 8                       # random_monotone
      seed: 1                    # random_monotone
      values: [..]               # table, length 2**n
      path: data.csv             # dataset
      label_column: label        # dataset
      val_fraction: 0.2          # dataset
      partition: {kind: equal_random, num_sources: 10} | {kind: file, path: p.csv}
      learner: {kind: knn, k: 5} | {kind: gaussian_nb}
    prior: {family: shapley | banzhaf | loo | beta | custom, alpha, beta, weights}
    deletion: {kind: independent, p: [..]} | {kind: joint, n, table: [{subset, prob}]}
              | {kind: size_weighted, q: [..]} | {kind: beta_bernoulli, a: [..], b: [..]}
    method: exact | mc | mcmc012 | scaled | risk
    estimator: {num_chains, batch_size, gr_threshold, max_samples, epsilon, delta}
    risk: {side: averse | seeking | neutral, alpha: 1.0, mode: exact | mc, cvar_samples: 2048}
    experiment:
      kind: StayingSweep | Similarity | Quality | AdditionRemoval | DeletionSimulation | RiskSweep
      trials, order, mode, scoring, num_draws, alphas, p_grid, base_p, noise_rates, stay_prob

When ``deletion`` is omitted every source stays with probability 1.
"""

from __future__ import annotations

import copy
import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .deletion import DeletionModel, model_from_dict as deletion_from_dict, point_mass
from .game import CooperativeGame, make_additive_game, make_random_monotone_game, table_game, two_source_fixture
from .models import build_utility, equal_random_partition, ingest_csv, load_partition_csv
from .models import model_from_dict as learner_from_dict
from .risk import RiskSpec
from .semivalue import SemivaluePrior, prior_from_dict
from .valuation import EstimatorConfig

METHODS = ("exact", "mc", "mcmc012", "scaled", "risk")
GAME_KINDS = ("two_source", "additive", "random_monotone", "table", "dataset")
TOP_KEYS = {
    "seed", "output_dir", "game", "prior", "deletion", "method", "estimator", "risk", "experiment",
}


class ConfigError(ValueError):
    """Schema violation, optionally anchored to a line of the source file."""

    def __init__(self, message: str, path: tuple = (), line: int | None = None):
        self.message = message
        self.path = tuple(path)
        self.line = line
        super().__init__(self.__str__())

    def __str__(self) -> str:
        where = ".".join(str(p) for p in self.path) or "<root>"
        prefix = f"line {self.line}: " if self.line is not None else ""
        return f"{prefix}{where}: {self.message}"


@dataclass
class RunConfig:
    raw: dict[str, Any]
    seed: int = 0
    output_dir: str = "out"
    method: str = "exact"
    prior: SemivaluePrior | None = None
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    risk: RiskSpec = field(default_factory=RiskSpec)
    risk_mode: str = "exact"
    cvar_samples: int = 2048
    source: str | None = None

    def num_sources(self) -> int:
        return source_count(self.raw["game"], self._base_dir)

    @property
    def _base_dir(self) -> Path:
        return Path(self.source).parent if self.source else Path(".")

    def build_game(self) -> CooperativeGame:
        return build_game(self.raw["game"], self.seed, self._base_dir)

    def build_deletion(self, n: int) -> DeletionModel:
        spec = self.raw.get("deletion")
        if spec is None:
            return point_mass(n)
        model = _wrap(("deletion",), deletion_from_dict, spec)
        if model.n != n:
            raise ConfigError(f"deletion model covers {model.n} sources, game has {n}", ("deletion",))
        return model

    def to_yaml(self) -> str:
        """Resolved config; re-running it reproduces the same outputs.

        ``output_dir`` is dropped so the file is identical wherever a run lands.
        """
        out = copy.deepcopy(self.raw)
        out["seed"] = self.seed
        out.pop("output_dir", None)
        return yaml.safe_dump(out, sort_keys=True)


# ------------------------------------------------------------------ locating errors


def _line_of(node: yaml.Node | None, path: tuple) -> int | None:
    """1-based line of the key (or list item) reached along ``path``."""
    line = node.start_mark.line + 1 if node is not None else None
    for key in path:
        if node is None:
            break
        nxt = None
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                if k.value == str(key):
                    nxt = v
                    line = k.start_mark.line + 1
                    break
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            nxt = node.value[key]
            line = nxt.start_mark.line + 1
        node = nxt
    return line


def _wrap(path: tuple, fn, *args):
    try:
        return fn(*args)
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        msg = f"missing key {exc}" if isinstance(exc, KeyError) else str(exc)
        raise ConfigError(msg, path) from None


def _require(d: Any, key: str, path: tuple, kind=None):
    if not isinstance(d, dict):
        raise ConfigError("expected a mapping", path)
    if key not in d:
        raise ConfigError(f"missing required key {key!r}", path)
    val = d[key]
    if kind is not None and not isinstance(val, kind):
        raise ConfigError(f"expected {getattr(kind, '__name__', kind)}, got {type(val).__name__}", path + (key,))
    return val


# ------------------------------------------------------------------ games


def source_count(game: dict, base: Path = Path(".")) -> int:
    kind = game["kind"]
    if kind == "two_source":
        return 2
    if kind == "additive":
        return len(game["weights"])
    if kind == "random_monotone":
        return int(game["n"])
    if kind == "table":
        return len(game["values"]).bit_length() - 1
    part = game.get("partition", {"kind": "equal_random", "num_sources": 10})
    if part.get("kind") == "file":
        with open(base / part["path"], newline="", encoding="utf-8") as fh:
            ids = {int(row[1]) for row in csv.reader(fh) if len(row) > 1 and row[1].strip().isdigit()}
        return max(ids) + 1 if ids else 0
    return int(part["num_sources"])


def build_game(game: dict, seed: int, base: Path = Path(".")) -> CooperativeGame:
    kind = game["kind"]
    if kind == "two_source":
        return two_source_fixture()
    if kind == "additive":
        return make_additive_game(game["weights"])
    if kind == "random_monotone":
        return make_random_monotone_game(int(game["n"]), int(game.get("seed", seed)))
    if kind == "table":
        return table_game(game["values"])
    train, val = ingest_csv(
        base / game["path"], game["label_column"], seed, float(game.get("val_fraction", 0.2))
    )
    part = game.get("partition", {"kind": "equal_random", "num_sources": 10})
    if part.get("kind") == "file":
        partition = load_partition_csv(base / part["path"], len(train))
    else:
        partition = equal_random_partition(len(train), int(part["num_sources"]), seed)
    learner = learner_from_dict(game.get("learner", {"kind": "knn", "k": 5}))
    return build_utility(train, val, partition, learner)


def _check_game(game: Any) -> None:
    path = ("game",)
    kind = _require(game, "kind", path, str)
    if kind not in GAME_KINDS:
        raise ConfigError(f"unknown game kind {kind!r}; choose from {GAME_KINDS}", path + ("kind",))
    if kind == "additive":
        w = _require(game, "weights", path, list)
        if not w or not all(isinstance(x, (int, float)) for x in w):
            raise ConfigError("weights must be a non-empty list of numbers", path + ("weights",))
    elif kind == "random_monotone":
        n = _require(game, "n", path, int)
        if not 1 <= n <= 16:
            raise ConfigError("n must lie in [1, 16]", path + ("n",))
    elif kind == "table":
        vals = _require(game, "values", path, list)
        if len(vals) < 2 or len(vals) & (len(vals) - 1):
            raise ConfigError("values must have length 2**n with n >= 1", path + ("values",))
    elif kind == "dataset":
        _require(game, "path", path, str)
        _require(game, "label_column", path, str)
        part = game.get("partition", {"kind": "equal_random", "num_sources": 10})
        if not isinstance(part, dict) or part.get("kind") not in ("equal_random", "file"):
            raise ConfigError("partition.kind must be equal_random or file", path + ("partition",))
        if part["kind"] == "equal_random":
            k = _require(part, "num_sources", path + ("partition",), int)
            if k < 1:
                raise ConfigError("num_sources must be >= 1", path + ("partition", "num_sources"))
        else:
            _require(part, "path", path + ("partition",), str)
        if "learner" in game:
            _wrap(path + ("learner",), learner_from_dict, game["learner"])


# ------------------------------------------------------------------ loading


def parse_config(text: str, source: str | None = None) -> RunConfig:
    try:
        node = yaml.compose(text)
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(str(getattr(exc, "problem", exc)), (), mark.line + 1 if mark else None) from None
    if raw is None:
        raw = {}
    try:
        return _validate(raw, source)
    except ConfigError as err:
        if err.line is None:
            err = ConfigError(err.message, err.path, _line_of(node, err.path))
        raise err from None


def load_config(path: str | Path) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return parse_config(text, str(path))


def _validate(raw: Any, source: str | None) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("top level must be a mapping")
    unknown = sorted(set(raw) - TOP_KEYS)
    if unknown:
        raise ConfigError(f"unknown key {unknown[0]!r}", (unknown[0],))
    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        raise ConfigError("seed must be a non-negative integer", ("seed",))
    if "game" in raw:
        _check_game(raw["game"])
    method = raw.get("method", "exact")
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r}; choose from {METHODS}", ("method",))
    prior = _wrap(("prior",), prior_from_dict, raw.get("prior", {"family": "shapley"}))
    est = raw.get("estimator", {}) or {}
    if not isinstance(est, dict):
        raise ConfigError("expected a mapping", ("estimator",))
    allowed = {"num_chains", "batch_size", "gr_threshold", "max_samples", "epsilon", "delta"}
    for key in est:
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r}", ("estimator", key))
    estimator = _wrap(("estimator",), lambda: EstimatorConfig(seed=seed, **est))
    risk = raw.get("risk", {}) or {}
    if not isinstance(risk, dict):
        raise ConfigError("expected a mapping", ("risk",))
    spec = _wrap(("risk",), lambda: RiskSpec(risk.get("side", "averse"), float(risk.get("alpha", 1.0))))
    mode = risk.get("mode", "exact")
    if mode not in ("exact", "mc"):
        raise ConfigError("risk.mode must be exact or mc", ("risk", "mode"))
    cfg = RunConfig(
        raw=raw,
        seed=seed,
        output_dir=str(raw.get("output_dir", "out")),
        method=method,
        prior=prior,
        estimator=estimator,
        risk=spec,
        risk_mode=mode,
        cvar_samples=int(risk.get("cvar_samples", 2048)),
        source=source,
    )
    if "deletion" in raw and "game" in raw:
        n = _wrap(("game",), cfg.num_sources)
        cfg.build_deletion(n)
    if "experiment" in raw and not isinstance(raw["experiment"], dict):
        raise ConfigError("expected a mapping", ("experiment",))
    return cfg
