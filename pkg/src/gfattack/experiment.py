"""Experiment configuration and the attack/evaluate pipeline behind the CLI."""

from __future__ import annotations

import csv
import dataclasses
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .attacker import AttackContext, AttackRequest, Method, run_attack
from .errors import ConfigError
from .graph import AttributedGraph, largest_connected_component, load_dataset
from .losses import AttackLossSpec, FilterFamily, filter_response, signal_energy, tail_indices
from .report import AttackReport, mean_delta
from .spectral import decompose
from .targets import MODEL_NAMES, EvalSplit, build_target, make_split, select_targets

log = logging.getLogger(__name__)

MODEL_FAMILY = {
    "gcn": FilterFamily.SYMMETRIC,
    "sgc": FilterFamily.SYMMETRIC,
    "deepwalk": FilterFamily.RANDOM_WALK,
    "line": FilterFamily.RANDOM_WALK,
}


@dataclass
class RunConfig:
    dataset: Optional[str] = None
    model: str = "gcn"
    models: list = field(default_factory=lambda: list(MODEL_NAMES))
    method: str = "gf_attack"
    methods: list = field(default_factory=lambda: ["gf_attack", "random", "degree"])
    family: Optional[str] = None      # default: the family matching the target model
    K: int = 2
    line_K: int = 1
    tail_size: int = 128              # n - T
    budget: int = 1
    budgets: list = field(default_factory=lambda: [1, 2, 3, 4, 5])
    n_targets: int = 100
    split_seed: int = 0
    model_seed: int = 0
    target_seed: int = 0
    random_seeds: list = field(default_factory=lambda: list(range(10)))
    greedy: bool = False
    lcc: bool = True
    normalize_features: bool = True
    workers: int = 1
    hyperparams: dict = field(default_factory=dict)

    @classmethod
    def load(cls, path=None, **overrides) -> "RunConfig":
        data = {}
        if path is not None:
            try:
                data = yaml.safe_load(Path(path).read_text()) or {}
            except FileNotFoundError:
                raise ConfigError(f"config file not found: {path}") from None
            except yaml.YAMLError as exc:
                raise ConfigError(f"cannot parse {path}: {exc}") from None
            if not isinstance(data, dict):
                raise ConfigError(f"{path}: top level must be a mapping")
        data.update({k: v for k, v in overrides.items() if v is not None})
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        cfg = cls(**data)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if not self.dataset:
            raise ConfigError("no dataset given")
        if not Path(self.dataset).exists():
            raise ConfigError(f"dataset path does not exist: {self.dataset}")
        for m in [self.model, *self.models]:
            if m not in MODEL_NAMES:
                raise ConfigError(f"unknown model {m!r}; choose from {MODEL_NAMES}")
        for m in [self.method, *self.methods]:
            try:
                Method(m)
            except ValueError:
                raise ConfigError(f"unknown method {m!r}") from None
        if self.family is not None:
            try:
                FilterFamily(self.family)
            except ValueError:
                raise ConfigError(f"unknown filter family {self.family!r}") from None
        checks = [
            (self.K >= 1 and self.line_K >= 1, "K must be >= 1"),
            (self.tail_size >= 1, "tail_size (n - T) must be >= 1"),
            (self.budget >= 0, "budget must be >= 0"),
            (all(b >= 0 for b in self.budgets), "budgets must be >= 0"),
            (self.n_targets >= 1, "n_targets must be >= 1"),
            (self.workers >= 1, "workers must be >= 1"),
            (len(self.random_seeds) >= 1, "random_seeds must not be empty"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


class Experiment:
    """Loads the data once and caches trained models, targets and spectra."""

    def __init__(self, cfg: RunConfig, graph: Optional[AttributedGraph] = None):
        self.cfg = cfg
        if graph is None:
            graph = load_dataset(cfg.dataset, cfg.normalize_features)
            if cfg.lcc:
                graph = largest_connected_component(graph)
        self.g = graph
        self.split: EvalSplit = make_split(self.g.n, cfg.split_seed)
        self._models: dict = {}
        self._contexts: dict = {}
        self._dec = None

    def loss_spec(self, model: str) -> AttackLossSpec:
        fam = FilterFamily(self.cfg.family) if self.cfg.family else MODEL_FAMILY[model]
        K = self.cfg.line_K if (model == "line" and not self.cfg.family) else self.cfg.K
        return AttackLossSpec.for_graph(fam, K, self.g.n, self.cfg.tail_size)

    def context(self, spec: AttackLossSpec) -> AttackContext:
        key = (spec.family, spec.K, spec.T)
        if key not in self._contexts:
            if self._dec is None:
                self._dec = decompose(self.g)
            self._contexts[key] = AttackContext.build(self.g, spec, self._dec)
        return self._contexts[key]

    def model(self, name: str):
        """(fitted model, clean predictions, targets) for ``name``."""
        if name not in self._models:
            t0 = time.perf_counter()
            m = build_target(name, self.g, self.split, self.cfg.model_seed, **self.cfg.hyperparams)
            pred = m.predict(self.g)
            targets = select_targets(pred, self.g, self.split, self.cfg.n_targets, self.cfg.target_seed)
            self._models[name] = (m, pred, targets)
            log.info("trained %s in %.1fs", name, time.perf_counter() - t0)
        return self._models[name]

    def run(self, model: str, method: str, budget: int, seed: int = 0) -> AttackReport:
        from .targets import evaluate_attack

        m, pred, targets = self.model(model)
        spec = self.loss_spec(model)
        ctx = self.context(spec) if Method(method) is not Method.RANDOM else None
        cfg = self.cfg

        def attacker(g, t):
            req = AttackRequest(t, budget, spec, method, seed=seed, greedy=cfg.greedy, workers=cfg.workers)
            return run_attack(g, req, ctx)

        echo = {
            "dataset": str(cfg.dataset), "n": self.g.n, "model": model, "method": method,
            "budget": budget, "seed": seed, "family": spec.family.value, "K": spec.K, "T": spec.T,
            "greedy": cfg.greedy, "split_seed": cfg.split_seed, "model_seed": cfg.model_seed,
            "target_seed": cfg.target_seed, "n_targets": cfg.n_targets,
        }
        t0 = time.perf_counter()
        # targets are parallelised only for filter models; embedding targets
        # already saturate BLAS threads per attacked graph
        workers = cfg.workers if not getattr(m, "transductive", False) else 1
        rep = evaluate_attack(m, self.g, self.split, targets, attacker, config=echo, method=method,
                              clean_pred=pred, workers=workers)
        rep.timing = {"seconds": round(time.perf_counter() - t0, 3)}
        return rep

    def run_averaged(self, model: str, method: str, budget: int) -> list[AttackReport]:
        seeds = self.cfg.random_seeds if Method(method) is Method.RANDOM else [0]
        return [self.run(model, method, budget, s) for s in seeds]


def spectrum_rows(g: AttributedGraph, family, K: int, tail_size: int) -> list[dict]:
    dec = decompose(g)
    spec = AttackLossSpec.for_graph(family, K, g.n, tail_size)
    resp = filter_response(spec.family, K, dec.lambdas)
    energy = signal_energy(dec, g.features).energies
    tail = set(tail_indices(spec, dec).tolist())
    return [
        {"index": i, "lambda": float(dec.lambdas[i]), "response": float(resp[i]),
         "energy": float(energy[i]), "in_tail": int(i in tail)}
        for i in range(len(dec))
    ]


SPECTRUM_HEADER = ["index", "lambda", "response", "energy", "in_tail"]
DELTA_HEADER = ["method", *MODEL_NAMES]
SWEEP_HEADER = ["model", "method", "budget", "delta_pct", "test_delta_pct", "n_runs"]


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=header, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(r.get(k, "")) for k in header})
    return path


def _fmt(v):
    if isinstance(v, float):
        # rounding then adding 0.0 folds -0.0, so tables never print "-0.000000"
        return f"{round(v, 6) + 0.0:.6f}" if np.isfinite(v) else ""
    return v


def compare(exp: Experiment) -> tuple[list[dict], list[dict], list[AttackReport]]:
    """Run every (method, model) at ``cfg.budget`` plus the β sweep.

    Returns the methods × models delta table, the sweep rows (deltas in
    percentage points) and every underlying report.
    """
    cfg = exp.cfg
    reports: list[AttackReport] = []
    table = []
    cache: dict = {}

    def cell(model, method, budget):
        key = (model, method, budget)
        if key not in cache:
            reps = exp.run_averaged(model, method, budget)
            reports.extend(reps)
            cache[key] = reps
        return cache[key]

    for method in cfg.methods:
        row = {"method": method}
        for model in cfg.models:
            row[model] = 100.0 * mean_delta(cell(model, method, cfg.budget))
        table.append(row)
    sweep = []
    for model in cfg.models:
        for method in cfg.methods:
            for b in cfg.budgets:
                reps = cell(model, method, b)
                sweep.append({"model": model, "method": method, "budget": b,
                              "delta_pct": 100.0 * mean_delta(reps),
                              "test_delta_pct": 100.0 * mean_delta(reps, "test_delta"),
                              "n_runs": len(reps)})
    return table, sweep, reports
