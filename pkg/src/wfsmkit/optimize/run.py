"""End-to-end stator optimisation: GA search, fine re-evaluation, selection."""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from ..exceptions import ConfigError
from ..magnetics.design import load_machine, save_machine
from ..magnetics.fluxmap import DEFAULT_GRID, OPTIMIZATION_GRID
from ..resources import config_hash, resolve
from .nsga2 import NSGA2
from .problem import (DEFAULT_OPERATING_POINTS, ConstraintSpec, EvaluationSettings, OperatingPoint,
                      VariableBounds, evaluate_candidate, variant_design)
from .selection import Economics, load_economics, pareto_front, select_best, tbv_terms

GA_DEFAULTS = {"pop_size": 40, "n_generations": 60, "eta_c": 15.0, "eta_m": 20.0, "p_crossover": 0.9}


@dataclass(frozen=True)
class OptimizationConfig:
    base_machine: str = "wfsm_m0"
    variant: str | None = "M6"
    bounds: VariableBounds = field(default_factory=VariableBounds)
    constraints: ConstraintSpec = field(default_factory=ConstraintSpec.benchmark)
    operating_points: tuple = DEFAULT_OPERATING_POINTS
    settings: EvaluationSettings = field(default_factory=EvaluationSettings)
    final_grid: tuple = DEFAULT_GRID
    ga: dict = field(default_factory=lambda: dict(GA_DEFAULTS))
    seed: int = 0
    economics: str = "economics"
    hv_reference_efficiency: float = 0.8
    base_dir: str | None = None

    def __post_init__(self):
        unknown = set(self.ga) - set(GA_DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown GA settings {sorted(unknown)}")
        if len(self.operating_points) != 2:
            raise ConfigError("exactly two operating points are optimised")

    @property
    def ga_params(self):
        return {**GA_DEFAULTS, **self.ga}

    def to_dict(self):
        s = self.settings
        b = self.bounds
        return {
            "base_machine": self.base_machine, "variant": self.variant,
            "bounds": {n: list(getattr(b, n)) for n in b.names},
            "constraints": self.constraints.to_list(),
            "operating_points": [{"name": p.name, "torque": p.torque, "speed_rpm": p.speed_rpm}
                                 for p in self.operating_points],
            "evaluation": {"grid": list(s.grid), "final_grid": list(self.final_grid),
                           "v_dc_ceiling": s.v_dc_ceiling, "v_dc_rated": s.v_dc_rated,
                           "low_speed_rpm": s.low_speed_rpm, "peak_power_speed_rpm": s.peak_power_speed_rpm},
            "ga": self.ga_params, "seed": int(self.seed), "economics": self.economics,
            "hv_reference_efficiency": self.hv_reference_efficiency,
        }

    @property
    def hash(self):
        return config_hash(self.to_dict())

    def with_(self, **changes):
        data = {k: getattr(self, k) for k in self.__dataclass_fields__}
        data.update(changes)
        return OptimizationConfig(**data)

    def load_base(self):
        design, ratings = load_machine(resolve(self.base_machine, "machine", self.base_dir))
        if self.variant is not None:
            design = variant_design(design, self.variant)
        return design, ratings

    def load_economics(self):
        return load_economics(resolve(self.economics, "params", self.base_dir))

    @property
    def objective_weights(self):
        w = self.constraints.objective_weights()
        return (w.get("op1_efficiency", 1), w.get("op2_efficiency", 1))


def optimization_config_from_dict(data, base_dir=None):
    data = dict(data or {})
    known = {"base_machine", "variant", "bounds", "constraints", "operating_points", "evaluation",
             "ga", "seed", "economics", "hv_reference_efficiency"}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown optimisation settings {sorted(unknown)}")
    kw = {"base_dir": None if base_dir is None else str(base_dir)}
    for key in ("base_machine", "variant", "seed", "economics", "hv_reference_efficiency"):
        if key in data:
            kw[key] = data[key]
    if "bounds" in data:
        kw["bounds"] = VariableBounds(**{k: tuple(v) for k, v in data["bounds"].items()})
    if "constraints" in data:
        kw["constraints"] = ConstraintSpec.from_list(data["constraints"])
    if "operating_points" in data:
        kw["operating_points"] = tuple(OperatingPoint(**p) for p in data["operating_points"])
    ev = dict(data.get("evaluation") or {})
    final = ev.pop("final_grid", None)
    if final is not None:
        kw["final_grid"] = tuple(final)
    if ev:
        try:
            kw["settings"] = EvaluationSettings(grid=tuple(ev.pop("grid", OPTIMIZATION_GRID)), **ev)
        except TypeError as exc:
            raise ConfigError(f"bad evaluation block: {exc}") from None
    if "ga" in data:
        kw["ga"] = dict(data["ga"])
    try:
        return OptimizationConfig(**kw)
    except TypeError as exc:
        raise ConfigError(f"bad optimisation config: {exc}") from None


def load_optimization_config(path):
    with open(path, encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    return optimization_config_from_dict(data, Path(path).parent)


# -- running -------------------------------------------------------------------

def _evaluate_job(args):
    variables, base, ratings, constraints, ops, settings = args
    return evaluate_candidate(variables, base, ratings, constraints, ops, settings)


class _Problem:
    """GA objective: (-op1 eff, -op2 eff) and penalty, memoised per design vector."""

    def __init__(self, cfg, base, ratings, executor=None):
        self.cfg, self.base, self.ratings = cfg, base, ratings
        self.executor = executor
        self.cache = {}

    def evaluate(self, variables_list, settings):
        jobs = [(v, self.base, self.ratings, self.cfg.constraints, self.cfg.operating_points, settings)
                for v in variables_list]
        if self.executor is None:
            return [_evaluate_job(j) for j in jobs]
        return list(self.executor.map(_evaluate_job, jobs))

    def __call__(self, X):
        keys = [tuple(np.asarray(x, dtype=float).tolist()) for x in X]
        todo = list(dict.fromkeys(k for k in keys if k not in self.cache))
        if todo:
            found = self.evaluate([self.cfg.bounds.decode(k) for k in todo], self.cfg.settings)
            self.cache.update(zip(todo, found))
        cands = [self.cache[k] for k in keys]
        F = np.array([[-c.objectives[0], -c.objectives[1]] for c in cands])
        penalty = np.array([c.penalty for c in cands])
        return F, penalty


@dataclass
class OptimizationResult:
    config: OptimizationConfig
    archive: list  # coarse-grid nondominated feasible candidates
    front: list  # fine-grid re-evaluated Pareto front
    selected: object
    selected_design: object
    ratings: object
    hv_history: list
    n_evaluations: int
    all_infeasible: bool
    economics: Economics

    def terms(self, candidate):
        return tbv_terms(candidate, self.economics, self.config.objective_weights)


def run_optimization(cfg, threads=1, callback=None):
    """GA over the stator variables, then fine re-evaluation of the archive.

    Results do not depend on ``threads``: evaluations are pure and the GA
    consumes them in population order.
    """
    base, ratings = cfg.load_base()
    econ = cfg.load_economics()
    weights = cfg.objective_weights
    ga = cfg.ga_params
    ref = -cfg.hv_reference_efficiency
    executor = ProcessPoolExecutor(max_workers=threads) if threads and threads > 1 else None
    try:
        problem = _Problem(cfg, base, ratings, executor)
        opt = NSGA2(cfg.bounds.lower, cfg.bounds.upper, seed=cfg.seed, ref_point=(ref, ref),
                    callback=callback, **ga)
        opt.fit(problem)
        archive = [problem.cache[tuple(x.tolist())] for x in opt.archive_X_]
        archive = [c.with_(tbv=tbv_terms(c, econ, weights)["tbv"]) for c in archive]
        fine = []
        if archive:
            settings = cfg.settings.with_grid(cfg.final_grid)
            fine = problem.evaluate([c.variables for c in archive], settings)
    finally:
        if executor is not None:
            executor.shutdown()
    fine = [c.with_(tbv=tbv_terms(c, econ, weights)["tbv"]) for c in fine if c.feasible]
    front = pareto_front(fine) if fine else []
    selected = select_best(front, econ, weights) if front else None
    design = selected.variables.apply(base) if selected is not None else None
    return OptimizationResult(cfg, archive, front, selected, design, ratings, list(opt.hv_history_),
                              int(opt.n_evaluations_), bool(opt.all_infeasible_), econ)


def _write_rows(path, rows):
    if not rows:
        Path(path).write_text("", encoding="utf-8")
        return
    keys = list(rows[0])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=keys, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(r[k]) for k in keys})


def _fmt(v):
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return v


def write_optimization_outputs(result, out_dir):
    """archive.csv, front.csv, history.csv and the selected machine file."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_rows(out / "archive.csv", [c.row() for c in result.archive])
    rows = []
    for c in result.front:
        r = {**c.row(), **{f"tbv_{k}": v for k, v in result.terms(c).items() if k != "tbv"}}
        r["selected"] = int(c is result.selected)
        rows.append(r)
    _write_rows(out / "front.csv", rows)
    _write_rows(out / "history.csv", [{"generation": g, "hypervolume": v}
                                      for g, v in enumerate(result.hv_history)])
    files = ["archive.csv", "front.csv", "history.csv"]
    if result.selected_design is not None:
        save_machine(result.selected_design.with_(name=f"{result.selected_design.name}_opt"),
                     result.ratings, out / "selected_machine.yaml")
        files.append("selected_machine.yaml")
    return [out / f for f in files]


__all__ = ["OptimizationConfig", "OptimizationResult", "load_optimization_config",
           "optimization_config_from_dict", "run_optimization", "write_optimization_outputs"]
