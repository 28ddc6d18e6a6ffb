"""Pareto extraction, business-value scoring and final candidate choice."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields
from functools import lru_cache

import numpy as np
import yaml

from ..exceptions import ConfigError
from ..materials import default_library


@lru_cache(maxsize=1)
def _library():
    return default_library()


def _objective_array(candidates):
    if isinstance(candidates, np.ndarray):
        return np.asarray(candidates, dtype=float)
    return np.array([c.objectives if hasattr(c, "objectives") else c for c in candidates], dtype=float)


def pareto_mask(points):
    """Boolean mask of rows not dominated when maximising every column.

    Rows with identical objectives dominate each other nowhere, so exact ties
    on the front are all kept.
    """
    P = np.asarray(points, dtype=float)
    if P.ndim != 2 or len(P) == 0:
        raise ValueError("pareto_mask needs a nonempty 2-D array")
    if P.shape[1] != 2:
        ge = np.all(P[None, :, :] >= P[:, None, :], axis=-1)
        gt = np.any(P[None, :, :] > P[:, None, :], axis=-1)
        return ~np.any(ge & gt, axis=1)
    # Sweep in decreasing first objective; a row survives when its second
    # objective beats everything with a strictly larger first objective and
    # is the best within its own first-objective group.
    order = np.lexsort((-P[:, 1], -P[:, 0]))
    mask = np.zeros(len(P), dtype=bool)
    best_prev = -math.inf
    i = 0
    while i < len(order):
        j = i
        f1 = P[order[i], 0]
        while j < len(order) and P[order[j], 0] == f1:
            j += 1
        group = order[i:j]
        top = P[group[0], 1]
        if top > best_prev:
            mask[group[P[group, 1] == top]] = True
        best_prev = max(best_prev, top)
        i = j
    return mask


def pareto_front(candidates):
    """Nondominated subset (both objectives maximised), input order preserved."""
    if len(candidates) == 0:
        raise ValueError("pareto_front needs at least one candidate")
    mask = pareto_mask(_objective_array(candidates))
    if isinstance(candidates, np.ndarray):
        return candidates[mask]
    return [c for c, keep in zip(candidates, mask) if keep]


# -- economics -----------------------------------------------------------------

@dataclass(frozen=True)
class Economics:
    """Coefficients of the total-business-value score (currency units)."""

    value_per_pp_wltp: float
    eta_ref: float
    value_per_nm: float
    torque_ref: float
    magnet_cost_per_kg: float
    production_adder: dict  # keyed by stator material kind
    material_costs: dict = field(default_factory=dict)  # per-grade overrides, currency/kg

    def __post_init__(self):
        if not 0 < self.eta_ref < 1:
            raise ConfigError("eta_ref must be in (0, 1)")
        for name in ("value_per_pp_wltp", "value_per_nm", "magnet_cost_per_kg", "torque_ref"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")

    def grade_cost(self, grade):
        if grade in self.material_costs:
            return float(self.material_costs[grade])
        return float(_library()[grade].cost)

    def adder(self, kind):
        try:
            return float(self.production_adder[kind])
        except KeyError:
            raise ConfigError(f"no production adder for stator kind {kind!r}") from None

    def scaled(self, c):
        """All currency coefficients times ``c`` (grade prices made explicit)."""
        if not c > 0:
            raise ValueError("scale must be positive")
        costs = {g: c * self.grade_cost(g) for g in _library().grades}
        costs.update({g: c * float(v) for g, v in self.material_costs.items()})
        return Economics(
            value_per_pp_wltp=c * self.value_per_pp_wltp, eta_ref=self.eta_ref,
            value_per_nm=c * self.value_per_nm, torque_ref=self.torque_ref,
            magnet_cost_per_kg=c * self.magnet_cost_per_kg,
            production_adder={k: c * float(v) for k, v in self.production_adder.items()},
            material_costs=costs,
        )


def load_economics(path):
    with open(path, encoding="utf-8") as fh:
        data = yaml.safe_load(fh) or {}
    return economics_from_dict(data, path)


def economics_from_dict(data, source="economics"):
    required = [f.name for f in fields(Economics) if f.name != "material_costs"]
    missing = [k for k in required if k not in data]
    if missing:
        raise ConfigError(f"{source}: missing economics fields {missing}")
    unknown = set(data) - {f.name for f in fields(Economics)}
    if unknown:
        raise ConfigError(f"{source}: unknown economics fields {sorted(unknown)}")
    return Economics(**data)


def dump_economics(econ, path):
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(asdict(econ), fh, sort_keys=False)


def cycle_efficiency_estimate(candidate, weights=(8, 7)):
    """Cycle efficiency used for scoring.

    A measured WLTP efficiency wins; otherwise the operating-point
    efficiencies are blended with the objective weights.
    """
    if np.isfinite(candidate.wltp_efficiency):
        return float(candidate.wltp_efficiency)
    w1, w2 = weights
    e1, e2 = candidate.objectives
    return (w1 * e1 + w2 * e2) / (w1 + w2)


def tbv_terms(candidate, econ, weights=(8, 7)):
    """Additive breakdown of the business-value score."""
    eta = cycle_efficiency_estimate(candidate, weights)
    efficiency_value = econ.value_per_pp_wltp * (eta - econ.eta_ref) * 100.0
    performance_value = econ.value_per_nm * max(0.0, candidate.peak_torque - econ.torque_ref)
    material = (candidate.stator_mass * econ.grade_cost(candidate.stator_grade)
                + candidate.rotor_mass * econ.grade_cost(candidate.rotor_grade))
    magnet = candidate.magnet_mass * econ.magnet_cost_per_kg
    adder = econ.adder(candidate.stator_kind)
    total = efficiency_value + performance_value - material - magnet - adder
    return {
        "cycle_efficiency": eta, "efficiency_value": efficiency_value,
        "performance_value": performance_value, "material_cost": material,
        "magnet_cost": magnet, "production_adder": adder, "tbv": total,
    }


def tbv_score(candidate, econ, weights=(8, 7)):
    return tbv_terms(candidate, econ, weights)["tbv"]


def select_best(front, econ, weights=(8, 7)):
    """Highest score; ties go to higher OP2 efficiency, then smaller variables."""
    if len(front) == 0:
        raise ValueError("select_best needs a nonempty front")
    scored = [(tbv_score(c, econ, weights), c) for c in front]

    def key(item):
        score, c = item
        return (-score, -c.objectives[1], tuple(np.nan_to_num(c.variables.as_tuple(), nan=math.inf)))

    return min(scored, key=key)[1]
