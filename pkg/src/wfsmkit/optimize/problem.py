"""Design variables, weighted constraints and single-candidate evaluation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from ..control import RPM, DriveModel, SolverConfig, max_torque_many, solve_many
from ..exceptions import ConfigError, GeometryError, SolverDivergence
from ..losses import LossParams
from ..magnetics.design import ToothTip
from ..magnetics.fluxmap import DEFAULT_GRID, MODULATION_LIMIT, OPTIMIZATION_GRID, build_flux_map
from ..materials import default_library

VARIABLE_NAMES = ("slot_width", "slot_depth", "stator_yoke_width")
EFFICIENCY_FLOOR = 1e-6  # objective value when an operating point is unreachable

# Stator/rotor grades of the benchmarked variants.
VARIANTS = {
    "M0": ("NO25", "NO25"),
    "M1": ("SMC_A", "NO25"),
    "M2": ("SMC_B", "NO25"),
    "M3": ("SMC_C", "NO25"),
    "M4": ("SMC_A", "NO35"),
    "M5": ("SMC_B", "NO35"),
    "M6": ("SMC_C", "NO35"),
}


def variant_design(base, variant, library=None):
    """Swap core materials of ``base`` to a named variant.

    SMC stators get open slots since compacted cores cannot carry tooth tips.
    """
    try:
        stator, rotor = VARIANTS[variant]
    except KeyError:
        raise ConfigError(f"unknown variant {variant!r}; expected one of {sorted(VARIANTS)}") from None
    library = library if library is not None else default_library()
    s, r = library[stator], library[rotor]
    tip = ToothTip.OPEN_SLOT if s.kind.value == "smc" else base.tooth_tip
    return base.with_(name=f"WFSM_{variant}", stator_material=s, rotor_material=r, tooth_tip=tip)


@dataclass(frozen=True)
class DesignVariables:
    slot_width: float
    slot_depth: float
    stator_yoke_width: float
    turns_per_phase: int | None = None

    def as_tuple(self):
        base = (self.slot_width, self.slot_depth, self.stator_yoke_width)
        return base if self.turns_per_phase is None else base + (self.turns_per_phase,)

    def apply(self, design):
        changes = dict(slot_width=self.slot_width, slot_depth=self.slot_depth,
                       stator_yoke_width=self.stator_yoke_width)
        if self.turns_per_phase is not None:
            changes["turns_per_phase"] = int(self.turns_per_phase)
        return design.with_(**changes)

    @classmethod
    def from_design(cls, design, with_turns=False):
        return cls(design.slot_width, design.slot_depth, design.stator_yoke_width,
                   design.turns_per_phase if with_turns else None)


@dataclass(frozen=True)
class VariableBounds:
    """Box bounds in metres; ``turns_per_phase`` enables the integer variable."""

    slot_width: tuple = (0.0035, 0.0060)
    slot_depth: tuple = (0.013, 0.019)
    stator_yoke_width: tuple = (0.011, 0.014)
    turns_per_phase: tuple | None = None

    def __post_init__(self):
        for name in self.names:
            lo, hi = getattr(self, name)
            if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
                raise ConfigError(f"bounds for {name} need lower < upper")

    @property
    def names(self):
        return VARIABLE_NAMES + (("turns_per_phase",) if self.turns_per_phase is not None else ())

    @property
    def lower(self):
        return np.array([getattr(self, n)[0] for n in self.names], dtype=float)

    @property
    def upper(self):
        return np.array([getattr(self, n)[1] for n in self.names], dtype=float)

    def decode(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(x < self.lower - 1e-12) or np.any(x > self.upper + 1e-12):
            raise ConfigError(f"design vector {x.tolist()} outside bounds")
        turns = int(round(x[3])) if self.turns_per_phase is not None else None
        return DesignVariables(float(x[0]), float(x[1]), float(x[2]), turns)

    def contains(self, variables):
        x = np.array(variables.as_tuple(), dtype=float)
        return x.size == self.lower.size and bool(np.all((x >= self.lower) & (x <= self.upper)))


# -- constraints ---------------------------------------------------------------

class Kind(str, Enum):
    LOWER_BOUND = "lower_bound"
    UPPER_BOUND = "upper_bound"
    MAXIMIZE = "maximize"


@dataclass(frozen=True)
class Constraint:
    name: str
    kind: Kind
    threshold: float | None
    weight: int

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        if isinstance(self.weight, bool) or int(self.weight) != self.weight or not 1 <= self.weight <= 10:
            raise ConfigError(f"constraint {self.name}: weight must be an integer in [1, 10]")
        object.__setattr__(self, "weight", int(self.weight))
        if self.kind is not Kind.MAXIMIZE and not (self.threshold is not None and self.threshold > 0):
            raise ConfigError(f"constraint {self.name}: bound constraints need a positive threshold")

    def violation(self, value):
        """Relative violation (0 when satisfied); NaN counts as infinitely violated."""
        if self.kind is Kind.MAXIMIZE:
            return 0.0
        if value is None or not np.isfinite(value):
            return math.inf
        if self.kind is Kind.LOWER_BOUND:
            return max(0.0, (self.threshold - value) / self.threshold)
        return max(0.0, (value - self.threshold) / self.threshold)


@dataclass(frozen=True)
class ConstraintSpec:
    items: tuple

    def __post_init__(self):
        object.__setattr__(self, "items", tuple(self.items))
        names = [c.name for c in self.items]
        if len(set(names)) != len(names):
            raise ConfigError("constraint names must be unique")

    @classmethod
    def benchmark(cls):
        """Benchmark objectives and constraints with their 1-10 weights."""
        return cls((
            Constraint("op1_torque", Kind.LOWER_BOUND, 145.0, 6),
            Constraint("op1_efficiency", Kind.MAXIMIZE, None, 8),
            Constraint("op2_torque", Kind.LOWER_BOUND, 40.0, 6),
            Constraint("op2_efficiency", Kind.MAXIMIZE, None, 7),
            Constraint("peak_torque", Kind.LOWER_BOUND, 550.0, 10),
            Constraint("peak_power", Kind.LOWER_BOUND, 200e3, 8),
            Constraint("dc_voltage", Kind.UPPER_BOUND, 625.0, 8),
        ))

    @classmethod
    def from_list(cls, rows):
        try:
            return cls(tuple(Constraint(r["name"], r["kind"], r.get("threshold"), r["weight"]) for r in rows))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad constraint list: {exc}") from None

    def to_list(self):
        return [{"name": c.name, "kind": c.kind.value, "threshold": c.threshold, "weight": c.weight}
                for c in self.items]

    def __getitem__(self, name):
        for c in self.items:
            if c.name == name:
                return c
        raise KeyError(name)

    @property
    def bounds(self):
        return tuple(c for c in self.items if c.kind is not Kind.MAXIMIZE)

    @property
    def objectives(self):
        return tuple(c for c in self.items if c.kind is Kind.MAXIMIZE)

    def penalty(self, values):
        """Sum of weight times relative violation over the bound constraints."""
        total = 0.0
        for c in self.bounds:
            v = c.violation(values.get(c.name))
            if v > 0:
                total += c.weight * v
        return total

    def objective_weights(self):
        return {c.name: c.weight for c in self.objectives}


# -- evaluation ----------------------------------------------------------------

@dataclass(frozen=True)
class OperatingPoint:
    name: str
    torque: float
    speed_rpm: float

    def __post_init__(self):
        if not (self.torque > 0 and self.speed_rpm > 0):
            raise ConfigError(f"operating point {self.name}: torque and speed must be > 0")


DEFAULT_OPERATING_POINTS = (OperatingPoint("op1", 145.0, 3000.0), OperatingPoint("op2", 40.0, 6000.0))


@dataclass(frozen=True)
class EvaluationSettings:
    """How a candidate is scored.

    Operating points are solved with the absolute voltage ceiling; the
    ``dc_voltage`` constraint then reports the DC voltage they actually need.
    Torque capability and peak power use the rated voltage.
    """

    grid: tuple = OPTIMIZATION_GRID
    v_dc_ceiling: float = 900.0
    v_dc_rated: float = 625.0
    low_speed_rpm: float = 1000.0
    peak_power_speed_rpm: float = 10000.0
    solver: SolverConfig = field(default_factory=SolverConfig)
    loss_params: LossParams = field(default_factory=LossParams)

    def with_grid(self, grid):
        return EvaluationSettings(tuple(grid), self.v_dc_ceiling, self.v_dc_rated, self.low_speed_rpm,
                                  self.peak_power_speed_rpm, self.solver, self.loss_params)


@dataclass(frozen=True)
class EvaluatedCandidate:
    variables: DesignVariables
    objectives: tuple  # (op1 efficiency, op2 efficiency)
    constraint_values: dict
    penalty: float
    feasible: bool
    peak_torque: float
    peak_power: float
    material_cost: float
    tbv: float = math.nan
    failed: bool = False
    message: str = ""
    stator_grade: str = ""
    rotor_grade: str = ""
    stator_mass: float = 0.0
    rotor_mass: float = 0.0
    magnet_mass: float = 0.0
    stator_kind: str = ""
    wltp_efficiency: float = math.nan

    def with_(self, **changes):
        data = {k: getattr(self, k) for k in self.__dataclass_fields__}
        data.update(changes)
        return EvaluatedCandidate(**data)

    def row(self):
        out = {n: v for n, v in zip(VARIABLE_NAMES + ("turns_per_phase",), self.variables.as_tuple())}
        out.update(op1_efficiency=self.objectives[0], op2_efficiency=self.objectives[1])
        for k, v in self.constraint_values.items():
            out.setdefault(k, v)
        out.update(penalty=self.penalty, feasible=int(self.feasible), failed=int(self.failed),
                   material_cost=self.material_cost, tbv=self.tbv)
        return out


def material_cost(design):
    """Core material bill from gross masses and grade prices."""
    return (design.gross_stator_mass * design.stator_material.cost
            + design.gross_rotor_mass * design.rotor_material.cost)


def _failed(variables, design, message, constraints):
    values = {c.name: math.nan for c in constraints.items}
    return EvaluatedCandidate(
        variables=variables, objectives=(EFFICIENCY_FLOOR, EFFICIENCY_FLOOR), constraint_values=values,
        penalty=math.inf, feasible=False, peak_torque=math.nan, peak_power=math.nan,
        material_cost=material_cost(design) if design is not None else math.nan,
        failed=True, message=message,
        stator_grade=design.stator_material.name if design is not None else "",
        rotor_grade=design.rotor_material.name if design is not None else "",
    )


def evaluate_candidate(variables, base_design, ratings, constraints=None, op_points=DEFAULT_OPERATING_POINTS,
                       settings=None):
    """Score one stator geometry against the weighted constraint set.

    Geometry violations and flux-map divergence give a failed candidate with
    infinite penalty rather than an exception.
    """
    constraints = constraints or ConstraintSpec.benchmark()
    settings = settings or EvaluationSettings()
    try:
        design = variables.apply(base_design)
    except GeometryError as exc:
        return _failed(variables, None, f"geometry: {exc}", constraints)
    try:
        fmap = build_flux_map(design, ratings, settings.grid)
    except SolverDivergence as exc:
        return _failed(variables, design, f"flux map: {exc}", constraints)
    model = DriveModel(design, fmap, ratings, settings.loss_params)

    op1, op2 = op_points
    speeds = [settings.low_speed_rpm, settings.peak_power_speed_rpm, op1.speed_rpm, op2.speed_rpm]
    t_cap = max_torque_many(model, speeds, settings.v_dc_rated, settings.solver)[0]
    peak_torque = float(t_cap[0])
    peak_power = float(t_cap[1] * settings.peak_power_speed_rpm * RPM)

    sols = solve_many(model, [op1.torque, op2.torque], [op1.speed_rpm, op2.speed_rpm],
                      settings.v_dc_ceiling, "mtpl", settings.solver)
    effs, v_need = [], []
    for sol in sols:
        if sol is None:
            effs.append(EFFICIENCY_FLOOR)
            v_need.append(settings.v_dc_ceiling)
        else:
            effs.append(float(sol.efficiency))
            v_ll = math.sqrt(3.0) * math.hypot(sol.v_d, sol.v_q)
            v_need.append(v_ll / MODULATION_LIMIT)
    values = {
        "op1_torque": float(t_cap[2]),
        "op1_efficiency": effs[0],
        "op2_torque": float(t_cap[3]),
        "op2_efficiency": effs[1],
        "peak_torque": peak_torque,
        "peak_power": peak_power,
        "dc_voltage": max(v_need),
    }
    penalty = constraints.penalty(values)
    return EvaluatedCandidate(
        variables=variables, objectives=(effs[0], effs[1]), constraint_values=values, penalty=penalty,
        feasible=penalty == 0.0, peak_torque=peak_torque, peak_power=peak_power,
        material_cost=material_cost(design),
        stator_grade=design.stator_material.name, rotor_grade=design.rotor_material.name,
        stator_mass=design.gross_stator_mass, rotor_mass=design.gross_rotor_mass,
        magnet_mass=design.magnet_mass, stator_kind=design.stator_material.kind.value,
    )


def candidate_from_values(values, constraints=None, variables=None, **extra):
    """Build a candidate from already-known constraint values (tables, tests)."""
    constraints = constraints or ConstraintSpec.benchmark()
    penalty = constraints.penalty(values)
    return EvaluatedCandidate(
        variables=variables or DesignVariables(math.nan, math.nan, math.nan),
        objectives=(values.get("op1_efficiency", math.nan), values.get("op2_efficiency", math.nan)),
        constraint_values=dict(values), penalty=penalty, feasible=penalty == 0.0,
        peak_torque=values.get("peak_torque", math.nan), peak_power=values.get("peak_power", math.nan),
        material_cost=extra.pop("material_cost", 0.0), **extra,
    )



FULL_GRID = DEFAULT_GRID
