"""Vehicle road load, drive cycles, EDU composition and cycle energy accounting."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np
import yaml

from .control import RPM, DriveModel, max_torque_many, solve_many
from .exceptions import ConfigError, CycleError, DomainError, ValidationError
from .losses import COMPONENTS, GearParams, gearbox_loss

GRAVITY = 9.81
KMH = 1.0 / 3.6


@dataclass(frozen=True)
class VehicleParams:
    mass: float = 1900.0
    drag_area_cda: float = 0.62
    rolling_coeff: float = 0.009
    wheel_radius: float = 0.35
    gear_ratio: float = 7.0
    driveline: str = "rwd"
    aux_power: float = 300.0
    air_density: float = 1.2
    regen_fraction: float = 0.85

    def __post_init__(self):
        for name in ("mass", "drag_area_cda", "rolling_coeff", "wheel_radius", "gear_ratio", "air_density"):
            if not getattr(self, name) > 0:
                raise ValidationError("vehicle_positive", f"{name} must be > 0")
        if self.aux_power < 0:
            raise ValidationError("vehicle_positive", "aux_power must be >= 0")
        if not 0 <= self.regen_fraction <= 1:
            raise ValidationError("regen_fraction", "regen_fraction must be in [0, 1]")
        if self.driveline != "rwd":
            raise ValidationError("driveline", f"unsupported driveline {self.driveline!r}")

    def with_(self, **changes):
        return replace(self, **changes)

    def road_force(self, speed, accel):
        """Tractive force [N] for speed [m/s] and acceleration [m/s^2]."""
        speed = np.asarray(speed, dtype=float)
        rolling = np.where(speed > 0, self.mass * GRAVITY * self.rolling_coeff, 0.0)
        aero = 0.5 * self.air_density * self.drag_area_cda * speed**2
        return self.mass * np.asarray(accel, dtype=float) + aero + rolling


def load_vehicle(path):
    with open(path, encoding="utf-8") as fh:
        data = yaml.safe_load(fh) or {}
    known = {f.name for f in fields(VehicleParams)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"{path}: unknown vehicle fields {sorted(unknown)}")
    return VehicleParams(**data)


# -- drive cycles --------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DriveCycle:
    """Ordered (time [s], speed [m/s]) samples."""

    time: np.ndarray
    speed: np.ndarray
    name: str = "cycle"

    def __post_init__(self):
        t = np.array(self.time, dtype=float)
        v = np.array(self.speed, dtype=float)
        if t.ndim != 1 or t.shape != v.shape or t.size < 2:
            raise ValidationError("cycle_shape", "cycle needs matching 1-D time and speed with >= 2 samples")
        if np.any(np.diff(t) <= 0):
            k = int(np.argmax(np.diff(t) <= 0))
            raise ValidationError("cycle_time_increasing", f"time not strictly increasing at sample {k + 1}")
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise ValidationError("cycle_speed_nonnegative", "speeds must be finite and >= 0")
        t.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "time", t)
        object.__setattr__(self, "speed", v)

    @property
    def duration(self):
        return float(self.time[-1] - self.time[0])

    @property
    def distance(self):
        return float(np.sum(0.5 * (self.speed[1:] + self.speed[:-1]) * np.diff(self.time)))

    @classmethod
    def constant(cls, v_kmh, duration=60.0, dt=1.0, name=None):
        t = np.arange(0.0, duration + 0.5 * dt, dt)
        return cls(t, np.full(t.size, v_kmh * KMH), name or f"cruise_{v_kmh:g}kmh")

    @classmethod
    def from_kmh(cls, time, speed_kmh, name="cycle"):
        return cls(np.asarray(time, dtype=float), np.asarray(speed_kmh, dtype=float) * KMH, name)

    @classmethod
    def from_csv(cls, path, name=None):
        """Read a ``time_s,speed_kmh`` CSV."""
        try:
            with open(path, encoding="utf-8", newline="") as fh:
                reader = csv.reader(fh)
                header = [h.strip() for h in next(reader)]
                if header != ["time_s", "speed_kmh"]:
                    raise ConfigError(f"{path}: expected header 'time_s,speed_kmh', got {','.join(header)!r}")
                rows = []
                for lineno, row in enumerate(reader, start=2):
                    if not row:
                        continue
                    try:
                        rows.append((float(row[0]), float(row[1])))
                    except (ValueError, IndexError):
                        raise ConfigError(f"{path}:{lineno}: bad row {row!r}") from None
        except StopIteration:
            raise ConfigError(f"{path}: empty cycle file") from None
        data = np.array(rows, dtype=float).reshape(-1, 2)
        return cls.from_kmh(data[:, 0], data[:, 1], name or str(path).rsplit("/", 1)[-1].rsplit(".", 1)[0])

    def to_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("time_s,speed_kmh\n")
            for t, v in zip(self.time, self.speed / KMH):
                fh.write(f"{t:.6g},{v:.6g}\n")


def synthetic_cycle():
    """Small urban + highway cycle shipped with the package (not WLTP data)."""
    from importlib import resources

    path = resources.files("wfsmkit").joinpath("data/cycles/synthetic_urban_highway.csv")
    with resources.as_file(path) as p:
        return DriveCycle.from_csv(p, name="synthetic_urban_highway")


def fetch_wltp_class3(path):
    """Write the WLTC class 3b trace to ``path`` as ``time_s,speed_kmh``.

    Uses the third-party ``wltp`` package, which carries the public
    regulation tables; install it separately.
    """
    try:
        from wltp.cycles import class3
    except ImportError as exc:
        raise ConfigError("the 'wltp' package is needed to fetch the WLTC class 3 trace "
                          "(pip install wltp)") from exc
    speed = np.asarray(class3.class_data_b()["cycle"], dtype=float)
    cycle = DriveCycle.from_kmh(np.arange(speed.size, dtype=float), speed, "wltc_class3b")
    cycle.to_csv(path)
    return cycle


# -- demand --------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DemandTrace:
    """Per-interval demand: interval ``k`` spans ``time[k]`` to ``time[k] + dt[k]``."""

    time: np.ndarray
    dt: np.ndarray
    speed: np.ndarray  # mean vehicle speed, m/s
    accel: np.ndarray
    force: np.ndarray
    wheel_torque: np.ndarray
    motor_torque: np.ndarray
    motor_speed: np.ndarray  # rad/s
    braking: np.ndarray
    gear_ratio: float
    wheel_radius: float
    aux_power: float = 0.0

    @property
    def motor_speed_rpm(self):
        return self.motor_speed / RPM

    @property
    def wheel_power(self):
        return self.wheel_torque * self.speed / self.wheel_radius

    def __len__(self):
        return self.time.size


def _gear_input_torque(p_wheel, omega_in, gear):
    """Input torque whose gear losses bring the through-power to ``p_wheel``."""
    s = gear.stages
    slip = s * (1.0 - gear.stage_efficiency)
    num = p_wheel + s * gear.drag_coeff * omega_in
    denom = omega_in * np.where(num >= 0, 1.0 - slip, 1.0 + slip)
    return np.divide(num, denom, out=np.zeros_like(num), where=omega_in > 0)


def demand_trace(cycle, vehicle, gear=None):
    """Motor torque and speed demanded by ``cycle``.

    With ``gear`` the motor also supplies the gearbox losses; without it the
    reduction is lossless.  Braking intervals pass only ``regen_fraction`` of
    the wheel torque to the motor, the rest goes to the friction brakes.
    """
    if gear is not None and not math.isclose(gear.ratio, vehicle.gear_ratio, rel_tol=1e-12):
        raise ConfigError(f"gear ratio {gear.ratio} does not match vehicle gear_ratio {vehicle.gear_ratio}")
    t, v = cycle.time, cycle.speed
    dt = np.diff(t)
    v_mean = 0.5 * (v[1:] + v[:-1])
    accel = np.diff(v) / dt
    force = vehicle.road_force(v_mean, accel)
    moving = v_mean > 0
    force = np.where(moving, force, 0.0)
    wheel_torque = force * vehicle.wheel_radius
    braking = wheel_torque < 0
    shaft_torque = np.where(braking, vehicle.regen_fraction * wheel_torque, wheel_torque)
    motor_speed = np.where(moving, v_mean * vehicle.gear_ratio / vehicle.wheel_radius, 0.0)
    if gear is None:
        motor_torque = shaft_torque / vehicle.gear_ratio
    else:
        wheel_speed = np.where(moving, v_mean / vehicle.wheel_radius, 0.0)
        motor_torque = _gear_input_torque(shaft_torque * wheel_speed, motor_speed, gear)
    motor_torque = np.where(moving, motor_torque, 0.0)
    return DemandTrace(t[:-1].copy(), dt, v_mean, accel, force, wheel_torque, motor_torque, motor_speed,
                       braking, vehicle.gear_ratio, vehicle.wheel_radius, vehicle.aux_power)


# -- EDU + cycle ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class EDU:
    """Electric drive unit: machine + inverter (``model``) and gearbox."""

    name: str
    model: DriveModel
    gear: GearParams | None = None
    v_dc: float = 800.0
    strategy: str = "mtpl"
    config: object = None


@dataclass(frozen=True, eq=False)
class CycleResult:
    """Per-step arrays (power in W, energy in J) and cycle totals.

    ``output_power`` is the EDU output shaft (wheel side), ``input_power``
    the DC-side electrical power; ``input = output + sum(losses)`` holds per
    step by construction.
    """

    time: np.ndarray
    dt: np.ndarray
    torque_request: np.ndarray
    motor_torque: np.ndarray
    motor_speed: np.ndarray  # rad/s
    i_f: np.ndarray
    losses: dict
    shaft_power: np.ndarray
    output_power: np.ndarray
    input_power: np.ndarray
    clipped: np.ndarray
    clipped_energy: float
    aux_power: float
    edu_name: str = "edu"
    meta: dict = field(default_factory=dict)

    @property
    def loss_power(self):
        total = self.losses[COMPONENTS[0]]
        for name in COMPONENTS[1:]:
            total = total + self.losses[name]
        return total

    @property
    def battery_power(self):
        return self.input_power + self.aux_power * (self.dt > 0)

    def energy(self, power):
        return float(np.sum(power * self.dt))

    @property
    def loss_energy(self):
        return {name: self.energy(self.losses[name]) for name in COMPONENTS}

    @property
    def motoring(self):
        return self.output_power > 0

    @property
    def regenerating(self):
        return self.output_power < 0

    @property
    def traction_energy(self):
        return self.energy(np.where(self.motoring, self.output_power, 0.0))

    @property
    def motoring_input_energy(self):
        return self.energy(np.where(self.motoring, self.input_power, 0.0))

    @property
    def regen_mechanical_energy(self):
        return self.energy(np.where(self.regenerating, -self.output_power, 0.0))

    @property
    def recovered_energy(self):
        """Electrical energy returned to the battery during regeneration."""
        return self.energy(np.where(self.regenerating, -self.input_power, 0.0))

    @property
    def processed_energy(self):
        """Mechanical energy handled by the motor shaft, both directions."""
        return self.energy(np.abs(self.shaft_power))

    @property
    def edu_efficiency(self):
        """Energy out over energy in, counting both power-flow directions.

        Motoring contributes shaft output and battery input; regeneration
        contributes battery recovery (out) and shaft input (in).
        """
        e_in = self.motoring_input_energy + self.regen_mechanical_energy
        if e_in <= 0:
            return float("nan")
        return (self.traction_energy + self.recovered_energy) / e_in

    @property
    def net_energy_ratio(self):
        """Traction energy over net battery energy (regen credited to the input)."""
        net = self.motoring_input_energy - self.recovered_energy
        return self.traction_energy / net if net > 0 else float("nan")

    def summary(self):
        return {
            "edu": self.edu_name,
            "steps": int(self.time.size),
            "edu_efficiency": self.edu_efficiency,
            "net_energy_ratio": self.net_energy_ratio,
            "traction_energy_J": self.traction_energy,
            "motoring_input_energy_J": self.motoring_input_energy,
            "regen_mechanical_energy_J": self.regen_mechanical_energy,
            "recovered_energy_J": self.recovered_energy,
            "loss_energy_J": self.loss_energy,
            "clipped_steps": int(np.sum(self.clipped)),
            "clipped_energy_J": self.clipped_energy,
            "aux_energy_J": self.energy(np.full(self.dt.shape, self.aux_power)),
            **self.meta,
        }

    def save_summary(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def save_trace(self, path):
        cols = ["time_s", "dt_s", "torque_request_Nm", "motor_torque_Nm", "motor_speed_rpm", "i_f_A",
                "shaft_W", "output_W", "input_W", *[f"loss_{c}_W" for c in COMPONENTS], "clipped"]
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(",".join(cols) + "\n")
            for k in range(self.time.size):
                vals = [self.time[k], self.dt[k], self.torque_request[k], self.motor_torque[k],
                        self.motor_speed[k] / RPM, self.i_f[k], self.shaft_power[k], self.output_power[k],
                        self.input_power[k], *[self.losses[c][k] for c in COMPONENTS]]
                fh.write(",".join(repr(float(x)) for x in vals) + f",{int(self.clipped[k])}\n")


def run_cycle(trace, edu, clip_limit=0.01):
    """Solve every distinct demand point once, then account energy per step.

    Steps beyond the torque envelope are clipped to the envelope; if they
    carry more than ``clip_limit`` of the cycle's processed energy a
    :class:`CycleError` is raised.
    """
    model = edu.model
    n = len(trace)
    rpm = trace.motor_speed_rpm
    t_req = trace.motor_torque
    active = trace.motor_speed > 0
    keys = np.column_stack([t_req[active], rpm[active]])
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True) if keys.size else (np.zeros((0, 2)), np.zeros(0, int))
    inverse = np.asarray(inverse).ravel()
    sols = solve_many(model, uniq[:, 0], uniq[:, 1], edu.v_dc, edu.strategy, edu.config) if len(uniq) else []

    clipped_u = np.zeros(len(uniq), dtype=bool)
    missing = [k for k, s in enumerate(sols) if s is None]
    if missing:
        t_max = max_torque_many(model, uniq[missing, 1], edu.v_dc, edu.config)[0]
        retry = np.sign(uniq[missing, 0]) * 0.999 * t_max
        for k, sol in zip(missing, solve_many(model, retry, uniq[missing, 1], edu.v_dc, edu.strategy, edu.config)):
            if sol is None:
                raise CycleError(f"{edu.name}: no feasible point at {uniq[k, 1]:.0f} rpm even after clipping")
            sols[k] = sol
            clipped_u[k] = True

    def per_step(getter):
        out = np.zeros(n)
        if len(uniq):
            out[active] = np.array([getter(s) for s in sols])[inverse]
        return out

    torque = per_step(lambda s: s.torque_achieved)
    i_f = per_step(lambda s: s.i_f)
    losses = {name: per_step(lambda s, name=name: getattr(s.losses, name)) for name in COMPONENTS}
    clipped = np.zeros(n, dtype=bool)
    if len(uniq):
        clipped[active] = clipped_u[inverse]
    shaft = torque * trace.motor_speed
    if edu.gear is not None:
        losses["gearbox"] = np.where(active, gearbox_loss(torque, trace.motor_speed, edu.gear), 0.0)
    output = shaft - losses["gearbox"]
    loss_total = losses[COMPONENTS[0]]
    for name in COMPONENTS[1:]:
        loss_total = loss_total + losses[name]
    input_power = output + loss_total

    clipped_energy = float(np.sum(np.abs(t_req - torque)[clipped] * trace.motor_speed[clipped] * trace.dt[clipped]))
    processed = float(np.sum(np.abs(t_req * trace.motor_speed) * trace.dt))
    if processed > 0 and clipped_energy > clip_limit * processed:
        raise CycleError(f"{edu.name}: {clipped_energy / processed:.1%} of cycle energy lies beyond the "
                         f"torque envelope (limit {clip_limit:.0%})")
    return CycleResult(trace.time, trace.dt, t_req, torque, trace.motor_speed, i_f, losses, shaft, output,
                       input_power, clipped, clipped_energy, trace.aux_power, edu.name,
                       meta={"unique_points": int(len(uniq)), "v_dc": edu.v_dc, "strategy": edu.strategy})


def cruise_efficiency(v_kmh, vehicle, edu):
    """Steady-state EDU efficiency (output over input) at a constant speed."""
    if v_kmh <= 0:
        raise DomainError("cruise speed must be > 0")
    cycle = DriveCycle.constant(v_kmh, duration=1.0, dt=1.0)
    result = run_cycle(demand_trace(cycle, vehicle, edu.gear), edu, clip_limit=0.0)
    return float(result.output_power[0] / result.input_power[0])


# -- histogram -----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class EnergyHistogram:
    torque_edges: np.ndarray
    speed_edges: np.ndarray  # rpm
    energy: np.ndarray  # J per bin, [torque, speed]
    mode: str

    @property
    def normalized(self):
        peak = self.energy.max()
        return self.energy / peak if peak > 0 else np.zeros_like(self.energy)

    @property
    def total(self):
        return float(self.energy.sum())

    def hotspots(self, n=2):
        """Top ``n`` bins as ``(torque_center, speed_center, energy)``, highest first."""
        flat = np.argsort(-self.energy, axis=None, kind="stable")[:n]
        tc = 0.5 * (self.torque_edges[1:] + self.torque_edges[:-1])
        sc = 0.5 * (self.speed_edges[1:] + self.speed_edges[:-1])
        out = []
        for f in flat:
            i, j = np.unravel_index(f, self.energy.shape)
            out.append((float(tc[i]), float(sc[j]), float(self.energy[i, j])))
        return out

    def save_csv(self, path):
        norm = self.normalized
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("torque_lo_Nm,torque_hi_Nm,speed_lo_rpm,speed_hi_rpm,energy_J,normalized\n")
            for i in range(norm.shape[0]):
                for j in range(norm.shape[1]):
                    fh.write(f"{self.torque_edges[i]!r},{self.torque_edges[i + 1]!r},{self.speed_edges[j]!r},"
                             f"{self.speed_edges[j + 1]!r},{float(self.energy[i, j])!r},{float(norm[i, j])!r}\n")


def energy_histogram(result, torque_bins=20, speed_bins=20, mode="throughput"):
    """Energy-weighted (torque, speed) histogram of a cycle.

    ``mode="throughput"`` weights by motor shaft energy, ``"loss"`` by EDU
    loss energy.  Points outside explicit edges are folded into the edge
    bins so no energy is dropped.
    """
    if mode == "throughput":
        weight = np.abs(result.shaft_power) * result.dt
    elif mode == "loss":
        weight = result.loss_power * result.dt
    else:
        raise ValueError(f"unknown histogram mode {mode!r}")
    torque = result.motor_torque
    rpm = result.motor_speed / RPM
    t_edges = _edges(torque_bins, torque)
    s_edges = _edges(speed_bins, rpm, lower=0.0)
    i = np.clip(np.searchsorted(t_edges, torque, side="right") - 1, 0, len(t_edges) - 2)
    j = np.clip(np.searchsorted(s_edges, rpm, side="right") - 1, 0, len(s_edges) - 2)
    energy = np.zeros((len(t_edges) - 1, len(s_edges) - 1))
    np.add.at(energy, (i, j), weight)
    return EnergyHistogram(t_edges, s_edges, energy, mode)


def _edges(bins, values, lower=None):
    if np.ndim(bins):
        edges = np.asarray(bins, dtype=float)
        if edges.ndim != 1 or edges.size < 2 or np.any(np.diff(edges) <= 0):
            raise ValueError("bin edges must be strictly increasing")
        return edges
    lo = float(np.min(values)) if lower is None else lower
    hi = float(np.max(values))
    if hi <= lo:
        hi = lo + 1.0
    return np.linspace(lo, hi, int(bins) + 1)


def dump_vehicle(vehicle, path):
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(asdict(vehicle), fh, sort_keys=False)
