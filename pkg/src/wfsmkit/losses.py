"""Loss mechanisms at one operating point.

Everything here works on NumPy arrays as well as scalars so that the
control solvers can score whole candidate sets in one call.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np
import yaml

from .exceptions import ConfigError, InfeasibleError
from .materials import iron_loss_density

DEFAULT_WINDING_TEMP = 120.0

COMPONENTS = ("iron_stator", "iron_rotor", "copper_dc", "copper_ac", "field_copper",
              "transformer", "inverter", "gearbox")
MACHINE_EM = ("iron_stator", "iron_rotor", "copper_dc", "copper_ac", "field_copper")


@dataclass(frozen=True)
class LossParams:
    pwm_factor: float = 1.05
    transformer_efficiency: float = 0.92
    winding_temp: float = DEFAULT_WINDING_TEMP

    def __post_init__(self):
        if self.pwm_factor < 1.0:
            raise ConfigError("pwm_factor must be >= 1")
        if not 0 < self.transformer_efficiency <= 1:
            raise ConfigError("transformer_efficiency must be in (0, 1]")


@dataclass(frozen=True)
class LossBreakdown:
    iron_stator: float = 0.0
    iron_rotor: float = 0.0
    copper_dc: float = 0.0
    copper_ac: float = 0.0
    field_copper: float = 0.0
    transformer: float = 0.0
    inverter: float = 0.0
    gearbox: float = 0.0
    pwm_correction_applied: float = 1.0

    @property
    def total(self):
        # Fixed summation order keeps the bookkeeping identity bit-exact.
        t = self.iron_stator
        for name in COMPONENTS[1:]:
            t = t + getattr(self, name)
        return t

    @property
    def machine(self):
        return self.iron_stator + self.iron_rotor + self.copper_dc + self.copper_ac + self.field_copper

    def with_(self, **changes):
        data = {f.name: getattr(self, f.name) for f in fields(self)}
        data.update(changes)
        return LossBreakdown(**data)

    def as_dict(self):
        out = {name: getattr(self, name) for name in COMPONENTS}
        out["total"] = self.total
        return out

    def take(self, index):
        """Pick one entry out of an array-valued breakdown."""
        data = {}
        for f in fields(self):
            v = getattr(self, f.name)
            data[f.name] = float(np.asarray(v)[index]) if np.ndim(v) else float(v)
        return LossBreakdown(**data)


def machine_loss_arrays(design, fmap, i_d, i_q, i_f, speed_mech, params=None, flux=None):
    """Vectorised machine losses.

    Returns ``(LossBreakdown, field_output_power)``; no feasibility checks.
    ``flux`` may carry an already-interpolated map lookup.
    """
    params = params or LossParams()
    i_d = np.asarray(i_d, dtype=float)
    i_q = np.asarray(i_q, dtype=float)
    i_f = np.asarray(i_f, dtype=float)
    speed_mech = np.asarray(speed_mech, dtype=float)
    if flux is None:
        flux = fmap.interpolate(i_d, i_q, i_f)
    f_elec = design.pole_pairs * np.abs(speed_mech) / (2 * math.pi)
    f_slot = design.slot_count * np.abs(speed_mech) / (2 * math.pi)

    stator = design.stator_material
    iron_stator = (iron_loss_density(stator, np.abs(flux["b_tooth"]), f_elec) * design.stator_teeth_mass
                   + iron_loss_density(stator, np.abs(flux["b_yoke"]), f_elec) * design.stator_yoke_mass)
    # The rotor carries DC flux; only the slot ripple at slot-passing frequency loses energy.
    b_ripple = design.rotor_ripple_amplitude * np.abs(flux["b_rotor"])
    iron_rotor = iron_loss_density(design.rotor_material, b_ripple, f_slot) * design.rotor_mass

    temp = params.winding_temp
    i_rms_sq = (i_d**2 + i_q**2) / 2.0
    copper_dc = 3.0 * i_rms_sq * design.stator_resistance(temp)
    k_ac = 1.0 + design.ac_coefficient * f_elec**2
    copper_ac = copper_dc * (k_ac - 1.0)
    field_copper = i_f**2 * design.field_resistance(temp)
    transformer = field_copper * (1.0 / params.transformer_efficiency - 1.0)

    k = params.pwm_factor
    zero = np.zeros(np.broadcast(i_d, i_q, i_f, speed_mech).shape)
    lb = LossBreakdown(
        iron_stator=iron_stator * k + zero,
        iron_rotor=iron_rotor * k + zero,
        copper_dc=copper_dc * k + zero,
        copper_ac=copper_ac * k + zero,
        field_copper=field_copper * k + zero,
        transformer=transformer + zero,
        inverter=zero,
        gearbox=zero,
        pwm_correction_applied=k,
    )
    if lb.iron_stator.ndim == 0:
        lb = lb.take(())
    return lb, field_copper


def machine_losses(design, fmap, i_d, i_q, i_f, speed_mech, winding_temp=DEFAULT_WINDING_TEMP,
                   params=None, max_field_power=8200.0):
    """Machine-side :class:`LossBreakdown` at one operating point.

    Raises :class:`InfeasibleError` when the field winding would need more
    than ``max_field_power`` delivered through the rotating transformer.
    """
    if np.any(np.asarray(speed_mech) < 0):
        raise ValueError("speed_mech must be >= 0")
    params = params or LossParams()
    if winding_temp != params.winding_temp:
        params = LossParams(params.pwm_factor, params.transformer_efficiency, winding_temp)
    lb, field_power = machine_loss_arrays(design, fmap, i_d, i_q, i_f, speed_mech, params)
    if np.any(field_power > max_field_power):
        raise InfeasibleError(
            f"field winding demands {float(np.max(field_power)):.0f} W, above the {max_field_power:.0f} W transfer limit"
        )
    return lb


# -- inverter ------------------------------------------------------------------

@dataclass(frozen=True)
class DeviceParams:
    """Lumped three-phase inverter parameters.

    ``e_on``/``e_off``/``e_rr`` are whole-inverter energies per switching
    period (J) measured at ``i_ref`` (A rms) and ``v_ref`` (V).
    """

    name: str
    v_on: float
    r_on: float
    e_on: float
    e_off: float
    e_rr: float
    i_ref: float
    v_ref: float
    f_sw: float = 10e3


def inverter_losses(i_rms, v_dc, f_sw, device):
    """Conduction plus switching losses of a three-phase inverter [W]."""
    i_rms = np.asarray(i_rms, dtype=float)
    if np.any(i_rms < 0) or np.any(np.asarray(v_dc) < 0) or np.any(np.asarray(f_sw) < 0):
        raise ValueError("inverter inputs must be >= 0")
    i_avg = math.sqrt(2.0) / math.pi * i_rms
    conduction = 3.0 * (device.v_on * i_avg + device.r_on * i_rms**2)
    switching = f_sw * (device.e_on + device.e_off + device.e_rr) * (i_rms / device.i_ref) * (v_dc / device.v_ref)
    out = conduction + switching
    return float(out) if np.ndim(out) == 0 else out


# -- gearbox -------------------------------------------------------------------

@dataclass(frozen=True)
class GearParams:
    ratio: float
    stages: int
    stage_efficiency: float
    drag_coeff: float = 0.0  # W per rad/s of input speed, per stage

    def __post_init__(self):
        if self.stages < 1 or not 0 < self.stage_efficiency <= 1 or self.ratio <= 0:
            raise ConfigError("gear params need stages >= 1, efficiency in (0, 1], ratio > 0")


def gearbox_loss(input_torque, input_speed, gear):
    """Sum of per-stage losses; every stage sees the same through-power."""
    input_speed = np.asarray(input_speed, dtype=float)
    if np.any(input_speed < 0):
        raise ValueError("input_speed must be >= 0")
    p_through = np.abs(np.asarray(input_torque, dtype=float) * input_speed)
    per_stage = (1.0 - gear.stage_efficiency) * p_through + gear.drag_coeff * input_speed
    out = gear.stages * per_stage
    return float(out) if np.ndim(out) == 0 else out


# -- files ---------------------------------------------------------------------

def _load_yaml(path):
    with open(path, encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping")
    return data


def load_device(path):
    data = _load_yaml(path)
    try:
        return DeviceParams(**data)
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def load_gear(path):
    data = _load_yaml(path)
    try:
        return GearParams(**data)
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def dump_params(obj, path):
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(asdict(obj), fh, sort_keys=False)
