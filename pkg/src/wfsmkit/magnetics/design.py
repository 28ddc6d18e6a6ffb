"""Parametric radial-flux machine description and ratings."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace
from enum import Enum

import yaml

from ..exceptions import ConfigError, GeometryError
from ..materials import MaterialSpec, default_library, effective_stack_properties

COPPER_RESISTIVITY_20C = 1.724e-8  # ohm*m
COPPER_TEMP_COEFF = 0.00393  # 1/K


class Topology(str, Enum):
    WFSM = "wfsm"
    PMSM = "pmsm"


class ToothTip(str, Enum):
    OPEN_SLOT = "open_slot"
    SEMI_CLOSED = "semi_closed"


@dataclass(frozen=True)
class MachineRatings:
    peak_torque: float
    peak_power: float
    rated_voltage: float
    max_voltage: float
    max_stator_current: float  # A rms, machine limit
    max_field_current: float = 0.0
    max_field_power: float = 8200.0
    inverter_current_limit: float | None = None  # A rms, kept separate from the machine limit

    def __post_init__(self):
        for name in ("peak_torque", "peak_power", "rated_voltage", "max_voltage", "max_stator_current", "max_field_power"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"rating {name} must be positive")
        if self.max_field_current < 0:
            raise ConfigError("max_field_current must be >= 0")

    @property
    def current_limit_rms(self):
        if self.inverter_current_limit is None:
            return self.max_stator_current
        return min(self.max_stator_current, self.inverter_current_limit)

    @property
    def current_limit_peak(self):
        """Peak (dq amplitude) stator current the controllers may use."""
        return self.current_limit_rms * math.sqrt(2.0)

    @classmethod
    def wfsm_m0(cls):
        return cls(peak_torque=610.0, peak_power=210e3, rated_voltage=625.0, max_voltage=900.0,
                   max_stator_current=400.0, max_field_current=32.0, max_field_power=8200.0,
                   inverter_current_limit=440.0)


@dataclass(frozen=True)
class MachineDesign:
    """Radial-flux machine geometry, winding and material assignment.

    Lengths in metres.  Fields after ``rotor_material`` are surrogate
    parameters of the lumped circuit model and carry declared defaults.
    """

    name: str
    topology: Topology
    pole_pairs: int
    slot_count: int
    stator_outer_diameter: float
    airgap_diameter: float
    airgap_length: float
    active_length: float
    slot_width: float
    slot_depth: float
    stator_yoke_width: float
    tooth_tip: ToothTip
    turns_per_phase: int
    rotor_pole_width: float
    rotor_yoke_width: float
    stator_material: MaterialSpec
    rotor_material: MaterialSpec
    field_turns: int = 0  # per pole
    magnet_remanence: float = 0.0
    magnet_thickness: float = 0.0
    magnet_mu_r: float = 1.05
    magnet_density: float = 7500.0
    winding_factor: float = 0.933
    shaft_diameter: float = 0.05
    slot_opening: float = 2.5e-3  # semi-closed slots only
    tip_height: float = 1.0e-3
    q_gap_factor: float = 2.5
    slot_fill: float = 0.45
    end_turn_factor: float = 1.2
    field_resistance_20c: float = 0.0
    ac_coefficient: float = 0.0  # k_ac = 1 + c * f_elec**2
    # Slot-ripple amplitude on the rotor surface per unit (carter_factor - 1).
    rotor_ripple_fraction: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "topology", Topology(self.topology))
        object.__setattr__(self, "tooth_tip", ToothTip(self.tooth_tip))
        check_design(self)

    def with_(self, **changes):
        return replace(self, **changes)

    # -- derived geometry ----------------------------------------------------
    @property
    def poles(self):
        return 2 * self.pole_pairs

    @property
    def rotor_diameter(self):
        return self.airgap_diameter - 2 * self.airgap_length

    @property
    def pole_pitch(self):
        return math.pi * self.airgap_diameter / self.poles

    @property
    def slot_pitch(self):
        return math.pi * self.airgap_diameter / self.slot_count

    @property
    def tooth_width(self):
        return self.slot_pitch - self.slot_width

    @property
    def teeth_per_pole(self):
        return self.slot_count / self.poles

    @property
    def rotor_pole_height(self):
        return (self.rotor_diameter - self.shaft_diameter) / 2 - self.rotor_yoke_width

    @property
    def slot_opening_width(self):
        if self.tooth_tip is ToothTip.OPEN_SLOT:
            return self.slot_width
        return min(self.slot_opening, self.slot_width)

    @property
    def carter_factor(self):
        """Classical Carter coefficient with the slot opening as ``b0``."""
        g = self.airgap_length
        x = self.slot_opening_width / (2 * g)
        gamma = 4 / math.pi * (x * math.atan(x) - math.log(math.sqrt(1 + x * x)))
        return self.slot_pitch / (self.slot_pitch - gamma * g)

    @property
    def rotor_ripple_amplitude(self):
        """Slot-ripple flux density on the rotor per tesla of rotor body flux."""
        return self.rotor_ripple_fraction * (self.carter_factor - 1.0)

    @property
    def stator_magnetic_length(self):
        return effective_stack_properties(self.stator_material, self.active_length)[0]

    @property
    def rotor_magnetic_length(self):
        return effective_stack_properties(self.rotor_material, self.active_length)[0]

    @property
    def mmf_per_ampere(self):
        """Fundamental stator MMF per pole per ampere of dq current amplitude."""
        return 3 * self.winding_factor * self.turns_per_phase / (math.pi * self.pole_pairs)

    @property
    def linkage_turns(self):
        return self.winding_factor * self.turns_per_phase

    @property
    def conductor_area(self):
        return self.slot_fill * self.slot_width * self.slot_depth * self.slot_count / (6 * self.turns_per_phase)

    @property
    def stator_resistance_20c(self):
        turn_length = 2 * self.active_length + 2 * self.end_turn_factor * self.pole_pitch
        return COPPER_RESISTIVITY_20C * self.turns_per_phase * turn_length / self.conductor_area

    def stator_resistance(self, temp_c):
        return self.stator_resistance_20c * (1 + COPPER_TEMP_COEFF * (temp_c - 20.0))

    def field_resistance(self, temp_c):
        return self.field_resistance_20c * (1 + COPPER_TEMP_COEFF * (temp_c - 20.0))

    # -- masses --------------------------------------------------------------
    @property
    def stator_teeth_mass(self):
        area = self.slot_count * self.tooth_width * self.slot_depth
        return area * self.stator_magnetic_length * self.stator_material.density

    @property
    def stator_yoke_mass(self):
        r_o = self.stator_outer_diameter / 2
        area = math.pi * (r_o**2 - (r_o - self.stator_yoke_width) ** 2)
        return area * self.stator_magnetic_length * self.stator_material.density

    @property
    def rotor_mass(self):
        r_ry = self.shaft_diameter / 2 + self.rotor_yoke_width
        area = math.pi * (r_ry**2 - (self.shaft_diameter / 2) ** 2)
        area += self.poles * self.rotor_pole_width * self.rotor_pole_height
        if self.topology is Topology.PMSM:
            area -= self.poles * self.rotor_pole_width * self.magnet_thickness
        return area * self.rotor_magnetic_length * self.rotor_material.density

    @property
    def magnet_mass(self):
        if self.topology is not Topology.PMSM:
            return 0.0
        return self.poles * self.rotor_pole_width * self.magnet_thickness * self.active_length * self.magnet_density

    @property
    def gross_stator_mass(self):
        """Core material bought for the stator (stacking penalty not deducted)."""
        sf = self.stator_material.stacking_factor
        return (self.stator_teeth_mass + self.stator_yoke_mass) / sf

    @property
    def gross_rotor_mass(self):
        return self.rotor_mass / self.rotor_material.stacking_factor


def check_design(d):
    """Raise :class:`GeometryError` naming the first violated geometry constraint."""
    positive = ("stator_outer_diameter", "airgap_diameter", "airgap_length", "active_length",
                "slot_width", "slot_depth", "stator_yoke_width", "rotor_pole_width",
                "rotor_yoke_width", "shaft_diameter", "winding_factor", "slot_fill")
    for name in positive:
        if not getattr(d, name) > 0:
            raise GeometryError("positive_lengths", f"{d.name}: {name} must be > 0")
    if d.pole_pairs < 1 or d.slot_count < 1 or d.turns_per_phase < 1:
        raise GeometryError("positive_counts", f"{d.name}: pole_pairs, slot_count, turns_per_phase must be >= 1")
    if d.slot_width * d.slot_count >= math.pi * d.airgap_diameter:
        raise GeometryError("tooth_width_positive", f"{d.name}: slot_width * slot_count >= pi * airgap_diameter")
    if d.slot_depth + d.stator_yoke_width >= (d.stator_outer_diameter - d.airgap_diameter) / 2:
        raise GeometryError("radial_build", f"{d.name}: slot_depth + stator_yoke_width exceeds the stator radial space")
    if d.stator_material.kind.value == "smc" and d.tooth_tip is not ToothTip.OPEN_SLOT:
        raise GeometryError("smc_open_slot", f"{d.name}: SMC stators cannot have tooth tips")
    if d.rotor_pole_height <= 0:
        raise GeometryError("rotor_radial_build", f"{d.name}: no room for rotor poles above the rotor yoke")
    if d.poles * d.rotor_pole_width >= math.pi * d.rotor_diameter:
        raise GeometryError("rotor_pole_width", f"{d.name}: rotor poles overlap")
    if d.topology is Topology.WFSM and d.field_turns < 1:
        raise GeometryError("field_turns", f"{d.name}: WFSM needs field_turns >= 1")
    if d.topology is Topology.PMSM and not (d.magnet_remanence > 0 and d.magnet_thickness > 0):
        raise GeometryError("magnet", f"{d.name}: PMSM needs magnet_remanence and magnet_thickness > 0")
    if d.magnet_thickness >= d.rotor_pole_height and d.topology is Topology.PMSM:
        raise GeometryError("magnet", f"{d.name}: magnet thicker than the rotor pole")


# -- files -----------------------------------------------------------------

_MATERIAL_FIELDS = ("stator_material", "rotor_material")


def design_from_dict(data, library=None):
    library = library if library is not None else default_library()
    data = dict(data)
    known = {f.name for f in fields(MachineDesign)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown design fields: {sorted(unknown)}")
    for key in _MATERIAL_FIELDS:
        ref = data.get(key)
        if isinstance(ref, str):
            try:
                data[key] = library[ref]
            except KeyError:
                raise ConfigError(f"design references unknown material {ref!r}") from None
    try:
        return MachineDesign(**data)
    except TypeError as exc:
        raise ConfigError(f"bad design file: {exc}") from None


def design_to_dict(design):
    out = {}
    for f in fields(design):
        value = getattr(design, f.name)
        if isinstance(value, MaterialSpec):
            value = value.name
        elif isinstance(value, Enum):
            value = value.value
        out[f.name] = value
    return out


def ratings_from_dict(data):
    try:
        return MachineRatings(**data)
    except TypeError as exc:
        raise ConfigError(f"bad ratings block: {exc}") from None


def load_machine(path, library=None):
    """Read a machine file holding ``design`` and ``ratings`` blocks."""
    with open(path, encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict) or "design" not in data or "ratings" not in data:
        raise ConfigError(f"{path}: machine file needs 'design' and 'ratings' blocks")
    return design_from_dict(data["design"], library), ratings_from_dict(data["ratings"])


def save_machine(design, ratings, path):
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump({"design": design_to_dict(design), "ratings": asdict(ratings)}, fh, sort_keys=False)
