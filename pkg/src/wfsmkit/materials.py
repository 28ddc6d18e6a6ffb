"""Soft magnetic material models.

Laminated electrical steel and soft magnetic composites (SMC) share one
data type, :class:`MaterialSpec`.  The two kinds differ in how the eddy
term scales (sheet thickness squared vs. a fixed particle-level
coefficient) and in the stacking factor, which is fixed to 1 for SMC.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np
import yaml

from .exceptions import DomainError, ValidationError

MU0 = 4e-7 * math.pi
# Thickness at which k_e_ref is quoted [m].
REFERENCE_THICKNESS = 0.25e-3


class MaterialKind(str, Enum):
    LAMINATED = "laminated"
    SMC = "smc"


@dataclass(frozen=True)
class MaterialSpec:
    """Immutable description of one soft magnetic grade.

    ``bh_h`` / ``bh_b`` hold the B-H knots (A/m, T); loss coefficients
    follow the three-term separation used by :func:`iron_loss_density`.
    """

    name: str
    kind: MaterialKind
    bh_h: tuple
    bh_b: tuple
    k_h: float
    alpha: float
    k_e_ref: float
    k_exc: float
    stacking_factor: float
    density: float
    cost: float
    thickness: float | None = None
    _slopes: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "kind", MaterialKind(self.kind))
        object.__setattr__(self, "bh_h", tuple(float(v) for v in self.bh_h))
        object.__setattr__(self, "bh_b", tuple(float(v) for v in self.bh_b))
        check_material(self)
        h = np.asarray(self.bh_h)
        b = np.asarray(self.bh_b)
        object.__setattr__(self, "_slopes", np.diff(b) / np.diff(h))

    @property
    def bh_curve(self):
        return list(zip(self.bh_h, self.bh_b))

    @property
    def initial_permeability(self):
        return float(self._slopes[0])

    def with_(self, **changes):
        return replace(self, **changes)


def check_material(m):
    """Raise :class:`ValidationError` naming the first violated invariant."""
    h, b = m.bh_h, m.bh_b
    if len(h) != len(b) or len(h) < 2:
        raise ValidationError("bh_curve_shape", f"{m.name}: need >= 2 (H, B) pairs of equal length")
    if h[0] != 0.0 or b[0] != 0.0:
        raise ValidationError("bh_curve_origin", f"{m.name}: first B-H point must be (0, 0)")
    for i in range(1, len(h)):
        if not (h[i] > h[i - 1] and b[i] > b[i - 1]):
            raise ValidationError(
                "bh_curve_monotone",
                f"{m.name}: B-H curve not strictly increasing at knot index {i}",
            )
        # Differential permeability below vacuum is unphysical before saturation.
        if (b[i] - b[i - 1]) / (h[i] - h[i - 1]) < MU0 * (1 - 1e-9):
            raise ValidationError(
                "bh_curve_slope",
                f"{m.name}: slope below mu0 on segment ending at knot index {i}",
            )
    if not 0.90 <= m.stacking_factor <= 1.0:
        raise ValidationError("stacking_factor_range", f"{m.name}: stacking factor {m.stacking_factor} outside [0.90, 1.0]")
    if m.kind is MaterialKind.SMC and m.stacking_factor != 1.0:
        raise ValidationError("smc_stacking_factor", f"{m.name}: SMC must have stacking factor 1.0")
    if m.kind is MaterialKind.LAMINATED and not (m.thickness and m.thickness > 0):
        raise ValidationError("lamination_thickness", f"{m.name}: laminated grade needs a positive thickness")
    for coef in ("k_h", "k_e_ref", "k_exc"):
        if getattr(m, coef) < 0:
            raise ValidationError("loss_coefficients_nonnegative", f"{m.name}: {coef} < 0")
    if not 1.5 <= m.alpha <= 2.5:
        raise ValidationError("steinmetz_alpha_range", f"{m.name}: alpha {m.alpha} outside [1.5, 2.5]")
    if m.density <= 0 or m.cost < 0:
        raise ValidationError("density_cost", f"{m.name}: density must be > 0 and cost >= 0")


def bh_lookup(material, h):
    """Flux density for field strength ``h`` (scalar or array, A/m).

    Piecewise linear between knots, slope ``MU0`` past the last knot.
    """
    h_arr = np.asarray(h, dtype=float)
    if np.any(h_arr < 0) or np.any(np.isnan(h_arr)):
        raise DomainError("bh_lookup needs h >= 0; apply |h| and restore the sign")
    hk = np.asarray(material.bh_h)
    bk = np.asarray(material.bh_b)
    out = np.interp(h_arr, hk, bk)
    beyond = h_arr > hk[-1]
    if np.any(beyond):
        out = np.where(beyond, bk[-1] + MU0 * (h_arr - hk[-1]), out)
    return float(out) if np.ndim(out) == 0 else out


def bh_slope(material, h):
    """Differential permeability dB/dH at ``h >= 0`` (right derivative at knots)."""
    h_arr = np.asarray(h, dtype=float)
    hk = np.asarray(material.bh_h)
    idx = np.searchsorted(hk, h_arr, side="right") - 1
    idx = np.clip(idx, 0, len(hk) - 1)
    slopes = np.append(material._slopes, MU0)
    return slopes[idx]


def hb_lookup(material, b):
    """Inverse of :func:`bh_lookup`: field strength required for ``b >= 0``."""
    b_arr = np.asarray(b, dtype=float)
    if np.any(b_arr < 0):
        raise DomainError("hb_lookup needs b >= 0")
    hk = np.asarray(material.bh_h)
    bk = np.asarray(material.bh_b)
    out = np.interp(b_arr, bk, hk)
    beyond = b_arr > bk[-1]
    if np.any(beyond):
        out = np.where(beyond, hk[-1] + (b_arr - bk[-1]) / MU0, out)
    return float(out) if np.ndim(out) == 0 else out


def eddy_coefficient(material):
    if material.kind is MaterialKind.LAMINATED:
        return material.k_e_ref * (material.thickness / REFERENCE_THICKNESS) ** 2
    return material.k_e_ref


def iron_loss_components(material, b_peak, f):
    """Return ``(hysteresis, eddy, excess)`` loss densities in W/kg."""
    b = np.asarray(b_peak, dtype=float)
    f = np.asarray(f, dtype=float)
    if np.any(b < 0) or np.any(f < 0):
        raise DomainError("iron loss needs b_peak >= 0 and f >= 0")
    hyst = material.k_h * f * b ** material.alpha
    eddy = eddy_coefficient(material) * f**2 * b**2
    exc = material.k_exc * f**1.5 * b**1.5
    return hyst, eddy, exc


def iron_loss_density(material, b_peak, f):
    """Specific iron loss [W/kg] at peak flux density ``b_peak`` and frequency ``f``."""
    hyst, eddy, exc = iron_loss_components(material, b_peak, f)
    total = hyst + eddy + exc
    return float(total) if np.ndim(total) == 0 else total


def effective_stack_properties(material, gross_length):
    """Magnetic length and core mass per unit lamination area for a stack.

    Returns ``(magnetic_length, core_mass_per_area)``; SMC keeps the gross
    length since the whole volume is active material.
    """
    if gross_length <= 0:
        raise DomainError("gross_length must be positive")
    magnetic_length = material.stacking_factor * gross_length
    return magnetic_length, magnetic_length * material.density


# -- files -----------------------------------------------------------------

def material_from_dict(data):
    try:
        points = data["bh_curve"]
        return MaterialSpec(
            name=data["name"],
            kind=data["kind"],
            bh_h=[p[0] for p in points],
            bh_b=[p[1] for p in points],
            k_h=float(data["k_h"]),
            alpha=float(data["alpha"]),
            k_e_ref=float(data["k_e_ref"]),
            k_exc=float(data["k_exc"]),
            stacking_factor=float(data.get("stacking_factor", 1.0)),
            density=float(data["density"]),
            cost=float(data["cost"]),
            thickness=None if data.get("thickness") is None else float(data["thickness"]),
        )
    except KeyError as exc:
        raise ValidationError("material_fields", f"missing field {exc.args[0]!r}") from None


def material_to_dict(m):
    out = {
        "name": m.name,
        "kind": m.kind.value,
        "k_h": m.k_h,
        "alpha": m.alpha,
        "k_e_ref": m.k_e_ref,
        "k_exc": m.k_exc,
        "stacking_factor": m.stacking_factor,
        "density": m.density,
        "cost": m.cost,
        "bh_curve": [[h, b] for h, b in m.bh_curve],
    }
    if m.thickness is not None:
        out["thickness"] = m.thickness
    return out


def load_material(path):
    with open(path, encoding="utf-8") as fh:
        return material_from_dict(yaml.safe_load(fh))


def save_material(material, path):
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(material_to_dict(material), fh, sort_keys=False)


DATA_DIR = Path(__file__).parent / "data"
GRADE_NAMES = ("NO25", "NO35", "SMC_A", "SMC_B", "SMC_C")


class SurrogateGradeLibrary:
    """The five shipped surrogate grades, keyed by name."""

    def __init__(self, grades):
        self.grades = dict(grades)

    def __getitem__(self, name):
        return self.grades[name]

    def __iter__(self):
        return iter(self.grades)

    def __len__(self):
        return len(self.grades)

    @classmethod
    def load(cls, directory=None):
        directory = Path(directory) if directory else DATA_DIR / "materials"
        grades = {}
        for path in sorted(directory.glob("*.yaml")):
            m = load_material(path)
            grades[m.name] = m
        return cls(grades)


def default_library():
    return SurrogateGradeLibrary.load()


def linear_material(mu_r=1000.0, name="LINEAR", h_max=1e9):
    """Ideal linear material used by analytic cross-checks of the circuit model."""
    return MaterialSpec(
        name=name,
        kind=MaterialKind.SMC,
        bh_h=(0.0, h_max),
        bh_b=(0.0, MU0 * mu_r * h_max),
        k_h=0.0,
        alpha=2.0,
        k_e_ref=0.0,
        k_exc=0.0,
        stacking_factor=1.0,
        density=7650.0,
        cost=0.0,
    )
