"""dq flux-linkage maps built from the circuit model, and dq machine equations."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from ..exceptions import RangeError, SolverDivergence
from .design import Topology
from .network import build_reluctance_network, solve_network

MAP_ARRAYS = ("psi_d", "psi_q", "b_tooth", "b_yoke", "b_rotor")
DEFAULT_GRID = (17, 17, 9)
OPTIMIZATION_GRID = (9, 9, 5)
MODULATION_LIMIT = 0.95


@dataclass(frozen=True)
class GridSpec:
    n_id: int = DEFAULT_GRID[0]
    n_iq: int = DEFAULT_GRID[1]
    n_if: int = DEFAULT_GRID[2]

    def __post_init__(self):
        if self.n_iq % 2 == 0 or self.n_id % 2 == 0:
            raise ValueError("i_d and i_q axes need an odd point count so that 0 is a node")
        if self.n_if < 1:
            raise ValueError("n_if must be >= 1")

    @classmethod
    def coerce(cls, grid):
        if grid is None:
            return cls()
        if isinstance(grid, GridSpec):
            return grid
        return cls(*grid)


def symmetric_axis(limit, n):
    half = np.linspace(0.0, limit, n // 2 + 1)
    return np.concatenate([-half[:0:-1], half])


@dataclass(frozen=True, eq=False)
class FluxLinkageMap:
    """Gridded (i_d, i_q, i_f) -> flux linkages and region peak flux densities.

    Arrays are indexed ``[i_d, i_q, i_f]`` (row-major).  The i_q axis is
    symmetric and the data honour psi_d even / psi_q odd in i_q exactly.
    """

    id_axis: np.ndarray
    iq_axis: np.ndarray
    if_axis: np.ndarray
    psi_d: np.ndarray
    psi_q: np.ndarray
    b_tooth: np.ndarray
    b_yoke: np.ndarray
    b_rotor: np.ndarray
    pole_pairs: int
    topology: str = "wfsm"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("id_axis", "iq_axis", "if_axis", *MAP_ARRAYS):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        shape = (len(self.id_axis), len(self.iq_axis), len(self.if_axis))
        for name in MAP_ARRAYS:
            if getattr(self, name).shape != shape:
                raise ValueError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")
        if not np.array_equal(self.iq_axis, -self.iq_axis[::-1]):
            raise ValueError("iq_axis must be exactly symmetric about zero")
        npos = len(self.iq_axis) // 2
        object.__setattr__(self, "_iq_pos", self.iq_axis[npos:])
        object.__setattr__(self, "_pos_slice", slice(npos, None))

    @property
    def shape(self):
        return self.psi_d.shape

    @property
    def i_max_peak(self):
        return float(self.iq_axis[-1])

    @property
    def if_max(self):
        return float(self.if_axis[-1])

    # -- interpolation -------------------------------------------------------
    def _locate(self, axis, x, name):
        lo, hi = axis[0], axis[-1]
        span = max(abs(lo), abs(hi), 1.0)
        if x.min() < lo - 1e-9 * span or x.max() > hi + 1e-9 * span:
            raise RangeError(f"{name} outside map axis [{lo:g}, {hi:g}]")
        if len(axis) == 1:
            return np.zeros(x.shape, dtype=int), np.zeros(x.shape)
        x = np.minimum(np.maximum(x, lo), hi)
        k = np.searchsorted(axis, x, side="right") - 1
        k = np.minimum(np.maximum(k, 0), len(axis) - 2)
        t = (x - axis[k]) / (axis[k + 1] - axis[k])
        return k, t

    def _stack(self, names):
        cache = self.__dict__.setdefault("_stacks", {})
        if names not in cache:
            cache[names] = np.ascontiguousarray(
                np.stack([getattr(self, n)[:, self._pos_slice, :] for n in names], axis=-1))
        return cache[names]

    def interpolate(self, i_d, i_q, i_f, names=MAP_ARRAYS):
        """Multilinear interpolation; returns a dict of arrays (or floats).

        Evaluated at ``|i_q|`` with the q-parity restored afterwards so the
        symmetry survives interpolation bit-exactly.
        """
        names = tuple(names)
        i_d, i_q, i_f = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (i_d, i_q, i_f)))
        scalar = i_d.ndim == 0
        shape = i_d.shape
        i_d, i_q, i_f = (np.atleast_1d(v).ravel() for v in (i_d, i_q, i_f))
        kd, td = self._locate(self.id_axis, i_d, "i_d")
        kq, tq = self._locate(self._iq_pos, np.abs(i_q), "i_q")
        kf, tf = self._locate(self.if_axis, i_f, "i_f")
        arr = self._stack(names)
        _, nq, nf, m = arr.shape
        flat = arr.reshape(-1, m)
        base = (kd * nq + kq) * nf + kf
        wd = (1 - td, td)
        wq = (1 - tq, tq)
        wf = (1 - tf, tf) if nf > 1 else (np.ones_like(tf),)
        acc = np.zeros((i_d.size, m))
        for dd in range(2):
            for dq in range(2):
                w = wd[dd] * wq[dq]
                for df in range(len(wf)):
                    acc += (w * wf[df])[:, None] * flat[base + (dd * nq + dq) * nf + df]
        out = {}
        for j, name in enumerate(names):
            v = acc[:, j]
            if name == "psi_q":
                v = np.where(i_q < 0, -v, v)
            out[name] = float(v[0]) if scalar else v.reshape(shape)
        return out

    def flux_linkage(self, i_d, i_q, i_f):
        r = self.interpolate(i_d, i_q, i_f, names=("psi_d", "psi_q"))
        return r["psi_d"], r["psi_q"]

    # -- persistence ---------------------------------------------------------
    def save(self, path):
        meta = dict(self.meta, pole_pairs=self.pole_pairs, topology=self.topology,
                    axis_order=["i_d", "i_q", "i_f"], layout="row-major")
        np.savez(path, id_axis=self.id_axis, iq_axis=self.iq_axis, if_axis=self.if_axis,
                 **{k: getattr(self, k) for k in MAP_ARRAYS},
                 meta=np.array(json.dumps(meta, sort_keys=True)))

    @classmethod
    def load(cls, path):
        with np.load(path, allow_pickle=False) as z:
            meta = json.loads(str(z["meta"]))
            arrays = {k: z[k] for k in ("id_axis", "iq_axis", "if_axis", *MAP_ARRAYS)}
        pole_pairs = meta.pop("pole_pairs")
        topology = meta.pop("topology")
        meta.pop("axis_order", None)
        meta.pop("layout", None)
        return cls(pole_pairs=pole_pairs, topology=topology, meta=meta, **arrays)


def build_flux_map(design, ratings, grid_spec=None):
    """Characterise ``design`` on a current grid via the circuit model.

    Only the ``i_q >= 0`` half is solved; the other half is mirrored.
    """
    grid = GridSpec.coerce(grid_spec)
    i_lim = ratings.max_stator_current * math.sqrt(2.0)
    id_axis = symmetric_axis(i_lim, grid.n_id)
    iq_axis = symmetric_axis(i_lim, grid.n_iq)
    if design.topology is Topology.PMSM:
        if_axis = np.array([0.0])
    else:
        if_axis = np.linspace(0.0, ratings.max_field_current, grid.n_if)
    npos = len(iq_axis) // 2
    iq_pos = iq_axis[npos:]

    D, Q, Fc = np.meshgrid(id_axis, iq_pos, if_axis, indexing="ij")
    network = build_reluctance_network(design)
    c = design.mmf_per_ampere
    sources = {"stator_d": c * D.ravel(), "stator_q": c * Q.ravel(), "field": design.field_turns * Fc.ravel()}
    try:
        sol = solve_network(network, sources)
    except SolverDivergence as exc:
        flat = exc.point if exc.point is not None else 0
        point = (float(D.ravel()[flat]), float(Q.ravel()[flat]), float(Fc.ravel()[flat]))
        raise SolverDivergence(f"flux map diverged at (i_d, i_q, i_f) = {point}: {exc}",
                               residual=exc.residual, point=point) from None

    half_shape = D.shape
    region = region_flux_densities(network, sol.fluxes)
    nlt = design.linkage_turns
    psi_d_h = (nlt * sol.fluxes[:, network.branch_index("tooth_d")]).reshape(half_shape)
    psi_q_h = (nlt * sol.fluxes[:, network.branch_index("tooth_q")]).reshape(half_shape)

    def mirror(half, odd):
        neg = half[:, :0:-1, :]
        return np.concatenate([-neg if odd else neg, half], axis=1)

    psi_q_h[:, 0, :] = 0.0  # exactly odd at i_q = 0
    arrays = {
        "psi_d": mirror(psi_d_h, False),
        "psi_q": mirror(psi_q_h, True),
    }
    for name in ("b_tooth", "b_yoke", "b_rotor"):
        arrays[name] = mirror(region[name].reshape(half_shape), False)
    meta = {"design": design.name, "grid": [grid.n_id, grid.n_iq, grid.n_if],
            "max_iterations": int(sol.iterations)}
    return FluxLinkageMap(id_axis, iq_axis, if_axis, pole_pairs=design.pole_pairs,
                          topology=design.topology.value, meta=meta, **arrays)


def region_flux_densities(network, fluxes):
    """Peak flux density magnitude per core region from branch fluxes."""
    def mag(kind):
        a = network.branch_index(f"{kind}_d")
        b = network.branch_index(f"{kind}_q")
        ba, bb = network.branches[a], network.branches[b]
        return np.hypot(fluxes[:, a] / ba.area, fluxes[:, b] / bb.area)

    return {
        "b_tooth": mag("tooth"),
        "b_yoke": mag("stator_yoke"),
        "b_rotor": np.maximum(mag("rotor_pole"), mag("rotor_yoke")),
    }


def torque(fmap, pole_pairs, i_d, i_q, i_f):
    """Electromagnetic torque 1.5 p (psi_d i_q - psi_q i_d) in N*m."""
    psi_d, psi_q = fmap.flux_linkage(i_d, i_q, i_f)
    return 1.5 * pole_pairs * (psi_d * np.asarray(i_q) - psi_q * np.asarray(i_d))


def steady_voltage(fmap, i_d, i_q, i_f, speed_elec, r_s):
    """Steady-state dq voltages and the peak line-to-line voltage."""
    psi_d, psi_q = fmap.flux_linkage(i_d, i_q, i_f)
    v_d = r_s * np.asarray(i_d) - speed_elec * psi_q
    v_q = r_s * np.asarray(i_q) + speed_elec * psi_d
    v_ll = math.sqrt(3.0) * np.hypot(v_d, v_q)
    return v_d, v_q, v_ll


def voltage_feasible(v_peak_lineline, v_dc, modulation_limit=MODULATION_LIMIT):
    return v_peak_lineline <= modulation_limit * v_dc
