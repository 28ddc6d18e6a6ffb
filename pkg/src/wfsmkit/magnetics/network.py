"""Lumped magnetic equivalent circuit and its nonlinear nodal solver.

One pole is modelled as two loops (d and q) that share the stator-yoke
ground node.  Each loop has the same six branch types::

    ground --stator_yoke--> B --tooth(+stator MMF)--> C --airgap--> D
      ^                     |                         ^              |
      |                     +------slot_leakage-------+              |
      +------------------rotor_yoke <-- E <--rotor_pole(+field)------+

Iron branches of the two loops that share physical iron (yoke, tooth,
rotor pole, rotor yoke) are coupled through an isotropic vector B-H law,
which is what produces cross-saturation.  Air branches are linear.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..exceptions import SolverDivergence
from ..materials import MU0, bh_lookup, bh_slope
from .design import Topology

AXES = ("d", "q")
BRANCH_TYPES = ("stator_yoke", "tooth", "slot_leakage", "airgap", "rotor_pole", "rotor_yoke")
COUPLED_TYPES = ("stator_yoke", "tooth", "rotor_pole", "rotor_yoke")
SOURCE_KEYS = ("stator_d", "stator_q", "field")


@dataclass(frozen=True)
class Branch:
    name: str
    axis: str
    kind: str
    tail: int
    head: int
    length: float
    area: float
    material: object = None  # None means air (mu0)
    source: str | None = None

    @property
    def linear_permeance(self):
        return MU0 * self.area / self.length


@dataclass(frozen=True)
class ReluctanceNetwork:
    nodes: tuple
    branches: tuple
    pairs: tuple  # (index_d, index_q) of coupled iron branches
    ground: int
    topology: Topology
    magnet_mmf: float = 0.0

    @property
    def n_free(self):
        return len(self.nodes) - 1

    def branch_index(self, name):
        for i, b in enumerate(self.branches):
            if b.name == name:
                return i
        raise KeyError(name)

    def incidence(self):
        """Signed node-branch matrix over free nodes: +1 at head, -1 at tail."""
        free = [i for i in range(len(self.nodes)) if i != self.ground]
        pos = {n: k for k, n in enumerate(free)}
        D = np.zeros((len(free), len(self.branches)))
        for j, b in enumerate(self.branches):
            if b.head in pos:
                D[pos[b.head], j] += 1.0
            if b.tail in pos:
                D[pos[b.tail], j] -= 1.0
        return D


def build_reluctance_network(design):
    """Construct the per-pole circuit for ``design`` (assumed already validated)."""
    d = design
    l_s = d.stator_magnetic_length
    l_r = d.rotor_magnetic_length
    sin_avg = 2 / math.pi  # peak-to-mean ratio of a sinusoidal pole flux

    yoke_len = math.pi * (d.stator_outer_diameter - d.stator_yoke_width) / (4 * d.pole_pairs)
    yoke_area = 2 * d.stator_yoke_width * l_s
    tooth_area = sin_avg * d.teeth_per_pole * d.tooth_width * l_s
    gap_area = sin_avg * d.pole_pitch * d.active_length
    g_eff = d.carter_factor * d.airgap_length
    gap_len = {"d": g_eff, "q": g_eff * d.q_gap_factor}
    if d.topology is Topology.PMSM:
        # Magnet recoil permeability adds to the d-axis gap.
        gap_len["d"] += d.magnet_thickness / d.magnet_mu_r

    # Rectangular-slot permeance per slot (plus tip term for semi-closed slots).
    perm = MU0 * d.active_length * d.slot_depth / (3 * d.slot_width)
    if d.tooth_tip.value == "semi_closed":
        perm += MU0 * d.active_length * d.tip_height / d.slot_opening_width
    leak_perm = perm * d.teeth_per_pole
    # Express as an equivalent air branch of unit length.
    leak_area = leak_perm / MU0

    rotor_pole_len = {"d": d.rotor_pole_height, "q": d.pole_pitch / 2}
    rotor_pole_area = {"d": d.rotor_pole_width * l_r, "q": 0.5 * d.rotor_pole_width * l_r}
    ry_len = math.pi * (d.shaft_diameter + d.rotor_yoke_width) / (4 * d.pole_pairs)
    ry_area = 2 * d.rotor_yoke_width * l_r

    nodes = ["Y"]
    branches = []
    for ax in AXES:
        base = len(nodes)
        nodes += [f"B{ax}", f"C{ax}", f"D{ax}", f"E{ax}"]
        nb, nc, nd, ne = base, base + 1, base + 2, base + 3
        field_src = "field" if ax == "d" else None
        branches += [
            Branch(f"stator_yoke_{ax}", ax, "stator_yoke", 0, nb, yoke_len, yoke_area, d.stator_material),
            Branch(f"tooth_{ax}", ax, "tooth", nb, nc, d.slot_depth, tooth_area, d.stator_material, f"stator_{ax}"),
            Branch(f"slot_leakage_{ax}", ax, "slot_leakage", nb, nc, 1.0, leak_area),
            Branch(f"airgap_{ax}", ax, "airgap", nc, nd, gap_len[ax], gap_area),
            Branch(f"rotor_pole_{ax}", ax, "rotor_pole", nd, ne, rotor_pole_len[ax], rotor_pole_area[ax], d.rotor_material, field_src),
            Branch(f"rotor_yoke_{ax}", ax, "rotor_yoke", ne, 0, ry_len, ry_area, d.rotor_material),
        ]
    names = [b.name for b in branches]
    pairs = tuple((names.index(f"{k}_d"), names.index(f"{k}_q")) for k in COUPLED_TYPES)
    magnet_mmf = 0.0
    if d.topology is Topology.PMSM:
        magnet_mmf = d.magnet_remanence * d.magnet_thickness / MU0
    return ReluctanceNetwork(tuple(nodes), tuple(branches), pairs, 0, d.topology, magnet_mmf)


def _branch_sources(network, mmf):
    """Per-branch MMF array of shape (n_samples, n_branches)."""
    n = None
    for v in mmf.values():
        n = np.size(v) if n is None else max(n, np.size(v))
    n = n or 1
    F = np.zeros((n, len(network.branches)))
    for j, b in enumerate(network.branches):
        if b.source is None:
            continue
        if b.source == "field" and network.topology is Topology.PMSM:
            F[:, j] = network.magnet_mmf
            continue
        F[:, j] = np.broadcast_to(np.asarray(mmf.get(b.source, 0.0), dtype=float), (n,))
    return F


def _constitutive(network, u):
    """Branch fluxes and d(flux)/d(mmf drop), batched over samples.

    ``u`` has shape (n, nb).  Returns ``phi`` (n, nb) and ``G`` (n, nb, nb).
    """
    n, nb = u.shape
    phi = np.empty_like(u)
    G = np.zeros((n, nb, nb))
    paired = set()
    for a, b in network.pairs:
        ba, bb = network.branches[a], network.branches[b]
        mat = ba.material
        ha = u[:, a] / ba.length
        hb = u[:, b] / bb.length
        h = np.hypot(ha, hb)
        s0 = mat.initial_permeability
        bmag = bh_lookup(mat, h)
        bprime = bh_slope(mat, h)
        nz = h > 0
        hs = np.where(nz, h, 1.0)
        g = np.where(nz, bmag / hs, s0)
        gp = np.where(nz, (bprime * hs - bmag) / hs**2, 0.0)
        phi[:, a] = ba.area * g * ha
        phi[:, b] = bb.area * g * hb
        cross = np.where(nz, gp * ha * hb / hs, 0.0)
        G[:, a, a] = ba.area / ba.length * (g + np.where(nz, gp * ha * ha / hs, 0.0))
        G[:, b, b] = bb.area / bb.length * (g + np.where(nz, gp * hb * hb / hs, 0.0))
        G[:, a, b] = ba.area / bb.length * cross
        G[:, b, a] = bb.area / ba.length * cross
        paired.update((a, b))
    for j, br in enumerate(network.branches):
        if j in paired:
            continue
        if br.material is None:
            phi[:, j] = br.linear_permeance * u[:, j]
            G[:, j, j] = br.linear_permeance
        else:
            h = u[:, j] / br.length
            phi[:, j] = br.area * np.sign(h) * bh_lookup(br.material, np.abs(h))
            G[:, j, j] = br.area / br.length * bh_slope(br.material, np.abs(h))
    return phi, G


@dataclass
class NetworkSolution:
    fluxes: np.ndarray  # (n, n_branches)
    potentials: np.ndarray  # (n, n_nodes), ground included
    residual: np.ndarray  # (n,) max |net flux| per node
    iterations: int


def solve_network(network, mmf_sources, tol=1e-9, max_iter=50):
    """Newton-Raphson on nodal flux balance.

    ``mmf_sources`` maps ``stator_d`` / ``stator_q`` / ``field`` to MMFs in
    ampere-turns (scalars or equal-length 1-D arrays; a batch is solved in
    one vectorised pass).  Converged when the net flux into every node is at
    most ``tol`` times the largest branch flux.
    """
    for k, v in mmf_sources.items():
        if k not in SOURCE_KEYS:
            raise KeyError(f"unknown MMF source {k!r}")
        if not np.all(np.isfinite(v)):
            raise ValueError("MMF sources must be finite")
    F = _branch_sources(network, mmf_sources)
    D = network.incidence()
    n = F.shape[0]
    nf = network.n_free
    P = np.zeros((n, nf))

    def evaluate(P):
        u = -(P @ D) + F
        phi, G = _constitutive(network, u)
        r = phi @ D.T
        return u, phi, G, r

    def converged(phi, r):
        scale = np.max(np.abs(phi), axis=1)
        return np.max(np.abs(r), axis=1) <= tol * scale

    u, phi, G, r = evaluate(P)
    done = converged(phi, r)
    it = 0
    while not np.all(done):
        if it >= max_iter:
            bad = np.flatnonzero(~done)
            res = float(np.max(np.abs(r[bad])))
            raise SolverDivergence(
                f"network solve did not converge in {max_iter} iterations (residual {res:.3e})",
                residual=res, point=int(bad[0]),
            )
        it += 1
        # J = dr/dP = -D G D^T
        J = -np.einsum("ib,nbc,jc->nij", D, G, D)
        act = ~done
        step = np.zeros_like(P)
        step[act] = -np.linalg.solve(J[act], r[act][..., None])[..., 0]
        norm0 = np.max(np.abs(r), axis=1)
        alpha = np.ones(n)
        P_try = P + step
        _, phi_t, G_t, r_t = evaluate(P_try)
        # Backtracking on the residual max-norm; piecewise-linear B-H makes
        # full steps overshoot across knots.
        for _ in range(12):
            worse = act & (np.max(np.abs(r_t), axis=1) > norm0) & ~converged(phi_t, r_t)
            if not np.any(worse):
                break
            alpha = np.where(worse, alpha * 0.5, alpha)
            P_try = P + alpha[:, None] * step
            _, phi_t, G_t, r_t = evaluate(P_try)
        P = np.where(act[:, None], P_try, P)
        u, phi, G, r = evaluate(P)
        done = converged(phi, r)

    potentials = np.zeros((n, len(network.nodes)))
    free = [i for i in range(len(network.nodes)) if i != network.ground]
    potentials[:, free] = P
    return NetworkSolution(phi, potentials, np.max(np.abs(r), axis=1), it)
