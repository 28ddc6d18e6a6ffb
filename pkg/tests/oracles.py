"""Independent brute-force references used by the tests."""

from __future__ import annotations

import math

import numpy as np

from wfsmkit.control import evaluate_points, torque_tolerance


def grid_oracle(model, t_req, speed_rpm, v_dc, objective="loss", n_dq=101, n_f=33):
    """Exhaustive (i_d, i_q, i_f) grid: best objective among feasible points
    whose torque lies within the solver tolerance of ``t_req``."""
    lim = model.i_lim
    i_d = np.linspace(-lim, lim, n_dq)
    i_q = np.linspace(0.0, lim, n_dq) if t_req >= 0 else np.linspace(-lim, 0.0, n_dq)
    i_f = np.linspace(0.0, model.if_max, n_f) if model.is_wfsm else np.array([0.0])
    D, Q, F = np.meshgrid(i_d, i_q, i_f, indexing="ij")
    D, Q, F = D.ravel(), Q.ravel(), F.ravel()
    inside = np.hypot(D, Q) <= lim
    D, Q, F = D[inside], Q[inside], F[inside]
    ev = evaluate_points(model, D, Q, F, speed_rpm, v_dc)
    ok = ev["feasible"] & (np.abs(ev["torque"] - t_req) <= torque_tolerance(t_req))
    if not np.any(ok):
        return math.inf
    obj = ev["loss_total"] if objective == "loss" else np.hypot(D, Q)
    return float(np.min(obj[ok]))


def sample_operating_points(model, v_dc, n, seed, speed_range=(300.0, 12000.0)):
    """Seeded random (torque, speed) points inside the machine's envelope."""
    from wfsmkit.control import max_torque_at_speed

    rng = np.random.default_rng(seed)
    points = []
    while len(points) < n:
        speed = float(rng.uniform(*speed_range))
        t_max = max_torque_at_speed(model, speed, v_dc)[0]
        if t_max <= 2.0:
            continue
        torque = float(rng.uniform(1.0, 0.95 * t_max))
        points.append((torque, speed))
    return points


def linear_inductances(design):
    """Closed-form solution of the all-linear circuit, per axis one loop.

    Each loop is yoke, (tooth || slot leakage), airgap, rotor pole and rotor
    yoke in series; the stator MMF sits in the tooth and the field MMF in the
    d-axis rotor pole.  Returns ``(L_d, L_q, M)`` with
    psi_d = L_d i_d + M i_f and psi_q = L_q i_q.
    """
    from wfsmkit.magnetics.network import build_reluctance_network
    from wfsmkit.materials import MU0

    net = build_reluctance_network(design)

    def perm(name):
        b = net.branches[net.branch_index(name)]
        mu = MU0 if b.material is None else b.material.initial_permeability
        return mu * b.area / b.length

    coeff = {}
    for ax in ("d", "q"):
        lt, ll = perm(f"tooth_{ax}"), perm(f"slot_leakage_{ax}")
        k = lt / (lt + ll)
        series = (1 / perm(f"stator_yoke_{ax}") + 1 / (lt + ll) + 1 / perm(f"airgap_{ax}")
                  + 1 / perm(f"rotor_pole_{ax}") + 1 / perm(f"rotor_yoke_{ax}"))
        coeff[ax] = (k, series, lt * ll / (lt + ll))
    n, c = design.linkage_turns, design.mmf_per_ampere
    k, r, par = coeff["d"]
    L_d = n * c * (k * k / r + par)
    M = n * design.field_turns * k / r
    k, r, par = coeff["q"]
    L_q = n * c * (k * k / r + par)
    return L_d, L_q, M


def linear_design(design, mu_r=1000.0):
    """Copy of ``design`` with ideal linear iron (open slots, as the grade is SMC-kind)."""
    from wfsmkit.magnetics.design import ToothTip
    from wfsmkit.materials import linear_material

    m = linear_material(mu_r)
    return design.with_(name=design.name + "_linear", stator_material=m, rotor_material=m,
                        tooth_tip=ToothTip.OPEN_SLOT)


def dominance_oracle(points):
    """O(n^2) mask of rows not dominated when maximising every column."""
    P = np.asarray(points, dtype=float)
    keep = np.ones(len(P), dtype=bool)
    for i in range(len(P)):
        for j in range(len(P)):
            if i != j and np.all(P[j] >= P[i]) and np.any(P[j] > P[i]):
                keep[i] = False
                break
    return keep
