"""Steady-state operating-point solvers.

Candidates are parametrised by current angle ``theta`` (from the +d axis)
and field current.  For each candidate the stator current magnitude that
delivers the torque target is found by bracketing plus false position, so
the torque constraint is met by construction and the search space is two
dimensional.  A coarse grid seeds a compass (pattern) search.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import DomainError, InfeasibleError
from .losses import LossBreakdown, LossParams, inverter_losses, machine_loss_arrays
from .magnetics.design import Topology
from .magnetics.fluxmap import MODULATION_LIMIT

RPM = 2 * math.pi / 60.0


@dataclass(frozen=True, eq=False)
class DriveModel:
    """Everything the solvers need about one machine + inverter."""

    design: object
    fmap: object
    ratings: object
    loss_params: LossParams = field(default_factory=LossParams)
    device: object = None
    modulation_limit: float = MODULATION_LIMIT

    @property
    def is_wfsm(self):
        return self.design.topology is Topology.WFSM

    @property
    def i_lim(self):
        return min(self.ratings.current_limit_peak, self.fmap.i_max_peak)

    @property
    def if_max(self):
        return self.fmap.if_max if self.is_wfsm else 0.0

    @property
    def r_s(self):
        return self.design.stator_resistance(self.loss_params.winding_temp)


@dataclass(frozen=True)
class SolverConfig:
    n_theta: int = 61
    n_field: int = 17
    n_magnitude: int = 21
    refine_halvings: int = 14
    n_starts: int = 4
    root_iterations: int = 40


DEFAULT_CONFIG = SolverConfig()


def torque_tolerance(t_req):
    return max(0.1, 1e-3 * abs(t_req))


@dataclass(frozen=True)
class ControlSolution:
    i_d: float
    i_q: float
    i_f: float
    v_d: float
    v_q: float
    torque_achieved: float
    losses: LossBreakdown
    shaft_power: float
    electrical_input_power: float
    efficiency: float
    speed_rpm: float = 0.0
    torque_request: float = 0.0
    strategy: str = "mtpl"

    @property
    def current_magnitude(self):
        return math.hypot(self.i_d, self.i_q)

    @property
    def i_rms(self):
        return self.current_magnitude / math.sqrt(2.0)


def evaluate_points(model, i_d, i_q, i_f, speed_rpm, v_dc):
    """Score arrays of operating points: torque, voltages, losses, feasibility."""
    fmap, design = model.fmap, model.design
    i_d = np.asarray(i_d, dtype=float)
    i_q = np.asarray(i_q, dtype=float)
    i_f = np.asarray(i_f, dtype=float)
    omega_m = np.abs(np.asarray(speed_rpm, dtype=float)) * RPM
    omega_e = design.pole_pairs * omega_m
    flux = fmap.interpolate(i_d, i_q, i_f)
    psi_d, psi_q = flux["psi_d"], flux["psi_q"]
    torque = 1.5 * design.pole_pairs * (psi_d * i_q - psi_q * i_d)
    r_s = model.r_s
    v_d = r_s * i_d - omega_e * psi_q
    v_q = r_s * i_q + omega_e * psi_d
    v_ll = math.sqrt(3.0) * np.hypot(v_d, v_q)
    losses, field_power = machine_loss_arrays(design, fmap, i_d, i_q, i_f, omega_m, model.loss_params, flux=flux)
    if model.device is not None:
        i_rms = np.hypot(i_d, i_q) / math.sqrt(2.0)
        inv = inverter_losses(i_rms, v_dc, model.device.f_sw, model.device)
        losses = losses.with_(inverter=np.asarray(inv) + np.zeros_like(np.asarray(losses.iron_stator)))
    feasible = (
        (v_ll <= model.modulation_limit * v_dc)
        & (np.hypot(i_d, i_q) <= model.i_lim * (1 + 1e-12))
        & (field_power <= model.ratings.max_field_power)
    )
    return {
        "torque": torque, "v_d": v_d, "v_q": v_q, "v_ll": v_ll,
        "losses": losses, "loss_total": losses.total, "feasible": feasible,
    }


def _torque_at(model, theta, i_f, mag):
    i_d = mag * np.cos(theta)
    i_q = mag * np.sin(theta)
    psi_d, psi_q = model.fmap.flux_linkage(i_d, i_q, i_f)
    return 1.5 * model.design.pole_pairs * (psi_d * i_q - psi_q * i_d)


def _crossings(model, theta, i_f, target, cfg):
    """Current magnitudes where the torque along each ray meets ``target``.

    At high speed torque can rise and fall along a ray, so every sign change
    on the magnitude grid is root-solved.  Returns ``(row, magnitude)``
    arrays; each root sits on the ``torque >= target`` side.  Rows are
    solved independently (converged rows are frozen), so a row's answer
    does not depend on what else is in the batch.
    """
    grid = np.linspace(0.0, model.i_lim, cfg.n_magnitude)
    T = _torque_at(model, theta[:, None], i_f[:, None], grid[None, :])
    pos = T >= target[:, None]
    row, j = np.nonzero(pos[:, :-1] != pos[:, 1:])
    exact = np.flatnonzero(pos[:, 0])
    if row.size == 0:
        return exact, np.zeros(exact.size)
    up = pos[row, j + 1]
    tgt = target[row]
    # p: endpoint with torque >= target, n: endpoint below it.
    p = np.where(up, grid[j + 1], grid[j])
    n = np.where(up, grid[j], grid[j + 1])
    f_p = np.where(up, T[row, j + 1], T[row, j]) - tgt
    f_n = np.where(up, T[row, j], T[row, j + 1]) - tgt
    th, fi = theta[row], i_f[row]
    side = np.zeros(row.size)
    tol_f = 1e-10 * np.maximum(np.abs(tgt), 1.0)
    tol_x = 1e-12 * model.i_lim
    live = np.arange(row.size)
    for _ in range(cfg.root_iterations):
        # Illinois false position on the brackets still open.
        a, b, fa, fb = p[live], n[live], f_p[live], f_n[live]
        x = np.clip(a - fa * (a - b) / (fa - fb), np.minimum(a, b), np.maximum(a, b))
        fx = _torque_at(model, th[live], fi[live], x) - tgt[live]
        hit = fx >= 0
        sd = side[live]
        # An endpoint kept twice in a row gets its residual halved.
        fb = np.where(hit & (sd == 1), fb / 2, fb)
        fa = np.where(~hit & (sd == -1), fa / 2, fa)
        p[live] = np.where(hit, x, a)
        f_p[live] = np.where(hit, fx, fa)
        n[live] = np.where(~hit, x, b)
        f_n[live] = np.where(~hit, fx, fb)
        side[live] = np.where(hit, 1, -1)
        done = (np.abs(f_p[live]) <= tol_f[live]) | (np.abs(p[live] - n[live]) <= tol_x)
        live = live[~done]
        if live.size == 0:
            break
    return np.concatenate([exact, row]), np.concatenate([np.zeros(exact.size), p])


def _score(model, theta, i_f, target, speed_rpm, v_dc, objective, cfg, with_voltage=False):
    """Best feasible objective per (theta, i_f) candidate on the torque contour.

    With ``with_voltage`` also returns the lowest line voltage found on the
    contour per row and the magnitude where it occurs.
    """
    theta, i_f, target, speed_rpm = (np.asarray(v, dtype=float) for v in (theta, i_f, target, speed_rpm))
    n = theta.size
    score = np.full(n, np.inf)
    mag = np.full(n, np.nan)
    v_low = np.full(n, np.inf)
    m_low = np.full(n, np.nan)
    row, m = _crossings(model, theta, i_f, target, cfg)
    if row.size:
        th = theta[row]
        ev = evaluate_points(model, m * np.cos(th), m * np.sin(th), i_f[row], speed_rpm[row], v_dc)
        obj = ev["loss_total"] if objective == "loss" else m
        obj = np.where(ev["feasible"], obj, np.inf)
        order = np.lexsort((m, obj, row))
        first = order[np.unique(row[order], return_index=True)[1]]
        score[row[first]] = obj[first]
        mag[row[first]] = m[first]
        if with_voltage:
            order = np.lexsort((m, ev["v_ll"], row))
            first = order[np.unique(row[order], return_index=True)[1]]
            v_low[row[first]] = ev["v_ll"][first]
            m_low[row[first]] = m[first]
    if with_voltage:
        return score, mag, v_low, m_low
    return score, mag


def _torque_voltage(model, i_d, i_q, i_f, speed_rpm):
    psi_d, psi_q = model.fmap.flux_linkage(i_d, i_q, i_f)
    p = model.design.pole_pairs
    w = p * speed_rpm * RPM
    r_s = model.r_s
    v_ll = math.sqrt(3.0) * np.hypot(r_s * i_d - w * psi_q, r_s * i_q + w * psi_d)
    return 1.5 * p * (psi_d * i_q - psi_q * i_d), v_ll


def _on_voltage_limit(model, i_f, target, speed_rpm, v_dc, i_d0, i_q0, iterations=40):
    """Newton solve for (i_d, i_q) meeting ``target`` torque exactly on the
    voltage limit, per row.  Returns ``(i_d, i_q, converged)``."""
    v_lim = model.modulation_limit * v_dc * (1.0 - 1e-9)
    lim = model.fmap.i_max_peak
    x = np.column_stack([np.clip(i_d0, -lim, lim), np.clip(i_q0, 0.0, lim)])
    n = len(x)
    h = 1e-4 * lim
    t_scale = np.maximum(np.abs(target), 1.0)
    conv = np.zeros(n, dtype=bool)
    alphas = np.array([1.0, 0.5, 0.25, 0.125, 1 / 16, 1 / 64])
    live = np.arange(n)

    def residual(idx, xd, xq):
        t, v = _torque_voltage(model, xd, xq, i_f[idx], speed_rpm[idx])
        return t - target[idx], v - v_lim

    for _ in range(iterations):
        xd, xq = x[live, 0], x[live, 1]
        k = live.size
        idx3 = np.tile(live, 3)
        hd = np.where(xd + h > lim, -h, h)
        hq = np.where(xq + h > lim, -h, h)
        f1, f2 = residual(idx3, np.concatenate([xd, xd + hd, xd]), np.concatenate([xq, xq, xq + hq]))
        F1, F2 = f1[:k], f2[:k]
        done = (np.abs(F1) <= 1e-10 * t_scale[live]) & (F2 <= 0) & (F2 >= -1e-10 * v_lim)
        conv[live[done]] = True
        keep = ~done
        live, xd, xq, F1, F2 = live[keep], xd[keep], xq[keep], F1[keep], F2[keep]
        if live.size == 0:
            break
        hd, hq = hd[keep], hq[keep]
        a = (f1[k:2 * k][keep] - F1) / hd
        b = (f1[2 * k:][keep] - F1) / hq
        c = (f2[k:2 * k][keep] - F2) / hd
        d = (f2[2 * k:][keep] - F2) / hq
        det = a * d - b * c
        det = np.where(det == 0, 1e-300, det)
        dd = -(d * F1 - b * F2) / det
        dq = -(-c * F1 + a * F2) / det
        # Damped step: take the first step length that lowers the scaled residual.
        na = len(alphas)
        cand_d = np.clip(xd[None, :] + alphas[:, None] * dd[None, :], -lim, lim)
        cand_q = np.clip(xq[None, :] + alphas[:, None] * dq[None, :], 0.0, lim)
        g1, g2 = residual(np.tile(live, na), cand_d.ravel(), cand_q.ravel())
        r_new = (np.abs(g1) / np.tile(t_scale[live], na) + np.abs(g2) / v_lim).reshape(na, -1)
        r_old = np.abs(F1) / t_scale[live] + np.abs(F2) / v_lim
        better = r_new < r_old[None, :]
        pick = np.where(better.any(axis=0), np.argmax(better, axis=0), np.argmin(r_new, axis=0))
        cols = np.arange(live.size)
        x[live, 0] = cand_d[pick, cols]
        x[live, 1] = cand_q[pick, cols]
    return x[:, 0], x[:, 1], conv


def _boundary_objective(model, i_d, i_q, i_f, conv, t_req, speed_rpm, v_dc, objective):
    ev = evaluate_points(model, i_d, i_q, i_f, speed_rpm, v_dc)
    in_band = np.abs(ev["torque"] - t_req) <= np.maximum(0.1, 1e-3 * np.abs(t_req))
    obj = ev["loss_total"] if objective == "loss" else np.hypot(i_d, i_q)
    return np.where(conv & ev["feasible"] & in_band, obj, np.inf)


def _voltage_limited(model, t_abs, target, speed_rpm, v_dc, seed_d, seed_q, objective, cfg):
    """Best point on the voltage limit per operating point: grid over i_f,
    then a 1-D halving search.  Returns ``(i_d, i_q, i_f, objective)``."""
    K = t_abs.size
    fields = np.linspace(0.0, model.if_max, cfg.n_field) if model.is_wfsm else np.array([0.0])
    nF = fields.size
    op = np.repeat(np.arange(K), nF)
    fi = np.tile(fields, K)
    xd, xq, conv = _on_voltage_limit(model, fi, target[op], speed_rpm[op], v_dc, seed_d[op], seed_q[op])
    obj = _boundary_objective(model, xd, xq, fi, conv, t_abs[op], speed_rpm[op], v_dc, objective)
    obj = obj.reshape(K, nF)
    j = np.lexsort((np.broadcast_to(fields, (K, nF)), obj), axis=-1)[:, 0]
    flat = np.arange(K) * nF + j
    best = obj[np.arange(K), j]
    bd, bq, bf = xd[flat], xq[flat], fi[flat]
    if nF > 1:
        step = np.full(K, fields[1] - fields[0])
        for _ in range(cfg.refine_halvings):
            live = np.flatnonzero(np.isfinite(best))
            if live.size == 0:
                break
            f_try = np.clip(np.concatenate([bf[live] - step[live], bf[live] + step[live]]), 0.0, model.if_max)
            o2 = np.tile(live, 2)
            td, tq, tc = _on_voltage_limit(model, f_try, target[o2], speed_rpm[o2], v_dc, bd[o2], bq[o2])
            to = _boundary_objective(model, td, tq, f_try, tc, t_abs[o2], speed_rpm[o2], v_dc, objective)
            to = to.reshape(2, -1)
            side = np.argmin(to, axis=0)
            cols = np.arange(live.size)
            fbest = to[side, cols]
            improve = fbest < best[live]
            k_imp = live[improve]
            flat = side[improve] * live.size + cols[improve]
            bd[k_imp], bq[k_imp], bf[k_imp] = td[flat], tq[flat], f_try[flat]
            best[k_imp] = fbest[improve]
            step[live[~improve]] /= 2
    return bd, bq, bf, best


def _pattern_search(fun, x0, lower, upper, step0, halvings):
    """Vectorised pattern search over independent rows; returns best points.

    ``fun(x, rows)`` scores points ``x`` belonging to rows ``rows``.  The
    full 3**dim stencil is polled so diagonal valleys are followed without
    zig-zagging; a row's step halves whenever no neighbour improves.
    """
    x = np.array(x0, dtype=float)
    k, dim = x.shape
    fx = fun(x, np.arange(k))
    step = np.broadcast_to(np.asarray(step0, dtype=float), (k, dim)).copy()
    dirs = np.array([d for d in itertools.product((-1, 0, 1), repeat=dim) if any(d)], dtype=float)
    nd = len(dirs)
    n_halved = np.zeros(k, dtype=int)
    for _ in range(halvings * 3):
        act = np.flatnonzero(n_halved < halvings)
        if act.size == 0:
            break
        trial = np.clip(x[act, None, :] + dirs[None, :, :] * step[act, None, :], lower, upper)
        ft = fun(trial.reshape(-1, dim), np.repeat(act, nd)).reshape(act.size, nd)
        best = np.argmin(ft, axis=1)
        fbest = ft[np.arange(act.size), best]
        improve = fbest < fx[act]
        x[act[improve]] = trial[np.flatnonzero(improve), best[improve]]
        fx[act[improve]] = fbest[improve]
        shrink = act[~improve]
        step[shrink] /= 2
        n_halved[shrink] += 1
    return x, fx


def _optimize_batch(model, t_abs, speed_rpm, v_dc, objective, cfg):
    """Minimise ``objective`` for torques ``t_abs >= 0``.

    Returns ``(i_d, i_q, i_f)`` arrays (motoring sign) with NaN where no
    feasible point exists.
    """
    t_abs = np.asarray(t_abs, dtype=float)
    speed_rpm = np.asarray(speed_rpm, dtype=float)
    K = t_abs.size
    target = t_abs - 0.999 * np.maximum(0.1, 1e-3 * t_abs)
    eps = 1e-6
    thetas = np.linspace(eps, math.pi - eps, cfg.n_theta)
    fields = np.linspace(0.0, model.if_max, cfg.n_field) if model.is_wfsm else np.array([0.0])
    TH, FI = (a.ravel() for a in np.meshgrid(thetas, fields, indexing="ij"))
    G = TH.size
    th_all = np.tile(TH, K)
    fi_all = np.tile(FI, K)
    score, mag, v_low, m_low = _score(model, th_all, fi_all, np.repeat(target, G), np.repeat(speed_rpm, G),
                                      v_dc, objective, cfg, with_voltage=True)
    score, mag = score.reshape(K, G), mag.reshape(K, G)
    order = np.lexsort((mag, np.broadcast_to(FI, (K, G)), score), axis=-1)[:, : cfg.n_starts]
    S = order.shape[1]
    start_ok = np.isfinite(np.take_along_axis(score, order, axis=1))
    owner = np.repeat(np.arange(K), S)
    x0 = np.column_stack([TH[order].ravel(), FI[order].ravel()])
    if not model.is_wfsm:
        x0 = x0[:, :1]
    lower = np.array([eps, 0.0])[: x0.shape[1]]
    upper = np.array([math.pi - eps, model.if_max])[: x0.shape[1]]
    step0 = np.array([thetas[1] - thetas[0], fields[1] - fields[0] if len(fields) > 1 else 0.0])[: x0.shape[1]]

    def fun(x, rows):
        fi = x[:, 1] if x.shape[1] > 1 else np.zeros(len(x))
        op = owner[rows]
        return _score(model, x[:, 0], fi, target[op], speed_rpm[op], v_dc, objective, cfg)[0]

    x, fx = _pattern_search(fun, x0, lower, upper, step0, cfg.refine_halvings)
    th = x[:, 0]
    fi = x[:, 1] if x.shape[1] > 1 else np.zeros(len(x))
    # Recompute magnitudes at the refined points for the tie-break.
    _, mags = _score(model, th, fi, target[owner], speed_rpm[owner], v_dc, objective, cfg)
    fx = np.where(start_ok.ravel(), fx, np.inf).reshape(K, S)
    pick = np.lexsort((mags.reshape(K, S), fi.reshape(K, S), fx), axis=-1)[:, 0]
    flat = np.arange(K) * S + pick
    best = fx[np.arange(K), pick]
    i_d = mags[flat] * np.cos(th[flat])
    i_q = mags[flat] * np.sin(th[flat])
    i_f = fi[flat].copy()

    # Near the envelope the feasible set is a thin sliver along the voltage
    # limit; follow that limit directly where it binds or nothing was found.
    v_now = np.full(K, np.inf)
    found = np.isfinite(best)
    if np.any(found):
        v_now[found] = _torque_voltage(model, i_d[found], i_q[found], i_f[found], speed_rpm[found])[1]
    bound = np.flatnonzero(~found | (v_now >= 0.98 * model.modulation_limit * v_dc))
    if bound.size:
        seed_d, seed_q = i_d[bound].copy(), i_q[bound].copy()
        lost = ~np.isfinite(best[bound])
        if np.any(lost):
            # Seed from the lowest-voltage contour point of the coarse scan.
            vg = v_low.reshape(K, G)[bound[lost]]
            mg = m_low.reshape(K, G)[bound[lost]]
            g = np.argmin(np.where(np.isfinite(mg), vg, np.inf), axis=1)
            m0 = np.nan_to_num(mg[np.arange(g.size), g])
            seed_d[lost] = m0 * np.cos(TH[g])
            seed_q[lost] = m0 * np.sin(TH[g])
        bd, bq, bf, bo = _voltage_limited(model, t_abs[bound], target[bound], speed_rpm[bound], v_dc,
                                          seed_d, seed_q, objective, cfg)
        use = bo < best[bound]
        k = bound[use]
        i_d[k], i_q[k], i_f[k], best[k] = bd[use], bq[use], bf[use], bo[use]
    ok = np.isfinite(best)
    nan = np.full(K, np.nan)
    return np.where(ok, i_d, nan), np.where(ok, i_q, nan), np.where(ok, i_f, nan)


def _no_load(model, speed_rpm, v_dc):
    """Cheapest zero-torque point: zero current, or pure -d current if the
    back-EMF alone breaks the voltage limit."""
    ev = evaluate_points(model, 0.0, 0.0, 0.0, speed_rpm, v_dc)
    if bool(ev["feasible"]):
        return 0.0, 0.0, 0.0
    lo, hi = 0.0, model.i_lim
    if not bool(evaluate_points(model, -hi, 0.0, 0.0, speed_rpm, v_dc)["feasible"]):
        return None
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if bool(evaluate_points(model, -mid, 0.0, 0.0, speed_rpm, v_dc)["feasible"]):
            hi = mid
        else:
            lo = mid
    return -hi, 0.0, 0.0


def _build_solution(model, i_d, i_q, i_f, speed_rpm, v_dc, t_req, strategy):
    ev = evaluate_points(model, i_d, i_q, i_f, speed_rpm, v_dc)
    losses = ev["losses"].take(())
    t_ach = float(ev["torque"])
    shaft = t_ach * speed_rpm * RPM
    p_in = shaft + losses.total
    if shaft > 0:
        eff = shaft / p_in
    elif shaft < 0:
        eff = p_in / shaft
    else:
        eff = float("nan")
    return ControlSolution(
        i_d=float(i_d), i_q=float(i_q), i_f=float(i_f), v_d=float(ev["v_d"]), v_q=float(ev["v_q"]),
        torque_achieved=t_ach, losses=losses, shaft_power=shaft, electrical_input_power=p_in,
        efficiency=eff, speed_rpm=float(speed_rpm), torque_request=float(t_req), strategy=strategy,
    )


_OBJECTIVES = {"mtpl": "loss", "mtpa": "current"}


def solve_many(model, torques, speeds_rpm, v_dc, strategy="mtpl", config=None, chunk=256):
    """Solve many operating points at once.

    Returns a list holding a :class:`ControlSolution` per point, or ``None``
    where the point is unreachable.  Each entry is bit-identical to solving
    that point on its own.
    """
    cfg = config or DEFAULT_CONFIG
    objective = _OBJECTIVES[strategy]
    torques = np.atleast_1d(np.asarray(torques, dtype=float))
    speeds = np.atleast_1d(np.asarray(speeds_rpm, dtype=float))
    torques, speeds = np.broadcast_arrays(torques, speeds)
    if np.any(speeds < 0):
        raise DomainError("speed must be >= 0")
    out = [None] * torques.size
    t_abs = np.abs(torques)
    search = []
    for k in range(torques.size):
        if t_abs[k] <= torque_tolerance(t_abs[k]):
            point = _no_load(model, speeds[k], v_dc)
            if point is not None:
                out[k] = _build_solution(model, *point, speeds[k], v_dc, torques[k], strategy)
                continue
        search.append(k)
    search = np.array(search, dtype=int)
    for lo in range(0, search.size, chunk):
        ks = search[lo: lo + chunk]
        i_d, i_q, i_f = _optimize_batch(model, t_abs[ks], speeds[ks], v_dc, objective, cfg)
        for k, d, q, f in zip(ks, i_d, i_q, i_f):
            if not np.isfinite(d):
                continue
            sign = -1.0 if torques[k] < 0 else 1.0  # generating: mirror i_q
            out[k] = _build_solution(model, d, sign * q, f, speeds[k], v_dc, torques[k], strategy)
    return out


def _solve(model, t_req, speed_rpm, v_dc, strategy, cfg):
    sol = solve_many(model, [t_req], [speed_rpm], v_dc, strategy, cfg)[0]
    if sol is None:
        t_max = max_torque_at_speed(model, speed_rpm, v_dc, cfg)[0]
        raise InfeasibleError(
            f"{abs(t_req):.1f} N*m at {speed_rpm:.0f} rpm is not reachable; max is {t_max:.1f} N*m",
            max_torque=t_max,
        )
    return sol


def mtpl_solve(model, t_req, speed_rpm, v_dc, config=None):
    """Maximum torque per loss: minimise total loss for the demanded torque."""
    return _solve(model, t_req, speed_rpm, v_dc, "mtpl", config)


def mtpa_solve(model, t_req, speed_rpm, v_dc, config=None):
    """Maximum torque per ampere: minimise stator current magnitude."""
    return _solve(model, t_req, speed_rpm, v_dc, "mtpa", config)


STRATEGIES = {"mtpl": mtpl_solve, "mtpa": mtpa_solve}


# -- envelope ------------------------------------------------------------------

def max_torque_many(model, speeds_rpm, v_dc, cfg=None):
    """Largest feasible torque at each speed.

    Returns ``(torque, currents)`` with ``currents`` of shape ``(n, 3)``
    holding ``(i_d, i_q, i_f)``.
    """
    cfg = cfg or DEFAULT_CONFIG
    speeds = np.atleast_1d(np.asarray(speeds_rpm, dtype=float))
    K = speeds.size
    eps = 1e-6
    thetas = np.linspace(eps, math.pi - eps, cfg.n_theta)
    fields = np.linspace(0.0, model.if_max, min(cfg.n_field, 9)) if model.is_wfsm else np.array([0.0])
    mags = np.linspace(model.i_lim / cfg.n_magnitude, model.i_lim, cfg.n_magnitude)
    X = np.column_stack([a.ravel() for a in np.meshgrid(thetas, fields, mags, indexing="ij")])
    G = len(X)

    def fun(x, rows):
        th, fi, mg = x[:, 0], x[:, 1], x[:, 2]
        ev = evaluate_points(model, mg * np.cos(th), mg * np.sin(th), fi, speeds[rows], v_dc)
        return np.where(ev["feasible"], -ev["torque"], np.inf)

    f = fun(np.tile(X, (K, 1)), np.repeat(np.arange(K), G)).reshape(K, G)
    keys = (np.broadcast_to(X[:, 2], (K, G)), np.broadcast_to(X[:, 1], (K, G)), f)
    order = np.lexsort(keys, axis=-1)[:, : cfg.n_starts]
    S = order.shape[1]
    lower = np.array([eps, 0.0, 0.0])
    upper = np.array([math.pi - eps, model.if_max, model.i_lim])
    step0 = np.array([thetas[1] - thetas[0], (fields[1] - fields[0]) if len(fields) > 1 else 0.0, mags[1] - mags[0]])
    owner = np.repeat(np.arange(K), S)
    x, fx = _pattern_search(lambda x, rows: fun(x, owner[rows]), X[order.ravel()], lower, upper,
                            step0, cfg.refine_halvings)
    fx = fx.reshape(K, S)
    best = np.argmin(fx, axis=1)
    torque = np.zeros(K)
    currents = np.zeros((K, 3))
    for k in range(K):
        v = fx[k, best[k]]
        if np.isfinite(v) and -v > 0:
            th, fi, mg = x[k * S + best[k]]
            torque[k] = -v
            currents[k] = (mg * math.cos(th), mg * math.sin(th), fi)
    return torque, currents


def max_torque_at_speed(model, speed_rpm, v_dc, cfg=None):
    """Largest feasible torque at one speed; returns ``(torque, (i_d, i_q, i_f))``."""
    torque, currents = max_torque_many(model, [speed_rpm], v_dc, cfg)
    return float(torque[0]), tuple(float(c) for c in currents[0])


@dataclass(frozen=True)
class Envelope:
    speed_rpm: np.ndarray
    torque: np.ndarray
    power: np.ndarray

    @property
    def peak_torque(self):
        return float(np.max(self.torque))

    @property
    def peak_power(self):
        return float(np.max(self.power))


def peak_envelope(model, v_dc, speed_axis, config=None):
    """Maximum torque and power versus speed (rpm)."""
    speeds = np.asarray(speed_axis, dtype=float)
    torques = max_torque_many(model, speeds, v_dc, config)[0]
    return Envelope(speeds, torques, torques * speeds * RPM)


# -- efficiency maps -----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class EfficiencyMap:
    torque_axis: np.ndarray
    speed_axis: np.ndarray
    efficiency: np.ndarray
    loss_total: np.ndarray
    i_f_choice: np.ndarray
    feasible: np.ndarray
    solutions: dict = field(default_factory=dict, repr=False)
    strategy: str = "mtpl"

    def to_rows(self):
        rows = []
        for (i, j), sol in sorted(self.solutions.items()):
            row = {"torque": float(self.torque_axis[i]), "speed_rpm": float(self.speed_axis[j]),
                   "efficiency": sol.efficiency, "i_f": sol.i_f}
            row.update({f"loss_{k}": v for k, v in sol.losses.as_dict().items()})
            rows.append(row)
        return rows

    def save(self, path):
        np.savez(path, torque_axis=self.torque_axis, speed_axis=self.speed_axis, efficiency=self.efficiency,
                 loss_total=self.loss_total, i_f_choice=self.i_f_choice, feasible=self.feasible,
                 meta=np.array(f'{{"strategy": "{self.strategy}", "axis_order": ["torque", "speed_rpm"]}}'))


def build_efficiency_map(model, strategy, torque_axis, speed_axis, v_dc, config=None):
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}")
    torque_axis = np.asarray(torque_axis, dtype=float)
    speed_axis = np.asarray(speed_axis, dtype=float)
    shape = (len(torque_axis), len(speed_axis))
    eff = np.full(shape, np.nan)
    loss = np.full(shape, np.nan)
    i_f = np.full(shape, np.nan)
    feasible = np.zeros(shape, dtype=bool)
    sols = {}
    T, S = np.meshgrid(torque_axis, speed_axis, indexing="ij")
    solved = solve_many(model, T.ravel(), S.ravel(), v_dc, strategy, config)
    for flat, sol in enumerate(solved):
        if sol is None:
            continue
        i, j = np.unravel_index(flat, shape)
        sols[(int(i), int(j))] = sol
        feasible[i, j] = True
        loss[i, j] = sol.losses.total
        i_f[i, j] = sol.i_f
        if sol.shaft_power != 0:
            eff[i, j] = sol.efficiency
    return EfficiencyMap(torque_axis, speed_axis, eff, loss, i_f, feasible, sols, strategy)


class OperatingPointController(BaseEstimator):
    """Scikit-learn style controller: ``fit`` takes a :class:`DriveModel`,
    ``predict`` maps rows of ``(torque, speed_rpm)`` to ``(i_d, i_q, i_f)``.
    """

    def __init__(self, strategy="mtpl", v_dc=800.0, config=None):
        self.strategy = strategy
        self.v_dc = v_dc
        self.config = config

    def fit(self, model, y=None):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        self.model_ = model
        return self

    def solve(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=float)
        sols = solve_many(self.model_, X[:, 0], X[:, 1], self.v_dc, self.strategy, self.config)
        for (t, s), sol in zip(X[:, :2], sols):
            if sol is None:
                raise InfeasibleError(f"{abs(t):.1f} N*m at {s:.0f} rpm is not reachable")
        return sols

    def predict(self, X):
        return np.array([[s.i_d, s.i_q, s.i_f] for s in self.solve(X)])

    def score_losses(self, X):
        return np.array([s.losses.total for s in self.solve(X)])
