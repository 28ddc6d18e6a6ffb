"""Constrained NSGA-II with an external nondominated archive.

Objectives are minimised.  Constraint handling follows the usual
constraint-domination rule driven by a scalar penalty (0 = feasible).
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator


def dominates(a, b):
    """True where row ``a`` Pareto-dominates row ``b`` (minimisation)."""
    return np.all(a <= b, axis=-1) & np.any(a < b, axis=-1)


def nondominated_sort(F):
    """Front index per row (0 = first front)."""
    F = np.asarray(F, dtype=float)
    n = len(F)
    dom = dominates(F[:, None, :], F[None, :, :])  # dom[i, j]: i dominates j
    count = dom.sum(axis=0)
    rank = np.full(n, -1)
    front = np.flatnonzero(count == 0)
    r = 0
    while front.size:
        rank[front] = r
        count = count - dom[front].sum(axis=0)
        count[rank >= 0] = -1
        front = np.flatnonzero(count == 0)
        r += 1
    return rank


def crowding_distance(F):
    F = np.asarray(F, dtype=float)
    n, m = F.shape
    d = np.zeros(n)
    if n <= 2:
        d[:] = np.inf
        return d
    for k in range(m):
        order = np.argsort(F[:, k], kind="stable")
        span = F[order[-1], k] - F[order[0], k]
        d[order[0]] = d[order[-1]] = np.inf
        if span > 0:
            d[order[1:-1]] += (F[order[2:], k] - F[order[:-2], k]) / span
    return d


def constrained_rank(F, penalty):
    """Feasible rows ranked by nondomination; infeasible rows after them by penalty."""
    F = np.asarray(F, dtype=float)
    penalty = np.asarray(penalty, dtype=float)
    rank = np.empty(len(F), dtype=float)
    feas = penalty <= 0
    if np.any(feas):
        rank[feas] = nondominated_sort(F[feas])
    top = rank[feas].max() + 1 if np.any(feas) else 0
    inf_idx = np.flatnonzero(~feas)
    if inf_idx.size:
        # Ties in penalty share a rank.
        _, level = np.unique(penalty[inf_idx], return_inverse=True)
        rank[inf_idx] = top + level.ravel()
    return rank


def hypervolume_2d(F, ref):
    """Area dominated by the minimisation points ``F`` and bounded by ``ref``."""
    F = np.asarray(F, dtype=float).reshape(-1, 2)
    F = F[np.all(F < np.asarray(ref), axis=1)]
    if len(F) == 0:
        return 0.0
    F = F[np.lexsort((F[:, 1], F[:, 0]))]
    hv = 0.0
    best2 = ref[1]
    for f1, f2 in F:
        if f2 < best2:
            hv += (ref[0] - f1) * (best2 - f2)
            best2 = f2
    return float(hv)


def sbx_crossover(p1, p2, lower, upper, eta, prob, rng):
    """Bounded simulated binary crossover (one child pair per parent pair)."""
    c1, c2 = p1.copy(), p2.copy()
    n, dim = p1.shape
    do = rng.random(n) < prob
    per_var = rng.random((n, dim)) < 0.5
    u = rng.random((n, dim))
    for i in range(n):
        if not do[i]:
            continue
        for j in range(dim):
            if not per_var[i, j]:
                continue
            y1, y2 = sorted((p1[i, j], p2[i, j]))
            if y2 - y1 < 1e-14:
                continue
            lo, hi = lower[j], upper[j]
            beta = 1.0 + 2.0 * (y1 - lo) / (y2 - y1)
            alpha = 2.0 - beta ** (-(eta + 1))
            bq = _sbx_beta(u[i, j], alpha, eta)
            a = 0.5 * ((y1 + y2) - bq * (y2 - y1))
            beta = 1.0 + 2.0 * (hi - y2) / (y2 - y1)
            alpha = 2.0 - beta ** (-(eta + 1))
            bq = _sbx_beta(u[i, j], alpha, eta)
            b = 0.5 * ((y1 + y2) + bq * (y2 - y1))
            a, b = min(max(a, lo), hi), min(max(b, lo), hi)
            if p1[i, j] > p2[i, j]:
                a, b = b, a
            c1[i, j], c2[i, j] = a, b
    return c1, c2


def _sbx_beta(u, alpha, eta):
    if u <= 1.0 / alpha:
        return (u * alpha) ** (1.0 / (eta + 1))
    return (1.0 / (2.0 - u * alpha)) ** (1.0 / (eta + 1))


def polynomial_mutation(X, lower, upper, eta, prob, rng):
    X = X.copy()
    n, dim = X.shape
    hit = rng.random((n, dim)) < prob
    u = rng.random((n, dim))
    span = upper - lower
    for i, j in zip(*np.nonzero(hit)):
        y = X[i, j]
        d1 = (y - lower[j]) / span[j]
        d2 = (upper[j] - y) / span[j]
        p = 1.0 / (eta + 1)
        if u[i, j] < 0.5:
            v = 2 * u[i, j] + (1 - 2 * u[i, j]) * (1 - d1) ** (eta + 1)
            dq = v**p - 1
        else:
            v = 2 * (1 - u[i, j]) + 2 * (u[i, j] - 0.5) * (1 - d2) ** (eta + 1)
            dq = 1 - v**p
        X[i, j] = min(max(y + dq * span[j], lower[j]), upper[j])
    return X


class NSGA2(BaseEstimator):
    """NSGA-II over a box-bounded continuous space.

    ``fit(problem)`` takes a callable mapping an ``(n, d)`` array of
    decision vectors to ``(F, penalty)`` with ``F`` of shape ``(n, m)``
    (minimised) and ``penalty >= 0``.
    """

    def __init__(self, lower, upper, pop_size=40, n_generations=60, eta_c=15.0, eta_m=20.0,
                 p_crossover=0.9, p_mutation=None, seed=0, ref_point=None, callback=None):
        self.lower = lower
        self.upper = upper
        self.pop_size = pop_size
        self.n_generations = n_generations
        self.eta_c = eta_c
        self.eta_m = eta_m
        self.p_crossover = p_crossover
        self.p_mutation = p_mutation
        self.seed = seed
        self.ref_point = ref_point
        self.callback = callback

    def _tournament(self, rank, crowd, penalty, rng, n):
        a = rng.integers(0, len(rank), n)
        b = rng.integers(0, len(rank), n)
        # Lower rank wins (feasibility is folded into rank); then crowding.
        better_a = (rank[a] < rank[b]) | ((rank[a] == rank[b]) & (crowd[a] >= crowd[b]))
        return np.where(better_a, a, b)

    def _select(self, F, penalty):
        rank = constrained_rank(F, penalty)
        crowd = np.zeros(len(F))
        for r in np.unique(rank):
            idx = np.flatnonzero(rank == r)
            crowd[idx] = crowding_distance(F[idx]) if penalty[idx[0]] <= 0 else 0.0
        order = np.lexsort((-crowd, rank))
        return order[: self.pop_size], rank, crowd

    def _update_archive(self, X, F, penalty):
        feas = penalty <= 0
        if not np.any(feas):
            return
        X_all = np.vstack([self.archive_X_, X[feas]])
        F_all = np.vstack([self.archive_F_, F[feas]])
        keep = nondominated_sort(F_all) == 0
        X_all, F_all = X_all[keep], F_all[keep]
        # Drop exact duplicates in decision space, keeping first occurrence.
        _, first = np.unique(X_all, axis=0, return_index=True)
        first = np.sort(first)
        self.archive_X_, self.archive_F_ = X_all[first], F_all[first]

    def fit(self, problem, y=None):
        if self.pop_size < 2 or self.pop_size % 2:
            raise ValueError("pop_size must be even and >= 2")
        lower = np.asarray(self.lower, dtype=float)
        upper = np.asarray(self.upper, dtype=float)
        if lower.shape != upper.shape or np.any(upper <= lower):
            raise ValueError("bounds need lower < upper elementwise")
        dim = lower.size
        p_mut = self.p_mutation if self.p_mutation is not None else 1.0 / dim
        rng = np.random.default_rng(self.seed)

        X = lower + rng.random((self.pop_size, dim)) * (upper - lower)
        F, penalty = problem(X)
        F, penalty = np.asarray(F, dtype=float), np.asarray(penalty, dtype=float)
        m = F.shape[1]
        self.archive_X_ = np.zeros((0, dim))
        self.archive_F_ = np.zeros((0, m))
        self.hv_history_ = []
        self.n_evaluations_ = len(X)
        self._update_archive(X, F, penalty)
        self._record_hv()
        keep, rank, crowd = self._select(F, penalty)
        X, F, penalty, rank, crowd = X[keep], F[keep], penalty[keep], rank[keep], crowd[keep]

        for gen in range(self.n_generations):
            parents = self._tournament(rank, crowd, penalty, rng, self.pop_size)
            p1, p2 = X[parents[0::2]], X[parents[1::2]]
            c1, c2 = sbx_crossover(p1, p2, lower, upper, self.eta_c, self.p_crossover, rng)
            children = polynomial_mutation(np.vstack([c1, c2]), lower, upper, self.eta_m, p_mut, rng)
            Fc, pc = problem(children)
            Fc, pc = np.asarray(Fc, dtype=float), np.asarray(pc, dtype=float)
            self.n_evaluations_ += len(children)
            self._update_archive(children, Fc, pc)
            self._record_hv()
            X = np.vstack([X, children])
            F = np.vstack([F, Fc])
            penalty = np.concatenate([penalty, pc])
            keep, rank, crowd = self._select(F, penalty)
            X, F, penalty, rank, crowd = X[keep], F[keep], penalty[keep], rank[keep], crowd[keep]
            if self.callback is not None:
                self.callback(gen, X, F, penalty)

        self.population_X_, self.population_F_, self.population_penalty_ = X, F, penalty
        self.all_infeasible_ = len(self.archive_X_) == 0
        return self

    def _record_hv(self):
        if self.ref_point is None or self.archive_F_.shape[1] != 2:
            return
        self.hv_history_.append(hypervolume_2d(self.archive_F_, self.ref_point))

    @property
    def hypervolume_(self):
        return hypervolume_2d(self.archive_F_, self.ref_point)


def benchmark_problem(X):
    """Bi-objective test problem: (x1^2 + x2^2, (x1 - 2)^2 + x2^2).

    Pareto set x2 = 0, 0 <= x1 <= 2; with reference point (4, 4) the front
    dominates an area of 40/3.
    """
    X = np.asarray(X, dtype=float)
    f1 = X[:, 0] ** 2 + X[:, 1] ** 2
    f2 = (X[:, 0] - 2.0) ** 2 + X[:, 1] ** 2
    return np.column_stack([f1, f2]), np.zeros(len(X))


BENCHMARK_BOUNDS = (np.array([-2.0, -2.0]), np.array([4.0, 2.0]))
BENCHMARK_REF = (4.0, 4.0)
BENCHMARK_HV = 40.0 / 3.0
