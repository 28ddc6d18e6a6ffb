from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .fluxmap import DEFAULT_GRID, build_flux_map, torque


class FluxMapModel(BaseEstimator):
    """Scikit-learn style wrapper: ``fit`` characterises a design, ``predict``
    returns ``(psi_d, psi_q)`` for rows of ``(i_d, i_q, i_f)``.
    """

    def __init__(self, grid=DEFAULT_GRID):
        self.grid = grid

    def fit(self, design, ratings):
        self.map_ = build_flux_map(design, ratings, self.grid)
        self.pole_pairs_ = design.pole_pairs
        return self

    def _currents(self, X):
        X = check_array(X, ensure_2d=True, dtype=float)
        if X.shape[1] == 2:
            X = np.column_stack([X, np.zeros(len(X))])
        if X.shape[1] != 3:
            raise ValueError("expected columns (i_d, i_q[, i_f])")
        return X

    def predict(self, X):
        check_is_fitted(self, "map_")
        X = self._currents(X)
        psi_d, psi_q = self.map_.flux_linkage(X[:, 0], X[:, 1], X[:, 2])
        return np.column_stack([psi_d, psi_q])

    def torque(self, X):
        check_is_fitted(self, "map_")
        X = self._currents(X)
        return torque(self.map_, self.pole_pairs_, X[:, 0], X[:, 1], X[:, 2])
