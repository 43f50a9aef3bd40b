"""Scikit-learn style front door for the operator fit.

Wraps the fit/step pipeline behind the usual fit/predict/transform surface so
the model composes with sklearn tooling (cloning, grid search, pipelines).
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import dmdfit, koopstep
from .dmdfit import FitOptions, SnapshotSet
from .statespace import LiftedState
from .errors import DimensionError


class KoopmanOperator(BaseEstimator, TransformerMixin):
    """Low-rank linear propagator fitted from snapshot trajectories.

    Parameters
    ----------
    energy_target : float
        Cumulative squared-singular-value energy retained by the rank policy.
    rank : int or None
        Fixed-rank override of the energy policy.
    clamp_unit_disk : bool
        Rescale eigenvalues with magnitude above one onto the unit circle.
    h : float
        Training step size used when fitting from a bare array.
    """

    def __init__(self, energy_target=dmdfit.DEFAULT_ENERGY, rank=None,
                 clamp_unit_disk=True, h=1.0):
        self.energy_target = energy_target
        self.rank = rank
        self.clamp_unit_disk = clamp_unit_disk
        self.h = h

    def fit(self, X, y=None):
        """Fit from a SnapshotSet or a (T+1, 6n) array of lifted states."""
        if isinstance(X, SnapshotSet):
            snaps = X
        else:
            X = np.asarray(X, dtype=np.float64)
            if X.ndim != 2:
                raise DimensionError(f"expected (n_frames, dim) array, got {X.shape}")
            snaps = SnapshotSet(states=tuple(LiftedState(row) for row in X), h=self.h)
        opts = FitOptions(energy_target=self.energy_target, rank=self.rank,
                          clamp_unit_disk=self.clamp_unit_disk)
        self.model_, self.report_ = dmdfit.fit(snaps, opts)
        self.rank_ = self.model_.rank
        return self

    def _rows(self, X):
        X = np.asarray(X, dtype=np.float64)
        return X.reshape(1, -1) if X.ndim == 1 else X

    def transform(self, X):
        """Reduced complex coordinates, one row per state."""
        check_is_fitted(self, "model_")
        return np.stack([dmdfit.project(self.model_, row) for row in self._rows(X)])

    def inverse_transform(self, Z):
        check_is_fitted(self, "model_")
        Z = np.asarray(Z, dtype=np.complex128)
        if Z.ndim == 1:
            Z = Z.reshape(1, -1)
        return np.real(Z @ self.model_.modes.T)

    def predict(self, X, n_steps=1):
        """Advance each state ``n_steps`` via eigenvalue exponentiation."""
        check_is_fitted(self, "model_")
        rows = self._rows(X)
        out = np.stack([
            np.asarray(koopstep.multi_step(self.model_, row, n_steps).values)
            for row in rows
        ])
        return out[0] if np.asarray(X).ndim == 1 else out

    def score(self, X, y=None):
        """Negative mean one-step relative residual over consecutive rows."""
        check_is_fitted(self, "model_")
        rows = self._rows(X)
        if rows.shape[0] < 2:
            raise DimensionError("need at least 2 consecutive states to score")
        pred = np.stack([
            np.asarray(koopstep.step(self.model_, row).values) for row in rows[:-1]
        ])
        scale = np.linalg.norm(rows[1:]) / np.sqrt(rows.shape[0] - 1)
        res = np.linalg.norm(pred - rows[1:], axis=1) / max(scale, 1e-300)
        return -float(res.mean())
