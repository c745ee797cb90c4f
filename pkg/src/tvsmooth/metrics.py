"""Relative error metrics over off-diagonal entries."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import TvSmoothError

__all__ = ["ZeroDenominatorError", "ErrorRecord", "frob_rel", "two_inf_rel", "rel_errors",
           "two_inf_norm"]


class ZeroDenominatorError(TvSmoothError):
    module = "metrics"


@dataclass(frozen=True)
class ErrorRecord:
    t: float
    frob_rel: float
    two_inf_rel: float


def _offdiag(X: np.ndarray) -> np.ndarray:
    X = np.array(X, dtype=float, copy=True)
    np.fill_diagonal(X, 0.0)
    return X


def _check(P_hat, P_true):
    P_hat = np.asarray(P_hat, dtype=float)
    P_true = np.asarray(P_true, dtype=float)
    if P_hat.shape != P_true.shape or P_hat.ndim != 2:
        raise TvSmoothError(f"shape mismatch: {P_hat.shape} vs {P_true.shape}")
    return _offdiag(P_hat), _offdiag(P_true)


def two_inf_norm(X: np.ndarray) -> float:
    """Largest Euclidean row norm."""
    return float(np.max(np.linalg.norm(X, axis=1)))


def frob_rel(P_hat: np.ndarray, P_true: np.ndarray) -> float:
    """``||P_hat - P_true||_F / ||P_true||_F`` with diagonals excluded."""
    E, T = _check(P_hat, P_true)
    den = np.linalg.norm(T)
    if den == 0:
        raise ZeroDenominatorError("reference matrix is zero off the diagonal")
    return float(np.linalg.norm(E - T) / den)


def two_inf_rel(P_hat: np.ndarray, P_true: np.ndarray) -> float:
    """Relative L_{2,inf} error (max row norm) with diagonals excluded."""
    E, T = _check(P_hat, P_true)
    den = two_inf_norm(T)
    if den == 0:
        raise ZeroDenominatorError("reference matrix is zero off the diagonal")
    return two_inf_norm(E - T) / den


def rel_errors(P_hat: np.ndarray, P_true: np.ndarray, t: float = float("nan")) -> ErrorRecord:
    return ErrorRecord(float(t), frob_rel(P_hat, P_true), two_inf_rel(P_hat, P_true))
