"""Orthonormal temporal bases and the node-by-time canonical transform.

Storage convention: a temporal basis is a ``T x T`` matrix ``W`` whose row
``j`` holds basis function ``j`` sampled on the grid ``k / T``; the graph
basis ``E`` holds Laplacian eigenvectors as columns. The canonical
coefficients of a panel ``Y`` (nodes x time) are ``Z = E.T @ Y @ W.T`` and
the inverse is ``Y = E @ Z @ W``. Index 0 in storage corresponds to index 1
in the prior-variance formulas.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, ValidationError
from .graph import Spectrum

FRAMES = ("observation_Z", "parameter_theta")


@dataclass(frozen=True)
class TemporalBasis:
    matrix: np.ndarray
    kind: str = "haar"

    @property
    def T(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class CoefficientMatrix:
    values: np.ndarray
    frame: str = "observation_Z"

    def __post_init__(self):
        if self.frame not in FRAMES:
            raise ValidationError(f"unknown frame {self.frame!r}")
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2:
            raise ValidationError("coefficients must be a 2-D array")
        if not np.all(np.isfinite(v)):
            raise ValidationError("coefficients must be finite")
        object.__setattr__(self, "values", v)

    @property
    def shape(self):
        return self.values.shape

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)


def _is_pow2(T: int) -> bool:
    return T >= 1 and (T & (T - 1)) == 0


def haar_basis(T: int) -> TemporalBasis:
    """Orthonormal discrete Haar basis on ``T`` points, coarse to fine.

    Row 0 is the constant ``1/sqrt(T)``; row 1 the mother wavelet; then the
    two level-2 wavelets, and so on.
    """
    if not _is_pow2(T):
        raise ValidationError(
            f"Haar basis needs T to be a power of 2, got T={T}; pad the series "
            "or use kind='dct'"
        )
    H = np.ones((1, 1))
    while H.shape[0] < T:
        m = H.shape[0]
        top = np.kron(H, [1.0, 1.0])
        bottom = np.kron(np.eye(m), [1.0, -1.0])
        H = np.vstack([top, bottom]) / np.sqrt(2.0)
    H.setflags(write=False)
    return TemporalBasis(H, "haar")


def dct_basis(T: int) -> TemporalBasis:
    """Orthonormal DCT-II basis, ordered by frequency."""
    if T < 1:
        raise ValidationError("T must be positive")
    k = np.arange(T)
    M = np.cos(np.pi * (k[None, :] + 0.5) * k[:, None] / T)
    M[0] *= np.sqrt(1.0 / T)
    M[1:] *= np.sqrt(2.0 / T)
    M.setflags(write=False)
    return TemporalBasis(M, "dct")


def temporal_basis(T: int, kind: str = "haar") -> TemporalBasis:
    if kind == "haar":
        return haar_basis(T)
    if kind == "dct":
        return dct_basis(T)
    raise ValidationError(f"unknown basis kind {kind!r}")


def _check(shape, s: Spectrum, b: TemporalBasis):
    if len(shape) != 2 or shape != (s.n, b.T):
        raise DimensionMismatchError(f"array of shape {shape} does not match graph n={s.n}, T={b.T}")


def to_canonical(Y, s: Spectrum, b: TemporalBasis) -> CoefficientMatrix:
    Y = np.asarray(Y, dtype=float)
    _check(Y.shape, s, b)
    if not np.all(np.isfinite(Y)):
        raise ValidationError("panel must be fully observed; impute missing cells first")
    return CoefficientMatrix(s.eigenvectors.T @ Y @ b.matrix.T, "observation_Z")


def from_canonical(C, s: Spectrum, b: TemporalBasis) -> np.ndarray:
    C = np.asarray(C, dtype=float)
    _check(C.shape, s, b)
    return s.eigenvectors @ C @ b.matrix
