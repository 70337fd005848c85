"""Orthogonal sorting indices from the continuous affinity block.

A symmetric affinity matrix decomposes as A = U' diag(lam) U with
orthogonal loadings U; the transformed indices x~ = U x interact only
diagonally, each contributing the share lam_p * E[x~_p y~_p] of the average
surplus. Negative eigenvalues indicate substitutable indices and are kept
as-is. Categorical homogamy terms sit in their own block and are reported
as separate shares rather than entering the decomposition.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import EmpiricalCoupling, _frozen
from .estimation import FitResult, NormalizedModel
from .exceptions import DataError


@dataclass(frozen=True)
class SaliencyDecomposition:
    """Loadings, eigen/singular values and per-index surplus shares.

    ``loadings`` rows define the indices (x~ = loadings @ x); eigenvalues
    are stored in non-increasing order and ``report_order`` ranks indices by
    absolute surplus share for display. ``right_loadings`` is None for the
    symmetric decomposition and holds the partner-side loadings for the
    singular-value variant.
    """

    loadings: np.ndarray
    eigenvalues: np.ndarray
    index_shares: np.ndarray
    categorical_shares: np.ndarray
    report_order: np.ndarray
    right_loadings: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "loadings", _frozen(self.loadings))
        object.__setattr__(self, "eigenvalues", _frozen(self.eigenvalues))
        object.__setattr__(self, "index_shares", _frozen(self.index_shares))
        object.__setattr__(self, "categorical_shares",
                           _frozen(self.categorical_shares))
        object.__setattr__(self, "report_order",
                           _frozen(self.report_order, dtype=np.int64))
        if self.right_loadings is not None:
            object.__setattr__(self, "right_loadings",
                               _frozen(self.right_loadings))

    @property
    def systematic_total(self) -> float:
        return float(self.index_shares.sum() + self.categorical_shares.sum())


def _fix_signs(left: np.ndarray, right: np.ndarray | None = None):
    """Flip index signs so each loading row's largest-magnitude entry is
    positive (ties resolved to the lowest column)."""
    left = left.copy()
    right = None if right is None else right.copy()
    for p in range(left.shape[0]):
        j = int(np.argmax(np.abs(left[p])))
        if left[p, j] < 0:
            left[p] *= -1.0
            if right is not None:
                right[p] *= -1.0
    return left, right


def _categorical_shares(model, coupling: EmpiricalCoupling) -> np.ndarray:
    return np.asarray(model.homogamy) * coupling.same_category_freq


def decompose(normalized: NormalizedModel,
              coupling: EmpiricalCoupling) -> SaliencyDecomposition:
    """Eigendecompose the symmetric continuous affinity block.

    Raises :class:`DataError` on an asymmetric matrix; two-sided fits go
    through :func:`decompose_bipartite` instead.
    """
    model = normalized.model
    a_mat = np.asarray(model.cont)
    scale = max(1.0, float(np.abs(a_mat).max(initial=0.0)))
    if float(np.abs(a_mat - a_mat.T).max(initial=0.0)) > 1e-12 * scale:
        raise DataError("affinity matrix is not symmetric; "
                        "use decompose_bipartite")
    eigvals, eigvecs = np.linalg.eigh((a_mat + a_mat.T) / 2.0)
    order = np.argsort(eigvals)[::-1]          # non-increasing
    eigvals = eigvals[order]
    loadings = eigvecs[:, order].T
    loadings, _ = _fix_signs(loadings)

    m_hat = coupling.cross_moments
    shares = eigvals * np.einsum("pi,ij,pj->p", loadings, m_hat, loadings)
    cat_shares = _categorical_shares(model, coupling)
    report = np.argsort(-np.abs(shares), kind="stable")
    return SaliencyDecomposition(loadings, eigvals, shares, cat_shares, report)


def decompose_bipartite(fit_result: FitResult,
                        coupling: EmpiricalCoupling) -> SaliencyDecomposition:
    """Singular value decomposition of a (possibly asymmetric) affinity
    matrix, with separate head and partner loadings."""
    model = fit_result.model
    u, s, vh = np.linalg.svd(np.asarray(model.cont))
    left = u.T                                  # rows map head traits
    right = vh                                  # rows map partner traits
    left, right = _fix_signs(left, right)

    m_hat = coupling.cross_moments
    shares = s * np.einsum("pi,ij,pj->p", left, m_hat, right)
    cat_shares = _categorical_shares(model, coupling)
    report = np.argsort(-np.abs(shares), kind="stable")
    return SaliencyDecomposition(left, s, shares, cat_shares, report,
                                 right_loadings=right)


def reconstruct(decomposition: SaliencyDecomposition) -> np.ndarray:
    """Rebuild the affinity block from the decomposition (a test hook)."""
    u = decomposition.loadings
    lam = decomposition.eigenvalues
    v = (decomposition.right_loadings
         if decomposition.right_loadings is not None else u)
    return u.T @ np.diag(lam) @ v
