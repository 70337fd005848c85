"""Scikit-learn style front door for the affinity estimator.

``AffinityEstimator`` wraps ingestion, fitting, normalization and saliency
into a fit/transform object with ``get_params``/``set_params``, so the
pipeline composes with the wider scikit-learn ecosystem (cloning, grid
search over solver options, pipelines ending in ``transform``).
"""
from __future__ import annotations

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from . import estimation, saliency
from .data import BIPARTITE, UNIPARTITE, MarketSample, coupling_from, ingest
from .estimation import FitOptions
from .schema import TraitSchema


class AffinityEstimator(BaseEstimator):
    """Estimate a matching market's affinity matrix from couple-level data.

    Parameters
    ----------
    schema : TraitSchema, optional
        Trait declaration; required unless ``fit`` receives a ready
        :class:`MarketSample`.
    kind : {"unipartite", "bipartite"}
        Market type: one pooled population with a symmetric coupling, or
        two distinct sides.
    rescale : bool
        If True (default), rescale the estimate so the social gain is one
        and report the implied heterogeneity scale as ``sigma_``.
    outer_tolerance, max_outer_iterations, inner_tolerance, inner_max_sweeps
        Solver options forwarded to the moment-matching fit.
    fill_values : mapping, optional
        Per-column fill values for missing cells, forwarded to ingestion.

    Attributes
    ----------
    affinity_ : ndarray of shape (K, K)
        Estimated affinity matrix (rescaled when ``rescale=True``).
    homogamy_ : ndarray of shape (C,)
        Same-category premiums per categorical variable.
    sigma_ : float
        Reported heterogeneity scale (1.0 when ``rescale=False``).
    result_ : FitResult
        Raw fit with matching, residuals and convergence flag.
    saliency_ : SaliencyDecomposition
        Orthogonal index decomposition of the continuous block.
    """

    def __init__(self, schema: TraitSchema | None = None,
                 kind: str = UNIPARTITE, rescale: bool = True,
                 outer_tolerance: float = 1e-6,
                 max_outer_iterations: int = 400,
                 inner_tolerance: float = 1e-10,
                 inner_max_sweeps: int = 10_000,
                 fill_values=None):
        self.schema = schema
        self.kind = kind
        self.rescale = rescale
        self.outer_tolerance = outer_tolerance
        self.max_outer_iterations = max_outer_iterations
        self.inner_tolerance = inner_tolerance
        self.inner_max_sweeps = inner_max_sweeps
        self.fill_values = fill_values

    def _options(self) -> FitOptions:
        return FitOptions(outer_tolerance=self.outer_tolerance,
                          max_outer_iterations=self.max_outer_iterations,
                          inner_tolerance=self.inner_tolerance,
                          inner_max_sweeps=self.inner_max_sweeps)

    def _as_sample(self, X) -> MarketSample:
        if isinstance(X, MarketSample):
            return X
        if self.schema is None:
            raise ValueError("schema is required when fitting from raw data")
        return ingest(X, self.schema, self.kind, fill_values=self.fill_values)

    def fit(self, X, y=None):
        """Fit from a MarketSample, a couples DataFrame or a CSV path."""
        sample = self._as_sample(X)
        coupling = coupling_from(sample)
        opts = self._options()
        if sample.kind == BIPARTITE:
            result = estimation.fit_bipartite(coupling, sample.schema, opts)
        else:
            result = estimation.fit(coupling, sample.schema, opts)

        self.sample_ = sample
        self.coupling_ = coupling
        self.result_ = result
        if self.rescale:
            normalized = estimation.normalize(result, coupling)
            self.normalized_ = normalized
            self.affinity_ = np.asarray(normalized.model.cont)
            self.homogamy_ = np.asarray(normalized.model.homogamy)
            self.sigma_ = normalized.sigma_report
            if sample.kind == UNIPARTITE:
                self.saliency_ = saliency.decompose(normalized, coupling)
            else:
                self.saliency_ = saliency.decompose_bipartite(result, coupling)
        else:
            self.normalized_ = None
            self.affinity_ = np.asarray(result.model.cont)
            self.homogamy_ = np.asarray(result.model.homogamy)
            self.sigma_ = 1.0
            if sample.kind == UNIPARTITE:
                unit = estimation.NormalizedModel(result.model, 1.0, 1.0)
                self.saliency_ = saliency.decompose(unit, coupling)
            else:
                self.saliency_ = saliency.decompose_bipartite(result, coupling)
        self.n_features_in_ = sample.schema.n_continuous
        return self

    def _check_fitted(self):
        if not hasattr(self, "result_"):
            raise NotFittedError(
                "this AffinityEstimator instance is not fitted yet")

    def transform(self, X):
        """Project individual-level trait vectors onto the fitted sorting
        indices.

        ``X`` is an array of shape (n, K) in raw units, or a DataFrame with
        one column per continuous trait. Values are standardized with the
        metadata recorded at fit time (head side for bipartite markets).
        """
        self._check_fitted()
        schema = self.sample_.schema
        if isinstance(X, pd.DataFrame):
            missing = [t for t in schema.continuous if t not in X.columns]
            if missing:
                raise ValueError(f"missing trait column(s): {missing}")
            values = X[list(schema.continuous)].to_numpy(dtype=np.float64)
        else:
            values = np.asarray(X, dtype=np.float64)
            if values.ndim == 1:
                values = values.reshape(1, -1)
        if values.shape[1] != schema.n_continuous:
            raise ValueError(
                f"expected {schema.n_continuous} trait columns, "
                f"got {values.shape[1]}")
        std = self.sample_.standardization
        z = (values - std.head_mean) / std.head_sd
        return z @ self.saliency_.loadings.T

    def fit_transform(self, X, y=None):
        self.fit(X, y)
        heads = self.sample_.head_traits @ self.saliency_.loadings.T
        return heads
