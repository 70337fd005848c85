"""Affinity estimation by convex moment matching.

The estimator minimizes  W(A, lam) - <A, m_hat> - <lam, p_hat>  over the
affinity parameters with sigma fixed to 1, where W is the social gain of
the model coupling, m_hat the empirical cross-moment matrix and p_hat the
observed same-category frequencies. By the envelope theorem the gradient is
the gap between model and empirical moments, so the first-order condition
is exact moment matching. Unipartite markets are fit on the upper triangle,
which keeps every iterate symmetric.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from . import equilibrium
from .data import EmpiricalCoupling, UNIPARTITE, _frozen, same_category_masks
from .equilibrium import AffinityModel, EquilibriumMatching
from .exceptions import DataError, IdentificationError, NormalizationError
from .schema import TraitSchema

LAMBDA_BOUND = 50.0


@dataclass(frozen=True)
class FitOptions:
    """Solver knobs for the outer moment-matching loop and the inner
    equilibrium solves."""

    outer_tolerance: float = 1e-6
    max_outer_iterations: int = 400
    inner_tolerance: float = 1e-10
    inner_max_sweeps: int = equilibrium.DEFAULT_MAX_SWEEPS
    lambda_bound: float = LAMBDA_BOUND

    def __post_init__(self):
        if self.outer_tolerance <= 0 or self.inner_tolerance <= 0:
            raise DataError("tolerances must be positive")
        if self.lambda_bound <= 0:
            raise DataError("lambda bound must be positive")


@dataclass(frozen=True)
class FitResult:
    """Fitted affinity model (sigma = 1) with its equilibrium matching and
    the remaining moment residuals."""

    model: AffinityModel
    matching: EquilibriumMatching
    moment_residual: np.ndarray       # (K, K) continuous cross-moment gaps
    category_residual: np.ndarray     # per-categorical frequency gaps
    objective_value: float
    converged: bool
    iterations: int
    kind: str
    boundary_flags: tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "moment_residual",
                           _frozen(self.moment_residual))
        object.__setattr__(self, "category_residual",
                           _frozen(self.category_residual))
        object.__setattr__(self, "boundary_flags", tuple(self.boundary_flags))

    @property
    def residual_norm(self) -> float:
        parts = [np.abs(self.moment_residual).max(initial=0.0),
                 np.abs(self.category_residual).max(initial=0.0)]
        return float(max(parts))


@dataclass(frozen=True)
class NormalizedModel:
    """Affinity model rescaled so the social gain equals one; the applied
    factor doubles as the reported heterogeneity scale sigma."""

    model: AffinityModel
    scale_k: float
    sigma_report: float


def _check_identified(coupling: EmpiricalCoupling, schema: TraitSchema) -> None:
    if coupling.n_couples < 2:
        raise IdentificationError(
            f"moments degenerate: need at least 2 couples, "
            f"got {coupling.n_couples}")
    for c, cat in enumerate(schema.categoricals):
        seen = set(np.unique(coupling.support_x.labels[:, c]))
        seen |= set(np.unique(coupling.support_y.labels[:, c]))
        if len(seen) < 2:
            raise IdentificationError(
                f"categorical '{cat.name}' has a single observed label; "
                "its homogamy weight is unidentified")


def _pack(a_mat: np.ndarray, lam: np.ndarray, symmetric: bool) -> np.ndarray:
    k = a_mat.shape[0]
    if symmetric:
        iu = np.triu_indices(k)
        return np.concatenate([a_mat[iu], lam])
    return np.concatenate([a_mat.ravel(), lam])


def _unpack(theta: np.ndarray, k: int, c: int, symmetric: bool):
    if symmetric:
        n_a = k * (k + 1) // 2
        a_mat = np.zeros((k, k))
        iu = np.triu_indices(k)
        a_mat[iu] = theta[:n_a]
        a_mat = a_mat + np.triu(a_mat, 1).T
    else:
        n_a = k * k
        a_mat = theta[:n_a].reshape(k, k)
    lam = theta[n_a:n_a + c]
    return a_mat, lam


def _pack_gradient(g_mat: np.ndarray, g_lam: np.ndarray,
                   symmetric: bool) -> np.ndarray:
    if symmetric:
        k = g_mat.shape[0]
        sym = (g_mat + g_mat.T) / 2.0
        iu = np.triu_indices(k)
        # off-diagonal parameters enter the matrix twice, diagonal ones once
        grad = np.where(iu[0] == iu[1], 1.0, 2.0) * sym[iu]
        return np.concatenate([grad, g_lam])
    return np.concatenate([g_mat.ravel(), g_lam])


def _fit(coupling: EmpiricalCoupling, schema: TraitSchema, opts: FitOptions,
         symmetric: bool, start: AffinityModel | None) -> FitResult:
    _check_identified(coupling, schema)
    k = schema.n_continuous
    c = schema.n_categoricals
    m_hat = coupling.cross_moments
    p_hat = coupling.same_category_freq
    masks = same_category_masks(coupling)
    x = coupling.support_x.continuous
    y = coupling.support_y.continuous

    state: dict = {"potentials": None, "inner_tol": max(opts.inner_tolerance, 1e-8),
                   "last": None}

    def objective(theta: np.ndarray):
        a_mat, lam = _unpack(theta, k, c, symmetric)
        model = AffinityModel(a_mat, lam, sigma=1.0)
        match = equilibrium.solve(
            model, coupling, tol=state["inner_tol"],
            max_sweeps=opts.inner_max_sweeps,
            warm_start=state["potentials"], check=False)
        state["potentials"] = (match.potential_a, match.potential_b)
        pi = match.weights
        model_m = x.T @ pi @ y
        model_p = np.array([float(pi[mask].sum()) for mask in masks])
        value = (match.social_gain - float((a_mat * m_hat).sum())
                 - float(lam @ p_hat))
        grad = _pack_gradient(model_m - m_hat, model_p - p_hat, symmetric)
        state["last"] = (model, match, model_m, model_p)
        return value, grad

    if start is not None:
        theta0 = _pack(np.asarray(start.cont, dtype=np.float64),
                       np.asarray(start.homogamy, dtype=np.float64), symmetric)
    else:
        theta0 = _pack(np.zeros((k, k)), np.zeros(c), symmetric)
    n_a = k * (k + 1) // 2 if symmetric else k * k
    bounds = [(None, None)] * n_a + [(-opts.lambda_bound, opts.lambda_bound)] * c

    # loose first pass, then a polish with the inner solver tightened three
    # decades below the configured tolerance: the line search needs the
    # objective noise to sit well under the step-to-step change near the
    # optimum, so the flat-objective stop is disabled and only the gradient
    # (the moment residual) decides convergence
    res = minimize(objective, theta0, jac=True, method="L-BFGS-B",
                   bounds=bounds,
                   options={"maxiter": opts.max_outer_iterations,
                            "gtol": 1e-4, "ftol": 1e-14})
    state["inner_tol"] = max(1e-13, opts.inner_tolerance * 1e-3)
    polish = {"maxiter": opts.max_outer_iterations,
              "gtol": 0.5 * opts.outer_tolerance, "ftol": 0.0}
    res2 = minimize(objective, res.x, jac=True, method="L-BFGS-B",
                    bounds=bounds, options=polish)
    total_iterations = res.nit + res2.nit
    if float(np.abs(res2.jac).max(initial=0.0)) > 0.5 * opts.outer_tolerance:
        # a fresh start clears stale curvature after a failed line search
        res2 = minimize(objective, res2.x, jac=True, method="L-BFGS-B",
                        bounds=bounds, options=polish)
        total_iterations += res2.nit

    objective_value, _ = objective(res2.x)
    model, match, model_m, model_p = state["last"]

    flags = []
    for i, cat in enumerate(schema.categoricals):
        if opts.lambda_bound - abs(float(model.homogamy[i])) < 1e-9:
            flags.append(
                f"homogamy weight for '{cat.name}' hit the |{opts.lambda_bound:g}| "
                f"bound (observed frequency {p_hat[i]:.4f}); boundary estimate")

    moment_residual = model_m - m_hat
    category_residual = model_p - p_hat
    boundary = {i for i in range(c)
                if opts.lambda_bound - abs(float(model.homogamy[i])) < 1e-9}
    cat_ok = all(abs(category_residual[i]) <= opts.outer_tolerance
                 for i in range(c) if i not in boundary)
    converged = bool(
        np.abs(moment_residual).max(initial=0.0) <= opts.outer_tolerance
        and cat_ok)
    return FitResult(model, match, moment_residual, category_residual,
                     float(objective_value), converged,
                     int(total_iterations), coupling.kind, tuple(flags))


def fit(coupling: EmpiricalCoupling, schema: TraitSchema,
        opts: FitOptions | None = None, *,
        start: AffinityModel | None = None) -> FitResult:
    """Estimate a symmetric affinity model from a unipartite coupling.

    At the optimum the model coupling reproduces the empirical continuous
    cross-moments and, for each categorical, the observed same-category
    frequency, all within ``opts.outer_tolerance``.
    """
    if coupling.kind != UNIPARTITE:
        raise DataError("fit expects a unipartite coupling; "
                        "use fit_bipartite for two-sided markets")
    return _fit(coupling, schema, opts or FitOptions(), symmetric=True,
                start=start)


def fit_bipartite(coupling: EmpiricalCoupling, schema: TraitSchema,
                  opts: FitOptions | None = None, *,
                  start: AffinityModel | None = None) -> FitResult:
    """Estimate an unconstrained (possibly asymmetric) affinity model from a
    bipartite coupling; moment conditions are as in :func:`fit`."""
    if coupling.kind == UNIPARTITE:
        raise DataError("fit_bipartite expects a bipartite coupling")
    return _fit(coupling, schema, opts or FitOptions(), symmetric=False,
                start=start)


def normalize(fit_result: FitResult,
              coupling: EmpiricalCoupling) -> NormalizedModel:
    """Rescale the fitted model so its social gain equals one.

    The scale-invariance of the matching problem means the coupling is
    untouched; the applied factor 1 / W(A, 1) is reported as sigma.
    Raises :class:`NormalizationError` when the social gain is not positive
    (an essentially random market).
    """
    w = fit_result.matching.social_gain
    if not np.isfinite(w) or w <= 1e-12:
        raise NormalizationError(
            f"social gain is {w!r}; unit-surplus normalization undefined")
    k = 1.0 / w
    model = fit_result.model
    return NormalizedModel(AffinityModel(model.cont * k, model.homogamy * k,
                                         sigma=k),
                           scale_k=k, sigma_report=k)


def surplus_share(normalized: NormalizedModel, coupling: EmpiricalCoupling,
                  i: int, j: int) -> float:
    """Share of the average surplus explained by the interaction of
    continuous traits i and j (total surplus is normalized to one)."""
    return float(normalized.model.cont[i, j] * coupling.cross_moments[i, j])


def categorical_surplus_share(normalized: NormalizedModel,
                              coupling: EmpiricalCoupling, c: int) -> float:
    """Share of the average surplus explained by homogamy on categorical
    variable ``c``."""
    return float(normalized.model.homogamy[c]
                 * coupling.same_category_freq[c])


def systematic_share_total(normalized: NormalizedModel,
                           coupling: EmpiricalCoupling) -> float:
    """Sum of all continuous and categorical surplus shares; equals the
    average systematic surplus under the empirical coupling."""
    total = float((normalized.model.cont * coupling.cross_moments).sum())
    for c in range(normalized.model.homogamy.shape[0]):
        total += categorical_surplus_share(normalized, coupling, c)
    return total
