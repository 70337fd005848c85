"""Entropy-regularized matching equilibrium on a discrete support.

The equilibrium coupling maximizes  E_pi[Phi] - sigma * E(pi)  over all
couplings with the observed marginals, where E(pi) is mutual information
relative to the independent coupling:  sum_ij pi_ij ln(pi_ij / (f_i g_j)).
This discretization is invariant to sample size and to merging identical
support points, and is zero at independence, so a zero surplus yields a
social gain of exactly zero.

The solution has the Gibbs form  pi_ij = exp((Phi_ij - a_i - b_j) / sigma)
with dual potentials (a, b) fixed by the marginal constraints; unipartite
markets have a single potential a = b and a symmetric coupling.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import EmpiricalCoupling, UNIPARTITE, _frozen, same_category_masks
from .exceptions import ConvergenceError, DataError

MIN_SIGMA = 1e-6
DEFAULT_TOL = 1e-10
DEFAULT_MAX_SWEEPS = 10_000


@dataclass(frozen=True)
class AffinityModel:
    """Quadratic-plus-homogamy surplus parameters.

    ``cont`` is the K x K affinity matrix on standardized continuous traits,
    ``homogamy`` holds one same-category premium per categorical variable,
    and ``sigma`` scales the unobserved taste heterogeneity.
    """

    cont: np.ndarray
    homogamy: np.ndarray = None  # type: ignore[assignment]
    sigma: float = 1.0

    def __post_init__(self):
        cont = np.atleast_2d(np.asarray(self.cont, dtype=np.float64))
        if cont.shape[0] != cont.shape[1]:
            raise DataError(f"affinity matrix must be square, got {cont.shape}")
        object.__setattr__(self, "cont", _frozen(cont))
        hom = (np.zeros(0) if self.homogamy is None
               else np.atleast_1d(np.asarray(self.homogamy, dtype=np.float64)))
        object.__setattr__(self, "homogamy", _frozen(hom))
        if not np.isfinite(self.sigma) or self.sigma < MIN_SIGMA:
            raise DataError(
                f"sigma must be at least {MIN_SIGMA:g}, got {self.sigma!r}")
        object.__setattr__(self, "sigma", float(self.sigma))

    @property
    def n_traits(self) -> int:
        return self.cont.shape[0]

    def scaled(self, k: float) -> "AffinityModel":
        return AffinityModel(self.cont * k, self.homogamy * k, self.sigma * k)

    def is_symmetric(self, tol: float = 1e-12) -> bool:
        scale = max(1.0, float(np.abs(self.cont).max(initial=0.0)))
        return float(np.abs(self.cont - self.cont.T).max(initial=0.0)) <= tol * scale


@dataclass(frozen=True)
class EquilibriumMatching:
    """Solved coupling with its dual potentials and social-gain value."""

    weights: np.ndarray
    potential_a: np.ndarray
    potential_b: np.ndarray
    social_gain: float
    entropy: float
    iterations: int
    residual: float
    converged: bool

    def __post_init__(self):
        object.__setattr__(self, "weights", _frozen(self.weights))
        object.__setattr__(self, "potential_a", _frozen(self.potential_a))
        object.__setattr__(self, "potential_b", _frozen(self.potential_b))


def surplus_matrix(model: AffinityModel, coupling: EmpiricalCoupling) -> np.ndarray:
    """Evaluate the joint surplus at every support pair.

    phi[i, j] = x_i' A y_j + sum_c homogamy_c * 1{same category c}; the
    unipartite result is made symmetric bit-for-bit.
    """
    x = coupling.support_x.continuous
    y = coupling.support_y.continuous
    if model.cont.shape != (x.shape[1], y.shape[1]):
        raise DataError(
            f"affinity matrix is {model.cont.shape}, support traits need "
            f"({x.shape[1]}, {y.shape[1]})")
    if model.homogamy.shape[0] != coupling.support_x.labels.shape[1]:
        raise DataError("homogamy vector does not match the categorical count")
    phi = x @ model.cont @ y.T
    if model.homogamy.size:
        for lam, mask in zip(model.homogamy, same_category_masks(coupling)):
            phi = phi + lam * mask
    if coupling.kind == UNIPARTITE:
        phi = (phi + phi.T) / 2.0
    return phi


def _lse(scaled: np.ndarray, axis: int) -> np.ndarray:
    """log-sum-exp reduction, stable for large positive or negative entries."""
    mx = scaled.max(axis=axis)
    return mx + np.log(np.exp(scaled - np.expand_dims(mx, axis)).sum(axis=axis))


def sinkhorn(phi: np.ndarray, f: np.ndarray, g: np.ndarray, sigma: float, *,
             symmetric: bool = False, tol: float = DEFAULT_TOL,
             max_sweeps: int = DEFAULT_MAX_SWEEPS,
             warm_start: tuple[np.ndarray, np.ndarray] | None = None):
    """Alternating log-domain potential updates for the Gibbs coupling.

    Returns (pi, a, b, sweeps, residual, converged). The residual is the
    largest absolute row/column marginal error. In symmetric (unipartite)
    mode the two potentials are iterated freely; the unique optimizer over
    couplings with equal marginals is symmetric, so their gap settles to a
    gauge constant and the gauge-averaged potential, checked every sweep,
    delivers a bit-for-bit symmetric coupling.
    """
    if np.any(f <= 0) or np.any(g <= 0):
        raise DataError("marginals must be strictly positive")
    m = phi / sigma
    lf = np.log(f)
    lg = np.log(g)

    if warm_start is not None:
        a = np.array(warm_start[0], dtype=np.float64)
        b = np.array(warm_start[1], dtype=np.float64)
    else:
        a = np.zeros(phi.shape[0])
        b = np.zeros(phi.shape[1])

    pi = np.exp(m - (a[:, None] + b[None, :]) / sigma)
    residual = np.inf
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        b = sigma * _lse(m - a[:, None] / sigma, axis=0) - sigma * lg
        a = sigma * _lse(m - b[None, :] / sigma, axis=1) - sigma * lf
        if symmetric:
            mid = (a + b) / 2.0
            pi = np.exp(m - (mid[:, None] + mid[None, :]) / sigma)
            residual = float(np.abs(pi.sum(axis=1) - f).max())
        else:
            pi = np.exp(m - (a[:, None] + b[None, :]) / sigma)
            residual = float(max(np.abs(pi.sum(axis=1) - f).max(),
                                 np.abs(pi.sum(axis=0) - g).max()))
        if residual <= tol:
            break
    if symmetric:
        a = b = (a + b) / 2.0
    return pi, a, b, sweeps, residual, residual <= tol


def solve(model: AffinityModel, coupling: EmpiricalCoupling, *,
          tol: float = DEFAULT_TOL, max_sweeps: int = DEFAULT_MAX_SWEEPS,
          warm_start: tuple[np.ndarray, np.ndarray] | None = None,
          check: bool = True) -> EquilibriumMatching:
    """Solve the regularized matching problem on the coupling's support.

    Returns the unique maximizer of E_pi[Phi] - sigma * E(pi) over couplings
    with marginals (f, g), together with the potentials of its Gibbs form.
    Unipartite mode equalizes the potentials so the coupling is symmetric.
    Raises :class:`ConvergenceError` if the marginal residual is still above
    ``tol`` after ``max_sweeps`` sweeps (pass ``check=False`` to get the
    last iterate instead).
    """
    symmetric = coupling.kind == UNIPARTITE
    if symmetric and not model.is_symmetric():
        raise DataError("unipartite markets need a symmetric affinity matrix")
    phi = surplus_matrix(model, coupling)
    pi, a, b, sweeps, residual, ok = sinkhorn(
        phi, coupling.f, coupling.g, model.sigma, symmetric=symmetric,
        tol=tol, max_sweeps=max_sweeps, warm_start=warm_start)
    if check and not ok:
        raise ConvergenceError(
            f"equilibrium solver stalled at residual {residual:.3e} "
            f"after {sweeps} sweeps", residual=residual, iterations=sweeps)

    log_kernel = (phi - a[:, None] - b[None, :]) / model.sigma
    mutual_info = float(
        (pi * (log_kernel - np.log(coupling.f)[:, None]
               - np.log(coupling.g)[None, :])).sum())
    value = float((pi * phi).sum()) - model.sigma * mutual_info
    return EquilibriumMatching(pi, a, b if not symmetric else a, value,
                               mutual_info, sweeps, residual, ok)


def social_gain(model: AffinityModel, coupling: EmpiricalCoupling, *,
                tol: float = DEFAULT_TOL,
                max_sweeps: int = DEFAULT_MAX_SWEEPS) -> float:
    """Value of the matching problem, E_pi[Phi] - sigma * E(pi) at the
    optimum. Zero surplus gives exactly zero."""
    return solve(model, coupling, tol=tol, max_sweeps=max_sweeps).social_gain


def equilibrium_utilities(match: EquilibriumMatching,
                          surplus: np.ndarray) -> np.ndarray:
    """Systematic utility each head type obtains from each partner type.

    U[i, j] = (phi[i, j] + a_i - b_j) / 2, so U + U' reconstructs the joint
    surplus exactly on a unipartite support.
    """
    a = match.potential_a
    b = match.potential_b
    return (surplus + a[:, None] - b[None, :]) / 2.0
