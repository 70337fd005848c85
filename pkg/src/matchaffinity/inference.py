"""Bootstrap standard errors and role-symmetry tests.

Resampling is over couples (the sampling unit), with re-standardization and
a full re-fit per replicate. Replicates draw from independently spawned
seed substreams, so results are reproducible for a fixed seed regardless of
execution order. Standard errors for a mirrored unipartite sample would
analytically need a sqrt(2) effective-sample-size correction; the couple
bootstrap resamples the n real couples directly, so no correction applies.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import estimation
from .data import (BIPARTITE, MarketSample, _frozen, coupling_from,
                   resample_couples)
from .equilibrium import AffinityModel
from .estimation import FitOptions, FitResult
from .exceptions import (DataError, IdentificationError, InferenceError,
                         MatchAffinityError, NormalizationError)
from .schema import TraitSchema

MAX_FAILURE_SHARE = 0.2


def parameter_names(schema: TraitSchema) -> tuple[str, ...]:
    """Flat parameter layout: affinity entries row-major, then one homogamy
    weight per categorical."""
    names = [f"A[{r},{c}]" for r in schema.continuous
             for c in schema.continuous]
    names += [f"lambda[{cat.name}]" for cat in schema.categoricals]
    return tuple(names)


def _params_of(model: AffinityModel) -> np.ndarray:
    return np.concatenate([np.asarray(model.cont).ravel(),
                           np.asarray(model.homogamy)])


@dataclass(frozen=True)
class BootstrapResult:
    """Replicate parameter draws with their dispersion summary."""

    replicates: np.ndarray        # (B_ok, P)
    standard_errors: np.ndarray   # (P,)
    covariance: np.ndarray        # (P, P)
    point: np.ndarray             # full-sample parameter vector
    names: tuple[str, ...]
    n_requested: int
    seed: int
    normalized: bool
    failures: tuple[str, ...] = field(default_factory=tuple)
    sigma_replicates: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "replicates", _frozen(self.replicates))
        object.__setattr__(self, "standard_errors",
                           _frozen(self.standard_errors))
        object.__setattr__(self, "covariance", _frozen(self.covariance))
        object.__setattr__(self, "point", _frozen(self.point))
        object.__setattr__(self, "failures", tuple(self.failures))
        if self.sigma_replicates is not None:
            object.__setattr__(self, "sigma_replicates",
                               _frozen(self.sigma_replicates))

    @property
    def n_completed(self) -> int:
        return self.replicates.shape[0]

    def se_of(self, name: str) -> float:
        return float(self.standard_errors[self.names.index(name)])


def bootstrap(sample: MarketSample, opts: FitOptions | None = None,
              n_replicates: int = 200, seed: int = 0, *,
              normalized: bool = False, threads: int = 1,
              point_fit: FitResult | None = None) -> BootstrapResult:
    """Couple-level bootstrap of the affinity fit.

    Each replicate resamples couples with replacement, re-standardizes,
    re-fits (warm-started at the full-sample estimate) and records the
    parameter vector; with ``normalized=True`` the unit-surplus rescaled
    parameters and the implied sigma are recorded instead. Replicates whose
    fit fails are excluded and reported; more than 20% failures aborts.
    """
    if n_replicates < 2:
        raise InferenceError("need at least 2 bootstrap replicates")
    opts = opts or FitOptions()
    schema = sample.schema
    fitter = (estimation.fit_bipartite if sample.kind == BIPARTITE
              else estimation.fit)

    coupling = coupling_from(sample)
    full = point_fit if point_fit is not None else fitter(coupling, schema, opts)
    if normalized:
        full_norm = estimation.normalize(full, coupling)
        point = _params_of(full_norm.model)
    else:
        point = _params_of(full.model)

    n = sample.n_couples
    children = np.random.SeedSequence(seed).spawn(n_replicates)

    def one(r: int):
        rng = np.random.default_rng(children[r])
        idx = rng.integers(0, n, size=n)
        try:
            s_r = resample_couples(sample, idx)
            c_r = coupling_from(s_r)
            f_r = fitter(c_r, schema, opts, start=full.model)
            if normalized:
                n_r = estimation.normalize(f_r, c_r)
                return r, _params_of(n_r.model), n_r.sigma_report, None
            return r, _params_of(f_r.model), None, None
        except (DataError, IdentificationError, NormalizationError) as exc:
            return r, None, None, f"replicate {r}: {exc}"

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(one, range(n_replicates)))
    else:
        outcomes = [one(r) for r in range(n_replicates)]
    outcomes.sort(key=lambda t: t[0])

    params, sigmas, failures = [], [], []
    for _, vec, sig, err in outcomes:
        if err is not None:
            failures.append(err)
        else:
            params.append(vec)
            if sig is not None:
                sigmas.append(sig)

    if len(failures) > MAX_FAILURE_SHARE * n_replicates:
        raise InferenceError(
            f"{len(failures)} of {n_replicates} bootstrap replicates failed; "
            "aborting (first failure: " + failures[0] + ")")
    if len(params) < 2:
        raise InferenceError("fewer than 2 bootstrap replicates completed")

    reps = np.vstack(params)
    se = reps.std(axis=0, ddof=1)
    centered = reps - reps.mean(axis=0)
    cov = centered.T @ centered / (reps.shape[0] - 1)
    cov = (cov + cov.T) / 2.0
    return BootstrapResult(
        reps, se, cov, point, parameter_names(schema), n_replicates, seed,
        normalized, tuple(failures),
        sigma_replicates=np.asarray(sigmas) if normalized else None)


@dataclass(frozen=True)
class SymmetryTest:
    """Pairwise tests of off-diagonal affinity symmetry.

    The statistic for pair (i, j) is the studentized difference
    A[i,j] - A[j,i]; mirrored pairs carry opposite signs. Pairs whose
    bootstrap variance is degenerate get a NaN p-value and a diagnostic.
    """

    pairs: tuple[tuple[int, int], ...]
    statistics: np.ndarray
    p_values: np.ndarray
    diagnostics: tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple(map(tuple, self.pairs)))
        object.__setattr__(self, "statistics", _frozen(self.statistics))
        object.__setattr__(self, "p_values", _frozen(self.p_values))
        object.__setattr__(self, "diagnostics", tuple(self.diagnostics))

    def significant(self, level: float = 0.05):
        out = []
        for pair, stat, p in zip(self.pairs, self.statistics, self.p_values):
            if np.isfinite(p) and p < level:
                out.append((pair, float(stat), float(p)))
        return out


def test_symmetry(fit_result: FitResult,
                  boot: BootstrapResult) -> SymmetryTest:
    """Two-sided normal tests of A[i,j] = A[j,i] from a bipartite fit and a
    matching (raw-scale) bootstrap run."""
    if fit_result.kind != BIPARTITE:
        raise DataError("symmetry testing needs a bipartite fit")
    if boot.normalized:
        raise DataError("symmetry testing needs a raw-scale bootstrap "
                        "(normalized=False)")
    a_mat = np.asarray(fit_result.model.cont)
    k = a_mat.shape[0]
    if boot.covariance.shape[0] != k * k + fit_result.model.homogamy.shape[0]:
        raise DataError("bootstrap parameter layout does not match the fit")

    pairs, stats, pvals, notes = [], [], [], []
    for i in range(k):
        for j in range(k):
            if i == j:
                continue
            pij, pji = i * k + j, j * k + i
            diff = a_mat[i, j] - a_mat[j, i]
            var = (boot.covariance[pij, pij] + boot.covariance[pji, pji]
                   - 2.0 * boot.covariance[pij, pji])
            pairs.append((i, j))
            if var <= 1e-300:
                stats.append(np.nan)
                pvals.append(np.nan)
                notes.append(f"pair ({i},{j}): degenerate bootstrap variance; "
                             "p-value omitted")
                continue
            t = diff / math.sqrt(var)
            stats.append(t)
            pvals.append(math.erfc(abs(t) / math.sqrt(2.0)))
    return SymmetryTest(tuple(pairs), np.asarray(stats), np.asarray(pvals),
                        tuple(notes))
