"""Synthetic markets with known parameters.

The generator draws a discrete support from a declared trait law, solves
the matching equilibrium with the planted affinity model on that support,
samples couples from the solved coupling and emits them in the same raw
CSV layout ingestion reads. Because the estimator itself operates on
empirical support, this gives an exact finite-dimensional ground truth for
recovery experiments.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .data import BIPARTITE, UNIPARTITE, MarketSample, _frozen, ingest
from .equilibrium import AffinityModel, sinkhorn, DEFAULT_MAX_SWEEPS, DEFAULT_TOL
from .exceptions import ConvergenceError, DataError
from .schema import CategoricalDef, TraitSchema


@dataclass(frozen=True)
class GaussianComponent:
    """One mixture component of the continuous-trait law."""

    weight: float
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", _frozen(np.atleast_1d(self.mean)))
        cov = np.atleast_2d(np.asarray(self.covariance, dtype=np.float64))
        object.__setattr__(self, "covariance", _frozen(cov))
        if self.weight < 0:
            raise DataError("component weights must be nonnegative")
        if cov.shape != (self.mean.size, self.mean.size):
            raise DataError("component covariance shape does not match mean")
        eigvals = np.linalg.eigvalsh((cov + cov.T) / 2.0)
        if eigvals.min(initial=0.0) < -1e-10:
            raise DataError("component covariance must be positive "
                            "semidefinite")


@dataclass(frozen=True)
class TraitLaw:
    """Gaussian-mixture law for continuous traits plus independent
    categorical label probabilities."""

    components: tuple[GaussianComponent, ...]
    category_probs: tuple[tuple[float, ...], ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        object.__setattr__(self, "category_probs",
                           tuple(tuple(float(p) for p in probs)
                                 for probs in self.category_probs))
        total = sum(c.weight for c in self.components)
        if abs(total - 1.0) > 1e-9:
            raise DataError(f"component weights sum to {total!r}, expected 1")
        for probs in self.category_probs:
            if abs(sum(probs) - 1.0) > 1e-9 or min(probs) < 0:
                raise DataError("category probabilities must be a simplex")

    @classmethod
    def gaussian(cls, mean, covariance,
                 category_probs=()) -> "TraitLaw":
        return cls((GaussianComponent(1.0, np.asarray(mean),
                                      np.asarray(covariance)),),
                   tuple(tuple(p) for p in category_probs))


@dataclass(frozen=True)
class ScenarioSpec:
    """A planted-truth market: support law, affinity model, sample size."""

    schema: TraitSchema
    law: TraitLaw
    model: AffinityModel
    n_support: int
    n_couples: int
    seed: int
    kind: str = UNIPARTITE
    max_sweeps: int = DEFAULT_MAX_SWEEPS
    tol: float = DEFAULT_TOL

    def __post_init__(self):
        if self.n_support < 2:
            raise DataError("need at least 2 support points")
        if self.n_couples < 2:
            raise DataError("need at least 2 couples")
        if self.kind not in (UNIPARTITE, BIPARTITE):
            raise DataError(f"unknown market kind '{self.kind}'")
        if len(self.law.category_probs) != self.schema.n_categoricals:
            raise DataError("law category probabilities do not match schema")
        for probs, cat in zip(self.law.category_probs, self.schema.categoricals):
            if len(probs) != cat.cardinality:
                raise DataError(
                    f"law probabilities for '{cat.name}' have wrong length")


def _factor(cov: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        w, v = np.linalg.eigh((cov + cov.T) / 2.0)
        return v * np.sqrt(np.clip(w, 0.0, None))


def _component_counts(weights: np.ndarray, n: int) -> np.ndarray:
    """Largest-remainder allocation of n support points to components.

    Exact proportions keep scarce types from being over- or under-supplied,
    which matters because market clearing forces any imbalance into
    cross-type matches regardless of the planted surplus.
    """
    raw = weights * n
    counts = np.floor(raw).astype(np.int64)
    short = n - int(counts.sum())
    if short > 0:
        order = np.argsort(-(raw - counts), kind="stable")
        counts[order[:short]] += 1
    return counts


def _draw_support(spec: ScenarioSpec, rng: np.random.Generator):
    law = spec.law
    k = spec.schema.n_continuous
    weights = np.array([c.weight for c in law.components])
    comp = np.repeat(np.arange(len(law.components)),
                     _component_counts(weights, spec.n_support))
    z = rng.standard_normal((spec.n_support, k))
    cont = np.empty((spec.n_support, k))
    for ci, component in enumerate(law.components):
        rows = comp == ci
        cont[rows] = component.mean + z[rows] @ _factor(component.covariance).T
    labels = np.empty((spec.n_support, spec.schema.n_categoricals),
                      dtype=np.int64)
    for c, probs in enumerate(law.category_probs):
        labels[:, c] = rng.choice(len(probs), size=spec.n_support,
                                  p=np.asarray(probs))
    return cont, labels


def _standardized(cont: np.ndarray) -> np.ndarray:
    sd = cont.std(axis=0)
    if np.any(sd <= 0):
        raise DataError("support draw has a zero-variance trait; "
                        "increase n_support or the trait dispersion")
    return (cont - cont.mean(axis=0)) / sd


def _planted_surplus(spec: ScenarioSpec, zx, labx, zy, laby) -> np.ndarray:
    phi = zx @ spec.model.cont @ zy.T
    for c in range(spec.schema.n_categoricals):
        lam = spec.model.homogamy[c]
        phi = phi + lam * (labx[:, c:c + 1] == laby[:, c].reshape(1, -1))
    if spec.kind == UNIPARTITE:
        phi = (phi + phi.T) / 2.0
    return phi


def generate_frame(spec: ScenarioSpec) -> pd.DataFrame:
    """Sample couples from the planted equilibrium as a raw-unit frame with
    ``head_``/``partner_`` columns (the CSV ingestion layout)."""
    rng = np.random.default_rng(spec.seed)
    cont_x, lab_x = _draw_support(spec, rng)
    if spec.kind == BIPARTITE:
        cont_y, lab_y = _draw_support(spec, rng)
    else:
        cont_y, lab_y = cont_x, lab_x

    zx = _standardized(cont_x)
    zy = zx if spec.kind == UNIPARTITE else _standardized(cont_y)
    phi = _planted_surplus(spec, zx, lab_x, zy, lab_y)
    f = np.full(len(zx), 1.0 / len(zx))
    g = np.full(len(zy), 1.0 / len(zy))
    pi, _, _, sweeps, residual, ok = sinkhorn(
        phi, f, g, spec.model.sigma, symmetric=spec.kind == UNIPARTITE,
        tol=spec.tol, max_sweeps=spec.max_sweeps)
    if not ok:
        raise ConvergenceError(
            f"planted equilibrium did not converge (residual {residual:.3e} "
            f"after {sweeps} sweeps)", residual=residual, iterations=sweeps)

    p = pi.ravel()
    cells = rng.choice(p.size, size=spec.n_couples, p=p / p.sum())
    i = cells // pi.shape[1]
    j = cells % pi.shape[1]
    if spec.kind == UNIPARTITE:
        # survey order carries no meaning: flip a fair coin per couple
        swap = rng.integers(0, 2, size=spec.n_couples).astype(bool)
        i, j = np.where(swap, j, i), np.where(swap, i, j)

    data: dict[str, object] = {}
    for t, trait in enumerate(spec.schema.continuous):
        data[f"head_{trait}"] = cont_x[i, t]
        data[f"partner_{trait}"] = cont_y[j, t]
    for c, cat in enumerate(spec.schema.categoricals):
        labels = np.asarray(cat.labels)
        data[f"head_{cat.name}"] = labels[lab_x[i, c]]
        data[f"partner_{cat.name}"] = labels[lab_y[j, c]]
    return pd.DataFrame(data)


def generate(spec: ScenarioSpec) -> MarketSample:
    """Generate a sample and run it through ingestion, so the result is
    exactly what re-reading the emitted CSV would produce."""
    return ingest(generate_frame(spec), spec.schema, spec.kind)


def scenario_truth(spec: ScenarioSpec) -> dict:
    """Sidecar payload recording the planted parameters and the seed."""
    return {
        "kind": spec.kind,
        "seed": spec.seed,
        "n_support": spec.n_support,
        "n_couples": spec.n_couples,
        "continuous": list(spec.schema.continuous),
        "categoricals": [{"name": c.name, "labels": list(c.labels)}
                         for c in spec.schema.categoricals],
        "affinity": np.asarray(spec.model.cont).tolist(),
        "homogamy": np.asarray(spec.model.homogamy).tolist(),
        "sigma": spec.model.sigma,
    }


# ---------------------------------------------------------------------------
# declarative (de)serialization
# ---------------------------------------------------------------------------

def scenario_to_dict(spec: ScenarioSpec) -> dict:
    return {
        "version": 1,
        "kind": spec.kind,
        "seed": spec.seed,
        "n_support": spec.n_support,
        "n_couples": spec.n_couples,
        "schema": {
            "continuous": list(spec.schema.continuous),
            "categoricals": [{"name": c.name, "labels": list(c.labels)}
                             for c in spec.schema.categoricals],
        },
        "law": {
            "components": [{"weight": c.weight, "mean": c.mean.tolist(),
                            "covariance": c.covariance.tolist()}
                           for c in spec.law.components],
            "category_probs": [list(p) for p in spec.law.category_probs],
        },
        "model": {
            "affinity": np.asarray(spec.model.cont).tolist(),
            "homogamy": np.asarray(spec.model.homogamy).tolist(),
            "sigma": spec.model.sigma,
        },
    }


def scenario_from_dict(payload: dict) -> ScenarioSpec:
    if payload.get("version") != 1:
        raise DataError("scenario spec must declare version 1")
    try:
        schema = TraitSchema(
            tuple(payload["schema"]["continuous"]),
            tuple(CategoricalDef(c["name"], tuple(c["labels"]))
                  for c in payload["schema"].get("categoricals", ())))
        law = TraitLaw(
            tuple(GaussianComponent(c["weight"], np.asarray(c["mean"]),
                                    np.asarray(c["covariance"]))
                  for c in payload["law"]["components"]),
            tuple(tuple(p) for p in payload["law"].get("category_probs", ())))
        model = AffinityModel(np.asarray(payload["model"]["affinity"]),
                              np.asarray(payload["model"].get("homogamy", [])),
                              float(payload["model"].get("sigma", 1.0)))
        return ScenarioSpec(schema, law, model,
                            int(payload["n_support"]),
                            int(payload["n_couples"]),
                            int(payload["seed"]),
                            kind=payload.get("kind", UNIPARTITE))
    except KeyError as exc:
        raise DataError(f"scenario spec is missing field {exc}") from exc


# ---------------------------------------------------------------------------
# pooled-market preset
# ---------------------------------------------------------------------------

POOLED_TRAITS = ("educ", "wage", "gender", "orientation")


def pooled_market_preset(seed: int, *,
                         gender_orientation_affinity: float = 8.0,
                         gender_gender_affinity: float = -0.4,
                         n_support: int = 80,
                         n_couples: int = 3000) -> ScenarioSpec:
    """One pooled market where partner gender is chosen inside the match.

    Individuals carry economic traits, a gender dummy and an orientation
    score (1 = maximally interested in women). The planted affinity is
    blockwise: an economic block, a positive gender-orientation affinity and
    a negative gender-gender term. As the gender-orientation affinity grows
    the market segments, with partner gender pinned down by own orientation.
    Parameter magnitudes are demonstrative only.
    """
    schema = TraitSchema(POOLED_TRAITS)
    jitter = 0.03 ** 2
    econ = np.eye(2)

    def component(weight, gender, orientation):
        mean = np.array([0.0, 0.0, gender, orientation])
        cov = np.zeros((4, 4))
        cov[:2, :2] = econ
        cov[2, 2] = cov[3, 3] = jitter
        return GaussianComponent(weight, mean, cov)

    law = TraitLaw((
        component(0.45, 0.0, 1.0),   # men interested in women
        component(0.45, 1.0, 0.0),   # women interested in men
        component(0.05, 0.0, 0.0),   # men interested in men
        component(0.05, 1.0, 1.0),   # women interested in women
    ))
    a_go = float(gender_orientation_affinity)
    a_gg = float(gender_gender_affinity)
    affinity = np.array([
        [0.6, 0.1, 0.0, 0.0],
        [0.1, 0.3, 0.0, 0.0],
        [0.0, 0.0, a_gg, a_go],
        [0.0, 0.0, a_go, 0.1],
    ])
    model = AffinityModel(affinity, np.zeros(0), sigma=1.0)
    # the near-segmented equilibrium has a slow residual tail; 1e-7 is far
    # below the sampling error of any draw taken from it
    return ScenarioSpec(schema, law, model, n_support, n_couples, seed,
                        kind=UNIPARTITE, max_sweeps=50_000, tol=1e-7)


def mixed_orientation_share(frame: pd.DataFrame) -> float:
    """Fraction of sampled couples that pair someone with a partner of the
    gender they are not oriented toward (pooled-market preset layout)."""
    hg = frame["head_gender"].astype(float).round()
    ho = frame["head_orientation"].astype(float).round()
    pg = frame["partner_gender"].astype(float).round()
    po = frame["partner_orientation"].astype(float).round()
    consistent = (ho == pg) & (po == hg)
    return float(1.0 - consistent.mean())
