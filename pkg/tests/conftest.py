import numpy as np
import pytest

import matchaffinity as ma


@pytest.fixture(scope="session")
def basic_schema():
    return ma.TraitSchema(("age", "educ"),
                          (ma.CategoricalDef("race", ("w", "b", "h")),))


@pytest.fixture(scope="session")
def plain_schema():
    return ma.TraitSchema(("age", "educ"))


@pytest.fixture(scope="session")
def planted_model():
    return ma.AffinityModel(np.array([[0.8, -0.1], [-0.1, 0.3]]),
                            np.array([1.0]), sigma=1.0)


@pytest.fixture(scope="session")
def planted_sample(basic_schema, planted_model):
    law = ma.TraitLaw.gaussian(np.zeros(2), np.eye(2),
                               category_probs=[(0.5, 0.3, 0.2)])
    spec = ma.ScenarioSpec(basic_schema, law, planted_model,
                           n_support=40, n_couples=2000, seed=20260810)
    return ma.generate(spec)


@pytest.fixture(scope="session")
def planted_coupling(planted_sample):
    return ma.symmetrize(planted_sample)


@pytest.fixture(scope="session")
def planted_fit(planted_coupling, basic_schema):
    return ma.fit(planted_coupling, basic_schema)


@pytest.fixture(scope="session")
def planted_normalized(planted_fit, planted_coupling):
    return ma.normalize(planted_fit, planted_coupling)


def random_unipartite_coupling(rng, n_points=6, k=2, n_cats=0,
                               cardinality=2):
    """A small synthetic unipartite coupling with exact marginals."""
    cont = rng.standard_normal((n_points, k))
    labels = (rng.integers(0, cardinality, size=(n_points, n_cats))
              if n_cats else np.zeros((n_points, 0), dtype=np.int64))
    support = ma.ProfileArray(cont, labels)
    counts = rng.integers(1, 5, size=(n_points, n_points))
    counts = counts + counts.T
    weights = counts / counts.sum()
    weights = (weights + weights.T) / 2.0
    f = weights.sum(axis=1)
    moments = cont.T @ weights @ cont
    moments = (moments + moments.T) / 2.0
    freq = np.array([float(weights[labels[:, c:c + 1]
                                   == labels[:, c].reshape(1, -1)].sum())
                     for c in range(n_cats)])
    schema = ma.TraitSchema(
        tuple(f"t{i}" for i in range(k)),
        tuple(ma.CategoricalDef(f"c{j}", tuple(str(v) for v in range(cardinality)))
              for j in range(n_cats)))
    return ma.EmpiricalCoupling(ma.UNIPARTITE, schema, support, support,
                                f, f, weights, moments, freq,
                                n_couples=int(counts.sum()))


def random_bipartite_coupling(rng, mx=5, my=6, k=2, n_cats=0,
                              cardinality=2):
    cont_x = rng.standard_normal((mx, k))
    cont_y = rng.standard_normal((my, k))
    labels_x = (rng.integers(0, cardinality, size=(mx, n_cats))
                if n_cats else np.zeros((mx, 0), dtype=np.int64))
    labels_y = (rng.integers(0, cardinality, size=(my, n_cats))
                if n_cats else np.zeros((my, 0), dtype=np.int64))
    sx = ma.ProfileArray(cont_x, labels_x)
    sy = ma.ProfileArray(cont_y, labels_y)
    counts = rng.integers(1, 5, size=(mx, my))
    weights = counts / counts.sum()
    f = weights.sum(axis=1)
    g = weights.sum(axis=0)
    moments = cont_x.T @ weights @ cont_y
    freq = np.array([float(weights[labels_x[:, c:c + 1]
                                   == labels_y[:, c].reshape(1, -1)].sum())
                     for c in range(n_cats)])
    schema = ma.TraitSchema(
        tuple(f"t{i}" for i in range(k)),
        tuple(ma.CategoricalDef(f"c{j}", tuple(str(v) for v in range(cardinality)))
              for j in range(n_cats)))
    return ma.EmpiricalCoupling(ma.BIPARTITE, schema, sx, sy, f, g, weights,
                                moments, freq, n_couples=int(counts.sum()))
