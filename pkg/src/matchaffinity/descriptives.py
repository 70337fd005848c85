"""Sample means, partner correlations and homogamy rates.

Unipartite statistics are computed on the mirrored pair set, so swapping
head and partner in any subset of rows leaves every number unchanged. The
random-matching counterfactual for unipartite homogamy uses pooled category
shares with the unordered-pair convention: expected share p_r^2 on the
diagonal and 2 p_r p_s off it.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import BIPARTITE, UNIPARTITE, MarketSample, _frozen, destandardize
from .exceptions import DataError


@dataclass(frozen=True)
class HomogamyTable:
    """Observed-over-expected couple-type rates for one categorical.

    Unipartite tables are upper-triangular over unordered label pairs;
    bipartite tables are full head-by-partner matrices. Cells with an
    expected share of zero carry a NaN rate; raw counts are kept so small
    cells can be judged.
    """

    name: str
    row_labels: tuple[str, ...]
    col_labels: tuple[str, ...]
    rates: np.ndarray
    observed_counts: np.ndarray
    observed_share: np.ndarray
    expected_share: np.ndarray
    unordered: bool

    def __post_init__(self):
        object.__setattr__(self, "rates", _frozen(self.rates))
        object.__setattr__(self, "observed_counts",
                           _frozen(self.observed_counts, dtype=np.int64))
        object.__setattr__(self, "observed_share", _frozen(self.observed_share))
        object.__setattr__(self, "expected_share", _frozen(self.expected_share))


@dataclass(frozen=True)
class DescriptiveReport:
    """Counts, raw-unit means, partner correlations and homogamy tables."""

    counts: dict[str, int]
    means: dict[str, dict[str, float]]
    correlations: dict[str, float]
    homogamy: dict[str, HomogamyTable] = field(default_factory=dict)


def correlations(sample: MarketSample) -> dict[str, float]:
    """Pearson correlation between partners, per continuous trait.

    Unipartite correlations use both orders of every couple so the value is
    invariant to how the survey labeled the members. A zero-variance side
    yields NaN (reported as missing).
    """
    out: dict[str, float] = {}
    head, partner = sample.head_traits, sample.partner_traits
    if sample.kind == UNIPARTITE:
        a = np.vstack([head, partner])
        b = np.vstack([partner, head])
    else:
        a, b = head, partner
    for t, trait in enumerate(sample.schema.continuous):
        xa, xb = a[:, t], b[:, t]
        sa, sb = xa.std(), xb.std()
        if sa <= 0 or sb <= 0:
            out[trait] = float("nan")
            continue
        out[trait] = float(((xa - xa.mean()) * (xb - xb.mean())).mean()
                           / (sa * sb))
    return out


def homogamy_rates(sample: MarketSample, categorical: str) -> HomogamyTable:
    """Observed couple-type shares over their random-matching expectation."""
    names = sample.schema.categorical_names
    if categorical not in names:
        raise DataError(f"unknown categorical '{categorical}'")
    c = names.index(categorical)
    cat = sample.schema.categoricals[c]
    r = cat.cardinality
    n = sample.n_couples
    h = sample.head_labels[:, c]
    p = sample.partner_labels[:, c]

    if sample.kind == UNIPARTITE:
        pooled = np.concatenate([h, p])
        shares = np.bincount(pooled, minlength=r) / float(2 * n)
        counts = np.zeros((r, r), dtype=np.int64)
        lo, hi = np.minimum(h, p), np.maximum(h, p)
        np.add.at(counts, (lo, hi), 1)
        observed = counts / float(n)
        expected = np.zeros((r, r))
        for a in range(r):
            expected[a, a] = shares[a] ** 2
            for b in range(a + 1, r):
                expected[a, b] = 2.0 * shares[a] * shares[b]
        unordered = True
    else:
        head_shares = np.bincount(h, minlength=r) / float(n)
        partner_shares = np.bincount(p, minlength=r) / float(n)
        counts = np.zeros((r, r), dtype=np.int64)
        np.add.at(counts, (h, p), 1)
        observed = counts / float(n)
        expected = np.outer(head_shares, partner_shares)
        unordered = False

    with np.errstate(divide="ignore", invalid="ignore"):
        rates = np.where(expected > 0, observed / expected, np.nan)
    return HomogamyTable(categorical, cat.labels, cat.labels, rates, counts,
                         observed, expected, unordered)


def sample_means(sample: MarketSample) -> dict[str, dict[str, float]]:
    """Raw-unit trait means per position (plus the pooled population for
    unipartite samples)."""
    head_raw, partner_raw = destandardize(sample)
    traits = sample.schema.continuous
    out = {
        "head": {t: float(head_raw[:, i].mean()) for i, t in enumerate(traits)},
        "partner": {t: float(partner_raw[:, i].mean())
                    for i, t in enumerate(traits)},
    }
    if sample.kind == UNIPARTITE:
        pooled = np.vstack([head_raw, partner_raw])
        out["pooled"] = {t: float(pooled[:, i].mean())
                         for i, t in enumerate(traits)}
    return out


def describe(sample: MarketSample) -> DescriptiveReport:
    """Full descriptive layer for one market."""
    counts = {"couples": sample.n_couples,
              "individuals": 2 * sample.n_couples}
    tables = {name: homogamy_rates(sample, name)
              for name in sample.schema.categorical_names}
    return DescriptiveReport(counts, sample_means(sample),
                             correlations(sample), tables)
