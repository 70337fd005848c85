"""Couple-level data ingestion and empirical couplings.

CSV layout: one row per couple, header required, a ``head_<trait>`` and a
``partner_<trait>`` column for every trait in the schema. Categorical cells
hold label strings. All types built here are immutable after construction
and safe to share across threads.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np
import pandas as pd

from .exceptions import DataError
from .schema import IndividualProfile, TraitSchema

UNIPARTITE = "unipartite"
BIPARTITE = "bipartite"

_MISSING_TOKENS = {"", "nan", "na", "none", "null"}


def _frozen(arr: np.ndarray, dtype=np.float64) -> np.ndarray:
    out = np.ascontiguousarray(arr, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Standardization:
    """Per-trait raw-unit mean and standard deviation recorded at ingestion.

    Unipartite samples are standardized on the pool of both positions, so
    the head and partner arrays coincide; bipartite samples are standardized
    per side.
    """

    head_mean: np.ndarray
    head_sd: np.ndarray
    partner_mean: np.ndarray
    partner_sd: np.ndarray
    pooled: bool

    def __post_init__(self):
        for name in ("head_mean", "head_sd", "partner_mean", "partner_sd"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        if np.any(self.head_sd <= 0) or np.any(self.partner_sd <= 0):
            raise DataError("recorded standard deviations must be positive")


@dataclass(frozen=True)
class MarketSample:
    """Observed couples with standardized traits and encoding metadata."""

    schema: TraitSchema
    kind: str
    head_traits: np.ndarray      # (n, K) standardized
    partner_traits: np.ndarray   # (n, K) standardized
    head_labels: np.ndarray      # (n, C) label indices
    partner_labels: np.ndarray   # (n, C) label indices
    standardization: Standardization
    diagnostics: tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.kind not in (UNIPARTITE, BIPARTITE):
            raise DataError(f"unknown market kind '{self.kind}'")
        object.__setattr__(self, "head_traits", _frozen(self.head_traits))
        object.__setattr__(self, "partner_traits", _frozen(self.partner_traits))
        object.__setattr__(self, "head_labels",
                           _frozen(self.head_labels, dtype=np.int64))
        object.__setattr__(self, "partner_labels",
                           _frozen(self.partner_labels, dtype=np.int64))
        object.__setattr__(self, "diagnostics", tuple(self.diagnostics))
        n = self.head_traits.shape[0]
        if n < 2:
            raise DataError(f"need at least 2 couples, got {n}")
        k = self.schema.n_continuous
        if self.head_traits.shape != (n, k) or self.partner_traits.shape != (n, k):
            raise DataError("trait array shapes do not match the schema")
        # standardized traits must be centered with unit variance
        if self.kind == UNIPARTITE:
            pooled = np.vstack([self.head_traits, self.partner_traits])
            self._check_moments(pooled, "pooled")
        else:
            self._check_moments(self.head_traits, "head")
            self._check_moments(self.partner_traits, "partner")

    @staticmethod
    def _check_moments(values: np.ndarray, side: str, tol: float = 1e-10) -> None:
        mean = values.mean(axis=0)
        var = values.var(axis=0)
        if np.any(np.abs(mean) > tol) or np.any(np.abs(var - 1.0) > tol):
            raise DataError(
                f"{side} traits are not standardized "
                f"(max |mean| {np.abs(mean).max():.2e}, "
                f"max |var-1| {np.abs(var - 1.0).max():.2e})"
            )

    @property
    def n_couples(self) -> int:
        return self.head_traits.shape[0]

    def couple(self, k: int) -> tuple[IndividualProfile, IndividualProfile]:
        head = IndividualProfile(self.head_traits[k],
                                 tuple(self.head_labels[k]))
        partner = IndividualProfile(self.partner_traits[k],
                                    tuple(self.partner_labels[k]))
        return head, partner


@dataclass(frozen=True)
class ProfileArray:
    """Columnar stack of profiles (the support of a coupling)."""

    continuous: np.ndarray   # (m, K)
    labels: np.ndarray       # (m, C)

    def __post_init__(self):
        object.__setattr__(self, "continuous", _frozen(self.continuous))
        object.__setattr__(self, "labels", _frozen(self.labels, dtype=np.int64))

    def __len__(self) -> int:
        return self.continuous.shape[0]

    def profile(self, i: int) -> IndividualProfile:
        return IndividualProfile(self.continuous[i], tuple(self.labels[i]))


@dataclass(frozen=True)
class EmpiricalCoupling:
    """Empirical matching distribution on a deduplicated support.

    ``weights[i, j]`` is the observed probability mass of the (support_x[i],
    support_y[j]) cell; rows sum to ``f`` and columns to ``g``. Identical
    profiles are merged into one support point carrying their combined mass,
    which leaves every moment, the social gain and the fitted parameters
    unchanged while keeping the coupling matrix small.
    """

    kind: str
    schema: TraitSchema
    support_x: ProfileArray
    support_y: ProfileArray
    f: np.ndarray
    g: np.ndarray
    weights: np.ndarray
    cross_moments: np.ndarray
    same_category_freq: np.ndarray
    n_couples: int

    def __post_init__(self):
        for name in ("f", "g", "weights", "cross_moments", "same_category_freq"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        total = float(self.weights.sum())
        if abs(total - 1.0) > 1e-12:
            raise DataError(f"coupling mass is {total!r}, expected 1")
        if np.any(self.weights < 0):
            raise DataError("coupling weights must be nonnegative")
        if np.any(self.same_category_freq < 0) or np.any(self.same_category_freq > 1):
            raise DataError("same-category frequencies must lie in [0, 1]")
        if self.kind == UNIPARTITE and not np.array_equal(
                self.weights, self.weights.T):
            raise DataError("unipartite coupling weights must be symmetric")


def recompute_cross_moments(coupling: EmpiricalCoupling) -> np.ndarray:
    """Re-derive the cross-moment matrix from weights and supports."""
    x = coupling.support_x.continuous
    y = coupling.support_y.continuous
    raw = x.T @ coupling.weights @ y
    if coupling.kind == UNIPARTITE:
        return (raw + raw.T) / 2.0
    return raw


def same_category_masks(coupling: EmpiricalCoupling) -> list[np.ndarray]:
    """Boolean (m_x, m_y) masks marking equal-label support pairs, one per
    categorical variable."""
    lx, ly = coupling.support_x.labels, coupling.support_y.labels
    return [lx[:, c:c + 1] == ly[:, c].reshape(1, -1)
            for c in range(lx.shape[1])]


# ---------------------------------------------------------------------------
# ingestion
# ---------------------------------------------------------------------------

def _read_table(source) -> pd.DataFrame:
    if isinstance(source, pd.DataFrame):
        return source.astype(str)
    if isinstance(source, (str, Path)):
        return pd.read_csv(source, dtype=str, keep_default_na=False)
    if isinstance(source, io.IOBase) or hasattr(source, "read"):
        return pd.read_csv(source, dtype=str, keep_default_na=False)
    raise DataError(f"unsupported ingestion source: {type(source)!r}")


def _fill_for(fill_values: Mapping[str, object] | None, column: str,
              trait: str):
    if not fill_values:
        return None
    if column in fill_values:
        return fill_values[column]
    return fill_values.get(trait)


def _apply_derived(df: pd.DataFrame, derived: Mapping[str, str]) -> pd.DataFrame:
    """Append head_/partner_ columns computed from raw columns.

    Each expression refers to unprefixed trait names and is evaluated once
    per side, e.g. ``{"age_sq": "age ** 2"}``.
    """
    df = df.copy()
    for side in ("head_", "partner_"):
        cols = {c[len(side):]: c for c in df.columns if c.startswith(side)}
        frame = pd.DataFrame(
            {name: pd.to_numeric(df[col], errors="coerce")
             for name, col in cols.items()})
        for new, expr in derived.items():
            try:
                values = frame.eval(expr)
            except Exception as exc:
                raise DataError(
                    f"cannot evaluate derived column '{new}': {exc}") from exc
            df[side + new] = values.astype(float).map(repr)
    return df


def ingest(source, schema: TraitSchema, kind: str = UNIPARTITE, *,
           fill_values: Mapping[str, object] | None = None,
           trait_bounds: Mapping[str, tuple[float, float]] | None = None,
           derived: Mapping[str, str] | None = None) -> MarketSample:
    """Read couple-level records and build a standardized market sample.

    Rows with unparseable required cells are dropped and reported in the
    sample's ``diagnostics`` with their 1-based data-row number. A fill
    value declared for a column (by trait name, or by full column name)
    replaces *empty* cells only; garbage cells always reject the row.

    Raises :class:`DataError` for a missing column, a zero-variance trait
    or a sample with fewer than two usable couples.
    """
    if kind not in (UNIPARTITE, BIPARTITE):
        raise DataError(f"unknown market kind '{kind}'")
    df = _read_table(source)
    if derived:
        df = _apply_derived(df, derived)

    columns = []
    for trait in list(schema.continuous) + list(schema.categorical_names):
        columns.extend([f"head_{trait}", f"partner_{trait}"])
    missing = [c for c in columns if c not in df.columns]
    if missing:
        raise DataError(f"missing column(s): {', '.join(missing)}")

    n_rows = len(df)
    if n_rows == 0:
        raise DataError("empty sample: no data rows")

    diagnostics: list[str] = []
    reject = np.zeros(n_rows, dtype=bool)
    cont: dict[str, np.ndarray] = {}
    for trait in schema.continuous:
        for prefix in ("head_", "partner_"):
            col = prefix + trait
            raw = df[col].astype(str).str.strip()
            values = pd.to_numeric(raw, errors="coerce").to_numpy(dtype=np.float64)
            empty = raw.str.lower().isin(_MISSING_TOKENS).to_numpy()
            bad = np.isnan(values)
            garbage = bad & ~empty
            fill = _fill_for(fill_values, col, trait)
            if fill is not None:
                values[empty & bad] = float(fill)
                bad = np.isnan(values)
            for row in np.flatnonzero(garbage):
                diagnostics.append(
                    f"row {row + 1}: {col}: cannot parse {raw.iloc[row]!r}")
            for row in np.flatnonzero(bad & ~garbage):
                diagnostics.append(f"row {row + 1}: {col}: missing value")
            reject |= bad | garbage
            cont[col] = values

    labels: dict[str, np.ndarray] = {}
    for cat in schema.categoricals:
        for prefix in ("head_", "partner_"):
            col = prefix + cat.name
            raw = df[col].astype(str).str.strip()
            idx = np.array([cat.index_of(v) for v in raw], dtype=np.int64)
            fill = _fill_for(fill_values, col, cat.name)
            if fill is not None:
                fill_idx = cat.index_of(str(fill))
                if fill_idx < 0:
                    raise DataError(
                        f"fill value {fill!r} is not a label of '{cat.name}'")
                empty = raw.str.lower().isin(_MISSING_TOKENS).to_numpy()
                idx[(idx < 0) & empty] = fill_idx
            for row in np.flatnonzero(idx < 0):
                diagnostics.append(
                    f"row {row + 1}: {col}: unknown label {raw.iloc[row]!r}")
            reject |= idx < 0
            labels[col] = idx

    keep = ~reject
    if trait_bounds:
        for trait, (lo, hi) in trait_bounds.items():
            if trait not in schema.continuous:
                raise DataError(f"bounds given for unknown trait '{trait}'")
            for prefix in ("head_", "partner_"):
                values = cont[prefix + trait]
                with np.errstate(invalid="ignore"):
                    inside = (values >= lo) & (values <= hi)
                keep &= inside | reject  # rejected rows already reported
        n_filtered = int((~keep & ~reject).sum())
        if n_filtered:
            diagnostics.append(
                f"filtered {n_filtered} row(s) outside declared trait bounds")

    if not keep.any():
        raise DataError("empty sample: every row was rejected or filtered")

    k = schema.n_continuous
    head_raw = np.column_stack([cont[f"head_{t}"][keep] for t in schema.continuous]) \
        if k else np.empty((int(keep.sum()), 0))
    partner_raw = np.column_stack(
        [cont[f"partner_{t}"][keep] for t in schema.continuous])
    c = schema.n_categoricals
    head_lab = (np.column_stack([labels[f"head_{x.name}"][keep]
                                 for x in schema.categoricals])
                if c else np.empty((head_raw.shape[0], 0), dtype=np.int64))
    partner_lab = (np.column_stack([labels[f"partner_{x.name}"][keep]
                                    for x in schema.categoricals])
                   if c else np.empty((head_raw.shape[0], 0), dtype=np.int64))

    return build_sample(schema, kind, head_raw, partner_raw, head_lab,
                        partner_lab, diagnostics=tuple(diagnostics))


def build_sample(schema: TraitSchema, kind: str, head_raw: np.ndarray,
                 partner_raw: np.ndarray, head_labels: np.ndarray,
                 partner_labels: np.ndarray, *,
                 diagnostics: tuple[str, ...] = ()) -> MarketSample:
    """Standardize raw trait values and assemble a :class:`MarketSample`.

    Unipartite samples pool both positions per trait; bipartite samples are
    standardized per side.
    """
    head_raw = np.asarray(head_raw, dtype=np.float64)
    partner_raw = np.asarray(partner_raw, dtype=np.float64)
    n = head_raw.shape[0]
    if n < 2:
        raise DataError(f"need at least 2 couples, got {n}")

    def _moments(values: np.ndarray, side: str):
        mean = values.mean(axis=0)
        sd = values.std(axis=0)
        for j, s in enumerate(sd):
            scale = max(1.0, abs(float(mean[j])))
            if s <= 1e-12 * scale:
                raise DataError(
                    f"zero-variance trait '{schema.continuous[j]}' ({side}): "
                    "cannot standardize")
        return mean, sd

    if kind == UNIPARTITE:
        pooled = np.vstack([head_raw, partner_raw])
        mean, sd = _moments(pooled, "pooled")
        std = Standardization(mean, sd, mean, sd, pooled=True)
    else:
        h_mean, h_sd = _moments(head_raw, "head")
        p_mean, p_sd = _moments(partner_raw, "partner")
        std = Standardization(h_mean, h_sd, p_mean, p_sd, pooled=False)

    head = (head_raw - std.head_mean) / std.head_sd
    partner = (partner_raw - std.partner_mean) / std.partner_sd
    return MarketSample(schema, kind, head, partner,
                        np.asarray(head_labels, dtype=np.int64),
                        np.asarray(partner_labels, dtype=np.int64),
                        std, diagnostics)


def destandardize(sample: MarketSample) -> tuple[np.ndarray, np.ndarray]:
    """Return (head, partner) trait values mapped back to raw units."""
    std = sample.standardization
    head = sample.head_traits * std.head_sd + std.head_mean
    partner = sample.partner_traits * std.partner_sd + std.partner_mean
    return head, partner


def resample_couples(sample: MarketSample, indices: np.ndarray) -> MarketSample:
    """Rebuild a sample from the given couple indices (with repeats),
    re-standardizing on the resampled data."""
    idx = np.asarray(indices, dtype=np.int64)
    head_raw, partner_raw = destandardize(sample)
    return build_sample(sample.schema, sample.kind, head_raw[idx],
                        partner_raw[idx], sample.head_labels[idx],
                        sample.partner_labels[idx])


def assign_roles(sample: MarketSample, by: str | None = None) -> MarketSample:
    """Split a sample into two role-defined sides and return it as bipartite.

    ``by=None`` keeps the recorded head/partner orientation (the surveyed
    "householder" convention). Otherwise the member with the larger raw
    value of trait ``by`` becomes the head; ties keep the recorded order and
    are counted in the diagnostics.
    """
    head_raw, partner_raw = destandardize(sample)
    if by is None:
        swap = np.zeros(sample.n_couples, dtype=bool)
        ties = 0
    else:
        if by not in sample.schema.continuous:
            raise DataError(f"role trait '{by}' is not a continuous trait")
        j = sample.schema.continuous.index(by)
        swap = partner_raw[:, j] > head_raw[:, j]
        ties = int((partner_raw[:, j] == head_raw[:, j]).sum())
    new_head = np.where(swap[:, None], partner_raw, head_raw)
    new_partner = np.where(swap[:, None], head_raw, partner_raw)
    new_head_lab = np.where(swap[:, None], sample.partner_labels,
                            sample.head_labels)
    new_partner_lab = np.where(swap[:, None], sample.head_labels,
                               sample.partner_labels)
    diagnostics = list(sample.diagnostics)
    if ties:
        diagnostics.append(
            f"role assignment by '{by}': {ties} tie(s) kept recorded order")
    return build_sample(sample.schema, BIPARTITE, new_head, new_partner,
                        new_head_lab, new_partner_lab,
                        diagnostics=tuple(diagnostics))


# ---------------------------------------------------------------------------
# couplings
# ---------------------------------------------------------------------------

def _dedup(cont: np.ndarray, labels: np.ndarray) -> tuple[ProfileArray, np.ndarray]:
    """Merge identical profiles; returns the sorted unique support and the
    inverse map from input rows to support rows."""
    k = cont.shape[1]
    combined = np.hstack([cont, labels.astype(np.float64)])
    uniq, inverse = np.unique(combined, axis=0, return_inverse=True)
    support = ProfileArray(uniq[:, :k], uniq[:, k:].astype(np.int64))
    return support, inverse.ravel()


def _same_cat_freq(weights: np.ndarray, sx: ProfileArray,
                   sy: ProfileArray) -> np.ndarray:
    c = sx.labels.shape[1]
    out = np.empty(c, dtype=np.float64)
    for i in range(c):
        mask = sx.labels[:, i:i + 1] == sy.labels[:, i].reshape(1, -1)
        out[i] = float(weights[mask].sum())
    return out


def symmetrize(sample: MarketSample) -> EmpiricalCoupling:
    """Mirror every observed pair and build the symmetric empirical coupling
    on the pooled population of heads and partners.

    Each couple contributes mass 1/(2n) to its (head, partner) cell and
    1/(2n) to the mirrored cell, so each individual carries marginal mass
    1/(2n) and the weight matrix is exactly symmetric.
    """
    if sample.kind != UNIPARTITE:
        raise DataError("symmetrize requires a unipartite sample")
    n = sample.n_couples
    pooled_cont = np.vstack([sample.head_traits, sample.partner_traits])
    pooled_lab = np.vstack([sample.head_labels, sample.partner_labels])
    support, inverse = _dedup(pooled_cont, pooled_lab)
    heads, partners = inverse[:n], inverse[n:]

    m = len(support)
    counts = np.zeros((m, m), dtype=np.int64)
    np.add.at(counts, (heads, partners), 1)
    np.add.at(counts, (partners, heads), 1)
    weights = counts / float(2 * n)
    f = counts.sum(axis=1) / float(2 * n)

    raw = support.continuous.T @ weights @ support.continuous
    moments = (raw + raw.T) / 2.0
    freq = _same_cat_freq(weights, support, support)
    return EmpiricalCoupling(UNIPARTITE, sample.schema, support, support,
                             f, f, weights, moments, freq, n)


def build_bipartite(sample: MarketSample) -> EmpiricalCoupling:
    """Build the head-by-partner empirical coupling, mass 1/n per couple,
    without symmetrization."""
    if sample.kind != BIPARTITE:
        raise DataError("build_bipartite requires a bipartite sample")
    n = sample.n_couples
    sx, inv_h = _dedup(sample.head_traits, sample.head_labels)
    sy, inv_p = _dedup(sample.partner_traits, sample.partner_labels)
    counts = np.zeros((len(sx), len(sy)), dtype=np.int64)
    np.add.at(counts, (inv_h, inv_p), 1)
    weights = counts / float(n)
    f = counts.sum(axis=1) / float(n)
    g = counts.sum(axis=0) / float(n)
    moments = sx.continuous.T @ weights @ sy.continuous
    freq = _same_cat_freq(weights, sx, sy)
    return EmpiricalCoupling(BIPARTITE, sample.schema, sx, sy, f, g,
                             weights, moments, freq, n)


def coupling_from(sample: MarketSample) -> EmpiricalCoupling:
    """Dispatch to :func:`symmetrize` or :func:`build_bipartite`."""
    if sample.kind == UNIPARTITE:
        return symmetrize(sample)
    return build_bipartite(sample)
