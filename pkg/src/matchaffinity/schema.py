"""Trait schemas and individual profiles.

A schema fixes the canonical column order used by every matrix in the
package: continuous traits first, categorical variables after them.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import DataError


@dataclass(frozen=True)
class CategoricalDef:
    """A categorical variable with its ordered label set (at least two)."""

    name: str
    labels: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(str(x) for x in self.labels))
        if len(self.labels) < 2:
            raise DataError(
                f"categorical '{self.name}' needs at least 2 labels, "
                f"got {len(self.labels)}"
            )
        if len(set(self.labels)) != len(self.labels):
            raise DataError(f"categorical '{self.name}' has duplicate labels")

    @property
    def cardinality(self) -> int:
        return len(self.labels)

    def index_of(self, label: str) -> int:
        """Index of ``label``, or -1 if it is not a declared label."""
        try:
            return self.labels.index(label)
        except ValueError:
            return -1


@dataclass(frozen=True)
class TraitSchema:
    """Ordered declaration of continuous traits and categorical variables.

    The order given here is the canonical order of matrix rows/columns
    everywhere downstream (affinity matrices, moment matrices, loadings).
    """

    continuous: tuple[str, ...]
    categoricals: tuple[CategoricalDef, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "continuous",
                           tuple(str(x) for x in self.continuous))
        object.__setattr__(self, "categoricals", tuple(self.categoricals))
        names = list(self.continuous) + [c.name for c in self.categoricals]
        if not self.continuous:
            raise DataError("schema declares no continuous traits")
        if len(set(names)) != len(names):
            raise DataError(f"duplicate trait names in schema: {names}")

    @property
    def n_continuous(self) -> int:
        return len(self.continuous)

    @property
    def n_categoricals(self) -> int:
        return len(self.categoricals)

    @property
    def categorical_names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.categoricals)


@dataclass(frozen=True)
class IndividualProfile:
    """One person: standardized continuous traits plus one label index per
    categorical variable."""

    continuous: np.ndarray
    labels: tuple[int, ...] = ()

    def __post_init__(self):
        cont = np.asarray(self.continuous, dtype=np.float64)
        cont.setflags(write=False)
        object.__setattr__(self, "continuous", cont)
        object.__setattr__(self, "labels", tuple(int(x) for x in self.labels))

    def validate(self, schema: TraitSchema) -> None:
        if self.continuous.shape != (schema.n_continuous,):
            raise DataError(
                f"profile has {self.continuous.shape} continuous values, "
                f"schema expects ({schema.n_continuous},)"
            )
        if len(self.labels) != schema.n_categoricals:
            raise DataError("profile label count does not match schema")
        for idx, cat in zip(self.labels, schema.categoricals):
            if not 0 <= idx < cat.cardinality:
                raise DataError(
                    f"label index {idx} out of range for '{cat.name}'"
                )
