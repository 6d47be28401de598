"""Categorical tabular data: schemas, datasets, marginals and dense joints.

Every dataset is a matrix of level indices, one column per attribute. Marginals
and joint distributions are dense vectors laid out in row-major (C) order over
the attributes in ascending index order, so ``np.ravel_multi_index`` maps a
record to its cell.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .rng import as_generator

ROLES = ("feature", "protected", "outcome")


class SchemaMismatch(ValueError):
    """Raised when an attribute reference or record does not fit a schema."""


@dataclass(frozen=True)
class Attribute:
    name: str
    levels: tuple[str, ...]
    role: str = "feature"
    # numeric attributes keep their level strings parseable as floats; the
    # logistic encoder uses the value itself instead of a one-hot block
    numeric: bool = False

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(str(v) for v in self.levels))
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r} for {self.name!r}")
        if len(set(self.levels)) != len(self.levels):
            raise ValueError(f"duplicate levels in attribute {self.name!r}")
        if not self.levels:
            raise ValueError(f"attribute {self.name!r} has no levels")
        if self.numeric:
            try:
                [float(v) for v in self.levels]
            except ValueError as exc:
                raise ValueError(f"numeric attribute {self.name!r} has non-numeric level") from exc

    @property
    def size(self) -> int:
        return len(self.levels)

    def index(self, level: str) -> int:
        try:
            return self.levels.index(str(level))
        except ValueError:
            raise SchemaMismatch(f"{level!r} is not a level of {self.name!r}") from None

    def values(self) -> np.ndarray:
        return np.array([float(v) for v in self.levels])


@dataclass(frozen=True)
class Schema:
    """Ordered attributes plus the fairness roles of the binary ones.

    ``privileged`` maps each protected attribute to its privileged level and
    ``favorable`` names the favorable outcome level. Both must be binary
    attributes; the designated level is treated as the value 1 everywhere.
    """

    attributes: tuple[Attribute, ...]
    privileged: Mapping[str, str] = field(default_factory=dict)
    favorable: str | None = None

    def __post_init__(self):
        attrs = tuple(self.attributes)
        object.__setattr__(self, "attributes", attrs)
        object.__setattr__(self, "privileged", dict(self.privileged))
        names = [a.name for a in attrs]
        if len(set(names)) != len(names):
            raise ValueError("attribute names must be unique")
        outcomes = [a for a in attrs if a.role == "outcome"]
        if len(outcomes) > 1:
            raise ValueError("at most one outcome attribute is allowed")
        if outcomes:
            out = outcomes[0]
            if out.size != 2:
                raise ValueError(f"outcome {out.name!r} must have exactly 2 levels")
            if self.favorable is None or self.favorable not in out.levels:
                raise ValueError("favorable level must be one of the outcome's levels")
        for a in attrs:
            if a.role == "protected":
                if a.size != 2:
                    raise ValueError(f"protected attribute {a.name!r} must be binary")
                if self.privileged.get(a.name) not in a.levels:
                    raise ValueError(f"privileged level missing for {a.name!r}")

    # -- lookups -------------------------------------------------------------
    @property
    def names(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.attributes)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(a.size for a in self.attributes)

    @property
    def domain_size(self) -> int:
        return math.prod(self.shape)

    def __len__(self):
        return len(self.attributes)

    def __getitem__(self, name: str) -> Attribute:
        return self.attributes[self.position(name)]

    def position(self, name: str | int) -> int:
        if isinstance(name, (int, np.integer)):
            if not 0 <= int(name) < len(self.attributes):
                raise SchemaMismatch(f"attribute index {name} out of range")
            return int(name)
        try:
            return self.names.index(name)
        except ValueError:
            raise SchemaMismatch(f"no attribute named {name!r}") from None

    def role_positions(self, role: str) -> list[int]:
        return [i for i, a in enumerate(self.attributes) if a.role == role]

    @property
    def outcome(self) -> int:
        pos = self.role_positions("outcome")
        if not pos:
            raise SchemaMismatch("schema has no outcome attribute")
        return pos[0]

    @property
    def protected(self) -> list[int]:
        return self.role_positions("protected")

    def favorable_index(self) -> int:
        return self.attributes[self.outcome].index(self.favorable)

    def privileged_index(self, name: str | int) -> int:
        attr = self.attributes[self.position(name)]
        if attr.role != "protected":
            raise SchemaMismatch(f"{attr.name!r} is not a protected attribute")
        return attr.index(self.privileged[attr.name])

    def project(self, names: Sequence[str | int]) -> "Schema":
        """Schema restricted to ``names`` (kept in the original order)."""
        keep = sorted({self.position(n) for n in names})
        attrs = tuple(self.attributes[i] for i in keep)
        priv = {a.name: self.privileged[a.name] for a in attrs if a.role == "protected"}
        fav = self.favorable if any(a.role == "outcome" for a in attrs) else None
        return Schema(attrs, priv, fav)


@dataclass(frozen=True)
class MarginalSpec:
    """A sorted, duplicate-free set of attribute positions."""

    attrs: tuple[int, ...]

    def __post_init__(self):
        attrs = tuple(int(a) for a in self.attrs)
        if not attrs:
            raise ValueError("a marginal needs at least one attribute")
        if len(set(attrs)) != len(attrs):
            raise ValueError("marginal attributes must be distinct")
        object.__setattr__(self, "attrs", tuple(sorted(attrs)))

    @classmethod
    def of(cls, schema: Schema, names: Iterable[str | int]) -> "MarginalSpec":
        return cls(tuple(schema.position(n) for n in names))

    def validate(self, schema: Schema) -> None:
        for a in self.attrs:
            if not 0 <= a < len(schema):
                raise SchemaMismatch(f"attribute index {a} invalid for a {len(schema)}-attribute schema")

    def shape(self, schema: Schema) -> tuple[int, ...]:
        self.validate(schema)
        return tuple(schema.attributes[a].size for a in self.attrs)

    def size(self, schema: Schema) -> int:
        return int(np.prod(self.shape(schema), dtype=np.int64))

    def __len__(self):
        return len(self.attrs)

    def __and__(self, other: "MarginalSpec") -> set[int]:
        return set(self.attrs) & set(other.attrs)


@dataclass(frozen=True)
class Marginal:
    spec: MarginalSpec
    counts: np.ndarray

    def normalized(self) -> np.ndarray:
        total = self.counts.sum()
        return self.counts / total if total > 0 else self.counts.copy()


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Dataset:
    """Rows of level indices with optional nonnegative per-row weights."""

    schema: Schema
    rows: np.ndarray
    weights: np.ndarray | None = None

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.int64)
        if rows.ndim == 1 and rows.size == 0:
            rows = rows.reshape(0, len(self.schema))
        if rows.ndim != 2 or rows.shape[1] != len(self.schema):
            raise SchemaMismatch(
                f"rows must have shape (n, {len(self.schema)}), got {rows.shape}")
        if rows.size and ((rows < 0).any() or (rows >= np.array(self.schema.shape)).any()):
            raise SchemaMismatch("level index out of range for the schema")
        object.__setattr__(self, "rows", _frozen(rows))
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            if w.shape != (rows.shape[0],):
                raise ValueError("weights must have one entry per row")
            if (w < 0).any() or not np.isfinite(w).all():
                raise ValueError("weights must be finite and nonnegative")
            object.__setattr__(self, "weights", _frozen(w))

    @classmethod
    def from_records(cls, schema: Schema, records: Iterable[Sequence[str]], weights=None) -> "Dataset":
        """Build a dataset from level strings, one sequence per record."""
        rows = [[schema.attributes[j].index(v) for j, v in enumerate(rec)] for rec in records]
        return cls(schema, np.array(rows, dtype=np.int64).reshape(-1, len(schema)), weights)

    def __len__(self):
        return self.rows.shape[0]

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    def weight_vector(self) -> np.ndarray:
        return np.ones(self.n) if self.weights is None else np.asarray(self.weights)

    @property
    def total_weight(self) -> float:
        return float(self.n if self.weights is None else self.weights.sum())

    def column(self, name: str | int) -> np.ndarray:
        return self.rows[:, self.schema.position(name)]

    def with_weights(self, weights) -> "Dataset":
        return Dataset(self.schema, self.rows, weights)

    def take(self, index) -> "Dataset":
        w = None if self.weights is None else self.weights[index]
        return Dataset(self.schema, self.rows[index], w)

    def project(self, names: Sequence[str | int]) -> "Dataset":
        keep = sorted({self.schema.position(n) for n in names})
        return Dataset(self.schema.project(keep), self.rows[:, keep], self.weights)

    def cell_index(self) -> np.ndarray:
        """Row-major index of every record in the full domain."""
        if self.n == 0:
            return np.zeros(0, dtype=np.int64)
        return np.ravel_multi_index(self.rows.T, self.schema.shape)

    def to_frame(self):
        import pandas as pd

        data = {a.name: np.asarray(a.levels, dtype=object)[self.rows[:, j]]
                for j, a in enumerate(self.schema.attributes)}
        frame = pd.DataFrame(data)
        if self.weights is not None:
            frame["weight"] = self.weights
        return frame


@dataclass(frozen=True, eq=False)
class JointDistribution:
    schema: Schema
    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.shape != (self.schema.domain_size,):
            raise SchemaMismatch(f"joint needs {self.schema.domain_size} cells, got {p.shape}")
        if (p < 0).any():
            raise ValueError("joint probabilities must be nonnegative")
        if abs(p.sum() - 1.0) > 1e-9:
            raise ValueError(f"joint probabilities sum to {p.sum()!r}, not 1")
        object.__setattr__(self, "probs", _frozen(p))

    @classmethod
    def uniform(cls, schema: Schema) -> "JointDistribution":
        return cls(schema, np.full(schema.domain_size, 1.0 / schema.domain_size))

    @classmethod
    def from_counts(cls, schema: Schema, counts) -> "JointDistribution":
        counts = np.clip(np.asarray(counts, dtype=float), 0, None)
        return cls(schema, counts / counts.sum())

    @classmethod
    def empirical(cls, d: Dataset) -> "JointDistribution":
        full = MarginalSpec(tuple(range(len(d.schema))))
        return cls.from_counts(d.schema, compute_marginal(d, full).counts)

    def tensor(self) -> np.ndarray:
        return self.probs.reshape(self.schema.shape)


def compute_marginal(d: Dataset, spec: MarginalSpec) -> Marginal:
    """Weighted contingency table of ``d`` over the attributes in ``spec``."""
    shape = spec.shape(d.schema)
    size = int(np.prod(shape, dtype=np.int64))
    if d.n == 0:
        return Marginal(spec, np.zeros(size))
    idx = np.ravel_multi_index(d.rows[:, list(spec.attrs)].T, shape)
    counts = np.bincount(idx, weights=d.weight_vector(), minlength=size).astype(float)
    return Marginal(spec, counts)


def marginal_of_joint(p: JointDistribution, spec: MarginalSpec) -> Marginal:
    spec.validate(p.schema)
    drop = tuple(i for i in range(len(p.schema)) if i not in spec.attrs)
    counts = p.tensor().sum(axis=drop) if drop else p.tensor()
    return Marginal(spec, np.ascontiguousarray(counts).ravel())


def project_marginal(m: Marginal, schema: Schema, spec: MarginalSpec) -> Marginal:
    """Sum a marginal down to a sub-marginal ``spec`` (attrs must be a subset)."""
    if not set(spec.attrs) <= set(m.spec.attrs):
        raise SchemaMismatch("target attributes are not a subset of the marginal's")
    table = m.counts.reshape(m.spec.shape(schema))
    drop = tuple(i for i, a in enumerate(m.spec.attrs) if a not in spec.attrs)
    out = table.sum(axis=drop) if drop else table
    return Marginal(spec, np.ascontiguousarray(out).ravel())


def sample_dataset(p: JointDistribution, n: int, seed=None) -> Dataset:
    """Draw ``n`` i.i.d. unit-weight records from ``p``."""
    if n < 1:
        raise ValueError("sample size must be at least 1")
    rng = as_generator(seed)
    cells = rng.choice(p.probs.size, size=int(n), p=p.probs)
    rows = np.stack(np.unravel_index(cells, p.schema.shape), axis=1)
    return Dataset(p.schema, rows)


def sample_rounded(p: JointDistribution, n: int, seed=None) -> Dataset:
    """Draw ``n`` records whose cell counts are n*p rounded.

    Each cell receives floor(n * p) records; the remaining records go to
    distinct cells drawn with probability proportional to the fractional
    parts. Rows are returned in random order. Marginals of the output match
    those of ``p`` up to rounding instead of up to multinomial noise.
    """
    if n < 1:
        raise ValueError("sample size must be at least 1")
    rng = as_generator(seed)
    exact = p.probs * int(n)
    counts = np.floor(exact).astype(np.int64)
    short = int(n) - int(counts.sum())
    if short > 0:
        frac = exact - counts
        extra = rng.choice(frac.size, size=short, replace=False, p=frac / frac.sum())
        counts[extra] += 1
    cells = rng.permutation(np.repeat(np.arange(p.probs.size), counts))
    rows = np.stack(np.unravel_index(cells, p.schema.shape), axis=1)
    return Dataset(p.schema, rows)


def train_test_split(d: Dataset, train_fraction: float = 0.75, seed=None) -> tuple[Dataset, Dataset]:
    """Random disjoint split; each part keeps the original row order."""
    if not 0 < train_fraction < 1:
        raise ValueError("train_fraction must lie strictly between 0 and 1")
    rng = as_generator(seed)
    k = int(np.floor(d.n * train_fraction))
    perm = rng.permutation(d.n)
    return d.take(np.sort(perm[:k])), d.take(np.sort(perm[k:]))
