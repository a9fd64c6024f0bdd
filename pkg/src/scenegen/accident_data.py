"""Accident record ingestion, synthesis and static risk-pattern mining."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Iterator, Sequence

import numpy as np

from .scenario import StaticCombination
from .schema import CANONICAL_SCHEMA, SchemaError, VariableSchema

if TYPE_CHECKING:
    from .bayesnet import CausalBayesNet

__all__ = [
    "CANONICAL_SCHEMA",
    "DataFormatError",
    "Dataset",
    "PatternCatalog",
    "mine_static_patterns",
    "parse_records",
    "synthesize_dataset",
    "write_records",
]


class DataFormatError(ValueError):
    """A CSV file does not match the expected schema."""

    def __init__(self, message, row=None, column=None, value=None):
        super().__init__(message)
        self.row = row
        self.column = column
        self.value = value


@dataclass(frozen=True, eq=False)
class Dataset:
    """Categorical records stored as an ``(n_rows, n_vars)`` array of state indices."""

    schema: VariableSchema
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.int64)
        if values.size == 0:
            values = values.reshape(0, len(self.schema))
        if values.ndim != 2 or values.shape[1] != len(self.schema):
            raise SchemaError(f"expected {len(self.schema)} columns, got shape {values.shape}")
        arities = np.asarray(self.schema.arities)
        if len(values) and ((values < 0).any() or (values >= arities).any()):
            raise SchemaError("state index out of range for its variable")
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.shape[0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return self.schema == other.schema and np.array_equal(self.values, other.values)

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.schema.index(name)]

    def columns(self, names: Sequence[str]) -> np.ndarray:
        return self.values[:, [self.schema.index(n) for n in names]]

    def records(self) -> Iterator[tuple[int, ...]]:
        for row in self.values:
            yield tuple(int(v) for v in row)

    def labels(self) -> Iterator[dict[str, str]]:
        for row in self.values:
            yield {name: states[k] for (name, states), k in zip(self.schema.variables, row)}

    def take(self, index) -> "Dataset":
        return Dataset(self.schema, self.values[index])

    def with_column(self, name: str, states: Sequence[str], column: np.ndarray) -> "Dataset":
        schema = VariableSchema(self.schema.variables + ((name, tuple(states)),))
        return Dataset(schema, np.column_stack([self.values, np.asarray(column, dtype=np.int64)]))

    def replace_column(self, name: str, column: np.ndarray) -> "Dataset":
        values = self.values.copy()
        values[:, self.schema.index(name)] = column
        return Dataset(self.schema, values)

    def to_json(self) -> dict:
        return {"schema": self.schema.to_json(), "rows": self.values.tolist()}

    @classmethod
    def from_json(cls, payload: dict) -> "Dataset":
        schema = VariableSchema.from_json(payload["schema"])
        return cls(schema, np.asarray(payload["rows"], dtype=np.int64).reshape(-1, len(schema)))


def parse_records(path, schema: VariableSchema = CANONICAL_SCHEMA) -> Dataset:
    """Read a labelled CSV into a :class:`Dataset`.

    Columns may appear in any order and extra columns are ignored. Rows with an
    empty cell in any schema column are dropped. Row numbers in errors are file
    line numbers, so the first data row is row 2.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or all(not h.strip() for h in header):
            raise DataFormatError(f"{path}: empty header")
        header = [h.strip() for h in header]
        positions = {}
        for name in schema.names:
            if name not in header:
                raise DataFormatError(f"{path}: missing column {name!r}", column=name)
            positions[name] = header.index(name)
        lookup = [schema._state_index[name] for name in schema.names]
        cols = [positions[name] for name in schema.names]
        rows = []
        for line_no, cells in enumerate(reader, start=2):
            if not cells:
                continue
            record = []
            for name, col, table in zip(schema.names, cols, lookup):
                cell = cells[col].strip() if col < len(cells) else ""
                if not cell:
                    record = None
                    break
                try:
                    record.append(table[cell])
                except KeyError:
                    raise DataFormatError(
                        f"{path}: row {line_no}, column {name!r}: unknown state {cell!r}",
                        row=line_no,
                        column=name,
                        value=cell,
                    ) from None
            if record is not None:
                rows.append(record)
    return Dataset(schema, np.asarray(rows, dtype=np.int64).reshape(-1, len(schema)))


def write_records(data: Dataset, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(data.schema.names)
        for labels in data.labels():
            writer.writerow(labels.values())


def synthesize_dataset(net: "CausalBayesNet", n: int, seed: int = 0) -> Dataset:
    """Draw ``n`` i.i.d. ancestral samples from ``net``."""
    return net.sample(n, seed)


@dataclass(frozen=True)
class PatternCatalog:
    patterns: tuple[StaticCombination, ...] = ()
    supports: tuple[float, ...] = ()

    def __post_init__(self):
        if len(self.patterns) != len(self.supports):
            raise ValueError("patterns and supports differ in length")
        if any(b > a for a, b in zip(self.supports, self.supports[1:])):
            raise ValueError("supports must be in descending order")

    def __len__(self) -> int:
        return len(self.patterns)

    def __iter__(self):
        return iter(self.patterns)

    def without(self, label: str) -> "PatternCatalog":
        keep = [i for i, p in enumerate(self.patterns) if p.label != label]
        return PatternCatalog(tuple(self.patterns[i] for i in keep), tuple(self.supports[i] for i in keep))

    def to_json(self) -> dict:
        return {
            "patterns": [
                {"label": p.label, "assignments": dict(p.assignments), "support": s}
                for p, s in zip(self.patterns, self.supports)
            ]
        }

    @classmethod
    def from_json(cls, payload: dict) -> "PatternCatalog":
        items = payload["patterns"]
        return cls(
            tuple(StaticCombination.of(item["assignments"], item["label"]) for item in items),
            tuple(float(item.get("support", 0.0)) for item in items),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "PatternCatalog":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass
class _KModesResult:
    centroids: np.ndarray
    cost: float
    labels: np.ndarray = field(repr=False)


def _weighted_mode(column: np.ndarray, weights: np.ndarray, arity: int) -> int:
    # argmax returns the lowest state index on ties
    return int(np.argmax(np.bincount(column, weights=weights, minlength=arity)))


def _kmodes(points: np.ndarray, weights: np.ndarray, arities, k: int, rng, max_iter: int) -> _KModesResult:
    init = rng.choice(len(points), size=k, replace=False, p=weights / weights.sum())
    centroids = points[np.sort(init)].copy()
    labels = np.full(len(points), -1)
    for _ in range(max_iter):
        dist = (points[:, None, :] != centroids[None, :, :]).sum(axis=2)
        new_labels = np.argmin(dist, axis=1)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for c in range(k):
            members = labels == c
            if not members.any():
                continue
            for j, arity in enumerate(arities):
                centroids[c, j] = _weighted_mode(points[members, j], weights[members], arity)
    dist = (points[:, None, :] != centroids[None, :, :]).sum(axis=2)
    labels = np.argmin(dist, axis=1)
    cost = float((dist[np.arange(len(points)), labels] * weights).sum())
    return _KModesResult(centroids, cost, labels)


def mine_static_patterns(
    data: Dataset,
    static_vars: Sequence[str],
    k: int,
    min_support: float = 0.0,
    seed: int = 0,
    restarts: int = 10,
    max_iter: int = 100,
) -> PatternCatalog:
    """Cluster the static-variable columns with k-modes and report frequent centroids.

    Each centroid's support is the exact fraction of rows matching it on every
    static variable. Duplicate centroids are merged; the catalog is sorted by
    support (descending), then by label.
    """
    for name in static_vars:
        if name not in data.schema:
            raise SchemaError(f"unknown static variable {name!r}")
    if k < 0:
        raise ValueError("k must be non-negative")
    if k == 0 or len(data) == 0:
        return PatternCatalog()

    columns = data.columns(static_vars)
    points, counts = np.unique(columns, axis=0, return_counts=True)
    weights = counts.astype(float)
    arities = [data.schema.arity(name) for name in static_vars]
    k_eff = min(k, len(points))
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(restarts):
        result = _kmodes(points, weights, arities, k_eff, rng, max_iter)
        if best is None or result.cost < best.cost:
            best = result

    found = {}
    for centroid in np.unique(best.centroids, axis=0):
        support = float(np.all(columns == centroid, axis=1).mean())
        if support < min_support:
            continue
        assignments = {name: data.schema.states(name)[int(s)] for name, s in zip(static_vars, centroid)}
        label = " + ".join(f"{name}={value}" for name, value in assignments.items())
        found[label] = (StaticCombination.of(assignments, label), support)
    ordered = sorted(found.values(), key=lambda item: (-item[1], item[0].label))
    return PatternCatalog(tuple(p for p, _ in ordered), tuple(s for _, s in ordered))
