"""Core domain types: datasets, design matrices, posterior draws and ATE summaries.

Everything here is immutable after construction. Arrays handed to a
constructor are copied and frozen (``writeable = False``) so that the same
object can be shared by concurrent workers.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

__all__ = [
    "AteDistribution",
    "ColumnEncoding",
    "ColumnKind",
    "DataValidationError",
    "Dataset",
    "DegenerateColumnError",
    "DesignMatrix",
    "EncodingError",
    "EncodingMeta",
    "ModelOrder",
    "ModelRole",
    "ModelSpec",
    "OutcomeKind",
    "PosteriorDraws",
    "PredictionKind",
    "PredictionMatrix",
    "SchemaError",
    "apply_design",
    "build_design",
    "outcome_scaling",
    "read_csv",
    "write_csv",
]

PROB_FLOOR = 1e-9


class DataValidationError(ValueError):
    """Raised when a dataset violates its structural invariants."""


class DegenerateColumnError(DataValidationError):
    """A continuous column has zero variance and cannot be standardized."""


class EncodingError(ValueError):
    """A value cannot be encoded with stored encoding metadata."""


class SchemaError(ValueError):
    """Raw rows or a sidecar schema do not match the expected columns."""


class OutcomeKind(str, Enum):
    BINARY = "binary"
    CONTINUOUS = "continuous"


class ColumnKind(str, Enum):
    BINARY = "binary"
    CATEGORICAL = "categorical"
    CONTINUOUS = "continuous"


class ModelOrder(str, Enum):
    FIRST = "first"
    SECOND = "second"


class ModelRole(str, Enum):
    OUTCOME = "outcome"
    PROPENSITY = "propensity"


class PredictionKind(str, Enum):
    INITIAL_OUTCOME = "initial_outcome"
    PROPENSITY_SCORE = "propensity_score"
    CLEVER_COVARIATE = "clever_covariate"
    TARGETED_OUTCOME = "targeted_outcome"


def _frozen(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


def _is_binary(values: np.ndarray) -> bool:
    return bool(np.all((values == 0) | (values == 1)))


@dataclass(frozen=True)
class Dataset:
    """Confounders, a binary treatment and an outcome for ``d`` units.

    Categorical confounders hold non-negative integer level codes. Level
    indices used for modelling are assigned from the observed levels when a
    design is built.
    """

    confounders: np.ndarray
    treatment: np.ndarray
    outcome: np.ndarray
    outcome_kind: OutcomeKind
    column_names: tuple[str, ...] = ()
    column_kinds: tuple[ColumnKind, ...] = ()
    treatment_name: str = "A"
    outcome_name: str = "Y"

    def __post_init__(self):
        x = np.asarray(self.confounders, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2:
            raise DataValidationError("confounders must be a 2-D matrix")
        a = np.asarray(self.treatment, dtype=float).ravel()
        y = np.asarray(self.outcome, dtype=float).ravel()
        d, p = x.shape
        if d < 1:
            raise DataValidationError("dataset needs at least one row")
        if a.shape[0] != d or y.shape[0] != d:
            raise DataValidationError(
                f"row counts differ: confounders {d}, treatment {a.shape[0]}, outcome {y.shape[0]}"
            )
        if not np.all(np.isfinite(x)) or not np.all(np.isfinite(y)):
            raise DataValidationError("non-finite values in confounders or outcome")
        if not _is_binary(a):
            raise DataValidationError("treatment must contain only 0 or 1")
        kind = OutcomeKind(self.outcome_kind)
        if kind is OutcomeKind.BINARY and not _is_binary(y):
            raise DataValidationError("binary outcome must contain only 0 or 1")

        names = tuple(self.column_names) or tuple(f"X{j + 1}" for j in range(p))
        kinds = tuple(ColumnKind(k) for k in self.column_kinds) or (ColumnKind.CONTINUOUS,) * p
        if len(names) != p or len(kinds) != p:
            raise DataValidationError("column_names/column_kinds must match confounder columns")
        if len(set(names)) != p:
            raise DataValidationError("duplicate confounder column names")
        for j, k in enumerate(kinds):
            col = x[:, j]
            if k is ColumnKind.BINARY and not _is_binary(col):
                raise DataValidationError(f"column {names[j]!r} declared binary but has other values")
            if k is ColumnKind.CATEGORICAL and (
                np.any(col < 0) or np.any(col != np.round(col))
            ):
                raise DataValidationError(
                    f"column {names[j]!r} declared categorical needs non-negative integer codes"
                )

        object.__setattr__(self, "confounders", _frozen(x))
        object.__setattr__(self, "treatment", _frozen(a))
        object.__setattr__(self, "outcome", _frozen(y))
        object.__setattr__(self, "outcome_kind", kind)
        object.__setattr__(self, "column_names", names)
        object.__setattr__(self, "column_kinds", kinds)

    @property
    def n(self) -> int:
        return self.confounders.shape[0]

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        return Dataset(
            self.confounders[rows],
            self.treatment[rows],
            self.outcome[rows],
            self.outcome_kind,
            self.column_names,
            self.column_kinds,
            self.treatment_name,
            self.outcome_name,
        )

    def with_treatment(self, a: int) -> "Dataset":
        """Copy of the dataset with every treatment set to ``a``."""
        return Dataset(
            self.confounders,
            np.full(self.n, float(a)),
            self.outcome,
            self.outcome_kind,
            self.column_names,
            self.column_kinds,
            self.treatment_name,
            self.outcome_name,
        )

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.outcome_kind == other.outcome_kind
            and self.column_names == other.column_names
            and self.column_kinds == other.column_kinds
            and np.array_equal(self.confounders, other.confounders)
            and np.array_equal(self.treatment, other.treatment)
            and np.array_equal(self.outcome, other.outcome)
        )

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True)
class ModelSpec:
    """Which GLM to fit for one TMLE nuisance model."""

    order: ModelOrder = ModelOrder.FIRST
    role: ModelRole = ModelRole.OUTCOME
    prior_scale: float = 1.0
    error_sd_prior_scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "order", ModelOrder(self.order))
        object.__setattr__(self, "role", ModelRole(self.role))
        if not self.prior_scale > 0 or not self.error_sd_prior_scale > 0:
            raise ValueError("prior scales must be positive")


@dataclass(frozen=True)
class ColumnEncoding:
    name: str
    kind: ColumnKind
    levels: tuple[float, ...] = ()
    mean: float = 0.0
    scale: float = 1.0


@dataclass(frozen=True)
class EncodingMeta:
    """Everything needed to re-encode raw confounder rows."""

    columns: tuple[ColumnEncoding, ...]
    order: ModelOrder
    includes_treatment: bool
    column_names: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "order": self.order.value,
            "includes_treatment": self.includes_treatment,
            "column_names": list(self.column_names),
            "columns": [
                {
                    "name": c.name,
                    "kind": c.kind.value,
                    "levels": list(c.levels),
                    "mean": c.mean,
                    "scale": c.scale,
                }
                for c in self.columns
            ],
        }

    @classmethod
    def from_dict(cls, payload: Mapping) -> "EncodingMeta":
        return cls(
            columns=tuple(
                ColumnEncoding(
                    c["name"], ColumnKind(c["kind"]), tuple(c["levels"]), c["mean"], c["scale"]
                )
                for c in payload["columns"]
            ),
            order=ModelOrder(payload["order"]),
            includes_treatment=bool(payload["includes_treatment"]),
            column_names=tuple(payload["column_names"]),
        )


@dataclass(frozen=True)
class DesignMatrix:
    values: np.ndarray
    column_names: tuple[str, ...]
    encoding_meta: EncodingMeta
    includes_treatment: bool

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values))

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def with_treatment(self, a: int) -> "DesignMatrix":
        """Same design with the treatment column forced to ``a``."""
        if not self.includes_treatment:
            raise EncodingError("design has no treatment column")
        values = np.array(self.values)
        values[:, -1] = float(a)
        return DesignMatrix(values, self.column_names, self.encoding_meta, True)


def _encode_blocks(raw: np.ndarray, columns: Sequence[ColumnEncoding]):
    """Main-effect blocks, one list of (name, vector) per source column."""
    blocks = []
    for j, enc in enumerate(columns):
        col = raw[:, j]
        if enc.kind is ColumnKind.CONTINUOUS:
            blocks.append([(enc.name, (col - enc.mean) / enc.scale)])
        elif enc.kind is ColumnKind.BINARY:
            if not _is_binary(col):
                raise EncodingError(f"column {enc.name!r} has non-binary values")
            blocks.append([(enc.name, col.astype(float))])
        else:
            unseen = np.setdiff1d(np.unique(col), np.asarray(enc.levels, dtype=float))
            if unseen.size:
                raise EncodingError(
                    f"column {enc.name!r} has levels {unseen.tolist()} not seen at fit time"
                )
            blocks.append(
                [(f"{enc.name}[{int(lv)}]", (col == lv).astype(float)) for lv in enc.levels[1:]]
            )
    return blocks


def _assemble(raw: np.ndarray, meta: EncodingMeta, treatment) -> tuple[np.ndarray, tuple[str, ...]]:
    d = raw.shape[0]
    blocks = _encode_blocks(raw, meta.columns)
    names = ["(Intercept)"]
    cols = [np.ones(d)]
    for block in blocks:
        for name, vec in block:
            names.append(name)
            cols.append(vec)
    if meta.order is ModelOrder.SECOND:
        for enc, block in zip(meta.columns, blocks):
            if enc.kind is ColumnKind.CONTINUOUS:
                name, vec = block[0]
                names.append(f"{name}^2")
                cols.append(vec * vec)
        for i in range(len(blocks)):
            for k in range(i + 1, len(blocks)):
                for n1, v1 in blocks[i]:
                    for n2, v2 in blocks[k]:
                        names.append(f"{n1}:{n2}")
                        cols.append(v1 * v2)
    if meta.includes_treatment:
        if treatment is None:
            raise SchemaError("design includes the treatment column but no treatment was given")
        t = np.asarray(treatment, dtype=float).ravel()
        if t.shape[0] != d:
            raise SchemaError("treatment length does not match raw rows")
        names.append("A")
        cols.append(t)
    return np.column_stack(cols), tuple(names)


def build_design(dataset: Dataset, spec: ModelSpec) -> DesignMatrix:
    """Encode a dataset for the GLM described by ``spec``.

    Intercept first, then per-column encodings (reference-coded categoricals,
    standardized continuous columns), then second-order terms when requested,
    and the treatment column last for outcome models.
    """
    x = dataset.confounders
    columns = []
    for j, (name, kind) in enumerate(zip(dataset.column_names, dataset.column_kinds)):
        col = x[:, j]
        if kind is ColumnKind.CONTINUOUS:
            mean = float(np.mean(col))
            scale = float(np.std(col))
            if not scale > 0:
                raise DegenerateColumnError(f"continuous column {name!r} has zero variance")
            columns.append(ColumnEncoding(name, kind, (), mean, scale))
        elif kind is ColumnKind.CATEGORICAL:
            levels = tuple(float(v) for v in np.unique(col))
            columns.append(ColumnEncoding(name, kind, levels))
        else:
            columns.append(ColumnEncoding(name, kind))
    includes_treatment = spec.role is ModelRole.OUTCOME
    meta = EncodingMeta(tuple(columns), spec.order, includes_treatment, dataset.column_names)
    values, names = _assemble(x, meta, dataset.treatment if includes_treatment else None)
    return DesignMatrix(values, names, meta, includes_treatment)


def apply_design(raw_rows, encoding_meta: EncodingMeta, treatment=None) -> DesignMatrix:
    """Encode new raw confounder rows with stored metadata (no refitting)."""
    raw = np.asarray(raw_rows, dtype=float)
    if raw.ndim == 1:
        raw = raw[None, :]
    if raw.ndim != 2 or raw.shape[1] != len(encoding_meta.columns):
        raise SchemaError(
            f"expected {len(encoding_meta.columns)} confounder columns, got shape {raw.shape}"
        )
    values, names = _assemble(raw, encoding_meta, treatment)
    return DesignMatrix(values, names, encoding_meta, encoding_meta.includes_treatment)


def outcome_scaling(dataset: Dataset) -> tuple[float, float]:
    """(center, scale) used to standardize the outcome; identity for binary."""
    if dataset.outcome_kind is OutcomeKind.BINARY:
        return 0.0, 1.0
    scale = float(np.std(dataset.outcome))
    if not scale > 0:
        raise DegenerateColumnError("continuous outcome has zero variance")
    return float(np.mean(dataset.outcome)), scale


@dataclass(frozen=True)
class PosteriorDraws:
    """Named parameter blocks, each ``(m, dim)`` with ``m = n_chains * n_draws_per_chain``.

    Rows are ordered chain by chain.
    """

    blocks: Mapping[str, np.ndarray]
    n_chains: int
    n_draws_per_chain: int
    diagnostics: Mapping = field(default_factory=dict)

    def __post_init__(self):
        m = self.n_chains * self.n_draws_per_chain
        frozen = {}
        for name, arr in self.blocks.items():
            arr = np.asarray(arr, dtype=float)
            if arr.ndim == 1:
                arr = arr[:, None]
            if arr.shape[0] != m:
                raise ValueError(f"block {name!r} has {arr.shape[0]} draws, expected {m}")
            if name.startswith("sigma") and not np.all(arr > 0):
                raise ValueError(f"scale block {name!r} has non-positive draws")
            frozen[name] = _frozen(arr)
        object.__setattr__(self, "blocks", frozen)

    @property
    def m(self) -> int:
        return self.n_chains * self.n_draws_per_chain

    def __getitem__(self, name: str) -> np.ndarray:
        return self.blocks[name]

    def __contains__(self, name: str) -> bool:
        return name in self.blocks

    def merged(self, other: "PosteriorDraws", diagnostics: Mapping | None = None) -> "PosteriorDraws":
        if other.m != self.m:
            raise ValueError("cannot merge draws with different draw counts")
        clash = set(self.blocks) & set(other.blocks)
        if clash:
            raise ValueError(f"duplicate blocks {sorted(clash)}")
        return PosteriorDraws(
            {**self.blocks, **other.blocks},
            self.n_chains,
            self.n_draws_per_chain,
            diagnostics if diagnostics is not None else {},
        )


@dataclass(frozen=True)
class PredictionMatrix:
    """``d x m`` per-row, per-draw predictions."""

    values: np.ndarray
    kind: PredictionKind
    outcome_kind: OutcomeKind | None = None

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 2:
            raise ValueError("prediction matrix must be 2-D")
        kind = PredictionKind(self.kind)
        bounded = kind is PredictionKind.PROPENSITY_SCORE or (
            kind in (PredictionKind.INITIAL_OUTCOME, PredictionKind.TARGETED_OUTCOME)
            and self.outcome_kind is OutcomeKind.BINARY
        )
        if not np.all(np.isfinite(vals)):
            raise ValueError("prediction matrix contains NaN or Inf")
        if bounded and not np.all((vals > 0) & (vals < 1)):
            raise ValueError(f"{kind.value} predictions must lie in (0, 1)")
        object.__setattr__(self, "values", _frozen(vals))
        object.__setattr__(self, "kind", kind)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


@dataclass(frozen=True)
class AteDistribution:
    samples: np.ndarray
    mean: float
    ci_low: float
    ci_high: float
    kde_x: np.ndarray
    kde_density: np.ndarray

    @property
    def sd(self) -> float:
        return float(np.std(self.samples, ddof=1))

    @property
    def width(self) -> float:
        return self.ci_high - self.ci_low

    @property
    def kde(self) -> list[tuple[float, float]]:
        return list(zip(self.kde_x.tolist(), self.kde_density.tolist()))

    def contains(self, value: float) -> bool:
        return self.ci_low <= value <= self.ci_high


# -- CSV persistence -----------------------------------------------------------


def _fmt(value: float, kind: ColumnKind | None) -> str:
    if kind in (ColumnKind.BINARY, ColumnKind.CATEGORICAL):
        return str(int(value))
    return repr(float(value))


def write_csv(dataset: Dataset, data_path, schema_path) -> None:
    """Write ``dataset`` as CSV plus the JSON sidecar schema."""
    outcome_kind = (
        ColumnKind.BINARY if dataset.outcome_kind is OutcomeKind.BINARY else ColumnKind.CONTINUOUS
    )
    header = list(dataset.column_names) + [dataset.treatment_name, dataset.outcome_name]
    with open(data_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i in range(dataset.n):
            row = [_fmt(v, k) for v, k in zip(dataset.confounders[i], dataset.column_kinds)]
            row.append(_fmt(dataset.treatment[i], ColumnKind.BINARY))
            row.append(_fmt(dataset.outcome[i], outcome_kind))
            writer.writerow(row)
    columns = [
        {"name": n, "kind": k.value, "role": "confounder"}
        for n, k in zip(dataset.column_names, dataset.column_kinds)
    ]
    columns.append({"name": dataset.treatment_name, "kind": "binary", "role": "treatment"})
    columns.append({"name": dataset.outcome_name, "kind": outcome_kind.value, "role": "outcome"})
    Path(schema_path).write_text(json.dumps({"columns": columns}, indent=2) + "\n")


def _parse_column(raw: list[str], kind: ColumnKind, name: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in raw])
    except ValueError:
        if kind is not ColumnKind.CATEGORICAL:
            raise SchemaError(f"column {name!r} has non-numeric values") from None
    # string labels: level index by sorted label
    labels = sorted(set(raw))
    index = {lab: i for i, lab in enumerate(labels)}
    return np.array([float(index[v]) for v in raw])


def read_csv(data_path, schema_path) -> Dataset:
    """Load a dataset from CSV using the sidecar schema for column kinds and roles."""
    try:
        schema = json.loads(Path(schema_path).read_text())
        entries = schema["columns"]
        specs = [(e["name"], ColumnKind(e["kind"]), e["role"]) for e in entries]
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"invalid schema: {exc}") from exc
    with open(data_path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError("empty CSV file") from None
        rows = [r for r in reader if r]
    missing = [n for n, _, _ in specs if n not in header]
    if missing:
        raise SchemaError(f"columns {missing} declared in schema but absent from CSV")
    pos = {n: header.index(n) for n, _, _ in specs}
    roles = [r for _, _, r in specs]
    if roles.count("treatment") != 1 or roles.count("outcome") != 1:
        raise SchemaError("schema needs exactly one treatment and one outcome column")
    bad = set(roles) - {"confounder", "treatment", "outcome"}
    if bad:
        raise SchemaError(f"unknown roles {sorted(bad)}")

    def column(name, kind):
        return _parse_column([r[pos[name]] for r in rows], kind, name)

    conf = [(n, k) for n, k, r in specs if r == "confounder"]
    (t_name, _), = [(n, k) for n, k, r in specs if r == "treatment"]
    (y_name, y_kind), = [(n, k) for n, k, r in specs if r == "outcome"]
    if y_kind is ColumnKind.CATEGORICAL:
        raise SchemaError("categorical outcomes are not supported")
    x = (
        np.column_stack([column(n, k) for n, k in conf])
        if conf
        else np.zeros((len(rows), 0))
    )
    return Dataset(
        x,
        column(t_name, ColumnKind.BINARY),
        column(y_name, y_kind),
        OutcomeKind.BINARY if y_kind is ColumnKind.BINARY else OutcomeKind.CONTINUOUS,
        tuple(n for n, _ in conf),
        tuple(k for _, k in conf),
        t_name,
        y_name,
    )

