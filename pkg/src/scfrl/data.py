"""Tabular datasets: feature schema, CSV ingestion, normalization, splitting.

Every feature is embedded as a single scalar on [-1, 1]. Continuous features
use a min-max affine map of their domain; discrete features place their
integer codes on the uniform grid ``-1 + 2 * code / (C - 1)``.

Schema sidecar (JSON)::

    {
      "label": {"column": "income", "target": ">50K"},
      "features": [
        {"name": "age", "kind": "continuous", "mutable": false, "min": 17, "max": 90},
        {"name": "hours", "kind": "continuous", "mutable": true},
        {"name": "education", "kind": "discrete", "mutable": true,
         "categories": ["HS", "Bachelors", "Masters", "PhD"]}
      ]
    }

``label.target`` is optional (defaults to the minority label). ``min``/``max``
are optional for continuous features; missing bounds are fitted on the
training split only (see :func:`fit_domains`).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import (
    DataError,
    DomainViolation,
    EmptyPartition,
    InvalidSpec,
    MalformedSchema,
    MissingColumn,
    OutOfRange,
)

CONTINUOUS = "continuous"
DISCRETE = "discrete"


@dataclass(frozen=True)
class FeatureSchema:
    name: str
    kind: str
    mutable: bool = True
    low: Optional[float] = None
    high: Optional[float] = None
    categories: Optional[tuple] = None

    def __post_init__(self):
        if not self.name:
            raise MalformedSchema("feature without a name")
        if self.kind == CONTINUOUS:
            if self.categories is not None:
                raise MalformedSchema(f"{self.name}: continuous feature with categories")
            if (self.low is None) != (self.high is None):
                raise MalformedSchema(f"{self.name}: give both min and max or neither")
            if self.low is not None:
                object.__setattr__(self, "low", float(self.low))
                object.__setattr__(self, "high", float(self.high))
                if not (np.isfinite(self.low) and np.isfinite(self.high)) or not self.low < self.high:
                    raise MalformedSchema(f"{self.name}: need finite min < max")
        elif self.kind == DISCRETE:
            if self.categories is None or len(self.categories) < 2:
                raise MalformedSchema(f"{self.name}: discrete feature needs >= 2 categories")
            cats = tuple(str(c) for c in self.categories)
            if len(set(cats)) != len(cats):
                raise MalformedSchema(f"{self.name}: duplicate categories")
            object.__setattr__(self, "categories", cats)
        else:
            raise MalformedSchema(f"{self.name}: unknown kind {self.kind!r}")

    @property
    def fitted(self) -> bool:
        return self.kind == DISCRETE or self.low is not None

    @property
    def n_categories(self) -> int:
        return len(self.categories) if self.kind == DISCRETE else 0

    @property
    def norm(self) -> tuple[float, float]:
        """``(scale, offset)`` with ``normalized = scale * raw + offset``.

        For discrete features ``raw`` is the integer category code.
        """
        if self.kind == DISCRETE:
            return 2.0 / (self.n_categories - 1), -1.0
        if not self.fitted:
            raise MalformedSchema(f"{self.name}: domain not fitted")
        span = self.high - self.low
        return 2.0 / span, -1.0 - 2.0 * self.low / span

    @property
    def grid(self) -> Optional[np.ndarray]:
        if self.kind != DISCRETE:
            return None
        return np.linspace(-1.0, 1.0, self.n_categories)

    def code_of(self, label) -> int:
        try:
            return self.categories.index(str(label))
        except ValueError:
            raise KeyError(label) from None

    def normalize_value(self, raw: float) -> float:
        if self.kind == DISCRETE:
            return -1.0 + 2.0 * raw / (self.n_categories - 1)
        if not self.fitted:
            raise MalformedSchema(f"{self.name}: domain not fitted")
        return 2.0 * (raw - self.low) / (self.high - self.low) - 1.0

    def snap(self, v: float) -> float:
        """Nearest representable normalized value (identity for continuous)."""
        if self.kind == CONTINUOUS:
            return float(v)
        return self.normalize_value(self.nearest_code(v))

    def nearest_code(self, v: float) -> int:
        step = 2.0 / (self.n_categories - 1)
        # round half up so ties resolve deterministically
        return int(np.clip(np.floor((v + 1.0) / step + 0.5), 0, self.n_categories - 1))

    def to_json(self) -> dict:
        out = {"name": self.name, "kind": self.kind, "mutable": self.mutable}
        if self.kind == CONTINUOUS:
            if self.fitted:
                out["min"] = self.low
                out["max"] = self.high
        else:
            out["categories"] = list(self.categories)
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "FeatureSchema":
        if not isinstance(obj, dict):
            raise MalformedSchema(f"feature entry must be an object, got {obj!r}")
        unknown = set(obj) - {"name", "kind", "mutable", "min", "max", "categories"}
        if unknown:
            raise MalformedSchema(f"unknown feature keys {sorted(unknown)}")
        try:
            name, kind = obj["name"], obj["kind"]
        except KeyError as e:
            raise MalformedSchema(f"feature entry missing {e.args[0]!r}") from None
        mutable = obj.get("mutable", True)
        if not isinstance(mutable, bool):
            raise MalformedSchema(f"{name}: 'mutable' must be true/false")
        cats = obj.get("categories")
        return cls(
            name=str(name),
            kind=kind,
            mutable=mutable,
            low=obj.get("min"),
            high=obj.get("max"),
            categories=tuple(cats) if cats is not None else None,
        )


@dataclass(frozen=True)
class Dataset:
    """Immutable table. ``labels`` are 1 for the target class, 0 otherwise.

    ``rows`` hold raw values (category codes for discrete features) until
    :func:`normalize` is applied, after which ``normalized`` is True.
    """

    schema: tuple
    rows: np.ndarray
    labels: np.ndarray
    target_class: str = "1"
    other_class: str = "0"
    label_name: str = "label"
    normalized: bool = False

    def __post_init__(self):
        schema = tuple(self.schema)
        object.__setattr__(self, "schema", schema)
        names = [f.name for f in schema]
        if len(set(names)) != len(names):
            raise MalformedSchema("duplicate feature names")
        rows = np.array(self.rows, dtype=np.float64, copy=True)
        if rows.ndim == 1 and len(schema) == 1:
            rows = rows[:, None]
        labels = np.array(self.labels, dtype=np.int64, copy=True).ravel()
        if rows.ndim != 2 or rows.shape[1] != len(schema):
            raise DataError(f"rows must have shape (n, {len(schema)}), got {rows.shape}")
        if rows.shape[0] < 1 or rows.shape[0] != labels.shape[0]:
            raise DataError("need >= 1 row and one label per row")
        if not np.isin(labels, (0, 1)).all():
            raise DataError("labels must be binary (0/1)")
        for j, f in enumerate(schema):
            col = rows[:, j]
            if not np.isfinite(col).all():
                bad = int(np.flatnonzero(~np.isfinite(col))[0])
                raise DomainViolation(bad, f.name, col[bad])
            if self.normalized:
                lo, hi = -1.0, 1.0
            elif f.kind == DISCRETE:
                lo, hi = 0, f.n_categories - 1
                frac = col != np.round(col)
                if frac.any():
                    bad = int(np.flatnonzero(frac)[0])
                    raise DomainViolation(bad, f.name, col[bad])
            elif f.fitted:
                lo, hi = f.low, f.high
            else:
                continue
            out = (col < lo) | (col > hi)
            if out.any():
                bad = int(np.flatnonzero(out)[0])
                raise DomainViolation(bad, f.name, col[bad])
        rows.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "labels", labels)

    def __len__(self):
        return self.rows.shape[0]

    @property
    def n_features(self) -> int:
        return len(self.schema)

    @property
    def feature_names(self) -> list[str]:
        return [f.name for f in self.schema]

    @property
    def mutable_indices(self) -> list[int]:
        return [j for j, f in enumerate(self.schema) if f.mutable]

    @property
    def n_mutable(self) -> int:
        return len(self.mutable_indices)

    def subset(self, idx) -> "Dataset":
        return replace(self, rows=self.rows[idx], labels=self.labels[idx])


@dataclass(frozen=True)
class SplitPair:
    train: Dataset
    test: Dataset
    seed: int
    train_index: np.ndarray = field(repr=False, default=None)
    test_index: np.ndarray = field(repr=False, default=None)


# -- schema files -----------------------------------------------------------


def parse_schema(obj) -> tuple[list[FeatureSchema], str, Optional[str]]:
    """Return ``(features, label_column, target_label_or_None)``."""
    if not isinstance(obj, dict) or "features" not in obj or "label" not in obj:
        raise MalformedSchema("schema needs top-level 'features' and 'label'")
    label = obj["label"]
    if isinstance(label, str):
        label = {"column": label}
    if not isinstance(label, dict) or "column" not in label:
        raise MalformedSchema("'label' must name a 'column'")
    if not isinstance(obj["features"], list) or not obj["features"]:
        raise MalformedSchema("'features' must be a non-empty list")
    feats = [FeatureSchema.from_json(f) for f in obj["features"]]
    if not any(f.mutable for f in feats):
        raise MalformedSchema("at least one feature must be mutable")
    target = label.get("target")
    return feats, str(label["column"]), None if target is None else str(target)


def read_schema(path) -> tuple[list[FeatureSchema], str, Optional[str]]:
    path = Path(path)
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise MalformedSchema(f"{path}: {e}") from None
    return parse_schema(obj)


def schema_document(d: Dataset) -> dict:
    return {
        "label": {"column": d.label_name, "target": d.target_class, "other": d.other_class},
        "features": [f.to_json() for f in d.schema],
    }


# -- loading ----------------------------------------------------------------


def load_dataset(csv_path, schema_path) -> Dataset:
    """Read a raw CSV and validate every value against the sidecar schema."""
    feats, label_col, target = read_schema(schema_path)
    parsed = _parse_schema_extras(schema_path)
    csv_path = Path(csv_path)
    with open(csv_path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{csv_path}: empty file") from None
        records = [r for r in reader if r]
    col = {h: i for i, h in enumerate(header)}
    for name in [f.name for f in feats] + [label_col]:
        if name not in col:
            raise MissingColumn(f"{csv_path}: column {name!r} not in header")
    if not records:
        raise DataError(f"{csv_path}: no data rows")

    rows = np.empty((len(records), len(feats)))
    raw_labels = []
    for i, rec in enumerate(records):
        if len(rec) != len(header):
            raise DataError(f"{csv_path}: row {i} has {len(rec)} fields, expected {len(header)}")
        for j, f in enumerate(feats):
            cell = rec[col[f.name]].strip()
            if f.kind == DISCRETE:
                try:
                    rows[i, j] = f.code_of(cell)
                except KeyError:
                    raise DomainViolation(i, f.name, cell) from None
            else:
                try:
                    rows[i, j] = float(cell)
                except ValueError:
                    raise DomainViolation(i, f.name, cell) from None
        raw_labels.append(rec[col[label_col]].strip())

    values = sorted(set(raw_labels))
    if len(values) > 2:
        raise DataError(f"{csv_path}: label column {label_col!r} is not binary: {values}")
    if target is None:
        counts = {v: raw_labels.count(v) for v in values}
        # minority class; ties broken by label order
        target = min(values, key=lambda v: (counts[v], v))
    other = parsed.get("other")
    if other is None:
        rest = [v for v in values if v != target]
        other = rest[0] if rest else f"not {target}"
    for i, lab in enumerate(raw_labels):
        if lab not in (target, other):
            raise DomainViolation(i, label_col, lab)
    labels = np.array([lab == target for lab in raw_labels], dtype=np.int64)
    return Dataset(feats, rows, labels, target_class=target, other_class=other, label_name=label_col)


def _parse_schema_extras(schema_path) -> dict:
    obj = json.loads(Path(schema_path).read_text(encoding="utf-8"))
    label = obj.get("label")
    if isinstance(label, dict) and label.get("other") is not None:
        return {"other": str(label["other"])}
    return {}


def write_csv(d: Dataset, path) -> None:
    """Write raw (or normalized) rows plus the label column as CSV.

    Discrete features are written as category labels unless ``d`` is
    normalized, in which case every value is the float repr.
    """
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(d.feature_names + [d.label_name])
        for row, lab in zip(d.rows, d.labels):
            cells = []
            for v, f in zip(row, d.schema):
                if f.kind == DISCRETE and not d.normalized:
                    cells.append(f.categories[int(v)])
                else:
                    cells.append(repr(float(v)))
            cells.append(d.target_class if lab else d.other_class)
            w.writerow(cells)


def read_normalized_csv(csv_path, schema_path) -> Dataset:
    """Inverse of :func:`write_csv` for a normalized dataset."""
    feats, label_col, target = read_schema(schema_path)
    other = _parse_schema_extras(schema_path).get("other", "0")
    with open(csv_path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        records = [r for r in reader if r]
    col = {h: i for i, h in enumerate(header)}
    for name in [f.name for f in feats] + [label_col]:
        if name not in col:
            raise MissingColumn(f"{csv_path}: column {name!r} not in header")
    rows = np.array([[float(r[col[f.name]]) for f in feats] for r in records])
    labels = np.array([r[col[label_col]] == target for r in records], dtype=np.int64)
    return Dataset(feats, rows, labels, target_class=target, other_class=other,
                   label_name=label_col, normalized=True)


# -- transforms -------------------------------------------------------------


def fit_domains(d: Dataset) -> tuple:
    """Schema copy with every unset continuous domain set to the min/max of ``d``."""
    out = []
    for j, f in enumerate(d.schema):
        if f.fitted:
            out.append(f)
            continue
        lo, hi = float(d.rows[:, j].min()), float(d.rows[:, j].max())
        if not lo < hi:
            hi = lo + 1.0
        out.append(replace(f, low=lo, high=hi))
    return tuple(out)


def apply_schema(d: Dataset, schema: Sequence[FeatureSchema]) -> Dataset:
    """Re-interpret raw ``d`` under fitted ``schema``.

    Continuous values outside a fitted domain are clipped onto it; this only
    happens for held-out rows when bounds were fitted on the training split.
    """
    rows = np.array(d.rows)
    for j, f in enumerate(schema):
        if f.kind == CONTINUOUS and f.fitted:
            rows[:, j] = np.clip(rows[:, j], f.low, f.high)
    return replace(d, schema=tuple(schema), rows=rows)


def normalize(d: Dataset) -> Dataset:
    if d.normalized:
        return d
    rows = np.empty_like(d.rows)
    for j, f in enumerate(d.schema):
        scale, offset = f.norm
        col = d.rows[:, j]
        if f.kind == CONTINUOUS:
            rows[:, j] = 2.0 * (col - f.low) / (f.high - f.low) - 1.0
        else:
            rows[:, j] = col * scale + offset
    # endpoint rounding can leave values a few ulp outside [-1, 1]
    np.clip(rows, -1.0, 1.0, out=rows)
    return replace(d, rows=rows, normalized=True)


def denormalize(v: float, f: FeatureSchema):
    """Raw value for normalized ``v``: a float, or a category label for discrete features."""
    v = float(v)
    if not -1.0 <= v <= 1.0:
        raise OutOfRange(f"{f.name}: {v} not in [-1, 1]")
    if f.kind == DISCRETE:
        return f.categories[f.nearest_code(v)]
    if not f.fitted:
        raise MalformedSchema(f"{f.name}: domain not fitted")
    return f.low + (v + 1.0) * (f.high - f.low) / 2.0


def split(d: Dataset, ratio: float = 0.8, seed: int = 0) -> SplitPair:
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"ratio must lie in (0, 1), got {ratio}")
    n = len(d)
    n_train = int(round(n * ratio))
    if n_train == 0 or n_train == n:
        raise EmptyPartition(f"{n} rows at ratio {ratio} leave an empty side")
    perm = np.random.default_rng(seed).permutation(n)
    tr, te = np.sort(perm[:n_train]), np.sort(perm[n_train:])
    return SplitPair(d.subset(tr), d.subset(te), seed, tr, te)


# -- synthetic data ---------------------------------------------------------


def make_synthetic(n: int, k_cont: int, k_disc: int, k_immut: int = 0, seed: int = 0) -> Dataset:
    """Reproducible mixed-type dataset with a non-linear label rule.

    Features are ``cont0..`` (domain [0, 100]) followed by ``disc0..`` (four
    categories ``c0..c3``). The first ``k_immut`` features are immutable.
    With ``v`` the normalized values and ``m_0..m_{K-1}`` the mutable ones::

        score = sum_i w_i * v[m_i] + 0.5 * v[m_0] * v[m_1] + 0.3 * sum(v[immutable])
        w_i   = 1 - 0.5 * i / (K - 1)        (w_0 = 1 when K == 1)

    and the target label is ``score > q60(score)``, so roughly 40% of rows are
    target (the minority). When ``K >= 2`` at least two mutable features carry
    weight, so no single feature separates the classes perfectly.
    """
    counts = (n, k_cont, k_disc, k_immut)
    if any(int(c) != c or c < 0 for c in counts):
        raise InvalidSpec("counts must be non-negative integers")
    d_total = k_cont + k_disc
    if d_total == 0:
        raise InvalidSpec("need at least one feature")
    if n < 10:
        raise InvalidSpec("need n >= 10")
    if k_immut >= d_total:
        raise InvalidSpec("need at least one mutable feature")
    if d_total < 2:
        raise InvalidSpec("need at least two features for a non-trivial label rule")

    n_cat = 4
    schema = [FeatureSchema(f"cont{i}", CONTINUOUS, i >= k_immut, 0.0, 100.0) for i in range(k_cont)]
    schema += [
        FeatureSchema(f"disc{i}", DISCRETE, k_cont + i >= k_immut,
                      categories=tuple(f"c{c}" for c in range(n_cat)))
        for i in range(k_disc)
    ]
    rng = np.random.default_rng(seed)
    for _ in range(100):
        rows = np.empty((n, d_total))
        rows[:, :k_cont] = np.round(rng.uniform(0.0, 100.0, size=(n, k_cont)), 2)
        rows[:, k_cont:] = rng.integers(0, n_cat, size=(n, k_disc))
        labels = _synthetic_labels(schema, rows)
        if 0 < labels.sum() < n:
            break
    else:  # pragma: no cover - astronomically unlikely for n >= 10
        raise InvalidSpec("could not draw both classes")
    return Dataset(schema, rows, labels, target_class="1", other_class="0", label_name="label")


def _synthetic_labels(schema, rows) -> np.ndarray:
    v = np.column_stack([[f.normalize_value(x) for x in rows[:, j]] for j, f in enumerate(schema)])
    mut = [j for j, f in enumerate(schema) if f.mutable]
    imm = [j for j, f in enumerate(schema) if not f.mutable]
    K = len(mut)
    w = np.ones(1) if K == 1 else 1.0 - 0.5 * np.arange(K) / (K - 1)
    score = v[:, mut] @ w
    if K >= 2:
        score = score + 0.5 * v[:, mut[0]] * v[:, mut[1]]
    if imm:
        score = score + 0.3 * v[:, imm].sum(axis=1)
    return (score > np.quantile(score, 0.6)).astype(np.int64)


def bundled_synthetic(seed: int = 0) -> Dataset:
    """The desk-scale reference dataset: 250 rows, K=3 mutable, 1 immutable feature.

    An 80/20 split leaves 200 training instances.
    """
    return make_synthetic(250, k_cont=3, k_disc=1, k_immut=1, seed=seed)
