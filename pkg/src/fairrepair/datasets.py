"""Schema-driven loading of tabular fairness datasets.

A schema is a JSON document::

    {
      "name": "adult",
      "header": false,                  # file has no header row
      "file_columns": ["age", ...],     # names for headerless files
      "delimiter": ",",                 # or "whitespace"
      "na_values": ["?", ""],
      "columns": [{"name": "age", "kind": "numeric"},
                  {"name": "sex", "kind": "categorical"}, ...],
      "label": {"column": "income", "positive": ">50K", "favorable": 1},
      "sensitive": {"column": "sex", "disadvantaged": "Female",
                    "privileged": "Male"},
      "value_maps": {"sex": {"F": "Female"}},
      "filters": [{"column": "x", "min": -30, "max": 30},
                  {"column": "y", "not_in": ["-1"]}],
      "score": {"column": "decile", "center": 4.5, "scale": 4.5}
    }

Column kinds are ``categorical``, ``numeric`` and ``drop``. The sensitive
column is fed to the model as a one-hot feature unless its kind is ``drop``.
File columns that the schema does not mention are ignored. ``score`` names
an optional numeric column used as the regression target of a linear head
(stored centred and scaled in ``EncodedDataset.T``).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import DatasetTooSmallError, RowParseError, SchemaError

KINDS = ("categorical", "numeric", "drop")
BUNDLED_SCHEMAS = ("adult", "compas", "german")


@dataclass
class ColumnSpec:
    name: str
    kind: str


@dataclass
class DatasetSchema:
    name: str
    columns: list
    label_column: str
    positive_label: str
    sensitive_column: str
    disadvantaged_value: str
    privileged_value: Optional[str] = None
    header: bool = True
    file_columns: Optional[list] = None
    delimiter: str = ","
    na_values: list = field(default_factory=lambda: ["", "?", "NA", "N/A"])
    value_maps: dict = field(default_factory=dict)
    filters: list = field(default_factory=list)
    # Optional real-valued training target for linear-head models:
    # {"column": ..., "center": c, "scale": k} gives target (value - c) / k.
    score: Optional[dict] = None
    # Outcome that counts as favourable (used by reject-option classification).
    favorable_label: int = 1

    def __post_init__(self):
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise SchemaError("duplicate column names in schema")
        for c in self.columns:
            if c.kind not in KINDS:
                raise SchemaError(f"column {c.name!r}: kind must be one of {KINDS}")
        if self.label_column in names:
            raise SchemaError("the label column must not be listed among feature columns")
        sens = [c for c in self.columns if c.name == self.sensitive_column]
        if sens and sens[0].kind == "numeric":
            raise SchemaError("the sensitive column must be categorical (or drop)")
        if not self.header and not self.file_columns:
            raise SchemaError("headerless files need 'file_columns'")

    @property
    def sensitive_is_feature(self) -> bool:
        return any(c.name == self.sensitive_column and c.kind == "categorical" for c in self.columns)

    @classmethod
    def from_dict(cls, doc: dict) -> "DatasetSchema":
        try:
            return cls(
                name=doc.get("name", "dataset"),
                columns=[ColumnSpec(c["name"], c.get("kind", "categorical")) for c in doc["columns"]],
                label_column=doc["label"]["column"],
                positive_label=str(doc["label"]["positive"]),
                sensitive_column=doc["sensitive"]["column"],
                disadvantaged_value=str(doc["sensitive"]["disadvantaged"]),
                privileged_value=doc["sensitive"].get("privileged"),
                header=doc.get("header", True),
                file_columns=doc.get("file_columns"),
                delimiter=doc.get("delimiter", ","),
                na_values=doc.get("na_values", ["", "?", "NA", "N/A"]),
                value_maps=doc.get("value_maps", {}),
                filters=doc.get("filters", []),
                score=doc.get("score"),
                favorable_label=int(doc["label"].get("favorable", 1)),
            )
        except KeyError as exc:
            raise SchemaError(f"schema is missing field {exc}") from exc

    def with_sensitive_feature(self, included: bool) -> "DatasetSchema":
        """Copy of the schema with the sensitive column included in or excluded from X."""
        cols = [
            ColumnSpec(c.name, ("categorical" if included else "drop") if c.name == self.sensitive_column else c.kind)
            for c in self.columns
        ]
        if included and not any(c.name == self.sensitive_column for c in cols):
            cols.append(ColumnSpec(self.sensitive_column, "categorical"))
        doc = dict(self.__dict__)
        doc["columns"] = cols
        return DatasetSchema(**doc)


def load_schema(name_or_path) -> DatasetSchema:
    """Load a bundled schema by name (``adult``, ``compas``, ``german``) or a JSON file."""
    if str(name_or_path) in BUNDLED_SCHEMAS:
        text = resources.files("fairrepair.schemas").joinpath(f"{name_or_path}.json").read_text()
    else:
        path = Path(name_or_path)
        if not path.exists():
            raise SchemaError(f"no bundled schema or file named {name_or_path!r}")
        text = path.read_text()
    return DatasetSchema.from_dict(json.loads(text))


@dataclass
class EncodedDataset:
    X: np.ndarray
    Y: np.ndarray
    S: np.ndarray
    feature_names: list
    # column name -> (first feature index, category labels in encoding order)
    categorical: dict = field(default_factory=dict)
    # column name -> feature index
    numeric: dict = field(default_factory=dict)
    # unscaled numeric values, one column per entry of ``numeric`` (in order)
    numeric_raw: Optional[np.ndarray] = None
    row_ids: Optional[np.ndarray] = None
    n_dropped: int = 0
    n_filtered: int = 0
    # regression targets for linear-head training, if the schema defines a score
    T: Optional[np.ndarray] = None
    favorable_label: int = 1

    def __post_init__(self):
        n = self.X.shape[0]
        if self.Y.shape != (n,) or self.S.shape != (n,):
            raise SchemaError("X, Y and S must have the same number of rows")
        if self.T is not None and self.T.shape != (n,):
            raise SchemaError("T must have one entry per row")
        if self.row_ids is None:
            self.row_ids = np.arange(n)

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def __len__(self):
        return self.n_rows

    def subset(self, idx) -> "EncodedDataset":
        idx = np.asarray(idx, dtype=np.int64)
        return EncodedDataset(
            X=self.X[idx],
            Y=self.Y[idx],
            S=self.S[idx],
            feature_names=self.feature_names,
            categorical=self.categorical,
            numeric=self.numeric,
            numeric_raw=None if self.numeric_raw is None else self.numeric_raw[idx],
            row_ids=self.row_ids[idx],
            T=None if self.T is None else self.T[idx],
            favorable_label=self.favorable_label,
        )

    def concat(self, other: "EncodedDataset") -> "EncodedDataset":
        raw = None
        if self.numeric_raw is not None and other.numeric_raw is not None:
            raw = np.vstack([self.numeric_raw, other.numeric_raw])
        return EncodedDataset(
            X=np.vstack([self.X, other.X]),
            Y=np.concatenate([self.Y, other.Y]),
            S=np.concatenate([self.S, other.S]),
            feature_names=self.feature_names,
            categorical=self.categorical,
            numeric=self.numeric,
            numeric_raw=raw,
            row_ids=np.concatenate([self.row_ids, other.row_ids]),
            T=None if self.T is None or other.T is None else np.concatenate([self.T, other.T]),
            favorable_label=self.favorable_label,
        )


@dataclass
class SplitDataset:
    train: EncodedDataset
    validation: EncodedDataset
    test: EncodedDataset
    split_seed: int


def _open_rows(csv_path, schema: DatasetSchema):
    """Yield ``(line_number, fields)``; the header (if any) is returned separately."""
    fh = open(csv_path, newline="", encoding="utf-8")
    if schema.delimiter == "whitespace":
        def gen():
            with fh:
                for lineno, line in enumerate(fh, start=1):
                    parts = line.split()
                    if parts:
                        yield lineno, parts
    else:
        reader = csv.reader(fh, delimiter=schema.delimiter, skipinitialspace=True)

        def gen():
            with fh:
                for fields in reader:
                    if fields and any(f.strip() for f in fields):
                        yield reader.line_num, fields
    return gen()


def _passes(flt, raw: str, na_values) -> bool:
    if "in" in flt and raw not in [str(v) for v in flt["in"]]:
        return False
    if "not_in" in flt and raw in [str(v) for v in flt["not_in"]]:
        return False
    if "min" in flt or "max" in flt:
        if raw in na_values:
            return False
        try:
            v = float(raw)
        except ValueError:
            return False
        if "min" in flt and v < flt["min"]:
            return False
        if "max" in flt and v > flt["max"]:
            return False
    return True


def load_dataset(csv_path, schema: DatasetSchema) -> EncodedDataset:
    """Read, clean and encode a CSV file according to ``schema``.

    Rows with a missing value in any used column are dropped (counted in
    ``n_dropped``); rows rejected by filters or by a sensitive value other than
    the two mapped groups are counted in ``n_filtered``. Categories are encoded
    in order of first appearance; numerics are min-max scaled to [0, 1].
    """
    rows = _open_rows(csv_path, schema)
    if schema.header:
        try:
            _, header = next(rows)
        except StopIteration:
            raise SchemaError(f"{csv_path}: empty file") from None
        header = [h.strip() for h in header]
    else:
        header = list(schema.file_columns)
    position = {}
    for i, h in enumerate(header):
        position.setdefault(h, i)

    used = [c for c in schema.columns if c.kind != "drop"]
    needed = {c.name for c in schema.columns} | {schema.label_column, schema.sensitive_column}
    needed |= {f["column"] for f in schema.filters}
    if schema.score:
        needed.add(schema.score["column"])
    missing = sorted(needed - set(position))
    if missing:
        raise SchemaError(f"{csv_path}: columns {missing} not present in the file")

    na = set(schema.na_values)
    maps = schema.value_maps
    value_cols = [c.name for c in used] + [schema.label_column, schema.sensitive_column]
    if schema.score:
        value_cols.append(schema.score["column"])

    kept_values = {c.name: [] for c in used}
    labels, sens, row_ids, scores = [], [], [], []
    sens_seen = set()
    n_dropped = n_filtered = 0
    for lineno, fields in rows:
        if len(fields) < len(header):
            raise SchemaError(f"{csv_path}: line {lineno} has {len(fields)} fields, expected {len(header)}")
        if not all(_passes(f, fields[position[f["column"]]].strip(), na) for f in schema.filters):
            n_filtered += 1
            continue
        vals = {}
        for name in value_cols:
            raw = fields[position[name]].strip()
            raw = maps.get(name, {}).get(raw, raw)
            vals[name] = raw
        if any(v in na for v in vals.values()):
            n_dropped += 1
            continue
        s_raw = vals[schema.sensitive_column]
        if s_raw == schema.disadvantaged_value:
            s = 1
        elif schema.privileged_value is None or s_raw == schema.privileged_value:
            s = 0
        else:
            n_filtered += 1
            continue
        sens_seen.add(s_raw)
        parsed = {}
        for c in used:
            if c.kind == "numeric":
                try:
                    parsed[c.name] = float(vals[c.name])
                except ValueError:
                    raise RowParseError(lineno, c.name, vals[c.name]) from None
            else:
                parsed[c.name] = vals[c.name]
        if schema.score:
            col = schema.score["column"]
            try:
                score = float(vals[col])
            except ValueError:
                raise RowParseError(lineno, col, vals[col]) from None
            scores.append((score - schema.score.get("center", 0.0)) / schema.score.get("scale", 1.0))
        for name, v in parsed.items():
            kept_values[name].append(v)
        labels.append(1 if vals[schema.label_column] == str(schema.positive_label) else 0)
        sens.append(s)
        row_ids.append(lineno)

    S = np.array(sens, dtype=np.int64)
    if schema.privileged_value is None and len(sens_seen) > 2:
        raise SchemaError(
            f"sensitive column {schema.sensitive_column!r} has {len(sens_seen)} values after cleaning; "
            "set 'privileged' to select two groups"
        )

    n = len(labels)
    blocks, names = [], []
    categorical, numeric = {}, {}
    raw_numeric = []
    offset = 0
    for c in used:
        values = kept_values[c.name]
        if c.kind == "numeric":
            col = np.array(values, dtype=np.float64).reshape(n, 1)
            numeric[c.name] = offset
            raw_numeric.append(col[:, 0])
            blocks.append(col)
            names.append(c.name)
            offset += 1
        else:
            cats = list(dict.fromkeys(values))
            index = {v: i for i, v in enumerate(cats)}
            onehot = np.zeros((n, len(cats)))
            if n:
                onehot[np.arange(n), [index[v] for v in values]] = 1.0
            categorical[c.name] = (offset, cats)
            blocks.append(onehot)
            names.extend(f"{c.name}={v}" for v in cats)
            offset += len(cats)
    X = np.hstack(blocks) if blocks else np.zeros((n, 0))
    raw = np.column_stack(raw_numeric) if raw_numeric else np.zeros((n, 0))
    ds = EncodedDataset(
        X=X,
        Y=np.array(labels, dtype=np.int64),
        S=S,
        feature_names=names,
        categorical=categorical,
        numeric=numeric,
        numeric_raw=raw,
        row_ids=np.array(row_ids, dtype=np.int64),
        n_dropped=n_dropped,
        n_filtered=n_filtered,
        T=np.array(scores, dtype=np.float64) if schema.score else None,
        favorable_label=schema.favorable_label,
    )
    return rescale(ds, *fit_minmax(ds))


def fit_minmax(ds: EncodedDataset):
    if ds.numeric_raw is None or ds.numeric_raw.shape[1] == 0 or ds.n_rows == 0:
        return np.zeros(0), np.zeros(0)
    return ds.numeric_raw.min(axis=0), ds.numeric_raw.max(axis=0)


def rescale(ds: EncodedDataset, lo, hi) -> EncodedDataset:
    """Min-max scale the numeric columns of ``ds`` with fitted bounds (in place)."""
    if ds.numeric_raw is None or len(lo) == 0:
        return ds
    span = np.where(hi > lo, hi - lo, 1.0)
    cols = list(ds.numeric.values())
    X = ds.X.copy()
    X[:, cols] = (ds.numeric_raw - lo) / span
    ds.X = X
    return ds


def decode_categorical(ds: EncodedDataset, column: str) -> list:
    """Category label of every row for one one-hot encoded column."""
    start, cats = ds.categorical[column]
    block = ds.X[:, start:start + len(cats)]
    return [cats[i] for i in np.argmax(block, axis=1)]


def split(data: EncodedDataset, seed) -> SplitDataset:
    """Seeded 7:1:2 train/validation/test split.

    Sizes are ``floor(0.7 n)``, ``floor(0.1 n)`` and the remainder. Numeric
    columns are re-scaled with min-max bounds fitted on the training part.
    """
    n = data.n_rows
    if n < 10:
        raise DatasetTooSmallError(f"need at least 10 rows to split, got {n}")
    perm = np.random.default_rng(seed).permutation(n)
    n_train = (7 * n) // 10
    n_val = n // 10
    train = data.subset(perm[:n_train])
    val = data.subset(perm[n_train:n_train + n_val])
    test = data.subset(perm[n_train + n_val:])
    lo, hi = fit_minmax(train)
    for part in (train, val, test):
        rescale(part, lo, hi)
    return SplitDataset(train, val, test, seed)


# -- columnar cache ----------------------------------------------------------

CACHE_MAGIC = "# fairrepair-encoded 1 "


def save_encoded(ds: EncodedDataset, path) -> None:
    """Write ``ds`` as CSV: a ``#`` metadata line, a header, then
    ``row_id, y, s, t, <features...>`` per row (``t`` is 0 without a score)."""
    meta = {
        "categorical": {k: [v[0], v[1]] for k, v in ds.categorical.items()},
        "numeric": ds.numeric,
        "n_dropped": ds.n_dropped,
        "n_filtered": ds.n_filtered,
        "favorable_label": ds.favorable_label,
        "has_score": ds.T is not None,
    }
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(CACHE_MAGIC + json.dumps(meta) + "\n")
        w = csv.writer(fh)
        t = ds.T if ds.T is not None else np.zeros(ds.n_rows)
        w.writerow(["row_id", "y", "s", "t", *ds.feature_names])
        for i in range(ds.n_rows):
            w.writerow([int(ds.row_ids[i]), int(ds.Y[i]), int(ds.S[i]), repr(float(t[i])),
                        *map(repr, ds.X[i].tolist())])


def load_encoded(path) -> EncodedDataset:
    with open(path, newline="", encoding="utf-8") as fh:
        first = fh.readline()
        if not first.startswith(CACHE_MAGIC):
            raise SchemaError(f"{path}: not a fairrepair encoded-dataset file")
        meta = json.loads(first[len(CACHE_MAGIC):])
        reader = csv.reader(fh)
        header = next(reader)
        rows = [r for r in reader if r]
    arr = np.array(rows, dtype=np.float64).reshape(len(rows), len(header))
    return EncodedDataset(
        X=arr[:, 4:],
        Y=arr[:, 1].astype(np.int64),
        S=arr[:, 2].astype(np.int64),
        T=arr[:, 3].copy() if meta.get("has_score") else None,
        favorable_label=meta.get("favorable_label", 1),
        feature_names=header[4:],
        categorical={k: (v[0], v[1]) for k, v in meta["categorical"].items()},
        numeric=meta["numeric"],
        row_ids=arr[:, 0].astype(np.int64),
        n_dropped=meta["n_dropped"],
        n_filtered=meta["n_filtered"],
    )
