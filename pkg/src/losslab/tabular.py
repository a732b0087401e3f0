"""Portfolio tables: schema, loading, encoding, and split plans.

One uniform row-oriented representation feeds every downstream model:
feature columns are float arrays (categorical levels stored as integer
codes, NaN marking a missing cell), plus a loss-cost response, an earned
exposure weight, a coverage tag, and an opaque policy id per row.
"""

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    InvalidConfig,
    KTooLarge,
    MissingColumn,
    NegativeResponse,
    NonPositiveExposure,
    TypeMismatch,
)

KINDS = ("numeric", "categorical", "binary")
COVERAGES = ("BG", "BP", "LIAB")

RESPONSE_COLUMN = "loss_cost"
EXPOSURE_COLUMN = "exposure"
COVERAGE_COLUMN = "coverage"
ID_COLUMN = "policy_id"

MISSING_TOKENS = ("", "NA")


@dataclass
class FeatureSpec:
    """Declared name, kind, and (for categoricals) ordered level labels."""

    name: str
    kind: str
    categories: tuple = ()
    fill_rate: float = 1.0
    block: str = ""  # optional "in-house" / "insurtech" label used downstream

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidConfig(f"unknown feature kind {self.kind!r} for {self.name!r}")
        self.categories = tuple(self.categories)
        if self.kind == "categorical" and len(self.categories) < 1:
            raise InvalidConfig(f"categorical feature {self.name!r} needs >= 1 category")
        if self.kind != "categorical" and self.categories:
            raise InvalidConfig(f"{self.kind} feature {self.name!r} must not list categories")
        if not 0.0 <= self.fill_rate <= 1.0:
            raise InvalidConfig(f"fill_rate of {self.name!r} outside [0, 1]")

    @property
    def encoded_width(self) -> int:
        return len(self.categories) if self.kind == "categorical" else 1


@dataclass
class PortfolioTable:
    """Validated columnar portfolio with response, exposure, and tags.

    Immutable by convention after construction; nothing in the toolkit
    mutates a table in place.  ``truth`` optionally carries generator
    ground-truth arrays (conditional means and variances) for oracle tests.
    """

    features: list
    columns: dict
    response: np.ndarray
    exposure: np.ndarray
    coverage: np.ndarray
    ids: np.ndarray
    truth: dict = field(default_factory=dict)

    def __post_init__(self):
        self.validate()

    @property
    def rows(self) -> int:
        return int(self.response.shape[0])

    @property
    def encoded_width(self) -> int:
        return sum(f.encoded_width for f in self.features)

    def feature(self, name: str) -> FeatureSpec:
        for f in self.features:
            if f.name == name:
                return f
        raise MissingColumn(f"no feature named {name!r}")

    def validate(self):
        n = self.response.shape[0]
        for f in self.features:
            col = self.columns[f.name]
            if col.shape[0] != n:
                raise InvalidConfig(f"column {f.name!r} length {col.shape[0]} != rows {n}")
            observed = np.count_nonzero(~np.isnan(col))
            expected_rate = observed / n if n else 1.0
            if abs(f.fill_rate - expected_rate) > 0:
                raise InvalidConfig(
                    f"fill_rate of {f.name!r} is {f.fill_rate}, data says {expected_rate}"
                )
            if f.kind == "categorical":
                codes = col[~np.isnan(col)]
                if codes.size and (codes.min() < 0 or codes.max() >= len(f.categories)):
                    raise TypeMismatch(f"category code out of range for {f.name!r}")
        for arr in (self.exposure, self.coverage, self.ids):
            if arr.shape[0] != n:
                raise InvalidConfig("core column lengths differ")
        if np.any(np.isnan(self.response)) or np.any(self.response < 0):
            raise NegativeResponse("response must be >= 0 everywhere")
        if np.any(np.isnan(self.exposure)) or np.any(self.exposure <= 0):
            raise NonPositiveExposure("exposure must be > 0 everywhere")

    def subset(self, mask_or_index) -> "PortfolioTable":
        idx = np.asarray(mask_or_index)
        cols = {name: col[idx] for name, col in self.columns.items()}
        n_sub = self.response[idx].shape[0]
        feats = []
        for f in self.features:
            col = cols[f.name]
            rate = float(np.count_nonzero(~np.isnan(col)) / n_sub) if n_sub else 1.0
            feats.append(replace(f, fill_rate=rate))
        truth = {k: v[idx] for k, v in self.truth.items()}
        return PortfolioTable(
            features=feats,
            columns=cols,
            response=self.response[idx],
            exposure=self.exposure[idx],
            coverage=self.coverage[idx],
            ids=self.ids[idx],
            truth=truth,
        )


class ColumnMap:
    """Maps encoded matrix columns back to source features.

    Each entry is (feature name, role, label) with role one of "value"
    (numeric/binary payload), "onehot" (label = category), or "missing"
    (0/1 missingness indicator appended by the indicator_plus_zero policy).
    """

    def __init__(self, entries, blocks=None):
        self.entries = list(entries)
        self.blocks = dict(blocks or {})

    @property
    def width(self) -> int:
        return len(self.entries)

    @property
    def names(self):
        out = []
        for feat, role, label in self.entries:
            if role == "onehot":
                out.append(f"{feat}={label}")
            elif role == "missing":
                out.append(f"{feat}__missing")
            else:
                out.append(feat)
        return out

    def feature_of(self, col: int) -> str:
        return self.entries[col][0]

    def groups(self):
        """Ordered mapping feature -> list of column indices (incl. indicators)."""
        out = {}
        for j, (feat, _, _) in enumerate(self.entries):
            out.setdefault(feat, []).append(j)
        return out

    def block_of(self, feature: str) -> str:
        return self.blocks.get(feature, "")

    def columns_for(self, feature: str):
        return [j for j, (feat, _, _) in enumerate(self.entries) if feat == feature]


@dataclass
class SplitPlan:
    """Reproducible train/test or k-fold assignment."""

    kind: str
    seed: int
    test_fraction: float = None
    k: int = None
    fold_assignment: np.ndarray = None

    def __post_init__(self):
        if self.kind not in ("train_test", "k_fold"):
            raise InvalidConfig(f"unknown split kind {self.kind!r}")
        if self.kind == "train_test":
            if self.test_fraction is None or not 0.0 < self.test_fraction < 1.0:
                raise InvalidConfig("test_fraction must lie in (0, 1)")
        else:
            if self.k is None or self.k < 2:
                raise InvalidConfig("k_fold needs k >= 2")

    @property
    def n_folds(self) -> int:
        return 2 if self.kind == "train_test" else self.k


def _parse_cell(raw: str, spec: FeatureSpec):
    raw = raw.strip()
    if raw in MISSING_TOKENS:
        return math.nan
    if spec.kind == "categorical":
        try:
            return float(spec.categories.index(raw))
        except ValueError:
            raise TypeMismatch(
                f"unknown label {raw!r} for categorical feature {spec.name!r}"
            ) from None
    try:
        value = float(raw)
    except ValueError:
        raise TypeMismatch(f"cell {raw!r} not parseable as {spec.kind} ({spec.name!r})") from None
    if spec.kind == "binary" and value not in (0.0, 1.0):
        raise TypeMismatch(f"binary feature {spec.name!r} has non-0/1 value {raw!r}")
    return value


def load_table(path, schema) -> PortfolioTable:
    """Read a comma-separated UTF-8 file with a header row into a table.

    "" and "NA" cells are recorded as missing (never imputed here).
    Fill rates on the returned specs are exact observed fractions.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MissingColumn(f"{path} is empty") from None
        header = [h.strip() for h in header]
        rows = [row for row in reader if row]

    col_index = {name: i for i, name in enumerate(header)}
    for required in (RESPONSE_COLUMN, EXPOSURE_COLUMN):
        if required not in col_index:
            raise MissingColumn(f"required column {required!r} missing from {path}")
    for spec in schema:
        if spec.name not in col_index:
            raise MissingColumn(f"schema feature {spec.name!r} missing from {path}")

    n = len(rows)
    columns = {}
    feats = []
    for spec in schema:
        j = col_index[spec.name]
        col = np.empty(n)
        for i, row in enumerate(rows):
            col[i] = _parse_cell(row[j], spec)
        rate = float(np.count_nonzero(~np.isnan(col)) / n) if n else 1.0
        columns[spec.name] = col
        feats.append(replace(spec, fill_rate=rate))

    def _required_float(name, row, i):
        raw = row[col_index[name]].strip()
        try:
            return float(raw)
        except ValueError:
            raise TypeMismatch(f"{name} cell {raw!r} on row {i} not numeric") from None

    response = np.array([_required_float(RESPONSE_COLUMN, r, i) for i, r in enumerate(rows)])
    exposure = np.array([_required_float(EXPOSURE_COLUMN, r, i) for i, r in enumerate(rows)])
    if np.any(response < 0):
        raise NegativeResponse("response column contains negative values")
    if np.any(exposure <= 0):
        raise NonPositiveExposure("exposure column contains non-positive values")

    if COVERAGE_COLUMN in col_index:
        coverage = np.array([r[col_index[COVERAGE_COLUMN]].strip() for r in rows], dtype=object)
    else:
        coverage = np.array(["BG"] * n, dtype=object)
    if ID_COLUMN in col_index:
        ids = np.array([r[col_index[ID_COLUMN]].strip() for r in rows], dtype=object)
    else:
        ids = np.array([str(i) for i in range(n)], dtype=object)

    return PortfolioTable(
        features=feats,
        columns=columns,
        response=response,
        exposure=exposure,
        coverage=coverage,
        ids=ids,
    )


def encode(table: PortfolioTable, missing_policy: str = "indicator_plus_zero"):
    """Build the dense design matrix and its column map.

    One-hot categoricals (missing level -> all-zero row), numeric/binary
    passed through with missing cells imputed per policy:

    - mean_impute: observed column mean fills the gaps;
    - indicator_plus_zero: gaps become 0 and a 0/1 missingness column is
      appended (only for features whose fill_rate < 1).
    """
    if missing_policy not in ("mean_impute", "indicator_plus_zero"):
        raise InvalidConfig(f"unknown missing policy {missing_policy!r}")
    n = table.rows
    cols = []
    entries = []
    indicator_cols = []
    indicator_entries = []
    blocks = {f.name: f.block for f in table.features}

    for f in table.features:
        raw = table.columns[f.name]
        if f.kind == "categorical":
            codes = raw
            for c, label in enumerate(f.categories):
                cols.append(np.where(np.isnan(codes), 0.0, (codes == c).astype(float)))
                entries.append((f.name, "onehot", label))
            continue
        missing = np.isnan(raw)
        col = raw.copy()
        if missing.any():
            if missing_policy == "mean_impute":
                observed = raw[~missing]
                col[missing] = observed.mean() if observed.size else 0.0
            else:
                col[missing] = 0.0
                indicator_cols.append(missing.astype(float))
                indicator_entries.append((f.name, "missing", ""))
        cols.append(col)
        entries.append((f.name, "value", ""))

    cols.extend(indicator_cols)
    entries.extend(indicator_entries)
    matrix = np.column_stack(cols) if cols else np.empty((n, 0))
    return matrix, ColumnMap(entries, blocks)


def decode_feature(matrix: np.ndarray, cmap: ColumnMap, feature: str, kind: str):
    """Recover a feature column from the encoded matrix (round-trip check).

    Returns the numeric values, or categorical codes (NaN where the one-hot
    block is all zero).
    """
    cols = cmap.columns_for(feature)
    roles = [cmap.entries[j][1] for j in cols]
    if roles[0] == "onehot":
        block = matrix[:, [j for j, r in zip(cols, roles) if r == "onehot"]]
        any_on = block.sum(axis=1) > 0
        codes = np.argmax(block, axis=1).astype(float)
        codes[~any_on] = np.nan
        return codes
    value_col = matrix[:, cols[0]].copy()
    for j, r in zip(cols, roles):
        if r == "missing":
            value_col[matrix[:, j] == 1.0] = np.nan
    return value_col


def make_splits(table: PortfolioTable, plan: SplitPlan) -> SplitPlan:
    """Assign each row to a fold, stratified on zero vs positive loss.

    The same seed always reproduces the identical assignment; fold sizes
    differ by at most one row.
    """
    n = table.rows
    if plan.kind == "k_fold" and plan.k > n:
        raise KTooLarge(f"k={plan.k} exceeds {n} rows")
    rng = np.random.default_rng(plan.seed)
    zeros = np.flatnonzero(table.response == 0)
    positives = np.flatnonzero(table.response > 0)
    order = np.concatenate([rng.permutation(zeros), rng.permutation(positives)])

    assignment = np.empty(n, dtype=np.int64)
    if plan.kind == "k_fold":
        assignment[order] = np.arange(n) % plan.k
    else:
        assignment[:] = 0
        for stratum in (zeros, positives):
            shuffled = rng.permutation(stratum)
            n_test = int(round(plan.test_fraction * stratum.size))
            assignment[shuffled[:n_test]] = 1
    return replace(plan, fold_assignment=assignment)


def train_test_indices(plan: SplitPlan):
    """(train, test) row indices of a train_test plan."""
    if plan.kind != "train_test" or plan.fold_assignment is None:
        raise InvalidConfig("need an assigned train_test plan")
    return np.flatnonzero(plan.fold_assignment == 0), np.flatnonzero(plan.fold_assignment == 1)
