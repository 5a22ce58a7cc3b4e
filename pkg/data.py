"""
Dataset ingestion and splitting
===============================

parse_libsvm     libsvm text -> LinearClassifierData (labels mapped to +/-1)
split_dataset    seeded 2:1 split into the constraint set D and groups D_p / D_u
scale_features   optional per-feature scaling to [-1, 1]

Datasets live in the directory named by SSG_DATA_DIR (see .env.example),
defaulting to ./datasets. Conversion of raw bank/COMPAS files into libsvm
is documented in EXPERIMENTS_GUIDE.md.
"""

import io
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, TextIO, Tuple, Union

import numpy as np
from dotenv import load_dotenv
from scipy import sparse
from sklearn.datasets import load_svmlight_file
from sklearn.preprocessing import MaxAbsScaler

from core import ContractViolation, EmptyGroupError, ParseError, RngStream
from problems import LinearClassifierData

logger = logging.getLogger(__name__)

# Published sizes (rows, features) of the benchmark datasets.
DATASET_SIZES = {
    "a9a": (48_842, 123),
    "bank": (41_188, 54),
    "compas": (6_172, 16),
}


def dataset_path(name: str) -> Path:
    load_dotenv()
    return Path(os.getenv("SSG_DATA_DIR", "datasets")) / name


# ============================================================================
# libsvm parsing
# ============================================================================

def _read_text(source: Union[str, Path, TextIO]) -> str:
    if isinstance(source, (str, Path)):
        raw = Path(source).read_bytes()
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError as err:
            line_number = raw[:err.start].count(b"\n") + 1
            raise ParseError(line_number, f"invalid UTF-8 byte 0x{raw[err.start]:02x}") from None
    try:
        return source.read()
    except UnicodeDecodeError as err:
        raise ParseError(0, f"input is not valid UTF-8 ({err.reason})") from None


def _scan_lines(text: str) -> List[Tuple[int, float, List[Tuple[int, float]]]]:
    """Validate every line; returns (line number, label, sorted (index, value) pairs)."""
    rows = []
    for line_number, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        tokens = body.split()
        try:
            label = float(tokens[0])
        except ValueError:
            raise ParseError(line_number, f"invalid label '{tokens[0]}'") from None
        pairs: Dict[int, float] = {}
        for token in tokens[1:]:
            index_text, sep, value_text = token.partition(":")
            if not sep:
                raise ParseError(line_number, f"expected idx:val, got '{token}'")
            try:
                index = int(index_text)
                value = float(value_text)
            except ValueError:
                raise ParseError(line_number, f"malformed feature '{token}'") from None
            if index < 1:
                raise ParseError(line_number, f"feature index {index} is not 1-based")
            if index in pairs:
                raise ParseError(line_number, f"duplicate feature index {index}")
            pairs[index] = value
        rows.append((line_number, label, sorted(pairs.items())))
    return rows


def _canonical_text(rows) -> str:
    lines = []
    for _, label, pairs in rows:
        lines.append(" ".join([repr(label)] + [f"{i}:{v!r}" for i, v in pairs]))
    return "\n".join(lines) + "\n"


def _signed_labels(y: np.ndarray, rows_for_errors) -> np.ndarray:
    values = set(np.unique(y).tolist())
    if values <= {0.0, 1.0}:
        return np.where(y > 0, 1.0, -1.0)
    if values <= {-1.0, 1.0}:
        return y.astype(np.float64)
    for line_number, label, _ in rows_for_errors():
        if label not in (-1.0, 1.0, 0.0):
            raise ParseError(line_number, f"label {label:g} is not +/-1 or 0/1")
    raise ParseError(0, "labels mix 0 and -1")


def parse_libsvm(source: Union[str, Path, TextIO], n_features: Optional[int] = None) -> LinearClassifierData:
    """
    Read 'label idx:val ...' lines with 1-based indices. Labels in {0, 1}
    are remapped to {-1, +1}. Unsorted indices are accepted.
    """
    text = _read_text(source)
    try:
        X, y = load_svmlight_file(io.BytesIO(text.encode("utf-8")), n_features=n_features,
                                  zero_based=False)
    except ValueError:
        # The fast reader rejects unsorted indices and reports no line numbers.
        rows = _scan_lines(text)
        if not rows:
            return LinearClassifierData(sparse.csr_matrix((0, n_features or 0)), np.zeros(0))
        X, y = load_svmlight_file(io.BytesIO(_canonical_text(rows).encode("utf-8")),
                                  n_features=n_features, zero_based=False)
    labels = _signed_labels(np.asarray(y), lambda: _scan_lines(text))
    logger.info("Parsed %d examples with %d features", X.shape[0], X.shape[1])
    return LinearClassifierData(sparse.csr_matrix(X, dtype=np.float64), labels)


# ============================================================================
# Splitting
# ============================================================================

@dataclass(frozen=True)
class GroupRule:
    """Predicate on the group feature: comparison against one or two constants."""

    comparison: str
    constants: Tuple[float, ...]

    COMPARISONS = ("==", "!=", "<", "<=", ">", ">=", "between", "outside")

    def __post_init__(self):
        if self.comparison not in self.COMPARISONS:
            raise ContractViolation(f"Unknown comparison '{self.comparison}'")
        object.__setattr__(self, "constants", tuple(float(c) for c in self.constants))
        needed = 2 if self.comparison in ("between", "outside") else 1
        if len(self.constants) != needed:
            raise ContractViolation(f"'{self.comparison}' needs {needed} constant(s)")

    def matches(self, values: np.ndarray) -> np.ndarray:
        c = self.constants
        if self.comparison == "==":
            return values == c[0]
        if self.comparison == "!=":
            return values != c[0]
        if self.comparison == "<":
            return values < c[0]
        if self.comparison == "<=":
            return values <= c[0]
        if self.comparison == ">":
            return values > c[0]
        if self.comparison == ">=":
            return values >= c[0]
        inside = (values >= c[0]) & (values <= c[1])
        return inside if self.comparison == "between" else ~inside

    def describe(self, feature_index: int) -> str:
        return f"feature[{feature_index}] {self.comparison} {', '.join(f'{c:g}' for c in self.constants)}"

    @classmethod
    def from_dict(cls, data: Dict[str, object]) -> "GroupRule":
        return cls(str(data["comparison"]), tuple(data["constants"]))


@dataclass(frozen=True, eq=False)
class DatasetSplit:
    constraint_set: LinearClassifierData
    group_p: sparse.csr_matrix
    group_u: sparse.csr_matrix
    split_seed: int
    group_rule: GroupRule
    group_feature_index: int
    rows: Dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def sizes(self) -> Dict[str, int]:
        return {"D": self.constraint_set.n, "D_p": self.group_p.shape[0], "D_u": self.group_u.shape[0]}

    def classifier_data(self) -> LinearClassifierData:
        return LinearClassifierData(self.constraint_set.features, self.constraint_set.labels,
                                    self.group_p, self.group_u)


def split_dataset(data: LinearClassifierData, group_feature_index: int, group_rule: GroupRule, seed: int,
                  drop_group_feature: bool = False, indicator_feature: bool = False) -> DatasetSplit:
    """
    Seeded shuffle; the first 2/3 of rows form D, the rest is split into
    D_p (rule holds) and D_u (rule fails). `indicator_feature` appends a
    column equal to +1 where the rule holds and -1 elsewhere.
    """
    if not 0 <= group_feature_index < data.dimension:
        raise ContractViolation(f"Group feature {group_feature_index} not in 0..{data.dimension - 1}")
    n = data.n
    order = RngStream(seed).permutation(n)
    n_constraint = (2 * n) // 3
    constraint_rows, rest = order[:n_constraint], order[n_constraint:]

    group_values = data.features[:, group_feature_index].toarray().ravel()
    in_group = group_rule.matches(group_values)
    p_rows, u_rows = rest[in_group[rest]], rest[~in_group[rest]]
    rule_text = group_rule.describe(group_feature_index)
    if p_rows.size == 0:
        raise EmptyGroupError(f"Rule '{rule_text}' selects no rows for D_p")
    if u_rows.size == 0:
        raise EmptyGroupError(f"Rule '{rule_text}' selects every row; D_u is empty")

    features = data.features
    if drop_group_feature:
        keep = [j for j in range(data.dimension) if j != group_feature_index]
        features = features[:, keep]
    if indicator_feature:
        indicator = sparse.csr_matrix(np.where(in_group, 1.0, -1.0)[:, None])
        features = sparse.hstack([features, indicator], format="csr")

    constraint_set = LinearClassifierData(features[constraint_rows], data.labels[constraint_rows])
    split = DatasetSplit(
        constraint_set=constraint_set,
        group_p=features[p_rows],
        group_u=features[u_rows],
        split_seed=seed,
        group_rule=group_rule,
        group_feature_index=group_feature_index,
        rows={"D": constraint_rows, "D_p": p_rows, "D_u": u_rows},
    )
    logger.info("Split (seed %d, %s): %s", seed, rule_text, split.sizes)
    return split


def scale_features(data: LinearClassifierData) -> LinearClassifierData:
    """Scale each feature by its max absolute value over D (sparsity preserved)."""
    scaler = MaxAbsScaler().fit(data.features)

    def transform(matrix):
        return sparse.csr_matrix(scaler.transform(matrix)) if matrix.shape[0] else matrix

    return LinearClassifierData(transform(data.features), data.labels,
                                transform(data.group_p), transform(data.group_u))


def synthetic_classifier_data(n: int = 900, d: int = 16, seed: int = 0, group_rate: float = 0.4,
                              bias: float = 1.0) -> LinearClassifierData:
    """
    COMPAS-shaped desk data: feature 0 is a binary group flag, the rest
    are Gaussian, and labels depend on the group through `bias`.
    """
    if d < 2:
        raise ContractViolation("Synthetic data needs at least two features")
    gen = RngStream(seed).generator
    group = (gen.uniform(size=n) < group_rate).astype(np.float64)
    other = gen.standard_normal((n, d - 1))
    weights = gen.standard_normal(d - 1) / np.sqrt(d - 1)
    scores = other @ weights + bias * (group - group_rate) + 0.3 * gen.standard_normal(n)
    labels = np.where(scores > 0, 1.0, -1.0)
    features = sparse.csr_matrix(np.column_stack([group, other]))
    return LinearClassifierData(features, labels)
