"""Random forest classifier for no-show probabilities, built from scratch.

Trees are grown by recursive binary splitting on Gini impurity with a
random feature subset per node. Leaves store Laplace-corrected missed
fractions (m+1)/(n+2), so every prediction is strictly inside (0, 1) and
block-level expected counts stay meaningful. A trained model is frozen:
prediction never mutates it, and the serialized form is versioned and
checksummed.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .ingest import FEATURE_CSV_COLUMNS, FeatureVector
from .schema import SEASONS

FORMAT_NAME = "noshow-forest"
FORMAT_VERSION = 1
OTHER_BUCKET = "<other>"

NUMERIC_FEATURES = (
    "lead_time_days",
    "hour_of_day",
    "day_of_week",
    "patient_hist_rate",
    "patient_prior_appointments",
)
CATEGORICAL_FEATURES = ("season", "provider_specialty", "site_id")

# Small documented tuning grid; selection is by validation AUC.
DEFAULT_TUNING_GRID = (
    {"n_trees": 200, "min_leaf_size": 10},
    {"n_trees": 200, "min_leaf_size": 50},
    {"n_trees": 400, "min_leaf_size": 50},
)


class EmptyTrainingSet(ValueError):
    pass


class DegenerateLabels(ValueError):
    pass


class SchemaMismatch(ValueError):
    pass


class VersionMismatch(ValueError):
    pass


class CorruptFile(ValueError):
    pass


@dataclass(frozen=True)
class ForestHyperparams:
    n_trees: int = 500
    max_depth: int | None = None
    min_leaf_size: int = 10
    features_per_split: int | None = None  # None means ceil(sqrt(p))
    bootstrap: bool = True
    seed: int = 0

    def resolved_features_per_split(self, n_features: int) -> int:
        k = self.features_per_split
        if k is None:
            k = math.ceil(math.sqrt(n_features))
        if not 1 <= k <= n_features:
            raise ValueError(f"features_per_split {k} outside [1, {n_features}]")
        return k

    def as_dict(self) -> dict[str, object]:
        return {
            "n_trees": self.n_trees,
            "max_depth": self.max_depth,
            "min_leaf_size": self.min_leaf_size,
            "features_per_split": self.features_per_split,
            "bootstrap": self.bootstrap,
            "seed": self.seed,
        }


class FeatureEncoder:
    """One-hot encoding of the categorical features at the model boundary.

    Category lists are learned at fit time and frozen into the model;
    unseen categories at predict time land in an explicit other-bucket
    column, so a frozen model tolerates new providers and sites.
    """

    def __init__(self, categories: dict[str, list[str]]):
        self.categories = {name: list(cats) for name, cats in categories.items()}
        self._index = {
            name: {cat: i for i, cat in enumerate(cats)} for name, cats in self.categories.items()
        }

    @classmethod
    def fit(cls, features: Sequence[FeatureVector]) -> "FeatureEncoder":
        categories: dict[str, list[str]] = {"season": list(SEASONS)}
        for name in ("provider_specialty", "site_id"):
            categories[name] = sorted({getattr(fv, name) for fv in features})
        return cls(categories)

    @property
    def columns(self) -> list[str]:
        cols = list(NUMERIC_FEATURES)
        for name in CATEGORICAL_FEATURES:
            cols.extend(f"{name}={cat}" for cat in self.categories[name])
            cols.append(f"{name}={OTHER_BUCKET}")
        return cols

    def transform(self, features: Sequence[FeatureVector]) -> np.ndarray:
        n = len(features)
        X = np.zeros((n, len(self.columns)), dtype=np.float64)
        for j, name in enumerate(NUMERIC_FEATURES):
            X[:, j] = [float(getattr(fv, name)) for fv in features]
        offset = len(NUMERIC_FEATURES)
        for name in CATEGORICAL_FEATURES:
            index = self._index[name]
            width = len(self.categories[name]) + 1  # trailing other-bucket
            rows = np.arange(n)
            cols = np.array([index.get(getattr(fv, name), width - 1) for fv in features])
            X[rows, offset + cols] = 1.0
            offset += width
        return X


@dataclass
class TreeArrays:
    """One decision tree flattened into parallel arrays; feature -1 marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int32)
        while True:
            feat = self.feature[node]
            active = np.nonzero(feat >= 0)[0]
            if active.size == 0:
                return self.value[node]
            at = node[active]
            x = X[active, feat[active]]
            node[active] = np.where(x <= self.threshold[at], self.left[at], self.right[at])

    def as_dict(self) -> dict[str, list]:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict[str, list]) -> "TreeArrays":
        return cls(
            feature=np.asarray(data["feature"], dtype=np.int32),
            threshold=np.asarray(data["threshold"], dtype=np.float64),
            left=np.asarray(data["left"], dtype=np.int32),
            right=np.asarray(data["right"], dtype=np.int32),
            value=np.asarray(data["value"], dtype=np.float64),
        )


@dataclass
class FrozenForestModel:
    """Trained ensemble plus everything needed to reproduce its predictions."""

    hyperparams: ForestHyperparams
    encoder: FeatureEncoder
    trees: list[TreeArrays]
    metadata: dict = field(default_factory=dict)
    version: int = FORMAT_VERSION

    @property
    def fingerprint(self) -> str:
        return schema_fingerprint(self.encoder)

    def payload(self) -> dict:
        return {
            "hyperparams": self.hyperparams.as_dict(),
            "encoder": {"categories": self.encoder.categories},
            "fingerprint": self.fingerprint,
            "feature_schema": list(FEATURE_CSV_COLUMNS),
            "metadata": self.metadata,
            "trees": [tree.as_dict() for tree in self.trees],
        }


def schema_fingerprint(encoder: FeatureEncoder) -> str:
    doc = {"raw": list(FEATURE_CSV_COLUMNS), "encoded": encoder.columns}
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()


def _canonical_json(obj: object) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False).encode()


class _TreeBuilder:
    def __init__(self, columns: list[np.ndarray], y: np.ndarray, hp: ForestHyperparams, k: int):
        self.columns = columns
        self.y = y
        self.hp = hp
        self.k = k
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[float] = []

    def _new_node(self) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(0.0)
        return len(self.feature) - 1

    def build(self, idx: np.ndarray, w: np.ndarray, rng: np.random.Generator) -> TreeArrays:
        yw = self.y * w
        root = self._new_node()
        stack = [(idx, 0, root)]
        max_depth = self.hp.max_depth if self.hp.max_depth is not None else np.inf
        min_leaf = float(self.hp.min_leaf_size)
        n_features = len(self.columns)

        while stack:
            node_idx, depth, slot = stack.pop()
            wn = w[node_idx]
            pn = yw[node_idx]
            wsum = float(wn.sum())
            psum = float(pn.sum())

            is_leaf = depth >= max_depth or wsum < 2.0 * min_leaf or psum == 0.0 or psum == wsum
            split = None
            if not is_leaf:
                candidates = np.sort(rng.choice(n_features, size=self.k, replace=False))
                split = self._best_split(node_idx, wn, pn, candidates, min_leaf, wsum, psum)
            if split is None:
                self.value[slot] = (psum + 1.0) / (wsum + 2.0)
                continue

            feat, thr = split
            go_left = self.columns[feat][node_idx] <= thr
            self.feature[slot] = feat
            self.threshold[slot] = thr
            left_slot = self._new_node()
            right_slot = self._new_node()
            self.left[slot] = left_slot
            self.right[slot] = right_slot
            stack.append((node_idx[~go_left], depth + 1, right_slot))
            stack.append((node_idx[go_left], depth + 1, left_slot))

        return TreeArrays(
            feature=np.asarray(self.feature, dtype=np.int32),
            threshold=np.asarray(self.threshold, dtype=np.float64),
            left=np.asarray(self.left, dtype=np.int32),
            right=np.asarray(self.right, dtype=np.int32),
            value=np.asarray(self.value, dtype=np.float64),
        )

    def _best_split(
        self,
        node_idx: np.ndarray,
        wn: np.ndarray,
        pn: np.ndarray,
        candidates: np.ndarray,
        min_leaf: float,
        wsum: float,
        psum: float,
    ) -> tuple[int, float] | None:
        # Candidates iterate in ascending index and thresholds ascending, with
        # strict improvement only, so impurity ties break toward the lowest
        # feature index and lowest threshold. That keeps training deterministic.
        best_impurity = np.inf
        best: tuple[int, float] | None = None
        for feat in candidates:
            x = self.columns[feat][node_idx]
            order = np.argsort(x, kind="stable")
            xs = x[order]
            if xs[0] == xs[-1]:
                continue
            cw = np.cumsum(wn[order])
            cp = np.cumsum(pn[order])
            cuts = np.nonzero(np.diff(xs))[0]
            lw = cw[cuts]
            lp = cp[cuts]
            rw = wsum - lw
            rp = psum - lp
            valid = (lw >= min_leaf) & (rw >= min_leaf)
            if not valid.any():
                continue
            impurity = (lw - (lp * lp + (lw - lp) ** 2) / lw) + (rw - (rp * rp + (rw - rp) ** 2) / rw)
            impurity[~valid] = np.inf
            j = int(np.argmin(impurity))
            if impurity[j] < best_impurity:
                best_impurity = float(impurity[j])
                best = (int(feat), float((xs[cuts[j]] + xs[cuts[j] + 1]) / 2.0))
        return best


def train_forest(features: Sequence[FeatureVector], hp: ForestHyperparams) -> FrozenForestModel:
    """Grow the ensemble; deterministic for a given hp.seed.

    Per-tree seeds are derived from the master seed so trees could be
    built in parallel and assembled in index order without changing the
    result; this implementation builds them sequentially.
    """
    labeled = [fv for fv in features if fv.label is not None]
    if len(labeled) != len(features):
        raise ValueError("training input contains pending rows; score them, do not train on them")
    if not labeled:
        raise EmptyTrainingSet("no labeled appointments to train on")
    y = np.array([fv.label for fv in labeled], dtype=np.float64)
    if len(np.unique(y)) < 2:
        raise DegenerateLabels("training labels contain a single class")

    encoder = FeatureEncoder.fit(labeled)
    X = encoder.transform(labeled)
    n, p = X.shape
    k = hp.resolved_features_per_split(p)
    columns = [np.ascontiguousarray(X[:, j]) for j in range(p)]

    seeds = np.random.SeedSequence(hp.seed).spawn(hp.n_trees)
    trees: list[TreeArrays] = []
    for t in range(hp.n_trees):
        rng = np.random.default_rng(seeds[t])
        if hp.bootstrap:
            draws = rng.integers(0, n, n)
            w = np.bincount(draws, minlength=n).astype(np.float64)
            idx = np.nonzero(w)[0]
        else:
            w = np.ones(n, dtype=np.float64)
            idx = np.arange(n)
        builder = _TreeBuilder(columns, y, hp, k)
        trees.append(builder.build(idx, w, rng))

    scheduled = [fv.scheduled_at for fv in labeled]
    metadata = {
        "n_train": n,
        "train_start": min(scheduled).isoformat(),
        "train_end": max(scheduled).isoformat(),
        "base_rate": float(y.mean()),
    }
    return FrozenForestModel(hyperparams=hp, encoder=encoder, trees=trees, metadata=metadata)


def predict_proba(model: FrozenForestModel, features: Sequence[FeatureVector]) -> np.ndarray:
    """Mean of Laplace leaf fractions across trees; strictly in (0, 1)."""
    if not features:
        return np.zeros(0)
    X = model.encoder.transform(features)
    total = np.zeros(X.shape[0], dtype=np.float64)
    for tree in model.trees:
        total += tree.predict(X)
    return total / len(model.trees)


def baseline_predict(features: Sequence[FeatureVector]) -> np.ndarray:
    """The client's original approach: the smoothed historical rate, unchanged."""
    return np.array([fv.patient_hist_rate for fv in features], dtype=np.float64)


def ensure_feature_schema(model: FrozenForestModel, columns: Sequence[str]) -> None:
    expected = model.metadata.get("feature_schema", list(FEATURE_CSV_COLUMNS))
    if list(columns) != list(expected):
        raise SchemaMismatch(
            f"feature columns {list(columns)} do not match the model's schema {list(expected)}"
        )


def temporal_split(
    features: Sequence[FeatureVector], validation_fraction: float = 0.2
) -> tuple[list[FeatureVector], list[FeatureVector]]:
    """Last stretch of the date range becomes validation; never a random split.

    Deployment predicts the future, and random splits would leak patient
    history across the boundary.
    """
    if not 0.0 < validation_fraction < 1.0:
        raise ValueError("validation_fraction must be in (0, 1)")
    ordered = sorted(features, key=lambda fv: (fv.scheduled_at, fv.appointment_id))
    cut = int(round(len(ordered) * (1.0 - validation_fraction)))
    cut = min(max(cut, 1), len(ordered) - 1)
    cut_time = ordered[cut].scheduled_at
    train = [fv for fv in ordered if fv.scheduled_at < cut_time]
    validation = [fv for fv in ordered if fv.scheduled_at >= cut_time]
    return train, validation


def save_model(model: FrozenForestModel, path: Path | str) -> None:
    payload = model.payload()
    body = _canonical_json(payload)
    doc = {
        "format": FORMAT_NAME,
        "version": model.version,
        "checksum": hashlib.sha256(body).hexdigest(),
        "payload": payload,
    }
    Path(path).write_bytes(_canonical_json(doc))


def load_model(path: Path | str) -> FrozenForestModel:
    raw = Path(path).read_bytes()
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise CorruptFile(f"{path}: not a readable model file ({exc})") from exc
    if not isinstance(doc, dict) or doc.get("format") != FORMAT_NAME:
        raise CorruptFile(f"{path}: missing {FORMAT_NAME} envelope")
    if doc.get("version") != FORMAT_VERSION:
        raise VersionMismatch(f"{path}: format version {doc.get('version')!r}, expected {FORMAT_VERSION}")
    payload = doc.get("payload")
    checksum = hashlib.sha256(_canonical_json(payload)).hexdigest()
    if checksum != doc.get("checksum"):
        raise CorruptFile(f"{path}: checksum mismatch")
    hp = ForestHyperparams(**payload["hyperparams"])
    encoder = FeatureEncoder(payload["encoder"]["categories"])
    trees = [TreeArrays.from_dict(t) for t in payload["trees"]]
    metadata = dict(payload["metadata"])
    metadata.setdefault("feature_schema", payload.get("feature_schema", list(FEATURE_CSV_COLUMNS)))
    model = FrozenForestModel(hyperparams=hp, encoder=encoder, trees=trees, metadata=metadata)
    if model.fingerprint != payload["fingerprint"]:
        raise CorruptFile(f"{path}: fingerprint does not match the stored encoder")
    return model


def model_bytes(model: FrozenForestModel) -> bytes:
    """Serialized form without touching disk; hashing this detects any mutation."""
    payload = model.payload()
    doc = {
        "format": FORMAT_NAME,
        "version": model.version,
        "checksum": hashlib.sha256(_canonical_json(payload)).hexdigest(),
        "payload": payload,
    }
    return _canonical_json(doc)

