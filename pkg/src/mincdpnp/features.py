"""Feature-space distances, threshold matching, and nearest-feature search."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial.distance import cdist

from .errors import DimensionMismatch, EmptySet, MissingFeatures, NotOneToOne
from .geometry import dumps_json

DEFAULT_FEATURE_DIM = 128


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    arr.setflags(write=False)
    return arr


def _check_features(features, count: int):
    if features is None:
        return None
    feats = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if feats.shape[0] != count:
        raise ValueError(f"{feats.shape[0]} feature rows for {count} keypoints")
    if not np.all(np.isfinite(feats)):
        raise ValueError("features must be finite")
    return _readonly(feats)


class KeypointSet2D:
    """Image keypoints: (N, 2) pixel array with optional (N, D) features.

    Duplicate pixels at bitwise-identical coordinates are rejected; they
    would make nearest-neighbor assignments ambiguous downstream.
    """

    __slots__ = ("pixels", "features")

    def __init__(self, pixels, features=None):
        px = np.atleast_2d(np.asarray(pixels, dtype=np.float64))
        if px.size == 0:
            px = px.reshape(0, 2)
        if px.ndim != 2 or px.shape[1] != 2:
            raise ValueError(f"pixels must be (N, 2), got {px.shape}")
        if not np.all(np.isfinite(px)):
            raise ValueError("pixels must be finite")
        if len(np.unique(px, axis=0)) != len(px):
            raise ValueError("duplicate pixel coordinates")
        object.__setattr__(self, "pixels", _readonly(px))
        object.__setattr__(self, "features", _check_features(features, len(px)))

    def __setattr__(self, name, value):
        raise AttributeError(f"{type(self).__name__} is immutable")

    def __len__(self) -> int:
        return len(self.pixels)

    def require_features(self) -> np.ndarray:
        if self.features is None:
            raise MissingFeatures("2D keypoint set carries no features")
        return self.features

    def save_csv(self, path: str | Path) -> None:
        _save_rows_csv(path, self.pixels, self.features)

    @classmethod
    def load_csv(cls, path: str | Path) -> "KeypointSet2D":
        coords, feats = _load_rows_csv(path, 2)
        return cls(coords, feats)

    def to_json_dict(self) -> dict:
        return {
            "pixels": self.pixels.tolist(),
            "features": None if self.features is None else self.features.tolist(),
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "KeypointSet2D":
        return cls(np.asarray(data["pixels"], dtype=np.float64).reshape(-1, 2), data.get("features"))

    def save_json(self, path: str | Path) -> None:
        Path(path).write_text(dumps_json(self.to_json_dict()))

    @classmethod
    def load_json(cls, path: str | Path) -> "KeypointSet2D":
        return cls.from_json_dict(json.loads(Path(path).read_text()))


class KeypointSet3D:
    """Point-cloud keypoints: (N, 3) point array with optional (N, D) features."""

    __slots__ = ("points", "features")

    def __init__(self, points, features=None):
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        if pts.size == 0:
            pts = pts.reshape(0, 3)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError(f"points must be (N, 3), got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points must be finite")
        object.__setattr__(self, "points", _readonly(pts))
        object.__setattr__(self, "features", _check_features(features, len(pts)))

    def __setattr__(self, name, value):
        raise AttributeError(f"{type(self).__name__} is immutable")

    def __len__(self) -> int:
        return len(self.points)

    def require_features(self) -> np.ndarray:
        if self.features is None:
            raise MissingFeatures("3D keypoint set carries no features")
        return self.features

    def save_csv(self, path: str | Path) -> None:
        _save_rows_csv(path, self.points, self.features)

    @classmethod
    def load_csv(cls, path: str | Path) -> "KeypointSet3D":
        coords, feats = _load_rows_csv(path, 3)
        return cls(coords, feats)

    def to_json_dict(self) -> dict:
        return {
            "points": self.points.tolist(),
            "features": None if self.features is None else self.features.tolist(),
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "KeypointSet3D":
        return cls(np.asarray(data["points"], dtype=np.float64).reshape(-1, 3), data.get("features"))

    def save_json(self, path: str | Path) -> None:
        Path(path).write_text(dumps_json(self.to_json_dict()))

    @classmethod
    def load_json(cls, path: str | Path) -> "KeypointSet3D":
        return cls.from_json_dict(json.loads(Path(path).read_text()))


def _save_rows_csv(path, coords, features) -> None:
    rows = coords if features is None else np.hstack([coords, features])
    with open(path, "w") as fh:
        for row in rows:
            fh.write(",".join(repr(float(x)) for x in row) + "\n")


def _load_rows_csv(path, coord_cols: int):
    if not Path(path).read_text().strip():
        return np.zeros((0, coord_cols)), None
    raw = np.loadtxt(path, delimiter=",", ndmin=2, dtype=np.float64)
    if raw.shape[1] < coord_cols:
        raise ValueError(f"need at least {coord_cols} columns, got {raw.shape[1]}")
    feats = raw[:, coord_cols:] if raw.shape[1] > coord_cols else None
    return raw[:, :coord_cols], feats


@dataclass(frozen=True)
class MatchConfig:
    """Feature-matching knobs: distance threshold and normalization mode."""

    delta: float = 0.5
    normalize: bool = True

    def __post_init__(self) -> None:
        if not (self.delta > 0):
            raise ValueError("delta must be positive")


class CorrespondenceSet:
    """Sparse 2D-3D correspondence list: (i, j, score) triples.

    i indexes the 2D set, j the 3D set, score is the feature distance
    that produced the pair (or 0.0 when none applies).
    """

    __slots__ = ("idx2d", "idx3d", "scores")

    def __init__(self, idx2d, idx3d, scores=None, *, n2d=None, n3d=None):
        i = np.asarray(idx2d, dtype=np.int64).reshape(-1)
        j = np.asarray(idx3d, dtype=np.int64).reshape(-1)
        s = (
            np.zeros(len(i))
            if scores is None
            else np.asarray(scores, dtype=np.float64).reshape(-1)
        )
        if not (len(i) == len(j) == len(s)):
            raise ValueError("index and score lists must have equal length")
        if len(i) and (i.min() < 0 or j.min() < 0):
            raise ValueError("negative correspondence index")
        if n2d is not None and len(i) and i.max() >= n2d:
            raise ValueError(f"2D index {i.max()} out of range for set of {n2d}")
        if n3d is not None and len(j) and j.max() >= n3d:
            raise ValueError(f"3D index {j.max()} out of range for set of {n3d}")
        for arr in (i, j, s):
            arr.setflags(write=False)
        object.__setattr__(self, "idx2d", i)
        object.__setattr__(self, "idx3d", j)
        object.__setattr__(self, "scores", s)

    def __setattr__(self, name, value):
        raise AttributeError("CorrespondenceSet is immutable")

    def __len__(self) -> int:
        return len(self.idx2d)

    def __iter__(self):
        return zip(self.idx2d.tolist(), self.idx3d.tolist(), self.scores.tolist())

    def pairs(self) -> set:
        return set(zip(self.idx2d.tolist(), self.idx3d.tolist()))

    def is_one_to_one(self) -> bool:
        return len(set(self.idx2d.tolist())) == len(self.idx2d) and len(
            set(self.idx3d.tolist())
        ) == len(self.idx3d)

    def require_one_to_one(self) -> "CorrespondenceSet":
        if not self.is_one_to_one():
            raise NotOneToOne("a 2D or 3D index appears in more than one pair")
        return self

    def save_csv(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            for i, j, s in self:
                fh.write(f"{i},{j},{repr(s)}\n")

    @classmethod
    def load_csv(cls, path: str | Path) -> "CorrespondenceSet":
        if not Path(path).read_text().strip():
            return cls([], [], [])
        raw = np.loadtxt(path, delimiter=",", ndmin=2, dtype=np.float64)
        if raw.shape[1] != 3:
            raise ValueError(f"expected 3 columns (i, j, score), got {raw.shape[1]}")
        return cls(raw[:, 0].astype(np.int64), raw[:, 1].astype(np.int64), raw[:, 2])


def normalize_features(feats: np.ndarray) -> np.ndarray:
    """Unit-L2 rows; zero rows stay zero."""
    feats = np.atleast_2d(np.asarray(feats, dtype=np.float64))
    norms = np.linalg.norm(feats, axis=1, keepdims=True)
    return np.divide(feats, norms, out=np.zeros_like(feats), where=norms > 0)


def feature_distance(a, b, cfg: MatchConfig = MatchConfig()) -> float:
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if a.shape != b.shape:
        raise DimensionMismatch(f"feature dimensions {a.shape[0]} vs {b.shape[0]}")
    if cfg.normalize:
        a = normalize_features(a)[0]
        b = normalize_features(b)[0]
    return float(np.linalg.norm(a - b))


def feature_distance_matrix(
    feats2d: np.ndarray, feats3d: np.ndarray, cfg: MatchConfig = MatchConfig()
) -> np.ndarray:
    """All-pairs distance matrix D with D[i, j] = d(f2d_i, f3d_j)."""
    a = np.atleast_2d(np.asarray(feats2d, dtype=np.float64))
    b = np.atleast_2d(np.asarray(feats3d, dtype=np.float64))
    if a.shape[1] != b.shape[1]:
        raise DimensionMismatch(f"feature dimensions {a.shape[1]} vs {b.shape[1]}")
    if cfg.normalize:
        a = normalize_features(a)
        b = normalize_features(b)
    return cdist(a, b, metric="euclidean")


def match_by_threshold(
    image_set: KeypointSet2D, cloud_set: KeypointSet3D, cfg: MatchConfig = MatchConfig()
) -> CorrespondenceSet:
    """All pairs whose feature distance is at or below cfg.delta."""
    D = feature_distance_matrix(
        image_set.require_features(), cloud_set.require_features(), cfg
    )
    i, j = np.nonzero(D <= cfg.delta)
    return CorrespondenceSet(i, j, D[i, j], n2d=len(image_set), n3d=len(cloud_set))


def nearest_3d_match(
    q_feature, cloud_set: KeypointSet3D, cfg: MatchConfig = MatchConfig()
) -> tuple[int, float]:
    """Closest 3D keypoint in feature space: (argmin index, min distance).

    Ties break toward the lowest index.
    """
    if len(cloud_set) == 0:
        raise EmptySet("3D keypoint set is empty")
    D = feature_distance_matrix(
        np.atleast_2d(np.asarray(q_feature, dtype=np.float64)),
        cloud_set.require_features(),
        cfg,
    )
    idx = int(np.argmin(D[0]))
    return idx, float(D[0, idx])
