"""Inlier-count objectives for pose + correspondence estimation.

kappa counts inliers of an explicit 2D-3D matching under a pose;
kappa_star is its correspondence-free relaxation, counting two-sided
nearest-neighbor inliers between the pixel set and the projected cloud.
For any one-to-one matching, kappa never exceeds kappa_star, which is
what makes the relaxation usable as a surrogate objective; see
check_inequality8. brute_force_best_pose maximizes kappa_star over an
explicit twist grid and serves as the small-instance ground truth for
the iterative solvers.

Behind-camera points cannot be projected, so they count as non-inliers
on their own side and are excluded from the other side's minima; the
counting effect is the same as assigning them infinite distance.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial.distance import cdist

from .errors import EmptySet, GridTooLarge
from .features import CorrespondenceSet, KeypointSet2D, KeypointSet3D
from .geometry import CameraIntrinsics, Pose, Twist, project_points, se3_exp

DEFAULT_TAU = 5.0


@dataclass(frozen=True)
class InlierConfig:
    """Squared-pixel threshold below which a reprojection is an inlier."""

    tau: float = DEFAULT_TAU

    def __post_init__(self) -> None:
        if not (self.tau > 0):
            raise ValueError("tau must be positive")


@dataclass(frozen=True)
class GridSpec:
    """Axis-aligned twist grid: per-component center, half-width, steps.

    Component order matches Twist.as_vector(): three rotation entries
    then three translation entries. An axis with steps == 1 stays at its
    center regardless of half-width.
    """

    center: tuple
    half_width: tuple
    steps: tuple

    def __post_init__(self) -> None:
        for name in ("center", "half_width", "steps"):
            if len(getattr(self, name)) != 6:
                raise ValueError(f"{name} must have 6 entries")
        if any(s < 1 for s in self.steps):
            raise ValueError("steps must all be at least 1")
        if any(h < 0 for h in self.half_width):
            raise ValueError("half widths must be nonnegative")

    def cardinality(self) -> int:
        out = 1
        for s in self.steps:
            out *= int(s)
        return out

    def axis_values(self, i: int) -> np.ndarray:
        c, h, n = self.center[i], self.half_width[i], int(self.steps[i])
        if n == 1:
            return np.array([float(c)])
        return np.linspace(c - h, c + h, n)

    def to_json_dict(self) -> dict:
        return {
            "center": [float(x) for x in self.center],
            "half_width": [float(x) for x in self.half_width],
            "steps": [int(x) for x in self.steps],
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "GridSpec":
        return cls(
            center=tuple(float(x) for x in data["center"]),
            half_width=tuple(float(x) for x in data["half_width"]),
            steps=tuple(int(x) for x in data["steps"]),
        )


def _validated_indices(C: CorrespondenceSet, n2d: int, n3d: int):
    if len(C) == 0:
        return C.idx2d, C.idx3d
    if C.idx2d.max() >= n2d:
        raise ValueError(f"2D index {C.idx2d.max()} out of range for set of {n2d}")
    if C.idx3d.max() >= n3d:
        raise ValueError(f"3D index {C.idx3d.max()} out of range for set of {n3d}")
    return C.idx2d, C.idx3d


def kappa(
    T: Pose,
    C: CorrespondenceSet,
    image_set: KeypointSet2D,
    cloud_set: KeypointSet3D,
    K: CameraIntrinsics,
    cfg: InlierConfig = InlierConfig(),
) -> int:
    """Inlier count of an explicit correspondence list under pose T."""
    i, j = _validated_indices(C, len(image_set), len(cloud_set))
    if len(C) == 0:
        return 0
    proj, in_front = project_points(cloud_set.points, T, K)
    diff = image_set.pixels[i] - proj[j]
    sq = np.einsum("nd,nd->n", diff, diff)
    ok = in_front[j] & (sq <= cfg.tau)
    return int(np.count_nonzero(ok))


def kappa_star(
    T: Pose,
    image_set: KeypointSet2D,
    cloud_set: KeypointSet3D,
    K: CameraIntrinsics,
    cfg: InlierConfig = InlierConfig(),
) -> int:
    """Correspondence-free two-sided inlier count at pose T."""
    if len(image_set) == 0 or len(cloud_set) == 0:
        raise EmptySet("kappa_star needs a nonempty pixel set and cloud")
    proj, in_front = project_points(cloud_set.points, T, K)
    visible = proj[in_front]
    if len(visible) == 0:
        return 0
    D = cdist(image_set.pixels, visible, metric="sqeuclidean")
    forward = int(np.count_nonzero(D.min(axis=1) <= cfg.tau))
    backward = int(np.count_nonzero(D.min(axis=0) <= cfg.tau))
    return forward + backward


def check_inequality8(
    T: Pose,
    C: CorrespondenceSet,
    image_set: KeypointSet2D,
    cloud_set: KeypointSet3D,
    K: CameraIntrinsics,
    cfg: InlierConfig = InlierConfig(),
) -> tuple[int, int, bool]:
    """Evaluate both counts for a one-to-one matching and test the bound.

    Returns (kappa, kappa_star, kappa <= kappa_star). The bound is a
    theorem for matchings, so a violation means a bug; it is reported
    rather than asserted so sweeps can tally it.
    """
    C.require_one_to_one()
    k = kappa(T, C, image_set, cloud_set, K, cfg)
    ks = kappa_star(T, image_set, cloud_set, K, cfg)
    return k, ks, k <= ks


def brute_force_best_pose(
    image_set: KeypointSet2D,
    cloud_set: KeypointSet3D,
    K: CameraIntrinsics,
    cfg: InlierConfig,
    grid: GridSpec,
    limit: int = 10**6,
) -> tuple[Pose, int]:
    """Exhaustively maximize kappa_star over an explicit twist grid.

    Enumeration runs in row-major order over the six axes (first twist
    component outermost); ties keep the earliest pose.
    """
    if grid.cardinality() > limit:
        raise GridTooLarge(f"grid has {grid.cardinality()} cells, limit {limit}")
    axes = [grid.axis_values(i) for i in range(6)]
    best_pose = None
    best_count = -1
    for flat_idx in range(grid.cardinality()):
        idx = np.unravel_index(flat_idx, [len(a) for a in axes])
        xi = np.array([axes[d][idx[d]] for d in range(6)])
        T = se3_exp(Twist.from_vector(xi))
        count = kappa_star(T, image_set, cloud_set, K, cfg)
        if count > best_count:
            best_pose, best_count = T, count
    return best_pose, best_count
