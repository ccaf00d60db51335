"""Correspondence-based pose estimation.

Given explicit 2D-3D pairs this module recovers the camera pose three
ways: a direct linear initializer, damped Gauss-Newton refinement of
the summed squared reprojection error, and a consensus wrapper that
tolerates outlier pairs. The refinement shares its twist
parameterization and line-search discipline with the Chamfer solver;
the difference is that correspondences here are fixed inputs rather
than nearest-neighbor assignments.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chamfer import SolverConfig, TraceRow
from .errors import (
    AllPointsBehindCamera,
    DegenerateConfiguration,
    Divergence,
    NoConsensus,
    TooFewPoints,
)
from .features import CorrespondenceSet, KeypointSet2D, KeypointSet3D
from .geometry import (
    CameraIntrinsics,
    Pose,
    Twist,
    exp_action_jacobian,
    project_points,
    projection_jacobian,
    se3_exp,
)

MIN_PNP_POINTS = 6


@dataclass(frozen=True)
class RansacConfig:
    """Consensus-loop parameters; the RNG seed is mandatory.

    threshold is a squared pixel distance, the same inlier semantics
    the rest of the package uses.
    """

    seed: int
    iterations: int = 1000
    threshold: float = 5.0
    min_sample_size: int = MIN_PNP_POINTS
    confidence: float = 0.999

    def __post_init__(self) -> None:
        if self.seed < 0:
            raise ValueError("seed must be a nonnegative integer")
        if self.iterations < 1:
            raise ValueError("iterations must be at least 1")
        if self.threshold <= 0:
            raise ValueError("threshold must be positive")
        if self.min_sample_size < MIN_PNP_POINTS:
            raise ValueError(f"min_sample_size must be at least {MIN_PNP_POINTS}")
        if not (0.0 < self.confidence < 1.0):
            raise ValueError("confidence must lie strictly between 0 and 1")


def _gather(C: CorrespondenceSet, image_set: KeypointSet2D, cloud_set: KeypointSet3D):
    if len(C) and (
        C.idx2d.max() >= len(image_set) or C.idx3d.max() >= len(cloud_set)
    ):
        raise IndexError("correspondence index out of range for the given sets")
    return image_set.pixels[C.idx2d], cloud_set.points[C.idx3d]


def _linear_from_arrays(pixels: np.ndarray, points: np.ndarray, K: CameraIntrinsics) -> Pose:
    n = len(pixels)
    if n < MIN_PNP_POINTS:
        raise TooFewPoints(f"linear PnP needs {MIN_PNP_POINTS} pairs, got {n}")
    xn = (pixels[:, 0] - K.cu) / K.fu
    yn = (pixels[:, 1] - K.cv) / K.fv
    Xh = np.column_stack([points, np.ones(n)])
    A = np.zeros((2 * n, 12))
    A[0::2, 0:4] = Xh
    A[0::2, 8:12] = -xn[:, None] * Xh
    A[1::2, 4:8] = Xh
    A[1::2, 8:12] = -yn[:, None] * Xh
    _, S, Vt = np.linalg.svd(A)
    # a second near-zero singular value means the pose is not unique
    if S[0] <= 0 or S[-2] < 1e-8 * S[0]:
        raise DegenerateConfiguration("linear system is rank deficient")
    G = Vt[-1].reshape(3, 4)
    depths = points @ G[2, :3] + G[2, 3]
    if np.count_nonzero(depths > 0) * 2 < n:
        G = -G
    M = G[:, :3]
    Um, Sm, Vmt = np.linalg.svd(M)
    d = float(np.sign(np.linalg.det(Um @ Vmt)))
    R = Um @ np.diag([1.0, 1.0, d]) @ Vmt
    scale = Sm.sum() / 3.0
    if not np.isfinite(scale) or scale <= 0:
        raise DegenerateConfiguration("projection matrix has no usable scale")
    return Pose(R, G[:, 3] / scale)


def pnp_linear(
    C: CorrespondenceSet,
    image_set: KeypointSet2D,
    cloud_set: KeypointSet3D,
    K: CameraIntrinsics,
) -> Pose:
    """Direct linear pose estimate from at least six 2D-3D pairs.

    Stacks the homogeneous projection constraints in normalized image
    coordinates, takes the SVD nullspace, fixes the sign so most depths
    come out positive, and projects the linear rotation onto SO(3) by
    its orthogonal polar factor.
    """
    pixels, points = _gather(C, image_set, cloud_set)
    return _linear_from_arrays(pixels, points, K)


def reprojection_cost(
    T: Pose,
    C: CorrespondenceSet,
    image_set: KeypointSet2D,
    cloud_set: KeypointSet3D,
    K: CameraIntrinsics,
) -> float:
    """Sum of squared reprojection errors over the given pairs.

    Pairs whose point falls behind the camera are excluded; if every
    pair does, there is nothing to measure and the call raises.
    """
    pixels, points = _gather(C, image_set, cloud_set)
    return _cost_from_arrays(T, pixels, points, K)


def _cost_from_arrays(T, pixels, points, K) -> float:
    proj, in_front = project_points(points, T, K)
    if not in_front.any():
        raise AllPointsBehindCamera("no corresponded point is in front of the camera")
    r = pixels[in_front] - proj[in_front]
    return float(np.einsum("nd,nd->", r, r))


def _residual_terms(xi_vec, T0, pixels, points, K):
    """Residuals and Jacobian of the visible terms at exp(xi) o T0."""
    x0 = points @ T0.R.T + T0.t
    y, J_exp = exp_action_jacobian(xi_vec, x0)
    in_front = y[:, 2] > 1e-6
    if not in_front.any():
        raise AllPointsBehindCamera("no corresponded point is in front of the camera")
    y = y[in_front]
    J_pi = projection_jacobian(y, K)
    pix = np.column_stack(
        [K.fu * y[:, 0] / y[:, 2] + K.cu, K.fv * y[:, 1] / y[:, 2] + K.cv]
    )
    residuals = pixels[in_front] - pix
    J = np.einsum("nij,njk->nik", J_pi, J_exp[in_front])
    return residuals, J


def reprojection_grad_twist(
    xi: Twist,
    T0: Pose,
    C: CorrespondenceSet,
    image_set: KeypointSet2D,
    cloud_set: KeypointSet3D,
    K: CameraIntrinsics,
) -> np.ndarray:
    """Exact gradient of reprojection_cost in the local twist at T0."""
    xi_vec = (
        xi.as_vector() if isinstance(xi, Twist) else np.asarray(xi, dtype=np.float64)
    )
    pixels, points = _gather(C, image_set, cloud_set)
    residuals, J = _residual_terms(xi_vec, T0, pixels, points, K)
    return -2.0 * np.einsum("ni,nik->k", residuals, J)


def _refine_from_arrays(T_init, pixels, points, K, cfg, trace):
    T = T_init
    cost = _cost_from_arrays(T, pixels, points, K)
    if trace is not None:
        trace.append(TraceRow(0, cost, 0.0))
    stalls = 0
    for it in range(1, cfg.max_iters + 1):
        if cost <= cfg.cost_tol:
            break
        residuals, J = _residual_terms(np.zeros(6), T, pixels, points, K)
        r = residuals.reshape(-1)
        Jf = J.reshape(-1, 6)
        grad = -2.0 * (Jf.T @ r)
        if cfg.method == "gn":
            H = Jf.T @ Jf + cfg.damping * np.eye(6)
            direction = np.linalg.solve(H, Jf.T @ r)
        else:
            direction = -grad
        grad_norm = float(np.linalg.norm(grad))
        if grad_norm <= cfg.grad_tol:
            break

        alpha = cfg.step_init
        decrease = float(grad @ direction)
        accepted = False
        for _ in range(cfg.max_backtracks):
            T_try = se3_exp(Twist.from_vector(alpha * direction)).compose(T)
            try:
                trial = _cost_from_arrays(T_try, pixels, points, K)
            except AllPointsBehindCamera:
                alpha *= cfg.backtrack_factor
                continue
            if trial <= cost + cfg.armijo_c * alpha * decrease:
                T, cost, accepted = T_try, trial, True
                break
            alpha *= cfg.backtrack_factor
        if trace is not None:
            trace.append(TraceRow(it, cost, alpha if accepted else 0.0))
        if accepted:
            stalls = 0
            continue
        stalls += 1
        if stalls >= 5:
            if grad_norm > cfg.grad_tol * 10:
                raise Divergence(
                    f"line search stalled 5 times with gradient norm {grad_norm:.3e}"
                )
            break
    return T


def pnp_refine(
    T_init: Pose,
    C: CorrespondenceSet,
    image_set: KeypointSet2D,
    cloud_set: KeypointSet3D,
    K: CameraIntrinsics,
    cfg: SolverConfig = SolverConfig(),
    trace: list[TraceRow] | None = None,
) -> Pose:
    """Minimize the summed squared reprojection error from T_init.

    Damped Gauss-Newton (or plain gradient descent) in the local twist
    with Armijo backtracking, so the cost trace is monotone
    nonincreasing; pass a list as trace to capture it. Stall handling
    matches the Chamfer solver: five fruitless line searches end the
    solve, raising Divergence only away from a stationary point.
    """
    pixels, points = _gather(C, image_set, cloud_set)
    if len(pixels) < 3:
        raise TooFewPoints("refinement needs at least 3 pairs")
    return _refine_from_arrays(T_init, pixels, points, K, cfg, trace)


def _score(T, pixels, points, K, threshold):
    """Inlier mask and summed inlier error of a pose against all pairs."""
    proj, in_front = project_points(points, T, K)
    err = np.full(len(pixels), np.inf)
    d = pixels[in_front] - proj[in_front]
    err[in_front] = np.einsum("nd,nd->n", d, d)
    mask = err <= threshold
    return mask, float(err[mask].sum())


def pnp_ransac(
    C: CorrespondenceSet,
    image_set: KeypointSet2D,
    cloud_set: KeypointSet3D,
    K: CameraIntrinsics,
    cfg: RansacConfig,
) -> tuple[Pose, np.ndarray]:
    """Consensus pose over correspondences that may contain outliers.

    Each iteration draws a minimal sample from its own counter-derived
    RNG (so any evaluation order gives the same hypotheses), fits the
    linear pose, and counts inliers under the squared-pixel threshold.
    The best hypothesis is refit linearly and then refined on its
    inliers; whichever of the three candidate poses keeps the most
    inliers (ties broken toward lower inlier error, then toward the
    more refined candidate) is returned with its mask.
    """
    pixels, points = _gather(C, image_set, cloud_set)
    n = len(pixels)
    if n < cfg.min_sample_size:
        raise TooFewPoints(
            f"need at least {cfg.min_sample_size} correspondences, got {n}"
        )

    best_count = -1
    best_pose = None
    best_mask = None
    for k in range(cfg.iterations):
        rng = np.random.default_rng([cfg.seed, k])
        sample = rng.choice(n, size=cfg.min_sample_size, replace=False)
        try:
            T_k = _linear_from_arrays(pixels[sample], points[sample], K)
        except DegenerateConfiguration:
            continue
        mask, _ = _score(T_k, pixels, points, K, cfg.threshold)
        count = int(mask.sum())
        if count > best_count:
            best_count, best_pose, best_mask = count, T_k, mask
        # standard adaptive stop: a size-s sample is all-inlier with
        # probability w^s, so after ceil(log(1-conf)/log(1-w^s)) draws
        # the chance of having missed every clean sample drops below
        # 1 - confidence
        w = best_count / n
        if w >= 1.0:
            break
        if w > 0.0:
            miss = np.log1p(-(w**cfg.min_sample_size))
            if miss < 0 and (k + 1) >= np.log1p(-cfg.confidence) / miss:
                break

    if best_pose is None or best_count < cfg.min_sample_size:
        raise NoConsensus(
            f"best consensus {max(best_count, 0)} is below the minimum sample size"
        )

    candidates = [best_pose]
    inl = np.flatnonzero(best_mask)
    try:
        candidates.append(_linear_from_arrays(pixels[inl], points[inl], K))
    except (TooFewPoints, DegenerateConfiguration):
        pass
    try:
        candidates.append(
            _refine_from_arrays(
                candidates[-1], pixels[inl], points[inl], K, SolverConfig(), None
            )
        )
    except (AllPointsBehindCamera, Divergence):
        pass

    scored = []
    for rank, T in enumerate(candidates):
        mask, sse = _score(T, pixels, points, K, cfg.threshold)
        scored.append((int(mask.sum()), -sse, rank, T, mask))
    count, _, _, T_best, mask = max(scored, key=lambda row: row[:3])
    return T_best, mask
