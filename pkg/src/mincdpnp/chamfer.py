"""Bidirectional projected Chamfer cost, its twist gradient, and the solver.

The cost at pose T sums, over every pixel, the squared distance to the
nearest projected cloud point, plus, over every cloud point, the squared
distance from its projection to the nearest pixel. Minimizing it aligns
the projected cloud with the pixel set without any explicit matching,
which is what lets a pose be solved from unmatched keypoint sets.

The cost is piecewise smooth: it switches faces whenever a nearest
neighbor changes. Gradient and Gauss-Newton steps freeze the
assignments of the current iterate (the standard subgradient choice)
and re-derive them after every accepted step, so the solver is a
projective flavor of ICP.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .errors import AllPointsBehindCamera, Divergence, EmptySet, NonFiniteInput
from .features import KeypointSet2D, KeypointSet3D
from .geometry import (
    CameraIntrinsics,
    Pose,
    Twist,
    exp_action_jacobian,
    pose_difference,
    project_points,
    projection_jacobian,
    se3_exp,
)

DEFAULT_LAMBDA1 = 0.2
DEFAULT_LAMBDA2 = 1e-4
WARMUP_EPOCHS = 20


@dataclass(frozen=True)
class ChamferReport:
    """Chamfer cost with its per-term breakdown.

    forward_terms has one entry per pixel. backward_terms has one entry
    per cloud point; points behind the camera hold NaN when excluded
    (the default) or the configured penalty. assignment is the pair of
    nearest-index arrays (cloud index per pixel, pixel index per cloud
    point, -1 where undefined).
    """

    value: float
    forward_terms: np.ndarray
    backward_terms: np.ndarray
    assignment: tuple


@dataclass(frozen=True)
class LossWeights:
    """Weights of the keypoint and Chamfer terms in the combined objective."""

    lambda1: float = DEFAULT_LAMBDA1
    lambda2: float = DEFAULT_LAMBDA2

    def __post_init__(self) -> None:
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("loss weights must be nonnegative")

    @classmethod
    def for_epoch(cls, epoch: int, warmup_epochs: int = WARMUP_EPOCHS) -> "LossWeights":
        """Schedule hook: both weights stay zero through the warm-up."""
        if epoch < warmup_epochs:
            return cls(lambda1=0.0, lambda2=0.0)
        return cls()


@dataclass(frozen=True)
class SolverConfig:
    max_iters: int = 200
    cost_tol: float = 1e-12
    grad_tol: float = 1e-10
    method: str = "gn"
    damping: float = 1e-6
    step_init: float = 1.0
    armijo_c: float = 1e-4
    backtrack_factor: float = 0.5
    max_backtracks: int = 30

    def __post_init__(self) -> None:
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.cost_tol <= 0 or self.grad_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.method not in ("gn", "gd"):
            raise ValueError("method must be 'gn' or 'gd'")
        if self.damping <= 0:
            raise ValueError("damping must be positive")


@dataclass(frozen=True)
class TraceRow:
    """One solver iteration: cost after the step and what the step was."""

    iteration: int
    cost: float
    step_size: float
    rot_err_deg: float | None = None
    trans_err_m: float | None = None


def chamfer_cost(
    T: Pose,
    image_set: KeypointSet2D,
    cloud_set: KeypointSet3D,
    K: CameraIntrinsics,
    behind_penalty: float | None = None,
) -> ChamferReport:
    """Two-sided sum of squared nearest-neighbor distances at pose T.

    behind_penalty, when given, is added to backward_terms for every
    cloud point behind the camera; by default such points are excluded.
    """
    if len(image_set) == 0 or len(cloud_set) == 0:
        raise EmptySet("chamfer_cost needs a nonempty pixel set and cloud")
    proj, in_front = project_points(cloud_set.points, T, K)
    if not in_front.any():
        raise AllPointsBehindCamera("no cloud point projects in front of the camera")
    visible_idx = np.flatnonzero(in_front)
    D = cdist(image_set.pixels, proj[visible_idx], metric="sqeuclidean")

    fwd_nearest = np.argmin(D, axis=1)
    forward_terms = D[np.arange(len(image_set)), fwd_nearest]
    fwd_assign = visible_idx[fwd_nearest]

    bwd_nearest = np.argmin(D, axis=0)
    backward_terms = np.full(len(cloud_set), np.nan)
    backward_terms[visible_idx] = D[bwd_nearest, np.arange(len(visible_idx))]
    bwd_assign = np.full(len(cloud_set), -1, dtype=np.int64)
    bwd_assign[visible_idx] = bwd_nearest

    value = float(forward_terms.sum() + backward_terms[visible_idx].sum())
    if behind_penalty is not None:
        n_behind = len(cloud_set) - len(visible_idx)
        backward_terms[~in_front] = behind_penalty
        value += behind_penalty * n_behind
    return ChamferReport(
        value=value,
        forward_terms=forward_terms,
        backward_terms=backward_terms,
        assignment=(fwd_assign, bwd_assign),
    )


def _frozen_terms(xi_vec, T0, image_set, cloud_set, K):
    """Assignments and per-term data at T = exp(xi) o T0, for gradient work.

    Returns (q_terms, y_terms, x0_terms): the pixel, projected-point
    input, and pre-pose point of every cost term at the current
    assignment, with shared points repeated once per term.
    """
    x0 = cloud_set.points @ T0.R.T + T0.t
    T_delta = se3_exp(Twist.from_vector(xi_vec))
    report = chamfer_cost(T_delta, image_set, KeypointSet3D(x0), K)
    fwd_assign, bwd_assign = report.assignment
    visible = np.flatnonzero(bwd_assign >= 0)
    q_idx = np.concatenate([np.arange(len(image_set)), bwd_assign[visible]])
    p_idx = np.concatenate([fwd_assign, visible])
    return report, image_set.pixels[q_idx], x0[p_idx]


def chamfer_grad_twist(
    xi: Twist,
    T0: Pose,
    image_set: KeypointSet2D,
    cloud_set: KeypointSet3D,
    K: CameraIntrinsics,
) -> np.ndarray:
    """Exact gradient of the frozen-assignment cost in the twist coordinates.

    The pose is parameterized as se3_exp(xi) composed with T0, so the
    returned 6-vector differentiates through both the projection and the
    exponential map at the current xi, not at zero.
    """
    xi_vec = xi.as_vector() if isinstance(xi, Twist) else np.asarray(xi, dtype=np.float64)
    _, q, x0 = _frozen_terms(xi_vec, T0, image_set, cloud_set, K)
    y, J_exp = exp_action_jacobian(xi_vec, x0)
    J_pi = projection_jacobian(y, K)
    pix = np.column_stack(
        [K.fu * y[:, 0] / y[:, 2] + K.cu, K.fv * y[:, 1] / y[:, 2] + K.cv]
    )
    residuals = q - pix
    # d/dxi sum ||q - pi(y)||^2 = -2 sum r^T J_pi J_exp
    J_term = np.einsum("nij,njk->nik", J_pi, J_exp)
    return -2.0 * np.einsum("ni,nik->k", residuals, J_term)


def _gn_step(xi_vec, T0, image_set, cloud_set, K, damping):
    """Damped normal-equation step on the frozen-assignment residuals."""
    _, q, x0 = _frozen_terms(xi_vec, T0, image_set, cloud_set, K)
    y, J_exp = exp_action_jacobian(xi_vec, x0)
    J_pi = projection_jacobian(y, K)
    pix = np.column_stack(
        [K.fu * y[:, 0] / y[:, 2] + K.cu, K.fv * y[:, 1] / y[:, 2] + K.cv]
    )
    residuals = (q - pix).reshape(-1)
    J = np.einsum("nij,njk->nik", J_pi, J_exp).reshape(-1, 6)
    H = J.T @ J + damping * np.eye(6)
    g = J.T @ residuals
    return np.linalg.solve(H, g), -2.0 * g


def solve_pose_chamfer(
    T_init: Pose,
    image_set: KeypointSet2D,
    cloud_set: KeypointSet3D,
    K: CameraIntrinsics,
    cfg: SolverConfig = SolverConfig(),
    T_gt: Pose | None = None,
) -> tuple[Pose, list[TraceRow]]:
    """Minimize the Chamfer cost over poses, starting from T_init.

    Each iteration freezes the nearest-neighbor assignments, takes a
    damped Gauss-Newton or gradient step in the local twist, and
    backtracks until the true (re-assigned) cost decreases, so the cost
    trace is monotone nonincreasing. Iterations where the line search
    finds no decrease leave the pose in place; five such stalls in a row
    end the solve, raising Divergence only if the gradient says the
    iterate is not a stationary point.
    """
    T = T_init
    report = chamfer_cost(T, image_set, cloud_set, K)
    cost = report.value

    def errs(pose):
        if T_gt is None:
            return None, None
        return pose_difference(pose, T_gt)

    rot, trans = errs(T)
    trace = [TraceRow(0, cost, 0.0, rot, trans)]
    stalls = 0
    for it in range(1, cfg.max_iters + 1):
        if cost <= cfg.cost_tol:
            break
        zero = np.zeros(6)
        if cfg.method == "gn":
            direction, grad = _gn_step(zero, T, image_set, cloud_set, K, cfg.damping)
        else:
            grad = chamfer_grad_twist(Twist.zero(), T, image_set, cloud_set, K)
            direction = -grad
        grad_norm = float(np.linalg.norm(grad))
        if grad_norm <= cfg.grad_tol:
            break

        alpha = cfg.step_init
        decrease = float(grad @ direction)  # negative along a descent direction
        accepted = False
        for _ in range(cfg.max_backtracks):
            T_try = se3_exp(Twist.from_vector(alpha * direction)).compose(T)
            try:
                trial = chamfer_cost(T_try, image_set, cloud_set, K).value
            except AllPointsBehindCamera:
                alpha *= cfg.backtrack_factor
                continue
            if trial <= cost + cfg.armijo_c * alpha * decrease:
                T, cost, accepted = T_try, trial, True
                break
            alpha *= cfg.backtrack_factor
        rot, trans = errs(T)
        trace.append(TraceRow(it, cost, alpha if accepted else 0.0, rot, trans))
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
    return T, trace


def save_trace_csv(path, trace: list[TraceRow]) -> None:
    """Trace rows as CSV; ground-truth error columns blank when untracked."""
    with open(path, "w") as fh:
        fh.write("iteration,cost,step_size,rot_err_deg,trans_err_m\n")
        for row in trace:
            rot = "" if row.rot_err_deg is None else repr(row.rot_err_deg)
            trans = "" if row.trans_err_m is None else repr(row.trans_err_m)
            fh.write(
                f"{row.iteration},{repr(row.cost)},{repr(row.step_size)},{rot},{trans}\n"
            )


def mincd_objective(
    corr_loss: float,
    key_loss: float,
    chamfer_value: float,
    w: LossWeights = LossWeights(),
) -> float:
    """Combined training objective: corr + lambda1 * key + lambda2 * chamfer."""
    for name, value in (
        ("corr_loss", corr_loss),
        ("key_loss", key_loss),
        ("chamfer_value", chamfer_value),
    ):
        if not np.isfinite(value):
            raise NonFiniteInput(f"{name} is not finite: {value}")
    return float(corr_loss + w.lambda1 * key_loss + w.lambda2 * chamfer_value)
