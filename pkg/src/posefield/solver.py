"""Pose recovery from pixel-to-surface correspondences.

A location field pairs every foreground pixel with a model-surface point;
that is exactly a camera resectioning problem. The solve runs in two
stages: a normalized direct linear transform projected onto the
constrained K[R|(0,0,d)] family for initialization, then damped nonlinear
least squares over the 7 parameters on the raw reprojection residuals.

During refinement the rotation is parameterized as a local 3-vector
increment composed onto the current rotation, and depth and focal length
move in log-space: both stay positive and the strongly correlated f-d
direction is better conditioned. Under weak perspective only the ratio
f/d is observable; expect f and d to drift individually while f/d and the
reprojection stay accurate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import camera
from .camera import NotInFamily, PoseParams
from .field import LocationField

GRID_AZIMUTHS = [math.radians(a) for a in range(0, 360, 30)]
GRID_ELEVATIONS = [0.0, math.radians(30.0)]


class SolverError(Exception):
    pass


class TooFewForeground(SolverError):
    """The field does not contain enough foreground pixels to solve."""


class DegenerateConfiguration(SolverError):
    """The correspondences do not constrain a unique projection (e.g. coplanar)."""


class NumericalFailure(SolverError):
    """No initialization could be refined to a valid pose."""


@dataclass(frozen=True)
class CorrespondenceSet:
    """Pixel centers (N, 2) paired with model-surface points (N, 3)."""

    pixels: np.ndarray
    points: np.ndarray
    field_size: tuple[int, int]  # (width, height)

    def __post_init__(self):
        pixels = np.ascontiguousarray(np.asarray(self.pixels, dtype=float))
        points = np.ascontiguousarray(np.asarray(self.points, dtype=float))
        if pixels.ndim != 2 or pixels.shape[1] != 2:
            raise ValueError(f"pixels must be (N, 2), got {pixels.shape}")
        if points.shape != (pixels.shape[0], 3):
            raise ValueError(f"points must be (N, 3) matching pixels, got {points.shape}")
        if not (np.all(np.isfinite(pixels)) and np.all(np.isfinite(points))):
            raise ValueError("correspondences must be finite")
        object.__setattr__(self, "pixels", pixels)
        object.__setattr__(self, "points", points)

    def __len__(self):
        return len(self.pixels)


@dataclass(frozen=True)
class SolveOptions:
    max_correspondences: int = 2000
    seed: int = 0
    max_iterations: int = 200
    cost_tol: float = 1e-12
    step_tol: float = 1e-12
    huber_px: float | None = None
    depth_prior: tuple[float, float] = (3.0, 30.0)
    focal_prior: tuple[float, float] = (500.0, 3000.0)
    grid_refine_candidates: int = 3


@dataclass(frozen=True)
class SolveResult:
    pose: PoseParams
    rms_residual: float
    iterations: int
    init_source: str  # "linear" or "grid"


def correspondences_from_field(
    field: LocationField, max_n: int = 2000, seed: int = 0
) -> CorrespondenceSet:
    """Deterministic subsample of the field's foreground pixels."""
    ys, xs = np.nonzero(field.mask)
    count = len(ys)
    if count < 6:
        raise TooFewForeground(f"need at least 6 foreground pixels, found {count}")
    if count > max_n:
        keep = np.sort(np.random.default_rng(seed).choice(count, size=max_n, replace=False))
        ys, xs = ys[keep], xs[keep]
    pixels = np.stack([xs + 0.5, ys + 0.5], axis=1)
    points = field.coords[ys, xs].astype(np.float64)
    return CorrespondenceSet(pixels, points, (field.width, field.height))


def _normalization_2d(pixels):
    centroid = pixels.mean(axis=0)
    spread = np.mean(np.linalg.norm(pixels - centroid, axis=1))
    scale = math.sqrt(2.0) / spread if spread > 0 else 1.0
    T = np.array(
        [[scale, 0.0, -scale * centroid[0]], [0.0, scale, -scale * centroid[1]], [0.0, 0.0, 1.0]]
    )
    return T


def _normalization_3d(points):
    centroid = points.mean(axis=0)
    spread = np.mean(np.linalg.norm(points - centroid, axis=1))
    scale = math.sqrt(3.0) / spread if spread > 0 else 1.0
    T = np.eye(4)
    T[:3, :3] *= scale
    T[:3, 3] = -scale * centroid
    return T


def linear_init(c: CorrespondenceSet, rank_tol: float = 1e-9) -> PoseParams:
    """Normalized DLT followed by projection onto the constrained family.

    Raises DegenerateConfiguration when the design matrix is rank
    deficient (all points coplanar or collinear) or the linear estimate
    cannot be expressed in the K[R|(0,0,d)] family.
    """
    n = len(c)
    if n < 6:
        raise DegenerateConfiguration(f"need at least 6 correspondences, got {n}")
    T2 = _normalization_2d(c.pixels)
    T3 = _normalization_3d(c.points)
    pix = c.pixels @ T2[:2, :2].T + T2[:2, 2]
    pts = c.points @ T3[:3, :3].T + T3[:3, 3]

    A = np.zeros((2 * n, 12))
    A[0::2, 0:3] = pts
    A[0::2, 3] = 1.0
    A[0::2, 8:11] = -pix[:, 0:1] * pts
    A[0::2, 11] = -pix[:, 0]
    A[1::2, 4:7] = pts
    A[1::2, 7] = 1.0
    A[1::2, 8:11] = -pix[:, 1:2] * pts
    A[1::2, 11] = -pix[:, 1]

    _, s, Vt = np.linalg.svd(A, full_matrices=False)
    if s[0] <= 0 or s[-2] / s[0] < rank_tol:
        raise DegenerateConfiguration(
            f"design matrix is rank deficient (sigma ratio {s[-2] / s[0]:.3e})"
        )
    P_norm = Vt[-1].reshape(3, 4)
    P = np.linalg.inv(T2) @ P_norm @ T3
    try:
        return camera.fit_projection(P)
    except NotInFamily as exc:
        raise DegenerateConfiguration(f"linear estimate not a valid pose: {exc}") from exc


def residuals(c: CorrespondenceSet, pose: PoseParams) -> np.ndarray:
    """Reprojection residuals, interleaved (x0, y0, x1, y1, ...), in pixels."""
    projected = camera.project_points(pose, c.points)
    return (projected - c.pixels).reshape(-1)


def residual_jacobian(c: CorrespondenceSet, pose: PoseParams) -> np.ndarray:
    """Analytic Jacobian of residuals w.r.t. the local step coordinates.

    Columns: rotation increment (3), log depth, log focal, u, v -- the
    same chart apply_step uses.
    """
    R = camera.rotation_from_angles(*pose.angles())
    Y = c.points @ R.T                      # rotated points, before translation
    cam = Y.copy()
    cam[:, 2] += pose.depth
    z = cam[:, 2]
    f = pose.focal
    n = len(c)
    J = np.zeros((2 * n, 7))
    f_over_z = f / z
    # d(pixel)/d(camera point)
    dpx_dc = np.zeros((n, 2, 3))
    dpx_dc[:, 0, 0] = f_over_z
    dpx_dc[:, 0, 2] = -f * cam[:, 0] / z**2
    dpx_dc[:, 1, 1] = f_over_z
    dpx_dc[:, 1, 2] = -f * cam[:, 1] / z**2
    # rotation: d(R X)/d(omega) = -[R X]_x for a left increment exp(omega) R
    skew = np.zeros((n, 3, 3))
    skew[:, 0, 1] = -Y[:, 2]
    skew[:, 0, 2] = Y[:, 1]
    skew[:, 1, 0] = Y[:, 2]
    skew[:, 1, 2] = -Y[:, 0]
    skew[:, 2, 0] = -Y[:, 1]
    skew[:, 2, 1] = Y[:, 0]
    J_rot = -np.einsum("nij,njk->nik", dpx_dc, skew)
    J[0::2, 0:3] = J_rot[:, 0, :]
    J[1::2, 0:3] = J_rot[:, 1, :]
    # log depth: d(cam)/d(log d) = (0, 0, d)
    J[0::2, 3] = dpx_dc[:, 0, 2] * pose.depth
    J[1::2, 3] = dpx_dc[:, 1, 2] * pose.depth
    # log focal
    J[0::2, 4] = f * cam[:, 0] / z
    J[1::2, 4] = f * cam[:, 1] / z
    # principal point
    J[0::2, 5] = 1.0
    J[1::2, 6] = 1.0
    return J


def _exp_so3(omega: np.ndarray) -> np.ndarray:
    angle = np.linalg.norm(omega)
    if angle < 1e-12:
        K = _skew(omega)
        return np.eye(3) + K + 0.5 * (K @ K)
    axis = omega / angle
    K = _skew(axis)
    return np.eye(3) + math.sin(angle) * K + (1.0 - math.cos(angle)) * (K @ K)


def _skew(w):
    return np.array([[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]])


def apply_step(pose: PoseParams, delta: np.ndarray) -> PoseParams:
    """Move the pose by local step coordinates (the refinement chart)."""
    delta = np.asarray(delta, dtype=float)
    R = _exp_so3(delta[0:3]) @ camera.rotation_from_angles(*pose.angles())
    azimuth, elevation, theta = camera.angles_from_rotation(R)
    return PoseParams(
        azimuth=azimuth,
        elevation=elevation,
        theta=theta,
        depth=math.exp(math.log(pose.depth) + delta[3]),
        focal=math.exp(math.log(pose.focal) + delta[4]),
        u=pose.u + delta[5],
        v=pose.v + delta[6],
    )


def _weighted(r: np.ndarray, huber_px: float | None) -> np.ndarray:
    """Per-component weights implementing a Huber loss on point distances."""
    if huber_px is None:
        return np.ones_like(r)
    dist = np.hypot(r[0::2], r[1::2])
    w = np.ones_like(dist)
    big = dist > huber_px
    w[big] = np.sqrt(huber_px / dist[big])
    return np.repeat(w, 2)


def _cost(c: CorrespondenceSet, pose: PoseParams, huber_px) -> tuple[float, np.ndarray]:
    r = residuals(c, pose)
    w = _weighted(r, huber_px)
    return float(np.sum((w * r) ** 2)), r


def refine(c: CorrespondenceSet, init: PoseParams, opts: SolveOptions | None = None) -> SolveResult:
    """Damped least squares over the 7 parameters from a given init.

    Accepts steps only when the cost decreases, so the returned pose never
    reprojects worse than the init. Terminates on relative cost change or
    step norm below tolerance, or after the iteration cap.
    """
    if opts is None:
        opts = SolveOptions()
    pose = init
    try:
        cost, r = _cost(c, pose, opts.huber_px)
    except camera.BehindCamera as exc:
        raise NumericalFailure(f"init projects points behind the camera: {exc}") from exc
    lam = 1e-3
    iterations = 0
    solved_any = True
    for _ in range(opts.max_iterations):
        w = _weighted(r, opts.huber_px)
        J = residual_jacobian(c, pose) * w[:, None]
        g = J.T @ (w * r)
        H = J.T @ J
        diag = np.diag(H).copy()
        diag[diag < 1e-12] = 1e-12
        accepted = False
        solved_any = False
        while lam < 1e15:
            try:
                delta = np.linalg.solve(H + lam * np.diag(diag), -g)
                solved_any = True
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            try:
                candidate = apply_step(pose, delta)
                new_cost, new_r = _cost(c, candidate, opts.huber_px)
            except (camera.BehindCamera, ValueError, OverflowError):
                lam *= 10.0
                continue
            if new_cost < cost:
                step_norm = float(np.linalg.norm(delta))
                rel_drop = (cost - new_cost) / max(cost, 1e-300)
                pose, cost, r = candidate, new_cost, new_r
                lam = max(lam / 3.0, 1e-12)
                iterations += 1
                accepted = True
                if rel_drop < opts.cost_tol or step_norm < opts.step_tol:
                    return _finish(c, pose, cost, iterations)
                break
            lam *= 10.0
        if not accepted:
            if not solved_any:
                raise NumericalFailure("normal equations unsolvable at all damping levels")
            return _finish(c, pose, cost, iterations)  # converged: no improving step
    return _finish(c, pose, cost, iterations)


def _finish(c: CorrespondenceSet, pose: PoseParams, cost: float, iterations: int) -> SolveResult:
    # report the unweighted reprojection RMS regardless of the loss used
    r = residuals(c, pose)
    rms = math.sqrt(float(np.sum(r**2)) / len(c))
    return SolveResult(pose=pose, rms_residual=rms, iterations=iterations, init_source="")


def _grid_candidates(c: CorrespondenceSet, opts: SolveOptions):
    depth = math.sqrt(opts.depth_prior[0] * opts.depth_prior[1])
    focal = math.sqrt(opts.focal_prior[0] * opts.focal_prior[1])
    cu, cv = c.pixels.mean(axis=0)
    poses = []
    for elevation in GRID_ELEVATIONS:
        for azimuth in GRID_AZIMUTHS:
            poses.append(PoseParams(azimuth, elevation, 0.0, depth, focal, cu, cv))
    return poses


def solve_pose(field: LocationField, opts: SolveOptions | None = None) -> SolveResult:
    """Recover the full 7-parameter pose from a location field.

    Linear initialization when the correspondences support it, otherwise
    a coarse viewpoint grid seeded from configured priors; the best
    initialization is refined and the lowest-residual result returned.
    """
    if opts is None:
        opts = SolveOptions()
    c = correspondences_from_field(field, opts.max_correspondences, opts.seed)
    return solve_correspondences(c, opts)


def solve_correspondences(c: CorrespondenceSet, opts: SolveOptions | None = None) -> SolveResult:
    """solve_pose for an explicit correspondence set."""
    if opts is None:
        opts = SolveOptions()
    failures = []
    try:
        init = linear_init(c)
        result = refine(c, init, opts)
        return replace(result, init_source="linear")
    except (DegenerateConfiguration, NumericalFailure) as exc:
        failures.append(str(exc))

    candidates = _grid_candidates(c, opts)
    scored = []
    for pose in candidates:
        try:
            cost, _ = _cost(c, pose, opts.huber_px)
        except camera.BehindCamera:
            continue
        scored.append((cost, pose))
    scored.sort(key=lambda item: item[0])
    best: SolveResult | None = None
    for _, pose in scored[: max(1, opts.grid_refine_candidates)]:
        try:
            result = refine(c, pose, opts)
        except NumericalFailure as exc:
            failures.append(str(exc))
            continue
        if best is None or result.rms_residual < best.rms_residual:
            best = result
    if best is None:
        raise NumericalFailure("every initialization failed: " + "; ".join(failures))
    return replace(best, init_source="grid")
