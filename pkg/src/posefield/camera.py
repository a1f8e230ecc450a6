"""Seven-parameter perspective camera model.

Conventions used throughout the toolkit:

- Camera axes: x-right, y-down, z-forward. Image rows increase downward,
  so the intrinsic matrix applies with a positive focal length and no
  sign flips.
- The camera always faces the world origin: the translation is
  ``T = (0, 0, d)`` with model depth ``d > 0``, and the world origin
  projects exactly onto the principal point ``(u, v)``.
- Rotation composition is ``R = Rz(theta) @ Rx(elevation) @ Ry(azimuth)``.
  With all angles zero the camera sits at ``(0, 0, -d)`` looking toward +z.
- Angles are radians everywhere in process; degrees appear only at
  UI/report boundaries. Azimuth is canonical in ``[0, 2*pi)``; elevation
  and in-plane rotation in ``(-pi, pi]``.
- Quaternions are ``(w, x, y, z)`` with canonical sign ``w >= 0`` (first
  nonzero component positive when ``w == 0``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

TWO_PI = 2.0 * math.pi

# Points closer than this camera-frame depth are treated as behind the camera.
NEAR_PLANE = 1e-6

# |cos(elevation)| below this means azimuth and theta are inseparable.
GIMBAL_EPS = 1e-7


class CameraError(Exception):
    """Base class for camera-model errors."""


class BehindCamera(CameraError):
    """A point's camera-frame depth is at or behind the near plane."""


class NotInFamily(CameraError):
    """A 3x4 matrix does not fit the constrained K[R|(0,0,d)] family."""


class DegenerateBox(CameraError):
    """A 2D bounding box has no positive width or height."""


def wrap_angle(x: float) -> float:
    """Wrap an angle to (-pi, pi]. Identity for values already in range."""
    if -math.pi < x <= math.pi:
        return float(x)
    r = math.remainder(x, TWO_PI)
    if r <= -math.pi:
        r += TWO_PI
    return r


def wrap_azimuth(x: float) -> float:
    """Wrap an angle to [0, 2*pi). Identity for values already in range."""
    if 0.0 <= x < TWO_PI:
        return float(x)
    r = math.fmod(x, TWO_PI)
    if r < 0.0:
        r += TWO_PI
    if r >= TWO_PI:  # fmod of a tiny negative can round back up to 2*pi
        r = 0.0
    return r


@dataclass(frozen=True)
class PoseParams:
    """The 7 camera parameters: three angles, model depth, and intrinsics.

    Angles are stored canonically (azimuth in [0, 2*pi), elevation and
    theta in (-pi, pi]); construction canonicalizes them. depth and focal
    must be positive. u, v may fall outside the image.
    """

    azimuth: float
    elevation: float
    theta: float
    depth: float
    focal: float
    u: float
    v: float

    def __post_init__(self):
        for name in ("azimuth", "elevation", "theta", "depth", "focal", "u", "v"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ValueError(f"pose parameter {name} must be finite, got {value!r}")
            object.__setattr__(self, name, value)
        if self.depth <= 0:
            raise ValueError(f"depth must be positive, got {self.depth!r}")
        if self.focal <= 0:
            raise ValueError(f"focal must be positive, got {self.focal!r}")
        object.__setattr__(self, "azimuth", wrap_azimuth(self.azimuth))
        object.__setattr__(self, "elevation", wrap_angle(self.elevation))
        object.__setattr__(self, "theta", wrap_angle(self.theta))

    def angles(self) -> tuple[float, float, float]:
        return (self.azimuth, self.elevation, self.theta)

    def to_dict(self) -> dict[str, float]:
        return {
            "azimuth": self.azimuth,
            "elevation": self.elevation,
            "theta": self.theta,
            "depth": self.depth,
            "focal": self.focal,
            "u": self.u,
            "v": self.v,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PoseParams":
        return cls(
            azimuth=float(d["azimuth"]),
            elevation=float(d["elevation"]),
            theta=float(d["theta"]),
            depth=float(d["depth"]),
            focal=float(d["focal"]),
            u=float(d["u"]),
            v=float(d["v"]),
        )


@dataclass(frozen=True)
class BoundingBox2D:
    """Axis-aligned pixel box. Width and height must be strictly positive."""

    min_x: float
    min_y: float
    max_x: float
    max_y: float

    def __post_init__(self):
        if not (self.max_x > self.min_x and self.max_y > self.min_y):
            raise DegenerateBox(
                f"box must have positive extent, got "
                f"[{self.min_x}, {self.max_x}] x [{self.min_y}, {self.max_y}]"
            )

    @property
    def width(self) -> float:
        return self.max_x - self.min_x

    @property
    def height(self) -> float:
        return self.max_y - self.min_y

    @property
    def center(self) -> tuple[float, float]:
        return (0.5 * (self.min_x + self.max_x), 0.5 * (self.min_y + self.max_y))

    @property
    def diameter(self) -> float:
        """Diagonal length sqrt(w^2 + h^2)."""
        return math.hypot(self.width, self.height)

    def to_list(self) -> list[float]:
        return [self.min_x, self.min_y, self.max_x, self.max_y]

    @classmethod
    def from_list(cls, values) -> "BoundingBox2D":
        min_x, min_y, max_x, max_y = (float(v) for v in values)
        return cls(min_x, min_y, max_x, max_y)


class EulerAngles(tuple):
    """(azimuth, elevation, theta) triple with a gimbal-lock flag.

    Unpacks as a plain 3-tuple; the flag is carried as an attribute so
    callers that do not care about the degenerate case can ignore it.
    """

    gimbal_lock: bool

    def __new__(cls, azimuth: float, elevation: float, theta: float, gimbal_lock: bool = False):
        self = super().__new__(cls, (azimuth, elevation, theta))
        self.gimbal_lock = gimbal_lock
        return self

    @property
    def azimuth(self) -> float:
        return self[0]

    @property
    def elevation(self) -> float:
        return self[1]

    @property
    def theta(self) -> float:
        return self[2]


def rotation_y(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rotation_x(e: float) -> np.ndarray:
    c, s = math.cos(e), math.sin(e)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rotation_z(t: float) -> np.ndarray:
    c, s = math.cos(t), math.sin(t)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rotation_from_angles(azimuth: float, elevation: float, theta: float) -> np.ndarray:
    """World-to-camera rotation Rz(theta) @ Rx(elevation) @ Ry(azimuth)."""
    return rotation_z(theta) @ rotation_x(elevation) @ rotation_y(azimuth)


def is_rotation(R: np.ndarray, tol: float = 1e-9) -> bool:
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        return False
    if not np.allclose(R.T @ R, np.eye(3), atol=tol):
        return False
    return abs(np.linalg.det(R) - 1.0) <= tol


def _require_rotation(R: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    R = np.asarray(R, dtype=float)
    if not is_rotation(R, tol):
        raise ValueError("expected an orthonormal rotation matrix with determinant +1")
    return R


def angles_from_rotation(R: np.ndarray) -> EulerAngles:
    """Recover (azimuth, elevation, theta) from a rotation matrix.

    The elevation branch is chosen in [-pi/2, pi/2] so cos(e) >= 0. At
    gimbal lock (|cos e| < 1e-7) azimuth and theta are inseparable; the
    theta = 0 representative is returned and the result is flagged.
    """
    R = _require_rotation(R)
    se = min(1.0, max(-1.0, R[2, 1]))
    elevation = math.asin(se)
    ce = math.sqrt(max(0.0, R[2, 0] ** 2 + R[2, 2] ** 2))
    if ce < GIMBAL_EPS:
        # Only theta + azimuth (or theta - azimuth) is determined; pick theta = 0.
        azimuth = math.atan2(R[0, 2], R[0, 0])
        return EulerAngles(wrap_azimuth(azimuth), wrap_angle(elevation), 0.0, gimbal_lock=True)
    azimuth = math.atan2(-R[2, 0], R[2, 2])
    theta = math.atan2(-R[0, 1], R[1, 1])
    return EulerAngles(wrap_azimuth(azimuth), wrap_angle(elevation), wrap_angle(theta))


def canonical_quat(q: np.ndarray) -> np.ndarray:
    """Flip sign so w >= 0; if w == 0, the first nonzero component is positive."""
    q = np.asarray(q, dtype=float)
    for component in q:
        if component > 0.0:
            return q.copy()
        if component < 0.0:
            return -q
    return q.copy()


def quat_from_rotation(R: np.ndarray) -> np.ndarray:
    """Unit quaternion (w, x, y, z) of a rotation matrix, canonical sign."""
    R = _require_rotation(R)
    # Shepperd's method: build from the largest of the four squared components.
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    if tr > max(R[0, 0], R[1, 1], R[2, 2]):
        w = 0.5 * math.sqrt(1.0 + tr)
        s = 0.25 / w
        q = np.array([w, s * (R[2, 1] - R[1, 2]), s * (R[0, 2] - R[2, 0]), s * (R[1, 0] - R[0, 1])])
    elif R[0, 0] >= max(R[1, 1], R[2, 2]):
        x = 0.5 * math.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        s = 0.25 / x
        q = np.array([s * (R[2, 1] - R[1, 2]), x, s * (R[0, 1] + R[1, 0]), s * (R[0, 2] + R[2, 0])])
    elif R[1, 1] >= R[2, 2]:
        y = 0.5 * math.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
        s = 0.25 / y
        q = np.array([s * (R[0, 2] - R[2, 0]), s * (R[0, 1] + R[1, 0]), y, s * (R[1, 2] + R[2, 1])])
    else:
        z = 0.5 * math.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
        s = 0.25 / z
        q = np.array([s * (R[1, 0] - R[0, 1]), s * (R[0, 2] + R[2, 0]), s * (R[1, 2] + R[2, 1]), z])
    q /= np.linalg.norm(q)
    return canonical_quat(q)


def rotation_from_quat(q: np.ndarray) -> np.ndarray:
    """Rotation matrix of a unit quaternion (w, x, y, z)."""
    q = np.asarray(q, dtype=float)
    if q.shape != (4,):
        raise ValueError(f"quaternion must have 4 components, got shape {q.shape}")
    n = np.linalg.norm(q)
    if abs(n - 1.0) > 1e-9:
        raise ValueError(f"quaternion must be unit norm, got |q| = {n!r}")
    w, x, y, z = q / n
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def intrinsic_matrix(focal: float, u: float, v: float) -> np.ndarray:
    """K with equal focal terms, zero skew, principal point (u, v)."""
    return np.array([[focal, 0.0, u], [0.0, focal, v], [0.0, 0.0, 1.0]])


def camera_frame_points(pose: PoseParams, points: np.ndarray) -> np.ndarray:
    """Transform world points (N, 3) to camera coordinates R @ X + (0, 0, d)."""
    points = np.asarray(points, dtype=float)
    R = rotation_from_angles(*pose.angles())
    out = points @ R.T
    out[..., 2] += pose.depth
    return out

def project_points(pose: PoseParams, points: np.ndarray, near: float = NEAR_PLANE) -> np.ndarray:
    """Project world points (N, 3) to pixels (N, 2).

    Raises BehindCamera if any point's camera-frame depth is <= near.
    """
    cam = camera_frame_points(pose, np.atleast_2d(points))
    z = cam[:, 2]
    if np.any(z <= near):
        raise BehindCamera(
            f"{int(np.sum(z <= near))} point(s) at or behind the near plane (z <= {near})"
        )
    out = np.empty((cam.shape[0], 2))
    out[:, 0] = pose.focal * cam[:, 0] / z + pose.u
    out[:, 1] = pose.focal * cam[:, 1] / z + pose.v
    return out


def project_point(pose: PoseParams, point, near: float = NEAR_PLANE) -> np.ndarray:
    """Project a single world point to a pixel (2,)."""
    return project_points(pose, np.asarray(point, dtype=float).reshape(1, 3), near)[0]


def build_projection(pose: PoseParams) -> np.ndarray:
    """3x4 perspective projection K[R|T] with T = (0, 0, depth)."""
    R = rotation_from_angles(*pose.angles())
    K = intrinsic_matrix(pose.focal, pose.u, pose.v)
    P = np.empty((3, 4))
    P[:, :3] = K @ R
    P[:, 3] = K @ np.array([0.0, 0.0, pose.depth])
    return P


def project_with_matrix(P: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Dehomogenized projection of world points (N, 3) through any 3x4 matrix."""
    P = np.asarray(P, dtype=float)
    points = np.atleast_2d(np.asarray(points, dtype=float))
    h = points @ P[:, :3].T + P[:, 3]
    return h[:, :2] / h[:, 2:3]


def fit_projection(P: np.ndarray) -> PoseParams:
    """Project an arbitrary 3x4 matrix onto the constrained K[R|(0,0,d)] family.

    RQ-factorizes the left 3x3 block, zeroes skew, averages the two focal
    terms, snaps the orthogonal factor to the nearest rotation, and moves
    the principal point so the projection of the world origin is preserved
    when the unconstrained translation has nonzero x/y components. The
    overall homogeneous scale (including sign) is recovered from the
    factorization, so the result has d > 0 whenever the input projects
    points in front of the camera.

    Raises NotInFamily when no valid pose can be produced (singular or
    mirrored input).
    """
    P = np.asarray(P, dtype=float)
    if P.shape != (3, 4):
        raise ValueError(f"projection matrix must be 3x4, got shape {P.shape}")
    if not np.all(np.isfinite(P)):
        raise NotInFamily("projection matrix has non-finite entries")
    M = P[:, :3]
    K_ut, Q = scipy.linalg.rq(M)
    signs = np.sign(np.diag(K_ut))
    signs[signs == 0] = 1.0
    D = np.diag(signs)
    K_ut = K_ut @ D
    Q = D @ Q  # D is its own inverse
    if K_ut[2, 2] <= 0 or not np.all(np.isfinite(K_ut)):
        raise NotInFamily("left 3x3 block is singular")
    det_q = np.linalg.det(Q)
    # M = scale * K * R with diag(K_ut) > 0, so Q = sign(scale) * R.
    sign = 1.0 if det_q > 0 else -1.0
    scale = sign * K_ut[2, 2]
    K = K_ut / K_ut[2, 2]
    focal = 0.5 * (K[0, 0] + K[1, 1])
    if focal <= 0:
        raise NotInFamily("non-positive focal length")
    # Nearest rotation to the orthogonal factor under the constrained K.
    A = np.linalg.inv(intrinsic_matrix(focal, K[0, 2], K[1, 2])) @ (M / scale)
    U, _, Vt = np.linalg.svd(A)
    R = U @ np.diag([1.0, 1.0, np.linalg.det(U @ Vt)]) @ Vt
    T = np.linalg.inv(K) @ P[:, 3] / scale
    d = T[2]
    if d <= 0 or not math.isfinite(d):
        raise NotInFamily(f"model depth must be positive, got {d!r}")
    # Keep the world origin's image fixed while zeroing the x/y translation.
    u = K[0, 2] + K[0, 0] * T[0] / d
    v = K[1, 2] + K[1, 1] * T[1] / d
    azimuth, elevation, theta = angles_from_rotation(R)
    return PoseParams(azimuth, elevation, theta, d, focal, u, v)


def decompose_projection(P: np.ndarray, tol: float = 1e-6) -> PoseParams:
    """Recover PoseParams from a 3x4 matrix in the constrained family.

    The matrix may carry any nonzero homogeneous scale. Raises NotInFamily
    when the residual of the constrained fit exceeds tol (relative
    Frobenius distance between scale-normalized matrices).
    """
    P = np.asarray(P, dtype=float)
    try:
        pose = fit_projection(P)
    except (NotInFamily, ValueError) as exc:
        if P.shape != (3, 4):
            raise
        raise NotInFamily(str(exc)) from exc
    fitted = build_projection(pose)
    a = P / np.linalg.norm(P)
    b = fitted / np.linalg.norm(fitted)
    residual = min(np.linalg.norm(a - b), np.linalg.norm(a + b))
    if residual > tol:
        raise NotInFamily(f"constrained fit residual {residual:.3e} exceeds {tol:.3e}")
    return pose


def encode_offset_target(pose: PoseParams, roi: BoundingBox2D) -> tuple[float, float]:
    """Principal-point offset (du, dv) from the RoI center."""
    cx, cy = roi.center
    return (pose.u - cx, pose.v - cy)


def decode_offset_target(du: float, dv: float, roi: BoundingBox2D) -> tuple[float, float]:
    """Invert encode_offset_target: recover the principal point (u, v)."""
    cx, cy = roi.center
    return (du + cx, dv + cy)


def project_bbox(pose: PoseParams, mesh, near: float = NEAR_PLANE) -> BoundingBox2D:
    """Axis-aligned box of the projected mesh vertices.

    Accepts a TriangleMesh or a plain (N, 3) vertex array. Raises
    BehindCamera if any vertex fails the projection precondition and
    DegenerateBox when the projection collapses to a point or a line.
    """
    vertices = np.asarray(getattr(mesh, "vertices", mesh), dtype=float)
    pixels = project_points(pose, vertices, near)
    return BoundingBox2D(
        float(np.min(pixels[:, 0])),
        float(np.min(pixels[:, 1])),
        float(np.max(pixels[:, 0])),
        float(np.max(pixels[:, 1])),
    )
