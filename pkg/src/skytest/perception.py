"""Marker pose recovery and temporal filtering.

``estimate_pose`` solves the single-marker planar PnP problem: a four-point
DLT homography gives the initial pose, then Gauss-Newton on the eight
reprojection residuals refines translation and rotation vector.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .geom import Pose3, Vec3, quat_from_matrix, quat_from_rotvec, quat_to_rotvec, slerp
from .sensors import CameraIntrinsics, MarkerObservation, marker_corners_local, undistort_pixel

MAX_ITERATIONS = 50
STEP_TOLERANCE = 1e-10
COST_RTOL = 1e-10
MAX_HALVINGS = 20
MAX_RMS_PX = 5.0
MIN_QUAD_AREA = 1.0


class PerceptionError(Exception):
    pass


class DegenerateCorners(PerceptionError):
    pass


class NoConvergence(PerceptionError):
    pass


class MarkerPoseEstimate(NamedTuple):
    pose: Pose3  # marker in camera frame
    rms: float
    timestamp: float
    iterations: int = 0


def quad_area(corners) -> float:
    a = 0.0
    for i in range(4):
        x0, y0 = corners[i]
        x1, y1 = corners[(i + 1) % 4]
        a += x0 * y1 - x1 * y0
    return abs(0.5 * a)


def _skew(v) -> np.ndarray:
    return np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])


def _rodrigues_coeffs(w):
    """(a, b, c) with R = I + aK + bK^2 and J_l = I + bK + cK^2, K = [w]x."""
    t2 = w[0] * w[0] + w[1] * w[1] + w[2] * w[2]
    if t2 < 1e-12:
        return 1.0 - t2 / 6.0, 0.5 - t2 / 24.0, 1.0 / 6.0 - t2 / 120.0
    t = math.sqrt(t2)
    s, c = math.sin(t), math.cos(t)
    return s / t, (1.0 - c) / t2, (t - s) / (t2 * t)


def _mat_py(w, p: float, q: float) -> list:
    """I + pK + qK^2 as nested lists, using K^2 = w w^T - |w|^2 I."""
    x, y, z = w[0], w[1], w[2]
    t2 = x * x + y * y + z * z
    return [
        [1.0 + q * (x * x - t2), -p * z + q * x * y, p * y + q * x * z],
        [p * z + q * x * y, 1.0 + q * (y * y - t2), -p * x + q * y * z],
        [-p * y + q * x * z, p * x + q * y * z, 1.0 + q * (z * z - t2)],
    ]


def rotvec_to_matrix(w) -> np.ndarray:
    a, b, _ = _rodrigues_coeffs(w)
    return np.array(_mat_py(w, a, b))


def left_jacobian(w) -> np.ndarray:
    _, b, c = _rodrigues_coeffs(w)
    return np.array(_mat_py(w, b, c))


def _object_points(side: float) -> np.ndarray:
    return np.array([[x, y, 0.0] for x, y in marker_corners_local(side)])


def _project_py(params, obj):
    """Camera-frame points R X + t and the rotated points R X (plain floats)."""
    w = (float(params[3]), float(params[4]), float(params[5]))
    a, b, _ = _rodrigues_coeffs(w)
    R = _mat_py(w, a, b)
    t0, t1, t2 = float(params[0]), float(params[1]), float(params[2])
    rx, pts = [], []
    for X in obj:
        X0, X1, X2 = float(X[0]), float(X[1]), float(X[2])
        r = (
            R[0][0] * X0 + R[0][1] * X1 + R[0][2] * X2,
            R[1][0] * X0 + R[1][1] * X1 + R[1][2] * X2,
            R[2][0] * X0 + R[2][1] * X1 + R[2][2] * X2,
        )
        rx.append(r)
        pts.append((r[0] + t0, r[1] + t1, r[2] + t2))
    return w, rx, pts


def _residuals_py(params, obj, img, fx, fy, cx, cy) -> list:
    _, _, pts = _project_py(params, obj)
    out = []
    for (X, Y, Z), (u, v) in zip(pts, img):
        out.append(fx * X / Z + cx - u)
        out.append(fy * Y / Z + cy - v)
    return out


def reprojection_residuals(params, obj: np.ndarray, img: np.ndarray, intr: CameraIntrinsics) -> np.ndarray:
    """Stacked ``(u_proj - u_obs, v_proj - v_obs)`` in ideal pixel coordinates."""
    img = np.asarray(img, dtype=float).tolist()
    return np.array(_residuals_py(params, obj, img, intr.fx, intr.fy, intr.cx, intr.cy))


def _jacobian_py(params, obj, fx, fy) -> list:
    w, rx, pts = _project_py(params, obj)
    _, b, c = _rodrigues_coeffs(w)
    Jl = _mat_py(w, b, c)
    cols = [(Jl[0][j], Jl[1][j], Jl[2][j]) for j in range(3)]
    rows = []
    for (ax, ay, az), (X, Y, Z) in zip(rx, pts):
        iz = 1.0 / Z
        du = (fx * iz, 0.0, -fx * X * iz * iz)
        dv = (0.0, fy * iz, -fy * Y * iz * iz)
        # dP/dw column j = -(RX x Jl[:, j])
        dP = [
            (-(ay * cz - az * cy), -(az * cx - ax * cz), -(ax * cy - ay * cx))
            for cx, cy, cz in cols
        ]
        rows.append(list(du) + [du[0] * d[0] + du[2] * d[2] for d in dP])
        rows.append(list(dv) + [dv[1] * d[1] + dv[2] * d[2] for d in dP])
    return rows


def reprojection_jacobian(params, obj: np.ndarray, intr: CameraIntrinsics) -> np.ndarray:
    """d residuals / d (t, rotvec), shape (2n, 6)."""
    return np.array(_jacobian_py(params, obj, intr.fx, intr.fy))


def _rms(res: np.ndarray) -> float:
    return math.sqrt(float(res @ res) / (res.size // 2))


def homography_dlt(obj_xy: np.ndarray, img_n: np.ndarray) -> np.ndarray:
    """Homography mapping plane points to normalized image points."""
    rows = []
    for (X, Y), (x, y) in zip(obj_xy, img_n):
        rows.append([X, Y, 1.0, 0.0, 0.0, 0.0, -x * X, -x * Y, -x])
        rows.append([0.0, 0.0, 0.0, X, Y, 1.0, -y * X, -y * Y, -y])
    _, _, vt = np.linalg.svd(np.asarray(rows))
    return vt[-1].reshape(3, 3)


def _nearest_rotation(M: np.ndarray) -> np.ndarray:
    U, _, Vt = np.linalg.svd(M)
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(U @ Vt))])
    return U @ D @ Vt


def initial_pose(obj: np.ndarray, img: np.ndarray, intr: CameraIntrinsics) -> np.ndarray:
    """Homography decomposition; returns params (t, rotvec).

    Both homography signs are tried. A candidate must put every corner in
    front of the camera; ties go to the lower reprojection RMS.
    """
    half = 0.5 * float(np.max(np.abs(obj[:, :2])))
    s = 1.0 / half
    img_n = np.column_stack(((img[:, 0] - intr.cx) / intr.fx, (img[:, 1] - intr.cy) / intr.fy))
    Hn = homography_dlt(obj[:, :2] * s, img_n)
    H = Hn @ np.diag([s, s, 1.0])
    h1, h2, h3 = H[:, 0], H[:, 1], H[:, 2]
    lam = 2.0 / (np.linalg.norm(h1) + np.linalg.norm(h2))
    best = None
    for sign in (1.0, -1.0):
        r1 = sign * lam * h1
        r2 = sign * lam * h2
        R = _nearest_rotation(np.column_stack((r1, r2, np.cross(r1, r2))))
        t = sign * lam * h3
        depths = (obj @ R.T + t)[:, 2]
        if np.any(depths <= 0.0):
            continue
        q = quat_from_matrix(R.tolist())
        params = np.concatenate((t, np.array(quat_to_rotvec(q))))
        rms = _rms(reprojection_residuals(params, obj, img, intr))
        if best is None or rms < best[0]:
            best = (rms, params)
    if best is None:
        raise DegenerateCorners("no homography decomposition with positive depth")
    return best[1]


def refine_pose(params: np.ndarray, obj: np.ndarray, img: np.ndarray, intr: CameraIntrinsics):
    """Gauss-Newton with step halving; returns (params, residuals, iterations).

    Near-frontal views of a planar target leave the tilt poorly constrained, so
    a full step can overshoot; it is halved until the cost does not increase.
    """
    fx, fy, cx, cy = intr.fx, intr.fy, intr.cx, intr.cy
    objl = np.asarray(obj, dtype=float).tolist()
    imgl = np.asarray(img, dtype=float).tolist()
    x = np.array(params, dtype=float)
    res = np.array(_residuals_py(x, objl, imgl, fx, fy, cx, cy))
    cost = float(res @ res)
    it = 0
    while it < MAX_ITERATIONS:
        it += 1
        J = np.array(_jacobian_py(x, objl, fx, fy))
        try:
            delta = np.linalg.solve(J.T @ J, -(J.T @ res))
        except np.linalg.LinAlgError:
            delta = np.linalg.lstsq(J, -res, rcond=None)[0]
        for _ in range(MAX_HALVINGS):
            x_new = x + delta
            res_new = np.array(_residuals_py(x_new, objl, imgl, fx, fy, cx, cy))
            cost_new = float(res_new @ res_new)
            if cost_new <= cost or not math.isfinite(cost):
                break
            delta = 0.5 * delta
        else:
            break
        prev = cost
        x, res, cost = x_new, res_new, cost_new
        if float(np.linalg.norm(delta)) < STEP_TOLERANCE:
            break
        # Noisy corners leave a nonzero residual and only linear convergence;
        # stop once the cost no longer drops meaningfully.
        if prev > 0.0 and prev - cost <= COST_RTOL * prev:
            break
    return x, res, it


def estimate_pose(obs: MarkerObservation, intr: CameraIntrinsics, side: float) -> MarkerPoseEstimate:
    if len(obs.corners) != 4:
        raise DegenerateCorners("need exactly four corners")
    if quad_area(obs.corners) <= MIN_QUAD_AREA:
        raise DegenerateCorners("corner quad area <= %g px^2" % MIN_QUAD_AREA)
    img = np.array([undistort_pixel(intr, u, v) for u, v in obs.corners])
    obj = _object_points(side)
    x0 = initial_pose(obj, img, intr)
    x, res, it = refine_pose(x0, obj, img, intr)
    if not np.all(np.isfinite(x)):
        raise NoConvergence("Gauss-Newton diverged")
    rms = _rms(res)
    if rms > MAX_RMS_PX:
        raise NoConvergence(f"reprojection RMS {rms:.3f} px after {it} iterations")
    if x[2] <= 0.0:
        raise NoConvergence("refined marker behind camera")
    pose = Pose3(Vec3(float(x[0]), float(x[1]), float(x[2])), quat_from_rotvec(x[3:].tolist()))
    return MarkerPoseEstimate(pose, rms, obs.timestamp, it)


class TrackStatus(str, enum.Enum):
    TRACKING = "Tracking"
    COASTING = "Coasting"
    LOST = "Lost"


@dataclass(frozen=True)
class FilterConfig:
    alpha: float = 0.3
    coast_timeout: float = 0.5
    lost_timeout: float = 2.0

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must be in (0, 1]")
        if not 0.0 < self.coast_timeout <= self.lost_timeout:
            raise ValueError("need 0 < coast_timeout <= lost_timeout")


RAW_FILTER = FilterConfig(alpha=1.0, coast_timeout=0.1, lost_timeout=0.5)

_EPS_T = 1e-9


class FilteredMarkerState(NamedTuple):
    pose: Optional[Pose3] = None
    last_seen: Optional[float] = None
    status: TrackStatus = TrackStatus.LOST
    updates: int = 0


def status_at(state: FilteredMarkerState, now: float, cfg: FilterConfig = FilterConfig()) -> TrackStatus:
    if state.last_seen is None:
        return TrackStatus.LOST
    gap = now - state.last_seen
    if gap >= cfg.lost_timeout - _EPS_T:
        return TrackStatus.LOST
    if gap >= cfg.coast_timeout - _EPS_T:
        return TrackStatus.COASTING
    return TrackStatus.TRACKING


def filter_update(
    state: FilteredMarkerState,
    est: Optional[MarkerPoseEstimate],
    now: float,
    cfg: FilterConfig = FilterConfig(),
) -> FilteredMarkerState:
    if est is None:
        return state._replace(status=status_at(state, now, cfg))
    new = est.pose
    if state.pose is None:
        pose = new
    else:
        a = cfg.alpha
        p = state.pose.position
        q = new.position
        pos = Vec3(
            (1.0 - a) * p.x + a * q.x,
            (1.0 - a) * p.y + a * q.y,
            (1.0 - a) * p.z + a * q.z,
        )
        pose = Pose3(pos, slerp(state.pose.orientation, new.orientation, a))
    return FilteredMarkerState(pose, now, TrackStatus.TRACKING, state.updates + 1)
