"""6-DoF poses as translation + unit quaternion.

Conventions
-----------
- Quaternions are ordered ``(w, x, y, z)``.
- The canonical representative of ``{q, -q}`` has ``w >= 0``; when ``w == 0``
  the first nonzero component is made positive.
- Pose matrices are 4x4 homogeneous camera-to-world transforms, row-major,
  translation in meters.
"""

from dataclasses import dataclass

import numpy as np

ORTHO_TOL = 1e-6


class DegenerateOrientation(ValueError):
    pass


def normalize_quaternion(q):
    q = np.asarray(q, dtype=np.float64)
    n = np.linalg.norm(q)
    if not np.isfinite(n) or n == 0.0:
        raise DegenerateOrientation("degenerate orientation: zero quaternion")
    return q / n


def canonical_quaternion(q):
    q = np.asarray(q, dtype=np.float64)
    nz = np.flatnonzero(q)
    if nz.size and q[nz[0]] < 0:
        return -q
    return q.copy()


@dataclass(frozen=True)
class Pose7:
    translation: np.ndarray
    quaternion: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        q = np.asarray(self.quaternion, dtype=np.float64).reshape(4)
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "quaternion", q)

    @classmethod
    def identity(cls):
        return cls(np.zeros(3), np.array([1.0, 0.0, 0.0, 0.0]))

    def canonicalize(self):
        return Pose7(self.translation, canonical_quaternion(normalize_quaternion(self.quaternion)))

    def __eq__(self, other):
        if not isinstance(other, Pose7):
            return NotImplemented
        return bool(np.array_equal(self.translation, other.translation)
                    and np.array_equal(self.quaternion, other.quaternion))

    __hash__ = None


def pack(pose):
    return np.concatenate([pose.translation, pose.quaternion])


def unpack(y):
    """Split a raw 7-vector into a canonical ``Pose7``, normalizing the quaternion."""
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (7,):
        raise ValueError(f"pose vector must have length 7, got shape {y.shape}")
    q = canonical_quaternion(normalize_quaternion(y[3:]))
    return Pose7(y[:3].copy(), q)


def pack_many(poses):
    return np.stack([pack(p) for p in poses]) if poses else np.zeros((0, 7))


def unpack_many(ys):
    return [unpack(y) for y in np.asarray(ys, dtype=np.float64).reshape(-1, 7)]


def translation_error(a, b):
    return float(np.linalg.norm(a.translation - b.translation))


def rotation_error_deg(a, b):
    qa = normalize_quaternion(a.quaternion)
    qb = normalize_quaternion(b.quaternion)
    if np.dot(qa, qb) < 0:
        qb = -qb
    # atan2 form: exact 0 for q vs -q and well conditioned near 0 and 180 degrees.
    return float(np.degrees(4.0 * np.arctan2(np.linalg.norm(qa - qb), np.linalg.norm(qa + qb))))


def quaternion_to_rotation(q):
    w, x, y, z = normalize_quaternion(q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def check_rotation(r, tol=ORTHO_TOL):
    r = np.asarray(r, dtype=np.float64)
    if r.shape != (3, 3) or not np.all(np.isfinite(r)):
        raise ValueError("rotation block must be a finite 3x3 matrix")
    err = np.max(np.abs(r.T @ r - np.eye(3)))
    if err > tol:
        raise ValueError(f"rotation block is not orthonormal (max |R^T R - I| = {err:.3g})")
    det = np.linalg.det(r)
    if abs(det - 1.0) > tol:
        raise ValueError(f"rotation block has determinant {det:.6g}, expected +1")


def rotation_to_quaternion(r, tol=ORTHO_TOL):
    """Shepperd's method: branch on the largest of trace and diagonal terms."""
    r = np.asarray(r, dtype=np.float64)
    check_rotation(r, tol)
    tr = np.trace(r)
    d = np.diag(r)
    k = int(np.argmax([tr, d[0], d[1], d[2]]))
    if k == 0:
        s = 2.0 * np.sqrt(1.0 + tr)
        q = [0.25 * s, (r[2, 1] - r[1, 2]) / s, (r[0, 2] - r[2, 0]) / s, (r[1, 0] - r[0, 1]) / s]
    elif k == 1:
        s = 2.0 * np.sqrt(1.0 + d[0] - d[1] - d[2])
        q = [(r[2, 1] - r[1, 2]) / s, 0.25 * s, (r[0, 1] + r[1, 0]) / s, (r[0, 2] + r[2, 0]) / s]
    elif k == 2:
        s = 2.0 * np.sqrt(1.0 + d[1] - d[0] - d[2])
        q = [(r[0, 2] - r[2, 0]) / s, (r[0, 1] + r[1, 0]) / s, 0.25 * s, (r[1, 2] + r[2, 1]) / s]
    else:
        s = 2.0 * np.sqrt(1.0 + d[2] - d[0] - d[1])
        q = [(r[1, 0] - r[0, 1]) / s, (r[0, 2] + r[2, 0]) / s, (r[1, 2] + r[2, 1]) / s, 0.25 * s]
    return canonical_quaternion(normalize_quaternion(q))


def check_pose_matrix(m, tol=ORTHO_TOL):
    m = np.asarray(m, dtype=np.float64)
    if m.shape != (4, 4):
        raise ValueError(f"pose matrix must be 4x4, got {m.shape}")
    if np.max(np.abs(m[3] - [0.0, 0.0, 0.0, 1.0])) > tol:
        raise ValueError(f"pose matrix bottom row must be (0, 0, 0, 1), got {m[3].tolist()}")
    check_rotation(m[:3, :3], tol)
    return m


def matrix_to_pose(m, tol=ORTHO_TOL):
    m = check_pose_matrix(m, tol)
    return Pose7(m[:3, 3].copy(), rotation_to_quaternion(m[:3, :3], tol))


def pose_to_matrix(pose):
    m = np.eye(4)
    m[:3, :3] = quaternion_to_rotation(pose.quaternion)
    m[:3, 3] = pose.translation
    return m


def quaternion_from_euler(roll, pitch, yaw):
    """Quaternion for intrinsic Z-Y-X (yaw, pitch, roll) angles in radians."""
    cr, sr = np.cos(roll / 2), np.sin(roll / 2)
    cp, sp = np.cos(pitch / 2), np.sin(pitch / 2)
    cy, sy = np.cos(yaw / 2), np.sin(yaw / 2)
    return np.array([
        cr * cp * cy + sr * sp * sy,
        sr * cp * cy - cr * sp * sy,
        cr * sp * cy + sr * cp * sy,
        cr * cp * sy - sr * sp * cy,
    ])
