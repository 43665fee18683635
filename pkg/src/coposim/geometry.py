"""Coordinate conventions, mirror reflections, path lengths and directed angles.

Frame: right-handed, origin at the sensing-vehicle (SV) array center, Z along
the nominal arrival direction, X parallel to the ground, Y vertical.  Reflecting
surfaces are vertical planes, encoded by their trace z = slope*x + intercept in
the X-Z plane (Y is free).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateGeometryError

SPEED_OF_LIGHT = 299_792_458.0  # m/s


def as_xyz(p) -> np.ndarray:
    """Coerce a Point3 / sequence / array to a float array of shape (3,) or (N, 3)."""
    if isinstance(p, Point3):
        return p.as_array()
    a = np.asarray(p, dtype=float)
    if a.shape == (3,) or (a.ndim == 2 and a.shape[1] == 3):
        return a
    raise ValueError(f"expected a 3D point or an (N, 3) array, got shape {a.shape}")


@dataclass(frozen=True)
class Point3:
    """A point in meters in the SV-centered frame."""

    x: float
    y: float
    z: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x, self.y, self.z)):
            raise ValueError("point coordinates must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)

    @classmethod
    def from_array(cls, a) -> "Point3":
        a = np.asarray(a, dtype=float)
        return cls(float(a[0]), float(a[1]), float(a[2]))


@dataclass(frozen=True)
class ReflectionSurface:
    """Vertical reflecting plane {(x, y, z): z = slope*x + intercept, y free}.

    A plane vertical in X-Z (infinite slope) is stored with ``vertical=True``
    and ``intercept`` holding the constant x value, so that no tan() blow-up
    can occur downstream.  ``gamma`` is the complex reflection coefficient of
    the surface as seen by the channel simulator.
    """

    slope: float
    intercept: float
    vertical: bool = False
    gamma: complex = field(default=1.0 + 0.0j, compare=False)

    def __post_init__(self):
        if not (math.isfinite(self.slope) and math.isfinite(self.intercept)):
            raise ValueError("surface parameters must be finite")

    @classmethod
    def vertical_x(cls, x0: float, gamma: complex = 1.0 + 0.0j) -> "ReflectionSurface":
        """Plane x = x0 (trace vertical in the X-Z plane)."""
        return cls(slope=0.0, intercept=x0, vertical=True, gamma=gamma)

    def normal_form(self) -> tuple[float, float, float]:
        """Unit normal (nx, nz) and offset d of the X-Z trace, nx*x + nz*z = d."""
        if self.vertical:
            return 1.0, 0.0, self.intercept
        norm = math.hypot(self.slope, 1.0)
        return -self.slope / norm, 1.0 / norm, self.intercept / norm

    def height_at(self, x: float) -> float:
        if self.vertical:
            raise DegenerateGeometryError("surface is vertical in X-Z; z is unconstrained")
        return self.slope * x + self.intercept


def mirror_point(surface: ReflectionSurface, p) -> np.ndarray:
    """Mirror image of ``p`` across ``surface``; involution, preserves y.

    Accepts a single point or an (N, 3) array and mirrors the X-Z components
    across the surface trace.
    """
    a = as_xyz(p)
    nx, nz, d = surface.normal_form()
    single = a.ndim == 1
    pts = np.atleast_2d(a).copy()
    dist = pts[:, 0] * nx + pts[:, 2] * nz - d
    pts[:, 0] -= 2.0 * dist * nx
    pts[:, 2] -= 2.0 * dist * nz
    return pts[0] if single else pts


def path_length(surface: ReflectionSurface | None, tx, rx) -> float:
    """Propagation distance from ``tx`` to ``rx``.

    Line of sight when ``surface`` is None; otherwise the specular path via the
    surface, equal to the straight distance from the mirror image of ``tx``.
    """
    t = as_xyz(tx)
    if surface is not None:
        t = mirror_point(surface, t)
    return float(np.linalg.norm(t - as_xyz(rx)))


def path_length_matrix(surface: ReflectionSurface | None, tx_points, rx_points) -> np.ndarray:
    """Pairwise propagation distances, shape (len(tx_points), len(rx_points))."""
    t = np.atleast_2d(as_xyz(tx_points))
    r = np.atleast_2d(as_xyz(rx_points))
    if surface is not None:
        t = mirror_point(surface, t)
    return np.linalg.norm(t[:, None, :] - r[None, :, :], axis=2)


def directed_angle_xz(p, q) -> float:
    """Directed angle in (-pi, pi] from the X axis to the X-Z projection of p->q."""
    a, b = as_xyz(p), as_xyz(q)
    dx = float(b[0] - a[0])
    dz = float(b[2] - a[2])
    if dx == 0.0 and dz == 0.0:
        raise DegenerateGeometryError("points coincide in the X-Z projection; angle undefined")
    ang = math.atan2(dz, dx)
    if ang <= -math.pi:
        ang = math.pi
    return ang


def specular_point(surface: ReflectionSurface, tx, rx) -> np.ndarray:
    """Intersection of the segment mirror(tx)->rx with the surface trace.

    Used by tests to confirm that the mirror construction reproduces the
    two-segment reflected path.
    """
    t = mirror_point(surface, as_xyz(tx))
    r = as_xyz(rx)
    nx, nz, d = surface.normal_form()
    ft = t[0] * nx + t[2] * nz - d
    fr = r[0] * nx + r[2] * nz - d
    if ft == fr:
        raise DegenerateGeometryError("segment is parallel to the surface")
    lam = ft / (ft - fr)
    return t + lam * (r - t)


@dataclass(frozen=True)
class Scene:
    """Ground truth for one simulated snapshot.

    ``tv_antennas`` is the transmit point set whose recovery is the goal,
    ``anchor_indices`` the two antennas carrying the two-tone signatures.
    ``clock_offset`` is the unknown transmitter-receiver clock difference
    in seconds.
    """

    tv_antennas: np.ndarray
    anchor_indices: tuple[int, int]
    sv_antennas: np.ndarray
    surfaces: tuple[ReflectionSurface, ...]
    clock_offset: float
    has_los: bool

    def __post_init__(self):
        tv = np.asarray(self.tv_antennas, dtype=float)
        sv = np.asarray(self.sv_antennas, dtype=float)
        if tv.ndim != 2 or tv.shape[1] != 3 or tv.shape[0] < 2:
            raise ValueError("tv_antennas must be an (N_t >= 2, 3) array")
        if sv.ndim != 2 or sv.shape[1] != 3 or sv.shape[0] < 1:
            raise ValueError("sv_antennas must be an (N_r >= 1, 3) array")
        if not (np.isfinite(tv).all() and np.isfinite(sv).all()):
            raise ValueError("antenna coordinates must be finite")
        for pts, name in ((tv, "tv_antennas"), (sv, "sv_antennas")):
            if len(np.unique(pts, axis=0)) != len(pts):
                raise ValueError(f"{name} contains duplicate points")
        a, b = self.anchor_indices
        if a == b or not (0 <= a < len(tv)) or not (0 <= b < len(tv)):
            raise ValueError("anchor_indices must be two distinct tv antenna indices")
        tv.setflags(write=False)
        sv.setflags(write=False)
        object.__setattr__(self, "tv_antennas", tv)
        object.__setattr__(self, "sv_antennas", sv)
        object.__setattr__(self, "surfaces", tuple(self.surfaces))

    @property
    def n_tv(self) -> int:
        return self.tv_antennas.shape[0]

    @property
    def n_sv(self) -> int:
        return self.sv_antennas.shape[0]

    @property
    def anchor_a(self) -> np.ndarray:
        return self.tv_antennas[self.anchor_indices[0]]

    @property
    def anchor_b(self) -> np.ndarray:
        return self.tv_antennas[self.anchor_indices[1]]

    def path_surfaces(self) -> list[tuple[int, ReflectionSurface | None]]:
        """Propagation paths as (path_id, surface) with id 0 reserved for LoS."""
        paths: list[tuple[int, ReflectionSurface | None]] = []
        if self.has_los:
            paths.append((0, None))
        paths.extend((i + 1, s) for i, s in enumerate(self.surfaces))
        return paths
