"""Fusing per-path virtual detections into the actual transmit-antenna cloud.

Each specular path produces a mirror image ("virtual TV") of the transmitter.
For vertical reflecting surfaces the displacement from a virtual point to its
actual counterpart is a ray in the X-Z plane at a path angle theta_l, and the
path angles are locked together by the measured orientations of the virtual
anchor baselines: theta_i - theta_j = (phi_i - phi_j) / 2.  A 1D search over
the reference angle makes all back-projection rays meet at the actual anchor;
the meeting point then fixes each reflecting surface (the perpendicular
bisector plane), and mirroring each virtual cloud across its surface recovers
the actual cloud.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .errors import DegenerateGeometryError, FeasibilityError, ParallelRaysError
from .geometry import ReflectionSurface, as_xyz, mirror_point

_PARALLEL_TOL = 1e-12


@dataclass(frozen=True)
class VirtualDetection:
    """One path's sync and imaging output.

    ``baseline_angle`` is the directed X-Z angle of the virtual a->b anchor
    segment.  ``cloud`` may be empty for paths whose imaging failed; such
    detections still constrain the angle search but contribute no points.
    """

    path_id: int
    x_a_virtual: np.ndarray
    x_b_virtual: np.ndarray
    cloud: np.ndarray
    sigma_hat: float
    baseline_angle: float

    def __post_init__(self):
        if not -math.pi < self.baseline_angle <= math.pi:
            raise ValueError("baseline_angle must lie in (-pi, pi]")
        object.__setattr__(self, "x_a_virtual", as_xyz(self.x_a_virtual))
        object.__setattr__(self, "x_b_virtual", as_xyz(self.x_b_virtual))
        cloud = np.asarray(self.cloud, dtype=float).reshape(-1, 3)
        object.__setattr__(self, "cloud", cloud)


@dataclass(frozen=True)
class CombineResult:
    """Fusion output; ``surfaces`` aligns with ``path_ids`` (None marks a direct path)."""

    theta_ref: float
    x_a_star: np.ndarray
    x_b_star: np.ndarray
    path_ids: tuple[int, ...]
    thetas: tuple[float, ...]
    surfaces: tuple[ReflectionSurface | None, ...]
    actual_cloud: np.ndarray


def group_by_clock(detections: list[VirtualDetection], tolerance: float) -> list[list[VirtualDetection]]:
    """Single-linkage clusters of detections by clock estimate.

    Paths bounced off different transmitters carry different clock offsets, so
    clusters separate transmitters without any position knowledge.
    """
    if not detections:
        return []
    order = sorted(detections, key=lambda d: (d.sigma_hat, d.path_id))
    clusters = [[order[0]]]
    for det in order[1:]:
        if det.sigma_hat - clusters[-1][-1].sigma_hat <= tolerance:
            clusters[-1].append(det)
        else:
            clusters.append([det])
    return clusters


def _ray_angle(det_ref: VirtualDetection, det: VirtualDetection, theta_ref: float) -> float:
    return theta_ref + 0.5 * (det.baseline_angle - det_ref.baseline_angle)


def _intersect_rays(p_i, theta_i: float, p_j, theta_j: float) -> np.ndarray:
    """Meet of two X-Z lines through p_i, p_j at the given angles; y is averaged.

    Directions are handled parametrically so vertical rays need no special
    casing; only genuinely parallel lines are rejected.
    """
    det = math.sin(theta_j - theta_i)
    if abs(det) < _PARALLEL_TOL:
        raise ParallelRaysError("back-projection rays are parallel")
    ci, si = math.cos(theta_i), math.sin(theta_i)
    cj, sj = math.cos(theta_j), math.sin(theta_j)
    rx = p_j[0] - p_i[0]
    rz = p_j[2] - p_i[2]
    # Solve p_i + t*(ci,si) = p_j + s*(cj,sj) in (x, z).
    t = (rx * sj - rz * cj) / det
    x = p_i[0] + t * ci
    z = p_i[2] + t * si
    y = 0.5 * (p_i[1] + p_j[1])
    return np.array([x, y, z])


def candidate_anchor(det_ref: VirtualDetection, det: VirtualDetection,
                     theta_ref: float) -> tuple[np.ndarray, np.ndarray]:
    """Anchor candidates from one detection pair at a hypothesised reference angle."""
    theta = _ray_angle(det_ref, det, theta_ref)
    xa = _intersect_rays(det_ref.x_a_virtual, theta_ref, det.x_a_virtual, theta)
    xb = _intersect_rays(det_ref.x_b_virtual, theta_ref, det.x_b_virtual, theta)
    return xa, xb


def _candidates(cluster: list[VirtualDetection], theta_ref: float):
    """Anchor candidates from every detection pair at the hypothesised angle.

    The pair relation holds for any two paths, so all C(L, 2) pairs are used
    rather than only those containing the reference path: with noisy inputs a
    spurious angle is unlikely to cluster every pairwise intersection at once.
    Near-parallel pairs are skipped; at least one pair must survive.
    """
    ref = cluster[0]
    thetas = [_ray_angle(ref, det, theta_ref) for det in cluster]
    cas, cbs = [], []
    for i in range(len(cluster)):
        for j in range(i + 1, len(cluster)):
            try:
                xa = _intersect_rays(cluster[i].x_a_virtual, thetas[i],
                                     cluster[j].x_a_virtual, thetas[j])
                xb = _intersect_rays(cluster[i].x_b_virtual, thetas[i],
                                     cluster[j].x_b_virtual, thetas[j])
            except ParallelRaysError:
                continue
            cas.append(xa)
            cbs.append(xb)
    if not cas:
        raise ParallelRaysError("every detection pair is parallel at this angle")
    return np.array(cas), np.array(cbs)


def _scatter_objective(cluster: list[VirtualDetection], theta_ref: float) -> float:
    """Mean pairwise spread of the anchor candidates; zero iff they coincide.

    Angles that lose candidates to parallel pairs are not rewarded: the spread
    is averaged per surviving term and needs at least two candidates.
    """
    try:
        cas, cbs = _candidates(cluster, theta_ref)
    except ParallelRaysError:
        return math.inf
    n = len(cas)
    if n < 2:
        return math.inf
    total = 0.0
    terms = 0
    for i in range(n):
        for j in range(i + 1, n):
            total += float(np.linalg.norm(cas[i] - cas[j]))
            total += float(np.linalg.norm(cbs[i] - cbs[j]))
            terms += 1
    return total / terms


def _golden_refine(fun, lo: float, hi: float, tol: float) -> float:
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc, fd = fun(c), fun(d)
    while (b - a) > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = fun(d)
    return 0.5 * (a + b)


def search_theta_ref(cluster: list[VirtualDetection], grid_step: float = 1e-3,
                     refine_tol: float = 1e-6) -> tuple[float, np.ndarray, np.ndarray]:
    """1D search for the reference path angle minimising candidate scatter.

    Line angles are periodic in pi, so the grid covers (-pi/2, pi/2]; the best
    grid cell is refined by golden section to ``refine_tol``.  Returns the
    angle and the candidate means for the two anchors.
    """
    if len(cluster) < 3:
        raise FeasibilityError(
            f"combining needs at least 3 paths from the same transmitter, got {len(cluster)}"
        )
    grid = np.arange(-math.pi / 2 + grid_step, math.pi / 2 + 0.5 * grid_step, grid_step)
    values = np.array([_scatter_objective(cluster, t) for t in grid])
    if not np.isfinite(values).any():
        raise DegenerateGeometryError("every ray pair is parallel; geometry degenerate")
    best = int(np.argmin(values))
    theta = _golden_refine(lambda t: _scatter_objective(cluster, t),
                           grid[best] - grid_step, grid[best] + grid_step, refine_tol)
    if not math.isfinite(_scatter_objective(cluster, theta)):
        theta = float(grid[best])
    cas, cbs = _candidates(cluster, theta)
    return theta, cas.mean(axis=0), cbs.mean(axis=0)


def estimate_surface(x_a_star, x_a_virtual, theta: float) -> ReflectionSurface:
    """Reflecting surface as the perpendicular bisector of actual/virtual anchors.

    The surface trace passes through the anchor midpoint with slope
    -1/tan(theta); a horizontal ray (theta = 0) yields the vertical-in-X-Z
    variant x = const instead of an infinite slope.
    """
    a = as_xyz(x_a_star)
    v = as_xyz(x_a_virtual)
    mid_x = 0.5 * (a[0] + v[0])
    mid_z = 0.5 * (a[2] + v[2])
    s, c = math.sin(theta), math.cos(theta)
    if abs(s) < 1e-12:
        return ReflectionSurface.vertical_x(mid_x)
    slope = -c / s
    return ReflectionSurface(slope=slope, intercept=mid_z - slope * mid_x)


def map_virtual_to_actual(cloud, theta: float, x_a_star, x_a_virtual) -> np.ndarray:
    """Mirror a virtual cloud across the surface implied by the anchor pair.

    This is the pointwise recovery map: y is preserved and the map is an
    involution, because it is exactly the specular reflection across the
    estimated surface.
    """
    pts = np.asarray(cloud, dtype=float).reshape(-1, 3)
    if len(pts) == 0:
        return pts
    surface = estimate_surface(x_a_star, x_a_virtual, theta)
    return mirror_point(surface, pts)


def fuse_clouds(clouds: list[np.ndarray], merge_radius: float) -> np.ndarray:
    """Union of mapped clouds with agglomeration of near-duplicate points.

    Points closer than ``merge_radius`` (transitively) collapse to their
    centroid, so perfectly overlapping per-path detections merge while distinct
    antennas survive.
    """
    stacked = [np.asarray(c, dtype=float).reshape(-1, 3) for c in clouds]
    pts = np.concatenate([c for c in stacked if len(c)], axis=0) if any(len(c) for c in stacked) else None
    if pts is None or len(pts) == 0:
        raise ValueError("no points to fuse")
    if merge_radius <= 0:
        return pts.copy()
    pairs = cKDTree(pts).query_pairs(merge_radius, output_type="ndarray")
    if len(pairs) == 0:
        return pts.copy()
    n = len(pts)
    adj = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    n_comp, labels = connected_components(adj, directed=False)
    fused = np.zeros((n_comp, 3))
    counts = np.bincount(labels, minlength=n_comp).astype(float)
    for dim in range(3):
        fused[:, dim] = np.bincount(labels, weights=pts[:, dim], minlength=n_comp) / counts
    first_index = np.full(n_comp, n, dtype=int)
    for i, lab in enumerate(labels):
        first_index[lab] = min(first_index[lab], i)
    return fused[np.argsort(first_index, kind="stable")]


def combine_cluster(cluster: list[VirtualDetection], merge_radius: float,
                    grid_step: float = 1e-3, refine_tol: float = 1e-6,
                    direct_path_tol: float = 1e-3) -> CombineResult:
    """Full fusion of one same-clock cluster of virtual detections.

    Detections whose virtual anchor already coincides with the fused anchor
    (within ``direct_path_tol``) are direct-view paths: their clouds are taken
    as-is, since the perpendicular-bisector surface degenerates there.
    """
    theta_ref, x_a_star, x_b_star = search_theta_ref(cluster, grid_step, refine_tol)
    ref = cluster[0]
    thetas, surfaces, mapped, ids = [], [], [], []
    for det in cluster:
        theta = _ray_angle(ref, det, theta_ref)
        thetas.append(theta)
        ids.append(det.path_id)
        if float(np.linalg.norm(det.x_a_virtual - x_a_star)) <= direct_path_tol:
            surfaces.append(None)
            mapped.append(det.cloud.copy())
            continue
        surfaces.append(estimate_surface(x_a_star, det.x_a_virtual, theta))
        mapped.append(map_virtual_to_actual(det.cloud, theta, x_a_star, det.x_a_virtual))
    cloud = fuse_clouds([m for m in mapped if len(m)], merge_radius) \
        if any(len(m) for m in mapped) else np.empty((0, 3))
    return CombineResult(theta_ref=theta_ref, x_a_star=x_a_star, x_b_star=x_b_star,
                         path_ids=tuple(ids), thetas=tuple(thetas),
                         surfaces=tuple(surfaces), actual_cloud=cloud)
