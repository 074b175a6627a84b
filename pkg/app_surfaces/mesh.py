"""
Triangulated model of the two-sheeted cover and quadrature against mu.

The working x-plane region |x| <= R_OUT is triangulated once with holes of
radius r_i = d_i / 3 around each branch point (d_i the distance to the
nearest other branch point) and lifted to both sheets by continuing y along
triangle edges. Each hole is closed by one cap in the chart x = alpha_i + t^2
and the outside of |x| = R_OUT by two caps in the chart u = 1/x, one per
sheet. Every triangle carries its chart coordinates so stiffness and mass are
assembled in a chart where mu has a smooth density.
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
from scipy.spatial import Delaunay, cKDTree

from . import periods
from .exceptions import ResolutionTooLowError, SingularValueError

logger = logging.getLogger(__name__)

R_OUT = 2.0
CHART_PLANE = 0
CHART_INFINITY = 1
CHART_BRANCH = 2  # branch point i uses chart id CHART_BRANCH + i
THINNING_FACTOR = 0.6
CUT_CLEARANCE = 0.1
THINNING_BATCH = 2000

# Degree-4 six-point rule on the reference triangle: (barycentric, weight).
_DUNAVANT = [
    ((0.108103018168070, 0.445948490915965, 0.445948490915965), 0.223381589678011),
    ((0.445948490915965, 0.108103018168070, 0.445948490915965), 0.223381589678011),
    ((0.445948490915965, 0.445948490915965, 0.108103018168070), 0.223381589678011),
    ((0.816847572980459, 0.091576213509771, 0.091576213509771), 0.109951743655322),
    ((0.091576213509771, 0.816847572980459, 0.091576213509771), 0.109951743655322),
    ((0.091576213509771, 0.091576213509771, 0.816847572980459), 0.109951743655322),
]
QUAD_BARY = np.array([b for b, _ in _DUNAVANT])
QUAD_WEIGHTS = np.array([w for _, w in _DUNAVANT])


@dataclass
class SurfaceMesh:
    """
    Closed triangulated surface with per-vertex mu weights.

    Vertex ``v`` lies over working coordinate ``x[v]`` (complex infinity for
    the two points over x = infinity) on sheet ``sheet[v]``; ``coord[v]`` is
    its coordinate in its own chart ``chart[v]``. ``tri_coords[f]`` holds the
    three corner coordinates of triangle f in chart ``tri_chart[f]``.
    """
    x: np.ndarray
    sheet: np.ndarray
    chart: np.ndarray
    coord: np.ndarray
    triangles: np.ndarray
    tri_chart: np.ndarray
    tri_coords: np.ndarray
    mu_weights: np.ndarray
    vertex_density: np.ndarray
    marked_points: dict
    raw_mass: float
    resolution: int
    ring_points: int
    branch_radii: np.ndarray
    genus: int
    parameters: dict = field(default_factory=dict)

    @property
    def n_vertices(self) -> int:
        return len(self.x)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def tri_areas(self) -> np.ndarray:
        c = self.tri_coords
        return 0.5 * np.imag(np.conj(c[:, 1] - c[:, 0]) * (c[:, 2] - c[:, 0]))

    def edges(self) -> np.ndarray:
        e = np.concatenate([self.triangles[:, [0, 1]], self.triangles[:, [1, 2]], self.triangles[:, [2, 0]]])
        return np.unique(np.sort(e, axis=1), axis=0)


# point generation

def _hex_lattice(radius: float, spacing: float) -> np.ndarray:
    """Hexagonal lattice points with |z| < radius, containing z = 0."""
    row = spacing * np.sqrt(3) / 2
    n_rows = int(np.ceil(radius / row))
    n_cols = int(np.ceil(radius / spacing)) + 1
    points = []
    for j in range(-n_rows, n_rows + 1):
        offset = 0.5 * spacing * (j % 2)
        xs = offset + spacing * np.arange(-n_cols, n_cols + 1)
        points.append(xs + 1j * j * row)
    points = np.concatenate(points)
    return points[np.abs(points) < radius]


def _circle(n: int, radius: float, centre: complex = 0j, offset: float = 0.0) -> np.ndarray:
    return centre + radius * np.exp(2j * np.pi * (np.arange(n) + offset) / n)


def _nearest_distance(points: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    return np.min(np.abs(points[:, None] - alpha[None, :]), axis=1)


def _thin(points: np.ndarray, sizes: np.ndarray, n_protected: int) -> np.ndarray:
    """
    Greedy spacing filter: keep a point only if no kept point lies within
    THINNING_FACTOR times its local size. The first ``n_protected`` points
    are always kept. Returns indices into ``points``.
    """
    kept = list(range(n_protected))
    tree = cKDTree(np.column_stack([points[:n_protected].real, points[:n_protected].imag]))
    for start in range(n_protected, len(points), THINNING_BATCH):
        batch = np.arange(start, min(start + THINNING_BATCH, len(points)))
        xy = np.column_stack([points[batch].real, points[batch].imag])
        dist, _ = tree.query(xy)
        batch = batch[dist >= THINNING_FACTOR * sizes[batch]]
        if len(batch) == 0:
            continue
        xy = np.column_stack([points[batch].real, points[batch].imag])
        local = cKDTree(xy)
        removed = np.zeros(len(batch), dtype=bool)
        neighbours = local.query_ball_point(xy, THINNING_FACTOR * sizes[batch])
        for a in range(len(batch)):
            if removed[a]:
                continue
            for b in neighbours[a]:
                if b > a:
                    removed[b] = True
        kept.extend(batch[~removed].tolist())
        tree = cKDTree(np.column_stack([points[kept].real, points[kept].imag]))
    return np.array(kept, dtype=int)


def _plane_points(alpha: np.ndarray, radii: np.ndarray, spacing: float, ring_points: int,
                  phases: np.ndarray, cuts):
    """
    Vertices of the holed plane region.

    Ring k around alpha_i sits at angles 2 pi (k + phases[i]) / K, which keeps
    the ring vertices a quarter step away from the cut leaving alpha_i.

    Returns (points, ring_owner) where ring_owner[p] = i for the points on the
    boundary circle of hole i and -1 otherwise. The first points are the hole
    boundaries followed by the outer circle.
    """
    K = ring_points
    q = 1 + 2 * np.pi / K
    limit = R_OUT - 0.5 * spacing

    first_rings = [_circle(K, r, a, offset=p) for a, r, p in zip(alpha, radii, phases)]
    n_outer = int(np.ceil(2 * np.pi * R_OUT / spacing))
    outer = _circle(n_outer, R_OUT)

    graded = []
    for i, (a, r) in enumerate(zip(alpha, radii)):
        level = 1
        while 2 * np.pi * r * q ** level / K < spacing:
            ring = _circle(K, r * q ** level, a, offset=phases[i] + 0.5 * (level % 2))
            own = np.abs(ring - a) <= _nearest_distance(ring, alpha) + 1e-15
            graded.append(ring[own & (np.abs(ring) < limit)])
            level += 1
    graded = np.concatenate(graded) if graded else np.zeros(0, dtype=complex)

    grid = _hex_lattice(limit, spacing)
    grid = grid[2 * np.pi * _nearest_distance(grid, alpha) / K >= spacing]

    candidates = np.concatenate([graded, grid])
    # keep the diametral circles of hole-boundary chords empty so every chord is a Delaunay edge
    ring_gap = radii * (1 + 1.5 * np.pi / K)
    inside_hole = np.any(np.abs(candidates[:, None] - alpha[None, :]) < ring_gap[None, :], axis=1)
    candidates = candidates[~inside_hole]

    protected = np.concatenate(first_rings + [outer])
    points = np.concatenate([protected, candidates])
    sizes = np.minimum(spacing, 2 * np.pi * _nearest_distance(points, alpha) / K)
    keep = _thin(points, sizes, len(protected))
    points = points[keep]
    points[len(protected):] = _clear_cuts(points[len(protected):], cuts, CUT_CLEARANCE * sizes[keep][len(protected):])

    ring_owner = -np.ones(len(points), dtype=int)
    for i in range(len(alpha)):
        ring_owner[i * K:(i + 1) * K] = i
    return points, ring_owner, n_outer


def ring_phases(alpha: np.ndarray, pairing: list, K: int) -> np.ndarray:
    """Ring offsets, in steps of 2 pi / K, placing each cut between two ring vertices."""
    phases = np.zeros(len(alpha))
    for i, j in pairing:
        for own, other in ((i, j), (j, i)):
            angle = np.angle(alpha[other] - alpha[own]) % (2 * np.pi)
            phases[own] = (angle * K / (2 * np.pi) + 0.25) % 1.0
    return phases


def _clear_cuts(points: np.ndarray, cuts, clearance: np.ndarray) -> np.ndarray:
    """
    Push points lying within ``clearance`` of a cut out to that distance,
    on their own side. y has a jump across a cut, so a vertex on it has no
    well-defined sheet.
    """
    points = points.copy()
    for a, b in cuts:
        direction = (b - a) / abs(b - a)
        along = np.real((points - a) * np.conj(direction))
        across = np.imag((points - a) * np.conj(direction))
        close = (along > 0) & (along < abs(b - a)) & (np.abs(across) < clearance)
        side = np.where(across[close] >= 0, 1.0, -1.0)
        points[close] = a + direction * (along[close] + 1j * side * clearance[close])
    return points


def _delaunay(points: np.ndarray) -> np.ndarray:
    return Delaunay(np.column_stack([points.real, points.imag])).simplices.astype(int)


def _orient(tri: np.ndarray, coords: np.ndarray):
    """Make every triangle counterclockwise in its chart coordinates."""
    area = np.imag(np.conj(coords[:, 1] - coords[:, 0]) * (coords[:, 2] - coords[:, 0]))
    flip = area < 0
    tri[flip] = tri[flip][:, [0, 2, 1]]
    coords[flip] = coords[flip][:, [0, 2, 1]]
    return tri, coords


def _edge_ratio(start: np.ndarray, end: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    """y(end)/y(start) continued along the straight segment (no branch point on it)."""
    ratio = np.ones(len(start), dtype=complex)
    for a in alpha:
        ratio = ratio * np.sqrt((end - a) / (start - a))
    return ratio


def _sheet_of(y: np.ndarray, y_sheet0: np.ndarray) -> np.ndarray:
    return np.where(np.real(y * np.conj(y_sheet0)) > 0, 0, 1)


# densities and quadrature

def _chart_density(cd: periods.CurveData, chart: int, coords: np.ndarray) -> np.ndarray:
    if chart == CHART_PLANE:
        return periods.density_x(cd, coords)
    if chart == CHART_INFINITY:
        return periods.density_u(cd, coords)
    return periods.density_t(cd, chart - CHART_BRANCH, coords)


def _lumped_weights(cd, n_vertices, triangles, tri_chart, tri_coords):
    c = tri_coords
    areas = 0.5 * np.imag(np.conj(c[:, 1] - c[:, 0]) * (c[:, 2] - c[:, 0]))
    quad_points = QUAD_BARY @ c.T  # (6, T)
    rho = np.zeros_like(quad_points, dtype=float)
    for chart in np.unique(tri_chart):
        sel = tri_chart == chart
        rho[:, sel] = _chart_density(cd, chart, quad_points[:, sel].ravel()).reshape(6, -1)
    # share of vertex k of each triangle: area * sum_q w_q rho_q bary_qk
    shares = areas[:, None] * ((QUAD_WEIGHTS[:, None] * rho).T @ QUAD_BARY)
    weights = np.zeros(n_vertices)
    np.add.at(weights, triangles.ravel(), shares.ravel())
    return weights


def build_mesh(cd: periods.CurveData, resolution: int = 64, ring_points: int = 0) -> SurfaceMesh:
    """
    Triangulate the surface of ``cd`` at resolution R.

    Args:
        cd: curve data with the orthonormal basis filled
        resolution: number of grid spacings across the plane region
        ring_points: vertices on each hole boundary; 0 derives it from R

    Returns:
        SurfaceMesh with normalized mu weights
    """
    if resolution < 8:
        raise ResolutionTooLowError(f"resolution {resolution} below the minimum of 8")
    h = cd.genus
    alpha = cd.working
    K = ring_points or max(12, resolution // 2)
    spacing = 2 * R_OUT / resolution

    separation = np.abs(alpha[:, None] - alpha[None, :]) + np.diag(np.full(len(alpha), np.inf))
    radii = separation.min(axis=1) / 3

    phases = ring_phases(alpha, cd.cut_pairing, K)
    plane, ring_owner, n_outer = _plane_points(alpha, radii, spacing, K, phases, cd.cuts)
    n_plane = len(plane)
    plane_tri = _delaunay(plane)
    owners = ring_owner[plane_tri]
    in_hole = (owners[:, 0] >= 0) & (owners[:, 0] == owners[:, 1]) & (owners[:, 1] == owners[:, 2])
    plane_tri = plane_tri[~in_hole]

    # lift plane triangles to both sheets
    y0 = periods.branch_y(plane, cd.cuts)
    p0, p1, p2 = plane_tri.T
    s1 = _sheet_of(y0[p0] * _edge_ratio(plane[p0], plane[p1], alpha), y0[p1])
    s2 = _sheet_of(y0[p0] * _edge_ratio(plane[p0], plane[p2], alpha), y0[p2])
    triangles, tri_chart, tri_coords = [], [], []
    for copy in (0, 1):
        triangles.append(np.column_stack([p0 + copy * n_plane,
                                          p1 + ((s1 + copy) % 2) * n_plane,
                                          p2 + ((s2 + copy) % 2) * n_plane]))
        tri_chart.append(np.full(len(plane_tri), CHART_PLANE))
        tri_coords.append(plane[plane_tri])

    x = [plane, plane]
    sheet = [np.zeros(n_plane, dtype=int), np.ones(n_plane, dtype=int)]
    chart = [np.full(2 * n_plane, CHART_PLANE)]
    coord = [plane, plane]
    n_vertices = 2 * n_plane
    marked = {}

    # branch caps in t with x = alpha_i + t^2
    for i, (b, r) in enumerate(zip(alpha, radii)):
        others = np.delete(alpha, i)
        f_centre = np.exp(0.5 * np.sum(np.log(b - others)))
        boundary_t = np.sqrt(r) * np.exp(1j * np.pi * (np.arange(2 * K) + phases[i]) / K)
        cap_spacing = np.pi * np.sqrt(r) / K
        interior_t = _hex_lattice(np.sqrt(r) - 0.5 * cap_spacing, cap_spacing)
        cap_t = np.concatenate([boundary_t, interior_t])
        cap_x = b + cap_t ** 2

        f = f_centre * np.ones(len(cap_t), dtype=complex)
        for a in others:
            f = f * np.sqrt((cap_x - a) / (b - a))
        ring_index = i * K + np.arange(2 * K) % K
        # boundary vertices are shared with the plane: compare against the plane's y
        reference = np.concatenate([y0[ring_index], periods.branch_y(cap_x[2 * K:], cd.cuts)])
        cap_sheet = _sheet_of(cap_t * f, reference)

        local_to_global = np.concatenate([
            ring_index + cap_sheet[:2 * K] * n_plane,
            n_vertices + np.arange(len(interior_t)),
        ])
        centre_local = 2 * K + int(np.argmin(np.abs(interior_t)))
        cap_sheet[centre_local] = 0
        marked[i] = int(local_to_global[centre_local])

        local_tri = _delaunay(cap_t)
        triangles.append(local_to_global[local_tri])
        tri_chart.append(np.full(len(local_tri), CHART_BRANCH + i))
        tri_coords.append(cap_t[local_tri])

        x.append(cap_x[2 * K:])
        sheet.append(cap_sheet[2 * K:])
        chart.append(np.full(len(interior_t), CHART_BRANCH + i))
        coord.append(interior_t)
        n_vertices += len(interior_t)

    # caps over x = infinity in u = 1/x, one per sheet
    outer_index = len(alpha) * K + np.arange(n_outer)
    boundary_u = 1 / plane[outer_index]
    u_spacing = spacing / R_OUT ** 2
    interior_u = _hex_lattice(1 / R_OUT - 0.5 * u_spacing, u_spacing)
    cap_u = np.concatenate([boundary_u, interior_u])
    local_tri = _delaunay(cap_u)
    for copy in (0, 1):
        local_to_global = np.concatenate([outer_index + copy * n_plane,
                                          n_vertices + np.arange(len(interior_u))])
        triangles.append(local_to_global[local_tri])
        tri_chart.append(np.full(len(local_tri), CHART_INFINITY))
        tri_coords.append(cap_u[local_tri])
        with np.errstate(divide="ignore"):
            x.append(np.where(interior_u == 0, complex(np.inf), 1 / np.where(interior_u == 0, 1, interior_u)))
        sheet.append(np.full(len(interior_u), copy))
        chart.append(np.full(len(interior_u), CHART_INFINITY))
        coord.append(interior_u)
        n_vertices += len(interior_u)

    triangles = np.concatenate(triangles)
    tri_chart = np.concatenate(tri_chart)
    tri_coords = np.concatenate(tri_coords)
    triangles, tri_coords = _orient(triangles, tri_coords)

    x = np.concatenate(x)
    sheet = np.concatenate(sheet)
    chart = np.concatenate(chart)
    coord = np.concatenate(coord)

    raw = _lumped_weights(cd, n_vertices, triangles, tri_chart, tri_coords)
    raw_mass = float(raw.sum())
    density = np.zeros(n_vertices)
    for ch in np.unique(chart):
        sel = chart == ch
        density[sel] = _chart_density(cd, ch, coord[sel])

    mesh = SurfaceMesh(
        x=x, sheet=sheet, chart=chart, coord=coord,
        triangles=triangles, tri_chart=tri_chart, tri_coords=tri_coords,
        mu_weights=raw / raw_mass, vertex_density=density,
        marked_points=marked, raw_mass=raw_mass,
        resolution=resolution, ring_points=K, branch_radii=radii, genus=h,
        parameters={"resolution": resolution, "ring_points": K, "outer_radius": R_OUT},
    )
    _check_mesh(mesh)
    logger.info(f"stage=mesh genus={h} resolution={resolution} vertices={mesh.n_vertices} "
                f"triangles={mesh.n_triangles} raw_mass={raw_mass:.6f}")
    return mesh


def euler_characteristic(mesh: SurfaceMesh) -> int:
    return int(mesh.n_vertices - len(mesh.edges()) + mesh.n_triangles)


def _check_mesh(mesh: SurfaceMesh):
    expected = 2 - 2 * mesh.genus
    chi = euler_characteristic(mesh)
    if chi != expected:
        raise ResolutionTooLowError(f"Euler characteristic {chi}, expected {expected}")
    e = np.concatenate([mesh.triangles[:, [0, 1]], mesh.triangles[:, [1, 2]], mesh.triangles[:, [2, 0]]])
    _, counts = np.unique(np.sort(e, axis=1), axis=0, return_counts=True)
    if np.any(counts != 2):
        raise ResolutionTooLowError(f"{int(np.sum(counts != 2))} edges not shared by exactly two triangles")
    areas = mesh.tri_areas()
    if np.min(areas) <= 1e-12 * np.median(areas):
        raise ResolutionTooLowError(f"degenerate triangle with area {np.min(areas):.2e}")


# quadrature

def _log_moment(apex: complex, p: complex, q: complex, n: int = 8) -> float:
    """
    Integral over triangle (apex, p, q) of log|z - apex| times the hat
    function of the apex: in polar coordinates around the apex the radial
    integral is R^2 (log R / 6 - 5/36).
    """
    u, w = np.polynomial.legendre.leggauss(n)
    a, b = np.angle(p - apex), np.angle(q - apex)
    span = np.angle(np.exp(1j * (b - a)))
    theta = a + span * (u + 1) / 2
    edge = q - p
    ray = np.exp(1j * theta)
    radius = (np.conj(p - apex) * edge).imag / (np.conj(ray) * edge).imag
    return float(abs(span) / 2 * np.sum(w * radius ** 2 * (np.log(radius) / 6 - 5 / 36)))


def _values(mesh: SurfaceMesh, f) -> np.ndarray:
    if callable(f):
        with np.errstate(all="ignore"):
            return np.asarray(f(mesh.x, mesh.sheet))
    return np.asarray(f)


def integrate(mesh: SurfaceMesh, f: Union[Callable, np.ndarray],
              singularities: Optional[dict] = None):
    """
    Integral of f against mu.

    Args:
        mesh: surface mesh
        f: per-vertex values, or a callable f(x, sheet) over vertex arrays
            (x is complex infinity at the two points over infinity)
        singularities: {vertex: c} for vertices where f behaves like
            c log|z - z_v| in the vertex chart; f is not evaluated there

    Returns:
        Real or complex integral
    """
    values = _values(mesh, f)
    singularities = singularities or {}
    singular = np.zeros(mesh.n_vertices, dtype=bool)
    singular[list(singularities)] = True
    bad = ~np.isfinite(values) & ~singular
    if np.any(bad):
        raise SingularValueError(f"f is not finite at {int(bad.sum())} undeclared vertices "
                                 f"(first {int(np.flatnonzero(bad)[0])})")
    regular = np.where(singular, 0, values)
    total = np.sum(regular * mesh.mu_weights)
    for vertex, coefficient in singularities.items():
        total = total + _singular_contribution(mesh, values, vertex, coefficient)
    return total


def _singular_contribution(mesh: SurfaceMesh, values, vertex: int, coefficient: float):
    incident = np.flatnonzero(np.any(mesh.triangles == vertex, axis=1))
    log_part = 0.0
    residuals = []
    for f_idx in incident:
        corners = mesh.triangles[f_idx]
        coords = mesh.tri_coords[f_idx]
        k = int(np.flatnonzero(corners == vertex)[0])
        apex, p, q = coords[k], coords[(k + 1) % 3], coords[(k + 2) % 3]
        log_part += _log_moment(apex, p, q)
        for j in ((k + 1) % 3, (k + 2) % 3):
            residuals.append(values[corners[j]] - coefficient * np.log(abs(coords[j] - apex)))
    regular_part = np.mean(residuals)
    # constants integrate exactly
    return mesh.vertex_density[vertex] * coefficient * log_part / mesh.raw_mass + regular_part * mesh.mu_weights[vertex]


def mesh_gram(mesh: SurfaceMesh, cd: periods.CurveData) -> np.ndarray:
    """Gram matrix of x^m dx/y by surface quadrature, same convention as periods.gram_matrix."""
    at_infinity = mesh.chart == CHART_INFINITY
    ratio = np.zeros((mesh.n_vertices, cd.genus, cd.genus), dtype=complex)
    ratio[~at_infinity] = periods.form_ratio(cd, mesh.x[~at_infinity], orthonormal=False)
    ratio[at_infinity] = periods.form_ratio(cd, mesh.coord[at_infinity], at_infinity=True, orthonormal=False)
    inner = np.einsum("v,vmn->mn", mesh.mu_weights, ratio)
    return inner.T


def vertex_form_ratio(mesh: SurfaceMesh, cd: periods.CurveData) -> np.ndarray:
    """Orthonormal form ratio at every vertex, shape (V, h, h)."""
    at_infinity = mesh.chart == CHART_INFINITY
    ratio = np.zeros((mesh.n_vertices, cd.genus, cd.genus), dtype=complex)
    ratio[~at_infinity] = periods.form_ratio(cd, mesh.x[~at_infinity])
    ratio[at_infinity] = periods.form_ratio(cd, mesh.coord[at_infinity], at_infinity=True)
    return ratio


def dump_mesh(mesh: SurfaceMesh, stream):
    """
    Write the mesh as text records.

    One line per vertex, ``v idx re im sheet chart weight`` (working x; ``inf``
    for the points over infinity), then one per triangle, ``f i j k``.
    """
    stream.write(f"# vertices={mesh.n_vertices} triangles={mesh.n_triangles} genus={mesh.genus} "
                 f"resolution={mesh.resolution}\n")
    for v in range(mesh.n_vertices):
        xv = mesh.x[v]
        position = "inf inf" if not np.isfinite(xv) else f"{xv.real:.12g} {xv.imag:.12g}"
        stream.write(f"v {v} {position} {mesh.sheet[v]} {mesh.chart[v]} {mesh.mu_weights[v]:.12e}\n")
    for i, j, k in mesh.triangles:
        stream.write(f"f {i} {j} {k}\n")
