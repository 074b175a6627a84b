"""
Canonical Laplacian, Green's functions and the invariants psi and phi.

With d d-bar f = pi i Delta_mu(f) mu and mu = rho dA in a chart,

    Delta_mu = -Delta_flat / (2 pi rho),

a nonnegative operator. The P1 discretization is the pair (S / 2 pi, M)
with S the chart-wise cotangent stiffness matrix and M = diag(mu weights).
On the square torus (tau = i) the first nonzero eigenvalue is 2 pi, four-fold.
"""
import logging
from dataclasses import dataclass, field
from itertools import permutations
from typing import Optional

import numpy as np
from scipy import linalg, sparse
from scipy.sparse import csgraph
from scipy.sparse.linalg import eigsh, splu

from . import branch_algebra as ba
from . import mesh as surface_mesh
from . import periods
from .exceptions import (
    DisconnectedMeshError,
    EvaluationAtPoleError,
    InsufficientSpectrumError,
    SolverFailureError,
)

logger = logging.getLogger(__name__)

# Delta_mu = -Delta_flat / (LAPLACIAN_SCALE * rho)
LAPLACIAN_SCALE = 2 * np.pi
SOLVER_SEED = 20100917


@dataclass(frozen=True)
class LaplaceOperator:
    stiffness: sparse.csr_matrix
    mass: np.ndarray

    @property
    def operator(self) -> sparse.csr_matrix:
        return self.stiffness / LAPLACIAN_SCALE

    def apply(self, values: np.ndarray) -> np.ndarray:
        """Delta_mu of per-vertex values."""
        return (self.stiffness @ values) / LAPLACIAN_SCALE / self.mass


@dataclass
class SpectralData:
    eigenvalues: np.ndarray
    eigenfunctions: np.ndarray
    L: int
    orthonormality_defect: float


@dataclass
class GreenField:
    """g(w_source, .) per vertex; the source vertex itself holds -inf."""
    source: int
    branch_index: int
    values: np.ndarray
    constant_fixed: bool
    mean_shift: float


@dataclass
class PhiEstimate:
    value: float
    tail: float
    contributions: np.ndarray = field(repr=False)
    zero_mode: np.ndarray = field(repr=False)


def assemble_laplacian(mesh: surface_mesh.SurfaceMesh) -> LaplaceOperator:
    """
    Stiffness matrix of the Dirichlet form, each triangle in its own chart.

    The Dirichlet integral is conformally invariant, so mixing charts across
    triangles is consistent.
    """
    c = mesh.tri_coords
    edges = np.stack([c[:, 2] - c[:, 1], c[:, 0] - c[:, 2], c[:, 1] - c[:, 0]], axis=1)
    area = mesh.tri_areas()
    local = np.real(edges[:, :, None] * np.conj(edges[:, None, :])) / (4 * area[:, None, None])
    rows = np.repeat(mesh.triangles, 3, axis=1).ravel()
    cols = np.tile(mesh.triangles, (1, 3)).ravel()
    n = mesh.n_vertices
    stiffness = sparse.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    stiffness = (stiffness + stiffness.T) / 2

    n_components, _ = csgraph.connected_components(stiffness, directed=False)
    if n_components != 1:
        raise DisconnectedMeshError(f"mesh has {n_components} connected components")
    logger.debug(f"stage=assemble vertices={n} nonzeros={stiffness.nnz}")
    return LaplaceOperator(stiffness=stiffness.tocsr(), mass=mesh.mu_weights.copy())


# Green's functions

def _smoothstep(s):
    """Quintic smoothstep with its first two derivatives."""
    s = np.clip(s, 0.0, 1.0)
    return (6 * s ** 5 - 15 * s ** 4 + 10 * s ** 3,
            30 * s ** 4 - 60 * s ** 3 + 30 * s ** 2,
            120 * s ** 3 - 180 * s ** 2 + 60 * s)


def cutoff(r, radius):
    """
    Radial cutoff equal to 1 for r < radius/2 and 0 for r > radius.

    Returns chi, d chi/dr and d^2 chi/dr^2.
    """
    s = (radius - np.asarray(r, dtype=float)) / (radius / 2)
    value, d1, d2 = _smoothstep(s)
    inside = (s > 0) & (s < 1)
    return value, np.where(inside, -2 / radius * d1, 0.0), np.where(inside, 4 / radius ** 2 * d2, 0.0)


def _cutoff_laplacian(r, radius):
    """Delta_flat(chi log r) away from r = 0."""
    chi, d1, d2 = cutoff(r, radius)
    safe = np.where(r > 0, r, 1.0)
    return np.where(r > 0, (d2 + d1 / safe) * np.log(safe) + 2 * d1 / safe, 0.0)


class PoissonSolver:
    """
    Factorized Green's function solver sharing one sparse LU across sources.

    The vertex ``pin`` is held at zero to remove the constant kernel.
    """

    def __init__(self, mesh: surface_mesh.SurfaceMesh, operator: Optional[LaplaceOperator] = None, pin: int = 0):
        self.mesh = mesh
        self.operator = operator or assemble_laplacian(mesh)
        self.pin = pin
        keep = np.ones(mesh.n_vertices, dtype=bool)
        keep[pin] = False
        self.free = np.flatnonzero(keep)
        reduced = self.operator.stiffness[self.free][:, self.free].tocsc()
        try:
            self.factor = splu(reduced)
        except RuntimeError as exc:
            raise SolverFailureError(f"sparse LU failed: {exc}") from exc

    def solve(self, branch_index: int) -> GreenField:
        mesh = self.mesh
        source = mesh.marked_points[branch_index]
        chart = surface_mesh.CHART_BRANCH + branch_index
        radius = np.sqrt(mesh.branch_radii[branch_index])

        # singular part chi log|t| lives on the cap vertices
        cap = np.flatnonzero(mesh.chart == chart)
        r_cap = np.abs(mesh.coord[cap])
        chi, _, _ = cutoff(r_cap, radius)
        singular = np.zeros(mesh.n_vertices)
        with np.errstate(divide="ignore", invalid="ignore"):
            singular[cap] = np.where(r_cap > 0, chi * np.log(np.where(r_cap > 0, r_cap, 1.0)), 0.0)

        rhs = LAPLACIAN_SCALE * self.operator.mass
        rhs = rhs + self._lumped_correction(chart, radius)
        rhs = rhs - rhs.sum() * self.operator.mass / self.operator.mass.sum()

        regular = np.zeros(mesh.n_vertices)
        regular[self.free] = self.factor.solve(rhs[self.free])
        if not np.all(np.isfinite(regular)):
            raise SolverFailureError(f"non-finite Poisson solution for source {branch_index + 1}")

        values = singular + regular
        values[source] = -np.inf
        mean = surface_mesh.integrate(mesh, values, {source: 1.0})
        values = values - mean
        logger.debug(f"stage=green source={branch_index + 1} mean_shift={mean:.3e}")
        return GreenField(source=source, branch_index=branch_index, values=values,
                          constant_fixed=True, mean_shift=float(mean))

    def _lumped_correction(self, chart: int, radius: float) -> np.ndarray:
        """Lumped integrals of Delta_flat(chi log r) against hat functions over the cap."""
        mesh = self.mesh
        sel = np.flatnonzero(mesh.tri_chart == chart)
        c = mesh.tri_coords[sel]
        area = 0.5 * np.imag(np.conj(c[:, 1] - c[:, 0]) * (c[:, 2] - c[:, 0]))
        points = surface_mesh.QUAD_BARY @ c.T
        values = _cutoff_laplacian(np.abs(points), radius)
        shares = area[:, None] * ((surface_mesh.QUAD_WEIGHTS[:, None] * values).T @ surface_mesh.QUAD_BARY)
        out = np.zeros(mesh.n_vertices)
        np.add.at(out, mesh.triangles[sel].ravel(), shares.ravel())
        return out


def green_function(mesh: surface_mesh.SurfaceMesh, cd: periods.CurveData, source: int,
                   solver: Optional[PoissonSolver] = None) -> GreenField:
    """Green's function with pole at the Weierstrass point over branch point ``source``."""
    solver = solver or PoissonSolver(mesh)
    return solver.solve(source)


def green_matrix(mesh: surface_mesh.SurfaceMesh, cd: periods.CurveData,
                 solver: Optional[PoissonSolver] = None):
    """
    g(w_i, w_j) for all pairs, plus the fields it came from.

    Row i is read off the field with source w_i; the diagonal is zero.
    """
    solver = solver or PoissonSolver(mesh)
    n = len(cd.bs)
    fields = [solver.solve(i) for i in range(n)]
    matrix = np.zeros((n, n))
    for i, fld in enumerate(fields):
        for j in range(n):
            if i != j:
                matrix[i, j] = fld.values[mesh.marked_points[j]]
    return matrix, fields


def weierstrass_energy_psi(green: np.ndarray) -> float:
    """(1/(2h+2)) sum over ordered pairs i != j of g(w_i, w_j)."""
    n = len(green)
    return float((green.sum() - np.trace(green)) / n)


def green_difference_oracle(mesh: surface_mesh.SurfaceMesh, cd: periods.CurveData,
                            i: int, j: int, z: int) -> float:
    """
    g(w_i, z) - g(w_j, z) by quadrature alone, from the function
    f_ij = (x - alpha_i)/(x - alpha_j) with divisor 2 w_i - 2 w_j.
    """
    if z in (mesh.marked_points[i], mesh.marked_points[j]):
        raise EvaluationAtPoleError(f"vertex {z} is a zero or pole of f_{i + 1}{j + 1}")
    log_f = log_abs_ratio(mesh, cd, i, j)
    mean = surface_mesh.integrate(mesh, log_f, {mesh.marked_points[i]: 2.0, mesh.marked_points[j]: -2.0})
    return float(0.5 * log_f[z] - 0.5 * mean)


def log_abs_ratio(mesh: surface_mesh.SurfaceMesh, cd: periods.CurveData, i: int, j: int) -> np.ndarray:
    finite = np.isfinite(mesh.x)
    x = np.where(finite, mesh.x, 0)
    with np.errstate(divide="ignore"):
        values = np.log(np.abs(x - cd.working[i])) - np.log(np.abs(x - cd.working[j]))
    return np.where(finite, values, 0.0)


# spectrum

def eigenpairs(mesh: surface_mesh.SurfaceMesh, L: int, operator: Optional[LaplaceOperator] = None,
               seed: int = SOLVER_SEED) -> SpectralData:
    """
    Lowest L + 1 eigenpairs of Delta_mu, mu-orthonormal.

    Shift-invert Lanczos below zero, then a Rayleigh-Ritz pass in the
    computed subspace to orthonormalize against the mass matrix.
    """
    operator = operator or assemble_laplacian(mesh)
    n = mesh.n_vertices
    if not 1 <= L < n - 1:
        raise SolverFailureError(f"cannot compute {L + 1} eigenpairs on {n} vertices")
    A = operator.operator.tocsc()
    M = sparse.diags(operator.mass).tocsc()
    v0 = np.random.default_rng(seed).normal(size=n)
    try:
        _, vectors = eigsh(A, k=L + 1, M=M, sigma=-1.0, which="LM", v0=v0)
    except Exception as exc:
        raise SolverFailureError(f"eigsh failed: {exc}") from exc

    reduced_a = vectors.T @ (A @ vectors)
    reduced_m = vectors.T @ (M @ vectors)
    values, rotation = linalg.eigh((reduced_a + reduced_a.T) / 2, (reduced_m + reduced_m.T) / 2)
    vectors = vectors @ rotation
    if vectors[:, 0] @ operator.mass < 0:
        vectors[:, 0] = -vectors[:, 0]

    gram = vectors.T @ (operator.mass[:, None] * vectors)
    defect = float(np.max(np.abs(gram - np.eye(L + 1))))
    logger.info(f"stage=eigenpairs L={L} lambda_1={values[1]:.6f} lambda_L={values[-1]:.4f} defect={defect:.1e}")
    return SpectralData(eigenvalues=values, eigenfunctions=vectors, L=L, orthonormality_defect=defect)


def spectral_green(spec: SpectralData, x: int, y: int, L: Optional[int] = None) -> float:
    """
    Truncated eigen-expansion of g(x, y).

    With the nonnegative sign convention for Delta_mu the expansion is
    -sum_{l >= 1} phi_l(x) phi_l(y) / lambda_l.
    """
    L = spec.L if L is None else L
    phi = spec.eigenfunctions[:, 1:L + 1]
    return float(-np.sum(phi[x] * phi[y] / spec.eigenvalues[1:L + 1]))


def _tail_estimate(contributions: np.ndarray) -> float:
    """Geometric extrapolation of the last block of contributions (blocks of L // 10)."""
    block = max(1, len(contributions) // 10)
    n_blocks = len(contributions) // block
    sums = contributions[:n_blocks * block].reshape(n_blocks, block).sum(axis=1)
    if n_blocks < 2 or sums[-1] == 0:
        return 0.0
    ratio = sums[-1] / sums[-2] if sums[-2] > 0 else 1.0
    if ratio >= 1:
        # no decay: charge the last block once per block computed
        return float(sums[-1] * n_blocks)
    return float(sums[-1] * ratio / (1 - ratio))


def kawazumi_zhang_phi(mesh: surface_mesh.SurfaceMesh, cd: periods.CurveData, spec: SpectralData,
                       tail_tolerance: Optional[float] = None) -> PhiEstimate:
    """
    phi = sum_{l > 0} (2 / lambda_l) sum_{m,n} |int phi_l omega_m ^ conj(omega_n)|^2.

    The wedge integrals are mesh quadratures of phi_l against the form ratio
    (i/2) omega_m ^ conj(omega_n) / mu, the area factor fixed by the Gram
    matrix, so the zero mode reproduces the identity.
    """
    ratio = surface_mesh.vertex_form_ratio(mesh, cd)
    weighted = spec.eigenfunctions * mesh.mu_weights[:, None]
    coefficients = np.einsum("vl,vmn->lmn", weighted, ratio)
    zero_mode = coefficients[0]
    squared = np.sum(np.abs(coefficients[1:]) ** 2, axis=(1, 2))
    contributions = 2 / spec.eigenvalues[1:] * squared
    value = float(contributions.sum())
    tail = _tail_estimate(contributions)
    logger.info(f"stage=phi value={value:.6f} tail={tail:.2e} L={spec.L}")
    if tail_tolerance is not None and tail > tail_tolerance:
        raise InsufficientSpectrumError(f"phi tail estimate {tail:.2e} exceeds {tail_tolerance:.2e} at L={spec.L}")
    return PhiEstimate(value=value, tail=tail, contributions=contributions, zero_mode=zero_mode)


# residuals

def theorem_A_residuals(green: np.ndarray, delta_log: np.ndarray, psi: float, genus: int) -> np.ndarray:
    """g(w_i, w_j) - log|delta_ij| / (4h(2h+1)) - psi / (2h+1); zero on the diagonal."""
    h = genus
    residuals = green - delta_log / (4 * h * (2 * h + 1)) - psi / (2 * h + 1)
    np.fill_diagonal(residuals, 0.0)
    return residuals


def theorem_A_spread(green: np.ndarray, delta_log: np.ndarray, genus: int) -> float:
    """Spread over pairs of g(w_i, w_j) - log|delta_ij| / (4h(2h+1)); needs no psi."""
    h = genus
    mask = ~np.eye(len(green), dtype=bool)
    shifted = (green - delta_log / (4 * h * (2 * h + 1)))[mask]
    return float(shifted.max() - shifted.min())


def theorem_B_residual(psi: float, phi: float, genus: int) -> float:
    return float(psi - phi / (2 * genus) - np.log(2))


def four_point_residuals(green: np.ndarray, bs: ba.BranchSet) -> np.ndarray:
    """g_ik - g_ir - g_jk + g_jr - (1/2) log|cross ratio (i, j, k, r)| over ordered 4-tuples."""
    out = []
    for i, j, k, r in permutations(range(len(bs)), 4):
        combination = green[i, k] - green[i, r] - green[j, k] + green[j, r]
        out.append(combination - 0.5 * np.log(abs(ba.cross_ratio(bs, i, j, k, r))))
    return np.array(out)


def row_sum_spread(green: np.ndarray) -> float:
    rows = green.sum(axis=1) - np.diag(green)
    return float(rows.max() - rows.min())


def smooth_test_function(mesh: surface_mesh.SurfaceMesh) -> np.ndarray:
    """1 / (1 + |x|^2) on the vertices, 0 over infinity."""
    finite = np.isfinite(mesh.x)
    x = np.where(finite, mesh.x, 0)
    return np.where(finite, 1 / (1 + np.abs(x) ** 2), 0.0)


def inversion_residual(mesh: surface_mesh.SurfaceMesh, operator: LaplaceOperator,
                       green: GreenField, f: Optional[np.ndarray] = None) -> float:
    """f(x) - (-int g(x, .) Delta_mu f mu + int f mu) at the source x of ``green``."""
    f = smooth_test_function(mesh) if f is None else f
    laplacian = operator.apply(f)
    product = green.values * laplacian
    product[green.source] = -np.inf
    integral = surface_mesh.integrate(mesh, product, {green.source: float(laplacian[green.source])})
    return float(f[green.source] - (-integral + surface_mesh.integrate(mesh, f)))


# report

@dataclass
class InvariantReport:
    delta_log_matrix: np.ndarray
    green_matrix: np.ndarray
    psi: float
    phi: PhiEstimate
    thmA_residuals: np.ndarray
    thmB_residual: float
    thmA_spread: float
    green_asymmetry: float
    four_point_max: float
    row_sum_spread: float
    inversion_max: float
    eigenvalues: np.ndarray = field(repr=False)

    @property
    def thmA_max(self) -> float:
        return float(np.max(np.abs(self.thmA_residuals)))


def invariant_report(mesh: surface_mesh.SurfaceMesh, cd: periods.CurveData, L: int,
                     tail_tolerance: Optional[float] = None, seed: int = SOLVER_SEED) -> InvariantReport:
    """Green matrix, psi, phi and every residual for one surface; sources are solved in index order."""
    operator = assemble_laplacian(mesh)
    solver = PoissonSolver(mesh, operator)
    green, fields = green_matrix(mesh, cd, solver)
    psi = weierstrass_energy_psi(green)
    spec = eigenpairs(mesh, L, operator, seed=seed)
    phi = kawazumi_zhang_phi(mesh, cd, spec, tail_tolerance=tail_tolerance)

    delta_log = ba.delta_log_matrix(cd.bs)
    residuals = theorem_A_residuals(green, delta_log, psi, cd.genus)
    report = InvariantReport(
        delta_log_matrix=delta_log,
        green_matrix=green,
        psi=psi,
        phi=phi,
        thmA_residuals=residuals,
        thmB_residual=theorem_B_residual(psi, phi.value, cd.genus),
        thmA_spread=theorem_A_spread(green, delta_log, cd.genus),
        green_asymmetry=float(np.max(np.abs(green - green.T))),
        four_point_max=float(np.max(np.abs(four_point_residuals(green, cd.bs)))),
        row_sum_spread=row_sum_spread(green),
        inversion_max=max(abs(inversion_residual(mesh, operator, fld)) for fld in fields),
        eigenvalues=spec.eigenvalues,
    )
    logger.info(f"stage=invariants genus={cd.genus} psi={psi:.6f} phi={phi.value:.6f} "
                f"thmA_max={report.thmA_max:.2e} thmB={report.thmB_residual:.2e}")
    return report
