"""
Periods, Gram matrix and canonical measure of a hyperelliptic curve.

All computations run in working coordinates: if infinity is a branch point
it is moved to a finite position by an inversion, then the branch points are
centred and scaled to max |alpha| = 1. The map is kept in CurveData.to_working
so values can be pulled back; every reported invariant is Moebius-invariant.

Branch cuts join consecutive points in (Re, Im) order. The branch of

    y = prod_k (x - a_k) sqrt((x - b_k)/(x - a_k))

is single-valued off the cuts and is sheet 0. a-cycles loop counterclockwise
around cuts 1..h, and b_k crosses the gaps 1..k between consecutive cuts.
"""
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import linalg

from . import branch_algebra as ba
from .exceptions import (
    AtBranchPointError,
    NearDegenerateError,
    NotPositiveDefiniteError,
    QuadratureFailureError,
)

logger = logging.getLogger(__name__)

PERIOD_RTOL = 1e-11
PERIOD_MAX_NODES = 256
NEAR_DEGENERATE = 1e-13
PANEL_RATIO = 0.5
MIN_PANEL = 1e-12


@dataclass
class CurveData:
    """
    Periods and orthonormal differentials of a hyperelliptic curve.

    ``A[m, k]`` and ``B[m, k]`` are the a_k and b_k periods of x^m dx/y
    (m = 0..h-1). ``gram[m, n] = <nu_n, nu_m>`` so that for coefficient
    vectors u, v the inner product <nu u, nu v> is v^H gram u, and the
    columns of ``ortho`` give an orthonormal basis omega = nu C.
    """
    bs: ba.BranchSet
    working: np.ndarray
    to_working: ba.MobiusMap
    cut_pairing: list
    A: np.ndarray
    B: np.ndarray
    nodes: int
    error_estimate: float
    orientation: int = 1
    gram: Optional[np.ndarray] = field(default=None, repr=False)
    ortho: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def genus(self) -> int:
        return self.bs.genus

    @property
    def cuts(self):
        return [(self.working[i], self.working[j]) for i, j in self.cut_pairing]


def working_map(bs: ba.BranchSet) -> ba.MobiusMap:
    """Moebius map to working coordinates: all points finite, centred, max |alpha| = 1."""
    m = ba.MobiusMap.identity()
    if bs.infinite_index is not None:
        finite = bs.finite_values()
        centre = finite.mean()
        spread = max(np.max(np.abs(finite - centre)), 1e-300)
        angles = np.exp(2j * np.pi * np.arange(12) / 12)
        candidates = np.concatenate([[centre], centre + 0.5 * spread * angles, centre + spread * angles])
        clearance = np.min(np.abs(candidates[:, None] - finite[None, :]), axis=1)
        pole = candidates[int(np.argmax(clearance))]
        m = ba.MobiusMap(0, 1, 1, -pole)
    moved = np.array([m(p).value for p in bs.points], dtype=complex)
    centre = moved.mean()
    radius = np.max(np.abs(moved - centre))
    affine = ba.MobiusMap(1, -centre, 0, radius)
    return affine.compose(m)


def cut_pairing(working: np.ndarray) -> list:
    order = sorted(range(len(working)), key=lambda k: (working[k].real, working[k].imag))
    return [(order[2 * k], order[2 * k + 1]) for k in range(len(order) // 2)]


def _cut_factor(x, a, b):
    """(x - a) sqrt((x - b)/(x - a)): a square root of (x - a)(x - b) cut along [a, b]."""
    at_start = x == a
    value = (x - a) * np.sqrt((x - b) / np.where(at_start, 1, x - a))
    return np.where(at_start, 0, value)


def branch_y(x, cuts) -> np.ndarray:
    x = np.asarray(x, dtype=complex)
    y = np.ones_like(x)
    for a, b in cuts:
        y = y * _cut_factor(x, a, b)
    return y


def sheet_sqrt(cd: CurveData, x) -> np.ndarray:
    """Sheet-0 value of y at working coordinate(s) x."""
    return branch_y(x, cd.cuts)


def _segment_breaks(p: complex, q: complex, others) -> np.ndarray:
    """
    Panel ends in theta for x = (p + q)/2 - (q - p)/2 cos(theta), 0 <= theta <= pi.

    Panels halve in width toward the theta-image of every other branch point,
    down to that point's distance from the real theta axis.
    """
    breaks = [0.0, np.pi]
    half = (q - p) / 2
    for z in others:
        image = np.arccos(complex(((p + q) / 2 - z) / half))
        centre = float(np.clip(image.real, 0.0, np.pi))
        width = max(abs(image.imag) + abs(image.real - centre), MIN_PANEL)
        while width < np.pi:
            breaks.extend([centre - width, centre + width])
            width /= PANEL_RATIO
    breaks = np.unique(np.clip(breaks, 0.0, np.pi))
    breaks = breaks[np.concatenate([[True], np.diff(breaks) > MIN_PANEL])]
    breaks[-1] = np.pi
    return breaks


def _panel_rule(breaks: np.ndarray, n: int):
    """Composite n-point Gauss-Legendre nodes and weights over the panels."""
    u, w = leggauss(n)
    lower, width = breaks[:-1, None], np.diff(breaks)[:, None]
    return (lower + width * (u + 1) / 2).ravel(), (width * w / 2).ravel()


def _period_matrices(cuts, h: int, n: int):
    """a-periods and b-periods with n Gauss nodes per panel."""
    points = [z for cut in cuts for z in cut]
    powers = np.arange(h)

    A = np.zeros((h, h), dtype=complex)
    for k in range(1, h + 1):
        a, b = cuts[k]
        theta, weight = _panel_rule(_segment_breaks(a, b, [z for z in points if z not in (a, b)]), n)
        x = (a + b) / 2 - (b - a) / 2 * np.cos(theta)
        others = np.ones_like(x)
        for j, (aj, bj) in enumerate(cuts):
            if j != k:
                others = others * _cut_factor(x, aj, bj)
        integrand = x[None, :] ** powers[:, None] / others[None, :]
        A[:, k - 1] = 2j * integrand @ weight

    gaps = np.zeros((h, h), dtype=complex)
    for m in range(1, h + 1):
        p, q = cuts[m - 1][1], cuts[m][0]
        theta, weight = _panel_rule(_segment_breaks(p, q, [z for z in points if z not in (p, q)]), n)
        x = (p + q) / 2 - (q - p) / 2 * np.cos(theta)
        g = x[None, :] ** powers[:, None] * (q - p) * (np.sin(theta) / 2)[None, :] / branch_y(x, cuts)[None, :]
        gaps[:, m - 1] = 2 * g @ weight
    B = np.cumsum(gaps, axis=1)
    return A, B


def _check_separation(working: np.ndarray, tol: float):
    n = len(working)
    for r in range(n):
        for s in range(r + 1, n):
            if abs(working[r] - working[s]) < tol:
                raise NearDegenerateError(f"branch points {r + 1} and {s + 1} closer than {tol:g}")


def compute_periods(bs: ba.BranchSet, rtol: float = PERIOD_RTOL,
                    max_nodes: int = PERIOD_MAX_NODES,
                    near_degenerate: float = NEAR_DEGENERATE) -> CurveData:
    """
    a- and b-periods of x^m dx/y.

    Each cut and gap is parametrized by an angle that absorbs the square-root
    endpoint behaviour and integrated by composite Gauss-Legendre on panels
    graded toward nearby branch points, which keeps clustered curves cheap.
    The nodes per panel double from 8 until the largest relative change of any
    period is below ``rtol``. The b-cycles are oriented so that the Riemann
    matrix has positive-definite imaginary part.
    """
    h = bs.genus
    to_working = working_map(bs)
    working = np.array([to_working(p).value for p in bs.points], dtype=complex)
    _check_separation(working, near_degenerate)
    pairing = cut_pairing(working)
    cuts = [(working[i], working[j]) for i, j in pairing]

    n = 8
    A, B = _period_matrices(cuts, h, n)
    change = np.inf
    while n < max_nodes:
        n *= 2
        A_next, B_next = _period_matrices(cuts, h, n)
        scale = max(np.max(np.abs(A_next)), np.max(np.abs(B_next)))
        change = max(np.max(np.abs(A_next - A)), np.max(np.abs(B_next - B))) / scale
        A, B = A_next, B_next
        if change < rtol:
            break
    if not np.all(np.isfinite(A)) or not np.all(np.isfinite(B)) or change >= rtol:
        raise QuadratureFailureError(f"periods did not converge: nodes={n} rel_change={change:.2e}")

    tau = np.linalg.solve(A, B)
    imag = np.linalg.eigvalsh((tau.imag + tau.imag.T) / 2)
    if np.all(imag > 0):
        orientation = 1
    elif np.all(imag < 0):
        orientation = -1
        B = -B
    else:
        raise NotPositiveDefiniteError(f"Im of the Riemann matrix is indefinite: eigenvalues={imag}")

    logger.info(f"stage=periods genus={h} nodes={n} rel_change={change:.2e} orientation={orientation}")
    return CurveData(
        bs=bs,
        working=working,
        to_working=to_working,
        cut_pairing=pairing,
        A=A,
        B=B,
        nodes=n,
        error_estimate=float(change),
        orientation=orientation,
    )


def riemann_matrix(cd: CurveData) -> np.ndarray:
    return np.linalg.solve(cd.A, cd.B)


def gram_matrix(cd: CurveData) -> np.ndarray:
    """
    Gram matrix of x^m dx/y from the Riemann bilinear relations.

    Args:
        cd: curve data with periods filled

    Returns:
        Hermitian positive-definite matrix, also stored on ``cd.gram``
    """
    A, B = cd.A, cd.B
    gram = 0.5j * (np.conj(B) @ A.T - np.conj(A) @ B.T)
    gram = (gram + gram.conj().T) / 2
    eigenvalues = np.linalg.eigvalsh(gram)
    if np.min(eigenvalues) <= 0:
        raise NotPositiveDefiniteError(f"Gram matrix not positive definite: eigenvalues={eigenvalues}")
    cd.gram = gram
    return gram


def orthonormalize(cd: CurveData) -> np.ndarray:
    """Coefficient matrix C with C^H gram C = I, from the Cholesky factor of gram."""
    if cd.gram is None:
        gram_matrix(cd)
    try:
        lower = linalg.cholesky(cd.gram, lower=True)
    except linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(f"Cholesky factorization failed: {exc}") from exc
    identity = np.eye(cd.genus)
    ortho = linalg.solve_triangular(lower, identity, lower=True).conj().T
    cd.ortho = ortho
    return ortho


def curve_data(bs: ba.BranchSet, **quadrature) -> CurveData:
    """Periods, Gram matrix and orthonormal basis in one call."""
    cd = compute_periods(bs, **quadrature)
    gram_matrix(cd)
    orthonormalize(cd)
    return cd


# canonical measure

def coefficient_values(cd: CurveData, coords, at_infinity: bool = False) -> np.ndarray:
    """
    Values of the polynomial parts of x^m dx/y, shape (N, h).

    In the x-chart these are x^m; in the u = 1/x chart, after clearing the
    common factor, they are u^(h-1-m).
    """
    coords = np.atleast_1d(np.asarray(coords, dtype=complex))
    h = cd.genus
    exponents = np.arange(h)
    if at_infinity:
        exponents = h - 1 - exponents
    return coords[:, None] ** exponents[None, :]


def form_ratio(cd: CurveData, coords, at_infinity: bool = False, orthonormal: bool = True) -> np.ndarray:
    """
    Ratio of (i/2) w_m ^ conj(w_n) to mu at the given points, shape (N, h, h).

    The ratio does not depend on the chart. With ``orthonormal`` the forms
    are the orthonormal basis, otherwise the naive basis x^m dx/y.
    """
    p = coefficient_values(cd, coords, at_infinity)
    a = p @ cd.ortho
    total = np.sum(np.abs(a) ** 2, axis=1)
    q = a if orthonormal else p
    return cd.genus * q[:, :, None] * np.conj(q[:, None, :]) / total[:, None, None]


def density_x(cd: CurveData, x) -> np.ndarray:
    """Density of mu against dA in the working x-chart (either sheet)."""
    x = np.atleast_1d(np.asarray(x, dtype=complex))
    a = coefficient_values(cd, x) @ cd.ortho
    denominator = np.prod(np.abs(x[:, None] - cd.working[None, :]), axis=1)
    return np.sum(np.abs(a) ** 2, axis=1) / denominator / cd.genus


def density_t(cd: CurveData, branch_index: int, t) -> np.ndarray:
    """Density of mu in the chart x = alpha_i + t^2 around branch point i."""
    t = np.atleast_1d(np.asarray(t, dtype=complex))
    x = cd.working[branch_index] + t ** 2
    a = coefficient_values(cd, x) @ cd.ortho
    others = np.delete(cd.working, branch_index)
    denominator = np.prod(np.abs(x[:, None] - others[None, :]), axis=1)
    return 4 * np.sum(np.abs(a) ** 2, axis=1) / denominator / cd.genus


def density_u(cd: CurveData, u) -> np.ndarray:
    """Density of mu in the chart u = 1/x around the two points over x = infinity."""
    u = np.atleast_1d(np.asarray(u, dtype=complex))
    a = coefficient_values(cd, u, at_infinity=True) @ cd.ortho
    denominator = np.prod(np.abs(1 - cd.working[None, :] * u[:, None]), axis=1)
    return np.sum(np.abs(a) ** 2, axis=1) / denominator / cd.genus


def canonical_density(cd: CurveData, x, sheet: int = 0, tol: float = 1e-12) -> float:
    """
    Density of mu against planar measure in the original x-chart.

    The density is the same on both sheets; ``sheet`` is accepted for
    symmetry with the surface description.
    """
    if sheet not in (0, 1):
        raise ValueError(f"sheet must be 0 or 1, got {sheet}")
    point = ba.SpherePoint.finite(x)
    for k, p in enumerate(cd.bs.points):
        if not p.is_infinity and abs(p.value - point.value) <= tol * max(1.0, abs(p.value)):
            raise AtBranchPointError(f"x={x!r} is branch point {k + 1}")
    m = cd.to_working
    w = m(point)
    if w.is_infinity:
        raise AtBranchPointError(f"x={x!r} maps to infinity in working coordinates")
    derivative = m.determinant / (complex(m.c) * complex(x) + complex(m.d)) ** 2
    return float(density_x(cd, w.value)[0] * abs(derivative) ** 2)
