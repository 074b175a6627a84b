"""
Genus-one closed forms.

Theta series, the modulus of a four-point double cover by the
arithmetic-geometric mean, and the canonical Green's function of a flat
torus C/(Z + tau Z) with its unit-mass flat measure:

    g(z, 0) = log|theta1(z, tau)| - pi Im(z)^2 / Im(tau) + C(tau)

with C(tau) fixed numerically by the mean-zero condition. These values are
the exact oracle the mesh solver is checked against.
"""
import logging
from dataclasses import dataclass
from functools import lru_cache
from itertools import permutations
from typing import Optional

import numpy as np

from . import branch_algebra as ba
from .exceptions import (
    BadModulusError,
    ClosedFormMismatchError,
    NotGenusOneError,
    OriginSingularityError,
)

logger = logging.getLogger(__name__)

THETA_RTOL = 1e-15
AGM_RTOL = 1e-15
GREEN_CONSTANT_TOL = 1e-9
MAX_SERIES_TERMS = 400
MAX_AGM_STEPS = 100
WEIERSTRASS_TOL = 1e-7


@dataclass(frozen=True)
class Torus:
    tau: complex

    def __post_init__(self):
        if complex(self.tau).imag <= 0:
            raise BadModulusError(f"Im(tau) must be positive, got tau={self.tau!r}")


@dataclass(frozen=True)
class TorusPoint:
    """A point of C/(Z + tau Z), stored as s + t*tau with 0 <= s, t < 1."""
    z: complex

    @classmethod
    def reduced(cls, z, torus: Torus) -> "TorusPoint":
        s, t = lattice_coordinates(z, torus.tau)
        return cls(complex(s % 1.0 + (t % 1.0) * torus.tau))


@dataclass(frozen=True)
class Uniformization:
    """
    Result of uniformizing a genus-one branch set.

    ``half_periods[k]`` is the torus point over branch point k (0 for the point
    sent to the origin). ``lambda_residual`` compares the Legendre parameter
    of the branch set with theta2^4/theta3^4 at the computed tau.
    """
    tau: complex
    half_periods: tuple
    legendre: complex
    permutation: tuple
    infinite_index: int
    lambda_residual: float


@dataclass(frozen=True)
class GreenCheck:
    value: float
    closed_form: float
    residual: float


def _check_tau(tau) -> complex:
    if isinstance(tau, Torus):
        return complex(tau.tau)
    tau = complex(tau)
    if tau.imag <= 0:
        raise BadModulusError(f"Im(tau) must be positive, got tau={tau!r}")
    return tau


def lattice_coordinates(z, tau):
    """Real (s, t) with z = s + t*tau."""
    z = np.asarray(z, dtype=complex)
    t = z.imag / tau.imag
    s = z.real - t * tau.real
    return s, t


# theta functions

def theta1(z, tau, rtol: float = THETA_RTOL):
    """
    First Jacobi theta function, 2 sum_n (-1)^n q^((n+1/2)^2) sin((2n+1) pi z), q = e^(i pi tau).

    Accepts scalars or arrays for z.
    """
    tau = _check_tau(tau)
    z_arr = np.asarray(z, dtype=complex)
    total = np.zeros_like(z_arr)
    for n in range(MAX_SERIES_TERMS):
        term = 2 * (-1) ** n * np.exp(1j * np.pi * tau * (n + 0.5) ** 2) * np.sin((2 * n + 1) * np.pi * z_arr)
        total = total + term
        if np.all(np.abs(term) <= rtol * np.abs(total)):
            break
    else:
        logger.warning(f"stage=theta1 tau={tau} terms={MAX_SERIES_TERMS} converged=False")
    return complex(total) if total.ndim == 0 else total


def theta2(tau, rtol: float = THETA_RTOL) -> complex:
    tau = _check_tau(tau)
    total = 0j
    for n in range(MAX_SERIES_TERMS):
        term = 2 * np.exp(1j * np.pi * tau * (n + 0.5) ** 2)
        total += term
        if abs(term) <= rtol * abs(total):
            break
    return complex(total)


def theta3(tau, rtol: float = THETA_RTOL) -> complex:
    tau = _check_tau(tau)
    total = 1 + 0j
    for n in range(1, MAX_SERIES_TERMS):
        term = 2 * np.exp(1j * np.pi * tau * n * n)
        total += term
        if abs(term) <= rtol * abs(total):
            break
    return complex(total)


def lambda_of_tau(tau) -> complex:
    """Modular lambda function theta2^4 / theta3^4."""
    return (theta2(tau) / theta3(tau)) ** 4


def dedekind_eta(tau, rtol: float = THETA_RTOL) -> complex:
    tau = _check_tau(tau)
    log_prod = 1j * np.pi * tau / 12
    for n in range(1, MAX_SERIES_TERMS):
        factor = np.exp(2j * np.pi * n * tau)
        log_prod += np.log1p(-factor)
        if abs(factor) <= rtol:
            break
    return complex(np.exp(log_prod))


def reduce_modulus(tau):
    """
    Move tau into the standard fundamental domain of SL2(Z).

    Returns (tau', (a, b, c, d)) with tau' = (a tau + b) / (c tau + d).
    """
    tau = _check_tau(tau)
    a, b, c, d = 1, 0, 0, 1
    for _ in range(1000):
        shift = round(tau.real)
        if shift:
            tau -= shift
            a, b = a - shift * c, b - shift * d
        if abs(tau) < 1 - 1e-14:
            tau = -1 / tau
            a, b, c, d = -c, -d, a, b
        else:
            break
    return tau, (a, b, c, d)


# Green's function of the flat torus

def _smooth_part(z, tau):
    """log|theta1(z)/z| - pi Im(z)^2 / Im(tau), smooth on the centred parallelogram."""
    return np.log(np.abs(theta1(z, tau) / z)) - np.pi * z.imag ** 2 / tau.imag


def _parallelogram_integral(tau: complex, n: int) -> float:
    """
    Integral of log|theta1| - pi y^2/Im(tau) over the centred fundamental parallelogram.

    The parallelogram is split into four triangles at the origin and each one
    integrated in polar coordinates: the log|z| part in closed form along the
    ray, the smooth remainder by tensor Gauss-Legendre.
    """
    x, w = np.polynomial.legendre.leggauss(n)
    corners = [0.5 + 0.5 * tau, -0.5 + 0.5 * tau, -0.5 - 0.5 * tau, 0.5 - 0.5 * tau]
    total = 0.0
    for k in range(4):
        p, q = corners[k], corners[(k + 1) % 4]
        edge = q - p
        theta_a, theta_b = np.angle(p), np.angle(q)
        if theta_b <= theta_a:
            theta_b += 2 * np.pi
        theta = theta_a + (theta_b - theta_a) * (x + 1) / 2
        w_theta = w * (theta_b - theta_a) / 2
        ray = np.exp(1j * theta)
        radius = (np.conj(p) * edge).imag / (np.conj(ray) * edge).imag

        total += np.sum(w_theta * (radius ** 2 / 2 * np.log(radius) - radius ** 2 / 4))

        r = np.outer(radius, (x + 1) / 2)
        w_r = np.outer(radius / 2, w)
        smooth = _smooth_part(r * ray[:, None], tau)
        total += np.sum(w_theta[:, None] * w_r * r * smooth)
    return float(total)


@lru_cache(maxsize=256)
def green_constant(tau: complex, tol: float = GREEN_CONSTANT_TOL) -> float:
    """Constant C(tau) making the torus Green's function mean zero; equals -log|eta(tau)|."""
    tau = _check_tau(tau)
    n = 8
    previous = _parallelogram_integral(tau, n)
    while n < 512:
        n *= 2
        current = _parallelogram_integral(tau, n)
        change = abs(current - previous) / tau.imag
        if change < tol:
            break
        previous = current
    else:
        logger.warning(f"stage=green_constant tau={tau} nodes={n} change={change:.2e} converged=False")
    logger.debug(f"stage=green_constant tau={tau} nodes={n} change={change:.2e}")
    return -current / tau.imag


def torus_green(z, tau):
    """
    Canonical Green's function g(z, 0) on C/(Z + tau Z).

    ``z`` may be a TorusPoint, a complex number or an array of them. The
    modulus is reduced first and z rescaled accordingly, which leaves the
    intrinsic Green's function unchanged.
    """
    tau = _check_tau(tau)
    if isinstance(z, TorusPoint):
        z = z.z
    reduced, (_, _, c, d) = reduce_modulus(tau)
    z_red = np.asarray(z, dtype=complex) / (c * tau + d)

    s, t = lattice_coordinates(z_red, reduced)
    s = s - np.round(s)
    t = t - np.round(t)
    zc = s + t * reduced
    if np.any(np.abs(zc) < 1e-14):
        raise OriginSingularityError(f"torus_green evaluated at a lattice point (z={z!r})")

    value = np.log(np.abs(theta1(zc, reduced))) - np.pi * zc.imag ** 2 / reduced.imag
    value = value + green_constant(reduced)
    return float(value) if np.ndim(value) == 0 else value


def torsion_points(tau, n: int) -> np.ndarray:
    tau = _check_tau(tau)
    return np.array([(a + b * tau) / n for a in range(n) for b in range(n) if (a, b) != (0, 0)],
                    dtype=complex)


def torsion_energy(tau, n: int) -> float:
    """Sum of g(x, o) over the n^2 - 1 non-trivial n-torsion points."""
    if n < 1:
        raise ValueError(f"N must be positive, got {n}")
    if n == 1:
        return 0.0
    return float(np.sum(torus_green(torsion_points(tau, n), tau)))


def distribution_residual(z, tau, n: int) -> float:
    """g(n z, 0) - sum over n-torsion w of g(z, w)."""
    tau = _check_tau(tau)
    shifts = np.concatenate([[0j], torsion_points(tau, n)])
    return float(torus_green(n * z, tau) - np.sum(torus_green(z - shifts, tau)))


# modulus of a four-point cover

def agm(a: complex, b: complex, rtol: float = AGM_RTOL) -> complex:
    """Arithmetic-geometric mean with the right choice of square root at each step."""
    a, b = complex(a), complex(b)
    for _ in range(MAX_AGM_STEPS):
        a_next = (a + b) / 2
        b_next = np.sqrt(a * b)
        if abs(a_next - b_next) > abs(a_next + b_next):
            b_next = -b_next
        a, b = a_next, complex(b_next)
        if abs(a - b) <= rtol * abs(a):
            break
    return a


def tau_from_legendre(lam: complex) -> complex:
    """tau = i M(1, sqrt(1 - lambda)) / M(1, sqrt(lambda)), for lambda off the real slits."""
    if abs(lam) < 1e-14 or abs(1 - lam) < 1e-14:
        raise NotGenusOneError(f"degenerate Legendre parameter lambda={lam!r}")
    k = np.sqrt(complex(lam))
    k_prime = np.sqrt(complex(1 - lam))
    tau = 1j * agm(1, k_prime) / agm(1, k)
    if tau.imag <= 0:
        raise BadModulusError(f"AGM produced tau={tau!r} for lambda={lam!r}")
    return complex(tau)


def uniformize(bs: ba.BranchSet) -> Uniformization:
    """
    Modulus and branch point to 2-torsion correspondence of a genus-one branch set.

    The point at infinity (or, if there is none, the last point after an
    inversion) goes to the origin. The three finite points e1, e2, e3 are
    ordered so that lambda = (e2 - e3)/(e1 - e3) is the anharmonic image
    closest to 1/2 and then sent to 1/2, (1 + tau)/2 and tau/2.
    """
    if bs.genus != 1 or len(bs) != 4:
        raise NotGenusOneError(f"expected a genus-one branch set, got genus {bs.genus}")
    inf = bs.infinite_index
    if inf is None:
        inf = len(bs) - 1
        bs = ba.apply_mobius(bs, ba.MobiusMap(0, 1, 1, -bs.points[inf].value))
    finite = [k for k in range(4) if k != inf]
    e = {k: bs.points[k].value for k in finite}

    candidates = []
    for perm in permutations(finite):
        e1, e2, e3 = (e[k] for k in perm)
        lam = (e2 - e3) / (e1 - e3)
        candidates.append((abs(lam - 0.5), perm, lam))
    _, perm, lam = min(candidates, key=lambda item: item[0])

    tau = tau_from_legendre(lam)
    half = [0j] * 4
    half[perm[0]] = 0.5 + 0j
    half[perm[1]] = (1 + tau) / 2
    half[perm[2]] = tau / 2
    residual = abs(lambda_of_tau(tau) - lam)
    logger.debug(f"stage=uniformize tau={tau:.12g} lambda={lam:.12g} lambda_residual={residual:.2e}")
    return Uniformization(
        tau=tau,
        half_periods=tuple(half),
        legendre=complex(lam),
        permutation=tuple(perm),
        infinite_index=inf,
        lambda_residual=float(residual),
    )


def tau_from_branch(bs: ba.BranchSet) -> complex:
    return uniformize(bs).tau


def closed_form_weierstrass_green(bs: ba.BranchSet, i: int, j: int) -> float:
    """(1/3) log 2 + (1/12) log|delta_ij|."""
    return float(np.log(2) / 3 + ba.log_delta(bs, i, j).real / 12)


def weierstrass_green_check(bs: ba.BranchSet, i: int, j: int,
                            uniformization: Optional[Uniformization] = None) -> GreenCheck:
    """Green's function at a pair of Weierstrass points, from theta and in closed form."""
    closed = closed_form_weierstrass_green(bs, i, j)
    u = uniformization or uniformize(bs)
    value = torus_green(u.half_periods[i] - u.half_periods[j], u.tau)
    return GreenCheck(value=value, closed_form=closed, residual=abs(value - closed))


def elliptic_weierstrass_green(bs: ba.BranchSet, i: int, j: int, uniformization: Optional[Uniformization] = None,
                               tolerance: float = WEIERSTRASS_TOL) -> float:
    """
    Theta value of g(w_i, w_j), checked against the closed form.

    Raises ClosedFormMismatchError when the two differ by more than ``tolerance``.
    """
    check = weierstrass_green_check(bs, i, j, uniformization)
    if check.residual > tolerance:
        logger.error(f"stage=weierstrass_green pair=({i + 1},{j + 1}) residual={check.residual:.2e}")
        raise ClosedFormMismatchError(
            f"g(w_{i + 1}, w_{j + 1}): theta {check.value:.12g} vs closed form {check.closed_form:.12g}, "
            f"residual {check.residual:.2e} exceeds {tolerance:.1e}")
    return check.value


def genus_one_psi() -> float:
    """Energy of the Weierstrass points of any genus-one surface."""
    return float(np.log(2))
