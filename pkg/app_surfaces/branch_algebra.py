"""
Complex arithmetic on branch configurations of hyperelliptic curves.

A curve y^2 = prod (x - alpha_r) of genus h is given by 2h+2 points on the
Riemann sphere. This module validates such point sets and evaluates the
Moebius-invariant pair quantity delta_ij, its ratios eta_ijk, cross ratios,
the Moebius action and the pair normalization (alpha_i, alpha_j) -> (0, inf).

Indices are 0-based in code; reports print them 1-based.
Products are evaluated as sums of complex logarithms and exponentiated once,
so large exponents (2h(2h+1) reaches 72 at h=4) never overflow.

When infinity is a branch point every factor containing it is dropped, which
gives delta_12 = 1/2 on {0, 1, 2, inf}. For finite sets delta_ij is Moebius
invariant. With infinity present only |delta_ij| is: the dropped factors differ
from the limit of the finite formula by -1 whenever infinity lies outside the
pair, see limit_sign().
"""
import json
import logging
from dataclasses import dataclass
from itertools import combinations
from typing import Optional, Sequence

import numpy as np

from .exceptions import (
    DegenerateMapError,
    DuplicatePointError,
    EqualIndicesError,
    IndexOutOfRangeError,
    MultipleInfinitiesError,
    RepeatedIndicesError,
    WrongCountError,
)

logger = logging.getLogger(__name__)

DEFAULT_COINCIDENCE_TOL = 1e-13


@dataclass(frozen=True)
class SpherePoint:
    """A point of CP^1: a finite complex value, or infinity when ``value`` is None."""
    value: Optional[complex] = None

    @classmethod
    def finite(cls, z) -> "SpherePoint":
        return cls(complex(z))

    @classmethod
    def infinity(cls) -> "SpherePoint":
        return cls(None)

    @property
    def is_infinity(self) -> bool:
        return self.value is None

    def __repr__(self):
        return "SpherePoint(inf)" if self.is_infinity else f"SpherePoint({self.value!r})"


INFINITY = SpherePoint.infinity()


@dataclass(frozen=True)
class BranchSet:
    points: tuple
    genus: int

    def __len__(self):
        return len(self.points)

    @property
    def infinite_index(self) -> Optional[int]:
        for k, p in enumerate(self.points):
            if p.is_infinity:
                return k
        return None

    @property
    def finite_indices(self) -> list:
        return [k for k, p in enumerate(self.points) if not p.is_infinity]

    def finite_values(self) -> np.ndarray:
        """Finite branch values in index order (the infinite point, if any, skipped)."""
        return np.array([p.value for p in self.points if not p.is_infinity], dtype=complex)

    def scale(self) -> float:
        values = self.finite_values()
        return float(max(1.0, np.max(np.abs(values)))) if len(values) else 1.0


@dataclass(frozen=True)
class MobiusMap:
    """z -> (a z + b) / (c z + d)."""
    a: complex
    b: complex
    c: complex
    d: complex

    def __post_init__(self):
        if self.determinant == 0:
            raise DegenerateMapError(f"degenerate Moebius map: ad - bc = 0 for {self}")

    @classmethod
    def identity(cls) -> "MobiusMap":
        return cls(1, 0, 0, 1)

    @property
    def determinant(self) -> complex:
        return complex(self.a) * complex(self.d) - complex(self.b) * complex(self.c)

    def __call__(self, p: SpherePoint) -> SpherePoint:
        a, b, c, d = (complex(v) for v in (self.a, self.b, self.c, self.d))
        if p.is_infinity:
            return INFINITY if c == 0 else SpherePoint.finite(a / c)
        z = p.value
        den = c * z + d
        if den == 0:
            return INFINITY
        return SpherePoint.finite((a * z + b) / den)

    def compose(self, inner: "MobiusMap") -> "MobiusMap":
        """The map z -> self(inner(z))."""
        m = np.array([[self.a, self.b], [self.c, self.d]], dtype=complex)
        n = np.array([[inner.a, inner.b], [inner.c, inner.d]], dtype=complex)
        (a, b), (c, d) = m @ n
        return MobiusMap(a, b, c, d)

    def inverse(self) -> "MobiusMap":
        return MobiusMap(self.d, -self.b, -self.c, self.a)


def validate_branch_set(points: Sequence[SpherePoint], h: int,
                        tol: float = DEFAULT_COINCIDENCE_TOL) -> BranchSet:
    """
    Build a BranchSet of genus h, checking count, infinities and coincidences.

    Finite points closer than ``tol`` times the configuration scale are
    treated as coincident.
    """
    points = tuple(p if isinstance(p, SpherePoint) else SpherePoint.finite(p) for p in points)
    if h < 1:
        raise WrongCountError(f"genus must be positive, got {h}")
    if len(points) != 2 * h + 2:
        raise WrongCountError(f"expected {2 * h + 2} branch points for genus {h}, got {len(points)}")
    n_inf = sum(p.is_infinity for p in points)
    if n_inf > 1:
        raise MultipleInfinitiesError(f"{n_inf} points at infinity")

    finite = [(k, p.value) for k, p in enumerate(points) if not p.is_infinity]
    scale = max([1.0] + [abs(z) for _, z in finite])
    for (k, zk), (l, zl) in combinations(finite, 2):
        if abs(zk - zl) <= tol * scale:
            raise DuplicatePointError(f"branch points {k + 1} and {l + 1} coincide ({zk!r})")
    return BranchSet(points=points, genus=h)


def _check_indices(bs: BranchSet, *indices):
    n = len(bs)
    for k in indices:
        if not 0 <= k < n:
            raise IndexOutOfRangeError(f"index {k} outside 0..{n - 1}")
    if len(set(indices)) != len(indices):
        if len(indices) == 2:
            raise EqualIndicesError(f"indices must differ, got {indices}")
        raise RepeatedIndicesError(f"indices must be pairwise distinct, got {indices}")


def _log_diff(bs: BranchSet, r: int, s: int) -> complex:
    """log(alpha_r - alpha_s), or 0 when a factor involves infinity (it is disregarded)."""
    p, q = bs.points[r], bs.points[s]
    if p.is_infinity or q.is_infinity:
        return 0j
    return np.log(complex(p.value - q.value))


def log_delta(bs: BranchSet, i: int, j: int) -> complex:
    """A logarithm of delta_ij (any branch); its real part is log|delta_ij|."""
    _check_indices(bs, i, j)
    h = bs.genus
    n = len(bs)
    e = 2 * h + 1
    total = 2 * h * e * _log_diff(bs, i, j)
    total += sum(_log_diff(bs, r, s) for r in range(n) for s in range(n) if r != s)
    total -= e * sum(_log_diff(bs, i, r) for r in range(n) if r != i)
    total -= e * sum(_log_diff(bs, j, r) for r in range(n) if r != j)
    return total


def delta(bs: BranchSet, i: int, j: int) -> complex:
    return complex(np.exp(log_delta(bs, i, j)))


def limit_sign(bs: BranchSet, i: int, j: int) -> int:
    """Sign turning delta_ij into the limit of the all-finite formula: -1 when infinity is outside (i, j)."""
    _check_indices(bs, i, j)
    inf = bs.infinite_index
    return -1 if inf is not None and inf not in (i, j) else 1


def delta_log_matrix(bs: BranchSet) -> np.ndarray:
    """Matrix of log|delta_ij| with zeros on the diagonal."""
    n = len(bs)
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i != j:
                out[i, j] = log_delta(bs, i, j).real
    return out


def eta(bs: BranchSet, i: int, j: int, k: int) -> complex:
    """eta_ijk = delta_ik / delta_jk."""
    _check_indices(bs, i, j, k)
    return complex(np.exp(log_delta(bs, i, k) - log_delta(bs, j, k)))


def cross_ratio(bs: BranchSet, i: int, j: int, k: int, r: int) -> complex:
    """
    (a_i - a_k)(a_j - a_r) / ((a_j - a_k)(a_i - a_r)).

    The two factors containing a point at infinity cancel to 1.
    """
    _check_indices(bs, i, j, k, r)
    num = [(i, k), (j, r)]
    den = [(j, k), (i, r)]
    inf = bs.infinite_index
    if inf is not None:
        num = [pair for pair in num if inf not in pair]
        den = [pair for pair in den if inf not in pair]
    value = 1 + 0j
    for a, b in num:
        value *= bs.points[a].value - bs.points[b].value
    for a, b in den:
        value /= bs.points[a].value - bs.points[b].value
    return complex(value)


def apply_mobius(bs: BranchSet, m: MobiusMap) -> BranchSet:
    # Moebius maps are bijections of the sphere; coincidences cannot appear
    # beyond rounding, so only structural validity is re-checked.
    return validate_branch_set([m(p) for p in bs.points], bs.genus, tol=0.0)


def pair_normalizing_map(bs: BranchSet, i: int, j: int) -> MobiusMap:
    """Moebius map sending a_i -> 0, a_j -> inf, with the other 2h images multiplying to 1."""
    _check_indices(bs, i, j)
    ai, aj = bs.points[i], bs.points[j]
    if aj.is_infinity:
        base = MobiusMap(1, -ai.value, 0, 1)
    elif ai.is_infinity:
        base = MobiusMap(0, 1, 1, -aj.value)
    else:
        base = MobiusMap(1, -ai.value, 1, -aj.value)
    rest = [base(p).value for k, p in enumerate(bs.points) if k not in (i, j)]
    log_prod = np.sum(np.log(np.asarray(rest, dtype=complex)))
    c = np.exp(-log_prod / (2 * bs.genus))
    return MobiusMap(c, 0, 0, 1).compose(base)


def normalize_pair(bs: BranchSet, i: int, j: int) -> BranchSet:
    m = pair_normalizing_map(bs, i, j)
    out = BranchSet(points=tuple(m(p) for p in bs.points), genus=bs.genus)
    # pin the exact values the map should produce
    pts = list(out.points)
    pts[i], pts[j] = SpherePoint.finite(0), INFINITY
    return BranchSet(points=tuple(pts), genus=bs.genus)


def log_discriminant(values: Sequence[complex]) -> complex:
    """log of prod_{r != s} (v_r - v_s) over ordered pairs."""
    v = np.asarray(values, dtype=complex)
    total = 0j
    for r in range(len(v)):
        for s in range(len(v)):
            if r != s:
                total += np.log(v[r] - v[s])
    return total


def normalization_constant(bs: BranchSet, i: int, j: int) -> complex:
    """delta_ij, with its limit sign, divided by the discriminant of the pair-normalized remaining 2h points."""
    normalized = normalize_pair(bs, i, j)
    rest = [p.value for k, p in enumerate(normalized.points) if k not in (i, j)]
    return limit_sign(bs, i, j) * complex(np.exp(log_delta(bs, i, j) - log_discriminant(rest)))


# curve-spec files

def parse_point(entry) -> SpherePoint:
    if isinstance(entry, str):
        if entry.strip().lower() in ("inf", "infinity"):
            return INFINITY
        raise ValueError(f"unknown point literal {entry!r}")
    re_part, im_part = entry
    return SpherePoint.finite(complex(float(re_part), float(im_part)))


def format_point(p: SpherePoint):
    return "inf" if p.is_infinity else [float(p.value.real), float(p.value.imag)]


def load_curve_spec(payload) -> BranchSet:
    """Branch set from a curve-spec mapping ``{"genus": h, "branch_points": [...]}``."""
    if isinstance(payload, (str, bytes)):
        payload = json.loads(payload)
    points = [parse_point(e) for e in payload["branch_points"]]
    return validate_branch_set(points, int(payload["genus"]))


def dump_curve_spec(bs: BranchSet) -> dict:
    return {"genus": bs.genus, "branch_points": [format_point(p) for p in bs.points]}
