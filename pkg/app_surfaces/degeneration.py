"""
Degenerating families M_t: a cluster of 2h_1 + 1 branch points contracted
by t toward a centre, the remaining 2h_2 + 1 points fixed.

As t -> 0 the surface pinches into M_1 (the cluster plus a node at infinity)
and M_2 (the remaining points plus the cluster centre). psi(M_t) and
phi(M_t) / (2h) both diverge like -(h_1 h_2 / h^2) log t.
"""
import json
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from . import branch_algebra as ba
from .exceptions import BranchSetError, FitUnstableError

logger = logging.getLogger(__name__)

MIN_FIT_POINTS = 4


@dataclass(frozen=True)
class DegenerationFamily:
    base: ba.BranchSet
    cluster: Tuple[int, ...]
    t_values: Tuple[float, ...]
    center: complex

    @property
    def genus(self) -> int:
        return self.base.genus

    @property
    def h1(self) -> int:
        return (len(self.cluster) - 1) // 2

    @property
    def h2(self) -> int:
        return self.genus - self.h1

    @property
    def predicted_slope(self) -> float:
        return -self.h1 * self.h2 / self.genus ** 2


@dataclass
class SweepRow:
    t: float
    log_t: float
    psi: float
    phi: float
    phi_tail_est: float
    thmB_residual: float
    max_thmA_residual: float


@dataclass
class DegenerationFit:
    slope_psi: float
    intercept_psi: float
    slope_phi: float
    intercept_phi: float
    residual_psi: float
    residual_phi: float
    predicted_slope: float
    rows: List[SweepRow] = field(default_factory=list)
    limit_psi: Optional[float] = None
    limit_phi: Optional[float] = None

    @property
    def slope_difference(self) -> float:
        return abs(self.slope_psi - self.slope_phi)

    @property
    def thmB_track(self) -> np.ndarray:
        """psi(M_t) - phi(M_t) / (2h) per t."""
        return np.array([row.thmB_residual for row in self.rows]) + np.log(2)


def load_family(payload) -> DegenerationFamily:
    """
    Family file: a curve spec plus ``cluster`` (1-based indices),
    ``t_values`` and an optional ``center`` (defaults to the cluster mean).
    """
    if isinstance(payload, (str, bytes)):
        payload = json.loads(payload)
    base = ba.load_curve_spec(payload)
    cluster = tuple(int(k) - 1 for k in payload["cluster"])
    center = payload.get("center")
    return make_family(base, cluster, payload["t_values"],
                       None if center is None else ba.parse_point(center).value)


def make_family(base: ba.BranchSet, cluster, t_values, center: Optional[complex] = None) -> DegenerationFamily:
    cluster = tuple(sorted(cluster))
    n = len(base)
    if len(set(cluster)) != len(cluster) or any(not 0 <= k < n for k in cluster):
        raise BranchSetError(f"cluster indices must be distinct and in 1..{n}")
    if len(cluster) % 2 == 0 or not 3 <= len(cluster) <= n - 3:
        raise BranchSetError(f"cluster must hold 2h_1 + 1 points with 1 <= h_1 < {base.genus}, got {len(cluster)}")
    if base.infinite_index in cluster:
        raise BranchSetError("the point at infinity cannot be contracted")
    t_values = tuple(float(t) for t in t_values)
    if len(t_values) < MIN_FIT_POINTS:
        raise BranchSetError(f"need at least {MIN_FIT_POINTS} t values, got {len(t_values)}")
    if any(t <= 0 for t in t_values) or any(b >= a for a, b in zip(t_values, t_values[1:])):
        raise BranchSetError("t values must be positive and strictly decreasing")
    if center is None:
        center = complex(np.mean([base.points[k].value for k in cluster]))
    return DegenerationFamily(base=base, cluster=cluster, t_values=t_values, center=complex(center))


def curve_at(family: DegenerationFamily, t: float) -> ba.BranchSet:
    """M_t: cluster points moved to c + t (alpha - c)."""
    points = []
    for k, p in enumerate(family.base.points):
        if k in family.cluster:
            points.append(ba.SpherePoint.finite(family.center + t * (p.value - family.center)))
        else:
            points.append(p)
    return ba.validate_branch_set(points, family.genus)


def component_curves(family: DegenerationFamily) -> Tuple[ba.BranchSet, ba.BranchSet]:
    """The limit components (cluster + infinity, remaining points + centre)."""
    cluster = [family.base.points[k] for k in family.cluster]
    rest = [p for k, p in enumerate(family.base.points) if k not in family.cluster]
    m1 = ba.validate_branch_set(cluster + [ba.INFINITY], family.h1)
    m2 = ba.validate_branch_set(rest + [ba.SpherePoint.finite(family.center)], family.h2)
    return m1, m2


def limit_predictions(family: DegenerationFamily, psi: Tuple[float, float], phi: Tuple[float, float]):
    """(h_1/h) psi(M_1) + (h_2/h) psi(M_2) and (phi(M_1) + phi(M_2)) / (2h)."""
    h = family.genus
    return ((family.h1 * psi[0] + family.h2 * psi[1]) / h,
            (phi[0] + phi[1]) / (2 * h))


def fit_sweep(family: DegenerationFamily, rows: List[SweepRow], max_residual: float = 0.1) -> DegenerationFit:
    """
    Least-squares lines of psi and phi / (2h) against log t.

    Raises FitUnstableError when either fit leaves an RMS residual above
    ``max_residual``.
    """
    if len(rows) < MIN_FIT_POINTS:
        raise FitUnstableError(f"need at least {MIN_FIT_POINTS} sweep rows, got {len(rows)}")
    log_t = np.array([row.log_t for row in rows])
    psi = np.array([row.psi for row in rows])
    phi_scaled = np.array([row.phi for row in rows]) / (2 * family.genus)

    (slope_psi, intercept_psi), res_psi = _line(log_t, psi)
    (slope_phi, intercept_phi), res_phi = _line(log_t, phi_scaled)
    logger.info(f"stage=fit slope_psi={slope_psi:.4f} slope_phi={slope_phi:.4f} "
                f"predicted={family.predicted_slope:.4f} rms_psi={res_psi:.2e} rms_phi={res_phi:.2e}")
    if max(res_psi, res_phi) > max_residual:
        raise FitUnstableError(f"linear fit residual {max(res_psi, res_phi):.3e} exceeds {max_residual:.3e}")
    return DegenerationFit(
        slope_psi=float(slope_psi), intercept_psi=float(intercept_psi),
        slope_phi=float(slope_phi), intercept_phi=float(intercept_phi),
        residual_psi=res_psi, residual_phi=res_phi,
        predicted_slope=family.predicted_slope, rows=list(rows),
    )


def _line(x, y):
    coefficients = np.polyfit(x, y, 1)
    rms = float(np.sqrt(np.mean((np.polyval(coefficients, x) - y) ** 2)))
    return coefficients, rms
