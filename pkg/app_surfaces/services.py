"""
Service layer: runs the numerical pipeline for the management commands and
turns results into reports.

Every reported number is a measurement block
``{value, module, parameters, error_estimate}``; gates compare a residual
with its tolerance and are evaluated after the report is assembled so the
file is written even when a gate fails.
"""
import csv
import logging
import time
from dataclasses import asdict
from pathlib import Path
from typing import List, Optional

import numpy as np
from django.conf import settings
from rest_framework.renderers import JSONRenderer

from . import branch_algebra as ba
from . import degeneration, elliptic, laplace, periods
from . import mesh as surface_mesh
from .exceptions import GateFailureError
from .serializers import (
    DegenerationReportSerializer,
    EllipticReportSerializer,
    InvariantReportSerializer,
)

logger = logging.getLogger(__name__)

SWEEP_COLUMNS = ['t', 'log_t', 'psi', 'phi', 'phi_tail_est', 'thmB_residual', 'max_thmA_residual']


def setting(key: str, override=None):
    """CLI override, else ``settings.SURFACES[key]``."""
    return settings.SURFACES[key] if override is None else override


def measurement(value, module: str, parameters: dict, error_estimate=None) -> dict:
    return {
        'value': value,
        'module': module,
        'parameters': parameters,
        'error_estimate': error_estimate,
    }


def gate(name: str, value: float, tolerance: float) -> dict:
    passed = bool(abs(value) <= tolerance)
    if not passed:
        logger.warning(f"stage=gate name={name} value={value:.3e} tolerance={tolerance:.3e}")
    return {'name': name, 'value': float(value), 'tolerance': float(tolerance), 'passed': passed}


def check_gates(gates: List[dict]):
    """Raise GateFailureError for the first failed gate."""
    for g in gates:
        if not g['passed']:
            raise GateFailureError(g['name'], g['value'], g['tolerance'])


def quadrature_parameters() -> dict:
    return {
        'rtol': setting('PERIOD_RTOL'),
        'max_nodes': setting('PERIOD_MAX_NODES'),
        'near_degenerate': setting('NEAR_DEGENERATE'),
    }


def prepare_mesh(bs: ba.BranchSet, resolution: Optional[int] = None):
    """Curve data and mesh for one branch set."""
    cd = periods.curve_data(bs, **quadrature_parameters())
    mesh = surface_mesh.build_mesh(
        cd,
        resolution=setting('RESOLUTION', resolution),
        ring_points=setting('RING_POINTS'),
    )
    return cd, mesh


# invariants

def compute_invariants(bs: ba.BranchSet, resolution: Optional[int] = None, eigs: Optional[int] = None,
                       tail_tolerance: Optional[float] = None):
    """Full pipeline for one curve: (curve data, mesh, laplace.InvariantReport)."""
    start = time.monotonic()
    cd, mesh = prepare_mesh(bs, resolution)
    report = laplace.invariant_report(mesh, cd, setting('EIGS', eigs),
                                      tail_tolerance=tail_tolerance, seed=setting('SOLVER_SEED'))
    logger.info(f"stage=pipeline genus={bs.genus} vertices={mesh.n_vertices} "
                f"elapsed={time.monotonic() - start:.1f}s")
    return cd, mesh, report


def invariants_report(bs: ba.BranchSet, resolution: Optional[int] = None, eigs: Optional[int] = None,
                      tol_thm_a: Optional[float] = None, tol_thm_b: Optional[float] = None) -> dict:
    """Report dict for ``manage.py invariants``; gates are listed, not raised."""
    tol_thm_a = setting('TOL_THM_A', tol_thm_a)
    tol_thm_b = setting('TOL_THM_B', tol_thm_b)
    # tail / (2h) stays within half the Theorem B gate
    cd, mesh, result = compute_invariants(bs, resolution, eigs, tail_tolerance=tol_thm_b * bs.genus)

    params = {'resolution': mesh.resolution, 'eigs': len(result.eigenvalues) - 1,
              'ring_points': mesh.ring_points, 'vertices': mesh.n_vertices,
              'period_nodes': cd.nodes, 'period_error': float(cd.error_estimate),
              'mass_defect': float(mesh.raw_mass - 1)}

    report = {
        'curve': ba.dump_curve_spec(bs),
        'genus': bs.genus,
        'parameters': params,
        'normalization_constant': measurement(
            ba.normalization_constant(bs, 0, 1), 'branch_algebra', {'i': 1, 'j': 2}),
        'delta_log_matrix': measurement(result.delta_log_matrix, 'branch_algebra', {}),
        'green_matrix': measurement(result.green_matrix, 'laplace', params, result.green_asymmetry),
        'psi': measurement(result.psi, 'laplace', params, result.green_asymmetry),
        'phi': measurement(result.phi.value, 'laplace', params, result.phi.tail),
        'thmA_residuals': measurement(result.thmA_residuals, 'laplace', params),
        'thmA_spread': measurement(result.thmA_spread, 'laplace', params),
        'thmB_residual': measurement(result.thmB_residual, 'laplace', params, result.phi.tail / (2 * bs.genus)),
        'four_point_max': measurement(result.four_point_max, 'laplace', params),
        'row_sum_spread': measurement(result.row_sum_spread, 'laplace', params),
        'inversion_max': measurement(result.inversion_max, 'laplace', params),
    }
    gates = [
        gate('thmA_max', result.thmA_max, tol_thm_a),
        gate('thmA_spread', result.thmA_spread, setting('TOL_THM_A_SPREAD')),
        gate('thmB_residual', result.thmB_residual, tol_thm_b),
    ]
    if bs.genus == 1:
        report['genus_one'] = genus_one_checks(bs)
        gates.append(gate('phi_genus_one', result.phi.value, setting('TOL_PHI_GENUS_ONE')))
        gates.append(gate('weierstrass_closed_form', report['genus_one']['max_closed_form_residual'],
                          setting('TOL_ELLIPTIC')))
    report['gates'] = gates
    return report


def genus_one_checks(bs: ba.BranchSet) -> dict:
    """Theta-function values at Weierstrass pairs against the closed forms."""
    u = elliptic.uniformize(bs)
    pairs = []
    for i in range(4):
        for j in range(i + 1, 4):
            check = elliptic.weierstrass_green_check(bs, i, j, u)
            pairs.append({'i': i + 1, 'j': j + 1, 'theta': check.value,
                          'closed_form': check.closed_form, 'residual': check.residual})
    return {
        'tau': [float(u.tau.real), float(u.tau.imag)],
        'lambda_residual': u.lambda_residual,
        'pairs': pairs,
        'psi_closed_form': elliptic.genus_one_psi(),
        'max_closed_form_residual': max(p['residual'] for p in pairs),
    }


# elliptic

def elliptic_report(tau: Optional[complex] = None, bs: Optional[ba.BranchSet] = None, max_n: int = 5) -> dict:
    """Report dict for ``manage.py elliptic_check``, from a modulus or a genus-one curve."""
    tol = setting('TOL_ELLIPTIC')
    report = {}
    gates = []
    if bs is not None:
        checks = genus_one_checks(bs)
        tau = complex(*checks['tau'])
        report['curve'] = ba.dump_curve_spec(bs)
        report['weierstrass'] = checks['pairs']
        gates.append(gate('weierstrass_closed_form', checks['max_closed_form_residual'], tol))
        gates.append(gate('lambda_residual', checks['lambda_residual'], tol))
    torus = elliptic.Torus(tau)
    reduced, _ = elliptic.reduce_modulus(torus.tau)
    constant_tol = setting('GREEN_CONSTANT_TOL')
    constant = elliptic.green_constant(reduced, constant_tol)
    eta_residual = constant + np.log(abs(elliptic.dedekind_eta(reduced)))
    params = {'tau': [float(reduced.real), float(reduced.imag)]}

    z = 0.1234 + 0.3456 * reduced
    torsion = []
    for n in range(2, max_n + 1):
        energy = elliptic.torsion_energy(reduced, n)
        distribution = elliptic.distribution_residual(z, reduced, n)
        torsion.append({
            'N': n,
            'energy': measurement(energy, 'elliptic', {**params, 'N': n}),
            'expected': float(np.log(n)),
            'distribution_residual': measurement(distribution, 'elliptic', {**params, 'N': n}),
        })
        gates.append(gate(f'torsion_energy_{n}', energy - np.log(n), tol))
        gates.append(gate(f'distribution_{n}', distribution, tol))
    gates.append(gate('green_constant_eta', eta_residual, constant_tol))

    report.update({
        'tau': complex(torus.tau),
        'reduced_tau': complex(reduced),
        'green_constant': measurement(constant, 'elliptic', params, constant_tol),
        'eta_residual': measurement(eta_residual, 'elliptic', params),
        'torsion': torsion,
        'gates': gates,
    })
    return report


# degeneration

def component_invariants(bs: ba.BranchSet, resolution: Optional[int], eigs: Optional[int]):
    """(psi, phi) of a limit component; genus one uses the closed forms."""
    if bs.genus == 1:
        return elliptic.genus_one_psi(), 0.0
    _, _, result = compute_invariants(bs, resolution, eigs)
    return result.psi, result.phi.value


def sweep(family: degeneration.DegenerationFamily, resolution: Optional[int] = None,
          eigs: Optional[int] = None) -> List[degeneration.SweepRow]:
    """Invariants of M_t for each t, in the order given."""
    rows = []
    for t in family.t_values:
        _, _, result = compute_invariants(degeneration.curve_at(family, t), resolution, eigs)
        rows.append(degeneration.SweepRow(
            t=t,
            log_t=float(np.log(t)),
            psi=result.psi,
            phi=result.phi.value,
            phi_tail_est=result.phi.tail,
            thmB_residual=result.thmB_residual,
            max_thmA_residual=result.thmA_max,
        ))
        logger.info(f"stage=sweep t={t:.3e} psi={result.psi:.6f} phi={result.phi.value:.6f} "
                    f"thmB={result.thmB_residual:.2e}")
    return rows


def degeneration_report(family: degeneration.DegenerationFamily, resolution: Optional[int] = None,
                        eigs: Optional[int] = None, tol_thm_b: Optional[float] = None,
                        tol_thm_a: Optional[float] = None, tol_slope: Optional[float] = None):
    """Report dict and fit for ``manage.py degenerate``; tolerances default to settings."""
    tol_thm_a = setting('TOL_THM_A', tol_thm_a)
    tol_thm_b = setting('TOL_THM_B', tol_thm_b)
    tol_slope = setting('TOL_SLOPE', tol_slope)
    rows = sweep(family, resolution, eigs)
    fit = degeneration.fit_sweep(family, rows, max_residual=setting('TOL_FIT_RESIDUAL'))

    m1, m2 = degeneration.component_curves(family)
    psi1, phi1 = component_invariants(m1, resolution, eigs)
    psi2, phi2 = component_invariants(m2, resolution, eigs)
    fit.limit_psi, fit.limit_phi = degeneration.limit_predictions(family, (psi1, psi2), (phi1, phi2))

    params = {'resolution': setting('RESOLUTION', resolution), 'eigs': setting('EIGS', eigs)}
    report = {
        'family': {
            **ba.dump_curve_spec(family.base),
            'cluster': [k + 1 for k in family.cluster],
            'center': [family.center.real, family.center.imag],
            't_values': list(family.t_values),
        },
        'parameters': params,
        'h1': family.h1,
        'h2': family.h2,
        'slope_psi': measurement(fit.slope_psi, 'degeneration', params, fit.residual_psi),
        'slope_phi': measurement(fit.slope_phi, 'degeneration', params, fit.residual_phi),
        'intercept_psi': fit.intercept_psi,
        'intercept_phi': fit.intercept_phi,
        'predicted_slope': fit.predicted_slope,
        'limit_psi': measurement(fit.limit_psi, 'degeneration', params),
        'limit_phi': measurement(fit.limit_phi, 'degeneration', params),
        'rows': [asdict(row) for row in rows],
        'gates': [gate('slope_difference', fit.slope_difference, tol_slope)]
                 + [gate(f'thmA_max_t{k + 1}', row.max_thmA_residual, tol_thm_a) for k, row in enumerate(rows)]
                 + [gate(f'thmB_residual_t{k + 1}', row.thmB_residual, tol_thm_b) for k, row in enumerate(rows)],
    }
    return report, fit


# output

def render(serializer_class, report: dict) -> bytes:
    return JSONRenderer().render(serializer_class(report).data, renderer_context={'indent': 2})


def write_report(serializer_class, report: dict, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(render(serializer_class, report))
    logger.info(f"stage=report path={path}")
    return path


def write_invariants(report: dict, path) -> Path:
    return write_report(InvariantReportSerializer, report, path)


def write_elliptic(report: dict, path) -> Path:
    return write_report(EllipticReportSerializer, report, path)


def write_degeneration(report: dict, path) -> Path:
    return write_report(DegenerationReportSerializer, report, path)


def write_sweep_csv(rows: List[degeneration.SweepRow], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open('w', newline='') as handle:
        writer = csv.DictWriter(handle, fieldnames=SWEEP_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({key: repr(float(value)) for key, value in asdict(row).items()})
    return path


def default_report_path(name: str) -> Path:
    return Path(setting('REPORT_DIR')) / name
