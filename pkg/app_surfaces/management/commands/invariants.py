from django.core.management.base import CommandError

from ... import services
from ...serializers import CurveSpecSerializer
from ..base import EXIT_GATE, SurfaceCommand


class Command(SurfaceCommand):
    help = "Compute g at Weierstrass pairs, psi, phi and the Theorem A/B residuals for one curve."

    def add_arguments(self, parser):
        parser.add_argument('--curve', required=True, help='Curve spec JSON file')
        self.add_resolution_arguments(parser)
        parser.add_argument('--out', help='Report path (default REPORT_DIR/invariants.json)')
        parser.add_argument('--tol-thmA', dest='tol_thm_a', type=float, help='Theorem A gate')
        parser.add_argument('--tol-thmB', dest='tol_thm_b', type=float, help='Theorem B gate')

    def run(self, curve, resolution=None, eigs=None, out=None, tol_thm_a=None, tol_thm_b=None, **options):
        spec = self.load_spec(curve, CurveSpecSerializer)
        report = services.invariants_report(spec['branch_set'], resolution, eigs, tol_thm_a, tol_thm_b)
        path = services.write_invariants(report, out or services.default_report_path('invariants.json'))

        self.stdout.write(f"psi={report['psi']['value']:.6f} phi={report['phi']['value']:.6f} "
                          f"thmB_residual={report['thmB_residual']['value']:.3e}")
        failed = [g for g in report['gates'] if not g['passed']]
        if failed:
            names = ', '.join(g['name'] for g in failed)
            raise CommandError(f"gates failed: {names} (report written to {path})", returncode=EXIT_GATE)
        self.stdout.write(self.style.SUCCESS(f"all gates passed; report written to {path}"))
