from django.core.management.base import CommandError

from ... import services
from ...serializers import FamilySpecSerializer
from ..base import EXIT_GATE, SurfaceCommand


class Command(SurfaceCommand):
    help = "Sweep a degenerating family and fit psi and phi/(2h) against log t."

    def add_arguments(self, parser):
        parser.add_argument('--family', required=True, help='Family spec JSON file')
        self.add_resolution_arguments(parser)
        parser.add_argument('--out', help='Report path (default REPORT_DIR/degeneration.json); '
                                          'the CSV table is written next to it')
        parser.add_argument('--tol-thmA', dest='tol_thm_a', type=float, help='Theorem A gate at every t')
        parser.add_argument('--tol-thmB', dest='tol_thm_b', type=float, help='Theorem B gate at every t')
        parser.add_argument('--tol-slope', dest='tol_slope', type=float,
                            help='Gate on |slope_psi - slope_phi|')

    def run(self, family, resolution=None, eigs=None, out=None, tol_thm_a=None, tol_thm_b=None, tol_slope=None,
            **options):
        spec = self.load_spec(family, FamilySpecSerializer)
        report, fit = services.degeneration_report(spec['family'], resolution, eigs, tol_thm_b=tol_thm_b,
                                                   tol_thm_a=tol_thm_a, tol_slope=tol_slope)
        path = services.write_degeneration(report, out or services.default_report_path('degeneration.json'))
        table = services.write_sweep_csv(fit.rows, path.with_suffix('.csv'))

        self.stdout.write(f"slope_psi={fit.slope_psi:.4f} slope_phi={fit.slope_phi:.4f} "
                          f"predicted={fit.predicted_slope:.4f}")
        failed = [g for g in report['gates'] if not g['passed']]
        if failed:
            names = ', '.join(g['name'] for g in failed)
            raise CommandError(f"gates failed: {names} (report written to {path})", returncode=EXIT_GATE)
        self.stdout.write(self.style.SUCCESS(f"all gates passed; report written to {path}, table to {table}"))
