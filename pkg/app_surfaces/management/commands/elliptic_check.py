from django.core.management.base import CommandError

from ... import services
from ...serializers import CurveSpecSerializer
from ..base import EXIT_ERROR, EXIT_GATE, SurfaceCommand, parse_complex


class Command(SurfaceCommand):
    help = "Check the genus-one Green's function: torsion energies, distribution relation, closed forms."

    def add_arguments(self, parser):
        source = parser.add_mutually_exclusive_group(required=True)
        source.add_argument('--tau', type=parse_complex, help='Modulus as RE,IM')
        source.add_argument('--curve', help='Genus-one curve spec JSON file')
        parser.add_argument('--max-n', dest='max_n', type=int, default=5, help='Largest torsion order N')
        parser.add_argument('--out', help='Report path (default REPORT_DIR/elliptic.json)')

    def run(self, tau=None, curve=None, max_n=5, out=None, **options):
        if max_n < 2:
            raise CommandError("--max-n must be at least 2", returncode=EXIT_ERROR)
        bs = None
        if curve:
            bs = self.load_spec(curve, CurveSpecSerializer)['branch_set']
            if bs.genus != 1:
                raise CommandError(f"{curve}: expected a genus-one curve, got genus {bs.genus}",
                                   returncode=EXIT_ERROR)
        report = services.elliptic_report(tau=tau, bs=bs, max_n=max_n)
        path = services.write_elliptic(report, out or services.default_report_path('elliptic.json'))

        for row in report['torsion']:
            self.stdout.write(f"N={row['N']} energy={row['energy']['value']:.15f} log N={row['expected']:.15f}")
        failed = [g for g in report['gates'] if not g['passed']]
        if failed:
            names = ', '.join(g['name'] for g in failed)
            raise CommandError(f"gates failed: {names} (report written to {path})", returncode=EXIT_GATE)
        self.stdout.write(self.style.SUCCESS(f"all gates passed; report written to {path}"))
