from pathlib import Path

from ... import services
from ... import mesh as surface_mesh
from ...serializers import CurveSpecSerializer
from ..base import SurfaceCommand


class Command(SurfaceCommand):
    help = "Write the surface mesh of a curve as plain text (vertices, then faces)."

    def add_arguments(self, parser):
        parser.add_argument('--curve', required=True, help='Curve spec JSON file')
        parser.add_argument('--resolution', type=int, help='Mesh resolution R (default from settings)')
        parser.add_argument('--out', help='Output path (default stdout)')

    def run(self, curve, resolution=None, out=None, **options):
        spec = self.load_spec(curve, CurveSpecSerializer)
        _, mesh = services.prepare_mesh(spec['branch_set'], resolution)
        if out:
            path = Path(out)
            path.parent.mkdir(parents=True, exist_ok=True)
            with path.open('w') as stream:
                surface_mesh.dump_mesh(mesh, stream)
            self.stderr.write(f"{mesh.n_vertices} vertices, {mesh.n_triangles} faces written to {path}")
        else:
            surface_mesh.dump_mesh(mesh, self.stdout)
