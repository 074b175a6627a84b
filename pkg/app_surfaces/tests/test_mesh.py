import io

import numpy as np
import pytest
from django.test import SimpleTestCase

from .. import branch_algebra as ba
from .. import mesh as surface_mesh
from .. import periods
from ..exceptions import ResolutionTooLowError, SingularValueError


def genus_one_curve():
    return ba.validate_branch_set([0, 1, 0.5, ba.INFINITY], 1)


def quintic_curve():
    roots = [np.exp(2j * np.pi * k / 5) for k in range(5)]
    return ba.validate_branch_set(roots + [ba.INFINITY], 2)


def log_ratio(cd, i, j):
    """log|(x - alpha_i)/(x - alpha_j)|, zero over infinity."""
    def f(x, sheet):
        finite = np.isfinite(x)
        safe = np.where(finite, x, 0)
        return np.where(finite, np.log(np.abs((safe - cd.working[i]) / (safe - cd.working[j]))), 0.0)
    return f


class GenusOneMeshTests(SimpleTestCase):
    """Mesh of the square-lattice torus."""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.cd = periods.curve_data(genus_one_curve())
        cls.mesh = surface_mesh.build_mesh(cls.cd, resolution=32)

    def test_euler_characteristic(self):
        self.assertEqual(surface_mesh.euler_characteristic(self.mesh), 0)

    def test_euler_characteristic_coarse(self):
        coarse = surface_mesh.build_mesh(self.cd, resolution=16)
        self.assertEqual(surface_mesh.euler_characteristic(coarse), 0)

    def test_weights(self):
        """Test that mu weights are nonnegative and sum to one."""
        self.assertTrue(np.all(self.mesh.mu_weights >= 0))
        self.assertAlmostEqual(self.mesh.mu_weights.sum(), 1.0, places=12)

    def test_raw_mass_close_to_one(self):
        self.assertLess(abs(self.mesh.raw_mass - 1), 2e-2)

    def test_marked_points(self):
        for i, vertex in self.mesh.marked_points.items():
            self.assertAlmostEqual(self.mesh.x[vertex], self.cd.working[i], places=12)
            self.assertEqual(self.mesh.chart[vertex], surface_mesh.CHART_BRANCH + i)

    def test_triangles_positive_in_chart(self):
        self.assertTrue(np.all(self.mesh.tri_areas() > 0))

    def test_integrate_constant(self):
        self.assertAlmostEqual(surface_mesh.integrate(self.mesh, lambda x, sheet: np.ones(len(x))), 1.0, places=12)

    def test_involution_symmetry(self):
        """Test that swapping sheet labels leaves the integral of a sheet-symmetric function unchanged."""
        def f(x, sheet):
            return np.where(np.isfinite(x), np.abs(x) ** 2 / (1 + np.abs(x) ** 2), 1.0)

        direct = surface_mesh.integrate(self.mesh, f)
        swapped = surface_mesh.integrate(self.mesh, lambda x, sheet: f(x, 1 - sheet))
        self.assertAlmostEqual(direct, swapped, places=12)

    def test_undeclared_singularity(self):
        with self.assertRaises(SingularValueError):
            surface_mesh.integrate(self.mesh, lambda x, sheet: np.log(np.abs(x - self.cd.working[0])))

    def test_declared_singularity(self):
        """Test that log|f_12| integrates to a finite value once its poles and zeros are declared."""
        marked = self.mesh.marked_points
        value = surface_mesh.integrate(self.mesh, log_ratio(self.cd, 0, 1), {marked[0]: 2.0, marked[1]: -2.0})
        self.assertTrue(np.isfinite(value))

    def test_mesh_gram(self):
        """Test the surface Gram matrix against the bilinear relations."""
        gram = surface_mesh.mesh_gram(self.mesh, self.cd)
        np.testing.assert_allclose(gram, self.cd.gram, rtol=3e-2)

    def test_dump(self):
        stream = io.StringIO()
        surface_mesh.dump_mesh(self.mesh, stream)
        lines = stream.getvalue().splitlines()
        self.assertEqual(len(lines), 1 + self.mesh.n_vertices + self.mesh.n_triangles)
        self.assertTrue(lines[1].startswith("v 0 "))
        self.assertTrue(lines[-1].startswith("f "))
        self.assertIn("inf inf", stream.getvalue())


class GenusTwoMeshTests(SimpleTestCase):
    """Mesh of y^2 = x^5 - 1."""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.cd = periods.curve_data(quintic_curve())
        cls.mesh = surface_mesh.build_mesh(cls.cd, resolution=24)

    def test_euler_characteristic(self):
        self.assertEqual(surface_mesh.euler_characteristic(self.mesh), -2)

    def test_every_branch_point_marked(self):
        self.assertEqual(sorted(self.mesh.marked_points), list(range(6)))

    def test_closed_surface(self):
        e = np.concatenate([self.mesh.triangles[:, [0, 1]], self.mesh.triangles[:, [1, 2]],
                            self.mesh.triangles[:, [2, 0]]])
        _, counts = np.unique(np.sort(e, axis=1), axis=0, return_counts=True)
        self.assertTrue(np.all(counts == 2))

    def test_mesh_gram(self):
        gram = surface_mesh.mesh_gram(self.mesh, self.cd)
        scale = np.max(np.abs(self.cd.gram))
        self.assertLess(np.max(np.abs(gram - self.cd.gram)) / scale, 5e-2)

    def test_resolution_too_low(self):
        with self.assertRaises(ResolutionTooLowError):
            surface_mesh.build_mesh(self.cd, resolution=4)


@pytest.mark.slow
class MeshRefinementTests(SimpleTestCase):
    """Refinement behaviour at acceptance resolutions."""

    def test_raw_mass_converges(self):
        cd = periods.curve_data(quintic_curve())
        errors = [abs(surface_mesh.build_mesh(cd, resolution=r).raw_mass - 1) for r in (32, 64, 128)]
        self.assertLess(errors[2], errors[0])

    def test_mesh_gram_default_resolution(self):
        cd = periods.curve_data(quintic_curve())
        gram = surface_mesh.mesh_gram(surface_mesh.build_mesh(cd, resolution=64), cd)
        scale = np.max(np.abs(cd.gram))
        self.assertLess(np.max(np.abs(gram - cd.gram)) / scale, 2e-2)

    def test_log_integral_stable(self):
        cd = periods.curve_data(quintic_curve())
        values = []
        for r in (64, 128):
            mesh = surface_mesh.build_mesh(cd, resolution=r)
            values.append(surface_mesh.integrate(
                mesh, log_ratio(cd, 0, 1), {mesh.marked_points[0]: 2.0, mesh.marked_points[1]: -2.0}))
        self.assertLess(abs(values[1] - values[0]), 1e-3)


def distance_to_cut(points, a, b):
    s = np.clip(np.real((points - a) * np.conj(b - a)) / abs(b - a) ** 2, 0, 1)
    return np.abs(points - (a + s * (b - a)))


class CutClearanceTests(SimpleTestCase):
    """Plane vertices stay off the branch cuts, so each has a definite sheet."""

    def test_ring_vertices_between_cut_directions(self):
        cd = periods.curve_data(genus_one_curve())
        K = 12
        phases = surface_mesh.ring_phases(cd.working, cd.cut_pairing, K)
        for i, j in cd.cut_pairing:
            for own, other in ((i, j), (j, i)):
                ring = np.angle(surface_mesh._circle(K, 1.0, 0j, phases[own]))
                step = np.angle(np.exp(1j * (ring - np.angle(cd.working[other] - cd.working[own]))))
                self.assertGreater(np.min(np.abs(step)), 0.2 * 2 * np.pi / K)

    def test_point_on_cut_pushed_aside(self):
        points = np.array([0.5 + 0j, 0.5 + 1e-3j, 0.5 + 0.5j, 2.0 + 0j])
        moved = surface_mesh._clear_cuts(points, [(0j, 1 + 0j)], np.full(4, 0.05))
        np.testing.assert_allclose(moved, [0.5 + 0.05j, 0.5 + 0.05j, 0.5 + 0.5j, 2.0 + 0j])

    def test_plane_vertices_clear_of_cuts(self):
        cd = periods.curve_data(quintic_curve())
        mesh = surface_mesh.build_mesh(cd, resolution=40)
        plane = mesh.x[(mesh.chart == surface_mesh.CHART_PLANE) & (mesh.sheet == 0)]
        for a, b in cd.cuts:
            self.assertGreater(np.min(distance_to_cut(plane, a, b)), 1e-6)

    def test_resolution_sweep(self):
        """Test that the mesh closes up at resolutions whose rings used to land on a cut."""
        for bs, expected in ((genus_one_curve(), 0), (quintic_curve(), -2)):
            cd = periods.curve_data(bs)
            for resolution in (16, 24, 32, 48, 64):
                with self.subTest(genus=bs.genus, resolution=resolution):
                    mesh = surface_mesh.build_mesh(cd, resolution=resolution)
                    self.assertEqual(surface_mesh.euler_characteristic(mesh), expected)


@pytest.mark.slow
class FineResolutionSweepTests(SimpleTestCase):

    def test_resolution_sweep(self):
        for bs, expected in ((genus_one_curve(), 0), (quintic_curve(), -2)):
            cd = periods.curve_data(bs)
            for resolution in (80, 96, 128, 160, 192):
                with self.subTest(genus=bs.genus, resolution=resolution):
                    mesh = surface_mesh.build_mesh(cd, resolution=resolution)
                    self.assertEqual(surface_mesh.euler_characteristic(mesh), expected)
