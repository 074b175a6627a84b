import cmath
from itertools import permutations

import numpy as np
from django.test import SimpleTestCase

from .. import branch_algebra as ba
from ..exceptions import (
    DegenerateMapError,
    DuplicatePointError,
    EqualIndicesError,
    IndexOutOfRangeError,
    MultipleInfinitiesError,
    RepeatedIndicesError,
    WrongCountError,
)


def random_branch_set(rng, h, with_infinity=False):
    n_finite = 2 * h + 1 if with_infinity else 2 * h + 2
    values = rng.normal(size=n_finite) + 1j * rng.normal(size=n_finite)
    points = [ba.SpherePoint.finite(v) for v in values]
    if with_infinity:
        points.insert(int(rng.integers(0, len(points) + 1)), ba.INFINITY)
    return ba.validate_branch_set(points, h)


def random_mobius(rng):
    a, b, c, d = rng.normal(size=4) + 1j * rng.normal(size=4)
    return ba.MobiusMap(a, b, c, d)


def square_set():
    """{0, 1, 2, inf} at genus 1."""
    return ba.validate_branch_set([0, 1, 2, ba.INFINITY], 1)


class ValidateBranchSetTests(SimpleTestCase):
    """Construction and validation of branch sets."""

    def test_valid_set(self):
        """Test that {0,1,2,inf} at genus 1 is accepted."""
        bs = square_set()
        self.assertEqual(len(bs), 4)
        self.assertEqual(bs.genus, 1)
        self.assertEqual(bs.infinite_index, 3)

    def test_duplicate_point(self):
        """Test that coincident entries are rejected."""
        with self.assertRaises(DuplicatePointError):
            ba.validate_branch_set([0, 1, 1, ba.INFINITY], 1)

    def test_near_duplicate_point(self):
        """Test that points closer than the coincidence tolerance are rejected."""
        with self.assertRaises(DuplicatePointError):
            ba.validate_branch_set([0, 1, 1 + 1e-15, ba.INFINITY], 1)

    def test_wrong_count(self):
        """Test that 3 points for genus 1 are rejected."""
        with self.assertRaises(WrongCountError):
            ba.validate_branch_set([0, 1, ba.INFINITY], 1)

    def test_multiple_infinities(self):
        with self.assertRaises(MultipleInfinitiesError):
            ba.validate_branch_set([0, 1, ba.INFINITY, ba.INFINITY], 1)

    def test_sphere_point_kinds(self):
        self.assertTrue(ba.INFINITY.is_infinity)
        self.assertFalse(ba.SpherePoint.finite(0).is_infinity)
        self.assertEqual(ba.SpherePoint.finite(2).value, 2 + 0j)


class DeltaTests(SimpleTestCase):
    """Tests for delta_ij, eta_ijk and their identities."""

    def test_delta_known_value(self):
        """Test delta_12 = 1/2 on {0,1,2,inf} (1-based indices 1, 2)."""
        self.assertAlmostEqual(ba.delta(square_set(), 0, 1), 0.5, places=12)

    def test_delta_other_entries(self):
        bs = square_set()
        self.assertAlmostEqual(ba.delta(bs, 0, 2), -4.0, places=11)
        self.assertAlmostEqual(ba.delta(bs, 0, 3), -0.5, places=12)

    def test_delta_index_errors(self):
        bs = square_set()
        with self.assertRaises(IndexOutOfRangeError):
            ba.delta(bs, 0, 4)
        with self.assertRaises(EqualIndicesError):
            ba.delta(bs, 2, 2)

    def test_row_product_is_unity(self):
        """Test that prod_{j != i} delta_ij = 1 for random sets across genera."""
        rng = np.random.default_rng(7)
        for trial in range(100):
            h = 1 + trial % 4
            bs = random_branch_set(rng, h, with_infinity=bool(trial % 3 == 0))
            for i in range(len(bs)):
                log_prod = sum(ba.log_delta(bs, i, j) for j in range(len(bs)) if j != i)
                self.assertLess(abs(cmath.exp(log_prod) - 1), 1e-10)

    def test_mobius_invariance(self):
        """Test that delta is unchanged by random Moebius maps of finite sets."""
        rng = np.random.default_rng(11)
        for trial in range(100):
            h = 1 + trial % 4
            bs = random_branch_set(rng, h)
            moved = ba.apply_mobius(bs, random_mobius(rng))
            i, j = rng.choice(len(bs), size=2, replace=False)
            ratio = cmath.exp(ba.log_delta(moved, i, j) - ba.log_delta(bs, i, j))
            self.assertLess(abs(ratio - 1), 1e-9)

    def test_mobius_invariance_with_infinity(self):
        """Test |delta| invariance and the limit-sign relation when infinity is a branch point."""
        rng = np.random.default_rng(13)
        for h in (1, 2, 3, 4):
            for _ in range(25):
                bs = random_branch_set(rng, h, with_infinity=True)
                moved = ba.apply_mobius(bs, random_mobius(rng))
                i, j = (int(k) for k in rng.choice(len(bs), size=2, replace=False))
                ratio = cmath.exp(ba.log_delta(moved, i, j) - ba.log_delta(bs, i, j))
                self.assertLess(abs(abs(ratio) - 1), 1e-9)
                signed = ratio * ba.limit_sign(moved, i, j) * ba.limit_sign(bs, i, j)
                self.assertLess(abs(signed - 1), 1e-9)

    def test_infinity_outside_pair_sign(self):
        """Test that sending infinity to a finite point fixes the limit sign of delta_12 on {0,1,2,inf}."""
        bs = square_set()
        moved = ba.apply_mobius(bs, ba.MobiusMap(0, 1, 1, 0))
        self.assertTrue(moved.points[0].is_infinity)
        self.assertAlmostEqual(ba.delta(bs, 0, 1), 0.5, places=12)
        self.assertAlmostEqual(ba.delta(moved, 0, 1), -0.5, places=12)
        self.assertEqual(ba.limit_sign(bs, 0, 1), -1)
        self.assertEqual(ba.limit_sign(moved, 0, 1), 1)
        shifted = ba.apply_mobius(bs, ba.MobiusMap(1, 0, 1, -5))
        self.assertIsNone(shifted.infinite_index)
        self.assertAlmostEqual(ba.delta(shifted, 0, 1), -0.5, places=10)

    def test_genus_one_magnitude_identity(self):
        """Test |delta_ij| = |a_i - a_j|^2 / (|a_i - a_k| |a_j - a_k|) at genus 1 with inf."""
        rng = np.random.default_rng(3)
        for _ in range(20):
            values = rng.normal(size=3) + 1j * rng.normal(size=3)
            bs = ba.validate_branch_set(list(values) + [ba.INFINITY], 1)
            for i, j, k in permutations(range(3)):
                expected = abs(values[i] - values[j]) ** 2 / (
                    abs(values[i] - values[k]) * abs(values[j] - values[k]))
                self.assertAlmostEqual(abs(ba.delta(bs, i, j)) / expected, 1.0, places=12)

    def test_eta_symmetry(self):
        rng = np.random.default_rng(5)
        bs = random_branch_set(rng, 2)
        self.assertAlmostEqual(ba.eta(bs, 0, 1, 2) * ba.eta(bs, 1, 0, 2), 1.0, places=10)

    def test_eta_product_over_k(self):
        """Test that prod_{k != i,j} eta_ijk = 1."""
        rng = np.random.default_rng(6)
        bs = random_branch_set(rng, 3, with_infinity=True)
        product = np.prod([ba.eta(bs, 0, 1, k) for k in range(2, len(bs))])
        self.assertLess(abs(product - 1), 1e-9)

    def test_eta_definition(self):
        bs = square_set()
        self.assertAlmostEqual(ba.eta(bs, 0, 1, 2), ba.delta(bs, 0, 2) / ba.delta(bs, 1, 2), places=12)

    def test_eta_repeated_indices(self):
        with self.assertRaises(RepeatedIndicesError):
            ba.eta(square_set(), 0, 1, 1)

    def test_delta_log_matrix(self):
        bs = square_set()
        matrix = ba.delta_log_matrix(bs)
        self.assertEqual(matrix.shape, (4, 4))
        self.assertEqual(matrix[2, 2], 0.0)
        self.assertAlmostEqual(matrix[0, 1], np.log(0.5), places=12)


class CrossRatioTests(SimpleTestCase):
    """Tests for the four-point cross ratio."""

    def test_known_value_with_infinity(self):
        """Test cross ratio (1,2,3,4) of {0,1,2,inf} is 2."""
        self.assertAlmostEqual(ba.cross_ratio(square_set(), 0, 1, 2, 3), 2.0, places=14)

    def test_infinity_limit(self):
        """Test that the structural infinity rule matches a large finite stand-in."""
        exact = ba.cross_ratio(square_set(), 0, 1, 2, 3)
        for far in (1e6, 1e8):
            approx = ba.cross_ratio(ba.validate_branch_set([0, 1, 2, far], 1), 0, 1, 2, 3)
            self.assertLess(abs(approx - exact), 10 / far)

    def test_power_identity(self):
        """Test cross_ratio^(2h(2h+1)) = delta_ik delta_jk^-1 delta_jr delta_ir^-1."""
        rng = np.random.default_rng(13)
        for h in (1, 2, 3):
            bs = random_branch_set(rng, h, with_infinity=(h == 2))
            e = 2 * h * (2 * h + 1)
            for i, j, k, r in permutations(range(len(bs)), 4):
                lhs = ba.cross_ratio(bs, i, j, k, r) ** e
                rhs = cmath.exp(ba.log_delta(bs, i, k) - ba.log_delta(bs, j, k)
                                + ba.log_delta(bs, j, r) - ba.log_delta(bs, i, r))
                self.assertLess(abs(lhs - rhs) / abs(rhs), 1e-9)

    def test_mobius_invariance(self):
        rng = np.random.default_rng(17)
        bs = random_branch_set(rng, 2)
        moved = ba.apply_mobius(bs, random_mobius(rng))
        before = ba.cross_ratio(bs, 0, 1, 2, 3)
        after = ba.cross_ratio(moved, 0, 1, 2, 3)
        self.assertLess(abs(after - before) / abs(before), 1e-10)


class MobiusTests(SimpleTestCase):
    """Tests for the Moebius action and pair normalization."""

    def test_identity(self):
        bs = square_set()
        self.assertEqual(ba.apply_mobius(bs, ba.MobiusMap.identity()).points, bs.points)

    def test_inversion(self):
        """Test z -> 1/z maps {0,1,2,inf} to {inf,1,1/2,0}."""
        moved = ba.apply_mobius(square_set(), ba.MobiusMap(0, 1, 1, 0))
        self.assertTrue(moved.points[0].is_infinity)
        self.assertEqual(moved.points[1].value, 1)
        self.assertEqual(moved.points[2].value, 0.5)
        self.assertEqual(moved.points[3].value, 0)

    def test_translation(self):
        moved = ba.apply_mobius(square_set(), ba.MobiusMap(1, 5, 0, 1))
        self.assertEqual([p.value for p in moved.points[:3]], [5, 6, 7])
        self.assertTrue(moved.points[3].is_infinity)

    def test_degenerate_map(self):
        with self.assertRaises(DegenerateMapError):
            ba.MobiusMap(1, 2, 2, 4)

    def test_compose_and_inverse(self):
        rng = np.random.default_rng(19)
        m = random_mobius(rng)
        z = ba.SpherePoint.finite(0.3 - 0.2j)
        back = m.inverse()(m(z))
        self.assertAlmostEqual(back.value, z.value, places=12)

    def test_normalize_pair(self):
        """Test that normalize_pair sends a_i to 0, a_j to inf and the rest to product 1."""
        rng = np.random.default_rng(23)
        for h in (1, 2, 4):
            bs = random_branch_set(rng, h, with_infinity=True)
            for i, j in [(0, 1), (2, 0), (1, bs.infinite_index)]:
                if i == j:
                    continue
                normalized = ba.normalize_pair(bs, i, j)
                self.assertEqual(normalized.points[i].value, 0)
                self.assertTrue(normalized.points[j].is_infinity)
                rest = [p.value for k, p in enumerate(normalized.points) if k not in (i, j)]
                self.assertLess(abs(np.prod(rest) - 1), 1e-12)
                ratio = cmath.exp(ba.log_delta(normalized, i, j) - ba.log_delta(bs, i, j))
                self.assertLess(abs(ratio * ba.limit_sign(bs, i, j) - 1), 1e-9)

    def test_normalization_constant_is_one(self):
        """Test that delta_ij equals the ordered discriminant of the normalized remaining points."""
        rng = np.random.default_rng(29)
        for h in (1, 2, 3):
            bs = random_branch_set(rng, h)
            self.assertLess(abs(ba.normalization_constant(bs, 0, 1) - 1), 1e-9)

    def test_normalization_constant_with_infinity(self):
        """Test that the constant stays 1 when infinity sits outside the normalized pair."""
        bs = ba.validate_branch_set([0, 1, 0.5, ba.INFINITY], 1)
        self.assertLess(abs(ba.normalization_constant(bs, 0, 1) - 1), 1e-9)
        self.assertLess(abs(ba.normalization_constant(bs, 0, 3) - 1), 1e-9)


class CurveSpecTests(SimpleTestCase):

    def test_load_and_dump(self):
        payload = {"genus": 1, "branch_points": [[0, 0], [1, 0], [0.5, 0], "inf"]}
        bs = ba.load_curve_spec(payload)
        self.assertEqual(bs.genus, 1)
        self.assertTrue(bs.points[3].is_infinity)
        self.assertEqual(ba.dump_curve_spec(bs), {
            "genus": 1,
            "branch_points": [[0.0, 0.0], [1.0, 0.0], [0.5, 0.0], "inf"],
        })

    def test_load_from_json_text(self):
        bs = ba.load_curve_spec('{"genus": 1, "branch_points": [[0,0],[1,0],[2,0],[3,1]]}')
        self.assertIsNone(bs.infinite_index)
