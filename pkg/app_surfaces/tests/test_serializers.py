import json
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from .. import branch_algebra as ba
from ..serializers import ComplexMatrixField, CurveSpecSerializer, FamilySpecSerializer, PointField

FIXTURES = Path(__file__).resolve().parent / 'fixtures'


def fixture(name):
    return json.loads((FIXTURES / name).read_text())


class CurveSpecSerializerTests(SimpleTestCase):

    def test_valid_curve(self):
        serializer = CurveSpecSerializer(data=fixture('quintic.json'))
        self.assertTrue(serializer.is_valid(), serializer.errors)
        bs = serializer.validated_data['branch_set']
        self.assertEqual(bs.genus, 2)
        self.assertEqual(bs.infinite_index, 5)

    def test_wrong_count(self):
        """Test that a genus-2 curve with three points is rejected with a diagnostic."""
        serializer = CurveSpecSerializer(data=fixture('malformed.json'))
        self.assertFalse(serializer.is_valid())
        self.assertIn('branch_points', serializer.errors)

    def test_bad_point(self):
        serializer = CurveSpecSerializer(data={'genus': 1, 'branch_points': [[0, 0], [1, 0], 'north', [2, 0]]})
        self.assertFalse(serializer.is_valid())
        self.assertIn('branch_points', serializer.errors)

    def test_duplicate_points(self):
        serializer = CurveSpecSerializer(data={'genus': 1, 'branch_points': [[0, 0], [1, 0], [1, 0], 'inf']})
        self.assertFalse(serializer.is_valid())

    def test_genus_must_be_positive(self):
        serializer = CurveSpecSerializer(data={'genus': 0, 'branch_points': [[0, 0], [1, 0]]})
        self.assertFalse(serializer.is_valid())
        self.assertIn('genus', serializer.errors)


class FamilySpecSerializerTests(SimpleTestCase):

    def test_valid_family(self):
        serializer = FamilySpecSerializer(data=fixture('family_genus_two.json'))
        self.assertTrue(serializer.is_valid(), serializer.errors)
        family = serializer.validated_data['family']
        self.assertEqual(family.cluster, (0, 1, 2))
        self.assertEqual(len(family.t_values), 5)

    def test_bad_cluster(self):
        payload = fixture('family_genus_two.json')
        payload['cluster'] = [1, 2]
        serializer = FamilySpecSerializer(data=payload)
        self.assertFalse(serializer.is_valid())
        self.assertIn('cluster', serializer.errors)

    def test_infinite_center(self):
        payload = fixture('family_genus_two.json')
        payload['center'] = 'inf'
        self.assertFalse(FamilySpecSerializer(data=payload).is_valid())


class FieldTests(SimpleTestCase):

    def test_point_field(self):
        field = PointField()
        self.assertTrue(field.to_internal_value('inf').is_infinity)
        self.assertEqual(field.to_representation(ba.SpherePoint.finite(1 - 2j)), [1.0, -2.0])

    def test_complex_matrix(self):
        field = ComplexMatrixField()
        self.assertEqual(field.to_representation(np.array([[1 + 2j, 0], [3j, -1]])),
                         [[[1.0, 2.0], [0.0, 0.0]], [[0.0, 3.0], [-1.0, 0.0]]])

    def test_real_values(self):
        field = ComplexMatrixField()
        self.assertEqual(field.to_representation(np.float64(0.5)), 0.5)
        self.assertEqual(field.to_representation([1.0, 2.0]), [1.0, 2.0])

    def test_non_finite_becomes_null(self):
        field = ComplexMatrixField()
        self.assertIsNone(field.to_representation(float('inf')))
        self.assertEqual(field.to_representation(np.array([np.nan, 1.0])), [None, 1.0])
