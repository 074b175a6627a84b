import math

import numpy as np
from rest_framework import serializers

from . import branch_algebra as ba
from . import degeneration
from .exceptions import BranchSetError


class PointField(serializers.Field):
    """A point of the sphere: ``"inf"`` or ``[re, im]``."""
    default_error_messages = {
        'invalid': 'Expected "inf" or a [re, im] pair.',
    }

    def to_internal_value(self, data):
        try:
            return ba.parse_point(data)
        except (TypeError, ValueError):
            self.fail('invalid')

    def to_representation(self, value):
        return ba.format_point(value)


class ComplexMatrixField(serializers.Field):
    """
    Scalars, vectors and matrices with complex entries rendered as [re, im].

    Non-finite entries become null so reports stay strict JSON.
    """

    def __init__(self, **kwargs):
        kwargs.setdefault('read_only', True)
        super().__init__(**kwargs)

    def to_representation(self, value):
        if value is None:
            return None
        array = np.asarray(value)
        if array.ndim == 0:
            return self._scalar(array.item())
        return [self.to_representation(row) for row in array]

    @staticmethod
    def _scalar(x):
        if isinstance(x, complex):
            if not (math.isfinite(x.real) and math.isfinite(x.imag)):
                return None
            return [float(x.real), float(x.imag)]
        if isinstance(x, (bool, int, str)):
            return x
        x = float(x)
        return x if math.isfinite(x) else None


class CurveSpecSerializer(serializers.Serializer):
    """Curve file: genus and the 2h + 2 branch points."""
    genus = serializers.IntegerField(min_value=1)
    branch_points = serializers.ListField(child=PointField(), allow_empty=False)

    def validate(self, attrs):
        try:
            attrs['branch_set'] = ba.validate_branch_set(attrs['branch_points'], attrs['genus'])
        except BranchSetError as exc:
            raise serializers.ValidationError({'branch_points': str(exc)})
        return attrs


class FamilySpecSerializer(CurveSpecSerializer):
    """Family file: a curve spec plus the contracted cluster and the t values."""
    cluster = serializers.ListField(child=serializers.IntegerField(min_value=1), allow_empty=False)
    t_values = serializers.ListField(child=serializers.FloatField(), allow_empty=False)
    center = PointField(required=False)

    def validate(self, attrs):
        attrs = super().validate(attrs)
        center = attrs.get('center')
        if center is not None and center.is_infinity:
            raise serializers.ValidationError({'center': 'The cluster centre must be finite.'})
        try:
            attrs['family'] = degeneration.make_family(
                attrs['branch_set'],
                [k - 1 for k in attrs['cluster']],
                attrs['t_values'],
                None if center is None else center.value,
            )
        except BranchSetError as exc:
            raise serializers.ValidationError({'cluster': str(exc)})
        return attrs


class MeasurementSerializer(serializers.Serializer):
    value = ComplexMatrixField()
    module = serializers.CharField(read_only=True)
    parameters = serializers.DictField(read_only=True)
    error_estimate = ComplexMatrixField(allow_null=True)


class GateSerializer(serializers.Serializer):
    name = serializers.CharField(read_only=True)
    value = ComplexMatrixField()
    tolerance = serializers.FloatField(read_only=True)
    passed = serializers.BooleanField(read_only=True)


class InvariantReportSerializer(serializers.Serializer):
    curve = serializers.DictField(read_only=True)
    genus = serializers.IntegerField(read_only=True)
    parameters = serializers.DictField(read_only=True)
    normalization_constant = MeasurementSerializer(read_only=True)
    delta_log_matrix = MeasurementSerializer(read_only=True)
    green_matrix = MeasurementSerializer(read_only=True)
    psi = MeasurementSerializer(read_only=True)
    phi = MeasurementSerializer(read_only=True)
    thmA_residuals = MeasurementSerializer(read_only=True)
    thmA_spread = MeasurementSerializer(read_only=True)
    thmB_residual = MeasurementSerializer(read_only=True)
    four_point_max = MeasurementSerializer(read_only=True)
    row_sum_spread = MeasurementSerializer(read_only=True)
    inversion_max = MeasurementSerializer(read_only=True)
    genus_one = serializers.DictField(read_only=True, required=False)
    gates = GateSerializer(many=True, read_only=True)


class TorsionRowSerializer(serializers.Serializer):
    N = serializers.IntegerField(read_only=True)
    energy = MeasurementSerializer(read_only=True)
    expected = serializers.FloatField(read_only=True)
    distribution_residual = MeasurementSerializer(read_only=True)


class EllipticReportSerializer(serializers.Serializer):
    tau = ComplexMatrixField()
    reduced_tau = ComplexMatrixField()
    curve = serializers.DictField(read_only=True, required=False)
    green_constant = MeasurementSerializer(read_only=True)
    eta_residual = MeasurementSerializer(read_only=True)
    torsion = TorsionRowSerializer(many=True, read_only=True)
    weierstrass = serializers.ListField(read_only=True, required=False)
    gates = GateSerializer(many=True, read_only=True)


class SweepRowSerializer(serializers.Serializer):
    t = serializers.FloatField(read_only=True)
    log_t = serializers.FloatField(read_only=True)
    psi = serializers.FloatField(read_only=True)
    phi = serializers.FloatField(read_only=True)
    phi_tail_est = ComplexMatrixField()
    thmB_residual = serializers.FloatField(read_only=True)
    max_thmA_residual = serializers.FloatField(read_only=True)


class DegenerationReportSerializer(serializers.Serializer):
    family = serializers.DictField(read_only=True)
    parameters = serializers.DictField(read_only=True)
    h1 = serializers.IntegerField(read_only=True)
    h2 = serializers.IntegerField(read_only=True)
    slope_psi = MeasurementSerializer(read_only=True)
    slope_phi = MeasurementSerializer(read_only=True)
    intercept_psi = serializers.FloatField(read_only=True)
    intercept_phi = serializers.FloatField(read_only=True)
    predicted_slope = serializers.FloatField(read_only=True)
    limit_psi = MeasurementSerializer(read_only=True)
    limit_phi = MeasurementSerializer(read_only=True)
    rows = SweepRowSerializer(many=True, read_only=True)
    gates = GateSerializer(many=True, read_only=True)
