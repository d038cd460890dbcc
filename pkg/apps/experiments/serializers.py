from rest_framework import serializers

from apps.common.exceptions import LabError
from apps.measures.services.laws import FAMILIES
from apps.potentials.services.profiles import PROFILE_FAMILIES
from apps.ensembles.services.config import FIELD_KINDS
from apps.ensembles.services.limit_theorems import ESTIMATORS
from .models import ExperimentRun
from .services.builders import build_domain, build_law, build_measure, build_profile


COMMANDS = [choice for choice, _ in ExperimentRun.Command.choices]
MODEL_VARIANTS = ('alloy', 'points', 'series')
SERIES_BUILDERS = ('explicit', 'summable', 'geometric_exceedance')


class StrictSerializer(serializers.Serializer):
    """Rejects keys it does not declare instead of silently dropping them."""

    def to_internal_value(self, data):
        if isinstance(data, dict):
            unknown = sorted(set(data) - set(self.fields))
            if unknown:
                raise serializers.ValidationError({key: 'Unknown field.' for key in unknown})
        return super().to_internal_value(data)


# =============================================================================
# BUILDING BLOCKS
# =============================================================================

class DomainSerializer(StrictSerializer):
    dim = serializers.IntegerField(default=3, min_value=3)
    radius = serializers.FloatField(default=1.0)
    center = serializers.ListField(child=serializers.FloatField(), required=False, allow_null=True, default=None)

    def validate_radius(self, value):
        if not value > 0:
            raise serializers.ValidationError('Radius must be positive.')
        return value

    def validate(self, attrs):
        center = attrs.get('center')
        if center is not None and len(center) != attrs['dim']:
            raise serializers.ValidationError({'center': f"Center needs {attrs['dim']} coordinates."})
        return attrs


class LawSerializer(StrictSerializer):
    family = serializers.ChoiceField(choices=FAMILIES)
    low = serializers.FloatField(required=False)
    high = serializers.FloatField(required=False)
    value = serializers.FloatField(required=False)
    base = serializers.FloatField(required=False)
    p = serializers.FloatField(required=False)
    lam = serializers.FloatField(required=False)

    def validate(self, attrs):
        try:
            build_law(attrs)
        except LabError as exc:
            raise serializers.ValidationError(exc.message)
        return attrs


class FieldSerializer(StrictSerializer):
    kind = serializers.ChoiceField(choices=FIELD_KINDS, default='constant')
    value = serializers.FloatField(default=0.0)
    center = serializers.ListField(child=serializers.FloatField(), required=False, allow_null=True, default=None)
    radius = serializers.FloatField(default=1.0)

    def validate(self, attrs):
        if attrs['kind'] == 'bump' and not attrs['radius'] > 0:
            raise serializers.ValidationError({'radius': 'Bump fields need a positive radius.'})
        return attrs


class ProfileSerializer(StrictSerializer):
    family = serializers.ChoiceField(choices=PROFILE_FAMILIES, default='tent')
    amplitude = serializers.FloatField(default=1.0)
    radius = serializers.FloatField(default=1.0)
    width = serializers.FloatField(default=1.0)

    def validate(self, attrs):
        try:
            build_profile(attrs)
        except LabError as exc:
            raise serializers.ValidationError(exc.message)
        return attrs


class AtomSerializer(StrictSerializer):
    location = serializers.ListField(child=serializers.FloatField(), min_length=1)
    weight = serializers.FloatField()


class ProblemSerializer(StrictSerializer):
    """Deterministic data of the boundary problem plus solver controls."""

    p = serializers.FloatField(default=2.0)
    b = FieldSerializer(required=False)
    g = FieldSerializer(required=False)
    f = ProfileSerializer(required=False)
    c0 = serializers.FloatField(default=0.5)
    eps = serializers.FloatField(required=False, allow_null=True, default=None)
    tol = serializers.FloatField(default=1e-8)
    max_iter = serializers.IntegerField(default=500, min_value=1)

    def validate_p(self, value):
        if not value > 1:
            raise serializers.ValidationError(f'Nonlinearity exponent p must exceed 1, got {value}.')
        return value

    def validate_c0(self, value):
        if not 0 < value < 1:
            raise serializers.ValidationError(f'c0 must lie in (0, 1), got {value}.')
        return value

    def validate_eps(self, value):
        if value is not None and not value > 0:
            raise serializers.ValidationError('eps must be positive when given.')
        return value

    def validate_tol(self, value):
        if not value > 0:
            raise serializers.ValidationError('Tolerance must be positive.')
        return value


class MeasureModelSerializer(StrictSerializer):
    """
    Random measure model.

        alloy   spacing, charge
        points  count (or intensity), charge
        series  base_measures, coefficients, cumulative       (builder 'explicit')
                base_measures, q, ceiling, fraction            (builder 'summable')
                base_measures (one), value, terms, p0, ratio   (builder 'geometric_exceedance')
    """

    variant = serializers.ChoiceField(choices=MODEL_VARIANTS)
    spacing = serializers.FloatField(required=False)
    charge = LawSerializer(required=False)
    count = LawSerializer(required=False)
    intensity = serializers.FloatField(required=False, min_value=0.0)
    builder = serializers.ChoiceField(choices=SERIES_BUILDERS, default='explicit')
    base_measures = serializers.ListField(child=AtomSerializer(many=True), required=False)
    coefficients = LawSerializer(many=True, required=False)
    cumulative = serializers.BooleanField(default=False)
    q = serializers.FloatField(default=2.0)
    ceiling = serializers.FloatField(default=1.0)
    fraction = serializers.FloatField(default=0.999)
    value = serializers.FloatField(required=False)
    terms = serializers.IntegerField(required=False, min_value=1)
    p0 = serializers.FloatField(default=0.5)
    ratio = serializers.FloatField(default=0.5)

    REQUIRED = {
        'alloy': ('spacing', 'charge'),
        'points': (),
        'explicit': ('base_measures', 'coefficients'),
        'summable': ('base_measures',),
        'geometric_exceedance': ('base_measures', 'value', 'terms'),
    }

    def validate(self, attrs):
        variant = attrs['variant']
        key = attrs['builder'] if variant == 'series' else variant
        missing = [name for name in self.REQUIRED[key] if name not in attrs]
        if variant == 'points' and 'count' not in attrs and 'intensity' not in attrs:
            missing.append('count')
        if missing:
            raise serializers.ValidationError({name: f"Required for {key} models." for name in missing})
        return attrs


# =============================================================================
# EXPERIMENT CONFIG
# =============================================================================

class ExperimentConfigSerializer(StrictSerializer):
    """Top-level experiment document read by `manage.py lab`."""

    command = serializers.ChoiceField(choices=COMMANDS)
    seed = serializers.IntegerField(default=0, min_value=0)
    out = serializers.CharField(required=False, allow_null=True, default=None)
    threads = serializers.IntegerField(required=False, allow_null=True, default=None, min_value=1)
    domain = DomainSerializer(required=False)
    h = serializers.FloatField(required=False)
    problem = ProblemSerializer(required=False)
    model = MeasureModelSerializer(required=False)
    measure = AtomSerializer(many=True, required=False)

    # green-check
    tolerance = serializers.FloatField(default=0.03)
    # ensemble
    n_samples = serializers.IntegerField(default=100, min_value=1)
    moments = serializers.ListField(child=serializers.IntegerField(min_value=1), default=list)
    # clt / lln
    k = serializers.IntegerField(required=False, min_value=1)
    trials = serializers.IntegerField(required=False, min_value=1)
    alpha = serializers.FloatField(default=0.01)
    estimator = serializers.ChoiceField(choices=ESTIMATORS, default='pooled')
    delta = serializers.FloatField(required=False)
    pilot_size = serializers.IntegerField(required=False, allow_null=True, default=None, min_value=2)
    # borel-cantelli
    c_tilde = serializers.FloatField(required=False)
    k_max = serializers.IntegerField(required=False, min_value=1)

    COMMAND_FIELDS = {
        'green-check': ('h',),
        'solve': ('h',),
        'ensemble': ('h', 'model'),
        'clt': ('h', 'model', 'k', 'trials'),
        'lln': ('h', 'model', 'k', 'trials', 'delta'),
        'borel-cantelli': ('model', 'c_tilde', 'k_max'),
    }

    def validate_h(self, value):
        if not value > 0:
            raise serializers.ValidationError('Grid spacing h must be positive.')
        return value

    def validate_alpha(self, value):
        if not 0 < value < 1:
            raise serializers.ValidationError('alpha must lie in (0, 1).')
        return value

    def validate_delta(self, value):
        if not value > 0:
            raise serializers.ValidationError('delta must be positive.')
        return value

    def validate(self, attrs):
        command = attrs['command']
        missing = [name for name in self.COMMAND_FIELDS[command] if name not in attrs]
        if missing:
            raise serializers.ValidationError({name: f"Required for the {command} command." for name in missing})
        if command == 'borel-cantelli' and attrs['model']['variant'] != 'series':
            raise serializers.ValidationError({'model': 'The exceedance check needs a series model.'})
        if command == 'clt' and attrs['trials'] < 2:
            raise serializers.ValidationError({'trials': 'The CLT test needs at least 2 trials.'})
        self.validate_atoms(attrs)
        return attrs

    def validate_atoms(self, attrs):
        """Explicit atoms must sit in the closed ball of the configured domain."""
        try:
            domain = build_domain(attrs.get('domain'))
        except LabError as exc:
            raise serializers.ValidationError({'domain': exc.message})
        blocks = {'measure': [attrs['measure']] if 'measure' in attrs else []}
        blocks['model'] = (attrs.get('model') or {}).get('base_measures') or []
        for key, measures in blocks.items():
            for records in measures:
                try:
                    build_measure(records, domain.dim).validate_support(domain)
                except (LabError, ValueError) as exc:
                    raise serializers.ValidationError({key: str(exc)})


class ExperimentRunSerializer(serializers.ModelSerializer):
    """Full serializer for a recorded run."""

    class Meta:
        model = ExperimentRun
        fields = [
            'id', 'command', 'status', 'seed', 'config', 'report', 'output_dir',
            'exit_code', 'error_message', 'created_at', 'finished_at',
        ]
        read_only_fields = fields


class ExperimentRunListSerializer(serializers.ModelSerializer):
    """Lighter serializer for listing runs."""

    class Meta:
        model = ExperimentRun
        fields = ['id', 'command', 'status', 'seed', 'exit_code', 'output_dir', 'created_at']
        read_only_fields = fields
