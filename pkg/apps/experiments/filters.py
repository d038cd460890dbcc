import django_filters

from .models import ExperimentRun


class ExperimentRunFilter(django_filters.FilterSet):
    command = django_filters.ChoiceFilter(choices=ExperimentRun.Command.choices)
    status = django_filters.ChoiceFilter(choices=ExperimentRun.Status.choices)
    seed = django_filters.NumberFilter()
    created_after = django_filters.IsoDateTimeFilter(field_name='created_at', lookup_expr='gte')

    class Meta:
        model = ExperimentRun
        fields = ['command', 'status', 'seed']
