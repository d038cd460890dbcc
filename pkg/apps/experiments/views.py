import logging

from rest_framework import status
from rest_framework.decorators import api_view, permission_classes
from rest_framework.permissions import AllowAny
from rest_framework.response import Response
from drf_spectacular.utils import extend_schema, OpenApiParameter

from apps.common.exceptions import LabError
from .filters import ExperimentRunFilter
from .models import ExperimentRun
from .serializers import ExperimentConfigSerializer, ExperimentRunListSerializer, ExperimentRunSerializer
from .services.artifacts import output_directory, to_jsonable
from .services.builders import build_ensemble_config, resolve_config

logger = logging.getLogger(__name__)


# =============================================================================
# RUNS
# =============================================================================

@extend_schema(
    tags=['Runs'],
    parameters=[
        OpenApiParameter('command', str, description='Filter by command'),
        OpenApiParameter('status', str, description='passed, failed or error'),
        OpenApiParameter('seed', int, description='Filter by master seed'),
    ],
    responses={200: ExperimentRunListSerializer(many=True)},
    description='List recorded experiment runs, newest first.',
)
@api_view(['GET'])
@permission_classes([AllowAny])
def run_list(request):
    runs = ExperimentRunFilter(request.GET, queryset=ExperimentRun.objects.all())
    if not runs.is_valid():
        return Response(runs.errors, status=status.HTTP_400_BAD_REQUEST)
    serializer = ExperimentRunListSerializer(runs.qs, many=True)
    return Response(serializer.data)


@extend_schema(
    tags=['Runs'],
    responses={200: ExperimentRunSerializer},
    description='Get a recorded run with its resolved config and report.',
)
@api_view(['GET'])
@permission_classes([AllowAny])
def run_detail(request, run_id):
    try:
        run = ExperimentRun.objects.get(pk=run_id)
    except ExperimentRun.DoesNotExist:
        return Response({'error': 'Run not found.'}, status=status.HTTP_404_NOT_FOUND)
    return Response(ExperimentRunSerializer(run).data)


# =============================================================================
# CONFIG VALIDATION
# =============================================================================

@extend_schema(
    tags=['Configs'],
    request=ExperimentConfigSerializer,
    responses={200: None},
    description='Validate an experiment config and return it fully resolved, without running it.',
)
@api_view(['POST'])
@permission_classes([AllowAny])
def validate_config(request):
    serializer = ExperimentConfigSerializer(data=request.data)
    serializer.is_valid(raise_exception=True)
    data = serializer.validated_data

    try:
        cfg = build_ensemble_config(data)
        resolved = resolve_config(data, cfg, output_directory(data))
    except LabError as exc:
        logger.info(f"Config rejected: {exc.message}")
        return Response({'error': exc.message}, status=status.HTTP_400_BAD_REQUEST)

    return Response({'valid': True, 'config': to_jsonable(resolved)})
