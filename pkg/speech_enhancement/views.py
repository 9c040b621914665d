from rest_framework import viewsets, mixins, filters
from rest_framework.decorators import action
from rest_framework.response import Response
from rest_framework.permissions import AllowAny
from rest_framework.views import APIView
from django_filters.rest_framework import DjangoFilterBackend
import numpy as np
import scipy

from .exceptions import InvalidInputError
from .models import EnhancementRun
from .reports import RunReport
from .serializers import EnhancementRunSerializer, EnhancementRunCreateSerializer


class EnhancementRunViewSet(mixins.CreateModelMixin,
                            mixins.ListModelMixin,
                            mixins.RetrieveModelMixin,
                            mixins.DestroyModelMixin,
                            viewsets.GenericViewSet):
    """
    Enhancement runs: list, queue, inspect and delete.
    Creating a run queues the Celery task that processes it.
    """
    queryset = EnhancementRun.objects.all()
    permission_classes = [AllowAny]
    filter_backends = [DjangoFilterBackend, filters.SearchFilter, filters.OrderingFilter]
    filterset_fields = ['status', 'mode', 'beamformer', 'time_mode']
    search_fields = ['input_path', 'output_path']
    ordering_fields = ['created_at', 'si_sdr']
    ordering = ['-created_at']

    def get_serializer_class(self):
        if self.action == 'create':
            return EnhancementRunCreateSerializer
        return EnhancementRunSerializer

    def perform_create(self, serializer):
        """Create run and trigger processing task"""
        run = serializer.save()

        from .tasks import run_enhancement
        task = run_enhancement.delay(str(run.id))
        run.celery_task_id = task.id or ''
        run.save(update_fields=['celery_task_id'])
        return run

    @action(detail=True, methods=['get'])
    def report(self, request, pk=None):
        """Parsed run report"""
        run = self.get_object()
        if not run.report:
            return Response({'id': str(run.id), 'status': run.status, 'report': None})
        try:
            report = RunReport.loads(run.report)
        except InvalidInputError as exc:
            return Response({'error': str(exc)}, status=500)
        return Response({
            'id': str(run.id),
            'status': run.status,
            'report': {
                'mode': report.mode,
                'config': report.config,
                'reference': report.reference,
                'n_frames': report.n_frames,
                'output_samples': report.output_samples,
                'ilrma_iterations': report.ilrma_iterations,
                'cost_trace': report.cost_trace,
                'timings': report.timings,
                'batches': report.batches,
                'si_sdr': report.si_sdr,
            },
        })


class HealthCheckView(APIView):
    """Service liveness and numerical stack versions"""
    permission_classes = [AllowAny]

    def get(self, request):
        return Response({
            'status': 'ok',
            'numpy': np.__version__,
            'scipy': scipy.__version__,
            'runs': EnhancementRun.objects.count(),
        })
