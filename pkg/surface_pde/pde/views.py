from rest_framework import generics, status
from rest_framework.response import Response
import logging
from .models import RunRecord
from .serializers import RunRecordSerializer

logger = logging.getLogger(__name__)


class RunList(generics.ListAPIView):
    serializer_class = RunRecordSerializer

    def get_queryset(self):
        queryset = RunRecord.objects.all()
        command = self.request.query_params.get("command")
        if command:
            queryset = queryset.filter(command=command)
        run_status = self.request.query_params.get("status")
        if run_status:
            queryset = queryset.filter(status=run_status)
        return queryset

    def get(self, request, *args, **kwargs):
        logger.debug(f"Listing runs with filters {dict(request.query_params)}")
        return super().get(request, *args, **kwargs)


class RunDetail(generics.RetrieveAPIView):
    queryset = RunRecord.objects.all()
    serializer_class = RunRecordSerializer

    def get(self, request, *args, **kwargs):
        run_id = kwargs.get("pk")
        try:
            run = RunRecord.objects.get(pk=run_id)
        except RunRecord.DoesNotExist:
            logger.error(f"Run with ID {run_id} not found")
            return Response(
                {"error": "Run not found", "details": {"id": run_id}},
                status=status.HTTP_404_NOT_FOUND
            )
        return Response(self.get_serializer(run).data, status=status.HTTP_200_OK)
