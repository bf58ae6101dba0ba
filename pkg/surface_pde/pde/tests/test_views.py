from django.urls import reverse
from rest_framework import status
from rest_framework.test import APITestCase

from pde.models import RunRecord


class RunRegistryTests(APITestCase):
    def setUp(self):
        self.evolve = RunRecord.objects.create(command="evolve", status=RunRecord.SUCCEEDED, exit_code=0,
                                               config={"h": 0.01, "steps": 2})
        self.failed = RunRecord.objects.create(command="barycenter", status=RunRecord.FAILED, exit_code=4,
                                               error={"error": "underflow", "details": {"iteration": 0}})

    def test_list_runs(self):
        response = self.client.get(reverse("run-list"))
        self.assertEqual(response.status_code, status.HTTP_200_OK)
        self.assertEqual([run["id"] for run in response.data], [self.failed.pk, self.evolve.pk])

    def test_filter_by_command_and_status(self):
        response = self.client.get(reverse("run-list"), {"command": "evolve"})
        self.assertEqual([run["id"] for run in response.data], [self.evolve.pk])
        response = self.client.get(reverse("run-list"), {"status": RunRecord.FAILED})
        self.assertEqual([run["exit_code"] for run in response.data], [4])

    def test_run_detail(self):
        response = self.client.get(reverse("run-detail", args=[self.evolve.pk]))
        self.assertEqual(response.status_code, status.HTTP_200_OK)
        self.assertEqual(response.data["config"], {"h": 0.01, "steps": 2})

    def test_missing_run(self):
        response = self.client.get(reverse("run-detail", args=[999]))
        self.assertEqual(response.status_code, status.HTTP_404_NOT_FOUND)
        self.assertEqual(response.data, {"error": "Run not found", "details": {"id": 999}})

    def test_registry_is_read_only(self):
        response = self.client.post(reverse("run-list"), {"command": "evolve"}, format="json")
        self.assertEqual(response.status_code, status.HTTP_405_METHOD_NOT_ALLOWED)
