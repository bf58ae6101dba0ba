"""
URL configuration for surface_pde project.

The run registry is browsable read-only; runs are only started from manage.py.
"""
from django.contrib import admin
from django.urls import path
from pde.views import RunDetail, RunList

urlpatterns = [
    path("admin/", admin.site.urls),
    path("api/v1/runs", RunList.as_view(), name="run-list"),
    path("api/v1/runs/<int:pk>", RunDetail.as_view(), name="run-detail"),
]
