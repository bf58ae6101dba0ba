from django.db import models


class RunRecord(models.Model):
    RUNNING = "running"
    SUCCEEDED = "succeeded"
    FAILED = "failed"
    STATUS_CHOICES = [
        (RUNNING, "Running"),
        (SUCCEEDED, "Succeeded"),
        (FAILED, "Failed"),
    ]

    command = models.CharField(max_length=64)
    status = models.CharField(max_length=16, choices=STATUS_CHOICES, default=RUNNING)
    exit_code = models.IntegerField(null=True, blank=True)
    config = models.JSONField(default=dict, blank=True)
    output_dir = models.CharField(max_length=1024, blank=True)
    error = models.JSONField(null=True, blank=True)
    wall_time = models.FloatField(null=True, blank=True)
    created_at = models.DateTimeField(auto_now_add=True)
    finished_at = models.DateTimeField(null=True, blank=True)

    def __str__(self):
        return f"{self.command} #{self.pk} ({self.status})"

    class Meta:
        db_table = "runs"
        verbose_name = "Run"
        verbose_name_plural = "Runs"
        ordering = ["-created_at", "-id"]
