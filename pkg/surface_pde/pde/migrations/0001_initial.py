# Generated by Django 5.1.4 on 2026-10-18 09:12

from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name="RunRecord",
            fields=[
                ("id", models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name="ID")),
                ("command", models.CharField(max_length=64)),
                ("status", models.CharField(choices=[("running", "Running"), ("succeeded", "Succeeded"), ("failed", "Failed")], default="running", max_length=16)),
                ("exit_code", models.IntegerField(blank=True, null=True)),
                ("config", models.JSONField(blank=True, default=dict)),
                ("output_dir", models.CharField(blank=True, max_length=1024)),
                ("error", models.JSONField(blank=True, null=True)),
                ("wall_time", models.FloatField(blank=True, null=True)),
                ("created_at", models.DateTimeField(auto_now_add=True)),
                ("finished_at", models.DateTimeField(blank=True, null=True)),
            ],
            options={
                "verbose_name": "Run",
                "verbose_name_plural": "Runs",
                "db_table": "runs",
                "ordering": ["-created_at", "-id"],
            },
        ),
    ]
