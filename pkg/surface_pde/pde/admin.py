from django.contrib import admin

from .models import RunRecord


@admin.register(RunRecord)
class RunRecordAdmin(admin.ModelAdmin):
    list_display = ("id", "command", "status", "exit_code", "wall_time", "created_at")
    list_filter = ("command", "status")
    readonly_fields = [f.name for f in RunRecord._meta.fields]
