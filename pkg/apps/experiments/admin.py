from django.contrib import admin
from .models import ExperimentRun


@admin.register(ExperimentRun)
class ExperimentRunAdmin(admin.ModelAdmin):
    list_display = ['id', 'command', 'status', 'seed', 'exit_code', 'output_dir', 'created_at']
    list_filter = ['command', 'status', 'created_at']
    search_fields = ['output_dir', 'error_message']
    readonly_fields = ['created_at', 'finished_at']
