from django.apps import AppConfig


class PdeConfig(AppConfig):
    default_auto_field = "django.db.models.BigAutoField"
    name = "pde"
    verbose_name = "Surface PDE experiments"
