from django.apps import AppConfig


class PreconditionersConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'preconditioners'
    verbose_name = 'Interface preconditioners'
