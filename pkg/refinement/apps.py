from django.apps import AppConfig


class RefinementConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'refinement'
