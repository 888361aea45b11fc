from django.apps import AppConfig


class DepthnetConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'depthnet'
