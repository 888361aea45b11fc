from django.apps import AppConfig


class SparsityConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'sparsity'
