from django.apps import AppConfig


class PruningConfig(AppConfig):
    """
    Configuration of the pruning application.

    Settings:
    - default_auto_field: auto primary key type for the app's models
    - name: application name (must match the directory name)
    """

    default_auto_field = 'django.db.models.BigAutoField'
    name = 'pruning'
    verbose_name = "Прунинг фильтров"
