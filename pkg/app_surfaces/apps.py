from django.apps import AppConfig


class SurfacesConfig(AppConfig):
    name = "app_surfaces"
    verbose_name = "Hyperelliptic surfaces"
