from django.apps import AppConfig


class UnlearningLabConfig(AppConfig):
    name = "unlearning_lab"
    verbose_name = "Knowledge-graph unlearning lab"
