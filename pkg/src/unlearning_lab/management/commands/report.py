from __future__ import annotations

from typing import Any

from unlearning_lab.management.base import LabCommand
from unlearning_lab.services.pipeline import ExperimentPipeline


class Command(LabCommand):
    help = "Combine evaluated methods into the summary table, record and ΔKCS chart."

    def run_stage(self, pipeline: ExperimentPipeline, **options: Any) -> None:
        frame = pipeline.report()
        methods = frame["method"].unique(maintain_order=True).to_list()
        self.stdout.write(
            self.style.SUCCESS(
                f"Reported {len(methods)} method(s): {', '.join(methods)} -> "
                f"{pipeline.root / 'reports'}"
            )
        )
