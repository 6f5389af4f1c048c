from __future__ import annotations

from typing import Any

from unlearning_lab.management.base import LabCommand
from unlearning_lab.services.pipeline import ExperimentPipeline


class Command(LabCommand):
    help = "Grid-search the unlearning learning rate and select it by Hmean(UE, Locality)."

    def run_stage(self, pipeline: ExperimentPipeline, **options: Any) -> None:
        entries, best = pipeline.sweep(options["method"])
        for entry in entries:
            line = (
                f"lr {entry.learning_rate:g}: direct UE {entry.ue_direct:.3f}, "
                f"locality {entry.locality:.3f}, Hmean {entry.hmean:.3f}"
            )
            if entry.status == "ok":
                self.stdout.write(line)
            else:
                self.stdout.write(self.style.WARNING(f"lr {entry.learning_rate:g}: {entry.status}"))
        self.stdout.write(self.style.SUCCESS(f"Selected learning rate {best.learning_rate:g}"))
