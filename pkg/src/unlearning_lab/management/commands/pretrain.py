from __future__ import annotations

from typing import Any

from unlearning_lab.management.base import LabCommand
from unlearning_lab.services.pipeline import ExperimentPipeline


class Command(LabCommand):
    help = "Pretrain the toy transformer on the world corpus and filter unknown probes."

    def run_stage(self, pipeline: ExperimentPipeline, **options: Any) -> None:
        result = pipeline.pretrain()
        accuracy = result.accuracy_history[-1][1] if result.accuracy_history else float("nan")
        message = (
            f"Pretrained {result.epochs_run} epochs ({result.steps} steps), "
            f"final loss {result.epoch_losses[-1]:.4f}, direct accuracy {accuracy:.3f}"
        )
        if result.reached_target:
            self.stdout.write(self.style.SUCCESS(message))
        else:
            self.stdout.write(self.style.WARNING(message + " (below the accuracy target)"))
