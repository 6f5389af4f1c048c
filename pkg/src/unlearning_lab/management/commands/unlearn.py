from __future__ import annotations

from typing import Any

from unlearning_lab.management.base import LabCommand
from unlearning_lab.services.pipeline import ExperimentPipeline


class Command(LabCommand):
    help = "Unlearn every forget target from the base checkpoint with one method."

    def run_stage(self, pipeline: ExperimentPipeline, **options: Any) -> None:
        run = pipeline.unlearn()
        if run.method == "ICU":
            self.stdout.write(
                self.style.SUCCESS("ICU needs no training; evaluation wraps the base model")
            )
            return
        last = run.epochs[-1]
        self.stdout.write(
            self.style.SUCCESS(
                f"{run.method}: {run.steps} steps, final losses forget {last.forget:.4f} "
                f"anchor {last.anchor:.4f} retain {last.retain:.4f} -> "
                f"{pipeline.run_dir(run.method)}"
            )
        )
