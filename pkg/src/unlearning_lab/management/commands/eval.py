from __future__ import annotations

from typing import Any

from unlearning_lab.management.base import LabCommand
from unlearning_lab.services.pipeline import ExperimentPipeline


class Command(LabCommand):
    help = "Score an unlearned model (or the base model without --method) on the benchmark."

    def add_arguments(self, parser: Any) -> None:
        super().add_arguments(parser)
        parser.add_argument(
            "--all",
            action="store_true",
            help="Evaluate the base model and every configured method",
        )

    def run_stage(self, pipeline: ExperimentPipeline, **options: Any) -> None:
        if options["all"]:
            targets = [None, *pipeline.config.experiment.methods]
        else:
            targets = [options["method"]]
        for method in targets:
            rows = pipeline.evaluate(method)
            pooled = rows[-1]
            self.stdout.write(
                self.style.SUCCESS(
                    f"{pooled.method}: direct UE {pooled.ue_by_type['direct']:.3f}, "
                    f"locality {pooled.locality:.3f}, ΔKCS {pooled.delta_kcs:+.3f}, "
                    f"refusal rate {pooled.refusal_rate:.3f}"
                )
            )
