from __future__ import annotations

from typing import Any

from unlearning_lab.management.base import LabCommand
from unlearning_lab.services.pipeline import ExperimentPipeline


class Command(LabCommand):
    help = "Unlearn each configured method under several seeds and check the method orderings."

    def add_arguments(self, parser: Any) -> None:
        super().add_arguments(parser)
        parser.add_argument(
            "--seeds", type=int, nargs="+", help="Unlearning seeds (default: experiment.seeds)"
        )

    def run_stage(self, pipeline: ExperimentPipeline, **options: Any) -> None:
        methods = [options["method"]] if options["method"] else None
        frame = pipeline.compare_seeds(methods, options["seeds"])
        majority = pipeline.seeds_dir / "majority.json"
        for row in frame.iter_rows(named=True):
            self.stdout.write(
                f"seed {row['seed']} {row['method']}: direct UE {row['DirectUE']:.3f}, "
                f"multi-hop UE {row['MultiHopUE']:.3f}, Hmean {row['Hmean']:.3f}"
            )
        self.stdout.write(self.style.SUCCESS(f"Wrote the majority checks to {majority}"))
