from __future__ import annotations

from typing import Any

from unlearning_lab.management.base import LabCommand
from unlearning_lab.services.pipeline import ExperimentPipeline


class Command(LabCommand):
    help = "Generate the synthetic knowledge graph and write it as TSV plus schema."

    def run_stage(self, pipeline: ExperimentPipeline, **options: Any) -> None:
        graph = pipeline.gen_world()
        self.stdout.write(
            self.style.SUCCESS(
                f"Generated world: {len(graph.entities)} entities, {len(graph.triples)} triples "
                f"(seed {pipeline.config.world.seed}) in {pipeline.world_dir}"
            )
        )
