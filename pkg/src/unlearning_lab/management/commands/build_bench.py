from __future__ import annotations

from typing import Any

from unlearning_lab.management.base import LabCommand
from unlearning_lab.services.pipeline import ExperimentPipeline


class Command(LabCommand):
    help = "Select unlearning targets, filter retain facts and write the probe dataset."

    def run_stage(self, pipeline: ExperimentPipeline, **options: Any) -> None:
        cases = pipeline.build_bench()
        probes = sum(len(case.probes) for case in cases)
        incomplete = sum(1 for case in cases if case.deficiencies)
        self.stdout.write(
            self.style.SUCCESS(
                f"Built benchmark: {len(cases)} cases, {probes} probes -> {pipeline.dataset_path}"
            )
        )
        if incomplete:
            self.stdout.write(
                self.style.WARNING(f"{incomplete} case(s) lack a verifiable three-hop probe")
            )
