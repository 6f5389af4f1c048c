from __future__ import annotations

from typing import Any

from unlearning_lab.management.base import LabCommand
from unlearning_lab.services.pipeline import ExperimentPipeline


class Command(LabCommand):
    help = "Run NEDS with a share of anchor neighbors replaced by distant facts."

    def run_stage(self, pipeline: ExperimentPipeline, **options: Any) -> None:
        frame = pipeline.ablate_corruption()
        for row in frame.iter_rows(named=True):
            self.stdout.write(
                f"corruption {row['corruption_rate']:.0%}: direct UE {row['DirectUE']:.3f}, "
                f"multi-hop UE {row['MultiHopUE']:.3f}, locality {row['Locality']:.3f}"
            )
        self.stdout.write(
            self.style.SUCCESS(f"Wrote {frame.height} ablation rows to {pipeline.ablation_dir}")
        )
