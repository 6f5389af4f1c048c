from __future__ import annotations

from pathlib import Path
from typing import Any

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from unlearning_lab.exceptions import LabError, MissingArtifactError, NumericError
from unlearning_lab.services.config_file import load_config
from unlearning_lab.services.pipeline import ExperimentPipeline

EXIT_FAILURE = 1
EXIT_MISSING_ARTIFACT = 3
EXIT_NUMERIC = 4


def _default_config_file() -> Path | None:
    path = Path(settings.LAB_CONFIG_FILE)
    return path if path.exists() else None


class LabCommand(BaseCommand):
    """One pipeline stage; lab errors become exit codes."""

    def add_arguments(self, parser: Any) -> None:
        parser.add_argument("--config", type=Path, help="TOML experiment configuration")
        parser.add_argument("--seed", type=int, help="Seed for every stage")
        parser.add_argument("--out", type=Path, help="Experiment output directory")
        parser.add_argument(
            "--method",
            choices=["NEDS", "NPO", "GA", "GD", "ULDPO", "ICU"],
            help="Unlearning method",
        )
        parser.add_argument("--lr", type=float, help="Unlearning learning rate")
        parser.add_argument(
            "--lambda", dest="lambda_", type=float, help="Neighbor anchoring weight"
        )
        parser.add_argument("--beta", type=float, help="NPO / DPO inverse temperature")
        parser.add_argument("--k", type=int, help="Anchor neighbors per target")
        parser.add_argument("--corruption", type=float, help="Neighbor corruption rate")

    def handle(self, *_: Any, **options: Any) -> None:
        try:
            config = load_config(
                options["config"] or _default_config_file(),
                seed=options["seed"],
                out=options["out"],
                method=options["method"],
                lr=options["lr"],
                lambda_=options["lambda_"],
                beta=options["beta"],
                k=options["k"],
                corruption=options["corruption"],
            )
            self.run_stage(ExperimentPipeline(config), **options)
        except MissingArtifactError as exc:
            raise CommandError(str(exc), returncode=EXIT_MISSING_ARTIFACT) from exc
        except NumericError as exc:
            raise CommandError(str(exc), returncode=EXIT_NUMERIC) from exc
        except LabError as exc:
            raise CommandError(str(exc), returncode=EXIT_FAILURE) from exc

    def run_stage(self, pipeline: ExperimentPipeline, **options: Any) -> None:
        raise NotImplementedError
