"""Experiment stages wired over one output directory.

Layout under ``experiment.output_dir``: ``world/``, ``bench/``, ``model/``, ``runs/<method>/``,
``reports/<method>/``, ``sweeps/<method>/`` and ``ablation/``, each with a ``manifest.json``.
"""

from __future__ import annotations

import logging
import math
from collections import defaultdict
from collections.abc import Sequence
from dataclasses import asdict, replace
from functools import partial
from pathlib import Path
from typing import Any

import polars as pl

from unlearning_lab.exceptions import LabError, MissingArtifactError, TrainingDivergedError
from unlearning_lab.schemas import ExperimentConfig, UnlearnConfig
from unlearning_lab.services.bench.benchmark import build_cases
from unlearning_lab.services.bench.dataset_io import (
    emit_dataset,
    load_dataset,
    load_probes,
    manifest_path_for,
    write_probes,
)
from unlearning_lab.services.bench.probes import filter_known
from unlearning_lab.services.bench.templates import TemplateBank, default_template_bank
from unlearning_lab.services.config_file import config_record
from unlearning_lab.services.evaluation import reports
from unlearning_lab.services.evaluation.boundary import boundary_report
from unlearning_lab.services.evaluation.drift import drift_report
from unlearning_lab.services.evaluation.metrics import ProbeOutput, metrics_report
from unlearning_lab.services.evaluation.runner import (
    Wrap,
    direct_accuracy,
    family_reports,
    generate_outputs,
)
from unlearning_lab.services.kg.graph import KnowledgeGraph
from unlearning_lab.services.kg.triples_io import (
    ENTITIES_FILENAME,
    SCHEMA_FILENAME,
    TRIPLES_FILENAME,
    dump_world,
    load_world,
)
from unlearning_lab.services.kg.world import generate_world
from unlearning_lab.services.lm.checkpoint import load_checkpoint, save_checkpoint
from unlearning_lab.services.lm.corpus import build_corpus, build_tokenizer, encode_corpus
from unlearning_lab.services.lm.sequences import generate_answer
from unlearning_lab.services.lm.tokenizer import Tokenizer
from unlearning_lab.services.lm.training import PretrainResult, pretrain
from unlearning_lab.services.lm.transformer import TransformerLM
from unlearning_lab.services.manifests import file_sha256, require, write_manifest
from unlearning_lab.services.types import (
    TEMPLATE_FAMILIES,
    BenchmarkCase,
    MetricsReport,
    Probe,
    QAPair,
    UnlearnRun,
)
from unlearning_lab.services.unlearn.icu import icu_wrap
from unlearning_lab.services.unlearn.neighbors import case_neighbor_sets
from unlearning_lab.services.unlearn.trainer import run_unlearn

logger = logging.getLogger(__name__)

BEFORE_DIR = "before"


def known_cases(cases: Sequence[BenchmarkCase], known: Sequence[Probe]) -> list[BenchmarkCase]:
    """Cases restricted to known probes; a case missing either direct probe is dropped."""
    by_case: dict[str, list[Probe]] = defaultdict(list)
    for probe in known:
        by_case[probe.case_id].append(probe)
    kept = []
    for case in cases:
        probes = by_case.get(case.case_id, [])
        families = {p.template_family for p in probes if p.probe_type == "direct"}
        if families == set(TEMPLATE_FAMILIES):
            kept.append(replace(case, probes=tuple(probes)))
    return kept


def _gold(probe: Probe) -> QAPair:
    return QAPair(probe.question, probe.answer)


class ExperimentPipeline:
    def __init__(self, config: ExperimentConfig, bank: TemplateBank | None = None) -> None:
        self.config = config
        self.root = Path(config.experiment.output_dir)
        self.bank = bank or default_template_bank()
        self._pre_outputs: list[ProbeOutput] | None = None

    # layout

    @property
    def world_dir(self) -> Path:
        return self.root / "world"

    @property
    def bench_dir(self) -> Path:
        return self.root / "bench"

    @property
    def model_dir(self) -> Path:
        return self.root / "model"

    @property
    def dataset_path(self) -> Path:
        return self.bench_dir / "dataset.jsonl"

    @property
    def known_path(self) -> Path:
        return self.bench_dir / "known.jsonl"

    @property
    def base_checkpoint(self) -> Path:
        return self.model_dir / "base.ckpt"

    @property
    def tokenizer_path(self) -> Path:
        return self.model_dir / "tokenizer.json"

    def run_dir(self, method: str) -> Path:
        return self.root / "runs" / method

    def report_dir(self, method: str | None) -> Path:
        return self.root / "reports" / (method or BEFORE_DIR)

    def sweep_dir(self, method: str) -> Path:
        return self.root / "sweeps" / method

    @property
    def ablation_dir(self) -> Path:
        return self.root / "ablation"

    @property
    def seeds_dir(self) -> Path:
        return self.root / "seeds"

    def _world_files(self) -> dict[str, Path]:
        return {
            "world triples": self.world_dir / TRIPLES_FILENAME,
            "world schema": self.world_dir / SCHEMA_FILENAME,
            "world entities": self.world_dir / ENTITIES_FILENAME,
        }

    def _manifest(self, directory: Path, stage: str, **kwargs: Any) -> Path:
        return write_manifest(
            directory, stage, root=self.root, config=config_record(self.config), **kwargs
        )

    # loaders

    def graph(self) -> KnowledgeGraph:
        for what, path in self._world_files().items():
            require(path, what)
        return load_world(self.world_dir)

    def tokenizer(self) -> Tokenizer:
        return Tokenizer.load(require(self.tokenizer_path, "tokenizer"))

    def base_model(self) -> TransformerLM:
        return load_checkpoint(require(self.base_checkpoint, "base checkpoint"))

    def cases(self) -> list[BenchmarkCase]:
        require(self.dataset_path, "benchmark dataset")
        return load_dataset(self.dataset_path)

    def evaluation_cases(self) -> list[BenchmarkCase]:
        known = load_probes(require(self.known_path, "known-probe dataset"))
        return known_cases(self.cases(), known)

    def unlearn_config(self, method: str | None = None, **updates: Any) -> UnlearnConfig:
        if method is not None:
            updates["method"] = method
        return self.config.unlearn.model_copy(update=updates)

    def wrap_for(self, method: str) -> Wrap | None:
        if method != "ICU":
            return None
        return partial(icu_wrap, instruction=self.config.experiment.icu_instruction)

    # stages

    def gen_world(self) -> KnowledgeGraph:
        graph = generate_world(self.config.world)
        triples_path, schema_path = dump_world(graph, self.world_dir)
        self._manifest(
            self.world_dir,
            "gen_world",
            outputs={
                "triples": triples_path,
                "schema": schema_path,
                "entities": self.world_dir / ENTITIES_FILENAME,
            },
            extra={
                "seed": self.config.world.seed,
                "entity_count": len(graph.entities),
                "triple_count": len(graph.triples),
            },
        )
        logger.info(
            "generated world with %d entities and %d triples",
            len(graph.entities),
            len(graph.triples),
        )
        return graph

    def build_bench(self) -> list[BenchmarkCase]:
        graph = self.graph()
        selection = self.config.selection
        cases = build_cases(graph, self.bank, selection, self.config.filtration, selection.seed)
        dataset = emit_dataset(
            cases, self.dataset_path, seed=selection.seed, filtration=self.config.filtration
        )
        self._manifest(
            self.bench_dir,
            "build_bench",
            inputs=self._world_files(),
            outputs={
                "dataset": self.dataset_path,
                "dataset manifest": manifest_path_for(self.dataset_path),
            },
            extra={
                "target_count": dataset.target_count,
                "direct_qa_count": dataset.direct_qa_count,
                "rejection_counts": dataset.rejection_counts,
            },
        )
        return cases

    def pretrain(self) -> PretrainResult:
        """Train the base model, then keep only the probes it answers."""
        cfg = self.config
        graph = self.graph()
        cases = self.cases()
        refusal = cfg.unlearn.refusal
        instruction = cfg.experiment.icu_instruction
        corpus = build_corpus(
            graph,
            self.bank,
            cases,
            rehearse_compositions=cfg.pretrain.rehearse_compositions,
            include_icu_demonstrations=cfg.pretrain.include_icu_demonstrations,
            refusal=refusal,
            instruction=instruction,
        )
        tokenizer = build_tokenizer(
            graph, corpus, cases, refusal=refusal, instruction=instruction
        )
        model = TransformerLM(cfg.model.model_copy(update={"vocab_size": len(tokenizer)}))
        probes = [probe for case in cases for probe in case.probes]
        max_tokens = cfg.experiment.max_answer_tokens
        threshold = cfg.experiment.known_threshold

        def accuracy(current: TransformerLM) -> float:
            return direct_accuracy(current, tokenizer, probes, max_tokens, threshold)

        result = pretrain(
            model,
            encode_corpus(tokenizer, corpus),
            cfg.pretrain,
            tokenizer.pad_id,
            evaluate=accuracy,
        )
        self.model_dir.mkdir(parents=True, exist_ok=True)
        tokenizer.save(self.tokenizer_path)
        digest = save_checkpoint(model, self.base_checkpoint)

        known = filter_known(
            probes,
            lambda question: generate_answer(model, tokenizer, question, max_tokens),
            threshold,
        )
        write_probes(known.kept, self.known_path)
        self._manifest(
            self.model_dir,
            "pretrain",
            inputs={"dataset": self.dataset_path, **self._world_files()},
            outputs={
                "checkpoint": self.base_checkpoint,
                "tokenizer": self.tokenizer_path,
                "known probes": self.known_path,
            },
            extra={
                "checkpoint_sha256": digest,
                "corpus_size": len(corpus),
                "vocab_size": len(tokenizer),
                "epochs_run": result.epochs_run,
                "steps": result.steps,
                "initial_loss": result.initial_loss,
                "final_loss": result.epoch_losses[-1],
                "reached_accuracy_target": result.reached_target,
                "accuracy_history": result.accuracy_history,
                "known_probe_count": len(known.kept),
                "dropped_probe_count": len(known.dropped),
                "unusable_cases": list(known.unusable_cases),
            },
        )
        if not result.reached_target:
            logger.warning(
                "pretraining stopped after %d epochs below the accuracy target %.2f",
                result.epochs_run,
                cfg.pretrain.accuracy_target,
            )
        return result

    def _run(self, model: TransformerLM, config: UnlearnConfig) -> UnlearnRun:
        return run_unlearn(
            model,
            self.evaluation_cases(),
            self.graph(),
            self.bank,
            self.tokenizer(),
            config,
            self.config.adapters,
            reference_checkpoint=file_sha256(self.base_checkpoint),
        )

    def unlearn(self, method: str | None = None) -> UnlearnRun:
        config = self.unlearn_config(method)
        run_dir = self.run_dir(config.method)
        model = self.base_model()
        try:
            run = self._run(model, config)
        except TrainingDivergedError:
            save_checkpoint(model, run_dir / "last_good.ckpt")
            logger.error("saved the last good %s model to %s", config.method, run_dir)
            raise
        outputs = {"losses": run_dir / "losses.csv"}
        reports.write_losses_csv(run.epochs, outputs["losses"])
        if config.method != "ICU":
            outputs["checkpoint"] = run_dir / "model.ckpt"
            run.final_checkpoint = save_checkpoint(model, outputs["checkpoint"])
        self._manifest(
            run_dir,
            "unlearn",
            inputs={"base checkpoint": self.base_checkpoint, "known probes": self.known_path},
            outputs=outputs,
            extra={
                "method": config.method,
                "steps": run.steps,
                "reference_checkpoint": run.reference_checkpoint,
                "final_checkpoint": run.final_checkpoint,
            },
        )
        return run

    def _policy(self, method: str) -> TransformerLM:
        if method == "ICU":
            return self.base_model()
        path = self.run_dir(method) / "model.ckpt"
        return load_checkpoint(require(path, f"{method} checkpoint"))

    def _eval_probes(self, cases: Sequence[BenchmarkCase]) -> list[Probe]:
        return [probe for case in cases for probe in case.probes]

    def pre_outputs(self, base: TransformerLM, tokenizer: Tokenizer) -> list[ProbeOutput]:
        if self._pre_outputs is None:
            self._pre_outputs = generate_outputs(
                base,
                tokenizer,
                self._eval_probes(self.evaluation_cases()),
                self.config.experiment.max_answer_tokens,
            )
        return self._pre_outputs

    def _boundary_and_drift(
        self,
        policy: TransformerLM,
        base: TransformerLM,
        tokenizer: Tokenizer,
        cases: Sequence[BenchmarkCase],
        wrap: Wrap | None,
    ) -> dict[str, Any]:
        cfg = self.config
        neighbor_sets = case_neighbor_sets(
            self.graph(),
            self.bank,
            cases,
            k=cfg.unlearn.k,
            hops=cfg.unlearn.neighbor_hops,
            uniform_weights=cfg.unlearn.uniform_weights,
        )
        direct = {
            case.case_id: next(
                p for p in case.probes if p.probe_type == "direct" and p.template_family == "QA"
            )
            for case in cases
        }
        forget = [_gold(direct[case.case_id]) for case in cases]
        retain = [_gold(p) for case in cases for p in case.probes if p.probe_type == "retain"]
        neighbors = [item.pair for s in neighbor_sets.values() for item in s.items]
        boundary = boundary_report(
            policy,
            base,
            tokenizer,
            forget,
            retain,
            neighbors,
            cfg.experiment.boundary_epsilon,
            cfg.unlearn.refusal,
            wrap,
        )
        drift = drift_report(
            base,
            policy,
            tokenizer,
            [pair.question for pair in forget],
            [pair.question for pair in neighbors],
            [pair.question for pair in retain],
            [(_gold(direct[cid]), neighbor_sets[cid]) for cid in neighbor_sets],
            cfg.unlearn.beta,
        )
        return {"boundary": asdict(boundary), "drift": asdict(drift)}

    def evaluate(self, method: str | None = None) -> list[MetricsReport]:
        """Score one method against the base model; no method gives the before-unlearning row."""
        tokenizer = self.tokenizer()
        base = self.base_model()
        cases = self.evaluation_cases()
        pre = self.pre_outputs(base, tokenizer)
        out_dir = self.report_dir(method)
        inputs = {"base checkpoint": self.base_checkpoint, "known probes": self.known_path}
        if method is None:
            metric_rows = family_reports(reports.BEFORE_LABEL, pre, pre)
            policy, wrap = base, None
        else:
            policy, wrap = self._policy(method), self.wrap_for(method)
            if method != "ICU":
                inputs["policy checkpoint"] = self.run_dir(method) / "model.ckpt"
            post = generate_outputs(
                policy,
                tokenizer,
                self._eval_probes(cases),
                self.config.experiment.max_answer_tokens,
                wrap,
            )
            metric_rows = family_reports(method, post, pre)
        diagnostics = self._boundary_and_drift(policy, base, tokenizer, cases, wrap)
        metrics_path = out_dir / "metrics.csv"
        reports.write_metrics_csv(metric_rows, metrics_path)
        reports.write_json(diagnostics["boundary"], out_dir / "boundary.json")
        reports.write_json(diagnostics["drift"], out_dir / "drift.json")
        self._manifest(
            out_dir,
            "eval",
            inputs=inputs,
            outputs={
                "metrics": metrics_path,
                "boundary": out_dir / "boundary.json",
                "drift": out_dir / "drift.json",
            },
            extra={"method": method or reports.BEFORE_LABEL, "note": reports.RECALL_NOTE},
        )
        return metric_rows

    def _train_and_score(self, config: UnlearnConfig) -> MetricsReport:
        tokenizer = self.tokenizer()
        pre = self.pre_outputs(self.base_model(), tokenizer)
        model = self.base_model()
        self._run(model, config)
        post = generate_outputs(
            model,
            tokenizer,
            [o.probe for o in pre],
            self.config.experiment.max_answer_tokens,
            self.wrap_for(config.method),
        )
        return metrics_report(config.method, "All", post, pre)

    def sweep(
        self, method: str | None = None
    ) -> tuple[list[reports.SweepEntry], reports.SweepEntry]:
        """Unlearn once per learning rate; failed runs stay in the grid with a marker."""
        method = method or self.config.unlearn.method
        entries = []
        for rate in self.config.sweep.learning_rates:
            try:
                report = self._train_and_score(self.unlearn_config(method, learning_rate=rate))
            except LabError as exc:
                logger.warning("%s sweep at lr %g failed: %s", method, rate, exc)
                entries.append(
                    reports.SweepEntry(rate, math.nan, math.nan, math.nan, f"failed: {exc}")
                )
                continue
            entries.append(
                reports.SweepEntry(
                    rate, report.ue_by_type["direct"], report.locality, report.hmean
                )
            )
        out_dir = self.sweep_dir(method)
        grid_path = out_dir / "grid.csv"
        reports.write_sweep_csv(entries, grid_path)
        self._manifest(
            out_dir,
            "sweep",
            inputs={"base checkpoint": self.base_checkpoint, "known probes": self.known_path},
            outputs={"grid": grid_path},
            extra={"method": method},
        )
        best = reports.select_best_learning_rate(entries)
        reports.write_json(asdict(best), out_dir / "best.json")
        return entries, best

    def ablate_corruption(self) -> pl.DataFrame:
        rows = []
        for rate in self.config.sweep.corruption_rates:
            report = self._train_and_score(self.unlearn_config("NEDS", corruption_rate=rate))
            rows.append(
                {
                    "corruption_rate": rate,
                    "DirectUE": report.ue_by_type["direct"],
                    "MultiHopUE": report.ue_by_type["multi_hop"],
                    "Locality": report.locality,
                }
            )
            logger.info("corruption %.2f: %s", rate, rows[-1])
        path = self.ablation_dir / "corruption.csv"
        frame = reports.write_rows_csv(rows, path)
        self._manifest(
            self.ablation_dir,
            "ablate_corruption",
            inputs={"base checkpoint": self.base_checkpoint, "known probes": self.known_path},
            outputs={"table": path},
        )
        return frame

    def compare_seeds(
        self, methods: Sequence[str] | None = None, seeds: Sequence[int] | None = None
    ) -> pl.DataFrame:
        """Unlearn every method once per seed and apply the majority rule to the orderings."""
        methods = list(methods or self.config.experiment.methods)
        seeds = list(seeds or self.config.experiment.seeds)
        tokenizer = self.tokenizer()
        base = self.base_model()
        cases = self.evaluation_cases()
        pre = self.pre_outputs(base, tokenizer)
        before = self._boundary_and_drift(base, base, tokenizer, cases, None)
        before_auc = before["boundary"]["roc_auc"]
        rows = []
        for seed in seeds:
            for method in methods:
                model = self.base_model()
                self._run(model, self.unlearn_config(method, seed=seed))
                wrap = self.wrap_for(method)
                post = generate_outputs(
                    model,
                    tokenizer,
                    [o.probe for o in pre],
                    self.config.experiment.max_answer_tokens,
                    wrap,
                )
                report = metrics_report(method, "All", post, pre)
                diagnostics = self._boundary_and_drift(model, base, tokenizer, cases, wrap)
                boundary, drift = diagnostics["boundary"], diagnostics["drift"]
                rows.append(
                    {
                        "seed": seed,
                        "method": method,
                        "DirectUE": report.ue_by_type["direct"],
                        "MultiHopUE": report.ue_by_type["multi_hop"],
                        "Locality": report.locality,
                        "Hmean": report.hmean,
                        "RocAuc": boundary["roc_auc"],
                        "LogprobGap": boundary["logprob_gap"],
                        "NeighborKL": boundary["mean_kl_neighbor"],
                        "NeighborWithinEps": boundary["neighbor_within_epsilon_fraction"],
                        "NeighborDrift": drift["neighbor_drift"],
                    }
                )
                logger.info("seed %d %s: %s", seed, method, rows[-1])
        table_path = self.seeds_dir / "per_seed.csv"
        frame = reports.write_rows_csv(rows, table_path)
        majority = reports.seed_majority(frame, before_auc)
        majority_path = self.seeds_dir / "majority.json"
        reports.write_json({"before_roc_auc": before_auc, "checks": majority}, majority_path)
        self._manifest(
            self.seeds_dir,
            "compare_seeds",
            inputs={"base checkpoint": self.base_checkpoint, "known probes": self.known_path},
            outputs={"table": table_path, "majority": majority_path},
            extra={"seeds": seeds, "methods": methods},
        )
        return frame

    def report(self) -> pl.DataFrame:
        """Collect every evaluated method into one table, summary record and ΔKCS chart."""
        names = [BEFORE_DIR, *self.config.experiment.methods]
        found = {
            name: self.report_dir(name) / "metrics.csv"
            for name in names
            if (self.report_dir(name) / "metrics.csv").exists()
        }
        if not found:
            raise MissingArtifactError(
                f"no evaluated method under {self.root / 'reports'}; run eval first"
            )
        frame = pl.concat([reports.read_metrics_csv(path) for path in found.values()])
        out_dir = self.root / "reports"
        summary_csv = out_dir / "summary.csv"
        frame.write_csv(summary_csv)
        payload = reports.summary_payload(frame)
        payload["diagnostics"] = {
            name: {
                kind: reports.read_json(self.report_dir(name) / f"{kind}.json")
                for kind in ("boundary", "drift")
                if (self.report_dir(name) / f"{kind}.json").exists()
            }
            for name in found
        }
        majority_path = self.seeds_dir / "majority.json"
        if majority_path.exists():
            payload["seed_majority"] = reports.read_json(majority_path)
        reports.write_json(payload, out_dir / "summary.json")
        reports.delta_kcs_chart(frame, out_dir / "delta_kcs.svg")
        self._manifest(
            out_dir,
            "report",
            inputs={f"{name} metrics": path for name, path in found.items()},
            outputs={
                "summary": summary_csv,
                "summary record": out_dir / "summary.json",
                "chart": out_dir / "delta_kcs.svg",
            },
        )
        return frame
