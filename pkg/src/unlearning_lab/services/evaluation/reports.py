"""CSV, JSON and SVG report writers.

Metric rows keep a fixed column order: forget-set groups, locality, refusal rate, then the
knowledge-consistency columns and Hmean.
"""

from __future__ import annotations

import json
import logging
import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any

import matplotlib as mpl
import polars as pl
from matplotlib.figure import Figure

from unlearning_lab.exceptions import MetricInputError
from unlearning_lab.services.types import EpochLosses, MetricsReport

logger = logging.getLogger(__name__)

BEFORE_LABEL = "BE (before)"
METRIC_COLUMNS: tuple[str, ...] = (
    "method",
    "template_family",
    "Direct",
    "Paraphrase",
    "Inverse",
    "Multi-hops",
    "Locality",
    "RefusalRate",
    "KCS_pre",
    "KCS_post",
    "dKCS",
    "Hmean",
)
METRIC_SCHEMA: dict[str, type[pl.DataType]] = {
    "method": pl.String,
    "template_family": pl.String,
    **{column: pl.Float64 for column in METRIC_COLUMNS[2:]},
}
LOSS_SCHEMA: dict[str, type[pl.DataType]] = {
    "epoch": pl.Int64,
    "steps": pl.Int64,
    "forget": pl.Float64,
    "anchor": pl.Float64,
    "retain": pl.Float64,
    "total": pl.Float64,
}
RECALL_NOTE = (
    "UE, Locality and KCS use ROUGE-L recall on case-folded word tokens; "
    "logprob_gap is mean retain minus mean forget per-token log-probability"
)
TOY_MODEL_FOOTER = (
    "Scores come from a small transformer trained from scratch on a synthetic world; "
    "absolute values are not comparable with billion-parameter models, orderings are"
)


def _round(value: float) -> float:
    return value if math.isnan(value) else round(value, 6)


def metric_row(report: MetricsReport) -> dict[str, Any]:
    ue = report.ue_by_type
    values = (
        ue.get("direct", math.nan),
        ue.get("paraphrase", math.nan),
        ue.get("inverse", math.nan),
        ue.get("multi_hop", math.nan),
        report.locality,
        report.refusal_rate,
        report.kcs_pre,
        report.kcs_post,
        report.delta_kcs,
        report.hmean,
    )
    return {
        "method": report.method,
        "template_family": report.template_family,
        **{column: _round(v) for column, v in zip(METRIC_COLUMNS[2:], values, strict=True)},
    }


def metrics_frame(reports: Iterable[MetricsReport]) -> pl.DataFrame:
    return pl.DataFrame([metric_row(report) for report in reports], schema=METRIC_SCHEMA)


def write_metrics_csv(reports: Iterable[MetricsReport], path: Path) -> pl.DataFrame:
    frame = metrics_frame(reports)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.write_csv(path)
    logger.info("wrote %d metric rows to %s", frame.height, path)
    return frame


def read_metrics_csv(path: Path) -> pl.DataFrame:
    return pl.read_csv(path).select(METRIC_COLUMNS)


def write_losses_csv(epochs: Sequence[EpochLosses], path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    pl.DataFrame([asdict(epoch) for epoch in epochs], schema=LOSS_SCHEMA).write_csv(path)


def write_json(payload: Mapping[str, Any], path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_json(path: Path) -> Any:
    return json.loads(path.read_text(encoding="utf-8"))


def summary_payload(frame: pl.DataFrame) -> dict[str, Any]:
    return {
        "rows": frame.to_dicts(),
        "note": RECALL_NOTE,
        "footer": TOY_MODEL_FOOTER,
    }


def delta_kcs_chart(frame: pl.DataFrame, path: Path) -> None:
    """Bar chart of pooled ΔKCS per method, written as SVG with stable bytes."""
    pooled = frame.filter(pl.col("template_family") == "All")
    methods = pooled["method"].to_list()
    values = [0.0 if v is None or math.isnan(v) else v for v in pooled["dKCS"].to_list()]
    path.parent.mkdir(parents=True, exist_ok=True)
    with mpl.rc_context({"svg.hashsalt": "delta-kcs", "svg.fonttype": "none"}):
        fig = Figure(figsize=(6, 3.5))
        ax = fig.subplots()
        ax.bar(methods, values, color=["#4c72b0" if v <= 0 else "#c44e52" for v in values])
        ax.axhline(0.0, color="black", linewidth=0.8)
        ax.set_ylabel("ΔKCS (post − pre)")
        ax.set_title("Knowledge consistency change per method")
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
    logger.info("wrote ΔKCS chart to %s", path)


@dataclass(slots=True, frozen=True)
class SweepEntry:
    learning_rate: float
    ue_direct: float
    locality: float
    hmean: float
    status: str = "ok"


def select_best_learning_rate(entries: Sequence[SweepEntry]) -> SweepEntry:
    """Highest Hmean among successful runs; the earlier grid entry wins a tie."""
    finished = [e for e in entries if e.status == "ok" and not math.isnan(e.hmean)]
    if not finished:
        raise MetricInputError("no sweep run finished; nothing to select")
    best = finished[0]
    for entry in finished[1:]:
        if entry.hmean > best.hmean:
            best = entry
    return best


def write_sweep_csv(entries: Sequence[SweepEntry], path: Path) -> pl.DataFrame:
    frame = pl.DataFrame(
        [
            {
                "learning_rate": e.learning_rate,
                "DirectUE": _round(e.ue_direct),
                "Locality": _round(e.locality),
                "Hmean": _round(e.hmean),
                "status": e.status,
            }
            for e in entries
        ]
    )
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.write_csv(path)
    return frame


def write_rows_csv(rows: Sequence[Mapping[str, Any]], path: Path) -> pl.DataFrame:
    frame = pl.DataFrame(
        [{key: _round(v) if isinstance(v, float) else v for key, v in row.items()} for row in rows]
    )
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.write_csv(path)
    return frame


MULTI_HOP_SLACK = 0.02
MIN_AUC_GAIN = 0.10


def seed_orderings(rows: Mapping[str, Mapping[str, Any]], before_auc: float) -> dict[str, bool]:
    """Method orderings that held for one seed; an ordering naming an absent method is skipped."""
    neds = rows.get("NEDS")
    if neds is None:
        return {}
    checks = {"neds_auc_gain": neds["RocAuc"] - before_auc >= MIN_AUC_GAIN}
    npo = rows.get("NPO")
    if npo is not None:
        checks["neds_multi_hop_vs_npo"] = neds["MultiHopUE"] >= npo["MultiHopUE"] - MULTI_HOP_SLACK
        checks["neds_logprob_gap_vs_npo"] = neds["LogprobGap"] > npo["LogprobGap"]
        checks["neds_neighbor_kl_vs_npo"] = neds["NeighborKL"] < npo["NeighborKL"]
        checks["neds_neighbor_drift_vs_npo"] = neds["NeighborDrift"] < npo["NeighborDrift"]
        checks["neds_within_epsilon_vs_npo"] = (
            neds["NeighborWithinEps"] > npo["NeighborWithinEps"]
        )
    for rival in ("GA", "GD"):
        other = rows.get(rival)
        if other is not None:
            checks[f"neds_hmean_vs_{rival.lower()}"] = neds["Hmean"] > other["Hmean"]
    return checks


def seed_majority(frame: pl.DataFrame, before_auc: float) -> dict[str, dict[str, Any]]:
    """For each ordering, the seeds it held on and whether they are a strict majority."""
    seeds = frame["seed"].unique(maintain_order=True).to_list()
    held: dict[str, list[int]] = {}
    for seed in seeds:
        rows = {
            row["method"]: row
            for row in frame.filter(pl.col("seed") == seed).iter_rows(named=True)
        }
        for name, ok in seed_orderings(rows, before_auc).items():
            held.setdefault(name, [])
            if ok:
                held[name].append(seed)
    return {
        name: {"held_on": on, "seeds": len(seeds), "majority": 2 * len(on) > len(seeds)}
        for name, on in held.items()
    }
