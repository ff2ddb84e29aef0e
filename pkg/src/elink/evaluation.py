"""Scoring, difficulty distributions, reports, degradation runs.

Headline metric is precision@1: the single predicted QID against gold,
an absent prediction counting as wrong. Reports break that down by the
difficulty of each mention's candidate set and compare candidate
quality before and after the pipeline's refinement. All writers are
deterministic: fixed key order, fixed row order, no timestamps, so a
replayed run produces byte-identical files.
"""

from __future__ import annotations

import csv
import json
import logging
import os
from collections import Counter
from dataclasses import dataclass
from typing import Callable, Dict, List, Mapping, Sequence, Tuple

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .corpus import DifficultyCategory, Document, remove_fraction
from .errors import KeyMismatchError, MissingGoldError
from .linker import LinkResult, PipelineConfig

LOGGER = logging.getLogger(__name__)

CATEGORY_ORDER = [c.value for c in DifficultyCategory]  # easy, hard, difficult, none
DIFF_KEY = "diff"  # aggregate of difficult + none
DIFF_DEFINITION = "diff = difficult + none (gold absent from candidates, or no candidates)"


@dataclass
class CategoryStats:
    total: int
    correct: int

    @property
    def precision(self) -> float:
        return self.correct / self.total if self.total else 0.0


@dataclass
class EvalReport:
    total: int
    correct: int
    precision_at_1: float
    per_category: Dict[str, CategoryStats]
    distribution_before: Dict[str, int]
    distribution_after: Dict[str, int]
    config_digest: str


def precision_at_1(results: Sequence[LinkResult], gold: Mapping[str, str]) -> float:
    """Fraction of results whose chosen_qid equals gold; None is wrong."""
    missing = [r.mention_id for r in results if r.mention_id not in gold]
    if missing:
        raise MissingGoldError(f"no gold qid for: {', '.join(sorted(missing))}")
    if not results:
        return 0.0
    correct = sum(1 for r in results if r.chosen_qid == gold[r.mention_id])
    return correct / len(results)


def _categorize_qids(gold_qid: str, qids: Sequence[str]) -> str:
    if not qids:
        return DifficultyCategory.NONE.value
    if qids[0] == gold_qid:
        return DifficultyCategory.EASY.value
    if gold_qid in qids:
        return DifficultyCategory.HARD.value
    return DifficultyCategory.DIFFICULT.value


def candidate_distribution(
    candidate_sets: Mapping[str, Sequence], gold: Mapping[str, str]
) -> Dict[str, int]:
    """Count mentions per difficulty category given their candidates."""
    missing = [mid for mid in candidate_sets if mid not in gold]
    if missing:
        raise MissingGoldError(f"no gold qid for: {', '.join(sorted(missing))}")
    counts = Counter(
        _categorize_qids(gold[mid], [c.qid for c in cans])
        for mid, cans in candidate_sets.items()
    )
    return {key: counts.get(key, 0) for key in CATEGORY_ORDER}


def candidate_quality_report(
    before: Mapping[str, Sequence],
    after: Mapping[str, Sequence],
    gold: Mapping[str, str],
) -> Tuple[Dict[str, int], Dict[str, int]]:
    """Difficulty distributions for the raw and the refined candidate sets."""
    if set(before) != set(after):
        only_before = sorted(set(before) - set(after))[:5]
        only_after = sorted(set(after) - set(before))[:5]
        raise KeyMismatchError(
            f"before/after mention ids differ (before-only {only_before}, after-only {only_after})"
        )
    return candidate_distribution(before, gold), candidate_distribution(after, gold)


def category_breakdown(
    results: Sequence[LinkResult],
    gold: Mapping[str, str],
    candidate_sets: Mapping[str, Sequence],
) -> Dict[str, CategoryStats]:
    """Per-difficulty accuracy, plus the aggregate diff row."""
    if set(r.mention_id for r in results) != set(candidate_sets):
        raise KeyMismatchError("results and candidate_sets cover different mention ids")
    stats = {key: CategoryStats(0, 0) for key in CATEGORY_ORDER}
    stats[DIFF_KEY] = CategoryStats(0, 0)
    for result in results:
        if result.mention_id not in gold:
            raise MissingGoldError(f"no gold qid for {result.mention_id}")
        gold_qid = gold[result.mention_id]
        category = _categorize_qids(
            gold_qid, [c.qid for c in candidate_sets[result.mention_id]]
        )
        hit = int(result.chosen_qid == gold_qid)
        stats[category].total += 1
        stats[category].correct += hit
        if category in (DifficultyCategory.DIFFICULT.value, DifficultyCategory.NONE.value):
            stats[DIFF_KEY].total += 1
            stats[DIFF_KEY].correct += hit
    return stats


def build_report(
    results: Sequence[LinkResult],
    gold: Mapping[str, str],
    before: Mapping[str, Sequence],
    after: Mapping[str, Sequence],
    cfg: PipelineConfig,
) -> EvalReport:
    dist_before, dist_after = candidate_quality_report(before, after, gold)
    per_category = category_breakdown(results, gold, after)
    correct = sum(1 for r in results if r.chosen_qid == gold.get(r.mention_id))
    return EvalReport(
        total=len(results),
        correct=correct,
        precision_at_1=precision_at_1(results, gold),
        per_category=per_category,
        distribution_before=dist_before,
        distribution_after=dist_after,
        config_digest=cfg.digest(),
    )


def degradation_experiment(
    docs: Sequence[Document],
    fractions: Sequence[float],
    seed: int,
    link_fn: Callable[[Sequence[Document]], Sequence[LinkResult]],
) -> List[Tuple[float, float]]:
    """Precision after removing growing fractions of the mention annotations.

    Removed mentions stay in the denominator and count as wrong, so the
    curve reflects lost knowledge rather than a shrinking test set.
    """
    if list(fractions) != sorted(fractions):
        raise ValueError("fractions must be ascending")
    if any(not 0.0 <= f <= 1.0 for f in fractions):
        raise ValueError("fractions must lie in [0, 1]")
    gold = {m.id: m.gold_qid for doc in docs for m in doc.mentions}
    if any(qid is None for qid in gold.values()):
        raise MissingGoldError("degradation needs gold qids on every mention")
    total = len(gold)
    rows = []
    for fraction in fractions:
        reduced = remove_fraction(docs, fraction, seed)
        results = link_fn(reduced)
        correct = sum(1 for r in results if r.chosen_qid == gold.get(r.mention_id))
        precision = correct / total if total else 0.0
        rows.append((fraction, precision))
        LOGGER.info("fraction %.2f -> precision %.4f", fraction, precision)
    return rows


# -- writers -------------------------------------------------------------------


def report_to_dict(report: EvalReport) -> dict:
    return {
        "total": report.total,
        "correct": report.correct,
        "precision_at_1": report.precision_at_1,
        "per_category": {
            key: {
                "total": stats.total,
                "correct": stats.correct,
                "precision": stats.precision,
            }
            for key, stats in sorted(report.per_category.items())
        },
        "distribution_before": report.distribution_before,
        "distribution_after": report.distribution_after,
        "config_digest": report.config_digest,
        "diff_definition": DIFF_DEFINITION,
    }


def write_report(report: EvalReport, out_dir) -> List[str]:
    """Write report.json, report.csv, distributions.csv and figures.

    Returns the paths written. The delimited outputs are deterministic;
    figures are rendered next to them for human eyes.
    """
    os.makedirs(out_dir, exist_ok=True)
    written = []

    json_path = os.path.join(out_dir, "report.json")
    with open(json_path, "w", encoding="utf-8") as handle:
        json.dump(report_to_dict(report), handle, indent=2, sort_keys=True)
        handle.write("\n")
    written.append(json_path)

    csv_path = os.path.join(out_dir, "report.csv")
    with open(csv_path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["section", "key", "value"])
        writer.writerow(["note", "diff", DIFF_DEFINITION])
        writer.writerow(["overall", "total", report.total])
        writer.writerow(["overall", "correct", report.correct])
        writer.writerow(["overall", "precision_at_1", f"{report.precision_at_1:.4f}"])
        for key in CATEGORY_ORDER + [DIFF_KEY]:
            stats = report.per_category.get(key, CategoryStats(0, 0))
            writer.writerow(["category_total", key, stats.total])
            writer.writerow(["category_precision", key, f"{stats.precision:.4f}"])
    written.append(csv_path)

    dist_path = os.path.join(out_dir, "distributions.csv")
    write_distributions(report.distribution_before, report.distribution_after, dist_path)
    written.append(dist_path)

    written.append(
        plot_distributions(
            report.distribution_before,
            report.distribution_after,
            os.path.join(out_dir, "distributions.png"),
        )
    )
    written.append(
        plot_category_precision(
            report.per_category, os.path.join(out_dir, "category_precision.png")
        )
    )
    return written


def write_distributions(before: Mapping[str, int], after: Mapping[str, int], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["category", "before", "after"])
        for key in CATEGORY_ORDER:
            writer.writerow([key, before.get(key, 0), after.get(key, 0)])


def write_predictions(results: Sequence[LinkResult], path) -> None:
    """One JSON object per result, fixed field order."""
    with open(path, "w", encoding="utf-8") as handle:
        for r in results:
            row = {
                "mention_id": r.mention_id,
                "chosen_qid": r.chosen_qid,
                "method": r.method.value,
                "iterations_used": r.iterations_used,
                "used_fallback": r.used_fallback,
            }
            handle.write(json.dumps(row, ensure_ascii=False))
            handle.write("\n")


def write_candidates(candidate_sets: Mapping[str, Sequence], path) -> None:
    """mention_id -> candidate list as JSONL, insertion order kept."""
    with open(path, "w", encoding="utf-8") as handle:
        for mention_id, cans in candidate_sets.items():
            row = {
                "mention_id": mention_id,
                "candidates": [
                    {
                        "qid": c.qid,
                        "label": c.label,
                        "description": c.description,
                        "search_rank": c.search_rank,
                        "source": c.source.value,
                    }
                    for c in cans
                ],
            }
            handle.write(json.dumps(row, ensure_ascii=False))
            handle.write("\n")


def write_degradation(rows: Sequence[Tuple[float, float]], out_dir) -> List[str]:
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, "degradation.csv")
    with open(csv_path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["fraction_removed", "precision_at_1"])
        for fraction, precision in rows:
            writer.writerow([f"{fraction:.2f}", f"{precision:.4f}"])
    figure_path = plot_degradation(rows, os.path.join(out_dir, "degradation.png"))
    return [csv_path, figure_path]


# -- figures -------------------------------------------------------------------


def plot_distributions(before, after, path) -> str:
    fig, ax = plt.subplots(figsize=(6, 4))
    positions = range(len(CATEGORY_ORDER))
    width = 0.38
    ax.bar(
        [p - width / 2 for p in positions],
        [before.get(k, 0) for k in CATEGORY_ORDER],
        width,
        label="before",
    )
    ax.bar(
        [p + width / 2 for p in positions],
        [after.get(k, 0) for k in CATEGORY_ORDER],
        width,
        label="after",
    )
    ax.set_xticks(list(positions))
    ax.set_xticklabels(CATEGORY_ORDER)
    ax.set_ylabel("mentions")
    ax.set_title("Candidate difficulty before and after refinement")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_category_precision(per_category: Mapping[str, CategoryStats], path) -> str:
    keys = CATEGORY_ORDER + [DIFF_KEY]
    values = [per_category.get(k, CategoryStats(0, 0)).precision for k in keys]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(keys, values)
    ax.set_ylim(0.0, 1.0)
    ax.set_ylabel("precision@1")
    ax.set_title("Precision by candidate difficulty")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_degradation(rows: Sequence[Tuple[float, float]], path) -> str:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot([f for f, _ in rows], [p for _, p in rows], marker="o")
    ax.set_xlabel("fraction of mention annotations removed")
    ax.set_ylabel("precision@1")
    ax.set_ylim(0.0, 1.0)
    ax.set_title("Degradation under knowledge removal")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path
