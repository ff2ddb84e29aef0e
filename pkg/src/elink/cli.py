"""Command line interface.

    elink link     --dataset data.jsonl --output-dir out [--replay --cassette c.json]
    elink eval     --dataset data.jsonl --predictions out/predictions.jsonl
    elink analyze  --dataset data.jsonl --before b.jsonl --after a.jsonl --output-dir out
    elink degrade  --dataset data.jsonl --fractions 0,0.1,0.3 --output-dir out
    elink convert-aida --input aida.tsv --output data.jsonl

Exit codes: 0 success, 1 fatal error, 2 finished with per-mention
failures. Flags beat config-file values; the config file is flat
key=value lines with # comments, keys named like the flags.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from typing import Dict, List, Optional, Sequence

from . import evaluation
from .cassette import CassetteMode, open_transport
from .corpus import SegmentMode, dump_dataset, load_dataset, read_aida_tsv
from .errors import ElinkError, MissingGoldError
from .kg import Candidate, CandidateSource, WikidataClient
from .linker import Ablation, CombineStrategy, LinkMethod, Pipeline, PipelineConfig
from .llm import ChatClient, ChatParams, LlmAgents
from .similarity import BleuScorer, EmbeddingClient, EmbeddingScorer

LOGGER = logging.getLogger(__name__)

_CONFIG_KEYS = {
    "variant": str,
    "mode": str,
    "window_tokens": int,
    "search_limit": int,
    "top_k_sea": int,
    "top_k_sim": int,
    "strategy": str,
    "max_iterations": int,
    "mc_option_cap": int,
    "scorer": str,
    "ablations": str,  # comma separated
    "understanding_shots": int,
    "choice_shots": int,
    "no_mc_style": str,
    "language": str,
    "seed": int,
    "temperature": float,
    "max_input_tokens": int,
    "max_output_tokens": int,
    "workers": int,
}


def load_config_file(path) -> Dict[str, object]:
    """Flat key=value file; unknown keys are rejected loudly."""
    values: Dict[str, object] = {}
    with open(path, "r", encoding="utf-8") as handle:
        for line_no, raw in enumerate(handle, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{line_no}: expected key=value, got {raw.strip()!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in _CONFIG_KEYS:
                raise ValueError(f"{path}:{line_no}: unknown config key {key!r}")
            values[key] = _CONFIG_KEYS[key](value)
    return values


def _pipeline_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat key=value config file; flags win")
    parser.add_argument("--cassette", help="cassette file for --record / --replay")
    mode = parser.add_mutually_exclusive_group()
    mode.add_argument("--record", action="store_true", help="record all HTTP traffic")
    mode.add_argument("--replay", action="store_true", help="serve HTTP from the cassette only")
    parser.add_argument(
        "--ablate",
        action="append",
        choices=[a.value for a in Ablation],
        default=None,
        help="disable a pipeline stage (repeatable)",
    )
    parser.add_argument("--variant", choices=["3-0", "3-1", "4-0", "4-1", "5-0"])
    parser.add_argument("--mode", choices=[m.value for m in SegmentMode])
    parser.add_argument("--window", type=int, choices=[64, 128], dest="window_tokens")
    parser.add_argument("--strategy", choices=[s.value for s in CombineStrategy])
    parser.add_argument("--scorer", choices=["bleu", "embedding"])
    parser.add_argument("--mc-cap", type=int, dest="mc_option_cap")
    parser.add_argument("--max-iter", type=int, dest="max_iterations")
    parser.add_argument("--workers", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--kg-cache-dir", help="optional on-disk search cache")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="elink", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    link = sub.add_parser("link", help="run the linking pipeline over a dataset")
    link.add_argument("--dataset", required=True)
    link.add_argument("--output-dir", required=True)
    _pipeline_flags(link)

    evl = sub.add_parser("eval", help="score a predictions file against gold")
    evl.add_argument("--dataset", required=True)
    evl.add_argument("--predictions", required=True)
    evl.add_argument("--candidates", help="candidates JSONL for the per-category table")

    analyze = sub.add_parser("analyze", help="candidate quality before vs after")
    analyze.add_argument("--dataset", required=True)
    analyze.add_argument("--before", required=True)
    analyze.add_argument("--after", required=True)
    analyze.add_argument("--output-dir", required=True)

    degrade = sub.add_parser("degrade", help="precision under knowledge removal")
    degrade.add_argument("--dataset", required=True)
    degrade.add_argument("--output-dir", required=True)
    degrade.add_argument("--fractions", default="0,0.1,0.3,0.5,0.7")
    _pipeline_flags(degrade)

    convert = sub.add_parser("convert-aida", help="AIDA-CoNLL TSV to dataset JSONL")
    convert.add_argument("--input", required=True)
    convert.add_argument("--output", required=True)

    return parser


def make_config(args) -> PipelineConfig:
    file_values = load_config_file(args.config) if getattr(args, "config", None) else {}

    def pick(key, fallback):
        flag = getattr(args, key, None)
        if flag is not None:
            return flag
        return file_values.get(key, fallback)

    ablations = getattr(args, "ablate", None)
    if ablations is None:
        raw = file_values.get("ablations", "")
        ablations = [a for a in str(raw).split(",") if a.strip()]
    cfg = PipelineConfig(
        variant=pick("variant", "5-0"),
        mode=SegmentMode(pick("mode", SegmentMode.MEN.value)),
        window_tokens=pick("window_tokens", 64),
        search_limit=pick("search_limit", 200),
        top_k_sea=pick("top_k_sea", 5),
        top_k_sim=pick("top_k_sim", 5),
        strategy=CombineStrategy(pick("strategy", CombineStrategy.SEA_THEN_SIM.value)),
        max_iterations=pick("max_iterations", 5),
        mc_option_cap=pick("mc_option_cap", 10),
        scorer=pick("scorer", "bleu"),
        ablations=frozenset(Ablation(a) for a in ablations),
        understanding_shots=pick("understanding_shots", 32),
        choice_shots=pick("choice_shots", 2),
        no_mc_style=LinkMethod(pick("no_mc_style", LinkMethod.STRING_MATCH.value)),
        language=pick("language", "en"),
        seed=pick("seed", 0),
    )
    cfg.validate()
    return cfg


def _make_chat_params(args) -> ChatParams:
    file_values = load_config_file(args.config) if getattr(args, "config", None) else {}
    return ChatParams(
        temperature=file_values.get("temperature", 0.75),
        max_input_tokens=file_values.get("max_input_tokens", 256),
        max_output_tokens=file_values.get("max_output_tokens", 256),
    )


def _cassette_mode(args) -> CassetteMode:
    if getattr(args, "replay", False):
        return CassetteMode.REPLAY
    if getattr(args, "record", False):
        return CassetteMode.RECORD
    return CassetteMode.PASSTHROUGH


def build_pipeline(args, cfg: PipelineConfig):
    """Returns (pipeline, cassette or None)."""
    mode = _cassette_mode(args)
    if mode is not CassetteMode.PASSTHROUGH and not getattr(args, "cassette", None):
        raise ValueError("--record/--replay need --cassette")
    transport, cassette = open_transport(getattr(args, "cassette", None), mode)
    kg = WikidataClient(transport, cache_dir=getattr(args, "kg_cache_dir", None))
    chat = ChatClient(transport)
    agents = LlmAgents(
        chat,
        params=_make_chat_params(args),
        variant=cfg.variant,
        understanding_shots=cfg.understanding_shots,
        choice_shots=cfg.choice_shots,
        mc_option_cap=cfg.mc_option_cap,
        seed=cfg.seed,
    )
    if cfg.scorer == "embedding":
        scorer = EmbeddingScorer(EmbeddingClient(transport))
    else:
        scorer = BleuScorer()
    return Pipeline(cfg, kg, agents, scorer), cassette


def _read_predictions(path) -> List[dict]:
    rows = []
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            if line.strip():
                rows.append(json.loads(line))
    return rows


def _read_candidates(path) -> Dict[str, List[Candidate]]:
    mapping: Dict[str, List[Candidate]] = {}
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            if not line.strip():
                continue
            row = json.loads(line)
            mapping[row["mention_id"]] = [
                Candidate(
                    qid=c["qid"],
                    label=c.get("label", ""),
                    description=c.get("description", ""),
                    search_rank=c.get("search_rank", 0),
                    source=CandidateSource(c.get("source", "search")),
                )
                for c in row["candidates"]
            ]
    return mapping


def cmd_link(args) -> int:
    import os

    docs = load_dataset(args.dataset)
    cfg = make_config(args)
    pipeline, cassette = build_pipeline(args, cfg)
    workers = args.workers or 1
    results = []
    try:
        for doc in docs:
            results.extend(pipeline.link_document(doc, workers=workers))
    finally:
        if cassette is not None and _cassette_mode(args) is CassetteMode.RECORD:
            cassette.save()

    os.makedirs(args.output_dir, exist_ok=True)
    evaluation.write_predictions(results, os.path.join(args.output_dir, "predictions.jsonl"))
    complete = [r for r in results if r.error is None]
    before = {r.mention_id: list(r.initial_candidates.combined) for r in complete if r.initial_candidates}
    after = {r.mention_id: list(r.candidates.combined) for r in complete if r.candidates}
    evaluation.write_candidates(before, os.path.join(args.output_dir, "candidates_before.jsonl"))
    evaluation.write_candidates(after, os.path.join(args.output_dir, "candidates_after.jsonl"))

    gold = {m.id: m.gold_qid for doc in docs for m in doc.mentions}
    if complete and all(gold.get(r.mention_id) for r in complete):
        report = evaluation.build_report(complete, gold, before, after, cfg)
        evaluation.write_report(report, args.output_dir)
        print(f"precision@1: {report.precision_at_1:.4f}")
    else:
        LOGGER.info("gold incomplete; metrics skipped")

    failures = [r for r in results if r.error is not None]
    print(f"linked {len(results)} mentions, {len(failures)} failures -> {args.output_dir}")
    if failures:
        for r in failures[:10]:
            LOGGER.warning("failed %s: %s", r.mention_id, r.error)
        return 2
    return 0


def cmd_eval(args) -> int:
    docs = load_dataset(args.dataset)
    gold = {m.id: m.gold_qid for doc in docs for m in doc.mentions if m.gold_qid}
    rows = _read_predictions(args.predictions)
    predicted = {row["mention_id"]: row.get("chosen_qid") for row in rows}
    missing = sorted(set(gold) - set(predicted))
    if missing:
        raise MissingGoldError(
            f"predictions cover {len(predicted)} mentions but gold has {len(gold)}; "
            f"missing: {', '.join(missing[:20])}"
        )
    extra = [mid for mid in predicted if mid not in gold]
    if extra:
        raise MissingGoldError(f"no gold qid for predicted mentions: {', '.join(sorted(extra)[:20])}")
    correct = sum(1 for mid, qid in predicted.items() if qid == gold[mid])
    precision = correct / len(gold) if gold else 0.0
    print(f"precision@1: {precision:.4f}")
    print(f"correct: {correct}/{len(gold)}")
    if args.candidates:
        candidate_sets = _read_candidates(args.candidates)
        stats: Dict[str, List[int]] = {}
        for mid, qid in predicted.items():
            if mid not in candidate_sets:
                raise MissingGoldError(f"candidates file lacks mention {mid}")
            category = evaluation._categorize_qids(
                gold[mid], [c.qid for c in candidate_sets[mid]]
            )
            bucket = stats.setdefault(category, [0, 0])
            bucket[0] += 1
            bucket[1] += int(qid == gold[mid])
        print(f"note: {evaluation.DIFF_DEFINITION}")
        print("category total correct precision")
        diff_total = diff_correct = 0
        for key in evaluation.CATEGORY_ORDER:
            total, hit = stats.get(key, [0, 0])
            if key in ("difficult", "none"):
                diff_total += total
                diff_correct += hit
            rate = hit / total if total else 0.0
            print(f"{key} {total} {hit} {rate:.4f}")
        diff_rate = diff_correct / diff_total if diff_total else 0.0
        print(f"diff {diff_total} {diff_correct} {diff_rate:.4f}")
    return 0


def cmd_analyze(args) -> int:
    docs = load_dataset(args.dataset)
    gold = {m.id: m.gold_qid for doc in docs for m in doc.mentions if m.gold_qid}
    before = _read_candidates(args.before)
    after = _read_candidates(args.after)
    dist_before, dist_after = evaluation.candidate_quality_report(before, after, gold)
    import os

    os.makedirs(args.output_dir, exist_ok=True)
    evaluation.write_distributions(
        dist_before, dist_after, os.path.join(args.output_dir, "distributions.csv")
    )
    evaluation.plot_distributions(
        dist_before, dist_after, os.path.join(args.output_dir, "distributions.png")
    )
    print("category before after")
    for key in evaluation.CATEGORY_ORDER:
        print(f"{key} {dist_before.get(key, 0)} {dist_after.get(key, 0)}")
    return 0


def cmd_degrade(args) -> int:
    docs = load_dataset(args.dataset)
    cfg = make_config(args)
    pipeline, cassette = build_pipeline(args, cfg)
    fractions = [float(part) for part in args.fractions.split(",") if part.strip()]
    workers = args.workers or 1

    def link_fn(reduced):
        out = []
        for doc in reduced:
            out.extend(pipeline.link_document(doc, workers=workers))
        return out

    try:
        rows = evaluation.degradation_experiment(docs, fractions, cfg.seed, link_fn)
    finally:
        if cassette is not None and _cassette_mode(args) is CassetteMode.RECORD:
            cassette.save()
    evaluation.write_degradation(rows, args.output_dir)
    print("fraction precision")
    for fraction, precision in rows:
        print(f"{fraction:.2f} {precision:.4f}")
    return 0


def cmd_convert(args) -> int:
    docs = read_aida_tsv(args.input)
    dump_dataset(docs, args.output)
    mentions = sum(len(d.mentions) for d in docs)
    print(f"converted {len(docs)} documents, {mentions} mentions -> {args.output}")
    return 0


_COMMANDS = {
    "link": cmd_link,
    "eval": cmd_eval,
    "analyze": cmd_analyze,
    "degrade": cmd_degrade,
    "convert-aida": cmd_convert,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return _COMMANDS[args.command](args)
    except (ElinkError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
