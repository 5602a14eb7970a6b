"""
Command line for the captioning pipeline.

Usage: python -m cli.main <subcommand> [--config run.toml] [--seed 7] ...

Exit codes: 0 success, 2 configuration error, 3 stage failure,
4 external-service failure.
"""
import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

# Add parent directory to path to import core modules
sys.path.append(str(Path(__file__).parent.parent))

from core.action_capture.cropping import capture_segment
from core.action_capture.detector import BlobDetector, DetectorPort, PrecomputedDetector
from core.captioner.generator import caption_records
from core.captioner.prompts import PromptTemplates
from core.config import ExitCode, LoggingConfig, configure_logging
from core.fedsim.partition import dirichlet_partition
from core.fedsim.rounds import run_rounds, write_timings_csv
from core.frame_filter.filter import filter_stream, retained_fraction
from core.frames.jsonl import read_jsonl, write_jsonl
from core.frames.stream import load_stream
from core.labeler.trainer import TrainingHistory, evaluate_accuracy, load_model, predict_batch, save_model, train
from core.llm_client.client import build_client
from core.lora.adapter import load_adapter, load_matrix, merge, param_budget, save_matrix
from core.models.main import CaptionRecord, PseudoLabelRecord, RetainedSegments
from core.models.settings import PipelineConfig
from core.pipeline.crops import load_crop_set, save_captures
from core.pipeline.evaluation import lexical_f1
from core.pipeline.runner import run_all
from core.pipeline.synthetic import gen_synthetic
from core.utils.error_handling import ConfigurationError, PipelineException, handle_pipeline_error

logger = logging.getLogger("cli")


def _write_json(path: Path, payload: Any) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def _print_json(payload: Any) -> None:
    print(json.dumps(payload, indent=2))


def _llm_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    overrides: Dict[str, Any] = {}
    if getattr(args, "replay", None):
        overrides.update({"llm.mode": "replay", "llm.fixtures_dir": str(args.replay)})
    if getattr(args, "record", None):
        overrides["llm.record_dir"] = str(args.record)
    if getattr(args, "live", False):
        overrides["llm.mode"] = "http"
    return overrides


# Subcommands

def cmd_gen_synth(args: argparse.Namespace, config: PipelineConfig) -> int:
    index = gen_synthetic(config.synthetic, args.out)
    _print_json({"out": str(args.out), "clips": len(index.clips), "taxonomy": index.taxonomy})
    return ExitCode.SUCCESS


def cmd_filter(args: argparse.Namespace, config: PipelineConfig) -> int:
    stream = load_stream(args.input)
    result = filter_stream(stream, config.filter, debug=args.debug)
    payload = {"source_id": stream.source_id, **result.model_dump(mode="json")}
    if not args.debug:
        payload.pop("diagnostics")
    _write_json(args.out, payload)
    logger.info(f"🎞️ {len(result.segments)} segment(s), {retained_fraction(result):.1%} of frames retained")
    return ExitCode.SUCCESS


def cmd_capture(args: argparse.Namespace, config: PipelineConfig) -> int:
    stream = load_stream(args.input)
    try:
        retained = RetainedSegments.model_validate(json.loads(Path(args.segments).read_text(encoding="utf-8")))
    except (OSError, ValueError) as e:
        raise ConfigurationError(f"Cannot read segments file {args.segments}: {e}", field="segments") from e

    capture = config.capture
    precomputed = PrecomputedDetector.from_file(args.boxes) if args.boxes else None
    results = []
    for segment in retained.segments:
        detector: DetectorPort = precomputed or BlobDetector.for_stream(
            stream.segment(segment.start, segment.end), capture.blob_threshold, capture.blob_min_area,
            capture.background_frames)
        results.append(capture_segment(stream, segment, detector, capture, workers=args.workers))

    index = save_captures(args.out, results, label=args.label)
    _print_json({"segments": len(results), "crops": sum(len(r.crops) for r in results),
                 "containers": len(index.entries)})
    return ExitCode.SUCCESS


def _num_classes(args: argparse.Namespace, config: PipelineConfig) -> int:
    return args.num_classes or len(config.taxonomy)


def cmd_train_labeler(args: argparse.Namespace, config: PipelineConfig) -> int:
    labeled = load_crop_set(args.labeled, labeled_only=True)
    unlabeled = load_crop_set(args.unlabeled).crops if args.unlabeled else None
    history = TrainingHistory()
    num_classes = _num_classes(args, config)

    model = train(labeled.crops, labeled.labels, unlabeled, config.labeler, config.seed, num_classes, history)
    save_model(args.out, model, config.seed, config.labeler)
    _print_json({
        "model": str(args.out),
        "epochs": len(history.epoch_losses),
        "final_loss": history.epoch_losses[-1] if history.epoch_losses else None,
        "train_accuracy": evaluate_accuracy(model, labeled.crops, labeled.labels),
    })
    return ExitCode.SUCCESS


def cmd_fed_sim(args: argparse.Namespace, config: PipelineConfig) -> int:
    data = load_crop_set(args.data)
    fed = config.federated
    num_classes = _num_classes(args, config)

    partitions = dirichlet_partition(data.labels, fed.num_clients, fed.alpha, config.seed)
    result = run_rounds(data.crops, data.labels, partitions, fed.rounds, fed.local_epochs, config.labeler,
                        config.seed, num_classes, federated=fed)
    save_model(args.out, result.model, config.seed, config.labeler)
    if args.timing:
        write_timings_csv(args.timing, result.timings)

    labeled = data.labels >= 0
    _print_json({
        "model": str(args.out),
        "clients": [p.size for p in partitions],
        "rounds": fed.rounds,
        "train_accuracy": evaluate_accuracy(result.model, data.crops[labeled], data.labels[labeled]),
    })
    return ExitCode.SUCCESS


def cmd_pseudo_label(args: argparse.Namespace, config: PipelineConfig) -> int:
    model, _ = load_model(args.model)
    data = load_crop_set(args.input, source_id=args.source_id)
    sources = sorted({entry.source_id for entry in data.entries})
    if len(sources) > 1:
        logger.warning(f"⚠️ {len(sources)} sources in {args.input}; frame indices repeat across sources, "
                       f"pass --source-id to label one")
    records = predict_batch(model, data.crops, args.topk or config.labeler.top_k,
                            frame_indices=data.frame_indices.tolist())
    count = write_jsonl(args.out, records)
    logger.info(f"🏷️ Wrote {count} pseudo-label record(s) to {args.out}")
    return ExitCode.SUCCESS


def cmd_caption(args: argparse.Namespace, config: PipelineConfig) -> int:
    records = read_jsonl(args.labels, PseudoLabelRecord)
    source_id = args.source_id or Path(args.labels).stem
    templates = PromptTemplates.from_files(config.captioner.system_template_file,
                                           config.captioner.runtime_template_file)
    client = build_client(config.llm)

    record = caption_records(source_id, records, config.taxonomy, config.captioner, client, templates=templates)
    captions: List[CaptionRecord] = [record] if record is not None else []
    write_jsonl(args.out, captions)
    if record is not None:
        print(record.caption)
    return ExitCode.SUCCESS


def cmd_lora_merge(args: argparse.Namespace, config: PipelineConfig) -> int:
    base, _ = load_matrix(args.base)
    adapter = load_adapter(args.adapter)
    merged = merge(base, adapter)
    save_matrix(args.out, merged, source=str(args.base), adapter_rank=adapter.rank, alpha=adapter.alpha)
    logger.info(f"🧩 Merged rank-{adapter.rank} adapter into {base.shape[0]}x{base.shape[1]} matrix")
    return ExitCode.SUCCESS


def cmd_lora_budget(args: argparse.Namespace, config: PipelineConfig) -> int:
    budget = param_budget(args.d, args.r)
    _print_json(budget._asdict())
    return ExitCode.SUCCESS


def cmd_run_all(args: argparse.Namespace, config: PipelineConfig) -> int:
    report = run_all(config, args.dataset, args.out)
    _print_json({"out": str(args.out), "captions": len(report.captions),
                 "stages": {s.name: ("skipped" if s.skipped else s.counts) for s in report.stages}})
    return ExitCode.SUCCESS


def cmd_eval_lexical(args: argparse.Namespace, config: PipelineConfig) -> int:
    if args.captions:
        references = json.loads(Path(args.references).read_text(encoding="utf-8"))
        scores = {c.source_id: lexical_f1(c.caption, references.get(c.source_id, ""))
                  for c in read_jsonl(args.captions, CaptionRecord)}
        mean = sum(scores.values()) / len(scores) if scores else 0.0
        _print_json({"per_source": scores, "mean_f1": mean})
    else:
        _print_json({"f1": lexical_f1(args.candidate, args.reference)})
    return ExitCode.SUCCESS


# Parser

def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, default=None, help="TOML or JSON config file")
    parser.add_argument("--seed", type=int, default=None, help="Global seed (overrides config)")
    parser.add_argument("--log-level", default=LoggingConfig.DEFAULT_LOG_LEVEL, help="Logging level")


def _add_llm_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_mutually_exclusive_group()
    group.add_argument("--replay", type=Path, default=None, help="Serve LLM answers from recorded fixtures")
    group.add_argument("--live", action="store_true", help="Call the configured HTTP endpoint")
    parser.add_argument("--record", type=Path, default=None, help="Record LLM exchanges into this directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lowres-caption",
                                     description="Low-resolution behavior captioning pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synth", help="Generate the synthetic dataset")
    _add_common(p)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--frame-size", type=int, default=None)
    p.add_argument("--clips-per-class", type=int, default=None)
    p.add_argument("--frames-per-clip", type=int, default=None)
    p.set_defaults(func=cmd_gen_synth, overrides=lambda a: {
        "synthetic.seed": a.seed, "synthetic.frame_size": a.frame_size,
        "synthetic.clips_per_class": a.clips_per_class, "synthetic.frames_per_clip": a.frames_per_clip})

    p = sub.add_parser("filter", help="Select behavior-relevant segments of a frame container")
    _add_common(p)
    p.add_argument("--in", dest="input", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--window", type=int, default=None)
    p.add_argument("--sigma", type=float, default=None)
    p.add_argument("--min-significant", type=int, default=None)
    p.add_argument("--activity-floor", type=float, default=None)
    p.add_argument("--invert-rule", action="store_const", const=True, default=None)
    p.add_argument("--debug", action="store_true", help="Keep per-window diagnostics")
    p.set_defaults(func=cmd_filter, overrides=lambda a: {
        "filter.window_size": a.window, "filter.sigma": a.sigma, "filter.min_significant": a.min_significant,
        "filter.activity_floor": a.activity_floor, "filter.invert_rule": a.invert_rule})

    p = sub.add_parser("capture", help="Crop the person track of retained segments")
    _add_common(p)
    p.add_argument("--in", dest="input", type=Path, required=True)
    p.add_argument("--segments", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--boxes", type=Path, default=None, help="boxes.jsonl from an external detector")
    p.add_argument("--epsilon", type=float, default=None, help="Coherence bound in pixels")
    p.add_argument("--label", type=int, default=None, help="Class index of the clip, for training data")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_capture, overrides=lambda a: {"capture.coherence.epsilon": a.epsilon})

    p = sub.add_parser("train-labeler", help="Train the contrastive pseudo-labeler")
    _add_common(p)
    p.add_argument("--labeled", type=Path, required=True)
    p.add_argument("--unlabeled", type=Path, default=None)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--num-classes", type=int, default=None, help="Defaults to the taxonomy size")
    p.set_defaults(func=cmd_train_labeler, overrides=lambda a: {
        "labeler.epochs": a.epochs, "labeler.lambda": a.lam, "labeler.tau": a.tau})

    p = sub.add_parser("fed-sim", help="Federated training over simulated clients")
    _add_common(p)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--clients", type=int, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--rounds", type=int, default=None)
    p.add_argument("--local-epochs", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--timing", type=Path, default=None, help="CSV of per-round simulated timings")
    p.add_argument("--num-classes", type=int, default=None)
    p.set_defaults(func=cmd_fed_sim, overrides=lambda a: {
        "federated.num_clients": a.clients, "federated.alpha": a.alpha, "federated.rounds": a.rounds,
        "federated.local_epochs": a.local_epochs, "federated.max_workers": a.workers})

    p = sub.add_parser("pseudo-label", help="Top-k pseudo-labels for every crop")
    _add_common(p)
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--in", dest="input", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--topk", type=int, default=None)
    p.add_argument("--source-id", default=None, help="Only label crops of this source")
    p.set_defaults(func=cmd_pseudo_label, overrides=lambda a: {})

    p = sub.add_parser("caption", help="Caption one pseudo-label sequence")
    _add_common(p)
    _add_llm_flags(p)
    p.add_argument("--labels", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--source-id", default=None)
    p.add_argument("--fps", type=float, default=None)
    p.add_argument("--rules", type=Path, default=None, help="Consistency rules JSON")
    p.set_defaults(func=cmd_caption, overrides=lambda a: {
        **_llm_overrides(a), "captioner.fps": a.fps,
        "captioner.rules_file": str(a.rules) if a.rules else None})

    p = sub.add_parser("lora-merge", help="Merge an adapter into a base matrix")
    _add_common(p)
    p.add_argument("--base", type=Path, required=True)
    p.add_argument("--adapter", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_lora_merge, overrides=lambda a: {})

    p = sub.add_parser("lora-budget", help="Adapter parameter count against a full update")
    _add_common(p)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--r", type=int, required=True)
    p.set_defaults(func=cmd_lora_budget, overrides=lambda a: {})

    p = sub.add_parser("run-all", help="Run the full pipeline on a dataset")
    _add_common(p)
    _add_llm_flags(p)
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--federated", action="store_const", const=True, default=None)
    p.set_defaults(func=cmd_run_all, overrides=lambda a: {**_llm_overrides(a), "use_federated": a.federated})

    p = sub.add_parser("eval-lexical", help="Token F1 between captions and references")
    _add_common(p)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--candidate", default=None)
    group.add_argument("--captions", type=Path, default=None, help="captions.jsonl")
    p.add_argument("--reference", default="", help="Reference text for --candidate")
    p.add_argument("--references", type=Path, default=None, help="JSON {source_id: reference} for --captions")
    p.set_defaults(func=cmd_eval_lexical, overrides=lambda a: {})

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_level)

    command: Callable[[argparse.Namespace, PipelineConfig], int] = args.func
    try:
        if args.command == "eval-lexical" and args.captions and not args.references:
            raise ConfigurationError("--captions requires --references", field="references")
        overrides = {"seed": args.seed, **args.overrides(args)}
        config = PipelineConfig.from_file(args.config, overrides)
        return int(command(args, config))
    except Exception as e:
        error: PipelineException = handle_pipeline_error(e, stage_name=args.command)
        logger.error(f"❌ {args.command}: {error.message}")
        print(json.dumps({"error": error.to_response().model_dump(mode="json")}), file=sys.stderr)
        return int(error.exit_code)


if __name__ == "__main__":
    sys.exit(main())
