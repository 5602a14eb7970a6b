"""
End-to-end pipeline: filter -> capture -> train (or fed-sim) -> pseudo-label -> caption.

Each stage runs under `stage(...)`, so any failure surfaces as StageError
carrying the stage name. Wall-clock durations only go to report.timings_ms.
"""
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from core.action_capture.cropping import CaptureResult, capture_segment
from core.action_capture.detector import BlobDetector
from core.captioner.generator import caption_records
from core.captioner.prompts import PromptTemplates
from core.fedsim.partition import dirichlet_partition
from core.fedsim.rounds import run_rounds, write_timings_csv
from core.frame_filter.filter import filter_stream
from core.frames.jsonl import write_jsonl
from core.frames.stream import FrameStream, load_stream
from core.labeler.network import EmbeddingNetwork
from core.labeler.trainer import TrainingHistory, predict_batch, prepare_training_set, save_model, train
from core.llm_client.client import ChatClient, build_client
from core.models.main import CaptionRecord, ClipEntry, PipelineReport, PseudoLabelRecord, RetainedSegments, StageReport
from core.models.settings import PipelineConfig
from core.pipeline.synthetic import load_index
from core.utils.error_handling import stage

logger = logging.getLogger(__name__)

REPORT_FILE = "report.json"
CAPTIONS_FILE = "captions.jsonl"
MODEL_FILE = "model.bin"
TIMINGS_FILE = "timings.csv"


@dataclass
class ClipRun:
    entry: ClipEntry
    stream: FrameStream
    retained: Optional[RetainedSegments] = None
    captures: List[CaptureResult] = field(default_factory=list)
    records: List[PseudoLabelRecord] = field(default_factory=list)

    @property
    def crops(self) -> np.ndarray:
        arrays = [c.crops.as_array() for c in self.captures if len(c.crops)]
        return np.concatenate(arrays) if arrays else np.zeros((0, 0, 0))


@stage("load")
def _load(dataset_dir: Path) -> tuple:
    index = load_index(dataset_dir)
    clips = [ClipRun(entry, load_stream(Path(dataset_dir) / entry.clip)) for entry in index.clips]
    return index, clips


@stage("filter")
def _filter(clips: List[ClipRun], config: PipelineConfig) -> Dict[str, int]:
    for clip in clips:
        clip.retained = filter_stream(clip.stream, config.filter)
    return {
        "clips": len(clips),
        "clips_retained": sum(1 for c in clips if c.retained.segments),
        "segments": sum(len(c.retained.segments) for c in clips),
        "frames_retained": sum(c.retained.retained_frames for c in clips),
    }


@stage("capture")
def _capture(clips: List[ClipRun], config: PipelineConfig) -> Dict[str, int]:
    capture = config.capture
    for clip in clips:
        for segment in clip.retained.segments:
            part = clip.stream.segment(segment.start, segment.end)
            detector = BlobDetector.for_stream(part, capture.blob_threshold, capture.blob_min_area,
                                               capture.background_frames)
            clip.captures.append(capture_segment(clip.stream, segment, detector, capture))
    return {
        "subtracks": sum(len(c.track.subtracks) for clip in clips for c in clip.captures),
        "crops": sum(len(c.crops) for clip in clips for c in clip.captures),
    }


@stage("train")
def _train(clips: List[ClipRun], config: PipelineConfig, num_classes: int, out_dir: Path,
           timings: Dict[str, float]) -> tuple:
    labeled = [c for c in clips if c.entry.labeled and c.entry.label is not None and len(c.crops)]
    unlabeled = [c for c in clips if c not in labeled and len(c.crops)]
    labeled_x = np.concatenate([c.crops for c in labeled]) if labeled else np.zeros((0, 0, 0))
    labeled_y = np.concatenate([np.full(len(c.crops), c.entry.label) for c in labeled]) if labeled else []
    unlabeled_x = np.concatenate([c.crops for c in unlabeled]) if unlabeled else None

    history = TrainingHistory()
    counts = {"labeled_crops": len(labeled_y), "unlabeled_crops": 0 if unlabeled_x is None else len(unlabeled_x)}
    if config.use_federated:
        crops, labels = prepare_training_set(labeled_x, labeled_y, unlabeled_x, num_classes,
                                             require_all_classes=config.labeler.lam < 1.0)
        fed = config.federated
        partitions = dirichlet_partition(labels, fed.num_clients, fed.alpha, config.seed)
        result = run_rounds(crops, labels, partitions, fed.rounds, fed.local_epochs, config.labeler,
                            config.seed, num_classes, federated=fed)
        model = result.model
        write_timings_csv(out_dir / TIMINGS_FILE, result.timings)
        timings["fed_compute"] = float(sum(row.compute_ms for row in result.timings))
        counts.update({"clients": len(partitions), "rounds": fed.rounds})
    else:
        model = train(labeled_x, labeled_y, unlabeled_x, config.labeler, config.seed, num_classes, history)
        counts.update({"epochs": config.labeler.epochs,
                       "final_loss": round(history.epoch_losses[-1], 12) if history.epoch_losses else None})
    save_model(out_dir / MODEL_FILE, model, config.seed, config.labeler)
    return model, counts


@stage("pseudo-label")
def _pseudo_label(clips: List[ClipRun], model: EmbeddingNetwork, config: PipelineConfig) -> Dict[str, int]:
    for clip in clips:
        clip.records = [
            record
            for capture in clip.captures if len(capture.crops)
            for record in predict_batch(model, capture.crops.as_array(), config.labeler.top_k,
                                        frame_indices=capture.frame_indices)
        ]
    return {"records": sum(len(c.records) for c in clips)}


@stage("caption")
def _caption(clips: List[ClipRun], taxonomy: List[str], config: PipelineConfig, client: ChatClient,
             out_dir: Path) -> tuple:
    templates = PromptTemplates.from_files(config.captioner.system_template_file,
                                           config.captioner.runtime_template_file)
    rules = config.captioner.resolve_rules()
    captions: List[CaptionRecord] = []
    for clip in clips:
        if not clip.records:
            continue
        record = caption_records(clip.stream.source_id, clip.records, taxonomy, config.captioner, client,
                                 rules=rules, templates=templates)
        if record is not None:
            captions.append(record)
    write_jsonl(out_dir / CAPTIONS_FILE, captions)
    return captions, {"captions": len(captions)}


def run_all(config: PipelineConfig, dataset_dir: Path, out_dir: Path,
            client: Optional[ChatClient] = None) -> PipelineReport:
    """
    Run every stage on a dataset directory and write report.json under `out_dir`.

    The labeler is trained on the dataset's own taxonomy. Stages after an empty
    result are marked skipped instead of failing.

    Raises:
        StageError naming the failing stage
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    client = client or build_client(config.llm)
    timings: Dict[str, float] = {}
    stages: List[StageReport] = []
    captions: List[CaptionRecord] = []

    def timed(name, func, *args):
        started = time.perf_counter()
        result = func(*args)
        timings[name] = (time.perf_counter() - started) * 1000.0
        return result

    index, clips = timed("load", _load, Path(dataset_dir))
    taxonomy = list(index.taxonomy)
    logger.info(f"🚀 Pipeline start: {len(clips)} clips, {len(taxonomy)} actions, seed {config.seed}")

    stages.append(StageReport(name="filter", counts=timed("filter", _filter, clips, config)))
    retained = [c for c in clips if c.retained.segments]

    if not retained:
        note = "zero retained segments"
        for name in ("capture", "train", "pseudo-label", "caption"):
            stages.append(StageReport(name=name, skipped=True, note=note))
    else:
        stages.append(StageReport(name="capture", counts=timed("capture", _capture, retained, config)))
        with_crops = [c for c in retained if len(c.crops)]
        if not with_crops:
            for name in ("train", "pseudo-label", "caption"):
                stages.append(StageReport(name=name, skipped=True, note="no coherent person track"))
        else:
            model, train_counts = timed("train", _train, with_crops, config, len(taxonomy), out_dir, timings)
            stages.append(StageReport(name="train", counts=train_counts))
            stages.append(StageReport(name="pseudo-label",
                                      counts=timed("pseudo-label", _pseudo_label, with_crops, model, config)))
            captions, caption_counts = timed("caption", _caption, with_crops, taxonomy, config, client, out_dir)
            stages.append(StageReport(name="caption", counts=caption_counts))

    report = PipelineReport(seed=config.seed, dataset=Path(dataset_dir).name, stages=stages,
                            captions=captions, timings_ms=timings)
    (out_dir / REPORT_FILE).write_text(json.dumps(report.model_dump(mode="json"), indent=2) + "\n",
                                       encoding="utf-8")
    logger.info(f"✅ Pipeline finished: {len(captions)} caption(s), report at {out_dir / REPORT_FILE}")
    return report
