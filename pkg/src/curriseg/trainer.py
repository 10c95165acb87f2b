"""Curriculum orchestration: three detection phases of increasing
difficulty, then a segmentation stage on the pooled cropped data.

Dataset difficulty is controlled by how much background each item keeps:

  D1  ground-truth crops   (foreground-dense, easiest)
  D2  crops chosen by the detection cache's own predictions
  D3  raw full images      (foreground-sparse, hardest)

Weights are inherited along the chain: phase II starts from phase I's
final weights, phase III from phase II's. One detection cache is created
at phase-I start and folded forward through every optimizer step of all
three phases; the segmentation stage warm-starts from that cache and
maintains its own cache, leaving the detection cache untouched.

Each stage is deterministic in (data, config): item order per epoch is
drawn from a stream derived from the stage's optimizer seed and the
stage ordinal.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .backbone import BackboneSpec, OptimizerConfig, init_params, train_step
from .ema import CacheModel, cache_forward, cache_init, cache_update
from .errors import CorruptManifest, EmptyDataset, NonFiniteLoss, ValueOutOfRange
from .evaluation import dsc
from .geometry import bbox_from_mask, crop_like, make_crop_record, threshold
from .losses import LossConfig
from .predictor import PredictConfig, predict
from .rng import Rng, derive_seed
from .storage import load_checkpoint, load_phase, save_checkpoint, save_phase
from .types import (
    BBox,
    DatasetItem,
    DatasetPhase,
    Image,
    LossBreakdown,
    Mask,
    ParamVector,
    mean_breakdown,
)

DETECTION_PHASES = ("1", "2", "3")
_STAGE_LABELS = {"1": "I", "2": "II", "3": "III", "seg": "seg"}
_STAGE_ORDINAL = {"1": 1, "2": 2, "3": 3, "seg": 4}

D2_FALLBACKS = ("whole_image",)


@dataclass(frozen=True)
class PhaseConfig:
    """Schedules and knobs for the whole curriculum run."""

    phase1: OptimizerConfig = OptimizerConfig()
    phase2: OptimizerConfig = OptimizerConfig()
    phase3: OptimizerConfig = OptimizerConfig()
    segmentation: OptimizerConfig = OptimizerConfig()
    alpha: float = 0.99
    switch_mode: str = "momentum"
    crop_margin: int = 4
    d2_fallback: str = "whole_image"
    seed: int = 0

    def __post_init__(self):
        if self.d2_fallback not in D2_FALLBACKS:
            raise ValueOutOfRange(f"unknown d2_fallback {self.d2_fallback!r}")
        if self.crop_margin < 0:
            raise ValueOutOfRange(f"crop_margin must be >= 0, got {self.crop_margin}")
        # alpha and switch_mode get their real validation from CacheModel


@dataclass(frozen=True)
class EpochRecord:
    phase: str  # "I", "II", "III", or "seg"
    epoch: int
    loss: LossBreakdown
    val_dsc: float | None

    def as_dict(self) -> dict:
        lb = self.loss
        return {
            "phase": self.phase,
            "epoch": self.epoch,
            "l_iou": lb.l_iou,
            "l_bce": lb.l_bce,
            "l_s": lb.l_s,
            "l_total": lb.l_total,
            "val_dsc": self.val_dsc,
        }


def _record_from_dict(d: dict) -> EpochRecord:
    try:
        lb = LossBreakdown(d["l_iou"], d["l_bce"], d["l_s"], d["l_total"])
        return EpochRecord(d["phase"], int(d["epoch"]), lb, d.get("val_dsc"))
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptManifest(f"bad history entry {d!r}: {exc}") from None


def history_to_json(history) -> dict:
    return {"version": 1, "entries": [r.as_dict() for r in history]}


def history_from_json(doc: dict) -> list[EpochRecord]:
    if not isinstance(doc, dict) or not isinstance(doc.get("entries"), list):
        raise CorruptManifest("history document must hold an 'entries' list")
    if doc.get("version") != 1:
        raise CorruptManifest(f"unsupported history version {doc.get('version')!r}")
    return [_record_from_dict(e) for e in doc["entries"]]


@dataclass(frozen=True, eq=False)
class RunState:
    """Everything a finished run produced."""

    spec: BackboneSpec
    theta_1: ParamVector
    theta_2: ParamVector
    theta_3: ParamVector
    detection_cache: CacheModel
    theta_seg: ParamVector
    segmentation_cache: CacheModel
    history: tuple[EpochRecord, ...]
    inits: dict[str, ParamVector] = field(default_factory=dict)
    stats: dict[str, int] = field(default_factory=dict)


# ------------------------------------------------------- dataset building


def build_d1(raw: DatasetPhase, margin: int, align: int) -> tuple[DatasetPhase, int]:
    """Crop every item around its ground-truth mask.

    Items with empty masks have no box to crop and are skipped; the count
    of skipped items is returned alongside the phase.
    """
    items = []
    skipped = 0
    for it in raw.items:
        box = bbox_from_mask(it.mask)
        if box is None:
            skipped += 1
            continue
        rec = make_crop_record(it.image.shape, box, margin, align)
        items.append(
            DatasetItem(
                Image(crop_like(it.image.pixels, rec)),
                Mask(crop_like(it.mask.labels, rec)),
                rec,
                it.item_id,
            )
        )
    if not items:
        raise EmptyDataset("every mask in the raw dataset is empty; cannot build ground-truth crops")
    return DatasetPhase("D1", tuple(items)), skipped


def build_d2(
    raw: DatasetPhase,
    detection_cache: CacheModel,
    spec: BackboneSpec,
    margin: int,
    align: int,
    threshold_value: float = 0.5,
) -> tuple[DatasetPhase, int, int]:
    """Crop every item around the detection cache's own prediction.

    Items whose thresholded prediction is empty fall back to the whole
    image (counted, never fatal); items with empty ground-truth masks are
    skipped as in build_d1. Returns (phase, fallback count, skip count).
    The result is a frozen snapshot — it is not regenerated during training.
    """
    items = []
    fallbacks = 0
    skipped = 0
    for it in raw.items:
        if it.mask.is_empty():
            skipped += 1
            continue
        p = cache_forward(spec, detection_cache, it.image)
        box = bbox_from_mask(threshold(p, threshold_value))
        if box is None:
            fallbacks += 1
            h, w = it.image.shape
            box = BBox(0, h - 1, 0, w - 1)
        rec = make_crop_record(it.image.shape, box, margin, align)
        items.append(
            DatasetItem(
                Image(crop_like(it.image.pixels, rec)),
                Mask(crop_like(it.mask.labels, rec)),
                rec,
                it.item_id,
            )
        )
    return DatasetPhase("D2", tuple(items)), fallbacks, skipped


# ------------------------------------------------------------ evaluation


def detection_dsc(
    spec: BackboneSpec, cache: CacheModel, items, threshold_value: float = 0.5
) -> float:
    """Mean Dice of the cache's thresholded output over full images."""
    items = list(items)
    if not items:
        raise EmptyDataset("detection_dsc needs at least one item")
    total = 0.0
    for it in items:
        pred = threshold(cache_forward(spec, cache, it.image), threshold_value)
        total += dsc(pred, it.mask)
    return total / len(items)


def end_to_end_dsc(
    spec: BackboneSpec,
    det: CacheModel,
    seg: CacheModel,
    items,
    cfg: PredictConfig = PredictConfig(),
) -> float:
    """Mean Dice of the full detect-crop-segment pipeline."""
    items = list(items)
    if not items:
        raise EmptyDataset("end_to_end_dsc needs at least one item")
    total = 0.0
    for it in items:
        mask, _, _ = predict(it.image, det, seg, spec, cfg)
        total += dsc(mask, it.mask)
    return total / len(items)


# ---------------------------------------------------------- stage runner


def _run_stage(
    spec: BackboneSpec,
    theta: ParamVector,
    cache: CacheModel,
    items,
    opt: OptimizerConfig,
    loss_cfg: LossConfig,
    stage: str,
    eval_fn=None,
) -> tuple[ParamVector, CacheModel, list[EpochRecord]]:
    if opt.epochs and not items:
        raise EmptyDataset(f"stage {stage} has no training items")
    pairs = [(it.image, it.mask) for it in items]
    state = None
    shuffle_base = derive_seed(opt.seed, _STAGE_ORDINAL[stage])
    label = _STAGE_LABELS[stage]

    records = []
    for epoch in range(opt.epochs):
        order = list(range(len(pairs)))
        Rng(derive_seed(shuffle_base, epoch)).shuffle(order)
        epoch_losses = []
        for at in range(0, len(order), opt.batch_size):
            batch = [pairs[j] for j in order[at : at + opt.batch_size]]
            try:
                theta, state, lb = train_step(spec, theta, batch, opt, loss_cfg, state)
            except NonFiniteLoss as exc:
                raise NonFiniteLoss(f"stage {label}, epoch {epoch}: {exc}") from None
            cache = cache_update(cache, theta)
            epoch_losses.append(lb)
        val = eval_fn(cache) if eval_fn is not None else None
        records.append(EpochRecord(label, epoch, mean_breakdown(epoch_losses), val))
    return theta, cache, records


def _det_eval(spec, val: DatasetPhase | None):
    if val is None or len(val.items) == 0:
        return None
    return lambda cache: detection_dsc(spec, cache, val.items)


def run_phase1(
    raw: DatasetPhase,
    cfg: PhaseConfig,
    spec: BackboneSpec = BackboneSpec(),
    loss_cfg: LossConfig = LossConfig(),
    val: DatasetPhase | None = None,
) -> tuple[ParamVector, CacheModel, list[EpochRecord]]:
    """Phase I: fresh weights, trained on ground-truth crops."""
    d1, _ = build_d1(raw, cfg.crop_margin, spec.input_align)
    theta = init_params(spec, derive_seed(cfg.seed, 1))
    cache = cache_init(theta, cfg.alpha, cfg.switch_mode)
    return _run_stage(spec, theta, cache, d1.items, cfg.phase1, loss_cfg, "1", _det_eval(spec, val))


def run_phase2(
    d2: DatasetPhase,
    theta_1: ParamVector,
    detection_cache: CacheModel,
    cfg: PhaseConfig,
    spec: BackboneSpec = BackboneSpec(),
    loss_cfg: LossConfig = LossConfig(),
    val: DatasetPhase | None = None,
) -> tuple[ParamVector, CacheModel, list[EpochRecord]]:
    """Phase II: weights inherited from phase I, trained on cache crops."""
    if len(d2.items) == 0:
        raise EmptyDataset("phase II needs a non-empty cache-cropped dataset")
    return _run_stage(
        spec, theta_1, detection_cache, d2.items, cfg.phase2, loss_cfg, "2", _det_eval(spec, val)
    )


def run_phase3(
    raw: DatasetPhase,
    theta_2: ParamVector,
    detection_cache: CacheModel,
    cfg: PhaseConfig,
    spec: BackboneSpec = BackboneSpec(),
    loss_cfg: LossConfig = LossConfig(),
    val: DatasetPhase | None = None,
) -> tuple[ParamVector, CacheModel, list[EpochRecord]]:
    """Phase III: weights inherited from phase II, trained on raw images
    (empty-mask items included)."""
    return _run_stage(
        spec, theta_2, detection_cache, raw.items, cfg.phase3, loss_cfg, "3", _det_eval(spec, val)
    )


def run_segmentation_stage(
    d1: DatasetPhase,
    d2: DatasetPhase,
    detection_cache: CacheModel,
    cfg: PhaseConfig,
    spec: BackboneSpec = BackboneSpec(),
    loss_cfg: LossConfig = LossConfig(),
    val: DatasetPhase | None = None,
) -> tuple[ParamVector, CacheModel, list[EpochRecord]]:
    """Segmentation stage on D1 + D2 pooled, warm-started from the
    detection cache; the detection cache itself is never touched."""
    union = list(d1.items) + list(d2.items)
    theta = detection_cache.params
    seg_cache = cache_init(theta, cfg.alpha, cfg.switch_mode)
    eval_fn = None
    if val is not None and len(val.items) > 0:
        pcfg = PredictConfig(margin=cfg.crop_margin)

        def eval_fn(cache):
            return end_to_end_dsc(spec, detection_cache, cache, val.items, pcfg)

    return _run_stage(spec, theta, seg_cache, union, cfg.segmentation, loss_cfg, "seg", eval_fn)


# ------------------------------------------------------------- full run


def load_cache(path) -> CacheModel:
    """Rebuild a cache from a checkpoint written by run_full."""
    params, meta = load_checkpoint(path)
    try:
        return CacheModel(params, float(meta["alpha"]), meta["mode"], int(meta["updates"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptManifest(f"{path}: sidecar is not a cache checkpoint: {exc}") from None


class _RunDir:
    """Stage-granular persistence and resume bookkeeping for run_full."""

    def __init__(self, out: Path | None, runnable: list[str], resume: bool, seed: int):
        self.out = out
        self.runnable = runnable
        self.seed = seed
        self.completed: list[str] = []
        self.prior: list[EpochRecord] = []
        if out is None:
            return
        out.mkdir(parents=True, exist_ok=True)
        status = out / "status.json"
        if resume and status.exists():
            done = json.loads(status.read_text()).get("completed", [])
            # only a prefix of this run's stage sequence is trustworthy
            for name in runnable:
                if name in done:
                    self.completed.append(name)
                else:
                    break
            if (out / "history.json").exists():
                self.prior = history_from_json(json.loads((out / "history.json").read_text()))
        else:
            status.write_text(json.dumps({"completed": []}, indent=2) + "\n")

    def resumable(self, name: str) -> bool:
        return name in self.completed

    def load_model(self, name: str) -> ParamVector:
        theta, _ = load_checkpoint(self.out / f"{name}.ckpt")
        return theta

    def load_active_cache(self, cache_file: str) -> CacheModel:
        return load_cache(self.out / f"{cache_file}.ckpt")

    def mark_done(self, name: str, theta: ParamVector, cache: CacheModel, cache_file: str, history):
        if self.out is None:
            return
        save_checkpoint(self.out / f"{name}.ckpt", theta, {"stage": name, "seed": self.seed})
        save_checkpoint(
            self.out / f"{cache_file}.ckpt",
            cache.params,
            {"stage": name, "alpha": cache.alpha, "mode": cache.mode, "updates": cache.updates},
        )
        self.completed = self.runnable[: self.runnable.index(name) + 1]
        (self.out / "status.json").write_text(
            json.dumps({"completed": self.completed}, indent=2) + "\n"
        )
        (self.out / "history.json").write_text(
            json.dumps(history_to_json(history), indent=2) + "\n"
        )


def run_full(
    raw_train: DatasetPhase,
    raw_val: DatasetPhase,
    cfg: PhaseConfig,
    spec: BackboneSpec = BackboneSpec(),
    loss_cfg: LossConfig = LossConfig(),
    out_dir=None,
    phases=None,
    resume: bool = False,
) -> RunState:
    """Run the whole curriculum: phases I, II, III, then segmentation.

    `phases` limits which detection phases actually train (the
    segmentation stage always runs); a skipped phase passes its input
    weights straight through, preserving the inheritance chain. With
    `out_dir` set, stage checkpoints, the cache-cropped dataset, and the
    history log are persisted after every stage; `resume=True` picks a
    previous run back up at stage granularity (same config expected).
    """
    active = set(DETECTION_PHASES) if phases is None else {str(p) for p in phases}
    unknown = active - set(DETECTION_PHASES)
    if unknown:
        raise ValueOutOfRange(f"unknown phases {sorted(unknown)}; valid: {DETECTION_PHASES}")

    runnable = [f"phase{s}" for s in DETECTION_PHASES if s in active] + ["segmentation"]
    rd = _RunDir(Path(out_dir) if out_dir is not None else None, runnable, resume, cfg.seed)
    history: list[EpochRecord] = []

    theta0 = init_params(spec, derive_seed(cfg.seed, 1))
    inits: dict[str, ParamVector] = {"phase1": theta0}
    stats: dict[str, int] = {}

    d1, d1_skipped = build_d1(raw_train, cfg.crop_margin, spec.input_align)
    stats["d1_skipped"] = d1_skipped
    det_eval = _det_eval(spec, raw_val)

    cache = cache_init(theta0, cfg.alpha, cfg.switch_mode)
    cache_stale = False  # True when `cache` must be reloaded from disk

    def current_cache() -> CacheModel:
        nonlocal cache, cache_stale
        if cache_stale:
            cache = rd.load_active_cache("detection_cache")
            cache_stale = False
        return cache

    def detection_stage(stage: str, theta: ParamVector, items) -> ParamVector:
        nonlocal cache, cache_stale
        if stage not in active:
            return theta
        name = f"phase{stage}"
        if rd.resumable(name):
            history.extend(r for r in rd.prior if r.phase == _STAGE_LABELS[stage])
            cache_stale = True
            return rd.load_model(name)
        opt = {"1": cfg.phase1, "2": cfg.phase2, "3": cfg.phase3}[stage]
        theta, cache, recs = _run_stage(
            spec, theta, current_cache(), items, opt, loss_cfg, stage, det_eval
        )
        history.extend(recs)
        rd.mark_done(name, theta, cache, "detection_cache", history)
        return theta

    d2: DatasetPhase | None = None

    def materialize_d2() -> DatasetPhase:
        if rd.out is not None and resume and (rd.out / "d2" / "manifest.json").exists():
            phase, meta = load_phase(rd.out / "d2")
            for key in ("fallbacks", "skipped"):
                if key in meta:
                    stats[f"d2_{key}"] = int(meta[key])
            return phase
        phase, fb, sk = build_d2(raw_train, current_cache(), spec, cfg.crop_margin, spec.input_align)
        stats["d2_fallbacks"] = fb
        stats["d2_skipped"] = sk
        if rd.out is not None:
            save_phase(rd.out / "d2", phase, {"fallbacks": fb, "skipped": sk})
        return phase

    theta_1 = detection_stage("1", theta0, d1.items)
    inits["phase2"] = theta_1

    if "2" in active:
        d2 = materialize_d2()
        if len(d2.items) == 0:
            raise EmptyDataset("cache-cropped dataset is empty; cannot run phase II")
        theta_2 = detection_stage("2", theta_1, d2.items)
    else:
        theta_2 = theta_1
    inits["phase3"] = theta_2

    theta_3 = detection_stage("3", theta_2, raw_train.items)

    if d2 is None:
        d2 = materialize_d2()

    det_final = current_cache()
    inits["segmentation"] = det_final.params

    if rd.resumable("segmentation"):
        theta_seg = rd.load_model("segmentation")
        seg_cache = rd.load_active_cache("segmentation_cache")
        history.extend(r for r in rd.prior if r.phase == "seg")
    else:
        theta_seg, seg_cache, recs = run_segmentation_stage(
            d1, d2, det_final, cfg, spec, loss_cfg, raw_val
        )
        history.extend(recs)
        rd.mark_done("segmentation", theta_seg, seg_cache, "segmentation_cache", history)

    return RunState(
        spec=spec,
        theta_1=theta_1,
        theta_2=theta_2,
        theta_3=theta_3,
        detection_cache=det_final,
        theta_seg=theta_seg,
        segmentation_cache=seg_cache,
        history=tuple(history),
        inits=inits,
        stats=stats,
    )
